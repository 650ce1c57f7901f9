//! Figure and table data: tidy CSVs with fixed schemas, a text summary,
//! an SVG heatmap and an index (`report.json`) of what was emitted.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_json, write_json, Pipeline, PoetSignals, PressureRow, Stage};
use crate::corpus::SliceInfo;
use crate::metrics::{PanelAnalysis, WordTrajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Text,
    Number,
    /// A number, or empty when undefined.
    OptionalNumber,
    Integer,
    Boolean,
}

#[derive(Debug, Clone, Copy)]
pub struct CsvSchema {
    pub file: &'static str,
    pub columns: &'static [(&'static str, ColumnType)],
}

use ColumnType::*;

pub const REPORT_SCHEMAS: &[CsvSchema] = &[
    CsvSchema {
        file: "fig1_drift_turnover.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("field", Text),
            ("transition", Text),
            ("drift", OptionalNumber),
            ("turnover", OptionalNumber),
        ],
    },
    CsvSchema {
        file: "fig2_signal_profiles.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("field", Text),
            ("century_signal", OptionalNumber),
            ("drift_component", OptionalNumber),
            ("turnover_component", OptionalNumber),
            ("volatility_component", OptionalNumber),
        ],
    },
    CsvSchema {
        file: "fig3_trajectories_raw.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("century", Text),
            ("in_vocabulary", Boolean),
            ("centrality", OptionalNumber),
            ("bridge", OptionalNumber),
            ("community", Text),
        ],
    },
    CsvSchema {
        file: "fig3_trajectories_centered.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("century", Text),
            ("centrality", OptionalNumber),
            ("bridge", OptionalNumber),
        ],
    },
    CsvSchema {
        file: "fig3_transition_dynamics.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("transition", Text),
            ("drift", OptionalNumber),
            ("turnover", OptionalNumber),
            ("reallocation", OptionalNumber),
            ("volatility", OptionalNumber),
        ],
    },
    CsvSchema {
        file: "fig4_agreement.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("century", Text),
            ("local_drift", Number),
            ("reference_deviation", Number),
            ("class", Text),
        ],
    },
    CsvSchema {
        file: "fig5_poet_matrix_raw.csv",
        columns: &[("poet_a", Text), ("poet_b", Text), ("value", Number)],
    },
    CsvSchema {
        file: "fig5_poet_matrix_centered.csv",
        columns: &[("poet_a", Text), ("poet_b", Text), ("value", Number)],
    },
    CsvSchema {
        file: "fig6_pressure.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("field", Text),
            ("plane_x", OptionalNumber),
            ("plane_y", OptionalNumber),
            ("ratio", OptionalNumber),
            ("class", Text),
            ("caution", Boolean),
            ("label", Text),
        ],
    },
    CsvSchema {
        file: "table4_panel_summary.csv",
        columns: &[
            ("word", Text),
            ("token", Text),
            ("field", Text),
            ("drift", OptionalNumber),
            ("turnover", OptionalNumber),
            ("graph_role", Text),
            ("dominant_pressure", Text),
        ],
    },
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSection {
    pub name: String,
    pub file: String,
    /// Upstream stages the file was built from.
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub sections: Vec<ReportSection>,
    /// Sections not produced, with the reason.
    pub omitted: BTreeMap<String, String>,
    /// Hash of each upstream stage's recorded outputs.
    pub sources: BTreeMap<String, String>,
    /// sha256 of every emitted file except this index.
    pub files: BTreeMap<String, String>,
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x}"))
}

pub(crate) fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn schema(file: &str) -> &'static CsvSchema {
    REPORT_SCHEMAS
        .iter()
        .find(|s| s.file == file)
        .expect("every emitted csv has a schema")
}

fn write_figure(dir: &Path, file: &str, rows: &[Vec<String>]) -> Result<()> {
    let header: Vec<&str> = schema(file).columns.iter().map(|c| c.0).collect();
    write_csv(&dir.join(file), &header, rows)
}

/// Checks a CSV's header and every cell against its schema.
pub fn validate_csv(path: &Path, schema: &CsvSchema) -> Result<()> {
    let bad = |reason: String| Error::Malformed {
        path: path.to_owned(),
        reason,
    };
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let expected: Vec<&str> = schema.columns.iter().map(|c| c.0).collect();
    if header != expected {
        return Err(bad(format!("header {header:?}, expected {expected:?}")));
    }
    for (line, record) in r.records().enumerate() {
        let record = record?;
        for ((name, ty), cell) in schema.columns.iter().zip(record.iter()) {
            let ok = match ty {
                Text => true,
                Number => cell.parse::<f64>().is_ok(),
                OptionalNumber => cell.is_empty() || cell.parse::<f64>().is_ok(),
                Integer => cell.parse::<i64>().is_ok(),
                Boolean => cell == "true" || cell == "false",
            };
            if !ok {
                return Err(bad(format!("row {}: {name} = {cell:?} is not {ty:?}", line + 1)));
            }
        }
    }
    Ok(())
}

/// Validates every CSV listed in a report directory's index, and that each
/// listed file still has its recorded hash.
pub fn validate_report(dir: &Path) -> Result<ReportIndex> {
    let index: ReportIndex = read_json(&dir.join("report.json"))?;
    for (file, hash) in &index.files {
        let path = dir.join(file);
        if &super::hash_file(&path)? != hash {
            return Err(Error::Malformed {
                path,
                reason: "content does not match report.json".into(),
            });
        }
        if let Some(schema) = REPORT_SCHEMAS.iter().find(|s| s.file == file) {
            validate_csv(&path, schema)?;
        }
    }
    Ok(index)
}

/// Coarse graph-role label of one trajectory.
pub fn graph_role(t: &WordTrajectory, low_data_share: f64, migrant_reallocation: f64) -> &'static str {
    let slices = t.per_slice.len().max(1);
    if t.slices_missing() as f64 / slices as f64 > low_data_share {
        return "Low-data caution";
    }
    match t.mean_reallocation() {
        None => "Low-data caution",
        Some(r) if r > migrant_reallocation => "Community-migrant",
        Some(_) => "Stable-role",
    }
}

struct Inputs {
    infos: Option<Vec<SliceInfo>>,
    analysis: Option<PanelAnalysis>,
    poet: Option<PoetSignals>,
    pressure: Option<Vec<PressureRow>>,
}

pub(crate) fn emit_report(p: &Pipeline, out: &Path, sources: BTreeMap<String, String>) -> Result<ReportIndex> {
    let has = |s: Stage| sources.contains_key(s.as_str());
    let inputs = Inputs {
        infos: if has(Stage::Slice) { Some(p.century_infos()?) } else { None },
        analysis: if has(Stage::Metrics) {
            Some(read_json(&p.path(Stage::Metrics).join("analysis.json"))?)
        } else {
            None
        },
        poet: if has(Stage::Poet) {
            Some(read_json(&p.path(Stage::Poet).join("signals.json"))?)
        } else {
            None
        },
        pressure: if has(Stage::Compare) {
            Some(read_json(&p.path(Stage::Compare).join("profiles.json"))?)
        } else {
            None
        },
    };
    let mut sections = Vec::new();
    let mut omitted = BTreeMap::new();
    let mut section = |name: &str, file: &str, from: &[Stage]| {
        sections.push(ReportSection {
            name: name.into(),
            file: file.into(),
            sources: from.iter().map(|s| s.as_str().to_owned()).collect(),
        })
    };
    let panel = &p.config().panel;
    let trajectory = |a: &'_ PanelAnalysis, token: &str| a.trajectory(token).cloned();

    if let Some(a) = &inputs.analysis {
        let mut fig1 = Vec::new();
        let mut fig3_dyn = Vec::new();
        let mut fig3_raw = Vec::new();
        let mut fig3_cen = Vec::new();
        let mut fig4 = Vec::new();
        let mut fig2 = Vec::new();
        for w in panel {
            let token = w.panel_token();
            let Some(t) = trajectory(a, &token) else { continue };
            for tr in &t.transitions {
                let transition = format!("{}->{}", tr.from_slice, tr.to_slice);
                fig1.push(vec![
                    w.word.clone(),
                    token.clone(),
                    w.field.clone(),
                    transition.clone(),
                    fmt_opt(tr.drift),
                    fmt_opt(tr.turnover),
                ]);
                fig3_dyn.push(vec![
                    w.word.clone(),
                    token.clone(),
                    transition,
                    fmt_opt(tr.drift),
                    fmt_opt(tr.turnover),
                    fmt_opt(tr.reallocation),
                    fmt_opt(tr.role_volatility),
                ]);
            }
            for s in &t.per_slice {
                fig3_raw.push(vec![
                    w.word.clone(),
                    token.clone(),
                    s.slice.clone(),
                    s.in_vocabulary.to_string(),
                    fmt_opt(s.centrality),
                    fmt_opt(s.bridge),
                    s.community.map_or(String::new(), |c| c.to_string()),
                ]);
                fig3_cen.push(vec![
                    w.word.clone(),
                    token.clone(),
                    s.slice.clone(),
                    fmt_opt(s.centered_centrality),
                    fmt_opt(s.centered_bridge),
                ]);
            }
            for c in a.agreement.iter().filter(|c| c.word == token) {
                fig4.push(vec![
                    w.word.clone(),
                    token.clone(),
                    c.slice.clone(),
                    format!("{}", c.local_drift),
                    format!("{}", c.reference_deviation),
                    c.class.as_str().to_owned(),
                ]);
            }
            let signal = a.century_signal.get(&token).copied().flatten();
            let parts = a.components.get(&token).copied().unwrap_or([None; 3]);
            fig2.push((signal, vec![
                w.word.clone(),
                token.clone(),
                w.field.clone(),
                fmt_opt(signal),
                fmt_opt(parts[0]),
                fmt_opt(parts[1]),
                fmt_opt(parts[2]),
            ]));
        }
        // Descending by signal; undefined last; ties keep panel order.
        fig2.sort_by(|a, b| match (a.0, b.0) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => std::cmp::Ordering::Equal,
        });
        let fig2: Vec<Vec<String>> = fig2.into_iter().map(|r| r.1).collect();
        let m = &[Stage::Metrics];
        for (name, file, rows) in [
            ("drift and turnover", "fig1_drift_turnover.csv", &fig1),
            ("century signal profiles", "fig2_signal_profiles.csv", &fig2),
            ("trajectories (raw)", "fig3_trajectories_raw.csv", &fig3_raw),
            ("trajectories (century-centered)", "fig3_trajectories_centered.csv", &fig3_cen),
            ("transition dynamics", "fig3_transition_dynamics.csv", &fig3_dyn),
            ("local vs reference agreement", "fig4_agreement.csv", &fig4),
        ] {
            write_figure(out, file, rows)?;
            section(name, file, m);
        }
        if p.config().report.heatmap {
            fs::write(out.join("heatmap.svg"), heatmap(a, panel))?;
            section("centered centrality heatmap", "heatmap.svg", m);
        }

        let mut table = Vec::new();
        for w in panel {
            let token = w.panel_token();
            let t = trajectory(a, &token);
            let role = t.as_ref().map_or("Low-data caution", |t| {
                graph_role(t, p.config().roles.low_data_share, p.config().roles.migrant_reallocation)
            });
            let pressure = inputs
                .pressure
                .as_ref()
                .and_then(|rows| rows.iter().find(|r| r.token == token))
                .map_or("Undetermined".to_owned(), PressureRow::label);
            table.push(vec![
                w.word.clone(),
                token,
                w.field.clone(),
                fmt_opt(t.as_ref().and_then(WordTrajectory::mean_drift)),
                fmt_opt(t.as_ref().and_then(WordTrajectory::mean_turnover)),
                role.to_owned(),
                pressure,
            ]);
        }
        write_figure(out, "table4_panel_summary.csv", &table)?;
        let from: &[Stage] = if inputs.pressure.is_some() { &[Stage::Metrics, Stage::Compare] } else { m };
        section("panel summary", "table4_panel_summary.csv", from);
        if inputs.pressure.is_none() {
            omitted.insert("panel summary: dominant_pressure".into(), "compare stage has not run".into());
        }
    } else {
        for name in ["fig1", "fig2", "fig3", "fig4", "table4"] {
            omitted.insert(name.into(), "metrics stage has not run".into());
        }
    }

    if inputs.poet.is_some() {
        for (src, file) in [
            ("matrix_raw.csv", "fig5_poet_matrix_raw.csv"),
            ("matrix_centered.csv", "fig5_poet_matrix_centered.csv"),
        ] {
            fs::copy(p.path(Stage::Poet).join(src), out.join(file))?;
            section("poet similarity matrix", file, &[Stage::Poet]);
        }
    } else {
        omitted.insert("fig5".into(), "poet stage has not run".into());
    }

    if let Some(rows) = &inputs.pressure {
        let fig6: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.word.clone(),
                    r.token.clone(),
                    r.field.clone(),
                    fmt_opt(r.century_signal),
                    fmt_opt(r.poet_signal),
                    fmt_opt(r.profile.as_ref().map(|p| p.ratio)),
                    r.profile.as_ref().map_or("undetermined", |p| p.class.as_str()).to_owned(),
                    r.caution.to_string(),
                    r.label(),
                ]
            })
            .collect();
        write_figure(out, "fig6_pressure.csv", &fig6)?;
        section("pressure plane", "fig6_pressure.csv", &[Stage::Compare]);
    } else {
        omitted.insert("fig6".into(), "compare stage has not run".into());
    }

    fs::write(out.join("summary.txt"), summary_text(p, &inputs))?;
    section("text summary", "summary.txt", &[]);

    let mut files = BTreeMap::new();
    for s in &sections {
        files.insert(s.file.clone(), super::hash_file(&out.join(&s.file))?);
    }
    let index = ReportIndex {
        sections,
        omitted,
        sources,
        files,
    };
    write_json(&out.join("report.json"), &index)?;
    Ok(index)
}

fn two(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.2}"))
}

fn summary_text(p: &Pipeline, inputs: &Inputs) -> String {
    let mut s = String::new();
    if let Some(infos) = &inputs.infos {
        let _ = writeln!(s, "Centuries");
        for i in infos {
            let _ = writeln!(
                s,
                "  {:>4}  tokens {:>10}  poems {:>7}  {}",
                i.slice_id,
                i.token_count,
                i.poem_count,
                if i.viability == crate::corpus::Viability::Full { "" } else { "sparse-caution" }
            );
        }
    }
    if let Some(poet) = &inputs.poet {
        let eligible = poet.poets.iter().filter(|p| p.eligible).count();
        let _ = writeln!(s, "Poets: {} trained, {} eligible", poet.poets.len(), eligible);
    }
    if let Some(a) = &inputs.analysis {
        let _ = writeln!(s, "Panel");
        for w in &p.config().panel {
            let token = w.panel_token();
            let t = a.trajectory(&token);
            let pressure = inputs
                .pressure
                .as_ref()
                .and_then(|rows| rows.iter().find(|r| r.token == token))
                .map_or("Undetermined".to_owned(), PressureRow::label);
            let _ = writeln!(
                s,
                "  {} ({})  drift {}  turnover {}  century signal {}  {}",
                w.word,
                w.field,
                two(t.and_then(WordTrajectory::mean_drift)),
                two(t.and_then(WordTrajectory::mean_turnover)),
                two(a.century_signal.get(&token).copied().flatten()),
                pressure
            );
        }
    }
    if s.is_empty() {
        s.push_str("No analysis stages have run.\n");
    }
    s
}

/// Words by centuries, colored by century-centered degree centrality.
fn heatmap(a: &PanelAnalysis, panel: &[super::PanelWord]) -> String {
    let rows: Vec<(&str, &WordTrajectory)> = panel
        .iter()
        .filter_map(|w| a.trajectory(&w.panel_token()).map(|t| (w.word.as_str(), t)))
        .collect();
    let slices: Vec<&str> = rows
        .first()
        .map(|(_, t)| t.per_slice.iter().map(|s| s.slice.as_str()).collect())
        .unwrap_or_default();
    let scale = rows
        .iter()
        .flat_map(|(_, t)| t.per_slice.iter().filter_map(|s| s.centered_centrality))
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let (cell, left, top) = (24, 120, 30);
    let width = left + cell * slices.len() + 10;
    let height = top + cell * rows.len() + 10;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    for (j, slice) in slices.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{slice}</text>"#,
            left + j * cell + cell / 2,
            top - 8
        );
    }
    for (i, (word, t)) in rows.iter().enumerate() {
        let y = top + i * cell;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            left - 6,
            y + cell / 2 + 3,
            escape(word)
        );
        for (j, s) in t.per_slice.iter().enumerate() {
            let fill = match s.centered_centrality {
                None => "#dddddd".to_owned(),
                Some(v) => {
                    let x = if scale > 0.0 { v / scale } else { 0.0 };
                    let fade = |c: f64| (255.0 - c * 255.0 * x.abs()).round() as u8;
                    if x >= 0.0 {
                        format!("#ff{:02x}{:02x}", fade(1.0), fade(1.0))
                    } else {
                        format!("#{:02x}{:02x}ff", fade(1.0), fade(1.0))
                    }
                }
            };
            let _ = writeln!(
                svg,
                r#"<rect x="{}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="white"><title>{} {} {}</title></rect>"#,
                left + j * cell,
                escape(word),
                s.slice,
                fmt_opt(s.centered_centrality)
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{SliceRole, Transition};

    fn trajectory(present: &[bool], reallocation: f64) -> WordTrajectory {
        let per_slice = present
            .iter()
            .enumerate()
            .map(|(i, &p)| SliceRole {
                slice: i.to_string(),
                in_vocabulary: p,
                centrality: None,
                bridge: None,
                community: None,
                centered_centrality: None,
                centered_bridge: None,
                reference_deviation: None,
            })
            .collect();
        WordTrajectory {
            word: "w".into(),
            transitions: vec![Transition {
                from_slice: "0".into(),
                to_slice: "1".into(),
                drift: Some(0.1),
                turnover: Some(0.2),
                reallocation: Some(reallocation),
                role_volatility: Some(0.3),
            }],
            per_slice,
            flags: Default::default(),
        }
    }

    #[test]
    fn graph_role_rule() {
        assert_eq!(graph_role(&trajectory(&[true, true, true], 0.6), 0.5, 0.5), "Community-migrant");
        assert_eq!(graph_role(&trajectory(&[true, true, true], 0.5), 0.5, 0.5), "Stable-role");
        assert_eq!(graph_role(&trajectory(&[true, false, false], 0.9), 0.5, 0.5), "Low-data caution");
    }

    #[test]
    fn csv_validation_catches_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema("fig5_poet_matrix_raw.csv");
        let path = dir.path().join("m.csv");
        write_csv(&path, &["poet_a", "poet_b", "value"], &[vec!["a".into(), "b".into(), "0.5".into()]]).unwrap();
        validate_csv(&path, s).unwrap();
        write_csv(&path, &["poet_a", "poet_b", "value"], &[vec!["a".into(), "b".into(), "".into()]]).unwrap();
        assert!(validate_csv(&path, s).is_err());
        write_csv(&path, &["poet_a", "value"], &[]).unwrap();
        assert!(validate_csv(&path, s).is_err());
    }

    #[test]
    fn optional_numbers_print_in_full() {
        assert_eq!(fmt_opt(None), "");
        assert_eq!(fmt_opt(Some(0.1 + 0.2)), "0.30000000000000004");
    }
}
