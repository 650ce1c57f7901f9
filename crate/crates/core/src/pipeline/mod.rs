//! Staged on-disk runs: configuration, per-stage artifacts under a work
//! directory, a manifest of content hashes, and the report bundle.
//!
//! Each stage reads its upstream artifacts from the workdir, writes into a
//! staging directory, and swaps it into place only on success. A stage whose
//! inputs hash the same as last time, and whose outputs are still intact,
//! is skipped.

mod config;
mod manifest;
mod report;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use config::{
    default_panel, Alignment, AlignmentMode, Balance, GraphSettings, PanelWord, Paths, PipelineConfig,
    ReportSettings, RoleRule, Slicing, SynthSettings, Thresholds, TrainOn, TrainSettings,
};
pub use manifest::{hash_file, list_files, sha256_hex, RunManifest, Stage, StageRecord, MANIFEST_FILE};
pub use report::{
    graph_role, validate_csv, validate_report, ColumnType, CsvSchema, ReportIndex, ReportSection,
    REPORT_SCHEMAS,
};

use crate::align::{align_to_reference, chain_consecutive, chain_to_reference, AlignedChain, AnchorPolicy};
use crate::corpus::{
    balance_slice, build_slices, read_jsonl, read_slice, read_text_dir, write_jsonl, write_slice, CorpusSlice,
    RawDocument, SliceInfo, SliceKind,
};
use crate::embed::{load_model, save_model, train, train_global_reference, EmbeddingModel, REFERENCE_SLICE};
use crate::graph::{build_mutual_knn, detect_communities, write_edges_tsv, Diversity, RoleTable};
use crate::metrics::{analyze_panel, PanelAnalysis, SliceView};
use crate::poetcmp::{
    classify_pressure, dispersions, double_center, poet_signals, poet_similarity_matrix, PoetDispersion, PoetInfo,
    PoetPanel, PressureProfile,
};
use crate::synth::{generate, write_truth, SynthSpec};
use crate::{Error, Result};

use manifest::{hash_stage_dir, outputs_intact, write_atomic};
use report::{fmt_opt, write_csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageOutcome {
    Ran,
    /// Inputs unchanged and outputs intact; nothing was done.
    Skipped,
}

pub struct Pipeline {
    config: PipelineConfig,
    workdir: PathBuf,
}

/// Per-poet signals as written by the `poet` stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoetSignals {
    pub poets: Vec<PoetInfo>,
    pub dispersions: Vec<PoetDispersion>,
    pub signal: BTreeMap<String, Option<f64>>,
}

/// One panel word's century-vs-poet comparison as written by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureRow {
    pub word: String,
    pub token: String,
    pub field: String,
    pub century_signal: Option<f64>,
    pub poet_signal: Option<f64>,
    pub caution: bool,
    /// `None` when either signal is undefined.
    pub profile: Option<PressureProfile>,
}

impl PressureRow {
    pub fn label(&self) -> String {
        match &self.profile {
            Some(p) => p.class.label(p.caution),
            None => "Undetermined".into(),
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Malformed {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Slice and poet ids become file stems.
fn check_stem(id: &str) -> Result<()> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) {
        return Err(Error::Malformed {
            path: PathBuf::from(id),
            reason: "slice id cannot be used as a file name".into(),
        });
    }
    Ok(())
}

fn write_slices(dir: &Path, slices: &[CorpusSlice]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for s in slices {
        check_stem(&s.slice_id)?;
        write_slice(dir, s)?;
    }
    let infos: Vec<SliceInfo> = slices.iter().map(SliceInfo::from).collect();
    write_json(&dir.join("manifest.json"), &infos)
}

fn read_slice_infos(dir: &Path) -> Result<Vec<SliceInfo>> {
    read_json(&dir.join("manifest.json"))
}

fn read_slices(dir: &Path) -> Result<Vec<CorpusSlice>> {
    read_slice_infos(dir)?.iter().map(|info| read_slice(dir, info)).collect()
}

fn load_models(dir: &Path, ids: &[String]) -> Result<Vec<EmbeddingModel>> {
    ids.iter().map(|id| load_model(dir, id)).collect()
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let workdir = config.paths.workdir.clone();
        Ok(Pipeline { config, workdir })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn manifest(&self) -> Result<Option<RunManifest>> {
        RunManifest::load(&self.workdir)
    }

    fn has_poets(&self) -> bool {
        self.config.slicing.kinds.contains(&SliceKind::Poet)
    }

    /// Upstream stages whose outputs must exist before `stage` runs.
    fn upstream(&self, stage: Stage) -> Vec<Stage> {
        match stage {
            Stage::Ingest | Stage::Synth | Stage::Report => vec![],
            Stage::Slice => vec![Stage::Ingest],
            Stage::Balance => vec![Stage::Slice],
            Stage::Train if self.config.balance.train_on == TrainOn::Balanced => vec![Stage::Slice, Stage::Balance],
            Stage::Train => vec![Stage::Slice],
            Stage::Align => vec![Stage::Slice, Stage::Train],
            Stage::Graph => vec![Stage::Align],
            Stage::Metrics => vec![Stage::Slice, Stage::Align, Stage::Graph],
            Stage::Poet => vec![Stage::Slice, Stage::Align],
            Stage::Compare => vec![Stage::Metrics, Stage::Poet],
        }
    }

    fn stoplist_id(&self) -> Result<String> {
        Ok(match self.config.paths.stoplist.as_str() {
            s @ ("builtin" | "none") => s.to_owned(),
            path => format!("sha256:{}", hash_file(Path::new(path))?),
        })
    }

    fn corpus_hash(&self) -> Result<String> {
        let Some(corpus) = &self.config.paths.corpus else {
            return Err(Error::Config("paths.corpus is not set".into()));
        };
        if corpus.is_dir() {
            let mut combined = String::new();
            for rel in list_files(corpus)? {
                combined.push_str(&format!("{rel} {}\n", hash_file(&corpus.join(&rel))?));
            }
            if let Some(meta) = &self.config.paths.metadata {
                combined.push_str(&format!("metadata {}\n", hash_file(meta)?));
            }
            Ok(sha256_hex(combined.as_bytes()))
        } else {
            hash_file(corpus)
        }
    }

    /// The part of the config a stage's outputs depend on.
    fn fragment(&self, stage: Stage) -> Result<serde_json::Value> {
        let c = &self.config;
        Ok(match stage {
            Stage::Ingest => json!({
                "corpus": self.corpus_hash()?,
                "first_century": c.slicing.first_century,
                "last_century": c.slicing.last_century,
            }),
            Stage::Slice => json!({
                "kinds": c.slicing.kinds,
                "viability_tokens": c.thresholds.viability_tokens,
                "poet_eligibility_tokens": c.thresholds.poet_eligibility_tokens,
            }),
            Stage::Balance => json!({ "balance": c.balance, "seed": c.seed }),
            Stage::Train => json!({ "train": c.train, "train_on": c.balance.train_on, "seed": c.seed }),
            Stage::Align => json!({ "alignment": c.alignment, "stoplist": self.stoplist_id()? }),
            Stage::Graph => json!({ "k": c.graph.k, "stoplist": self.stoplist_id()? }),
            Stage::Metrics => json!({ "panel": c.panel, "k": c.graph.k, "stoplist": self.stoplist_id()? }),
            Stage::Poet => json!({
                "panel": c.panel,
                "k": c.graph.k,
                "poet_eligibility_tokens": c.thresholds.poet_eligibility_tokens,
                "stoplist": self.stoplist_id()?,
            }),
            Stage::Compare => json!({ "panel": c.panel, "pressure": c.thresholds.pressure }),
            Stage::Report => json!({ "panel": c.panel, "roles": c.roles, "report": c.report }),
            Stage::Synth => json!({ "synth": c.synth, "seed": c.seed }),
        })
    }

    fn defaults(&self) -> Result<BTreeMap<String, String>> {
        let c = &self.config;
        let mode = match c.alignment.mode {
            AlignmentMode::Consecutive => "consecutive",
            AlignmentMode::ReferenceChained => "reference_chained",
        };
        let ratio = match c.thresholds.pressure.ratio {
            crate::poetcmp::RatioDefinition::Share => "poet / (poet + century)",
            crate::poetcmp::RatioDefinition::Quotient => "poet / century",
        };
        let entries = [
            ("agreement.high", "strictly above the panel median; even counts use the mean of the middle pair".into()),
            ("agreement.drift_slice", "drift of a transition is assigned to its resulting century".into()),
            ("alignment.mode", mode.into()),
            ("alignment.poets", "each poet aligned directly to the global reference".into()),
            ("balance.order", "round-robin over poets in lexicographic order, corpus order within a poet".into()),
            ("bridge.diversity", "count of distinct external communities / (communities - 1)".into()),
            ("century_signal.weights", "drift 1/3, turnover 1/3, role volatility 1/3 (min-max over panel cells)".into()),
            ("communities.resolution", "1 (greedy modularity)".into()),
            ("drift.negative_cosine", "kept above 1 and flagged".into()),
            (
                "graph_role.rule",
                format!(
                    "low-data caution if missing from more than {} of centuries; community-migrant if mean reallocation > {}; else stable-role",
                    c.roles.low_data_share, c.roles.migrant_reallocation
                ),
            ),
            ("neighbors.k", c.graph.k.to_string()),
            ("normalization.zwnj", "word-internal ZWNJ kept, runs collapsed, edges trimmed".into()),
            ("poet.eligibility_tokens", c.thresholds.poet_eligibility_tokens.to_string()),
            ("poet.matrix", "mean cosine of shared words in reference space; all poets".into()),
            ("poet_signal.weights", "cosine dispersion 1/2, overlap dispersion 1/2 (min-max over panel)".into()),
            ("pressure.caution", "thin poet coverage, undefined poet dispersion, or both signals zero".into()),
            ("pressure.ratio", ratio.into()),
            ("pressure.thresholds", format!("{} / {}", c.thresholds.pressure.low, c.thresholds.pressure.high)),
            ("stoplist", self.stoplist_id()?),
            ("train.subsample_threshold", c.train.subsample_threshold.to_string()),
            ("viability_tokens", c.thresholds.viability_tokens.to_string()),
            ("volatility.normalizer", "per-transition maximum over the panel; zero maximum gives 0".into()),
        ];
        Ok(entries.into_iter().map(|(k, v)| (k.to_owned(), v)).collect())
    }

    fn snapshot(&self) -> Result<serde_json::Value> {
        let mut value = serde_json::to_value(&self.config)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("paths");
        }
        Ok(value)
    }

    /// Runs one stage, or skips it when its inputs and outputs are
    /// unchanged since the last run.
    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        fs::create_dir_all(&self.workdir)?;
        let mut manifest = match RunManifest::load(&self.workdir)? {
            Some(m) => m,
            None => RunManifest::new(self.snapshot()?, self.defaults()?),
        };
        manifest.config = self.snapshot()?;
        manifest.defaults = self.defaults()?;

        let mut upstream = BTreeMap::new();
        let required = self.upstream(stage);
        let available: Vec<Stage> = if stage == Stage::Report {
            vec![Stage::Slice, Stage::Metrics, Stage::Poet, Stage::Compare]
        } else {
            required.clone()
        };
        for dep in available {
            match manifest.stages.get(&dep) {
                Some(rec) if outputs_intact(&self.workdir, rec) => {
                    upstream.insert(dep, rec.outputs.clone());
                }
                _ if required.contains(&dep) => {
                    return Err(Error::MissingUpstream {
                        stage: stage.as_str(),
                        run_first: dep.as_str(),
                    })
                }
                _ => {}
            }
        }
        let input_hash = sha256_hex(
            serde_json::to_string(&json!({
                "stage": stage,
                "config": self.fragment(stage)?,
                "upstream": upstream,
            }))?
            .as_bytes(),
        );
        if let Some(rec) = manifest.stages.get(&stage) {
            if rec.input_hash == input_hash && outputs_intact(&self.workdir, rec) {
                manifest.save(&self.workdir)?;
                return Ok(StageOutcome::Skipped);
            }
        }

        let staging = self.workdir.join(format!(".staging-{}", stage.dir()));
        if staging.exists() {
            fs::remove_dir_all(&staging)?;
        }
        fs::create_dir_all(&staging)?;
        if let Err(e) = self.execute(stage, &staging, &upstream) {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        let target = self.workdir.join(stage.dir());
        if target.exists() {
            fs::remove_dir_all(&target)?;
        }
        fs::rename(&staging, &target)?;
        manifest.stages.insert(
            stage,
            StageRecord {
                input_hash,
                outputs: hash_stage_dir(&self.workdir, stage)?,
            },
        );
        manifest.save(&self.workdir)?;
        Ok(StageOutcome::Ran)
    }

    /// Runs every pipeline stage in order (not `synth`).
    pub fn run_all(&self) -> Result<Vec<(Stage, StageOutcome)>> {
        Stage::PIPELINE
            .into_iter()
            .filter(|s| *s != Stage::Poet && *s != Stage::Compare || self.has_poets())
            .map(|s| Ok((s, self.run(s)?)))
            .collect()
    }

    fn execute(&self, stage: Stage, out: &Path, upstream: &BTreeMap<Stage, BTreeMap<String, String>>) -> Result<()> {
        match stage {
            Stage::Ingest => self.ingest(out),
            Stage::Slice => self.slice(out),
            Stage::Balance => self.balance(out),
            Stage::Train => self.train(out),
            Stage::Align => self.align(out),
            Stage::Graph => self.graph(out),
            Stage::Metrics => self.metrics(out),
            Stage::Poet => self.poet(out),
            Stage::Compare => self.compare(out),
            Stage::Report => {
                let sources = upstream
                    .iter()
                    .map(|(s, outputs)| {
                        Ok((s.as_str().to_owned(), sha256_hex(serde_json::to_string(outputs)?.as_bytes())))
                    })
                    .collect::<Result<_>>()?;
                report::emit_report(self, out, sources).map(|_| ())
            }
            Stage::Synth => self.synth(out),
        }
    }

    fn path(&self, stage: Stage) -> PathBuf {
        self.workdir.join(stage.dir())
    }

    fn ingest(&self, out: &Path) -> Result<()> {
        let Some(corpus) = &self.config.paths.corpus else {
            return Err(Error::Config("paths.corpus is not set".into()));
        };
        let docs = if corpus.is_dir() {
            let meta = self.config.paths.metadata.clone().unwrap_or_else(|| corpus.join("metadata.tsv"));
            read_text_dir(corpus, &meta)?
        } else {
            read_jsonl(corpus)?
        };
        if docs.is_empty() {
            return Err(Error::NoInput);
        }
        let range = self.config.slicing.first_century..=self.config.slicing.last_century;
        let mut ids = HashSet::new();
        let mut centuries: BTreeMap<i32, usize> = BTreeMap::new();
        let mut poets: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in &docs {
            doc.validate(&range)?;
            if !ids.insert(doc.doc_id.as_str()) {
                return Err(Error::InvalidDocument {
                    doc_id: doc.doc_id.clone(),
                    reason: "duplicate doc_id".into(),
                });
            }
            *centuries.entry(doc.century).or_default() += 1;
            *poets.entry(doc.poet_id.as_str()).or_default() += 1;
        }
        write_jsonl(&out.join("corpus.jsonl"), &docs)?;
        write_json(
            &out.join("summary.json"),
            &json!({ "documents": docs.len(), "documents_per_century": centuries, "documents_per_poet": poets }),
        )
    }

    fn documents(&self) -> Result<Vec<RawDocument>> {
        read_jsonl(&self.path(Stage::Ingest).join("corpus.jsonl"))
    }

    fn slice(&self, out: &Path) -> Result<()> {
        let docs = self.documents()?;
        for &kind in &self.config.slicing.kinds {
            let threshold = match kind {
                SliceKind::Century => self.config.thresholds.viability_tokens,
                SliceKind::Poet => self.config.thresholds.poet_eligibility_tokens,
            };
            let slices = build_slices(&docs, kind, threshold)?;
            write_slices(&out.join(kind.as_str()), &slices)?;
        }
        Ok(())
    }

    fn century_infos(&self) -> Result<Vec<SliceInfo>> {
        read_slice_infos(&self.path(Stage::Slice).join("century"))
    }

    fn century_ids(&self) -> Result<Vec<String>> {
        Ok(self.century_infos()?.into_iter().map(|i| i.slice_id).collect())
    }

    fn poet_infos(&self) -> Result<Vec<SliceInfo>> {
        if !self.has_poets() {
            return Ok(Vec::new());
        }
        read_slice_infos(&self.path(Stage::Slice).join("poet"))
    }

    fn balance(&self, out: &Path) -> Result<()> {
        if !self.config.balance.enabled {
            return write_json(&out.join("plans.json"), &json!({ "enabled": false, "plans": [] }));
        }
        let slices = read_slices(&self.path(Stage::Slice).join("century"))?;
        let target = match self.config.balance.target_tokens {
            Some(t) => t,
            None => {
                let viable = slices.iter().filter(|s| s.viability == crate::corpus::Viability::Full);
                let pool: Vec<usize> = viable.map(|s| s.token_count).collect();
                let pool = if pool.is_empty() { slices.iter().map(|s| s.token_count).collect() } else { pool };
                pool.into_iter().min().ok_or(Error::NoInput)?
            }
        };
        let (balanced, plans): (Vec<_>, Vec<_>) =
            slices.iter().map(|s| balance_slice(s, target, self.config.seed)).unzip();
        write_slices(&out.join("century"), &balanced)?;
        write_json(&out.join("plans.json"), &json!({ "enabled": true, "target_tokens": target, "plans": plans }))
    }

    fn train(&self, out: &Path) -> Result<()> {
        let century_dir = match self.config.balance.train_on {
            TrainOn::Full => self.path(Stage::Slice).join("century"),
            TrainOn::Balanced => self.path(Stage::Balance).join("century"),
        };
        let centuries = read_slices(&century_dir)?;
        let base = self.config.model_config();
        let models = centuries.par_iter().map(|s| train(s, &base)).collect::<Result<Vec<_>>>()?;
        for m in &models {
            save_model(m, &out.join("century"), m.slice_id())?;
        }
        let reference = train_global_reference(&centuries, &base)?;
        save_model(&reference, out, REFERENCE_SLICE)?;
        drop(centuries);

        let mut skipped = BTreeMap::new();
        let mut poet_vocab = BTreeMap::new();
        if self.has_poets() {
            let poets = read_slices(&self.path(Stage::Slice).join("poet"))?;
            let trained: Vec<(String, Result<EmbeddingModel>)> = poets
                .par_iter()
                .map(|s| (s.slice_id.clone(), train(s, &self.config.poet_model_config(&s.slice_id))))
                .collect();
            for (poet, model) in trained {
                match model {
                    Ok(m) => {
                        poet_vocab.insert(poet, m.len());
                        save_model(&m, &out.join("poet"), m.slice_id())?;
                    }
                    Err(Error::BelowLexicalThreshold { .. }) => {
                        skipped.insert(poet, "no word reaches min_count");
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let century_vocab: BTreeMap<&str, usize> = models.iter().map(|m| (m.slice_id(), m.len())).collect();
        write_json(
            &out.join("summary.json"),
            &json!({
                "century_vocabulary": century_vocab,
                "reference_vocabulary": reference.len(),
                "poet_vocabulary": poet_vocab,
                "poets_skipped": skipped,
            }),
        )
    }

    fn trained_poets(&self) -> Result<Vec<String>> {
        let dir = self.path(Stage::Train).join("poet");
        let mut ids: Vec<String> = list_files(&dir)?
            .into_iter()
            .filter_map(|f| f.strip_suffix(".vec").map(str::to_owned))
            .collect();
        ids.sort();
        Ok(ids)
    }

    fn anchor_policy(&self) -> Result<AnchorPolicy> {
        Ok(AnchorPolicy {
            stoplist: self.config.stoplist()?,
            cap: self.config.alignment.anchor_cap,
        })
    }

    fn align(&self, out: &Path) -> Result<()> {
        let train_dir = self.path(Stage::Train);
        let ids = self.century_ids()?;
        let models = load_models(&train_dir.join("century"), &ids)?;
        let reference = load_model(&train_dir, REFERENCE_SLICE)?;
        let policy = self.anchor_policy()?;

        let chain: AlignedChain = match self.config.alignment.mode {
            AlignmentMode::Consecutive => chain_consecutive(&models, &policy)?,
            AlignmentMode::ReferenceChained => chain_to_reference(&models, &reference, &policy)?,
        };
        let to_reference = chain_to_reference(&models, &reference, &policy)?;
        let maps = out.join("maps");
        fs::create_dir_all(&maps)?;
        let mut summary = Vec::new();
        let mut record = |name: String, map: &crate::align::AlignmentMap| -> Result<()> {
            summary.push(json!({
                "map": name,
                "source": map.source_slice,
                "target": map.target_slice,
                "anchors": map.anchors.len(),
                "residual": map.residual,
                "orthogonality_error": map.orthogonality_error(),
            }));
            write_json(&maps.join(format!("{name}.json")), &map.to_record())
        };
        for (m, map) in chain.aligned.iter().zip(&chain.cumulative) {
            save_model(m, &out.join("chained"), m.slice_id())?;
            record(format!("chained_{}", m.slice_id()), map)?;
        }
        for (i, map) in chain.pairwise.iter().enumerate() {
            record(format!("pairwise_{i:03}"), map)?;
        }
        for (m, map) in to_reference.aligned.iter().zip(&to_reference.cumulative) {
            save_model(m, &out.join("reference_space").join("century"), m.slice_id())?;
            record(format!("reference_century_{}", m.slice_id()), map)?;
        }
        let mut poets_skipped = BTreeMap::new();
        for poet in self.trained_poets()? {
            let model = load_model(&train_dir.join("poet"), &poet)?;
            match align_to_reference(&model, &reference, &policy) {
                Ok(map) => {
                    save_model(&map.apply(&model), &out.join("reference_space").join("poet"), &poet)?;
                    record(format!("reference_poet_{poet}"), &map)?;
                }
                Err(e @ (Error::TooFewAnchors { .. } | Error::DegenerateAnchors { .. })) => {
                    poets_skipped.insert(poet, e.to_string());
                }
                Err(e) => return Err(e),
            }
        }
        write_json(&out.join("summary.json"), &json!({ "maps": summary, "poets_skipped": poets_skipped }))
    }

    fn graph(&self, out: &Path) -> Result<()> {
        let ids = self.century_ids()?;
        let models = load_models(&self.path(Stage::Align).join("chained"), &ids)?;
        let exclude = self.config.stoplist()?;
        let k = self.config.graph.k;
        let tables = models
            .par_iter()
            .map(|m| -> Result<(crate::graph::SemanticGraph, RoleTable)> {
                let graph = build_mutual_knn(m, k, &exclude)?;
                let partition = detect_communities(&graph);
                let table = RoleTable::new(&graph, &partition, Diversity::Count);
                Ok((graph, table))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut summary = Vec::new();
        for (graph, table) in &tables {
            write_edges_tsv(graph, &out.join(format!("{}.edges.tsv", graph.slice_id)))?;
            write_json(&out.join(format!("{}.roles.json", graph.slice_id)), table)?;
            summary.push(json!({
                "slice": table.slice_id,
                "nodes": table.node_count,
                "edges": table.edge_count,
                "communities": table.community_count,
                "modularity": table.modularity,
                "dropped_nonpositive": table.dropped_nonpositive,
            }));
        }
        write_json(&out.join("summary.json"), &summary)
    }

    fn panel_tokens(&self) -> Vec<String> {
        self.config.panel.iter().map(PanelWord::panel_token).collect()
    }

    fn metrics(&self, out: &Path) -> Result<()> {
        let infos = self.century_infos()?;
        let ids: Vec<String> = infos.iter().map(|i| i.slice_id.clone()).collect();
        let align_dir = self.path(Stage::Align);
        let chained = load_models(&align_dir.join("chained"), &ids)?;
        let in_reference = load_models(&align_dir.join("reference_space").join("century"), &ids)?;
        let reference = load_model(&self.path(Stage::Train), REFERENCE_SLICE)?;
        let roles: Vec<RoleTable> = ids
            .iter()
            .map(|id| read_json(&self.path(Stage::Graph).join(format!("{id}.roles.json"))))
            .collect::<Result<_>>()?;
        let exclude = self.config.stoplist()?;
        let views: Vec<SliceView<'_>> = chained
            .iter()
            .zip(&in_reference)
            .zip(&roles)
            .zip(&infos)
            .map(|(((m, r), t), info)| SliceView::new(m, Some(r), t, info.viability, &exclude))
            .collect();
        let analysis = analyze_panel(&self.panel_tokens(), &views, Some(&reference), self.config.graph.k);

        write_json(&out.join("analysis.json"), &analysis)?;
        write_json(&out.join("trajectories.json"), &analysis.trajectories)?;
        let mut rows = Vec::new();
        for t in &analysis.trajectories {
            for tr in &t.transitions {
                rows.push(vec![
                    t.word.clone(),
                    format!("{}->{}", tr.from_slice, tr.to_slice),
                    fmt_opt(tr.drift),
                    fmt_opt(tr.turnover),
                    fmt_opt(tr.reallocation),
                    fmt_opt(tr.role_volatility),
                ]);
            }
        }
        write_csv(
            &out.join("panel.csv"),
            &["word", "transition", "drift", "turnover", "reallocation", "volatility"],
            &rows,
        )?;
        let rows: Vec<Vec<String>> = analysis
            .agreement
            .iter()
            .map(|c| vec![c.word.clone(), c.slice.clone(), c.class.as_str().to_owned()])
            .collect();
        write_csv(&out.join("agreement.csv"), &["word", "century", "class"], &rows)
    }

    fn poet(&self, out: &Path) -> Result<()> {
        if !self.has_poets() {
            return Err(Error::Config("poet slices are not configured (slicing.kinds)".into()));
        }
        let tokens: BTreeMap<String, usize> =
            self.poet_infos()?.into_iter().map(|i| (i.slice_id, i.token_count)).collect();
        let dir = self.path(Stage::Align).join("reference_space").join("poet");
        let ids: Vec<String> = list_files(&dir)?
            .into_iter()
            .filter_map(|f| f.strip_suffix(".vec").map(str::to_owned))
            .collect();
        let models = load_models(&dir, &ids)?;
        let exclude = self.config.stoplist()?;
        let panel = PoetPanel::new(
            models.iter().map(|m| (tokens.get(m.slice_id()).copied().unwrap_or(0), m)).collect(),
            self.config.thresholds.poet_eligibility_tokens,
            &exclude,
        );
        let rows = dispersions(&self.panel_tokens(), &panel, self.config.graph.k);
        let signals = PoetSignals {
            poets: panel.poets().to_vec(),
            signal: poet_signals(&rows),
            dispersions: rows,
        };
        write_json(&out.join("signals.json"), &signals)?;
        let csv_rows: Vec<Vec<String>> = signals
            .dispersions
            .iter()
            .map(|d| {
                vec![
                    d.word.clone(),
                    d.carriers.to_string(),
                    fmt_opt(d.cosine_dispersion),
                    fmt_opt(d.overlap_dispersion),
                    d.thin_coverage.to_string(),
                    fmt_opt(signals.signal.get(&d.word).copied().flatten()),
                ]
            })
            .collect();
        write_csv(
            &out.join("dispersions.csv"),
            &["word", "carriers", "cosine_dispersion", "overlap_dispersion", "thin_coverage", "poet_signal"],
            &csv_rows,
        )?;
        let raw = poet_similarity_matrix(&panel);
        let centered = double_center(&raw)?;
        let names: Vec<&str> = panel.poets().iter().map(|p| p.poet_id.as_str()).collect();
        for (file, m) in [("matrix_raw.csv", &raw), ("matrix_centered.csv", &centered)] {
            let mut rows = Vec::new();
            for (i, a) in names.iter().enumerate() {
                for (j, b) in names.iter().enumerate() {
                    rows.push(vec![(*a).to_owned(), (*b).to_owned(), format!("{}", m[(i, j)])]);
                }
            }
            write_csv(&out.join(file), &["poet_a", "poet_b", "value"], &rows)?;
        }
        Ok(())
    }

    fn compare(&self, out: &Path) -> Result<()> {
        let analysis: PanelAnalysis = read_json(&self.path(Stage::Metrics).join("analysis.json"))?;
        let poet: PoetSignals = read_json(&self.path(Stage::Poet).join("signals.json"))?;
        let thresholds = &self.config.thresholds.pressure;
        let rows: Vec<PressureRow> = self
            .config
            .panel
            .iter()
            .map(|w| {
                let token = w.panel_token();
                let century = analysis.century_signal.get(&token).copied().flatten();
                let poet_signal = poet.signal.get(&token).copied().flatten();
                let thin = poet
                    .dispersions
                    .iter()
                    .find(|d| d.word == token)
                    .is_none_or(|d| d.thin_coverage || d.cosine_dispersion.is_none());
                let profile = match (century, poet_signal) {
                    (Some(c), Some(p)) => Some(classify_pressure(&token, c, p, thresholds, thin || c + p <= 0.0)),
                    _ => None,
                };
                PressureRow {
                    word: w.word.clone(),
                    token,
                    field: w.field.clone(),
                    century_signal: century,
                    poet_signal,
                    caution: profile.as_ref().is_none_or(|p| p.caution),
                    profile,
                }
            })
            .collect();
        write_json(&out.join("profiles.json"), &rows)?;
        let csv_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.word.clone(),
                    r.token.clone(),
                    r.field.clone(),
                    fmt_opt(r.century_signal),
                    fmt_opt(r.poet_signal),
                    fmt_opt(r.profile.as_ref().map(|p| p.ratio)),
                    r.profile.as_ref().map_or(String::new(), |p| p.class.as_str().to_owned()),
                    r.caution.to_string(),
                    r.label(),
                ]
            })
            .collect();
        write_csv(
            &out.join("pressure.csv"),
            &["word", "token", "field", "century_signal", "poet_signal", "ratio", "class", "caution", "label"],
            &csv_rows,
        )
    }

    fn synth(&self, out: &Path) -> Result<()> {
        let s = &self.config.synth;
        let spec = SynthSpec::planted_benchmark(
            self.config.seed,
            s.vocab_size,
            s.slices,
            s.sentences_per_slice,
            s.per_behavior,
        )?;
        write_jsonl(&out.join("corpus.jsonl"), &generate(&spec)?)?;
        write_truth(&spec, &out.join("truth.json"))?;
        let run = PipelineConfig::synthetic(&spec, PathBuf::from("corpus.jsonl"), PathBuf::from(".."));
        let text = format!(
            "# Runs the pipeline on this synthetic corpus: semshift all --config synth/config.toml\n{}",
            run.to_toml()?
        );
        write_atomic(&out.join("config.toml"), text.as_bytes())
    }
}
