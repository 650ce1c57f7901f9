//! Poet-axis comparison: how much a word's vector and neighborhood differ
//! between poets writing in the same aligned space, and whether that
//! variation outweighs change over time.

use std::collections::{BTreeMap, HashSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embed::{cosine, EmbeddingModel, NeighborIndex};
use crate::metrics::MinMax;
use crate::{Error, Result};

/// Default token support a poet needs to count toward the poet signal.
pub const DEFAULT_ELIGIBILITY_TOKENS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoetInfo {
    pub poet_id: String,
    pub token_count: usize,
    pub eligible: bool,
}

/// Poet models aligned to one common reference space.
pub struct PoetPanel<'a> {
    poets: Vec<PoetInfo>,
    models: Vec<&'a EmbeddingModel>,
    neighbors: Vec<NeighborIndex<'a>>,
}

impl<'a> PoetPanel<'a> {
    /// `models` pairs each poet's token count with its aligned model; the
    /// model's slice id is taken as the poet id.
    pub fn new(
        models: Vec<(usize, &'a EmbeddingModel)>,
        eligibility_tokens: usize,
        exclude: &HashSet<String>,
    ) -> Self {
        let mut models = models;
        models.sort_by(|a, b| a.1.slice_id().cmp(b.1.slice_id()));
        let poets = models
            .iter()
            .map(|(tokens, m)| PoetInfo {
                poet_id: m.slice_id().to_owned(),
                token_count: *tokens,
                eligible: *tokens >= eligibility_tokens,
            })
            .collect();
        let neighbors = models.iter().map(|(_, m)| NeighborIndex::new(m, exclude)).collect();
        PoetPanel {
            poets,
            models: models.into_iter().map(|(_, m)| m).collect(),
            neighbors,
        }
    }

    pub fn poets(&self) -> &[PoetInfo] {
        &self.poets
    }

    pub fn models(&self) -> &[&'a EmbeddingModel] {
        &self.models
    }

    pub fn eligible_count(&self) -> usize {
        self.poets.iter().filter(|p| p.eligible).count()
    }

    /// Indices of eligible poets whose vocabulary holds `word`.
    pub fn carriers(&self, word: &str) -> Vec<usize> {
        (0..self.poets.len())
            .filter(|&i| self.poets[i].eligible && self.models[i].contains(word))
            .collect()
    }

    /// Thin coverage: fewer than half of the eligible poets carry the word.
    pub fn thin_coverage(&self, word: &str) -> bool {
        2 * self.carriers(word).len() < self.eligible_count()
    }

    fn pairwise(&self, word: &str, f: impl Fn(usize, usize) -> Result<f64>) -> Result<f64> {
        let carriers = self.carriers(word);
        if carriers.len() < 2 {
            return Err(Error::OutOfVocabulary {
                word: word.to_owned(),
                slice: format!("{} eligible poet(s)", carriers.len()),
            });
        }
        let mut sum = 0.0;
        let mut pairs = 0usize;
        for (x, &i) in carriers.iter().enumerate() {
            for &j in &carriers[x + 1..] {
                sum += f(i, j)?;
                pairs += 1;
            }
        }
        Ok(sum / pairs as f64)
    }
}

/// Mean `1 - cos` over pairs of eligible poets carrying the word.
pub fn cosine_dispersion(word: &str, panel: &PoetPanel<'_>) -> Result<f64> {
    panel.pairwise(word, |i, j| {
        Ok(1.0 - cosine(panel.models[i].vector_or_oov(word)?, panel.models[j].vector_or_oov(word)?)?)
    })
}

/// Mean `1 - |N_i ∩ N_j| / k` over pairs of eligible poets carrying the
/// word, each neighborhood taken within the poet's own model.
pub fn overlap_dispersion(word: &str, panel: &PoetPanel<'_>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let tops: BTreeMap<usize, HashSet<String>> = panel
        .carriers(word)
        .into_iter()
        .map(|i| {
            let set = panel.neighbors[i].top_k(word, k)?.into_iter().map(|(w, _)| w).collect();
            Ok((i, set))
        })
        .collect::<Result<_>>()?;
    panel.pairwise(word, |i, j| {
        let shared = tops[&i].intersection(&tops[&j]).count();
        Ok(1.0 - shared as f64 / k as f64)
    })
}

/// Mean cosine over the shared vocabulary of every poet pair; the diagonal
/// is 1. All poets are included, eligible or not.
pub fn poet_similarity_matrix(panel: &PoetPanel<'_>) -> DMatrix<f64> {
    let n = panel.models.len();
    let mut m = DMatrix::from_element(n, n, 1.0);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (panel.models[i], panel.models[j]);
            let mut sum = 0.0;
            let mut count = 0usize;
            for w in a.words() {
                if let (Some(va), Some(vb)) = (a.vector(w), b.vector(w)) {
                    if let Ok(c) = cosine(va, vb) {
                        sum += c;
                        count += 1;
                    }
                }
            }
            let v = if count > 0 { sum / count as f64 } else { 0.0 };
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `x_ij - rowmean_i - colmean_j + grandmean`.
pub fn double_center(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = matrix.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    if rows == 0 {
        return Ok(matrix.clone());
    }
    let n = rows as f64;
    let row_means: Vec<f64> = (0..rows).map(|i| matrix.row(i).sum() / n).collect();
    let col_means: Vec<f64> = (0..cols).map(|j| matrix.column(j).sum() / n).collect();
    let grand = matrix.sum() / (n * n);
    Ok(DMatrix::from_fn(rows, cols, |i, j| {
        matrix[(i, j)] - row_means[i] - col_means[j] + grand
    }))
}

/// Per-word dispersions on the poet axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoetDispersion {
    pub word: String,
    pub carriers: usize,
    pub cosine_dispersion: Option<f64>,
    pub overlap_dispersion: Option<f64>,
    pub thin_coverage: bool,
}

pub fn dispersions(words: &[String], panel: &PoetPanel<'_>, k: usize) -> Vec<PoetDispersion> {
    words
        .iter()
        .map(|w| PoetDispersion {
            word: w.clone(),
            carriers: panel.carriers(w).len(),
            cosine_dispersion: cosine_dispersion(w, panel).ok(),
            overlap_dispersion: overlap_dispersion(w, panel, k).ok(),
            thin_coverage: panel.thin_coverage(w),
        })
        .collect()
}

/// Mean of the two dispersions after min-max scaling over the panel;
/// `None` where either dispersion is undefined.
pub fn poet_signals(rows: &[PoetDispersion]) -> BTreeMap<String, Option<f64>> {
    let cos = MinMax::over(rows.iter().filter_map(|r| r.cosine_dispersion));
    let ovl = MinMax::over(rows.iter().filter_map(|r| r.overlap_dispersion));
    rows.iter()
        .map(|r| {
            let s = (|| Some((cos?.scale(r.cosine_dispersion?) + ovl?.scale(r.overlap_dispersion?)) / 2.0))();
            (r.word.clone(), s)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioDefinition {
    /// poet / (poet + century), in [0, 1].
    #[default]
    Share,
    /// poet / century.
    Quotient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PressureThresholds {
    pub low: f64,
    pub high: f64,
    pub ratio: RatioDefinition,
}

impl Default for PressureThresholds {
    fn default() -> Self {
        PressureThresholds {
            low: 0.45,
            high: 0.55,
            ratio: RatioDefinition::Share,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureClass {
    TimeSensitive,
    PoetSensitive,
    Mixed,
}

impl PressureClass {
    pub fn as_str(self) -> &'static str {
        match self {
            PressureClass::TimeSensitive => "time_sensitive",
            PressureClass::PoetSensitive => "poet_sensitive",
            PressureClass::Mixed => "mixed",
        }
    }

    pub fn label(self, caution: bool) -> String {
        let base = match self {
            PressureClass::TimeSensitive => "More time-sensitive",
            PressureClass::PoetSensitive => "More poet-sensitive",
            PressureClass::Mixed => "Mixed",
        };
        if caution {
            format!("{base} (caution)")
        } else {
            base.to_owned()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureProfile {
    pub word: String,
    pub century_signal: f64,
    pub poet_signal: f64,
    pub ratio: f64,
    pub class: PressureClass,
    pub caution: bool,
}

pub fn classify_pressure(
    word: &str,
    century_signal: f64,
    poet_signal: f64,
    thresholds: &PressureThresholds,
    caution: bool,
) -> PressureProfile {
    let degenerate = century_signal + poet_signal <= 0.0;
    let ratio = match thresholds.ratio {
        _ if degenerate => 0.5,
        RatioDefinition::Share => poet_signal / (poet_signal + century_signal),
        RatioDefinition::Quotient if century_signal <= 0.0 => f64::INFINITY,
        RatioDefinition::Quotient => poet_signal / century_signal,
    };
    let class = if degenerate {
        PressureClass::Mixed
    } else if ratio > thresholds.high {
        PressureClass::PoetSensitive
    } else if ratio < thresholds.low {
        PressureClass::TimeSensitive
    } else {
        PressureClass::Mixed
    };
    PressureProfile {
        word: word.to_owned(),
        century_signal,
        poet_signal,
        ratio,
        class,
        caution: caution || degenerate,
    }
}
