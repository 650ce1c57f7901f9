//! Run configuration, read from a TOML file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, SliceKind};
use crate::embed::TrainConfig;
use crate::graph::DEFAULT_K;
use crate::poetcmp::{PressureThresholds, DEFAULT_ELIGIBILITY_TOKENS};
use crate::synth::{Behavior, SynthSpec};
use crate::{Error, Result};

const BUILTIN_STOPLIST: &str = include_str!("../../data/stoplist_fa.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub slicing: Slicing,
    pub balance: Balance,
    pub train: TrainSettings,
    pub alignment: Alignment,
    pub graph: GraphSettings,
    pub thresholds: Thresholds,
    pub roles: RoleRule,
    pub report: ReportSettings,
    pub synth: SynthSettings,
    /// Seeds training, balancing and the synthetic corpus.
    pub seed: u64,
    pub panel: Vec<PanelWord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// JSONL file, or a directory of `<doc_id>.txt` files with a metadata TSV.
    pub corpus: Option<PathBuf>,
    /// Metadata TSV for a text directory; defaults to `<corpus>/metadata.tsv`.
    pub metadata: Option<PathBuf>,
    pub workdir: PathBuf,
    /// `"builtin"`, `"none"`, or a path to a one-word-per-line file.
    pub stoplist: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Slicing {
    pub kinds: Vec<SliceKind>,
    pub first_century: i32,
    pub last_century: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainOn {
    Full,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Balance {
    pub enabled: bool,
    /// Token target per century; unset uses the smallest viable century.
    pub target_tokens: Option<usize>,
    /// Which century slices the embeddings are trained on.
    pub train_on: TrainOn,
}

/// Training hyperparameters. The run-level `seed` is used for every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    pub negative: usize,
    pub epochs: usize,
    pub subsample_threshold: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    pub negative_power: f64,
    pub deterministic: bool,
    pub workers: usize,
    /// Poets whose models use `low_data_min_count` instead of `min_count`.
    pub low_data_poets: Vec<String>,
    pub low_data_min_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Each century onto its predecessor's aligned space.
    Consecutive,
    /// Every century directly onto the global reference model.
    ReferenceChained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Alignment {
    pub mode: AlignmentMode,
    /// Keep only the top-N shared words by frequency as anchors.
    pub anchor_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Century slices below this many tokens are flagged sparse-caution.
    pub viability_tokens: usize,
    pub poet_eligibility_tokens: usize,
    pub pressure: PressureThresholds,
}

/// Graph-role label rule for the panel summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoleRule {
    /// Low-data caution when the word is missing from more than this share
    /// of century models.
    pub low_data_share: f64,
    /// Community-migrant when mean reallocation is above this.
    pub migrant_reallocation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSettings {
    pub heatmap: bool,
}

/// Parameters of the `synth` stage's planted benchmark corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub vocab_size: usize,
    pub slices: usize,
    pub sentences_per_slice: usize,
    pub per_behavior: usize,
}

/// A tracked word: display label, surface form in the corpus, and the
/// lexical field it is reported under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelWord {
    pub word: String,
    pub token: String,
    pub field: String,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: None,
            metadata: None,
            workdir: PathBuf::from("semshift-work"),
            stoplist: "builtin".into(),
        }
    }
}

impl Default for Slicing {
    fn default() -> Self {
        Slicing {
            kinds: vec![SliceKind::Century, SliceKind::Poet],
            first_century: 1,
            last_century: 21,
        }
    }
}

impl Default for Balance {
    fn default() -> Self {
        Balance {
            enabled: true,
            target_tokens: None,
            train_on: TrainOn::Full,
        }
    }
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSettings {
            dim: t.dim,
            window: t.window,
            min_count: t.min_count,
            negative: t.negative,
            epochs: t.epochs,
            subsample_threshold: t.subsample_threshold,
            lr_start: t.lr_start,
            lr_end: t.lr_end,
            negative_power: t.negative_power,
            deterministic: t.deterministic,
            workers: t.workers,
            low_data_poets: Vec::new(),
            low_data_min_count: 5,
        }
    }
}

impl Default for Alignment {
    fn default() -> Self {
        Alignment {
            mode: AlignmentMode::Consecutive,
            anchor_cap: None,
        }
    }
}

impl Default for GraphSettings {
    fn default() -> Self {
        GraphSettings { k: DEFAULT_K }
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            viability_tokens: 100_000,
            poet_eligibility_tokens: DEFAULT_ELIGIBILITY_TOKENS,
            pressure: PressureThresholds::default(),
        }
    }
}

impl Default for RoleRule {
    fn default() -> Self {
        RoleRule {
            low_data_share: 0.5,
            migrant_reallocation: 0.5,
        }
    }
}

impl Default for ReportSettings {
    fn default() -> Self {
        ReportSettings { heatmap: true }
    }
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings {
            vocab_size: 2000,
            slices: 3,
            sentences_per_slice: 200_000,
            per_behavior: 5,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            slicing: Slicing::default(),
            balance: Balance::default(),
            train: TrainSettings::default(),
            alignment: Alignment::default(),
            graph: GraphSettings::default(),
            thresholds: Thresholds::default(),
            roles: RoleRule::default(),
            report: ReportSettings::default(),
            synth: SynthSettings::default(),
            seed: 42,
            panel: default_panel(),
        }
    }
}

/// The twenty-word Persian panel: reference words, the symbolic field and
/// the mystical layer.
pub fn default_panel() -> Vec<PanelWord> {
    let fields: [(&str, &[(&str, &str)]); 3] = [
        (
            "Reference words",
            &[("khaak", "خاک"), ("shab", "شب"), ("mey", "می"), ("baadeh", "باده"), ("del", "دل")],
        ),
        (
            "Symbolic field",
            &[
                ("eshgh", "عشق"),
                ("jaan", "جان"),
                ("cheshm", "چشم"),
                ("aatash", "آتش"),
                ("darvish", "درویش"),
                ("shah", "شاه"),
                ("rah", "راه"),
                ("saba", "صبا"),
                ("gham", "غم"),
                ("rooz", "روز"),
            ],
        ),
        (
            "Mystical layer",
            &[
                ("fanaa", "فنا"),
                ("baqaa", "بقا"),
                ("tariqat", "طریقت"),
                ("haqiqat", "حقیقت"),
                ("soofi", "صوفی"),
            ],
        ),
    ];
    fields
        .iter()
        .flat_map(|(field, words)| {
            words.iter().map(move |(word, token)| PanelWord {
                word: (*word).into(),
                token: (*token).into(),
                field: (*field).into(),
            })
        })
        .collect()
}

fn config_error(reason: impl Into<String>) -> Error {
    Error::Config(reason.into())
}

impl PipelineConfig {
    /// Parses a TOML file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_error(e.to_string()))
    }

    fn rebase(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.paths.corpus.as_mut() {
            join(p);
        }
        if let Some(p) = self.paths.metadata.as_mut() {
            join(p);
        }
        join(&mut self.paths.workdir);
        if !matches!(self.paths.stoplist.as_str(), "builtin" | "none") {
            let mut p = PathBuf::from(&self.paths.stoplist);
            join(&mut p);
            self.paths.stoplist = p.to_string_lossy().into_owned();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if t.viability_tokens == 0 || t.poet_eligibility_tokens == 0 {
            return Err(config_error("viability and poet eligibility thresholds must be positive"));
        }
        let p = &t.pressure;
        if !(p.low > 0.0 && p.low <= p.high && p.high.is_finite()) {
            return Err(config_error("pressure thresholds need 0 < low <= high"));
        }
        if self.graph.k == 0 {
            return Err(config_error("graph.k must be positive"));
        }
        if self.balance.target_tokens == Some(0) {
            return Err(config_error("balance.target_tokens must be positive"));
        }
        if self.train.low_data_min_count == 0 {
            return Err(config_error("train.low_data_min_count must be positive"));
        }
        let r = &self.roles;
        if !(r.low_data_share > 0.0 && r.low_data_share < 1.0 && r.migrant_reallocation > 0.0) {
            return Err(config_error("roles: low_data_share must lie in (0, 1), migrant_reallocation above 0"));
        }
        if self.panel.is_empty() {
            return Err(config_error("panel must not be empty"));
        }
        let mut seen = HashSet::new();
        for w in &self.panel {
            if w.word.is_empty() || w.field.is_empty() || w.panel_token().is_empty() {
                return Err(config_error(format!("panel entry {:?} needs word, token and field", w.word)));
            }
            if !seen.insert(w.panel_token()) {
                return Err(config_error(format!("panel token {:?} listed twice", w.token)));
            }
        }
        if !self.slicing.kinds.contains(&SliceKind::Century) {
            return Err(config_error("slicing.kinds must include century"));
        }
        if self.slicing.first_century > self.slicing.last_century {
            return Err(config_error("slicing: first_century after last_century"));
        }
        self.model_config().validate()
    }

    /// Training config for century, reference and ordinary poet models.
    pub fn model_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            dim: t.dim,
            window: t.window,
            min_count: t.min_count,
            negative: t.negative,
            epochs: t.epochs,
            seed: self.seed,
            subsample_threshold: t.subsample_threshold,
            lr_start: t.lr_start,
            lr_end: t.lr_end,
            negative_power: t.negative_power,
            deterministic: t.deterministic,
            workers: t.workers,
        }
    }

    pub fn poet_model_config(&self, poet_id: &str) -> TrainConfig {
        let mut config = self.model_config();
        if self.train.low_data_poets.iter().any(|p| p == poet_id) {
            config.min_count = self.train.low_data_min_count;
        }
        config
    }

    pub fn stoplist(&self) -> Result<HashSet<String>> {
        let text = match self.paths.stoplist.as_str() {
            "none" => return Ok(HashSet::new()),
            "builtin" => BUILTIN_STOPLIST.to_owned(),
            path => std::fs::read_to_string(path).map_err(|e| config_error(format!("stoplist {path}: {e}")))?,
        };
        Ok(text
            .lines()
            .map(|l| normalize_text(l.split('#').next().unwrap_or_default()))
            .filter(|w| !w.is_empty())
            .collect())
    }

    /// Config for running the pipeline on a planted benchmark corpus: the
    /// planted words form the panel, each under its behavior as field.
    pub fn synthetic(spec: &SynthSpec, corpus: PathBuf, workdir: PathBuf) -> Self {
        let mut config = PipelineConfig::default();
        config.paths.corpus = Some(corpus);
        config.paths.workdir = workdir;
        config.paths.stoplist = "none".into();
        config.slicing.first_century = spec.first_century;
        config.slicing.last_century = spec.first_century + spec.n_slices as i32 - 1;
        config.train.dim = 50;
        config.train.epochs = 3;
        config.train.negative = 5;
        config.train.min_count = 5;
        config.seed = spec.seed;
        config.panel = [Behavior::Rewire, Behavior::Migrate, Behavior::Stable]
            .into_iter()
            .flat_map(|b| spec.planted_words(b))
            .map(|p| PanelWord {
                word: p.word.clone(),
                token: p.word.clone(),
                field: p.behavior.as_str().into(),
            })
            .collect();
        config
    }
}

impl PanelWord {
    /// The token as it appears after corpus normalization.
    pub fn panel_token(&self) -> String {
        normalize_text(&self.token)
    }
}
