//! Skip-gram with negative sampling, cosine queries and model persistence.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusSlice;
use crate::{Error, Result};

pub const REFERENCE_SLICE: &str = "reference";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dim: usize,
    pub window: usize,
    pub min_count: u64,
    pub negative: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Frequent-word subsampling threshold; 0 disables subsampling.
    pub subsample_threshold: f64,
    pub lr_start: f64,
    pub lr_end: f64,
    /// Unigram exponent of the negative-sampling distribution.
    pub negative_power: f64,
    /// Single worker with seeded draws. When false, `workers` threads update
    /// shared weights without locking and results are not reproducible.
    pub deterministic: bool,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            window: 5,
            min_count: 15,
            negative: 10,
            epochs: 15,
            seed: 42,
            subsample_threshold: 1e-3,
            lr_start: 0.025,
            lr_end: 0.0001,
            negative_power: 0.75,
            deterministic: true,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("train config: {what}")));
        if self.dim == 0 {
            return bad("dim must be > 0");
        }
        if self.window == 0 {
            return bad("window must be >= 1");
        }
        if self.negative == 0 {
            return bad("negative must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.min_count == 0 {
            return bad("min_count must be >= 1");
        }
        if !(self.lr_start > 0.0 && self.lr_end >= 0.0 && self.lr_end <= self.lr_start) {
            return bad("need 0 <= lr_end <= lr_start and lr_start > 0");
        }
        if self.subsample_threshold < 0.0 {
            return bad("subsample_threshold must be >= 0");
        }
        Ok(())
    }
}

/// Word vectors of one slice. Rows are indexed densely by vocabulary order
/// (descending count, then lexicographic).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    slice_id: String,
    words: Vec<String>,
    index: HashMap<String, usize>,
    frequency: Vec<u64>,
    dim: usize,
    vectors: Vec<f64>,
    config: TrainConfig,
}

impl EmbeddingModel {
    pub fn from_parts(
        slice_id: impl Into<String>,
        words: Vec<String>,
        frequency: Vec<u64>,
        dim: usize,
        vectors: Vec<f64>,
        config: TrainConfig,
    ) -> Result<Self> {
        if vectors.len() != words.len() * dim {
            return Err(Error::DimensionMismatch(vectors.len(), words.len() * dim));
        }
        if frequency.len() != words.len() {
            return Err(Error::DimensionMismatch(frequency.len(), words.len()));
        }
        let index: HashMap<String, usize> = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        if index.len() != words.len() {
            return Err(Error::Config("duplicate vocabulary word".into()));
        }
        Ok(EmbeddingModel {
            slice_id: slice_id.into(),
            words,
            index,
            frequency,
            dim,
            vectors,
            config,
        })
    }

    pub fn slice_id(&self) -> &str {
        &self.slice_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn frequency(&self, word: &str) -> Option<u64> {
        self.index_of(word).map(|i| self.frequency[i])
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequency
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.row(i))
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub fn vector_or_oov(&self, word: &str) -> Result<&[f64]> {
        self.vector(word).ok_or_else(|| Error::OutOfVocabulary {
            word: word.to_owned(),
            slice: self.slice_id.clone(),
        })
    }

    /// Copy of the model with every row replaced by `f(row)`.
    pub fn map_rows(&self, mut f: impl FnMut(&[f64], &mut [f64])) -> EmbeddingModel {
        let mut vectors = vec![0.0; self.vectors.len()];
        for (src, dst) in self
            .vectors
            .chunks_exact(self.dim)
            .zip(vectors.chunks_exact_mut(self.dim))
        {
            f(src, dst);
        }
        EmbeddingModel {
            vectors,
            ..self.clone()
        }
    }

    pub fn with_slice_id(mut self, slice_id: impl Into<String>) -> Self {
        self.slice_id = slice_id.into();
        self
    }

    pub fn cosine_words(&self, a: &str, b: &str) -> Result<f64> {
        cosine(self.vector_or_oov(a)?, self.vector_or_oov(b)?)
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Unit-normalized copy of a model's rows for repeated neighbor queries.
/// Neighbor lists never include the query word or any excluded word.
pub struct NeighborIndex<'m> {
    model: &'m EmbeddingModel,
    unit: Vec<f64>,
    excluded: Vec<bool>,
}

impl<'m> NeighborIndex<'m> {
    pub fn new(model: &'m EmbeddingModel, exclude: &HashSet<String>) -> Self {
        let dim = model.dim;
        let mut unit = model.vectors.clone();
        for row in unit.chunks_exact_mut(dim.max(1)) {
            let n = norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
        let excluded = model.words.iter().map(|w| exclude.contains(w)).collect();
        NeighborIndex {
            model,
            unit,
            excluded,
        }
    }

    pub fn model(&self) -> &'m EmbeddingModel {
        self.model
    }

    pub fn is_excluded(&self, i: usize) -> bool {
        self.excluded[i]
    }

    fn unit_row(&self, i: usize) -> &[f64] {
        &self.unit[i * self.model.dim..(i + 1) * self.model.dim]
    }

    /// Cosine between two vocabulary rows.
    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        dot(self.unit_row(a), self.unit_row(b))
    }

    /// Top-k rows by cosine, ties broken by word order.
    pub fn top_k_indices(&self, query: usize, k: usize) -> Vec<(usize, f64)> {
        let q = self.unit_row(query);
        let mut cands: Vec<(usize, f64)> = (0..self.model.len())
            .filter(|&j| j != query && !self.excluded[j])
            .map(|j| (j, dot(q, self.unit_row(j))))
            .collect();
        let words = &self.model.words;
        let order = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1).then_with(|| words[a.0].cmp(&words[b.0]))
        };
        if k == 0 {
            return Vec::new();
        }
        if cands.len() > k {
            cands.select_nth_unstable_by(k - 1, order);
            cands.truncate(k);
        }
        cands.sort_by(order);
        cands
    }

    pub fn top_k(&self, word: &str, k: usize) -> Result<Vec<(String, f64)>> {
        let i = self.model.index_of(word).ok_or_else(|| Error::OutOfVocabulary {
            word: word.to_owned(),
            slice: self.model.slice_id.clone(),
        })?;
        Ok(self
            .top_k_indices(i, k)
            .into_iter()
            .map(|(j, s)| (self.model.words[j].clone(), s))
            .collect())
    }
}

pub fn top_k_neighbors(
    model: &EmbeddingModel,
    word: &str,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<(String, f64)>> {
    NeighborIndex::new(model, exclude).top_k(word, k)
}

pub fn train(slice: &CorpusSlice, config: &TrainConfig) -> Result<EmbeddingModel> {
    let sentences: Vec<&[String]> = slice.sentences().collect();
    train_sentences(&slice.slice_id, &sentences, config)
}

/// One model over the concatenation of `slices`, in the order given.
pub fn train_global_reference(
    slices: &[CorpusSlice],
    config: &TrainConfig,
) -> Result<EmbeddingModel> {
    if slices.is_empty() {
        return Err(Error::NoInput);
    }
    let sentences: Vec<&[String]> = slices.iter().flat_map(|s| s.sentences()).collect();
    train_sentences(REFERENCE_SLICE, &sentences, config)
}

struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
}

fn build_vocab(sentences: &[&[String]], min_count: u64) -> Vocab {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for w in s.iter() {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts.into_iter().filter(|&(_, c)| c >= min_count).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocab {
        words: kept.iter().map(|(w, _)| (*w).to_owned()).collect(),
        counts: kept.iter().map(|&(_, c)| c).collect(),
    }
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
fn dot32(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Everything the SGD loop needs that does not change during training.
struct Sgns<'a> {
    config: &'a TrainConfig,
    corpus: Vec<Vec<u32>>,
    keep_prob: Vec<f32>,
    negatives: WeightedAliasIndex<f64>,
    /// Tokens visited per epoch, for the learning-rate schedule.
    epoch_words: u64,
}

impl Sgns<'_> {
    fn learning_rate(&self, processed: u64) -> f32 {
        let budget = (self.epoch_words * self.config.epochs as u64).max(1) as f64;
        let progress = (processed as f64 / budget).min(1.0);
        let lr = self.config.lr_start - (self.config.lr_start - self.config.lr_end) * progress;
        lr.max(self.config.lr_end) as f32
    }

    /// Subsamples one sentence and emits its (context, center) pairs.
    fn pairs(&self, sentence: &[u32], rng: &mut ChaCha8Rng, kept: &mut Vec<u32>, out: &mut Vec<(u32, u32)>) {
        kept.clear();
        out.clear();
        for &w in sentence {
            let p = self.keep_prob[w as usize];
            if p >= 1.0 || rng.random::<f32>() < p {
                kept.push(w);
            }
        }
        let window = self.config.window;
        for (pos, &center) in kept.iter().enumerate() {
            let reach = window - rng.random_range(0..window);
            let lo = pos.saturating_sub(reach);
            let hi = (pos + reach).min(kept.len() - 1);
            for (c, &context) in kept.iter().enumerate().take(hi + 1).skip(lo) {
                if c != pos {
                    out.push((context, center));
                }
            }
        }
    }

    fn sample_targets(&self, center: u32, rng: &mut ChaCha8Rng, targets: &mut Vec<(u32, f32)>) {
        targets.clear();
        targets.push((center, 1.0));
        for _ in 0..self.config.negative {
            let t = self.negatives.sample(rng) as u32;
            if t != center {
                targets.push((t, 0.0));
            }
        }
    }
}

fn prepare<'a>(sentences: &[&[String]], config: &'a TrainConfig, vocab: &Vocab) -> Result<Sgns<'a>> {
    let index: HashMap<&str, u32> = vocab
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i as u32))
        .collect();
    let corpus: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| index.get(w.as_str()).copied()).collect::<Vec<_>>())
        .filter(|s: &Vec<u32>| s.len() > 1)
        .collect();
    let total_words: u64 = vocab.counts.iter().sum();
    let threshold = config.subsample_threshold * total_words as f64;
    let keep_prob = vocab
        .counts
        .iter()
        .map(|&c| {
            if threshold <= 0.0 {
                1.0
            } else {
                let c = c as f64;
                (((c / threshold).sqrt() + 1.0) * threshold / c) as f32
            }
        })
        .collect();
    let weights: Vec<f64> = vocab
        .counts
        .iter()
        .map(|&c| (c as f64).powf(config.negative_power))
        .collect();
    let negatives = WeightedAliasIndex::new(weights)
        .map_err(|e| Error::Config(format!("negative-sampling table: {e}")))?;
    let epoch_words = corpus.iter().map(|s| s.len() as u64).sum();
    Ok(Sgns {
        config,
        corpus,
        keep_prob,
        negatives,
        epoch_words,
    })
}

fn init_input(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim)
        .map(|_| (rng.random::<f32>() - 0.5) / dim as f32)
        .collect()
}

fn train_sentences(
    slice_id: &str,
    sentences: &[&[String]],
    config: &TrainConfig,
) -> Result<EmbeddingModel> {
    config.validate()?;
    let vocab = build_vocab(sentences, config.min_count);
    if vocab.words.is_empty() {
        return Err(Error::BelowLexicalThreshold {
            slice: slice_id.to_owned(),
        });
    }
    let sgns = prepare(sentences, config, &vocab)?;
    let dim = config.dim;
    let input = if config.deterministic || config.workers <= 1 {
        train_sequential(&sgns, vocab.words.len(), dim)
    } else {
        train_hogwild(&sgns, vocab.words.len(), dim)
    };

    let vectors: Vec<f64> = input.into_iter().map(f64::from).collect();
    if vectors.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config(format!(
            "training diverged on slice {slice_id}; lower lr_start"
        )));
    }
    EmbeddingModel::from_parts(slice_id, vocab.words, vocab.counts, dim, vectors, config.clone())
}

fn train_sequential(sgns: &Sgns<'_>, n: usize, dim: usize) -> Vec<f32> {
    let config = sgns.config;
    let mut input = init_input(n, dim, config.seed);
    let mut output = vec![0.0f32; n * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut grad = vec![0.0f32; dim];
    let (mut kept, mut pairs, mut targets) = (Vec::new(), Vec::new(), Vec::new());
    let mut processed = 0u64;

    for _ in 0..config.epochs {
        for sentence in &sgns.corpus {
            let lr = sgns.learning_rate(processed);
            processed += sentence.len() as u64;
            sgns.pairs(sentence, &mut rng, &mut kept, &mut pairs);
            for &(context, center) in &pairs {
                sgns.sample_targets(center, &mut rng, &mut targets);
                let l1 = context as usize * dim;
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &(t, label) in &targets {
                    let l2 = t as usize * dim;
                    let (src, out_row) = (&input[l1..l1 + dim], &mut output[l2..l2 + dim]);
                    let g = (label - sigmoid(dot32(src, out_row))) * lr;
                    for d in 0..dim {
                        grad[d] += g * out_row[d];
                        out_row[d] += g * src[d];
                    }
                }
                for (x, g) in input[l1..l1 + dim].iter_mut().zip(&grad) {
                    *x += g;
                }
            }
        }
    }
    input
}

/// Lock-free multi-worker training over shared weights. Each worker owns a
/// contiguous share of the sentences and a seed derived from its rank.
fn train_hogwild(sgns: &Sgns<'_>, n: usize, dim: usize) -> Vec<f32> {
    let config = sgns.config;
    let to_atomic = |v: Vec<f32>| -> Vec<AtomicU32> {
        v.into_iter().map(|x| AtomicU32::new(x.to_bits())).collect()
    };
    let input = to_atomic(init_input(n, dim, config.seed));
    let output = to_atomic(vec![0.0f32; n * dim]);
    let processed = AtomicU64::new(0);
    let workers = config.workers.max(1);
    let share = sgns.corpus.len().div_ceil(workers).max(1);

    std::thread::scope(|scope| {
        for (rank, chunk) in sgns.corpus.chunks(share).enumerate() {
            let (input, output, processed) = (&input, &output, &processed);
            scope.spawn(move || {
                let load = |m: &[AtomicU32], at: usize, buf: &mut [f32]| {
                    for (d, b) in buf.iter_mut().enumerate() {
                        *b = f32::from_bits(m[at + d].load(Ordering::Relaxed));
                    }
                };
                let store = |m: &[AtomicU32], at: usize, buf: &[f32]| {
                    for (d, b) in buf.iter().enumerate() {
                        m[at + d].store(b.to_bits(), Ordering::Relaxed);
                    }
                };
                let mut rng =
                    ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1 + rank as u64));
                let (mut src, mut row, mut grad) =
                    (vec![0.0f32; dim], vec![0.0f32; dim], vec![0.0f32; dim]);
                let (mut kept, mut pairs, mut targets) = (Vec::new(), Vec::new(), Vec::new());
                for _ in 0..config.epochs {
                    for sentence in chunk {
                        let done =
                            processed.fetch_add(sentence.len() as u64, Ordering::Relaxed);
                        let lr = sgns.learning_rate(done);
                        sgns.pairs(sentence, &mut rng, &mut kept, &mut pairs);
                        for &(context, center) in &pairs {
                            sgns.sample_targets(center, &mut rng, &mut targets);
                            let l1 = context as usize * dim;
                            load(input, l1, &mut src);
                            grad.iter_mut().for_each(|g| *g = 0.0);
                            for &(t, label) in &targets {
                                let l2 = t as usize * dim;
                                load(output, l2, &mut row);
                                let g = (label - sigmoid(dot32(&src, &row))) * lr;
                                for d in 0..dim {
                                    grad[d] += g * row[d];
                                    row[d] += g * src[d];
                                }
                                store(output, l2, &row);
                            }
                            for (x, g) in src.iter_mut().zip(&grad) {
                                *x += g;
                            }
                            store(input, l1, &src);
                        }
                    }
                }
            });
        }
    });
    input
        .into_iter()
        .map(|a| f32::from_bits(a.into_inner()))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    slice_id: String,
    config: TrainConfig,
    frequency: BTreeMap<String, u64>,
}

/// Writes `<stem>.vec` in word2vec text format and `<stem>.json` with the
/// slice id, training config and frequency table.
pub fn save_model(model: &EmbeddingModel, dir: &Path, stem: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join(format!("{stem}.vec")))?);
    writeln!(w, "{} {}", model.len(), model.dim)?;
    for (i, word) in model.words.iter().enumerate() {
        write!(w, "{word}")?;
        for x in model.row(i) {
            write!(w, " {x}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let sidecar = Sidecar {
        slice_id: model.slice_id.clone(),
        config: model.config.clone(),
        frequency: model
            .words
            .iter()
            .cloned()
            .zip(model.frequency.iter().copied())
            .collect(),
    };
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

pub fn load_model(dir: &Path, stem: &str) -> Result<EmbeddingModel> {
    let vec_path = dir.join(format!("{stem}.vec"));
    let malformed = |reason: String| Error::Malformed {
        path: vec_path.clone(),
        reason,
    };
    let sidecar: Sidecar =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let mut lines = BufReader::new(fs::File::open(&vec_path)?).lines();
    let header = lines.next().ok_or_else(|| malformed("empty file".into()))??;
    let mut parts = header.split_whitespace().map(str::parse::<usize>);
    let (Some(Ok(n)), Some(Ok(dim))) = (parts.next(), parts.next()) else {
        return Err(malformed(format!("bad header {header:?}")));
    };
    let mut words = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n * dim);
    for line in lines {
        let line = line?;
        let mut fields = line.split(' ');
        let word = fields.next().unwrap_or_default().to_owned();
        let before = vectors.len();
        for f in fields {
            vectors.push(f.parse::<f64>().map_err(|e| malformed(format!("{word}: {e}")))?);
        }
        if vectors.len() - before != dim {
            return Err(malformed(format!("{word}: expected {dim} values")));
        }
        words.push(word);
    }
    if words.len() != n {
        return Err(malformed(format!("expected {n} rows, found {}", words.len())));
    }
    let frequency = words
        .iter()
        .map(|w| sidecar.frequency.get(w).copied().unwrap_or(0))
        .collect();
    EmbeddingModel::from_parts(sidecar.slice_id, words, frequency, dim, vectors, sidecar.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{SliceKind, Verse, Viability};
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, prop_assume, proptest};
    use rand::Rng;

    fn slice(id: &str, sentences: Vec<Vec<String>>) -> CorpusSlice {
        let token_count = sentences.iter().map(Vec::len).sum();
        CorpusSlice {
            slice_id: id.into(),
            kind: SliceKind::Century,
            verses: sentences
                .into_iter()
                .map(|tokens| Verse {
                    poet_id: "p".into(),
                    tokens,
                })
                .collect(),
            token_count,
            poem_count: 1,
            viability: Viability::Full,
        }
    }

    fn toy(words: &[(&str, [f64; 2])]) -> EmbeddingModel {
        EmbeddingModel::from_parts(
            "toy",
            words.iter().map(|(w, _)| (*w).to_owned()).collect(),
            vec![1; words.len()],
            2,
            words.iter().flat_map(|(_, v)| *v).collect(),
            TrainConfig::default(),
        )
        .unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig {
            dim: 16,
            epochs: 3,
            min_count: 5,
            negative: 5,
            ..TrainConfig::default()
        }
    }

    /// Two topic clusters: a-words co-occur with a-words, b-words with b-words.
    fn two_topics(n: usize) -> CorpusSlice {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sentences = (0..n)
            .map(|_| {
                let topic = if rng.random::<bool>() { "a" } else { "b" };
                (0..6)
                    .map(|_| format!("{topic}{}", rng.random_range(1..=5)))
                    .collect()
            })
            .collect();
        slice("s", sentences)
    }

    #[test]
    fn cosine_identities() {
        let u = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = u.iter().map(|x| -x).collect();
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        assert!((cosine(&u, &neg).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector)));
        assert!(matches!(
            cosine(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch(1, 2))
        ));
    }

    #[test]
    fn top_k_examples() {
        // cos(w, a) = 0.9, cos(w, b) = 0.2
        let a = [0.9, (1.0f64 - 0.81).sqrt()];
        let b = [0.2, (1.0f64 - 0.04).sqrt()];
        let m = toy(&[("w", [1.0, 0.0]), ("a", a), ("b", b)]);
        let none = HashSet::new();
        let top = top_k_neighbors(&m, "w", 1, &none).unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].0, "a");
        assert!((top[0].1 - 0.9).abs() < 1e-12);

        let ex: HashSet<String> = ["a".to_owned()].into();
        let top = top_k_neighbors(&m, "w", 1, &ex).unwrap();
        assert_eq!(top[0].0, "b");
        assert!((top[0].1 - 0.2).abs() < 1e-12);

        // vocabulary exhausted
        assert_eq!(top_k_neighbors(&m, "w", 10, &none).unwrap().len(), 2);
    }

    #[test]
    fn top_k_ties_break_lexicographically() {
        let m = toy(&[("w", [1.0, 0.0]), ("b", [1.0, 1.0]), ("a", [1.0, -1.0])]);
        let top = top_k_neighbors(&m, "w", 2, &HashSet::new()).unwrap();
        assert_eq!(top[0].0, "a");
        assert_eq!(top[1].0, "b");
    }

    #[test]
    fn oov_query_names_the_slice() {
        let m = toy(&[("w", [1.0, 0.0])]);
        match top_k_neighbors(&m, "zz", 1, &HashSet::new()) {
            Err(Error::OutOfVocabulary { word, slice }) => {
                assert_eq!(word, "zz");
                assert_eq!(slice, "toy");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn topic_clusters_are_recovered() {
        let model = train(&two_topics(10_000), &small_config()).unwrap();
        let within = model.cosine_words("a1", "a2").unwrap();
        let across = model.cosine_words("a1", "b1").unwrap();
        assert!(within > across, "within {within} across {across}");
        for w in model.words() {
            let top = top_k_neighbors(&model, w, 4, &HashSet::new()).unwrap();
            assert!(top.iter().all(|(n, _)| n[..1] == w[..1]), "{w}: {top:?}");
        }
    }

    #[test]
    fn deterministic_training_is_bit_identical() {
        let s = two_topics(2_000);
        let a = train(&s, &small_config()).unwrap();
        let b = train(&s, &small_config()).unwrap();
        assert_eq!(a.vectors(), b.vectors());
        assert_eq!(a.words(), b.words());
    }

    #[test]
    fn hogwild_mode_trains() {
        let config = TrainConfig {
            deterministic: false,
            workers: 2,
            ..small_config()
        };
        let model = train(&two_topics(4_000), &config).unwrap();
        assert!(model.vectors().iter().all(|x| x.is_finite()));
        assert!(model.cosine_words("a1", "a2").unwrap() > model.cosine_words("a1", "b1").unwrap());
    }

    #[test]
    fn slice_below_min_count_errors() {
        let s = slice("thin", vec![vec!["x".into(), "y".into()]]);
        assert!(matches!(
            train(&s, &small_config()),
            Err(Error::BelowLexicalThreshold { slice }) if slice == "thin"
        ));
    }

    fn repeat(word: &str, n: usize) -> Vec<Vec<String>> {
        (0..n).map(|_| vec![word.to_owned(), format!("{word}x")]).collect()
    }

    #[test]
    fn reference_of_one_slice_has_same_vocabulary() {
        let s = two_topics(1_000);
        let one = train(&s, &small_config()).unwrap();
        let reference = train_global_reference(std::slice::from_ref(&s), &small_config()).unwrap();
        assert_eq!(one.words(), reference.words());
        assert_eq!(reference.slice_id(), REFERENCE_SLICE);
    }

    #[test]
    fn reference_vocabulary_is_the_union_over_combined_counts() {
        let config = TrainConfig {
            min_count: 15,
            ..small_config()
        };
        let mut first = repeat("p", 20);
        first.extend(repeat("shared", 8));
        let mut second = repeat("q", 20);
        second.extend(repeat("shared", 8));
        let (s1, s2) = (slice("1", first), slice("2", second));

        let m1 = train(&s1, &config).unwrap();
        let m2 = train(&s2, &config).unwrap();
        let reference = train_global_reference(&[s1, s2], &config).unwrap();
        assert!(!m1.contains("shared") && !m2.contains("shared"));
        assert!(reference.contains("shared"));
        assert_eq!(reference.frequency("shared"), Some(16));
        for w in ["p", "px", "q", "qx"] {
            assert!(reference.contains(w));
        }
    }

    #[test]
    fn frequency_invariants() {
        let s = two_topics(500);
        let m = train(&s, &small_config()).unwrap();
        assert!(m.frequencies().iter().sum::<u64>() <= s.token_count as u64);
        assert!(m.frequencies().iter().all(|&c| c >= 5));
    }

    #[test]
    fn text_format_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = train(&two_topics(500), &small_config()).unwrap();
        save_model(&m, dir.path(), "s").unwrap();
        let header = fs::read_to_string(dir.path().join("s.vec")).unwrap();
        assert!(header.starts_with(&format!("{} 16\n", m.len())));
        let back = load_model(dir.path(), "s").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn invalid_configs_rejected() {
        for c in [
            TrainConfig { dim: 0, ..TrainConfig::default() },
            TrainConfig { window: 0, ..TrainConfig::default() },
            TrainConfig { negative: 0, ..TrainConfig::default() },
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { min_count: 0, ..TrainConfig::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }

    proptest! {
        #[test]
        fn cosine_is_symmetric_and_bounded(
            u in prop::collection::vec(-10.0f64..10.0, 5),
            v in prop::collection::vec(-10.0f64..10.0, 5),
        ) {
            prop_assume!(norm(&u) > 1e-9 && norm(&v) > 1e-9);
            let (a, b) = (cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
            prop_assert_eq!(a, b);
            prop_assert!(a.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn neighbors_skip_query_and_excluded(
            rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 4..20),
            k in 1usize..8,
            ex in prop::collection::btree_set(0usize..20, 0..4),
        ) {
            let words: Vec<String> = (0..rows.len()).map(|i| format!("w{i}")).collect();
            let model = EmbeddingModel::from_parts(
                "p", words.clone(), vec![1; rows.len()], 3, rows.concat(), TrainConfig::default(),
            ).unwrap();
            let exclude: HashSet<String> = ex.iter().map(|i| format!("w{i}")).collect();
            let top = top_k_neighbors(&model, "w0", k, &exclude).unwrap();
            let eligible = words.iter().skip(1).filter(|w| !exclude.contains(*w)).count();
            prop_assert_eq!(top.len(), k.min(eligible));
            for (w, _) in &top {
                prop_assert!(w != "w0" && !exclude.contains(w));
            }
            prop_assert!(top.windows(2).all(|p| p[0].1 >= p[1].1));
        }
    }
}
