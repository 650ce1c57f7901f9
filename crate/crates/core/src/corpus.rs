//! Ingestion, normalization, slicing and balancing of the raw corpus.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ZWNJ: char = '\u{200C}';

/// One poem as it arrives from the corpus: verse lines separated by newlines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub poet_id: String,
    pub century: i32,
    pub text: String,
}

impl RawDocument {
    pub fn validate(&self, centuries: &RangeInclusive<i32>) -> Result<()> {
        let invalid = |reason: String| Error::InvalidDocument {
            doc_id: self.doc_id.clone(),
            reason,
        };
        if !centuries.contains(&self.century) {
            return Err(invalid(format!(
                "century {} outside {}..={}",
                self.century,
                centuries.start(),
                centuries.end()
            )));
        }
        if self.poet_id.trim().is_empty() {
            return Err(invalid("empty poet_id".into()));
        }
        if self.text.trim().is_empty() {
            return Err(invalid("empty text".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    Century,
    Poet,
}

impl SliceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceKind::Century => "century",
            SliceKind::Poet => "poet",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Viability {
    Full,
    SparseCaution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verse {
    pub poet_id: String,
    pub tokens: Vec<String>,
}

/// Tokenized verses of one century or one poet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSlice {
    pub slice_id: String,
    pub kind: SliceKind,
    pub verses: Vec<Verse>,
    pub token_count: usize,
    pub poem_count: usize,
    pub viability: Viability,
}

impl CorpusSlice {
    pub fn sentences(&self) -> impl Iterator<Item = &[String]> {
        self.verses.iter().map(|v| v.tokens.as_slice())
    }

    pub fn max_verse_len(&self) -> usize {
        self.verses.iter().map(|v| v.tokens.len()).max().unwrap_or(0)
    }
}

/// Record of which verses a balanced slice kept, in selection order.
///
/// `selection` holds `(poet_id, verse_index)` where the index points into the
/// verses of the unbalanced slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub slice_id: String,
    pub target_tokens: usize,
    pub seed: u64,
    pub kept_in_full: bool,
    pub selection: Vec<(String, usize)>,
}

fn is_harakat(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{0652}' | '\u{0670}')
}

fn is_invisible_format(c: char) -> bool {
    matches!(c, '\u{200B}' | '\u{200D}'..='\u{200F}' | '\u{202A}'..='\u{202E}' | '\u{FEFF}')
}

fn persian_letter(c: char) -> char {
    match c {
        '\u{064A}' | '\u{0649}' => '\u{06CC}', // yeh
        '\u{0643}' => '\u{06A9}',              // kaf
        '\u{0671}' | '\u{0623}' | '\u{0625}' => '\u{0627}',
        '\u{0629}' => '\u{0647}',
        other => other,
    }
}

/// Maps Arabic letter variants to Persian, strips harakat and tatweel,
/// turns punctuation into single spaces and keeps word-internal ZWNJ.
pub fn normalize_text(raw: &str) -> String {
    let mut spaced = String::with_capacity(raw.len());
    for c in raw.chars() {
        if is_harakat(c) || c == '\u{0640}' || is_invisible_format(c) {
            continue;
        }
        let c = persian_letter(c);
        if c == ZWNJ {
            if !spaced.ends_with(ZWNJ) {
                spaced.push(ZWNJ);
            }
        } else if c.is_alphanumeric() {
            spaced.push(c);
        } else {
            spaced.push(' ');
        }
    }

    let mut out = String::with_capacity(spaced.len());
    for word in spaced.split_whitespace() {
        let word = word.trim_matches(ZWNJ);
        if word.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

/// Groups documents into one slice per century or per poet.
///
/// Each newline-separated line of a document is normalized and becomes one
/// verse; lines that normalize to nothing are dropped. Century slices are
/// ordered numerically, poet slices lexicographically.
pub fn build_slices(
    docs: &[RawDocument],
    kind: SliceKind,
    viability_threshold: usize,
) -> Result<Vec<CorpusSlice>> {
    if docs.is_empty() {
        return Err(Error::NoInput);
    }

    #[derive(PartialEq, Eq, PartialOrd, Ord)]
    enum Key {
        Century(i32),
        Poet(String),
    }

    let mut groups: BTreeMap<Key, (Vec<Verse>, usize)> = BTreeMap::new();
    for doc in docs {
        let key = match kind {
            SliceKind::Century => Key::Century(doc.century),
            SliceKind::Poet => Key::Poet(doc.poet_id.clone()),
        };
        let entry = groups.entry(key).or_default();
        entry.1 += 1;
        for line in doc.text.lines() {
            let tokens = tokenize(&normalize_text(line));
            if !tokens.is_empty() {
                entry.0.push(Verse {
                    poet_id: doc.poet_id.clone(),
                    tokens,
                });
            }
        }
    }

    Ok(groups
        .into_iter()
        .map(|(key, (verses, poem_count))| {
            let slice_id = match key {
                Key::Century(c) => c.to_string(),
                Key::Poet(p) => p,
            };
            make_slice(slice_id, kind, verses, poem_count, viability_threshold)
        })
        .collect())
}

fn make_slice(
    slice_id: String,
    kind: SliceKind,
    verses: Vec<Verse>,
    poem_count: usize,
    viability_threshold: usize,
) -> CorpusSlice {
    let token_count = verses.iter().map(|v| v.tokens.len()).sum();
    let viability = if token_count < viability_threshold {
        Viability::SparseCaution
    } else {
        Viability::Full
    };
    CorpusSlice {
        slice_id,
        kind,
        verses,
        token_count,
        poem_count,
        viability,
    }
}

/// Downsamples a slice to roughly `target_tokens` by round-robin over poets.
///
/// Poets are visited in lexicographic order and each contributes its next
/// verse in corpus order; selection stops at the first verse that brings the
/// total to `target_tokens` or beyond. Slices at or under the target are
/// returned unchanged with an empty plan. The procedure is order based; the
/// seed is only recorded.
pub fn balance_slice(
    slice: &CorpusSlice,
    target_tokens: usize,
    seed: u64,
) -> (CorpusSlice, BalancePlan) {
    let mut plan = BalancePlan {
        slice_id: slice.slice_id.clone(),
        target_tokens,
        seed,
        kept_in_full: true,
        selection: Vec::new(),
    };
    if slice.token_count <= target_tokens {
        return (slice.clone(), plan);
    }
    plan.kept_in_full = false;

    let mut by_poet: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, verse) in slice.verses.iter().enumerate() {
        by_poet.entry(verse.poet_id.as_str()).or_default().push(i);
    }

    let mut verses = Vec::new();
    let mut total = 0usize;
    'rounds: for round in 0.. {
        let mut any = false;
        for (poet, indices) in &by_poet {
            let Some(&idx) = indices.get(round) else {
                continue;
            };
            any = true;
            let verse = &slice.verses[idx];
            total += verse.tokens.len();
            plan.selection.push(((*poet).to_owned(), idx));
            verses.push(verse.clone());
            if total >= target_tokens {
                break 'rounds;
            }
        }
        if !any {
            break;
        }
    }

    let balanced = CorpusSlice {
        slice_id: slice.slice_id.clone(),
        kind: slice.kind,
        verses,
        token_count: total,
        poem_count: slice.poem_count,
        viability: slice.viability,
    };
    (balanced, plan)
}

/// Reads newline-delimited JSON records `{doc_id, poet_id, century, text}`.
pub fn read_jsonl(path: &Path) -> Result<Vec<RawDocument>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut docs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            path: path.to_owned(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_owned(),
            reason: format!("line {}: {e}", lineno + 1),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a directory of plain-text poems described by a TSV sidecar with
/// columns `doc_id`, `poet_id`, `century`; the text of `doc_id` is read from
/// `<dir>/<doc_id>.txt`.
pub fn read_text_dir(dir: &Path, metadata: &Path) -> Result<Vec<RawDocument>> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_path(metadata)?;
    let mut docs = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or_default();
        let century = field(2).parse::<i32>().map_err(|e| Error::Malformed {
            path: metadata.to_owned(),
            reason: format!("century {:?}: {e}", field(2)),
        })?;
        let doc_id = field(0).to_owned();
        let text = fs::read_to_string(dir.join(format!("{doc_id}.txt")))?;
        docs.push(RawDocument {
            doc_id,
            poet_id: field(1).to_owned(),
            century,
            text,
        });
    }
    Ok(docs)
}

/// Writes `<dir>/<slice_id>.txt` (one space-joined verse per line) and
/// `<dir>/<slice_id>.poets` (the poet of each verse, line for line).
pub fn write_slice(dir: &Path, slice: &CorpusSlice) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut text = BufWriter::new(fs::File::create(dir.join(format!("{}.txt", slice.slice_id)))?);
    let mut poets =
        BufWriter::new(fs::File::create(dir.join(format!("{}.poets", slice.slice_id)))?);
    for verse in &slice.verses {
        writeln!(text, "{}", verse.tokens.join(" "))?;
        writeln!(poets, "{}", verse.poet_id)?;
    }
    text.flush()?;
    poets.flush()?;
    Ok(())
}

/// Counts and flags of one slice, as listed in a slice manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceInfo {
    pub slice_id: String,
    pub kind: SliceKind,
    pub token_count: usize,
    pub poem_count: usize,
    pub verse_count: usize,
    pub viability: Viability,
}

impl From<&CorpusSlice> for SliceInfo {
    fn from(s: &CorpusSlice) -> Self {
        SliceInfo {
            slice_id: s.slice_id.clone(),
            kind: s.kind,
            token_count: s.token_count,
            poem_count: s.poem_count,
            verse_count: s.verses.len(),
            viability: s.viability,
        }
    }
}

pub fn read_slice(dir: &Path, info: &SliceInfo) -> Result<CorpusSlice> {
    let text_path = dir.join(format!("{}.txt", info.slice_id));
    let text = fs::read_to_string(&text_path)?;
    let poets = fs::read_to_string(dir.join(format!("{}.poets", info.slice_id)))?;
    let verses: Vec<Verse> = text
        .lines()
        .zip(poets.lines())
        .map(|(line, poet)| Verse {
            poet_id: poet.to_owned(),
            tokens: tokenize(line),
        })
        .collect();
    let token_count: usize = verses.iter().map(|v| v.tokens.len()).sum();
    if verses.len() != info.verse_count || token_count != info.token_count {
        return Err(Error::Malformed {
            path: text_path,
            reason: "slice file disagrees with manifest counts".into(),
        });
    }
    Ok(CorpusSlice {
        slice_id: info.slice_id.clone(),
        kind: info.kind,
        verses,
        token_count,
        poem_count: info.poem_count,
        viability: info.viability,
    })
}
