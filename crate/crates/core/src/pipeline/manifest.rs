//! Stage bookkeeping: content hashes of every stage's inputs and outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Slice,
    Balance,
    Train,
    Align,
    Graph,
    Metrics,
    Poet,
    Compare,
    Report,
    Synth,
}

impl Stage {
    /// Stages run by `all`, in order.
    pub const PIPELINE: [Stage; 10] = [
        Stage::Ingest,
        Stage::Slice,
        Stage::Balance,
        Stage::Train,
        Stage::Align,
        Stage::Graph,
        Stage::Metrics,
        Stage::Poet,
        Stage::Compare,
        Stage::Report,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Slice => "slice",
            Stage::Balance => "balance",
            Stage::Train => "train",
            Stage::Align => "align",
            Stage::Graph => "graph",
            Stage::Metrics => "metrics",
            Stage::Poet => "poet",
            Stage::Compare => "compare",
            Stage::Report => "report",
            Stage::Synth => "synth",
        }
    }

    /// Output directory under the workdir.
    pub fn dir(self) -> &'static str {
        self.as_str()
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::PIPELINE
            .into_iter()
            .chain([Stage::Synth])
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash over the stage's config fragment and its upstream outputs.
    pub input_hash: String,
    /// sha256 of every file the stage wrote, keyed by workdir-relative path.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Config in effect, without filesystem paths.
    pub config: serde_json::Value,
    /// Every modelling default in effect, by name.
    pub defaults: BTreeMap<String, String>,
    pub stages: BTreeMap<Stage, StageRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn new(config: serde_json::Value, defaults: BTreeMap<String, String>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            defaults,
            stages: BTreeMap::new(),
        }
    }

    pub fn load(workdir: &Path) -> Result<Option<Self>> {
        let path = workdir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map(Some).map_err(|e| Error::Malformed {
            path,
            reason: e.to_string(),
        })
    }

    pub fn save(&self, workdir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&workdir.join(MANIFEST_FILE), text.as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// All regular files under `dir`, as sorted paths relative to `dir` with
/// `/` separators.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("walk stays under root");
                let parts: Vec<_> = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect();
                out.push(parts.join("/"));
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if dir.is_dir() {
        walk(dir, dir, &mut out)?;
    }
    out.sort();
    Ok(out)
}

/// Hashes every file of a stage directory, keyed `<stage>/<relative path>`.
pub fn hash_stage_dir(workdir: &Path, stage: Stage) -> Result<BTreeMap<String, String>> {
    let dir = workdir.join(stage.dir());
    list_files(&dir)?
        .into_iter()
        .map(|rel| Ok((format!("{}/{rel}", stage.dir()), hash_file(&dir.join(&rel))?)))
        .collect()
}

/// True when every recorded output is on disk with the recorded hash.
pub fn outputs_intact(workdir: &Path, record: &StageRecord) -> bool {
    record.outputs.iter().all(|(rel, hash)| {
        let path = workdir.join(rel);
        path.is_file() && hash_file(&path).is_ok_and(|h| &h == hash)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_names_round_trip() {
        for stage in Stage::PIPELINE.into_iter().chain([Stage::Synth]) {
            assert_eq!(stage.as_str().parse::<Stage>().unwrap(), stage);
        }
        assert!("everything".parse::<Stage>().is_err());
    }

    #[test]
    fn sha256_matches_known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn listing_is_sorted_and_relative() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("b/c")).unwrap();
        fs::write(dir.path().join("b/c/x.txt"), "1").unwrap();
        fs::write(dir.path().join("a.txt"), "2").unwrap();
        assert_eq!(list_files(dir.path()).unwrap(), vec!["a.txt", "b/c/x.txt"]);
    }

    #[test]
    fn tampered_output_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("graph")).unwrap();
        fs::write(dir.path().join("graph/g.tsv"), "a\tb\t1\n").unwrap();
        let record = StageRecord {
            input_hash: String::new(),
            outputs: hash_stage_dir(dir.path(), Stage::Graph).unwrap(),
        };
        assert!(outputs_intact(dir.path(), &record));
        fs::write(dir.path().join("graph/g.tsv"), "a\tb\t2\n").unwrap();
        assert!(!outputs_intact(dir.path(), &record));
    }
}
