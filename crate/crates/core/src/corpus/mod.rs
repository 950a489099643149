//! Canonical instruction corpus: sentence items, tokenization, vocabulary,
//! paragraph grouping and the per-map cross-validation folds.

mod convert;
mod example;
mod folds;
mod item;
mod paragraph;
mod synth;
mod tokenize;
mod vocab;

pub use convert::convert_raw;
pub use example::{example_paragraph, EXAMPLE_MAP, EXAMPLE_PARAGRAPH_ID, EXAMPLE_SENTENCES, EXAMPLE_START};
pub use folds::{make_folds, FoldSpec, Protocol, VALIDATION_FRACTION};
pub use item::{corpus_checksum, read_jsonl, sort_canonical, stop_terminated, to_jsonl, write_jsonl, SampleItem};
pub use paragraph::{group_paragraphs, Paragraph};
pub use synth::{synthesize, SynthConfig};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocabulary, OOV_INDEX, OOV_TOKEN};

use std::fs;
use std::io::BufReader;
use std::path::Path;

use thiserror::Error;

use crate::worldsim::{builtin_map, WorldError, WorldMap, MAP_NAMES};

/// Item file inside a canonical corpus directory.
pub const CORPUS_FILE: &str = "corpus.jsonl";
/// Map subdirectory inside a canonical corpus directory.
pub const MAPS_DIR: &str = "maps";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("serialization error: {0}")]
    Format(String),
    #[error("ingest error: {0}")]
    Ingest(String),
    #[error("fold error: {0}")]
    Fold(String),
    #[error("grouping error: {0}")]
    Grouping(String),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// A canonical corpus directory loaded into memory.
#[derive(Debug, Clone)]
pub struct CorpusDir {
    pub items: Vec<SampleItem>,
    pub maps: Vec<WorldMap>,
}

impl CorpusDir {
    /// Reads `corpus.jsonl` and the map documents. Maps missing from
    /// `maps/` fall back to the bundled ones of the same name.
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let file = fs::File::open(dir.join(CORPUS_FILE))
            .map_err(|e| CorpusError::Ingest(format!("cannot open {}: {e}", dir.join(CORPUS_FILE).display())))?;
        let items = read_jsonl(BufReader::new(file))?;
        let mut maps = Vec::new();
        for name in MAP_NAMES {
            let path = dir.join(MAPS_DIR).join(format!("{name}.map"));
            let map = if path.exists() {
                WorldMap::parse(&fs::read_to_string(&path)?)?
            } else {
                builtin_map(name).expect("bundled map")
            };
            maps.push(map);
        }
        let out = Self { items, maps };
        out.check()?;
        Ok(out)
    }

    /// Writes `corpus.jsonl` and `maps/<name>.map` under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir.join(MAPS_DIR))?;
        fs::write(dir.join(CORPUS_FILE), to_jsonl(&self.items))?;
        for map in &self.maps {
            fs::write(
                dir.join(MAPS_DIR).join(format!("{}.map", map.name())),
                map.to_document(),
            )?;
        }
        Ok(())
    }

    pub fn map(&self, name: &str) -> Option<&WorldMap> {
        self.maps.iter().find(|m| m.name() == name)
    }

    /// Every item names a known map and its poses exist there; feasible
    /// items replay to their end pose.
    pub fn check(&self) -> Result<(), CorpusError> {
        for item in &self.items {
            let map = self.map(&item.map).ok_or_else(|| {
                CorpusError::Ingest(format!(
                    "paragraph {} references unknown map `{}`",
                    item.paragraph_id, item.map
                ))
            })?;
            for pose in [item.start, item.end] {
                if !map.contains(pose.node) {
                    return Err(CorpusError::World(WorldError::UnknownNode(pose.node)));
                }
            }
            if item.feasible && !item.replays(map) {
                return Err(CorpusError::Ingest(format!(
                    "item {} is marked feasible but its actions do not reach its end pose",
                    item.key()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
