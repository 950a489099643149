use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::worldsim::{execute_sequence, Action, AgentPose, WorldMap};

use super::CorpusError;

/// One instruction sentence paired with its demonstrated actions.
///
/// `actions` is always STOP-terminated; a sentence with no movement is the
/// single action STOP.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleItem {
    pub map: String,
    pub paragraph_id: String,
    pub sentence_index: u32,
    pub instruction: String,
    pub tokens: Vec<String>,
    pub actions: Vec<Action>,
    pub start: AgentPose,
    pub end: AgentPose,
    pub feasible: bool,
}

impl SampleItem {
    /// `paragraph#sentence`, used in diagnostics.
    pub fn key(&self) -> String {
        format!("{}#{}", self.paragraph_id, self.sentence_index)
    }

    /// Actions with the trailing STOP removed.
    pub fn moves(&self) -> &[Action] {
        match self.actions.split_last() {
            Some((Action::Stop, rest)) => rest,
            _ => &self.actions,
        }
    }

    /// Whether replaying the gold actions from `start` reaches `end`.
    pub fn replays(&self, map: &WorldMap) -> bool {
        execute_sequence(map, self.start, &self.actions) == Ok(self.end)
    }
}

/// Appends STOP unless already present.
pub fn stop_terminated(mut actions: Vec<Action>) -> Vec<Action> {
    if actions.last() != Some(&Action::Stop) {
        actions.push(Action::Stop);
    }
    actions
}

pub fn write_jsonl(items: &[SampleItem], w: &mut impl Write) -> Result<(), CorpusError> {
    for item in items {
        serde_json::to_writer(&mut *w, item).map_err(|e| CorpusError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl(items: &[SampleItem]) -> String {
    let mut buf = Vec::new();
    write_jsonl(items, &mut buf).expect("in-memory write");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

pub fn read_jsonl(r: impl BufRead) -> Result<Vec<SampleItem>, CorpusError> {
    let mut items = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: SampleItem = serde_json::from_str(&line).map_err(|e| CorpusError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        if item.tokens.is_empty() {
            return Err(CorpusError::Json {
                line: i + 1,
                message: format!("item {} has no tokens", item.key()),
            });
        }
        if let Some(p) = item.actions.iter().position(|&a| a == Action::Stop) {
            if p + 1 != item.actions.len() {
                return Err(CorpusError::Json {
                    line: i + 1,
                    message: format!("item {} has STOP before its last action", item.key()),
                });
            }
        }
        items.push(item);
    }
    Ok(items)
}

/// SHA-256 of the canonical JSONL serialization.
pub fn corpus_checksum(items: &[SampleItem]) -> String {
    hex::encode(Sha256::digest(to_jsonl(items).as_bytes()))
}

/// Stable canonical order: map, paragraph, sentence.
pub fn sort_canonical(items: &mut [SampleItem]) {
    items.sort_by(|a, b| {
        (a.map.as_str(), a.paragraph_id.as_str(), a.sentence_index).cmp(&(
            b.map.as_str(),
            b.paragraph_id.as_str(),
            b.sentence_index,
        ))
    });
}
