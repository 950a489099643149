use std::collections::BTreeMap;

use crate::worldsim::{Action, AgentPose, NodeId};

use super::{CorpusError, SampleItem};

/// The sentences of one instruction paragraph in order.
///
/// Only the final position matters for paragraph success, so the end
/// orientation is dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct Paragraph {
    pub map: String,
    pub paragraph_id: String,
    pub sentences: Vec<SampleItem>,
    pub start: AgentPose,
    pub end_node: NodeId,
}

impl Paragraph {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Concatenated gold moves, STOP-terminated once.
    pub fn gold_actions(&self) -> Vec<Action> {
        let mut out: Vec<Action> = self.sentences.iter().flat_map(|s| s.moves().iter().copied()).collect();
        out.push(Action::Stop);
        out
    }
}

/// Groups sentence items into paragraphs ordered by (map, paragraph id).
/// Sentence indices of each paragraph must run 0, 1, ... without gaps.
pub fn group_paragraphs(items: &[SampleItem]) -> Result<Vec<Paragraph>, CorpusError> {
    let mut groups: BTreeMap<(&str, &str), Vec<&SampleItem>> = BTreeMap::new();
    for item in items {
        groups
            .entry((item.map.as_str(), item.paragraph_id.as_str()))
            .or_default()
            .push(item);
    }
    groups
        .into_iter()
        .map(|((map, id), mut sentences)| {
            sentences.sort_by_key(|s| s.sentence_index);
            for (expected, s) in sentences.iter().enumerate() {
                if s.sentence_index as usize != expected {
                    return Err(CorpusError::Grouping(format!(
                        "paragraph {id} on map {map}: expected sentence {expected}, found {}",
                        s.sentence_index
                    )));
                }
            }
            let first = sentences[0];
            let last = sentences[sentences.len() - 1];
            Ok(Paragraph {
                map: map.to_string(),
                paragraph_id: id.to_string(),
                start: first.start,
                end_node: last.end.node,
                sentences: sentences.into_iter().cloned().collect(),
            })
        })
        .collect()
}
