use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::SampleItem;

pub const OOV_TOKEN: &str = "<unk>";
/// Index reserved for out-of-vocabulary tokens.
pub const OOV_INDEX: usize = 0;

/// Dense token indexing. Index 0 is OOV; training tokens follow in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: BTreeSet<&str> = tokens.into_iter().filter(|t| *t != OOV_TOKEN).collect();
        let tokens: Vec<String> = std::iter::once(OOV_TOKEN).chain(distinct).map(str::to_string).collect();
        Self::with_tokens(tokens)
    }

    fn with_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }

    /// Vocabulary size K, including the OOV entry.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(OOV_INDEX)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token) && token != OOV_TOKEN
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.index(t)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct Raw {
            tokens: Vec<String>,
        }
        let raw: Raw = serde_json::from_str(text)?;
        if raw.tokens.first().map(String::as_str) != Some(OOV_TOKEN) {
            return Err(serde::de::Error::custom("vocabulary must start with the OOV token"));
        }
        Ok(Self::with_tokens(raw.tokens))
    }
}

/// Vocabulary over every token of `items`.
pub fn build_vocab(items: &[SampleItem]) -> Vocabulary {
    Vocabulary::from_tokens(items.iter().flat_map(|i| i.tokens.iter().map(String::as_str)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::{Action, AgentPose, Heading};

    fn item(tokens: &[&str]) -> SampleItem {
        SampleItem {
            map: "grid".into(),
            paragraph_id: "p".into(),
            sentence_index: 0,
            instruction: tokens.join(" "),
            tokens: tokens.iter().map(|s| s.to_string()).collect(),
            actions: vec![Action::Stop],
            start: AgentPose::new(0, Heading::North),
            end: AgentPose::new(0, Heading::North),
            feasible: true,
        }
    }

    #[test]
    fn counts_distinct_plus_oov() {
        let v = build_vocab(&[item(&["go", "left", "go"])]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.token(0), Some(OOV_TOKEN));
        assert_eq!(v.index("go"), 1);
        assert_eq!(v.index("left"), 2);
    }

    #[test]
    fn unseen_tokens_map_to_oov() {
        let v = build_vocab(&[item(&["go", "left"])]);
        assert_eq!(v.index("sofa"), OOV_INDEX);
        assert!(!v.contains("sofa"));
        assert_eq!(v.encode(&["left".into(), "sofa".into()]), vec![2, 0]);
    }

    #[test]
    fn json_round_trip() {
        let v = build_vocab(&[item(&["b", "a", "c"])]);
        let back = Vocabulary::from_json(&v.to_json()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.index("c"), 3);
        assert!(Vocabulary::from_json(r#"{"tokens":["a"]}"#).is_err());
    }
}
