use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ndiff::{seeded_rng, split_seed};
use crate::worldsim::MAP_NAMES;

use super::{CorpusError, SampleItem};

/// Fraction of the training maps' items held out for validation under vDev.
pub const VALIDATION_FRACTION: f64 = 0.1;

/// How the stopping epoch is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Validation slice carved from the two training maps.
    VDev,
    /// The held-out map itself decides the stopping epoch.
    VTest,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::VDev => "vdev",
            Protocol::VTest => "vtest",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vdev" => Ok(Protocol::VDev),
            "vtest" => Ok(Protocol::VTest),
            _ => Err(format!("unknown protocol `{s}` (expected vdev or vtest)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldSpec {
    pub test_map: String,
    pub protocol: Protocol,
    pub train_items: Vec<SampleItem>,
    /// Empty under vTest.
    pub validation_items: Vec<SampleItem>,
    pub test_items: Vec<SampleItem>,
}

impl FoldSpec {
    /// Items that drive early stopping.
    pub fn stopping_items(&self) -> &[SampleItem] {
        match self.protocol {
            Protocol::VDev => &self.validation_items,
            Protocol::VTest => &self.test_items,
        }
    }

    /// `validation` or the test map name.
    pub fn stopping_tag(&self) -> &str {
        match self.protocol {
            Protocol::VDev => "validation",
            Protocol::VTest => &self.test_map,
        }
    }
}

/// One fold per map in [`MAP_NAMES`] order, holding that map out.
pub fn make_folds(items: &[SampleItem], protocol: Protocol, seed: u64) -> Result<Vec<FoldSpec>, CorpusError> {
    let present: BTreeSet<&str> = items.iter().map(|i| i.map.as_str()).collect();
    if let Some(missing) = MAP_NAMES.iter().find(|m| !present.contains(**m)) {
        return Err(CorpusError::Fold(format!("corpus has no items on map `{missing}`")));
    }
    if let Some(extra) = present.iter().find(|m| !MAP_NAMES.contains(m)) {
        return Err(CorpusError::Fold(format!("corpus references unknown map `{extra}`")));
    }
    Ok(MAP_NAMES
        .iter()
        .enumerate()
        .map(|(k, &test_map)| {
            let (test_items, rest): (Vec<_>, Vec<_>) = items.iter().cloned().partition(|i| i.map == test_map);
            let (train_items, validation_items) = match protocol {
                Protocol::VTest => (rest, Vec::new()),
                Protocol::VDev => split_validation(rest, split_seed(seed, k as u64)),
            };
            FoldSpec {
                test_map: test_map.to_string(),
                protocol,
                train_items,
                validation_items,
                test_items,
            }
        })
        .collect())
}

/// Shuffles whole paragraphs and moves them to validation until it holds
/// at least the target share of items. Both halves keep input order.
fn split_validation(items: Vec<SampleItem>, seed: u64) -> (Vec<SampleItem>, Vec<SampleItem>) {
    let mut sizes: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for i in &items {
        *sizes.entry((i.map.as_str(), i.paragraph_id.as_str())).or_default() += 1;
    }
    let mut keys: Vec<_> = sizes.keys().copied().collect();
    keys.shuffle(&mut seeded_rng(seed));
    let target = (items.len() as f64 * VALIDATION_FRACTION).round() as usize;
    let mut chosen = BTreeSet::new();
    let mut taken = 0;
    for key in keys {
        if taken >= target {
            break;
        }
        taken += sizes[&key];
        chosen.insert((key.0.to_string(), key.1.to_string()));
    }
    items
        .into_iter()
        .partition(|i| !chosen.contains(&(i.map.clone(), i.paragraph_id.clone())))
}
