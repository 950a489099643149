//! Exact-success evaluation, distance curves, cross-validated runs,
//! ablation sweeps, and rendering of alignments and walked paths.

mod render;

pub use render::{canvas_point, render_alignment, render_path, Heatmap, CELL, MARGIN};

use std::fmt::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{group_paragraphs, make_folds, CorpusError, FoldSpec, Paragraph, Protocol, SampleItem, Vocabulary};
use crate::inference::{follow_paragraph, InferenceError, SearchLimits, SearchStatus};
use crate::seq2seq::{ModelConfig, Seq2Seq, Variant};
use crate::trainer::{train_ensemble, TrainError, TrainHistory, TrainRunConfig};
use crate::worldsim::{path_distance, Action, AgentPose, NodeId, WorldError, WorldMap};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("action {step} cannot be executed: {source}")]
    Infeasible { step: usize, source: WorldError },
    #[error("unknown map `{0}`")]
    UnknownMap(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Evaluation granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// One sentence; node and orientation must match.
    Single,
    /// A whole paragraph; only the node must match.
    Multi,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Single => "single",
            Task::Multi => "multi",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Task::Single),
            "multi" => Ok(Task::Multi),
            other => Err(format!("unknown task `{other}` (expected single or multi)")),
        }
    }
}

/// Outcome for one evaluated sentence or paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRecord {
    pub id: String,
    pub map: String,
    pub start: AgentPose,
    pub gold_node: NodeId,
    /// Present for single-sentence items.
    pub gold_pose: Option<AgentPose>,
    pub predicted: AgentPose,
    pub actions: Vec<Action>,
    pub status: SearchStatus,
    pub success: bool,
    /// Edges between the predicted and gold nodes; `None` if unreachable.
    pub distance: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_map: String,
    pub config_fingerprint: String,
    pub items: usize,
    pub successes: usize,
    pub accuracy: Option<f64>,
    pub records: Vec<ItemRecord>,
}

impl FoldResult {
    fn new(test_map: &str, config_fingerprint: String, records: Vec<ItemRecord>) -> Self {
        let successes = records.iter().filter(|r| r.success).count();
        Self {
            test_map: test_map.to_string(),
            config_fingerprint,
            items: records.len(),
            successes,
            accuracy: ratio(successes, records.len()),
            records,
        }
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Per-fold results with size-weighted aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub protocol: Protocol,
    pub beam_width: usize,
    pub limits: SearchLimits,
    pub folds: Vec<FoldResult>,
    pub items: usize,
    pub successes: usize,
    /// `successes / items`, the size-weighted average over folds.
    pub accuracy: Option<f64>,
    /// True when there were no items, so `accuracy` is undefined.
    pub accuracy_undefined: bool,
    /// Fraction of items ending on the gold node, orientation ignored.
    pub position_accuracy: Option<f64>,
    /// Fractions within [`CURVE_THRESHOLDS`] edges of the goal.
    pub distance_curve: DistanceCurve,
}

/// Distances reported with every evaluation.
pub const CURVE_THRESHOLDS: [usize; 4] = [0, 1, 2, 3];

impl EvalReport {
    pub fn new(
        task: Task,
        protocol: Protocol,
        beam_width: usize,
        limits: SearchLimits,
        folds: Vec<FoldResult>,
    ) -> Self {
        let items: usize = folds.iter().map(|f| f.items).sum();
        let successes: usize = folds.iter().map(|f| f.successes).sum();
        let at_goal = folds
            .iter()
            .flat_map(|f| &f.records)
            .filter(|r| r.distance == Some(0))
            .count();
        let distances: Vec<Option<usize>> = folds.iter().flat_map(|f| &f.records).map(|r| r.distance).collect();
        Self {
            task,
            protocol,
            beam_width,
            limits,
            folds,
            items,
            successes,
            accuracy: ratio(successes, items),
            accuracy_undefined: items == 0,
            position_accuracy: ratio(at_goal, items),
            distance_curve: curve(&distances, &CURVE_THRESHOLDS),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = &ItemRecord> {
        self.folds.iter().flat_map(|f| &f.records)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn find_map<'m>(maps: &'m [WorldMap], name: &str) -> Result<&'m WorldMap, EvalError> {
    maps.iter()
        .find(|m| m.name() == name)
        .ok_or_else(|| EvalError::UnknownMap(name.to_string()))
}

fn distance(map: &WorldMap, a: NodeId, b: NodeId) -> Option<usize> {
    path_distance(map, a, b).ok()
}

fn fingerprint_of<T: Scalar>(members: &[Seq2Seq<T>]) -> String {
    members.first().map_or(String::new(), |m| m.config().fingerprint_hex())
}

/// Single-sentence evaluation of one fold: success iff the decoded end pose
/// equals the gold pose and the search was not flagged.
pub fn eval_single<T: Scalar>(
    members: &[Seq2Seq<T>],
    vocab: &Vocabulary,
    test_map: &str,
    items: &[SampleItem],
    maps: &[WorldMap],
    k: usize,
    limits: SearchLimits,
) -> Result<FoldResult, EvalError> {
    let records = items
        .par_iter()
        .map(|item| -> Result<ItemRecord, EvalError> {
            let map = find_map(maps, &item.map)?;
            let tokens = vocab.encode(&item.tokens);
            let d = follow_paragraph(members, &[tokens], map, item.start, k, limits)?;
            Ok(ItemRecord {
                id: item.key(),
                map: item.map.clone(),
                start: item.start,
                gold_node: item.end.node,
                gold_pose: Some(item.end),
                predicted: d.end,
                actions: d.actions(),
                status: d.status,
                success: !d.status.flagged() && d.end == item.end,
                distance: distance(map, d.end.node, item.end.node),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FoldResult::new(test_map, fingerprint_of(members), records))
}

/// Paragraph evaluation of one fold: success iff the final node matches.
pub fn eval_multi<T: Scalar>(
    members: &[Seq2Seq<T>],
    vocab: &Vocabulary,
    test_map: &str,
    paragraphs: &[Paragraph],
    maps: &[WorldMap],
    k: usize,
    limits: SearchLimits,
) -> Result<FoldResult, EvalError> {
    let records = paragraphs
        .par_iter()
        .map(|p| -> Result<ItemRecord, EvalError> {
            let map = find_map(maps, &p.map)?;
            let sentences: Vec<Vec<usize>> = p.sentences.iter().map(|s| vocab.encode(&s.tokens)).collect();
            let d = follow_paragraph(members, &sentences, map, p.start, k, limits)?;
            Ok(ItemRecord {
                id: format!("{}/{}", p.map, p.paragraph_id),
                map: p.map.clone(),
                start: p.start,
                gold_node: p.end_node,
                gold_pose: None,
                predicted: d.end,
                actions: d.actions(),
                status: d.status,
                success: d.end.node == p.end_node,
                distance: distance(map, d.end.node, p.end_node),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FoldResult::new(test_map, fingerprint_of(members), records))
}

/// Fraction of items within each graph distance of the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceCurve {
    pub thresholds: Vec<usize>,
    pub fractions: Vec<f64>,
    pub items: usize,
}

/// Unreachable predictions count as beyond every threshold. An empty
/// report yields zeros.
pub fn distance_curve(report: &EvalReport, thresholds: &[usize]) -> DistanceCurve {
    let distances: Vec<Option<usize>> = report.records().map(|r| r.distance).collect();
    curve(&distances, thresholds)
}

fn curve(distances: &[Option<usize>], thresholds: &[usize]) -> DistanceCurve {
    let fractions = thresholds
        .iter()
        .map(|&d| {
            let within = distances.iter().filter(|x| x.is_some_and(|x| x <= d)).count();
            ratio(within, distances.len()).unwrap_or(0.0)
        })
        .collect();
    DistanceCurve {
        thresholds: thresholds.to_vec(),
        fractions,
        items: distances.len(),
    }
}

/// SHA-256 over every fold's item keys, split by role.
pub fn partition_fingerprint(folds: &[FoldSpec]) -> String {
    let mut h = Sha256::new();
    for f in folds {
        h.update(format!("fold {} {}\n", f.test_map, f.protocol));
        for (role, items) in [
            ("train", &f.train_items),
            ("validation", &f.validation_items),
            ("test", &f.test_items),
        ] {
            for item in items.iter() {
                h.update(format!("{role} {}\n", item.key()));
            }
        }
    }
    hex::encode(h.finalize())
}

/// Both task reports of a full cross-validated run.
#[derive(Debug, Clone)]
pub struct CrossValidation<T> {
    pub single: EvalReport,
    pub multi: EvalReport,
    pub partition_fingerprint: String,
    /// Per fold, the trained members and their vocabulary.
    pub ensembles: Vec<(Vec<Seq2Seq<T>>, Vocabulary)>,
    pub histories: Vec<Vec<TrainHistory>>,
}

/// Trains an ensemble per fold and evaluates it on the held-out map under
/// both tasks.
pub fn cross_validate<T: Scalar>(
    items: &[SampleItem],
    maps: &[WorldMap],
    base: &ModelConfig,
    run: &TrainRunConfig,
    k: usize,
    limits: SearchLimits,
) -> Result<CrossValidation<T>, EvalError> {
    let folds = make_folds(items, run.protocol, run.seed)?;
    let mut single = Vec::new();
    let mut multi = Vec::new();
    let mut ensembles = Vec::new();
    let mut histories = Vec::new();
    for fold in &folds {
        log::info!("fold {}: training {} member(s)", fold.test_map, run.ensemble_size);
        let trained = train_ensemble::<T>(fold, maps, base, run)?;
        let vocab = trained[0].vocab.clone();
        histories.push(trained.iter().map(|t| t.history.clone()).collect());
        let members: Vec<Seq2Seq<T>> = trained.into_iter().map(|t| t.model).collect();
        single.push(eval_single(
            &members,
            &vocab,
            &fold.test_map,
            &fold.test_items,
            maps,
            k,
            limits,
        )?);
        let paragraphs = group_paragraphs(&fold.test_items)?;
        multi.push(eval_multi(
            &members,
            &vocab,
            &fold.test_map,
            &paragraphs,
            maps,
            k,
            limits,
        )?);
        ensembles.push((members, vocab));
    }
    Ok(CrossValidation {
        single: EvalReport::new(Task::Single, run.protocol, k, limits, single),
        multi: EvalReport::new(Task::Multi, run.protocol, k, limits, multi),
        partition_fingerprint: partition_fingerprint(&folds),
        ensembles,
        histories,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub config_fingerprint: String,
    pub single_accuracy: Option<f64>,
    pub multi_accuracy: Option<f64>,
    pub partition_fingerprint: String,
}

/// Accuracy of every model variant under identical folds and seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub protocol: Protocol,
    pub beam_width: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_csv(&self) -> String {
        let cell = |a: Option<f64>| a.map_or(String::new(), |a| format!("{:.2}", 100.0 * a));
        let mut out = String::from("variant,single_sentence,multi_sentence\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                r.variant,
                cell(r.single_accuracy),
                cell(r.multi_accuracy)
            )
            .unwrap();
        }
        out
    }
}

pub fn ablation_sweep<T: Scalar>(
    items: &[SampleItem],
    maps: &[WorldMap],
    base: &ModelConfig,
    run: &TrainRunConfig,
    variants: &[Variant],
    k: usize,
    limits: SearchLimits,
) -> Result<AblationTable, EvalError> {
    let mut rows = Vec::new();
    for &variant in variants {
        let config = variant.apply(base);
        log::info!("ablation: {variant}");
        let cv = cross_validate::<T>(items, maps, &config, run, k, limits)?;
        rows.push(AblationRow {
            variant,
            config_fingerprint: config.fingerprint_hex(),
            single_accuracy: cv.single.accuracy,
            multi_accuracy: cv.multi.accuracy,
            partition_fingerprint: cv.partition_fingerprint,
        });
    }
    Ok(AblationTable {
        protocol: run.protocol,
        beam_width: k,
        rows,
    })
}
