//! Greedy and beam decoding over an ensemble, and sentence-by-sentence
//! beam chaining for paragraphs.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seq2seq::{AlignmentTrace, DecoderState, EncodedSentence, ModelError, Seq2Seq};
use crate::worldsim::{apply_action, observe, Action, AgentPose, WorldMap};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("ensemble error: {0}")]
    Ensemble(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How a search ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    /// The best hypothesis emitted STOP by itself.
    Complete,
    /// The best hypothesis hit the length cap and STOP was forced.
    ForcedStop,
    /// Nothing survived; the result is a bare STOP.
    NoFeasible,
}

impl SearchStatus {
    pub fn flagged(self) -> bool {
        self != SearchStatus::Complete
    }
}

/// Checks that every member shares one configuration.
pub fn check_ensemble<T: Scalar>(members: &[Seq2Seq<T>]) -> Result<(), InferenceError> {
    let first = members
        .first()
        .ok_or_else(|| InferenceError::Ensemble("ensemble has no members".into()))?;
    if let Some(i) = members.iter().position(|m| m.config() != first.config()) {
        return Err(InferenceError::Ensemble(format!(
            "member {i} has a different configuration than member 0"
        )));
    }
    Ok(())
}

/// Arithmetic mean of the members' action posteriors at one step. Each
/// member advances its own decoder state.
pub fn step_distribution<T: Scalar>(
    members: &[Seq2Seq<T>],
    encoded: &[EncodedSentence<T>],
    states: &[DecoderState<T>],
    map: &WorldMap,
    pose: AgentPose,
) -> Result<(Vec<f64>, Vec<DecoderState<T>>), InferenceError> {
    let obs = observe(map, pose);
    let mut mean = vec![0.0; Action::COUNT];
    let mut next = Vec::with_capacity(members.len());
    for ((m, enc), state) in members.iter().zip(encoded).zip(states) {
        let out = m.step(enc, &obs, state)?;
        for (acc, p) in mean.iter_mut().zip(&out.probs) {
            *acc += p.as_f64();
        }
        next.push(out.state);
    }
    let k = members.len() as f64;
    mean.iter_mut().for_each(|p| *p /= k);
    Ok((mean, next))
}

/// A partial or complete action sequence.
#[derive(Debug, Clone)]
pub struct Hypothesis<T> {
    /// Actions of the current sentence.
    pub actions: Vec<Action>,
    /// Actions of earlier sentences, one list each.
    pub history: Vec<Vec<Action>>,
    pub log_prob: f64,
    pub pose: AgentPose,
    pub states: Vec<DecoderState<T>>,
    pub terminated: bool,
    /// Whether STOP was forced by a length cap in any sentence so far.
    pub forced: bool,
    /// Actions emitted across the whole paragraph, STOPs included.
    pub emitted: usize,
}

impl<T> Hypothesis<T> {
    fn flat_prefix(&self) -> impl Iterator<Item = usize> + '_ {
        self.history.iter().flatten().chain(&self.actions).map(|a| a.index())
    }
}

/// Final result of decoding one sentence or paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    /// Actions per sentence, each STOP-terminated.
    pub sentences: Vec<Vec<Action>>,
    pub log_prob: f64,
    pub end: AgentPose,
    pub status: SearchStatus,
}

impl Decoded {
    /// All actions concatenated.
    pub fn actions(&self) -> Vec<Action> {
        self.sentences.iter().flatten().copied().collect()
    }
}

/// Caps on decoding length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchLimits {
    pub per_sentence: usize,
    pub per_paragraph: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            per_sentence: 40,
            per_paragraph: 200,
        }
    }
}

impl SearchLimits {
    pub fn sentence(max: usize) -> Self {
        Self {
            per_sentence: max,
            per_paragraph: max,
        }
    }
}

/// Ranks by score, then by the action just taken, then by the prefix.
fn rank<T>(a: &Hypothesis<T>, b: &Hypothesis<T>) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| {
            a.actions
                .last()
                .map(|x| x.index())
                .cmp(&b.actions.last().map(|x| x.index()))
        })
        .then_with(|| a.flat_prefix().cmp(b.flat_prefix()))
}

/// Beam search for one sentence from each of `starts`. Returns up to `k`
/// finished hypotheses, best first.
fn search_sentence<T: Scalar>(
    members: &[Seq2Seq<T>],
    tokens: &[usize],
    map: &WorldMap,
    starts: Vec<Hypothesis<T>>,
    k: usize,
    limits: SearchLimits,
) -> Result<Vec<Hypothesis<T>>, InferenceError> {
    let encoded = members
        .iter()
        .map(|m| m.encode_sentence(tokens))
        .collect::<Result<Vec<_>, _>>()?;
    let mut beam: Vec<Hypothesis<T>> = starts
        .into_iter()
        .map(|mut h| {
            h.actions.clear();
            h.terminated = false;
            h.states = members.iter().map(Seq2Seq::initial_state).collect();
            h
        })
        .collect();
    let mut finished: Vec<Hypothesis<T>> = Vec::new();
    while !beam.is_empty() {
        let mut candidates = Vec::with_capacity(beam.len() * Action::COUNT);
        for h in &beam {
            let cap = limits
                .per_sentence
                .min(limits.per_paragraph.saturating_sub(h.emitted - h.actions.len()));
            let force_stop = h.actions.len() + 1 >= cap;
            let (probs, states) = step_distribution(members, &encoded, &h.states, map, h.pose)?;
            for a in Action::ALL {
                if force_stop && a != Action::Stop {
                    continue;
                }
                let Ok(pose) = apply_action(map, h.pose, a) else {
                    continue;
                };
                let mut actions = h.actions.clone();
                actions.push(a);
                candidates.push(Hypothesis {
                    actions,
                    history: h.history.clone(),
                    log_prob: h.log_prob + probs[a.index()].ln(),
                    pose,
                    states: states.clone(),
                    terminated: a == Action::Stop,
                    forced: h.forced || force_stop,
                    emitted: h.emitted + 1,
                });
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(k);
        beam = Vec::new();
        for c in candidates {
            if c.terminated {
                finished.push(c);
            } else {
                beam.push(c);
            }
        }
        finished.sort_by(rank);
        finished.truncate(k);
        // scores only fall, so a full list of finished hypotheses that all
        // beat the best live one is final
        if finished.len() == k {
            let worst = finished[k - 1].log_prob;
            if beam.iter().all(|h| h.log_prob < worst) {
                break;
            }
        }
    }
    Ok(finished)
}

fn root<T: Scalar>(members: &[Seq2Seq<T>], start: AgentPose) -> Hypothesis<T> {
    Hypothesis {
        actions: Vec::new(),
        history: Vec::new(),
        log_prob: 0.0,
        pose: start,
        states: members.iter().map(Seq2Seq::initial_state).collect(),
        terminated: false,
        forced: false,
        emitted: 0,
    }
}

fn no_feasible(start: AgentPose, sentences: usize) -> Decoded {
    Decoded {
        sentences: vec![vec![Action::Stop]; sentences.max(1)],
        log_prob: f64::NEG_INFINITY,
        end: start,
        status: SearchStatus::NoFeasible,
    }
}

/// Beam search over one sentence.
pub fn beam_search<T: Scalar>(
    members: &[Seq2Seq<T>],
    tokens: &[usize],
    map: &WorldMap,
    start: AgentPose,
    k: usize,
    max_len: usize,
) -> Result<Decoded, InferenceError> {
    follow_paragraph(
        members,
        &[tokens.to_vec()],
        map,
        start,
        k,
        SearchLimits::sentence(max_len),
    )
}

/// Beam search with `k = 1`.
pub fn greedy<T: Scalar>(
    members: &[Seq2Seq<T>],
    tokens: &[usize],
    map: &WorldMap,
    start: AgentPose,
    max_len: usize,
) -> Result<Decoded, InferenceError> {
    beam_search(members, tokens, map, start, 1, max_len)
}

/// Decodes a paragraph sentence by sentence. The `k` best finished
/// hypotheses of each sentence seed the next one, carrying their poses and
/// cumulative scores; decoder states restart at every sentence.
pub fn follow_paragraph<T: Scalar>(
    members: &[Seq2Seq<T>],
    sentences: &[Vec<usize>],
    map: &WorldMap,
    start: AgentPose,
    k: usize,
    limits: SearchLimits,
) -> Result<Decoded, InferenceError> {
    check_ensemble(members)?;
    if k == 0 {
        return Err(InferenceError::Ensemble("beam width must be at least 1".into()));
    }
    if sentences.is_empty() {
        return Ok(Decoded {
            sentences: Vec::new(),
            log_prob: 0.0,
            end: start,
            status: SearchStatus::Complete,
        });
    }
    if limits.per_sentence == 0 || limits.per_paragraph == 0 {
        return Ok(no_feasible(start, sentences.len()));
    }
    let mut beam = vec![root(members, start)];
    for (i, tokens) in sentences.iter().enumerate() {
        let mut finished = search_sentence(members, tokens, map, beam, k, limits)?;
        if finished.is_empty() {
            return Ok(no_feasible(start, sentences.len()));
        }
        if i + 1 < sentences.len() {
            for h in &mut finished {
                h.history.push(std::mem::take(&mut h.actions));
            }
        }
        beam = finished;
    }
    let mut best = beam.swap_remove(0);
    best.history.push(best.actions);
    let status = if best.forced {
        SearchStatus::ForcedStop
    } else {
        SearchStatus::Complete
    };
    Ok(Decoded {
        sentences: best.history,
        log_prob: best.log_prob,
        end: best.pose,
        status,
    })
}

/// Ensemble-averaged distributions and attention along a fixed action
/// sequence, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub tokens: Vec<String>,
    pub actions: Vec<Action>,
    pub distributions: Vec<Vec<f64>>,
    pub alignment: AlignmentTrace,
}

pub fn trace_actions<T: Scalar>(
    members: &[Seq2Seq<T>],
    tokens: &[usize],
    token_text: &[String],
    map: &WorldMap,
    start: AgentPose,
    actions: &[Action],
) -> Result<StepTrace, InferenceError> {
    check_ensemble(members)?;
    let mut distributions: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<Vec<f64>> = Vec::new();
    for m in members {
        let r = m.rollout(tokens, map, start, actions)?;
        if distributions.is_empty() {
            distributions = r.distributions;
            weights = r.alignment.weights;
        } else {
            add_rows(&mut distributions, &r.distributions);
            add_rows(&mut weights, &r.alignment.weights);
        }
    }
    let k = members.len() as f64;
    for row in distributions.iter_mut().chain(weights.iter_mut()) {
        row.iter_mut().for_each(|v| *v /= k);
    }
    Ok(StepTrace {
        tokens: token_text.to_vec(),
        actions: actions.to_vec(),
        distributions,
        alignment: AlignmentTrace { weights },
    })
}

fn add_rows(acc: &mut [Vec<f64>], rows: &[Vec<f64>]) {
    for (a, r) in acc.iter_mut().zip(rows) {
        for (x, y) in a.iter_mut().zip(r) {
            *x += y;
        }
    }
}
