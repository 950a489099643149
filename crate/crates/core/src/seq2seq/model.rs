use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ndiff::{init_params, Archive, Array, Graph, ParamSet};
use crate::worldsim::{Action, AgentPose, Observation, WorldMap};
use crate::Scalar;

use super::net::{self, Memory};
use super::{ModelConfig, ModelError};

/// Attention weights of one rollout: row `t` holds `α_t` over the tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTrace {
    pub weights: Vec<Vec<f64>>,
}

impl AlignmentTrace {
    pub fn steps(&self) -> usize {
        self.weights.len()
    }

    pub fn tokens(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Largest deviation of a row sum from 1, or of an entry below 0.
    pub fn stochastic_error(&self) -> f64 {
        self.weights
            .iter()
            .map(|row| {
                let neg = row.iter().fold(0.0f64, |m, &a| m.max(-a));
                (row.iter().sum::<f64>() - 1.0).abs().max(neg)
            })
            .fold(0.0, f64::max)
    }
}

/// Decoder hidden state and memory cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<T> {
    pub s: Array<T>,
    pub c: Array<T>,
}

/// A sentence encoded once for repeated decoding steps.
#[derive(Debug, Clone)]
pub struct EncodedSentence<T> {
    items: Vec<Array<T>>,
    keys: Vec<Array<T>>,
}

impl<T> EncodedSentence<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Output of one decoding step.
#[derive(Debug, Clone)]
pub struct StepOutput<T> {
    pub probs: Vec<T>,
    pub alpha: Vec<T>,
    pub state: DecoderState<T>,
}

/// Teacher-forced rollout values.
#[derive(Debug, Clone)]
pub struct Rollout {
    pub distributions: Vec<Vec<f64>>,
    pub alignment: AlignmentTrace,
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq<T> {
    config: ModelConfig,
    params: ParamSet<T>,
}

const CHECKPOINT_FORMAT: &str = "walklab-seq2seq";

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    format: String,
    config: ModelConfig,
}

impl<T: Scalar> Seq2Seq<T> {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let params = init_params(&net::param_specs(&config), seed);
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet<T>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected: ParamSet<T> = net::param_specs(&config)
            .iter()
            .map(|s| (s.name.clone(), Array::zeros(&s.shape)))
            .collect();
        expected.check_congruent(&params)?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> Seq2Seq<U> {
        Seq2Seq {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    pub fn initial_state(&self) -> DecoderState<T> {
        let n = self.config.hidden_size;
        DecoderState {
            s: Array::zeros(&[n]),
            c: Array::zeros(&[n]),
        }
    }

    /// Runs the encoder and aligner precomputation (evaluation mode).
    pub fn encode_sentence(&self, tokens: &[usize]) -> Result<EncodedSentence<T>, ModelError> {
        let mut g = Graph::new();
        let p = g.bind(&self.params);
        let (xs, hs) = net::encode(&mut g, &p, &self.config, tokens)?;
        let mem = net::memory(&mut g, &p, &self.config, &xs, &hs)?;
        Ok(EncodedSentence {
            items: mem.items.iter().map(|&v| g.value(v).clone()).collect(),
            keys: mem.keys.iter().map(|&v| g.value(v).clone()).collect(),
        })
    }

    /// One decoding step from `state` with world observation `obs`.
    pub fn step(
        &self,
        enc: &EncodedSentence<T>,
        obs: &Observation,
        state: &DecoderState<T>,
    ) -> Result<StepOutput<T>, ModelError> {
        let mut g = Graph::new();
        let p = g.bind(&self.params);
        let mem = Memory {
            items: enc.items.iter().map(|a| g.constant_ref(a)).collect(),
            keys: enc.keys.iter().map(|a| g.constant_ref(a)).collect(),
        };
        let s = g.constant_ref(&state.s);
        let c = g.constant_ref(&state.c);
        let y = g.constant(Array::vector(obs.to_vec()));
        let (z, alpha) = net::align(&mut g, &p, &self.config, s, &mem)?;
        let (probs, s, c) = net::decode_step(&mut g, &p, &self.config, y, s, c, z)?;
        Ok(StepOutput {
            probs: g.value(probs).data().to_vec(),
            alpha: g.value(alpha).data().to_vec(),
            state: DecoderState {
                s: g.value(s).clone(),
                c: g.value(c).clone(),
            },
        })
    }

    /// Teacher-forced distributions and attention (evaluation mode).
    pub fn rollout(
        &self,
        tokens: &[usize],
        map: &WorldMap,
        start: AgentPose,
        teacher: &[Action],
    ) -> Result<Rollout, ModelError> {
        let mut g = Graph::new();
        let p = g.bind(&self.params);
        let vars = net::rollout(&mut g, &p, &self.config, tokens, map, start, teacher)?;
        let rows =
            |vs: &[crate::ndiff::Var]| -> Vec<Vec<f64>> { vs.iter().map(|&v| g.value(v).to_f64_vec()).collect() };
        Ok(Rollout {
            distributions: rows(&vars.probs),
            alignment: AlignmentTrace {
                weights: rows(&vars.alphas),
            },
        })
    }

    /// `Σ_t ln P(a_t)` under teacher forcing.
    pub fn log_likelihood(
        &self,
        tokens: &[usize],
        map: &WorldMap,
        start: AgentPose,
        teacher: &[Action],
    ) -> Result<f64, ModelError> {
        let r = self.rollout(tokens, map, start, teacher)?;
        Ok(r.distributions
            .iter()
            .zip(teacher)
            .map(|(d, a)| d[a.index()].ln())
            .sum())
    }

    pub fn to_archive(&self) -> Archive {
        let meta = CheckpointMeta {
            format: CHECKPOINT_FORMAT.to_string(),
            config: self.config.clone(),
        };
        let meta = serde_json::to_string(&meta).expect("metadata serializes");
        Archive::new(self.config.fingerprint(), meta, &self.params)
    }

    pub fn from_archive(archive: &Archive) -> Result<Self, ModelError> {
        let meta: CheckpointMeta =
            serde_json::from_str(&archive.metadata).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(ModelError::Checkpoint(format!("unexpected format `{}`", meta.format)));
        }
        if meta.config.fingerprint() != archive.fingerprint {
            return Err(ModelError::Checkpoint(
                "header fingerprint does not match the embedded configuration".into(),
            ));
        }
        Self::from_params(meta.config, archive.groups.cast())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_archive().to_bytes()
    }

    /// SHA-256 of the checkpoint bytes; differs between ensemble members.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let file = fs::File::open(path)?;
        let archive = Archive::read_from(&mut BufReader::new(file))?;
        Self::from_archive(&archive)
    }
}
