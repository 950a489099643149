use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::worldsim::{Action, OBSERVATION_WIDTH};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignerMode {
    /// Scores and context use both the word one-hots and the annotations.
    MultiLevel,
    /// Annotations only.
    HighLevel,
    /// Fixed weights `1/N` over words and annotations.
    Uniform,
}

/// The model variants compared in the component ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    HighLevel,
    Uniform,
    Unidirectional,
    NoEncoder,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::HighLevel,
        Variant::Uniform,
        Variant::Unidirectional,
        Variant::NoEncoder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::HighLevel => "high_level",
            Variant::Uniform => "uniform",
            Variant::Unidirectional => "unidirectional",
            Variant::NoEncoder => "no_encoder",
        }
    }

    /// Applies this variant's switches to `base`.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        c.bidirectional = true;
        c.use_encoder = true;
        c.aligner = AlignerMode::MultiLevel;
        match self {
            Variant::Full => {}
            Variant::HighLevel => c.aligner = AlignerMode::HighLevel,
            Variant::Uniform => c.aligner = AlignerMode::Uniform,
            Variant::Unidirectional => c.bidirectional = false,
            Variant::NoEncoder => {
                c.use_encoder = false;
                c.bidirectional = false;
                c.aligner = AlignerMode::HighLevel;
            }
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Architecture and decoding switches. Serialized field order is fixed, so
/// the JSON form is canonical and its hash identifies the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub vocab_size: usize,
    pub world_dim: usize,
    pub action_count: usize,
    /// Width of the world embedding `E y` and of the deep output layer.
    pub embed_size: usize,
    pub bidirectional: bool,
    pub use_encoder: bool,
    pub aligner: AlignerMode,
    pub dropout: f64,
    pub init_scale: f64,
    pub forget_bias: f64,
    pub beam_width: usize,
    pub max_sentence_actions: usize,
    pub max_paragraph_actions: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            hidden_size: 100,
            vocab_size,
            world_dim: OBSERVATION_WIDTH,
            action_count: Action::COUNT,
            embed_size: 100,
            bidirectional: true,
            use_encoder: true,
            aligner: AlignerMode::MultiLevel,
            dropout: 0.5,
            init_scale: 0.08,
            forget_bias: 1.0,
            beam_width: 10,
            max_sentence_actions: 40,
            max_paragraph_actions: 200,
        }
    }

    /// Same config with hidden and embedding width `n`.
    pub fn with_hidden(mut self, n: usize) -> Self {
        self.hidden_size = n;
        self.embed_size = n;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.hidden_size == 0 || self.embed_size == 0 {
            return bad("hidden_size and embed_size must be positive");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if self.world_dim != OBSERVATION_WIDTH {
            return bad("world_dim must match the observation width");
        }
        if self.action_count != Action::COUNT {
            return bad("action_count must match the action inventory");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        if !self.use_encoder && (self.bidirectional || self.aligner != AlignerMode::HighLevel) {
            return bad("use_encoder = false requires a unidirectional high_level configuration");
        }
        if self.beam_width == 0 || self.max_sentence_actions == 0 || self.max_paragraph_actions == 0 {
            return bad("beam width and action caps must be positive");
        }
        Ok(())
    }

    /// Width of one annotation `h_j`.
    pub fn annotation_width(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden_size
        } else {
            self.hidden_size
        }
    }

    /// Whether the context includes the word one-hots.
    pub fn context_has_words(&self) -> bool {
        self.aligner != AlignerMode::HighLevel
    }

    /// Width of the context `z_t`.
    pub fn context_width(&self) -> usize {
        self.annotation_width() + if self.context_has_words() { self.vocab_size } else { 0 }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// SHA-256 of the canonical JSON.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(self.to_canonical_json().as_bytes()).into()
    }

    pub fn fingerprint_hex(&self) -> String {
        hex::encode(self.fingerprint())
    }
}
