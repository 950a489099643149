use rand::distributions::{Distribution, Uniform};

use crate::Scalar;

use super::{seeded_rng, Array, ParamSet};

/// Name of the generator behind [`init_params`], recorded in run metadata.
pub const INIT_GENERATOR: &str = "ChaCha8Rng(seed_from_u64)";

#[derive(Debug, Clone, PartialEq)]
pub enum InitKind {
    /// Independent draws from `U[-scale, scale]`.
    Uniform(f64),
    Zeros,
    /// LSTM gate bias laid out as `[i, f, o, g]` blocks of `hidden` each:
    /// zeros except the forget block, which is `forget_bias`.
    LstmBias {
        hidden: usize,
        forget_bias: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: InitKind) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }
}

/// Draws every parameter from one seeded generator, visiting specs in name
/// order so the result does not depend on the order of `specs`.
pub fn init_params<T: Scalar>(specs: &[ParamSpec], seed: u64) -> ParamSet<T> {
    let mut rng = seeded_rng(seed);
    let mut sorted: Vec<&ParamSpec> = specs.iter().collect();
    sorted.sort_by(|a, b| a.name.cmp(&b.name));
    let mut out = ParamSet::new();
    for spec in sorted {
        let n: usize = spec.shape.iter().product();
        let data: Vec<f64> = match spec.init {
            InitKind::Uniform(scale) => {
                let dist = Uniform::new_inclusive(-scale, scale);
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            }
            InitKind::Zeros => vec![0.0; n],
            InitKind::LstmBias { hidden, forget_bias } => {
                assert_eq!(n, 4 * hidden, "LSTM bias {} must have width 4 * hidden", spec.name);
                (0..n)
                    .map(|k| {
                        if (hidden..2 * hidden).contains(&k) {
                            forget_bias
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        };
        out.insert(spec.name.clone(), Array::from_f64(&spec.shape, &data));
    }
    out
}
