//! The network as graph-building functions. Training records them on a
//! differentiable tape; inference runs the same functions on an
//! evaluation-mode graph and keeps only the values.

use crate::ndiff::{Array, Bound, Graph, InitKind, ParamSpec, Var};
use crate::worldsim::{apply_action, observe, Action, AgentPose, WorldMap};
use crate::Scalar;

use super::{AlignerMode, ModelConfig, ModelError};

pub const ENC_FWD_W: &str = "enc.fwd.w";
pub const ENC_FWD_B: &str = "enc.fwd.b";
pub const ENC_BWD_W: &str = "enc.bwd.w";
pub const ENC_BWD_B: &str = "enc.bwd.b";
pub const ENC_EMBED: &str = "enc.embed";
pub const ALIGN_V: &str = "align.v";
pub const ALIGN_W: &str = "align.W";
pub const ALIGN_U: &str = "align.U";
pub const ALIGN_H: &str = "align.V";
pub const DEC_E: &str = "dec.E";
pub const DEC_W: &str = "dec.w";
pub const DEC_B: &str = "dec.b";
pub const OUT_LS: &str = "out.Ls";
pub const OUT_LZ: &str = "out.Lz";
pub const OUT_L0: &str = "out.L0";

/// Every parameter group of `cfg`. Linear maps are `[in, out]`; LSTM
/// transforms stack their gate blocks as `[i, f, o, g]` along `out` and take
/// `[input, previous hidden]` as rows.
pub fn param_specs(cfg: &ModelConfig) -> Vec<ParamSpec> {
    let (n, k, m) = (cfg.hidden_size, cfg.vocab_size, cfg.embed_size);
    let u = InitKind::Uniform(cfg.init_scale);
    let bias = InitKind::LstmBias {
        hidden: n,
        forget_bias: cfg.forget_bias,
    };
    let mut specs = Vec::new();
    if cfg.use_encoder {
        specs.push(ParamSpec::new(ENC_FWD_W, &[k + n, 4 * n], u.clone()));
        specs.push(ParamSpec::new(ENC_FWD_B, &[4 * n], bias.clone()));
        if cfg.bidirectional {
            specs.push(ParamSpec::new(ENC_BWD_W, &[k + n, 4 * n], u.clone()));
            specs.push(ParamSpec::new(ENC_BWD_B, &[4 * n], bias.clone()));
        }
    } else {
        specs.push(ParamSpec::new(ENC_EMBED, &[k, n], u.clone()));
    }
    let hw = cfg.annotation_width();
    if cfg.aligner != AlignerMode::Uniform {
        specs.push(ParamSpec::new(ALIGN_V, &[n], u.clone()));
        specs.push(ParamSpec::new(ALIGN_W, &[n, n], u.clone()));
        specs.push(ParamSpec::new(ALIGN_H, &[hw, n], u.clone()));
        if cfg.aligner == AlignerMode::MultiLevel {
            specs.push(ParamSpec::new(ALIGN_U, &[k, n], u.clone()));
        }
    }
    let zw = cfg.context_width();
    specs.push(ParamSpec::new(DEC_E, &[cfg.world_dim, m], u.clone()));
    specs.push(ParamSpec::new(DEC_W, &[m + zw + n, 4 * n], u.clone()));
    specs.push(ParamSpec::new(DEC_B, &[4 * n], bias));
    specs.push(ParamSpec::new(OUT_LS, &[n, m], u.clone()));
    specs.push(ParamSpec::new(OUT_LZ, &[zw, m], u.clone()));
    specs.push(ParamSpec::new(OUT_L0, &[m, cfg.action_count], u));
    specs
}

/// One LSTM step: `a = [input; h] · w + b`, then
/// `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
pub fn lstm_step<T: Scalar>(
    g: &mut Graph<'_, T>,
    w: Var,
    b: Var,
    input: &[Var],
    h: Var,
    c: Var,
) -> Result<(Var, Var), ModelError> {
    let n = g.value(h).len();
    let mut rows = input.to_vec();
    rows.push(h);
    let a = g.linear(&rows, w, Some(b))?;
    let gate = |g: &mut Graph<'_, T>, k: usize| g.slice(a, k * n, n);
    let (i, f, o, cand) = (gate(g, 0)?, gate(g, 1)?, gate(g, 2)?, gate(g, 3)?);
    let (i, f, o, cand) = (g.sigmoid(i), g.sigmoid(f), g.sigmoid(o), g.tanh(cand));
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_next = g.add(keep, write)?;
    let squashed = g.tanh(c_next);
    let h_next = g.mul(o, squashed)?;
    Ok((h_next, c_next))
}

/// Per-sentence aligner inputs.
pub struct Memory {
    /// Context items: `(x_j; h_j)`, or `h_j` alone for the high-level aligner.
    pub items: Vec<Var>,
    /// `U x_j + V h_j` (or `V h_j`); empty for the uniform aligner.
    pub keys: Vec<Var>,
}

/// Annotations `h_{1:N}` and the word one-hots `x_{1:N}`.
pub fn encode<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &Bound,
    cfg: &ModelConfig,
    tokens: &[usize],
) -> Result<(Vec<Var>, Vec<Var>), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::Contract("cannot encode an empty token sequence".into()));
    }
    if let Some(&t) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(ModelError::Contract(format!(
            "token index {t} outside vocabulary of size {}",
            cfg.vocab_size
        )));
    }
    let xs: Vec<Var> = tokens
        .iter()
        .map(|&t| g.constant(Array::one_hot(cfg.vocab_size, t)))
        .collect();
    let n = cfg.hidden_size;
    let mut hs = Vec::with_capacity(xs.len());
    if !cfg.use_encoder {
        let embed = p.get(ENC_EMBED)?;
        for &x in &xs {
            hs.push(g.matvec(x, embed)?);
        }
    } else {
        let forward = run_direction(g, p.get(ENC_FWD_W)?, p.get(ENC_FWD_B)?, xs.iter().copied(), n)?;
        if cfg.bidirectional {
            let mut backward = run_direction(g, p.get(ENC_BWD_W)?, p.get(ENC_BWD_B)?, xs.iter().rev().copied(), n)?;
            backward.reverse();
            for (f, b) in forward.into_iter().zip(backward) {
                hs.push(g.concat(&[f, b])?);
            }
        } else {
            hs = forward;
        }
    }
    let hs = hs
        .into_iter()
        .map(|h| g.dropout(h, cfg.dropout))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((xs, hs))
}

fn run_direction<T: Scalar>(
    g: &mut Graph<'_, T>,
    w: Var,
    b: Var,
    xs: impl Iterator<Item = Var>,
    n: usize,
) -> Result<Vec<Var>, ModelError> {
    let mut h = g.constant(Array::zeros(&[n]));
    let mut c = g.constant(Array::zeros(&[n]));
    let mut out = Vec::new();
    for x in xs {
        (h, c) = lstm_step(g, w, b, &[x], h, c)?;
        out.push(h);
    }
    Ok(out)
}

/// Precomputes the step-independent parts of the aligner.
pub fn memory<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &Bound,
    cfg: &ModelConfig,
    xs: &[Var],
    hs: &[Var],
) -> Result<Memory, ModelError> {
    let mut items = Vec::with_capacity(hs.len());
    let mut keys = Vec::new();
    for (&x, &h) in xs.iter().zip(hs) {
        items.push(if cfg.context_has_words() { g.concat(&[x, h])? } else { h });
        match cfg.aligner {
            AlignerMode::Uniform => {}
            AlignerMode::HighLevel => keys.push(g.matvec(h, p.get(ALIGN_H)?)?),
            AlignerMode::MultiLevel => {
                let ux = g.matvec(x, p.get(ALIGN_U)?)?;
                let vh = g.matvec(h, p.get(ALIGN_H)?)?;
                keys.push(g.add(ux, vh)?);
            }
        }
    }
    Ok(Memory { items, keys })
}

/// `β_j = vᵀ tanh(W s + key_j)`, `α = softmax(β)`, `z = Σ_j α_j item_j`.
/// Returns `(z, α)`.
pub fn align<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &Bound,
    cfg: &ModelConfig,
    s_prev: Var,
    mem: &Memory,
) -> Result<(Var, Var), ModelError> {
    let n_items = mem.items.len();
    let alpha = if cfg.aligner == AlignerMode::Uniform {
        g.constant(Array::filled(&[n_items], T::one() / T::of(n_items as f64)))
    } else {
        let ws = g.matvec(s_prev, p.get(ALIGN_W)?)?;
        let v = p.get(ALIGN_V)?;
        let mut scores = Vec::with_capacity(n_items);
        for &key in &mem.keys {
            let pre = g.add(ws, key)?;
            let act = g.tanh(pre);
            scores.push(g.dot(v, act)?);
        }
        let beta = g.concat(&scores)?;
        g.softmax(beta)?
    };
    let z = g.weighted_sum(alpha, &mem.items)?;
    Ok((z, alpha))
}

/// One decoder step. Returns `(P, s, c)`.
#[allow(clippy::too_many_arguments)]
pub fn decode_step<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &Bound,
    cfg: &ModelConfig,
    y: Var,
    s_prev: Var,
    c_prev: Var,
    z: Var,
) -> Result<(Var, Var, Var), ModelError> {
    let ey = g.matvec(y, p.get(DEC_E)?)?;
    let (s, c) = lstm_step(g, p.get(DEC_W)?, p.get(DEC_B)?, &[ey, z], s_prev, c_prev)?;
    let ls = g.matvec(s, p.get(OUT_LS)?)?;
    let lz = g.matvec(z, p.get(OUT_LZ)?)?;
    let deep = g.add_n(&[ey, ls, lz])?;
    let deep = g.dropout(deep, cfg.dropout)?;
    let q = g.matvec(deep, p.get(OUT_L0)?)?;
    Ok((g.softmax(q)?, s, c))
}

/// Teacher-forced rollout: per-step action distributions and attention rows.
pub struct RolloutVars {
    pub probs: Vec<Var>,
    pub alphas: Vec<Var>,
}

#[allow(clippy::too_many_arguments)]
pub fn rollout<T: Scalar>(
    g: &mut Graph<'_, T>,
    p: &Bound,
    cfg: &ModelConfig,
    tokens: &[usize],
    map: &WorldMap,
    start: AgentPose,
    teacher: &[Action],
) -> Result<RolloutVars, ModelError> {
    if teacher.last() != Some(&Action::Stop) {
        return Err(ModelError::Contract("teacher actions must end with STOP".into()));
    }
    let (xs, hs) = encode(g, p, cfg, tokens)?;
    let mem = memory(g, p, cfg, &xs, &hs)?;
    let mut s = g.constant(Array::zeros(&[cfg.hidden_size]));
    let mut c = g.constant(Array::zeros(&[cfg.hidden_size]));
    let mut pose = start;
    let mut out = RolloutVars {
        probs: Vec::with_capacity(teacher.len()),
        alphas: Vec::with_capacity(teacher.len()),
    };
    for (step, &a) in teacher.iter().enumerate() {
        let y = g.constant(Array::vector(observe(map, pose).to_vec()));
        let (z, alpha) = align(g, p, cfg, s, &mem)?;
        let prob;
        (prob, s, c) = decode_step(g, p, cfg, y, s, c, z)?;
        out.probs.push(prob);
        out.alphas.push(alpha);
        pose = apply_action(map, pose, a).map_err(|e| match e {
            crate::worldsim::WorldError::Blocked { pose, .. } => crate::worldsim::WorldError::Blocked { pose, step },
            other => other,
        })?;
    }
    Ok(out)
}
