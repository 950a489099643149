use std::borrow::Cow;
use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::Scalar;

use super::{Array, NdiffError, ParamSet};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<T> {
    Leaf,
    /// `concat(inputs) · w + b`
    Linear {
        inputs: Vec<usize>,
        w: usize,
        b: Option<usize>,
    },
    Add(usize, usize),
    AddN(Vec<usize>),
    Mul(usize, usize),
    Scale(usize, T),
    Sigmoid(usize),
    Tanh(usize),
    Softmax(usize),
    Ln {
        x: usize,
        floor: T,
    },
    Concat(Vec<usize>),
    Slice {
        x: usize,
        start: usize,
    },
    WeightedSum {
        weights: usize,
        items: Vec<usize>,
    },
    Dot(usize, usize),
    Pick {
        x: usize,
        index: usize,
    },
    Sum(usize),
    Dropout {
        x: usize,
        mask: Vec<T>,
    },
}

struct Node<'a, T: Scalar> {
    value: Cow<'a, Array<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Parameter leaves borrow their arrays, so binding a large parameter set is
/// free. Node creation order is a topological order of the graph.
pub struct Graph<'a, T: Scalar> {
    nodes: Vec<Node<'a, T>>,
    params: BTreeMap<String, usize>,
    dropout_rng: Option<ChaCha8Rng>,
    dropout_active: bool,
    clamped_logs: usize,
}

/// Parameter name to graph leaf.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var, NdiffError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NdiffError::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.vars.contains_key(name)
    }
}

/// Adjoints produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    shapes: Vec<Vec<usize>>,
    params: BTreeMap<String, usize>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of any node that received one.
    pub fn get(&self, v: Var) -> Option<Array<T>> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Array::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradient for every bound parameter; parameters the root does not depend on get zeros.
    pub fn into_params(mut self) -> ParamSet<T> {
        let mut out = ParamSet::new();
        for (name, &ix) in &self.params {
            let shape = self.shapes[ix].clone();
            let data = self.grads[ix]
                .take()
                .unwrap_or_else(|| vec![T::zero(); shape.iter().product()]);
            out.insert(name.clone(), Array::new(shape, data).expect("gradient shape"));
        }
        out
    }
}

fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> NdiffError {
    NdiffError::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(v: &mut [T]) {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        total = total + *x;
    }
    for x in v.iter_mut() {
        *x = *x / total;
    }
}

impl<'a, T: Scalar> Default for Graph<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Graph<'a, T> {
    /// A graph in evaluation mode: dropout is the identity.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: BTreeMap::new(),
            dropout_rng: None,
            dropout_active: false,
            clamped_logs: 0,
        }
    }

    /// A graph in training mode; dropout masks are drawn from `rng`.
    pub fn with_dropout(rng: ChaCha8Rng) -> Self {
        Self {
            dropout_rng: Some(rng),
            ..Self::new()
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    /// True once any dropout with a non-zero rate ran in training mode.
    pub fn dropout_active(&self) -> bool {
        self.dropout_active
    }

    /// How many `ln` evaluations hit their floor.
    pub fn clamped_logs(&self) -> usize {
        self.clamped_logs
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Array<T>>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn derived(&mut self, value: Array<T>, op: Op<T>, parents: &[usize]) -> Var {
        let rg = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.push(Cow::Owned(value), op, rg)
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    fn vals(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn vector_len(&self, op: &'static str, v: Var) -> Result<usize, NdiffError> {
        match self.shape(v) {
            [n] => Ok(*n),
            s => Err(shape_err(op, s, &[])),
        }
    }

    /// A differentiable leaf borrowing `value`.
    pub fn param(&mut self, name: &str, value: &'a Array<T>) -> Var {
        let v = self.push(Cow::Borrowed(value), Op::Leaf, true);
        self.params.insert(name.to_string(), v.0);
        v
    }

    /// Binds every array of `params` as a differentiable leaf.
    pub fn bind(&mut self, params: &'a ParamSet<T>) -> Bound {
        let vars = params
            .iter()
            .map(|(name, a)| (name.clone(), self.param(name, a)))
            .collect();
        Bound { vars }
    }

    /// A leaf that receives no gradient, borrowing `value`.
    pub fn constant_ref(&mut self, value: &'a Array<T>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    /// A leaf that receives no gradient.
    pub fn constant(&mut self, value: Array<T>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    /// Affine map of the stacked inputs: `concat(inputs) · w + b`.
    ///
    /// `w` has shape `[Σ len(inputs), out]`. Zero input entries are skipped,
    /// which makes one-hot inputs cheap in both passes.
    pub fn linear(&mut self, inputs: &[Var], w: Var, b: Option<Var>) -> Result<Var, NdiffError> {
        let (rows, cols) = match self.shape(w) {
            [r, c] => (*r, *c),
            s => return Err(shape_err("linear", s, &[])),
        };
        let mut total = 0;
        for &x in inputs {
            total += self.vector_len("linear", x)?;
        }
        if total != rows {
            return Err(shape_err("linear", &[total], self.shape(w)));
        }
        let mut out = match b {
            Some(b) => {
                if self.shape(b) != [cols] {
                    return Err(shape_err("linear bias", self.shape(b), &[cols]));
                }
                self.vals(b).to_vec()
            }
            None => vec![T::zero(); cols],
        };
        let wv = self.vals(w);
        let mut offset = 0;
        for &x in inputs {
            for (j, &xj) in self.vals(x).iter().enumerate() {
                if xj != T::zero() {
                    let row = &wv[(offset + j) * cols..(offset + j + 1) * cols];
                    for (o, &wr) in out.iter_mut().zip(row) {
                        *o = *o + xj * wr;
                    }
                }
            }
            offset += self.vals(x).len();
        }
        let mut parents: Vec<usize> = inputs.iter().map(|v| v.0).collect();
        parents.push(w.0);
        parents.extend(b.map(|b| b.0));
        Ok(self.derived(
            Array::vector(out),
            Op::Linear {
                inputs: inputs.iter().map(|v| v.0).collect(),
                w: w.0,
                b: b.map(|b| b.0),
            },
            &parents,
        ))
    }

    pub fn matvec(&mut self, x: Var, w: Var) -> Result<Var, NdiffError> {
        self.linear(&[x], w, None)
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Array<T>, NdiffError> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        let data = self.vals(a).iter().zip(self.vals(b)).map(|(&x, &y)| f(x, y)).collect();
        Ok(Array::new(self.shape(a).to_vec(), data).expect("same shape"))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let v = self.zip_with("add", a, b, |x, y| x + y)?;
        Ok(self.derived(v, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var, NdiffError> {
        let first = *xs
            .first()
            .ok_or_else(|| NdiffError::Contract("add_n of nothing".into()))?;
        let mut acc = self.value(first).clone();
        for &x in &xs[1..] {
            if self.shape(x) != acc.shape() {
                return Err(shape_err("add_n", acc.shape(), self.shape(x)));
            }
            acc.add_assign(self.vals(x));
        }
        let parents: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.derived(acc, Op::AddN(parents.clone()), &parents))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let v = self.zip_with("mul", a, b, |x, y| x * y)?;
        Ok(self.derived(v, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.derived(v, Op::Scale(a.0, c), &[a.0])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.derived(v, Op::Sigmoid(a.0), &[a.0])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.tanh());
        self.derived(v, Op::Tanh(a.0), &[a.0])
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var, NdiffError> {
        let n = self.vector_len("softmax", a)?;
        if n == 0 {
            return Err(NdiffError::Contract("softmax of an empty vector".into()));
        }
        let mut v = self.vals(a).to_vec();
        softmax_in_place(&mut v);
        Ok(self.derived(Array::vector(v), Op::Softmax(a.0), &[a.0]))
    }

    /// Natural log with inputs below `floor` clamped to it (zero gradient there).
    pub fn ln(&mut self, a: Var, floor: T) -> Var {
        let mut hits = 0;
        let v = self.value(a).map(|x| {
            if x < floor {
                hits += 1;
                floor.ln()
            } else {
                x.ln()
            }
        });
        self.clamped_logs += hits;
        self.derived(v, Op::Ln { x: a.0, floor }, &[a.0])
    }

    pub fn concat(&mut self, xs: &[Var]) -> Result<Var, NdiffError> {
        let mut data = Vec::new();
        for &x in xs {
            self.vector_len("concat", x)?;
            data.extend_from_slice(self.vals(x));
        }
        let parents: Vec<usize> = xs.iter().map(|v| v.0).collect();
        Ok(self.derived(Array::vector(data), Op::Concat(parents.clone()), &parents))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NdiffError> {
        let n = self.vector_len("slice", x)?;
        if start + len > n {
            return Err(shape_err("slice", &[n], &[start, len]));
        }
        let data = self.vals(x)[start..start + len].to_vec();
        Ok(self.derived(Array::vector(data), Op::Slice { x: x.0, start }, &[x.0]))
    }

    /// `Σ_j weights[j] · items[j]`
    pub fn weighted_sum(&mut self, weights: Var, items: &[Var]) -> Result<Var, NdiffError> {
        let n = self.vector_len("weighted_sum", weights)?;
        if n != items.len() || n == 0 {
            return Err(shape_err("weighted_sum", &[n], &[items.len()]));
        }
        let width = self.vector_len("weighted_sum", items[0])?;
        let mut out = vec![T::zero(); width];
        for (j, &item) in items.iter().enumerate() {
            if self.shape(item) != [width] {
                return Err(shape_err("weighted_sum", self.shape(item), &[width]));
            }
            let w = self.vals(weights)[j];
            for (o, &v) in out.iter_mut().zip(self.vals(item)) {
                *o = *o + w * v;
            }
        }
        let mut parents: Vec<usize> = items.iter().map(|v| v.0).collect();
        parents.push(weights.0);
        Ok(self.derived(
            Array::vector(out),
            Op::WeightedSum {
                weights: weights.0,
                items: items.iter().map(|v| v.0).collect(),
            },
            &parents,
        ))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, NdiffError> {
        let na = self.vector_len("dot", a)?;
        if self.shape(b) != [na] {
            return Err(shape_err("dot", self.shape(a), self.shape(b)));
        }
        let s = self.vals(a).iter().zip(self.vals(b)).map(|(&x, &y)| x * y).sum();
        Ok(self.derived(Array::scalar(s), Op::Dot(a.0, b.0), &[a.0, b.0]))
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Result<Var, NdiffError> {
        let n = self.vector_len("pick", x)?;
        if index >= n {
            return Err(shape_err("pick", &[n], &[index]));
        }
        let v = self.vals(x)[index];
        Ok(self.derived(Array::scalar(v), Op::Pick { x: x.0, index }, &[x.0]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.derived(Array::scalar(s), Op::Sum(x.0), &[x.0])
    }

    /// Inverted dropout: in training mode each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`.
    /// Identity in evaluation mode or when `rate` is zero.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var, NdiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NdiffError::Contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        let Some(rng) = self.dropout_rng.as_mut() else {
            return Ok(x);
        };
        if rate == 0.0 {
            return Ok(x);
        }
        let keep = T::of(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.nodes[x.0].value.len())
            .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
            .collect();
        self.dropout_active = true;
        let data = self.vals(x).iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let value = Array::new(self.shape(x).to_vec(), data).expect("same shape");
        Ok(self.derived(value, Op::Dropout { x: x.0, mask }, &[x.0]))
    }

    /// Reverse sweep from a scalar root.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>, NdiffError> {
        if self.value(root).len() != 1 {
            return Err(NdiffError::NonScalarRoot(self.shape(root).to_vec()));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![T::one()]);

        fn acc<T: Scalar>(slot: &mut Option<Vec<T>>, len: usize) -> &mut Vec<T> {
            slot.get_or_insert_with(|| vec![T::zero(); len])
        }

        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let needs = |p: usize| self.nodes[p].requires_grad;
            let len_of = |p: usize| self.nodes[p].value.len();
            match &node.op {
                Op::Leaf => {}
                Op::Linear { inputs, w, b } => {
                    let wv = self.nodes[*w].value.data();
                    let cols = g.len();
                    let mut offset = 0;
                    for &x in inputs {
                        let xv = self.nodes[x].value.data();
                        if needs(x) {
                            let dx = acc(&mut grads[x], xv.len());
                            for (j, d) in dx.iter_mut().enumerate() {
                                let row = &wv[(offset + j) * cols..(offset + j + 1) * cols];
                                *d = *d + row.iter().zip(&g).map(|(&a, &b)| a * b).sum();
                            }
                        }
                        if needs(*w) {
                            let dw = acc(&mut grads[*w], wv.len());
                            for (j, &xj) in xv.iter().enumerate() {
                                if xj != T::zero() {
                                    let row = &mut dw[(offset + j) * cols..(offset + j + 1) * cols];
                                    for (r, &gk) in row.iter_mut().zip(&g) {
                                        *r = *r + xj * gk;
                                    }
                                }
                            }
                        }
                        offset += xv.len();
                    }
                    if let Some(b) = *b {
                        if needs(b) {
                            acc(&mut grads[b], cols)
                                .iter_mut()
                                .zip(&g)
                                .for_each(|(d, &x)| *d = *d + x);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for p in [*a, *b] {
                        if needs(p) {
                            acc(&mut grads[p], g.len())
                                .iter_mut()
                                .zip(&g)
                                .for_each(|(d, &x)| *d = *d + x);
                        }
                    }
                }
                Op::AddN(ps) => {
                    for &p in ps {
                        if needs(p) {
                            acc(&mut grads[p], g.len())
                                .iter_mut()
                                .zip(&g)
                                .for_each(|(d, &x)| *d = *d + x);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                    if needs(*a) {
                        let d = acc(&mut grads[*a], g.len());
                        for k in 0..g.len() {
                            d[k] = d[k] + g[k] * bv[k];
                        }
                    }
                    if needs(*b) {
                        let d = acc(&mut grads[*b], g.len());
                        for k in 0..g.len() {
                            d[k] = d[k] + g[k] * av[k];
                        }
                    }
                }
                Op::Scale(a, c) => {
                    if needs(*a) {
                        acc(&mut grads[*a], g.len())
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(d, &x)| *d = *d + x * *c);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    let d = acc(&mut grads[*a], g.len());
                    for k in 0..g.len() {
                        d[k] = d[k] + g[k] * y[k] * (T::one() - y[k]);
                    }
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let d = acc(&mut grads[*a], g.len());
                    for k in 0..g.len() {
                        d[k] = d[k] + g[k] * (T::one() - y[k] * y[k]);
                    }
                }
                Op::Softmax(a) => {
                    let y = node.value.data();
                    let gy: T = g.iter().zip(y).map(|(&a, &b)| a * b).sum();
                    let d = acc(&mut grads[*a], g.len());
                    for k in 0..g.len() {
                        d[k] = d[k] + y[k] * (g[k] - gy);
                    }
                }
                Op::Ln { x, floor } => {
                    let xv = self.nodes[*x].value.data();
                    let d = acc(&mut grads[*x], g.len());
                    for k in 0..g.len() {
                        if xv[k] >= *floor {
                            d[k] = d[k] + g[k] / xv[k];
                        }
                    }
                }
                Op::Concat(ps) => {
                    let mut offset = 0;
                    for &p in ps {
                        let len = len_of(p);
                        if needs(p) {
                            acc(&mut grads[p], len)
                                .iter_mut()
                                .zip(&g[offset..offset + len])
                                .for_each(|(d, &x)| *d = *d + x);
                        }
                        offset += len;
                    }
                }
                Op::Slice { x, start } => {
                    let d = acc(&mut grads[*x], len_of(*x));
                    for (k, &gk) in g.iter().enumerate() {
                        d[start + k] = d[start + k] + gk;
                    }
                }
                Op::WeightedSum { weights, items } => {
                    let wv = self.nodes[*weights].value.data();
                    if needs(*weights) {
                        let dw: Vec<T> = items
                            .iter()
                            .map(|&it| self.nodes[it].value.data().iter().zip(&g).map(|(&a, &b)| a * b).sum())
                            .collect();
                        acc(&mut grads[*weights], wv.len())
                            .iter_mut()
                            .zip(dw)
                            .for_each(|(d, x)| *d = *d + x);
                    }
                    for (j, &it) in items.iter().enumerate() {
                        if needs(it) {
                            acc(&mut grads[it], g.len())
                                .iter_mut()
                                .zip(&g)
                                .for_each(|(d, &x)| *d = *d + wv[j] * x);
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                    let s = g[0];
                    if needs(*a) {
                        acc(&mut grads[*a], av.len())
                            .iter_mut()
                            .zip(bv)
                            .for_each(|(d, &x)| *d = *d + s * x);
                    }
                    if needs(*b) {
                        acc(&mut grads[*b], bv.len())
                            .iter_mut()
                            .zip(av)
                            .for_each(|(d, &x)| *d = *d + s * x);
                    }
                }
                Op::Pick { x, index } => {
                    let d = acc(&mut grads[*x], len_of(*x));
                    d[*index] = d[*index] + g[0];
                }
                Op::Sum(x) => {
                    acc(&mut grads[*x], len_of(*x)).iter_mut().for_each(|d| *d = *d + g[0]);
                }
                Op::Dropout { x, mask } => {
                    let d = acc(&mut grads[*x], g.len());
                    for k in 0..g.len() {
                        d[k] = d[k] + g[k] * mask[k];
                    }
                }
            }
            // leaves keep their adjoint
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
            params: self.params.clone(),
        })
    }
}
