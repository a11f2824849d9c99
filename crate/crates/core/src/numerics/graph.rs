//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is rebuilt for every forward pass. Nodes are appended in
//! evaluation order, so the node list is already a topological order and the
//! backward sweep is a single reverse pass over it.

use std::collections::HashMap;
use std::fmt;

use super::tensor::{gemm, norm_divisor, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// FNV-1a over names, shapes and the exact bit patterns of every value.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        for (_, name, value) in self.iter() {
            eat(name.as_bytes());
            for d in value.shape() {
                eat(&(*d as u64).to_le_bytes());
            }
            for v in value.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

/// A differentiable operation defined outside this module.
///
/// `backward` returns one entry per input; `None` means "no gradient".
pub trait CustomOp {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>>;
}

/// Geometry of a square-kernel convolution over NHWC input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.channels
    }

    /// Calls `f(patch_offset, input_offset)` for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let (oh, ow) = (self.out_height(), self.out_width());
        let patch = self.patch_len();
        for n in 0..self.batch {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (n * oh + oy) * ow + ox;
                    for ky in 0..self.kernel {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        for kx in 0..self.kernel {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix < 0 || ix >= self.width as isize {
                                continue;
                            }
                            let base = ((n * self.height + iy as usize) * self.width
                                + ix as usize)
                                * self.channels;
                            let col = (ky * self.kernel + kx) * self.channels;
                            for c in 0..self.channels {
                                f(row * patch + col + c, base + c);
                            }
                        }
                    }
                }
            }
        }
    }
}

enum Op {
    Input,
    Param,
    MatMul { a: Var, b: Var, b_t: bool },
    AddBias { a: Var, bias: Var },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sum(Var),
    Reshape(Var),
    GatherRows { a: Var, index: Vec<usize> },
    NormalizeRows(Var),
    LayerNormRows(Var),
    Im2Col { a: Var, geom: ConvGeom },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Evaluation tape. Every method evaluates its operation immediately and
/// records how to differentiate it.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("nodes", &self.nodes.len())
            .field("params", &self.params.len())
            .finish()
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Differentiable leaf that is not a parameter (useful for probing
    /// gradients with respect to intermediate quantities).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Leaf holding a copy of a parameter. Repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param, true);
        self.params.insert(id, v);
        v
    }

    /// Parameter leaf that does not take part in differentiation.
    pub fn frozen_param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.input(store.get(id).clone())
    }

    fn dims2(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(Error::Shape(format!("{what}: expected 2-D tensor, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    /// `a · b` (or `a · bᵀ` when `b_t`).
    pub fn matmul_opt(&mut self, a: Var, b: Var, b_t: bool) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul lhs")?;
        let (br, bc) = self.dims2(b, "matmul rhs")?;
        let (kb, n) = if b_t { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(Error::Shape(format!(
                "matmul inner extents differ: {k} vs {kb}"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            b_t,
            &mut out,
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b, b_t }, rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_opt(a, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_opt(a, b, true)
    }

    /// Adds a length-`n` bias to every row of an `[m, n]` tensor.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.dims2(a, "add_bias")?;
        if self.value(bias).len() != n {
            return Err(Error::Shape(format!(
                "bias length {} vs {n} columns",
                self.value(bias).len()
            )));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n) {
            for (x, bb) in row.iter_mut().zip(b) {
                *x += bb;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::AddBias { a, bias }, rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let mut out = self.value(a).clone();
        for (x, y) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *x *= y;
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x *= c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Selects rows of a 2-D tensor; indices may repeat.
    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Result<Var> {
        let (m, n) = self.dims2(a, "gather_rows")?;
        if let Some(bad) = index.iter().find(|&&i| i >= m) {
            return Err(Error::Shape(format!("row {bad} out of {m}")));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in &index {
            out.extend_from_slice(&src[i * n..(i + 1) * n]);
        }
        let rows = index.len();
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(vec![rows, n], out)?,
            Op::GatherRows { a, index },
            rg,
        ))
    }

    /// Scales every row to unit norm (see [`l2_normalize`](super::l2_normalize)).
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.dims2(a, "normalize_rows")?;
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n) {
            let d = norm_divisor(row.iter().map(|x| x * x).sum::<f64>().sqrt());
            row.iter_mut().for_each(|x| *x /= d);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::NormalizeRows(a), rg))
    }

    /// Zero-mean, unit-variance rows (no affine parameters).
    pub fn layer_norm_rows(&mut self, a: Var) -> Result<Var> {
        let (_, n) = self.dims2(a, "layer_norm_rows")?;
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(n) {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|x| *x = (*x - mean) * inv);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::LayerNormRows(a), rg))
    }

    /// Unfolds NHWC input into `[batch·out_h·out_w, kernel²·channels]` patches.
    pub fn im2col(&mut self, a: Var, geom: ConvGeom) -> Result<Var> {
        let expected = [geom.batch, geom.height, geom.width, geom.channels];
        if self.value(a).shape() != expected {
            return Err(Error::Shape(format!(
                "im2col: expected {expected:?}, got {:?}",
                self.value(a).shape()
            )));
        }
        let rows = geom.batch * geom.out_height() * geom.out_width();
        let mut out = vec![0.0; rows * geom.patch_len()];
        let src = self.value(a).data();
        geom.for_each_tap(|dst, s| out[dst] = src[s]);
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::new(vec![rows, geom.patch_len()], out)?,
            Op::Im2Col { a, geom },
            rg,
        ))
    }

    pub fn custom(&mut self, inputs: &[Var], op: Box<dyn CustomOp>) -> Result<Var> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
        let out = op.forward(&values)?;
        let rg = inputs.iter().any(|v| self.rg(*v));
        Ok(self.push(
            out,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads)?;
            }
            grads[i] = Some(g);
        }
        let params = self.params.iter().map(|(id, v)| (*id, v.0)).collect();
        Ok(Grads { nodes: grads, params })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul { a, b, b_t } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let (m, k) = (av.rows(), av.cols());
                let n = g.cols();
                if self.rg(*a) {
                    // dA = G · Bᵀ  (or G · B when b stored transposed)
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), !b_t, &mut da, 0.0);
                    acc(*a, Tensor::new(vec![m, k], da)?);
                }
                if self.rg(*b) {
                    if *b_t {
                        // B is [n,k]; dB = Gᵀ · A
                        let mut db = vec![0.0; n * k];
                        gemm(n, m, k, g.data(), true, av.data(), false, &mut db, 0.0);
                        acc(*b, Tensor::new(vec![n, k], db)?);
                    } else {
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, av.data(), true, g.data(), false, &mut db, 0.0);
                        acc(*b, Tensor::new(vec![k, n], db)?);
                    }
                }
            }
            Op::AddBias { a, bias } => {
                acc(*a, g.clone());
                if self.rg(*bias) {
                    let n = g.cols();
                    let mut db = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (d, x) in db.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                    let shape = self.value(*bias).shape().to_vec();
                    acc(*bias, Tensor::new(shape, db)?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = g.clone();
                da.data_mut()
                    .iter_mut()
                    .zip(bv.data())
                    .for_each(|(d, y)| *d *= y);
                let mut db = g.clone();
                db.data_mut()
                    .iter_mut()
                    .zip(av.data())
                    .for_each(|(d, x)| *d *= x);
                acc(*a, da);
                acc(*b, db);
            }
            Op::Scale(a, c) => {
                let mut da = g.clone();
                da.data_mut().iter_mut().for_each(|d| *d *= c);
                acc(*a, da);
            }
            Op::Relu(a) => {
                let mut da = g.clone();
                da.data_mut()
                    .iter_mut()
                    .zip(node.value.data())
                    .for_each(|(d, y)| {
                        if *y <= 0.0 {
                            *d = 0.0
                        }
                    });
                acc(*a, da);
            }
            Op::Sum(a) => {
                let av = self.value(*a);
                let gv = g.item();
                acc(*a, Tensor::new(av.shape().to_vec(), vec![gv; av.len()])?);
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape().to_vec();
                acc(*a, g.clone().reshape(&shape)?);
            }
            Op::GatherRows { a, index } => {
                let av = self.value(*a);
                let n = av.cols();
                let mut da = Tensor::zeros(av.shape());
                let dst = da.data_mut();
                for (r, &i) in index.iter().enumerate() {
                    for c in 0..n {
                        dst[i * n + c] += g.data()[r * n + c];
                    }
                }
                acc(*a, da);
            }
            Op::NormalizeRows(a) => {
                let av = self.value(*a);
                let n = av.cols();
                let mut da = vec![0.0; av.len()];
                for (x, (gr, out)) in av
                    .data()
                    .chunks(n)
                    .zip(g.data().chunks(n).zip(da.chunks_mut(n)))
                {
                    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let d = norm_divisor(norm);
                    // y = x / d(|x|):  dx = (g - x·(g·x)/(|x| d)) / d
                    let gx: f64 = gr.iter().zip(x).map(|(a, b)| a * b).sum();
                    let coef = if norm > 0.0 { gx / (norm * d) } else { 0.0 };
                    for j in 0..n {
                        out[j] = (gr[j] - x[j] * coef) / d;
                    }
                }
                acc(*a, Tensor::new(av.shape().to_vec(), da)?);
            }
            Op::LayerNormRows(a) => {
                let av = self.value(*a);
                let n = av.cols();
                let mut da = vec![0.0; av.len()];
                for ((x, y), (gr, out)) in av
                    .data()
                    .chunks(n)
                    .zip(node.value.data().chunks(n))
                    .zip(g.data().chunks(n).zip(da.chunks_mut(n)))
                {
                    let mean = x.iter().sum::<f64>() / n as f64;
                    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                    let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                    let gm = gr.iter().sum::<f64>() / n as f64;
                    let gy = gr.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        out[j] = inv * (gr[j] - gm - y[j] * gy);
                    }
                }
                acc(*a, Tensor::new(av.shape().to_vec(), da)?);
            }
            Op::Im2Col { a, geom } => {
                let av = self.value(*a);
                let mut da = Tensor::zeros(av.shape());
                let dst = da.data_mut();
                geom.for_each_tap(|col, s| dst[s] += g.data()[col]);
                acc(*a, da);
            }
            Op::Custom { inputs, op } => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let outs = op.backward(&values, &node.value, g);
                if outs.len() != inputs.len() {
                    return Err(Error::Shape(format!(
                        "{} returned {} gradients for {} inputs",
                        op.name(),
                        outs.len(),
                        inputs.len()
                    )));
                }
                for (v, d) in inputs.iter().zip(outs) {
                    if let Some(d) = d {
                        acc(*v, d);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Grads {
    nodes: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Grads {
    /// Gradient of a graph node, if it was reached.
    pub fn var(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].as_ref()
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, n)| self.nodes[*n].as_ref())
    }

    /// Gradients aligned with `store`, zero for parameters the loss did not use.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .iter()
            .map(|(id, _, v)| {
                self.param(id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(v.shape()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn finite_diff(
        store: &ParamStore,
        f: &dyn Fn(&ParamStore) -> f64,
        id: ParamId,
        idx: usize,
        h: f64,
    ) -> f64 {
        let mut plus = store.clone();
        plus.get_mut(id).data_mut()[idx] += h;
        let mut minus = store.clone();
        minus.get_mut(id).data_mut()[idx] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    }

    fn check(store: &ParamStore, build: impl Fn(&mut Graph, &ParamStore) -> Var) {
        let mut g = Graph::new();
        let loss = build(&mut g, store);
        let grads = g.backward(loss).unwrap().for_store(store);
        let f = |s: &ParamStore| {
            let mut g = Graph::new();
            let l = build(&mut g, s);
            g.value(l).item()
        };
        for id in store.ids() {
            for idx in 0..store.get(id).len() {
                let num = finite_diff(store, &f, id, idx, 1e-5);
                let ana = grads[id.0].data()[idx];
                let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-3);
                assert!(rel < 1e-5, "{} [{idx}]: {ana} vs {num}", store.name(id));
            }
        }
    }

    fn seeded(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
            })
            .collect()
    }

    #[test]
    fn square_gradient() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::from_vec(vec![3.0]));
        let mut g = Graph::new();
        let xv = g.param(&store, x);
        let sq = g.mul(xv, xv).unwrap();
        let l = g.sum(sq);
        let grads = g.backward(l).unwrap();
        assert_eq!(grads.param(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let v = g.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(g.backward(v), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn normalize_then_dot_matches_fd() {
        let mut store = ParamStore::new();
        store.add("v", Tensor::new(vec![1, 5], seeded(5, 1)).unwrap());
        let c = Tensor::new(vec![1, 5], seeded(5, 2)).unwrap();
        check(&store, |g, s| {
            let v = g.param(s, ParamId(0));
            let n = g.normalize_rows(v).unwrap();
            let cv = g.input(c.clone());
            let p = g.mul(n, cv).unwrap();
            g.sum(p)
        });
    }

    #[test]
    fn mlp_chain_matches_fd() {
        let mut store = ParamStore::new();
        store.add("w1", Tensor::new(vec![4, 6], seeded(24, 3)).unwrap());
        store.add("b1", Tensor::from_vec(seeded(6, 4)));
        store.add("w2", Tensor::new(vec![3, 6], seeded(18, 5)).unwrap());
        let x = Tensor::new(vec![5, 4], seeded(20, 6)).unwrap();
        check(&store, |g, s| {
            let xv = g.input(x.clone());
            let w1 = g.param(s, ParamId(0));
            let b1 = g.param(s, ParamId(1));
            let w2 = g.param(s, ParamId(2));
            let h = g.matmul(xv, w1).unwrap();
            let h = g.add_bias(h, b1).unwrap();
            let h = g.layer_norm_rows(h).unwrap();
            let h = g.relu(h);
            let o = g.matmul_t(h, w2).unwrap();
            let o = g.gather_rows(o, vec![4, 0, 0, 2]).unwrap();
            let o = g.reshape(o, &[2, 6]).unwrap();
            let o = g.normalize_rows(o).unwrap();
            let sq = g.mul(o, o).unwrap();
            let o = g.add(o, sq).unwrap();
            let o = g.scale(o, 0.7);
            g.sum(o)
        });
    }

    #[test]
    fn conv_matches_fd() {
        let geom = ConvGeom {
            batch: 2,
            height: 5,
            width: 5,
            channels: 2,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let mut store = ParamStore::new();
        store.add("x", Tensor::new(vec![2, 5, 5, 2], seeded(100, 7)).unwrap());
        store.add("w", Tensor::new(vec![18, 3], seeded(54, 8)).unwrap());
        check(&store, |g, s| {
            let x = g.param(s, ParamId(0));
            let w = g.param(s, ParamId(1));
            let cols = g.im2col(x, geom).unwrap();
            let y = g.matmul(cols, w).unwrap();
            let y2 = g.mul(y, y).unwrap();
            g.sum(y2)
        });
    }

    #[test]
    fn im2col_shape() {
        let geom = ConvGeom {
            batch: 1,
            height: 28,
            width: 28,
            channels: 1,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        assert_eq!((geom.out_height(), geom.out_width()), (14, 14));
        let mut g = Graph::new();
        let x = g.input(Tensor::zeros(&[1, 28, 28, 1]));
        let c = g.im2col(x, geom).unwrap();
        assert_eq!(g.value(c).shape(), &[196, 9]);
    }

    #[test]
    fn inputs_receive_no_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap());
        let wv = g.param(&store, w);
        let y = g.matmul(x, wv).unwrap();
        let l = g.sum(y);
        let grads = g.backward(l).unwrap();
        assert!(grads.var(x).is_none());
        assert_eq!(grads.param(w).unwrap().data(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn fingerprint_tracks_bits() {
        let mut a = ParamStore::new();
        a.add("w", Tensor::from_vec(vec![1.0, 2.0]));
        let mut b = a.clone();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.get_mut(ParamId(0)).data_mut()[1] = f64::from_bits(2f64.to_bits() + 1);
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
