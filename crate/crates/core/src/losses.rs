//! Objective functions and their brute-force reference implementations.
//!
//! The contrastive losses are sums over anchors. An anchor `i` with positive
//! set `P(i)` contributes
//!
//! ```text
//! w_i · Σ_{j∈P(i)} −log( exp(s_ij) / (Σ_{k≠i} exp(s_ik) + Σ_neg exp(s_i,neg)) )
//! ```
//!
//! with `s = z·z'/τ`, `w_i = 1/|P(i)|` by default, and anchors without
//! positives contributing 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, CustomOp, Graph, Tensor, Var};
use crate::rules::MetaTarget;

const UNIT_TOL: f64 = 1e-9;

/// Symmetric B×B "shares a label" relation with an empty diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PositiveMask {
    size: usize,
    mask: Vec<bool>,
    counts: Vec<usize>,
}

impl PositiveMask {
    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.size + j]
    }

    /// Number of positives of anchor `i`.
    pub fn count(&self, i: usize) -> usize {
        self.counts[i]
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

fn intersects(a: &[usize], b: &[usize]) -> bool {
    a.iter().any(|x| b.contains(x))
}

pub fn build_positive_mask<L: AsRef<[usize]>>(labelsets: &[L]) -> Result<PositiveMask> {
    let b = labelsets.len();
    if b < 2 {
        return Err(Error::InvalidArgument(format!("batch of {b}, need at least 2")));
    }
    if let Some(i) = labelsets.iter().position(|l| l.as_ref().is_empty()) {
        return Err(Error::InvalidArgument(format!("labelset {i} is empty")));
    }
    let mut mask = vec![false; b * b];
    let mut counts = vec![0; b];
    for i in 0..b {
        for j in 0..b {
            if i != j && intersects(labelsets[i].as_ref(), labelsets[j].as_ref()) {
                mask[i * b + j] = true;
                counts[i] += 1;
            }
        }
    }
    Ok(PositiveMask { size: b, mask, counts })
}

/// Per-anchor weight in front of the sum over positives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// `1/|P(i)|`.
    #[default]
    PositiveCount,
    /// `1/(2|P(i)|+1)`, i.e. `1/(2N−1)` with `N` counting the anchor itself.
    Doubled,
}

impl Normalization {
    fn weight(self, positives: usize) -> f64 {
        match self {
            Normalization::PositiveCount => 1.0 / positives as f64,
            Normalization::Doubled => 1.0 / (2 * positives + 1) as f64,
        }
    }
}

/// Which incorrect completions enter an anchor's denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NegativeScope {
    /// The incorrect completions of every instance, the anchor's own included.
    #[default]
    All,
    /// Only those of the other instances.
    Others,
    /// None; the loss reduces to the plain multi-label loss.
    Off,
}

impl NegativeScope {
    fn includes(self, anchor: usize, owner: usize) -> bool {
        match self {
            NegativeScope::All => true,
            NegativeScope::Others => anchor != owner,
            NegativeScope::Off => false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastOptions {
    pub normalization: Normalization,
    pub negatives: NegativeScope,
}

/// Projections of a batch, with optional incorrect-completion projections.
#[derive(Clone, Debug)]
pub struct ContrastBatch {
    /// `[B, p]`, unit rows.
    pub z: Tensor,
    /// `[B, K, p]`, unit rows; `K` incorrect completions per instance.
    pub zneg: Option<Tensor>,
    pub labelsets: Vec<Vec<usize>>,
    pub tau: f64,
}

fn check_unit_rows(t: &[f64], p: usize, what: &str) -> Result<()> {
    for (r, row) in t.chunks(p).enumerate() {
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidArgument(format!("{what} row {r} has norm {n}")));
        }
    }
    Ok(())
}

impl ContrastBatch {
    pub fn new(z: Tensor, zneg: Option<Tensor>, labelsets: Vec<Vec<usize>>, tau: f64) -> Result<Self> {
        let batch = Self { z, zneg, labelsets, tau };
        batch.validate()?;
        Ok(batch)
    }

    pub fn len(&self) -> usize {
        self.labelsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labelsets.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::InvalidArgument(format!("temperature must be positive, got {}", self.tau)));
        }
        if self.z.shape().len() != 2 || self.z.rows() != self.labelsets.len() {
            return Err(Error::Shape(format!(
                "z has shape {:?} for {} labelsets",
                self.z.shape(),
                self.labelsets.len()
            )));
        }
        if self.len() < 2 {
            return Err(Error::InvalidArgument("batch needs at least 2 elements".into()));
        }
        let p = self.z.cols();
        check_unit_rows(self.z.data(), p, "z")?;
        if let Some(n) = &self.zneg {
            let s = n.shape();
            if s.len() != 3 || s[0] != self.len() || s[2] != p || s[1] == 0 {
                return Err(Error::Shape(format!("zneg has shape {s:?}, expected [{}, K, {p}]", self.len())));
            }
            check_unit_rows(n.data(), p, "zneg")?;
        }
        Ok(())
    }

    fn negatives_per_instance(&self) -> usize {
        self.zneg.as_ref().map_or(0, |n| n.shape()[1])
    }
}

struct Core {
    loss: f64,
    dz: Vec<f64>,
    dzneg: Vec<f64>,
}

/// Vectorized loss and gradient. `zneg` holds `b·k` rows, instance-major.
fn contrastive_core(
    z: &[f64],
    b: usize,
    p: usize,
    zneg: &[f64],
    k: usize,
    mask: &PositiveMask,
    tau: f64,
    opts: ContrastOptions,
    want_grad: bool,
) -> Core {
    let m = b * k;
    let mut s = vec![0.0; b * b];
    gemm(b, p, b, z, false, z, true, &mut s, 0.0);
    let mut sn = vec![0.0; b * m];
    if m > 0 {
        gemm(b, p, m, z, false, zneg, true, &mut sn, 0.0);
    }
    s.iter_mut().for_each(|x| *x /= tau);
    sn.iter_mut().for_each(|x| *x /= tau);

    let mut loss = 0.0;
    let mut gs = vec![0.0; b * b];
    let mut gn = vec![0.0; b * m];
    for i in 0..b {
        let np = mask.count(i);
        if np == 0 {
            continue;
        }
        let w = opts.normalization.weight(np);
        let row = &s[i * b..(i + 1) * b];
        let nrow = &sn[i * m..(i + 1) * m];
        let in_scope = |c: usize| opts.negatives.includes(i, c / k.max(1));
        let mut mx = f64::NEG_INFINITY;
        for (j, v) in row.iter().enumerate() {
            if j != i {
                mx = mx.max(*v);
            }
        }
        for (c, v) in nrow.iter().enumerate() {
            if in_scope(c) {
                mx = mx.max(*v);
            }
        }
        let mut total = 0.0;
        for (j, v) in row.iter().enumerate() {
            if j != i {
                total += (v - mx).exp();
            }
        }
        for (c, v) in nrow.iter().enumerate() {
            if in_scope(c) {
                total += (v - mx).exp();
            }
        }
        let log_den = mx + total.ln();
        let mut pos_sum = 0.0;
        for (j, v) in row.iter().enumerate() {
            if mask.get(i, j) {
                pos_sum += log_den - v;
            }
        }
        loss += w * pos_sum;
        if want_grad {
            let scale = w * np as f64;
            for (j, v) in row.iter().enumerate() {
                if j != i {
                    let mut g = scale * (v - log_den).exp();
                    if mask.get(i, j) {
                        g -= w;
                    }
                    gs[i * b + j] = g;
                }
            }
            for (c, v) in nrow.iter().enumerate() {
                if in_scope(c) {
                    gn[i * m + c] = scale * (v - log_den).exp();
                }
            }
        }
    }
    let mut dz = Vec::new();
    let mut dzneg = Vec::new();
    if want_grad {
        // s_ij = z_i·z_j/τ appears in rows i and j
        let sym: Vec<f64> = (0..b * b).map(|t| (gs[t] + gs[(t % b) * b + t / b]) / tau).collect();
        dz = vec![0.0; b * p];
        gemm(b, b, p, &sym, false, z, false, &mut dz, 0.0);
        if m > 0 {
            let gn: Vec<f64> = gn.iter().map(|x| x / tau).collect();
            gemm(b, m, p, &gn, false, zneg, false, &mut dz, 1.0);
            dzneg = vec![0.0; m * p];
            gemm(m, b, p, &gn, true, z, false, &mut dzneg, 0.0);
        }
    }
    Core { loss, dz, dzneg }
}

/// Contrastive loss with explicit options; `zneg` is used unless the scope
/// is [`NegativeScope::Off`].
pub fn contrastive_loss(batch: &ContrastBatch, opts: ContrastOptions) -> Result<f64> {
    batch.validate()?;
    let mask = build_positive_mask(&batch.labelsets)?;
    let (zn, k): (&[f64], usize) = match (&batch.zneg, opts.negatives) {
        (_, NegativeScope::Off) => (&[], 0),
        (Some(n), _) => (n.data(), batch.negatives_per_instance()),
        (None, _) => return Err(Error::InvalidArgument("negative samples requested but zneg is missing".into())),
    };
    let core = contrastive_core(
        batch.z.data(),
        batch.len(),
        batch.z.cols(),
        zn,
        k,
        &mask,
        batch.tau,
        opts,
        false,
    );
    Ok(core.loss)
}

/// Single-label supervised contrastive loss. Every labelset must be a
/// singleton.
pub fn supcon_loss(batch: &ContrastBatch) -> Result<f64> {
    if let Some(i) = batch.labelsets.iter().position(|l| l.len() != 1) {
        return Err(Error::InvalidArgument(format!("labelset {i} is not a singleton")));
    }
    contrastive_loss(
        batch,
        ContrastOptions {
            negatives: NegativeScope::Off,
            ..Default::default()
        },
    )
}

/// Multi-label contrastive loss; `zneg` is ignored.
pub fn mlc_loss(batch: &ContrastBatch) -> Result<f64> {
    contrastive_loss(
        batch,
        ContrastOptions {
            negatives: NegativeScope::Off,
            ..Default::default()
        },
    )
}

/// Multi-label contrastive loss with the incorrect completions of every
/// instance as extra negatives.
pub fn mlc_loss_with_negatives(batch: &ContrastBatch) -> Result<f64> {
    if batch.zneg.is_none() {
        return Err(Error::InvalidArgument("zneg is required".into()));
    }
    contrastive_loss(batch, ContrastOptions::default())
}

/// Reference implementation with plain nested loops. Shares nothing with
/// [`contrastive_loss`] beyond the input layout.
pub fn brute_force_mlc_oracle(batch: &ContrastBatch, opts: ContrastOptions) -> Result<f64> {
    batch.validate()?;
    let b = batch.len();
    let p = batch.z.cols();
    let z = |i: usize, c: usize| batch.z.data()[i * p + c];
    let k = if opts.negatives == NegativeScope::Off { 0 } else { batch.negatives_per_instance() };
    if opts.negatives != NegativeScope::Off && batch.zneg.is_none() {
        return Err(Error::InvalidArgument("zneg is required".into()));
    }
    let zn = |owner: usize, l: usize, c: usize| batch.zneg.as_ref().expect("checked").data()[(owner * k + l) * p + c];
    let mut total = 0.0;
    for i in 0..b {
        if batch.labelsets[i].is_empty() {
            return Err(Error::InvalidArgument(format!("labelset {i} is empty")));
        }
        let mut positives = Vec::new();
        for j in 0..b {
            if j == i {
                continue;
            }
            let mut shared = false;
            for a in &batch.labelsets[i] {
                for c in &batch.labelsets[j] {
                    if a == c {
                        shared = true;
                    }
                }
            }
            if shared {
                positives.push(j);
            }
        }
        if positives.is_empty() {
            continue;
        }
        let mut den = 0.0;
        for j in 0..b {
            if j != i {
                let mut dot = 0.0;
                for c in 0..p {
                    dot += z(i, c) * z(j, c);
                }
                den += (dot / batch.tau).exp();
            }
        }
        for owner in 0..b {
            if opts.negatives == NegativeScope::Others && owner == i {
                continue;
            }
            for l in 0..k {
                let mut dot = 0.0;
                for c in 0..p {
                    dot += z(i, c) * zn(owner, l, c);
                }
                den += (dot / batch.tau).exp();
            }
        }
        let mut anchor = 0.0;
        for &j in &positives {
            let mut dot = 0.0;
            for c in 0..p {
                dot += z(i, c) * z(j, c);
            }
            anchor += -((dot / batch.tau).exp() / den).ln();
        }
        let weight = match opts.normalization {
            Normalization::PositiveCount => positives.len() as f64,
            Normalization::Doubled => (2 * positives.len() + 1) as f64,
        };
        total += anchor / weight;
    }
    Ok(total)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `−[y log σ(x) + (1−y) log(1−σ(x))]` without overflow.
fn bce(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

/// Mean binary cross-entropy of sigmoid(logits) against the target bits.
pub fn aux_loss(logits: &[f64], target: &MetaTarget) -> Result<f64> {
    if logits.len() != target.len() {
        return Err(Error::Shape(format!("{} logits for a {}-bit target", logits.len(), target.len())));
    }
    let y = target.to_f64();
    Ok(logits.iter().zip(&y).map(|(x, y)| bce(*x, *y)).sum::<f64>() / logits.len() as f64)
}

/// Balancing factors of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub gamma: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { gamma: 1.0, beta: 10.0 }
    }
}

impl LossWeights {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma >= 0.0 && beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("weights must be nonnegative, got γ={gamma}, β={beta}")));
        }
        Ok(Self { gamma, beta })
    }

    /// Contrastive pre-training needs at least one active term.
    pub fn check_pretraining(&self) -> Result<()> {
        if self.gamma == 0.0 && self.beta == 0.0 {
            return Err(Error::InvalidArgument("γ and β are both zero".into()));
        }
        Ok(())
    }
}

pub fn combined_loss(weights: LossWeights, contrastive: f64, aux: f64) -> f64 {
    weights.gamma * contrastive + weights.beta * aux
}

/// Softmax with max-shift.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mx = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Cross-entropy of softmax(scores) at the 1-based `correct_index`.
pub fn ce_answer_loss(scores: &[f64], correct_index: u8) -> Result<f64> {
    if scores.len() != 8 {
        return Err(Error::Shape(format!("{} scores, expected 8", scores.len())));
    }
    if !(1..=8).contains(&correct_index) {
        return Err(Error::InvalidArgument(format!("correct index {correct_index} outside 1..8")));
    }
    Ok(crate::numerics::logsumexp(scores)? - scores[usize::from(correct_index) - 1])
}

struct ContrastiveOp {
    mask: PositiveMask,
    tau: f64,
    opts: ContrastOptions,
    k: usize,
}

impl CustomOp for ContrastiveOp {
    fn name(&self) -> &'static str {
        "contrastive"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let z = inputs[0];
        let zn = inputs.get(1).map_or(&[][..], |t| t.data());
        let core = contrastive_core(z.data(), z.rows(), z.cols(), zn, self.k, &self.mask, self.tau, self.opts, false);
        Ok(Tensor::scalar(core.loss))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let z = inputs[0];
        let zn = inputs.get(1).map_or(&[][..], |t| t.data());
        let core = contrastive_core(z.data(), z.rows(), z.cols(), zn, self.k, &self.mask, self.tau, self.opts, true);
        let g = grad.item();
        let scaled = |v: Vec<f64>, shape: &[usize]| {
            Tensor::new(shape.to_vec(), v.into_iter().map(|x| x * g).collect()).expect("gradient shape")
        };
        let mut out = vec![Some(scaled(core.dz, z.shape()))];
        if let Some(n) = inputs.get(1) {
            out.push(Some(scaled(core.dzneg, n.shape())));
        }
        out
    }
}

/// Adds the contrastive loss of `z` (`[B, p]`, unit rows) to the graph.
/// `zneg` holds `B·K` rows, instance-major, and is ignored when the scope is
/// [`NegativeScope::Off`].
pub fn contrastive_node(
    g: &mut Graph,
    z: Var,
    zneg: Option<Var>,
    labelsets: &[Vec<usize>],
    tau: f64,
    opts: ContrastOptions,
) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be positive, got {tau}")));
    }
    let mask = build_positive_mask(labelsets)?;
    let b = g.value(z).rows();
    if b != labelsets.len() {
        return Err(Error::Shape(format!("{b} projections for {} labelsets", labelsets.len())));
    }
    let zneg = if opts.negatives == NegativeScope::Off { None } else { zneg };
    let k = match zneg {
        Some(n) => {
            let rows = g.value(n).rows();
            if rows % b != 0 || rows == 0 {
                return Err(Error::Shape(format!("{rows} negative rows for a batch of {b}")));
            }
            rows / b
        }
        None => 0,
    };
    let inputs: Vec<Var> = std::iter::once(z).chain(zneg).collect();
    g.custom(&inputs, Box::new(ContrastiveOp { mask, tau, opts, k }))
}

struct BceOp {
    targets: Vec<f64>,
}

impl CustomOp for BceOp {
    fn name(&self) -> &'static str {
        "bce"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let x = inputs[0];
        let d = x.cols() as f64;
        Ok(Tensor::scalar(
            x.data().iter().zip(&self.targets).map(|(x, y)| bce(*x, *y)).sum::<f64>() / d,
        ))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let x = inputs[0];
        let c = grad.item() / x.cols() as f64;
        let dx = x.data().iter().zip(&self.targets).map(|(x, y)| c * (sigmoid(*x) - y)).collect();
        vec![Some(Tensor::new(x.shape().to_vec(), dx).expect("gradient shape"))]
    }
}

/// Sum over rows of the per-row mean BCE; `targets` has the shape of
/// `logits` (`[n, d]`).
pub fn aux_node(g: &mut Graph, logits: Var, targets: &Tensor) -> Result<Var> {
    let shape = g.value(logits).shape().to_vec();
    if shape.len() != 2 || shape != targets.shape() {
        return Err(Error::Shape(format!("logits {shape:?} vs targets {:?}", targets.shape())));
    }
    g.custom(
        &[logits],
        Box::new(BceOp {
            targets: targets.data().to_vec(),
        }),
    )
}

struct CeOp {
    correct: Vec<usize>,
}

impl CustomOp for CeOp {
    fn name(&self) -> &'static str {
        "answer_ce"
    }

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor> {
        let s = inputs[0];
        let mut total = 0.0;
        for (r, &k) in self.correct.iter().enumerate() {
            total += crate::numerics::logsumexp(s.row(r))? - s.row(r)[k];
        }
        Ok(Tensor::scalar(total))
    }

    fn backward(&self, inputs: &[&Tensor], _output: &Tensor, grad: &Tensor) -> Vec<Option<Tensor>> {
        let s = inputs[0];
        let g = grad.item();
        let mut d = Vec::with_capacity(s.len());
        for (r, &k) in self.correct.iter().enumerate() {
            let mut p = softmax(s.row(r));
            p[k] -= 1.0;
            d.extend(p.into_iter().map(|x| x * g));
        }
        vec![Some(Tensor::new(s.shape().to_vec(), d).expect("gradient shape"))]
    }
}

/// Sum over rows of the answer cross-entropy; `scores` is `[n, C]` and
/// `correct` holds 0-based indices.
pub fn ce_node(g: &mut Graph, scores: Var, correct: Vec<usize>) -> Result<Var> {
    let s = g.value(scores);
    if s.shape().len() != 2 || s.rows() != correct.len() || correct.iter().any(|k| *k >= s.cols()) {
        return Err(Error::Shape(format!("scores {:?} for {} answers", s.shape(), correct.len())));
    }
    g.custom(&[scores], Box::new(CeOp { correct }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter().map(|x| x / n).collect()
    }

    #[test]
    fn mask_example() {
        let m = build_positive_mask(&[vec![0, 1], vec![1, 2], vec![3]]).unwrap();
        assert!(m.get(0, 1) && m.get(1, 0));
        assert_eq!(m.counts(), &[1, 1, 0]);
        assert!(build_positive_mask(&[vec![0], vec![]]).is_err());
    }

    #[test]
    fn two_element_batch_is_zero() {
        let z = Tensor::from_rows(&[unit(&[1.0, 2.0]), unit(&[-3.0, 0.5])]).unwrap();
        let b = ContrastBatch::new(z, None, vec![vec![4], vec![4]], 0.1).unwrap();
        assert!(supcon_loss(&b).unwrap().abs() < 1e-15);
    }

    #[test]
    fn aux_at_zero_is_log2() {
        let t = MetaTarget::from_bit_string(crate::rules::Grammar::PairStyle, crate::rules::Scheme::Dense, "101000110")
            .unwrap();
        assert!((aux_loss(&[0.0; 9], &t).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(aux_loss(&[0.0; 8], &t).is_err());
    }

    #[test]
    fn ce_uniform_is_log8() {
        assert!((ce_answer_loss(&[0.3; 8], 5).unwrap() - 8f64.ln()).abs() < 1e-15);
        assert!(ce_answer_loss(&[0.0; 8], 0).is_err());
        assert!(ce_answer_loss(&[0.0; 8], 9).is_err());
    }

    #[test]
    fn bad_temperature() {
        let z = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(ContrastBatch::new(z, None, vec![vec![0], vec![0]], 0.0).is_err());
    }
}
