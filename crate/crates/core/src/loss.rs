//! Mixed cross-entropy losses.
//!
//! Every variant is a cross-entropy against a target row built from the true label:
//!
//! * simple MCEL: `t = (1 - ε) e_y + ε A[y]` with a scalar `ε ∈ [0, 0.5)`
//! * semi-generalized (SG-MCEL): the same with a per-class `ε_y`; inside the target the
//!   diagonal of `A` is taken as 1, so `t = p_y = [ε_y A[y][j] (j ≠ y), (1 - ε_y)]`
//! * generalized (GMCEL): `t = E[y]` for a row-stochastic mixture matrix `E` whose
//!   diagonal beats every off-diagonal entry by a per-class margin `c_y`
//!
//! The soft-constrained variants add penalties on the mixing parameters so they can be
//! learned together with the network, and return the gradient with respect to them.
//!
//! Probabilities are clamped to `[PROB_FLOOR, 1]` before the logarithm. Batch losses are
//! sums over samples, accumulated in batch order.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lda::SimilarityMatrix;
use crate::numerics::Matrix;

/// Lower clamp applied to probabilities inside `log` and in `1 / f` gradients.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `Σ probs = 1` for single-sample losses.
pub const PROB_SUM_TOL: f64 = 1e-6;

const ROW_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {label} is out of range for {k} classes")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("mixing weight {value} for class {class} outside [0, 0.5)")]
    InvalidEpsilon { class: usize, value: f64 },
    #[error("mixing parameter {value} at {index:?} outside the open interval ({low}, {high})")]
    OutOfDomain {
        index: (usize, usize),
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("mixture row {row} sums to {sum}, expected 1")]
    RowSum { row: usize, sum: f64 },
    #[error("margin violated at ({row}, {col}): E[row][row] must exceed E[row][col] + c_row")]
    MarginViolation { row: usize, col: usize },
    #[error("margin c_{row} = {value} must be positive")]
    NonPositiveMargin { row: usize, value: f64 },
    #[error("invalid penalty weights: {0}")]
    InvalidPenalty(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("target row sums to {0}, expected 1")]
    TargetSum(f64),
}

pub type Result<T> = std::result::Result<T, LossError>;

/// Full mixture matrix `E` with per-class probability margins `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub e: Matrix,
    pub margins: Vec<f64>,
}

impl Mixture {
    /// `E[i][j] = ε_i A[i][j]`, `E[i][i] = 1 - ε_i`, `c_i = (0.5 - ε_i) / 2`: the mixture
    /// that reproduces SG-MCEL (and simple MCEL when all `ε_i` agree).
    pub fn from_similarity(a: &SimilarityMatrix, epsilons: &[f64]) -> Result<Self> {
        let k = a.num_classes();
        check_len("epsilons", epsilons.len(), k)?;
        check_epsilons(epsilons)?;
        let mut e = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                e[(i, j)] = if i == j { 1.0 - epsilons[i] } else { epsilons[i] * a.get(i, j) };
            }
        }
        let margins = epsilons.iter().map(|eps| (0.5 - eps) / 2.0).collect();
        Ok(Self { e, margins })
    }

    pub fn num_classes(&self) -> usize {
        self.e.rows()
    }

    /// Row sums within 1e-9 of 1, positive margins, and `E[i][i] > E[i][j] + c_i`.
    pub fn validate(&self) -> Result<()> {
        let k = self.e.rows();
        if !self.e.is_square() {
            return Err(LossError::DimensionMismatch(format!(
                "mixture is {}x{}",
                self.e.rows(),
                self.e.cols()
            )));
        }
        check_len("margins", self.margins.len(), k)?;
        for i in 0..k {
            let c = self.margins[i];
            if !(c > 0.0 && c.is_finite()) {
                return Err(LossError::NonPositiveMargin { row: i, value: c });
            }
            let row = self.e.row(i);
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(LossError::RowSum { row: i, sum });
            }
            if let Some(j) = (0..k).find(|&j| j != i && !(row[i] > row[j] + c)) {
                return Err(LossError::MarginViolation { row: i, col: j });
            }
        }
        Ok(())
    }
}

/// Which member of the loss family is active and with what mixing parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingSpec {
    Simple { epsilon: f64 },
    PerClass { epsilons: Vec<f64> },
    Matrix(Mixture),
}

impl MixingSpec {
    pub fn validate(&self, k: usize) -> Result<()> {
        match self {
            MixingSpec::Simple { epsilon } => check_epsilons(&[*epsilon]),
            MixingSpec::PerClass { epsilons } => {
                check_len("epsilons", epsilons.len(), k)?;
                check_epsilons(epsilons)
            }
            MixingSpec::Matrix(m) => {
                check_len("mixture", m.num_classes(), k)?;
                m.validate()
            }
        }
    }

    /// Whether the target rows need a similarity matrix.
    pub fn needs_similarity(&self) -> bool {
        match self {
            MixingSpec::Simple { epsilon } => *epsilon > 0.0,
            MixingSpec::PerClass { epsilons } => epsilons.iter().any(|e| *e > 0.0),
            MixingSpec::Matrix(_) => false,
        }
    }
}

/// Weights of the soft-constraint penalties and the norm exponent `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights {
    /// Rows (or `p_i` vectors) should sum to one.
    pub alpha: f64,
    /// Pull away from the upper end of the admissible range.
    pub beta: f64,
    /// Pull away from zero.
    pub gamma: f64,
    /// Probability-margin term, mixture matrices only.
    pub eta: f64,
    pub p: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            eta: 0.0,
            p: 2.0,
        }
    }
}

impl PenaltyWeights {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let named = [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma), ("eta", self.eta)];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(LossError::InvalidPenalty(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if !(self.p.is_finite() && self.p >= 1.0) {
            return Err(LossError::InvalidPenalty(format!("p = {} must be >= 1", self.p)));
        }
        Ok(())
    }
}

/// Gradient with respect to the mixing parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum MixingGrad {
    PerClass(Vec<f64>),
    Matrix(Matrix),
}

/// Single-sample loss in nats plus `∂l/∂f`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_probs: Vec<f64>,
    pub grad_mixing: Option<MixingGrad>,
}

/// Batch loss for the soft-constrained variants: the summed value, one `∂l/∂f` row per
/// sample, and the gradient with respect to the learned mixing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchLossResult {
    pub value: f64,
    pub grad_probs: Vec<Vec<f64>>,
    pub grad_mixing: MixingGrad,
}

/// A predicted distribution and its label.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub probs: &'a [f64],
    pub label: usize,
}

impl<'a> Sample<'a> {
    pub fn new(probs: &'a [f64], label: usize) -> Self {
        Self { probs, label }
    }
}

fn check_len(what: &str, got: usize, k: usize) -> Result<()> {
    if got != k {
        return Err(LossError::DimensionMismatch(format!("{what} has length {got}, expected {k}")));
    }
    Ok(())
}

fn check_epsilons(eps: &[f64]) -> Result<()> {
    match eps.iter().position(|e| !(*e >= 0.0 && *e < 0.5)) {
        Some(class) => Err(LossError::InvalidEpsilon {
            class,
            value: eps[class],
        }),
        None => Ok(()),
    }
}

fn check_label(y: usize, k: usize) -> Result<()> {
    if y >= k {
        return Err(LossError::LabelOutOfRange { label: y, k });
    }
    Ok(())
}

fn check_probs(probs: &[f64], k: usize) -> Result<()> {
    check_len("probs", probs.len(), k)?;
    if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0 && *p <= 1.0)) {
        return Err(LossError::InvalidProbabilities(format!("probs[{i}] = {}", probs[i])));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        return Err(LossError::InvalidProbabilities(format!("sum is {sum}")));
    }
    Ok(())
}

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0)
}

/// `-Σ_j t_j log f_j` and its gradient `-t_j / f_j`, with `f` clamped. No validation;
/// this is the kernel every variant reduces to.
pub fn weighted_cross_entropy(target: &[f64], probs: &[f64]) -> (f64, Vec<f64>) {
    debug_assert_eq!(target.len(), probs.len());
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (t, p) in target.iter().zip(probs) {
        let f = clamp_prob(*p);
        value -= t * f.ln();
        grad.push(-t / f);
    }
    (value, grad)
}

/// Target row `(1 - ε) e_y + ε A[y]`.
pub fn mcel_target(a: &SimilarityMatrix, y: usize, epsilon: f64) -> Vec<f64> {
    a.row(y)
        .iter()
        .enumerate()
        .map(|(j, &ayj)| if j == y { 1.0 - epsilon } else { epsilon * ayj })
        .collect()
}

/// One-hot target, usable without a similarity matrix.
pub fn one_hot(k: usize, y: usize) -> Vec<f64> {
    let mut t = vec![0.0; k];
    t[y] = 1.0;
    t
}

/// The effective row-stochastic target matrix `H` of a mixing spec.
pub fn target_matrix(a: &SimilarityMatrix, spec: &MixingSpec) -> Result<Matrix> {
    let k = a.num_classes();
    spec.validate(k)?;
    let eps_of = |y: usize| match spec {
        MixingSpec::Simple { epsilon } => *epsilon,
        MixingSpec::PerClass { epsilons } => epsilons[y],
        MixingSpec::Matrix(_) => unreachable!(),
    };
    match spec {
        MixingSpec::Matrix(m) => Ok(m.e.clone()),
        _ => {
            let rows: Vec<Vec<f64>> = (0..k).map(|y| mcel_target(a, y, eps_of(y))).collect();
            Ok(Matrix::from_rows(&rows).expect("square target"))
        }
    }
}

/// Plain cross-entropy `-log f_y`.
pub fn cross_entropy(probs: &[f64], y: usize) -> Result<LossResult> {
    check_label(y, probs.len())?;
    check_probs(probs, probs.len())?;
    let (value, grad_probs) = weighted_cross_entropy(&one_hot(probs.len(), y), probs);
    Ok(LossResult {
        value,
        grad_probs,
        grad_mixing: None,
    })
}

/// Simple MCEL with a scalar mixing weight.
pub fn mcel_loss(probs: &[f64], y: usize, a: &SimilarityMatrix, epsilon: f64) -> Result<LossResult> {
    let k = a.num_classes();
    check_label(y, k)?;
    check_probs(probs, k)?;
    check_epsilons(&[epsilon])?;
    let (value, grad_probs) = weighted_cross_entropy(&mcel_target(a, y, epsilon), probs);
    Ok(LossResult {
        value,
        grad_probs,
        grad_mixing: None,
    })
}

/// SG-MCEL: like [`mcel_loss`] but with the mixing weight of the sample's class.
pub fn sg_mcel_loss(
    probs: &[f64],
    y: usize,
    a: &SimilarityMatrix,
    epsilons: &[f64],
) -> Result<LossResult> {
    let k = a.num_classes();
    check_len("epsilons", epsilons.len(), k)?;
    check_label(y, k)?;
    check_probs(probs, k)?;
    check_epsilons(epsilons)?;
    let (value, grad_probs) = weighted_cross_entropy(&mcel_target(a, y, epsilons[y]), probs);
    Ok(LossResult {
        value,
        grad_probs,
        grad_mixing: None,
    })
}

/// GMCEL: cross-entropy against row `y` of a validated mixture matrix.
pub fn gmcel_loss(probs: &[f64], y: usize, mixture: &Mixture) -> Result<LossResult> {
    mixture.validate()?;
    let k = mixture.num_classes();
    check_label(y, k)?;
    check_probs(probs, k)?;
    let (value, grad_probs) = weighted_cross_entropy(mixture.e.row(y), probs);
    Ok(LossResult {
        value,
        grad_probs,
        grad_mixing: None,
    })
}

/// `Σ |x - shift|^p` and its derivative `p |x - shift|^(p-1) sign(x - shift)` per entry.
fn power_penalty(x: f64, shift: f64, p: f64) -> (f64, f64) {
    let r = x - shift;
    let a = r.abs();
    if p == 2.0 {
        return (r * r, 2.0 * r);
    }
    let deriv = if a == 0.0 { 0.0 } else { p * a.powf(p - 1.0) * r.signum() };
    (a.powf(p), deriv)
}

fn check_batch(batch: &[Sample<'_>], k: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    for s in batch {
        check_label(s.label, k)?;
        check_probs(s.probs, k)?;
    }
    Ok(())
}

/// Soft-constrained SG-MCEL over a batch:
///
/// ```text
/// Σ_n -p_{y_n}ᵀ log f_n  +  α Σ_i (|p_i|_1 - 1)²  +  β Σ_i |ε_i - 0.5|^p  +  γ Σ_i |ε_i|^p
/// ```
///
/// `p_i` uses the convention `A[i][i] = 1`. Each `ε_i` must lie strictly inside `(0, 0.5)`.
pub fn sg_mcel_soft_loss(
    batch: &[Sample<'_>],
    a: &SimilarityMatrix,
    epsilons: &[f64],
    w: &PenaltyWeights,
) -> Result<BatchLossResult> {
    let k = a.num_classes();
    check_len("epsilons", epsilons.len(), k)?;
    w.validate()?;
    if let Some(i) = epsilons.iter().position(|e| !(*e > 0.0 && *e < 0.5)) {
        return Err(LossError::OutOfDomain {
            index: (i, i),
            value: epsilons[i],
            low: 0.0,
            high: 0.5,
        });
    }
    check_batch(batch, k)?;

    let mut value = 0.0;
    let mut grad_eps = vec![0.0; k];
    let mut grad_probs = Vec::with_capacity(batch.len());
    for s in batch {
        let y = s.label;
        let (v, g) = weighted_cross_entropy(&mcel_target(a, y, epsilons[y]), s.probs);
        value += v;
        grad_probs.push(g);
        // ∂/∂ε_y of -[Σ_{j≠y} ε_y A_yj log f_j + (1 - ε_y) log f_y]
        let mut d = 0.0;
        for (j, p) in s.probs.iter().enumerate() {
            let log_f = clamp_prob(*p).ln();
            d += if j == y { log_f } else { -a.get(y, j) * log_f };
        }
        grad_eps[y] += d;
    }

    for (i, &eps) in epsilons.iter().enumerate() {
        // |p_i|_1 = ε_i Σ_{j≠i} A_ij + (1 - ε_i); all terms are non-negative here
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| a.get(i, j)).sum();
        let excess = eps * off + (1.0 - eps) - 1.0;
        value += w.alpha * excess * excess;
        grad_eps[i] += 2.0 * w.alpha * excess * (off - 1.0);

        let (hi, dhi) = power_penalty(eps, 0.5, w.p);
        let (lo, dlo) = power_penalty(eps, 0.0, w.p);
        value += w.beta * hi + w.gamma * lo;
        grad_eps[i] += w.beta * dhi + w.gamma * dlo;
    }

    Ok(BatchLossResult {
        value,
        grad_probs,
        grad_mixing: MixingGrad::PerClass(grad_eps),
    })
}

/// Soft-constrained GMCEL over a batch:
///
/// ```text
/// Σ_n -E[y_n]ᵀ log f_n + α Σ_i (Σ_j E_ij - 1)² + β Σ_ij |E_ij - 1|^p + γ Σ_ij |E_ij|^p
///   + η Σ_i ((k - 1)(E_ii - c_i) - Σ_{j≠i} E_ij)²
/// ```
///
/// Entries of `E` must lie strictly inside `(0, 1)`; row sums and margins are only
/// encouraged by the penalties, not enforced.
pub fn gmcel_soft_loss(
    batch: &[Sample<'_>],
    mixture: &Mixture,
    w: &PenaltyWeights,
) -> Result<BatchLossResult> {
    let e = &mixture.e;
    if !e.is_square() {
        return Err(LossError::DimensionMismatch(format!("mixture is {}x{}", e.rows(), e.cols())));
    }
    let k = e.rows();
    check_len("margins", mixture.margins.len(), k)?;
    w.validate()?;
    for i in 0..k {
        for j in 0..k {
            let v = e[(i, j)];
            if !(v > 0.0 && v < 1.0) {
                return Err(LossError::OutOfDomain {
                    index: (i, j),
                    value: v,
                    low: 0.0,
                    high: 1.0,
                });
            }
        }
    }
    check_batch(batch, k)?;

    let mut value = 0.0;
    let mut grad = Matrix::zeros(k, k);
    let mut grad_probs = Vec::with_capacity(batch.len());
    for s in batch {
        let y = s.label;
        let (v, g) = weighted_cross_entropy(e.row(y), s.probs);
        value += v;
        grad_probs.push(g);
        for (dst, p) in grad.row_mut(y).iter_mut().zip(s.probs) {
            *dst -= clamp_prob(*p).ln();
        }
    }

    for i in 0..k {
        let (v, g) = gmcel_row_penalty(e.row(i), i, mixture.margins[i], w);
        value += v;
        for (dst, d) in grad.row_mut(i).iter_mut().zip(g) {
            *dst += d;
        }
    }

    Ok(BatchLossResult {
        value,
        grad_probs,
        grad_mixing: MixingGrad::Matrix(grad),
    })
}

/// Penalty terms of row `i` of a soft GMCEL mixture and their gradient with respect to
/// the row; [`gmcel_soft_loss`] adds these over all rows.
pub fn gmcel_row_penalty(row: &[f64], i: usize, margin: f64, w: &PenaltyWeights) -> (f64, Vec<f64>) {
    let km1 = (row.len() - 1) as f64;
    let excess = row.iter().sum::<f64>() - 1.0;
    let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v).sum();
    let gap = km1 * (row[i] - margin) - off;
    let mut value = w.alpha * excess * excess + w.eta * gap * gap;
    let grad = row
        .iter()
        .enumerate()
        .map(|(j, &v)| {
            let (hi, dhi) = power_penalty(v, 1.0, w.p);
            let (lo, dlo) = power_penalty(v, 0.0, w.p);
            value += w.beta * hi + w.gamma * lo;
            let dgap = if j == i { km1 } else { -1.0 };
            2.0 * w.alpha * excess + w.beta * dhi + w.gamma * dlo + 2.0 * w.eta * gap * dgap
        })
        .collect();
    (value, grad)
}

/// Numerically stable `log softmax` (max-shifted log-sum-exp).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of `-tᵀ log softmax(z)` with respect to the logits for any non-negative
/// target: `softmax(z) · Σ t - t`.
pub fn weighted_logit_gradient(logits: &[f64], target: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    softmax(logits)
        .into_iter()
        .zip(target)
        .map(|(s, t)| s * mass - t)
        .collect()
}

/// `softmax(z) - t` for a target row summing to one.
pub fn logit_gradient(logits: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_len("target", target.len(), logits.len())?;
    let sum: f64 = target.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(LossError::TargetSum(sum));
    }
    let s = softmax(logits);
    Ok(s.into_iter().zip(target).map(|(s, t)| s - t).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lda::similarity_from_vectors;

    fn sim3() -> SimilarityMatrix {
        let m = Matrix::from_rows(&[
            vec![0.0, 0.6, 0.4],
            vec![0.5, 0.0, 0.5],
            vec![0.3, 0.7, 0.0],
        ])
        .unwrap();
        SimilarityMatrix::new(m, 1e-12).unwrap()
    }

    /// Direct summation of the defining formula, independent of the kernel.
    fn literal_mcel(probs: &[f64], y: usize, a: &SimilarityMatrix, eps: f64) -> (f64, Vec<f64>) {
        let k = probs.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; k];
        for i in 0..k {
            let delta = if i == y { 1.0 } else { 0.0 };
            let w = (1.0 - eps) * delta + eps * a.get(y, i);
            value += -w * probs[i].ln();
            grad[i] = if i == y { -(1.0 - eps) / probs[i] } else { -eps * a.get(y, i) / probs[i] };
        }
        (value, grad)
    }

    #[test]
    fn perfect_prediction_costs_nothing() {
        let r = mcel_loss(&[0.0, 1.0, 0.0], 1, &sim3(), 0.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn zero_epsilon_is_cross_entropy() {
        let probs = [0.2, 0.5, 0.3];
        for y in 0..3 {
            let r = mcel_loss(&probs, y, &sim3(), 0.0).unwrap();
            assert!((r.value + probs[y].ln()).abs() <= 1e-15);
            assert_eq!(r.value, cross_entropy(&probs, y).unwrap().value);
        }
    }

    #[test]
    fn hand_instance_matches_literal_oracle_and_fd() {
        let a = sim3();
        let probs = [0.7, 0.2, 0.1];
        let r = mcel_loss(&probs, 0, &a, 0.3).unwrap();
        let (v, g) = literal_mcel(&probs, 0, &a, 0.3);
        assert!((r.value - v).abs() <= 1e-12);
        for j in 0..3 {
            assert!((r.grad_probs[j] - g[j]).abs() <= 1e-12);
            let h = 1e-6;
            let mut plus = probs;
            let mut minus = probs;
            plus[j] += h;
            minus[j] -= h;
            let fd = (literal_mcel(&plus, 0, &a, 0.3).0 - literal_mcel(&minus, 0, &a, 0.3).0) / (2.0 * h);
            assert!((fd - r.grad_probs[j]).abs() <= 1e-6 * r.grad_probs[j].abs().max(1e-3));
        }
    }

    #[test]
    fn two_class_target_matrix() {
        let a = similarity_from_vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let h = target_matrix(&a, &MixingSpec::Simple { epsilon: 0.4 }).unwrap();
        assert_eq!(h.as_slice(), &[0.6, 0.4, 0.4, 0.6]);
        let id = target_matrix(&a, &MixingSpec::Simple { epsilon: 0.0 }).unwrap();
        assert_eq!(id, Matrix::identity(2));
    }

    #[test]
    fn label_errors() {
        let a = sim3();
        assert!(matches!(
            mcel_loss(&[0.2, 0.5, 0.3], 3, &a, 0.1),
            Err(LossError::LabelOutOfRange { .. })
        ));
        assert!(matches!(
            mcel_loss(&[f64::NAN, 0.5, 0.5], 0, &a, 0.1),
            Err(LossError::InvalidProbabilities(_))
        ));
        assert!(matches!(
            mcel_loss(&[0.2, 0.5, 0.3], 0, &a, 0.5),
            Err(LossError::InvalidEpsilon { .. })
        ));
        assert!(matches!(
            sg_mcel_loss(&[0.2, 0.5, 0.3], 0, &a, &[0.1, 0.1]),
            Err(LossError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn sg_with_equal_eps_is_mcel() {
        let a = sim3();
        let probs = [0.25, 0.35, 0.4];
        for y in 0..3 {
            let m = mcel_loss(&probs, y, &a, 0.2).unwrap();
            let s = sg_mcel_loss(&probs, y, &a, &[0.2; 3]).unwrap();
            assert!((m.value - s.value).abs() <= 1e-15);
        }
    }

    #[test]
    fn gmcel_identity_and_construction() {
        let a = sim3();
        let probs = [0.25, 0.35, 0.4];
        let identity = Mixture {
            e: Matrix::identity(3),
            margins: vec![0.5; 3],
        };
        let r = gmcel_loss(&probs, 2, &identity).unwrap();
        assert!((r.value + 0.4f64.ln()).abs() <= 1e-15);

        let built = Mixture::from_similarity(&a, &[0.3; 3]).unwrap();
        for y in 0..3 {
            let g = gmcel_loss(&probs, y, &built).unwrap();
            let m = mcel_loss(&probs, y, &a, 0.3).unwrap();
            assert!((g.value - m.value).abs() <= 1e-15);
        }
    }

    #[test]
    fn gmcel_margin_violation_names_cell() {
        let e = Matrix::from_rows(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        let m = Mixture {
            e,
            margins: vec![0.25, 0.1],
        };
        assert_eq!(
            gmcel_loss(&[0.5, 0.5], 0, &m).unwrap_err(),
            LossError::MarginViolation { row: 0, col: 1 }
        );
    }

    #[test]
    fn soft_domain_errors() {
        let a = sim3();
        let probs = [0.25, 0.35, 0.4];
        let batch = [Sample::new(&probs, 0)];
        let w = PenaltyWeights::default();
        assert!(matches!(
            sg_mcel_soft_loss(&batch, &a, &[0.0, 0.2, 0.2], &w),
            Err(LossError::OutOfDomain { .. })
        ));
        assert!(matches!(
            sg_mcel_soft_loss(&[], &a, &[0.2; 3], &w),
            Err(LossError::EmptyBatch)
        ));
        let bad = Mixture {
            e: Matrix::identity(3),
            margins: vec![0.1; 3],
        };
        assert!(matches!(gmcel_soft_loss(&batch, &bad, &w), Err(LossError::OutOfDomain { .. })));
    }

    #[test]
    fn logit_gradient_identities() {
        let g = logit_gradient(&[0.3; 4], &[0.25; 4]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
        let logits = [1.0, -0.5, 2.0];
        let g = logit_gradient(&logits, &[0.0, 1.0, 0.0]).unwrap();
        let s = softmax(&logits);
        assert_eq!(g, vec![s[0], s[1] - 1.0, s[2]]);
        assert!(matches!(logit_gradient(&logits, &[0.5, 0.2, 0.2]), Err(LossError::TargetSum(_))));
    }

    #[test]
    fn log_softmax_is_stable() {
        let l = log_softmax(&[1000.0, 0.0, -1000.0]);
        assert!(l.iter().all(|v| v.is_finite()));
        assert!(l[0].abs() < 1e-12);
    }
}
