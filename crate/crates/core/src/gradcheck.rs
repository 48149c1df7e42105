//! Central finite-difference verification of every analytic gradient in the crate.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::LabeledDataset;
use crate::exec::Exec;
use crate::lda::SimilarityMatrix;
use crate::loss::{self, MixingGrad, MixingSpec, Mixture, PenaltyWeights, Sample};
use crate::net::{self, LossConfig, MlpModel};
use crate::numerics::Matrix;

pub const FD_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Denominator floor for the relative error, so components that are zero (or nearly
/// so) are compared in absolute terms instead of amplifying rounding noise.
pub const REL_ERROR_FLOOR: f64 = 1e-3;
/// Network trials redraw inputs until no hidden pre-activation is this close to the ReLU
/// kink; a single step of [`FD_STEP`] moves a pre-activation by at most `FD_STEP * 2` there.
pub const KINK_MARGIN: f64 = 1e-4;

/// Smallest probability produced by [`random_probs`] in the suites.
pub const SUITE_PROB_FLOOR: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Central difference of `f` at `x[i]`.
pub fn central_difference(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let up = f(x);
    x[i] = orig - h;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * h)
}

/// Worst relative error between `analytic` and the central differences of `f` at `x`.
pub fn max_relative_error(x: &[f64], analytic: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut work = x.to_vec();
    (0..x.len())
        .map(|i| relative_error(analytic[i], central_difference(&mut work, i, FD_STEP, &mut f)))
        .fold(0.0, f64::max)
}

/// Like [`max_relative_error`] for a function given as a sum of terms: each difference is
/// taken term by term before summing, so large terms that do not depend on the perturbed
/// coordinate cancel exactly.
pub fn max_relative_error_terms(
    x: &[f64],
    analytic: &[f64],
    mut terms: impl FnMut(&[f64]) -> Vec<f64>,
) -> f64 {
    let mut work = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = work[i];
        work[i] = orig + FD_STEP;
        let up = terms(&work);
        work[i] = orig - FD_STEP;
        let down = terms(&work);
        work[i] = orig;
        let numeric = up.iter().zip(&down).map(|(u, d)| u - d).sum::<f64>() / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Probability vector with every entry at least `floor`.
pub fn random_probs(rng: &mut impl Rng, k: usize, floor: f64) -> Vec<f64> {
    assert!(floor * (k as f64) < 1.0, "floor too large for k");
    let u: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-9).collect();
    let total: f64 = u.iter().sum();
    let free = 1.0 - floor * k as f64;
    u.iter().map(|v| floor + free * v / total).collect()
}

/// Valid similarity matrix with off-diagonals drawn from `[0.05, 1)` and rows normalized.
pub fn random_similarity(rng: &mut impl Rng, k: usize) -> SimilarityMatrix {
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        let row: Vec<f64> = (0..k)
            .map(|j| if i == j { 0.0 } else { rng.random_range(0.05..1.0) })
            .collect();
        let total: f64 = row.iter().sum();
        for (dst, v) in m.row_mut(i).iter_mut().zip(&row) {
            *dst = v / total;
        }
    }
    SimilarityMatrix::new(m, 1e-12).expect("constructed rows are valid")
}

pub fn random_epsilon(rng: &mut impl Rng) -> f64 {
    rng.random_range(0.01..0.49)
}

/// Mixture built from `a` with independent per-class weights; satisfies the hard constraints.
pub fn random_mixture(rng: &mut impl Rng, a: &SimilarityMatrix) -> Mixture {
    let eps: Vec<f64> = (0..a.num_classes()).map(|_| random_epsilon(rng)).collect();
    Mixture::from_similarity(a, &eps).expect("weights are in range")
}

/// Unconstrained mixture with entries in `(0.01, 0.99)` and margins in `(0.01, 0.2)`.
pub fn random_soft_mixture(rng: &mut impl Rng, k: usize) -> Mixture {
    let e: Vec<f64> = (0..k * k).map(|_| rng.random_range(0.01..0.99)).collect();
    Mixture {
        e: Matrix::new(k, k, e).expect("finite"),
        margins: (0..k).map(|_| rng.random_range(0.01..0.2)).collect(),
    }
}

pub fn random_penalties(rng: &mut impl Rng) -> PenaltyWeights {
    const EXPONENTS: [f64; 3] = [1.5, 2.0, 3.0];
    PenaltyWeights {
        alpha: rng.random_range(0.1..1.0),
        beta: rng.random_range(0.1..1.0),
        gamma: rng.random_range(0.1..1.0),
        eta: rng.random_range(0.1..1.0),
        p: EXPONENTS[rng.random_range(0..EXPONENTS.len())],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Check {
    CrossEntropyProbs,
    McelProbs,
    SgMcelProbs,
    GmcelProbs,
    SgMcelSoftProbs,
    SgMcelSoftEpsilon,
    GmcelSoftProbs,
    GmcelSoftMixture,
    NetCrossEntropy,
    NetMcel,
    NetSgMcel,
    NetGmcel,
    NetSgMcelSoft,
    NetGmcelSoft,
}

impl Check {
    pub const LOSS: [Check; 8] = [
        Check::CrossEntropyProbs,
        Check::McelProbs,
        Check::SgMcelProbs,
        Check::GmcelProbs,
        Check::SgMcelSoftProbs,
        Check::SgMcelSoftEpsilon,
        Check::GmcelSoftProbs,
        Check::GmcelSoftMixture,
    ];
    pub const NETWORK: [Check; 6] = [
        Check::NetCrossEntropy,
        Check::NetMcel,
        Check::NetSgMcel,
        Check::NetGmcel,
        Check::NetSgMcelSoft,
        Check::NetGmcelSoft,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::CrossEntropyProbs => "cross-entropy d/df",
            Check::McelProbs => "mcel d/df",
            Check::SgMcelProbs => "sg-mcel d/df",
            Check::GmcelProbs => "gmcel d/df",
            Check::SgMcelSoftProbs => "sg-mcel-soft d/df",
            Check::SgMcelSoftEpsilon => "sg-mcel-soft d/deps",
            Check::GmcelSoftProbs => "gmcel-soft d/df",
            Check::GmcelSoftMixture => "gmcel-soft d/dE",
            Check::NetCrossEntropy => "network cross-entropy",
            Check::NetMcel => "network mcel",
            Check::NetSgMcel => "network sg-mcel",
            Check::NetGmcel => "network gmcel",
            Check::NetSgMcelSoft => "network sg-mcel-soft",
            Check::NetGmcelSoft => "network gmcel-soft",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub check: Check,
    pub name: &'static str,
    pub trials: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GradcheckConfig {
    pub k: usize,
    pub trials: usize,
    pub seed: u64,
    pub batch: usize,
    pub tolerance: f64,
    /// Test hook: perturbs every analytic gradient by one part in a thousand.
    pub corrupt: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            k: 5,
            trials: 200,
            seed: 0,
            batch: 8,
            tolerance: DEFAULT_TOLERANCE,
            corrupt: false,
        }
    }
}

fn corrupt(grad: &mut [f64], on: bool) {
    if on {
        grad.iter_mut().for_each(|g| *g = *g * 1.001 + 1e-3);
    }
}

/// Max relative error of one trial of `check`. The probability derivative is checked
/// against differences of `-Σ t log f` with the target the library built, since the
/// validated entry points only accept inputs on the simplex.
fn loss_trial(check: Check, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> f64 {
    let k = cfg.k;
    let y = rng.random_range(0..k);
    let probs = random_probs(rng, k, SUITE_PROB_FLOOR);
    let a = random_similarity(rng, k);
    let single = |target: Vec<f64>, mut grad: Vec<f64>| {
        corrupt(&mut grad, cfg.corrupt);
        max_relative_error(&probs, &grad, |f| loss::weighted_cross_entropy(&target, f).0)
    };
    match check {
        Check::CrossEntropyProbs => {
            let r = loss::cross_entropy(&probs, y).expect("valid instance");
            single(loss::one_hot(k, y), r.grad_probs)
        }
        Check::McelProbs => {
            let eps = random_epsilon(rng);
            let r = loss::mcel_loss(&probs, y, &a, eps).expect("valid instance");
            single(loss::mcel_target(&a, y, eps), r.grad_probs)
        }
        Check::SgMcelProbs => {
            let eps: Vec<f64> = (0..k).map(|_| random_epsilon(rng)).collect();
            let r = loss::sg_mcel_loss(&probs, y, &a, &eps).expect("valid instance");
            single(loss::mcel_target(&a, y, eps[y]), r.grad_probs)
        }
        Check::GmcelProbs => {
            let m = random_mixture(rng, &a);
            let r = loss::gmcel_loss(&probs, y, &m).expect("valid instance");
            single(m.e.row(y).to_vec(), r.grad_probs)
        }
        _ => soft_trial(check, cfg, rng, &a),
    }
}

fn soft_trial(check: Check, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng, a: &SimilarityMatrix) -> f64 {
    let k = cfg.k;
    let probs: Vec<Vec<f64>> = (0..cfg.batch).map(|_| random_probs(rng, k, SUITE_PROB_FLOOR)).collect();
    let labels: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..k)).collect();
    let batch: Vec<Sample<'_>> = probs.iter().zip(&labels).map(|(p, &y)| Sample::new(p, y)).collect();
    let w = random_penalties(rng);
    match check {
        Check::SgMcelSoftProbs | Check::SgMcelSoftEpsilon => {
            let eps: Vec<f64> = (0..k).map(|_| random_epsilon(rng)).collect();
            let r = loss::sg_mcel_soft_loss(&batch, a, &eps, &w).expect("valid instance");
            if check == Check::SgMcelSoftEpsilon {
                let MixingGrad::PerClass(mut g) = r.grad_mixing else {
                    unreachable!("per-class gradient")
                };
                corrupt(&mut g, cfg.corrupt);
                return max_relative_error(&eps, &g, |e| {
                    loss::sg_mcel_soft_loss(&batch, a, e, &w).expect("stays in range").value
                });
            }
            let targets: Vec<Vec<f64>> = labels.iter().map(|&y| loss::mcel_target(a, y, eps[y])).collect();
            probs_error(&targets, &probs, r.grad_probs, cfg.corrupt)
        }
        Check::GmcelSoftProbs | Check::GmcelSoftMixture => {
            let m = random_soft_mixture(rng, k);
            let r = loss::gmcel_soft_loss(&batch, &m, &w).expect("valid instance");
            if check == Check::GmcelSoftMixture {
                let MixingGrad::Matrix(g) = r.grad_mixing else {
                    unreachable!("matrix gradient")
                };
                let mut g = g.as_slice().to_vec();
                corrupt(&mut g, cfg.corrupt);
                // differences over per-sample and per-row terms; the terms must add up to
                // the loss being checked
                let terms = |e: &[f64]| -> Vec<f64> {
                    let sample_terms = batch.iter().map(|s| loss::weighted_cross_entropy(&e[s.label * k..][..k], s.probs).0);
                    let row_terms = (0..k).map(|i| loss::gmcel_row_penalty(&e[i * k..][..k], i, m.margins[i], &w).0);
                    sample_terms.chain(row_terms).collect()
                };
                let total: f64 = terms(m.e.as_slice()).iter().sum();
                let mismatch = (total - r.value).abs() / r.value.abs().max(1.0);
                return max_relative_error_terms(m.e.as_slice(), &g, terms).max(mismatch);
            }
            let targets: Vec<Vec<f64>> = labels.iter().map(|&y| m.e.row(y).to_vec()).collect();
            probs_error(&targets, &probs, r.grad_probs, cfg.corrupt)
        }
        _ => unreachable!("not a soft loss check"),
    }
}

/// Per-sample probability gradients of a batch loss, all flattened into one check.
fn probs_error(targets: &[Vec<f64>], probs: &[Vec<f64>], grads: Vec<Vec<f64>>, bad: bool) -> f64 {
    let k = probs[0].len();
    let flat: Vec<f64> = probs.concat();
    let mut g: Vec<f64> = grads.concat();
    corrupt(&mut g, bad);
    max_relative_error_terms(&flat, &g, |f| {
        targets
            .iter()
            .zip(f.chunks(k))
            .map(|(t, p)| loss::weighted_cross_entropy(t, p).0)
            .collect()
    })
}

fn network_loss(check: Check, rng: &mut ChaCha8Rng, k: usize) -> (LossConfig, Option<SimilarityMatrix>) {
    let a = random_similarity(rng, k);
    let cfg = match check {
        Check::NetCrossEntropy => return (LossConfig::cross_entropy(), None),
        Check::NetMcel => LossConfig::mcel(random_epsilon(rng)),
        Check::NetSgMcel => LossConfig {
            mixing: MixingSpec::PerClass {
                epsilons: (0..k).map(|_| random_epsilon(rng)).collect(),
            },
            penalties: None,
        },
        Check::NetGmcel => LossConfig {
            mixing: MixingSpec::Matrix(random_mixture(rng, &a)),
            penalties: None,
        },
        Check::NetSgMcelSoft => LossConfig {
            mixing: MixingSpec::PerClass {
                epsilons: (0..k).map(|_| random_epsilon(rng)).collect(),
            },
            penalties: Some(random_penalties(rng)),
        },
        Check::NetGmcelSoft => LossConfig {
            mixing: MixingSpec::Matrix(random_soft_mixture(rng, k)),
            penalties: Some(random_penalties(rng)),
        },
        _ => unreachable!("not a network check"),
    };
    (cfg, Some(a))
}

/// Full backprop versus differences of the batch loss, over every parameter of a `2-3-k`
/// network. The mixing penalties do not depend on the network, so the differences are
/// taken over the per-sample terms.
fn network_trial(check: Check, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> f64 {
    let k = cfg.k;
    let (loss_cfg, a) = network_loss(check, rng, k);
    let model = MlpModel::init(&[2, 3, k], rng.random()).expect("valid sizes");
    let xs = loop {
        let xs: Vec<f64> = (0..cfg.batch * 2).map(|_| rng.random_range(-2.0..2.0)).collect();
        if clears_kinks(&model, &xs) {
            break xs;
        }
    };
    let labels: Vec<usize> = (0..cfg.batch).map(|_| rng.random_range(0..k)).collect();
    let data = LabeledDataset::new(Matrix::new(cfg.batch, 2, xs).expect("finite"), labels, k)
        .expect("consistent dataset");
    let rows: Vec<usize> = (0..cfg.batch).collect();
    let base = net::batch_gradient(&model, &data, &rows, &loss_cfg, a.as_ref(), Exec::Sequential)
        .expect("valid batch");
    let probs: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| model.forward(data.sample(i)).expect("finite input").0)
        .collect();
    let samples: Vec<Sample<'_>> = probs.iter().zip(&data.labels).map(|(p, &y)| Sample::new(p, y)).collect();
    let targets = net::evaluate_objective(&loss_cfg.mixing, loss_cfg.penalties.as_ref(), a.as_ref(), &samples)
        .expect("valid batch")
        .targets;
    let mut analytic = base.grads.params();
    corrupt(&mut analytic, cfg.corrupt);
    max_relative_error_terms(&model.params(), &analytic, |theta| {
        let mut m = model.clone();
        m.params_mut().zip(theta).for_each(|(dst, v)| *dst = *v);
        rows.iter()
            .zip(&targets)
            .map(|(&i, t)| loss::weighted_cross_entropy(t, &m.forward(data.sample(i)).expect("finite").0).0)
            .collect()
    })
}

/// Whether every hidden pre-activation of the `2-3-k` model is at least [`KINK_MARGIN`]
/// from zero for the inputs `xs` (pairs of coordinates).
fn clears_kinks(model: &MlpModel, xs: &[f64]) -> bool {
    let first = &model.layers[0];
    xs.chunks(2).all(|x| {
        let z = first.weights.mul_vec(x).expect("input width matches");
        z.iter().zip(&first.biases).all(|(z, b)| (z + b).abs() >= KINK_MARGIN)
    })
}

fn run(check: Check, cfg: &GradcheckConfig, exec: Exec) -> CheckReport {
    let trial_seeds: Vec<u64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (check as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        (0..cfg.trials).map(|_| rng.random()).collect()
    };
    let errors = exec.map(&trial_seeds, |&s| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        if Check::NETWORK.contains(&check) {
            network_trial(check, cfg, &mut rng)
        } else {
            loss_trial(check, cfg, &mut rng)
        }
    });
    let max_rel_error = errors.into_iter().fold(0.0, f64::max);
    CheckReport {
        check,
        name: check.name(),
        trials: cfg.trials,
        max_rel_error,
        passed: max_rel_error <= cfg.tolerance,
    }
}

/// Runs the given checks; each uses its own seeded stream so results do not depend on
/// which other checks ran.
pub fn run_checks(checks: &[Check], cfg: &GradcheckConfig, exec: Exec) -> Vec<CheckReport> {
    assert!(cfg.k >= 2 && cfg.trials >= 1 && cfg.batch >= 1, "invalid gradcheck config");
    checks.iter().map(|&c| run(c, cfg, exec)).collect()
}

/// Every loss and network check.
pub fn run_all(cfg: &GradcheckConfig, exec: Exec) -> Vec<CheckReport> {
    let all: Vec<Check> = Check::LOSS.iter().chain(&Check::NETWORK).copied().collect();
    run_checks(&all, cfg, exec)
}
