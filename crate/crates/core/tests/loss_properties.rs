use mcel::gradcheck::{random_mixture, random_probs, random_similarity};
use mcel::loss::{self, MixingGrad, MixingSpec, Mixture, PenaltyWeights, Sample};
use mcel::{Matrix, SimilarityMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `(probs, y, A, ε)` with probabilities kept at least 1e-3 from zero.
fn instance() -> impl Strategy<Value = (Vec<f64>, usize, SimilarityMatrix, f64)> {
    (2usize..=10, any::<u64>(), 0.0..0.5f64).prop_flat_map(|(k, seed, eps)| {
        (0..k).prop_map(move |y| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let probs = random_probs(&mut rng, k, 1e-3);
            let a = random_similarity(&mut rng, k);
            (probs, y, a, eps)
        })
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Central difference of `-tᵀ log softmax(z)`, computed without the library.
fn fd_logit_loss(z: &[f64], t: &[f64], i: usize) -> f64 {
    let value = |z: &[f64]| {
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        -t.iter().zip(z).map(|(ti, zi)| ti * (zi - lse)).sum::<f64>()
    };
    let h = 1e-5;
    let mut up = z.to_vec();
    up[i] += h;
    let mut down = z.to_vec();
    down[i] -= h;
    (value(&up) - value(&down)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reduction_chain((probs, y, a, eps) in instance()) {
        let k = probs.len();
        let ce = loss::cross_entropy(&probs, y).unwrap();
        let m0 = loss::mcel_loss(&probs, y, &a, 0.0).unwrap();
        prop_assert!(close(ce.value, m0.value, 1e-12));

        let m = loss::mcel_loss(&probs, y, &a, eps).unwrap();
        let sg = loss::sg_mcel_loss(&probs, y, &a, &vec![eps; k]).unwrap();
        prop_assert!(close(m.value, sg.value, 1e-12));
        let mix = Mixture::from_similarity(&a, &vec![eps; k]).unwrap();
        let g = loss::gmcel_loss(&probs, y, &mix).unwrap();
        prop_assert!(close(m.value, g.value, 1e-12));
        for ((x, s), q) in m.grad_probs.iter().zip(&sg.grad_probs).zip(&g.grad_probs) {
            prop_assert!(close(*x, *s, 1e-12) && close(*x, *q, 1e-12));
        }
    }

    #[test]
    fn soft_variants_with_zero_penalties_reduce((probs, y, a, eps) in instance()) {
        let k = probs.len();
        let eps = eps.clamp(1e-3, 0.499);
        let batch = [Sample::new(&probs, y)];
        let soft = loss::sg_mcel_soft_loss(&batch, &a, &vec![eps; k], &PenaltyWeights::zero()).unwrap();
        let base = loss::sg_mcel_loss(&probs, y, &a, &vec![eps; k]).unwrap();
        prop_assert!(close(soft.value, base.value, 1e-12));

        let mix = Mixture::from_similarity(&a, &vec![eps; k]).unwrap();
        let soft = loss::gmcel_soft_loss(&batch, &mix, &PenaltyWeights::zero()).unwrap();
        let base = loss::gmcel_loss(&probs, y, &mix).unwrap();
        prop_assert!(close(soft.value, base.value, 1e-12));
    }

    #[test]
    fn mcel_is_affine_in_epsilon((probs, y, a, _eps) in instance(), e1 in 0.0..0.2f64, e2 in 0.25..0.45f64) {
        let l = |e: f64| loss::mcel_loss(&probs, y, &a, e).unwrap().value;
        let mid = 0.5 * (e1 + e2);
        prop_assert!(close(l(mid), 0.5 * (l(e1) + l(e2)), 1e-12));
    }

    #[test]
    fn target_rows_sum_to_one_and_logit_gradient_is_tangent(
        (_probs, y, a, eps) in instance(),
        logits in prop::collection::vec(-8.0..8.0f64, 10),
    ) {
        let k = a.num_classes();
        let h = loss::target_matrix(&a, &MixingSpec::Simple { epsilon: eps }).unwrap();
        for r in 0..k {
            prop_assert!(close(h.row(r).iter().sum::<f64>(), 1.0, 1e-12));
        }
        let g = loss::logit_gradient(&logits[..k], h.row(y)).unwrap();
        prop_assert!(g.iter().sum::<f64>().abs() <= 1e-12);
    }

    #[test]
    fn logit_gradient_matches_finite_differences(
        seed in any::<u64>(),
        logits in prop::collection::vec(-4.0..4.0f64, 10),
        eps in 0.0..0.5f64,
        y in 0usize..10,
    ) {
        let a = random_similarity(&mut ChaCha8Rng::seed_from_u64(seed), 10);
        let t = loss::mcel_target(&a, y, eps);
        let g = loss::logit_gradient(&logits, &t).unwrap();
        for i in 0..10 {
            let fd = fd_logit_loss(&logits, &t, i);
            prop_assert!((g[i] - fd).abs() <= 1e-7 * g[i].abs().max(1e-2), "{} vs {}", g[i], fd);
        }
    }

    #[test]
    fn relabeling_permutes_the_loss((probs, y, a, eps) in instance(), shift in 1usize..10) {
        let k = probs.len();
        let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect();
        let mut permuted = vec![0.0; k];
        for i in 0..k {
            permuted[perm[i]] = probs[i];
        }
        let base = loss::mcel_loss(&probs, y, &a, eps).unwrap().value;
        let moved = loss::mcel_loss(&permuted, perm[y], &a.permuted(&perm), eps).unwrap().value;
        prop_assert!(close(base, moved, 1e-12));
    }
}

#[test]
fn uniform_similarity_is_label_smoothing() {
    for k in [3usize, 5, 10] {
        let a = SimilarityMatrix::uniform(k).unwrap();
        for eps in [0.1, 0.3] {
            let smooth = eps * k as f64 / (k as f64 - 1.0);
            for y in 0..k {
                let t = loss::mcel_target(&a, y, eps);
                for (j, tj) in t.iter().enumerate() {
                    let expected = (1.0 - smooth) * f64::from(u8::from(j == y)) + smooth / k as f64;
                    assert!((tj - expected).abs() <= 1e-12, "k={k} eps={eps} y={y} j={j}");
                }
            }
        }
    }
}

#[test]
fn soft_epsilon_gradient_matches_independent_formula() {
    // hand derivative of the soft per-class objective at p = 2 for a batch of 8, k = 5
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 5;
    let a = random_similarity(&mut rng, k);
    let probs: Vec<Vec<f64>> = (0..8).map(|_| random_probs(&mut rng, k, 1e-3)).collect();
    let labels = [0, 1, 2, 3, 4, 0, 1, 2];
    let batch: Vec<Sample<'_>> = probs.iter().zip(labels).map(|(p, y)| Sample::new(p, y)).collect();
    let eps = [0.1, 0.2, 0.3, 0.4, 0.25];
    let w = PenaltyWeights {
        alpha: 0.7,
        beta: 0.3,
        gamma: 0.2,
        eta: 0.0,
        p: 2.0,
    };
    let r = loss::sg_mcel_soft_loss(&batch, &a, &eps, &w).unwrap();
    let MixingGrad::PerClass(g) = r.grad_mixing else { panic!() };
    for i in 0..k {
        let mut expected = 2.0 * w.beta * (eps[i] - 0.5) + 2.0 * w.gamma * eps[i];
        for (p, &y) in probs.iter().zip(&labels) {
            if y == i {
                expected += p[i].ln() - (0..k).filter(|&j| j != i).map(|j| a.get(i, j) * p[j].ln()).sum::<f64>();
            }
        }
        // row-stochastic A: the ‖p_i‖₁ penalty is flat
        assert!((g[i] - expected).abs() <= 1e-12 * expected.abs().max(1.0), "class {i}");
    }
}

#[test]
fn soft_mixture_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let k = 4;
    let a = random_similarity(&mut rng, k);
    let mix = random_mixture(&mut rng, &a);
    let probs: Vec<Vec<f64>> = (0..6).map(|_| random_probs(&mut rng, k, 1e-3)).collect();
    let batch: Vec<Sample<'_>> = probs.iter().enumerate().map(|(n, p)| Sample::new(p, n % k)).collect();
    let w = PenaltyWeights {
        alpha: 0.5,
        beta: 0.4,
        gamma: 0.3,
        eta: 0.6,
        p: 2.0,
    };
    let r = loss::gmcel_soft_loss(&batch, &mix, &w).unwrap();
    let MixingGrad::Matrix(g) = r.grad_mixing else { panic!() };
    let h = 1e-6;
    for idx in 0..k * k {
        let value = |delta: f64| {
            let mut e = mix.e.as_slice().to_vec();
            e[idx] += delta;
            let m = Mixture {
                e: Matrix::new(k, k, e).unwrap(),
                margins: mix.margins.clone(),
            };
            loss::gmcel_soft_loss(&batch, &m, &w).unwrap().value
        };
        let fd = (value(h) - value(-h)) / (2.0 * h);
        let an = g.as_slice()[idx];
        assert!((an - fd).abs() <= 1e-5 * an.abs().max(fd.abs()).max(1e-3), "entry {idx}: {an} vs {fd}");
    }
}
