use mcel::data::{gen_blobs, BlobSpec};
use mcel::lda::{build_similarity_matrix, fit_lda, scatter_matrices, class_means, Ridge};
use mcel::LabeledDataset;

fn blobs(k: usize, dim: usize, seed: u64) -> LabeledDataset {
    gen_blobs(&BlobSpec {
        num_classes: k,
        per_class: 40,
        dim,
        centers: None,
        spread: 2.0,
        seed,
    })
    .unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn structure_holds_on_random_datasets() {
    for (k, dim) in [(3, 4), (10, 12)] {
        for seed in 0..5 {
            let a = build_similarity_matrix(&fit_lda(&blobs(k, dim, seed), None, Ridge::Auto).unwrap()).unwrap();
            for i in 0..k {
                assert_eq!(a.get(i, i), 0.0);
                for j in (0..k).filter(|&j| j != i) {
                    assert!(a.get(i, j) > 0.0);
                }
                assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn sign_flips_of_projection_rows_do_not_matter() {
    for (k, dim) in [(3, 4), (10, 12)] {
        let model = fit_lda(&blobs(k, dim, 1), None, Ridge::Auto).unwrap();
        let a = build_similarity_matrix(&model).unwrap();
        for pattern in [0b1usize, 0b10, 0b101, usize::MAX] {
            let flips: Vec<bool> = (0..model.num_components).map(|c| pattern >> c & 1 == 1).collect();
            let b = build_similarity_matrix(&model.flip_components(&flips)).unwrap();
            assert!(max_abs_diff(a.as_matrix().as_slice(), b.as_matrix().as_slice()) <= 1e-10);
        }
    }
}

#[test]
fn class_permutation_permutes_the_matrix() {
    for (k, dim) in [(3, 4), (10, 12)] {
        let data = blobs(k, dim, 2);
        let a = build_similarity_matrix(&fit_lda(&data, None, Ridge::Auto).unwrap()).unwrap();
        let perm: Vec<usize> = (0..k).map(|i| (7 * i + 1) % k).collect();
        let relabeled = data.relabel(&perm);
        let b = build_similarity_matrix(&fit_lda(&relabeled, None, Ridge::Auto).unwrap()).unwrap();
        let expected = a.permuted(&perm);
        let diff = max_abs_diff(expected.as_matrix().as_slice(), b.as_matrix().as_slice());
        assert!(diff <= 1e-12, "k={k}: {diff}");
    }
}

/// Solves `m x = b` by Gaussian elimination with partial pivoting.
fn solve(mut m: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    x
}

#[test]
fn two_class_direction_is_fisher_discriminant() {
    for seed in 0..5 {
        let data = blobs(2, 5, seed);
        let model = fit_lda(&data, None, Ridge::Auto).unwrap();
        let means = class_means(&data).unwrap();
        let (sw, _) = scatter_matrices(&data, &means);
        let diff: Vec<f64> = means[1].iter().zip(&means[0]).map(|(a, b)| a - b).collect();
        let w = solve(sw.to_rows(), diff);
        let v = model.projection.row(0);
        let cos = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
            / (v.iter().map(|x| x * x).sum::<f64>().sqrt() * w.iter().map(|x| x * x).sum::<f64>().sqrt());
        assert!(cos.abs() >= 0.999, "seed {seed}: {cos}");
    }
}

#[test]
fn grouped_centers_give_block_structure() {
    // two tight groups of five classes, far apart from each other
    let mut centers = Vec::new();
    for g in 0..2 {
        for c in 0..5 {
            let mut v = vec![0.0; 10];
            v[0] = if g == 0 { -20.0 } else { 20.0 };
            v[1 + c] = 2.0;
            centers.push(v);
        }
    }
    let data = gen_blobs(&BlobSpec {
        num_classes: 10,
        per_class: 60,
        dim: 10,
        centers: Some(centers),
        spread: 0.5,
        seed: 4,
    })
    .unwrap();
    let a = build_similarity_matrix(&fit_lda(&data, None, Ridge::Auto).unwrap()).unwrap();
    for i in 0..10 {
        let within = (0..10).filter(|&j| j != i && j / 5 == i / 5).map(|j| a.get(i, j)).fold(f64::INFINITY, f64::min);
        let across = (0..10).filter(|&j| j / 5 != i / 5).map(|j| a.get(i, j)).fold(0.0, f64::max);
        assert!(within > across, "row {i}: {within} vs {across}");
    }
}

#[test]
fn refitting_is_bitwise_reproducible() {
    let data = blobs(5, 6, 9);
    let a = build_similarity_matrix(&fit_lda(&data, None, Ridge::Auto).unwrap()).unwrap();
    let b = build_similarity_matrix(&fit_lda(&data, None, Ridge::Auto).unwrap()).unwrap();
    assert_eq!(a.to_text(), b.to_text());
}
