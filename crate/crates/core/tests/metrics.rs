use nclab_core::densemat::{Matrix, DEFAULT_RANK_TOL};
use nclab_core::metrics::{balancedness_gap, balancedness_ratio, nc1, nc2, nc3, nc3_class_means, negativity, ClassIndex};
use nclab_core::network::ActivationSpec;
use proptest::prelude::*;

/// NC1 with explicit per-class covariance sums.
fn nc1_oracle(z: &Matrix, counts: &[usize]) -> f64 {
    let d = z.rows();
    let n: usize = counts.iter().sum();
    let k = counts.len();
    let mut start = 0;
    let mut means = Vec::new();
    for &c in counts {
        let m: Vec<f64> = (0..d).map(|i| (start..start + c).map(|j| z[(i, j)]).sum::<f64>() / c as f64).collect();
        means.push((start, c, m));
        start += c;
    }
    let g: Vec<f64> = (0..d).map(|i| (0..n).map(|j| z[(i, j)]).sum::<f64>() / n as f64).collect();
    let mut within = 0.0;
    let mut between = 0.0;
    for (s, c, m) in &means {
        for j in *s..s + c {
            within += (0..d).map(|i| (z[(i, j)] - m[i]).powi(2)).sum::<f64>();
        }
        between += (0..d).map(|i| (m[i] - g[i]).powi(2)).sum::<f64>();
    }
    (within / n as f64) / (between / k as f64)
}

fn grouped(k: usize, max_per: usize, d: usize) -> impl Strategy<Value = (Matrix, Vec<usize>)> {
    proptest::collection::vec(1..=max_per, k).prop_flat_map(move |counts| {
        let n: usize = counts.iter().sum();
        proptest::collection::vec(-5.0f64..5.0, d * n)
            .prop_map(move |v| (Matrix::from_vec(d, n, v).unwrap(), counts.clone()))
    })
}

#[test]
fn collapsed_orthogonal_aligned_features() {
    // Two samples per class sitting exactly on e_c, classifier = identity.
    let z = Matrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]).unwrap();
    let idx = ClassIndex::balanced(2, 2).unwrap();
    assert_eq!(nc1(&z, &idx).unwrap(), 0.0);
    assert!((nc3(&z, &Matrix::identity(2), &idx).unwrap() - 1.0).abs() < 1e-15);
    assert!((nc3_class_means(&z, &Matrix::identity(2), &idx).unwrap() - 1.0).abs() < 1e-15);
    // Centered means ±(1,−1)/2 are rank one.
    let k = nc2(&z, &idx, DEFAULT_RANK_TOL).unwrap();
    assert!(k.is_finite() && k >= 1.0);
}

#[test]
fn balanced_identity_chain_has_zero_gap() {
    let i = Matrix::identity(3);
    assert_eq!(balancedness_gap(&i, &i).unwrap(), 0.0);
    assert_eq!(balancedness_ratio(&i, &i).unwrap(), 0.0);
    assert!(balancedness_ratio(&Matrix::zeros(3, 3), &Matrix::zeros(3, 3)).is_err());
}

#[test]
fn negativity_is_zero_on_positive_preactivations() {
    let a = Matrix::from_fn(3, 4, |i, j| 1.0 + (i + j) as f64);
    assert!(negativity(&a, &ActivationSpec::relu()).unwrap().abs() < 1e-15);
    let neg = a.scale(-1.0);
    assert!((negativity(&neg, &ActivationSpec::relu()).unwrap() - 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nc1_matches_oracle((z, counts) in grouped(3, 4, 4)) {
        let idx = ClassIndex::new(counts.clone()).unwrap();
        let oracle = nc1_oracle(&z, &counts);
        match nc1(&z, &idx) {
            Ok(v) => prop_assert!((v - oracle).abs() <= 1e-10 * oracle.max(1.0)),
            Err(_) => prop_assert!(!oracle.is_finite() || oracle > 1e12),
        }
    }

    #[test]
    fn nc1_invariant_to_translation_and_scale((z, counts) in grouped(3, 4, 3), c in 0.1f64..10.0, t in -3.0f64..3.0) {
        let idx = ClassIndex::new(counts).unwrap();
        let a = nc1(&z, &idx).unwrap();
        let moved = z.map(|v| c * v + t);
        let b = nc1(&moved, &idx).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn nc3_in_unit_interval((z, counts) in grouped(3, 3, 5), w in proptest::collection::vec(-2.0f64..2.0, 15)) {
        let idx = ClassIndex::new(counts).unwrap();
        let w = Matrix::from_vec(3, 5, w).unwrap();
        if let Ok(v) = nc3(&z, &w, &idx) {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn balancedness_gap_is_symmetric_form(a in proptest::collection::vec(-2.0f64..2.0, 12), b in proptest::collection::vec(-2.0f64..2.0, 12)) {
        let w = Matrix::from_vec(4, 3, a).unwrap();
        let w_next = Matrix::from_vec(3, 4, b).unwrap();
        let direct = nclab_core::densemat::op_norm(&w_next.t_matmul(&w_next).sub(&w.matmul_t(&w))).unwrap();
        prop_assert!((balancedness_gap(&w_next, &w).unwrap() - direct).abs() < 1e-12 * direct.max(1.0));
    }
}
