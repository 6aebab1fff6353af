use nclab_core::densemat::{cond, op_norm, pinv, singular_values, svd, Matrix, DEFAULT_RANK_TOL};
use proptest::prelude::*;

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(m, n)| {
        proptest::collection::vec(-10.0f64..10.0, m * n).prop_map(move |v| Matrix::from_vec(m, n, v).unwrap())
    })
}

/// Singular values of a 2x2 matrix via the eigenvalues of `AᵀA`.
fn eig_oracle_2x2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let t = a * a + b * b + c * c + d * d;
    let det = (a * d - b * c).abs();
    // s1 s2 = |det|, s1² + s2² = t
    let s1 = ((t + 2.0 * det).sqrt() + (t - 2.0 * det).max(0.0).sqrt()) / 2.0;
    let s2 = if s1 > 0.0 { det / s1 } else { 0.0 };
    (s1, s2)
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
fn gauss_inverse(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let mut m: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| a[(i, j)]).collect();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        let p = m[col][col];
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                let src = m[col].clone();
                for (x, s) in m[r].iter_mut().zip(src) {
                    *x -= f * s;
                }
            }
        }
    }
    Some(Matrix::from_fn(n, n, |i, j| m[i][n + j]))
}

#[test]
fn two_by_two_against_eigen_oracle() {
    let cases = [
        [1.0, 0.0, 0.0, 1.0],
        [3.0, 0.0, 0.0, -2.0],
        [1.0, 1.0, 1.0, 1.0],
        [0.0, 0.0, 0.0, 0.0],
        [2.0, -1.0, 4.0, 0.5],
        [1e-8, 1.0, 0.0, 1e-8],
    ];
    for v in cases {
        let s = singular_values(&Matrix::from_vec(2, 2, v.to_vec()).unwrap()).unwrap();
        let (s1, s2) = eig_oracle_2x2(v[0], v[1], v[2], v[3]);
        assert!((s[0] - s1).abs() <= 1e-12, "{v:?}: {s:?} vs {s1}");
        assert!((s[1] - s2).abs() <= 1e-12, "{v:?}: {s:?} vs {s2}");
    }
}

#[test]
fn pinv_of_invertible_matches_gauss_jordan() {
    let a = Matrix::from_rows(&[vec![4.0, 1.0, -2.0], vec![0.5, 3.0, 1.0], vec![-1.0, 2.0, 5.0]]).unwrap();
    let p = pinv(&a, DEFAULT_RANK_TOL).unwrap();
    let g = gauss_inverse(&a).unwrap();
    assert!(p.sub(&g).max_abs() < 1e-12);
}

#[test]
fn wide_and_tall_share_singular_values() {
    let a = Matrix::from_fn(3, 7, |i, j| ((i * 7 + j) as f64 * 0.37).sin());
    let s1 = singular_values(&a).unwrap();
    let s2 = singular_values(&a.transpose()).unwrap();
    for (x, y) in s1.iter().zip(&s2) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn zero_matrix_conventions() {
    let z = Matrix::zeros(3, 2);
    assert_eq!(op_norm(&z).unwrap(), 0.0);
    assert_eq!(pinv(&z, DEFAULT_RANK_TOL).unwrap(), Matrix::zeros(2, 3));
    assert!(cond(&z, DEFAULT_RANK_TOL).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reconstruction_and_orthogonality(a in matrix_strategy(12)) {
        let d = svd(&a).unwrap();
        prop_assert!(a.sub(&d.reconstruct()).frobenius() <= 1e-10 * a.frobenius().max(1.0));
        prop_assert!(d.u.t_matmul(&d.u).sub(&Matrix::identity(d.u.cols())).max_abs() < 1e-10);
        prop_assert!(d.vt.matmul_t(&d.vt).sub(&Matrix::identity(d.vt.rows())).max_abs() < 1e-10);
        prop_assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn frobenius_is_root_sum_of_squared_singular_values(a in matrix_strategy(10)) {
        let s = singular_values(&a).unwrap();
        let f = s.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((f - a.frobenius()).abs() <= 1e-10 * a.frobenius().max(1.0));
    }

    #[test]
    fn op_norm_dominates_every_direction(a in matrix_strategy(8), x in proptest::collection::vec(-1.0f64..1.0, 8)) {
        let x = &x[..a.cols()];
        let nx = nclab_core::densemat::norm2(x);
        prop_assume!(nx > 1e-6);
        let ax = a.mat_vec(x);
        prop_assert!(nclab_core::densemat::norm2(&ax) <= op_norm(&a).unwrap() * nx * (1.0 + 1e-12));
    }

    #[test]
    fn moore_penrose_identities(a in matrix_strategy(10)) {
        let p = pinv(&a, DEFAULT_RANK_TOL).unwrap();
        let scale = a.frobenius().max(1.0);
        prop_assert!(a.matmul(&p).matmul(&a).sub(&a).frobenius() <= 1e-8 * scale);
        prop_assert!(p.matmul(&a).matmul(&p).sub(&p).frobenius() <= 1e-8 * p.frobenius().max(1.0));
        let ap = a.matmul(&p);
        let pa = p.matmul(&a);
        prop_assert!(ap.sub(&ap.transpose()).frobenius() <= 1e-8);
        prop_assert!(pa.sub(&pa.transpose()).frobenius() <= 1e-8);
    }

    #[test]
    fn condition_number_at_least_one_and_scale_free(a in matrix_strategy(8), c in 0.1f64..10.0) {
        prop_assume!(a.frobenius() > 1e-6);
        let k = cond(&a, DEFAULT_RANK_TOL).unwrap();
        prop_assert!(k >= 1.0 - 1e-12);
        let k2 = cond(&a.scale(c), DEFAULT_RANK_TOL).unwrap();
        prop_assert!((k - k2).abs() <= 1e-8 * k);
    }

    #[test]
    fn parallel_product_is_bit_identical(a in matrix_strategy(40), seed in 0u64..1000) {
        let b = Matrix::from_fn(a.cols(), 33, |i, j| ((i * 31 + j) as f64 + seed as f64).cos());
        prop_assert_eq!(a.matmul_par(&b), a.matmul_seq(&b));
    }
}

#[test]
fn json_roundtrip_rejects_bad_length() {
    let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.5]]).unwrap();
    let s = serde_json::to_string(&m).unwrap();
    assert_eq!(serde_json::from_str::<Matrix>(&s).unwrap(), m);
    assert!(serde_json::from_str::<Matrix>(r#"{"rows":2,"cols":2,"data":[1.0,2.0,3.0]}"#).is_err());
    assert!(serde_json::from_str::<Matrix>(r#"{"rows":1,"cols":1,"data":[1.0],"extra":0}"#).is_err());
}
