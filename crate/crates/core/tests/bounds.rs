use nclab_core::bounds::instances::{chain_instance, chain_premises, check_thm1_instance, thm1_instance};
use nclab_core::bounds::*;
use nclab_core::densemat::{op_norm, pinv, singular_values, Matrix, DEFAULT_RANK_TOL};
use nclab_core::network::{gradient, ActivationSpec, NetworkConfig, ParamSet};
use nclab_core::trainer::{init_params, train, InitSpec, TrainConfig};
use proptest::prelude::*;

fn inputs() -> Thm1Inputs {
    Thm1Inputs {
        eps1: 0.1,
        eps2: 0.01,
        r: 3.0,
        n_lminus1: 8,
        k: 4,
        n: 40,
        sk_y: 2.0,
        x_opnorm: 1.5,
        l1: 1,
        l2: 3,
        c3: Some(5.0),
    }
}

#[test]
fn psi_reductions() {
    let mut i = inputs();
    i.eps1 = 0.0;
    assert!((psi(&i).unwrap() - 3.0 * (8.0f64 * 0.01).sqrt()).abs() < 1e-15);
}

#[test]
fn nc1_rhs_formula_oracle_and_homogeneity() {
    let i = inputs();
    let p = 3.0 * (0.1 / 1.9 + 0.08f64.sqrt());
    let d = (0.75f64).sqrt() - 0.2 / 40f64.sqrt();
    let oracle = 9.0 / 40.0 * p * p / (d * d);
    assert!((thm1_nc1_rhs(&i).unwrap() - oracle).abs() < 1e-14 * oracle);

    let mut a = inputs();
    a.eps1 = 0.05;
    a.eps2 = 0.0;
    let mut b = a.clone();
    b.r = 6.0;
    assert!((thm1_nc1_rhs(&b).unwrap() / thm1_nc1_rhs(&a).unwrap() - 16.0).abs() < 1e-12);
}

#[test]
fn kappa_rhs_formula_oracle() {
    let i = inputs();
    let delta = 0.5 * 9.0 * 3f64.powi(4) * 0.01;
    let base = 1.9f64.powi(2) / (1.5f64.powi(2) * 9.0);
    let eps = delta / (base - delta);
    if base > delta {
        let oracle = 5f64.powf(1.0 / 3.0) * (1.0 + eps).powf(1.0 / 3.0) + 5f64.powf(1.0 / 3.0 - 1.0) * eps;
        assert!((thm1_kappa_rhs(&i, false).unwrap() - oracle).abs() < 1e-12 * oracle);
    } else {
        assert!(thm1_kappa_rhs(&i, false).is_err());
    }
    let mut small = inputs();
    small.eps2 = 1e-5;
    small.r = 1.1;
    let delta = 0.5 * 9.0 * 1.1f64.powi(4) * 1e-5;
    let base = 1.9f64.powi(2) / (1.5f64.powi(2) * 1.1f64.powi(2));
    let eps = delta / (base - delta);
    let loose = 5f64.powf(1.0 / 3.0) * (1.0 + eps).powf(1.0 / 3.0) + 5f64.powf(-2.0 / 3.0) * eps;
    let tight = 5f64.powf(1.0 / 3.0) * (1.0 + eps).powf(1.0 / 6.0) + 5f64.powf(-2.0 / 3.0) * eps;
    assert!((thm1_kappa_rhs(&small, false).unwrap() - loose).abs() < 1e-12);
    assert!((thm1_kappa_rhs(&small, true).unwrap() - tight).abs() < 1e-12);
}

#[test]
fn nc2_nc3_formula_oracles() {
    let i = inputs();
    let p = 3.0 * (0.1 / 1.9 + 0.08f64.sqrt());
    let kw = 1.3;
    let t = 3.0 * p / 2.0;
    if t < 1.0 {
        assert!((thm1_nc2_rhs(&i, kw).unwrap() - (kw + t) / (1.0 - t)).abs() < 1e-12);
    } else {
        assert!(thm1_nc2_rhs(&i, kw).is_err());
    }
    let n = 40f64;
    let num = (n.sqrt() - 0.1).powi(2) + n / (kw * kw) - (3.0 * p + 2.0 * (kw * kw - 1.0)).powi(2);
    let oracle = num / (2.0 * n * kw * 1.1);
    assert!((thm1_nc3_rhs(&i, kw).unwrap() - oracle).abs() < 1e-12 * oracle.abs().max(1.0));
}

#[test]
fn residual_to_pinv_translation() {
    let w = Matrix::from_rows(&[vec![1.0, 0.5, 0.0], vec![0.0, 2.0, 1.0]]).unwrap();
    let y = Matrix::from_rows(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 1.0]]).unwrap();
    let z = pinv(&w, DEFAULT_RANK_TOL).unwrap().matmul(&y);
    assert!(residual_to_pinv(&z, &w, &y).unwrap().unwrap() < 1e-14);
    let e = Matrix::from_fn(3, 4, |i, j| 0.01 * (i as f64 - j as f64));
    let r = residual_to_pinv(&z.add(&e), &w, &y).unwrap().unwrap();
    assert!((r - e.frobenius()).abs() < 1e-14);
}

#[test]
fn random_instances_respect_every_bound() {
    for seed in 0..40 {
        let inst = thm1_instance(seed).unwrap();
        let (inp, obs, rep) = check_thm1_instance(&inst).unwrap();
        assert_eq!(rep.violations().count(), 0, "seed {seed}: {rep:#?}");
        if let (Some(res), Ok(p)) = (obs.residual, psi(&inp)) {
            assert!(res <= p, "seed {seed}");
        }
        assert_eq!(rep.get("thm1_nc1").unwrap().holds, Holds::Holds, "seed {seed}");
    }
}

#[test]
fn no_entry_holds_with_failed_premise() {
    let mut inp = inputs();
    inp.eps1 = 2.5;
    let obs = Thm1Observed {
        nc1: Some(0.0),
        kappa_wl: Some(1.0),
        nc2: Some(1.0),
        nc3_rescaled: Some(1.0),
        residual: Some(0.0),
    };
    let rep = thm1_check(&inp, &obs, true, true);
    assert!(rep.entries.iter().all(|e| e.holds == Holds::Vacuous));
}

#[test]
fn balanced_chains() {
    for seed in 0..50 {
        let exact = chain_instance(seed, 0.0).unwrap();
        assert!(balanced_power_lhs(&exact.cfg, &exact.params).unwrap() <= 1e-10);
        let pert = chain_instance(seed, 1e-3).unwrap();
        let (eps2, r) = chain_premises(&pert).unwrap();
        let rep = balanced_power_gap(&pert.cfg, &pert.params, r, eps2).unwrap();
        assert_eq!(rep.get("lemma_balanced_power").unwrap().holds, Holds::Holds, "seed {seed}");
        if exact.cfg.l2 == 1 {
            assert_eq!(balanced_power_lhs(&pert.cfg, &pert.params).unwrap(), 0.0);
        }
    }
}

fn pyramid() -> NetworkConfig {
    NetworkConfig {
        input_dim: 3,
        widths: vec![8, 4, 3, 2],
        l1: 2,
        l2: 2,
        activation: ActivationSpec::smoothed(0.5, 1.0),
    }
}

fn data() -> (Matrix, Matrix) {
    let x = Matrix::from_fn(3, 6, |i, j| ((i * 6 + j) as f64 * 0.7).sin());
    let y = Matrix::from_fn(2, 6, |c, j| if j / 3 == c { 1.0 } else { 0.0 });
    (x, y)
}

#[test]
fn init_spectra_cross_checks() {
    let cfg = NetworkConfig {
        input_dim: 3,
        widths: vec![3, 3, 3],
        l1: 1,
        l2: 2,
        activation: ActivationSpec::smoothed(0.5, 1.0),
    };
    let p = init_params(&cfg, &InitSpec::Orthogonal { scales: vec![1.0; 3] }, 9).unwrap();
    let (x, _) = data();
    let sp = init_spectra(&cfg, &p, &x).unwrap();
    for &l in &sp.lambda_l {
        assert!((l - 1.0).abs() < 1e-12);
    }
    let f = p.weights[0].matmul(&x).map(|v| cfg.activation.eval(v));
    assert_eq!(sp.lambda_f, *singular_values(&f).unwrap().last().unwrap());
    let oracle_alpha = 0.5f64.powi(0) * 0.5 * sp.lambda_f * 1.0;
    assert!((sp.alpha - oracle_alpha).abs() < 1e-14);
}

#[test]
fn assumption3_holds_for_scaled_init_with_zero_second_layer() {
    let cfg = pyramid();
    let (x, y) = data();
    let mut c0 = 0.0;
    let mut holds = Vec::new();
    for &s in &[1.0, 4.0, 16.0, 64.0] {
        let p = init_params(&cfg, &InitSpec::Orthogonal { scales: vec![s, 0.0, s, s] }, 1).unwrap();
        c0 = nclab_core::network::loss(&cfg, &p, &x, &y, 0.0).unwrap().1;
        let sp = init_spectra(&cfg, &p, &x).unwrap();
        holds.push(check_assumption3(&sp, c0));
    }
    assert_eq!(c0, 0.5 * y.frobenius_sq());
    assert!(holds.windows(2).all(|w| w[0] <= w[1]), "{holds:?}");
    assert_eq!(holds.last(), Some(&true));
}

/// Literal transcription of the schedule, independent of the library code.
#[allow(clippy::too_many_arguments)]
fn schedule_oracle(
    sp: &InitSpectra,
    l1: usize,
    beta: f64,
    s: &Thm2Setup,
) -> (f64, f64, f64, f64, Option<f64>, f64) {
    let l = sp.depth as f64;
    let n = s.n as f64;
    let min3 = sp.lambda_l[2..].iter().cloned().fold(f64::INFINITY, f64::min);
    let lam_3l: f64 = sp.lambda_l[2..].iter().product();
    let cap1 = 2.0 * (sp.gamma / 2.0).powf(l - 2.0) * sp.lambda_f * lam_3l;
    let cap2 = 2.0 * s.c0_init / s.theta0_norm.powi(2);
    let cap3 = s.eps1.powi(2) / (18.0 * (s.theta0_norm + sp.lambda_f / 2.0).powi(2));
    let lambda_cap = cap1.min(cap2).min(cap3);
    let mut prod = 1.0;
    for w_norm_plus in &sp.bar_lambda_l {
        prod *= f64::max(1.0, *w_norm_plus);
    }
    let beta1 = 5.0 * n * beta * s.b.powi(3) * prod.powi(3) * l.powf(2.5);
    let lam = s.lambda;
    let e2 = s.eps1 * s.eps1;
    let t2 = 1.0 / (5.0 * n * beta * s.b.powi(3) * f64::max(1.0, (2.0 * e2 / lam).powf(3.0 * l / 2.0)) * l.powf(2.5));
    let t4 = (lam / (2.0 * e2)).powf(l1 as f64 + l) * s.eps2 / (4.0 * s.x_opnorm.powi(2));
    let eta_cap = (1.0 / (2.0 * beta1)).min(t2).min(1.0 / (2.0 * lam)).min(t4);
    let r0 = 0.5 * sp.lambda_f.min(min3);
    let m = (1.0 + (4.0 * lam / sp.alpha).sqrt()).powi(2) * (s.theta0_norm + r0).powi(2);
    let c_init = s.c0_init + lam / 2.0 * s.theta0_norm.powi(2);
    let first = if c_init <= 2.0 * lam * m {
        0.0
    } else {
        ((lam * m / (c_init - lam * m)).ln() / (1.0 - s.eta * sp.alpha / 8.0).ln()).ceil().max(0.0)
    };
    let second = ((lam * s.eps2 / (4.0 * e2)).ln() / (1.0 - s.eta * lam).ln()).ceil().max(0.0);
    let e = s.eps1 * (2.0 / lam).sqrt();
    let r = [e, e.powf(l - 2.0) * s.x_opnorm, e.powf(l - 1.0) * s.x_opnorm]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    (lambda_cap, beta1, eta_cap, m, Some(first + second), r)
}

fn small_schedule(lambda: f64, eta: f64, eps2: f64) -> (Thm2Schedule, InitSpectra, Thm2Setup) {
    let cfg = pyramid();
    let (x, y) = data();
    let p = init_params(&cfg, &InitSpec::Orthogonal { scales: vec![3.0, 0.0, 3.0, 3.0] }, 2).unwrap();
    let sp = init_spectra(&cfg, &p, &x).unwrap();
    let c0 = nclab_core::network::loss(&cfg, &p, &x, &y, 0.0).unwrap().1;
    let setup = Thm2Setup {
        eps1: 0.5,
        eps2,
        b: 1.0f64.max(nclab_core::data::max_column_norm(&x)),
        x_opnorm: op_norm(&x).unwrap(),
        theta0_norm: p.norm(),
        c0_init: c0,
        k: 2,
        n: 6,
        lambda,
        eta,
    };
    (thm2_schedule(&sp, &cfg, &setup), sp, setup)
}

#[test]
fn schedule_matches_formula_oracle() {
    for &(lambda, eta) in &[(1e-3, 1e-4), (1e-2, 1e-3), (5e-4, 1e-5)] {
        let (sched, sp, setup) = small_schedule(lambda, eta, 1e-2);
        let (lc, b1, ec, m, kf, r) = schedule_oracle(&sp, 2, 1.0, &setup);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300);
        assert!(close(sched.lambda_cap, lc));
        assert!(close(sched.beta1, b1));
        assert!(close(sched.eta_cap, ec), "{} vs {ec}", sched.eta_cap);
        assert!(close(sched.m_lambda, m));
        assert!(close(sched.r_of_lambda, r));
        let (a, b) = (sched.k_floor.unwrap(), kf.unwrap());
        // ln(1 − x) carries a relative error near eps/x for tiny rates.
        assert!((a - b).abs() <= 1.0 + 1e-6 * b, "{a} vs {b}");
    }
}

#[test]
fn schedule_limits() {
    let (a, _, _) = small_schedule(1e-3, 1e-4, 1e-2);
    let (b, _, _) = small_schedule(1e-3, 1e-4, 1e-8);
    assert!(b.eta_cap < a.eta_cap);
    assert!(b.k_floor.unwrap() > a.k_floor.unwrap());
    let (mut c, sp, setup) = small_schedule(1e-3, 1e-4, 1e-2);
    let lam3 = setup.eps1.powi(2) / (18.0 * (setup.theta0_norm + sp.lambda_f / 2.0).powi(2));
    c.lambda_cap_terms[2] = lam3;
    assert!((18.0 * (setup.theta0_norm + sp.lambda_f / 2.0).powi(2) * lam3 - setup.eps1.powi(2)).abs() < 1e-15);
}

#[test]
fn pl_checks_on_a_linear_regression() {
    // One linear layer: C₀ is a quadratic and satisfies PL with α = 2 s_min(X)².
    let cfg = NetworkConfig {
        input_dim: 4,
        widths: vec![2],
        l1: 0,
        l2: 1,
        activation: ActivationSpec::relu(),
    };
    let x = Matrix::from_fn(4, 3, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 * (i + j) as f64 });
    let y = Matrix::from_fn(2, 3, |c, j| if (j + c) % 2 == 0 { 1.0 } else { 0.0 });
    let smin = *singular_values(&x).unwrap().last().unwrap();
    let lambda = 1e-4;
    let eta = 0.02;
    let tc = TrainConfig {
        eta,
        lambda,
        steps: 300,
        lr_drop_fraction: 1.0,
        lr_drop_factor: 10.0,
        record_every: 1,
        seed: 0,
        init: InitSpec::Gaussian { scales: vec![0.5] },
    };
    let (_, traj) = train(&cfg, &tc, &x, &y).unwrap();
    let p0 = init_params(&cfg, &tc.init, 0).unwrap();
    let sp = InitSpectra {
        depth: 1,
        gamma: 1.0,
        lambda_f: 1.0,
        lambda_l: vec![1.0],
        bar_lambda_l: vec![1.0],
        lambda_3_to_l: 1.0,
        alpha: 2.0 * smin * smin,
        r0: 10.0,
    };
    let setup = Thm2Setup {
        eps1: 0.1,
        eps2: 0.1,
        b: 1.0,
        x_opnorm: op_norm(&x).unwrap(),
        theta0_norm: p0.norm(),
        c0_init: traj.records[0].c0,
        k: 2,
        n: 3,
        lambda,
        eta,
    };
    let sched = thm2_schedule(&sp, &cfg, &setup);
    let rep = pl_check(&traj, &sched, lambda, eta);
    for name in ["prop1_shifted_pl", "prop1_decay"] {
        assert_eq!(rep.get(name).unwrap().inequality_ok, Some(true), "{name}: {rep:#?}");
    }
    let d = rep.get("prop1_distance_k1").unwrap();
    assert_eq!(d.inequality_ok, Some(true));
}

#[test]
fn lipschitz_constant_bounds_sampled_gradient_differences() {
    let cfg = NetworkConfig {
        input_dim: 3,
        widths: vec![4, 3, 2],
        l1: 1,
        l2: 2,
        activation: ActivationSpec::smoothed(0.3, 1.0),
    };
    let (x, y) = data();
    let xs = x.scale(1.0 / nclab_core::data::max_column_norm(&x));
    let radii = [1.5; 3];
    let lip = lipschitz_const(&cfg, &radii, 1.0, 6, 1.0).unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let inside = |rng: &mut rand_chacha::ChaCha8Rng| {
        let ws: Vec<Matrix> = (1..=3)
            .map(|l| {
                let (r, c) = cfg.layer_shape(l);
                let g = nclab_core::bounds::instances::gaussian_matrix(rng, r, c, 1.0);
                let n = op_norm(&g).unwrap();
                g.scale(1.5 * rand::Rng::gen_range(rng, 0.0..1.0) / n)
            })
            .collect();
        ParamSet::new(ws)
    };
    for _ in 0..100 {
        let a = inside(&mut rng);
        let b = inside(&mut rng);
        let ga = gradient(&cfg, &a, &xs, &y, 0.0).unwrap();
        let gb = gradient(&cfg, &b, &xs, &y, 0.0).unwrap();
        assert!(ga.sub(&gb).norm() <= lip * a.sub(&b).norm());
    }
}

#[test]
fn global_min_and_ntk_and_large_lr_oracles() {
    let (kp, kw) = global_min_kappa_bound(0.2, 3.0, 2, 3, 2.0, 4.0).unwrap();
    let oracle = (4.0f64 / 1.8).powi(3) * (0.5 * (3.0 - 6.0 + 6.0 * 3f64.ln())).exp();
    assert!((kp - oracle).abs() < 1e-12 * oracle);
    assert!((kw - oracle.sqrt()).abs() < 1e-12 * kw);
    let b1 = ntk_lower_bound(2.0, 0.5, 3, 1.0, 2).unwrap();
    assert!((b1 - 2.25 * 2.0 / 9.0).abs() < 1e-15);
    assert!((ntk_lower_bound(2.0, 0.5, 3, 2.0, 2).unwrap() - b1 / 4.0).abs() < 1e-15);
    assert!((ntk_lower_bound(2.0, 0.5, 3, 1.0, 4).unwrap() - 2.0 * b1).abs() < 1e-15);
    let p = prop2_kappa_bound(0.2, 3.0, 2, 3, 2.0, 4.0).unwrap();
    let p_oracle = (0.5 * (3.0 + 6.0 * 3f64.ln() - 6.0 * (1.8f64 / 4.0).ln())).exp();
    assert!((p - p_oracle).abs() < 1e-12 * p_oracle);
}

proptest! {
    #[test]
    fn evaluators_are_pure(eps1 in 0.0f64..1.0, eps2 in 0.0f64..0.1, r in 1.0f64..3.0) {
        let mut i = inputs();
        i.eps1 = eps1;
        i.eps2 = eps2;
        i.r = r;
        prop_assert_eq!(format!("{:?}", thm1_nc1_rhs(&i)), format!("{:?}", thm1_nc1_rhs(&i)));
        prop_assert_eq!(format!("{:?}", thm1_kappa_rhs(&i, false)), format!("{:?}", thm1_kappa_rhs(&i, false)));
    }

    #[test]
    fn global_min_bound_monotone(c in 0.0f64..5.0, dc in 0.01f64..1.0, xn in 1.0f64..5.0) {
        let a = global_min_kappa_bound(0.1, c, 2, 3, 2.0, xn).unwrap().0;
        let b = global_min_kappa_bound(0.1, c + dc, 2, 3, 2.0, xn).unwrap().0;
        let d = global_min_kappa_bound(0.1, c, 2, 3, 2.0, xn * 1.1).unwrap().0;
        prop_assert!(b > a && d > a);
    }
}
