use nclab_core::data::synth_gaussian;
use nclab_core::network::{ActivationSpec, NetworkConfig};
use nclab_core::trainer::{gd_step, init_params, train, train_observed, InitSpec, TrainConfig};

fn cfg() -> NetworkConfig {
    NetworkConfig {
        input_dim: 6,
        widths: vec![12, 6, 3, 3],
        l1: 2,
        l2: 2,
        activation: ActivationSpec::smoothed(0.5, 1.0),
    }
}

fn tc(steps: usize, eta: f64) -> TrainConfig {
    TrainConfig {
        eta,
        lambda: 1e-3,
        steps,
        lr_drop_fraction: 0.8,
        lr_drop_factor: 10.0,
        record_every: 1,
        seed: 7,
        init: InitSpec::Gaussian { scales: vec![0.4, 0.3, 0.5, 0.5] },
    }
}

#[test]
fn zero_steps_records_only_the_initialization() {
    let ds = synth_gaussian(6, 3, 4, 2.0, 0.1, 1).unwrap();
    let (p, traj) = train(&cfg(), &tc(0, 0.01), &ds.x, &ds.y).unwrap();
    assert_eq!(traj.records.len(), 1);
    assert_eq!(traj.records[0].step, 0);
    assert_eq!(traj.records[0].dist_from_init, 0.0);
    assert_eq!(p, init_params(&cfg(), &tc(0, 0.01).init, 7).unwrap());
}

#[test]
fn reruns_are_bit_identical() {
    let ds = synth_gaussian(6, 3, 4, 2.0, 0.1, 1).unwrap();
    let a = train(&cfg(), &tc(50, 0.05), &ds.x, &ds.y).unwrap();
    let b = train(&cfg(), &tc(50, 0.05), &ds.x, &ds.y).unwrap();
    assert_eq!(a, b);
}

#[test]
fn huge_step_diverges_and_stops() {
    let ds = synth_gaussian(6, 3, 4, 2.0, 0.1, 1).unwrap();
    let (_, traj) = train(&cfg(), &tc(500, 1e3), &ds.x, &ds.y).unwrap();
    assert!(traj.diverged);
    let at = traj.diverged_at.unwrap();
    assert!(traj.records.iter().all(|r| r.step < at));
}

#[test]
fn small_step_loss_is_monotone_and_drop_is_applied() {
    let ds = synth_gaussian(6, 3, 4, 2.0, 0.1, 1).unwrap();
    let t = tc(100, 0.005);
    let (_, traj) = train(&cfg(), &t, &ds.x, &ds.y).unwrap();
    assert!(!traj.diverged);
    assert!(traj.records.windows(2).all(|w| w[1].c_lambda <= w[0].c_lambda));
    assert_eq!(traj.records[79].eta, 0.005);
    assert_eq!(traj.records[80].eta, 0.0005);
    let last = traj.last().unwrap();
    assert!((last.eps1 - (2.0 * last.c0).sqrt()).abs() < 1e-15);
    assert_eq!(last.balancedness.len(), 1);
    assert_eq!(last.op_norms.len(), 4);
}

#[test]
fn record_cadence_includes_final_step() {
    let ds = synth_gaussian(6, 3, 4, 2.0, 0.1, 1).unwrap();
    let mut t = tc(23, 0.02);
    t.record_every = 5;
    let mut seen = Vec::new();
    let (_, traj) = train_observed(&cfg(), &t, &ds.x, &ds.y, |v| seen.push(v.record.step)).unwrap();
    assert_eq!(seen, vec![0, 5, 10, 15, 20, 23]);
    assert_eq!(traj.records.len(), 6);
}

#[test]
fn loop_matches_explicit_steps() {
    let ds = synth_gaussian(6, 3, 4, 2.0, 0.1, 1).unwrap();
    let mut t = tc(5, 0.03);
    t.lr_drop_fraction = 1.0;
    let (p, _) = train(&cfg(), &t, &ds.x, &ds.y).unwrap();
    let mut q = init_params(&cfg(), &t.init, t.seed).unwrap();
    for _ in 0..5 {
        q = gd_step(&cfg(), &q, &ds.x, &ds.y, t.eta, t.lambda).unwrap();
    }
    assert_eq!(p, q);
}

#[test]
fn orthogonal_init_has_flat_spectrum() {
    let p = init_params(&cfg(), &InitSpec::Orthogonal { scales: vec![2.0, 0.0, 1.0, 3.0] }, 3).unwrap();
    let s = nclab_core::densemat::singular_values(&p.weights[0]).unwrap();
    assert!(s.iter().all(|v| (v - 2.0).abs() < 1e-12));
    assert_eq!(p.weights[1].max_abs(), 0.0);
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = synth_gaussian(6, 3, 4, 2.0, 0.1, 1).unwrap();
    let mut t = tc(5, 0.03);
    t.eta = -1.0;
    assert!(train(&cfg(), &t, &ds.x, &ds.y).is_err());
    let mut t = tc(5, 0.03);
    t.init = InitSpec::Gaussian { scales: vec![1.0] };
    assert!(train(&cfg(), &t, &ds.x, &ds.y).is_err());
}

#[test]
fn fan_in_init_scales_with_fan_in() {
    let cfg = NetworkConfig {
        input_dim: 400,
        widths: vec![300, 100],
        l1: 1,
        l2: 1,
        activation: ActivationSpec::smoothed(0.5, 1.0),
    };
    let p = init_params(&cfg, &InitSpec::FanIn { gain: 2.0 }, 3).unwrap();
    for (w, fan_in) in p.weights.iter().zip([400.0f64, 300.0]) {
        let n = (w.rows() * w.cols()) as f64;
        let var = w.frobenius_sq() / n;
        let expect = 4.0 / fan_in;
        assert!((var / expect - 1.0).abs() < 0.02, "{var} vs {expect}");
    }
    assert!(InitSpec::FanIn { gain: f64::NAN }.validate(&cfg).is_err());
}
