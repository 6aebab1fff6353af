//! Gradient-descent guarantee: initialization spectra, the step-size /
//! weight-decay / step-count schedule, and the shifted PL checks along a
//! recorded trajectory.

use super::thm1::psi_raw;
use super::{vacuous, BoundEntry, BoundReport, Outcome, Premise, Relation};
use crate::densemat::{op_norm, singular_values, Matrix};
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, ParamSet};
use crate::trainer::Trajectory;
use serde::{Deserialize, Serialize};

/// Spectral quantities of the initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitSpectra {
    pub depth: usize,
    pub gamma: f64,
    /// `s_min(σ(W_1⁰ X))`.
    pub lambda_f: f64,
    /// `s_min(W_l⁰)` for every layer.
    pub lambda_l: Vec<f64>,
    /// `‖W_l⁰‖_op + min_{j≥3} λ_j` for every layer.
    pub bar_lambda_l: Vec<f64>,
    /// `Π_{l=3}^{L} λ_l`.
    pub lambda_3_to_l: f64,
    pub alpha: f64,
    pub r0: f64,
}

impl InitSpectra {
    pub fn min_lambda_from3(&self) -> f64 {
        self.lambda_l[2..].iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Product `λ_i ⋯ λ_j`, 1-based and inclusive.
    pub fn lambda_prod(&self, i: usize, j: usize) -> f64 {
        self.lambda_l[i - 1..j].iter().product()
    }
}

fn s_min(m: &Matrix) -> Result<f64> {
    let s = singular_values(m)?;
    Ok(*s.last().expect("non-empty"))
}

pub fn init_spectra(cfg: &NetworkConfig, params0: &ParamSet, x: &Matrix) -> Result<InitSpectra> {
    let l = cfg.depth();
    if l < 3 || cfg.l1 == 0 {
        return Err(Error::Config(
            "initialization spectra need at least three layers, the first nonlinear".into(),
        ));
    }
    let act = cfg.activation;
    let f = params0.layer(1).matmul(x).map(|v| act.eval(v));
    let lambda_f = s_min(&f)?;
    let lambda_l = params0.weights.iter().map(s_min).collect::<Result<Vec<_>>>()?;
    let min3 = lambda_l[2..].iter().copied().fold(f64::INFINITY, f64::min);
    let bar_lambda_l = params0
        .weights
        .iter()
        .map(|w| Ok(op_norm(w)? + min3))
        .collect::<Result<Vec<_>>>()?;
    let lambda_3_to_l: f64 = lambda_l[2..].iter().product();
    let gamma = act.slope_floor();
    let alpha = 2f64.powi(-(l as i32 - 3)) * gamma.powi(l as i32 - 2) * lambda_f * lambda_3_to_l;
    let r0 = 0.5 * lambda_f.min(min3);
    Ok(InitSpectra {
        depth: l,
        gamma,
        lambda_f,
        lambda_l,
        bar_lambda_l,
        lambda_3_to_l,
        alpha,
        r0,
    })
}

/// Both sides of the initial-condition inequality `(lhs, rhs)`.
pub fn assumption3_sides(sp: &InitSpectra, c0_init: f64) -> (f64, f64) {
    let lhs = sp.lambda_f * sp.lambda_3_to_l * sp.lambda_f.min(sp.min_lambda_from3());
    let g = sp.gamma;
    let rhs = 8.0 * g * ((2.0 / g).powi(sp.depth as i32) * c0_init).sqrt();
    (lhs, rhs)
}

pub fn check_assumption3(sp: &InitSpectra, c0_init: f64) -> bool {
    let (lhs, rhs) = assumption3_sides(sp, c0_init);
    lhs >= rhs
}

/// Run-independent inputs to the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2Setup {
    pub eps1: f64,
    pub eps2: f64,
    /// Bound on data column norms, at least 1.
    pub b: f64,
    pub x_opnorm: f64,
    pub theta0_norm: f64,
    pub c0_init: f64,
    pub k: usize,
    pub n: usize,
    pub lambda: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2Schedule {
    pub spectra: InitSpectra,
    pub setup: Thm2Setup,
    pub c_lambda_init: f64,
    pub m_lambda: f64,
    pub beta1: f64,
    pub lambda_cap_terms: [f64; 3],
    pub lambda_cap: f64,
    pub eta_cap_terms: [f64; 4],
    pub eta_cap: f64,
    /// Steps of the loss-decay phase; `None` when the contraction factor is
    /// not in `(0, 1)`.
    pub k_phase1: Option<f64>,
    /// Steps of the balancing phase.
    pub k_phase2: Option<f64>,
    pub k_floor: Option<f64>,
    /// Bound on representations and head weights after training.
    pub r_of_lambda: f64,
}

fn ceil_steps(ratio: f64, rate: f64) -> Option<f64> {
    if !(rate > 0.0 && rate < 1.0) {
        return None;
    }
    if !(ratio > 0.0) {
        return Some(0.0);
    }
    let k = (ratio.ln() / (-rate).ln_1p()).ceil();
    Some(k.max(0.0))
}

pub fn thm2_schedule(sp: &InitSpectra, cfg: &NetworkConfig, s: &Thm2Setup) -> Thm2Schedule {
    let l = cfg.depth() as f64;
    let li = cfg.depth() as i32;
    let n = s.n as f64;
    let beta = cfg.activation.beta;
    let lam = s.lambda;
    let e1sq = s.eps1 * s.eps1;

    let c_lambda_init = s.c0_init + 0.5 * lam * s.theta0_norm * s.theta0_norm;
    let m_lambda = (1.0 + (4.0 * lam / sp.alpha).sqrt()).powi(2) * (s.theta0_norm + sp.r0).powi(2);
    let prod_bar: f64 = sp.bar_lambda_l.iter().map(|&v| v.max(1.0)).product();
    let lip_scale = 5.0 * n * beta * s.b.powi(3) * l.powf(2.5);
    let beta1 = lip_scale * prod_bar.powi(3);

    let lambda_cap_terms = [
        2.0 * (sp.gamma / 2.0).powi(li - 2) * sp.lambda_f * sp.lambda_3_to_l,
        2.0 * s.c0_init / (s.theta0_norm * s.theta0_norm),
        e1sq / (18.0 * (s.theta0_norm + sp.lambda_f / 2.0).powi(2)),
    ];
    let lambda_cap = lambda_cap_terms.iter().copied().fold(f64::INFINITY, f64::min);

    let eta_cap_terms = [
        1.0 / (2.0 * beta1),
        1.0 / (lip_scale * (2.0 * e1sq / lam).powf(1.5 * l).max(1.0)),
        1.0 / (2.0 * lam),
        (lam / (2.0 * e1sq)).powi((cfg.l1 + cfg.depth()) as i32) * s.eps2 / (4.0 * s.x_opnorm * s.x_opnorm),
    ];
    let eta_cap = eta_cap_terms.iter().copied().fold(f64::INFINITY, f64::min);

    let lm = lam * m_lambda;
    let k_phase1 = if c_lambda_init <= 2.0 * lm {
        Some(0.0)
    } else {
        ceil_steps(lm / (c_lambda_init - lm), s.eta * sp.alpha / 8.0)
    };
    let k_phase2 = ceil_steps(lam * s.eps2 / (4.0 * e1sq), s.eta * lam);
    let k_floor = match (k_phase1, k_phase2) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };

    let e = s.eps1 * (2.0 / lam).sqrt();
    let r_of_lambda = e
        .max(e.powi(li - 2) * s.x_opnorm)
        .max(e.powi(li - 1) * s.x_opnorm);

    Thm2Schedule {
        spectra: sp.clone(),
        setup: s.clone(),
        c_lambda_init,
        m_lambda,
        beta1,
        lambda_cap_terms,
        lambda_cap,
        eta_cap_terms,
        eta_cap,
        k_phase1,
        k_phase2,
        k_floor,
        r_of_lambda,
    }
}

/// Within-class variability bound after training, with interpolation error
/// `ε₁√2`. `Ψ` enters unsquared.
pub fn thm2_nc1_rhs(eps1: f64, eps2: f64, r: f64, n_lminus1: usize, sk_y: f64, k: usize, n: usize) -> Outcome {
    let e = eps1 * 2f64.sqrt();
    let p = psi_raw(e, eps2, r, n_lminus1, sk_y)?;
    let (kf, nf) = (k as f64, n as f64);
    let d = ((kf - 1.0) / kf).sqrt() - 2.0 * 2f64.sqrt() * eps1 / nf.sqrt();
    if d <= 0.0 {
        return vacuous("non-positive denominator");
    }
    Ok(r * r / nf * p / (d * d))
}

/// Measured end state of a run checked against the schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm2Observed {
    pub steps: usize,
    pub loss_non_increasing: bool,
    pub final_eps1: f64,
    pub final_eps2: f64,
    pub final_r: f64,
    pub final_nc1: Option<f64>,
    pub pyramidal: bool,
    pub activation_ok: bool,
    pub sk_y: f64,
    pub n_lminus1: usize,
}

pub fn thm2_check(sched: &Thm2Schedule, obs: &Thm2Observed) -> BoundReport {
    let s = &sched.setup;
    let (a3l, a3r) = assumption3_sides(&sched.spectra, s.c0_init);
    let (k, n) = (s.k as f64, s.n as f64);
    let eps1_ok = s.eps1 > 0.0 && s.eps1 <= 0.5 * ((k - 1.0) * n / k).sqrt();
    let lambda_ok = s.lambda <= sched.lambda_cap;
    let eta_ok = s.eta <= sched.eta_cap;
    let k_ok = sched.k_floor.is_some_and(|f| obs.steps as f64 >= f);
    let premises = vec![
        Premise::new("pyramidal_topology", obs.pyramidal),
        Premise::new("activation", obs.activation_ok),
        Premise::new("initial_conditions", a3l >= a3r),
        Premise::new("eps1_range", eps1_ok),
        Premise::new("b_at_least_1", s.b >= 1.0),
        Premise::new("lambda_cap", lambda_ok),
        Premise::new("eta_cap", eta_ok),
        Premise::new("k_floor", k_ok),
    ];

    let mut rep = BoundReport::default();
    rep.push(BoundEntry::new("thm2_initial_conditions", Ok(a3r), Some(a3l), Relation::Ge, vec![]));
    rep.push(BoundEntry::new("thm2_lambda_cap", Ok(sched.lambda_cap), Some(s.lambda), Relation::Le, vec![]));
    rep.push(BoundEntry::new("thm2_eta_cap", Ok(sched.eta_cap), Some(s.eta), Relation::Le, vec![]));
    rep.push(BoundEntry::new(
        "thm2_k_floor",
        sched.k_floor.ok_or_else(|| super::Vacuous("contraction factor outside (0, 1)".into())),
        Some(obs.steps as f64),
        Relation::Ge,
        vec![],
    ));
    rep.push(BoundEntry::new(
        "thm2_interpolation",
        Ok(2f64.sqrt() * s.eps1),
        Some(obs.final_eps1),
        Relation::Le,
        premises.clone(),
    ));
    rep.push(BoundEntry::new(
        "thm2_balancedness",
        Ok(s.eps2),
        Some(obs.final_eps2),
        Relation::Le,
        premises.clone(),
    ));
    rep.push(BoundEntry::new(
        "thm2_r",
        Ok(sched.r_of_lambda),
        Some(obs.final_r),
        Relation::Le,
        premises.clone(),
    ));
    rep.push(
        BoundEntry::new(
            "thm2_nc1",
            thm2_nc1_rhs(s.eps1, obs.final_eps2, sched.r_of_lambda, obs.n_lminus1, obs.sk_y, s.k, s.n),
            obs.final_nc1,
            Relation::Le,
            premises,
        )
        .with_note("evaluated with target eps1, measured eps2 and the guaranteed r"),
    );
    rep.push(BoundEntry::new(
        "thm2_loss_monotone",
        Ok(1.0),
        Some(if obs.loss_non_increasing { 1.0 } else { 0.0 }),
        Relation::Ge,
        vec![],
    ));
    rep
}

/// Shifted PL inequality, geometric decay and the distance bound at the end
/// of the first phase, checked on recorded steps while the iterate stays in
/// `B(θ₀, r₀)`. Assumes a constant step size `eta`.
pub fn pl_check(traj: &Trajectory, sched: &Thm2Schedule, lambda: f64, eta: f64) -> BoundReport {
    let sp = &sched.spectra;
    let alpha = sp.alpha;
    let lm = lambda * sched.m_lambda;
    let c_init = traj.records.first().map_or(f64::NAN, |r| r.c_lambda);
    let dist_cap = 8.0 * (c_init / alpha).sqrt();
    let prop_premises = vec![
        Premise::new("eta_below_half_inverse_beta1", eta < 1.0 / (2.0 * sched.beta1)),
        Premise::new("r0_covers_distance", sp.r0 >= dist_cap),
    ];

    let in_ball: Vec<_> = traj
        .records
        .iter()
        .take_while(|r| r.dist_from_init <= sp.r0)
        .collect();
    let mut rep = BoundReport::default();
    if in_ball.is_empty() {
        let why = "trajectory never inside B(theta0, r0)";
        rep.push(BoundEntry::new("prop1_shifted_pl", vacuous(why), None, Relation::Le, vec![]));
        rep.push(BoundEntry::new("prop1_decay", vacuous(why), None, Relation::Le, vec![]));
        rep.push(BoundEntry::new("prop1_distance_k1", vacuous(why), None, Relation::Le, vec![]));
        return rep;
    }

    // Worst relative slack: max over steps of (rhs - lhs) / scale, must be ≤ 0.
    let mut pl_worst = f64::NEG_INFINITY;
    let mut pl_at = 0;
    for r in &in_ball {
        let need = 0.25 * alpha * (r.c_lambda - lm);
        let slack = (need - r.grad_norm * r.grad_norm) / need.abs().max(f64::MIN_POSITIVE);
        if slack > pl_worst {
            pl_worst = slack;
            pl_at = r.step;
        }
    }
    rep.push(
        BoundEntry::new("prop1_shifted_pl", Ok(0.0), Some(pl_worst), Relation::Le, vec![])
            .with_note(format!("worst relative slack at step {pl_at}")),
    );

    let log_rate = (-eta * alpha / 8.0).ln_1p();
    let gap0 = c_init - lm;
    let mut decay_worst = f64::NEG_INFINITY;
    let mut decay_at = 0;
    for r in &in_ball {
        let rhs = gap0 * (r.step as f64 * log_rate).exp();
        let lhs = r.c_lambda - lm;
        let slack = (lhs - rhs) / gap0.abs().max(f64::MIN_POSITIVE);
        if slack > decay_worst {
            decay_worst = slack;
            decay_at = r.step;
        }
    }
    rep.push(
        BoundEntry::new(
            "prop1_decay",
            if gap0 > 0.0 { Ok(0.0) } else { vacuous("C_lambda(theta0) <= lambda*m_lambda") },
            Some(decay_worst),
            Relation::Le,
            prop_premises.clone(),
        )
        .with_note(format!("worst relative slack at step {decay_at}")),
    );

    match traj.records.iter().find(|r| r.c_lambda <= 2.0 * lm) {
        Some(r) => {
            let e = BoundEntry::new(
                "prop1_distance_k1",
                Ok(dist_cap),
                Some(r.dist_from_init),
                Relation::Le,
                prop_premises.clone(),
            )
            .with_note(format!("k1 = {}", r.step));
            rep.push(e);
            if let Some(k1_bound) = sched.k_phase1 {
                rep.push(BoundEntry::new(
                    "prop1_k1_steps",
                    Ok(k1_bound),
                    Some(r.step as f64),
                    Relation::Le,
                    prop_premises,
                ));
            }
        }
        None => rep.push(BoundEntry::new(
            "prop1_distance_k1",
            vacuous("loss never reached 2*lambda*m_lambda"),
            None,
            Relation::Le,
            prop_premises,
        )),
    }
    rep
}
