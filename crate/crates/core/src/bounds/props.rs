//! Conditioning bounds at global minimizers and under bounded NTK, and the
//! two technical lemmas (gradient Lipschitz constant, balanced powers).

use super::{vacuous, BoundEntry, BoundReport, Outcome, Premise, Relation};
use crate::densemat::{cond, op_norm, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::network::{head_product, partial_product, NetworkConfig, ParamSet};
use crate::trainer::linear_gaps;

/// Lipschitz constant of `∇C₀` on `{‖W_l‖_op ≤ r_l}`:
/// `5 N β b³ (Π r_l)³ L^{5/2}`.
pub fn lipschitz_const(cfg: &NetworkConfig, radii: &[f64], b: f64, n: usize, beta: f64) -> Result<f64> {
    if radii.len() != cfg.depth() {
        return Err(Error::Config(format!("{} radii for {} layers", radii.len(), cfg.depth())));
    }
    if b < 1.0 || radii.iter().any(|&r| r < 1.0) {
        return Err(Error::Config("radii and b must be at least 1".into()));
    }
    let prod: f64 = radii.iter().product();
    Ok(5.0 * n as f64 * beta * b.powi(3) * prod.powi(3) * (cfg.depth() as f64).powf(2.5))
}

/// `(L₂²/2) ε₂ r^{2(L₂−1)}`.
pub fn balanced_power_rhs(l2: usize, r: f64, eps2: f64) -> f64 {
    let l2f = l2 as f64;
    0.5 * l2f * l2f * eps2 * r.powi(2 * (l2 as i32 - 1))
}

/// `‖(W_L W_Lᵀ)^{L₂} − W_{L:l1+1} W_{L:l1+1}ᵀ‖_op`.
pub fn balanced_power_lhs(cfg: &NetworkConfig, params: &ParamSet) -> Result<f64> {
    let w_l = params.layer(cfg.depth());
    let p = head_product(cfg, params);
    let lhs = w_l.gram_rows().powi(cfg.l2 as u32).sub(&p.gram_rows());
    Ok(op_norm(&lhs)?)
}

/// Compares the balanced-power gap with its bound and reports
/// `κ(W_L)` next to `κ(W_{L:l1+1})^{1/L₂}`.
pub fn balanced_power_gap(cfg: &NetworkConfig, params: &ParamSet, r: f64, eps2: f64) -> Result<BoundReport> {
    let lhs = balanced_power_lhs(cfg, params)?;
    let rhs = balanced_power_rhs(cfg.l2, r, eps2);
    let mut weights_ok = true;
    for l in cfg.l1 + 1..=cfg.depth() {
        weights_ok &= op_norm(params.layer(l))? <= r;
    }
    let gaps = linear_gaps(cfg, params)?;
    let gaps_ok = gaps.iter().all(|&g| g <= eps2);
    let mut rep = BoundReport::default();
    rep.push(BoundEntry::new(
        "lemma_balanced_power",
        Ok(rhs),
        Some(lhs),
        Relation::Le,
        vec![
            Premise::new("balancedness_eps2", gaps_ok),
            Premise::new("weights_bounded_by_r", weights_ok),
        ],
    ));
    let kw = cond(params.layer(cfg.depth()), DEFAULT_RANK_TOL)?;
    let kp = cond(&head_product(cfg, params), DEFAULT_RANK_TOL)?;
    rep.push(
        BoundEntry::new(
            "kappa_wl_vs_root_of_product",
            Ok(kp.powf(1.0 / cfg.l2 as f64)),
            Some(kw),
            Relation::Le,
            vec![Premise::new("exactly_balanced", gaps.iter().all(|&g| g == 0.0))],
        )
        .with_note("equality under exact balancedness"),
    );
    Ok(rep)
}

/// Conditioning bound for `W_{L:l1+1}` given `‖θ‖² ≤ LK + c`.
pub fn prop2_kappa_bound(eps1: f64, c: f64, l1: usize, k: usize, sk_y: f64, x_opnorm: f64) -> Outcome {
    if eps1 >= sk_y {
        return vacuous("eps1 >= s_K(Y)");
    }
    let (l1, k) = (l1 as f64, k as f64);
    Ok((0.5 * (c + l1 * k * k.ln() - 2.0 * k * ((sk_y - eps1) / x_opnorm).ln())).exp())
}

/// `(κ bound for W_{L:l1+1}, κ bound for W_L)` at a global minimizer. The
/// second is the `1/l1`-th power of the first.
pub fn global_min_kappa_bound(
    eps1: f64,
    c: f64,
    l1: usize,
    k: usize,
    sk_y: f64,
    x_opnorm: f64,
) -> Outcome<(f64, f64)> {
    if eps1 >= sk_y {
        return vacuous("eps1 >= s_K(Y)");
    }
    let (l1f, kf) = (l1 as f64, k as f64);
    let kappa_prod = (x_opnorm / (sk_y - eps1)).powf(kf) * (0.5 * (c - l1f * kf + l1f * kf * kf.ln())).exp();
    if l1 == 0 {
        return vacuous("root of order l1 = 0");
    }
    Ok((kappa_prod, kappa_prod.powf(1.0 / l1f)))
}

/// `(s_K(Y) − ε₁)² L₂ / (K² r²)`.
pub fn ntk_lower_bound(sk_y: f64, eps1: f64, k: usize, r: f64, l2: usize) -> Outcome {
    if eps1 >= sk_y {
        return vacuous("eps1 >= s_K(Y)");
    }
    let kf = k as f64;
    Ok((sk_y - eps1).powi(2) * l2 as f64 / (kf * kf * r * r))
}

/// `√(C L₂) K r / (√M (s_K(Y) − ε₁))`.
pub fn large_lr_kappa_bound(c: f64, l2: usize, m: usize, k: usize, r: f64, sk_y: f64, eps1: f64) -> Outcome {
    if eps1 >= sk_y {
        return vacuous("eps1 >= s_K(Y)");
    }
    if m == 0 || m > l2 {
        return vacuous("M must lie in 1..=L2");
    }
    Ok((c * l2 as f64).sqrt() * k as f64 * r / ((m as f64).sqrt() * (sk_y - eps1)))
}

/// Scans `l ∈ {l1+1, …, l1+M}` for a partial product `W_{L:l}` within the
/// large-learning-rate bound. Returns the entry and the best `(l, κ)`.
pub fn large_lr_check(
    cfg: &NetworkConfig,
    params: &ParamSet,
    c: f64,
    m: usize,
    r: f64,
    sk_y: f64,
    eps1: f64,
    premises: Vec<Premise>,
) -> Result<(BoundEntry, Option<(usize, f64)>)> {
    let bound = large_lr_kappa_bound(c, cfg.l2, m, cfg.num_classes(), r, sk_y, eps1);
    let mut best: Option<(usize, f64)> = None;
    if bound.is_ok() {
        for l in cfg.l1 + 1..=cfg.l1 + m {
            let kp = cond(&partial_product(cfg, params, cfg.depth(), l)?, DEFAULT_RANK_TOL)?;
            if best.map_or(true, |(_, b)| kp < b) {
                best = Some((l, kp));
            }
        }
    }
    let entry = BoundEntry::new("prop3_large_lr_kappa", bound, best.map(|b| b.1), Relation::Le, premises);
    Ok((entry, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::ActivationSpec;

    fn cfg(l1: usize, l2: usize) -> NetworkConfig {
        NetworkConfig {
            input_dim: 3,
            widths: vec![3; l1 + l2],
            l1,
            l2,
            activation: ActivationSpec::smoothed(0.5, 1.0),
        }
    }

    #[test]
    fn lipschitz_examples() {
        let c = cfg(1, 2);
        let base = lipschitz_const(&c, &[1.0; 3], 1.0, 4, 2.0).unwrap();
        assert!((base - 5.0 * 4.0 * 2.0 * 3f64.powf(2.5)).abs() < 1e-9);
        let doubled = lipschitz_const(&c, &[1.0, 2.0, 1.0], 1.0, 4, 2.0).unwrap();
        assert!((doubled / base - 8.0).abs() < 1e-12);
        assert!(lipschitz_const(&c, &[0.5, 1.0, 1.0], 1.0, 4, 2.0).is_err());
    }

    #[test]
    fn large_lr_examples() {
        let full = large_lr_kappa_bound(3.0, 4, 4, 2, 1.5, 2.0, 0.5).unwrap();
        assert!((full - 3f64.sqrt() * 2.0 * 1.5 / 1.5).abs() < 1e-14);
        let half = large_lr_kappa_bound(3.0, 4, 2, 2, 1.5, 2.0, 0.5).unwrap();
        assert!((half - 6f64.sqrt() * 2.0 * 1.5 / 1.5).abs() < 1e-14);
        assert!(large_lr_kappa_bound(3.0, 4, 5, 2, 1.5, 2.0, 0.5).is_err());
    }

    #[test]
    fn identity_head_is_balanced() {
        let c = cfg(0, 3);
        let p = ParamSet::identity(&c);
        assert_eq!(balanced_power_lhs(&c, &p).unwrap(), 0.0);
        let (e, best) = large_lr_check(&c, &p, 1.0, 3, 1.0, 2.0, 0.0, vec![]).unwrap();
        assert_eq!(best.unwrap().1, 1.0);
        assert_eq!(e.holds, super::super::Holds::Holds);
    }

    #[test]
    fn global_min_root_relation() {
        let (kp, kw) = global_min_kappa_bound(0.1, 2.0, 3, 4, 2.0, 3.0).unwrap();
        assert!((kw - kp.powf(1.0 / 3.0)).abs() < 1e-12 * kw);
        assert!(global_min_kappa_bound(0.1, 2.0, 0, 4, 2.0, 3.0).is_err());
    }
}
