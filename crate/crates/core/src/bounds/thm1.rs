//! Collapse bounds implied by interpolation, balancedness and bounded
//! representations.

use super::{vacuous, BoundEntry, BoundReport, Outcome, Premise, Relation};
use crate::densemat::{pinv, svd, Matrix, DEFAULT_RANK_TOL};
use crate::error::Result;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Inputs {
    pub eps1: f64,
    pub eps2: f64,
    pub r: f64,
    pub n_lminus1: usize,
    pub k: usize,
    pub n: usize,
    pub sk_y: f64,
    pub x_opnorm: f64,
    pub l1: usize,
    pub l2: usize,
    /// Upper bound on `κ(W_{L:l1+1})`, needed only for the conditioning bound.
    pub c3: Option<f64>,
}

impl Thm1Inputs {
    /// `ε₁ ≤ min(s_K(Y), √((K−1)N/(4K)))`.
    pub fn eps1_premise(&self) -> bool {
        let (k, n) = (self.k as f64, self.n as f64);
        self.eps1 <= self.sk_y.min(((k - 1.0) * n / (4.0 * k)).sqrt())
    }
}

/// `Ψ(ε₁, ε₂, r) = r (ε₁/(s_K(Y) − ε₁) + √(n_{L−1} ε₂))`.
pub fn psi(inp: &Thm1Inputs) -> Outcome {
    psi_raw(inp.eps1, inp.eps2, inp.r, inp.n_lminus1, inp.sk_y)
}

pub(crate) fn psi_raw(eps1: f64, eps2: f64, r: f64, n_lminus1: usize, sk_y: f64) -> Outcome {
    if eps1 >= sk_y {
        return vacuous("eps1 >= s_K(Y)");
    }
    Ok(r * (eps1 / (sk_y - eps1) + (n_lminus1 as f64 * eps2).sqrt()))
}

/// Upper bound on `NC1(Z_{L−1})`.
pub fn thm1_nc1_rhs(inp: &Thm1Inputs) -> Outcome {
    if !inp.eps1_premise() {
        return vacuous("eps1 exceeds min(s_K(Y), sqrt((K-1)N/(4K)))");
    }
    let p = psi(inp)?;
    let (k, n) = (inp.k as f64, inp.n as f64);
    let d = ((k - 1.0) / k).sqrt() - 2.0 * inp.eps1 / n.sqrt();
    if d <= 0.0 {
        return vacuous("non-positive denominator");
    }
    Ok(inp.r * inp.r / n * p * p / (d * d))
}

/// The `ε` entering the conditioning bound.
pub fn thm1_kappa_eps(inp: &Thm1Inputs) -> Outcome {
    if inp.eps1 >= inp.sk_y {
        return vacuous("eps1 >= s_K(Y)");
    }
    let l2 = inp.l2 as f64;
    let delta = 0.5 * l2 * l2 * inp.r.powi(2 * (inp.l2 as i32 - 1)) * inp.eps2;
    let base = (inp.sk_y - inp.eps1).powi(2) / (inp.x_opnorm.powi(2) * inp.r.powi(2 * inp.l1 as i32));
    let denom = base - delta;
    if !(denom > 0.0) {
        return vacuous("non-positive denominator in eps");
    }
    Ok(delta / denom)
}

/// Upper bound on `κ(W_L)`. With `tight` the `(1+ε)` factor uses the
/// exponent `1/(2 L₂)` instead of `1/L₂`.
pub fn thm1_kappa_rhs(inp: &Thm1Inputs, tight: bool) -> Outcome {
    let Some(c3) = inp.c3 else {
        return vacuous("no bound c3 on the head conditioning");
    };
    let eps = thm1_kappa_eps(inp)?;
    let l2 = inp.l2 as f64;
    let p = if tight { 1.0 / (2.0 * l2) } else { 1.0 / l2 };
    Ok(c3.powf(1.0 / l2) * (1.0 + eps).powf(p) + c3.powf(1.0 / l2 - 1.0) * eps)
}

/// Upper bound on `NC2(Z_{L−1})` given `κ(W_L)`.
pub fn thm1_nc2_rhs(inp: &Thm1Inputs, kappa_wl: f64) -> Outcome {
    let t = inp.r * psi(inp)? / inp.sk_y;
    if 1.0 - t <= 0.0 {
        return vacuous("r*Psi/s_K(Y) >= 1");
    }
    Ok((kappa_wl + t) / (1.0 - t))
}

/// Lower bound on `NC3(Z_{L−1}, W_L)` given `κ(W_L)`. May be below −1.
pub fn thm1_nc3_rhs(inp: &Thm1Inputs, kappa_wl: f64) -> Outcome {
    let p = psi(inp)?;
    let n = inp.n as f64;
    let k = inp.k as f64;
    let num = (n.sqrt() - inp.eps1).powi(2) + n / (kappa_wl * kappa_wl)
        - (inp.r * p + k.sqrt() * (kappa_wl * kappa_wl - 1.0)).powi(2);
    Ok(num / (2.0 * n * kappa_wl * (1.0 + inp.eps1)))
}

/// `‖Z_{L−1} − W_L⁺ Y‖_F`.
pub fn residual_to_pinv(z_lminus1: &Matrix, w_l: &Matrix, y: &Matrix) -> Result<Outcome> {
    let dec = svd(w_l)?;
    if dec.rank(DEFAULT_RANK_TOL) < w_l.rows() {
        return Ok(vacuous("W_L is not full row rank"));
    }
    let wp = pinv(w_l, DEFAULT_RANK_TOL)?;
    Ok(Ok(z_lminus1.sub(&wp.matmul(y)).frobenius()))
}

/// Measured quantities the bounds are compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Observed {
    pub nc1: Option<f64>,
    pub kappa_wl: Option<f64>,
    pub nc2: Option<f64>,
    pub nc3_rescaled: Option<f64>,
    pub residual: Option<f64>,
}

/// Evaluates every bound of the theorem against measured values.
pub fn thm1_check(inp: &Thm1Inputs, obs: &Thm1Observed, eps2_premise: bool, r_premise: bool) -> BoundReport {
    let base = vec![
        Premise::new("eps1_range", inp.eps1_premise()),
        Premise::new("balancedness_eps2", eps2_premise),
        Premise::new("bounded_by_r", r_premise),
    ];
    let mut rep = BoundReport::default();
    rep.push(BoundEntry::new("thm1_psi_residual", psi(inp), obs.residual, Relation::Le, base.clone()));
    rep.push(BoundEntry::new("thm1_nc1", thm1_nc1_rhs(inp), obs.nc1, Relation::Le, base.clone()));

    let mut kp = base.clone();
    kp.push(Premise::new("c3_given", inp.c3.is_some()));
    rep.push(BoundEntry::new(
        "thm1_kappa_wl",
        thm1_kappa_rhs(inp, false),
        obs.kappa_wl,
        Relation::Le,
        kp,
    ));

    let (nc2_b, nc3_b) = match obs.kappa_wl {
        Some(kw) => (thm1_nc2_rhs(inp, kw), thm1_nc3_rhs(inp, kw)),
        None => (vacuous("kappa(W_L) unavailable"), vacuous("kappa(W_L) unavailable")),
    };
    rep.push(BoundEntry::new("thm1_nc2", nc2_b, obs.nc2, Relation::Le, base.clone()));
    let nc3 = BoundEntry::new("thm1_nc3", nc3_b, obs.nc3_rescaled, Relation::Ge, base);
    let nc3 = match nc3.bound {
        Some(b) if b < -1.0 => nc3.mark_vacuous("bound below -1 carries no information"),
        _ => nc3,
    };
    rep.push(nc3);
    rep
}
