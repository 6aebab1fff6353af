//! Collapse metrics on feature matrices whose columns are grouped by class.

use crate::densemat::{cond, op_norm, Matrix, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::network::{ActivationSpec, ForwardTrace, NetworkConfig, ParamSet};
use serde::{Deserialize, Serialize};
use std::ops::Range;

/// Number of leading nonlinear layers treated as the backbone when indexing
/// layers in reports.
pub const BACKBONE_LAYERS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassIndex {
    counts: Vec<usize>,
}

impl ClassIndex {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c));
        }
        if counts.is_empty() {
            return Err(Error::Config("no classes".into()));
        }
        Ok(Self { counts })
    }

    pub fn balanced(k: usize, n_per_class: usize) -> Result<Self> {
        Self::new(vec![n_per_class; k])
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_balanced(&self) -> bool {
        self.counts.windows(2).all(|w| w[0] == w[1])
    }

    /// Column range of class `c`.
    pub fn range(&self, c: usize) -> Range<usize> {
        let start: usize = self.counts[..c].iter().sum();
        start..start + self.counts[c]
    }

    /// Class id of every column, in order.
    pub fn labels(&self) -> Vec<usize> {
        self.counts
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat(c).take(n))
            .collect()
    }

    fn check(&self, z: &Matrix) -> Result<()> {
        if z.cols() != self.total() {
            return Err(Error::Shape(format!(
                "feature matrix has {} columns, class index covers {}",
                z.cols(),
                self.total()
            )));
        }
        Ok(())
    }
}

/// Class means as columns of `Z̄`, and the global mean `μ_G`.
pub fn class_means(z: &Matrix, idx: &ClassIndex) -> Result<(Matrix, Vec<f64>)> {
    idx.check(z)?;
    let k = idx.num_classes();
    let mut zbar = Matrix::zeros(z.rows(), k);
    let mut mu_g = vec![0.0; z.rows()];
    for c in 0..k {
        let r = idx.range(c);
        let n = r.len() as f64;
        for i in 0..z.rows() {
            let row = &z.row(i)[r.clone()];
            let s: f64 = row.iter().sum();
            zbar[(i, c)] = s / n;
            mu_g[i] += s;
        }
    }
    let total = idx.total() as f64;
    mu_g.iter_mut().for_each(|v| *v /= total);
    Ok((zbar, mu_g))
}

/// `tr(Σ_W) / tr(Σ_B)` with `Σ_W` averaged over samples and `Σ_B` over classes.
pub fn nc1(z: &Matrix, idx: &ClassIndex) -> Result<f64> {
    let (zbar, mu_g) = class_means(z, idx)?;
    let k = idx.num_classes();
    let mut within = 0.0;
    for c in 0..k {
        for j in idx.range(c) {
            for i in 0..z.rows() {
                let d = z[(i, j)] - zbar[(i, c)];
                within += d * d;
            }
        }
    }
    within /= idx.total() as f64;
    let mut between = 0.0;
    for c in 0..k {
        for (i, g) in mu_g.iter().enumerate() {
            let d = zbar[(i, c)] - g;
            between += d * d;
        }
    }
    between /= k as f64;
    if between <= 0.0 {
        return Err(Error::DegenerateScatter);
    }
    Ok(within / between)
}

/// Condition number of the class-mean matrix.
pub fn nc2(z: &Matrix, idx: &ClassIndex, rank_tol: f64) -> Result<f64> {
    let (zbar, _) = class_means(z, idx)?;
    Ok(cond(&zbar, rank_tol)?)
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    let c = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Some(c.clamp(-1.0, 1.0))
}

fn check_head(z: &Matrix, w: &Matrix, idx: &ClassIndex) -> Result<()> {
    idx.check(z)?;
    if w.rows() != idx.num_classes() || w.cols() != z.rows() {
        return Err(Error::Shape(format!(
            "weight matrix {:?} does not pair with {} classes of {}-dimensional features",
            w.shape(),
            idx.num_classes(),
            z.rows()
        )));
    }
    Ok(())
}

/// Mean over samples of `cos(z_ci, W_c:)`.
pub fn nc3(z: &Matrix, w: &Matrix, idx: &ClassIndex) -> Result<f64> {
    check_head(z, w, idx)?;
    let mut acc = 0.0;
    for c in 0..idx.num_classes() {
        let wc = w.row(c);
        for (i, j) in idx.range(c).enumerate() {
            let zc = z.column(j);
            acc += cosine(&zc, wc).ok_or(Error::ZeroVector { class: c, sample: i })?;
        }
    }
    Ok(acc / idx.total() as f64)
}

/// Mean over classes of `cos(μ_c, W_c:)`.
pub fn nc3_class_means(z: &Matrix, w: &Matrix, idx: &ClassIndex) -> Result<f64> {
    check_head(z, w, idx)?;
    let (zbar, _) = class_means(z, idx)?;
    let k = idx.num_classes();
    let mut acc = 0.0;
    for c in 0..k {
        acc += cosine(&zbar.column(c), w.row(c)).ok_or(Error::ZeroVector { class: c, sample: 0 })?;
    }
    Ok(acc / k as f64)
}

/// `nc3` after the rescaling `W' = W/‖W‖`, `Z' = ‖W‖ Z`.
pub fn nc3_rescaled(z: &Matrix, w: &Matrix, idx: &ClassIndex) -> Result<f64> {
    let a = op_norm(w)?;
    if a == 0.0 {
        return Err(Error::ZeroVector { class: 0, sample: 0 });
    }
    nc3(&z.scale(a), &w.scale(1.0 / a), idx)
}

fn check_interface(w_next: &Matrix, w: &Matrix) -> Result<()> {
    if w_next.cols() != w.rows() {
        return Err(Error::Shape(format!(
            "W_next {:?} does not follow W {:?}",
            w_next.shape(),
            w.shape()
        )));
    }
    Ok(())
}

/// `‖W₊ᵀW₊ − W Wᵀ‖_op`.
pub fn balancedness_gap(w_next: &Matrix, w: &Matrix) -> Result<f64> {
    check_interface(w_next, w)?;
    Ok(op_norm(&w_next.gram_cols().sub(&w.gram_rows()))?)
}

/// Gap divided by the smaller of the two Gram operator norms.
pub fn balancedness_ratio(w_next: &Matrix, w: &Matrix) -> Result<f64> {
    check_interface(w_next, w)?;
    let a = w_next.gram_cols();
    let b = w.gram_rows();
    let denom = op_norm(&a)?.min(op_norm(&b)?);
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("balancedness ratio"));
    }
    Ok(op_norm(&a.sub(&b))? / denom)
}

/// `‖A − σ(A)‖_op / ‖A‖_op` on preactivations `A`.
pub fn negativity(preact: &Matrix, spec: &ActivationSpec) -> Result<f64> {
    let denom = op_norm(preact)?;
    if denom == 0.0 {
        return Err(Error::ZeroDenominator("negativity"));
    }
    let diff = preact.map(|v| v - spec.eval(v));
    Ok(op_norm(&diff)? / denom)
}

/// Measured `(ε₁, ε₂, r)` of the interpolation/balancedness/boundedness
/// premises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thm1Measured {
    pub eps1: f64,
    pub eps2: f64,
    pub r: f64,
}

pub fn extract_thm1_inputs(
    cfg: &NetworkConfig,
    trace: &ForwardTrace,
    params: &ParamSet,
    y: &Matrix,
) -> Result<Thm1Measured> {
    let l = cfg.depth();
    let eps1 = trace.output().sub(y).frobenius();
    let mut eps2: f64 = 0.0;
    for j in cfg.l1 + 1..l {
        eps2 = eps2.max(balancedness_gap(params.layer(j + 1), params.layer(j))?);
    }
    let mut r: f64 = op_norm(&trace.z[l - 1])?;
    if l >= 2 {
        r = r.max(op_norm(&trace.z[l - 2])?);
    }
    for j in cfg.l1 + 1..=l {
        r = r.max(op_norm(params.layer(j))?);
    }
    Ok(Thm1Measured { eps1, eps2, r })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMetrics {
    /// Absolute layer index `l` of `Z_l`.
    pub layer: usize,
    /// Position counted from the backbone output.
    pub index: usize,
    pub nc1: Option<f64>,
    pub nc2: Option<f64>,
    /// Only for `Z_{L-1}` against `W_L`.
    pub nc3: Option<f64>,
    pub nc3_means: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceMetrics {
    /// Interface between `W_l` and `W_{l+1}`.
    pub layer: usize,
    pub gap: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativityMetrics {
    pub layer: usize,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub backbone_layers: usize,
    pub layers: Vec<LayerMetrics>,
    pub interfaces: Vec<InterfaceMetrics>,
    pub negativity: Vec<NegativityMetrics>,
    pub eps1: f64,
    pub eps2: f64,
    pub r: f64,
}

impl MetricsReport {
    pub fn layer(&self, l: usize) -> Option<&LayerMetrics> {
        self.layers.iter().find(|m| m.layer == l)
    }
}

/// First layer reported: the backbone output.
pub fn backbone_output(cfg: &NetworkConfig) -> usize {
    BACKBONE_LAYERS.min(cfg.l1)
}

/// All metrics for one network state. Undefined values (degenerate scatter,
/// zero vectors) become `None`.
pub fn report(
    cfg: &NetworkConfig,
    params: &ParamSet,
    trace: &ForwardTrace,
    idx: &ClassIndex,
    y: &Matrix,
) -> Result<MetricsReport> {
    let l = cfg.depth();
    let b = backbone_output(cfg);
    let mut layers = Vec::with_capacity(l + 1 - b);
    for j in b..=l {
        let z = &trace.z[j];
        let (nc3_v, nc3_m) = if j + 1 == l {
            (
                nc3(z, params.layer(l), idx).ok(),
                nc3_class_means(z, params.layer(l), idx).ok(),
            )
        } else {
            (None, None)
        };
        layers.push(LayerMetrics {
            layer: j,
            index: j - b,
            nc1: nc1(z, idx).ok(),
            nc2: nc2(z, idx, DEFAULT_RANK_TOL).ok(),
            nc3: nc3_v,
            nc3_means: nc3_m,
        });
    }
    let mut interfaces = Vec::new();
    for j in cfg.l1 + 1..l {
        interfaces.push(InterfaceMetrics {
            layer: j,
            gap: balancedness_gap(params.layer(j + 1), params.layer(j))?,
            ratio: balancedness_ratio(params.layer(j + 1), params.layer(j)).ok(),
        });
    }
    let negativity = (1..=cfg.l1)
        .map(|j| NegativityMetrics {
            layer: j,
            value: negativity(&trace.preact[j - 1], &cfg.activation).ok(),
        })
        .collect();
    let m = extract_thm1_inputs(cfg, trace, params, y)?;
    Ok(MetricsReport {
        backbone_layers: b,
        layers,
        interfaces,
        negativity,
        eps1: m.eps1,
        eps2: m.eps2,
        r: m.r,
    })
}
