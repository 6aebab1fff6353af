//! Full-batch gradient descent on `C_λ` with a single step-size drop.

use crate::densemat::{op_norm, svd, Matrix};
use crate::error::{Error, Result};
use crate::metrics::balancedness_gap;
use crate::network::{evaluate, ForwardTrace, NetworkConfig, ParamSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Runs stop once the unregularized loss passes this.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    /// I.i.d. `N(0, scale²)` entries, one scale per layer.
    Gaussian { scales: Vec<f64> },
    /// `scale · U Vᵀ` for the SVD of a Gaussian draw, so every singular value
    /// equals `scale`.
    Orthogonal { scales: Vec<f64> },
    /// I.i.d. `N(0, gain²/fan_in)` entries in every layer.
    FanIn { gain: f64 },
    Custom { weights: Vec<Matrix> },
}

impl InitSpec {
    pub fn validate(&self, cfg: &NetworkConfig) -> Result<()> {
        match self {
            InitSpec::Gaussian { scales } | InitSpec::Orthogonal { scales } => {
                if scales.len() != cfg.depth() {
                    return Err(Error::Config(format!(
                        "{} init scales for {} layers",
                        scales.len(),
                        cfg.depth()
                    )));
                }
                if let Some(s) = scales.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
                    return Err(Error::Config(format!("init scale {s} is not a non-negative real")));
                }
                Ok(())
            }
            InitSpec::FanIn { gain } => {
                if !(gain.is_finite() && *gain >= 0.0) {
                    return Err(Error::Config(format!("init gain {gain} is not a non-negative real")));
                }
                Ok(())
            }
            InitSpec::Custom { weights } => {
                if weights.len() != cfg.depth() {
                    return Err(Error::Config(format!(
                        "{} custom matrices for {} layers",
                        weights.len(),
                        cfg.depth()
                    )));
                }
                for (l, w) in weights.iter().enumerate() {
                    if w.shape() != cfg.layer_shape(l + 1) {
                        return Err(Error::Config(format!(
                            "custom W_{} has shape {:?}, expected {:?}",
                            l + 1,
                            w.shape(),
                            cfg.layer_shape(l + 1)
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

fn default_drop_fraction() -> f64 {
    0.8
}

fn default_drop_factor() -> f64 {
    10.0
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub lambda: f64,
    pub steps: usize,
    #[serde(default = "default_drop_fraction")]
    pub lr_drop_fraction: f64,
    #[serde(default = "default_drop_factor")]
    pub lr_drop_factor: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    pub seed: u64,
    pub init: InitSpec,
}

impl TrainConfig {
    pub fn validate(&self, cfg: &NetworkConfig) -> Result<()> {
        if !(self.eta.is_finite() && self.eta > 0.0) {
            return Err(Error::Config(format!("eta must be a positive real, got {}", self.eta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.lr_drop_fraction > 0.0 && self.lr_drop_fraction <= 1.0) {
            return Err(Error::Config("lr_drop_fraction must lie in (0, 1]".into()));
        }
        if !(self.lr_drop_factor.is_finite() && self.lr_drop_factor > 0.0) {
            return Err(Error::Config("lr_drop_factor must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        self.init.validate(cfg)
    }

    /// First step index that uses the dropped step size.
    pub fn drop_step(&self) -> usize {
        (self.lr_drop_fraction * self.steps as f64).floor() as usize
    }

    pub fn eta_at(&self, k: usize) -> f64 {
        if self.lr_drop_fraction < 1.0 && k >= self.drop_step() {
            self.eta / self.lr_drop_factor
        } else {
            self.eta
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    /// Step size used to leave this iterate.
    pub eta: f64,
    pub c_lambda: f64,
    pub c0: f64,
    pub param_norm: f64,
    pub dist_from_init: f64,
    pub eps1: f64,
    pub grad_norm: f64,
    /// `‖W_{l+1}ᵀW_{l+1} − W_l W_lᵀ‖_op` for `l = l1+1 .. L-1`.
    pub balancedness: Vec<f64>,
    /// `‖W_l‖_op` for every layer.
    pub op_norms: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrajectoryRecord>,
    pub diverged: bool,
    /// First step whose loss was non-finite or above the threshold.
    pub diverged_at: Option<usize>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&TrajectoryRecord> {
        self.records.last()
    }
}

/// What an observer sees at each recorded step.
pub struct RecordView<'a> {
    pub record: &'a TrajectoryRecord,
    pub params: &'a ParamSet,
    pub trace: &'a ForwardTrace,
}

pub fn init_params(cfg: &NetworkConfig, spec: &InitSpec, seed: u64) -> Result<ParamSet> {
    spec.validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaussian = |rows: usize, cols: usize, scale: f64| {
        Matrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
    };
    let weights = match spec {
        InitSpec::Gaussian { scales } => (1..=cfg.depth())
            .map(|l| {
                let (r, c) = cfg.layer_shape(l);
                let s = scales[l - 1];
                if s == 0.0 {
                    Matrix::zeros(r, c)
                } else {
                    gaussian(r, c, s)
                }
            })
            .collect(),
        InitSpec::Orthogonal { scales } => {
            let mut ws = Vec::with_capacity(cfg.depth());
            for l in 1..=cfg.depth() {
                let (r, c) = cfg.layer_shape(l);
                let g = gaussian(r, c, 1.0);
                let dec = svd(&g)?;
                ws.push(dec.u.matmul(&dec.vt).scale(scales[l - 1]));
            }
            ws
        }
        InitSpec::FanIn { gain } => (1..=cfg.depth())
            .map(|l| {
                let (r, c) = cfg.layer_shape(l);
                gaussian(r, c, gain / (c as f64).sqrt())
            })
            .collect(),
        InitSpec::Custom { weights } => weights.clone(),
    };
    Ok(ParamSet::new(weights))
}

/// `θ − η ∇C_λ(θ)`. Fails if any gradient entry is non-finite.
pub fn gd_step(
    cfg: &NetworkConfig,
    params: &ParamSet,
    x: &Matrix,
    y: &Matrix,
    eta: f64,
    lambda: f64,
) -> Result<ParamSet> {
    let ev = evaluate(cfg, params, x, y, lambda)?;
    check_grad(&ev.grad)?;
    let mut next = params.clone();
    next.axpy(-eta, &ev.grad);
    Ok(next)
}

fn check_grad(grad: &ParamSet) -> Result<()> {
    for (l, g) in grad.weights.iter().enumerate() {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of W_{}", l + 1)));
        }
    }
    Ok(())
}

/// Balancedness gaps over the linear interfaces `l1+1 .. L-1`.
pub fn linear_gaps(cfg: &NetworkConfig, params: &ParamSet) -> Result<Vec<f64>> {
    (cfg.l1 + 1..cfg.depth())
        .map(|l| balancedness_gap(params.layer(l + 1), params.layer(l)))
        .collect()
}

pub fn train(cfg: &NetworkConfig, tc: &TrainConfig, x: &Matrix, y: &Matrix) -> Result<(ParamSet, Trajectory)> {
    train_observed(cfg, tc, x, y, |_| {})
}

/// Like [`train`] but calls `observer` at every recorded step.
pub fn train_observed(
    cfg: &NetworkConfig,
    tc: &TrainConfig,
    x: &Matrix,
    y: &Matrix,
    mut observer: impl FnMut(RecordView<'_>),
) -> Result<(ParamSet, Trajectory)> {
    cfg.validate()?;
    tc.validate(cfg)?;
    let theta0 = init_params(cfg, &tc.init, tc.seed)?;
    let mut params = theta0.clone();
    let mut traj = Trajectory::default();

    for k in 0..=tc.steps {
        let ev = evaluate(cfg, &params, x, y, tc.lambda)?;
        if !ev.c_lambda.is_finite() || !ev.c0.is_finite() || ev.c0 > DIVERGENCE_THRESHOLD {
            traj.diverged = true;
            traj.diverged_at = Some(k);
            break;
        }
        if !ev.grad.is_finite() {
            traj.diverged = true;
            traj.diverged_at = Some(k);
            break;
        }
        let eta = tc.eta_at(k);
        if k % tc.record_every == 0 || k == tc.steps {
            let record = TrajectoryRecord {
                step: k,
                eta,
                c_lambda: ev.c_lambda,
                c0: ev.c0,
                param_norm: params.norm(),
                dist_from_init: params.sub(&theta0).norm(),
                eps1: (2.0 * ev.c0).sqrt(),
                grad_norm: ev.grad.norm(),
                balancedness: linear_gaps(cfg, &params)?,
                op_norms: params.weights.iter().map(op_norm).collect::<Result<_, _>>()?,
            };
            observer(RecordView {
                record: &record,
                params: &params,
                trace: &ev.trace,
            });
            traj.records.push(record);
        }
        if k == tc.steps {
            break;
        }
        params.axpy(-eta, &ev.grad);
    }
    Ok((params, traj))
}
