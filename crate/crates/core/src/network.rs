//! Fully connected network with `l1` nonlinear layers followed by `l2`
//! linear layers and no biases:
//! `Z_l = σ(W_l Z_{l-1})` for `l <= l1`, `Z_l = W_l Z_{l-1}` afterwards.

use crate::densemat::Matrix;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    SmoothedLeakyRelu,
    LeakyRelu,
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
}

fn default_beta() -> f64 {
    1.0
}

/// Standard normal CDF.
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

/// Worst violation of `|σ(x)| <= |x|` over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCheck {
    pub holds: bool,
    /// `max(|σ(x)| - |x|)` over the grid; non-positive when it holds.
    pub max_excess: f64,
    pub at: f64,
}

impl ActivationSpec {
    pub fn smoothed(gamma: f64, beta: f64) -> Self {
        Self {
            kind: ActivationKind::SmoothedLeakyRelu,
            gamma,
            beta,
        }
    }

    pub fn leaky(gamma: f64) -> Self {
        Self {
            kind: ActivationKind::LeakyRelu,
            gamma,
            beta: 1.0,
        }
    }

    pub fn relu() -> Self {
        Self {
            kind: ActivationKind::Relu,
            gamma: 0.0,
            beta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ActivationKind::Relu => Ok(()),
            ActivationKind::LeakyRelu if self.gamma > 0.0 && self.gamma < 1.0 => Ok(()),
            ActivationKind::SmoothedLeakyRelu
                if self.gamma > 0.0 && self.gamma < 1.0 && self.beta >= 1.0 && self.beta.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::Config(format!(
                "activation {:?} needs gamma in (0,1){}; got gamma={}, beta={}",
                self.kind,
                if self.kind == ActivationKind::SmoothedLeakyRelu { " and beta >= 1" } else { "" },
                self.gamma,
                self.beta
            ))),
        }
    }

    /// Lower bound on σ′ (zero for relu).
    pub fn slope_floor(&self) -> f64 {
        match self.kind {
            ActivationKind::Relu => 0.0,
            _ => self.gamma,
        }
    }

    /// Standard deviation of the smoothing kernel.
    pub fn kernel_width(&self) -> f64 {
        (1.0 - self.gamma) / ((2.0 * PI).sqrt() * self.beta)
    }

    /// Constant subtracted so that σ(0) = 0.
    pub fn kernel_offset(&self) -> f64 {
        (1.0 - self.gamma).powi(2) / (2.0 * PI * self.beta)
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    self.gamma * x
                }
            }
            ActivationKind::SmoothedLeakyRelu => {
                let g = self.gamma;
                let s = self.kernel_width();
                let t = x / s;
                g * x + (1.0 - g) * (x * normal_cdf(t) + s * normal_pdf(t)) - self.kernel_offset()
            }
        }
    }

    /// σ′(x). The relu derivative at 0 is taken to be 0.
    pub fn deriv(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    self.gamma
                }
            }
            ActivationKind::SmoothedLeakyRelu => {
                self.gamma + (1.0 - self.gamma) * normal_cdf(x / self.kernel_width())
            }
        }
    }

    /// σ″(x); zero almost everywhere for the piecewise-linear kinds.
    pub fn second_deriv(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::SmoothedLeakyRelu => {
                let s = self.kernel_width();
                (1.0 - self.gamma) * normal_pdf(x / s) / s
            }
            _ => 0.0,
        }
    }

    /// Checks `|σ(x)| <= |x|` on a uniform grid over `[-50, 50]`.
    pub fn contraction_check(&self) -> ContractionCheck {
        const POINTS: usize = 200_001;
        let mut worst = f64::NEG_INFINITY;
        let mut at = 0.0;
        for i in 0..POINTS {
            let x = -50.0 + 100.0 * i as f64 / (POINTS - 1) as f64;
            let excess = self.eval(x).abs() - x.abs();
            if excess > worst {
                worst = excess;
                at = x;
            }
        }
        ContractionCheck {
            // Rounding in the closed form leaves ~1e-16 residue near zero.
            holds: worst <= 1e-14,
            max_excess: worst,
            at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// `n_1 .. n_L`; the last entry is the number of classes.
    pub widths: Vec<usize>,
    pub l1: usize,
    pub l2: usize,
    pub activation: ActivationSpec,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l2 == 0 {
            return Err(Error::Config("l2 must be at least 1".into()));
        }
        if self.widths.len() != self.l1 + self.l2 {
            return Err(Error::Config(format!(
                "{} widths given for l1 + l2 = {} layers",
                self.widths.len(),
                self.l1 + self.l2
            )));
        }
        if self.input_dim == 0 || self.widths.contains(&0) {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        self.activation.validate()
    }

    pub fn depth(&self) -> usize {
        self.l1 + self.l2
    }

    pub fn num_classes(&self) -> usize {
        *self.widths.last().expect("validated config has layers")
    }

    /// Shape `(n_l, n_{l-1})` of `W_l`, 1-based.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        let fan_in = if l == 1 {
            self.input_dim
        } else {
            self.widths[l - 2]
        };
        (self.widths[l - 1], fan_in)
    }

    pub fn is_nonlinear(&self, l: usize) -> bool {
        l <= self.l1
    }

    /// `n_1 >= N` and `n_2 >= n_3 >= ... >= n_L`.
    pub fn is_pyramidal(&self, n_samples: usize) -> bool {
        self.widths[0] >= n_samples && self.widths[1..].windows(2).all(|w| w[0] >= w[1])
    }
}

/// `θ = (W_1, …, W_L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub weights: Vec<Matrix>,
}

impl ParamSet {
    pub fn new(weights: Vec<Matrix>) -> Self {
        Self { weights }
    }

    pub fn zeros(cfg: &NetworkConfig) -> Self {
        Self {
            weights: (1..=cfg.depth())
                .map(|l| {
                    let (r, c) = cfg.layer_shape(l);
                    Matrix::zeros(r, c)
                })
                .collect(),
        }
    }

    /// Identity-shaped weights (`I` padded or truncated to each layer shape).
    pub fn identity(cfg: &NetworkConfig) -> Self {
        Self {
            weights: (1..=cfg.depth())
                .map(|l| {
                    let (r, c) = cfg.layer_shape(l);
                    Matrix::from_fn(r, c, |i, j| if i == j { 1.0 } else { 0.0 })
                })
                .collect(),
        }
    }

    /// `W_l`, 1-based.
    pub fn layer(&self, l: usize) -> &Matrix {
        &self.weights[l - 1]
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(Matrix::frobenius_sq).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.weights.iter().zip(&other.weights).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            weights: self.weights.iter().zip(&other.weights).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            weights: self.weights.iter().zip(&other.weights).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            weights: self.weights.iter().map(|w| w.scale(c)).collect(),
        }
    }

    pub fn axpy(&mut self, c: f64, other: &Self) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.axpy(c, b);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|w| w.as_slice().iter().copied()).collect()
    }

    /// Inverse of [`ParamSet::flatten`] using `self` for the shapes.
    pub fn unflatten_like(&self, flat: &[f64]) -> Self {
        let mut off = 0;
        let weights = self
            .weights
            .iter()
            .map(|w| {
                let n = w.rows() * w.cols();
                let m = Matrix::from_fn(w.rows(), w.cols(), |i, j| flat[off + i * w.cols() + j]);
                off += n;
                m
            })
            .collect();
        Self { weights }
    }

    fn check_against(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.depth() != cfg.depth() {
            return Err(Error::Shape(format!(
                "{} weight matrices for a depth-{} network",
                self.depth(),
                cfg.depth()
            )));
        }
        for l in 1..=cfg.depth() {
            let want = cfg.layer_shape(l);
            if self.layer(l).shape() != want {
                return Err(Error::Shape(format!(
                    "W_{l} has shape {:?}, expected {want:?}",
                    self.layer(l).shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `Z_0 = X, Z_1, …, Z_L`.
    pub z: Vec<Matrix>,
    /// `W_l Z_{l-1}` for the nonlinear layers only.
    pub preact: Vec<Matrix>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.z.last().expect("trace has at least the input")
    }
}

pub fn act_eval(spec: &ActivationSpec, x: f64) -> f64 {
    spec.eval(x)
}

pub fn act_deriv(spec: &ActivationSpec, x: f64) -> f64 {
    spec.deriv(x)
}

pub fn forward(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix) -> Result<ForwardTrace> {
    params.check_against(cfg)?;
    if x.rows() != cfg.input_dim {
        return Err(Error::LayerShape {
            layer: 1,
            expected: cfg.input_dim,
            got: x.rows(),
        });
    }
    let mut z = Vec::with_capacity(cfg.depth() + 1);
    let mut preact = Vec::with_capacity(cfg.l1);
    z.push(x.clone());
    for (i, w) in params.weights.iter().enumerate() {
        let p = w.matmul(z.last().expect("non-empty"));
        if cfg.is_nonlinear(i + 1) {
            z.push(p.map(|v| cfg.activation.eval(v)));
            preact.push(p);
        } else {
            z.push(p);
        }
    }
    Ok(ForwardTrace { z, preact })
}

fn check_targets(cfg: &NetworkConfig, x: &Matrix, y: &Matrix) -> Result<()> {
    if y.rows() != cfg.num_classes() || y.cols() != x.cols() {
        return Err(Error::Shape(format!(
            "labels are {:?}, expected ({}, {})",
            y.shape(),
            cfg.num_classes(),
            x.cols()
        )));
    }
    Ok(())
}

/// `(C_λ, C_0)` with `C_0 = ½‖Z_L − Y‖_F²` and `C_λ = C_0 + (λ/2)‖θ‖²`.
pub fn loss(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix, y: &Matrix, lambda: f64) -> Result<(f64, f64)> {
    check_targets(cfg, x, y)?;
    let trace = forward(cfg, params, x)?;
    Ok(loss_from_output(trace.output(), y, params, lambda))
}

pub fn loss_from_output(z_l: &Matrix, y: &Matrix, params: &ParamSet, lambda: f64) -> (f64, f64) {
    let c0 = 0.5 * z_l.sub(y).frobenius_sq();
    (c0 + 0.5 * lambda * params.norm_sq(), c0)
}

/// Reverse-mode pass: returns `∇_θ ⟨Z_L, G⟩` for a fixed cotangent `G`.
pub fn backprop(cfg: &NetworkConfig, params: &ParamSet, trace: &ForwardTrace, cotangent: Matrix) -> ParamSet {
    let depth = cfg.depth();
    let mut grads = vec![Matrix::zeros(0, 0); depth];
    let mut g = cotangent;
    for l in (1..=depth).rev() {
        let delta = if cfg.is_nonlinear(l) {
            let act = &cfg.activation;
            g.zip_map(&trace.preact[l - 1], |gv, p| gv * act.deriv(p))
        } else {
            g
        };
        grads[l - 1] = delta.matmul_t(&trace.z[l - 1]);
        g = if l > 1 {
            params.layer(l).t_matmul(&delta)
        } else {
            Matrix::zeros(0, 0)
        };
    }
    ParamSet { weights: grads }
}

/// Forward-mode pass: the directional derivative of `Z_L` along `dir`.
pub fn pushforward(cfg: &NetworkConfig, params: &ParamSet, trace: &ForwardTrace, dir: &ParamSet) -> Matrix {
    let n = trace.z[0].cols();
    let mut dz = Matrix::zeros(cfg.input_dim, n);
    for l in 1..=cfg.depth() {
        let mut dp = dir.layer(l).matmul(&trace.z[l - 1]);
        if l > 1 {
            dp = dp.add(&params.layer(l).matmul(&dz));
        }
        dz = if cfg.is_nonlinear(l) {
            let act = &cfg.activation;
            dp.zip_map(&trace.preact[l - 1], |d, p| d * act.deriv(p))
        } else {
            dp
        };
    }
    dz
}

/// Everything one GD step needs from a single forward/backward pass.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub c_lambda: f64,
    pub c0: f64,
    pub grad: ParamSet,
    pub trace: ForwardTrace,
}

pub fn evaluate(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix, y: &Matrix, lambda: f64) -> Result<Evaluation> {
    check_targets(cfg, x, y)?;
    let trace = forward(cfg, params, x)?;
    let residual = trace.output().sub(y);
    let (c_lambda, c0) = loss_from_output(trace.output(), y, params, lambda);
    let mut grad = backprop(cfg, params, &trace, residual);
    if lambda != 0.0 {
        grad.axpy(lambda, params);
    }
    Ok(Evaluation {
        c_lambda,
        c0,
        grad,
        trace,
    })
}

/// `∇_θ C_λ`.
pub fn gradient(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix, y: &Matrix, lambda: f64) -> Result<ParamSet> {
    Ok(evaluate(cfg, params, x, y, lambda)?.grad)
}

/// `W_m ⋯ W_l` over the linear head, `l1 + 1 <= l <= m <= L`.
pub fn partial_product(cfg: &NetworkConfig, params: &ParamSet, m: usize, l: usize) -> Result<Matrix> {
    if l <= cfg.l1 || m > cfg.depth() || l > m {
        return Err(Error::Config(format!(
            "partial product W_{{{m}:{l}}} outside the linear range {}..={}",
            cfg.l1 + 1,
            cfg.depth()
        )));
    }
    let mut acc = params.layer(m).clone();
    for k in (l..m).rev() {
        acc = acc.matmul(params.layer(k));
    }
    Ok(acc)
}

/// `W_{L:l1+1}`, the product of the whole linear head.
pub fn head_product(cfg: &NetworkConfig, params: &ParamSet) -> Matrix {
    partial_product(cfg, params, cfg.depth(), cfg.l1 + 1).expect("head range is valid")
}
