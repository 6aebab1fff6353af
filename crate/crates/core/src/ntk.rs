//! Matrix-free empirical NTK `Θ = ∇_θZ_L (∇_θZ_L)ᵀ` acting on `K x N`
//! output-space matrices.

use crate::bounds::instances::gaussian_matrix;
use crate::densemat::Matrix;
use crate::error::{Error, Result};
use crate::network::{backprop, forward, partial_product, pushforward, ForwardTrace, NetworkConfig, ParamSet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0x6e74_6b00;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NtkReport {
    pub theta_opnorm: f64,
    pub iterations: usize,
    /// Relative change of the Rayleigh quotient at the last iteration.
    pub residual: f64,
    /// `‖Θ A − ρ A‖_F / ρ` for the final unit-norm iterate `A`.
    pub eigen_residual: f64,
    /// Linear-layer terms evaluated at the top eigenvector.
    pub linear_terms: Vec<f64>,
}

fn check_probe(cfg: &NetworkConfig, x: &Matrix, a: &Matrix) -> Result<()> {
    if a.shape() != (cfg.num_classes(), x.cols()) {
        return Err(Error::Shape(format!(
            "probe is {:?}, expected ({}, {})",
            a.shape(),
            cfg.num_classes(),
            x.cols()
        )));
    }
    Ok(())
}

/// `∇_θ Tr[Z_L Aᵀ]`.
pub fn jacobian_pullback(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix, a: &Matrix) -> Result<ParamSet> {
    check_probe(cfg, x, a)?;
    let trace = forward(cfg, params, x)?;
    Ok(backprop(cfg, params, &trace, a.clone()))
}

/// Directional derivative of `Z_L` along `dir`.
pub fn jacobian_pushforward(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix, dir: &ParamSet) -> Result<Matrix> {
    let trace = forward(cfg, params, x)?;
    Ok(pushforward(cfg, params, &trace, dir))
}

fn apply_theta(cfg: &NetworkConfig, params: &ParamSet, trace: &ForwardTrace, a: &Matrix) -> Matrix {
    let g = backprop(cfg, params, trace, a.clone());
    pushforward(cfg, params, trace, &g)
}

/// Largest eigenvalue of `Θ` by power iteration from a seeded random start.
pub fn ntk_opnorm(
    cfg: &NetworkConfig,
    params: &ParamSet,
    x: &Matrix,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<NtkReport> {
    let trace = forward(cfg, params, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = gaussian_matrix(&mut rng, cfg.num_classes(), x.cols(), 1.0);
    a = a.scale(1.0 / a.frobenius());
    let mut prev = f64::NAN;
    for it in 1..=max_iter {
        let b = apply_theta(cfg, params, &trace, &a);
        let rho = a.dot(&b);
        let nb = b.frobenius();
        if nb == 0.0 {
            return Ok(NtkReport {
                theta_opnorm: 0.0,
                iterations: it,
                residual: 0.0,
                eigen_residual: 0.0,
                linear_terms: linear_terms_at(cfg, params, &trace, &a)?,
            });
        }
        let change = (rho - prev).abs() / rho.abs();
        let next = b.scale(1.0 / nb);
        if change < tol {
            let eigen_residual = b.sub(&a.scale(rho)).frobenius() / rho;
            return Ok(NtkReport {
                theta_opnorm: rho,
                iterations: it,
                residual: change,
                eigen_residual,
                linear_terms: linear_terms_at(cfg, params, &trace, &next)?,
            });
        }
        prev = rho;
        a = next;
        if it == max_iter {
            return Err(Error::PowerIteration {
                iters: it,
                estimate: rho,
                residual: change,
            });
        }
    }
    Err(Error::PowerIteration {
        iters: 0,
        estimate: f64::NAN,
        residual: f64::NAN,
    })
}

/// Explicit `NK x NK` kernel, entries indexed by the row-major position in a
/// `K x N` output. Only sensible for tiny networks.
pub fn dense_ntk(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix) -> Result<Matrix> {
    let trace = forward(cfg, params, x)?;
    let (k, n) = (cfg.num_classes(), x.cols());
    let rows: Vec<Vec<f64>> = crate::par::map_range(k * n, |i| {
        let mut e = Matrix::zeros(k, n);
        e.as_mut_slice()[i] = 1.0;
        backprop(cfg, params, &trace, e).flatten()
    });
    let jac = Matrix::from_rows(&rows)?;
    Ok(jac.gram_rows())
}

fn linear_terms_at(cfg: &NetworkConfig, params: &ParamSet, trace: &ForwardTrace, a: &Matrix) -> Result<Vec<f64>> {
    let l = cfg.depth();
    let z = &trace.z[cfg.l1];
    let at = a.transpose();
    let mut out = Vec::with_capacity(cfg.l2);
    for j in cfg.l1 + 1..=l {
        let left = if j > cfg.l1 + 1 {
            partial_product(cfg, params, j - 1, cfg.l1 + 1)?.matmul(z)
        } else {
            z.clone()
        };
        let mut m = left.matmul(&at);
        if j < l {
            m = m.matmul(&partial_product(cfg, params, l, j + 1)?);
        }
        out.push(m.frobenius_sq());
    }
    Ok(out)
}

/// `‖W_{l−1:l1+1} Z_{l1} Aᵀ W_{L:l+1}‖_F²` for each linear layer `l`.
pub fn linear_decomposition(cfg: &NetworkConfig, params: &ParamSet, x: &Matrix, a: &Matrix) -> Result<Vec<f64>> {
    check_probe(cfg, x, a)?;
    let trace = forward(cfg, params, x)?;
    linear_terms_at(cfg, params, &trace, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densemat::op_norm;
    use crate::network::ActivationSpec;

    #[test]
    fn single_linear_layer_kernel_norm() {
        let cfg = NetworkConfig {
            input_dim: 3,
            widths: vec![2],
            l1: 0,
            l2: 1,
            activation: ActivationSpec::relu(),
        };
        let x = Matrix::from_rows(&[vec![1.0, 0.5, -0.3, 2.0], vec![0.0, 1.5, 0.2, -1.0], vec![0.7, 0.1, 0.9, 0.4]])
            .unwrap();
        let p = ParamSet::new(vec![Matrix::from_rows(&[vec![0.3, -0.2, 0.5], vec![1.0, 0.1, -0.4]]).unwrap()]);
        let rep = ntk_opnorm(&cfg, &p, &x, DEFAULT_TOL, DEFAULT_MAX_ITER, DEFAULT_SEED).unwrap();
        let xn = op_norm(&x).unwrap();
        assert!((rep.theta_opnorm - xn * xn).abs() < 1e-7 * xn * xn);
        assert_eq!(rep.linear_terms.len(), 1);
    }

    #[test]
    fn probe_shape_checked() {
        let cfg = NetworkConfig {
            input_dim: 2,
            widths: vec![2],
            l1: 0,
            l2: 1,
            activation: ActivationSpec::relu(),
        };
        let p = ParamSet::identity(&cfg);
        assert!(jacobian_pullback(&cfg, &p, &Matrix::zeros(2, 3), &Matrix::zeros(2, 2)).is_err());
    }
}
