//! Random instances that satisfy the premises of the collapse theorem by
//! construction: near-collapsed head inputs feeding a balanced linear head.

use super::{thm1_check, BoundReport, Thm1Inputs, Thm1Observed};
use crate::data::one_hot_balanced;
use crate::densemat::{cond, op_norm, svd, Matrix, DEFAULT_RANK_TOL};
use crate::error::Result;
use crate::metrics::{extract_thm1_inputs, nc1, nc2, nc3_rescaled, ClassIndex};
use crate::network::{forward, ActivationSpec, NetworkConfig, ParamSet};
use crate::trainer::linear_gaps;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

/// `n x k` matrix with orthonormal columns, `k <= n`.
pub fn random_orthonormal(rng: &mut impl Rng, n: usize, k: usize) -> Result<Matrix> {
    let g = gaussian_matrix(rng, n, k, 1.0);
    let d = svd(&g)?;
    Ok(d.u.matmul(&d.vt))
}

/// Exactly balanced factors `W_j = Q_j S^{1/m} Q_{j−1}ᵀ`, `j = 1..m`, whose
/// product is `Q_m S Q_0ᵀ`. `dims = [n_0, …, n_m]`, each at least `s.len()`.
pub fn balanced_chain(rng: &mut impl Rng, dims: &[usize], s: &[f64]) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let m = dims.len() - 1;
    let k = s.len();
    let root = Matrix::diag(&s.iter().map(|v| v.powf(1.0 / m as f64)).collect::<Vec<_>>());
    let qs = dims
        .iter()
        .map(|&n| random_orthonormal(rng, n, k))
        .collect::<Result<Vec<_>>>()?;
    let ws = (1..=m)
        .map(|j| qs[j].matmul(&root).matmul_t(&qs[j - 1]))
        .collect();
    Ok((ws, qs))
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm1Instance {
    pub seed: u64,
    pub cfg: NetworkConfig,
    pub params: ParamSet,
    pub x: Matrix,
    pub y: Matrix,
    pub idx: ClassIndex,
    pub feature_noise: f64,
    pub weight_noise: f64,
}

/// Maximum redraws before giving up on the interpolation premise.
const MAX_REDRAWS: usize = 100;

/// Head-only network (`l1 = 0`) whose input `X = M⁺Y + null-space part +
/// noise` nearly interpolates through a perturbed balanced head.
pub fn thm1_instance(seed: u64) -> Result<Thm1Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(2..=5usize);
    let n_per = rng.gen_range(2..=6usize);
    let l2 = rng.gen_range(2..=4usize);
    let mut dims = vec![k + rng.gen_range(0..=4usize)];
    for _ in 1..l2 {
        dims.push(k + rng.gen_range(0..=4usize));
    }
    dims.push(k);
    let cfg = NetworkConfig {
        input_dim: dims[0],
        widths: dims[1..].to_vec(),
        l1: 0,
        l2,
        activation: ActivationSpec::smoothed(0.5, 1.0),
    };
    let idx = ClassIndex::balanced(k, n_per)?;
    let y = one_hot_balanced(k, n_per);

    for _ in 0..MAX_REDRAWS {
        let s: Vec<f64> = (0..k).map(|_| rng.gen_range(1.0..2.0)).collect();
        let (mut ws, qs) = balanced_chain(&mut rng, &dims, &s)?;
        let q0 = &qs[0];
        let m_pinv = q0
            .matmul(&Matrix::diag(&s.iter().map(|v| 1.0 / v).collect::<Vec<_>>()))
            .matmul_t(&qs[l2]);
        let collapsed = m_pinv.matmul(&y);
        let null_proj = Matrix::identity(dims[0]).sub(&q0.gram_rows());
        let null_scale = rng.gen_range(0.0..0.5);
        let null_part = null_proj.matmul(&gaussian_matrix(&mut rng, dims[0], idx.total(), null_scale));
        let feature_noise = log_uniform(&mut rng, 1e-4, 3e-2);
        let weight_noise = log_uniform(&mut rng, 1e-6, 1e-3);
        let x = collapsed
            .add(&null_part)
            .add(&gaussian_matrix(&mut rng, dims[0], idx.total(), feature_noise));
        for w in ws.iter_mut() {
            *w = w.add(&gaussian_matrix(&mut rng, w.rows(), w.cols(), weight_noise));
        }
        let inst = Thm1Instance {
            seed,
            cfg: cfg.clone(),
            params: ParamSet::new(ws),
            x,
            y: y.clone(),
            idx: idx.clone(),
            feature_noise,
            weight_noise,
        };
        if measure_thm1(&inst)?.0.eps1_premise() {
            return Ok(inst);
        }
    }
    Err(crate::Error::Config(format!("seed {seed}: no premise-satisfying draw")))
}

/// Measured premises and observed metrics of an instance.
pub fn measure_thm1(inst: &Thm1Instance) -> Result<(Thm1Inputs, Thm1Observed)> {
    let cfg = &inst.cfg;
    let trace = forward(cfg, &inst.params, &inst.x)?;
    let m = extract_thm1_inputs(cfg, &trace, &inst.params, &inst.y)?;
    let l = cfg.depth();
    let w_l = inst.params.layer(l);
    let z = &trace.z[l - 1];
    let sk_y = *svd(&inst.y)?.s.last().expect("non-empty");
    let head = crate::network::head_product(cfg, &inst.params);
    let inputs = Thm1Inputs {
        eps1: m.eps1,
        eps2: m.eps2,
        r: m.r,
        n_lminus1: cfg.widths[l - 2],
        k: cfg.num_classes(),
        n: inst.idx.total(),
        sk_y,
        x_opnorm: op_norm(&trace.z[cfg.l1])?,
        l1: cfg.l1,
        l2: cfg.l2,
        c3: Some(cond(&head, DEFAULT_RANK_TOL)?),
    };
    let residual = match super::residual_to_pinv(z, w_l, &inst.y)? {
        Ok(v) => Some(v),
        Err(_) => None,
    };
    let obs = Thm1Observed {
        nc1: nc1(z, &inst.idx).ok(),
        kappa_wl: cond(w_l, DEFAULT_RANK_TOL).ok(),
        nc2: nc2(z, &inst.idx, DEFAULT_RANK_TOL).ok(),
        nc3_rescaled: nc3_rescaled(z, w_l, &inst.idx).ok(),
        residual,
    };
    Ok((inputs, obs))
}

pub fn check_thm1_instance(inst: &Thm1Instance) -> Result<(Thm1Inputs, Thm1Observed, BoundReport)> {
    let (inp, obs) = measure_thm1(inst)?;
    let rep = thm1_check(&inp, &obs, true, true);
    Ok((inp, obs, rep))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainInstance {
    pub seed: u64,
    pub cfg: NetworkConfig,
    pub params: ParamSet,
    pub perturbation: f64,
}

/// Linear-only network whose layers are a balanced chain, each factor then
/// perturbed by i.i.d. noise of the given scale (0 keeps it balanced).
pub fn chain_instance(seed: u64, perturbation: f64) -> Result<ChainInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l2 = rng.gen_range(1..=5usize);
    let k = rng.gen_range(2..=5usize);
    let dims: Vec<usize> = (0..=l2)
        .map(|j| if j == l2 { k } else { k + rng.gen_range(0..=3usize) })
        .collect();
    let s: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..3.0)).collect();
    let (mut ws, _) = balanced_chain(&mut rng, &dims, &s)?;
    if perturbation > 0.0 {
        for w in ws.iter_mut() {
            *w = w.add(&gaussian_matrix(&mut rng, w.rows(), w.cols(), perturbation));
        }
    }
    Ok(ChainInstance {
        seed,
        cfg: NetworkConfig {
            input_dim: dims[0],
            widths: dims[1..].to_vec(),
            l1: 0,
            l2,
            activation: ActivationSpec::relu(),
        },
        params: ParamSet::new(ws),
        perturbation,
    })
}

/// Measured `(ε₂, r)` of a chain: largest gap and largest factor norm.
pub fn chain_premises(inst: &ChainInstance) -> Result<(f64, f64)> {
    let eps2 = linear_gaps(&inst.cfg, &inst.params)?.into_iter().fold(0.0, f64::max);
    let mut r: f64 = 0.0;
    for w in &inst.params.weights {
        r = r.max(op_norm(w)?);
    }
    Ok((eps2, r))
}

