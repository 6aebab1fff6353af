//! Property suites behind `nclab verify`. Each property draws seeded random
//! cases and stops at the first failing one, which is kept for replay.

use crate::bounds::instances::{chain_instance, chain_premises, check_thm1_instance, gaussian_matrix, thm1_instance};
use crate::bounds::{balanced_power_lhs, balanced_power_rhs, Holds};
use crate::data::{mean_spread, one_hot_balanced, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels, IdxImages};
use crate::densemat::{pinv, singular_values, svd, Matrix, DEFAULT_RANK_TOL};
use crate::error::Result;
use crate::metrics::{nc1, nc3, nc3_rescaled, ClassIndex};
use crate::network::{backprop, evaluate, forward, loss, pushforward, ActivationSpec, NetworkConfig, ParamSet};
use crate::ntk::{dense_ntk, ntk_opnorm, DEFAULT_MAX_ITER, DEFAULT_SEED};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Instant;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-6;
pub const SVD_REL_TOL: f64 = 1e-10;
pub const SVD_2X2_TOL: f64 = 1e-12;
pub const PINV_TOL: f64 = 1e-8;
pub const NTK_REL_TOL: f64 = 1e-6;
pub const BALANCED_CHAIN_TOL: f64 = 1e-10;
pub const LABEL_IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown level {other:?}, expected fast or full")),
        }
    }
}

/// Deliberate defects for checking that the suites catch them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Faults {
    pub flip_gradient_sign: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub cases: usize,
    pub passed: bool,
    pub seconds: f64,
    pub detail: String,
    pub counterexample: Option<Value>,
}

type CaseOutcome = std::result::Result<(), (String, Value)>;

struct Property {
    name: &'static str,
    fast: usize,
    full: usize,
    case: fn(u64, &Faults) -> Result<CaseOutcome>,
}

const PROPERTIES: &[Property] = &[
    Property { name: "gradient_finite_difference", fast: 20, full: 100, case: gradient_case },
    Property { name: "pullback_pushforward_adjoint", fast: 20, full: 100, case: adjoint_case },
    Property { name: "activation_derivatives", fast: 20, full: 100, case: activation_case },
    Property { name: "svd_reconstruction", fast: 40, full: 200, case: svd_case },
    Property { name: "svd_2x2_analytic", fast: 100, full: 1000, case: svd2_case },
    Property { name: "pinv_moore_penrose", fast: 40, full: 200, case: pinv_case },
    Property { name: "metric_invariances", fast: 20, full: 100, case: metric_case },
    Property { name: "balanced_label_identity", fast: 3, full: 3, case: label_case },
    Property { name: "balanced_chain_power", fast: 30, full: 100, case: chain_case },
    Property { name: "thm1_random_instances", fast: 25, full: 200, case: thm1_case },
    Property { name: "ntk_power_vs_dense", fast: 5, full: 20, case: ntk_case },
    Property { name: "idx_roundtrip", fast: 10, full: 50, case: idx_case },
];

pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.name).collect()
}

pub fn run_suite(level: Level, faults: &Faults) -> Vec<PropertyResult> {
    PROPERTIES.iter().map(|p| run_property(p, level, faults)).collect()
}

fn run_property(p: &Property, level: Level, faults: &Faults) -> PropertyResult {
    let cases = match level {
        Level::Fast => p.fast,
        Level::Full => p.full,
    };
    let start = Instant::now();
    let mut out = PropertyResult {
        name: p.name.to_string(),
        cases: 0,
        passed: true,
        seconds: 0.0,
        detail: String::new(),
        counterexample: None,
    };
    for seed in 0..cases as u64 {
        out.cases += 1;
        match (p.case)(seed, faults) {
            Ok(Ok(())) => {}
            Ok(Err((detail, cx))) => {
                out.passed = false;
                out.detail = detail;
                out.counterexample = Some(json!({ "property": p.name, "seed": seed, "case": cx }));
                break;
            }
            Err(e) => {
                out.passed = false;
                out.detail = format!("error: {e}");
                out.counterexample = Some(json!({ "property": p.name, "seed": seed }));
                break;
            }
        }
    }
    out.seconds = start.elapsed().as_secs_f64();
    if out.passed {
        out.detail = format!("{} cases", out.cases);
    }
    out
}

pub fn format_table(results: &[PropertyResult]) -> String {
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(8).max(8);
    let mut s = format!("{:<width$}  {:>6}  {:>5}  {:>8}  detail\n", "property", "cases", "ok", "seconds");
    for r in results {
        s.push_str(&format!(
            "{:<width$}  {:>6}  {:>5}  {:>8.3}  {}\n",
            r.name,
            r.cases,
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.detail
        ));
    }
    s
}

fn rng_for(name: &str, seed: u64) -> ChaCha8Rng {
    let tag = name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    ChaCha8Rng::seed_from_u64(tag ^ seed)
}

/// A random network with smoothed activation, `L₁ ≤ 3`, `L₂ ≤ 3`, widths and
/// sample count bounded as in the gradient acceptance criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomNet {
    pub cfg: NetworkConfig,
    pub params: ParamSet,
    pub x: Matrix,
    pub y: Matrix,
    pub lambda: f64,
}

pub fn random_net(rng: &mut impl Rng) -> RandomNet {
    let l1 = rng.gen_range(0..=3usize);
    let l2 = rng.gen_range(1..=3usize);
    let input_dim = rng.gen_range(1..=8usize);
    let widths: Vec<usize> = (0..l1 + l2).map(|_| rng.gen_range(1..=8usize)).collect();
    let n = rng.gen_range(1..=10usize);
    let cfg = NetworkConfig {
        input_dim,
        widths,
        l1,
        l2,
        activation: ActivationSpec::smoothed(rng.gen_range(0.05..0.95), rng.gen_range(0.5..2.0)),
    };
    let weights = (1..=cfg.depth())
        .map(|l| {
            let (r, c) = cfg.layer_shape(l);
            gaussian_matrix(rng, r, c, 1.0 / (c as f64).sqrt())
        })
        .collect();
    let k = cfg.num_classes();
    RandomNet {
        x: gaussian_matrix(rng, input_dim, n, 1.0),
        y: gaussian_matrix(rng, k, n, 1.0),
        lambda: if rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(0.0..0.1) },
        params: ParamSet::new(weights),
        cfg,
    }
}

/// Central differences of `C_λ` in every coordinate.
pub fn finite_difference_gradient(net: &RandomNet, h: f64) -> Result<Vec<f64>> {
    let flat = net.params.flatten();
    let mut out = Vec::with_capacity(flat.len());
    let mut probe = flat.clone();
    for i in 0..flat.len() {
        probe[i] = flat[i] + h;
        let plus = loss(&net.cfg, &net.params.unflatten_like(&probe), &net.x, &net.y, net.lambda)?.0;
        probe[i] = flat[i] - h;
        let minus = loss(&net.cfg, &net.params.unflatten_like(&probe), &net.x, &net.y, net.lambda)?.0;
        probe[i] = flat[i];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale = crate::densemat::norm2(a).max(crate::densemat::norm2(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn gradient_case(seed: u64, faults: &Faults) -> Result<CaseOutcome> {
    let net = random_net(&mut rng_for("gradient", seed));
    let mut g = evaluate(&net.cfg, &net.params, &net.x, &net.y, net.lambda)?.grad;
    if faults.flip_gradient_sign {
        g = g.scale(-1.0);
    }
    let fd = finite_difference_gradient(&net, FD_STEP)?;
    let err = relative_error(&g.flatten(), &fd);
    if err <= FD_REL_TOL {
        Ok(Ok(()))
    } else {
        Ok(Err((format!("relative error {err:e} > {FD_REL_TOL:e}"), serde_json::to_value(&net)?)))
    }
}

fn adjoint_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("adjoint", seed);
    let net = random_net(&mut rng);
    let trace = forward(&net.cfg, &net.params, &net.x)?;
    let a = gaussian_matrix(&mut rng, net.y.rows(), net.y.cols(), 1.0);
    let dir = ParamSet::new(
        net.params
            .weights
            .iter()
            .map(|w| gaussian_matrix(&mut rng, w.rows(), w.cols(), 1.0))
            .collect(),
    );
    let lhs = backprop(&net.cfg, &net.params, &trace, a.clone()).dot(&dir);
    let rhs = a.dot(&pushforward(&net.cfg, &net.params, &trace, &dir));
    let err = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300);
    if err <= 1e-10 {
        Ok(Ok(()))
    } else {
        Ok(Err((format!("<J^T A, D> = {lhs:e}, <A, J D> = {rhs:e}"), serde_json::to_value(&net)?)))
    }
}

fn activation_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("activation", seed);
    let spec = ActivationSpec::smoothed(rng.gen_range(0.0..0.99), rng.gen_range(0.1..5.0));
    let x: f64 = rng.gen_range(-6.0..6.0);
    let h = 1e-5;
    let d_fd = (spec.eval(x + h) - spec.eval(x - h)) / (2.0 * h);
    let dd_fd = (spec.deriv(x + h) - spec.deriv(x - h)) / (2.0 * h);
    let ok = (spec.deriv(x) - d_fd).abs() <= 1e-8
        && (spec.second_deriv(x) - dd_fd).abs() <= 1e-6 * spec.beta.max(1.0)
        && spec.deriv(x) >= spec.gamma - 1e-15
        && spec.deriv(x) <= 1.0 + 1e-15
        && spec.second_deriv(x) <= spec.beta * (1.0 + 1e-12);
    if ok {
        Ok(Ok(()))
    } else {
        Ok(Err(("derivative mismatch or bound violated".into(), json!({ "spec": spec, "x": x }))))
    }
}

fn random_matrix(rng: &mut impl Rng, max_dim: usize) -> Matrix {
    let m = rng.gen_range(1..=max_dim);
    let n = rng.gen_range(1..=max_dim);
    let a = gaussian_matrix(rng, m, n, 1.0);
    // Occasionally force a rank deficiency.
    if rng.gen_bool(0.25) && m.min(n) > 1 {
        let k = rng.gen_range(1..m.min(n));
        let left = gaussian_matrix(rng, m, k, 1.0);
        left.matmul(&gaussian_matrix(rng, k, n, 1.0))
    } else {
        a
    }
}

fn svd_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("svd", seed);
    let max_dim = if seed % 10 == 0 { 128 } else { 32 };
    let a = random_matrix(&mut rng, max_dim);
    let d = svd(&a)?;
    let err = a.sub(&d.reconstruct()).frobenius();
    let tol = SVD_REL_TOL * a.frobenius().max(1.0);
    let orth_u = d.u.t_matmul(&d.u).sub(&Matrix::identity(d.u.cols())).max_abs();
    let orth_v = d.vt.matmul_t(&d.vt).sub(&Matrix::identity(d.vt.rows())).max_abs();
    let sorted = d.s.windows(2).all(|w| w[0] >= w[1]) && d.s.iter().all(|&s| s >= 0.0);
    if err <= tol && orth_u <= 1e-10 && orth_v <= 1e-10 && sorted {
        Ok(Ok(()))
    } else {
        Ok(Err((
            format!("reconstruction {err:e} (tol {tol:e}), orthogonality {orth_u:e}/{orth_v:e}"),
            serde_json::to_value(&a)?,
        )))
    }
}

/// Singular values of a 2x2 matrix from the closed form.
pub fn analytic_2x2(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    let p = (a + d).hypot(b - c);
    let q = (a - d).hypot(b + c);
    ((p + q) / 2.0, (p - q).abs() / 2.0)
}

fn svd2_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("svd2", seed);
    let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    let a = Matrix::from_vec(2, 2, v.to_vec())?;
    let s = singular_values(&a)?;
    let (s1, s2) = analytic_2x2(v[0], v[1], v[2], v[3]);
    if (s[0] - s1).abs() <= SVD_2X2_TOL && (s[1] - s2).abs() <= SVD_2X2_TOL {
        Ok(Ok(()))
    } else {
        Ok(Err((format!("got {s:?}, analytic ({s1}, {s2})"), serde_json::to_value(&a)?)))
    }
}

fn pinv_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("pinv", seed);
    let a = random_matrix(&mut rng, 24);
    let p = pinv(&a, DEFAULT_RANK_TOL)?;
    let scale = a.frobenius().max(1.0);
    let pscale = p.frobenius().max(1.0);
    let e1 = a.matmul(&p).matmul(&a).sub(&a).frobenius() / scale;
    let e2 = p.matmul(&a).matmul(&p).sub(&p).frobenius() / pscale;
    let ap = a.matmul(&p);
    let pa = p.matmul(&a);
    let e3 = ap.sub(&ap.transpose()).frobenius();
    let e4 = pa.sub(&pa.transpose()).frobenius();
    let worst = e1.max(e2).max(e3).max(e4);
    if worst <= PINV_TOL {
        Ok(Ok(()))
    } else {
        Ok(Err((format!("Moore-Penrose residuals {e1:e} {e2:e} {e3:e} {e4:e}"), serde_json::to_value(&a)?)))
    }
}

fn metric_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("metric", seed);
    let k = rng.gen_range(2..=5usize);
    let counts: Vec<usize> = (0..k).map(|_| rng.gen_range(2..=5usize)).collect();
    let idx = ClassIndex::new(counts)?;
    let d = rng.gen_range(k..=k + 4);
    let z = gaussian_matrix(&mut rng, d, idx.total(), 1.0);
    let w = gaussian_matrix(&mut rng, k, d, 1.0);
    let c: f64 = rng.gen_range(0.1..10.0);
    let a = nc1(&z, &idx)?;
    let b = nc1(&z.scale(c), &idx)?;
    let n3 = nc3(&z, &w, &idx)?;
    let n3r = nc3_rescaled(&z, &w, &idx)?;
    let ok = (a - b).abs() <= 1e-10 * a.max(1.0) && (n3 - n3r).abs() <= 1e-12 && (-1.0..=1.0).contains(&n3);
    if ok {
        Ok(Ok(()))
    } else {
        Ok(Err((
            format!("nc1 {a} vs scaled {b}; nc3 {n3} vs rescaled {n3r}"),
            json!({ "z": z, "w": w, "counts": idx.counts(), "scale": c }),
        )))
    }
}

fn label_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let k = [2usize, 4, 10][seed as usize % 3];
    let n_per = 3 + seed as usize;
    let n = k * n_per;
    let y = one_hot_balanced(k, n_per);
    let idx = ClassIndex::balanced(k, n_per)?;
    let spread = mean_spread(&y, &idx)?;
    let sk = *singular_values(&y)?.last().expect("non-empty");
    let kf = k as f64;
    let e1 = (spread - ((kf - 1.0) / kf).sqrt()).abs();
    let e2 = (sk - (n as f64 / kf).sqrt()).abs();
    if e1 <= LABEL_IDENTITY_TOL && e2 <= LABEL_IDENTITY_TOL {
        Ok(Ok(()))
    } else {
        Ok(Err((format!("spread error {e1:e}, s_K error {e2:e}"), json!({ "k": k, "n": n }))))
    }
}

fn chain_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let exact = chain_instance(seed, 0.0)?;
    let lhs0 = balanced_power_lhs(&exact.cfg, &exact.params)?;
    let pert = chain_instance(seed, 1e-3 * (1 + seed % 10) as f64)?;
    let (eps2, r) = chain_premises(&pert)?;
    let lhs = balanced_power_lhs(&pert.cfg, &pert.params)?;
    let rhs = balanced_power_rhs(pert.cfg.l2, r, eps2);
    if lhs0 <= BALANCED_CHAIN_TOL && lhs <= rhs {
        Ok(Ok(()))
    } else {
        Ok(Err((
            format!("exact gap {lhs0:e}; perturbed {lhs:e} vs bound {rhs:e}"),
            json!({ "exact": exact, "perturbed": pert }),
        )))
    }
}

fn thm1_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let inst = thm1_instance(seed)?;
    let (_, _, rep) = check_thm1_instance(&inst)?;
    let bad: Vec<&str> = rep.violations().map(|e| e.name.as_str()).collect();
    let core_vacuous = ["thm1_nc1"]
        .iter()
        .any(|n| rep.get(n).map_or(true, |e| e.holds == Holds::Vacuous));
    if bad.is_empty() && !core_vacuous {
        Ok(Ok(()))
    } else {
        Ok(Err((format!("violated: {bad:?}, nc1 vacuous: {core_vacuous}"), json!({ "instance": inst, "report": rep }))))
    }
}

fn ntk_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("ntk", seed);
    let mut net = random_net(&mut rng);
    // Keep P·NK small enough for the dense kernel.
    while net.params.num_params() * net.y.rows() * net.y.cols() > 2000 {
        net = random_net(&mut rng);
    }
    let rep = ntk_opnorm(&net.cfg, &net.params, &net.x, 1e-12, DEFAULT_MAX_ITER * 10, DEFAULT_SEED)?;
    let dense = dense_ntk(&net.cfg, &net.params, &net.x)?;
    let top = singular_values(&dense)?[0];
    let err = (rep.theta_opnorm - top).abs() / top.max(1e-300);
    if err <= NTK_REL_TOL || top == 0.0 && rep.theta_opnorm == 0.0 {
        Ok(Ok(()))
    } else {
        Ok(Err((format!("power {} vs dense {top}", rep.theta_opnorm), serde_json::to_value(&net)?)))
    }
}

fn idx_case(seed: u64, _: &Faults) -> Result<CaseOutcome> {
    let mut rng = rng_for("idx", seed);
    let img = IdxImages {
        count: rng.gen_range(0..20),
        rows: rng.gen_range(1..6),
        cols: rng.gen_range(1..6),
        pixels: Vec::new(),
    };
    let img = IdxImages {
        pixels: (0..img.count * img.rows * img.cols).map(|_| rng.gen()).collect(),
        ..img
    };
    let labels: Vec<u8> = (0..img.count).map(|_| rng.gen_range(0..10)).collect();
    let back = parse_idx_images(&write_idx_images(&img))?;
    let lab = parse_idx_labels(&write_idx_labels(&labels))?;
    if back == img && lab == labels {
        Ok(Ok(()))
    } else {
        Ok(Err(("roundtrip mismatch".into(), json!({ "images": img.pixels, "labels": labels }))))
    }
}
