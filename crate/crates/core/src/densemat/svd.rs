use super::{LinalgError, Matrix};

/// Singular values below `DEFAULT_RANK_TOL * s_1` count as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Hard cap on cyclic Jacobi sweeps.
pub const MAX_SWEEPS: usize = 60;

/// Pairs whose normalized inner product is below this are left alone.
const ROTATION_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m x k` with orthonormal columns, `k = min(m, n)`.
    pub u: Matrix,
    /// Non-increasing, non-negative.
    pub s: Vec<f64>,
    /// `k x n` with orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    /// `U diag(s) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, &sj) in self.s.iter().enumerate() {
                us[(i, j)] *= sj;
            }
        }
        us.matmul(&self.vt)
    }

    /// Number of singular values above `rank_tol * s_1`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let s1 = self.s.first().copied().unwrap_or(0.0);
        if s1 == 0.0 {
            return 0;
        }
        self.s.iter().take_while(|&&v| v > rank_tol * s1).count()
    }
}

/// Column-major working copy: `cols[j]` is the j-th column.
struct Columns {
    cols: Vec<Vec<f64>>,
}

impl Columns {
    fn of(a: &Matrix) -> Self {
        Self {
            cols: (0..a.cols()).map(|j| a.column(j)).collect(),
        }
    }

    fn identity(n: usize) -> Self {
        Self {
            cols: (0..n)
                .map(|j| {
                    let mut c = vec![0.0; n];
                    c[j] = 1.0;
                    c
                })
                .collect(),
        }
    }

    fn rotate(&mut self, p: usize, q: usize, c: f64, s: f64) {
        let (lo, hi) = self.cols.split_at_mut(q);
        let (cp, cq) = (&mut lo[p], &mut hi[0]);
        for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
            let (xp, xq) = (*x, *y);
            *x = c * xp - s * xq;
            *y = s * xp + c * xq;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hestenes one-sided Jacobi on a tall (`m >= n`) matrix. Returns the
/// rotated columns (`A V`) and the accumulated `V`, if requested.
fn jacobi_tall(a: &Matrix, want_v: bool) -> Result<(Columns, Option<Columns>), LinalgError> {
    let n = a.cols();
    let mut w = Columns::of(a);
    let mut v = want_v.then(|| Columns::identity(n));
    let fro2 = a.frobenius_sq();
    // Columns this small are rounding noise from a zero singular value.
    let noise = f64::EPSILON * f64::EPSILON * fro2 * 1e-4;

    for _sweep in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let alpha = dot(&w.cols[p], &w.cols[p]);
                let beta = dot(&w.cols[q], &w.cols[q]);
                if alpha <= noise || beta <= noise {
                    continue;
                }
                let gamma = dot(&w.cols[p], &w.cols[q]);
                if gamma.abs() <= ROTATION_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                w.rotate(p, q, c, s);
                if let Some(v) = v.as_mut() {
                    v.rotate(p, q, c, s);
                }
            }
        }
        if !rotated {
            return Ok((w, v));
        }
    }

    let mut residual: f64 = 0.0;
    for p in 0..n {
        for q in p + 1..n {
            let alpha = dot(&w.cols[p], &w.cols[p]);
            let beta = dot(&w.cols[q], &w.cols[q]);
            if alpha > noise && beta > noise {
                residual = residual.max(dot(&w.cols[p], &w.cols[q]).abs() / (alpha * beta).sqrt());
            }
        }
    }
    Err(LinalgError::NoConvergence {
        sweeps: MAX_SWEEPS,
        residual,
    })
}

/// Replaces `cols[j]` for every `j` in `bad` by a unit vector orthogonal to
/// all other columns, drawn from the canonical basis by Gram-Schmidt.
fn complete_orthonormal(cols: &mut [Vec<f64>], bad: &[bool]) {
    let m = cols.first().map_or(0, Vec::len);
    for j in 0..cols.len() {
        if !bad[j] {
            continue;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for i in 0..m {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == j || (bad[k] && k > j) {
                        continue;
                    }
                    let proj = dot(&e, c);
                    for (x, y) in e.iter_mut().zip(c) {
                        *x -= proj * y;
                    }
                }
            }
            let nrm = dot(&e, &e).sqrt();
            if best.as_ref().map_or(true, |(b, _)| nrm > *b) {
                best = Some((nrm, e));
            }
        }
        let (nrm, mut e) = best.expect("m >= number of columns");
        e.iter_mut().for_each(|x| *x /= nrm);
        cols[j] = e;
    }
}

/// Thin SVD by one-sided Jacobi. Deterministic for a fixed input.
pub fn svd(a: &Matrix) -> Result<SvdResult, LinalgError> {
    check_input(a)?;
    if a.rows() < a.cols() {
        let t = svd_tall(&a.transpose())?;
        // Aᵀ = U S Vᵀ  =>  A = V S Uᵀ.
        let mut out = SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        };
        fix_signs(&mut out);
        return Ok(out);
    }
    let mut out = svd_tall(a)?;
    fix_signs(&mut out);
    Ok(out)
}

fn check_input(a: &Matrix) -> Result<(), LinalgError> {
    if a.is_empty() {
        return Err(LinalgError::Empty {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if let Some(i) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite {
            row: i / a.cols(),
            col: i % a.cols(),
        });
    }
    Ok(())
}

fn svd_tall(a: &Matrix) -> Result<SvdResult, LinalgError> {
    let (m, n) = a.shape();
    let (w, v) = jacobi_tall(a, true)?;
    let v = v.expect("requested");

    let norms: Vec<f64> = w.cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let s: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let s_max = s[0];
    let small = f64::EPSILON * s_max * m.max(n) as f64;

    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut bad = Vec::with_capacity(n);
    for (&i, &sj) in order.iter().zip(&s) {
        if sj <= small || sj == 0.0 {
            ucols.push(vec![0.0; m]);
            bad.push(true);
        } else {
            ucols.push(w.cols[i].iter().map(|x| x / sj).collect());
            bad.push(false);
        }
    }
    complete_orthonormal(&mut ucols, &bad);

    let u = Matrix::from_fn(m, n, |i, j| ucols[j][i]);
    let vt = Matrix::from_fn(n, n, |i, j| v.cols[order[i]][j]);
    Ok(SvdResult { u, s, vt })
}

/// Largest-magnitude entry of each left singular vector made positive.
fn fix_signs(r: &mut SvdResult) {
    for j in 0..r.s.len() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for i in 0..r.u.rows() {
            let x = r.u[(i, j)];
            if x.abs() > best.abs() {
                best = x;
                sign = x.signum();
            }
        }
        if sign < 0.0 {
            for i in 0..r.u.rows() {
                r.u[(i, j)] = -r.u[(i, j)];
            }
            for k in 0..r.vt.cols() {
                r.vt[(j, k)] = -r.vt[(j, k)];
            }
        }
    }
}

/// Singular values only (skips accumulation of right vectors).
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    check_input(a)?;
    let tall = if a.rows() < a.cols() {
        a.transpose()
    } else {
        a.clone()
    };
    let (w, _) = jacobi_tall(&tall, false)?;
    let mut s: Vec<f64> = w.cols.iter().map(|c| dot(c, c).sqrt()).collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

/// Largest singular value. Zero for a zero or empty matrix.
pub fn op_norm(a: &Matrix) -> Result<f64, LinalgError> {
    if a.is_empty() || a.max_abs() == 0.0 {
        return Ok(0.0);
    }
    Ok(singular_values(a)?[0])
}

/// Moore-Penrose pseudoinverse, treating `s_i <= rank_tol * s_1` as zero.
pub fn pinv(a: &Matrix, rank_tol: f64) -> Result<Matrix, LinalgError> {
    assert!(rank_tol > 0.0 && rank_tol < 1.0, "rank_tol must lie in (0, 1)");
    if a.is_empty() || a.max_abs() == 0.0 {
        return Ok(Matrix::zeros(a.cols(), a.rows()));
    }
    let r = svd(a)?;
    let k = r.rank(rank_tol);
    // V_k diag(1/s) U_kᵀ
    let mut v_scaled = Matrix::zeros(a.cols(), k);
    for i in 0..a.cols() {
        for j in 0..k {
            v_scaled[(i, j)] = r.vt[(j, i)] / r.s[j];
        }
    }
    Ok(v_scaled.matmul(&r.u.columns(0, k).transpose()))
}

/// `s_1 / s_k` over the numerically non-zero singular values.
pub fn cond(a: &Matrix, rank_tol: f64) -> Result<f64, LinalgError> {
    if a.is_empty() || a.max_abs() == 0.0 {
        return Err(LinalgError::ZeroMatrix);
    }
    let s = singular_values(a)?;
    let s1 = s[0];
    let sk = s
        .iter()
        .rev()
        .find(|&&v| v > rank_tol * s1)
        .copied()
        .unwrap_or(s1);
    Ok(s1 / sk)
}
