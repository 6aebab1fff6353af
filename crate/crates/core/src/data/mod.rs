//! Datasets: synthetic Gaussian classes, one-hot labels and the IDX loader.

mod idx;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, read_maybe_gz, write_idx_images, write_idx_labels, IdxImages};

use crate::bounds::instances::{gaussian_matrix, random_orthonormal};
use crate::densemat::{norm2, Matrix};
use crate::error::{Error, Result};
use crate::metrics::{class_means, ClassIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `d x N`, columns grouped by class.
    pub x: Matrix,
    /// `K x N` one-hot.
    pub y: Matrix,
    pub idx: ClassIndex,
    /// Largest column norm of `x`.
    pub b: f64,
}

impl Dataset {
    pub fn new(x: Matrix, idx: ClassIndex) -> Result<Self> {
        if x.cols() != idx.total() {
            return Err(Error::Shape(format!(
                "{} samples for a class index covering {}",
                x.cols(),
                idx.total()
            )));
        }
        let y = one_hot(&idx.labels(), idx.num_classes())?;
        let b = max_column_norm(&x);
        Ok(Self { x, y, idx, b })
    }

    /// `max(1, b)`, the column bound used by the step-size schedule.
    pub fn b_bound(&self) -> f64 {
        self.b.max(1.0)
    }

    pub fn num_classes(&self) -> usize {
        self.idx.num_classes()
    }

    pub fn len(&self) -> usize {
        self.idx.total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn max_column_norm(x: &Matrix) -> f64 {
    x.column_norms().into_iter().fold(0.0, f64::max)
}

/// `K` classes centred at `class_sep · u_c` for orthonormal `u_c` (random
/// unit vectors when `d < K`), plus isotropic noise.
pub fn synth_gaussian(d: usize, k: usize, n_per_class: usize, class_sep: f64, noise: f64, seed: u64) -> Result<Dataset> {
    if d == 0 || k == 0 || n_per_class == 0 {
        return Err(Error::Config("synthetic data needs positive d, K and class size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dirs = if d >= k {
        random_orthonormal(&mut rng, d, k)?
    } else {
        let g = gaussian_matrix(&mut rng, d, k, 1.0);
        let norms = g.column_norms();
        Matrix::from_fn(d, k, |i, j| g[(i, j)] / norms[j])
    };
    let idx = ClassIndex::balanced(k, n_per_class)?;
    let noise_m = gaussian_matrix(&mut rng, d, k * n_per_class, noise);
    let x = Matrix::from_fn(d, k * n_per_class, |i, j| class_sep * dirs[(i, j / n_per_class)] + noise_m[(i, j)]);
    Dataset::new(x, idx)
}

pub fn one_hot(labels: &[usize], k: usize) -> Result<Matrix> {
    let mut y = Matrix::zeros(k, labels.len());
    for (j, &c) in labels.iter().enumerate() {
        if c >= k {
            return Err(Error::LabelRange { id: c, k });
        }
        y[(c, j)] = 1.0;
    }
    Ok(y)
}

/// One-hot labels for `n` samples per class, grouped by class.
pub fn one_hot_balanced(k: usize, n: usize) -> Matrix {
    Matrix::from_fn(k, k * n, |c, j| if j / n == c { 1.0 } else { 0.0 })
}

/// `(1/K) Σ_c ‖μ_c − μ_G‖` of a feature or label matrix.
pub fn mean_spread(y: &Matrix, idx: &ClassIndex) -> Result<f64> {
    let (means, g) = class_means(y, idx)?;
    let k = idx.num_classes();
    let total: f64 = (0..k)
        .map(|c| {
            let d: Vec<f64> = means.column(c).iter().zip(&g).map(|(a, b)| a - b).collect();
            norm2(&d)
        })
        .sum();
    Ok(total / k as f64)
}
