//! The EnD regularizer.
//!
//! Features at the attachment layer are L2-normalized per sample and compared
//! through their Gramian `G = Y'Y` (cosine similarities). Two terms are built
//! on label-restricted blocks of `G`:
//!
//! * the disentangling term averages `|g_ij|` inside every same-bias block,
//!   pushing each block towards the identity;
//! * the entangling term rewards `g_ij` between samples of the same target
//!   class that carry different bias labels.
//!
//! `R = alpha * R_perp + beta * R_par`. Every term returns its exact gradient
//! with respect to the normalized features; [`end_regularizer`] chains it
//! through the normalization to the raw features.

mod batch;

pub use batch::{partition_batch, BatchPartition, LabeledBatch};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{column_l2_norms, dot, gemm_nn, gemm_tn, Matrix};

/// What to do with a sample that has no same-target, different-bias partner.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrossBiasPolicy {
    /// Leave the sample out of the entangling average.
    #[default]
    SkipSample,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndConfig {
    /// Weight of the disentangling term.
    pub alpha: f64,
    /// Weight of the entangling term.
    pub beta: f64,
    /// Feature columns with a smaller norm are rejected.
    pub norm_epsilon: f64,
    pub empty_cross_bias_policy: CrossBiasPolicy,
}

impl Default for EndConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            norm_epsilon: 1e-12,
            empty_cross_bias_policy: CrossBiasPolicy::SkipSample,
        }
    }
}

impl EndConfig {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Precondition(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Precondition(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.norm_epsilon > 0.0) {
            return Err(Error::Precondition(format!(
                "norm_epsilon must be > 0, got {}",
                self.norm_epsilon
            )));
        }
        Ok(())
    }

    /// Both weights zero: the regularizer contributes nothing.
    pub fn is_disabled(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }
}

/// Which samples a Gramian was built from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GramSource {
    Batch,
    Bias(usize),
    Target(usize),
}

/// Cosine-similarity matrix of a normalized batch or of a label-restricted subset.
#[derive(Clone, Debug)]
pub struct Gramian {
    pub g: Matrix,
    pub source: GramSource,
}

/// Value of a regularization term and its gradient with respect to the normalized features.
#[derive(Clone, Debug)]
pub struct TermOutput {
    pub value: f64,
    pub grad: Matrix,
}

#[derive(Clone, Debug)]
pub struct EntangleOutput {
    pub value: f64,
    pub grad: Matrix,
    /// Samples left out for lack of a same-target, different-bias partner.
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct RegularizerOutput {
    pub r_perp: f64,
    pub r_par: f64,
    pub r: f64,
    /// `dR/dy` for the raw features, same shape as the batch features.
    pub grad: Matrix,
    pub skipped: usize,
}

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// Normalizes every column to unit L2 norm; also returns the original norms.
pub fn normalize_columns(features: &Matrix, norm_epsilon: f64) -> Result<(Matrix, Vec<f64>)> {
    let norms = column_l2_norms(features);
    if let Some((index, &norm)) = norms
        .iter()
        .enumerate()
        .find(|(_, &n)| !(n >= norm_epsilon) || !n.is_finite())
    {
        return Err(Error::DegenerateFeature { index, norm });
    }
    let mut out = features.clone();
    let inv: Vec<f64> = norms.iter().map(|n| 1.0 / n).collect();
    for r in 0..out.rows() {
        out.row_mut(r)
            .iter_mut()
            .zip(&inv)
            .for_each(|(v, &k)| *v *= k);
    }
    Ok((out, norms))
}

pub fn normalize_batch(batch: &LabeledBatch, cfg: &EndConfig) -> Result<Matrix> {
    normalize_columns(batch.features(), cfg.norm_epsilon).map(|(y, _)| y)
}

/// `G = Y' Y` for a matrix with unit-norm columns.
pub fn gramian(ytilde: &Matrix) -> Result<Gramian> {
    for (j, n) in column_l2_norms(ytilde).into_iter().enumerate() {
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(Error::Precondition(format!(
                "column {j} has norm {n}, expected a unit vector"
            )));
        }
    }
    Ok(Gramian {
        g: gram(ytilde),
        source: GramSource::Batch,
    })
}

fn gram(y: &Matrix) -> Matrix {
    let m = y.cols();
    let mut g = Matrix::zeros(m, m);
    gemm_tn(m, y.rows(), m, y.as_slice(), y.as_slice(), g.as_mut_slice());
    // Exact symmetry and unit diagonal regardless of rounding in the product.
    for i in 0..m {
        for j in 0..i {
            let s = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    g
}

/// `grad = Y * C` for a coefficient matrix `C` (`M x M`).
fn combine_columns(ytilde: &Matrix, coeff: &Matrix) -> Matrix {
    let (n, m) = ytilde.shape();
    let mut grad = Matrix::zeros(n, m);
    gemm_nn(n, m, m, ytilde.as_slice(), coeff.as_slice(), grad.as_mut_slice());
    grad
}

fn check_partition(ytilde: &Matrix, partition: &BatchPartition) -> Result<()> {
    if ytilde.cols() != partition.len() {
        return Err(Error::Dimension(format!(
            "{} feature columns but the partition covers {} samples",
            ytilde.cols(),
            partition.len()
        )));
    }
    Ok(())
}

/// `R_perp = 1/B * sum_b 1/(M^{-,b})^2 * sum_{i,j} |g^{-,b}_ij|`.
///
/// Sums run over every ordered pair in a same-bias block, the diagonal
/// included, which adds the constant `1/M^{-,b}` per block. `B` counts the
/// bias classes present in the batch.
pub fn disentangling_term(ytilde: &Matrix, partition: &BatchPartition) -> Result<TermOutput> {
    check_partition(ytilde, partition)?;
    Ok(disentangle(ytilde, &gram(ytilde), partition))
}

fn disentangle(ytilde: &Matrix, g: &Matrix, partition: &BatchPartition) -> TermOutput {
    let m = partition.len();
    let present = partition.bias_counts().iter().filter(|&&c| c > 0).count();
    let mut coeff = Matrix::zeros(m, m);
    if present == 0 {
        return TermOutput {
            value: 0.0,
            grad: Matrix::zeros(ytilde.rows(), m),
        };
    }
    let mut value = 0.0;
    for i in 0..m {
        let b = partition.bias_of(i);
        let mb = partition.bias_count(b) as f64;
        let w = 1.0 / (present as f64 * mb * mb);
        let mut row_sum = 0.0;
        for j in 0..m {
            if partition.bias_of(j) != b {
                continue;
            }
            let gij = g[(i, j)];
            row_sum += gij.abs();
            // d|g|/dg taken as 0 at g = 0
            coeff[(j, i)] = 2.0 * w * signum0(gij);
        }
        value += w * row_sum;
    }
    TermOutput {
        value,
        grad: combine_columns(ytilde, &coeff),
    }
}

#[inline]
fn signum0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `1 - 1/T * sum_t 1/(M^{t,-})^2 * sum_{i,j} g^{t,-}_ij`: correlate every pair
/// of same-target samples regardless of bias. Kept for ablations.
pub fn naive_entangling_term(ytilde: &Matrix, partition: &BatchPartition) -> Result<TermOutput> {
    check_partition(ytilde, partition)?;
    let g = gram(ytilde);
    let m = partition.len();
    let present = partition.target_counts().iter().filter(|&&c| c > 0).count();
    let mut coeff = Matrix::zeros(m, m);
    if present == 0 {
        return Ok(TermOutput {
            value: 0.0,
            grad: Matrix::zeros(ytilde.rows(), m),
        });
    }
    let mut sum = 0.0;
    for i in 0..m {
        let t = partition.target_of(i);
        let mt = partition.target_count(t) as f64;
        let w = 1.0 / (present as f64 * mt * mt);
        for j in 0..m {
            if partition.target_of(j) == t {
                sum += w * g[(i, j)];
                coeff[(j, i)] = -2.0 * w;
            }
        }
    }
    Ok(TermOutput {
        value: 1.0 - sum,
        grad: combine_columns(ytilde, &coeff),
    })
}

/// `R_par = 1 - 1/M' * sum_i 1/N_i * sum_j [b_j != b_i] g^{t_i,-}_ij`, `j`
/// ranging over samples with target `t_i` and `N_i` the number of those with
/// a bias other than `b_i`. Samples with `N_i = 0` are skipped and `M'`
/// counts the rest; with nothing left the term is 0.
pub fn entangling_term(
    ytilde: &Matrix,
    partition: &BatchPartition,
    cfg: &EndConfig,
) -> Result<EntangleOutput> {
    check_partition(ytilde, partition)?;
    Ok(entangle(ytilde, &gram(ytilde), partition, cfg))
}

fn entangle(
    ytilde: &Matrix,
    g: &Matrix,
    partition: &BatchPartition,
    cfg: &EndConfig,
) -> EntangleOutput {
    let CrossBiasPolicy::SkipSample = cfg.empty_cross_bias_policy;
    let m = partition.len();
    let skipped = partition.entangle_skipped();
    let kept = m - skipped;
    if kept == 0 {
        return EntangleOutput {
            value: 0.0,
            grad: Matrix::zeros(ytilde.rows(), m),
            skipped,
        };
    }
    // R_par = 1 - sum_ij W_ij g_ij, so dR/dy_k = -sum_j (W_kj + W_jk) y_j.
    let mut coeff = Matrix::zeros(m, m);
    let mut sum = 0.0;
    for i in 0..m {
        let partners = partition.cross_bias_partners(i);
        if partners == 0 {
            continue;
        }
        let (t, b) = (partition.target_of(i), partition.bias_of(i));
        let w = 1.0 / (kept as f64 * partners as f64);
        let mut row = 0.0;
        for j in 0..m {
            if partition.target_of(j) == t && partition.bias_of(j) != b {
                row += g[(i, j)];
                coeff[(j, i)] -= w;
                coeff[(i, j)] -= w;
            }
        }
        sum += w * row;
    }
    EntangleOutput {
        value: 1.0 - sum,
        grad: combine_columns(ytilde, &coeff),
        skipped,
    }
}

/// Full regularizer on a raw feature batch: normalize, partition, evaluate
/// both terms on a shared Gramian, blend, and backpropagate through the
/// normalization (`d y~_i / d y_i = (I - y~_i y~_i') / |y_i|`).
pub fn end_regularizer(batch: &LabeledBatch, cfg: &EndConfig) -> Result<RegularizerOutput> {
    cfg.validate()?;
    let (ytilde, norms) = normalize_columns(batch.features(), cfg.norm_epsilon)?;
    let partition = partition_batch(batch);
    let g = gram(&ytilde);
    let perp = disentangle(&ytilde, &g, &partition);
    let par = entangle(&ytilde, &g, &partition, cfg);

    let (n, m) = ytilde.shape();
    let mut grad_tilde = Matrix::zeros(n, m);
    for ((gt, &a), &b) in grad_tilde
        .as_mut_slice()
        .iter_mut()
        .zip(perp.grad.as_slice())
        .zip(par.grad.as_slice())
    {
        *gt = cfg.alpha * a + cfg.beta * b;
    }

    Ok(RegularizerOutput {
        r_perp: perp.value,
        r_par: par.value,
        r: cfg.alpha * perp.value + cfg.beta * par.value,
        grad: normalization_backward(&ytilde, &norms, &grad_tilde),
        skipped: par.skipped,
    })
}

/// Pulls a gradient w.r.t. normalized columns back to the raw columns.
pub fn normalization_backward(ytilde: &Matrix, norms: &[f64], grad_tilde: &Matrix) -> Matrix {
    let (n, m) = ytilde.shape();
    let mut out = Matrix::zeros(n, m);
    for j in 0..m {
        let y = ytilde.column(j);
        let gcol = grad_tilde.column(j);
        let proj = dot(&y, &gcol);
        let inv = 1.0 / norms[j];
        let col: Vec<f64> = gcol
            .iter()
            .zip(&y)
            .map(|(g, yv)| (g - proj * yv) * inv)
            .collect();
        out.set_column(j, &col);
    }
    out
}
