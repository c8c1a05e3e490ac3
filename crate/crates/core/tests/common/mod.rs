//! Independent reference implementations used by the integration tests.
//!
//! Everything here is written directly from the defining sums with plain
//! loops and deliberately shares no code path with the library kernels.
#![allow(dead_code)]

use endreg::{LabeledBatch, Matrix, Rng};

pub struct RandomBatch {
    pub features: Matrix,
    pub targets: Vec<usize>,
    pub biases: Vec<usize>,
    pub n_targets: usize,
    pub n_biases: usize,
}

impl RandomBatch {
    pub fn labeled(&self) -> LabeledBatch {
        LabeledBatch::new(
            self.features.clone(),
            self.targets.clone(),
            self.biases.clone(),
            self.n_targets,
            self.n_biases,
        )
        .unwrap()
    }
}

/// Random features in `[-1, 1)` with labels drawn uniformly.
pub fn random_batch(rng: &mut Rng, n: usize, m: usize, n_targets: usize, n_biases: usize) -> RandomBatch {
    let features = Matrix::from_fn(n, m, |_, _| rng.uniform() * 2.0 - 1.0);
    let targets = (0..m).map(|_| rng.below(n_targets)).collect();
    let biases = (0..m).map(|_| rng.below(n_biases)).collect();
    RandomBatch {
        features,
        targets,
        biases,
        n_targets,
        n_biases,
    }
}

pub fn unit_columns(y: &Matrix) -> Matrix {
    let mut out = y.clone();
    for j in 0..y.cols() {
        let mut s = 0.0;
        for i in 0..y.rows() {
            s += y[(i, j)] * y[(i, j)];
        }
        let n = s.sqrt();
        for i in 0..y.rows() {
            out[(i, j)] = y[(i, j)] / n;
        }
    }
    out
}

/// Gramian of the listed columns, entry by entry.
pub fn sub_gram(y: &Matrix, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter()
        .map(|&a| {
            idx.iter()
                .map(|&b| {
                    let mut s = 0.0;
                    for r in 0..y.rows() {
                        s += y[(r, a)] * y[(r, b)];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn members(labels: &[usize], class: usize) -> Vec<usize> {
    labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == class)
        .map(|(i, _)| i)
        .collect()
}

/// Disentangling term from its defining sum over same-bias blocks.
pub fn oracle_r_perp(ytilde: &Matrix, biases: &[usize], n_biases: usize) -> f64 {
    let mut total = 0.0;
    let mut present = 0;
    for b in 0..n_biases {
        let idx = members(biases, b);
        if idx.is_empty() {
            continue;
        }
        present += 1;
        let g = sub_gram(ytilde, &idx);
        let mut s = 0.0;
        for row in &g {
            for v in row {
                s += v.abs();
            }
        }
        total += s / (idx.len() * idx.len()) as f64;
    }
    if present == 0 {
        0.0
    } else {
        total / present as f64
    }
}

/// Same-target correlation term that ignores bias labels.
pub fn oracle_naive_r_par(ytilde: &Matrix, targets: &[usize], n_targets: usize) -> f64 {
    let mut total = 0.0;
    let mut present = 0;
    for t in 0..n_targets {
        let idx = members(targets, t);
        if idx.is_empty() {
            continue;
        }
        present += 1;
        let g = sub_gram(ytilde, &idx);
        let s: f64 = g.iter().flatten().sum();
        total += s / (idx.len() * idx.len()) as f64;
    }
    1.0 - total / present as f64
}

/// Entangling term: per sample, the mean correlation with same-target
/// samples of a different bias; averaged over samples that have any.
/// Returns `(value, skipped)`.
pub fn oracle_r_par(ytilde: &Matrix, targets: &[usize], biases: &[usize]) -> (f64, usize) {
    let m = targets.len();
    let mut acc = 0.0;
    let mut kept = 0;
    for i in 0..m {
        let same_target = members(targets, targets[i]);
        let g = sub_gram(ytilde, &same_target);
        let pos = same_target.iter().position(|&k| k == i).unwrap();
        let mut denom = 0;
        let mut s = 0.0;
        for (q, &j) in same_target.iter().enumerate() {
            if biases[j] != biases[i] {
                denom += 1;
                s += g[pos][q];
            }
        }
        if denom == 0 {
            continue;
        }
        kept += 1;
        acc += s / denom as f64;
    }
    if kept == 0 {
        (0.0, m)
    } else {
        (1.0 - acc / kept as f64, m - kept)
    }
}

/// Central differences of `f` at `x`, step `h`, one entry at a time.
pub fn central_differences(x: &Matrix, h: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for r in 0..x.rows() {
        for c in 0..x.cols() {
            let orig = probe[(r, c)];
            probe[(r, c)] = orig + h;
            let up = f(&probe);
            probe[(r, c)] = orig - h;
            let down = f(&probe);
            probe[(r, c)] = orig;
            grad[(r, c)] = (up - down) / (2.0 * h);
        }
    }
    grad
}

/// Largest entrywise `|a - n| / max(|a|, |n|, 1e-4)`.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Random orthogonal matrix via Gram-Schmidt on a random square matrix.
pub fn random_orthogonal(rng: &mut Rng, n: usize) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        for c in &cols {
            let p: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(c).for_each(|(a, b)| *a -= p * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-6 {
            cols.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    Matrix::from_columns(&cols).unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// True when `k` successes out of `n` lie within three binomial standard
/// deviations of `n * p`.
pub fn within_three_sigma(k: usize, n: usize, p: f64) -> bool {
    let mean = n as f64 * p;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (k as f64 - mean).abs() <= 3.0 * sd
}

/// Pearson chi-square p-value of `counts` against equal expected counts.
pub fn uniform_chi_square_p(counts: &[usize]) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Number of samples whose bias is the class-aligned one (`t mod B`).
pub fn aligned_count(ds: &endreg::data::BiasedDataset) -> usize {
    (0..ds.len())
        .filter(|&i| ds.bias(i) == ds.target(i) % ds.spec.n_biases)
        .count()
}
