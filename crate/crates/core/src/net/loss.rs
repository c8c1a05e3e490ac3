use crate::error::{Error, Result};
use crate::linalg::{Matrix, Real};

/// Mean softmax cross-entropy over the columns of `logits` (`classes x M`)
/// and its gradient `(softmax - onehot) / M`. Uses the max-shifted
/// log-sum-exp; the loss is accumulated in `f64`.
pub fn softmax_cross_entropy<F: Real>(logits: &Matrix<F>, targets: &[usize]) -> Result<(f64, Matrix<F>)> {
    let (classes, m) = logits.shape();
    if targets.len() != m {
        return Err(Error::Dimension(format!(
            "{m} logit columns but {} targets",
            targets.len()
        )));
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::Label(format!("target {t} outside [0, {classes})")));
    }
    let mut grad = Matrix::zeros(classes, m);
    if m == 0 {
        return Ok((0.0, grad));
    }
    let inv_m = 1.0 / m as f64;
    let mut loss = 0.0;
    let mut probs = vec![0.0f64; classes];
    for (j, &t) in targets.iter().enumerate() {
        let max = (0..classes)
            .map(|r| logits[(r, j)].as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for (r, p) in probs.iter_mut().enumerate() {
            *p = (logits[(r, j)].as_f64() - max).exp();
            z += *p;
        }
        loss += z.ln() + max - logits[(t, j)].as_f64();
        for (r, p) in probs.iter().enumerate() {
            let onehot = if r == t { 1.0 } else { 0.0 };
            grad[(r, j)] = F::of_f64((p / z - onehot) * inv_m);
        }
    }
    Ok((loss * inv_m, grad))
}
