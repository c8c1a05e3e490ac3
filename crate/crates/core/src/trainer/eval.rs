use serde::Serialize;

use super::EVAL_CHUNK;
use crate::data::BiasedDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::Network;

/// Binary-task rates with class 1 as the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BinaryMetrics {
    pub tpr: f64,
    pub tnr: f64,
    pub balanced_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    /// `[t][b]` sample counts.
    pub cell_counts: Vec<Vec<usize>>,
    /// `[t][b]` accuracy; `None` for empty cells.
    pub cell_accuracy: Vec<Vec<Option<f64>>>,
    /// Mean accuracy over non-empty `(t, b)` cells.
    pub unbiased_avg_accuracy: f64,
    pub empty_cells: usize,
    /// Present for two-class tasks with both classes in the data.
    pub binary: Option<BinaryMetrics>,
}

pub fn evaluate(net: &Network<f32>, ds: &BiasedDataset) -> Result<EvalReport> {
    if ds.is_empty() {
        return Err(Error::Eval(format!("the {} split is empty", ds.split.name())));
    }
    let mut predictions = Vec::with_capacity(ds.len());
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(EVAL_CHUNK) {
        let x: Matrix<f32> = ds.batch_matrix(chunk);
        predictions.extend(net.predict(&x, EVAL_CHUNK)?);
    }
    let targets: Vec<usize> = (0..ds.len()).map(|i| ds.target(i)).collect();
    let biases: Vec<usize> = (0..ds.len()).map(|i| ds.bias(i)).collect();
    evaluate_predictions(&predictions, &targets, &biases, ds.spec.n_targets, ds.spec.n_biases)
}

pub fn evaluate_predictions(
    predictions: &[usize],
    targets: &[usize],
    biases: &[usize],
    n_targets: usize,
    n_biases: usize,
) -> Result<EvalReport> {
    let n = predictions.len();
    if n == 0 {
        return Err(Error::Eval("no samples to evaluate".into()));
    }
    if targets.len() != n || biases.len() != n {
        return Err(Error::Eval(format!(
            "{n} predictions for {} targets and {} biases",
            targets.len(),
            biases.len()
        )));
    }
    let mut counts = vec![vec![0usize; n_biases]; n_targets];
    let mut hits = vec![vec![0usize; n_biases]; n_targets];
    for ((&p, &t), &b) in predictions.iter().zip(targets).zip(biases) {
        if t >= n_targets || b >= n_biases {
            return Err(Error::Eval(format!("label ({t}, {b}) outside {n_targets}x{n_biases}")));
        }
        counts[t][b] += 1;
        hits[t][b] += usize::from(p == t);
    }
    let cell_accuracy: Vec<Vec<Option<f64>>> = counts
        .iter()
        .zip(&hits)
        .map(|(c, h)| {
            c.iter()
                .zip(h)
                .map(|(&c, &h)| (c > 0).then(|| h as f64 / c as f64))
                .collect()
        })
        .collect();
    let filled: Vec<f64> = cell_accuracy.iter().flatten().flatten().copied().collect();
    let total_hits: usize = hits.iter().flatten().sum();

    let binary = if n_targets == 2 {
        let class_rate = |t: usize| {
            let c: usize = counts[t].iter().sum();
            (c > 0).then(|| hits[t].iter().sum::<usize>() as f64 / c as f64)
        };
        match (class_rate(1), class_rate(0)) {
            (Some(tpr), Some(tnr)) => Some(BinaryMetrics {
                tpr,
                tnr,
                balanced_accuracy: (tpr + tnr) / 2.0,
            }),
            _ => None,
        }
    } else {
        None
    };

    Ok(EvalReport {
        samples: n,
        accuracy: total_hits as f64 / n as f64,
        empty_cells: n_targets * n_biases - filled.len(),
        unbiased_avg_accuracy: filled.iter().sum::<f64>() / filled.len() as f64,
        cell_counts: counts,
        cell_accuracy,
        binary,
    })
}
