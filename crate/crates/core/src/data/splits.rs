//! Evaluation splits.
//!
//! Generated data: the biased test set is drawn at `rho = 1.0`, the unbiased
//! one at `rho = 0.1`, and the bias-conflicting set is the unbiased set
//! without samples whose bias is their class-aligned one. Fixed pools (such
//! as injected IDX data) are balanced instead: every (target, bias) cell is
//! subsampled to the size of the smallest cell.

use super::{generate, BiasedDataset, DatasetSpec, Generator, Split};
use crate::error::{Error, Result};
use crate::linalg::Rng;

pub const BIASED_RHO: f64 = 1.0;
pub const UNBIASED_RHO: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitMode {
    /// Regenerate at `rho = 1.0`.
    Biased,
    /// Regenerate at `rho = 0.1`.
    Unbiased,
    /// Drop class-aligned samples from the given set.
    BiasConflicting,
    /// Equal count in every (target, bias) cell of the given set.
    Balanced,
}

#[derive(Clone, Debug)]
pub struct EvalSplits {
    pub biased: BiasedDataset,
    pub unbiased: BiasedDataset,
    pub conflicting: BiasedDataset,
}

fn regenerate(train: &DatasetSpec, rho: f64, n: usize, split: Split) -> Result<BiasedDataset> {
    if train.generator == Generator::InjectedIdx {
        return Err(Error::Split(
            "fixed-pool datasets cannot be regenerated; use balanced subsampling".into(),
        ));
    }
    generate(
        &DatasetSpec {
            n_samples: n,
            rho,
            ..*train
        },
        split,
    )
}

/// Biased, unbiased and bias-conflicting test sets of `n_test` samples
/// (the conflicting set is what remains of the unbiased one).
pub fn generate_eval_splits(train: &DatasetSpec, n_test: usize) -> Result<EvalSplits> {
    let biased = regenerate(train, BIASED_RHO, n_test, Split::BiasedTest)?;
    let unbiased = regenerate(train, UNBIASED_RHO, n_test, Split::UnbiasedTest)?;
    let conflicting = bias_conflicting(&unbiased)?;
    Ok(EvalSplits {
        biased,
        unbiased,
        conflicting,
    })
}

/// One split built from `source` according to `mode`. `n` is the sample
/// count for regenerated splits and `seed` drives balanced subsampling.
pub fn build_eval_splits(source: &BiasedDataset, mode: SplitMode, n: usize, seed: u64) -> Result<BiasedDataset> {
    match mode {
        SplitMode::Biased => regenerate(&source.spec, BIASED_RHO, n, Split::BiasedTest),
        SplitMode::Unbiased => regenerate(&source.spec, UNBIASED_RHO, n, Split::UnbiasedTest),
        SplitMode::BiasConflicting => bias_conflicting(source),
        SplitMode::Balanced => balanced_unbiased(source, seed),
    }
}

/// Samples whose bias differs from their class-aligned bias.
pub fn bias_conflicting(ds: &BiasedDataset) -> Result<BiasedDataset> {
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| !ds.is_aligned(i)).collect();
    if keep.is_empty() {
        return Err(Error::Split(format!(
            "no bias-conflicting samples among {} in the {} split",
            ds.len(),
            ds.split.name()
        )));
    }
    Ok(ds.subset(&keep, Split::BiasConflicting))
}

/// Subsamples every (target, bias) cell to the smallest cell's size.
/// Selected samples keep their original relative order.
pub fn balanced_unbiased(ds: &BiasedDataset, seed: u64) -> Result<BiasedDataset> {
    let (t_count, b_count) = (ds.spec.n_targets, ds.spec.n_biases);
    let mut cells = vec![Vec::new(); t_count * b_count];
    for i in 0..ds.len() {
        cells[ds.target(i) * b_count + ds.bias(i)].push(i);
    }
    if let Some(pos) = cells.iter().position(Vec::is_empty) {
        return Err(Error::Split(format!(
            "cell (target {}, bias {}) is empty",
            pos / b_count,
            pos % b_count
        )));
    }
    let per_cell = cells.iter().map(Vec::len).min().unwrap_or(0);
    let mut rng = Rng::with_stream(seed, Split::UnbiasedTest.tag() as u64 + 1);
    let mut keep = Vec::with_capacity(per_cell * cells.len());
    for cell in &mut cells {
        rng.shuffle(cell);
        keep.extend_from_slice(&cell[..per_cell]);
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep, Split::UnbiasedTest))
}
