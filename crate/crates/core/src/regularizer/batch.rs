use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Feature batch at the attachment layer together with its labels.
///
/// `features` is `N x M`; column `i` is the feature vector of sample `i`,
/// whose target class is `targets[i]` and bias class is `biases[i]`.
#[derive(Clone, Debug)]
pub struct LabeledBatch {
    features: Matrix,
    targets: Vec<usize>,
    biases: Vec<usize>,
    n_targets: usize,
    n_biases: usize,
}

impl LabeledBatch {
    pub fn new(
        features: Matrix,
        targets: Vec<usize>,
        biases: Vec<usize>,
        n_targets: usize,
        n_biases: usize,
    ) -> Result<Self> {
        if n_targets == 0 || n_biases == 0 {
            return Err(Error::Label(format!(
                "need at least one target and one bias class, got T={n_targets}, B={n_biases}"
            )));
        }
        let m = features.cols();
        if targets.len() != m || biases.len() != m {
            return Err(Error::Label(format!(
                "{m} feature columns but {} targets and {} biases",
                targets.len(),
                biases.len()
            )));
        }
        if let Some((i, &t)) = targets.iter().enumerate().find(|(_, &t)| t >= n_targets) {
            return Err(Error::Label(format!(
                "sample {i} has target {t} outside [0, {n_targets})"
            )));
        }
        if let Some((i, &b)) = biases.iter().enumerate().find(|(_, &b)| b >= n_biases) {
            return Err(Error::Label(format!(
                "sample {i} has bias {b} outside [0, {n_biases})"
            )));
        }
        Ok(Self {
            features,
            targets,
            biases,
            n_targets,
            n_biases,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn biases(&self) -> &[usize] {
        &self.biases
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn n_biases(&self) -> usize {
        self.n_biases
    }

    /// Batch size `M`.
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Same labels, new features. The feature matrix must keep the column count.
    pub fn with_features(&self, features: Matrix) -> Result<Self> {
        Self::new(
            features,
            self.targets.clone(),
            self.biases.clone(),
            self.n_targets,
            self.n_biases,
        )
    }
}

/// Per-(target, bias) counts and member lists of a batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPartition {
    n_targets: usize,
    n_biases: usize,
    targets: Vec<usize>,
    biases: Vec<usize>,
    /// Row-major `T x B`; each list ascending.
    cells: Vec<Vec<usize>>,
    m_t: Vec<usize>,
    m_b: Vec<usize>,
}

impl BatchPartition {
    pub fn new(targets: &[usize], biases: &[usize], n_targets: usize, n_biases: usize) -> Self {
        let mut cells = vec![Vec::new(); n_targets * n_biases];
        let mut m_t = vec![0; n_targets];
        let mut m_b = vec![0; n_biases];
        for (i, (&t, &b)) in targets.iter().zip(biases).enumerate() {
            cells[t * n_biases + b].push(i);
            m_t[t] += 1;
            m_b[b] += 1;
        }
        Self {
            n_targets,
            n_biases,
            targets: targets.to_vec(),
            biases: biases.to_vec(),
            cells,
            m_t,
            m_b,
        }
    }

    pub fn n_targets(&self) -> usize {
        self.n_targets
    }

    pub fn n_biases(&self) -> usize {
        self.n_biases
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn target_of(&self, i: usize) -> usize {
        self.targets[i]
    }

    pub fn bias_of(&self, i: usize) -> usize {
        self.biases[i]
    }

    /// `M^{t,b}`.
    pub fn count(&self, t: usize, b: usize) -> usize {
        self.cells[t * self.n_biases + b].len()
    }

    /// `M^{t,-}`.
    pub fn target_count(&self, t: usize) -> usize {
        self.m_t[t]
    }

    /// `M^{-,b}`.
    pub fn bias_count(&self, b: usize) -> usize {
        self.m_b[b]
    }

    pub fn target_counts(&self) -> &[usize] {
        &self.m_t
    }

    pub fn bias_counts(&self) -> &[usize] {
        &self.m_b
    }

    /// Samples with target `t` and bias `b`, ascending.
    pub fn cell(&self, t: usize, b: usize) -> &[usize] {
        &self.cells[t * self.n_biases + b]
    }

    /// Samples with target `t`, ascending.
    pub fn with_target(&self, t: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_biases)
            .flat_map(|b| self.cell(t, b).iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }

    /// Samples with bias `b`, ascending.
    pub fn with_bias(&self, b: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.n_targets)
            .flat_map(|t| self.cell(t, b).iter().copied())
            .collect();
        idx.sort_unstable();
        idx
    }

    /// Number of same-target samples of sample `i` that carry a different bias.
    pub fn cross_bias_partners(&self, i: usize) -> usize {
        let (t, b) = (self.targets[i], self.biases[i]);
        self.m_t[t] - self.count(t, b)
    }

    /// Samples with no same-target, different-bias partner in the batch.
    pub fn entangle_skipped(&self) -> usize {
        (0..self.len())
            .filter(|&i| self.cross_bias_partners(i) == 0)
            .count()
    }
}

pub fn partition_batch(batch: &LabeledBatch) -> BatchPartition {
    BatchPartition::new(
        batch.targets(),
        batch.biases(),
        batch.n_targets(),
        batch.n_biases(),
    )
}
