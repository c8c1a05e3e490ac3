//! Training loop for `J = L + R`, evaluation metrics, the four-arm
//! ablation, the gradient-check harness and the kick-in detector.
//!
//! Training runs in f32. The regularizer is evaluated in f64 on the
//! feature-layer activations and its gradient is cast back before it is
//! injected into the backward pass.

mod ablate;
mod eval;
mod gradcheck;
mod kick_in;
mod metrics;

pub use ablate::{ablate, AblationReport, Arm, ArmResult, ArmRun};
pub use eval::{evaluate, evaluate_predictions, BinaryMetrics, EvalReport};
pub use gradcheck::{gradcheck, GradcheckConfig, GradcheckReport};
pub use kick_in::{detect_kick_in, KickInConfig};
pub use metrics::{metrics_csv, write_metrics_csv, METRICS_HEADER};

use serde::{Deserialize, Serialize};

use crate::data::{BiasedDataset, DatasetSpec, Dims};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Rng};
use crate::net::{argmax_columns, softmax_cross_entropy, Architecture, Network, Optimizer, OptimizerConfig};
use crate::regularizer::{end_regularizer, BatchPartition, EndConfig, LabeledBatch};

/// Random stream of `seed` used to initialize the network.
pub const INIT_STREAM: u64 = 100;
/// Random stream of `seed` used to shuffle the training set, once per epoch.
pub const SHUFFLE_STREAM: u64 = 101;
/// Samples per forward pass during evaluation.
pub const EVAL_CHUNK: usize = 500;

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_EPOCHS: usize = 30;
/// `(alpha, beta)` for vector (gaussian) data.
pub const VECTOR_END_WEIGHTS: (f64, f64) = (1.0, 1.0);
/// `(alpha, beta)` for image data, tuned on the 16x16 colored-patterns benchmark.
pub const IMAGE_END_WEIGHTS: (f64, f64) = (0.3, 3.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub end: EndConfig,
    pub seed: u64,
    /// Evaluate the held-out splits every this many epochs (and always
    /// after the last one).
    pub eval_every: usize,
    pub architecture: Architecture,
}

impl TrainConfig {
    /// Defaults for a dataset: the desk conv net for images, a one-hidden-layer
    /// MLP for vectors.
    pub fn for_spec(spec: &DatasetSpec) -> Result<Self> {
        let (architecture, (alpha, beta)) = match spec.dims {
            Dims::Image {
                height,
                width,
                channels,
            } => (
                Architecture::desk_conv(channels, height, width, spec.n_targets)?,
                IMAGE_END_WEIGHTS,
            ),
            Dims::Vector(d) => (Architecture::mlp(d, &[32], spec.n_targets)?, VECTOR_END_WEIGHTS),
        };
        Ok(Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            optimizer: OptimizerConfig::default(),
            end: EndConfig::new(alpha, beta),
            seed: 0,
            eval_every: 1,
            architecture,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Precondition("epochs must be >= 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Precondition(format!(
                "batch size must be >= 2, got {}",
                self.batch_size
            )));
        }
        if self.eval_every < 1 {
            return Err(Error::Precondition("eval_every must be >= 1".into()));
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(Error::Precondition(format!(
                "learning rate must be > 0, got {}",
                self.optimizer.lr
            )));
        }
        self.end.validate()?;
        self.architecture.validate()
    }
}

/// Per-epoch averages over the epoch's minibatches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub r_perp: f64,
    pub r_par: f64,
    pub r: f64,
    /// `loss + r`.
    pub j: f64,
    /// Accuracy of the training-time predictions over the epoch.
    pub acc_train: f64,
    /// Overall accuracy on the biased split, when evaluated this epoch.
    pub acc_biased: Option<f64>,
    /// Overall accuracy on the unbiased split, when evaluated this epoch.
    pub acc_unbiased: Option<f64>,
    /// Fraction of the epoch's samples left out of the entangling term.
    pub skipped_frac: f64,
}

/// Held-out splits evaluated during and after training.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvalSets<'a> {
    pub biased: Option<&'a BiasedDataset>,
    pub unbiased: Option<&'a BiasedDataset>,
    pub conflicting: Option<&'a BiasedDataset>,
}

/// Reports on each provided split after the last epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FinalReports {
    pub biased: Option<EvalReport>,
    pub unbiased: Option<EvalReport>,
    pub conflicting: Option<EvalReport>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<TrainRecord>,
    pub network: Network<f32>,
    pub reports: FinalReports,
}

/// Values of one optimizer step, before averaging into a [`TrainRecord`].
#[derive(Clone, Debug)]
pub struct BatchStats<'a> {
    pub epoch: usize,
    /// 0-based within the epoch.
    pub batch: usize,
    /// Training-set indices of the batch, in batch order.
    pub indices: &'a [usize],
    pub loss: f64,
    pub r_perp: f64,
    pub r_par: f64,
    pub r: f64,
    pub skipped: usize,
}

/// Progress hooks for [`train_with`]. Closures taking a `&TrainRecord`
/// observe epochs only.
pub trait Observer {
    fn batch(&mut self, _stats: &BatchStats<'_>) {}
    fn epoch(&mut self, _record: &TrainRecord) {}
}

impl<F: FnMut(&TrainRecord)> Observer for F {
    fn epoch(&mut self, record: &TrainRecord) {
        self(record)
    }
}

pub fn train(config: &TrainConfig, train_set: &BiasedDataset, eval: EvalSets<'_>) -> Result<TrainOutcome> {
    train_with(config, train_set, eval, &mut |_: &TrainRecord| {})
}

/// [`train`] reporting progress to `observer`.
pub fn train_with(
    config: &TrainConfig,
    train_set: &BiasedDataset,
    eval: EvalSets<'_>,
    observer: &mut impl Observer,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_compatible(config, train_set)?;
    for ds in [eval.biased, eval.unbiased, eval.conflicting].into_iter().flatten() {
        check_compatible(config, ds)?;
    }
    if train_set.is_empty() {
        return Err(Error::Precondition("training set is empty".into()));
    }
    let (n_targets, n_biases) = (train_set.spec.n_targets, train_set.spec.n_biases);

    let mut net = Network::<f32>::new(config.architecture.clone(), &mut Rng::with_stream(config.seed, INIT_STREAM))?;
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut shuffle_rng = Rng::with_stream(config.seed, SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut sums = [0.0f64; 4];
        let (mut batches, mut correct, mut skipped) = (0usize, 0usize, 0usize);
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let at = |e: Error| Error::Training {
                epoch,
                batch,
                source: Box::new(e),
            };
            let x: Matrix<f32> = train_set.batch_matrix(idx);
            let targets: Vec<usize> = idx.iter().map(|&i| train_set.target(i)).collect();
            let biases: Vec<usize> = idx.iter().map(|&i| train_set.bias(i)).collect();

            let (logits, trace) = net.forward(&x).map_err(at)?;
            correct += argmax_columns(&logits)
                .iter()
                .zip(&targets)
                .filter(|(p, t)| p == t)
                .count();
            let (loss, grad_logits) = softmax_cross_entropy(&logits, &targets).map_err(at)?;

            let (r_perp, r_par, r, grad_gamma, batch_skipped) = if config.end.is_disabled() {
                let partition = BatchPartition::new(&targets, &biases, n_targets, n_biases);
                let zeros = Matrix::zeros(trace.gamma_output().rows(), idx.len());
                (0.0, 0.0, 0.0, zeros, partition.entangle_skipped())
            } else {
                let features = LabeledBatch::new(trace.gamma_output().cast(), targets, biases, n_targets, n_biases)
                    .map_err(at)?;
                let out = end_regularizer(&features, &config.end).map_err(at)?;
                (out.r_perp, out.r_par, out.r, out.grad.cast(), out.skipped)
            };

            let grads = net.backward(&trace, &grad_logits, &grad_gamma).map_err(at)?;
            optimizer.step(&mut net, &grads).map_err(at)?;
            if !net.is_finite() {
                return Err(at(Error::NonFinite("parameters after the optimizer step".into())));
            }
            observer.batch(&BatchStats {
                epoch,
                batch,
                indices: idx,
                loss,
                r_perp,
                r_par,
                r,
                skipped: batch_skipped,
            });
            for (s, v) in sums.iter_mut().zip([loss, r_perp, r_par, r]) {
                *s += v;
            }
            batches += 1;
            skipped += batch_skipped;
        }

        let n = batches as f64;
        let [loss, r_perp, r_par, r] = sums.map(|s| s / n);
        let evaluate_now = epoch % config.eval_every == 0 || epoch == config.epochs;
        let acc = |ds: Option<&BiasedDataset>| -> Result<Option<f64>> {
            match ds {
                Some(ds) if evaluate_now => Ok(Some(evaluate(&net, ds)?.accuracy)),
                _ => Ok(None),
            }
        };
        let record = TrainRecord {
            epoch,
            loss,
            r_perp,
            r_par,
            r,
            j: loss + r,
            acc_train: correct as f64 / train_set.len() as f64,
            acc_biased: acc(eval.biased)?,
            acc_unbiased: acc(eval.unbiased)?,
            skipped_frac: skipped as f64 / train_set.len() as f64,
        };
        observer.epoch(&record);
        records.push(record);
    }

    let report = |ds: Option<&BiasedDataset>| ds.map(|d| evaluate(&net, d)).transpose();
    let reports = FinalReports {
        biased: report(eval.biased)?,
        unbiased: report(eval.unbiased)?,
        conflicting: report(eval.conflicting)?,
    };
    Ok(TrainOutcome {
        records,
        network: net,
        reports,
    })
}

fn check_compatible(config: &TrainConfig, ds: &BiasedDataset) -> Result<()> {
    let arch = &config.architecture;
    if ds.feature_len() != arch.input_size() {
        return Err(Error::Dimension(format!(
            "{} split has {} features per sample, network expects {}",
            ds.split.name(),
            ds.feature_len(),
            arch.input_size()
        )));
    }
    if ds.spec.n_targets > arch.output_size() {
        return Err(Error::Dimension(format!(
            "{} target classes but the network has {} outputs",
            ds.spec.n_targets,
            arch.output_size()
        )));
    }
    Ok(())
}
