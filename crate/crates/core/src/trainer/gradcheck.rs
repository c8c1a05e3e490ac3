use serde::Serialize;

use crate::error::Result;
use crate::linalg::{Matrix, Rng};
use crate::net::{softmax_cross_entropy, Architecture, LayerSpec, Network, Shape};
use crate::regularizer::{end_regularizer, EndConfig, LabeledBatch};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradcheckConfig {
    /// Random feature batches for the regularizer check.
    pub instances: usize,
    pub max_batch: usize,
    pub max_features: usize,
    /// Central-difference step.
    pub step: f64,
    pub end: EndConfig,
    pub seed: u64,
    pub regularizer_tolerance: f64,
    pub network_tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            max_batch: 16,
            max_features: 8,
            step: 1e-6,
            end: EndConfig::new(0.7, 0.3),
            seed: 0,
            regularizer_tolerance: 1e-5,
            network_tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub instances: usize,
    /// Worst relative error of `dR/dy` over all instances.
    pub regularizer_max_rel_error: f64,
    /// Worst relative error of `dJ/dtheta` over the network checks.
    pub network_max_rel_error: f64,
    pub network_parameters: usize,
    /// Frobenius norm of `dR/dy` with `alpha = beta = 0`.
    pub disabled_grad_norm: f64,
    pub regularizer_tolerance: f64,
    pub network_tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.regularizer_max_rel_error < self.regularizer_tolerance
            && self.network_max_rel_error < self.network_tolerance
            && self.disabled_grad_norm == 0.0
    }
}

/// `|a - n| / max(|a|, |n|, 1e-4)`, maximized over entries.
pub(crate) fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

fn random_batch(rng: &mut Rng, cfg: &GradcheckConfig) -> LabeledBatch {
    let m = 2 + rng.below(cfg.max_batch.max(2) - 1);
    let n = 2 + rng.below(cfg.max_features.max(2) - 1);
    let t = 1 + rng.below(3);
    let b = 1 + rng.below(3);
    let y = Matrix::from_fn(n, m, |_, _| rng.uniform() * 2.0 - 1.0);
    let targets = (0..m).map(|_| rng.below(t)).collect();
    let biases = (0..m).map(|_| rng.below(b)).collect();
    LabeledBatch::new(y, targets, biases, t, b).expect("labels drawn in range")
}

fn regularizer_error(batch: &LabeledBatch, cfg: &EndConfig, h: f64) -> Result<f64> {
    let analytic = end_regularizer(batch, cfg)?.grad;
    let mut probe = batch.features().clone();
    let mut numeric = Vec::with_capacity(probe.as_slice().len());
    for k in 0..probe.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + h;
        let up = end_regularizer(&batch.with_features(probe.clone())?, cfg)?.r;
        probe.as_mut_slice()[k] = orig - h;
        let down = end_regularizer(&batch.with_features(probe.clone())?, cfg)?.r;
        probe.as_mut_slice()[k] = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(max_rel_error(analytic.as_slice(), &numeric))
}

fn objective(net: &Network<f64>, x: &Matrix, targets: &[usize], biases: &[usize], cfg: &EndConfig) -> Result<f64> {
    let (logits, trace) = net.forward(x)?;
    let (loss, _) = softmax_cross_entropy(&logits, targets)?;
    let batch = LabeledBatch::new(trace.gamma_output().clone(), targets.to_vec(), biases.to_vec(), 3, 2)?;
    Ok(loss + end_regularizer(&batch, cfg)?.r)
}

fn network_error(net: &Network<f64>, x: &Matrix, targets: &[usize], biases: &[usize], cfg: &EndConfig, h: f64) -> Result<f64> {
    let (logits, trace) = net.forward(x)?;
    let (_, grad_logits) = softmax_cross_entropy(&logits, targets)?;
    let batch = LabeledBatch::new(trace.gamma_output().clone(), targets.to_vec(), biases.to_vec(), 3, 2)?;
    let reg = end_regularizer(&batch, cfg)?;
    let analytic = net.backward(&trace, &grad_logits, &reg.grad)?.flatten();

    let base = net.flat_params();
    let mut probe = net.clone();
    let mut params = base.clone();
    let mut numeric = Vec::with_capacity(base.len());
    for k in 0..base.len() {
        params[k] = base[k] + h;
        probe.set_flat_params(&params)?;
        let up = objective(&probe, x, targets, biases, cfg)?;
        params[k] = base[k] - h;
        probe.set_flat_params(&params)?;
        let down = objective(&probe, x, targets, biases, cfg)?;
        params[k] = base[k];
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(max_rel_error(&analytic, &numeric))
}

/// Small networks (an MLP and a two-layer conv net) with positive biases so
/// that no ReLU feature column is identically zero.
fn check_networks(rng: &mut Rng, cfg: &GradcheckConfig) -> Result<(f64, usize)> {
    let archs = [
        Architecture::mlp(6, &[8, 5], 3)?,
        Architecture::new(
            Shape::Image {
                channels: 2,
                height: 7,
                width: 7,
            },
            vec![
                LayerSpec::Conv2d {
                    in_channels: 2,
                    out_channels: 3,
                    kernel: 3,
                    stride: 2,
                    padding: 1,
                },
                LayerSpec::Relu,
                LayerSpec::Conv2d {
                    in_channels: 3,
                    out_channels: 4,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                LayerSpec::LeakyRelu,
                LayerSpec::GlobalAvgPool,
                LayerSpec::L2Normalize,
                LayerSpec::Dense { inputs: 4, outputs: 3 },
            ],
            4,
        )?,
    ];
    let mut worst = 0.0f64;
    let mut parameters = 0;
    for arch in archs {
        let mut net = Network::<f64>::new(arch, rng)?;
        for p in net.params_mut() {
            p.bias.iter_mut().for_each(|b| *b = 0.1 + 0.2 * rng.uniform());
        }
        let m = 8;
        let x = Matrix::from_fn(net.architecture().input_size(), m, |_, _| rng.uniform() * 2.0 - 1.0);
        let targets: Vec<usize> = (0..m).map(|i| i % 3).collect();
        let biases: Vec<usize> = (0..m).map(|i| (i / 3) % 2).collect();
        parameters += net.parameter_count();
        worst = worst.max(network_error(&net, &x, &targets, &biases, &cfg.end, cfg.step)?);
    }
    Ok((worst, parameters))
}

/// Finite-difference verification of the regularizer gradient on random
/// feature batches and of the full objective on small networks.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.end.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let mut reg_worst = 0.0f64;
    for _ in 0..cfg.instances {
        let batch = random_batch(&mut rng, cfg);
        reg_worst = reg_worst.max(regularizer_error(&batch, &cfg.end, cfg.step)?);
    }
    let (net_worst, network_parameters) = check_networks(&mut rng, cfg)?;
    let disabled = EndConfig {
        alpha: 0.0,
        beta: 0.0,
        ..cfg.end
    };
    let batch = random_batch(&mut rng, cfg);
    let disabled_grad_norm = end_regularizer(&batch, &disabled)?.grad.frobenius_norm();
    Ok(GradcheckReport {
        instances: cfg.instances,
        regularizer_max_rel_error: reg_worst,
        network_max_rel_error: net_worst,
        network_parameters,
        disabled_grad_norm,
        regularizer_tolerance: cfg.regularizer_tolerance,
        network_tolerance: cfg.network_tolerance,
    })
}
