//! A small feed-forward network with hand-written backpropagation.
//!
//! Flat activations for a batch are `features x M` matrices (columns are
//! samples, as for the regularizer). Image activations use the layout
//! documented in [`conv`]. The network is generic over [`Real`]: `f64` for
//! gradient checks, `f32` for training.
//!
//! The output of the layer marked by [`Architecture::gamma`] is the feature
//! batch handed to the regularizer; [`Network::backward`] accepts an extra
//! gradient for it that is added to the gradient arriving from above.

mod arch;
pub mod checkpoint;
pub mod conv;
mod loss;
mod optim;

pub use arch::{conv_output_dims, Architecture, ClassifierInput, LayerSpec, Shape};
pub use loss::softmax_cross_entropy;
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};

use crate::error::{Error, Result};
use crate::linalg::{gemm_nn, gemm_nt, gemm_tn, Matrix, Real, Rng};
use conv::ConvGeometry;

/// Smoothing term of [`LayerSpec::L2Normalize`].
pub const L2_NORMALIZE_EPS: f64 = 1e-6;

/// Negative-side slope of [`LayerSpec::LeakyRelu`].
pub const LEAKY_SLOPE: f64 = 0.01;

/// Weights of one layer. Empty for parameter-free layers.
///
/// Dense weights are `outputs x inputs` row-major; conv weights are
/// `[out_channel][in_channel][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<F> {
    pub weight: Vec<F>,
    pub bias: Vec<F>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<F: Real = f32> {
    arch: Architecture,
    shapes: Vec<Shape>,
    params: Vec<LayerParams<F>>,
}

/// Activations cached by [`Network::forward`].
#[derive(Clone, Debug)]
pub struct ForwardTrace<F: Real> {
    batch: usize,
    /// `activations[0]` is the input in layer layout, `activations[l + 1]` the output of layer `l`.
    activations: Vec<Matrix<F>>,
    patches: Vec<Option<Matrix<F>>>,
    gamma: usize,
}

impl<F: Real> ForwardTrace<F> {
    /// Feature batch at the attachment layer, `N_gamma x M`.
    pub fn gamma_output(&self) -> &Matrix<F> {
        &self.activations[self.gamma + 1]
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn activation(&self, layer: usize) -> &Matrix<F> {
        &self.activations[layer + 1]
    }
}

/// Parameter gradients, laid out like [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub layers: Vec<LayerParams<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn tensors(&self) -> impl Iterator<Item = &[F]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .filter(|t| !t.is_empty())
    }

    pub fn flatten(&self) -> Vec<F> {
        self.tensors().flatten().copied().collect()
    }
}

impl<F: Real> Network<F> {
    /// Fresh network. Weights are drawn from `U(-sqrt(6/fan_in), sqrt(6/fan_in))`,
    /// biases start at zero.
    pub fn new(arch: Architecture, rng: &mut Rng) -> Result<Self> {
        let shapes = arch.shapes()?;
        arch.validate()?;
        let params = arch
            .layers
            .iter()
            .map(|layer| match layer.parameter_shapes() {
                Some((nw, nb)) => {
                    let bound = (6.0 / layer.fan_in() as f64).sqrt();
                    LayerParams {
                        weight: (0..nw)
                            .map(|_| F::of_f64((rng.uniform() * 2.0 - 1.0) * bound))
                            .collect(),
                        bias: vec![F::zero(); nb],
                    }
                }
                None => LayerParams {
                    weight: Vec::new(),
                    bias: Vec::new(),
                },
            })
            .collect();
        Ok(Self {
            arch,
            shapes,
            params,
        })
    }

    /// Network with explicit parameters; shapes must match the architecture.
    pub fn from_params(arch: Architecture, params: Vec<LayerParams<F>>) -> Result<Self> {
        let shapes = arch.shapes()?;
        arch.validate()?;
        if params.len() != arch.layers.len() {
            return Err(Error::Dimension(format!(
                "{} parameter sets for {} layers",
                params.len(),
                arch.layers.len()
            )));
        }
        for (i, (layer, p)) in arch.layers.iter().zip(&params).enumerate() {
            let (nw, nb) = layer.parameter_shapes().unwrap_or((0, 0));
            if p.weight.len() != nw || p.bias.len() != nb {
                return Err(Error::Dimension(format!(
                    "layer {i} expects {nw} weights and {nb} biases, got {} and {}",
                    p.weight.len(),
                    p.bias.len()
                )));
            }
        }
        Ok(Self {
            arch,
            shapes,
            params,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[LayerParams<F>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams<F>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.arch.parameter_count()
    }

    /// Parameter tensors in a fixed order: per layer, weight then bias.
    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<F>> {
        self.params
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .filter(|t| !t.is_empty())
    }

    pub fn flat_params(&self) -> Vec<F> {
        self.params
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias))
            .copied()
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[F]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count()
            )));
        }
        let mut it = values.iter().copied();
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn zero_gradients(&self) -> Gradients<F> {
        Gradients {
            layers: self
                .params
                .iter()
                .map(|p| LayerParams {
                    weight: vec![F::zero(); p.weight.len()],
                    bias: vec![F::zero(); p.bias.len()],
                })
                .collect(),
        }
    }

    fn geometry(&self, layer: usize) -> ConvGeometry {
        let (
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            },
            Shape::Image { height, width, .. },
            Shape::Image {
                height: out_height,
                width: out_width,
                ..
            },
        ) = (self.arch.layers[layer], self.shapes[layer], self.shapes[layer + 1])
        else {
            unreachable!("geometry requested for a non-conv layer")
        };
        ConvGeometry {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            height,
            width,
            out_height,
            out_width,
        }
    }

    /// Runs the batch `inputs` (`input_size x M`, image inputs in planar
    /// channel-height-width order per column) and returns `classes x M` logits.
    pub fn forward(&self, inputs: &Matrix<F>) -> Result<(Matrix<F>, ForwardTrace<F>)> {
        if inputs.rows() != self.arch.input_size() {
            return Err(Error::Dimension(format!(
                "network expects {} input features, got {}",
                self.arch.input_size(),
                inputs.rows()
            )));
        }
        let batch = inputs.cols();
        let mut activations = Vec::with_capacity(self.arch.layers.len() + 1);
        let mut patches = Vec::with_capacity(self.arch.layers.len());
        activations.push(to_layer_layout(inputs, self.arch.input));

        for (l, layer) in self.arch.layers.iter().enumerate() {
            let x = &activations[l];
            let p = &self.params[l];
            let mut cache = None;
            let out = match *layer {
                LayerSpec::Dense { inputs, outputs } => {
                    let mut out = Matrix::zeros(outputs, batch);
                    for (o, &b) in p.bias.iter().enumerate() {
                        out.row_mut(o).fill(b);
                    }
                    gemm_nn(outputs, inputs, batch, &p.weight, x.as_slice(), out.as_mut_slice());
                    out
                }
                LayerSpec::Conv2d { .. } => {
                    let geo = self.geometry(l);
                    let (out, pm) = conv::conv2d_forward(x, &p.weight, &p.bias, &geo, batch);
                    cache = Some(pm);
                    out
                }
                LayerSpec::Relu => x.map(|v| if v > F::zero() { v } else { F::zero() }),
                LayerSpec::LeakyRelu => {
                    let slope = F::of_f64(LEAKY_SLOPE);
                    x.map(|v| if v > F::zero() { v } else { v * slope })
                }
                LayerSpec::GlobalAvgPool => {
                    let area = x.cols() / batch.max(1);
                    let inv = F::one() / F::of_f64(area as f64);
                    Matrix::from_fn(x.rows(), batch, |c, m| {
                        x.row(c)[m * area..(m + 1) * area].iter().copied().sum::<F>() * inv
                    })
                }
                LayerSpec::Flatten => flatten(x, self.shapes[l], batch),
                LayerSpec::L2Normalize => {
                    let mut out = x.clone();
                    for m in 0..batch {
                        let s = smoothed_norm(x, m);
                        (0..x.rows()).for_each(|r| out[(r, m)] = x[(r, m)] / s);
                    }
                    out
                }
            };
            activations.push(out);
            patches.push(cache);
        }
        let logits = activations.last().unwrap().clone();
        Ok((
            logits,
            ForwardTrace {
                batch,
                activations,
                patches,
                gamma: self.arch.gamma,
            },
        ))
    }

    /// Backpropagates `grad_logits` (`dJ/dlogits`) and `grad_gamma` (an
    /// additional `dJ/dy` at the attachment layer) to every parameter.
    pub fn backward(
        &self,
        trace: &ForwardTrace<F>,
        grad_logits: &Matrix<F>,
        grad_gamma: &Matrix<F>,
    ) -> Result<Gradients<F>> {
        let batch = trace.batch;
        let out_shape = (self.arch.output_size(), batch);
        if grad_logits.shape() != out_shape {
            return Err(Error::Dimension(format!(
                "logit gradient is {:?}, expected {out_shape:?}",
                grad_logits.shape()
            )));
        }
        if grad_gamma.shape() != trace.gamma_output().shape() {
            return Err(Error::Dimension(format!(
                "feature gradient is {:?}, expected {:?}",
                grad_gamma.shape(),
                trace.gamma_output().shape()
            )));
        }

        let mut grads = self.zero_gradients();
        let mut upstream = grad_logits.clone();
        for l in (0..self.arch.layers.len()).rev() {
            if l == self.arch.gamma {
                upstream.add_assign(grad_gamma)?;
            }
            let need_input_grad = l > 0;
            if !need_input_grad && self.params[l].weight.is_empty() {
                break;
            }
            let x = &trace.activations[l];
            let p = &self.params[l];
            let g = &mut grads.layers[l];
            upstream = match self.arch.layers[l] {
                LayerSpec::Dense { inputs, outputs } => {
                    gemm_nt(outputs, batch, inputs, upstream.as_slice(), x.as_slice(), &mut g.weight);
                    for (o, gb) in g.bias.iter_mut().enumerate() {
                        *gb += upstream.row(o).iter().copied().sum::<F>();
                    }
                    if !need_input_grad {
                        break;
                    }
                    let mut dx = Matrix::zeros(inputs, batch);
                    gemm_tn(inputs, outputs, batch, &p.weight, upstream.as_slice(), dx.as_mut_slice());
                    dx
                }
                LayerSpec::Conv2d { .. } => {
                    let geo = self.geometry(l);
                    let patches = trace.patches[l].as_ref().expect("conv patches cached");
                    match conv::conv2d_backward(
                        &upstream,
                        patches,
                        &p.weight,
                        &mut g.weight,
                        &mut g.bias,
                        &geo,
                        batch,
                        need_input_grad,
                    ) {
                        Some(dx) => dx,
                        None => break,
                    }
                }
                LayerSpec::Relu => {
                    let mut dx = upstream;
                    dx.as_mut_slice()
                        .iter_mut()
                        .zip(x.as_slice())
                        .for_each(|(d, &v)| {
                            if v <= F::zero() {
                                *d = F::zero()
                            }
                        });
                    dx
                }
                LayerSpec::LeakyRelu => {
                    let slope = F::of_f64(LEAKY_SLOPE);
                    let mut dx = upstream;
                    dx.as_mut_slice()
                        .iter_mut()
                        .zip(x.as_slice())
                        .for_each(|(d, &v)| {
                            if v <= F::zero() {
                                *d *= slope
                            }
                        });
                    dx
                }
                LayerSpec::GlobalAvgPool => {
                    let area = x.cols() / batch.max(1);
                    let inv = F::one() / F::of_f64(area as f64);
                    Matrix::from_fn(x.rows(), x.cols(), |c, col| upstream[(c, col / area)] * inv)
                }
                LayerSpec::Flatten => unflatten(&upstream, self.shapes[l], batch),
                LayerSpec::L2Normalize => {
                    let y = &trace.activations[l + 1];
                    let mut dx = upstream;
                    for m in 0..batch {
                        let s = smoothed_norm(x, m);
                        let proj = (0..y.rows()).map(|r| y[(r, m)] * dx[(r, m)]).sum::<F>();
                        for r in 0..y.rows() {
                            dx[(r, m)] = (dx[(r, m)] - y[(r, m)] * proj) / s;
                        }
                    }
                    dx
                }
            };
        }
        Ok(grads)
    }

    /// Predicted class per column of `inputs`, processed in chunks of `chunk` samples.
    pub fn predict(&self, inputs: &Matrix<F>, chunk: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(inputs.cols());
        let chunk = chunk.max(1);
        let mut start = 0;
        while start < inputs.cols() {
            let end = (start + chunk).min(inputs.cols());
            let idx: Vec<usize> = (start..end).collect();
            let (logits, _) = self.forward(&inputs.select_columns(&idx))?;
            out.extend(argmax_columns(&logits));
            start = end;
        }
        Ok(out)
    }
}

/// `sqrt(|x_m|^2 + eps^2)`, so an all-zero column maps to zero instead of NaN.
fn smoothed_norm<F: Real>(x: &Matrix<F>, m: usize) -> F {
    let eps = F::of_f64(L2_NORMALIZE_EPS);
    ((0..x.rows()).map(|r| x[(r, m)] * x[(r, m)]).sum::<F>() + eps * eps).sqrt()
}

pub fn argmax_columns<F: Real>(logits: &Matrix<F>) -> Vec<usize> {
    (0..logits.cols())
        .map(|m| {
            let mut best = 0;
            for r in 1..logits.rows() {
                if logits[(r, m)] > logits[(best, m)] {
                    best = r;
                }
            }
            best
        })
        .collect()
}

fn to_layer_layout<F: Real>(inputs: &Matrix<F>, shape: Shape) -> Matrix<F> {
    match shape {
        Shape::Flat(_) => inputs.clone(),
        Shape::Image {
            channels,
            height,
            width,
        } => unflatten(inputs, Shape::Image {
            channels,
            height,
            width,
        }, inputs.cols()),
    }
}

/// Image layout `C x (M*H*W)` to flat `(C*H*W) x M`.
fn flatten<F: Real>(x: &Matrix<F>, shape: Shape, batch: usize) -> Matrix<F> {
    match shape {
        Shape::Flat(_) => x.clone(),
        Shape::Image { channels, .. } => {
            let area = shape.size() / channels;
            let mut out = Matrix::zeros(shape.size(), batch);
            for c in 0..channels {
                let row = x.row(c);
                for m in 0..batch {
                    for p in 0..area {
                        out[(c * area + p, m)] = row[m * area + p];
                    }
                }
            }
            out
        }
    }
}

/// Inverse of [`flatten`].
fn unflatten<F: Real>(x: &Matrix<F>, shape: Shape, batch: usize) -> Matrix<F> {
    match shape {
        Shape::Flat(_) => x.clone(),
        Shape::Image { channels, .. } => {
            let area = shape.size() / channels;
            let mut out = Matrix::zeros(channels, batch * area);
            for c in 0..channels {
                for p in 0..area {
                    let src = x.row(c * area + p);
                    let dst = out.row_mut(c);
                    for m in 0..batch {
                        dst[m * area + p] = src[m];
                    }
                }
            }
            out
        }
    }
}
