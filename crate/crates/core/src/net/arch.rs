use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sample activation shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Flat(usize),
    /// Planar channel-height-width image.
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    pub fn size(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Image {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Relu,
    /// `max(x, LEAKY_SLOPE * x)`.
    LeakyRelu,
    GlobalAvgPool,
    Flatten,
    /// Scales each flat column to unit length, `x / sqrt(|x|^2 + eps^2)`.
    L2Normalize,
}

impl LayerSpec {
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        match (*self, input) {
            (LayerSpec::Dense { inputs, outputs }, Shape::Flat(n)) if n == inputs => {
                Ok(Shape::Flat(outputs))
            }
            (
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                },
                Shape::Image {
                    channels,
                    height,
                    width,
                },
            ) if channels == in_channels => {
                let (oh, ow) = conv_output_dims(height, width, kernel, stride, padding)?;
                Ok(Shape::Image {
                    channels: out_channels,
                    height: oh,
                    width: ow,
                })
            }
            (LayerSpec::Relu | LayerSpec::LeakyRelu, s) => Ok(s),
            (LayerSpec::GlobalAvgPool, Shape::Image { channels, .. }) => Ok(Shape::Flat(channels)),
            (LayerSpec::Flatten, s) => Ok(Shape::Flat(s.size())),
            (LayerSpec::L2Normalize, Shape::Flat(n)) => Ok(Shape::Flat(n)),
            (layer, s) => Err(Error::Dimension(format!("{layer:?} cannot take input {s:?}"))),
        }
    }

    pub fn parameter_shapes(&self) -> Option<(usize, usize)> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => Some((outputs * inputs, outputs)),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => Some((out_channels * in_channels * kernel * kernel, out_channels)),
            _ => None,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv2d {
                in_channels, kernel, ..
            } => in_channels * kernel * kernel,
            _ => 0,
        }
    }
}

/// Output height and width of a convolution; the usual floor rule.
pub fn conv_output_dims(
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    if kernel == 0 || stride == 0 {
        return Err(Error::Dimension("conv kernel and stride must be positive".into()));
    }
    let (ph, pw) = (height + 2 * padding, width + 2 * padding);
    if ph < kernel || pw < kernel {
        return Err(Error::Dimension(format!(
            "{kernel}x{kernel} kernel does not fit a padded {ph}x{pw} input"
        )));
    }
    Ok(((ph - kernel) / stride + 1, (pw - kernel) / stride + 1))
}

/// What the classifier of [`Architecture::desk_conv_with`] reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassifierInput {
    /// The feature layer output as is.
    Raw,
    /// The feature layer output scaled to unit length, the same direction the
    /// regularizer sees.
    Normalized,
}

/// Layer stack plus the index of the layer whose output feeds the regularizer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    /// The output of `layers[gamma]` is the feature batch `y`.
    pub gamma: usize,
}

impl Architecture {
    pub fn new(input: Shape, layers: Vec<LayerSpec>, gamma: usize) -> Result<Self> {
        let arch = Self {
            input,
            layers,
            gamma,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Shapes of every activation: `[input, out(layer 0), ..., out(last)]`.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let mut shapes = vec![self.input];
        for layer in &self.layers {
            let next = layer.output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Dimension("architecture has no layers".into()));
        }
        if self.gamma >= self.layers.len() {
            return Err(Error::Dimension(format!(
                "gamma index {} out of range for {} layers",
                self.gamma,
                self.layers.len()
            )));
        }
        let shapes = self.shapes()?;
        if !matches!(shapes[self.gamma + 1], Shape::Flat(_)) {
            return Err(Error::Dimension(
                "the gamma layer must produce a flat feature vector".into(),
            ));
        }
        if !matches!(shapes.last(), Some(Shape::Flat(_))) {
            return Err(Error::Dimension("the network must end in flat logits".into()));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.input.size()
    }

    pub fn gamma_size(&self) -> usize {
        self.shapes().expect("validated")[self.gamma + 1].size()
    }

    pub fn output_size(&self) -> usize {
        self.shapes().expect("validated").last().unwrap().size()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .filter_map(LayerSpec::parameter_shapes)
            .map(|(w, b)| w + b)
            .sum()
    }

    /// Two strided 7x7 convolutions, global average pooling (the feature
    /// layer) and a linear classifier on the L2-normalized features.
    ///
    /// `conv(c->8, 7x7, s2, p3) - relu - conv(8->16, 7x7, s2, p3) - leaky_relu - gap - l2norm - dense(16->classes)`
    ///
    /// The second activation is leaky so that a sample's pooled features
    /// cannot all be exactly zero.
    pub fn desk_conv(channels: usize, height: usize, width: usize, classes: usize) -> Result<Self> {
        Self::desk_conv_with(channels, height, width, classes, ClassifierInput::Normalized)
    }

    pub fn desk_conv_with(
        channels: usize,
        height: usize,
        width: usize,
        classes: usize,
        classifier: ClassifierInput,
    ) -> Result<Self> {
        let mut layers = vec![
            LayerSpec::Conv2d {
                in_channels: channels,
                out_channels: 8,
                kernel: 7,
                stride: 2,
                padding: 3,
            },
            LayerSpec::Relu,
            LayerSpec::Conv2d {
                in_channels: 8,
                out_channels: 16,
                kernel: 7,
                stride: 2,
                padding: 3,
            },
            LayerSpec::LeakyRelu,
            LayerSpec::GlobalAvgPool,
        ];
        if classifier == ClassifierInput::Normalized {
            layers.push(LayerSpec::L2Normalize);
        }
        layers.push(LayerSpec::Dense {
            inputs: 16,
            outputs: classes,
        });
        Self::new(
            Shape::Image {
                channels,
                height,
                width,
            },
            layers,
            4,
        )
    }

    /// Dense layers with ReLU between them; the features are the output of
    /// the last hidden ReLU.
    pub fn mlp(inputs: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Dimension("mlp needs at least one hidden layer".into()));
        }
        let mut layers = Vec::new();
        let mut width = inputs;
        for &h in hidden {
            layers.push(LayerSpec::Dense {
                inputs: width,
                outputs: h,
            });
            layers.push(LayerSpec::Relu);
            width = h;
        }
        let gamma = layers.len() - 1;
        layers.push(LayerSpec::Dense {
            inputs: width,
            outputs: classes,
        });
        Self::new(Shape::Flat(inputs), layers, gamma)
    }
}
