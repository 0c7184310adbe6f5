use super::conv::{conv_out_size, Conv2d};
use super::dropout::Dropout;
use super::lstm::Lstm;
use super::maxout::MaxoutFc;
use super::param::Parameter;
use super::softmax::SoftmaxOutput;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Uniform initialisation half-width for every weight matrix.
pub const INIT_SCALE: f64 = 0.08;
/// Initial LSTM forget-gate bias.
pub const FORGET_BIAS: f64 = 1.0;

/// Declarative description of one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerSpec {
    MaxoutFc {
        input_dim: usize,
        output_dim: usize,
        pieces: usize,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        in_height: usize,
        in_width: usize,
        kernel: usize,
        stride: usize,
    },
    Lstm {
        input_dim: usize,
        hidden: usize,
    },
    Dropout {
        p: f64,
    },
    SoftmaxXent {
        input_dim: usize,
        classes: usize,
    },
}

impl LayerSpec {
    pub fn maxout(input_dim: usize, output_dim: usize) -> Self {
        LayerSpec::MaxoutFc {
            input_dim,
            output_dim,
            pieces: 2,
        }
    }

    /// 5x5, stride-2 convolution.
    pub fn conv(in_channels: usize, out_channels: usize, in_size: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            in_height: in_size,
            in_width: in_size,
            kernel: 5,
            stride: 2,
        }
    }

    pub fn lstm(input_dim: usize, hidden: usize) -> Self {
        LayerSpec::Lstm { input_dim, hidden }
    }

    pub fn softmax(input_dim: usize) -> Self {
        LayerSpec::SoftmaxXent { input_dim, classes: 2 }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. })
    }

    /// Input width, or `None` for width-agnostic layers (dropout).
    pub fn input_dim(&self) -> Option<usize> {
        match *self {
            LayerSpec::MaxoutFc { input_dim, .. }
            | LayerSpec::Lstm { input_dim, .. }
            | LayerSpec::SoftmaxXent { input_dim, .. } => Some(input_dim),
            LayerSpec::Conv2d {
                in_channels,
                in_height,
                in_width,
                ..
            } => Some(in_channels * in_height * in_width),
            LayerSpec::Dropout { .. } => None,
        }
    }

    /// Flattened output width, or `None` for dropout (same as input).
    pub fn output_dim(&self) -> Option<usize> {
        match *self {
            LayerSpec::MaxoutFc { output_dim, .. } => Some(output_dim),
            LayerSpec::Lstm { hidden, .. } => Some(hidden),
            LayerSpec::SoftmaxXent { classes, .. } => Some(classes),
            LayerSpec::Conv2d {
                out_channels,
                in_height,
                in_width,
                kernel,
                stride,
                ..
            } => {
                let h = conv_out_size(in_height, kernel, stride)?;
                let w = conv_out_size(in_width, kernel, stride)?;
                Some(out_channels * h * w)
            }
            LayerSpec::Dropout { .. } => None,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::MaxoutFc {
                input_dim,
                output_dim,
                pieces,
            } => (input_dim + 1) * output_dim * pieces,
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * (in_channels * kernel * kernel + 1),
            LayerSpec::Lstm { input_dim, hidden } => 4 * hidden * (input_dim + hidden + 1),
            LayerSpec::SoftmaxXent { input_dim, classes } => (input_dim + 1) * classes,
            LayerSpec::Dropout { .. } => 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LayerSpec::Dropout { p } if !(0.0..1.0).contains(&p) => {
                Err(Error::Input(format!("dropout rate {p} outside [0, 1)")))
            }
            LayerSpec::MaxoutFc { pieces: 0, .. } => Err(Error::Input("maxout needs at least one piece".into())),
            LayerSpec::Conv2d { .. } if self.output_dim().is_none() => {
                Err(Error::Dimension(format!("conv input smaller than kernel: {self:?}")))
            }
            _ => Ok(()),
        }
    }

    /// Builds the layer with freshly initialised parameters.
    pub fn instantiate<R: Rng>(&self, prefix: &str, rng: &mut R) -> Result<Layer> {
        self.validate()?;
        let s = INIT_SCALE;
        Ok(match *self {
            LayerSpec::MaxoutFc {
                input_dim,
                output_dim,
                pieces,
            } => Layer::MaxoutFc(MaxoutFc::new(
                input_dim,
                output_dim,
                pieces,
                Parameter::uniform(format!("{prefix}.weight"), &[input_dim, output_dim * pieces], s, rng),
                Parameter::zeros(format!("{prefix}.bias"), &[output_dim * pieces]),
            )),
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                in_height,
                in_width,
                kernel,
                stride,
            } => Layer::Conv2d(Conv2d::new(
                in_channels,
                out_channels,
                kernel,
                stride,
                in_height,
                in_width,
                Parameter::uniform(
                    format!("{prefix}.weight"),
                    &[out_channels, in_channels * kernel * kernel],
                    s,
                    rng,
                ),
                Parameter::zeros(format!("{prefix}.bias"), &[out_channels]),
            )?),
            LayerSpec::Lstm { input_dim, hidden } => {
                let w_input = Parameter::uniform(format!("{prefix}.w_input"), &[input_dim, 4 * hidden], s, rng);
                let w_hidden = Parameter::uniform(format!("{prefix}.w_hidden"), &[hidden, 4 * hidden], s, rng);
                let mut bias = Parameter::zeros(format!("{prefix}.bias"), &[4 * hidden]);
                bias.value.data_mut()[hidden..2 * hidden].fill(FORGET_BIAS);
                Layer::Lstm(Lstm::new(input_dim, hidden, w_input, w_hidden, bias))
            }
            LayerSpec::Dropout { p } => Layer::Dropout(Dropout::new(p)),
            LayerSpec::SoftmaxXent { input_dim, classes } => Layer::Output(SoftmaxOutput::new(
                input_dim,
                classes,
                Parameter::uniform(format!("{prefix}.weight"), &[input_dim, classes], s, rng),
                Parameter::zeros(format!("{prefix}.bias"), &[classes]),
            )),
        })
    }
}

/// A layer instance with parameters and backward caches.
#[derive(Clone, Debug)]
pub enum Layer {
    MaxoutFc(MaxoutFc),
    Conv2d(Conv2d),
    Lstm(Lstm),
    Dropout(Dropout),
    Output(SoftmaxOutput),
}

/// Per-call forward settings.
pub struct Pass<'a, R: Rng> {
    pub training: bool,
    pub record: bool,
    pub steps: usize,
    pub batch: usize,
    pub rng: &'a mut R,
}

impl Layer {
    pub fn forward<R: Rng>(&mut self, x: Tensor, pass: &mut Pass<'_, R>) -> Result<Tensor> {
        match self {
            Layer::MaxoutFc(l) => l.forward(x, pass.record),
            Layer::Conv2d(l) => l.forward(x, pass.record),
            Layer::Lstm(l) => l.forward(x, pass.steps, pass.batch, pass.record),
            Layer::Dropout(l) => Ok(l.forward(x, pass.training, pass.rng)),
            Layer::Output(l) => l.forward(x, pass.record),
        }
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        match self {
            Layer::MaxoutFc(l) => l.backward(dy, need_dx),
            Layer::Conv2d(l) => l.backward(dy, need_dx),
            Layer::Lstm(l) => l.backward(dy, need_dx),
            Layer::Dropout(l) => need_dx.then(|| l.backward(dy)),
            Layer::Output(l) => l.backward(dy, need_dx),
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        match self {
            Layer::MaxoutFc(l) => vec![&l.weight, &l.bias],
            Layer::Conv2d(l) => vec![&l.weight, &l.bias],
            Layer::Lstm(l) => vec![&l.w_input, &l.w_hidden, &l.bias],
            Layer::Dropout(_) => vec![],
            Layer::Output(l) => vec![&l.weight, &l.bias],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        match self {
            Layer::MaxoutFc(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Conv2d(l) => vec![&mut l.weight, &mut l.bias],
            Layer::Lstm(l) => vec![&mut l.w_input, &mut l.w_hidden, &mut l.bias],
            Layer::Dropout(_) => vec![],
            Layer::Output(l) => vec![&mut l.weight, &mut l.bias],
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(self, Layer::Conv2d(_))
    }

    /// Conv input shape `[c, h, w]` if this is a conv layer.
    pub(crate) fn conv_input(&self) -> Option<[usize; 3]> {
        match self {
            Layer::Conv2d(c) => Some([c.in_channels, c.in_height, c.in_width]),
            _ => None,
        }
    }

    /// Folds the recorded piecewise-linear switching pattern into `hash`.
    pub(crate) fn hash_switches(&self, hash: &mut u64) {
        let mut mix = |v: u64| {
            *hash ^= v;
            *hash = hash.wrapping_mul(0x100_0000_01b3);
        };
        match self {
            Layer::MaxoutFc(l) => l.switch_pattern().iter().for_each(|&v| mix(v as u64)),
            Layer::Conv2d(l) => l.active_mask().for_each(|v| mix(v as u64)),
            _ => {}
        }
    }
}
