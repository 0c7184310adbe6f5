//! Minimal neural network toolkit: tensors, layers with explicit backward
//! passes, subnet graphs, ADAM and finite-difference checking.

mod adam;
mod conv;
mod dropout;
pub mod gemm;
mod gradcheck;
mod graph;
mod layer;
mod lstm;
mod maxout;
mod objective;
mod param;
pub mod serialize;
mod softmax;
mod tensor;

pub use adam::{adam_step, clip_global_norm, AdamConfig};
pub use conv::{conv_out_size, Conv2d};
pub use dropout::{dropout_apply, Dropout};
pub use gradcheck::{grad_check, grad_check_graph, relative_error, GraphCheckReport, GRAD_FLOOR};
pub use graph::{GraphInput, GraphSpec, ModelGraph, Objective, Source, StreamData, StreamKind, StreamSpec, SubnetSpec};
pub use layer::{Layer, LayerSpec, Pass, FORGET_BIAS, INIT_SCALE};
pub use lstm::Lstm;
pub use maxout::MaxoutFc;
pub use objective::LossGrad;
pub use param::Parameter;
pub use softmax::{mse, softmax_rows, softmax_xent, SoftmaxOutput, XentOutput};
pub use tensor::Tensor;
