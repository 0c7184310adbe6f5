use super::graph::{GraphInput, ModelGraph, Objective, StreamData};
use super::softmax::{mse, softmax_xent};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Loss value and its gradient with respect to the graph output.
pub struct LossGrad {
    pub loss: f64,
    pub d_output: Tensor,
}

impl ModelGraph {
    /// Evaluates the graph's objective on `output` rows. `labels` is used for
    /// classification; reconstruction targets come from the input stream.
    pub fn objective_loss(
        &self,
        output: &Tensor,
        input: &GraphInput,
        labels: &[u8],
        mask: Option<&[f64]>,
    ) -> Result<LossGrad> {
        match self.spec().objective {
            Objective::Classify => {
                let out = softmax_xent(output, labels, mask)?;
                Ok(LossGrad {
                    loss: out.loss,
                    d_output: out.dlogits,
                })
            }
            Objective::Reconstruct { stream } => match &input.streams[stream] {
                StreamData::Sequence(target) => {
                    let (loss, d_output) = mse(output, target, mask)?;
                    Ok(LossGrad { loss, d_output })
                }
                StreamData::Frames { .. } => Err(Error::Input("cannot reconstruct a frame stream".into())),
            },
        }
    }
}
