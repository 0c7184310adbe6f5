use super::gemm::{gemm, Op};
use super::param::Parameter;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Affine projection to class logits; paired with [`softmax_xent`] as the
/// network's output layer.
#[derive(Clone, Debug)]
pub struct SoftmaxOutput {
    pub input_dim: usize,
    pub classes: usize,
    pub weight: Parameter,
    pub bias: Parameter,
    input: Option<Tensor>,
}

impl SoftmaxOutput {
    pub fn new(input_dim: usize, classes: usize, weight: Parameter, bias: Parameter) -> Self {
        SoftmaxOutput {
            input_dim,
            classes,
            weight,
            bias,
            input: None,
        }
    }

    pub fn forward(&mut self, x: Tensor, record: bool) -> Result<Tensor> {
        if x.shape().len() != 2 || x.row_len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "output layer expects [n, {}], got {:?}",
                self.input_dim,
                x.shape()
            )));
        }
        let n = x.rows();
        let mut z = vec![0.0; n * self.classes];
        for row in z.chunks_exact_mut(self.classes) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(n, self.input_dim, self.classes, 1.0, x.data(), Op::N, self.weight.value.data(), Op::N, 1.0, &mut z);
        if record {
            self.input = Some(x);
        }
        Tensor::from_vec(&[n, self.classes], z)
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let x = self.input.as_ref().expect("output backward without recorded forward");
        let n = x.rows();
        if !self.weight.frozen {
            gemm(self.input_dim, n, self.classes, 1.0, x.data(), Op::T, dy.data(), Op::N, 1.0, self.weight.grad.data_mut());
        }
        if !self.bias.frozen {
            let g = self.bias.grad.data_mut();
            for row in dy.data().chunks_exact(self.classes) {
                for (a, b) in g.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        need_dx.then(|| {
            let mut dx = vec![0.0; n * self.input_dim];
            gemm(n, self.classes, self.input_dim, 1.0, dy.data(), Op::N, self.weight.value.data(), Op::T, 0.0, &mut dx);
            Tensor::from_vec(&[n, self.input_dim], dx).expect("shape")
        })
    }
}

/// Row-wise softmax probabilities and mean cross-entropy over rows whose
/// mask weight is non-zero.
#[derive(Clone, Debug)]
pub struct XentOutput {
    pub probs: Tensor,
    pub loss: f64,
    /// Gradient of `loss` with respect to the logits.
    pub dlogits: Tensor,
}

pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let c = logits.row_len();
    let mut p = logits.clone();
    for row in p.data_mut().chunks_exact_mut(c) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    p
}

/// Softmax cross-entropy against integer labels. `mask` (one weight per row,
/// `None` meaning all ones) excludes padded rows from both loss and gradient.
pub fn softmax_xent(logits: &Tensor, labels: &[u8], mask: Option<&[f64]>) -> Result<XentOutput> {
    let n = logits.rows();
    let c = logits.row_len();
    if labels.len() != n {
        return Err(Error::Input(format!("{} labels for {n} rows", labels.len())));
    }
    if let Some(bad) = labels.iter().find(|&&l| l as usize >= c) {
        return Err(Error::Input(format!("label {bad} outside 0..{c}")));
    }
    let probs = softmax_rows(logits);
    let weight = |i: usize| mask.map_or(1.0, |m| m[i]);
    let total: f64 = (0..n).map(weight).sum();
    let mut dlogits = probs.clone();
    let mut loss = 0.0;
    for i in 0..n {
        let w = weight(i);
        let row = &mut dlogits.data_mut()[i * c..(i + 1) * c];
        if w == 0.0 || total == 0.0 {
            row.fill(0.0);
            continue;
        }
        let lbl = labels[i] as usize;
        let lse = {
            let z = logits.row(i);
            let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
        };
        loss += w * (lse - logits.row(i)[lbl]);
        row[lbl] -= 1.0;
        for v in row.iter_mut() {
            *v *= w / total;
        }
    }
    if total > 0.0 {
        loss /= total;
    }
    Ok(XentOutput { probs, loss, dlogits })
}

/// Mean squared error over all unmasked entries, with its gradient.
pub fn mse(pred: &Tensor, target: &Tensor, mask: Option<&[f64]>) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension(format!(
            "mse of {:?} against {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let d = pred.row_len();
    let n = pred.rows();
    let weight = |i: usize| mask.map_or(1.0, |m| m[i]);
    let total: f64 = (0..n).map(weight).sum::<f64>() * d as f64;
    let mut grad = Tensor::zeros(pred.shape());
    let mut loss = 0.0;
    if total == 0.0 {
        return Ok((0.0, grad));
    }
    for i in 0..n {
        let w = weight(i);
        for j in 0..d {
            let e = pred.data()[i * d + j] - target.data()[i * d + j];
            loss += w * e * e;
            grad.data_mut()[i * d + j] = 2.0 * w * e / total;
        }
    }
    Ok((loss / total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let z = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        let out = softmax_xent(&z, &[1], None).unwrap();
        assert_eq!(out.probs.data(), &[0.5, 0.5]);
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn closed_form_loss() {
        let z = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        let out = softmax_xent(&z, &[0], None).unwrap();
        let want = (1.0 + std::f64::consts::E).ln();
        assert!((out.loss - want).abs() < 1e-14);
        assert!((out.loss - 1.3133).abs() < 1e-4);
    }

    #[test]
    fn shift_invariance_and_row_sums() {
        let z = Tensor::from_vec(&[3, 2], vec![0.3, -1.2, 5.0, 4.0, -7.0, 2.5]).unwrap();
        let shifted = Tensor::from_vec(&[3, 2], z.data().iter().map(|v| v + 123.25).collect()).unwrap();
        let a = softmax_xent(&z, &[0, 1, 1], None).unwrap();
        let b = softmax_xent(&shifted, &[0, 1, 1], None).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-12);
        for (x, y) in a.probs.data().iter().zip(b.probs.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        for row in a.probs.data().chunks(2) {
            assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range_is_input_error() {
        let z = Tensor::from_vec(&[1, 2], vec![0.0, 0.0]).unwrap();
        assert!(matches!(softmax_xent(&z, &[2], None), Err(Error::Input(_))));
    }

    #[test]
    fn masked_rows_do_not_contribute() {
        let z = Tensor::from_vec(&[2, 2], vec![0.5, -0.5, 9.0, -9.0]).unwrap();
        let masked = softmax_xent(&z, &[1, 1], Some(&[1.0, 0.0])).unwrap();
        let single = softmax_xent(&Tensor::from_vec(&[1, 2], vec![0.5, -0.5]).unwrap(), &[1], None).unwrap();
        assert_eq!(masked.loss, single.loss);
        assert_eq!(&masked.dlogits.data()[2..], &[0.0, 0.0]);
    }
}
