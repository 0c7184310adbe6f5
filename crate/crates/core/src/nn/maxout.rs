use super::gemm::{gemm, Op};
use super::param::Parameter;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Fully connected maxout layer: each output unit is the max over `pieces`
/// affine forms of the input.
///
/// Weights are stored `[in, out * pieces]` with piece `p` of unit `j` in
/// column `j * pieces + p`.
#[derive(Clone, Debug)]
pub struct MaxoutFc {
    pub input_dim: usize,
    pub output_dim: usize,
    pub pieces: usize,
    pub weight: Parameter,
    pub bias: Parameter,
    input: Option<Tensor>,
    argmax: Vec<u32>,
}

impl MaxoutFc {
    pub fn new(input_dim: usize, output_dim: usize, pieces: usize, weight: Parameter, bias: Parameter) -> Self {
        MaxoutFc {
            input_dim,
            output_dim,
            pieces,
            weight,
            bias,
            input: None,
            argmax: Vec::new(),
        }
    }

    pub fn forward(&mut self, x: Tensor, record: bool) -> Result<Tensor> {
        if x.row_len() != self.input_dim || x.shape().len() != 2 {
            return Err(Error::Dimension(format!(
                "maxout expects [n, {}], got {:?}",
                self.input_dim,
                x.shape()
            )));
        }
        let n = x.rows();
        let wide = self.output_dim * self.pieces;
        let mut z = vec![0.0; n * wide];
        for row in z.chunks_exact_mut(wide) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(n, self.input_dim, wide, 1.0, x.data(), Op::N, self.weight.value.data(), Op::N, 1.0, &mut z);

        let mut out = vec![0.0; n * self.output_dim];
        if record {
            self.argmax.clear();
            self.argmax.resize(n * self.output_dim, 0);
        }
        for (r, zrow) in z.chunks_exact(wide).enumerate() {
            for j in 0..self.output_dim {
                let pieces = &zrow[j * self.pieces..(j + 1) * self.pieces];
                let mut best = 0;
                for p in 1..self.pieces {
                    if pieces[p] > pieces[best] {
                        best = p;
                    }
                }
                out[r * self.output_dim + j] = pieces[best];
                if record {
                    self.argmax[r * self.output_dim + j] = best as u32;
                }
            }
        }
        if record {
            self.input = Some(x);
        }
        Tensor::from_vec(&[n, self.output_dim], out)
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let x = self.input.as_ref().expect("maxout backward without recorded forward");
        let n = x.rows();
        let wide = self.output_dim * self.pieces;
        let mut dz = vec![0.0; n * wide];
        for r in 0..n {
            for j in 0..self.output_dim {
                let p = self.argmax[r * self.output_dim + j] as usize;
                dz[r * wide + j * self.pieces + p] = dy.data()[r * self.output_dim + j];
            }
        }
        if !self.weight.frozen {
            gemm(self.input_dim, n, wide, 1.0, x.data(), Op::T, &dz, Op::N, 1.0, self.weight.grad.data_mut());
        }
        if !self.bias.frozen {
            let g = self.bias.grad.data_mut();
            for row in dz.chunks_exact(wide) {
                for (a, b) in g.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        need_dx.then(|| {
            let mut dx = vec![0.0; n * self.input_dim];
            gemm(n, wide, self.input_dim, 1.0, &dz, Op::N, self.weight.value.data(), Op::T, 0.0, &mut dx);
            Tensor::from_vec(&[n, self.input_dim], dx).expect("shape")
        })
    }

    pub(crate) fn switch_pattern(&self) -> &[u32] {
        &self.argmax
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(input: usize, output: usize, k: usize, w: Vec<f64>, b: Vec<f64>) -> MaxoutFc {
        MaxoutFc::new(
            input,
            output,
            k,
            Parameter::new("w", Tensor::from_vec(&[input, output * k], w).unwrap()),
            Parameter::new("b", Tensor::from_vec(&[output * k], b).unwrap()),
        )
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut l = layer(3, 2, 2, vec![0.0; 12], vec![0.0; 4]);
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.1, -9.0]).unwrap();
        let y = l.forward(x, false).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_pieces_give_absolute_value() {
        let mut l = layer(1, 1, 2, vec![1.0, -1.0], vec![0.0, 0.0]);
        let y = l.forward(Tensor::from_vec(&[1, 1], vec![-3.0]).unwrap(), false).unwrap();
        assert_eq!(y.data(), &[3.0]);
    }

    #[test]
    fn matches_hand_evaluation_with_seeded_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let w = Parameter::uniform("w", &[2, 2], 1.0, &mut rng);
        let b = Parameter::uniform("b", &[2], 1.0, &mut rng);
        let (wv, bv) = (w.value.data().to_vec(), b.value.data().to_vec());
        let mut l = MaxoutFc::new(2, 1, 2, w, b);
        let x = [0.5, -0.2];
        // piece p uses column p of the [2, 2] weight matrix
        let piece = |p: usize| wv[p] * x[0] + wv[2 + p] * x[1] + bv[p];
        let want = piece(0).max(piece(1));
        let y = l.forward(Tensor::from_vec(&[1, 2], x.to_vec()).unwrap(), false).unwrap();
        assert!((y.data()[0] - want).abs() < 1e-15);
    }

    #[test]
    fn wrong_width_is_dimension_error() {
        let mut l = layer(3, 1, 2, vec![0.0; 6], vec![0.0; 2]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(l.forward(x, false), Err(Error::Dimension(_))));
    }
}
