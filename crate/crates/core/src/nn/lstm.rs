//! Unidirectional LSTM layer with full backpropagation through time.
//!
//! Sequences are time-major and flattened: row `t * batch + b` holds step `t`
//! of sequence `b`. Gate columns are laid out `[i | f | g | o]`, each `hidden`
//! wide. States start at zero for every call.

use super::gemm::{gemm, Op};
use super::param::Parameter;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Lstm {
    pub input_dim: usize,
    pub hidden: usize,
    /// `[input_dim, 4 * hidden]`
    pub w_input: Parameter,
    /// `[hidden, 4 * hidden]`
    pub w_hidden: Parameter,
    /// `[4 * hidden]`
    pub bias: Parameter,
    cache: Option<LstmCache>,
}

#[derive(Clone, Debug)]
struct LstmCache {
    steps: usize,
    batch: usize,
    input: Tensor,
    gates: Vec<f64>,
    cell: Vec<f64>,
    cell_tanh: Vec<f64>,
    hidden: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Lstm {
    pub fn new(input_dim: usize, hidden: usize, w_input: Parameter, w_hidden: Parameter, bias: Parameter) -> Self {
        Lstm {
            input_dim,
            hidden,
            w_input,
            w_hidden,
            bias,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: Tensor, steps: usize, batch: usize, record: bool) -> Result<Tensor> {
        if x.shape().len() != 2 || x.row_len() != self.input_dim || x.rows() != steps * batch {
            return Err(Error::Dimension(format!(
                "lstm expects [{}x{}, {}], got {:?}",
                steps,
                batch,
                self.input_dim,
                x.shape()
            )));
        }
        let h = self.hidden;
        let g4 = 4 * h;
        let rows = steps * batch;
        let mut gates = vec![0.0; rows * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm(rows, self.input_dim, g4, 1.0, x.data(), Op::N, self.w_input.value.data(), Op::N, 1.0, &mut gates);

        let mut cell = vec![0.0; rows * h];
        let mut cell_tanh = vec![0.0; rows * h];
        let mut hidden = vec![0.0; rows * h];
        for t in 0..steps {
            let cur = t * batch;
            if t > 0 {
                let (prev_h, _) = hidden.split_at(cur * h);
                let prev_h = &prev_h[(cur - batch) * h..];
                gemm(
                    batch,
                    h,
                    g4,
                    1.0,
                    prev_h,
                    Op::N,
                    self.w_hidden.value.data(),
                    Op::N,
                    1.0,
                    &mut gates[cur * g4..(cur + batch) * g4],
                );
            }
            for b in 0..batch {
                let r = cur + b;
                let z = &mut gates[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let i = sigmoid(z[j]);
                    let f = sigmoid(z[h + j]);
                    let g = z[2 * h + j].tanh();
                    let o = sigmoid(z[3 * h + j]);
                    z[j] = i;
                    z[h + j] = f;
                    z[2 * h + j] = g;
                    z[3 * h + j] = o;
                    let c_prev = if t > 0 { cell[(r - batch) * h + j] } else { 0.0 };
                    let c = f * c_prev + i * g;
                    let tc = c.tanh();
                    cell[r * h + j] = c;
                    cell_tanh[r * h + j] = tc;
                    hidden[r * h + j] = o * tc;
                }
            }
        }
        if !cell.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite LSTM cell state".into()));
        }
        let out = Tensor::from_vec(&[rows, h], hidden.clone())?;
        if record {
            self.cache = Some(LstmCache {
                steps,
                batch,
                input: x,
                gates,
                cell,
                cell_tanh,
                hidden,
            });
        }
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor, need_dx: bool) -> Option<Tensor> {
        let cache = self.cache.as_ref().expect("lstm backward without recorded forward");
        let (steps, batch, h) = (cache.steps, cache.batch, self.hidden);
        let g4 = 4 * h;
        let rows = steps * batch;
        let mut dz = vec![0.0; rows * g4];
        let mut dh_next = vec![0.0; batch * h];
        let mut dc_next = vec![0.0; batch * h];
        for t in (0..steps).rev() {
            let cur = t * batch;
            for b in 0..batch {
                let r = cur + b;
                let a = &cache.gates[r * g4..(r + 1) * g4];
                let d = &mut dz[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let (i, f, g, o) = (a[j], a[h + j], a[2 * h + j], a[3 * h + j]);
                    let tc = cache.cell_tanh[r * h + j];
                    let c_prev = if t > 0 { cache.cell[(r - batch) * h + j] } else { 0.0 };
                    let dh = dy.data()[r * h + j] + dh_next[b * h + j];
                    let dc = dh * o * (1.0 - tc * tc) + dc_next[b * h + j];
                    dc_next[b * h + j] = dc * f;
                    d[j] = dc * g * i * (1.0 - i);
                    d[h + j] = dc * c_prev * f * (1.0 - f);
                    d[2 * h + j] = dc * i * (1.0 - g * g);
                    d[3 * h + j] = dh * tc * o * (1.0 - o);
                }
            }
            if t > 0 {
                gemm(
                    batch,
                    g4,
                    h,
                    1.0,
                    &dz[cur * g4..(cur + batch) * g4],
                    Op::N,
                    self.w_hidden.value.data(),
                    Op::T,
                    0.0,
                    &mut dh_next,
                );
            }
        }
        if !self.w_input.frozen {
            gemm(self.input_dim, rows, g4, 1.0, cache.input.data(), Op::T, &dz, Op::N, 1.0, self.w_input.grad.data_mut());
        }
        if !self.w_hidden.frozen && steps > 1 {
            let k = (steps - 1) * batch;
            gemm(h, k, g4, 1.0, &cache.hidden[..k * h], Op::T, &dz[batch * g4..], Op::N, 1.0, self.w_hidden.grad.data_mut());
        }
        if !self.bias.frozen {
            let g = self.bias.grad.data_mut();
            for row in dz.chunks_exact(g4) {
                for (a, b) in g.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        need_dx.then(|| {
            let mut dx = vec![0.0; rows * self.input_dim];
            gemm(rows, g4, self.input_dim, 1.0, &dz, Op::N, self.w_input.value.data(), Op::T, 0.0, &mut dx);
            Tensor::from_vec(&[rows, self.input_dim], dx).expect("shape")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_lstm(input: usize, hidden: usize, seed: u64) -> Lstm {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Lstm::new(
            input,
            hidden,
            Parameter::uniform("wx", &[input, 4 * hidden], 0.5, &mut rng),
            Parameter::uniform("wh", &[hidden, 4 * hidden], 0.5, &mut rng),
            Parameter::uniform("b", &[4 * hidden], 0.5, &mut rng),
        )
    }

    #[test]
    fn zero_parameters_give_zero_hidden() {
        let mut l = Lstm::new(
            3,
            4,
            Parameter::zeros("wx", &[3, 16]),
            Parameter::zeros("wh", &[4, 16]),
            Parameter::zeros("b", &[16]),
        );
        let x = Tensor::from_vec(&[6, 3], (0..18).map(|i| i as f64 - 9.0).collect()).unwrap();
        let y = l.forward(x, 3, 2, false).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_cell_matches_hand_evaluation() {
        // gate order i, f, g, o
        let wx = [0.5, -0.3, 0.8, 0.2];
        let wh = [0.1, 0.4, -0.6, 0.7];
        let b = [0.05, 1.0, -0.1, 0.2];
        let mut l = Lstm::new(
            1,
            1,
            Parameter::new("wx", Tensor::from_vec(&[1, 4], wx.to_vec()).unwrap()),
            Parameter::new("wh", Tensor::from_vec(&[1, 4], wh.to_vec()).unwrap()),
            Parameter::new("b", Tensor::from_vec(&[4], b.to_vec()).unwrap()),
        );
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0_f64, 0.0_f64);
        let mut want = vec![];
        for x in [1.0, -1.0] {
            let z: Vec<f64> = (0..4).map(|k| wx[k] * x + wh[k] * h + b[k]).collect();
            c = s(z[1]) * c + s(z[0]) * z[2].tanh();
            h = s(z[3]) * c.tanh();
            want.push(h);
        }
        let y = l.forward(Tensor::from_vec(&[2, 1], vec![1.0, -1.0]).unwrap(), 2, 1, false).unwrap();
        for (a, b) in y.data().iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn batch_permutation_permutes_outputs() {
        let mut l = random_lstm(2, 3, 5);
        let (t, b) = (4, 3);
        let x: Vec<f64> = (0..t * b * 2).map(|i| ((i * 7) as f64).sin()).collect();
        let y = l.forward(Tensor::from_vec(&[t * b, 2], x.clone()).unwrap(), t, b, false).unwrap();
        let perm = [2, 0, 1];
        let mut xp = vec![0.0; x.len()];
        for s in 0..t {
            for (nb, &ob) in perm.iter().enumerate() {
                xp[(s * b + nb) * 2..(s * b + nb) * 2 + 2].copy_from_slice(&x[(s * b + ob) * 2..(s * b + ob) * 2 + 2]);
            }
        }
        let yp = l.forward(Tensor::from_vec(&[t * b, 2], xp).unwrap(), t, b, false).unwrap();
        for s in 0..t {
            for (nb, &ob) in perm.iter().enumerate() {
                assert_eq!(yp.row(s * b + nb), y.row(s * b + ob));
            }
        }
    }
}
