//! Finite-difference verification of analytic gradients.
//!
//! Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)`;
//! the floor keeps round-off on near-zero gradients from dominating. Probes
//! whose central difference straddles a max/ReLU switch are redrawn.

use super::graph::{GraphInput, ModelGraph};
use super::layer::{Layer, LayerSpec, Pass};
use super::softmax::softmax_xent;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GRAD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

const MAX_REDRAWS: usize = 20;
const LSTM_STEPS: usize = 5;
const BATCH: usize = 2;

struct Probe {
    layer: Layer,
    input: Tensor,
    proj: Vec<f64>,
    labels: Vec<u8>,
    steps: usize,
    batch: usize,
    mask_seed: u64,
}

impl Probe {
    fn loss(&mut self, input: &Tensor) -> Result<(f64, u64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let mut pass = Pass {
            training: true,
            record: true,
            steps: self.steps,
            batch: self.batch,
            rng: &mut rng,
        };
        let y = self.layer.forward(input.clone(), &mut pass)?;
        let mut sig = 0xcbf2_9ce4_8422_2325u64;
        self.layer.hash_switches(&mut sig);
        let loss = if let Layer::Output(_) = self.layer {
            softmax_xent(&y, &self.labels, None)?.loss
        } else {
            y.data().iter().zip(&self.proj).map(|(a, b)| a * b).sum()
        };
        Ok((loss, sig))
    }

    fn analytic(&mut self) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        for p in self.layer.params_mut() {
            p.zero_grad();
        }
        let input = self.input.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.mask_seed);
        let mut pass = Pass {
            training: true,
            record: true,
            steps: self.steps,
            batch: self.batch,
            rng: &mut rng,
        };
        let y = self.layer.forward(input, &mut pass)?;
        let dy = if let Layer::Output(_) = self.layer {
            softmax_xent(&y, &self.labels, None)?.dlogits
        } else {
            Tensor::from_vec(y.shape(), self.proj.clone())?
        };
        let dx = self.layer.backward(&dy, true).expect("input gradient requested");
        let pg = self.layer.params().iter().map(|p| p.grad.data().to_vec()).collect();
        Ok((pg, dx.into_data()))
    }
}

fn make_probe(spec: &LayerSpec, rng: &mut ChaCha8Rng) -> Result<Probe> {
    let mut layer = spec.instantiate("check", rng)?;
    for p in layer.params_mut() {
        for v in p.value.data_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
    }
    let (steps, batch) = match spec {
        LayerSpec::Lstm { .. } => (LSTM_STEPS, BATCH),
        _ => (1, BATCH * 2),
    };
    let rows = steps * batch;
    let input = match *spec {
        LayerSpec::Conv2d {
            in_channels,
            in_height,
            in_width,
            ..
        } => {
            let n = in_channels * in_height * in_width;
            let data = (0..rows * n).map(|_| rng.random_range(0.2..1.0)).collect();
            Tensor::from_vec(&[rows, in_channels, in_height, in_width], data)?
        }
        _ => {
            let d = spec.input_dim().unwrap_or(6);
            Tensor::from_vec(&[rows, d], (0..rows * d).map(|_| rng.random_range(-1.0..1.0)).collect())?
        }
    };
    let out_len = match *spec {
        LayerSpec::Dropout { .. } => input.len(),
        _ => rows * spec.output_dim().unwrap_or(0),
    };
    Ok(Probe {
        layer,
        input,
        proj: (0..out_len).map(|_| rng.random_range(-1.0..1.0)).collect(),
        labels: (0..rows).map(|_| rng.random_range(0..2u8)).collect(),
        steps,
        batch,
        mask_seed: rng.random(),
    })
}

/// Worst relative error between analytic and central-difference gradients
/// over every parameter and input element of `trials` random instances.
pub fn grad_check(spec: &LayerSpec, trials: usize, eps: f64, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let mut done = false;
        for _ in 0..MAX_REDRAWS {
            let mut probe = make_probe(spec, &mut rng)?;
            if let Some(err) = check_probe(&mut probe, eps)? {
                worst = worst.max(err);
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::Numeric("could not draw a kink-free instance".into()));
        }
    }
    Ok(worst)
}

/// `None` if some perturbation crossed a switching boundary.
fn check_probe(probe: &mut Probe, eps: f64) -> Result<Option<f64>> {
    let (param_grads, input_grad) = probe.analytic()?;
    let (_, base_sig) = probe.loss(&probe.input.clone())?;
    let mut worst = 0.0f64;
    for (pi, g) in param_grads.iter().enumerate() {
        for (k, &analytic) in g.iter().enumerate() {
            let orig = probe.layer.params()[pi].value.data()[k];
            probe.layer.params_mut()[pi].value.data_mut()[k] = orig + eps;
            let (lp, sp) = probe.loss(&probe.input.clone())?;
            probe.layer.params_mut()[pi].value.data_mut()[k] = orig - eps;
            let (lm, sm) = probe.loss(&probe.input.clone())?;
            probe.layer.params_mut()[pi].value.data_mut()[k] = orig;
            if sp != base_sig || sm != base_sig {
                return Ok(None);
            }
            worst = worst.max(relative_error(analytic, (lp - lm) / (2.0 * eps)));
        }
    }
    for (k, &analytic) in input_grad.iter().enumerate() {
        let mut x = probe.input.clone();
        let orig = x.data()[k];
        x.data_mut()[k] = orig + eps;
        let (lp, sp) = probe.loss(&x)?;
        x.data_mut()[k] = orig - eps;
        let (lm, sm) = probe.loss(&x)?;
        if sp != base_sig || sm != base_sig {
            return Ok(None);
        }
        worst = worst.max(relative_error(analytic, (lp - lm) / (2.0 * eps)));
    }
    Ok(Some(worst))
}

#[derive(Clone, Debug)]
pub struct GraphCheckReport {
    pub max_relative_error: f64,
    pub probes: usize,
    pub skipped: usize,
}

/// Finite-difference check of a whole graph's parameter gradients under its
/// objective, probing `per_param` random coordinates of every trainable
/// parameter tensor. Runs in inference mode (no dropout).
pub fn grad_check_graph(
    graph: &mut ModelGraph,
    input: &GraphInput,
    labels: &[u8],
    per_param: usize,
    eps: f64,
    seed: u64,
) -> Result<GraphCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = ChaCha8Rng::seed_from_u64(0);
    let mut eval = |g: &mut ModelGraph| -> Result<(f64, u64)> {
        let out = g.forward(input, false, true, &mut scratch)?;
        let l = g.objective_loss(&out, input, labels, None)?;
        Ok((l.loss, g.switch_signature()))
    };
    graph.zero_grad();
    let out = graph.forward(input, false, true, &mut ChaCha8Rng::seed_from_u64(0))?;
    let lg = graph.objective_loss(&out, input, labels, None)?;
    let base_sig = graph.switch_signature();
    graph.backward(&lg.d_output)?;
    let analytic: Vec<Vec<f64>> = graph.params().map(|p| p.grad.data().to_vec()).collect();
    let trainable: Vec<bool> = graph.params().map(|p| !p.frozen).collect();
    let (mut worst, mut probes, mut skipped) = (0.0f64, 0, 0);
    for (pi, grads) in analytic.iter().enumerate() {
        if !trainable[pi] {
            continue;
        }
        for _ in 0..per_param {
            let k = rng.random_range(0..grads.len());
            let orig = graph.params().nth(pi).expect("param").value.data()[k];
            let set = |g: &mut ModelGraph, v: f64| {
                g.params_mut().nth(pi).expect("param").value.data_mut()[k] = v;
            };
            set(graph, orig + eps);
            let (lp, sp) = eval(graph)?;
            set(graph, orig - eps);
            let (lm, sm) = eval(graph)?;
            set(graph, orig);
            if sp != base_sig || sm != base_sig {
                skipped += 1;
                continue;
            }
            probes += 1;
            worst = worst.max(relative_error(grads[k], (lp - lm) / (2.0 * eps)));
        }
    }
    Ok(GraphCheckReport {
        max_relative_error: worst,
        probes,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxout_gradients() {
        let err = grad_check(&LayerSpec::maxout(5, 3), 3, 1e-5, 1).unwrap();
        assert!(err < 1e-6, "maxout error {err}");
    }

    #[test]
    fn conv_gradients() {
        let spec = LayerSpec::Conv2d {
            in_channels: 2,
            out_channels: 3,
            in_height: 9,
            in_width: 9,
            kernel: 5,
            stride: 2,
        };
        let err = grad_check(&spec, 2, 1e-5, 2).unwrap();
        assert!(err < 1e-5, "conv error {err}");
    }

    #[test]
    fn lstm_gradients() {
        let err = grad_check(&LayerSpec::lstm(3, 4), 2, 1e-5, 3).unwrap();
        assert!(err < 1e-4, "lstm error {err}");
    }

    #[test]
    fn softmax_and_dropout_gradients() {
        assert!(grad_check(&LayerSpec::softmax(4), 3, 1e-5, 4).unwrap() < 1e-4);
        assert!(grad_check(&LayerSpec::Dropout { p: 0.3 }, 3, 1e-5, 5).unwrap() < 1e-6);
    }

    #[test]
    fn single_linear_piece_matches_hand_calculus() {
        // one-piece maxout is affine: y = w x, loss = (y - t)^2 via projection
        // gradient of (wx - t)^2 in w is 2 (wx - t) x
        let (w, x, t) = (0.7, 1.3, 0.2);
        let spec = LayerSpec::MaxoutFc {
            input_dim: 1,
            output_dim: 1,
            pieces: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let Layer::MaxoutFc(mut l) = spec.instantiate("l", &mut rng).unwrap() else {
            unreachable!()
        };
        l.weight.value.data_mut()[0] = w;
        let y = l.forward(Tensor::from_vec(&[1, 1], vec![x]).unwrap(), true).unwrap();
        let dy = Tensor::from_vec(&[1, 1], vec![2.0 * (y.data()[0] - t)]).unwrap();
        l.backward(&dy, false);
        assert!((l.weight.grad.data()[0] - 2.0 * (w * x - t) * x).abs() < 1e-15);
    }
}
