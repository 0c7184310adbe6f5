use super::tensor::Tensor;
use rand::Rng;

/// Inverted dropout: in training each unit is zeroed with probability `p`
/// and survivors are scaled by `1 / (1 - p)`; at inference it is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub p: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout rate must lie in [0, 1)");
        Dropout { p, mask: None }
    }

    pub fn forward<R: Rng>(&mut self, mut x: Tensor, training: bool, rng: &mut R) -> Tensor {
        if !training || self.p == 0.0 {
            self.mask = None;
            return x;
        }
        let scale = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < self.p { 0.0 } else { scale })
            .collect();
        for (v, m) in x.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        x
    }

    pub fn backward(&self, dy: &Tensor) -> Tensor {
        let mut dx = dy.clone();
        if let Some(mask) = &self.mask {
            for (v, m) in dx.data_mut().iter_mut().zip(mask) {
                *v *= m;
            }
        }
        dx
    }
}

/// Applies dropout to a tensor without keeping layer state.
pub fn dropout_apply<R: Rng>(x: &Tensor, p: f64, rng: &mut R, training: bool) -> Tensor {
    Dropout::new(p).forward(x.clone(), training, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_is_identity_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dropout_apply(&x, 0.0, &mut rng, true), x);
        assert_eq!(dropout_apply(&x, 0.0, &mut rng, false), x);
    }

    #[test]
    fn inference_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        assert_eq!(dropout_apply(&x, 0.1, &mut rng, false), x);
    }

    #[test]
    fn empirical_drop_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let x = Tensor::full(&[100, 100], 1.0);
        let y = dropout_apply(&x, 0.5, &mut rng, true);
        let dropped = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / 10_000.0;
        assert!((dropped - 0.5).abs() <= 0.02, "drop fraction {dropped}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
