use super::param::Parameter;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected ADAM update of every unfrozen parameter.
pub fn adam_step<'a>(params: impl IntoIterator<Item = &'a mut Parameter>, cfg: &AdamConfig) {
    for p in params {
        if p.frozen {
            continue;
        }
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let g = p.grad.data();
        let m = p.adam_m.data_mut();
        for (m, &g) in m.iter_mut().zip(g) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        }
        let v = p.adam_v.data_mut();
        for (v, &g) in v.iter_mut().zip(p.grad.data()) {
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        }
        let (m, v) = (p.adam_m.data(), p.adam_v.data());
        for ((w, &m), &v) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            *w -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.eps);
        }
    }
}

/// Rescales all unfrozen gradients so their joint L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<'a>(params: impl IntoIterator<Item = &'a mut Parameter>, max_norm: f64) -> f64 {
    let mut live: Vec<&mut Parameter> = params.into_iter().filter(|p| !p.frozen).collect();
    let norm = live.iter().map(|p| p.grad.sum_sq()).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in &mut live {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn param(v: f64, g: f64) -> Parameter {
        let mut p = Parameter::new("p", Tensor::full(&[3], v));
        p.grad.fill(g);
        p
    }

    #[test]
    fn zero_gradient_leaves_value_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut p = param(1.5, 0.0);
        adam_step([&mut p], &cfg);
        assert!(p.value.data().iter().all(|&v| v == 1.5));
        assert_eq!(p.step_count, 1);

        let mut p = param(1.5, 0.0);
        p.adam_m.fill(0.2);
        p.adam_v.fill(0.3);
        adam_step([&mut p], &cfg);
        assert!(p.adam_m.data().iter().all(|&m| (m - 0.18).abs() < 1e-15));
        assert!(p.adam_v.data().iter().all(|&v| (v - 0.2997).abs() < 1e-15));
        assert_eq!(p.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_regardless_of_gradient_scale() {
        let cfg = AdamConfig::default();
        for g in [1e-3, 0.5, 40.0] {
            let mut p = param(0.0, g);
            adam_step([&mut p], &cfg);
            // m_hat = g, v_hat = g^2, so the step is lr * |g| / (|g| + eps)
            let want = cfg.lr * g / (g + cfg.eps);
            assert!((p.value.data()[0] + want).abs() < 1e-15);
            assert!((p.value.data()[0].abs() - cfg.lr).abs() < 1e-7);
        }
    }

    #[test]
    fn identical_state_gives_identical_updates() {
        let cfg = AdamConfig::default();
        let mut a = param(0.3, -0.7);
        let mut b = param(0.3, -0.7);
        for _ in 0..5 {
            adam_step([&mut a, &mut b], &cfg);
        }
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn frozen_parameters_are_untouched() {
        let mut p = param(0.25, 3.0);
        p.frozen = true;
        for _ in 0..10 {
            adam_step([&mut p], &AdamConfig::default());
        }
        assert!(p.value.data().iter().all(|&v| v.to_bits() == 0.25f64.to_bits()));
        assert_eq!(p.step_count, 0);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut a = param(0.0, 3.0);
        let mut b = param(0.0, 4.0);
        let before = clip_global_norm([&mut a, &mut b], 5.0);
        assert!((before - (27.0f64 + 48.0).sqrt()).abs() < 1e-12);
        let after = (a.grad.sum_sq() + b.grad.sum_sq()).sqrt();
        assert!((after - 5.0).abs() < 1e-12);
    }
}
