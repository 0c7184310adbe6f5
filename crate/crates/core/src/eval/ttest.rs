use crate::error::{Error, Result};

/// Bound reported for the p value when the differences have no spread.
pub const P_BOUND: f64 = 1e-12;

/// Paired one-tailed test of `mean(a - b) > 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TTest {
    pub mean_diff: f64,
    pub t: f64,
    pub df: usize,
    pub p: f64,
}

pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    let t = x + 7.5;
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularised incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// `P(T > t)` for Student's t with `df` degrees of freedom.
pub fn student_t_upper(t: f64, df: f64) -> f64 {
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn paired_one_tailed_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Input(format!("unpaired samples: {} vs {}", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Input("t-test needs at least two pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let df = n - 1;
    if sd <= 1e-15 * (1.0 + mean.abs()) {
        let (t, p) = if mean == 0.0 {
            (0.0, 0.5)
        } else if mean > 0.0 {
            (f64::INFINITY, P_BOUND)
        } else {
            (f64::NEG_INFINITY, 1.0 - P_BOUND)
        };
        return Ok(TTest { mean_diff: mean, t, df, p });
    }
    let t = mean / (sd / (n as f64).sqrt());
    Ok(TTest {
        mean_diff: mean,
        t,
        df,
        p: student_t_upper(t, df as f64).clamp(0.0, 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_values() {
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn known_example() {
        let r = paired_one_tailed_ttest(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert!((r.t - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        // With 2 degrees of freedom the upper tail is 1/2 - t / (2 sqrt(t^2 + 2)).
        let want = 0.5 - r.t / (2.0 * (r.t * r.t + 2.0).sqrt());
        assert!((r.p - want).abs() < 1e-12);
        assert!((r.p - 0.0371).abs() < 1e-4);
    }

    #[test]
    fn equal_and_swapped() {
        let a = [0.8, 0.9, 0.7];
        let r = paired_one_tailed_ttest(&a, &a).unwrap();
        assert_eq!((r.t, r.p), (0.0, 0.5));
        let b = [0.7, 0.85, 0.74];
        let x = paired_one_tailed_ttest(&a, &b).unwrap();
        let y = paired_one_tailed_ttest(&b, &a).unwrap();
        assert!((x.t + y.t).abs() < 1e-12);
        assert!((x.p + y.p - 1.0).abs() < 1e-12);
        let c = paired_one_tailed_ttest(&[1.0, 1.0], &[0.0, 0.0]).unwrap();
        assert!(c.p <= P_BOUND);
    }

    #[test]
    fn one_degree_of_freedom_is_cauchy() {
        for t in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            let want = 0.5 - (t as f64).atan() / std::f64::consts::PI;
            assert!((student_t_upper(t, 1.0) - want).abs() < 1e-12);
        }
    }
}
