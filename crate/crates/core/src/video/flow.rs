use super::{Roi, ROI};

pub const FLOW_WINDOW: usize = 5;
pub const FLOW_LAMBDA: f64 = 1e-3;

fn gradients(img: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = ROI;
    let mut gx = vec![0.0; n * n];
    let mut gy = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let at = |x: usize, y: usize| img[y * n + x];
            gx[y * n + x] = match x {
                0 => at(1, y) - at(0, y),
                _ if x == n - 1 => at(x, y) - at(x - 1, y),
                _ => 0.5 * (at(x + 1, y) - at(x - 1, y)),
            };
            gy[y * n + x] = match y {
                0 => at(x, 1) - at(x, 0),
                _ if y == n - 1 => at(x, y) - at(x, y - 1),
                _ => 0.5 * (at(x, y + 1) - at(x, y - 1)),
            };
        }
    }
    (gx, gy)
}

/// Dense Lucas-Kanade flow `(u, v)` per pixel, windows clipped at borders.
pub fn lucas_kanade(prev: &Roi, cur: &Roi) -> (Vec<f64>, Vec<f64>) {
    let n = ROI;
    // Spatial gradients of the mean frame keep the estimate symmetric in time.
    let mean: Vec<f64> = prev.data.iter().zip(&cur.data).map(|(a, b)| 0.5 * (a + b)).collect();
    let (gx, gy) = gradients(&mean);
    let gt: Vec<f64> = cur.data.iter().zip(&prev.data).map(|(c, p)| c - p).collect();
    let r = FLOW_WINDOW / 2;
    let mut u = vec![0.0; n * n];
    let mut v = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (mut a, mut b, mut c, mut px, mut py) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for wy in y.saturating_sub(r)..(y + r + 1).min(n) {
                for wx in x.saturating_sub(r)..(x + r + 1).min(n) {
                    let i = wy * n + wx;
                    a += gx[i] * gx[i];
                    b += gx[i] * gy[i];
                    c += gy[i] * gy[i];
                    px += gx[i] * gt[i];
                    py += gy[i] * gt[i];
                }
            }
            let (a, c) = (a + FLOW_LAMBDA, c + FLOW_LAMBDA);
            let det = a * c - b * b;
            u[y * n + x] = -(c * px - b * py) / det;
            v[y * n + x] = -(a * py - b * px) / det;
        }
    }
    (u, v)
}

fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Population variances of the horizontal and vertical flow, and their sum.
pub fn optical_flow_variance(prev: &Roi, cur: &Roi) -> [f64; 3] {
    let (u, v) = lucas_kanade(prev, cur);
    let (vu, vv) = (variance(&u), variance(&v));
    [vu, vv, vu + vv]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn texture(dx: f64, dy: f64) -> Roi {
        Roi {
            data: (0..ROI * ROI)
                .map(|i| {
                    let (x, y) = ((i % ROI) as f64 - dx, (i / ROI) as f64 - dy);
                    0.5 + 0.2 * (0.5 * x).sin() + 0.2 * (0.45 * y + 0.1 * x).cos()
                })
                .collect(),
        }
    }

    #[test]
    fn identical_frames_have_zero_flow() {
        let a = texture(0.0, 0.0);
        assert_eq!(optical_flow_variance(&a, &a), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn translation_gives_uniform_flow() {
        let (u, v) = lucas_kanade(&texture(0.0, 0.0), &texture(0.3, -0.2));
        let mean_u = u.iter().sum::<f64>() / u.len() as f64;
        let mean_v = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean_u - 0.3).abs() < 0.05, "{mean_u}");
        assert!((mean_v + 0.2).abs() < 0.05, "{mean_v}");
        let var = optical_flow_variance(&texture(0.0, 0.0), &texture(0.3, -0.2));
        assert!(var[0] <= 1e-3 && var[1] <= 1e-3, "{var:?}");
    }

    #[test]
    fn flicker_has_flow_variance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = texture(0.0, 0.0);
        let b = Roi {
            data: a.data.iter().map(|v| (v + rng.random_range(-0.2..0.2)).clamp(0.0, 1.0)).collect(),
        };
        assert!(optical_flow_variance(&a, &b)[2] > 0.01);
    }
}
