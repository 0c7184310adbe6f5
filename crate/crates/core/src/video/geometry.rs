use super::Point;

pub const STATS_WINDOW: usize = 9;
const SPC_BAND_HZ: (f64, f64) = (2.0, 8.0);

/// Width, height, perimeter and absolute shoelace area of a closed contour.
pub fn geometric_features(contour: &[Point]) -> [f64; 4] {
    if contour.is_empty() {
        return [0.0; 4];
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in contour {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let n = contour.len();
    let (mut perimeter, mut area2) = (0.0, 0.0);
    for i in 0..n {
        let (a, b) = (contour[i], contour[(i + 1) % n]);
        perimeter += ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
        area2 += a[0] * b[1] - b[0] * a[1];
    }
    [x1 - x0, y1 - y0, perimeter, area2.abs() / 2.0]
}

fn window_variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn zero_crossing_rate(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let changes = x.windows(2).filter(|w| (w[0] - m) * (w[1] - m) < 0.0).count();
    changes as f64 / (x.len() - 1) as f64
}

/// Share of the non-DC spectral energy of the mean-removed window inside 2-8 Hz.
fn band_energy_ratio(x: &[f64], fps: f64) -> f64 {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let (mut band, mut total) = (0.0, 0.0);
    for k in 1..=n / 2 {
        let (mut re, mut im) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let a = std::f64::consts::TAU * (k * i) as f64 / n as f64;
            re += (v - m) * a.cos();
            im -= (v - m) * a.sin();
        }
        let e = re * re + im * im;
        total += e;
        let f = k as f64 * fps / n as f64;
        if (SPC_BAND_HZ.0..=SPC_BAND_HZ.1).contains(&f) {
            band += e;
        }
    }
    if total <= 1e-20 {
        0.0
    } else {
        band / total
    }
}

/// Centred sliding-window variance, ZCR and SPC of each channel of a
/// `T x channels` trajectory. Output rows are `[var.., zcr.., spc..]`.
pub fn window_stats(base: &[f64], channels: usize, win: usize, fps: f64) -> Vec<f64> {
    assert!(win % 2 == 1, "window must be odd");
    let t_len = base.len() / channels;
    let half = win / 2;
    let mut out = vec![0.0; t_len * 3 * channels];
    let mut col = Vec::with_capacity(win);
    for t in 0..t_len {
        let (lo, hi) = (t.saturating_sub(half), (t + half + 1).min(t_len));
        for c in 0..channels {
            col.clear();
            col.extend((lo..hi).map(|s| base[s * channels + c]));
            let row = &mut out[t * 3 * channels..(t + 1) * 3 * channels];
            row[c] = window_variance(&col);
            row[channels + c] = zero_crossing_rate(&col);
            row[2 * channels + c] = band_energy_ratio(&col, fps);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_and_scaled_square() {
        let sq = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert_eq!(geometric_features(&sq), [1.0, 1.0, 4.0, 1.0]);
        let big: Vec<Point> = sq.iter().map(|p| [2.0 * p[0], 2.0 * p[1]]).collect();
        assert_eq!(geometric_features(&big), [2.0, 2.0, 8.0, 4.0]);
    }

    #[test]
    fn regular_hexagon() {
        let hex: Vec<Point> = (0..6)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 6.0;
                [a.cos(), a.sin()]
            })
            .collect();
        let g = geometric_features(&hex);
        assert!((g[0] - 2.0).abs() < 1e-12);
        assert!((g[2] - 6.0).abs() < 1e-12);
        assert!((g[3] - 3.0 * 3f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_contour_is_zero() {
        assert_eq!(geometric_features(&[[2.0, 3.0]; 5]), [0.0; 4]);
    }

    #[test]
    fn constant_channel_stats() {
        let s = window_stats(&[4.0; 20], 1, 9, 30.0);
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn alternating_zcr() {
        let x: Vec<f64> = (0..9).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(window_stats(&x, 1, 9, 30.0)[4 * 3 + 1], 1.0);
    }

    #[test]
    fn syllabic_sinusoid_is_in_band() {
        // 30 / 9 Hz completes one cycle in the window, landing in bin 1.
        let x: Vec<f64> = (0..9)
            .map(|i| (std::f64::consts::TAU * (30.0 / 9.0) * i as f64 / 30.0).sin())
            .collect();
        let spc = window_stats(&x, 1, 9, 30.0)[4 * 3 + 2];
        assert!((spc - 1.0).abs() < 1e-9, "{spc}");
    }

    proptest::proptest! {
        #[test]
        fn homogeneity(scale in 0.1f64..10.0, seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let poly: Vec<Point> = (0..12).map(|i| {
                let a = std::f64::consts::TAU * i as f64 / 12.0;
                let r = rng.random_range(0.5..1.5);
                [r * a.cos(), r * a.sin()]
            }).collect();
            let scaled: Vec<Point> = poly.iter().map(|p| [scale * p[0], scale * p[1]]).collect();
            let (g, h) = (geometric_features(&poly), geometric_features(&scaled));
            for k in 0..3 {
                proptest::prop_assert!((h[k] - scale * g[k]).abs() < 1e-9 * (1.0 + h[k]));
            }
            proptest::prop_assert!((h[3] - scale * scale * g[3]).abs() < 1e-9 * (1.0 + h[3]));
        }
    }
}
