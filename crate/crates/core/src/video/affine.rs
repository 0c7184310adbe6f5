use super::Point;
use crate::error::{Error, Result};

/// `q = A p + b`, stored as the rows `[a11 a12 b1; a21 a22 b2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine(pub [[f64; 3]; 2]);

impl Affine {
    pub const IDENTITY: Affine = Affine([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);

    /// Rotation by `angle` radians and uniform `scale` about the origin, then a shift.
    pub fn similarity(angle: f64, scale: f64, shift: Point) -> Self {
        let (s, c) = angle.sin_cos();
        Affine([
            [scale * c, -scale * s, shift[0]],
            [scale * s, scale * c, shift[1]],
        ])
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.0;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
        ]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> Result<Affine> {
        let d = self.det();
        if d.abs() < 1e-12 {
            return Err(Error::DegenerateGeometry("singular affine".into()));
        }
        let [[a, b, tx], [c, e, ty]] = self.0;
        let (ia, ib, ic, ie) = (e / d, -b / d, -c / d, a / d);
        Ok(Affine([
            [ia, ib, -(ia * tx + ib * ty)],
            [ic, ie, -(ic * tx + ie * ty)],
        ]))
    }

    /// `self` after `first`.
    pub fn compose(&self, first: &Affine) -> Affine {
        let a = &self.0;
        let b = &first.0;
        let mut m = [[0.0; 3]; 2];
        for r in 0..2 {
            for col in 0..3 {
                m[r][col] = a[r][0] * b[0][col] + a[r][1] * b[1][col];
            }
            m[r][2] += a[r][2];
        }
        Affine(m)
    }
}

/// Least-squares affine taking `src` points onto `dst` points.
pub fn estimate_affine(src: &[Point], dst: &[Point]) -> Result<Affine> {
    if src.len() != dst.len() || src.len() < 3 {
        return Err(Error::Dimension(format!(
            "need matching correspondences, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    // Centre both sets so the normal matrix is well conditioned.
    let n = src.len() as f64;
    let mean = |ps: &[Point]| {
        let s = ps.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0], a[1] + p[1]]);
        [s[0] / n, s[1] / n]
    };
    let (ms, md) = (mean(src), mean(dst));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let mut rhs = [[0.0; 2]; 2];
    for (p, q) in src.iter().zip(dst) {
        let (x, y) = (p[0] - ms[0], p[1] - ms[1]);
        let (u, v) = (q[0] - md[0], q[1] - md[1]);
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
        rhs[0][0] += x * u;
        rhs[0][1] += y * u;
        rhs[1][0] += x * v;
        rhs[1][1] += y * v;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy).max(f64::MIN_POSITIVE);
    if det <= 1e-12 * scale * scale {
        return Err(Error::DegenerateGeometry("alignment points are collinear".into()));
    }
    let mut m = [[0.0; 3]; 2];
    for r in 0..2 {
        m[r][0] = (syy * rhs[r][0] - sxy * rhs[r][1]) / det;
        m[r][1] = (sxx * rhs[r][1] - sxy * rhs[r][0]) / det;
        m[r][2] = md[r] - m[r][0] * ms[0] - m[r][1] * ms[1];
    }
    Ok(Affine(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{template_points, LandmarkSchema};
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn nose() -> Vec<Point> {
        let t = template_points();
        LandmarkSchema::default().nose.iter().map(|&i| t[i]).collect()
    }

    #[test]
    fn identity_from_identical_points() {
        let p = nose();
        let a = estimate_affine(&p, &p).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert!((a.0[r][c] - Affine::IDENTITY.0[r][c]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn recovers_inverse_of_similarity() {
        let tpl = nose();
        let fwd = Affine::similarity(30f64.to_radians(), 0.5, [7.0, -3.0]);
        let frame: Vec<Point> = tpl.iter().map(|&p| fwd.apply(p)).collect();
        let est = estimate_affine(&frame, &tpl).unwrap();
        let inv = fwd.inverse().unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert!((est.0[r][c] - inv.0[r][c]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn noisy_residual_is_bounded() {
        let tpl = nose();
        let sigma = 0.5;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let frame: Vec<Point> = tpl
                .iter()
                .map(|p| [p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)])
                .collect();
            let a = estimate_affine(&frame, &tpl).unwrap();
            let rms = (frame
                .iter()
                .zip(&tpl)
                .map(|(p, q)| {
                    let m = a.apply(*p);
                    (m[0] - q[0]).powi(2) + (m[1] - q[1]).powi(2)
                })
                .sum::<f64>()
                / tpl.len() as f64)
                .sqrt();
            assert!(rms <= 2.0 * sigma, "rms {rms}");
        }
    }

    #[test]
    fn collinear_is_degenerate() {
        let line: Vec<Point> = (0..9).map(|i| [i as f64, 2.0 * i as f64]).collect();
        assert!(matches!(estimate_affine(&line, &line), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn inverse_and_compose() {
        let a = Affine([[1.2, 0.3, 4.0], [-0.1, 0.9, -2.0]]);
        let id = a.inverse().unwrap().compose(&a);
        let p = id.apply([3.0, -5.0]);
        assert!((p[0] - 3.0).abs() < 1e-12 && (p[1] + 5.0).abs() < 1e-12);
    }
}
