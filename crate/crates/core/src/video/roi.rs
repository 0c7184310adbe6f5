use super::{Affine, Point};
use crate::error::{Error, Result};

/// Side of the template-space crop around the mouth centroid.
pub const CROP: usize = 96;
/// Side of the model-facing mouth image.
pub const ROI: usize = 32;

/// Row-major image with interleaved channels, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels || channels == 0 {
            return Err(Error::Dimension(format!(
                "{} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Image { width, height, channels, data })
    }

    pub fn gray(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        Image::new(width, height, 1, data)
    }

    /// Channel mean at integer pixel `(x, y)`; zero outside the image.
    fn luma(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return 0.0;
        }
        let i = (y as usize * self.width + x as usize) * self.channels;
        self.data[i..i + self.channels].iter().sum::<f64>() / self.channels as f64
    }

    /// Bilinear gray sample with pixel centres at integer coordinates.
    pub fn sample(&self, p: Point) -> f64 {
        let (x0, y0) = (p[0].floor(), p[1].floor());
        let (fx, fy) = (p[0] - x0, p[1] - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let top = self.luma(x0, y0) * (1.0 - fx) + self.luma(x0 + 1, y0) * fx;
        let bottom = self.luma(x0, y0 + 1) * (1.0 - fx) + self.luma(x0 + 1, y0 + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// 32 x 32 grayscale mouth image.
#[derive(Clone, Debug, PartialEq)]
pub struct Roi {
    pub data: Vec<f64>,
}

impl Roi {
    pub fn zeros() -> Self {
        Roi {
            data: vec![0.0; ROI * ROI],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * ROI + x]
    }
}

/// Warps a 96 x 96 template-space window centred on `centroid` out of the
/// source `image`, then area-averages it down to 32 x 32.
///
/// `to_template` maps source pixels to template coordinates. The second
/// return value is false when the window misses the image entirely.
pub fn extract_roi(image: &Image, to_template: &Affine, centroid: Point) -> Result<(Roi, bool)> {
    let back = to_template.inverse()?;
    let origin = [centroid[0] - (CROP / 2) as f64, centroid[1] - (CROP / 2) as f64];
    let factor = CROP / ROI;
    let mut roi = Roi::zeros();
    let mut inside = false;
    let (w, h) = (image.width as f64, image.height as f64);
    for v in 0..CROP {
        for u in 0..CROP {
            let p = back.apply([origin[0] + u as f64, origin[1] + v as f64]);
            if p[0] > -1.0 && p[1] > -1.0 && p[0] < w && p[1] < h {
                inside = true;
                roi.data[(v / factor) * ROI + u / factor] += image.sample(p);
            }
        }
    }
    let norm = (factor * factor) as f64;
    for x in &mut roi.data {
        *x = (*x / norm).clamp(0.0, 1.0);
    }
    Ok((roi, inside))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_gives_constant_roi() {
        let img = Image::new(128, 128, 3, vec![0.4; 128 * 128 * 3]).unwrap();
        let (roi, inside) = extract_roi(&img, &Affine::IDENTITY, [64.0, 64.0]).unwrap();
        assert!(inside);
        assert!(roi.data.iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn checkerboard_block_means() {
        // 96 x 96 image of 3 x 3 blocks, so the centred crop is the whole image.
        let n = 96;
        let val = |x: usize, y: usize| if (x / 3 + y / 3) % 2 == 0 { 0.9 } else { 0.1 };
        let data: Vec<f64> = (0..n * n).map(|i| val(i % n, i / n)).collect();
        let img = Image::gray(n, n, data).unwrap();
        let (roi, _) = extract_roi(&img, &Affine::IDENTITY, [48.0, 48.0]).unwrap();
        for by in 0..32 {
            for bx in 0..32 {
                let mut acc = 0.0;
                for y in 3 * by..3 * by + 3 {
                    for x in 3 * bx..3 * bx + 3 {
                        acc += val(x, y);
                    }
                }
                assert!((roi.at(bx, by) - acc / 9.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shift_compensated_by_affine() {
        let (w, h) = (140, 140);
        let f = |x: f64, y: f64| 0.5 + 0.4 * (0.21 * x).sin() * (0.17 * y).cos();
        let base = Image::gray(w, h, (0..w * h).map(|i| f((i % w) as f64, (i / w) as f64)).collect()).unwrap();
        let (dx, dy) = (5.0, -3.0);
        let shifted = Image::gray(
            w,
            h,
            (0..w * h).map(|i| f((i % w) as f64 - dx, (i / w) as f64 - dy)).collect(),
        )
        .unwrap();
        let comp = Affine([[1.0, 0.0, -dx], [0.0, 1.0, -dy]]);
        let (a, _) = extract_roi(&base, &Affine::IDENTITY, [70.0, 70.0]).unwrap();
        let (b, _) = extract_roi(&shifted, &comp, [70.0, 70.0]).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn crop_off_image_is_black() {
        let img = Image::gray(10, 10, vec![1.0; 100]).unwrap();
        let (roi, inside) = extract_roi(&img, &Affine::IDENTITY, [500.0, 500.0]).unwrap();
        assert!(!inside);
        assert!(roi.data.iter().all(|&v| v == 0.0));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn roi_in_unit_range(seed in 0u64..500, cx in 0.0f64..80.0, cy in 0.0f64..80.0, angle in -0.5f64..0.5) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let img = Image::gray(64, 64, (0..64 * 64).map(|_| rng.random::<f64>()).collect()).unwrap();
            let a = Affine::similarity(angle, 1.5, [3.0, 4.0]);
            let (roi, _) = extract_roi(&img, &a, [cx, cy]).unwrap();
            proptest::prop_assert_eq!(roi.data.len(), 1024);
            proptest::prop_assert!(roi.data.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
