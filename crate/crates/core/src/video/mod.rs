//! Landmark-driven face normalisation, mouth-ROI extraction and the 26D
//! hand-crafted visual vector.

mod affine;
mod flow;
mod geometry;
mod landmarks;
mod roi;
mod visual;

pub use affine::{estimate_affine, Affine};
pub use flow::{lucas_kanade, optical_flow_variance, FLOW_LAMBDA, FLOW_WINDOW};
pub use geometry::{geometric_features, window_stats, STATS_WINDOW};
pub use landmarks::{interpolate_landmarks, read_landmark_csv, write_landmark_csv, LandmarkTrack};
pub use roi::{extract_roi, Image, Roi, CROP, ROI};
pub use visual::{handcrafted_visual_vector, normalize_frames, zscore_columns, VisualFrames};

pub const N_LANDMARKS: usize = 49;

pub type Point = [f64; 2];

/// Which landmark indices drive alignment and mouth measurements.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LandmarkSchema {
    pub nose: Vec<usize>,
    /// Outer lip contour in drawing order.
    pub mouth_outer: Vec<usize>,
    pub mouth_all: Vec<usize>,
}

impl Default for LandmarkSchema {
    fn default() -> Self {
        LandmarkSchema {
            nose: (10..19).collect(),
            mouth_outer: (31..43).collect(),
            mouth_all: (31..49).collect(),
        }
    }
}

impl LandmarkSchema {
    pub fn validate(&self) -> crate::Result<()> {
        if self.nose.len() != 9 {
            return Err(crate::Error::Input(format!("schema needs 9 nose points, has {}", self.nose.len())));
        }
        if self.mouth_outer.len() < 3 {
            return Err(crate::Error::Input("mouth contour needs at least 3 points".into()));
        }
        let all = self.nose.iter().chain(&self.mouth_outer).chain(&self.mouth_all);
        if let Some(i) = all.into_iter().find(|&&i| i >= N_LANDMARKS) {
            return Err(crate::Error::Input(format!("landmark index {i} out of range")));
        }
        Ok(())
    }
}

/// Canonical face layout the alignment maps every frame onto.
///
/// Template space is a 128 x 152 canvas; the neutral mouth centre sits at
/// (64, 100) so a 96 x 96 crop around it stays on the canvas.
pub fn template_points() -> Vec<Point> {
    let mut p = Vec::with_capacity(N_LANDMARKS);
    for side in [0.0, 44.0] {
        for i in 0..5 {
            let x = 28.0 + side + 7.0 * i as f64;
            let arch = [3.0, 1.0, 0.0, 1.0, 3.0][i];
            p.push([x, 40.0 + arch]);
        }
    }
    for i in 0..4 {
        p.push([64.0, 52.0 + 6.0 * i as f64]);
    }
    for (i, dx) in [-10.0, -5.0, 0.0, 5.0, 10.0].iter().enumerate() {
        p.push([64.0 + dx, 76.0 + [0.0, 2.0, 3.0, 2.0, 0.0][i]]);
    }
    for cx in [42.0, 86.0] {
        for i in 0..6 {
            let a = std::f64::consts::TAU * i as f64 / 6.0;
            p.push([cx + 9.0 * a.cos(), 54.0 + 4.0 * a.sin()]);
        }
    }
    p.extend(mouth_points([64.0, 100.0], 40.0, 0.0, 5.0));
    debug_assert_eq!(p.len(), N_LANDMARKS);
    p
}

/// 12 outer then 6 inner lip points for a mouth of the given `width`,
/// inner `opening` and lip thickness.
pub fn mouth_points(center: Point, width: f64, opening: f64, lip: f64) -> Vec<Point> {
    let mut p = Vec::with_capacity(18);
    let half_h = opening / 2.0 + lip;
    for i in 0..12 {
        let a = std::f64::consts::TAU * i as f64 / 12.0;
        p.push([center[0] + width / 2.0 * a.cos(), center[1] + half_h * a.sin()]);
    }
    for i in 0..6 {
        let a = std::f64::consts::TAU * i as f64 / 6.0;
        p.push([center[0] + 0.35 * width * a.cos(), center[1] + opening / 2.0 * a.sin()]);
    }
    p
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
    [sx / n, sy / n]
}
