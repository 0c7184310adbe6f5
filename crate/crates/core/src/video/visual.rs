use super::{
    centroid, estimate_affine, extract_roi, geometric_features, optical_flow_variance, template_points, window_stats,
    Image, LandmarkSchema, LandmarkTrack, Point, Roi, N_LANDMARKS, STATS_WINDOW,
};
use crate::audio::FeatureSequence;
use crate::error::{Error, Result};

/// Per-frame mouth ROIs and template-space landmarks for one utterance.
#[derive(Clone, Debug)]
pub struct VisualFrames {
    pub rois: Vec<Roi>,
    pub landmarks: Vec<Point>,
    pub fps: f64,
    /// Frames whose crop missed the image entirely.
    pub blank: usize,
}

impl VisualFrames {
    pub fn frames(&self) -> usize {
        self.rois.len()
    }

    pub fn frame_landmarks(&self, t: usize) -> &[Point] {
        &self.landmarks[t * N_LANDMARKS..(t + 1) * N_LANDMARKS]
    }
}

/// Aligns every frame to the template from its nose points and cuts the
/// mouth ROI. The track must already be interpolated.
pub fn normalize_frames(images: &[Image], track: &LandmarkTrack, schema: &LandmarkSchema) -> Result<VisualFrames> {
    schema.validate()?;
    if images.len() != track.frames() {
        return Err(Error::Dimension(format!(
            "{} video frames but {} landmark frames",
            images.len(),
            track.frames()
        )));
    }
    if track.missing_count() > 0 {
        return Err(Error::Input("landmark track has unfilled frames".into()));
    }
    let tpl = template_points();
    let tpl_nose: Vec<Point> = schema.nose.iter().map(|&i| tpl[i]).collect();
    let mut rois = Vec::with_capacity(images.len());
    let mut landmarks = Vec::with_capacity(images.len() * N_LANDMARKS);
    let mut blank = 0;
    for (t, img) in images.iter().enumerate() {
        let pts = track.frame(t);
        let nose: Vec<Point> = schema.nose.iter().map(|&i| pts[i]).collect();
        let to_tpl = estimate_affine(&nose, &tpl_nose)?;
        let aligned: Vec<Point> = pts.iter().map(|&p| to_tpl.apply(p)).collect();
        let mouth: Vec<Point> = schema.mouth_all.iter().map(|&i| aligned[i]).collect();
        let (roi, inside) = extract_roi(img, &to_tpl, centroid(&mouth))?;
        blank += usize::from(!inside);
        rois.push(roi);
        landmarks.extend(aligned);
    }
    let fps = track.fps.0 as f64 / track.fps.1 as f64;
    Ok(VisualFrames { rois, landmarks, fps, blank })
}

/// Per-column standardisation; columns with spread at most 1e-8 become 0.
pub fn zscore_columns(values: &mut [f64], dim: usize) {
    let t = values.len() / dim;
    if t == 0 {
        return;
    }
    for c in 0..dim {
        let mean = (0..t).map(|i| values[i * dim + c]).sum::<f64>() / t as f64;
        let var = (0..t).map(|i| (values[i * dim + c] - mean).powi(2)).sum::<f64>() / t as f64;
        let sd = var.sqrt();
        for i in 0..t {
            let v = &mut values[i * dim + c];
            *v = if sd <= 1e-8 { 0.0 } else { (*v - mean) / sd };
        }
    }
}

/// The 26D Tao-style visual vector at the video frame rate, z-normalised
/// over the utterance.
pub fn handcrafted_visual_vector(frames: &VisualFrames, schema: &LandmarkSchema) -> Result<FeatureSequence> {
    let t_len = frames.frames();
    if t_len < 2 {
        return Err(Error::TooShort { len: t_len, min: 2 });
    }
    let mut base = Vec::with_capacity(t_len * 7);
    let mut geo = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let flow = if t == 0 {
            [0.0; 3]
        } else {
            optical_flow_variance(&frames.rois[t - 1], &frames.rois[t])
        };
        let lm = frames.frame_landmarks(t);
        let contour: Vec<Point> = schema.mouth_outer.iter().map(|&i| lm[i]).collect();
        let g = geometric_features(&contour);
        base.extend(flow);
        base.extend(g);
        geo.push(g);
    }
    let stats = window_stats(&base, 7, STATS_WINDOW, frames.fps);
    let mut values = Vec::with_capacity(t_len * 26);
    for t in 0..t_len {
        values.extend_from_slice(&stats[t * 21..(t + 1) * 21]);
        values.push(base[t * 7 + 2]);
        for k in 0..4 {
            values.push(if t == 0 { 0.0 } else { geo[t][k] - geo[t - 1][k] });
        }
    }
    zscore_columns(&mut values, 26);
    let mut seq = FeatureSequence::new("", 26, values);
    seq.step_rate = frames.fps;
    Ok(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{mouth_points, Affine};

    fn frames_with(open: impl Fn(usize) -> f64, t_len: usize) -> VisualFrames {
        let mut rois = Vec::new();
        let mut landmarks = Vec::new();
        for t in 0..t_len {
            let o = open(t);
            let mut lm = template_points();
            lm.splice(31..49, mouth_points([64.0, 100.0], 40.0, o, 5.0));
            rois.push(Roi {
                data: (0..1024).map(|i| 0.3 + 0.02 * o * ((i % 32) as f64 / 32.0)).collect(),
            });
            landmarks.extend(lm);
        }
        VisualFrames { rois, landmarks, fps: 30.0, blank: 0 }
    }

    #[test]
    fn static_mouth_normalises_to_zero() {
        let f = frames_with(|_| 3.0, 20);
        let v = handcrafted_visual_vector(&f, &LandmarkSchema::default()).unwrap();
        assert_eq!(v.dim, 26);
        assert!(v.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn moving_mouth_is_standardised() {
        let f = frames_with(|t| 6.0 + 5.0 * (t as f64 * 0.7).sin(), 60);
        let v = handcrafted_visual_vector(&f, &LandmarkSchema::default()).unwrap();
        assert_eq!(v.dim, 26);
        assert_eq!(v.len(), 60);
        for c in 0..26 {
            let col: Vec<f64> = (0..60).map(|t| v.row(t)[c]).collect();
            let mean = col.iter().sum::<f64>() / 60.0;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 60.0).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!(sd == 0.0 || (sd - 1.0).abs() < 1e-9, "column {c} sd {sd}");
        }
    }

    #[test]
    fn normalize_undoes_pose() {
        let tpl = template_points();
        let pose = Affine::similarity(0.1, 0.5, [2.0, 1.0]);
        let src: Vec<Point> = tpl.iter().map(|&p| pose.apply(p)).collect();
        let track = LandmarkTrack::new(src, vec![false], (30, 1)).unwrap();
        let img = Image::gray(64, 76, vec![0.5; 64 * 76]).unwrap();
        let f = normalize_frames(&[img], &track, &LandmarkSchema::default()).unwrap();
        for (a, b) in f.frame_landmarks(0).iter().zip(&tpl) {
            assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
        }
    }
}
