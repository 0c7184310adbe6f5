use super::{Point, N_LANDMARKS};
use crate::error::{Error, Result};
use std::path::Path;

/// Per-frame 49-point landmark positions in source-image pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkTrack {
    /// `T * 49` points; contents of missing frames are unspecified.
    pub points: Vec<Point>,
    pub missing: Vec<bool>,
    pub fps: (u32, u32),
}

impl LandmarkTrack {
    pub fn new(points: Vec<Point>, missing: Vec<bool>, fps: (u32, u32)) -> Result<Self> {
        if points.len() != missing.len() * N_LANDMARKS {
            return Err(Error::Dimension(format!(
                "{} points for {} frames",
                points.len(),
                missing.len()
            )));
        }
        Ok(LandmarkTrack { points, missing, fps })
    }

    pub fn frames(&self) -> usize {
        self.missing.len()
    }

    pub fn frame(&self, t: usize) -> &[Point] {
        &self.points[t * N_LANDMARKS..(t + 1) * N_LANDMARKS]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }
}

/// Fills missing frames, or rejects the track when 10% or more are missing.
///
/// Interior gaps are linearly interpolated per coordinate; leading and
/// trailing gaps copy the nearest valid frame.
pub fn interpolate_landmarks(track: &LandmarkTrack) -> Result<LandmarkTrack> {
    let total = track.frames();
    let missing = track.missing_count();
    if total == 0 || missing * 10 >= total {
        return Err(Error::Rejected { missing, total });
    }
    let mut out = track.clone();
    let valid: Vec<usize> = (0..total).filter(|&t| !track.missing[t]).collect();
    for t in (0..total).filter(|&t| track.missing[t]) {
        let next = valid.partition_point(|&v| v < t);
        let filled: Vec<Point> = match (next.checked_sub(1).map(|i| valid[i]), valid.get(next)) {
            (Some(a), Some(&b)) => {
                let w = (t - a) as f64 / (b - a) as f64;
                track
                    .frame(a)
                    .iter()
                    .zip(track.frame(b))
                    .map(|(p, q)| [p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])])
                    .collect()
            }
            (Some(a), None) => track.frame(a).to_vec(),
            (None, Some(&b)) => track.frame(b).to_vec(),
            (None, None) => unreachable!("at least one valid frame"),
        };
        out.points[t * N_LANDMARKS..(t + 1) * N_LANDMARKS].copy_from_slice(&filled);
        out.missing[t] = false;
    }
    Ok(out)
}

/// One row per frame, `x1,y1,...,x49,y49`; a missing frame is written `nan`.
pub fn write_landmark_csv(track: &LandmarkTrack, path: &Path) -> Result<()> {
    let mut s = String::new();
    for t in 0..track.frames() {
        let row: Vec<String> = if track.missing[t] {
            vec!["nan".to_string(); 2 * N_LANDMARKS]
        } else {
            track.frame(t).iter().flat_map(|p| [format!("{}", p[0]), format!("{}", p[1])]).collect()
        };
        s.push_str(&row.join(","));
        s.push('\n');
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_landmark_csv(path: &Path, fps: (u32, u32)) -> Result<LandmarkTrack> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut points = Vec::new();
    let mut missing = Vec::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 2 * N_LANDMARKS {
            return Err(Error::format(path, offset, format!("expected 98 columns, found {}", cols.len())));
        }
        let vals: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| Error::format(path, offset, e.to_string()))?;
        let gone = vals.iter().any(|v| !v.is_finite());
        missing.push(gone);
        points.extend(vals.chunks(2).map(|c| if gone { [0.0, 0.0] } else { [c[0], c[1]] }));
        offset += line.len() as u64 + 1;
    }
    LandmarkTrack::new(points, missing, fps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(frames: usize, gone: &[usize]) -> LandmarkTrack {
        let mut points = Vec::new();
        for t in 0..frames {
            for k in 0..N_LANDMARKS {
                points.push([t as f64 + k as f64, 2.0 * t as f64]);
            }
        }
        let missing = (0..frames).map(|t| gone.contains(&t)).collect();
        let mut tr = LandmarkTrack::new(points, missing, (30, 1)).unwrap();
        for &t in gone {
            for p in &mut tr.points[t * N_LANDMARKS..(t + 1) * N_LANDMARKS] {
                *p = [f64::NAN, f64::NAN];
            }
        }
        tr
    }

    #[test]
    fn interior_gap_is_linear() {
        let tr = track(100, &[50, 51, 52, 53, 54]);
        let out = interpolate_landmarks(&tr).unwrap();
        // Frame 52 sits half way between frames 49 and 55.
        let want = [(49.0 + 55.0) / 2.0 + 3.0, 2.0 * 52.0];
        assert!((out.frame(52)[3][0] - want[0]).abs() < 1e-12);
        assert!((out.frame(52)[3][1] - want[1]).abs() < 1e-12);
        assert_eq!(out.missing_count(), 0);
    }

    #[test]
    fn edges_copy_nearest() {
        let out = interpolate_landmarks(&track(40, &[0, 39])).unwrap();
        assert_eq!(out.frame(0), track(40, &[]).frame(1));
        assert_eq!(out.frame(39), track(40, &[]).frame(38));
    }

    #[test]
    fn rejection_boundary() {
        let gone: Vec<usize> = (0..15).map(|i| i * 6).collect();
        assert!(matches!(
            interpolate_landmarks(&track(100, &gone)),
            Err(Error::Rejected { missing: 15, total: 100 })
        ));
        assert!(interpolate_landmarks(&track(100, &gone[..10])).is_err());
        assert!(interpolate_landmarks(&track(100, &gone[..9])).is_ok());
        let clean = track(20, &[]);
        assert_eq!(interpolate_landmarks(&clean).unwrap(), clean);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.csv");
        let tr = track(5, &[2]);
        write_landmark_csv(&tr, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().nth(2).unwrap().split(',').filter(|c| *c == "nan").count(), 98);
        let back = read_landmark_csv(&path, (30, 1)).unwrap();
        assert_eq!(back.missing, tr.missing);
        assert_eq!(back.frame(1), tr.frame(1));
    }
}
