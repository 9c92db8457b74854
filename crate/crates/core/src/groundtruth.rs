//! Ground-truth disparity from 3D marker trajectories.
//!
//! Markers are projected into both cameras with 3×4 projection matrices,
//! mapped into the downscaled and cropped pixel frame used by the network,
//! and turned into a per-window disparity trace `u_R - u_L`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Micros;
use crate::simulator::window_count;

#[derive(Debug, Error)]
pub enum GroundTruthError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Malformed { path: PathBuf, line: u64, msg: String },
    #[error("{path}: {source}")]
    Calibration {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("no joint is visible in both views at any window")]
    NoVisibleJoint,
    #[error("analysis window must be > 0")]
    InvalidWindow,
    #[error("downscale factor must be >= 1")]
    InvalidFactor,
}

/// Samples of one marker, sorted by time; positions in millimetres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerTrack3D {
    pub joint: u32,
    pub samples: Vec<(Micros, [f64; 3])>,
}

/// Maps homogeneous world points to homogeneous image points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProjectionMatrix(pub [[f64; 4]; 3]);

impl ProjectionMatrix {
    /// `[I | 0]`.
    pub const IDENTITY: ProjectionMatrix =
        ProjectionMatrix([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]);

    /// Homogeneous image point `P · [X Y Z 1]ᵀ`.
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        let row = |r: usize| m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2] + m[r][3];
        [row(0), row(1), row(2)]
    }
}

/// Calibration file contents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereoCalibration {
    pub left: ProjectionMatrix,
    pub right: ProjectionMatrix,
}

impl StereoCalibration {
    pub fn from_file(path: &Path) -> Result<Self, GroundTruthError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| GroundTruthError::Io { path: path.to_owned(), source })?;
        serde_json::from_str(&text).map_err(|source| GroundTruthError::Calibration { path: path.to_owned(), source })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSample {
    pub t: Micros,
    pub u: f64,
    pub v: f64,
    /// False when the point projects to `w' <= 0` (at or behind the camera).
    pub valid: bool,
    /// Valid and inside the current frame.
    pub visible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track2D {
    pub joint: u32,
    pub samples: Vec<ImageSample>,
}

/// Projects every sample; samples outside the `width × height` frame are kept
/// but marked not visible.
pub fn project_markers(tracks: &[MarkerTrack3D], p: &ProjectionMatrix, width: f64, height: f64) -> Vec<Track2D> {
    tracks
        .iter()
        .map(|track| Track2D {
            joint: track.joint,
            samples: track
                .samples
                .iter()
                .map(|&(t, x)| {
                    let h = p.apply(x);
                    let valid = h[2] > 0.0 && h[2].is_finite();
                    let (u, v) = if valid { (h[0] / h[2], h[1] / h[2]) } else { (f64::NAN, f64::NAN) };
                    let visible = valid && in_frame(u, v, width, height);
                    ImageSample { t, u, v, valid, visible }
                })
                .collect(),
        })
        .collect()
}

fn in_frame(u: f64, v: f64, width: f64, height: f64) -> bool {
    (0.0..width).contains(&u) && (0.0..height).contains(&v)
}

/// Maps full-resolution image coordinates into the downscaled, cropped frame
/// without rounding. Visibility is re-evaluated against the crop.
pub fn to_downscaled_coords(
    track: &Track2D,
    factor: u32,
    crop_origin: [u32; 2],
    crop_size: [u32; 2],
) -> Result<Track2D, GroundTruthError> {
    if factor == 0 {
        return Err(GroundTruthError::InvalidFactor);
    }
    let f = factor as f64;
    let samples = track
        .samples
        .iter()
        .map(|s| {
            let u = s.u / f - crop_origin[0] as f64;
            let v = s.v / f - crop_origin[1] as f64;
            let visible = s.valid && in_frame(u, v, crop_size[0] as f64, crop_size[1] as f64);
            ImageSample { u, v, visible, ..*s }
        })
        .collect();
    Ok(Track2D { joint: track.joint, samples })
}

/// Horizontal position of a track at `t`, linearly interpolated between the
/// bracketing samples and held constant beyond the first and last sample.
/// `None` if a sample involved is not visible.
pub fn interpolate_u(track: &Track2D, t: Micros) -> Option<f64> {
    let s = &track.samples;
    let first = s.first()?;
    let last = s.last()?;
    if t <= first.t {
        return first.visible.then_some(first.u);
    }
    if t >= last.t {
        return last.visible.then_some(last.u);
    }
    let k = s.partition_point(|x| x.t <= t);
    let (a, b) = (&s[k - 1], &s[k]);
    if a.t == t {
        return a.visible.then_some(a.u);
    }
    if !(a.visible && b.visible) {
        return None;
    }
    let alpha = (t - a.t) as f64 / (b.t - a.t) as f64;
    Some(a.u + alpha * (b.u - a.u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceWindow {
    pub t_center: Micros,
    /// `None` when no joint is visible in both views.
    pub d_mean: Option<f64>,
    pub d_min: Option<f64>,
    pub d_max: Option<f64>,
    pub n_joints: usize,
    /// `(joint, disparity)` for each joint visible in both views.
    pub per_joint: Vec<(u32, f64)>,
}

impl TraceWindow {
    pub fn empty(t_center: Micros) -> Self {
        TraceWindow { t_center, d_mean: None, d_min: None, d_max: None, n_joints: 0, per_joint: Vec::new() }
    }

    pub fn from_values(t_center: Micros, per_joint: Vec<(u32, f64)>) -> Self {
        if per_joint.is_empty() {
            return Self::empty(t_center);
        }
        let n = per_joint.len();
        let sum: f64 = per_joint.iter().map(|p| p.1).sum();
        let min = per_joint.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max = per_joint.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        // keep the mean inside [min, max] despite rounding
        let mean = (sum / n as f64).clamp(min, max);
        TraceWindow { t_center, d_mean: Some(mean), d_min: Some(min), d_max: Some(max), n_joints: n, per_joint }
    }

    pub fn is_empty(&self) -> bool {
        self.d_mean.is_none()
    }
}

/// Ground-truth disparity per analysis window, in downscaled pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityTrace {
    pub window_us: Micros,
    pub windows: Vec<TraceWindow>,
}

impl DisparityTrace {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn d_mean(&self) -> Vec<Option<f64>> {
        self.windows.iter().map(|w| w.d_mean).collect()
    }
}

pub fn window_center(i: usize, window_us: Micros) -> Micros {
    i as Micros * window_us + window_us / 2
}

/// Builds the trace over `window_count(duration, window_us)` windows from
/// tracks already in the network frame. Joints are paired by id.
pub fn disparity_trajectory(
    left: &[Track2D],
    right: &[Track2D],
    window_us: Micros,
    duration: Micros,
) -> Result<DisparityTrace, GroundTruthError> {
    if window_us == 0 {
        return Err(GroundTruthError::InvalidWindow);
    }
    let right_by_joint: BTreeMap<u32, &Track2D> = right.iter().map(|t| (t.joint, t)).collect();
    let mut pairs: Vec<(&Track2D, &Track2D)> =
        left.iter().filter_map(|l| right_by_joint.get(&l.joint).map(|r| (l, *r))).collect();
    pairs.sort_by_key(|(l, _)| l.joint);
    let windows: Vec<TraceWindow> = (0..window_count(duration, window_us))
        .map(|i| {
            let tc = window_center(i, window_us);
            let per_joint = pairs
                .iter()
                .filter_map(|(l, r)| Some((l.joint, interpolate_u(r, tc)? - interpolate_u(l, tc)?)))
                .collect();
            TraceWindow::from_values(tc, per_joint)
        })
        .collect();
    if windows.iter().all(TraceWindow::is_empty) {
        return Err(GroundTruthError::NoVisibleJoint);
    }
    Ok(DisparityTrace { window_us, windows })
}

/// Reads `t_us,joint,X_mm,Y_mm,Z_mm`; tracks come back sorted by joint, then
/// by time.
pub fn parse_marker_file(path: &Path) -> Result<Vec<MarkerTrack3D>, GroundTruthError> {
    let file = std::fs::File::open(path).map_err(|source| GroundTruthError::Io { path: path.to_owned(), source })?;
    parse_marker_reader(file, path)
}

pub fn parse_marker_reader(reader: impl Read, path: &Path) -> Result<Vec<MarkerTrack3D>, GroundTruthError> {
    let malformed = |line: u64, msg: String| GroundTruthError::Malformed { path: path.to_owned(), line, msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let expected = ["t_us", "joint", "X_mm", "Y_mm", "Z_mm"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(malformed(1, format!("expected header {}", expected.join(","))));
    }
    let mut by_joint: BTreeMap<u32, Vec<(Micros, [f64; 3])>> = BTreeMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        let t: Micros = rec[0].parse().map_err(|_| malformed(line, format!("bad timestamp {:?}", &rec[0])))?;
        let joint: u32 = rec[1].parse().map_err(|_| malformed(line, format!("bad joint {:?}", &rec[1])))?;
        let mut x = [0.0; 3];
        for (c, slot) in x.iter_mut().enumerate() {
            let field = &rec[2 + c];
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| malformed(line, format!("bad coordinate {field:?}")))?;
        }
        by_joint.entry(joint).or_default().push((t, x));
    }
    Ok(by_joint
        .into_iter()
        .map(|(joint, mut samples)| {
            samples.sort_by_key(|s| s.0);
            MarkerTrack3D { joint, samples }
        })
        .collect())
}

/// Shifts every sample by `-origin`, dropping samples before it.
pub fn rebase_tracks(tracks: &[MarkerTrack3D], origin: Micros) -> Vec<MarkerTrack3D> {
    tracks
        .iter()
        .map(|t| MarkerTrack3D {
            joint: t.joint,
            samples: t.samples.iter().filter(|s| s.0 >= origin).map(|&(ts, x)| (ts - origin, x)).collect(),
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV `window_i,t_center_us,d_mean,d_min,d_max,n_joints`; undefined values
/// are empty cells.
pub fn write_trace(trace: &DisparityTrace, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "window_i,t_center_us,d_mean,d_min,d_max,n_joints")?;
    for (i, win) in trace.windows.iter().enumerate() {
        writeln!(w, "{i},{},{},{},{},{}", win.t_center, opt(win.d_mean), opt(win.d_min), opt(win.d_max), win.n_joints)?;
    }
    Ok(())
}

/// Reads a trace written by [`write_trace`]. Per-joint values are not stored
/// in the CSV and come back empty.
pub fn read_trace(reader: impl Read, path: &Path) -> Result<DisparityTrace, GroundTruthError> {
    let malformed = |line: u64, msg: String| GroundTruthError::Malformed { path: path.to_owned(), line, msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>() != ["window_i", "t_center_us", "d_mean", "d_min", "d_max", "n_joints"] {
        return Err(malformed(1, "unexpected trace header".into()));
    }
    let mut windows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| malformed(line, e.to_string()))?;
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| malformed(line, format!("bad integer {:?}", &rec[i])));
        let real = |i: usize| -> Result<Option<f64>, GroundTruthError> {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                rec[i].parse().map(Some).map_err(|_| malformed(line, format!("bad number {:?}", &rec[i])))
            }
        };
        if int(0)? as usize != windows.len() {
            return Err(malformed(line, "window indices must be consecutive from 0".into()));
        }
        windows.push(TraceWindow {
            t_center: int(1)?,
            d_mean: real(2)?,
            d_min: real(3)?,
            d_max: real(4)?,
            n_joints: int(5)? as usize,
            per_joint: Vec::new(),
        });
    }
    let window_us = match windows.as_slice() {
        [] => return Err(malformed(1, "trace has no windows".into())),
        [only] => only.t_center * 2,
        [a, b, ..] => b.t_center - a.t_center,
    };
    if window_us == 0 {
        return Err(GroundTruthError::InvalidWindow);
    }
    Ok(DisparityTrace { window_us, windows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track(joint: u32, samples: &[(Micros, f64)]) -> Track2D {
        Track2D {
            joint,
            samples: samples.iter().map(|&(t, u)| ImageSample { t, u, v: 1.0, valid: true, visible: true }).collect(),
        }
    }

    #[test]
    fn identity_projection() {
        let tracks = [MarkerTrack3D { joint: 0, samples: vec![(0, [100.0, 50.0, 2.0])] }];
        let p = project_markers(&tracks, &ProjectionMatrix::IDENTITY, 346.0, 260.0);
        let s = p[0].samples[0];
        assert_eq!((s.u, s.v), (50.0, 25.0));
        assert!(s.valid && s.visible);
    }

    #[test]
    fn behind_camera_is_flagged() {
        let tracks = [MarkerTrack3D { joint: 0, samples: vec![(0, [1.0, 1.0, -2.0]), (1, [1.0, 1.0, 0.0])] }];
        let p = project_markers(&tracks, &ProjectionMatrix::IDENTITY, 346.0, 260.0);
        assert!(p[0].samples.iter().all(|s| !s.valid && !s.visible));
        assert_eq!(p[0].samples.len(), 2);
        // excluded from statistics
        let r = to_downscaled_coords(&p[0], 1, [0, 0], [16, 16]).unwrap();
        assert_eq!(interpolate_u(&r, 0), None);
    }

    #[test]
    fn outside_frame_is_kept_but_invisible() {
        let tracks = [MarkerTrack3D { joint: 3, samples: vec![(0, [1000.0, 1.0, 1.0])] }];
        let p = project_markers(&tracks, &ProjectionMatrix::IDENTITY, 346.0, 260.0);
        assert!(p[0].samples[0].valid);
        assert!(!p[0].samples[0].visible);
    }

    // second, independent evaluation of the pinhole formula via explicit
    // matrix-vector products on a homogeneous 4-vector
    fn reference_project(p: &[[f64; 4]; 3], x: [f64; 3]) -> (f64, f64) {
        let hx = [x[0], x[1], x[2], 1.0];
        let mut out = [0.0; 3];
        for (r, o) in out.iter_mut().enumerate() {
            for (c, hv) in hx.iter().enumerate() {
                *o += p[r][c] * hv;
            }
        }
        (out[0] / out[2], out[1] / out[2])
    }

    #[test]
    fn random_projection_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let mut m = [[0.0; 4]; 3];
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v = rng.random_range(-2.0..2.0);
                }
            }
            m[2] = [0.0, 0.0, 1.0, 5.0];
            let x = [rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0), rng.random_range(0.0..100.0)];
            let tracks = [MarkerTrack3D { joint: 0, samples: vec![(0, x)] }];
            let got = project_markers(&tracks, &ProjectionMatrix(m), 1e9, 1e9)[0].samples[0];
            let (u, v) = reference_project(&m, x);
            assert!((got.u - u).abs() <= 1e-9 * u.abs().max(1.0));
            assert!((got.v - v).abs() <= 1e-9 * v.abs().max(1.0));
        }
    }

    #[test]
    fn downscaled_coordinates() {
        let t = track(0, &[(0, 60.0)]);
        let mut t = t;
        t.samples[0].v = 30.0;
        let a = to_downscaled_coords(&t, 6, [0, 0], [16, 16]).unwrap().samples[0];
        assert_eq!((a.u, a.v), (10.0, 5.0));
        assert!(a.visible);
        let b = to_downscaled_coords(&t, 1, [0, 0], [346, 260]).unwrap().samples[0];
        assert_eq!((b.u, b.v), (60.0, 30.0));
        let c = to_downscaled_coords(&t, 6, [10, 5], [16, 16]).unwrap().samples[0];
        assert_eq!((c.u, c.v), (0.0, 0.0));
        assert!(c.visible);
        let d = to_downscaled_coords(&t, 6, [11, 5], [16, 16]).unwrap().samples[0];
        assert!(!d.visible);
        assert!(to_downscaled_coords(&t, 0, [0, 0], [16, 16]).is_err());
    }

    #[test]
    fn static_joint() {
        let tr = disparity_trajectory(&[track(0, &[(0, 3.0)])], &[track(0, &[(0, 5.0)])], 50_000, 200_000).unwrap();
        assert_eq!(tr.len(), 4);
        for w in &tr.windows {
            assert_eq!((w.d_mean, w.d_min, w.d_max), (Some(2.0), Some(2.0), Some(2.0)));
        }
    }

    #[test]
    fn two_joints() {
        let l = [track(0, &[(0, 0.0)]), track(1, &[(0, 4.0)])];
        let r = [track(0, &[(0, 1.0)]), track(1, &[(0, 7.0)])];
        let tr = disparity_trajectory(&l, &r, 50_000, 50_000).unwrap();
        let w = &tr.windows[0];
        assert_eq!((w.d_mean, w.d_min, w.d_max, w.n_joints), (Some(2.0), Some(1.0), Some(3.0), 2));
    }

    #[test]
    fn linear_motion_is_interpolated_exactly() {
        // 10 Hz samples of u_R(t) = 2 + 3 t[s], left fixed at 0
        let samples: Vec<(Micros, f64)> = (0..=20).map(|k| (k * 100_000, 2.0 + 3.0 * k as f64 * 0.1)).collect();
        let tr = disparity_trajectory(&[track(0, &[(0, 0.0)])], &[track(0, &samples)], 50_000, 2_000_000).unwrap();
        for (i, w) in tr.windows.iter().enumerate() {
            let tc = (i as f64 * 0.05) + 0.025;
            assert!((w.d_mean.unwrap() - (2.0 + 3.0 * tc)).abs() < 1e-12, "window {i}");
        }
    }

    #[test]
    fn missing_views_and_errors() {
        let mut hidden = track(0, &[(0, 3.0), (50_000, 3.0), (100_000, 3.0)]);
        hidden.samples[2].visible = false;
        let tr = disparity_trajectory(&[hidden], &[track(0, &[(0, 5.0)])], 50_000, 200_000).unwrap();
        assert_eq!(tr.windows[0].d_mean, Some(2.0));
        assert!(tr.windows[1..].iter().all(TraceWindow::is_empty));
        // joint present in one view only
        let e = disparity_trajectory(&[track(0, &[(0, 3.0)])], &[track(1, &[(0, 5.0)])], 50_000, 100_000);
        assert!(matches!(e, Err(GroundTruthError::NoVisibleJoint)));
        assert!(disparity_trajectory(&[], &[], 0, 10).is_err());
    }

    #[test]
    fn marker_csv_and_trace_csv_round_trip() {
        let text = "t_us,joint,X_mm,Y_mm,Z_mm\n100,1,1.5,2,3\n0,1,0,0,1\n50,0,1,1,1\n";
        let tracks = parse_marker_reader(text.as_bytes(), Path::new("m.csv")).unwrap();
        assert_eq!(tracks.len(), 2);
        assert_eq!(tracks[1].samples, vec![(0, [0.0, 0.0, 1.0]), (100, [1.5, 2.0, 3.0])]);
        let bad = "t_us,joint,X_mm,Y_mm,Z_mm\n1,0,1,1,1\n2.5,0,1,1,1\n";
        match parse_marker_reader(bad.as_bytes(), Path::new("m.csv")) {
            Err(GroundTruthError::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let rebased = rebase_tracks(&tracks, 50);
        assert_eq!(rebased[1].samples, vec![(50, [1.5, 2.0, 3.0])]);

        let l = [track(0, &[(0, 0.0), (100_000, 1.0)])];
        let r = [track(0, &[(0, 2.5)])];
        let mut tr = disparity_trajectory(&l, &r, 50_000, 150_000).unwrap();
        tr.windows.push(TraceWindow::empty(175_000));
        let mut buf = Vec::new();
        write_trace(&tr, &mut buf).unwrap();
        let back = read_trace(buf.as_slice(), Path::new("t.csv")).unwrap();
        assert_eq!(back.window_us, 50_000);
        for (a, b) in tr.windows.iter().zip(&back.windows) {
            assert_eq!((a.t_center, a.d_mean, a.d_min, a.d_max, a.n_joints), (b.t_center, b.d_mean, b.d_min, b.d_max, b.n_joints));
        }
    }

    proptest! {
        #[test]
        fn mean_within_band(values in prop::collection::vec(-20.0f64..20.0, 1..13)) {
            let w = TraceWindow::from_values(0, values.iter().enumerate().map(|(j, &v)| (j as u32, v)).collect());
            prop_assert!(w.d_min.unwrap() <= w.d_mean.unwrap() && w.d_mean.unwrap() <= w.d_max.unwrap());
        }

        #[test]
        fn downscale_commutes_with_projection(x in -50.0f64..50.0, y in -50.0f64..50.0, z in 1.0f64..50.0, f in 1u32..8) {
            // scaling the projection by 1/f equals projecting then dividing by f
            let mut m = ProjectionMatrix([[3.0, 0.1, 1.0, 2.0], [0.0, 2.5, 0.5, -1.0], [0.0, 0.0, 1.0, 0.5]]);
            let tracks = [MarkerTrack3D { joint: 0, samples: vec![(0, [x, y, z])] }];
            let a = to_downscaled_coords(&project_markers(&tracks, &m, 1e9, 1e9)[0], f, [0, 0], [u32::MAX, u32::MAX]).unwrap().samples[0];
            for r in 0..2 { for c in 0..4 { m.0[r][c] /= f as f64; } }
            let b = project_markers(&tracks, &m, 1e9, 1e9)[0].samples[0];
            prop_assert!((a.u - b.u).abs() < 1e-9 * b.u.abs().max(1.0));
            prop_assert!((a.v - b.v).abs() < 1e-9 * b.v.abs().max(1.0));
        }
    }
}
