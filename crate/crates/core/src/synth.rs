//! Synthetic stereo stimuli with known disparity, and a brute-force
//! coincidence oracle.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{CameraGeometry, DvsEvent, Micros, Polarity, Side, StereoEventStream};
use crate::groundtruth::{window_center, DisparityTrace, TraceWindow};
use crate::simulator::{window_count, Spike, SpikeRecord};
use crate::topology::{NeuronInfo, Topology};

/// Emission lattice step.
pub const LATTICE_US: Micros = 1_000;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("stimulus leaves the {width}x{height} frame at t = {t} us")]
    OutOfFrame { t: Micros, width: u32, height: u32 },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("window must be > 0")]
    InvalidWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// One `size[0] × size[1]` block.
    #[default]
    Dot,
    /// Same as a dot; intended with a tall `size`.
    Bar,
    /// `count` blocks on the same rows at random, non-overlapping columns.
    Cloud,
}

/// Disparity-over-time stimulus description. `d(t)` is piecewise linear
/// through the keyframes `(t_us, d)`; two keyframes at the same time form a
/// step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisparityProfile {
    pub keyframes: Vec<(Micros, f64)>,
    pub shape: Shape,
    /// Block width and height in pixels.
    pub size: [u32; 2],
    /// Top-left corner of the (first) block in the left view.
    pub origin: [u32; 2],
    /// Number of blocks for `cloud`.
    pub count: u32,
    /// Minimum number of empty columns between cloud blocks.
    pub min_gap: u32,
    /// Mean event rate of every active pixel.
    pub rate_hz: f64,
    pub jitter_us: f64,
    pub seed: Option<u64>,
}

impl Default for DisparityProfile {
    fn default() -> Self {
        Self {
            keyframes: vec![(0, 0.0)],
            shape: Shape::Dot,
            size: [2, 2],
            origin: [4, 7],
            count: 3,
            min_gap: 2,
            rate_hz: 100.0,
            jitter_us: 0.0,
            seed: None,
        }
    }
}

impl DisparityProfile {
    pub fn constant(d: f64) -> Self {
        Self { keyframes: vec![(0, d)], ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidProfile(m.to_owned()));
        if self.keyframes.is_empty() {
            return bad("at least one keyframe is required");
        }
        if self.keyframes.windows(2).any(|w| w[1].0 < w[0].0) {
            return bad("keyframes must be sorted by time");
        }
        if self.keyframes.iter().any(|k| !k.1.is_finite()) {
            return bad("keyframe disparities must be finite");
        }
        if !(self.rate_hz > 0.0 && self.rate_hz * LATTICE_US as f64 * 1e-6 <= 1.0) {
            return bad("rate_hz must be in (0, 1000]");
        }
        if !(self.jitter_us.is_finite() && self.jitter_us >= 0.0) {
            return bad("jitter_us must be >= 0");
        }
        if self.size[0] == 0 || self.size[1] == 0 {
            return bad("size must be positive");
        }
        if self.shape == Shape::Cloud && self.count == 0 {
            return bad("cloud needs count >= 1");
        }
        Ok(())
    }

    /// `d(t)`, right-continuous at steps.
    pub fn disparity_at(&self, t: Micros) -> f64 {
        let k = &self.keyframes;
        let idx = k.partition_point(|p| p.0 <= t);
        self.interpolate(idx, t)
    }

    /// Left limit of `d` at `t`.
    fn disparity_before(&self, t: Micros) -> f64 {
        let k = &self.keyframes;
        let idx = k.partition_point(|p| p.0 < t);
        self.interpolate(idx, t)
    }

    // `idx` is the number of keyframes considered at or before `t`.
    fn interpolate(&self, idx: usize, t: Micros) -> f64 {
        let k = &self.keyframes;
        if idx == 0 {
            return k[0].1;
        }
        if idx == k.len() {
            return k[idx - 1].1;
        }
        let (a, b) = (k[idx - 1], k[idx]);
        if a.0 == t || b.0 == a.0 {
            return a.1;
        }
        a.1 + (b.1 - a.1) * ((t - a.0) as f64 / (b.0 - a.0) as f64)
    }

    /// Extremes of `d` over `[start, end)`.
    pub fn range_over(&self, start: Micros, end: Micros) -> (f64, f64) {
        let mut lo = self.disparity_at(start);
        let mut hi = lo;
        let mut take = |v: f64| {
            lo = lo.min(v);
            hi = hi.max(v);
        };
        if end > start + 1 {
            take(self.disparity_before(end));
        }
        for &(tk, _) in self.keyframes.iter().filter(|k| k.0 > start && k.0 < end) {
            take(self.disparity_before(tk));
            take(self.disparity_at(tk));
        }
        (lo, hi)
    }

    pub fn max_abs_disparity(&self) -> f64 {
        self.keyframes.iter().map(|k| k.1.abs()).fold(0.0, f64::max)
    }
}

/// Rounds to the nearest pixel, ties away from zero.
pub fn round_disparity(d: f64) -> i64 {
    d.round() as i64
}

fn block_columns(profile: &DisparityProfile, geometry: CameraGeometry, rng: &mut ChaCha8Rng) -> Result<Vec<u32>, SynthError> {
    if profile.shape != Shape::Cloud {
        return Ok(vec![profile.origin[0]]);
    }
    // Leave room for the right-view shift so every block stays in frame.
    let d_lo = profile.keyframes.iter().map(|k| round_disparity(k.1)).min().unwrap_or(0).min(0);
    let d_hi = profile.keyframes.iter().map(|k| round_disparity(k.1)).max().unwrap_or(0).max(0);
    let w = profile.size[0] as i64;
    let first = -d_lo;
    let last = geometry.width as i64 - w - d_hi;
    let stride = w + profile.min_gap as i64;
    let n = profile.count as i64;
    let slack = last - first - (n - 1) * stride;
    if slack < 0 {
        return Err(SynthError::InvalidProfile(format!(
            "{n} blocks of width {w} with gap {} do not fit in width {}",
            profile.min_gap, geometry.width
        )));
    }
    // distribute the slack randomly between blocks
    let mut cuts: Vec<i64> = (0..n).map(|_| rng.random_range(0..=slack)).collect();
    cuts.sort_unstable();
    Ok(cuts.iter().enumerate().map(|(k, c)| (first + k as i64 * stride + c) as u32).collect())
}

/// Generates a stereo stream plus its exact ground truth on `window_us`
/// analysis windows.
pub fn gen_stimulus(
    profile: &DisparityProfile,
    geometry: CameraGeometry,
    duration: Micros,
    window_us: Micros,
    default_seed: u64,
) -> Result<(StereoEventStream, DisparityTrace), SynthError> {
    profile.validate()?;
    if window_us == 0 {
        return Err(SynthError::InvalidWindow);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed.unwrap_or(default_seed));
    let columns = block_columns(profile, geometry, &mut rng)?;
    let [bw, bh] = profile.size;
    let y0 = profile.origin[1];
    let oob = |t| SynthError::OutOfFrame { t, width: geometry.width, height: geometry.height };

    let steps = duration.div_ceil(LATTICE_US);
    for step in 0..steps {
        let t = step * LATTICE_US;
        let d = round_disparity(profile.disparity_at(t));
        for &x0 in &columns {
            let (xl_lo, xl_hi) = (x0 as i64, x0 as i64 + bw as i64 - 1);
            let fits = xl_hi < geometry.width as i64
                && xl_lo + d >= 0
                && xl_hi + d < geometry.width as i64
                && y0 as u64 + bh as u64 <= geometry.height as u64;
            if !fits {
                return Err(oob(t));
            }
        }
    }

    let p = profile.rate_hz * LATTICE_US as f64 * 1e-6;
    let jitter = (profile.jitter_us > 0.0)
        .then(|| Normal::new(0.0, profile.jitter_us).expect("finite jitter"));
    let bound = 3.0 * profile.jitter_us;
    let jittered = |rng: &mut ChaCha8Rng, t: Micros| -> Micros {
        let Some(n) = &jitter else { return t };
        let dt = n.sample(rng).clamp(-bound, bound).round();
        (t as f64 + dt).clamp(0.0, duration.saturating_sub(1) as f64) as Micros
    };
    let mut events = Vec::new();
    for step in 0..steps {
        let t = step * LATTICE_US;
        let d = round_disparity(profile.disparity_at(t));
        for &x0 in &columns {
            for y in y0..y0 + bh {
                for x in x0..x0 + bw {
                    if !rng.random_bool(p) {
                        continue;
                    }
                    let polarity = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
                    let tl = jittered(&mut rng, t);
                    let tr = jittered(&mut rng, t);
                    events.push(DvsEvent::new(tl, x, y, polarity, Side::Left));
                    events.push(DvsEvent::new(tr, (x as i64 + d) as u32, y, polarity, Side::Right));
                }
            }
        }
    }
    let stream = StereoEventStream::with_duration(events, geometry, duration).map_err(|e| SynthError::InvalidProfile(e.to_string()))?;

    let trace = profile_trace(profile, columns.len(), duration, window_us);
    Ok((stream, trace))
}

/// Ground truth of a profile: `d` at each window centre, extremes over the
/// window.
pub fn profile_trace(profile: &DisparityProfile, blocks: usize, duration: Micros, window_us: Micros) -> DisparityTrace {
    let windows = (0..window_count(duration, window_us))
        .map(|i| {
            let start = i as Micros * window_us;
            let tc = window_center(i, window_us);
            let (lo, hi) = profile.range_over(start, start + window_us);
            let mean = profile.disparity_at(tc).clamp(lo, hi);
            TraceWindow {
                t_center: tc,
                d_mean: Some(mean),
                d_min: Some(lo),
                d_max: Some(hi),
                n_joints: blocks,
                per_joint: (0..blocks as u32).map(|j| (j, mean)).collect(),
            }
        })
        .collect();
    DisparityTrace { window_us, windows }
}

/// A left/right event pair on the same row within the coincidence window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OracleMatch {
    pub left: usize,
    pub right: usize,
    /// `t_right - t_left`.
    pub dt: i64,
    /// `x_right - x_left`.
    pub disparity: i32,
    pub y: u32,
}

/// Every left/right pair with equal `y` and `|Δt| ≤ window`, by exhaustive
/// scan per row. Indices refer to `stream.events()`; output sorted.
pub fn oracle_matches(stream: &StereoEventStream, window: Micros) -> Result<Vec<OracleMatch>, SynthError> {
    if window == 0 {
        return Err(SynthError::InvalidWindow);
    }
    let mut rows: BTreeMap<u32, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (k, e) in stream.events().iter().enumerate() {
        let row = rows.entry(e.y).or_default();
        match e.side {
            Side::Left => row.0.push(k),
            Side::Right => row.1.push(k),
        }
    }
    let ev = stream.events();
    let mut out = Vec::new();
    for (y, (lefts, rights)) in rows {
        for &l in &lefts {
            for &r in &rights {
                let dt = ev[r].t as i64 - ev[l].t as i64;
                if dt.unsigned_abs() <= window {
                    out.push(OracleMatch { left: l, right: r, dt, disparity: ev[r].x as i32 - ev[l].x as i32, y });
                }
            }
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Match counts per disparity, per analysis window. A match belongs to the
/// window of its later event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchHistogram {
    pub window_us: Micros,
    pub bins: Vec<BTreeMap<i32, u64>>,
}

pub fn match_histogram(
    stream: &StereoEventStream,
    matches: &[OracleMatch],
    window_us: Micros,
) -> Result<MatchHistogram, SynthError> {
    if window_us == 0 {
        return Err(SynthError::InvalidWindow);
    }
    let n = window_count(stream.duration(), window_us);
    let mut bins = vec![BTreeMap::new(); n];
    let ev = stream.events();
    for m in matches {
        let t = ev[m.left].t.max(ev[m.right].t);
        if let Some(bin) = bins.get_mut((t / window_us) as usize) {
            *bin.entry(m.disparity).or_insert(0) += 1;
        }
    }
    Ok(MatchHistogram { window_us, bins })
}

/// Count-weighted mean disparity per window.
pub fn oracle_disparity_estimate(hist: &MatchHistogram) -> Vec<Option<f64>> {
    hist.bins
        .iter()
        .map(|bin| {
            let n: u64 = bin.values().sum();
            (n > 0).then(|| bin.iter().map(|(&d, &c)| d as f64 * c as f64).sum::<f64>() / n as f64)
        })
        .collect()
}

/// Coincidence spikes with no supporting oracle match: a left event at the
/// neuron's `x_left` and a right event at its `x_right` on its row, both in
/// `[t_spike - lookback, t_spike]` and at most `window` apart.
pub fn unmatched_coincidence_spikes(
    record: &SpikeRecord,
    topology: &Topology,
    stream: &StereoEventStream,
    window: Micros,
    lookback: Micros,
) -> Vec<Spike> {
    let mut by_pixel: BTreeMap<(Side, u32, u32), Vec<Micros>> = BTreeMap::new();
    for e in stream.events() {
        by_pixel.entry((e.side, e.x, e.y)).or_default().push(e.t);
    }
    let empty = Vec::new();
    record
        .spikes
        .iter()
        .filter(|s| s.population.is_coincidence())
        .filter(|s| {
            let Ok(NeuronInfo::Cell { coord, .. }) = topology.coord_of(s.neuron) else { return true };
            let (y, xl, xr) = (coord.y as u32, coord.x_left() as u32, coord.x_right() as u32);
            let lo = s.t.saturating_sub(lookback);
            let ls = by_pixel.get(&(Side::Left, xl, y)).unwrap_or(&empty);
            let rs = by_pixel.get(&(Side::Right, xr, y)).unwrap_or(&empty);
            let supported = ls
                .iter()
                .filter(|&&t| t >= lo && t <= s.t)
                .any(|&tl| rs.iter().any(|&tr| tr >= lo && tr <= s.t && tl.abs_diff(tr) <= window));
            !supported
        })
        .copied()
        .collect()
}

/// Probe stream for coincidence soundness checks. On each row and side
/// consecutive events are at least `spacing` apart; each probe places one left
/// event and one right event at random columns with a random lag of up to
/// `max_lag` either way.
pub fn sparse_probe_stream(
    geometry: CameraGeometry,
    duration: Micros,
    spacing: Micros,
    max_lag: Micros,
    seed: u64,
) -> StereoEventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let period = spacing + 2 * max_lag;
    for y in 0..geometry.height {
        let mut t = rng.random_range(0..period) + max_lag;
        while t + max_lag < duration {
            let lag = rng.random_range(-(max_lag as i64)..=max_lag as i64);
            let xl = rng.random_range(0..geometry.width);
            let xr = rng.random_range(0..geometry.width);
            let p = if rng.random_bool(0.5) { Polarity::On } else { Polarity::Off };
            events.push(DvsEvent::new(t, xl, y, p, Side::Left));
            events.push(DvsEvent::new((t as i64 + lag) as Micros, xr, y, p, Side::Right));
            t += period;
        }
    }
    StereoEventStream::with_duration(events, geometry, duration).expect("probe events are in frame")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn g16() -> CameraGeometry {
        CameraGeometry::new(16, 16).unwrap()
    }

    #[test]
    fn fixed_dot_has_exact_twins() {
        let profile = DisparityProfile { rate_hz: 300.0, ..DisparityProfile::constant(2.0) };
        let (s, trace) = gen_stimulus(&profile, g16(), 500_000, 50_000, 1).unwrap();
        let lefts: Vec<_> = s.events().iter().filter(|e| e.side == Side::Left).collect();
        let rights: BTreeSet<_> = s.events().iter().filter(|e| e.side == Side::Right).map(|e| (e.t, e.x, e.y, e.polarity)).collect();
        assert!(lefts.len() > 100);
        assert_eq!(rights.len(), lefts.len());
        for e in lefts {
            assert!(rights.contains(&(e.t, e.x + 2, e.y, e.polarity)));
        }
        assert!(trace.windows.iter().all(|w| w.d_mean == Some(2.0) && w.d_min == Some(2.0)));
        assert_eq!(trace.len(), 10);
        assert_eq!(s.duration(), 500_000);
    }

    #[test]
    fn step_profile_trace() {
        let profile = DisparityProfile { keyframes: vec![(0, 0.0), (500_000, 0.0), (500_000, 4.0)], ..Default::default() };
        let (s, trace) = gen_stimulus(&profile, g16(), 1_000_000, 50_000, 1).unwrap();
        for (i, w) in trace.windows.iter().enumerate() {
            let want = if i < 10 { 0.0 } else { 4.0 };
            assert_eq!((w.d_mean, w.d_min, w.d_max), (Some(want), Some(want), Some(want)), "window {i}");
        }
        for e in s.events() {
            if e.side == Side::Right {
                let d = if e.t < 500_000 { 0 } else { 4 };
                assert!(e.x == 4 + d || e.x == 5 + d);
            }
        }
    }

    #[test]
    fn ramp_trace_band() {
        let profile = DisparityProfile { keyframes: vec![(0, 0.0), (1_000_000, 6.0)], ..Default::default() };
        let tr = profile_trace(&profile, 1, 1_000_000, 50_000);
        let w = &tr.windows[3];
        assert!((w.d_mean.unwrap() - 6.0 * 0.175).abs() < 1e-12);
        assert!((w.d_min.unwrap() - 6.0 * 0.15).abs() < 1e-12);
        assert!((w.d_max.unwrap() - 6.0 * 0.2).abs() < 1e-5);
        // a peak inside the window widens the band
        let tent = DisparityProfile { keyframes: vec![(0, 0.0), (25_000, 2.0), (50_000, 0.0)], ..Default::default() };
        let tw = &profile_trace(&tent, 1, 50_000, 50_000).windows[0];
        assert_eq!(tw.d_max, Some(2.0));
        assert_eq!(tw.d_min, Some(0.0));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let profile = DisparityProfile { jitter_us: 500.0, ..DisparityProfile::constant(-2.0) };
        let a = gen_stimulus(&profile, g16(), 300_000, 50_000, 7).unwrap();
        let b = gen_stimulus(&profile, g16(), 300_000, 50_000, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_stimulus(&profile, g16(), 300_000, 50_000, 8).unwrap();
        assert_ne!(a.0, c.0);
        let fixed = DisparityProfile { seed: Some(3), ..profile };
        assert_eq!(gen_stimulus(&fixed, g16(), 300_000, 50_000, 1).unwrap(), gen_stimulus(&fixed, g16(), 300_000, 50_000, 2).unwrap());
    }

    #[test]
    fn jitter_is_bounded() {
        let profile = DisparityProfile { jitter_us: 200.0, rate_hz: 500.0, ..DisparityProfile::constant(0.0) };
        let (s, _) = gen_stimulus(&profile, g16(), 200_000, 50_000, 4).unwrap();
        for e in s.events() {
            let off = (e.t % LATTICE_US) as i64;
            let off = if off > 500 { off - 1000 } else { off };
            assert!(off.abs() <= 600, "{}", e.t);
        }
    }

    #[test]
    fn out_of_frame_is_reported() {
        let profile = DisparityProfile { keyframes: vec![(0, 0.0), (1_000_000, 20.0)], ..Default::default() };
        match gen_stimulus(&profile, g16(), 1_000_000, 50_000, 1) {
            Err(SynthError::OutOfFrame { t, .. }) => {
                // x + d leaves a width-16 frame once round(d) >= 11
                assert_eq!(round_disparity(profile.disparity_at(t)), 11);
                assert_eq!(round_disparity(profile.disparity_at(t - LATTICE_US)), 10);
            }
            other => panic!("{other:?}"),
        }
        let bad = DisparityProfile { rate_hz: 0.0, ..Default::default() };
        assert!(matches!(gen_stimulus(&bad, g16(), 1000, 1000, 1), Err(SynthError::InvalidProfile(_))));
    }

    #[test]
    fn cloud_blocks_do_not_overlap() {
        for seed in 0..20 {
            let profile = DisparityProfile { shape: Shape::Cloud, size: [1, 2], ..DisparityProfile::constant(2.0) };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cols = block_columns(&profile, g16(), &mut rng).unwrap();
            assert_eq!(cols.len(), 3);
            for w in cols.windows(2) {
                assert!(w[1] >= w[0] + 1 + 2);
            }
            assert!(*cols.last().unwrap() + 1 + 2 <= 16);
            gen_stimulus(&profile, g16(), 100_000, 50_000, seed).unwrap();
        }
        let crowded = DisparityProfile { shape: Shape::Cloud, size: [4, 1], count: 4, ..Default::default() };
        assert!(gen_stimulus(&crowded, g16(), 1000, 1000, 0).is_err());
    }

    fn stream(events: Vec<DvsEvent>) -> StereoEventStream {
        StereoEventStream::new(events, g16()).unwrap()
    }

    #[test]
    fn oracle_basics() {
        let pair = stream(vec![DvsEvent::new(5, 3, 2, Polarity::On, Side::Left), DvsEvent::new(5, 6, 2, Polarity::On, Side::Right)]);
        let m = oracle_matches(&pair, 100).unwrap();
        assert_eq!(m, vec![OracleMatch { left: 0, right: 1, dt: 0, disparity: 3, y: 2 }]);
        let off_row = stream(vec![DvsEvent::new(5, 3, 2, Polarity::On, Side::Left), DvsEvent::new(5, 6, 3, Polarity::On, Side::Right)]);
        assert!(oracle_matches(&off_row, 100).unwrap().is_empty());
        assert!(oracle_matches(&pair, 0).is_err());
    }

    // independent re-check: loop over right events first, scan all lefts
    fn swapped_oracle(s: &StereoEventStream, window: Micros) -> BTreeSet<(usize, usize)> {
        let ev = s.events();
        let mut out = BTreeSet::new();
        for (r, er) in ev.iter().enumerate().filter(|(_, e)| e.side == Side::Right) {
            for (l, el) in ev.iter().enumerate().filter(|(_, e)| e.side == Side::Left) {
                if el.y == er.y && el.t.abs_diff(er.t) <= window {
                    out.insert((l, r));
                }
            }
        }
        out
    }

    #[test]
    fn oracle_matches_reference() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let events = (0..100)
                .map(|_| {
                    let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
                    DvsEvent::new(rng.random_range(0..50_000), rng.random_range(0..16), rng.random_range(0..4), Polarity::On, side)
                })
                .collect();
            let s = stream(events);
            let got: BTreeSet<_> = oracle_matches(&s, 5_000).unwrap().iter().map(|m| (m.left, m.right)).collect();
            assert_eq!(got, swapped_oracle(&s, 5_000));
        }
    }

    #[test]
    fn oracle_side_swap_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let events: Vec<DvsEvent> = (0..200)
            .map(|_| {
                let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
                DvsEvent::new(rng.random_range(0..50_000), rng.random_range(0..16), rng.random_range(0..4), Polarity::On, side)
            })
            .collect();
        let swapped: Vec<DvsEvent> = events.iter().map(|e| DvsEvent { side: e.side.other(), ..*e }).collect();
        let a = oracle_matches(&stream(events), 3_000).unwrap();
        let b = oracle_matches(&stream(swapped), 3_000).unwrap();
        assert_eq!(a.len(), b.len());
        let mut da: Vec<i32> = a.iter().map(|m| m.disparity).collect();
        let mut db: Vec<i32> = b.iter().map(|m| -m.disparity).collect();
        da.sort_unstable();
        db.sort_unstable();
        assert_eq!(da, db);
    }

    #[test]
    fn histogram_estimates() {
        let hist = MatchHistogram { window_us: 10, bins: vec![[(3, 5)].into(), [(0, 1), (2, 1)].into(), BTreeMap::new()] };
        assert_eq!(oracle_disparity_estimate(&hist), vec![Some(3.0), Some(1.0), None]);
    }

    #[test]
    fn clean_dot_matches_true_disparity() {
        // isolated dot without jitter: matches within a short window only
        // pair twins emitted on the same lattice step
        let profile = DisparityProfile { size: [1, 1], rate_hz: 50.0, ..DisparityProfile::constant(3.0) };
        let (s, trace) = gen_stimulus(&profile, g16(), 1_000_000, 50_000, 5).unwrap();
        let m = oracle_matches(&s, 500).unwrap();
        assert!(!m.is_empty());
        assert!(m.iter().all(|m| m.disparity == 3));
        let est = oracle_disparity_estimate(&match_histogram(&s, &m, 50_000).unwrap());
        for (e, w) in est.iter().zip(&trace.windows) {
            if let Some(e) = e {
                assert_eq!(Some(*e), w.d_mean);
            }
        }
    }

    #[test]
    fn jittered_dot_estimate_is_close() {
        let profile = DisparityProfile { jitter_us: 500.0, ..DisparityProfile::constant(2.0) };
        let (s, trace) = gen_stimulus(&profile, g16(), 1_000_000, 50_000, 9).unwrap();
        let m = oracle_matches(&s, 2_000).unwrap();
        let est = oracle_disparity_estimate(&match_histogram(&s, &m, 50_000).unwrap());
        let defined: Vec<f64> = est.iter().flatten().copied().collect();
        assert!(defined.len() > 15);
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        assert!((mean - trace.windows[0].d_mean.unwrap()).abs() <= 0.5, "{mean}");
    }

    #[test]
    fn probe_stream_spacing() {
        let s = sparse_probe_stream(g16(), 2_000_000, 100_000, 15_000, 1);
        for side in [Side::Left, Side::Right] {
            for y in 0..16 {
                let ts: Vec<Micros> = s.events().iter().filter(|e| e.side == side && e.y == y).map(|e| e.t).collect();
                assert!(ts.len() >= 10);
                assert!(ts.windows(2).all(|w| w[1] - w[0] >= 100_000));
            }
        }
    }
}
