//! Noise filtering, downscaling and cropping of raw event streams.
//!
//! Every stage is a filter plus coordinate remap: surviving events keep their
//! relative order and timestamps, and no stage creates events.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{CameraGeometry, Micros, Side, StereoEventStream};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("mask region {0:?} exceeds {1}x{2} geometry")]
    RegionOutOfBounds(Rect, u32, u32),
    #[error("downscale factor must be >= 1 and no larger than the sensor, got {0}")]
    InvalidFactor(u32),
    #[error("crop {w}x{h} at ({x}, {y}) does not fit in {gw}x{gh}")]
    CropOutOfBounds { x: u32, y: u32, w: u32, h: u32, gw: u32, gh: u32 },
    #[error("background window must be > 0")]
    InvalidWindow,
    #[error("hot pixel factor must be finite and > 0, got {0}")]
    InvalidHotPixelFactor(f64),
    #[error("crop origin not set and auto-crop disabled")]
    MissingCropOrigin,
}

/// Axis-aligned pixel rectangle, half-open on the right and bottom edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && y >= self.y && x - self.x < self.width && y - self.y < self.height
    }

    fn fits(&self, g: CameraGeometry) -> bool {
        self.x as u64 + self.width as u64 <= g.width as u64 && self.y as u64 + self.height as u64 <= g.height as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundFilter {
    pub window_us: Micros,
    /// Chebyshev radius of the support neighbourhood.
    pub radius: u32,
    /// Whether an earlier event at the same pixel counts as support.
    pub include_same_pixel: bool,
}

impl Default for BackgroundFilter {
    fn default() -> Self {
        Self { window_us: 5_000, radius: 1, include_same_pixel: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    /// Full-resolution rectangles whose events are discarded.
    pub mask_regions: Vec<Rect>,
    /// `None` disables hot-pixel removal.
    pub hot_pixel_rate_factor: Option<f64>,
    /// `None` disables the background-activity filter.
    pub background: Option<BackgroundFilter>,
    pub downscale_factor: u32,
    /// Crop origin in downscaled coordinates.
    pub crop_origin: Option<[u32; 2]>,
    /// Center the crop on the event centroid of the first second instead.
    pub auto_crop: bool,
    pub crop_size: [u32; 2],
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            mask_regions: Vec::new(),
            hot_pixel_rate_factor: Some(10.0),
            background: Some(BackgroundFilter::default()),
            downscale_factor: 6,
            crop_origin: None,
            auto_crop: false,
            crop_size: [16, 16],
        }
    }
}

impl PreprocessConfig {
    /// Configuration that leaves a stream of geometry `g` untouched.
    pub fn pass_through(g: CameraGeometry) -> Self {
        Self {
            mask_regions: Vec::new(),
            hot_pixel_rate_factor: None,
            background: None,
            downscale_factor: 1,
            crop_origin: Some([0, 0]),
            auto_crop: false,
            crop_size: [g.width, g.height],
        }
    }

    pub fn reduced_geometry(&self, g: CameraGeometry) -> Result<CameraGeometry, PreprocessError> {
        let f = self.downscale_factor;
        if f == 0 || f > g.width || f > g.height {
            return Err(PreprocessError::InvalidFactor(f));
        }
        Ok(CameraGeometry { width: g.width / f, height: g.height / f })
    }

    pub fn output_geometry(&self) -> CameraGeometry {
        CameraGeometry { width: self.crop_size[0], height: self.crop_size[1] }
    }

    /// Checks everything that can be checked without data. A missing crop
    /// origin is accepted here when `auto_crop` is set.
    pub fn validate(&self, g: CameraGeometry) -> Result<(), PreprocessError> {
        if let Some(r) = self.mask_regions.iter().find(|r| !r.fits(g)) {
            return Err(PreprocessError::RegionOutOfBounds(*r, g.width, g.height));
        }
        if let Some(f) = self.hot_pixel_rate_factor {
            if !(f.is_finite() && f > 0.0) {
                return Err(PreprocessError::InvalidHotPixelFactor(f));
            }
        }
        if let Some(bg) = &self.background {
            if bg.window_us == 0 {
                return Err(PreprocessError::InvalidWindow);
            }
        }
        let reduced = self.reduced_geometry(g)?;
        match self.crop_origin {
            Some([x, y]) => check_crop(reduced, [x, y], self.crop_size)?,
            None if self.auto_crop => check_crop(reduced, [0, 0], self.crop_size)?,
            None => return Err(PreprocessError::MissingCropOrigin),
        }
        Ok(())
    }
}

fn check_crop(g: CameraGeometry, origin: [u32; 2], size: [u32; 2]) -> Result<(), PreprocessError> {
    let fits = size[0] > 0
        && size[1] > 0
        && origin[0] as u64 + size[0] as u64 <= g.width as u64
        && origin[1] as u64 + size[1] as u64 <= g.height as u64;
    if fits {
        Ok(())
    } else {
        Err(PreprocessError::CropOutOfBounds {
            x: origin[0],
            y: origin[1],
            w: size[0],
            h: size[1],
            gw: g.width,
            gh: g.height,
        })
    }
}

pub fn mask_regions(stream: &StereoEventStream, regions: &[Rect]) -> Result<StereoEventStream, PreprocessError> {
    let g = stream.geometry();
    if let Some(r) = regions.iter().find(|r| !r.fits(g)) {
        return Err(PreprocessError::RegionOutOfBounds(*r, g.width, g.height));
    }
    Ok(stream.retain(|e| !regions.iter().any(|r| r.contains(e.x, e.y))))
}

/// Pixels whose event count exceeds `factor` times the median non-zero
/// per-pixel count of their side, over the whole stream.
pub fn detect_hot_pixels(stream: &StereoEventStream, factor: f64) -> BTreeSet<(u32, u32, Side)> {
    let mut counts: HashMap<(u32, u32, Side), u64> = HashMap::new();
    for e in stream.events() {
        *counts.entry((e.x, e.y, e.side)).or_default() += 1;
    }
    let mut hot = BTreeSet::new();
    for side in [Side::Left, Side::Right] {
        let mut side_counts: Vec<u64> = counts.iter().filter(|(k, _)| k.2 == side).map(|(_, &c)| c).collect();
        if side_counts.is_empty() {
            continue;
        }
        side_counts.sort_unstable();
        let n = side_counts.len();
        let median = if n % 2 == 1 {
            side_counts[n / 2] as f64
        } else {
            (side_counts[n / 2 - 1] + side_counts[n / 2]) as f64 / 2.0
        };
        let limit = factor * median;
        hot.extend(counts.iter().filter(|(k, &c)| k.2 == side && c as f64 > limit).map(|(k, _)| *k));
    }
    hot
}

pub fn remove_pixels(stream: &StereoEventStream, pixels: &BTreeSet<(u32, u32, Side)>) -> StereoEventStream {
    if pixels.is_empty() {
        return stream.clone();
    }
    stream.retain(|e| !pixels.contains(&(e.x, e.y, e.side)))
}

/// Background-activity filter: an event survives iff an earlier event of the
/// same side, within Chebyshev distance `radius`, happened at most
/// `window_us` before it. Every input event updates the support map, whether
/// it survives or not.
pub fn filter_background(stream: &StereoEventStream, filter: &BackgroundFilter) -> Result<StereoEventStream, PreprocessError> {
    if filter.window_us == 0 {
        return Err(PreprocessError::InvalidWindow);
    }
    let g = stream.geometry();
    let (w, h) = (g.width as i64, g.height as i64);
    let r = filter.radius as i64;
    let mut last: [Vec<Option<Micros>>; 2] = [vec![None; g.pixel_count()], vec![None; g.pixel_count()]];

    let mut keep = Vec::with_capacity(stream.len());
    for e in stream.events() {
        let map = &mut last[e.side as usize];
        let (ex, ey) = (e.x as i64, e.y as i64);
        let mut supported = false;
        'scan: for y in (ey - r).max(0)..=(ey + r).min(h - 1) {
            for x in (ex - r).max(0)..=(ex + r).min(w - 1) {
                if x == ex && y == ey && !filter.include_same_pixel {
                    continue;
                }
                if let Some(t) = map[(y * w + x) as usize] {
                    if e.t - t <= filter.window_us {
                        supported = true;
                        break 'scan;
                    }
                }
            }
        }
        map[(ey * w + ex) as usize] = Some(e.t);
        keep.push(supported);
    }
    let mut flags = keep.into_iter();
    Ok(stream.retain(|_| flags.next().unwrap_or(false)))
}

/// Maps `factor`×`factor` pixel blocks to one pixel. Events in the remainder
/// strip of a non-divisible sensor are dropped.
pub fn downscale(stream: &StereoEventStream, factor: u32) -> Result<StereoEventStream, PreprocessError> {
    let g = stream.geometry();
    if factor == 0 || factor > g.width || factor > g.height {
        return Err(PreprocessError::InvalidFactor(factor));
    }
    if factor == 1 {
        return Ok(stream.clone());
    }
    let reduced = CameraGeometry { width: g.width / factor, height: g.height / factor };
    let events = stream
        .events()
        .iter()
        .map(|e| crate::events::DvsEvent { x: e.x / factor, y: e.y / factor, ..*e })
        .filter(|e| reduced.contains(e.x, e.y))
        .collect::<Vec<_>>();
    // Only events sharing a timestamp can change relative order here.
    Ok(resort(events, reduced, stream.duration()))
}

pub fn crop(stream: &StereoEventStream, origin: [u32; 2], size: [u32; 2]) -> Result<StereoEventStream, PreprocessError> {
    let g = stream.geometry();
    check_crop(g, origin, size)?;
    let rect = Rect { x: origin[0], y: origin[1], width: size[0], height: size[1] };
    let events = stream
        .events()
        .iter()
        .filter(|e| rect.contains(e.x, e.y))
        .map(|e| crate::events::DvsEvent { x: e.x - origin[0], y: e.y - origin[1], ..*e })
        .collect::<Vec<_>>();
    Ok(resort(events, CameraGeometry { width: size[0], height: size[1] }, stream.duration()))
}

fn resort(mut events: Vec<crate::events::DvsEvent>, g: CameraGeometry, duration: Micros) -> StereoEventStream {
    // Stable: events that become identical keep their input order.
    events.sort();
    StereoEventStream::from_sorted_unchecked(events, g, duration)
}

/// Crop origin centering `size` on the event centroid of the first second.
pub fn auto_crop_origin(stream: &StereoEventStream, size: [u32; 2]) -> [u32; 2] {
    let g = stream.geometry();
    let first = stream.events().first().map(|e| e.t).unwrap_or(0);
    let (mut sx, mut sy, mut n) = (0f64, 0f64, 0u64);
    for e in stream.events().iter().take_while(|e| e.t < first + 1_000_000) {
        sx += e.x as f64;
        sy += e.y as f64;
        n += 1;
    }
    let (cx, cy) = if n == 0 {
        (g.width as f64 / 2.0, g.height as f64 / 2.0)
    } else {
        ((sx / n as f64) + 0.5, (sy / n as f64) + 0.5)
    };
    let place = |c: f64, len: u32, total: u32| -> u32 {
        let max = total.saturating_sub(len) as f64;
        (c - len as f64 / 2.0).round().clamp(0.0, max) as u32
    };
    [place(cx, size[0], g.width), place(cy, size[1], g.height)]
}

/// Mask, hot-pixel removal, background filter, downscale and crop, in that
/// order. Returns the output stream and the crop origin that was used.
pub fn preprocess_pipeline(
    stream: &StereoEventStream,
    config: &PreprocessConfig,
) -> Result<(StereoEventStream, [u32; 2]), PreprocessError> {
    config.validate(stream.geometry())?;
    let mut s = mask_regions(stream, &config.mask_regions)?;
    if let Some(factor) = config.hot_pixel_rate_factor {
        let hot = detect_hot_pixels(&s, factor);
        if !hot.is_empty() {
            log::info!("removing {} hot pixels", hot.len());
        }
        s = remove_pixels(&s, &hot);
    }
    if let Some(bg) = &config.background {
        s = filter_background(&s, bg)?;
    }
    s = downscale(&s, config.downscale_factor)?;
    let origin = match config.crop_origin {
        Some(o) => o,
        None if config.auto_crop => auto_crop_origin(&s, config.crop_size),
        None => return Err(PreprocessError::MissingCropOrigin),
    };
    Ok((crop(&s, origin, config.crop_size)?, origin))
}
