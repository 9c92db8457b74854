//! Event data model, CSV I/O and deterministic stereo merging.
//!
//! Event files are UTF-8 CSV with header `t_us,x,y,p,side`, where `p` is `0`
//! (OFF) or `1` (ON) and `side` is `L` or `R`. Single-sided files may omit the
//! `side` column; the caller then supplies the side.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Microseconds since recording start.
pub type Micros = u64;

#[derive(Debug, Error)]
pub enum EventError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {msg}")]
    Malformed { path: PathBuf, line: u64, msg: String },
    #[error("{path}: line {line}: timestamp {value:?} is not a non-negative integer")]
    NonIntegerTimestamp { path: PathBuf, line: u64, value: String },
    #[error("event at ({x}, {y}) lies outside {width}x{height} geometry")]
    OutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("file has no side column and no side was supplied")]
    MissingSide,
    #[error("{0} stream contains events from both cameras")]
    MixedSides(Side),
    #[error("geometry mismatch: {0:?} vs {1:?}")]
    GeometryMismatch(CameraGeometry, CameraGeometry),
    #[error("invalid geometry {0}x{1}")]
    InvalidGeometry(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Off,
    On,
}

impl Polarity {
    pub fn as_bit(self) -> u8 {
        match self {
            Polarity::Off => 0,
            Polarity::On => 1,
        }
    }
}

/// Camera side. `Left` orders before `Right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn code(self) -> &'static str {
        match self {
            Side::Left => "L",
            Side::Right => "R",
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" | "l" | "left" | "LEFT" => Ok(Side::Left),
            "R" | "r" | "right" | "RIGHT" => Ok(Side::Right),
            other => Err(format!("unknown side {other:?}")),
        }
    }
}

/// A single brightness-change event.
///
/// Field order is the canonical sort key: `(t, side, y, x, polarity)`, so the
/// derived `Ord` is the pipeline-wide ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DvsEvent {
    pub t: Micros,
    pub side: Side,
    pub y: u32,
    pub x: u32,
    pub polarity: Polarity,
}

impl DvsEvent {
    pub fn new(t: Micros, x: u32, y: u32, polarity: Polarity, side: Side) -> Self {
        Self { t, side, y, x, polarity }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CameraGeometry {
    pub width: u32,
    pub height: u32,
}

impl CameraGeometry {
    /// Full DAVIS346 sensor resolution.
    pub const DAVIS346: CameraGeometry = CameraGeometry { width: 346, height: 260 };

    pub fn new(width: u32, height: u32) -> Result<Self, EventError> {
        if width == 0 || height == 0 {
            return Err(EventError::InvalidGeometry(width, height));
        }
        Ok(Self { width, height })
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x < self.width && y < self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

impl Default for CameraGeometry {
    fn default() -> Self {
        Self::DAVIS346
    }
}

/// Time-ordered events from one or both cameras.
///
/// Immutable once built; every constructor validates bounds and sorts by the
/// canonical key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StereoEventStream {
    events: Vec<DvsEvent>,
    geometry: CameraGeometry,
    duration: Micros,
}

impl StereoEventStream {
    /// Sorts `events` canonically and checks bounds. Duration is the last timestamp.
    pub fn new(events: Vec<DvsEvent>, geometry: CameraGeometry) -> Result<Self, EventError> {
        let duration = events.iter().map(|e| e.t).max().unwrap_or(0);
        Self::with_duration(events, geometry, duration)
    }

    /// Like [`StereoEventStream::new`] but with an explicit duration, which is
    /// raised to the last timestamp if smaller.
    pub fn with_duration(
        mut events: Vec<DvsEvent>,
        geometry: CameraGeometry,
        duration: Micros,
    ) -> Result<Self, EventError> {
        if geometry.width == 0 || geometry.height == 0 {
            return Err(EventError::InvalidGeometry(geometry.width, geometry.height));
        }
        if let Some(e) = events.iter().find(|e| !geometry.contains(e.x, e.y)) {
            return Err(EventError::OutOfBounds {
                x: e.x,
                y: e.y,
                width: geometry.width,
                height: geometry.height,
            });
        }
        events.sort_unstable();
        let last = events.last().map(|e| e.t).unwrap_or(0);
        Ok(Self { events, geometry, duration: duration.max(last) })
    }

    pub fn empty(geometry: CameraGeometry) -> Self {
        Self { events: Vec::new(), geometry, duration: 0 }
    }

    /// Builds a stream from events already known to be sorted and in bounds,
    /// e.g. the surviving subsequence of a valid stream.
    pub(crate) fn from_sorted_unchecked(
        events: Vec<DvsEvent>,
        geometry: CameraGeometry,
        duration: Micros,
    ) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(events.iter().all(|e| geometry.contains(e.x, e.y)));
        Self { events, geometry, duration }
    }

    pub fn events(&self) -> &[DvsEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<DvsEvent> {
        self.events
    }

    pub fn geometry(&self) -> CameraGeometry {
        self.geometry
    }

    pub fn duration(&self) -> Micros {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn count_side(&self, side: Side) -> usize {
        self.events.iter().filter(|e| e.side == side).count()
    }

    /// The single side of the stream, `None` if empty or mixed.
    pub fn single_side(&self) -> Option<Side> {
        let first = self.events.first()?.side;
        self.events.iter().all(|e| e.side == first).then_some(first)
    }

    /// Shifts all timestamps so that `origin` becomes t = 0. Events before
    /// `origin` are dropped.
    pub fn rebase(&self, origin: Micros) -> StereoEventStream {
        let events = self
            .events
            .iter()
            .filter(|e| e.t >= origin)
            .map(|e| DvsEvent { t: e.t - origin, ..*e })
            .collect();
        Self::from_sorted_unchecked(events, self.geometry, self.duration.saturating_sub(origin))
    }

    /// Keeps events satisfying `keep`, preserving order, duration and geometry.
    pub fn retain(&self, mut keep: impl FnMut(&DvsEvent) -> bool) -> StereoEventStream {
        let events = self.events.iter().copied().filter(|e| keep(e)).collect();
        Self::from_sorted_unchecked(events, self.geometry, self.duration)
    }
}

/// Reads an event CSV. `default_side` is required when the file lacks a
/// `side` column and ignored otherwise.
pub fn parse_event_file(
    path: impl AsRef<Path>,
    geometry: CameraGeometry,
    default_side: Option<Side>,
) -> Result<StereoEventStream, EventError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| EventError::Io { path: path.to_owned(), source })?;
    parse_event_reader(file, path, geometry, default_side)
}

pub fn parse_event_reader(
    reader: impl std::io::Read,
    path: &Path,
    geometry: CameraGeometry,
    default_side: Option<Side>,
) -> Result<StereoEventStream, EventError> {
    let malformed = |line: u64, msg: String| EventError::Malformed { path: path.to_owned(), line, msg };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    let has_side = match cols.as_slice() {
        ["t_us", "x", "y", "p", "side"] => true,
        ["t_us", "x", "y", "p"] => false,
        _ => return Err(malformed(1, format!("unexpected header {:?}", headers.as_slice()))),
    };
    if !has_side && default_side.is_none() {
        return Err(EventError::MissingSide);
    }

    let mut events = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let t_raw = field(0);
        let t: Micros = t_raw.parse().map_err(|_| EventError::NonIntegerTimestamp {
            path: path.to_owned(),
            line,
            value: t_raw.to_owned(),
        })?;
        let x: u32 = field(1).parse().map_err(|_| malformed(line, format!("bad x {:?}", field(1))))?;
        let y: u32 = field(2).parse().map_err(|_| malformed(line, format!("bad y {:?}", field(2))))?;
        let polarity = match field(3) {
            "0" => Polarity::Off,
            "1" => Polarity::On,
            p => return Err(malformed(line, format!("bad polarity {p:?}"))),
        };
        let side = if has_side {
            match field(4) {
                "L" => Side::Left,
                "R" => Side::Right,
                s => return Err(malformed(line, format!("bad side {s:?}"))),
            }
        } else {
            default_side.expect("checked above")
        };
        if !geometry.contains(x, y) {
            return Err(EventError::OutOfBounds { x, y, width: geometry.width, height: geometry.height });
        }
        events.push(DvsEvent::new(t, x, y, polarity, side));
    }
    StereoEventStream::new(events, geometry)
}

/// Writes the stream with a `side` column.
pub fn write_event_file(stream: &StereoEventStream, path: impl AsRef<Path>) -> Result<(), EventError> {
    let path = path.as_ref();
    let io_err = |source| EventError::Io { path: path.to_owned(), source };
    crate::io::write_atomic(path, |w| write_events(stream, w)).map_err(io_err)
}

pub fn write_events(stream: &StereoEventStream, w: &mut dyn Write) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "t_us,x,y,p,side")?;
    for e in stream.events() {
        writeln!(w, "{},{},{},{},{}", e.t, e.x, e.y, e.polarity.as_bit(), e.side.code())?;
    }
    w.flush()
}

/// Merges a left-only and a right-only stream into canonical order.
pub fn merge_streams(
    left: &StereoEventStream,
    right: &StereoEventStream,
) -> Result<StereoEventStream, EventError> {
    if left.geometry != right.geometry {
        return Err(EventError::GeometryMismatch(left.geometry, right.geometry));
    }
    if left.events.iter().any(|e| e.side != Side::Left) {
        return Err(EventError::MixedSides(Side::Left));
    }
    if right.events.iter().any(|e| e.side != Side::Right) {
        return Err(EventError::MixedSides(Side::Right));
    }
    let mut out = Vec::with_capacity(left.len() + right.len());
    let (mut a, mut b) = (left.events.iter().peekable(), right.events.iter().peekable());
    loop {
        let next = match (a.peek(), b.peek()) {
            (Some(l), Some(r)) => {
                if l <= r {
                    a.next()
                } else {
                    b.next()
                }
            }
            (Some(_), None) => a.next(),
            (None, Some(_)) => b.next(),
            (None, None) => break,
        };
        out.extend(next.copied());
    }
    Ok(StereoEventStream::from_sorted_unchecked(
        out,
        left.geometry,
        left.duration.max(right.duration),
    ))
}
