//! Run configuration: one JSON document with a section per stage.
//!
//! Relative paths are resolved against the directory of the config file.
//! Individual keys can be overridden with `section.key=value` assignments,
//! where `value` is parsed as JSON and falls back to a plain string.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::events::{CameraGeometry, Micros};
use crate::metrics::{EnergyCoefficients, PcdMode};
use crate::preprocess::PreprocessConfig;
use crate::simulator::LifParams;
use crate::synth::DisparityProfile;
use crate::topology::TopologyParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad override {0:?}: expected section.key=value")]
    BadOverride(String),
    #[error("override {key:?}: {msg}")]
    OverrideTarget { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// Recorded event files with marker ground truth.
    Files {
        /// Left-camera events, or both cameras if `right` is absent.
        left: PathBuf,
        #[serde(default)]
        right: Option<PathBuf>,
        /// Full-resolution sensor size.
        #[serde(default = "davis_geometry")]
        geometry: [u32; 2],
        /// 3D marker CSV; requires `calibration`.
        #[serde(default)]
        markers: Option<PathBuf>,
        /// JSON with `left` and `right` 3×4 projection matrices.
        #[serde(default)]
        calibration: Option<PathBuf>,
        /// Precomputed ground-truth trace CSV, used instead of markers.
        #[serde(default)]
        trace: Option<PathBuf>,
        /// Recording length after rebasing to t = 0; defaults to the last
        /// event timestamp.
        #[serde(default)]
        duration_us: Option<Micros>,
    },
    /// Generated stimulus with exact ground truth.
    Synthetic {
        profile: DisparityProfile,
        duration_us: Micros,
        #[serde(default = "retina_geometry")]
        geometry: [u32; 2],
    },
}

fn davis_geometry() -> [u32; 2] {
    [CameraGeometry::DAVIS346.width, CameraGeometry::DAVIS346.height]
}

fn retina_geometry() -> [u32; 2] {
    [16, 16]
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig::Synthetic {
            profile: DisparityProfile::default(),
            duration_us: 2_000_000,
            geometry: retina_geometry(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub window_us: Micros,
    pub epsilon_d: f64,
    pub pcd_mode: PcdMode,
    pub energy: EnergyCoefficients,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { window_us: 50_000, epsilon_d: 1.0, pcd_mode: PcdMode::Global, energy: EnergyCoefficients::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Worker threads for the row-parallel simulator; 1 runs serially.
    pub threads: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write figure-shaped CSVs (raster, rate map, disparity histogram).
    pub figures: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), figures: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Free-form sample label copied into the report.
    pub label: String,
    /// Seed for synthetic input when the profile has none.
    pub seed: u64,
    pub input: InputConfig,
    /// `None` feeds events to the network unchanged.
    pub preprocess: Option<PreprocessConfig>,
    pub topology: TopologyParams,
    pub neuron: LifParams,
    pub simulation: SimulationConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Reads `path`, applies overrides and resolves relative paths.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let mut value: Value =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_owned(), source })?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let mut config: RunConfig =
            serde_json::from_value(value).map_err(|source| ConfigError::Parse { path: path.to_owned(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    /// Makes every path absolute relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            let joined = base.join(&*p);
            *p = std::path::absolute(&joined).unwrap_or(joined);
        };
        if let InputConfig::Files { left, right, markers, calibration, trace, .. } = &mut self.input {
            fix(left);
            for p in [right, markers, calibration, trace].into_iter().flatten() {
                fix(p);
            }
        }
        fix(&mut self.output.dir);
    }

    /// Checks that do not need input data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.analysis.window_us == 0 {
            return invalid("analysis.window_us must be > 0".into());
        }
        if !(self.analysis.epsilon_d.is_finite() && self.analysis.epsilon_d >= 0.0) {
            return invalid(format!("analysis.epsilon_d must be >= 0, got {}", self.analysis.epsilon_d));
        }
        if self.simulation.threads == 0 {
            return invalid("simulation.threads must be >= 1".into());
        }
        self.neuron.validate().map_err(|e| ConfigError::Invalid(format!("neuron: {e}")))?;
        match &self.input {
            InputConfig::Files { geometry, markers, calibration, trace, .. } => {
                CameraGeometry::new(geometry[0], geometry[1]).map_err(|e| ConfigError::Invalid(format!("input: {e}")))?;
                if markers.is_some() != calibration.is_some() {
                    return invalid("input: markers and calibration must be given together".into());
                }
                if markers.is_none() && trace.is_none() {
                    return invalid("input: ground truth needs markers + calibration or a trace file".into());
                }
                if markers.is_some() && trace.is_some() {
                    return invalid("input: give either markers or trace, not both".into());
                }
            }
            InputConfig::Synthetic { profile, duration_us, geometry } => {
                if self.preprocess.is_some() {
                    return invalid("preprocess: not applicable to synthetic input".into());
                }
                if *duration_us == 0 {
                    return invalid("input.duration_us must be > 0".into());
                }
                if geometry[0] != self.topology.retina_width || geometry[1] != self.topology.retina_height {
                    return invalid(format!(
                        "input.geometry {}x{} does not match the {}x{} retina",
                        geometry[0], geometry[1], self.topology.retina_width, self.topology.retina_height
                    ));
                }
                profile.validate().map_err(|e| ConfigError::Invalid(format!("input.profile: {e}")))?;
                if profile.max_abs_disparity() > self.topology.d_max as f64 + 0.5 {
                    return invalid(format!(
                        "input.profile reaches |d| = {} beyond topology.d_max = {}",
                        profile.max_abs_disparity(),
                        self.topology.d_max
                    ));
                }
            }
        }
        Ok(())
    }

    /// The resolved configuration as JSON, suitable for feeding back.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Applies one `a.b.c=value` assignment to a JSON document, creating
/// intermediate objects as needed.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| ConfigError::BadOverride(assignment.to_owned()))?;
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::BadOverride(assignment.to_owned()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut node = doc;
    for part in &parts[..parts.len() - 1] {
        if node.is_null() {
            *node = Value::Object(Default::default());
        }
        let Value::Object(map) = node else {
            return Err(ConfigError::OverrideTarget { key: key.to_owned(), msg: format!("{part:?} is inside a non-object") });
        };
        node = map.entry(part.to_string()).or_insert(Value::Null);
    }
    if node.is_null() {
        *node = Value::Object(Default::default());
    }
    match node {
        Value::Object(map) => {
            map.insert(parts[parts.len() - 1].to_owned(), value);
            Ok(())
        }
        _ => Err(ConfigError::OverrideTarget { key: key.to_owned(), msg: "parent is not an object".into() }),
    }
}
