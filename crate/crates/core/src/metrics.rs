//! Population read-out and scoring: centre of mass, RMSE, true/false
//! disparity labelling, PCD and the spike-count energy estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::Micros;
use crate::groundtruth::DisparityTrace;
use crate::simulator::{RateMatrix, SpikeRecord};
use crate::topology::{Population, Topology};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no window has both an estimate and ground truth")]
    NoJointWindows,
    #[error("no labelled spikes")]
    NoSpikes,
    #[error("recording duration is zero")]
    ZeroDuration,
    #[error("window mismatch: {0}")]
    WindowMismatch(String),
    #[error("epsilon_d must be finite and >= 0, got {0}")]
    InvalidEpsilon(f64),
    #[error("population {0:?} has no disparity coordinate")]
    NotDisparityPopulation(Population),
}

/// Rate-weighted mean disparity of one population per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoMTrace {
    pub population: Population,
    pub window_us: Micros,
    /// `None` where the population is silent.
    pub values: Vec<Option<f64>>,
}

pub fn center_of_mass(rates: &RateMatrix, topology: &Topology) -> Result<CoMTrace, MetricsError> {
    let d: Vec<f64> = rates
        .neurons
        .iter()
        .map(|&id| topology.disparity_of(id).map(f64::from))
        .collect::<Option<_>>()
        .ok_or(MetricsError::NotDisparityPopulation(rates.population))?;
    Ok(CoMTrace {
        population: rates.population,
        window_us: rates.window_us,
        values: center_of_mass_values(&rates.rates, &d, rates.n_windows),
    })
}

/// `Σ r_n d_n / Σ r_n` per window, for rates indexed `[neuron][window]`.
pub fn center_of_mass_values(rates: &[Vec<f64>], d: &[f64], n_windows: usize) -> Vec<Option<f64>> {
    (0..n_windows)
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (row, &dn) in rates.iter().zip(d) {
                let r = row[i];
                if r > 0.0 {
                    num += r * dn;
                    den += r;
                }
            }
            (den > 0.0).then(|| num / den)
        })
        .collect()
}

/// Root mean square difference over windows where both values are defined.
pub fn rmse_values(a: &[Option<f64>], b: &[Option<f64>]) -> Result<f64, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::WindowMismatch(format!("{} vs {} windows", a.len(), b.len())));
    }
    let (sum, n) = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).powi(2)))
        .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    if n == 0 {
        return Err(MetricsError::NoJointWindows);
    }
    Ok((sum / n as f64).sqrt())
}

pub fn rmse(com: &CoMTrace, gt: &DisparityTrace) -> Result<f64, MetricsError> {
    check_windows(com.window_us, com.values.len(), gt)?;
    rmse_values(&com.values, &gt.d_mean())
}

fn check_windows(window_us: Micros, n: usize, gt: &DisparityTrace) -> Result<(), MetricsError> {
    if window_us != gt.window_us || n != gt.len() {
        return Err(MetricsError::WindowMismatch(format!(
            "{n} windows of {window_us} us vs ground truth {} windows of {} us",
            gt.len(),
            gt.window_us
        )));
    }
    Ok(())
}

/// True- and false-disparity spike counts per window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeLabelCounts {
    pub population: Population,
    pub epsilon_d: f64,
    pub td: Vec<u64>,
    pub fd: Vec<u64>,
}

impl SpikeLabelCounts {
    pub fn td_total(&self) -> u64 {
        self.td.iter().sum()
    }

    pub fn fd_total(&self) -> u64 {
        self.fd.iter().sum()
    }
}

/// A spike in window `i` is a true disparity iff its neuron's `d` lies in
/// `[d_min - ε, d_max + ε]`. Windows without ground truth count nothing, and
/// spikes past the last ground-truth window are ignored.
pub fn label_spikes(
    record: &SpikeRecord,
    topology: &Topology,
    gt: &DisparityTrace,
    epsilon_d: f64,
    population: Population,
) -> Result<SpikeLabelCounts, MetricsError> {
    if !(epsilon_d.is_finite() && epsilon_d >= 0.0) {
        return Err(MetricsError::InvalidEpsilon(epsilon_d));
    }
    if population.is_retina() {
        return Err(MetricsError::NotDisparityPopulation(population));
    }
    if gt.window_us == 0 {
        return Err(MetricsError::WindowMismatch("zero-length window".into()));
    }
    let n = gt.len();
    let mut td = vec![0; n];
    let mut fd = vec![0; n];
    for s in record.of_population(population) {
        let i = (s.t / gt.window_us) as usize;
        let Some(w) = gt.windows.get(i) else { continue };
        let (Some(lo), Some(hi)) = (w.d_min, w.d_max) else { continue };
        let d = topology.disparity_of(s.neuron).ok_or(MetricsError::NotDisparityPopulation(population))? as f64;
        if d >= lo - epsilon_d && d <= hi + epsilon_d {
            td[i] += 1;
        } else {
            fd[i] += 1;
        }
    }
    Ok(SpikeLabelCounts { population, epsilon_d, td, fd })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PcdMode {
    /// `Σ TD / Σ (TD + FD)`.
    #[default]
    Global,
    /// Mean of per-window `TD / (TD + FD)` over windows with spikes.
    PerWindowMean,
}

pub fn pcd(counts: &SpikeLabelCounts, mode: PcdMode) -> Result<f64, MetricsError> {
    let total = counts.td_total() + counts.fd_total();
    if total == 0 {
        return Err(MetricsError::NoSpikes);
    }
    Ok(match mode {
        PcdMode::Global => counts.td_total() as f64 / total as f64,
        PcdMode::PerWindowMean => {
            let fractions: Vec<f64> = counts
                .td
                .iter()
                .zip(&counts.fd)
                .filter(|(t, f)| **t + **f > 0)
                .map(|(&t, &f)| t as f64 / (t + f) as f64)
                .collect();
            fractions.iter().sum::<f64>() / fractions.len() as f64
        }
    })
}

/// Energy per counted operation, in joules. The defaults are placeholders of
/// plausible magnitude for mixed-signal hardware, not measured constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyCoefficients {
    pub input_event_j: f64,
    pub spike_j: f64,
    pub synaptic_event_j: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        Self { input_event_j: 50e-12, spike_j: 500e-12, synaptic_event_j: 20e-12 }
    }
}

/// Average power in µW over the recording.
pub fn estimate_energy(record: &SpikeRecord, coefficients: &EnergyCoefficients) -> Result<f64, MetricsError> {
    if record.duration == 0 {
        return Err(MetricsError::ZeroDuration);
    }
    let joules = coefficients.input_event_j * record.input_events as f64
        + coefficients.spike_j * record.spikes.len() as f64
        + coefficients.synaptic_event_j * record.synaptic_events as f64;
    Ok(joules / (record.duration as f64 * 1e-6) * 1e6)
}

/// Median of the defined values.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationMetrics {
    pub population: Population,
    pub spikes: u64,
    pub rmse: Option<f64>,
    pub pcd: Option<f64>,
    pub td_total: u64,
    pub fd_total: u64,
    pub median_com: Option<f64>,
    pub com: Vec<Option<f64>>,
    pub td: Vec<u64>,
    pub fd: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub input_events: u64,
    pub synaptic_events: u64,
    pub coincidence_spikes: u64,
    pub disparity_spikes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub window_us: Micros,
    pub epsilon_d: f64,
    pub pcd_mode: PcdMode,
    pub duration_us: Micros,
    pub n_windows: usize,
    /// Headline numbers.
    pub disparity: PopulationMetrics,
    /// Excitatory coincidence copy; the inhibitory twin carries the same drive.
    pub coincidence: PopulationMetrics,
    pub energy_uw: Option<f64>,
    pub counts: ReportCounts,
    pub ground_truth_d_mean: Vec<Option<f64>>,
    pub config: serde_json::Value,
}

pub struct ReportInputs<'a> {
    pub label: &'a str,
    pub record: &'a SpikeRecord,
    pub topology: &'a Topology,
    pub ground_truth: &'a DisparityTrace,
    pub coincidence_rates: &'a RateMatrix,
    pub disparity_rates: &'a RateMatrix,
    pub epsilon_d: f64,
    pub pcd_mode: PcdMode,
    pub energy: Option<&'a EnergyCoefficients>,
    pub config: serde_json::Value,
}

fn population_metrics(
    inputs: &ReportInputs,
    rates: &RateMatrix,
) -> Result<(PopulationMetrics, CoMTrace), MetricsError> {
    let gt = inputs.ground_truth;
    check_windows(rates.window_us, rates.n_windows, gt)?;
    let com = center_of_mass(rates, inputs.topology)?;
    let labels = label_spikes(inputs.record, inputs.topology, gt, inputs.epsilon_d, rates.population)?;
    let rmse = match rmse(&com, gt) {
        Ok(v) => Some(v),
        Err(MetricsError::NoJointWindows) => None,
        Err(e) => return Err(e),
    };
    let pcd = match pcd(&labels, inputs.pcd_mode) {
        Ok(v) => Some(v),
        Err(MetricsError::NoSpikes) => None,
        Err(e) => return Err(e),
    };
    let m = PopulationMetrics {
        population: rates.population,
        spikes: inputs.record.count(rates.population),
        rmse,
        pcd,
        td_total: labels.td_total(),
        fd_total: labels.fd_total(),
        median_com: median(&com.values),
        com: com.values.clone(),
        td: labels.td,
        fd: labels.fd,
    };
    Ok((m, com))
}

pub fn build_report(inputs: &ReportInputs) -> Result<MetricsReport, MetricsError> {
    if inputs.coincidence_rates.population != Population::CoincidenceExc
        || inputs.disparity_rates.population != Population::Disparity
    {
        return Err(MetricsError::WindowMismatch("rate matrices are for the wrong populations".into()));
    }
    let (disparity, _) = population_metrics(inputs, inputs.disparity_rates)?;
    let (coincidence, _) = population_metrics(inputs, inputs.coincidence_rates)?;
    let energy_uw = inputs.energy.map(|c| estimate_energy(inputs.record, c)).transpose()?;
    let r = inputs.record;
    Ok(MetricsReport {
        label: inputs.label.to_owned(),
        window_us: inputs.ground_truth.window_us,
        epsilon_d: inputs.epsilon_d,
        pcd_mode: inputs.pcd_mode,
        duration_us: r.duration,
        n_windows: inputs.ground_truth.len(),
        disparity,
        coincidence,
        energy_uw,
        counts: ReportCounts {
            input_events: r.input_events,
            synaptic_events: r.synaptic_events,
            coincidence_spikes: r.count(Population::CoincidenceExc) + r.count(Population::CoincidenceInh),
            disparity_spikes: r.count(Population::Disparity),
        },
        ground_truth_d_mean: inputs.ground_truth.d_mean(),
        config: inputs.config.clone(),
    })
}
