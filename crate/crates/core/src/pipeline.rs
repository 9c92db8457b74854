//! End-to-end orchestration behind the command-line subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{InputConfig, RunConfig};
use crate::events::{merge_streams, parse_event_file, write_event_file, CameraGeometry, Micros, Side, StereoEventStream};
use crate::groundtruth::{
    disparity_trajectory, parse_marker_file, project_markers, read_trace, rebase_tracks, to_downscaled_coords, write_trace,
    DisparityTrace, StereoCalibration,
};
use crate::io::write_atomic;
use crate::metrics::{build_report, MetricsReport, ReportInputs};
use crate::preprocess::preprocess_pipeline;
use crate::simulator::{instantaneous_rates, simulate, simulate_parallel, RateMatrix, Spike, SpikeRecord};
use crate::synth::gen_stimulus;
use crate::topology::{NeuronInfo, Population, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad configuration or input data.
    Config,
    /// Failure while processing valid input.
    Runtime,
}

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub class: ErrorClass,
    pub stage: &'static str,
    pub message: String,
}

impl PipelineError {
    pub fn config(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError { class: ErrorClass::Config, stage, message: e.to_string() }
    }

    pub fn runtime(stage: &'static str, e: impl std::fmt::Display) -> Self {
        PipelineError { class: ErrorClass::Runtime, stage, message: e.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Config => 2,
            ErrorClass::Runtime => 1,
        }
    }
}

/// Network-ready input plus its ground truth.
#[derive(Debug, Clone)]
pub struct PreparedInput {
    pub stream: StereoEventStream,
    pub ground_truth: DisparityTrace,
}

pub fn prepare_input(config: &RunConfig) -> Result<PreparedInput, PipelineError> {
    let window = config.analysis.window_us;
    match &config.input {
        InputConfig::Synthetic { profile, duration_us, geometry } => {
            let g = CameraGeometry::new(geometry[0], geometry[1]).map_err(|e| PipelineError::config("input", e))?;
            let (stream, ground_truth) =
                gen_stimulus(profile, g, *duration_us, window, config.seed).map_err(|e| PipelineError::config("synth", e))?;
            Ok(PreparedInput { stream, ground_truth })
        }
        InputConfig::Files { left, right, geometry, markers, calibration, trace, duration_us } => {
            let g = CameraGeometry::new(geometry[0], geometry[1]).map_err(|e| PipelineError::config("input", e))?;
            let raw = match right {
                Some(right) => {
                    let l = parse_event_file(left, g, Some(Side::Left)).map_err(|e| PipelineError::config("input", e))?;
                    let r = parse_event_file(right, g, Some(Side::Right)).map_err(|e| PipelineError::config("input", e))?;
                    merge_streams(&l, &r).map_err(|e| PipelineError::config("input", e))?
                }
                None => parse_event_file(left, g, None).map_err(|e| PipelineError::config("input", e))?,
            };
            // every recording starts at t = 0; markers shift by the same amount
            let origin = raw.events().first().map(|e| e.t).unwrap_or(0);
            let mut stream = raw.rebase(origin);
            if let Some(d) = duration_us {
                stream = StereoEventStream::with_duration(stream.into_events(), g, *d)
                    .map_err(|e| PipelineError::config("input", e))?;
            }
            let (stream, factor, crop_origin, crop_size) = match &config.preprocess {
                Some(pp) => {
                    let (s, o) = preprocess_pipeline(&stream, pp).map_err(|e| PipelineError::config("preprocess", e))?;
                    (s, pp.downscale_factor, o, pp.crop_size)
                }
                None => (stream, 1, [0, 0], [g.width, g.height]),
            };
            let duration = stream.duration();
            let ground_truth = match (markers, calibration, trace) {
                (Some(m), Some(c), _) => {
                    let tracks = rebase_tracks(&parse_marker_file(m).map_err(|e| PipelineError::config("groundtruth", e))?, origin);
                    let cal = StereoCalibration::from_file(c).map_err(|e| PipelineError::config("groundtruth", e))?;
                    let to_net = |p| -> Result<Vec<_>, PipelineError> {
                        project_markers(&tracks, p, g.width as f64, g.height as f64)
                            .iter()
                            .map(|t| to_downscaled_coords(t, factor, crop_origin, crop_size))
                            .collect::<Result<_, _>>()
                            .map_err(|e| PipelineError::config("groundtruth", e))
                    };
                    disparity_trajectory(&to_net(&cal.left)?, &to_net(&cal.right)?, window, duration)
                        .map_err(|e| PipelineError::config("groundtruth", e))?
                }
                (_, _, Some(t)) => {
                    let file = std::fs::File::open(t)
                        .map_err(|e| PipelineError::config("groundtruth", format!("{}: {e}", t.display())))?;
                    read_trace(file, t).map_err(|e| PipelineError::config("groundtruth", e))?
                }
                _ => return Err(PipelineError::config("input", "no ground truth configured")),
            };
            Ok(PreparedInput { stream, ground_truth })
        }
    }
}

/// Everything a run produces, before it is written out.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub topology: Topology,
    pub input: PreparedInput,
    pub record: SpikeRecord,
    pub rates: BTreeMap<Population, RateMatrix>,
    pub report: MetricsReport,
}

const RATE_POPULATIONS: [Population; 3] = [Population::CoincidenceExc, Population::CoincidenceInh, Population::Disparity];

pub fn execute(config: &RunConfig) -> Result<RunResult, PipelineError> {
    config.validate().map_err(|e| PipelineError::config("config", e))?;
    let input = prepare_input(config)?;
    let topology = Topology::build(&config.topology).map_err(|e| PipelineError::config("topology", e))?;
    let g = input.stream.geometry();
    if g.width != topology.retina_width() || g.height != topology.retina_height() {
        return Err(PipelineError::config(
            "topology",
            format!(
                "network input is {}x{} but the retina is {}x{}",
                g.width,
                g.height,
                topology.retina_width(),
                topology.retina_height()
            ),
        ));
    }
    log::info!("simulating {} events over {} us", input.stream.len(), input.stream.duration());
    let record = if config.simulation.threads > 1 {
        simulate_parallel(&topology, &input.stream, &config.neuron, config.simulation.threads)
    } else {
        simulate(&topology, &input.stream, &config.neuron)
    }
    .map_err(|e| PipelineError::runtime("simulate", e))?;
    let mut rates = BTreeMap::new();
    for pop in RATE_POPULATIONS {
        let m = instantaneous_rates(&record, &topology, config.analysis.window_us, pop)
            .map_err(|e| PipelineError::runtime("rates", e))?;
        rates.insert(pop, m);
    }
    let report = build_report(&ReportInputs {
        label: &config.label,
        record: &record,
        topology: &topology,
        ground_truth: &input.ground_truth,
        coincidence_rates: &rates[&Population::CoincidenceExc],
        disparity_rates: &rates[&Population::Disparity],
        epsilon_d: config.analysis.epsilon_d,
        pcd_mode: config.analysis.pcd_mode,
        energy: Some(&config.analysis.energy),
        config: config.echo(),
    })
    .map_err(|e| PipelineError::runtime("metrics", e))?;
    Ok(RunResult { topology, input, record, rates, report })
}

fn out_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::runtime("output", format!("{}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf, PipelineError> {
    let path = dir.join(name);
    write_atomic(&path, |w| {
        let mut buf = std::io::BufWriter::new(w);
        f(&mut buf)?;
        buf.flush()
    })
    .map_err(out_err(&path))?;
    Ok(path)
}

/// Runs and writes all artifacts into `config.output.dir`.
pub fn run(config: &RunConfig) -> Result<RunResult, PipelineError> {
    let result = execute(config)?;
    write_artifacts(&result, config)?;
    Ok(result)
}

pub fn write_artifacts(result: &RunResult, config: &RunConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let dir = &config.output.dir;
    std::fs::create_dir_all(dir).map_err(out_err(dir))?;
    let mut written = vec![
        write_file(dir, "spikes.csv", |w| write_spikes(&result.record, w))?,
        write_file(dir, "rates.csv", |w| write_rates(result.rates.values(), w))?,
        write_file(dir, "com.csv", |w| write_com(&result.report, &result.input.ground_truth, w))?,
        write_file(dir, "trace.csv", |w| write_trace(&result.input.ground_truth, w))?,
    ];
    if config.output.figures {
        written.push(write_file(dir, "raster.csv", |w| write_raster(&result.record, &result.topology, w))?);
        written.push(write_file(dir, "rate_map.csv", |w| write_rate_map(&result.rates, &result.topology, w))?);
        written.push(write_file(dir, "disparity_hist.csv", |w| {
            write_disparity_hist(&result.record, &result.topology, config.analysis.window_us, result.report.n_windows, w)
        })?);
    }
    let json = serde_json::to_string_pretty(&result.report).map_err(|e| PipelineError::runtime("output", e))?;
    written.push(write_file(dir, "report.json", |w| {
        w.write_all(json.as_bytes())?;
        w.write_all(b"\n")
    })?);
    Ok(written)
}

/// Generates the synthetic input of `config` and writes `left.csv`,
/// `right.csv` and `trace.csv` into `out_dir`. Nothing is written if
/// generation fails.
pub fn synth(config: &RunConfig, out_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    config.validate().map_err(|e| PipelineError::config("config", e))?;
    if !matches!(config.input, InputConfig::Synthetic { .. }) {
        return Err(PipelineError::config("config", "synth needs input.kind = \"synthetic\""));
    }
    let input = prepare_input(config)?;
    std::fs::create_dir_all(out_dir).map_err(out_err(out_dir))?;
    let mut written = Vec::new();
    for side in [Side::Left, Side::Right] {
        let one = input.stream.retain(|e| e.side == side);
        let path = out_dir.join(if side == Side::Left { "left.csv" } else { "right.csv" });
        write_event_file(&one, &path).map_err(|e| PipelineError::runtime("output", e))?;
        written.push(path);
    }
    written.push(write_file(out_dir, "trace.csv", |w| write_trace(&input.ground_truth, w))?);
    Ok(written)
}

/// Scores an existing spike file against a trace file. Energy is not
/// estimated because input and synapse counts are unknown.
pub fn evaluate(config: &RunConfig, spikes: &Path, trace: &Path) -> Result<MetricsReport, PipelineError> {
    config.validate().map_err(|e| PipelineError::config("config", e))?;
    let topology = Topology::build(&config.topology).map_err(|e| PipelineError::config("topology", e))?;
    let open = |p: &Path| std::fs::File::open(p).map_err(|e| PipelineError::config("input", format!("{}: {e}", p.display())));
    let gt = read_trace(open(trace)?, trace).map_err(|e| PipelineError::config("groundtruth", e))?;
    if gt.window_us != config.analysis.window_us {
        return Err(PipelineError::config(
            "groundtruth",
            format!("trace window {} us differs from analysis.window_us {}", gt.window_us, config.analysis.window_us),
        ));
    }
    let list = read_spikes(open(spikes)?, &topology).map_err(|e| PipelineError::config("input", format!("{}: {e}", spikes.display())))?;
    let duration: Micros = gt.len() as Micros * gt.window_us;
    let mut record = SpikeRecord::from_spikes(list, duration);
    record.duration = duration;
    let rate = |pop| instantaneous_rates(&record, &topology, gt.window_us, pop).map_err(|e| PipelineError::runtime("rates", e));
    let (cr, dr) = (rate(Population::CoincidenceExc)?, rate(Population::Disparity)?);
    build_report(&ReportInputs {
        label: &config.label,
        record: &record,
        topology: &topology,
        ground_truth: &gt,
        coincidence_rates: &cr,
        disparity_rates: &dr,
        epsilon_d: config.analysis.epsilon_d,
        pcd_mode: config.analysis.pcd_mode,
        energy: None,
        config: config.echo(),
    })
    .map_err(|e| PipelineError::runtime("metrics", e))
}

/// `t_us,neuron_id,population`.
pub fn write_spikes(record: &SpikeRecord, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "t_us,neuron_id,population")?;
    for s in &record.spikes {
        writeln!(w, "{},{},{}", s.t, s.neuron, s.population.name())?;
    }
    Ok(())
}

pub fn read_spikes(reader: impl Read, topology: &Topology) -> Result<Vec<Spike>, String> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr.headers().map_err(|e| e.to_string())?.clone();
    if header.iter().collect::<Vec<_>>() != ["t_us", "neuron_id", "population"] {
        return Err("expected header t_us,neuron_id,population".into());
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| format!("line {line}: {e}"))?;
        let t = rec[0].parse().map_err(|_| format!("line {line}: bad timestamp {:?}", &rec[0]))?;
        let neuron = rec[1].parse().map_err(|_| format!("line {line}: bad neuron id {:?}", &rec[1]))?;
        let population: Population = rec[2].parse().map_err(|e| format!("line {line}: {e}"))?;
        match topology.population_of(neuron) {
            Ok(p) if p == population => out.push(Spike { t, neuron, population }),
            Ok(p) => return Err(format!("line {line}: neuron {neuron} belongs to {}", p.name())),
            Err(e) => return Err(format!("line {line}: {e}")),
        }
    }
    Ok(out)
}

/// Sparse `window_i,t_start_us,neuron_id,population,rate_hz`; zero rates
/// are omitted.
pub fn write_rates<'a>(matrices: impl IntoIterator<Item = &'a RateMatrix>, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "window_i,t_start_us,neuron_id,population,rate_hz")?;
    for m in matrices {
        for i in 0..m.n_windows {
            for (row, &id) in m.rates.iter().zip(&m.neurons) {
                if row[i] > 0.0 {
                    writeln!(w, "{i},{},{id},{},{}", m.window_start(i), m.population.name(), row[i])?;
                }
            }
        }
    }
    Ok(())
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `window_i,t_center_us,com_c,com_d,d_mean,d_min,d_max`.
pub fn write_com(report: &MetricsReport, gt: &DisparityTrace, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "window_i,t_center_us,com_c,com_d,d_mean,d_min,d_max")?;
    for (i, win) in gt.windows.iter().enumerate() {
        let c = report.coincidence.com.get(i).copied().flatten();
        let d = report.disparity.com.get(i).copied().flatten();
        writeln!(w, "{i},{},{},{},{},{},{}", win.t_center, cell(c), cell(d), cell(win.d_mean), cell(win.d_min), cell(win.d_max))?;
    }
    Ok(())
}

/// Raster rows with neuron coordinates: `t_us,neuron_id,population,x_cyc,y,d`.
pub fn write_raster(record: &SpikeRecord, topology: &Topology, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "t_us,neuron_id,population,x_cyc,y,d")?;
    for s in &record.spikes {
        if let Ok(NeuronInfo::Cell { coord, .. }) = topology.coord_of(s.neuron) {
            writeln!(w, "{},{},{},{},{},{}", s.t, s.neuron, s.population.name(), coord.x_cyc, coord.y, coord.d)?;
        }
    }
    Ok(())
}

/// Mean rate of every coincidence (excitatory copy) and disparity neuron over
/// the recording: `population,y,x_cyc,d,mean_rate_hz`.
pub fn write_rate_map(rates: &BTreeMap<Population, RateMatrix>, topology: &Topology, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "population,y,x_cyc,d,mean_rate_hz")?;
    for pop in [Population::CoincidenceExc, Population::Disparity] {
        let Some(m) = rates.get(&pop) else { continue };
        for (row, &id) in m.rates.iter().zip(&m.neurons) {
            if let Ok(NeuronInfo::Cell { coord, .. }) = topology.coord_of(id) {
                let mean = row.iter().sum::<f64>() / m.n_windows as f64;
                writeln!(w, "{},{},{},{},{}", pop.name(), coord.y, coord.x_cyc, coord.d, mean)?;
            }
        }
    }
    Ok(())
}

/// Spike counts per disparity and window: `window_i,population,d,count`.
pub fn write_disparity_hist(
    record: &SpikeRecord,
    topology: &Topology,
    window_us: Micros,
    n_windows: usize,
    w: &mut dyn Write,
) -> std::io::Result<()> {
    let mut hist: BTreeMap<(usize, Population, i32), u64> = BTreeMap::new();
    for s in &record.spikes {
        let i = (s.t / window_us) as usize;
        if i >= n_windows || s.population == Population::CoincidenceInh {
            continue;
        }
        if let Some(d) = topology.disparity_of(s.neuron) {
            *hist.entry((i, s.population, d)).or_default() += 1;
        }
    }
    writeln!(w, "window_i,population,d,count")?;
    for ((i, pop, d), c) in hist {
        writeln!(w, "{i},{},{d},{c}", pop.name())?;
    }
    Ok(())
}

/// Plain-text summary with one row per report and population.
pub fn headline_table(reports: &[MetricsReport]) -> String {
    let f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_else(|| "-".into());
    let mut out = String::new();
    let _ = writeln!(out, "{:<20} {:<12} {:>9} {:>7} {:>9} {:>10}", "sample", "population", "spikes", "PCD", "RMSE[px]", "power[uW]");
    for r in reports {
        for (name, m) in [("D", &r.disparity), ("C", &r.coincidence)] {
            let label = if r.label.is_empty() { "-" } else { &r.label };
            let _ = writeln!(
                out,
                "{:<20} {:<12} {:>9} {:>7} {:>9} {:>10}",
                label,
                name,
                m.spikes,
                f(m.pcd, 3),
                f(m.rmse, 2),
                f(r.energy_uw, 1)
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::DisparityProfile;

    fn small_config(dir: &Path) -> RunConfig {
        let mut c = RunConfig {
            input: InputConfig::Synthetic {
                profile: DisparityProfile::constant(2.0),
                duration_us: 300_000,
                geometry: [16, 16],
            },
            ..Default::default()
        };
        c.output.dir = dir.to_owned();
        c
    }

    #[test]
    fn run_writes_every_artifact() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_config(dir.path());
        let result = run(&c).unwrap();
        for name in ["spikes.csv", "rates.csv", "com.csv", "trace.csv", "report.json", "raster.csv", "rate_map.csv", "disparity_hist.csv"] {
            assert!(dir.path().join(name).is_file(), "{name}");
        }
        let spikes = std::fs::read(dir.path().join("spikes.csv")).unwrap();
        let back = read_spikes(spikes.as_slice(), &result.topology).unwrap();
        assert_eq!(back, result.record.spikes);
        let report: MetricsReport = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(report, result.report);
        let fed_back: RunConfig = serde_json::from_value(report.config.clone()).unwrap();
        assert_eq!(fed_back, c);
    }

    #[test]
    fn eval_reproduces_run_metrics() {
        let dir = tempfile::tempdir().unwrap();
        let c = small_config(dir.path());
        let result = run(&c).unwrap();
        let rep = evaluate(&c, &dir.path().join("spikes.csv"), &dir.path().join("trace.csv")).unwrap();
        assert_eq!(rep.disparity.pcd, result.report.disparity.pcd);
        assert_eq!(rep.disparity.com, result.report.disparity.com);
        assert_eq!(rep.coincidence.td, result.report.coincidence.td);
        assert_eq!(rep.energy_uw, None);
    }

    #[test]
    fn synth_rejects_file_input_and_bad_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small_config(dir.path());
        if let InputConfig::Synthetic { profile, .. } = &mut c.input {
            profile.origin = [15, 7];
        }
        let err = synth(&c, &dir.path().join("fx")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(!dir.path().join("fx").exists());
    }

    #[test]
    fn table_has_both_populations() {
        let dir = tempfile::tempdir().unwrap();
        let r = execute(&small_config(dir.path())).unwrap();
        let t = headline_table(&[r.report]);
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains(" D ") && t.contains(" C "));
    }
}
