use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand, ValueEnum};

use neurostereo::config::RunConfig;
use neurostereo::io::write_atomic_bytes;
use neurostereo::metrics::MetricsReport;
use neurostereo::pipeline::{self, PipelineError};
use neurostereo::topology::{check_hardware_constraints, largest_d_max_within, HardwareLimits, PolarityChannels, Topology, TopologyParams};

#[derive(Parser)]
#[command(name = "neurostereo", version, about = "Spiking stereo disparity pipeline")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Preprocess, simulate and score one or more configs.
    Run(RunArgs),
    /// Write a synthetic stimulus as event files plus its ground-truth trace.
    Synth(SynthArgs),
    /// Build a network, check it against hardware limits, export it as JSON.
    Topology(TopologyArgs),
    /// Score an existing spike file against a ground-truth trace.
    Eval(EvalArgs),
}

#[derive(Args)]
struct Overrides {
    /// Override a config key, e.g. `--set analysis.window_us=20000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(required = true)]
    configs: Vec<PathBuf>,
    /// Number of configs processed concurrently.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Center the crop on the event centroid of the first second.
    #[arg(long)]
    auto_crop: bool,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct SynthArgs {
    config: PathBuf,
    /// Output directory; defaults to the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum LimitsPreset {
    Dynap,
    Unlimited,
}

#[derive(Args)]
struct TopologyArgs {
    /// Take the topology section from a run config instead of the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    width: u32,
    #[arg(long, default_value_t = 16)]
    height: u32,
    #[arg(long, default_value_t = 15)]
    d_max: u32,
    #[arg(long)]
    continuity_radius: Option<u32>,
    /// Give ON and OFF events separate retina neurons.
    #[arg(long)]
    separate_polarities: bool,
    #[arg(long, value_enum, default_value = "dynap")]
    limits: LimitsPreset,
    #[arg(long)]
    max_fan_in: Option<u32>,
    #[arg(long)]
    neurons_per_core: Option<u32>,
    #[arg(long)]
    cores_per_chip: Option<u32>,
    #[arg(long)]
    chips: Option<u32>,
    /// Replace d_max with the largest value that fits the limits.
    #[arg(long)]
    hardware_budget: bool,
    /// Write the neuron and synapse tables as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args)]
struct EvalArgs {
    /// Run config providing topology and analysis settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    spikes: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    /// Report path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, PipelineError> {
    RunConfig::load(path, overrides).map_err(|e| PipelineError::config("config", e))
}

fn cmd_run(args: RunArgs) -> Result<(), PipelineError> {
    let jobs = args.jobs.max(1).min(args.configs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<MetricsReport, PipelineError>>>> =
        Mutex::new((0..args.configs.len()).map(|_| None).collect());
    let run_one = |path: &Path| -> Result<MetricsReport, PipelineError> {
        let mut config = load(path, &args.overrides.set)?;
        if args.auto_crop {
            let pp = config.preprocess.get_or_insert_with(Default::default);
            pp.auto_crop = true;
            pp.crop_origin = None;
        }
        let result = pipeline::run(&config)?;
        log::info!("{}: wrote artifacts to {}", path.display(), config.output.dir.display());
        Ok(result.report)
    };
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = args.configs.get(k) else { break };
                let r = run_one(path);
                results.lock().expect("results lock")[k] = Some(r);
            });
        }
    });
    let mut reports = Vec::new();
    let mut worst: Option<PipelineError> = None;
    for (path, r) in args.configs.iter().zip(results.into_inner().expect("results lock")) {
        match r.expect("every config processed") {
            Ok(rep) => reports.push(rep),
            Err(e) => {
                eprintln!("error: {}: {e}", path.display());
                if worst.as_ref().is_none_or(|w| e.exit_code() > w.exit_code()) {
                    worst = Some(e);
                }
            }
        }
    }
    if !reports.is_empty() {
        print!("{}", pipeline::headline_table(&reports));
    }
    match worst {
        Some(e) => Err(PipelineError { message: "one or more runs failed".into(), ..e }),
        None => Ok(()),
    }
}

fn cmd_synth(args: SynthArgs) -> Result<(), PipelineError> {
    let config = load(&args.config, &args.overrides.set)?;
    let out = args.out.unwrap_or_else(|| config.output.dir.clone());
    for p in pipeline::synth(&config, &out)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn cmd_topology(args: TopologyArgs) -> Result<(), PipelineError> {
    let mut params = match &args.config {
        Some(path) => load(path, &args.overrides.set)?.topology,
        None => TopologyParams {
            continuity_radius: args.continuity_radius,
            polarity_channels: if args.separate_polarities { PolarityChannels::Separated } else { PolarityChannels::Merged },
            ..TopologyParams::new(args.width, args.height, args.d_max)
        },
    };
    let mut limits = match args.limits {
        LimitsPreset::Dynap => HardwareLimits::DYNAP,
        LimitsPreset::Unlimited => HardwareLimits::UNLIMITED,
    };
    limits.max_fan_in = args.max_fan_in.or(limits.max_fan_in);
    limits.neurons_per_core = args.neurons_per_core.or(limits.neurons_per_core);
    limits.cores_per_chip = args.cores_per_chip.or(limits.cores_per_chip);
    limits.chips = args.chips.or(limits.chips);
    if args.hardware_budget {
        match largest_d_max_within(&params, &limits) {
            Some(d) => {
                println!("hardware budget: d_max = {d}");
                params.d_max = d;
            }
            None => return Err(PipelineError::config("topology", "no disparity band fits the hardware limits")),
        }
    }
    let topology = Topology::build(&params).map_err(|e| PipelineError::config("topology", e))?;
    let report = check_hardware_constraints(&topology, &limits);
    let verdict = |ok: bool| if ok { "pass" } else { "FAIL" };
    let limit = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_else(|| "unlimited".into());
    println!(
        "fan-in: max {} / limit {} -> {} ({} violating neurons)",
        report.max_fan_in,
        limit(limits.max_fan_in.map(u64::from)),
        verdict(report.fan_in_ok),
        report.fan_in_violations.len()
    );
    println!(
        "neuron budget: {} on-chip / capacity {} -> {}",
        report.on_chip_neurons,
        limit(report.capacity),
        verdict(report.budget_ok)
    );
    println!("overall: {}", verdict(report.pass));
    if let Some(out) = &args.out {
        let json = serde_json::json!({ "topology": topology.to_export(), "constraints": report });
        let text = serde_json::to_vec_pretty(&json).map_err(|e| PipelineError::runtime("output", e))?;
        write_atomic_bytes(out, &text).map_err(|e| PipelineError::runtime("output", format!("{}: {e}", out.display())))?;
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), PipelineError> {
    let config = load(&args.config, &args.overrides.set)?;
    let report = pipeline::evaluate(&config, &args.spikes, &args.trace)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| PipelineError::runtime("output", e))? + "\n";
    match &args.out {
        Some(out) => {
            write_atomic_bytes(out, text.as_bytes())
                .map_err(|e| PipelineError::runtime("output", format!("{}: {e}", out.display())))?;
            print!("{}", pipeline::headline_table(std::slice::from_ref(&report)));
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Topology(a) => cmd_topology(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
