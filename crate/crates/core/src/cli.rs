//! Command-line front end: `simulate`, `optimize`, `compare` and `report`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analytics::{report, AnalyticsError, ExperimentRecord, RecordMode, Recorder};
use crate::fidelity::{
    distortion_flag, read_end_signal, write_correlation_report, xcorr_score, DistortionThresholds, EndSignal, FidelityError,
};
use crate::mesh::{place, MeshError, Scheme};
use crate::optimize::{run_ga, run_nsga2, run_pso, AlgoParams, Algorithm, DesignProblem, Evaluator, OptimizeError, RunResult};
use crate::partition::{build_mapping_with, Axis, Mapping, MemoryModel, PartitionError, PartitionSpec, Style};
use crate::sim::snapshot::write_run_files;
use crate::sim::{simulate_with, HardwareConfig, SimError, SimOptions};
use crate::workload::{synth_trace, EventTrace, NetworkModel, WorkloadError};

/// Exit code of `compare` when the signals count as distorted.
pub const EXIT_DISTORTED: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
    #[error(transparent)]
    Optimize(#[from] OptimizeError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("{0}")]
    Usage(String),
}

#[derive(Debug, Parser)]
#[command(name = "neuromap", version, about = "Map, simulate and optimize SNN/ANN workloads on a multicore mesh")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Map and simulate one design, writing the per-run file set.
    Simulate(SimulateArgs),
    /// Search the design space with GA, NSGA-II or PSO.
    Optimize(OptimizeArgs),
    /// Correlate two end-signal files and flag distortion.
    Compare(CompareArgs),
    /// Recompute the report tables of a finished run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Workload TOML file.
    #[arg(long)]
    pub workload: PathBuf,
    /// Hardware TOML file; built-in defaults when absent.
    #[arg(long)]
    pub hw: Option<PathBuf>,
    /// Input trace CSV (`timestamp,neuron_id,payload_bits`); synthesized when absent.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Frame rate override; 0 runs event-driven.
    #[arg(long)]
    pub fps: Option<u32>,
    /// Frames in the synthesized trace.
    #[arg(long)]
    pub frames: Option<u32>,
    /// Seed of the synthesized trace.
    #[arg(long)]
    pub trace_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Mapping CSV; overrides the partition flags.
    #[arg(long)]
    pub mapping: Option<PathBuf>,
    /// Cores per layer.
    #[arg(long, default_value_t = 1)]
    pub cores: usize,
    #[arg(long, default_value = "layer")]
    pub axis: Axis,
    #[arg(long, default_value = "homogeneous")]
    pub style: Style,
    #[arg(long, default_value = "strict-area")]
    pub scheme: Scheme,
    /// Run directory; defaults to `<NEUROMAP_OUT_ROOT>/simulate/<workload>_fps<fps>_<stamp>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output root used when `--out` is absent.
    #[arg(long, env = "NEUROMAP_OUT_ROOT", default_value = "neuromap_out")]
    pub out_root: PathBuf,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Algorithm; read from `--params` when omitted, nsga2 without either.
    #[arg(long)]
    pub algo: Option<Algorithm>,
    /// Algorithm parameter TOML file.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Parallel evaluation workers.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Mesh scheme when the scheme is not searched.
    #[arg(long, default_value = "strict-area")]
    pub scheme: Scheme,
    /// Population size override.
    #[arg(long)]
    pub pop_size: Option<usize>,
    /// Generation count override.
    #[arg(long)]
    pub generations: Option<usize>,
    /// Snapshot selection: all, bests or sampled:N.
    #[arg(long, default_value = "bests")]
    pub record: RecordMode,
    /// Output root; runs go under `<out>/experiments/`.
    #[arg(long, env = "NEUROMAP_OUT_ROOT", default_value = "neuromap_out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference end-signal CSV (`timestamp,value`).
    pub a: PathBuf,
    /// End-signal CSV to compare.
    pub b: PathBuf,
    /// Resampling step in ns; the smallest timestamp gap when absent.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = DistortionThresholds::default().min_peak)]
    pub min_peak: f64,
    #[arg(long, default_value_t = DistortionThresholds::default().max_shift_ms)]
    pub max_shift_ms: f64,
    /// Correlation report CSV to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory `<ALGO>_<n>_<stamp>`.
    pub run_dir: PathBuf,
}

fn stamp() -> String {
    chrono::Local::now().format("%Y_%m_%d_%H-%M-%S").to_string()
}

struct Inputs {
    model: NetworkModel,
    hw: HardwareConfig,
    trace: EventTrace,
    trace_source: String,
}

fn load_inputs(a: &InputArgs, default_frames: u32, default_seed: u64) -> Result<Inputs, CliError> {
    let model = NetworkModel::load(&a.workload)?;
    let hw = match &a.hw {
        Some(p) => HardwareConfig::load(p)?,
        None => HardwareConfig::default(),
    };
    let fps = a.fps.unwrap_or(model.frame_rate_fps);
    let (trace, trace_source) = match &a.trace {
        Some(p) => (EventTrace::read_csv(p, fps, a.frames)?, p.display().to_string()),
        None => {
            let frames = a.frames.unwrap_or(default_frames);
            let seed = a.trace_seed.unwrap_or(default_seed);
            (synth_trace(&model, frames, fps, seed), format!("synthetic frames={frames} seed={seed}"))
        }
    };
    trace.validate(&model)?;
    Ok(Inputs {
        model,
        hw,
        trace,
        trace_source,
    })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<i32, CliError> {
    let inp = load_inputs(&a.input, 10, 1)?;
    let mem = MemoryModel {
        bitwidths: inp.model.bitwidths,
        m_max: inp.hw.mem_per_core_bits,
        formula: inp.hw.memory_formula,
    };
    let mapping = match &a.mapping {
        Some(p) => {
            let m = Mapping::read_csv(p, &inp.model, &mem)?;
            m.validate(&inp.model)?;
            if m.max_core_memory() > mem.m_max {
                let mems = m.core_memory();
                let core = mems.iter().position(|&x| x == m.max_core_memory()).unwrap_or(0);
                return Err(SimError::Infeasible {
                    core,
                    m_pc: mems[core],
                    m_max: mem.m_max,
                }
                .into());
            }
            m
        }
        None => {
            let spec = PartitionSpec::uniform(&inp.model, a.cores, a.axis, a.style);
            build_mapping_with(&inp.model, &spec, &mem)?
        }
    };
    let placement = place(&mapping, a.scheme.shape(mapping.n_cores_total))?;
    let report = simulate_with(
        &inp.model,
        &mapping,
        &placement,
        &inp.hw,
        &inp.trace,
        &SimOptions { record_ledger: true },
    )?;
    let dir = match &a.out {
        Some(d) => d.clone(),
        None => a
            .out_root
            .join("simulate")
            .join(format!("{}_fps{}_{}", inp.model.name, inp.trace.fps, stamp())),
    };
    let settings = vec![
        ("workload".to_string(), a.input.workload.display().to_string()),
        ("trace".to_string(), inp.trace_source.clone()),
        ("fps".to_string(), inp.trace.fps.to_string()),
        ("scheme".to_string(), a.scheme.to_string()),
        ("mesh".to_string(), format!("{}x{}", placement.rows, placement.cols)),
    ];
    write_run_files(&dir, &report, crate::analytics::snapshot_interval(&report), &settings)?;
    mapping.write_csv(&dir.join("mapping.csv"))?;
    placement.write_csv(&dir.join("placement.csv"))?;
    std::fs::write(dir.join("hw.toml"), inp.hw.to_toml_string()).map_err(|e| SimError::Io {
        path: dir.join("hw.toml").display().to_string(),
        msg: e.to_string(),
    })?;
    println!("energy_pj = {}", report.total_energy);
    println!("latency_ns = {}", report.latency_end_to_end);
    println!("cores = {}", mapping.n_cores_total);
    println!("mesh = {}x{}", placement.rows, placement.cols);
    println!("output_samples = {}", report.end_signal.len());
    println!("run_dir = {}", dir.display());
    Ok(0)
}

fn resolve_params(a: &OptimizeArgs) -> Result<AlgoParams, CliError> {
    let mut params = match (&a.params, a.algo) {
        (Some(p), algo) => {
            let params = AlgoParams::load(p)?;
            if let Some(algo) = algo {
                if algo != params.algorithm {
                    return Err(CliError::Usage(format!(
                        "--algo {algo} conflicts with `algorithm = \"{}\"` in {}",
                        params.algorithm,
                        p.display()
                    )));
                }
            }
            params
        }
        (None, algo) => AlgoParams::defaults(algo.unwrap_or(Algorithm::Nsga2)),
    };
    if let Some(n) = a.pop_size {
        params.pop_size = n;
    }
    if let Some(n) = a.generations {
        params.generations = n;
    }
    if let Some(n) = a.input.frames {
        params.space.n_frames = n;
    }
    if let Some(s) = a.input.trace_seed {
        params.space.trace_seed = s;
    }
    params.validate()?;
    Ok(params)
}

fn sim_prm(a: &OptimizeArgs, inp: &Inputs) -> String {
    let mut t = toml::Table::new();
    t.insert("workload".into(), a.input.workload.display().to_string().into());
    t.insert("app".into(), inp.model.name.clone().into());
    t.insert("trace".into(), inp.trace_source.clone().into());
    t.insert("fps".into(), i64::from(inp.trace.fps).into());
    t.insert("n_frames".into(), i64::from(inp.trace.n_frames).into());
    t.insert("scheme".into(), a.scheme.to_string().into());
    t.insert("seed".into(), (a.seed as i64).into());
    t.insert("workers".into(), (a.workers as i64).into());
    if let Ok(hw) = toml::Table::try_from(&inp.hw) {
        t.insert("hw".into(), hw.into());
    }
    toml::to_string(&t).expect("table serializes")
}

pub fn run_search(problem: &DesignProblem, params: &AlgoParams, seed: u64, evaluator: &Evaluator, observer: &mut dyn crate::optimize::Observer) -> RunResult {
    match params.algorithm {
        Algorithm::Ga => run_ga(problem, params, seed, evaluator, observer),
        Algorithm::Nsga2 => run_nsga2(problem, params, seed, evaluator, observer),
        Algorithm::Pso => run_pso(problem, params, seed, evaluator, observer),
    }
}

fn cmd_optimize(a: &OptimizeArgs) -> Result<i32, CliError> {
    let params = resolve_params(a)?;
    if a.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let inp = load_inputs(&a.input, params.space.n_frames, params.space.trace_seed)?;
    let mut space = params.space.clone();
    if space.schemes.is_empty() {
        space.schemes = vec![a.scheme];
    }
    let sim_prm = sim_prm(a, &inp);
    let app = inp.model.name.clone();
    let problem = DesignProblem::new(inp.model, inp.trace, inp.hw, &space)?;
    let record = ExperimentRecord::create(
        &a.out,
        params.algorithm,
        &app,
        problem.layout.gene_names(),
        &params.to_toml_string(),
        &sim_prm,
    )?;
    log::info!("run directory {}", record.run_dir.display());
    let mut recorder = Recorder::new(record, &problem, a.record);
    let evaluator = Evaluator::new(a.workers)?;
    let result = run_search(&problem, &params, a.seed, &evaluator, &mut recorder);
    let (record, summary) = recorder.finish()?;
    let failed = record.rows.iter().filter(|r| r.error.is_some()).count();
    println!("algorithm = {}", params.algorithm);
    println!("evaluations = {}", result.evaluations);
    println!("failed_evaluations = {failed}");
    match &result.best {
        Some((g, e)) if e.feasible() => {
            let objectives: Vec<String> = e.objectives.iter().map(f64::to_string).collect();
            println!("best_objectives = {}", objectives.join(" "));
            println!("best_genome = {}", g.iter().map(i64::to_string).collect::<Vec<_>>().join(" "));
        }
        _ => println!("best = none feasible"),
    }
    println!("pareto_size = {}", result.archive.len());
    println!("run_dir = {}", record.run_dir.display());
    println!("summary_dir = {}", summary.display());
    Ok(0)
}

fn min_gap(points: &[(f64, f64)]) -> Option<f64> {
    let mut t: Vec<f64> = points.iter().map(|p| p.0).collect();
    t.sort_by(f64::total_cmp);
    t.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).min_by(f64::total_cmp)
}

fn cmd_compare(a: &CompareArgs) -> Result<i32, CliError> {
    let pa = read_end_signal(&a.a)?;
    let pb = read_end_signal(&a.b)?;
    let dt = match a.dt {
        Some(dt) => dt,
        None => match (min_gap(&pa), min_gap(&pb)) {
            (Some(x), Some(y)) => x.min(y),
            (Some(x), None) | (None, Some(x)) => x,
            (None, None) => return Err(FidelityError::TooShort(pa.len().min(pb.len())).into()),
        },
    };
    let r = xcorr_score(&EndSignal::resample(&pa, dt)?, &EndSignal::resample(&pb, dt)?)?;
    let th = DistortionThresholds {
        min_peak: a.min_peak,
        max_shift_ms: a.max_shift_ms,
    };
    let distorted = distortion_flag(r.peak, r.shift_ms, &th);
    println!("peak = {}", r.peak);
    println!("lag_samples = {}", r.lag);
    println!("shift_ms = {}", r.shift_ms);
    println!("distorted = {distorted}");
    if let Some(out) = &a.out {
        let pair = format!("{}|{}", a.a.display(), a.b.display());
        write_correlation_report(out, &[(pair, r)])?;
    }
    Ok(if distorted { EXIT_DISTORTED } else { 0 })
}

fn cmd_report(a: &ReportArgs) -> Result<i32, CliError> {
    let dir = report(&a.run_dir)?;
    println!("summary_dir = {}", dir.display());
    Ok(0)
}

pub fn run(cli: &Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flags_are_rejected() {
        assert!(Cli::try_parse_from(["neuromap", "simulate", "--workload", "w.toml", "--bogus"]).is_err());
        assert!(Cli::try_parse_from(["neuromap", "optimize", "--workload", "w.toml", "--algo", "sa"]).is_err());
        let c = Cli::try_parse_from(["neuromap", "optimize", "--workload", "w.toml", "--algo", "pso", "--workers", "4"]).unwrap();
        match c.command {
            Command::Optimize(o) => assert_eq!((o.algo, o.workers), (Some(Algorithm::Pso), 4)),
            _ => unreachable!(),
        }
    }

    #[test]
    fn smallest_gap_sets_the_grid() {
        assert_eq!(min_gap(&[(0.0, 1.0), (10.0, 2.0), (15.0, 0.0)]), Some(5.0));
        assert_eq!(min_gap(&[(3.0, 1.0)]), None);
    }
}
