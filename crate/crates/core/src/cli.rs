//! Command-line front end: `simulate`, `verify`, `bench` and `plotdata`.
//!
//! Every command is also callable as a library function (`cmd_*`) so the
//! behaviour can be tested without spawning the binary.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::{
    available_cores, records_csv, speedup_table, time_evolution_with, time_table, time_taylor_with, BenchInput,
    BenchOptions, BenchTask, StrategyTable, TimingRecord,
};
use crate::cannon::{worker_cap_from_env, CannonEngine, Fault, GridStrategy};
use crate::config::RunConfig;
use crate::densela::{exact_propagator, frobenius_distance, matmul_serial, relative_frobenius_distance, ComplexMatrix};
use crate::error::{Error, Result};
use crate::evolution::{
    build_left_factor, build_right_factor, initial_state_all_excited, local_maxima, run_trajectory, truncation_bound,
    EvolutionConfig, TrajectoryRecord, TrajectorySummary, DEFAULT_TAYLOR_ORDER,
};
use crate::model::{build_hamiltonian, check_rwa, ModelParams, PhotonFactors, RwaReport};

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: u8 = 0;
    /// Unparseable command line (clap's own code).
    pub const USAGE: u8 = 2;
    pub const CONFIG: u8 = 3;
    pub const TRACE_DRIFT: u8 = 4;
    pub const VERIFY_FAILED: u8 = 5;
    pub const IO: u8 = 6;
    pub const MALFORMED_CSV: u8 = 7;
    pub const RUNTIME: u8 = 8;
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::DimensionOverflow { .. }
        | Error::Indivisible { .. }
        | Error::WorkersUnavailable { .. }
        | Error::InvalidDensity(_) => exit::CONFIG,
        Error::TraceDrift { .. } => exit::TRACE_DRIFT,
        Error::Io { .. } => exit::IO,
        Error::MalformedCsv(_) => exit::MALFORMED_CSV,
        _ => exit::RUNTIME,
    }
}

#[derive(Debug, Parser)]
#[command(name = "tcm-cannon", version, about = "Tavis-Cummings evolution on a Cannon worker grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the all-excited state and write the photon-sector trajectory.
    Simulate(SimulateArgs),
    /// Run the built-in oracle checks.
    Verify(VerifyArgs),
    /// Time factor construction and evolution per strategy and dimension.
    Bench(BenchArgs),
    /// Split a trajectory CSV into per-sector series plus a peaks file.
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FactorsArg {
    Bosonic,
    Unit,
}

impl From<FactorsArg> for PhotonFactors {
    fn from(f: FactorsArg) -> Self {
        match f {
            FactorsArg::Bosonic => PhotonFactors::Bosonic,
            FactorsArg::Unit => PhotonFactors::Unit,
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct SimulateArgs {
    /// TOML run configuration; flags below override it.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Number of atoms; the state space has 2^n entries.
    #[arg(long, short = 'n')]
    pub atoms: Option<u32>,
    /// Coupling used for every atom.
    #[arg(long, short = 'g')]
    pub coupling: Option<f64>,
    /// Cavity and atom frequency.
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub hbar: Option<f64>,
    /// Off-diagonal elements g·sqrt(p+1) (bosonic) or g (unit).
    #[arg(long, value_enum)]
    pub photon_factors: Option<FactorsArg>,
    /// Refuse larger n unless raised here.
    #[arg(long)]
    pub max_atoms: Option<u32>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Highest Taylor power kept in each propagator factor.
    #[arg(long, short = 'K')]
    pub taylor_order: Option<usize>,
    /// `serial` or `QxQ`.
    #[arg(long, short)]
    pub strategy: Option<GridStrategy>,
    /// Rescale ρ to unit trace after every step.
    #[arg(long)]
    pub renormalize: bool,
    /// Record every n-th step.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Stored in the summary; the evolution itself is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory CSV path.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Summary JSON path.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl SimulateArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(n) = self.atoms {
            c.model.n = n;
            if c.model.couplings.as_ref().is_some_and(|g| g.len() != n as usize) {
                c.model.couplings = None;
            }
        }
        if let Some(g) = self.coupling {
            c.model.coupling = g;
            c.model.couplings = None;
        }
        if let Some(v) = self.omega {
            c.model.omega = v;
        }
        if let Some(v) = self.hbar {
            c.model.hbar = v;
        }
        if let Some(v) = self.photon_factors {
            c.model.photon_factors = v.into();
        }
        if let Some(v) = self.max_atoms {
            c.model.max_atoms = v;
        }
        if let Some(v) = self.dt {
            c.evolution.dt = v;
        }
        if let Some(v) = self.steps {
            c.evolution.steps = v;
        }
        if let Some(v) = self.taylor_order {
            c.evolution.taylor_order = v;
        }
        if let Some(v) = self.strategy {
            c.evolution.strategy = v;
        }
        if self.renormalize {
            c.evolution.renormalize_trace = true;
        }
        if let Some(v) = self.stride {
            c.evolution.stride = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = &self.out {
            c.output.trajectory = v.clone();
        }
        if let Some(v) = &self.summary {
            c.output.summary = v.clone();
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum VerifyLevel {
    #[default]
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InjectedFault {
    ReversedShift,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = VerifyLevel::Quick)]
    pub level: VerifyLevel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FactorsArg::Bosonic)]
    pub photon_factors: FactorsArg,
    #[arg(long, value_enum, hide = true)]
    pub inject_fault: Option<InjectedFault>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Taylor,
    Evolution,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputArg {
    Synthetic,
    Tcm,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Matrix dimensions, as `256` or `2^8`.
    #[arg(long, value_delimiter = ',', value_parser = parse_dimension, default_value = "16,32,64,128,256")]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "serial,2x2,4x4,8x8,16x16")]
    pub strategies: Vec<GridStrategy>,
    #[arg(long, value_enum, default_value_t = TaskArg::Both)]
    pub task: TaskArg,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Steps per evolution timing.
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = InputArg::Synthetic)]
    pub input: InputArg,
    /// Time evolution with prebuilt factors.
    #[arg(long)]
    pub exclude_factors: bool,
    #[arg(long, default_value_t = 0x5eed)]
    pub seed: u64,
    #[arg(long, short = 'K', default_value_t = DEFAULT_TAYLOR_ORDER)]
    pub taylor_order: usize,
    #[arg(long, default_value = "bench")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    /// Trajectory CSV written by `simulate`.
    pub input: PathBuf,
    #[arg(long, default_value = "plotdata")]
    pub out_dir: PathBuf,
}

/// Parses `256` or `2^8`.
pub fn parse_dimension(s: &str) -> std::result::Result<usize, String> {
    let s = s.trim();
    let d = if let Some(exp) = s.strip_prefix("2^") {
        let e: u32 = exp.parse().map_err(|_| format!("bad exponent in '{s}'"))?;
        1usize.checked_shl(e).ok_or_else(|| format!("'{s}' is too large"))?
    } else {
        s.parse().map_err(|_| format!("'{s}' is not a dimension"))?
    };
    if d < 2 || !d.is_power_of_two() {
        return Err(format!("dimension {d} is not a power of two >= 2"));
    }
    Ok(d)
}

pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    ExitCode::from(run(cli))
}

/// Runs a parsed command line, reporting to stdout/stderr; returns the exit
/// code.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Simulate(args) => run_simulate(&args),
        Command::Verify(args) => run_verify(&args),
        Command::Bench(args) => run_bench(&args),
        Command::Plotdata(args) => cmd_plotdata(&args.input, &args.out_dir).map(|p| {
            println!(
                "wrote {} sector series and {} peaks to {}",
                p.series.len(),
                p.peaks.len(),
                args.out_dir.display()
            );
            exit::OK
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run_simulate(args: &SimulateArgs) -> Result<u8> {
    let config = args.resolve()?;
    config.validate()?;
    if args.print_config {
        print!("{}", config.to_toml_string()?);
        return Ok(exit::OK);
    }
    let summary = cmd_simulate(&config)?;
    if !summary.rwa.valid {
        eprintln!(
            "warning: g/(hbar*omega) = {:.3} is not small; the rotating-wave approximation is questionable",
            summary.rwa.ratio
        );
    }
    println!(
        "{} atoms, {} records to t = {}, max |trace - 1| = {:.3e}",
        summary.atoms, summary.trajectory.records, summary.trajectory.final_time, summary.trajectory.max_trace_drift
    );
    println!("trajectory: {}", config.output.trajectory.display());
    println!("summary:    {}", config.output.summary.display());
    Ok(exit::OK)
}

fn run_verify(args: &VerifyArgs) -> Result<u8> {
    let report = cmd_verify(&VerifyOptions {
        level: args.level,
        seed: args.seed,
        photon_factors: args.photon_factors.into(),
        fault: args.inject_fault.map(|InjectedFault::ReversedShift| Fault::ReversedShift),
    })?;
    print!("{}", report.to_text());
    Ok(if report.passed() { exit::OK } else { exit::VERIFY_FAILED })
}

fn run_bench(args: &BenchArgs) -> Result<u8> {
    let tasks = match args.task {
        TaskArg::Taylor => vec![BenchTask::Taylor],
        TaskArg::Evolution => vec![BenchTask::Evolution],
        TaskArg::Both => vec![BenchTask::Taylor, BenchTask::Evolution],
    };
    let spec = BenchSpec {
        dimensions: args.dims.clone(),
        strategies: args.strategies.clone(),
        tasks,
        repetitions: args.reps,
        steps: args.steps,
        options: BenchOptions {
            seed: args.seed,
            input: match args.input {
                InputArg::Synthetic => BenchInput::Synthetic,
                InputArg::Tcm => BenchInput::Tcm,
            },
            taylor_order: args.taylor_order,
            include_factors: !args.exclude_factors,
            worker_cap: worker_cap_from_env(),
        },
        out_dir: args.out_dir.clone(),
    };
    let out = cmd_bench(&spec)?;
    for (task, times, speedups) in &out.tables {
        println!("{task}: wall time (s)");
        print!("{}", times.to_csv(6));
        println!("{task}: speedup");
        print!("{}", speedups.to_csv(3));
    }
    println!("results in {}", spec.out_dir.display());
    Ok(exit::OK)
}

/// Stages every file in a temporary sibling, then renames them into place,
/// so a failure before the renames leaves nothing behind.
pub fn write_files_atomically(files: &[(PathBuf, String)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, content) in files {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        tmp.write_all(content.as_bytes()).map_err(|e| Error::io(path, e))?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    }
    Ok(())
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Trajectory CSV: `t,P_0,…,P_n,trace,excitation`, full double precision.
pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from("t");
    for m in 0..record.sectors() {
        let _ = write!(out, ",P_{m}");
    }
    out.push_str(",trace,excitation\n");
    for k in 0..record.len() {
        out.push_str(&num(record.times[k]));
        for p in &record.photon_probs[k] {
            out.push(',');
            out.push_str(&num(*p));
        }
        let _ = writeln!(out, ",{},{}", num(record.trace[k]), num(record.excitation[k]));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub seed: u64,
    pub atoms: u32,
    pub dimension: usize,
    pub strategy: GridStrategy,
    pub dt: f64,
    pub steps: usize,
    pub taylor_order: usize,
    pub photon_factors: PhotonFactors,
    pub rwa: RwaReport,
    pub trajectory: TrajectorySummary,
}

/// Runs the configured trajectory from the all-excited state and writes the
/// CSV and summary JSON.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulationSummary> {
    config.validate()?;
    let params = config.model.params();
    let rwa = check_rwa(&params)?;
    let rho0 = initial_state_all_excited(params.n)?;
    let record = run_trajectory(&params, &config.evolution, &rho0)?;
    let summary = SimulationSummary {
        seed: config.seed,
        atoms: params.n,
        dimension: params.dimension(),
        strategy: config.evolution.strategy,
        dt: config.evolution.dt,
        steps: config.evolution.steps,
        taylor_order: config.evolution.taylor_order,
        photon_factors: params.photon_factors,
        rwa,
        trajectory: record.summarize(),
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Config(e.to_string()))? + "\n";
    write_files_atomically(&[
        (config.output.trajectory.clone(), trajectory_csv(&record)),
        (config.output.summary.clone(), json),
    ])?;
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub level: VerifyLevel,
    pub seed: u64,
    pub photon_factors: PhotonFactors,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            level: VerifyLevel::Quick,
            seed: 0,
            photon_factors: PhotonFactors::Bosonic,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_error: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn at_most(name: &str, max_error: f64, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            max_error,
            threshold,
            passed: max_error <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<24} {:>12} {:>12}  result\n", "check", "max_error", "threshold");
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<24} {:>12.3e} {:>12.3e}  {}",
                c.name,
                c.max_error,
                c.threshold,
                if c.passed { "PASS" } else { "FAIL" }
            );
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(out, "{} checks, {failed} failed", self.checks.len());
        out
    }
}

fn verify_engine(strategy: GridStrategy, fault: Option<Fault>) -> Result<CannonEngine> {
    match (strategy, fault) {
        (GridStrategy::Grid(_), Some(f)) => CannonEngine::with_fault(strategy, f),
        _ => CannonEngine::new(strategy),
    }
}

/// Runs the oracle suite. `quick` stays within a few seconds; `full` adds
/// 256×256 grids and the 8-atom sector checks.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    let full = opts.level == VerifyLevel::Full;
    let mut checks = Vec::new();

    // Distributed product against the serial kernel.
    let cases: Vec<(usize, Vec<usize>)> = if full {
        vec![(16, vec![2, 4]), (64, vec![2, 4]), (256, vec![2, 4, 8, 16])]
    } else {
        vec![(16, vec![2, 4]), (64, vec![2, 4])]
    };
    let seeds = if full { 20 } else { 5 };
    let mut worst = 0.0f64;
    for (dim, sides) in &cases {
        for &q in sides {
            let mut engine = verify_engine(GridStrategy::Grid(q), opts.fault)?;
            for s in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(s));
                let a = ComplexMatrix::random(*dim, &mut rng);
                let b = ComplexMatrix::random(*dim, &mut rng);
                let c = engine.multiply(&a, &b)?;
                worst = worst.max(relative_frobenius_distance(&c, &matmul_serial(&a, &b)?)?);
            }
        }
    }
    checks.push(CheckResult::at_most("cannon_vs_serial", worst, 1e-10));

    // Taylor factors against the spectral propagator, and exact adjointness.
    let n = if full { 8 } else { 4 };
    let params = ModelParams::uniform(n, 0.02).with_photon_factors(opts.photon_factors);
    let h = build_hamiltonian(&params)?;
    let x = 0.2;
    let dt = x / h.frobenius_norm();
    let order = DEFAULT_TAYLOR_ORDER;
    let mut serial = CannonEngine::serial();
    let left = build_left_factor(&h, dt, 1.0, order, &mut serial)?;
    let right = build_right_factor(&h, dt, 1.0, order, &mut serial)?;
    let err_l = frobenius_distance(&left, &exact_propagator(&h, dt, 1.0, -1.0)?)?;
    let err_r = frobenius_distance(&right, &exact_propagator(&h, dt, 1.0, 1.0)?)?;
    checks.push(CheckResult::at_most(
        "taylor_vs_exact",
        err_l.max(err_r),
        truncation_bound(x, order) + 1e-12,
    ));
    let mut adjoint_defect = frobenius_distance(&right, &left.adjoint())?;
    let sides: &[usize] = if full { &[2, 4, 8, 16] } else { &[2, 4] };
    for &q in sides {
        let mut engine = verify_engine(GridStrategy::Grid(q), opts.fault)?;
        let l = build_left_factor(&h, dt, 1.0, order, &mut engine)?;
        let r = build_right_factor(&h, dt, 1.0, order, &mut engine)?;
        adjoint_defect = adjoint_defect.max(frobenius_distance(&r, &l.adjoint())?);
    }
    checks.push(CheckResult::at_most("right_is_left_adjoint", adjoint_defect, 0.0));

    // Single-atom exchange against sin²(gt/ħ) over one full period.
    let g = 0.02;
    let config = EvolutionConfig {
        dt: 0.05,
        steps: (2.0 * std::f64::consts::PI / (g * 0.05)).ceil() as usize,
        ..EvolutionConfig::default()
    };
    let single = ModelParams::uniform(1, g).with_photon_factors(opts.photon_factors);
    let rabi = run_trajectory(&single, &config, &initial_state_all_excited(1)?)?;
    let rabi_err = rabi
        .times
        .iter()
        .zip(&rabi.photon_probs)
        .map(|(t, p)| (p[1] - (g * t).sin().powi(2)).abs())
        .fold(0.0, f64::max);
    checks.push(CheckResult::at_most("rabi_single_atom", rabi_err, 1e-4));

    // Conservation and strategy equivalence on one shared workload.
    let steps = if full { 200 } else { 100 };
    let config = EvolutionConfig {
        steps,
        ..EvolutionConfig::default()
    };
    let rho0 = initial_state_all_excited(n)?;
    let reference = run_trajectory(&params, &config, &rho0)?;
    let (mut sum_err, mut negativity) = (0.0f64, 0.0f64);
    for (probs, tr) in reference.photon_probs.iter().zip(&reference.trace) {
        sum_err = sum_err.max((probs.iter().sum::<f64>() - tr).abs());
        negativity = negativity.max(probs.iter().fold(0.0, |acc: f64, p| acc.max(-p)));
    }
    checks.push(CheckResult::at_most("trace_conservation", reference.max_trace_drift(), 1e-8));
    checks.push(CheckResult::at_most("hermiticity", reference.max_hermiticity_defect(), 1e-9));
    checks.push(CheckResult::at_most("sector_sum_equals_trace", sum_err, 1e-9));
    checks.push(CheckResult::at_most("sector_negativity", negativity, 1e-9));

    let h = build_hamiltonian(&params)?;
    let mut deviation = 0.0f64;
    for &q in sides {
        let mut engine = verify_engine(GridStrategy::Grid(q), opts.fault)?;
        let l = build_left_factor(&h, config.dt, 1.0, order, &mut engine)?;
        let r = build_right_factor(&h, config.dt, 1.0, order, &mut engine)?;
        let mut rho = rho0.clone();
        for step in 1..=steps {
            rho = crate::evolution::evolve_step(&l, &rho, &r, &mut engine, false)?;
            let probs = crate::evolution::photon_distribution(&rho, n)?;
            for (a, b) in probs.iter().zip(&reference.photon_probs[step]) {
                deviation = deviation.max((a - b).abs());
            }
        }
    }
    checks.push(CheckResult::at_most("strategy_equivalence", deviation, 1e-8));

    if full {
        let trajectory = run_trajectory(&params, &EvolutionConfig::default(), &rho0)?;
        checks.extend(sector_shape_checks(&trajectory));
    }
    Ok(VerifyReport { checks })
}

/// Checks on the collapse of the all-excited state: P_0 starts at 1, first
/// peaks arrive in sector order, and sectors m and n−m peak equally high.
pub fn sector_shape_checks(record: &TrajectoryRecord) -> Vec<CheckResult> {
    let n = record.atoms as usize;
    let start = (record.photon_probs[0][0] - 1.0).abs();
    let mut order_violation = f64::NEG_INFINITY;
    for m in 1..n {
        let gap = match (record.first_peak_time(m), record.first_peak_time(m + 1)) {
            (Some(a), Some(b)) => a - b,
            _ => f64::INFINITY,
        };
        order_violation = order_violation.max(gap);
    }
    let mut asymmetry = 0.0f64;
    for m in 0..=n / 2 {
        asymmetry = asymmetry.max((record.max_probability(m) - record.max_probability(n - m)).abs());
    }
    vec![
        CheckResult::at_most("initial_vacuum", start, 0.0),
        CheckResult {
            name: "first_peak_order".into(),
            max_error: order_violation,
            threshold: 0.0,
            passed: order_violation < 0.0,
        },
        CheckResult::at_most("sector_peak_symmetry", asymmetry, 0.02),
    ]
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub dimensions: Vec<usize>,
    pub strategies: Vec<GridStrategy>,
    pub tasks: Vec<BenchTask>,
    pub repetitions: usize,
    pub steps: usize,
    pub options: BenchOptions,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub records: Vec<TimingRecord>,
    /// Per task: wall-time table and speedup table.
    pub tables: Vec<(BenchTask, StrategyTable, StrategyTable)>,
    /// (strategy, dimension) pairs skipped as infeasible.
    pub skipped: Vec<(GridStrategy, usize)>,
}

/// Times every feasible task × dimension × strategy sequentially and writes
/// `records.csv`, `time_<task>.csv` and `speedup_<task>.csv` to `out_dir`.
pub fn cmd_bench(spec: &BenchSpec) -> Result<BenchOutput> {
    if spec.dimensions.is_empty() || spec.strategies.is_empty() || spec.tasks.is_empty() {
        return Err(Error::Config("bench needs at least one dimension, strategy and task".into()));
    }
    if spec.repetitions == 0 || spec.steps == 0 {
        return Err(Error::Config("repetitions and steps must be at least 1".into()));
    }
    let mut dims = spec.dimensions.clone();
    dims.sort_unstable();
    dims.dedup();
    let mut strategies = spec.strategies.clone();
    strategies.push(GridStrategy::Serial);
    strategies.sort();
    strategies.dedup();
    for &d in &dims {
        parse_dimension(&d.to_string()).map_err(Error::Config)?;
    }

    let mut records = Vec::new();
    let mut tables = Vec::new();
    let mut skipped = Vec::new();
    let mut files = Vec::new();
    for &task in &spec.tasks {
        let mut task_records = Vec::new();
        for &d in &dims {
            for &s in &strategies {
                if !s.supports_dimension(d) || s.workers() > spec.options.worker_cap {
                    if task == spec.tasks[0] {
                        skipped.push((s, d));
                    }
                    continue;
                }
                let timed = match task {
                    BenchTask::Taylor => time_taylor_with(d, s, spec.repetitions, &spec.options),
                    BenchTask::Evolution => time_evolution_with(d, s, spec.steps, spec.repetitions, &spec.options),
                };
                match timed {
                    Ok(r) => task_records.push(r),
                    Err(Error::WorkersUnavailable { .. }) => {
                        if task == spec.tasks[0] {
                            skipped.push((s, d));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let times = time_table(&task_records)?.with_axes(&strategies, &dims);
        let speedups = speedup_table(&task_records)?.with_axes(&strategies, &dims);
        files.push((spec.out_dir.join(format!("time_{task}.csv")), times.to_csv(6)));
        files.push((spec.out_dir.join(format!("speedup_{task}.csv")), speedups.to_csv(3)));
        tables.push((task, times, speedups));
        records.extend(task_records);
    }
    let metadata: Vec<(String, String)> = [
        ("cores", available_cores().to_string()),
        ("worker_cap", spec.options.worker_cap.to_string()),
        ("seed", spec.options.seed.to_string()),
        (
            "input",
            match spec.options.input {
                BenchInput::Synthetic => "synthetic".to_string(),
                BenchInput::Tcm => "tcm".to_string(),
            },
        ),
        ("taylor_order", spec.options.taylor_order.to_string()),
        ("evolution_steps", spec.steps.to_string()),
        ("factors_included", spec.options.include_factors.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    files.insert(0, (spec.out_dir.join("records.csv"), records_csv(&records, &metadata)));
    write_files_atomically(&files)?;
    Ok(BenchOutput {
        records,
        tables,
        skipped,
    })
}

/// A trajectory CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrajectory {
    pub atoms: u32,
    pub times: Vec<f64>,
    /// `probs[row][m]`.
    pub probs: Vec<Vec<f64>>,
}

pub fn parse_trajectory_csv(text: &str) -> Result<ParsedTrajectory> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| Error::MalformedCsv("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 5 || cols[0] != "t" || cols[cols.len() - 2] != "trace" || cols[cols.len() - 1] != "excitation" {
        return Err(Error::MalformedCsv(format!("unexpected header '{header}'")));
    }
    let sectors = cols.len() - 3;
    for (m, c) in cols[1..=sectors].iter().enumerate() {
        if *c != format!("P_{m}") {
            return Err(Error::MalformedCsv(format!("expected column P_{m}, found '{c}'")));
        }
    }
    let mut times = Vec::new();
    let mut probs = Vec::new();
    for (i, line) in lines {
        let values = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::MalformedCsv(format!("line {}: non-numeric field", i + 1)))?;
        if values.len() != cols.len() {
            return Err(Error::MalformedCsv(format!(
                "line {}: {} fields, expected {}",
                i + 1,
                values.len(),
                cols.len()
            )));
        }
        times.push(values[0]);
        probs.push(values[1..=sectors].to_vec());
    }
    if times.is_empty() {
        return Err(Error::MalformedCsv("no data rows".into()));
    }
    Ok(ParsedTrajectory {
        atoms: (sectors - 1) as u32,
        times,
        probs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub sector: usize,
    pub time: f64,
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub series: Vec<PathBuf>,
    pub peaks_file: PathBuf,
    pub peaks: Vec<Peak>,
}

/// Writes `sector_<m>.csv` (`t,P_m`) for every sector and `peaks.csv`
/// (`sector,t,height`) listing every local maximum.
pub fn cmd_plotdata(input: &Path, out_dir: &Path) -> Result<PlotData> {
    let text = std::fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let traj = parse_trajectory_csv(&text)?;
    let sectors = traj.atoms as usize + 1;
    let mut files = Vec::with_capacity(sectors + 1);
    let mut peaks = Vec::new();
    for m in 0..sectors {
        let series: Vec<f64> = traj.probs.iter().map(|p| p[m]).collect();
        let mut out = format!("t,P_{m}\n");
        for (t, p) in traj.times.iter().zip(&series) {
            let _ = writeln!(out, "{},{}", num(*t), num(*p));
        }
        files.push((out_dir.join(format!("sector_{m}.csv")), out));
        peaks.extend(local_maxima(&series).into_iter().map(|i| Peak {
            sector: m,
            time: traj.times[i],
            height: series[i],
        }));
    }
    let mut out = String::from("sector,t,height\n");
    for p in &peaks {
        let _ = writeln!(out, "{},{},{}", p.sector, num(p.time), num(p.height));
    }
    let peaks_file = out_dir.join("peaks.csv");
    files.push((peaks_file.clone(), out));
    write_files_atomically(&files)?;
    Ok(PlotData {
        series: files[..sectors].iter().map(|f| f.0.clone()).collect(),
        peaks_file,
        peaks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_parsing() {
        assert_eq!(parse_dimension("256"), Ok(256));
        assert_eq!(parse_dimension("2^8"), Ok(256));
        assert!(parse_dimension("6").is_err());
        assert!(parse_dimension("1").is_err());
        assert!(parse_dimension("2^99").is_err());
    }

    #[test]
    fn error_classes_have_distinct_codes() {
        let codes = [
            exit::OK,
            exit::USAGE,
            exit::CONFIG,
            exit::TRACE_DRIFT,
            exit::VERIFY_FAILED,
            exit::IO,
            exit::MALFORMED_CSV,
            exit::RUNTIME,
        ];
        let mut sorted = codes.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), codes.len());
        assert_eq!(exit_code(&Error::TraceDrift { trace: 2.0, time: 1.0 }), exit::TRACE_DRIFT);
        assert_eq!(exit_code(&Error::MalformedCsv("x".into())), exit::MALFORMED_CSV);
        assert_eq!(exit_code(&Error::Config("x".into())), exit::CONFIG);
        assert_eq!(exit_code(&Error::WorkerFailed("x".into())), exit::RUNTIME);
    }

    #[test]
    fn csv_header_and_precision() {
        let params = ModelParams::uniform(2, 0.02);
        let config = EvolutionConfig {
            steps: 3,
            ..EvolutionConfig::default()
        };
        let rec = run_trajectory(&params, &config, &initial_state_all_excited(2).unwrap()).unwrap();
        let csv = trajectory_csv(&rec);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,P_0,P_1,P_2,trace,excitation"));
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(first, vec![0.0, 1.0, 0.0, 0.0, 1.0, 2.0]);
        let parsed = parse_trajectory_csv(&csv).unwrap();
        assert_eq!(parsed.atoms, 2);
        assert_eq!(parsed.times, rec.times);
        assert_eq!(parsed.probs, rec.photon_probs);
    }

    #[test]
    fn malformed_csv_rejected() {
        for bad in [
            "",
            "t,P_0,trace\n0,1,1\n",
            "t,P_0,P_2,trace,excitation\n0,1,0,1,1\n",
            "t,P_0,P_1,trace,excitation\n",
            "t,P_0,P_1,trace,excitation\n0,1,0,1\n",
            "t,P_0,P_1,trace,excitation\n0,1,x,1,1\n",
            "t,P_0,P_1,trace,excitation\n0,1,NaN,1,1\n",
        ] {
            assert!(matches!(parse_trajectory_csv(bad), Err(Error::MalformedCsv(_))), "{bad:?}");
        }
    }

    #[test]
    fn simulate_overrides_apply() {
        let args = SimulateArgs {
            atoms: Some(1),
            steps: Some(5),
            strategy: Some(GridStrategy::Grid(2)),
            photon_factors: Some(FactorsArg::Unit),
            ..SimulateArgs::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.model.n, 1);
        assert_eq!(c.evolution.steps, 5);
        assert_eq!(c.evolution.strategy, GridStrategy::Grid(2));
        assert_eq!(c.model.photon_factors, PhotonFactors::Unit);
        c.validate().unwrap();
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
