//! Strategy comparison harness.
//!
//! Times Taylor factor construction and fixed-step evolution per dimension
//! and grid strategy, and turns the timings into strategy × dimension tables
//! of wall time and of speedup relative to serial execution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cannon::{CannonEngine, GridStrategy};
use crate::densela::ComplexMatrix;
use crate::error::{Error, Result};
use crate::evolution::{
    build_left_factor, build_right_factor, evolve_hamiltonian, evolve_with_factors, initial_state_all_excited,
    EvolutionConfig, TrajectoryRecord, DEFAULT_TAYLOR_ORDER,
};
use crate::model::{build_hamiltonian, ModelParams, DEFAULT_MAX_ATOMS};

/// Column set of the timing record CSV.
pub const RECORD_COLUMNS: [&str; 6] = ["task", "dimension", "strategy", "workers", "repetitions", "wall_time_seconds"];

/// Marker for configurations that were not (or could not be) run.
pub const ABSENT: &str = "--";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchTask {
    Taylor,
    Evolution,
}

impl std::fmt::Display for BenchTask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchTask::Taylor => "taylor",
            BenchTask::Evolution => "evolution",
        })
    }
}

/// Source of the matrix being timed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchInput {
    /// Seeded random Hermitian matrix, normalized to unit Frobenius norm.
    #[default]
    Synthetic,
    /// The model Hamiltonian with `log2(dimension)` atoms at coupling 0.02.
    Tcm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    pub seed: u64,
    pub input: BenchInput,
    pub taylor_order: usize,
    /// Whether evolution timings include building `L` and `R`.
    pub include_factors: bool,
    /// Cap on workers a strategy may use.
    pub worker_cap: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            input: BenchInput::Synthetic,
            taylor_order: DEFAULT_TAYLOR_ORDER,
            include_factors: true,
            worker_cap: crate::cannon::worker_cap_from_env(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub task: BenchTask,
    pub dimension: usize,
    pub strategy: GridStrategy,
    /// Median over `repetitions`, in seconds.
    pub wall_time: f64,
    pub workers: usize,
    pub repetitions: usize,
    /// Unix seconds when the measurement finished.
    pub timestamp: u64,
    pub factors_included: bool,
}

fn atoms_for(dimension: usize) -> Result<u32> {
    if dimension < 2 || !dimension.is_power_of_two() {
        return Err(Error::InvalidParameter(format!("dimension {dimension} is not 2^n with n >= 1")));
    }
    let n = dimension.trailing_zeros();
    if n > DEFAULT_MAX_ATOMS {
        return Err(Error::DimensionOverflow {
            atoms: n,
            cap: DEFAULT_MAX_ATOMS,
        });
    }
    Ok(n)
}

/// Matrix and time step used for a benchmark at `dimension`. Identical seeds
/// give bit-identical matrices.
pub fn bench_hamiltonian(dimension: usize, options: &BenchOptions) -> Result<(ComplexMatrix, f64)> {
    let n = atoms_for(dimension)?;
    match options.input {
        BenchInput::Synthetic => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let h = ComplexMatrix::random_hermitian(dimension, &mut rng);
            let norm = h.frobenius_norm();
            Ok((h.scale_real(1.0 / norm), 0.1))
        }
        BenchInput::Tcm => {
            let params = ModelParams::uniform(n, 0.02);
            Ok((build_hamiltonian(&params)?, 0.05 / f64::from(n)))
        }
    }
}

fn engine_for(dimension: usize, strategy: GridStrategy, options: &BenchOptions) -> Result<CannonEngine> {
    if !strategy.supports_dimension(dimension) {
        return Err(Error::Indivisible {
            q: strategy.grid_side().unwrap_or(1),
            dim: dimension,
        });
    }
    CannonEngine::with_worker_cap(strategy, options.worker_cap)
}

/// The work timed by [`time_taylor`]: both propagator factors.
pub fn taylor_workload(
    h: &ComplexMatrix,
    dt: f64,
    order: usize,
    engine: &mut CannonEngine,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let left = build_left_factor(h, dt, 1.0, order, engine)?;
    let right = build_right_factor(h, dt, 1.0, order, engine)?;
    Ok((left, right))
}

/// The work timed by [`time_evolution`] once factors exist or are included.
pub fn evolution_workload(
    h: &ComplexMatrix,
    dt: f64,
    steps: usize,
    options: &BenchOptions,
    engine: &mut CannonEngine,
) -> Result<TrajectoryRecord> {
    let n = atoms_for(h.dim())?;
    let config = EvolutionConfig {
        dt,
        steps,
        taylor_order: options.taylor_order,
        strategy: engine.strategy(),
        renormalize_trace: false,
        stride: 1,
    };
    evolve_hamiltonian(h, n, 1.0, &config, &initial_state_all_excited(n)?, engine)
}

fn median(mut samples: Vec<f64>) -> f64 {
    samples.sort_by(f64::total_cmp);
    let mid = samples.len() / 2;
    if samples.len() % 2 == 1 {
        samples[mid]
    } else {
        0.5 * (samples[mid - 1] + samples[mid])
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn measure(repetitions: usize, mut run: impl FnMut() -> Result<()>) -> Result<f64> {
    if repetitions == 0 {
        return Err(Error::InvalidParameter("repetitions must be at least 1".into()));
    }
    let mut samples = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        run()?;
        // Keep the record strictly positive on coarse clocks.
        samples.push(start.elapsed().as_secs_f64().max(1e-9));
    }
    Ok(median(samples))
}

pub fn time_taylor(dimension: usize, strategy: GridStrategy, repetitions: usize) -> Result<TimingRecord> {
    time_taylor_with(dimension, strategy, repetitions, &BenchOptions::default())
}

pub fn time_taylor_with(
    dimension: usize,
    strategy: GridStrategy,
    repetitions: usize,
    options: &BenchOptions,
) -> Result<TimingRecord> {
    let (h, dt) = bench_hamiltonian(dimension, options)?;
    let mut engine = engine_for(dimension, strategy, options)?;
    let wall_time = measure(repetitions, || {
        taylor_workload(&h, dt, options.taylor_order, &mut engine).map(drop)
    })?;
    Ok(TimingRecord {
        task: BenchTask::Taylor,
        dimension,
        strategy,
        wall_time,
        workers: strategy.workers(),
        repetitions,
        timestamp: now_unix(),
        factors_included: true,
    })
}

pub fn time_evolution(
    dimension: usize,
    strategy: GridStrategy,
    steps: usize,
    repetitions: usize,
) -> Result<TimingRecord> {
    time_evolution_with(dimension, strategy, steps, repetitions, &BenchOptions::default())
}

pub fn time_evolution_with(
    dimension: usize,
    strategy: GridStrategy,
    steps: usize,
    repetitions: usize,
    options: &BenchOptions,
) -> Result<TimingRecord> {
    let (h, dt) = bench_hamiltonian(dimension, options)?;
    let n = atoms_for(dimension)?;
    let mut engine = engine_for(dimension, strategy, options)?;
    let wall_time = if options.include_factors {
        measure(repetitions, || evolution_workload(&h, dt, steps, options, &mut engine).map(drop))?
    } else {
        let (left, right) = taylor_workload(&h, dt, options.taylor_order, &mut engine)?;
        let config = EvolutionConfig {
            dt,
            steps,
            taylor_order: options.taylor_order,
            strategy,
            renormalize_trace: false,
            stride: 1,
        };
        let rho0 = initial_state_all_excited(n)?;
        measure(repetitions, || {
            evolve_with_factors(&left, &right, n, &config, &rho0, &mut engine).map(drop)
        })?
    };
    Ok(TimingRecord {
        task: BenchTask::Evolution,
        dimension,
        strategy,
        wall_time,
        workers: strategy.workers(),
        repetitions,
        timestamp: now_unix(),
        factors_included: options.include_factors,
    })
}

/// Strategy × dimension table; `None` marks an absent cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    pub task: BenchTask,
    pub strategies: Vec<GridStrategy>,
    pub dimensions: Vec<usize>,
    /// `cells[row][col]` for `strategies[row]`, `dimensions[col]`.
    pub cells: Vec<Vec<Option<f64>>>,
}

pub type SpeedupTable = StrategyTable;

impl StrategyTable {
    pub fn cell(&self, strategy: GridStrategy, dimension: usize) -> Option<f64> {
        let r = self.strategies.iter().position(|&s| s == strategy)?;
        let c = self.dimensions.iter().position(|&d| d == dimension)?;
        self.cells[r][c]
    }

    /// Re-lays the table on the given axes; cells with no record become
    /// absent, so infeasible strategies still get a row.
    pub fn with_axes(&self, strategies: &[GridStrategy], dimensions: &[usize]) -> StrategyTable {
        let cells = strategies
            .iter()
            .map(|&s| dimensions.iter().map(|&d| self.cell(s, d)).collect())
            .collect();
        StrategyTable {
            task: self.task,
            strategies: strategies.to_vec(),
            dimensions: dimensions.to_vec(),
            cells,
        }
    }

    /// CSV with one row per strategy; cells use `precision` decimals.
    pub fn to_csv(&self, precision: usize) -> String {
        let mut out = String::from("strategy");
        for d in &self.dimensions {
            let _ = write!(out, ",{d}");
        }
        out.push('\n');
        for (s, row) in self.strategies.iter().zip(&self.cells) {
            out.push_str(&s.to_string());
            for cell in row {
                match cell {
                    Some(v) => {
                        let _ = write!(out, ",{v:.precision$}");
                    }
                    None => {
                        let _ = write!(out, ",{ABSENT}");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

type Cells = BTreeMap<(GridStrategy, usize), f64>;

fn index_records(records: &[TimingRecord]) -> Result<(BenchTask, Cells)> {
    let task = records
        .first()
        .map(|r| r.task)
        .ok_or_else(|| Error::InvalidParameter("no timing records".into()))?;
    let mut cells = BTreeMap::new();
    for r in records {
        if r.task != task {
            return Err(Error::InvalidParameter(format!("mixed tasks {task} and {}", r.task)));
        }
        if !(r.wall_time.is_finite() && r.wall_time > 0.0) {
            return Err(Error::InvalidParameter(format!("non-positive wall time {}", r.wall_time)));
        }
        if cells.insert((r.strategy, r.dimension), r.wall_time).is_some() {
            return Err(Error::InvalidParameter(format!(
                "duplicate record for {} at dimension {}",
                r.strategy, r.dimension
            )));
        }
    }
    Ok((task, cells))
}

fn table_from(
    task: BenchTask,
    cells: &Cells,
    value: impl Fn(GridStrategy, usize, f64) -> f64,
) -> StrategyTable {
    let mut strategies: BTreeSet<GridStrategy> = cells.keys().map(|k| k.0).collect();
    strategies.insert(GridStrategy::Serial);
    let dimensions: BTreeSet<usize> = cells.keys().map(|k| k.1).collect();
    let strategies: Vec<_> = strategies.into_iter().collect();
    let dimensions: Vec<_> = dimensions.into_iter().collect();
    let rows = strategies
        .iter()
        .map(|&s| {
            dimensions
                .iter()
                .map(|&d| cells.get(&(s, d)).map(|&t| value(s, d, t)))
                .collect()
        })
        .collect();
    StrategyTable {
        task,
        strategies,
        dimensions,
        cells: rows,
    }
}

/// Wall times arranged strategy × dimension.
pub fn time_table(records: &[TimingRecord]) -> Result<StrategyTable> {
    let (task, cells) = index_records(records)?;
    Ok(table_from(task, &cells, |_, _, t| t))
}

/// `T_serial / T_strategy` per dimension; every dimension needs a serial
/// baseline.
pub fn speedup_table(records: &[TimingRecord]) -> Result<SpeedupTable> {
    let (task, cells) = index_records(records)?;
    let dims: BTreeSet<usize> = cells.keys().map(|k| k.1).collect();
    let mut baseline = BTreeMap::new();
    for d in dims {
        let t = cells.get(&(GridStrategy::Serial, d)).ok_or(Error::MissingBaseline(d))?;
        baseline.insert(d, *t);
    }
    Ok(table_from(task, &cells, |_, d, t| baseline[&d] / t))
}

/// Timing records as CSV, preceded by `#` metadata lines.
pub fn records_csv(records: &[TimingRecord], metadata: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(&RECORD_COLUMNS.join(","));
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.9}",
            r.task, r.dimension, r.strategy, r.workers, r.repetitions, r.wall_time
        );
    }
    out
}

pub fn available_cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::{exact_propagator, frobenius_distance};

    fn rec(strategy: GridStrategy, dimension: usize, wall_time: f64) -> TimingRecord {
        TimingRecord {
            task: BenchTask::Taylor,
            dimension,
            strategy,
            wall_time,
            workers: strategy.workers(),
            repetitions: 3,
            timestamp: 0,
            factors_included: true,
        }
    }

    #[test]
    fn taylor_record_bookkeeping() {
        let r = time_taylor(16, GridStrategy::Serial, 3).unwrap();
        assert_eq!(r.task, BenchTask::Taylor);
        assert_eq!(r.workers, 1);
        assert_eq!(r.repetitions, 3);
        assert!(r.wall_time > 0.0);
    }

    #[test]
    fn large_grid_records_worker_count() {
        let r = time_taylor(256, GridStrategy::Grid(16), 1).unwrap();
        assert_eq!(r.workers, 256);
    }

    #[test]
    fn evolution_record_bookkeeping() {
        let r = time_evolution(16, GridStrategy::Grid(2), 5, 3).unwrap();
        assert_eq!(r.task, BenchTask::Evolution);
        assert_eq!(r.workers, 4);
        assert!(r.factors_included);
        let opts = BenchOptions {
            include_factors: false,
            input: BenchInput::Tcm,
            ..BenchOptions::default()
        };
        let r = time_evolution_with(16, GridStrategy::Serial, 5, 1, &opts).unwrap();
        assert!(!r.factors_included);
    }

    #[test]
    fn inputs_are_seed_deterministic() {
        let opts = BenchOptions::default();
        assert_eq!(bench_hamiltonian(64, &opts).unwrap(), bench_hamiltonian(64, &opts).unwrap());
        let other = BenchOptions {
            seed: 1,
            ..BenchOptions::default()
        };
        assert_ne!(bench_hamiltonian(64, &opts).unwrap(), bench_hamiltonian(64, &other).unwrap());
    }

    #[test]
    fn invalid_benchmarks_rejected() {
        assert!(matches!(
            time_taylor(8, GridStrategy::Grid(16), 1),
            Err(Error::Indivisible { q: 16, dim: 8 })
        ));
        assert!(time_taylor(12, GridStrategy::Serial, 1).is_err());
        assert!(time_taylor(16, GridStrategy::Serial, 0).is_err());
    }

    #[test]
    fn timed_outputs_still_pass_oracles() {
        let opts = BenchOptions::default();
        let (h, dt) = bench_hamiltonian(32, &opts).unwrap();
        let mut engine = CannonEngine::new(GridStrategy::Grid(4)).unwrap();
        let (l, r) = taylor_workload(&h, dt, 10, &mut engine).unwrap();
        assert!(frobenius_distance(&l, &exact_propagator(&h, dt, 1.0, -1.0).unwrap()).unwrap() < 1e-12);
        assert!(frobenius_distance(&r, &exact_propagator(&h, dt, 1.0, 1.0).unwrap()).unwrap() < 1e-12);
        let (ls, rs) = taylor_workload(&h, dt, 10, &mut CannonEngine::serial()).unwrap();
        assert!(frobenius_distance(&l, &ls).unwrap() < 1e-14);
        assert!(frobenius_distance(&r, &rs).unwrap() < 1e-14);
    }

    #[test]
    fn speedup_ratio_definition() {
        let t = speedup_table(&[rec(GridStrategy::Serial, 256, 10.0), rec(GridStrategy::Grid(2), 256, 5.0)]).unwrap();
        assert_eq!(t.cell(GridStrategy::Grid(2), 256), Some(2.0));
        assert_eq!(t.cell(GridStrategy::Serial, 256), Some(1.0));
    }

    #[test]
    fn serial_only_table_is_all_ones() {
        let records = [
            rec(GridStrategy::Serial, 256, 0.37),
            rec(GridStrategy::Serial, 512, 2.9),
            rec(GridStrategy::Serial, 1024, 23.1),
        ];
        let t = speedup_table(&records).unwrap();
        assert_eq!(t.strategies, vec![GridStrategy::Serial]);
        assert!(t.cells[0].iter().all(|&c| c == Some(1.0)));
        assert_eq!(t.to_csv(3), "strategy,256,512,1024\nserial,1.000,1.000,1.000\n");
    }

    #[test]
    fn absent_cells_are_marked() {
        let records = [
            rec(GridStrategy::Serial, 256, 1.0),
            rec(GridStrategy::Serial, 512, 4.0),
            rec(GridStrategy::Grid(2), 512, 2.0),
        ];
        let t = speedup_table(&records).unwrap();
        assert_eq!(t.cell(GridStrategy::Grid(2), 256), None);
        assert_eq!(t.to_csv(3), "strategy,256,512\nserial,1.000,1.000\n2x2,--,2.000\n");
    }

    #[test]
    fn infeasible_strategy_keeps_its_row() {
        let t = speedup_table(&[rec(GridStrategy::Serial, 8, 1.0)])
            .unwrap()
            .with_axes(&[GridStrategy::Serial, GridStrategy::Grid(16)], &[8]);
        assert_eq!(t.to_csv(3), "strategy,8\nserial,1.000\n16x16,--\n");
    }

    #[test]
    fn missing_baseline_rejected() {
        let err = speedup_table(&[rec(GridStrategy::Grid(2), 256, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::MissingBaseline(256)));
        let mut mixed = rec(GridStrategy::Serial, 256, 1.0);
        mixed.task = BenchTask::Evolution;
        assert!(speedup_table(&[rec(GridStrategy::Serial, 256, 1.0), mixed]).is_err());
        assert!(speedup_table(&[]).is_err());
    }

    #[test]
    fn records_csv_layout() {
        let csv = records_csv(&[rec(GridStrategy::Grid(4), 256, 0.5)], &[("cores".into(), "8".into())]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# cores=8");
        assert_eq!(lines[1], "task,dimension,strategy,workers,repetitions,wall_time_seconds");
        assert_eq!(lines[2], "taylor,256,4x4,16,3,0.500000000");
    }

    #[test]
    fn median_of_samples() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(vec![7.0]), 7.0);
    }
}
