//! Cannon's block-distributed matrix product over a q×q worker torus.
//!
//! The input blocks are skewed once (row `i` of A left by `i`, column `j` of B
//! up by `j`), then every worker runs `q` rounds of local multiply-accumulate,
//! passing its A-block to the left neighbour and its B-block to the upper
//! neighbour between rounds. A barrier closes each round. After the last
//! shift every tile is back where the skew put it.

mod barrier;
mod grid;
mod worker;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use grid::{aligned_a_source, aligned_b_source, gather, initial_alignment, partition, BlockGrid};

use crate::densela::{matmul_serial, ComplexMatrix};
use crate::error::{Error, Result};
use worker::WorkerGrid;

/// Environment variable capping the number of workers a grid may spawn.
pub const WORKER_CAP_ENV: &str = "TCM_MAX_WORKERS";

/// Cap used when [`WORKER_CAP_ENV`] is unset: 32×32.
pub const DEFAULT_WORKER_CAP: usize = 1024;

/// Grid sides swept by default, 2×2 through 16×16.
pub const DEFAULT_GRID_SIDES: [usize; 4] = [2, 4, 8, 16];

/// How a product is executed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GridStrategy {
    #[default]
    Serial,
    /// q×q workers.
    Grid(usize),
}

impl GridStrategy {
    pub fn workers(&self) -> usize {
        match *self {
            GridStrategy::Serial => 1,
            GridStrategy::Grid(q) => q * q,
        }
    }

    pub fn grid_side(&self) -> Option<usize> {
        match *self {
            GridStrategy::Serial => None,
            GridStrategy::Grid(q) => Some(q),
        }
    }

    /// Whether blocks of this grid tile a `dim × dim` matrix exactly.
    pub fn supports_dimension(&self, dim: usize) -> bool {
        match *self {
            GridStrategy::Serial => dim >= 1,
            GridStrategy::Grid(q) => q >= 1 && dim >= q && dim.is_multiple_of(q),
        }
    }

    /// Serial followed by every default grid side.
    pub fn default_sweep() -> Vec<GridStrategy> {
        std::iter::once(GridStrategy::Serial)
            .chain(DEFAULT_GRID_SIDES.iter().map(|&q| GridStrategy::Grid(q)))
            .collect()
    }
}

impl fmt::Display for GridStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            GridStrategy::Serial => f.write_str("serial"),
            GridStrategy::Grid(q) => write!(f, "{q}x{q}"),
        }
    }
}

impl FromStr for GridStrategy {
    type Err = Error;

    /// Accepts `serial`, `4x4`, `grid(4)`, `grid4` or a bare `4`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "serial" || t == "none" {
            return Ok(GridStrategy::Serial);
        }
        let parse = |x: &str| x.trim().parse::<usize>().ok().filter(|&q| q >= 1);
        let side = if let Some((l, r)) = t.split_once('x') {
            match (parse(l), parse(r)) {
                (Some(a), Some(b)) if a == b => Some(a),
                _ => None,
            }
        } else if let Some(inner) = t.strip_prefix("grid(").and_then(|x| x.strip_suffix(')')) {
            parse(inner)
        } else if let Some(rest) = t.strip_prefix("grid") {
            parse(rest)
        } else {
            parse(&t)
        };
        side.map(GridStrategy::Grid)
            .ok_or_else(|| Error::InvalidParameter(format!("unrecognised strategy '{s}'")))
    }
}

impl From<GridStrategy> for String {
    fn from(s: GridStrategy) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for GridStrategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Test hooks for mutation checks. Never set in production paths.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// A-blocks travel right instead of left.
    ReversedShift,
    /// Worker `(row, col)` panics at the start of `round`.
    WorkerPanic { row: usize, col: usize, round: usize },
}

/// Reads [`WORKER_CAP_ENV`], falling back to [`DEFAULT_WORKER_CAP`].
pub fn worker_cap_from_env() -> usize {
    std::env::var(WORKER_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&c| c >= 1)
        .unwrap_or(DEFAULT_WORKER_CAP)
}

/// Executes products under one strategy, owning its worker grid.
///
/// Taking `&mut self` for every product gives the caller exclusive use of the
/// grid; two products never share workers concurrently.
pub struct CannonEngine {
    strategy: GridStrategy,
    grid: Option<WorkerGrid>,
}

impl CannonEngine {
    pub fn new(strategy: GridStrategy) -> Result<Self> {
        Self::build(strategy, worker_cap_from_env(), None)
    }

    pub fn serial() -> Self {
        Self {
            strategy: GridStrategy::Serial,
            grid: None,
        }
    }

    pub fn with_worker_cap(strategy: GridStrategy, cap: usize) -> Result<Self> {
        Self::build(strategy, cap, None)
    }

    #[doc(hidden)]
    pub fn with_fault(strategy: GridStrategy, fault: Fault) -> Result<Self> {
        Self::build(strategy, worker_cap_from_env(), Some(fault))
    }

    fn build(strategy: GridStrategy, cap: usize, fault: Option<Fault>) -> Result<Self> {
        let grid = match strategy {
            GridStrategy::Serial => None,
            GridStrategy::Grid(0) => {
                return Err(Error::InvalidParameter("grid side must be at least 1".into()));
            }
            GridStrategy::Grid(q) => {
                if q * q > cap {
                    return Err(Error::WorkersUnavailable {
                        requested: q * q,
                        cap,
                    });
                }
                Some(WorkerGrid::spawn(q, fault)?)
            }
        };
        Ok(Self { strategy, grid })
    }

    pub fn strategy(&self) -> GridStrategy {
        self.strategy
    }

    pub fn workers(&self) -> usize {
        self.strategy.workers()
    }

    /// `A · B` under this engine's strategy.
    pub fn multiply(&mut self, a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(self.multiply_traced(a, b)?.0)
    }

    pub(crate) fn multiply_traced(
        &mut self,
        a: &ComplexMatrix,
        b: &ComplexMatrix,
    ) -> Result<(ComplexMatrix, Vec<worker::WorkerOutcome>)> {
        if a.dim() != b.dim() {
            return Err(Error::DimensionMismatch {
                left: a.dim(),
                right: b.dim(),
            });
        }
        let Some(grid) = self.grid.as_mut() else {
            return Ok((matmul_serial(a, b)?, Vec::new()));
        };
        let q = grid.q();
        let (ga, gb) = initial_alignment(&partition(a, q)?, &partition(b, q)?)?;
        let outcomes = grid.run(ga, gb)?;
        let mut gc = BlockGrid::empty(q, a.dim() / q);
        for o in &outcomes {
            let (i, j) = o.pos;
            if o.held_a != aligned_a_source(i, j, q) || o.held_b != aligned_b_source(i, j, q) {
                return Err(Error::WorkerFailed(format!("tiles misrouted at worker ({i}, {j})")));
            }
            gc.set_block(o.pos.0, o.pos.1, o.c.clone())?;
        }
        let c = gather(&gc)?;
        c.check_finite()?;
        Ok((c, outcomes))
    }

    /// Right-nested chain `M_1 · (M_2 · (⋯ (M_{k−1} · M_k)))`.
    pub fn chain(&mut self, ms: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
        if ms.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a product chain needs at least two matrices, got {}",
                ms.len()
            )));
        }
        let dim = ms[0].dim();
        if let Some(bad) = ms.iter().find(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.dim(),
            });
        }
        let (last, rest) = ms.split_last().expect("length checked");
        let mut acc = (*last).clone();
        for m in rest.iter().rev() {
            acc = self.multiply(m, &acc)?;
        }
        Ok(acc)
    }
}

/// One-shot product on a freshly created grid.
pub fn cannon_multiply(a: &ComplexMatrix, b: &ComplexMatrix, strategy: GridStrategy) -> Result<ComplexMatrix> {
    CannonEngine::new(strategy)?.multiply(a, b)
}

/// One-shot right-nested chain on a freshly created grid.
pub fn cannon_chain(ms: &[&ComplexMatrix], strategy: GridStrategy) -> Result<ComplexMatrix> {
    CannonEngine::new(strategy)?.chain(ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::{frobenius_distance, relative_frobenius_distance, C64};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn strategy_parsing() {
        assert_eq!("serial".parse::<GridStrategy>().unwrap(), GridStrategy::Serial);
        for s in ["4x4", "grid(4)", "grid4", "4", " 4X4 "] {
            assert_eq!(s.parse::<GridStrategy>().unwrap(), GridStrategy::Grid(4), "{s}");
        }
        for s in ["2x4", "grid()", "x", "0", "-1"] {
            assert!(s.parse::<GridStrategy>().is_err(), "{s}");
        }
        assert_eq!(GridStrategy::Grid(16).to_string(), "16x16");
        assert_eq!(GridStrategy::Grid(16).workers(), 256);
        assert!(!GridStrategy::Grid(16).supports_dimension(8));
        assert!(GridStrategy::Grid(4).supports_dimension(8));
    }

    #[test]
    fn identity_times_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let b = ComplexMatrix::random(256, &mut rng);
        let c = cannon_multiply(&ComplexMatrix::identity(256), &b, GridStrategy::Grid(4)).unwrap();
        assert!(frobenius_distance(&c, &b).unwrap() <= 1e-12);
    }

    /// C_ij = Σ_k A_ik B_kj on explicit 2×2 block structure.
    #[test]
    fn matches_block_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = ComplexMatrix::random(8, &mut rng);
        let b = ComplexMatrix::random(8, &mut rng);
        let ga = partition(&a, 2).unwrap();
        let gb = partition(&b, 2).unwrap();
        let mut gc = BlockGrid::empty(2, 4);
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = ComplexMatrix::zeros(4);
                for k in 0..2 {
                    let prod = matmul_serial(ga.block(i, k).unwrap(), gb.block(k, j).unwrap()).unwrap();
                    acc = &acc + &prod;
                }
                gc.set_block(i, j, acc).unwrap();
            }
        }
        let oracle = gather(&gc).unwrap();
        let c = cannon_multiply(&a, &b, GridStrategy::Grid(2)).unwrap();
        assert!(relative_frobenius_distance(&c, &oracle).unwrap() <= 1e-14);
    }

    #[test]
    fn one_by_one_grid_matches_serial() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = ComplexMatrix::random(12, &mut rng);
        let b = ComplexMatrix::random(12, &mut rng);
        let c = cannon_multiply(&a, &b, GridStrategy::Grid(1)).unwrap();
        assert!(relative_frobenius_distance(&c, &matmul_serial(&a, &b).unwrap()).unwrap() <= 1e-14);
    }

    #[test]
    fn odd_grid_side() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = ComplexMatrix::random(9, &mut rng);
        let b = ComplexMatrix::random(9, &mut rng);
        let c = cannon_multiply(&a, &b, GridStrategy::Grid(3)).unwrap();
        assert!(relative_frobenius_distance(&c, &matmul_serial(&a, &b).unwrap()).unwrap() <= 1e-14);
    }

    #[test]
    fn divisibility_and_dimension_errors() {
        let m6 = ComplexMatrix::identity(6);
        assert!(matches!(
            cannon_multiply(&m6, &m6, GridStrategy::Grid(4)),
            Err(Error::Indivisible { q: 4, dim: 6 })
        ));
        let m4 = ComplexMatrix::identity(4);
        assert!(matches!(
            cannon_multiply(&m4, &m6, GridStrategy::Grid(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn worker_cap_enforced() {
        assert!(matches!(
            CannonEngine::with_worker_cap(GridStrategy::Grid(4), 15),
            Err(Error::WorkersUnavailable { requested: 16, cap: 15 })
        ));
        assert!(CannonEngine::with_worker_cap(GridStrategy::Grid(4), 16).is_ok());
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a = ComplexMatrix::random(64, &mut rng);
        let b = ComplexMatrix::random(64, &mut rng);
        let mut engine = CannonEngine::new(GridStrategy::Grid(4)).unwrap();
        let first = engine.multiply(&a, &b).unwrap();
        for _ in 0..5 {
            assert_eq!(engine.multiply(&a, &b).unwrap(), first);
        }
        // A fresh grid schedules its threads differently but must agree.
        assert_eq!(cannon_multiply(&a, &b, GridStrategy::Grid(4)).unwrap(), first);
    }

    #[test]
    fn tiles_return_to_aligned_positions() {
        for q in [1, 2, 3, 4] {
            let mut engine = CannonEngine::new(GridStrategy::Grid(q)).unwrap();
            let m = ComplexMatrix::identity(2 * q);
            let (_, outcomes) = engine.multiply_traced(&m, &m).unwrap();
            assert_eq!(outcomes.len(), q * q);
            for o in outcomes {
                let (i, j) = o.pos;
                assert_eq!(o.held_a, aligned_a_source(i, j, q));
                assert_eq!(o.held_b, aligned_b_source(i, j, q));
            }
        }
    }

    #[test]
    fn reversed_shift_breaks_the_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = ComplexMatrix::random(16, &mut rng);
        let b = ComplexMatrix::random(16, &mut rng);
        let mut engine = CannonEngine::with_fault(GridStrategy::Grid(4), Fault::ReversedShift).unwrap();
        let c = engine.multiply(&a, &b).unwrap();
        assert!(relative_frobenius_distance(&c, &matmul_serial(&a, &b).unwrap()).unwrap() > 1e-2);
    }

    #[test]
    fn worker_failure_fails_whole_operation() {
        let m = ComplexMatrix::identity(8);
        let fault = Fault::WorkerPanic { row: 1, col: 0, round: 1 };
        let mut engine = CannonEngine::with_fault(GridStrategy::Grid(4), fault).unwrap();
        assert!(matches!(engine.multiply(&m, &m), Err(Error::WorkerFailed(_))));
        // The grid stays unusable rather than returning partial results.
        assert!(matches!(engine.multiply(&m, &m), Err(Error::WorkerFailed(_))));
    }

    #[test]
    fn chain_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let m = ComplexMatrix::random(16, &mut rng);
        let strategy = GridStrategy::Grid(2);
        assert_eq!(
            cannon_chain(&[&m, &m], strategy).unwrap(),
            cannon_multiply(&m, &m, strategy).unwrap()
        );

        let a = ComplexMatrix::random(16, &mut rng);
        let b = ComplexMatrix::random(16, &mut rng);
        let c = ComplexMatrix::random(16, &mut rng);
        let serial = matmul_serial(&matmul_serial(&a, &b).unwrap(), &c).unwrap();
        let chained = cannon_chain(&[&a, &b, &c], strategy).unwrap();
        assert!(relative_frobenius_distance(&chained, &serial).unwrap() <= 1e-10);

        let id = ComplexMatrix::identity(16);
        assert_eq!(cannon_chain(&[&id, &id, &id, &id], strategy).unwrap(), id);

        assert!(cannon_chain(&[&id], strategy).is_err());
        assert!(cannon_chain(&[], strategy).is_err());
        let small = ComplexMatrix::identity(8);
        assert!(matches!(
            cannon_chain(&[&id, &small], strategy),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn chain_is_right_nested() {
        // With exact small-integer entries both nestings agree bit-for-bit,
        // so compare against an explicitly right-nested serial product.
        let a = ComplexMatrix::from_fn(4, |i, j| C64::new((i + 2 * j) as f64, 1.0));
        let b = ComplexMatrix::from_fn(4, |i, j| C64::new((i * j) as f64, -(j as f64)));
        let c = ComplexMatrix::from_fn(4, |i, j| C64::new(1.0 + i as f64, (i + j) as f64));
        let expected = matmul_serial(&a, &matmul_serial(&b, &c).unwrap()).unwrap();
        assert_eq!(CannonEngine::serial().chain(&[&a, &b, &c]).unwrap(), expected);
    }
}
