//! Truncated-Taylor unitary evolution of the density matrix.
//!
//! The propagator `exp(∓(i/ħ)H dt)` is replaced by the order-K series
//! `L = Σ_k M^k/k!` with `M = −(i/ħ)H dt` (and `R` likewise with `+`), each
//! power produced by a right-nested chain of engine products. One step is
//! `ρ ← L·(ρ·R)`.

use serde::{Deserialize, Serialize};

use crate::cannon::{CannonEngine, GridStrategy};
use crate::densela::{ComplexMatrix, C64};
use crate::error::{Error, Result};
use crate::model::{build_hamiltonian, ModelParams};

pub const DEFAULT_TAYLOR_ORDER: usize = 10;

/// A trajectory aborts once `|tr ρ − 1|` exceeds this.
pub const TRACE_ABORT_TOLERANCE: f64 = 1e-4;

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const NEGATIVE_DIAGONAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and a non-negative diagonal.
    pub fn new(mat: ComplexMatrix) -> Result<Self> {
        mat.check_finite()?;
        let defect = mat.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidDensity(format!("hermiticity defect {defect:e}")));
        }
        let trace = mat.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidDensity(format!("trace {trace}")));
        }
        if let Some(d) = mat.diagonal().iter().find(|d| d.re < -NEGATIVE_DIAGONAL_TOL) {
            return Err(Error::InvalidDensity(format!("negative population {}", d.re)));
        }
        Ok(Self { mat })
    }

    /// Evolved states may drift from unit trace by the truncation error.
    fn evolved(mat: ComplexMatrix) -> Self {
        Self { mat }
    }

    /// `|index⟩⟨index|`.
    pub fn pure_basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidParameter(format!("basis index {index} outside dimension {dim}")));
        }
        let mut mat = ComplexMatrix::zeros(dim);
        mat[(index, index)] = C64::new(1.0, 0.0);
        Self::new(mat)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            mat: ComplexMatrix::identity(dim).scale_real(1.0 / dim as f64),
        }
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    pub fn dim(&self) -> usize {
        self.mat.dim()
    }

    /// Real part of the trace.
    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.mat.hermiticity_defect()
    }
}

/// Missing fields fall back to [`EvolutionConfig::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub steps: usize,
    /// Highest power K kept in the Taylor series.
    pub taylor_order: usize,
    pub strategy: GridStrategy,
    pub renormalize_trace: bool,
    /// Record every `stride`-th step (the first and last step always).
    pub stride: usize,
}

impl Default for EvolutionConfig {
    /// g·dt/ħ = 1e−3 at the default coupling 0.02, and 3200 steps reach
    /// t = 160, past the first full emission and reabsorption at n = 8.
    fn default() -> Self {
        Self {
            dt: 0.05,
            steps: 3200,
            taylor_order: DEFAULT_TAYLOR_ORDER,
            strategy: GridStrategy::Serial,
            renormalize_trace: false,
            stride: 1,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if self.taylor_order == 0 {
            return Err(Error::InvalidParameter("Taylor order must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::InvalidParameter("stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Observables recorded along a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub atoms: u32,
    pub times: Vec<f64>,
    /// `photon_probs[t][m]` is the population of the m-photon sector.
    pub photon_probs: Vec<Vec<f64>>,
    pub trace: Vec<f64>,
    /// ⟨N_exc⟩, identically `n · tr ρ` on this subspace.
    pub excitation: Vec<f64>,
    /// ‖ρ − ρ†‖_F.
    pub hermiticity: Vec<f64>,
}

impl TrajectoryRecord {
    fn new(atoms: u32) -> Self {
        Self {
            atoms,
            times: Vec::new(),
            photon_probs: Vec::new(),
            trace: Vec::new(),
            excitation: Vec::new(),
            hermiticity: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, rho: &DensityMatrix) -> Result<()> {
        let probs = photon_distribution(rho, self.atoms)?;
        let n = f64::from(self.atoms);
        let excitation = probs
            .iter()
            .enumerate()
            .map(|(m, p)| (n - m as f64) * p + m as f64 * p)
            .sum();
        self.times.push(t);
        self.photon_probs.push(probs);
        self.trace.push(rho.trace());
        self.excitation.push(excitation);
        self.hermiticity.push(rho.hermiticity_defect());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of photon sectors, `n + 1`.
    pub fn sectors(&self) -> usize {
        self.atoms as usize + 1
    }

    /// `P_m(t)` over all recorded times.
    pub fn sector_series(&self, m: usize) -> Vec<f64> {
        self.photon_probs.iter().map(|p| p[m]).collect()
    }

    pub fn max_trace_drift(&self) -> f64 {
        self.trace.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn max_hermiticity_defect(&self) -> f64 {
        self.hermiticity.iter().copied().fold(0.0, f64::max)
    }

    /// Time of the first local maximum of `P_m`, if any.
    pub fn first_peak_time(&self, m: usize) -> Option<f64> {
        local_maxima(&self.sector_series(m)).first().map(|&i| self.times[i])
    }

    /// `max_t P_m(t)`.
    pub fn max_probability(&self, m: usize) -> f64 {
        self.photon_probs.iter().map(|p| p[m]).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn summarize(&self) -> TrajectorySummary {
        let sectors = (0..self.sectors())
            .map(|m| {
                let series = self.sector_series(m);
                let first = local_maxima(&series).first().copied();
                let (imax, &pmax) = series
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("trajectory has at least one record");
                SectorSummary {
                    sector: m,
                    first_peak_time: first.map(|i| self.times[i]),
                    first_peak_height: first.map(|i| series[i]),
                    max_time: self.times[imax],
                    max_height: pmax,
                }
            })
            .collect();
        TrajectorySummary {
            atoms: self.atoms,
            records: self.len(),
            final_time: *self.times.last().unwrap_or(&0.0),
            max_trace_drift: self.max_trace_drift(),
            max_hermiticity_defect: self.max_hermiticity_defect(),
            sectors,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorSummary {
    pub sector: usize,
    pub first_peak_time: Option<f64>,
    pub first_peak_height: Option<f64>,
    pub max_time: f64,
    pub max_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub atoms: u32,
    pub records: usize,
    pub final_time: f64,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub sectors: Vec<SectorSummary>,
}

/// Indices of local maxima: a strict rise followed by no rise. The first
/// sample counts when it strictly exceeds the second.
pub fn local_maxima(series: &[f64]) -> Vec<usize> {
    let mut peaks = Vec::new();
    if series.len() >= 2 && series[0] > series[1] {
        peaks.push(0);
    }
    for i in 1..series.len().saturating_sub(1) {
        if series[i] > series[i - 1] && series[i] >= series[i + 1] {
            peaks.push(i);
        }
    }
    peaks
}

/// `x^{K+1} / (K+1)!`, the leading omitted term for `‖M‖ = x`.
pub fn truncation_bound(norm_times_dt: f64, order: usize) -> f64 {
    let mut term = 1.0;
    for k in 1..=order + 1 {
        term *= norm_times_dt / k as f64;
    }
    term
}

/// Which side the generator is multiplied onto when forming `M^k`.
#[derive(Clone, Copy)]
enum Nesting {
    /// `M · M^{k−1}`.
    Right,
    /// `M^{k−1} · M`.
    Left,
}

fn taylor_factor(
    h: &ComplexMatrix,
    dt: f64,
    hbar: f64,
    order: usize,
    sign: f64,
    nesting: Nesting,
    engine: &mut CannonEngine,
) -> Result<ComplexMatrix> {
    if order == 0 {
        return Err(Error::InvalidParameter("Taylor order must be at least 1".into()));
    }
    if !(hbar.is_finite() && hbar > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidParameter(format!("invalid dt {dt} or hbar {hbar}")));
    }
    let dim = h.dim();
    if !engine.strategy().supports_dimension(dim) {
        let q = engine.strategy().grid_side().unwrap_or(1);
        return Err(Error::Indivisible { q, dim });
    }
    // M = sign · (i/ħ) H dt
    let m = h.scale(C64::new(0.0, sign * dt / hbar));
    let mut factor = ComplexMatrix::identity(dim);
    factor.add_scaled(&m, 1.0)?;
    let mut power = m.clone();
    let mut factorial = 1.0;
    for k in 2..=order {
        power = match nesting {
            Nesting::Right => engine.multiply(&m, &power)?,
            Nesting::Left => engine.multiply(&power, &m)?,
        };
        factorial *= k as f64;
        factor.add_scaled(&power, 1.0 / factorial)?;
    }
    factor.check_finite()?;
    Ok(factor)
}

/// `L = I − (i/ħ)H dt + Σ_{k=2}^{K} (−(i/ħ)H dt)^k / k!`, each power the
/// right-nested chain `M·(M·(⋯·M))`.
pub fn build_left_factor(
    h: &ComplexMatrix,
    dt: f64,
    hbar: f64,
    order: usize,
    engine: &mut CannonEngine,
) -> Result<ComplexMatrix> {
    taylor_factor(h, dt, hbar, order, -1.0, Nesting::Right, engine)
}

/// `R = I + (i/ħ)H dt + Σ_{k=2}^{K} ((i/ħ)H dt)^k / k!`.
///
/// Powers are chained from the other side, `((M·M)·⋯)·M`. Every entry of
/// each term then sums the conjugates of exactly the products the matching
/// entry of the left factor sums, in the same order, so for exactly
/// Hermitian `H` the result is `L†` bit-for-bit.
pub fn build_right_factor(
    h: &ComplexMatrix,
    dt: f64,
    hbar: f64,
    order: usize,
    engine: &mut CannonEngine,
) -> Result<ComplexMatrix> {
    taylor_factor(h, dt, hbar, order, 1.0, Nesting::Left, engine)
}

/// `ρ′ = L·(ρ·R)`, optionally renormalized to unit trace.
pub fn evolve_step(
    left: &ComplexMatrix,
    rho: &DensityMatrix,
    right: &ComplexMatrix,
    engine: &mut CannonEngine,
    renormalize_trace: bool,
) -> Result<DensityMatrix> {
    let mut next = engine.chain(&[left, rho.matrix(), right])?;
    if renormalize_trace {
        let tr = next.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::InvalidDensity(format!("cannot renormalize trace {tr}")));
        }
        next = next.scale_real(1.0 / tr);
    }
    Ok(DensityMatrix::evolved(next))
}

/// Every atom excited, no free photons.
pub fn initial_state_all_excited(n: u32) -> Result<DensityMatrix> {
    if n == 0 || n > crate::model::HARD_MAX_ATOMS {
        return Err(Error::InvalidParameter(format!("unsupported atom count {n}")));
    }
    let dim = 1usize << n;
    DensityMatrix::pure_basis_state(dim, dim - 1)
}

/// Population of each photon-number sector `m = 0..=n`.
pub fn photon_distribution(rho: &DensityMatrix, n: u32) -> Result<Vec<f64>> {
    if n == 0 || n > crate::model::HARD_MAX_ATOMS || rho.dim() != 1usize << n {
        return Err(Error::DimensionMismatch {
            left: rho.dim(),
            right: 1usize.checked_shl(n).unwrap_or(0),
        });
    }
    let mut probs = vec![0.0; n as usize + 1];
    for (s, d) in rho.matrix().diagonal().iter().enumerate() {
        let photons = n - s.count_ones();
        probs[photons as usize] += d.re;
    }
    Ok(probs)
}

/// Builds `H`, `L` and `R` once, then steps `config.steps` times.
pub fn run_trajectory(params: &ModelParams, config: &EvolutionConfig, rho0: &DensityMatrix) -> Result<TrajectoryRecord> {
    config.validate()?;
    let h = build_hamiltonian(params)?;
    let mut engine = CannonEngine::new(config.strategy)?;
    evolve_hamiltonian(&h, params.n, params.hbar, config, rho0, &mut engine)
}

pub(crate) fn evolve_hamiltonian(
    h: &ComplexMatrix,
    n: u32,
    hbar: f64,
    config: &EvolutionConfig,
    rho0: &DensityMatrix,
    engine: &mut CannonEngine,
) -> Result<TrajectoryRecord> {
    config.validate()?;
    if rho0.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            left: h.dim(),
            right: rho0.dim(),
        });
    }
    let left = build_left_factor(h, config.dt, hbar, config.taylor_order, engine)?;
    let right = build_right_factor(h, config.dt, hbar, config.taylor_order, engine)?;
    evolve_with_factors(&left, &right, n, config, rho0, engine)
}

/// Steps with prebuilt factors, recording observables per `config.stride`.
pub(crate) fn evolve_with_factors(
    left: &ComplexMatrix,
    right: &ComplexMatrix,
    n: u32,
    config: &EvolutionConfig,
    rho0: &DensityMatrix,
    engine: &mut CannonEngine,
) -> Result<TrajectoryRecord> {
    let mut record = TrajectoryRecord::new(n);
    record.push(0.0, rho0)?;
    let mut rho = rho0.clone();
    for step in 1..=config.steps {
        rho = evolve_step(left, &rho, right, engine, config.renormalize_trace)?;
        let t = step as f64 * config.dt;
        let trace = rho.trace();
        if !trace.is_finite() || (trace - 1.0).abs() > TRACE_ABORT_TOLERANCE {
            return Err(Error::TraceDrift { trace, time: t });
        }
        if step % config.stride == 0 || step == config.steps {
            record.push(t, &rho)?;
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densela::{exact_propagator, frobenius_distance, hermitian_spectral_norm};
    use crate::model::ModelParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn serial() -> CannonEngine {
        CannonEngine::serial()
    }

    fn single_atom_h() -> ComplexMatrix {
        build_hamiltonian(&ModelParams::uniform(1, 1.0)).unwrap()
    }

    #[test]
    fn zero_step_factors_are_identity() {
        let h = single_atom_h();
        assert_eq!(build_left_factor(&h, 0.0, 1.0, 10, &mut serial()).unwrap(), ComplexMatrix::identity(2));
        assert_eq!(build_right_factor(&h, 0.0, 1.0, 10, &mut serial()).unwrap(), ComplexMatrix::identity(2));
    }

    #[test]
    fn first_order_factor_is_euler() {
        let h = single_atom_h();
        let dt = 0.01;
        let l = build_left_factor(&h, dt, 1.0, 1, &mut serial()).unwrap();
        let expected = &ComplexMatrix::identity(2) + &h.scale(C64::new(0.0, -dt));
        assert!(frobenius_distance(&l, &expected).unwrap() < 1e-16);
    }

    #[test]
    fn single_atom_factors_match_exact_propagator() {
        let h = single_atom_h();
        let dt = 0.01;
        let l = build_left_factor(&h, dt, 1.0, 10, &mut serial()).unwrap();
        let r = build_right_factor(&h, dt, 1.0, 10, &mut serial()).unwrap();
        assert!(frobenius_distance(&l, &exact_propagator(&h, dt, 1.0, -1.0).unwrap()).unwrap() <= 1e-14);
        assert!(frobenius_distance(&r, &exact_propagator(&h, dt, 1.0, 1.0).unwrap()).unwrap() <= 1e-14);
    }

    #[test]
    fn right_factor_is_exact_adjoint_of_left() {
        let mut params = ModelParams::uniform(4, 0.1);
        params.couplings = vec![0.1, 0.05, 0.2, 0.15];
        let h = build_hamiltonian(&params).unwrap();
        for strategy in [GridStrategy::Serial, GridStrategy::Grid(2), GridStrategy::Grid(4)] {
            let mut engine = CannonEngine::new(strategy).unwrap();
            let l = build_left_factor(&h, 0.02, 1.0, 10, &mut engine).unwrap();
            let r = build_right_factor(&h, 0.02, 1.0, 10, &mut engine).unwrap();
            assert_eq!(r, l.adjoint(), "{strategy}");
        }
    }

    #[test]
    fn right_factor_is_exact_adjoint_for_complex_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = ComplexMatrix::random_hermitian(16, &mut rng);
        for strategy in [GridStrategy::Serial, GridStrategy::Grid(4)] {
            let mut engine = CannonEngine::new(strategy).unwrap();
            for order in [1, 2, 5, 10] {
                let l = build_left_factor(&h, 0.05, 1.0, order, &mut engine).unwrap();
                let r = build_right_factor(&h, 0.05, 1.0, order, &mut engine).unwrap();
                assert_eq!(r, l.adjoint(), "{strategy} K={order}");
            }
        }
    }

    #[test]
    fn factors_reject_bad_input() {
        let h = single_atom_h();
        assert!(build_left_factor(&h, 0.1, 1.0, 0, &mut serial()).is_err());
        assert!(build_left_factor(&h, 0.1, 0.0, 5, &mut serial()).is_err());
        let mut engine = CannonEngine::new(GridStrategy::Grid(4)).unwrap();
        assert!(matches!(
            build_left_factor(&h, 0.1, 1.0, 5, &mut engine),
            Err(Error::Indivisible { q: 4, dim: 2 })
        ));
    }

    #[test]
    fn identity_propagator_leaves_state() {
        let rho = DensityMatrix::maximally_mixed(4);
        let id = ComplexMatrix::identity(4);
        let next = evolve_step(&id, &rho, &id, &mut serial(), false).unwrap();
        assert_eq!(next, rho);
    }

    #[test]
    fn step_trace_drift_within_truncation_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let h = ComplexMatrix::random_hermitian(16, &mut rng);
        let norm = hermitian_spectral_norm(&h).unwrap();
        let dt = 0.5 / norm;
        let l = build_left_factor(&h, dt, 1.0, 10, &mut serial()).unwrap();
        let r = build_right_factor(&h, dt, 1.0, 10, &mut serial()).unwrap();
        let rho = DensityMatrix::pure_basis_state(16, 3).unwrap();
        let next = evolve_step(&l, &rho, &r, &mut serial(), false).unwrap();
        assert!((next.trace() - rho.trace()).abs() <= 1e-10);
        assert!(next.hermiticity_defect() <= 1e-10);
    }

    #[test]
    fn renormalization_restores_unit_trace() {
        let h = single_atom_h();
        // Coarse first-order factors drift visibly.
        let l = build_left_factor(&h, 0.1, 1.0, 1, &mut serial()).unwrap();
        let r = build_right_factor(&h, 0.1, 1.0, 1, &mut serial()).unwrap();
        let rho = initial_state_all_excited(1).unwrap();
        let drifted = evolve_step(&l, &rho, &r, &mut serial(), false).unwrap();
        assert!((drifted.trace() - 1.0).abs() > 1e-3);
        let fixed = evolve_step(&l, &rho, &r, &mut serial(), true).unwrap();
        assert!((fixed.trace() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn full_rabi_transfer() {
        let params = ModelParams::uniform(1, 1.0);
        let config = EvolutionConfig {
            dt: 0.001,
            steps: 1571,
            ..EvolutionConfig::default()
        };
        let rec = run_trajectory(&params, &config, &initial_state_all_excited(1).unwrap()).unwrap();
        // P_0: the atom is still excited.
        let last = rec.photon_probs.last().unwrap();
        assert!(last[0] <= 1e-4, "{last:?}");
    }

    #[test]
    fn rabi_oscillation_and_period() {
        let g = 1.0;
        let params = ModelParams::uniform(1, g);
        // π/dt is an integer so that t + π lands on a recorded sample.
        let per_period = 1000;
        let dt = PI / per_period as f64;
        let config = EvolutionConfig {
            dt,
            steps: 2 * per_period,
            ..EvolutionConfig::default()
        };
        let rec = run_trajectory(&params, &config, &initial_state_all_excited(1).unwrap()).unwrap();
        for (t, p) in rec.times.iter().zip(&rec.photon_probs) {
            assert!((p[1] - (g * t).sin().powi(2)).abs() <= 1e-4, "t={t}");
        }
        let p1 = rec.sector_series(1);
        for i in 0..p1.len() - per_period {
            assert!((p1[i + per_period] - p1[i]).abs() <= 1e-3, "i={i}");
        }
    }

    #[test]
    fn initial_state_examples() {
        let rho = initial_state_all_excited(1).unwrap();
        assert_eq!(rho.matrix().diagonal(), vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let rho = initial_state_all_excited(8).unwrap();
        assert_eq!(rho.dim(), 256);
        assert_eq!(rho.matrix()[(255, 255)], C64::new(1.0, 0.0));
        assert_eq!(rho.trace(), 1.0);
        let p = photon_distribution(&rho, 8).unwrap();
        assert_eq!(p[0], 1.0);
        assert!(p[1..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn photon_distribution_examples() {
        let p = photon_distribution(&DensityMatrix::maximally_mixed(4), 2).unwrap();
        assert_eq!(p, vec![0.25, 0.5, 0.25]);
        let ground = DensityMatrix::pure_basis_state(8, 0).unwrap();
        assert_eq!(photon_distribution(&ground, 3).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert!(photon_distribution(&ground, 2).is_err());
    }

    #[test]
    fn density_validation() {
        assert!(DensityMatrix::new(ComplexMatrix::identity(2)).is_err());
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(0, 1)] = C64::new(0.0, 0.1);
        assert!(DensityMatrix::new(m.clone()).is_err());
        m[(1, 0)] = C64::new(0.0, -0.1);
        assert!(DensityMatrix::new(m).is_ok());
        let mut neg = ComplexMatrix::zeros(2);
        neg[(0, 0)] = C64::new(1.5, 0.0);
        neg[(1, 1)] = C64::new(-0.5, 0.0);
        assert!(DensityMatrix::new(neg).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = EvolutionConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            EvolutionConfig { steps: 0, ..ok.clone() },
            EvolutionConfig { dt: 0.0, ..ok.clone() },
            EvolutionConfig { dt: f64::NAN, ..ok.clone() },
            EvolutionConfig { taylor_order: 0, ..ok.clone() },
            EvolutionConfig { stride: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn oversized_step_aborts() {
        let params = ModelParams::uniform(2, 1.0);
        let config = EvolutionConfig {
            dt: 1.5,
            steps: 50,
            taylor_order: 2,
            ..EvolutionConfig::default()
        };
        let err = run_trajectory(&params, &config, &initial_state_all_excited(2).unwrap()).unwrap_err();
        assert!(matches!(err, Error::TraceDrift { .. }), "{err}");
    }

    #[test]
    fn global_phase_does_not_change_populations() {
        let params = ModelParams::uniform(3, 0.3);
        let h = build_hamiltonian(&params).unwrap();
        let shifted = &h + &ComplexMatrix::identity(8).scale_real(2.5);
        let config = EvolutionConfig {
            dt: 0.02,
            steps: 300,
            ..EvolutionConfig::default()
        };
        let rho0 = initial_state_all_excited(3).unwrap();
        let a = evolve_hamiltonian(&h, 3, 1.0, &config, &rho0, &mut serial()).unwrap();
        let b = evolve_hamiltonian(&shifted, 3, 1.0, &config, &rho0, &mut serial()).unwrap();
        for (pa, pb) in a.photon_probs.iter().zip(&b.photon_probs) {
            for (x, y) in pa.iter().zip(pb) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn stride_records_first_and_last() {
        let params = ModelParams::uniform(2, 0.1);
        let config = EvolutionConfig {
            dt: 0.05,
            steps: 10,
            stride: 4,
            ..EvolutionConfig::default()
        };
        let rec = run_trajectory(&params, &config, &initial_state_all_excited(2).unwrap()).unwrap();
        let steps: Vec<usize> = rec.times.iter().map(|t| (t / 0.05).round() as usize).collect();
        assert_eq!(steps, vec![0, 4, 8, 10]);
    }

    #[test]
    fn record_bookkeeping() {
        let params = ModelParams::uniform(4, 0.05);
        let config = EvolutionConfig {
            dt: 0.05,
            steps: 200,
            strategy: GridStrategy::Grid(2),
            ..EvolutionConfig::default()
        };
        let rec = run_trajectory(&params, &config, &initial_state_all_excited(4).unwrap()).unwrap();
        assert_eq!(rec.sectors(), 5);
        for i in 0..rec.len() {
            let sum: f64 = rec.photon_probs[i].iter().sum();
            assert!((sum - rec.trace[i]).abs() <= 1e-12);
            assert!((rec.excitation[i] - 4.0 * rec.trace[i]).abs() <= 1e-12);
            assert!(rec.hermiticity[i] <= 1e-12);
        }
        let summary = rec.summarize();
        assert_eq!(summary.sectors.len(), 5);
        assert_eq!(summary.sectors[0].max_height, 1.0);
    }

    #[test]
    fn local_maxima_rules() {
        assert!(local_maxima(&[0.0; 5]).is_empty());
        assert_eq!(local_maxima(&[1.0, 0.5, 0.7, 0.7, 0.2]), vec![0, 2]);
        assert_eq!(local_maxima(&[0.0, 1.0]), Vec::<usize>::new());
    }

    #[test]
    fn truncation_bound_values() {
        assert_eq!(truncation_bound(1.0, 0), 1.0);
        assert!((truncation_bound(0.5, 2) - 0.125 / 6.0).abs() < 1e-18);
    }
}
