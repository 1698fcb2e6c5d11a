//! C ABI over `tcm-cannon`.
//!
//! Objects are opaque heap handles created by `*_new`-style calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`TcmStatus`]; on failure [`tcm_last_error`] describes what went wrong on
//! the calling thread. Panics never cross the boundary.
//!
//! Matrices are exchanged as two row-major `double` arrays holding the real
//! and imaginary parts.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tcm_cannon::evolution::DEFAULT_TAYLOR_ORDER;
use tcm_cannon::model::DEFAULT_MAX_ATOMS;
use tcm_cannon::{
    build_hamiltonian, cannon_multiply, initial_state_all_excited, run_trajectory, ComplexMatrix, Error,
    EvolutionConfig, GridStrategy, ModelParams, PhotonFactors, TrajectoryRecord, C64,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    OutOfRange = 4,
    WorkersUnavailable = 5,
    WorkerFailure = 6,
    TraceDrift = 7,
    Numerical = 8,
    Panic = 9,
}

/// Photon-ladder convention for the coupling matrix elements.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TcmPhotonFactors {
    /// `g_i · sqrt(p + 1)`.
    Bosonic = 0,
    /// Bare `g_i`.
    Unit = 1,
}

/// Evolution settings; obtain defaults from [`tcm_evolution_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcmEvolutionConfig {
    pub dt: f64,
    pub steps: usize,
    pub taylor_order: usize,
    /// Cannon grid side `q` (q×q workers); 0 runs serially.
    pub grid_side: usize,
    pub renormalize_trace: bool,
    pub stride: usize,
}

/// Model parameters.
pub struct TcmModel {
    params: ModelParams,
}

/// Square complex matrix.
pub struct TcmMatrix {
    inner: ComplexMatrix,
}

/// Recorded observables of one trajectory.
pub struct TcmTrajectory {
    record: TrajectoryRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(TcmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidParameter(_)
            | Error::DimensionOverflow { .. }
            | Error::InvalidDensity(_)
            | Error::Config(_) => TcmStatus::InvalidArgument,
            Error::DimensionMismatch { .. } | Error::Indivisible { .. } | Error::GridMismatch(_) => {
                TcmStatus::DimensionMismatch
            }
            Error::WorkersUnavailable { .. } => TcmStatus::WorkersUnavailable,
            Error::WorkerFailed(_) | Error::MissingBlock { .. } => TcmStatus::WorkerFailure,
            Error::TraceDrift { .. } => TcmStatus::TraceDrift,
            _ => TcmStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TcmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TcmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            clear_last_error();
            TcmStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            TcmStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

fn strategy_for(grid_side: usize) -> GridStrategy {
    if grid_side == 0 {
        GridStrategy::Serial
    } else {
        GridStrategy::Grid(grid_side)
    }
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn tcm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tcm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a model of `n` atoms. `couplings` holds `couplings_len == n`
/// values.
///
/// # Safety
/// `couplings` must point to `couplings_len` readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_model_new(
    n: u32,
    hbar: f64,
    omega: f64,
    couplings: *const f64,
    couplings_len: usize,
    photon_factors: TcmPhotonFactors,
    out: *mut *mut TcmModel,
) -> TcmStatus {
    guard(|| {
        if couplings.is_null() && couplings_len > 0 {
            return Err(null("couplings"));
        }
        let g = if couplings_len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(couplings, couplings_len).to_vec()
        };
        let params = ModelParams {
            n,
            hbar,
            omega,
            couplings: g,
            photon_factors: match photon_factors {
                TcmPhotonFactors::Bosonic => PhotonFactors::Bosonic,
                TcmPhotonFactors::Unit => PhotonFactors::Unit,
            },
            max_atoms: DEFAULT_MAX_ATOMS,
        };
        params.validate()?;
        write_out(out, Box::into_raw(Box::new(TcmModel { params })))
    })
}

/// Hilbert-space dimension `2^n`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tcm_model_dimension(model: *const TcmModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.dimension())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tcm_model_free(model: *mut TcmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds the model Hamiltonian.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_hamiltonian(model: *const TcmModel, out: *mut *mut TcmMatrix) -> TcmStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let inner = build_hamiltonian(&model.params)?;
        write_out(out, Box::into_raw(Box::new(TcmMatrix { inner })))
    })
}

/// Copies a `dim`×`dim` matrix from row-major real and imaginary parts.
/// `imag` may be null for a real matrix.
///
/// # Safety
/// `real` (and `imag` if non-null) must point to `dim * dim` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn tcm_matrix_from_parts(
    dim: usize,
    real: *const f64,
    imag: *const f64,
    out: *mut *mut TcmMatrix,
) -> TcmStatus {
    guard(|| {
        if real.is_null() {
            return Err(null("real"));
        }
        let len = dim
            .checked_mul(dim)
            .ok_or_else(|| Failure(TcmStatus::InvalidArgument, format!("dimension {dim} overflows")))?;
        let re = std::slice::from_raw_parts(real, len);
        let data: Vec<C64> = if imag.is_null() {
            re.iter().map(|&r| C64::new(r, 0.0)).collect()
        } else {
            let im = std::slice::from_raw_parts(imag, len);
            re.iter().zip(im).map(|(&r, &i)| C64::new(r, i)).collect()
        };
        let inner = ComplexMatrix::from_row_major(dim, data)?;
        write_out(out, Box::into_raw(Box::new(TcmMatrix { inner })))
    })
}

/// Matrix dimension, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tcm_matrix_dim(m: *const TcmMatrix) -> usize {
    m.as_ref().map_or(0, |m| m.inner.dim())
}

/// Reads entry `(row, col)`.
///
/// # Safety
/// `m` must be a live handle; `real` and `imag` writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_matrix_get(
    m: *const TcmMatrix,
    row: usize,
    col: usize,
    real: *mut f64,
    imag: *mut f64,
) -> TcmStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.inner;
        if row >= m.dim() || col >= m.dim() {
            return Err(Failure(
                TcmStatus::OutOfRange,
                format!("({row}, {col}) outside a {0}x{0} matrix", m.dim()),
            ));
        }
        let z = m[(row, col)];
        write_out(real, z.re)?;
        write_out(imag, z.im)
    })
}

/// Copies all entries out in row-major order; `len` must be `dim * dim`.
///
/// # Safety
/// `real` and `imag` must each point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tcm_matrix_copy_parts(
    m: *const TcmMatrix,
    real: *mut f64,
    imag: *mut f64,
    len: usize,
) -> TcmStatus {
    guard(|| {
        let m = &deref(m, "matrix")?.inner;
        if real.is_null() || imag.is_null() {
            return Err(null("output buffer"));
        }
        let src = m.as_slice();
        if len != src.len() {
            return Err(Failure(
                TcmStatus::DimensionMismatch,
                format!("buffer holds {len} entries, matrix has {}", src.len()),
            ));
        }
        let re = std::slice::from_raw_parts_mut(real, len);
        let im = std::slice::from_raw_parts_mut(imag, len);
        for (k, z) in src.iter().enumerate() {
            re[k] = z.re;
            im[k] = z.im;
        }
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tcm_matrix_free(m: *mut TcmMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// `a · b` on a `grid_side`×`grid_side` worker grid (0 for serial).
///
/// # Safety
/// `a`, `b` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_cannon_multiply(
    a: *const TcmMatrix,
    b: *const TcmMatrix,
    grid_side: usize,
    out: *mut *mut TcmMatrix,
) -> TcmStatus {
    guard(|| {
        let a = &deref(a, "a")?.inner;
        let b = &deref(b, "b")?.inner;
        let inner = cannon_multiply(a, b, strategy_for(grid_side))?;
        write_out(out, Box::into_raw(Box::new(TcmMatrix { inner })))
    })
}

/// Default evolution settings.
#[no_mangle]
pub extern "C" fn tcm_evolution_config_default() -> TcmEvolutionConfig {
    let d = EvolutionConfig::default();
    TcmEvolutionConfig {
        dt: d.dt,
        steps: d.steps,
        taylor_order: DEFAULT_TAYLOR_ORDER,
        grid_side: 0,
        renormalize_trace: d.renormalize_trace,
        stride: d.stride,
    }
}

/// Evolves the all-excited state of `model` under `config`.
///
/// # Safety
/// `model` and `config` must be valid pointers; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_simulate(
    model: *const TcmModel,
    config: *const TcmEvolutionConfig,
    out: *mut *mut TcmTrajectory,
) -> TcmStatus {
    guard(|| {
        let model = deref(model, "model")?;
        let c = deref(config, "config")?;
        let config = EvolutionConfig {
            dt: c.dt,
            steps: c.steps,
            taylor_order: c.taylor_order,
            strategy: strategy_for(c.grid_side),
            renormalize_trace: c.renormalize_trace,
            stride: c.stride,
        };
        let rho0 = initial_state_all_excited(model.params.n)?;
        let record = run_trajectory(&model.params, &config, &rho0)?;
        write_out(out, Box::into_raw(Box::new(TcmTrajectory { record })))
    })
}

/// Number of recorded time points, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tcm_trajectory_len(t: *const TcmTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.record.len())
}

/// Number of photon sectors `n + 1`, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tcm_trajectory_sectors(t: *const TcmTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.record.sectors())
}

unsafe fn sample(
    t: *const TcmTrajectory,
    index: usize,
    out: *mut f64,
    pick: impl FnOnce(&TrajectoryRecord) -> Option<f64>,
) -> TcmStatus {
    guard(|| {
        let rec = &deref(t, "trajectory")?.record;
        if index >= rec.len() {
            return Err(Failure(
                TcmStatus::OutOfRange,
                format!("record {index} of {}", rec.len()),
            ));
        }
        let v = pick(rec).ok_or_else(|| Failure(TcmStatus::OutOfRange, "sector out of range".into()))?;
        write_out(out, v)
    })
}

/// Time of record `index`.
///
/// # Safety
/// `t` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_trajectory_time(t: *const TcmTrajectory, index: usize, out: *mut f64) -> TcmStatus {
    sample(t, index, out, |r| Some(r.times[index]))
}

/// Population of the `sector`-photon sector at record `index`.
///
/// # Safety
/// `t` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_trajectory_probability(
    t: *const TcmTrajectory,
    index: usize,
    sector: usize,
    out: *mut f64,
) -> TcmStatus {
    sample(t, index, out, |r| r.photon_probs[index].get(sector).copied())
}

/// Trace of the density matrix at record `index`.
///
/// # Safety
/// `t` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn tcm_trajectory_trace(t: *const TcmTrajectory, index: usize, out: *mut f64) -> TcmStatus {
    sample(t, index, out, |r| Some(r.trace[index]))
}

/// # Safety
/// `t` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tcm_trajectory_free(t: *mut TcmTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
