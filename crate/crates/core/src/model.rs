//! Tavis–Cummings model on the excitation-conserving subspace.
//!
//! With every excitation either stored in an atom or released into the cavity,
//! the photon count is implied by the atomic occupations: `p = n − Σ l_i`.
//! Basis states are therefore indexed by the n-bit occupation word alone,
//! atom `i` (1-based) sitting at bit `i − 1`.

use serde::{Deserialize, Serialize};

use crate::densela::{ComplexMatrix, C64};
use crate::error::{Error, Result};

/// Default refusal threshold: 15 atoms, N = 32768.
pub const DEFAULT_MAX_ATOMS: u32 = 15;

/// Absolute ceiling regardless of configuration; keeps `2^n` addressable.
pub const HARD_MAX_ATOMS: u32 = 30;

/// Coupling ratio above which the rotating-wave approximation is flagged.
pub const RWA_THRESHOLD: f64 = 0.1;

/// How the photon ladder enters the atom–field matrix elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhotonFactors {
    /// `⟨p+1| a† |p⟩ = √(p+1)`, the bosonic field operators.
    #[default]
    Bosonic,
    /// Every transition carries the bare coupling `g_i`. Diagnostic variant;
    /// for equal couplings it reduces the dynamics to a collective spin
    /// rotation.
    Unit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of two-level atoms.
    pub n: u32,
    pub hbar: f64,
    /// Shared atomic transition and cavity angular frequency.
    pub omega: f64,
    /// Per-atom couplings `g_1..g_n`.
    pub couplings: Vec<f64>,
    #[serde(default)]
    pub photon_factors: PhotonFactors,
    #[serde(default = "default_max_atoms")]
    pub max_atoms: u32,
}

fn default_max_atoms() -> u32 {
    DEFAULT_MAX_ATOMS
}

impl ModelParams {
    /// `n` atoms with the same coupling `g`, `ħ = ω = 1`.
    pub fn uniform(n: u32, g: f64) -> Self {
        Self {
            n,
            hbar: 1.0,
            omega: 1.0,
            couplings: vec![g; n as usize],
            photon_factors: PhotonFactors::Bosonic,
            max_atoms: DEFAULT_MAX_ATOMS,
        }
    }

    pub fn with_photon_factors(mut self, factors: PhotonFactors) -> Self {
        self.photon_factors = factors;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_atom_count(self.n, self.max_atoms)?;
        if self.couplings.len() != self.n as usize {
            return Err(Error::InvalidParameter(format!(
                "expected {} couplings, got {}",
                self.n,
                self.couplings.len()
            )));
        }
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::InvalidParameter(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.hbar.is_finite() && self.hbar > 0.0) {
            return Err(Error::InvalidParameter(format!("hbar must be positive, got {}", self.hbar)));
        }
        if let Some(g) = self.couplings.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "couplings must be finite and non-negative, got {g}"
            )));
        }
        Ok(())
    }

    /// Hilbert-space dimension `2^n`.
    pub fn dimension(&self) -> usize {
        1usize << self.n
    }
}

fn check_atom_count(n: u32, cap: u32) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidParameter("atom count must be at least 1".into()));
    }
    let cap = cap.min(HARD_MAX_ATOMS);
    if n > cap {
        return Err(Error::DimensionOverflow { atoms: n, cap });
    }
    Ok(())
}

/// One occupation pattern of the n atoms.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BasisState {
    index: usize,
    occupations: Vec<bool>,
}

impl BasisState {
    pub fn from_index(n: u32, index: usize) -> Self {
        assert!(index < (1usize << n), "index {index} out of range for {n} atoms");
        let occupations = (0..n).map(|bit| (index >> bit) & 1 == 1).collect();
        Self { index, occupations }
    }

    pub fn from_occupations(occupations: &[bool]) -> Self {
        let index = occupations
            .iter()
            .enumerate()
            .fold(0usize, |acc, (bit, &l)| acc | (usize::from(l) << bit));
        Self {
            index,
            occupations: occupations.to_vec(),
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// `l_1..l_n`.
    pub fn occupations(&self) -> &[bool] {
        &self.occupations
    }

    pub fn atoms(&self) -> u32 {
        self.occupations.len() as u32
    }

    pub fn excited(&self) -> u32 {
        self.occupations.iter().filter(|&&l| l).count() as u32
    }

    /// Free photons `p = n − Σ l_i`.
    pub fn photons(&self) -> u32 {
        self.atoms() - self.excited()
    }
}

pub fn enumerate_basis(n: u32) -> Result<Vec<BasisState>> {
    enumerate_basis_with_cap(n, DEFAULT_MAX_ATOMS)
}

pub fn enumerate_basis_with_cap(n: u32, max_atoms: u32) -> Result<Vec<BasisState>> {
    check_atom_count(n, max_atoms)?;
    Ok((0..1usize << n).map(|j| BasisState::from_index(n, j)).collect())
}

/// Photon count of basis index `index` for `n` atoms.
#[inline]
pub fn photons_of(n: u32, index: usize) -> u32 {
    n - index.count_ones()
}

/// The RWA Hamiltonian on the `2^n`-dimensional subspace.
///
/// The diagonal is the constant `ħωn`. Lowering atom `i` in state `s` (one
/// more free photon) couples `s` to `s'` with amplitude `g_i √(p_s + 1)`.
/// The result is exactly real symmetric.
pub fn build_hamiltonian(params: &ModelParams) -> Result<ComplexMatrix> {
    params.validate()?;
    let n = params.n;
    let dim = params.dimension();
    let diagonal = params.hbar * params.omega * f64::from(n);
    let mut h = ComplexMatrix::zeros(dim);
    for s in 0..dim {
        h[(s, s)] = C64::new(diagonal, 0.0);
        let p = photons_of(n, s);
        let ladder = match params.photon_factors {
            PhotonFactors::Bosonic => f64::from(p + 1).sqrt(),
            PhotonFactors::Unit => 1.0,
        };
        for (i, &g) in params.couplings.iter().enumerate() {
            if (s >> i) & 1 == 0 {
                continue;
            }
            let lowered = s & !(1usize << i);
            let element = C64::new(g * ladder, 0.0);
            h[(lowered, s)] = element;
            h[(s, lowered)] = element;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwaReport {
    /// `max_i g_i / (ħω)`.
    pub ratio: f64,
    pub valid: bool,
}

pub fn check_rwa(params: &ModelParams) -> Result<RwaReport> {
    params.validate()?;
    let g_max = params.couplings.iter().copied().fold(0.0, f64::max);
    let ratio = g_max / (params.hbar * params.omega);
    Ok(RwaReport {
        ratio,
        valid: ratio < RWA_THRESHOLD,
    })
}
