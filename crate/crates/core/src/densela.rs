//! Serial dense complex linear algebra.
//!
//! [`ComplexMatrix`] is the single carrier type for Hamiltonians, density
//! matrices and propagator factors. The serial product here is the oracle the
//! block-distributed engine is checked against, and [`matexp_exact`] is the
//! untruncated propagator the Taylor factors are checked against.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);

/// Dense square complex matrix stored row-major.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be positive");
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = ONE;
        }
        m
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting non-square or
    /// non-finite input.
    pub fn from_row_major(dim: usize, data: Vec<C64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be positive".into()));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                left: dim * dim,
                right: data.len(),
            });
        }
        let m = Self { dim, data };
        m.check_finite()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::from_row_major(dim, data)
    }

    /// Convenience for real-valued literals in tests and examples.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = f(i, j);
            }
        }
        m
    }

    /// Entries with real and imaginary parts uniform in [-1, 1).
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self::from_fn(dim, |_, _| {
            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
    }

    /// Exactly Hermitian random matrix: `(X + X†) / 2` for a random `X`,
    /// with the lower triangle written as the bitwise conjugate of the upper.
    pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let x = Self::random(dim, rng);
        let mut h = Self::zeros(dim);
        for i in 0..dim {
            h[(i, i)] = C64::new(x[(i, i)].re, 0.0);
            for j in i + 1..dim {
                let v = (x[(i, j)] + x[(j, i)].conj()) * 0.5;
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        h
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).collect()
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// `self += s * other`, elementwise.
    pub fn add_scaled(&mut self, other: &Self, s: f64) -> Result<()> {
        same_dim(self, other)?;
        for (x, &y) in self.data.iter_mut().zip(&other.data) {
            *x += y * s;
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ‖A − A†‖_F.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.data[i * n + j] - self.data[j * n + i].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// ‖A + A†‖_F.
    pub fn anti_hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += (self.data[i * n + j] + self.data[j * n + i].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    pub fn is_exactly_real_symmetric(&self) -> bool {
        let n = self.dim;
        (0..n).all(|i| {
            (0..n).all(|j| self.data[i * n + j].im == 0.0 && self.data[i * n + j] == self.data[j * n + i])
        })
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            Some(pos) => Err(Error::NonFinite {
                row: pos / self.dim,
                col: pos % self.dim,
            }),
            None => Ok(()),
        }
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub(crate) fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        let dim = m.nrows();
        Self::from_fn(dim, |i, j| m[(i, j)])
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.dim && j < self.dim, "index ({i}, {j}) out of bounds");
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        assert!(i < self.dim && j < self.dim, "index ({i}, {j}) out of bounds");
        &mut self.data[i * self.dim + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{})", self.dim, self.dim)?;
        if self.dim <= 8 {
            for i in 0..self.dim {
                let row: Vec<String> = self.row(i).iter().map(|z| format!("{z:.4}")).collect();
                writeln!(f, "  [{}]", row.join(", "))?;
            }
        }
        Ok(())
    }
}

fn same_dim(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch {
            left: a.dim,
            right: b.dim,
        });
    }
    Ok(())
}

/// `c += a · b` for row-major `dim × dim` slices.
///
/// Every output entry accumulates its terms in ascending inner index. Zero
/// entries of `a` are skipped, which only ever changes the sign of an exact
/// zero.
pub(crate) fn gemm_acc(dim: usize, a: &[C64], b: &[C64], c: &mut [C64]) {
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(b.len(), dim * dim);
    debug_assert_eq!(c.len(), dim * dim);
    for (a_row, c_row) in a.chunks_exact(dim).zip(c.chunks_exact_mut(dim)) {
        for (k, &aik) in a_row.iter().enumerate() {
            if aik == ZERO {
                continue;
            }
            let b_row = &b[k * dim..(k + 1) * dim];
            for (cij, &bkj) in c_row.iter_mut().zip(b_row) {
                *cij += aik * bkj;
            }
        }
    }
}

/// Serial product `A · B`, bit-deterministic across runs.
pub fn matmul_serial(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    same_dim(a, b)?;
    let mut c = ComplexMatrix::zeros(a.dim);
    gemm_acc(a.dim, &a.data, &b.data, &mut c.data);
    c.check_finite()?;
    Ok(c)
}

pub fn frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    same_dim(a, b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// `‖A − B‖_F / ‖B‖_F`, falling back to the absolute distance when `B = 0`.
pub fn relative_frobenius_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let d = frobenius_distance(a, b)?;
    let scale = b.frobenius_norm();
    Ok(if scale > 0.0 { d / scale } else { d })
}

const EIGEN_MAX_ITERATIONS: usize = 1_000_000;

/// Spectral decomposition `G = V diag(λ) V†` of a Hermitian matrix.
pub struct HermitianEigen {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

pub fn hermitian_eigen(g: &ComplexMatrix) -> Result<HermitianEigen> {
    let eig = g
        .to_nalgebra()
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITERATIONS)
        .ok_or(Error::EigenFailure)?;
    let mut v = ComplexMatrix::from_nalgebra(&eig.eigenvectors);
    // The QR iteration occasionally stops with residuals near 1e-9; finish
    // the job with Jacobi sweeps on the almost diagonal V† G V.
    let mut b = matmul_serial(&v.adjoint(), &matmul_serial(g, &v)?)?;
    jacobi_polish(&mut b, &mut v);
    let eigenvalues: Vec<f64> = (0..g.dim).map(|i| b[(i, i)].re).collect();
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    Ok(HermitianEigen {
        eigenvalues,
        eigenvectors: v,
    })
}

const JACOBI_MAX_SWEEPS: usize = 30;

/// Cyclic complex Jacobi on Hermitian `b`, accumulating rotations into `v`.
fn jacobi_polish(b: &mut ComplexMatrix, v: &mut ComplexMatrix) {
    let n = b.dim;
    let scale = b.frobenius_norm();
    if scale == 0.0 {
        return;
    }
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let bpq = b[(p, q)];
                let mag = bpq.norm();
                if mag <= f64::EPSILON * 1e-2 * scale {
                    continue;
                }
                rotated = true;
                let w = (bpq / mag).conj();
                let theta = (b[(q, q)].re - b[(p, p)].re) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                // U = [[c, s], [-s w, c w]] in the (p, q) plane.
                let (upq, uqp, uqq) = (C64::new(s, 0.0), -w * s, w * c);
                for k in 0..n {
                    let (x, y) = (b[(k, p)], b[(k, q)]);
                    b[(k, p)] = x * c + y * uqp;
                    b[(k, q)] = x * upq + y * uqq;
                    let (x, y) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = x * c + y * uqp;
                    v[(k, q)] = x * upq + y * uqq;
                }
                for k in 0..n {
                    let (x, y) = (b[(p, k)], b[(q, k)]);
                    b[(p, k)] = x * c + y * uqp.conj();
                    b[(q, k)] = x * upq + y * uqq.conj();
                }
                b[(p, q)] = ZERO;
                b[(q, p)] = ZERO;
                b[(p, p)].im = 0.0;
                b[(q, q)].im = 0.0;
            }
        }
        if !rotated {
            break;
        }
    }
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(g: &ComplexMatrix) -> Result<Vec<f64>> {
    let mut ev = hermitian_eigen(g)?.eigenvalues;
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_spectral_norm(g: &ComplexMatrix) -> Result<f64> {
    Ok(hermitian_eigenvalues(g)?
        .into_iter()
        .fold(0.0, |acc, x| acc.max(x.abs())))
}

/// Relative anti-Hermiticity tolerated by [`matexp_exact`].
const ANTI_HERMITIAN_TOL: f64 = 1e-12;

/// Untruncated `exp(A)` for anti-Hermitian `A`.
///
/// With `A = −iG`, `G` Hermitian, the exponential is assembled from the
/// eigendecomposition of `G` as `V diag(exp(−iλ)) V†`, so the result is
/// unitary up to the orthonormality of the computed eigenvectors.
pub fn matexp_exact(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    let defect = a.anti_hermiticity_defect();
    if defect > ANTI_HERMITIAN_TOL * a.frobenius_norm().max(1.0) {
        return Err(Error::NotAntiHermitian { defect });
    }
    // G = iA.
    let g = a.scale(C64::new(0.0, 1.0));
    let eig = hermitian_eigen(&g)?;
    let n = a.dim();
    let v = &eig.eigenvectors;
    let phases: Vec<C64> = eig
        .eigenvalues
        .iter()
        .map(|&lambda| C64::from_polar(1.0, -lambda))
        .collect();
    let mut out = ComplexMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = ZERO;
            for k in 0..n {
                acc += v[(i, k)] * phases[k] * v[(j, k)].conj();
            }
            out[(i, j)] = acc;
        }
    }
    out.check_finite()?;
    Ok(out)
}

/// `exp(∓(i/ħ) H dt)` through [`matexp_exact`]; `sign = -1` gives the left
/// propagator, `+1` the right.
pub fn exact_propagator(h: &ComplexMatrix, dt: f64, hbar: f64, sign: f64) -> Result<ComplexMatrix> {
    matexp_exact(&h.scale(C64::new(0.0, sign * dt / hbar)))
}
