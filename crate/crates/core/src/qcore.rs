//! Dense complex matrices and the handful of state-level quantities the rest
//! of the crate is built on.
//!
//! The atom basis is fixed as index 0 = ground `|g>`, index 1 = excited `|e>`.
//! Field operators use the Fock basis `|0>, |1>, ..., |N_max>`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Floor used when deciding whether a state is positive semidefinite.
pub const POSITIVITY_FLOOR: f64 = -1e-9;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { left: a, right: b });
    }
    Ok(())
}

/// Hermitian part `(A + A†)/2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// A Hilbert-space operator stored as a square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    pub fn new(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        Ok(Self(m))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        frobenius_norm(&(&self.0 - self.0.adjoint())) < tol
    }

    /// Bosonic annihilation operator truncated to `dim` Fock levels.
    pub fn annihilation(dim: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        for n in 1..dim {
            m[(n - 1, n)] = c((n as f64).sqrt(), 0.0);
        }
        Self(m)
    }

    pub fn number(dim: usize) -> Self {
        Self(CMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                c(i as f64, 0.0)
            } else {
                c(0.0, 0.0)
            }
        }))
    }
}

impl std::ops::Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

/// Atomic lowering operator `σ₋ = |g><e|`.
pub fn pauli_lowering() -> Operator {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 1)] = c(1.0, 0.0);
    Operator(m)
}

pub fn pauli_raising() -> Operator {
    pauli_lowering().adjoint()
}

/// `σ_z = |e><e| - |g><g|`.
pub fn pauli_z() -> Operator {
    let mut m = CMatrix::zeros(2, 2);
    m[(0, 0)] = c(-1.0, 0.0);
    m[(1, 1)] = c(1.0, 0.0);
    Operator(m)
}

/// A density matrix. Constructors normalize and symmetrize; [`DensityMatrix::validate`]
/// checks trace, Hermiticity and positivity against the crate tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(CMatrix);

impl DensityMatrix {
    /// Wraps a matrix after checking it is a valid state to within 1e-9.
    pub fn new(m: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(m)?;
        rho.validate(1e-9)?;
        Ok(rho)
    }

    /// Wraps a square matrix without any physical checks.
    pub fn from_matrix_unchecked(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        Ok(Self(m))
    }

    /// Hermitian part of `m`, scaled to unit trace.
    pub fn normalized(m: CMatrix) -> Result<Self> {
        check_square(&m)?;
        let h = hermitian_part(&m);
        let tr = h.trace().re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(Error::Undefined("state with non-positive trace"));
        }
        Ok(Self(h.unscale(tr)))
    }

    pub fn pure(ket: &[Complex64]) -> Result<Self> {
        if ket.is_empty() {
            return Err(Error::Empty("state vector"));
        }
        let v = DVector::from_column_slice(ket);
        Self::normalized(&v * v.adjoint())
    }

    pub fn fock(n: usize, dim: usize) -> Self {
        let mut m = CMatrix::zeros(dim, dim);
        m[(n, n)] = c(1.0, 0.0);
        Self(m)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(CMatrix::identity(dim, dim).unscale(dim as f64))
    }

    pub fn diagonal(populations: &[f64]) -> Result<Self> {
        let dim = populations.len();
        let m = CMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                c(populations[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        Self::new(m)
    }

    /// Coherent state `|α>` truncated to `dim` levels and renormalized.
    pub fn coherent(alpha: Complex64, dim: usize) -> Self {
        let mut ket = Vec::with_capacity(dim);
        let mut amp = c((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for n in 0..dim {
            if n > 0 {
                amp = amp * alpha / (n as f64).sqrt();
            }
            ket.push(amp);
        }
        Self::pure(&ket).expect("non-empty coherent ket")
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.0[(m, n)]
    }

    /// Diagonal element `ρ_nn`, zero beyond the truncation.
    pub fn population(&self, n: usize) -> f64 {
        if n < self.dim() {
            self.0[(n, n)].re
        } else {
            0.0
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.0.trace()
    }

    pub fn expectation(&self, op: &Operator) -> Result<Complex64> {
        check_same_dim(self.dim(), op.dim())?;
        Ok((op.matrix() * &self.0).trace())
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = hermitian_part(&self.0)
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let tr = self.trace();
        if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
            return Err(invalid_state(format!("trace {tr}")));
        }
        let asym = frobenius_norm(&(&self.0 - self.0.adjoint()));
        if asym > tol {
            return Err(invalid_state(format!("anti-Hermitian part {asym:e}")));
        }
        let min = self.eigenvalues()[0];
        if min < -tol.max(-POSITIVITY_FLOOR) {
            return Err(invalid_state(format!("eigenvalue {min:e}")));
        }
        Ok(())
    }

    /// Truncates or zero-pads to `dim` levels. Truncation renormalizes.
    pub fn resize(&self, dim: usize) -> Result<Self> {
        let d = self.dim().min(dim);
        let m = CMatrix::from_fn(dim, dim, |i, j| {
            if i < d && j < d {
                self.0[(i, j)]
            } else {
                c(0.0, 0.0)
            }
        });
        Self::normalized(m)
    }
}

fn invalid_state(reason: String) -> Error {
    Error::InvalidParameter {
        field: "rho",
        reason,
    }
}

/// `Tr(ρ²)`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    // Tr(ρ ρ) = Σ_ij ρ_ij ρ_ji
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            acc += (m[(i, j)] * m[(j, i)]).re;
        }
    }
    acc
}

/// Matrix square root of a positive semidefinite Hermitian matrix.
fn psd_sqrt(m: &CMatrix) -> CMatrix {
    let eig = hermitian_part(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| c(l.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * CMatrix::from_diagonal(&roots) * eig.eigenvectors.adjoint()
}

/// Uhlmann fidelity `(Tr √(√a b √a))²`.
pub fn fidelity(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    let sa = psd_sqrt(a.matrix());
    let inner = &sa * b.matrix() * &sa;
    let ev = hermitian_part(&inner).symmetric_eigenvalues();
    // eigenvalues at rounding level would otherwise contribute ~1e-8 through the square root
    let floor = 1e-13 * ev.amax();
    let tr: f64 = ev.iter().filter(|&&l| l > floor).map(|l| l.sqrt()).sum();
    Ok((tr * tr).clamp(0.0, 1.0))
}

pub fn frobenius_distance(a: &DensityMatrix, b: &DensityMatrix) -> Result<f64> {
    check_same_dim(a.dim(), b.dim())?;
    Ok(frobenius_norm(&(a.matrix() - b.matrix())))
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_same_dim(xs.len(), ys.len())?;
    if xs.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two samples"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Serialize, Deserialize)]
struct DensityMatrixJson {
    dim: usize,
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for DensityMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.dim();
        let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
            (0..d)
                .map(|i| (0..d).map(|j| f(&self.0[(i, j)])).collect())
                .collect()
        };
        DensityMatrixJson {
            dim: d,
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = DensityMatrixJson::deserialize(d)?;
        let n = raw.dim;
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if n == 0 || !shape_ok(&raw.re) || !shape_ok(&raw.im) {
            return Err(D::Error::custom(format!("expected {n}x{n} re/im arrays")));
        }
        let m = CMatrix::from_fn(n, n, |i, j| c(raw.re[i][j], raw.im[i][j]));
        DensityMatrix::from_matrix_unchecked(m).map_err(D::Error::custom)
    }
}
