//! Lindblad evolution of the driven two-level atom.
//!
//! Channel conventions: the monitored waveguide channel is `k = 1` with rate
//! `gamma1`; the opposite waveguide end (`gamma2`, infinite setup only) and
//! nonradiative loss (`gamma_nr`) are unmonitored `σ₋` channels; pure dephasing
//! enters as `(Γ_φ/2) D[σ_z]`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qcore::{c, pauli_lowering, pauli_z, CMatrix, DensityMatrix, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setup {
    /// Atom in an infinite waveguide: two emission directions.
    Infinite,
    /// Atom in front of a mirror: a single emission channel.
    SemiInfinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma_phi: f64,
    pub gamma_nr: f64,
    pub setup: Setup,
}

impl ChannelSet {
    pub fn semi_infinite(gamma: f64) -> Self {
        Self {
            gamma1: gamma,
            gamma2: 0.0,
            gamma_phi: 0.0,
            gamma_nr: 0.0,
            setup: Setup::SemiInfinite,
        }
    }

    pub fn infinite(gamma1: f64, gamma2: f64) -> Self {
        Self {
            gamma1,
            gamma2,
            gamma_phi: 0.0,
            gamma_nr: 0.0,
            setup: Setup::Infinite,
        }
    }

    pub fn with_dephasing(mut self, gamma_phi: f64) -> Self {
        self.gamma_phi = gamma_phi;
        self
    }

    pub fn with_nonradiative(mut self, gamma_nr: f64) -> Self {
        self.gamma_nr = gamma_nr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("gamma_phi", self.gamma_phi),
            ("gamma_nr", self.gamma_nr),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("rate must be finite and >= 0, got {v}")));
            }
        }
        match self.setup {
            Setup::SemiInfinite if self.gamma2 != 0.0 => {
                Err(invalid("gamma2", "semi-infinite setup has no second channel"))
            }
            Setup::Infinite if self.gamma2 <= 0.0 => {
                Err(invalid("gamma2", "infinite setup needs gamma2 > 0"))
            }
            _ => Ok(()),
        }
    }

    /// Total population decay rate of the excited state.
    pub fn total_decay(&self) -> f64 {
        self.gamma1 + self.gamma2 + self.gamma_nr
    }

    /// `(rate, L)` pairs for every dissipative channel, monitored channel first.
    pub fn collapse_operators(&self) -> Vec<(f64, Operator)> {
        let sm = pauli_lowering();
        vec![
            (self.gamma1, sm.clone()),
            (self.gamma2, sm.clone()),
            (self.gamma_nr, sm),
            (0.5 * self.gamma_phi, pauli_z()),
        ]
    }
}

/// Coherent drive `Ω = |Ω| e^{iφ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub omega_mag: f64,
    pub phase: f64,
}

impl DriveParams {
    pub fn new(omega_mag: f64, phase: f64) -> Result<Self> {
        if !(omega_mag.is_finite() && omega_mag >= 0.0) {
            return Err(invalid("omega", format!("drive strength must be finite and >= 0, got {omega_mag}")));
        }
        if !phase.is_finite() {
            return Err(invalid("phase", "drive phase must be finite"));
        }
        Ok(Self {
            omega_mag,
            phase: phase.rem_euclid(TAU),
        })
    }

    pub fn real(omega: f64) -> Self {
        Self::new(omega, 0.0).expect("finite non-negative drive")
    }

    pub fn complex(&self) -> Complex64 {
        Complex64::from_polar(self.omega_mag, self.phase)
    }
}

fn check_dims(l: usize, rho: usize) -> Result<()> {
    if l != rho {
        return Err(Error::DimensionMismatch { left: l, right: rho });
    }
    Ok(())
}

/// `D[L]ρ = LρL† − ½L†Lρ − ½ρL†L`.
pub fn dissipator(l: &Operator, rho: &DensityMatrix) -> Result<CMatrix> {
    check_dims(l.dim(), rho.dim())?;
    let l = l.matrix();
    let ld = l.adjoint();
    let ldl = &ld * l;
    let r = rho.matrix();
    Ok(l * r * &ld - (&ldl * r + r * &ldl).scale(0.5))
}

/// `H = −i√γ₁(Ωσ₊ − Ω*σ₋)`.
pub fn drive_hamiltonian(d: &DriveParams, ch: &ChannelSet) -> Operator {
    let om = d.complex() * ch.gamma1.sqrt();
    let mut m = CMatrix::zeros(2, 2);
    // σ₊ = |e><g| sits at (1, 0)
    m[(1, 0)] = c(0.0, -1.0) * om;
    m[(0, 1)] = c(0.0, 1.0) * om.conj();
    Operator::new(m).expect("square")
}

/// Right-hand side of the master equation for the atom.
pub fn lindblad_rhs(rho: &DensityMatrix, d: &DriveParams, ch: &ChannelSet) -> Result<CMatrix> {
    check_dims(2, rho.dim())?;
    let h = drive_hamiltonian(d, ch);
    let r = rho.matrix();
    let mut out = (h.matrix() * r - r * h.matrix()) * c(0.0, -1.0);
    for (rate, l) in ch.collapse_operators() {
        if rate > 0.0 {
            out += dissipator(&l, rho)?.scale(rate);
        }
    }
    Ok(out)
}

/// Column-stacked superoperator, `vec(Lρ) = 𝓛 vec(ρ)`.
pub fn liouvillian(d: &DriveParams, ch: &ChannelSet) -> CMatrix {
    let h = drive_hamiltonian(d, ch).into_matrix();
    let id = CMatrix::identity(2, 2);
    let mi = c(0.0, 1.0);
    let mut sup = id.kronecker(&h) * (-mi) + h.transpose().kronecker(&id) * mi;
    for (rate, l) in ch.collapse_operators() {
        if rate <= 0.0 {
            continue;
        }
        let l = l.into_matrix();
        let ldl = l.adjoint() * &l;
        let term = l.conjugate().kronecker(&l)
            - id.kronecker(&ldl).scale(0.5)
            - ldl.transpose().kronecker(&id).scale(0.5);
        sup += term.scale(rate);
    }
    sup
}

fn vec_to_state(v: &[Complex64]) -> Result<DensityMatrix> {
    let n = (v.len() as f64).sqrt() as usize;
    let m = CMatrix::from_column_slice(n, n, v);
    // null vectors come with an arbitrary complex phase
    let tr = m.trace();
    if tr.norm() == 0.0 {
        return Err(Error::Undefined("traceless null vector"));
    }
    DensityMatrix::normalized(m.unscale(tr.norm()) * (tr.conj() / tr.norm()))
}

/// Steady state from the null space of the 4×4 Liouvillian.
pub fn steady_state_numeric(d: &DriveParams, ch: &ChannelSet) -> Result<DensityMatrix> {
    ch.validate()?;
    let sup = liouvillian(d, ch);
    let svd = sup.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let scale = svd.singular_values.max().max(1.0);
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < 1e-10 * scale)
        .collect();
    if null.len() != 1 {
        return Err(Error::DegenerateSteadyState(null.len()));
    }
    let row = v_t.row(null[0]);
    let v: Vec<Complex64> = row.iter().map(|z| z.conj()).collect();
    vec_to_state(&v)
}

/// Exact propagation `ρ(t) = exp(𝓛t) ρ(0)`.
pub fn propagate(rho: &DensityMatrix, d: &DriveParams, ch: &ChannelSet, t: f64) -> Result<DensityMatrix> {
    check_dims(2, rho.dim())?;
    let prop = (liouvillian(d, ch) * c(t, 0.0)).exp();
    let v = prop * nalgebra::DVector::from_column_slice(rho.matrix().as_slice());
    vec_to_state(v.as_slice())
}

/// Closed-form steady-state `<σ₋>` for the semi-infinite waveguide,
/// `−2√γ Ω / (γ + 2Γ_φ + 8Ω²)`, which reduces to `−2Ω/(1 + 8Ω²)` at `γ = 1`.
pub fn sigma_minus_ss_analytic(d: &DriveParams, ch: &ChannelSet) -> Result<Complex64> {
    if ch.setup != Setup::SemiInfinite || ch.gamma2 != 0.0 {
        return Err(Error::Unsupported("closed form requires the semi-infinite setup"));
    }
    if ch.gamma_nr > 0.0 {
        return Err(Error::Unsupported("no closed form with nonradiative decay"));
    }
    let g = ch.gamma1;
    let denom = g + 2.0 * ch.gamma_phi + 8.0 * d.omega_mag * d.omega_mag;
    if denom == 0.0 {
        return Err(Error::Undefined("all rates and drive vanish"));
    }
    Ok(d.complex() * (-2.0 * g.sqrt() / denom))
}

pub fn sigma_minus_expectation(rho: &DensityMatrix) -> Complex64 {
    // Tr(σ₋ρ) = <e|ρ|g>
    rho.get(1, 0)
}
