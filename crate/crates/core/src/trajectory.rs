//! Homodyne quantum trajectories of the driven atom.
//!
//! The conditional atom state obeys the Itô stochastic master equation
//!
//! ```text
//! dρ_c = −i[H, ρ_c] dt + Σ_k γ_k D[L_k] ρ_c dt + √γ₁ H[e^{−iθ} σ₋] ρ_c dW
//! ```
//!
//! and each step emits the homodyne photocurrent increment
//! `j dt = (√γ₁ <σ₊e^{iθ} + σ₋e^{−iθ}> dt + dW) / √2`. The filtered integral of
//! the increments over the measurement window is one quadrature sample `J`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::Matrix2;
use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{drive_hamiltonian, propagate, ChannelSet, DriveParams, Setup};
use crate::error::{invalid, Error, Result};
use crate::modefilter::{ModeFilter, SampledFilter};
use crate::qcore::{CMatrix, DensityMatrix};
use crate::rng;

type M2 = Matrix2<Complex64>;

/// Steps whose smallest eigenvalue drops below this are rejected.
pub const STEP_POSITIVITY_FLOOR: f64 = -1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Plain Euler–Maruyama on the SME, followed by symmetrization and trace
    /// renormalization.
    EulerMaruyama,
    /// First-order Kraus-map form of the same SME,
    /// `ρ' ∝ M ρ M† + Σ_unmonitored L ρ L† dt` with
    /// `M = 1 − (iH + ½ΣL†L) dt + √γ₁ e^{−iθ}σ₋ dy`. It agrees with
    /// Euler–Maruyama to first order and keeps the state positive.
    #[default]
    PositiveMap,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum InitialState {
    #[default]
    Ground,
    Excited,
    State(DensityMatrix),
}

impl InitialState {
    fn matrix(&self) -> Result<M2> {
        let m = match self {
            InitialState::Ground => DensityMatrix::fock(0, 2),
            InitialState::Excited => DensityMatrix::fock(1, 2),
            InitialState::State(rho) => rho.clone(),
        };
        to_m2(&m)
    }
}

/// How the atom is brought from `t = 0` to the start of the measurement window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WaitMode {
    /// Integrate the SME over `[0, t0]` and discard the record.
    #[default]
    Stochastic,
    /// Start the window from the unconditional state `ρ(t0)`. Because the
    /// record before `t0` is discarded, the statistics of `J` are identical.
    Unconditional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmeConfig {
    pub drive: DriveParams,
    pub channels: ChannelSet,
    /// Local-oscillator angle in radians.
    pub theta: f64,
    pub dt: f64,
    /// Unrecorded settling time before the measurement window.
    pub t0: f64,
    /// Length `T` of the measurement window.
    pub duration: f64,
    pub seed: u64,
    pub initial: InitialState,
    pub wait: WaitMode,
    pub scheme: Scheme,
    /// Adds the reflected coherent drive to the record (full `a_in + √γ σ₋`).
    pub include_drive: bool,
}

impl SmeConfig {
    pub const DEFAULT_DT: f64 = 1e-3;
    pub const DEFAULT_T0: f64 = 10.0;

    pub fn new(drive: DriveParams, channels: ChannelSet, duration: f64) -> Self {
        Self {
            drive,
            channels,
            theta: 0.0,
            dt: Self::DEFAULT_DT,
            t0: Self::DEFAULT_T0,
            duration,
            seed: 0,
            initial: InitialState::Ground,
            wait: WaitMode::Stochastic,
            scheme: Scheme::PositiveMap,
            include_drive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.channels.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid("dt", "time step must be > 0"));
        }
        if !(self.t0.is_finite() && self.t0 >= 0.0) {
            return Err(invalid("t0", "settling time must be >= 0"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("T", "integration time must be > 0"));
        }
        if !self.theta.is_finite() {
            return Err(invalid("theta", "angle must be finite"));
        }
        for (name, v) in [("t0", self.t0), ("T", self.duration)] {
            let n = v / self.dt;
            if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                return Err(invalid(name, format!("{v} is not a multiple of dt = {}", self.dt)));
            }
        }
        if self.duration / self.dt < 0.5 {
            return Err(invalid("T", "window shorter than one step"));
        }
        if self.include_drive && self.channels.setup != Setup::SemiInfinite {
            return Err(invalid(
                "include_drive",
                "the reflected drive is only part of the monitored field in the semi-infinite setup",
            ));
        }
        Ok(())
    }

    pub fn wait_steps(&self) -> usize {
        (self.t0 / self.dt).round() as usize
    }

    pub fn window_steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

fn to_m2(rho: &DensityMatrix) -> Result<M2> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch {
            left: 2,
            right: rho.dim(),
        });
    }
    let m = rho.matrix();
    Ok(M2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]))
}

fn from_m2(m: &M2) -> DensityMatrix {
    DensityMatrix::from_matrix_unchecked(CMatrix::from_column_slice(2, 2, m.as_slice()))
        .expect("2x2 is square")
}

/// Smallest eigenvalue of a 2×2 Hermitian matrix.
fn min_eigenvalue(m: &M2) -> f64 {
    let a = m[(0, 0)].re;
    let d = m[(1, 1)].re;
    let b = m[(0, 1)];
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
    half_tr - disc
}

/// Precomputed operators for one SME configuration.
#[derive(Debug, Clone)]
pub struct SmeKernel {
    dt: f64,
    /// Monitored measurement operator `√γ₁ e^{−iθ} σ₋`, stored as its single
    /// nonzero `(g, e)` entry.
    c1: Complex64,
    h: M2,
    /// `(√rate · L)` for every channel, monitored one included.
    all: Vec<M2>,
    /// Unmonitored jumps as a real linear map, see [`jump_map`].
    jumps: [[f64; 4]; 4],
    /// `1 − (iH + ½ Σ L†L) dt`.
    m0: M2,
    drive_offset: f64,
    scheme: Scheme,
}

impl SmeKernel {
    pub fn new(cfg: &SmeConfig) -> Result<Self> {
        cfg.validate()?;
        let ch = &cfg.channels;
        let h = to_m2_op(drive_hamiltonian(&cfg.drive, ch).matrix());
        let c1 = Complex64::from_polar(ch.gamma1.sqrt(), -cfg.theta);
        let mut all = Vec::new();
        let mut unmonitored = Vec::new();
        for (k, (rate, l)) in ch.collapse_operators().into_iter().enumerate() {
            if rate <= 0.0 {
                continue;
            }
            let op = to_m2_op(l.matrix()) * Complex64::from(rate.sqrt());
            all.push(op);
            if k > 0 {
                unmonitored.push(op);
            }
        }
        let mut gen = h * Complex64::i();
        for l in &all {
            gen += l.adjoint() * l * Complex64::from(0.5);
        }
        let m0 = M2::identity() - gen * Complex64::from(cfg.dt);
        let drive_offset = if cfg.include_drive {
            // (Ω e^{−iθ} + Ω* e^{iθ}) dt / √2
            let om = cfg.drive.complex() * Complex64::from_polar(1.0, -cfg.theta);
            2.0 * om.re * cfg.dt * FRAC_1_SQRT_2
        } else {
            0.0
        };
        Ok(Self {
            dt: cfg.dt,
            c1,
            h,
            all,
            jumps: jump_map(&unmonitored, cfg.dt),
            m0,
            drive_offset,
            scheme: cfg.scheme,
        })
    }

    /// `<c + c†>` for the monitored operator `c`.
    #[inline]
    fn homodyne_mean(&self, rho: &M2) -> f64 {
        // Tr(c ρ) = c1 ρ_eg
        2.0 * (self.c1 * rho[(1, 0)]).re
    }

    /// Photocurrent increment `j dt` produced by the step with noise `dw`.
    #[inline]
    pub fn increment(&self, rho: &M2, dw: f64) -> f64 {
        (self.homodyne_mean(rho) * self.dt + dw) * FRAC_1_SQRT_2 + self.drive_offset
    }

    /// Advances `rho` by one step; returns the photocurrent increment.
    pub fn step(&self, rho: &mut M2, dw: f64) -> Result<f64> {
        let mean = self.homodyne_mean(rho);
        let inc = (mean * self.dt + dw) * FRAC_1_SQRT_2 + self.drive_offset;
        let dt = Complex64::from(self.dt);
        let next = match self.scheme {
            Scheme::PositiveMap => {
                let dy = mean * self.dt + dw;
                let mut m = self.m0;
                m[(0, 1)] += self.c1 * dy;
                let (a, b, d) = (rho[(0, 0)].re, rho[(1, 0)], rho[(1, 1)].re);
                let (mut o00, mut o10, mut o11) = sandwich(&m, a, b, d);
                let x = [a, d, b.re, b.im];
                let row = |k: usize| self.jumps[k].iter().zip(&x).map(|(u, v)| u * v).sum::<f64>();
                o00 += row(0);
                o11 += row(1);
                o10 += Complex64::new(row(2), row(3));
                let inv = 1.0 / (o00 + o11);
                let (a, b, d) = (o00 * inv, o10 * inv, o11 * inv);
                let min = 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + b.norm_sqr()).sqrt();
                if !(min >= STEP_POSITIVITY_FLOOR) {
                    return Err(Error::StepSize { min_eigenvalue: min });
                }
                *rho = M2::new(Complex64::from(a), b.conj(), b, Complex64::from(d));
                return Ok(inc);
            }
            Scheme::EulerMaruyama => {
                let r = *rho;
                let mut drift = (self.h * r - r * self.h) * Complex64::new(0.0, -1.0);
                for l in &self.all {
                    let ldl = l.adjoint() * l;
                    drift += l * r * l.adjoint() - (ldl * r + r * ldl) * Complex64::from(0.5);
                }
                let mut c = M2::zeros();
                c[(0, 1)] = self.c1;
                let meas = c * r + r * c.adjoint() - r * Complex64::from(mean);
                r + drift * dt + meas * Complex64::from(dw)
            }
        };
        let mut next = (next + next.adjoint()) * Complex64::from(0.5);
        let tr = next[(0, 0)].re + next[(1, 1)].re;
        next /= Complex64::from(tr);
        let min = min_eigenvalue(&next);
        if !(min >= STEP_POSITIVITY_FLOOR) {
            return Err(Error::StepSize { min_eigenvalue: min });
        }
        *rho = next;
        Ok(inc)
    }
}

/// `M ρ M†` for Hermitian `ρ = [[a, b*], [b, d]]`, returned as `(00, 10, 11)`.
#[inline]
fn sandwich(m: &M2, a: f64, b: Complex64, d: f64) -> (f64, Complex64, f64) {
    let (m00, m01, m10, m11) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let x00 = m00 * a + m01 * b;
    let x01 = m00 * b.conj() + m01 * d;
    let x10 = m10 * a + m11 * b;
    let x11 = m10 * b.conj() + m11 * d;
    (
        (x00 * m00.conj() + x01 * m01.conj()).re,
        x10 * m00.conj() + x11 * m01.conj(),
        (x10 * m10.conj() + x11 * m11.conj()).re,
    )
}

/// Real matrix of `ρ ↦ Σ L ρ L† dt` acting on `(ρ_gg, ρ_ee, Re ρ_eg, Im ρ_eg)`.
fn jump_map(ops: &[M2], dt: f64) -> [[f64; 4]; 4] {
    let basis = [
        (1.0, Complex64::from(0.0), 0.0),
        (0.0, Complex64::from(0.0), 1.0),
        (0.0, Complex64::new(1.0, 0.0), 0.0),
        (0.0, Complex64::new(0.0, 1.0), 0.0),
    ];
    let mut out = [[0.0; 4]; 4];
    for (col, &(a, b, d)) in basis.iter().enumerate() {
        for l in ops {
            let (o00, o10, o11) = sandwich(l, a, b, d);
            out[0][col] += o00 * dt;
            out[1][col] += o11 * dt;
            out[2][col] += o10.re * dt;
            out[3][col] += o10.im * dt;
        }
    }
    out
}

fn to_m2_op(m: &CMatrix) -> M2 {
    M2::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
}

/// One SME step on a full density matrix.
pub fn sme_step(rho: &DensityMatrix, cfg: &SmeConfig, dw: f64) -> Result<DensityMatrix> {
    let kernel = SmeKernel::new(cfg)?;
    let mut m = to_m2(rho)?;
    kernel.step(&mut m, dw)?;
    Ok(from_m2(&m))
}

/// Photocurrent increment `j dt` paired with [`sme_step`] for the same `dw`.
pub fn photocurrent_increment(rho: &DensityMatrix, cfg: &SmeConfig, dw: f64) -> Result<f64> {
    let kernel = SmeKernel::new(cfg)?;
    Ok(kernel.increment(&to_m2(rho)?, dw))
}

/// A single trajectory that can be advanced step by step.
pub struct Trajectory {
    kernel: SmeKernel,
    rho: M2,
    rng: ChaCha8Rng,
    sqrt_dt: f64,
    steps: usize,
}

impl Trajectory {
    pub fn new(cfg: &SmeConfig) -> Result<Self> {
        let kernel = SmeKernel::new(cfg)?;
        Ok(Self {
            kernel,
            rho: cfg.initial.matrix()?,
            rng: rng::stream(cfg.seed),
            sqrt_dt: cfg.dt.sqrt(),
            steps: 0,
        })
    }

    /// Draws `dW ~ N(0, dt)`, advances, and returns the increment.
    #[inline]
    pub fn step(&mut self) -> Result<f64> {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        self.steps += 1;
        self.kernel.step(&mut self.rho, z * self.sqrt_dt)
    }

    pub fn state(&self) -> DensityMatrix {
        from_m2(&self.rho)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub theta: f64,
    /// Filtered, integrated photocurrent.
    pub j: f64,
    pub seed: u64,
    /// Conditional atom state at the end of the window; absent for records
    /// loaded from file.
    pub final_state: Option<DensityMatrix>,
}

fn check_filter(cfg: &SmeConfig, filter: &ModeFilter) -> Result<()> {
    let tol = 1e-9 * cfg.duration.max(1.0);
    if (filter.duration() - cfg.duration).abs() > tol {
        return Err(Error::FilterMismatch(format!(
            "filter lasts {} but the window is T = {}",
            filter.duration(),
            cfg.duration
        )));
    }
    if (filter.t0() - cfg.t0).abs() > 1e-9 * cfg.t0.max(1.0) {
        return Err(Error::FilterMismatch(format!(
            "filter starts at {} but the window starts at t0 = {}",
            filter.t0(),
            cfg.t0
        )));
    }
    Ok(())
}

fn run_sampled(cfg: &SmeConfig, weights: &SampledFilter, start: Option<&M2>) -> Result<TrajectoryRecord> {
    let kernel = SmeKernel::new(cfg)?;
    Ok(run_batch(cfg, &kernel, weights, start, &[cfg.seed])?.remove(0))
}

/// Trajectories sharing a configuration but not a seed, advanced in lockstep.
/// A single trajectory is a serial dependency chain; interleaving a few lets
/// the CPU overlap them. Each lane's arithmetic is unchanged, so results are
/// identical to running the lanes one at a time.
fn run_batch(
    cfg: &SmeConfig,
    kernel: &SmeKernel,
    weights: &SampledFilter,
    start: Option<&M2>,
    seeds: &[u64],
) -> Result<Vec<TrajectoryRecord>> {
    let sqrt_dt = cfg.dt.sqrt();
    let init = match start {
        Some(rho) => *rho,
        None => cfg.initial.matrix()?,
    };
    let mut rho = vec![init; seeds.len()];
    let mut rngs: Vec<ChaCha8Rng> = seeds.iter().map(|&s| rng::stream(s)).collect();
    let mut j = vec![0.0; seeds.len()];
    if start.is_none() {
        for _ in 0..cfg.wait_steps() {
            for (r, g) in rho.iter_mut().zip(rngs.iter_mut()) {
                let z: f64 = StandardNormal.sample(g);
                kernel.step(r, z * sqrt_dt)?;
            }
        }
    }
    for &w in &weights.weights {
        for ((r, g), acc) in rho.iter_mut().zip(rngs.iter_mut()).zip(j.iter_mut()) {
            let z: f64 = StandardNormal.sample(g);
            *acc += w * kernel.step(r, z * sqrt_dt)?;
        }
    }
    Ok(seeds
        .iter()
        .zip(j)
        .zip(&rho)
        .map(|((&seed, j), r)| TrajectoryRecord {
            theta: cfg.theta,
            j,
            seed,
            final_state: Some(from_m2(r)),
        })
        .collect())
}

/// Lanes per lockstep batch in [`run_ensemble`].
const LANES: usize = 8;

fn window_start_state(cfg: &SmeConfig) -> Result<Option<M2>> {
    match cfg.wait {
        WaitMode::Stochastic => Ok(None),
        WaitMode::Unconditional => {
            let init = from_m2(&cfg.initial.matrix()?);
            let rho = if cfg.t0 > 0.0 {
                propagate(&init, &cfg.drive, &cfg.channels, cfg.t0)?
            } else {
                init
            };
            Ok(Some(to_m2(&rho)?))
        }
    }
}

/// Runs one trajectory: settle for `t0`, then integrate `J = Σ f_i j_i` over
/// the window `[t0, t0 + T]`. For the boxcar this is `Σ j_i / √T`.
pub fn run_trajectory(cfg: &SmeConfig, filter: &ModeFilter) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    check_filter(cfg, filter)?;
    let weights = filter.sample(cfg.dt)?;
    let start = window_start_state(cfg)?;
    run_sampled(cfg, &weights, start.as_ref())
}

/// `n_traj` trajectories at each angle. Trajectory `i` at angle index `a` uses
/// the sub-seed `rng::trajectory_seed(cfg.seed, a, i)`; output is ordered by
/// angle, then trajectory, regardless of how work is scheduled.
pub fn run_ensemble(
    cfg: &SmeConfig,
    filter: &ModeFilter,
    n_traj: usize,
    thetas: &[f64],
) -> Result<Vec<TrajectoryRecord>> {
    if n_traj == 0 {
        return Err(invalid("trajectories", "need at least one trajectory per angle"));
    }
    if thetas.is_empty() {
        return Err(invalid("angles", "need at least one angle"));
    }
    cfg.validate()?;
    check_filter(cfg, filter)?;
    let weights = filter.sample(cfg.dt)?;
    let start = window_start_state(cfg)?;
    let batches = n_traj.div_ceil(LANES);
    let kernels = thetas
        .iter()
        .map(|&theta| {
            let c = SmeConfig { theta, ..cfg.clone() };
            SmeKernel::new(&c).map(|k| (c, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let chunks: Vec<Vec<TrajectoryRecord>> = (0..thetas.len() * batches)
        .into_par_iter()
        .map(|k| {
            let (a, b) = (k / batches, k % batches);
            let lanes = b * LANES..((b + 1) * LANES).min(n_traj);
            let seeds: Vec<u64> = lanes.map(|i| rng::trajectory_seed(cfg.seed, a, i)).collect();
            let (c, kernel) = &kernels[a];
            run_batch(c, kernel, &weights, start.as_ref(), &seeds)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// The default tomography angles: 20 steps of 4.5° from 0° to 85.5°.
pub fn default_angles(count: usize) -> Vec<f64> {
    let step = std::f64::consts::FRAC_PI_2 / count as f64;
    (0..count).map(|a| a as f64 * step).collect()
}
