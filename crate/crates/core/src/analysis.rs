//! Closed-form observables of the reflected field, the end-to-end
//! simulate → histogram → reconstruct → Wigner pipeline, and the sweep and
//! bootstrap harnesses built on it.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{sigma_minus_ss_analytic, ChannelSet, DriveParams, Setup};
use crate::error::{invalid, Error, Result};
use crate::modefilter::ModeFilter;
use crate::qcore::{fidelity, pearson, purity, DensityMatrix};
use crate::rng;
use crate::tomography::{
    build_histograms, build_projectors, field_mean, mle_reconstruct, uniform_edges, HistogramSet, MleOptions,
    MleResult, DEFAULT_SUBDIVISIONS,
};
use crate::trajectory::{default_angles, run_ensemble, Scheme, SmeConfig, TrajectoryRecord, WaitMode};
use crate::wigner::{integrated_negativity, wigner_grid, wln, GridSpec, WignerGrid};

/// Sweep values below this are reported as zero.
pub const WLN_NEGLIGIBLE: f64 = 1e-4;

fn check_rates(gamma: f64, gamma_phi: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(invalid("gamma", "radiative rate must be > 0"));
    }
    if !(gamma_phi.is_finite() && gamma_phi >= 0.0) {
        return Err(invalid("gamma_phi", "dephasing rate must be >= 0"));
    }
    Ok(())
}

/// Amplitude fraction of the reflected field phase-locked to the drive,
/// `r = |1 − 2γ/(γ + 2Γ_φ + 8Ω²)|`.
pub fn coherent_reflectance(omega: f64, gamma: f64, gamma_phi: f64) -> Result<f64> {
    check_rates(gamma, gamma_phi)?;
    if !(omega.is_finite() && omega > 0.0) {
        return Err(invalid("omega", "reflectance is defined relative to Ω and needs Ω > 0"));
    }
    Ok((1.0 - 2.0 * gamma / (gamma + 2.0 * gamma_phi + 8.0 * omega * omega)).abs())
}

/// Drive strength with `r = 0`, `Ω* = √((γ − 2Γ_φ)/8)`.
pub fn incoherent_point(gamma: f64, gamma_phi: f64) -> Result<f64> {
    check_rates(gamma, gamma_phi)?;
    if gamma <= 2.0 * gamma_phi {
        return Err(Error::Undefined("no incoherent point when 2Γ_φ >= γ"));
    }
    Ok(((gamma - 2.0 * gamma_phi) / 8.0).sqrt())
}

/// Phase-space displacement `√(2T) (Ω − 2Ω/(1 + 8|Ω|²))` of the boxcar mode for
/// `γ = 1`, returned as `x + ip`.
pub fn displacement(omega_mag: f64, phase: f64, duration: f64) -> Result<Complex64> {
    let drive = DriveParams::new(omega_mag, phase)?;
    field_displacement(&drive, &ChannelSet::semi_infinite(1.0), duration)
}

/// `√(2T) <a_out>` with `<a_out> = Ω + √γ₁ <σ₋>_ss`, for any semi-infinite
/// channel set covered by the closed form.
pub fn field_displacement(drive: &DriveParams, channels: &ChannelSet, duration: f64) -> Result<Complex64> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid("T", "integration time must be > 0"));
    }
    let s = sigma_minus_ss_analytic(drive, channels)?;
    Ok((drive.complex() + s * channels.gamma1.sqrt()) * (2.0 * duration).sqrt())
}

/// `f = |ρ₀₁| / √(ρ₀ ρ₁)` on the `{|0⟩, |1⟩}` block.
pub fn coherence_parameter(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() < 2 {
        return Err(invalid("rho", "need at least two Fock levels"));
    }
    let (p0, p1) = (rho.population(0), rho.population(1));
    if !(p0 > 1e-12 && p1 > 1e-12) {
        return Err(Error::Undefined("coherence parameter needs nonzero ρ₀ and ρ₁"));
    }
    Ok(rho.get(0, 1).norm() / (p0 * p1).sqrt())
}

/// Phase-space centroid `√2 <A>` of a reconstructed mode state.
pub fn centroid(rho: &DensityMatrix) -> Complex64 {
    field_mean(rho) * std::f64::consts::SQRT_2
}

/// Physical rates converted to units of the radiative rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateScale {
    pub radiative_mhz: f64,
    pub dephasing_khz: f64,
    pub nonradiative_khz: f64,
}

impl RateScale {
    /// Splits a total decoherence budget `Γ_n + 2Γ_φ` (kHz) with `Γ_n = ratio · Γ_φ`.
    pub fn with_budget(radiative_mhz: f64, budget_khz: f64, ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 0.0) {
            return Err(invalid("ratio", "split ratio must be >= 0"));
        }
        let dephasing_khz = budget_khz / (ratio + 2.0);
        Ok(Self {
            radiative_mhz,
            dephasing_khz,
            nonradiative_khz: ratio * dephasing_khz,
        })
    }

    /// Channel set in units of `γ = 1`.
    pub fn channels(&self, setup: Setup) -> Result<ChannelSet> {
        if !(self.radiative_mhz.is_finite() && self.radiative_mhz > 0.0) {
            return Err(invalid("radiative_mhz", "radiative rate must be > 0"));
        }
        let unit = 1e3 * self.radiative_mhz;
        let base = match setup {
            Setup::SemiInfinite => ChannelSet::semi_infinite(1.0),
            Setup::Infinite => ChannelSet::infinite(0.5, 0.5),
        };
        let ch = base
            .with_dephasing(self.dephasing_khz / unit)
            .with_nonradiative(self.nonradiative_khz / unit);
        ch.validate()?;
        Ok(ch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FilterChoice {
    #[default]
    Boxcar,
    Exponential {
        rate: f64,
    },
}

/// Every parameter of one reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub drive: DriveParams,
    pub channels: ChannelSet,
    /// Integration time `T`.
    pub duration: f64,
    pub dt: f64,
    pub t0: f64,
    pub filter: FilterChoice,
    pub trajectories: usize,
    pub angles: Vec<f64>,
    pub bins: usize,
    pub range: (f64, f64),
    pub cutoff: usize,
    pub subdivisions: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub grid: GridSpec,
    pub seed: u64,
    pub wait: WaitMode,
    pub scheme: Scheme,
    pub include_drive: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            drive: DriveParams::real(1.0 / 8f64.sqrt()),
            channels: ChannelSet::semi_infinite(1.0),
            duration: 4.0,
            dt: SmeConfig::DEFAULT_DT,
            t0: SmeConfig::DEFAULT_T0,
            filter: FilterChoice::Boxcar,
            trajectories: 1000,
            angles: default_angles(20),
            bins: crate::tomography::DEFAULT_BINS,
            range: crate::tomography::DEFAULT_RANGE,
            cutoff: crate::tomography::DEFAULT_CUTOFF,
            subdivisions: DEFAULT_SUBDIVISIONS,
            tol: 1e-6,
            max_iter: 20_000,
            grid: GridSpec::default(),
            seed: 1,
            wait: WaitMode::Stochastic,
            scheme: Scheme::PositiveMap,
            include_drive: false,
        }
    }
}

impl PipelineConfig {
    pub fn sme_config(&self) -> SmeConfig {
        SmeConfig {
            dt: self.dt,
            t0: self.t0,
            seed: self.seed,
            wait: self.wait,
            scheme: self.scheme,
            include_drive: self.include_drive,
            ..SmeConfig::new(self.drive, self.channels, self.duration)
        }
    }

    pub fn mode_filter(&self) -> Result<ModeFilter> {
        match self.filter {
            FilterChoice::Boxcar => ModeFilter::boxcar(self.t0, self.duration),
            FilterChoice::Exponential { rate } => ModeFilter::exponential(self.t0, rate, self.duration),
        }
    }

    pub fn edges(&self) -> Result<Vec<f64>> {
        uniform_edges(self.range.0, self.range.1, self.bins)
    }

    pub fn mle_options(&self) -> MleOptions {
        MleOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            track_likelihood: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sme_config().validate()?;
        self.mode_filter()?;
        self.edges()?;
        self.grid.validate()?;
        if self.trajectories == 0 {
            return Err(invalid("trajectories", "need at least one trajectory per angle"));
        }
        if self.angles.is_empty() || self.angles.iter().any(|a| !a.is_finite()) {
            return Err(invalid("angles", "need at least one finite angle"));
        }
        if self.cutoff < 1 {
            return Err(invalid("cutoff", "N_max must be at least 1"));
        }
        if self.subdivisions < 2 {
            return Err(invalid("subdivisions", "need at least two points per bin"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(invalid("tol", "tolerance must be > 0"));
        }
        Ok(())
    }
}

/// Simulates the trajectory ensemble of `cfg`.
pub fn simulate(cfg: &PipelineConfig) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate()?;
    run_ensemble(&cfg.sme_config(), &cfg.mode_filter()?, cfg.trajectories, &cfg.angles)
}

/// Histograms the records and runs the maximum-likelihood reconstruction.
pub fn reconstruct(cfg: &PipelineConfig, records: &[TrajectoryRecord]) -> Result<(HistogramSet, MleResult)> {
    let h = build_histograms(records, &cfg.edges()?)?;
    let p = build_projectors(&h.thetas, &h.edges, cfg.cutoff, cfg.subdivisions)?;
    let r = mle_reconstruct(&h, &p, &cfg.mle_options())?;
    if !r.converged {
        log::warn!(
            "reconstruction stopped after {} iterations with step {:e}",
            r.iterations,
            r.final_step
        );
    }
    Ok((h, r))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WignerSummary {
    pub grid: WignerGrid,
    pub wln: f64,
    pub negativity: f64,
}

pub fn wigner_summary(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerSummary> {
    let grid = wigner_grid(rho, spec)?;
    Ok(WignerSummary {
        wln: wln(&grid)?,
        negativity: integrated_negativity(&grid)?,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub histograms: HistogramSet,
    pub reconstruction: MleResult,
    pub wigner: WignerSummary,
}

impl PipelineOutput {
    pub fn state(&self) -> &DensityMatrix {
        &self.reconstruction.state
    }

    pub fn wln(&self) -> f64 {
        self.wigner.wln
    }
}

/// Ensemble → filter → histograms → MLE → Wigner negativity.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let records = simulate(cfg)?;
    let (histograms, reconstruction) = reconstruct(cfg, &records)?;
    let wigner = wigner_summary(&reconstruction.state, &cfg.grid)?;
    Ok(PipelineOutput {
        histograms,
        reconstruction,
        wigner,
    })
}

fn reported_wln(w: f64) -> f64 {
    if w < WLN_NEGLIGIBLE {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub trajectories: usize,
    pub angles: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub omegas: Vec<f64>,
    pub ts: Vec<f64>,
    /// `wln[i][k]` at `(omegas[i], ts[k])`; `None` marks a failed or
    /// not-yet-computed point.
    pub wln: Vec<Vec<Option<f64>>>,
    pub metadata: SweepMetadata,
}

impl SweepResult {
    pub fn is_complete(&self) -> bool {
        self.wln.iter().flatten().all(Option::is_some)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    /// Append-only progress file; finished points found there are not recomputed.
    pub checkpoint: Option<PathBuf>,
    /// Stop after computing this many new points (the rest stay `None`).
    pub stop_after: Option<usize>,
}

#[derive(Serialize, Deserialize, PartialEq)]
struct CheckpointHeader {
    omegas: Vec<f64>,
    ts: Vec<f64>,
    config: PipelineConfig,
}

#[derive(Serialize, Deserialize)]
struct CheckpointEntry {
    i: usize,
    k: usize,
    wln: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Configuration of sweep point `(Ω, T)`. Every point reuses the base seed, so
/// a one-point sweep reproduces the single-run pipeline exactly.
pub fn sweep_point_config(base: &PipelineConfig, omega: f64, duration: f64) -> PipelineConfig {
    PipelineConfig {
        drive: DriveParams {
            omega_mag: omega,
            ..base.drive
        },
        duration,
        ..base.clone()
    }
}

fn load_checkpoint(path: &Path, header: &CheckpointHeader, wln: &mut [Vec<Option<f64>>]) -> Result<bool> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(false),
        Err(e) => return Err(e.into()),
    };
    let mut lines = BufReader::new(file).lines();
    let first = match lines.next() {
        Some(l) => l?,
        None => return Ok(false),
    };
    let found: CheckpointHeader = serde_json::from_str(&first)?;
    if &found != header {
        return Err(invalid("checkpoint", format!("{} belongs to a different sweep", path.display())));
    }
    for line in lines {
        let line = line?;
        // a torn final line from an interrupted write is simply recomputed
        let Ok(e) = serde_json::from_str::<CheckpointEntry>(&line) else {
            continue;
        };
        if e.i < wln.len() && e.k < wln[e.i].len() && e.wln.is_some() {
            wln[e.i][e.k] = e.wln;
        }
    }
    Ok(true)
}

/// Runs the pipeline at every `(Ω, T)` grid point.
pub fn run_sweep(
    omegas: &[f64],
    ts: &[f64],
    base: &PipelineConfig,
    opts: &SweepOptions,
) -> Result<SweepResult> {
    if omegas.is_empty() || ts.is_empty() {
        return Err(invalid("sweep", "omega and T ranges must be nonempty"));
    }
    for (&o, &t) in omegas.iter().flat_map(|o| ts.iter().map(move |t| (o, t))) {
        sweep_point_config(base, o, t).validate()?;
    }
    let mut wln = vec![vec![None; ts.len()]; omegas.len()];
    let header = CheckpointHeader {
        omegas: omegas.to_vec(),
        ts: ts.to_vec(),
        config: base.clone(),
    };
    let mut sink = match &opts.checkpoint {
        Some(path) => {
            let resumed = load_checkpoint(path, &header, &mut wln)?;
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            if !resumed {
                f.set_len(0)?;
                writeln!(f, "{}", serde_json::to_string(&header)?)?;
            }
            Some(f)
        }
        None => None,
    };
    let mut computed = 0;
    'outer: for (i, &omega) in omegas.iter().enumerate() {
        for (k, &t) in ts.iter().enumerate() {
            if wln[i][k].is_some() {
                continue;
            }
            if opts.stop_after.is_some_and(|n| computed >= n) {
                break 'outer;
            }
            let entry = match run_pipeline(&sweep_point_config(base, omega, t)) {
                Ok(out) => CheckpointEntry {
                    i,
                    k,
                    wln: Some(reported_wln(out.wln())),
                    error: None,
                },
                Err(e) => {
                    log::error!("sweep point (omega = {omega}, T = {t}) failed: {e}");
                    CheckpointEntry {
                        i,
                        k,
                        wln: None,
                        error: Some(e.to_string()),
                    }
                }
            };
            wln[i][k] = entry.wln;
            computed += 1;
            if let Some(f) = sink.as_mut() {
                writeln!(f, "{}", serde_json::to_string(&entry)?)?;
                f.flush()?;
            }
        }
    }
    Ok(SweepResult {
        omegas: omegas.to_vec(),
        ts: ts.to_vec(),
        wln,
        metadata: SweepMetadata {
            trajectories: base.trajectories,
            angles: base.angles.len(),
            seed: base.seed,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub wln_vs_rho1: Option<f64>,
    pub wln_vs_purity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub seeds: Vec<u64>,
    pub states: Vec<DensityMatrix>,
    pub converged: Vec<bool>,
    /// Fidelities of all `k(k−1)/2` pairs `(a, b)`, `a < b`, in lexicographic order.
    pub pairwise_fidelities: Vec<f64>,
    pub wln_values: Vec<f64>,
    pub rho1_values: Vec<f64>,
    pub purity_values: Vec<f64>,
    pub correlations: Correlations,
}

/// Seed of bootstrap repeat `r` under master seed `master`.
pub fn repeat_seed(master: u64, r: usize) -> u64 {
    rng::derive_seed(master, &[r as u64])
}

/// `repeats` reconstructions that differ only in their seed. Repeat `r` uses
/// [`repeat_seed`], so two configurations bootstrapped from the same master
/// seed share their random numbers repeat by repeat.
pub fn bootstrap(cfg: &PipelineConfig, repeats: usize) -> Result<BootstrapReport> {
    if repeats < 2 {
        return Err(invalid("repeats", "bootstrap needs at least two repeats"));
    }
    cfg.validate()?;
    let mut seeds = Vec::with_capacity(repeats);
    let mut states = Vec::with_capacity(repeats);
    let mut converged = Vec::with_capacity(repeats);
    let mut wln_values = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let seed = repeat_seed(cfg.seed, r);
        let out = run_pipeline(&PipelineConfig { seed, ..cfg.clone() })?;
        seeds.push(seed);
        converged.push(out.reconstruction.converged);
        wln_values.push(out.wln());
        states.push(out.reconstruction.state);
    }
    let mut pairwise_fidelities = Vec::with_capacity(repeats * (repeats - 1) / 2);
    for a in 0..repeats {
        for b in a + 1..repeats {
            pairwise_fidelities.push(fidelity(&states[a], &states[b])?);
        }
    }
    let rho1_values: Vec<f64> = states.iter().map(|s| s.population(1)).collect();
    let purity_values: Vec<f64> = states.iter().map(purity).collect();
    let correlations = Correlations {
        wln_vs_rho1: pearson(&wln_values, &rho1_values).ok(),
        wln_vs_purity: pearson(&wln_values, &purity_values).ok(),
    };
    Ok(BootstrapReport {
        seeds,
        states,
        converged,
        pairwise_fidelities,
        wln_values,
        rho1_values,
        purity_values,
        correlations,
    })
}

/// Sample mean and standard deviation (`n − 1` normalization).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::c;
    use approx::assert_abs_diff_eq;

    /// Root of `g` on `[lo, hi]` by bisection.
    fn bisect<F: Fn(f64) -> f64>(g: F, mut lo: f64, mut hi: f64) -> f64 {
        let sign_lo = g(lo).signum();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid).signum() == sign_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn reflectance_examples() {
        // 1/√8 is not representable, so "zero" means zero to machine precision
        assert!(coherent_reflectance(1.0 / 8f64.sqrt(), 1.0, 0.0).unwrap() <= f64::EPSILON);
        assert_eq!(coherent_reflectance(0.125f64.sqrt(), 1.0, 0.0).unwrap(), 0.0);
        assert!(coherent_reflectance(1e4, 1.0, 0.0).unwrap() > 1.0 - 1e-7);
        assert!(coherent_reflectance(0.0, 1.0, 0.0).is_err());
        assert!(coherent_reflectance(0.3, 0.0, 0.0).is_err());
        // weak drive: the atom reflects everything coherently with a π shift
        assert_abs_diff_eq!(coherent_reflectance(1e-6, 1.0, 0.0).unwrap(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn incoherent_point_matches_bisection() {
        for gp in [0.0, 0.1, 0.2] {
            let closed = incoherent_point(1.0, gp).unwrap();
            assert_abs_diff_eq!(closed, ((1.0 - 2.0 * gp) / 8.0).sqrt(), epsilon = 1e-15);
            // signed reflectance changes sign at the root
            let root = bisect(|o| 1.0 - 2.0 / (1.0 + 2.0 * gp + 8.0 * o * o), 1e-6, 2.0);
            assert_abs_diff_eq!(root, closed, epsilon = 1e-12);
            assert!(coherent_reflectance(closed, 1.0, gp).unwrap() < 1e-14);
        }
        assert_abs_diff_eq!(incoherent_point(1.0, 0.2).unwrap(), 0.2739, epsilon = 1e-4);
        assert!(incoherent_point(1.0, 0.5).is_err());
    }

    #[test]
    fn displacement_examples() {
        assert_abs_diff_eq!(displacement(1.0 / 8f64.sqrt(), 0.0, 4.0).unwrap().norm(), 0.0, epsilon = 1e-15);
        let d = displacement(0.05, 0.0, 100.0).unwrap();
        let direct = 200f64.sqrt() * (0.05 - 0.1 / (1.0 + 8.0 * 0.0025));
        assert_abs_diff_eq!(d.re, direct, epsilon = 1e-14);
        assert_abs_diff_eq!(d.re, -0.6794, epsilon = 1e-4);
        assert_eq!(d.im, 0.0);
        // weak-drive limit −√(2T)Ω
        let w = displacement(1e-5, 0.0, 50.0).unwrap();
        assert_abs_diff_eq!(w.re / (-(100f64).sqrt() * 1e-5), 1.0, epsilon = 1e-8);
        // the drive phase rotates the displacement
        let r = displacement(0.05, 0.7, 100.0).unwrap();
        assert_abs_diff_eq!((r - d * Complex64::from_polar(1.0, 0.7)).norm(), 0.0, epsilon = 1e-14);
        assert!(displacement(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn coherence_parameter_examples() {
        let plus = DensityMatrix::pure(&[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(coherence_parameter(&plus).unwrap(), 1.0, epsilon = 1e-14);
        let mix = DensityMatrix::diagonal(&[0.6, 0.4]).unwrap();
        assert_eq!(coherence_parameter(&mix).unwrap(), 0.0);
        assert!(coherence_parameter(&DensityMatrix::fock(1, 3)).is_err());
    }

    #[test]
    fn centroid_of_coherent_state() {
        let rho = DensityMatrix::coherent(c(-0.3, 0.2), 15);
        let z = centroid(&rho);
        assert_abs_diff_eq!(z.re, -0.3 * 2f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(z.im, 0.2 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rate_scale_conversion() {
        let s = RateScale::with_budget(20.0, 89.0, 2.0).unwrap();
        assert_abs_diff_eq!(s.dephasing_khz, 22.25, epsilon = 1e-12);
        assert_abs_diff_eq!(s.nonradiative_khz, 44.5, epsilon = 1e-12);
        let ch = s.channels(Setup::SemiInfinite).unwrap();
        assert_abs_diff_eq!(ch.gamma_phi, 1.1125e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(ch.gamma_nr, 2.225e-3, epsilon = 1e-15);
        assert_abs_diff_eq!(ch.gamma_nr + 2.0 * ch.gamma_phi, 89.0 / 20_000.0, epsilon = 1e-15);
        assert!(RateScale { radiative_mhz: 0.0, ..s }.channels(Setup::SemiInfinite).is_err());
    }

    #[test]
    fn mean_std_values() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert_abs_diff_eq!(s, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
    }

    pub(crate) fn tiny() -> PipelineConfig {
        PipelineConfig {
            duration: 1.0,
            t0: 1.0,
            dt: 1e-2,
            trajectories: 40,
            angles: default_angles(4),
            bins: 20,
            cutoff: 4,
            subdivisions: 16,
            max_iter: 300,
            grid: GridSpec::square(5.0, 41),
            seed: 3,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let bad = PipelineConfig {
            trajectories: 0,
            ..tiny()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { field: "trajectories", .. })));
        let bad = PipelineConfig {
            channels: ChannelSet::infinite(0.5, 0.0),
            ..tiny()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidParameter { field: "gamma2", .. })));
        let json = serde_json::to_string(&tiny()).unwrap();
        let back: PipelineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tiny());
    }

    #[test]
    fn pipeline_is_deterministic_and_physical() {
        let a = run_pipeline(&tiny()).unwrap();
        let b = run_pipeline(&tiny()).unwrap();
        assert_eq!(a, b);
        a.state().validate(1e-9).unwrap();
        assert!(a.wln() >= 0.0);
        assert_eq!(a.histograms.grand_total() + a.histograms.overflow.iter().sum::<u64>(), 160);
    }

    #[test]
    fn one_point_sweep_equals_pipeline() {
        let cfg = tiny();
        let s = run_sweep(&[cfg.drive.omega_mag], &[cfg.duration], &cfg, &SweepOptions::default()).unwrap();
        let direct = run_pipeline(&cfg).unwrap().wln();
        assert_eq!(s.wln[0][0], Some(reported_wln(direct)));
        assert_eq!(s.metadata.trajectories, 40);
    }

    #[test]
    fn interrupted_sweep_resumes_identically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.jsonl");
        let cfg = tiny();
        let omegas = [0.2, 0.35];
        let ts = [0.5, 1.0];
        let full = run_sweep(&omegas, &ts, &cfg, &SweepOptions::default()).unwrap();

        let opts = SweepOptions {
            checkpoint: Some(path.clone()),
            stop_after: Some(3),
        };
        let partial = run_sweep(&omegas, &ts, &cfg, &opts).unwrap();
        assert!(!partial.is_complete());
        assert_eq!(partial.wln.iter().flatten().filter(|w| w.is_some()).count(), 3);

        // simulate a torn write at the end of the file
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        write!(f, "{{\"i\":1,\"k\"").unwrap();
        drop(f);

        let resumed = run_sweep(
            &omegas,
            &ts,
            &cfg,
            &SweepOptions {
                checkpoint: Some(path.clone()),
                stop_after: Some(1),
            },
        )
        .unwrap();
        assert!(resumed.is_complete());
        assert_eq!(resumed, full);

        let other = PipelineConfig { seed: 99, ..cfg };
        assert!(run_sweep(&omegas, &ts, &other, &SweepOptions { checkpoint: Some(path), stop_after: None }).is_err());
    }

    #[test]
    fn bootstrap_layout() {
        let rep = bootstrap(&tiny(), 4).unwrap();
        assert_eq!(rep.states.len(), 4);
        assert_eq!(rep.pairwise_fidelities.len(), 6);
        assert!(rep.pairwise_fidelities.iter().all(|&f| f > 0.0 && f <= 1.0 + 1e-9));
        assert_eq!(rep.seeds, (0..4).map(|r| repeat_seed(3, r)).collect::<Vec<_>>());
        assert!(bootstrap(&tiny(), 1).is_err());
    }
}
