//! Quadrature histograms and iterative maximum-likelihood reconstruction of the
//! field density matrix in a truncated Fock basis.
//!
//! Bin projectors factor as `Π^{θ,j} = D_θ B_j D_θ†` with `D_θ = diag(e^{imθ})`
//! and `B_j[m][n] = ∫_bin ψ_m(x) ψ_n(x) dx` real symmetric, so only the `B_j` are
//! stored and the angle enters through phases.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qcore::{c, frobenius_norm, CMatrix, DensityMatrix, Operator};
use crate::rng;
use crate::trajectory::TrajectoryRecord;

pub const DEFAULT_CUTOFF: usize = 10;
pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_RANGE: (f64, f64) = (-5.0, 5.0);
/// Trapezoid points per bin; see `projector_quadrature_is_converged`.
pub const DEFAULT_SUBDIVISIONS: usize = 256;

/// Binned quadrature counts, one row per local-oscillator angle.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramSet {
    pub thetas: Vec<f64>,
    pub edges: Vec<f64>,
    pub counts: Vec<Vec<u64>>,
    /// Samples per angle that fell outside `[edges[0], edges[B])`.
    pub overflow: Vec<u64>,
}

impl HistogramSet {
    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn total(&self, angle: usize) -> u64 {
        self.counts[angle].iter().sum()
    }

    pub fn grand_total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn overflow_fraction(&self) -> f64 {
        let out: u64 = self.overflow.iter().sum();
        out as f64 / (out + self.grand_total()).max(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        check_edges(&self.edges)?;
        if self.counts.len() != self.thetas.len() || self.overflow.len() != self.thetas.len() {
            return Err(invalid("counts", "one row per angle required"));
        }
        if self.counts.iter().any(|row| row.len() != self.bins()) {
            return Err(invalid("counts", "row length differs from bin count"));
        }
        if let Some(a) = (0..self.thetas.len()).find(|&a| self.total(a) == 0) {
            return Err(invalid("counts", format!("angle {} has no counts", self.thetas[a])));
        }
        Ok(())
    }
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return Err(invalid("bins", "need at least one bin"));
    }
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("range", "bin edges must be finite and strictly increasing"));
    }
    Ok(())
}

/// `bins + 1` equally spaced edges over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(invalid("bins", "need at least one bin"));
    }
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(invalid("range", format!("invalid range [{lo}, {hi}]")));
    }
    let w = (hi - lo) / bins as f64;
    let mut e: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * w).collect();
    e[bins] = hi;
    Ok(e)
}

/// Index of the half-open bin `[e_j, e_{j+1})` containing `x`.
fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    if !(x >= edges[0] && x < edges[edges.len() - 1]) {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}

/// Sorts the integrated signals of `records` into per-angle histograms. Angles
/// appear in order of first occurrence.
pub fn build_histograms(records: &[TrajectoryRecord], edges: &[f64]) -> Result<HistogramSet> {
    build_histograms_from(records.iter().map(|r| (r.theta, r.j)), edges)
}

/// As [`build_histograms`], from bare `(theta, J)` pairs.
pub fn build_histograms_from<I>(samples: I, edges: &[f64]) -> Result<HistogramSet>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    check_edges(edges)?;
    let bins = edges.len() - 1;
    let mut h = HistogramSet {
        thetas: Vec::new(),
        edges: edges.to_vec(),
        counts: Vec::new(),
        overflow: Vec::new(),
    };
    let mut seen = false;
    for (theta, j) in samples {
        seen = true;
        let a = match h.thetas.iter().position(|t| t.to_bits() == theta.to_bits()) {
            Some(a) => a,
            None => {
                h.thetas.push(theta);
                h.counts.push(vec![0; bins]);
                h.overflow.push(0);
                h.thetas.len() - 1
            }
        };
        match bin_index(edges, j) {
            Some(b) => h.counts[a][b] += 1,
            None => h.overflow[a] += 1,
        }
    }
    if !seen {
        return Err(Error::Empty("trajectory records"));
    }
    if h.grand_total() == 0 {
        return Err(Error::AllOutOfRange);
    }
    let frac = h.overflow_fraction();
    if frac > 1e-3 {
        log::warn!(
            "{:.3}% of samples fall outside [{}, {}]",
            100.0 * frac,
            edges[0],
            edges[bins]
        );
    }
    Ok(h)
}

/// Harmonic-oscillator eigenfunctions `ψ_0(x) … ψ_nmax(x)` by upward recurrence.
pub fn oscillator_wavefunctions(nmax: usize, x: f64) -> Vec<f64> {
    let mut psi = Vec::with_capacity(nmax + 1);
    psi.push(std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp());
    if nmax >= 1 {
        psi.push(std::f64::consts::SQRT_2 * x * psi[0]);
    }
    for k in 1..nmax {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * psi[k] - (kf / (kf + 1.0)).sqrt() * psi[k - 1];
        psi.push(next);
    }
    psi
}

/// `ψ_n(x) = (2ⁿ n! √π)^{−1/2} H_n(x) e^{−x²/2}`.
pub fn oscillator_wavefunction(n: usize, x: f64) -> f64 {
    oscillator_wavefunctions(n, x)[n]
}

/// Bin projectors for every `(θ, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    pub cutoff: usize,
    pub thetas: Vec<f64>,
    pub edges: Vec<f64>,
    /// `B_j`, row-major `dim × dim`, one per bin.
    blocks: Vec<Vec<f64>>,
}

impl ProjectorSet {
    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }

    pub fn bins(&self) -> usize {
        self.blocks.len()
    }

    fn phases(&self, theta: f64) -> Vec<Complex64> {
        (0..self.dim()).map(|m| Complex64::from_polar(1.0, m as f64 * theta)).collect()
    }

    /// `Π^{θ_a, j}` with `Π_mn = e^{i(m−n)θ} ∫_bin ψ_m ψ_n dx`.
    pub fn projector(&self, angle: usize, bin: usize) -> Operator {
        let d = self.dim();
        let ph = self.phases(self.thetas[angle]);
        let b = &self.blocks[bin];
        let m = CMatrix::from_fn(d, d, |i, k| ph[i] * ph[k].conj() * b[i * d + k]);
        Operator::new(m).expect("square")
    }

    /// Born probabilities `Tr[Π^{θ,j} ρ]`, one row per angle.
    pub fn probabilities(&self, rho: &DensityMatrix) -> Result<Vec<Vec<f64>>> {
        if rho.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: rho.dim(),
            });
        }
        Ok((0..self.thetas.len())
            .map(|a| {
                let rot = self.rotated_real_part(rho.matrix(), a);
                self.blocks.iter().map(|b| dot(b, &rot)).collect()
            })
            .collect())
    }

    /// `Re(D_θ† ρ D_θ)`, row-major. `Tr[B_j D†ρD] = Σ B_mn Re(D†ρD)_mn` because
    /// `B_j` is real symmetric and `ρ` Hermitian.
    fn rotated_real_part(&self, rho: &CMatrix, angle: usize) -> Vec<f64> {
        let d = self.dim();
        let ph = self.phases(self.thetas[angle]);
        let mut out = vec![0.0; d * d];
        for m in 0..d {
            for n in 0..d {
                out[m * d + n] = (ph[m].conj() * rho[(m, n)] * ph[n]).re;
            }
        }
        out
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Integrates `ψ_m ψ_n` over each bin with the trapezoidal rule using
/// `subdivisions` points per bin (endpoints included).
pub fn build_projectors(
    thetas: &[f64],
    edges: &[f64],
    cutoff: usize,
    subdivisions: usize,
) -> Result<ProjectorSet> {
    check_edges(edges)?;
    if cutoff < 1 {
        return Err(invalid("cutoff", "N_max must be at least 1"));
    }
    if subdivisions < 2 {
        return Err(invalid("subdivisions", "need at least two points per bin"));
    }
    let d = cutoff + 1;
    let blocks = edges
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / (subdivisions - 1) as f64;
            let mut acc = vec![0.0; d * d];
            for k in 0..subdivisions {
                let x = w[0] + k as f64 * h;
                let weight = if k == 0 || k == subdivisions - 1 { 0.5 * h } else { h };
                let psi = oscillator_wavefunctions(cutoff, x);
                for m in 0..d {
                    for n in m..d {
                        acc[m * d + n] += weight * psi[m] * psi[n];
                    }
                }
            }
            for m in 0..d {
                for n in 0..m {
                    acc[m * d + n] = acc[n * d + m];
                }
            }
            acc
        })
        .collect();
    Ok(ProjectorSet {
        cutoff,
        thetas: thetas.to_vec(),
        edges: edges.to_vec(),
        blocks,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    /// Stop when consecutive iterates differ by less than this in Frobenius norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Record the log-likelihood after every iteration.
    pub track_likelihood: bool,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 20_000,
            track_likelihood: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub state: DensityMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius distance between the last two iterates.
    pub final_step: f64,
    /// `Σ n_{θ,j} ln Pr(θ, j)` at the returned state.
    pub loglikelihood: f64,
    /// Some bin with counts had zero predicted probability and was clamped.
    pub clamped: bool,
    /// Log-likelihood of the initial state followed by every iterate, when tracked.
    pub likelihood_trace: Vec<f64>,
}

const PR_FLOOR: f64 = 1e-300;

/// Neumaier-compensated sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

struct Likelihood<'a> {
    p: &'a ProjectorSet,
    /// Per angle: `(bin, count)` for bins with nonzero counts.
    data: Vec<Vec<(usize, f64)>>,
    total: f64,
}

struct Evaluation {
    loglik: f64,
    /// Per angle, per nonzero bin: `n / Pr`.
    ratios: Vec<Vec<f64>>,
    clamped: bool,
}

impl<'a> Likelihood<'a> {
    fn new(h: &HistogramSet, p: &'a ProjectorSet) -> Self {
        let data: Vec<Vec<(usize, f64)>> = h
            .counts
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &n)| n > 0)
                    .map(|(j, &n)| (j, n as f64))
                    .collect()
            })
            .collect();
        let total = h.grand_total() as f64;
        Self { p, data, total }
    }

    fn evaluate(&self, rho: &CMatrix) -> Evaluation {
        let mut ll = CompensatedSum::default();
        let mut clamped = false;
        let ratios = self
            .data
            .iter()
            .enumerate()
            .map(|(a, bins)| {
                let rot = self.p.rotated_real_part(rho, a);
                bins.iter()
                    .map(|&(j, n)| {
                        let mut pr = dot(&self.p.blocks[j], &rot);
                        if !(pr > PR_FLOOR) {
                            pr = PR_FLOOR;
                            clamped = true;
                        }
                        ll.add(n * pr.ln());
                        n / pr
                    })
                    .collect()
            })
            .collect();
        Evaluation {
            loglik: ll.value(),
            ratios,
            clamped,
        }
    }

    /// `R(ρ) = Σ_{θ,j} (n_{θ,j} / Pr_ρ(θ,j)) Π^{θ,j}`, scaled by `1/N`.
    fn r_operator(&self, eval: &Evaluation) -> CMatrix {
        let d = self.p.dim();
        let mut r = CMatrix::zeros(d, d);
        for (a, bins) in self.data.iter().enumerate() {
            let mut s = vec![0.0; d * d];
            for (&(j, _), &w) in bins.iter().zip(&eval.ratios[a]) {
                for (acc, b) in s.iter_mut().zip(&self.p.blocks[j]) {
                    *acc += w * b;
                }
            }
            let ph = self.p.phases(self.p.thetas[a]);
            for m in 0..d {
                for n in 0..d {
                    r[(m, n)] += ph[m] * ph[n].conj() * (s[m * d + n] / self.total);
                }
            }
        }
        r
    }
}

fn sandwich(a: &CMatrix, rho: &CMatrix) -> CMatrix {
    let out = a * rho * a;
    let out = (&out + out.adjoint()).scale(0.5);
    let tr = out.trace().re;
    out.unscale(tr)
}

/// Iterative `RρR` maximum-likelihood reconstruction starting from the
/// normalized identity. An iterate that would lower the likelihood is replaced
/// by the diluted update `(1 + εR)ρ(1 + εR)` with the largest `ε = 2^{-k}` that
/// does not, so the log-likelihood never decreases.
pub fn mle_reconstruct(h: &HistogramSet, p: &ProjectorSet, opts: &MleOptions) -> Result<MleResult> {
    if h.thetas.len() != p.thetas.len()
        || h.thetas.iter().zip(&p.thetas).any(|(a, b)| (a - b).abs() > 1e-12)
        || h.edges.len() != p.edges.len()
        || h.edges.iter().zip(&p.edges).any(|(a, b)| (a - b).abs() > 1e-12)
    {
        return Err(Error::AngleMismatch);
    }
    if !(opts.tol.is_finite() && opts.tol > 0.0) {
        return Err(invalid("tol", "tolerance must be > 0"));
    }
    let d = p.dim();
    let lik = Likelihood::new(h, p);
    if lik.total == 0.0 {
        return Err(Error::Empty("histogram counts"));
    }
    let mut rho = CMatrix::identity(d, d).unscale(d as f64);
    let mut eval = lik.evaluate(&rho);
    let mut clamped = eval.clamped;
    let mut trace = Vec::new();
    if opts.track_likelihood {
        trace.push(eval.loglik);
    }
    let mut iterations = 0;
    let mut final_step = f64::INFINITY;
    let mut converged = false;
    let id = CMatrix::identity(d, d);

    while iterations < opts.max_iter {
        let r = lik.r_operator(&eval);
        let slack = 1e-10 * eval.loglik.abs().max(1.0);
        let mut next = sandwich(&r, &rho);
        let mut next_eval = lik.evaluate(&next);
        let mut eps = 1.0;
        while next_eval.loglik < eval.loglik - slack && eps > 1e-12 {
            let a = &id + r.scale(eps);
            next = sandwich(&a, &rho);
            next_eval = lik.evaluate(&next);
            eps *= 0.5;
        }
        if next_eval.loglik < eval.loglik - slack {
            // no ascent direction left at working precision
            converged = true;
            final_step = 0.0;
            break;
        }
        iterations += 1;
        final_step = frobenius_norm(&(&next - &rho));
        rho = next;
        eval = next_eval;
        clamped |= eval.clamped;
        if opts.track_likelihood {
            trace.push(eval.loglik);
        }
        if final_step < opts.tol {
            converged = true;
            break;
        }
    }
    if clamped {
        log::warn!("zero predicted probability in a bin with counts; clamped to {PR_FLOOR:e}");
    }
    Ok(MleResult {
        state: DensityMatrix::from_matrix_unchecked(rho)?,
        iterations,
        converged,
        final_step,
        loglikelihood: eval.loglik,
        clamped,
        likelihood_trace: trace,
    })
}

/// Draws `samples_per_angle` outcomes per angle from the Born distribution of
/// `rho`; outcomes outside the bin range go to `overflow`.
pub fn synthesize_histograms(
    rho: &DensityMatrix,
    thetas: &[f64],
    edges: &[f64],
    samples_per_angle: u64,
    seed: u64,
) -> Result<HistogramSet> {
    let cutoff = rho.dim().checked_sub(1).filter(|&c| c >= 1).ok_or_else(|| {
        invalid("rho", "need at least two Fock levels")
    })?;
    let p = build_projectors(thetas, edges, cutoff, DEFAULT_SUBDIVISIONS)?;
    let probs = p.probabilities(rho)?;
    let mut counts = Vec::with_capacity(thetas.len());
    let mut overflow = Vec::with_capacity(thetas.len());
    for (a, pr) in probs.iter().enumerate() {
        let mut g = rng::stream(rng::derive_seed(seed, &[a as u64]));
        let (row, out) = multinomial(&mut g, samples_per_angle, pr);
        counts.push(row);
        overflow.push(out);
    }
    Ok(HistogramSet {
        thetas: thetas.to_vec(),
        edges: edges.to_vec(),
        counts,
        overflow,
    })
}

/// Multinomial draw over `probs` plus an implicit remainder category.
fn multinomial<R: Rng>(g: &mut R, n: u64, probs: &[f64]) -> (Vec<u64>, u64) {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let p = p.max(0.0);
        let k = if left == 0 || mass <= 0.0 {
            0
        } else {
            let q = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, q).map(|b| b.sample(g)).unwrap_or(0)
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    (out, left)
}

/// `Re/Im` of `<a>` for a Fock-basis state.
pub fn field_mean(rho: &DensityMatrix) -> Complex64 {
    let d = rho.dim();
    let mut acc = c(0.0, 0.0);
    // Tr(a ρ) = Σ_n √n ρ_{n, n−1}
    for n in 1..d {
        acc += rho.get(n, n - 1) * (n as f64).sqrt();
    }
    acc
}

pub fn mean_photon_number(rho: &DensityMatrix) -> f64 {
    (0..rho.dim()).map(|n| n as f64 * rho.population(n)).sum()
}

/// Matrix of the real bin blocks, handy for inspection and tests.
pub fn bin_block(p: &ProjectorSet, bin: usize) -> DMatrix<f64> {
    let d = p.dim();
    DMatrix::from_row_slice(d, d, &p.blocks[bin])
}
