//! Wigner functions of Fock-basis density matrices and their negativity.
//!
//! Conventions: `x = (a + a†)/√2`, `p = (a − a†)/(i√2)`, so the vacuum is
//! `e^{−(x²+p²)}/π` and the coherent state `|α⟩` is centred on `√2(Re α, Im α)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_PI, LN_2};

use crate::error::{invalid, Error, Result};
use crate::qcore::DensityMatrix;

/// Associated Laguerre polynomial `L_n^α(x)` by the three-term recurrence.
pub fn laguerre(n: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - x) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

/// Wigner function of the operator `|m⟩⟨n|`; for `n ≥ m` it is
/// `(−1)^m/π e^{−r²} √(2^{n−m} m!/n!) (x + ip)^{n−m} L_m^{n−m}(2r²)`.
pub fn wigner_element(m: usize, n: usize, x: f64, p: f64) -> Complex64 {
    if n < m {
        return wigner_element(n, m, x, p).conj();
    }
    let k = n - m;
    let r2 = x * x + p * p;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let lag = laguerre(m, k as f64, 2.0 * r2);
    if k == 0 {
        return Complex64::from(sign * FRAC_1_PI * (-r2).exp() * lag);
    }
    if r2 == 0.0 {
        return Complex64::from(0.0);
    }
    // magnitude of √(2^k m!/n!) |x + ip|^k e^{−r²} in log form
    let ln_mag = 0.5 * (k as f64 * LN_2 + ln_factorial(m) - ln_factorial(n)) + 0.5 * k as f64 * r2.ln() - r2;
    let phase = Complex64::from_polar(1.0, k as f64 * p.atan2(x));
    phase * (sign * FRAC_1_PI * lag * ln_mag.exp())
}

/// Evaluates `Σ ρ_mn W_mn(x, p)`. Returns the real part and the magnitude of
/// the imaginary residue.
fn wigner_point(rho: &DMatrix<Complex64>, x: f64, p: f64) -> (f64, f64) {
    let d = rho.nrows();
    let r2 = x * x + p * p;
    let u = 2.0 * r2;
    let g = FRAC_1_PI * (-r2).exp();
    let angle = p.atan2(x);
    let rad = (2.0 * r2).sqrt();
    let mut acc = Complex64::from(0.0);
    for k in 0..d {
        // ((x + ip)√2)^k, with √(m!/n!) applied incrementally over m
        let base = Complex64::from_polar(rad.powi(k as i32), k as f64 * angle);
        let alpha = k as f64;
        let (mut l_prev, mut l_cur) = (0.0, 1.0);
        // ratio √(m!/(m+k)!) updated as m grows
        let mut ratio = (-0.5 * ln_factorial(k)).exp();
        for m in 0..d - k {
            let n = m + k;
            if m > 0 {
                let mf = (m - 1) as f64;
                let next = if m == 1 {
                    1.0 + alpha - u
                } else {
                    ((2.0 * mf + 1.0 + alpha - u) * l_cur - (mf + alpha) * l_prev) / (mf + 1.0)
                };
                l_prev = l_cur;
                l_cur = next;
                ratio *= (m as f64 / n as f64).sqrt();
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let w = base * (sign * g * ratio * l_cur);
            if k == 0 {
                acc += rho[(m, m)] * w;
            } else {
                acc += rho[(m, n)] * w + rho[(n, m)] * w.conj();
            }
        }
    }
    (acc.re, acc.im.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub nx: usize,
    pub np: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::square(5.0, 201)
    }
}

impl GridSpec {
    /// `[−half, half]²` with `n` points per axis.
    pub fn square(half: f64, n: usize) -> Self {
        Self {
            x_min: -half,
            x_max: half,
            p_min: -half,
            p_max: half,
            nx: n,
            np: n,
        }
    }

    /// Same extent with the point spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            nx: 2 * self.nx - 1,
            np: 2 * self.np - 1,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.np < 2 {
            return Err(invalid("grid", "need at least two points per axis"));
        }
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ok(self.x_min, self.x_max) || !ok(self.p_min, self.p_max) {
            return Err(invalid("grid", "extent must be finite with max > min"));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn p(&self, k: usize) -> f64 {
        self.p_min + k as f64 * self.dp()
    }
}

/// Wigner function sampled on a rectangular grid; `values[(i, k)] = W(x_i, p_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub spec: GridSpec,
    pub values: DMatrix<f64>,
}

impl WignerGrid {
    fn trapezoid<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let s = &self.spec;
        let mut total = 0.0;
        for i in 0..s.nx {
            let wx = if i == 0 || i == s.nx - 1 { 0.5 } else { 1.0 };
            let mut row = 0.0;
            for k in 0..s.np {
                let wp = if k == 0 || k == s.np - 1 { 0.5 } else { 1.0 };
                row += wp * f(self.values[(i, k)]);
            }
            total += wx * row;
        }
        total * s.dx() * s.dp()
    }

    /// `∫∫ W dx dp` by the 2-D trapezoidal rule.
    pub fn integral(&self) -> f64 {
        self.trapezoid(|w| w)
    }

    pub fn abs_integral(&self) -> f64 {
        self.trapezoid(f64::abs)
    }

    /// `∫ W(x, p) dp` at each grid `x`.
    pub fn x_marginal(&self) -> Vec<f64> {
        let s = &self.spec;
        (0..s.nx)
            .map(|i| {
                let mut acc = 0.0;
                for k in 0..s.np {
                    let wp = if k == 0 || k == s.np - 1 { 0.5 } else { 1.0 };
                    acc += wp * self.values[(i, k)];
                }
                acc * s.dp()
            })
            .collect()
    }

    /// Grid point with the smallest value.
    pub fn argmin(&self) -> (f64, f64, f64) {
        let (mut bi, mut bk, mut best) = (0, 0, f64::INFINITY);
        for i in 0..self.spec.nx {
            for k in 0..self.spec.np {
                if self.values[(i, k)] < best {
                    (bi, bk, best) = (i, k, self.values[(i, k)]);
                }
            }
        }
        (self.spec.x(bi), self.spec.p(bk), best)
    }
}

/// Residual imaginary part tolerated after summing `ρ_mn W_mn`.
const IMAG_TOL: f64 = 1e-8;

pub fn wigner_grid(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    let m = rho.matrix();
    let rows: Vec<(Vec<f64>, f64)> = (0..spec.nx)
        .into_par_iter()
        .map(|i| {
            let x = spec.x(i);
            let mut worst: f64 = 0.0;
            let row = (0..spec.np)
                .map(|k| {
                    let (w, im) = wigner_point(m, x, spec.p(k));
                    worst = worst.max(im);
                    w
                })
                .collect();
            (row, worst)
        })
        .collect();
    let residue = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    if residue > IMAG_TOL {
        return Err(Error::NonHermitian(residue));
    }
    let values = DMatrix::from_fn(spec.nx, spec.np, |i, k| rows[i].0[k]);
    Ok(WignerGrid { spec: *spec, values })
}

/// Largest tolerated deviation of `∫∫W` from one.
const NORM_TOL: f64 = 1e-2;

/// `N = ∫∫ (|W| − W) dx dp`.
pub fn integrated_negativity(g: &WignerGrid) -> Result<f64> {
    let total = g.integral();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::Unnormalized(total));
    }
    Ok(g.trapezoid(|w| w.abs() - w))
}

/// Wigner logarithmic negativity `ln ∫∫|W|`, evaluated as `ln(1 + N)` so that
/// quadrature error in `∫∫W` does not leak into states with `W ≥ 0`.
pub fn wln(g: &WignerGrid) -> Result<f64> {
    Ok(integrated_negativity(g)?.ln_1p())
}

/// Wigner function of `(1 − ρ₁)|0⟩⟨0| + ρ₁|1⟩⟨1|`.
pub fn mixture_wigner(rho1: f64, x: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho1) {
        return Err(invalid("rho1", format!("{rho1} outside [0, 1]")));
    }
    let r2 = x * x + p * p;
    Ok(FRAC_1_PI * (-r2).exp() * (1.0 + 2.0 * rho1 * (r2 - 1.0)))
}

/// `ln(4e^{−1/2} − 1)`, the WLN of a single photon.
pub fn single_photon_wln() -> f64 {
    (4.0 * (-0.5f64).exp() - 1.0).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::c;
    use crate::tomography::oscillator_wavefunctions;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn binom(n: f64, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, i| acc * (n - i as f64) / (i as f64 + 1.0))
    }

    /// Explicit series `Σ_j (−1)^j C(n+α, n−j) x^j / j!`.
    fn laguerre_series(n: usize, alpha: f64, x: f64) -> f64 {
        let mut fact = 1.0;
        let mut s = 0.0;
        for j in 0..=n {
            if j > 0 {
                fact *= j as f64;
            }
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * binom(n as f64 + alpha, n - j) * x.powi(j as i32) / fact;
        }
        s
    }

    #[test]
    fn laguerre_matches_series() {
        for n in 0..12 {
            for alpha in [0.0, 1.0, 3.0, 7.0] {
                for x in [0.0, 0.3, 2.5, 9.0] {
                    let a = laguerre(n, alpha, x);
                    let b = laguerre_series(n, alpha, x);
                    assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "L_{n}^{alpha}({x})");
                }
            }
        }
    }

    #[test]
    fn element_values() {
        assert_abs_diff_eq!(wigner_element(0, 0, 0.0, 0.0).re, FRAC_1_PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wigner_element(1, 1, 0.0, 0.0).re, -FRAC_1_PI, epsilon = 1e-9);
        for (m, n) in [(0, 3), (2, 5), (1, 4), (4, 4)] {
            let a = wigner_element(m, n, 0.4, -1.1);
            let b = wigner_element(n, m, 0.4, -1.1);
            assert_abs_diff_eq!((a - b.conj()).norm(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn element_matches_independent_series() {
        // direct evaluation with the explicit Laguerre series and factorials
        let direct = |m: usize, n: usize, x: f64, p: f64| {
            let k = n - m;
            let r2 = x * x + p * p;
            let fm: f64 = (1..=m).map(|v| v as f64).product();
            let fn_: f64 = (1..=n).map(|v| v as f64).product();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            c(x, p).powu(k as u32)
                * (FRAC_1_PI * (-r2).exp() * sign * (2f64.powi(k as i32) * fm / fn_).sqrt()
                    * laguerre_series(m, k as f64, 2.0 * r2))
        };
        for (m, n) in [(0, 1), (1, 3), (2, 2), (3, 7), (0, 10)] {
            for (x, p) in [(0.3, 0.2), (-1.2, 0.7), (2.0, -2.5)] {
                let a = wigner_element(m, n, x, p);
                let b = direct(m, n, x, p);
                assert_abs_diff_eq!((a - b).norm(), 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn grid_point_sum_matches_elements() {
        let rho = DensityMatrix::coherent(c(0.5, 0.8), 8);
        let g = wigner_grid(&rho, &GridSpec::square(3.0, 7)).unwrap();
        for i in 0..7 {
            for k in 0..7 {
                let (x, p) = (g.spec.x(i), g.spec.p(k));
                let mut w = c(0.0, 0.0);
                for m in 0..8 {
                    for n in 0..8 {
                        w += rho.get(m, n) * wigner_element(m, n, x, p);
                    }
                }
                assert_abs_diff_eq!(g.values[(i, k)], w.re, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn coherent_state_is_displaced_gaussian() {
        let alpha = c(0.7, -0.4);
        let rho = DensityMatrix::coherent(alpha, 25);
        let spec = GridSpec::square(4.0, 33);
        let g = wigner_grid(&rho, &spec).unwrap();
        let (x0, p0) = (2f64.sqrt() * alpha.re, 2f64.sqrt() * alpha.im);
        for i in 0..33 {
            for k in 0..33 {
                let (x, p) = (spec.x(i), spec.p(k));
                let expect = FRAC_1_PI * (-(x - x0).powi(2) - (p - p0).powi(2)).exp();
                assert_abs_diff_eq!(g.values[(i, k)], expect, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn vacuum_and_single_photon() {
        let spec = GridSpec::square(3.0, 13);
        let vac = wigner_grid(&DensityMatrix::fock(0, 4), &spec).unwrap();
        let one = wigner_grid(&DensityMatrix::fock(1, 4), &spec).unwrap();
        for i in 0..13 {
            for k in 0..13 {
                let r2 = spec.x(i).powi(2) + spec.p(k).powi(2);
                assert_abs_diff_eq!(vac.values[(i, k)], FRAC_1_PI * (-r2).exp(), epsilon = 1e-15);
                assert_abs_diff_eq!(
                    one.values[(i, k)],
                    FRAC_1_PI * (-r2).exp() * (2.0 * r2 - 1.0),
                    epsilon = 1e-14
                );
            }
        }
        assert_eq!(vac.argmin().2.min(0.0), 0.0);
    }

    #[test]
    fn default_grid_negativities() {
        let spec = GridSpec::default();
        let vac = wigner_grid(&DensityMatrix::fock(0, 6), &spec).unwrap();
        assert_eq!(wln(&vac).unwrap(), 0.0);
        assert_eq!(integrated_negativity(&vac).unwrap(), 0.0);

        let one = wigner_grid(&DensityMatrix::fock(1, 6), &spec).unwrap();
        assert_abs_diff_eq!(wln(&one).unwrap(), single_photon_wln(), epsilon = 1e-3);
        assert_abs_diff_eq!(wln(&one).unwrap(), 0.3549, epsilon = 1e-3);
        assert_abs_diff_eq!(integrated_negativity(&one).unwrap(), 4.0 * (-0.5f64).exp() - 2.0, epsilon = 1e-3);
        assert_abs_diff_eq!(one.integral(), 1.0, epsilon = 2e-3);

        let half = wigner_grid(&DensityMatrix::diagonal(&[0.5, 0.5]).unwrap(), &spec).unwrap();
        assert!(wln(&half).unwrap() < 1e-6);
    }

    #[test]
    fn single_photon_wln_by_radial_quadrature() {
        // ∫|W| = ∫_0^∞ |2u − 1| e^{−u} du with u = r²
        let f = |u: f64| (2.0 * u - 1.0).abs() * (-u).exp();
        // split at the kink u = 1/2 so Simpson sees smooth pieces
        let simpson = |a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            let mut s = f(a) + f(b);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
            }
            s * h / 3.0
        };
        let total = simpson(0.0, 0.5, 1000) + simpson(0.5, 40.0, 200_000);
        assert_abs_diff_eq!(total.ln(), single_photon_wln(), epsilon = 1e-9);
    }

    #[test]
    fn unnormalized_grid_is_rejected() {
        let g = wigner_grid(&DensityMatrix::fock(1, 3), &GridSpec::square(1.0, 21)).unwrap();
        assert!(matches!(wln(&g), Err(Error::Unnormalized(_))));
    }

    #[test]
    fn non_hermitian_input_is_rejected() {
        let mut m = DensityMatrix::fock(0, 3).into_matrix();
        m[(0, 1)] = c(0.3, 0.0);
        let rho = DensityMatrix::from_matrix_unchecked(m).unwrap();
        assert!(matches!(
            wigner_grid(&rho, &GridSpec::square(2.0, 9)),
            Err(Error::NonHermitian(_))
        ));
    }

    #[test]
    fn mixture_formula() {
        assert_abs_diff_eq!(mixture_wigner(0.0, 0.3, 0.4).unwrap(), FRAC_1_PI * (-0.25f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(mixture_wigner(0.6, 0.0, 0.0).unwrap(), -0.2 * FRAC_1_PI, epsilon = 1e-15);
        assert!(mixture_wigner(1.2, 0.0, 0.0).is_err());
        let spec = GridSpec::square(3.0, 31);
        for rho1 in [0.0, 0.3, 0.5, 0.7, 1.0] {
            let g = wigner_grid(&DensityMatrix::diagonal(&[1.0 - rho1, rho1, 0.0]).unwrap(), &spec).unwrap();
            for i in 0..31 {
                for k in 0..31 {
                    let w = mixture_wigner(rho1, spec.x(i), spec.p(k)).unwrap();
                    assert_abs_diff_eq!(g.values[(i, k)], w, epsilon = 1e-10);
                }
            }
            if rho1 > 0.5 {
                let (x, p, _) = g.argmin();
                assert_eq!((x, p), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn marginal_is_born_distribution() {
        let mut m = DensityMatrix::coherent(c(0.4, 0.3), 6).into_matrix() * c(0.6, 0.0);
        m += DensityMatrix::fock(2, 6).into_matrix() * c(0.4, 0.0);
        let rho = DensityMatrix::new(m).unwrap();
        let spec = GridSpec::square(6.0, 241);
        let g = wigner_grid(&rho, &spec).unwrap();
        let marg = g.x_marginal();
        for i in (0..241).step_by(10) {
            let psi = oscillator_wavefunctions(5, spec.x(i));
            let mut born = 0.0;
            for a in 0..6 {
                for b in 0..6 {
                    born += (rho.get(a, b) * psi[a] * psi[b]).re;
                }
            }
            assert_abs_diff_eq!(marg[i], born, epsilon = 1e-4);
        }
    }

    #[test]
    fn resolution_doubling_is_stable() {
        for rho in [
            DensityMatrix::fock(1, 5),
            DensityMatrix::diagonal(&[0.3, 0.6, 0.1]).unwrap(),
            DensityMatrix::coherent(c(0.5, 0.0), 10),
        ] {
            let spec = GridSpec::default();
            let a = wln(&wigner_grid(&rho, &spec).unwrap()).unwrap();
            let b = wln(&wigner_grid(&rho, &spec.refined()).unwrap()).unwrap();
            assert!((a - b).abs() < 1e-3);
        }
    }

    fn random_state(seed: u64, dim: usize) -> DensityMatrix {
        use rand::Rng;
        let mut g = crate::rng::stream(seed);
        let a = DMatrix::from_fn(dim, dim, |_, _| {
            c(g.gen::<f64>() - 0.5, g.gen::<f64>() - 0.5)
        });
        // suppress high Fock levels so the default grid holds the state
        let damp = DMatrix::from_fn(dim, dim, |i, k| c(if i == k { 0.5f64.powi(i as i32) } else { 0.0 }, 0.0));
        let b = &damp * a;
        DensityMatrix::normalized(&b * b.adjoint()).unwrap()
    }

    #[test]
    fn wln_identity_on_random_states() {
        let spec = GridSpec::square(5.0, 101);
        for s in 0..50 {
            let g = wigner_grid(&random_state(s, 6), &spec).unwrap();
            let n = integrated_negativity(&g).unwrap();
            let w = wln(&g).unwrap();
            assert_abs_diff_eq!(w, (n + 1.0).ln(), epsilon = 1e-9);
            assert!(w >= 0.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kernel_is_hermitian(m in 0usize..8, n in 0usize..8, x in -3.0f64..3.0, p in -3.0f64..3.0) {
            let a = wigner_element(m, n, x, p);
            let b = wigner_element(n, m, x, p);
            prop_assert!((a - b.conj()).norm() < 1e-14);
        }

        #[test]
        fn diagonal_elements_are_real(m in 0usize..10, x in -3.0f64..3.0, p in -3.0f64..3.0) {
            prop_assert_eq!(wigner_element(m, m, x, p).im, 0.0);
        }
    }
}
