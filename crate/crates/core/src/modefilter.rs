//! Temporal mode functions `f(t)` selecting the wavepacket mode that is
//! measured out of the continuous output field.
//!
//! A [`ModeFilter`] is the continuous-time description. Trajectories use its
//! [`SampledFilter`] on the integration grid: one weight per time step, taken at
//! the step midpoint and rescaled so that `Σ f_i² dt = 1` holds exactly on that
//! grid. A sampled filter is a step function, so its overlap integrals are
//! exact sums.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterKind {
    Boxcar,
    ExponentialDecay,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeFilter {
    kind: FilterKind,
    t0: f64,
    duration: f64,
    rate: Option<f64>,
    /// Amplitude prefactor (boxcar, exponential) after normalization.
    norm: f64,
    /// Tabulated `(t, f)` pairs for custom filters.
    samples: Vec<(f64, f64)>,
}

impl ModeFilter {
    /// `f(t) = 1/√T` on `[t0, t0 + T]`.
    pub fn boxcar(t0: f64, duration: f64) -> Result<Self> {
        check_window(t0, duration)?;
        Ok(Self {
            kind: FilterKind::Boxcar,
            t0,
            duration,
            rate: None,
            norm: duration.sqrt().recip(),
            samples: Vec::new(),
        })
    }

    /// Matched filter for spontaneous emission, `f(t) ∝ e^{−γ(t−t0)/2}` on the window.
    pub fn exponential(t0: f64, rate: f64, duration: f64) -> Result<Self> {
        check_window(t0, duration)?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(invalid("rate", format!("decay rate must be > 0, got {rate}")));
        }
        // ∫_0^T c² e^{−γt} dt = c² (1 − e^{−γT}) / γ
        let norm = (rate / -(-rate * duration).exp_m1()).sqrt();
        Ok(Self {
            kind: FilterKind::ExponentialDecay,
            t0,
            duration,
            rate: Some(rate),
            norm,
            samples: Vec::new(),
        })
    }

    /// Tabulated filter, linearly interpolated and renormalized by the
    /// trapezoidal rule. Times must be strictly increasing.
    pub fn custom(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid("samples", "need at least two (t, f) pairs"));
        }
        if samples.iter().any(|(t, f)| !t.is_finite() || !f.is_finite()) {
            return Err(invalid("samples", "non-finite value"));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("samples", "times must be strictly increasing"));
        }
        let norm_sq: f64 = samples
            .windows(2)
            .map(|w| trapezoid_sq(w[0], w[1]))
            .sum();
        if norm_sq <= 0.0 {
            return Err(invalid("samples", "filter is identically zero"));
        }
        let s = norm_sq.sqrt().recip();
        let t0 = samples[0].0;
        let duration = samples[samples.len() - 1].0 - t0;
        Ok(Self {
            kind: FilterKind::Custom,
            t0,
            duration,
            rate: None,
            norm: 1.0,
            samples: samples.into_iter().map(|(t, f)| (t, f * s)).collect(),
        })
    }

    /// Reads a custom filter from CSV with header `t,f`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            t: f64,
            f: f64,
        }
        let mut rdr = csv::Reader::from_reader(reader);
        let rows: Vec<(f64, f64)> = rdr
            .deserialize::<Row>()
            .map(|r| r.map(|r| (r.t, r.f)))
            .collect::<std::result::Result<_, _>>()?;
        Self::custom(rows)
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn rate(&self) -> Option<f64> {
        self.rate
    }

    /// The same filter shape moved to start at `t0`.
    pub fn shifted_to(&self, t0: f64) -> Self {
        let dt = t0 - self.t0;
        let mut out = self.clone();
        out.t0 = t0;
        for s in &mut out.samples {
            s.0 += dt;
        }
        out
    }

    pub fn value(&self, t: f64) -> f64 {
        let end = self.t0 + self.duration;
        if t < self.t0 || t > end {
            return 0.0;
        }
        match self.kind {
            FilterKind::Boxcar => self.norm,
            FilterKind::ExponentialDecay => {
                self.norm * (-0.5 * self.rate.unwrap_or(0.0) * (t - self.t0)).exp()
            }
            FilterKind::Custom => {
                let i = self.samples.partition_point(|(ti, _)| *ti <= t);
                if i == 0 {
                    return self.samples[0].1;
                }
                if i >= self.samples.len() {
                    return self.samples[self.samples.len() - 1].1;
                }
                let (t1, f1) = self.samples[i - 1];
                let (t2, f2) = self.samples[i];
                f1 + (f2 - f1) * (t - t1) / (t2 - t1)
            }
        }
    }

    /// `∫ f(t)² dt` of the continuous filter.
    pub fn norm_sq(&self) -> f64 {
        match self.kind {
            FilterKind::Boxcar => self.norm * self.norm * self.duration,
            FilterKind::ExponentialDecay => {
                let g = self.rate.unwrap_or(1.0);
                self.norm * self.norm * -(-g * self.duration).exp_m1() / g
            }
            FilterKind::Custom => self.samples.windows(2).map(|w| trapezoid_sq(w[0], w[1])).sum(),
        }
    }

    /// Samples the filter on the step grid `t0 + (i + ½) dt`, `i < round(T/dt)`.
    pub fn sample(&self, dt: f64) -> Result<SampledFilter> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid("dt", "time step must be > 0"));
        }
        let n = (self.duration / dt).round() as usize;
        if n == 0 {
            return Err(invalid("dt", "time step exceeds the filter duration"));
        }
        let mut weights: Vec<f64> = (0..n)
            .map(|i| self.value(self.t0 + (i as f64 + 0.5) * dt))
            .collect();
        let sq: f64 = weights.iter().map(|w| w * w).sum::<f64>() * dt;
        if sq <= 0.0 {
            return Err(invalid("filter", "filter vanishes on the sampling grid"));
        }
        let s = sq.sqrt().recip();
        weights.iter_mut().for_each(|w| *w *= s);
        Ok(SampledFilter {
            start: self.t0,
            dt,
            weights,
        })
    }
}

fn check_window(t0: f64, duration: f64) -> Result<()> {
    if !t0.is_finite() {
        return Err(invalid("t0", "start time must be finite"));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(invalid("T", format!("duration must be > 0, got {duration}")));
    }
    Ok(())
}

/// Exact `∫ f²` of the linear interpolant between two samples.
fn trapezoid_sq((t1, f1): (f64, f64), (t2, f2): (f64, f64)) -> f64 {
    (t2 - t1) * (f1 * f1 + f1 * f2 + f2 * f2) / 3.0
}

/// A filter discretized on a time grid: weight `weights[i]` applies to the
/// step `[start + i dt, start + (i+1) dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFilter {
    pub start: f64,
    pub dt: f64,
    pub weights: Vec<f64>,
}

impl SampledFilter {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>() * self.dt
    }
}

/// Mode overlap `|∫ a(t) b(t) dt|²` of two filters sampled on a common grid.
pub fn overlap(a: &SampledFilter, b: &SampledFilter) -> Result<f64> {
    if (a.dt - b.dt).abs() > 1e-12 * a.dt.max(b.dt) {
        return Err(Error::GridMismatch(format!("dt {} vs {}", a.dt, b.dt)));
    }
    let offset = (b.start - a.start) / a.dt;
    let shift = offset.round();
    if (offset - shift).abs() > 1e-6 {
        return Err(Error::GridMismatch(format!(
            "start times {} and {} are not on a common grid",
            a.start, b.start
        )));
    }
    let shift = shift as i64;
    let mut acc = 0.0;
    for (i, wa) in a.weights.iter().enumerate() {
        let j = i as i64 - shift;
        if j >= 0 && (j as usize) < b.weights.len() {
            acc += wa * b.weights[j as usize];
        }
    }
    let amp = acc * a.dt;
    Ok(amp * amp)
}
