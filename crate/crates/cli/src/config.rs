use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use resfluor::analysis::{FilterChoice, PipelineConfig, RateScale};
use resfluor::dynamics::{ChannelSet, DriveParams, Setup};
use resfluor::trajectory::{default_angles, Scheme, WaitMode};
use resfluor::wigner::GridSpec;
use resfluor::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SetupArg {
    Infinite,
    SemiInfinite,
}

impl From<SetupArg> for Setup {
    fn from(s: SetupArg) -> Self {
        match s {
            SetupArg::Infinite => Setup::Infinite,
            SetupArg::SemiInfinite => Setup::SemiInfinite,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FilterArg {
    Boxcar,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum WaitArg {
    Stochastic,
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    EulerMaruyama,
    PositiveMap,
}

/// Run parameters. The JSON config file uses the same flat keys as the flags
/// (with `_` for `-`); flags given on the command line override the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setup: Option<SetupArg>,
    /// Drive strength |Ω| in units of γ.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// Drive phase φ in radians.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    /// Monitored radiative rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    /// Unmonitored radiative rate (infinite waveguide only).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_phi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_nr: Option<f64>,
    /// Radiative rate in MHz; enables physical units for the two rates below.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radiative_mhz: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dephasing_khz: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nonradiative_khz: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Start of the integration window.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    /// Integration time.
    #[arg(long = "T", visible_alias = "duration")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Trajectories per angle.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectories: Option<usize>,
    /// Number of quadrature angles, evenly spaced over [0, π/2).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angles: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Histogram range as `x_min,x_max`.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub range: Option<Vec<f64>>,
    /// Fock-space cutoff N_max.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    /// Quadrature points per histogram bin.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subdivisions: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterArg>,
    /// Amplitude decay rate of the exponential filter.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter_rate: Option<f64>,
    /// Add the reflected drive to the photocurrent.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include_drive: Option<bool>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wait: Option<WaitArg>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeArg>,
    /// Wigner grid half-width.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_half: Option<f64>,
    /// Wigner grid points per axis.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[arg(long, short = 'o')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($f:ident),* $(,)?) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> resfluor::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| invalid("config", format!("{}: {e}", path.display())))
    }

    /// `self` with every field set in `flags` replaced.
    pub fn overlay(mut self, flags: &RunConfig) -> Self {
        overlay!(
            self, flags, setup, omega, phase, gamma1, gamma2, gamma_phi, gamma_nr, radiative_mhz, dephasing_khz,
            nonradiative_khz, dt, t0, duration, trajectories, angles, bins, range, cutoff, subdivisions, tol,
            max_iter, seed, filter, filter_rate, include_drive, wait, scheme, grid_half, grid_points, output_dir,
        );
        self
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("resfluor-out"))
    }

    fn channels(&self, setup: Setup) -> resfluor::Result<ChannelSet> {
        let scaled = self.radiative_mhz.is_some() || self.dephasing_khz.is_some() || self.nonradiative_khz.is_some();
        let mut ch = if scaled {
            let Some(radiative_mhz) = self.radiative_mhz else {
                return Err(invalid("radiative_mhz", "required when rates are given in kHz"));
            };
            if self.gamma_phi.is_some() {
                return Err(invalid("gamma_phi", "conflicts with dephasing_khz; give one or the other"));
            }
            if self.gamma_nr.is_some() {
                return Err(invalid("gamma_nr", "conflicts with nonradiative_khz; give one or the other"));
            }
            RateScale {
                radiative_mhz,
                dephasing_khz: self.dephasing_khz.unwrap_or(0.0),
                nonradiative_khz: self.nonradiative_khz.unwrap_or(0.0),
            }
            .channels(setup)?
        } else {
            let base = match setup {
                Setup::SemiInfinite => ChannelSet::semi_infinite(1.0),
                Setup::Infinite => ChannelSet::infinite(0.5, 0.5),
            };
            base.with_dephasing(self.gamma_phi.unwrap_or(0.0))
                .with_nonradiative(self.gamma_nr.unwrap_or(0.0))
        };
        if let Some(g) = self.gamma1 {
            ch.gamma1 = g;
        }
        if let Some(g) = self.gamma2 {
            ch.gamma2 = g;
        }
        ch.validate()?;
        Ok(ch)
    }

    /// Fills defaults and validates; errors name the offending field.
    pub fn resolve(&self) -> resfluor::Result<PipelineConfig> {
        let d = PipelineConfig::default();
        let setup: Setup = self.setup.unwrap_or(SetupArg::SemiInfinite).into();
        let channels = self.channels(setup)?;
        let drive = DriveParams::new(self.omega.unwrap_or(d.drive.omega_mag), self.phase.unwrap_or(0.0))?;
        let range = match self.range.as_deref() {
            None => d.range,
            Some(&[lo, hi]) => (lo, hi),
            Some(r) => return Err(invalid("range", format!("expected [x_min, x_max], got {} values", r.len()))),
        };
        let angles = match self.angles {
            Some(0) => return Err(invalid("angles", "need at least one angle")),
            Some(n) => default_angles(n),
            None => d.angles.clone(),
        };
        let filter = match self.filter.unwrap_or(FilterArg::Boxcar) {
            FilterArg::Boxcar => {
                if self.filter_rate.is_some() {
                    return Err(invalid("filter_rate", "only used with --filter exponential"));
                }
                FilterChoice::Boxcar
            }
            FilterArg::Exponential => FilterChoice::Exponential {
                rate: self.filter_rate.unwrap_or(1.0),
            },
        };
        let grid_half = self.grid_half.unwrap_or(d.grid.x_max);
        let grid_points = self.grid_points.unwrap_or(d.grid.nx);
        let cfg = PipelineConfig {
            drive,
            channels,
            duration: self.duration.unwrap_or(d.duration),
            dt: self.dt.unwrap_or(d.dt),
            t0: self.t0.unwrap_or(d.t0),
            filter,
            trajectories: self.trajectories.unwrap_or(d.trajectories),
            angles,
            bins: self.bins.unwrap_or(d.bins),
            range,
            cutoff: self.cutoff.unwrap_or(d.cutoff),
            subdivisions: self.subdivisions.unwrap_or(d.subdivisions),
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            grid: GridSpec::square(grid_half, grid_points),
            seed: self.seed.unwrap_or(d.seed),
            wait: match self.wait.unwrap_or(WaitArg::Stochastic) {
                WaitArg::Stochastic => WaitMode::Stochastic,
                WaitArg::Unconditional => WaitMode::Unconditional,
            },
            scheme: match self.scheme.unwrap_or(SchemeArg::PositiveMap) {
                SchemeArg::EulerMaruyama => Scheme::EulerMaruyama,
                SchemeArg::PositiveMap => Scheme::PositiveMap,
            },
            include_drive: self.include_drive.unwrap_or(false),
        };
        if !(grid_half.is_finite() && grid_half > 0.0) {
            return Err(invalid("grid_half", "half-width must be > 0"));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
