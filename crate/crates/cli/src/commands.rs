use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use resfluor::analysis::{
    self, coherent_reflectance, field_displacement, incoherent_point, run_sweep, wigner_summary, PipelineConfig,
    SweepOptions,
};
use resfluor::dynamics::{sigma_minus_ss_analytic, ChannelSet, DriveParams};
use resfluor::io;
use resfluor::Error;

use crate::config::RunConfig;

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_NUMERICAL: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0} (output written)")]
    NotConverged(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NotConverged(_) => EXIT_NUMERICAL,
            CliError::Core(e) => match e {
                Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Format(_) => EXIT_IO,
                Error::StepSize { .. }
                | Error::DegenerateSteadyState(_)
                | Error::NonHermitian(_)
                | Error::Unnormalized(_) => EXIT_NUMERICAL,
                _ => EXIT_VALIDATION,
            },
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Everything needed to rerun a command and get byte-identical output.
#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    config: &'a RunConfig,
    resolved: Option<&'a PipelineConfig>,
    inputs: Vec<&'a Path>,
    outputs: Vec<&'a str>,
}

impl<'a> Manifest<'a> {
    fn new(command: &'a str, config: &'a RunConfig, resolved: Option<&'a PipelineConfig>) -> Self {
        Self {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: resolved.map(|c| c.seed),
            config,
            resolved,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        io::write_json(&dir.join("manifest.json"), self)?;
        Ok(())
    }
}

fn prepare(rc: &RunConfig) -> Result<(PipelineConfig, PathBuf)> {
    let cfg = rc.resolve()?;
    let dir = rc.output_dir();
    std::fs::create_dir_all(&dir)?;
    Ok((cfg, dir))
}

pub fn simulate(rc: &RunConfig) -> Result<()> {
    let (cfg, dir) = prepare(rc)?;
    let records = analysis::simulate(&cfg)?;
    io::write_records(&dir.join("records.csv"), &records)?;
    let mut m = Manifest::new("simulate", rc, Some(&cfg));
    m.outputs = vec!["records.csv"];
    m.write(&dir)?;
    println!("{} records written to {}", records.len(), dir.join("records.csv").display());
    Ok(())
}

pub fn reconstruct(rc: &RunConfig, records_path: &Path) -> Result<()> {
    let (cfg, dir) = prepare(rc)?;
    let records = io::read_records(records_path)?;
    let (h, r) = analysis::reconstruct(&cfg, &records)?;
    io::write_histograms(&dir.join("histograms.csv"), &h)?;
    io::write_state(&dir.join("state.json"), &r)?;
    let mut m = Manifest::new("reconstruct", rc, Some(&cfg));
    m.inputs = vec![records_path];
    m.outputs = vec!["histograms.csv", "state.json"];
    m.write(&dir)?;
    println!(
        "iterations {} converged {} final step {:e} log-likelihood {}",
        r.iterations, r.converged, r.final_step, r.loglikelihood
    );
    if !r.converged {
        return Err(CliError::NotConverged(format!(
            "reconstruction did not converge in {} iterations",
            r.iterations
        )));
    }
    Ok(())
}

pub fn wigner(rc: &RunConfig, state_path: &Path) -> Result<()> {
    let (cfg, dir) = prepare(rc)?;
    let rho = io::read_state(state_path)?;
    let w = wigner_summary(&rho, &cfg.grid)?;
    io::write_wigner(&dir.join("wigner.csv"), &dir.join("wigner.json"), &w)?;
    let mut m = Manifest::new("wigner", rc, Some(&cfg));
    m.inputs = vec![state_path];
    m.outputs = vec!["wigner.csv", "wigner.json"];
    m.write(&dir)?;
    println!("wln {} integrated negativity {}", w.wln, w.negativity);
    Ok(())
}

pub fn sweep(rc: &RunConfig, omegas: &[f64], durations: &[f64], stop_after: Option<usize>) -> Result<()> {
    let (cfg, dir) = prepare(rc)?;
    let opts = SweepOptions {
        checkpoint: Some(dir.join("sweep.checkpoint.jsonl")),
        stop_after,
    };
    let s = run_sweep(omegas, durations, &cfg, &opts)?;
    io::write_sweep(&dir.join("sweep.csv"), &dir.join("sweep.json"), &s)?;
    let mut m = Manifest::new("sweep", rc, Some(&cfg));
    m.outputs = vec!["sweep.csv", "sweep.json", "sweep.checkpoint.jsonl"];
    m.write(&dir)?;
    let done = s.wln.iter().flatten().filter(|w| w.is_some()).count();
    println!("{done} of {} sweep points finished", omegas.len() * durations.len());
    Ok(())
}

pub fn bootstrap(rc: &RunConfig, repeats: usize) -> Result<()> {
    let (cfg, dir) = prepare(rc)?;
    let report = analysis::bootstrap(&cfg, repeats)?;
    io::write_bootstrap(&dir.join("bootstrap.json"), &report)?;
    let mut m = Manifest::new("bootstrap", rc, Some(&cfg));
    m.outputs = vec!["bootstrap.json"];
    m.write(&dir)?;
    let (mean, sd) = analysis::mean_std(&report.wln_values);
    println!("wln mean {mean} sd {sd} over {repeats} repeats");
    let failed = report.converged.iter().filter(|c| !**c).count();
    if failed > 0 {
        return Err(CliError::NotConverged(format!("{failed} of {repeats} reconstructions did not converge")));
    }
    Ok(())
}

/// Ω runs over `omega_max · k / points` for `k = 1..=points`.
pub struct AnalyticArgs {
    pub gamma_phis: Vec<f64>,
    pub gamma: f64,
    pub omega_max: f64,
    pub points: usize,
    pub duration: f64,
    pub output_dir: Option<PathBuf>,
}

fn invalid(field: &'static str, reason: &str) -> CliError {
    CliError::Core(Error::InvalidParameter {
        field,
        reason: reason.into(),
    })
}

fn incoherent_table(a: &AnalyticArgs) -> Result<String> {
    let mut out = String::from("gamma_phi,incoherent_omega\n");
    for &g in &a.gamma_phis {
        // no root when dephasing dominates: left blank
        let root = incoherent_point(a.gamma, g).map(io::real).unwrap_or_default();
        writeln!(out, "{},{root}", io::real(g)).unwrap();
    }
    Ok(out)
}

fn omega_table(a: &AnalyticArgs) -> Result<String> {
    let mut out = String::from("omega");
    for g in &a.gamma_phis {
        for col in ["r", "sigma_minus_re", "sigma_minus_im", "displacement_re", "displacement_im"] {
            write!(out, ",{col}[gamma_phi={g}]").unwrap();
        }
    }
    out.push('\n');
    for i in 0..a.points {
        let omega = a.omega_max * (i + 1) as f64 / a.points as f64;
        let drive = DriveParams::real(omega);
        out.push_str(&io::real(omega));
        for &g in &a.gamma_phis {
            let ch = ChannelSet::semi_infinite(a.gamma).with_dephasing(g);
            let s = sigma_minus_ss_analytic(&drive, &ch)?;
            let d = field_displacement(&drive, &ch, a.duration)?;
            let r = coherent_reflectance(omega, a.gamma, g)?;
            for v in [r, s.re, s.im, d.re, d.im] {
                write!(out, ",{}", io::real(v)).unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn analytic(a: &AnalyticArgs) -> Result<()> {
    if a.gamma_phis.is_empty() {
        return Err(invalid("gamma_phi", "need at least one dephasing rate"));
    }
    if a.points == 0 {
        return Err(invalid("points", "need at least one point"));
    }
    if !(a.omega_max.is_finite() && a.omega_max > 0.0) {
        return Err(invalid("omega_max", "must be > 0"));
    }
    if !(a.duration.is_finite() && a.duration > 0.0) {
        return Err(invalid("T", "must be > 0"));
    }
    let roots = incoherent_table(a)?;
    let table = omega_table(a)?;
    print!("{roots}");
    match &a.output_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join("incoherent_points.csv"), &roots)?;
            std::fs::write(dir.join("analytic.csv"), &table)?;
            let config = RunConfig {
                omega: Some(a.omega_max),
                gamma1: Some(a.gamma),
                duration: Some(a.duration),
                output_dir: Some(dir.clone()),
                ..Default::default()
            };
            let mut m = Manifest::new("analytic", &config, None);
            m.outputs = vec!["incoherent_points.csv", "analytic.csv"];
            m.write(dir)?;
        }
        None => {
            println!();
            print!("{table}");
        }
    }
    Ok(())
}
