//! File formats: trajectory records, histograms, reconstructed states, Wigner
//! grids, sweep tables and bootstrap reports.
//!
//! CSV files are UTF-8 with a header row. Reals are written as `{:.16e}`
//! (17 significant digits), which round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{BootstrapReport, SweepResult, WignerSummary};
use crate::error::{Error, Result};
use crate::qcore::DensityMatrix;
use crate::tomography::{HistogramSet, MleResult};
use crate::trajectory::TrajectoryRecord;
use crate::wigner::GridSpec;

pub const RECORDS_HEADER: [&str; 3] = ["theta_rad", "J", "seed"];
pub const HISTOGRAM_HEADER: [&str; 4] = ["theta_rad", "bin_left", "bin_right", "count"];
pub const WIGNER_HEADER: [&str; 3] = ["x", "p", "W"];
pub const SWEEP_HEADER: [&str; 3] = ["omega", "T", "wln"];

pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn check_header(rdr: &mut csv::Reader<File>, expected: &[&str], path: &Path) -> Result<()> {
    let found = rdr.headers()?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "{}: expected header `{}`, found `{}`",
            path.display(),
            expected.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse<T: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: cannot parse {what} from `{field}`")))
}

pub fn write_records(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(RECORDS_HEADER)?;
    for r in records {
        w.write_record([real(r.theta), real(r.j), r.seed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(&mut rdr, &RECORDS_HEADER, path)?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != 3 {
            return Err(Error::Format(format!("line {line}: expected 3 fields, found {}", row.len())));
        }
        out.push(TrajectoryRecord {
            theta: parse(&row[0], "theta_rad", line)?,
            j: parse(&row[1], "J", line)?,
            seed: parse(&row[2], "seed", line)?,
            final_state: None,
        });
    }
    Ok(out)
}

pub fn write_histograms(path: &Path, h: &HistogramSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(HISTOGRAM_HEADER)?;
    for (theta, counts) in h.thetas.iter().zip(&h.counts) {
        for (b, count) in counts.iter().enumerate() {
            w.write_record([real(*theta), real(h.edges[b]), real(h.edges[b + 1]), count.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionMetadata {
    pub iterations: usize,
    pub converged: bool,
    pub final_frobenius_step: f64,
    pub loglikelihood: f64,
}

/// A reconstructed state with its convergence record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFile {
    pub state: DensityMatrix,
    pub metadata: ReconstructionMetadata,
}

impl StateFile {
    pub fn from_result(r: &MleResult) -> Self {
        Self {
            state: r.state.clone(),
            metadata: ReconstructionMetadata {
                iterations: r.iterations,
                converged: r.converged,
                final_frobenius_step: r.final_step,
                loglikelihood: r.loglikelihood,
            },
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?)
}

pub fn write_state(path: &Path, r: &MleResult) -> Result<()> {
    write_json(path, &StateFile::from_result(r))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StateInput {
    File(StateFile),
    Bare(DensityMatrix),
}

/// Reads either a state file or a bare density-matrix JSON object.
pub fn read_state(path: &Path) -> Result<DensityMatrix> {
    let s = match read_json::<StateInput>(path)? {
        StateInput::File(f) => f.state,
        StateInput::Bare(m) => m,
    };
    s.validate(1e-8)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerSidecar {
    pub grid: GridSpec,
    pub wln: f64,
    pub integrated_negativity: f64,
}

/// Writes the grid as `x,p,W` rows (x outer, p inner) and the summary sidecar.
pub fn write_wigner(csv_path: &Path, json_path: &Path, w: &WignerSummary) -> Result<()> {
    let spec = w.grid.spec;
    let mut out = csv::Writer::from_writer(create(csv_path)?);
    out.write_record(WIGNER_HEADER)?;
    for i in 0..spec.nx {
        for k in 0..spec.np {
            out.write_record([real(spec.x(i)), real(spec.p(k)), real(w.grid.values[(i, k)])])?;
        }
    }
    out.flush()?;
    write_json(
        json_path,
        &WignerSidecar {
            grid: spec,
            wln: w.wln,
            integrated_negativity: w.negativity,
        },
    )
}

/// Writes `omega,T,wln` rows; unfinished or failed points leave `wln` empty.
pub fn write_sweep(csv_path: &Path, json_path: &Path, s: &SweepResult) -> Result<()> {
    let mut out = csv::Writer::from_writer(create(csv_path)?);
    out.write_record(SWEEP_HEADER)?;
    for (i, omega) in s.omegas.iter().enumerate() {
        for (k, t) in s.ts.iter().enumerate() {
            let w = s.wln[i][k].map(real).unwrap_or_default();
            out.write_record([real(*omega), real(*t), w])?;
        }
    }
    out.flush()?;
    write_json(json_path, &s.metadata)
}

/// Reads a sweep table back into `(omega, T, wln)` rows.
pub fn read_sweep_rows(path: &Path) -> Result<Vec<(f64, f64, Option<f64>)>> {
    let mut rdr = csv::Reader::from_path(path)?;
    check_header(&mut rdr, &SWEEP_HEADER, path)?;
    let mut rows = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let wln = if row[2].trim().is_empty() {
            None
        } else {
            Some(parse(&row[2], "wln", line)?)
        };
        rows.push((parse(&row[0], "omega", line)?, parse(&row[1], "T", line)?, wln));
    }
    Ok(rows)
}

pub fn write_bootstrap(path: &Path, r: &BootstrapReport) -> Result<()> {
    write_json(path, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{wigner_summary, SweepMetadata};
    use proptest::prelude::*;

    fn record(theta: f64, j: f64, seed: u64) -> TrajectoryRecord {
        TrajectoryRecord {
            theta,
            j,
            seed,
            final_state: None,
        }
    }

    proptest! {
        #[test]
        fn records_round_trip_exactly(rows in prop::collection::vec((-10.0..10.0f64, -1e3..1e3f64, any::<u64>()), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("records.csv");
            let recs: Vec<_> = rows.iter().map(|&(t, j, s)| record(t, j, s)).collect();
            write_records(&path, &recs).unwrap();
            let back = read_records(&path).unwrap();
            prop_assert_eq!(back, recs);
        }
    }

    #[test]
    fn record_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_records(&path, &[record(0.5, -1.25, 9)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "theta_rad,J,seed\n5.0000000000000000e-1,-1.2500000000000000e0,9\n");
    }

    #[test]
    fn wrong_header_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "theta,J,seed\n0,0,0\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
        std::fs::write(&path, "theta_rad,J,seed\n0,abc,0\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
    }

    #[test]
    fn histogram_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let recs = [record(0.0, 0.1, 0), record(0.0, -0.1, 1), record(1.0, 0.7, 2)];
        let h = crate::tomography::build_histograms(&recs, &[-1.0, 0.0, 1.0]).unwrap();
        write_histograms(&path, &h).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "theta_rad,bin_left,bin_right,count");
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(lines[1].ends_with(",1") && lines[2].ends_with(",1"));
        assert!(lines[3].ends_with(",0") && lines[4].ends_with(",1"));
    }

    #[test]
    fn state_file_and_bare_matrix_both_load() {
        let dir = tempfile::tempdir().unwrap();
        let rho = DensityMatrix::fock(1, 3);
        let bare = dir.path().join("bare.json");
        write_json(&bare, &rho).unwrap();
        assert_eq!(read_state(&bare).unwrap(), rho);

        let full = dir.path().join("state.json");
        let r = MleResult {
            state: rho.clone(),
            iterations: 12,
            converged: true,
            final_step: 1e-7,
            loglikelihood: -3.5,
            clamped: false,
            likelihood_trace: vec![],
        };
        write_state(&full, &r).unwrap();
        assert_eq!(read_state(&full).unwrap(), rho);
        let v: serde_json::Value = read_json(&full).unwrap();
        assert_eq!(v["metadata"]["iterations"], 12);
        assert_eq!(v["metadata"]["final_frobenius_step"], 1e-7);
    }

    #[test]
    fn wigner_csv_has_one_row_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::square(5.0, 21);
        let w = wigner_summary(&DensityMatrix::fock(0, 2), &spec).unwrap();
        let (c, j) = (dir.path().join("w.csv"), dir.path().join("w.json"));
        write_wigner(&c, &j, &w).unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap().lines().count(), 1 + 21 * 21);
        let side: WignerSidecar = read_json(&j).unwrap();
        assert_eq!(side.grid, spec);
        assert_eq!(side.wln, w.wln);
    }

    #[test]
    fn sweep_missing_points_are_blank() {
        let dir = tempfile::tempdir().unwrap();
        let s = SweepResult {
            omegas: vec![0.1, 0.2],
            ts: vec![1.0],
            wln: vec![vec![Some(0.0)], vec![None]],
            metadata: SweepMetadata {
                trajectories: 10,
                angles: 4,
                seed: 5,
            },
        };
        let (c, j) = (dir.path().join("s.csv"), dir.path().join("s.json"));
        write_sweep(&c, &j, &s).unwrap();
        let rows = read_sweep_rows(&c).unwrap();
        assert_eq!(rows, vec![(0.1, 1.0, Some(0.0)), (0.2, 1.0, None)]);
        let meta: SweepMetadata = read_json(&j).unwrap();
        assert_eq!(meta, s.metadata);
    }
}
