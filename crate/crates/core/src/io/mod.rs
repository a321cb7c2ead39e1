//! Problem files, trajectory CSV, certificate JSON and the command-line
//! driver.

mod cli;
pub mod schema;

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::ocp::{ControlProblem, Trajectory};
use crate::pmp::PmpCertificate;

pub use cli::{run_cli, run_cli_with};
pub use schema::{ProblemFile, SCHEMA_VERSION};

/// Reads and validates a problem file.
pub fn parse_problem(path: impl AsRef<Path>) -> Result<ControlProblem> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_problem_str(&text)?)
}

pub fn parse_problem_str(text: &str) -> std::result::Result<ControlProblem, ParseError> {
    ProblemFile::from_json(text)?.build()
}

/// The problem file of a parsed problem. Problems assembled in code from
/// closures have no file form.
pub fn serialize_problem(problem: &ControlProblem) -> Result<String> {
    problem
        .problem_file()
        .map(ProblemFile::to_json)
        .ok_or_else(|| Error::Unsupported("problem was not built from a problem file".into()))
}

/// One row per `t = 0..T` with columns `t, x_0.., u_0..`; the final row has
/// empty control fields.
pub fn trajectory_to_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map(|x| x.len()).unwrap_or(0);
    let m = traj.controls.first().map(|u| u.len()).unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    w.write_record(&header).expect("in-memory write");
    for (t, x) in traj.states.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| v.to_string()));
        match traj.controls.get(t) {
            Some(u) => row.extend(u.iter().map(|v| v.to_string())),
            None => row.extend((0..m).map(|_| String::new())),
        }
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn trajectory_from_csv(text: &str, state_dim: usize, control_dim: usize) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let bad = |line: usize, msg: String| Error::Parse(ParseError::new(format!("/{line}"), msg));
    let mut states = Vec::new();
    let mut controls = Vec::new();
    let mut ended = false;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        if rec.len() != 1 + state_dim + control_dim {
            return Err(bad(line, format!("expected {} columns, found {}", 1 + state_dim + control_dim, rec.len())));
        }
        if ended {
            return Err(bad(line, "rows after the final (control-free) row".into()));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i].trim().parse::<f64>().map_err(|e| bad(line, format!("column {i}: {e}")))
        };
        states.push(DVector::from_iterator(state_dim, (1..=state_dim).map(num).collect::<Result<Vec<_>>>()?));
        if (0..control_dim).all(|k| rec[1 + state_dim + k].trim().is_empty()) {
            ended = true;
        } else {
            let cols = (1 + state_dim..1 + state_dim + control_dim).map(num).collect::<Result<Vec<_>>>()?;
            controls.push(DVector::from_vec(cols));
        }
    }
    if !ended && control_dim > 0 {
        return Err(Error::Parse(ParseError::new("", "missing final state row")));
    }
    if control_dim == 0 {
        controls = vec![DVector::zeros(0); states.len().saturating_sub(1)];
    }
    Trajectory::new(states, controls)
}

/// JSON form of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub adjoints: Vec<Vec<f64>>,
    pub state_multipliers: Vec<Vec<f64>>,
    pub abnormal: f64,
    pub freq_multiplier: Vec<f64>,
}

impl From<&PmpCertificate> for CertificateFile {
    fn from(c: &PmpCertificate) -> Self {
        let rows = |v: &[DVector<f64>]| v.iter().map(|x| x.iter().copied().collect()).collect();
        CertificateFile {
            adjoints: rows(&c.adjoints),
            state_multipliers: rows(&c.state_multipliers),
            abnormal: c.abnormal,
            freq_multiplier: c.freq_multiplier.iter().copied().collect(),
        }
    }
}

impl From<CertificateFile> for PmpCertificate {
    fn from(c: CertificateFile) -> Self {
        let vecs = |v: Vec<Vec<f64>>| v.into_iter().map(DVector::from_vec).collect();
        PmpCertificate {
            adjoints: vecs(c.adjoints),
            state_multipliers: vecs(c.state_multipliers),
            abnormal: c.abnormal,
            freq_multiplier: DVector::from_vec(c.freq_multiplier),
        }
    }
}

pub fn certificate_to_json(cert: &PmpCertificate) -> String {
    serde_json::to_string_pretty(&CertificateFile::from(cert)).expect("certificates serialize")
}

pub fn certificate_from_json(text: &str) -> Result<PmpCertificate> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: CertificateFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let ptr = format!("/{}", e.path()).replace('.', "/");
        Error::Parse(ParseError::new(if ptr == "/." { String::new() } else { ptr }, e.into_inner().to_string()))
    })?;
    Ok(file.into())
}
