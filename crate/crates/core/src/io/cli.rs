use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::frequency::{build_freq_matrices, dft, FrequencyConstraintMatrices, FrequencySpec};
use crate::io::{
    certificate_from_json, certificate_to_json, parse_problem, trajectory_from_csv, trajectory_to_csv, CertificateFile,
};
use crate::ocp::Trajectory;
use crate::pmp::{recover_multipliers_with, verify_with_tol, RecoveryOptions, DEFAULT_TOL};
use crate::solvers::{solve, Method, SolveOptions, SolveStatus};

const TOL_ENV: &str = "GEOPMP_TOL";

const EXIT_OK: i32 = 0;
const EXIT_FAIL: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "geopmp", version, about = "Discrete-time optimal control on manifolds: verify, solve, inspect")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the necessary conditions on a trajectory.
    Verify(VerifyArgs),
    /// Solve a problem and report the certificate of the solution.
    Solve(SolveArgs),
    /// Print the frequency constraint matrices as JSON.
    FreqMatrices(FreqArgs),
    /// Print the DFT of a sequence as CSV (bin, re, im, abs).
    Dft(DftArgs),
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long)]
    trajectory: PathBuf,
    /// Certificate to check; multipliers are recovered when omitted.
    #[arg(long)]
    certificate: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    /// grid, descent or shooting. Defaults to grid when applicable.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    grid_res: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    starts: Option<usize>,
    /// Verification tolerance for the attached report.
    #[arg(long)]
    tol: Option<f64>,
    /// Trajectory CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    certificate_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FreqArgs {
    #[arg(long, conflicts_with_all = ["horizon", "allowed"])]
    problem: Option<PathBuf>,
    #[arg(long, requires = "allowed")]
    horizon: Option<usize>,
    /// Allowed bins of one control component, comma separated. Repeat once
    /// per component.
    #[arg(long, requires = "horizon")]
    allowed: Vec<String>,
}

#[derive(Debug, Args)]
struct DftArgs {
    #[arg(long)]
    input: PathBuf,
    /// Column to transform, by header name or 0-based index.
    #[arg(long)]
    column: Option<String>,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(String),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::Io(_) => Failure::Usage(e.to_string()),
            other => Failure::Failed(other.to_string()),
        }
    }
}

type Outcome = std::result::Result<i32, Failure>;

/// Runs the command line and returns the process exit code: 0 on a passing
/// verification or converged solve, 1 on failure or non-convergence, 2 on
/// usage and parse errors.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_cli_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Verify(a) => run_verify(a, out, err),
        Command::Solve(a) => run_solve(a, out, err),
        Command::FreqMatrices(a) => run_freq(a, out),
        Command::Dft(a) => run_dft(a, out),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Failed(msg)) => {
            let _ = writeln!(err, "failed: {msg}");
            EXIT_FAIL
        }
    }
}

fn tolerance(flag: Option<f64>) -> std::result::Result<f64, Failure> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|e| Failure::Usage(format!("{TOL_ENV}={s}: {e}")))?,
            Err(_) => DEFAULT_TOL,
        },
    };
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Failure::Usage(format!("tolerance must be positive, got {tol}")));
    }
    Ok(tol)
}

fn read(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> std::result::Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Failed(e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| Failure::Usage(e.to_string()))
}

fn rows(v: &[DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.iter().copied().collect()).collect()
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn trajectory_json(traj: &Trajectory) -> serde_json::Value {
    json!({ "states": rows(&traj.states), "controls": rows(&traj.controls) })
}

fn run_verify(a: VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let tol = tolerance(a.tol)?;
    let problem = parse_problem(&a.problem)?;
    let traj = trajectory_from_csv(&read(&a.trajectory)?, problem.state_dim(), problem.control_dim())?;
    if traj.horizon() != problem.horizon() {
        return Err(Failure::Usage(format!(
            "{}: trajectory has {} controls, the problem horizon is {}",
            a.trajectory.display(),
            traj.horizon(),
            problem.horizon()
        )));
    }
    let (cert, report, recovered) = match &a.certificate {
        Some(path) => {
            let cert = certificate_from_json(&read(path)?)?;
            let report = verify_with_tol(&problem, &traj, &cert, tol)?;
            (cert, report, false)
        }
        None => {
            let opts = RecoveryOptions {
                tolerance: tol,
                ..RecoveryOptions::default()
            };
            let rec = recover_multipliers_with(&problem, &traj, &opts)?;
            (rec.certificate, rec.report, true)
        }
    };
    let passed = report.passed();
    emit(
        out,
        &json!({
            "passed": passed,
            "recovered": recovered,
            "report": report,
            "certificate": CertificateFile::from(&cert),
        }),
    )?;
    let r = &report.residuals;
    let _ = writeln!(
        err,
        "{}: feasible={} adjoint={:.3e} transversality={:.3e} stationarity={:.3e} complementarity={:.3e} mass={:.3} (tol {:.1e})",
        if passed { "PASS" } else { "FAIL" },
        report.feasible,
        r.adjoint_dynamics,
        r.transversality,
        r.stationarity,
        r.complementarity,
        r.nontriviality_mass,
        tol
    );
    Ok(if passed { EXIT_OK } else { EXIT_FAIL })
}

fn run_solve(a: SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let verify_tol = tolerance(a.tol)?;
    let problem = parse_problem(&a.problem)?;
    let method = match &a.method {
        Some(s) => s.parse::<Method>().map_err(|e| Failure::Usage(e.to_string()))?,
        None => Method::direct_for(&problem),
    };
    let defaults = SolveOptions::default();
    let opts = SolveOptions {
        method,
        max_iters: a.max_iters.unwrap_or(defaults.max_iters),
        grid_res: a.grid_res.unwrap_or(defaults.grid_res),
        seed: a.seed,
        starts: a.starts.unwrap_or(defaults.starts),
        verify_tol,
        ..defaults
    };
    let result = match solve(&problem, &opts) {
        Ok(r) => r,
        Err(e @ Error::InvalidProblem(_)) => return Err(Failure::Usage(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &a.out {
        write_file(path, &trajectory_to_csv(&result.trajectory))?;
    }
    if let Some(path) = &a.certificate_out {
        write_file(path, &certificate_to_json(&result.certificate))?;
    }
    let converged = result.status == SolveStatus::Converged;
    let passed = result.pmp_report.passed();
    emit(
        out,
        &json!({
            "method": result.method,
            "status": result.status,
            "objective": result.objective,
            "iterations": result.iterations,
            "objective_history": result.objective_history,
            "trajectory": trajectory_json(&result.trajectory),
            "certificate": CertificateFile::from(&result.certificate),
            "pmp_report": result.pmp_report,
        }),
    )?;
    let _ = writeln!(
        err,
        "{:?} via {:?}: objective {:.12e} after {} iterations; conditions {}",
        result.status,
        result.method,
        result.objective,
        result.iterations,
        if passed { "pass" } else { "fail" }
    );
    Ok(if converged && passed { EXIT_OK } else { EXIT_FAIL })
}

fn parse_bins(text: &str) -> std::result::Result<BTreeSet<usize>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|e| Failure::Usage(format!("--allowed `{text}`: {e}"))))
        .collect()
}

fn freq_json(mats: &FrequencyConstraintMatrices) -> serde_json::Value {
    json!({
        "horizon": mats.horizon(),
        "control_dim": mats.control_dim,
        "ell": mats.ell,
        "matrices": mats.matrices.iter().map(matrix_rows).collect::<Vec<_>>(),
    })
}

fn run_freq(a: FreqArgs, out: &mut dyn Write) -> Outcome {
    let mats = match (a.problem, a.horizon) {
        (Some(path), _) => parse_problem(path)?.freq_matrices().clone(),
        (None, Some(t)) => {
            let allowed = a.allowed.iter().map(|s| parse_bins(s)).collect::<std::result::Result<Vec<_>, _>>()?;
            let spec = FrequencySpec::new(t, allowed).map_err(|e| Failure::Usage(e.to_string()))?;
            build_freq_matrices(&spec)
        }
        (None, None) => return Err(Failure::Usage("give --problem, or --horizon with --allowed".into())),
    };
    emit(out, &freq_json(&mats))?;
    Ok(EXIT_OK)
}

/// Reads one column of a CSV file. A first row that does not parse as
/// numbers is taken as a header.
fn read_sequence(text: &str, column: Option<&str>) -> std::result::Result<Vec<f64>, Failure> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let records = rdr
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let Some(first) = records.first() else {
        return Err(Failure::Usage("input has no rows".into()));
    };
    let has_header = first.iter().any(|f| f.trim().parse::<f64>().is_err());
    let index = match column {
        None => 0,
        Some(c) => match c.parse::<usize>() {
            Ok(i) => i,
            Err(_) if has_header => first
                .iter()
                .position(|f| f.trim() == c)
                .ok_or_else(|| Failure::Usage(format!("no column named `{c}`")))?,
            Err(_) => return Err(Failure::Usage(format!("no header row to look up column `{c}`"))),
        },
    };
    let body = &records[usize::from(has_header)..];
    let mut seq = Vec::with_capacity(body.len());
    for (i, rec) in body.iter().enumerate() {
        let line = i + 1 + usize::from(has_header);
        let field = rec
            .get(index)
            .ok_or_else(|| Failure::Usage(format!("line {line}: no column {index}")))?
            .trim();
        if field.is_empty() {
            continue;
        }
        seq.push(field.parse::<f64>().map_err(|e| Failure::Usage(format!("line {line}: `{field}`: {e}")))?);
    }
    if seq.is_empty() {
        return Err(Failure::Usage("input sequence is empty".into()));
    }
    Ok(seq)
}

fn run_dft(a: DftArgs, out: &mut dyn Write) -> Outcome {
    let seq = read_sequence(&read(&a.input)?, a.column.as_deref())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Failed(e.to_string());
    w.write_record(["bin", "re", "im", "abs"]).map_err(io)?;
    for (bin, z) in dft(&seq).iter().enumerate() {
        w.write_record([bin.to_string(), z.re.to_string(), z.im.to_string(), z.norm().to_string()])
            .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Failed(e.to_string()))?;
    out.write_all(&bytes).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(EXIT_OK)
}
