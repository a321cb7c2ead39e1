//! Candidate optimal trajectories: a direct search over the stacked controls
//! and indirect single shooting on the adjoint boundary-value problem.
//! Every result is checked with [`recover_multipliers`].

mod direct;
mod shooting;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ocp::{ControlProblem, Trajectory};
use crate::pmp::{recover_multipliers_with, PmpCertificate, PmpReport, RecoveryOptions, DEFAULT_TOL};

pub use direct::{solve_direct, FeasibleSet};
pub use shooting::solve_shooting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    DirectGrid,
    ProjectedDescent,
    IndirectShooting,
}

impl Method {
    /// `DirectGrid` when its preconditions hold, otherwise `ProjectedDescent`.
    pub fn direct_for(problem: &ControlProblem) -> Method {
        if direct::grid_applicable(problem).is_ok() {
            Method::DirectGrid
        } else {
            Method::ProjectedDescent
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct-grid" | "grid" => Ok(Method::DirectGrid),
            "projected-descent" | "descent" => Ok(Method::ProjectedDescent),
            "shooting" | "indirect-shooting" => Ok(Method::IndirectShooting),
            other => Err(Error::InvalidProblem(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub method: Method,
    pub max_iters: usize,
    /// Stop when the projected-gradient or Newton residual drops below this.
    pub tol: f64,
    /// Final grid spacing for `DirectGrid`.
    pub grid_res: f64,
    /// Largest number of grid points evaluated per refinement level.
    pub grid_budget: usize,
    pub seed: u64,
    /// Number of starting points for multistart.
    pub starts: usize,
    /// Pass threshold for the attached report.
    pub verify_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            method: Method::ProjectedDescent,
            max_iters: 2000,
            tol: 1e-10,
            grid_res: 1e-3,
            grid_budget: 200_000,
            seed: 0,
            starts: 4,
            verify_tol: DEFAULT_TOL,
        }
    }
}

impl SolveOptions {
    pub fn with_method(method: Method) -> Self {
        SolveOptions {
            method,
            ..SolveOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.starts == 0 || self.grid_budget < 8 {
            return Err(Error::InvalidProblem("iteration counts and budgets must be positive".into()));
        }
        if !(self.grid_res > 0.0 && self.tol > 0.0) {
            return Err(Error::InvalidProblem("grid resolution and tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub trajectory: Trajectory,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub method: Method,
    /// Objective after each accepted descent step of the winning start.
    pub objective_history: Vec<f64>,
    pub certificate: PmpCertificate,
    pub pmp_report: PmpReport,
}

impl SolveResult {
    pub fn controls(&self) -> &[DVector<f64>] {
        &self.trajectory.controls
    }
}

/// Dispatch on `opts.method`.
pub fn solve(problem: &ControlProblem, opts: &SolveOptions) -> Result<SolveResult> {
    match opts.method {
        Method::DirectGrid | Method::ProjectedDescent => solve_direct(problem, opts),
        Method::IndirectShooting => solve_shooting(problem, opts, None),
    }
}

pub(crate) fn finish(
    problem: &ControlProblem,
    opts: &SolveOptions,
    trajectory: Trajectory,
    status: SolveStatus,
    iterations: usize,
    objective_history: Vec<f64>,
) -> Result<SolveResult> {
    let objective = crate::ocp::total_cost(problem, &trajectory);
    let rec = recover_multipliers_with(
        problem,
        &trajectory,
        &RecoveryOptions {
            tolerance: opts.verify_tol,
            ..RecoveryOptions::default()
        },
    )?;
    Ok(SolveResult {
        trajectory,
        objective,
        status,
        iterations,
        method: opts.method,
        objective_history,
        certificate: rec.certificate,
        pmp_report: rec.report,
    })
}
