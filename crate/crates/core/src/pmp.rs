//! Residual form of the discrete-time maximum principle: backward adjoint
//! recursion, stationarity against dual cones of control-set tents,
//! complementary slackness, and recovery of multipliers for a given
//! trajectory.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::nnls;
use crate::manifold::AffineEmbedding;
use crate::ocp::{feasibility_report, ControlProblem, FeasibilityReport, Trajectory};
use crate::tents::{dual_cone, local_tent, ConeV};

/// Default pass threshold for every residual.
pub const DEFAULT_TOL: f64 = 1e-6;
/// State constraints with `g ≥ −tol` take part in multiplier recovery.
pub const RECOVERY_ACTIVATION_TOL: f64 = 1e-7;

/// Multipliers `(p_1..p_T, μ_1..μ_T, ν, λ)`. Adjoints are stored as ambient
/// representatives, tangent-projected at their base points.
#[derive(Debug, Clone, PartialEq)]
pub struct PmpCertificate {
    pub adjoints: Vec<DVector<f64>>,
    pub state_multipliers: Vec<DVector<f64>>,
    pub abnormal: f64,
    pub freq_multiplier: DVector<f64>,
}

impl PmpCertificate {
    /// All-zero certificate shaped for `problem`.
    pub fn zero(problem: &ControlProblem) -> Self {
        let t_len = problem.horizon();
        PmpCertificate {
            adjoints: vec![DVector::zeros(problem.state_dim()); t_len],
            state_multipliers: (1..=t_len).map(|t| DVector::zeros(problem.constraint_dim(t))).collect(),
            abnormal: 0.0,
            freq_multiplier: DVector::zeros(problem.freq_matrices().ell),
        }
    }

    /// `ν + Σ‖μ_t‖₁ + ‖λ‖₁`.
    pub fn nontriviality_mass(&self) -> f64 {
        self.abnormal
            + self.state_multipliers.iter().map(|m| m.lp_norm(1)).sum::<f64>()
            + self.freq_multiplier.lp_norm(1)
    }

    pub fn push_through(&self, emb: &AffineEmbedding) -> PmpCertificate {
        PmpCertificate {
            adjoints: self.adjoints.iter().map(|p| emb.push_covector(p)).collect(),
            ..self.clone()
        }
    }

    fn check_shape(&self, problem: &ControlProblem) -> Result<()> {
        let t_len = problem.horizon();
        check_dim("number of adjoints", t_len, self.adjoints.len())?;
        check_dim("number of state multipliers", t_len, self.state_multipliers.len())?;
        for (i, p) in self.adjoints.iter().enumerate() {
            check_dim("adjoint dimension", problem.state_dim(), p.len())?;
            check_dim("state multiplier dimension", problem.constraint_dim(i + 1), self.state_multipliers[i].len())?;
        }
        check_dim("frequency multiplier dimension", problem.freq_matrices().ell, self.freq_multiplier.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Pass,
    Fail,
    NotChecked,
}

impl Verdict {
    fn from_bound(value: f64, tol: f64) -> Self {
        if value <= tol {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmpResiduals {
    pub adjoint_dynamics: f64,
    pub transversality: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub nonnegativity_violation: f64,
    pub nontriviality_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmpVerdicts {
    pub nonnegativity: Verdict,
    pub nontriviality: Verdict,
    pub adjoint_dynamics: Verdict,
    pub transversality: Verdict,
    pub stationarity: Verdict,
    pub complementarity: Verdict,
}

impl PmpVerdicts {
    pub fn all(&self) -> [Verdict; 6] {
        [
            self.nonnegativity,
            self.nontriviality,
            self.adjoint_dynamics,
            self.transversality,
            self.stationarity,
            self.complementarity,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmpReport {
    pub residuals: PmpResiduals,
    pub verdicts: PmpVerdicts,
    /// Stationarity residual per stage `t = 0..T−1`; `None` where no tent is
    /// available.
    pub stationarity_by_stage: Vec<Option<f64>>,
    pub feasibility: FeasibilityReport,
    pub feasible: bool,
    pub tolerance: f64,
}

impl PmpReport {
    /// Feasible and every condition passes; unchecked conditions do not pass.
    pub fn passed(&self) -> bool {
        self.feasible && self.verdicts.all().iter().all(|v| *v == Verdict::Pass)
    }

    /// The largest of the four equation residuals.
    pub fn max_residual(&self) -> f64 {
        let r = &self.residuals;
        r.adjoint_dynamics
            .max(r.transversality)
            .max(r.stationarity)
            .max(r.complementarity)
            .max(r.nonnegativity_violation)
    }
}

fn row_to_vec(j: DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(j.as_slice())
}

/// Derivatives of every map along a trajectory.
struct Linearization {
    proj: Vec<DMatrix<f64>>,
    jx: Vec<DMatrix<f64>>,
    ju: Vec<DMatrix<f64>>,
    cx: Vec<DVector<f64>>,
    cu: Vec<DVector<f64>>,
    c_term: DVector<f64>,
    /// Indexed by `t = 0..=T`; entry 0 is always `None`.
    jg: Vec<Option<DMatrix<f64>>>,
    gval: Vec<Option<DVector<f64>>>,
}

impl Linearization {
    fn new(problem: &ControlProblem, traj: &Trajectory) -> Result<Self> {
        let t_len = problem.horizon();
        check_dim("trajectory horizon", t_len, traj.horizon())?;
        check_dim("trajectory states", t_len + 1, traj.states.len())?;
        let none = DVector::zeros(0);
        let m = problem.manifold();
        let proj = traj.states.iter().map(|x| m.projector_at(x)).collect();
        let mut lin = Linearization {
            proj,
            jx: Vec::with_capacity(t_len),
            ju: Vec::with_capacity(t_len),
            cx: Vec::with_capacity(t_len),
            cu: Vec::with_capacity(t_len),
            c_term: row_to_vec(problem.terminal_cost().jacobian_state(&traj.states[t_len], &none)?),
            jg: vec![None; t_len + 1],
            gval: vec![None; t_len + 1],
        };
        for t in 0..t_len {
            let (x, u) = (&traj.states[t], &traj.controls[t]);
            let f = problem.dynamics(t);
            lin.jx.push(f.jacobian_state(x, u)?);
            lin.ju.push(f.jacobian_control(x, u)?);
            let c = problem.stage_cost(t);
            lin.cx.push(row_to_vec(c.jacobian_state(x, u)?));
            lin.cu.push(row_to_vec(c.jacobian_control(x, u)?));
        }
        for t in 1..=t_len {
            if let Some(g) = problem.state_constraint(t) {
                lin.jg[t] = Some(g.jacobian_state(&traj.states[t], &none)?);
                lin.gval[t] = Some(g.eval(&traj.states[t], &none));
            }
        }
        Ok(lin)
    }

    fn horizon(&self) -> usize {
        self.jx.len()
    }

    fn constraint_pullback(&self, t: usize, mu: &DVector<f64>) -> DVector<f64> {
        match &self.jg[t] {
            Some(j) => j.transpose() * mu,
            None => DVector::zeros(self.proj[t].nrows()),
        }
    }

    /// `p_1..p_T` from transversality and the backward recursion.
    fn adjoints(&self, nu: f64, mus: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let t_len = self.horizon();
        let mut p = vec![DVector::zeros(0); t_len];
        p[t_len - 1] = &self.proj[t_len] * (-nu * &self.c_term - self.constraint_pullback(t_len, &mus[t_len - 1]));
        for t in (1..t_len).rev() {
            let raw = self.jx[t].transpose() * &p[t] - nu * &self.cx[t] - self.constraint_pullback(t, &mus[t - 1]);
            p[t - 1] = &self.proj[t] * raw;
        }
        p
    }

    /// `w_t = J_uᵀ p_{t+1} − ν ∇_u c_t + E_tᵀ λ`.
    fn stationarity_covector(
        &self,
        problem: &ControlProblem,
        t: usize,
        p_next: &DVector<f64>,
        nu: f64,
        lambda: &DVector<f64>,
    ) -> DVector<f64> {
        self.ju[t].transpose() * p_next - nu * &self.cu[t] + problem.freq_matrices().matrices[t].transpose() * lambda
    }
}

fn check_multipliers(problem: &ControlProblem, mus: &[DVector<f64>]) -> Result<()> {
    check_dim("number of state multipliers", problem.horizon(), mus.len())?;
    for (i, mu) in mus.iter().enumerate() {
        check_dim("state multiplier dimension", problem.constraint_dim(i + 1), mu.len())?;
    }
    Ok(())
}

/// Adjoints `p_1..p_T` for multipliers `ν` and `μ_1..μ_T`.
pub fn backward_adjoint(
    problem: &ControlProblem,
    traj: &Trajectory,
    nu: f64,
    mus: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    check_multipliers(problem, mus)?;
    Ok(Linearization::new(problem, traj)?.adjoints(nu, mus))
}

/// Dual cone of the tent of `U_t` at `u_t`, or `None` when no tent is
/// available for the set.
fn stage_dual(problem: &ControlProblem, traj: &Trajectory, t: usize) -> Result<Option<ConeV>> {
    match local_tent(problem.control_set(t), &traj.controls[t]) {
        Ok(tent) => Ok(Some(dual_cone(&tent))),
        Err(Error::Unsupported(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Distance from the stationarity covector `w_t` to the dual cone of the
/// tent of `U_t` at `u_t`; `None` when the set admits no tent.
pub fn stationarity_residual(
    problem: &ControlProblem,
    traj: &Trajectory,
    cert: &PmpCertificate,
    t: usize,
) -> Result<Option<f64>> {
    cert.check_shape(problem)?;
    if t >= problem.horizon() {
        return Err(Error::InvalidProblem(format!("stage {t} outside 0..{}", problem.horizon())));
    }
    let lin = Linearization::new(problem, traj)?;
    stationarity_at(problem, traj, &lin, cert, t)
}

fn stationarity_at(
    problem: &ControlProblem,
    traj: &Trajectory,
    lin: &Linearization,
    cert: &PmpCertificate,
    t: usize,
) -> Result<Option<f64>> {
    let Some(dual) = stage_dual(problem, traj, t)? else {
        return Ok(None);
    };
    let w = lin.stationarity_covector(problem, t, &cert.adjoints[t], cert.abnormal, &cert.freq_multiplier);
    Ok(Some(dual.distance(&w)))
}

/// `max_{t,j} |μ_tʲ g_tʲ(x_t)|`.
pub fn complementarity_residual(problem: &ControlProblem, traj: &Trajectory, cert: &PmpCertificate) -> Result<f64> {
    cert.check_shape(problem)?;
    let none = DVector::zeros(0);
    let mut worst: f64 = 0.0;
    for t in 1..=problem.horizon() {
        if let Some(g) = problem.state_constraint(t) {
            let values = g.eval(&traj.states[t], &none);
            worst = values
                .iter()
                .zip(cert.state_multipliers[t - 1].iter())
                .fold(worst, |acc, (gj, mj)| acc.max((gj * mj).abs()));
        }
    }
    Ok(worst)
}

/// Verify with [`DEFAULT_TOL`].
pub fn verify(problem: &ControlProblem, traj: &Trajectory, cert: &PmpCertificate) -> Result<PmpReport> {
    verify_with_tol(problem, traj, cert, DEFAULT_TOL)
}

pub fn verify_with_tol(problem: &ControlProblem, traj: &Trajectory, cert: &PmpCertificate, tol: f64) -> Result<PmpReport> {
    cert.check_shape(problem)?;
    let feasibility = feasibility_report(problem, traj)?;
    let lin = Linearization::new(problem, traj)?;
    let t_len = problem.horizon();

    let expected = lin.adjoints(cert.abnormal, &cert.state_multipliers);
    let deviation = |t: usize| (&lin.proj[t + 1] * (&cert.adjoints[t] - &expected[t])).norm();
    let transversality = deviation(t_len - 1);
    let adjoint_dynamics = (0..t_len - 1).map(deviation).fold(0.0, f64::max);

    let mut stationarity_by_stage = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let r = match stationarity_at(problem, traj, &lin, cert, t) {
            Err(Error::NotInSet { .. }) => None,
            other => other?,
        };
        stationarity_by_stage.push(r);
    }
    let stationarity = stationarity_by_stage.iter().flatten().copied().fold(0.0, f64::max);
    let complementarity = complementarity_residual(problem, traj, cert)?;
    let min_mu = cert
        .state_multipliers
        .iter()
        .flat_map(|m| m.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let nonnegativity_violation = 0.0f64.max(-cert.abnormal).max(-min_mu);
    let nontriviality_mass = cert.nontriviality_mass();

    let residuals = PmpResiduals {
        adjoint_dynamics,
        transversality,
        stationarity,
        complementarity,
        nonnegativity_violation,
        nontriviality_mass,
    };
    let verdicts = PmpVerdicts {
        nonnegativity: Verdict::from_bound(nonnegativity_violation, tol),
        nontriviality: if nontriviality_mass > tol { Verdict::Pass } else { Verdict::Fail },
        adjoint_dynamics: Verdict::from_bound(adjoint_dynamics, tol),
        transversality: Verdict::from_bound(transversality, tol),
        stationarity: if stationarity_by_stage.iter().any(Option::is_none) {
            Verdict::NotChecked
        } else {
            Verdict::from_bound(stationarity, tol)
        },
        complementarity: Verdict::from_bound(complementarity, tol),
    };
    Ok(PmpReport {
        residuals,
        verdicts,
        stationarity_by_stage,
        feasible: feasibility.is_feasible(),
        feasibility,
        tolerance: tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    pub tolerance: f64,
    pub activation_tol: f64,
    /// Restrict the search to `ν = 0`.
    pub force_abnormal: bool,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        RecoveryOptions {
            tolerance: DEFAULT_TOL,
            activation_tol: RECOVERY_ACTIVATION_TOL,
            force_abnormal: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub certificate: PmpCertificate,
    pub report: PmpReport,
}

impl Recovery {
    /// The smallest stationarity residual found over normalized certificates.
    pub fn stationarity_residual(&self) -> f64 {
        self.report.residuals.stationarity
    }
}

pub fn recover_multipliers(problem: &ControlProblem, traj: &Trajectory) -> Result<Recovery> {
    recover_multipliers_with(problem, traj, &RecoveryOptions::default())
}

/// Searches for `(ν, μ, λ)` of unit mass minimizing the stationarity
/// residual. Inactive state constraints get `μ = 0`, which makes
/// complementary slackness exact, and the adjoints are obtained from the
/// backward recursion, so only stationarity is left to fit. Stationarity is
/// linear in the multipliers and in the dual-cone weights, so the fit is a
/// nonnegative least-squares problem.
///
/// The first pass normalizes `ν + Σμ = 1`. When that leaves a residual, a
/// second pass looks for certificates carried by `λ` alone.
pub fn recover_multipliers_with(problem: &ControlProblem, traj: &Trajectory, opts: &RecoveryOptions) -> Result<Recovery> {
    let lin = Linearization::new(problem, traj)?;
    let t_len = problem.horizon();
    let m = problem.control_dim();
    let ell = problem.freq_matrices().ell;

    let mut active: Vec<Vec<usize>> = vec![Vec::new(); t_len + 1];
    for (t, slot) in active.iter_mut().enumerate().skip(1) {
        if let Some(g) = &lin.gval[t] {
            *slot = (0..g.len()).filter(|&j| g[j] >= -opts.activation_tol).collect();
        }
    }
    let zero_mus: Vec<DVector<f64>> = (1..=t_len).map(|t| DVector::zeros(problem.constraint_dim(t))).collect();

    // Columns of the linear map from multipliers to (w_0, …, w_{T−1}).
    let stack_w = |nu: f64, mus: &[DVector<f64>], lambda: &DVector<f64>| -> DVector<f64> {
        let p = lin.adjoints(nu, mus);
        let mut w = DVector::zeros(t_len * m);
        for t in 0..t_len {
            w.rows_mut(t * m, m)
                .copy_from(&lin.stationarity_covector(problem, t, &p[t], nu, lambda));
        }
        w
    };
    let no_lambda = DVector::zeros(ell);
    let mut scalar_cols: Vec<DVector<f64>> = Vec::new();
    let mut mu_slots: Vec<(usize, usize)> = Vec::new();
    if !opts.force_abnormal {
        scalar_cols.push(stack_w(1.0, &zero_mus, &no_lambda));
    }
    for (t, idx) in active.iter().enumerate() {
        for &j in idx {
            let mut mus = zero_mus.clone();
            mus[t - 1][j] = 1.0;
            scalar_cols.push(stack_w(0.0, &mus, &no_lambda));
            mu_slots.push((t, j));
        }
    }
    let lambda_cols: Vec<DVector<f64>> = (0..ell)
        .map(|i| {
            let mut e = DVector::zeros(ell);
            e[i] = 1.0;
            stack_w(0.0, &zero_mus, &e)
        })
        .collect();

    let mut duals: Vec<DMatrix<f64>> = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let cols = match stage_dual(problem, traj, t) {
            Ok(Some(d)) => d.conic_columns(),
            Ok(None) => {
                let eye = DMatrix::identity(m, m);
                let mut c = DMatrix::zeros(m, 2 * m);
                c.view_mut((0, 0), (m, m)).copy_from(&eye);
                c.view_mut((0, m), (m, m)).copy_from(&(-eye));
                c
            }
            Err(Error::NotInSet { control, violation }) => {
                return Err(Error::Infeasible(format!(
                    "control {control:?} at stage {t} lies outside its set (violation {violation:.3e})"
                )))
            }
            Err(e) => return Err(e),
        };
        duals.push(cols);
    }
    let cone_width: usize = duals.iter().map(|d| d.ncols()).sum();
    let n_scalar = scalar_cols.len();
    let width = n_scalar + 2 * ell + cone_width;
    let rows = t_len * m;

    let mut base = DMatrix::zeros(rows + 1, width);
    for (c, col) in scalar_cols.iter().enumerate() {
        base.view_mut((0, c), (rows, 1)).copy_from(col);
    }
    for (i, col) in lambda_cols.iter().enumerate() {
        base.view_mut((0, n_scalar + i), (rows, 1)).copy_from(col);
        base.view_mut((0, n_scalar + ell + i), (rows, 1)).copy_from(&(-col));
    }
    let mut offset = n_scalar + 2 * ell;
    for (t, d) in duals.iter().enumerate() {
        base.view_mut((t * m, offset), (m, d.ncols())).copy_from(&(-d));
        offset += d.ncols();
    }
    let rho = base.amax().max(1.0);
    let mut rhs = DVector::zeros(rows + 1);
    rhs[rows] = rho;

    let decode = |y: &DVector<f64>| -> Option<PmpCertificate> {
        let mut k = 0;
        let nu = if opts.force_abnormal {
            0.0
        } else {
            k = 1;
            y[0]
        };
        let mut mus = zero_mus.clone();
        for (s, &(t, j)) in mu_slots.iter().enumerate() {
            mus[t - 1][j] = y[k + s];
        }
        let lambda = DVector::from_fn(ell, |i, _| y[n_scalar + i] - y[n_scalar + ell + i]);
        let mass = nu + mus.iter().map(|v| v.lp_norm(1)).sum::<f64>() + lambda.lp_norm(1);
        if mass <= 1e-14 {
            return None;
        }
        let nu = nu / mass;
        let mus: Vec<_> = mus.into_iter().map(|v| v / mass).collect();
        let lambda = lambda / mass;
        Some(PmpCertificate {
            adjoints: lin.adjoints(nu, &mus),
            state_multipliers: mus,
            abnormal: nu,
            freq_multiplier: lambda,
        })
    };

    let mut candidates: Vec<PmpCertificate> = Vec::new();
    if n_scalar > 0 {
        let mut a = base.clone();
        for c in 0..n_scalar {
            a[(rows, c)] = rho;
        }
        if let Some(cert) = decode(&nnls(&a, &rhs).x) {
            candidates.push(cert);
        }
    }
    let best_so_far = |cands: &[PmpCertificate]| -> Result<f64> {
        let mut best = f64::INFINITY;
        for c in cands {
            best = best.min(verify_with_tol(problem, traj, c, opts.tolerance)?.residuals.stationarity);
        }
        Ok(best)
    };
    if best_so_far(&candidates)? > opts.tolerance {
        for i in 0..ell {
            for s in [1.0, -1.0] {
                let mut a = base.clone();
                a.view_mut((0, 0), (rows, n_scalar)).fill(0.0);
                a[(rows, n_scalar + i)] = s * rho;
                a[(rows, n_scalar + ell + i)] = -s * rho;
                if let Some(cert) = decode(&nnls(&a, &rhs).x) {
                    candidates.push(cert);
                }
            }
        }
    }

    let mut best: Option<Recovery> = None;
    for certificate in candidates {
        let report = verify_with_tol(problem, traj, &certificate, opts.tolerance)?;
        let better = match &best {
            None => true,
            Some(b) => report.residuals.stationarity < b.report.residuals.stationarity - 1e-15,
        };
        if better {
            best = Some(Recovery { certificate, report });
        }
    }
    match best {
        Some(r) => Ok(r),
        None => {
            let certificate = PmpCertificate::zero(problem);
            let report = verify_with_tol(problem, traj, &certificate, opts.tolerance)?;
            Ok(Recovery { certificate, report })
        }
    }
}
