//! The constrained problem: dynamics on the manifold, stage and terminal
//! costs, state constraints at `t = 1..T`, control sets and frequency
//! support; plus rollout, feasibility and cost evaluation.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::frequency::{build_freq_matrices, freq_residual, FrequencyConstraintMatrices, FrequencySpec};
use crate::manifold::{AffineEmbedding, Manifold, ManifoldPoint};
use crate::smooth_map::{builtin, SmoothMap};

/// Dynamics may drift this far off the manifold before rollout fails.
pub const DYNAMICS_TOL: f64 = 1e-7;
/// Constraint and control-set feasibility tolerance.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Frequency residual tolerance.
pub const FREQ_TOL: f64 = 1e-8;

/// Admissible control set `U_t ⊆ R^m`.
#[derive(Debug, Clone)]
pub enum ControlSet {
    Box { lower: DVector<f64>, upper: DVector<f64> },
    /// `{u : A u ≤ b}`.
    Polytope { a: DMatrix<f64>, b: DVector<f64> },
    /// `{u : h(u) ≤ 0}` for a control-only smooth map `h`.
    SmoothIneq(SmoothMap),
    /// `{u : C u = d}`.
    Affine { c: DMatrix<f64>, d: DVector<f64> },
    Full { dim: usize },
    /// A finite list of admissible points.
    Finite(Vec<DVector<f64>>),
}

impl ControlSet {
    pub fn full(dim: usize) -> Self {
        ControlSet::Full { dim }
    }

    pub fn interval(lower: f64, upper: f64) -> Self {
        ControlSet::Box {
            lower: DVector::from_element(1, lower),
            upper: DVector::from_element(1, upper),
        }
    }

    pub fn single_point(u: DVector<f64>) -> Self {
        ControlSet::Box {
            lower: u.clone(),
            upper: u,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lower, .. } => lower.len(),
            ControlSet::Polytope { a, .. } => a.ncols(),
            ControlSet::SmoothIneq(h) => h.control_dim(),
            ControlSet::Affine { c, .. } => c.ncols(),
            ControlSet::Full { dim } => *dim,
            ControlSet::Finite(points) => points.first().map(|p| p.len()).unwrap_or(0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ControlSet::Box { lower, upper } => {
                check_dim("box bounds", lower.len(), upper.len())?;
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return Err(Error::InvalidProblem("box lower bound exceeds upper bound".into()));
                }
            }
            ControlSet::Polytope { a, b } => check_dim("polytope rows", a.nrows(), b.len())?,
            ControlSet::SmoothIneq(h) => check_dim("smooth control set state argument", 0, h.state_dim())?,
            ControlSet::Affine { c, d } => check_dim("affine set rows", c.nrows(), d.len())?,
            ControlSet::Full { .. } => {}
            ControlSet::Finite(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidProblem("finite control set is empty".into()));
                }
                let m = points[0].len();
                for p in points {
                    check_dim("finite control set point", m, p.len())?;
                }
            }
        }
        Ok(())
    }

    /// Distance-like violation, zero inside the set.
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        match self {
            ControlSet::Box { lower, upper } => (0..u.len())
                .map(|i| (lower[i] - u[i]).max(u[i] - upper[i]).max(0.0))
                .fold(0.0, f64::max),
            ControlSet::Polytope { a, b } => (a * u - b).iter().fold(0.0, |acc, &v| acc.max(v)),
            ControlSet::SmoothIneq(h) => h.eval(&DVector::zeros(0), u).iter().fold(0.0, |acc, &v| acc.max(v)),
            ControlSet::Affine { c, d } => (c * u - d).amax(),
            ControlSet::Full { .. } => 0.0,
            ControlSet::Finite(points) => points.iter().map(|p| (p - u).norm()).fold(f64::INFINITY, f64::min),
        }
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        self.violation(u) <= tol
    }

    /// Coordinate bounds when the set is a box or a finite set.
    pub fn bounds(&self) -> Option<(DVector<f64>, DVector<f64>)> {
        match self {
            ControlSet::Box { lower, upper } => Some((lower.clone(), upper.clone())),
            ControlSet::Finite(points) => {
                let m = self.dim();
                let lo = DVector::from_fn(m, |i, _| points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min));
                let hi = DVector::from_fn(m, |i, _| points.iter().map(|p| p[i]).fold(f64::NEG_INFINITY, f64::max));
                Some((lo, hi))
            }
            _ => None,
        }
    }

    /// Linear description `(A, b, C, d)` with `A u ≤ b`, `C u = d`, when one
    /// exists.
    pub fn linear_description(&self) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>)> {
        let m = self.dim();
        let none_eq = || (DMatrix::zeros(0, m), DVector::zeros(0));
        match self {
            ControlSet::Box { lower, upper } => {
                let mut a = DMatrix::zeros(2 * m, m);
                let mut b = DVector::zeros(2 * m);
                for i in 0..m {
                    a[(2 * i, i)] = 1.0;
                    b[2 * i] = upper[i];
                    a[(2 * i + 1, i)] = -1.0;
                    b[2 * i + 1] = -lower[i];
                }
                let (c, d) = none_eq();
                Some((a, b, c, d))
            }
            ControlSet::Polytope { a, b } => {
                let (c, d) = none_eq();
                Some((a.clone(), b.clone(), c, d))
            }
            ControlSet::Affine { c, d } => Some((DMatrix::zeros(0, m), DVector::zeros(0), c.clone(), d.clone())),
            ControlSet::Full { .. } => {
                let (c, d) = none_eq();
                Some((DMatrix::zeros(0, m), DVector::zeros(0), c, d))
            }
            ControlSet::SmoothIneq(_) | ControlSet::Finite(_) => None,
        }
    }

    /// Whether a polytope set has at least one point, decided by an LP.
    pub fn is_nonempty(&self) -> bool {
        match self {
            ControlSet::Polytope { a, b } => {
                use minilp::{ComparisonOp, OptimizationDirection, Problem};
                let mut lp = Problem::new(OptimizationDirection::Minimize);
                let vars: Vec<_> = (0..a.ncols()).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
                for i in 0..a.nrows() {
                    let row: Vec<_> = vars.iter().enumerate().map(|(j, &v)| (v, a[(i, j)])).collect();
                    lp.add_constraint(&row[..], ComparisonOp::Le, b[i]);
                }
                lp.solve().is_ok()
            }
            ControlSet::Finite(points) => !points.is_empty(),
            _ => true,
        }
    }
}

/// State and control sequences `x_0..x_T`, `u_0..u_{T−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub controls: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<DVector<f64>>) -> Result<Self> {
        check_dim("trajectory states (T + 1)", controls.len() + 1, states.len())?;
        Ok(Trajectory { states, controls })
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// `(u_0, u_1, …)` concatenated.
    pub fn stacked_controls(&self) -> DVector<f64> {
        stack(&self.controls)
    }

    pub fn push_through(&self, emb: &AffineEmbedding) -> Trajectory {
        Trajectory {
            states: self.states.iter().map(|x| emb.push_point(x)).collect(),
            controls: self.controls.clone(),
        }
    }
}

pub fn stack(controls: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        controls.iter().map(|u| u.len()).sum(),
        controls.iter().flat_map(|u| u.iter().copied()),
    )
}

pub fn unstack(z: &DVector<f64>, horizon: usize, m: usize) -> Vec<DVector<f64>> {
    (0..horizon).map(|t| z.rows(t * m, m).into_owned()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub dynamics_defect: f64,
    pub state_constraint_violation: f64,
    pub control_set_violation: f64,
    pub freq_residual_norm: f64,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.dynamics_defect <= DYNAMICS_TOL
            && self.state_constraint_violation <= CONSTRAINT_TOL
            && self.control_set_violation <= CONSTRAINT_TOL
            && self.freq_residual_norm <= FREQ_TOL
    }
}

#[derive(Debug, Clone)]
pub struct ControlProblem {
    horizon: usize,
    control_dim: usize,
    manifold: Arc<Manifold>,
    x_init: DVector<f64>,
    dynamics: Vec<SmoothMap>,
    stage_costs: Vec<SmoothMap>,
    terminal_cost: SmoothMap,
    state_constraints: Vec<Option<SmoothMap>>,
    control_sets: Vec<ControlSet>,
    freq: FrequencySpec,
    freq_mats: FrequencyConstraintMatrices,
    pub(crate) source: Option<Arc<crate::io::schema::ProblemFile>>,
}

impl ControlProblem {
    pub fn builder(manifold: Manifold, x_init: DVector<f64>, horizon: usize, control_dim: usize) -> ProblemBuilder {
        ProblemBuilder {
            manifold,
            x_init,
            horizon,
            control_dim,
            dynamics: None,
            stage_costs: None,
            terminal_cost: None,
            state_constraints: Vec::new(),
            control_sets: None,
            freq: None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn state_dim(&self) -> usize {
        self.manifold.ambient_dim()
    }

    pub fn manifold(&self) -> &Arc<Manifold> {
        &self.manifold
    }

    pub fn x_init(&self) -> &DVector<f64> {
        &self.x_init
    }

    pub fn dynamics(&self, t: usize) -> &SmoothMap {
        &self.dynamics[t]
    }

    pub fn stage_cost(&self, t: usize) -> &SmoothMap {
        &self.stage_costs[t]
    }

    pub fn terminal_cost(&self) -> &SmoothMap {
        &self.terminal_cost
    }

    /// Constraint map `g_t` for `t ∈ 1..=T`.
    pub fn state_constraint(&self, t: usize) -> Option<&SmoothMap> {
        if t == 0 || t > self.horizon {
            return None;
        }
        self.state_constraints[t - 1].as_ref()
    }

    /// `r_t`, the number of state-constraint components at `t ∈ 1..=T`.
    pub fn constraint_dim(&self, t: usize) -> usize {
        self.state_constraint(t).map(SmoothMap::output_dim).unwrap_or(0)
    }

    pub fn has_state_constraints(&self) -> bool {
        self.state_constraints.iter().any(Option::is_some)
    }

    pub fn control_set(&self, t: usize) -> &ControlSet {
        &self.control_sets[t]
    }

    pub fn frequency(&self) -> &FrequencySpec {
        &self.freq
    }

    pub fn freq_matrices(&self) -> &FrequencyConstraintMatrices {
        &self.freq_mats
    }

    /// The problem file this problem was parsed from, if any.
    pub fn problem_file(&self) -> Option<&crate::io::schema::ProblemFile> {
        self.source.as_deref()
    }

    pub fn point(&self, x: &DVector<f64>) -> Result<ManifoldPoint> {
        self.manifold.point(x.clone())
    }

    /// Whether every dynamics map is affine, making the state an affine
    /// function of the stacked controls.
    pub fn has_affine_dynamics(&self) -> bool {
        self.dynamics.iter().all(SmoothMap::is_affine)
    }

    /// The same problem transported through an affine isometry of the ambient
    /// space: points are pushed forward and every map is precomposed with the
    /// pull-back, which gives a smooth extension on the larger ambient space.
    pub fn reembed(&self, emb: &AffineEmbedding) -> Result<ControlProblem> {
        check_dim("embedding source", self.state_dim(), emb.source_dim())?;
        let manifold = emb.image_of(&self.manifold)?;
        let mut b = ControlProblem::builder(manifold, emb.push_point(&self.x_init), self.horizon, self.control_dim)
            .dynamics_per_stage(self.dynamics.iter().map(|f| f.through_embedding(emb, true)).collect())
            .stage_costs(self.stage_costs.iter().map(|c| c.through_embedding(emb, false)).collect())
            .terminal_cost(self.terminal_cost.through_embedding(emb, false))
            .control_sets(self.control_sets.clone())
            .frequency(self.freq.clone());
        for (i, g) in self.state_constraints.iter().enumerate() {
            if let Some(g) = g {
                b = b.state_constraint(i + 1, g.through_embedding(emb, false));
            }
        }
        b.build()
    }
}

pub struct ProblemBuilder {
    manifold: Manifold,
    x_init: DVector<f64>,
    horizon: usize,
    control_dim: usize,
    dynamics: Option<Vec<SmoothMap>>,
    stage_costs: Option<Vec<SmoothMap>>,
    terminal_cost: Option<SmoothMap>,
    state_constraints: Vec<(usize, SmoothMap)>,
    control_sets: Option<Vec<ControlSet>>,
    freq: Option<FrequencySpec>,
}

impl ProblemBuilder {
    pub fn dynamics(mut self, f: SmoothMap) -> Self {
        self.dynamics = Some(vec![f; self.horizon]);
        self
    }

    pub fn dynamics_per_stage(mut self, fs: Vec<SmoothMap>) -> Self {
        self.dynamics = Some(fs);
        self
    }

    pub fn stage_cost(mut self, c: SmoothMap) -> Self {
        self.stage_costs = Some(vec![c; self.horizon]);
        self
    }

    pub fn stage_costs(mut self, cs: Vec<SmoothMap>) -> Self {
        self.stage_costs = Some(cs);
        self
    }

    pub fn terminal_cost(mut self, c: SmoothMap) -> Self {
        self.terminal_cost = Some(c);
        self
    }

    /// Constraint `g_t(x_t) ≤ 0` at `t ∈ 1..=T`.
    pub fn state_constraint(mut self, t: usize, g: SmoothMap) -> Self {
        self.state_constraints.push((t, g));
        self
    }

    pub fn control_set(mut self, set: ControlSet) -> Self {
        self.control_sets = Some(vec![set; self.horizon]);
        self
    }

    pub fn control_sets(mut self, sets: Vec<ControlSet>) -> Self {
        self.control_sets = Some(sets);
        self
    }

    pub fn frequency(mut self, spec: FrequencySpec) -> Self {
        self.freq = Some(spec);
        self
    }

    pub fn build(self) -> Result<ControlProblem> {
        let t_len = self.horizon;
        let m = self.control_dim;
        if t_len == 0 {
            return Err(Error::InvalidProblem("horizon must be ≥ 1".into()));
        }
        let manifold = Arc::new(self.manifold);
        let n = manifold.ambient_dim();
        manifold.check_member(&self.x_init)?;

        let dynamics = self
            .dynamics
            .ok_or_else(|| Error::InvalidProblem("dynamics are required".into()))?;
        check_dim("number of dynamics maps", t_len, dynamics.len())?;
        for f in &dynamics {
            check_map(f, n, m, n, "dynamics")?;
        }
        let stage_costs = self
            .stage_costs
            .unwrap_or_else(|| vec![builtin::zero_cost(n, m); t_len]);
        check_dim("number of stage costs", t_len, stage_costs.len())?;
        for c in &stage_costs {
            check_map(c, n, m, 1, "stage cost")?;
        }
        let terminal_cost = self.terminal_cost.unwrap_or_else(|| builtin::zero_cost(n, 0));
        check_map(&terminal_cost, n, 0, 1, "terminal cost")?;

        let mut state_constraints = vec![None; t_len];
        for (t, g) in self.state_constraints {
            if t == 0 || t > t_len {
                return Err(Error::InvalidProblem(format!(
                    "state constraint time {t} outside 1..={t_len}"
                )));
            }
            if state_constraints[t - 1].is_some() {
                return Err(Error::InvalidProblem(format!("duplicate state constraint at t = {t}")));
            }
            check_map(&g, n, 0, g.output_dim(), "state constraint")?;
            state_constraints[t - 1] = Some(g);
        }

        let control_sets = self.control_sets.unwrap_or_else(|| vec![ControlSet::full(m); t_len]);
        check_dim("number of control sets", t_len, control_sets.len())?;
        for s in &control_sets {
            s.validate()?;
            check_dim("control set dimension", m, s.dim())?;
            if !s.is_nonempty() {
                return Err(Error::InvalidProblem("control set is empty".into()));
            }
        }

        let freq = self.freq.unwrap_or_else(|| FrequencySpec::unconstrained(t_len, m));
        check_dim("frequency spec horizon", t_len, freq.horizon())?;
        check_dim("frequency spec control dimension", m, freq.control_dim())?;
        let freq_mats = build_freq_matrices(&freq);

        let problem = ControlProblem {
            horizon: t_len,
            control_dim: m,
            manifold,
            x_init: self.x_init,
            dynamics,
            stage_costs,
            terminal_cost,
            state_constraints,
            control_sets,
            freq,
            freq_mats,
            source: None,
        };
        problem.check_invariance()?;
        problem.check_jacobians()?;
        Ok(problem)
    }
}

fn check_map(f: &SmoothMap, n: usize, m: usize, out: usize, what: &str) -> Result<()> {
    check_dim(&format!("{what} `{}` state dimension", f.name()), n, f.state_dim())?;
    check_dim(&format!("{what} `{}` control dimension", f.name()), m, f.control_dim())?;
    check_dim(&format!("{what} `{}` output dimension", f.name()), out, f.output_dim())
}

impl ControlProblem {
    fn probes(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let m = self.control_dim;
        let mut out = vec![(self.x_init.clone(), DVector::zeros(m))];
        for _ in 0..3 {
            let x = self.manifold.random_point(&mut rng);
            let u = crate::manifold::gaussian(&mut rng, m) * 0.5;
            out.push((x, u));
        }
        out
    }

    /// Each `f_t` must map the manifold into itself on sampled probes.
    fn check_invariance(&self) -> Result<()> {
        for (t, f) in self.dynamics.iter().enumerate() {
            for (x, u) in self.probes() {
                let y = f.try_eval(&x, &u)?;
                let defect = self.manifold.defect(&y);
                if defect > DYNAMICS_TOL {
                    return Err(Error::DynamicsLeftManifold { stage: t, defect });
                }
            }
        }
        Ok(())
    }

    /// Analytic Jacobians must agree with central differences.
    fn check_jacobians(&self) -> Result<()> {
        let probes = self.probes();
        let no_u: Vec<_> = probes.iter().map(|(x, _)| (x.clone(), DVector::zeros(0))).collect();
        for f in self.dynamics.iter().chain(self.stage_costs.iter()) {
            f.validate_jacobians(&probes)?;
        }
        self.terminal_cost.validate_jacobians(&no_u)?;
        for g in self.state_constraints.iter().flatten() {
            g.validate_jacobians(&no_u)?;
        }
        Ok(())
    }
}

/// Forward simulation from `x_init`. States drifting off the manifold by at
/// most [`DYNAMICS_TOL`] are projected back; larger drift is an error.
pub fn rollout(problem: &ControlProblem, controls: &[DVector<f64>]) -> Result<Trajectory> {
    check_dim("control sequence length", problem.horizon, controls.len())?;
    let mut states = Vec::with_capacity(problem.horizon + 1);
    states.push(problem.x_init.clone());
    for (t, u) in controls.iter().enumerate() {
        check_dim("control dimension", problem.control_dim, u.len())?;
        let next = problem.dynamics[t].eval(&states[t], u);
        let defect = problem.manifold.defect(&next);
        if defect > DYNAMICS_TOL {
            return Err(Error::DynamicsLeftManifold { stage: t, defect });
        }
        let next = if defect > 0.0 { problem.manifold.project(&next) } else { next };
        states.push(next);
    }
    Ok(Trajectory {
        states,
        controls: controls.to_vec(),
    })
}

pub fn feasibility_report(problem: &ControlProblem, traj: &Trajectory) -> Result<FeasibilityReport> {
    check_dim("trajectory horizon", problem.horizon, traj.horizon())?;
    check_dim("trajectory states", problem.horizon + 1, traj.states.len())?;
    let mut dynamics_defect = (&traj.states[0] - &problem.x_init).norm();
    for x in &traj.states {
        check_dim("state dimension", problem.state_dim(), x.len())?;
        dynamics_defect = dynamics_defect.max(problem.manifold.defect(x));
    }
    let mut control_set_violation: f64 = 0.0;
    for t in 0..problem.horizon {
        let (x, u) = (&traj.states[t], &traj.controls[t]);
        check_dim("control dimension", problem.control_dim, u.len())?;
        let next = problem.dynamics[t].eval(x, u);
        dynamics_defect = dynamics_defect.max((&traj.states[t + 1] - next).norm());
        control_set_violation = control_set_violation.max(problem.control_sets[t].violation(u));
    }
    let mut state_constraint_violation: f64 = 0.0;
    for t in 1..=problem.horizon {
        if let Some(g) = problem.state_constraint(t) {
            let v = g.eval(&traj.states[t], &DVector::zeros(0));
            state_constraint_violation = v.iter().fold(state_constraint_violation, |acc, &gj| acc.max(gj));
        }
    }
    let freq_residual_norm = freq_residual(&problem.freq_mats, &traj.controls)?.norm();
    Ok(FeasibilityReport {
        dynamics_defect,
        state_constraint_violation,
        control_set_violation,
        freq_residual_norm,
    })
}

/// `Σ_t c_t(x_t, u_t) + c_T(x_T)`.
pub fn total_cost(problem: &ControlProblem, traj: &Trajectory) -> f64 {
    let stage: f64 = (0..problem.horizon)
        .map(|t| problem.stage_costs[t].eval_scalar(&traj.states[t], &traj.controls[t]))
        .sum();
    stage + problem.terminal_cost.eval_scalar(&traj.states[problem.horizon], &DVector::zeros(0))
}
