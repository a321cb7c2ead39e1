use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{finish, Method, SolveOptions, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, null_space, project_polyhedron};
use crate::manifold::gaussian;
use crate::ocp::{rollout, stack, total_cost, unstack, ControlProblem, ControlSet, Trajectory, CONSTRAINT_TOL};

/// Controls stacked as `z = (u_0, …, u_{T−1})`.
struct Stacked<'a> {
    problem: &'a ControlProblem,
}

impl Stacked<'_> {
    fn len(&self) -> usize {
        self.problem.horizon() * self.problem.control_dim()
    }

    fn trajectory(&self, z: &DVector<f64>) -> Result<Trajectory> {
        rollout(self.problem, &unstack(z, self.problem.horizon(), self.problem.control_dim()))
    }

    fn objective(&self, z: &DVector<f64>) -> f64 {
        match self.trajectory(z) {
            Ok(traj) => total_cost(self.problem, &traj),
            Err(_) => f64::INFINITY,
        }
    }

    /// Central differences of the objective in each control coordinate.
    fn gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut g = DVector::zeros(z.len());
        let mut zp = z.clone();
        for i in 0..z.len() {
            let h = 1e-5 * (1.0 + z[i].abs());
            zp[i] = z[i] + h;
            let fp = self.objective(&zp);
            zp[i] = z[i] - h;
            let fm = self.objective(&zp);
            zp[i] = z[i];
            g[i] = (fp - fm) / (2.0 * h);
        }
        g
    }
}

/// The admissible stacked controls `{z : A z ≤ b, C z = d}` when every
/// constraint is linear in `z`, parameterized as `z = z_0 + N y` with `N` an
/// orthonormal basis of `ker C`.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    z0: DVector<f64>,
    basis: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl FeasibleSet {
    /// Box, polytope, affine and full control sets, the frequency constraint,
    /// and affine state constraints under affine dynamics.
    pub fn build(problem: &ControlProblem) -> Result<Self> {
        let (t_len, m) = (problem.horizon(), problem.control_dim());
        let n = t_len * m;
        let mut ineq_rows: Vec<(DVector<f64>, f64)> = Vec::new();
        let mut eq_rows: Vec<(DVector<f64>, f64)> = Vec::new();
        let embed = |t: usize, row: nalgebra::DVectorView<f64>| {
            let mut r = DVector::zeros(n);
            r.rows_mut(t * m, m).copy_from(&row);
            r
        };
        for t in 0..t_len {
            let (a, b, c, d) = problem
                .control_set(t)
                .linear_description()
                .ok_or_else(|| Error::Unsupported(format!("control set at stage {t} is not linear")))?;
            for i in 0..a.nrows() {
                ineq_rows.push((embed(t, a.row(i).transpose().as_view()), b[i]));
            }
            for i in 0..c.nrows() {
                eq_rows.push((embed(t, c.row(i).transpose().as_view()), d[i]));
            }
        }
        let e = problem.freq_matrices().stacked();
        for i in 0..e.nrows() {
            eq_rows.push((e.row(i).transpose(), 0.0));
        }
        if problem.has_state_constraints() {
            ineq_rows.extend(state_constraint_rows(problem)?);
        }

        let c = DMatrix::from_fn(eq_rows.len(), n, |i, j| eq_rows[i].0[j]);
        let d = DVector::from_fn(eq_rows.len(), |i, _| eq_rows[i].1);
        let z0 = lstsq(&c, &d);
        if (&c * &z0 - &d).amax() > 1e-9 * (1.0 + d.amax()) {
            return Err(Error::Infeasible("linear equality constraints are inconsistent".into()));
        }
        let basis = null_space(&c);
        let a_z = DMatrix::from_fn(ineq_rows.len(), n, |i, j| ineq_rows[i].0[j]);
        let b_z = DVector::from_fn(ineq_rows.len(), |i, _| ineq_rows[i].1);
        let set = FeasibleSet {
            a: &a_z * &basis,
            b: &b_z - &a_z * &z0,
            z0,
            basis,
        };
        if set.project(&set.z0).is_none() {
            return Err(Error::Infeasible("no control sequence satisfies the linear constraints".into()));
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.z0.len()
    }

    /// Euclidean projection of `z`.
    pub fn project(&self, z: &DVector<f64>) -> Option<DVector<f64>> {
        let y = self.basis.transpose() * (z - &self.z0);
        let y = project_polyhedron(&self.a, &self.b, &y)?;
        Some(&self.z0 + &self.basis * y)
    }
}

/// Rows `(a, b)` with `aᵀ z ≤ b` for affine state constraints under affine
/// dynamics, where each state is an affine function of `z`.
fn state_constraint_rows(problem: &ControlProblem) -> Result<Vec<(DVector<f64>, f64)>> {
    if !problem.has_affine_dynamics() {
        return Err(Error::Unsupported("state constraints with non-affine dynamics".into()));
    }
    let (t_len, m) = (problem.horizon(), problem.control_dim());
    let n = t_len * m;
    let stacked = Stacked { problem };
    let base = stacked.trajectory(&DVector::zeros(n))?;
    let mut columns: Vec<Trajectory> = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        columns.push(stacked.trajectory(&e)?);
    }
    let none = DVector::zeros(0);
    let mut rows = Vec::new();
    for t in 1..=t_len {
        let Some(g) = problem.state_constraint(t) else { continue };
        if !g.is_affine() {
            return Err(Error::Unsupported(format!("state constraint `{}` is not affine", g.name())));
        }
        let x0 = &base.states[t];
        let gx = g.jacobian_state(x0, &none)?;
        let g0 = g.eval(x0, &none);
        let sens = DMatrix::from_fn(x0.len(), n, |r, i| columns[i].states[t][r] - x0[r]);
        let lin = &gx * sens;
        for j in 0..g0.len() {
            rows.push((lin.row(j).transpose(), -g0[j]));
        }
    }
    Ok(rows)
}

/// Preconditions of the grid search: `T·m ≤ 8`, every control set a box or
/// a finite set, no equality constraints.
pub(super) fn grid_applicable(problem: &ControlProblem) -> Result<()> {
    let (t_len, m) = (problem.horizon(), problem.control_dim());
    if t_len * m > 8 {
        return Err(Error::Unsupported(format!("grid search needs T·m ≤ 8, got {}", t_len * m)));
    }
    if problem.freq_matrices().ell > 0 {
        return Err(Error::Unsupported("grid search cannot enforce frequency constraints".into()));
    }
    for t in 0..t_len {
        match problem.control_set(t) {
            ControlSet::Box { .. } | ControlSet::Finite(_) => {}
            _ => return Err(Error::Unsupported(format!("grid search needs bounded control sets (stage {t})"))),
        }
    }
    Ok(())
}

/// `DirectGrid` or `ProjectedDescent`, per `opts.method`.
pub fn solve_direct(problem: &ControlProblem, opts: &SolveOptions) -> Result<SolveResult> {
    opts.validate()?;
    match opts.method {
        Method::DirectGrid => solve_grid(problem, opts),
        Method::ProjectedDescent => {
            let set = FeasibleSet::build(problem)?;
            let (z, status, iterations, history) = multistart_descent(problem, &set, opts, None)?;
            let traj = Stacked { problem }.trajectory(&z)?;
            finish(problem, opts, traj, status, iterations, history)
        }
        Method::IndirectShooting => Err(Error::InvalidProblem("shooting is not a direct method".into())),
    }
}

struct Descent {
    z: DVector<f64>,
    objective: f64,
    status: SolveStatus,
    iterations: usize,
    history: Vec<f64>,
}

/// Projected gradient with Armijo backtracking along the projection arc and
/// Barzilai–Borwein trial steps. Accepted steps never increase the
/// objective.
fn projected_descent(stacked: &Stacked, set: &FeasibleSet, start: &DVector<f64>, opts: &SolveOptions) -> Descent {
    let mut z = set.project(start).unwrap_or_else(|| start.clone());
    let mut f = stacked.objective(&z);
    let mut history = vec![f];
    let mut step = 1.0;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut stalled = 0;
    for iter in 0..opts.max_iters {
        let g = stacked.gradient(&z);
        let Some(unit) = set.project(&(&z - &g)) else { break };
        if (&unit - &z).norm() <= opts.tol {
            return Descent { z, objective: f, status: SolveStatus::Converged, iterations: iter, history };
        }
        if let Some((z_old, g_old)) = &prev {
            let s = &z - z_old;
            let y = &g - g_old;
            let sy = s.dot(&y);
            if sy > 1e-300 {
                step = (s.norm_squared() / sy).clamp(1e-10, 1e10);
            }
        }
        let mut alpha = step;
        let mut accepted = None;
        while alpha > 1e-18 {
            if let Some(trial) = set.project(&(&z - alpha * &g)) {
                let ft = stacked.objective(&trial);
                let decrease = 1e-4 / alpha * (&trial - &z).norm_squared();
                if ft <= f - decrease {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            alpha *= 0.5;
        }
        // No decrease, or only rounding-level decrease for several steps,
        // means the finite-difference gradient has hit its noise floor.
        let near_stationary = (&unit - &z).norm() <= opts.tol.sqrt();
        let floor_status = if near_stationary { SolveStatus::Converged } else { SolveStatus::MaxIterations };
        let Some((trial, ft)) = accepted else {
            return Descent { z, objective: f, status: floor_status, iterations: iter, history };
        };
        stalled = if f - ft <= 8.0 * f64::EPSILON * (1.0 + f.abs()) { stalled + 1 } else { 0 };
        if stalled >= 5 && near_stationary {
            history.push(ft);
            return Descent { z: trial, objective: ft, status: SolveStatus::Converged, iterations: iter + 1, history };
        }
        prev = Some((z.clone(), g));
        step = alpha;
        z = trial;
        f = ft;
        history.push(f);
    }
    Descent {
        z,
        objective: f,
        status: SolveStatus::MaxIterations,
        iterations: opts.max_iters,
        history,
    }
}

fn multistart_descent(
    problem: &ControlProblem,
    set: &FeasibleSet,
    opts: &SolveOptions,
    first: Option<DVector<f64>>,
) -> Result<(DVector<f64>, SolveStatus, usize, Vec<f64>)> {
    let stacked = Stacked { problem };
    let n = stacked.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![first.unwrap_or_else(|| DVector::zeros(n))];
    for _ in 1..opts.starts {
        starts.push(gaussian(&mut rng, n));
    }
    let mut best: Option<Descent> = None;
    for s in &starts {
        let run = projected_descent(&stacked, set, s, opts);
        // Ties within rounding go to a converged run.
        let better = |b: &Descent| {
            let tie = 1e-12 * (1.0 + b.objective.abs());
            run.objective < b.objective - tie
                || (run.objective <= b.objective + tie
                    && run.status == SolveStatus::Converged
                    && b.status != SolveStatus::Converged)
        };
        if best.as_ref().is_none_or(better) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    if !best.objective.is_finite() {
        return Err(Error::Infeasible("no start produced a valid rollout".into()));
    }
    Ok((best.z, best.status, best.iterations, best.history))
}

/// Candidate points of one stage at the current refinement level.
fn stage_candidates(set: &ControlSet, center: Option<&DVector<f64>>, half_width: f64, per_dim: usize) -> Vec<DVector<f64>> {
    match set {
        ControlSet::Finite(points) => points.clone(),
        ControlSet::Box { lower, upper } => {
            let m = lower.len();
            let axes: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let (lo, hi) = match center {
                        Some(c) => ((c[i] - half_width).max(lower[i]), (c[i] + half_width).min(upper[i])),
                        None => (lower[i], upper[i]),
                    };
                    if hi - lo <= 0.0 || per_dim == 1 {
                        vec![0.5 * (lo + hi)]
                    } else {
                        (0..per_dim).map(|k| lo + (hi - lo) * k as f64 / (per_dim - 1) as f64).collect()
                    }
                })
                .collect();
            cartesian(&axes).into_iter().map(DVector::from_vec).collect()
        }
        _ => unreachable!("checked by grid_applicable"),
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

fn state_violation(problem: &ControlProblem, traj: &Trajectory) -> f64 {
    let none = DVector::zeros(0);
    (1..=problem.horizon())
        .filter_map(|t| problem.state_constraint(t).map(|g| g.eval(&traj.states[t], &none).max()))
        .fold(0.0, f64::max)
}

/// Exhaustive search over the stage grids, refined around the incumbent
/// until the spacing reaches `grid_res`, then polished by projected descent
/// when the constraints allow projection.
fn solve_grid(problem: &ControlProblem, opts: &SolveOptions) -> Result<SolveResult> {
    grid_applicable(problem)?;
    let (t_len, m) = (problem.horizon(), problem.control_dim());
    let stacked = Stacked { problem };

    let box_dims: usize = (0..t_len)
        .filter(|&t| matches!(problem.control_set(t), ControlSet::Box { .. }))
        .count()
        * m;
    let finite_count: f64 = (0..t_len)
        .map(|t| match problem.control_set(t) {
            ControlSet::Finite(p) => p.len() as f64,
            _ => 1.0,
        })
        .product();
    if finite_count > opts.grid_budget as f64 {
        return Err(Error::Unsupported("finite control sets exceed the grid budget".into()));
    }
    let per_dim = if box_dims == 0 {
        1
    } else {
        ((opts.grid_budget as f64 / finite_count).powf(1.0 / box_dims as f64).floor() as usize).max(3)
    };
    let widest = (0..t_len)
        .filter_map(|t| problem.control_set(t).bounds())
        .map(|(lo, hi)| (hi - lo).amax())
        .fold(0.0, f64::max);

    let mut incumbent: Option<(Vec<DVector<f64>>, f64)> = None;
    let mut spacing = widest / (per_dim.max(2) - 1) as f64;
    let mut half_width = f64::INFINITY;
    let mut levels = 0;
    loop {
        let centers = incumbent.as_ref().map(|(u, _)| u.clone());
        let stages: Vec<Vec<DVector<f64>>> = (0..t_len)
            .map(|t| stage_candidates(problem.control_set(t), centers.as_ref().map(|c| &c[t]), half_width, per_dim))
            .collect();
        let mut counter = vec![0usize; t_len];
        'enumerate: loop {
            let controls: Vec<DVector<f64>> = (0..t_len).map(|t| stages[t][counter[t]].clone()).collect();
            if let Ok(traj) = rollout(problem, &controls) {
                if state_violation(problem, &traj) <= CONSTRAINT_TOL {
                    let f = total_cost(problem, &traj);
                    if incumbent.as_ref().is_none_or(|(_, best)| f < *best) {
                        incumbent = Some((controls, f));
                    }
                }
            }
            for t in (0..t_len).rev() {
                counter[t] += 1;
                if counter[t] < stages[t].len() {
                    continue 'enumerate;
                }
                counter[t] = 0;
            }
            break;
        }
        levels += 1;
        if incumbent.is_none() {
            return Err(Error::Infeasible("no grid point satisfies the constraints".into()));
        }
        if box_dims == 0 || spacing <= opts.grid_res {
            break;
        }
        half_width = 2.0 * spacing;
        spacing = 2.0 * half_width / (per_dim - 1) as f64;
    }
    let (controls, grid_f) = incumbent.expect("checked above");
    let z_grid = stack(&controls);

    let mut z = z_grid.clone();
    let mut status = SolveStatus::Converged;
    let mut history = vec![grid_f];
    let mut iterations = levels;
    if let Ok(set) = FeasibleSet::build(problem) {
        let polish = projected_descent(&stacked, &set, &z_grid, opts);
        if polish.objective <= grid_f {
            z = polish.z;
            status = polish.status;
            iterations += polish.iterations;
            history.extend(polish.history.into_iter().skip(1));
        }
    }
    let traj = stacked.trajectory(&z)?;
    finish(problem, opts, traj, status, iterations, history)
}
