//! Single shooting on the state/adjoint boundary-value problem.
//!
//! The unknowns are the first adjoint `p_1` and the frequency multiplier
//! `λ` (with `ν = 1`). A forward pass solves the stationarity equation for
//! `u_t` at each stage and carries the adjoint forward by inverting the
//! adjoint recursion; the boundary mismatch is transversality at `T`, the
//! normal component of `p_1`, and the frequency constraint.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{finish, SolveOptions, SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{lstsq, projector_range, rank};
use crate::manifold::gaussian;
use crate::ocp::{rollout, ControlProblem, ControlSet, Trajectory, DYNAMICS_TOL};
use crate::pmp::backward_adjoint;

const INNER_MAX_ITERS: usize = 60;

fn row_to_vec(j: DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(j.as_slice())
}

struct Shooter<'a> {
    problem: &'a ControlProblem,
    tol: f64,
}

struct Forward {
    controls: Vec<DVector<f64>>,
    residual: DVector<f64>,
}

impl Shooter<'_> {
    fn n(&self) -> usize {
        self.problem.state_dim()
    }

    fn ell(&self) -> usize {
        self.problem.freq_matrices().ell
    }

    fn affine_rows(&self, t: usize) -> (DMatrix<f64>, DVector<f64>) {
        match self.problem.control_set(t) {
            ControlSet::Affine { c, d } => (c.clone(), d.clone()),
            _ => (DMatrix::zeros(0, self.problem.control_dim()), DVector::zeros(0)),
        }
    }

    fn step(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let next = self.problem.dynamics(t).try_eval(x, u)?;
        let defect = self.problem.manifold().defect(&next);
        if defect > DYNAMICS_TOL {
            return Err(Error::DynamicsLeftManifold { stage: t, defect });
        }
        Ok(if defect > 0.0 { self.problem.manifold().project(&next) } else { next })
    }

    /// `p_{t+1}` at `x_{t+1} = f_t(x_t, u)` consistent with `p_t`; at `t = 0`
    /// it is the unknown `p_1` itself.
    fn next_adjoint(&self, t: usize, x: &DVector<f64>, u: &DVector<f64>, p: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.problem.manifold();
        let x_next = self.step(t, x, u)?;
        let p_next_proj = m.projector_at(&x_next);
        if t == 0 {
            return Ok(&p_next_proj * p);
        }
        let p_t = m.projector_at(x);
        let f = self.problem.dynamics(t);
        let jx = f.jacobian_state(x, u)?;
        let cx = row_to_vec(self.problem.stage_cost(t).jacobian_state(x, u)?);
        // Solve in tangent coordinates; the ambient system is rank deficient.
        let (b_t, b_next) = (projector_range(&p_t), projector_range(&p_next_proj));
        let lhs = b_t.transpose() * jx.transpose() * &b_next;
        let rhs = b_t.transpose() * (p + cx);
        Ok(&b_next * lstsq(&lhs, &rhs))
    }

    /// Stationarity equation at stage `t` in the unknowns `(u, β)`.
    fn stage_residual(&self, t: usize, x: &DVector<f64>, p: &DVector<f64>, lambda: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        let mdim = self.problem.control_dim();
        let (c, d) = self.affine_rows(t);
        let u = v.rows(0, mdim).into_owned();
        let beta = v.rows(mdim, c.nrows()).into_owned();
        let q = self.next_adjoint(t, x, &u, p)?;
        let f = self.problem.dynamics(t);
        let ju = f.jacobian_control(x, &u)?;
        let cu = row_to_vec(self.problem.stage_cost(t).jacobian_control(x, &u)?);
        let e = &self.problem.freq_matrices().matrices[t];
        let w = ju.transpose() * q - cu + e.transpose() * lambda + c.transpose() * beta;
        let mut r = DVector::zeros(mdim + c.nrows());
        r.rows_mut(0, mdim).copy_from(&w);
        r.rows_mut(mdim, c.nrows()).copy_from(&(&c * &u - d));
        Ok(r)
    }

    /// Newton solve of the stage equation from `u_guess`.
    fn solve_stage(&self, t: usize, x: &DVector<f64>, p: &DVector<f64>, lambda: &DVector<f64>, u_guess: &DVector<f64>) -> Result<DVector<f64>> {
        let mdim = self.problem.control_dim();
        let k = self.affine_rows(t).0.nrows();
        let mut v = DVector::zeros(mdim + k);
        v.rows_mut(0, mdim).copy_from(u_guess);
        let mut r = self.stage_residual(t, x, p, lambda, &v)?;
        let scale = 1.0 + p.norm() + lambda.norm();
        for _ in 0..INNER_MAX_ITERS {
            if r.norm() <= 1e-13 * scale {
                return Ok(v.rows(0, mdim).into_owned());
            }
            let mut jac = DMatrix::zeros(r.len(), v.len());
            for i in 0..v.len() {
                let h = 1e-7 * (1.0 + v[i].abs());
                let mut vp = v.clone();
                vp[i] += h;
                let mut vm = v.clone();
                vm[i] -= h;
                let col = (self.stage_residual(t, x, p, lambda, &vp)? - self.stage_residual(t, x, p, lambda, &vm)?) / (2.0 * h);
                jac.set_column(i, &col);
            }
            if rank(&jac) < v.len() {
                return Err(Error::SingularStationarity { stage: t });
            }
            let delta = lstsq(&jac, &(-&r));
            let mut alpha = 1.0;
            let mut improved = false;
            while alpha > 1e-6 {
                let trial = &v + alpha * &delta;
                if let Ok(rt) = self.stage_residual(t, x, p, lambda, &trial) {
                    if rt.norm() < r.norm() {
                        v = trial;
                        r = rt;
                        improved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !improved {
                break;
            }
        }
        if r.norm() <= 1e-9 * scale {
            Ok(v.rows(0, mdim).into_owned())
        } else {
            Err(Error::NonConvergence {
                iterations: INNER_MAX_ITERS,
                residual: r.norm(),
            })
        }
    }

    fn forward(&self, theta: &DVector<f64>, warm: &[DVector<f64>]) -> Result<Forward> {
        let (n, ell) = (self.n(), self.ell());
        let p1 = theta.rows(0, n).into_owned();
        let lambda = theta.rows(n, ell).into_owned();
        let m = self.problem.manifold();
        let t_len = self.problem.horizon();
        let mut x = self.problem.x_init().clone();
        let mut p = p1.clone();
        let mut controls = Vec::with_capacity(t_len);
        let mut x1 = x.clone();
        for (t, guess) in warm.iter().enumerate().take(t_len) {
            let u = self.solve_stage(t, &x, &p, &lambda, guess)?;
            p = self.next_adjoint(t, &x, &u, &p)?;
            x = self.step(t, &x, &u)?;
            if t == 0 {
                x1 = x.clone();
            }
            controls.push(u);
        }
        let c_term = row_to_vec(self.problem.terminal_cost().jacobian_state(&x, &DVector::zeros(0))?);
        let transversality = m.projector_at(&x) * (&p + c_term);
        let normal = &p1 - m.projector_at(&x1) * &p1;
        let freq = crate::frequency::freq_residual(self.problem.freq_matrices(), &controls)?;
        let mut residual = DVector::zeros(2 * n + ell);
        residual.rows_mut(0, n).copy_from(&transversality);
        residual.rows_mut(n, n).copy_from(&normal);
        residual.rows_mut(2 * n, ell).copy_from(&freq);
        Ok(Forward { controls, residual })
    }

    /// Gauss–Newton on the boundary mismatch with a finite-difference
    /// Jacobian.
    fn newton(&self, theta0: DVector<f64>, guess: &[DVector<f64>], max_iters: usize) -> Result<(Forward, usize)> {
        let mut theta = theta0;
        let mut fwd = self.forward(&theta, guess)?;
        for iter in 0..max_iters {
            if fwd.residual.norm() <= self.tol {
                return Ok((fwd, iter));
            }
            let mut jac = DMatrix::zeros(fwd.residual.len(), theta.len());
            for i in 0..theta.len() {
                let h = 1e-7 * (1.0 + theta[i].abs());
                let mut tp = theta.clone();
                tp[i] += h;
                let mut tm = theta.clone();
                tm[i] -= h;
                let fp = self.forward(&tp, &fwd.controls)?;
                let fm = self.forward(&tm, &fwd.controls)?;
                jac.set_column(i, &((fp.residual - fm.residual) / (2.0 * h)));
            }
            let delta = lstsq(&jac, &(-&fwd.residual));
            let mut alpha = 1.0;
            let mut next = None;
            while alpha > 1e-8 {
                let trial = &theta + alpha * &delta;
                if let Ok(f) = self.forward(&trial, &fwd.controls) {
                    if f.residual.norm() < fwd.residual.norm() {
                        next = Some((trial, f));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((t_new, f_new)) = next else {
                return Err(Error::NonConvergence {
                    iterations: iter,
                    residual: fwd.residual.norm(),
                });
            };
            theta = t_new;
            fwd = f_new;
        }
        if fwd.residual.norm() <= self.tol {
            Ok((fwd, max_iters))
        } else {
            Err(Error::NonConvergence {
                iterations: max_iters,
                residual: fwd.residual.norm(),
            })
        }
    }
}

/// Indirect single shooting. Requires no state constraints and full or
/// affine control sets. `init_guess` seeds the controls (zeros otherwise);
/// further starts perturb the initial adjoint.
pub fn solve_shooting(problem: &ControlProblem, opts: &SolveOptions, init_guess: Option<&[DVector<f64>]>) -> Result<SolveResult> {
    opts.validate()?;
    if problem.has_state_constraints() {
        return Err(Error::Unsupported("shooting does not handle state constraints".into()));
    }
    for t in 0..problem.horizon() {
        if !matches!(problem.control_set(t), ControlSet::Full { .. } | ControlSet::Affine { .. }) {
            return Err(Error::Unsupported(format!("shooting needs full or affine control sets (stage {t})")));
        }
    }
    let (t_len, m) = (problem.horizon(), problem.control_dim());
    let guess: Vec<DVector<f64>> = match init_guess {
        Some(g) => {
            crate::error::check_dim("initial guess length", t_len, g.len())?;
            g.to_vec()
        }
        None => vec![DVector::zeros(m); t_len],
    };
    let n = problem.state_dim();
    let ell = problem.freq_matrices().ell;
    let mut theta0 = DVector::zeros(n + ell);
    if let Ok(traj) = rollout(problem, &guess) {
        let mus: Vec<_> = (1..=t_len).map(|_| DVector::zeros(0)).collect();
        if let Ok(adj) = backward_adjoint(problem, &traj, 1.0, &mus) {
            theta0.rows_mut(0, n).copy_from(&adj[0]);
        }
    }
    let shooter = Shooter {
        problem,
        tol: opts.tol.max(1e-12),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut last_err = None;
    for start in 0..opts.starts {
        let theta = if start == 0 {
            theta0.clone()
        } else {
            &theta0 + gaussian(&mut rng, n + ell) * (1.0 + theta0.norm())
        };
        match shooter.newton(theta, &guess, opts.max_iters.min(200)) {
            Ok((fwd, iterations)) => {
                let traj: Trajectory = rollout(problem, &fwd.controls)?;
                return finish(problem, opts, traj, SolveStatus::Converged, iterations, Vec::new());
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.unwrap_or(Error::NonConvergence {
        iterations: 0,
        residual: f64::INFINITY,
    }))
}
