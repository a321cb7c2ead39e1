//! Small reference problems used by the tests, examples and CLI fixtures.

use nalgebra::{DMatrix, DVector};

use crate::frequency::FrequencySpec;
use crate::manifold::Manifold;
use crate::ocp::{ControlProblem, ControlSet};
use crate::smooth_map::builtin::{self, affine_state_constraint, linear, planar_rotation, QuadraticCost};

fn scalar(v: f64) -> DVector<f64> {
    DVector::from_element(1, v)
}

fn one() -> DMatrix<f64> {
    DMatrix::identity(1, 1)
}

fn integrator() -> crate::smooth_map::SmoothMap {
    linear(one(), one(), None)
}

fn lqr_costs() -> (crate::smooth_map::SmoothMap, crate::smooth_map::SmoothMap) {
    (QuadraticCost::new(one(), one()).build(), QuadraticCost::terminal(one()).build())
}

/// `x⁺ = x + u`, `c = (x² + u²)/2`, `c_T = x²/2`, `x_0 = 1`, `T = 2`.
pub fn flat_lqr() -> ControlProblem {
    scalar_lqr(2)
}

/// The scalar LQR problem of [`flat_lqr`] with horizon `t_len`.
pub fn scalar_lqr(t_len: usize) -> ControlProblem {
    let (c, ct) = lqr_costs();
    ControlProblem::builder(Manifold::euclidean(1), scalar(1.0), t_len, 1)
        .dynamics(integrator())
        .stage_cost(c)
        .terminal_cost(ct)
        .build()
        .expect("valid fixture")
}

/// Scalar LQR from `x_0 = 3` with `U = [−1, 1]`, `T = 3`; the unconstrained
/// optimum leaves the box.
pub fn box_scalar() -> ControlProblem {
    let (c, ct) = lqr_costs();
    ControlProblem::builder(Manifold::euclidean(1), scalar(3.0), 3, 1)
        .dynamics(integrator())
        .stage_cost(c)
        .terminal_cost(ct)
        .control_set(ControlSet::interval(-1.0, 1.0))
        .build()
        .expect("valid fixture")
}

/// Rotate `(1, 0)` on the unit circle towards `(0, 1)`: `x⁺ = R(u) x`,
/// `c = u²/2`, `c_T = ½‖x − (0, 1)‖²`, `T = 3`.
pub fn circle_steering() -> ControlProblem {
    let target = DVector::from_vec(vec![0.0, 1.0]);
    ControlProblem::builder(Manifold::circle(), DVector::from_vec(vec![1.0, 0.0]), 3, 1)
        .dynamics(planar_rotation(one()))
        .stage_cost(QuadraticCost::new(DMatrix::zeros(2, 2), one()).build())
        .terminal_cost(QuadraticCost::terminal(DMatrix::identity(2, 2)).with_x_ref(target).build())
        .build()
        .expect("valid fixture")
}

/// `x⁺ = x + u` from `x_0 = 0`, `c = u²/2`, `c_T = ½(x − 2)²`, with
/// `x_2 ≤ 0.8` and `U = [−2, 2]`, `T = 3`. The constraint is active at the
/// optimum.
pub fn state_constrained() -> ControlProblem {
    ControlProblem::builder(Manifold::euclidean(1), scalar(0.0), 3, 1)
        .dynamics(integrator())
        .stage_cost(QuadraticCost::new(DMatrix::zeros(1, 1), one()).build())
        .terminal_cost(QuadraticCost::terminal(one()).with_x_ref(scalar(2.0)).build())
        .state_constraint(2, affine_state_constraint(one(), scalar(0.8)))
        .control_set(ControlSet::interval(-2.0, 2.0))
        .build()
        .expect("valid fixture")
}

/// Scalar LQR with `T = 4` whose control may only carry the DC bin.
pub fn frequency_lqr() -> ControlProblem {
    let (c, ct) = lqr_costs();
    ControlProblem::builder(Manifold::euclidean(1), scalar(1.0), 4, 1)
        .dynamics(integrator())
        .stage_cost(c)
        .terminal_cost(ct)
        .frequency(FrequencySpec::from_slices(4, &[&[0]]).expect("valid bins"))
        .build()
        .expect("valid fixture")
}

/// The five reference problems with their names.
pub fn acceptance_fixtures() -> Vec<(&'static str, ControlProblem)> {
    vec![
        ("flat_lqr", flat_lqr()),
        ("box_scalar", box_scalar()),
        ("circle_steering", circle_steering()),
        ("state_constrained", state_constrained()),
        ("frequency_lqr", frequency_lqr()),
    ]
}

/// Scalar integrator whose control sets are single points, so the
/// trajectory is pinned, with a terminal bound active at the pinned end.
pub fn pinned(t_len: usize, value: f64) -> ControlProblem {
    let (c, ct) = lqr_costs();
    let end = 1.0 + t_len as f64 * value;
    ControlProblem::builder(Manifold::euclidean(1), scalar(1.0), t_len, 1)
        .dynamics(integrator())
        .stage_cost(c)
        .terminal_cost(ct)
        .control_set(ControlSet::single_point(scalar(value)))
        .state_constraint(t_len, affine_state_constraint(one(), scalar(end)))
        .build()
        .expect("valid fixture")
}

/// Identity dynamics with zero costs.
pub fn inert(n: usize, m: usize, t_len: usize) -> ControlProblem {
    ControlProblem::builder(Manifold::euclidean(n), DVector::zeros(n), t_len, m)
        .dynamics(builtin::identity(n, m))
        .build()
        .expect("valid fixture")
}
