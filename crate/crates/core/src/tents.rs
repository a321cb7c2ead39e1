//! Local tents of control sets, their dual cones, active sets of state
//! constraints, and the regularity test for constraint multipliers.

use std::collections::BTreeSet;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::nnls;
use crate::manifold::ManifoldPoint;
use crate::ocp::ControlSet;
use crate::smooth_map::SmoothMap;

/// Absolute activation tolerance.
pub const ACTIVATION_TOL: f64 = 1e-8;
/// An LP optimum below this counts as zero in the regularity test.
pub const REGULARITY_TOL: f64 = 1e-9;

/// Cone `{d : G d ≤ 0, C d = 0}` with apex at `vertex`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeH {
    pub vertex: DVector<f64>,
    pub inequalities: DMatrix<f64>,
    pub equalities: DMatrix<f64>,
}

impl ConeH {
    pub fn full_space(vertex: DVector<f64>) -> Self {
        let m = vertex.len();
        ConeH {
            vertex,
            inequalities: DMatrix::zeros(0, m),
            equalities: DMatrix::zeros(0, m),
        }
    }

    /// The cone `{0}`.
    pub fn trivial(vertex: DVector<f64>) -> Self {
        let m = vertex.len();
        ConeH {
            vertex,
            inequalities: DMatrix::zeros(0, m),
            equalities: DMatrix::identity(m, m),
        }
    }

    pub fn dim(&self) -> usize {
        self.vertex.len()
    }

    pub fn is_full_space(&self) -> bool {
        self.inequalities.nrows() == 0 && self.equalities.nrows() == 0
    }

    pub fn contains(&self, d: &DVector<f64>, tol: f64) -> bool {
        (&self.inequalities * d).iter().all(|&v| v <= tol) && (&self.equalities * d).iter().all(|v| v.abs() <= tol)
    }
}

/// Cone `cone(generators) + span(lineality)`, columns as generators.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConeV {
    pub vertex: DVector<f64>,
    pub generators: DMatrix<f64>,
    pub lineality: DMatrix<f64>,
}

impl ConeV {
    pub fn dim(&self) -> usize {
        self.vertex.len()
    }

    /// Columns `[G, L, −L]` spanning the cone with nonnegative weights.
    pub fn conic_columns(&self) -> DMatrix<f64> {
        let m = self.dim();
        let (k, l) = (self.generators.ncols(), self.lineality.ncols());
        let mut cols = DMatrix::zeros(m, k + 2 * l);
        cols.view_mut((0, 0), (m, k)).copy_from(&self.generators);
        cols.view_mut((0, k), (m, l)).copy_from(&self.lineality);
        cols.view_mut((0, k + l), (m, l)).copy_from(&(-&self.lineality));
        cols
    }

    /// Euclidean distance from `y` to the cone, by nonnegative least squares.
    pub fn distance(&self, y: &DVector<f64>) -> f64 {
        let cols = self.conic_columns();
        if cols.ncols() == 0 {
            return y.norm();
        }
        nnls(&cols, y).residual_norm()
    }

    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> bool {
        self.distance(y) <= tol
    }
}

/// Local tent of `set` at `u` with the default activation tolerance.
pub fn local_tent(set: &ControlSet, u: &DVector<f64>) -> Result<ConeH> {
    local_tent_with_tol(set, u, ACTIVATION_TOL)
}

/// Supporting cone for boxes and polytopes, linearized active constraints
/// for smooth inequality sets, the tangent plane for affine sets, the whole
/// space for `Full`, and `{0}` for finite sets.
pub fn local_tent_with_tol(set: &ControlSet, u: &DVector<f64>, tol: f64) -> Result<ConeH> {
    check_dim("control dimension", set.dim(), u.len())?;
    let violation = set.violation(u);
    if violation > tol {
        return Err(Error::NotInSet {
            control: u.iter().copied().collect(),
            violation,
        });
    }
    let m = u.len();
    let rows_where = |a: &DMatrix<f64>, slack: &DVector<f64>| -> DMatrix<f64> {
        let idx: Vec<usize> = (0..a.nrows()).filter(|&i| slack[i].abs() <= tol).collect();
        a.select_rows(&idx)
    };
    let cone = match set {
        ControlSet::Box { .. } | ControlSet::Polytope { .. } => {
            let (a, b, _, _) = set.linear_description().expect("linear set");
            let slack = &a * u - b;
            ConeH {
                vertex: u.clone(),
                inequalities: rows_where(&a, &slack),
                equalities: DMatrix::zeros(0, m),
            }
        }
        ControlSet::SmoothIneq(h) => {
            let x = DVector::zeros(0);
            let values = h.eval(&x, u);
            let jac = h.jacobian_control(&x, u)?;
            let active = rows_where(&jac, &values);
            if let Some(i) = (0..active.nrows()).find(|&i| active.row(i).norm() == 0.0) {
                return Err(Error::Unsupported(format!(
                    "active constraint {i} of `{}` has a vanishing gradient; no tent available",
                    h.name()
                )));
            }
            ConeH {
                vertex: u.clone(),
                inequalities: active,
                equalities: DMatrix::zeros(0, m),
            }
        }
        ControlSet::Affine { c, .. } => ConeH {
            vertex: u.clone(),
            inequalities: DMatrix::zeros(0, m),
            equalities: c.clone(),
        },
        ControlSet::Full { .. } => ConeH::full_space(u.clone()),
        ControlSet::Finite(_) => ConeH::trivial(u.clone()),
    };
    Ok(cone)
}

/// Polar cone `{y : ⟨y, d⟩ ≤ 0 for all d in the cone}`, generated by the
/// inequality rows with the equality rows as lineality (Farkas).
pub fn dual_cone(cone: &ConeH) -> ConeV {
    ConeV {
        vertex: cone.vertex.clone(),
        generators: cone.inequalities.transpose(),
        lineality: cone.equalities.transpose(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActiveSet {
    pub indices: BTreeSet<usize>,
}

/// Indices `j` with `|gʲ(x)| ≤ tol`.
pub fn active_set(g: &SmoothMap, x: &ManifoldPoint, tol: f64) -> Result<ActiveSet> {
    let values = g.try_eval(x.ambient(), &DVector::zeros(0))?;
    if let Some(j) = (0..values.len()).find(|&j| values[j] > tol) {
        return Err(Error::InfeasiblePoint { index: j, value: values[j] });
    }
    Ok(ActiveSet {
        indices: (0..values.len()).filter(|&j| values[j].abs() <= tol).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Regularity {
    pub regular: bool,
    /// A nonzero `μ ≥ 0` on the active set whose pullback vanishes, when not
    /// regular.
    pub witness: Option<DVector<f64>>,
}

/// Decides whether `μ = 0` is the only nonnegative multiplier supported on
/// the active set with vanishing pullback, by maximizing `Σ μ` over
/// `0 ≤ μ ≤ 1` subject to the pullback condition.
pub fn is_regular(g: &SmoothMap, x: &ManifoldPoint) -> Result<Regularity> {
    let u0 = DVector::zeros(0);
    let values = g.try_eval(x.ambient(), &u0)?;
    if let Some(j) = (0..values.len()).find(|&j| values[j] > ACTIVATION_TOL) {
        return Err(Error::InfeasiblePoint { index: j, value: values[j] });
    }
    let active: Vec<usize> = (0..values.len()).filter(|&j| values[j].abs() <= ACTIVATION_TOL).collect();
    let r = values.len();
    if active.is_empty() {
        return Ok(Regularity { regular: true, witness: None });
    }
    // Columns are the pulled-back constraint gradients, each normalized so the
    // verdict does not depend on the scale of individual components.
    let pulled = x.tangent_projector() * g.jacobian_state(x.ambient(), &u0)?.transpose();
    let cols: Vec<DVector<f64>> = active
        .iter()
        .map(|&j| {
            let c = pulled.column(j).into_owned();
            let n = c.norm();
            if n > 0.0 {
                c / n
            } else {
                c
            }
        })
        .collect();

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = active.iter().map(|_| lp.add_var(1.0, (0.0, 1.0))).collect();
    for i in 0..pulled.nrows() {
        let row: Vec<_> = vars.iter().zip(&cols).map(|(&v, c)| (v, c[i])).collect();
        lp.add_constraint(&row[..], ComparisonOp::Eq, 0.0);
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::Unsupported(format!("regularity LP failed: {e}")))?;
    if solution.objective() <= REGULARITY_TOL {
        return Ok(Regularity { regular: true, witness: None });
    }
    // Undo the column normalization so the witness annihilates the raw pullback.
    let mut witness = DVector::zeros(r);
    for (k, &j) in active.iter().enumerate() {
        let n = pulled.column(j).norm();
        witness[j] = (if n > 0.0 { solution[vars[k]] / n } else { solution[vars[k]] }).max(0.0);
    }
    let scale = witness.amax();
    Ok(Regularity {
        regular: false,
        witness: Some(witness / scale),
    })
}
