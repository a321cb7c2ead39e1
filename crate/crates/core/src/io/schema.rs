//! JSON problem files (`"version": "geopmp-problem/1"`).
//!
//! Maps are given as named builtin forms with parameter matrices; matrices
//! are arrays of rows. `dynamics`, `stage_costs` and `control_sets` accept a
//! single entry (used at every stage) or one entry per stage.
//!
//! ```json
//! {
//!   "version": "geopmp-problem/1",
//!   "horizon": 2,
//!   "control_dim": 1,
//!   "manifold": { "kind": "euclidean", "dim": 1 },
//!   "x_init": [1.0],
//!   "dynamics": { "form": "linear", "a": [[1.0]], "b": [[1.0]] },
//!   "stage_costs": { "form": "quadratic", "q": [[1.0]], "r": [[1.0]] },
//!   "terminal_cost": { "form": "quadratic", "q": [[1.0]] },
//!   "state_constraints": [{ "form": "affine", "time": 2, "a": [[1.0]], "b": [0.5] }],
//!   "control_sets": { "kind": "box", "lower": [-1.0], "upper": [1.0] },
//!   "freq_support": [[0, 1]]
//! }
//! ```

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::ParseError;
use crate::frequency::FrequencySpec;
use crate::manifold::Manifold;
use crate::ocp::{ControlProblem, ControlSet};
use crate::smooth_map::builtin::{self, QuadraticCost, QuadraticRow};
use crate::smooth_map::SmoothMap;

pub const SCHEMA_VERSION: &str = "geopmp-problem/1";

pub type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    Euclidean { dim: usize },
    Sphere { ambient: usize },
    Circle,
    So3,
    Product { factors: Vec<ManifoldSpec> },
    Embedded { base: Box<ManifoldSpec>, basis: Rows, origin: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum DynamicsSpec {
    Linear {
        a: Rows,
        b: Rows,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        c: Option<Vec<f64>>,
    },
    Identity,
    PlanarRotation { b: Rows },
    SphereRotation { b: Rows },
    So3RightRotation { b: Rows },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Zero,
    /// `½(x−x̄)ᵀQ(x−x̄) + ½(u−ū)ᵀR(u−ū) + (x−x̄)ᵀS(u−ū) + qᵀx + rᵀu + k`;
    /// omitted terms are zero.
    Quadratic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Rows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<Rows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s: Option<Rows>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        x_ref: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u_ref: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q_lin: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_lin: Option<Vec<f64>>,
        #[serde(default)]
        constant: f64,
    },
}

/// `½ zᵀ H z + aᵀ z − b ≤ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticRowSpec {
    pub h: Rows,
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConstraintSpec {
    /// `A x − b ≤ 0`.
    Affine { time: usize, a: Rows, b: Vec<f64> },
    Quadratic { time: usize, rows: Vec<QuadraticRowSpec> },
}

impl StateConstraintSpec {
    pub fn time(&self) -> usize {
        match self {
            StateConstraintSpec::Affine { time, .. } | StateConstraintSpec::Quadratic { time, .. } => *time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Full,
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Polytope { a: Rows, b: Vec<f64> },
    Affine { c: Rows, d: Vec<f64> },
    Finite { points: Rows },
    Quadratic { rows: Vec<QuadraticRowSpec> },
}

/// A problem file with per-stage lists expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub version: String,
    pub horizon: usize,
    pub control_dim: usize,
    pub manifold: ManifoldSpec,
    pub x_init: Vec<f64>,
    pub dynamics: Vec<DynamicsSpec>,
    pub stage_costs: Vec<CostSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_cost: Option<CostSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub state_constraints: Vec<StateConstraintSpec>,
    pub control_sets: Vec<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freq_support: Option<Vec<Vec<usize>>>,
}

const FIELDS: [&str; 11] = [
    "version",
    "horizon",
    "control_dim",
    "manifold",
    "x_init",
    "dynamics",
    "stage_costs",
    "terminal_cost",
    "state_constraints",
    "control_sets",
    "freq_support",
];

fn pointer_of(prefix: &str, path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = prefix.to_string();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    out
}

fn typed<T: DeserializeOwned>(v: &Value, ptr: &str) -> Result<T, ParseError> {
    serde_path_to_error::deserialize(v).map_err(|e| {
        let p = pointer_of(ptr, e.path());
        ParseError::new(p, e.into_inner().to_string())
    })
}

fn stagewise<T: DeserializeOwned + Clone>(
    root: &serde_json::Map<String, Value>,
    key: &str,
    horizon: usize,
) -> Result<Option<Vec<T>>, ParseError> {
    let ptr = format!("/{key}");
    match root.get(key) {
        None => Ok(None),
        Some(Value::Array(items)) => {
            if items.len() != horizon {
                return Err(ParseError::new(ptr, format!("expected {horizon} entries (one per stage), found {}", items.len())));
            }
            items
                .iter()
                .enumerate()
                .map(|(i, v)| typed(v, &format!("{ptr}/{i}")))
                .collect::<Result<Vec<T>, _>>()
                .map(Some)
        }
        Some(v) => Ok(Some(vec![typed::<T>(v, &ptr)?; horizon])),
    }
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, ParseError> {
        let value: Value = serde_json::from_str(text).map_err(|e| ParseError::new("", format!("invalid JSON: {e}")))?;
        let Value::Object(root) = &value else {
            return Err(ParseError::new("", "problem file must be a JSON object"));
        };
        if let Some(k) = root.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(ParseError::new(format!("/{k}"), format!("unknown field `{k}`")));
        }
        let required = |k: &str| root.get(k).ok_or_else(|| ParseError::new("", format!("missing field `{k}`")));
        let version: String = typed(required("version")?, "/version")?;
        if version != SCHEMA_VERSION {
            return Err(ParseError::new("/version", format!("unsupported version `{version}`, expected `{SCHEMA_VERSION}`")));
        }
        let horizon: usize = typed(required("horizon")?, "/horizon")?;
        if horizon == 0 {
            return Err(ParseError::new("/horizon", "horizon must be ≥ 1"));
        }
        let control_dim: usize = typed(required("control_dim")?, "/control_dim")?;
        let manifold: ManifoldSpec = typed(required("manifold")?, "/manifold")?;
        let x_init: Vec<f64> = typed(required("x_init")?, "/x_init")?;
        let dynamics = stagewise(root, "dynamics", horizon)?.ok_or_else(|| ParseError::new("", "missing field `dynamics`"))?;
        let stage_costs = stagewise(root, "stage_costs", horizon)?.unwrap_or_else(|| vec![CostSpec::Zero; horizon]);
        let control_sets = stagewise(root, "control_sets", horizon)?.unwrap_or_else(|| vec![SetSpec::Full; horizon]);
        let terminal_cost = root.get("terminal_cost").map(|v| typed(v, "/terminal_cost")).transpose()?;
        let state_constraints: Vec<StateConstraintSpec> = match root.get("state_constraints") {
            Some(v) => typed(v, "/state_constraints")?,
            None => Vec::new(),
        };
        let freq_support: Option<Vec<Vec<usize>>> = root.get("freq_support").map(|v| typed(v, "/freq_support")).transpose()?;
        let file = ProblemFile {
            version,
            horizon,
            control_dim,
            manifold,
            x_init,
            dynamics,
            stage_costs,
            terminal_cost,
            state_constraints,
            control_sets,
            freq_support,
        };
        file.check_freq_support()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files serialize")
    }

    fn check_freq_support(&self) -> Result<(), ParseError> {
        let Some(fs) = &self.freq_support else { return Ok(()) };
        if fs.len() != self.control_dim {
            return Err(ParseError::new(
                "/freq_support",
                format!("freq_support needs one bin list per control component ({}), found {}", self.control_dim, fs.len()),
            ));
        }
        for (k, bins) in fs.iter().enumerate() {
            for (i, &b) in bins.iter().enumerate() {
                if b >= self.horizon {
                    return Err(ParseError::new(
                        format!("/freq_support/{k}/{i}"),
                        format!("freq_support bin {b} is out of bounds: bins must lie in 0..{}", self.horizon),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Builds and validates the problem.
    pub fn build(&self) -> Result<ControlProblem, ParseError> {
        let manifold = build_manifold(&self.manifold, "/manifold")?;
        let n = manifold.ambient_dim();
        let m = self.control_dim;
        let x_init = vector(&self.x_init, n, "/x_init")?;
        if let Err(e) = manifold.check_member(&x_init) {
            return Err(ParseError::new("/x_init", e.to_string()));
        }
        let dynamics = self
            .dynamics
            .iter()
            .enumerate()
            .map(|(t, d)| build_dynamics(d, n, m, &format!("/dynamics/{t}")))
            .collect::<Result<Vec<_>, _>>()?;
        let stage_costs = self
            .stage_costs
            .iter()
            .enumerate()
            .map(|(t, c)| build_cost(c, n, m, &format!("/stage_costs/{t}")))
            .collect::<Result<Vec<_>, _>>()?;
        let control_sets = self
            .control_sets
            .iter()
            .enumerate()
            .map(|(t, s)| build_set(s, m, &format!("/control_sets/{t}")))
            .collect::<Result<Vec<_>, _>>()?;
        let mut b = ControlProblem::builder(manifold, x_init, self.horizon, m)
            .dynamics_per_stage(dynamics)
            .stage_costs(stage_costs)
            .control_sets(control_sets);
        if let Some(c) = &self.terminal_cost {
            b = b.terminal_cost(build_cost(c, n, 0, "/terminal_cost")?);
        }
        for (i, g) in self.state_constraints.iter().enumerate() {
            let ptr = format!("/state_constraints/{i}");
            let t = g.time();
            if t == 0 || t > self.horizon {
                return Err(ParseError::new(format!("{ptr}/time"), format!("time {t} outside 1..={}", self.horizon)));
            }
            b = b.state_constraint(t, build_state_constraint(g, n, &ptr)?);
        }
        if let Some(fs) = &self.freq_support {
            let spec = FrequencySpec::new(self.horizon, fs.iter().map(|w| w.iter().copied().collect()).collect())
                .map_err(|e| ParseError::new("/freq_support", e.to_string()))?;
            b = b.frequency(spec);
        }
        let mut problem = b.build().map_err(|e| ParseError::new("", e.to_string()))?;
        problem.source = Some(std::sync::Arc::new(self.clone()));
        Ok(problem)
    }
}

fn matrix(rows: &Rows, shape: (Option<usize>, Option<usize>), ptr: &str) -> Result<DMatrix<f64>, ParseError> {
    let r = rows.len();
    let c = rows.first().map(Vec::len).unwrap_or(shape.1.unwrap_or(0));
    if let Some(i) = rows.iter().position(|row| row.len() != c) {
        return Err(ParseError::new(format!("{ptr}/{i}"), format!("ragged matrix: expected {c} columns")));
    }
    if shape.0.is_some_and(|e| e != r) || shape.1.is_some_and(|e| e != c) {
        let show = |d: Option<usize>| d.map(|v| v.to_string()).unwrap_or_else(|| "·".into());
        return Err(ParseError::new(
            ptr,
            format!("expected a {}×{} matrix, found {r}×{c}", show(shape.0), show(shape.1)),
        ));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn vector(v: &[f64], len: usize, ptr: &str) -> Result<DVector<f64>, ParseError> {
    if v.len() != len {
        return Err(ParseError::new(ptr, format!("expected a vector of length {len}, found {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn build_manifold(spec: &ManifoldSpec, ptr: &str) -> Result<Manifold, ParseError> {
    Ok(match spec {
        ManifoldSpec::Euclidean { dim } => Manifold::euclidean(*dim),
        ManifoldSpec::Sphere { ambient } => {
            if *ambient < 2 {
                return Err(ParseError::new(format!("{ptr}/ambient"), "sphere needs ambient dimension ≥ 2"));
            }
            Manifold::sphere(*ambient)
        }
        ManifoldSpec::Circle => Manifold::circle(),
        ManifoldSpec::So3 => Manifold::so3(),
        ManifoldSpec::Product { factors } => Manifold::product(
            factors
                .iter()
                .enumerate()
                .map(|(i, f)| build_manifold(f, &format!("{ptr}/factors/{i}")))
                .collect::<Result<_, _>>()?,
        ),
        ManifoldSpec::Embedded { base, basis, origin } => {
            let base = build_manifold(base, &format!("{ptr}/base"))?;
            let b = matrix(basis, (None, Some(base.ambient_dim())), &format!("{ptr}/basis"))?;
            let o = vector(origin, b.nrows(), &format!("{ptr}/origin"))?;
            Manifold::embedded(base, b, o).map_err(|e| ParseError::new(format!("{ptr}/basis"), e.to_string()))?
        }
    })
}

fn build_dynamics(spec: &DynamicsSpec, n: usize, m: usize, ptr: &str) -> Result<SmoothMap, ParseError> {
    let gain = |b: &Rows, rows: usize| matrix(b, (Some(rows), Some(m)), &format!("{ptr}/b"));
    let need = |dim: usize, what: &str| {
        if n == dim {
            Ok(())
        } else {
            Err(ParseError::new(ptr, format!("{what} dynamics need state dimension {dim}, manifold has {n}")))
        }
    };
    Ok(match spec {
        DynamicsSpec::Linear { a, b, c } => {
            let c = c.as_ref().map(|c| vector(c, n, &format!("{ptr}/c"))).transpose()?;
            builtin::linear(matrix(a, (Some(n), Some(n)), &format!("{ptr}/a"))?, gain(b, n)?, c)
        }
        DynamicsSpec::Identity => builtin::identity(n, m),
        DynamicsSpec::PlanarRotation { b } => {
            need(2, "planar rotation")?;
            builtin::planar_rotation(gain(b, 1)?)
        }
        DynamicsSpec::SphereRotation { b } => {
            need(3, "sphere rotation")?;
            builtin::sphere_rotation(gain(b, 3)?)
        }
        DynamicsSpec::So3RightRotation { b } => {
            need(9, "SO(3) rotation")?;
            builtin::so3_right_rotation(gain(b, 3)?)
        }
    })
}

fn build_cost(spec: &CostSpec, n: usize, m: usize, ptr: &str) -> Result<SmoothMap, ParseError> {
    Ok(match spec {
        CostSpec::Zero => builtin::zero_cost(n, m),
        CostSpec::Quadratic { q, r, s, x_ref, u_ref, q_lin, r_lin, constant } => {
            let mat = |v: &Option<Rows>, shape: (usize, usize), key: &str| -> Result<DMatrix<f64>, ParseError> {
                match v {
                    Some(rows) => matrix(rows, (Some(shape.0), Some(shape.1)), &format!("{ptr}/{key}")),
                    None => Ok(DMatrix::zeros(shape.0, shape.1)),
                }
            };
            let vec_opt = |v: &Option<Vec<f64>>, len: usize, key: &str| v.as_ref().map(|v| vector(v, len, &format!("{ptr}/{key}"))).transpose();
            if m == 0 && (r.is_some() || s.is_some() || u_ref.is_some() || r_lin.is_some()) {
                return Err(ParseError::new(ptr, "terminal costs cannot depend on the control"));
            }
            let mut c = QuadraticCost::new(mat(q, (n, n), "q")?, mat(r, (m, m), "r")?);
            c.s = s.as_ref().map(|_| mat(s, (n, m), "s")).transpose()?;
            c.x_ref = vec_opt(x_ref, n, "x_ref")?;
            c.u_ref = vec_opt(u_ref, m, "u_ref")?;
            c.q_lin = vec_opt(q_lin, n, "q_lin")?;
            c.r_lin = vec_opt(r_lin, m, "r_lin")?;
            c.constant = *constant;
            c.build()
        }
    })
}

fn build_rows(rows: &[QuadraticRowSpec], dim: usize, ptr: &str) -> Result<Vec<QuadraticRow>, ParseError> {
    if rows.is_empty() {
        return Err(ParseError::new(format!("{ptr}/rows"), "at least one row is required"));
    }
    rows.iter()
        .enumerate()
        .map(|(i, r)| {
            let p = format!("{ptr}/rows/{i}");
            Ok(QuadraticRow {
                h: matrix(&r.h, (Some(dim), Some(dim)), &format!("{p}/h"))?,
                a: vector(&r.a, dim, &format!("{p}/a"))?,
                b: r.b,
            })
        })
        .collect()
}

fn build_state_constraint(spec: &StateConstraintSpec, n: usize, ptr: &str) -> Result<SmoothMap, ParseError> {
    Ok(match spec {
        StateConstraintSpec::Affine { a, b, .. } => {
            let a = matrix(a, (None, Some(n)), &format!("{ptr}/a"))?;
            let b = vector(b, a.nrows(), &format!("{ptr}/b"))?;
            builtin::affine_state_constraint(a, b)
        }
        StateConstraintSpec::Quadratic { rows, .. } => builtin::quadratic_state_constraint(build_rows(rows, n, ptr)?),
    })
}

fn build_set(spec: &SetSpec, m: usize, ptr: &str) -> Result<ControlSet, ParseError> {
    let set = match spec {
        SetSpec::Full => ControlSet::full(m),
        SetSpec::Box { lower, upper } => ControlSet::Box {
            lower: vector(lower, m, &format!("{ptr}/lower"))?,
            upper: vector(upper, m, &format!("{ptr}/upper"))?,
        },
        SetSpec::Polytope { a, b } => {
            let a = matrix(a, (None, Some(m)), &format!("{ptr}/a"))?;
            let b = vector(b, a.nrows(), &format!("{ptr}/b"))?;
            ControlSet::Polytope { a, b }
        }
        SetSpec::Affine { c, d } => {
            let c = matrix(c, (None, Some(m)), &format!("{ptr}/c"))?;
            let d = vector(d, c.nrows(), &format!("{ptr}/d"))?;
            ControlSet::Affine { c, d }
        }
        SetSpec::Finite { points } => {
            if points.is_empty() {
                return Err(ParseError::new(format!("{ptr}/points"), "finite set needs at least one point"));
            }
            ControlSet::Finite(
                points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| vector(p, m, &format!("{ptr}/points/{i}")))
                    .collect::<Result<_, _>>()?,
            )
        }
        SetSpec::Quadratic { rows } => ControlSet::SmoothIneq(builtin::quadratic_control_constraint(build_rows(rows, m, ptr)?)),
    };
    set.validate().map_err(|e| ParseError::new(ptr, e.to_string()))?;
    Ok(set)
}
