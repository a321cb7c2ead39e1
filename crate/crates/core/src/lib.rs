//! Discrete-time optimal control on embedded manifolds.
//!
//! A [`ControlProblem`] has dynamics `x_{t+1} = f_t(x_t, u_t)` on a manifold
//! given in ambient coordinates, stage and terminal costs, state constraints
//! `g_t(x_t) ≤ 0`, control sets `U_t` and a DFT support constraint on the
//! control sequence. For a candidate trajectory the crate computes the
//! residuals of the first-order necessary conditions ([`pmp::verify`]),
//! recovers multipliers for them ([`pmp::recover_multipliers`]) and finds
//! candidates with a direct and an indirect solver ([`solvers::solve`]).
//!
//! ```
//! use geopmp::{fixtures, recover_multipliers, solve, Method, SolveOptions};
//!
//! let problem = fixtures::flat_lqr();
//! let result = solve(&problem, &SolveOptions::with_method(Method::ProjectedDescent)).unwrap();
//! assert!((result.controls()[0][0] + 0.6).abs() < 1e-8);
//! let rec = recover_multipliers(&problem, &result.trajectory).unwrap();
//! assert!(rec.report.passed());
//! ```

pub mod error;
pub mod fixtures;
pub mod frequency;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod ocp;
pub mod pmp;
pub mod smooth_map;
pub mod solvers;
pub mod tents;

pub use error::{Error, ParseError, Result};
pub use frequency::{build_freq_matrices, dft, freq_residual, idft, support, FrequencyConstraintMatrices, FrequencySpec};
pub use manifold::{AffineEmbedding, Covector, Manifold, ManifoldPoint, TangentVector};
pub use ocp::{feasibility_report, rollout, total_cost, ControlProblem, ControlSet, FeasibilityReport, Trajectory};
pub use pmp::{recover_multipliers, verify, PmpCertificate, PmpReport, Verdict};
pub use smooth_map::SmoothMap;
pub use solvers::{solve, solve_direct, solve_shooting, Method, SolveOptions, SolveResult, SolveStatus};
pub use tents::{dual_cone, is_regular, local_tent, ConeH, ConeV};
