//! Smooth maps written in ambient coordinates, their Jacobians, and the
//! cotangent lifts built from them.
//!
//! A map `(x, u) ↦ y` is defined on a full ambient neighbourhood of the
//! manifold, so any formula that restricts correctly to the manifold already
//! serves as a smooth extension. State-only maps (terminal costs, state
//! constraints) use `control_dim = 0`; control-only maps use `state_dim = 0`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::manifold::{so3, AffineEmbedding, Covector, Manifold, ManifoldPoint};

/// Base finite-difference step, scaled by `1 + ‖x‖`.
pub const DEFAULT_FD_STEP: f64 = 1e-6;

/// Relative error allowed between analytic and finite-difference Jacobians.
pub const JACOBIAN_RTOL: f64 = 1e-5;

/// Image-membership tolerance for maps between manifolds.
pub const IMAGE_TOL: f64 = 1e-7;

pub type EvalFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Clone)]
pub struct SmoothMap {
    name: String,
    state_dim: usize,
    control_dim: usize,
    output_dim: usize,
    eval: EvalFn,
    jac_state: Option<JacobianFn>,
    jac_control: Option<JacobianFn>,
    fd_step: f64,
    fd_enabled: bool,
    affine: bool,
}

impl fmt::Debug for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothMap")
            .field("name", &self.name)
            .field("state_dim", &self.state_dim)
            .field("control_dim", &self.control_dim)
            .field("output_dim", &self.output_dim)
            .field("analytic_state_jacobian", &self.jac_state.is_some())
            .field("analytic_control_jacobian", &self.jac_control.is_some())
            .field("affine", &self.affine)
            .finish()
    }
}

impl SmoothMap {
    pub fn new<F>(name: impl Into<String>, state_dim: usize, control_dim: usize, output_dim: usize, eval: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        SmoothMap {
            name: name.into(),
            state_dim,
            control_dim,
            output_dim,
            eval: Arc::new(eval),
            jac_state: None,
            jac_control: None,
            fd_step: DEFAULT_FD_STEP,
            fd_enabled: true,
            affine: false,
        }
    }

    pub fn with_state_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac_state = Some(Arc::new(jac));
        self
    }

    pub fn with_control_jacobian<F>(mut self, jac: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jac_control = Some(Arc::new(jac));
        self
    }

    pub fn with_fd_step(mut self, step: f64) -> Self {
        self.fd_step = step;
        self
    }

    /// Disallow the finite-difference fallback.
    pub fn without_fd(mut self) -> Self {
        self.fd_enabled = false;
        self
    }

    /// Declare the map affine in `(x, u)`.
    pub fn mark_affine(mut self) -> Self {
        self.affine = true;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn is_affine(&self) -> bool {
        self.affine
    }

    pub fn has_analytic_jacobians(&self) -> bool {
        self.jac_state.is_some() && self.jac_control.is_some()
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(x.len(), self.state_dim, "{}: state dim", self.name);
        debug_assert_eq!(u.len(), self.control_dim, "{}: control dim", self.name);
        (self.eval)(x, u)
    }

    pub fn try_eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(&format!("{} state argument", self.name), self.state_dim, x.len())?;
        check_dim(&format!("{} control argument", self.name), self.control_dim, u.len())?;
        let y = (self.eval)(x, u);
        check_dim(&format!("{} output", self.name), self.output_dim, y.len())?;
        Ok(y)
    }

    /// Scalar value of a real-valued map.
    pub fn eval_scalar(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        self.eval(x, u)[0]
    }

    pub fn jacobian_state(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.jac_state {
            Some(j) => Ok(j(x, u)),
            None if self.fd_enabled => Ok(self.fd_jacobian_state(x, u)),
            None => Err(self.no_jacobian("state")),
        }
    }

    pub fn jacobian_control(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        match &self.jac_control {
            Some(j) => Ok(j(x, u)),
            None if self.fd_enabled => Ok(self.fd_jacobian_control(x, u)),
            None => Err(self.no_jacobian("control")),
        }
    }

    fn no_jacobian(&self, which: &str) -> Error {
        Error::Jacobian {
            map: self.name.clone(),
            reason: format!("no analytic {which} Jacobian and finite differences are disabled"),
        }
    }

    /// Central-difference Jacobian in `x`.
    pub fn fd_jacobian_state(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let h = self.fd_step * (1.0 + x.norm());
        central_difference(self.output_dim, x, h, |xp| (self.eval)(xp, u))
    }

    /// Central-difference Jacobian in `u`.
    pub fn fd_jacobian_control(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let h = self.fd_step * (1.0 + u.norm());
        central_difference(self.output_dim, u, h, |up| (self.eval)(x, up))
    }

    /// Checks analytic Jacobians against central differences at each probe.
    pub fn validate_jacobians(&self, probes: &[(DVector<f64>, DVector<f64>)]) -> Result<()> {
        for (x, u) in probes {
            if let Some(j) = &self.jac_state {
                let err = relative_error(&j(x, u), &self.fd_jacobian_state(x, u));
                if err > JACOBIAN_RTOL {
                    return Err(Error::Jacobian {
                        map: self.name.clone(),
                        reason: format!("state Jacobian disagrees with finite differences (rel. error {err:.3e})"),
                    });
                }
            }
            if let Some(j) = &self.jac_control {
                let err = relative_error(&j(x, u), &self.fd_jacobian_control(x, u));
                if err > JACOBIAN_RTOL {
                    return Err(Error::Jacobian {
                        map: self.name.clone(),
                        reason: format!("control Jacobian disagrees with finite differences (rel. error {err:.3e})"),
                    });
                }
            }
        }
        Ok(())
    }

    /// [`validate_jacobians`](Self::validate_jacobians) on random probes with
    /// states drawn from `manifold` (or Gaussian when `None`).
    pub fn validate_random<R: Rng + ?Sized>(&self, rng: &mut R, manifold: Option<&Manifold>, count: usize) -> Result<()> {
        let probes: Vec<_> = (0..count)
            .map(|_| {
                let x = match manifold {
                    Some(m) if m.ambient_dim() == self.state_dim => m.random_point(rng),
                    _ => crate::manifold::gaussian(rng, self.state_dim),
                };
                let u = crate::manifold::gaussian(rng, self.control_dim);
                (x, u)
            })
            .collect();
        self.validate_jacobians(&probes)
    }

    /// Transport the state argument through an affine embedding. With
    /// `push_output` the output is embedded too (dynamics); otherwise the output
    /// space is unchanged (costs, constraints).
    pub fn through_embedding(&self, emb: &AffineEmbedding, push_output: bool) -> SmoothMap {
        check_dim("embedding source", self.state_dim, emb.source_dim()).expect("embedding must match the state dimension");
        let inner = self.clone();
        let e = emb.clone();
        let out_dim = if push_output { e.target_dim() } else { self.output_dim };
        let eval_inner = inner.clone();
        let e1 = e.clone();
        let mut map = SmoothMap::new(
            format!("{}∘embed", self.name),
            e.target_dim(),
            self.control_dim,
            out_dim,
            move |y, u| {
                let v = eval_inner.eval(&e1.pull_point(y), u);
                if push_output {
                    e1.push_point(&v)
                } else {
                    v
                }
            },
        );
        map.fd_step = self.fd_step;
        map.fd_enabled = self.fd_enabled;
        map.affine = self.affine;
        {
            let inner = inner.clone();
            let e = e.clone();
            map.jac_state = Some(Arc::new(move |y, u| {
                let j = inner
                    .jacobian_state(&e.pull_point(y), u)
                    .expect("inner Jacobian");
                if push_output {
                    &e.basis * j * e.basis.transpose()
                } else {
                    j * e.basis.transpose()
                }
            }));
        }
        {
            let inner = inner.clone();
            let e = e.clone();
            map.jac_control = Some(Arc::new(move |y, u| {
                let j = inner
                    .jacobian_control(&e.pull_point(y), u)
                    .expect("inner Jacobian");
                if push_output {
                    &e.basis * j
                } else {
                    j
                }
            }));
        }
        map
    }
}

pub(crate) fn central_difference<F>(out_dim: usize, at: &DVector<f64>, h: f64, f: F) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = at.len();
    let mut jac = DMatrix::zeros(out_dim, n);
    let mut probe = at.clone();
    for k in 0..n {
        let orig = probe[k];
        probe[k] = orig + h;
        let plus = f(&probe);
        probe[k] = orig - h;
        let minus = f(&probe);
        probe[k] = orig;
        jac.set_column(k, &((plus - minus) / (2.0 * h)));
    }
    jac
}

/// `‖a − b‖ / max(‖b‖, 1)`.
pub fn relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Cotangent lift of `f(·, u)` at `p`: maps a covector at `f(p, u)` to the
/// canonical covector `P(p) · J_xᵀ w` at `p`.
pub fn cotangent_pullback(map: &SmoothMap, p: &ManifoldPoint, u: &DVector<f64>, w: &Covector) -> Result<Covector> {
    let image = map.try_eval(p.ambient(), u)?;
    let codomain = w.base.manifold();
    let defect = codomain.defect(&image);
    let gap = (&image - w.base.ambient()).norm();
    if defect > IMAGE_TOL || gap > IMAGE_TOL * (1.0 + image.norm()) {
        return Err(Error::Membership {
            defect: defect.max(gap),
            tolerance: IMAGE_TOL,
        });
    }
    let jac = map.jacobian_state(p.ambient(), u)?;
    let w_canonical = w.base.tangent_projector() * &w.ambient;
    Covector::new(p.clone(), &(jac.transpose() * w_canonical))
}

/// Cotangent lift of a vector-valued map `g: M → R^r` at `p` applied to
/// `mu ∈ (R^r)*`, i.e. `P(p) · J_gᵀ mu`.
pub fn pullback_multiplier(map: &SmoothMap, p: &ManifoldPoint, mu: &DVector<f64>) -> Result<Covector> {
    check_dim(&format!("{} multiplier", map.name()), map.output_dim(), mu.len())?;
    let u = DVector::zeros(map.control_dim());
    let jac = map.jacobian_state(p.ambient(), &u)?;
    Covector::new(p.clone(), &(jac.transpose() * mu))
}

/// Differential of a real-valued map at `(p, u)`: the projected state part
/// and the control gradient.
pub fn differential(cost: &SmoothMap, p: &ManifoldPoint, u: &DVector<f64>) -> Result<(Covector, DVector<f64>)> {
    check_dim(&format!("{} output", cost.name()), 1, cost.output_dim())?;
    check_dim(&format!("{} control argument", cost.name()), cost.control_dim(), u.len())?;
    let jx = cost.jacobian_state(p.ambient(), u)?;
    let ju = cost.jacobian_control(p.ambient(), u)?;
    let dx = Covector::new(p.clone(), &jx.row(0).transpose())?;
    Ok((dx, ju.row(0).transpose()))
}

/// Parameterized builtin map families with analytic Jacobians.
pub mod builtin {
    use super::*;

    /// `f(x, u) = A x + B u + c`.
    pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, c: Option<DVector<f64>>) -> SmoothMap {
        let n = a.nrows();
        let m = b.ncols();
        let c = c.unwrap_or_else(|| DVector::zeros(n));
        let (a1, b1, c1) = (a.clone(), b.clone(), c);
        SmoothMap::new("linear", a.ncols(), m, n, move |x, u| &a1 * x + &b1 * u + &c1)
            .with_state_jacobian(move |_, _| a.clone())
            .with_control_jacobian(move |_, _| b.clone())
            .mark_affine()
    }

    /// `f(x, u) = x`, ignoring the control.
    pub fn identity(n: usize, m: usize) -> SmoothMap {
        SmoothMap::new("identity", n, m, n, |x, _| x.clone())
            .with_state_jacobian(move |_, _| DMatrix::identity(n, n))
            .with_control_jacobian(move |_, _| DMatrix::zeros(n, m))
            .mark_affine()
    }

    fn rot2(theta: f64) -> DMatrix<f64> {
        let (s, c) = theta.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    /// Planar rotation `f(x, u) = R(b·u) x` for `x ∈ R²` (preserves the circle).
    /// `b` is `1 × m`.
    pub fn planar_rotation(b: DMatrix<f64>) -> SmoothMap {
        assert_eq!(b.nrows(), 1, "planar rotation gain must be 1 × m");
        let m = b.ncols();
        let (b1, b2, b3) = (b.clone(), b.clone(), b);
        SmoothMap::new("planar_rotation", 2, m, 2, move |x, u| rot2((&b1 * u)[0]) * x)
            .with_state_jacobian(move |_, u| rot2((&b2 * u)[0]))
            .with_control_jacobian(move |x, u| {
                let th = (&b3 * u)[0];
                let d = rot2(th + std::f64::consts::FRAC_PI_2) * x;
                d * &b3
            })
    }

    /// Spatial rotation `f(x, u) = exp(hat(B u)) x` for `x ∈ R³` (preserves S²).
    /// `b` is `3 × m`.
    pub fn sphere_rotation(b: DMatrix<f64>) -> SmoothMap {
        assert_eq!(b.nrows(), 3, "sphere rotation gain must be 3 × m");
        let m = b.ncols();
        let omega = |b: &DMatrix<f64>, u: &DVector<f64>| {
            let w = b * u;
            Vector3::new(w[0], w[1], w[2])
        };
        let (b1, b2, b3) = (b.clone(), b.clone(), b);
        SmoothMap::new("sphere_rotation", 3, m, 3, move |x, u| {
            let r = so3::exp(&omega(&b1, u));
            let y = r * Vector3::new(x[0], x[1], x[2]);
            DVector::from_column_slice(y.as_slice())
        })
        .with_state_jacobian(move |_, u| {
            let r = so3::exp(&omega(&b2, u));
            DMatrix::from_fn(3, 3, |i, j| r[(i, j)])
        })
        .with_control_jacobian(move |x, u| {
            let w = omega(&b3, u);
            let r = so3::exp(&w);
            let xv = Vector3::new(x[0], x[1], x[2]);
            // d/dw exp(hat w) x = −exp(hat w) hat(x) J_r(w)
            let d = -(r * so3::hat(&xv) * so3::right_jacobian(&w));
            let d = DMatrix::from_fn(3, 3, |i, j| d[(i, j)]);
            d * &b3
        })
    }

    /// Attitude kinematics on SO(3): `f(R, u) = R exp(hat(B u))`, with `R`
    /// stored row-major in `R^9`. `b` is `3 × m`.
    pub fn so3_right_rotation(b: DMatrix<f64>) -> SmoothMap {
        assert_eq!(b.nrows(), 3, "so3 rotation gain must be 3 × m");
        let m = b.ncols();
        let omega = |b: &DMatrix<f64>, u: &DVector<f64>| {
            let w = b * u;
            Vector3::new(w[0], w[1], w[2])
        };
        let (b1, b2, b3) = (b.clone(), b.clone(), b);
        SmoothMap::new("so3_right_rotation", 9, m, 9, move |x, u| {
            let r = so3::to_mat3(x);
            so3::from_mat3(&(r * so3::exp(&omega(&b1, u))))
        })
        .with_state_jacobian(move |_, u| {
            // vec(X E) = (I ⊗ Eᵀ) vec(X) in row-major layout
            let e = so3::exp(&omega(&b2, u));
            let mut j = DMatrix::zeros(9, 9);
            for i in 0..3 {
                for c in 0..3 {
                    for k in 0..3 {
                        j[(3 * i + c, 3 * i + k)] = e[(k, c)];
                    }
                }
            }
            j
        })
        .with_control_jacobian(move |x, u| {
            let r = so3::to_mat3(x);
            let w = omega(&b3, u);
            let e = so3::exp(&w);
            let jr = so3::right_jacobian(&w);
            let mut d = DMatrix::zeros(9, 3);
            for k in 0..3 {
                let dk = r * e * so3::hat(&jr.column(k).into_owned());
                d.set_column(k, &so3::from_mat3(&dk));
            }
            d * &b3
        })
    }

    /// Parameters of `c(x, u) = ½(x−x̄)ᵀQ(x−x̄) + ½(u−ū)ᵀR(u−ū) + (x−x̄)ᵀS(u−ū) + qᵀx + rᵀu + k`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct QuadraticCost {
        pub q: DMatrix<f64>,
        pub r: DMatrix<f64>,
        pub s: Option<DMatrix<f64>>,
        pub x_ref: Option<DVector<f64>>,
        pub u_ref: Option<DVector<f64>>,
        pub q_lin: Option<DVector<f64>>,
        pub r_lin: Option<DVector<f64>>,
        pub constant: f64,
    }

    impl QuadraticCost {
        pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
            QuadraticCost {
                q,
                r,
                s: None,
                x_ref: None,
                u_ref: None,
                q_lin: None,
                r_lin: None,
                constant: 0.0,
            }
        }

        /// State-only cost (terminal costs).
        pub fn terminal(q: DMatrix<f64>) -> Self {
            Self::new(q, DMatrix::zeros(0, 0))
        }

        pub fn with_x_ref(mut self, x_ref: DVector<f64>) -> Self {
            self.x_ref = Some(x_ref);
            self
        }

        pub fn with_u_ref(mut self, u_ref: DVector<f64>) -> Self {
            self.u_ref = Some(u_ref);
            self
        }

        pub fn build(&self) -> SmoothMap {
            let n = self.q.nrows();
            let m = self.r.nrows();
            let qs = (&self.q + self.q.transpose()) * 0.5;
            let rs = (&self.r + self.r.transpose()) * 0.5;
            let s = self.s.clone().unwrap_or_else(|| DMatrix::zeros(n, m));
            let xr = self.x_ref.clone().unwrap_or_else(|| DVector::zeros(n));
            let ur = self.u_ref.clone().unwrap_or_else(|| DVector::zeros(m));
            let ql = self.q_lin.clone().unwrap_or_else(|| DVector::zeros(n));
            let rl = self.r_lin.clone().unwrap_or_else(|| DVector::zeros(m));
            let k = self.constant;
            let p = Arc::new((qs, rs, s, xr, ur, ql, rl));
            let (p1, p2, p3) = (p.clone(), p.clone(), p);
            SmoothMap::new("quadratic_cost", n, m, 1, move |x, u| {
                let (q, r, s, xr, ur, ql, rl) = &*p1;
                let dx = x - xr;
                let du = u - ur;
                let v = 0.5 * dx.dot(&(q * &dx)) + 0.5 * du.dot(&(r * &du)) + dx.dot(&(s * &du)) + ql.dot(x) + rl.dot(u) + k;
                DVector::from_element(1, v)
            })
            .with_state_jacobian(move |x, u| {
                let (q, _, s, xr, ur, ql, _) = &*p2;
                let g = q * (x - xr) + s * (u - ur) + ql;
                DMatrix::from_row_slice(1, g.len(), g.as_slice())
            })
            .with_control_jacobian(move |x, u| {
                let (_, r, s, xr, ur, _, rl) = &*p3;
                let g = r * (u - ur) + s.transpose() * (x - xr) + rl;
                DMatrix::from_row_slice(1, g.len(), g.as_slice())
            })
        }
    }

    pub fn zero_cost(n: usize, m: usize) -> SmoothMap {
        SmoothMap::new("zero_cost", n, m, 1, |_, _| DVector::zeros(1))
            .with_state_jacobian(move |_, _| DMatrix::zeros(1, n))
            .with_control_jacobian(move |_, _| DMatrix::zeros(1, m))
            .mark_affine()
    }

    /// State constraint `g(x) = A x − b ≤ 0`.
    pub fn affine_state_constraint(a: DMatrix<f64>, b: DVector<f64>) -> SmoothMap {
        let n = a.ncols();
        let r = a.nrows();
        let a1 = a.clone();
        SmoothMap::new("affine_constraint", n, 0, r, move |x, _| &a1 * x - &b)
            .with_state_jacobian(move |_, _| a.clone())
            .with_control_jacobian(move |_, _| DMatrix::zeros(r, 0))
            .mark_affine()
    }

    /// One row `½ zᵀ H z + aᵀ z − b` of a quadratic constraint.
    #[derive(Debug, Clone, PartialEq)]
    pub struct QuadraticRow {
        pub h: DMatrix<f64>,
        pub a: DVector<f64>,
        pub b: f64,
    }

    impl QuadraticRow {
        /// `‖z − c‖² − ρ²` written as a quadratic row.
        pub fn ball(center: &DVector<f64>, radius: f64) -> Self {
            let n = center.len();
            QuadraticRow {
                h: DMatrix::identity(n, n) * 2.0,
                a: center * -2.0,
                b: radius * radius - center.norm_squared(),
            }
        }
    }

    fn quadratic_rows(rows: &[QuadraticRow], z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(rows.len(), rows.iter().map(|r| 0.5 * z.dot(&(&r.h * z)) + r.a.dot(z) - r.b))
    }

    fn quadratic_rows_jacobian(rows: &[QuadraticRow], z: &DVector<f64>) -> DMatrix<f64> {
        let n = z.len();
        let mut j = DMatrix::zeros(rows.len(), n);
        for (i, r) in rows.iter().enumerate() {
            let hs = (&r.h + r.h.transpose()) * 0.5;
            j.set_row(i, &(hs * z + &r.a).transpose());
        }
        j
    }

    /// State constraint with quadratic rows, `g_j(x) ≤ 0`.
    pub fn quadratic_state_constraint(rows: Vec<QuadraticRow>) -> SmoothMap {
        let n = rows.first().map(|r| r.a.len()).unwrap_or(0);
        let k = rows.len();
        let rows = Arc::new(rows);
        let (r1, r2) = (rows.clone(), rows);
        SmoothMap::new("quadratic_constraint", n, 0, k, move |x, _| quadratic_rows(&r1, x))
            .with_state_jacobian(move |x, _| quadratic_rows_jacobian(&r2, x))
            .with_control_jacobian(move |_, _| DMatrix::zeros(k, 0))
    }

    /// Control-set inequality with quadratic rows, `h_j(u) ≤ 0`.
    pub fn quadratic_control_constraint(rows: Vec<QuadraticRow>) -> SmoothMap {
        let m = rows.first().map(|r| r.a.len()).unwrap_or(0);
        let k = rows.len();
        let rows = Arc::new(rows);
        let (r1, r2) = (rows.clone(), rows);
        SmoothMap::new("quadratic_control_constraint", 0, m, k, move |_, u| quadratic_rows(&r1, u))
            .with_state_jacobian(move |_, _| DMatrix::zeros(k, 0))
            .with_control_jacobian(move |_, u| quadratic_rows_jacobian(&r2, u))
    }
}
