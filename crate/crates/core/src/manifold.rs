//! Smooth manifolds realized as closed embedded submanifolds of a Euclidean
//! ambient space.
//!
//! Every point is stored by its ambient coordinates. Tangent vectors live in
//! the same ambient space, and covectors are identified with ambient vectors
//! through the Euclidean pairing; the canonical representative of a covector
//! is its image under the orthogonal tangent projector at the base point.
//!
//! Built-in embeddings:
//!
//! | kind | intrinsic | ambient | membership defect |
//! |------|-----------|---------|-------------------|
//! | `Euclidean(n)` | n | n | 0 |
//! | `Sphere(N)` | N − 1 | N | `|‖x‖ − 1|` |
//! | `SpecialOrthogonal3` | 3 | 9 (row-major R) | `max(‖RᵀR − I‖_F, |det R − 1|)` |
//! | `Embedded` | base | N′ | affine isometric image of a base manifold |
//! | `Product` | Σ | Σ | max over factors |

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};

/// Default membership tolerance.
pub const DEFAULT_MEMBERSHIP_TOL: f64 = 1e-9;

/// Absolute and relative tolerance for covector equality after projection.
pub const COVECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum ManifoldKind {
    Euclidean { dim: usize },
    /// Unit sphere in `R^ambient`.
    Sphere { ambient: usize },
    /// Rotation matrices, stored row-major in `R^9`.
    SpecialOrthogonal3,
    /// `{origin + basis · y : y ∈ base}` with orthonormal `basis` columns.
    Embedded {
        base: Box<Manifold>,
        basis: DMatrix<f64>,
        origin: DVector<f64>,
    },
    Product(Vec<Manifold>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    kind: ManifoldKind,
    tolerance: f64,
}

impl Manifold {
    pub fn euclidean(dim: usize) -> Self {
        Self::from_kind(ManifoldKind::Euclidean { dim })
    }

    /// Unit sphere `S^{ambient-1} ⊂ R^ambient`.
    pub fn sphere(ambient: usize) -> Self {
        assert!(ambient >= 1, "sphere needs ambient dimension ≥ 1");
        Self::from_kind(ManifoldKind::Sphere { ambient })
    }

    pub fn circle() -> Self {
        Self::sphere(2)
    }

    pub fn so3() -> Self {
        Self::from_kind(ManifoldKind::SpecialOrthogonal3)
    }

    pub fn product(factors: Vec<Manifold>) -> Self {
        Self::from_kind(ManifoldKind::Product(factors))
    }

    /// Affine isometric image of `base` inside a larger Euclidean space.
    pub fn embedded(base: Manifold, basis: DMatrix<f64>, origin: DVector<f64>) -> Result<Self> {
        check_dim("embedding basis rows", origin.len(), basis.nrows())?;
        check_dim("embedding basis columns", base.ambient_dim(), basis.ncols())?;
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::identity(basis.ncols(), basis.ncols())).norm();
        if defect > 1e-10 {
            return Err(Error::InvalidProblem(format!(
                "embedding basis is not orthonormal (defect {defect:.3e})"
            )));
        }
        Ok(Self::from_kind(ManifoldKind::Embedded {
            base: Box::new(base),
            basis,
            origin,
        }))
    }

    fn from_kind(kind: ManifoldKind) -> Self {
        Manifold {
            kind,
            tolerance: DEFAULT_MEMBERSHIP_TOL,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn is_flat(&self) -> bool {
        match &self.kind {
            ManifoldKind::Euclidean { .. } => true,
            ManifoldKind::Embedded { base, .. } => base.is_flat(),
            ManifoldKind::Product(fs) => fs.iter().all(Manifold::is_flat),
            _ => false,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Euclidean { dim } => *dim,
            ManifoldKind::Sphere { ambient } => ambient - 1,
            ManifoldKind::SpecialOrthogonal3 => 3,
            ManifoldKind::Embedded { base, .. } => base.intrinsic_dim(),
            ManifoldKind::Product(fs) => fs.iter().map(Manifold::intrinsic_dim).sum(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            ManifoldKind::Euclidean { dim } => *dim,
            ManifoldKind::Sphere { ambient } => *ambient,
            ManifoldKind::SpecialOrthogonal3 => 9,
            ManifoldKind::Embedded { origin, .. } => origin.len(),
            ManifoldKind::Product(fs) => fs.iter().map(Manifold::ambient_dim).sum(),
        }
    }

    /// Membership residual; zero exactly on the embedded image.
    pub fn defect(&self, x: &DVector<f64>) -> f64 {
        if x.len() != self.ambient_dim() {
            return f64::INFINITY;
        }
        match &self.kind {
            ManifoldKind::Euclidean { .. } => 0.0,
            ManifoldKind::Sphere { .. } => (x.norm() - 1.0).abs(),
            ManifoldKind::SpecialOrthogonal3 => {
                let r = so3::to_mat3(x);
                let orth = (r.transpose() * r - Matrix3::identity()).norm();
                orth.max((r.determinant() - 1.0).abs())
            }
            ManifoldKind::Embedded {
                base,
                basis,
                origin,
            } => {
                let shifted = x - origin;
                let local = basis.transpose() * &shifted;
                let normal = (&shifted - basis * &local).norm();
                normal.max(base.defect(&local))
            }
            ManifoldKind::Product(fs) => split(fs, x)
                .map(|(f, block)| f.defect(&block))
                .fold(0.0, f64::max),
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.defect(x) <= self.tolerance
    }

    pub fn check_member(&self, x: &DVector<f64>) -> Result<()> {
        check_dim("manifold point", self.ambient_dim(), x.len())?;
        let defect = self.defect(x);
        if defect > self.tolerance {
            return Err(Error::Membership {
                defect,
                tolerance: self.tolerance,
            });
        }
        Ok(())
    }

    /// Orthogonal projector onto the tangent space at `x`.
    pub fn tangent_projector(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_member(x)?;
        Ok(self.projector_at(x))
    }

    /// Tangent projector without the membership check; `x` is first mapped to
    /// its nearest manifold point.
    pub(crate) fn projector_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.kind {
            ManifoldKind::Euclidean { dim } => DMatrix::identity(*dim, *dim),
            ManifoldKind::Sphere { ambient } => {
                let n = x.norm();
                let dir = if n > 0.0 { x / n } else { x.clone() };
                DMatrix::identity(*ambient, *ambient) - &dir * dir.transpose()
            }
            ManifoldKind::SpecialOrthogonal3 => {
                let r = so3::to_mat3(&self.project(x));
                let mut p = DMatrix::zeros(9, 9);
                for k in 0..3 {
                    let v = so3::from_mat3(&(r * so3::generator(k))) / std::f64::consts::SQRT_2;
                    p += &v * v.transpose();
                }
                p
            }
            ManifoldKind::Embedded {
                base,
                basis,
                origin,
            } => {
                let local = basis.transpose() * (x - origin);
                basis * base.projector_at(&local) * basis.transpose()
            }
            ManifoldKind::Product(fs) => {
                let n = self.ambient_dim();
                let mut p = DMatrix::zeros(n, n);
                let mut off = 0;
                for (f, block) in split(fs, x) {
                    let k = f.ambient_dim();
                    p.view_mut((off, off), (k, k)).copy_from(&f.projector_at(&block));
                    off += k;
                }
                p
            }
        }
    }

    /// Nearest-point map onto the embedded image (normalization for spheres,
    /// polar factor for SO(3)).
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            ManifoldKind::Euclidean { .. } => x.clone(),
            ManifoldKind::Sphere { ambient } => {
                let n = x.norm();
                if n > 0.0 {
                    x / n
                } else {
                    let mut e = DVector::zeros(*ambient);
                    e[0] = 1.0;
                    e
                }
            }
            ManifoldKind::SpecialOrthogonal3 => so3::from_mat3(&so3::polar(&so3::to_mat3(x))),
            ManifoldKind::Embedded {
                base,
                basis,
                origin,
            } => {
                let local = basis.transpose() * (x - origin);
                origin + basis * base.project(&local)
            }
            ManifoldKind::Product(fs) => {
                let blocks: Vec<DVector<f64>> = split(fs, x).map(|(f, b)| f.project(&b)).collect();
                concat(&blocks)
            }
        }
    }

    /// Projection-based retraction: `project(x + v)`.
    pub fn retract(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        self.project(&(x + v))
    }

    pub fn point(self: &Arc<Self>, ambient: DVector<f64>) -> Result<ManifoldPoint> {
        self.check_member(&ambient)?;
        Ok(ManifoldPoint {
            manifold: Arc::clone(self),
            ambient,
        })
    }

    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.kind {
            ManifoldKind::Euclidean { dim } => gaussian(rng, *dim),
            ManifoldKind::Sphere { ambient } => self.project(&gaussian(rng, *ambient)),
            ManifoldKind::SpecialOrthogonal3 => {
                let w = Vector3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                ) * 1.5;
                so3::from_mat3(&so3::exp(&w))
            }
            ManifoldKind::Embedded {
                base,
                basis,
                origin,
            } => origin + basis * base.random_point(rng),
            ManifoldKind::Product(fs) => {
                let blocks: Vec<DVector<f64>> = fs.iter().map(|f| f.random_point(rng)).collect();
                concat(&blocks)
            }
        }
    }

    pub fn random_tangent<R: Rng + ?Sized>(&self, rng: &mut R, x: &DVector<f64>) -> DVector<f64> {
        self.projector_at(x) * gaussian(rng, self.ambient_dim())
    }
}

fn split<'a>(
    factors: &'a [Manifold],
    x: &'a DVector<f64>,
) -> impl Iterator<Item = (&'a Manifold, DVector<f64>)> + 'a {
    let mut off = 0;
    factors.iter().map(move |f| {
        let k = f.ambient_dim();
        let block = x.rows(off, k).into_owned();
        off += k;
        (f, block)
    })
}

fn concat(blocks: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(
        blocks.iter().map(|b| b.len()).sum(),
        blocks.iter().flat_map(|b| b.iter().copied()),
    )
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// A point of a manifold, tagged with the manifold.
#[derive(Debug, Clone)]
pub struct ManifoldPoint {
    manifold: Arc<Manifold>,
    ambient: DVector<f64>,
}

impl ManifoldPoint {
    pub fn manifold(&self) -> &Arc<Manifold> {
        &self.manifold
    }

    pub fn ambient(&self) -> &DVector<f64> {
        &self.ambient
    }

    pub fn tangent_projector(&self) -> DMatrix<f64> {
        self.manifold.projector_at(&self.ambient)
    }

    pub fn retract(&self, v: &TangentVector) -> Result<ManifoldPoint> {
        check_dim("tangent vector", self.ambient.len(), v.ambient.len())?;
        Ok(ManifoldPoint {
            manifold: Arc::clone(&self.manifold),
            ambient: self.manifold.retract(&self.ambient, &v.ambient),
        })
    }
}

/// Tangent vector at a base point, stored in ambient coordinates.
#[derive(Debug, Clone)]
pub struct TangentVector {
    pub base: ManifoldPoint,
    pub ambient: DVector<f64>,
}

impl TangentVector {
    /// Checks `‖(I − P) v‖ ≤ tol·(1 + ‖v‖)`.
    pub fn new(base: ManifoldPoint, ambient: DVector<f64>) -> Result<Self> {
        check_dim("tangent vector", base.ambient.len(), ambient.len())?;
        let p = base.tangent_projector();
        let normal = (&ambient - &p * &ambient).norm();
        let tol = base.manifold.tolerance() * 1e2 * (1.0 + ambient.norm());
        if normal > tol.max(1e-8) {
            return Err(Error::Membership {
                defect: normal,
                tolerance: tol,
            });
        }
        Ok(TangentVector { base, ambient })
    }

    pub fn projected(base: ManifoldPoint, ambient: &DVector<f64>) -> Self {
        let ambient = base.tangent_projector() * ambient;
        TangentVector { base, ambient }
    }
}

/// Covector at a base point, stored as its canonical (tangent-projected)
/// ambient representative.
#[derive(Debug, Clone)]
pub struct Covector {
    pub base: ManifoldPoint,
    pub ambient: DVector<f64>,
}

impl Covector {
    pub fn new(base: ManifoldPoint, representative: &DVector<f64>) -> Result<Self> {
        check_dim("covector", base.ambient.len(), representative.len())?;
        let ambient = base.tangent_projector() * representative;
        Ok(Covector { base, ambient })
    }

    pub fn zero(base: ManifoldPoint) -> Self {
        let n = base.ambient.len();
        Covector {
            base,
            ambient: DVector::zeros(n),
        }
    }

    /// Pairing with a tangent vector at the same base.
    pub fn pair(&self, v: &TangentVector) -> f64 {
        self.ambient.dot(&v.ambient)
    }

    pub fn approx_eq(&self, other: &Covector) -> bool {
        covectors_agree(&self.ambient, &other.ambient)
    }
}

/// Equality of canonical representatives, `1e-8` absolute plus `1e-8` relative.
pub fn covectors_agree(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    let scale = a.norm().max(b.norm());
    (a - b).norm() <= COVECTOR_TOL + COVECTOR_TOL * scale
}

/// Affine isometry `y ↦ origin + basis·y` from `R^n` into `R^N`.
#[derive(Debug, Clone)]
pub struct AffineEmbedding {
    pub basis: DMatrix<f64>,
    pub origin: DVector<f64>,
}

impl AffineEmbedding {
    pub fn new(basis: DMatrix<f64>, origin: DVector<f64>) -> Result<Self> {
        check_dim("embedding origin", basis.nrows(), origin.len())?;
        let gram = basis.transpose() * &basis;
        if (gram - DMatrix::identity(basis.ncols(), basis.ncols())).norm() > 1e-10 {
            return Err(Error::InvalidProblem(
                "embedding basis must have orthonormal columns".into(),
            ));
        }
        Ok(AffineEmbedding { basis, origin })
    }

    /// A random isometry from `R^from` into `R^to`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, from: usize, to: usize) -> Self {
        assert!(to >= from);
        let g = DMatrix::from_fn(to, to, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        let basis = q.columns(0, from).into_owned();
        let origin = gaussian(rng, to);
        AffineEmbedding { basis, origin }
    }

    pub fn source_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn push_point(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.origin + &self.basis * x
    }

    pub fn pull_point(&self, y: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (y - &self.origin)
    }

    pub fn push_covector(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.basis * p
    }

    pub fn pull_covector(&self, q: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * q
    }

    pub fn image_of(&self, base: &Manifold) -> Result<Manifold> {
        Manifold::embedded(base.clone(), self.basis.clone(), self.origin.clone())
            .map(|m| m.with_tolerance(base.tolerance()))
    }
}

/// Rotation-group helpers. Matrices are stored row-major: entry `(i, j)` sits
/// at index `3i + j`.
pub mod so3 {
    use nalgebra::{DVector, Matrix3, Vector3};

    pub fn to_mat3(x: &DVector<f64>) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| x[3 * i + j])
    }

    pub fn from_mat3(r: &Matrix3<f64>) -> DVector<f64> {
        DVector::from_fn(9, |k, _| r[(k / 3, k % 3)])
    }

    pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
    }

    /// Skew generator `E_k = hat(e_k)`.
    pub fn generator(k: usize) -> Matrix3<f64> {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        hat(&e)
    }

    pub fn exp(w: &Vector3<f64>) -> Matrix3<f64> {
        let theta = w.norm();
        let k = hat(w);
        let (a, b) = if theta < 1e-6 {
            let t2 = theta * theta;
            (1.0 - t2 / 6.0, 0.5 - t2 / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
        };
        Matrix3::identity() + k * a + k * k * b
    }

    /// Right Jacobian: `exp(hat(w + δ)) ≈ exp(hat(w)) · exp(hat(J_r(w) δ))`.
    pub fn right_jacobian(w: &Vector3<f64>) -> Matrix3<f64> {
        let theta = w.norm();
        let k = hat(w);
        let (a, b) = if theta < 1e-5 {
            let t2 = theta * theta;
            (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
        } else {
            let t2 = theta * theta;
            ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
        };
        Matrix3::identity() - k * a + k * k * b
    }

    /// Orthogonal polar factor with positive determinant.
    pub fn polar(m: &Matrix3<f64>) -> Matrix3<f64> {
        let svd = m.svd(true, true);
        let u = svd.u.unwrap();
        let v_t = svd.v_t.unwrap();
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            // Flip the column belonging to the smallest singular value.
            let (imin, _) = svd
                .singular_values
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap();
            u2.column_mut(imin).neg_mut();
            r = u2 * v_t;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn builtins() -> Vec<Manifold> {
        vec![
            Manifold::euclidean(3),
            Manifold::circle(),
            Manifold::sphere(3),
            Manifold::so3(),
            Manifold::product(vec![Manifold::circle(), Manifold::euclidean(2)]),
        ]
    }

    #[test]
    fn euclidean_projector_is_identity() {
        let m = Manifold::euclidean(2);
        let p = m.tangent_projector(&DVector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_eq!(p, DMatrix::identity(2, 2));
    }

    #[test]
    fn circle_projector_at_pole() {
        let m = Manifold::circle();
        let p = m.tangent_projector(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!((p - expected).norm() < 1e-15);
    }

    #[test]
    fn so3_projector_at_identity_spans_skew_matrices() {
        let m = Manifold::so3();
        let id = so3::from_mat3(&Matrix3::identity());
        let p = m.tangent_projector(&id).unwrap();
        // Independent construction: orthonormalize vec(E_k) by Gram-Schmidt.
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for k in 0..3 {
            let mut v = so3::from_mat3(&so3::generator(k));
            for b in &basis {
                v -= b * b.dot(&v);
            }
            basis.push(v.normalize());
        }
        let mut oracle = DMatrix::zeros(9, 9);
        for b in &basis {
            oracle += b * b.transpose();
        }
        assert!((&p - &oracle).norm() < 1e-12);
        assert!((&p * &p - &p).norm() < 1e-12);
        assert_eq!(crate::linalg::rank(&p), 3);
        // Symmetric matrices are normal to SO(3) at I.
        let sym = so3::from_mat3(&Matrix3::new(1.0, 2.0, 0.0, 2.0, 3.0, 1.0, 0.0, 1.0, -1.0));
        assert!((&p * sym).norm() < 1e-12);
    }

    #[test]
    fn off_manifold_point_is_rejected() {
        let m = Manifold::circle();
        let err = m.tangent_projector(&DVector::from_vec(vec![2.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Membership { .. }));
    }

    #[test]
    fn projector_idempotent_symmetric_with_correct_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in builtins() {
            for _ in 0..100 {
                let x = m.random_point(&mut rng);
                assert!(m.contains(&x), "random point off {:?}", m.kind());
                let p = m.tangent_projector(&x).unwrap();
                assert!((&p * &p - &p).norm() <= 1e-10);
                assert!((&p - p.transpose()).norm() <= 1e-10);
                assert_eq!(crate::linalg::rank(&p), m.intrinsic_dim());
            }
        }
    }

    #[test]
    fn retraction_examples() {
        let flat = Manifold::euclidean(2);
        let r = flat.retract(&DVector::from_vec(vec![1.0, 1.0]), &DVector::from_vec(vec![1.0, -1.0]));
        assert_eq!(r, DVector::from_vec(vec![2.0, 0.0]));

        let circle = Manifold::circle();
        let r = circle.retract(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0]));
        let s = 1.0 / 2f64.sqrt();
        assert!((r - DVector::from_vec(vec![s, s])).norm() < 1e-15);

        let so3m = Manifold::so3();
        let id = so3::from_mat3(&Matrix3::identity());
        let v = so3::from_mat3(&(so3::hat(&Vector3::new(0.3, -0.2, 0.5)) * 1e-3));
        let r = so3::to_mat3(&so3m.retract(&id, &v));
        assert!((r.transpose() * r - Matrix3::identity()).norm() <= 1e-12);
        // Oracle: polar factor of I + V computed through (AᵀA)^{-1/2}.
        let a = Matrix3::identity() + so3::to_mat3(&v);
        let ata = a.transpose() * a;
        let eig = ata.symmetric_eigen();
        let inv_sqrt = eig.eigenvectors
            * Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        assert!((r - a * inv_sqrt).norm() < 1e-12);
    }

    #[test]
    fn retraction_first_order_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in builtins() {
            let x = m.random_point(&mut rng);
            let v = m.random_tangent(&mut rng, &x).normalize();
            let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&t| (m.retract(&x, &(&v * t)) - (&x + &v * t)).norm() / t)
                .collect();
            // error / t must shrink with t (o(t) behaviour)
            assert!(errs[1] <= errs[0] * 0.2 + 1e-12, "{errs:?}");
            assert!(errs[2] <= errs[1] * 0.2 + 1e-12, "{errs:?}");
        }
    }

    #[test]
    fn defect_vanishes_on_image_and_grows_off_it() {
        let circle = Manifold::circle();
        for k in 0..64 {
            let th = k as f64 * std::f64::consts::TAU / 64.0;
            let on = DVector::from_vec(vec![th.cos(), th.sin()]);
            assert!(circle.defect(&on) < 1e-15);
            for s in [0.5, 0.9, 1.1, 2.0] {
                let d = circle.defect(&(&on * s));
                assert!((d - (s - 1.0f64).abs()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn embedded_projector_matches_pushforward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = AffineEmbedding::random(&mut rng, 2, 5);
        let m = emb.image_of(&Manifold::circle()).unwrap();
        assert_eq!(m.intrinsic_dim(), 1);
        let x = m.random_point(&mut rng);
        assert!(m.contains(&x));
        let p = m.tangent_projector(&x).unwrap();
        assert!((&p * &p - &p).norm() < 1e-12);
        assert_eq!(crate::linalg::rank(&p), 1);
        let local = emb.pull_point(&x);
        let expected = &emb.basis * Manifold::circle().projector_at(&local) * emb.basis.transpose();
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn covector_equivalence_after_projection() {
        let m = Arc::new(Manifold::circle());
        let base = m.point(DVector::from_vec(vec![0.0, 1.0])).unwrap();
        let a = Covector::new(base.clone(), &DVector::from_vec(vec![2.0, 5.0])).unwrap();
        let b = Covector::new(base, &DVector::from_vec(vec![2.0, -1.0])).unwrap();
        assert!(a.approx_eq(&b));
    }
}
