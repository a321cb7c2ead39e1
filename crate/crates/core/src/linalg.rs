//! Dense linear-algebra helpers shared by the cone, verifier and solver code:
//! Lawson–Hanson nonnegative least squares, least-distance programming,
//! null spaces and pseudo-inverse solves.

use nalgebra::{DMatrix, DVector};

/// Relative singular-value cutoff used for rank decisions.
pub const RANK_RTOL: f64 = 1e-11;

/// Minimum-norm least-squares solution of `a x ≈ b`.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    if a.nrows() == 0 {
        return DVector::zeros(a.ncols());
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (smax * RANK_RTOL).max(f64::MIN_POSITIVE);
    svd.solve(b, eps).unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Orthonormal basis of the range of an orthogonal projector.
pub fn projector_range(p: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = p.clone().symmetric_eigen();
    let cols: Vec<_> = (0..p.nrows())
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(p.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Numerical rank of `a`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * RANK_RTOL * 100.0).count()
}

/// Orthonormal basis (as columns) of the null space of `a`.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Pad to a square-or-tall matrix so the SVD returns a full V.
    let rows = a.nrows().max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let smax = svd.singular_values.max();
    let cutoff = smax * RANK_RTOL * 100.0;
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| svd.singular_values[i] <= cutoff || smax == 0.0)
        .map(|i| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Result of a nonnegative least-squares solve.
#[derive(Debug, Clone)]
pub struct NnlsSolution {
    pub x: DVector<f64>,
    pub residual: DVector<f64>,
}

impl NnlsSolution {
    pub fn residual_norm(&self) -> f64 {
        self.residual.norm()
    }
}

/// Solve `min ‖a x − b‖₂` subject to `x ≥ 0` with the Lawson–Hanson active-set
/// method.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> NnlsSolution {
    let (m, n) = a.shape();
    assert_eq!(m, b.len(), "nnls: row count of a must match b");
    let mut x = DVector::zeros(n);
    if n == 0 {
        return NnlsSolution {
            x,
            residual: -b.clone(),
        };
    }
    let scale = a.amax().max(1.0) * b.amax().max(1.0);
    let tol = 1e-13 * scale * (m.max(n) as f64);

    let mut passive = vec![false; n];
    // Columns rejected for numerical dependence; cleared whenever x changes.
    let mut blocked = vec![false; n];
    let max_outer = 3 * n + 30;

    for _ in 0..max_outer {
        let resid = b - a * &x;
        let w = a.transpose() * &resid;
        let candidate = (0..n)
            .filter(|&j| !passive[j] && !blocked[j])
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        if w[j] <= tol {
            break;
        }
        passive[j] = true;

        let mut first = true;
        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = a.select_columns(&idx);
            let s_p = lstsq(&sub, b);
            if first {
                first = false;
                let pos = idx.iter().position(|&i| i == j).unwrap();
                if s_p[pos] <= 0.0 {
                    passive[j] = false;
                    blocked[j] = true;
                    break;
                }
            }
            if s_p.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (k, &i) in idx.iter().enumerate() {
                    x[i] = s_p[k];
                }
                blocked.iter_mut().for_each(|v| *v = false);
                break;
            }
            let mut alpha = f64::INFINITY;
            for (k, &i) in idx.iter().enumerate() {
                if s_p[k] <= 0.0 {
                    let denom = x[i] - s_p[k];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    } else {
                        alpha = 0.0;
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (k, &i) in idx.iter().enumerate() {
                x[i] += alpha * (s_p[k] - x[i]);
            }
            for &i in &idx {
                if x[i] <= 1e-15 * scale {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
            blocked.iter_mut().for_each(|v| *v = false);
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    let residual = a * &x - b;
    NnlsSolution { x, residual }
}

/// Least-distance programming: the minimum-norm `y` with `g y ≥ h`.
/// Returns `None` when the constraint system is infeasible.
pub fn ldp(g: &DMatrix<f64>, h: &DVector<f64>) -> Option<DVector<f64>> {
    let (k, n) = g.shape();
    if k == 0 || h.iter().all(|&v| v <= 0.0) {
        return Some(DVector::zeros(n));
    }
    let mut e = DMatrix::zeros(n + 1, k);
    e.view_mut((0, 0), (n, k)).copy_from(&g.transpose());
    for j in 0..k {
        e[(n, j)] = h[j];
    }
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let sol = nnls(&e, &f);
    let r = &sol.residual;
    if r.norm() < 1e-12 || r[n].abs() < 1e-14 {
        return None;
    }
    Some(-r.rows(0, n) / r[n])
}

/// Euclidean projection of `v` onto `{z : a z ≤ b}`.
pub fn project_polyhedron(a: &DMatrix<f64>, b: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return Some(v.clone());
    }
    let h = a * v - b;
    if h.iter().all(|&x| x <= 0.0) {
        return Some(v.clone());
    }
    let s = ldp(&(-a), &h)?;
    Some(v + s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projector_range_spans_the_image() {
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.6, 0.0, 0.8]);
        let p = &u * u.transpose();
        let b = projector_range(&p);
        assert_eq!(b.ncols(), 2);
        assert!((&b * b.transpose() - &p).norm() < 1e-14);
        assert_eq!(projector_range(&DMatrix::zeros(2, 2)).ncols(), 0);
    }

    #[test]
    fn nnls_unconstrained_interior_solution() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let sol = nnls(&a, &b);
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
        assert!(sol.residual_norm() < 1e-12);
    }

    #[test]
    fn nnls_clamps_negative_direction() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![-1.0, 2.0]);
        let sol = nnls(&a, &b);
        assert_eq!(sol.x[0], 0.0);
        assert!((sol.x[1] - 2.0).abs() < 1e-14);
        assert!((sol.residual_norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn nnls_handles_duplicate_columns() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, -1.0, 0.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 0.0]);
        let sol = nnls(&a, &b);
        assert!(sol.residual_norm() < 1e-12);
        assert!(sol.x.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn ldp_halfspace() {
        // y1 + y2 >= 2 -> closest point (1, 1)
        let g = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let h = DVector::from_vec(vec![2.0]);
        let y = ldp(&g, &h).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ldp_detects_infeasible() {
        // y >= 1 and -y >= 0
        let g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let h = DVector::from_vec(vec![1.0, 0.0]);
        assert!(ldp(&g, &h).is_none());
    }

    #[test]
    fn polyhedron_projection_onto_box_corner() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let p = project_polyhedron(&a, &b, &DVector::from_vec(vec![3.0, -0.5])).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_row() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let ns = null_space(&a);
        assert_eq!(ns.ncols(), 2);
        assert!((&a * &ns).norm() < 1e-12);
        assert!((ns.transpose() * &ns - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
