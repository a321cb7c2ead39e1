//! Frequency-support constraints on control sequences.
//!
//! Each control component `k` has an allowed set of DFT bins `W_k ⊆ {0,…,T−1}`
//! (0-based, matching the exponent `e^{−i2πξt/T}`). The support constraint is
//! linearized as `Σ_t E_t u_t = 0`, one real row per forbidden bin for the
//! real part and one for the imaginary part (skipped at ξ = 0 and ξ = T/2,
//! where it vanishes identically). Bins `ξ` and `T − ξ` carry conjugate
//! spectra for real sequences, so each conjugate pair contributes at most one
//! pair of rows.

use std::collections::BTreeSet;
use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};

/// Default absolute tolerance for spectral support.
pub const SUPPORT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySpec {
    horizon: usize,
    control_dim: usize,
    allowed: Vec<BTreeSet<usize>>,
}

impl FrequencySpec {
    pub fn new(horizon: usize, allowed: Vec<BTreeSet<usize>>) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidProblem("horizon must be ≥ 1".into()));
        }
        for (k, w) in allowed.iter().enumerate() {
            if let Some(&bad) = w.iter().find(|&&b| b >= horizon) {
                return Err(Error::InvalidProblem(format!(
                    "allowed bin {bad} of component {k} is outside 0..{horizon}"
                )));
            }
        }
        Ok(FrequencySpec {
            horizon,
            control_dim: allowed.len(),
            allowed,
        })
    }

    /// Every bin allowed for every component (no constraint).
    pub fn unconstrained(horizon: usize, control_dim: usize) -> Self {
        FrequencySpec {
            horizon,
            control_dim,
            allowed: vec![(0..horizon).collect(); control_dim],
        }
    }

    pub fn from_slices(horizon: usize, allowed: &[&[usize]]) -> Result<Self> {
        Self::new(horizon, allowed.iter().map(|w| w.iter().copied().collect()).collect())
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn allowed(&self) -> &[BTreeSet<usize>] {
        &self.allowed
    }

    pub fn is_unconstrained(&self) -> bool {
        self.allowed.iter().all(|w| w.len() == self.horizon)
    }

    /// Bins forbidden for component `k`.
    pub fn forbidden(&self, k: usize) -> BTreeSet<usize> {
        (0..self.horizon).filter(|b| !self.allowed[k].contains(b)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyConstraintMatrices {
    pub ell: usize,
    pub control_dim: usize,
    /// `E_0, …, E_{T−1}`, each `ℓ × m`.
    pub matrices: Vec<DMatrix<f64>>,
}

impl FrequencyConstraintMatrices {
    pub fn horizon(&self) -> usize {
        self.matrices.len()
    }

    /// `[E_0 E_1 … E_{T−1}]`, acting on the stacked control vector
    /// `(u_0, u_1, …)`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let m = self.control_dim;
        let mut s = DMatrix::zeros(self.ell, m * self.horizon());
        for (t, e) in self.matrices.iter().enumerate() {
            s.view_mut((0, t * m), (self.ell, m)).copy_from(e);
        }
        s
    }
}

/// Unnormalized DFT `û_ξ = Σ_t u_t e^{−i2πξt/T}`.
pub fn dft(sequence: &[f64]) -> Vec<Complex64> {
    let t_len = sequence.len();
    (0..t_len)
        .map(|xi| {
            sequence
                .iter()
                .enumerate()
                .map(|(t, &u)| u * Complex64::from_polar(1.0, -TAU * ((xi * t) % t_len) as f64 / t_len as f64))
                .sum()
        })
        .collect()
}

/// Inverse of [`dft`].
pub fn idft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let n = spectrum.len();
    (0..n)
        .map(|t| {
            spectrum
                .iter()
                .enumerate()
                .map(|(xi, &v)| v * Complex64::from_polar(1.0, TAU * ((xi * t) % n) as f64 / n as f64))
                .sum::<Complex64>()
                / n as f64
        })
        .collect()
}

/// Indices with `|v_i| > tol`.
pub fn support(v: &[Complex64], tol: f64) -> BTreeSet<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, z)| z.norm() > tol)
        .map(|(i, _)| i)
        .collect()
}

pub fn build_freq_matrices(spec: &FrequencySpec) -> FrequencyConstraintMatrices {
    let t_len = spec.horizon;
    let m = spec.control_dim;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for k in 0..m {
        let forbidden = spec.forbidden(k);
        let mut emitted = BTreeSet::new();
        for &xi in &forbidden {
            let rep = xi.min((t_len - xi) % t_len);
            if !emitted.insert(rep) {
                continue;
            }
            let phase = |t: usize| TAU * ((rep * t) % t_len) as f64 / t_len as f64;
            rows.push((k, (0..t_len).map(|t| phase(t).cos()).collect()));
            if rep != 0 && 2 * rep != t_len {
                rows.push((k, (0..t_len).map(|t| -phase(t).sin()).collect()));
            }
        }
    }
    let ell = rows.len();
    let matrices = (0..t_len)
        .map(|t| {
            let mut e = DMatrix::zeros(ell, m);
            for (r, (k, row)) in rows.iter().enumerate() {
                e[(r, *k)] = row[t];
            }
            e
        })
        .collect();
    FrequencyConstraintMatrices {
        ell,
        control_dim: m,
        matrices,
    }
}

/// `Σ_t E_t u_t`.
pub fn freq_residual(mats: &FrequencyConstraintMatrices, controls: &[DVector<f64>]) -> Result<DVector<f64>> {
    check_dim("control sequence length", mats.horizon(), controls.len())?;
    let mut acc = DVector::zeros(mats.ell);
    for (e, u) in mats.matrices.iter().zip(controls) {
        check_dim("control dimension", mats.control_dim, u.len())?;
        acc += e * u;
    }
    Ok(acc)
}
