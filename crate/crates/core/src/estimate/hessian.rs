//! Finite-difference Hessian and the standard errors derived from it.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum HessianStatus {
    NegativeDefinite,
    /// The log-likelihood Hessian has an eigenvalue `>= 0`; the largest is
    /// reported.
    NotNegativeDefinite {
        eigenvalue: f64,
    },
    /// Some Hessian entry was not finite.
    NonFinite,
    NotComputed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StandardErrors {
    /// Unconstrained-space standard errors.
    pub se: Vec<Option<f64>>,
    pub t_stats: Vec<Option<f64>>,
    /// Delta-method standard errors of the constrained parameters.
    pub se_constrained: Vec<Option<f64>>,
    pub status: HessianStatus,
    /// Inverse of the negative Hessian, row-major, when available.
    pub covariance: Option<Vec<f64>>,
}

impl StandardErrors {
    pub(crate) fn unavailable(k: usize, status: HessianStatus) -> Self {
        Self {
            se: vec![None; k],
            t_stats: vec![None; k],
            se_constrained: vec![None; k],
            status,
            covariance: None,
        }
    }
}

fn step(x: f64) -> f64 {
    1e-4 * x.abs().max(1.0)
}

/// Central differences of an analytic gradient, symmetrised.
pub(crate) fn hessian_from_gradient<G: FnMut(&[f64], &mut [f64]) -> f64>(
    grad: &mut G,
    x: &[f64],
) -> Vec<f64> {
    let k = x.len();
    let mut hess = vec![0.0; k * k];
    let mut work = x.to_vec();
    let mut gu = vec![0.0; k];
    let mut gd = vec![0.0; k];
    for j in 0..k {
        let h = step(x[j]);
        work[j] = x[j] + h;
        grad(&work, &mut gu);
        work[j] = x[j] - h;
        grad(&work, &mut gd);
        work[j] = x[j];
        for i in 0..k {
            hess[i * k + j] = (gu[i] - gd[i]) / (2.0 * h);
        }
    }
    symmetrise(&mut hess, k);
    hess
}

/// Four-point central differences of the value.
pub(crate) fn hessian_from_value<V: FnMut(&[f64]) -> f64>(value: &mut V, x: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut hess = vec![0.0; k * k];
    let mut work = x.to_vec();
    let f0 = value(x);
    for i in 0..k {
        let hi = step(x[i]);
        for j in i..k {
            let hj = step(x[j]);
            let v = if i == j {
                work[i] = x[i] + hi;
                let up = value(&work);
                work[i] = x[i] - hi;
                let dn = value(&work);
                work[i] = x[i];
                (up - 2.0 * f0 + dn) / (hi * hi)
            } else {
                let mut eval = |si: f64, sj: f64| {
                    work[i] = x[i] + si * hi;
                    work[j] = x[j] + sj * hj;
                    let v = value(&work);
                    work[i] = x[i];
                    work[j] = x[j];
                    v
                };
                (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0))
                    / (4.0 * hi * hj)
            };
            hess[i * k + j] = v;
            hess[j * k + i] = v;
        }
    }
    hess
}

fn symmetrise(h: &mut [f64], k: usize) {
    for i in 0..k {
        for j in (i + 1)..k {
            let m = 0.5 * (h[i * k + j] + h[j * k + i]);
            h[i * k + j] = m;
            h[j * k + i] = m;
        }
    }
}

/// Standard errors from the log-likelihood Hessian at `x`.
///
/// `jacobian` is the row-major Jacobian of constrained parameters with
/// respect to `x`, used for the delta-method errors.
pub(crate) fn standard_errors_from_hessian(
    hess: &[f64],
    x: &[f64],
    jacobian: &[f64],
) -> StandardErrors {
    let k = x.len();
    if k == 0 {
        return StandardErrors {
            se: vec![],
            t_stats: vec![],
            se_constrained: vec![],
            status: HessianStatus::NegativeDefinite,
            covariance: Some(vec![]),
        };
    }
    if hess.iter().any(|v| !v.is_finite()) {
        return StandardErrors::unavailable(k, HessianStatus::NonFinite);
    }
    let neg = DMatrix::from_row_slice(k, k, hess).map(|v| -v);
    let Some(chol) = neg.clone().cholesky() else {
        let eig = SymmetricEigen::new(DMatrix::from_row_slice(k, k, hess));
        let worst = eig
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        return StandardErrors::unavailable(
            k,
            HessianStatus::NotNegativeDefinite { eigenvalue: worst },
        );
    };
    let cov = chol.inverse();
    let se: Vec<Option<f64>> = (0..k)
        .map(|i| {
            let v = cov[(i, i)];
            (v > 0.0 && v.is_finite()).then(|| v.sqrt())
        })
        .collect();
    let t_stats = se.iter().zip(x).map(|(s, v)| s.map(|s| v / s)).collect();
    let j = DMatrix::from_row_slice(k, k, jacobian);
    let cov_c = &j * &cov * j.transpose();
    let se_constrained = (0..k)
        .map(|i| {
            let v = cov_c[(i, i)];
            (v > 0.0 && v.is_finite()).then(|| v.sqrt())
        })
        .collect();
    let mut flat = Vec::with_capacity(k * k);
    for r in 0..k {
        for c in 0..k {
            flat.push(cov[(r, c)]);
        }
    }
    StandardErrors {
        se,
        t_stats,
        se_constrained,
        status: HessianStatus::NegativeDefinite,
        covariance: Some(flat),
    }
}
