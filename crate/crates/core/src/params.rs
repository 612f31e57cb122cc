//! Model parameters in reported (constrained) form and their mapping to the
//! unconstrained vector the optimizer moves in.
//!
//! Thresholds are stored in the unconstrained vector as the first cut point
//! followed by the logarithms of the successive gaps, so any real vector
//! maps to a strictly increasing threshold sequence. `σ²` and `r` enter
//! through their logarithms and `ρ` through a logistic map of `θ'w`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spec::{Layout, ValidatedSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    /// Index coefficients; the intercept, when the spec has one, comes first.
    #[serde(default)]
    pub beta: Vec<f64>,
    /// Strictly increasing cut points. `δ_1..δ_C` for `oev_gamma`,
    /// `δ_2..δ_C` for the positive part of `split_oev_gamma`.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_sigma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_r: Option<f64>,
    /// Split-logit coefficients; intercept first when present.
    #[serde(default)]
    pub gamma: Vec<f64>,
    /// Count-specific coefficients aligned with `count_specific_terms`.
    #[serde(default)]
    pub omega: Vec<f64>,
    /// Allocation-logit coefficients; intercept first when present.
    #[serde(default)]
    pub theta: Vec<f64>,
}

impl ParamSet {
    /// Gamma heterogeneity parameter; 1 when the model has none.
    pub fn sigma2(&self) -> f64 {
        self.log_sigma2.unwrap_or(0.0).exp()
    }

    /// Variance of the unit-mean mixing Gamma implied by the survival form,
    /// `1/σ²`.
    pub fn mixture_variance(&self) -> Option<f64> {
        self.log_sigma2.map(|l| (-l).exp())
    }

    pub fn r(&self) -> Option<f64> {
        self.log_r.map(f64::exp)
    }

    /// Default starting point: all slopes zero, unit `σ²` and `r`, and
    /// thresholds left empty for the estimator to fill from shares.
    pub fn zeros(spec: &ValidatedSpec) -> Self {
        let l = spec.layout();
        ParamSet {
            beta: vec![0.0; l.beta.len()],
            thresholds: Vec::new(),
            log_sigma2: l.log_sigma2.map(|_| 0.0),
            log_r: l.log_r.map(|_| 0.0),
            gamma: vec![0.0; l.gamma.len()],
            omega: vec![0.0; l.omega.len()],
            theta: vec![0.0; l.theta.len()],
        }
    }

    /// Check dimensions and threshold ordering against a spec.
    pub fn check(&self, spec: &ValidatedSpec) -> Result<()> {
        let l = spec.layout();
        let dim = |what: &str, got: usize, want: usize| -> Result<()> {
            if got == want {
                Ok(())
            } else {
                Err(Error::Dimension(format!(
                    "{what}: expected {want} values, got {got}"
                )))
            }
        };
        dim("beta", self.beta.len(), l.beta.len())?;
        dim("thresholds", self.thresholds.len(), l.thresholds.len())?;
        dim("gamma", self.gamma.len(), l.gamma.len())?;
        dim("omega", self.omega.len(), l.omega.len())?;
        dim("theta", self.theta.len(), l.theta.len())?;
        if l.log_sigma2.is_some() != self.log_sigma2.is_some() {
            return Err(Error::Dimension(format!(
                "log_sigma2 is {} for this spec",
                if l.log_sigma2.is_some() {
                    "required"
                } else {
                    "not a parameter"
                }
            )));
        }
        if l.log_r.is_some() != self.log_r.is_some() {
            return Err(Error::Dimension(format!(
                "log_r is {} for this spec",
                if l.log_r.is_some() {
                    "required"
                } else {
                    "not a parameter"
                }
            )));
        }
        let all = self
            .beta
            .iter()
            .chain(&self.thresholds)
            .chain(self.log_sigma2.iter())
            .chain(self.log_r.iter())
            .chain(&self.gamma)
            .chain(&self.omega)
            .chain(&self.theta);
        for v in all {
            if !v.is_finite() {
                return Err(Error::NumericInput(
                    "parameter values must be finite".into(),
                ));
            }
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain {
                row: None,
                msg: "thresholds must be strictly increasing".into(),
            });
        }
        Ok(())
    }

    pub fn to_unconstrained(&self, spec: &ValidatedSpec) -> Result<Vec<f64>> {
        self.check(spec)?;
        let l = spec.layout();
        let mut out = vec![0.0; l.k];
        out[l.beta.clone()].copy_from_slice(&self.beta);
        let t = &mut out[l.thresholds.clone()];
        for (i, d) in self.thresholds.iter().enumerate() {
            t[i] = if i == 0 {
                *d
            } else {
                (d - self.thresholds[i - 1]).ln()
            };
        }
        if let (Some(i), Some(v)) = (l.log_sigma2, self.log_sigma2) {
            out[i] = v;
        }
        if let (Some(i), Some(v)) = (l.log_r, self.log_r) {
            out[i] = v;
        }
        out[l.gamma.clone()].copy_from_slice(&self.gamma);
        out[l.omega.clone()].copy_from_slice(&self.omega);
        out[l.theta.clone()].copy_from_slice(&self.theta);
        Ok(out)
    }

    pub fn from_unconstrained(spec: &ValidatedSpec, raw: &[f64]) -> Result<Self> {
        let l = spec.layout();
        if raw.len() != l.k {
            return Err(Error::Dimension(format!(
                "unconstrained vector: expected {} values, got {}",
                l.k,
                raw.len()
            )));
        }
        Ok(Self::decode(l, raw))
    }

    pub(crate) fn decode(l: &Layout, raw: &[f64]) -> Self {
        ParamSet {
            beta: raw[l.beta.clone()].to_vec(),
            thresholds: thresholds_from_raw(&raw[l.thresholds.clone()]),
            log_sigma2: l.log_sigma2.map(|i| raw[i]),
            log_r: l.log_r.map(|i| raw[i]),
            gamma: raw[l.gamma.clone()].to_vec(),
            omega: raw[l.omega.clone()].to_vec(),
            theta: raw[l.theta.clone()].to_vec(),
        }
    }
}

pub(crate) fn thresholds_from_raw(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len());
    let mut acc = 0.0;
    for (i, v) in raw.iter().enumerate() {
        acc = if i == 0 { *v } else { acc + v.exp() };
        out.push(acc);
    }
    out
}

/// Jacobian of constrained parameters with respect to the unconstrained
/// vector, row-major `k × k`. Block-diagonal except for the threshold block,
/// which is lower triangular.
pub(crate) fn constrained_jacobian(l: &Layout, raw: &[f64]) -> Vec<f64> {
    let k = l.k;
    let mut jac = vec![0.0; k * k];
    for i in 0..k {
        jac[i * k + i] = 1.0;
    }
    let tr = l.thresholds.clone();
    for (m, row) in tr.clone().enumerate() {
        for (j, col) in tr.clone().enumerate() {
            jac[row * k + col] = if j > m {
                0.0
            } else if j == 0 {
                1.0
            } else {
                raw[col].exp()
            };
        }
    }
    for i in [l.log_sigma2, l.log_r].into_iter().flatten() {
        jac[i * k + i] = raw[i].exp();
    }
    jac
}

/// Constrained values aligned with `ValidatedSpec::constrained_names`.
pub(crate) fn constrained_values(l: &Layout, raw: &[f64]) -> Vec<f64> {
    let mut out = raw.to_vec();
    let th = thresholds_from_raw(&raw[l.thresholds.clone()]);
    out[l.thresholds.clone()].copy_from_slice(&th);
    for i in [l.log_sigma2, l.log_r].into_iter().flatten() {
        out[i] = raw[i].exp();
    }
    out
}
