//! Marginal effects of covariates on category probabilities.
//!
//! Effects are exact derivatives of the implemented pmf with respect to the
//! model-scale covariate value (after any `natural_log` transform). A
//! covariate may enter several channels at once; the channels add:
//!
//! - ordered index `v = β'x`: `∂Pr/∂v · β_j`;
//! - split logit `s = γ'z`: `∂Pr(0)/∂s = F(1-F)`, positive categories get
//!   `-F(1-F)·q(k)`;
//! - count utilities: `Σ_k ∂Pr/∂Ṽ_k · ∂Ṽ_k/∂x_j` with
//!   `∂Ṽ_k/∂x_j = β_j·∂V_k/∂ln λ + Σ ω` over the covariate's count terms;
//! - allocation `ρ = logistic(θ'w)`: `∂Pr/∂ρ · ρ(1-ρ) · θ_j`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::kernel::count::{d_utility_d_ln_lambda, CountFamily, Ogev};
use crate::kernel::ordered::{d_pmf_d_v, log_pmf_into};
use crate::math::logistic;
use crate::model::{row_log_pmf_raw, Kernel, RowValues};
use crate::params::ParamSet;
use crate::spec::{Family, ValidatedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    AtObservation,
    SampleAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// `∂Pr(f=k)/∂x`.
    Derivative,
    /// `Pr(f=k | x=1) - Pr(f=k | x=0)`.
    DiscreteChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsTable {
    pub covariate: String,
    pub per_category: Vec<f64>,
    pub scope: Scope,
    pub measure: Measure,
}

impl EffectsTable {
    pub fn total(&self) -> f64 {
        self.per_category.iter().sum()
    }
}

/// Where a covariate enters the model.
#[derive(Debug, Default)]
struct Slots {
    beta: Option<usize>,
    gamma: Option<usize>,
    omega: Vec<usize>,
    theta: Option<usize>,
}

impl Slots {
    fn find(spec: &ValidatedSpec, covariate: &str) -> Result<Slots> {
        let s = spec.spec();
        let l = spec.layout();
        let offset = usize::from(s.index_intercept);
        let mut slots = Slots {
            beta: s
                .index_covariates
                .iter()
                .position(|c| c.column == covariate)
                .map(|i| l.beta.start + offset + i),
            ..Default::default()
        };
        if let Some(b) = &s.split_covariates {
            slots.gamma = b
                .covariates
                .iter()
                .position(|c| c.column == covariate)
                .map(|i| l.gamma.start + usize::from(b.intercept) + i);
        }
        slots.omega = s
            .count_specific_terms
            .iter()
            .enumerate()
            .filter(|(_, t)| t.column.as_deref() == Some(covariate))
            .map(|(i, _)| l.omega.start + i)
            .collect();
        if let Some(b) = &s.rho_covariates {
            slots.theta = b
                .covariates
                .iter()
                .position(|c| c.column == covariate)
                .map(|i| l.theta.start + usize::from(b.intercept) + i);
        }
        if slots.beta.is_none()
            && slots.gamma.is_none()
            && slots.omega.is_empty()
            && slots.theta.is_none()
        {
            return Err(Error::Lookup(covariate.to_string()));
        }
        Ok(slots)
    }
}

fn derivative_at(spec: &ValidatedSpec, raw: &[f64], row: &RowValues, slots: &Slots) -> Vec<f64> {
    let c = spec.top_code();
    let kern = Kernel::new(spec, raw);
    let beta_j = slots.beta.map_or(0.0, |i| raw[i]);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    match spec.family() {
        Family::OevGamma => {
            let v = dot(kern.beta, &row.x);
            d_pmf_d_v(v, kern.alpha, &kern.thresholds)
                .into_iter()
                .map(|d| d * beta_j)
                .collect()
        }
        Family::SplitOevGamma => {
            let v = dot(kern.beta, &row.x);
            let s = dot(kern.gamma, &row.z);
            let f = logistic(s);
            let gamma_j = slots.gamma.map_or(0.0, |i| raw[i]);
            let mut lq = vec![0.0; c];
            log_pmf_into(v, kern.alpha, &kern.thresholds, &mut lq);
            let dq = d_pmf_d_v(v, kern.alpha, &kern.thresholds);
            let fs = f * (1.0 - f);
            let mut out = Vec::with_capacity(c + 1);
            out.push(fs * gamma_j);
            for k in 0..c {
                out.push(-fs * lq[k].exp() * gamma_j + (1.0 - f) * dq[k] * beta_j);
            }
            out
        }
        Family::NbOgev | Family::PoissonOgev => {
            let fam = if spec.family() == Family::NbOgev {
                CountFamily::NegativeBinomial
            } else {
                CountFamily::Poisson
            };
            let levels: Vec<usize> = spec
                .spec()
                .count_specific_terms
                .iter()
                .map(|t| t.level)
                .collect();
            let mut u = Vec::with_capacity(c + 1);
            kern.count_utilities(&row.x, &row.b, &levels, &mut u);
            let rho = kern.rho(&row.w);
            let mut ogev = Ogev::new();
            ogev.evaluate(&u, rho);
            let lambda = dot(kern.beta, &row.x).exp();
            let mut du: Vec<f64> = (0..=c)
                .map(|y| beta_j * d_utility_d_ln_lambda(fam, y, lambda, kern.r))
                .collect();
            let l = spec.layout();
            for &i in &slots.omega {
                du[levels[i - l.omega.start]] += raw[i];
            }
            let jac = ogev.jacobian();
            let m = c + 1;
            let mut out: Vec<f64> = (0..m).map(|y| dot(&jac[y * m..(y + 1) * m], &du)).collect();
            if let Some(i) = slots.theta {
                let scale = rho * (1.0 - rho) * raw[i];
                for (o, d) in out.iter_mut().zip(ogev.d_rho()) {
                    *o += d * scale;
                }
            }
            out
        }
    }
}

/// Effects for any family.
pub fn marginal_effects(
    spec: &ValidatedSpec,
    params: &ParamSet,
    obs: &Observation,
    covariate: &str,
) -> Result<EffectsTable> {
    let slots = Slots::find(spec, covariate)?;
    let raw = params.to_unconstrained(spec)?;
    let row = RowValues::from_observation(spec, obs)?;
    Ok(EffectsTable {
        covariate: covariate.to_string(),
        per_category: derivative_at(spec, &raw, &row, &slots),
        scope: Scope::AtObservation,
        measure: Measure::Derivative,
    })
}

fn require_family(spec: &ValidatedSpec, want: &[Family]) -> Result<()> {
    if want.contains(&spec.family()) {
        Ok(())
    } else {
        Err(Error::Spec(format!(
            "{} effects requested for a {} model",
            want.iter()
                .map(|f| f.as_str())
                .collect::<Vec<_>>()
                .join("/"),
            spec.family()
        )))
    }
}

/// Effects in the Gamma-OEV model; the covariate must be in the index.
pub fn ordered_marginal_effects(
    spec: &ValidatedSpec,
    params: &ParamSet,
    obs: &Observation,
    covariate: &str,
) -> Result<EffectsTable> {
    require_family(spec, &[Family::OevGamma])?;
    marginal_effects(spec, params, obs, covariate)
}

/// Effects in the split-population model, through `z`, `x` or both.
pub fn split_marginal_effects(
    spec: &ValidatedSpec,
    params: &ParamSet,
    obs: &Observation,
    covariate: &str,
) -> Result<EffectsTable> {
    require_family(spec, &[Family::SplitOevGamma])?;
    marginal_effects(spec, params, obs, covariate)
}

/// Effects in the NB/Poisson OGEV models, through the mean, count-specific
/// terms and the allocation logit.
pub fn ogev_marginal_effects(
    spec: &ValidatedSpec,
    params: &ParamSet,
    obs: &Observation,
    covariate: &str,
    family: CountFamily,
) -> Result<EffectsTable> {
    let want = match family {
        CountFamily::NegativeBinomial => Family::NbOgev,
        CountFamily::Poisson => Family::PoissonOgev,
    };
    require_family(spec, &[want])?;
    marginal_effects(spec, params, obs, covariate)
}

/// `Pr(· | x=1) - Pr(· | x=0)` at an observation, for dummy covariates.
pub fn discrete_change_effects(
    spec: &ValidatedSpec,
    params: &ParamSet,
    obs: &Observation,
    covariate: &str,
) -> Result<EffectsTable> {
    Slots::find(spec, covariate)?;
    let raw = params.to_unconstrained(spec)?;
    let at = |value: f64| -> Result<Vec<f64>> {
        let mut o = obs.clone();
        o.covariates.insert(covariate.to_string(), value);
        let row = RowValues::from_observation(spec, &o)?;
        Ok(row_log_pmf_raw(spec, &raw, &row)?
            .into_iter()
            .map(f64::exp)
            .collect())
    };
    let one = at(1.0)?;
    let zero = at(0.0)?;
    Ok(EffectsTable {
        covariate: covariate.to_string(),
        per_category: one.iter().zip(&zero).map(|(a, b)| a - b).collect(),
        scope: Scope::AtObservation,
        measure: Measure::DiscreteChange,
    })
}

/// Per-observation derivative effects over a prepared dataset.
pub fn per_observation_effects(
    spec: &ValidatedSpec,
    params: &ParamSet,
    dataset: &Dataset,
    covariate: &str,
) -> Result<Vec<EffectsTable>> {
    let slots = Slots::find(spec, covariate)?;
    let raw = params.to_unconstrained(spec)?;
    dataset
        .observations()
        .iter()
        .map(|obs| {
            let row = RowValues::from_observation(spec, obs)?;
            Ok(EffectsTable {
                covariate: covariate.to_string(),
                per_category: derivative_at(spec, &raw, &row, &slots),
                scope: Scope::AtObservation,
                measure: Measure::Derivative,
            })
        })
        .collect()
}

/// Sample mean of per-observation effects at the given parameters, in
/// dataset order.
pub fn average_effects(
    spec: &ValidatedSpec,
    params: &ParamSet,
    dataset: &Dataset,
    covariate: &str,
    measure: Measure,
) -> Result<EffectsTable> {
    if dataset.is_empty() {
        return Err(Error::Dimension(
            "cannot average over an empty dataset".into(),
        ));
    }
    let tables = match measure {
        Measure::Derivative => per_observation_effects(spec, params, dataset, covariate)?,
        Measure::DiscreteChange => dataset
            .observations()
            .iter()
            .map(|o| discrete_change_effects(spec, params, o, covariate))
            .collect::<Result<_>>()?,
    };
    let m = spec.top_code() + 1;
    let n = tables.len() as f64;
    let per_category = (0..m)
        .map(|k| crate::math::compensated_sum(tables.iter().map(|t| t.per_category[k])) / n)
        .collect();
    Ok(EffectsTable {
        covariate: covariate.to_string(),
        per_category,
        scope: Scope::SampleAverage,
        measure,
    })
}

/// Average marginal effects at a converged fit.
pub fn average_marginal_effects(
    fit: &FitResult,
    dataset: &Dataset,
    covariate: &str,
) -> Result<EffectsTable> {
    if !fit.converged {
        return Err(Error::State(
            "average marginal effects need a converged fit".into(),
        ));
    }
    let spec = fit.validated_spec()?;
    average_effects(&spec, &fit.params, dataset, covariate, Measure::Derivative)
}

/// Covariate columns that enter a spec, in first-use order.
pub fn model_covariates(spec: &ValidatedSpec) -> Vec<String> {
    spec.spec()
        .referenced_columns()
        .into_iter()
        .map(|(c, _)| c)
        .collect()
}
