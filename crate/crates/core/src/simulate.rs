//! Synthetic datasets drawn from a fully specified model.
//!
//! Row `i` draws its covariates (in column-name order) and then one uniform
//! for the outcome from the stream `(seed, i, SIMULATION)`, so the dataset
//! does not depend on the worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::model::{row_log_pmf_raw, RowValues};
use crate::params::ParamSet;
use crate::rng::{tag, RowStream};
use crate::spec::{validate_spec, ModelSpec, FREQ_COLUMN};

/// Distribution of one simulated covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Generator {
    Normal { mean: f64, sd: f64 },
    Bernoulli { p: f64 },
    Lognormal { mu: f64, sigma: f64 },
    Constant { value: f64 },
}

impl Generator {
    fn validate(&self, column: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("column `{column}`: {msg}")));
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                bad(format!("{name} must be finite, got {v}"))
            }
        };
        match *self {
            Generator::Normal { mean, sd } => {
                finite("mean", mean)?;
                finite("sd", sd)?;
                if sd <= 0.0 {
                    return bad(format!("sd must be positive, got {sd}"));
                }
            }
            Generator::Bernoulli { p } => {
                if !(0.0..=1.0).contains(&p) {
                    return bad(format!("p must lie in [0, 1], got {p}"));
                }
            }
            Generator::Lognormal { mu, sigma } => {
                finite("mu", mu)?;
                finite("sigma", sigma)?;
                if sigma <= 0.0 {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
            Generator::Constant { value } => finite("value", value)?,
        }
        Ok(())
    }

    fn draw(&self, stream: &mut RowStream) -> f64 {
        match *self {
            Generator::Normal { mean, sd } => mean + sd * stream.normal(),
            Generator::Bernoulli { p } => f64::from(u8::from(stream.uniform() < p)),
            Generator::Lognormal { mu, sigma } => (mu + sigma * stream.normal()).exp(),
            Generator::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub spec: ModelSpec,
    pub true_params: ParamSet,
    pub n: usize,
    pub seed: u64,
    pub covariate_generators: BTreeMap<String, Generator>,
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Draw a dataset on the raw (untransformed) covariate scale.
pub fn simulate(config: &SimulationConfig) -> Result<Dataset> {
    simulate_with_workers(config, 1)
}

pub fn simulate_with_workers(config: &SimulationConfig, workers: usize) -> Result<Dataset> {
    let spec = validate_spec(&config.spec)?;
    config.true_params.check(&spec)?;
    if config.covariate_generators.contains_key(FREQ_COLUMN) {
        return Err(Error::Config(format!(
            "`{FREQ_COLUMN}` is simulated and cannot have a generator"
        )));
    }
    for (col, g) in &config.covariate_generators {
        g.validate(col)?;
    }
    for (col, _) in config.spec.referenced_columns() {
        if !config.covariate_generators.contains_key(&col) {
            return Err(Error::Config(format!("no generator for column `{col}`")));
        }
    }
    let raw = config.true_params.to_unconstrained(&spec)?;
    let columns: Vec<String> = config.covariate_generators.keys().cloned().collect();
    let c = spec.top_code();

    let row = |i: usize| -> Result<Observation> {
        let mut stream = RowStream::new(config.seed, i as u64, tag::SIMULATION);
        let mut obs = Observation::new(0);
        for (col, g) in &config.covariate_generators {
            obs.covariates.insert(col.clone(), g.draw(&mut stream));
        }
        let u = stream.uniform();
        let scaled = to_model_scale(&config.spec, &obs, i)?;
        let values = RowValues::from_observation(&spec, &scaled)?;
        let log_pmf = row_log_pmf_raw(&spec, &raw, &values)?;
        obs.freq = inverse_cdf(&log_pmf, u, c);
        Ok(obs)
    };

    let observations: Result<Vec<Observation>> = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..config.n).into_par_iter().map(row).collect())
    } else {
        (0..config.n).map(row).collect()
    };
    Dataset::new(columns, observations?, c)
}

fn to_model_scale(spec: &ModelSpec, obs: &Observation, i: usize) -> Result<Observation> {
    let mut out = obs.clone();
    for (col, t) in spec.referenced_columns() {
        if t == crate::spec::Transform::NaturalLog {
            let v = obs.covariates[&col];
            if v <= 0.0 {
                return Err(Error::Config(format!(
                    "row {}: natural_log of non-positive simulated value {v} in column `{col}`",
                    i + 1
                )));
            }
            out.covariates.insert(col, v.ln());
        }
    }
    Ok(out)
}

fn inverse_cdf(log_pmf: &[f64], u: f64, top_code: usize) -> usize {
    let mut cum = 0.0;
    for (k, lp) in log_pmf.iter().enumerate() {
        cum += lp.exp();
        if u < cum {
            return k;
        }
    }
    top_code
}
