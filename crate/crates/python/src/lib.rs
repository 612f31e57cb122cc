//! Python bindings for `freqchoice`.
//!
//! Specs, parameter sets and simulation configs cross the boundary as JSON
//! text; datasets and fits are opaque classes.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use freqchoice::estimate::{self, FitOptions};
use freqchoice::{effects, kernel, simulate as sim};

fn py_err(e: freqchoice::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_params(text: &str) -> PyResult<freqchoice::ParamSet> {
    serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))
}

#[pyclass(name = "ModelSpec", module = "pyfreqchoice")]
struct PyModelSpec {
    inner: freqchoice::ModelSpec,
}

#[pymethods]
impl PyModelSpec {
    /// Parse and validate a spec document.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = freqchoice::ModelSpec::from_json(text).map_err(py_err)?;
        freqchoice::validate_spec(&inner).map_err(py_err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.as_str()
    }

    #[getter]
    fn top_code(&self) -> usize {
        self.inner.top_code
    }

    /// Number of free parameters.
    #[getter]
    fn k(&self) -> PyResult<usize> {
        Ok(freqchoice::validate_spec(&self.inner).map_err(py_err)?.k())
    }

    fn parameter_names(&self) -> PyResult<Vec<String>> {
        Ok(freqchoice::validate_spec(&self.inner)
            .map_err(py_err)?
            .constrained_names())
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelSpec(family='{}', top_code={})",
            self.inner.family, self.inner.top_code
        )
    }
}

/// A prepared dataset: transforms of the spec it was loaded with are applied.
#[pyclass(name = "Dataset", module = "pyfreqchoice")]
struct PyDataset {
    inner: freqchoice::Dataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn from_csv(text: &str, spec: PyRef<'_, PyModelSpec>) -> PyResult<Self> {
        let inner = freqchoice::load_dataset(text.as_bytes(), &spec.inner).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn column_names(&self) -> Vec<String> {
        self.inner.column_names().to_vec()
    }

    fn freq(&self) -> Vec<usize> {
        self.inner.observations().iter().map(|o| o.freq).collect()
    }

    fn category_shares(&self) -> Vec<f64> {
        self.inner.category_shares()
    }

    fn to_csv(&self) -> PyResult<String> {
        self.inner.to_csv_string().map_err(py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n={}, columns={:?})",
            self.inner.n(),
            self.inner.column_names()
        )
    }
}

#[pyclass(name = "FitResult", module = "pyfreqchoice")]
struct PyFitResult {
    inner: estimate::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: estimate::FitResult::from_json(text).map_err(py_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(py_err)
    }

    #[getter]
    fn family(&self) -> &'static str {
        self.inner.family.as_str()
    }

    #[getter]
    fn ll_convergence(&self) -> f64 {
        self.inner.ll_convergence
    }

    #[getter]
    fn ll_null(&self) -> Option<f64> {
        self.inner.ll_null
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn aic(&self) -> Option<f64> {
        self.inner.stats.map(|s| s.aic)
    }

    #[getter]
    fn bic(&self) -> Option<f64> {
        self.inner.stats.map(|s| s.bic)
    }

    #[getter]
    fn rho_squared(&self) -> Option<f64> {
        self.inner.stats.map(|s| s.rho_squared)
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    /// `(name, value, se)` for every constrained parameter.
    fn estimates(&self) -> Vec<(String, f64, Option<f64>)> {
        self.inner
            .estimates
            .iter()
            .map(|e| (e.name.clone(), e.value, e.se))
            .collect()
    }

    /// Parameters at convergence as a JSON document accepted by `fit(init=...)`.
    fn params_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.params).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "FitResult(family='{}', ll={:.4}, k={}, converged={})",
            self.inner.family,
            self.inner.ll_convergence,
            self.inner.k,
            if self.inner.converged {
                "True"
            } else {
                "False"
            }
        )
    }
}

/// Fit a model. Without `null_ll` the null model is fitted too, so the fit
/// statistics are always filled in.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (dataset, spec, init=None, null_ll=None, starts=1, seed=0, max_iter=500))]
fn fit(
    py: Python<'_>,
    dataset: PyRef<'_, PyDataset>,
    spec: PyRef<'_, PyModelSpec>,
    init: Option<&str>,
    null_ll: Option<f64>,
    starts: usize,
    seed: u64,
    max_iter: usize,
) -> PyResult<PyFitResult> {
    let init = init.map(parse_params).transpose()?;
    let options = FitOptions {
        max_iter,
        starts,
        seed,
        ..FitOptions::default()
    };
    let data = &dataset.inner;
    let spec = &spec.inner;
    let inner = py
        .detach(|| estimate::estimate(data, spec, init.as_ref(), null_ll, &options))
        .map_err(py_err)?;
    Ok(PyFitResult { inner })
}

#[pyfunction]
fn log_likelihood(
    dataset: PyRef<'_, PyDataset>,
    spec: PyRef<'_, PyModelSpec>,
    params: &str,
) -> PyResult<f64> {
    estimate::log_likelihood(&dataset.inner, &spec.inner, &parse_params(params)?).map_err(py_err)
}

/// Category probabilities for one observation given model-scale covariates.
#[pyfunction]
fn predict_pmf(
    spec: PyRef<'_, PyModelSpec>,
    params: &str,
    covariates: BTreeMap<String, f64>,
) -> PyResult<Vec<f64>> {
    let vs = freqchoice::validate_spec(&spec.inner).map_err(py_err)?;
    let obs = freqchoice::Observation {
        freq: 0,
        covariates,
    };
    freqchoice::predict_pmf(&vs, &parse_params(params)?, &obs).map_err(py_err)
}

#[pyfunction]
fn gamma_oev_pmf(v: f64, sigma2: f64, thresholds: Vec<f64>) -> PyResult<Vec<f64>> {
    let input = kernel::OrderedKernelInput::new(v, sigma2, &thresholds);
    kernel::gamma_oev_pmf(&input, thresholds.len()).map_err(py_err)
}

#[pyfunction]
fn ogev_pmf(utilities: Vec<f64>, rho: f64) -> PyResult<Vec<f64>> {
    kernel::ogev_pmf(&utilities, rho).map_err(py_err)
}

/// `(aic, bic, rho_squared)`.
#[pyfunction]
fn fit_statistics(
    ll_convergence: f64,
    ll_null: f64,
    k: usize,
    n: usize,
) -> PyResult<(f64, f64, f64)> {
    let s = estimate::fit_statistics(ll_convergence, ll_null, k, n).map_err(py_err)?;
    Ok((s.aic, s.bic, s.rho_squared))
}

/// Simulate from a config document; returns the raw (untransformed) CSV
/// text, ready for `Dataset.from_csv`.
#[pyfunction]
fn simulate(config: &str) -> PyResult<String> {
    let cfg = sim::SimulationConfig::from_json(config).map_err(py_err)?;
    sim::simulate(&cfg)
        .and_then(|d| d.to_csv_string())
        .map_err(py_err)
}

#[pyfunction]
fn average_marginal_effects(
    fit: PyRef<'_, PyFitResult>,
    dataset: PyRef<'_, PyDataset>,
    covariate: &str,
) -> PyResult<Vec<f64>> {
    effects::average_marginal_effects(&fit.inner, &dataset.inner, covariate)
        .map(|t| t.per_category)
        .map_err(py_err)
}

/// Rank fits by AIC; returns the comparison table as CSV text.
#[pyfunction]
fn compare(fits: Vec<(String, PyRef<'_, PyFitResult>)>) -> PyResult<String> {
    let owned: Vec<(String, estimate::FitResult)> = fits
        .into_iter()
        .map(|(label, f)| (label, f.inner.clone()))
        .collect();
    freqchoice::run_compare(&owned)
        .and_then(|c| c.to_csv_string())
        .map_err(py_err)
}

#[pymodule]
fn pyfreqchoice(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelSpec>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(predict_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(gamma_oev_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(ogev_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(fit_statistics, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(average_marginal_effects, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
