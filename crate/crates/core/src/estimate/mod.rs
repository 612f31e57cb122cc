//! Maximum-likelihood estimation.
//!
//! All entry points take a *prepared* dataset, i.e. one returned by
//! [`Dataset::prepare`] or [`crate::load_dataset`], so that covariate
//! transforms have already been applied.

mod hessian;
mod optim;
mod stats;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{Design, Evaluator};
use crate::params::{constrained_jacobian, constrained_values, ParamSet};
use crate::rng::{tag, RowStream};
use crate::spec::{validate_spec, Family, ModelSpec, ValidatedSpec};

pub use hessian::{HessianStatus, StandardErrors};
pub use stats::{fit_statistics, FitStats};

use optim::{fd_gradient, maximize, DIVERGENCE_BOUND};

/// Tolerance of the analytic-gradient self-check, relative to the
/// finite-difference gradient's infinity norm.
const SELF_CHECK_TOLERANCE: f64 = 1e-5;
/// Standard deviation of the multistart perturbations.
const START_SD: f64 = 0.5;
/// Share clamp when deriving starting thresholds.
const SHARE_FLOOR: f64 = 1e-4;
const MIN_THRESHOLD_GAP: f64 = 1e-2;
/// Coordinates larger than this are probed for divergence after convergence.
const PROBE_FROM: f64 = 10.0;
const PROBE_TO: f64 = 60.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Analytic gradient, checked against finite differences at the start.
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Number of starts; start 0 is the supplied or default initial point.
    pub starts: usize,
    pub seed: u64,
    pub workers: usize,
    pub gradient: GradientMode,
    pub compute_se: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            starts: 1,
            seed: 0,
            workers: 1,
            gradient: GradientMode::Analytic,
            compute_se: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullSource {
    Fitted,
    Supplied,
}

/// One reported parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub spec: ModelSpec,
    /// Whether `spec` is the constants-only counterpart of a user spec.
    pub null_model: bool,
    pub params: ParamSet,
    pub unconstrained: Vec<f64>,
    pub unconstrained_names: Vec<String>,
    /// Constrained parameters with delta-method standard errors.
    pub estimates: Vec<Estimate>,
    pub ll_convergence: f64,
    pub ll_init: f64,
    pub ll_null: Option<f64>,
    pub ll_null_source: Option<NullSource>,
    /// Standard errors aligned with `unconstrained`.
    pub se: Vec<Option<f64>>,
    pub t_stats: Vec<Option<f64>>,
    pub hessian: HessianStatus,
    pub k: usize,
    pub n: usize,
    pub stats: Option<FitStats>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub gradient: GradientMode,
    pub starts: usize,
    pub best_start: usize,
    pub sigma2: Option<f64>,
    pub mixture_variance: Option<f64>,
    /// Name of a coordinate that kept improving the fit beyond the
    /// divergence bound.
    pub diverging: Option<String>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn validated_spec(&self) -> Result<ValidatedSpec> {
        if self.null_model {
            Ok(ValidatedSpec::from_null_spec(self.spec.clone()))
        } else {
            validate_spec(&self.spec)
        }
    }

    /// Record a null log-likelihood and fill in the fit statistics.
    pub fn attach_null(&mut self, ll_null: f64, source: NullSource) -> Result<()> {
        crate::error::ensure_finite("ll_null", ll_null)?;
        self.stats = Some(fit_statistics(
            self.ll_convergence,
            ll_null,
            self.k,
            self.n,
        )?);
        self.ll_null = Some(ll_null);
        self.ll_null_source = Some(source);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Sum of per-observation log-probabilities of the observed categories.
pub fn log_likelihood(dataset: &Dataset, spec: &ModelSpec, params: &ParamSet) -> Result<f64> {
    let vs = validate_spec(spec)?;
    log_likelihood_validated(dataset, &vs, params, 1)
}

/// [`log_likelihood`] for a validated spec, summed over `workers` threads.
/// Rows are accumulated in fixed chunks, so the result does not depend on
/// the worker count.
pub fn log_likelihood_validated(
    dataset: &Dataset,
    spec: &ValidatedSpec,
    params: &ParamSet,
    workers: usize,
) -> Result<f64> {
    let raw = params.to_unconstrained(spec)?;
    let design = Design::new(dataset, spec)?;
    check_design(&design)?;
    let ev = Evaluator::new(&design, spec, workers);
    let ll = ev.value(&raw);
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(underflow(&ev, &raw))
    }
}

fn check_design(d: &Design) -> Result<()> {
    for (i, v) in d.x.iter().chain(&d.z).chain(&d.b).chain(&d.w).enumerate() {
        if !v.is_finite() {
            return Err(Error::NumericInput(format!(
                "non-finite covariate value {v} (design entry {i})"
            )));
        }
    }
    Ok(())
}

fn underflow(ev: &Evaluator, raw: &[f64]) -> Error {
    match ev.underflow_row(raw) {
        Some(row) => Error::Underflow { row: row + 1 },
        None => Error::NumericInput("log-likelihood is not finite".into()),
    }
}

/// Maximum-likelihood fit of `spec`. `init` defaults to zero slopes, unit
/// `σ²` and `r`, and thresholds matched to the observed shares; an `init`
/// with empty thresholds gets the share-based thresholds too.
pub fn fit(
    dataset: &Dataset,
    spec: &ModelSpec,
    init: Option<&ParamSet>,
    options: &FitOptions,
) -> Result<FitResult> {
    let vs = validate_spec(spec)?;
    fit_validated(dataset, &vs, init, options)
}

/// Fit the constants-and-thresholds-only counterpart of `spec`.
pub fn fit_null(dataset: &Dataset, spec: &ModelSpec, options: &FitOptions) -> Result<FitResult> {
    let vs = validate_spec(spec)?.null_model();
    fit_validated(dataset, &vs, None, options)
}

/// Fit `spec`, then attach either the supplied null log-likelihood or the
/// one from [`fit_null`], together with the fit statistics.
pub fn estimate(
    dataset: &Dataset,
    spec: &ModelSpec,
    init: Option<&ParamSet>,
    ll_null: Option<f64>,
    options: &FitOptions,
) -> Result<FitResult> {
    let mut fit = fit(dataset, spec, init, options)?;
    match ll_null {
        Some(v) => fit.attach_null(v, NullSource::Supplied)?,
        None => {
            let null_opts = FitOptions {
                starts: 1,
                compute_se: false,
                ..options.clone()
            };
            let null = fit_null(dataset, spec, &null_opts)?;
            if !null.converged {
                fit.warnings
                    .push("null model did not converge; rho-squared uses its last iterate".into());
            }
            fit.attach_null(null.ll_convergence, NullSource::Fitted)?;
        }
    }
    Ok(fit)
}

/// Starting cut points whose implied pmf at zero index, with unit `σ²`,
/// reproduces the observed category shares.
fn share_thresholds(spec: &ValidatedSpec, dataset: &Dataset) -> Vec<f64> {
    let shares = dataset.category_shares();
    let c = spec.top_code();
    // shares of the categories the ordered part allocates over
    let part: Vec<f64> = match spec.family() {
        Family::OevGamma => shares.clone(),
        Family::SplitOevGamma => {
            let pos: f64 = shares[1..].iter().sum();
            if pos > 0.0 {
                shares[1..].iter().map(|s| s / pos).collect()
            } else {
                vec![1.0 / c as f64; c]
            }
        }
        _ => return Vec::new(),
    };
    let mut out = Vec::with_capacity(part.len() - 1);
    let mut survival = 1.0;
    for share in &part[..part.len() - 1] {
        survival -= share;
        let s = survival.clamp(SHARE_FLOOR, 1.0 - SHARE_FLOOR);
        let mut d = ((1.0 - s) / s).ln();
        if let Some(&prev) = out.last() {
            d = d.max(prev + MIN_THRESHOLD_GAP);
        }
        out.push(d);
    }
    out
}

fn initial_point(
    spec: &ValidatedSpec,
    dataset: &Dataset,
    init: Option<&ParamSet>,
) -> Result<Vec<f64>> {
    let mut params = init.cloned().unwrap_or_else(|| ParamSet::zeros(spec));
    if params.thresholds.is_empty() && !spec.layout().thresholds.is_empty() {
        params.thresholds = share_thresholds(spec, dataset);
    }
    params
        .to_unconstrained(spec)
        .map_err(|e| Error::Init(format!("initial values rejected: {e}")))
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn gradients_agree(analytic: &[f64], fd: &[f64]) -> bool {
    let scale = inf_norm(fd).max(1.0);
    analytic
        .iter()
        .zip(fd)
        .all(|(a, f)| (a - f).abs() <= SELF_CHECK_TOLERANCE * scale)
}

pub(crate) fn fit_validated(
    dataset: &Dataset,
    spec: &ValidatedSpec,
    init: Option<&ParamSet>,
    options: &FitOptions,
) -> Result<FitResult> {
    let k = spec.k();
    let n = dataset.n();
    if n < k {
        return Err(Error::Dimension(format!(
            "{n} observations cannot identify {k} parameters"
        )));
    }
    let design = Design::new(dataset, spec)?;
    check_design(&design)?;
    let ev = Evaluator::new(&design, spec, options.workers.max(1));
    let x0 = initial_point(spec, dataset, init)?;
    let ll_init = ev.value(&x0);
    if !ll_init.is_finite() {
        return Err(Error::Init(format!(
            "log-likelihood is not finite at the initial point: {}",
            underflow(&ev, &x0)
        )));
    }

    let mut warnings = Vec::new();
    let value = |x: &[f64]| ev.value(x);
    let fd_grad = |x: &[f64], g: &mut [f64]| {
        let mut v = |y: &[f64]| ev.value(y);
        fd_gradient(&mut v, x, g);
        ev.value(x)
    };
    let analytic_grad = |x: &[f64], g: &mut [f64]| ev.value_grad(x, g);

    let mut mode = options.gradient;
    if mode == GradientMode::Analytic && k > 0 {
        let mut ga = vec![0.0; k];
        let mut gf = vec![0.0; k];
        analytic_grad(&x0, &mut ga);
        fd_grad(&x0, &mut gf);
        if !gradients_agree(&ga, &gf) {
            warnings.push(
                "analytic gradient failed the finite-difference self-check; using finite differences"
                    .into(),
            );
            mode = GradientMode::FiniteDifference;
        }
    }

    let starts = options.starts.max(1);
    let mut best: Option<(usize, optim::Outcome)> = None;
    for s in 0..starts {
        let mut x = x0.clone();
        if s > 0 {
            let mut stream = RowStream::new(options.seed, s as u64, tag::MULTISTART);
            for v in &mut x {
                *v += START_SD * stream.normal();
            }
            if !ev.value(&x).is_finite() {
                warnings.push(format!("start {s} skipped: log-likelihood not finite"));
                continue;
            }
        }
        let out = match mode {
            GradientMode::Analytic => maximize(value, analytic_grad, &x, options.max_iter),
            GradientMode::FiniteDifference => maximize(value, fd_grad, &x, options.max_iter),
        };
        // strict improvement keeps the lowest index on ties
        if best.as_ref().is_none_or(|(_, b)| out.ll > b.ll) {
            best = Some((s, out));
        }
    }
    let (best_start, out) = best.expect("start 0 always runs");

    let names = spec.unconstrained_names();
    let mut diverging = out.diverging;
    if diverging.is_none() {
        diverging = probe_divergence(&value, &out.x, out.ll);
    }
    let diverging = diverging.map(|i| names[i].clone());
    if let Some(name) = &diverging {
        warnings.push(format!(
            "parameter `{name}` is diverging: its magnitude exceeds {DIVERGENCE_BOUND} with the log-likelihood still improving"
        ));
    }
    if out.stalled {
        warnings.push(
            "line search made no progress at machine precision; the last iterate is reported"
                .into(),
        );
    }
    if !out.converged {
        warnings.push(format!(
            "iteration limit of {} reached before convergence",
            options.max_iter
        ));
    }

    let se = if options.compute_se {
        let hess = match mode {
            GradientMode::Analytic => {
                let mut g = analytic_grad;
                hessian::hessian_from_gradient(&mut g, &out.x)
            }
            GradientMode::FiniteDifference => {
                let mut v = value;
                hessian::hessian_from_value(&mut v, &out.x)
            }
        };
        let jac = constrained_jacobian(spec.layout(), &out.x);
        hessian::standard_errors_from_hessian(&hess, &out.x, &jac)
    } else {
        StandardErrors::unavailable(k, HessianStatus::NotComputed)
    };
    match se.status {
        HessianStatus::NotNegativeDefinite { eigenvalue } => warnings.push(format!(
            "Hessian is not negative definite (largest eigenvalue {eigenvalue:e}); standard errors unavailable"
        )),
        HessianStatus::NonFinite => {
            warnings.push("Hessian has non-finite entries; standard errors unavailable".into())
        }
        _ => {}
    }

    let params = ParamSet::decode(spec.layout(), &out.x);
    let estimates = spec
        .constrained_names()
        .into_iter()
        .zip(constrained_values(spec.layout(), &out.x))
        .zip(&se.se_constrained)
        .map(|((name, value), se)| Estimate {
            name,
            value,
            se: *se,
        })
        .collect();

    Ok(FitResult {
        family: spec.family(),
        spec: spec.spec().clone(),
        null_model: spec.is_null(),
        sigma2: spec.layout().log_sigma2.map(|_| params.sigma2()),
        mixture_variance: params.mixture_variance(),
        params,
        unconstrained: out.x.clone(),
        unconstrained_names: names,
        estimates,
        ll_convergence: out.ll,
        ll_init,
        ll_null: None,
        ll_null_source: None,
        se: se.se,
        t_stats: se.t_stats,
        hessian: se.status,
        k,
        n,
        stats: None,
        converged: out.converged,
        iterations: out.iterations,
        gradient_norm: inf_norm(&out.grad),
        gradient: mode,
        starts,
        best_start,
        diverging,
        warnings,
    })
}

/// A large coordinate is diverging if pushing it further out still raises
/// the log-likelihood.
fn probe_divergence<V: Fn(&[f64]) -> f64>(value: &V, x: &[f64], ll: f64) -> Option<usize> {
    let mut trial = x.to_vec();
    for i in 0..x.len() {
        if x[i].abs() <= PROBE_FROM {
            continue;
        }
        trial[i] = PROBE_TO.copysign(x[i]);
        let v = value(&trial);
        trial[i] = x[i];
        if v.is_finite() && v > ll + 1e-12 * ll.abs().max(1.0) {
            return Some(i);
        }
    }
    None
}
