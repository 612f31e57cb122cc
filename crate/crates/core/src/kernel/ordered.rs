//! Ordered extreme value kernels with Gamma heterogeneity.
//!
//! With index `v = β'x`, baseline `Δ_k = exp(δ_k)` and heterogeneity
//! parameter `α = σ²`, the survival function is
//!
//! ```text
//! S(k) = Pr(f ≥ k) = (1 + Δ_k e^{-v} / α)^{-α}
//! ```
//!
//! and category probabilities telescope: `Pr(k) = S(k) - S(k+1)` with
//! `S(0) = 1`, `S(C+1) = 0`. Everything is evaluated through
//! `ln S(k) = -α · softplus(δ_k - v - ln α)`, so neither large `Δ_k e^{-v}`
//! nor large `α` overflows. As `α → ∞` the survival tends to
//! `exp(-Δ_k e^{-v})`, the complementary log-log OEV model.

use crate::error::{ensure_finite, Error, Result};
use crate::math::{ln_one_minus_exp, log_logistic, logistic as logistic_unchecked, softplus};

#[derive(Debug, Clone, Copy)]
pub struct OrderedKernelInput<'a> {
    /// Linear index `β'x`.
    pub v: f64,
    /// Gamma heterogeneity parameter `σ²`.
    pub alpha: f64,
    /// Strictly increasing cut points `δ`.
    pub thresholds: &'a [f64],
}

impl<'a> OrderedKernelInput<'a> {
    pub fn new(v: f64, alpha: f64, thresholds: &'a [f64]) -> Self {
        Self {
            v,
            alpha,
            thresholds,
        }
    }

    fn validate(&self) -> Result<()> {
        ensure_finite("v", self.v)?;
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::NumericInput(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        for &d in self.thresholds {
            ensure_finite("threshold", d)?;
        }
        if self.thresholds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain {
                row: None,
                msg: "thresholds must be strictly increasing".into(),
            });
        }
        Ok(())
    }
}

/// `ln S` for one cut point.
#[inline]
pub(crate) fn log_survival(delta: f64, v: f64, alpha: f64) -> f64 {
    -alpha * softplus(delta - v - alpha.ln())
}

/// `S(k) = Pr(f > k-1)` for `k` in `1..=C`.
pub fn gamma_oev_survival(k: usize, input: &OrderedKernelInput<'_>) -> Result<f64> {
    input.validate()?;
    if k == 0 || k > input.thresholds.len() {
        return Err(Error::Dimension(format!(
            "survival index {k} outside 1..={}",
            input.thresholds.len()
        )));
    }
    Ok(log_survival(input.thresholds[k - 1], input.v, input.alpha).exp())
}

/// Log-probabilities of categories `0..=C` where `C = thresholds.len()`.
pub(crate) fn log_pmf_into(v: f64, alpha: f64, thresholds: &[f64], out: &mut [f64]) {
    let c = thresholds.len();
    debug_assert_eq!(out.len(), c + 1);
    let mut upper = 0.0; // ln S(0)
    for k in 0..=c {
        let lower = if k < c {
            log_survival(thresholds[k], v, alpha)
        } else {
            f64::NEG_INFINITY
        };
        out[k] = upper + ln_one_minus_exp(lower - upper);
        upper = lower;
    }
}

fn check_thresholds(input: &OrderedKernelInput<'_>, want: usize) -> Result<()> {
    if input.thresholds.len() != want {
        return Err(Error::Dimension(format!(
            "expected {want} thresholds, got {}",
            input.thresholds.len()
        )));
    }
    Ok(())
}

/// Log-pmf over `0..=top_code`; requires exactly `top_code` thresholds.
pub fn gamma_oev_log_pmf(input: &OrderedKernelInput<'_>, top_code: usize) -> Result<Vec<f64>> {
    check_thresholds(input, top_code)?;
    input.validate()?;
    let mut out = vec![0.0; top_code + 1];
    log_pmf_into(input.v, input.alpha, input.thresholds, &mut out);
    Ok(out)
}

/// Probabilities of categories `0..=top_code`.
pub fn gamma_oev_pmf(input: &OrderedKernelInput<'_>, top_code: usize) -> Result<Vec<f64>> {
    Ok(gamma_oev_log_pmf(input, top_code)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// Pure OEV pmf without heterogeneity: `S(k) = exp(-e^{δ_k - v})`.
pub fn oev_pmf(v: f64, thresholds: &[f64]) -> Result<Vec<f64>> {
    ensure_finite("v", v)?;
    let c = thresholds.len();
    let mut out = vec![0.0; c + 1];
    let mut upper = 0.0;
    for k in 0..=c {
        let lower = if k < c {
            -(thresholds[k] - v).exp()
        } else {
            f64::NEG_INFINITY
        };
        out[k] = (upper + ln_one_minus_exp(lower - upper)).exp();
        upper = lower;
    }
    Ok(out)
}

/// Logistic CDF `e^s / (1 + e^s)`.
pub fn logistic(s: f64) -> Result<f64> {
    ensure_finite("s", s)?;
    Ok(logistic_unchecked(s))
}

/// Hurdle pmf over `0..=top_code`.
///
/// `Pr(0) = F(s)`; for `k ≥ 1`, `Pr(k) = (1 - F(s)) · q(k)` where `q` is
/// the Gamma-OEV pmf over the positive categories driven by the
/// `top_code - 1` cut points `δ_2..δ_C`.
pub fn split_oev_pmf(s: f64, input: &OrderedKernelInput<'_>, top_code: usize) -> Result<Vec<f64>> {
    ensure_finite("s", s)?;
    if top_code < 1 {
        return Err(Error::Dimension("top_code must be at least 1".into()));
    }
    check_thresholds(input, top_code - 1)?;
    input.validate()?;
    let f = logistic_unchecked(s);
    let one_minus = logistic_unchecked(-s);
    let mut latent = vec![0.0; top_code];
    log_pmf_into(input.v, input.alpha, input.thresholds, &mut latent);
    let mut out = Vec::with_capacity(top_code + 1);
    out.push(f);
    out.extend(latent.iter().map(|lq| one_minus * lq.exp()));
    Ok(out)
}

/// Log-pmf companion of [`split_oev_pmf`].
pub fn split_oev_log_pmf(
    s: f64,
    input: &OrderedKernelInput<'_>,
    top_code: usize,
) -> Result<Vec<f64>> {
    ensure_finite("s", s)?;
    if top_code < 1 {
        return Err(Error::Dimension("top_code must be at least 1".into()));
    }
    check_thresholds(input, top_code - 1)?;
    input.validate()?;
    let mut out = vec![0.0; top_code + 1];
    log_pmf_into(input.v, input.alpha, input.thresholds, &mut out[1..]);
    let lo = log_logistic(-s);
    for x in &mut out[1..] {
        *x += lo;
    }
    out[0] = log_logistic(s);
    Ok(out)
}

/// `Δ_k - Δ_{k-1}` with `Δ_0 = 0`.
pub fn baseline_increments(thresholds: &[f64]) -> Vec<f64> {
    thresholds
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if i == 0 {
                d.exp()
            } else {
                d.exp() * -(thresholds[i - 1] - d).exp_m1()
            }
        })
        .collect()
}

/// `dPr(k)/dv` for `k = 0..=C`.
pub(crate) fn d_pmf_d_v(v: f64, alpha: f64, thresholds: &[f64]) -> Vec<f64> {
    let c = thresholds.len();
    // dS(k)/dv = S(k) · α · σ(a_k)
    let ds: Vec<f64> = thresholds
        .iter()
        .map(|&d| {
            let a = d - v - alpha.ln();
            log_survival(d, v, alpha).exp() * alpha * logistic_unchecked(a)
        })
        .collect();
    (0..=c)
        .map(|k| {
            let upper = if k == 0 { 0.0 } else { ds[k - 1] };
            let lower = if k < c { ds[k] } else { 0.0 };
            upper - lower
        })
        .collect()
}

/// Derivatives of `ln Pr(k)` for a single observed category.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct OrderedLogProbGrad {
    pub log_prob: f64,
    pub d_v: f64,
    pub d_log_alpha: f64,
    /// `(threshold index, derivative)` for the cut point bounding from below.
    pub d_upper: Option<(usize, f64)>,
    /// `(threshold index, derivative)` for the cut point bounding from above.
    pub d_lower: Option<(usize, f64)>,
}

/// `ln Pr(k)` and its gradient with respect to `v`, `ln α` and the two
/// adjacent cut points.
pub(crate) fn category_log_prob_grad(
    k: usize,
    v: f64,
    alpha: f64,
    thresholds: &[f64],
) -> OrderedLogProbGrad {
    let c = thresholds.len();
    let ln_alpha = alpha.ln();
    // per-cut-point pieces: ln S, and dlnS/dδ, dlnS/dv, dlnS/dlnα
    let piece = |d: f64| {
        let a = d - v - ln_alpha;
        let sp = softplus(a);
        let sig = logistic_unchecked(a);
        (-alpha * sp, -alpha * sig, alpha * sig, alpha * (sig - sp))
    };
    let up = (k > 0).then(|| piece(thresholds[k - 1]));
    let lo = (k < c).then(|| piece(thresholds[k]));
    let l_up = up.map_or(0.0, |p| p.0);
    let l_lo = lo.map_or(f64::NEG_INFINITY, |p| p.0);
    let diff = l_lo - l_up;
    let log_prob = l_up + ln_one_minus_exp(diff);
    // S(k)/Pr(k) and S(k+1)/Pr(k)
    let w_up = -1.0 / diff.exp_m1();
    let w_lo = w_up - 1.0;
    let mut g = OrderedLogProbGrad {
        log_prob,
        ..Default::default()
    };
    if let Some((_, dd, dv, da)) = up {
        g.d_v += w_up * dv;
        g.d_log_alpha += w_up * da;
        g.d_upper = Some((k - 1, w_up * dd));
    }
    if let Some((_, dd, dv, da)) = lo {
        g.d_v -= w_lo * dv;
        g.d_log_alpha -= w_lo * da;
        g.d_lower = Some((k, -w_lo * dd));
    }
    g
}
