//! Binding of specs, parameters and observations to the kernels.
//!
//! [`Design`] lays a prepared dataset out as dense row-major blocks (`x`, `z`,
//! `b`, `w`) so that log-likelihood evaluation never touches the per-row
//! maps. [`Evaluator`] sums per-row log-probabilities over fixed-size chunks
//! and reduces the chunk partials in chunk order, so the result does not
//! depend on how many workers evaluated the chunks.

use rayon::prelude::*;

use crate::data::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::kernel::count::{
    d_utility_d_ln_lambda, nb_d_utility_d_ln_r, nb_utility, poisson_utility, CountFamily, Ogev,
};
use crate::kernel::ordered::{category_log_prob_grad, log_pmf_into};
use crate::math::{log_logistic, logistic};
use crate::params::{thresholds_from_raw, ParamSet};
use crate::spec::{CovariateBlock, Family, Layout, ValidatedSpec};

const CHUNK: usize = 512;

/// Per-row covariate vectors in parameter order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RowValues {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub b: Vec<f64>,
    pub w: Vec<f64>,
}

fn block_values(
    block: &Option<CovariateBlock>,
    obs: &Observation,
    out: &mut Vec<f64>,
) -> Result<()> {
    if let Some(b) = block {
        if b.intercept {
            out.push(1.0);
        }
        for c in &b.covariates {
            out.push(lookup(obs, &c.column)?);
        }
    }
    Ok(())
}

fn lookup(obs: &Observation, column: &str) -> Result<f64> {
    obs.get(column)
        .ok_or_else(|| Error::Schema(format!("observation lacks column `{column}`")))
}

impl RowValues {
    pub fn from_observation(spec: &ValidatedSpec, obs: &Observation) -> Result<Self> {
        let s = spec.spec();
        let mut row = RowValues::default();
        if s.index_intercept {
            row.x.push(1.0);
        }
        for c in &s.index_covariates {
            row.x.push(lookup(obs, &c.column)?);
        }
        block_values(&s.split_covariates, obs, &mut row.z)?;
        for t in &s.count_specific_terms {
            row.b.push(match &t.column {
                Some(c) => lookup(obs, c)?,
                None => 1.0,
            });
        }
        block_values(&s.rho_covariates, obs, &mut row.w)?;
        Ok(row)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub family: Family,
    pub top_code: usize,
    pub n: usize,
    pub freq: Vec<usize>,
    pub p: usize,
    pub x: Vec<f64>,
    pub q: usize,
    pub z: Vec<f64>,
    pub m: usize,
    pub b: Vec<f64>,
    pub levels: Vec<usize>,
    pub t: usize,
    pub w: Vec<f64>,
}

impl Design {
    pub fn new(dataset: &Dataset, spec: &ValidatedSpec) -> Result<Self> {
        if dataset.top_code() != spec.top_code() {
            return Err(Error::Dimension(format!(
                "dataset top code {} differs from spec top code {}",
                dataset.top_code(),
                spec.top_code()
            )));
        }
        let l = spec.layout();
        let n = dataset.n();
        let mut d = Design {
            family: spec.family(),
            top_code: spec.top_code(),
            n,
            freq: Vec::with_capacity(n),
            p: l.beta.len(),
            x: Vec::with_capacity(n * l.beta.len()),
            q: l.gamma.len(),
            z: Vec::with_capacity(n * l.gamma.len()),
            m: l.omega.len(),
            b: Vec::with_capacity(n * l.omega.len()),
            levels: spec
                .spec()
                .count_specific_terms
                .iter()
                .map(|t| t.level)
                .collect(),
            t: l.theta.len(),
            w: Vec::with_capacity(n * l.theta.len()),
        };
        for obs in dataset.observations() {
            let row = RowValues::from_observation(spec, obs)?;
            d.freq.push(obs.freq);
            d.x.extend(row.x);
            d.z.extend(row.z);
            d.b.extend(row.b);
            d.w.extend(row.w);
        }
        Ok(d)
    }

    #[inline]
    fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }
    #[inline]
    fn z(&self, i: usize) -> &[f64] {
        &self.z[i * self.q..(i + 1) * self.q]
    }
    #[inline]
    fn b(&self, i: usize) -> &[f64] {
        &self.b[i * self.m..(i + 1) * self.m]
    }
    #[inline]
    fn w(&self, i: usize) -> &[f64] {
        &self.w[i * self.t..(i + 1) * self.t]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Parameters unpacked from the unconstrained vector for evaluation.
#[derive(Debug, Clone)]
pub(crate) struct Kernel<'a> {
    layout: &'a Layout,
    pub family: Family,
    pub top_code: usize,
    pub beta: &'a [f64],
    pub thresholds: Vec<f64>,
    pub alpha: f64,
    pub r: f64,
    pub gamma: &'a [f64],
    pub omega: &'a [f64],
    pub theta: &'a [f64],
}

impl<'a> Kernel<'a> {
    pub fn new(spec: &'a ValidatedSpec, raw: &'a [f64]) -> Self {
        let l = spec.layout();
        Kernel {
            layout: l,
            family: spec.family(),
            top_code: spec.top_code(),
            beta: &raw[l.beta.clone()],
            thresholds: thresholds_from_raw(&raw[l.thresholds.clone()]),
            alpha: l.log_sigma2.map_or(1.0, |i| raw[i].exp()),
            r: l.log_r.map_or(f64::INFINITY, |i| raw[i].exp()),
            gamma: &raw[l.gamma.clone()],
            omega: &raw[l.omega.clone()],
            theta: &raw[l.theta.clone()],
        }
    }

    fn count_family(&self) -> CountFamily {
        match self.family {
            Family::NbOgev => CountFamily::NegativeBinomial,
            _ => CountFamily::Poisson,
        }
    }

    /// `ρ` for a row; 1 (plain logit allocation) when the spec has no `θ`.
    #[inline]
    pub fn rho(&self, w: &[f64]) -> f64 {
        if self.theta.is_empty() {
            1.0
        } else {
            logistic(dot(self.theta, w))
        }
    }

    /// `Ṽ_y = V_y + η_y` for one row.
    pub fn count_utilities(&self, x: &[f64], b: &[f64], levels: &[usize], out: &mut Vec<f64>) {
        let ln_lambda = dot(self.beta, x);
        out.clear();
        for y in 0..=self.top_code {
            out.push(match self.family {
                Family::NbOgev => nb_utility(y, ln_lambda, self.r),
                _ => poisson_utility(y, ln_lambda),
            });
        }
        for ((om, bv), lv) in self.omega.iter().zip(b).zip(levels) {
            out[*lv] += om * bv;
        }
    }

    /// Log-pmf over `0..=C` for one row.
    pub fn row_log_pmf(
        &self,
        x: &[f64],
        z: &[f64],
        b: &[f64],
        w: &[f64],
        levels: &[usize],
        out: &mut [f64],
    ) {
        let c = self.top_code;
        match self.family {
            Family::OevGamma => log_pmf_into(dot(self.beta, x), self.alpha, &self.thresholds, out),
            Family::SplitOevGamma => {
                let s = dot(self.gamma, z);
                log_pmf_into(
                    dot(self.beta, x),
                    self.alpha,
                    &self.thresholds,
                    &mut out[1..],
                );
                let lo = log_logistic(-s);
                for v in &mut out[1..=c] {
                    *v += lo;
                }
                out[0] = log_logistic(s);
            }
            Family::NbOgev | Family::PoissonOgev => {
                let mut u = Vec::with_capacity(c + 1);
                self.count_utilities(x, b, levels, &mut u);
                let mut ogev = Ogev::new();
                ogev.evaluate(&u, self.rho(w));
                out.copy_from_slice(ogev.log_pmf());
            }
        }
    }
}

#[derive(Default)]
struct Scratch {
    utilities: Vec<f64>,
    d_utility: Vec<f64>,
    ogev: Ogev,
}

/// `ln Pr(f_i)` for row `i`, accumulating its gradient into `grad`. The
/// threshold block of `grad` receives derivatives with respect to the cut
/// points themselves; [`chain_thresholds`] maps them to the raw vector.
fn row_log_prob(
    d: &Design,
    k: &Kernel<'_>,
    i: usize,
    grad: Option<&mut [f64]>,
    scratch: &mut Scratch,
) -> f64 {
    let l = k.layout;
    let f = d.freq[i];
    let x = d.x(i);
    match d.family {
        Family::OevGamma => {
            let v = dot(k.beta, x);
            let g = category_log_prob_grad(f, v, k.alpha, &k.thresholds);
            if let Some(grad) = grad {
                for (gb, xv) in grad[l.beta.clone()].iter_mut().zip(x) {
                    *gb += g.d_v * xv;
                }
                for (idx, dd) in g.d_upper.into_iter().chain(g.d_lower) {
                    grad[l.thresholds.start + idx] += dd;
                }
                if let Some(ia) = l.log_sigma2 {
                    grad[ia] += g.d_log_alpha;
                }
            }
            g.log_prob
        }
        Family::SplitOevGamma => {
            let z = d.z(i);
            let s = dot(k.gamma, z);
            if f == 0 {
                if let Some(grad) = grad {
                    let ds = logistic(-s);
                    for (gg, zv) in grad[l.gamma.clone()].iter_mut().zip(z) {
                        *gg += ds * zv;
                    }
                }
                return log_logistic(s);
            }
            let v = dot(k.beta, x);
            let g = category_log_prob_grad(f - 1, v, k.alpha, &k.thresholds);
            if let Some(grad) = grad {
                let ds = -logistic(s);
                for (gg, zv) in grad[l.gamma.clone()].iter_mut().zip(z) {
                    *gg += ds * zv;
                }
                for (gb, xv) in grad[l.beta.clone()].iter_mut().zip(x) {
                    *gb += g.d_v * xv;
                }
                for (idx, dd) in g.d_upper.into_iter().chain(g.d_lower) {
                    grad[l.thresholds.start + idx] += dd;
                }
                if let Some(ia) = l.log_sigma2 {
                    grad[ia] += g.d_log_alpha;
                }
            }
            log_logistic(-s) + g.log_prob
        }
        Family::NbOgev | Family::PoissonOgev => {
            let b = d.b(i);
            let w = d.w(i);
            k.count_utilities(x, b, &d.levels, &mut scratch.utilities);
            let rho = k.rho(w);
            scratch.ogev.evaluate(&scratch.utilities, rho);
            let lp = scratch.ogev.log_pmf()[f];
            if let Some(grad) = grad {
                let c = d.top_code;
                scratch.d_utility.resize(c + 1, 0.0);
                let d_rho = scratch.ogev.log_prob_grad(f, &mut scratch.d_utility);
                let gu = &scratch.d_utility;
                let lambda = dot(k.beta, x).exp();
                let fam = k.count_family();
                let d_ln_lambda: f64 = (0..=c)
                    .map(|y| gu[y] * d_utility_d_ln_lambda(fam, y, lambda, k.r))
                    .sum();
                for (gb, xv) in grad[l.beta.clone()].iter_mut().zip(x) {
                    *gb += d_ln_lambda * xv;
                }
                if let Some(ir) = l.log_r {
                    grad[ir] += (0..=c)
                        .map(|y| gu[y] * nb_d_utility_d_ln_r(y, lambda, k.r))
                        .sum::<f64>();
                }
                for ((go, bv), lv) in grad[l.omega.clone()].iter_mut().zip(b).zip(&d.levels) {
                    *go += gu[*lv] * bv;
                }
                if !k.theta.is_empty() {
                    let dr = d_rho * rho * (1.0 - rho);
                    for (gt, wv) in grad[l.theta.clone()].iter_mut().zip(w) {
                        *gt += dr * wv;
                    }
                }
            }
            lp
        }
    }
}

/// Map cut-point derivatives in `grad`'s threshold block to derivatives with
/// respect to the first cut point and the log-increments.
fn chain_thresholds(l: &Layout, raw: &[f64], grad: &mut [f64]) {
    let tr = l.thresholds.clone();
    let mut suffix = 0.0;
    for idx in tr.clone().rev() {
        suffix += grad[idx];
        grad[idx] = if idx == tr.start {
            suffix
        } else {
            suffix * raw[idx].exp()
        };
    }
}

/// Dataset log-likelihood evaluator over the unconstrained vector.
pub(crate) struct Evaluator<'a> {
    design: &'a Design,
    spec: &'a ValidatedSpec,
    pool: Option<rayon::ThreadPool>,
}

struct Partial {
    ll: f64,
    grad: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(design: &'a Design, spec: &'a ValidatedSpec, workers: usize) -> Self {
        let pool = if workers > 1 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .ok()
        } else {
            None
        };
        Evaluator { design, spec, pool }
    }

    fn chunk(&self, raw: &[f64], start: usize, with_grad: bool) -> Partial {
        let kern = Kernel::new(self.spec, raw);
        let end = (start + CHUNK).min(self.design.n);
        let mut scratch = Scratch::default();
        let mut grad = if with_grad {
            vec![0.0; raw.len()]
        } else {
            Vec::new()
        };
        let mut ll = 0.0;
        for i in start..end {
            let g = if with_grad {
                Some(grad.as_mut_slice())
            } else {
                None
            };
            ll += row_log_prob(self.design, &kern, i, g, &mut scratch);
        }
        Partial { ll, grad }
    }

    fn run(&self, raw: &[f64], with_grad: bool) -> Vec<Partial> {
        let starts: Vec<usize> = (0..self.design.n).step_by(CHUNK).collect();
        match &self.pool {
            Some(pool) => pool.install(|| {
                starts
                    .par_iter()
                    .map(|&s| self.chunk(raw, s, with_grad))
                    .collect()
            }),
            None => starts
                .iter()
                .map(|&s| self.chunk(raw, s, with_grad))
                .collect(),
        }
    }

    /// Log-likelihood; `-inf` if any row has zero probability.
    pub fn value(&self, raw: &[f64]) -> f64 {
        let parts = self.run(raw, false);
        let ll = crate::math::compensated_sum(parts.iter().map(|p| p.ll));
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    /// Log-likelihood and its analytic gradient.
    pub fn value_grad(&self, raw: &[f64], grad: &mut [f64]) -> f64 {
        let parts = self.run(raw, true);
        grad.iter_mut().for_each(|g| *g = 0.0);
        for p in &parts {
            for (g, pg) in grad.iter_mut().zip(&p.grad) {
                *g += pg;
            }
        }
        chain_thresholds(self.spec.layout(), raw, grad);
        let ll = crate::math::compensated_sum(parts.iter().map(|p| p.ll));
        if ll.is_nan() {
            f64::NEG_INFINITY
        } else {
            ll
        }
    }

    /// First row whose observed category has zero probability.
    pub fn underflow_row(&self, raw: &[f64]) -> Option<usize> {
        let kern = Kernel::new(self.spec, raw);
        let mut scratch = Scratch::default();
        (0..self.design.n)
            .find(|&i| !row_log_prob(self.design, &kern, i, None, &mut scratch).is_finite())
    }
}

/// Category probabilities for one observation.
pub fn predict_pmf(spec: &ValidatedSpec, params: &ParamSet, obs: &Observation) -> Result<Vec<f64>> {
    Ok(predict_log_pmf(spec, params, obs)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// Log category probabilities for one observation.
pub fn predict_log_pmf(
    spec: &ValidatedSpec,
    params: &ParamSet,
    obs: &Observation,
) -> Result<Vec<f64>> {
    let raw = params.to_unconstrained(spec)?;
    let row = RowValues::from_observation(spec, obs)?;
    row_log_pmf_raw(spec, &raw, &row)
}

pub(crate) fn row_log_pmf_raw(
    spec: &ValidatedSpec,
    raw: &[f64],
    row: &RowValues,
) -> Result<Vec<f64>> {
    for v in row.x.iter().chain(&row.z).chain(&row.b).chain(&row.w) {
        crate::error::ensure_finite("covariate", *v)?;
    }
    let kern = Kernel::new(spec, raw);
    let levels: Vec<usize> = spec
        .spec()
        .count_specific_terms
        .iter()
        .map(|t| t.level)
        .collect();
    let mut out = vec![0.0; spec.top_code() + 1];
    kern.row_log_pmf(&row.x, &row.z, &row.b, &row.w, &levels, &mut out);
    Ok(out)
}
