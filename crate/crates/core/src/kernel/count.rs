//! Count-variable choice kernels: negative binomial and Poisson systematic
//! utilities combined in an ordered GEV model whose nests are the adjacent
//! pairs `{y-1, y}`.
//!
//! In nest form, with `u_y = Ṽ_y / ρ` and nest `r` holding alternatives
//! `{r-1, r}` (members outside `0..=C` are absent):
//!
//! ```text
//! L_r      = ln Σ_{m∈r} e^{u_m}
//! Pr(r)    = e^{ρ L_r} / Σ_s e^{ρ L_s}
//! Pr(y|r)  = e^{u_y - L_r}
//! Pr(y)    = Pr(y|y)·Pr(y) + Pr(y|y+1)·Pr(y+1)     (nests y and y+1)
//! ```
//!
//! which is the adjacent-pair OGEV probability. At `ρ = 1` it reduces to a
//! softmax over `Ṽ`.

use crate::error::{ensure_finite, Error, Result};
use crate::math::{ln_factorial, log_add_exp, log_logistic, log_sum_exp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountFamily {
    NegativeBinomial,
    Poisson,
}

#[derive(Debug, Clone, Copy)]
pub struct CountUtilityInput<'a> {
    /// Expected frequency `λ = exp(β'x)`.
    pub lambda: f64,
    /// Dispersion; read by the negative binomial family only.
    pub r: f64,
    /// Count-specific utilities `η_0..η_C`.
    pub eta: &'a [f64],
    /// Allocation parameter in `(0, 1]`.
    pub rho: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

/// `ln[Γ(r+y)/(Γ(y+1)Γ(r)) · (λ/(r+λ))^y]`.
pub fn nb_systematic_utility(y: usize, lambda: f64, r: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    check_positive("r", r)?;
    Ok(nb_utility(y, lambda.ln(), r))
}

/// `y ln λ - ln y!`.
pub fn poisson_systematic_utility(y: usize, lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    Ok(poisson_utility(y, lambda.ln()))
}

/// NB utility from `ln λ`. `Γ(r+y)/Γ(r)` is expanded as `Π_{j<y}(r+j)` and
/// paired with the `(r+λ)^{-y}` factor so that huge `r` loses no precision.
#[inline]
pub(crate) fn nb_utility(y: usize, ln_lambda: f64, r: f64) -> f64 {
    let lambda = ln_lambda.exp();
    let rl = r + lambda;
    let mut acc = y as f64 * ln_lambda - ln_factorial(y);
    for j in 0..y {
        acc += ((j as f64 - lambda) / rl).ln_1p();
    }
    acc
}

#[inline]
pub(crate) fn poisson_utility(y: usize, ln_lambda: f64) -> f64 {
    y as f64 * ln_lambda - ln_factorial(y)
}

/// `∂V_y/∂ln λ`: `y·r/(r+λ)` for NB, `y` for Poisson.
#[inline]
pub(crate) fn d_utility_d_ln_lambda(family: CountFamily, y: usize, lambda: f64, r: f64) -> f64 {
    match family {
        CountFamily::Poisson => y as f64,
        CountFamily::NegativeBinomial => y as f64 * r / (r + lambda),
    }
}

/// `∂V_y/∂ln r` for the NB utility.
#[inline]
pub(crate) fn nb_d_utility_d_ln_r(y: usize, lambda: f64, r: f64) -> f64 {
    // Σ_{j<y} r/(r+j) - y r/(r+λ) = Σ_{j<y} r(λ-j)/((r+j)(r+λ))
    let rl = r + lambda;
    (0..y)
        .map(|j| {
            let j = j as f64;
            r * (lambda - j) / ((r + j) * rl)
        })
        .sum()
}

/// Reusable evaluation of the OGEV probabilities and the nest quantities
/// needed for derivatives.
#[derive(Debug, Clone, Default)]
pub(crate) struct Ogev {
    rho: f64,
    /// Utilities shifted by their maximum.
    vt: Vec<f64>,
    /// `ln Pr(r)` for nests `0..=C+1`.
    log_nest: Vec<f64>,
    /// `ln Pr(r-1 | r)` and `ln Pr(r | r)`; `-inf` for absent members.
    log_cond: Vec<[f64; 2]>,
    /// Within-nest entropies.
    entropy: Vec<f64>,
    /// `Ṽ_r - Ṽ_{r-1}` for nests with both members, 0 otherwise.
    gap: Vec<f64>,
    log_pmf: Vec<f64>,
}

impl Ogev {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluate at `utilities` and `rho`; no argument checks.
    pub fn evaluate(&mut self, utilities: &[f64], rho: f64) {
        let m = utilities.len();
        let nests = m + 1;
        self.rho = rho;
        let vmax = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.vt.clear();
        self.vt.extend(utilities.iter().map(|v| v - vmax));
        self.log_nest.clear();
        self.log_cond.clear();
        self.entropy.clear();
        self.gap.clear();
        let mut scaled = Vec::with_capacity(nests);
        for r in 0..nests {
            let u_lo = if r >= 1 {
                self.vt[r - 1] / rho
            } else {
                f64::NEG_INFINITY
            };
            let u_hi = if r < m {
                self.vt[r] / rho
            } else {
                f64::NEG_INFINITY
            };
            let (c_lo, c_hi, gap) = if r >= 1 && r < m {
                let gap = utilities[r] - utilities[r - 1];
                (log_logistic(-gap / rho), log_logistic(gap / rho), gap)
            } else if r < m {
                (f64::NEG_INFINITY, 0.0, 0.0)
            } else {
                (0.0, f64::NEG_INFINITY, 0.0)
            };
            self.log_cond.push([c_lo, c_hi]);
            let h: f64 = [c_lo, c_hi]
                .iter()
                .filter(|c| c.is_finite())
                .map(|&c| -c.exp() * c)
                .sum();
            self.entropy.push(h);
            self.gap.push(gap);
            scaled.push(rho * log_add_exp(u_lo, u_hi));
        }
        let log_denom = log_sum_exp(&scaled);
        self.log_nest.extend(scaled.iter().map(|s| s - log_denom));
        self.log_pmf.clear();
        for y in 0..m {
            // alternative y is the upper member of nest y and the lower member of nest y+1
            let a = self.log_nest[y] + self.log_cond[y][1];
            let b = self.log_nest[y + 1] + self.log_cond[y + 1][0];
            self.log_pmf.push(log_add_exp(a, b));
        }
    }

    pub fn log_pmf(&self) -> &[f64] {
        &self.log_pmf
    }

    pub fn pmf(&self) -> Vec<f64> {
        self.log_pmf.iter().map(|l| l.exp()).collect()
    }

    fn len(&self) -> usize {
        self.log_pmf.len()
    }

    /// Conditional probability of alternative `k` in nest `r` (0 if absent).
    #[inline]
    fn cond(&self, r: usize, k: usize) -> f64 {
        if k + 1 == r {
            self.log_cond[r][0].exp()
        } else if k == r {
            self.log_cond[r][1].exp()
        } else {
            0.0
        }
    }

    /// Weight of nest `r` in `Pr(y)`: `Pr(r)·Pr(y|r)`.
    #[inline]
    fn joint(&self, r: usize, y: usize) -> f64 {
        let c = if y + 1 == r {
            self.log_cond[r][0]
        } else {
            self.log_cond[r][1]
        };
        (self.log_nest[r] + c).exp()
    }

    /// Mean utility of nest `r` less `Ṽ_y`, for a member `y`.
    #[inline]
    fn shift(&self, r: usize, y: usize) -> f64 {
        if y == r {
            -self.log_cond[r][0].exp() * self.gap[r]
        } else {
            self.log_cond[r][1].exp() * self.gap[r]
        }
    }

    /// `∂Pr(y)/∂Ṽ_k` as a row-major `(C+1) × (C+1)` matrix.
    pub fn jacobian(&self) -> Vec<f64> {
        let m = self.len();
        let inv_rho = 1.0 / self.rho;
        let pmf = self.pmf();
        let mut jac = vec![0.0; m * m];
        for y in 0..m {
            for r in [y, y + 1] {
                let w = self.joint(r, y);
                for k in 0..m {
                    let ck = self.cond(r, k);
                    let own = if k == y { 1.0 } else { 0.0 };
                    jac[y * m + k] += w * ((ck - pmf[k]) + inv_rho * (own - ck));
                }
            }
        }
        jac
    }

    /// `∂Pr(y)/∂ρ` holding `Ṽ` fixed.
    pub fn d_rho(&self) -> Vec<f64> {
        let m = self.len();
        let rho2 = self.rho * self.rho;
        let mean_h: f64 = self
            .log_nest
            .iter()
            .zip(&self.entropy)
            .map(|(l, h)| l.exp() * h)
            .sum();
        (0..m)
            .map(|y| {
                [y, y + 1]
                    .into_iter()
                    .map(|r| {
                        self.joint(r, y) * (self.entropy[r] - mean_h + self.shift(r, y) / rho2)
                    })
                    .sum()
            })
            .collect()
    }

    /// `∂ln Pr(f)/∂Ṽ_k` into `out` and `∂ln Pr(f)/∂ρ` as the return value.
    pub fn log_prob_grad(&self, f: usize, out: &mut [f64]) -> f64 {
        let m = self.len();
        let inv_rho = 1.0 / self.rho;
        let rho2 = self.rho * self.rho;
        let lp = self.log_pmf[f];
        for o in out.iter_mut() {
            *o = 0.0;
        }
        let mut d_rho = 0.0;
        let mut mean_h = 0.0;
        for (l, h) in self.log_nest.iter().zip(&self.entropy) {
            mean_h += l.exp() * h;
        }
        for r in [f, f + 1] {
            let w = self.joint(r, f) / lp.exp();
            if w == 0.0 || !w.is_finite() {
                continue;
            }
            d_rho += w * (self.entropy[r] - mean_h + self.shift(r, f) / rho2);
            // members of nest r get the conditional terms; every k gets -Pr(k)
            for k in [r.wrapping_sub(1), r] {
                if k < m {
                    let ck = self.cond(r, k);
                    out[k] += w * ck * (1.0 - inv_rho);
                }
            }
            out[f] += w * inv_rho;
        }
        for (k, o) in out.iter_mut().enumerate() {
            *o -= self.log_pmf[k].exp();
        }
        d_rho
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            row: None,
            msg: format!("rho must lie in (0, 1], got {rho}"),
        })
    }
}

/// Adjacent-pair OGEV probabilities for utilities `Ṽ_0..Ṽ_C`.
pub fn ogev_pmf(utilities: &[f64], rho: f64) -> Result<Vec<f64>> {
    check_rho(rho)?;
    if utilities.is_empty() {
        return Err(Error::Dimension(
            "at least one alternative is required".into(),
        ));
    }
    for &u in utilities {
        ensure_finite("utility", u)?;
    }
    let mut ogev = Ogev::new();
    ogev.evaluate(utilities, rho);
    Ok(ogev.pmf())
}

/// Systematic utilities `V_y + η_y` for `y = 0..=top_code`.
pub fn count_utilities(
    input: &CountUtilityInput<'_>,
    family: CountFamily,
    top_code: usize,
) -> Result<Vec<f64>> {
    check_positive("lambda", input.lambda)?;
    if family == CountFamily::NegativeBinomial {
        check_positive("r", input.r)?;
    }
    check_rho(input.rho)?;
    if input.eta.len() != top_code + 1 {
        return Err(Error::Dimension(format!(
            "eta must have {} entries, got {}",
            top_code + 1,
            input.eta.len()
        )));
    }
    for &e in input.eta {
        ensure_finite("eta", e)?;
    }
    let ln_lambda = input.lambda.ln();
    Ok((0..=top_code)
        .map(|y| {
            let v = match family {
                CountFamily::NegativeBinomial => nb_utility(y, ln_lambda, input.r),
                CountFamily::Poisson => poisson_utility(y, ln_lambda),
            };
            v + input.eta[y]
        })
        .collect())
}

/// Count-choice pmf over the top-coded support `0..=top_code`.
pub fn count_choice_pmf(
    input: &CountUtilityInput<'_>,
    family: CountFamily,
    top_code: usize,
) -> Result<Vec<f64>> {
    let u = count_utilities(input, family, top_code)?;
    ogev_pmf(&u, input.rho)
}
