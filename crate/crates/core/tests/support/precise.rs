//! Category probabilities for [`Case`] models in 256-bit floating point,
//! written directly from the model formulas and sharing no code with the
//! library. Used to take finite differences whose rounding error is far
//! below the step-size truncation error.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use freqchoice::Family;

use super::Case;

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

thread_local! {
    static CONSTS: RefCell<Consts> = RefCell::new(Consts::new().expect("constant cache"));
}

#[derive(Clone, Debug)]
pub struct P(BigFloat);

impl P {
    pub fn new(x: f64) -> Self {
        P(BigFloat::from_f64(x, PREC))
    }

    pub fn exp(&self) -> Self {
        CONSTS.with(|c| P(self.0.exp(PREC, RM, &mut c.borrow_mut())))
    }

    pub fn ln(&self) -> Self {
        CONSTS.with(|c| P(self.0.ln(PREC, RM, &mut c.borrow_mut())))
    }

    /// `self^e` for positive `self`.
    pub fn pow(&self, e: &P) -> Self {
        (e * &self.ln()).exp()
    }

    pub fn to_f64(&self) -> f64 {
        CONSTS.with(|c| {
            self.0
                .format(Radix::Dec, RM, &mut c.borrow_mut())
                .expect("formatted")
                .parse()
                .expect("decimal")
        })
    }
}

macro_rules! binop {
    ($tr:ident, $f:ident) => {
        impl $tr<&P> for &P {
            type Output = P;
            fn $f(self, o: &P) -> P {
                P(self.0.$f(&o.0, PREC, RM))
            }
        }
        impl $tr<P> for P {
            type Output = P;
            fn $f(self, o: P) -> P {
                P(self.0.$f(&o.0, PREC, RM))
            }
        }
        impl $tr<&P> for P {
            type Output = P;
            fn $f(self, o: &P) -> P {
                P(self.0.$f(&o.0, PREC, RM))
            }
        }
    };
}

binop!(Add, add);
binop!(Sub, sub);
binop!(Mul, mul);
binop!(Div, div);

impl Neg for P {
    type Output = P;
    fn neg(self) -> P {
        P(self.0.neg())
    }
}

fn c(x: f64) -> P {
    P::new(x)
}

fn logistic(s: &P) -> P {
    c(1.0) / (c(1.0) + (-s.clone()).exp())
}

/// `Pr(f ≥ k)` for each cut point: `(1 + e^{δ - v} / α)^{-α}`.
fn survival(v: &P, alpha: &P, thresholds: &[f64]) -> Vec<P> {
    thresholds
        .iter()
        .map(|&d| {
            let base = c(1.0) + (c(d) - v).exp() / alpha;
            base.pow(&-alpha.clone())
        })
        .collect()
}

fn telescope(s: &[P]) -> Vec<P> {
    let mut out = Vec::with_capacity(s.len() + 1);
    let mut prev = c(1.0);
    for sk in s {
        out.push(&prev - sk);
        prev = sk.clone();
    }
    out.push(prev);
    out
}

fn ogev(u: &[P], rho: &P) -> Vec<P> {
    let e: Vec<P> = u.iter().map(|x| (x / rho).exp()).collect();
    let m = e.len();
    let get = |i: isize| -> P {
        if i < 0 || i as usize >= m {
            c(0.0)
        } else {
            e[i as usize].clone()
        }
    };
    let rho_1 = rho - &c(1.0);
    let pair = |lo: isize, pw: &P| -> P {
        let s = get(lo) + get(lo + 1);
        if s.0.is_zero() {
            c(0.0)
        } else {
            s.pow(pw)
        }
    };
    let mut denom = c(0.0);
    for r in -1..m as isize {
        denom = denom + pair(r, rho);
    }
    (0..m as isize)
        .map(|y| get(y) * (pair(y - 1, &rho_1) + pair(y, &rho_1)) / &denom)
        .collect()
}

fn ln_factorial(y: usize) -> P {
    (1..=y).fold(c(0.0), |acc, j| acc + c(j as f64).ln())
}

/// Category probabilities of `case` with covariates `a`, `b`, `c`.
pub fn pmf(case: &Case, a: &P, b: &P, cv: &P) -> Vec<P> {
    pmf_with_rho_c(case, a, b, cv, cv)
}

/// As [`pmf`], with a separate value of `c` in the allocation logit.
pub fn pmf_with_rho_c(case: &Case, a: &P, b: &P, cv: &P, c_rho: &P) -> Vec<P> {
    let p = &case.params;
    let top = case.spec.top_code();
    match case.spec.family() {
        Family::OevGamma => {
            let v = c(p.beta[0]) * a + c(p.beta[1]) * b;
            let alpha = c(p.log_sigma2.unwrap()).exp();
            telescope(&survival(&v, &alpha, &p.thresholds))
        }
        Family::SplitOevGamma => {
            let v = c(p.beta[0]) * a + c(p.beta[1]) * b;
            let alpha = c(p.log_sigma2.unwrap()).exp();
            let s = c(p.gamma[0]) + c(p.gamma[1]) * a + c(p.gamma[2]) * cv;
            let f = logistic(&s);
            let rest = c(1.0) - &f;
            let mut out = vec![f];
            out.extend(
                telescope(&survival(&v, &alpha, &p.thresholds))
                    .into_iter()
                    .map(|q| &rest * &q),
            );
            out
        }
        Family::NbOgev | Family::PoissonOgev => {
            let ln_lambda = c(p.beta[0]) + c(p.beta[1]) * a + c(p.beta[2]) * b;
            let lambda = ln_lambda.exp();
            let mut u: Vec<P> = (0..=top)
                .map(|y| match p.log_r {
                    Some(lr) => {
                        let r = c(lr).exp();
                        let rising = (0..y).fold(c(0.0), |acc, j| acc + (&r + &c(j as f64)).ln());
                        rising - ln_factorial(y)
                            + c(y as f64) * (ln_lambda.clone() - (r + &lambda).ln())
                    }
                    None => c(y as f64) * &ln_lambda - ln_factorial(y),
                })
                .collect();
            u[0] = u[0].clone() + c(p.omega[0]);
            u[2] = u[2].clone() + c(p.omega[1]) * a;
            u[1] = u[1].clone() + c(p.omega[2]) * cv;
            let rho = logistic(&(c(p.theta[0]) + c(p.theta[1]) * a + c(p.theta[2]) * c_rho));
            ogev(&u, &rho)
        }
    }
}

/// Central difference of the pmf in `covariate` with step
/// `1e-6 · max(1, |x|)`, evaluated in 256-bit arithmetic.
pub fn central_difference(case: &Case, covariate: &str) -> Vec<f64> {
    let x = case.obs.get(covariate).expect("covariate present");
    central_difference_with_step(case, covariate, 1e-6 * x.abs().max(1.0))
}

pub fn central_difference_with_step(case: &Case, covariate: &str, h: f64) -> Vec<f64> {
    let at = |shift: f64| {
        let val = |name: &str| {
            let base = c(case.obs.get(name).expect("covariate present"));
            if name == covariate {
                base + c(shift)
            } else {
                base
            }
        };
        pmf(case, &val("a"), &val("b"), &val("c"))
    };
    let up = at(h);
    let down = at(-h);
    let two_h = c(2.0 * h);
    up.iter()
        .zip(&down)
        .map(|(u, d)| ((u - d) / &two_h).to_f64())
        .collect()
}
