//! BFGS with Armijo backtracking, maximising a log-likelihood.

/// Largest unconstrained magnitude before a still-improving parameter is
/// reported as diverging.
pub(crate) const DIVERGENCE_BOUND: f64 = 50.0;

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;
const MAX_COORD_STEP: f64 = 5.0;

#[derive(Debug, Clone)]
pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub ll: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub diverging: Option<usize>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn gradient_tolerance(ll: f64) -> f64 {
    1e-6 * ll.abs().max(1.0)
}

/// Maximise `value` starting at `x0`. `grad` writes the gradient and returns
/// the value; `value` returns the value alone (`-inf` for infeasible points).
pub(crate) fn maximize<V, G>(mut value: V, mut grad: G, x0: &[f64], max_iter: usize) -> Outcome
where
    V: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64], &mut [f64]) -> f64,
{
    let k = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; k];
    let mut ll = grad(&x, &mut g);
    // inverse Hessian of the negative log-likelihood
    let mut h = identity(k, 1.0 / inf_norm(&g).max(1.0));
    let mut fresh = true;
    let mut diverging = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;

    if k == 0 {
        return Outcome {
            x,
            ll,
            grad: g,
            iterations: 0,
            converged: true,
            stalled: false,
            diverging: None,
        };
    }

    while iterations < max_iter {
        if inf_norm(&g) < gradient_tolerance(ll) {
            converged = true;
            break;
        }
        iterations += 1;
        // ascent direction d = H g
        let mut d: Vec<f64> = (0..k).map(|i| dot(&h[i * k..(i + 1) * k], &g)).collect();
        let mut slope = dot(&g, &d);
        if slope.is_nan() || slope <= 0.0 {
            h = identity(k, 1.0 / inf_norm(&g).max(1.0));
            fresh = true;
            d = (0..k).map(|i| h[i * k + i] * g[i]).collect();
            slope = dot(&g, &d);
        }
        let big = inf_norm(&d);
        if big > MAX_COORD_STEP {
            let s = MAX_COORD_STEP / big;
            d.iter_mut().for_each(|v| *v *= s);
            slope *= s;
        }

        let mut t = 1.0;
        let mut accepted = None;
        let mut trial = vec![0.0; k];
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..k {
                trial[i] = x[i] + t * d[i];
            }
            let v = value(&trial);
            if v.is_finite() && v >= ll + ARMIJO_C1 * t * slope {
                accepted = Some(v);
                break;
            }
            t *= 0.5;
        }
        let Some(_) = accepted else {
            if !fresh {
                h = identity(k, 1.0 / inf_norm(&g).max(1.0));
                fresh = true;
                continue;
            }
            // no ascent possible along the gradient at machine precision
            stalled = true;
            converged = true;
            break;
        };

        let mut g_new = vec![0.0; k];
        let ll_new = grad(&trial, &mut g_new);
        let s: Vec<f64> = (0..k).map(|i| trial[i] - x[i]).collect();
        // curvature pair for the negative log-likelihood
        let y: Vec<f64> = (0..k).map(|i| g[i] - g_new[i]).collect();
        let improved = ll_new > ll;
        x.copy_from_slice(&trial);
        g = g_new;
        ll = ll_new;

        if improved {
            if let Some(i) = x.iter().position(|v| v.abs() > DIVERGENCE_BOUND) {
                diverging.get_or_insert(i);
            }
        }

        let step_norm = dot(&s, &s).sqrt();
        if step_norm < 1e-10 {
            converged = true;
            break;
        }
        let sy = dot(&s, &y);
        if sy > 1e-10 * step_norm * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h = identity(k, scale);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }
    if !converged && inf_norm(&g) < gradient_tolerance(ll) {
        converged = true;
    }
    Outcome {
        x,
        ll,
        grad: g,
        iterations,
        converged,
        stalled,
        diverging,
    }
}

fn identity(k: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; k * k];
    for i in 0..k {
        m[i * k + i] = scale;
    }
    m
}

/// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`, `ρ = 1/(yᵀs)`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let k = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k).map(|i| dot(&h[i * k..(i + 1) * k], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Central-difference gradient, step `1e-7·max(1,|x_i|)`.
pub(crate) fn fd_gradient<V: FnMut(&[f64]) -> f64>(value: &mut V, x: &[f64], out: &mut [f64]) {
    let mut work = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-7 * x[i].abs().max(1.0);
        work[i] = x[i] + h;
        let up = value(&work);
        work[i] = x[i] - h;
        let dn = value(&work);
        work[i] = x[i];
        out[i] = (up - dn) / (2.0 * h);
    }
}
