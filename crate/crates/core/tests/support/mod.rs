#![allow(dead_code)]

pub mod precise;

use std::collections::BTreeMap;

use freqchoice::rng::{tag, RowStream};
use freqchoice::simulate::{Generator, SimulationConfig};
use freqchoice::spec::{CountTerm, Covariate, CovariateBlock, Family, ModelSpec, Transform};
use freqchoice::ParamSet;
use nalgebra::{DMatrix, SymmetricEigen};

pub const TOP_CODE: usize = 6;

/// Heterogeneity settings taken from the two ordered columns of the
/// application table.
pub const SIGMA2_OEV: f64 = 2.195;
pub const SIGMA2_SPLIT: f64 = 1.578;

fn gens(pairs: &[(&str, Generator)]) -> BTreeMap<String, Generator> {
    pairs
        .iter()
        .map(|(c, g)| (c.to_string(), g.clone()))
        .collect()
}

fn normal() -> Generator {
    Generator::Normal { mean: 0.0, sd: 1.0 }
}

/// Documented data-generating processes used by the recovery studies.
pub fn recovery_config(family: Family, n: usize, seed: u64) -> SimulationConfig {
    let (spec, true_params, covariate_generators) = match family {
        Family::OevGamma => {
            let spec = ModelSpec::new(
                family,
                TOP_CODE,
                vec![
                    Covariate::identity("x1"),
                    Covariate::identity("x2"),
                    Covariate::new("inc", Transform::NaturalLog),
                ],
            );
            let params = ParamSet {
                beta: vec![0.6, -0.5, 0.4],
                thresholds: vec![-0.2, 0.6, 1.2, 1.7, 2.2, 2.8],
                log_sigma2: Some(SIGMA2_OEV.ln()),
                ..ParamSet::default()
            };
            let g = gens(&[
                ("x1", normal()),
                ("x2", Generator::Bernoulli { p: 0.4 }),
                (
                    "inc",
                    Generator::Lognormal {
                        mu: 0.5,
                        sigma: 0.6,
                    },
                ),
            ]);
            (spec, params, g)
        }
        Family::SplitOevGamma => {
            let mut spec = ModelSpec::new(
                family,
                TOP_CODE,
                vec![Covariate::identity("x1"), Covariate::identity("x2")],
            );
            spec.split_covariates = Some(CovariateBlock {
                intercept: true,
                covariates: vec![Covariate::identity("z1")],
            });
            let params = ParamSet {
                beta: vec![0.5, -0.4],
                thresholds: vec![-0.3, 0.4, 1.0, 1.6, 2.3],
                log_sigma2: Some(SIGMA2_SPLIT.ln()),
                gamma: vec![0.4, -0.7],
                ..ParamSet::default()
            };
            let g = gens(&[
                ("x1", normal()),
                ("x2", Generator::Bernoulli { p: 0.4 }),
                ("z1", normal()),
            ]);
            (spec, params, g)
        }
        Family::NbOgev | Family::PoissonOgev => {
            let mut spec = ModelSpec::new(
                family,
                TOP_CODE,
                vec![Covariate::identity("x1"), Covariate::identity("x2")],
            );
            spec.index_intercept = true;
            spec.count_specific_terms = vec![
                CountTerm::constant(5),
                CountTerm::covariate(1, "x2", Transform::Identity),
            ];
            spec.rho_covariates = Some(CovariateBlock {
                intercept: true,
                covariates: vec![Covariate::identity("w1")],
            });
            let params = ParamSet {
                beta: vec![0.2, 0.35, -0.3],
                log_r: (family == Family::NbOgev).then(|| 1.5f64.ln()),
                omega: vec![0.8, 0.4],
                theta: vec![0.3, 0.6],
                ..ParamSet::default()
            };
            let g = gens(&[
                ("x1", normal()),
                ("x2", Generator::Bernoulli { p: 0.4 }),
                ("w1", normal()),
            ]);
            (spec, params, g)
        }
    };
    SimulationConfig {
        spec,
        true_params,
        n,
        seed,
        covariate_generators,
    }
}

/// Deterministic test draws.
pub struct Draws(RowStream);

impl Draws {
    pub fn new(seed: u64) -> Self {
        Draws(RowStream::new(seed, 0, 99))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.0.normal()
    }

    pub fn index(&mut self, n: usize) -> usize {
        ((self.0.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Strictly increasing vector starting in `[lo, hi)` with gaps in
    /// `[0.1, 1.5)`.
    pub fn increasing(&mut self, len: usize, lo: f64, hi: f64) -> Vec<f64> {
        let mut acc = self.uniform(lo, hi);
        (0..len)
            .map(|i| {
                if i > 0 {
                    acc += self.uniform(0.1, 1.5);
                }
                acc
            })
            .collect()
    }
}

pub fn stream(seed: u64, row: u64) -> RowStream {
    RowStream::new(seed, row, tag::SIMULATION)
}

/// Generalized Gauss–Laguerre rule for the weight `t^a e^{-t}` on
/// `(0, ∞)`, normalised so the weights sum to 1 (i.e. divided by
/// `Γ(a + 1)`), from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_laguerre(nodes: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    let mut j = DMatrix::<f64>::zeros(nodes, nodes);
    for i in 0..nodes {
        let k = i as f64;
        j[(i, i)] = 2.0 * k + 1.0 + a;
        if i + 1 < nodes {
            let off = ((k + 1.0) * (k + 1.0 + a)).sqrt();
            j[(i, i + 1)] = off;
            j[(i + 1, i)] = off;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..nodes)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    pairs.into_iter().unzip()
}

/// Ordered-EV survival `Pr(y ≥ k)` integrated over a unit-mean Gamma
/// heterogeneity term with shape `alpha`:
/// `∫ exp(-u Δ e^{-v}) g(u) du`, `u ~ Gamma(alpha, rate alpha)`.
///
/// With `t = alpha u` the integral is `∫ t^{alpha-1} e^{-t} e^{-c t} dt / Γ(alpha)`,
/// `c = Δ e^{-v} / alpha`. The nodes are stretched by `s = 1 + c/2` so the
/// remaining integrand `e^{-(1 + c - s) t / s}` decays no faster than the
/// weight; `s^{-alpha}` is the Jacobian of the stretch.
pub fn mixture_survival_quadrature(delta: f64, v: f64, alpha: f64, nodes: usize) -> f64 {
    let (t, w) = gauss_laguerre(nodes, alpha - 1.0);
    let c = delta.exp() * (-v).exp() / alpha;
    let s = 1.0 + 0.5 * c;
    let rate = (1.0 + c - s) / s;
    let sum: f64 = t
        .iter()
        .zip(&w)
        .map(|(ti, wi)| wi * (-rate * ti).exp())
        .sum();
    s.powf(-alpha) * sum
}

/// Relative error of `a` against `b`, scaled by the largest entry of `b`.
pub fn vector_relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// One randomized model, parameter set and observation. Covariate `a`
/// enters every channel the family has, `b` only the index and `c` only the
/// secondary channels.
pub struct Case {
    pub spec: freqchoice::ValidatedSpec,
    pub params: ParamSet,
    pub obs: freqchoice::Observation,
}

pub fn random_case(family: Family, d: &mut Draws) -> Case {
    let top_code = 2 + d.index(5);
    let mut spec = ModelSpec::new(
        family,
        top_code,
        vec![Covariate::identity("a"), Covariate::identity("b")],
    );
    let mut params = ParamSet {
        beta: vec![0.8 * d.normal(), 0.8 * d.normal()],
        ..ParamSet::default()
    };
    match family {
        Family::OevGamma => {
            params.thresholds = d.increasing(top_code, -2.0, 0.5);
            params.log_sigma2 = Some(d.uniform(0.2f64.ln(), 10f64.ln()));
        }
        Family::SplitOevGamma => {
            spec.split_covariates = Some(CovariateBlock {
                intercept: true,
                covariates: vec![Covariate::identity("a"), Covariate::identity("c")],
            });
            params.thresholds = d.increasing(top_code - 1, -2.0, 0.5);
            params.log_sigma2 = Some(d.uniform(0.2f64.ln(), 10f64.ln()));
            params.gamma = vec![d.normal(), 0.8 * d.normal(), 0.8 * d.normal()];
        }
        Family::NbOgev | Family::PoissonOgev => {
            spec.index_intercept = true;
            spec.count_specific_terms = vec![
                CountTerm::constant(0),
                CountTerm::covariate(2, "a", Transform::Identity),
                CountTerm::covariate(1, "c", Transform::Identity),
            ];
            spec.rho_covariates = Some(CovariateBlock {
                intercept: true,
                covariates: vec![Covariate::identity("a"), Covariate::identity("c")],
            });
            params.beta.insert(0, d.uniform(-0.5, 1.0));
            params.omega = vec![d.uniform(-1.0, 1.0), 0.5 * d.normal(), 0.5 * d.normal()];
            params.theta = vec![d.normal(), d.normal(), d.normal()];
            if family == Family::NbOgev {
                params.log_r = Some(d.uniform(0.3f64.ln(), 20f64.ln()));
            }
        }
    }
    let obs = freqchoice::Observation::new(0)
        .with("a", d.normal())
        .with("b", d.normal())
        .with("c", d.normal());
    Case {
        spec: freqchoice::validate_spec(&spec).expect("random spec is valid"),
        params,
        obs,
    }
}

/// Central finite difference of the pmf with respect to one covariate,
/// step `1e-6 · max(1, |x|)`, taken on the high-precision reference pmf.
pub fn fd_effect(case: &Case, covariate: &str) -> Vec<f64> {
    precise::central_difference(case, covariate)
}

/// Share log-likelihood `Σ_k n_k ln(n_k / n)`, the saturated
/// constants-only benchmark common to every family.
pub fn share_log_likelihood(dataset: &freqchoice::Dataset) -> f64 {
    let n = dataset.n() as f64;
    dataset
        .category_shares()
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| n * s * s.ln())
        .sum()
}
