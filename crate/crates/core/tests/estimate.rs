mod support;

use freqchoice::estimate::{log_likelihood_validated, FitOptions, HessianStatus};
use freqchoice::spec::{Covariate, CovariateBlock, Family, ModelSpec};
use freqchoice::{
    estimate, fit, fit_null, fit_statistics, log_likelihood, run_compare, simulate, Dataset, Error,
    Observation, ParamSet,
};

use support::precise::{self, P};
use support::{random_case, recovery_config, Case, Draws};

fn case_dataset(case: &Case, d: &mut Draws, n: usize) -> (Dataset, Vec<[f64; 3]>) {
    let top = case.spec.top_code();
    let mut rows = Vec::with_capacity(n);
    let obs = (0..n)
        .map(|_| {
            let x = [d.normal(), d.normal(), d.normal()];
            rows.push(x);
            Observation::new(d.index(top + 1))
                .with("a", x[0])
                .with("b", x[1])
                .with("c", x[2])
        })
        .collect();
    let data = Dataset::new(vec!["a".into(), "b".into(), "c".into()], obs, top).unwrap();
    (data, rows)
}

#[test]
fn log_likelihood_matches_high_precision_sum() {
    let mut d = Draws::new(91);
    for family in Family::ALL {
        for _ in 0..5 {
            let case = random_case(family, &mut d);
            let (data, rows) = case_dataset(&case, &mut d, 100);
            let mut want = P::new(0.0);
            for (obs, x) in data.observations().iter().zip(&rows) {
                let p = precise::pmf(&case, &P::new(x[0]), &P::new(x[1]), &P::new(x[2]));
                want = want + p[obs.freq].ln();
            }
            let want = want.to_f64();
            let got = log_likelihood_validated(&data, &case.spec, &case.params, 1).unwrap();
            assert!(
                (got - want).abs() < 1e-12 * want.abs(),
                "{family}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn log_likelihood_is_additive() {
    let mut d = Draws::new(92);
    for family in Family::ALL {
        let case = random_case(family, &mut d);
        let (a, _) = case_dataset(&case, &mut d, 37);
        let (b, _) = case_dataset(&case, &mut d, 64);
        let ll = |x: &Dataset| log_likelihood(x, case.spec.spec(), &case.params).unwrap();
        let whole = ll(&a.concat(&b).unwrap());
        assert!((whole - ll(&a) - ll(&b)).abs() < 1e-10 * whole.abs());
    }
}

#[test]
fn single_observation_at_one_half() {
    let spec = ModelSpec::new(Family::OevGamma, 1, vec![Covariate::identity("x")]);
    let data = Dataset::new(
        vec!["x".into()],
        vec![Observation::new(1).with("x", 0.0)],
        1,
    )
    .unwrap();
    let params = ParamSet {
        beta: vec![0.3],
        thresholds: vec![0.0],
        log_sigma2: Some(0.0),
        ..ParamSet::default()
    };
    assert!((log_likelihood(&data, &spec, &params).unwrap() - 0.5f64.ln()).abs() < 1e-15);
}

#[test]
fn log_likelihood_errors() {
    let spec = ModelSpec::new(Family::OevGamma, 2, vec![Covariate::identity("x")]);
    let data = Dataset::new(
        vec!["x".into()],
        vec![Observation::new(2).with("x", 0.0)],
        2,
    )
    .unwrap();
    let wrong = ParamSet {
        beta: vec![0.3, 0.1],
        thresholds: vec![0.0, 1.0],
        log_sigma2: Some(0.0),
        ..ParamSet::default()
    };
    assert!(matches!(
        log_likelihood(&data, &spec, &wrong),
        Err(Error::Dimension(_))
    ));
    let far = ParamSet {
        beta: vec![0.0],
        thresholds: vec![0.0, 800.0],
        log_sigma2: Some(0.0),
        ..ParamSet::default()
    };
    let ll = log_likelihood(&data, &spec, &far).unwrap();
    assert!((ll + 800.0).abs() < 1e-12, "{ll}");
    assert!(Dataset::new(
        vec!["x".into()],
        vec![Observation::new(0).with("x", f64::NAN)],
        2
    )
    .is_err());
}

fn binary(zeros: usize, ones: usize) -> Dataset {
    let obs = (0..zeros)
        .map(|i| Observation::new(0).with("x", i as f64 * 0.01))
        .chain((0..ones).map(|i| Observation::new(1).with("x", -(i as f64) * 0.02)))
        .collect();
    Dataset::new(vec!["x".into()], obs, 1).unwrap()
}

#[test]
fn logit_intercept_standard_error() {
    let data = binary(200, 200);
    let mut spec = ModelSpec::new(Family::SplitOevGamma, 1, vec![Covariate::identity("x")]);
    spec.split_covariates = Some(CovariateBlock {
        intercept: true,
        covariates: vec![Covariate::identity("x")],
    });
    let null = fit_null(&data, &spec, &FitOptions::default()).unwrap();
    assert!(null.converged);
    assert_eq!(null.k, 1);
    assert_eq!(null.hessian, HessianStatus::NegativeDefinite);
    let se = null.se[0].unwrap();
    assert!((se - 0.1).abs() < 0.002, "{se}");
    assert!(null.unconstrained[0].abs() < 1e-6);

    let ordered = ModelSpec::new(Family::OevGamma, 1, vec![Covariate::identity("x")]);
    let null = fit_null(&data, &ordered, &FitOptions::default()).unwrap();
    assert!((null.se[0].unwrap() - 0.1).abs() < 0.002);
}

fn shares(counts: &[usize], extra: bool) -> Dataset {
    let mut obs = Vec::new();
    let mut cols = vec!["x".to_string()];
    if extra {
        cols.push("noise".into());
    }
    let mut d = Draws::new(93);
    for (k, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let mut o = Observation::new(k).with("x", d.normal());
            if extra {
                o = o.with("noise", d.normal());
            }
            obs.push(o);
        }
    }
    Dataset::new(cols, obs, counts.len() - 1).unwrap()
}

#[test]
fn null_models_reproduce_shares() {
    let spec = ModelSpec::new(Family::OevGamma, 1, vec![Covariate::identity("x")]);
    let null = fit_null(&shares(&[50, 50], false), &spec, &FitOptions::default()).unwrap();
    assert!((null.ll_convergence - 100.0 * 0.5f64.ln()).abs() < 1e-6);

    let spec = ModelSpec::new(Family::OevGamma, 2, vec![Covariate::identity("x")]);
    let want = 1000.0 * (0.2 * 0.2f64.ln() + 0.3 * 0.3f64.ln() + 0.5 * 0.5f64.ln());
    let plain = fit_null(
        &shares(&[200, 300, 500], false),
        &spec,
        &FitOptions::default(),
    )
    .unwrap();
    let wide = fit_null(
        &shares(&[200, 300, 500], true),
        &spec,
        &FitOptions::default(),
    )
    .unwrap();
    assert!((plain.ll_convergence - want).abs() < 0.01);
    assert!((want + 1029.65).abs() < 0.01);
    assert_eq!(plain.ll_convergence, wide.ll_convergence);
}

fn quick(workers: usize) -> FitOptions {
    FitOptions {
        workers,
        starts: 2,
        seed: 3,
        ..FitOptions::default()
    }
}

#[test]
fn fits_are_deterministic_and_coherent() {
    for family in Family::ALL {
        let cfg = recovery_config(family, 3_000, 94);
        let data = simulate(&cfg).unwrap().prepare(&cfg.spec).unwrap();
        let a = estimate(&data, &cfg.spec, None, None, &quick(1)).unwrap();
        let b = estimate(&data, &cfg.spec, None, None, &quick(1)).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let c = estimate(&data, &cfg.spec, None, None, &quick(3)).unwrap();
        assert!((a.ll_convergence - c.ll_convergence).abs() < 1e-10);

        assert!(a.converged, "{family}");
        assert!(a.ll_convergence >= a.ll_init);
        assert!(a.stats.unwrap().rho_squared > 0.0 && a.stats.unwrap().rho_squared < 1.0);
        assert!(a.params.thresholds.windows(2).all(|w| w[0] < w[1]));
        assert!(a.params.sigma2() > 0.0);
        if let Some(r) = a.params.r() {
            assert!(r > 0.0);
        }
        for (i, t) in a.t_stats.iter().enumerate() {
            match (a.se[i], t) {
                (Some(se), Some(t)) => assert_eq!(*t, a.unconstrained[i] / se),
                (None, None) => {}
                other => panic!("{other:?}"),
            }
        }
        let back = freqchoice::FitResult::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }
}

#[test]
fn ascent_from_supplied_start() {
    let cfg = recovery_config(Family::PoissonOgev, 2_000, 95);
    let data = simulate(&cfg).unwrap().prepare(&cfg.spec).unwrap();
    let mut init = cfg.true_params.clone();
    for b in &mut init.beta {
        *b += 0.3;
    }
    let f = fit(&data, &cfg.spec, Some(&init), &FitOptions::default()).unwrap();
    let at_init = log_likelihood(&data, &cfg.spec, &init).unwrap();
    assert_eq!(f.ll_init, at_init);
    assert!(f.ll_convergence >= at_init);
}

#[test]
fn iteration_cap_is_not_an_error() {
    let cfg = recovery_config(Family::OevGamma, 1_000, 96);
    let data = simulate(&cfg).unwrap().prepare(&cfg.spec).unwrap();
    let opts = FitOptions {
        max_iter: 1,
        ..FitOptions::default()
    };
    let f = fit(&data, &cfg.spec, None, &opts).unwrap();
    assert!(!f.converged);
    assert_eq!(f.iterations, 1);
    assert!(f.ll_convergence >= f.ll_init);
}

#[test]
fn non_finite_start_is_an_init_error() {
    let spec = ModelSpec::new(Family::OevGamma, 1, vec![Covariate::identity("x")]);
    let data = binary(5, 5);
    let init = ParamSet {
        beta: vec![1e6],
        thresholds: vec![0.0],
        log_sigma2: Some(0.0),
        ..ParamSet::default()
    };
    assert!(matches!(
        fit(&data, &spec, Some(&init), &FitOptions::default()),
        Err(Error::Init(_))
    ));
    let bad = ParamSet {
        beta: vec![0.0],
        thresholds: vec![0.0, 1.0],
        ..init
    };
    assert!(matches!(
        fit(&data, &spec, Some(&bad), &FitOptions::default()),
        Err(Error::Init(_))
    ));
}

#[test]
fn all_zero_split_reports_divergence() {
    let mut spec = ModelSpec::new(Family::SplitOevGamma, 3, vec![Covariate::identity("x")]);
    spec.split_covariates = Some(CovariateBlock {
        intercept: true,
        covariates: vec![],
    });
    let obs = (0..200)
        .map(|i| Observation::new(0).with("x", (i % 7) as f64))
        .collect();
    let data = Dataset::new(vec!["x".into()], obs, 3).unwrap();
    let f = fit(&data, &spec, None, &FitOptions::default()).unwrap();
    assert!(f.diverging.is_some());
    assert!(f.warnings.iter().any(|w| w.contains("diverging")));
}

#[test]
fn statistics() {
    let s = fit_statistics(-23418.0, -28131.0, 44, 13528).unwrap();
    assert_eq!(s.aic, 46924.0);
    assert!((s.bic - 47254.0).abs() <= 1.0);
    assert!((s.rho_squared - 0.168).abs() <= 0.0005);
    let s = fit_statistics(-23728.0, -28131.0, 31, 13528).unwrap();
    assert_eq!(s.aic, 47518.0);
    assert!((s.bic - 47751.0).abs() <= 1.0);
    assert!((s.rho_squared - 0.157).abs() <= 0.0005);
    assert_eq!(
        fit_statistics(-500.0, -500.0, 0, 100).unwrap().rho_squared,
        0.0
    );
    assert!(matches!(
        fit_statistics(-1.0, 0.0, 1, 10),
        Err(Error::Division(_))
    ));
}

#[test]
fn comparison_ranks_by_aic() {
    let cfg = recovery_config(Family::OevGamma, 2_000, 97);
    let data = simulate(&cfg).unwrap().prepare(&cfg.spec).unwrap();
    let full = estimate(&data, &cfg.spec, None, None, &FitOptions::default()).unwrap();
    let mut small_spec = cfg.spec.clone();
    small_spec.index_covariates.truncate(1);
    let small = estimate(
        &data,
        &small_spec,
        None,
        full.ll_null,
        &FitOptions::default(),
    )
    .unwrap();
    let table = run_compare(&[
        ("small".into(), small.clone()),
        ("full".into(), full.clone()),
    ])
    .unwrap();
    assert_eq!(table.winner_by_aic().label, "full");
    assert_eq!(table.rows.len(), 2);

    let other = shares(&[10, 10, 10, 10, 10, 10, 10], false);
    let elsewhere = estimate(
        &other,
        &ModelSpec::new(Family::OevGamma, 6, vec![Covariate::identity("x")]),
        None,
        None,
        &FitOptions::default(),
    )
    .unwrap();
    assert!(matches!(
        run_compare(&[("a".into(), full), ("b".into(), elsewhere)]),
        Err(Error::Comparison(_))
    ));
    assert!(run_compare(&[]).is_err());
}
