mod support;

use std::collections::BTreeMap;

use freqchoice::simulate::simulate_with_workers;
use freqchoice::{predict_pmf, simulate, validate_spec, Error, Family, Generator, Observation};

use support::recovery_config;

#[test]
fn same_config_same_draws() {
    for family in Family::ALL {
        let cfg = recovery_config(family, 500, 11);
        let a = simulate(&cfg).unwrap();
        assert_eq!(a, simulate(&cfg).unwrap());
        assert_eq!(a, simulate_with_workers(&cfg, 4).unwrap());
        let other = recovery_config(family, 500, 12);
        assert_ne!(a, simulate(&other).unwrap());
    }
}

#[test]
fn prefix_stability() {
    let cfg = recovery_config(Family::SplitOevGamma, 300, 13);
    let long = simulate(&cfg).unwrap();
    let short = simulate(&freqchoice::SimulationConfig { n: 100, ..cfg }).unwrap();
    assert_eq!(short.observations(), &long.observations()[..100]);
}

#[test]
fn empty_dataset() {
    let cfg = recovery_config(Family::NbOgev, 0, 14);
    let d = simulate(&cfg).unwrap();
    assert_eq!(d.n(), 0);
    assert_eq!(d.column_names().len(), cfg.covariate_generators.len());
}

#[test]
fn shares_match_the_model_pmf() {
    for family in Family::ALL {
        let mut cfg = recovery_config(family, 100_000, 15);
        let values: BTreeMap<String, f64> = cfg
            .covariate_generators
            .keys()
            .map(|c| (c.clone(), if c == "inc" { 2.0 } else { 0.5 }))
            .collect();
        for (c, g) in cfg.covariate_generators.iter_mut() {
            *g = Generator::Constant { value: values[c] };
        }
        let raw = simulate(&cfg).unwrap();
        let data = raw.prepare(&cfg.spec).unwrap();
        let spec = validate_spec(&cfg.spec).unwrap();
        let obs = Observation {
            freq: 0,
            covariates: data.observations()[0].covariates.clone(),
        };
        let p = predict_pmf(&spec, &cfg.true_params, &obs).unwrap();
        let shares = data.category_shares();
        let n = cfg.n as f64;
        for k in 0..p.len() {
            let band = 3.0 * (p[k] * (1.0 - p[k]) / n).sqrt();
            assert!(
                (shares[k] - p[k]).abs() <= band,
                "{family} category {k}: {} vs {}",
                shares[k],
                p[k]
            );
        }
    }
}

#[test]
fn generator_draws() {
    let mut cfg = recovery_config(Family::OevGamma, 20_000, 16);
    cfg.covariate_generators
        .insert("x2".into(), Generator::Bernoulli { p: 0.25 });
    let d = simulate(&cfg).unwrap();
    let mean = |c: &str| {
        d.observations()
            .iter()
            .map(|o| o.get(c).unwrap())
            .sum::<f64>()
            / 2e4
    };
    assert!((mean("x2") - 0.25).abs() < 0.01);
    assert!(mean("x1").abs() < 0.03);
    assert!(d.observations().iter().all(|o| o.get("inc").unwrap() > 0.0));
    assert!(d
        .observations()
        .iter()
        .all(|o| [0.0, 1.0].contains(&o.get("x2").unwrap())));
}

#[test]
fn invalid_configs() {
    let mut cfg = recovery_config(Family::OevGamma, 10, 17);
    cfg.covariate_generators.insert(
        "x1".into(),
        Generator::Normal {
            mean: 0.0,
            sd: -1.0,
        },
    );
    assert!(matches!(simulate(&cfg), Err(Error::Config(_))));

    let mut cfg = recovery_config(Family::OevGamma, 10, 17);
    cfg.covariate_generators.remove("x1");
    assert!(simulate(&cfg).is_err());

    let mut cfg = recovery_config(Family::OevGamma, 10, 17);
    cfg.true_params.beta.pop();
    assert!(simulate(&cfg).is_err());

    let cfg = recovery_config(Family::PoissonOgev, 10, 17);
    let text = cfg.to_json().unwrap();
    assert_eq!(freqchoice::SimulationConfig::from_json(&text).unwrap(), cfg);
    assert!(freqchoice::SimulationConfig::from_json("{\"n\": 3}").is_err());
}
