"""Smoke test for the pyfreqchoice extension module.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`.
"""

import json
import math

import pyfreqchoice as fc

SPEC = {
    "family": "oev_gamma",
    "top_code": 3,
    "index_covariates": [{"column": "x"}, {"column": "inc", "transform": "natural_log"}],
}
PARAMS = {"beta": [0.6, -0.3], "thresholds": [-0.4, 0.5, 1.3], "log_sigma2": 0.5}
CONFIG = {
    "spec": SPEC,
    "true_params": PARAMS,
    "n": 2000,
    "seed": 3,
    "covariate_generators": {
        "x": {"dist": "normal", "mean": 0.0, "sd": 1.0},
        "inc": {"dist": "lognormal", "mu": 0.0, "sigma": 0.5},
    },
}


def main():
    a, b, rho = fc.fit_statistics(-23418.0, -28131.0, 44, 13528)
    assert a == 46924.0 and abs(b - 47254.0) <= 1.0 and abs(rho - 0.168) <= 5e-4

    pmf = fc.gamma_oev_pmf(0.2, 1.5, [-0.5, 0.3, 1.0])
    assert len(pmf) == 4 and abs(sum(pmf) - 1.0) < 1e-12

    half = fc.ogev_pmf([0.0, 0.0, 0.0], 0.5)
    assert all(abs(p - q) < 1e-6 for p, q in zip(half, [0.353553, 0.292893, 0.353553]))

    spec = fc.ModelSpec.from_json(json.dumps(SPEC))
    assert spec.k == 6, spec.k
    data = fc.Dataset.from_csv(fc.simulate(json.dumps(CONFIG)), spec)
    assert data.n == 2000

    fit = fc.fit(data, spec)
    assert fit.converged, fit.warnings
    assert fit.ll_convergence >= fit.ll_null
    for name, value, se in fit.estimates():
        assert se is not None and math.isfinite(value), name

    ll = fc.log_likelihood(data, spec, fit.params_json())
    assert abs(ll - fit.ll_convergence) < 1e-9

    ame = fc.average_marginal_effects(fit, data, "x")
    assert abs(sum(ame)) < 1e-10

    probs = fc.predict_pmf(spec, fit.params_json(), {"x": 0.0, "inc": 0.0})
    assert abs(sum(probs) - 1.0) < 1e-12

    again = fc.FitResult.from_json(fit.to_json())
    table = fc.compare([("first", fit), ("second", again)])
    assert table.splitlines()[0].startswith("rank,label")

    try:
        fc.ModelSpec.from_json(json.dumps({**SPEC, "index_covariates": []}))
    except ValueError:
        pass
    else:
        raise AssertionError("empty index accepted")

    print("pyfreqchoice smoke test passed:", fit)


if __name__ == "__main__":
    main()
