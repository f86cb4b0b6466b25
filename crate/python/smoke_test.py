"""Smoke test for the rbmh_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/rbmh_py-*.whl
"""

import json
import math
import statistics

import rbmh_py


def check(cond, message):
    if not cond:
        raise SystemExit(f"FAIL: {message}")
    print(f"ok: {message}")


def main():
    exp = rbmh_py.Model("exp_independence", 0.5)
    z = 1.0
    draws = exp.xi_hat(z, "inf", n=20000, seed=3)
    se = statistics.stdev(draws) / math.sqrt(len(draws))
    check(abs(statistics.fmean(draws) - 1 / exp.p(z)) < 4 * se, "weights are unbiased for 1/p(z)")

    p, r = exp.p(z), exp.r(z)
    check(exp.acceptance_prob(z, z + 1) < 1.0, "moves up are sometimes rejected")
    check(rbmh_py.var_xi_closed(p, r, "0") == (1 - p) / p**2, "order 0 variance is geometric")
    check(rbmh_py.var_xi_closed(p, r, "inf") < rbmh_py.var_xi_closed(p, r, "3"), "variance decreases in k")

    chain = exp.run_chain(1.0, 2000, seed=11)
    check(len(chain) == 2000 and sum(chain.occupations()) == 2000, "occupations sum to the path length")
    acc = chain.attach_weights(["3", "inf"], mode="reuse", control_variate=True)
    check(acc["control_variate_draws"] == len(chain.occupations()), "one control-variate draw per block")
    est = chain.estimate(lambda x: x, ["3", "inf"])
    check(abs(est["delta"] - statistics.fmean(chain.path())) < 1e-12, "plain estimate is the path average")
    check(all(abs(v - 1.0) < 0.2 for v in est.values()), f"estimates near E[X] = 1: {est}")

    geo = rbmh_py.Model("geometric_rw", 0.3)
    check(abs(geo.p(4) - 0.85) < 1e-15, "geometric acceptance rate is 1 - beta/2")
    beta, gain = rbmh_py.geometric_gain_optimum()
    check(0 < beta < 1 and abs(gain - rbmh_py.geometric_gain_absolute(beta)) < 1e-15, "gain optimum is consistent")

    probit = rbmh_py.Model("probit", 0.1, probit_n=200, seed=5)
    mle, se = probit.mle()
    pchain = probit.run_chain(list(mle), 300, seed=2)
    check(len(pchain.accepted_states()) >= 1, "probit chain runs from the MLE")

    report, timing = rbmh_py.run_experiment(
        'name = "smoke"\nmodel = "gaussian_rw"\nscales = [2.0]\niterations = 50\nreplications = 20\nh = ["x", "p"]\n',
        seed=1,
    )
    cells = json.loads(report)["scales"][0]["cells"]
    check(len(cells) == 2 and all(c["ratio"] > 0 for c in cells), "experiment report has one cell per test function")
    again, _ = rbmh_py.run_experiment(
        'name = "smoke"\nmodel = "gaussian_rw"\nscales = [2.0]\niterations = 50\nreplications = 20\nh = ["x", "p"]\n',
        seed=1,
        threads=2,
    )
    check(report == again, "reports are reproducible across thread counts")
    check(all(passed for _, passed, _ in rbmh_py.selftest()), "selftest passes")
    print("all smoke checks passed")


if __name__ == "__main__":
    main()
