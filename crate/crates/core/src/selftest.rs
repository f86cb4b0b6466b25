//! Fast oracle checks run by `rbmh selftest`.

use crate::estimators::{delta_plain, delta_plain_blocks};
use crate::mh::run_chain;
use crate::models::{
    geometric_gain_absolute, geometric_gain_relative, make_exp_independence, make_gaussian_rw, make_geometric_rw,
    AnalyticOracle,
};
use crate::probit::{log_posterior, log_posterior_gradient, ProbitData};
use crate::rng::{ChainStreams, Purpose};
use crate::stats;
use crate::weights::{control_variate_draw, var_xi_inf_closed, var_xi_k_closed, xi_hat_k, PRPair, WeightOrder, WeightSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn weight_unbiasedness(seed: u64) -> Check {
    let (t, q, o) = match make_exp_independence(1.0, 0.5) {
        Ok(m) => m,
        Err(e) => return check("weight unbiasedness", false, e.to_string()),
    };
    let mut worst: f64 = 0.0;
    for (i, order) in [WeightOrder::Finite(0), WeightOrder::Finite(3), WeightOrder::Infinite].into_iter().enumerate() {
        let spec = WeightSpec::new(order);
        let mut rng = ChainStreams::new(seed).indexed(Purpose::Auxiliary, i as u64);
        let draws: Vec<f64> = (0..20_000)
            .map(|_| xi_hat_k(&1.0, &spec, &t, &q, &mut rng).map_or(f64::NAN, |r| r.xi))
            .collect();
        let z = (stats::mean(&draws).unwrap_or(f64::NAN) - 1.0 / o.p_exact(&1.0)) / stats::std_error(&draws).unwrap_or(f64::NAN);
        worst = worst.max(z.abs());
    }
    check("weight unbiasedness", worst < 4.0, format!("largest |z| over k in {{0, 3, inf}} is {worst:.2}"))
}

fn closed_form_variance() -> Check {
    let mut ok = true;
    for (p, r) in [(0.3, 0.2), (0.9, 0.82), (0.5, 0.25)] {
        let Ok(pr) = PRPair::new(p, r) else {
            ok = false;
            continue;
        };
        ok &= var_xi_k_closed(pr, 0) == (1.0 - p) / (p * p);
        ok &= (var_xi_k_closed(pr, 10_000) - var_xi_inf_closed(pr)).abs() < 1e-12;
        ok &= (1..50).all(|k| var_xi_k_closed(pr, k) <= var_xi_k_closed(pr, k - 1) + 1e-15);
    }
    check("closed-form variance", ok, "k = 0 is geometric, limit and ordering in k hold".into())
}

fn geometric_gain() -> Check {
    let mut worst: f64 = 0.0;
    for i in 1..100 {
        let beta = i as f64 / 100.0;
        let (_, _, o) = match make_geometric_rw(beta) {
            Ok(m) => m,
            Err(e) => return check("geometric gain identity", false, e.to_string()),
        };
        let Ok(pr) = o.pr(&0) else { return check("geometric gain identity", false, "invalid (p, r)".into()) };
        let diff = var_xi_k_closed(pr, 0) - var_xi_inf_closed(pr);
        worst = worst.max((diff - geometric_gain_absolute(beta)).abs());
    }
    let decreasing = (1..99).all(|i| geometric_gain_relative((i + 1) as f64 / 100.0) < geometric_gain_relative(i as f64 / 100.0));
    check(
        "geometric gain identity",
        worst < 1e-10 && decreasing,
        format!("max |gain - (Var xi^0 - Var xi^inf)| = {worst:.1e}, relative gain decreasing: {decreasing}"),
    )
}

fn representation_identity(seed: u64) -> Check {
    let mut mismatches = 0;
    for r in 0..100 {
        let tau = 0.5 + (r % 7) as f64;
        let Ok((t, q)) = make_gaussian_rw(tau) else { return check("path/block identity", false, "bad scale".into()) };
        let Ok(chain) = run_chain(&t, &q, 0.0, 200, seed + r) else {
            return check("path/block identity", false, "chain failed".into());
        };
        let h = |x: &f64| x * x - x.cos();
        let a = delta_plain(&chain, h).unwrap_or(f64::NAN);
        let b = delta_plain_blocks(&chain.blocks, h).unwrap_or(f64::NAN);
        mismatches += (a.to_bits() != b.to_bits()) as usize;
    }
    check("path/block identity", mismatches == 0, format!("{mismatches} of 100 chains differ"))
}

fn control_variate_mean(seed: u64) -> Check {
    let Ok((t, q, _)) = make_exp_independence(1.0, 0.3) else { return check("control variate mean", false, "bad model".into()) };
    let spec = WeightSpec::new(WeightOrder::Infinite);
    let streams = ChainStreams::new(seed);
    let mut rng = streams.indexed(Purpose::Weights, 0);
    let mut cv_rng = streams.indexed(Purpose::ControlVariate, 0);
    let products: Vec<f64> = (0..20_000)
        .map(|_| {
            let xi = xi_hat_k(&0.5, &spec, &t, &q, &mut rng).map_or(f64::NAN, |r| r.xi);
            xi * control_variate_draw(&0.5, &t, &q, &mut cv_rng).unwrap_or(f64::NAN)
        })
        .collect();
    let z = (stats::mean(&products).unwrap_or(f64::NAN) - 1.0) / stats::std_error(&products).unwrap_or(f64::NAN);
    check("control variate mean", z.abs() < 4.0, format!("E[xi * alpha(z, y0)] is 1 within {:.2} SE", z.abs()))
}

fn probit_gradient(seed: u64) -> Check {
    let Ok(data) = ProbitData::synthetic(200, [0.3, 0.8], seed) else { return check("probit gradient", false, "data".into()) };
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let beta = [-1.0 + 0.2 * i as f64, 1.5 - 0.25 * i as f64];
        let Ok(g) = log_posterior_gradient(&beta, &data) else { return check("probit gradient", false, "gradient".into()) };
        for j in 0..2 {
            let h = 1e-5;
            let mut up = beta;
            let mut down = beta;
            up[j] += h;
            down[j] -= h;
            let fd = (log_posterior(&up, &data).unwrap_or(f64::NAN) - log_posterior(&down, &data).unwrap_or(f64::NAN)) / (2.0 * h);
            worst = worst.max((fd - g[j]).abs() / g[j].abs().max(1.0));
        }
    }
    check("probit gradient", worst < 1e-5, format!("largest relative error {worst:.1e}"))
}

/// Run every check; `seed` fixes the Monte Carlo draws.
pub fn run_selftest(seed: u64) -> Vec<Check> {
    vec![
        weight_unbiasedness(seed),
        closed_form_variance(),
        geometric_gain(),
        representation_identity(seed),
        control_variate_mean(seed),
        probit_gradient(seed),
    ]
}
