//! Python bindings for `rbmh`.
//!
//!     import rbmh_py
//!     model = rbmh_py.Model("exp_independence", 0.5)
//!     chain = model.run_chain(1.0, 1000, seed=7)
//!     chain.attach_weights(["inf"])
//!     chain.estimate(lambda x: x, ["inf"])

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rbmh::estimators::weighted_mean;
use rbmh::experiment::{self, ExperimentConfig};
use rbmh::mh::{acceptance_prob, run_chain_with, ChainOptions, ChainRecord, Proposal, Target};
use rbmh::models::{
    self, AnalyticOracle, CauchyIndependence, ExpOracle, Exponential, ExponentialIndependence, GaussianRandomWalk,
    Geometric, GeometricOracle, OneStepWalk, StandardNormal,
};
use rbmh::probit::{fit_mle, make_probit, ProbitData, ProbitPosterior, ProbitRandomWalk};
use rbmh::rng::ChainStreams;
use rbmh::weights::{self, DrawMode, PRPair, WeightAccounting, WeightOrder, WeightSpec};

fn err(e: rbmh::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_order(s: &str) -> PyResult<WeightOrder> {
    s.parse().map_err(err)
}

#[derive(Clone)]
enum Kind {
    Gaussian(StandardNormal, GaussianRandomWalk),
    Cauchy(StandardNormal, CauchyIndependence),
    Exp(Exponential, ExponentialIndependence, ExpOracle),
    Geometric(Geometric, OneStepWalk, GeometricOracle),
    Probit(Box<ProbitPosterior>, ProbitRandomWalk),
}

enum Record {
    Real(ChainRecord<f64>),
    Count(ChainRecord<u64>),
    Coef(ChainRecord<[f64; 2]>),
}

/// A target together with its proposal.
#[pyclass(module = "rbmh_py", skip_from_py_object)]
#[derive(Clone)]
struct Model {
    kind: Kind,
    name: String,
    scale: f64,
}

fn extract_real(x: &Bound<'_, PyAny>) -> PyResult<f64> {
    x.extract()
}

fn extract_count(x: &Bound<'_, PyAny>) -> PyResult<u64> {
    x.extract()
}

fn extract_coef(x: &Bound<'_, PyAny>) -> PyResult<[f64; 2]> {
    let v: Vec<f64> = x.extract()?;
    <[f64; 2]>::try_from(v).map_err(|_| PyValueError::new_err("probit states have two coefficients"))
}

fn xi_samples<S, T, P>(z: &S, order: WeightOrder, t: &T, q: &P, n: usize, seed: u64) -> PyResult<Vec<f64>>
where
    S: rbmh::State,
    T: Target<S>,
    P: Proposal<S>,
{
    let spec = WeightSpec::new(order);
    let mut rng = ChainStreams::new(seed).stream(rbmh::rng::Purpose::Auxiliary);
    (0..n)
        .map(|_| rbmh::xi_hat_k(z, &spec, t, q, &mut rng).map(|w| w.xi).map_err(err))
        .collect()
}

#[pymethods]
impl Model {
    /// Build a model by name: gaussian_rw, cauchy_independence,
    /// exp_independence, geometric_rw or probit.
    ///
    /// `scale` is the proposal scale (tau), the proposal rate (mu) for
    /// exp_independence, or the target parameter (beta) for geometric_rw.
    /// Probit models use synthetic data of size `probit_n` unless
    /// `probit_data` names a CSV file.
    #[new]
    #[pyo3(signature = (name, scale, lambda_=1.0, probit_data=None, probit_n=332, seed=0))]
    fn new(name: &str, scale: f64, lambda_: f64, probit_data: Option<&str>, probit_n: usize, seed: u64) -> PyResult<Self> {
        let kind = match name {
            "gaussian_rw" => {
                let (t, q) = models::make_gaussian_rw(scale).map_err(err)?;
                Kind::Gaussian(t, q)
            }
            "cauchy_independence" => {
                let (t, q) = models::make_cauchy_independence(scale).map_err(err)?;
                Kind::Cauchy(t, q)
            }
            "exp_independence" => {
                let (t, q, o) = models::make_exp_independence(lambda_, scale).map_err(err)?;
                Kind::Exp(t, q, o)
            }
            "geometric_rw" => {
                let (t, q, o) = models::make_geometric_rw(scale).map_err(err)?;
                Kind::Geometric(t, q, o)
            }
            "probit" => {
                let data = match probit_data {
                    Some(path) => rbmh::probit::load_pima(path, &Default::default()).map_err(err)?,
                    None => ProbitData::synthetic(probit_n, [0.3, 0.8], seed).map_err(err)?,
                };
                let (t, q) = make_probit(data, scale).map_err(err)?;
                Kind::Probit(Box::new(t), q)
            }
            other => return Err(PyValueError::new_err(format!("unknown model: {other}"))),
        };
        Ok(Self { kind, name: name.to_string(), scale })
    }

    #[getter]
    fn name(&self) -> &str {
        &self.name
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.scale
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, {})", self.name, self.scale)
    }

    /// Run `n` iterations from `x0`. Proposals are recorded when
    /// `record_draws` is set, which reuse-mode weights require.
    #[pyo3(signature = (x0, n, seed, record_draws=true))]
    fn run_chain(&self, x0: &Bound<'_, PyAny>, n: usize, seed: u64, record_draws: bool) -> PyResult<Chain> {
        let options = ChainOptions { record_draws };
        let record = match &self.kind {
            Kind::Gaussian(t, q) => Record::Real(run_chain_with(t, q, extract_real(x0)?, n, seed, options).map_err(err)?),
            Kind::Cauchy(t, q) => Record::Real(run_chain_with(t, q, extract_real(x0)?, n, seed, options).map_err(err)?),
            Kind::Exp(t, q, _) => Record::Real(run_chain_with(t, q, extract_real(x0)?, n, seed, options).map_err(err)?),
            Kind::Geometric(t, q, _) => {
                Record::Count(run_chain_with(t, q, extract_count(x0)?, n, seed, options).map_err(err)?)
            }
            Kind::Probit(t, q) => {
                Record::Coef(run_chain_with(t.as_ref(), q, extract_coef(x0)?, n, seed, options).map_err(err)?)
            }
        };
        Ok(Chain { model: self.clone(), record })
    }

    /// Acceptance probability of a move from `x` to `y`.
    fn acceptance_prob(&self, x: &Bound<'_, PyAny>, y: &Bound<'_, PyAny>) -> PyResult<f64> {
        match &self.kind {
            Kind::Gaussian(t, q) => acceptance_prob(&extract_real(x)?, &extract_real(y)?, t, q),
            Kind::Cauchy(t, q) => acceptance_prob(&extract_real(x)?, &extract_real(y)?, t, q),
            Kind::Exp(t, q, _) => acceptance_prob(&extract_real(x)?, &extract_real(y)?, t, q),
            Kind::Geometric(t, q, _) => acceptance_prob(&extract_count(x)?, &extract_count(y)?, t, q),
            Kind::Probit(t, q) => acceptance_prob(&extract_coef(x)?, &extract_coef(y)?, t.as_ref(), q),
        }
        .map_err(err)
    }

    /// `n` independent estimates of `1/p(z)` of order `k` ("inf" or an integer).
    #[pyo3(signature = (z, k="inf", n=1, seed=0))]
    fn xi_hat(&self, z: &Bound<'_, PyAny>, k: &str, n: usize, seed: u64) -> PyResult<Vec<f64>> {
        let order = parse_order(k)?;
        match &self.kind {
            Kind::Gaussian(t, q) => xi_samples(&extract_real(z)?, order, t, q, n, seed),
            Kind::Cauchy(t, q) => xi_samples(&extract_real(z)?, order, t, q, n, seed),
            Kind::Exp(t, q, _) => xi_samples(&extract_real(z)?, order, t, q, n, seed),
            Kind::Geometric(t, q, _) => xi_samples(&extract_count(z)?, order, t, q, n, seed),
            Kind::Probit(t, q) => xi_samples(&extract_coef(z)?, order, t.as_ref(), q, n, seed),
        }
    }

    /// Exact acceptance probability `p(x)`; only exp_independence and geometric_rw have one.
    fn p(&self, x: &Bound<'_, PyAny>) -> PyResult<f64> {
        match &self.kind {
            Kind::Exp(_, _, o) => Ok(o.p_exact(&extract_real(x)?)),
            Kind::Geometric(_, _, o) => Ok(o.p_exact(&extract_count(x)?)),
            _ => Err(PyValueError::new_err(format!("{} has no closed-form p", self.name))),
        }
    }

    /// Exact second moment `r(x)` of the acceptance probability.
    fn r(&self, x: &Bound<'_, PyAny>) -> PyResult<f64> {
        match &self.kind {
            Kind::Exp(_, _, o) => Ok(o.r_exact(&extract_real(x)?)),
            Kind::Geometric(_, _, o) => Ok(o.r_exact(&extract_count(x)?)),
            _ => Err(PyValueError::new_err(format!("{} has no closed-form r", self.name))),
        }
    }

    /// Maximum-likelihood fit of a probit model: (coefficients, standard errors).
    fn mle(&self) -> PyResult<([f64; 2], [f64; 2])> {
        match &self.kind {
            Kind::Probit(t, _) => {
                let fit = fit_mle(&t.data).map_err(err)?;
                Ok((fit.beta, fit.standard_errors))
            }
            _ => Err(PyValueError::new_err("mle is only defined for probit")),
        }
    }
}

/// A recorded chain and its accepted-state blocks.
#[pyclass(module = "rbmh_py", unsendable)]
struct Chain {
    model: Model,
    record: Record,
}

macro_rules! with_record {
    ($record:expr, |$c:ident| $body:expr) => {
        match $record {
            Record::Real($c) => $body,
            Record::Count($c) => $body,
            Record::Coef($c) => $body,
        }
    };
}

fn accounting_dict<'py>(py: Python<'py>, acc: &WeightAccounting) -> PyResult<Bound<'py, PyDict>> {
    let by_order = |m: &BTreeMap<WeightOrder, u64>| -> BTreeMap<String, u64> {
        m.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    };
    let d = PyDict::new(py);
    d.set_item("fresh_proposals", by_order(&acc.fresh_proposals))?;
    d.set_item("proposals_used", by_order(&acc.proposals_used))?;
    d.set_item("truncated", by_order(&acc.truncated))?;
    d.set_item("control_variate_draws", acc.control_variate_draws)?;
    Ok(d)
}

#[pymethods]
impl Chain {
    /// Path length `N`.
    fn __len__(&self) -> usize {
        with_record!(&self.record, |c| c.n())
    }

    /// The full path `x_1..x_N`.
    fn path<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        with_record!(&self.record, |c| c.path.clone().into_pyobject(py).map(Bound::into_any))
    }

    /// Accepted states, the trailing partial block included.
    fn accepted_states<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        with_record!(&self.record, |c| c
            .blocks
            .iter()
            .map(|b| b.z)
            .collect::<Vec<_>>()
            .into_pyobject(py)
            .map(Bound::into_any))
    }

    /// Occupation counts, one per accepted state.
    fn occupations(&self) -> Vec<u64> {
        with_record!(&self.record, |c| c.blocks.iter().map(|b| b.n_occupation).collect())
    }

    /// Number of complete blocks (all but the trailing one).
    #[getter]
    fn complete_blocks(&self) -> usize {
        with_record!(&self.record, |c| c.m_n)
    }

    #[getter]
    fn acceptance_rate(&self) -> f64 {
        with_record!(&self.record, |c| c.acceptance_rate)
    }

    /// Attach weight estimates of the given orders to every block.
    /// Returns the proposal accounting.
    #[pyo3(signature = (orders, mode="reuse", control_variate=false))]
    fn attach_weights<'py>(
        &mut self,
        py: Python<'py>,
        orders: Vec<String>,
        mode: &str,
        control_variate: bool,
    ) -> PyResult<Bound<'py, PyDict>> {
        let orders = orders.iter().map(|s| parse_order(s)).collect::<PyResult<Vec<_>>>()?;
        let mode: DrawMode = mode.parse().map_err(err)?;
        let base = WeightSpec::new(WeightOrder::Infinite);
        let acc = match (&mut self.record, &self.model.kind) {
            (Record::Real(c), Kind::Gaussian(t, q)) => weights::attach_weights(c, &orders, &base, mode, control_variate, t, q),
            (Record::Real(c), Kind::Cauchy(t, q)) => weights::attach_weights(c, &orders, &base, mode, control_variate, t, q),
            (Record::Real(c), Kind::Exp(t, q, _)) => weights::attach_weights(c, &orders, &base, mode, control_variate, t, q),
            (Record::Count(c), Kind::Geometric(t, q, _)) => {
                weights::attach_weights(c, &orders, &base, mode, control_variate, t, q)
            }
            (Record::Coef(c), Kind::Probit(t, q)) => {
                weights::attach_weights(c, &orders, &base, mode, control_variate, t.as_ref(), q)
            }
            _ => return Err(PyRuntimeError::new_err("chain and model disagree on the state type")),
        }
        .map_err(err)?;
        accounting_dict(py, &acc)
    }

    /// Weights of order `k`, one per block; None where not attached.
    fn weights(&self, k: &str) -> PyResult<Vec<Option<f64>>> {
        let order = parse_order(k)?;
        Ok(with_record!(&self.record, |c| c.blocks.iter().map(|b| b.weight(order)).collect()))
    }

    /// Plain and weighted estimates of E[h(X)] over all blocks.
    ///
    /// `h` is called once per accepted state. Returns a dict with key
    /// "delta" and one key per requested order.
    #[pyo3(signature = (h, orders=Vec::new()))]
    fn estimate<'py>(&self, py: Python<'py>, h: &Bound<'py, PyAny>, orders: Vec<String>) -> PyResult<Bound<'py, PyDict>> {
        let values: Vec<f64> = with_record!(&self.record, |c| c
            .blocks
            .iter()
            .map(|b| h.call1((b.z,))?.extract::<f64>())
            .collect::<PyResult<Vec<_>>>())?;
        let counts: Vec<f64> = self.occupations().into_iter().map(|n| n as f64).collect();
        let out = PyDict::new(py);
        out.set_item("delta", weighted_mean(&counts, &values).map_err(err)?)?;
        for k in orders {
            let w = self
                .weights(&k)?
                .into_iter()
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| PyValueError::new_err(format!("weights of order {k} are not attached")))?;
            out.set_item(k, weighted_mean(&w, &values).map_err(err)?)?;
        }
        Ok(out)
    }
}

/// Closed-form variance of the order-`k` weight estimate for acceptance
/// moments `p`, `r`; `k="inf"` gives the untruncated estimator.
#[pyfunction]
#[pyo3(signature = (p, r, k="inf"))]
fn var_xi_closed(p: f64, r: f64, k: &str) -> PyResult<f64> {
    let pr = PRPair::new(p, r).map_err(err)?;
    Ok(weights::var_xi_closed(pr, parse_order(k)?))
}

#[pyfunction]
fn geometric_gain_absolute(beta: f64) -> f64 {
    models::geometric_gain_absolute(beta)
}

#[pyfunction]
fn geometric_gain_relative(beta: f64) -> f64 {
    models::geometric_gain_relative(beta)
}

/// (argmax, maximum) of the absolute gain over beta in (0, 1).
#[pyfunction]
fn geometric_gain_optimum() -> (f64, f64) {
    models::geometric_gain_optimum()
}

/// Run an experiment from a TOML configuration; returns (report_json, timing_json).
#[pyfunction]
#[pyo3(signature = (config_toml, seed=None, threads=None))]
fn run_experiment(py: Python<'_>, config_toml: &str, seed: Option<u64>, threads: Option<usize>) -> PyResult<(String, String)> {
    let mut cfg = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    if threads.is_some() {
        cfg.threads = threads;
    }
    cfg.validate().map_err(err)?;
    let (report, timing) = py.detach(|| experiment::run_experiment(&cfg)).map_err(err)?;
    let timing = serde_json::to_string_pretty(&timing).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((experiment::report_json(&report).map_err(err)?, timing))
}

/// Built-in oracle checks as (name, passed, detail) tuples.
#[pyfunction]
#[pyo3(signature = (seed=2024))]
fn selftest(seed: u64) -> Vec<(String, bool, String)> {
    rbmh::selftest::run_selftest(seed)
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect()
}

#[pymodule]
fn rbmh_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Chain>()?;
    m.add_function(wrap_pyfunction!(var_xi_closed, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_gain_absolute, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_gain_relative, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_gain_optimum, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(selftest, m)?)?;
    Ok(())
}
