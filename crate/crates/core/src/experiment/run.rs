use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ModelName, TestFunction};
use crate::error::{Error, Result};
use crate::estimators::{cv_components, variance_ratio, weighted_mean, CvEstimate, ExactSum};
use crate::mh::{run_chain_with, ChainOptions, Proposal, Target};
use crate::models::{
    make_cauchy_independence, make_exp_independence, make_gaussian_rw, make_geometric_rw, AnalyticOracle,
};
use crate::probit::{fit_mle, load_pima, make_probit, PimaColumns, ProbitData};
use crate::rng::{ChainStreams, Purpose, StreamRng};
use crate::state::State;
use crate::stats::{self, pooled_ratio_jackknife, sign_test_below_one, Moments, SignTest};
use crate::weights::{attach_weights, DrawMode, WeightAccounting, WeightOrder, WeightSpec};

/// One variance-ratio cell: pooled variance of an estimator's per-block terms over that of a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioCell {
    pub h: String,
    /// `k=<order>`, `oracle` or `cv`.
    pub estimator: String,
    /// `delta` (occupation counts) or, for `cv`, the highest weight order.
    pub reference: String,
    pub ratio: Option<f64>,
    /// Jackknife standard error over replications.
    pub se: Option<f64>,
    /// Sign test on per-replication ratios.
    pub sign_test: Option<SignTest>,
    pub replications_used: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    /// Replications that produced a value.
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Accounting {
    /// `R (N - 1)` transitions along the paths.
    pub path_proposals: u64,
    pub blocks: u64,
    pub complete_blocks: u64,
    pub weight_fresh_proposals: BTreeMap<WeightOrder, u64>,
    pub weight_proposals_used: BTreeMap<WeightOrder, u64>,
    pub truncated_weights: BTreeMap<WeightOrder, u64>,
    /// Fresh weight proposals per accepted state.
    pub extra_per_block: BTreeMap<WeightOrder, f64>,
    pub control_variate_draws: u64,
    /// Path proposals plus every fresh weight proposal plus control-variate draws.
    pub total_proposals: u64,
}

/// Per-iteration band of a running estimate across replications.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub min: Vec<f64>,
    pub q05: Vec<f64>,
    pub q95: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSet {
    pub h: String,
    /// Keyed by `delta` and `k=<order>`.
    pub estimators: BTreeMap<String, Envelope>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub scale: f64,
    pub label: String,
    pub mean_acceptance_rate: f64,
    pub mean_complete_blocks: f64,
    pub cells: Vec<RatioCell>,
    /// Per test function and estimator, the estimate of every replication (`null` when undefined).
    pub estimates: BTreeMap<String, BTreeMap<String, Vec<Option<f64>>>>,
    pub summary: BTreeMap<String, BTreeMap<String, EstimatorSummary>>,
    /// Fitted control-variate slopes per replication, for each test function.
    pub cv_coefficients: BTreeMap<String, Vec<Option<f64>>>,
    pub accounting: Accounting,
    pub envelopes: Option<EnvelopeSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbitFitSummary {
    pub observations: usize,
    pub mle: [f64; 2],
    pub standard_errors: [f64; 2],
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub scale_name: String,
    pub probit_fit: Option<ProbitFitSummary>,
    pub scales: Vec<ScaleReport>,
}

/// Wall-clock times, kept apart from the report so that the report stays reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub threads: usize,
    pub total_seconds: f64,
    /// Per scale label: median and mean seconds per replication.
    pub per_replication: BTreeMap<String, (f64, f64)>,
}

struct Terms {
    moments: Moments,
    values: Vec<f64>,
}

impl Terms {
    fn new(values: Vec<f64>) -> Self {
        Terms {
            moments: Moments::from_values(&values),
            values,
        }
    }
}

struct TestOutcome {
    delta: f64,
    delta_k: BTreeMap<WeightOrder, Option<f64>>,
    oracle: Option<f64>,
    cv: Option<CvEstimate>,
    base: Terms,
    by_order: BTreeMap<WeightOrder, Terms>,
    oracle_terms: Option<Terms>,
    cv_terms: Option<Terms>,
}

struct Replication {
    acceptance_rate: f64,
    complete_blocks: usize,
    blocks: usize,
    tests: Vec<TestOutcome>,
    accounting: WeightAccounting,
    traces: Option<BTreeMap<String, Vec<f64>>>,
    seconds: f64,
}

fn order_key(order: WeightOrder) -> String {
    format!("k={order}")
}

struct ScaleContext<'a, S> {
    cfg: &'a ExperimentConfig,
    tests: &'a [TestFunction],
    orders: &'a [WeightOrder],
    oracle: Option<&'a dyn AnalyticOracle<S>>,
    x0: Option<S>,
    init: &'a (dyn Fn(&mut StreamRng) -> S + Sync),
}

fn replicate<S, T, P>(ctx: &ScaleContext<'_, S>, target: &T, proposal: &P, r: usize) -> Result<Replication>
where
    S: State,
    T: Target<S> + Sync,
    P: Proposal<S> + Sync,
{
    let started = Instant::now();
    let cfg = ctx.cfg;
    let seed = cfg.seed.unwrap_or(0).wrapping_add(r as u64);
    let x0 = match &ctx.x0 {
        Some(x) => x.clone(),
        None => (ctx.init)(&mut ChainStreams::new(seed).stream(Purpose::Init)),
    };
    let options = ChainOptions {
        record_draws: cfg.weight_draws == DrawMode::Reuse,
    };
    let mut chain = run_chain_with(target, proposal, x0, cfg.iterations, seed, options)?;
    let needs_draw = cfg.control_variate || ctx.tests.iter().any(TestFunction::needs_leaving_draw);
    let base_spec = WeightSpec {
        order: WeightOrder::Infinite,
        max_proposals: cfg.max_proposals,
        product_floor: cfg.product_floor,
    };
    let accounting = attach_weights(&mut chain, ctx.orders, &base_spec, cfg.weight_draws, needs_draw, target, proposal)?;
    chain.draws = None;

    let n = chain.n();
    let m_n = chain.m_n;
    let coords: Vec<Vec<f64>> = chain.blocks.iter().map(|b| b.z.coords()).collect();
    let counts: Vec<f64> = chain.blocks.iter().map(|b| b.n_occupation as f64).collect();
    let top = ctx.orders.iter().max().copied();
    let mut tests = Vec::with_capacity(ctx.tests.len());
    let mut traces = None;

    for (ti, h) in ctx.tests.iter().enumerate() {
        let values: Vec<f64> = chain
            .blocks
            .iter()
            .zip(&coords)
            .map(|(b, x)| h.eval(x, b.cv_draw))
            .collect();
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::NotANumber { what: "test function" });
        }
        let mut sum = ExactSum::new();
        for (c, v) in counts.iter().zip(&values) {
            sum.add_product(*c, *v);
        }
        let delta = sum.value() / n as f64;

        let cvalues = &values[..m_n];
        let base = Terms::new(counts[..m_n].iter().zip(cvalues).map(|(c, v)| c * v).collect());
        let mut delta_k = BTreeMap::new();
        let mut by_order = BTreeMap::new();
        let mut weights_by_order = BTreeMap::new();
        for &order in ctx.orders {
            let w: Vec<f64> = chain.blocks[..m_n]
                .iter()
                .map(|b| b.weight(order).unwrap_or(f64::NAN))
                .collect();
            let est = if m_n > 0 { Some(weighted_mean(&w, cvalues)?) } else { None };
            delta_k.insert(order, est);
            by_order.insert(order, Terms::new(w.iter().zip(cvalues).map(|(a, b)| a * b).collect()));
            weights_by_order.insert(order, w);
        }
        let (oracle, oracle_terms) = match ctx.oracle {
            Some(o) if cfg.oracle => {
                let w: Vec<f64> = chain.blocks[..m_n].iter().map(|b| 1.0 / o.p_exact(&b.z)).collect();
                let est = if m_n > 0 { Some(weighted_mean(&w, cvalues)?) } else { None };
                (est, Some(Terms::new(w.iter().zip(cvalues).map(|(a, b)| a * b).collect())))
            }
            _ => (None, None),
        };
        let (cv, cv_terms) = match top {
            Some(order) if cfg.control_variate && m_n >= 2 => {
                let w = &weights_by_order[&order];
                let controls: Vec<f64> = chain.blocks[..m_n].iter().map(|b| b.cv_draw.unwrap_or(f64::NAN)).collect();
                let (residuals, coefficient, fallback) = cv_components(w, &controls, cvalues)?;
                let den: ExactSum = w.iter().copied().collect();
                let num: ExactSum = residuals.iter().copied().collect();
                let est = CvEstimate {
                    value: num.value() / den.value(),
                    coefficient,
                    fallback,
                };
                (Some(est), Some(Terms::new(residuals)))
            }
            _ => (None, None),
        };

        if ti == 0 && cfg.envelopes {
            traces = Some(running_traces(&chain.blocks, &values, ctx.orders, n));
        }

        tests.push(TestOutcome {
            delta,
            delta_k,
            oracle,
            cv,
            base,
            by_order,
            oracle_terms,
            cv_terms,
        });
    }

    Ok(Replication {
        acceptance_rate: chain.acceptance_rate,
        complete_blocks: m_n,
        blocks: chain.m(),
        tests,
        accounting,
        traces,
        seconds: started.elapsed().as_secs_f64(),
    })
}

/// Running estimates after each of the `n` path states.
///
/// The plain estimate averages the path; the weighted ones use every block
/// entered so far, the current one included.
fn running_traces<S>(
    blocks: &[crate::mh::AcceptedBlock<S>],
    values: &[f64],
    orders: &[WeightOrder],
    n: usize,
) -> BTreeMap<String, Vec<f64>> {
    let mut out = BTreeMap::new();
    let mut plain = Vec::with_capacity(n);
    let mut sum = 0.0;
    for (b, v) in blocks.iter().zip(values) {
        for _ in 0..b.n_occupation {
            if plain.len() == n {
                break;
            }
            sum += v;
            plain.push(sum / (plain.len() + 1) as f64);
        }
    }
    out.insert("delta".to_string(), plain);
    for &order in orders {
        let mut trace = Vec::with_capacity(n);
        let (mut num, mut den) = (0.0, 0.0);
        for (b, v) in blocks.iter().zip(values) {
            let w = b.weight(order).unwrap_or(f64::NAN);
            num += w * v;
            den += w;
            for _ in 0..b.n_occupation {
                if trace.len() == n {
                    break;
                }
                trace.push(num / den);
            }
        }
        out.insert(order_key(order), trace);
    }
    out
}

fn ratio_cell<'a>(
    h: &str,
    estimator: String,
    reference: String,
    pairs: impl Iterator<Item = (&'a Terms, &'a Terms)>,
) -> Result<RatioCell> {
    let mut groups = Vec::new();
    let mut per_replication = Vec::new();
    for (num, den) in pairs {
        groups.push((num.moments, den.moments));
        if let Ok(r) = variance_ratio(&num.values, &den.values) {
            per_replication.push(r);
        }
    }
    let pooled = pooled_ratio_jackknife(&groups);
    let sign_test = if per_replication.is_empty() {
        None
    } else {
        Some(sign_test_below_one(&per_replication)?)
    };
    Ok(RatioCell {
        h: h.to_string(),
        estimator,
        reference,
        ratio: pooled.map(|p| p.0),
        se: pooled.and_then(|p| p.1),
        sign_test,
        replications_used: per_replication.len(),
    })
}

fn summarize(values: &[Option<f64>]) -> EstimatorSummary {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    EstimatorSummary {
        mean: stats::mean(&present),
        variance: stats::variance(&present),
        count: present.len(),
    }
}

fn band(traces: &[&Vec<f64>]) -> Envelope {
    let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    let mut env = Envelope::default();
    let mut column = Vec::with_capacity(traces.len());
    for t in 0..len {
        column.clear();
        column.extend(traces.iter().map(|tr| tr[t]));
        column.sort_by(f64::total_cmp);
        env.min.push(column[0]);
        env.q05.push(stats::quantile(&column, 0.05).unwrap_or(f64::NAN));
        env.q95.push(stats::quantile(&column, 0.95).unwrap_or(f64::NAN));
        env.max.push(column[column.len() - 1]);
    }
    env
}

fn scale_label(model: ModelName, scale: f64) -> String {
    format!("{}={}", model.scale_name(), scale)
}

fn run_scale<S, T, P>(
    ctx: &ScaleContext<'_, S>,
    target: &T,
    proposal: &P,
    scale: f64,
    pool: &rayon::ThreadPool,
) -> Result<(ScaleReport, (f64, f64))>
where
    S: State,
    T: Target<S> + Sync,
    P: Proposal<S> + Sync,
{
    let cfg = ctx.cfg;
    let results: Vec<Result<Replication>> =
        pool.install(|| (0..cfg.replications).into_par_iter().map(|r| replicate(ctx, target, proposal, r)).collect());
    let reps: Vec<Replication> = results.into_iter().collect::<Result<_>>()?;
    let r = reps.len() as f64;

    let mut cells = Vec::new();
    let mut estimates = BTreeMap::new();
    let mut summary = BTreeMap::new();
    let mut cv_coefficients = BTreeMap::new();
    let top = ctx.orders.iter().max().copied();
    for (ti, name) in cfg.h.iter().enumerate() {
        let outcomes: Vec<&TestOutcome> = reps.iter().map(|rep| &rep.tests[ti]).collect();
        let mut per: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
        per.insert("delta".into(), outcomes.iter().map(|o| Some(o.delta)).collect());
        for &order in ctx.orders {
            per.insert(order_key(order), outcomes.iter().map(|o| o.delta_k[&order]).collect());
            if order != WeightOrder::Finite(0) || ctx.orders.len() == 1 {
                cells.push(ratio_cell(
                    name,
                    order_key(order),
                    "delta".into(),
                    outcomes.iter().map(|o| (&o.by_order[&order], &o.base)),
                )?);
            }
        }
        if cfg.oracle {
            per.insert("oracle".into(), outcomes.iter().map(|o| o.oracle).collect());
            cells.push(ratio_cell(
                name,
                "oracle".into(),
                "delta".into(),
                outcomes.iter().filter_map(|o| o.oracle_terms.as_ref().map(|t| (t, &o.base))),
            )?);
        }
        if cfg.control_variate {
            let top = top.expect("orders are nonempty");
            per.insert("cv".into(), outcomes.iter().map(|o| o.cv.map(|c| c.value)).collect());
            cv_coefficients.insert(
                name.clone(),
                outcomes.iter().map(|o| o.cv.filter(|c| !c.fallback).map(|c| c.coefficient)).collect(),
            );
            cells.push(ratio_cell(
                name,
                "cv".into(),
                order_key(top),
                outcomes.iter().filter_map(|o| o.cv_terms.as_ref().map(|t| (t, &o.by_order[&top]))),
            )?);
        }
        summary.insert(name.clone(), per.iter().map(|(k, v)| (k.clone(), summarize(v))).collect());
        estimates.insert(name.clone(), per);
    }

    let mut accounting = Accounting {
        path_proposals: reps.len() as u64 * (cfg.iterations as u64 - 1),
        ..Default::default()
    };
    for rep in &reps {
        accounting.blocks += rep.blocks as u64;
        accounting.complete_blocks += rep.complete_blocks as u64;
        accounting.control_variate_draws += rep.accounting.control_variate_draws;
        for (k, v) in &rep.accounting.fresh_proposals {
            *accounting.weight_fresh_proposals.entry(*k).or_default() += v;
        }
        for (k, v) in &rep.accounting.proposals_used {
            *accounting.weight_proposals_used.entry(*k).or_default() += v;
        }
        for (k, v) in &rep.accounting.truncated {
            *accounting.truncated_weights.entry(*k).or_default() += v;
        }
    }
    for (k, v) in &accounting.weight_fresh_proposals {
        accounting.extra_per_block.insert(*k, *v as f64 / accounting.blocks as f64);
    }
    accounting.total_proposals = accounting.path_proposals
        + accounting.weight_fresh_proposals.values().sum::<u64>()
        + accounting.control_variate_draws;

    let envelopes = if cfg.envelopes {
        let traces: Vec<&BTreeMap<String, Vec<f64>>> = reps.iter().filter_map(|rep| rep.traces.as_ref()).collect();
        let keys: Vec<String> = traces.first().map(|t| t.keys().cloned().collect()).unwrap_or_default();
        let estimators = keys
            .into_iter()
            .map(|key| {
                let columns: Vec<&Vec<f64>> = traces.iter().map(|t| &t[&key]).collect();
                (key, band(&columns))
            })
            .collect();
        Some(EnvelopeSet {
            h: cfg.h[0].clone(),
            estimators,
        })
    } else {
        None
    };

    let mut seconds: Vec<f64> = reps.iter().map(|rep| rep.seconds).collect();
    seconds.sort_by(f64::total_cmp);
    let timing = (stats::quantile(&seconds, 0.5).unwrap_or(0.0), stats::mean(&seconds).unwrap_or(0.0));

    Ok((
        ScaleReport {
            scale,
            label: scale_label(cfg.model, scale),
            mean_acceptance_rate: reps.iter().map(|rep| rep.acceptance_rate).sum::<f64>() / r,
            mean_complete_blocks: reps.iter().map(|rep| rep.complete_blocks as f64).sum::<f64>() / r,
            cells,
            estimates,
            summary,
            cv_coefficients,
            accounting,
            envelopes,
        },
        timing,
    ))
}

/// Data set for a probit configuration: synthetic from the base seed, or loaded from a file.
pub fn probit_data(cfg: &ExperimentConfig) -> Result<ProbitData> {
    if cfg.probit_data == "synthetic" {
        ProbitData::synthetic(cfg.probit_synthetic_n, cfg.probit_synthetic_beta, cfg.seed.unwrap_or(0))
    } else {
        let columns = PimaColumns {
            bmi: cfg.bmi_column.clone(),
            outcome: cfg.outcome_column.clone(),
        };
        load_pima(Path::new(&cfg.probit_data), &columns)
    }
}

fn scalar_x0(cfg: &ExperimentConfig) -> Option<f64> {
    cfg.x0.as_ref().map(|x| x[0])
}

/// Run every scale of `cfg` and return the report and wall-clock timings.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(ExperimentReport, TimingReport)> {
    cfg.validate()?;
    let started = Instant::now();
    let threads = cfg.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
    let tests = cfg.test_functions()?;
    let orders = cfg.orders();
    let mut scales = Vec::with_capacity(cfg.scales.len());
    let mut per_replication = BTreeMap::new();
    let mut probit_fit = None;

    let data = if cfg.model == ModelName::Probit { Some(probit_data(cfg)?) } else { None };
    let mle = match &data {
        Some(d) => {
            let fit = fit_mle(d)?;
            probit_fit = Some(ProbitFitSummary {
                observations: d.len(),
                mle: fit.beta,
                standard_errors: fit.standard_errors,
                iterations: fit.iterations,
            });
            Some(fit.beta)
        }
        None => None,
    };

    for &scale in &cfg.scales {
        let (report, timing) = match cfg.model {
            ModelName::GaussianRw => {
                let (t, q) = make_gaussian_rw(scale)?;
                let init = |rng: &mut StreamRng| rng.sample::<f64, _>(rand_distr::StandardNormal);
                let ctx = ScaleContext { cfg, tests: &tests, orders: &orders, oracle: None, x0: scalar_x0(cfg), init: &init };
                run_scale(&ctx, &t, &q, scale, &pool)?
            }
            ModelName::CauchyIndependence => {
                let (t, q) = make_cauchy_independence(scale)?;
                let init = |rng: &mut StreamRng| rng.sample::<f64, _>(rand_distr::StandardNormal);
                let ctx = ScaleContext { cfg, tests: &tests, orders: &orders, oracle: None, x0: scalar_x0(cfg), init: &init };
                run_scale(&ctx, &t, &q, scale, &pool)?
            }
            ModelName::ExpIndependence => {
                let (t, q, o) = make_exp_independence(cfg.lambda, scale)?;
                let init = |rng: &mut StreamRng| t.sample(rng);
                let ctx = ScaleContext { cfg, tests: &tests, orders: &orders, oracle: Some(&o), x0: scalar_x0(cfg), init: &init };
                run_scale(&ctx, &t, &q, scale, &pool)?
            }
            ModelName::GeometricRw => {
                let (t, q, o) = make_geometric_rw(scale)?;
                let init = |rng: &mut StreamRng| t.sample(rng);
                let x0 = match &cfg.x0 {
                    Some(x) if x[0] >= 0.0 && x[0].fract() == 0.0 => Some(x[0] as u64),
                    Some(x) => return Err(Error::invalid("x0", x[0], "geometric states are nonnegative integers")),
                    None => None,
                };
                let ctx = ScaleContext { cfg, tests: &tests, orders: &orders, oracle: Some(&o), x0, init: &init };
                run_scale(&ctx, &t, &q, scale, &pool)?
            }
            ModelName::Probit => {
                let data = data.clone().expect("loaded above");
                let (t, q) = make_probit(data, scale)?;
                let start = match &cfg.x0 {
                    Some(x) => [x[0], x[1]],
                    None => mle.expect("fitted above"),
                };
                let init = move |_: &mut StreamRng| start;
                let ctx = ScaleContext { cfg, tests: &tests, orders: &orders, oracle: None, x0: Some(start), init: &init };
                run_scale(&ctx, &t, &q, scale, &pool)?
            }
        };
        per_replication.insert(report.label.clone(), timing);
        scales.push(report);
    }

    let report = ExperimentReport {
        config: cfg.clone(),
        seed: cfg.seed.unwrap_or(0),
        scale_name: cfg.model.scale_name().to_string(),
        probit_fit,
        scales,
    };
    let timing = TimingReport {
        threads,
        total_seconds: started.elapsed().as_secs_f64(),
        per_replication,
    };
    Ok((report, timing))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(model: ModelName, scales: Vec<f64>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(model, scales);
        cfg.seed = Some(11);
        cfg.replications = 20;
        cfg.iterations = 60;
        cfg.threads = Some(2);
        cfg
    }

    #[test]
    fn single_replication_single_state_does_not_crash() {
        let mut cfg = small(ModelName::GaussianRw, vec![2.0]);
        cfg.replications = 1;
        cfg.iterations = 1;
        cfg.control_variate = true;
        cfg.h = vec!["x".into(), "p".into()];
        let (report, _) = run_experiment(&cfg).unwrap();
        let scale = &report.scales[0];
        assert!(scale.cells.iter().all(|c| c.ratio.is_none()));
        assert_eq!(scale.accounting.path_proposals, 0);
        let env = scale.envelopes.as_ref().unwrap();
        assert_eq!(env.estimators["delta"].min.len(), 1);
        assert_eq!(env.estimators["delta"].min, env.estimators["delta"].max);
    }

    #[test]
    fn accounting_balances() {
        let mut cfg = small(ModelName::ExpIndependence, vec![0.5]);
        cfg.k = vec![WeightOrder::Finite(3), WeightOrder::Infinite];
        cfg.control_variate = true;
        cfg.oracle = true;
        let (report, _) = run_experiment(&cfg).unwrap();
        let a = &report.scales[0].accounting;
        assert_eq!(a.path_proposals, 20 * 59);
        assert_eq!(a.control_variate_draws, a.blocks);
        assert_eq!(
            a.total_proposals,
            a.path_proposals + a.weight_fresh_proposals.values().sum::<u64>() + a.control_variate_draws
        );
    }

    #[test]
    fn plain_estimates_match_path_average() {
        let cfg = small(ModelName::GeometricRw, vec![0.3]);
        let (report, _) = run_experiment(&cfg).unwrap();
        let (t, q, _) = make_geometric_rw(0.3).unwrap();
        let seed = 11;
        let x0: u64 = t.sample(&mut ChainStreams::new(seed).stream(Purpose::Init));
        let chain = crate::mh::run_chain(&t, &q, x0, 60, seed).unwrap();
        let expected = crate::estimators::delta_plain(&chain, |z| *z as f64).unwrap();
        assert_eq!(report.scales[0].estimates["x"]["delta"][0], Some(expected));
    }

    #[test]
    fn envelopes_have_one_point_per_iteration() {
        let mut cfg = small(ModelName::CauchyIndependence, vec![0.5, 1.0]);
        cfg.k = vec![WeightOrder::Finite(0), WeightOrder::Infinite];
        let (report, _) = run_experiment(&cfg).unwrap();
        for s in &report.scales {
            let env = s.envelopes.as_ref().unwrap();
            assert_eq!(env.estimators.len(), 3);
            for e in env.estimators.values() {
                assert_eq!(e.q05.len(), 60);
                assert!(e.min.iter().zip(&e.q05).all(|(a, b)| a <= b));
            }
        }
    }

    #[test]
    fn probit_runs_from_the_mle() {
        let mut cfg = small(ModelName::Probit, vec![0.2]);
        cfg.h = vec!["beta1".into(), "beta2>0.5".into()];
        cfg.control_variate = true;
        cfg.probit_synthetic_n = 100;
        let (report, _) = run_experiment(&cfg).unwrap();
        assert_eq!(report.probit_fit.as_ref().unwrap().observations, 100);
        assert!(report.scales[0].cells.iter().any(|c| c.estimator == "cv"));
    }
}
