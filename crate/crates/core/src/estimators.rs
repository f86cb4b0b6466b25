//! Point estimators of `E_pi[h]` built from a chain and its block weights.
//!
//! Sums go through [`ExactSum`], so the path form `(1/N) sum_t h(x_t)` and
//! the block form `(1/N) sum_i n_i h(z_i)` round to the same double.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mh::{AcceptedBlock, ChainRecord};
use crate::models::AnalyticOracle;
use crate::state::State;
use crate::weights::WeightOrder;

/// Correctly rounded floating-point summation (Shewchuk's partials).
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
    special: f64,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        if !value.is_finite() {
            self.special += value;
            return;
        }
        let mut x = value;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Adds the exact product `a * b` (error-free via fused multiply-add).
    pub fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        if !p.is_finite() {
            self.special += p;
            return;
        }
        let e = a.mul_add(b, -p);
        self.add(p);
        self.add(e);
    }

    pub fn value(&self) -> f64 {
        if self.special != 0.0 || self.special.is_nan() {
            return self.special;
        }
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // round half to even across the remaining partials
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = ExactSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}

fn checked(v: f64) -> Result<f64> {
    if v.is_nan() {
        Err(Error::NotANumber { what: "test function" })
    } else {
        Ok(v)
    }
}

/// `(1/N) sum_t h(x_t)` over the path.
pub fn delta_plain<S: State, H: Fn(&S) -> f64>(chain: &ChainRecord<S>, h: H) -> Result<f64> {
    if chain.path.is_empty() {
        return Err(Error::Empty("chain"));
    }
    let mut sum = ExactSum::new();
    for x in &chain.path {
        sum.add(checked(h(x))?);
    }
    Ok(sum.value() / chain.path.len() as f64)
}

/// `(1/N) sum_i n_i h(z_i)` over all blocks, trailing partial block included.
pub fn delta_plain_blocks<S, H: Fn(&S) -> f64>(blocks: &[AcceptedBlock<S>], h: H) -> Result<f64> {
    if blocks.is_empty() {
        return Err(Error::Empty("blocks"));
    }
    let mut sum = ExactSum::new();
    let mut n = 0u64;
    for b in blocks {
        sum.add_product(b.n_occupation as f64, checked(h(&b.z))?);
        n += b.n_occupation;
    }
    Ok(sum.value() / n as f64)
}

/// Self-normalised `sum w_i v_i / sum w_i`.
pub fn weighted_mean(weights: &[f64], values: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::Empty("blocks"));
    }
    if weights.len() != values.len() {
        return Err(Error::Degenerate(format!("{} weights for {} values", weights.len(), values.len())));
    }
    let mut num = ExactSum::new();
    let mut den = ExactSum::new();
    for (&w, &v) in weights.iter().zip(values) {
        if !(w >= 0.0) {
            return Err(Error::invalid("weight", w, "weights must be nonnegative"));
        }
        num.add_product(w, checked(v)?);
        den.add(w);
    }
    let d = den.value();
    if d <= 0.0 {
        return Err(Error::Degenerate("weights sum to zero".into()));
    }
    Ok(num.value() / d)
}

/// `delta^k_M = sum xi_i h(z_i) / sum xi_i`.
pub fn delta_k<S, H: Fn(&S) -> f64>(blocks: &[AcceptedBlock<S>], weights: &[f64], h: H) -> Result<f64> {
    if blocks.len() != weights.len() {
        return Err(Error::Degenerate(format!("{} weights for {} blocks", weights.len(), blocks.len())));
    }
    if let Some(w) = weights.iter().find(|&&w| !(w >= 1.0)) {
        return Err(Error::invalid("weight", w, "weight estimates are at least 1"));
    }
    let values: Vec<f64> = blocks.iter().map(|b| h(&b.z)).collect();
    weighted_mean(weights, &values)
}

/// Weights `1/p(z_i)` from an oracle.
pub fn oracle_weights<S>(blocks: &[AcceptedBlock<S>], oracle: &dyn AnalyticOracle<S>) -> Vec<f64> {
    blocks.iter().map(|b| 1.0 / oracle.p_exact(&b.z)).collect()
}

/// Importance-sampling estimator with the exact weights `1/p(z_i)`.
pub fn delta_oracle<S, H: Fn(&S) -> f64>(blocks: &[AcceptedBlock<S>], oracle: Option<&dyn AnalyticOracle<S>>, h: H) -> Result<f64> {
    let oracle = oracle.ok_or_else(|| Error::MissingOracle("delta_oracle".into()))?;
    let weights = oracle_weights(blocks, oracle);
    let values: Vec<f64> = blocks.iter().map(|b| h(&b.z)).collect();
    weighted_mean(&weights, &values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvEstimate {
    pub value: f64,
    /// Least-squares slope of `xi h` on `xi alpha`.
    pub coefficient: f64,
    /// The control had no spread; `value` is the plain weighted estimate.
    pub fallback: bool,
}

/// Per-block regression residuals `xi_i h_i - b (xi_i alpha_i - 1)` and the slope `b`.
pub fn cv_components(weights: &[f64], controls: &[f64], values: &[f64]) -> Result<(Vec<f64>, f64, bool)> {
    let n = weights.len();
    if n != controls.len() || n != values.len() {
        return Err(Error::Degenerate("weights, controls and values differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Empty("need at least two blocks for a regression"));
    }
    let a: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w * v).collect();
    let c: Vec<f64> = weights.iter().zip(controls).map(|(w, x)| w * x).collect();
    let ma = a.iter().sum::<f64>() / n as f64;
    let mc = c.iter().sum::<f64>() / n as f64;
    let scc: f64 = c.iter().map(|x| (x - mc) * (x - mc)).sum();
    let sac: f64 = a.iter().zip(&c).map(|(x, y)| (x - ma) * (y - mc)).sum();
    let scale = c.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if !(scc > 1e-24 * scale * scale * n as f64) {
        return Ok((a, 0.0, true));
    }
    let b = sac / scc;
    Ok((a.iter().zip(&c).map(|(x, y)| x - b * (y - 1.0)).collect(), b, false))
}

/// Regression-adjusted self-normalised estimator using `xi_i alpha(z_i, y0_i)`,
/// whose conditional mean is 1, as control.
pub fn delta_cv(weights: &[f64], controls: &[f64], values: &[f64]) -> Result<CvEstimate> {
    let (components, coefficient, fallback) = cv_components(weights, controls, values)?;
    let den: ExactSum = weights.iter().copied().collect();
    let num: ExactSum = components.iter().copied().collect();
    Ok(CvEstimate {
        value: num.value() / den.value(),
        coefficient,
        fallback,
    })
}

/// Control-variate estimator over blocks carrying `cv_draw` and a weight of `order`.
pub fn delta_cv_blocks<S, H: Fn(&S) -> f64>(blocks: &[AcceptedBlock<S>], order: WeightOrder, h: H) -> Result<CvEstimate> {
    let mut w = Vec::with_capacity(blocks.len());
    let mut c = Vec::with_capacity(blocks.len());
    let mut v = Vec::with_capacity(blocks.len());
    for b in blocks {
        w.push(b.weight(order).ok_or_else(|| Error::Degenerate(format!("block lacks weight k = {order}")))?);
        c.push(b.cv_draw.ok_or_else(|| Error::Degenerate("block lacks a control-variate draw".into()))?);
        v.push(h(&b.z));
    }
    delta_cv(&w, &c, &v)
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    Some(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

/// `Var(numerator terms) / Var(denominator terms)`.
pub fn variance_ratio(numerator: &[f64], denominator: &[f64]) -> Result<f64> {
    let (Some(a), Some(b)) = (sample_variance(numerator), sample_variance(denominator)) else {
        return Err(Error::Empty("need at least two blocks"));
    };
    if b == 0.0 {
        return Err(Error::Degenerate("reference terms have zero variance".into()));
    }
    Ok(a / b)
}

/// Empirical variance of `xi^k_i h(z_i)` over that of `n_i h(z_i)`.
pub fn component_variance_ratio<S, H: Fn(&S) -> f64>(blocks: &[AcceptedBlock<S>], h: H, order: WeightOrder) -> Result<f64> {
    let mut weighted = Vec::with_capacity(blocks.len());
    let mut counted = Vec::with_capacity(blocks.len());
    for b in blocks {
        let v = checked(h(&b.z))?;
        let w = b.weight(order).ok_or_else(|| Error::Degenerate(format!("block lacks weight k = {order}")))?;
        weighted.push(w * v);
        counted.push(b.n_occupation as f64 * v);
    }
    variance_ratio(&weighted, &counted)
}

/// Every estimator for one test function on one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSet {
    pub delta_plain: f64,
    pub delta_k: BTreeMap<WeightOrder, f64>,
    pub delta_oracle: Option<f64>,
    pub delta_cv: Option<CvEstimate>,
    /// Empirical variances of the per-block terms, keyed by estimator label.
    pub component_variances: BTreeMap<String, f64>,
}

/// Evaluate all estimators on `chain`.
///
/// `delta_plain` uses the whole path; weighted estimators use the complete
/// blocks only. The control-variate estimator uses the highest weight order
/// present and requires `cv_draw` on every complete block.
pub fn estimate_set<S: State, H: Fn(&S) -> f64>(
    chain: &ChainRecord<S>,
    orders: &[WeightOrder],
    oracle: Option<&dyn AnalyticOracle<S>>,
    h: H,
) -> Result<EstimateSet> {
    let blocks = chain.complete_blocks();
    let values: Vec<f64> = blocks.iter().map(|b| h(&b.z)).collect::<Vec<_>>();
    let mut delta_k = BTreeMap::new();
    let mut component_variances = BTreeMap::new();
    for &order in orders {
        let w: Vec<f64> = blocks
            .iter()
            .map(|b| b.weight(order).ok_or_else(|| Error::Degenerate(format!("block lacks weight k = {order}"))))
            .collect::<Result<_>>()?;
        if !blocks.is_empty() {
            delta_k.insert(order, weighted_mean(&w, &values)?);
        }
        let terms: Vec<f64> = w.iter().zip(&values).map(|(a, b)| a * b).collect();
        if let Some(v) = sample_variance(&terms) {
            component_variances.insert(format!("k={order}"), v);
        }
    }
    let delta_oracle = match oracle {
        Some(o) if !blocks.is_empty() => {
            let w = oracle_weights(blocks, o);
            let terms: Vec<f64> = w.iter().zip(&values).map(|(a, b)| a * b).collect();
            if let Some(v) = sample_variance(&terms) {
                component_variances.insert("oracle".into(), v);
            }
            Some(weighted_mean(&w, &values)?)
        }
        _ => None,
    };
    let delta_cv = match orders.iter().max() {
        Some(&order) if blocks.len() >= 2 && blocks.iter().all(|b| b.cv_draw.is_some()) => {
            let est = delta_cv_blocks(blocks, order, &h)?;
            let w: Vec<f64> = blocks.iter().map(|b| b.weight(order).unwrap_or(f64::NAN)).collect();
            let c: Vec<f64> = blocks.iter().map(|b| b.cv_draw.unwrap_or(f64::NAN)).collect();
            let (terms, _, _) = cv_components(&w, &c, &values)?;
            if let Some(v) = sample_variance(&terms) {
                component_variances.insert("cv".into(), v);
            }
            Some(est)
        }
        _ => None,
    };
    Ok(EstimateSet {
        delta_plain: delta_plain(chain, &h)?,
        delta_k,
        delta_oracle,
        delta_cv,
        component_variances,
    })
}
