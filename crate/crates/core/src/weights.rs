//! Rao–Blackwellised estimators of the inverse leaving probability `1/p(z)`.
//!
//! The occupation count `n` of an accepted state `z` is
//! `1 + sum_j prod_{l<=j} I{u_l >= alpha(z, y_l)}` for iid pairs `(y_l, u_l)`.
//! Integrating the first `k` indicators out given the `y`s yields
//!
//! ```text
//! xi^k = 1 + sum_j prod_{l <= min(j,k)} (1 - alpha(z, y_l)) prod_{k < l <= j} I{u_l >= alpha(z, y_l)}
//! ```
//!
//! which is unbiased for `1/p(z)` for every `k`, equals `n` at `k = 0`, and
//! has conditional variance nonincreasing in `k`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mh::{acceptance_from, checked_log_density, ChainRecord, Draw, Proposal, Target};
use crate::rng::{ChainStreams, Purpose};
use crate::state::State;

/// Number of leading indicators that are integrated out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WeightOrder {
    Finite(u32),
    Infinite,
}

impl WeightOrder {
    pub fn is_plain(self) -> bool {
        self == WeightOrder::Finite(0)
    }
}

impl fmt::Display for WeightOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightOrder::Finite(k) => write!(f, "{k}"),
            WeightOrder::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for WeightOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") || t == "∞" {
            return Ok(WeightOrder::Infinite);
        }
        t.parse::<u32>()
            .map(WeightOrder::Finite)
            .map_err(|_| Error::invalid("k", s, "expected a nonnegative integer or `inf`"))
    }
}

impl Serialize for WeightOrder {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WeightOrder::Finite(k) => s.serialize_u32(*k),
            WeightOrder::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for WeightOrder {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(WeightOrder::Finite(k)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

pub const DEFAULT_MAX_PROPOSALS: u64 = 1_000_000;
pub const DEFAULT_PRODUCT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub order: WeightOrder,
    /// Hard cap on proposals per estimate; hitting it sets `truncated`.
    pub max_proposals: u64,
    /// For `k = inf`: stop once the running product drops below this value.
    pub product_floor: f64,
}

impl WeightSpec {
    pub fn new(order: WeightOrder) -> Self {
        WeightSpec {
            order,
            max_proposals: DEFAULT_MAX_PROPOSALS,
            product_floor: DEFAULT_PRODUCT_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_proposals == 0 {
            return Err(Error::invalid("max_proposals", self.max_proposals, "must be positive"));
        }
        if let WeightOrder::Finite(k) = self.order {
            if self.max_proposals < k as u64 {
                return Err(Error::invalid("max_proposals", self.max_proposals, format!("must be at least k = {k}")));
            }
        }
        if !(0.0..1.0).contains(&self.product_floor) {
            return Err(Error::invalid("product_floor", self.product_floor, "must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightResult {
    pub xi: f64,
    pub proposals_used: u64,
    /// Proposals that had to be simulated (not replayed from the path).
    pub fresh_proposals: u64,
    pub truncated: bool,
}

/// Supplies the iid `(y_l, u_l)` sequence for one accepted state.
///
/// `uniform` always refers to the most recent proposal.
pub trait DrawSource<S> {
    fn proposal(&mut self) -> S;
    fn uniform(&mut self) -> f64;
    fn fresh_proposals(&self) -> u64;
}

/// Simulates every pair afresh from `q(.|z)`.
pub struct FreshDraws<'a, S, P, R: ?Sized> {
    z: &'a S,
    proposal: &'a P,
    rng: &'a mut R,
    fresh: u64,
}

impl<'a, S, P, R: Rng + ?Sized> FreshDraws<'a, S, P, R> {
    pub fn new(z: &'a S, proposal: &'a P, rng: &'a mut R) -> Self {
        FreshDraws {
            z,
            proposal,
            rng,
            fresh: 0,
        }
    }
}

impl<S, P: Proposal<S>, R: Rng + ?Sized> DrawSource<S> for FreshDraws<'_, S, P, R> {
    fn proposal(&mut self) -> S {
        self.fresh += 1;
        self.proposal.sample(self.z, self.rng)
    }

    fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    fn fresh_proposals(&self) -> u64 {
        self.fresh
    }
}

/// Replays the pairs the path itself drew at `z`, then continues afresh.
///
/// The path's draws at `z` run up to and including its first acceptance; the
/// continuation after that stopping time is again iid, so the concatenated
/// sequence has the law required by the estimator, and the order-0 estimate
/// reproduces the path's occupation count exactly.
pub struct ReplayDraws<'a, S, P, R: ?Sized> {
    recorded: &'a [Draw<S>],
    position: usize,
    fresh: FreshDraws<'a, S, P, R>,
}

impl<'a, S, P, R: Rng + ?Sized> ReplayDraws<'a, S, P, R> {
    pub fn new(z: &'a S, recorded: &'a [Draw<S>], proposal: &'a P, rng: &'a mut R) -> Self {
        ReplayDraws {
            recorded,
            position: 0,
            fresh: FreshDraws::new(z, proposal, rng),
        }
    }
}

impl<S: Clone, P: Proposal<S>, R: Rng + ?Sized> DrawSource<S> for ReplayDraws<'_, S, P, R> {
    fn proposal(&mut self) -> S {
        let y = match self.recorded.get(self.position) {
            Some(d) => d.proposed.clone(),
            None => self.fresh.proposal(),
        };
        self.position += 1;
        y
    }

    fn uniform(&mut self) -> f64 {
        match self.position.checked_sub(1).and_then(|i| self.recorded.get(i)) {
            Some(d) => d.u,
            None => self.fresh.uniform(),
        }
    }

    fn fresh_proposals(&self) -> u64 {
        self.fresh.fresh_proposals()
    }
}

/// `xi^k` at `z` from an arbitrary draw source.
pub fn xi_hat_with<S, T, P, D>(z: &S, spec: &WeightSpec, target: &T, proposal: &P, draws: &mut D) -> Result<WeightResult>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
    D: DrawSource<S>,
{
    spec.validate()?;
    let log_pi_z = checked_log_density(target, z)?;
    let integrated = match spec.order {
        WeightOrder::Finite(k) => k as u64,
        WeightOrder::Infinite => u64::MAX,
    };

    let mut xi = 1.0;
    let mut product = 1.0;
    let mut used = 0u64;
    let mut truncated = false;
    loop {
        if used == spec.max_proposals {
            truncated = true;
            break;
        }
        let y = draws.proposal();
        used += 1;
        let alpha = acceptance_from(log_pi_z, z, &y, target, proposal)?;
        if used <= integrated {
            product *= 1.0 - alpha;
            if product == 0.0 {
                break;
            }
        } else if draws.uniform() < alpha {
            break;
        }
        xi += product;
        if spec.order == WeightOrder::Infinite && product < spec.product_floor {
            truncated = true;
            break;
        }
    }
    Ok(WeightResult {
        xi,
        proposals_used: used,
        fresh_proposals: draws.fresh_proposals(),
        truncated,
    })
}

/// `xi^k` at `z` from freshly simulated proposals.
pub fn xi_hat_k<S, T, P, R>(z: &S, spec: &WeightSpec, target: &T, proposal: &P, rng: &mut R) -> Result<WeightResult>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
    R: Rng + ?Sized,
{
    let mut draws = FreshDraws::new(z, proposal, rng);
    xi_hat_with(z, spec, target, proposal, &mut draws)
}

/// `xi^k` at `z` reusing the path's own draws at `z`, topped up from `rng`.
pub fn xi_hat_replay<S, T, P, R>(
    z: &S,
    recorded: &[Draw<S>],
    spec: &WeightSpec,
    target: &T,
    proposal: &P,
    rng: &mut R,
) -> Result<WeightResult>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
    R: Rng + ?Sized,
{
    let mut draws = ReplayDraws::new(z, recorded, proposal, rng);
    xi_hat_with(z, spec, target, proposal, &mut draws)
}

/// Where the `(y, u)` pairs behind a block's weight come from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrawMode {
    /// Replay the path's own draws at `z`, then continue from a per-block stream.
    #[default]
    Reuse,
    /// Simulate every pair from a per-block stream.
    Fresh,
}

impl FromStr for DrawMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "reuse" => Ok(DrawMode::Reuse),
            "fresh" => Ok(DrawMode::Fresh),
            other => Err(Error::Config(format!("unknown weight draw mode {other:?}; expected reuse or fresh"))),
        }
    }
}

/// Proposal counts spent on weights and control variates for one chain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightAccounting {
    /// Proposals simulated beyond the path, per order.
    pub fresh_proposals: BTreeMap<WeightOrder, u64>,
    /// All proposals evaluated, replayed ones included, per order.
    pub proposals_used: BTreeMap<WeightOrder, u64>,
    /// Estimates cut off by `max_proposals` or the product floor, per order.
    pub truncated: BTreeMap<WeightOrder, u64>,
    pub control_variate_draws: u64,
}

/// Fill `weights` (and optionally `cv_draw`) on every block of `chain`, trailing block included.
///
/// Block `i` draws from its own stream, so the result does not depend on
/// which other orders are requested. All orders share that stream.
pub fn attach_weights<S, T, P>(
    chain: &mut ChainRecord<S>,
    orders: &[WeightOrder],
    base: &WeightSpec,
    mode: DrawMode,
    control_variate: bool,
    target: &T,
    proposal: &P,
) -> Result<WeightAccounting>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
{
    if mode == DrawMode::Reuse && chain.draws.is_none() && !orders.is_empty() {
        return Err(Error::Config("weight draw mode reuse needs a chain run with record_draws".into()));
    }
    let streams = ChainStreams::new(chain.seed);
    let mut acc = WeightAccounting::default();
    for &order in orders {
        let spec = WeightSpec { order, ..*base };
        spec.validate()?;
        let (mut fresh, mut used, mut truncated) = (0, 0, 0);
        for i in 0..chain.blocks.len() {
            let mut rng = streams.indexed(Purpose::Weights, i as u64);
            let z = &chain.blocks[i].z;
            let res = match mode {
                DrawMode::Reuse => {
                    let recorded = chain.block_draws(i).unwrap_or(&[]);
                    xi_hat_replay(z, recorded, &spec, target, proposal, &mut rng)?
                }
                DrawMode::Fresh => xi_hat_k(z, &spec, target, proposal, &mut rng)?,
            };
            fresh += res.fresh_proposals;
            used += res.proposals_used;
            truncated += res.truncated as u64;
            chain.blocks[i].weights.insert(order, res.xi);
        }
        acc.fresh_proposals.insert(order, fresh);
        acc.proposals_used.insert(order, used);
        acc.truncated.insert(order, truncated);
    }
    if control_variate {
        for (i, block) in chain.blocks.iter_mut().enumerate() {
            let mut rng = streams.indexed(Purpose::ControlVariate, i as u64);
            block.cv_draw = Some(control_variate_draw(&block.z, target, proposal, &mut rng)?);
        }
        acc.control_variate_draws = chain.blocks.len() as u64;
    }
    Ok(acc)
}

/// `alpha(z, y0)` for one independent `y0 ~ q(.|z)`; unbiased for `p(z)`.
pub fn control_variate_draw<S, T, P, R>(z: &S, target: &T, proposal: &P, rng: &mut R) -> Result<f64>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
    R: Rng + ?Sized,
{
    let log_pi_z = checked_log_density(target, z)?;
    let y0 = proposal.sample(z, rng);
    acceptance_from(log_pi_z, z, &y0, target, proposal)
}

/// Leaving probability `p(z) = E alpha(z, Y)` and `r(z) = E alpha(z, Y)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPair {
    pub p: f64,
    pub r: f64,
}

impl PRPair {
    pub fn new(p: f64, r: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid("p", p, "must lie in (0, 1]"));
        }
        if !(r > 0.0 && r <= p) {
            return Err(Error::invalid("r", r, format!("must lie in (0, p = {p}]")));
        }
        if 1.0 - 2.0 * p + r < 0.0 {
            return Err(Error::invalid("r", r, format!("1 - 2p + r must be nonnegative (p = {p})")));
        }
        Ok(PRPair { p, r })
    }

    /// `E (1 - alpha)^2 = 1 - 2p + r`, in `[0, 1)`.
    pub fn rejection_square(&self) -> f64 {
        1.0 - 2.0 * self.p + self.r
    }
}

/// Variance of a Geometric(p) count, `(1 - p) / p^2`.
pub fn geometric_variance(p: f64) -> f64 {
    (1.0 - p) / (p * p)
}

/// Closed-form `Var(xi^k | z)`.
pub fn var_xi_k_closed(pr: PRPair, k: u32) -> f64 {
    let PRPair { p, r } = pr;
    if k == 0 {
        return geometric_variance(p);
    }
    // 1 - (1 - 2p + r)^k without cancellation near p -> 0
    let base = r - 2.0 * p;
    let one_minus_pow = if base <= -1.0 {
        1.0
    } else {
        -((k as f64) * base.ln_1p()).exp_m1()
    };
    let correction = one_minus_pow / (2.0 * p - r) * ((2.0 - p) / (p * p)) * (p - r);
    (geometric_variance(p) - correction).max(0.0)
}

/// Closed-form `Var(xi^inf | z)`, the `k -> inf` limit.
pub fn var_xi_inf_closed(pr: PRPair) -> f64 {
    let PRPair { p, r } = pr;
    let v = geometric_variance(p) - (2.0 - p) * (p - r) / ((2.0 * p - r) * p * p);
    v.max(0.0)
}

pub fn var_xi_closed(pr: PRPair, order: WeightOrder) -> f64 {
    match order {
        WeightOrder::Finite(k) => var_xi_k_closed(pr, k),
        WeightOrder::Infinite => var_xi_inf_closed(pr),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mh::{ChainOptions, ProposalKind};
    use crate::models::{make_exp_independence, make_gaussian_rw, make_geometric_rw};
    use crate::rng::{ChainStreams, Purpose};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Exact;
    impl Target<f64> for Exact {
        fn log_density(&self, x: &f64) -> f64 {
            -0.5 * x * x
        }
    }
    impl Proposal<f64> for Exact {
        fn sample<R: Rng + ?Sized>(&self, _: &f64, rng: &mut R) -> f64 {
            rng.sample(rand_distr::StandardNormal)
        }
        fn log_density(&self, y: &f64, _: &f64) -> f64 {
            -0.5 * y * y
        }
        fn kind(&self) -> ProposalKind {
            ProposalKind::Independence
        }
    }

    fn mean_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn order_parsing() {
        assert_eq!("inf".parse::<WeightOrder>().unwrap(), WeightOrder::Infinite);
        assert_eq!(" 3 ".parse::<WeightOrder>().unwrap(), WeightOrder::Finite(3));
        assert!("-1".parse::<WeightOrder>().is_err());
        assert!(WeightOrder::Finite(1_000) < WeightOrder::Infinite);
        let v: Vec<WeightOrder> = serde_json::from_str(r#"[0, 3, "inf"]"#).unwrap();
        assert_eq!(v, vec![WeightOrder::Finite(0), WeightOrder::Finite(3), WeightOrder::Infinite]);
    }

    #[test]
    fn spec_validation() {
        let mut s = WeightSpec::new(WeightOrder::Finite(5));
        s.max_proposals = 4;
        assert!(s.validate().is_err());
        let mut s = WeightSpec::new(WeightOrder::Infinite);
        s.product_floor = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn perfect_proposal_gives_unit_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for order in [WeightOrder::Finite(0), WeightOrder::Finite(4), WeightOrder::Infinite] {
            let w = xi_hat_k(&0.7, &WeightSpec::new(order), &Exact, &Exact, &mut rng).unwrap();
            assert_eq!(w.xi, 1.0);
            assert_eq!(w.proposals_used, 1);
            assert!(!w.truncated);
            assert_eq!(control_variate_draw(&0.7, &Exact, &Exact, &mut rng).unwrap(), 1.0);
        }
    }

    #[test]
    fn cap_sets_truncation_flag() {
        let (t, q) = make_gaussian_rw(50.0).unwrap();
        let mut spec = WeightSpec::new(WeightOrder::Finite(2));
        spec.max_proposals = 2;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truncated = (0..200)
            .map(|_| xi_hat_k(&0.0, &spec, &t, &q, &mut rng).unwrap())
            .filter(|w| w.truncated)
            .count();
        assert!(truncated > 0);
    }

    #[test]
    fn weights_are_at_least_one() {
        let (t, q) = make_gaussian_rw(5.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for order in [WeightOrder::Finite(0), WeightOrder::Finite(2), WeightOrder::Infinite] {
            for _ in 0..500 {
                assert!(xi_hat_k(&1.3, &WeightSpec::new(order), &t, &q, &mut rng).unwrap().xi >= 1.0);
            }
        }
    }

    #[test]
    fn geometric_infinite_order_is_unbiased() {
        let (t, q, _) = make_geometric_rw(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let spec = WeightSpec::new(WeightOrder::Infinite);
        let xs: Vec<f64> = (0..100_000).map(|_| xi_hat_k(&3u64, &spec, &t, &q, &mut rng).unwrap().xi).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 1.0 / 0.75).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn exponential_order_zero_is_unbiased_at_origin() {
        let (t, q, _) = make_exp_independence(1.0, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let spec = WeightSpec::new(WeightOrder::Finite(0));
        let xs: Vec<f64> = (0..100_000).map(|_| xi_hat_k(&0.0, &spec, &t, &q, &mut rng).unwrap().xi).collect();
        let (m, se) = mean_se(&xs);
        assert!((m - 2.0).abs() < 3.0 * se, "{m} ± {se}");

        let cv: Vec<f64> = (0..100_000)
            .map(|_| control_variate_draw(&0.0, &t, &q, &mut rng).unwrap())
            .collect();
        let (m, se) = mean_se(&cv);
        assert!((m - 0.5).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn replay_order_zero_reproduces_occupation_counts() {
        let (t, q) = make_gaussian_rw(4.0).unwrap();
        let chain = crate::mh::run_chain_with(&t, &q, 0.0, 3000, 8, ChainOptions { record_draws: true }).unwrap();
        let streams = ChainStreams::new(8);
        for (i, b) in chain.complete_blocks().iter().enumerate() {
            let mut rng = streams.indexed(Purpose::Weights, i as u64);
            let w = xi_hat_replay(&b.z, chain.block_draws(i).unwrap(), &WeightSpec::new(WeightOrder::Finite(0)), &t, &q, &mut rng)
                .unwrap();
            assert_eq!(w.xi, b.n_occupation as f64);
            assert_eq!(w.fresh_proposals, 0);
        }
    }

    #[test]
    fn closed_form_edge_cases() {
        let pr = PRPair::new(0.5, 0.3).unwrap();
        assert_eq!(var_xi_k_closed(pr, 0), 2.0);
        let eq = PRPair::new(0.4, 0.4).unwrap();
        for k in [0, 1, 5, 50] {
            assert!((var_xi_k_closed(eq, k) - 0.6 / 0.16).abs() < 1e-12);
        }
        assert!((var_xi_inf_closed(eq) - 0.6 / 0.16).abs() < 1e-12);
        assert_eq!(var_xi_inf_closed(PRPair::new(1.0, 1.0).unwrap()), 0.0);
        assert!(PRPair::new(0.5, 0.6).is_err());
        assert!(PRPair::new(0.0, 0.0).is_err());
        // (1 - 2p + r) = 0.125 for the geometric model at beta = 0.5; k = 1 closed form
        let g = PRPair::new(0.75, 0.625).unwrap();
        let direct = g.rejection_square() * (2.0 - 0.75) / 0.5625 - 0.0625 / 0.5625;
        assert!((var_xi_k_closed(g, 1) - direct).abs() < 1e-14);
    }

    #[test]
    fn closed_form_is_monotone_in_k() {
        for i in 1..=20 {
            let p = i as f64 / 20.0;
            for j in 1..=10 {
                // Jensen: p^2 <= r <= p
                let r = (p * p + (p - p * p) * j as f64 / 10.0).min(p);
                let pr = PRPair::new(p, r).unwrap();
                let mut prev = var_xi_k_closed(pr, 0);
                for k in 1..60 {
                    let v = var_xi_k_closed(pr, k);
                    assert!(v <= prev + 1e-15);
                    prev = v;
                }
                assert!(var_xi_inf_closed(pr) <= prev + 1e-12);
                assert!((var_xi_k_closed(pr, 10_000) - var_xi_inf_closed(pr)).abs() < 1e-9);
            }
        }
    }
}
