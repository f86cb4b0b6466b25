//! Metropolis–Hastings engine.
//!
//! A chain is produced simultaneously as a path `x(1), ..., x(N)` and as a
//! sequence of accepted blocks `(z_i, n_i)`, where `n_i` counts how many path
//! steps the chain spent at the accepted state `z_i`. The starting state is the
//! first block; the last block is always the trailing partial one, whose
//! occupation was cut short by the budget.
//!
//! All density arithmetic stays in log space. A proposal is accepted iff
//! `u < alpha` (strict), so zero-probability moves are never taken.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{ChainStreams, Purpose};
use crate::state::State;
use crate::weights::WeightOrder;

/// Unnormalised target density `pi`.
pub trait Target<S> {
    /// `log pi(x)`, up to an additive constant. `-inf` off the support.
    fn log_density(&self, x: &S) -> f64;

    fn dimension(&self) -> usize {
        1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalKind {
    /// `q(y|x) = q(x|y)`; the proposal ratio cancels.
    SymmetricRandomWalk,
    /// `q(y|x) = q(y)`.
    Independence,
    General,
}

/// Proposal kernel `q(y|x)`.
pub trait Proposal<S> {
    fn sample<R: Rng + ?Sized>(&self, x: &S, rng: &mut R) -> S;

    /// `log q(y|x)`.
    fn log_density(&self, y: &S, x: &S) -> f64;

    fn kind(&self) -> ProposalKind;
}

impl<S, T: Target<S> + ?Sized> Target<S> for &T {
    fn log_density(&self, x: &S) -> f64 {
        (**self).log_density(x)
    }

    fn dimension(&self) -> usize {
        (**self).dimension()
    }
}

impl<S, P: Proposal<S> + ?Sized> Proposal<S> for &P {
    fn sample<R: Rng + ?Sized>(&self, x: &S, rng: &mut R) -> S {
        (**self).sample(x, rng)
    }

    fn log_density(&self, y: &S, x: &S) -> f64 {
        (**self).log_density(y, x)
    }

    fn kind(&self) -> ProposalKind {
        (**self).kind()
    }
}

/// `log pi(x)`, rejecting states where the chain cannot sit.
pub fn checked_log_density<S, T: Target<S>>(target: &T, x: &S) -> Result<f64> {
    let lp = target.log_density(x);
    if lp.is_nan() {
        return Err(Error::NotANumber {
            what: "target log density",
        });
    }
    if lp == f64::NEG_INFINITY {
        return Err(Error::OffSupport { log_density: lp });
    }
    Ok(lp)
}

/// Acceptance probability and `log pi(y)` given a cached `log pi(x)`.
pub(crate) fn acceptance_with_log_target<S, T, P>(
    log_pi_x: f64,
    x: &S,
    y: &S,
    target: &T,
    proposal: &P,
) -> Result<(f64, f64)>
where
    T: Target<S>,
    P: Proposal<S>,
{
    let log_pi_y = target.log_density(y);
    if log_pi_y.is_nan() {
        return Err(Error::NotANumber {
            what: "target log density",
        });
    }
    if log_pi_y == f64::NEG_INFINITY {
        return Ok((0.0, log_pi_y));
    }
    let log_q_ratio = match proposal.kind() {
        ProposalKind::SymmetricRandomWalk => 0.0,
        _ => proposal.log_density(x, y) - proposal.log_density(y, x),
    };
    let log_ratio = (log_pi_y - log_pi_x) + log_q_ratio;
    if log_ratio.is_nan() {
        return Err(Error::NotANumber {
            what: "log acceptance ratio",
        });
    }
    let alpha = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
    Ok((alpha, log_pi_y))
}

pub(crate) fn acceptance_from<S, T, P>(log_pi_x: f64, x: &S, y: &S, target: &T, proposal: &P) -> Result<f64>
where
    T: Target<S>,
    P: Proposal<S>,
{
    acceptance_with_log_target(log_pi_x, x, y, target, proposal).map(|(a, _)| a)
}

/// `alpha(x, y) = min{1, pi(y) q(x|y) / (pi(x) q(y|x))}`.
pub fn acceptance_prob<S, T, P>(x: &S, y: &S, target: &T, proposal: &P) -> Result<f64>
where
    T: Target<S>,
    P: Proposal<S>,
{
    let log_pi_x = checked_log_density(target, x)?;
    acceptance_from(log_pi_x, x, y, target, proposal)
}

/// Outcome of one Metropolis–Hastings transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub next: S,
    pub accepted: bool,
    pub proposed: S,
    pub u: f64,
}

/// One transition drawing the proposal and then the uniform from `rng`.
pub fn mh_step<S, T, P, R>(x: &S, target: &T, proposal: &P, rng: &mut R) -> Result<Step<S>>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
    R: Rng + ?Sized,
{
    let log_pi_x = checked_log_density(target, x)?;
    let proposed = proposal.sample(x, rng);
    let u: f64 = rng.random();
    let alpha = acceptance_from(log_pi_x, x, &proposed, target, proposal)?;
    let accepted = u < alpha;
    Ok(Step {
        next: if accepted { proposed.clone() } else { x.clone() },
        accepted,
        proposed,
        u,
    })
}

/// A proposal made along the path together with the uniform it was tested against.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw<S> {
    pub proposed: S,
    pub u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceptedBlock<S> {
    pub z: S,
    pub n_occupation: u64,
    /// Path index at which `z` was entered.
    pub start: usize,
    /// Weight estimates of `1/p(z)`, keyed by truncation order.
    pub weights: BTreeMap<WeightOrder, f64>,
    /// `alpha(z, y0)` for an independent `y0 ~ q(.|z)`.
    pub cv_draw: Option<f64>,
}

impl<S> AcceptedBlock<S> {
    pub fn new(z: S, n_occupation: u64, start: usize) -> Self {
        AcceptedBlock {
            z,
            n_occupation,
            start,
            weights: BTreeMap::new(),
            cv_draw: None,
        }
    }

    /// Weight for `order`; order 0 falls back to the occupation count.
    pub fn weight(&self, order: WeightOrder) -> Option<f64> {
        match self.weights.get(&order) {
            Some(w) => Some(*w),
            None if order == WeightOrder::Finite(0) => Some(self.n_occupation as f64),
            None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChainOptions {
    /// Keep every `(y_t, u_t)` so weight estimators can reuse the path's own draws.
    pub record_draws: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord<S> {
    pub path: Vec<S>,
    pub blocks: Vec<AcceptedBlock<S>>,
    /// Number of complete blocks; all but the trailing one.
    pub m_n: usize,
    pub seed: u64,
    /// `M / N`.
    pub acceptance_rate: f64,
    /// Accepted transitions among the `N - 1` that were made.
    pub accepted_moves: usize,
    /// `draws[t]` is the proposal made from `path[t]`.
    pub draws: Option<Vec<Draw<S>>>,
}

impl<S: State> ChainRecord<S> {
    /// Path budget `N`.
    pub fn n(&self) -> usize {
        self.path.len()
    }

    /// Number of blocks `M`, including the trailing partial one.
    pub fn m(&self) -> usize {
        self.blocks.len()
    }

    pub fn complete_blocks(&self) -> &[AcceptedBlock<S>] {
        &self.blocks[..self.m_n]
    }

    pub fn trailing_block(&self) -> &AcceptedBlock<S> {
        self.blocks.last().expect("chains have at least one block")
    }

    /// Recorded draws made while the chain sat at block `i`.
    pub fn block_draws(&self, i: usize) -> Option<&[Draw<S>]> {
        let draws = self.draws.as_ref()?;
        let b = self.blocks.get(i)?;
        let end = (b.start + b.n_occupation as usize).min(draws.len());
        Some(&draws[b.start.min(end)..end])
    }

    /// Fraction of proposals that were accepted along the path.
    pub fn move_acceptance_rate(&self) -> f64 {
        if self.path.len() < 2 {
            return f64::NAN;
        }
        self.accepted_moves as f64 / (self.path.len() - 1) as f64
    }

    pub fn expand(&self) -> Vec<S> {
        expand_blocks(&self.blocks, self.n())
    }
}

/// Each `z_i` repeated `n_i` times, truncated at `limit` states.
pub fn expand_blocks<S: Clone>(blocks: &[AcceptedBlock<S>], limit: usize) -> Vec<S> {
    let mut out = Vec::with_capacity(limit);
    'outer: for b in blocks {
        for _ in 0..b.n_occupation {
            if out.len() == limit {
                break 'outer;
            }
            out.push(b.z.clone());
        }
    }
    out
}

/// Run-length encoding of a path.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<S> {
    pub blocks: Vec<AcceptedBlock<S>>,
    pub m: usize,
    pub m_n: usize,
}

/// Split a path into maximal runs of bitwise-identical states.
///
/// Matches [`ChainRecord::blocks`] unless an accepted proposal coincided with
/// the current state, which run-length encoding cannot see.
pub fn decompose_chain<S: State>(path: &[S]) -> Result<Decomposition<S>> {
    let first = path.first().ok_or(Error::Empty("path"))?;
    let mut blocks = vec![AcceptedBlock::new(first.clone(), 1, 0)];
    for (t, x) in path.iter().enumerate().skip(1) {
        let last = blocks.last_mut().expect("non-empty");
        if last.z.same_as(x) {
            last.n_occupation += 1;
        } else {
            blocks.push(AcceptedBlock::new(x.clone(), 1, t));
        }
    }
    let m = blocks.len();
    Ok(Decomposition { blocks, m, m_n: m - 1 })
}

/// Chain of `n` states starting at `x0` (so `n - 1` transitions).
pub fn run_chain<S, T, P>(target: &T, proposal: &P, x0: S, n: usize, seed: u64) -> Result<ChainRecord<S>>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
{
    run_chain_with(target, proposal, x0, n, seed, ChainOptions::default())
}

pub fn run_chain_with<S, T, P>(
    target: &T,
    proposal: &P,
    x0: S,
    n: usize,
    seed: u64,
    options: ChainOptions,
) -> Result<ChainRecord<S>>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
{
    if n == 0 {
        return Err(Error::invalid("n", n, "chain length must be positive"));
    }
    simulate(target, proposal, x0, seed, options, |len, _| len >= n)
}

/// Run until `complete` blocks are finished, i.e. until the `complete`-th
/// acceptance after the start. Fails if that takes more than `max_steps` transitions.
pub fn run_chain_until_blocks<S, T, P>(
    target: &T,
    proposal: &P,
    x0: S,
    complete: usize,
    seed: u64,
    max_steps: usize,
    options: ChainOptions,
) -> Result<ChainRecord<S>>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
{
    let chain = simulate(target, proposal, x0, seed, options, |len, blocks| {
        blocks > complete || len > max_steps
    })?;
    if chain.m_n < complete {
        return Err(Error::Degenerate(format!(
            "only {} of {complete} blocks completed within {max_steps} steps",
            chain.m_n
        )));
    }
    Ok(chain)
}

fn simulate<S, T, P, F>(target: &T, proposal: &P, x0: S, seed: u64, options: ChainOptions, mut done: F) -> Result<ChainRecord<S>>
where
    S: State,
    T: Target<S>,
    P: Proposal<S>,
    F: FnMut(usize, usize) -> bool,
{
    let mut log_pi_x = checked_log_density(target, &x0)?;
    let streams = ChainStreams::new(seed);
    let mut proposal_rng = streams.stream(Purpose::Proposals);
    let mut uniform_rng = streams.stream(Purpose::PathUniforms);

    let mut x = x0;
    let mut path = vec![x.clone()];
    let mut blocks = vec![AcceptedBlock::new(x.clone(), 1, 0)];
    let mut draws = options.record_draws.then(Vec::new);
    let mut accepted_moves = 0;

    while !done(path.len(), blocks.len()) {
        let y = proposal.sample(&x, &mut proposal_rng);
        let u: f64 = uniform_rng.random();
        let (alpha, log_pi_y) = acceptance_with_log_target(log_pi_x, &x, &y, target, proposal)?;
        if let Some(d) = draws.as_mut() {
            d.push(Draw {
                proposed: y.clone(),
                u,
            });
        }
        if u < alpha {
            x = y;
            log_pi_x = log_pi_y;
            accepted_moves += 1;
            blocks.push(AcceptedBlock::new(x.clone(), 1, path.len()));
        } else {
            blocks.last_mut().expect("non-empty").n_occupation += 1;
        }
        path.push(x.clone());
    }

    let m = blocks.len();
    Ok(ChainRecord {
        acceptance_rate: m as f64 / path.len() as f64,
        path,
        blocks,
        m_n: m - 1,
        seed,
        accepted_moves,
        draws,
    })
}
