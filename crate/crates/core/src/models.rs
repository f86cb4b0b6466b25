//! Toy targets with closed-form leaving probabilities.
//!
//! | constructor                  | target      | proposal                       | oracle |
//! |------------------------------|-------------|--------------------------------|--------|
//! | [`make_gaussian_rw`]         | N(0, 1)     | Gaussian random walk, scale τ  | no     |
//! | [`make_cauchy_independence`] | N(0, 1)     | Cauchy(0, τ) independence      | no     |
//! | [`make_exp_independence`]    | Exp(λ)      | Exp(μ) independence, μ ≤ λ     | yes    |
//! | [`make_geometric_rw`]        | Geo(β) on ℕ | ±1 walk, folded at 0           | yes    |

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Cauchy, Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::mh::{acceptance_prob, Proposal, ProposalKind, Target};
use crate::weights::PRPair;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Exact leaving probabilities for a (target, proposal) pair.
pub trait AnalyticOracle<S>: Send + Sync {
    /// `p(x) = ∫ alpha(x, y) q(y|x) dy`.
    fn p_exact(&self, x: &S) -> f64;

    /// `r(x) = ∫ alpha(x, y)^2 q(y|x) dy`.
    fn r_exact(&self, x: &S) -> f64;

    /// Unnormalised log density of the accepted-state chain's stationary law, `pi * p`.
    fn pi_tilde_log_density(&self, _x: &S) -> Option<f64> {
        None
    }

    fn description(&self) -> String;

    fn pr(&self, x: &S) -> Result<PRPair> {
        PRPair::new(self.p_exact(x), self.r_exact(x))
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(name, v, "must be a positive finite number"))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StandardNormal;

impl Target<f64> for StandardNormal {
    fn log_density(&self, x: &f64) -> f64 {
        -0.5 * x * x
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRandomWalk {
    tau: f64,
    step: Normal<f64>,
}

impl GaussianRandomWalk {
    pub fn new(tau: f64) -> Result<Self> {
        let tau = positive("tau", tau)?;
        Ok(GaussianRandomWalk {
            tau,
            step: Normal::new(0.0, tau).expect("positive scale"),
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }
}

impl Proposal<f64> for GaussianRandomWalk {
    fn sample<R: Rng + ?Sized>(&self, x: &f64, rng: &mut R) -> f64 {
        x + self.step.sample(rng)
    }

    fn log_density(&self, y: &f64, x: &f64) -> f64 {
        let d = (y - x) / self.tau;
        -0.5 * d * d - self.tau.ln() - HALF_LN_2PI
    }

    fn kind(&self) -> ProposalKind {
        ProposalKind::SymmetricRandomWalk
    }
}

pub fn make_gaussian_rw(tau: f64) -> Result<(StandardNormal, GaussianRandomWalk)> {
    Ok((StandardNormal, GaussianRandomWalk::new(tau)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyIndependence {
    tau: f64,
    dist: Cauchy<f64>,
}

impl CauchyIndependence {
    pub fn new(tau: f64) -> Result<Self> {
        let tau = positive("tau", tau)?;
        Ok(CauchyIndependence {
            tau,
            dist: Cauchy::new(0.0, tau).expect("positive scale"),
        })
    }
}

impl Proposal<f64> for CauchyIndependence {
    fn sample<R: Rng + ?Sized>(&self, _x: &f64, rng: &mut R) -> f64 {
        self.dist.sample(rng)
    }

    fn log_density(&self, y: &f64, _x: &f64) -> f64 {
        let s = y / self.tau;
        -(PI * self.tau).ln() - s.mul_add(s, 1.0).ln()
    }

    fn kind(&self) -> ProposalKind {
        ProposalKind::Independence
    }
}

pub fn make_cauchy_independence(tau: f64) -> Result<(StandardNormal, CauchyIndependence)> {
    Ok((StandardNormal, CauchyIndependence::new(tau)?))
}

/// Exp(rate) density on `[0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponential {
    rate: f64,
    dist: Exp<f64>,
}

impl Exponential {
    pub fn new(rate: f64) -> Result<Self> {
        let rate = positive("lambda", rate)?;
        Ok(Exponential {
            rate,
            dist: Exp::new(rate).expect("positive rate"),
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.dist.sample(rng)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.rate.ln() - self.rate * x
        } else {
            f64::NEG_INFINITY
        }
    }
}

impl Target<f64> for Exponential {
    fn log_density(&self, x: &f64) -> f64 {
        self.log_pdf(*x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentialIndependence(Exponential);

impl Proposal<f64> for ExponentialIndependence {
    fn sample<R: Rng + ?Sized>(&self, _x: &f64, rng: &mut R) -> f64 {
        self.0.sample(rng)
    }

    fn log_density(&self, y: &f64, _x: &f64) -> f64 {
        self.0.log_pdf(*y)
    }

    fn kind(&self) -> ProposalKind {
        ProposalKind::Independence
    }
}

/// `p(x) = 1 - (λ-μ)/λ e^{-μx}`, `r(x) = 1 - 2(λ-μ)/(2λ-μ) e^{-μx}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpOracle {
    pub lambda: f64,
    pub mu: f64,
}

impl AnalyticOracle<f64> for ExpOracle {
    fn p_exact(&self, x: &f64) -> f64 {
        1.0 - (self.lambda - self.mu) / self.lambda * (-self.mu * x).exp()
    }

    fn r_exact(&self, x: &f64) -> f64 {
        1.0 - 2.0 * (self.lambda - self.mu) / (2.0 * self.lambda - self.mu) * (-self.mu * x).exp()
    }

    fn pi_tilde_log_density(&self, x: &f64) -> Option<f64> {
        (*x >= 0.0).then(|| -self.lambda * x + self.p_exact(x).ln())
    }

    fn description(&self) -> String {
        format!("Exp({}) target, Exp({}) independence proposal", self.lambda, self.mu)
    }
}

pub fn make_exp_independence(lambda: f64, mu: f64) -> Result<(Exponential, ExponentialIndependence, ExpOracle)> {
    let target = Exponential::new(lambda)?;
    let proposal = Exponential::new(positive("mu", mu)?)?;
    if mu > lambda {
        return Err(Error::invalid(
            "mu",
            mu,
            format!("the closed forms for p and r require mu <= lambda (lambda = {lambda})"),
        ));
    }
    Ok((target, ExponentialIndependence(proposal), ExpOracle { lambda, mu }))
}

/// `pi(x) = β (1-β)^x` on the nonnegative integers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometric {
    beta: f64,
}

impl Geometric {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::invalid("beta", beta, "must lie in (0, 1)"));
        }
        Ok(Geometric { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Inversion sampler for the target itself.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.random();
        ((1.0 - u).ln() / (-self.beta).ln_1p()).floor() as u64
    }
}

impl Target<u64> for Geometric {
    fn log_density(&self, x: &u64) -> f64 {
        self.beta.ln() + (*x as f64) * (-self.beta).ln_1p()
    }
}

/// `x -> x ± 1` with probability ½ each; from 0 the move to −1 is folded onto 0,
/// so 0 proposes `{0, 1}` uniformly.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OneStepWalk;

impl OneStepWalk {
    /// The two proposal mass points from `x`, each with probability ½.
    pub fn support(x: u64) -> [u64; 2] {
        if x == 0 {
            [0, 1]
        } else {
            [x - 1, x + 1]
        }
    }
}

impl Proposal<u64> for OneStepWalk {
    fn sample<R: Rng + ?Sized>(&self, x: &u64, rng: &mut R) -> u64 {
        let [down, up] = Self::support(*x);
        if rng.random::<bool>() {
            up
        } else {
            down
        }
    }

    fn log_density(&self, y: &u64, x: &u64) -> f64 {
        if Self::support(*x).contains(y) {
            -LN_2
        } else {
            f64::NEG_INFINITY
        }
    }

    fn kind(&self) -> ProposalKind {
        ProposalKind::SymmetricRandomWalk
    }
}

/// Constant `p = 1 - β/2`, `r = 1 - β + β²/2`; `pi_tilde = pi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricOracle {
    pub beta: f64,
}

impl AnalyticOracle<u64> for GeometricOracle {
    fn p_exact(&self, _x: &u64) -> f64 {
        1.0 - self.beta / 2.0
    }

    fn r_exact(&self, _x: &u64) -> f64 {
        1.0 - self.beta + self.beta * self.beta / 2.0
    }

    fn pi_tilde_log_density(&self, x: &u64) -> Option<f64> {
        Some((*x as f64) * (-self.beta).ln_1p())
    }

    fn description(&self) -> String {
        format!("Geo({}) target, one-step random walk proposal", self.beta)
    }
}

pub fn make_geometric_rw(beta: f64) -> Result<(Geometric, OneStepWalk, GeometricOracle)> {
    Ok((Geometric::new(beta)?, OneStepWalk, GeometricOracle { beta }))
}

/// One row of the exact transition kernels of the geometric model.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    /// `P(x, y)` for the Metropolis–Hastings chain, including the holding mass at `x`.
    pub mh: Vec<(u64, f64)>,
    /// `q̃(y|x) = alpha(x, y) q(y|x) / p(x)` for the accepted-state chain.
    pub accepted: Vec<(u64, f64)>,
    /// `p(x)` obtained by summing over the proposal support.
    pub p: f64,
    /// `r(x)` obtained the same way.
    pub r: f64,
}

/// Exact kernel row at `x`, built by enumerating the proposal support.
pub fn geometric_kernel_row(target: &Geometric, x: u64) -> Result<KernelRow> {
    let mut p = 0.0;
    let mut r = 0.0;
    let mut moves = Vec::with_capacity(2);
    for y in OneStepWalk::support(x) {
        let a = acceptance_prob(&x, &y, target, &OneStepWalk)?;
        p += 0.5 * a;
        r += 0.5 * a * a;
        moves.push((y, 0.5 * a));
    }
    let accepted = moves.iter().map(|&(y, m)| (y, m / p)).collect();
    // accepted self-moves and rejections both leave the MH chain at x
    let mut mh: Vec<(u64, f64)> = moves.iter().copied().filter(|&(y, _)| y != x).collect();
    let stay = 1.0 - mh.iter().map(|&(_, m)| m).sum::<f64>();
    mh.push((x, stay));
    Ok(KernelRow { mh, accepted, p, r })
}

/// `2β(1-β)(2+β) / ((2-β²)(2-β)²)`, the absolute variance reduction of the
/// fully integrated weight over the occupation count.
pub fn geometric_gain_absolute(beta: f64) -> f64 {
    2.0 * beta * (1.0 - beta) * (2.0 + beta) / ((2.0 - beta * beta) * (2.0 - beta).powi(2))
}

/// `(1-β)(2+β) / (2-β²)`, the same reduction relative to `Var(n)`.
pub fn geometric_gain_relative(beta: f64) -> f64 {
    (1.0 - beta) * (2.0 + beta) / (2.0 - beta * beta)
}

/// Maximiser of [`geometric_gain_absolute`] over `(0, 1)` by golden-section search.
///
/// Returns `(beta, gain)`; the function is unimodal on the interval.
pub fn geometric_gain_optimum() -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-9, 1.0 - 1e-9);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    while b - a > 1e-12 {
        if geometric_gain_absolute(c) > geometric_gain_absolute(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - ratio * (b - a);
        d = a + ratio * (b - a);
    }
    let beta = 0.5 * (a + b);
    (beta, geometric_gain_absolute(beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{var_xi_inf_closed, var_xi_k_closed};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constructors_validate_parameters() {
        assert!(make_gaussian_rw(0.0).is_err());
        assert!(make_cauchy_independence(-1.0).is_err());
        assert!(make_geometric_rw(1.0).is_err());
        let err = make_exp_independence(1.0, 2.0).unwrap_err().to_string();
        assert!(err.contains("mu <= lambda"), "{err}");
    }

    #[test]
    fn proposal_symmetries() {
        let q = GaussianRandomWalk::new(1.7).unwrap();
        let c = CauchyIndependence::new(0.25).unwrap();
        for (x, y) in [(0.0, 1.0), (-2.5, 0.3), (4.0, 4.5)] {
            assert_eq!(q.log_density(&y, &x), q.log_density(&x, &y));
            assert_eq!(c.log_density(&y, &x), c.log_density(&y, &(x + 10.0)));
        }
        for x in 0..10u64 {
            for y in OneStepWalk::support(x) {
                assert_eq!(OneStepWalk.log_density(&y, &x), OneStepWalk.log_density(&x, &y));
            }
        }
        let (t, q) = make_cauchy_independence(0.25).unwrap();
        assert_eq!(acceptance_prob(&0.0, &0.0, &t, &q).unwrap(), 1.0);
    }

    #[test]
    fn exp_oracle_values() {
        let (_, _, o) = make_exp_independence(1.0, 0.5).unwrap();
        assert!((o.p_exact(&0.0) - 0.5).abs() < 1e-15);
        assert!((o.r_exact(&0.0) - (1.0 - 1.0 / 1.5)).abs() < 1e-15);
        let (_, _, same) = make_exp_independence(2.0, 2.0).unwrap();
        assert_eq!(same.p_exact(&0.3), 1.0);
        assert_eq!(same.r_exact(&0.3), 1.0);
        let (_, _, slow) = make_exp_independence(1.0, 0.1).unwrap();
        assert!(1.0 - slow.p_exact(&500.0) < 1e-20);
    }

    #[test]
    fn geometric_oracle_values() {
        let o = GeometricOracle { beta: 0.2 };
        assert!((o.p_exact(&3) - 0.9).abs() < 1e-15);
        assert!((o.r_exact(&3) - 0.82).abs() < 1e-15);
        let t = Geometric::new(0.2).unwrap();
        for x in 0..30 {
            let row = geometric_kernel_row(&t, x).unwrap();
            assert!((row.p - 0.9).abs() < 1e-15, "x = {x}");
            assert!((row.r - 0.82).abs() < 1e-15, "x = {x}");
            assert!((row.mh.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-15);
            assert!((row.accepted.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn geometric_target_sampler_matches_pmf() {
        let t = Geometric::new(0.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let zeros = (0..n).filter(|_| t.sample(&mut rng) == 0).count() as f64 / n as f64;
        assert!((zeros - 0.3).abs() < 0.005);
    }

    #[test]
    fn gains_match_closed_form_variances() {
        for i in 1..100 {
            let beta = i as f64 / 100.0;
            let pr = GeometricOracle { beta }.pr(&0).unwrap();
            let diff = var_xi_k_closed(pr, 0) - var_xi_inf_closed(pr);
            assert!((geometric_gain_absolute(beta) - diff).abs() < 1e-10, "beta = {beta}");
            let rel = (pr.p - pr.r) * (2.0 - pr.p) / ((2.0 * pr.p - pr.r) * (1.0 - pr.p));
            assert!((geometric_gain_relative(beta) - rel).abs() < 1e-10);
        }
        assert!((geometric_gain_relative(0.5) - 0.5 * 2.5 / 1.75).abs() < 1e-15);
        assert!(geometric_gain_absolute(1e-9) < 1e-8);
        assert!((geometric_gain_relative(1e-9) - 1.0).abs() < 1e-8);
    }
}
