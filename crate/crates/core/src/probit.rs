//! Probit regression posterior under a flat prior.
//!
//! Two covariates: an intercept and a standardised body-mass index, so the
//! parameter is `[f64; 2]` and a single random-walk scale serves both axes.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::mh::{Proposal, ProposalKind, Target};
use crate::rng::{ChainStreams, Purpose};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// Below this argument `log Phi` switches to its asymptotic series.
const LOG_PHI_TAIL: f64 = -20.0;

pub type Coefficients = [f64; 2];

/// `sum_{n<=8} (-1)^n (2n-1)!! / x^{2n}`, the Mills-ratio series for `x << 0`.
fn mills_series(x: f64) -> f64 {
    let inv = 1.0 / (x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..=8 {
        term *= -((2 * n - 1) as f64) * inv;
        sum += term;
    }
    sum
}

/// `log Phi(x)` for the standard normal cdf, accurate far into the lower tail.
pub fn log_phi(x: f64) -> f64 {
    if x < LOG_PHI_TAIL {
        -0.5 * x * x - (-x).ln() - HALF_LN_2PI + mills_series(x).ln()
    } else if x < 0.0 {
        libm::erfc(-x * FRAC_1_SQRT_2).ln() - LN_2
    } else {
        (-0.5 * libm::erfc(x * FRAC_1_SQRT_2)).ln_1p()
    }
}

/// `phi(x) / Phi(x)`, the derivative of `log Phi`.
pub fn inverse_mills(x: f64) -> f64 {
    if x < LOG_PHI_TAIL {
        -x / mills_series(x)
    } else {
        (-0.5 * x * x - HALF_LN_2PI - log_phi(x)).exp()
    }
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbitData {
    /// Rows `(1, standardised bmi)`.
    covariates: Vec<Coefficients>,
    outcomes: Vec<bool>,
    /// Mean and standard deviation used to standardise the raw column.
    pub bmi_mean: f64,
    pub bmi_sd: f64,
}

impl ProbitData {
    /// Standardise `bmi` to mean 0 and (sample) standard deviation 1.
    pub fn from_raw(bmi: &[f64], outcomes: &[bool]) -> Result<Self> {
        if bmi.is_empty() {
            return Err(Error::Empty("probit data"));
        }
        if bmi.len() != outcomes.len() {
            return Err(Error::Degenerate(format!(
                "{} covariate values but {} outcomes",
                bmi.len(),
                outcomes.len()
            )));
        }
        if bmi.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite covariate value".into()));
        }
        let positives = outcomes.iter().filter(|&&y| y).count();
        if positives == 0 || positives == outcomes.len() {
            return Err(Error::Degenerate("single-class outcome: both classes must be present".into()));
        }
        let n = bmi.len() as f64;
        let mean = bmi.iter().sum::<f64>() / n;
        let sd = if bmi.len() > 1 {
            (bmi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        if !(sd > 0.0) {
            return Err(Error::Degenerate("covariate has zero variance".into()));
        }
        Ok(ProbitData {
            covariates: bmi.iter().map(|v| [1.0, (v - mean) / sd]).collect(),
            outcomes: outcomes.to_vec(),
            bmi_mean: mean,
            bmi_sd: sd,
        })
    }

    /// Data simulated from the model itself at `beta`, on the standardised scale.
    pub fn synthetic(n: usize, beta: Coefficients, seed: u64) -> Result<Self> {
        let mut rng = ChainStreams::new(seed).stream(Purpose::Auxiliary);
        let raw: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        // standardise first so that beta is the truth on the scale the model sees
        let mean = raw.iter().sum::<f64>() / n as f64;
        let sd = (raw.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
        let outcomes: Vec<bool> = raw
            .iter()
            .map(|v| {
                let eta = beta[0] + beta[1] * (v - mean) / sd;
                rng.random::<f64>() < normal_cdf(eta)
            })
            .collect();
        Self::from_raw(&raw, &outcomes)
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn covariates(&self) -> &[Coefficients] {
        &self.covariates
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }
}

/// Column names selecting the covariate and the outcome in a data file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PimaColumns {
    pub bmi: String,
    pub outcome: String,
}

impl Default for PimaColumns {
    fn default() -> Self {
        PimaColumns {
            bmi: "bmi".into(),
            outcome: "type".into(),
        }
    }
}

fn parse_outcome(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "yes" | "true" | "pos" | "positive" => Some(true),
        "0" | "no" | "false" | "neg" | "negative" => Some(false),
        _ => None,
    }
}

/// Read a delimited file (comma or whitespace separated, header row required).
pub fn load_pima(path: impl AsRef<Path>, columns: &PimaColumns) -> Result<ProbitData> {
    let path = path.as_ref();
    let fail = |message: String| Error::Data {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| fail(format!("cannot read file: {e}")))?;
    let header_line = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| fail("file is empty".into()))?;

    let rows: Vec<Vec<String>> = if header_line.contains(',') {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_owned).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| fail(format!("malformed delimited text: {e}")))?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(|f| f.trim_matches('"').to_owned()).collect())
            .collect()
    };

    let header = &rows[0];
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| fail(format!("missing column `{name}` (found: {})", header.join(", "))))
    };
    let bmi_col = find(&columns.bmi)?;
    let out_col = find(&columns.outcome)?;

    let mut bmi = Vec::with_capacity(rows.len());
    let mut outcomes = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate().skip(1) {
        let line = i + 1;
        // R writes row names as an unnamed leading column
        let offset = row.len().saturating_sub(header.len());
        let cell = |col: usize| row.get(col + offset).map(String::as_str).unwrap_or("");
        let b = cell(bmi_col);
        let o = cell(out_col);
        if b.is_empty() || b.eq_ignore_ascii_case("na") || o.is_empty() || o.eq_ignore_ascii_case("na") {
            return Err(fail(format!("row {line}: missing value")));
        }
        bmi.push(b.parse::<f64>().map_err(|_| fail(format!("row {line}: cannot parse `{b}` as a number")))?);
        outcomes.push(parse_outcome(o).ok_or_else(|| fail(format!("row {line}: cannot parse `{o}` as a binary outcome")))?);
    }
    ProbitData::from_raw(&bmi, &outcomes).map_err(|e| fail(e.to_string()))
}

fn check_finite(beta: &Coefficients) -> Result<()> {
    if beta.iter().all(|b| b.is_finite()) {
        Ok(())
    } else {
        Err(Error::invalid("beta", format!("{beta:?}"), "coefficients must be finite"))
    }
}

#[inline]
fn eta(x: &Coefficients, beta: &Coefficients) -> f64 {
    x[0] * beta[0] + x[1] * beta[1]
}

/// `sum_i [y_i log Phi(x_i'b) + (1 - y_i) log Phi(-x_i'b)]`.
pub fn log_posterior(beta: &Coefficients, data: &ProbitData) -> Result<f64> {
    check_finite(beta)?;
    Ok(data
        .covariates
        .iter()
        .zip(&data.outcomes)
        .map(|(x, &y)| {
            let e = eta(x, beta);
            log_phi(if y { e } else { -e })
        })
        .sum())
}

pub fn log_posterior_gradient(beta: &Coefficients, data: &ProbitData) -> Result<Coefficients> {
    check_finite(beta)?;
    let mut g = [0.0; 2];
    for (x, &y) in data.covariates.iter().zip(&data.outcomes) {
        let s = if y { 1.0 } else { -1.0 };
        let d = s * inverse_mills(s * eta(x, beta));
        g[0] += d * x[0];
        g[1] += d * x[1];
    }
    Ok(g)
}

/// Hessian of the log posterior; negative definite whenever the design has full rank.
pub fn log_posterior_hessian(beta: &Coefficients, data: &ProbitData) -> Result<[[f64; 2]; 2]> {
    check_finite(beta)?;
    let mut h = [[0.0; 2]; 2];
    for (x, &y) in data.covariates.iter().zip(&data.outcomes) {
        let s = if y { 1.0 } else { -1.0 };
        let t = s * eta(x, beta);
        let lam = inverse_mills(t);
        let w = lam * (t + lam);
        for a in 0..2 {
            for b in 0..2 {
                h[a][b] -= w * x[a] * x[b];
            }
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleFit {
    pub beta: Coefficients,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub log_likelihood: f64,
    /// Observed-information standard errors.
    pub standard_errors: Coefficients,
}

const MLE_TOLERANCE: f64 = 1e-8;
const MLE_MAX_ITERATIONS: usize = 100;

/// Damped Newton–Raphson from `beta = 0`.
pub fn fit_mle(data: &ProbitData) -> Result<MleFit> {
    let mut beta = [0.0; 2];
    let mut ll = log_posterior(&beta, data)?;
    let mut trace = Vec::new();
    for iteration in 0..=MLE_MAX_ITERATIONS {
        let g = log_posterior_gradient(&beta, data)?;
        let norm = g[0].hypot(g[1]);
        trace.push(norm);
        let h = log_posterior_hessian(&beta, data)?;
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        if norm < MLE_TOLERANCE {
            let info_det = det;
            let standard_errors = [(-h[1][1] / info_det).sqrt(), (-h[0][0] / info_det).sqrt()];
            return Ok(MleFit {
                beta,
                iterations: iteration,
                gradient_norm: norm,
                log_likelihood: ll,
                standard_errors,
            });
        }
        if iteration == MLE_MAX_ITERATIONS || !(det.abs() > 0.0) {
            break;
        }
        // Newton direction -H^{-1} g
        let dir = [
            -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
            -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
        ];
        let mut step = 1.0;
        loop {
            let cand = [beta[0] + step * dir[0], beta[1] + step * dir[1]];
            let cand_ll = log_posterior(&cand, data)?;
            // near the optimum the log-likelihood cannot resolve the gain; fall back to the gradient
            let cand_g = log_posterior_gradient(&cand, data)?;
            if cand_ll >= ll || cand_g[0].hypot(cand_g[1]) < norm || step < 1e-10 {
                beta = cand;
                ll = cand_ll;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::NonConvergence {
        iterations: MLE_MAX_ITERATIONS,
        trace,
    })
}

/// The posterior as a sampling target.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbitPosterior {
    pub data: ProbitData,
}

impl Target<Coefficients> for ProbitPosterior {
    fn log_density(&self, beta: &Coefficients) -> f64 {
        log_posterior(beta, &self.data).unwrap_or(f64::NAN)
    }

    fn dimension(&self) -> usize {
        2
    }
}

/// Isotropic Gaussian random walk on the coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbitRandomWalk {
    tau: f64,
    step: Normal<f64>,
}

impl ProbitRandomWalk {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::invalid("tau", tau, "must be a positive finite number"));
        }
        Ok(ProbitRandomWalk {
            tau,
            step: Normal::new(0.0, tau).expect("positive scale"),
        })
    }
}

impl Proposal<Coefficients> for ProbitRandomWalk {
    fn sample<R: Rng + ?Sized>(&self, x: &Coefficients, rng: &mut R) -> Coefficients {
        [x[0] + self.step.sample(rng), x[1] + self.step.sample(rng)]
    }

    fn log_density(&self, y: &Coefficients, x: &Coefficients) -> f64 {
        let d0 = (y[0] - x[0]) / self.tau;
        let d1 = (y[1] - x[1]) / self.tau;
        -0.5 * (d0 * d0 + d1 * d1) - 2.0 * (self.tau.ln() + HALF_LN_2PI)
    }

    fn kind(&self) -> ProposalKind {
        ProposalKind::SymmetricRandomWalk
    }
}

pub fn make_probit(data: ProbitData, tau: f64) -> Result<(ProbitPosterior, ProbitRandomWalk)> {
    Ok((ProbitPosterior { data }, ProbitRandomWalk::new(tau)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn log_phi_matches_direct_evaluation_and_is_continuous() {
        assert!((log_phi(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_phi(1.2816) - 0.9f64.ln()).abs() < 1e-5);
        // both branches agree at the switch point
        let below = -0.5 * 400.0 - 20f64.ln() - HALF_LN_2PI + mills_series(-20.0).ln();
        let above = libm::erfc(20.0 * FRAC_1_SQRT_2).ln() - LN_2;
        assert!((below - above).abs() < 1e-12, "{below} vs {above}");
        assert!(log_phi(-40.0).is_finite());
        assert!(log_phi(-1e3).is_finite());
        assert!(log_phi(40.0) == 0.0 || log_phi(40.0) > -1e-300);
        assert!((inverse_mills(-20.0 + 1e-9) - inverse_mills(-20.0 - 1e-9)).abs() < 1e-6);
    }

    #[test]
    fn zero_coefficients_give_half_probabilities() {
        let data = ProbitData::from_raw(&[20.0, 30.0, 25.0], &[true, false, true]).unwrap();
        let lp = log_posterior(&[0.0, 0.0], &data).unwrap();
        assert!((lp - 3.0 * 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn single_observation_example() {
        let data = ProbitData {
            covariates: vec![[1.0, 0.0]],
            outcomes: vec![true],
            bmi_mean: 0.0,
            bmi_sd: 1.0,
        };
        let lp = log_posterior(&[1.2816, 7.0], &data).unwrap();
        assert!((lp - normal_cdf(1.2816).ln()).abs() < 1e-14);
        assert!((lp - 0.9f64.ln()).abs() < 1e-5);
    }

    #[test]
    fn non_finite_coefficients_are_rejected() {
        let data = ProbitData::synthetic(50, [0.0, 1.0], 1).unwrap();
        assert!(log_posterior(&[f64::NAN, 0.0], &data).is_err());
        assert!(log_posterior_gradient(&[0.0, f64::INFINITY], &data).is_err());
    }

    #[test]
    fn standardisation_and_class_checks() {
        let d = ProbitData::from_raw(&[18.0, 40.0], &[false, true]).unwrap();
        let mean: f64 = d.covariates().iter().map(|x| x[1]).sum::<f64>() / 2.0;
        assert!(mean.abs() < 1e-15);
        let err = ProbitData::from_raw(&[18.0, 40.0], &[true, true]).unwrap_err().to_string();
        assert!(err.contains("single-class"));
        assert!(ProbitData::from_raw(&[18.0, 18.0], &[true, false]).is_err());
    }

    #[test]
    fn loads_comma_and_whitespace_files() {
        let dir = tempfile::tempdir().unwrap();
        let comma = dir.path().join("a.csv");
        std::fs::write(&comma, "\"npreg\",\"bmi\",\"type\"\n1,30.5,Yes\n2,22.1,No\n").unwrap();
        let d = load_pima(&comma, &PimaColumns::default()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.outcomes(), &[true, false]);

        let ws = dir.path().join("b.txt");
        let mut f = std::fs::File::create(&ws).unwrap();
        writeln!(f, "npreg glu bp skin bmi ped age type").unwrap();
        writeln!(f, "6 148 72 35 33.6 0.627 50 Yes").unwrap();
        writeln!(f, "1  85 66 29 26.6 0.351 31 No").unwrap();
        writeln!(f, "1  89 66 23 28.1 0.167 21 No").unwrap();
        drop(f);
        assert_eq!(load_pima(&ws, &PimaColumns::default()).unwrap().len(), 3);

        let missing = load_pima(
            &ws,
            &PimaColumns {
                bmi: "weight".into(),
                outcome: "type".into(),
            },
        )
        .unwrap_err()
        .to_string();
        assert!(missing.contains("weight"));

        let bad = dir.path().join("c.csv");
        std::fs::write(&bad, "bmi,type\n30,1\nabc,0\n").unwrap();
        assert!(load_pima(&bad, &PimaColumns::default()).unwrap_err().to_string().contains("row 3"));

        let one = dir.path().join("d.csv");
        std::fs::write(&one, "bmi,type\n30,1\n25,1\n").unwrap();
        assert!(load_pima(&one, &PimaColumns::default()).unwrap_err().to_string().contains("single-class"));
    }

    #[test]
    fn bundled_sample_loads() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/pima_synthetic.csv");
        let d = load_pima(path, &PimaColumns::default()).unwrap();
        assert!(d.len() >= 50);
    }

    #[test]
    fn intercept_only_mle() {
        // covariate uncorrelated with outcome by construction
        let bmi = [1.0, 2.0, 3.0, 4.0, 1.0, 2.0, 3.0, 4.0];
        let y = [true, true, true, true, false, false, false, false];
        let data = ProbitData::from_raw(&bmi, &y).unwrap();
        let fit = fit_mle(&data).unwrap();
        assert!(fit.beta[1].abs() < 1e-8);
        assert!(fit.beta[0].abs() < 1e-8);
        assert!(fit.gradient_norm < 1e-8);

        let bmi = [1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0];
        let y = [true, true, true, false, true, true, true, false];
        let data = ProbitData::from_raw(&bmi, &y).unwrap();
        let fit = fit_mle(&data).unwrap();
        let probit_075 = 0.674_489_750_196_081_7;
        assert!((fit.beta[0] - probit_075).abs() < 1e-7, "{:?}", fit.beta);
        assert!(fit.beta[1].abs() < 1e-7);
        assert!(fit.log_likelihood > log_posterior(&[0.0, 0.0], &data).unwrap());
    }
}
