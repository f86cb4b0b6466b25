use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::{DrawMode, WeightOrder, DEFAULT_MAX_PROPOSALS, DEFAULT_PRODUCT_FLOOR};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    /// N(0,1) target, Gaussian random walk with scale tau.
    GaussianRw,
    /// N(0,1) target, Cauchy(0, tau) independence proposal.
    CauchyIndependence,
    /// Exp(lambda) target, Exp(mu) independence proposal.
    ExpIndependence,
    /// Geometric(beta) target on the integers, +-1 walk.
    GeometricRw,
    /// Flat-prior probit posterior, bivariate random walk with scale tau.
    Probit,
}

impl ModelName {
    pub fn scale_name(self) -> &'static str {
        match self {
            ModelName::ExpIndependence => "mu",
            ModelName::GeometricRw => "beta",
            _ => "tau",
        }
    }

    pub fn has_oracle(self) -> bool {
        matches!(self, ModelName::ExpIndependence | ModelName::GeometricRw)
    }

    pub fn dimension(self) -> usize {
        if self == ModelName::Probit {
            2
        } else {
            1
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ModelName::GaussianRw => "gaussian_rw",
            ModelName::CauchyIndependence => "cauchy_independence",
            ModelName::ExpIndependence => "exp_independence",
            ModelName::GeometricRw => "geometric_rw",
            ModelName::Probit => "probit",
        };
        f.write_str(s)
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian_rw" => Ok(ModelName::GaussianRw),
            "cauchy_independence" => Ok(ModelName::CauchyIndependence),
            "exp_independence" => Ok(ModelName::ExpIndependence),
            "geometric_rw" => Ok(ModelName::GeometricRw),
            "probit" => Ok(ModelName::Probit),
            other => Err(Error::Config(format!(
                "unknown model {other:?}; expected gaussian_rw, cauchy_independence, exp_independence, geometric_rw or probit"
            ))),
        }
    }
}

/// A named test function `h`.
///
/// Scalar models use `x`, `x^2`, `x>c`; the probit model uses `beta1`,
/// `beta2`, `beta2^2`, `beta2>c`. `p` is the per-block draw `alpha(z, y0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Coordinate(usize),
    Square(usize),
    Above(usize, f64),
    LeavingDraw,
}

impl TestFunction {
    pub fn parse(name: &str, dimension: usize) -> Result<Self> {
        let name = name.trim();
        if name == "p" {
            return Ok(TestFunction::LeavingDraw);
        }
        let unknown = || Error::Config(format!("unknown test function {name:?} for a {dimension}-dimensional state"));
        let (coord, rest) = if let Some(rest) = name.strip_prefix("beta") {
            let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
            let j: usize = digits.parse().map_err(|_| unknown())?;
            if dimension < 2 || j == 0 || j > dimension {
                return Err(unknown());
            }
            (j - 1, &rest[digits.len()..])
        } else if let Some(rest) = name.strip_prefix('x') {
            if dimension != 1 {
                return Err(unknown());
            }
            (0, rest)
        } else {
            return Err(unknown());
        };
        match rest {
            "" => Ok(TestFunction::Coordinate(coord)),
            "^2" => Ok(TestFunction::Square(coord)),
            _ => {
                let threshold = rest.strip_prefix('>').ok_or_else(unknown)?;
                let c: f64 = threshold.parse().map_err(|_| unknown())?;
                Ok(TestFunction::Above(coord, c))
            }
        }
    }

    /// Value at state coordinates `x`; `leaving` is the block's `alpha(z, y0)`.
    pub fn eval(&self, x: &[f64], leaving: Option<f64>) -> f64 {
        match *self {
            TestFunction::Coordinate(j) => x[j],
            TestFunction::Square(j) => x[j] * x[j],
            TestFunction::Above(j, c) => (x[j] > c) as u8 as f64,
            TestFunction::LeavingDraw => leaving.unwrap_or(f64::NAN),
        }
    }

    pub fn needs_leaving_draw(&self) -> bool {
        matches!(self, TestFunction::LeavingDraw)
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_lambda() -> f64 {
    1.0
}
fn default_iterations() -> usize {
    100
}
fn default_replications() -> usize {
    1000
}
fn default_k() -> Vec<WeightOrder> {
    vec![WeightOrder::Infinite]
}
fn default_h() -> Vec<String> {
    vec!["x".into()]
}
fn default_true() -> bool {
    true
}
fn default_max_proposals() -> u64 {
    DEFAULT_MAX_PROPOSALS
}
fn default_product_floor() -> f64 {
    DEFAULT_PRODUCT_FLOOR
}
fn default_probit_data() -> String {
    "synthetic".into()
}
fn default_synthetic_n() -> usize {
    332
}
fn default_synthetic_beta() -> [f64; 2] {
    [0.3, 0.8]
}
fn default_bmi() -> String {
    "bmi".into()
}
fn default_outcome() -> String {
    "type".into()
}

/// Flat experiment configuration; every key can be overridden from the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub model: ModelName,
    /// Proposal scales (tau or mu) or, for the geometric model, target parameters beta.
    pub scales: Vec<f64>,
    /// Rate of the exponential target.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Path length `N` per replication.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_k")]
    pub k: Vec<WeightOrder>,
    #[serde(default = "default_h")]
    pub h: Vec<String>,
    /// Base seed; replication `r` uses `seed + r` at every scale.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default)]
    pub control_variate: bool,
    #[serde(default, skip_serializing)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub weight_draws: DrawMode,
    #[serde(default = "default_max_proposals")]
    pub max_proposals: u64,
    #[serde(default = "default_product_floor")]
    pub product_floor: f64,
    /// Keep per-iteration running estimates for the first test function.
    #[serde(default = "default_true")]
    pub envelopes: bool,
    /// `synthetic` or a path to a delimited file with BMI and outcome columns.
    #[serde(default = "default_probit_data")]
    pub probit_data: String,
    #[serde(default = "default_synthetic_n")]
    pub probit_synthetic_n: usize,
    #[serde(default = "default_synthetic_beta")]
    pub probit_synthetic_beta: [f64; 2],
    #[serde(default = "default_bmi")]
    pub bmi_column: String,
    #[serde(default = "default_outcome")]
    pub outcome_column: String,
    /// Fixed starting state; by default chains start from the target (or the MLE for probit).
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl ExperimentConfig {
    /// Minimal configuration for `model` with defaults elsewhere.
    pub fn new(model: ModelName, scales: Vec<f64>) -> Self {
        ExperimentConfig {
            name: default_name(),
            model,
            scales,
            lambda: default_lambda(),
            iterations: default_iterations(),
            replications: default_replications(),
            k: default_k(),
            h: default_h(),
            seed: None,
            out_dir: None,
            oracle: false,
            control_variate: false,
            threads: None,
            weight_draws: DrawMode::default(),
            max_proposals: default_max_proposals(),
            product_floor: default_product_floor(),
            envelopes: true,
            probit_data: default_probit_data(),
            probit_synthetic_n: default_synthetic_n(),
            probit_synthetic_beta: default_synthetic_beta(),
            bmi_column: default_bmi(),
            outcome_column: default_outcome(),
            x0: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn test_functions(&self) -> Result<Vec<TestFunction>> {
        self.h.iter().map(|h| TestFunction::parse(h, self.model.dimension())).collect()
    }

    /// Orders sorted and deduplicated.
    pub fn orders(&self) -> Vec<WeightOrder> {
        let mut k = self.k.clone();
        k.sort();
        k.dedup();
        k
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::invalid("replications", self.replications, "must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::invalid("iterations", self.iterations, "must be at least 1"));
        }
        if self.k.is_empty() {
            return Err(Error::Config("k list must not be empty".into()));
        }
        if self.h.is_empty() {
            return Err(Error::Config("h list must not be empty".into()));
        }
        if self.scales.is_empty() {
            return Err(Error::Config("scales must not be empty".into()));
        }
        if self.seed.is_none() {
            return Err(Error::Config("a seed is required".into()));
        }
        if self.oracle && !self.model.has_oracle() {
            return Err(Error::Config(format!("oracle requested but model {} has no closed-form leaving probability", self.model)));
        }
        if self.threads == Some(0) {
            return Err(Error::invalid("threads", 0, "must be at least 1"));
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.model.dimension() {
                return Err(Error::invalid("x0", format!("{x0:?}"), format!("needs {} coordinates", self.model.dimension())));
            }
        }
        self.test_functions()?;
        Ok(())
    }
}
