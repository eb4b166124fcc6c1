//! Run configuration: a flat JSON object, optionally overridden from the
//! command line, plus the `min:max:steps` sweep syntax.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Domain;
use crate::nonlinearity::{parse_catalog, parse_table, Extension, Nonlinearity, NonlinearitySpec};
use crate::problem::ProblemSpec;

fn default_level() -> u32 {
    3
}
fn default_min_level() -> u32 {
    1
}
fn default_certificate_level() -> u32 {
    2
}
fn default_a1() -> f64 {
    1.0
}
fn default_half() -> f64 {
    0.5
}
fn default_f() -> String {
    "exp_critical".into()
}
fn default_trials() -> usize {
    100
}
fn default_num_dirs() -> usize {
    256
}
fn default_weak_tests() -> usize {
    32
}
fn default_n_stages() -> usize {
    16
}
fn default_min_n() -> u64 {
    10
}
fn default_continuation_tol() -> f64 {
    1e-6
}
fn default_slack() -> f64 {
    1e-3
}
fn default_max_iterations() -> usize {
    500
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("nlap-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(rename = "N")]
    pub dim: usize,
    /// Defaults to the unit square for `N = 2` and the unit cube for `N = 3`.
    #[serde(default)]
    pub domain: Option<Domain>,
    /// Finest mesh level.
    #[serde(default = "default_level")]
    pub level: u32,
    /// Coarsest level of the refinement sweep.
    #[serde(default = "default_min_level")]
    pub min_level: u32,
    #[serde(default = "default_certificate_level")]
    pub certificate_level: u32,

    /// Explicit `λ`; mutually exclusive with `lambda_fraction`.
    #[serde(default)]
    pub lambda: Option<f64>,
    /// `λ = lambda_fraction · λ*`; used when `lambda` is absent (default ½).
    #[serde(default)]
    pub lambda_fraction: Option<f64>,
    #[serde(default = "default_a1")]
    pub a1: f64,
    #[serde(default)]
    pub a2: f64,
    #[serde(default = "default_half")]
    pub r1: f64,
    #[serde(default = "default_half")]
    pub r2: f64,

    /// Catalog name, e.g. `exp_critical(1)`; ignored when `f_table` is set.
    #[serde(default = "default_f")]
    pub f: String,
    /// Two-column CSV of `(t, f(t))` samples.
    #[serde(default)]
    pub f_table: Option<PathBuf>,
    #[serde(default)]
    pub extension: Extension,
    pub a3: f64,
    pub alpha: f64,
    pub r3: f64,

    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_num_dirs")]
    pub num_dirs: usize,
    #[serde(default = "default_weak_tests")]
    pub weak_form_tests: usize,

    /// Explicit `n` values; when absent the schedule is `n₀·2^j` with
    /// `n₀ = max(n*, min_n)`.
    #[serde(default)]
    pub n_schedule: Option<Vec<u64>>,
    #[serde(default = "default_n_stages")]
    pub n_stages: usize,
    #[serde(default = "default_min_n")]
    pub min_n: u64,

    #[serde(default)]
    pub stage_tol: Option<f64>,
    #[serde(default = "default_continuation_tol")]
    pub continuation_tol: f64,
    #[serde(default = "default_slack")]
    pub comparison_slack: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,

    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Run even when `λ ≥ λ*` or `n₀ < n*`; the report is flagged.
    #[serde(default)]
    pub force: bool,
}

impl Default for RunConfig {
    /// `N = 2` on the unit square with `f(t) = t³ exp(t²)`, which satisfies
    /// the growth hypothesis with `a3 = α = 1`, `r3 = 3`.
    fn default() -> Self {
        Self {
            dim: 2,
            domain: None,
            level: default_level(),
            min_level: default_min_level(),
            certificate_level: default_certificate_level(),
            lambda: None,
            lambda_fraction: None,
            a1: default_a1(),
            a2: 0.0,
            r1: default_half(),
            r2: default_half(),
            f: "exp_critical(3)".into(),
            f_table: None,
            extension: Extension::Zero,
            a3: 1.0,
            alpha: 1.0,
            r3: 3.0,
            trials: default_trials(),
            seed: 0,
            num_dirs: default_num_dirs(),
            weak_form_tests: default_weak_tests(),
            n_schedule: None,
            n_stages: default_n_stages(),
            min_n: default_min_n(),
            stage_tol: None,
            continuation_tol: default_continuation_tol(),
            comparison_slack: default_slack(),
            max_iterations: default_max_iterations(),
            output_dir: default_output_dir(),
            force: false,
        }
    }
}

/// How `λ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Value(f64),
    Fraction(f64),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn domain(&self) -> Domain {
        self.domain.unwrap_or(if self.dim == 3 { Domain::UnitCube } else { Domain::UnitSquare })
    }

    pub fn lambda_choice(&self) -> Result<LambdaChoice> {
        match (self.lambda, self.lambda_fraction) {
            (Some(_), Some(_)) => Err(Error::config(
                "lambda_fraction",
                "give either lambda or lambda_fraction, not both",
            )),
            (Some(l), None) => Ok(LambdaChoice::Value(l)),
            (None, Some(f)) => Ok(LambdaChoice::Fraction(f)),
            (None, None) => Ok(LambdaChoice::Fraction(0.5)),
        }
    }

    /// Checks that do not need the nonlinearity or the constants.
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::config("N", "only N = 2 and N = 3 are supported"));
        }
        if self.domain().dim() != self.dim {
            return Err(Error::config("domain", format!("{} does not have dimension {}", self.domain(), self.dim)));
        }
        let max_level = if self.dim == 3 { 5 } else { 8 };
        if self.level > max_level {
            return Err(Error::config("level", format!("must be at most {max_level} for N = {}", self.dim)));
        }
        if self.level < 1 {
            return Err(Error::config("level", "must be at least 1"));
        }
        if self.min_level > self.level {
            return Err(Error::config("min_level", "must not exceed level"));
        }
        if self.certificate_level > self.level || self.certificate_level < 1 {
            return Err(Error::config("certificate_level", "must lie in [1, level]"));
        }
        match self.lambda_choice()? {
            LambdaChoice::Value(l) if !(l.is_finite() && l >= 0.0) => {
                return Err(Error::config("lambda", "must be finite and nonnegative"));
            }
            LambdaChoice::Fraction(f) if !(f.is_finite() && f >= 0.0) => {
                return Err(Error::config("lambda_fraction", "must be finite and nonnegative"));
            }
            _ => {}
        }
        if self.trials < 100 {
            return Err(Error::config("trials", "must be at least 100"));
        }
        if self.num_dirs < 64 {
            return Err(Error::config("num_dirs", "must be at least 64"));
        }
        if let Some(ns) = &self.n_schedule {
            if ns.is_empty() || ns.contains(&0) {
                return Err(Error::config("n_schedule", "must be a nonempty list of positive integers"));
            }
            if ns.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::config("n_schedule", "must be nondecreasing"));
            }
            if ns.iter().any(|&n| n > u32::MAX as u64) {
                return Err(Error::config("n_schedule", "entries must fit in 32 bits"));
            }
        }
        if self.n_stages == 0 || self.n_stages > 24 {
            return Err(Error::config("n_stages", "must lie in [1, 24]"));
        }
        if self.min_n == 0 {
            return Err(Error::config("min_n", "must be positive"));
        }
        if let Some(t) = self.stage_tol {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::config("stage_tol", "must be positive"));
            }
        }
        for (field, v) in [
            ("continuation_tol", self.continuation_tol),
            ("comparison_slack", self.comparison_slack),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations", "must be positive"));
        }
        Ok(())
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        match &self.f_table {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config("f_table", format!("{}: {e}", path.display())))?;
                Ok(Nonlinearity::tabulated(parse_table(&text)?, self.extension))
            }
            None => {
                let entry = parse_catalog(&self.f).map_err(|e| Error::config("f", e.to_string()))?;
                Ok(Nonlinearity::catalog(entry, self.dim, self.extension))
            }
        }
    }

    pub fn nonlinearity_spec(&self) -> Result<NonlinearitySpec> {
        NonlinearitySpec::new(self.nonlinearity()?, self.a3, self.alpha, self.r3, self.dim)
    }

    /// Problem with the given `λ`.
    pub fn problem(&self, lambda: f64) -> Result<ProblemSpec> {
        let spec = ProblemSpec {
            dim: self.dim,
            domain: self.domain(),
            lambda,
            a1: self.a1,
            a2: self.a2,
            r1: self.r1,
            r2: self.r2,
            nonlinearity: self.nonlinearity_spec()?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// `min:max:steps`, inclusive of both ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

pub const MAX_SWEEP_STEPS: usize = 10_000;

impl Sweep {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.trim().split(':').collect();
        let [lo, hi, steps] = parts.as_slice() else {
            return Err(Error::Parse(format!("sweep `{text}` is not of the form min:max:steps")));
        };
        let num = |s: &str, what: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("sweep {what} `{s}` is not a number")))?;
            if v.is_finite() && v >= 0.0 {
                Ok(v)
            } else {
                Err(Error::Parse(format!("sweep {what} must be finite and nonnegative")))
            }
        };
        let min = num(lo, "minimum")?;
        let max = num(hi, "maximum")?;
        let steps: usize = steps
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("sweep step count `{steps}` is not an integer")))?;
        if steps == 0 || steps > MAX_SWEEP_STEPS {
            return Err(Error::Parse(format!("sweep step count must lie in [1, {MAX_SWEEP_STEPS}]")));
        }
        if min > max {
            return Err(Error::Parse("sweep minimum exceeds maximum".into()));
        }
        if steps == 1 && min != max {
            return Err(Error::Parse("a single-step sweep needs min = max".into()));
        }
        Ok(Self { min, max, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let d = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.max } else { self.min + d * i as f64 })
            .collect()
    }
}
