//! The reaction term `f`, its growth certificate, and the Lipschitz
//! regularizations `f_k` used by the approximate problems.

mod regularized;
mod tabulated;

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quad1d;

pub use regularized::{
    breakpoint_defect, lipschitz_estimate, make_fk, uniform_convergence_check, verify_growth_bounds, Branch,
    ConvergenceTable, GrowthCheck, GrowthReport, GrowthViolation, RegularizedNonlinearity,
};
pub use tabulated::{parse_table, MonotoneCubic};

/// Absolute tolerance for every antiderivative evaluation.
pub const G_TOL: f64 = 1e-12;

// Anchor spacing of the cached antiderivative table.
const ANCHOR_STEP: f64 = 0.25;

/// How `f` is continued to negative arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Extension {
    /// `f(s) = 0` for `s < 0`.
    #[default]
    Zero,
    /// `f(s) = -f(-s)` for `s < 0`.
    Odd,
    /// The formula is used on the whole line.
    Formula,
}

/// Built-in nonlinearities selectable by name.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Catalog {
    Zero,
    /// `c t`
    Linear(f64),
    /// `t^p`
    Power(f64),
    /// `t^p exp(t^{N/(N-1)})`; `p = 1` gives the `t exp(t^2)` family for N = 2.
    ExpCritical(f64),
}

impl fmt::Display for Catalog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Catalog::Zero => write!(f, "zero"),
            Catalog::Linear(c) => write!(f, "linear({c})"),
            Catalog::Power(p) => write!(f, "power({p})"),
            Catalog::ExpCritical(p) => write!(f, "exp_critical({p})"),
        }
    }
}

/// Parses `zero`, `linear`, `linear(c)`, `power(p)`, `exp_critical` or
/// `exp_critical(p)`.
pub fn parse_catalog(name: &str) -> Result<Catalog> {
    let name = name.trim();
    let (head, arg) = match name.find('(') {
        Some(open) => {
            let rest = &name[open + 1..];
            let close = rest
                .rfind(')')
                .ok_or_else(|| Error::Parse(format!("unclosed parenthesis in `{name}`")))?;
            if !rest[close + 1..].trim().is_empty() {
                return Err(Error::Parse(format!("trailing characters in `{name}`")));
            }
            let arg: f64 = rest[..close]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad parameter in `{name}`")))?;
            if !arg.is_finite() {
                return Err(Error::Parse(format!("non-finite parameter in `{name}`")));
            }
            (name[..open].trim(), Some(arg))
        }
        None => (name, None),
    };
    match (head, arg) {
        ("zero", None) => Ok(Catalog::Zero),
        ("linear", None) => Ok(Catalog::Linear(1.0)),
        ("linear", Some(c)) => Ok(Catalog::Linear(c)),
        ("power", Some(p)) if p > 0.0 => Ok(Catalog::Power(p)),
        ("power", Some(_)) => Err(Error::Parse("power(p) needs p > 0".into())),
        ("power", None) => Err(Error::Parse("power needs an exponent, e.g. power(2)".into())),
        ("exp_critical", None) => Ok(Catalog::ExpCritical(1.0)),
        ("exp_critical", Some(p)) if p > 0.0 => Ok(Catalog::ExpCritical(p)),
        ("exp_critical", Some(_)) => Err(Error::Parse("exp_critical(p) needs p > 0".into())),
        _ => Err(Error::Parse(format!("unknown nonlinearity `{name}`"))),
    }
}

#[derive(Clone)]
enum Profile {
    Catalog(Catalog),
    Tabulated(Arc<MonotoneCubic>),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// Lazily grown table of `G` at multiples of `ANCHOR_STEP`, one side each.
#[derive(Default)]
struct AnchorCache {
    positive: RwLock<Vec<f64>>,
    negative: RwLock<Vec<f64>>,
}

/// A continuous scalar nonlinearity with a cached antiderivative.
#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    profile: Profile,
    extension: Extension,
    // N/(N-1) for the exponential catalog entries
    critical_exponent: f64,
    anchors: Arc<AnchorCache>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("extension", &self.extension)
            .finish()
    }
}

impl Nonlinearity {
    fn with_profile(name: String, profile: Profile, extension: Extension, dim: usize) -> Self {
        let dim = dim.max(2) as f64;
        Self {
            name,
            profile,
            extension,
            critical_exponent: dim / (dim - 1.0),
            anchors: Arc::default(),
        }
    }

    pub fn catalog(entry: Catalog, dim: usize, extension: Extension) -> Self {
        Self::with_profile(entry.to_string(), Profile::Catalog(entry), extension, dim)
    }

    pub fn zero() -> Self {
        Self::catalog(Catalog::Zero, 2, Extension::Zero)
    }

    pub fn tabulated(table: MonotoneCubic, extension: Extension) -> Self {
        Self::with_profile("tabulated".into(), Profile::Tabulated(Arc::new(table)), extension, 2)
    }

    /// A user function; with [`Extension::Formula`] it is used on the whole line.
    pub fn custom<F>(name: &str, f: F, extension: Extension) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::with_profile(name.into(), Profile::Custom(Arc::new(f)), extension, 2)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn extension(&self) -> Extension {
        self.extension
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.profile, Profile::Catalog(Catalog::Zero))
    }

    fn profile(&self, s: f64) -> f64 {
        match &self.profile {
            Profile::Catalog(Catalog::Zero) => 0.0,
            Profile::Catalog(Catalog::Linear(c)) => c * s,
            Profile::Catalog(Catalog::Power(p)) => s.signum() * s.abs().powf(*p),
            Profile::Catalog(Catalog::ExpCritical(p)) => {
                let a = s.abs();
                s.signum() * a.powf(*p) * a.powf(self.critical_exponent).exp()
            }
            Profile::Tabulated(t) => t.eval(s),
            Profile::Custom(f) => f(s),
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        if s >= 0.0 {
            return self.profile(s);
        }
        match self.extension {
            Extension::Zero => 0.0,
            Extension::Odd => -self.profile(-s),
            Extension::Formula => self.profile(s),
        }
    }

    /// `∫_a^b f`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if self.is_zero() {
            return Ok(0.0);
        }
        // Split at 0 where the extension may have a kink.
        if a < 0.0 && b > 0.0 {
            return Ok(self.integral(a, 0.0)? + self.integral(0.0, b)?);
        }
        if b < 0.0 && a > 0.0 {
            return Ok(-self.integral(b, a)?);
        }
        quad1d::integrate(|x| self.eval(x), a, b, G_TOL)
    }

    /// `G(s) = ∫_0^s f`, assembled from cached anchor panels.
    pub fn antiderivative(&self, s: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        if !s.is_finite() {
            return Err(Error::InvalidInput(format!("antiderivative at {s}")));
        }
        let dir = s.signum();
        let steps = (s.abs() / ANCHOR_STEP).floor() as usize;
        let cache = if dir > 0.0 {
            &self.anchors.positive
        } else {
            &self.anchors.negative
        };
        let anchor = {
            let known = cache.read().expect("anchor cache poisoned");
            known.get(steps).copied()
        };
        let anchor = match anchor {
            Some(v) => v,
            None => {
                let mut table = cache.write().expect("anchor cache poisoned");
                if table.is_empty() {
                    table.push(0.0);
                }
                while table.len() <= steps {
                    let i = table.len();
                    let lo = dir * (i - 1) as f64 * ANCHOR_STEP;
                    let hi = dir * i as f64 * ANCHOR_STEP;
                    let panel = self.integral(lo, hi)?;
                    let last = table[i - 1];
                    table.push(last + panel);
                }
                table[steps]
            }
        };
        let start = dir * steps as f64 * ANCHOR_STEP;
        Ok(anchor + self.integral(start, s)?)
    }
}

/// `f` together with the constants of its growth certificate
/// `0 ≤ s f(s) ≤ a3 |s|^{r3+1} exp(alpha |s|^{N/(N-1)})`.
#[derive(Debug, Clone)]
pub struct NonlinearitySpec {
    pub f: Nonlinearity,
    pub a3: f64,
    pub alpha: f64,
    pub r3: f64,
    pub dim: usize,
}

impl NonlinearitySpec {
    pub fn new(f: Nonlinearity, a3: f64, alpha: f64, r3: f64, dim: usize) -> Result<Self> {
        let spec = Self {
            f,
            a3,
            alpha,
            r3,
            dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a3.is_finite() && self.a3 > 0.0) {
            return Err(Error::config("a3", "must be a positive finite number"));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::config("alpha", "must be a positive finite number"));
        }
        if !(2..=3).contains(&self.dim) {
            return Err(Error::config("N", "must be 2 or 3"));
        }
        let n = self.dim as f64;
        if !(self.r3.is_finite() && self.r3 > n - 1.0) {
            return Err(Error::config("r3", format!("must exceed N-1 = {}", n - 1.0)));
        }
        Ok(())
    }

    /// `N/(N-1)`
    pub fn critical_exponent(&self) -> f64 {
        let n = self.dim as f64;
        n / (n - 1.0)
    }

    /// Right-hand side of the growth certificate at `s`.
    pub fn growth_bound(&self, s: f64) -> f64 {
        let a = s.abs();
        self.a3 * a.powf(self.r3 + 1.0) * (self.alpha * a.powf(self.critical_exponent())).exp()
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Violation {
    pub s: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
    pub passed: bool,
}

// Allowance for rounding when the certificate is attained with equality.
pub(crate) const BOUND_SLACK: f64 = 1e-12;

/// Samples `0 ≤ s f(s) ≤ a3 |s|^{r3+1} exp(alpha |s|^{N/(N-1)})` on `grid`.
pub fn check_hypothesis_f(spec: &NonlinearitySpec, grid: &[f64]) -> Result<HypothesisReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty validation grid".into()));
    }
    let mut violations = Vec::new();
    for &s in grid {
        if !s.is_finite() {
            return Err(Error::InvalidInput(format!("grid point {s} is not finite")));
        }
        let fs = spec.f.eval(s);
        if !fs.is_finite() {
            return Err(Error::Evaluation { point: s });
        }
        let value = s * fs;
        let bound = spec.growth_bound(s);
        if value < 0.0 || value > bound * (1.0 + BOUND_SLACK) {
            violations.push(Violation { s, value, bound });
        }
    }
    Ok(HypothesisReport {
        checked: grid.len(),
        passed: violations.is_empty(),
        violations,
    })
}

/// `count` equally spaced points on `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_exp_t2() -> Nonlinearity {
        Nonlinearity::catalog(Catalog::ExpCritical(1.0), 2, Extension::Odd)
    }

    #[test]
    fn catalog_names() {
        assert_eq!(parse_catalog("zero").unwrap(), Catalog::Zero);
        assert_eq!(parse_catalog(" linear ").unwrap(), Catalog::Linear(1.0));
        assert_eq!(parse_catalog("linear(-1)").unwrap(), Catalog::Linear(-1.0));
        assert_eq!(parse_catalog("power( 2.5 )").unwrap(), Catalog::Power(2.5));
        assert_eq!(parse_catalog("exp_critical").unwrap(), Catalog::ExpCritical(1.0));
        assert_eq!(parse_catalog("exp_critical(3)").unwrap(), Catalog::ExpCritical(3.0));
        for bad in ["", "power", "power(-1)", "linear(", "cubic", "linear(1)x", "linear(nan)"] {
            assert!(parse_catalog(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn exp_critical_uses_dimension() {
        let f2 = Nonlinearity::catalog(Catalog::ExpCritical(1.0), 2, Extension::Zero);
        let f3 = Nonlinearity::catalog(Catalog::ExpCritical(1.0), 3, Extension::Zero);
        assert!((f2.eval(1.5) - 1.5 * (2.25f64).exp()).abs() < 1e-12);
        assert!((f3.eval(1.5) - 1.5 * 1.5f64.powf(1.5).exp()).abs() < 1e-12);
        assert_eq!(f2.eval(-1.0), 0.0);
    }

    #[test]
    fn hypothesis_f_on_integer_grid() {
        let spec = NonlinearitySpec::new(t_exp_t2(), 1.0, 1.0, 3.0, 2).unwrap();
        let report = check_hypothesis_f(&spec, &[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        assert!(report.passed, "{:?}", report.violations);
    }

    #[test]
    fn hypothesis_f_zero_function() {
        let spec = NonlinearitySpec::new(Nonlinearity::zero(), 0.5, 2.0, 1.5, 2).unwrap();
        let report = check_hypothesis_f(&spec, &linspace(-3.0, 3.0, 101)).unwrap();
        assert!(report.passed);
    }

    #[test]
    fn hypothesis_f_sign_violation() {
        let f = Nonlinearity::catalog(Catalog::Linear(-1.0), 2, Extension::Odd);
        let spec = NonlinearitySpec::new(f, 1.0, 1.0, 3.0, 2).unwrap();
        let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let report = check_hypothesis_f(&spec, &grid).unwrap();
        assert!(!report.passed);
        let failing: Vec<f64> = report.violations.iter().map(|v| v.s).collect();
        assert_eq!(failing, vec![-2.0, -1.0, 1.0, 2.0]);
        for v in &report.violations {
            assert_eq!(v.value, -v.s * v.s);
        }
    }

    #[test]
    fn hypothesis_f_names_non_finite_point() {
        let f = Nonlinearity::custom("blowup", |s| 1.0 / (s - 1.0), Extension::Formula);
        let spec = NonlinearitySpec::new(f, 1.0, 1.0, 3.0, 2).unwrap();
        match check_hypothesis_f(&spec, &[0.0, 1.0]) {
            Err(Error::Evaluation { point }) => assert_eq!(point, 1.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spec_validation() {
        assert!(NonlinearitySpec::new(t_exp_t2(), 1.0, 1.0, 1.0, 2).is_err());
        assert!(NonlinearitySpec::new(t_exp_t2(), 0.0, 1.0, 3.0, 2).is_err());
        assert!(NonlinearitySpec::new(t_exp_t2(), 1.0, -1.0, 3.0, 2).is_err());
        assert!(NonlinearitySpec::new(t_exp_t2(), 1.0, 1.0, 2.5, 3).is_ok());
        assert!(NonlinearitySpec::new(t_exp_t2(), 1.0, 1.0, 2.0, 3).is_err());
    }

    #[test]
    fn antiderivative_examples() {
        let lin = Nonlinearity::catalog(Catalog::Linear(1.0), 2, Extension::Odd);
        assert_eq!(lin.antiderivative(0.0).unwrap(), 0.0);
        assert!((lin.antiderivative(2.0).unwrap() - 2.0).abs() < 1e-13);
        assert!((lin.antiderivative(-3.3).unwrap() - 3.3 * 3.3 / 2.0).abs() < 1e-12);
        let g1 = t_exp_t2().antiderivative(1.0).unwrap();
        assert!((g1 - (std::f64::consts::E - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn antiderivative_derivative_matches_f() {
        let f = t_exp_t2();
        for &s in &[-1.7, -0.6, -0.05, 0.05, 0.3, 0.9, 1.6, 2.2] {
            let h = 1e-4;
            let d = (f.antiderivative(s + h).unwrap() - f.antiderivative(s - h).unwrap()) / (2.0 * h);
            let rel = (d - f.eval(s)).abs() / f.eval(s).abs();
            assert!(rel < 1e-6, "s={s} rel={rel}");
        }
    }

    #[test]
    fn antiderivative_is_shareable() {
        let f = t_exp_t2();
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let f = f.clone();
                std::thread::spawn(move || f.antiderivative(0.5 + i as f64 * 0.4).unwrap())
            })
            .collect();
        for (i, h) in handles.into_iter().enumerate() {
            let s: f64 = 0.5 + i as f64 * 0.4;
            assert!((h.join().unwrap() - ((s * s).exp() - 1.0) / 2.0).abs() < 1e-10);
        }
    }
}
