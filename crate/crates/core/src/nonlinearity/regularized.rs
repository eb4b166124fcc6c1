use serde::Serialize;

use super::{linspace, NonlinearitySpec, BOUND_SLACK};
use crate::error::{Error, Result};

/// The six pieces of `f_k`, ordered from left to right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `s ≤ -k`
    NegConst,
    /// `-k ≤ s ≤ -1/k`
    NegShift,
    /// `-1/k ≤ s ≤ 0`
    NegLinear,
    /// `0 ≤ s ≤ 1/k`
    PosLinear,
    /// `1/k ≤ s ≤ k`
    PosShift,
    /// `s ≥ k`
    PosConst,
}

impl Branch {
    pub const ALL: [Branch; 6] = [
        Branch::NegConst,
        Branch::NegShift,
        Branch::NegLinear,
        Branch::PosLinear,
        Branch::PosShift,
        Branch::PosConst,
    ];
}

/// Lipschitz regularization `f_k` of `f`.
///
/// The differences `G(b) - G(a)` in the definition are evaluated as direct
/// integrals `∫_a^b f`, which avoids cancellation for large `k`.
#[derive(Debug, Clone)]
pub struct RegularizedNonlinearity {
    k: u32,
    base: NonlinearitySpec,
    // k^2 [G(-2/k) - G(-1/k)] and k^2 [G(2/k) - G(1/k)]
    neg_slope: f64,
    pos_slope: f64,
    // values on the two constant branches
    neg_const: f64,
    pos_const: f64,
    c_k: Option<f64>,
    c1: f64,
    c2: f64,
}

/// Builds `f_k` for `k ≥ 1`.
pub fn make_fk(spec: &NonlinearitySpec, k: u32) -> Result<RegularizedNonlinearity> {
    RegularizedNonlinearity::new(spec, k)
}

impl RegularizedNonlinearity {
    pub fn new(spec: &NonlinearitySpec, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("regularization index k must be at least 1".into()));
        }
        let kf = k as f64;
        let inv = 1.0 / kf;
        let f = &spec.f;
        // G(-2/k) - G(-1/k) = -∫_{-2/k}^{-1/k} f
        let neg_slope = -kf * kf * f.integral(-2.0 * inv, -inv)?;
        let pos_slope = kf * kf * f.integral(inv, 2.0 * inv)?;
        // -k [G(-k-1/k) - G(-k)] = k ∫_{-k-1/k}^{-k} f; for fast-growing f
        // these overflow once k is large, which only matters if the constant
        // branches are ever evaluated
        let neg_const = f.integral(-kf - inv, -kf).map_or(f64::NEG_INFINITY, |v| kf * v);
        let pos_const = f.integral(kf, kf + inv).map_or(f64::INFINITY, |v| kf * v);
        let q = spec.critical_exponent();
        Ok(Self {
            k,
            base: spec.clone(),
            neg_slope,
            pos_slope,
            neg_const,
            pos_const,
            c_k: None,
            c1: spec.a3 * 2f64.powf(spec.r3),
            c2: spec.a3 * 2f64.powf(spec.r3 - 1.0) * (2f64.powf(q) * spec.alpha).exp(),
        })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn base(&self) -> &NonlinearitySpec {
        &self.base
    }

    /// Growth constant for `|s| ≥ 1/k`.
    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Growth constant for `|s| ≤ 1/k`.
    pub fn c2(&self) -> f64 {
        self.c2
    }

    /// Last Lipschitz estimate stored by [`lipschitz_estimate`].
    pub fn c_k(&self) -> Option<f64> {
        self.c_k
    }

    /// Branch used to evaluate at `s`; breakpoints go to the inner branch.
    pub fn branch(&self, s: f64) -> Branch {
        let kf = self.k as f64;
        let inv = 1.0 / kf;
        if s < -kf {
            Branch::NegConst
        } else if s < -inv {
            Branch::NegShift
        } else if s < 0.0 {
            Branch::NegLinear
        } else if s <= inv {
            Branch::PosLinear
        } else if s <= kf {
            Branch::PosShift
        } else {
            Branch::PosConst
        }
    }

    /// Evaluates the formula of `branch` at `s`, whether or not `s` lies in
    /// that branch's interval.
    pub fn eval_branch(&self, branch: Branch, s: f64) -> Result<f64> {
        let kf = self.k as f64;
        let inv = 1.0 / kf;
        let f = &self.base.f;
        Ok(match branch {
            Branch::NegConst => self.neg_const,
            // -k [G(s - 1/k) - G(s)] = k ∫_{s-1/k}^{s} f
            Branch::NegShift => kf * f.integral(s - inv, s)?,
            Branch::NegLinear => self.neg_slope * s,
            Branch::PosLinear => self.pos_slope * s,
            Branch::PosShift => kf * f.integral(s, s + inv)?,
            Branch::PosConst => self.pos_const,
        })
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        if !s.is_finite() {
            return Err(Error::InvalidInput(format!("f_k evaluated at {s}")));
        }
        let value = self.eval_branch(self.branch(s), s)?;
        if !value.is_finite() {
            return Err(Error::Evaluation { point: s });
        }
        Ok(value)
    }

    /// `2^{N/(N-1)} alpha`, the exponent coefficient in both growth bounds.
    fn growth_exponent(&self) -> f64 {
        2f64.powf(self.base.critical_exponent()) * self.base.alpha
    }

    /// `C1 |s|^{r3} exp(2^{N/(N-1)} alpha |s|^{N/(N-1)})`
    pub fn outer_bound(&self, s: f64) -> f64 {
        let a = s.abs();
        self.c1 * a.powf(self.base.r3) * (self.growth_exponent() * a.powf(self.base.critical_exponent())).exp()
    }

    /// `C2 |s|^2 exp(2^{N/(N-1)} alpha |s|^{N/(N-1)})`
    pub fn inner_bound(&self, s: f64) -> f64 {
        let a = s.abs();
        self.c2 * a * a * (self.growth_exponent() * a.powf(self.base.critical_exponent())).exp()
    }
}

/// Estimates the Lipschitz constant of `f_k` on `[-M, M]` by forward
/// difference quotients with step `M·1e-6` and stores it in `reg`.
pub fn lipschitz_estimate(reg: &mut RegularizedNonlinearity, m: f64) -> Result<f64> {
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidInput(format!("working interval half-width {m} must be positive")));
    }
    let h = m * 1e-6;
    let mut sup = 0.0f64;
    for s in linspace(-m, m, 10_001) {
        let slope = (reg.eval(s + h)? - reg.eval(s)?).abs() / h;
        sup = sup.max(slope);
    }
    reg.c_k = Some(sup);
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthCheck {
    Sign,
    Outer,
    Inner,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthViolation {
    pub s: f64,
    pub check: GrowthCheck,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthReport {
    pub k: u32,
    pub checked: usize,
    pub violations: Vec<GrowthViolation>,
    pub passed: bool,
}

impl GrowthReport {
    pub fn count(&self, check: GrowthCheck) -> usize {
        self.violations.iter().filter(|v| v.check == check).count()
    }
}

/// Checks `s f_k(s) ≥ 0` everywhere, the `C1` bound on `|s| ≥ 1/k` and the
/// `C2` bound on `|s| ≤ 1/k`.
pub fn verify_growth_bounds(reg: &RegularizedNonlinearity, grid: &[f64]) -> Result<GrowthReport> {
    let inv = 1.0 / reg.k as f64;
    let mut violations = Vec::new();
    for &s in grid {
        let value = s * reg.eval(s)?;
        if value < 0.0 {
            violations.push(GrowthViolation {
                s,
                check: GrowthCheck::Sign,
                value,
                bound: 0.0,
            });
        }
        if s.abs() >= inv {
            let bound = reg.outer_bound(s);
            if value > bound * (1.0 + BOUND_SLACK) {
                violations.push(GrowthViolation {
                    s,
                    check: GrowthCheck::Outer,
                    value,
                    bound,
                });
            }
        }
        if s.abs() <= inv {
            let bound = reg.inner_bound(s);
            if value > bound * (1.0 + BOUND_SLACK) {
                violations.push(GrowthViolation {
                    s,
                    check: GrowthCheck::Inner,
                    value,
                    bound,
                });
            }
        }
    }
    Ok(GrowthReport {
        k: reg.k,
        checked: grid.len(),
        passed: violations.is_empty(),
        violations,
    })
}

/// Largest jump of `f_k` across its breakpoints `±1/k`, `±k`, measured as
/// `|left - right| / max(1, |left|)`.
pub fn breakpoint_defect(reg: &RegularizedNonlinearity) -> Result<f64> {
    let kf = reg.k as f64;
    let inv = 1.0 / kf;
    let pairs = [
        (-kf, Branch::NegConst, Branch::NegShift),
        (-inv, Branch::NegShift, Branch::NegLinear),
        (0.0, Branch::NegLinear, Branch::PosLinear),
        (inv, Branch::PosLinear, Branch::PosShift),
        (kf, Branch::PosShift, Branch::PosConst),
    ];
    let mut worst = 0.0f64;
    for (s, left, right) in pairs {
        let a = reg.eval_branch(left, s)?;
        let b = reg.eval_branch(right, s)?;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Evaluation { point: s });
        }
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub ks: Vec<u32>,
    pub errors: Vec<f64>,
    /// The last entry is the smallest error in the table.
    pub final_is_min: bool,
    pub strictly_decreasing: bool,
}

/// `sup_{|s| ≤ M} |f_k(s) - f(s)|` on a 10⁴-point grid for each `k`.
pub fn uniform_convergence_check(
    spec: &NonlinearitySpec,
    m: f64,
    ks: &[u32],
) -> Result<ConvergenceTable> {
    if ks.is_empty() || ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("ks must be nonempty and strictly increasing".into()));
    }
    if !(m.is_finite() && m > 0.0) {
        return Err(Error::InvalidInput(format!("interval half-width {m} must be positive")));
    }
    let grid = linspace(-m, m, 10_000);
    let exact: Vec<f64> = grid.iter().map(|&s| spec.f.eval(s)).collect();
    let mut errors = Vec::with_capacity(ks.len());
    for &k in ks {
        let reg = make_fk(spec, k)?;
        let mut sup = 0.0f64;
        for (&s, &fs) in grid.iter().zip(&exact) {
            sup = sup.max((reg.eval(s)? - fs).abs());
        }
        errors.push(sup);
    }
    let last = *errors.last().expect("nonempty");
    Ok(ConvergenceTable {
        ks: ks.to_vec(),
        final_is_min: errors.iter().all(|&e| last <= e),
        strictly_decreasing: errors.windows(2).all(|w| w[1] < w[0]),
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Catalog, Extension, Nonlinearity};

    fn linear_spec() -> NonlinearitySpec {
        let f = Nonlinearity::catalog(Catalog::Linear(1.0), 2, Extension::Odd);
        NonlinearitySpec::new(f, 1.0, 1.0, 3.0, 2).unwrap()
    }

    fn exp_spec() -> NonlinearitySpec {
        let f = Nonlinearity::catalog(Catalog::ExpCritical(1.0), 2, Extension::Odd);
        NonlinearitySpec::new(f, 1.0, 1.0, 3.0, 2).unwrap()
    }

    #[test]
    fn shifted_branch_closed_form() {
        // k ∫_s^{s+1/k} t dt = s + 1/(2k)
        let reg = make_fk(&linear_spec(), 2).unwrap();
        assert_eq!(reg.branch(1.0), Branch::PosShift);
        assert!((reg.eval(1.0).unwrap() - 1.25).abs() < 1e-14);
    }

    #[test]
    fn inner_negative_branch() {
        let reg = make_fk(&linear_spec(), 2).unwrap();
        assert_eq!(reg.branch(-0.25), Branch::NegLinear);
        assert!((reg.eval(-0.25).unwrap() + 0.375).abs() < 1e-14);
    }

    #[test]
    fn zero_at_origin() {
        for k in [1, 3, 17] {
            assert_eq!(make_fk(&exp_spec(), k).unwrap().eval(0.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn growth_constants() {
        let reg = make_fk(&exp_spec(), 3).unwrap();
        assert_eq!(reg.c1(), 8.0);
        assert!((reg.c2() - 4.0 * 4f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn breakpoints_use_inner_branch() {
        let reg = make_fk(&linear_spec(), 4).unwrap();
        assert_eq!(reg.branch(0.25), Branch::PosLinear);
        assert_eq!(reg.branch(-0.25), Branch::NegLinear);
        assert_eq!(reg.branch(4.0), Branch::PosShift);
        assert_eq!(reg.branch(-4.0), Branch::NegShift);
    }

    #[test]
    fn constant_branch_for_linear() {
        // k ∫_k^{k+1/k} t dt = k + 1/(2k)
        let reg = make_fk(&linear_spec(), 2).unwrap();
        assert!((reg.eval(7.0).unwrap() - 2.25).abs() < 1e-14);
        assert!((reg.eval(-7.0).unwrap() + 2.25).abs() < 1e-14);
    }

    #[test]
    fn rejects_k_zero() {
        assert!(make_fk(&linear_spec(), 0).is_err());
    }
}
