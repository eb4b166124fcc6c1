//! Property suites behind the `check` subcommand.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::constants::{alpha_n, compute_constants, tm_probe, ProbeFamily};
use crate::error::{Error, Result};
use crate::nonlinearity::{
    breakpoint_defect, check_hypothesis_f, linspace, make_fk, uniform_convergence_check, verify_growth_bounds,
};
use crate::operators::{holder_sides, DiscreteField, DiscreteProblem, ProblemSpec, DEFAULT_EPS_REG};
use crate::space::{GalerkinSpace, SpaceHierarchy};

pub const SUITES: [&str; 5] = ["fk", "space", "operators", "tm", "constants"];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub checks: usize,
    pub failures: Vec<String>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub command: &'static str,
    pub suites: Vec<SuiteResult>,
    pub total_checks: usize,
    pub total_failures: usize,
    pub passed: bool,
}

#[derive(Default)]
struct Tally {
    checks: usize,
    failures: Vec<String>,
}

impl Tally {
    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    // an error inside a check counts as a failure of that check
    fn attempt<T>(&mut self, label: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.checks += 1;
                self.failures.push(format!("{label}: {e}"));
                None
            }
        }
    }

    fn finish(self, name: &str) -> SuiteResult {
        SuiteResult {
            name: name.to_string(),
            checks: self.checks,
            passed: self.failures.is_empty(),
            failures: self.failures,
        }
    }
}

/// Runs the named suites (all of them when `only` is empty).
pub fn run_checks(cfg: &RunConfig, only: &[String]) -> Result<CheckSummary> {
    cfg.validate()?;
    for name in only {
        if !SUITES.contains(&name.as_str()) {
            return Err(Error::config("suite", format!("unknown suite `{name}`; known: {}", SUITES.join(", "))));
        }
    }
    let selected: Vec<&str> = SUITES
        .iter()
        .copied()
        .filter(|s| only.is_empty() || only.iter().any(|o| o == s))
        .collect();
    let mut suites = Vec::new();
    for name in selected {
        let result = match name {
            "fk" => fk_suite(cfg)?,
            "space" => space_suite(cfg)?,
            "operators" => operators_suite(cfg)?,
            "tm" => tm_suite(cfg)?,
            _ => constants_suite(cfg)?,
        };
        suites.push(result);
    }
    let total_checks = suites.iter().map(|s| s.checks).sum();
    let total_failures = suites.iter().map(|s| s.failures.len()).sum();
    Ok(CheckSummary {
        command: "check",
        passed: total_failures == 0,
        suites,
        total_checks,
        total_failures,
    })
}

fn fk_suite(cfg: &RunConfig) -> Result<SuiteResult> {
    let mut t = Tally::default();
    let nl = cfg.nonlinearity_spec()?;
    if let Some(h) = t.attempt("hypothesis F", check_hypothesis_f(&nl, &linspace(-3.0, 3.0, 2001))) {
        t.check(h.passed, || format!("hypothesis F: {} of {} grid points violate the bound", h.violations.len(), h.checked));
    }
    let grid = linspace(-3.0, 3.0, 2000);
    for k in [1, 2, 4, 8, 16] {
        let Some(reg) = t.attempt(&format!("f_{k}"), make_fk(&nl, k)) else { continue };
        if let Some(g) = t.attempt(&format!("f_{k} growth"), verify_growth_bounds(&reg, &grid)) {
            t.check(g.passed, || format!("f_{k}: {} growth-bound violations", g.violations.len()));
        }
        if let Some(d) = t.attempt(&format!("f_{k} breakpoints"), breakpoint_defect(&reg)) {
            t.check(d <= 1e-9, || format!("f_{k}: breakpoint jump {d:e}"));
        }
    }
    if let Some(table) = t.attempt("uniform convergence", uniform_convergence_check(&nl, 2.0, &[1, 4, 16, 64])) {
        // only convergence is guaranteed; small k can be worse than k = 1
        t.check(table.final_is_min, || format!("sup |f_k - f| not smallest at the largest k: {:?}", table.errors));
    }
    Ok(t.finish("fk"))
}

fn space_suite(cfg: &RunConfig) -> Result<SuiteResult> {
    let mut t = Tally::default();
    let level = cfg.level.min(3);
    let hier = SpaceHierarchy::build(cfg.domain(), level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for l in 1..=level {
        let space = hier.space(l)?;
        if space.dim() == 0 {
            continue;
        }
        for _ in 0..5 {
            let a: Vec<f64> = (0..space.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..space.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let c = rng.random_range(-3.0..3.0);
            let (na, nb) = (space.norm(&a), space.norm(&b));
            let scaled: Vec<f64> = a.iter().map(|v| c * v).collect();
            let ns = space.norm(&scaled);
            t.check((ns - c.abs() * na).abs() <= 1e-12 * (1.0 + ns), || {
                format!("level {l}: norm not homogeneous ({ns} vs {})", c.abs() * na)
            });
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let nsum = space.norm(&sum);
            t.check(nsum <= (na + nb) * (1.0 + 1e-12), || format!("level {l}: triangle inequality fails"));
            t.check(na > 0.0, || format!("level {l}: nonzero vector has zero norm"));
            if l < level && cfg.domain() != crate::mesh::Domain::UnitDisk {
                let xi = crate::space::CoefficientVector::new(l, a.clone());
                if let Some(p) = t.attempt("prolongation", hier.prolong(&xi, l + 1)) {
                    let np = hier.space(l + 1)?.norm(&p.xi);
                    t.check((np - na).abs() <= 1e-10 * (1.0 + na), || {
                        format!("level {l}: prolongation changed the norm ({na} -> {np})")
                    });
                }
            }
        }
        let total: f64 = space.hat_integrals().iter().sum();
        t.check(total > 0.0 && total < space.mesh().total_volume(), || format!("level {l}: hat integrals sum to {total}"));
    }
    Ok(t.finish("space"))
}

/// Largest `‖J e_j - (F(ξ + h e_j) - F(ξ - h e_j))/(2h)‖ / ‖FD column‖`.
pub fn jacobian_fd_error(problem: &DiscreteProblem<'_>, space: &GalerkinSpace, xi: &[f64], eps_reg: f64) -> Result<f64> {
    let field = DiscreteField::from_slice(space, xi)?;
    let jac = problem.jacobian(&field, eps_reg)?;
    let mut worst = 0.0f64;
    for j in 0..space.dim() {
        let h = 1e-6 * (1.0 + xi[j].abs());
        let mut plus = xi.to_vec();
        plus[j] += h;
        let mut minus = xi.to_vec();
        minus[j] -= h;
        let fp = problem.residual(&DiscreteField::from_slice(space, &plus)?)?;
        let fm = problem.residual(&DiscreteField::from_slice(space, &minus)?)?;
        let mut diff = 0.0;
        let mut scale = 0.0;
        for i in 0..space.dim() {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            diff += (jac[(i, j)] - fd).powi(2);
            scale += fd * fd;
        }
        worst = worst.max(diff.sqrt() / scale.sqrt().max(1e-300));
    }
    Ok(worst)
}

fn operators_suite(cfg: &RunConfig) -> Result<SuiteResult> {
    let mut t = Tally::default();
    let spec: ProblemSpec = cfg.problem(cfg.lambda.unwrap_or(0.1))?;
    let level = cfg.level.min(2);
    let space = GalerkinSpace::build(cfg.domain(), level)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.min_n;
    let k = u32::try_from(n).map_err(|_| Error::config("min_n", "must fit in 32 bits"))?;
    let Some(reg) = t.attempt("f_n", make_fk(&spec.nonlinearity, k)) else {
        return Ok(t.finish("operators"));
    };
    let problem = DiscreteProblem::new(&spec, &reg, n);
    for trial in 0..3 {
        let xi: Vec<f64> = (0..space.dim()).map(|_| rng.random_range(0.05..0.5)).collect();
        if let Some(err) = t.attempt("jacobian", jacobian_fd_error(&problem, &space, &xi, DEFAULT_EPS_REG)) {
            t.check(err <= 1e-4, || format!("trial {trial}: Jacobian column error {err:e}"));
        }
        let field = DiscreteField::from_slice(&space, &xi)?;
        if let (Some(f), Some(direct), Some((p, q))) = (
            t.attempt("residual", problem.residual(&field)),
            t.attempt("pairing", problem.pairing(&field)),
            t.attempt("decomposition", problem.decomposition(&field)),
        ) {
            let dotted: f64 = f.iter().zip(&xi).map(|(a, b)| a * b).sum();
            t.check((dotted - direct).abs() <= 1e-10 * (1.0 + direct.abs()), || {
                format!("trial {trial}: <F(xi), xi> = {dotted} but the pairing is {direct}")
            });
            t.check((p + q - direct).abs() <= 1e-12 * (1.0 + direct.abs()), || {
                format!("trial {trial}: decomposition {p} + {q} misses {direct}")
            });
        }
        let (lhs, rhs) = holder_sides(&field, spec.r2);
        t.check(lhs <= rhs * (1.0 + 1e-12), || format!("trial {trial}: Holder bound {lhs} > {rhs}"));
    }
    Ok(t.finish("operators"))
}

fn tm_suite(cfg: &RunConfig) -> Result<SuiteResult> {
    let mut t = Tally::default();
    let space = GalerkinSpace::build(cfg.domain(), cfg.level.min(4))?;
    let alpha = alpha_n(cfg.dim)?;
    let measure = space.mesh().total_volume();
    if let Some(zero) = t.attempt("zero probe", tm_probe(&space, alpha, ProbeFamily::Zero)) {
        t.check((zero - measure).abs() <= 1e-12 * measure, || format!("zero probe gave {zero}, expected {measure}"));
    }
    let mut last = 0.0;
    for frac in [0.25, 0.5, 0.75, 1.0] {
        if let Some(v) = t.attempt("moser probe", tm_probe(&space, frac * alpha, ProbeFamily::Moser)) {
            t.check(v >= last, || format!("integral decreased in sigma at {frac} alpha_N"));
            last = v;
        }
    }
    if let Some(l) = t.attempt("L estimate", crate::constants::estimate_l(&space)) {
        t.check(l >= 1.0, || format!("L estimate {l} below 1"));
    }
    Ok(t.finish("tm"))
}

fn constants_suite(cfg: &RunConfig) -> Result<SuiteResult> {
    let mut t = Tally::default();
    let pi = std::f64::consts::PI;
    t.check((alpha_n(2)? - 4.0 * pi).abs() <= 1e-12, || "alpha_2 differs from 4 pi".into());
    t.check((alpha_n(3)? - 3.0 * (4.0 * pi).sqrt()).abs() <= 1e-12, || "alpha_3 differs from 3 sqrt(4 pi)".into());
    let Some(resolved) = t.attempt("constants", crate::pipeline::resolve(cfg)) else {
        return Ok(t.finish("constants"));
    };
    let c = &resolved.constants;
    let spec = &resolved.spec;
    t.check(c.l_estimate >= 1.0, || format!("L estimate {} below 1", c.l_estimate));
    t.check(c.r <= c.r_moser_bound && c.r <= c.r_growth_bound, || "r exceeds one of its bounds".into());
    if c.lambda < c.lambda_star {
        t.check(c.rho > 0.0, || format!("lambda < lambda* but rho = {}", c.rho));
        match c.n_star {
            Some(n) => {
                let tail = c.tail(spec);
                t.check(tail.lhs(n) < c.rho / 2.0, || format!("tail at n* = {n} is not below rho/2"));
                t.check(n == 1 || tail.lhs(n - 1) >= c.rho / 2.0, || format!("n* = {n} is not minimal"));
            }
            None => t.check(false, || "no n* although rho > 0".into()),
        }
    }
    // the estimates may only grow with the level
    if cfg.level >= 2 {
        let coarse = compute_constants(&resolved.hierarchy, cfg.level - 1, spec, cfg.trials, cfg.seed);
        if let Some(coarse) = t.attempt("coarse constants", coarse) {
            for (name, a, b) in [
                ("Cemb1", coarse.cemb1, c.cemb1),
                ("Cemb2", coarse.cemb2, c.cemb2),
                ("Cemb3", coarse.cemb3, c.cemb3),
                ("Cemb4", coarse.cemb4, c.cemb4),
            ] {
                t.check(b >= a, || format!("{name} dropped from {a} to {b} under refinement"));
            }
        }
    }
    Ok(t.finish("constants"))
}
