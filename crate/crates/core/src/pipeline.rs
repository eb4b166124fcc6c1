//! The full solve: constants, regime check, subsolution, sphere
//! certificate, refinement in `m`, continuation in `n`, and the checks on
//! the limit field.

use serde::Serialize;

use crate::config::{LambdaChoice, RunConfig};
use crate::constants::{compute_constants, ConstantsReport, CERTIFICATE_LABEL};
use crate::error::{Error, Result};
use crate::nonlinearity::{check_hypothesis_f, linspace, make_fk, NonlinearitySpec};
use crate::operators::{DiscreteField, DiscreteProblem, ProblemSpec};
use crate::problem::HypothesisNotes;
use crate::solver::{
    coercivity_certificate, continue_in_n, final_weak_form_check, geometric_schedule, negative_part_check,
    refine_in_m, solve_fixed, stage_tolerance, CoercivityCertificate, PositivityVerdict,
    SolverOptions, StageRecord, WeakFormCheck, BALL_SLACK,
};
use crate::space::{CoefficientVector, SpaceHierarchy};
use crate::subsolution::{comparison_check, solve_p5, ComparisonVerdict, P5Options, SubsolutionField};

/// Problem, hierarchy and constants with `λ` fixed.
pub struct Resolved {
    pub spec: ProblemSpec,
    pub hierarchy: SpaceHierarchy,
    pub constants: ConstantsReport,
}

/// Builds the problem, computes the constants on the finest level and
/// settles `λ`, either as given or as a fraction of `λ*`.
pub fn resolve(cfg: &RunConfig) -> Result<Resolved> {
    cfg.validate()?;
    let choice = cfg.lambda_choice()?;
    let provisional = match choice {
        LambdaChoice::Value(l) => l,
        LambdaChoice::Fraction(_) => 0.0,
    };
    let spec = cfg.problem(provisional)?;
    let hierarchy = SpaceHierarchy::build(cfg.domain(), cfg.level)?;
    let constants = compute_constants(&hierarchy, cfg.level, &spec, cfg.trials, cfg.seed)?;
    let (spec, constants) = match choice {
        LambdaChoice::Value(_) => (spec, constants),
        LambdaChoice::Fraction(frac) => {
            if !constants.lambda_star.is_finite() {
                return Err(Error::config(
                    "lambda_fraction",
                    "lambda* is infinite (a1 = a2 = 0); give lambda explicitly",
                ));
            }
            let spec = spec.with_lambda(frac * constants.lambda_star);
            let constants = compute_constants(&hierarchy, cfg.level, &spec, cfg.trials, cfg.seed)?;
            (spec, constants)
        }
    };
    Ok(Resolved {
        spec,
        hierarchy,
        constants,
    })
}

/// `λ < λ*`, or an error citing the threshold.
pub fn check_regime(constants: &ConstantsReport) -> Result<()> {
    if constants.lambda < constants.lambda_star {
        Ok(())
    } else {
        Err(Error::Regime {
            lambda: constants.lambda,
            lambda_star: constants.lambda_star,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthSummary {
    pub checked: usize,
    pub violations: usize,
    pub passed: bool,
}

/// Samples the growth hypothesis on `[-3, 3]`.
pub fn growth_summary(nl: &NonlinearitySpec) -> Result<GrowthSummary> {
    let report = check_hypothesis_f(nl, &linspace(-3.0, 3.0, 2001))?;
    Ok(GrowthSummary {
        checked: report.checked,
        violations: report.violations.len(),
        passed: report.passed,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsolutionSummary {
    pub level: u32,
    pub energy: f64,
    pub margin: f64,
    pub max_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

impl From<&SubsolutionField> for SubsolutionSummary {
    fn from(v: &SubsolutionField) -> Self {
        Self {
            level: v.xi.level,
            energy: v.energy,
            margin: v.margin,
            max_value: v.max_value,
            gradient_norm: v.gradient_norm,
            iterations: v.iterations,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitSummary {
    pub level: u32,
    pub unknowns: usize,
    pub n: u64,
    pub norm: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
    /// Configuration or regime rejection rather than a numerical failure.
    pub rejection: bool,
}

/// Everything written to `report.json` by `solve`. Every key is always
/// present; stages that did not run are `null`.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub command: &'static str,
    pub certificate: &'static str,
    pub config: RunConfig,
    pub lambda: f64,
    pub lambda_star: f64,
    pub forced: bool,
    pub regime_notes: Vec<String>,
    pub hypotheses: HypothesisNotes,
    pub growth_hypothesis: GrowthSummary,
    pub constants: ConstantsReport,
    pub n_schedule: Vec<u64>,
    pub coercivity: Option<CoercivityCertificate>,
    pub subsolution: Option<SubsolutionSummary>,
    pub refinement_differences: Vec<f64>,
    pub refinement_decreasing: Option<bool>,
    pub continuation_ns: Vec<u64>,
    pub continuation_differences: Vec<f64>,
    pub continuation_converged: Option<bool>,
    pub stages: Vec<StageRecord>,
    pub a_priori_bound: Option<bool>,
    pub positivity: Option<PositivityVerdict>,
    pub comparison: Option<ComparisonVerdict>,
    pub weak_form: Option<WeakFormCheck>,
    pub limit: Option<LimitSummary>,
    pub passed: bool,
    pub failure: Option<StageFailure>,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn fail(&mut self, stage: &str, err: &Error) {
        self.passed = false;
        self.failure = Some(StageFailure {
            stage: stage.to_string(),
            message: err.to_string(),
            rejection: err.is_rejection(),
        });
    }
}

/// Output of [`run_solve`]: the report plus the fields to export.
pub struct SolveRun {
    pub report: SolveReport,
    pub hierarchy: SpaceHierarchy,
    pub solution: Option<CoefficientVector>,
    pub subsolution: Option<SubsolutionField>,
}

/// Runs the whole scheme. Errors before the constants exist (bad
/// configuration) are returned; later failures are recorded in the report.
pub fn run_solve(cfg: &RunConfig) -> Result<SolveRun> {
    let Resolved {
        spec,
        hierarchy,
        constants,
    } = resolve(cfg)?;
    let report = SolveReport {
        command: "solve",
        certificate: CERTIFICATE_LABEL,
        config: cfg.clone(),
        lambda: spec.lambda,
        lambda_star: constants.lambda_star,
        forced: false,
        regime_notes: Vec::new(),
        hypotheses: spec.hypothesis_notes(),
        growth_hypothesis: growth_summary(&spec.nonlinearity)?,
        constants: constants.clone(),
        n_schedule: Vec::new(),
        coercivity: None,
        subsolution: None,
        refinement_differences: Vec::new(),
        refinement_decreasing: None,
        continuation_ns: Vec::new(),
        continuation_differences: Vec::new(),
        continuation_converged: None,
        stages: Vec::new(),
        a_priori_bound: None,
        positivity: None,
        comparison: None,
        weak_form: None,
        limit: None,
        passed: false,
        failure: None,
    };
    let mut run = SolveRun {
        report,
        hierarchy,
        solution: None,
        subsolution: None,
    };
    if let Err((stage, err)) = solve_stages(cfg, &spec, &mut run) {
        run.report.fail(stage, &err);
    }
    Ok(run)
}

type StageResult<T> = std::result::Result<T, (&'static str, Error)>;

fn at<T>(stage: &'static str, r: Result<T>) -> StageResult<T> {
    r.map_err(|e| (stage, e))
}

fn solve_stages(cfg: &RunConfig, spec: &ProblemSpec, run: &mut SolveRun) -> StageResult<()> {
    let constants = run.report.constants.clone();
    let report = &mut run.report;
    let hierarchy = &run.hierarchy;

    if let Err(e) = check_regime(&constants) {
        if !cfg.force {
            return Err(("regime", e));
        }
        report.forced = true;
        report.regime_notes.push(e.to_string());
    }
    // outside the certified regime there is no positive margin; fall back
    // to the smallest radius the constants allow
    let r = constants.r;
    let n_star = constants.n_star.unwrap_or(cfg.min_n);
    let ns = match &cfg.n_schedule {
        Some(ns) => ns.clone(),
        None => geometric_schedule(n_star.max(cfg.min_n), cfg.n_stages),
    };
    if ns[0] < n_star {
        let msg = format!("first n = {} is below n* = {n_star}", ns[0]);
        if !cfg.force {
            return Err(("regime", Error::config("n_schedule", msg)));
        }
        report.forced = true;
        report.regime_notes.push(msg);
    }
    report.n_schedule = ns.clone();
    let n0 = ns[0];
    let opts = SolverOptions {
        max_iterations: cfg.max_iterations,
        ..SolverOptions::default()
    };
    let tol = cfg.stage_tol.unwrap_or_else(|| stage_tolerance(spec.dim));
    let nl = &spec.nonlinearity;
    let k0 = u32::try_from(n0).map_err(|_| ("continuation", Error::InvalidInput(format!("n = {n0} is too large"))))?;
    let f0 = at("continuation", make_fk(nl, k0))?;

    // subsolution on the finest level
    let finest = at("subsolution", hierarchy.space(cfg.level))?;
    let v0 = if spec.lambda > 0.0 && spec.a1 > 0.0 {
        let v = at("subsolution", solve_p5(spec, finest, tol, &P5Options::default()))?;
        report.subsolution = Some(SubsolutionSummary::from(&v));
        Some(v)
    } else {
        None
    };

    let problem0 = DiscreteProblem::new(spec, &f0, n0);
    let cert_space = at("coercivity", hierarchy.space(cfg.certificate_level))?;
    let cert = at(
        "coercivity",
        coercivity_certificate(&problem0, cert_space, r, constants.rho, cfg.num_dirs, cfg.seed),
    )?;
    report.coercivity = Some(cert.clone());
    if !cert.passed && !cfg.force {
        return Err((
            "coercivity",
            Error::Hypothesis(format!(
                "pairing on the sphere of radius {r} reached {} <= 0",
                cert.min_pairing
            )),
        ));
    }

    // refinement in m at n0
    let levels: Vec<u32> = (cfg.min_level..=cfg.level).collect();
    let mut stages: Vec<StageRecord>;
    let start = if levels.len() >= 2 {
        let refined = at("refinement", refine_in_m(spec, &f0, n0, hierarchy, &levels, r, None, &opts))?;
        report.refinement_differences = refined.differences.clone();
        report.refinement_decreasing = Some(refined.decreasing);
        stages = refined.stages;
        refined.fields.last().cloned().expect("at least two levels")
    } else {
        let space = at("refinement", hierarchy.space(cfg.level))?;
        let solved = at(
            "refinement",
            solve_fixed(&problem0, space, r, &CoefficientVector::zeros(space), tol, &opts),
        )?;
        stages = vec![StageRecord {
            level: cfg.level,
            n: n0,
            iterations: solved.iterations,
            newton_steps: solved.newton_steps,
            descent_steps: solved.descent_steps,
            residual: solved.residual,
            tolerance: tol,
            xi_norm: solved.norm,
            within_ball: solved.norm <= r + BALL_SLACK,
            coercivity: None,
        }];
        solved.xi
    };
    for s in stages.iter_mut().filter(|s| s.level == cert.level) {
        s.coercivity = Some(cert.clone());
    }
    report.stages = stages;

    // continuation in n on the finest level
    let space = at("continuation", hierarchy.space(cfg.level))?;
    let cont = at(
        "continuation",
        continue_in_n(spec, nl, &ns, space, r, &start, cfg.continuation_tol, &opts),
    )?;
    report.continuation_ns = cont.ns.clone();
    report.continuation_differences = cont.differences.clone();
    report.continuation_converged = Some(cont.converged);
    report.stages.extend(cont.stages.iter().cloned());
    report.a_priori_bound = Some(report.stages.iter().all(|s| s.within_ball));

    // checks on the limit
    let u = at("checks", DiscreteField::new(space, cont.xi.clone()))?;
    let positivity = negative_part_check(&u);
    let weak = at(
        "checks",
        final_weak_form_check(spec, &nl.f, &u, cfg.weak_form_tests, cfg.seed),
    )?;
    let comparison = match &v0 {
        Some(v) => Some(at("checks", comparison_check(&u, v, cfg.comparison_slack))?),
        None => None,
    };
    report.limit = Some(LimitSummary {
        level: cfg.level,
        unknowns: space.dim(),
        n: *cont.ns.last().expect("at least one stage"),
        norm: u.norm(),
        max_value: u.nodal().iter().copied().fold(0.0, f64::max),
    });
    report.passed = cont.converged
        && report.a_priori_bound == Some(true)
        && cert.passed
        && positivity.passed
        && weak.max_defect <= WEAK_FORM_THRESHOLD
        && comparison.as_ref().is_none_or(|c| c.passed);
    report.positivity = Some(positivity);
    report.weak_form = Some(weak);
    report.comparison = comparison;
    run.solution = Some(cont.xi);
    run.subsolution = v0;
    Ok(())
}

/// Largest accepted weak-form defect of the limit field.
pub const WEAK_FORM_THRESHOLD: f64 = 1e-6;

/// Report of the `constants` subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsCommandReport {
    pub command: &'static str,
    pub config: RunConfig,
    pub hypotheses: HypothesisNotes,
    pub growth_hypothesis: GrowthSummary,
    #[serde(flatten)]
    pub constants: ConstantsReport,
}

pub fn run_constants(cfg: &RunConfig) -> Result<ConstantsCommandReport> {
    let resolved = resolve(cfg)?;
    Ok(ConstantsCommandReport {
        command: "constants",
        config: cfg.clone(),
        hypotheses: resolved.spec.hypothesis_notes(),
        growth_hypothesis: growth_summary(&resolved.spec.nonlinearity)?,
        constants: resolved.constants,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsolutionCommandReport {
    pub command: &'static str,
    pub config: RunConfig,
    pub lambda: f64,
    pub subsolution: SubsolutionSummary,
}

/// Solves the sublinear problem on the finest level at the resolved `λ`.
pub fn run_subsolution(cfg: &RunConfig) -> Result<(SubsolutionCommandReport, SpaceHierarchy, SubsolutionField)> {
    let resolved = resolve(cfg)?;
    let space = resolved.hierarchy.space(cfg.level)?;
    let tol = cfg.stage_tol.unwrap_or_else(|| stage_tolerance(cfg.dim));
    let v = solve_p5(&resolved.spec, space, tol, &P5Options::default())?;
    let report = SubsolutionCommandReport {
        command: "subsolution",
        config: cfg.clone(),
        lambda: resolved.spec.lambda,
        subsolution: SubsolutionSummary::from(&v),
    };
    Ok((report, resolved.hierarchy, v))
}
