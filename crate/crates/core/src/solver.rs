//! Ball-constrained root finding for the Galerkin system, the sphere
//! coercivity certificate, refinement in `m`, continuation in `n` and the
//! checks run on the limit field.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::{make_fk, Nonlinearity, NonlinearitySpec};
use crate::operators::{DiscreteField, DiscreteProblem, ProblemSpec, SourceTerm, DEFAULT_EPS_REG};
use crate::space::{CoefficientVector, GalerkinSpace, SpaceHierarchy};

/// Stage tolerance on `‖F(ξ)‖₂` for `N = 2`.
pub const STAGE_TOL_2D: f64 = 1e-10;
/// Stage tolerance on `‖F(ξ)‖₂` for `N = 3`.
pub const STAGE_TOL_3D: f64 = 1e-8;
/// Accept the continuation once consecutive fields differ by less than this.
pub const CONTINUATION_TOL: f64 = 1e-6;
/// Slack on the ball constraint `‖ξ‖_m ≤ r`.
pub const BALL_SLACK: f64 = 1e-12;

pub fn stage_tolerance(dim: usize) -> f64 {
    if dim >= 3 {
        STAGE_TOL_3D
    } else {
        STAGE_TOL_2D
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub eps_reg: f64,
    /// Sufficient-decrease constant of the Armijo test.
    pub armijo: f64,
    /// Smallest line-search step before Newton gives way to descent.
    pub min_step: f64,
    /// Track the pairing decomposition at every iterate.
    pub diagnostics: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            eps_reg: DEFAULT_EPS_REG,
            armijo: 1e-4,
            min_step: 1e-10,
            diagnostics: false,
        }
    }
}

/// Result of one fixed-`(m, n)` solve.
#[derive(Debug, Clone)]
pub struct FixedSolve {
    pub xi: CoefficientVector,
    pub iterations: usize,
    pub newton_steps: usize,
    pub descent_steps: usize,
    pub residual: f64,
    pub norm: f64,
    pub history: Vec<f64>,
    /// Largest `|⟨F(ξ),ξ⟩ - (P + N)|` seen when diagnostics are on.
    pub decomposition_defect: Option<f64>,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scales `xi` back onto the closed ball of radius `r` when it lies outside.
pub fn project_to_ball(space: &GalerkinSpace, xi: &mut [f64], r: f64) -> f64 {
    let norm = space.norm(xi);
    if norm > r {
        let s = r / norm;
        for v in xi.iter_mut() {
            *v *= s;
        }
        r
    } else {
        norm
    }
}

struct Evaluator<'p, 's> {
    problem: &'p DiscreteProblem<'p>,
    space: &'s GalerkinSpace,
}

impl Evaluator<'_, '_> {
    fn residual(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.problem.residual(&DiscreteField::from_slice(self.space, xi)?)
    }

    // residual at a trial point; overflow counts as an infinitely bad point
    fn trial(&self, xi: &[f64]) -> Option<(Vec<f64>, f64)> {
        let f = self.residual(xi).ok()?;
        let n = l2(&f);
        n.is_finite().then_some((f, n))
    }
}

/// Damped Newton with Armijo backtracking on `‖F‖²`, radial projection onto
/// the ball `‖ξ‖_m ≤ r`, and a projected descent step whenever Newton fails.
pub fn solve_fixed(
    problem: &DiscreteProblem<'_>,
    space: &GalerkinSpace,
    r: f64,
    xi0: &CoefficientVector,
    tol: f64,
    opts: &SolverOptions,
) -> Result<FixedSolve> {
    space.check(xi0)?;
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if r.is_nan() || r <= 0.0 {
        return Err(Error::InvalidInput(format!("ball radius must be positive, got {r}")));
    }
    let ev = Evaluator { problem, space };
    let mut xi = xi0.xi.clone();
    project_to_ball(space, &mut xi, r);
    let mut f = ev.residual(&xi)?;
    let mut res = l2(&f);
    if !res.is_finite() {
        return Err(Error::InvalidInput("residual of the initial guess is not finite".into()));
    }
    let mut history = vec![res];
    let mut best = (res, xi.clone());
    let mut newton_steps = 0;
    let mut descent_steps = 0;
    let mut eta = 1.0;
    let mut defect: Option<f64> = None;
    let mut iterations = 0;

    while res > tol && iterations < opts.max_iterations {
        iterations += 1;
        if opts.diagnostics {
            let field = DiscreteField::from_slice(space, &xi)?;
            let (p, n) = problem.decomposition(&field)?;
            let direct: f64 = f.iter().zip(&xi).map(|(a, b)| a * b).sum();
            let d = (direct - p - n).abs();
            defect = Some(defect.map_or(d, |m: f64| m.max(d)));
        }

        let mut accepted = None;
        let field = DiscreteField::from_slice(space, &xi)?;
        if let Ok(jac) = problem.jacobian(&field, opts.eps_reg) {
            let rhs = nalgebra::DVector::from_iterator(f.len(), f.iter().map(|v| -v));
            if let Some(step) = jac.lu().solve(&rhs).filter(|s| s.iter().all(|v| v.is_finite())) {
                let mut t = 1.0;
                while t >= opts.min_step {
                    let mut cand: Vec<f64> = xi.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
                    project_to_ball(space, &mut cand, r);
                    if let Some((fc, nc)) = ev.trial(&cand) {
                        if nc * nc <= (1.0 - 2.0 * opts.armijo * t) * res * res {
                            accepted = Some((cand, fc, nc));
                            break;
                        }
                    }
                    t *= 0.5;
                }
            }
        }
        if accepted.is_some() {
            newton_steps += 1;
        } else {
            // projected descent ξ ← P(ξ - ηF) with adaptive η
            let mut tries = 0;
            while tries < 60 {
                let mut cand: Vec<f64> = xi.iter().zip(&f).map(|(a, g)| a - eta * g).collect();
                project_to_ball(space, &mut cand, r);
                if let Some((fc, nc)) = ev.trial(&cand) {
                    if nc < res {
                        accepted = Some((cand, fc, nc));
                        eta *= 2.0;
                        break;
                    }
                }
                eta *= 0.5;
                tries += 1;
            }
            if accepted.is_none() {
                break;
            }
            descent_steps += 1;
        }
        let (cand, fc, nc) = accepted.expect("a step was accepted");
        xi = cand;
        f = fc;
        res = nc;
        history.push(res);
        if res < best.0 {
            best = (res, xi.clone());
        }
    }

    if res > tol {
        return Err(Error::NonConvergence {
            iterations,
            best_residual: best.0,
            best_iterate: best.1,
            history,
        });
    }
    let norm = space.norm(&xi);
    Ok(FixedSolve {
        xi: CoefficientVector::new(space.level(), xi),
        iterations,
        newton_steps,
        descent_steps,
        residual: res,
        norm,
        history,
        decomposition_defect: defect,
    })
}

/// Sampled minimum of `⟨F(ξ),ξ⟩` over the sphere `‖ξ‖_m = r`.
#[derive(Debug, Clone, Serialize)]
pub struct CoercivityCertificate {
    pub level: u32,
    pub n: u64,
    pub r: f64,
    pub rho: f64,
    pub num_dirs: usize,
    pub seed: u64,
    pub min_pairing: f64,
    pub mean_pairing: f64,
    pub passed: bool,
    /// Passed, but the minimum fell below `ρ/2`.
    pub warning: bool,
}

/// Samples Gaussian directions rescaled to `‖ξ‖_m = r` and evaluates the
/// pairing on each.
pub fn coercivity_certificate(
    problem: &DiscreteProblem<'_>,
    space: &GalerkinSpace,
    r: f64,
    rho: f64,
    num_dirs: usize,
    seed: u64,
) -> Result<CoercivityCertificate> {
    if num_dirs < 64 {
        return Err(Error::InvalidInput(format!("need at least 64 directions, got {num_dirs}")));
    }
    if space.dim() == 0 {
        return Err(Error::DegenerateSpace(format!("level {} has no unknowns", space.level())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dirs = Vec::with_capacity(num_dirs);
    while dirs.len() < num_dirs {
        let mut xi: Vec<f64> = (0..space.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let norm = space.norm(&xi);
        if norm > 0.0 {
            xi.iter_mut().for_each(|v| *v *= r / norm);
            dirs.push(xi);
        }
    }
    let values: Vec<f64> = dirs
        .par_iter()
        .map(|xi| problem.pairing(&DiscreteField::from_slice(space, xi)?))
        .collect::<Result<_>>()?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(CoercivityCertificate {
        level: space.level(),
        n: problem.n,
        r,
        rho,
        num_dirs,
        seed,
        min_pairing: min,
        mean_pairing: mean,
        passed: min > 0.0,
        warning: min > 0.0 && min < 0.5 * rho,
    })
}

/// One accepted stage of the scheme.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub level: u32,
    pub n: u64,
    pub iterations: usize,
    pub newton_steps: usize,
    pub descent_steps: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub xi_norm: f64,
    pub within_ball: bool,
    pub coercivity: Option<CoercivityCertificate>,
}

impl StageRecord {
    fn from_solve(level: u32, n: u64, tol: f64, r: f64, s: &FixedSolve) -> Self {
        Self {
            level,
            n,
            iterations: s.iterations,
            newton_steps: s.newton_steps,
            descent_steps: s.descent_steps,
            residual: s.residual,
            tolerance: tol,
            xi_norm: s.norm,
            within_ball: s.norm <= r + BALL_SLACK,
            coercivity: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub fields: Vec<CoefficientVector>,
    /// `‖u_{L+1} - prolong(u_L)‖` for consecutive levels.
    pub differences: Vec<f64>,
    /// The last two differences decrease.
    pub decreasing: bool,
    pub stages: Vec<StageRecord>,
}

/// Solves `(P_n)` on each of `levels`, warm-starting every level from the
/// prolongation of the previous one.
#[allow(clippy::too_many_arguments)]
pub fn refine_in_m(
    spec: &ProblemSpec,
    source: &dyn SourceTerm,
    n: u64,
    hierarchy: &SpaceHierarchy,
    levels: &[u32],
    r: f64,
    xi0: Option<&CoefficientVector>,
    opts: &SolverOptions,
) -> Result<Refinement> {
    if levels.len() < 2 {
        return Err(Error::InvalidInput("refinement needs at least two levels".into()));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("levels must be strictly increasing".into()));
    }
    let tol = stage_tolerance(spec.dim);
    let problem = DiscreteProblem::new(spec, source, n);
    let mut fields: Vec<CoefficientVector> = Vec::new();
    let mut differences = Vec::new();
    let mut stages = Vec::new();
    for &level in levels {
        let space = hierarchy.space(level)?;
        let start = match (fields.last(), xi0) {
            (Some(prev), _) => hierarchy.prolong(prev, level)?,
            (None, Some(x)) if x.level <= level => hierarchy.prolong(x, level)?,
            _ => CoefficientVector::zeros(space),
        };
        let solved = solve_fixed(&problem, space, r, &start, tol, opts)?;
        if let Some(prev) = fields.last() {
            let p = hierarchy.prolong(prev, level)?;
            let diff: Vec<f64> = solved.xi.xi.iter().zip(&p.xi).map(|(a, b)| a - b).collect();
            differences.push(space.norm(&diff));
        }
        stages.push(StageRecord::from_solve(level, n, tol, r, &solved));
        fields.push(solved.xi);
    }
    let decreasing = differences.len() < 2 || {
        let k = differences.len();
        differences[k - 1] < differences[k - 2]
    };
    Ok(Refinement {
        fields,
        differences,
        decreasing,
        stages,
    })
}

/// `n*·2^j` for `j = 0..count`.
pub fn geometric_schedule(n_star: u64, count: usize) -> Vec<u64> {
    (0..count as u32).map(|j| n_star.max(1).saturating_mul(1 << j)).collect()
}

#[derive(Debug, Clone)]
pub struct Continuation {
    pub xi: CoefficientVector,
    pub ns: Vec<u64>,
    /// `‖u_{n_{j+1}} - u_{n_j}‖` for the stages actually solved.
    pub differences: Vec<f64>,
    pub converged: bool,
    pub stages: Vec<StageRecord>,
}

/// Solves `(P_n)` with `f_n` along `ns`, each stage warm-started from the
/// previous, until consecutive fields differ by at most `cont_tol`.
#[allow(clippy::too_many_arguments)]
pub fn continue_in_n(
    spec: &ProblemSpec,
    f: &NonlinearitySpec,
    ns: &[u64],
    space: &GalerkinSpace,
    r: f64,
    xi0: &CoefficientVector,
    cont_tol: f64,
    opts: &SolverOptions,
) -> Result<Continuation> {
    if ns.is_empty() {
        return Err(Error::InvalidInput("empty n schedule".into()));
    }
    if ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("n schedule must be nondecreasing".into()));
    }
    let tol = stage_tolerance(spec.dim);
    let mut xi = xi0.clone();
    let mut differences: Vec<f64> = Vec::new();
    let mut stages = Vec::new();
    let mut solved_ns = Vec::new();
    let mut converged = false;
    for (j, &n) in ns.iter().enumerate() {
        let k = u32::try_from(n).map_err(|_| Error::InvalidInput(format!("n = {n} is too large")))?;
        let reg = make_fk(f, k)?;
        let problem = DiscreteProblem::new(spec, &reg, n);
        let solved = solve_fixed(&problem, space, r, &xi, tol, opts)?;
        stages.push(StageRecord::from_solve(space.level(), n, tol, r, &solved));
        solved_ns.push(n);
        if j > 0 {
            let diff: Vec<f64> = solved.xi.xi.iter().zip(&xi.xi).map(|(a, b)| a - b).collect();
            differences.push(space.norm(&diff));
        }
        xi = solved.xi;
        if let Some(&last) = differences.last() {
            if last <= cont_tol {
                converged = true;
                break;
            }
        }
        let k = differences.len();
        if k >= 3 && differences[k - 1] >= differences[k - 2] && differences[k - 2] >= differences[k - 3] {
            return Err(Error::Stagnation(differences));
        }
    }
    Ok(Continuation {
        xi,
        ns: solved_ns,
        differences,
        converged,
        stages,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityVerdict {
    pub min_nodal: f64,
    pub max_nodal: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Passes iff every nodal value is at least `-1e-10 (1 + max nodal value)`.
pub fn negative_part_check(u: &DiscreteField<'_>) -> PositivityVerdict {
    let space = u.space();
    let values: Vec<f64> = (0..space.dim()).map(|j| u.xi().xi[j]).collect();
    let min = values.iter().copied().fold(0.0, f64::min);
    let max = values.iter().copied().fold(0.0, f64::max);
    let threshold = -1e-10 * (1.0 + max);
    PositivityVerdict {
        min_nodal: min,
        max_nodal: max,
        threshold,
        passed: min >= threshold,
    }
}

/// Weak form of the original problem, tested against every basis function
/// and `num_tests` random fields of unit norm.
#[derive(Debug, Clone, Serialize)]
pub struct WeakFormCheck {
    pub basis_defect: f64,
    pub random_defect: f64,
    pub num_tests: usize,
    pub max_defect: f64,
}

/// `max |LHS(w) - RHS(w)| / (1 + |LHS(w)|)` for the original `f` with no
/// `1/n` forcing.
pub fn final_weak_form_check(
    spec: &ProblemSpec,
    f_raw: &Nonlinearity,
    u: &DiscreteField<'_>,
    num_tests: usize,
    seed: u64,
) -> Result<WeakFormCheck> {
    let problem = DiscreteProblem::new(spec, f_raw, 1).without_forcing();
    let (lhs, rhs) = problem.residual_parts(u)?;
    let defect = |l: f64, r: f64| (l - r).abs() / (1.0 + l.abs());
    let basis_defect = lhs.iter().zip(&rhs).map(|(&l, &r)| defect(l, r)).fold(0.0, f64::max);
    let space = u.space();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random_defect: f64 = 0.0;
    let mut tested = 0;
    while tested < num_tests && space.dim() > 0 {
        let mut w: Vec<f64> = (0..space.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = space.norm(&w);
        if norm == 0.0 {
            continue;
        }
        w.iter_mut().for_each(|v| *v /= norm);
        let l: f64 = lhs.iter().zip(&w).map(|(a, b)| a * b).sum();
        let r: f64 = rhs.iter().zip(&w).map(|(a, b)| a * b).sum();
        random_defect = random_defect.max(defect(l, r));
        tested += 1;
    }
    Ok(WeakFormCheck {
        basis_defect,
        random_defect,
        num_tests,
        max_defect: basis_defect.max(random_defect),
    })
}
