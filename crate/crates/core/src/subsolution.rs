//! The sublinear problem `-Δ_N v = λ a1 v^{r1}`, solved by minimizing its
//! energy, and the nodal comparison `u ≥ v₀`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::operators::{weighted_stiffness, DiscreteField, DiscreteProblem, ProblemSpec};
use crate::probes;
use crate::space::{dot, CoefficientVector, GalerkinSpace, SpaceHierarchy};

#[derive(Debug, Clone, Serialize)]
pub struct P5Options {
    pub max_iterations: usize,
    pub armijo: f64,
    pub min_step: f64,
}

impl Default for P5Options {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            armijo: 1e-4,
            min_step: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsolutionField {
    pub xi: CoefficientVector,
    pub energy: f64,
    /// Smallest interior nodal value.
    pub margin: f64,
    pub max_value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Energy `J(v) = (1/N)∫|∇v|^N - λ a1/(r1+1) ∫ v₊^{r1+1}` and its gradient.
pub struct P5Energy<'a> {
    spec: ProblemSpec,
    zero: Nonlinearity,
    space: &'a GalerkinSpace,
}

impl<'a> P5Energy<'a> {
    pub fn new(spec: &ProblemSpec, space: &'a GalerkinSpace) -> Result<Self> {
        spec.validate()?;
        if !(spec.lambda > 0.0 && spec.a1 > 0.0) {
            return Err(Error::Hypothesis("the sublinear problem needs lambda > 0 and a1 > 0".into()));
        }
        Ok(Self {
            spec: ProblemSpec {
                a2: 0.0,
                ..spec.clone()
            },
            zero: Nonlinearity::zero(),
            space,
        })
    }

    pub fn energy(&self, xi: &[f64]) -> Result<f64> {
        let field = DiscreteField::from_slice(self.space, xi)?;
        let space = self.space;
        let n = space.space_dim() as f64;
        let p = self.spec.r1 + 1.0;
        let rule = field.rule();
        let mut grad_part = 0.0;
        let mut pot = 0.0;
        for e in 0..space.num_elements() {
            let vol = space.volume(e);
            let g = field.gradient(e);
            grad_part += vol * dot(&g, &g).sqrt().powf(n);
            let scale = vol / rule.reference_volume();
            for (&w, &u) in rule.weights().iter().zip(field.quad_values(e)) {
                pot += scale * w * u.max(0.0).powf(p);
            }
        }
        Ok(grad_part / n - self.spec.lambda * self.spec.a1 / p * pot)
    }

    pub fn gradient(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let field = DiscreteField::from_slice(self.space, xi)?;
        DiscreteProblem::new(&self.spec, &self.zero, 1)
            .without_forcing()
            .residual(&field)
    }
}

/// Minimizes the energy by preconditioned descent from the distance bump
/// scaled to unit norm. The metric is the stiffness matrix weighted by
/// `|∇v|^{N-2}` on each element.
pub fn solve_p5(spec: &ProblemSpec, space: &GalerkinSpace, tol: f64, opts: &P5Options) -> Result<SubsolutionField> {
    if space.dim() == 0 {
        return Err(Error::DegenerateSpace(format!("level {} has no unknowns", space.level())));
    }
    let energy = P5Energy::new(spec, space)?;
    let mut xi = probes::distance_bump(space);
    probes::normalize(space, &mut xi);
    let mut j = energy.energy(&xi)?;
    let mut g = energy.gradient(&xi)?;
    let n = space.space_dim();
    // for N = 2 the metric is the fixed stiffness matrix
    let fixed_lu = (n == 2).then(|| weighted_stiffness(space, |_| 1.0).lu());
    let mut iterations = 0;
    let gnorm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    while gnorm(&g) > tol && iterations < opts.max_iterations {
        iterations += 1;
        let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
        let step = match &fixed_lu {
            Some(lu) => lu.solve(&rhs),
            None => {
                let field = DiscreteField::from_slice(space, &xi)?;
                let gmax = (0..space.num_elements())
                    .map(|e| dot(&field.gradient(e), &field.gradient(e)).sqrt())
                    .fold(0.0, f64::max);
                let eps = 1e-3 * gmax.max(1e-12);
                let metric = weighted_stiffness(space, |e| {
                    let ge = field.gradient(e);
                    (dot(&ge, &ge) + eps * eps).sqrt().powf(n as f64 - 2.0)
                });
                metric.lu().solve(&rhs)
            }
        }
        .ok_or(Error::SingularJacobian)?;
        let slope: f64 = g.iter().zip(step.iter()).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        let mut accepted = None;
        while t >= opts.min_step {
            let cand: Vec<f64> = xi.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let jc = energy.energy(&cand)?;
            if jc <= j + opts.armijo * t * slope {
                accepted = Some((cand, jc, None));
                break;
            }
            if t == 1.0 {
                // near the minimizer energy differences drown in roundoff;
                // a full step that shrinks the gradient is still progress
                let gc = energy.gradient(&cand)?;
                if gnorm(&gc) < gnorm(&g) {
                    accepted = Some((cand, jc, Some(gc)));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, jc, gc)) = accepted else { break };
        xi = cand;
        j = jc;
        g = match gc {
            Some(gc) => gc,
            None => energy.gradient(&xi)?,
        };
    }
    let grad_norm = gnorm(&g);
    if grad_norm > tol {
        return Err(Error::NonConvergence {
            iterations,
            best_residual: grad_norm,
            best_iterate: xi,
            history: Vec::new(),
        });
    }
    if j >= -tol {
        return Err(Error::DegenerateMinimizer { energy: j, tol });
    }
    let margin = xi.iter().copied().fold(f64::INFINITY, f64::min);
    let max_value = xi.iter().copied().fold(0.0, f64::max);
    if margin.is_nan() || margin <= 0.0 {
        return Err(Error::Hypothesis(format!(
            "minimizer is not interior-positive (smallest nodal value {margin:e})"
        )));
    }
    Ok(SubsolutionField {
        xi: CoefficientVector::new(space.level(), xi),
        energy: j,
        margin,
        max_value,
        gradient_norm: grad_norm,
        iterations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonVerdict {
    pub min_gap: f64,
    pub threshold: f64,
    pub slack: f64,
    pub passed: bool,
}

pub const DEFAULT_COMPARISON_SLACK: f64 = 1e-3;

/// Passes iff `min (u - v₀) ≥ -slack (1 + ‖v₀‖_∞)` over the interior nodes.
pub fn comparison_check(u: &DiscreteField<'_>, v0: &SubsolutionField, slack: f64) -> Result<ComparisonVerdict> {
    let ux = &u.xi().xi;
    if u.xi().level != v0.xi.level || ux.len() != v0.xi.len() {
        return Err(Error::LevelMismatch(format!(
            "u is on level {}, v0 on level {}",
            u.xi().level,
            v0.xi.level
        )));
    }
    // interior nodes only; both fields vanish on the boundary
    let min_gap = ux.iter().zip(&v0.xi.xi).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
    let vmax = v0.xi.xi.iter().copied().fold(0.0, |m: f64, v| m.max(v.abs()));
    let threshold = -slack * (1.0 + vmax);
    Ok(ComparisonVerdict {
        min_gap,
        threshold,
        slack,
        passed: min_gap >= threshold,
    })
}

/// Comparison after prolonging `v₀` to the level of `u`.
pub fn comparison_check_on(
    hierarchy: &SpaceHierarchy,
    u: &DiscreteField<'_>,
    v0: &SubsolutionField,
    slack: f64,
) -> Result<ComparisonVerdict> {
    let lifted = SubsolutionField {
        xi: hierarchy.prolong(&v0.xi, u.xi().level)?,
        ..v0.clone()
    };
    comparison_check(u, &lifted, slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Domain;
    use crate::nonlinearity::NonlinearitySpec;

    fn spec(lambda: f64) -> ProblemSpec {
        ProblemSpec {
            dim: 2,
            domain: Domain::UnitSquare,
            lambda,
            a1: 1.0,
            a2: 0.0,
            r1: 0.5,
            r2: 0.5,
            nonlinearity: NonlinearitySpec::new(Nonlinearity::zero(), 1.0, 1.0, 3.0, 2).unwrap(),
        }
    }

    #[test]
    fn minimizer_is_positive_with_negative_energy() {
        let space = GalerkinSpace::build(Domain::UnitSquare, 3).unwrap();
        let v = solve_p5(&spec(1.0), &space, 1e-11, &P5Options::default()).unwrap();
        assert!(v.energy < 0.0);
        assert!(v.margin > 0.0);
    }

    #[test]
    fn lambda_zero_is_rejected() {
        let space = GalerkinSpace::build(Domain::UnitSquare, 2).unwrap();
        assert!(solve_p5(&spec(0.0), &space, 1e-10, &P5Options::default()).is_err());
    }

    #[test]
    fn comparison_with_itself_has_zero_margin() {
        let space = GalerkinSpace::build(Domain::UnitSquare, 2).unwrap();
        let v = solve_p5(&spec(1.0), &space, 1e-11, &P5Options::default()).unwrap();
        let u = DiscreteField::new(&space, v.xi.clone()).unwrap();
        let verdict = comparison_check(&u, &v, 0.0).unwrap();
        assert!(verdict.passed);
        assert_eq!(verdict.min_gap, 0.0);
    }
}
