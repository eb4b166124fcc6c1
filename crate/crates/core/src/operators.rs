//! Weak-form residual of the regularized problem, its coercivity pairing
//! and a regularized Jacobian.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nonlinearity::{Nonlinearity, RegularizedNonlinearity};
use crate::quadrature::QuadratureRule;
use crate::space::{dot, CoefficientVector, GalerkinSpace};

pub use crate::problem::{HypothesisNotes, ProblemSpec};

/// Default polynomial exactness of element quadrature.
pub const DEFAULT_QUAD_DEGREE: usize = 4;

/// Default regularization of `|∇u|` in the Jacobian.
pub const DEFAULT_EPS_REG: f64 = 1e-8;

/// The reaction term evaluated at `u₊`.
pub trait SourceTerm: Sync {
    fn value(&self, s: f64) -> Result<f64>;
}

impl SourceTerm for RegularizedNonlinearity {
    fn value(&self, s: f64) -> Result<f64> {
        self.eval(s)
    }
}

impl SourceTerm for Nonlinearity {
    fn value(&self, s: f64) -> Result<f64> {
        let v = self.eval(s);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { point: s })
        }
    }
}

/// `u = Σ ξ_j w_j` with nodal values, element gradients and values at the
/// quadrature points.
#[derive(Debug, Clone)]
pub struct DiscreteField<'s> {
    space: &'s GalerkinSpace,
    xi: CoefficientVector,
    rule: QuadratureRule,
    nodal: Vec<f64>,
    grads: Vec<[f64; 3]>,
    qvals: Vec<f64>,
}

impl<'s> DiscreteField<'s> {
    pub fn new(space: &'s GalerkinSpace, xi: CoefficientVector) -> Result<Self> {
        let rule = QuadratureRule::new(space.space_dim(), DEFAULT_QUAD_DEGREE)?;
        Self::with_rule(space, xi, rule)
    }

    pub fn from_slice(space: &'s GalerkinSpace, xi: &[f64]) -> Result<Self> {
        Self::new(space, CoefficientVector::new(space.level(), xi.to_vec()))
    }

    pub fn with_rule(space: &'s GalerkinSpace, xi: CoefficientVector, rule: QuadratureRule) -> Result<Self> {
        space.check(&xi)?;
        if rule.dim() != space.space_dim() {
            return Err(Error::InvalidInput("quadrature rule dimension differs from the mesh".into()));
        }
        let nodal = space.nodal_values(&xi.xi);
        let ne = space.num_elements();
        let nq = rule.len();
        let mut grads = Vec::with_capacity(ne);
        let mut qvals = Vec::with_capacity(ne * nq);
        for e in 0..ne {
            grads.push(space.element_gradient(e, &nodal));
            let el = space.mesh().element(e);
            for b in rule.bary() {
                qvals.push(el.iter().enumerate().map(|(a, &v)| b[a] * nodal[v]).sum());
            }
        }
        Ok(Self {
            space,
            xi,
            rule,
            nodal,
            grads,
            qvals,
        })
    }

    pub fn space(&self) -> &'s GalerkinSpace {
        self.space
    }

    pub fn xi(&self) -> &CoefficientVector {
        &self.xi
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    pub fn gradient(&self, e: usize) -> [f64; 3] {
        self.grads[e]
    }

    /// Values of `u` at the quadrature points of element `e`.
    pub fn quad_values(&self, e: usize) -> &[f64] {
        let nq = self.rule.len();
        &self.qvals[e * nq..(e + 1) * nq]
    }

    pub fn norm(&self) -> f64 {
        self.space.norm(&self.xi.xi)
    }
}

/// The discrete problem `(P_n)` (or the limit problem with the original
/// `f` and no forcing).
#[derive(Clone, Copy)]
pub struct DiscreteProblem<'a> {
    pub spec: &'a ProblemSpec,
    pub source: &'a dyn SourceTerm,
    /// Index `n`: forcing `1/n` and splitting threshold `|u| ≥ 1/n`.
    pub n: u64,
    pub forcing: bool,
}

struct LocalTerms {
    flux: [f64; 4],
    load: [f64; 4],
}

impl<'a> DiscreteProblem<'a> {
    pub fn new(spec: &'a ProblemSpec, source: &'a dyn SourceTerm, n: u64) -> Self {
        Self {
            spec,
            source,
            n: n.max(1),
            forcing: true,
        }
    }

    pub fn without_forcing(mut self) -> Self {
        self.forcing = false;
        self
    }

    fn forcing_value(&self) -> f64 {
        if self.forcing {
            1.0 / self.n as f64
        } else {
            0.0
        }
    }

    /// Right-hand side density `λ(a1 u₊^{r1} + a2 |∇u|^{r2}) + f(u₊) + 1/n`.
    fn density(&self, u: f64, grad_pow_r2: f64) -> Result<f64> {
        let up = u.max(0.0);
        let s = self.spec;
        let sub = if s.a1 == 0.0 { 0.0 } else { s.a1 * up.powf(s.r1) };
        Ok(s.lambda * (sub + s.a2 * grad_pow_r2) + self.source.value(up)? + self.forcing_value())
    }

    fn local(&self, field: &DiscreteField<'_>, e: usize) -> Result<LocalTerms> {
        let space = field.space;
        let dim = space.space_dim();
        let n = dim as f64;
        let vol = space.volume(e);
        let g = field.gradient(e);
        let gnorm2 = dot(&g, &g);
        let gn = gnorm2.sqrt();
        let coef = if dim == 2 { 1.0 } else { gn.powf(n - 2.0) };
        let gr2 = gn.powf(self.spec.r2);
        let grads = space.bary_grads(e);
        let mut out = LocalTerms {
            flux: [0.0; 4],
            load: [0.0; 4],
        };
        for a in 0..=dim {
            out.flux[a] = vol * coef * dot(&g, &grads[a]);
        }
        let scale = vol / field.rule.reference_volume();
        for ((b, &w), &u) in field.rule.bary().iter().zip(field.rule.weights()).zip(field.quad_values(e)) {
            let rho = self
                .density(u, gr2)
                .map_err(|_| Error::Overflow { element: e })?;
            for a in 0..=dim {
                out.load[a] += scale * w * rho * b[a];
            }
        }
        if out.flux.iter().chain(&out.load).any(|v| !v.is_finite()) {
            return Err(Error::Overflow { element: e });
        }
        Ok(out)
    }

    fn locals(&self, field: &DiscreteField<'_>) -> Result<Vec<LocalTerms>> {
        (0..field.space.num_elements())
            .into_par_iter()
            .map(|e| self.local(field, e))
            .collect()
    }

    /// `(∫|∇u|^{N-2}∇u·∇w_j, ∫ density·w_j)` for every basis function.
    pub fn residual_parts(&self, field: &DiscreteField<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
        let space = field.space;
        let locals = self.locals(field)?;
        let mut lhs = vec![0.0; space.dim()];
        let mut rhs = vec![0.0; space.dim()];
        for (e, loc) in locals.iter().enumerate() {
            for a in 0..=space.space_dim() {
                if let Some(j) = space.local_dof(e, a) {
                    lhs[j] += loc.flux[a];
                    rhs[j] += loc.load[a];
                }
            }
        }
        Ok((lhs, rhs))
    }

    /// `F(ξ)`.
    pub fn residual(&self, field: &DiscreteField<'_>) -> Result<Vec<f64>> {
        let (mut lhs, rhs) = self.residual_parts(field)?;
        for (l, r) in lhs.iter_mut().zip(rhs) {
            *l -= r;
        }
        Ok(lhs)
    }

    // Per-element pairing split by |u| ≥ 1/n at the quadrature points.
    fn pairing_parts(&self, field: &DiscreteField<'_>) -> Result<(f64, f64)> {
        let space = field.space;
        let dim = space.space_dim() as f64;
        let threshold = 1.0 / self.n as f64;
        let rule = &field.rule;
        let parts: Vec<(f64, f64)> = (0..space.num_elements())
            .into_par_iter()
            .map(|e| {
                let vol = space.volume(e);
                let g = field.gradient(e);
                let gn = dot(&g, &g).sqrt();
                let energy = gn.powf(dim);
                let gr2 = gn.powf(self.spec.r2);
                let mut pos = 0.0;
                let mut neg = 0.0;
                for (&w, &u) in rule.weights().iter().zip(field.quad_values(e)) {
                    let share = vol * w / rule.reference_volume();
                    let rho = self.density(u, gr2).map_err(|_| Error::Overflow { element: e })?;
                    let term = share * (energy - rho * u);
                    if u.abs() >= threshold {
                        pos += term;
                    } else {
                        neg += term;
                    }
                }
                if !(pos.is_finite() && neg.is_finite()) {
                    return Err(Error::Overflow { element: e });
                }
                Ok((pos, neg))
            })
            .collect::<Result<_>>()?;
        Ok(parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1)))
    }

    /// `⟨F(ξ), ξ⟩` evaluated directly by quadrature.
    pub fn pairing(&self, field: &DiscreteField<'_>) -> Result<f64> {
        let (p, n) = self.pairing_parts(field)?;
        Ok(p + n)
    }

    /// The pairing split into the parts from `{|u| ≥ 1/n}` and `{|u| < 1/n}`.
    pub fn decomposition(&self, field: &DiscreteField<'_>) -> Result<(f64, f64)> {
        self.pairing_parts(field)
    }

    /// Dense Jacobian of the residual with `|∇u|` replaced by
    /// `(|∇u|² + eps²)^{1/2}` in the derivative of the degenerate terms.
    pub fn jacobian(&self, field: &DiscreteField<'_>, eps: f64) -> Result<DMatrix<f64>> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidInput(format!("eps_reg must be positive, got {eps}")));
        }
        let space = field.space;
        let dim = space.space_dim();
        let n = dim as f64;
        let s = self.spec;
        let rule = &field.rule;
        let locals: Vec<[[f64; 4]; 4]> = (0..space.num_elements())
            .into_par_iter()
            .map(|e| {
                let vol = space.volume(e);
                let g = field.gradient(e);
                let grads = space.bary_grads(e);
                let ge = (dot(&g, &g) + eps * eps).sqrt();
                let mut k = [[0.0; 4]; 4];
                let gdot: Vec<f64> = grads.iter().map(|gr| dot(&g, gr)).collect();
                for a in 0..=dim {
                    for b in 0..=dim {
                        let mut v = ge.powf(n - 2.0) * dot(&grads[a], &grads[b]);
                        if dim > 2 {
                            v += (n - 2.0) * ge.powf(n - 4.0) * gdot[a] * gdot[b];
                        }
                        k[a][b] = vol * v;
                    }
                }
                if s.a2 != 0.0 && s.lambda != 0.0 {
                    let share = vol / (dim + 1) as f64;
                    let c = s.lambda * s.a2 * s.r2 * ge.powf(s.r2 - 2.0);
                    for a in 0..=dim {
                        for b in 0..=dim {
                            k[a][b] -= c * gdot[b] * share;
                        }
                    }
                }
                let scale = vol / rule.reference_volume();
                for ((bq, &w), &u) in rule.bary().iter().zip(rule.weights()).zip(field.quad_values(e)) {
                    let d = self.density_derivative(u, eps).map_err(|_| Error::Overflow { element: e })?;
                    if d == 0.0 {
                        continue;
                    }
                    for a in 0..=dim {
                        for b in 0..=dim {
                            k[a][b] -= scale * w * d * bq[a] * bq[b];
                        }
                    }
                }
                if k.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Overflow { element: e });
                }
                Ok(k)
            })
            .collect::<Result<_>>()?;
        let m = space.dim();
        let mut jac = DMatrix::zeros(m, m);
        for (e, k) in locals.iter().enumerate() {
            for a in 0..=dim {
                let Some(i) = space.local_dof(e, a) else { continue };
                for b in 0..=dim {
                    if let Some(j) = space.local_dof(e, b) {
                        jac[(i, j)] += k[a][b];
                    }
                }
            }
        }
        Ok(jac)
    }

    // d/du of λ a1 u₊^{r1} + f(u₊), with the power regularized at 0 and f'
    // by central differences.
    fn density_derivative(&self, u: f64, eps: f64) -> Result<f64> {
        let s = self.spec;
        let mut d = 0.0;
        if u > 0.0 && s.a1 != 0.0 {
            d += s.lambda * s.a1 * s.r1 * (u + eps).powf(s.r1 - 1.0);
        }
        let h = 1e-6 * (1.0 + u.abs());
        let fp = self.source.value((u + h).max(0.0))?;
        let fm = self.source.value((u - h).max(0.0))?;
        Ok(d + (fp - fm) / (2.0 * h))
    }
}

/// `F(ξ)` of `(P_n)` with the regularized source `f_n`.
pub fn residual(
    spec: &ProblemSpec,
    reg: &RegularizedNonlinearity,
    n: u64,
    u: &DiscreteField<'_>,
) -> Result<Vec<f64>> {
    DiscreteProblem::new(spec, reg, n).residual(u)
}

pub fn coercivity_pairing(
    spec: &ProblemSpec,
    reg: &RegularizedNonlinearity,
    n: u64,
    u: &DiscreteField<'_>,
) -> Result<f64> {
    DiscreteProblem::new(spec, reg, n).pairing(u)
}

pub fn pairing_decomposition(
    spec: &ProblemSpec,
    reg: &RegularizedNonlinearity,
    n: u64,
    u: &DiscreteField<'_>,
) -> Result<(f64, f64)> {
    DiscreteProblem::new(spec, reg, n).decomposition(u)
}

pub fn jacobian(
    spec: &ProblemSpec,
    reg: &RegularizedNonlinearity,
    n: u64,
    u: &DiscreteField<'_>,
    eps_reg: f64,
) -> Result<DMatrix<f64>> {
    DiscreteProblem::new(spec, reg, n).jacobian(u, eps_reg)
}

/// Stiffness matrix `∫ ∇w_i·∇w_j` of the Laplacian.
pub fn stiffness_matrix(space: &GalerkinSpace) -> DMatrix<f64> {
    weighted_stiffness(space, |_| 1.0)
}

/// Element matrix `∫_e ∇λ_a·∇λ_b` over the local vertices of `e`.
pub fn local_stiffness(space: &GalerkinSpace, e: usize) -> DMatrix<f64> {
    let grads = space.bary_grads(e);
    let n = grads.len();
    DMatrix::from_fn(n, n, |a, b| space.volume(e) * dot(&grads[a], &grads[b]))
}

/// `∫ c_e ∇w_i·∇w_j` with a constant weight per element.
pub fn weighted_stiffness(space: &GalerkinSpace, weight: impl Fn(usize) -> f64) -> DMatrix<f64> {
    let m = space.dim();
    let dim = space.space_dim();
    let mut k = DMatrix::zeros(m, m);
    for e in 0..space.num_elements() {
        let c = weight(e) * space.volume(e);
        let grads = space.bary_grads(e);
        for a in 0..=dim {
            let Some(i) = space.local_dof(e, a) else { continue };
            for b in 0..=dim {
                if let Some(j) = space.local_dof(e, b) {
                    k[(i, j)] += c * dot(&grads[a], &grads[b]);
                }
            }
        }
    }
    k
}

/// Both sides of `∫|∇u|^{r2}|u| ≤ (∫|∇u|^N)^{r2/N} (∫|u|^{N/(N-r2)})^{(N-r2)/N}`.
pub fn holder_sides(field: &DiscreteField<'_>, r2: f64) -> (f64, f64) {
    let space = field.space;
    let n = space.space_dim() as f64;
    let q = n / (n - r2);
    let rule = &field.rule;
    let (mut lhs, mut grad_n, mut uq) = (0.0, 0.0, 0.0);
    for e in 0..space.num_elements() {
        let vol = space.volume(e);
        let g = field.gradient(e);
        let gn = dot(&g, &g).sqrt();
        grad_n += vol * gn.powf(n);
        for (&w, &u) in rule.weights().iter().zip(field.quad_values(e)) {
            let share = vol * w / rule.reference_volume();
            lhs += share * gn.powf(r2) * u.abs();
            uq += share * u.abs().powf(q);
        }
    }
    (lhs, grad_n.powf(r2 / n) * uq.powf(1.0 / q))
}
