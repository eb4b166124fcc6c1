//! Explicit constants of the existence argument: `α_N`, discrete embedding
//! constants, the radius `r`, the threshold `λ*`, the margin `ρ` and the
//! index `n*`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::nonlinearity::{linspace, make_fk, NonlinearitySpec};
use crate::operators::{DiscreteField, ProblemSpec};
use crate::probes;
use crate::space::{GalerkinSpace, SpaceHierarchy};

/// Every probed constant is multiplied by this before use.
pub const SAFETY_FACTOR: f64 = 2.0;

/// Label attached to every report built from probed constants.
pub const CERTIFICATE_LABEL: &str = "discrete-constant certificate";

/// `Γ(k/2)` for a positive integer `k`.
fn gamma_half(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        (1..k / 2).map(|i| i as f64).product()
    } else {
        // Γ(1/2) = √π, Γ(x + 1) = x Γ(x)
        PI.sqrt() * (0..(k - 1) / 2).map(|i| i as f64 + 0.5).product::<f64>()
    }
}

/// Surface measure of the unit sphere in `ℝ^N`: `2 π^{N/2} / Γ(N/2)`.
pub fn omega(dim: usize) -> f64 {
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half(dim)
}

/// `α_N = N ω_{N-1}^{1/(N-1)}`.
pub fn alpha_n(dim: usize) -> Result<f64> {
    if dim < 2 {
        return Err(Error::InvalidInput(format!("alpha_N needs N >= 2, got {dim}")));
    }
    Ok(dim as f64 * omega(dim).powf(1.0 / (dim as f64 - 1.0)))
}

/// Estimated ratios `‖u‖_X / ‖u‖_{W^{1,N}_0}` (already inflated).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmbeddingConstants {
    /// `X = L^{r1+1}`
    pub cemb1: f64,
    /// `X = L^{N/(N-r2)}`
    pub cemb2: f64,
    /// `X = L^{N'(r3+1)}`
    pub cemb3: f64,
    /// `X = L^1`
    pub cemb4: f64,
    /// Small-argument growth constant of `f_k`.
    pub cemb5: f64,
}

fn target_exponents(spec: &ProblemSpec) -> [f64; 4] {
    let n = spec.dim as f64;
    let nprime = n / (n - 1.0);
    [
        spec.r1 + 1.0,
        n / (n - spec.r2),
        nprime * (spec.nonlinearity.r3 + 1.0),
        1.0,
    ]
}

fn probe_set(space: &GalerkinSpace, trials: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (space.level() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut set = Vec::with_capacity(trials + space.dim() + 3);
    set.push(probes::smooth_probe(space));
    set.push(probes::distance_bump(space));
    for j in 0..space.dim() {
        let mut hat = vec![0.0; space.dim()];
        hat[j] = 1.0;
        set.push(hat);
    }
    for t in 0..trials {
        // alternate signed and one-signed fields
        let lo = if t % 2 == 0 { -1.0 } else { 0.0 };
        set.push(probes::random_field(space, &mut rng, lo, 1.0));
    }
    set
}

fn max_ratios(space: &GalerkinSpace, exps: &[f64; 4], trials: usize, seed: u64) -> Result<[f64; 4]> {
    let mut best = [0.0f64; 4];
    for xi in probe_set(space, trials, seed) {
        let w = space.norm(&xi);
        if w == 0.0 {
            continue;
        }
        let field = DiscreteField::from_slice(space, &xi)?;
        for (b, &p) in best.iter_mut().zip(exps) {
            *b = b.max(probes::lp_norm(&field, p) / w);
        }
    }
    Ok(best)
}

/// `sup s f_k(s) / (s² exp(2^{N'} α |s|^{N'}))` over `0 < |s| ≤ 1/k`.
fn inner_growth_constant(nl: &NonlinearitySpec) -> Result<f64> {
    let mut ks: Vec<u32> = (1..=16).collect();
    ks.extend([32, 64, 128, 256, 512, 1024]);
    let mut best = 0.0f64;
    for k in ks {
        let reg = make_fk(nl, k)?;
        let inv = 1.0 / k as f64;
        for s in linspace(-inv, inv, 201) {
            if s == 0.0 {
                continue;
            }
            let bound_shape = reg.inner_bound(s) / reg.c2();
            best = best.max(s * reg.eval(s)? / bound_shape);
        }
    }
    Ok(best)
}

/// Estimates embedding constants on every level up to `level` and keeps the
/// maximum, so refining never lowers an estimate.
pub fn estimate_embedding_constants(
    hierarchy: &SpaceHierarchy,
    level: u32,
    spec: &ProblemSpec,
    trials: usize,
    seed: u64,
) -> Result<EmbeddingConstants> {
    if trials < 100 {
        return Err(Error::InvalidInput(format!("need at least 100 trials, got {trials}")));
    }
    let space = hierarchy.space(level)?;
    if space.dim() == 0 {
        return Err(Error::DegenerateSpace(format!(
            "level {level} has no interior vertices"
        )));
    }
    let exps = target_exponents(spec);
    let mut best = [0.0f64; 4];
    for l in 0..=level {
        let s = hierarchy.space(l)?;
        if s.dim() == 0 {
            continue;
        }
        let ratios = max_ratios(s, &exps, trials, seed)?;
        for (b, r) in best.iter_mut().zip(ratios) {
            *b = b.max(r);
        }
    }
    let c5 = inner_growth_constant(&spec.nonlinearity)?;
    Ok(EmbeddingConstants {
        cemb1: SAFETY_FACTOR * best[0],
        cemb2: SAFETY_FACTOR * best[1],
        cemb3: SAFETY_FACTOR * best[2],
        cemb4: SAFETY_FACTOR * best[3],
        cemb5: SAFETY_FACTOR * c5,
    })
}

/// Which probe fields [`tm_probe`] maximizes over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeFamily {
    /// Only `u = 0`.
    Zero,
    /// The truncated Moser function whose plateau radius is the mesh size.
    Moser,
    /// Moser functions with plateau radii `h, 2h, 4h, …`, the smooth probe,
    /// the distance bump and every hat function.
    Standard,
}

/// `max ∫ exp(σ |u|^{N/(N-1)})` over the family, each member rescaled to
/// unit discrete norm.
pub fn tm_probe(space: &GalerkinSpace, sigma: f64, family: ProbeFamily) -> Result<f64> {
    let mut members: Vec<Vec<f64>> = vec![vec![0.0; space.dim()]];
    let h = space.mesh().h();
    match family {
        ProbeFamily::Zero => {}
        ProbeFamily::Moser => members.push(probes::moser_probe(space, h)),
        ProbeFamily::Standard => {
            let mut delta = h;
            while delta < 0.5 {
                members.push(probes::moser_probe(space, delta));
                delta *= 2.0;
            }
            members.push(probes::smooth_probe(space));
            members.push(probes::distance_bump(space));
            for j in 0..space.dim() {
                let mut hat = vec![0.0; space.dim()];
                hat[j] = 1.0;
                members.push(hat);
            }
        }
    }
    let mut best = 0.0f64;
    for mut xi in members {
        probes::normalize(space, &mut xi);
        let field = DiscreteField::from_slice(space, &xi)?;
        best = best.max(probes::exp_integral(&field, sigma));
    }
    Ok(best)
}

/// `L = max(sup ∫exp(α_N |u|^{N'}) / |Ω|, 1) · safety factor`.
pub fn estimate_l(space: &GalerkinSpace) -> Result<f64> {
    let sigma = alpha_n(space.space_dim())?;
    let observed = tm_probe(space, sigma, ProbeFamily::Standard)?;
    Ok((observed / space.mesh().total_volume()).max(1.0) * SAFETY_FACTOR)
}

/// Constants in the form used by the coercivity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProofConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

impl ProofConstants {
    pub fn from_embeddings(spec: &ProblemSpec, emb: &EmbeddingConstants, measure: f64) -> Self {
        let nl = &spec.nonlinearity;
        let n = spec.dim as f64;
        Self {
            c1: emb.cemb1.powf(spec.r1 + 1.0),
            c2: emb.cemb2,
            c3: nl.a3 * 2f64.powf(nl.r3) * emb.cemb3.powf(nl.r3 + 1.0) * measure.powf(1.0 / n),
            c4: emb.cemb4,
            c5: emb.cemb5,
        }
    }
}

/// Both arguments of the minimum defining `r`, and `r` itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Radius {
    pub growth_bound: f64,
    pub moser_bound: f64,
    pub r: f64,
}

/// `r = min{ 1 / (2 (2 C3 L^{1/N})^{1/(r3+1-N)}), ½ (α_N/(N α))^{(N-1)/N} }`.
pub fn compute_r(c3: f64, l: f64, dim: usize, alpha: f64, r3: f64) -> Result<Radius> {
    let n = dim as f64;
    let gap = r3 + 1.0 - n;
    if gap <= 0.0 {
        return Err(Error::Hypothesis(format!("r3 + 1 - N = {gap} must be positive")));
    }
    let growth_bound = 1.0 / (2.0 * (2.0 * c3 * l.powf(1.0 / n)).powf(1.0 / gap));
    let moser_bound = 0.5 * (alpha_n(dim)? / (n * alpha)).powf((n - 1.0) / n);
    Ok(Radius {
        growth_bound,
        moser_bound,
        r: growth_bound.min(moser_bound),
    })
}

/// `λ* = ½ r^N / (2 a1 C1 r^{r1+1} + 2 a2 C2 r^{r2+1})`; infinite when both
/// sublinear terms vanish.
pub fn compute_lambda_star(r: f64, spec: &ProblemSpec, c: &ProofConstants) -> f64 {
    let denom = 2.0 * spec.a1 * c.c1 * r.powf(spec.r1 + 1.0) + 2.0 * spec.a2 * c.c2 * r.powf(spec.r2 + 1.0);
    if denom == 0.0 {
        f64::INFINITY
    } else {
        0.5 * r.powi(spec.dim as i32) / denom
    }
}

/// `ρ(λ) = r^N/2 - λ(a1 C1 r^{r1+1} + a2 C2 r^{r2+1})`.
pub fn rho(lambda: f64, r: f64, spec: &ProblemSpec, c: &ProofConstants) -> f64 {
    0.5 * r.powi(spec.dim as i32)
        - lambda * (spec.a1 * c.c1 * r.powf(spec.r1 + 1.0) + spec.a2 * c.c2 * r.powf(spec.r2 + 1.0))
}

/// Inputs of the tail bound that `n*` must push below `ρ/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBound {
    pub c4: f64,
    pub c5: f64,
    pub r: f64,
    pub lambda: f64,
    pub a1: f64,
    pub r1: f64,
    pub alpha: f64,
    pub dim: usize,
    pub measure: f64,
}

impl TailBound {
    pub fn new(spec: &ProblemSpec, c: &ProofConstants, r: f64, measure: f64) -> Self {
        Self {
            c4: c.c4,
            c5: c.c5,
            r,
            lambda: spec.lambda,
            a1: spec.a1,
            r1: spec.r1,
            alpha: spec.nonlinearity.alpha,
            dim: spec.dim,
            measure,
        }
    }

    /// `C4 r/n + λ a1 |Ω|/n^{r1+1} + C5 e^{2^{N'} α} |Ω|/n² + |Ω|/n²`.
    pub fn lhs(&self, n: u64) -> f64 {
        let nf = n as f64;
        let d = self.dim as f64;
        let growth = (2f64.powf(d / (d - 1.0)) * self.alpha).exp();
        self.c4 * self.r / nf
            + self.lambda * self.a1 * self.measure / nf.powf(self.r1 + 1.0)
            + self.c5 * growth * self.measure / (nf * nf)
            + self.measure / (nf * nf)
    }
}

/// Smallest `n ≥ 1` with `lhs(n) < ρ/2`.
pub fn compute_n_star(rho: f64, tail: &TailBound) -> Result<u64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Hypothesis(format!("rho = {rho} is not positive")));
    }
    let target = 0.5 * rho;
    if tail.lhs(1) < target {
        return Ok(1);
    }
    // lhs is decreasing in n: bracket by doubling, then bisect
    let mut hi: u64 = 2;
    while tail.lhs(hi) >= target {
        if hi > u64::MAX / 4 {
            return Err(Error::Hypothesis("n* exceeds the representable range".into()));
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if tail.lhs(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub certificate: &'static str,
    #[serde(rename = "N")]
    pub dim: usize,
    pub domain: String,
    pub level: u32,
    pub trials: usize,
    pub seed: u64,
    pub alpha: f64,
    #[serde(rename = "alpha_N")]
    pub alpha_n: f64,
    #[serde(rename = "omega_Nminus1")]
    pub omega_n_minus_1: f64,
    pub domain_measure: f64,
    #[serde(rename = "L_estimate")]
    pub l_estimate: f64,
    #[serde(rename = "Cemb1")]
    pub cemb1: f64,
    #[serde(rename = "Cemb2")]
    pub cemb2: f64,
    #[serde(rename = "Cemb3")]
    pub cemb3: f64,
    #[serde(rename = "Cemb4")]
    pub cemb4: f64,
    #[serde(rename = "Cemb5")]
    pub cemb5: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "C4")]
    pub c4: f64,
    #[serde(rename = "C5")]
    pub c5: f64,
    pub r_growth_bound: f64,
    pub r_moser_bound: f64,
    pub r: f64,
    pub lambda: f64,
    pub lambda_star: f64,
    pub rho: f64,
    pub lambda_below_threshold: bool,
    pub n_star: Option<u64>,
    pub tail_at_n_star: Option<f64>,
}

impl ConstantsReport {
    pub fn proof_constants(&self) -> ProofConstants {
        ProofConstants {
            c1: self.c1,
            c2: self.c2,
            c3: self.c3,
            c4: self.c4,
            c5: self.c5,
        }
    }

    pub fn tail(&self, spec: &ProblemSpec) -> TailBound {
        TailBound::new(spec, &self.proof_constants(), self.r, self.domain_measure)
    }
}

/// Every constant for `spec` on the given level of the hierarchy.
pub fn compute_constants(
    hierarchy: &SpaceHierarchy,
    level: u32,
    spec: &ProblemSpec,
    trials: usize,
    seed: u64,
) -> Result<ConstantsReport> {
    spec.validate()?;
    let space = hierarchy.space(level)?;
    let measure = space.mesh().total_volume();
    let emb = estimate_embedding_constants(hierarchy, level, spec, trials, seed)?;
    let c = ProofConstants::from_embeddings(spec, &emb, measure);
    let l = estimate_l(space)?;
    let nl = &spec.nonlinearity;
    let radius = compute_r(c.c3, l, spec.dim, nl.alpha, nl.r3)?;
    let lambda_star = compute_lambda_star(radius.r, spec, &c);
    let rho_value = rho(spec.lambda, radius.r, spec, &c);
    let tail = TailBound::new(spec, &c, radius.r, measure);
    let n_star = if rho_value > 0.0 {
        Some(compute_n_star(rho_value, &tail)?)
    } else {
        None
    };
    Ok(ConstantsReport {
        certificate: CERTIFICATE_LABEL,
        dim: spec.dim,
        domain: spec.domain.to_string(),
        level,
        trials,
        seed,
        alpha: nl.alpha,
        alpha_n: alpha_n(spec.dim)?,
        omega_n_minus_1: omega(spec.dim),
        domain_measure: measure,
        l_estimate: l,
        cemb1: emb.cemb1,
        cemb2: emb.cemb2,
        cemb3: emb.cemb3,
        cemb4: emb.cemb4,
        cemb5: emb.cemb5,
        c1: c.c1,
        c2: c.c2,
        c3: c.c3,
        c4: c.c4,
        c5: c.c5,
        r_growth_bound: radius.growth_bound,
        r_moser_bound: radius.moser_bound,
        r: radius.r,
        lambda: spec.lambda,
        lambda_star,
        rho: rho_value,
        lambda_below_threshold: spec.lambda < lambda_star,
        tail_at_n_star: n_star.map(|n| tail.lhs(n)),
        n_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_at_half_integers() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert!((gamma_half(3) - 0.5 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(4), 1.0);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(6), 2.0);
    }

    #[test]
    fn sphere_measures() {
        assert!((omega(2) - 2.0 * PI).abs() < 1e-14);
        assert!((omega(3) - 4.0 * PI).abs() < 1e-14);
        assert!((omega(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn moser_exponents() {
        assert!((alpha_n(2).unwrap() - 4.0 * PI).abs() < 1e-12);
        assert!((alpha_n(3).unwrap() - 3.0 * (4.0 * PI).sqrt()).abs() < 1e-12);
        assert!((alpha_n(2).unwrap() / 2.0 - omega(2)).abs() < 1e-14);
        assert!(alpha_n(1).is_err());
    }

    #[test]
    fn radius_formula() {
        let r = compute_r(1.0, 1.0, 2, 1.0, 3.0).unwrap();
        assert!((r.growth_bound - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert!((r.moser_bound - 0.5 * (2.0 * PI).sqrt()).abs() < 1e-12);
        assert_eq!(r.r, r.growth_bound);
        assert!(matches!(compute_r(1.0, 1.0, 2, 1.0, 1.0), Err(Error::Hypothesis(_))));
    }
}
