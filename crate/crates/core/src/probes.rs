//! Probe fields used to estimate embedding constants and Trudinger-Moser
//! integrals, plus the norms they are measured in.

use rand::Rng;

use crate::error::Result;
use crate::mesh::Domain;
use crate::operators::DiscreteField;
use crate::space::GalerkinSpace;

fn center_and_radius(domain: Domain) -> ([f64; 3], f64) {
    match domain {
        Domain::UnitDisk => ([0.0; 3], 1.0),
        Domain::UnitSquare => ([0.5, 0.5, 0.0], 0.5),
        Domain::UnitCube => ([0.5; 3], 0.5),
    }
}

fn from_vertex_fn(space: &GalerkinSpace, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..space.dim())
        .map(|j| f(space.mesh().vertex(space.vertex_of_dof(j))))
        .collect()
}

/// Distance to the boundary, interpolated.
pub fn distance_bump(space: &GalerkinSpace) -> Vec<f64> {
    let domain = space.domain();
    from_vertex_fn(space, |x| match domain {
        Domain::UnitDisk => (1.0 - x[0].hypot(x[1])).max(0.0),
        _ => x.iter().map(|&c| c.min(1.0 - c)).fold(f64::INFINITY, f64::min).max(0.0),
    })
}

/// First Dirichlet eigenfunction of the square or cube; `cos(π|x|/2)` on
/// the disk.
pub fn smooth_probe(space: &GalerkinSpace) -> Vec<f64> {
    use std::f64::consts::PI;
    let domain = space.domain();
    from_vertex_fn(space, |x| match domain {
        Domain::UnitDisk => (0.5 * PI * x[0].hypot(x[1]).min(1.0)).cos(),
        _ => x.iter().map(|&c| (PI * c).sin()).product(),
    })
}

/// Truncated Moser function with plateau radius `delta` (relative to the
/// inscribed ball), interpolated.
pub fn moser_probe(space: &GalerkinSpace, delta: f64) -> Vec<f64> {
    let n = space.space_dim() as f64;
    let (c, radius) = center_and_radius(space.domain());
    let omega = crate::constants::omega(space.space_dim());
    let t = (1.0 / delta).ln();
    let scale = omega.powf(-1.0 / n);
    from_vertex_fn(space, |x| {
        let r = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() / radius;
        if r <= delta {
            scale * t.powf((n - 1.0) / n)
        } else if r < 1.0 {
            scale * (1.0 / r).ln() / t.powf(1.0 / n)
        } else {
            0.0
        }
    })
}

/// Coefficients drawn uniformly from `[lo, hi)`.
pub fn random_field<R: Rng>(space: &GalerkinSpace, rng: &mut R, lo: f64, hi: f64) -> Vec<f64> {
    (0..space.dim()).map(|_| rng.random_range(lo..hi)).collect()
}

/// Rescales to unit `W^{1,N}_0` norm; the zero field is left alone.
pub fn normalize(space: &GalerkinSpace, xi: &mut [f64]) -> f64 {
    let norm = space.norm(xi);
    if norm > 0.0 {
        for v in xi.iter_mut() {
            *v /= norm;
        }
    }
    norm
}

/// `∫ |u|^p` by element quadrature.
pub fn lp_integral(field: &DiscreteField<'_>, p: f64) -> f64 {
    let space = field.space();
    let rule = field.rule();
    let mut total = 0.0;
    for e in 0..space.num_elements() {
        let scale = space.volume(e) / rule.reference_volume();
        for (&w, &u) in rule.weights().iter().zip(field.quad_values(e)) {
            total += scale * w * u.abs().powf(p);
        }
    }
    total
}

pub fn lp_norm(field: &DiscreteField<'_>, p: f64) -> f64 {
    lp_integral(field, p).powf(1.0 / p)
}

/// `∫ exp(σ |u|^{N/(N-1)})`; `+∞` when the integrand overflows.
pub fn exp_integral(field: &DiscreteField<'_>, sigma: f64) -> f64 {
    let space = field.space();
    let n = space.space_dim() as f64;
    let q = n / (n - 1.0);
    let rule = field.rule();
    let mut total = 0.0;
    for e in 0..space.num_elements() {
        let scale = space.volume(e) / rule.reference_volume();
        for (&w, &u) in rule.weights().iter().zip(field.quad_values(e)) {
            total += scale * w * (sigma * u.abs().powf(q)).exp();
        }
    }
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Field wrapper for a coefficient slice.
pub fn field<'s>(space: &'s GalerkinSpace, xi: &[f64]) -> Result<DiscreteField<'s>> {
    DiscreteField::from_slice(space, xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_vanish_on_the_boundary_and_are_positive_inside() {
        for domain in [Domain::UnitSquare, Domain::UnitDisk, Domain::UnitCube] {
            let space = GalerkinSpace::build(domain, 2).unwrap();
            for xi in [distance_bump(&space), smooth_probe(&space), moser_probe(&space, 0.25)] {
                assert_eq!(xi.len(), space.dim());
                assert!(xi.iter().all(|&v| v >= 0.0));
                assert!(xi.iter().any(|&v| v > 0.0));
            }
        }
    }

    #[test]
    fn exp_integral_of_zero_is_the_measure() {
        let space = GalerkinSpace::build(Domain::UnitDisk, 2).unwrap();
        let f = field(&space, &vec![0.0; space.dim()]).unwrap();
        assert!((exp_integral(&f, 10.0) - space.mesh().total_volume()).abs() < 1e-13);
    }

    #[test]
    fn lp_norm_of_constant_like_field() {
        // degree-4 quadrature is exact for |u|^2 of a P1 field
        let space = GalerkinSpace::build(Domain::UnitSquare, 1).unwrap();
        let f = field(&space, &[1.0]).unwrap();
        // ∫ w² over the star: 6 triangles × (area/6)
        assert!((lp_integral(&f, 2.0) - 6.0 * 0.125 / 6.0).abs() < 1e-14);
    }
}
