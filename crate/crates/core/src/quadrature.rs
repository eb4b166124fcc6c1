//! Quadrature on the reference triangle and tetrahedron.
//!
//! Points are stored in barycentric coordinates so that the value of the
//! local hat function `a` at point `q` is simply `bary[q][a]`.

use crate::error::{Error, Result};
use crate::quad1d::gauss_legendre;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    dim: usize,
    degree: usize,
    bary: Vec<[f64; 4]>,
    weights: Vec<f64>,
}

const TRI_D4: [(f64, f64); 2] = [
    (0.445_948_490_915_964_9, 0.223_381_589_678_011_5),
    (0.091_576_213_509_770_74, 0.109_951_743_655_321_9),
];

const TET_D5_CORNER: [(f64, f64); 2] = [
    (0.092_735_250_310_891_2, 0.012_248_840_519_393_66),
    (0.310_885_919_263_300_6, 0.018_781_320_953_002_64),
];
const TET_D5_EDGE: (f64, f64) = (0.454_496_295_874_350_4, 0.007_091_003_462_846_911);

impl QuadratureRule {
    /// The cheapest built-in rule that is exact to at least `degree`.
    ///
    /// Triangles: degrees 1, 2, 4. Tetrahedra: degrees 1, 2, 5.
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        match dim {
            2 => Ok(match degree {
                0 | 1 => Self::triangle_centroid(),
                2 => Self::triangle_degree2(),
                3 | 4 => Self::triangle_degree4(),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "no triangle rule of degree {degree}"
                    )))
                }
            }),
            3 => Ok(match degree {
                0 | 1 => Self::tet_centroid(),
                2 => Self::tet_degree2(),
                3..=5 => Self::tet_degree5(),
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "no tetrahedron rule of degree {degree}"
                    )))
                }
            }),
            _ => Err(Error::InvalidInput(format!("no quadrature in dimension {dim}"))),
        }
    }

    fn triangle_centroid() -> Self {
        let t = 1.0 / 3.0;
        Self {
            dim: 2,
            degree: 1,
            bary: vec![[t, t, t, 0.0]],
            weights: vec![0.5],
        }
    }

    fn triangle_degree2() -> Self {
        let (a, b) = (2.0 / 3.0, 1.0 / 6.0);
        Self {
            dim: 2,
            degree: 2,
            bary: vec![[a, b, b, 0.0], [b, a, b, 0.0], [b, b, a, 0.0]],
            weights: vec![1.0 / 6.0; 3],
        }
    }

    fn triangle_degree4() -> Self {
        let mut bary = Vec::with_capacity(6);
        let mut weights = Vec::with_capacity(6);
        for &(a, w) in &TRI_D4 {
            let b = 1.0 - 2.0 * a;
            for p in [[b, a, a, 0.0], [a, b, a, 0.0], [a, a, b, 0.0]] {
                bary.push(p);
                weights.push(0.5 * w);
            }
        }
        Self {
            dim: 2,
            degree: 4,
            bary,
            weights,
        }
    }

    fn tet_centroid() -> Self {
        Self {
            dim: 3,
            degree: 1,
            bary: vec![[0.25; 4]],
            weights: vec![1.0 / 6.0],
        }
    }

    fn tet_degree2() -> Self {
        let a = 0.138_196_601_125_010_5;
        let b = 1.0 - 3.0 * a;
        Self {
            dim: 3,
            degree: 2,
            bary: vec![[b, a, a, a], [a, b, a, a], [a, a, b, a], [a, a, a, b]],
            weights: vec![1.0 / 24.0; 4],
        }
    }

    fn tet_degree5() -> Self {
        let mut bary = Vec::with_capacity(14);
        let mut weights = Vec::with_capacity(14);
        for &(a, w) in &TET_D5_CORNER {
            let b = 1.0 - 3.0 * a;
            for i in 0..4 {
                let mut p = [a; 4];
                p[i] = b;
                bary.push(p);
                weights.push(w);
            }
        }
        let (a, w) = TET_D5_EDGE;
        let b = 0.5 - a;
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)] {
            let mut p = [b; 4];
            p[i] = a;
            p[j] = a;
            bary.push(p);
            weights.push(w);
        }
        Self {
            dim: 3,
            degree: 5,
            bary,
            weights,
        }
    }

    /// Collapsed-coordinate Gauss-Legendre product rule with `n` points per
    /// direction, exact to degree `2n - dim`. Weights are positive.
    pub fn collapsed_gauss(dim: usize, n: usize) -> Result<Self> {
        if n < dim {
            return Err(Error::InvalidInput(format!("collapsed rule needs at least {dim} points")));
        }
        let (x, w) = gauss_legendre(n);
        let nodes: Vec<(f64, f64)> = x.iter().zip(&w).map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).collect();
        let mut bary = Vec::new();
        let mut weights = Vec::new();
        match dim {
            2 => {
                for &(u, wu) in &nodes {
                    for &(v, wv) in &nodes {
                        let px = u;
                        let py = v * (1.0 - u);
                        bary.push([1.0 - px - py, px, py, 0.0]);
                        weights.push(wu * wv * (1.0 - u));
                    }
                }
            }
            3 => {
                for &(u, wu) in &nodes {
                    for &(v, wv) in &nodes {
                        for &(t, wt) in &nodes {
                            let px = u;
                            let py = v * (1.0 - u);
                            let pz = t * (1.0 - u) * (1.0 - v);
                            bary.push([1.0 - px - py - pz, px, py, pz]);
                            weights.push(wu * wv * wt * (1.0 - u) * (1.0 - u) * (1.0 - v));
                        }
                    }
                }
            }
            _ => return Err(Error::InvalidInput(format!("no quadrature in dimension {dim}"))),
        }
        Ok(Self {
            dim,
            degree: 2 * n - dim,
            bary,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Barycentric coordinates of each point; entries past `dim + 1` are zero.
    pub fn bary(&self) -> &[[f64; 4]] {
        &self.bary
    }

    /// Weights on the reference simplex; they sum to `1/dim!`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn reference_volume(&self) -> f64 {
        if self.dim == 2 {
            0.5
        } else {
            1.0 / 6.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    // ∫ over the reference simplex of x^a y^b z^c = a! b! c! / (a+b+c+dim)!
    fn exact_monomial(dim: usize, e: [u32; 3]) -> f64 {
        let num = factorial(e[0]) * factorial(e[1]) * factorial(e[2]);
        num / factorial(e[0] + e[1] + e[2] + dim as u32)
    }

    fn check_rule(rule: &QuadratureRule) {
        let dim = rule.dim();
        let degree = rule.degree() as u32;
        assert!(rule.weights().iter().all(|&w| w > 0.0));
        let total: f64 = rule.weights().iter().sum();
        assert!((total - rule.reference_volume()).abs() < 1e-14);
        for p in rule.bary() {
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
            assert!(p.iter().all(|&c| c >= 0.0));
        }
        for a in 0..=degree {
            for b in 0..=(degree - a) {
                let cmax = if dim == 3 { degree - a - b } else { 0 };
                for c in 0..=cmax {
                    let approx: f64 = rule
                        .bary()
                        .iter()
                        .zip(rule.weights())
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32) * p[3].powi(c as i32))
                        .sum();
                    let exact = exact_monomial(dim, [a, b, c]);
                    assert!(
                        (approx - exact).abs() < 1e-14,
                        "dim {dim} degree {degree}: monomial {a},{b},{c}: {approx} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn builtin_rules_are_exact() {
        for (dim, degree) in [(2, 1), (2, 2), (2, 4), (3, 1), (3, 2), (3, 5)] {
            let rule = QuadratureRule::new(dim, degree).unwrap();
            assert_eq!(rule.degree(), degree);
            check_rule(&rule);
        }
    }

    #[test]
    fn collapsed_rules_are_exact() {
        for dim in [2, 3] {
            for n in dim..7 {
                check_rule(&QuadratureRule::collapsed_gauss(dim, n).unwrap());
            }
        }
    }

    #[test]
    fn rejects_unknown_rules() {
        assert!(QuadratureRule::new(2, 5).is_err());
        assert!(QuadratureRule::new(3, 6).is_err());
        assert!(QuadratureRule::new(4, 1).is_err());
    }
}
