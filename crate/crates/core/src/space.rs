//! Piecewise-linear Galerkin spaces spanned by interior hat functions.

use nalgebra::{Matrix2, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_mesh, refine, Domain, SimplexMesh};

/// Coefficients of `u = Σ ξ_j w_j` on a given level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector {
    pub level: u32,
    pub xi: Vec<f64>,
}

impl CoefficientVector {
    pub fn new(level: u32, xi: Vec<f64>) -> Self {
        Self { level, xi }
    }

    pub fn zeros(space: &GalerkinSpace) -> Self {
        Self::new(space.level(), vec![0.0; space.dim()])
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct GalerkinSpace {
    mesh: SimplexMesh,
    vertex_of_dof: Vec<usize>,
    dof_of_vertex: Vec<Option<usize>>,
    volumes: Vec<f64>,
    // gradients of the barycentric coordinates, one row per local vertex
    grads: Vec<[[f64; 3]; 4]>,
}

impl GalerkinSpace {
    pub fn new(mesh: SimplexMesh) -> Result<Self> {
        let mut vertex_of_dof = Vec::new();
        let mut dof_of_vertex = vec![None; mesh.num_vertices()];
        for (v, slot) in dof_of_vertex.iter_mut().enumerate() {
            if !mesh.is_boundary(v) {
                *slot = Some(vertex_of_dof.len());
                vertex_of_dof.push(v);
            }
        }
        let dim = mesh.dim();
        let mut volumes = Vec::with_capacity(mesh.num_elements());
        let mut grads = Vec::with_capacity(mesh.num_elements());
        for e in 0..mesh.num_elements() {
            let el = mesh.element(e);
            let p0 = mesh.vertex(el[0]);
            let mut g = [[0.0; 3]; 4];
            if dim == 2 {
                let (p1, p2) = (mesh.vertex(el[1]), mesh.vertex(el[2]));
                let jac = Matrix2::new(p1[0] - p0[0], p2[0] - p0[0], p1[1] - p0[1], p2[1] - p0[1]);
                let inv = jac
                    .try_inverse()
                    .ok_or_else(|| Error::DegenerateSpace(format!("element {e} is flat")))?;
                for i in 0..2 {
                    g[i + 1] = [inv[(i, 0)], inv[(i, 1)], 0.0];
                }
            } else {
                let (p1, p2, p3) = (mesh.vertex(el[1]), mesh.vertex(el[2]), mesh.vertex(el[3]));
                let jac = Matrix3::from_fn(|r, c| [p1, p2, p3][c][r] - p0[r]);
                let inv = jac
                    .try_inverse()
                    .ok_or_else(|| Error::DegenerateSpace(format!("element {e} is flat")))?;
                for i in 0..3 {
                    g[i + 1] = [inv[(i, 0)], inv[(i, 1)], inv[(i, 2)]];
                }
            }
            for d in 0..3 {
                g[0][d] = -(1..=dim).map(|i| g[i][d]).sum::<f64>();
            }
            volumes.push(mesh.signed_volume(e));
            grads.push(g);
        }
        Ok(Self {
            mesh,
            vertex_of_dof,
            dof_of_vertex,
            volumes,
            grads,
        })
    }

    pub fn build(domain: Domain, level: u32) -> Result<Self> {
        Self::new(build_mesh(domain, level)?)
    }

    /// Number of basis functions `m`.
    pub fn dim(&self) -> usize {
        self.vertex_of_dof.len()
    }

    /// Spatial dimension `N`.
    pub fn space_dim(&self) -> usize {
        self.mesh.dim()
    }

    pub fn level(&self) -> u32 {
        self.mesh.level()
    }

    pub fn mesh(&self) -> &SimplexMesh {
        &self.mesh
    }

    pub fn domain(&self) -> Domain {
        self.mesh.domain()
    }

    pub fn num_elements(&self) -> usize {
        self.volumes.len()
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    /// Gradients of the local barycentric coordinates of element `e`.
    pub fn bary_grads(&self, e: usize) -> &[[f64; 3]] {
        &self.grads[e][..self.space_dim() + 1]
    }

    /// Degree of freedom carried by local vertex `a` of element `e`.
    pub fn local_dof(&self, e: usize, a: usize) -> Option<usize> {
        self.dof_of_vertex[self.mesh.element(e)[a]]
    }

    pub fn dof_of_vertex(&self, v: usize) -> Option<usize> {
        self.dof_of_vertex[v]
    }

    pub fn vertex_of_dof(&self, j: usize) -> usize {
        self.vertex_of_dof[j]
    }

    pub fn check(&self, xi: &CoefficientVector) -> Result<()> {
        if xi.level != self.level() || xi.len() != self.dim() {
            return Err(Error::LevelMismatch(format!(
                "vector of length {} on level {} does not match space of dimension {} on level {}",
                xi.len(),
                xi.level,
                self.dim(),
                self.level()
            )));
        }
        Ok(())
    }

    /// Values at every mesh vertex; boundary vertices are zero.
    pub fn nodal_values(&self, xi: &[f64]) -> Vec<f64> {
        let mut values = vec![0.0; self.mesh.num_vertices()];
        for (j, &v) in self.vertex_of_dof.iter().enumerate() {
            values[v] = xi[j];
        }
        values
    }

    pub fn coefficients_from_nodal(&self, nodal: &[f64]) -> Vec<f64> {
        self.vertex_of_dof.iter().map(|&v| nodal[v]).collect()
    }

    /// Constant gradient of `u` on element `e` from nodal values.
    pub fn element_gradient(&self, e: usize, nodal: &[f64]) -> [f64; 3] {
        let el = self.mesh.element(e);
        let mut g = [0.0; 3];
        for (a, &v) in el.iter().enumerate() {
            let u = nodal[v];
            for d in 0..3 {
                g[d] += u * self.grads[e][a][d];
            }
        }
        g
    }

    /// `(∫ |∇u|^N)^{1/N}`, exact for piecewise-linear `u`.
    pub fn norm(&self, xi: &[f64]) -> f64 {
        let n = self.space_dim() as f64;
        let nodal = self.nodal_values(xi);
        let sum: f64 = (0..self.num_elements())
            .map(|e| {
                let g = self.element_gradient(e, &nodal);
                self.volumes[e] * dot(&g, &g).powf(0.5 * n)
            })
            .sum();
        sum.powf(1.0 / n)
    }

    /// `∫ w_j` for every basis function.
    pub fn hat_integrals(&self) -> Vec<f64> {
        let share = 1.0 / (self.space_dim() + 1) as f64;
        let mut out = vec![0.0; self.dim()];
        for e in 0..self.num_elements() {
            for a in 0..=self.space_dim() {
                if let Some(j) = self.local_dof(e, a) {
                    out[j] += share * self.volumes[e];
                }
            }
        }
        out
    }

    /// Point evaluation of the field with the given nodal values; `None`
    /// outside the mesh.
    pub fn eval_at(&self, nodal: &[f64], x: &[f64]) -> Option<f64> {
        let dim = self.space_dim();
        for e in 0..self.num_elements() {
            let el = self.mesh.element(e);
            let p0 = self.mesh.vertex(el[0]);
            let mut bary = [0.0; 4];
            for a in 1..=dim {
                bary[a] = (0..dim).map(|d| self.grads[e][a][d] * (x[d] - p0[d])).sum();
            }
            bary[0] = 1.0 - bary[1..=dim].iter().sum::<f64>();
            if bary[..=dim].iter().all(|&b| b >= -1e-12) {
                return Some(el.iter().zip(&bary).map(|(&v, b)| b * nodal[v]).sum());
            }
        }
        None
    }

    /// One uniform refinement of this space.
    pub fn refine(&self) -> Result<GalerkinSpace> {
        GalerkinSpace::new(refine(&self.mesh)?)
    }
}

pub(crate) fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `‖Σ ξ_j w_j‖_{W^{1,N}_0}`.
pub fn xi_norm(space: &GalerkinSpace, xi: &CoefficientVector) -> Result<f64> {
    space.check(xi)?;
    Ok(space.norm(&xi.xi))
}

/// Nested spaces on levels `0..=max_level` of one domain.
#[derive(Debug, Clone)]
pub struct SpaceHierarchy {
    spaces: Vec<GalerkinSpace>,
}

impl SpaceHierarchy {
    pub fn build(domain: Domain, max_level: u32) -> Result<Self> {
        let mut spaces = vec![GalerkinSpace::build(domain, 0)?];
        for _ in 0..max_level {
            let next = spaces.last().expect("nonempty").refine()?;
            spaces.push(next);
        }
        Ok(Self { spaces })
    }

    pub fn domain(&self) -> Domain {
        self.spaces[0].domain()
    }

    pub fn max_level(&self) -> u32 {
        (self.spaces.len() - 1) as u32
    }

    pub fn space(&self, level: u32) -> Result<&GalerkinSpace> {
        self.spaces
            .get(level as usize)
            .ok_or_else(|| Error::LevelMismatch(format!("level {level} is not in the hierarchy")))
    }

    /// The same function expressed on `target_level`.
    pub fn prolong(&self, xi: &CoefficientVector, target_level: u32) -> Result<CoefficientVector> {
        if target_level < xi.level {
            return Err(Error::LevelMismatch(format!(
                "cannot prolong from level {} down to {target_level}",
                xi.level
            )));
        }
        let start = self.space(xi.level)?;
        start.check(xi)?;
        self.space(target_level)?;
        let mut nodal = start.nodal_values(&xi.xi);
        for level in xi.level + 1..=target_level {
            let fine = &self.spaces[level as usize];
            let parents = fine
                .mesh()
                .parents()
                .ok_or_else(|| Error::LevelMismatch(format!("level {level} has no parent map")))?;
            nodal = parents
                .iter()
                .enumerate()
                .map(|(v, &(a, b))| {
                    if fine.mesh().is_boundary(v) {
                        0.0
                    } else {
                        0.5 * (nodal[a] + nodal[b])
                    }
                })
                .collect();
        }
        let target = &self.spaces[target_level as usize];
        Ok(CoefficientVector::new(target_level, target.coefficients_from_nodal(&nodal)))
    }
}

/// Free-function form of [`SpaceHierarchy::prolong`].
pub fn prolong(
    hierarchy: &SpaceHierarchy,
    xi: &CoefficientVector,
    target_level: u32,
) -> Result<CoefficientVector> {
    hierarchy.prolong(xi, target_level)
}
