//! Structured simplicial meshes of the unit square, unit cube and a
//! polygonal unit disk, with uniform refinement.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    UnitSquare,
    UnitDisk,
    UnitCube,
}

impl Domain {
    pub fn dim(self) -> usize {
        match self {
            Domain::UnitSquare | Domain::UnitDisk => 2,
            Domain::UnitCube => 3,
        }
    }

    /// Measure of the exact domain (not its polygonal approximation).
    pub fn measure(self) -> f64 {
        match self {
            Domain::UnitSquare | Domain::UnitCube => 1.0,
            Domain::UnitDisk => std::f64::consts::PI,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::UnitSquare => "unit_square",
            Domain::UnitDisk => "unit_disk",
            Domain::UnitCube => "unit_cube",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "unit_square" | "square" => Ok(Domain::UnitSquare),
            "unit_disk" | "disk" => Ok(Domain::UnitDisk),
            "unit_cube" | "cube" => Ok(Domain::UnitCube),
            other => Err(Error::UnsupportedDomain(other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexMesh {
    domain: Domain,
    level: u32,
    vertices: Vec<[f64; 3]>,
    // triangles use the first three slots
    elements: Vec<[usize; 4]>,
    boundary: Vec<bool>,
    // each vertex is the midpoint of a coarse vertex pair (a, a) or (a, b)
    parents: Option<Vec<(usize, usize)>>,
}

/// Mesh of `domain` with `2^level` subdivisions per side.
pub fn build_mesh(domain: Domain, level: u32) -> Result<SimplexMesh> {
    if level > 12 {
        return Err(Error::InvalidInput(format!("level {level} is too fine")));
    }
    match domain {
        Domain::UnitSquare => Ok(structured(domain, level)),
        Domain::UnitCube => Ok(structured(domain, level)),
        Domain::UnitDisk => {
            let mut mesh = hexagon();
            for _ in 0..level {
                mesh = red_refine(&mesh);
            }
            Ok(mesh)
        }
    }
}

/// Uniform refinement; the result records how its vertices derive from
/// this mesh's vertices.
pub fn refine(mesh: &SimplexMesh) -> Result<SimplexMesh> {
    match mesh.domain {
        Domain::UnitDisk => Ok(red_refine(mesh)),
        d => build_mesh(d, mesh.level + 1),
    }
}

impl SimplexMesh {
    /// A mesh from explicit simplices; boundary flags come from face counting
    /// and elements are reoriented to positive volume.
    pub fn from_simplices(domain: Domain, vertices: Vec<[f64; 3]>, simplices: &[Vec<usize>]) -> Result<Self> {
        let dim = domain.dim();
        let mut elements = Vec::with_capacity(simplices.len());
        for (e, s) in simplices.iter().enumerate() {
            if s.len() != dim + 1 || s.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidInput(format!("simplex {e} is malformed")));
            }
            let mut el = [usize::MAX; 4];
            el[..=dim].copy_from_slice(s);
            orient(dim, &vertices, &mut el);
            if signed_volume(dim, &vertices, &el) <= 0.0 {
                return Err(Error::InvalidInput(format!("simplex {e} is degenerate")));
            }
            elements.push(el);
        }
        let boundary = boundary_from_faces(dim, vertices.len(), &elements);
        Ok(Self {
            domain,
            level: 0,
            vertices,
            elements,
            boundary,
            parents: None,
        })
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `2^{-level}`
    pub fn h(&self) -> f64 {
        0.5f64.powi(self.level as i32)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertices[v][..self.dim()]
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e][..self.dim() + 1]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn num_interior(&self) -> usize {
        self.boundary.iter().filter(|b| !**b).count()
    }

    pub fn parents(&self) -> Option<&[(usize, usize)]> {
        self.parents.as_deref()
    }

    /// Signed volume of element `e`.
    pub fn signed_volume(&self, e: usize) -> f64 {
        signed_volume(self.dim(), &self.vertices, &self.elements[e])
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.signed_volume(e)).sum()
    }

    /// Vertices lying on faces that belong to exactly one element.
    pub fn boundary_from_faces(&self) -> Vec<bool> {
        boundary_from_faces(self.dim(), self.vertices.len(), &self.elements)
    }
}

fn signed_volume(dim: usize, vertices: &[[f64; 3]], el: &[usize; 4]) -> f64 {
    let p0 = vertices[el[0]];
    let d = |i: usize| {
        let p = vertices[el[i]];
        [p[0] - p0[0], p[1] - p0[1], p[2] - p0[2]]
    };
    if dim == 2 {
        let (a, b) = (d(1), d(2));
        0.5 * (a[0] * b[1] - a[1] * b[0])
    } else {
        let (a, b, c) = (d(1), d(2), d(3));
        let det = a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
            + a[2] * (b[0] * c[1] - b[1] * c[0]);
        det / 6.0
    }
}

fn orient(dim: usize, vertices: &[[f64; 3]], el: &mut [usize; 4]) {
    if signed_volume(dim, vertices, el) < 0.0 {
        el.swap(0, 1);
    }
}

fn boundary_from_faces(dim: usize, nv: usize, elements: &[[usize; 4]]) -> Vec<bool> {
    let mut faces: HashMap<Vec<usize>, u32> = HashMap::new();
    for el in elements {
        for skip in 0..=dim {
            let mut face: Vec<usize> = (0..=dim).filter(|&i| i != skip).map(|i| el[i]).collect();
            face.sort_unstable();
            *faces.entry(face).or_insert(0) += 1;
        }
    }
    let mut boundary = vec![false; nv];
    for (face, count) in faces {
        if count < 2 {
            for v in face {
                boundary[v] = true;
            }
        }
    }
    boundary
}

// Kuhn (Freudenthal) subdivision of the lattice cells; vertices in
// lexicographic order with x fastest.
fn structured(domain: Domain, level: u32) -> SimplexMesh {
    let dim = domain.dim();
    let n = 1usize << level;
    let side = n + 1;
    let h = 1.0 / n as f64;
    let zsize = if dim == 3 { side } else { 1 };
    let index = |i: usize, j: usize, k: usize| i + side * (j + side * k);

    let mut vertices = Vec::with_capacity(side * side * zsize);
    let mut boundary = Vec::with_capacity(vertices.capacity());
    for k in 0..zsize {
        for j in 0..side {
            for i in 0..side {
                vertices.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                let on = |c: usize| c == 0 || c == n;
                boundary.push(on(i) || on(j) || (dim == 3 && on(k)));
            }
        }
    }

    let mut elements = Vec::new();
    let cells_z = if dim == 3 { n } else { 1 };
    for k in 0..cells_z {
        for j in 0..n {
            for i in 0..n {
                let base = [i, j, k];
                if dim == 2 {
                    for perm in [[0usize, 1], [1, 0]] {
                        let mut c = base;
                        let mut el = [index(c[0], c[1], 0), 0, 0, usize::MAX];
                        for (slot, &axis) in perm.iter().enumerate() {
                            c[axis] += 1;
                            el[slot + 1] = index(c[0], c[1], 0);
                        }
                        orient(2, &vertices, &mut el);
                        elements.push(el);
                    }
                } else {
                    for perm in [[0usize, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                        let mut c = base;
                        let mut el = [index(c[0], c[1], c[2]), 0, 0, 0];
                        for (slot, &axis) in perm.iter().enumerate() {
                            c[axis] += 1;
                            el[slot + 1] = index(c[0], c[1], c[2]);
                        }
                        orient(3, &vertices, &mut el);
                        elements.push(el);
                    }
                }
            }
        }
    }

    let parents = (level > 0).then(|| {
        let cside = n / 2 + 1;
        let cindex = |i: usize, j: usize, k: usize| i + cside * (j + cside * k);
        let mut parents = Vec::with_capacity(vertices.len());
        for k in 0..zsize {
            for j in 0..side {
                for i in 0..side {
                    // floor and ceil of the halved lattice index
                    let lo = cindex(i / 2, j / 2, k / 2);
                    let hi = cindex(i.div_ceil(2), j.div_ceil(2), k.div_ceil(2));
                    parents.push((lo, hi));
                }
            }
        }
        parents
    });

    SimplexMesh {
        domain,
        level,
        vertices,
        elements,
        boundary,
        parents,
    }
}

fn hexagon() -> SimplexMesh {
    let mut vertices = vec![[0.0; 3]];
    for i in 0..6 {
        let t = std::f64::consts::PI * i as f64 / 3.0;
        vertices.push([t.cos(), t.sin(), 0.0]);
    }
    let elements = (0..6)
        .map(|i| [0, 1 + i, 1 + (i + 1) % 6, usize::MAX])
        .collect();
    let mut boundary = vec![true; 7];
    boundary[0] = false;
    SimplexMesh {
        domain: Domain::UnitDisk,
        level: 0,
        vertices,
        elements,
        boundary,
        parents: None,
    }
}

// Splits every triangle into four; midpoints of boundary edges are pushed
// out onto the unit circle.
fn red_refine(mesh: &SimplexMesh) -> SimplexMesh {
    let mut vertices = mesh.vertices.clone();
    let mut boundary = mesh.boundary.clone();
    let mut parents: Vec<(usize, usize)> = (0..vertices.len()).map(|v| (v, v)).collect();
    let coarse_boundary = mesh.boundary_from_faces();
    let mut edge_count: HashMap<(usize, usize), u32> = HashMap::new();
    for el in &mesh.elements {
        for (a, b) in [(el[0], el[1]), (el[1], el[2]), (el[2], el[0])] {
            *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let (pa, pb) = (vertices[key.0], vertices[key.1]);
            let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1]), 0.0];
            let on_boundary = edge_count[&key] == 1 && coarse_boundary[key.0] && coarse_boundary[key.1];
            if on_boundary && mesh.domain == Domain::UnitDisk {
                let r = m[0].hypot(m[1]);
                m[0] /= r;
                m[1] /= r;
            }
            vertices.push(m);
            boundary.push(on_boundary);
            parents.push(key);
            vertices.len() - 1
        })
    };
    let mut elements = Vec::with_capacity(4 * mesh.elements.len());
    for el in &mesh.elements {
        let [a, b, c, _] = *el;
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        for mut child in [[a, ab, ca, usize::MAX], [ab, b, bc, usize::MAX], [ca, bc, c, usize::MAX], [ab, bc, ca, usize::MAX]] {
            orient(2, &vertices, &mut child);
            elements.push(child);
        }
    }
    SimplexMesh {
        domain: mesh.domain,
        level: mesh.level + 1,
        vertices,
        elements,
        boundary,
        parents: Some(parents),
    }
}
