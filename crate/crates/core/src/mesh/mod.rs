//! Simplicial meshes (triangles in 2D, tetrahedra in 3D): geometry,
//! connectivity, lumped mass and file formats.

mod adjacency;
mod boundary;
pub mod io;
mod mass;

pub use adjacency::Adjacency;
pub use boundary::BoundarySurface;
pub use io::{load_mesh, save_mesh, MeshFormat};
pub use mass::{lumped_mass, Density, LumpedMass};

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Elements with |measure| at or below this fraction of `extent^d` are rejected.
pub const DEGENERACY_FLOOR: f64 = 1e-14;

/// Rest geometry and connectivity of one level.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplicialMesh {
    dim: usize,
    rest: Vec<f64>,
    elements: Vec<usize>,
    level_id: usize,
}

impl SimplicialMesh {
    /// Validate and build a mesh, flipping negatively oriented elements.
    /// Returns the mesh and the number of elements that were reoriented.
    pub fn new(
        dim: usize,
        rest: Vec<f64>,
        mut elements: Vec<usize>,
        level_id: usize,
    ) -> Result<(Self, usize)> {
        if dim != 2 && dim != 3 {
            return Err(Error::Invalid(format!("unsupported dimension {dim}")));
        }
        if rest.len() % dim != 0 {
            return Err(Error::SizeMismatch {
                what: "vertex coordinates",
                expected: dim * (rest.len() / dim + 1),
                found: rest.len(),
            });
        }
        let nv = rest.len() / dim;
        let k = dim + 1;
        if elements.len() % k != 0 {
            return Err(Error::SizeMismatch {
                what: "element connectivity",
                expected: k * (elements.len() / k + 1),
                found: elements.len(),
            });
        }
        if let Some(&bad) = elements.iter().find(|&&v| v >= nv) {
            return Err(Error::Invalid(format!(
                "vertex index {bad} out of range ({nv} vertices)"
            )));
        }
        if rest.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("non-finite vertex coordinate".into()));
        }
        let mut seen = BTreeSet::new();
        for (e, el) in elements.chunks(k).enumerate() {
            let mut key = el.to_vec();
            key.sort_unstable();
            if key.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::DegenerateElement {
                    index: e,
                    measure: 0.0,
                });
            }
            if !seen.insert(key) {
                return Err(Error::Invalid(format!("duplicate element {e}")));
            }
        }

        let mut mesh = SimplicialMesh {
            dim,
            rest,
            elements: Vec::new(),
            level_id,
        };
        let extent = mesh.bbox_extent();
        let floor = DEGENERACY_FLOOR * extent.powi(dim as i32);
        let mut flipped = 0;
        for (e, el) in elements.chunks_mut(k).enumerate() {
            let vol = signed_measure(dim, &mesh.rest, el);
            if vol.abs() <= floor {
                return Err(Error::DegenerateElement {
                    index: e,
                    measure: vol,
                });
            }
            if vol < 0.0 {
                el.swap(0, 1);
                flipped += 1;
            }
        }
        mesh.elements = elements;
        Ok((mesh, flipped))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level_id(&self) -> usize {
        self.level_id
    }

    pub fn set_level_id(&mut self, id: usize) {
        self.level_id = id;
    }

    pub fn n_vertices(&self) -> usize {
        self.rest.len() / self.dim
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len() / (self.dim + 1)
    }

    /// Vertices per element.
    pub fn simplex_size(&self) -> usize {
        self.dim + 1
    }

    pub fn rest_positions(&self) -> &[f64] {
        &self.rest
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.rest[i * self.dim..(i + 1) * self.dim]
    }

    pub fn element(&self, e: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn elements(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.elements.chunks(self.dim + 1)
    }

    pub fn connectivity(&self) -> &[usize] {
        &self.elements
    }

    /// Rest volume (area in 2D) of element `e`.
    pub fn element_volume(&self, e: usize) -> f64 {
        signed_measure(self.dim, &self.rest, self.element(e))
    }

    /// Signed volume of element `e` evaluated at deformed positions `x`.
    pub fn signed_volume_at(&self, e: usize, x: &[f64]) -> f64 {
        signed_measure(self.dim, x, self.element(e))
    }

    /// Rest gradients of the linear hat functions of element `e`, flat with
    /// `dim` entries per element vertex.
    pub fn shape_gradients(&self, e: usize) -> Vec<f64> {
        let d = self.dim;
        let el = self.element(e);
        let dm = nalgebra::DMatrix::from_fn(d, d, |r, c| {
            self.rest[el[c + 1] * d + r] - self.rest[el[0] * d + r]
        });
        let inv = dm
            .try_inverse()
            .expect("element checked non-degenerate at construction");
        let mut g = vec![0.0; (d + 1) * d];
        for j in 1..=d {
            for k in 0..d {
                g[j * d + k] = inv[(j - 1, k)];
                g[k] -= inv[(j - 1, k)];
            }
        }
        g
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_elements()).map(|e| self.element_volume(e)).sum()
    }

    pub fn element_centroid(&self, e: usize) -> Vec<f64> {
        centroid(self.dim, &self.rest, self.element(e))
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        bbox_of(self.dim, &self.rest)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.iter()
            .zip(&hi)
            .map(|(a, b)| (b - a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn bbox_extent(&self) -> f64 {
        let (lo, hi) = self.bbox();
        lo.iter().zip(&hi).fold(0.0_f64, |m, (a, b)| m.max(b - a))
    }

    pub fn mean_edge_length(&self) -> f64 {
        let adj = Adjacency::build(self);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (i, nb) in adj.vertex_vertex.iter().enumerate() {
            for &j in nb.iter().filter(|&&j| j > i) {
                sum += dist(self.vertex(i), self.vertex(j));
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }

    /// Copy with vertex `i` moved to `new[i]` (no validation beyond `new`).
    pub fn with_rest_positions(&self, rest: Vec<f64>) -> Result<Self> {
        let (m, flipped) =
            SimplicialMesh::new(self.dim, rest, self.elements.clone(), self.level_id)?;
        if flipped != 0 {
            return Err(Error::Invalid(format!(
                "{flipped} elements inverted by new rest positions"
            )));
        }
        Ok(m)
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn centroid(dim: usize, x: &[f64], el: &[usize]) -> Vec<f64> {
    let mut c = vec![0.0; dim];
    for &v in el {
        for k in 0..dim {
            c[k] += x[v * dim + k];
        }
    }
    let s = 1.0 / el.len() as f64;
    c.iter_mut().for_each(|v| *v *= s);
    c
}

pub(crate) fn bbox_of(dim: usize, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for p in x.chunks(dim) {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

/// Signed area (2D) or volume (3D) of the simplex `el` at positions `x`.
pub fn signed_measure(dim: usize, x: &[f64], el: &[usize]) -> f64 {
    let p = |v: usize, k: usize| x[el[v] * dim + k] - x[el[0] * dim + k];
    match dim {
        2 => 0.5 * (p(1, 0) * p(2, 1) - p(1, 1) * p(2, 0)),
        3 => {
            let (a, b, c) = (
                [p(1, 0), p(1, 1), p(1, 2)],
                [p(2, 0), p(2, 1), p(2, 2)],
                [p(3, 0), p(3, 1), p(3, 2)],
            );
            (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]))
                / 6.0
        }
        _ => unreachable!("dimension checked at construction"),
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn shape_gradients_reproduce_linear_fields() {
        let m = two_tets();
        for e in 0..2 {
            let g = m.shape_gradients(e);
            // u = 2x - y + 3z + 1 has gradient (2, -1, 3)
            let mut grad = [0.0; 3];
            for (j, &v) in m.element(e).iter().enumerate() {
                let p = m.vertex(v);
                let u = 2.0 * p[0] - p[1] + 3.0 * p[2] + 1.0;
                for k in 0..3 {
                    grad[k] += u * g[j * 3 + k];
                }
            }
            for (a, b) in grad.iter().zip([2.0, -1.0, 3.0]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_tet_volume() {
        let m = unit_tet();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_elements(), 1);
        assert!((m.total_volume() - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn inverted_element_is_reoriented() {
        let (m, flipped) = SimplicialMesh::new(
            3,
            vec![0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0., 1.],
            vec![1, 0, 2, 3],
            0,
        )
        .unwrap();
        assert_eq!(flipped, 1);
        assert!(m.element_volume(0) > 0.0);
    }

    #[test]
    fn unit_square_area() {
        let m = unit_square();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.n_vertices(), 4);
        assert!((m.total_volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_element_rejected() {
        let err = SimplicialMesh::new(
            3,
            vec![0., 0., 0., 1., 0., 0., 0., 1., 0., 1., 1., 0.],
            vec![0, 1, 2, 3],
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateElement { index: 0, .. }));
    }

    #[test]
    fn out_of_range_index_rejected() {
        assert!(SimplicialMesh::new(2, vec![0., 0., 1., 0., 0., 1.], vec![0, 1, 3], 0).is_err());
    }

    #[test]
    fn duplicate_element_rejected() {
        let r = SimplicialMesh::new(2, vec![0., 0., 1., 0., 0., 1.], vec![0, 1, 2, 1, 2, 0], 0);
        assert!(r.is_err());
    }
}
