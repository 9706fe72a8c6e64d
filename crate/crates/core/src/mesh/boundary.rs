use std::collections::BTreeMap;

use super::SimplicialMesh;
use crate::error::{Error, Result};

/// Outward-oriented boundary facets (edges in 2D, triangles in 3D), each
/// tagged with the element it belongs to.
///
/// Orientation convention: in 2D the outward normal of edge `(p, q)` is
/// `(q - p)` rotated clockwise; in 3D the outward normal of `(p, q, r)` is
/// `(q - p) × (r - p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySurface {
    dim: usize,
    facets: Vec<usize>,
    parents: Vec<usize>,
}

impl BoundarySurface {
    /// Facets that belong to exactly one element.
    pub fn extract(mesh: &SimplicialMesh) -> Result<Self> {
        let dim = mesh.dim();
        let mut table: BTreeMap<Vec<usize>, (usize, usize, Vec<usize>)> = BTreeMap::new();
        for (e, el) in mesh.elements().enumerate() {
            for k in 0..=dim {
                let mut facet: Vec<usize> = el
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &v)| v)
                    .collect();
                // keep (facet, opposite) at sign (-1)^d so the normal points away from `opposite`
                if k % 2 == 1 {
                    facet.swap(0, 1);
                }
                let mut key = facet.clone();
                key.sort_unstable();
                table
                    .entry(key)
                    .and_modify(|entry| entry.1 += 1)
                    .or_insert((e, 1, facet));
            }
        }
        let mut facets = Vec::new();
        let mut parents = Vec::new();
        for (key, (parent, count, oriented)) in table {
            match count {
                1 => {
                    facets.extend_from_slice(&oriented);
                    parents.push(parent);
                }
                2 => {}
                _ => return Err(Error::NonManifold { facet: key, count }),
            }
        }
        // order by parent element, then facet, for a stable layout
        let mut order: Vec<usize> = (0..parents.len()).collect();
        order.sort_by_key(|&f| (parents[f], facets[f * dim..(f + 1) * dim].to_vec()));
        let facets = order
            .iter()
            .flat_map(|&f| facets[f * dim..(f + 1) * dim].to_vec())
            .collect();
        let parents = order.iter().map(|&f| parents[f]).collect();
        Ok(BoundarySurface {
            dim,
            facets,
            parents,
        })
    }

    /// Build from explicit facets (e.g. static collider geometry).
    pub fn from_facets(dim: usize, facets: Vec<usize>, parents: Vec<usize>) -> Self {
        assert_eq!(facets.len(), dim * parents.len());
        BoundarySurface {
            dim,
            facets,
            parents,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_facets(&self) -> usize {
        self.parents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parents.is_empty()
    }

    pub fn facet(&self, f: usize) -> &[usize] {
        &self.facets[f * self.dim..(f + 1) * self.dim]
    }

    pub fn facets(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.facets.chunks(self.dim)
    }

    pub fn parent(&self, f: usize) -> usize {
        self.parents[f]
    }

    /// Sorted, unique vertices touched by boundary facets.
    pub fn vertices(&self) -> Vec<usize> {
        let mut v = self.facets.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Unnormalized outward normal of facet `f` at positions `x`.
    pub fn normal(&self, f: usize, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let fv = self.facet(f);
        let p = |i: usize, k: usize| x[fv[i] * d + k];
        match d {
            2 => vec![p(1, 1) - p(0, 1), -(p(1, 0) - p(0, 0))],
            _ => {
                let a = [p(1, 0) - p(0, 0), p(1, 1) - p(0, 1), p(1, 2) - p(0, 2)];
                let b = [p(2, 0) - p(0, 0), p(2, 1) - p(0, 1), p(2, 2) - p(0, 2)];
                vec![
                    a[1] * b[2] - a[2] * b[1],
                    a[2] * b[0] - a[0] * b[2],
                    a[0] * b[1] - a[1] * b[0],
                ]
            }
        }
    }

    /// Sub-facets (boundary edges of the surface in 3D, endpoints in 2D) with
    /// the number of boundary facets sharing each one.
    pub fn subfacet_counts(&self) -> BTreeMap<Vec<usize>, usize> {
        let mut counts = BTreeMap::new();
        for fv in self.facets() {
            for skip in 0..fv.len() {
                let mut key: Vec<usize> = fv
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != skip)
                    .map(|(_, &v)| v)
                    .collect();
                key.sort_unstable();
                *counts.entry(key).or_insert(0) += 1;
            }
        }
        counts
    }
}
