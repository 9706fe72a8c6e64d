//! Fine-vertex to coarse-element binding with barycentric coordinates.
//!
//! Text format written by [`BindingMap::to_text`]:
//!
//! ```text
//! # lodyn binding
//! <n_vertices> <dim>
//! <vertex> <host element> <inside|extrapolated> <w_0> ... <w_dim>
//! ```
//!
//! One line per fine vertex in index order; weights use 17 significant digits.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use serde::Serialize;

use crate::bvh::{Aabb, Bvh};
use crate::error::{Error, Result};
use crate::geom;
use crate::mesh::{Adjacency, BoundarySurface, SimplicialMesh};

/// Minimum barycentric weight still counted as inside an element.
pub const CONTAINMENT_TOL: f64 = -1e-10;
/// Relative widening of facets in ray tests.
pub const RAY_TOL: f64 = 1e-12;
/// Inside vertices whose host is more element hops than this from every
/// neighbour's host are reported as suspicious.
pub const MISBINDING_HOPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BindStatus {
    Inside,
    Extrapolated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binding {
    pub host: usize,
    pub coords: Vec<f64>,
    pub status: BindStatus,
}

/// Per-vertex bindings; `None` marks a vertex not yet assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingMap {
    dim: usize,
    entries: Vec<Option<Binding>>,
}

impl BindingMap {
    pub fn empty(dim: usize, n: usize) -> Self {
        BindingMap {
            dim,
            entries: vec![None; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, v: usize) -> Option<&Binding> {
        self.entries[v].as_ref()
    }

    pub fn set(&mut self, v: usize, b: Binding) {
        self.entries[v] = Some(b);
    }

    pub fn entries(&self) -> &[Option<Binding>] {
        &self.entries
    }

    pub fn is_complete(&self) -> bool {
        self.entries.iter().all(Option::is_some)
    }

    /// The binding of every vertex, or the first unbound vertex as an error.
    pub fn complete(&self) -> Result<Vec<&Binding>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(v, b)| b.as_ref().ok_or(Error::IncompleteBinding { vertex: v }))
            .collect()
    }

    pub fn hosts(&self) -> Vec<Option<usize>> {
        self.entries
            .iter()
            .map(|b| b.as_ref().map(|b| b.host))
            .collect()
    }

    pub fn min_weight(&self) -> f64 {
        self.weights().fold(f64::INFINITY, f64::min)
    }

    pub fn max_weight(&self) -> f64 {
        self.weights().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn n_extrapolated(&self) -> usize {
        self.entries
            .iter()
            .flatten()
            .filter(|b| b.status == BindStatus::Extrapolated)
            .count()
    }

    fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries
            .iter()
            .flatten()
            .flat_map(|b| b.coords.iter().copied())
    }

    pub fn to_text(&self) -> Result<String> {
        use std::fmt::Write;
        let mut s = String::from("# lodyn binding\n");
        let _ = writeln!(s, "{} {}", self.entries.len(), self.dim);
        for (v, b) in self.complete()?.into_iter().enumerate() {
            let status = match b.status {
                BindStatus::Inside => "inside",
                BindStatus::Extrapolated => "extrapolated",
            };
            let _ = write!(s, "{v} {} {status}", b.host);
            for w in &b.coords {
                let _ = write!(s, " {w:.17e}");
            }
            s.push('\n');
        }
        Ok(s)
    }

    /// Parse the text format. Errors carry the 1-based line number.
    pub fn from_text(text: &str) -> std::result::Result<BindingMap, (usize, String)> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());
        let (ln, header) = lines.next().ok_or((0, "missing header".to_string()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| (ln, format!("bad header token {t:?}")))
            })
            .collect::<std::result::Result<_, _>>()?;
        let [n, dim] = head[..] else {
            return Err((ln, "header must be `<n_vertices> <dim>`".into()));
        };
        let mut map = BindingMap::empty(dim, n);
        for (ln, line) in lines {
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 3 + dim + 1 {
                return Err((
                    ln,
                    format!("expected {} fields, found {}", 4 + dim, tok.len()),
                ));
            }
            let v: usize = tok[0]
                .parse()
                .map_err(|_| (ln, "bad vertex index".to_string()))?;
            let host: usize = tok[1]
                .parse()
                .map_err(|_| (ln, "bad host index".to_string()))?;
            let status = match tok[2] {
                "inside" => BindStatus::Inside,
                "extrapolated" => BindStatus::Extrapolated,
                other => return Err((ln, format!("unknown status {other:?}"))),
            };
            let coords = tok[3..]
                .iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| (ln, format!("bad weight {t:?}")))
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if v >= n {
                return Err((ln, format!("vertex {v} out of range")));
            }
            map.entries[v] = Some(Binding {
                host,
                coords,
                status,
            });
        }
        Ok(map)
    }
}

/// Barycentric coordinates of `p` in element `e` of `mesh`.
pub fn barycentric_in_element(mesh: &SimplicialMesh, e: usize, p: &[f64]) -> Result<Vec<f64>> {
    let verts: Vec<&[f64]> = mesh.element(e).iter().map(|&v| mesh.vertex(v)).collect();
    geom::barycentric(&verts, p)
}

/// Point location over the elements of a mesh.
pub struct ElementLocator<'a> {
    mesh: &'a SimplicialMesh,
    bvh: Bvh,
}

impl<'a> ElementLocator<'a> {
    pub fn new(mesh: &'a SimplicialMesh) -> Self {
        let x = mesh.rest_positions();
        let boxes = mesh
            .elements()
            .map(|el| Aabb::of_vertices(mesh.dim(), x, el))
            .collect();
        ElementLocator {
            mesh,
            bvh: Bvh::build(boxes),
        }
    }

    /// Lowest-indexed element containing `p`, with its coordinates.
    pub fn locate(&self, p: &[f64]) -> Result<Option<(usize, Vec<f64>)>> {
        let q = Aabb::from_point(p).inflated(1e-9 * self.mesh.bbox_diagonal());
        for e in self.bvh.query(&q) {
            let w = barycentric_in_element(self.mesh, e, p)?;
            if w.iter().all(|&c| c >= CONTAINMENT_TOL) {
                return Ok(Some((e, w)));
            }
        }
        Ok(None)
    }
}

/// Boundary facets with a BVH, for closest-point and ray queries.
pub struct BoundaryIndex<'a> {
    mesh: &'a SimplicialMesh,
    surface: BoundarySurface,
    bvh: Bvh,
}

impl<'a> BoundaryIndex<'a> {
    pub fn new(mesh: &'a SimplicialMesh) -> Result<Self> {
        let surface = BoundarySurface::extract(mesh)?;
        let x = mesh.rest_positions();
        let boxes = surface
            .facets()
            .map(|f| Aabb::of_vertices(mesh.dim(), x, f))
            .collect();
        Ok(BoundaryIndex {
            mesh,
            surface,
            bvh: Bvh::build(boxes),
        })
    }

    pub fn surface(&self) -> &BoundarySurface {
        &self.surface
    }

    fn facet_verts(&self, f: usize) -> Vec<&[f64]> {
        self.surface
            .facet(f)
            .iter()
            .map(|&v| self.mesh.vertex(v))
            .collect()
    }

    /// Closest facet to `p` and its distance; ties go to the lower facet index.
    pub fn closest(&self, p: &[f64]) -> (usize, f64) {
        let mut r = self.mesh.mean_edge_length();
        loop {
            let hits = self.bvh.query(&Aabb::from_point(p).inflated(r));
            let mut best = (usize::MAX, f64::INFINITY);
            for f in hits {
                let d = geom::point_simplex_distance(p, &self.facet_verts(f));
                if d < best.1 || (d == best.1 && f < best.0) {
                    best = (f, d);
                }
            }
            // any facet farther than r could not beat a hit within r
            if best.1 <= r {
                return best;
            }
            r *= 2.0;
        }
    }

    /// First facet hit by the segment `p → q`, by distance from `p`.
    pub fn first_hit(&self, p: &[f64], q: &[f64]) -> Option<(usize, f64)> {
        let dir = geom::sub(q, p);
        let mut seg = Aabb::from_point(p);
        seg.grow_point(q);
        let mut best: Option<(usize, f64)> = None;
        for f in self
            .bvh
            .query(&seg.inflated(1e-9 * self.mesh.bbox_diagonal()))
        {
            if let Some(t) = geom::ray_facet(p, &dir, &self.facet_verts(f), RAY_TOL) {
                if t > 0.0 && t <= 1.0 + RAY_TOL {
                    let better = match best {
                        None => true,
                        Some((bf, bt)) => t < bt || (t == bt && f < bf),
                    };
                    if better {
                        best = Some((f, t));
                    }
                }
            }
        }
        best.map(|(f, t)| (f, t * geom::norm(&dir)))
    }
}

/// Inside weights that fell below zero within [`CONTAINMENT_TOL`] are
/// round-off: zero them and renormalize.
fn clamp_inside(mut coords: Vec<f64>) -> Vec<f64> {
    if coords.iter().any(|&c| c < 0.0) {
        coords.iter_mut().for_each(|c| *c = c.max(0.0));
        let s: f64 = coords.iter().sum();
        coords.iter_mut().for_each(|c| *c /= s);
    }
    coords
}

/// Bind every fine vertex that lies inside a coarse element. Returns the
/// partial map and the unassigned vertices in increasing order.
pub fn bind_containment(
    fine: &SimplicialMesh,
    coarse: &SimplicialMesh,
) -> Result<(BindingMap, Vec<usize>)> {
    check_dims(fine, coarse)?;
    let locator = ElementLocator::new(coarse);
    let mut map = BindingMap::empty(fine.dim(), fine.n_vertices());
    let mut unassigned = Vec::new();
    for v in 0..fine.n_vertices() {
        match locator.locate(fine.vertex(v))? {
            Some((host, coords)) => map.set(
                v,
                Binding {
                    host,
                    coords: clamp_inside(coords),
                    status: BindStatus::Inside,
                },
            ),
            None => unassigned.push(v),
        }
    }
    Ok((map, unassigned))
}

/// Containment by testing every coarse element; O(V·T) reference path.
pub fn bind_containment_brute(
    fine: &SimplicialMesh,
    coarse: &SimplicialMesh,
) -> Result<(BindingMap, Vec<usize>)> {
    check_dims(fine, coarse)?;
    let mut map = BindingMap::empty(fine.dim(), fine.n_vertices());
    let mut unassigned = Vec::new();
    'vertices: for v in 0..fine.n_vertices() {
        for e in 0..coarse.n_elements() {
            let coords = barycentric_in_element(coarse, e, fine.vertex(v))?;
            if coords.iter().all(|&c| c >= CONTAINMENT_TOL) {
                map.set(
                    v,
                    Binding {
                        host: e,
                        coords: clamp_inside(coords),
                        status: BindStatus::Inside,
                    },
                );
                continue 'vertices;
            }
        }
        unassigned.push(v);
    }
    Ok((map, unassigned))
}

/// Assign the remaining vertices by frontier propagation: repeatedly take
/// the unassigned vertex with the most assigned neighbours (lowest index on
/// ties), cast rays along its incident edges against the coarse boundary and
/// take the parent of the nearest hit; without a hit, take the neighbour
/// host whose centroid is nearest.
pub fn bind_exterior_robust(
    fine: &SimplicialMesh,
    coarse: &SimplicialMesh,
    mut map: BindingMap,
    unassigned: &[usize],
) -> Result<BindingMap> {
    check_dims(fine, coarse)?;
    if unassigned.is_empty() {
        return Ok(map);
    }
    let adj = Adjacency::build(fine);
    let index = BoundaryIndex::new(coarse)?;
    let count = |map: &BindingMap, v: usize| {
        adj.vertex_vertex[v]
            .iter()
            .filter(|&&u| map.get(u).is_some())
            .count()
    };
    let mut heap: BinaryHeap<(usize, Reverse<usize>)> = unassigned
        .iter()
        .map(|&v| (count(&map, v), Reverse(v)))
        .collect();
    while let Some((c, Reverse(v))) = heap.pop() {
        if map.get(v).is_some() || c != count(&map, v) {
            continue;
        }
        let p = fine.vertex(v);
        let mut hit: Option<(usize, f64)> = None;
        for &u in &adj.vertex_vertex[v] {
            if let Some((f, t)) = index.first_hit(p, fine.vertex(u)) {
                let better = match hit {
                    None => true,
                    Some((bf, bt)) => t < bt || (t == bt && f < bf),
                };
                if better {
                    hit = Some((f, t));
                }
            }
        }
        let host = match hit {
            Some((f, _)) => index.surface().parent(f),
            None => {
                let mut best: Option<(f64, usize)> = None;
                for &u in &adj.vertex_vertex[v] {
                    if let Some(b) = map.get(u) {
                        let d = geom::norm(&geom::sub(p, &coarse.element_centroid(b.host)));
                        if best.is_none_or(|(bd, bh)| d < bd || (d == bd && b.host < bh)) {
                            best = Some((d, b.host));
                        }
                    }
                }
                best.ok_or(Error::Unassignable { vertex: v })?.1
            }
        };
        let coords = barycentric_in_element(coarse, host, p)?;
        map.set(
            v,
            Binding {
                host,
                coords,
                status: BindStatus::Extrapolated,
            },
        );
        for &u in &adj.vertex_vertex[v] {
            if map.get(u).is_none() {
                heap.push((count(&map, u), Reverse(u)));
            }
        }
    }
    Ok(map)
}

/// Containment followed by robust exterior propagation. Suspicious interior
/// hosts are logged.
pub fn bind(fine: &SimplicialMesh, coarse: &SimplicialMesh) -> Result<BindingMap> {
    let (partial, unassigned) = bind_containment(fine, coarse)?;
    let map = bind_exterior_robust(fine, coarse, partial, &unassigned)?;
    let suspicious: Vec<usize> = misbinding_audit(fine, coarse, &map)?
        .into_iter()
        .filter(|&v| map.get(v).is_some_and(|b| b.status == BindStatus::Inside))
        .collect();
    if !suspicious.is_empty() {
        log::warn!(
            "{} inside vertices are bound more than {MISBINDING_HOPS} element hops from all neighbour hosts (first: {})",
            suspicious.len(),
            suspicious[0]
        );
    }
    Ok(map)
}

/// Baseline: exterior vertices go to the parent of the Euclidean-closest
/// coarse boundary facet.
pub fn bind_naive_closest(fine: &SimplicialMesh, coarse: &SimplicialMesh) -> Result<BindingMap> {
    let (mut map, unassigned) = bind_containment(fine, coarse)?;
    if unassigned.is_empty() {
        return Ok(map);
    }
    let index = BoundaryIndex::new(coarse)?;
    for v in unassigned {
        let p = fine.vertex(v);
        let (f, _) = index.closest(p);
        let host = index.surface().parent(f);
        let coords = barycentric_in_element(coarse, host, p)?;
        map.set(
            v,
            Binding {
                host,
                coords,
                status: BindStatus::Extrapolated,
            },
        );
    }
    Ok(map)
}

/// Vertices whose host is more than [`MISBINDING_HOPS`] coarse element hops
/// away from the hosts of all of their fine neighbours.
pub fn misbinding_audit(
    fine: &SimplicialMesh,
    coarse: &SimplicialMesh,
    map: &BindingMap,
) -> Result<Vec<usize>> {
    let bindings = map.complete()?;
    let fadj = Adjacency::build(fine);
    let cadj = Adjacency::build(coarse);
    let mut flagged = Vec::new();
    let mut mark = vec![usize::MAX; coarse.n_elements()];
    for v in 0..fine.n_vertices() {
        let nbrs = &fadj.vertex_vertex[v];
        if nbrs.is_empty() {
            continue;
        }
        // bounded BFS from the host, stamped with v to avoid clearing
        let src = bindings[v].host;
        let mut queue = VecDeque::from([(src, 0usize)]);
        mark[src] = v;
        let mut near = false;
        while let Some((e, depth)) = queue.pop_front() {
            if nbrs.iter().any(|&u| bindings[u].host == e) {
                near = true;
                break;
            }
            if depth == MISBINDING_HOPS {
                continue;
            }
            for &n in &cadj.element_element[e] {
                if mark[n] != v {
                    mark[n] = v;
                    queue.push_back((n, depth + 1));
                }
            }
        }
        if !near {
            flagged.push(v);
        }
    }
    Ok(flagged)
}

fn check_dims(fine: &SimplicialMesh, coarse: &SimplicialMesh) -> Result<()> {
    if fine.dim() != coarse.dim() {
        return Err(Error::DimMismatch {
            expected: coarse.dim(),
            found: fine.dim(),
        });
    }
    Ok(())
}
