//! Log-barrier contact and lagged friction against half-planes, static
//! meshes and the body's own boundary.

mod distance;
mod friction;

pub use distance::{point_simplex, DistanceDerivs};
pub use friction::{f0, FrictionPair, FrictionSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bvh::{Aabb, Bvh};
use crate::error::{Error, Result};
use crate::geom;
use crate::linalg::{project_psd, Triplets};
use crate::mesh::{BoundarySurface, SimplicialMesh};
use crate::par::{self, Exec};

/// A step may shrink any contact distance to at most this fraction of its
/// starting value.
pub const STEP_GAP_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierParams {
    /// Activation distance d̂ (m).
    pub dhat: f64,
    /// Barrier stiffness κ.
    pub kappa: f64,
    /// Friction smoothing velocity (m/s).
    #[serde(default = "default_eps_v")]
    pub eps_v: f64,
    /// Friction coefficient for self-contact.
    #[serde(default)]
    pub mu: f64,
}

fn default_eps_v() -> f64 {
    1e-3
}

impl BarrierParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dhat > 0.0 && self.kappa > 0.0 && self.eps_v > 0.0 && self.mu >= 0.0) {
            return Err(Error::Invalid(format!(
                "barrier parameters need dhat > 0, kappa > 0, eps_v > 0, mu >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// `b(d) = −(d − d̂)² ln(d/d̂)` for `0 < d < d̂`, zero beyond.
pub fn barrier(d: f64, dhat: f64) -> f64 {
    if d >= dhat {
        0.0
    } else if d <= 0.0 {
        f64::INFINITY
    } else {
        -(d - dhat).powi(2) * (d / dhat).ln()
    }
}

pub fn barrier_d1(d: f64, dhat: f64) -> f64 {
    if d >= dhat {
        return 0.0;
    }
    let t = d - dhat;
    -2.0 * t * (d / dhat).ln() - t * t / d
}

pub fn barrier_d2(d: f64, dhat: f64) -> f64 {
    if d >= dhat {
        return 0.0;
    }
    let t = d - dhat;
    -2.0 * (d / dhat).ln() - 4.0 * t / d + t * t / (d * d)
}

#[derive(Debug, Clone)]
pub enum ColliderShape {
    /// Free side is `normal · x ≥ offset`.
    HalfPlane { normal: Vec<f64>, offset: f64 },
    StaticMesh {
        positions: Vec<f64>,
        surface: BoundarySurface,
    },
}

#[derive(Debug, Clone)]
pub struct Collider {
    pub shape: ColliderShape,
    pub friction: f64,
}

impl Collider {
    pub fn half_plane(normal: &[f64], offset: f64, friction: f64) -> Result<Self> {
        let len = geom::norm(normal);
        if !(len > 0.0) {
            return Err(Error::Invalid("half-plane normal must be nonzero".into()));
        }
        Ok(Collider {
            shape: ColliderShape::HalfPlane {
                normal: normal.iter().map(|c| c / len).collect(),
                offset: offset / len,
            },
            friction,
        })
    }

    /// Obstacle given by the boundary of a mesh.
    pub fn static_mesh(mesh: &SimplicialMesh, friction: f64) -> Result<Self> {
        Ok(Collider {
            shape: ColliderShape::StaticMesh {
                positions: mesh.rest_positions().to_vec(),
                surface: BoundarySurface::extract(mesh)?,
            },
            friction,
        })
    }
}

/// What a boundary vertex is close to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PairKind {
    Plane { collider: usize },
    Static { collider: usize, facet: usize },
    SelfFacet { facet: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContactPair {
    pub vertex: usize,
    pub kind: PairKind,
    pub distance: f64,
}

/// Geometry of one pair: point plus simplex vertices, each tagged with its
/// deformable vertex index (`None` for static geometry).
struct Stencil {
    coords: Vec<Vec<f64>>,
    dofs: Vec<Option<usize>>,
}

/// Distance, gradient and Hessian of one pair over its stencil blocks.
struct PairDerivs {
    distance: f64,
    normal: Vec<f64>,
    weights: Vec<f64>,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ContactModel {
    dim: usize,
    surface: BoundarySurface,
    boundary_vertices: Vec<usize>,
    incident: Vec<Vec<usize>>,
    colliders: Vec<Collider>,
    static_bvh: Vec<Option<Bvh>>,
    params: BarrierParams,
    self_contact: bool,
    exec: Exec,
}

impl ContactModel {
    pub fn new(
        mesh: &SimplicialMesh,
        colliders: Vec<Collider>,
        params: BarrierParams,
        self_contact: bool,
        exec: Exec,
    ) -> Result<Self> {
        params.validate()?;
        let dim = mesh.dim();
        let surface = BoundarySurface::extract(mesh)?;
        let mut incident = vec![Vec::new(); mesh.n_vertices()];
        for (f, facet) in surface.facets().enumerate() {
            for &v in facet {
                incident[v].push(f);
            }
        }
        let mut static_bvh = Vec::new();
        for c in &colliders {
            match &c.shape {
                ColliderShape::HalfPlane { normal, .. } => {
                    if normal.len() != dim {
                        return Err(Error::DimMismatch {
                            expected: dim,
                            found: normal.len(),
                        });
                    }
                    static_bvh.push(None);
                }
                ColliderShape::StaticMesh { positions, surface } => {
                    if surface.dim() != dim {
                        return Err(Error::DimMismatch {
                            expected: dim,
                            found: surface.dim(),
                        });
                    }
                    let boxes = surface
                        .facets()
                        .map(|f| Aabb::of_vertices(dim, positions, f))
                        .collect();
                    static_bvh.push(Some(Bvh::build(boxes)));
                }
            }
        }
        Ok(ContactModel {
            dim,
            boundary_vertices: surface.vertices(),
            surface,
            incident,
            colliders,
            static_bvh,
            params,
            self_contact,
            exec,
        })
    }

    pub fn params(&self) -> &BarrierParams {
        &self.params
    }

    pub fn colliders(&self) -> &[Collider] {
        &self.colliders
    }

    pub fn boundary_vertices(&self) -> &[usize] {
        &self.boundary_vertices
    }

    pub fn surface(&self) -> &BoundarySurface {
        &self.surface
    }

    /// True when there is nothing to collide with.
    pub fn is_inactive(&self) -> bool {
        self.colliders.is_empty() && !self.self_contact
    }

    fn point<'a>(&self, x: &'a [f64], v: usize) -> &'a [f64] {
        &x[v * self.dim..(v + 1) * self.dim]
    }

    fn self_bvh(&self, x: &[f64], inflate: f64) -> Bvh {
        let boxes = self
            .surface
            .facets()
            .map(|f| Aabb::of_vertices(self.dim, x, f).inflated(inflate))
            .collect();
        Bvh::build(boxes)
    }

    /// All pairs closer than d̂, ordered by vertex then kind.
    pub fn pairs(&self, x: &[f64]) -> Vec<ContactPair> {
        if self.is_inactive() {
            return Vec::new();
        }
        let dhat = self.params.dhat;
        let self_bvh = self.self_contact.then(|| self.self_bvh(x, 0.0));
        let per_vertex = par::map_slice(self.exec, &self.boundary_vertices, |&v| {
            let p = self.point(x, v);
            let mut out = Vec::new();
            let q = Aabb::from_point(p).inflated(dhat);
            for (c, col) in self.colliders.iter().enumerate() {
                match &col.shape {
                    ColliderShape::HalfPlane { normal, offset } => {
                        let d = geom::dot(normal, p) - offset;
                        if d < dhat {
                            out.push(ContactPair {
                                vertex: v,
                                kind: PairKind::Plane { collider: c },
                                distance: d,
                            });
                        }
                    }
                    ColliderShape::StaticMesh { positions, surface } => {
                        let bvh = self.static_bvh[c]
                            .as_ref()
                            .expect("static collider has a tree");
                        for f in bvh.query(&q) {
                            let verts: Vec<&[f64]> = surface
                                .facet(f)
                                .iter()
                                .map(|&u| &positions[u * self.dim..(u + 1) * self.dim])
                                .collect();
                            let d = geom::point_simplex_distance(p, &verts);
                            if d < dhat {
                                out.push(ContactPair {
                                    vertex: v,
                                    kind: PairKind::Static {
                                        collider: c,
                                        facet: f,
                                    },
                                    distance: d,
                                });
                            }
                        }
                    }
                }
            }
            if let Some(bvh) = &self_bvh {
                for f in bvh.query(&q) {
                    if self.incident[v].contains(&f) {
                        continue;
                    }
                    let verts: Vec<&[f64]> = self
                        .surface
                        .facet(f)
                        .iter()
                        .map(|&u| self.point(x, u))
                        .collect();
                    let d = geom::point_simplex_distance(p, &verts);
                    if d < dhat {
                        out.push(ContactPair {
                            vertex: v,
                            kind: PairKind::SelfFacet { facet: f },
                            distance: d,
                        });
                    }
                }
            }
            out
        });
        per_vertex.into_iter().flatten().collect()
    }

    /// Smallest distance between the boundary and any obstacle (including
    /// non-incident parts of the boundary itself); `+∞` without obstacles.
    pub fn min_distance(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        let self_bvh = self.self_contact.then(|| self.self_bvh(x, 0.0));
        for &v in &self.boundary_vertices {
            let p = self.point(x, v);
            for (c, col) in self.colliders.iter().enumerate() {
                match &col.shape {
                    ColliderShape::HalfPlane { normal, offset } => {
                        best = best.min(geom::dot(normal, p) - offset);
                    }
                    ColliderShape::StaticMesh { positions, surface } => {
                        let bvh = self.static_bvh[c]
                            .as_ref()
                            .expect("static collider has a tree");
                        let d = nearest(bvh, p, best, |f| {
                            let verts: Vec<&[f64]> = surface
                                .facet(f)
                                .iter()
                                .map(|&u| &positions[u * self.dim..(u + 1) * self.dim])
                                .collect();
                            geom::point_simplex_distance(p, &verts)
                        });
                        best = best.min(d);
                    }
                }
            }
            if let Some(bvh) = &self_bvh {
                let d = nearest(bvh, p, best, |f| {
                    if self.incident[v].contains(&f) {
                        return f64::INFINITY;
                    }
                    let verts: Vec<&[f64]> = self
                        .surface
                        .facet(f)
                        .iter()
                        .map(|&u| self.point(x, u))
                        .collect();
                    geom::point_simplex_distance(p, &verts)
                });
                best = best.min(d);
            }
        }
        best
    }

    fn stencil(&self, pair: &ContactPair, x: &[f64]) -> Stencil {
        let d = self.dim;
        let mut coords = vec![self.point(x, pair.vertex).to_vec()];
        let mut dofs = vec![Some(pair.vertex)];
        match pair.kind {
            PairKind::Plane { .. } => {}
            PairKind::Static { collider, facet } => {
                if let ColliderShape::StaticMesh { positions, surface } =
                    &self.colliders[collider].shape
                {
                    for &u in surface.facet(facet) {
                        coords.push(positions[u * d..(u + 1) * d].to_vec());
                        dofs.push(None);
                    }
                }
            }
            PairKind::SelfFacet { facet } => {
                for &u in self.surface.facet(facet) {
                    coords.push(self.point(x, u).to_vec());
                    dofs.push(Some(u));
                }
            }
        }
        Stencil { coords, dofs }
    }

    fn derivs(&self, pair: &ContactPair, st: &Stencil, want_hessian: bool) -> PairDerivs {
        let d = self.dim;
        match pair.kind {
            PairKind::Plane { collider } => {
                let ColliderShape::HalfPlane { normal, offset } = &self.colliders[collider].shape
                else {
                    unreachable!("plane pair on a plane collider")
                };
                PairDerivs {
                    distance: geom::dot(normal, &st.coords[0]) - offset,
                    normal: normal.clone(),
                    weights: Vec::new(),
                    gradient: DVector::from_column_slice(normal),
                    hessian: DMatrix::zeros(d, d),
                }
            }
            _ => {
                let verts: Vec<&[f64]> = st.coords[1..].iter().map(Vec::as_slice).collect();
                let dd = point_simplex(&st.coords[0], &verts, want_hessian);
                let normal = dd.gradient.rows(0, d).iter().copied().collect();
                PairDerivs {
                    distance: dd.distance,
                    normal,
                    weights: dd.weights,
                    gradient: dd.gradient,
                    hessian: dd.hessian,
                }
            }
        }
    }

    /// `κ Σ b(d)` over the pairs active at `x`; `+∞` if any distance is ≤ 0.
    pub fn barrier_energy(&self, x: &[f64]) -> f64 {
        let (dhat, kappa) = (self.params.dhat, self.params.kappa);
        self.pairs(x)
            .iter()
            .map(|p| kappa * barrier(p.distance, dhat))
            .sum()
    }

    pub fn add_barrier_gradient(&self, x: &[f64], out: &mut [f64]) {
        let pairs = self.pairs(x);
        let parts = par::map_slice(self.exec, &pairs, |p| {
            let st = self.stencil(p, x);
            let dd = self.derivs(p, &st, false);
            let s = self.params.kappa * barrier_d1(dd.distance, self.params.dhat);
            (st.dofs, dd.gradient * s)
        });
        for (dofs, g) in parts {
            scatter_vec(self.dim, &dofs, &g, out);
        }
    }

    pub fn add_barrier_hessian(&self, x: &[f64], project: bool, t: &mut Triplets) {
        let pairs = self.pairs(x);
        let parts = par::map_slice(self.exec, &pairs, |p| {
            let st = self.stencil(p, x);
            let dd = self.derivs(p, &st, true);
            let (dhat, kappa) = (self.params.dhat, self.params.kappa);
            let b1 = barrier_d1(dd.distance, dhat);
            let b2 = barrier_d2(dd.distance, dhat);
            let h = kappa * (b2 * &dd.gradient * dd.gradient.transpose() + b1 * &dd.hessian);
            (st.dofs, if project { project_psd(&h) } else { h })
        });
        for (dofs, h) in parts {
            scatter_mat(self.dim, &dofs, &h, t);
        }
    }

    /// Lag normal forces, tangent bases and closest-point weights at `x`.
    pub fn friction_set(&self, x: &[f64]) -> FrictionSet {
        let mut out = Vec::new();
        for p in self.pairs(x) {
            let mu = match p.kind {
                PairKind::Plane { collider } | PairKind::Static { collider, .. } => {
                    self.colliders[collider].friction
                }
                PairKind::SelfFacet { .. } => self.params.mu,
            };
            if mu <= 0.0 {
                continue;
            }
            let st = self.stencil(&p, x);
            let dd = self.derivs(&p, &st, false);
            let lambda = -self.params.kappa * barrier_d1(dd.distance, self.params.dhat);
            // point block weight +1, facet vertices −w_j
            let mut coef = vec![1.0];
            coef.extend(dd.weights.iter().map(|w| -w));
            out.push(FrictionPair {
                dofs: st.dofs,
                coef,
                tangent: friction::tangent_basis(&dd.normal),
                lambda_mu: lambda * mu,
            });
        }
        FrictionSet::new(self.dim, x.to_vec(), out, self.exec)
    }

    /// Largest `α ∈ (0, 1]` such that moving along `x + α dx` keeps every
    /// distance above a tenth of its current value.
    pub fn max_step(&self, x: &[f64], dx: &[f64]) -> Result<f64> {
        if self.is_inactive() {
            return Ok(1.0);
        }
        let d = self.dim;
        let xe: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + b).collect();
        let self_bvh = self.self_contact.then(|| {
            let boxes = self
                .surface
                .facets()
                .map(|f| Aabb::of_vertices(d, x, f).union(&Aabb::of_vertices(d, &xe, f)))
                .collect();
            Bvh::build(boxes)
        });
        let per_vertex = par::map_slice(self.exec, &self.boundary_vertices, |&v| -> Result<f64> {
            let p = self.point(x, v);
            let dp = self.point(dx, v);
            let mut swept = Aabb::from_point(p);
            swept.grow_point(self.point(&xe, v));
            let mut alpha: f64 = 1.0;
            for (c, col) in self.colliders.iter().enumerate() {
                match &col.shape {
                    ColliderShape::HalfPlane { normal, offset } => {
                        let d0 = geom::dot(normal, p) - offset;
                        if !(d0 > 0.0) {
                            return Err(Error::Infeasible(format!(
                                "vertex {v} at distance {d0:e} from plane {c}"
                            )));
                        }
                        let rate = geom::dot(normal, dp);
                        if rate < 0.0 {
                            alpha = alpha.min((1.0 - STEP_GAP_FRACTION) * d0 / -rate);
                        }
                    }
                    ColliderShape::StaticMesh { positions, surface } => {
                        let bvh = self.static_bvh[c]
                            .as_ref()
                            .expect("static collider has a tree");
                        for f in bvh.query(&swept) {
                            let verts: Vec<Vec<f64>> = surface
                                .facet(f)
                                .iter()
                                .map(|&u| positions[u * d..(u + 1) * d].to_vec())
                                .collect();
                            let zero = vec![vec![0.0; d]; verts.len()];
                            alpha = alpha
                                .min(advance(p, dp, &verts, &zero).map_err(|e| at_vertex(e, v))?);
                        }
                    }
                }
            }
            if let Some(bvh) = &self_bvh {
                for f in bvh.query(&swept) {
                    if self.incident[v].contains(&f) {
                        continue;
                    }
                    let facet = self.surface.facet(f);
                    let verts: Vec<Vec<f64>> =
                        facet.iter().map(|&u| self.point(x, u).to_vec()).collect();
                    let dverts: Vec<Vec<f64>> =
                        facet.iter().map(|&u| self.point(dx, u).to_vec()).collect();
                    alpha =
                        alpha.min(advance(p, dp, &verts, &dverts).map_err(|e| at_vertex(e, v))?);
                }
            }
            Ok(alpha)
        });
        let mut alpha: f64 = 1.0;
        for a in per_vertex {
            alpha = alpha.min(a?);
        }
        Ok(alpha)
    }
}

fn at_vertex(e: Error, v: usize) -> Error {
    match e {
        Error::Infeasible(m) => Error::Infeasible(format!("vertex {v}: {m}")),
        other => other,
    }
}

/// Conservative advancement of a point against a moving simplex, using the
/// bound `|d(t) − d(s)| ≤ |t − s| · (|dp| + max_j |dv_j|)`.
fn advance(p: &[f64], dp: &[f64], verts: &[Vec<f64>], dverts: &[Vec<f64>]) -> Result<f64> {
    let at = |t: f64| {
        let q: Vec<f64> = p.iter().zip(dp).map(|(a, b)| a + t * b).collect();
        let vs: Vec<Vec<f64>> = verts
            .iter()
            .zip(dverts)
            .map(|(v, dv)| v.iter().zip(dv).map(|(a, b)| a + t * b).collect())
            .collect();
        let refs: Vec<&[f64]> = vs.iter().map(Vec::as_slice).collect();
        geom::point_simplex_distance(&q, &refs)
    };
    let d0 = at(0.0);
    if !(d0 > 0.0) {
        return Err(Error::Infeasible(format!("contact distance {d0:e}")));
    }
    let lip = geom::norm(dp) + dverts.iter().map(|v| geom::norm(v)).fold(0.0, f64::max);
    if lip == 0.0 {
        return Ok(1.0);
    }
    let floor = STEP_GAP_FRACTION * d0;
    let mut t = 0.0;
    let mut dt = d0;
    for _ in 0..64 {
        let next = t + (dt - floor) / lip;
        if next >= 1.0 {
            return Ok(1.0);
        }
        if next - t <= 1e-3 * next {
            return Ok(next);
        }
        t = next;
        dt = at(t);
    }
    Ok(t)
}

/// Smallest `dist(f)` over facets, found by growing a query box around `p`.
/// Stops once the answer cannot beat `cap`.
fn nearest(bvh: &Bvh, p: &[f64], cap: f64, dist: impl Fn(usize) -> f64) -> f64 {
    if bvh.is_empty() {
        return f64::INFINITY;
    }
    let mut r = if cap.is_finite() && cap > 0.0 {
        cap
    } else {
        1e-3
    };
    loop {
        let hits = bvh.query(&Aabb::from_point(p).inflated(r));
        let best = hits.iter().map(|&f| dist(f)).fold(f64::INFINITY, f64::min);
        if best <= r || hits.len() == bvh.len() || (cap.is_finite() && r >= cap) {
            return best;
        }
        r *= 2.0;
    }
}

fn scatter_vec(d: usize, dofs: &[Option<usize>], g: &DVector<f64>, out: &mut [f64]) {
    for (b, dof) in dofs.iter().enumerate() {
        if let Some(v) = dof {
            for i in 0..d {
                out[v * d + i] += g[b * d + i];
            }
        }
    }
}

fn scatter_mat(d: usize, dofs: &[Option<usize>], h: &DMatrix<f64>, t: &mut Triplets) {
    for (a, da) in dofs.iter().enumerate() {
        let Some(va) = da else { continue };
        for (b, db) in dofs.iter().enumerate() {
            let Some(vb) = db else { continue };
            for i in 0..d {
                for k in 0..d {
                    t.push(va * d + i, vb * d + k, h[(a * d + i, b * d + k)]);
                }
            }
        }
    }
}
