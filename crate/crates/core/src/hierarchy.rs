//! Multi-level mesh hierarchies: loading, validation and a synthetic
//! generator for tests.
//!
//! Manifest format (TOML), paths relative to the manifest file:
//!
//! ```toml
//! [[level]]            # coarsest first
//! path = "ball0.node"
//! label = "coarse"     # optional
//!
//! [[level]]
//! path = "ball1.mesh"
//! ```
//!
//! The format of each level follows from its extension (see [`crate::mesh::io`]).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::mesh::{self, Adjacency, BoundarySurface, MeshFormat, SimplicialMesh};

/// Bounding-box Jaccard index below which consecutive levels are rejected.
pub const MIN_JACCARD: f64 = 0.5;
/// Coarse-to-fine boundary distance, as a fraction of the fine bbox diagonal,
/// above which a level pair is flagged in the report.
pub const EPSILON_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub label: Option<String>,
    pub vertices: usize,
    pub elements: usize,
    pub volume: f64,
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
    pub reoriented: usize,
}

/// Measured discrepancy between level `coarse` and `coarse + 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStats {
    pub coarse: usize,
    pub jaccard: f64,
    /// Max distance from a coarse boundary vertex to the fine boundary.
    pub epsilon: f64,
    pub epsilon_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct HierarchyReport {
    pub levels: Vec<LevelStats>,
    pub pairs: Vec<PairStats>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Hierarchy {
    levels: Vec<SimplicialMesh>,
    report: HierarchyReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub level: Vec<ManifestLevel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLevel {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Hierarchy {
    /// Validate levels (coarsest first) and compute the report.
    pub fn new(levels: Vec<SimplicialMesh>) -> Result<Self> {
        let n = levels.len();
        Self::with_labels(levels, vec![None; n], vec![0; n])
    }

    fn with_labels(
        mut levels: Vec<SimplicialMesh>,
        labels: Vec<Option<String>>,
        reoriented: Vec<usize>,
    ) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Invalid("hierarchy needs at least one level".into()));
        }
        let dim = levels[0].dim();
        let mut report = HierarchyReport::default();
        for (l, m) in levels.iter_mut().enumerate() {
            if m.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
            m.set_level_id(l);
            let (lo, hi) = m.bbox();
            report.levels.push(LevelStats {
                label: labels[l].clone(),
                vertices: m.n_vertices(),
                elements: m.n_elements(),
                volume: m.total_volume(),
                bbox_lo: lo,
                bbox_hi: hi,
                reoriented: reoriented[l],
            });
        }
        for l in 0..levels.len().saturating_sub(1) {
            let (c, f) = (&levels[l], &levels[l + 1]);
            let jaccard = bbox_jaccard(c, f);
            if jaccard < MIN_JACCARD {
                return Err(Error::LevelsDoNotOverlap {
                    coarse: l,
                    fine: l + 1,
                    jaccard,
                });
            }
            if f.n_vertices() < c.n_vertices() {
                let msg = format!(
                    "level {} has fewer vertices ({}) than level {} ({})",
                    l + 1,
                    f.n_vertices(),
                    l,
                    c.n_vertices()
                );
                log::warn!("{msg}");
                report.warnings.push(msg);
            }
            let epsilon = boundary_distance(c, f)?;
            let epsilon_limit = EPSILON_FRACTION * f.bbox_diagonal();
            if epsilon > epsilon_limit {
                let msg = format!(
                    "levels {l}/{}: coarse boundary deviates {epsilon:.4} from fine boundary (limit {epsilon_limit:.4})",
                    l + 1
                );
                log::warn!("{msg}");
                report.warnings.push(msg);
            }
            report.pairs.push(PairStats {
                coarse: l,
                jaccard,
                epsilon,
                epsilon_limit,
            });
        }
        Ok(Hierarchy { levels, report })
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn dim(&self) -> usize {
        self.levels[0].dim()
    }

    pub fn level(&self, l: usize) -> &SimplicialMesh {
        &self.levels[l]
    }

    pub fn levels(&self) -> &[SimplicialMesh] {
        &self.levels
    }

    pub fn finest(&self) -> &SimplicialMesh {
        self.levels.last().expect("non-empty")
    }

    pub fn report(&self) -> &HierarchyReport {
        &self.report
    }

    pub fn into_levels(self) -> Vec<SimplicialMesh> {
        self.levels
    }

    /// Write every level as a binary dump plus a manifest into `dir`.
    /// Returns the manifest path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = Manifest { level: Vec::new() };
        for (l, m) in self.levels.iter().enumerate() {
            let name = PathBuf::from(format!("level{l}.mesh"));
            mesh::save_mesh(m, &dir.join(&name), MeshFormat::Binary)?;
            manifest.level.push(ManifestLevel {
                path: name,
                label: self.report.levels[l].label.clone(),
            });
        }
        let path = dir.join("hierarchy.toml");
        let text = toml::to_string(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Load levels from explicit paths, coarsest first.
pub fn load_hierarchy(paths: &[PathBuf]) -> Result<Hierarchy> {
    let levels = paths
        .iter()
        .map(|p| ManifestLevel {
            path: p.clone(),
            label: None,
        })
        .collect::<Vec<_>>();
    load_levels(Path::new(""), &levels)
}

/// Load a hierarchy manifest (see the module docs for the schema).
pub fn load_manifest(path: &Path) -> Result<Hierarchy> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map(|s| text[..s.start].lines().count().max(1))
            .unwrap_or(0),
        message: e.message().to_string(),
    })?;
    load_levels(path.parent().unwrap_or(Path::new("")), &manifest.level)
}

fn load_levels(base: &Path, levels: &[ManifestLevel]) -> Result<Hierarchy> {
    if levels.len() < 2 {
        return Err(Error::Invalid(format!(
            "a hierarchy needs at least 2 levels, got {}",
            levels.len()
        )));
    }
    let mut meshes = Vec::new();
    let mut labels = Vec::new();
    let mut flipped = Vec::new();
    for lvl in levels {
        let path = base.join(&lvl.path);
        let format = MeshFormat::from_path(&path)
            .ok_or_else(|| Error::Invalid(format!("unknown mesh format: {}", path.display())))?;
        let loaded = mesh::load_mesh(&path, format)?;
        meshes.push(loaded.mesh);
        labels.push(lvl.label.clone());
        flipped.push(loaded.reoriented);
    }
    Hierarchy::with_labels(meshes, labels, flipped)
}

/// Intersection over union of the two meshes' bounding boxes.
pub fn bbox_jaccard(a: &SimplicialMesh, b: &SimplicialMesh) -> f64 {
    let (alo, ahi) = a.bbox();
    let (blo, bhi) = b.bbox();
    let (mut inter, mut va, mut vb) = (1.0, 1.0, 1.0);
    for k in 0..a.dim() {
        inter *= (ahi[k].min(bhi[k]) - alo[k].max(blo[k])).max(0.0);
        va *= ahi[k] - alo[k];
        vb *= bhi[k] - blo[k];
    }
    let union = va + vb - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Max over coarse boundary vertices of the distance to the fine boundary.
pub fn boundary_distance(coarse: &SimplicialMesh, fine: &SimplicialMesh) -> Result<f64> {
    let cb = BoundarySurface::extract(coarse)?;
    let fb = BoundarySurface::extract(fine)?;
    let x = fine.rest_positions();
    let d = fine.dim();
    let boxes = fb
        .facets()
        .map(|f| crate::bvh::Aabb::of_vertices(d, x, f))
        .collect();
    let bvh = crate::bvh::Bvh::build(boxes);
    let mut worst: f64 = 0.0;
    for v in cb.vertices() {
        let p = coarse.vertex(v);
        // grow the query box until it catches a facet; the true minimum is
        // then within the box's half-width
        let mut r = fine.mean_edge_length();
        let best = loop {
            let q = crate::bvh::Aabb::from_point(p).inflated(r);
            let hits = bvh.query(&q);
            if !hits.is_empty() {
                let best = hits
                    .iter()
                    .map(|&f| facet_distance(&fb, x, d, f, p))
                    .fold(f64::INFINITY, f64::min);
                if best <= r {
                    break best;
                }
            }
            r *= 2.0;
        };
        worst = worst.max(best);
    }
    Ok(worst)
}

fn facet_distance(b: &BoundarySurface, x: &[f64], d: usize, f: usize, p: &[f64]) -> f64 {
    let verts: Vec<&[f64]> = b.facet(f).iter().map(|&v| &x[v * d..(v + 1) * d]).collect();
    geom::point_simplex_distance(p, &verts)
}

/// Build a hierarchy by repeated red refinement of `base`, perturbing every
/// finer level so levels are non-nested and non-conforming.
///
/// Interior vertices move by a random offset of length up to
/// `jitter × mean edge length`; boundary vertices move along their averaged
/// outward normal by up to the same amount in either direction. A move that
/// would shrink an incident element below 20% of its unperturbed volume is
/// redrawn, at most 10 times.
pub fn synthesize_test_hierarchy(
    base: &SimplicialMesh,
    levels: usize,
    jitter: f64,
    seed: u64,
) -> Result<Hierarchy> {
    if levels < 2 {
        return Err(Error::Invalid("levels must be at least 2".into()));
    }
    if !(0.0..=0.3).contains(&jitter) {
        return Err(Error::Invalid(format!("jitter {jitter} outside [0, 0.3]")));
    }
    let mut out = vec![base.clone()];
    for l in 1..levels {
        let refined = red_refine(out.last().expect("non-empty"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(l as u64));
        out.push(perturb(&refined, jitter, l, &mut rng)?);
    }
    Hierarchy::new(out)
}

/// Uniform refinement: each triangle into 4, each tetrahedron into 8.
/// New midpoint vertices are numbered after the existing ones in order of
/// first appearance.
pub fn red_refine(m: &SimplicialMesh) -> Result<SimplicialMesh> {
    let d = m.dim();
    let mut rest = m.rest_positions().to_vec();
    let mut mids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut mid = |rest: &mut Vec<f64>, a: usize, b: usize| -> usize {
        let key = (a.min(b), a.max(b));
        *mids.entry(key).or_insert_with(|| {
            let n = rest.len() / d;
            for k in 0..d {
                let v = 0.5 * (rest[a * d + k] + rest[b * d + k]);
                rest.push(v);
            }
            n
        })
    };
    let mut els = Vec::with_capacity(m.n_elements() * (1 << d) * (d + 1));
    for el in m.elements() {
        if d == 2 {
            let (a, b, c) = (el[0], el[1], el[2]);
            let ab = mid(&mut rest, a, b);
            let bc = mid(&mut rest, b, c);
            let ca = mid(&mut rest, c, a);
            els.extend_from_slice(&[a, ab, ca, ab, b, bc, ca, bc, c, ab, bc, ca]);
        } else {
            let (a, b, c, dd) = (el[0], el[1], el[2], el[3]);
            let ab = mid(&mut rest, a, b);
            let ac = mid(&mut rest, a, c);
            let ad = mid(&mut rest, a, dd);
            let bc = mid(&mut rest, b, c);
            let bd = mid(&mut rest, b, dd);
            let cd = mid(&mut rest, c, dd);
            els.extend_from_slice(&[a, ab, ac, ad, ab, b, bc, bd, ac, bc, c, cd, ad, bd, cd, dd]);
            // inner octahedron split along the ac-bd diagonal
            els.extend_from_slice(&[
                ac, bd, ab, bc, ac, bd, bc, cd, ac, bd, cd, ad, ac, bd, ad, ab,
            ]);
        }
    }
    Ok(SimplicialMesh::new(d, rest, els, m.level_id() + 1)?.0)
}

fn perturb(
    m: &SimplicialMesh,
    jitter: f64,
    level: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SimplicialMesh> {
    if jitter == 0.0 {
        return Ok(m.clone());
    }
    let d = m.dim();
    let amp = jitter * m.mean_edge_length();
    let adj = Adjacency::build(m);
    let boundary = BoundarySurface::extract(m)?;
    let x0 = m.rest_positions();
    let mut normals = vec![0.0; x0.len()];
    let mut on_boundary = vec![false; m.n_vertices()];
    for f in 0..boundary.n_facets() {
        let n = boundary.normal(f, x0);
        for &v in boundary.facet(f) {
            on_boundary[v] = true;
            for k in 0..d {
                normals[v * d + k] += n[k];
            }
        }
    }
    let rest_vol: Vec<f64> = (0..m.n_elements()).map(|e| m.element_volume(e)).collect();
    let mut x = x0.to_vec();
    for v in 0..m.n_vertices() {
        let mut accepted = false;
        for _ in 0..10 {
            let offset: Vec<f64> = if on_boundary[v] {
                let n = &normals[v * d..(v + 1) * d];
                let len = geom::norm(n);
                let s = rng.random_range(-1.0..=1.0) * amp;
                n.iter().map(|c| c / len * s).collect()
            } else {
                let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let len = geom::norm(&dir).max(1e-300);
                let s = rng.random_range(0.0..=1.0) * amp;
                dir.iter().map(|c| c / len * s).collect()
            };
            let saved: Vec<f64> = x[v * d..(v + 1) * d].to_vec();
            for k in 0..d {
                x[v * d + k] += offset[k];
            }
            let ok = adj.vertex_elements[v]
                .iter()
                .all(|&e| mesh::signed_measure(d, &x, m.element(e)) > 0.2 * rest_vol[e]);
            if ok {
                accepted = true;
                break;
            }
            x[v * d..(v + 1) * d].copy_from_slice(&saved);
        }
        if !accepted {
            return Err(Error::JitterInversion { level, retries: 10 });
        }
    }
    m.with_rest_positions(x)
}
