//! Scene files: a TOML description of a hierarchy, materials, obstacles,
//! pinned regions and solver parameters.
//!
//! ```toml
//! hierarchy = "ball.toml"          # hierarchy manifest, relative to this file
//! gravity = [0.0, -9.81]
//! seed = 0                         # recorded in run manifests
//! self_contact = false
//!
//! [time]
//! h = 0.01                         # seconds
//! steps = 100
//!
//! [[material]]                     # the first entry is the default
//! name = "soft"
//! model = "neo_hookean"            # neo_hookean | stvk | corotational
//! young = 2e4                      # Pa
//! poisson = 0.4                    # optional, default 0.4
//! density = 1000.0                 # kg/m^d
//!
//! [[region]]                       # optional: level-0 elements whose centroid
//! material = "stiff"               # lies in [lo, hi] (later regions win),
//! lo = [-1.0, 0.0]                 # carried to finer levels by containment
//! hi = [1.0, 0.5]
//!
//! [[collider]]
//! kind = "half_plane"              # free side: normal · x ≥ offset
//! normal = [0.0, 1.0]
//! offset = 0.0
//! friction = 0.3                   # optional, default 0
//!
//! [[collider]]
//! kind = "static_mesh"             # boundary of a mesh file
//! path = "spikes.mesh"
//! scale = 1.0                      # optional, applied before translate
//! translate = [0.0, 0.0]           # optional
//!
//! [[dirichlet]]                    # vertices with rest position in the box
//! lo = [-1.0, -1.0]                # are pinned, at every level
//! hi = [1.0, 0.05]
//!
//! [initial]
//! velocity = [0.0, 0.0]            # optional uniform initial velocity
//!
//! [barrier]
//! dhat = 1e-3
//! kappa = 1e3
//! eps_v = 1e-3                     # optional
//! mu = 0.0                         # self-contact friction, optional
//!
//! [progressive]                    # all optional
//! penalty = 0.0
//! kind = "barycentric"             # barycentric | biharmonic | phong
//! phong_blend = 0.5
//!
//! [solver]                         # all optional
//! newton_tol = 1e-6
//! max_iters = 100
//! shrink = 0.5
//! armijo = 1e-4
//! project_psd = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binding::bind;
use crate::contact::{BarrierParams, Collider, ContactModel};
use crate::error::{Error, Result};
use crate::hierarchy::{load_manifest, Hierarchy};
use crate::integrator::{Dynamics, SolverSettings};
use crate::materials::{
    lame_from_young_poisson, propagate_materials, Elasticity, ElementMaterial, MaterialModel,
    MaterialParams, DEFAULT_POISSON,
};
use crate::mesh::{load_mesh, lumped_mass, Density, MeshFormat, SimplicialMesh};
use crate::par::Exec;
use crate::progressive::{LevelSetup, ProgressiveConfig};
use crate::prolongation::{
    build_barycentric, build_biharmonic, build_phong, ProlongationKind, ProlongationOperator,
    DEFAULT_PHONG_BLEND,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub hierarchy: PathBuf,
    pub gravity: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub self_contact: bool,
    pub time: TimeConfig,
    pub material: Vec<NamedMaterial>,
    #[serde(default)]
    pub region: Vec<MaterialRegion>,
    #[serde(default)]
    pub collider: Vec<ColliderConfig>,
    #[serde(default)]
    pub dirichlet: Vec<BoxRegion>,
    #[serde(default)]
    pub initial: InitialConfig,
    pub barrier: BarrierParams,
    #[serde(default)]
    pub progressive: ProgressiveSection,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub h: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMaterial {
    pub name: String,
    pub model: MaterialModel,
    pub young: f64,
    #[serde(default = "default_poisson")]
    pub poisson: f64,
    pub density: f64,
}

fn default_poisson() -> f64 {
    DEFAULT_POISSON
}

impl NamedMaterial {
    pub fn params(&self) -> MaterialParams {
        MaterialParams {
            model: self.model,
            young: self.young,
            poisson: self.poisson,
            density: self.density,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialRegion {
    pub material: String,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.lo)
            .zip(&self.hi)
            .all(|((x, lo), hi)| lo <= x && x <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ColliderConfig {
    HalfPlane {
        normal: Vec<f64>,
        offset: f64,
        #[serde(default)]
        friction: f64,
    },
    StaticMesh {
        path: PathBuf,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        translate: Option<Vec<f64>>,
        #[serde(default)]
        friction: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub velocity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProgressiveSection {
    pub penalty: f64,
    pub kind: ProlongationKind,
    pub phong_blend: f64,
}

impl Default for ProgressiveSection {
    fn default() -> Self {
        ProgressiveSection {
            penalty: 0.0,
            kind: ProlongationKind::Barycentric,
            phong_blend: DEFAULT_PHONG_BLEND,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl SceneConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    /// Checks that do not need the meshes.
    pub fn validate(&self) -> Result<()> {
        if !(self.time.h > 0.0) {
            return Err(config_err(format!(
                "time.h must be positive, got {}",
                self.time.h
            )));
        }
        if self.material.is_empty() {
            return Err(config_err("at least one [[material]] is required"));
        }
        for m in &self.material {
            m.params()
                .validate()
                .map_err(|e| config_err(format!("material {}: {e}", m.name)))?;
        }
        for r in &self.region {
            if !self.material.iter().any(|m| m.name == r.material) {
                return Err(config_err(format!(
                    "region refers to unknown material {:?}",
                    r.material
                )));
            }
        }
        self.barrier
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        self.solver
            .validate()
            .map_err(|e| config_err(e.to_string()))?;
        if !(self.progressive.penalty >= 0.0) {
            return Err(config_err("progressive.penalty must be ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.progressive.phong_blend) {
            return Err(config_err("progressive.phong_blend must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// A parsed scene with its hierarchy loaded.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub path: PathBuf,
    pub hierarchy: Hierarchy,
    /// SHA-256 over the scene file and every mesh it references.
    pub hash: String,
    colliders: Vec<Collider>,
}

impl Scene {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config = SceneConfig::parse(&text).map_err(|e| match e {
            Error::Config(m) => config_err(format!("{}: {m}", path.display())),
            other => other,
        })?;
        config.validate()?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let manifest = dir.join(&config.hierarchy);
        if !manifest.exists() {
            return Err(config_err(format!(
                "hierarchy manifest {} not found",
                manifest.display()
            )));
        }
        let hierarchy = load_manifest(&manifest)?;
        let dim = hierarchy.dim();
        if config.gravity.len() != dim {
            return Err(config_err(format!(
                "gravity has {} components, meshes are {dim}D",
                config.gravity.len()
            )));
        }
        let mut hasher = Sha256::new();
        hasher.update(text.as_bytes());
        hasher.update(std::fs::read(&manifest).map_err(|e| Error::io(&manifest, e))?);
        for m in hierarchy.levels() {
            hasher.update(crate::mesh::io::mesh_to_bytes(m));
        }
        let mut colliders = Vec::new();
        for c in &config.collider {
            colliders.push(match c {
                ColliderConfig::HalfPlane {
                    normal,
                    offset,
                    friction,
                } => {
                    if normal.len() != dim {
                        return Err(config_err("half_plane normal has the wrong dimension"));
                    }
                    Collider::half_plane(normal, *offset, *friction)
                        .map_err(|e| config_err(e.to_string()))?
                }
                ColliderConfig::StaticMesh {
                    path: p,
                    scale,
                    translate,
                    friction,
                } => {
                    let full = dir.join(p);
                    let format = MeshFormat::from_path(&full).ok_or_else(|| {
                        config_err(format!("unknown mesh format for {}", full.display()))
                    })?;
                    let mesh = load_mesh(&full, format)?.mesh;
                    if mesh.dim() != dim {
                        return Err(Error::DimMismatch {
                            expected: dim,
                            found: mesh.dim(),
                        });
                    }
                    hasher.update(crate::mesh::io::mesh_to_bytes(&mesh));
                    let shift = translate.clone().unwrap_or_else(|| vec![0.0; dim]);
                    if shift.len() != dim {
                        return Err(config_err("static_mesh translate has the wrong dimension"));
                    }
                    let moved: Vec<f64> = mesh
                        .rest_positions()
                        .iter()
                        .enumerate()
                        .map(|(i, x)| scale * x + shift[i % dim])
                        .collect();
                    Collider::static_mesh(&mesh.with_rest_positions(moved)?, *friction)?
                }
            });
        }
        for r in config
            .dirichlet
            .iter()
            .map(|r| (&r.lo, &r.hi))
            .chain(config.region.iter().map(|r| (&r.lo, &r.hi)))
        {
            if r.0.len() != dim || r.1.len() != dim {
                return Err(config_err("region box has the wrong dimension"));
            }
        }
        Ok(Scene {
            config,
            path: path.to_path_buf(),
            hierarchy,
            hash: hex::encode(hasher.finalize()),
            colliders,
        })
    }

    pub fn dim(&self) -> usize {
        self.hierarchy.dim()
    }

    pub fn n_levels(&self) -> usize {
        self.hierarchy.n_levels()
    }

    pub fn colliders(&self) -> &[Collider] {
        &self.colliders
    }

    pub fn progressive_config(&self) -> ProgressiveConfig {
        ProgressiveConfig {
            h: self.config.time.h,
            steps: self.config.time.steps,
            penalty: self.config.progressive.penalty,
            solver: self.config.solver,
        }
    }

    /// Material index per element of every level.
    fn material_indices(&self) -> Result<Vec<Vec<usize>>> {
        let coarse = self.hierarchy.level(0);
        let names: Vec<&str> = self
            .config
            .material
            .iter()
            .map(|m| m.name.as_str())
            .collect();
        let assignment: Vec<usize> = (0..coarse.n_elements())
            .map(|e| {
                let c = coarse.element_centroid(e);
                self.config
                    .region
                    .iter()
                    .rev()
                    .find(|r| {
                        r.lo.iter()
                            .zip(&r.hi)
                            .zip(&c)
                            .all(|((lo, hi), x)| lo <= x && x <= hi)
                    })
                    .map_or(0, |r| {
                        names
                            .iter()
                            .position(|n| *n == r.material)
                            .expect("validated")
                    })
            })
            .collect();
        propagate_materials(self.hierarchy.levels(), &assignment)
    }

    /// Dynamics and initial state of the selected levels.
    pub fn level_setups(&self, levels: &[usize], exec: Exec) -> Result<Vec<LevelSetup>> {
        let mats = self.material_indices()?;
        let dim = self.dim();
        let mut out = Vec::new();
        for &l in levels {
            let mesh = self.hierarchy.level(l);
            let per_element: Vec<ElementMaterial> = mats[l]
                .iter()
                .map(|&k| {
                    let p = self.config.material[k].params();
                    let (mu, lambda) = lame_from_young_poisson(p.young, p.poisson)?;
                    Ok(ElementMaterial {
                        model: p.model,
                        mu,
                        lambda,
                    })
                })
                .collect::<Result<_>>()?;
            let rho = mats[l]
                .iter()
                .map(|&k| self.config.material[k].density)
                .collect();
            let mass = lumped_mass(mesh, &Density::PerElement(rho))?;
            let fixed: Vec<usize> = (0..mesh.n_vertices())
                .filter(|&v| {
                    self.config
                        .dirichlet
                        .iter()
                        .any(|r| r.contains(mesh.vertex(v)))
                })
                .collect();
            if !self.config.dirichlet.is_empty() && fixed.is_empty() {
                log::warn!("level {l}: no vertex lies in any dirichlet box");
            }
            let mut dynamics = Dynamics::new(dim, mass, self.config.gravity.clone())?
                .at_level(l)
                .with_elasticity(Elasticity::new(mesh, per_element, exec)?)
                .with_fixed(fixed)?;
            if !self.colliders.is_empty() || self.config.self_contact {
                dynamics = dynamics.with_contact(ContactModel::new(
                    mesh,
                    self.colliders.clone(),
                    self.config.barrier,
                    self.config.self_contact,
                    exec,
                )?);
            }
            let x0 = mesh.rest_positions().to_vec();
            let v0 = match &self.config.initial.velocity {
                Some(v) if v.len() == dim => (0..x0.len()).map(|i| v[i % dim]).collect(),
                Some(_) => return Err(config_err("initial velocity has the wrong dimension")),
                None => vec![0.0; x0.len()],
            };
            let mut v0: Vec<f64> = v0;
            for &v in &dynamics.fixed {
                v0[v * dim..(v + 1) * dim].fill(0.0);
            }
            if dynamics.min_distance(&x0) <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "level {l} starts in contact (distance ≤ 0)"
                )));
            }
            out.push(LevelSetup { dynamics, x0, v0 });
        }
        Ok(out)
    }

    /// Operators between consecutive selected levels.
    pub fn operators(
        &self,
        levels: &[usize],
        kind: ProlongationKind,
    ) -> Result<Vec<ProlongationOperator>> {
        levels
            .windows(2)
            .map(|w| {
                let (coarse, fine) = (self.hierarchy.level(w[0]), self.hierarchy.level(w[1]));
                let mut op =
                    build_operator(fine, coarse, kind, self.config.progressive.phong_blend)?;
                if w[1] == w[0] + 1 {
                    if let Some(p) = self.hierarchy.report().pairs.get(w[0]) {
                        op.set_epsilon(p.epsilon);
                    }
                }
                Ok(op)
            })
            .collect()
    }

    /// `0..L` or the validated selection.
    pub fn select_levels(&self, levels: Option<&[usize]>) -> Result<Vec<usize>> {
        match levels {
            None => Ok((0..self.n_levels()).collect()),
            Some(sel) => {
                if sel.is_empty()
                    || sel.windows(2).any(|w| w[0] >= w[1])
                    || sel.iter().any(|&l| l >= self.n_levels())
                {
                    return Err(config_err(format!(
                        "levels must be strictly increasing indices below {}, got {sel:?}",
                        self.n_levels()
                    )));
                }
                Ok(sel.to_vec())
            }
        }
    }
}

/// Prolongation from `coarse` to `fine` of the given kind.
pub fn build_operator(
    fine: &SimplicialMesh,
    coarse: &SimplicialMesh,
    kind: ProlongationKind,
    blend: f64,
) -> Result<ProlongationOperator> {
    match kind {
        ProlongationKind::Barycentric => build_barycentric(&bind(fine, coarse)?, coarse),
        ProlongationKind::Biharmonic => build_biharmonic(fine, coarse, &bind(coarse, fine)?),
        ProlongationKind::Phong => build_phong(&bind(fine, coarse)?, fine, coarse, blend),
    }
}
