//! Hyperelastic energy densities and their assembly over a mesh.
//!
//! Deformation gradients are `F = Σ_j x_j ⊗ ∇φ_j` with rest shape-function
//! gradients `∇φ_j`. Fourth-order tangents `∂P/∂F` are stored as
//! `d² × d²` matrices indexed by `i·d + j` for `F_ij`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{project_psd, Triplets};
use crate::mesh::SimplicialMesh;
use crate::par::{self, Exec};

/// Poisson ratio used when a scene does not give one.
pub const DEFAULT_POISSON: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialModel {
    NeoHookean,
    #[serde(rename = "stvk")]
    StVk,
    Corotational,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    pub model: MaterialModel,
    pub young: f64,
    #[serde(default = "default_poisson")]
    pub poisson: f64,
    pub density: f64,
}

fn default_poisson() -> f64 {
    DEFAULT_POISSON
}

impl MaterialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.young > 0.0) {
            return Err(Error::Invalid(format!(
                "Young's modulus must be positive, got {}",
                self.young
            )));
        }
        if !(self.density > 0.0) {
            return Err(Error::Invalid(format!(
                "density must be positive, got {}",
                self.density
            )));
        }
        lame_from_young_poisson(self.young, self.poisson).map(|_| ())
    }

    pub fn lame(&self) -> Result<(f64, f64)> {
        lame_from_young_poisson(self.young, self.poisson)
    }
}

pub fn lame_from_young_poisson(young: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::Invalid(format!(
            "Poisson ratio {poisson} outside (-1, 0.5)"
        )));
    }
    let mu = young / (2.0 * (1.0 + poisson));
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    Ok((mu, lambda))
}

/// Energy density `ψ(F)`; `+∞` for Neo-Hookean at `det F ≤ 0`.
pub fn energy_density(model: MaterialModel, mu: f64, lambda: f64, f: &DMatrix<f64>) -> f64 {
    let d = f.nrows() as f64;
    match model {
        MaterialModel::NeoHookean => {
            let j = f.determinant();
            if j <= 0.0 {
                return f64::INFINITY;
            }
            let lj = j.ln();
            0.5 * mu * (f.norm_squared() - d) - mu * lj + 0.5 * lambda * lj * lj
        }
        MaterialModel::StVk => {
            let e = green_strain(f);
            mu * e.norm_squared() + 0.5 * lambda * e.trace().powi(2)
        }
        MaterialModel::Corotational => {
            let (r, s) = polar(f);
            mu * (f - &r).norm_squared() + 0.5 * lambda * (s.trace() - d).powi(2)
        }
    }
}

/// First Piola-Kirchhoff stress `∂ψ/∂F`.
pub fn pk1(model: MaterialModel, mu: f64, lambda: f64, f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    let d = n as f64;
    match model {
        MaterialModel::NeoHookean => {
            let fit = inverse(f).transpose();
            let lj = f.determinant().ln();
            mu * (f - &fit) + lambda * lj * fit
        }
        MaterialModel::StVk => {
            let e = green_strain(f);
            let tr = e.trace();
            f * (2.0 * mu * e + lambda * tr * DMatrix::identity(n, n))
        }
        MaterialModel::Corotational => {
            let (r, s) = polar(f);
            2.0 * mu * (f - &r) + lambda * (s.trace() - d) * r
        }
    }
}

/// Tangent `∂P/∂F` as a `d² × d²` matrix.
pub fn dpdf(model: MaterialModel, mu: f64, lambda: f64, f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    let d = n as f64;
    let mut out = DMatrix::zeros(n * n, n * n);
    let id = DMatrix::<f64>::identity(n, n);
    // precomputed per model, then one directional derivative per basis dF
    enum Pre {
        Nh {
            fit: DMatrix<f64>,
            finv: DMatrix<f64>,
            lj: f64,
        },
        Stvk {
            e: DMatrix<f64>,
            tr: f64,
        },
        Corot {
            r: DMatrix<f64>,
            s: DMatrix<f64>,
            trs: f64,
        },
    }
    let pre = match model {
        MaterialModel::NeoHookean => {
            let finv = inverse(f);
            Pre::Nh {
                fit: finv.transpose(),
                lj: f.determinant().ln(),
                finv,
            }
        }
        MaterialModel::StVk => {
            let e = green_strain(f);
            let tr = e.trace();
            Pre::Stvk { e, tr }
        }
        MaterialModel::Corotational => {
            let (r, s) = polar(f);
            let trs = s.trace();
            Pre::Corot { r, s, trs }
        }
    };
    for k in 0..n {
        for l in 0..n {
            let mut df = DMatrix::zeros(n, n);
            df[(k, l)] = 1.0;
            let dp = match &pre {
                Pre::Nh { fit, finv, lj } => {
                    mu * &df
                        + (mu - lambda * lj) * (fit * df.transpose() * fit)
                        + lambda * (finv * &df).trace() * fit
                }
                Pre::Stvk { e, tr } => {
                    let de = 0.5 * (df.transpose() * f + f.transpose() * &df);
                    let dtr = de.trace();
                    &df * (2.0 * mu * e + lambda * tr * &id)
                        + f * (2.0 * mu * de + lambda * dtr * &id)
                }
                Pre::Corot { r, s, trs } => {
                    let dr = polar_rotation_derivative(r, s, &df);
                    let dtrs = (r.transpose() * &df).trace();
                    2.0 * mu * (&df - &dr) + lambda * dtrs * r + lambda * (trs - d) * dr
                }
            };
            for i in 0..n {
                for j in 0..n {
                    out[(i * n + j, k * n + l)] = dp[(i, j)];
                }
            }
        }
    }
    out
}

fn green_strain(f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    0.5 * (f.transpose() * f - DMatrix::identity(n, n))
}

fn inverse(f: &DMatrix<f64>) -> DMatrix<f64> {
    f.clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(f.nrows(), f.ncols(), f64::NAN))
}

/// Polar decomposition `F = R S` with `det R = +1` (reflection moved into `S`).
pub fn polar(f: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = f.nrows();
    let svd = f.clone().svd(true, true);
    let mut u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let mut sigma = svd.singular_values.clone();
    if (&u * &v_t).determinant() < 0.0 {
        // flip the smallest singular direction
        let k = (0..n)
            .min_by(|&a, &b| sigma[a].total_cmp(&sigma[b]))
            .expect("n > 0");
        for r in 0..n {
            u[(r, k)] = -u[(r, k)];
        }
        sigma[k] = -sigma[k];
    }
    let r = &u * &v_t;
    let s = v_t.transpose() * DMatrix::from_diagonal(&sigma) * &v_t;
    (r, s)
}

/// `dR` for the polar rotation, from `Rᵀ dF − (Rᵀ dF)ᵀ = Ω S + S Ω`.
fn polar_rotation_derivative(
    r: &DMatrix<f64>,
    s: &DMatrix<f64>,
    df: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = r.nrows();
    let k = r.transpose() * df;
    let skew = &k - k.transpose();
    let omega = if n == 2 {
        let a = skew[(1, 0)] / safe(s.trace());
        DMatrix::from_row_slice(2, 2, &[0.0, -a, a, 0.0])
    } else {
        let kv = nalgebra::Vector3::new(skew[(2, 1)], skew[(0, 2)], skew[(1, 0)]);
        let s3 = nalgebra::Matrix3::from_iterator(s.iter().copied());
        let m = nalgebra::Matrix3::identity() * s3.trace() - s3;
        let w = m
            .try_inverse()
            .map(|mi| mi * kv)
            .unwrap_or_else(nalgebra::Vector3::zeros);
        DMatrix::from_row_slice(
            3,
            3,
            &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0],
        )
    };
    r * omega
}

fn safe(v: f64) -> f64 {
    if v.abs() < 1e-300 {
        1e-300_f64.copysign(v)
    } else {
        v
    }
}

/// Per-element material for each element of a level.
#[derive(Debug, Clone)]
pub struct ElementMaterial {
    pub model: MaterialModel,
    pub mu: f64,
    pub lambda: f64,
}

/// Elastic energy of one mesh: rest data plus per-element material.
#[derive(Debug, Clone)]
pub struct Elasticity {
    dim: usize,
    elements: Vec<usize>,
    volumes: Vec<f64>,
    grads: Vec<Vec<f64>>,
    materials: Vec<ElementMaterial>,
    exec: Exec,
}

impl Elasticity {
    pub fn new(mesh: &SimplicialMesh, materials: Vec<ElementMaterial>, exec: Exec) -> Result<Self> {
        if materials.len() != mesh.n_elements() {
            return Err(Error::SizeMismatch {
                what: "element materials",
                expected: mesh.n_elements(),
                found: materials.len(),
            });
        }
        Ok(Elasticity {
            dim: mesh.dim(),
            elements: mesh.connectivity().to_vec(),
            volumes: (0..mesh.n_elements())
                .map(|e| mesh.element_volume(e))
                .collect(),
            grads: (0..mesh.n_elements())
                .map(|e| mesh.shape_gradients(e))
                .collect(),
            materials,
            exec,
        })
    }

    /// Uniform material over the whole mesh.
    pub fn uniform(mesh: &SimplicialMesh, params: &MaterialParams, exec: Exec) -> Result<Self> {
        let (mu, lambda) = params.lame()?;
        let m = ElementMaterial {
            model: params.model,
            mu,
            lambda,
        };
        Self::new(mesh, vec![m; mesh.n_elements()], exec)
    }

    pub fn n_elements(&self) -> usize {
        self.volumes.len()
    }

    fn element(&self, e: usize) -> &[usize] {
        let k = self.dim + 1;
        &self.elements[e * k..(e + 1) * k]
    }

    pub fn deformation_gradient(&self, e: usize, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        let g = &self.grads[e];
        let mut f = DMatrix::zeros(d, d);
        for (j, &v) in self.element(e).iter().enumerate() {
            for i in 0..d {
                for k in 0..d {
                    f[(i, k)] += x[v * d + i] * g[j * d + k];
                }
            }
        }
        f
    }

    pub fn element_energy(&self, e: usize, x: &[f64]) -> f64 {
        let m = &self.materials[e];
        self.volumes[e] * energy_density(m.model, m.mu, m.lambda, &self.deformation_gradient(e, x))
    }

    /// Gradient with respect to the element's vertex coordinates, vertex-major.
    pub fn element_gradient(&self, e: usize, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let m = &self.materials[e];
        let p = pk1(m.model, m.mu, m.lambda, &self.deformation_gradient(e, x));
        let g = &self.grads[e];
        let mut out = vec![0.0; (d + 1) * d];
        for j in 0..=d {
            for i in 0..d {
                out[j * d + i] =
                    self.volumes[e] * (0..d).map(|k| p[(i, k)] * g[j * d + k]).sum::<f64>();
            }
        }
        out
    }

    pub fn element_hessian(&self, e: usize, x: &[f64], project: bool) -> DMatrix<f64> {
        let d = self.dim;
        let m = &self.materials[e];
        let t = dpdf(m.model, m.mu, m.lambda, &self.deformation_gradient(e, x));
        let g = &self.grads[e];
        let n = (d + 1) * d;
        // G maps element dofs to vec(F): F_ik = Σ_j x_{j,i} g_{j,k}
        let mut gm = DMatrix::zeros(d * d, n);
        for j in 0..=d {
            for i in 0..d {
                for k in 0..d {
                    gm[(i * d + k, j * d + i)] = g[j * d + k];
                }
            }
        }
        let h = self.volumes[e] * gm.transpose() * t * gm;
        if project {
            project_psd(&h)
        } else {
            h
        }
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        let parts = par::map_indexed(self.exec, self.n_elements(), |e| self.element_energy(e, x));
        parts.iter().sum()
    }

    /// Add the gradient into `out`.
    pub fn add_gradient(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let parts = par::map_indexed(self.exec, self.n_elements(), |e| {
            self.element_gradient(e, x)
        });
        for (e, g) in parts.iter().enumerate() {
            for (j, &v) in self.element(e).iter().enumerate() {
                for i in 0..d {
                    out[v * d + i] += g[j * d + i];
                }
            }
        }
    }

    /// Append the (optionally projected) Hessian to `t`.
    pub fn add_hessian(&self, x: &[f64], project: bool, t: &mut Triplets) {
        let d = self.dim;
        let parts = par::map_indexed(self.exec, self.n_elements(), |e| {
            self.element_hessian(e, x, project)
        });
        for (e, h) in parts.iter().enumerate() {
            let el = self.element(e);
            for (a, &va) in el.iter().enumerate() {
                for (b, &vb) in el.iter().enumerate() {
                    for i in 0..d {
                        for k in 0..d {
                            t.push(va * d + i, vb * d + k, h[(a * d + i, b * d + k)]);
                        }
                    }
                }
            }
        }
    }
}

/// Material index for each element of every level: level 0 takes
/// `coarse_assignment`; each finer element inherits from the element of the
/// next coarser level that contains its rest centroid (nearest centroid if
/// none does).
pub fn propagate_materials(
    levels: &[SimplicialMesh],
    coarse_assignment: &[usize],
) -> Result<Vec<Vec<usize>>> {
    if coarse_assignment.len() != levels[0].n_elements() {
        return Err(Error::SizeMismatch {
            what: "coarse material assignment",
            expected: levels[0].n_elements(),
            found: coarse_assignment.len(),
        });
    }
    let mut out = vec![coarse_assignment.to_vec()];
    for l in 1..levels.len() {
        let (coarse, fine) = (&levels[l - 1], &levels[l]);
        let locator = crate::binding::ElementLocator::new(coarse);
        let centroids: Vec<Vec<f64>> = (0..coarse.n_elements())
            .map(|e| coarse.element_centroid(e))
            .collect();
        let prev = &out[l - 1];
        let mut assign = Vec::with_capacity(fine.n_elements());
        for e in 0..fine.n_elements() {
            let c = fine.element_centroid(e);
            let host = match locator.locate(&c)? {
                Some((h, _)) => h,
                None => (0..coarse.n_elements())
                    .min_by(|&a, &b| {
                        crate::mesh::dist_sq(&c, &centroids[a])
                            .total_cmp(&crate::mesh::dist_sq(&c, &centroids[b]))
                    })
                    .expect("non-empty mesh"),
            };
            assign.push(prev[host]);
        }
        out.push(assign);
    }
    Ok(out)
}
