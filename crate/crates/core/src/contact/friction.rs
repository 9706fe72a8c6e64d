use nalgebra::{DMatrix, DVector};

use crate::linalg::Triplets;
use crate::par::{self, Exec};

/// Smoothed friction magnitude: `−y³/(3ε²) + y²/ε + ε/3` below `ε`, `y` above.
pub fn f0(y: f64, eps: f64) -> f64 {
    if y < eps {
        -y * y * y / (3.0 * eps * eps) + y * y / eps + eps / 3.0
    } else {
        y
    }
}

/// `f0'(y) / y`, finite at zero.
fn f1_over_y(y: f64, eps: f64) -> f64 {
    if y < eps {
        2.0 / eps - y / (eps * eps)
    } else {
        1.0 / y
    }
}

/// Orthonormal tangent basis (columns) of the plane normal to `n`.
pub(crate) fn tangent_basis(n: &[f64]) -> DMatrix<f64> {
    let len = n.iter().map(|c| c * c).sum::<f64>().sqrt();
    let n: Vec<f64> = n.iter().map(|c| c / len).collect();
    if n.len() == 2 {
        return DMatrix::from_column_slice(2, 1, &[-n[1], n[0]]);
    }
    let nv = nalgebra::Vector3::new(n[0], n[1], n[2]);
    let axis = (0..3)
        .min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs()))
        .expect("three components");
    let t1 = nv.cross(&nalgebra::Vector3::ith(axis, 1.0)).normalize();
    let t2 = nv.cross(&t1);
    DMatrix::from_columns(&[
        DVector::from_column_slice(t1.as_slice()),
        DVector::from_column_slice(t2.as_slice()),
    ])
}

/// One lagged friction constraint. The tangential displacement is
/// `u = Tᵀ Σ_b coef_b (x_b − x_b^t)` over the stencil blocks.
#[derive(Debug, Clone)]
pub struct FrictionPair {
    pub dofs: Vec<Option<usize>>,
    pub coef: Vec<f64>,
    pub tangent: DMatrix<f64>,
    /// Lagged normal force times friction coefficient.
    pub lambda_mu: f64,
}

/// Friction potential `Σ λμ f0(|u|)` with everything lagged at the start of
/// the time step.
#[derive(Debug, Clone)]
pub struct FrictionSet {
    dim: usize,
    x_ref: Vec<f64>,
    pairs: Vec<FrictionPair>,
    exec: Exec,
}

impl FrictionSet {
    pub fn new(dim: usize, x_ref: Vec<f64>, pairs: Vec<FrictionPair>, exec: Exec) -> Self {
        FrictionSet {
            dim,
            x_ref,
            pairs,
            exec,
        }
    }

    pub fn empty(dim: usize) -> Self {
        Self::new(dim, Vec::new(), Vec::new(), Exec::Sequential)
    }

    pub fn pairs(&self) -> &[FrictionPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn tangential(&self, fp: &FrictionPair, x: &[f64]) -> DVector<f64> {
        let d = self.dim;
        let mut rel = DVector::zeros(d);
        for (dof, c) in fp.dofs.iter().zip(&fp.coef) {
            if let Some(v) = dof {
                for i in 0..d {
                    rel[i] += c * (x[v * d + i] - self.x_ref[v * d + i]);
                }
            }
        }
        fp.tangent.transpose() * rel
    }

    pub fn energy(&self, x: &[f64], eps: f64) -> f64 {
        self.pairs
            .iter()
            .map(|fp| fp.lambda_mu * f0(self.tangential(fp, x).norm(), eps))
            .sum()
    }

    pub fn add_gradient(&self, x: &[f64], eps: f64, out: &mut [f64]) {
        let d = self.dim;
        let parts = par::map_slice(self.exec, &self.pairs, |fp| {
            let u = self.tangential(fp, x);
            let s = fp.lambda_mu * f1_over_y(u.norm(), eps);
            &fp.tangent * u * s
        });
        for (fp, g) in self.pairs.iter().zip(parts) {
            for (dof, c) in fp.dofs.iter().zip(&fp.coef) {
                if let Some(v) = dof {
                    for i in 0..d {
                        out[v * d + i] += c * g[i];
                    }
                }
            }
        }
    }

    /// Adds the friction Hessian, which is positive semidefinite by
    /// construction.
    pub fn add_hessian(&self, x: &[f64], eps: f64, t: &mut Triplets) {
        let d = self.dim;
        let parts = par::map_slice(self.exec, &self.pairs, |fp| {
            let u = self.tangential(fp, x);
            let y = u.norm();
            let k = u.len();
            let hu = if y < eps {
                let mut h = DMatrix::identity(k, k) * (2.0 / eps - y / (eps * eps));
                if y > 0.0 {
                    let uh = &u / y;
                    h -= &uh * uh.transpose() * (y / (eps * eps));
                }
                h
            } else {
                let uh = &u / y;
                (DMatrix::identity(k, k) - &uh * uh.transpose()) / y
            };
            &fp.tangent * hu * fp.tangent.transpose() * fp.lambda_mu
        });
        for (fp, h) in self.pairs.iter().zip(parts) {
            for (a, ca) in fp.dofs.iter().zip(&fp.coef) {
                let Some(va) = *a else { continue };
                for (b, cb) in fp.dofs.iter().zip(&fp.coef) {
                    let Some(vb) = *b else { continue };
                    for i in 0..d {
                        for j in 0..d {
                            t.push(va * d + i, vb * d + j, ca * cb * h[(i, j)]);
                        }
                    }
                }
            }
        }
    }
}
