use super::SimplicialMesh;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Uniform(f64),
    PerElement(Vec<f64>),
}

/// Diagonal (lumped) mass, one entry per vertex, in kilograms.
#[derive(Debug, Clone, PartialEq)]
pub struct LumpedMass(pub Vec<f64>);

impl LumpedMass {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mass-weighted squared norm `Σ m_i |v_i|²` of a per-vertex field.
    pub fn norm2(&self, v: &[f64]) -> f64 {
        let dim = v.len() / self.0.len();
        self.0
            .iter()
            .zip(v.chunks(dim))
            .map(|(m, vi)| m * vi.iter().map(|a| a * a).sum::<f64>())
            .sum()
    }

    pub fn scaled(&self, s: f64) -> LumpedMass {
        LumpedMass(self.0.iter().map(|m| m * s).collect())
    }
}

/// Each vertex receives `1/(d+1)` of the rest mass of every incident element.
pub fn lumped_mass(mesh: &SimplicialMesh, density: &Density) -> Result<LumpedMass> {
    let rho = |e: usize| match density {
        Density::Uniform(r) => *r,
        Density::PerElement(v) => v[e],
    };
    if let Density::PerElement(v) = density {
        if v.len() != mesh.n_elements() {
            return Err(Error::SizeMismatch {
                what: "per-element density",
                expected: mesh.n_elements(),
                found: v.len(),
            });
        }
    }
    let mut m = vec![0.0; mesh.n_vertices()];
    let share = 1.0 / mesh.simplex_size() as f64;
    for (e, el) in mesh.elements().enumerate() {
        let r = rho(e);
        if !(r > 0.0) {
            return Err(Error::Invalid(format!(
                "density {r} of element {e} must be positive"
            )));
        }
        let me = r * mesh.element_volume(e) * share;
        for &v in el {
            m[v] += me;
        }
    }
    if let Some(i) = m.iter().position(|&mi| mi <= 0.0) {
        return Err(Error::Invalid(format!(
            "vertex {i} is not used by any element"
        )));
    }
    Ok(LumpedMass(m))
}
