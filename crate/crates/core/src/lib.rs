//! Progressive level-of-detail simulation of volumetric elastodynamics.

pub mod binding;
pub mod bvh;
pub mod contact;
pub mod error;
pub mod geom;
pub mod hierarchy;
pub mod integrator;
pub mod linalg;
pub mod materials;
pub mod mesh;
pub mod metrics;
pub mod par;
pub mod progressive;
pub mod prolongation;
pub mod run;
pub mod scene;
pub mod shapes;

pub use error::{Error, Result};
pub use mesh::SimplicialMesh;
pub use par::Exec;
