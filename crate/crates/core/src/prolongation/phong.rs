//! Phong-blend prolongation.
//!
//! Every coarse vertex `v` carries a linear model `x_v + F_v (X − X_v)`,
//! where `F_v` is the volume-weighted mean of the deformation gradients of
//! its incident elements. The fine vertex `i` bound in element `T` with
//! weights `w_k` lands at
//!
//! ```text
//! (1 − β) Σ_k w_k x_k + β Σ_k w_k [x_k + F_k (X_i − X_k)].
//! ```
//!
//! With `F_e = Σ_j x_j ⊗ ∇φ_{e,j}` each term is linear in the coarse
//! positions with scalar coefficients:
//!
//! ```text
//! P_ij = w_j [j ∈ T] + β Σ_k w_k Σ_{e ∋ k} α_{k,e} ∇φ_{e,j} · (X_i − X_k)
//! ```
//!
//! where `α_{k,e} = |e| / Σ_{e' ∋ k} |e'|`. Since `Σ_j ∇φ_{e,j} = 0`, the
//! blend term adds nothing to the row sums.

use std::collections::BTreeMap;

use super::{ProlongationKind, ProlongationOperator};
use crate::binding::BindingMap;
use crate::error::{Error, Result};
use crate::linalg::Triplets;
use crate::mesh::{Adjacency, SimplicialMesh};

pub const DEFAULT_PHONG_BLEND: f64 = 0.5;

pub fn build_phong(
    binding: &BindingMap,
    fine: &SimplicialMesh,
    coarse: &SimplicialMesh,
    blend: f64,
) -> Result<ProlongationOperator> {
    if !(0.0..=1.0).contains(&blend) {
        return Err(Error::Invalid(format!(
            "phong blend {blend} outside [0, 1]"
        )));
    }
    let rows = binding.complete()?;
    let d = coarse.dim();
    let adj = Adjacency::build(coarse);
    let grads: Vec<Vec<f64>> = (0..coarse.n_elements())
        .map(|e| coarse.shape_gradients(e))
        .collect();
    let vols: Vec<f64> = (0..coarse.n_elements())
        .map(|e| coarse.element_volume(e))
        .collect();
    let star_vol: Vec<f64> = adj
        .vertex_elements
        .iter()
        .map(|es| es.iter().map(|&e| vols[e]).sum())
        .collect();

    let mut t = Triplets::new(rows.len(), coarse.n_vertices());
    let mut row: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, b) in rows.iter().enumerate() {
        row.clear();
        let xi = fine.vertex(i);
        for (&vk, &wk) in coarse.element(b.host).iter().zip(&b.coords) {
            *row.entry(vk).or_default() += wk;
            if blend == 0.0 {
                continue;
            }
            let r: Vec<f64> = xi
                .iter()
                .zip(coarse.vertex(vk))
                .map(|(a, c)| a - c)
                .collect();
            for &e in &adj.vertex_elements[vk] {
                let a = blend * wk * vols[e] / star_vol[vk];
                for (j, &vj) in coarse.element(e).iter().enumerate() {
                    let g = &grads[e][j * d..(j + 1) * d];
                    let dot: f64 = g.iter().zip(&r).map(|(x, y)| x * y).sum();
                    *row.entry(vj).or_default() += a * dot;
                }
            }
        }
        for (&c, &v) in &row {
            t.push(i, c, v);
        }
    }
    Ok(ProlongationOperator::new(
        t.to_csr(),
        ProlongationKind::Phong,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::bind;
    use crate::hierarchy::synthesize_test_hierarchy;
    use crate::mesh::fixtures::*;
    use crate::prolongation::build_barycentric;

    #[test]
    fn zero_blend_is_barycentric() {
        let h = synthesize_test_hierarchy(&unit_tet(), 3, 0.2, 1).unwrap();
        let map = bind(h.level(2), h.level(1)).unwrap();
        let a = build_phong(&map, h.level(2), h.level(1), 0.0).unwrap();
        let b = build_barycentric(&map, h.level(1)).unwrap();
        assert!((a.weights().to_dense() - b.weights().to_dense()).amax() <= 1e-12);
    }

    #[test]
    fn affine_motion_is_reproduced() {
        let h = synthesize_test_hierarchy(&unit_tet(), 3, 0.25, 2).unwrap();
        let (coarse, fine) = (h.level(1), h.level(2));
        let map = bind(fine, coarse).unwrap();
        let t = |p: &[f64]| {
            [
                1.1 * p[0] + 0.2 * p[1] - 0.3 * p[2] + 0.4,
                -0.5 * p[0] + 0.9 * p[1] + 0.1 * p[2] - 1.0,
                0.3 * p[0] + 0.7 * p[2] + 2.0,
            ]
        };
        for blend in [0.0, 0.5, 1.0] {
            let p = build_phong(&map, fine, coarse, blend).unwrap();
            let xc: Vec<f64> = coarse.rest_positions().chunks(3).flat_map(t).collect();
            let xf = p.prolong(&xc, 3).unwrap();
            for (i, got) in xf.chunks(3).enumerate() {
                let want = t(fine.vertex(i));
                for k in 0..3 {
                    assert!((got[k] - want[k]).abs() < 1e-10);
                }
            }
            assert!(p.diagnostics().row_sum_max_dev < 1e-10);
        }
    }

    #[test]
    fn identical_meshes_give_identity() {
        let m = synthesize_test_hierarchy(&unit_square(), 2, 0.1, 5)
            .unwrap()
            .level(1)
            .clone();
        let map = bind(&m, &m).unwrap();
        let p = build_phong(&map, &m, &m, 0.5).unwrap();
        let n = m.n_vertices();
        assert!((p.weights().to_dense() - nalgebra::DMatrix::identity(n, n)).amax() < 1e-12);
    }
}
