//! Biharmonic-style coordinates: `W = argmin ½ tr(WᵀAW)` subject to
//! `BW = I`, where row `i` of `B` holds the barycentric weights of coarse
//! vertex `i` inside its host fine element.
//!
//! `A` is the squared Laplacian restricted to interior rows,
//! `L_Iᵀ M_I⁻¹ L_I`, plus a gradient-jump term over interior facets,
//! `Σ_f (|e₁|+|e₂|)/(2h_f²) ‖∇u|e₁ − ∇u|e₂‖²` with `h_f` the distance between
//! the two element centroids. Boundary rows of the Laplacian are dropped
//! because they do not vanish on linear fields; the jump term removes the
//! harmonic functions from the kernel. The kernel of `A` is then exactly the
//! affine functions, which gives affine precision and a uniquely solvable
//! KKT system whenever `B` separates affine functions.

use nalgebra::DMatrix;

use super::{ProlongationKind, ProlongationOperator};
use crate::binding::BindingMap;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseLdlt, Triplets};
use crate::mesh::{Adjacency, BoundarySurface, SimplicialMesh};

/// Diagonal shift (relative to the largest diagonal of `A`) that makes the
/// KKT matrix quasi-definite for factorization.
const KKT_SHIFT: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BiharmonicSystem {
    /// Fine smoothness matrix, `n_fine × n_fine`.
    pub a: CsrMatrix,
    /// Interpolation matrix, `n_coarse × n_fine`.
    pub b: CsrMatrix,
}

/// Assemble `A` on `fine` and `B` from the coarse-into-fine binding.
pub fn biharmonic_system(
    fine: &SimplicialMesh,
    reverse_binding: &BindingMap,
) -> Result<BiharmonicSystem> {
    let d = fine.dim();
    let nf = fine.n_vertices();
    let k = d + 1;
    let grads: Vec<Vec<f64>> = (0..fine.n_elements())
        .map(|e| fine.shape_gradients(e))
        .collect();
    let vols: Vec<f64> = (0..fine.n_elements())
        .map(|e| fine.element_volume(e))
        .collect();

    let mut lap = Triplets::with_capacity(nf, nf, fine.n_elements() * k * k);
    let mut mass = vec![0.0; nf];
    for (e, el) in fine.elements().enumerate() {
        let g = &grads[e];
        for a in 0..k {
            mass[el[a]] += vols[e] / k as f64;
            for b in 0..k {
                let dot: f64 = (0..d).map(|c| g[a * d + c] * g[b * d + c]).sum();
                lap.push(el[a], el[b], vols[e] * dot);
            }
        }
    }
    let lap = lap.to_csr();
    let boundary = BoundarySurface::extract(fine)?;
    let mut scale: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    for v in boundary.vertices() {
        scale[v] = 0.0;
    }
    let s = lap.scale_rows(&scale);
    let mut a = Triplets::new(nf, nf);
    for (r, c, v) in s.transpose().matmul(&s).triplets() {
        a.push(r, c, v);
    }

    let adj = Adjacency::build(fine);
    for e1 in 0..fine.n_elements() {
        for &e2 in adj.element_element[e1].iter().filter(|&&e2| e2 > e1) {
            let c1 = fine.element_centroid(e1);
            let c2 = fine.element_centroid(e2);
            let h2: f64 = c1.iter().zip(&c2).map(|(x, y)| (x - y).powi(2)).sum();
            let w = (vols[e1] + vols[e2]) / (2.0 * h2);
            // jump coefficients per vertex of e1 ∪ e2, per coordinate
            let mut verts: Vec<(usize, Vec<f64>)> = Vec::with_capacity(k + 1);
            for (e, sign) in [(e1, 1.0), (e2, -1.0)] {
                for (j, &v) in fine.element(e).iter().enumerate() {
                    let g = &grads[e][j * d..(j + 1) * d];
                    match verts.iter_mut().find(|(u, _)| *u == v) {
                        Some((_, acc)) => acc.iter_mut().zip(g).for_each(|(a, gi)| *a += sign * gi),
                        None => verts.push((v, g.iter().map(|gi| sign * gi).collect())),
                    }
                }
            }
            for (vi, gi) in &verts {
                for (vj, gj) in &verts {
                    let dot: f64 = gi.iter().zip(gj).map(|(x, y)| x * y).sum();
                    a.push(*vi, *vj, w * dot);
                }
            }
        }
    }

    let rows = reverse_binding.complete()?;
    let mut b = Triplets::new(rows.len(), nf);
    for (i, bind) in rows.iter().enumerate() {
        for (&v, &w) in fine.element(bind.host).iter().zip(&bind.coords) {
            b.push(i, v, w);
        }
    }
    Ok(BiharmonicSystem {
        a: a.to_csr(),
        b: b.to_csr(),
    })
}

/// `max_k ‖A·u_k‖_∞` over the constant and coordinate fields `u_k` of the
/// fine rest shape.
pub fn affine_kernel_residual(a: &CsrMatrix, fine: &SimplicialMesh) -> f64 {
    let d = fine.dim();
    let x = fine.rest_positions();
    let mut worst = 0.0_f64;
    for k in 0..=d {
        let u: Vec<f64> = (0..fine.n_vertices())
            .map(|i| if k == d { 1.0 } else { x[i * d + k] })
            .collect();
        worst = worst.max(a.mul_vec(&u).iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    }
    worst
}

/// Solve the KKT system for `W` (`n_fine × n_coarse`).
pub fn solve_biharmonic(sys: &BiharmonicSystem, fine: &SimplicialMesh) -> Result<DMatrix<f64>> {
    let nf = sys.a.nrows();
    let nc = sys.b.nrows();
    check_rank(sys, fine)?;

    let amax = (0..nf).map(|i| sys.a.get(i, i).abs()).fold(0.0, f64::max);
    let inv = 1.0 / amax;
    let mut t = Triplets::new(nf + nc, nf + nc);
    for (r, c, v) in sys.a.triplets() {
        t.push(r, c, v * inv);
    }
    for (r, c, v) in sys.b.triplets() {
        t.push(nf + r, c, v);
        t.push(c, nf + r, v);
    }
    let kkt = t.to_csr();
    let shift: Vec<f64> = (0..nf + nc)
        .map(|i| if i < nf { KKT_SHIFT } else { -KKT_SHIFT })
        .collect();
    let perm = SparseLdlt::ordering(&kkt, 1);
    let factor = SparseLdlt::factor(&kkt, &perm, Some(&shift))?;

    let mut w = DMatrix::zeros(nf, nc);
    let mut worst = 0.0_f64;
    for j in 0..nc {
        let mut rhs = vec![0.0; nf + nc];
        rhs[nf + j] = 1.0;
        let (sol, res) = factor.solve_refined(&kkt, &rhs, 50);
        worst = worst.max(res);
        for i in 0..nf {
            w[(i, j)] = sol[i];
        }
    }
    if !(worst <= 1e-9) {
        return Err(Error::Singular(format!(
            "KKT refinement stalled at residual {worst:e}"
        )));
    }
    Ok(w)
}

fn check_rank(sys: &BiharmonicSystem, fine: &SimplicialMesh) -> Result<()> {
    let d = fine.dim();
    let nc = sys.b.nrows();
    // B applied to the affine basis must have full column rank
    let x = fine.rest_positions();
    let mut basis = DMatrix::zeros(nc, d + 1);
    for k in 0..=d {
        let u: Vec<f64> = (0..fine.n_vertices())
            .map(|i| if k == d { 1.0 } else { x[i * d + k] })
            .collect();
        for (i, v) in sys.b.mul_vec(&u).into_iter().enumerate() {
            basis[(i, k)] = v;
        }
    }
    let sv = basis.singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < d + 1 {
        return Err(Error::RankDeficient {
            what: "interpolation matrix on affine functions".into(),
            rank,
            expected: d + 1,
        });
    }
    // and full row rank
    let bbt = sys.b.matmul(&sys.b.transpose());
    let factor = SparseLdlt::new(&bbt, 1).map_err(|_| Error::RankDeficient {
        what: "interpolation matrix (zero pivot in BBᵀ)".into(),
        rank: nc.saturating_sub(1),
        expected: nc,
    })?;
    let piv = factor.pivots();
    let pmax = piv.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let rank = piv.iter().filter(|&&p| p > 1e-12 * pmax).count();
    if rank < nc {
        return Err(Error::RankDeficient {
            what: "interpolation matrix rows".into(),
            rank,
            expected: nc,
        });
    }
    Ok(())
}

/// Build the operator from a binding of the coarse vertices into the fine
/// mesh (roles of the two levels swapped).
pub fn build_biharmonic(
    fine: &SimplicialMesh,
    coarse: &SimplicialMesh,
    reverse_binding: &BindingMap,
) -> Result<ProlongationOperator> {
    if reverse_binding.len() != coarse.n_vertices() {
        return Err(Error::SizeMismatch {
            what: "reverse binding",
            expected: coarse.n_vertices(),
            found: reverse_binding.len(),
        });
    }
    let sys = biharmonic_system(fine, reverse_binding)?;
    let w = solve_biharmonic(&sys, fine)?;
    let mut t = Triplets::new(w.nrows(), w.ncols());
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            if w[(i, j)] != 0.0 {
                t.push(i, j, w[(i, j)]);
            }
        }
    }
    Ok(ProlongationOperator::new(
        t.to_csr(),
        ProlongationKind::Biharmonic,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binding::bind;
    use crate::hierarchy::synthesize_test_hierarchy;
    use crate::mesh::fixtures::*;
    use nalgebra::SymmetricEigen;

    fn dense_kkt(sys: &BiharmonicSystem) -> DMatrix<f64> {
        let (nf, nc) = (sys.a.nrows(), sys.b.nrows());
        let a = sys.a.to_dense();
        let b = sys.b.to_dense();
        let mut k = DMatrix::zeros(nf + nc, nf + nc);
        k.view_mut((0, 0), (nf, nf)).copy_from(&a);
        k.view_mut((nf, 0), (nc, nf)).copy_from(&b);
        k.view_mut((0, nf), (nf, nc)).copy_from(&b.transpose());
        let mut rhs = DMatrix::zeros(nf + nc, nc);
        rhs.view_mut((nf, 0), (nc, nc)).fill_with_identity();
        k.lu().solve(&rhs).unwrap().rows(0, nf).into_owned()
    }

    #[test]
    fn small_fixture_matches_dense_oracle() {
        let h = synthesize_test_hierarchy(&unit_square(), 3, 0.2, 3).unwrap();
        let (coarse, fine) = (h.level(1), h.level(2));
        let rev = bind(coarse, fine).unwrap();
        let sys = biharmonic_system(fine, &rev).unwrap();
        let w = solve_biharmonic(&sys, fine).unwrap();
        let oracle = dense_kkt(&sys);
        assert!((&w - &oracle).amax() < 1e-8);
        let bw = sys.b.to_dense() * &w;
        assert!((bw - DMatrix::identity(coarse.n_vertices(), coarse.n_vertices())).amax() < 1e-8);
    }

    #[test]
    fn a_is_psd_with_affine_kernel() {
        let h = synthesize_test_hierarchy(&unit_tet(), 2, 0.1, 3).unwrap();
        let rev = bind(h.level(0), h.level(1)).unwrap();
        let sys = biharmonic_system(h.level(1), &rev).unwrap();
        let a = sys.a.to_dense();
        assert!((&a - a.transpose()).amax() < 1e-9 * a.amax());
        let eig = SymmetricEigen::new(a.clone());
        let norm = eig.eigenvalues.amax();
        assert!(eig.eigenvalues.min() >= -1e-9 * norm);
        // exactly d + 1 near-zero eigenvalues
        assert_eq!(
            eig.eigenvalues
                .iter()
                .filter(|&&l| l.abs() < 1e-9 * norm)
                .count(),
            4
        );
        assert!(affine_kernel_residual(&sys.a, h.level(1)) < 1e-9 * norm);
    }

    #[test]
    fn coincident_vertices_give_indicator_rows() {
        let h = synthesize_test_hierarchy(&unit_square(), 2, 0.0, 0).unwrap();
        let (coarse, fine) = (h.level(0), h.level(1));
        let rev = bind(coarse, fine).unwrap();
        let p = build_biharmonic(fine, coarse, &rev).unwrap();
        // red refinement keeps the coarse vertices first with the same indices
        let w = p.weights().to_dense();
        for i in 0..coarse.n_vertices() {
            for j in 0..coarse.n_vertices() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((w[(i, j)] - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn affine_precision() {
        let h = synthesize_test_hierarchy(&unit_square(), 3, 0.25, 8).unwrap();
        let (coarse, fine) = (h.level(1), h.level(2));
        let p = build_biharmonic(fine, coarse, &bind(coarse, fine).unwrap()).unwrap();
        let map = |p: &[f64]| [0.3 * p[0] - 1.2 * p[1] + 0.5, 2.0 * p[0] + 0.1 * p[1] - 3.0];
        let xc: Vec<f64> = coarse.rest_positions().chunks(2).flat_map(map).collect();
        let xf = p.prolong(&xc, 2).unwrap();
        for (i, got) in xf.chunks(2).enumerate() {
            let want = map(fine.vertex(i));
            assert!((got[0] - want[0]).abs() < 1e-8 && (got[1] - want[1]).abs() < 1e-8);
        }
        assert!(p.diagnostics().row_sum_max_dev < 1e-10);
    }
}
