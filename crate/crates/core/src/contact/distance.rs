//! Unsigned point-simplex distance with first and second derivatives.
//!
//! The squared distance `s = min_β ‖p − a₀ − Σ βⱼ(aⱼ − a₀)‖²` is evaluated on
//! the face that holds the closest point. On that face it is a value function
//! of an unconstrained least-squares problem, so with `r` the residual,
//! `J = [I, −(1 − Σβ)I, −β₁I, …]` and `E = [a₁ − a₀, …]`:
//!
//! ```text
//! ∇s  = 2 Jᵀ r
//! ∇²s = s_xx − s_xβ s_ββ⁻¹ s_βx,   s_xx = 2 JᵀJ,   s_ββ = 2 EᵀE,
//! s_xβⱼ = −2 Jᵀ eⱼ + 2 r (block a₀) − 2 r (block aⱼ).
//! ```

use nalgebra::{DMatrix, DVector};

use crate::geom;

/// Distance and derivatives with respect to `[p, v₀, v₁, …]` (all simplex
/// vertices, inactive ones get zero blocks).
#[derive(Debug, Clone)]
pub struct DistanceDerivs {
    pub distance: f64,
    /// Closest-point weights over the simplex vertices.
    pub weights: Vec<f64>,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

pub fn point_simplex(p: &[f64], verts: &[&[f64]], want_hessian: bool) -> DistanceDerivs {
    let d = p.len();
    let nv = verts.len();
    let n = d * (nv + 1);
    let weights = geom::closest_on_simplex(p, verts);
    let active: Vec<usize> = (0..nv).filter(|&j| weights[j] != 0.0).collect();
    let active = if active.is_empty() { vec![0] } else { active };
    let a: Vec<&[f64]> = active.iter().map(|&j| verts[j]).collect();
    let k = a.len();
    let beta: Vec<f64> = active[1..].iter().map(|&j| weights[j]).collect();
    let closest = geom::combine(verts, &weights);
    let r = DVector::from_iterator(d, p.iter().zip(&closest).map(|(x, c)| x - c));
    let s = r.norm_squared();
    let dist = s.sqrt();

    // coefficient of each active block in r = Σ c_b x_b
    let mut coef = vec![1.0];
    coef.push(-(1.0 - beta.iter().sum::<f64>()));
    coef.extend(beta.iter().map(|b| -b));
    // block index of local block b in the full layout
    let block = |b: usize| if b == 0 { 0 } else { 1 + active[b - 1] };

    let mut gs = DVector::zeros(n);
    for (b, &c) in coef.iter().enumerate() {
        for i in 0..d {
            gs[block(b) * d + i] = 2.0 * c * r[i];
        }
    }
    let gradient = &gs / (2.0 * dist);

    let hessian = if want_hessian {
        let nb = k + 1;
        let mut hs = DMatrix::zeros(n, n);
        for (b1, &c1) in coef.iter().enumerate() {
            for (b2, &c2) in coef.iter().enumerate() {
                for i in 0..d {
                    hs[(block(b1) * d + i, block(b2) * d + i)] += 2.0 * c1 * c2;
                }
            }
        }
        if k > 1 {
            let m = k - 1;
            let e: Vec<DVector<f64>> = (1..k)
                .map(|j| DVector::from_iterator(d, a[j].iter().zip(a[0]).map(|(x, y)| x - y)))
                .collect();
            let sbb = DMatrix::from_fn(m, m, |i, j| 2.0 * e[i].dot(&e[j]));
            let mut sxb = DMatrix::<f64>::zeros(n, m);
            for j in 0..m {
                for (b, &c) in coef.iter().enumerate().take(nb) {
                    for i in 0..d {
                        sxb[(block(b) * d + i, j)] += -2.0 * c * e[j][i];
                    }
                }
                for i in 0..d {
                    sxb[(block(1) * d + i, j)] += 2.0 * r[i];
                    sxb[(block(j + 2) * d + i, j)] -= 2.0 * r[i];
                }
            }
            if let Some(inv) = sbb.try_inverse() {
                hs -= &sxb * inv * sxb.transpose();
            }
        }
        hs / (2.0 * dist) - &gs * gs.transpose() / (4.0 * dist * s)
    } else {
        DMatrix::zeros(0, 0)
    };
    DistanceDerivs {
        distance: dist,
        weights,
        gradient,
        hessian,
    }
}
