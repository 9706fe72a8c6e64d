//! Small geometric kernels on flat coordinate slices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Barycentric coordinates of `p` with respect to the simplex with vertex
/// coordinates `verts` (d+1 points of dimension d). Coordinates may be
/// negative (extrapolation) and always sum to one.
pub fn barycentric(verts: &[&[f64]], p: &[f64]) -> Result<Vec<f64>> {
    let d = p.len();
    if verts.len() != d + 1 {
        return Err(Error::SizeMismatch {
            what: "simplex vertices",
            expected: d + 1,
            found: verts.len(),
        });
    }
    let m = DMatrix::from_fn(d, d, |r, c| verts[c + 1][r] - verts[0][r]);
    let rhs = DVector::from_fn(d, |r, _| p[r] - verts[0][r]);
    let lu = m.lu();
    let sol = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("degenerate element in barycentric solve".into()))?;
    let mut w = Vec::with_capacity(d + 1);
    w.push(1.0 - sol.iter().sum::<f64>());
    w.extend(sol.iter());
    Ok(w)
}

/// Closest point on a simplex of 1..=3 vertices. Returns the barycentric
/// weights over the given vertices (zero on inactive ones).
pub fn closest_on_simplex(p: &[f64], verts: &[&[f64]]) -> Vec<f64> {
    match verts.len() {
        1 => vec![1.0],
        2 => {
            let e = sub(verts[1], verts[0]);
            let ee = dot(&e, &e);
            let t = if ee > 0.0 {
                (dot(&sub(p, verts[0]), &e) / ee).clamp(0.0, 1.0)
            } else {
                0.0
            };
            vec![1.0 - t, t]
        }
        3 => closest_on_triangle(p, verts[0], verts[1], verts[2]),
        n => panic!("closest_on_simplex: unsupported simplex of {n} vertices"),
    }
}

// Region-based closest point on a triangle (Ericson, Real-Time Collision Detection 5.1.5).
fn closest_on_triangle(p: &[f64], a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ap = sub(p, a);
    let d1 = dot(&ab, &ap);
    let d2 = dot(&ac, &ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return vec![1.0, 0.0, 0.0];
    }
    let bp = sub(p, b);
    let d3 = dot(&ab, &bp);
    let d4 = dot(&ac, &bp);
    if d3 >= 0.0 && d4 <= d3 {
        return vec![0.0, 1.0, 0.0];
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return vec![1.0 - v, v, 0.0];
    }
    let cp = sub(p, c);
    let d5 = dot(&ab, &cp);
    let d6 = dot(&ac, &cp);
    if d6 >= 0.0 && d5 <= d6 {
        return vec![0.0, 0.0, 1.0];
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return vec![1.0 - w, 0.0, w];
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return vec![0.0, 1.0 - w, w];
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    vec![1.0 - v - w, v, w]
}

pub(crate) fn combine(verts: &[&[f64]], w: &[f64]) -> Vec<f64> {
    let d = verts[0].len();
    let mut out = vec![0.0; d];
    for (v, &wi) in verts.iter().zip(w) {
        for k in 0..d {
            out[k] += wi * v[k];
        }
    }
    out
}

/// Distance from `p` to a simplex (segment or triangle).
pub fn point_simplex_distance(p: &[f64], verts: &[&[f64]]) -> f64 {
    let w = closest_on_simplex(p, verts);
    norm(&sub(p, &combine(verts, &w)))
}

/// Parameter `t ≥ 0` along `origin + t * dir` where the ray meets the facet
/// (segment in 2D, triangle in 3D), or `None`. `tol` widens the facet
/// relative to its size so grazing hits register on both neighbours.
pub fn ray_facet(origin: &[f64], dir: &[f64], facet: &[&[f64]], tol: f64) -> Option<f64> {
    match origin.len() {
        2 => {
            let (a, b) = (facet[0], facet[1]);
            let e = [b[0] - a[0], b[1] - a[1]];
            let denom = dir[0] * e[1] - dir[1] * e[0];
            let scale = (e[0].abs() + e[1].abs()) * (dir[0].abs() + dir[1].abs());
            if denom.abs() <= 1e-14 * scale {
                return None;
            }
            let w = [a[0] - origin[0], a[1] - origin[1]];
            let t = (w[0] * e[1] - w[1] * e[0]) / denom;
            let s = (w[0] * dir[1] - w[1] * dir[0]) / denom;
            (t >= 0.0 && s >= -tol && s <= 1.0 + tol).then_some(t)
        }
        _ => {
            let (a, b, c) = (facet[0], facet[1], facet[2]);
            let e1 = sub(b, a);
            let e2 = sub(c, a);
            let pv = cross(dir, &e2);
            let det = dot(&e1, &pv);
            let scale = norm(&e1) * norm(&e2) * norm(dir);
            if det.abs() <= 1e-14 * scale {
                return None;
            }
            let inv = 1.0 / det;
            let tv = sub(origin, a);
            let u = dot(&tv, &pv) * inv;
            let qv = cross(&tv, &e1);
            let v = dot(dir, &qv) * inv;
            let t = dot(&e2, &qv) * inv;
            (t >= 0.0 && u >= -tol && v >= -tol && u + v <= 1.0 + tol).then_some(t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_tet_extrapolation() {
        let v: [&[f64]; 4] = [&[0., 0., 0.], &[1., 0., 0.], &[0., 1., 0.], &[0., 0., 1.]];
        let w = barycentric(&v, &[1., 1., 1.]).unwrap();
        for (a, b) in w.iter().zip([-2.0, 1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn triangle_regions() {
        let (a, b, c): (&[f64], &[f64], &[f64]) = (&[0., 0., 0.], &[1., 0., 0.], &[0., 1., 0.]);
        let d = point_simplex_distance(&[0.25, 0.25, 2.0], &[a, b, c]);
        assert!((d - 2.0).abs() < 1e-15);
        let d = point_simplex_distance(&[-1.0, -1.0, 0.0], &[a, b, c]);
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        let d = point_simplex_distance(&[0.5, -3.0, 4.0], &[a, b, c]);
        assert!((d - 5.0).abs() < 1e-15);
    }

    #[test]
    fn ray_hits() {
        let t = ray_facet(
            &[0.2, 0.2, -1.0],
            &[0., 0., 1.],
            &[&[0., 0., 0.], &[1., 0., 0.], &[0., 1., 0.]],
            1e-12,
        );
        assert_eq!(t, Some(1.0));
        let t = ray_facet(&[0.5, -1.0], &[0., 2.], &[&[0., 0.], &[1., 0.]], 1e-12);
        assert_eq!(t, Some(0.5));
        assert!(ray_facet(&[0.5, 1.0], &[0., 1.], &[&[0., 0.], &[1., 0.]], 1e-12).is_none());
    }
}
