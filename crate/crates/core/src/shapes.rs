//! Procedural meshes used by the shipped scenes and the test fixtures.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::mesh::SimplicialMesh;

/// Triangulated rectangle `[lo, hi]` with `nx × ny` cells, each split along
/// alternating diagonals.
pub fn grid_2d(nx: usize, ny: usize, lo: [f64; 2], hi: [f64; 2]) -> Result<SimplicialMesh> {
    masked_grid_2d(nx, ny, lo, hi, |_, _| true)
}

/// Like [`grid_2d`] but only cells `(i, j)` with `keep(i, j)` are meshed.
/// Unused lattice vertices are dropped and the rest renumbered in
/// row-major order.
pub fn masked_grid_2d(
    nx: usize,
    ny: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    keep: impl Fn(usize, usize) -> bool,
) -> Result<SimplicialMesh> {
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut tris = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if !keep(i, j) {
                continue;
            }
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            if (i + j) % 2 == 0 {
                tris.extend_from_slice(&[a, b, c, a, c, d]);
            } else {
                tris.extend_from_slice(&[a, b, d, b, c, d]);
            }
        }
    }
    let dx = (hi[0] - lo[0]) / nx as f64;
    let dy = (hi[1] - lo[1]) / ny as f64;
    compact(2, tris, |v| {
        let (i, j) = (v % (nx + 1), v / (nx + 1));
        vec![lo[0] + i as f64 * dx, lo[1] + j as f64 * dy]
    })
}

/// Box `[lo, hi]` with `n[0] × n[1] × n[2]` cubes, six tetrahedra per cube
/// sharing the main diagonal (conforming across cubes).
pub fn grid_3d(n: [usize; 3], lo: [f64; 3], hi: [f64; 3]) -> Result<SimplicialMesh> {
    let id = |i: usize, j: usize, k: usize| (k * (n[1] + 1) + j) * (n[0] + 1) + i;
    let mut tets = Vec::new();
    // Permutations of the axes; each gives one path from corner 000 to 111.
    const PATHS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                for path in PATHS {
                    let mut c = [i, j, k];
                    tets.push(id(c[0], c[1], c[2]));
                    for axis in path {
                        c[axis] += 1;
                        tets.push(id(c[0], c[1], c[2]));
                    }
                }
            }
        }
    }
    let nv = (n[0] + 1) * (n[1] + 1) * (n[2] + 1);
    let mut rest = Vec::with_capacity(3 * nv);
    for k in 0..=n[2] {
        for j in 0..=n[1] {
            for i in 0..=n[0] {
                for (a, idx) in [i, j, k].into_iter().enumerate() {
                    rest.push(lo[a] + (hi[a] - lo[a]) * idx as f64 / n[a] as f64);
                }
            }
        }
    }
    Ok(SimplicialMesh::new(3, rest, tets, 0)?.0)
}

/// Disk of radius `radius` meshed from a triangular lattice hexagon with
/// `rings` rings (1 + 3R(R+1) vertices, 6R² triangles), each hexagonal
/// ring mapped radially onto a circle.
pub fn hex_disk(rings: usize, radius: f64, center: [f64; 2]) -> Result<SimplicialMesh> {
    let r = rings as i64;
    let inside = |q: i64, s: i64| q.abs() <= r && s.abs() <= r && (q + s).abs() <= r;
    let mut index = BTreeMap::new();
    let mut rest = Vec::new();
    for s in -r..=r {
        for q in -r..=r {
            if !inside(q, s) {
                continue;
            }
            index.insert((q, s), index.len());
            let x = q as f64 + 0.5 * s as f64;
            let y = s as f64 * 3f64.sqrt() / 2.0;
            let ring = q.abs().max(s.abs()).max((q + s).abs());
            let scale = if ring == 0 {
                0.0
            } else {
                radius * ring as f64 / rings as f64 / x.hypot(y)
            };
            rest.push(center[0] + x * scale);
            rest.push(center[1] + y * scale);
        }
    }
    let mut tris = Vec::new();
    for s in -r..r {
        for q in -r..=r {
            let up = [(q, s), (q + 1, s), (q, s + 1)];
            let down = [(q + 1, s), (q + 1, s + 1), (q, s + 1)];
            for tri in [up, down] {
                if tri.iter().all(|&(a, b)| inside(a, b)) {
                    tris.extend(tri.iter().map(|k| index[k]));
                }
            }
        }
    }
    Ok(SimplicialMesh::new(2, rest, tris, 0)?.0)
}

/// U-shaped domain on a lattice of spacing `cell`: a 3.2 × 1 base with a
/// 1.4-wide left arm up to `left_top`, a 1.4-wide right arm up to
/// `right_top`, and a 0.4-wide gap between them. `cell` must divide 0.2.
pub fn u_shape(cell: f64, left_top: f64, right_top: f64) -> Result<SimplicialMesh> {
    let nx = (3.2 / cell).round() as usize;
    let ny = (left_top.max(right_top) / cell).round() as usize;
    masked_grid_2d(nx, ny, [0.0, 0.0], [3.2, ny as f64 * cell], |i, j| {
        let (cx, cy) = ((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
        cy < 1.0 || (cx < 1.4 && cy < left_top) || (cx > 1.8 && cy < right_top)
    })
}

/// Coarse/fine pair on the U-shaped domain (arms up to 3.0): the fine level
/// has half the lattice spacing and one inner-face vertex of the left arm
/// pushed 0.25 into the 0.4-wide gap, so it sits closer to the right arm.
pub fn u_fixture() -> Result<(SimplicialMesh, SimplicialMesh)> {
    let coarse = u_shape(0.2, 3.0, 3.0)?;
    let fine = u_shape(0.1, 3.0, 3.0)?;
    let bulge = (0..fine.n_vertices())
        .min_by(|&a, &b| {
            let da = (fine.vertex(a)[0] - 1.4).hypot(fine.vertex(a)[1] - 2.5);
            let db = (fine.vertex(b)[0] - 1.4).hypot(fine.vertex(b)[1] - 2.5);
            da.total_cmp(&db)
        })
        .expect("non-empty");
    let mut x = fine.rest_positions().to_vec();
    x[2 * bulge] = 1.65;
    let fine = fine.with_rest_positions(x)?;
    Ok((coarse, fine))
}

/// Rectangle `width × height` with `slits` one-cell-wide vertical slots cut
/// down from the top edge through `depth` of the height. Lattice spacing is
/// `width / nx`.
pub fn slit_array(
    nx: usize,
    width: f64,
    height: f64,
    slits: usize,
    depth: f64,
) -> Result<SimplicialMesh> {
    let cell = width / nx as f64;
    let ny = (height / cell).round().max(1.0) as usize;
    let period = nx / (slits + 1);
    let cut_from = ((1.0 - depth) * ny as f64).round() as usize;
    masked_grid_2d(nx, ny, [0.0, 0.0], [width, ny as f64 * cell], |i, j| {
        let in_slit = (1..=slits).any(|s| i == s * period);
        !(in_slit && j >= cut_from)
    })
}

/// Comb of `spikes` triangular teeth over `[x0, x1]` standing on a slab:
/// tips reach `tip_y`, valleys sit at `base_y`, the slab bottom at
/// `base_y - 0.5`.
pub fn spike_collider(
    spikes: usize,
    x0: f64,
    x1: f64,
    base_y: f64,
    tip_y: f64,
) -> Result<SimplicialMesh> {
    let w = (x1 - x0) / spikes as f64;
    let bottom = base_y - 0.5;
    let mut rest: Vec<f64> = Vec::new();
    let mut tris = Vec::new();
    let mut canon: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut vid = |rest: &mut Vec<f64>, x: f64, y: f64| {
        let key = ((x * 1e9).round() as i64, (y * 1e9).round() as i64);
        *canon.entry(key).or_insert_with(|| {
            rest.extend_from_slice(&[x, y]);
            rest.len() / 2 - 1
        })
    };
    for s in 0..spikes {
        let a = x0 + s as f64 * w;
        let v = [
            vid(&mut rest, a, bottom),
            vid(&mut rest, a + w, bottom),
            vid(&mut rest, a + w, base_y),
            vid(&mut rest, a, base_y),
            vid(&mut rest, a + 0.5 * w, tip_y),
        ];
        tris.extend_from_slice(&[v[0], v[1], v[2], v[0], v[2], v[3], v[3], v[2], v[4]]);
    }
    Ok(SimplicialMesh::new(2, rest, tris, 0)?.0)
}

/// Keep only referenced lattice vertices, renumbered in increasing order.
fn compact(
    dim: usize,
    elements: Vec<usize>,
    pos: impl Fn(usize) -> Vec<f64>,
) -> Result<SimplicialMesh> {
    let mut used = elements.clone();
    used.sort_unstable();
    used.dedup();
    let map: BTreeMap<usize, usize> = used.iter().enumerate().map(|(n, &o)| (o, n)).collect();
    let rest = used.iter().flat_map(|&v| pos(v)).collect();
    let elements = elements.into_iter().map(|v| map[&v]).collect();
    Ok(SimplicialMesh::new(dim, rest, elements, 0)?.0)
}
