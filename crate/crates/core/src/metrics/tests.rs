use super::*;
use crate::binding::bind;
use crate::contact::{BarrierParams, Collider, ContactModel};
use crate::integrator::{direct_rollout, SolverSettings};
use crate::linalg::CsrMatrix;
use crate::materials::{Elasticity, MaterialModel, MaterialParams};
use crate::mesh::{lumped_mass, Density, SimplicialMesh};
use crate::progressive::{run_embedded_baseline, run_progressive, LevelSetup, ProgressiveConfig};
use crate::prolongation::{build_barycentric, ProlongationKind};
use crate::shapes::{grid_2d, hex_disk};

const G: [f64; 2] = [0.0, -9.81];

fn dynamics(
    mesh: &SimplicialMesh,
    level: usize,
    elastic: bool,
    plane: bool,
    gravity: [f64; 2],
) -> Dynamics {
    let mass = lumped_mass(mesh, &Density::Uniform(1000.0)).unwrap();
    let mut dy = Dynamics::new(2, mass, gravity.to_vec())
        .unwrap()
        .at_level(level);
    if elastic {
        let p = MaterialParams {
            model: MaterialModel::NeoHookean,
            young: 2e4,
            poisson: 0.4,
            density: 1000.0,
        };
        dy = dy.with_elasticity(Elasticity::uniform(mesh, &p, Exec::Sequential).unwrap());
    }
    if plane {
        let bp = BarrierParams {
            dhat: 0.01,
            kappa: 1e3,
            eps_v: 1e-3,
            mu: 0.0,
        };
        let col = Collider::half_plane(&[0.0, 1.0], 0.0, 0.0).unwrap();
        dy = dy
            .with_contact(ContactModel::new(mesh, vec![col], bp, false, Exec::Sequential).unwrap());
    }
    dy
}

/// Implicit Euler free fall in closed form: `v^t = t h g`, `x^t = x^0 + h² g t(t+1)/2`.
fn free_fall(x0: &[f64], h: f64, n: usize) -> Trajectory {
    let mut tr = Trajectory::default();
    for t in 0..=n {
        let s = h * h * (t * (t + 1)) as f64 / 2.0;
        tr.x.push(
            x0.iter()
                .enumerate()
                .map(|(j, v)| v + s * G[j % 2])
                .collect(),
        );
        tr.v.push((0..x0.len()).map(|j| t as f64 * h * G[j % 2]).collect());
    }
    tr
}

#[test]
fn free_fall_has_zero_continuity_error() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = dynamics(&mesh, 0, false, false, G);
    let tr = free_fall(mesh.rest_positions(), 0.01, 30);
    let rows = continuity_trace(&tr, &dy, 0.01, Momentum::Standard, Exec::Sequential).unwrap();
    assert_eq!(rows.len(), 29);
    for r in rows {
        assert!(r.e <= 1e-12, "t {}: e {}", r.t, r.e);
        assert!(r.e_hat > 0.0 && r.n >= 0.0);
    }
}

#[test]
fn equilibrium_has_zero_continuity_error() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = dynamics(&mesh, 0, true, false, [0.0, 0.0]);
    let x = mesh.rest_positions().to_vec();
    let tr = Trajectory {
        x: vec![x.clone(); 4],
        v: vec![vec![0.0; x.len()]; 4],
        reports: Vec::new(),
    };
    for r in continuity_trace(&tr, &dy, 0.01, Momentum::Standard, Exec::Sequential).unwrap() {
        assert_eq!(r.e, 0.0);
    }
}

#[test]
fn out_of_range_step_is_rejected() {
    let mesh = grid_2d(1, 1, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = dynamics(&mesh, 0, false, false, G);
    let tr = free_fall(mesh.rest_positions(), 0.01, 3);
    assert!(continuity_error(&tr, &dy, 0.01, 0, Momentum::Standard).is_err());
    assert!(continuity_error(&tr, &dy, 0.01, 3, Momentum::Standard).is_err());
}

fn ball_rollout(n: usize) -> (SimplicialMesh, Dynamics, Trajectory) {
    let mesh = hex_disk(3, 0.2, [0.0, 0.22]).unwrap();
    let dy = dynamics(&mesh, 0, true, true, G);
    let x0 = mesh.rest_positions().to_vec();
    let v0 = vec![0.0; x0.len()];
    let tr = direct_rollout(&dy, x0, v0, 0.01, n, &SolverSettings::default()).unwrap();
    (mesh, dy, tr)
}

#[test]
fn direct_rollout_normalizes_to_a_quarter() {
    let (_, dy, tr) = ball_rollout(20);
    let rows = continuity_trace(&tr, &dy, 0.01, Momentum::Standard, Exec::Sequential).unwrap();
    // steps solved to round-off sit on the ê floor and carry no signal
    let floor = 1e-20;
    assert!(rows.iter().filter(|r| r.e_hat > floor).count() >= 10);
    for r in rows.iter().filter(|r| r.e_hat > floor) {
        assert!((0.25 - 1e-6..=4.0).contains(&r.n), "t {}: n {}", r.t, r.n);
    }
}

#[test]
fn continuity_is_translation_invariant_and_mass_scale_free() {
    let (mesh, dy, tr) = ball_rollout(12);
    let base = continuity_error(&tr, &dy, 0.01, 6, Momentum::Standard).unwrap();
    assert!(base.e > 1e-14);
    let shift = |x: &Vec<f64>| {
        x.iter()
            .enumerate()
            .map(|(j, v)| v + if j % 2 == 0 { 0.5 } else { 0.0 })
            .collect()
    };
    let moved = Trajectory {
        x: tr.x.iter().map(shift).collect(),
        v: tr.v.clone(),
        reports: Vec::new(),
    };
    // no contact term: a horizontal shift keeps the plane distance
    let r = continuity_error(&moved, &dy, 0.01, 6, Momentum::Standard).unwrap();
    assert!((r.e - base.e).abs() <= 1e-6 * base.e);
    // scale mass and stiffness together on a contact-free level (barrier
    // forces would not scale)
    let p = MaterialParams {
        model: MaterialModel::NeoHookean,
        young: 6e4,
        poisson: 0.4,
        density: 3000.0,
    };
    let free_dy = dynamics(&mesh, 0, true, false, G);
    let mut free_heavy = free_dy.clone();
    free_heavy.mass = free_dy.mass.scaled(3.0);
    free_heavy.elasticity = Some(Elasticity::uniform(&mesh, &p, Exec::Sequential).unwrap());
    let a = continuity_error(&tr, &free_dy, 0.01, 10, Momentum::Standard).unwrap();
    let b = continuity_error(&tr, &free_heavy, 0.01, 10, Momentum::Standard).unwrap();
    assert!(a.e_hat > 1e-12);
    assert!((a.n - b.n).abs() <= 1e-9 * a.n);
}

fn disks() -> (Vec<SimplicialMesh>, ProlongationOperator) {
    let c = hex_disk(2, 0.2, [0.0, 0.22]).unwrap();
    let f = hex_disk(4, 0.2, [0.0, 0.22]).unwrap();
    let p = build_barycentric(&bind(&f, &c).unwrap(), &c).unwrap();
    (vec![c, f], p)
}

#[test]
fn embedded_trajectory_is_consistent() {
    let (m, p) = disks();
    let dy = dynamics(&m[0], 0, true, true, G);
    let x0 = m[0].rest_positions().to_vec();
    let coarse = direct_rollout(
        &dy,
        x0.clone(),
        vec![0.0; x0.len()],
        0.01,
        10,
        &SolverSettings::default(),
    )
    .unwrap();
    let fine = run_embedded_baseline(&coarse, &p, 2).unwrap();
    let proj = Projection::new(p.weights()).unwrap();
    for r in consistency_trace(&fine, &coarse, &proj, &dy.mass, 1, 2).unwrap() {
        assert!(r.d <= 1e-9, "t {}: d {}", r.t, r.d);
    }
}

#[test]
fn identity_consistency_is_mass_distance() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = dynamics(&mesh, 0, false, false, G);
    let id = CsrMatrix::identity(mesh.n_vertices());
    let proj = Projection::new(&id).unwrap();
    let a = mesh.rest_positions().to_vec();
    let b: Vec<f64> = a
        .iter()
        .enumerate()
        .map(|(j, v)| v + 0.01 * j as f64)
        .collect();
    let d = consistency_error(&b, &a, &proj, &dy.mass, 2).unwrap();
    let diff: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
    assert!((d - dy.mass.norm2(&diff)).abs() < 1e-12);
    let _ = ProlongationKind::Barycentric;
}

fn two_level(steps: usize) -> (SolutionGrid, Vec<Dynamics>, Vec<ProlongationOperator>) {
    let (m, p) = disks();
    let levels: Vec<LevelSetup> = m
        .iter()
        .enumerate()
        .map(|(l, mesh)| LevelSetup {
            dynamics: dynamics(mesh, l, true, true, G),
            x0: mesh.rest_positions().to_vec(),
            v0: vec![0.0; mesh.rest_positions().len()],
        })
        .collect();
    let cfg = ProgressiveConfig {
        h: 0.01,
        steps,
        penalty: 0.0,
        solver: SolverSettings::default(),
    };
    let ops = vec![p];
    let grid = run_progressive(&levels, &ops, &cfg).unwrap();
    (grid, levels.into_iter().map(|l| l.dynamics).collect(), ops)
}

#[test]
fn traces_have_expected_rows_and_reemit_identically() {
    let (grid, dys, ops) = two_level(6);
    let refs: Vec<&Dynamics> = dys.iter().collect();
    let (cont, cons) =
        grid_metrics(&grid, &refs, &ops, GridKind::Progressive, Exec::Sequential).unwrap();
    assert_eq!(cons.len(), 6);
    assert!(cons.iter().all(|r| r.level == 1 && r.d >= 0.0));
    assert_eq!(cont.len(), 2 * 5);
    let dir = tempfile::tempdir().unwrap();
    emit_traces(dir.path(), &cont, &cons).unwrap();
    let first = std::fs::read(dir.path().join("continuity.csv")).unwrap();
    let (cont2, cons2) =
        grid_metrics(&grid, &refs, &ops, GridKind::Progressive, Exec::Parallel).unwrap();
    emit_traces(dir.path(), &cont2, &cons2).unwrap();
    assert_eq!(
        first,
        std::fs::read(dir.path().join("continuity.csv")).unwrap()
    );
    let text = String::from_utf8(first).unwrap();
    assert!(text.starts_with("l,t,e,e_hat,n\n"));
}

#[test]
fn empty_grid_gives_header_only_files() {
    let (grid, dys, ops) = two_level(0);
    let refs: Vec<&Dynamics> = dys.iter().collect();
    let (cont, cons) =
        grid_metrics(&grid, &refs, &ops, GridKind::Progressive, Exec::Sequential).unwrap();
    assert!(cont.is_empty() && cons.is_empty());
    assert_eq!(continuity_csv(&cont), "l,t,e,e_hat,n\n");
    assert_eq!(consistency_csv(&cons), "l,t,d\n");
}

#[test]
fn center_of_mass_of_a_square() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = dynamics(&mesh, 0, false, false, G);
    let c = center_of_mass(mesh.rest_positions(), &dy.mass);
    assert!((c[0] - 0.5).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12);
}
