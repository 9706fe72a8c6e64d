use super::*;
use crate::contact::{BarrierParams, Collider};
use crate::materials::{MaterialModel, MaterialParams};
use crate::mesh::{lumped_mass, Density, SimplicialMesh};
use crate::par::Exec;
use crate::shapes::{grid_2d, hex_disk};

const G: [f64; 2] = [0.0, -9.81];

fn free(mesh: &SimplicialMesh, gravity: [f64; 2]) -> Dynamics {
    let mass = lumped_mass(mesh, &Density::Uniform(1000.0)).unwrap();
    Dynamics::new(2, mass, gravity.to_vec()).unwrap()
}

fn elastic(mesh: &SimplicialMesh, model: MaterialModel, exec: Exec) -> Elasticity {
    let p = MaterialParams {
        model,
        young: 2e4,
        poisson: 0.4,
        density: 1000.0,
    };
    Elasticity::uniform(mesh, &p, exec).unwrap()
}

fn barrier() -> BarrierParams {
    BarrierParams {
        dhat: 0.01,
        kappa: 1e3,
        eps_v: 1e-3,
        mu: 0.0,
    }
}

fn ball_on_plane(exec: Exec) -> (SimplicialMesh, Dynamics) {
    let mesh = hex_disk(3, 0.2, [0.0, 0.25]).unwrap();
    let plane = Collider::half_plane(&[0.0, 1.0], 0.0, 0.3).unwrap();
    let contact = ContactModel::new(&mesh, vec![plane], barrier(), false, exec).unwrap();
    let dy = free(&mesh, G)
        .with_elasticity(elastic(&mesh, MaterialModel::NeoHookean, exec))
        .with_contact(contact);
    (mesh, dy)
}

#[test]
fn rest_without_forces_stays_put() {
    let mesh = grid_2d(3, 3, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = free(&mesh, [0.0, 0.0]).with_elasticity(elastic(
        &mesh,
        MaterialModel::StVk,
        Exec::Sequential,
    ));
    let x = mesh.rest_positions().to_vec();
    let (next, report) =
        advance(&dy, 0.01, &x, x.clone(), None, &SolverSettings::default()).unwrap();
    assert_eq!(next, x);
    assert_eq!(report.iterations, 0);
}

#[test]
fn value_and_gradient_vanish_at_target() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = free(&mesh, [0.0, 0.0]);
    let x = mesh.rest_positions().to_vec();
    let p = StepProblem::new(&dy, 0.01, &x, x.clone()).unwrap();
    assert_eq!(p.value(&x), 0.0);
    assert!(p.gradient(&x).iter().all(|&g| g == 0.0));
}

#[test]
fn gravity_gradient_closed_form() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = free(&mesh, G);
    let h = 0.01;
    let x0 = mesh.rest_positions().to_vec();
    let xt: Vec<f64> = x0.iter().map(|v| v + 0.1).collect();
    let p = StepProblem::new(&dy, h, &x0, xt.clone()).unwrap();
    let y: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, v)| v + 0.01 * i as f64)
        .collect();
    let g = p.gradient(&y);
    for (j, gj) in g.iter().enumerate() {
        let m = dy.mass.0[j / 2];
        let expect = m * (y[j] - xt[j]) / (h * h) - m * G[j % 2];
        assert!((gj - expect).abs() < 1e-9 * expect.abs().max(1.0));
    }
}

#[test]
fn free_fall_takes_one_newton_step() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = free(&mesh, G);
    let h = 0.01;
    let x = mesh.rest_positions().to_vec();
    let xt: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, v)| v + if i % 2 == 1 { -0.02 } else { 0.0 })
        .collect();
    let (next, report) = advance(&dy, h, &x, xt.clone(), None, &SolverSettings::default()).unwrap();
    assert_eq!(report.iterations, 1);
    for j in 0..x.len() {
        assert!((next[j] - (xt[j] + h * h * G[j % 2])).abs() < 1e-12);
    }
}

#[test]
fn free_fall_velocity_recurrence() {
    let mesh = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let dy = free(&mesh, G);
    let h = 0.01;
    let n = mesh.rest_positions().len();
    let traj = direct_rollout(
        &dy,
        mesh.rest_positions().to_vec(),
        vec![0.0; n],
        h,
        3,
        &SolverSettings::default(),
    )
    .unwrap();
    for t in 0..=3 {
        for j in 0..n {
            assert!((traj.v[t][j] - t as f64 * h * G[j % 2]).abs() < 1e-10);
        }
    }
}

fn fd_check(p: &StepProblem, x: &[f64]) {
    let g = p.gradient(x);
    let mask = p.dynamics.fixed_mask();
    let scale = g.iter().fold(1e-6_f64, |a, v| a.max(v.abs()));
    for j in 0..x.len() {
        if mask[j] {
            assert_eq!(g[j], 0.0);
            continue;
        }
        let mut a = x.to_vec();
        let mut b = x.to_vec();
        a[j] += 1e-7;
        b[j] -= 1e-7;
        let fd = (p.value(&a) - p.value(&b)) / 2e-7;
        assert!(
            (g[j] - fd).abs() < 1e-4 * scale,
            "dof {j}: {} vs {fd}",
            g[j]
        );
    }
}

#[test]
fn full_scene_gradient_matches_finite_differences() {
    let (mesh, dy) = ball_on_plane(Exec::Sequential);
    let dy = dy.with_fixed(vec![0]).unwrap();
    let h = 0.01;
    // push the ball into the barrier zone, lag friction there, then slide
    let x0: Vec<f64> = mesh
        .rest_positions()
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 1 { v - 0.046 } else { *v })
        .collect();
    assert!(dy.min_distance(&x0) > 0.0 && dy.min_distance(&x0) < 0.01);
    let xt: Vec<f64> = x0.iter().map(|v| v - 0.003).collect();
    let mut p = StepProblem::new(&dy, h, &x0, xt).unwrap();
    assert!(!p.friction.is_empty());
    p = p.with_penalty(Some(Penalty {
        weight: 0.2,
        target: mesh.rest_positions().to_vec(),
    }));
    let x: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, v)| v + 1e-3 * ((i * 7 % 5) as f64 - 2.0) * 1e-1)
        .collect();
    fd_check(&p, &x);
}

#[test]
fn ball_drop_stays_feasible_with_monotone_energy() {
    let (mesh, dy) = ball_on_plane(Exec::Sequential);
    let n = mesh.rest_positions().len();
    let traj = direct_rollout(
        &dy,
        mesh.rest_positions().to_vec(),
        vec![0.0; n],
        0.01,
        40,
        &SolverSettings::default(),
    )
    .unwrap();
    let mut touched = false;
    for (t, r) in traj.reports.iter().enumerate() {
        assert!(r.min_distance > 0.0, "step {t}");
        touched |= r.min_distance < 0.01;
        for w in r.energies.windows(2) {
            assert!(w[1] <= w[0], "step {t}: energy rose {} -> {}", w[0], w[1]);
        }
    }
    assert!(touched, "ball never reached the plane");
}

#[test]
fn dirichlet_vertices_are_exact() {
    let mesh = grid_2d(4, 2, [0.0, 0.0], [1.0, 0.25]).unwrap();
    let dy = free(&mesh, G)
        .with_elasticity(elastic(
            &mesh,
            MaterialModel::Corotational,
            Exec::Sequential,
        ))
        .with_fixed(vec![0, 5])
        .unwrap();
    let n = mesh.rest_positions().len();
    let traj = direct_rollout(
        &dy,
        mesh.rest_positions().to_vec(),
        vec![0.0; n],
        0.01,
        10,
        &SolverSettings::default(),
    )
    .unwrap();
    for x in &traj.x {
        for v in [0usize, 5] {
            assert_eq!(&x[2 * v..2 * v + 2], mesh.vertex(v));
        }
    }
    // the free end sags
    assert!(traj.x[10][2 * 4 + 1] < -1e-4);
}

#[test]
fn rollouts_are_deterministic_across_policies() {
    let run = |exec| {
        let (mesh, dy) = ball_on_plane(exec);
        let n = mesh.rest_positions().len();
        direct_rollout(
            &dy,
            mesh.rest_positions().to_vec(),
            vec![0.0; n],
            0.01,
            25,
            &SolverSettings::default(),
        )
        .unwrap()
    };
    let a = run(Exec::Sequential);
    assert_eq!(a, run(Exec::Sequential));
    assert_eq!(a, run(Exec::Parallel));
}

#[test]
fn max_iters_exceeded_is_an_error() {
    let (mesh, dy) = ball_on_plane(Exec::Sequential);
    let x = mesh.rest_positions().to_vec();
    let xt: Vec<f64> = x.iter().map(|v| v - 0.1).collect();
    let settings = SolverSettings {
        max_iters: 1,
        newton_tol: 1e-12,
        ..SolverSettings::default()
    };
    match advance(&dy, 0.01, &x, xt, None, &settings) {
        Err(Error::NotConverged { best, report }) => {
            assert_eq!(report.iterations, 1);
            assert!(dy.min_distance(&best) > 0.0);
        }
        other => panic!("expected NotConverged, got {other:?}"),
    }
}
