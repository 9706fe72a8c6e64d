//! Acceptance suite: one PASS/FAIL line per criterion, then a single assert.
//!
//! Run with `cargo test -p lodyn --test acceptance -- --nocapture` to see the
//! report. Scene runs are shared between criteria.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use lodyn::binding::{bind, bind_naive_closest};
use lodyn::contact::{BarrierParams, Collider, ContactModel};
use lodyn::hierarchy::{red_refine, synthesize_test_hierarchy};
use lodyn::integrator::{direct_rollout, Dynamics, SolverSettings, Trajectory};
use lodyn::linalg::{CsrMatrix, Triplets};
use lodyn::materials::{Elasticity, MaterialModel, MaterialParams};
use lodyn::mesh::{lumped_mass, Density, LumpedMass};
use lodyn::metrics::{self, GridKind};
use lodyn::progressive::{Momentum, SolutionGrid};
use lodyn::prolongation::{
    biharmonic_system, build_barycentric, build_biharmonic, build_phong, solve_biharmonic,
    ProlongationKind, ProlongationOperator, DEFAULT_PHONG_BLEND,
};
use lodyn::run::{self, RunMode, RunOutput};
use lodyn::scene::Scene;
use lodyn::shapes::{grid_2d, grid_3d, hex_disk, u_fixture};
use lodyn::{Exec, SimplicialMesh};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenes_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

const SHIPPED: [&str; 5] = [
    "ball_spike",
    "slit_array",
    "tight_contact",
    "cube_drop",
    "identity_drop",
];

/// Memoized scene runs.
#[derive(Default)]
struct Runs {
    cache: RefCell<HashMap<(String, RunMode), (RunOutput, f64)>>,
}

impl Runs {
    fn get(&self, scene: &str, mode: RunMode) -> (RunOutput, f64) {
        let key = (scene.to_string(), mode);
        if let Some(r) = self.cache.borrow().get(&key) {
            return r.clone();
        }
        let s = load(scene);
        let t = Instant::now();
        let out = run::simulate(&s, mode, None, s.config.progressive.kind, Exec::Parallel)
            .unwrap_or_else(|e| panic!("{scene} {mode:?}: {e}"));
        let secs = t.elapsed().as_secs_f64();
        self.cache.borrow_mut().insert(key, (out.clone(), secs));
        (out, secs)
    }
}

fn load(scene: &str) -> Scene {
    Scene::load(&scenes_dir().join(scene).join("scene.toml"))
        .unwrap_or_else(|e| panic!("{scene}: {e}"))
}

// ---------------------------------------------------------------- fixtures

fn unit_square_grid(n: usize) -> SimplicialMesh {
    grid_2d(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()
}

/// Coarse/fine pairs used by the prolongation criteria.
fn prolongation_fixtures() -> Vec<(&'static str, SimplicialMesh, SimplicialMesh)> {
    let nested_c = unit_square_grid(2);
    let nested_f = red_refine(&nested_c).unwrap();
    let j2 = synthesize_test_hierarchy(&unit_square_grid(2), 3, 0.2, 11).unwrap();
    let j3 =
        synthesize_test_hierarchy(&grid_3d([1, 1, 1], [0.0; 3], [1.0; 3]).unwrap(), 2, 0.15, 5)
            .unwrap();
    let disk = hex_disk(3, 0.5, [0.0, 0.0]).unwrap();
    // one bottom-edge vertex of the refined square pushed outside the coarse mesh
    let mut x = nested_f.rest_positions().to_vec();
    let v = (0..nested_f.n_vertices())
        .find(|&v| (x[2 * v] - 0.25).abs() < 1e-12 && x[2 * v + 1].abs() < 1e-12)
        .unwrap();
    x[2 * v + 1] = -0.05;
    let extra_f = nested_f.with_rest_positions(x).unwrap();
    vec![
        ("nested", nested_c.clone(), nested_f),
        ("jittered-2d", j2.level(1).clone(), j2.level(2).clone()),
        ("jittered-3d", j3.level(0).clone(), j3.level(1).clone()),
        ("identical", disk.clone(), disk),
        ("one-extrapolated", nested_c, extra_f),
    ]
}

fn operator(
    kind: ProlongationKind,
    coarse: &SimplicialMesh,
    fine: &SimplicialMesh,
) -> ProlongationOperator {
    match kind {
        ProlongationKind::Barycentric => {
            build_barycentric(&bind(fine, coarse).unwrap(), coarse).unwrap()
        }
        ProlongationKind::Biharmonic => {
            build_biharmonic(fine, coarse, &bind(coarse, fine).unwrap()).unwrap()
        }
        ProlongationKind::Phong => build_phong(
            &bind(fine, coarse).unwrap(),
            fine,
            coarse,
            DEFAULT_PHONG_BLEND,
        )
        .unwrap(),
    }
}

fn dense(p: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p.nrows(), p.ncols());
    for (r, c, v) in p.triplets() {
        m[(r, c)] += v;
    }
    m
}

// -------------------------------------------------------------- criteria

fn c1_prolongation() -> Outcome {
    let t = Instant::now();
    let mut worst_sum = 0.0_f64;
    let mut worst_affine = 0.0_f64;
    for (_, coarse, fine) in prolongation_fixtures() {
        let d = coarse.dim();
        for kind in [
            ProlongationKind::Barycentric,
            ProlongationKind::Biharmonic,
            ProlongationKind::Phong,
        ] {
            let p = dense(operator(kind, &coarse, &fine).weights());
            for r in 0..p.nrows() {
                worst_sum = worst_sum.max((p.row(r).sum() - 1.0).abs());
            }
            // affine map u = A x + b, one scalar field per output coordinate
            let a: Vec<f64> = (0..d * d)
                .map(|i| 0.3 + 0.17 * i as f64 - 0.05 * (i * i) as f64)
                .collect();
            let b: Vec<f64> = (0..d).map(|i| 0.7 - 0.4 * i as f64).collect();
            let f = |x: &[f64], k: usize| b[k] + (0..d).map(|j| a[k * d + j] * x[j]).sum::<f64>();
            for k in 0..d {
                let uc = DMatrix::from_fn(coarse.n_vertices(), 1, |i, _| f(coarse.vertex(i), k));
                let uf = &p * uc;
                for i in 0..fine.n_vertices() {
                    worst_affine = worst_affine.max((uf[i] - f(fine.vertex(i), k)).abs());
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst_sum <= 1e-10 && worst_affine <= 1e-8 && secs < 10.0,
        format!("max |row sum − 1| = {worst_sum:.2e} (≤ 1e-10), max affine error = {worst_affine:.2e} (≤ 1e-8), {secs:.2} s (< 10 s)"),
    )
}

fn c2_biharmonic_oracle() -> Outcome {
    let j2 = synthesize_test_hierarchy(&unit_square_grid(1), 3, 0.2, 3).unwrap();
    let j3 = synthesize_test_hierarchy(&grid_3d([1, 1, 1], [0.0; 3], [1.0; 3]).unwrap(), 2, 0.1, 4)
        .unwrap();
    let fx = prolongation_fixtures();
    let pairs = vec![
        (j2.level(1).clone(), j2.level(2).clone()),
        (j3.level(0).clone(), j3.level(1).clone()),
        (fx[4].1.clone(), fx[4].2.clone()),
    ];
    let mut worst_w = 0.0_f64;
    let mut worst_bw = 0.0_f64;
    let mut sizes = Vec::new();
    for (coarse, fine) in pairs {
        assert!(fine.n_vertices() <= 60);
        sizes.push(fine.n_vertices());
        let sys = biharmonic_system(&fine, &bind(&coarse, &fine).unwrap()).unwrap();
        let w = solve_biharmonic(&sys, &fine).unwrap();
        // dense QP oracle: KKT [A Bᵀ; B 0][W; Λ] = [0; I] by full-pivot LU
        let (nf, nc) = (sys.a.nrows(), sys.b.nrows());
        let (a, b) = (dense(&sys.a), dense(&sys.b));
        let mut k = DMatrix::zeros(nf + nc, nf + nc);
        k.view_mut((0, 0), (nf, nf)).copy_from(&a);
        k.view_mut((nf, 0), (nc, nf)).copy_from(&b);
        k.view_mut((0, nf), (nf, nc)).copy_from(&b.transpose());
        let mut rhs = DMatrix::zeros(nf + nc, nc);
        rhs.view_mut((nf, 0), (nc, nc)).fill_with_identity();
        let oracle = k
            .full_piv_lu()
            .solve(&rhs)
            .expect("KKT is nonsingular")
            .rows(0, nf)
            .into_owned();
        worst_w = worst_w.max((&w - &oracle).amax());
        worst_bw = worst_bw.max((&b * &w - DMatrix::<f64>::identity(nc, nc)).amax());
    }
    outcome(
        worst_w <= 1e-8 && worst_bw <= 1e-8,
        format!("fine sizes {sizes:?}: max |W − W_oracle| = {worst_w:.2e} (≤ 1e-8), max |BW − I| = {worst_bw:.2e} (≤ 1e-8)"),
    )
}

/// Vertices whose host is more than 3 element hops from the host of every
/// fine neighbour, counted with a BFS written here from scratch.
fn far_hosts(fine: &SimplicialMesh, coarse: &SimplicialMesh, hosts: &[usize]) -> usize {
    let d = coarse.dim();
    let mut facet_owner: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (e, el) in coarse.elements().enumerate() {
        for skip in 0..=d {
            let mut f: Vec<usize> = el
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, &v)| v)
                .collect();
            f.sort_unstable();
            facet_owner.entry(f).or_default().push(e);
        }
    }
    let mut adj = vec![Vec::new(); coarse.n_elements()];
    for owners in facet_owner.values() {
        if let [a, b] = owners[..] {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let hops = |src: usize| {
        let mut dist = vec![usize::MAX; coarse.n_elements()];
        dist[src] = 0;
        let mut q = VecDeque::from([src]);
        while let Some(e) = q.pop_front() {
            for &n in &adj[e] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[e] + 1;
                    q.push_back(n);
                }
            }
        }
        dist
    };
    let mut nbrs = vec![BTreeSet::new(); fine.n_vertices()];
    for el in fine.elements() {
        for &a in el {
            for &b in el {
                if a != b {
                    nbrs[a].insert(b);
                }
            }
        }
    }
    (0..fine.n_vertices())
        .filter(|&v| {
            let dist = hops(hosts[v]);
            !nbrs[v].is_empty() && nbrs[v].iter().all(|&u| dist[hosts[u]] > 3)
        })
        .count()
}

fn c3_binding() -> Outcome {
    let (coarse, fine) = u_fixture().unwrap();
    let host = |m: &lodyn::binding::BindingMap| -> Vec<usize> {
        m.hosts().into_iter().map(|h| h.unwrap()).collect()
    };
    let naive = far_hosts(
        &fine,
        &coarse,
        &host(&bind_naive_closest(&fine, &coarse).unwrap()),
    );
    let robust = far_hosts(&fine, &coarse, &host(&bind(&fine, &coarse).unwrap()));
    outcome(
        naive >= 1 && robust == 0,
        format!("U-fixture hosts > 3 hops from all neighbour hosts: naive {naive} (≥ 1), robust {robust} (= 0)"),
    )
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

/// Worst relative gradient and Hessian-vector errors against central
/// differences.
fn fd_check(
    energy: &dyn Fn(&[f64]) -> f64,
    gradient: &dyn Fn(&[f64]) -> Vec<f64>,
    hessian: &dyn Fn(&[f64]) -> CsrMatrix,
    x: &[f64],
    step: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let g = gradient(x);
    let fd: Vec<f64> = (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += step;
            m[i] -= step;
            (energy(&p) - energy(&m)) / (2.0 * step)
        })
        .collect();
    let u: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let hu = hessian(x).mul_vec(&u);
    let xp: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + step * b).collect();
    let xm: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - step * b).collect();
    let fd_hu: Vec<f64> = gradient(&xp)
        .iter()
        .zip(gradient(&xm))
        .map(|(a, b)| (a - b) / (2.0 * step))
        .collect();
    (rel(&fd, &g), rel(&fd_hu, &hu))
}

fn c4_derivatives() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut lines = Vec::new();
    let mut pass = true;
    let mut record = |name: &str, worst: (f64, f64)| {
        pass &= worst.0 <= 1e-4 && worst.1 <= 1e-4;
        lines.push(format!("{name} g {:.1e} Hv {:.1e}", worst.0, worst.1));
    };

    let meshes = [
        grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap(),
        grid_3d([1, 1, 1], [0.0; 3], [1.0; 3]).unwrap(),
    ];
    for model in [
        MaterialModel::NeoHookean,
        MaterialModel::StVk,
        MaterialModel::Corotational,
    ] {
        let mut worst = (0.0_f64, 0.0_f64);
        for mesh in &meshes {
            let params = MaterialParams {
                model,
                young: 1e4,
                poisson: 0.4,
                density: 1.0,
            };
            let el = Elasticity::uniform(mesh, &params, Exec::Sequential).unwrap();
            let n = mesh.rest_positions().len();
            for _ in 0..10 {
                let x: Vec<f64> = mesh
                    .rest_positions()
                    .iter()
                    .map(|v| v * 1.1 + rng.random_range(-0.08..0.08))
                    .collect();
                let r = fd_check(
                    &|y| el.energy(y),
                    &|y| {
                        let mut g = vec![0.0; n];
                        el.add_gradient(y, &mut g);
                        g
                    },
                    &|y| {
                        let mut t = Triplets::new(n, n);
                        el.add_hessian(y, false, &mut t);
                        t.to_csr()
                    },
                    &x,
                    1e-6,
                    &mut rng,
                );
                worst = (worst.0.max(r.0), worst.1.max(r.1));
            }
        }
        record(&format!("{model:?}"), worst);
    }

    // barrier: a square hovering within d̂ of the ground and of a static edge
    let dhat = 0.1;
    let block = grid_2d(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let wall = grid_2d(1, 1, [1.0, -1.0], [2.0, 2.0]).unwrap();
    let model = ContactModel::new(
        &block,
        vec![
            Collider::half_plane(&[0.0, 1.0], 0.0, 0.5).unwrap(),
            Collider::static_mesh(&wall, 0.5).unwrap(),
        ],
        BarrierParams {
            dhat,
            kappa: 10.0,
            eps_v: 1e-2,
            mu: 0.0,
        },
        false,
        Exec::Sequential,
    )
    .unwrap();
    let n = block.rest_positions().len();
    let states: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let (sx, sy) = (rng.random_range(-0.09..-0.02), rng.random_range(0.02..0.09));
            block
                .rest_positions()
                .chunks(2)
                .flat_map(|p| {
                    [
                        p[0] + sx + rng.random_range(-0.01..0.01),
                        p[1] + sy + rng.random_range(-0.01..0.01),
                    ]
                })
                .collect()
        })
        .collect();
    let mut worst = (0.0_f64, 0.0_f64);
    for x in &states {
        assert!(!model.pairs(x).is_empty());
        let r = fd_check(
            &|y| model.barrier_energy(y),
            &|y| {
                let mut g = vec![0.0; n];
                model.add_barrier_gradient(y, &mut g);
                g
            },
            &|y| {
                let mut t = Triplets::new(n, n);
                model.add_barrier_hessian(y, false, &mut t);
                t.to_csr()
            },
            x,
            1e-7,
            &mut rng,
        );
        worst = (worst.0.max(r.0), worst.1.max(r.1));
    }
    record("barrier", worst);

    // friction lagged at each state, evaluated after tangential slips that
    // fall in the sticking and the sliding regime; a 2D sliding contact has
    // a zero Hessian, so sliding is checked on a 3D block
    let block3 = grid_3d([1, 1, 1], [0.0; 3], [1.0; 3]).unwrap();
    let wall3 = grid_3d([1, 1, 1], [1.0, -1.0, -1.0], [2.0, 2.0, 2.0]).unwrap();
    let model3 = ContactModel::new(
        &block3,
        vec![
            Collider::half_plane(&[0.0, 1.0, 0.0], 0.0, 0.5).unwrap(),
            Collider::static_mesh(&wall3, 0.5).unwrap(),
        ],
        BarrierParams {
            dhat,
            kappa: 10.0,
            eps_v: 1e-2,
            mu: 0.0,
        },
        false,
        Exec::Sequential,
    )
    .unwrap();
    let states3: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let (sx, sy) = (rng.random_range(-0.09..-0.02), rng.random_range(0.02..0.09));
            block3
                .rest_positions()
                .chunks(3)
                .flat_map(|p| {
                    [
                        p[0] + sx + rng.random_range(-0.01..0.01),
                        p[1] + sy + rng.random_range(-0.01..0.01),
                        p[2] + rng.random_range(-0.01..0.01),
                    ]
                })
                .collect()
        })
        .collect();
    let eps = 1e-3;
    let mut worst = (0.0_f64, 0.0_f64);
    let cases = states.iter().map(|x| (&model, x, 3e-4)).chain(
        states3
            .iter()
            .enumerate()
            .map(|(k, x)| (&model3, x, if k % 2 == 0 { 3e-4 } else { 2e-2 })),
    );
    for (m, x0, amp) in cases {
        let fs = m.friction_set(x0);
        assert!(!fs.is_empty());
        let n = x0.len();
        let x: Vec<f64> = x0.iter().map(|v| v + rng.random_range(-amp..amp)).collect();
        let r = fd_check(
            &|y| fs.energy(y, eps),
            &|y| {
                let mut g = vec![0.0; n];
                fs.add_gradient(y, eps, &mut g);
                g
            },
            &|y| {
                let mut t = Triplets::new(n, n);
                fs.add_hessian(y, eps, &mut t);
                t.to_csr()
            },
            &x,
            1e-9,
            &mut rng,
        );
        worst = (worst.0.max(r.0), worst.1.max(r.1));
    }
    record("friction", worst);
    let secs = t.elapsed().as_secs_f64();
    outcome(
        pass && secs < 30.0,
        format!(
            "worst relative errors (≤ 1e-4): {}; {secs:.2} s (< 30 s)",
            lines.join(", ")
        ),
    )
}

fn c5_free_fall() -> Outcome {
    let mesh = hex_disk(2, 0.5, [0.0, 3.0]).unwrap();
    let mass = lumped_mass(&mesh, &Density::Uniform(10.0)).unwrap();
    let g = [0.3, -9.81];
    let dynamics = Dynamics::new(2, mass, g.to_vec()).unwrap();
    let h = 0.01;
    let x0 = mesh.rest_positions().to_vec();
    let v0: Vec<f64> = (0..x0.len())
        .map(|i| if i % 2 == 0 { 1.5 } else { 0.5 })
        .collect();
    let traj = direct_rollout(
        &dynamics,
        x0.clone(),
        v0.clone(),
        h,
        100,
        &SolverSettings::default(),
    )
    .unwrap();
    let (mut x, mut v) = (x0, v0);
    let mut worst = 0.0_f64;
    for t in 1..=100 {
        let next: Vec<f64> = (0..x.len())
            .map(|i| x[i] + h * v[i] + h * h * g[i % 2])
            .collect();
        v = (0..x.len()).map(|i| (next[i] - x[i]) / h).collect();
        x = next;
        worst = worst.max(
            x.iter()
                .zip(&traj.x[t])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        );
    }
    outcome(
        worst <= 1e-10,
        format!("max |x − closed form| over 100 steps = {worst:.2e} (≤ 1e-10)"),
    )
}

fn mass_rms(a: &[f64], b: &[f64], m: &LumpedMass) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    (m.norm2(&diff) / m.total()).sqrt()
}

fn c6_identity(runs: &Runs) -> Outcome {
    let (prog, _) = runs.get("identity_drop", RunMode::Progressive);
    let (direct, _) = runs.get("identity_drop", RunMode::Direct);
    let tol = load("identity_drop").config.solver.newton_tol;
    let m = &prog.setups[1].dynamics.mass;
    let worst = (0..=prog.manifest.steps)
        .map(|t| mass_rms(&prog.grid.rows[1].x[t], &direct.grid.rows[1].x[t], m))
        .fold(0.0, f64::max);
    let contact_frames = direct.min_distance[1]
        .iter()
        .filter(|&&d| d < load("identity_drop").config.barrier.dhat)
        .count();
    outcome(
        worst <= 10.0 * tol && contact_frames > 0 && prog.manifest.steps == 100,
        format!(
            "max per-step mass-weighted RMS difference = {worst:.2e} m (≤ 10 × {tol:e}); {contact_frames} of 101 frames within d̂"
        ),
    )
}

fn c7_feasibility(runs: &Runs) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for s in SHIPPED {
        for mode in [RunMode::Progressive, RunMode::Direct] {
            let (out, _) = runs.get(s, mode);
            let m = out
                .min_distance
                .iter()
                .flatten()
                .copied()
                .fold(f64::INFINITY, f64::min);
            worst = worst.min(m);
            parts.push(format!("{s}/{mode:?} {m:.1e}"));
        }
    }
    outcome(
        worst > 0.0,
        format!(
            "min distance over all frames and levels: {}",
            parts.join(", ")
        ),
    )
}

fn c8_penalty(runs: &Runs) -> Outcome {
    let _ = runs;
    let t = Instant::now();
    let base = load("slit_array");
    let finest = base.n_levels() - 1;
    let mut ds = Vec::new();
    for w in [0.0, 0.025, 0.2] {
        let mut scene = base.clone();
        scene.config.progressive.penalty = w;
        let out = run::simulate(
            &scene,
            RunMode::Progressive,
            None,
            ProlongationKind::Barycentric,
            Exec::Parallel,
        )
        .unwrap();
        let (_, cons) = out.traces.unwrap();
        ds.push(metrics::mean_consistency(&cons, finest));
    }
    let secs = t.elapsed().as_secs_f64();
    let monotone = ds.windows(2).all(|w| w[1] <= w[0] * 1.05);
    outcome(
        monotone && secs < 600.0 && base.n_levels() == 4 && base.config.time.h == 0.04,
        format!(
            "mean d at level {finest} for w = 0, 0.025, 0.2: {} (non-increasing within 5%), {secs:.1} s",
            ds.iter().map(|d| format!("{d:.4e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn c9_divergence(runs: &Runs) -> Outcome {
    let (prog, tp) = runs.get("ball_spike", RunMode::Progressive);
    let (direct, td) = runs.get("ball_spike", RunMode::Direct);
    let (cp, cd) = (
        prog.manifest.com_discrepancy,
        direct.manifest.com_discrepancy,
    );
    // recompute the statistic here as an independent check
    let com = |x: &[f64], m: &LumpedMass| {
        let mut c = [0.0; 2];
        for (i, mi) in m.0.iter().enumerate() {
            c[0] += mi * x[2 * i];
            c[1] += mi * x[2 * i + 1];
        }
        [c[0] / m.total(), c[1] / m.total()]
    };
    let stat = |o: &RunOutput| {
        let mut s = 0.0;
        let mut n = 0;
        for t in 0..=o.manifest.steps {
            let c0 = com(&o.grid.rows[0].x[t], &o.setups[0].dynamics.mass);
            for l in 1..o.grid.n_levels() {
                let c = com(&o.grid.rows[l].x[t], &o.setups[l].dynamics.mass);
                s += (c[0] - c0[0]).hypot(c[1] - c0[1]);
                n += 1;
            }
        }
        s / n as f64
    };
    let agree = (stat(&prog) - cp).abs() <= 1e-12 * cp.max(1.0)
        && (stat(&direct) - cd).abs() <= 1e-12 * cd.max(1.0);
    outcome(
        agree && 2.0 * cp <= cd && tp + td < 600.0,
        format!(
            "levels {:?} vertices: COM discrepancy progressive {cp:.3e} vs direct {cd:.3e} (ratio {:.1} ≥ 2), {:.1} s",
            prog.manifest.vertices,
            cd / cp,
            tp + td
        ),
    )
}

fn c10_embedded(runs: &Runs) -> Outcome {
    let (emb, _) = runs.get("tight_contact", RunMode::Embedded);
    let (prog, _) = runs.get("tight_contact", RunMode::Progressive);
    let dhat = load("tight_contact").config.barrier.dhat;
    let fine = emb.grid.n_levels() - 1;
    let bad = emb.min_distance[fine]
        .iter()
        .filter(|&&d| d <= 0.0 || d < dhat / 100.0)
        .count();
    let prog_bad = prog.min_distance[fine]
        .iter()
        .filter(|&&d| d <= 0.0 || d < dhat / 100.0)
        .count();
    let emb_min = emb.min_distance[fine]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let prog_min = prog.min_distance[fine]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    outcome(
        bad >= 1 && prog_bad == 0,
        format!(
            "frames with d ≤ 0 or < d̂/100: embedded {bad} (min {emb_min:.2e}), progressive {prog_bad} (min {prog_min:.2e})"
        ),
    )
}

fn c11_norms(runs: &Runs) -> Outcome {
    let _ = runs;
    let mut ops: Vec<(String, ProlongationOperator)> = prolongation_fixtures()
        .into_iter()
        .map(|(name, c, f)| {
            (
                name.to_string(),
                operator(ProlongationKind::Barycentric, &c, &f),
            )
        })
        .collect();
    for s in SHIPPED {
        let scene = load(s);
        let levels: Vec<usize> = (0..scene.n_levels()).collect();
        for (l, op) in scene
            .operators(&levels, ProlongationKind::Barycentric)
            .unwrap()
            .into_iter()
            .enumerate()
        {
            ops.push((format!("{s}:{l}->{}", l + 1), op));
        }
    }
    let mut checked = 0;
    let mut pass = true;
    let mut negatives = Vec::new();
    for (name, op) in &ops {
        let w = op.weights();
        let has_neg = w.triplets().any(|(_, _, v)| v < 0.0);
        let frob2: f64 = w.triplets().map(|(_, _, v)| v * v).sum();
        let diag = op.diagnostics();
        if has_neg {
            negatives.push(format!(
                "{name} [min {:.3}, max {:.3}, ε {}]",
                diag.min_entry,
                diag.max_entry,
                diag.epsilon.map_or("-".into(), |e| format!("{e:.2e}"))
            ));
        } else {
            checked += 1;
            pass &= frob2 <= w.nrows() as f64 && !diag.frobenius_bound_violated;
        }
    }
    outcome(
        pass && checked > 0,
        format!(
            "{checked} nonnegative operators satisfy ‖P‖_F ≤ √m; negative-weight operators: {}",
            negatives.join(", ")
        ),
    )
}

fn c12_metric_sanity(runs: &Runs) -> Outcome {
    let mesh = hex_disk(2, 0.5, [0.0, 3.0]).unwrap();
    let mass = lumped_mass(&mesh, &Density::Uniform(10.0)).unwrap();
    let g = [0.0, -9.81];
    let dynamics = Dynamics::new(2, mass, g.to_vec()).unwrap();
    let h = 0.01;
    let x0 = mesh.rest_positions().to_vec();
    let v0: Vec<f64> = (0..x0.len())
        .map(|i| if i % 2 == 0 { 0.4 } else { 1.0 })
        .collect();
    // analytic implicit-Euler free fall: x_t = x_0 + t h v_0 + h² g t(t+1)/2
    let pos = |t: usize| -> Vec<f64> {
        let tf = t as f64;
        (0..x0.len())
            .map(|i| x0[i] + tf * h * v0[i] + h * h * g[i % 2] * tf * (tf + 1.0) / 2.0)
            .collect()
    };
    let mut traj = Trajectory::start(pos(0), v0.clone());
    for t in 1..=20 {
        traj.push(pos(t), h, Default::default());
    }
    let e_max =
        metrics::continuity_trace(&traj, &dynamics, h, Momentum::Standard, Exec::Sequential)
            .unwrap()
            .iter()
            .map(|r| r.e)
            .fold(0.0, f64::max);

    let (emb, _) = runs.get("tight_contact", RunMode::Embedded);
    let mut grid = SolutionGrid::new(emb.grid.h, emb.grid.steps);
    for r in &emb.grid.rows {
        grid.push_row(r.clone(), 0.0).unwrap();
    }
    let dyns: Vec<&Dynamics> = emb.setups.iter().map(|s| &s.dynamics).collect();
    let (_, cons) =
        metrics::grid_metrics(&grid, &dyns, &emb.ops, GridKind::Direct, Exec::Sequential).unwrap();
    let d_max = cons.iter().map(|r| r.d).fold(0.0, f64::max);
    outcome(
        e_max <= 1e-12 && d_max <= 1e-9 && !cons.is_empty(),
        format!("free-fall max e = {e_max:.2e} (≤ 1e-12); embedded max d = {d_max:.2e} (≤ 1e-9)"),
    )
}

fn files_of(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p
                .extension()
                .is_some_and(|x| x == "bin" || x == "csv" || x == "obj")
            {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn c13_determinism(runs: &Runs) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut pass = true;
    for (s, mode) in [
        ("tight_contact", RunMode::Progressive),
        ("slit_array", RunMode::Direct),
        ("identity_drop", RunMode::Progressive),
    ] {
        let scene = load(s);
        let (first, _) = runs.get(s, mode);
        let a = tmp.path().join(format!("{s}-a"));
        run::write_run(&a, &scene, &first, 5).unwrap();
        let manifest = run::read_manifest(&a).unwrap();
        let again = run::replay(&manifest, Exec::Sequential).unwrap();
        let b = tmp.path().join(format!("{s}-b"));
        run::write_run(&b, &scene, &again, 5).unwrap();
        for dir in [&a, &b] {
            let (cont, cons) = run::run_metrics(dir, Exec::Parallel).unwrap();
            metrics::emit_traces(dir, &cont, &cons).unwrap();
        }
        let (fa, fb) = (files_of(&a), files_of(&b));
        pass &= fa == fb && fa.keys().any(|k| k.ends_with("continuity.csv"));
        compared += fa.len();
    }
    outcome(
        pass,
        format!("{compared} frame, OBJ and metric CSV files identical byte for byte on replay"),
    )
}

fn c14_speedup(runs: &Runs) -> Outcome {
    // the largest shipped scene by finest vertex count
    let largest = SHIPPED
        .iter()
        .max_by_key(|s| {
            let sc = load(s);
            sc.hierarchy.level(sc.n_levels() - 1).n_vertices()
        })
        .unwrap();
    let (out, _) = runs.get(largest, RunMode::Progressive);
    let tmp = tempfile::tempdir().unwrap();
    let scene = load(largest);
    run::write_run(tmp.path(), &scene, &out, 0).unwrap();
    let summary = run::report(tmp.path()).unwrap();
    let v = &out.manifest.vertices;
    let (t0, tl) = (
        summary.levels[0].seconds,
        summary.levels.last().unwrap().seconds,
    );
    outcome(
        v.len() == 3 && v[2] >= 20 * v[0] && t0 <= tl / 10.0,
        format!(
            "{largest} vertices {v:?}: level-0 {t0:.3} s vs level-{} {tl:.3} s, reported speedup {:.1} (≥ 10)",
            v.len() - 1,
            summary.speedup
        ),
    )
}

#[test]
fn acceptance() {
    let runs = Runs::default();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("prolongation correctness", Box::new(c1_prolongation)),
        (
            "biharmonic oracle equivalence",
            Box::new(c2_biharmonic_oracle),
        ),
        ("binding robustness", Box::new(c3_binding)),
        ("energy derivatives", Box::new(c4_derivatives)),
        ("integrator exactness", Box::new(c5_free_fall)),
        (
            "progressive equals direct under identity",
            Box::new(|| c6_identity(&runs)),
        ),
        ("feasibility invariant", Box::new(|| c7_feasibility(&runs))),
        (
            "consistency-penalty monotonicity",
            Box::new(|| c8_penalty(&runs)),
        ),
        ("divergence contrast", Box::new(|| c9_divergence(&runs))),
        (
            "embedded-baseline contrast",
            Box::new(|| c10_embedded(&runs)),
        ),
        ("norm diagnostics", Box::new(|| c11_norms(&runs))),
        ("metric sanity", Box::new(|| c12_metric_sanity(&runs))),
        ("determinism", Box::new(|| c13_determinism(&runs))),
        ("speedup reporting", Box::new(|| c14_speedup(&runs))),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        println!(
            "[{}] {:>2} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
