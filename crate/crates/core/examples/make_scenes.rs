//! Regenerate the shipped scenes: `cargo run --example make_scenes [dir]`
//! (default `scenes/` at the workspace root).

use std::path::{Path, PathBuf};

use lodyn::hierarchy::Hierarchy;
use lodyn::mesh::{save_mesh, MeshFormat};
use lodyn::shapes::{grid_3d, hex_disk, slit_array, spike_collider};
use lodyn::{Result, SimplicialMesh};

fn write_scene(dir: &Path, levels: Vec<SimplicialMesh>, toml: &str) -> Result<()> {
    Hierarchy::new(levels)?.save(dir)?;
    std::fs::write(dir.join("scene.toml"), toml.trim_start()).expect("write scene.toml");
    println!("wrote {}", dir.display());
    Ok(())
}

fn ball_spike(dir: &Path) -> Result<()> {
    // ball right above the middle tip; each lattice is turned a quarter
    // boundary segment so the facet under the tip tilts left or right
    let c = [0.0, 0.62];
    let levels = [(4, 1.0), (6, -1.0), (10, -1.0)]
        .iter()
        .map(|&(r, sign)| {
            let m = hex_disk(r, 0.3, c)?;
            let phi = sign * std::f64::consts::PI / (12.0 * r as f64);
            let (s, co) = phi.sin_cos();
            let x: Vec<f64> = m
                .rest_positions()
                .chunks(2)
                .flat_map(|p| {
                    let (dx, dy) = (p[0] - c[0], p[1] - c[1]);
                    [c[0] + co * dx - s * dy, c[1] + s * dx + co * dy]
                })
                .collect();
            m.with_rest_positions(x)
        })
        .collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(dir).expect("mkdir");
    save_mesh(
        &spike_collider(5, -1.0, 1.0, 0.0, 0.25)?,
        &dir.join("spikes.mesh"),
        MeshFormat::Binary,
    )?;
    write_scene(
        dir,
        levels,
        r#"
# Soft ball dropped onto the middle tip of a comb of spikes.
hierarchy = "hierarchy.toml"
gravity = [0.0, -9.81]

[time]
h = 0.01
steps = 150

[[material]]
name = "rubber"
model = "neo_hookean"
young = 2e4
density = 100.0

[[collider]]
kind = "static_mesh"
path = "spikes.mesh"
friction = 0.2

[barrier]
dhat = 1e-3
kappa = 1e4
"#,
    )
}

fn slit_array_scene(dir: &Path) -> Result<()> {
    let levels = [8, 16, 32, 48]
        .iter()
        .map(|&nx| slit_array(nx, 1.0, 0.25, 3, 0.6))
        .collect::<Result<Vec<_>>>()?;
    let levels = levels
        .into_iter()
        .map(|m| {
            let x: Vec<f64> = m
                .rest_positions()
                .chunks(2)
                .flat_map(|p| [p[0] - 0.5, p[1] + 0.05])
                .collect();
            m.with_rest_positions(x)
        })
        .collect::<Result<Vec<_>>>()?;
    write_scene(
        dir,
        levels,
        r#"
# Slotted bar dropped flat onto the ground with a large time step.
hierarchy = "hierarchy.toml"
gravity = [0.0, -9.81]

[time]
h = 0.04
steps = 25

[[material]]
name = "soft"
model = "neo_hookean"
young = 2e4
density = 100.0

[[collider]]
kind = "half_plane"
normal = [0.0, 1.0]
offset = 0.0
friction = 0.3

[initial]
velocity = [0.3, -0.5]

[barrier]
dhat = 1e-3
kappa = 1e4
"#,
    )
}

fn tight_contact(dir: &Path) -> Result<()> {
    // the coarse hexagon's flat bottom sits above the fine disk's lowest point
    let levels = vec![
        hex_disk(1, 0.3, [0.0, 0.31])?,
        hex_disk(4, 0.3, [0.0, 0.31])?,
    ];
    write_scene(
        dir,
        levels,
        r#"
# Disk settling on the ground; the coarse level is a hexagon that does not
# cover the fine level's bottom.
hierarchy = "hierarchy.toml"
gravity = [0.0, -9.81]

[time]
h = 0.01
steps = 40

[[material]]
name = "rubber"
model = "neo_hookean"
young = 2e4
density = 100.0

[[collider]]
kind = "half_plane"
normal = [0.0, 1.0]
offset = 0.0

[barrier]
dhat = 1e-3
kappa = 1e4
"#,
    )
}

fn cube_drop(dir: &Path) -> Result<()> {
    let levels = [2, 4, 8]
        .iter()
        .map(|&n| grid_3d([n; 3], [-0.1, 0.03, -0.1], [0.1, 0.23, 0.1]))
        .collect::<Result<Vec<_>>>()?;
    write_scene(
        dir,
        levels,
        r#"
# Cube thrown onto the ground, sliding with friction.
hierarchy = "hierarchy.toml"
gravity = [0.0, -9.81, 0.0]

[time]
h = 0.01
steps = 30

[[material]]
name = "rubber"
model = "neo_hookean"
young = 2e4
density = 100.0

[[collider]]
kind = "half_plane"
normal = [0.0, 1.0, 0.0]
offset = 0.0
friction = 0.3

[initial]
velocity = [0.5, -0.5, 0.0]

[barrier]
dhat = 1e-3
kappa = 1e3
"#,
    )
}

fn identity_drop(dir: &Path) -> Result<()> {
    let disk = hex_disk(4, 0.3, [0.0, 0.35])?;
    write_scene(
        dir,
        vec![disk.clone(), disk],
        r#"
# Two identical levels: progressive must reproduce the direct rollout.
hierarchy = "hierarchy.toml"
gravity = [0.0, -9.81]

[time]
h = 0.01
steps = 100

[[material]]
name = "rubber"
model = "neo_hookean"
young = 2e4
density = 100.0

[[collider]]
kind = "half_plane"
normal = [0.0, 1.0]
offset = 0.0

[barrier]
dhat = 1e-3
kappa = 1e4
"#,
    )
}

fn main() -> Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes"));
    ball_spike(&root.join("ball_spike"))?;
    slit_array_scene(&root.join("slit_array"))?;
    tight_contact(&root.join("tight_contact"))?;
    cube_drop(&root.join("cube_drop"))?;
    identity_drop(&root.join("identity_drop"))?;
    Ok(())
}
