//! Run directories: simulate a scene, write frames and a manifest, and roll
//! the results up into a report.
//!
//! Layout of a run directory:
//!
//! ```text
//! manifest.json            RunManifest
//! level<l>/v0.bin          initial velocity of hierarchy level l
//! level<l>/frame<t>.bin    positions at step t (5-digit, zero padded)
//! level<l>/frame<t>.obj    boundary surface every `obj_every` frames and at the end
//! reports.jsonl            one Newton report per solved step
//! min_distance.csv         l,t,min_distance
//! continuity.csv           l,t,e,e_hat,n        (progressive runs, or `metrics`)
//! consistency.csv          l,t,d
//! summary.csv, summary.txt written by `report`
//! ```
//!
//! `.bin` files are raw little-endian `f64`, `dim` values per vertex.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{direct_rollout, Trajectory};
use crate::mesh::{BoundarySurface, LumpedMass, SimplicialMesh};
use crate::metrics::{self, ConsistencyRow, ContinuityRow, GridKind};
use crate::par::{self, Exec};
use crate::progressive::{
    run_direct_all, run_embedded_baseline, run_progressive, run_tracks_baseline, LevelSetup,
    SolutionGrid,
};
use crate::prolongation::{ProlongationKind, ProlongationOperator};
use crate::scene::Scene;

pub const RUN_FORMAT: &str = "lodyn-run/1";
pub const DEFAULT_OBJ_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Every level simulated independently.
    Direct,
    Progressive,
    /// Two levels: the fine one stepped with the standard target plus the
    /// consistency penalty toward the coarse one.
    Tracks,
    /// Coarsest level simulated, finer levels prolonged from it.
    Embedded,
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "direct" | "direct-all-levels" => Ok(RunMode::Direct),
            "progressive" => Ok(RunMode::Progressive),
            "tracks" => Ok(RunMode::Tracks),
            "embedded" => Ok(RunMode::Embedded),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: String,
    pub scene: PathBuf,
    pub scene_hash: String,
    pub seed: u64,
    pub mode: RunMode,
    pub kind: ProlongationKind,
    /// Hierarchy levels in the run, coarsest first.
    pub levels: Vec<usize>,
    pub vertices: Vec<usize>,
    pub dim: usize,
    pub h: f64,
    pub steps: usize,
    pub penalty: f64,
    /// Mean cross-level center-of-mass distance to the coarsest row.
    pub com_discrepancy: f64,
    pub parallel: bool,
    pub level_seconds: Vec<f64>,
    pub total_seconds: f64,
}

/// A finished run held in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub manifest: RunManifest,
    pub grid: SolutionGrid,
    pub setups: Vec<LevelSetup>,
    pub ops: Vec<ProlongationOperator>,
    pub min_distance: Vec<Vec<f64>>,
    /// Metric traces, filled for progressive runs.
    pub traces: Option<(Vec<ContinuityRow>, Vec<ConsistencyRow>)>,
}

fn grid_kind(mode: RunMode) -> GridKind {
    match mode {
        RunMode::Progressive => GridKind::Progressive,
        _ => GridKind::Direct,
    }
}

/// Run `scene` in `mode` over the selected hierarchy levels.
pub fn simulate(
    scene: &Scene,
    mode: RunMode,
    levels: Option<&[usize]>,
    kind: ProlongationKind,
    exec: Exec,
) -> Result<RunOutput> {
    let levels = scene.select_levels(levels)?;
    if mode == RunMode::Tracks && levels.len() != 2 {
        return Err(Error::Config(format!(
            "tracks mode needs exactly two levels, got {levels:?}"
        )));
    }
    let cfg = scene.progressive_config();
    let setups = scene.level_setups(&levels, exec)?;
    let ops = scene.operators(&levels, kind)?;
    let start = Instant::now();
    let grid = match mode {
        RunMode::Direct => run_direct_all(&setups, &cfg, exec)?,
        RunMode::Progressive => run_progressive(&setups, &ops, &cfg)?,
        RunMode::Tracks => {
            let mut grid = SolutionGrid::new(cfg.h, cfg.steps);
            let t0 = Instant::now();
            let coarse = direct_rollout(
                &setups[0].dynamics,
                setups[0].x0.clone(),
                setups[0].v0.clone(),
                cfg.h,
                cfg.steps,
                &cfg.solver,
            )?;
            grid.push_row(coarse, t0.elapsed().as_secs_f64())?;
            let t1 = Instant::now();
            let fine = run_tracks_baseline(&grid.rows[0], &setups[1], &ops[0], &cfg)?;
            grid.push_row(fine, t1.elapsed().as_secs_f64())?;
            grid
        }
        RunMode::Embedded => {
            let mut grid = SolutionGrid::new(cfg.h, cfg.steps);
            let t0 = Instant::now();
            let coarse = direct_rollout(
                &setups[0].dynamics,
                setups[0].x0.clone(),
                setups[0].v0.clone(),
                cfg.h,
                cfg.steps,
                &cfg.solver,
            )?;
            grid.push_row(coarse, t0.elapsed().as_secs_f64())?;
            for (l, op) in ops.iter().enumerate() {
                let t = Instant::now();
                let row = run_embedded_baseline(&grid.rows[l], op, scene.dim())?;
                grid.push_row(row, t.elapsed().as_secs_f64())?;
            }
            grid
        }
    };
    let total_seconds = start.elapsed().as_secs_f64();
    let min_distance = grid
        .rows
        .iter()
        .zip(&setups)
        .map(|(row, s)| metrics::min_distance_trace(row, &s.dynamics, exec))
        .collect();
    let masses: Vec<&LumpedMass> = setups.iter().map(|s| &s.dynamics.mass).collect();
    let traces = if mode == RunMode::Progressive {
        Some(grid_traces(&grid, &setups, &ops, mode, exec)?)
    } else {
        None
    };
    let manifest = RunManifest {
        format: RUN_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scene: std::fs::canonicalize(&scene.path).unwrap_or_else(|_| scene.path.clone()),
        scene_hash: scene.hash.clone(),
        seed: scene.config.seed,
        mode,
        kind,
        vertices: levels
            .iter()
            .map(|&l| scene.hierarchy.level(l).n_vertices())
            .collect(),
        levels,
        dim: scene.dim(),
        h: cfg.h,
        steps: cfg.steps,
        penalty: cfg.penalty,
        com_discrepancy: metrics::com_discrepancy(&grid, &masses),
        parallel: exec == Exec::Parallel,
        level_seconds: grid.row_seconds.clone(),
        total_seconds,
    };
    Ok(RunOutput {
        manifest,
        grid,
        setups,
        ops,
        min_distance,
        traces,
    })
}

/// Run again from a manifest. The scene file and meshes must hash to the
/// recorded value.
pub fn replay(manifest: &RunManifest, exec: Exec) -> Result<RunOutput> {
    let scene = Scene::load(&manifest.scene)?;
    if scene.hash != manifest.scene_hash {
        return Err(Error::Config(format!(
            "scene {} changed since the run (hash {} vs recorded {})",
            manifest.scene.display(),
            scene.hash,
            manifest.scene_hash
        )));
    }
    simulate(
        &scene,
        manifest.mode,
        Some(&manifest.levels),
        manifest.kind,
        exec,
    )
}

fn grid_traces(
    grid: &SolutionGrid,
    setups: &[LevelSetup],
    ops: &[ProlongationOperator],
    mode: RunMode,
    exec: Exec,
) -> Result<(Vec<ContinuityRow>, Vec<ConsistencyRow>)> {
    let dynamics: Vec<_> = setups.iter().map(|s| &s.dynamics).collect();
    metrics::grid_metrics(grid, &dynamics, ops, grid_kind(mode), exec)
}

/// Metric traces of a stored run, rebuilt from its scene.
pub fn run_metrics(dir: &Path, exec: Exec) -> Result<(Vec<ContinuityRow>, Vec<ConsistencyRow>)> {
    let manifest = read_manifest(dir)?;
    let scene = Scene::load(&manifest.scene)?;
    if scene.hash != manifest.scene_hash {
        return Err(Error::Config(format!(
            "scene {} changed since the run",
            manifest.scene.display()
        )));
    }
    let setups = scene.level_setups(&manifest.levels, exec)?;
    let ops = scene.operators(&manifest.levels, manifest.kind)?;
    let grid = read_grid(dir, &manifest)?;
    grid_traces(&grid, &setups, &ops, manifest.mode, exec)
}

fn level_dir(dir: &Path, level: usize) -> PathBuf {
    dir.join(format!("level{level}"))
}

fn frame_path(dir: &Path, level: usize, t: usize, ext: &str) -> PathBuf {
    level_dir(dir, level).join(format!("frame{t:05}.{ext}"))
}

pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_f64s(path: &Path) -> Result<Vec<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{} bytes is not a whole number of f64 values", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Boundary of `mesh` at positions `x` as OBJ: edges as `l` lines in 2D,
/// triangles as `f` faces in 3D. 2D vertices get `z = 0`.
pub fn boundary_obj(mesh: &SimplicialMesh, surface: &BoundarySurface, x: &[f64]) -> String {
    let d = mesh.dim();
    let mut s = String::new();
    for p in x.chunks(d) {
        let z = if d == 3 { p[2] } else { 0.0 };
        let _ = writeln!(s, "v {:?} {:?} {:?}", p[0], p[1], z);
    }
    let tag = if d == 2 { "l" } else { "f" };
    for f in surface.facets() {
        s.push_str(tag);
        for v in f {
            let _ = write!(s, " {}", v + 1);
        }
        s.push('\n');
    }
    s
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Write everything in `out` to `dir`. `obj_every = 0` disables OBJ output
/// except for the last frame.
pub fn write_run(dir: &Path, scene: &Scene, out: &RunOutput, obj_every: usize) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let m = &out.manifest;
    let frames: Vec<(usize, usize)> = m
        .levels
        .iter()
        .enumerate()
        .flat_map(|(slot, _)| (0..=m.steps).map(move |t| (slot, t)))
        .collect();
    for &l in &m.levels {
        let ld = level_dir(dir, l);
        std::fs::create_dir_all(&ld).map_err(|e| Error::io(&ld, e))?;
    }
    let surfaces = m
        .levels
        .iter()
        .map(|&l| BoundarySurface::extract(scene.hierarchy.level(l)))
        .collect::<Result<Vec<_>>>()?;
    par::map_slice(Exec::Parallel, &frames, |&(slot, t)| -> Result<()> {
        let l = m.levels[slot];
        let x = &out.grid.rows[slot].x[t];
        write_f64s(&frame_path(dir, l, t, "bin"), x)?;
        if t == m.steps || (obj_every > 0 && t % obj_every == 0) {
            write_text(
                &frame_path(dir, l, t, "obj"),
                &boundary_obj(scene.hierarchy.level(l), &surfaces[slot], x),
            )?;
        }
        Ok(())
    })
    .into_iter()
    .collect::<Result<()>>()?;
    for (slot, &l) in m.levels.iter().enumerate() {
        write_f64s(&level_dir(dir, l).join("v0.bin"), &out.grid.rows[slot].v[0])?;
    }

    let mut reports = String::new();
    for (slot, row) in out.grid.rows.iter().enumerate() {
        for (t, r) in row.reports.iter().enumerate() {
            let mut v = serde_json::to_value(r).map_err(|e| Error::Invalid(e.to_string()))?;
            v["level"] = m.levels[slot].into();
            v["t"] = t.into();
            reports.push_str(&v.to_string());
            reports.push('\n');
        }
    }
    write_text(&dir.join("reports.jsonl"), &reports)?;

    let mut md = String::from("l,t,min_distance\n");
    for (slot, trace) in out.min_distance.iter().enumerate() {
        for (t, d) in trace.iter().enumerate() {
            let _ = writeln!(md, "{},{t},{d:?}", m.levels[slot]);
        }
    }
    write_text(&dir.join("min_distance.csv"), &md)?;
    if let Some((cont, cons)) = &out.traces {
        metrics::emit_traces(dir, cont, cons)?;
    }
    write_manifest(dir, m)
}

pub fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).map_err(|e| Error::Invalid(e.to_string()))?;
    write_text(&dir.join("manifest.json"), &text)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.clone(),
        line: e.line(),
        message: e.to_string(),
    })?;
    if m.format != RUN_FORMAT {
        return Err(Error::Invalid(format!(
            "{}: unsupported run format {:?}",
            path.display(),
            m.format
        )));
    }
    Ok(m)
}

/// Frames of a stored run. Velocities are recomputed from the positions,
/// which reproduces the in-memory values bit for bit.
pub fn read_grid(dir: &Path, m: &RunManifest) -> Result<SolutionGrid> {
    let mut grid = SolutionGrid::new(m.h, m.steps);
    for (slot, &l) in m.levels.iter().enumerate() {
        let v0 = read_f64s(&level_dir(dir, l).join("v0.bin"))?;
        let x0 = read_f64s(&frame_path(dir, l, 0, "bin"))?;
        let expected = m.vertices[slot] * m.dim;
        if x0.len() != expected || v0.len() != expected {
            return Err(Error::SizeMismatch {
                what: "stored frame",
                expected,
                found: x0.len(),
            });
        }
        let mut row = Trajectory::start(x0, v0);
        for t in 1..=m.steps {
            let x = read_f64s(&frame_path(dir, l, t, "bin"))?;
            if x.len() != expected {
                return Err(Error::SizeMismatch {
                    what: "stored frame",
                    expected,
                    found: x.len(),
                });
            }
            row.push(x, m.h, Default::default());
        }
        row.reports.clear();
        grid.push_row(row, m.level_seconds[slot])?;
    }
    Ok(grid)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub vertices: usize,
    pub seconds: f64,
    pub mean_n: Option<f64>,
    pub max_n: Option<f64>,
    pub mean_d: Option<f64>,
    pub min_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: RunMode,
    pub steps: usize,
    pub levels: Vec<LevelSummary>,
    /// Wall time of the finest level over that of the coarsest.
    pub speedup: f64,
    pub com_discrepancy: f64,
    pub warnings: Vec<String>,
}

fn read_csv(path: &Path, header: &str) -> Result<Option<Vec<Vec<f64>>>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(header) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {header:?}"),
        });
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            l.split(',')
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    message: e.to_string(),
                })
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

fn stat(
    rows: &Option<Vec<Vec<f64>>>,
    level: usize,
    col: usize,
    f: impl Fn(&[f64]) -> f64,
) -> Option<f64> {
    let vals: Vec<f64> = rows
        .as_ref()?
        .iter()
        .filter(|r| r[0] as usize == level)
        .map(|r| r[col])
        .collect();
    (!vals.is_empty()).then(|| f(&vals))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Roll up a finished run directory.
pub fn summarize(dir: &Path) -> Result<RunSummary> {
    let m = read_manifest(dir)?;
    for &l in &m.levels {
        let last = frame_path(dir, l, m.steps, "bin");
        if !last.exists() {
            return Err(Error::Invalid(format!(
                "incomplete run: {} is missing",
                last.display()
            )));
        }
    }
    let cont = read_csv(&dir.join("continuity.csv"), metrics::CONTINUITY_HEADER)?;
    let cons = read_csv(&dir.join("consistency.csv"), metrics::CONSISTENCY_HEADER)?;
    let md = read_csv(&dir.join("min_distance.csv"), "l,t,min_distance")?;
    let levels: Vec<LevelSummary> = m
        .levels
        .iter()
        .enumerate()
        .map(|(slot, &l)| LevelSummary {
            level: l,
            vertices: m.vertices[slot],
            seconds: m.level_seconds[slot],
            mean_n: stat(&cont, l, 4, mean),
            max_n: stat(&cont, l, 4, max),
            mean_d: stat(&cons, l, 2, mean),
            min_distance: stat(&md, l, 2, min),
        })
        .collect();
    let mut warnings = Vec::new();
    for w in levels.windows(2) {
        if w[1].seconds < w[0].seconds {
            warnings.push(format!(
                "wall time is not monotone: level {} took {:.3} s, level {} took {:.3} s",
                w[0].level, w[0].seconds, w[1].level, w[1].seconds
            ));
        }
    }
    for s in &levels {
        if s.min_distance.is_some_and(|d| d <= 0.0) {
            warnings.push(format!("level {} reaches contact distance ≤ 0", s.level));
        }
    }
    let speedup = match (levels.first(), levels.last()) {
        (Some(a), Some(b)) if levels.len() > 1 => b.seconds / a.seconds,
        _ => 1.0,
    };
    Ok(RunSummary {
        mode: m.mode,
        steps: m.steps,
        levels,
        speedup,
        com_discrepancy: m.com_discrepancy,
        warnings,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

impl RunSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mode {:?}, {} steps", self.mode, self.steps);
        let _ = writeln!(
            s,
            "{:>5} {:>9} {:>12} {:>13} {:>13} {:>13} {:>13}",
            "level", "vertices", "seconds", "mean n", "max n", "mean d", "min dist"
        );
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{:>5} {:>9} {:>12.4} {:>13} {:>13} {:>13} {:>13}",
                l.level,
                l.vertices,
                l.seconds,
                opt(l.mean_n),
                opt(l.max_n),
                opt(l.mean_d),
                opt(l.min_distance)
            );
        }
        let _ = writeln!(
            s,
            "speedup (level {} time / level {} time): {:.2}",
            self.levels.last().map_or(0, |l| l.level),
            self.levels.first().map_or(0, |l| l.level),
            self.speedup
        );
        let _ = writeln!(
            s,
            "center-of-mass discrepancy: {:.6e}",
            self.com_discrepancy
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,vertices,seconds,mean_n,max_n,mean_d,min_distance\n");
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        for l in &self.levels {
            let _ = writeln!(
                s,
                "{},{},{:?},{},{},{},{}",
                l.level,
                l.vertices,
                l.seconds,
                f(l.mean_n),
                f(l.max_n),
                f(l.mean_d),
                f(l.min_distance)
            );
        }
        s
    }
}

/// Summarize and write `summary.txt` / `summary.csv` next to the run.
pub fn report(dir: &Path) -> Result<RunSummary> {
    let summary = summarize(dir)?;
    write_text(&dir.join("summary.txt"), &summary.to_text())?;
    write_text(&dir.join("summary.csv"), &summary.to_csv())?;
    Ok(summary)
}
