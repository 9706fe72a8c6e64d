//! `lodyn`: bind, prolong, simulate and inspect progressive multi-level runs.
//!
//! Exit codes: 0 success, 2 bad input (config, parse, I/O), 3 numerical
//! failure. Failures print one JSON record to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lodyn::binding::{bind, bind_naive_closest, misbinding_audit, BindingMap};
use lodyn::prolongation::ProlongationKind;
use lodyn::run::{self, RunMode, DEFAULT_OBJ_EVERY};
use lodyn::scene::Scene;
use lodyn::{Error, Exec, Result};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "lodyn",
    version,
    about = "Progressive level-of-detail elastodynamics"
)]
struct Cli {
    /// Run every loop on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Comma-separated hierarchy levels, coarsest first (default: all).
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
}

#[derive(Subcommand)]
enum Command {
    /// Bind every fine level to the level below and audit the result.
    Bind {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also run the closest-point baseline binding.
        #[arg(long)]
        naive: bool,
    },
    /// Build prolongation operators and their norm diagnostics.
    Prolong {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bary")]
        kind: ProlongationKind,
    },
    /// Simulate a scene into a run directory.
    Simulate {
        #[arg(long, required_unless_present = "replay")]
        scene: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
        /// direct | direct-all-levels | progressive | tracks | embedded
        #[arg(long, default_value = "progressive")]
        mode: RunMode,
        #[arg(long)]
        kind: Option<ProlongationKind>,
        /// Write a boundary OBJ every N frames (0: last frame only).
        #[arg(long, default_value_t = DEFAULT_OBJ_EVERY)]
        obj_every: usize,
        /// Rerun the run described by this manifest.json (or run directory).
        #[arg(long, conflicts_with_all = ["scene", "levels", "kind"])]
        replay: Option<PathBuf>,
    },
    /// Compute continuity and consistency traces of a run directory.
    Metrics {
        #[arg(long)]
        run: PathBuf,
    },
    /// Summarize a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let exec = if cli.sequential {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    match dispatch(cli.command, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = if e.is_numerical() { 3 } else { 2 };
            let mut record = json!({
                "error": e.kind(),
                "message": e.to_string(),
                "exit_code": code,
            });
            if let Error::AtStep { level, step, .. } = &e {
                record["level"] = json!(level);
                record["step"] = json!(step);
            }
            eprintln!("{record}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cmd: Command, exec: Exec) -> Result<()> {
    match cmd {
        Command::Bind { scene, out, naive } => cmd_bind(&scene, &out, naive),
        Command::Prolong { scene, out, kind } => cmd_prolong(&scene, &out, kind),
        Command::Simulate {
            scene,
            levels,
            out,
            mode,
            kind,
            obj_every,
            replay,
        } => {
            let (scene, output) = match replay {
                Some(manifest) => {
                    let dir = if manifest.is_dir() {
                        manifest.as_path()
                    } else {
                        manifest.parent().unwrap_or(Path::new("."))
                    };
                    let m = run::read_manifest(dir)?;
                    (Scene::load(&m.scene)?, run::replay(&m, exec)?)
                }
                None => {
                    let scene = Scene::load(&scene.expect("clap requires --scene"))?;
                    let kind = kind.unwrap_or(scene.config.progressive.kind);
                    let output = run::simulate(&scene, mode, levels.as_deref(), kind, exec)?;
                    (scene, output)
                }
            };
            run::write_run(&out, &scene, &output, obj_every)?;
            println!(
                "{}",
                json!({"run": out, "levels": output.manifest.levels, "seconds": output.manifest.total_seconds})
            );
            Ok(())
        }
        Command::Metrics { run: dir } => {
            let (cont, cons) = run::run_metrics(&dir, exec)?;
            lodyn::metrics::emit_traces(&dir, &cont, &cons)?;
            println!(
                "{}",
                json!({"continuity_rows": cont.len(), "consistency_rows": cons.len()})
            );
            Ok(())
        }
        Command::Report { run: dir } => {
            let summary = run::report(&dir)?;
            print!("{}", summary.to_text());
            Ok(())
        }
    }
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn binding_stats(map: &BindingMap, suspicious: &[usize]) -> serde_json::Value {
    json!({
        "vertices": map.len(),
        "extrapolated": map.n_extrapolated(),
        "min_weight": map.min_weight(),
        "max_weight": map.max_weight(),
        "suspicious_hosts": suspicious.len(),
        "suspicious_vertices": suspicious,
    })
}

fn cmd_bind(args: &SceneArgs, out: &Path, naive: bool) -> Result<()> {
    let scene = Scene::load(&args.scene)?;
    let levels = scene.select_levels(args.levels.as_deref())?;
    create_dir(out)?;
    let mut pairs = Vec::new();
    for w in levels.windows(2) {
        let (coarse, fine) = (scene.hierarchy.level(w[0]), scene.hierarchy.level(w[1]));
        let map = bind(fine, coarse)?;
        write(
            &out.join(format!("bind_{}_{}.txt", w[0], w[1])),
            &map.to_text()?,
        )?;
        let mut entry = json!({
            "coarse": w[0],
            "fine": w[1],
            "robust": binding_stats(&map, &misbinding_audit(fine, coarse, &map)?),
        });
        if naive {
            let nmap = bind_naive_closest(fine, coarse)?;
            write(
                &out.join(format!("bind_naive_{}_{}.txt", w[0], w[1])),
                &nmap.to_text()?,
            )?;
            entry["naive"] = binding_stats(&nmap, &misbinding_audit(fine, coarse, &nmap)?);
        }
        pairs.push(entry);
    }
    let report = json!({
        "scene": scene.path,
        "scene_hash": scene.hash,
        "hierarchy": scene.hierarchy.report(),
        "pairs": pairs,
    });
    write(&out.join("bind_report.json"), &pretty(&report))?;
    println!("{}", pretty(&report["pairs"]));
    Ok(())
}

fn cmd_prolong(args: &SceneArgs, out: &Path, kind: ProlongationKind) -> Result<()> {
    let scene = Scene::load(&args.scene)?;
    let levels = scene.select_levels(args.levels.as_deref())?;
    create_dir(out)?;
    let ops = scene.operators(&levels, kind)?;
    let mut pairs = Vec::new();
    for (w, op) in levels.windows(2).zip(&ops) {
        op.write_matrix_market(&out.join(format!("P_{}_{}.mtx", w[0], w[1])))?;
        pairs.push(json!({"coarse": w[0], "fine": w[1], "kind": op.kind(), "diagnostics": op.diagnostics()}));
    }
    let report = json!({"scene": scene.path, "kind": kind, "pairs": pairs});
    write(&out.join("prolong_report.json"), &pretty(&report))?;
    println!("{}", pretty(&report["pairs"]));
    Ok(())
}
