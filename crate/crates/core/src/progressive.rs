//! The progressive solution grid: a coarse rollout, then each finer level
//! stepped toward the VelPro target built from the level below, plus the
//! tracking and embedded baselines.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{advance, direct_rollout, Dynamics, Penalty, SolverSettings, Trajectory};
use crate::par::{self, Exec};
use crate::prolongation::ProlongationOperator;

/// One level's dynamics and initial state.
#[derive(Debug, Clone)]
pub struct LevelSetup {
    pub dynamics: Dynamics,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

impl LevelSetup {
    pub fn dim(&self) -> usize {
        self.dynamics.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveConfig {
    pub h: f64,
    pub steps: usize,
    /// Consistency penalty weight `w`.
    pub penalty: f64,
    pub solver: SolverSettings,
}

impl ProgressiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::Invalid(format!(
                "time step {} must be positive",
                self.h
            )));
        }
        if !(self.penalty >= 0.0) {
            return Err(Error::Invalid(format!(
                "penalty weight {} must be ≥ 0",
                self.penalty
            )));
        }
        self.solver.validate()
    }
}

/// Rows of states, one per level, each covering steps `0..=N`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolutionGrid {
    pub h: f64,
    pub steps: usize,
    pub rows: Vec<Trajectory>,
    /// Wall time spent filling each row, seconds.
    pub row_seconds: Vec<f64>,
}

impl SolutionGrid {
    pub fn new(h: f64, steps: usize) -> Self {
        SolutionGrid {
            h,
            steps,
            ..Self::default()
        }
    }

    pub fn n_levels(&self) -> usize {
        self.rows.len()
    }

    /// Append a row; the previous row must be complete.
    pub fn push_row(&mut self, row: Trajectory, seconds: f64) -> Result<()> {
        if row.steps() != self.steps {
            return Err(Error::Invalid(format!(
                "row {} has {} steps, grid expects {}",
                self.rows.len(),
                row.steps(),
                self.steps
            )));
        }
        self.rows.push(row);
        self.row_seconds.push(seconds);
        Ok(())
    }

    /// `v[l][t] = (x[l][t] − x[l][t−1]) / h` for `t ≥ 1`, bit for bit.
    pub fn velocities_consistent(&self) -> bool {
        self.rows.iter().all(|r| {
            (1..r.x.len()).all(|t| {
                r.x[t]
                    .iter()
                    .zip(&r.x[t - 1])
                    .zip(&r.v[t])
                    .all(|((a, b), v)| (a - b) / self.h == *v)
            })
        })
    }
}

/// `x̂ = x_fine + P (x_coarse_t − x_coarse_tm1)`.
pub fn velpro_target(
    x_fine_t: &[f64],
    p: &ProlongationOperator,
    x_coarse_t: &[f64],
    x_coarse_tm1: &[f64],
    dim: usize,
) -> Result<Vec<f64>> {
    if x_coarse_t.len() != x_coarse_tm1.len() {
        return Err(Error::SizeMismatch {
            what: "coarse states",
            expected: x_coarse_t.len(),
            found: x_coarse_tm1.len(),
        });
    }
    if x_fine_t.len() != p.n_fine() * dim {
        return Err(Error::SizeMismatch {
            what: "fine state",
            expected: p.n_fine() * dim,
            found: x_fine_t.len(),
        });
    }
    let dc: Vec<f64> = x_coarse_t
        .iter()
        .zip(x_coarse_tm1)
        .map(|(a, b)| a - b)
        .collect();
    let df = p.prolong(&dc, dim)?;
    Ok(x_fine_t.iter().zip(&df).map(|(a, b)| a + b).collect())
}

/// How a row's momentum target is formed.
#[derive(Debug, Clone, Copy)]
pub enum Momentum<'a> {
    /// `x̃ = x^t + h v^t`.
    Standard,
    /// VelPro from the complete row below.
    VelPro {
        coarse: &'a Trajectory,
        p: &'a ProlongationOperator,
    },
}

/// Target of the step `t → t + 1` of `row`.
pub fn momentum_target(
    row: &Trajectory,
    t: usize,
    rule: Momentum,
    h: f64,
    dim: usize,
) -> Result<Vec<f64>> {
    match rule {
        Momentum::Standard => Ok(row.x[t]
            .iter()
            .zip(&row.v[t])
            .map(|(x, v)| x + h * v)
            .collect()),
        Momentum::VelPro { coarse, p } => {
            let before;
            let xc_tm1 = if t == 0 {
                before = coarse_before_start(coarse, h);
                &before
            } else {
                &coarse.x[t - 1]
            };
            velpro_target(&row.x[t], p, &coarse.x[t], xc_tm1, dim)
        }
    }
}

/// Level 0 by direct simulation.
pub fn run_coarsest(level: &LevelSetup, cfg: &ProgressiveConfig) -> Result<Trajectory> {
    cfg.validate()?;
    direct_rollout(
        &level.dynamics,
        level.x0.clone(),
        level.v0.clone(),
        cfg.h,
        cfg.steps,
        &cfg.solver,
    )
}

/// The coarse state one step before the start, `x_c^0 − h v_c^0`.
fn coarse_before_start(coarse: &Trajectory, h: f64) -> Vec<f64> {
    coarse.x[0]
        .iter()
        .zip(&coarse.v[0])
        .map(|(x, v)| x - h * v)
        .collect()
}

fn penalty_target(
    coarse: &Trajectory,
    p: &ProlongationOperator,
    t: usize,
    w: f64,
    dim: usize,
) -> Result<Option<Penalty>> {
    if w > 0.0 {
        Ok(Some(Penalty {
            weight: w,
            target: p.prolong(&coarse.x[t], dim)?,
        }))
    } else {
        Ok(None)
    }
}

/// Fill the row of `level` from the complete row `coarse` below it.
pub fn advance_level(
    coarse: &Trajectory,
    level: &LevelSetup,
    p: &ProlongationOperator,
    cfg: &ProgressiveConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if coarse.steps() < cfg.steps {
        return Err(Error::Invalid(format!(
            "coarse row has {} steps, need {}",
            coarse.steps(),
            cfg.steps
        )));
    }
    let dim = level.dim();
    let lvl = level.dynamics.level;
    let rule = Momentum::VelPro { coarse, p };
    let mut row = Trajectory::start(level.x0.clone(), level.v0.clone());
    for t in 0..cfg.steps {
        let step = || -> Result<_> {
            let x_hat = momentum_target(&row, t, rule, cfg.h, dim)?;
            let pen = penalty_target(coarse, p, t + 1, cfg.penalty, dim)?;
            advance(&level.dynamics, cfg.h, &row.x[t], x_hat, pen, &cfg.solver)
        };
        let (next, report) = step().map_err(|e| e.at_step(lvl, t))?;
        row.push(next, cfg.h, report);
    }
    Ok(row)
}

/// Row by row over the hierarchy; `ops[l]` maps level `l` to `l + 1`.
pub fn run_progressive(
    levels: &[LevelSetup],
    ops: &[ProlongationOperator],
    cfg: &ProgressiveConfig,
) -> Result<SolutionGrid> {
    check_levels(levels, ops)?;
    let mut grid = SolutionGrid::new(cfg.h, cfg.steps);
    let start = Instant::now();
    let row = run_coarsest(&levels[0], cfg)?;
    grid.push_row(row, start.elapsed().as_secs_f64())?;
    for l in 1..levels.len() {
        let start = Instant::now();
        let row = advance_level(&grid.rows[l - 1], &levels[l], &ops[l - 1], cfg)?;
        grid.push_row(row, start.elapsed().as_secs_f64())?;
    }
    Ok(grid)
}

/// Every level simulated on its own; levels run concurrently under
/// [`Exec::Parallel`].
pub fn run_direct_all(
    levels: &[LevelSetup],
    cfg: &ProgressiveConfig,
    exec: Exec,
) -> Result<SolutionGrid> {
    cfg.validate()?;
    let rows = par::map_slice(exec, levels, |level| {
        let start = Instant::now();
        run_coarsest(level, cfg).map(|r| (r, start.elapsed().as_secs_f64()))
    });
    let mut grid = SolutionGrid::new(cfg.h, cfg.steps);
    for r in rows {
        let (row, secs) = r?;
        grid.push_row(row, secs)?;
    }
    Ok(grid)
}

/// Fine rollout with the standard momentum target plus a pull toward the
/// prolonged coarse state.
pub fn run_tracks_baseline(
    coarse: &Trajectory,
    fine: &LevelSetup,
    p: &ProlongationOperator,
    cfg: &ProgressiveConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let dim = fine.dim();
    let mut row = Trajectory::start(fine.x0.clone(), fine.v0.clone());
    for t in 0..cfg.steps {
        let step = || -> Result<_> {
            let x_tilde = momentum_target(&row, t, Momentum::Standard, cfg.h, dim)?;
            let pen = penalty_target(coarse, p, t + 1, cfg.penalty, dim)?;
            advance(&fine.dynamics, cfg.h, &row.x[t], x_tilde, pen, &cfg.solver)
        };
        let (next, report) = step().map_err(|e| e.at_step(fine.dynamics.level, t))?;
        row.push(next, cfg.h, report);
    }
    Ok(row)
}

/// `x_fine^t = P x_coarse^t` for every frame; velocities by the same map.
pub fn run_embedded_baseline(
    coarse: &Trajectory,
    p: &ProlongationOperator,
    dim: usize,
) -> Result<Trajectory> {
    let x = coarse
        .x
        .iter()
        .map(|x| p.prolong(x, dim))
        .collect::<Result<Vec<_>>>()?;
    let v = coarse
        .v
        .iter()
        .map(|v| p.prolong(v, dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        x,
        v,
        reports: Vec::new(),
    })
}

fn check_levels(levels: &[LevelSetup], ops: &[ProlongationOperator]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Invalid("no levels".into()));
    }
    if ops.len() + 1 != levels.len() {
        return Err(Error::SizeMismatch {
            what: "prolongation operators",
            expected: levels.len() - 1,
            found: ops.len(),
        });
    }
    for (l, op) in ops.iter().enumerate() {
        let (nc, nf) = (
            levels[l].dynamics.mass.len(),
            levels[l + 1].dynamics.mass.len(),
        );
        if op.n_coarse() != nc || op.n_fine() != nf {
            return Err(Error::Invalid(format!(
                "operator {l} is {}×{}, levels need {nf}×{nc}",
                op.n_fine(),
                op.n_coarse()
            )));
        }
    }
    Ok(())
}
