//! Temporal continuity and cross-level consistency of a solution grid.
//!
//! Continuity at step `t` of level `l`:
//!
//! * `e = ‖½(y^{t+1} − 2y^t + y^{t−1}) + (h²/2) M⁻¹∇F(y^{t+1})‖²_M`
//! * `ê = ‖(x^{t+1} − x̂^t) + h² M⁻¹∇F(x^{t+1})‖²_M`, with `x̂` the target the
//!   integrator actually used
//! * `n = e / ê`
//!
//! `F` is the level's potential (elastic, barrier, friction lagged at `t`,
//! gravity). Rows of fixed vertices are left out of both residuals. `ê` is
//! floored at the round-off level of the positions so `n` stays finite on
//! exact trajectories.
//!
//! Consistency: `d = ‖Π x_l^t − x_{l−1}^t‖²_{M_{l−1}}` with `Π = (PᵀP)⁻¹Pᵀ`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::{Dynamics, StepProblem, Trajectory};
use crate::mesh::LumpedMass;
use crate::par::{self, Exec};
use crate::progressive::{momentum_target, Momentum, SolutionGrid};
use crate::prolongation::{Projection, ProlongationOperator};

pub const CONTINUITY_HEADER: &str = "l,t,e,e_hat,n";
pub const CONSISTENCY_HEADER: &str = "l,t,d";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityRow {
    pub level: usize,
    pub t: usize,
    pub e: f64,
    pub e_hat: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConsistencyRow {
    pub level: usize,
    pub t: usize,
    pub d: f64,
}

/// Continuity of `row` at `1 ≤ t ≤ N − 1`.
pub fn continuity_error(
    row: &Trajectory,
    dynamics: &Dynamics,
    h: f64,
    t: usize,
    rule: Momentum,
) -> Result<ContinuityRow> {
    let n = row.steps();
    if t == 0 || t + 1 > n {
        return Err(Error::Invalid(format!(
            "continuity needs 1 ≤ t ≤ {}, got {t}",
            n.saturating_sub(1)
        )));
    }
    let d = dynamics.dim;
    let (ym, y0, yp) = (&row.x[t - 1], &row.x[t], &row.x[t + 1]);
    let x_hat = momentum_target(row, t, rule, h, d)?;
    let problem = StepProblem::new(dynamics, h, y0, x_hat.clone())?;
    let grad = problem.potential_gradient(yp);
    let mut fixed = vec![false; dynamics.mass.len()];
    for &v in &dynamics.fixed {
        fixed[v] = true;
    }
    let h2 = h * h;
    let mut r_e = vec![0.0; yp.len()];
    let mut r_hat = vec![0.0; yp.len()];
    for (i, &m) in dynamics.mass.0.iter().enumerate() {
        if fixed[i] {
            continue;
        }
        for k in 0..d {
            let j = i * d + k;
            let force = h2 * grad[j] / m;
            r_e[j] = 0.5 * (yp[j] - 2.0 * y0[j] + ym[j]) + 0.5 * force;
            r_hat[j] = (yp[j] - x_hat[j]) + force;
        }
    }
    let e = dynamics.mass.norm2(&r_e);
    let scale = yp.iter().fold(0.0_f64, |a, v| a.max(v.abs())).max(1.0);
    let floor = dynamics.mass.total() * (f64::EPSILON * scale).powi(2);
    let e_hat = dynamics.mass.norm2(&r_hat).max(floor);
    Ok(ContinuityRow {
        level: dynamics.level,
        t,
        e,
        e_hat,
        n: e / e_hat,
    })
}

/// Continuity rows `t = 1..N−1` of one level.
pub fn continuity_trace(
    row: &Trajectory,
    dynamics: &Dynamics,
    h: f64,
    rule: Momentum,
    exec: Exec,
) -> Result<Vec<ContinuityRow>> {
    let n = row.steps();
    if n < 2 {
        return Ok(Vec::new());
    }
    par::map_indexed(exec, n - 1, |k| {
        continuity_error(row, dynamics, h, k + 1, rule)
    })
    .into_iter()
    .collect()
}

/// `‖Π x_fine − x_coarse‖²_{M_coarse}`.
pub fn consistency_error(
    x_fine: &[f64],
    x_coarse: &[f64],
    projection: &Projection,
    coarse_mass: &LumpedMass,
    dim: usize,
) -> Result<f64> {
    let px = projection.apply(x_fine, dim)?;
    if px.len() != x_coarse.len() {
        return Err(Error::SizeMismatch {
            what: "coarse state",
            expected: px.len(),
            found: x_coarse.len(),
        });
    }
    let diff: Vec<f64> = px.iter().zip(x_coarse).map(|(a, b)| a - b).collect();
    Ok(coarse_mass.norm2(&diff))
}

/// Consistency rows `t = 1..=N` between `fine` (level `level`) and `coarse`.
pub fn consistency_trace(
    fine: &Trajectory,
    coarse: &Trajectory,
    projection: &Projection,
    coarse_mass: &LumpedMass,
    level: usize,
    dim: usize,
) -> Result<Vec<ConsistencyRow>> {
    (1..fine.x.len())
        .map(|t| {
            consistency_error(&fine.x[t], &coarse.x[t], projection, coarse_mass, dim)
                .map(|d| ConsistencyRow { level, t, d })
        })
        .collect()
}

/// How the rows of a grid were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Level 0 direct, finer levels VelPro.
    Progressive,
    /// Every level direct (also used for tracking runs).
    Direct,
}

/// Both traces for a whole grid, ordered by level then step.
pub fn grid_metrics(
    grid: &SolutionGrid,
    dynamics: &[&Dynamics],
    ops: &[ProlongationOperator],
    kind: GridKind,
    exec: Exec,
) -> Result<(Vec<ContinuityRow>, Vec<ConsistencyRow>)> {
    if dynamics.len() != grid.n_levels() || ops.len() + 1 < grid.n_levels() {
        return Err(Error::SizeMismatch {
            what: "levels for metrics",
            expected: grid.n_levels(),
            found: dynamics.len(),
        });
    }
    let mut cont = Vec::new();
    let mut cons = Vec::new();
    for (l, row) in grid.rows.iter().enumerate() {
        let rule = match kind {
            GridKind::Progressive if l > 0 => Momentum::VelPro {
                coarse: &grid.rows[l - 1],
                p: &ops[l - 1],
            },
            _ => Momentum::Standard,
        };
        cont.extend(continuity_trace(row, dynamics[l], grid.h, rule, exec)?);
        if l > 0 {
            let proj = Projection::new(ops[l - 1].weights())?;
            cons.extend(consistency_trace(
                row,
                &grid.rows[l - 1],
                &proj,
                &dynamics[l - 1].mass,
                dynamics[l].level,
                dynamics[l].dim,
            )?);
        }
    }
    Ok((cont, cons))
}

pub fn continuity_csv(rows: &[ContinuityRow]) -> String {
    let mut s = format!("{CONTINUITY_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{},{:?},{:?},{:?}", r.level, r.t, r.e, r.e_hat, r.n)
            .expect("write to string");
    }
    s
}

pub fn consistency_csv(rows: &[ConsistencyRow]) -> String {
    let mut s = format!("{CONSISTENCY_HEADER}\n");
    for r in rows {
        writeln!(s, "{},{},{:?}", r.level, r.t, r.d).expect("write to string");
    }
    s
}

/// Write `continuity.csv` and `consistency.csv` into `dir`.
pub fn emit_traces(
    dir: &Path,
    continuity: &[ContinuityRow],
    consistency: &[ConsistencyRow],
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("continuity.csv", continuity_csv(continuity)),
        ("consistency.csv", consistency_csv(consistency)),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Mean of `d` over the rows of one level (`NaN` if there are none).
pub fn mean_consistency(rows: &[ConsistencyRow], level: usize) -> f64 {
    let ds: Vec<f64> = rows
        .iter()
        .filter(|r| r.level == level)
        .map(|r| r.d)
        .collect();
    ds.iter().sum::<f64>() / ds.len() as f64
}

/// Mass-weighted center of mass.
pub fn center_of_mass(x: &[f64], mass: &LumpedMass) -> Vec<f64> {
    let d = x.len() / mass.len();
    let mut c = vec![0.0; d];
    for (m, xi) in mass.0.iter().zip(x.chunks(d)) {
        for k in 0..d {
            c[k] += m * xi[k];
        }
    }
    let total = mass.total();
    c.iter().map(|v| v / total).collect()
}

/// Mean over steps and over levels `l ≥ 1` of the distance between the
/// center of mass of level `l` and of level 0.
pub fn com_discrepancy(grid: &SolutionGrid, masses: &[&LumpedMass]) -> f64 {
    if grid.n_levels() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for t in 0..=grid.steps {
        let c0 = center_of_mass(&grid.rows[0].x[t], masses[0]);
        for l in 1..grid.n_levels() {
            let c = center_of_mass(&grid.rows[l].x[t], masses[l]);
            sum += c
                .iter()
                .zip(&c0)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            count += 1;
        }
    }
    sum / count as f64
}

/// Minimum contact distance at every frame.
pub fn min_distance_trace(row: &Trajectory, dynamics: &Dynamics, exec: Exec) -> Vec<f64> {
    par::map_slice(exec, &row.x, |x| dynamics.min_distance(x))
}

#[cfg(test)]
mod tests;
