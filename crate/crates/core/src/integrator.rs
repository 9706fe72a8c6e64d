//! Implicit Euler as minimization of the incremental potential
//!
//! `E(x) = ‖x − x̃‖²_M / 2h² + Ψ(x) + B(x) + D(x) − Σ mᵢ g·xᵢ + w‖x − y‖²_M`
//!
//! by projected Newton with a backtracking line search capped by the
//! contact step filter.

use serde::{Deserialize, Serialize};

use crate::contact::{ContactModel, FrictionSet};
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseLdlt, Triplets};
use crate::materials::Elasticity;
use crate::mesh::LumpedMass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Newton decrement threshold in meters: `√(h² gᵀH⁻¹g / M_total)`.
    pub newton_tol: f64,
    pub max_iters: usize,
    /// Backtracking factor.
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub project_psd: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            newton_tol: 1e-6,
            max_iters: 100,
            shrink: 0.5,
            armijo: 1e-4,
            project_psd: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0)
            || self.max_iters == 0
            || !(self.shrink > 0.0 && self.shrink < 1.0)
        {
            return Err(Error::Invalid(format!(
                "solver settings need newton_tol > 0, max_iters ≥ 1, 0 < shrink < 1 (got {self:?})"
            )));
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return Err(Error::Invalid(format!(
                "armijo constant {} outside (0, 0.5)",
                self.armijo
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_decrement: f64,
    pub line_search_shrinks: usize,
    /// Smallest accepted step fraction.
    pub alpha_min: f64,
    /// Smallest contact distance at the result (`+∞` without obstacles).
    pub min_distance: f64,
    /// Incremental potential at the start and after each accepted iterate.
    pub energies: Vec<f64>,
}

/// The time-independent part of one level's dynamics.
#[derive(Debug, Clone)]
pub struct Dynamics {
    /// Hierarchy level, used to label errors.
    pub level: usize,
    pub dim: usize,
    pub mass: LumpedMass,
    pub gravity: Vec<f64>,
    pub elasticity: Option<Elasticity>,
    pub contact: Option<ContactModel>,
    /// Pinned vertices, sorted.
    pub fixed: Vec<usize>,
}

impl Dynamics {
    pub fn new(dim: usize, mass: LumpedMass, gravity: Vec<f64>) -> Result<Self> {
        if gravity.len() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                found: gravity.len(),
            });
        }
        Ok(Dynamics {
            level: 0,
            dim,
            mass,
            gravity,
            elasticity: None,
            contact: None,
            fixed: Vec::new(),
        })
    }

    pub fn at_level(mut self, level: usize) -> Self {
        self.level = level;
        self
    }

    pub fn with_elasticity(mut self, e: Elasticity) -> Self {
        self.elasticity = Some(e);
        self
    }

    pub fn with_contact(mut self, c: ContactModel) -> Self {
        self.contact = Some(c);
        self
    }

    pub fn with_fixed(mut self, mut fixed: Vec<usize>) -> Result<Self> {
        fixed.sort_unstable();
        fixed.dedup();
        if let Some(&v) = fixed.iter().find(|&&v| v >= self.mass.len()) {
            return Err(Error::Invalid(format!("fixed vertex {v} out of range")));
        }
        self.fixed = fixed;
        Ok(self)
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.len() * self.dim
    }

    fn fixed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n_dofs()];
        for &v in &self.fixed {
            mask[v * self.dim..(v + 1) * self.dim].fill(true);
        }
        mask
    }

    pub fn min_distance(&self, x: &[f64]) -> f64 {
        self.contact
            .as_ref()
            .map_or(f64::INFINITY, |c| c.min_distance(x))
    }

    /// Friction lagged at `x`.
    pub fn friction_at(&self, x: &[f64]) -> FrictionSet {
        match &self.contact {
            Some(c) => c.friction_set(x),
            None => FrictionSet::empty(self.dim),
        }
    }
}

/// Quadratic pull `w‖x − target‖²_M`.
#[derive(Debug, Clone)]
pub struct Penalty {
    pub weight: f64,
    pub target: Vec<f64>,
}

/// One implicit Euler step.
#[derive(Debug, Clone)]
pub struct StepProblem<'a> {
    pub dynamics: &'a Dynamics,
    pub h: f64,
    pub x_tilde: Vec<f64>,
    /// Prescribed positions of the fixed vertices, `dim` values per vertex.
    pub dirichlet: Vec<f64>,
    pub friction: FrictionSet,
    pub penalty: Option<Penalty>,
}

impl<'a> StepProblem<'a> {
    /// Step from `x` toward the momentum target `x_tilde`, with friction
    /// lagged at `x` and fixed vertices held where they are in `x`.
    pub fn new(dynamics: &'a Dynamics, h: f64, x: &[f64], x_tilde: Vec<f64>) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::Invalid(format!("time step {h} must be positive")));
        }
        let n = dynamics.n_dofs();
        for (what, len) in [("positions", x.len()), ("momentum target", x_tilde.len())] {
            if len != n {
                return Err(Error::SizeMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        let d = dynamics.dim;
        let dirichlet = dynamics
            .fixed
            .iter()
            .flat_map(|&v| x[v * d..(v + 1) * d].to_vec())
            .collect();
        Ok(StepProblem {
            dynamics,
            h,
            x_tilde,
            dirichlet,
            friction: dynamics.friction_at(x),
            penalty: None,
        })
    }

    pub fn with_penalty(mut self, penalty: Option<Penalty>) -> Self {
        self.penalty = penalty.filter(|p| p.weight > 0.0);
        self
    }

    fn eps(&self) -> f64 {
        self.dynamics
            .contact
            .as_ref()
            .map_or(1.0, |c| c.params().eps_v)
            * self.h
    }

    fn mass_weighted(&self, x: &[f64], y: &[f64]) -> f64 {
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.dynamics.mass.norm2(&diff)
    }

    /// `Ψ + B + D − Σ mᵢ g·xᵢ`: everything but inertia and the penalty.
    pub fn potential(&self, x: &[f64]) -> f64 {
        let dy = self.dynamics;
        let mut e = 0.0;
        if let Some(c) = &dy.contact {
            e += c.barrier_energy(x);
            if !e.is_finite() {
                return f64::INFINITY;
            }
        }
        if let Some(el) = &dy.elasticity {
            e += el.energy(x);
        }
        e += self.friction.energy(x, self.eps());
        let d = dy.dim;
        for (i, m) in dy.mass.0.iter().enumerate() {
            for k in 0..d {
                e -= m * dy.gravity[k] * x[i * d + k];
            }
        }
        e
    }

    pub fn potential_gradient(&self, x: &[f64]) -> Vec<f64> {
        let dy = self.dynamics;
        let d = dy.dim;
        let mut g = vec![0.0; x.len()];
        if let Some(el) = &dy.elasticity {
            el.add_gradient(x, &mut g);
        }
        if let Some(c) = &dy.contact {
            c.add_barrier_gradient(x, &mut g);
        }
        self.friction.add_gradient(x, self.eps(), &mut g);
        for (i, m) in dy.mass.0.iter().enumerate() {
            for k in 0..d {
                g[i * d + k] -= m * dy.gravity[k];
            }
        }
        g
    }

    /// Incremental potential; `+∞` at infeasible or inverted states.
    pub fn value(&self, x: &[f64]) -> f64 {
        let pot = self.potential(x);
        if !pot.is_finite() {
            return f64::INFINITY;
        }
        let mut e = self.mass_weighted(x, &self.x_tilde) / (2.0 * self.h * self.h) + pot;
        if let Some(p) = &self.penalty {
            e += p.weight * self.mass_weighted(x, &p.target);
        }
        e
    }

    /// Gradient with the fixed entries zeroed.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let dy = self.dynamics;
        let d = dy.dim;
        let mut g = self.potential_gradient(x);
        let inv_h2 = 1.0 / (self.h * self.h);
        for (i, m) in dy.mass.0.iter().enumerate() {
            for k in 0..d {
                let j = i * d + k;
                g[j] += m * inv_h2 * (x[j] - self.x_tilde[j]);
                if let Some(p) = &self.penalty {
                    g[j] += 2.0 * p.weight * m * (x[j] - p.target[j]);
                }
            }
        }
        for &v in &dy.fixed {
            g[v * d..(v + 1) * d].fill(0.0);
        }
        g
    }

    /// Hessian with fixed rows and columns replaced by the identity.
    pub fn hessian(&self, x: &[f64], project: bool) -> CsrMatrix {
        let dy = self.dynamics;
        let d = dy.dim;
        let n = x.len();
        let mut t = Triplets::new(n, n);
        let inv_h2 = 1.0 / (self.h * self.h);
        let w2 = self.penalty.as_ref().map_or(0.0, |p| 2.0 * p.weight);
        for (i, m) in dy.mass.0.iter().enumerate() {
            for k in 0..d {
                t.push(i * d + k, i * d + k, m * (inv_h2 + w2));
            }
        }
        if let Some(el) = &dy.elasticity {
            el.add_hessian(x, project, &mut t);
        }
        if let Some(c) = &dy.contact {
            c.add_barrier_hessian(x, project, &mut t);
        }
        self.friction.add_hessian(x, self.eps(), &mut t);
        if dy.fixed.is_empty() {
            return t.to_csr();
        }
        let mask = dy.fixed_mask();
        let full = t.to_csr();
        let mut out = Triplets::with_capacity(n, n, full.nnz());
        for (r, c, v) in full.triplets() {
            if !mask[r] && !mask[c] {
                out.push(r, c, v);
            }
        }
        for (j, &m) in mask.iter().enumerate() {
            if m {
                out.push(j, j, 1.0);
            }
        }
        out.to_csr()
    }

    fn start(&self, x0: &[f64]) -> Vec<f64> {
        let d = self.dynamics.dim;
        let mut x = x0.to_vec();
        for (a, &v) in self.dynamics.fixed.iter().enumerate() {
            x[v * d..(v + 1) * d].copy_from_slice(&self.dirichlet[a * d..(a + 1) * d]);
        }
        x
    }
}

/// Factor `h`, adding a growing diagonal shift if it is not positive definite.
fn factor_pd(h: &CsrMatrix, perm: &[usize]) -> Result<SparseLdlt> {
    if let Ok(f) = SparseLdlt::factor(h, perm, None) {
        if f.inertia().1 == 0 {
            return Ok(f);
        }
    }
    let n = h.nrows();
    let scale = (0..n)
        .map(|i| h.get(i, i).abs())
        .fold(0.0, f64::max)
        .max(1.0);
    let mut delta = 1e-8 * scale;
    for _ in 0..20 {
        let shift = vec![delta; n];
        if let Ok(f) = SparseLdlt::factor(h, perm, Some(&shift)) {
            if f.inertia().1 == 0 {
                return Ok(f);
            }
        }
        delta *= 10.0;
    }
    Err(Error::Singular(
        "newton system could not be made positive definite".into(),
    ))
}

/// Minimize the incremental potential from `x0` (which must be feasible).
pub fn solve_step(
    problem: &StepProblem,
    x0: &[f64],
    settings: &SolverSettings,
) -> Result<(Vec<f64>, SolveReport)> {
    settings.validate()?;
    let dy = problem.dynamics;
    let total_mass = dy.mass.total();
    let mut x = problem.start(x0);
    let mut e = problem.value(&x);
    if !e.is_finite() {
        return Err(Error::Infeasible(
            "newton start point has infinite energy".into(),
        ));
    }
    let mut report = SolveReport {
        alpha_min: 1.0,
        energies: vec![e],
        ..SolveReport::default()
    };
    let mut perm: Option<Vec<usize>> = None;
    for _ in 0..settings.max_iters {
        let g = problem.gradient(&x);
        let hm = problem.hessian(&x, settings.project_psd);
        let p = perm.get_or_insert_with(|| SparseLdlt::ordering(&hm, dy.dim));
        let f = factor_pd(&hm, p)?;
        let dx: Vec<f64> = f.solve(&g).into_iter().map(|v| -v).collect();
        let slope: f64 = g.iter().zip(&dx).map(|(a, b)| a * b).sum();
        let dec = (problem.h * problem.h * (-slope).max(0.0) / total_mass).sqrt();
        report.final_decrement = dec;
        if dec <= settings.newton_tol {
            report.min_distance = dy.min_distance(&x);
            return Ok((x, report));
        }
        let mut alpha = match &dy.contact {
            Some(c) => c.max_step(&x, &dx)?,
            None => 1.0,
        };
        let slack = 4.0 * f64::EPSILON * e.abs();
        let mut accepted = None;
        while alpha > 1e-12 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + alpha * b).collect();
            let et = problem.value(&trial);
            if et <= e + settings.armijo * alpha * slope + slack {
                accepted = Some((trial, et));
                break;
            }
            alpha *= settings.shrink;
            report.line_search_shrinks += 1;
        }
        let Some((trial, et)) = accepted else {
            report.min_distance = dy.min_distance(&x);
            return Err(Error::NotConverged { best: x, report });
        };
        x = trial;
        e = et;
        report.iterations += 1;
        report.alpha_min = report.alpha_min.min(alpha);
        report.energies.push(e);
    }
    // the last accepted iterate may already satisfy the tolerance
    let g = problem.gradient(&x);
    let hm = problem.hessian(&x, settings.project_psd);
    let f = factor_pd(
        &hm,
        perm.as_deref()
            .unwrap_or(&SparseLdlt::ordering(&hm, dy.dim)),
    )?;
    let slope: f64 = g.iter().zip(f.solve(&g)).map(|(a, b)| a * b).sum();
    report.final_decrement = (problem.h * problem.h * slope.max(0.0) / total_mass).sqrt();
    report.min_distance = dy.min_distance(&x);
    if report.final_decrement <= settings.newton_tol {
        return Ok((x, report));
    }
    Err(Error::NotConverged { best: x, report })
}

/// Positions, velocities and per-step solve reports of one rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub reports: Vec<SolveReport>,
}

impl Trajectory {
    pub fn start(x0: Vec<f64>, v0: Vec<f64>) -> Self {
        Trajectory {
            x: vec![x0],
            v: vec![v0],
            reports: Vec::new(),
        }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> usize {
        self.x.len() - 1
    }

    /// Append `x_next`, setting `v = (x_next − x_last)/h`.
    pub fn push(&mut self, x_next: Vec<f64>, h: f64, report: SolveReport) {
        let last = self.x.last().expect("trajectory has a start state");
        let v = x_next.iter().zip(last).map(|(a, b)| (a - b) / h).collect();
        self.x.push(x_next);
        self.v.push(v);
        self.reports.push(report);
    }
}

/// Advance `x` toward target `x_hat`, with optional penalty.
pub fn advance(
    dynamics: &Dynamics,
    h: f64,
    x: &[f64],
    x_hat: Vec<f64>,
    penalty: Option<Penalty>,
    settings: &SolverSettings,
) -> Result<(Vec<f64>, SolveReport)> {
    let problem = StepProblem::new(dynamics, h, x, x_hat)?.with_penalty(penalty);
    solve_step(&problem, x, settings)
}

/// `n` implicit Euler steps with the standard momentum target `x + h v`.
pub fn direct_rollout(
    dynamics: &Dynamics,
    x0: Vec<f64>,
    v0: Vec<f64>,
    h: f64,
    n: usize,
    settings: &SolverSettings,
) -> Result<Trajectory> {
    let mut traj = Trajectory::start(x0, v0);
    for t in 0..n {
        let x = &traj.x[t];
        let x_tilde = x.iter().zip(&traj.v[t]).map(|(a, b)| a + h * b).collect();
        let (next, report) = advance(dynamics, h, x, x_tilde, None, settings)
            .map_err(|e| e.at_step(dynamics.level, t))?;
        traj.push(next, h, report);
    }
    Ok(traj)
}

#[cfg(test)]
mod tests;
