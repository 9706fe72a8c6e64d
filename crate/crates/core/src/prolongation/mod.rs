//! Linear prolongation operators between consecutive levels.
//!
//! An operator is a sparse matrix with one row per fine vertex and one column
//! per coarse vertex. The same scalar weights apply to every coordinate, so
//! the velocity prolongator equals the operator itself.

mod biharmonic;
mod phong;

pub use biharmonic::{
    affine_kernel_residual, biharmonic_system, build_biharmonic, solve_biharmonic, BiharmonicSystem,
};
pub use phong::{build_phong, DEFAULT_PHONG_BLEND};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binding::BindingMap;
use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, SparseLdlt, Triplets};
use crate::mesh::SimplicialMesh;

/// Power iterations used for the 2-norm estimate.
pub const POWER_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ProlongationKind {
    #[default]
    Barycentric,
    Biharmonic,
    Phong,
}

impl std::str::FromStr for ProlongationKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "bary" | "barycentric" => Ok(ProlongationKind::Barycentric),
            "biharmonic" => Ok(ProlongationKind::Biharmonic),
            "phong" => Ok(ProlongationKind::Phong),
            other => Err(format!("unknown prolongation kind {other:?}")),
        }
    }
}

/// Norm diagnostics of an operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub rows: usize,
    pub cols: usize,
    pub frobenius_norm: f64,
    pub two_norm_estimate: f64,
    pub min_entry: f64,
    pub max_entry: f64,
    pub row_sum_max_dev: f64,
    pub has_negative: bool,
    /// `√rows`, the Frobenius bound for nonnegative row-stochastic operators.
    pub sqrt_rows: f64,
    /// Only set for operators without negative entries.
    pub frobenius_bound_violated: bool,
    /// Coarse-to-fine boundary distance of the level pair, when known.
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ProlongationOperator {
    weights: CsrMatrix,
    kind: ProlongationKind,
    diagnostics: NormReport,
}

impl ProlongationOperator {
    pub fn new(weights: CsrMatrix, kind: ProlongationKind) -> Self {
        let diagnostics = norm_report(&weights);
        if diagnostics.row_sum_max_dev > 1e-10 {
            log::warn!(
                "{kind:?} prolongation rows deviate from unit sum by {:e}",
                diagnostics.row_sum_max_dev
            );
        }
        ProlongationOperator {
            weights,
            kind,
            diagnostics,
        }
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    pub fn kind(&self) -> ProlongationKind {
        self.kind
    }

    pub fn diagnostics(&self) -> &NormReport {
        &self.diagnostics
    }

    pub fn set_epsilon(&mut self, eps: f64) {
        self.diagnostics.epsilon = Some(eps);
    }

    pub fn n_fine(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_coarse(&self) -> usize {
        self.weights.ncols()
    }

    /// Apply to a flat per-vertex field with `dim` components per vertex.
    pub fn prolong(&self, coarse: &[f64], dim: usize) -> Result<Vec<f64>> {
        prolong(&self.weights, coarse, dim)
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        self.weights.write_matrix_market(path)
    }
}

/// Fine field `P · coarse`, coordinate-wise.
pub fn prolong(p: &CsrMatrix, coarse: &[f64], dim: usize) -> Result<Vec<f64>> {
    if coarse.len() != p.ncols() * dim {
        return Err(Error::SizeMismatch {
            what: "coarse field",
            expected: p.ncols() * dim,
            found: coarse.len(),
        });
    }
    let mut out = vec![0.0; p.nrows() * dim];
    for r in 0..p.nrows() {
        let (cols, vals) = p.row(r);
        for (&c, &w) in cols.iter().zip(vals) {
            for k in 0..dim {
                out[r * dim + k] += w * coarse[c * dim + k];
            }
        }
    }
    Ok(out)
}

/// One row per fine vertex holding its host element's barycentric weights.
pub fn build_barycentric(
    binding: &BindingMap,
    coarse: &SimplicialMesh,
) -> Result<ProlongationOperator> {
    let rows = binding.complete()?;
    let mut t = Triplets::with_capacity(
        rows.len(),
        coarse.n_vertices(),
        rows.len() * (coarse.dim() + 1),
    );
    for (i, b) in rows.iter().enumerate() {
        for (&v, &w) in coarse.element(b.host).iter().zip(&b.coords) {
            t.push(i, v, w);
        }
    }
    Ok(ProlongationOperator::new(
        t.to_csr(),
        ProlongationKind::Barycentric,
    ))
}

/// Least-squares left inverse `(PᵀP)⁻¹Pᵀ` with a cached factorization.
#[derive(Debug, Clone)]
pub struct Projection {
    pt: CsrMatrix,
    ptp: CsrMatrix,
    factor: SparseLdlt,
}

impl Projection {
    pub fn new(p: &CsrMatrix) -> Result<Self> {
        let pt = p.transpose();
        let ptp = pt.matmul(p);
        let factor = SparseLdlt::new(&ptp, 1).map_err(|_| Error::RankDeficient {
            what: "prolongation operator (zero pivot in PᵀP)".into(),
            rank: p.ncols().saturating_sub(1),
            expected: p.ncols(),
        })?;
        let piv = factor.pivots();
        let max = piv.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let rank = piv.iter().filter(|&&v| v > 1e-12 * max).count();
        if rank < p.ncols() {
            return Err(Error::RankDeficient {
                what: "prolongation operator (PᵀP)".into(),
                rank,
                expected: p.ncols(),
            });
        }
        Ok(Projection { pt, ptp, factor })
    }

    pub fn n_coarse(&self) -> usize {
        self.pt.nrows()
    }

    /// Project a flat fine field with `dim` components per vertex.
    pub fn apply(&self, fine: &[f64], dim: usize) -> Result<Vec<f64>> {
        let nf = self.pt.ncols();
        let nc = self.pt.nrows();
        if fine.len() != nf * dim {
            return Err(Error::SizeMismatch {
                what: "fine field",
                expected: nf * dim,
                found: fine.len(),
            });
        }
        let mut out = vec![0.0; nc * dim];
        for k in 0..dim {
            let col: Vec<f64> = (0..nf).map(|i| fine[i * dim + k]).collect();
            let rhs = self.pt.mul_vec(&col);
            let (x, _) = self.factor.solve_refined(&self.ptp, &rhs, 3);
            for (i, v) in x.into_iter().enumerate() {
                out[i * dim + k] = v;
            }
        }
        Ok(out)
    }
}

pub fn projection(p: &ProlongationOperator) -> Result<Projection> {
    Projection::new(p.weights())
}

/// Frobenius norm, power-iteration 2-norm, entry range and row-sum deviation.
pub fn norm_report(p: &CsrMatrix) -> NormReport {
    let vals = p.values();
    let frob_sq: f64 = vals.iter().map(|v| v * v).sum();
    let min_entry = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let max_entry = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let row_sum_max_dev = p
        .row_sums()
        .iter()
        .fold(0.0_f64, |m, s| m.max((s - 1.0).abs()));
    let has_negative = min_entry < 0.0;
    let rows = p.nrows();
    // rounding in individual entries may push an exact-bound case (e.g. the
    // identity) a few ulps over; allow that much
    let violated = !has_negative && frob_sq > rows as f64 * (1.0 + 1e-12);
    NormReport {
        rows,
        cols: p.ncols(),
        frobenius_norm: frob_sq.sqrt(),
        two_norm_estimate: two_norm(p),
        min_entry,
        max_entry,
        row_sum_max_dev,
        has_negative,
        sqrt_rows: (rows as f64).sqrt(),
        frobenius_bound_violated: violated,
        epsilon: None,
    }
}

fn two_norm(p: &CsrMatrix) -> f64 {
    let n = p.ncols();
    if n == 0 || p.nrows() == 0 {
        return 0.0;
    }
    let pt = p.transpose();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let w = pt.mul_vec(&p.mul_vec(&v));
        lambda = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        v = w;
    }
    lambda.max(0.0).sqrt()
}
