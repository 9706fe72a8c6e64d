use super::{minimum_degree, CsrMatrix};
use crate::error::{Error, Result};

/// Sparse LDLᵀ factorization without pivoting (up-looking, elimination-tree
/// based), applied to a symmetrically permuted matrix.
///
/// Works for SPD and quasi-definite matrices; for saddle-point systems the
/// caller supplies a diagonal shift that makes the matrix quasi-definite and
/// recovers the unshifted solution by iterative refinement.
#[derive(Debug, Clone)]
pub struct SparseLdlt {
    n: usize,
    perm: Vec<usize>,
    iperm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
}

impl SparseLdlt {
    /// Fill-reducing ordering of the symmetric pattern of `a`, computed on the
    /// graph of `block`-sized node groups when the size divides evenly.
    pub fn ordering(a: &CsrMatrix, block: usize) -> Vec<usize> {
        let n = a.nrows();
        let block = if block > 1 && n % block == 0 {
            block
        } else {
            1
        };
        let nodes = n / block;
        let mut adj = vec![Vec::new(); nodes];
        for (r, c, _) in a.triplets() {
            let (i, j) = (r / block, c / block);
            if i != j {
                adj[i].push(j);
            }
        }
        let node_perm = minimum_degree(&adj);
        node_perm
            .iter()
            .flat_map(|&v| (0..block).map(move |k| v * block + k))
            .collect()
    }

    pub fn factor(a: &CsrMatrix, perm: &[usize], shift: Option<&[f64]>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || perm.len() != n {
            return Err(Error::SizeMismatch {
                what: "ldlt input",
                expected: n,
                found: perm.len(),
            });
        }
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }

        // upper triangle of the permuted matrix, column-compressed
        let mut counts = vec![0usize; n + 1];
        for (r, c, _) in a.triplets() {
            let (i, j) = (iperm[r], iperm[c]);
            if i <= j {
                counts[j + 1] += 1;
            }
        }
        let diag_missing: Vec<bool> = (0..n).map(|k| a.get(perm[k], perm[k]) == 0.0).collect();
        if shift.is_some() {
            for (k, &missing) in diag_missing.iter().enumerate() {
                if missing {
                    counts[k + 1] += 1;
                }
            }
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let ap = counts.clone();
        let mut next = counts;
        let mut ai = vec![0usize; ap[n]];
        let mut ax = vec![0.0; ap[n]];
        for (r, c, v) in a.triplets() {
            let (i, j) = (iperm[r], iperm[c]);
            if i <= j {
                let k = next[j];
                ai[k] = i;
                ax[k] = if i == j {
                    v + shift.map_or(0.0, |s| s[r])
                } else {
                    v
                };
                next[j] += 1;
            }
        }
        if let Some(s) = shift {
            for (k, &missing) in diag_missing.iter().enumerate() {
                if missing {
                    let p = next[k];
                    ai[p] = k;
                    ax[p] = s[perm[k]];
                    next[k] += 1;
                }
            }
        }

        // symbolic
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![usize::MAX; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == usize::MAX {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut lp = vec![0usize; n + 1];
        for k in 0..n {
            lp[k + 1] = lp[k] + lnz[k];
        }

        // numeric
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![0.0; nnz];
        let mut d = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut pattern = vec![0usize; n];
        for k in 0..n {
            let mut top = n;
            flag[k] = k;
            lnz[k] = 0;
            for p in ap[k]..ap[k + 1] {
                let mut i = ai[p];
                y[i] += ax[p];
                let mut len = 0;
                while flag[i] != k {
                    pattern[len] = i;
                    len += 1;
                    flag[i] = k;
                    i = parent[i];
                }
                while len > 0 {
                    top -= 1;
                    len -= 1;
                    pattern[top] = pattern[len];
                }
            }
            d[k] = y[k];
            y[k] = 0.0;
            while top < n {
                let i = pattern[top];
                let yi = y[i];
                y[i] = 0.0;
                let p2 = lp[i] + lnz[i];
                for p in lp[i]..p2 {
                    y[li[p]] -= lx[p] * yi;
                }
                let l_ki = yi / d[i];
                d[k] -= l_ki * yi;
                li[p2] = k;
                lx[p2] = l_ki;
                lnz[i] += 1;
                top += 1;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::Singular(format!(
                    "zero pivot at permuted row {k} (original {})",
                    perm[k]
                )));
            }
        }

        Ok(SparseLdlt {
            n,
            perm: perm.to_vec(),
            iperm,
            lp,
            li,
            lx,
            d,
        })
    }

    /// Factor with a freshly computed ordering.
    pub fn new(a: &CsrMatrix, block: usize) -> Result<Self> {
        let perm = Self::ordering(a, block);
        Self::factor(a, &perm, None)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = (0..self.n).map(|k| b[self.perm[k]]).collect();
        for j in 0..self.n {
            let xj = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                x[self.li[p]] -= self.lx[p] * xj;
            }
        }
        for j in 0..self.n {
            x[j] /= self.d[j];
        }
        for j in (0..self.n).rev() {
            let mut s = x[j];
            for p in self.lp[j]..self.lp[j + 1] {
                s -= self.lx[p] * x[self.li[p]];
            }
            x[j] = s;
        }
        (0..self.n).map(|i| x[self.iperm[i]]).collect()
    }

    /// Solve `a x = b` where this factorization is of a nearby (e.g. shifted)
    /// matrix, correcting with iterative refinement against `a`. Returns the
    /// solution and the final residual infinity norm.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], max_iter: usize) -> (Vec<f64>, f64) {
        let scale = super::norm_inf(b).max(f64::MIN_POSITIVE);
        let mut x = self.solve(b);
        let mut best = (x.clone(), f64::INFINITY);
        for _ in 0..=max_iter {
            let ax = a.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rn = super::norm_inf(&r);
            if rn >= best.1 {
                break;
            }
            best = (x.clone(), rn);
            if rn <= 1e-15 * scale {
                break;
            }
            let dx = self.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, di)| *xi += di);
        }
        best
    }

    /// Pivot signs: (positive, negative).
    pub fn inertia(&self) -> (usize, usize) {
        let pos = self.d.iter().filter(|&&v| v > 0.0).count();
        (pos, self.n - pos)
    }

    pub fn pivots(&self) -> &[f64] {
        &self.d
    }

    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Triplets;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if (i + 2 * j) % 5 == 0 || i == j {
                    a[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
        }
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn solves_spd_system() {
        let a = random_spd(30, 1);
        let csr = CsrMatrix::from_dense(&a);
        let f = SparseLdlt::new(&csr, 1).unwrap();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let x = f.solve(&b);
        let r = &a * DVector::from_vec(x) - DVector::from_vec(b);
        assert!(r.norm() < 1e-10);
        assert_eq!(f.inertia(), (30, 0));
    }

    #[test]
    fn quasi_definite_saddle_point() {
        // [I  Bᵀ; B  -δI]
        let mut t = Triplets::new(4, 4);
        t.push(0, 0, 2.0);
        t.push(1, 1, 1.0);
        t.push(2, 2, 3.0);
        t.push(3, 0, 1.0);
        t.push(0, 3, 1.0);
        t.push(3, 2, 1.0);
        t.push(2, 3, 1.0);
        let k = t.to_csr();
        let shift = [0.0, 0.0, 0.0, -1e-12];
        let f = SparseLdlt::factor(&k, &SparseLdlt::ordering(&k, 1), Some(&shift)).unwrap();
        assert_eq!(f.inertia(), (3, 1));
        let x = f.solve(&[1.0, 1.0, 1.0, 0.0]);
        let r = k.mul_vec(&x);
        for (ri, bi) in r.iter().zip([1.0, 1.0, 1.0, 0.0]) {
            assert!((ri - bi).abs() < 1e-9);
        }
    }
}
