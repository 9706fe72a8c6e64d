use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Coordinate-format accumulator. Duplicates are summed in insertion order
/// when converted, so assembly is deterministic.
#[derive(Debug, Clone)]
pub struct Triplets {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Triplets {
            nrows,
            ncols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.nrows + 1];
        for &(r, _, _) in &self.entries {
            counts[r + 1] += 1;
        }
        for r in 0..self.nrows {
            counts[r + 1] += counts[r];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        for &(r, c, v) in &self.entries {
            let k = next[r];
            cols[k] = c;
            vals[k] = v;
            next[r] += 1;
        }
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut values = Vec::with_capacity(self.entries.len());
        indptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..self.nrows {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            // stable: equal columns keep insertion order for the summation
            row.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < row.len() {
                let c = row[i].0;
                let mut s = 0.0;
                while i < row.len() && row[i].0 == c {
                    s += row[i].1;
                    i += 1;
                }
                indices.push(c);
                values.push(s);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }
}

/// Compressed sparse row matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>) -> Self {
        let mut t = Triplets::new(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    t.push(i, j, m[(i, j)]);
                }
            }
        }
        t.to_csr()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
            })
            .collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut t = Triplets::with_capacity(self.ncols, self.nrows, self.nnz());
        for (r, c, v) in self.triplets() {
            t.push(c, r, v);
        }
        t.to_csr()
    }

    pub fn matmul(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, other.nrows);
        let mut t = Triplets::new(self.nrows, other.ncols);
        let mut acc = vec![0.0; other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut pattern = Vec::new();
        for r in 0..self.nrows {
            pattern.clear();
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &b) in ocols.iter().zip(ovals) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                t.push(r, c, acc[c]);
            }
        }
        t.to_csr()
    }

    /// Scale row `r` by `s[r]`.
    pub fn scale_rows(&self, s: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.values[k] *= s[r];
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().sum())
            .collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Write in Matrix Market coordinate format (1-based indices, 17
    /// significant digits so values round-trip).
    pub fn to_matrix_market(&self) -> String {
        let mut s = String::new();
        s.push_str("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(s, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for (r, c, v) in self.triplets() {
            let _ = writeln!(s, "{} {} {:.17e}", r + 1, c + 1, v);
        }
        s
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_matrix_market()).map_err(|e| Error::io(path, e))
    }

    pub fn read_matrix_market(path: &Path) -> Result<CsrMatrix> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_matrix_market(&text).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    }

    pub fn parse_matrix_market(text: &str) -> std::result::Result<CsrMatrix, (usize, String)> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.starts_with('%') && !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or((1, "missing size line".to_string()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| (ln + 1, e.to_string()))?;
        if dims.len() != 3 {
            return Err((ln + 1, "expected `rows cols nnz`".into()));
        }
        let mut t = Triplets::with_capacity(dims[0], dims[1], dims[2]);
        for (ln, line) in lines {
            let mut it = line.split_whitespace();
            let mut next = || it.next().ok_or((ln + 1, "short entry line".to_string()));
            let r: usize = next()?
                .parse()
                .map_err(|e: std::num::ParseIntError| (ln + 1, e.to_string()))?;
            let c: usize = next()?
                .parse()
                .map_err(|e: std::num::ParseIntError| (ln + 1, e.to_string()))?;
            let v: f64 = next()?
                .parse()
                .map_err(|e: std::num::ParseFloatError| (ln + 1, e.to_string()))?;
            if r == 0 || c == 0 || r > dims[0] || c > dims[1] {
                return Err((ln + 1, format!("entry ({r}, {c}) out of range")));
            }
            t.push(r - 1, c - 1, v);
        }
        Ok(t.to_csr())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 1, 1.0);
        t.push(1, 0, 2.0);
        t.push(0, 1, 3.0);
        let m = t.to_csr();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 4.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = nalgebra::DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, -1.0, 3.0]);
        let b = nalgebra::DMatrix::from_row_slice(3, 2, &[0.5, 1.0, 0.0, 2.0, -1.0, 0.0]);
        let c = CsrMatrix::from_dense(&a).matmul(&CsrMatrix::from_dense(&b));
        assert!((c.to_dense() - &a * &b).norm() < 1e-15);
    }

    #[test]
    fn matrix_market_roundtrip_is_exact() {
        let mut t = Triplets::new(3, 2);
        t.push(0, 0, 0.1);
        t.push(2, 1, -1.0 / 3.0);
        let m = t.to_csr();
        let back = CsrMatrix::parse_matrix_market(&m.to_matrix_market()).unwrap();
        assert_eq!(m, back);
    }
}
