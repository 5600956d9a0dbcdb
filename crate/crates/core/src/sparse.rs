//! Compressed-row symmetric matrices assembled from dense element blocks.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Row-wise sorted sparsity pattern, filled block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Collects the coupled dof sets before the pattern is frozen.
#[derive(Debug)]
pub struct PatternBuilder {
    rows: Vec<Vec<usize>>,
}

impl PatternBuilder {
    pub fn new(n: usize) -> Self {
        PatternBuilder {
            rows: vec![Vec::new(); n],
        }
    }

    /// Couples every pair of dofs in `dofs`.
    pub fn add_clique(&mut self, dofs: &[usize]) {
        for &i in dofs {
            self.rows[i].extend_from_slice(dofs);
        }
    }

    pub fn build(self) -> CsrMatrix {
        let n = self.rows.len();
        let rows: Vec<Vec<usize>> = self
            .rows
            .into_par_iter()
            .map(|mut r| {
                r.sort_unstable();
                r.dedup();
                r
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for r in &rows {
            row_ptr.push(row_ptr.last().unwrap() + r.len());
        }
        let col_idx: Vec<usize> = rows.into_iter().flatten().collect();
        let values = vec![0.0; col_idx.len()];
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

impl CsrMatrix {
    /// Matrix with no stored entries.
    pub fn zeros(n: usize) -> Self {
        CsrMatrix {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        let n = a.nrows();
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if a[(i, j)] != 0.0 {
                    col_idx.push(j);
                    values.push(a[(i, j)]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds the dense block `local` (row-major, `dofs.len()` squared) at
    /// rows and columns `dofs`. Panics if the pattern lacks an entry.
    pub fn add_block(&mut self, dofs: &[usize], local: &[f64]) {
        let m = dofs.len();
        debug_assert_eq!(local.len(), m * m);
        for (a, &i) in dofs.iter().enumerate() {
            for (b, &j) in dofs.iter().enumerate() {
                let v = local[a * m + b];
                if v != 0.0 {
                    let p = self.position(i, j).expect("entry outside the sparsity pattern");
                    self.values[p] += v;
                }
            }
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        });
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.mul(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |a_ij - a_ji|`.
    pub fn symmetry_defect(&self) -> f64 {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .fold(0.0f64, |m, (&j, v)| m.max((v - self.get(j, i)).abs()))
            })
            .reduce(|| 0.0, f64::max)
    }

    pub fn scaled(&self, alpha: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// `self + other`, with the union of both patterns.
    pub fn add(&self, other: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.n, other.n);
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(col_idx.capacity());
        for i in 0..self.n {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let take_a = q == cb.len() || (p < ca.len() && ca[p] < cb[q]);
                let take_b = p == ca.len() || (q < cb.len() && cb[q] < ca[p]);
                if take_a {
                    col_idx.push(ca[p]);
                    values.push(va[p]);
                    p += 1;
                } else if take_b {
                    col_idx.push(cb[q]);
                    values.push(vb[q]);
                    q += 1;
                } else {
                    col_idx.push(ca[p]);
                    values.push(va[p] + vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                a[(i, j)] = *v;
            }
        }
        a
    }

    /// Matrix Market coordinate format (general, 1-based).
    pub fn write_matrix_market(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}
