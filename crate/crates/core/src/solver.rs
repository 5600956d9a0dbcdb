//! Rank-one augmentation of the singular stiffness matrix and Jacobi
//! preconditioned conjugate gradients.

use crate::assembly::AssembledSystem;
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Symmetric operator applied matrix-free.
pub trait LinearOperator: Sync {
    fn n(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn n(&self) -> usize {
        CsrMatrix::n(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
}

/// `S + gamma c c^T`, never formed explicitly.
pub struct Augmented<'a> {
    pub matrix: &'a CsrMatrix,
    pub c: &'a [f64],
    pub gamma: f64,
}

impl Augmented<'_> {
    /// Diagonal of the augmented operator.
    pub fn diagonal(&self) -> Vec<f64> {
        self.matrix
            .diagonal()
            .iter()
            .zip(self.c)
            .map(|(d, c)| d + self.gamma * c * c)
            .collect()
    }
}

impl LinearOperator for Augmented<'_> {
    fn n(&self) -> usize {
        self.matrix.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.matvec(x, y);
        let s = self.gamma * dot(self.c, x);
        for (yi, ci) in y.iter_mut().zip(self.c) {
            *yi += s * ci;
        }
    }
}

/// Sequential dot product (fixed summation order).
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `gamma = sum(diag S) / sum(c_i^2)`.
pub fn augment_gamma(s: &CsrMatrix, c: &[f64]) -> Result<f64> {
    let cc = dot(c, c);
    if !(cc > 0.0) {
        return Err(Error::ZeroConstraint);
    }
    Ok(s.diagonal().iter().sum::<f64>() / cc)
}

#[derive(Clone, Copy, Debug)]
pub struct PcgOptions {
    /// Reduction of the preconditioned residual norm `sqrt(r^T D^{-1} r)`.
    pub tol: f64,
    /// Defaults to `50 sqrt(N) + 1000`.
    pub max_iter: Option<usize>,
}

impl Default for PcgOptions {
    fn default() -> Self {
        PcgOptions {
            tol: 1e-9,
            max_iter: None,
        }
    }
}

impl PcgOptions {
    pub fn with_tol(tol: f64) -> Self {
        PcgOptions { tol, max_iter: None }
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iter.unwrap_or(50 * (n as f64).sqrt().ceil() as usize + 1000)
    }
}

#[derive(Clone, Debug)]
pub struct PcgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final preconditioned residual norm relative to the initial one.
    pub relative_residual: f64,
}

/// Preconditioned CG from a zero initial guess with preconditioner
/// `diag^{-1}`.
pub fn pcg(op: &impl LinearOperator, b: &[f64], diag: &[f64], opts: &PcgOptions) -> Result<PcgResult> {
    let n = op.n();
    assert_eq!(b.len(), n);
    let inv: Vec<f64> = diag.iter().map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, d)| r * d).collect();
    let mut rz = dot(&r, &z);
    if rz == 0.0 {
        return Ok(PcgResult {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let r0 = rz.sqrt();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let cap = opts.iteration_cap(n);
    let mut rel = 1.0;
    for it in 1..=cap {
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::NotConverged {
                iterations: it,
                residual: rel,
            });
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        rel = rz_new.max(0.0).sqrt() / r0;
        if rel <= opts.tol {
            return Ok(PcgResult {
                x,
                iterations: it,
                relative_residual: rel,
            });
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged {
        iterations: cap,
        residual: rel,
    })
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub u: Vec<f64>,
    pub iterations: usize,
    /// Preconditioned residual reduction reached by CG.
    pub relative_residual: f64,
    /// `||S u - f|| / ||f||` with the unaugmented `S`.
    pub true_residual: f64,
    pub gamma: f64,
}

/// Solves `(S + gamma c c^T) u = f`. With `<f, e> = 0` the solution also
/// satisfies `S u = f` and `<c, u> = 0`; the remaining rounding in `<c, u>`
/// is removed by a final shift along the constant vector.
pub fn solve_constrained(sys: &AssembledSystem, opts: &PcgOptions) -> Result<SolveReport> {
    let gamma = augment_gamma(&sys.matrix, &sys.constraint)?;
    let op = Augmented {
        matrix: &sys.matrix,
        c: &sys.constraint,
        gamma,
    };
    let res = pcg(&op, &sys.rhs, &op.diagonal(), opts)?;
    let mut u = res.x;
    let shift = dot(&sys.constraint, &u) / dot(&sys.constraint, &sys.ones);
    for (ui, ei) in u.iter_mut().zip(&sys.ones) {
        *ui -= shift * ei;
    }
    let su = sys.matrix.mul(&u);
    let resid: Vec<f64> = su.iter().zip(&sys.rhs).map(|(a, b)| a - b).collect();
    let fnorm = norm(&sys.rhs);
    Ok(SolveReport {
        true_residual: if fnorm > 0.0 {
            norm(&resid) / fnorm
        } else {
            norm(&resid)
        },
        u,
        iterations: res.iterations,
        relative_residual: res.relative_residual,
        gamma,
    })
}
