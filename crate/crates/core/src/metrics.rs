//! Discretization errors on the discrete surface, convergence orders, and
//! spectral condition estimates on the constraint hyperplane.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::Discretization;
use crate::cut::SurfaceQuadrature;
use crate::element::BasisScratch;
use crate::error::{Error, Result};
use crate::levelset::{BenchmarkProblem, Vec3};
use crate::mapping::max_facet_jump;
use crate::solver::{augment_gamma, dot, norm, pcg, Augmented, LinearOperator, PcgOptions};
use crate::sparse::CsrMatrix;

/// The four error measures of one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSet {
    /// `max |phi|` over the quadrature points of `Gamma_h`.
    pub e_dist: f64,
    /// `||u^e - u_h||` on `Gamma_h`.
    pub e_l2: f64,
    /// `||(I - n_h n_h^T) grad(u^e - u_h)||` on `Gamma_h`.
    pub e_h1_t: f64,
    /// `||n . grad u_h||` on `Gamma_h`, with the exact normal `n`.
    pub e_h1_n: f64,
}

/// Errors of the coefficient vector `u` with a surface rule of exactness `degree`.
pub fn compute_errors(disc: &Discretization, problem: &BenchmarkProblem, u: &[f64], degree: usize) -> Result<ErrorSet> {
    let quad = disc.surface_quadrature(degree)?;
    compute_errors_with(disc, problem, u, &quad)
}

pub fn compute_errors_with(
    disc: &Discretization,
    problem: &BenchmarkProblem,
    u: &[f64],
    quad: &SurfaceQuadrature,
) -> Result<ErrorSet> {
    let mesh = &disc.mesh;
    let refel = mesh.reference_element();
    let ls = &problem.levelset;
    // per-element partial sums, reduced in element order
    let partial: Vec<Result<[f64; 4]>> = (0..mesh.num_elements())
        .into_par_iter()
        .map_init(
            || BasisScratch::new(refel),
            |s, e| {
                let tet = mesh.tet(e);
                let dofs = mesh.dofs(e);
                let mut acc = [0.0f64; 4];
                for p in &quad.points[e] {
                    refel.eval_physical(&tet, &p.lambda, &mut s.values, &mut s.grads);
                    let mut uh = 0.0;
                    let mut g = Vec3::zeros();
                    for (i, &d) in dofs.iter().enumerate() {
                        uh += u[d] * s.values[i];
                        g += s.grads[i] * u[d];
                    }
                    let guh = p.jinv_t * g;
                    let diff = problem.exact_gradient(&p.y)? - guh;
                    let tang = diff - p.n_h * p.n_h.dot(&diff);
                    let n = ls.normal(&p.y)?;
                    acc[0] = acc[0].max(ls.phi(&p.y).abs());
                    acc[1] += p.weight * (problem.exact_solution(&p.y)? - uh).powi(2);
                    acc[2] += p.weight * tang.norm_squared();
                    acc[3] += p.weight * n.dot(&guh).powi(2);
                }
                Ok(acc)
            },
        )
        .collect();
    let mut out = [0.0f64; 4];
    for a in partial {
        let a = a?;
        out[0] = out[0].max(a[0]);
        for i in 1..4 {
            out[i] += a[i];
        }
    }
    Ok(ErrorSet {
        e_dist: out[0],
        e_l2: out[1].sqrt(),
        e_h1_t: out[2].sqrt(),
        e_h1_n: out[3].sqrt(),
    })
}

/// `max |n_h - n|` over the quadrature points of `Gamma_h`.
pub fn max_normal_error(disc: &Discretization, quad: &SurfaceQuadrature) -> Result<f64> {
    let ls = &disc.levelset;
    let per: Vec<Result<f64>> = quad
        .points
        .par_iter()
        .map(|pts| {
            let mut m: f64 = 0.0;
            for p in pts {
                m = m.max((p.n_h - ls.normal(&p.y)?).norm());
            }
            Ok(m)
        })
        .collect();
    per.into_iter().try_fold(0.0, |m, v| Ok(f64::max(m, v?)))
}

/// Largest jump of the element-local map across interior facets.
pub fn max_mapping_jump(disc: &Discretization) -> Result<f64> {
    max_facet_jump(&disc.mesh, &disc.dls)
}

/// `log2(e_{l-1} / e_l)`; `None` for the first entry and for non-positive
/// errors.
pub fn eoc(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None];
    for w in errors.windows(2) {
        out.push(if w[0] > 0.0 && w[1] > 0.0 {
            Some((w[0] / w[1]).log2())
        } else {
            None
        });
    }
    out.truncate(errors.len());
    out
}

#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Relative change of the Rayleigh quotient that ends an iteration.
    pub tol: f64,
    pub max_iter: usize,
    /// Largest system handled by the iterative estimates.
    pub size_cap: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            tol: 1e-6,
            max_iter: 20_000,
            size_cap: 20_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionEstimate {
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub cond: f64,
    pub power_iterations: usize,
    pub inverse_iterations: usize,
}

// Orthogonal projection onto the complement of `c` (identity without `c`).
fn project(c: Option<&[f64]>, x: &mut [f64]) {
    if let Some(c) = c {
        let a = dot(c, x) / dot(c, c);
        for (xi, ci) in x.iter_mut().zip(c) {
            *xi -= a * ci;
        }
    }
}

fn normalize(x: &mut [f64]) {
    let n = norm(x);
    x.iter_mut().for_each(|v| *v /= n);
}

fn start_vector(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Extreme eigenvalues of `S` on `{u : c . u = 0}` (or on all of `R^N`
/// without `c`): power iteration for the largest, inverse iteration with CG
/// solves for the smallest. With `c` given, `S` must have the constant
/// vector in its kernel and `c . e != 0`.
pub fn estimate_condition(s: &CsrMatrix, c: Option<&[f64]>, opts: &EigenOptions) -> Result<ConditionEstimate> {
    let n = s.n();
    if n > opts.size_cap {
        return Err(Error::TooLarge {
            size: n,
            cap: opts.size_cap,
        });
    }
    let (lambda_max, power_iterations) = power_iteration(s, c, opts)?;
    let (lambda_min, inverse_iterations) = inverse_iteration(s, c, opts)?;
    Ok(ConditionEstimate {
        lambda_max,
        lambda_min,
        cond: lambda_max / lambda_min,
        power_iterations,
        inverse_iterations,
    })
}

fn power_iteration(s: &CsrMatrix, c: Option<&[f64]>, opts: &EigenOptions) -> Result<(f64, usize)> {
    let n = s.n();
    let mut x = start_vector(n, opts.seed);
    project(c, &mut x);
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut mu = 0.0;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        s.apply(&x, &mut y);
        project(c, &mut y);
        let new = dot(&x, &y);
        change = ((new - mu) / new).abs();
        mu = new;
        x.copy_from_slice(&y);
        normalize(&mut x);
        if change <= opts.tol {
            return Ok((mu, it));
        }
    }
    Err(Error::EigenNotConverged {
        iterations: opts.max_iter,
        change,
    })
}

fn inverse_iteration(s: &CsrMatrix, c: Option<&[f64]>, opts: &EigenOptions) -> Result<(f64, usize)> {
    let n = s.n();
    let ones = vec![1.0; n];
    let zero = vec![0.0; n];
    let (cvec, gamma) = match c {
        Some(c) => (c, augment_gamma(s, c)?),
        None => (zero.as_slice(), 0.0),
    };
    let op = Augmented {
        matrix: s,
        c: cvec,
        gamma,
    };
    let diag = op.diagonal();
    let solve_opts = PcgOptions {
        tol: 1e-12,
        max_iter: Some(2 * n + 1000),
    };
    let mut x = start_vector(n, opts.seed.wrapping_add(1));
    project(c, &mut x);
    normalize(&mut x);
    let mut y = vec![0.0; n];
    let mut mu = f64::INFINITY;
    let mut change = f64::INFINITY;
    for it in 1..=opts.max_iter {
        // On the hyperplane, (P S P)^{-1} x solves S_aug z = x + beta c with
        // beta chosen so that the right-hand side is orthogonal to e.
        let mut b = x.clone();
        if let Some(c) = c {
            let beta = -dot(&ones, &x) / dot(&ones, c);
            for (bi, ci) in b.iter_mut().zip(c) {
                *bi += beta * ci;
            }
        }
        let mut z = pcg(&op, &b, &diag, &solve_opts)?.x;
        project(c, &mut z);
        normalize(&mut z);
        s.apply(&z, &mut y);
        let new = dot(&z, &y);
        change = ((new - mu) / new).abs();
        mu = new;
        x = z;
        if change <= opts.tol {
            return Ok((mu, it));
        }
    }
    Err(Error::EigenNotConverged {
        iterations: opts.max_iter,
        change,
    })
}

/// Dense spectrum of `S` restricted to `{u : c . u = 0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperplaneSpectrum {
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues below `threshold * lambda_max`.
    pub kernel_dim: usize,
    pub lambda_max: f64,
    /// Smallest eigenvalue above the kernel threshold.
    pub lambda_min: f64,
    /// `lambda_max / lambda_min` (infinite if `kernel_dim > 0`).
    pub cond: f64,
    /// `lambda_max / lambda_min` on the complement of the kernel.
    pub effective_cond: f64,
}

/// Relative eigenvalue level below which a mode is counted as kernel.
pub const KERNEL_THRESHOLD: f64 = 1e-12;

/// Dense cap for [`hyperplane_spectrum`].
pub const DENSE_CAP: usize = 4000;

pub fn hyperplane_spectrum(s: &CsrMatrix, c: &[f64], threshold: f64) -> Result<HyperplaneSpectrum> {
    let n = s.n();
    if n > DENSE_CAP {
        return Err(Error::TooLarge {
            size: n,
            cap: DENSE_CAP,
        });
    }
    let cn = norm(c);
    if !(cn > 0.0) {
        return Err(Error::ZeroConstraint);
    }
    // Householder reflector H with H c = -sign(c_0) |c| e_0; its columns
    // 1..n span the complement of c.
    let mut v = DVector::from_column_slice(c);
    let sign = if c[0] >= 0.0 { 1.0 } else { -1.0 };
    v[0] += sign * cn;
    let vv = v.dot(&v);
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / vv);
    let q = h.columns(1, n - 1).into_owned();
    let a = s.to_dense();
    let mut r = q.transpose() * a * &q;
    r = (&r + r.transpose()) * 0.5;
    let eig = SymmetricEigen::new(r);
    let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    let lambda_max = *ev.last().expect("n >= 2");
    let kernel_dim = ev.iter().take_while(|&&l| l < threshold * lambda_max).count();
    let lambda_min = ev.get(kernel_dim).copied().unwrap_or(f64::NAN);
    Ok(HyperplaneSpectrum {
        cond: if kernel_dim > 0 {
            f64::INFINITY
        } else {
            lambda_max / ev[0]
        },
        effective_cond: lambda_max / lambda_min,
        eigenvalues: ev,
        kernel_dim,
        lambda_max,
        lambda_min,
    })
}
