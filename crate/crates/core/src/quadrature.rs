//! Quadrature rules on the reference triangle and tetrahedron.
//!
//! Rules are conical (collapsed) products of Gauss-Legendre rules, so every
//! weight is positive and any exactness degree up to [`MAX_DEGREE`] is
//! available. Points are stored in barycentric coordinates and weights are
//! normalized to sum to one, i.e. they are fractions of the simplex measure.

use crate::error::{Error, Result};

/// Highest supported exactness degree.
pub const MAX_DEGREE: usize = 16;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        // map [-1, 1] -> [0, 1]
        nodes[n - 1 - i] = 0.5 * (x + 1.0);
        weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TetRule {
    pub degree: usize,
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        if degree <= 1 {
            return Ok(TriangleRule {
                degree,
                points: vec![[1.0 / 3.0; 3]],
                weights: vec![1.0],
            });
        }
        // x = a, y = b (1 - a); Jacobian (1 - a)
        let (xa, wa) = gauss_legendre((degree + 2).div_ceil(2));
        let (xb, wb) = gauss_legendre((degree + 1).div_ceil(2));
        let mut points = Vec::with_capacity(xa.len() * xb.len());
        let mut weights = Vec::with_capacity(points.capacity());
        for (a, wa) in xa.iter().zip(&wa) {
            for (b, wb) in xb.iter().zip(&wb) {
                let x = *a;
                let y = b * (1.0 - a);
                points.push([1.0 - x - y, x, y]);
                weights.push(2.0 * wa * wb * (1.0 - a));
            }
        }
        Ok(TriangleRule {
            degree,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TetRule {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::UnsupportedDegree(degree));
        }
        if degree <= 1 {
            return Ok(TetRule {
                degree,
                points: vec![[0.25; 4]],
                weights: vec![1.0],
            });
        }
        // x = a, y = b (1 - a), z = c (1 - a)(1 - b); Jacobian (1 - a)^2 (1 - b)
        let (xa, wa) = gauss_legendre((degree + 3).div_ceil(2));
        let (xb, wb) = gauss_legendre((degree + 2).div_ceil(2));
        let (xc, wc) = gauss_legendre((degree + 1).div_ceil(2));
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (a, wa) in xa.iter().zip(&wa) {
            for (b, wb) in xb.iter().zip(&wb) {
                for (c, wc) in xc.iter().zip(&wc) {
                    let x = *a;
                    let y = b * (1.0 - a);
                    let z = c * (1.0 - a) * (1.0 - b);
                    points.push([1.0 - x - y - z, x, y, z]);
                    weights.push(6.0 * wa * wb * wc * (1.0 - a) * (1.0 - a) * (1.0 - b));
                }
            }
        }
        Ok(TetRule {
            degree,
            points,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    // Integral of x^a y^b over the unit right triangle divided by its area.
    fn tri_moment(a: u32, b: u32) -> f64 {
        2.0 * factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn tet_moment(a: u32, b: u32, c: u32) -> f64 {
        6.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    }

    #[test]
    fn gauss_legendre_integrates_monomials() {
        for n in 1..10 {
            let (x, w) = gauss_legendre(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn triangle_exactness() {
        for degree in 0..=12 {
            let rule = TriangleRule::new(degree).unwrap();
            assert!(rule.weights.iter().all(|w| *w > 0.0));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    let q: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                        .sum();
                    let exact = tri_moment(a, b);
                    assert!((q - exact).abs() <= 1e-12 * exact, "deg {degree}: {a},{b}");
                }
            }
        }
    }

    #[test]
    fn tet_exactness() {
        for degree in 0..=12 {
            let rule = TetRule::new(degree).unwrap();
            assert!(rule.weights.iter().all(|w| *w > 0.0));
            for a in 0..=degree as u32 {
                for b in 0..=(degree as u32 - a) {
                    for c in 0..=(degree as u32 - a - b) {
                        let q: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32) * p[3].powi(c as i32))
                            .sum();
                        let exact = tet_moment(a, b, c);
                        assert!((q - exact).abs() <= 1e-12 * exact, "deg {degree}: {a},{b},{c}");
                    }
                }
            }
        }
    }

    #[test]
    fn unsupported_degree() {
        assert!(matches!(
            TriangleRule::new(MAX_DEGREE + 1),
            Err(Error::UnsupportedDegree(_))
        ));
        assert!(TetRule::new(MAX_DEGREE + 1).is_err());
    }
}
