//! Analytic level-set surfaces and benchmark problems.
//!
//! Every surface here is given by an exact signed distance function (torus,
//! sphere) or an affine function (plane). Data on the surface is extended off
//! it as a constant along the exact normals, i.e. by composing with the
//! closest-point map.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn cube(half_width: f64) -> Self {
        Aabb {
            min: [-half_width; 3],
            max: [half_width; 3],
        }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    pub fn contains(&self, x: &Vec3) -> bool {
        (0..3).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Torus around the x3-axis with major radius `major` and tube radius `minor`.
    Torus { major: f64, minor: f64 },
    /// Sphere centred at the origin.
    Sphere { radius: f64 },
    /// `normal . x - offset = 0` with a unit normal.
    Plane { normal: [f64; 3], offset: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub shape: Shape,
    pub domain: Aabb,
}

// Points closer than this to the singular set are rejected.
const SINGULAR_TOL: f64 = 1e-12;

impl LevelSet {
    /// Torus in `[-2, 2]^3`. Requires `0 < minor < major`.
    pub fn torus(major: f64, minor: f64) -> Result<Self> {
        if !(minor > 0.0 && minor < major) {
            return Err(Error::Config(format!(
                "torus radii must satisfy 0 < r < R (got R = {major}, r = {minor})"
            )));
        }
        Ok(LevelSet {
            shape: Shape::Torus { major, minor },
            domain: Aabb::cube(2.0),
        })
    }

    pub fn sphere(radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Config(format!("sphere radius must be positive (got {radius})")));
        }
        Ok(LevelSet {
            shape: Shape::Sphere { radius },
            domain: Aabb::cube(2.0),
        })
    }

    /// Plane `normal . x = offset`; both are rescaled so the normal has unit length.
    pub fn plane(normal: [f64; 3], offset: f64) -> Result<Self> {
        let n = Vec3::from(normal);
        let len = n.norm();
        if len == 0.0 || !len.is_finite() {
            return Err(Error::Config("plane normal must be nonzero".into()));
        }
        let n = n / len;
        Ok(LevelSet {
            shape: Shape::Plane {
                normal: [n.x, n.y, n.z],
                offset: offset / len,
            },
            domain: Aabb::cube(2.0),
        })
    }

    pub fn with_domain(mut self, domain: Aabb) -> Self {
        self.domain = domain;
        self
    }

    /// Level-set value. Total on the whole space.
    pub fn phi(&self, x: &Vec3) -> f64 {
        match self.shape {
            Shape::Torus { major, minor } => {
                let rho = x.x.hypot(x.y);
                (x.z * x.z + (rho - major) * (rho - major)).sqrt() - minor
            }
            Shape::Sphere { radius } => x.norm() - radius,
            Shape::Plane { normal, offset } => Vec3::from(normal).dot(x) - offset,
        }
    }

    pub fn grad_phi(&self, x: &Vec3) -> Result<Vec3> {
        match self.shape {
            Shape::Torus { major, .. } => {
                let rho = x.x.hypot(x.y);
                let q = (x.z * x.z + (rho - major) * (rho - major)).sqrt();
                if rho < SINGULAR_TOL || q < SINGULAR_TOL {
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                let radial = (rho - major) / (q * rho);
                Ok(Vec3::new(radial * x.x, radial * x.y, x.z / q))
            }
            Shape::Sphere { .. } => {
                let r = x.norm();
                if r < SINGULAR_TOL {
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                Ok(x / r)
            }
            Shape::Plane { normal, .. } => Ok(Vec3::from(normal)),
        }
    }

    /// Unit normal of the level surface through `x`.
    pub fn normal(&self, x: &Vec3) -> Result<Vec3> {
        let g = self.grad_phi(x)?;
        Ok(g / g.norm())
    }

    pub fn closest_point(&self, x: &Vec3) -> Result<Vec3> {
        match self.shape {
            Shape::Torus { major, minor } => {
                let rho = x.x.hypot(x.y);
                if rho < SINGULAR_TOL {
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                let centre = Vec3::new(major * x.x / rho, major * x.y / rho, 0.0);
                let off = x - centre;
                let q = off.norm();
                if q < SINGULAR_TOL {
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                Ok(centre + off * (minor / q))
            }
            Shape::Sphere { radius } => {
                let r = x.norm();
                if r < SINGULAR_TOL {
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                Ok(x * (radius / r))
            }
            Shape::Plane { normal, .. } => Ok(x - Vec3::from(normal) * self.phi(x)),
        }
    }

    /// Exact surface area, where finite.
    pub fn area(&self) -> Option<f64> {
        use std::f64::consts::PI;
        match self.shape {
            Shape::Torus { major, minor } => Some(4.0 * PI * PI * major * minor),
            Shape::Sphere { radius } => Some(4.0 * PI * radius * radius),
            Shape::Plane { .. } => None,
        }
    }

    /// Toroidal angles `(azimuth, poloidal)` of `x`; both are invariant along
    /// the normals of the torus.
    pub fn torus_angles(&self, x: &Vec3) -> Result<(f64, f64)> {
        match self.shape {
            Shape::Torus { major, .. } => {
                let rho = x.x.hypot(x.y);
                if rho < SINGULAR_TOL || (x.z.abs() < SINGULAR_TOL && (rho - major).abs() < SINGULAR_TOL) {
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                Ok((x.y.atan2(x.x), x.z.atan2(rho - major)))
            }
            _ => Err(Error::Config("toroidal angles requested for a non-torus".into())),
        }
    }
}

/// Exact solution family of a benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solution {
    /// `sin(3a) cos(3t + a)` in toroidal angles.
    TorusTrig,
    /// `x1 x2 x3` on a sphere (a degree-3 spherical harmonic).
    SphereCubic,
    /// `u = 0`, `f = 0`.
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkProblem {
    pub levelset: LevelSet,
    pub solution: Solution,
}

impl BenchmarkProblem {
    /// The torus benchmark: `R = 1`, `r = 0.6` in `[-2, 2]^3`.
    pub fn torus() -> Self {
        BenchmarkProblem {
            levelset: LevelSet::torus(1.0, 0.6).expect("valid radii"),
            solution: Solution::TorusTrig,
        }
    }

    pub fn sphere() -> Self {
        BenchmarkProblem {
            levelset: LevelSet::sphere(1.0).expect("valid radius"),
            solution: Solution::SphereCubic,
        }
    }

    pub fn zero(levelset: LevelSet) -> Self {
        BenchmarkProblem {
            levelset,
            solution: Solution::Zero,
        }
    }

    pub fn new(levelset: LevelSet, solution: Solution) -> Result<Self> {
        let ok = matches!(
            (solution, levelset.shape),
            (Solution::Zero, _)
                | (Solution::TorusTrig, Shape::Torus { .. })
                | (Solution::SphereCubic, Shape::Sphere { .. })
        );
        if !ok {
            return Err(Error::Config(format!(
                "solution {solution:?} does not match the level set {:?}",
                levelset.shape
            )));
        }
        Ok(BenchmarkProblem { levelset, solution })
    }

    /// `u^e(x) = u(p(x))`.
    pub fn exact_solution(&self, x: &Vec3) -> Result<f64> {
        match self.solution {
            Solution::Zero => Ok(0.0),
            Solution::TorusTrig => {
                let (a, t) = self.levelset.torus_angles(x)?;
                Ok((3.0 * a).sin() * (3.0 * t + a).cos())
            }
            Solution::SphereCubic => {
                let p = self.levelset.closest_point(x)?;
                Ok(p.x * p.y * p.z)
            }
        }
    }

    /// Gradient of the normal extension `u^e` at `x`.
    pub fn exact_gradient(&self, x: &Vec3) -> Result<Vec3> {
        match (self.solution, self.levelset.shape) {
            (Solution::Zero, _) => Ok(Vec3::zeros()),
            (Solution::TorusTrig, Shape::Torus { major, .. }) => {
                let (a, t) = self.levelset.torus_angles(x)?;
                let (du_da, du_dt) = torus_trig_first(a, t);
                let rho = x.x.hypot(x.y);
                let grad_a = Vec3::new(-x.y, x.x, 0.0) / (rho * rho);
                let s = rho - major;
                let q2 = s * s + x.z * x.z;
                let grad_rho = Vec3::new(x.x / rho, x.y / rho, 0.0);
                let grad_t = (Vec3::new(0.0, 0.0, s) - grad_rho * x.z) / q2;
                Ok(grad_a * du_da + grad_t * du_dt)
            }
            (Solution::SphereCubic, Shape::Sphere { radius }) => {
                let r = x.norm();
                if r < SINGULAR_TOL {
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                let c = radius.powi(3);
                let xyz = x.x * x.y * x.z;
                let g = Vec3::new(x.y * x.z, x.x * x.z, x.x * x.y) / r.powi(3) - x * (3.0 * xyz / r.powi(5));
                Ok(g * c)
            }
            _ => unreachable!("checked in BenchmarkProblem::new"),
        }
    }

    /// `f = -Laplace_Beltrami(u)` at `p(x)`.
    pub fn rhs(&self, x: &Vec3) -> Result<f64> {
        match (self.solution, self.levelset.shape) {
            (Solution::Zero, _) => Ok(0.0),
            (Solution::TorusTrig, Shape::Torus { major, minor }) => {
                let (a, t) = self.levelset.torus_angles(x)?;
                let rt = major + minor * t.cos();
                let s3a = (3.0 * a).sin();
                let c3a = (3.0 * a).cos();
                let cb = (3.0 * t + a).cos();
                let sb = (3.0 * t + a).sin();
                let u_aa = -10.0 * s3a * cb - 6.0 * c3a * sb;
                let u_t = -3.0 * s3a * sb;
                let u_tt = -9.0 * s3a * cb;
                let lap = u_aa / (rt * rt) + u_tt / (minor * minor) - t.sin() / (minor * rt) * u_t;
                Ok(-lap)
            }
            (Solution::SphereCubic, Shape::Sphere { radius }) => Ok(12.0 / (radius * radius) * self.exact_solution(x)?),
            _ => unreachable!("checked in BenchmarkProblem::new"),
        }
    }
}

fn torus_trig_first(a: f64, t: f64) -> (f64, f64) {
    let s3a = (3.0 * a).sin();
    let c3a = (3.0 * a).cos();
    let cb = (3.0 * t + a).cos();
    let sb = (3.0 * t + a).sin();
    (3.0 * c3a * cb - s3a * sb, -3.0 * s3a * sb)
}
