//! Planar cuts of tetrahedra and quadrature on the discrete surfaces.
//!
//! The zero level of the affine interpolant `phi_hat_h` inside a tetrahedron
//! is a triangle or a quadrilateral; quadrilaterals are split along their
//! shorter diagonal. Surface rules on `Gamma_lin` are pushed forward by
//! `Theta_h` to obtain rules on `Gamma_h`.

use rayon::prelude::*;

use crate::element::{BasisScratch, DiscreteLevelSet, ReferenceElement};
use crate::error::{Error, Result};
use crate::levelset::Vec3;
use crate::mapping::{linear_normal, IsoMapping, LocalMap, Mat3};
use crate::mesh::{ActiveMesh, Tet};
use crate::quadrature::{TetRule, TriangleRule};

/// Triangle with vertices in barycentric coordinates of its tetrahedron.
pub type BaryTriangle = [[f64; 4]; 3];

fn edge_point(values: &[f64; 4], a: usize, b: usize) -> [f64; 4] {
    let t = values[a] / (values[a] - values[b]);
    let mut l = [0.0; 4];
    l[a] = 1.0 - t;
    l[b] = t;
    l
}

/// Cut of the reference tetrahedron.
pub fn cut_element(values: &[f64; 4]) -> Vec<BaryTriangle> {
    let reference = Tet::new([Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]);
    cut_element_in(&reference, values)
}

/// Cut of `tet` by the zero level of the affine function with the given
/// vertex values. Quadrilateral cuts are split along the diagonal that is
/// shorter in physical coordinates.
pub fn cut_element_in(tet: &Tet, values: &[f64; 4]) -> Vec<BaryTriangle> {
    let neg: Vec<usize> = (0..4).filter(|&i| values[i] < 0.0).collect();
    let pos: Vec<usize> = (0..4).filter(|&i| values[i] >= 0.0).collect();
    match neg.len() {
        1 | 3 => {
            let (lone, rest) = if neg.len() == 1 { (neg[0], pos) } else { (pos[0], neg) };
            vec![[
                edge_point(values, lone, rest[0]),
                edge_point(values, lone, rest[1]),
                edge_point(values, lone, rest[2]),
            ]]
        }
        2 => {
            let (a, b, c, d) = (neg[0], neg[1], pos[0], pos[1]);
            let q = [
                edge_point(values, a, c),
                edge_point(values, a, d),
                edge_point(values, b, d),
                edge_point(values, b, c),
            ];
            let x = q.map(|l| tet.point(&l));
            if (x[0] - x[2]).norm() <= (x[1] - x[3]).norm() {
                vec![[q[0], q[1], q[2]], [q[0], q[2], q[3]]]
            } else {
                vec![[q[0], q[1], q[3]], [q[1], q[2], q[3]]]
            }
        }
        _ => Vec::new(),
    }
}

/// Area of a cut in physical coordinates.
pub fn cut_area(tet: &Tet, triangles: &[BaryTriangle]) -> f64 {
    triangles.iter().map(|t| triangle_area(&t.map(|l| tet.point(&l)))).sum()
}

fn triangle_area(x: &[Vec3; 3]) -> f64 {
    0.5 * (x[1] - x[0]).cross(&(x[2] - x[0])).norm()
}

/// Quadrature point on `Gamma_lin`.
#[derive(Clone, Copy, Debug)]
pub struct SurfacePoint {
    pub lambda: [f64; 4],
    pub x: Vec3,
    pub weight: f64,
}

/// Rule on the cut of `tet`; weights include the physical triangle areas.
pub fn surface_rule(tet: &Tet, values: &[f64; 4], rule: &TriangleRule) -> Vec<SurfacePoint> {
    let mut out = Vec::new();
    for tri in cut_element_in(tet, values) {
        let area = triangle_area(&tri.map(|l| tet.point(&l)));
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let lambda: [f64; 4] = std::array::from_fn(|m| p[0] * tri[0][m] + p[1] * tri[1][m] + p[2] * tri[2][m]);
            out.push(SurfacePoint {
                lambda,
                x: tet.point(&lambda),
                weight: w * area,
            });
        }
    }
    out
}

/// Quadrature point on a deformed surface or volume piece.
#[derive(Clone, Copy, Debug)]
pub struct LiftedPoint {
    /// Barycentric coordinates of the preimage in the undeformed element.
    pub lambda: [f64; 4],
    /// Preimage `x` in the undeformed element.
    pub x: Vec3,
    /// `Theta_h(x)`.
    pub y: Vec3,
    pub weight: f64,
    /// `D Theta_h(x)^{-T}`; maps reference gradients to gradients on the
    /// deformed element.
    pub jinv_t: Mat3,
    /// `D Theta_h^{-T} n_lin`, normalized.
    pub n_h: Vec3,
}

fn lift(
    refel: &ReferenceElement,
    local: &LocalMap,
    lambda: &[f64; 4],
    n_lin: &Vec3,
    s: &mut BasisScratch,
) -> Option<(Vec3, Mat3, f64, Vec3, f64)> {
    let t = local.eval(refel, lambda, s);
    if t.det <= 0.0 {
        return None;
    }
    let jinv_t = t.jacobian.try_inverse()?.transpose();
    let m = jinv_t * n_lin;
    let norm = m.norm();
    Some((t.y, jinv_t, t.det, m / norm, norm))
}

/// Maps a rule on `Gamma_lin` to `Gamma_h = Theta_h(Gamma_lin)`.
pub fn lift_rule(
    refel: &ReferenceElement,
    local: &LocalMap,
    n_lin: &Vec3,
    pts: &[SurfacePoint],
) -> Option<Vec<LiftedPoint>> {
    let mut s = BasisScratch::new(refel);
    pts.iter()
        .map(|p| {
            let (y, jinv_t, det, n_h, stretch) = lift(refel, local, &p.lambda, n_lin, &mut s)?;
            Some(LiftedPoint {
                lambda: p.lambda,
                x: p.x,
                y,
                weight: p.weight * det * stretch,
                jinv_t,
                n_h,
            })
        })
        .collect()
}

/// Rule on the deformed element `Theta_h(T)`.
pub fn volume_rule(
    refel: &ReferenceElement,
    local: &LocalMap,
    n_lin: &Vec3,
    rule: &TetRule,
) -> Option<Vec<LiftedPoint>> {
    let mut s = BasisScratch::new(refel);
    let vol = local.tet.volume;
    rule.points
        .iter()
        .zip(&rule.weights)
        .map(|(lambda, w)| {
            let (y, jinv_t, det, n_h, _) = lift(refel, local, lambda, n_lin, &mut s)?;
            Some(LiftedPoint {
                lambda: *lambda,
                x: local.tet.point(lambda),
                y,
                weight: w * vol * det,
                jinv_t,
                n_h,
            })
        })
        .collect()
}

/// Per-element quadrature on `Gamma_h` (or `Gamma_lin` for the identity map).
#[derive(Clone, Debug)]
pub struct SurfaceQuadrature {
    pub degree: usize,
    pub points: Vec<Vec<LiftedPoint>>,
}

impl SurfaceQuadrature {
    pub fn build(mesh: &ActiveMesh, dls: &DiscreteLevelSet, map: &IsoMapping, degree: usize) -> Result<Self> {
        let rule = TriangleRule::new(degree)?;
        let refel = mesh.reference_element();
        let points: Vec<Result<Vec<LiftedPoint>>> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let tet = mesh.tet(e);
                let vv = dls.vertex_values(mesh, e);
                let pts = surface_rule(&tet, &vv, &rule);
                let n_lin = linear_normal(&tet, &vv);
                lift_rule(refel, &map.local(mesh, e), &n_lin, &pts).ok_or(Error::NotInvertible {
                    element: mesh.element(e),
                })
            })
            .collect();
        Ok(SurfaceQuadrature {
            degree,
            points: points.into_iter().collect::<Result<_>>()?,
        })
    }

    pub fn area(&self) -> f64 {
        self.points.iter().flatten().map(|p| p.weight).sum()
    }

    pub fn num_points(&self) -> usize {
        self.points.iter().map(Vec::len).sum()
    }
}

/// Per-element quadrature on the deformed active elements.
#[derive(Clone, Debug)]
pub struct VolumeQuadrature {
    pub degree: usize,
    pub points: Vec<Vec<LiftedPoint>>,
}

impl VolumeQuadrature {
    pub fn build(mesh: &ActiveMesh, dls: &DiscreteLevelSet, map: &IsoMapping, degree: usize) -> Result<Self> {
        let rule = TetRule::new(degree)?;
        let refel = mesh.reference_element();
        let points: Vec<Result<Vec<LiftedPoint>>> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let tet = mesh.tet(e);
                let n_lin = linear_normal(&tet, &dls.vertex_values(mesh, e));
                volume_rule(refel, &map.local(mesh, e), &n_lin, &rule).ok_or(Error::NotInvertible {
                    element: mesh.element(e),
                })
            })
            .collect();
        Ok(VolumeQuadrature {
            degree,
            points: points.into_iter().collect::<Result<_>>()?,
        })
    }

    pub fn volume(&self) -> f64 {
        self.points.iter().flatten().map(|p| p.weight).sum()
    }
}
