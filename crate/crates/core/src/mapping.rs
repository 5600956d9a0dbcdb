//! Isoparametric deformation of the cut mesh.
//!
//! For every active element the discontinuous map `Psi_h(x) = x + d_h(x) G_h(x)`
//! is evaluated at the Lagrange nodes, where `G_h = grad phi_h|_T` and `d_h`
//! is the root of smallest modulus of
//! `E_T phi_h(x + d G_h(x)) = phi_hat_h(x)`. Nodal averaging over the node
//! patches turns it into the continuous field `Theta_h`.

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::element::{BasisScratch, DiscreteLevelSet, ReferenceElement};
use crate::error::{Error, Result};
use crate::levelset::Vec3;
use crate::mesh::{ActiveMesh, Tet};
use crate::quadrature::TriangleRule;

pub type Mat3 = Matrix3<f64>;

/// Default search half-width as a fraction of `h`.
pub const SEARCH_FRACTION: f64 = 0.5;
const NEWTON_MAX_ITER: usize = 50;
const SCAN_SAMPLES: usize = 16;

/// Element-local data for the `d_h` root search.
pub struct SearchContext<'a> {
    refel: &'a ReferenceElement,
    tet: Tet,
    coeffs: Vec<f64>,
    linear: [f64; 4],
    delta: f64,
}

impl<'a> SearchContext<'a> {
    pub fn new(mesh: &'a ActiveMesh, dls: &DiscreteLevelSet, e: usize) -> Self {
        let coeffs = dls.local(mesh, e);
        Self::from_parts(
            mesh.reference_element(),
            mesh.tet(e),
            coeffs,
            SEARCH_FRACTION * mesh.h(),
        )
    }

    /// `coeffs` are the degree-`k` nodal values of `phi_h` on `tet`; the
    /// first four (vertex) values define `phi_hat_h`.
    pub fn from_parts(refel: &'a ReferenceElement, tet: Tet, coeffs: Vec<f64>, delta: f64) -> Self {
        let linear = [coeffs[0], coeffs[1], coeffs[2], coeffs[3]];
        SearchContext {
            refel,
            tet,
            coeffs,
            linear,
            delta,
        }
    }

    pub fn tet(&self) -> &Tet {
        &self.tet
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    fn eval_bary(&self, lambda: &[f64; 4], s: &mut BasisScratch) -> (f64, Vec3) {
        self.refel.eval_physical(&self.tet, lambda, &mut s.values, &mut s.grads);
        let mut v = 0.0;
        let mut g = Vec3::zeros();
        for (i, c) in self.coeffs.iter().enumerate() {
            v += c * s.values[i];
            g += s.grads[i] * *c;
        }
        (v, g)
    }

    /// `E_T phi_h` and its gradient at `x`.
    pub fn phi_h(&self, x: &Vec3) -> (f64, Vec3) {
        let mut s = BasisScratch::new(self.refel);
        self.eval_bary(&self.tet.barycentric(x), &mut s)
    }

    /// `phi_hat_h` at `x`.
    pub fn phi_lin(&self, x: &Vec3) -> f64 {
        let l = self.tet.barycentric(x);
        (0..4).map(|m| l[m] * self.linear[m]).sum()
    }

    /// `g(d) = E_T phi_h(x + d G_h(x)) - phi_hat_h(x)`.
    pub fn residual(&self, x: &Vec3, d: f64) -> f64 {
        let (_, g) = self.phi_h(x);
        self.phi_h(&(x + g * d)).0 - self.phi_lin(x)
    }

    /// Root of smallest modulus in `[-delta, delta]`.
    pub fn solve_dh(&self, x: &Vec3) -> Option<f64> {
        self.solve_dh_bary(&self.tet.barycentric(x))
    }

    /// As [`Self::solve_dh`], with the query point given in barycentric
    /// coordinates (exact at the Lagrange nodes).
    pub fn solve_dh_bary(&self, lambda: &[f64; 4]) -> Option<f64> {
        let mut s = BasisScratch::new(self.refel);
        let (_, dir) = self.eval_bary(lambda, &mut s);
        let target: f64 = (0..4).map(|m| lambda[m] * self.linear[m]).sum();
        // barycentric velocity along the search direction
        let dl: [f64; 4] = std::array::from_fn(|m| self.tet.grad_lambda[m].dot(&dir));
        let at = |d: f64| -> [f64; 4] { std::array::from_fn(|m| lambda[m] + d * dl[m]) };

        let scale = target.abs().max(1.0);
        let accept = 1e-12 * scale;
        let stop = 1e-14 * scale;
        let mut eval = |d: f64, s: &mut BasisScratch| {
            let (v, g) = self.eval_bary(&at(d), s);
            (v - target, g.dot(&dir))
        };

        let (g0, _) = eval(0.0, &mut s);
        if g0.abs() <= stop {
            return Some(0.0);
        }
        if dir.norm() == 0.0 {
            return None;
        }

        // safeguarded Newton from 0
        let mut d = 0.0;
        let mut newton_ok = false;
        for _ in 0..NEWTON_MAX_ITER {
            let (g, dg) = eval(d, &mut s);
            if g.abs() <= stop {
                newton_ok = true;
                break;
            }
            if dg == 0.0 || !dg.is_finite() {
                break;
            }
            let step = g / dg;
            d -= step;
            if d.abs() > self.delta || !d.is_finite() {
                break;
            }
            if step.abs() <= 1e-16 * self.delta {
                newton_ok = eval(d, &mut s).0.abs() <= accept;
                break;
            }
        }
        if newton_ok && d.abs() <= self.delta && !self.smaller_root_exists(&mut eval, d) {
            return Some(d);
        }

        // bracketed fallback
        let samples: Vec<f64> = (0..SCAN_SAMPLES)
            .map(|j| -self.delta + 2.0 * self.delta * j as f64 / (SCAN_SAMPLES - 1) as f64)
            .collect();
        let vals: Vec<f64> = samples.iter().map(|&d| eval(d, &mut s).0).collect();
        let mut best: Option<(f64, f64, f64)> = None;
        for j in 0..SCAN_SAMPLES - 1 {
            if vals[j] == 0.0 {
                let cand = samples[j];
                if best.is_none_or(|b| cand.abs() < b.0) {
                    best = Some((cand.abs(), cand, cand));
                }
            } else if vals[j].signum() != vals[j + 1].signum() {
                let (a, b) = (samples[j], samples[j + 1]);
                let dist = if a <= 0.0 && b >= 0.0 {
                    0.0
                } else {
                    a.abs().min(b.abs())
                };
                if best.is_none_or(|bb| dist < bb.0) {
                    best = Some((dist, a, b));
                }
            }
        }
        let (_, mut a, mut b) = best?;
        let mut ga = eval(a, &mut s).0;
        for _ in 0..200 {
            if (b - a).abs() <= 1e-17 * self.delta.max(1.0) {
                break;
            }
            let m = 0.5 * (a + b);
            let gm = eval(m, &mut s).0;
            if gm == 0.0 {
                a = m;
                b = m;
                break;
            }
            if gm.signum() == ga.signum() {
                a = m;
                ga = gm;
            } else {
                b = m;
            }
        }
        let root = 0.5 * (a + b);
        if eval(root, &mut s).0.abs() <= accept {
            Some(root)
        } else {
            None
        }
    }

    // A sign change strictly between 0 and `d` means Newton skipped a root.
    fn smaller_root_exists(&self, eval: &mut impl FnMut(f64, &mut BasisScratch) -> (f64, f64), d: f64) -> bool {
        if d == 0.0 {
            return false;
        }
        let mut s = BasisScratch::new(self.refel);
        let n = 8;
        let mut prev = eval(0.0, &mut s).0;
        for j in 1..n {
            let t = d * j as f64 / n as f64 * 0.95;
            let v = eval(t, &mut s).0;
            if v.signum() != prev.signum() {
                return true;
            }
            prev = v;
        }
        false
    }

    /// `Psi_h(x) = x + d_h(x) G_h(x)`.
    pub fn psi_h(&self, x: &Vec3) -> Option<Vec3> {
        let d = self.solve_dh(x)?;
        let (_, g) = self.phi_h(x);
        Some(x + g * d)
    }

    fn displacement_at_node(&self, i: usize, s: &mut BasisScratch) -> Option<Vec3> {
        let lambda = self.refel.node(i);
        let d = self.solve_dh_bary(&lambda)?;
        if d == 0.0 {
            return Some(Vec3::zeros());
        }
        let (_, g) = self.eval_bary(&lambda, s);
        Some(g * d)
    }
}

/// Patch average of element-wise nodal values (`values[e * nloc + i]`).
pub fn project_average(mesh: &ActiveMesh, values: &[Vec3]) -> Vec<Vec3> {
    let nloc = mesh.reference_element().num_nodes();
    assert_eq!(values.len(), mesh.num_elements() * nloc);
    let mut sum = vec![Vec3::zeros(); mesh.num_dofs()];
    for e in 0..mesh.num_elements() {
        for (i, &d) in mesh.dofs(e).iter().enumerate() {
            sum[d] += values[e * nloc + i];
        }
    }
    sum.iter()
        .enumerate()
        .map(|(d, s)| s / mesh.patch(d).len() as f64)
        .collect()
}

/// `Theta_h - id` as a degree-`k` vector field on the active dofs.
#[derive(Clone, Debug)]
pub struct IsoMapping {
    k: usize,
    displacement: Vec<Vec3>,
}

/// `Theta_h` and `D Theta_h` at a point of an element.
#[derive(Clone, Copy, Debug)]
pub struct ThetaEval {
    pub x: Vec3,
    pub y: Vec3,
    pub jacobian: Mat3,
    pub det: f64,
}

impl IsoMapping {
    pub fn identity(mesh: &ActiveMesh) -> Self {
        IsoMapping {
            k: mesh.degree(),
            displacement: vec![Vec3::zeros(); mesh.num_dofs()],
        }
    }

    pub fn from_displacement(mesh: &ActiveMesh, displacement: Vec<Vec3>) -> Self {
        assert_eq!(displacement.len(), mesh.num_dofs());
        IsoMapping {
            k: mesh.degree(),
            displacement,
        }
    }

    /// `Theta_h = P_h Psi_h`.
    pub fn build(mesh: &ActiveMesh, dls: &DiscreteLevelSet) -> Result<Self> {
        if mesh.degree() == 1 {
            log::info!("k = 1: phi_h equals its linear interpolant, Theta_h = id (zero displacement)");
            return Ok(Self::identity(mesh));
        }
        let refel = mesh.reference_element();
        let nloc = refel.num_nodes();
        let per_element: Vec<Result<Vec<Vec3>>> = (0..mesh.num_elements())
            .into_par_iter()
            .map(|e| {
                let ctx = SearchContext::new(mesh, dls, e);
                let mut s = BasisScratch::new(refel);
                (0..nloc)
                    .map(|i| {
                        ctx.displacement_at_node(i, &mut s).ok_or(Error::MappingFailed {
                            element: mesh.element(e),
                        })
                    })
                    .collect()
            })
            .collect();
        let mut values = Vec::with_capacity(mesh.num_elements() * nloc);
        for r in per_element {
            values.extend(r?);
        }
        let displacement = project_average(mesh, &values);
        Ok(IsoMapping {
            k: mesh.degree(),
            displacement,
        })
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn displacement(&self) -> &[Vec3] {
        &self.displacement
    }

    pub fn max_displacement(&self) -> f64 {
        self.displacement.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    pub fn local(&self, mesh: &ActiveMesh, e: usize) -> LocalMap {
        LocalMap {
            tet: mesh.tet(e),
            disp: mesh.dofs(e).iter().map(|&d| self.displacement[d]).collect(),
        }
    }

    /// `Theta_h` at barycentric point `lambda` of element `e`.
    pub fn eval(&self, mesh: &ActiveMesh, e: usize, lambda: &[f64; 4]) -> Result<ThetaEval> {
        let refel = mesh.reference_element();
        let mut s = BasisScratch::new(refel);
        let t = self.local(mesh, e).eval(refel, lambda, &mut s);
        if t.det <= 0.0 {
            return Err(Error::NotInvertible {
                element: mesh.element(e),
            });
        }
        Ok(t)
    }

    /// `(n_lin, n_h)` at `lambda` in element `e`.
    pub fn normals(
        &self,
        mesh: &ActiveMesh,
        dls: &DiscreteLevelSet,
        e: usize,
        lambda: &[f64; 4],
    ) -> Result<(Vec3, Vec3)> {
        let t = self.eval(mesh, e, lambda)?;
        let n_lin = linear_normal(&mesh.tet(e), &dls.vertex_values(mesh, e));
        let n_h = deformed_normal(&t.jacobian, &n_lin).ok_or(Error::NotInvertible {
            element: mesh.element(e),
        })?;
        Ok((n_lin, n_h))
    }
}

/// Per-element copy of the deformation coefficients.
#[derive(Clone, Debug)]
pub struct LocalMap {
    pub tet: Tet,
    pub disp: Vec<Vec3>,
}

impl LocalMap {
    /// Evaluates `Theta_h`; basis values and physical gradients are left in
    /// `s` for the caller.
    pub fn eval(&self, refel: &ReferenceElement, lambda: &[f64; 4], s: &mut BasisScratch) -> ThetaEval {
        refel.eval_physical(&self.tet, lambda, &mut s.values, &mut s.grads);
        let x = self.tet.point(lambda);
        let mut y = x;
        let mut j = Mat3::identity();
        for (i, d) in self.disp.iter().enumerate() {
            if d.x == 0.0 && d.y == 0.0 && d.z == 0.0 {
                continue;
            }
            y += d * s.values[i];
            j += d * s.grads[i].transpose();
        }
        ThetaEval {
            x,
            y,
            jacobian: j,
            det: j.determinant(),
        }
    }
}

/// Unit normal of the zero level of the affine function with the given
/// vertex values.
pub fn linear_normal(tet: &Tet, vertex_values: &[f64; 4]) -> Vec3 {
    let g = tet.physical_gradient(vertex_values);
    g / g.norm()
}

/// `D^{-T} n / |D^{-T} n|`.
pub fn deformed_normal(jacobian: &Mat3, n_lin: &Vec3) -> Option<Vec3> {
    let inv_t = jacobian.try_inverse()?.transpose();
    let n = inv_t * n_lin;
    Some(n / n.norm())
}

/// Largest jump of `Psi_h` across interior facets, sampled at the facet
/// vertices, edge midpoints and the points of a degree-4 triangle rule.
pub fn max_facet_jump(mesh: &ActiveMesh, dls: &DiscreteLevelSet) -> Result<f64> {
    let rule = TriangleRule::new(4)?;
    let mut pts: Vec<[f64; 3]> = vec![
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ];
    pts.extend(rule.points.iter().copied());
    let params = mesh.params();
    let jumps: Vec<Result<f64>> = mesh
        .facets()
        .par_iter()
        .map(|f| {
            let ca = SearchContext::new(mesh, dls, f.elements[0]);
            let cb = SearchContext::new(mesh, dls, f.elements[1]);
            let v = f.vertices.map(|c| params.vertex(c));
            let mut worst: f64 = 0.0;
            for p in &pts {
                let x = v[0] * p[0] + v[1] * p[1] + v[2] * p[2];
                let a = ca.psi_h(&x).ok_or(Error::MappingFailed {
                    element: mesh.element(f.elements[0]),
                })?;
                let b = cb.psi_h(&x).ok_or(Error::MappingFailed {
                    element: mesh.element(f.elements[1]),
                })?;
                worst = worst.max((a - b).norm());
            }
            Ok(worst)
        })
        .collect();
    let mut m: f64 = 0.0;
    for j in jumps {
        m = m.max(j?);
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{Aabb, LevelSet};
    use crate::mesh::{MeshParams, VertexValues};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(ls: &LevelSet, n: usize, k: usize) -> (ActiveMesh, DiscreteLevelSet) {
        let p = MeshParams::new(Aabb::cube(2.0), n).unwrap();
        let values = VertexValues::sample(&p, |x| ls.phi(x));
        let mesh = ActiveMesh::enumerate(&p, &values, k).unwrap();
        let dls = DiscreteLevelSet::interpolate(ls, &mesh).unwrap();
        (mesh, dls)
    }

    fn random_bary(rng: &mut impl Rng) -> [f64; 4] {
        let mut l = [0.0; 4];
        for x in l.iter_mut() {
            *x = -(rng.gen_range(1e-9f64..1.0)).ln();
        }
        let s: f64 = l.iter().sum();
        l.map(|x| x / s)
    }

    // Bisection oracle on g(d), started from a bracket found by fine scanning.
    fn bisection_root(ctx: &SearchContext, x: &Vec3) -> f64 {
        let delta = ctx.delta();
        let n = 2000;
        let g = |d: f64| ctx.residual(x, d);
        let mut best: Option<(f64, f64)> = None;
        for j in 0..n {
            let a = -delta + 2.0 * delta * j as f64 / n as f64;
            let b = a + 2.0 * delta / n as f64;
            if g(a).signum() != g(b).signum() {
                let dist = if a <= 0.0 && b >= 0.0 {
                    0.0
                } else {
                    a.abs().min(b.abs())
                };
                if best.is_none_or(|(bd, _)| dist < bd.abs()) {
                    best = Some((dist, a));
                }
            }
        }
        let (_, mut a) = best.expect("bracket");
        let mut b = a + 2.0 * delta / n as f64;
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if g(m).signum() == g(a).signum() {
                a = m;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    #[test]
    fn quadratic_levelset_matches_bisection() {
        // phi = x1^2 - 0.25 interpolated exactly by P2 on a tet with x1 in [0, 1]
        let refel = ReferenceElement::new(2).unwrap();
        let tet = Tet::new([
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
        ]);
        let phi = |x: &Vec3| x.x * x.x - 0.25;
        let coeffs: Vec<f64> = (0..refel.num_nodes())
            .map(|i| phi(&tet.point(&refel.node(i))))
            .collect();
        let ctx = SearchContext::from_parts(&refel, tet, coeffs, 1.0);
        let x = Vec3::new(0.3, 0.1, 0.05);
        let d = ctx.solve_dh(&x).unwrap();
        let oracle = bisection_root(&ctx, &x);
        assert!((d - oracle).abs() <= 1e-10, "{d} vs {oracle}");
        assert!(ctx.residual(&x, d).abs() <= 1e-12);
        // Psi_h(x) = x + d * (2 x1, 0, 0) must land where phi equals phi_hat
        let y = ctx.psi_h(&x).unwrap();
        assert!((phi(&y) - ctx.phi_lin(&x)).abs() <= 1e-12);
    }

    #[test]
    fn affine_levelset_gives_zero_displacement() {
        let ls = LevelSet::plane([0.2, 0.5, -0.8], 0.13).unwrap();
        for k in 1..=4 {
            let (mesh, dls) = setup(&ls, 8, k);
            let map = IsoMapping::build(&mesh, &dls).unwrap();
            assert!(map.max_displacement() == 0.0, "k={k}: {}", map.max_displacement());
        }
    }

    #[test]
    fn linear_elements_give_identity() {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let (mesh, dls) = setup(&ls, 8, 1);
        let map = IsoMapping::build(&mesh, &dls).unwrap();
        assert_eq!(map.max_displacement(), 0.0);
        // d_h vanishes for k = 1 everywhere, not just at nodes
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for e in 0..mesh.num_elements().min(50) {
            let ctx = SearchContext::new(&mesh, &dls, e);
            let x = ctx.tet().point(&random_bary(&mut rng));
            assert!(ctx.solve_dh(&x).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn project_average_cases() {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let (mesh, _) = setup(&ls, 8, 3);
        let nloc = mesh.reference_element().num_nodes();
        // restriction of a continuous field is reproduced
        let w = |x: Vec3| Vec3::new(x.y * x.z, x.x.sin(), 1.0 + x.x);
        let mut values = Vec::new();
        for e in 0..mesh.num_elements() {
            for &d in mesh.dofs(e) {
                values.push(w(mesh.dof_position(d)));
            }
        }
        let avg = project_average(&mesh, &values);
        for d in 0..mesh.num_dofs() {
            assert!((avg[d] - w(mesh.dof_position(d))).norm() < 1e-14);
        }
        // two elements sharing a facet node get the mean of their values
        let f = &mesh.facets()[0];
        let node = {
            let mut q = [0i64; 3];
            for (m, wt) in [1i64, 1, 1].iter().enumerate() {
                for c in 0..3 {
                    q[c] += wt * f.vertices[m][c];
                }
            }
            q
        };
        let dof = mesh.dof_of(node).unwrap();
        assert_eq!(mesh.patch(dof).len(), 2);
        let mut values = vec![Vec3::zeros(); mesh.num_elements() * nloc];
        for (slot, e) in mesh.patch(dof).iter().enumerate() {
            let i = mesh.dofs(*e).iter().position(|&x| x == dof).unwrap();
            values[e * nloc + i] = Vec3::repeat(if slot == 0 { 1.0 } else { 4.0 });
        }
        let avg = project_average(&mesh, &values);
        assert!((avg[dof] - Vec3::repeat(2.5)).norm() < 1e-15);
    }

    #[test]
    fn theta_is_continuous_across_facets() {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let (mesh, dls) = setup(&ls, 16, 3);
        let map = IsoMapping::build(&mesh, &dls).unwrap();
        for f in mesh.facets().iter().take(500) {
            let [ea, eb] = f.elements;
            let (ta, tb) = (mesh.tet(ea), mesh.tet(eb));
            let v = f.vertices.map(|c| mesh.params().vertex(c));
            for p in [[1.0 / 3.0; 3], [0.6, 0.3, 0.1], [0.0, 0.5, 0.5]] {
                let x = v[0] * p[0] + v[1] * p[1] + v[2] * p[2];
                let ya = map.eval(&mesh, ea, &ta.barycentric(&x)).unwrap().y;
                let yb = map.eval(&mesh, eb, &tb.barycentric(&x)).unwrap().y;
                assert!((ya - yb).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn construction_residual_and_smallest_root() {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let (mesh, dls) = setup(&ls, 16, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let refel = mesh.reference_element();
        for _ in 0..100 {
            let e = rng.gen_range(0..mesh.num_elements());
            let i = rng.gen_range(0..refel.num_nodes());
            let ctx = SearchContext::new(&mesh, &dls, e);
            let x = ctx.tet().point(&refel.node(i));
            let d = ctx.solve_dh(&x).unwrap();
            assert!(ctx.residual(&x, d).abs() <= 1e-12);
            // no root strictly closer to zero on a 1e-3 h grid
            let step = 1e-3 * mesh.h();
            let mut t = step;
            let g0 = ctx.residual(&x, 0.0);
            while t < d.abs() - step {
                let s = t * d.signum();
                assert_eq!(
                    ctx.residual(&x, s).signum(),
                    g0.signum(),
                    "earlier root at {s} (d = {d})"
                );
                let s = -t * d.signum();
                assert_eq!(
                    ctx.residual(&x, s).signum(),
                    g0.signum(),
                    "earlier root at {s} (d = {d})"
                );
                t += step;
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let (mesh, dls) = setup(&ls, 16, 3);
        let map = IsoMapping::build(&mesh, &dls).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let e = rng.gen_range(0..mesh.num_elements());
            let tet = mesh.tet(e);
            let lam = random_bary(&mut rng);
            let t = map.eval(&mesh, e, &lam).unwrap();
            let d = 1e-6;
            for axis in 0..3 {
                let mut dx = Vec3::zeros();
                dx[axis] = d;
                let yp = map.eval(&mesh, e, &tet.barycentric(&(t.x + dx))).unwrap().y;
                let ym = map.eval(&mesh, e, &tet.barycentric(&(t.x - dx))).unwrap().y;
                let col = (yp - ym) / (2.0 * d);
                assert!((col - t.jacobian.column(axis)).norm() <= 1e-5);
            }
        }
    }

    #[test]
    fn identity_map_and_normals() {
        let ls = LevelSet::plane([1.0, 0.0, 0.0], 0.3).unwrap();
        let (mesh, dls) = setup(&ls, 8, 2);
        let map = IsoMapping::identity(&mesh);
        let t = map.eval(&mesh, 0, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!((t.y - t.x).norm() == 0.0);
        assert_eq!(t.jacobian, Mat3::identity());
        let (n_lin, n_h) = map.normals(&mesh, &dls, 0, &[0.25; 4]).unwrap();
        assert!((n_lin - Vec3::x()).norm() < 1e-14);
        assert!((n_h - n_lin).norm() < 1e-14);
    }

    #[test]
    fn displacement_decays_like_h_squared() {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let disp: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let (mesh, dls) = setup(&ls, n, 3);
                IsoMapping::build(&mesh, &dls).unwrap().max_displacement()
            })
            .collect();
        for w in disp.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.7, "{disp:?}");
        }
    }

    #[test]
    fn residual_of_exact_levelset_at_psi() {
        // phi(Psi_h(x)) - phi_hat_h(x) is O(h^{k+1})
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let errs: Vec<f64> = [16, 32]
            .iter()
            .map(|&n| {
                let (mesh, dls) = setup(&ls, n, 2);
                let mut m: f64 = 0.0;
                for e in 0..mesh.num_elements() {
                    let ctx = SearchContext::new(&mesh, &dls, e);
                    let x = ctx.tet().point(&random_bary(&mut rng));
                    let y = ctx.psi_h(&x).unwrap();
                    m = m.max((ls.phi(&y) - ctx.phi_lin(&x)).abs());
                }
                m
            })
            .collect();
        assert!((errs[0] / errs[1]).log2() >= 2.5, "{errs:?}");
    }
}
