//! Degree-`k` Lagrange element on tetrahedra and the discrete level set.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::levelset::{LevelSet, Vec3};
use crate::mesh::{perturb_zero, ActiveMesh, Tet};

/// Equispaced Lagrange element of degree `k` in barycentric form.
///
/// Nodes are the multi-indices `alpha` with `|alpha| = k`; the four vertices
/// come first, the rest in lexicographic order.
#[derive(Clone, Debug)]
pub struct ReferenceElement {
    k: usize,
    nodes: Vec<[usize; 4]>,
}

impl ReferenceElement {
    pub fn new(k: usize) -> Result<Self> {
        if !(1..=5).contains(&k) {
            return Err(Error::UnsupportedOrder(k));
        }
        let mut nodes: Vec<[usize; 4]> = (0..4)
            .map(|m| {
                let mut a = [0; 4];
                a[m] = k;
                a
            })
            .collect();
        for a1 in 0..=k {
            for a2 in 0..=k - a1 {
                for a3 in 0..=k - a1 - a2 {
                    let a = [k - a1 - a2 - a3, a1, a2, a3];
                    if a.contains(&k) {
                        continue;
                    }
                    nodes.push(a);
                }
            }
        }
        Ok(ReferenceElement { k, nodes })
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn multi_indices(&self) -> &[[usize; 4]] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> [f64; 4] {
        self.nodes[i].map(|a| a as f64 / self.k as f64)
    }

    /// Basis values and their barycentric partial derivatives at `lambda`.
    /// Extrapolates when `lambda` lies outside the simplex.
    pub fn eval(&self, lambda: &[f64; 4], values: &mut [f64], dlambda: &mut [[f64; 4]]) {
        let k = self.k;
        // p[m][a] = prod_{j<a} (k l_m - j) / (j + 1), and its derivative
        let mut p = [[0.0; 6]; 4];
        let mut dp = [[0.0; 6]; 4];
        for m in 0..4 {
            let kl = k as f64 * lambda[m];
            p[m][0] = 1.0;
            dp[m][0] = 0.0;
            for a in 0..k {
                let inv = 1.0 / (a as f64 + 1.0);
                p[m][a + 1] = p[m][a] * (kl - a as f64) * inv;
                dp[m][a + 1] = (dp[m][a] * (kl - a as f64) + p[m][a] * k as f64) * inv;
            }
        }
        for (i, a) in self.nodes.iter().enumerate() {
            let f = [p[0][a[0]], p[1][a[1]], p[2][a[2]], p[3][a[3]]];
            values[i] = f[0] * f[1] * f[2] * f[3];
            dlambda[i] = [
                dp[0][a[0]] * f[1] * f[2] * f[3],
                f[0] * dp[1][a[1]] * f[2] * f[3],
                f[0] * f[1] * dp[2][a[2]] * f[3],
                f[0] * f[1] * f[2] * dp[3][a[3]],
            ];
        }
    }

    pub fn values(&self, lambda: &[f64; 4]) -> Vec<f64> {
        let mut v = vec![0.0; self.num_nodes()];
        let mut d = vec![[0.0; 4]; self.num_nodes()];
        self.eval(lambda, &mut v, &mut d);
        v
    }

    /// Values and physical gradients on `tet`.
    pub fn eval_physical(&self, tet: &Tet, lambda: &[f64; 4], values: &mut [f64], grads: &mut [Vec3]) {
        let mut d = [[0.0; 4]; 56];
        let n = self.num_nodes();
        self.eval(lambda, values, &mut d[..n]);
        for i in 0..n {
            grads[i] = tet.physical_gradient(&d[i]);
        }
    }
}

/// Scratch buffers for basis evaluation.
#[derive(Clone, Debug)]
pub struct BasisScratch {
    pub values: Vec<f64>,
    pub grads: Vec<Vec3>,
}

impl BasisScratch {
    pub fn new(refel: &ReferenceElement) -> Self {
        BasisScratch {
            values: vec![0.0; refel.num_nodes()],
            grads: vec![Vec3::zeros(); refel.num_nodes()],
        }
    }
}

/// `phi_h = I^k phi` stored per dof. The piecewise linear interpolant
/// `phi_hat_h = I^1 phi_h` is read off the vertex dofs.
#[derive(Clone, Debug)]
pub struct DiscreteLevelSet {
    k: usize,
    nodal: Vec<f64>,
}

impl DiscreteLevelSet {
    /// Nodal interpolation of `ls` on every dof of the active mesh. Vertex
    /// values get the same zero perturbation as the mesh classification.
    pub fn interpolate(ls: &LevelSet, mesh: &ActiveMesh) -> Result<Self> {
        Self::interpolate_fn(mesh, |x| Ok(ls.phi(x)))
    }

    pub fn interpolate_fn(mesh: &ActiveMesh, phi: impl Fn(&Vec3) -> Result<f64> + Sync) -> Result<Self> {
        let h = mesh.h();
        let nodal = (0..mesh.num_dofs())
            .into_par_iter()
            .map(|d| {
                let v = phi(&mesh.dof_position(d))?;
                if !v.is_finite() {
                    let x = mesh.dof_position(d);
                    return Err(Error::SingularPoint([x.x, x.y, x.z]));
                }
                Ok(if mesh.is_vertex_dof(d) { perturb_zero(v, h) } else { v })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(DiscreteLevelSet {
            k: mesh.degree(),
            nodal,
        })
    }

    pub fn degree(&self) -> usize {
        self.k
    }

    pub fn nodal(&self) -> &[f64] {
        &self.nodal
    }

    /// Local degree-`k` coefficients of element `e`.
    pub fn local(&self, mesh: &ActiveMesh, e: usize) -> Vec<f64> {
        mesh.dofs(e).iter().map(|&d| self.nodal[d]).collect()
    }

    /// Values of `phi_hat_h` at the four vertices of element `e`.
    pub fn vertex_values(&self, mesh: &ActiveMesh, e: usize) -> [f64; 4] {
        let dofs = mesh.dofs(e);
        [
            self.nodal[dofs[0]],
            self.nodal[dofs[1]],
            self.nodal[dofs[2]],
            self.nodal[dofs[3]],
        ]
    }

    /// `phi_h|_T` and its gradient at `x` (polynomially extended beyond `T`).
    pub fn eval(&self, mesh: &ActiveMesh, e: usize, x: &Vec3) -> (f64, Vec3) {
        let tet = mesh.tet(e);
        let lam = tet.barycentric(x);
        let refel = mesh.reference_element();
        let mut s = BasisScratch::new(refel);
        refel.eval_physical(&tet, &lam, &mut s.values, &mut s.grads);
        let mut v = 0.0;
        let mut g = Vec3::zeros();
        for (i, &d) in mesh.dofs(e).iter().enumerate() {
            v += self.nodal[d] * s.values[i];
            g += s.grads[i] * self.nodal[d];
        }
        (v, g)
    }

    /// `phi_hat_h|_T` at `x`.
    pub fn eval_linear(&self, mesh: &ActiveMesh, e: usize, x: &Vec3) -> f64 {
        let lam = mesh.tet(e).barycentric(x);
        let vv = self.vertex_values(mesh, e);
        (0..4).map(|m| lam[m] * vv[m]).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::Aabb;
    use crate::mesh::{MeshParams, VertexValues};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bary(rng: &mut impl Rng) -> [f64; 4] {
        let mut l = [0.0; 4];
        for x in l.iter_mut() {
            *x = -(rng.gen_range(1e-9f64..1.0)).ln();
        }
        let s: f64 = l.iter().sum();
        l.map(|x| x / s)
    }

    #[test]
    fn node_counts() {
        for k in 1..=5 {
            let r = ReferenceElement::new(k).unwrap();
            assert_eq!(r.num_nodes(), (k + 1) * (k + 2) * (k + 3) / 6);
        }
        assert!(ReferenceElement::new(0).is_err());
        assert!(ReferenceElement::new(6).is_err());
    }

    #[test]
    fn kronecker_property() {
        for k in 1..=5 {
            let r = ReferenceElement::new(k).unwrap();
            for j in 0..r.num_nodes() {
                let v = r.values(&r.node(j));
                for (i, vi) in v.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((vi - expect).abs() <= 1e-13, "k={k} i={i} j={j}");
                }
            }
        }
    }

    #[test]
    fn specific_values() {
        let r1 = ReferenceElement::new(1).unwrap();
        assert_eq!(r1.values(&[1.0, 0.0, 0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0]);
        let r2 = ReferenceElement::new(2).unwrap();
        let v = r2.values(&[0.5, 0.5, 0.0, 0.0]);
        let edge = r2.multi_indices().iter().position(|a| *a == [1, 1, 0, 0]).unwrap();
        for (i, vi) in v.iter().enumerate() {
            assert!((vi - if i == edge { 1.0 } else { 0.0 }).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn partition_of_unity(k in 1usize..=5, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let r = ReferenceElement::new(k).unwrap();
            let lam = [1.0 - a - b - c, a, b, c]; // may extrapolate
            let tet = Tet::new([Vec3::new(0.1, 0.0, 0.0), Vec3::new(1.0, 0.2, 0.0), Vec3::new(0.0, 1.0, 0.3), Vec3::new(0.2, 0.1, 1.1)]);
            let mut v = vec![0.0; r.num_nodes()];
            let mut g = vec![Vec3::zeros(); r.num_nodes()];
            r.eval_physical(&tet, &lam, &mut v, &mut g);
            let s: f64 = v.iter().sum();
            let gs: Vec3 = g.iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-11);
            prop_assert!(gs.norm() <= 1e-10);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tet = Tet::new([
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(0.5, 0.0, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
            Vec3::new(0.5, 0.5, 0.5),
        ]);
        for k in 1..=5 {
            let r = ReferenceElement::new(k).unwrap();
            let n = r.num_nodes();
            for _ in 0..20 {
                let x = tet.point(&random_bary(&mut rng));
                let mut v = vec![0.0; n];
                let mut g = vec![Vec3::zeros(); n];
                r.eval_physical(&tet, &tet.barycentric(&x), &mut v, &mut g);
                let d = 1e-6;
                for axis in 0..3 {
                    let mut e = Vec3::zeros();
                    e[axis] = d;
                    let vp = r.values(&tet.barycentric(&(x + e)));
                    let vm = r.values(&tet.barycentric(&(x - e)));
                    for i in 0..n {
                        let fd = (vp[i] - vm[i]) / (2.0 * d);
                        let scale = g[i].norm().max(1.0);
                        assert!((fd - g[i][axis]).abs() <= 1e-6 * scale, "k={k} i={i}");
                    }
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tet = Tet::new([
            Vec3::new(0.1, -0.2, 0.0),
            Vec3::new(1.0, 0.3, 0.1),
            Vec3::new(-0.2, 0.9, 0.2),
            Vec3::new(0.3, 0.2, 1.0),
        ]);
        for k in 1..=5 {
            let r = ReferenceElement::new(k).unwrap();
            for a in 0..=k as i32 {
                for b in 0..=(k as i32 - a) {
                    for c in 0..=(k as i32 - a - b) {
                        let f = |x: &Vec3| x.x.powi(a) * x.y.powi(b) * x.z.powi(c);
                        let coeffs: Vec<f64> = (0..r.num_nodes()).map(|i| f(&tet.point(&r.node(i)))).collect();
                        for _ in 0..5 {
                            let lam = random_bary(&mut rng);
                            let v = r.values(&lam);
                            let interp: f64 = v.iter().zip(&coeffs).map(|(v, c)| v * c).sum();
                            assert!((interp - f(&tet.point(&lam))).abs() <= 1e-12, "k={k} ({a},{b},{c})");
                        }
                    }
                }
            }
        }
    }

    fn mesh(ls: &LevelSet, n: usize, k: usize) -> ActiveMesh {
        let p = MeshParams::new(Aabb::cube(2.0), n).unwrap();
        let values = VertexValues::sample(&p, |x| ls.phi(x));
        ActiveMesh::enumerate(&p, &values, k).unwrap()
    }

    #[test]
    fn affine_levelset_is_reproduced() {
        let ls = LevelSet::plane([0.3, -0.4, 0.866], 0.1).unwrap();
        let m = mesh(&ls, 8, 3);
        let dls = DiscreteLevelSet::interpolate(&ls, &m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for e in 0..m.num_elements() {
            let x = m.tet(e).point(&random_bary(&mut rng));
            let (v, g) = dls.eval(&m, e, &x);
            assert!((v - ls.phi(&x)).abs() < 1e-12);
            assert!((dls.eval_linear(&m, e, &x) - ls.phi(&x)).abs() < 1e-12);
            assert!((g - ls.grad_phi(&x).unwrap()).norm() < 1e-11);
        }
    }

    #[test]
    fn linear_part_matches_at_vertices_and_is_affine() {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let m = mesh(&ls, 8, 2);
        let dls = DiscreteLevelSet::interpolate(&ls, &m).unwrap();
        for e in 0..m.num_elements() {
            let tet = m.tet(e);
            for v in tet.vertices {
                assert!((dls.eval_linear(&m, e, &v) - dls.eval(&m, e, &v).0).abs() < 1e-13);
            }
            // second differences along an edge vanish
            let (a, b) = (tet.vertices[0], tet.vertices[3]);
            let f = |t: f64| dls.eval_linear(&m, e, &(a + (b - a) * t));
            assert!((f(0.2) - 2.0 * f(0.5) + f(0.8)).abs() < 1e-13);
        }
    }

    fn max_interp_error(n: usize, k: usize, rng: &mut ChaCha8Rng) -> f64 {
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let m = mesh(&ls, n, k);
        let dls = DiscreteLevelSet::interpolate(&ls, &m).unwrap();
        let samples = 100_000 / m.num_elements() + 1;
        let mut err: f64 = 0.0;
        for e in 0..m.num_elements() {
            let tet = m.tet(e);
            for _ in 0..samples {
                let x = tet.point(&random_bary(rng));
                err = err.max((dls.eval(&m, e, &x).0 - ls.phi(&x)).abs());
            }
        }
        err
    }

    #[test]
    fn torus_interpolation_error_decays() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let k = 2;
        let errs: Vec<f64> = [16, 32, 64].iter().map(|&n| max_interp_error(n, k, &mut rng)).collect();
        let eoc = (errs[1] / errs[2]).log2();
        assert!(eoc >= 2.7, "{errs:?} eoc {eoc}");
    }
}
