//! Implicit structured tetrahedral background mesh.
//!
//! The box is divided into `n^3` cubes, each split into six Kuhn tetrahedra
//! that share the cube's main diagonal. Only the elements cut by the
//! piecewise linear zero level are materialized. Degree-`k` Lagrange nodes of
//! every Kuhn tetrahedron lie on the global lattice of spacing `h / k`, which
//! is what the degree-of-freedom numbering is keyed on.

use std::fmt;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::element::ReferenceElement;
use crate::error::{Error, Result};
use crate::levelset::{Aabb, Vec3};

/// Axis orderings for the six Kuhn tetrahedra of a cube.
pub const KUHN_PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshParams {
    pub domain: Aabb,
    /// Cells per axis.
    pub n: usize,
}

impl MeshParams {
    pub fn new(domain: Aabb, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("mesh needs at least 2 cells per axis (got {n})")));
        }
        let e0 = domain.extent(0);
        if !(e0 > 0.0) || (1..3).any(|a| (domain.extent(a) - e0).abs() > 1e-12 * e0) {
            return Err(Error::Config("mesh box must be a cube".into()));
        }
        Ok(MeshParams { domain, n })
    }

    /// Cube edge length.
    pub fn h(&self) -> f64 {
        self.domain.extent(0) / self.n as f64
    }

    pub fn vertices_per_axis(&self) -> usize {
        self.n + 1
    }

    /// Position of a point on the lattice of spacing `h / k`.
    pub fn lattice_point(&self, coords: [i64; 3], k: usize) -> Vec3 {
        let s = self.h() / k as f64;
        Vec3::new(
            self.domain.min[0] + coords[0] as f64 * s,
            self.domain.min[1] + coords[1] as f64 * s,
            self.domain.min[2] + coords[2] as f64 * s,
        )
    }

    pub fn vertex(&self, coords: [i64; 3]) -> Vec3 {
        self.lattice_point(coords, 1)
    }

    fn vertex_index(&self, c: [i64; 3]) -> usize {
        let m = self.vertices_per_axis();
        (c[0] as usize * m + c[1] as usize) * m + c[2] as usize
    }
}

/// A Kuhn tetrahedron: cube index plus sub-tet index `0..6`.
/// The derived ordering is lexicographic in `(i, j, k, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ElementId {
    pub cube: [u32; 3],
    pub tet: u8,
}

impl ElementId {
    /// Vertex coordinates on the cube lattice.
    pub fn vertices(&self) -> [[i64; 3]; 4] {
        let c = [self.cube[0] as i64, self.cube[1] as i64, self.cube[2] as i64];
        let p = KUHN_PERMUTATIONS[self.tet as usize];
        let mut v1 = c;
        v1[p[0]] += 1;
        let mut v2 = v1;
        v2[p[1]] += 1;
        [c, v1, v2, [c[0] + 1, c[1] + 1, c[2] + 1]]
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})/{}", self.cube[0], self.cube[1], self.cube[2], self.tet)
    }
}

/// Affine tetrahedron with precomputed barycentric gradients.
#[derive(Clone, Copy, Debug)]
pub struct Tet {
    pub vertices: [Vec3; 4],
    pub grad_lambda: [Vec3; 4],
    pub volume: f64,
}

impl Tet {
    pub fn new(vertices: [Vec3; 4]) -> Self {
        let b = Matrix3::from_columns(&[
            vertices[1] - vertices[0],
            vertices[2] - vertices[0],
            vertices[3] - vertices[0],
        ]);
        let det = b.determinant();
        let inv = b.try_inverse().expect("degenerate tetrahedron");
        let g1 = inv.row(0).transpose();
        let g2 = inv.row(1).transpose();
        let g3 = inv.row(2).transpose();
        Tet {
            vertices,
            grad_lambda: [-(g1 + g2 + g3), g1, g2, g3],
            volume: det.abs() / 6.0,
        }
    }

    /// Barycentric coordinates; valid (affinely extended) outside the tet too.
    pub fn barycentric(&self, x: &Vec3) -> [f64; 4] {
        let d = x - self.vertices[0];
        let l1 = self.grad_lambda[1].dot(&d);
        let l2 = self.grad_lambda[2].dot(&d);
        let l3 = self.grad_lambda[3].dot(&d);
        [1.0 - l1 - l2 - l3, l1, l2, l3]
    }

    pub fn point(&self, lambda: &[f64; 4]) -> Vec3 {
        self.vertices[0] * lambda[0]
            + self.vertices[1] * lambda[1]
            + self.vertices[2] * lambda[2]
            + self.vertices[3] * lambda[3]
    }

    /// Chain rule from barycentric to physical derivatives.
    pub fn physical_gradient(&self, dlambda: &[f64; 4]) -> Vec3 {
        self.grad_lambda[0] * dlambda[0]
            + self.grad_lambda[1] * dlambda[1]
            + self.grad_lambda[2] * dlambda[2]
            + self.grad_lambda[3] * dlambda[3]
    }
}

/// Values of the piecewise linear level set at every cube-lattice vertex.
#[derive(Clone, Debug)]
pub struct VertexValues {
    params: MeshParams,
    values: Vec<f64>,
}

/// Exact zeros are shifted to this multiple of `h` so that sign classification
/// is never ambiguous.
pub const ZERO_PERTURBATION: f64 = 1e-14;

pub(crate) fn perturb_zero(v: f64, h: f64) -> f64 {
    if v == 0.0 {
        ZERO_PERTURBATION * h
    } else {
        v
    }
}

impl VertexValues {
    pub fn sample(params: &MeshParams, phi: impl Fn(&Vec3) -> f64 + Sync) -> Self {
        let m = params.vertices_per_axis() as i64;
        let h = params.h();
        let values = (0..m * m * m)
            .into_par_iter()
            .map(|idx| {
                let c = [idx / (m * m), (idx / m) % m, idx % m];
                perturb_zero(phi(&params.vertex(c)), h)
            })
            .collect();
        VertexValues {
            params: *params,
            values,
        }
    }

    pub fn from_values(params: &MeshParams, values: Vec<f64>) -> Result<Self> {
        let m = params.vertices_per_axis();
        if values.len() != m * m * m {
            return Err(Error::Config(format!(
                "expected {} vertex values, got {}",
                m * m * m,
                values.len()
            )));
        }
        let h = params.h();
        let values = values.into_iter().map(|v| perturb_zero(v, h)).collect();
        Ok(VertexValues {
            params: *params,
            values,
        })
    }

    pub fn get(&self, c: [i64; 3]) -> f64 {
        self.values[self.params.vertex_index(c)]
    }
}

pub(crate) fn is_cut(values: &[f64]) -> bool {
    let all_pos = values.iter().all(|v| *v > 0.0);
    let all_neg = values.iter().all(|v| *v < 0.0);
    !(all_pos || all_neg)
}

/// Interior facet shared by two active elements.
#[derive(Clone, Debug)]
pub struct Facet {
    /// Active-element indices, lower first.
    pub elements: [usize; 2],
    /// Cube-lattice coordinates of the shared triangle.
    pub vertices: [[i64; 3]; 3],
    /// Unit normal pointing from `elements[0]` into `elements[1]`.
    pub normal: Vec3,
    pub area: f64,
}

/// The cut elements, their interior facets, and the degree-`k` dof numbering.
#[derive(Clone, Debug)]
pub struct ActiveMesh {
    params: MeshParams,
    refel: ReferenceElement,
    active: Vec<ElementId>,
    element_dofs: Vec<usize>,
    dof_nodes: Vec<[i64; 3]>,
    patch_offsets: Vec<usize>,
    patch_elements: Vec<usize>,
    facets: Vec<Facet>,
}

impl ActiveMesh {
    /// Collects the tetrahedra whose vertex values change sign, in
    /// lexicographic `(i, j, k, t)` order.
    pub fn enumerate(params: &MeshParams, values: &VertexValues, k: usize) -> Result<Self> {
        let refel = ReferenceElement::new(k)?;
        let n = params.n as u32;
        let active: Vec<ElementId> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut found = Vec::new();
                for j in 0..n {
                    for l in 0..n {
                        let c = [i as i64, j as i64, l as i64];
                        let mut corners = [0.0; 8];
                        for (q, corner) in corners.iter_mut().enumerate() {
                            *corner = values.get([
                                c[0] + (q as i64 >> 2),
                                c[1] + ((q as i64 >> 1) & 1),
                                c[2] + (q as i64 & 1),
                            ]);
                        }
                        if !is_cut(&corners) {
                            continue;
                        }
                        for t in 0..6u8 {
                            let id = ElementId {
                                cube: [i, j, l],
                                tet: t,
                            };
                            let vv = id.vertices().map(|v| values.get(v));
                            if is_cut(&vv) {
                                found.push(id);
                            }
                        }
                    }
                }
                found
            })
            .flatten()
            .collect();
        Self::from_elements(params, active, refel)
    }

    /// Builds the mesh data for an explicit, sorted element list.
    pub fn from_elements(params: &MeshParams, mut active: Vec<ElementId>, refel: ReferenceElement) -> Result<Self> {
        if active.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        active.sort_unstable();
        active.dedup();
        let nloc = refel.num_nodes();

        let local_nodes = |id: &ElementId| -> Vec<[i64; 3]> {
            let v = id.vertices();
            refel
                .multi_indices()
                .iter()
                .map(|a| {
                    let mut p = [0i64; 3];
                    for (m, vm) in v.iter().enumerate() {
                        for d in 0..3 {
                            p[d] += a[m] as i64 * vm[d];
                        }
                    }
                    p
                })
                .collect()
        };

        let per_element: Vec<Vec<[i64; 3]>> = active.par_iter().map(local_nodes).collect();
        let mut dof_nodes: Vec<[i64; 3]> = per_element.iter().flatten().copied().collect();
        dof_nodes.par_sort_unstable();
        dof_nodes.dedup();

        let element_dofs: Vec<usize> = per_element
            .par_iter()
            .flat_map_iter(|nodes| {
                nodes
                    .iter()
                    .map(|p| dof_nodes.binary_search(p).expect("node collected above"))
                    .collect::<Vec<_>>()
            })
            .collect();

        // dof -> incident elements (CSR, element indices ascending)
        let ndofs = dof_nodes.len();
        let mut patch_offsets = vec![0usize; ndofs + 1];
        for &d in &element_dofs {
            patch_offsets[d + 1] += 1;
        }
        for i in 0..ndofs {
            patch_offsets[i + 1] += patch_offsets[i];
        }
        let mut fill = patch_offsets.clone();
        let mut patch_elements = vec![0usize; element_dofs.len()];
        for (e, dofs) in element_dofs.chunks(nloc).enumerate() {
            for &d in dofs {
                patch_elements[fill[d]] = e;
                fill[d] += 1;
            }
        }

        let facets = build_facets(params, &active);
        Ok(ActiveMesh {
            params: *params,
            refel,
            active,
            element_dofs,
            dof_nodes,
            patch_offsets,
            patch_elements,
            facets,
        })
    }

    pub fn params(&self) -> &MeshParams {
        &self.params
    }

    pub fn h(&self) -> f64 {
        self.params.h()
    }

    pub fn degree(&self) -> usize {
        self.refel.degree()
    }

    pub fn reference_element(&self) -> &ReferenceElement {
        &self.refel
    }

    pub fn num_elements(&self) -> usize {
        self.active.len()
    }

    pub fn num_dofs(&self) -> usize {
        self.dof_nodes.len()
    }

    pub fn elements(&self) -> &[ElementId] {
        &self.active
    }

    pub fn element(&self, e: usize) -> ElementId {
        self.active[e]
    }

    /// Global dofs of element `e` in reference-node order.
    pub fn dofs(&self, e: usize) -> &[usize] {
        let nloc = self.refel.num_nodes();
        &self.element_dofs[e * nloc..(e + 1) * nloc]
    }

    pub fn tet(&self, e: usize) -> Tet {
        Tet::new(self.active[e].vertices().map(|v| self.params.vertex(v)))
    }

    /// Lattice coordinates (spacing `h / k`) of a dof.
    pub fn dof_node(&self, dof: usize) -> [i64; 3] {
        self.dof_nodes[dof]
    }

    pub fn dof_position(&self, dof: usize) -> Vec3 {
        self.params.lattice_point(self.dof_nodes[dof], self.degree())
    }

    pub fn dof_of(&self, node: [i64; 3]) -> Option<usize> {
        self.dof_nodes.binary_search(&node).ok()
    }

    /// Whether the dof sits on a cube-lattice vertex.
    pub fn is_vertex_dof(&self, dof: usize) -> bool {
        let k = self.degree() as i64;
        self.dof_nodes[dof].iter().all(|c| c % k == 0)
    }

    /// Active elements (indices) containing the dof.
    pub fn patch(&self, dof: usize) -> &[usize] {
        &self.patch_elements[self.patch_offsets[dof]..self.patch_offsets[dof + 1]]
    }

    /// Active elements containing the lattice node.
    pub fn node_patch(&self, node: [i64; 3]) -> Result<Vec<ElementId>> {
        let dof = self.dof_of(node).ok_or(Error::UnknownNode(node))?;
        Ok(self.patch(dof).iter().map(|&e| self.active[e]).collect())
    }

    /// Facets shared by two active elements.
    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    /// Sum of element volumes.
    pub fn volume(&self) -> f64 {
        (0..self.num_elements()).map(|e| self.tet(e).volume).sum()
    }
}

fn build_facets(params: &MeshParams, active: &[ElementId]) -> Vec<Facet> {
    let mut faces: Vec<([[i64; 3]; 3], usize, usize)> = Vec::with_capacity(active.len() * 4);
    for (e, id) in active.iter().enumerate() {
        let v = id.vertices();
        for omit in 0..4 {
            let mut key = [[0i64; 3]; 3];
            let mut q = 0;
            for (m, vm) in v.iter().enumerate() {
                if m != omit {
                    key[q] = *vm;
                    q += 1;
                }
            }
            key.sort_unstable();
            faces.push((key, e, omit));
        }
    }
    faces.par_sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut facets = Vec::new();
    let mut i = 0;
    while i < faces.len() {
        let mut j = i + 1;
        while j < faces.len() && faces[j].0 == faces[i].0 {
            j += 1;
        }
        debug_assert!(j - i <= 2, "non-conforming face");
        if j - i == 2 {
            let (key, ea, omit) = faces[i];
            let eb = faces[i + 1].1;
            let p = key.map(|c| params.vertex(c));
            let cross = (p[1] - p[0]).cross(&(p[2] - p[0]));
            let area = 0.5 * cross.norm();
            let mut normal = cross / cross.norm();
            let opposite = params.vertex(active[ea].vertices()[omit]);
            if normal.dot(&(opposite - p[0])) > 0.0 {
                normal = -normal;
            }
            facets.push(Facet {
                elements: [ea, eb],
                vertices: key,
                normal,
                area,
            });
        }
        i = j;
    }
    facets.sort_by_key(|f| f.elements);
    facets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::LevelSet;
    use std::collections::HashMap;

    fn params(n: usize) -> MeshParams {
        MeshParams::new(Aabb::cube(2.0), n).unwrap()
    }

    #[test]
    fn kuhn_tets_partition_the_cube() {
        let p = params(2);
        let vol: f64 = (0..6)
            .map(|t| {
                Tet::new(
                    ElementId {
                        cube: [0, 0, 0],
                        tet: t,
                    }
                    .vertices()
                    .map(|v| p.vertex(v)),
                )
                .volume
            })
            .sum();
        assert!((vol - p.h().powi(3)).abs() < 1e-14);
        // every tet has the main diagonal
        for t in 0..6 {
            let v = ElementId {
                cube: [1, 0, 1],
                tet: t,
            }
            .vertices();
            assert_eq!(v[0], [1, 0, 1]);
            assert_eq!(v[3], [2, 1, 2]);
        }
    }

    #[test]
    fn global_triangulation_is_conforming() {
        // all 6 n^3 tets: every face key is shared by at most two tets, and
        // interior faces by exactly two
        let p = params(3);
        let mut count: HashMap<[[i64; 3]; 3], usize> = HashMap::new();
        for i in 0..3 {
            for j in 0..3 {
                for l in 0..3 {
                    for t in 0..6 {
                        let v = ElementId {
                            cube: [i, j, l],
                            tet: t,
                        }
                        .vertices();
                        for omit in 0..4 {
                            let mut key: Vec<[i64; 3]> = (0..4).filter(|m| *m != omit).map(|m| v[m]).collect();
                            key.sort();
                            *count.entry([key[0], key[1], key[2]]).or_default() += 1;
                        }
                    }
                }
            }
        }
        for (key, c) in count {
            let on_boundary = (0..3).any(|d| key.iter().all(|v| v[d] == 0) || key.iter().all(|v| v[d] == 3));
            assert_eq!(c, if on_boundary { 1 } else { 2 }, "{key:?}");
        }
        let _ = p;
    }

    fn all_tets(n: u32) -> impl Iterator<Item = ElementId> {
        (0..n).flat_map(move |i| {
            (0..n).flat_map(move |j| {
                (0..n).flat_map(move |l| {
                    (0..6).map(move |t| ElementId {
                        cube: [i, j, l],
                        tet: t,
                    })
                })
            })
        })
    }

    #[test]
    fn plane_layer_matches_brute_force() {
        let p = params(8);
        // x1 = 0.3 lies strictly inside the cube layer [0, 0.5]
        let ls = LevelSet::plane([1.0, 0.0, 0.0], 0.3).unwrap();
        let values = VertexValues::sample(&p, |x| ls.phi(x));
        let mesh = ActiveMesh::enumerate(&p, &values, 1).unwrap();
        let brute: Vec<ElementId> = all_tets(8)
            .filter(|id| is_cut(&id.vertices().map(|v| ls.phi(&p.vertex(v)))))
            .collect();
        assert_eq!(mesh.elements(), &brute[..]);
        // every tet of the layer spans both lattice planes, so all 6*8*8 are cut
        assert_eq!(brute.len(), 6 * 8 * 8);
        assert!(brute.iter().all(|id| id.cube[0] == 4));
    }

    #[test]
    fn no_intersection_is_an_error() {
        let p = params(4);
        let ls = LevelSet::sphere(10.0).unwrap();
        let values = VertexValues::sample(&p, |x| ls.phi(x));
        assert!(matches!(
            ActiveMesh::enumerate(&p, &values, 1),
            Err(Error::EmptyActiveSet)
        ));
        assert!(!is_cut(&[-1.0, -1.0, -1.0, -1.0]));
        assert!(is_cut(&[-1.0, 1.0, -1.0, -1.0]));
    }

    #[test]
    fn zero_values_are_perturbed() {
        let p = params(4);
        // plane through lattice plane x1 = 0 exactly
        let ls = LevelSet::plane([1.0, 0.0, 0.0], 0.0).unwrap();
        let values = VertexValues::sample(&p, |x| ls.phi(x));
        assert!(values.get([2, 0, 0]) > 0.0);
        let mesh = ActiveMesh::enumerate(&p, &values, 1).unwrap();
        // only the layer on the negative side gets cut
        assert!(mesh.elements().iter().all(|id| id.cube[0] == 1));
    }

    fn torus_mesh(n: usize, k: usize) -> ActiveMesh {
        let p = params(n);
        let ls = LevelSet::torus(1.0, 0.6).unwrap();
        let values = VertexValues::sample(&p, |x| ls.phi(x));
        ActiveMesh::enumerate(&p, &values, k).unwrap()
    }

    #[test]
    fn patches_match_brute_force_incidence() {
        let mesh = torus_mesh(8, 2);
        for dof in 0..mesh.num_dofs() {
            let node = mesh.dof_node(dof);
            let brute: Vec<ElementId> = mesh
                .elements()
                .iter()
                .copied()
                .filter(|id| {
                    let v = id.vertices();
                    mesh.reference_element().multi_indices().iter().any(|a| {
                        let mut q = [0i64; 3];
                        for m in 0..4 {
                            for d in 0..3 {
                                q[d] += a[m] as i64 * v[m][d];
                            }
                        }
                        q == node
                    })
                })
                .collect();
            assert_eq!(mesh.node_patch(node).unwrap(), brute);
        }
        assert!(matches!(mesh.node_patch([-1, 0, 0]), Err(Error::UnknownNode(_))));
    }

    #[test]
    fn patch_sizes_of_interior_and_facet_nodes() {
        let mesh = torus_mesh(8, 4);
        // a degree-4 tet has exactly one interior node, alpha = (1,1,1,1)
        let e = 0;
        let refel = mesh.reference_element();
        let interior = refel
            .multi_indices()
            .iter()
            .position(|a| a.iter().all(|&x| x > 0))
            .unwrap();
        assert_eq!(mesh.patch(mesh.dofs(e)[interior]).len(), 1);
        // a node interior to a shared face belongs to both elements
        let f = &mesh.facets()[0];
        let face_node = {
            let v = f.vertices;
            let mut q = [0i64; 3];
            for (m, w) in [2i64, 1, 1].iter().enumerate() {
                for d in 0..3 {
                    q[d] += w * v[m][d];
                }
            }
            q
        };
        let patch = mesh.node_patch(face_node).unwrap();
        assert_eq!(patch.len(), 2);
        assert_eq!(patch, vec![mesh.element(f.elements[0]), mesh.element(f.elements[1])]);
    }

    #[test]
    fn dof_map_matches_global_lattice() {
        for k in 1..=3 {
            let mesh = torus_mesh(4, k);
            // numbering is lexicographic on the lattice
            for w in 0..mesh.num_dofs() - 1 {
                assert!(mesh.dof_node(w) < mesh.dof_node(w + 1));
            }
            for e in 0..mesh.num_elements() {
                let tet = mesh.tet(e);
                for (a, &d) in mesh.reference_element().multi_indices().iter().zip(mesh.dofs(e)) {
                    let lam = a.map(|x| x as f64 / k as f64);
                    assert!((tet.point(&lam) - mesh.dof_position(d)).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn facets_match_face_hashing() {
        let p = params(4);
        let ls = LevelSet::plane([0.0, 0.0, 1.0], 0.3).unwrap();
        let values = VertexValues::sample(&p, |x| ls.phi(x));
        let mesh = ActiveMesh::enumerate(&p, &values, 1).unwrap();
        let mut map: HashMap<Vec<[i64; 3]>, Vec<usize>> = HashMap::new();
        for (e, id) in mesh.elements().iter().enumerate() {
            let v = id.vertices();
            for omit in 0..4 {
                let mut key: Vec<[i64; 3]> = (0..4).filter(|m| *m != omit).map(|m| v[m]).collect();
                key.sort();
                map.entry(key).or_default().push(e);
            }
        }
        let shared = map.values().filter(|v| v.len() == 2).count();
        assert!(map.values().all(|v| v.len() <= 2));
        assert_eq!(mesh.facets().len(), shared);
        for f in mesh.facets() {
            assert!(f.elements[0] < f.elements[1]);
            let ca = mesh.tet(f.elements[0]).point(&[0.25; 4]);
            let cb = mesh.tet(f.elements[1]).point(&[0.25; 4]);
            assert!(f.normal.dot(&(cb - ca)) > 0.0);
        }
    }

    #[test]
    fn single_and_pair_facets() {
        let p = params(4);
        let refel = ReferenceElement::new(1).unwrap();
        let one = ActiveMesh::from_elements(
            &p,
            vec![ElementId {
                cube: [1, 1, 1],
                tet: 0,
            }],
            refel.clone(),
        )
        .unwrap();
        assert!(one.facets().is_empty());
        let two = ActiveMesh::from_elements(
            &p,
            vec![
                ElementId {
                    cube: [1, 1, 1],
                    tet: 0,
                },
                ElementId {
                    cube: [1, 1, 1],
                    tet: 1,
                },
            ],
            refel,
        )
        .unwrap();
        assert_eq!(two.facets().len(), 1);
    }

    #[test]
    fn active_count_grows_like_surface() {
        let counts: Vec<usize> = [8, 16, 32, 64]
            .iter()
            .map(|&n| torus_mesh(n, 1).num_elements())
            .collect();
        for w in counts.windows(2) {
            let ratio = w[1] as f64 / w[0] as f64;
            assert!((3.3..4.7).contains(&ratio), "{counts:?}");
        }
    }

    #[test]
    fn enumeration_is_deterministic() {
        let a = torus_mesh(16, 2);
        let b = torus_mesh(16, 2);
        assert_eq!(a.elements(), b.elements());
        assert_eq!(a.num_dofs(), b.num_dofs());
        assert_eq!(
            (0..a.num_elements())
                .flat_map(|e| a.dofs(e).to_vec())
                .collect::<Vec<_>>(),
            (0..b.num_elements())
                .flat_map(|e| b.dofs(e).to_vec())
                .collect::<Vec<_>>()
        );
    }
}
