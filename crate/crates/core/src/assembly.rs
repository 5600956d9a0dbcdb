//! Surface stiffness form, stabilizations, constraint and load vectors.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cut::{LiftedPoint, SurfaceQuadrature, VolumeQuadrature};
use crate::element::{BasisScratch, DiscreteLevelSet, ReferenceElement};
use crate::error::{Error, Result, StageExt};
use crate::levelset::{BenchmarkProblem, LevelSet, Vec3};
use crate::mapping::IsoMapping;
use crate::mesh::{ActiveMesh, MeshParams, VertexValues};
use crate::sparse::{CsrMatrix, PatternBuilder};

const CHUNK: usize = 2048;

/// Stabilization form added to the surface stiffness form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stabilization {
    None,
    /// Facet jumps of normal derivatives (`k = 1` only).
    #[serde(alias = "ghost")]
    GhostPenalty,
    /// Normal derivative on the discrete surface.
    #[serde(alias = "fgs")]
    FullGradientSurface,
    /// Full gradient on the deformed active elements.
    #[serde(alias = "fgv")]
    FullGradientVolume,
    /// Normal derivative on the deformed active elements.
    #[serde(alias = "nv")]
    NormalVolume,
}

impl Stabilization {
    pub const ALL: [Stabilization; 5] = [
        Stabilization::None,
        Stabilization::GhostPenalty,
        Stabilization::FullGradientSurface,
        Stabilization::FullGradientVolume,
        Stabilization::NormalVolume,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Stabilization::None => "none",
            Stabilization::GhostPenalty => "ghost",
            Stabilization::FullGradientSurface => "fgs",
            Stabilization::FullGradientVolume => "fgv",
            Stabilization::NormalVolume => "nv",
        }
    }
}

impl fmt::Display for Stabilization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Stabilization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stabilization::ALL
            .into_iter()
            .find(|v| v.short_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stabilization '{s}' (expected none|ghost|fgs|fgv|nv)")))
    }
}

/// Scaling of the stabilization weight `rho_s` with `h` and `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoScaling {
    /// `1 / h`
    HInv,
    /// `k^4 h`
    HTimesK4,
    /// `prefactor * h^exponent`
    Custom { exponent: f64, prefactor: f64 },
}

impl RhoScaling {
    pub fn value(&self, h: f64, k: usize) -> f64 {
        match *self {
            RhoScaling::HInv => 1.0 / h,
            RhoScaling::HTimesK4 => (k as f64).powi(4) * h,
            RhoScaling::Custom { exponent, prefactor } => prefactor * h.powf(exponent),
        }
    }

    /// Exponent of `h`.
    pub fn exponent(&self) -> f64 {
        match *self {
            RhoScaling::HInv => -1.0,
            RhoScaling::HTimesK4 => 1.0,
            RhoScaling::Custom { exponent, .. } => exponent,
        }
    }

    pub fn formula(&self) -> String {
        match *self {
            RhoScaling::HInv => "1/h".into(),
            RhoScaling::HTimesK4 => "k^4*h".into(),
            RhoScaling::Custom { exponent, prefactor } => format!("{prefactor}*h^{exponent}"),
        }
    }
}

impl FromStr for RhoScaling {
    type Err = Error;

    /// `hinv`, `hk4`, or `custom:EXPR` where `EXPR` is a product of numbers
    /// and powers of `h`, e.g. `custom:2*h^-1`, `custom:h`, `custom:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinv" => Ok(RhoScaling::HInv),
            "hk4" => Ok(RhoScaling::HTimesK4),
            _ => {
                let expr = s.strip_prefix("custom:").ok_or_else(|| {
                    Error::Config(format!("unknown rho scaling '{s}' (expected hinv|hk4|custom:EXPR)"))
                })?;
                parse_power_expr(expr).map(|(prefactor, exponent)| RhoScaling::Custom { exponent, prefactor })
            }
        }
    }
}

fn parse_power_expr(expr: &str) -> Result<(f64, f64)> {
    let bad = || Error::Config(format!("cannot parse rho expression '{expr}'"));
    let mut prefactor = 1.0;
    let mut exponent = 0.0;
    for factor in expr.split('*').map(str::trim) {
        if factor == "h" {
            exponent += 1.0;
        } else if let Some(p) = factor.strip_prefix("h^") {
            exponent += p
                .trim_matches(|c| c == '(' || c == ')')
                .parse::<f64>()
                .map_err(|_| bad())?;
        } else {
            prefactor *= factor.parse::<f64>().map_err(|_| bad())?;
        }
    }
    if !prefactor.is_finite() || prefactor <= 0.0 || !exponent.is_finite() {
        return Err(bad());
    }
    Ok((prefactor, exponent))
}

/// Stabilization choice. Without an explicit scaling the weights are
/// `rho_s = 1` (ghost penalty), `h` (full gradient volume) and `1/h`
/// (normal volume); the full gradient surface form has no weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabConfig {
    pub variant: Stabilization,
    #[serde(default)]
    pub rho_scaling: Option<RhoScaling>,
}

impl StabConfig {
    pub fn new(variant: Stabilization) -> Self {
        StabConfig {
            variant,
            rho_scaling: None,
        }
    }

    pub fn with_rho(variant: Stabilization, rho: RhoScaling) -> Self {
        StabConfig {
            variant,
            rho_scaling: Some(rho),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.rho_scaling {
            if let RhoScaling::Custom { prefactor, exponent } = r {
                if !(prefactor > 0.0) || !exponent.is_finite() {
                    return Err(Error::Config("rho prefactor must be positive".into()));
                }
            }
            if self.variant == Stabilization::NormalVolume && !(-1.0..=1.0).contains(&r.exponent()) {
                return Err(Error::Config(format!(
                    "normal-volume weight must satisfy h <= rho <= 1/h, got rho = {}",
                    r.formula()
                )));
            }
        }
        Ok(())
    }

    /// `rho_s` for mesh size `h` and degree `k`; `None` when the form has no
    /// weight.
    pub fn rho(&self, h: f64, k: usize) -> Option<f64> {
        match self.variant {
            Stabilization::None | Stabilization::FullGradientSurface => None,
            v => Some(match self.rho_scaling {
                Some(r) => r.value(h, k),
                None => match v {
                    Stabilization::GhostPenalty => 1.0,
                    Stabilization::FullGradientVolume => h,
                    _ => 1.0 / h,
                },
            }),
        }
    }

    /// Human-readable weight formula.
    pub fn rho_formula(&self) -> String {
        match self.variant {
            Stabilization::None | Stabilization::FullGradientSurface => "-".into(),
            v => match self.rho_scaling {
                Some(r) => r.formula(),
                None => match v {
                    Stabilization::GhostPenalty => "1".into(),
                    Stabilization::FullGradientVolume => "h".into(),
                    _ => "1/h".into(),
                },
            },
        }
    }
}

/// Active mesh, interpolated level set and deformation for one resolution.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub levelset: LevelSet,
    pub mesh: ActiveMesh,
    pub dls: DiscreteLevelSet,
    pub map: IsoMapping,
}

impl Discretization {
    /// Cube mesh with `n` cells per axis on the level set's domain.
    pub fn build(levelset: &LevelSet, n: usize, k: usize) -> Result<Self> {
        let params = MeshParams::new(levelset.domain, n).stage("mesh")?;
        let values = VertexValues::sample(&params, |x| levelset.phi(x));
        let mesh = ActiveMesh::enumerate(&params, &values, k).stage("mesh")?;
        let dls = DiscreteLevelSet::interpolate(levelset, &mesh).stage("level-set interpolation")?;
        let map = IsoMapping::build(&mesh, &dls).stage("mapping")?;
        Ok(Discretization {
            levelset: *levelset,
            mesh,
            dls,
            map,
        })
    }

    /// Same geometry with `Theta_h = id`.
    pub fn without_deformation(&self) -> Self {
        Discretization {
            map: IsoMapping::identity(&self.mesh),
            ..self.clone()
        }
    }

    pub fn h(&self) -> f64 {
        self.mesh.h()
    }

    pub fn degree(&self) -> usize {
        self.mesh.degree()
    }

    pub fn num_dofs(&self) -> usize {
        self.mesh.num_dofs()
    }

    /// Surface rule of the given exactness on `Gamma_h`.
    pub fn surface_quadrature(&self, degree: usize) -> Result<SurfaceQuadrature> {
        SurfaceQuadrature::build(&self.mesh, &self.dls, &self.map, degree).stage("surface quadrature")
    }

    pub fn volume_quadrature(&self, degree: usize) -> Result<VolumeQuadrature> {
        VolumeQuadrature::build(&self.mesh, &self.dls, &self.map, degree).stage("volume quadrature")
    }

    /// Exactness of the surface rule used for the stiffness form.
    pub fn assembly_degree(&self) -> usize {
        2 * self.degree() - 2
    }
}

/// Gradients of the basis functions (pushed forward to the deformed
/// element) at a lifted point.
fn mapped_gradients(
    refel: &ReferenceElement,
    tet: &crate::mesh::Tet,
    p: &LiftedPoint,
    s: &mut BasisScratch,
    out: &mut [Vec3],
) {
    refel.eval_physical(tet, &p.lambda, &mut s.values, &mut s.grads);
    for (o, g) in out.iter_mut().zip(&s.grads) {
        *o = p.jinv_t * g;
    }
}

fn element_pattern(mesh: &ActiveMesh) -> CsrMatrix {
    let mut p = PatternBuilder::new(mesh.num_dofs());
    for e in 0..mesh.num_elements() {
        p.add_clique(mesh.dofs(e));
    }
    p.build()
}

/// Assembles element blocks `local(e, points, block)` in a fixed order.
fn assemble_elements<F>(mesh: &ActiveMesh, local: F) -> CsrMatrix
where
    F: Fn(usize, &mut BasisScratch, &mut [Vec3], &mut [f64]) + Sync,
{
    let refel = mesh.reference_element();
    let nloc = refel.num_nodes();
    let mut m = element_pattern(mesh);
    let elements: Vec<usize> = (0..mesh.num_elements()).collect();
    for chunk in elements.chunks(CHUNK) {
        let blocks: Vec<Vec<f64>> = chunk
            .par_iter()
            .map_init(
                || (BasisScratch::new(refel), vec![Vec3::zeros(); nloc]),
                |(s, g), &e| {
                    let mut block = vec![0.0; nloc * nloc];
                    local(e, s, g, &mut block);
                    block
                },
            )
            .collect();
        for (&e, b) in chunk.iter().zip(&blocks) {
            m.add_block(mesh.dofs(e), b);
        }
    }
    m
}

fn accumulate_outer(block: &mut [f64], v: &[f64], w: f64) {
    let n = v.len();
    for a in 0..n {
        let wa = w * v[a];
        if wa == 0.0 {
            continue;
        }
        for b in 0..n {
            block[a * n + b] += wa * v[b];
        }
    }
}

/// `a_h(u, v) = int_{Gamma_h} grad_{Gamma_h} u . grad_{Gamma_h} v`.
pub fn assemble_a(mesh: &ActiveMesh, quad: &SurfaceQuadrature) -> CsrMatrix {
    let refel = mesh.reference_element();
    let nloc = refel.num_nodes();
    assemble_elements(mesh, |e, s, g, block| {
        let tet = mesh.tet(e);
        for p in &quad.points[e] {
            mapped_gradients(refel, &tet, p, s, g);
            let n = p.n_h;
            for gi in g.iter_mut() {
                *gi -= n * n.dot(gi);
            }
            for a in 0..nloc {
                let wa = p.weight;
                for b in a..nloc {
                    let v = wa * g[a].dot(&g[b]);
                    block[a * nloc + b] += v;
                    if b != a {
                        block[b * nloc + a] += v;
                    }
                }
            }
        }
    })
}

/// `sum_q w_q (n_h . grad u)(n_h . grad v)` over the given points.
fn assemble_normal_form(mesh: &ActiveMesh, points: &[Vec<LiftedPoint>], scale: f64) -> CsrMatrix {
    let refel = mesh.reference_element();
    let nloc = refel.num_nodes();
    assemble_elements(mesh, |e, s, g, block| {
        let tet = mesh.tet(e);
        let mut dn = vec![0.0; nloc];
        for p in &points[e] {
            mapped_gradients(refel, &tet, p, s, g);
            for (d, gi) in dn.iter_mut().zip(g.iter()) {
                *d = p.n_h.dot(gi);
            }
            accumulate_outer(block, &dn, scale * p.weight);
        }
    })
}

fn assemble_full_gradient_volume(mesh: &ActiveMesh, points: &[Vec<LiftedPoint>], scale: f64) -> CsrMatrix {
    let refel = mesh.reference_element();
    let nloc = refel.num_nodes();
    assemble_elements(mesh, |e, s, g, block| {
        let tet = mesh.tet(e);
        for p in &points[e] {
            mapped_gradients(refel, &tet, p, s, g);
            let w = scale * p.weight;
            for a in 0..nloc {
                for b in 0..nloc {
                    block[a * nloc + b] += w * g[a].dot(&g[b]);
                }
            }
        }
    })
}

/// `rho sum_F int_F [grad u . n_F][grad v . n_F]` for piecewise linears.
fn assemble_ghost_penalty(mesh: &ActiveMesh, rho: f64) -> CsrMatrix {
    let facet_dofs = |f: &crate::mesh::Facet| -> Vec<usize> {
        let mut d: Vec<usize> = mesh
            .dofs(f.elements[0])
            .iter()
            .chain(mesh.dofs(f.elements[1]))
            .copied()
            .collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    let mut pattern = PatternBuilder::new(mesh.num_dofs());
    for e in 0..mesh.num_elements() {
        pattern.add_clique(mesh.dofs(e));
    }
    let facets = mesh.facets();
    let dof_sets: Vec<Vec<usize>> = facets.par_iter().map(facet_dofs).collect();
    for d in &dof_sets {
        pattern.add_clique(d);
    }
    let mut m = pattern.build();
    let blocks: Vec<Vec<f64>> = facets
        .par_iter()
        .zip(&dof_sets)
        .map(|(f, dofs)| {
            let mut jump = vec![0.0; dofs.len()];
            for (side, sign) in [(0usize, 1.0), (1, -1.0)] {
                let e = f.elements[side];
                let tet = mesh.tet(e);
                for (m, &d) in mesh.dofs(e).iter().enumerate() {
                    let pos = dofs.binary_search(&d).expect("dof collected above");
                    jump[pos] += sign * tet.grad_lambda[m].dot(&f.normal);
                }
            }
            let mut block = vec![0.0; dofs.len() * dofs.len()];
            accumulate_outer(&mut block, &jump, rho * f.area);
            block
        })
        .collect();
    for (d, b) in dof_sets.iter().zip(&blocks) {
        m.add_block(d, b);
    }
    m
}

/// Stabilization matrix and the weight used.
pub fn assemble_s(
    disc: &Discretization,
    cfg: &StabConfig,
    surface: &SurfaceQuadrature,
) -> Result<(CsrMatrix, Option<f64>)> {
    cfg.validate()?;
    let mesh = &disc.mesh;
    let k = disc.degree();
    let rho = cfg.rho(disc.h(), k);
    let m = match cfg.variant {
        Stabilization::None => CsrMatrix::zeros(mesh.num_dofs()),
        Stabilization::GhostPenalty => {
            if k != 1 {
                return Err(Error::Unsupported(format!("ghost penalty requires k = 1, got k = {k}")));
            }
            assemble_ghost_penalty(mesh, rho.unwrap_or(1.0))
        }
        Stabilization::FullGradientSurface => assemble_normal_form(mesh, &surface.points, 1.0),
        Stabilization::FullGradientVolume => {
            let vq = disc.volume_quadrature(2 * k)?;
            assemble_full_gradient_volume(mesh, &vq.points, rho.unwrap_or(1.0))
        }
        Stabilization::NormalVolume => {
            let vq = disc.volume_quadrature(2 * k)?;
            assemble_normal_form(mesh, &vq.points, rho.unwrap_or(1.0))
        }
    };
    Ok((m, rho))
}

/// `sum_q w_q g(q) phi_i(q)` over elements, scattered deterministically.
fn assemble_vector<G>(mesh: &ActiveMesh, points: &[Vec<LiftedPoint>], g: G) -> Result<Vec<f64>>
where
    G: Fn(&LiftedPoint) -> Result<f64> + Sync,
{
    let refel = mesh.reference_element();
    let nloc = refel.num_nodes();
    let mut out = vec![0.0; mesh.num_dofs()];
    let elements: Vec<usize> = (0..mesh.num_elements()).collect();
    for chunk in elements.chunks(CHUNK) {
        let locals: Vec<Result<Vec<f64>>> = chunk
            .par_iter()
            .map(|&e| {
                let mut local = vec![0.0; nloc];
                let mut vals = vec![0.0; nloc];
                let mut dl = vec![[0.0; 4]; nloc];
                for p in &points[e] {
                    let w = p.weight * g(p)?;
                    refel.eval(&p.lambda, &mut vals, &mut dl);
                    for (l, v) in local.iter_mut().zip(&vals) {
                        *l += w * v;
                    }
                }
                Ok(local)
            })
            .collect();
        for (&e, local) in chunk.iter().zip(locals) {
            for (&d, v) in mesh.dofs(e).iter().zip(local?) {
                out[d] += v;
            }
        }
    }
    Ok(out)
}

/// `c_i = int_{Gamma_h} phi_i`.
pub fn assemble_constraint(mesh: &ActiveMesh, quad: &SurfaceQuadrature) -> Vec<f64> {
    assemble_vector(mesh, &quad.points, |_| Ok(1.0)).expect("infallible integrand")
}

/// Load vector of `f` (evaluated at the deformed points), then the rank-one
/// correction `f - (<f, e> / <c, e>) c`. Returns the corrected vector and the
/// correction coefficient.
pub fn assemble_rhs(
    mesh: &ActiveMesh,
    quad: &SurfaceQuadrature,
    f: impl Fn(&Vec3) -> Result<f64> + Sync,
    c: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let raw = assemble_vector(mesh, &quad.points, |p| f(&p.y))?;
    correct_rhs(raw, c)
}

/// `f - (<f, e> / <c, e>) c`.
pub fn correct_rhs(mut f: Vec<f64>, c: &[f64]) -> Result<(Vec<f64>, f64)> {
    let ce: f64 = c.iter().sum();
    if !(ce.abs() > 0.0) {
        return Err(Error::ZeroMeasure);
    }
    let alpha = f.iter().sum::<f64>() / ce;
    for (fi, ci) in f.iter_mut().zip(c) {
        *fi -= alpha * ci;
    }
    Ok((f, alpha))
}

/// Everything the solver needs for one resolution.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    /// `S = A + stabilization`.
    pub matrix: CsrMatrix,
    /// Surface stiffness part `A`.
    pub stiffness: CsrMatrix,
    pub constraint: Vec<f64>,
    pub rhs: Vec<f64>,
    pub ones: Vec<f64>,
    pub surface_area: f64,
    pub rho: Option<f64>,
    pub rhs_correction: f64,
}

impl AssembledSystem {
    pub fn n(&self) -> usize {
        self.matrix.n()
    }
}

/// Assembles `S`, `c` and the corrected load vector for `problem`.
pub fn assemble_system(disc: &Discretization, problem: &BenchmarkProblem, cfg: &StabConfig) -> Result<AssembledSystem> {
    let k = disc.degree();
    let surface = disc.surface_quadrature(disc.assembly_degree())?;
    let stiffness = assemble_a(&disc.mesh, &surface);
    let (stab, rho) = assemble_s(disc, cfg, &surface).stage("stabilization")?;
    let constraint = assemble_constraint(&disc.mesh, &surface);
    let surface_area: f64 = constraint.iter().sum();
    if !(surface_area > 0.0) {
        return Err(Error::ZeroMeasure.in_stage("constraint"));
    }
    let load_quad = disc.surface_quadrature(2 * k)?;
    let (rhs, rhs_correction) =
        assemble_rhs(&disc.mesh, &load_quad, |y| problem.rhs(y), &constraint).stage("load vector")?;
    Ok(AssembledSystem {
        matrix: stiffness.add(&stab),
        stiffness,
        constraint,
        rhs,
        ones: vec![1.0; disc.num_dofs()],
        surface_area,
        rho,
        rhs_correction,
    })
}
