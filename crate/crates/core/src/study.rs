//! Convergence and conditioning studies with CSV and Markdown output.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_system, correct_rhs, Discretization, StabConfig, Stabilization};
use crate::error::{Error, Result, StageExt};
use crate::export::{write_surface_vtk, SurfaceKind};
use crate::levelset::{BenchmarkProblem, LevelSet};
use crate::metrics::{
    compute_errors, eoc, estimate_condition, hyperplane_spectrum, EigenOptions, ErrorSet, DENSE_CAP, KERNEL_THRESHOLD,
};
use crate::solver::{augment_gamma, pcg, solve_constrained, Augmented, PcgOptions};

/// Benchmark geometry and data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Benchmark {
    /// Torus `R = 1`, `r = 0.6` with a trigonometric solution.
    Torus,
    /// Unit sphere with `u = x1 x2 x3`.
    Sphere,
    /// Planes `x3 = eps h` for each `eps` in `shifts`, zero data.
    PlaneShift { shifts: Vec<f64> },
}

impl Benchmark {
    pub fn default_shifts() -> Vec<f64> {
        vec![0.5, 1e-1, 1e-3, 1e-5]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Benchmark::Torus => "torus",
            Benchmark::Sphere => "sphere",
            Benchmark::PlaneShift { .. } => "plane",
        }
    }
}

/// Output locations; nothing is written for unset paths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    /// Directory for CSV, Markdown, VTK and matrix files.
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub benchmark: Benchmark,
    pub k: usize,
    /// Defaults to 4 for `k <= 2`, 3 for `k = 3` and 2 otherwise.
    pub levels: Option<usize>,
    pub base_n: usize,
    pub stabilization: StabConfig,
    pub tol: f64,
    pub output: OutputPaths,
    pub seed: u64,
    pub export_vtk: bool,
    pub export_matrix: bool,
    /// Variants compared by the conditioning study (all by default).
    pub variants: Option<Vec<Stabilization>>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            benchmark: Benchmark::Torus,
            k: 2,
            levels: None,
            base_n: 16,
            stabilization: StabConfig::new(Stabilization::NormalVolume),
            tol: 1e-9,
            output: OutputPaths::default(),
            seed: 0,
            export_vtk: false,
            export_matrix: false,
            variants: None,
        }
    }
}

/// Desktop-sized number of refinement levels for degree `k`.
pub fn default_levels(k: usize) -> usize {
    match k {
        0..=2 => 4,
        3 => 3,
        _ => 2,
    }
}

impl StudyConfig {
    pub fn levels(&self) -> usize {
        self.levels.unwrap_or_else(|| default_levels(self.k))
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=5).contains(&self.k) {
            return Err(Error::Config(format!("k must be in 1..=5, got {}", self.k)));
        }
        if self.levels() == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        if self.base_n < 2 {
            return Err(Error::Config("base_n must be at least 2".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Config(format!("tolerance must be in (0, 1), got {}", self.tol)));
        }
        if let Benchmark::PlaneShift { shifts } = &self.benchmark {
            if shifts.is_empty() || shifts.iter().any(|s| !(s.is_finite() && *s > 0.0 && *s < 1.0)) {
                return Err(Error::Config("plane shifts must lie in (0, 1)".into()));
            }
        }
        if self.levels() > default_levels(self.k) {
            log::warn!(
                "{} levels requested for k = {}; this may exceed desktop memory",
                self.levels(),
                self.k
            );
        }
        self.stabilization.validate()
    }

    fn problem(&self) -> Result<BenchmarkProblem> {
        Ok(match &self.benchmark {
            Benchmark::Torus => BenchmarkProblem::torus(),
            Benchmark::Sphere => BenchmarkProblem::sphere(),
            Benchmark::PlaneShift { shifts } => {
                let h = LevelSet::plane([0.0, 0.0, 1.0], 0.0)?.domain.extent(2) / self.base_n as f64;
                BenchmarkProblem::zero(LevelSet::plane([0.0, 0.0, 1.0], shifts[0] * h)?)
            }
        })
    }

    fn out_file(&self, name: &str) -> Result<Option<PathBuf>> {
        match &self.output.dir {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                Ok(Some(dir.join(name)))
            }
            None => Ok(None),
        }
    }

    fn header(&self) -> String {
        format!(
            "# config: {}\n",
            serde_json::to_string(self).expect("config serializes")
        )
    }
}

/// One refinement level of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub rho: Option<f64>,
    pub n_dofs: usize,
    pub errors: ErrorSet,
    /// Orders for `(e_dist, e_l2, e_h1_t, e_h1_n)`.
    pub eoc: [Option<f64>; 4],
    pub iterations: usize,
    pub relative_residual: f64,
    pub true_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
}

/// Refinement loop: mesh, level set, deformation, assembly, solve, errors.
pub fn run_convergence(cfg: &StudyConfig) -> Result<ConvergenceStudy> {
    cfg.validate()?;
    let problem = cfg.problem()?;
    let k = cfg.k;
    let mut rows: Vec<StudyRow> = Vec::new();
    for level in 0..cfg.levels() {
        let n = cfg.base_n << level;
        let disc = Discretization::build(&problem.levelset, n, k)?;
        if k == 1 {
            log::info!(
                "level {level}: k = 1, deformation is the identity (max displacement {})",
                disc.map.max_displacement()
            );
        }
        let sys = assemble_system(&disc, &problem, &cfg.stabilization).stage("assembly")?;
        let report = solve_constrained(&sys, &PcgOptions::with_tol(cfg.tol)).stage("solve")?;
        let errors = compute_errors(&disc, &problem, &report.u, 2 * k).stage("errors")?;
        log::info!(
            "level {level}: n = {n}, N = {}, its = {}, {errors:?}",
            disc.num_dofs(),
            report.iterations
        );
        if cfg.export_vtk {
            if let Some(p) = cfg.out_file(&format!("gamma_lin_{level}.vtk"))? {
                write_surface_vtk(&disc, SurfaceKind::Linear, None, &p).stage("export")?;
            }
            if let Some(p) = cfg.out_file(&format!("gamma_h_{level}.vtk"))? {
                write_surface_vtk(&disc, SurfaceKind::Deformed, Some(("u_h", &report.u)), &p).stage("export")?;
            }
        }
        if cfg.export_matrix {
            if let Some(p) = cfg.out_file(&format!("matrix_{level}.mtx"))? {
                sys.matrix
                    .write_matrix_market(std::io::BufWriter::new(fs::File::create(p)?))?;
            }
        }
        let prev = rows.last().map(|r| r.errors);
        let ratio = |a: f64, b: f64| eoc(&[a, b])[1];
        rows.push(StudyRow {
            level,
            n,
            h: disc.h(),
            rho: sys.rho,
            n_dofs: disc.num_dofs(),
            errors,
            eoc: match prev {
                Some(p) => [
                    ratio(p.e_dist, errors.e_dist),
                    ratio(p.e_l2, errors.e_l2),
                    ratio(p.e_h1_t, errors.e_h1_t),
                    ratio(p.e_h1_n, errors.e_h1_n),
                ],
                None => [None; 4],
            },
            iterations: report.iterations,
            relative_residual: report.relative_residual,
            true_residual: report.true_residual,
        });
    }
    let study = ConvergenceStudy {
        config: cfg.clone(),
        rows,
    };
    if let Some(p) = cfg.out_file("convergence.csv")? {
        fs::write(p, study.to_csv())?;
    }
    if let Some(p) = cfg.out_file("convergence.md")? {
        fs::write(p, study.to_markdown())?;
    }
    Ok(study)
}

fn sci(v: f64) -> String {
    format!("{v:.5e}")
}

fn order(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.1}"))
}

impl ConvergenceStudy {
    pub fn to_csv(&self) -> String {
        let cfg = &self.config;
        let mut s = cfg.header();
        let _ = writeln!(
            s,
            "# benchmark={} k={} base_n={} levels={} stabilization={} rho={} tol={}",
            cfg.benchmark.name(),
            cfg.k,
            cfg.base_n,
            cfg.levels(),
            cfg.stabilization.variant,
            cfg.stabilization.rho_formula(),
            cfg.tol
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "# level={} n={} h={} rho={}",
                r.level,
                r.n,
                r.h,
                r.rho.map_or("-".into(), sci)
            );
        }
        s.push_str("level,n,h,rho,N,e_dist,eoc_dist,e_l2,eoc_l2,e_h1_t,eoc_h1_t,e_h1_n,eoc_h1_n,n_its\n");
        for r in &self.rows {
            let e = &r.errors;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.level,
                r.n,
                sci(r.h),
                r.rho.map_or("".into(), sci),
                r.n_dofs,
                sci(e.e_dist),
                order(r.eoc[0]),
                sci(e.e_l2),
                order(r.eoc[1]),
                sci(e.e_h1_t),
                order(r.eoc[2]),
                sci(e.e_h1_n),
                order(r.eoc[3]),
                r.iterations
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| level | N | e_dist | eoc | e_L2 | eoc | e_H1^t | eoc | e_H1^n | eoc | N_its |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let e = &r.errors;
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                r.level,
                r.n_dofs,
                sci(e.e_dist),
                order(r.eoc[0]),
                sci(e.e_l2),
                order(r.eoc[1]),
                sci(e.e_h1_t),
                order(r.eoc[2]),
                sci(e.e_h1_n),
                order(r.eoc[3]),
                r.iterations
            );
        }
        s
    }
}

/// One `(shift, variant)` entry of the conditioning sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditioningRow {
    pub shift: f64,
    pub variant: Stabilization,
    pub rho: Option<f64>,
    pub n_dofs: usize,
    /// Power/inverse iteration estimate on the constraint hyperplane.
    pub lambda_max: Option<f64>,
    pub lambda_min: Option<f64>,
    pub cond: Option<f64>,
    /// Dense spectrum on the constraint hyperplane.
    pub kernel_dim: Option<usize>,
    pub dense_lambda_min: Option<f64>,
    pub effective_cond: Option<f64>,
    /// CG iterations for a random compatible right-hand side.
    pub iterations: Option<usize>,
    /// False when the variant is not available for this `k`.
    pub supported: bool,
    /// Failure messages of the entries left empty.
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningStudy {
    pub config: StudyConfig,
    pub rows: Vec<ConditioningRow>,
}

/// Plane-shift sweep over stabilization variants at fixed `h`.
pub fn run_conditioning(cfg: &StudyConfig) -> Result<ConditioningStudy> {
    cfg.validate()?;
    let Benchmark::PlaneShift { shifts } = &cfg.benchmark else {
        return Err(Error::Config("the conditioning study needs the plane benchmark".into()));
    };
    if cfg.base_n > 16 {
        return Err(Error::Config(format!(
            "conditioning study is limited to n <= 16, got {}",
            cfg.base_n
        )));
    }
    let variants = cfg.variants.clone().unwrap_or_else(|| Stabilization::ALL.to_vec());
    let mut rows = Vec::new();
    for &eps in shifts {
        let base = LevelSet::plane([0.0, 0.0, 1.0], 0.0)?;
        let h = base.domain.extent(2) / cfg.base_n as f64;
        let ls = LevelSet::plane([0.0, 0.0, 1.0], eps * h)?;
        let disc = Discretization::build(&ls, cfg.base_n, cfg.k)?;
        let problem = BenchmarkProblem::zero(ls);
        for &variant in &variants {
            let stab = StabConfig {
                variant,
                rho_scaling: cfg.stabilization.rho_scaling,
            };
            let mut row = ConditioningRow {
                shift: eps,
                variant,
                rho: stab.rho(h, cfg.k),
                n_dofs: disc.num_dofs(),
                lambda_max: None,
                lambda_min: None,
                cond: None,
                kernel_dim: None,
                dense_lambda_min: None,
                effective_cond: None,
                iterations: None,
                supported: true,
                note: String::new(),
            };
            let sys = match assemble_system(&disc, &problem, &stab) {
                Ok(s) => s,
                Err(e) => {
                    row.supported = !matches!(e.root(), Error::Unsupported(_));
                    row.note = e.to_string();
                    rows.push(row);
                    continue;
                }
            };
            let mut notes = Vec::new();
            match estimate_condition(
                &sys.matrix,
                Some(&sys.constraint),
                &EigenOptions {
                    seed: cfg.seed,
                    max_iter: 1000,
                    ..Default::default()
                },
            ) {
                Ok(est) => {
                    row.lambda_max = Some(est.lambda_max);
                    row.lambda_min = Some(est.lambda_min);
                    row.cond = Some(est.cond);
                }
                Err(e) => notes.push(format!("estimate: {e}")),
            }
            if sys.n() <= DENSE_CAP {
                match hyperplane_spectrum(&sys.matrix, &sys.constraint, KERNEL_THRESHOLD) {
                    Ok(spectrum) => {
                        row.kernel_dim = Some(spectrum.kernel_dim);
                        row.dense_lambda_min = Some(spectrum.lambda_min);
                        row.effective_cond = Some(spectrum.effective_cond);
                        if row.lambda_max.is_none() {
                            row.lambda_max = Some(spectrum.lambda_max);
                        }
                    }
                    Err(e) => notes.push(format!("dense: {e}")),
                }
            }
            match random_solve(&sys, cfg) {
                Ok(its) => row.iterations = Some(its),
                Err(e) => notes.push(format!("solve: {e}")),
            }
            row.note = notes.join("; ");
            log::info!("shift {eps:e} {variant}: {row:?}");
            rows.push(row);
        }
    }
    let study = ConditioningStudy {
        config: cfg.clone(),
        rows,
    };
    if let Some(p) = cfg.out_file("conditioning.csv")? {
        fs::write(p, study.to_csv())?;
    }
    if let Some(p) = cfg.out_file("conditioning.md")? {
        fs::write(p, study.to_markdown())?;
    }
    Ok(study)
}

fn random_solve(sys: &crate::assembly::AssembledSystem, cfg: &StudyConfig) -> Result<usize> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let f: Vec<f64> = (0..sys.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (f, _) = correct_rhs(f, &sys.constraint)?;
    let gamma = augment_gamma(&sys.matrix, &sys.constraint)?;
    let op = Augmented {
        matrix: &sys.matrix,
        c: &sys.constraint,
        gamma,
    };
    Ok(pcg(&op, &f, &op.diagonal(), &PcgOptions::with_tol(cfg.tol))?.iterations)
}

fn opt_sci(v: Option<f64>) -> String {
    v.map_or_else(String::new, sci)
}

impl ConditioningStudy {
    pub fn to_csv(&self) -> String {
        let mut s = self.config.header();
        s.push_str(
            "shift,variant,rho,N,lambda_max,lambda_min,cond,kernel_dim,dense_lambda_min,effective_cond,n_its,note\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
                sci(r.shift),
                r.variant,
                opt_sci(r.rho),
                r.n_dofs,
                opt_sci(r.lambda_max),
                opt_sci(r.lambda_min),
                opt_sci(r.cond),
                r.kernel_dim.map_or(String::new(), |d| d.to_string()),
                opt_sci(r.dense_lambda_min),
                opt_sci(r.effective_cond),
                r.iterations.map_or(String::new(), |d| d.to_string()),
                r.note.replace('"', "'")
            );
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s =
            String::from("| shift | variant | N | lambda_max | lambda_min | cond | kernel | eff. cond | N_its |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let missing = if r.supported { "div." } else { "n/a" };
            let cell = |v: Option<f64>| v.map_or_else(|| missing.into(), sci);
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                sci(r.shift),
                r.variant,
                r.n_dofs,
                cell(r.lambda_max),
                cell(r.lambda_min),
                cell(r.cond),
                r.kernel_dim.map_or("-".into(), |d| d.to_string()),
                cell(r.effective_cond),
                r.iterations.map_or(missing.into(), |d| d.to_string())
            );
        }
        s
    }

    pub fn row(&self, shift: f64, variant: Stabilization) -> Option<&ConditioningRow> {
        self.rows.iter().find(|r| r.shift == shift && r.variant == variant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip_and_defaults() {
        let cfg: StudyConfig =
            serde_json::from_str(r#"{"k": 3, "benchmark": {"plane_shift": {"shifts": [0.5]}}}"#).unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.base_n, 16);
        assert_eq!(cfg.levels(), 3);
        assert_eq!(cfg.tol, 1e-9);
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<StudyConfig>(&text).unwrap(), cfg);
        assert_eq!(default_levels(1), 4);
        assert_eq!(default_levels(5), 2);
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut StudyConfig)| {
            let mut c = StudyConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.k = 0));
        assert!(bad(|c| c.k = 6));
        assert!(bad(|c| c.levels = Some(0)));
        assert!(bad(|c| c.base_n = 1));
        assert!(bad(|c| c.tol = 0.0));
        assert!(bad(|c| c.benchmark = Benchmark::PlaneShift { shifts: vec![] }));
        assert!(StudyConfig::default().validate().is_ok());
    }

    #[test]
    fn zero_solution_benchmark() {
        let cfg = StudyConfig {
            benchmark: Benchmark::PlaneShift { shifts: vec![0.3] },
            k: 2,
            levels: Some(2),
            base_n: 4,
            ..Default::default()
        };
        let study = run_convergence(&cfg).unwrap();
        for r in &study.rows {
            let e = r.errors;
            assert!(e.e_dist <= 1e-10 && e.e_l2 <= 1e-10 && e.e_h1_t <= 1e-10 && e.e_h1_n <= 1e-10);
            assert!(r.iterations <= 2);
        }
        assert_eq!(study.rows[0].eoc, [None; 4]);
    }

    #[test]
    fn tables_and_reproducibility() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StudyConfig {
            benchmark: Benchmark::Sphere,
            k: 1,
            levels: Some(2),
            base_n: 8,
            output: OutputPaths {
                dir: Some(dir.path().to_path_buf()),
            },
            ..Default::default()
        };
        let a = run_convergence(&cfg).unwrap();
        let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
        assert_eq!(csv, a.to_csv());
        let b = run_convergence(&cfg).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(csv.starts_with("# config: {"));
        assert!(csv.contains("# level=1 n=16 h=0.25 rho="));
        let data: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data.len(), 3);
        assert_eq!(data[1].split(',').nth(6), Some("-"));
        let md = a.to_markdown();
        assert_eq!(md.lines().count(), 4);
        assert!(md.lines().next().unwrap().contains("e_dist | eoc | e_L2"));
    }

    #[test]
    fn conditioning_marks_unsupported_variants() {
        let cfg = StudyConfig {
            benchmark: Benchmark::PlaneShift { shifts: vec![0.5] },
            k: 2,
            base_n: 4,
            variants: Some(vec![Stabilization::GhostPenalty, Stabilization::NormalVolume]),
            ..Default::default()
        };
        let study = run_conditioning(&cfg).unwrap();
        let ghost = study.row(0.5, Stabilization::GhostPenalty).unwrap();
        assert!(!ghost.supported && ghost.cond.is_none());
        let nv = study.row(0.5, Stabilization::NormalVolume).unwrap();
        assert!(nv.supported && nv.effective_cond.unwrap() > 1.0 && nv.iterations.is_some());
        let md = study.to_markdown();
        assert!(md.contains("| ghost | ") && md.contains("n/a"));
        let cond = nv.effective_cond.unwrap();
        let est = nv.cond.unwrap();
        assert!((est - cond).abs() / cond < 0.05);
    }

    #[test]
    fn conditioning_requires_plane() {
        assert!(run_conditioning(&StudyConfig::default()).is_err());
    }
}
