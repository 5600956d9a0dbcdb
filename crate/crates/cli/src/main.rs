use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};
use tracefem::assembly::{RhoScaling, Stabilization};
use tracefem::study::{run_conditioning, run_convergence, Benchmark, StudyConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BenchmarkArg {
    Torus,
    Sphere,
    Plane,
}

/// Convergence and conditioning studies for trace finite elements on
/// level-set surfaces.
#[derive(Debug, Parser)]
#[command(name = "tracefem", version)]
struct Cli {
    /// JSON study configuration; command-line options take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    benchmark: Option<BenchmarkArg>,
    /// Polynomial degree (1..=5).
    #[arg(long)]
    k: Option<usize>,
    /// Number of refinement levels.
    #[arg(long)]
    levels: Option<usize>,
    /// Cells per axis on the coarsest level.
    #[arg(long)]
    base_n: Option<usize>,
    /// none | ghost | fgs | fgv | nv
    #[arg(long)]
    stab: Option<Stabilization>,
    /// hinv | hk4 | custom:EXPR (e.g. custom:2*h^-1)
    #[arg(long)]
    rho: Option<RhoScaling>,
    /// Relative CG tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory for tables and exports.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write linear and deformed surfaces as VTK.
    #[arg(long)]
    export_vtk: bool,
    /// Write the system matrices in Matrix Market format.
    #[arg(long)]
    export_matrix: bool,
    /// Run the plane-shift conditioning sweep instead of a convergence study.
    #[arg(long)]
    conditioning: bool,
    /// Comma-separated plane shifts as fractions of h.
    #[arg(long, value_delimiter = ',')]
    shifts: Option<Vec<f64>>,
    /// Seed for the random right-hand side of the conditioning sweep.
    #[arg(long)]
    seed: Option<u64>,
}

fn build_config(cli: &Cli) -> anyhow::Result<StudyConfig> {
    let mut cfg: StudyConfig = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => StudyConfig::default(),
    };
    let shifts = || cli.shifts.clone().unwrap_or_else(Benchmark::default_shifts);
    match cli.benchmark {
        Some(BenchmarkArg::Torus) => cfg.benchmark = Benchmark::Torus,
        Some(BenchmarkArg::Sphere) => cfg.benchmark = Benchmark::Sphere,
        Some(BenchmarkArg::Plane) => cfg.benchmark = Benchmark::PlaneShift { shifts: shifts() },
        None if cli.conditioning && !matches!(cfg.benchmark, Benchmark::PlaneShift { .. }) => {
            cfg.benchmark = Benchmark::PlaneShift { shifts: shifts() };
        }
        None => {}
    }
    if let (Some(s), Benchmark::PlaneShift { shifts }) = (&cli.shifts, &mut cfg.benchmark) {
        *shifts = s.clone();
    } else if cli.shifts.is_some() {
        bail!("--shifts only applies to the plane benchmark");
    }
    if cli.conditioning && cli.base_n.is_none() && cli.config.is_none() {
        cfg.base_n = 8;
    }
    if let Some(k) = cli.k {
        cfg.k = k;
    }
    if let Some(l) = cli.levels {
        cfg.levels = Some(l);
    }
    if let Some(n) = cli.base_n {
        cfg.base_n = n;
    }
    if let Some(v) = cli.stab {
        cfg.stabilization.variant = v;
    }
    if let Some(r) = cli.rho {
        cfg.stabilization.rho_scaling = Some(r);
    }
    if let Some(t) = cli.tol {
        cfg.tol = t;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = Some(o.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.export_vtk |= cli.export_vtk;
    cfg.export_matrix |= cli.export_matrix;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let cfg = build_config(cli)?;
    if cli.conditioning {
        let study = run_conditioning(&cfg)?;
        print!("{}", study.to_markdown());
    } else {
        let study = run_convergence(&cfg)?;
        print!("{}", study.to_markdown());
    }
    Ok(())
}

/// Joins the error chain, skipping causes already contained in their parent's
/// message (stage-tagged errors embed their source).
fn message(e: &anyhow::Error) -> String {
    let mut out: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.last().is_some_and(|prev| prev.ends_with(&text)) {
            out.push(text);
        }
    }
    out.join(": ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::FAILURE
        }
    }
}
