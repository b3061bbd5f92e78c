//! hslag: build, verify and export Hamiltonian-stationary Lagrangian
//! surfaces in CP2 and their Lagrangian cones.

use clap::{Args, Parser, Subcommand};
use hslag_core::algebra::{CaseName, C64};
use hslag_core::cones::ConeError;
use hslag_core::dpw::{DpwError, Grid, IntegrationBudget};
use hslag_core::loops::LoopSpec;
use hslag_core::persistence::{
    read_archive, read_potential, write_archive, write_obj, write_points, write_potential, write_report,
    write_samples, FrameArchive, PersistError, PotentialFile,
};
use hslag_core::pipeline::{
    build_surface, cone_from_surface, default_vacuum, example_surface, project_cone, ExampleName, PipelineError,
    Surface, SurfaceConfig,
};
use hslag_core::report::Report;
use hslag_core::verify::{archive, run_suite, SUITES};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CHECKS: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "hslag", version, about = "Hamiltonian-stationary Lagrangian surfaces in CP2 from loop-group potentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Potential file to extended frame, surface mesh, samples and report.
    Build {
        #[arg(long)]
        potential: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run a named verification suite or check a frame archive.
    Verify {
        /// Suite name or path to a frame archive.
        target: String,
        #[arg(long)]
        case: Option<String>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Closed-form surfaces: rp2, clifford or vacuum.
    Example {
        name: String,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Legendrian lift and cone over a surface from a potential or example.
    Cone {
        #[arg(long, conflicts_with = "example")]
        potential: Option<PathBuf>,
        #[arg(long)]
        example: Option<String>,
        /// Comma-separated cone radii.
        #[arg(long, default_value = "0.5,1.0")]
        radii: String,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    /// x0,y0,x1,y1
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
    #[arg(long)]
    lambda_samples: Option<usize>,
    #[arg(long)]
    fourier_cap: Option<usize>,
    /// RE,IM on the unit circle.
    #[arg(long, allow_hyphen_values = true, default_value = "1,0")]
    lambda0: String,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Report path; defaults to report.txt in the output directory.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure(u8, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::NotConverged { .. } => EXIT_NOT_CONVERGED,
            PipelineError::Dpw(DpwError::Integration { .. }) | PipelineError::Dpw(DpwError::BigCellMiss(_)) => {
                EXIT_NOT_CONVERGED
            }
            PipelineError::Cone(ConeError::NotLagrangian(_)) => EXIT_INVALID,
            PipelineError::Invalid(_)
            | PipelineError::Persist(_)
            | PipelineError::Loop(_)
            | PipelineError::Fixture(_) => EXIT_INVALID,
            _ => EXIT_CHECKS,
        };
        Failure(code, e.to_string())
    }
}

impl From<PersistError> for Failure {
    fn from(e: PersistError) -> Self {
        Failure(EXIT_INVALID, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(EXIT_INVALID, msg.into())
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N], Failure> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("--{what} {s}: {e}")))?;
    v.try_into()
        .map_err(|_| invalid(format!("--{what} {s}: expected {N} comma-separated numbers")))
}

fn parse_lambda0(s: &str) -> Result<C64, Failure> {
    let [re, im] = parse_floats::<2>(s, "lambda0")?;
    Ok(C64::new(re, im))
}

/// Flags override file values, which override the defaults.
fn resolve_grid(args: &GridArgs, file: Option<([f64; 4], usize, usize)>, default: Grid) -> Result<Grid, Failure> {
    let (fd, fnx, fny) = file.unwrap_or((default.domain(), default.nx, default.ny));
    let domain = match &args.domain {
        Some(s) => parse_floats::<4>(s, "domain")?,
        None => fd,
    };
    let g = Grid::new(domain, args.nx.unwrap_or(fnx), args.ny.unwrap_or(fny)).map_err(|e| invalid(e.to_string()))?;
    Ok(g)
}

fn resolve_spec(args: &GridArgs, file: Option<(usize, usize)>) -> Result<LoopSpec, Failure> {
    let (n, k) = file.unwrap_or((64, 14));
    LoopSpec::new(args.lambda_samples.unwrap_or(n), args.fourier_cap.unwrap_or(k))
        .and_then(|s| s.with_tolerances(1e-10, 1e-8, 1e-6))
        .map_err(|e| invalid(e.to_string()))
}

fn surface_config(args: &GridArgs) -> Result<SurfaceConfig, Failure> {
    Ok(SurfaceConfig {
        lambda0: parse_lambda0(&args.lambda0)?,
        ..SurfaceConfig::default()
    })
}

fn out_dir(out: &OutArgs) -> Result<&Path, Failure> {
    std::fs::create_dir_all(&out.out).map_err(|e| invalid(format!("{}: {e}", out.out.display())))?;
    Ok(&out.out)
}

fn emit_report(r: &Report, out: &OutArgs) -> Result<(), Failure> {
    print!("{r}");
    let path = out.report.clone().unwrap_or_else(|| out.out.join("report.txt"));
    write_report(&path, r)?;
    Ok(())
}

fn write_surface(dir: &Path, s: &Surface, label: &str) -> Result<(), Failure> {
    let comments = vec![
        format!("hslag {label}"),
        "vertices: affine chart (z1/z3, z2/z3) in R^4, projected by rows (1,0,0,0) (0,1,0,0) (0,0,1/sqrt2,1/sqrt2)".into(),
    ];
    write_obj(&dir.join("surface.obj"), &s.vertices, s.grid.nx, s.grid.ny, &comments)?;
    write_samples(&dir.join("samples.txt"), &s.samples)?;
    Ok(())
}

fn write_cone(dir: &Path, grid: &Grid, points: &[[f64; 6]]) -> Result<(), Failure> {
    let comments = vec!["hslag cone".into(), "vertices: (Re z1, Re z2, Re z3)".into()];
    write_obj(&dir.join("cone.obj"), &project_cone(points), grid.nx, grid.ny, &comments)?;
    write_points(&dir.join("cone_points.txt"), points)?;
    Ok(())
}

fn check_exit(r: &Report) -> u8 {
    if r.passed() {
        0
    } else {
        EXIT_CHECKS
    }
}

fn load_potential(path: &Path) -> Result<PotentialFile, Failure> {
    read_potential(path).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn build_default_grid() -> Grid {
    Grid::new([-0.2, -0.2, 0.2, 0.2], 32, 32).expect("valid grid")
}

fn cmd_build(potential: &Path, grid: &GridArgs, out: &OutArgs) -> Result<u8, Failure> {
    let pf = load_potential(potential)?;
    let g = resolve_grid(grid, pf.grid, build_default_grid())?;
    let spec = resolve_spec(grid, pf.loop_spec)?;
    let cfg = surface_config(grid)?;
    let dir = out_dir(out)?;
    let res = build_surface(&pf.potential, &g, &spec, &IntegrationBudget::default(), &cfg)?;
    if let (Some(s), Some(f)) = (&res.surface, &res.frame) {
        write_surface(dir, s, "build")?;
        write_archive(&dir.join("frame.archive"), &FrameArchive::new(pf.case, f, &spec))?;
    }
    for w in &res.report.warnings {
        eprintln!("warning: {w}");
    }
    emit_report(&res.report, out)?;
    Ok(check_exit(&res.report))
}

fn example_name(s: &str) -> Result<ExampleName, Failure> {
    ExampleName::parse(s).ok_or_else(|| invalid(format!("unknown example {s}; expected rp2, clifford or vacuum")))
}

fn cmd_example(name: &str, grid: &GridArgs, out: &OutArgs) -> Result<u8, Failure> {
    let name = example_name(name)?;
    let g = resolve_grid(grid, None, name.default_grid())?;
    let n = grid.lambda_samples.unwrap_or(16);
    let cfg = surface_config(grid)?;
    let dir = out_dir(out)?;
    let (s, mut report) = example_surface(name, &g, n, &cfg)?;
    write_surface(dir, &s, name.as_str())?;
    match name {
        ExampleName::Clifford => {
            let c = cone_from_surface(&s, &[0.5, 1.0], &cfg)?;
            write_cone(dir, &g, &c.mesh.points)?;
            report.absorb("cone", c.report);
        }
        ExampleName::Vacuum => {
            let pf = PotentialFile {
                case: CaseName::Cp2,
                grid: Some((g.domain(), g.nx, g.ny)),
                loop_spec: None,
                potential: hslag_core::fixtures::vacuum_potential(&default_vacuum()),
            };
            write_potential(&dir.join("potential.txt"), &pf)?;
        }
        ExampleName::Rp2 => {}
    }
    emit_report(&report, out)?;
    Ok(check_exit(&report))
}

fn cmd_cone(potential: Option<&Path>, example: Option<&str>, radii: &str, grid: &GridArgs, out: &OutArgs) -> Result<u8, Failure> {
    let radii: Vec<f64> = radii
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| invalid(format!("--radii {radii}: {e}")))?;
    let cfg = surface_config(grid)?;
    let (surface, mut report) = match (potential, example) {
        (Some(p), None) => {
            let pf = load_potential(p)?;
            let g = resolve_grid(grid, pf.grid, build_default_grid())?;
            let spec = resolve_spec(grid, pf.loop_spec)?;
            let res = build_surface(&pf.potential, &g, &spec, &IntegrationBudget::default(), &cfg)?;
            match res.surface {
                Some(s) => (s, res.report),
                None => return Err(invalid("zero potential has no cone")),
            }
        }
        (None, Some(e)) => {
            let name = example_name(e)?;
            let g = resolve_grid(grid, None, name.default_grid())?;
            example_surface(name, &g, grid.lambda_samples.unwrap_or(16), &cfg)?
        }
        _ => return Err(invalid("cone needs exactly one of --potential or --example")),
    };
    let dir = out_dir(out)?;
    let c = cone_from_surface(&surface, &radii, &cfg)?;
    write_cone(dir, &surface.grid, &c.mesh.points)?;
    for w in &c.report.warnings {
        eprintln!("warning: {w}");
    }
    report.absorb("cone", c.report);
    emit_report(&report, out)?;
    Ok(check_exit(&report))
}

fn cmd_verify(target: &str, case: Option<&str>, seed: u64, report_path: Option<&Path>) -> Result<u8, Failure> {
    let case = case
        .map(|c| CaseName::parse(c).ok_or_else(|| invalid(format!("unknown case {c}"))))
        .transpose()?;
    let report = if SUITES.contains(&target) {
        run_suite(target, case, seed)?
    } else if Path::new(target).is_file() {
        let a = read_archive(Path::new(target)).map_err(|e| invalid(format!("{target}: {e}")))?;
        archive(&a.to_extended_frame()?)?
    } else {
        return Err(invalid(format!(
            "{target} is neither a suite ({}) nor a readable archive",
            SUITES.join(", ")
        )));
    };
    print!("{report}");
    if let Some(p) = report_path {
        write_report(p, &report)?;
    }
    Ok(check_exit(&report))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Build { potential, grid, out } => cmd_build(potential, grid, out),
        Command::Verify {
            target,
            case,
            seed,
            report,
        } => cmd_verify(target, case.as_deref(), *seed, report.as_deref()),
        Command::Example { name, grid, out } => cmd_example(name, grid, out),
        Command::Cone {
            potential,
            example,
            radii,
            grid,
            out,
        } => cmd_cone(potential.as_deref(), example.as_deref(), radii, grid, out),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
