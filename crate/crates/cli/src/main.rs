use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlap_core::config::{RunConfig, Sweep};
use nlap_core::export::{write_field_file, write_mesh};
use nlap_core::mesh::{build_mesh, Domain};
use nlap_core::pipeline::{check_regime, run_constants, run_solve, run_subsolution};
use nlap_core::suites::run_checks;
use nlap_core::Error;

#[derive(Parser)]
#[command(name = "nlap", version, about = "Galerkin solver for N-Laplacian problems with convection and exponential growth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// JSON run configuration; built-in defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fixed lambda (replaces lambda_fraction)
    #[arg(long)]
    lambda: Option<f64>,
    /// Finest mesh level
    #[arg(long)]
    level: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Print alpha_N, the embedding estimates, r, lambda*, rho and n*
    Constants {
        #[command(flatten)]
        overrides: Overrides,
        /// Also write the report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full scheme and write report.json and solution.csv
    Solve {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Run outside the certified regime; the report is flagged
        #[arg(long)]
        force: bool,
        /// lambda_min:lambda_max:steps, one run per value
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Run the property suites
    Check {
        #[command(flatten)]
        overrides: Overrides,
        /// Only these suites (fk, space, operators, tm, constants)
        #[arg(long = "suite")]
        suites: Vec<String>,
    },
    /// Solve the sublinear problem and write v0.csv
    Subsolution {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write vertices.csv and elements.csv for a mesh
    MeshExport {
        #[arg(long, default_value = "unit_square")]
        domain: String,
        #[arg(long, default_value_t = 3)]
        level: u32,
        #[arg(long, default_value = "mesh")]
        output_dir: PathBuf,
    },
}

fn load(o: &Overrides) -> Result<RunConfig, Error> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(l) = o.lambda {
        cfg.lambda = Some(l);
        cfg.lambda_fraction = None;
    }
    if let Some(level) = o.level {
        cfg.level = level;
        cfg.min_level = cfg.min_level.min(level);
        cfg.certificate_level = cfg.certificate_level.min(level);
    }
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Print to stdout; a closed pipe (`nlap constants | head`) is not an error.
fn emit(text: &str) -> Result<(), Error> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn exit_for(err: &Error) -> ExitCode {
    if err.is_rejection() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn write_json(path: &Path, text: &str) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, format!("{text}\n"))?;
    Ok(())
}

fn constants(o: &Overrides, out: Option<&Path>) -> Result<ExitCode, Error> {
    let cfg = load(o)?;
    let report = run_constants(&cfg)?;
    let text = serde_json::to_string_pretty(&report)?;
    emit(&text)?;
    if let Some(path) = out {
        write_json(path, &text)?;
    }
    if let Err(e) = check_regime(&report.constants) {
        eprintln!("error: {e}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn solve_one(cfg: &RunConfig) -> Result<ExitCode, Error> {
    let run = run_solve(cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), &run.report.to_json()?)?;
    if let Some(xi) = &run.solution {
        write_field_file(&dir.join("solution.csv"), run.hierarchy.space(xi.level)?, xi)?;
    }
    if let Some(v) = &run.subsolution {
        write_field_file(&dir.join("v0.csv"), run.hierarchy.space(v.xi.level)?, &v.xi)?;
    }
    let r = &run.report;
    match &r.failure {
        Some(f) => {
            eprintln!("error: stage `{}` failed: {}", f.stage, f.message);
            Ok(ExitCode::from(if f.rejection { 2 } else { 1 }))
        }
        None => {
            eprintln!(
                "lambda = {:.6} (lambda* = {:.6}), n* = {}, weak-form defect {:.3e}, {}",
                r.lambda,
                r.lambda_star,
                r.constants.n_star.map_or("none".into(), |n| n.to_string()),
                r.weak_form.as_ref().map_or(f64::NAN, |w| w.max_defect),
                if r.passed { "all checks passed" } else { "some checks failed" }
            );
            Ok(if r.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
    }
}

fn solve(o: &Overrides, output_dir: Option<PathBuf>, force: bool, sweep: Option<&str>) -> Result<ExitCode, Error> {
    let mut cfg = load(o)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    cfg.force |= force;
    let Some(sweep) = sweep else {
        return solve_one(&cfg);
    };
    let sweep = Sweep::parse(sweep)?;
    let base = cfg.output_dir.clone();
    let mut worst = ExitCode::SUCCESS;
    for (i, lambda) in sweep.values().into_iter().enumerate() {
        let mut c = cfg.clone();
        c.lambda = Some(lambda);
        c.lambda_fraction = None;
        c.output_dir = base.join(format!("lambda_{i:03}"));
        let code = solve_one(&c)?;
        if code != ExitCode::SUCCESS {
            worst = code;
        }
    }
    Ok(worst)
}

fn check(o: &Overrides, suites: &[String]) -> Result<ExitCode, Error> {
    let cfg = load(o)?;
    let summary = run_checks(&cfg, suites)?;
    emit(&serde_json::to_string_pretty(&summary)?)?;
    for s in &summary.suites {
        eprintln!("{:<10} {:>4} checks  {}", s.name, s.checks, if s.passed { "ok" } else { "FAILED" });
        for f in &s.failures {
            eprintln!("    {f}");
        }
    }
    Ok(if summary.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn subsolution(o: &Overrides, output_dir: Option<PathBuf>) -> Result<ExitCode, Error> {
    let mut cfg = load(o)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let (report, hierarchy, v) = run_subsolution(&cfg)?;
    let text = serde_json::to_string_pretty(&report)?;
    emit(&text)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_json(&cfg.output_dir.join("subsolution.json"), &text)?;
    write_field_file(&cfg.output_dir.join("v0.csv"), hierarchy.space(v.xi.level)?, &v.xi)?;
    Ok(ExitCode::SUCCESS)
}

fn mesh_export(domain: &str, level: u32, dir: &Path) -> Result<ExitCode, Error> {
    let domain: Domain = domain.parse()?;
    let mesh = build_mesh(domain, level)?;
    write_mesh(dir, &mesh)?;
    eprintln!(
        "{domain} level {level}: {} vertices, {} elements",
        mesh.num_vertices(),
        mesh.num_elements()
    );
    Ok(ExitCode::SUCCESS)
}

fn init_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("NLAP_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config {
            field: "NLAP_THREADS".into(),
            message: format!("`{value}` is not a positive integer"),
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidInput(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Constants { overrides, out } => constants(overrides, out.as_deref()),
        Command::Solve {
            overrides,
            output_dir,
            force,
            sweep,
        } => solve(overrides, output_dir.clone(), *force, sweep.as_deref()),
        Command::Check { overrides, suites } => check(overrides, suites),
        Command::Subsolution { overrides, output_dir } => subsolution(overrides, output_dir.clone()),
        Command::MeshExport {
            domain,
            level,
            output_dir,
        } => mesh_export(domain, *level, output_dir),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}
