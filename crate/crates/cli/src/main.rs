use clap::{Args, Parser, Subcommand};
use movefem::config::{default_levels, StudyConfig};
use movefem::evolution::{move_mesh, MeshFlow};
use movefem::mesh::{build_isoparametric, import_msh, read_native, validate, validate_linear, write_native, CurvedMesh};
use movefem::study::{self, Homogeneous, LevelResult, ManufacturedProblem};
use serde::de::{DeserializeOwned, IntoDeserializer};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

/// Environment variable with the worker thread count.
const THREADS_VAR: &str = "MOVEFEM_THREADS";

#[derive(Parser)]
#[command(name = "movefem", version, about = "Moving interface-fitted finite elements: meshes, runs and convergence studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or import the initial mesh of a level, validate it and write it out.
    Mesh {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        level: usize,
    },
    /// Validate a mesh file (gmsh .msh or native dump), optionally after moving it.
    Validate {
        mesh: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Move the mesh with the configured flow to this time first.
        #[arg(long)]
        time: Option<f64>,
    },
    /// One time integration at one level.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        level: usize,
        /// Zero source, zero interface flux and zero initial value.
        #[arg(long)]
        zero_data: bool,
    },
    /// Convergence study over all levels.
    Study {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

/// Config file plus per-field overrides.
#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags below override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    bdf_order: Option<usize>,
    #[arg(long)]
    final_time: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    /// Number of levels, halving `h0` and `tau0`.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long, default_value_t = 0.4)]
    h0: f64,
    #[arg(long, default_value_t = 0.25)]
    tau0: f64,
    /// Gmsh file per level (repeat the flag).
    #[arg(long = "mesh-file")]
    mesh_files: Vec<PathBuf>,
    /// strict | fallback
    #[arg(long)]
    flow_mode: Option<String>,
    /// interpolated | lifted
    #[arg(long)]
    data_mode: Option<String>,
    /// discrete | lifted
    #[arg(long)]
    coefficient_evaluation: Option<String>,
    /// discrete | lifted
    #[arg(long)]
    error_evaluation: Option<String>,
    /// bdf | exact
    #[arg(long)]
    mesh_velocity: Option<String>,
    #[arg(long)]
    quad_degree: Option<usize>,
    /// auto | direct-lu | cg | bicgstab
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    stem: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Allow multithreaded factorization (results may differ in the last bits).
    #[arg(long)]
    no_reproducible: bool,
    #[arg(long)]
    parallel_levels: bool,
}

fn parse_enum<T: DeserializeOwned>(flag: &str, v: &str) -> movefem::Result<T> {
    T::deserialize(v.into_deserializer())
        .map_err(|e: serde::de::value::Error| movefem::Error::Config(format!("--{flag}: {e}")))
}

impl ConfigArgs {
    fn resolve(&self) -> movefem::Result<StudyConfig> {
        let mut c = match &self.config {
            Some(p) => StudyConfig::load(p)?,
            None => StudyConfig::default(),
        };
        if let Some(v) = self.dimension {
            c.dimension = v;
        }
        if let Some(v) = self.order {
            c.order = v;
        }
        if self.bdf_order.is_some() {
            c.bdf_order = self.bdf_order;
        }
        if let Some(v) = self.final_time {
            c.final_time = v;
        }
        if let Some(v) = self.amplitude {
            c.amplitude = v;
        }
        if let Some(n) = self.levels {
            c.levels = default_levels(n, self.h0, self.tau0);
        } else if self.config.is_none() {
            c.levels = default_levels(c.levels.len(), self.h0, self.tau0);
        }
        if !self.mesh_files.is_empty() {
            c.mesh_files = self.mesh_files.clone();
        }
        if let Some(v) = &self.flow_mode {
            c.flow_mode = parse_enum("flow-mode", v)?;
        }
        if let Some(v) = &self.data_mode {
            c.data_mode = parse_enum("data-mode", v)?;
        }
        if let Some(v) = &self.coefficient_evaluation {
            c.coefficient_evaluation = parse_enum("coefficient-evaluation", v)?;
        }
        if let Some(v) = &self.error_evaluation {
            c.error_evaluation = parse_enum("error-evaluation", v)?;
        }
        if let Some(v) = &self.mesh_velocity {
            c.mesh_velocity = parse_enum("mesh-velocity", v)?;
        }
        if self.quad_degree.is_some() {
            c.quad_degree = self.quad_degree;
        }
        if let Some(v) = &self.solver {
            c.solver.method = parse_enum("solver", v)?;
        }
        if let Some(v) = self.rel_tol {
            c.solver.rel_tol = v;
        }
        if let Some(v) = &self.out_dir {
            c.output.dir = v.clone();
        }
        if let Some(v) = &self.stem {
            c.output.stem = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if self.no_reproducible {
            c.reproducible = false;
        }
        if self.parallel_levels {
            c.parallel_levels = true;
        }
        c.validate()?;
        Ok(c)
    }
}

fn output_path(cfg: &StudyConfig, suffix: &str) -> movefem::Result<PathBuf> {
    fs::create_dir_all(&cfg.output.dir)?;
    Ok(cfg.output.dir.join(format!("{}{suffix}", cfg.output.stem)))
}

fn write(path: &Path, text: &str) -> movefem::Result<()> {
    fs::write(path, text)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_mesh(cfg: &StudyConfig, level: usize) -> movefem::Result<ExitCode> {
    let problem = ManufacturedProblem::new(cfg.dimension, cfg.amplitude);
    let mesh = study::level_mesh(cfg, &problem, level)?;
    let report = validate(&mesh, &problem.geom);
    write(&output_path(cfg, &format!("_level{level}_mesh.txt"))?, &write_native(&mesh))?;
    write(&output_path(cfg, &format!("_level{level}_mesh_report.txt"))?, &report.to_text())?;
    print!("{}", report.to_text());
    Ok(if report.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn load_mesh(path: &Path, cfg: &StudyConfig, problem: &ManufacturedProblem) -> movefem::Result<(CurvedMesh, String)> {
    if path.extension().is_some_and(|e| e == "msh") {
        let lin = import_msh(path, Some(&problem.geom))?;
        let lin_report = validate_linear(&lin, &problem.geom);
        if let Some(v) = lin_report.violations.first() {
            return Err(movefem::Error::mesh(v.assumption, v.detail.clone()));
        }
        Ok((build_isoparametric(lin, &problem.geom, cfg.order)?, lin_report.to_text()))
    } else {
        Ok((read_native(path)?, String::new()))
    }
}

fn cmd_validate(path: &Path, cfg: &StudyConfig, time: Option<f64>) -> movefem::Result<ExitCode> {
    let problem = ManufacturedProblem::new(cfg.dimension, cfg.amplitude);
    let (mut mesh, linear) = load_mesh(path, cfg, &problem)?;
    if let Some(t) = time {
        mesh = move_mesh(&mesh, &MeshFlow::for_mode(cfg.flow_mode, mesh.dim(), cfg.amplitude), t)?;
    }
    if !linear.is_empty() {
        println!("# straight mesh\n{linear}# curved mesh");
    }
    let report = validate(&mesh, &problem.geom);
    print!("{}", report.to_text());
    Ok(if report.is_valid() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn run_text(r: &LevelResult, seconds: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "level {}\nh {:.6e}\ntau {:.6e}\ndofs {}", r.level, r.h, r.tau, r.space.n_dofs);
    let _ = writeln!(s, "l2_error {:.6e}\nh1_error {:.6e}\nh1_full_error {:.6e}", r.errors.l2, r.errors.h1_semi, r.errors.h1_full);
    let _ = writeln!(s, "seconds {seconds:.3}");
    let _ = writeln!(s, "# step t order iterations residual det_min det_max shape_regularity mass_norm");
    for d in &r.run.diagnostics {
        let _ = writeln!(
            s,
            "{} {:.6} {} {} {:.3e} {:.6e} {:.6e} {:.6e} {:.6e}",
            d.step, d.t, d.order, d.iterations, d.residual, d.det_min, d.det_max, d.shape_regularity, d.mass_norm
        );
    }
    s
}

fn cmd_run(cfg: &StudyConfig, level: usize, zero_data: bool) -> movefem::Result<ExitCode> {
    let start = Instant::now();
    let problem = ManufacturedProblem::new(cfg.dimension, cfg.amplitude);
    let r = if zero_data {
        study::run_level_with(cfg, &problem, &Homogeneous(&problem), level, Some(&|_| 0.0))?
    } else {
        study::run_level_with(cfg, &problem, &problem, level, None)?
    };
    let secs = start.elapsed().as_secs_f64();
    let mut sol = format!("# final coefficients, t = {}, {} dofs\n", r.run.mesh.time, r.run.u.len());
    for v in &r.run.u {
        let _ = writeln!(sol, "{v:.17e}");
    }
    write(&output_path(cfg, &format!("_level{level}_solution.txt"))?, &sol)?;
    let text = run_text(&r, secs);
    write(&output_path(cfg, &format!("_level{level}_run.txt"))?, &text)?;
    print!("{text}");
    Ok(ExitCode::SUCCESS)
}

fn write_report(cfg: &StudyConfig, report: &study::ConvergenceReport) -> movefem::Result<()> {
    write(&output_path(cfg, ".csv")?, &report.to_csv())?;
    write(&output_path(cfg, "_h1_full.csv")?, &report.to_full_csv())?;
    for norm in ["l2", "h1", "h1_full"] {
        write(&output_path(cfg, &format!("_{norm}.dat"))?, &report.plot_data(norm)?)?;
    }
    Ok(())
}

fn cmd_study(cfg: &StudyConfig) -> movefem::Result<ExitCode> {
    cfg.validate_study()?;
    let mut partial = study::ConvergenceReport { meta: study::report_meta(cfg), rows: Vec::new() };
    let result = study::run_study(cfg, |r| {
        eprintln!("level {} done: h {:.4e} L2 {:.4e} H1 {:.4e}", r.level, r.h, r.errors.l2, r.errors.h1_semi);
        partial.rows.push(r.row());
        write(&output_path(cfg, ".partial.csv")?, &partial.to_csv())
    });
    let report = match result {
        Ok(r) => r,
        Err(e) => {
            eprintln!("study stopped after {} levels; partial table kept", partial.rows.len());
            return Err(e);
        }
    };
    let _ = fs::remove_file(output_path(cfg, ".partial.csv")?);
    write_report(cfg, &report)?;
    print!("{}", report.to_text());
    Ok(ExitCode::SUCCESS)
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = v.parse().map_err(|_| format!("{THREADS_VAR} must be a positive integer, got '{v}'"))?;
    if n == 0 {
        return Err(format!("{THREADS_VAR} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn exit_code(e: &movefem::Error) -> ExitCode {
    if e.is_validation_failure() {
        ExitCode::from(2)
    } else if e.is_solver_failure() {
        ExitCode::from(3)
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    let result = match &cli.command {
        Command::Mesh { cfg, level } => cfg.resolve().and_then(|c| cmd_mesh(&c, *level)),
        Command::Validate { mesh, cfg, time } => cfg.resolve().and_then(|c| cmd_validate(mesh, &c, *time)),
        Command::Run { cfg, level, zero_data } => cfg.resolve().and_then(|c| cmd_run(&c, *level, *zero_data)),
        Command::Study { cfg } => cfg.resolve().and_then(|c| cmd_study(&c)),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
