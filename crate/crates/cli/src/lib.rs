//! Command-line front end: config parsing, the four commands and their output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::info;
use serde::Deserialize;
use thiserror::Error;

use thinhom::geometry::{build_cell_mesh, build_thin_mesh, write_mesh_text};
use thinhom::homogenize::{compute_q, solve_cell};
use thinhom::limit1d::{solve_homogenized, write_solution_csv};
use thinhom::study::{flux_profile, run_study, solve_thin, stations, Resolution, StudyConfig, StudyReport};

/// Environment variable with the worker count for `study`.
pub const THREADS_VAR: &str = "THINHOM_THREADS";

#[derive(Debug, Parser)]
#[command(name = "thinhom", version, about = "Thin-domain p-Laplacian homogenization")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Study configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory; defaults to `output` from the config, then `.`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Overrides `eps` of `solve-eps`, or replaces the ladder of `study`.
    #[arg(long, global = true)]
    pub eps: Option<f64>,

    /// Overrides the exponent.
    #[arg(long, global = true)]
    pub p: Option<f64>,

    /// Mesh level N: cell 4N x N, thin N x N/2 per period, limit 32N elements.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,

    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the cell problem and print q.
    Cell,
    /// Solve the thin-domain problem at one eps.
    SolveEps,
    /// Solve the homogenized 1-D problem.
    SolveLimit,
    /// Run the eps x nu study.
    Study,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Solver {
        context: &'static str,
        source: thinhom::Error,
    },

    #[error("{context}: {source}")]
    Input {
        context: &'static str,
        source: thinhom::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Solver { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn core(context: &'static str) -> impl FnOnce(thinhom::Error) -> CliError {
        move |source| {
            if source.is_solver_failure() {
                CliError::Solver { context, source }
            } else {
                CliError::Input { context, source }
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Sections read only by one command; the rest of the file is a [`StudyConfig`].
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveEpsSection {
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveLimitSection {
    /// Skips the cell solve when given.
    pub q: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub study: StudyConfig,
    pub solve_eps: SolveEpsSection,
    pub solve_limit: SolveLimitSection,
}

fn section<T: for<'de> Deserialize<'de> + Default>(table: &mut toml::Table, name: &str) -> Result<T> {
    match table.remove(name) {
        None => Ok(T::default()),
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("[{name}]: {}", e.message()))),
    }
}

pub fn parse_config_str(text: &str) -> Result<ConfigFile> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    let solve_eps = section(&mut table, "solve_eps")?;
    let solve_limit = section(&mut table, "solve_limit")?;
    table.remove("cell");
    let study: StudyConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    study.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(ConfigFile {
        study,
        solve_eps,
        solve_limit,
    })
}

pub fn parse_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Resolution for mesh level `n`; the reference resolution is level 32.
pub fn resolution_level(n: usize) -> Result<Resolution> {
    if n < 4 {
        return Err(CliError::Config(format!("resolution must be at least 4, got {n}")));
    }
    Ok(Resolution {
        cell_nx: 4 * n,
        cell_ny: n,
        thin_nx_per_period: n,
        thin_ny: n / 2,
        limit_n: 32 * n,
        flux_stations: 0,
    })
}

/// Applies the command-line overrides and validates again.
pub fn apply_overrides(cli: &Cli, file: &mut ConfigFile) -> Result<()> {
    if let Some(p) = cli.p {
        file.study.p = p;
    }
    if let Some(n) = cli.resolution {
        let stations = file.study.resolution.flux_stations;
        file.study.resolution = Resolution {
            flux_stations: stations,
            ..resolution_level(n)?
        };
    }
    if let Some(eps) = cli.eps {
        file.solve_eps.eps = Some(eps);
        if cli.command == Command::Study {
            file.study.epsilons = vec![eps];
        }
    }
    file.study.validate().map_err(|e| CliError::Config(e.to_string()))
}

pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::Config(format!(
                "{THREADS_VAR} must be a positive integer, got {v:?}"
            ))),
        },
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    info!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// `x1,flux` with one line per fiber station.
pub fn write_flux_csv(x1: &[f64], flux: &[f64]) -> String {
    let mut out = String::from("x1,flux\n");
    for (x, f) in x1.iter().zip(flux) {
        writeln!(out, "{x:.17e},{f:.17e}").unwrap();
    }
    out
}

pub fn read_flux_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("x1,flux") {
        return Err(CliError::Config("expected header `x1,flux`".into()));
    }
    let (mut xs, mut fs) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || CliError::Config(format!("line {}: expected `x1,flux`", k + 2));
        let (x, f) = line.split_once(',').ok_or_else(bad)?;
        xs.push(x.trim().parse().map_err(|_| bad())?);
        fs.push(f.trim().parse().map_err(|_| bad())?);
    }
    Ok((xs, fs))
}

/// `eps,seconds` per row of the ladder.
pub fn write_timings_csv(report: &StudyReport) -> String {
    let mut out = String::from("eps,seconds\n");
    for (eps, t) in &report.timings {
        writeln!(out, "{eps:.17e},{t:.6}").unwrap();
    }
    out
}

pub fn output_dir(cli: &Cli, config: &StudyConfig) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    Ok(dir)
}

fn run_cell(config: &StudyConfig, dir: &Path) -> Result<()> {
    let r = &config.resolution;
    let mesh = build_cell_mesh(&config.profile, r.cell_nx, r.cell_ny).map_err(CliError::core("cell mesh"))?;
    let cell = solve_cell(&mesh, config.p, &config.solver).map_err(CliError::core("cell problem"))?;
    let q = compute_q(&cell).map_err(CliError::core("cell problem"))?;
    let s = cell.summary();
    println!("q = {q:.12}");
    println!("q_energy = {:.12}", s.q_energy);
    println!("|Y*| = {:.12}", s.cell_measure);
    println!(
        "newton iterations = {}, residual = {:.3e}",
        s.newton_iterations, s.residual
    );
    write_file(&dir.join("cell.json"), &to_json(&s))?;
    write_file(
        &dir.join("cell_mesh.txt"),
        &write_mesh_text(&cell.mesh, Some(&cell.phi.values)),
    )
}

fn run_solve_eps(file: &ConfigFile, dir: &Path) -> Result<()> {
    let config = &file.study;
    let eps = file
        .solve_eps
        .eps
        .unwrap_or_else(|| *config.epsilons.last().expect("validated ladder is nonempty"));
    let r = &config.resolution;
    let mesh = build_thin_mesh(&config.profile, eps, r.thin_nx_per_period, r.thin_ny)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (u, diag) =
        solve_thin(&mesh, config.p, &config.load.to_load(), &config.solver).map_err(CliError::core("thin problem"))?;
    let n1 = r.stations_for(mesh.grid().columns);
    let flux = flux_profile(&mesh, &u, config.p, eps, n1).map_err(CliError::core("flux profile"))?;
    println!(
        "eps = {eps}, nodes = {}, newton iterations = {}, residual = {:.3e}",
        mesh.node_count(),
        diag.total_iterations(),
        diag.final_residual()
    );
    write_file(&dir.join("u_eps.txt"), &write_mesh_text(&mesh, Some(&u)))?;
    write_file(&dir.join("flux_profile.csv"), &write_flux_csv(&stations(n1), &flux))
}

fn run_solve_limit(file: &ConfigFile, dir: &Path) -> Result<()> {
    let config = &file.study;
    let q = match file.solve_limit.q {
        Some(q) => q,
        None => {
            let r = &config.resolution;
            let mesh = build_cell_mesh(&config.profile, r.cell_nx, r.cell_ny).map_err(CliError::core("cell mesh"))?;
            let cell = solve_cell(&mesh, config.p, &config.solver).map_err(CliError::core("cell problem"))?;
            compute_q(&cell).map_err(CliError::core("cell problem"))?
        }
    };
    let prob = thinhom::study::limit_problem(config, q).map_err(|e| CliError::Config(e.to_string()))?;
    let sol = solve_homogenized(&prob, &config.solver).map_err(CliError::core("limit problem"))?;
    println!(
        "q = {q:.12}, elements = {}, newton iterations = {}",
        prob.n,
        sol.diagnostics.total_iterations()
    );
    write_file(&dir.join("u0.csv"), &write_solution_csv(&sol))
}

fn run_study_command(config: &StudyConfig, dir: &Path, threads: usize) -> Result<()> {
    let start = Instant::now();
    let report = run_study(config, threads).map_err(CliError::core("study"))?;
    let failed = report.rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "q = {:.12}, {} rows ({failed} failed) in {:.1}s",
        report.limit.q,
        report.rows.len(),
        start.elapsed().as_secs_f64()
    );
    write_file(&dir.join("report.csv"), &report.to_csv())?;
    write_file(&dir.join("report.json"), &to_json(&report))?;
    write_file(&dir.join("timings.csv"), &write_timings_csv(&report))
}

/// Runs one command end to end.
pub fn dispatch(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut file = parse_config(path)?;
    apply_overrides(cli, &mut file)?;
    let threads = threads_from_env()?;
    let dir = output_dir(cli, &file.study)?;
    info!(
        "{:?} with p = {}, output in {}",
        cli.command,
        file.study.p,
        dir.display()
    );
    match cli.command {
        Command::Cell => run_cell(&file.study, &dir),
        Command::SolveEps => run_solve_eps(&file, &dir),
        Command::SolveLimit => run_solve_limit(&file, &dir),
        Command::Study => run_study_command(&file.study, &dir, threads),
    }
}

/// Parses `args`, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("thinhom: {e}");
            e.exit_code()
        }
    }
}
