//! `qshoot` command-line front end.
//!
//! Exit codes: 0 success, 1 malformed input, 2 no eigenvalue in the scan
//! range, 3 plugin failure, 4 numerical non-convergence or a bench mismatch.

mod config;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::coupled::{CoupledError, CoupledProblem, CoupledShooter};
use crate::fit::{fit_parameters, FitError};
use crate::plugin::{load_with_manifest_file, NumericArray};
use crate::potentials::{PotentialError, PotentialSpec};
use crate::radial::RadialMesh;
use crate::search::{SearchError, ShootingConfig};
use crate::shooting::{Shooter, ShootingError, ShootingProblem};
use crate::spectrum::{SpectrumError, SpectrumModel};

pub use config::{PluginOverride, RunConfig};
pub use output::{csv_table, svg_plot};

pub const THREADS_ENV: &str = "QSHOOT_THREADS";

/// Reference levels `(n, E)` for the Cornell potential with
/// `a = 0.1`, `k = 0.5`, `m = 1`, `l = 1`.
pub const BENCH_LEVELS: [(usize, f64); 4] = [(0, 2.15789), (1, 3.10952), (2, 3.93850), (20, 13.5995)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NoEigenvalue(String),
    #[error("plugin error: {0}")]
    Plugin(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::NoEigenvalue(_) => 2,
            CliError::Plugin(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn from_search(e: SearchError) -> Self {
        match e {
            SearchError::InvalidConfig(_) => CliError::Input(e.to_string()),
            SearchError::NotBracketed { .. } => CliError::NoEigenvalue(e.to_string()),
            SearchError::NoConvergence { .. } => CliError::Numerical(e.to_string()),
        }
    }

    fn from_potential(e: PotentialError) -> Self {
        match e {
            PotentialError::Plugin(_) => CliError::Plugin(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }

    pub(crate) fn from_shooting(e: ShootingError) -> Self {
        match e {
            ShootingError::Search(s) => Self::from_search(s),
            ShootingError::Potential(p) => Self::from_potential(p),
            ShootingError::InvalidProblem(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }

    fn from_coupled(e: CoupledError) -> Self {
        match e {
            CoupledError::Search(s) => Self::from_search(s),
            CoupledError::Potential(p) => Self::from_potential(p),
            CoupledError::InvalidProblem(_) => CliError::Input(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }

    fn from_spectrum(e: SpectrumError) -> Self {
        match e {
            SpectrumError::Shooting(s) => Self::from_shooting(s),
            SpectrumError::Potential(p) => Self::from_potential(p),
            SpectrumError::InvalidModel(_) => CliError::Input(e.to_string()),
            SpectrumError::Degenerate { .. } => CliError::Numerical(e.to_string()),
        }
    }

    fn from_fit(e: FitError) -> Self {
        match e {
            FitError::InvalidTargets(_) => CliError::Input(e.to_string()),
            FitError::Model { source, params } => match Self::from_spectrum(source) {
                CliError::Numerical(m) => CliError::Numerical(format!("at {params:?}: {m}")),
                other => other,
            },
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "qshoot", version, about = "Bound states of radial and coupled-channel Schrödinger equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Radial excitation number.
    #[arg(long, default_value_t = 0)]
    n: usize,
    /// Angular momentum, overriding [problem] l.
    #[arg(long)]
    l: Option<u32>,
    /// CSV output path, overriding [output] csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG plot next to the CSV.
    #[arg(long)]
    svg: bool,
    /// Plugin library supplying the potential.
    #[arg(long)]
    plugin: Option<PathBuf>,
    /// Manifest describing the plugin's functions.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalue and wavefunction of the radial equation.
    Solve(Common),
    /// Eigenvalue and vector wavefunction of a coupled-channel system.
    Coupled(Common),
    /// Mass with perturbative corrections.
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Highest state kept in the second-order sum.
        #[arg(long)]
        basis_max: Option<usize>,
    },
    /// Fit Cornell parameters to three masses.
    Fit(Common),
    /// Node count on the scan grid, one `energy,nodes` row per energy.
    Scan(Common),
    /// Call a plugin function on inline arrays.
    Call {
        #[arg(long)]
        plugin: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        function: String,
        /// Comma-separated input array, once per declared input.
        #[arg(long, allow_hyphen_values = true)]
        input: Vec<String>,
        /// Override input lengths, comma-separated.
        #[arg(long)]
        in_lengths: Option<String>,
        /// Override output lengths, comma-separated.
        #[arg(long)]
        out_lengths: Option<String>,
    },
    /// Time the reference Cornell levels and check their eigenvalues.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use half as many mesh intervals.
        #[arg(long)]
        half_density: bool,
    },
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout().lock();
    match configure_threads().and_then(|()| dispatch(cli.command, &mut stdout)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    // a pool may already exist when run() is called more than once in-process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(command: Command, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    match command {
        Command::Solve(c) => solve(&c, out),
        Command::Coupled(c) => coupled(&c, out),
        Command::Spectrum { common, basis_max } => spectrum(&common, basis_max, out),
        Command::Fit(c) => fit(&c, out),
        Command::Scan(c) => scan(&c, out),
        Command::Call {
            plugin,
            manifest,
            function,
            input,
            in_lengths,
            out_lengths,
        } => call(plugin.as_deref(), &manifest, &function, &input, in_lengths, out_lengths, out),
        Command::Bench { config, half_density } => bench(config.as_deref(), half_density, out),
    }
}

fn load_config(c: &Common) -> Result<RunConfig, CliError> {
    match &c.config {
        Some(p) => RunConfig::load(p),
        None => Err(CliError::Input("--config is required".into())),
    }
}

fn plugin_override(c: &Common) -> PluginOverride {
    PluginOverride {
        library: c.plugin.clone(),
        manifest: c.manifest.clone(),
    }
}

struct Scalar {
    problem: ShootingProblem,
    config: ShootingConfig,
}

fn scalar_problem(cfg: &RunConfig, c: &Common) -> Result<Scalar, CliError> {
    let (mass, l) = cfg.problem()?;
    let l = c.l.unwrap_or(l);
    let potential = cfg.potential(&plugin_override(c))?;
    let mesh = cfg.mesh(&potential, mass)?;
    let problem = ShootingProblem::new(potential, l, mass, mesh).map_err(CliError::from_shooting)?;
    Ok(Scalar {
        problem,
        config: cfg.solver()?,
    })
}

fn line(out: &mut dyn std::io::Write, key: &str, value: impl std::fmt::Display) -> Result<(), CliError> {
    writeln!(out, "{key} = {value}").map_err(|e| CliError::Input(format!("cannot write report: {e}")))
}

fn emit(
    cfg: &RunConfig,
    c: &Common,
    names: &[&str],
    columns: &[&crate::radial::RadialFunction],
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let (csv_cfg, svg_cfg) = cfg.output()?;
    let csv = c.out.clone().or(csv_cfg);
    if let Some(path) = &csv {
        output::write_file(path, &csv_table(names, columns))?;
        line(out, "csv", path.display())?;
    }
    let svg = match (c.svg, svg_cfg, &csv) {
        (true, Some(p), _) => Some(p),
        (true, None, Some(csv)) => Some(csv.with_extension("svg")),
        (true, None, None) => return Err(CliError::Input("--svg needs --out or [output] svg".into())),
        (false, p, _) => p,
    };
    if let Some(path) = svg {
        output::write_file(&path, &svg_plot(names, columns))?;
        line(out, "svg", path.display())?;
    }
    Ok(())
}

fn solve(c: &Common, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let s = scalar_problem(&cfg, c)?;
    let start = Instant::now();
    let shooter = Shooter::new(&s.problem).map_err(CliError::from_shooting)?;
    let sol = shooter.solve(&s.config, c.n).map_err(CliError::from_shooting)?;
    let seconds = start.elapsed().as_secs_f64();
    line(out, "n", sol.n)?;
    line(out, "l", sol.l)?;
    line(out, "energy", format_args!("{:.10}", sol.energy))?;
    line(out, "nodes", crate::radial::count_nodes(&sol.wavefunction, sol.truncation_index))?;
    line(out, "truncation_r", format_args!("{:.6}", s.problem.mesh.r(sol.truncation_index)))?;
    line(out, "tail_residual", format_args!("{:.3e}", sol.tail_residual))?;
    line(out, "bisections", sol.bisections)?;
    line(out, "seconds", format_args!("{seconds:.4}"))?;
    emit(&cfg, c, &["y"], &[&sol.wavefunction], out)
}

fn coupled(c: &Common, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let (mass, l) = cfg.problem()?;
    let l = c.l.unwrap_or(l);
    let spec = cfg.matrix(l, mass)?;
    let mesh = cfg.coupled_mesh()?;
    let problem = CoupledProblem::new(spec, l, mass, mesh).map_err(CliError::from_coupled)?;
    let config = cfg.solver()?;
    let start = Instant::now();
    let sol = CoupledShooter::new(&problem)
        .and_then(|s| s.solve(&config, c.n))
        .map_err(CliError::from_coupled)?;
    let seconds = start.elapsed().as_secs_f64();
    line(out, "n", sol.n)?;
    line(out, "l", sol.l)?;
    line(out, "energy", format_args!("{:.10}", sol.energy))?;
    line(out, "det_nodes", sol.det_nodes)?;
    let mixing: Vec<String> = sol.mixing.iter().map(|x| format!("{x:.10}")).collect();
    line(out, "mixing", mixing.join(", "))?;
    line(out, "truncation_r", format_args!("{:.6}", mesh.r(sol.truncation_index)))?;
    line(out, "tail_residual", format_args!("{:.3e}", sol.tail_residual))?;
    line(out, "bisections", sol.bisections)?;
    line(out, "seconds", format_args!("{seconds:.4}"))?;
    let names: Vec<String> = (1..=sol.components.len()).map(|j| format!("u{j}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let columns: Vec<&_> = sol.components.iter().collect();
    emit(&cfg, c, &names, &columns, out)
}

fn spectrum(c: &Common, basis_max: Option<usize>, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let s = scalar_problem(&cfg, c)?;
    let (cfg_basis, f1, f2) = cfg.spectrum()?;
    let mut model = SpectrumModel::new(s.problem.potential.clone(), s.problem.l, s.problem.mass, s.config)
        .map_err(CliError::from_spectrum)?
        .with_mesh(s.problem.mesh)
        .with_v_1m(cfg.correction("v1m")?)
        .with_v_1m2(cfg.correction("v1m2")?)
        .with_factors(f1, f2);
    if let Some(b) = basis_max.or(cfg_basis) {
        model = model.with_basis_max(b).map_err(CliError::from_spectrum)?;
    }
    let b = model.mass_at_order(c.n).map_err(CliError::from_spectrum)?;
    line(out, "n", c.n)?;
    line(out, "l", s.problem.l)?;
    line(out, "basis_max", model.basis_max())?;
    for (k, v) in [
        ("e0", b.e0),
        ("lo", b.lo),
        ("nlo", b.nlo),
        ("nnlo_diag", b.nnlo_diag),
        ("nnlo_sum", b.nnlo_sum),
        ("sum_tail", b.sum_tail),
        ("mass", b.total),
    ] {
        line(out, k, format_args!("{v:.10}"))?;
    }
    Ok(())
}

fn fit(c: &Common, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let (targets, guess, options) = cfg.fit()?;
    let start = Instant::now();
    let report = fit_parameters(&targets, guess, &options).map_err(CliError::from_fit)?;
    line(out, "a", format_args!("{:.10}", report.params.a))?;
    line(out, "k", format_args!("{:.10}", report.params.k))?;
    line(out, "m", format_args!("{:.10}", report.params.m))?;
    line(out, "iterations", report.iterations)?;
    let residuals: Vec<String> = report.residuals.iter().map(|r| format!("{r:.3e}")).collect();
    line(out, "residuals", residuals.join(", "))?;
    line(out, "seconds", format_args!("{:.4}", start.elapsed().as_secs_f64()))
}

fn scan(c: &Common, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = load_config(c)?;
    let config = cfg.solver()?;
    let counts: Vec<(f64, usize)> = if cfg.has_section("matrix") {
        let (mass, l) = cfg.problem()?;
        let l = c.l.unwrap_or(l);
        let problem = CoupledProblem::new(cfg.matrix(l, mass)?, l, mass, cfg.coupled_mesh()?)
            .map_err(CliError::from_coupled)?;
        let shooter = CoupledShooter::new(&problem).map_err(CliError::from_coupled)?;
        grid(&config).map(|e| (e, shooter.det_nodes_at(e))).collect()
    } else {
        let s = scalar_problem(&cfg, c)?;
        let shooter = Shooter::new(&s.problem).map_err(CliError::from_shooting)?;
        grid(&config).map(|e| (e, shooter.nodes_at(e))).collect()
    };
    let mut text = String::from("energy,nodes\n");
    for (e, n) in counts {
        text.push_str(&format!("{e:.10},{n}\n"));
    }
    match &c.out {
        Some(path) => output::write_file(path, &text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write scan: {e}"))),
    }
}

fn grid(cfg: &ShootingConfig) -> impl Iterator<Item = f64> + '_ {
    let steps = ((cfg.e_max - cfg.e_min) / cfg.scan_step).ceil() as usize;
    (0..=steps).map(move |k| (cfg.e_min + k as f64 * cfg.scan_step).min(cfg.e_max))
}

fn parse_lengths(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|p| p.trim().parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Input(format!("cannot parse lengths `{text}`")))
}

#[allow(clippy::too_many_arguments)]
fn call(
    library: Option<&Path>,
    manifest: &Path,
    function: &str,
    inputs: &[String],
    in_lengths: Option<String>,
    out_lengths: Option<String>,
    out: &mut dyn std::io::Write,
) -> Result<(), CliError> {
    let plugin = load_with_manifest_file(library, manifest).map_err(|e| CliError::Plugin(e.to_string()))?;
    let shape = plugin.shape(function).map_err(|e| CliError::Plugin(e.to_string()))?;
    if inputs.len() != shape.in_types.len() {
        return Err(CliError::Input(format!(
            "`{function}` takes {} inputs, got {}",
            shape.in_types.len(),
            inputs.len()
        )));
    }
    let arrays: Vec<NumericArray> = inputs
        .iter()
        .zip(&shape.in_types)
        .enumerate()
        .map(|(i, (text, &ty))| NumericArray::parse(ty, text).map_err(|e| CliError::Input(format!("input {i}: {e}"))))
        .collect::<Result<_, _>>()?;
    let result = if in_lengths.is_some() || out_lengths.is_some() {
        let ins = match in_lengths {
            Some(t) => parse_lengths(&t)?,
            None => shape.in_lengths.clone(),
        };
        let outs = match out_lengths {
            Some(t) => parse_lengths(&t)?,
            None => shape.out_lengths.clone(),
        };
        plugin.call_with_lengths(function, &arrays, &ins, &outs)
    } else {
        plugin.call(function, &arrays)
    }
    .map_err(|e| CliError::Plugin(e.to_string()))?;
    for (i, a) in result.iter().enumerate() {
        line(out, &format!("out{i}"), a)?;
    }
    Ok(())
}

fn bench(config: Option<&Path>, half_density: bool, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::parse(
            "[potential]\nkind = cornell\na = 0.1\nk = 0.5\n[problem]\nm = 1\nl = 1\n[solver]\ne_min = 0\ne_max = 20\n",
        )?,
    };
    let (mass, l) = cfg.problem()?;
    let potential: PotentialSpec = cfg.potential(&PluginOverride::default())?;
    let mut mesh = cfg.mesh(&potential, mass)?;
    let mut scale = cfg.bench_scale()?;
    if half_density {
        scale *= 0.5;
    }
    if scale != 1.0 {
        let intervals = ((mesh.n_points() - 1) as f64 * scale).round() as usize;
        mesh = RadialMesh::new(mesh.r_min(), mesh.r_max(), intervals + 1)
            .map_err(|e| CliError::Input(format!("mesh_scale: {e}")))?;
    }
    let tolerance = if scale < 1.0 { 1e-3 } else { 5e-4 };
    let config = cfg.solver()?;
    let problem = ShootingProblem::new(potential, l, mass, mesh).map_err(CliError::from_shooting)?;
    let shooter = Shooter::new(&problem).map_err(CliError::from_shooting)?;

    writeln!(out, "n,energy,expected,seconds").map_err(|e| CliError::Input(e.to_string()))?;
    let mut mismatches = Vec::new();
    for (n, expected) in BENCH_LEVELS {
        let start = Instant::now();
        let sol = shooter.solve(&config, n).map_err(CliError::from_shooting)?;
        let seconds = start.elapsed().as_secs_f64();
        writeln!(out, "{n},{:.7},{expected},{seconds:.4}", sol.energy).map_err(|e| CliError::Input(e.to_string()))?;
        if (sol.energy - expected).abs() > tolerance {
            mismatches.push(format!("n = {n}: {} vs {expected}", sol.energy));
        }
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("bench mismatch: {}", mismatches.join("; "))))
    }
}
