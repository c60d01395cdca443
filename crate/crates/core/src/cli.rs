//! Batch command-line front end.
//!
//! Exit codes: 0 success, 1 check failure, 2 usage error, 3 numerical
//! failure. Flags override `key = value` entries of `--config`, which
//! override the built-in defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::galerkin::DomainKind;
use crate::gradient::EpsilonSchedule;
use crate::kernels::Vec3;
use crate::mesh::{load_mesh, make_icosphere, MeshFormat, SurfaceMesh};
use crate::verify::{
    appendix_check_2d, appendix_check_3d, run_gradient_test, run_homogeneous_test, run_nonhomogeneous_tests,
    AppendixSettings, DriverSettings, ErrorTable, GradientProblem, GridSpec, Provenance,
};

#[derive(Debug, Parser)]
#[command(name = "nhstokes", version, about = "Boundary integral solver for the 3D Stokes equation with body forces")]
pub struct Cli {
    /// Plain `key = value` file supplying defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "STOKES_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Finite-difference checks of the kernel identities.
    Verify(VerifyArgs),
    /// Homogeneous mixed problem with point-force data.
    Solve(SolveArgs),
    /// Nonhomogeneous problem with a grid volume integral.
    Volume(VolumeArgs),
    /// Boundary velocity gradients.
    Gradients(GradientArgs),
    /// Error tables across several subdivision levels.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Args)]
pub struct MeshArgs {
    /// Icosphere subdivision level.
    #[arg(long)]
    pub subdiv: Option<u32>,
    /// OFF or OBJ mesh file instead of an icosphere.
    #[arg(long, conflicts_with = "subdiv")]
    pub mesh: Option<PathBuf>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub singular_order: Option<usize>,
    #[arg(long)]
    pub regular_degree: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, hide = true)]
    pub sabotage_h: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    pub source: Option<Vec3>,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct VolumeArgs {
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    pub source: Option<Vec3>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long = "box")]
    pub half_width: Option<f64>,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct GradientArgs {
    #[arg(long, value_parser = GradientProblem::from_str)]
    pub problem: Option<GradientProblem>,
    /// Offsets as fractions of the element edge length, largest first.
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long = "box")]
    pub half_width: Option<f64>,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub suite: Option<String>,
    /// Comma-separated subdivision levels.
    #[arg(long)]
    pub subdivs: Option<String>,
    #[arg(long)]
    pub case: Option<String>,
    #[arg(long, allow_hyphen_values = true, value_parser = parse_point)]
    pub source: Option<Vec3>,
    #[arg(long, value_parser = GradientProblem::from_str)]
    pub problem: Option<GradientProblem>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long = "box")]
    pub half_width: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `x,y,z`.
pub fn parse_point(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z but got '{s}'"));
    }
    let mut v = Vec3::zeros();
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.parse::<f64>().map_err(|_| format!("'{p}' is not a number"))?;
        if !slot.is_finite() {
            return Err(format!("'{p}' is not finite"));
        }
    }
    Ok(v)
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("bad list entry '{p}' in '{s}'")))
        .collect()
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Run(e) => write!(f, "error: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Run(e.into())
    }
}

const CONFIG_KEYS: [&str; 17] = [
    "samples", "seed", "out", "case", "source", "subdiv", "mesh", "mu", "singular_order", "regular_degree", "grid",
    "box", "problem", "epsilon", "suite", "subdivs", "threads",
];

/// Resolved settings: flags, then config file, then defaults. Every value
/// actually used is recorded for the report header.
struct Resolver {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

impl Resolver {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            for (i, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!("config line {}: expected key = value", i + 1)));
                };
                let key = k.trim().replace('-', "_");
                if !CONFIG_KEYS.contains(&key.as_str()) {
                    return Err(CliError::Usage(format!("config line {}: unknown key '{key}'", i + 1)));
                }
                file.insert(key, v.trim().to_string());
            }
        }
        Ok(Self {
            file,
            used: BTreeMap::new(),
        })
    }

    fn optional<T>(&mut self, key: &str, flag: Option<T>, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, CliError>
    where
        T: Clone,
    {
        let (value, text) = match flag {
            Some(v) => (Some(v), None),
            None => match self.file.get(key) {
                Some(s) => {
                    let v = parse(s).map_err(|e| CliError::Usage(format!("config key {key}: {e}")))?;
                    (Some(v), Some(s.clone()))
                }
                None => (None, None),
            },
        };
        if let Some(t) = text {
            self.used.insert(key.into(), t);
        }
        Ok(value)
    }

    fn get<T>(&mut self, key: &str, flag: Option<T>, default: Option<T>, parse: impl Fn(&str) -> Result<T, String>) -> Result<T, CliError>
    where
        T: Clone + std::fmt::Debug,
    {
        let from_flag = flag.is_some();
        let v = self.optional(key, flag, parse)?.or(default);
        let v = v.ok_or_else(|| CliError::Usage(format!("--{} is required", key.replace('_', "-"))))?;
        if from_flag || !self.used.contains_key(key) {
            self.used.insert(key.into(), echo(&v));
        }
        Ok(v)
    }
}

impl Resolver {
    fn point(&mut self, key: &str, flag: Option<Vec3>, default: Option<Vec3>) -> Result<Vec3, CliError> {
        let v = self.get(key, flag, default, parse_point)?;
        self.used.insert(key.into(), format!("{},{},{}", v[0], v[1], v[2]));
        Ok(v)
    }
}

fn echo<T: std::fmt::Debug>(v: &T) -> String {
    let s = format!("{v:?}");
    s.trim_matches('"').to_string()
}

fn parse_with<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse::<T>().map_err(|_| format!("cannot parse '{s}'"))
}

fn positive(key: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Usage(format!("{key} must be positive, got {v}")))
    }
}

struct MeshChoice {
    mesh: SurfaceMesh,
    label: String,
}

fn resolve_mesh(r: &mut Resolver, args: &MeshArgs, default_subdiv: u32) -> Result<MeshChoice, CliError> {
    let path = r.optional("mesh", args.mesh.clone(), |s| Ok(PathBuf::from(s)))?;
    if let Some(path) = path {
        r.used.insert("mesh".into(), path.display().to_string());
        if !path.exists() {
            return Err(CliError::Usage(format!("mesh file {} does not exist", path.display())));
        }
        let format = MeshFormat::from_path(&path)
            .ok_or_else(|| CliError::Usage(format!("unknown mesh format for {}", path.display())))?;
        let mesh = load_mesh(&path, format)?;
        return Ok(MeshChoice {
            mesh,
            label: path.display().to_string(),
        });
    }
    let subdiv = r.get("subdiv", args.subdiv, Some(default_subdiv), parse_with)?;
    let mesh = make_icosphere(subdiv, 1.0)?;
    Ok(MeshChoice {
        mesh,
        label: format!("icosphere({subdiv})"),
    })
}

fn driver_settings(r: &mut Resolver, args: &MeshArgs) -> Result<DriverSettings, CliError> {
    let mut s = DriverSettings::default();
    s.assembly.pair.singular_order =
        r.get("singular_order", args.singular_order, Some(s.assembly.pair.singular_order), parse_with)?;
    s.assembly.pair.regular_degree =
        r.get("regular_degree", args.regular_degree, Some(s.assembly.pair.regular_degree), parse_with)?;
    s.seed = r.get("seed", args.seed, Some(s.seed), parse_with)?;
    if s.assembly.pair.singular_order == 0 {
        return Err(CliError::Usage("singular_order must be at least 1".into()));
    }
    Ok(s)
}

fn attach(table: &mut ErrorTable, command: &str, r: &Resolver, mesh_label: &str) {
    table.provenance.insert("command".into(), command.into());
    table.provenance.insert("mesh".into(), mesh_label.into());
    for (k, v) in &r.used {
        if k != "out" && k != "threads" {
            table.provenance.insert(format!("config.{k}"), v.clone());
        }
    }
}

fn emit(text: &str, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn emit_table(table: &ErrorTable, out: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => table.to_json(),
        _ => table.to_csv(),
    };
    emit(&text, out, stdout)
}

fn cmd_verify(r: &mut Resolver, args: &VerifyArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let defaults = AppendixSettings::default();
    let samples = r.get("samples", args.samples, Some(defaults.samples), parse_with)?;
    if samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let settings = AppendixSettings {
        samples,
        seed: r.get("seed", args.seed, Some(defaults.seed), parse_with)?,
        h_scale: r.get("sabotage_h", args.sabotage_h, Some(1.0), parse_with)?,
        ..defaults
    };
    let mut report = appendix_check_3d(&settings)?;
    report.merge("2d", appendix_check_2d(&settings)?);
    report.provenance.insert("command".into(), "verify".into());
    for c in &report.checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        writeln!(stdout, "{status} {:<28} residual {:.3e} (tol {:.0e})", c.name, c.residual, c.tolerance)
            .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let out = r.optional("out", args.out.clone(), |s| Ok(PathBuf::from(s)))?;
    if let Some(path) = out {
        let text = match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => report.to_csv(),
            _ => report.to_json(),
        };
        emit(&text, Some(&path), stdout)?;
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_solve(r: &mut Resolver, args: &SolveArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let case = r.get("case", args.case.clone(), Some("interior".into()), |s| Ok(s.to_string()))?;
    let domain = DomainKind::from_str(&case).map_err(CliError::Usage)?;
    let source = r.point("source", args.source, None)?;
    let mu = positive("mu", r.get("mu", args.mesh.mu, Some(1.0), parse_with)?)?;
    let settings = driver_settings(r, &args.mesh)?;
    let choice = resolve_mesh(r, &args.mesh, 2)?;
    let out = r.optional("out", args.mesh.out.clone(), |s| Ok(PathBuf::from(s)))?;
    let mut table = run_homogeneous_test(&choice.mesh, &source, domain, mu, &settings)?;
    attach(&mut table, "solve", r, &choice.label);
    emit_table(&table, out.as_deref(), stdout)?;
    Ok(0)
}

fn grid_spec(r: &mut Resolver, grid: Option<usize>, half_width: Option<f64>) -> Result<GridSpec, CliError> {
    let d = GridSpec::default();
    let cells = r.get("grid", grid, Some(d.cells), parse_with)?;
    if cells == 0 {
        return Err(CliError::Usage("--grid must be at least 1".into()));
    }
    let half_width = positive("box", r.get("box", half_width, Some(d.half_width), parse_with)?)?;
    Ok(GridSpec { half_width, cells })
}

fn cmd_volume(r: &mut Resolver, args: &VolumeArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let source = r.point("source", args.source, None)?;
    let grid = grid_spec(r, args.grid, args.half_width)?;
    let mu = positive("mu", r.get("mu", args.mesh.mu, Some(1.0), parse_with)?)?;
    let settings = driver_settings(r, &args.mesh)?;
    let choice = resolve_mesh(r, &args.mesh, 2)?;
    let out = r.optional("out", args.mesh.out.clone(), |s| Ok(PathBuf::from(s)))?;
    let mut table = run_nonhomogeneous_tests(&choice.mesh, &grid, &[source], mu, &settings)?.remove(0);
    attach(&mut table, "volume", r, &choice.label);
    emit_table(&table, out.as_deref(), stdout)?;
    Ok(0)
}

fn epsilon(r: &mut Resolver, flag: Option<String>) -> Result<EpsilonSchedule, CliError> {
    let default = EpsilonSchedule::default();
    let text = r.get(
        "epsilon",
        flag,
        Some(
            default
                .factors()
                .iter()
                .map(|f| f.to_string())
                .collect::<Vec<_>>()
                .join(","),
        ),
        |s| Ok(s.to_string()),
    )?;
    let factors = parse_list::<f64>(&text).map_err(CliError::Usage)?;
    EpsilonSchedule::new(factors).map_err(|e| CliError::Usage(e.to_string()))
}

fn cmd_gradients(r: &mut Resolver, args: &GradientArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let problem = r.get("problem", args.problem, None, GradientProblem::from_str)?;
    let grid = grid_spec(r, args.grid, args.half_width)?;
    let mu = positive("mu", r.get("mu", args.mesh.mu, Some(1.0), parse_with)?)?;
    let mut settings = driver_settings(r, &args.mesh)?;
    settings.gradient.schedule = epsilon(r, args.epsilon.clone())?;
    let choice = resolve_mesh(r, &args.mesh, 2)?;
    let out = r.optional("out", args.mesh.out.clone(), |s| Ok(PathBuf::from(s)))?;
    let report = run_gradient_test(problem, &choice.mesh, mu, &grid, &settings)?;
    let mut table = report.table;
    table.provenance.insert("divergence_rms".into(), format!("{:e}", report.divergence));
    attach(&mut table, "gradients", r, &choice.label);
    emit_table(&table, out.as_deref(), stdout)?;
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Suite {
    Homogeneous,
    Volume,
    Gradients,
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "homogeneous" => Ok(Self::Homogeneous),
            "volume" => Ok(Self::Volume),
            "gradients" => Ok(Self::Gradients),
            "" => Err("suite name is empty".into()),
            other => Err(format!("unknown suite '{other}' (expected homogeneous, volume or gradients)")),
        }
    }
}

fn cmd_convergence(r: &mut Resolver, args: &ConvergenceArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let suite_name = r.get("suite", args.suite.clone(), None, |s| Ok(s.to_string()))?;
    let suite = Suite::from_str(suite_name.trim()).map_err(CliError::Usage)?;
    let default_levels = match suite {
        Suite::Homogeneous => "1,2,3",
        _ => "1,2",
    };
    let levels_text = r.get("subdivs", args.subdivs.clone(), Some(default_levels.to_string()), |s| Ok(s.to_string()))?;
    let levels = parse_list::<u32>(&levels_text).map_err(CliError::Usage)?;
    let mu = positive("mu", r.get("mu", args.mu, Some(1.0), parse_with)?)?;
    let mut settings = DriverSettings::default();
    settings.seed = r.get("seed", args.seed, Some(settings.seed), parse_with)?;
    let mut runs: Vec<(u32, ErrorTable)> = Vec::new();
    let mut provenance = Provenance::new();
    match suite {
        Suite::Homogeneous => {
            let case = r.get("case", args.case.clone(), Some("interior".into()), |s| Ok(s.to_string()))?;
            let domain = DomainKind::from_str(&case).map_err(CliError::Usage)?;
            let default_source = match domain {
                DomainKind::Interior => Vec3::new(-2.0, 0.0, 0.0),
                DomainKind::Exterior => Vec3::new(0.0, 0.7, 0.0),
            };
            let source = r.point("source", args.source, Some(default_source))?;
            for &k in &levels {
                let mesh = make_icosphere(k, 1.0)?;
                runs.push((k, run_homogeneous_test(&mesh, &source, domain, mu, &settings)?));
            }
        }
        Suite::Volume => {
            let grid = grid_spec(r, args.grid, args.half_width)?;
            let source = r.point("source", args.source, Some(Vec3::new(0.0, 0.0, 1.2)))?;
            for &k in &levels {
                let mesh = make_icosphere(k, 1.0)?;
                runs.push((k, run_nonhomogeneous_tests(&mesh, &grid, &[source], mu, &settings)?.remove(0)));
            }
        }
        Suite::Gradients => {
            let grid = grid_spec(r, args.grid, args.half_width)?;
            let problem = r.get("problem", args.problem, Some(GradientProblem::A), GradientProblem::from_str)?;
            for &k in &levels {
                let mesh = make_icosphere(k, 1.0)?;
                runs.push((k, run_gradient_test(problem, &mesh, mu, &grid, &settings)?.table));
            }
        }
    }
    let out = r.optional("out", args.out.clone(), |s| Ok(PathBuf::from(s)))?;
    provenance.insert("command".into(), "convergence".into());
    if let Some((_, first)) = runs.first() {
        for (k, v) in &first.provenance {
            if !["elements", "nodes", "reference_mesh"].contains(&k.as_str()) {
                provenance.insert(k.clone(), v.clone());
            }
        }
    }
    for (k, v) in &r.used {
        if k != "out" && k != "threads" {
            provenance.insert(format!("config.{k}"), v.clone());
        }
    }
    let mut text = String::new();
    for (k, v) in &provenance {
        text.push_str(&format!("# {k} = {v}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["subdiv", "elements", "field", "component", "error", "decay"]).map_err(io)?;
    for (i, (k, table)) in runs.iter().enumerate() {
        for row in &table.rows {
            let decay = i
                .checked_sub(1)
                .and_then(|j| runs[j].1.get(&row.field, &row.component))
                .map(|prev| format!("{:.3}", prev.error / row.error))
                .unwrap_or_default();
            w.write_record([
                k.to_string(),
                table.provenance.get("elements").cloned().unwrap_or_default(),
                row.field.clone(),
                row.component.clone(),
                format!("{:e}", row.error),
                decay,
            ])
            .map_err(io)?;
        }
    }
    text.push_str(&String::from_utf8(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?).unwrap());
    emit(&text, out.as_deref(), stdout)?;
    Ok(0)
}

/// Runs the CLI with explicit arguments and output streams, returning the
/// exit code.
pub fn run_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = (|| {
        let mut r = Resolver::load(cli.config.as_deref())?;
        let threads = r.optional("threads", cli.threads, parse_with::<usize>)?;
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = threads {
            if n == 0 {
                return Err(CliError::Usage("--threads must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
        let (code, buffer) = pool.install(|| {
            let mut buffer = Vec::new();
            let code = match &cli.command {
                Command::Verify(a) => cmd_verify(&mut r, a, &mut buffer),
                Command::Solve(a) => cmd_solve(&mut r, a, &mut buffer),
                Command::Volume(a) => cmd_volume(&mut r, a, &mut buffer),
                Command::Gradients(a) => cmd_gradients(&mut r, a, &mut buffer),
                Command::Convergence(a) => cmd_convergence(&mut r, a, &mut buffer),
            };
            (code, buffer)
        });
        stdout.write_all(&buffer).map_err(|e| CliError::Io(e.to_string()))?;
        code
    })();
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

/// Entry point for the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_with(std::iter::once("nhstokes").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn points_parse() {
        assert_eq!(parse_point("-2,0,0.5").unwrap(), Vec3::new(-2.0, 0.0, 0.5));
        assert!(parse_point("1,2").is_err());
        assert!(parse_point("a,b,c").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(&["verify", "--samples", "0"]).0, 2);
        assert_eq!(run(&["solve", "--source", "1,2", "--subdiv", "1"]).0, 2);
        assert_eq!(run(&["gradients", "--problem", "d", "--subdiv", "1"]).0, 2);
        assert_eq!(run(&["convergence", "--suite", ""]).0, 2);
        assert_eq!(run(&["solve", "--source", "-2,0,0", "--subdiv", "7"]).0, 2);
        assert_eq!(run(&["frobnicate"]).0, 2);
    }

    #[test]
    fn verify_passes_and_sabotage_fails() {
        let (code, out, _) = run(&["verify", "--samples", "10"]);
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("PASS"));
        let (code, out, _) = run(&["verify", "--samples", "10", "--sabotage-h", "1.01"]);
        assert_eq!(code, 1);
        assert!(out.contains("FAIL"));
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# comment\nsamples = 0\n").unwrap();
        let c = cfg.to_str().unwrap();
        assert_eq!(run(&["--config", c, "verify"]).0, 2);
        assert_eq!(run(&["--config", c, "verify", "--samples", "5"]).0, 0);
        std::fs::write(&cfg, "nonsense = 1\n").unwrap();
        assert_eq!(run(&["--config", c, "verify"]).0, 2);
        assert_eq!(run(&["--config", "/nonexistent/run.cfg", "verify"]).0, 2);
    }
}
