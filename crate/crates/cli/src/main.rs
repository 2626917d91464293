//! `fracgreen` command-line front end.

mod commands;
mod output;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fracgreen::{DomainSpec, FieldSpec, WosConfig};

use spec::{Command, RunSpec};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<fracgreen::Error> for CliError {
    fn from(e: fracgreen::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "fracgreen", version, about = "Fractional Green operators on bounded domains")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "FRACGREEN_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Closed-form torsion function and its s-derivative on a ball lattice.
    Torsion(SpecArgs),
    /// The geometry functional h on the interior lattice.
    Hfield(SpecArgs),
    /// Norm bounds over an s-grid.
    Bounds(SpecArgs),
    /// Monotonicity certificate for G_s f.
    Certify(SpecArgs),
    /// Walk-on-spheres estimate of G_s f.
    Solve(SpecArgs),
    /// Estimate of the s-derivative of G_s f.
    Derivative(SpecArgs),
}

#[derive(Args, Default)]
struct SpecArgs {
    /// Run spec file; replaces every other flag.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Domain as JSON, e.g. '{"ball":{"center":[0,0],"radius":1}}'.
    #[arg(long)]
    domain: Option<String>,
    /// Source as JSON, e.g. '{"kind":"const","value":1}'.
    #[arg(long)]
    f: Option<String>,
    /// Order(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    s: Vec<f64>,
    #[arg(long)]
    lattice_spacing: Option<f64>,
    /// Density radii, comma separated.
    #[arg(long, value_delimiter = ',')]
    radii: Vec<f64>,
    /// Evaluation point, comma separated coordinates; repeatable.
    #[arg(long = "point", allow_hyphen_values = true)]
    points: Vec<String>,
    #[arg(long)]
    tol: Option<f64>,
    /// Walk configuration as JSON; missing fields take defaults.
    #[arg(long)]
    wos: Option<String>,
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn json_arg<T: serde::de::DeserializeOwned>(name: &str, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(format!("--{name}: {e}")))
}

fn build_spec(command: Command, a: SpecArgs) -> Result<RunSpec, CliError> {
    if let Some(path) = &a.spec {
        let spec = RunSpec::load(path)?;
        if spec.command != command {
            return Err(CliError::Validation(format!(
                "spec file is for '{}', not '{}'",
                spec.command.name(),
                command.name()
            )));
        }
        return Ok(spec);
    }
    let domain: DomainSpec = match &a.domain {
        Some(t) => json_arg("domain", t)?,
        None => return Err(CliError::Validation("--domain or --spec is required".into())),
    };
    let f: FieldSpec = match &a.f {
        Some(t) => json_arg("f", t)?,
        None => FieldSpec::constant(1.0),
    };
    let mut wos: WosConfig = match &a.wos {
        Some(t) => json_arg("wos", t)?,
        None => WosConfig::default(),
    };
    if let Some(n) = a.samples {
        wos.samples = n;
    }
    if let Some(seed) = a.seed {
        wos.seed = seed;
    }
    let points = a
        .points
        .iter()
        .map(|p| {
            p.split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map_err(|e| CliError::Validation(format!("--point {p}: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunSpec {
        command,
        domain,
        f,
        s: a.s,
        lattice_spacing: a.lattice_spacing,
        radii: a.radii,
        points,
        tol: a.tol.unwrap_or(1e-6),
        wos,
        output: a.output,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let (command, args) = match cli.command {
        Sub::Torsion(a) => (Command::Torsion, a),
        Sub::Hfield(a) => (Command::Hfield, a),
        Sub::Bounds(a) => (Command::Bounds, a),
        Sub::Certify(a) => (Command::Certify, a),
        Sub::Solve(a) => (Command::Solve, a),
        Sub::Derivative(a) => (Command::Derivative, a),
    };
    let spec = build_spec(command, args)?;
    commands::dispatch(&spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracgreen: {e}");
            ExitCode::from(e.code())
        }
    }
}
