//! Command-line front end for `bsdelab-core`.
//!
//! Every subcommand reads an optional config file (`--config`, TOML or
//! JSON), applies flag overrides on top, validates, runs, and writes its
//! outputs plus a `run.json` record into the output directory
//! (`--out`, else the config's `output`, else `$BSDELAB_OUT`, else
//! `./bsdelab-out`).
//!
//! Exit codes: 0 success, 2 config error, 3 numeric or I/O failure.

pub mod config;
pub mod plan;
pub mod run;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use bsdelab_core::{Scheme, Selector};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{Command, ExperimentConfig};
pub use plan::{validate, Diagnostic};
pub use run::{run, RunRecord};

pub const OUT_ENV: &str = "BSDELAB_OUT";
pub const DEFAULT_OUT: &str = "bsdelab-out";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("{0}")]
    Numeric(#[from] bsdelab_core::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CliError::Config(vec![msg.into()])
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

pub(crate) fn numeric<E: Into<bsdelab_core::Error>>(e: E) -> CliError {
    CliError::Numeric(e.into())
}

#[derive(Debug, Parser)]
#[command(name = "bsdelab", version, about = "Numerical experiments for BSDEs with continuous drivers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Solve on the lattice; Lipschitz drivers directly, others via envelopes.
    Solve(Overrides),
    /// Tabulate lower/upper envelopes over a y grid.
    Envelope(Overrides),
    /// Dependence curve under terminal or driver perturbations.
    Dependence(Overrides),
    /// Closed-form curve for g = 3|y|^(2/3), xi_n = 1/n.
    Counterexample(Overrides),
    /// Gap between minimal and maximal solutions.
    Uniqueness(Overrides),
    /// Check a config without running it.
    Validate {
        /// Command to validate for, overriding the config file.
        #[arg(long = "command", value_enum)]
        target: Option<Command>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// Config file (TOML or JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Catalog name, e.g. `remark33`, `linear(1,0)`, or an expression in t, y, z.
    #[arg(long)]
    pub driver: Option<String>,
    /// Terminal value as an expression in w.
    #[arg(long, allow_negative_numbers = true)]
    pub terminal: Option<String>,
    /// Linear-growth constant for expression drivers.
    #[arg(long = "A")]
    pub growth: Option<f64>,
    /// Lipschitz constant for expression drivers.
    #[arg(long = "K")]
    pub lipschitz: Option<f64>,
    #[arg(long = "T")]
    pub horizon: Option<f64>,
    #[arg(long = "N")]
    pub steps: Option<usize>,
    /// Envelope indices, comma separated.
    #[arg(long = "m", value_delimiter = ',')]
    pub m: Vec<f64>,
    #[arg(long)]
    pub scheme: Option<Scheme>,
    /// Envelope grid step.
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub selector: Option<Selector>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Perturbed terminal value; repeat for each curve point.
    #[arg(long, allow_negative_numbers = true)]
    pub xi: Vec<String>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long = "lambda", value_delimiter = ',')]
    pub lambdas: Vec<f64>,
    #[arg(long)]
    pub lam0: Option<f64>,
    /// Counterexample indices, comma separated.
    #[arg(long = "n", value_delimiter = ',')]
    pub ns: Vec<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub y_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub y_max: Option<f64>,
    #[arg(long)]
    pub y_step: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub z: Vec<f64>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub max_enum_n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Load the config file (if any) for `command` and apply the flags.
    pub fn build(&self, command: Option<Command>) -> Result<ExperimentConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path, command)?,
            None => ExperimentConfig::new(command.unwrap_or(Command::Solve)),
        };
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = self.$field.clone() {
                    $target = v;
                }
            };
        }
        set!(driver, c.driver);
        set!(terminal, c.terminal);
        set!(horizon, c.horizon);
        set!(scheme, c.scheme);
        set!(selector, c.selector);
        set!(threshold, c.threshold);
        set!(seed, c.sampling.seed);
        set!(samples, c.sampling.sample_count);
        set!(max_enum_n, c.sampling.max_enum_n);
        if self.growth.is_some() {
            c.growth = self.growth;
        }
        if self.lipschitz.is_some() {
            c.lipschitz = self.lipschitz;
        }
        if self.steps.is_some() {
            c.steps = self.steps;
        }
        if self.h.is_some() {
            c.h = self.h;
        }
        if !self.m.is_empty() {
            c.m_schedule = Some(self.m.clone());
        }
        if !self.ns.is_empty() {
            c.ns = self.ns.clone();
        }
        if !self.xi.is_empty() || self.family.is_some() || !self.lambdas.is_empty() || self.lam0.is_some() {
            let p = c.perturbation.get_or_insert(config::Perturbation {
                xi: Vec::new(),
                family: None,
                lambdas: Vec::new(),
                lam0: None,
                lam_domain: None,
            });
            if !self.xi.is_empty() {
                p.xi = self.xi.clone();
            }
            if self.family.is_some() {
                p.family = self.family.clone();
            }
            if !self.lambdas.is_empty() {
                p.lambdas = self.lambdas.clone();
            }
            if self.lam0.is_some() {
                p.lam0 = self.lam0;
            }
        }
        if self.y_min.is_some()
            || self.y_max.is_some()
            || self.y_step.is_some()
            || !self.z.is_empty()
            || self.t.is_some()
        {
            let g = c.grid.get_or_insert_with(Default::default);
            set!(y_min, g.y_min);
            set!(y_max, g.y_max);
            set!(y_step, g.y_step);
            set!(t, g.t);
            if !self.z.is_empty() {
                g.z = self.z.clone();
            }
        }
        if self.out.is_some() {
            c.output = self.out.clone();
        }
        Ok(c)
    }
}

/// `--out`, then the config's `output`, then `$BSDELAB_OUT`, then `./bsdelab-out`.
pub fn output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .output
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Parse arguments, run, print a short report; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, overrides) = match &cli.command {
        Sub::Solve(o) => (Some(Command::Solve), o),
        Sub::Envelope(o) => (Some(Command::Envelope), o),
        Sub::Dependence(o) => (Some(Command::Dependence), o),
        Sub::Counterexample(o) => (Some(Command::Counterexample), o),
        Sub::Uniqueness(o) => (Some(Command::Uniqueness), o),
        Sub::Validate { target, overrides } => {
            return match overrides.build(*target) {
                Ok(config) => {
                    let diags = validate(&config);
                    if diags.is_empty() {
                        println!("ok");
                        0
                    } else {
                        for d in diags {
                            eprintln!("{d}");
                        }
                        2
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            };
        }
    };
    let result = overrides.build(command).and_then(|config| {
        let dir = output_dir(&config);
        run(&config, &dir).map(|record| (dir, record))
    });
    match result {
        Ok((dir, record)) => {
            for f in &record.outputs {
                println!("{}", dir.join(&f.file).display());
            }
            println!("{}", dir.join(run::RUN_RECORD).display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
