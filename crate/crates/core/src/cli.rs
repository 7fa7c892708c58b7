//! Command-line front end: `simulate`, `analyze`, `verify` and `generate`.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{Command, OutputFormat, RunConfig};
use crate::data::Scheme;
use crate::error::{Error, Result};
use crate::io::{self, AnalysisEntry, ColumnMap};
use crate::learners::Family;
use crate::link::LinkSpec;
use crate::methods::evaluate_methods;
use crate::rng::{derive_seed, tag};
use crate::sim::{self, CampaignSpec};
use crate::theory;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "covadj", version, about = "Covariate-adjusted treatment effect estimation for randomized trials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Monte Carlo comparison of the six estimators on a scenario.
    Simulate,
    /// Analyse a trial dataset (CSV with header).
    Analyze {
        /// Input CSV; overrides the `data` config key.
        data: Option<PathBuf>,
    },
    /// Check the population variance identities numerically.
    Verify,
    /// Write one simulated trial as CSV.
    Generate,
}

/// Command-line overrides of config keys.
#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Flat key = value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<String>,
    #[arg(long, global = true)]
    pub reps: Option<String>,
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// simple, stratified or both.
    #[arg(long, global = true)]
    pub scheme: Option<String>,
    #[arg(long = "block-size", global = true)]
    pub block_size: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// csv or text.
    #[arg(long, global = true)]
    pub format: Option<String>,
    #[arg(long, global = true)]
    pub level: Option<String>,
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// continuous or binary.
    #[arg(long, global = true)]
    pub outcome: Option<String>,
    /// Comma-separated method names.
    #[arg(long, global = true)]
    pub methods: Option<String>,
    #[arg(long, global = true)]
    pub workers: Option<String>,
    #[arg(long = "n-mc", global = true)]
    pub n_mc: Option<String>,
    /// Append the deliberately failing orthogonality check to `verify`.
    #[arg(long = "negative-control", global = true)]
    pub negative_control: bool,
    /// Any other key, as key=value; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let pairs = [
            ("seed", &self.seed),
            ("reps", &self.reps),
            ("n", &self.n),
            ("scheme", &self.scheme),
            ("block_size", &self.block_size),
            ("format", &self.format),
            ("level", &self.level),
            ("scenario", &self.scenario),
            ("outcome", &self.outcome),
            ("methods", &self.methods),
            ("workers", &self.workers),
            ("n_mc", &self.n_mc),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, v).map_err(|e| Error::Config(format!("--{}: {}", k.replace('_', "-"), e)))?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(out) = &self.out {
            cfg.out = Some(out.clone());
        }
        if self.negative_control {
            cfg.negative_control = true;
        }
        Ok(())
    }
}

/// Resolves the configuration for a parsed command line.
pub fn resolve(cli: &Cli) -> Result<(Command, RunConfig)> {
    let mut cfg = match &cli.overrides.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg)?;
    let command = match &cli.command {
        CliCommand::Simulate => Command::Simulate,
        CliCommand::Analyze { data } => {
            if let Some(d) = data {
                cfg.data = Some(d.clone());
            }
            Command::Analyze
        }
        CliCommand::Verify => Command::Verify,
        CliCommand::Generate => Command::Generate,
    };
    if let Some(c) = cfg.command {
        if c != command {
            return Err(Error::Config(format!("config file is for '{c}' but '{command}' was requested")));
        }
    }
    cfg.validate(command)?;
    Ok((command, cfg))
}

fn emit(cfg: &RunConfig, csv: String, text: String) -> Result<()> {
    let body = match cfg.format {
        OutputFormat::Csv => &csv,
        OutputFormat::Text => &text,
    };
    match &cfg.out {
        Some(path) => {
            write_file(path, body)?;
            print!("{text}");
        }
        None => print!("{body}"),
    }
    std::io::stdout().flush()?;
    Ok(())
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn campaign_from_config(cfg: &RunConfig) -> CampaignSpec {
    let mut spec = CampaignSpec::new(cfg.scenario, cfg.outcome, cfg.n, cfg.reps, cfg.seed);
    spec.schemes = cfg.schemes.clone();
    spec.block_size = cfg.block_size;
    spec.pi = cfg.pi;
    spec.methods = cfg.methods.clone();
    spec.options = cfg.method_options(spec.options.link, spec.options.family);
    spec.workers = cfg.workers;
    spec
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<i32> {
    let spec = campaign_from_config(cfg);
    eprintln!(
        "simulating scenario {} ({}), n = {}, {} replicates, seed {}",
        cfg.scenario, cfg.outcome, cfg.n, cfg.reps, cfg.seed
    );
    let mut spec = spec;
    spec.progress = true;
    let rows = sim::run_campaign(&spec)?;
    emit(cfg, io::metrics_csv(&rows), io::metrics_text(&rows))?;
    Ok(EXIT_OK)
}

pub fn cmd_generate(cfg: &RunConfig) -> Result<i32> {
    let spec = campaign_from_config(cfg);
    let scheme = *cfg.schemes.last().expect("validated non-empty");
    let ds = sim::generate_trial(&spec.scenario_spec(scheme), 0)?;
    let mut buf = Vec::new();
    io::write_dataset_csv(&ds, &mut buf)?;
    let text = String::from_utf8(buf).expect("csv is utf-8");
    match &cfg.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<i32> {
    eprintln!("verifying identities with {} draws per population", cfg.n_mc);
    let results = theory::default_suite(cfg.n_mc, cfg.seed, cfg.negative_control)?;
    emit(cfg, io::verify_csv(&results), io::verify_text(&results))?;
    Ok(if results.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_VERIFY })
}

/// Minimum complete cases per arm for `analyze`.
pub const MIN_PER_ARM: usize = 10;

pub fn cmd_analyze(cfg: &RunConfig) -> Result<i32> {
    let path = cfg.data.as_ref().ok_or_else(|| Error::Config("analyze needs a data file".into()))?;
    let file = std::fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let map = ColumnMap {
        outcomes: cfg.outcome_columns.clone(),
        treatment: cfg.treatment_column.clone(),
        stratum: cfg.stratum_column.clone(),
        covariates: cfg.covariate_columns.clone(),
    };
    for r in &cfg.rescale {
        if !map.outcomes.contains(&r.column) {
            return Err(Error::Config(format!("rescale names '{}', which is not an outcome column", r.column)));
        }
    }
    let mut data = io::read_analysis_csv(file, &map)?;
    eprintln!("{} complete cases, {} rows dropped for missing values", data.assignments.len(), data.dropped);
    let n1 = data.assignments.iter().filter(|&&a| a == 1).count();
    let n0 = data.assignments.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::Data(format!("treatment arm absent: {n1} treated, {n0} controls")));
    }
    if n0 < MIN_PER_ARM || n1 < MIN_PER_ARM {
        return Err(Error::Data(format!("at least {MIN_PER_ARM} complete cases per arm required, got {n1} treated, {n0} controls")));
    }
    for r in &cfg.rescale {
        let k = data.outcome_names.iter().position(|c| c == &r.column).expect("checked above");
        for y in &mut data.outcomes[k] {
            *y = r.apply(*y);
        }
    }
    let scheme = if cfg.schemes == [Scheme::Simple] { Scheme::Simple } else { Scheme::StratifiedBlock };
    let link = LinkSpec { kind: cfg.link };
    let mut entries = Vec::new();
    let mut any_failed = false;
    for (k, name) in data.outcome_names.iter().enumerate() {
        let ds = data.dataset(k, cfg.pi, scheme)?;
        let binary = ds.subjects.iter().all(|s| s.outcome == 0.0 || s.outcome == 1.0);
        let family = if binary && cfg.link == crate::link::LinkKind::Logit { Family::Binomial } else { Family::Gaussian };
        let opts = cfg.method_options(link, family);
        let seed = derive_seed(cfg.seed, &[tag::LEARNING, k as u64]);
        for (m, res) in cfg.methods.iter().zip(evaluate_methods(&ds, &cfg.methods, &opts, seed)) {
            let result = match res {
                Ok(o) => Ok((o.report, m.uses_corrected_se(scheme), o.fallback)),
                Err(e) => {
                    any_failed = true;
                    Err(e.to_string())
                }
            };
            entries.push(AnalysisEntry { outcome: name.clone(), n: ds.n(), method: m.to_string(), result });
        }
    }
    emit(cfg, io::analysis_csv(&entries), io::analysis_text(&entries, cfg.level))?;
    Ok(if any_failed { EXIT_ESTIMATION } else { EXIT_OK })
}

/// Maps an error to its exit status.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Schema(_) | Error::Data(_) | Error::Io(_) => EXIT_CONFIG,
        _ => EXIT_ESTIMATION,
    }
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    let outcome = resolve(&cli).and_then(|(command, cfg)| match command {
        Command::Simulate => cmd_simulate(&cfg),
        Command::Analyze => cmd_analyze(&cfg),
        Command::Verify => cmd_verify(&cfg),
        Command::Generate => cmd_generate(&cfg),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
