//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Unknown keys, duplicate keys and malformed values are errors.
//! Serialising a config and parsing the result gives the same config.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use crate::data::Scheme;
use crate::error::{Error, Result};
use crate::learners::{CartParams, Family, LearnerKind, SuperLearnerSpec};
use crate::link::{LinkKind, LinkSpec};
use crate::methods::{MethodOptions, MethodSpec};
use crate::randomization::RandomizationPlan;
use crate::scenario::{OutcomeType, Scenario};
use crate::theory::MIN_MC_DRAWS;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Analyze,
    Verify,
    Generate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Analyze => "analyze",
            Command::Verify => "verify",
            Command::Generate => "generate",
        })
    }
}

impl FromStr for Command {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Command::Simulate),
            "analyze" => Ok(Command::Analyze),
            "verify" => Ok(Command::Verify),
            "generate" => Ok(Command::Generate),
            _ => Err(Error::Config(format!("unknown command '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Text,
}

impl fmt::Display for OutputFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Text => "text",
        })
    }
}

impl FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "text" => Ok(OutputFormat::Text),
            _ => Err(Error::Config(format!("unknown format '{s}' (expected csv or text)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerChoice {
    SuperLearner,
    Ols,
    OlsInteractions,
    AdditiveBasis,
    Cart,
}

impl LearnerChoice {
    pub fn kind(self, folds: usize) -> LearnerKind {
        match self {
            LearnerChoice::SuperLearner => {
                LearnerKind::SuperLearner(SuperLearnerSpec { folds, ..SuperLearnerSpec::standard() })
            }
            LearnerChoice::Ols => LearnerKind::Ols,
            LearnerChoice::OlsInteractions => LearnerKind::OlsInteractions,
            LearnerChoice::AdditiveBasis => LearnerKind::AdditiveBasis,
            LearnerChoice::Cart => LearnerKind::Cart(CartParams::default()),
        }
    }
}

impl fmt::Display for LearnerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerChoice::SuperLearner => "super_learner",
            LearnerChoice::Ols => "ols",
            LearnerChoice::OlsInteractions => "ols_interactions",
            LearnerChoice::AdditiveBasis => "additive_basis",
            LearnerChoice::Cart => "cart",
        })
    }
}

impl FromStr for LearnerChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "super_learner" => Ok(LearnerChoice::SuperLearner),
            "ols" => Ok(LearnerChoice::Ols),
            "ols_interactions" => Ok(LearnerChoice::OlsInteractions),
            "additive_basis" => Ok(LearnerChoice::AdditiveBasis),
            "cart" => Ok(LearnerChoice::Cart),
            _ => Err(Error::Config(format!("unknown learner '{s}'"))),
        }
    }
}

/// Linear map of an outcome column onto `[0, 1]`, optionally reversed.
#[derive(Debug, Clone, PartialEq)]
pub struct Rescale {
    pub column: String,
    pub min: f64,
    pub max: f64,
    pub flip: bool,
}

impl Rescale {
    pub fn apply(&self, y: f64) -> f64 {
        let u = (y - self.min) / (self.max - self.min);
        if self.flip {
            1.0 - u
        } else {
            u
        }
    }
}

impl fmt::Display for Rescale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.column, self.min, self.max)?;
        if self.flip {
            f.write_str(":flip")?;
        }
        Ok(())
    }
}

impl FromStr for Rescale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config(format!("rescale entry '{s}' must be column:min:max[:flip]"));
        if !(3..=4).contains(&parts.len()) || parts[0].is_empty() {
            return Err(bad());
        }
        let flip = match parts.get(3) {
            None => false,
            Some(&"flip") => true,
            Some(_) => return Err(bad()),
        };
        Ok(Rescale { column: parts[0].into(), min: parse_f64("rescale", parts[1])?, max: parse_f64("rescale", parts[2])?, flip })
    }
}

/// Everything a run needs; see [`RunConfig::KEYS`] for the file keys.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub scenario: Scenario,
    pub outcome: OutcomeType,
    pub methods: Vec<MethodSpec>,
    pub schemes: Vec<Scheme>,
    pub block_size: usize,
    pub pi: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    /// Cross-fitting folds for the augmentation variance; 0 disables.
    pub folds: usize,
    pub learner: LearnerChoice,
    pub level: f64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub n_mc: usize,
    pub negative_control: bool,
    pub data: Option<PathBuf>,
    pub outcome_columns: Vec<String>,
    pub treatment_column: String,
    pub stratum_column: String,
    /// Empty means every column named `w<digits>`.
    pub covariate_columns: Vec<String>,
    pub link: LinkKind,
    pub rescale: Vec<Rescale>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            scenario: Scenario::A,
            outcome: OutcomeType::Continuous,
            methods: MethodSpec::ALL.to_vec(),
            schemes: vec![Scheme::Simple, Scheme::StratifiedBlock],
            block_size: 4,
            pi: 0.5,
            n: 200,
            reps: 2500,
            seed: 1,
            folds: 5,
            learner: LearnerChoice::SuperLearner,
            level: 0.95,
            workers: None,
            out: None,
            format: OutputFormat::Csv,
            n_mc: 1_000_000,
            negative_control: false,
            data: None,
            outcome_columns: vec!["y".into()],
            treatment_column: "a".into(),
            stratum_column: "s".into(),
            covariate_columns: Vec::new(),
            link: LinkKind::Identity,
            rescale: Vec::new(),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| Error::Config(format!("{key}: '{v}' is not a decimal number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: '{v}' is not finite")));
    }
    Ok(x)
}

fn parse_uint<T: FromStr<Err = std::num::ParseIntError>>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|e: std::num::ParseIntError| {
        let why = match e.kind() {
            std::num::IntErrorKind::PosOverflow => "overflows",
            _ => "is not a non-negative integer",
        };
        Error::Config(format!("{key}: '{v}' {why}"))
    })
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: '{v}' must be true or false"))),
    }
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn parse_schemes(v: &str) -> Result<Vec<Scheme>> {
    match v {
        "simple" => Ok(vec![Scheme::Simple]),
        "stratified" => Ok(vec![Scheme::StratifiedBlock]),
        "both" => Ok(vec![Scheme::Simple, Scheme::StratifiedBlock]),
        _ => Err(Error::Config(format!("scheme: '{v}' must be simple, stratified or both"))),
    }
}

fn schemes_name(s: &[Scheme]) -> &'static str {
    match s {
        [Scheme::Simple] => "simple",
        [Scheme::StratifiedBlock] => "stratified",
        _ => "both",
    }
}

impl RunConfig {
    pub const KEYS: [&'static str; 25] = [
        "command", "scenario", "outcome", "methods", "scheme", "block_size", "pi", "n", "reps", "seed", "folds",
        "learner", "level", "workers", "out", "format", "n_mc", "negative_control", "data", "outcome_columns",
        "treatment_column", "stratum_column", "covariate_columns", "link", "rescale",
    ];

    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "command" => self.command = if v.is_empty() { None } else { Some(v.parse()?) },
            "scenario" => self.scenario = v.parse()?,
            "outcome" => self.outcome = v.parse()?,
            "methods" => self.methods = parse_list(v).iter().map(|m| m.parse()).collect::<Result<_>>()?,
            "scheme" => self.schemes = parse_schemes(v)?,
            "block_size" => self.block_size = parse_uint(key, v)?,
            "pi" => self.pi = parse_f64(key, v)?,
            "n" => self.n = parse_uint(key, v)?,
            "reps" => self.reps = parse_uint(key, v)?,
            "seed" => self.seed = parse_uint(key, v)?,
            "folds" => self.folds = parse_uint(key, v)?,
            "learner" => self.learner = v.parse()?,
            "level" => self.level = parse_f64(key, v)?,
            "workers" => self.workers = if v.is_empty() { None } else { Some(parse_uint(key, v)?) },
            "out" => self.out = if v.is_empty() { None } else { Some(v.into()) },
            "format" => self.format = v.parse()?,
            "n_mc" => self.n_mc = parse_uint(key, v)?,
            "negative_control" => self.negative_control = parse_bool(key, v)?,
            "data" => self.data = if v.is_empty() { None } else { Some(v.into()) },
            "outcome_columns" => self.outcome_columns = parse_list(v),
            "treatment_column" => self.treatment_column = v.into(),
            "stratum_column" => self.stratum_column = v.into(),
            "covariate_columns" => self.covariate_columns = parse_list(v),
            "link" => self.link = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "rescale" => self.rescale = parse_list(v).iter().map(|r| r.parse()).collect::<Result<_>>()?,
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
            }
            cfg.set(k, v).map_err(|e| Error::Config(format!("line {}: {}", lineno + 1, strip(e))))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Every key in a fixed order.
    pub fn serialize(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("command", self.command.map(|c| c.to_string()).unwrap_or_default());
        put("scenario", self.scenario.to_string());
        put("outcome", self.outcome.to_string());
        put("methods", join(&self.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
        put("scheme", schemes_name(&self.schemes).into());
        put("block_size", self.block_size.to_string());
        put("pi", self.pi.to_string());
        put("n", self.n.to_string());
        put("reps", self.reps.to_string());
        put("seed", self.seed.to_string());
        put("folds", self.folds.to_string());
        put("learner", self.learner.to_string());
        put("level", self.level.to_string());
        put("workers", self.workers.map(|w| w.to_string()).unwrap_or_default());
        put("out", opt(&self.out));
        put("format", self.format.to_string());
        put("n_mc", self.n_mc.to_string());
        put("negative_control", self.negative_control.to_string());
        put("data", opt(&self.data));
        put("outcome_columns", join(&self.outcome_columns));
        put("treatment_column", self.treatment_column.clone());
        put("stratum_column", self.stratum_column.clone());
        put("covariate_columns", join(&self.covariate_columns));
        put("link", self.link.to_string());
        put("rescale", join(&self.rescale.iter().map(|r| r.to_string()).collect::<Vec<_>>()));
        s
    }

    /// Checks that apply to every command, then command-specific ones.
    pub fn validate(&self, command: Command) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.level > 0.0 && self.level < 1.0) {
            return err(format!("level must lie in (0,1), got {}", self.level));
        }
        if self.workers == Some(0) {
            return err("workers must be positive".into());
        }
        if self.folds == 1 {
            return err("folds must be 0 (no cross-fitting) or at least 2".into());
        }
        match command {
            Command::Simulate | Command::Generate => {
                if command == Command::Simulate && self.reps < 2 {
                    return err(format!("reps must be at least 2, got {}", self.reps));
                }
                if self.n < 4 {
                    return err(format!("n must be at least 4, got {}", self.n));
                }
                if self.methods.is_empty() {
                    return err("methods must not be empty".into());
                }
                self.check_plans()?;
            }
            Command::Analyze => {
                if self.outcome_columns.is_empty() {
                    return err("outcome_columns must not be empty".into());
                }
                if !(self.pi > 0.0 && self.pi < 1.0) {
                    return err(format!("pi must lie in (0,1), got {}", self.pi));
                }
                for r in &self.rescale {
                    if r.max <= r.min {
                        return err(format!("rescale {}: max must exceed min", r.column));
                    }
                }
            }
            Command::Verify => {
                if self.n_mc < MIN_MC_DRAWS {
                    return err(format!("n_mc must be at least {MIN_MC_DRAWS}, got {}", self.n_mc));
                }
            }
        }
        Ok(())
    }

    /// Estimator settings: the configured learner (super-learner folds
    /// follow `folds`, defaulting to 5), cross-fitting folds and level.
    pub fn method_options(&self, link: LinkSpec, family: Family) -> MethodOptions {
        let mut o = MethodOptions::new(link, family);
        o.learner = self.learner.kind(if self.folds >= 2 { self.folds } else { 5 });
        o.cross_fit_folds = (self.folds >= 2).then_some(self.folds);
        o.level = self.level;
        o
    }

    fn check_plans(&self) -> Result<()> {
        for s in &self.schemes {
            let plan = match s {
                Scheme::Simple => RandomizationPlan::simple(self.pi, self.seed),
                Scheme::StratifiedBlock => RandomizationPlan::stratified(self.pi, self.block_size, self.seed),
            };
            plan.validate().map_err(|e| Error::Config(strip(e)))?;
        }
        Ok(())
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) | Error::InvalidParameter(m) => m,
        other => other.to_string(),
    }
}
