//! Flags, the key=value config file, and their merge into a [`RunConfig`].
//!
//! Config-file keys are the long flag names without the leading dashes
//! (`population-size = 10000`). Blank lines and lines starting with `#` are
//! ignored. A flag given on the command line wins over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use drsel::drest::Design;
use drsel::model::OutcomeFamily;
use drsel::simulate::{OutcomeModel, ScenarioConfig, SelectionModel};
use drsel::tuning::{DEFAULT_FOLDS, DEFAULT_GRID_SIZE};

use crate::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "drsel",
    version,
    about = "Doubly robust estimation of a population mean from a probability and a non-probability sample"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Monte Carlo study of one simulation scenario.
    Simulate(Flags),
    /// Tuning and variable selection only; writes selection.csv.
    Select(Flags),
    /// Full analysis; writes estimate.csv and selection.csv.
    Estimate(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat key=value file with defaults for any of the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Probability sample CSV (`pi_a`, covariates).
    #[arg(long)]
    pub sample_a: Option<PathBuf>,
    /// Non-probability sample CSV (`y`, covariates).
    #[arg(long)]
    pub sample_b: Option<PathBuf>,
    #[arg(long)]
    pub population_size: Option<f64>,
    /// `linear` or `logit`.
    #[arg(long)]
    pub family: Option<String>,
    /// `om1xpsm1`, `om2xpsm1`, `om1xpsm2` or `om2xpsm2`.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub kfolds: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Design of the probability sample: `poisson` or `srs`.
    #[arg(long)]
    pub design: Option<String>,
    /// Fixed sampling-score tuning value; skips cross-validation.
    #[arg(long)]
    pub lambda_alpha: Option<f64>,
    /// Fixed outcome tuning value; skips cross-validation.
    #[arg(long)]
    pub lambda_beta: Option<f64>,
}

const KEYS: [&str; 15] = [
    "sample-a",
    "sample-b",
    "population-size",
    "family",
    "scenario",
    "runs",
    "seed",
    "kfolds",
    "grid-size",
    "threads",
    "out",
    "design",
    "lambda-alpha",
    "lambda-beta",
    "config",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Select,
    Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub sample_a: Option<PathBuf>,
    pub sample_b: Option<PathBuf>,
    pub population_size: Option<f64>,
    pub family: OutcomeFamily,
    pub scenario: Option<(OutcomeModel, SelectionModel)>,
    pub runs: usize,
    pub seed: u64,
    pub kfolds: usize,
    pub grid_size: usize,
    pub threads: usize,
    pub out: PathBuf,
    pub design: Design,
    pub fixed_lambdas: Option<(f64, f64)>,
}

pub fn parse_config_file(path: &Path) -> CliResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("config line {}: expected key = value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) || key == "config" {
            return Err(CliError::Config(format!("config line {}: unknown key {key:?}", i + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(CliError::Config(format!("config line {}: {key:?} given twice", i + 1)));
        }
    }
    Ok(out)
}

fn pick<T: FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str) -> CliResult<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    file.get(key)
        .map(|v| {
            v.parse()
                .map_err(|_| CliError::Config(format!("config key {key:?}: cannot parse {v:?}")))
        })
        .transpose()
}

pub fn parse_family(s: &str) -> CliResult<OutcomeFamily> {
    match s.to_ascii_lowercase().as_str() {
        "linear" => Ok(OutcomeFamily::LinearIdentity),
        "logit" => Ok(OutcomeFamily::BinaryLogit),
        _ => Err(CliError::Config(format!("unknown family {s:?} (expected linear or logit)"))),
    }
}

impl RunConfig {
    /// Merges flags over the config file and checks what `command` needs.
    pub fn resolve(command: Command, flags: Flags) -> CliResult<Self> {
        let file = match &flags.config {
            Some(p) => parse_config_file(p)?,
            None => BTreeMap::new(),
        };
        let family = pick(flags.family, &file, "family")?
            .map_or(Ok(OutcomeFamily::LinearIdentity), |s: String| parse_family(&s))?;
        let scenario = pick(flags.scenario, &file, "scenario")?
            .map(|s: String| ScenarioConfig::parse_code(&s).map_err(|e| CliError::Config(e.to_string())))
            .transpose()?;
        let design = pick(flags.design, &file, "design")?
            .map_or(Ok(Design::PoissonA), |s: String| {
                Design::parse(&s).map_err(|e| CliError::Config(e.to_string()))
            })?;
        let la = pick(flags.lambda_alpha, &file, "lambda-alpha")?;
        let lb = pick(flags.lambda_beta, &file, "lambda-beta")?;
        let fixed_lambdas = match (la, lb) {
            (None, None) => None,
            (Some(a), Some(b)) if a >= 0.0 && b >= 0.0 => Some((a, b)),
            (Some(_), Some(_)) => return Err(CliError::Config("tuning values must be >= 0".into())),
            _ => {
                return Err(CliError::Config(
                    "lambda-alpha and lambda-beta must be given together".into(),
                ))
            }
        };
        let cfg = RunConfig {
            command,
            sample_a: pick(flags.sample_a, &file, "sample-a")?,
            sample_b: pick(flags.sample_b, &file, "sample-b")?,
            population_size: pick(flags.population_size, &file, "population-size")?,
            family,
            scenario,
            runs: pick(flags.runs, &file, "runs")?.unwrap_or(500),
            seed: pick(flags.seed, &file, "seed")?.unwrap_or(1),
            kfolds: pick(flags.kfolds, &file, "kfolds")?.unwrap_or(DEFAULT_FOLDS),
            grid_size: pick(flags.grid_size, &file, "grid-size")?.unwrap_or(DEFAULT_GRID_SIZE),
            threads: pick(flags.threads, &file, "threads")?
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())),
            out: pick(flags.out, &file, "out")?.unwrap_or_else(|| PathBuf::from(".")),
            design,
            fixed_lambdas,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if self.kfolds < 2 {
            return bad("kfolds must be at least 2");
        }
        if self.grid_size == 0 {
            return bad("grid-size must be positive");
        }
        if self.threads == 0 {
            return bad("threads must be positive");
        }
        if let Some(n) = self.population_size {
            if !(n.is_finite() && n >= 1.0) {
                return bad("population-size must be a number >= 1");
            }
        }
        match self.command {
            Command::Simulate => {
                if self.scenario.is_none() {
                    return bad("simulate needs --scenario");
                }
                if self.runs == 0 {
                    return bad("runs must be positive");
                }
                if let Some(n) = self.population_size {
                    if n.fract() != 0.0 {
                        return bad("population-size must be a whole number for simulate");
                    }
                }
            }
            Command::Select | Command::Estimate => {
                if self.sample_a.is_none() || self.sample_b.is_none() {
                    return bad("--sample-a and --sample-b are required");
                }
                if self.population_size.is_none() {
                    return bad("--population-size is required");
                }
            }
        }
        Ok(())
    }

    pub fn scenario_config(&self) -> Option<ScenarioConfig> {
        let (om, psm) = self.scenario?;
        let mut s = ScenarioConfig::new(self.family, om, psm);
        s.runs = self.runs;
        s.seed = self.seed;
        s.folds = self.kfolds;
        s.grid_size = self.grid_size;
        s.fixed_lambdas = self.fixed_lambdas;
        if let Some(n) = self.population_size {
            s.population_size = n as usize;
        }
        Some(s)
    }
}

impl Cli {
    pub fn into_run_config(self) -> CliResult<RunConfig> {
        match self.command {
            CommandArgs::Simulate(f) => RunConfig::resolve(Command::Simulate, f),
            CommandArgs::Select(f) => RunConfig::resolve(Command::Select, f),
            CommandArgs::Estimate(f) => RunConfig::resolve(Command::Estimate, f),
        }
    }
}
