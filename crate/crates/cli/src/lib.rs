//! Scenario runner for the singular BSDE laboratory.
//!
//! `sbsde run <scenario> [--key value ...] [--config file] [--out dir] [--seed k] [--threads w]`
//! writes `report.txt`, `summary.json` and the CSV tables of the scenario.
//! `sbsde list [--format table|csv]` prints the built-ins.

pub mod config;
pub mod scenarios;

use std::fmt::Write as _;
use std::path::PathBuf;

pub use config::ScenarioConfig;
pub use scenarios::{default_config, run_scenario, Outcome, RunResult, RunSummary, BUILTINS};

/// Exit code for malformed configs, invalid arguments and solver errors.
pub const EXIT_ERROR: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot write {0}: {1}")]
    Io(String, std::io::Error),
    #[error("thread pool: {0}")]
    Threads(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ListFormat {
    Table,
    Csv,
}

pub fn list_scenarios(format: ListFormat) -> String {
    let mut s = String::new();
    match format {
        ListFormat::Table => {
            let _ = writeln!(s, "{:<20} claim / defaults", "scenario");
            for b in &BUILTINS {
                let _ = writeln!(s, "{:<20} {}", b.name, b.claim);
                let _ = writeln!(s, "{:<20}   {}", "", scenarios::default_summary(b));
            }
        }
        ListFormat::Csv => {
            let _ = writeln!(s, "name,claim,defaults");
            for b in &BUILTINS {
                let _ = writeln!(s, "{},\"{}\",\"{}\"", b.name, b.claim, scenarios::default_summary(b));
            }
        }
    }
    s
}

/// Parsed `run` arguments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunArgs {
    pub scenario: String,
    pub config_file: Option<PathBuf>,
    pub threads: Option<usize>,
    pub overrides: Vec<(String, String)>,
}

impl RunArgs {
    /// Splits `--key value` pairs; `--config` and `--threads` are kept apart,
    /// everything else becomes a config override.
    pub fn parse(scenario: &str, args: &[String]) -> Result<Self, CliError> {
        let mut out = RunArgs {
            scenario: scenario.to_string(),
            ..Default::default()
        };
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| CliError::Config(format!("expected `--key value`, got `{flag}`")))?;
            let (key, value) = match key.split_once('=') {
                Some((k, v)) => (k.to_string(), v.to_string()),
                None => {
                    let v = it
                        .next()
                        .ok_or_else(|| CliError::Config(format!("flag `--{key}` needs a value")))?;
                    (key.to_string(), v.clone())
                }
            };
            match key.as_str() {
                "config" => out.config_file = Some(PathBuf::from(value)),
                "threads" => {
                    let w: usize = value
                        .parse()
                        .ok()
                        .filter(|w| *w > 0)
                        .ok_or_else(|| CliError::Config(format!("--threads {value}: expected a positive integer")))?;
                    out.threads = Some(w);
                }
                _ => out.overrides.push((key, value)),
            }
        }
        Ok(out)
    }

    /// Built-in defaults, then the config file, then the overrides.
    pub fn resolve(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = default_config(&self.scenario)?;
        if let Some(path) = &self.config_file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
            let file = ScenarioConfig::from_toml_str(&text, &path.display().to_string())?;
            if let Some(s) = &file.scenario {
                if s != &self.scenario {
                    return Err(CliError::Config(format!(
                        "{}: scenario `{s}` does not match the command line `{}`",
                        path.display(),
                        self.scenario
                    )));
                }
            }
            cfg = cfg.overlay(&file)?;
        }
        for (k, v) in &self.overrides {
            cfg = cfg.with_override(k, v)?;
        }
        Ok(cfg)
    }
}

/// Resolves and runs on a pool of `threads` workers (default: rayon's choice).
pub fn execute(args: &RunArgs) -> Result<RunResult, CliError> {
    let cfg = args.resolve()?;
    let out_dir = cfg
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(&args.scenario));
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = args.threads {
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Threads(e.to_string()))?;
    pool.install(|| run_scenario(&cfg, &out_dir))
}
