//! Shared CLI defaults from a `key = value` file and the environment.
//!
//! Precedence, lowest first: built-in defaults, config file, `PVQUEUE_SEED`,
//! command-line flags. Blank lines and `#` comments are ignored.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::estimators::{EstimatorId, HcmConfig};
use crate::evaluation::{CmaxRule, LambdaPolicy, NoProbePolicy, ReportFormat, RunConfig};

pub const SEED_ENV: &str = "PVQUEUE_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub slots_per_second: u32,
    pub seed: u64,
    pub seeds: u32,
    pub hcm: HcmConfig,
    pub cmax: Option<u32>,
    pub estimators: Vec<EstimatorId>,
    pub lambda_policy: LambdaPolicy,
    pub no_probe_policy: NoProbePolicy,
    pub exclude_zero_queues: bool,
    pub format: ReportFormat,
    pub out: Option<PathBuf>,
    pub plot_data: Option<PathBuf>,
}

impl Default for CliConfig {
    fn default() -> Self {
        let run = RunConfig::default();
        Self {
            slots_per_second: 2,
            seed: run.base_seed,
            seeds: run.seeds,
            hcm: run.hcm,
            cmax: None,
            estimators: run.estimators,
            lambda_policy: run.lambda_policy,
            no_probe_policy: run.no_probe_policy,
            exclude_zero_queues: run.exclude_zero_queues,
            format: ReportFormat::Csv,
            out: None,
            plot_data: None,
        }
    }
}

fn parse<T: std::str::FromStr>(line: u64, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Parse { line, msg: format!("{key} = {value:?}: {e}") })
}

fn parse_bool(line: u64, key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Parse { line, msg: format!("{key} = {value:?}: expected a boolean") }),
    }
}

pub fn parse_estimators(list: &str) -> std::result::Result<Vec<EstimatorId>, String> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<EstimatorId>().map_err(|e| e.to_string()))
        .collect()
}

impl CliConfig {
    /// Defaults, then the optional file, then the seed environment variable.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            cfg.apply_text(&std::fs::read_to_string(p)?)?;
        }
        if let Ok(v) = std::env::var(SEED_ENV) {
            cfg.apply_env_seed(&v)?;
        }
        Ok(cfg)
    }

    pub fn apply_env_seed(&mut self, value: &str) -> Result<()> {
        self.seed = value
            .trim()
            .parse()
            .map_err(|e| Error::InvalidConfig(format!("{SEED_ENV} = {value:?}: {e}")))?;
        Ok(())
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = i as u64 + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| Error::Parse { line, msg: format!("expected key = value, got {content:?}") })?;
            self.set(line, key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, line: u64, key: &str, value: &str) -> Result<()> {
        match key {
            "slots_per_second" => self.slots_per_second = parse(line, key, value)?,
            "seed" => self.seed = parse(line, key, value)?,
            "seeds" => self.seeds = parse(line, key, value)?,
            "progression_factor" => self.hcm.progression_factor = parse(line, key, value)?,
            "incremental_delay_factor" => self.hcm.incremental_delay_factor = parse(line, key, value)?,
            "upstream_filtering" => self.hcm.upstream_filtering = parse(line, key, value)?,
            "capacity_vph" => self.hcm.capacity_vph = parse(line, key, value)?,
            "saturation_flow" => self.hcm.saturation_flow = parse(line, key, value)?,
            "analysis_period_hours" => self.hcm.analysis_period_hours = Some(parse(line, key, value)?),
            "cmax" => self.cmax = Some(parse(line, key, value)?),
            "estimators" => {
                self.estimators = parse_estimators(value).map_err(|msg| Error::Parse { line, msg })?
            }
            "lambda_policy" => {
                self.lambda_policy = match value {
                    "last_probe_order" => LambdaPolicy::LastProbeOrder,
                    "probe_timed" => LambdaPolicy::ProbeTimed,
                    _ => return Err(Error::Parse { line, msg: format!("unknown lambda_policy {value:?}") }),
                }
            }
            "no_probe_policy" => {
                self.no_probe_policy = match value {
                    "prior" => NoProbePolicy::Prior,
                    "history" => NoProbePolicy::History,
                    _ => return Err(Error::Parse { line, msg: format!("unknown no_probe_policy {value:?}") }),
                }
            }
            "exclude_zero_queues" => self.exclude_zero_queues = parse_bool(line, key, value)?,
            "format" => self.format = parse(line, key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "plot_data" => self.plot_data = Some(PathBuf::from(value)),
            _ => return Err(Error::Parse { line, msg: format!("unknown key {key:?}") }),
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            seeds: self.seeds,
            base_seed: self.seed,
            cmax_rule: self.cmax.map_or(CmaxRule::TwiceRed, CmaxRule::Fixed),
            estimators: self.estimators.clone(),
            lambda_policy: self.lambda_policy,
            no_probe_policy: self.no_probe_policy,
            exclude_zero_queues: self.exclude_zero_queues,
            hcm: self.hcm,
            ..RunConfig::default()
        }
    }
}
