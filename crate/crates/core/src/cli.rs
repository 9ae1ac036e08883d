//! Command-line front end. [`dispatch`] maps argv to an exit code:
//! 0 on success, 1 on usage or validation errors, 2 when an identity fails.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use chrono::NaiveDateTime;
use clap::{Parser, Subcommand};

use crate::combinatorics::{verify_all, VerifyBounds};
use crate::config::{parse_estimators, CliConfig};
use crate::distributions::{
    queue_pmf_notime_vector, queue_pmf_time_vector, QueueObservation, QueueObservationNoTime, QueuePmf,
};
use crate::error::{Error, Result};
use crate::estimators::{
    hcm_delay_queue, np_est1, np_est2, param_est1, param_est2, q_back, Estimate, EstimatorId, ProbeHistory,
    SignalCycle,
};
use crate::evaluation::{
    emit_report, ingest_csv, lambda_hat, run_evaluation_with, write_records, write_series, EvalReport, Lane,
    ReportFormat, StandardSuite,
};
use crate::simulator::{simulate_corpus, ArrivalProcess, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IDENTITY_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pvqueue", version, about = "Queue-length estimation from probe-vehicle data", arg_required_else_help = true)]
struct Cli {
    /// Config file of `key = value` defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exhaustively check the binomial summation identities.
    VerifyIdentities {
        /// Use this grid bound for every identity instead of the defaults.
        #[arg(long)]
        r_max: Option<u32>,
    },
    /// Print the conditional queue-length distribution as `n,probability` CSV.
    Pmf {
        #[arg(long)]
        l: u32,
        #[arg(long)]
        m: u32,
        /// Seconds into red at which the last probe joined.
        #[arg(long)]
        t: Option<u32>,
        /// Red duration in seconds.
        #[arg(long)]
        r_red: Option<u32>,
        /// Condition only on (l, m) with an upper bound on arrivals.
        #[arg(long, requires = "cmax")]
        no_time: bool,
        #[arg(long)]
        cmax: Option<u32>,
        /// Print probabilities as exact fractions.
        #[arg(long)]
        exact: bool,
    },
    /// Estimate one cycle's queue with the selected estimators.
    Estimate {
        #[arg(long)]
        l: u32,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        t: u32,
        #[arg(long)]
        red: u32,
        /// Cycle length in seconds (default `2 * red`).
        #[arg(long)]
        cycle: Option<f64>,
        /// Comma-separated estimator ids (default: all).
        #[arg(long, value_delimiter = ',')]
        estimator: Vec<String>,
        /// Arrival bound for NP2 (default `2 * red`).
        #[arg(long)]
        cmax: Option<u32>,
        /// Lane history means for the parametric fallbacks.
        #[arg(long, requires_all = ["hist_m", "hist_t"])]
        hist_l: Option<f64>,
        #[arg(long)]
        hist_m: Option<f64>,
        #[arg(long)]
        hist_t: Option<f64>,
        #[arg(long, default_value_t = 1)]
        hist_cycles: u64,
    },
    /// Write a synthetic single-lane cycle corpus.
    Simulate {
        #[arg(long)]
        cycles: usize,
        /// Probe penetration rate.
        #[arg(long)]
        p: f64,
        /// Red duration in seconds; cycles last `2 * red`.
        #[arg(long)]
        red: u32,
        /// Arrival probability per slot (stationary occupancy for platoons).
        #[arg(long, default_value_t = 0.0715)]
        arrival_prob: f64,
        /// Correlated platoon arrivals instead of independent slots.
        #[arg(long)]
        platoon: bool,
        /// Mean platoon length in slots.
        #[arg(long, default_value_t = 3.0)]
        mean_run: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "C")]
        lane: Lane,
        #[arg(long, default_value = "2024-01-01T07:00:00")]
        start: NaiveDateTime,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every estimator on a cycle CSV across random seeds.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seeds: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report destination; without it a table goes to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-cycle truth and estimates for the first seed.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        #[arg(long)]
        exclude_zero_queues: bool,
        /// `csv` or `json`.
        #[arg(long)]
        format: Option<ReportFormat>,
        /// Comma-separated estimator ids.
        #[arg(long)]
        estimators: Option<String>,
        #[arg(long)]
        cmax: Option<u32>,
    },
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    EXIT_INVALID
                }
            };
        }
    };
    match run(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::VerifyIdentities { r_max } => verify(r_max, out),
        Command::Pmf { l, m, t, r_red, no_time, cmax, exact } => {
            let pmf = if no_time {
                let cmax = cmax.ok_or_else(|| Error::InvalidConfig("--no-time needs --cmax".into()))?;
                queue_pmf_notime_vector(&QueueObservationNoTime::new(l, m, cmax)?)
            } else {
                let (t, r) = t
                    .zip(r_red)
                    .ok_or_else(|| Error::InvalidConfig("pmf needs --t and --r-red (or --no-time --cmax)".into()))?;
                queue_pmf_time_vector(&QueueObservation::new(l, m, t, r)?)
            };
            write_pmf(&pmf, exact, out)?;
            Ok(EXIT_OK)
        }
        Command::Estimate { l, m, t, red, cycle, estimator, cmax, hist_l, hist_m, hist_t, hist_cycles } => {
            let obs = QueueObservation::new(l, m, t, red)?;
            let history = match (hist_l, hist_m, hist_t) {
                (Some(hl), Some(hm), Some(ht)) => ProbeHistory::from_means(hl, hm, ht, hist_cycles)?,
                _ => ProbeHistory::new(),
            };
            let ids = if estimator.is_empty() {
                cfg.estimators.clone()
            } else {
                parse_estimators(&estimator.join(",")).map_err(Error::InvalidConfig)?
            };
            let cycle = SignalCycle::new(cycle.unwrap_or(2.0 * red as f64), red as f64)?;
            let cmax = cmax.or(cfg.cmax).unwrap_or(2 * red);
            let estimates = ids
                .iter()
                .map(|&id| estimate_one(id, &obs, &history, &cycle, cmax, &cfg))
                .collect::<Result<Vec<_>>>()?;
            write_estimates(&estimates, out)?;
            Ok(EXIT_OK)
        }
        Command::Simulate { cycles, p, red, arrival_prob, platoon, mean_run, seed, lane, start, out: path } => {
            let process = if platoon {
                ArrivalProcess::platoon_with_occupancy(arrival_prob, mean_run)?
            } else {
                ArrivalProcess::IndependentSlots { arrival_prob }
            };
            let mut sim = SimConfig::new(process, p, seed.unwrap_or(cfg.seed))?;
            sim.slots_per_second = cfg.slots_per_second;
            let records = simulate_corpus(&sim, cycles, red, start, lane)?;
            write_records(&records, std::io::BufWriter::new(std::fs::File::create(&path)?))?;
            writeln!(out, "wrote {} cycles to {}", records.len(), path.display())?;
            Ok(EXIT_OK)
        }
        Command::Evaluate { input, seeds, seed, out: path, plot_data, exclude_zero_queues, format, estimators, cmax } => {
            let mut cfg = cfg;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(list) = estimators {
                cfg.estimators = parse_estimators(&list).map_err(Error::InvalidConfig)?;
            }
            if let Some(c) = cmax {
                cfg.cmax = Some(c);
            }
            if let Some(f) = format {
                cfg.format = f;
            }
            cfg.exclude_zero_queues |= exclude_zero_queues;
            let records = ingest_csv(&input)?;
            let run = run_evaluation_with(&records, &cfg.run_config(), &StandardSuite)?;
            match path.or(cfg.out.clone()) {
                Some(p) => emit_report(&run.report, cfg.format, p)?,
                None => write_table(&run.report, out)?,
            }
            if let Some(p) = plot_data.or(cfg.plot_data.clone()) {
                let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
                write_series(&run, &mut w)?;
                w.flush()?;
            }
            Ok(EXIT_OK)
        }
    }
}

fn verify(r_max: Option<u32>, out: &mut dyn Write) -> Result<i32> {
    let bounds = r_max.map(VerifyBounds::uniform).unwrap_or_default();
    let checks = verify_all(bounds)?;
    writeln!(out, "{:<22} {:>5} {:>8} {:>8}  status", "identity", "r_max", "checked", "failed")?;
    for c in &checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        writeln!(out, "{:<22} {:>5} {:>8} {:>8}  {status}", c.name, c.r_max, c.checked, c.failures.len())?;
        for f in c.failures.iter().take(5) {
            writeln!(out, "    mismatch at {f}")?;
        }
    }
    Ok(if checks.iter().all(|c| c.passed()) { EXIT_OK } else { EXIT_IDENTITY_FAILURE })
}

fn write_pmf(pmf: &QueuePmf, exact: bool, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "n,probability")?;
    for (n, p) in pmf.iter() {
        if exact {
            writeln!(out, "{n},{p}")?;
        } else {
            writeln!(out, "{n},{}", p.to_f64())?;
        }
    }
    Ok(())
}

fn estimate_one(
    id: EstimatorId,
    obs: &QueueObservation,
    history: &ProbeHistory,
    cycle: &SignalCycle,
    cmax: u32,
    cfg: &CliConfig,
) -> Result<Estimate> {
    let lambda = || lambda_hat(obs, history, cfg.lambda_policy);
    match id {
        EstimatorId::Np1 => Ok(np_est1(obs)),
        EstimatorId::Np2 => Ok(np_est2(&QueueObservationNoTime::new(obs.l(), obs.m(), cmax)?)),
        EstimatorId::Est1 => param_est1(obs, history),
        EstimatorId::Est2 => param_est2(obs, history),
        EstimatorId::HcmDelay => hcm_delay_queue(cycle, lambda(), &cfg.hcm),
        EstimatorId::QBack => q_back(lambda(), obs.red() as f64, cfg.hcm.saturation_flow),
    }
}

fn write_estimates(estimates: &[Estimate], out: &mut dyn Write) -> Result<()> {
    let labels: Vec<String> = estimates
        .iter()
        .flat_map(|e| {
            let id = e.estimator.as_str();
            std::iter::once(format!("{id}_mean")).chain(e.variance.map(|_| format!("{id}_var")))
        })
        .collect();
    let values: Vec<String> = estimates
        .iter()
        .flat_map(|e| std::iter::once(format!("{:.6}", e.mean)).chain(e.variance.map(|v| format!("{v:.6}"))))
        .collect();
    writeln!(out, "{}", labels.join(","))?;
    writeln!(out, "{}", values.join(","))?;
    Ok(())
}

fn write_table(report: &EvalReport, out: &mut dyn Write) -> Result<()> {
    writeln!(
        out,
        "{:<10} {:<4} {:<10} {:>10} {:>10} {:>6} {:>7}",
        "day", "lane", "estimator", "rmse", "mean_err", "n_obs", "avg_p"
    )?;
    for c in &report.cells {
        let avg_p = c.avg_p.map(|p| format!("{p:.3}")).unwrap_or_else(|| "-".into());
        writeln!(
            out,
            "{:<10} {:<4} {:<10} {:>10.4} {:>10.4} {:>6} {:>7}",
            c.day.to_string(),
            c.lane.to_string(),
            c.estimator.as_str(),
            c.rmse,
            c.mean_error,
            c.n_obs,
            avg_p
        )?;
    }
    Ok(())
}
