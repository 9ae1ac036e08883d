//! Evaluation harness: ingest observed cycles, draw the missing probe evidence
//! for every seed, run the estimators lane by lane and aggregate RMSE.
//!
//! Input CSV (header required): `day,time,lane,true_queue,probe_count`.
//! Report CSV: `day,lane,estimator,rmse,mean_error,n_obs,avg_p`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{QueueObservation, QueueObservationNoTime};
use crate::error::{Error, Result};
use crate::estimators::{
    hcm_delay_queue, np_est1, np_est2, param_est1, param_est2, q_back, rate_estimates, EstimatorId,
    HcmConfig, HistoryMeans, ProbeHistory, SignalCycle,
};
use crate::rng::substream;
use crate::simulator::protocol_sample;

/// Cycle length assumed for a (day, lane) group holding a single record.
pub const DEFAULT_CYCLE_SECONDS: f64 = 70.0;

const DATE_FMT: &str = "%Y-%m-%d";
const TIME_FMT: &str = "%H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lane {
    L,
    C,
    R,
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Lane::L => "L",
            Lane::C => "C",
            Lane::R => "R",
        })
    }
}

impl FromStr for Lane {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "L" | "l" => Ok(Lane::L),
            "C" | "c" => Ok(Lane::C),
            "R" | "r" => Ok(Lane::R),
            other => Err(format!("unknown lane {other:?} (expected L, C or R)")),
        }
    }
}

/// One observed signal cycle on one lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub day: NaiveDate,
    pub time: NaiveTime,
    pub lane: Lane,
    pub true_queue: u32,
    pub probe_count: u32,
    pub cycle_seconds: f64,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    day: String,
    time: String,
    lane: String,
    true_queue: String,
    probe_count: String,
}

pub fn ingest_csv(path: impl AsRef<Path>) -> Result<Vec<CycleRecord>> {
    let file = std::fs::File::open(path)?;
    ingest_reader(file)
}

/// Parses and validates records, then derives `cycle_seconds` from the gap to
/// the next record of the same day and lane (the last one reuses the previous gap).
pub fn ingest_reader<R: Read>(reader: R) -> Result<Vec<CycleRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        log::warn!("input contains no records");
        return Ok(Vec::new());
    }
    for col in ["day", "time", "lane", "true_queue", "probe_count"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse { line: 1, msg: format!("missing column {col:?}") });
        }
    }

    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in rdr.deserialize::<RawRow>() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse { line, msg: e.to_string() }
        })?;
        let line = records.len() as u64 + 2;
        let parse_err = |msg: String| Error::Parse { line, msg };
        let day = NaiveDate::parse_from_str(&row.day, DATE_FMT)
            .map_err(|e| parse_err(format!("day {:?}: {e}", row.day)))?;
        let time = NaiveTime::parse_from_str(&row.time, TIME_FMT)
            .map_err(|e| parse_err(format!("time {:?}: {e}", row.time)))?;
        let lane = row.lane.parse::<Lane>().map_err(parse_err)?;
        let true_queue = row
            .true_queue
            .parse::<u32>()
            .map_err(|e| parse_err(format!("true_queue {:?}: {e}", row.true_queue)))?;
        let probe_count = row
            .probe_count
            .parse::<u32>()
            .map_err(|e| parse_err(format!("probe_count {:?}: {e}", row.probe_count)))?;
        if probe_count > true_queue {
            return Err(parse_err(format!(
                "probe_count {probe_count} exceeds true_queue {true_queue}"
            )));
        }
        records.push(CycleRecord { day, time, lane, true_queue, probe_count, cycle_seconds: 0.0 });
        lines.push(line);
    }
    if records.is_empty() {
        log::warn!("input contains no records");
    }
    derive_cycle_lengths(&mut records, &lines)?;
    Ok(records)
}

fn derive_cycle_lengths(records: &mut [CycleRecord], lines: &[u64]) -> Result<()> {
    let mut groups: BTreeMap<(NaiveDate, Lane), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry((r.day, r.lane)).or_default().push(i);
    }
    for idx in groups.values() {
        let gaps = idx
            .windows(2)
            .map(|w| {
                let (a, b) = (&records[w[0]], &records[w[1]]);
                let gap = (b.time - a.time).num_milliseconds() as f64 / 1000.0;
                if gap <= 0.0 {
                    Err(Error::Parse {
                        line: lines[w[1]],
                        msg: format!("time {} does not follow {} on lane {}", b.time, a.time, b.lane),
                    })
                } else {
                    Ok(gap)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, &i) in idx.iter().enumerate() {
            records[i].cycle_seconds = gaps
                .get(k)
                .or_else(|| gaps.last())
                .copied()
                .unwrap_or(DEFAULT_CYCLE_SECONDS);
        }
    }
    Ok(())
}

pub fn write_records<W: Write>(records: &[CycleRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day", "time", "lane", "true_queue", "probe_count"])?;
    for r in records {
        w.write_record([
            r.day.format(DATE_FMT).to_string(),
            r.time.format(TIME_FMT).to_string(),
            r.lane.to_string(),
            r.true_queue.to_string(),
            r.probe_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// How the red duration `R` (whole seconds) is obtained from a cycle length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "seconds", rename_all = "snake_case")]
pub enum RedRule {
    /// `R = round(C / 2)`, at least 1.
    HalfCycle,
    Fixed(u32),
}

impl RedRule {
    pub fn red(&self, cycle_seconds: f64) -> u32 {
        match *self {
            RedRule::HalfCycle => ((cycle_seconds / 2.0).round() as u32).max(1),
            RedRule::Fixed(r) => r.max(1),
        }
    }
}

/// Maximum possible arrivals used by `NP2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum CmaxRule {
    /// `Cmax = 2R`, the slot count of the red phase.
    TwiceRed,
    Fixed(u32),
}

impl CmaxRule {
    pub fn cmax(&self, red: u32) -> u32 {
        match *self {
            CmaxRule::TwiceRed => 2 * red,
            CmaxRule::Fixed(c) => c,
        }
    }
}

/// Arrival-rate estimate fed to the delay and back-of-queue baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// `l / R`, or `l̄ / R` from lane history.
    LastProbeOrder,
    /// `(l - m)/t + m/R`, or the same with history means.
    ProbeTimed,
}

/// What the nonparametric estimators see on a cycle with no probes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoProbePolicy {
    /// The empty observation `l = m = t = 0` (uniform prior over the slots).
    Prior,
    /// Closed forms evaluated at the lane's history means, like `EST1`/`EST2`.
    History,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seeds: u32,
    pub base_seed: u64,
    pub red_rule: RedRule,
    pub cmax_rule: CmaxRule,
    pub estimators: Vec<EstimatorId>,
    pub lambda_policy: LambdaPolicy,
    pub no_probe_policy: NoProbePolicy,
    pub exclude_zero_queues: bool,
    pub hcm: HcmConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: 1000,
            base_seed: 12_345,
            red_rule: RedRule::HalfCycle,
            cmax_rule: CmaxRule::TwiceRed,
            estimators: EstimatorId::ALL.to_vec(),
            lambda_policy: LambdaPolicy::LastProbeOrder,
            no_probe_policy: NoProbePolicy::Prior,
            exclude_zero_queues: false,
            hcm: HcmConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidConfig("estimator set is empty".into()));
        }
        self.hcm.validate()
    }

    fn estimator_set(&self) -> Vec<EstimatorId> {
        let mut ids = self.estimators.clone();
        ids.sort();
        ids.dedup();
        ids
    }
}

/// Everything an estimator may look at for one cycle.
#[derive(Debug, Clone)]
pub struct CycleContext<'a> {
    pub record: &'a CycleRecord,
    pub observation: QueueObservation,
    pub history: &'a ProbeHistory,
    pub red: u32,
    pub config: &'a RunConfig,
}

pub trait EstimatorSuite: Sync {
    fn estimate(&self, id: EstimatorId, ctx: &CycleContext<'_>) -> f64;
}

/// The six estimators with the run-configured fallbacks.
#[derive(Debug, Clone, Copy, Default)]
pub struct StandardSuite;

fn np1_mean(l: f64, m: f64, t: f64, r: f64) -> f64 {
    l + (l - m + 1.0) * (r - t) / (t + 1.0)
}

fn np2_mean(l: f64, m: f64, c: f64) -> f64 {
    l + (l - m + 1.0) * (c - l) / (l + 2.0)
}

impl StandardSuite {
    fn history_for_np(&self, ctx: &CycleContext<'_>) -> Option<HistoryMeans> {
        match ctx.config.no_probe_policy {
            NoProbePolicy::History if !ctx.observation.has_probes() => ctx.history.means(),
            _ => None,
        }
    }

    fn lambda(&self, ctx: &CycleContext<'_>) -> f64 {
        lambda_hat(&ctx.observation, ctx.history, ctx.config.lambda_policy)
    }
}

/// Arrival-rate estimate (vehicles per second) for the delay baselines: from
/// the cycle's own probes when present, else from lane history, else zero.
pub fn lambda_hat(obs: &QueueObservation, history: &ProbeHistory, policy: LambdaPolicy) -> f64 {
    let r = obs.red() as f64;
    if let Ok(rates) = rate_estimates(obs) {
        return match policy {
            LambdaPolicy::LastProbeOrder => rates.lambda1,
            LambdaPolicy::ProbeTimed => rates.lambda2,
        };
    }
    match history.means() {
        None => 0.0,
        Some(h) => match policy {
            LambdaPolicy::LastProbeOrder => h.l / r,
            LambdaPolicy::ProbeTimed => (h.l - h.m) / h.t + h.m / r,
        },
    }
}

impl EstimatorSuite for StandardSuite {
    fn estimate(&self, id: EstimatorId, ctx: &CycleContext<'_>) -> f64 {
        let obs = &ctx.observation;
        let red = ctx.red;
        let capacity = 2.0 * red as f64;
        match id {
            EstimatorId::Np1 => match self.history_for_np(ctx) {
                Some(h) => np1_mean(h.l, h.m, h.t.min(red as f64), red as f64),
                None => np_est1(obs).mean,
            },
            EstimatorId::Np2 => {
                let cmax = ctx.config.cmax_rule.cmax(red);
                match self.history_for_np(ctx) {
                    Some(h) => np2_mean(h.l, h.m, (cmax as f64).max(h.l)),
                    None => {
                        let o = QueueObservationNoTime::new(obs.l(), obs.m(), cmax.max(obs.l()))
                            .expect("m <= l <= max(cmax, l)");
                        np_est2(&o).mean
                    }
                }
            }
            EstimatorId::Est1 => param_est1(obs, ctx.history).map(|e| e.mean).unwrap_or(0.0),
            EstimatorId::Est2 => param_est2(obs, ctx.history).map(|e| e.mean).unwrap_or(0.0),
            EstimatorId::HcmDelay => {
                let cycle = SignalCycle::new(ctx.record.cycle_seconds.max(red as f64), red as f64)
                    .expect("red never exceeds the cycle");
                hcm_delay_queue(&cycle, self.lambda(ctx), &ctx.config.hcm)
                    .map(|e| e.mean)
                    .unwrap_or(capacity)
            }
            EstimatorId::QBack => q_back(self.lambda(ctx), red as f64, ctx.config.hcm.saturation_flow)
                .map(|e| e.mean)
                .unwrap_or(capacity),
        }
    }
}

/// Report metadata recorded so runs stay comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub seeds: u32,
    pub base_seed: u64,
    pub red_rule: RedRule,
    pub cmax_rule: CmaxRule,
    pub lambda_policy: LambdaPolicy,
    pub no_probe_policy: NoProbePolicy,
    pub exclude_zero_queues: bool,
    pub estimators: Vec<EstimatorId>,
    pub hcm: HcmConfig,
}

/// Aggregated errors of one estimator on one lane and day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub day: NaiveDate,
    pub lane: Lane,
    pub estimator: EstimatorId,
    /// Mean over seeds of the per-seed RMSE, vehicles per cycle.
    pub rmse: f64,
    /// Mean over seeds of the per-seed mean signed error (estimate - truth).
    pub mean_error: f64,
    /// Observations per seed.
    pub n_obs: u64,
    /// Mean of `m / QL` over the cell's records with a positive queue.
    pub avg_p: Option<f64>,
    pub seed_rmse: Vec<f64>,
    pub seed_sse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: ReportMetadata,
    pub cells: Vec<ReportCell>,
}

/// Per-cycle truth and estimates for the first seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub day: NaiveDate,
    pub time: NaiveTime,
    pub lane: Lane,
    pub true_queue: u32,
    pub probe_count: u32,
    pub estimates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub report: EvalReport,
    pub estimators: Vec<EstimatorId>,
    pub series: Vec<SeriesRow>,
}

type CellKey = (NaiveDate, Lane, EstimatorId);

#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    sse: f64,
    sum_err: f64,
    n: u64,
}

struct SeedOutcome {
    cells: BTreeMap<CellKey, Acc>,
    series: Vec<SeriesRow>,
}

fn run_seed<S: EstimatorSuite>(
    seed: u32,
    records: &[CycleRecord],
    cfg: &RunConfig,
    ids: &[EstimatorId],
    suite: &S,
    keep_series: bool,
) -> Result<SeedOutcome> {
    let mut histories: BTreeMap<(NaiveDate, Lane), ProbeHistory> = BTreeMap::new();
    let mut cells: BTreeMap<CellKey, Acc> = BTreeMap::new();
    let mut series = Vec::new();
    for (j, rec) in records.iter().enumerate() {
        if cfg.exclude_zero_queues && rec.true_queue == 0 {
            continue;
        }
        let red = cfg.red_rule.red(rec.cycle_seconds);
        let mut rng = substream(cfg.base_seed, &[seed as u64, j as u64]);
        let sample = protocol_sample(rec.true_queue, rec.probe_count, rec.cycle_seconds, red, &mut rng)?;
        let observation = sample.observation(rec.probe_count, red)?;
        let history = histories.entry((rec.day, rec.lane)).or_default();
        let ctx = CycleContext { record: rec, observation, history, red, config: cfg };
        let estimates: Vec<f64> = ids.iter().map(|&id| suite.estimate(id, &ctx)).collect();
        for (&id, &est) in ids.iter().zip(&estimates) {
            let err = est - rec.true_queue as f64;
            let acc = cells.entry((rec.day, rec.lane, id)).or_default();
            acc.sse += err * err;
            acc.sum_err += err;
            acc.n += 1;
        }
        if keep_series {
            series.push(SeriesRow {
                day: rec.day,
                time: rec.time,
                lane: rec.lane,
                true_queue: rec.true_queue,
                probe_count: rec.probe_count,
                estimates,
            });
        }
        history.record(&observation);
    }
    Ok(SeedOutcome { cells, series })
}

/// Mean of `m / QL` per (day, lane) over records with a positive queue.
pub fn average_penetration(records: &[CycleRecord], exclude_zero_queues: bool) -> BTreeMap<(NaiveDate, Lane), Option<f64>> {
    let mut sums: BTreeMap<(NaiveDate, Lane), (f64, u64)> = BTreeMap::new();
    for r in records {
        if exclude_zero_queues && r.true_queue == 0 {
            continue;
        }
        let e = sums.entry((r.day, r.lane)).or_default();
        if r.true_queue > 0 {
            e.0 += r.probe_count as f64 / r.true_queue as f64;
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, (n > 0).then(|| s / n as f64)))
        .collect()
}

pub fn run_evaluation(records: &[CycleRecord], cfg: &RunConfig) -> Result<EvalReport> {
    Ok(run_evaluation_with(records, cfg, &StandardSuite)?.report)
}

/// Runs every seed in parallel; per-lane histories advance in record order
/// within each seed. Aggregation is sequential, so results do not depend on
/// thread scheduling.
pub fn run_evaluation_with<S: EstimatorSuite>(
    records: &[CycleRecord],
    cfg: &RunConfig,
    suite: &S,
) -> Result<EvalRun> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to evaluate".into()));
    }
    let ids = cfg.estimator_set();
    let outcomes = (0..cfg.seeds)
        .into_par_iter()
        .map(|s| run_seed(s, records, cfg, &ids, suite, s == 0))
        .collect::<Result<Vec<_>>>()?;

    let penetration = average_penetration(records, cfg.exclude_zero_queues);
    let mut merged: BTreeMap<CellKey, (Vec<f64>, Vec<f64>, Vec<f64>, u64)> = BTreeMap::new();
    for outcome in &outcomes {
        for (key, acc) in &outcome.cells {
            let e = merged.entry(*key).or_default();
            e.0.push((acc.sse / acc.n as f64).sqrt());
            e.1.push(acc.sse);
            e.2.push(acc.sum_err / acc.n as f64);
            e.3 = acc.n;
        }
    }
    let seeds = cfg.seeds as f64;
    let cells = merged
        .into_iter()
        .map(|((day, lane, estimator), (seed_rmse, seed_sse, seed_bias, n_obs))| ReportCell {
            day,
            lane,
            estimator,
            rmse: seed_rmse.iter().sum::<f64>() / seeds,
            mean_error: seed_bias.iter().sum::<f64>() / seeds,
            n_obs,
            avg_p: penetration.get(&(day, lane)).copied().flatten(),
            seed_rmse,
            seed_sse,
        })
        .collect();

    let metadata = ReportMetadata {
        seeds: cfg.seeds,
        base_seed: cfg.base_seed,
        red_rule: cfg.red_rule,
        cmax_rule: cfg.cmax_rule,
        lambda_policy: cfg.lambda_policy,
        no_probe_policy: cfg.no_probe_policy,
        exclude_zero_queues: cfg.exclude_zero_queues,
        estimators: ids.clone(),
        hcm: cfg.hcm,
    };
    let series = outcomes.into_iter().next().map(|o| o.series).unwrap_or_default();
    Ok(EvalRun { report: EvalReport { metadata, cells }, estimators: ids, series })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_report<W: Write>(report: &EvalReport, format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, report)?;
            out.write_all(b"\n")?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["day", "lane", "estimator", "rmse", "mean_error", "n_obs", "avg_p"])?;
            for c in &report.cells {
                w.write_record([
                    c.day.format(DATE_FMT).to_string(),
                    c.lane.to_string(),
                    c.estimator.to_string(),
                    fmt_f(c.rmse),
                    fmt_f(c.mean_error),
                    c.n_obs.to_string(),
                    c.avg_p.map(fmt_f).unwrap_or_default(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn emit_report(report: &EvalReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_report(report, format, &mut buf)?;
    buf.flush()?;
    Ok(())
}

pub fn read_report_json<R: Read>(reader: R) -> Result<EvalReport> {
    Ok(serde_json::from_reader(reader)?)
}

/// One row per evaluated cycle: truth and each estimator's value for the first seed.
pub fn write_series<W: Write>(run: &EvalRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["day".to_string(), "time".into(), "lane".into(), "true_queue".into(), "probe_count".into()];
    header.extend(run.estimators.iter().map(|id| id.to_string()));
    w.write_record(&header)?;
    for row in &run.series {
        let mut rec = vec![
            row.day.format(DATE_FMT).to_string(),
            row.time.format(TIME_FMT).to_string(),
            row.lane.to_string(),
            row.true_queue.to_string(),
            row.probe_count.to_string(),
        ];
        rec.extend(row.estimates.iter().map(|&v| fmt_f(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
