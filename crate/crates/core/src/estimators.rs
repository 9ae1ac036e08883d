//! Cycle-by-cycle queue-length estimators.
//!
//! `NP1`/`NP2` are the nonparametric Negative Hypergeometric moments. `EST1`
//! and `EST2` are parametric estimators that plug in arrival-rate and
//! penetration-rate estimates, falling back to lane history when a cycle has
//! no probes. `HCM_DELAY` converts control delay to a queue through Little's
//! law and `Q_BACK` is the back-of-queue formula.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::distributions::{QueueObservation, QueueObservationNoTime};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorId {
    #[serde(rename = "NP1")]
    Np1,
    #[serde(rename = "NP2")]
    Np2,
    #[serde(rename = "EST1")]
    Est1,
    #[serde(rename = "EST2")]
    Est2,
    #[serde(rename = "HCM_DELAY")]
    HcmDelay,
    #[serde(rename = "Q_BACK")]
    QBack,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 6] = [
        EstimatorId::Np1,
        EstimatorId::Np2,
        EstimatorId::Est1,
        EstimatorId::Est2,
        EstimatorId::HcmDelay,
        EstimatorId::QBack,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorId::Np1 => "NP1",
            EstimatorId::Np2 => "NP2",
            EstimatorId::Est1 => "EST1",
            EstimatorId::Est2 => "EST2",
            EstimatorId::HcmDelay => "HCM_DELAY",
            EstimatorId::QBack => "Q_BACK",
        }
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown estimator {s:?}")))
    }
}

/// Expected queue (vehicles) and, for the nonparametric estimators, its variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimator: EstimatorId,
    pub mean: f64,
    pub variance: Option<f64>,
}

/// Signal timing in seconds. `cycle = red + green`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalCycle {
    cycle: f64,
    red: f64,
    green: f64,
}

impl SignalCycle {
    pub fn new(cycle: f64, red: f64) -> Result<Self> {
        if !(cycle > 0.0) || !(red >= 0.0) || red > cycle {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= red <= cycle and cycle > 0, got cycle = {cycle}, red = {red}"
            )));
        }
        Ok(Self { cycle, red, green: cycle - red })
    }

    /// Red phase taken as half the cycle.
    pub fn half_red(cycle: f64) -> Result<Self> {
        Self::new(cycle, cycle / 2.0)
    }

    pub fn cycle(&self) -> f64 {
        self.cycle
    }

    pub fn red(&self) -> f64 {
        self.red
    }

    pub fn green(&self) -> f64 {
        self.green
    }
}

/// Highway Capacity Manual delay-model constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HcmConfig {
    pub progression_factor: f64,
    pub incremental_delay_factor: f64,
    pub upstream_filtering: f64,
    /// Lane capacity, vehicles per hour.
    pub capacity_vph: f64,
    /// Saturation flow, vehicles per second.
    pub saturation_flow: f64,
    /// Analysis period in hours; `None` uses the cycle length (`C / 3600`).
    pub analysis_period_hours: Option<f64>,
}

impl Default for HcmConfig {
    fn default() -> Self {
        Self {
            progression_factor: 1.0,
            incremental_delay_factor: 0.5,
            upstream_filtering: 1.0,
            capacity_vph: 1029.0,
            saturation_flow: 0.286,
            analysis_period_hours: None,
        }
    }
}

impl HcmConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("progression_factor", self.progression_factor),
            ("incremental_delay_factor", self.incremental_delay_factor),
            ("upstream_filtering", self.upstream_filtering),
            ("capacity_vph", self.capacity_vph),
            ("saturation_flow", self.saturation_flow),
            ("analysis_period_hours", self.analysis_period_hours.unwrap_or(1.0)),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Running means of `(l, m, t)` over every recorded cycle of one lane.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeHistory {
    sum_l: f64,
    sum_m: f64,
    sum_t: f64,
    cycles: u64,
    probe_cycles: u64,
}

/// Snapshot of the history means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryMeans {
    pub l: f64,
    pub m: f64,
    pub t: f64,
}

impl ProbeHistory {
    pub fn new() -> Self {
        Self::default()
    }

    /// History equivalent to `cycles` cycles whose means are `(l, m, t)`.
    pub fn from_means(l: f64, m: f64, t: f64, cycles: u64) -> Result<Self> {
        if cycles == 0 || !(m > 0.0) || !(l >= m) || !(t > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "history means need cycles >= 1, 0 < m <= l, t > 0; got l = {l}, m = {m}, t = {t}"
            )));
        }
        let n = cycles as f64;
        Ok(Self { sum_l: l * n, sum_m: m * n, sum_t: t * n, cycles, probe_cycles: cycles })
    }

    pub fn record(&mut self, obs: &QueueObservation) {
        self.sum_l += obs.l() as f64;
        self.sum_m += obs.m() as f64;
        self.sum_t += obs.t() as f64;
        self.cycles += 1;
        if obs.has_probes() {
            self.probe_cycles += 1;
        }
    }

    pub fn cycles(&self) -> u64 {
        self.cycles
    }

    /// `None` until a cycle with probes has been recorded.
    pub fn means(&self) -> Option<HistoryMeans> {
        if self.probe_cycles == 0 {
            return None;
        }
        let n = self.cycles as f64;
        Some(HistoryMeans { l: self.sum_l / n, m: self.sum_m / n, t: self.sum_t / n })
    }
}

/// Arrival-rate (veh/s) and penetration-rate estimates from one observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimates {
    pub lambda1: f64,
    pub lambda2: f64,
    pub p1: f64,
    pub p2: f64,
}

pub fn rate_estimates(obs: &QueueObservation) -> Result<RateEstimates> {
    if !obs.has_probes() {
        return Err(Error::NoProbes);
    }
    let (l, m, t, r) = (obs.l() as f64, obs.m() as f64, obs.t() as f64, obs.red() as f64);
    Ok(RateEstimates {
        lambda1: l / r,
        lambda2: (l - m) / t + m / r,
        p1: m / l,
        p2: m * t / (m * t + (l - m) * r),
    })
}

fn big(v: u32) -> BigInt {
    BigInt::from(v)
}

/// Exact mean and variance of the time-conditioned queue distribution:
/// `l + (l-m+1)(R-t)/(t+1)` and
/// `(l-m+1)(2R+2)(2R-2t) / ((2t+2)(2t+3)) * [1 - (l-m+1)/(2t+2)]`.
pub fn np_est1_exact(obs: &QueueObservation) -> (BigRational, BigRational) {
    let (l, m, t, r) = (obs.l(), obs.m(), obs.t(), obs.red());
    let w = big(l - m + 1);
    let mean = BigRational::from_integer(big(l))
        + BigRational::new(&w * big(r - t), big(t + 1));
    let spread = BigRational::new(&w * big(2 * r + 2) * big(2 * r - 2 * t), big(2 * t + 2) * big(2 * t + 3));
    let keep = BigRational::new(big(2 * t + 2) - &w, big(2 * t + 2));
    (mean, spread * keep)
}

pub fn np_est1(obs: &QueueObservation) -> Estimate {
    let (l, m, t, r) = (obs.l() as f64, obs.m() as f64, obs.t() as f64, obs.red() as f64);
    let w = l - m + 1.0;
    let mean = l + w * (r - t) / (t + 1.0);
    let variance =
        w * (2.0 * r + 2.0) * (2.0 * r - 2.0 * t) / ((2.0 * t + 2.0) * (2.0 * t + 3.0)) * (1.0 - w / (2.0 * t + 2.0));
    Estimate { estimator: EstimatorId::Np1, mean, variance: Some(variance) }
}

/// Exact mean and variance of the time-free queue distribution:
/// `l + (l-m+1)(C-l)/(l+2)` and
/// `(l-m+1)(C+2)(C-l) / ((l+2)(l+3)) * [1 - (l-m+1)/(l+2)]`.
pub fn np_est2_exact(obs: &QueueObservationNoTime) -> (BigRational, BigRational) {
    let (l, m, c) = (obs.l(), obs.m(), obs.cmax());
    let w = big(l - m + 1);
    let mean = BigRational::from_integer(big(l)) + BigRational::new(&w * big(c - l), big(l + 2));
    let spread = BigRational::new(&w * big(c + 2) * big(c - l), big(l + 2) * big(l + 3));
    let keep = BigRational::new(big(l + 2) - &w, big(l + 2));
    (mean, spread * keep)
}

pub fn np_est2(obs: &QueueObservationNoTime) -> Estimate {
    let (l, m, c) = (obs.l() as f64, obs.m() as f64, obs.cmax() as f64);
    let w = l - m + 1.0;
    let mean = l + w * (c - l) / (l + 2.0);
    let variance = w * (c + 2.0) * (c - l) / ((l + 2.0) * (l + 3.0)) * (1.0 - w / (l + 2.0));
    Estimate { estimator: EstimatorId::Np2, mean, variance: Some(variance) }
}

fn parametric(estimator: EstimatorId, mean: f64) -> Estimate {
    Estimate { estimator, mean, variance: None }
}

/// `l + (l-m)(1 - t/R)`, or with history means when the cycle has no probes:
/// `(1 - m̄/l̄)(l̄ + (l̄-m̄)(1 - t̄/R))`.
pub fn param_est1(obs: &QueueObservation, hist: &ProbeHistory) -> Result<Estimate> {
    let r = obs.red() as f64;
    let mean = if obs.has_probes() {
        let (l, m, t) = (obs.l() as f64, obs.m() as f64, obs.t() as f64);
        l + (l - m) * (1.0 - t / r)
    } else {
        let h = hist.means().ok_or(Error::HistoryRequired)?;
        (1.0 - h.m / h.l) * (h.l + (h.l - h.m) * (1.0 - h.t / r))
    };
    Ok(parametric(EstimatorId::Est1, mean))
}

/// `m + (l-m)R/t`, or `m̄ + (l̄-m̄)R/t̄` when the cycle has no probes.
pub fn param_est2(obs: &QueueObservation, hist: &ProbeHistory) -> Result<Estimate> {
    let r = obs.red() as f64;
    let mean = if obs.has_probes() {
        let (l, m, t) = (obs.l() as f64, obs.m() as f64, obs.t() as f64);
        m + (l - m) * r / t
    } else {
        let h = hist.means().ok_or(Error::HistoryRequired)?;
        h.m + (h.l - h.m) * r / h.t
    };
    Ok(parametric(EstimatorId::Est2, mean))
}

/// Uniform and incremental control-delay terms, seconds per vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDelay {
    pub uniform: f64,
    pub incremental: f64,
}

impl ControlDelay {
    /// `d1 * PF + d2`; the initial-queue term is zero.
    pub fn total(&self, cfg: &HcmConfig) -> f64 {
        self.uniform * cfg.progression_factor + self.incremental
    }
}

pub fn hcm_control_delay(cycle: &SignalCycle, lambda_hat: f64, cfg: &HcmConfig) -> Result<ControlDelay> {
    if !(lambda_hat >= 0.0) || !lambda_hat.is_finite() {
        return Err(Error::Precondition(format!("arrival rate must be >= 0, got {lambda_hat}")));
    }
    cfg.validate()?;
    let c = cycle.cycle();
    let g_ratio = cycle.green() / c;
    let x = lambda_hat / cfg.saturation_flow;
    let denom = 1.0 - x.min(1.0) * g_ratio;
    if denom <= 0.0 {
        return Err(Error::DivisionGuard(format!(
            "uniform delay undefined for G/C = {g_ratio} with X = {x}"
        )));
    }
    let uniform = c / 2.0 * (1.0 - g_ratio).powi(2) / denom;
    let period = cfg.analysis_period_hours.unwrap_or(c / 3600.0);
    let k_i = cfg.incremental_delay_factor * cfg.upstream_filtering;
    let incremental = 900.0
        * period
        * ((x - 1.0) + ((x - 1.0).powi(2) + 8.0 * k_i * x / (cfg.capacity_vph * period)).sqrt());
    Ok(ControlDelay { uniform, incremental })
}

/// Queue from control delay by Little's law: `(d1 PF + d2) * λ̂`.
pub fn hcm_delay_queue(cycle: &SignalCycle, lambda_hat: f64, cfg: &HcmConfig) -> Result<Estimate> {
    let delay = hcm_control_delay(cycle, lambda_hat, cfg)?;
    Ok(parametric(EstimatorId::HcmDelay, delay.total(cfg) * lambda_hat))
}

/// Back of queue `λ̂ (R + g_s)` with service time `g_s = λ̂ R / (x - λ̂)`.
pub fn q_back(lambda_hat: f64, red: f64, saturation_flow: f64) -> Result<Estimate> {
    if !(lambda_hat >= 0.0) || !(red >= 0.0) {
        return Err(Error::Precondition(format!(
            "need lambda >= 0 and red >= 0, got lambda = {lambda_hat}, red = {red}"
        )));
    }
    if lambda_hat >= saturation_flow {
        return Err(Error::Oversaturated { lambda: lambda_hat, x_sat: saturation_flow });
    }
    let service = lambda_hat * red / (saturation_flow - lambda_hat);
    Ok(parametric(EstimatorId::QBack, lambda_hat * (red + service)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::observation_grid;

    fn obs(l: u32, m: u32, t: u32, r: u32) -> QueueObservation {
        QueueObservation::new(l, m, t, r).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn np_est1_worked_example() {
        let e = np_est1(&obs(4, 2, 20, 45));
        assert!(close(e.mean, 4.0 + 75.0 / 21.0, 1e-12));
        // 3*92*50/(42*43) * 39/42
        let var = 13800.0 / 1806.0 * 39.0 / 42.0;
        assert!(close(e.variance.unwrap(), var, 1e-12));
        assert!(close(e.variance.unwrap(), 7.0954, 1e-4));
    }

    #[test]
    fn np_est1_edges() {
        let e = np_est1(&obs(4, 2, 45, 45));
        assert_eq!(e.mean, 4.0);
        assert_eq!(e.variance, Some(0.0));
        let prior = np_est1(&QueueObservation::no_probes(45));
        assert_eq!(prior.mean, 45.0);
    }

    #[test]
    fn np_est2_examples() {
        let e = np_est2(&QueueObservationNoTime::new(4, 2, 90).unwrap());
        assert_eq!(e.mean, 47.0);
        let full = np_est2(&QueueObservationNoTime::new(30, 7, 30).unwrap());
        assert_eq!(full.mean, 30.0);
        let all_probes = np_est2(&QueueObservationNoTime::new(5, 5, 40).unwrap());
        assert!(close(all_probes.mean, 5.0 + 35.0 / 7.0, 1e-12));
    }

    #[test]
    fn exact_and_float_closed_forms_agree() {
        for o in observation_grid(8) {
            let (mean, var) = np_est1_exact(&o);
            let e = np_est1(&o);
            let mf = crate::distributions::to_f64(&mean);
            let vf = crate::distributions::to_f64(&var);
            assert!(close(e.mean, mf, 1e-12 * mf.max(1.0)), "{o:?}");
            assert!(close(e.variance.unwrap(), vf, 1e-12 * vf.max(1.0)), "{o:?}");
        }
    }

    #[test]
    fn param_est_examples() {
        let o = obs(4, 2, 20, 45);
        let empty = ProbeHistory::new();
        assert!(close(param_est1(&o, &empty).unwrap().mean, 4.0 + 2.0 * 25.0 / 45.0, 1e-12));
        assert_eq!(param_est2(&o, &empty).unwrap().mean, 6.5);

        let all = obs(3, 3, 10, 45);
        assert_eq!(param_est1(&all, &empty).unwrap().mean, 3.0);
        assert_eq!(param_est2(&all, &empty).unwrap().mean, 3.0);

        let none = QueueObservation::no_probes(45);
        let hist = ProbeHistory::from_means(2.0, 1.0, 10.0, 4).unwrap();
        let e1 = param_est1(&none, &hist).unwrap().mean;
        assert!(close(e1, 0.5 * (2.0 + 35.0 / 45.0), 1e-12));
        assert!(close(param_est2(&none, &hist).unwrap().mean, 5.5, 1e-12));

        assert!(matches!(param_est1(&none, &empty), Err(Error::HistoryRequired)));
        assert!(matches!(param_est2(&none, &empty), Err(Error::HistoryRequired)));
    }

    #[test]
    fn history_running_means() {
        let mut h = ProbeHistory::new();
        h.record(&QueueObservation::no_probes(30));
        assert!(h.means().is_none());
        h.record(&obs(4, 2, 10, 30));
        h.record(&obs(2, 1, 20, 30));
        let means = h.means().unwrap();
        assert_eq!(h.cycles(), 3);
        assert!(close(means.l, 2.0, 1e-15));
        assert!(close(means.m, 1.0, 1e-15));
        assert!(close(means.t, 10.0, 1e-15));
    }

    #[test]
    fn rate_estimate_example() {
        let r = rate_estimates(&obs(4, 2, 20, 45)).unwrap();
        assert!(close(r.lambda1, 4.0 / 45.0, 1e-15));
        assert!(close(r.lambda2, 2.0 / 20.0 + 2.0 / 45.0, 1e-15));
        assert_eq!(r.p1, 0.5);
        assert!(close(r.p2, 40.0 / 130.0, 1e-15));

        let all = rate_estimates(&obs(3, 3, 5, 45)).unwrap();
        assert!(close(all.lambda2, 3.0 / 45.0, 1e-15));
        assert_eq!(all.p1, 1.0);
        assert_eq!(all.p2, 1.0);

        assert!(matches!(rate_estimates(&QueueObservation::no_probes(45)), Err(Error::NoProbes)));
    }

    #[test]
    fn hcm_uniform_delay_hand_values() {
        let cfg = HcmConfig::default();
        let cycle = SignalCycle::new(70.0, 35.0).unwrap();
        let half = hcm_control_delay(&cycle, 0.5 * 0.286, &cfg).unwrap();
        assert!(close(half.uniform, 35.0 / 3.0, 1e-9));
        let x = 0.5;
        let period = 70.0 / 3600.0;
        let d2 = 900.0 * period * ((x - 1.0) + ((x - 1.0_f64).powi(2) + 8.0 * 0.5 * x / (1029.0 * period)).sqrt());
        assert!(close(half.incremental, d2, 1e-12));
        let e = hcm_delay_queue(&cycle, 0.143, &cfg).unwrap();
        assert!(close(e.mean, (half.uniform + half.incremental) * 0.143, 1e-12));

        let unit = hcm_control_delay(&cycle, 0.286, &cfg).unwrap();
        assert!(close(unit.uniform, 17.5, 1e-9));
    }

    #[test]
    fn hcm_zero_rate_and_guard() {
        let cfg = HcmConfig::default();
        let cycle = SignalCycle::new(70.0, 35.0).unwrap();
        assert_eq!(hcm_delay_queue(&cycle, 0.0, &cfg).unwrap().mean, 0.0);
        let all_green = SignalCycle::new(70.0, 0.0).unwrap();
        assert!(matches!(hcm_delay_queue(&all_green, 0.3, &cfg), Err(Error::DivisionGuard(_))));
        assert!(hcm_delay_queue(&all_green, 0.1, &cfg).is_ok());
        assert!(hcm_delay_queue(&cycle, -0.1, &cfg).is_err());
    }

    #[test]
    fn q_back_examples() {
        let e = q_back(0.1, 35.0, 0.286).unwrap();
        let gs = 3.5 / 0.186;
        assert!(close(e.mean, 0.1 * (35.0 + gs), 1e-12));
        assert!(close(e.mean, 5.382, 1e-3));
        assert_eq!(q_back(0.0, 35.0, 0.286).unwrap().mean, 0.0);
        assert!(matches!(q_back(0.286, 35.0, 0.286), Err(Error::Oversaturated { .. })));
        assert!(q_back(0.2859, 35.0, 0.286).is_ok());
    }

    #[test]
    fn estimator_ids_round_trip() {
        for id in EstimatorId::ALL {
            assert_eq!(id.as_str().parse::<EstimatorId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{}\"", id.as_str()));
        }
        assert!("XYZ".parse::<EstimatorId>().is_err());
    }

    #[test]
    fn signal_cycle_validation() {
        assert!(SignalCycle::new(0.0, 0.0).is_err());
        assert!(SignalCycle::new(60.0, 70.0).is_err());
        let c = SignalCycle::half_red(70.0).unwrap();
        assert_eq!((c.red(), c.green()), (35.0, 35.0));
    }
}
