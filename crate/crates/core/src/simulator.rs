//! Slot-level synthetic queues, the randomized observation protocol used for
//! evaluation, and two independent checks of the time-conditioned PMF: an
//! exhaustive counting oracle and a rejection-sampling Monte Carlo estimate.
//!
//! The counting model behind both checks: given a total queue `n`, the `n - m`
//! non-probe arrivals occupy a uniformly random subset of the `2R` red-phase
//! slots, the last probe reports that `l - m` of them fell in the first `2t`
//! slots, and every candidate `n` starts out equally likely.

use chrono::{Duration, NaiveDateTime};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::distributions::QueueObservation;
use crate::error::{Error, Result};
use crate::evaluation::{CycleRecord, Lane};
use crate::rng::substream;

/// Largest slot count the exhaustive oracle will enumerate (`2^20` patterns).
pub const MAX_ORACLE_SLOTS: u32 = 20;

/// Per-slot arrival generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Each slot holds an arrival independently with `arrival_prob`.
    IndependentSlots { arrival_prob: f64 },
    /// Two-state chain producing runs of occupied slots: an empty slot is
    /// followed by an arrival with `start_prob`, an occupied one with `continue_prob`.
    Platoon { start_prob: f64, continue_prob: f64 },
}

impl ArrivalProcess {
    /// Platoon chain with the given stationary occupancy and mean run length (slots).
    pub fn platoon_with_occupancy(occupancy: f64, mean_run: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&occupancy) || !(mean_run >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "platoon needs occupancy in [0, 1) and mean run >= 1, got {occupancy}, {mean_run}"
            )));
        }
        let continue_prob = 1.0 - 1.0 / mean_run;
        // stationary occupancy = s / (s + 1 - c)
        let start_prob = occupancy * (1.0 - continue_prob) / (1.0 - occupancy);
        let p = ArrivalProcess::Platoon { start_prob, continue_prob };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let probs: &[f64] = match self {
            ArrivalProcess::IndependentSlots { arrival_prob } => &[*arrival_prob],
            ArrivalProcess::Platoon { start_prob, continue_prob } => &[*start_prob, *continue_prob],
        };
        if probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("probabilities must lie in [0, 1]: {self:?}")))
        }
    }

    pub fn fill<R: Rng + ?Sized>(&self, slots: usize, rng: &mut R) -> Vec<bool> {
        match *self {
            ArrivalProcess::IndependentSlots { arrival_prob } => {
                (0..slots).map(|_| rng.random_bool(arrival_prob)).collect()
            }
            ArrivalProcess::Platoon { start_prob, continue_prob } => {
                let mut prev = false;
                (0..slots)
                    .map(|_| {
                        prev = rng.random_bool(if prev { continue_prob } else { start_prob });
                        prev
                    })
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlotState {
    Empty,
    Arrival,
    Probe,
}

/// Slot contents of one red phase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrivalPattern {
    slots: Vec<SlotState>,
    slots_per_second: u32,
}

impl ArrivalPattern {
    pub fn new(slots: Vec<SlotState>, slots_per_second: u32) -> Result<Self> {
        validate_slots_per_second(slots_per_second)?;
        if slots.len() % slots_per_second as usize != 0 {
            return Err(Error::InvalidConfig(format!(
                "{} slots is not a whole number of seconds at {slots_per_second} slots/s",
                slots.len()
            )));
        }
        Ok(Self { slots, slots_per_second })
    }

    pub fn slots(&self) -> &[SlotState] {
        &self.slots
    }

    pub fn red(&self) -> u32 {
        (self.slots.len() / self.slots_per_second as usize) as u32
    }

    /// Total arrivals (the true queue at end of red).
    pub fn arrivals(&self) -> u32 {
        self.slots.iter().filter(|s| **s != SlotState::Empty).count() as u32
    }

    pub fn probes(&self) -> u32 {
        self.slots.iter().filter(|s| **s == SlotState::Probe).count() as u32
    }

    /// `(l, m, t)` as reported by the probes. The last probe in 1-based slot `s`
    /// joined during second `t = ceil(s / slots_per_second)`.
    pub fn observation(&self) -> QueueObservation {
        let red = self.red();
        let Some(last) = self.slots.iter().rposition(|s| *s == SlotState::Probe) else {
            return QueueObservation::no_probes(red);
        };
        let l = self.slots[..=last].iter().filter(|s| **s != SlotState::Empty).count() as u32;
        let t = (last as u32 + 1).div_ceil(self.slots_per_second);
        QueueObservation::new(l, self.probes(), t, red)
            .expect("slot extraction always yields a valid observation")
    }
}

fn validate_slots_per_second(sps: u32) -> Result<()> {
    if sps == 1 || sps == 2 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "slots per second must be 1 or 2 (at most one arrival per half second), got {sps}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub slots_per_second: u32,
    pub process: ArrivalProcess,
    /// Probe-vehicle market penetration.
    pub probe_prob: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(process: ArrivalProcess, probe_prob: f64, seed: u64) -> Result<Self> {
        let cfg = Self { slots_per_second: 2, process, probe_prob, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        validate_slots_per_second(self.slots_per_second)?;
        self.process.validate()?;
        if !(0.0..=1.0).contains(&self.probe_prob) {
            return Err(Error::InvalidConfig(format!(
                "probe probability must lie in [0, 1], got {}",
                self.probe_prob
            )));
        }
        Ok(())
    }

    /// Generator for the `index`-th independent task under this seed.
    pub fn task_rng(&self, index: u64) -> ChaCha8Rng {
        substream(self.seed, &[index])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulatedCycle {
    pub pattern: ArrivalPattern,
    pub observation: QueueObservation,
    pub n_true: u32,
}

pub fn simulate_cycle<R: Rng + ?Sized>(cfg: &SimConfig, red: u32, rng: &mut R) -> SimulatedCycle {
    let n_slots = (cfg.slots_per_second * red) as usize;
    let slots = cfg
        .process
        .fill(n_slots, rng)
        .into_iter()
        .map(|arrival| match arrival {
            false => SlotState::Empty,
            true if rng.random_bool(cfg.probe_prob) => SlotState::Probe,
            true => SlotState::Arrival,
        })
        .collect();
    let pattern = ArrivalPattern { slots, slots_per_second: cfg.slots_per_second };
    let observation = pattern.observation();
    let n_true = pattern.arrivals();
    SimulatedCycle { pattern, observation, n_true }
}

/// Synthetic single-lane corpus: `cycles` consecutive cycles of length `2 * red`
/// starting at `start`, each simulated from its own substream.
pub fn simulate_corpus(
    cfg: &SimConfig,
    cycles: usize,
    red: u32,
    start: NaiveDateTime,
    lane: Lane,
) -> Result<Vec<CycleRecord>> {
    cfg.validate()?;
    if red == 0 {
        return Err(Error::InvalidConfig("red duration must be at least 1 s".into()));
    }
    let cycle_seconds = 2 * red;
    Ok((0..cycles)
        .map(|i| {
            let mut rng = cfg.task_rng(i as u64);
            let sim = simulate_cycle(cfg, red, &mut rng);
            let at = start + Duration::seconds(i as i64 * cycle_seconds as i64);
            CycleRecord {
                day: at.date(),
                time: at.time(),
                lane,
                true_queue: sim.n_true,
                probe_count: sim.observation.m(),
                cycle_seconds: cycle_seconds as f64,
            }
        })
        .collect())
}

/// Distribution over `n` as `(first, probabilities)` on a contiguous support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OraclePmf {
    pub first: u64,
    pub probs: Vec<BigRational>,
}

impl OraclePmf {
    pub fn to_f64(&self) -> Vec<(u64, f64)> {
        (self.first..)
            .zip(self.probs.iter().map(crate::distributions::to_f64))
            .collect()
    }
}

/// Exhaustive enumeration of non-probe arrangements over the `2R` slots.
///
/// For each candidate `n`, the likelihood is the fraction of `(n - m)`-arrival
/// patterns that put exactly `l - m` arrivals in the first `2t` slots. Candidates
/// are weighted equally and normalized. No binomial coefficients are used.
pub fn conditional_oracle(l: u32, m: u32, t: u32, red: u32) -> Result<OraclePmf> {
    let obs = QueueObservation::new(l, m, t, red)?;
    let slots = 2 * red;
    if slots > MAX_ORACLE_SLOTS {
        return Err(Error::EnumerationBudget { slots, max: MAX_ORACLE_SLOTS });
    }
    let window = 2 * t;
    let window_mask: u32 = if window == 32 { u32::MAX } else { (1u32 << window) - 1 };
    // counts[k][j]: patterns with k arrivals, j of them inside the window
    let width = slots as usize + 1;
    let mut counts = vec![0u64; width * width];
    for mask in 0u32..(1u32 << slots) {
        let k = mask.count_ones() as usize;
        let j = (mask & window_mask).count_ones() as usize;
        counts[k * width + j] += 1;
    }
    let ahead = (l - m) as usize;
    let first = *obs.support().start();
    let likelihoods: Vec<BigRational> = obs
        .support()
        .map(|n| {
            let k = (n - m as u64) as usize;
            let row = &counts[k * width..(k + 1) * width];
            let total: u64 = row.iter().sum();
            BigRational::new(BigInt::from(row[ahead]), BigInt::from(total))
        })
        .collect();
    let norm: BigRational = likelihoods.iter().cloned().sum();
    Ok(OraclePmf { first, probs: likelihoods.into_iter().map(|w| w / &norm).collect() })
}

/// Empirical distribution of `n` from accepted Monte Carlo draws.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalPmf {
    pub first: u64,
    pub counts: Vec<u64>,
    pub accepted: u64,
    pub attempts: u64,
}

impl EmpiricalPmf {
    pub fn frequencies(&self) -> Vec<(u64, f64)> {
        (self.first..)
            .zip(self.counts.iter().map(|&c| c as f64 / self.accepted as f64))
            .collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.attempts as f64
    }
}

/// Acceptance-rate floor for [`monte_carlo_conditional`].
pub const MIN_ACCEPTANCE_RATE: f64 = 1e-4;
const ACCEPTANCE_WARMUP: u64 = 20_000;

/// Rejection sampler for the conditional distribution of `n` given `(l, m, t, R)`.
///
/// Each attempt draws `n - m` uniformly from `0..=2R`, then draws arrival
/// patterns from `process` until one has exactly `n - m` arrivals, and accepts
/// when `l - m` of them lie in the first `2t` slots.
pub fn monte_carlo_conditional<R: Rng + ?Sized>(
    l: u32,
    m: u32,
    t: u32,
    red: u32,
    samples: u64,
    process: &ArrivalProcess,
    rng: &mut R,
) -> Result<EmpiricalPmf> {
    let obs = QueueObservation::new(l, m, t, red)?;
    process.validate()?;
    let slots = 2 * red as usize;
    let window = 2 * t as usize;
    let ahead = (l - m) as usize;
    let first = *obs.support().start();
    let mut counts = vec![0u64; obs.support().count()];
    let mut accepted = 0u64;
    let mut attempts = 0u64;
    let mut draws = 0u64;

    while accepted < samples {
        attempts += 1;
        let k = rng.random_range(0..=slots);
        let pattern = loop {
            draws += 1;
            let p = process.fill(slots, rng);
            if p.iter().filter(|&&a| a).count() == k {
                break p;
            }
            if draws >= ACCEPTANCE_WARMUP && (accepted as f64) < MIN_ACCEPTANCE_RATE * draws as f64 {
                return Err(Error::AcceptanceRate {
                    rate: accepted as f64 / draws as f64,
                    floor: MIN_ACCEPTANCE_RATE,
                });
            }
        };
        if pattern[..window].iter().filter(|&&a| a).count() == ahead {
            let n = k as u64 + m as u64;
            counts[(n - first) as usize] += 1;
            accepted += 1;
        }
    }
    Ok(EmpiricalPmf { first, counts, accepted, attempts })
}

/// Total-variation distance between two distributions given as `(n, p)` pairs.
pub fn total_variation(a: &[(u64, f64)], b: &[(u64, f64)]) -> f64 {
    use std::collections::BTreeMap;
    let mut diff: BTreeMap<u64, f64> = BTreeMap::new();
    for &(n, p) in a {
        *diff.entry(n).or_default() += p;
    }
    for &(n, p) in b {
        *diff.entry(n).or_default() -= p;
    }
    0.5 * diff.values().map(|d| d.abs()).sum::<f64>()
}

/// Randomized `(l, t)` for a cycle where only the true queue and probe count are known.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolSample {
    pub l: u32,
    pub t: u32,
}

impl ProtocolSample {
    pub fn observation(&self, m: u32, red: u32) -> Result<QueueObservation> {
        QueueObservation::new(self.l, m, self.t, red)
    }
}

/// Unclamped joining time of the last probe: `Gamma(shape = l, scale = C / (2n))`.
pub fn draw_join_time<R: Rng + ?Sized>(l: u32, n_true: u32, cycle: f64, rng: &mut R) -> Result<f64> {
    let scale = cycle / (2.0 * n_true as f64);
    let gamma = Gamma::new(l as f64, scale)
        .map_err(|e| Error::Precondition(format!("gamma(shape = {l}, scale = {scale}): {e}")))?;
    Ok(gamma.sample(rng))
}

/// Draws `l ~ U{m, ..., n}` and `t ~ Gamma(l, C/(2n))`, rounds `t` to the nearest
/// second and clamps it into `[max(1, ceil(l/2)), R]` so that the `l` arrivals fit
/// in `2t` slots. Without probes (or without a queue) the sample is `(0, 0)`.
pub fn protocol_sample<R: Rng + ?Sized>(
    n_true: u32,
    m: u32,
    cycle: f64,
    red: u32,
    rng: &mut R,
) -> Result<ProtocolSample> {
    if m > n_true {
        return Err(Error::Precondition(format!("probe count {m} exceeds queue {n_true}")));
    }
    if n_true == 0 || m == 0 {
        return Ok(ProtocolSample { l: 0, t: 0 });
    }
    if red == 0 || !(cycle > 0.0) {
        return Err(Error::Precondition(format!("need red >= 1 and cycle > 0, got {red}, {cycle}")));
    }
    if m > 2 * red {
        return Err(Error::Precondition(format!("{m} probes cannot fit in the {} slots of a {red} s red", 2 * red)));
    }
    let mut l = rng.random_range(m..=n_true);
    let raw = draw_join_time(l, n_true, cycle, rng)?;
    // l arrivals cannot exceed the 2R slots of the red phase
    l = l.min(2 * red).max(m);
    let lo = l.div_ceil(2).max(1);
    let t = (raw.round() as u32).clamp(lo.min(red), red);
    Ok(ProtocolSample { l, t })
}
