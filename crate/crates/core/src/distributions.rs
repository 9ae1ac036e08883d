//! Negative Hypergeometric distribution and the conditional queue-length
//! distributions built on it.
//!
//! The red phase is discretized into `2R` half-second slots holding at most one
//! arrival each; the factor of two is absorbed into every formula below. All
//! probabilities are evaluated as exact rationals first, with `*_f64` variants
//! for callers that only need floating values.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{choose, choose_f64};
use crate::error::{Error, Result};

fn ratio(num: BigInt, den: BigInt) -> BigRational {
    BigRational::new(num, den)
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn c(n: i64, k: i64) -> BigInt {
    debug_assert!(n >= 0, "negative upper index {n}");
    if n < 0 {
        return BigInt::zero();
    }
    BigInt::from(choose(n as u64, k))
}

fn cf(n: i64, k: i64) -> f64 {
    if n < 0 {
        return 0.0;
    }
    choose_f64(n as u64, k)
}

/// Rational probability in `[0, 1]`. Comparison is by value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExactProbability(BigRational);

impl ExactProbability {
    pub fn new(numerator: BigInt, denominator: BigInt) -> Result<Self> {
        if denominator.is_zero() {
            return Err(Error::Precondition("zero denominator".into()));
        }
        Self::from_rational(ratio(numerator, denominator))
    }

    pub fn from_rational(value: BigRational) -> Result<Self> {
        if value < rat(0) || value > rat(1) {
            return Err(Error::Precondition(format!("probability {value} outside [0, 1]")));
        }
        Ok(Self(value))
    }

    pub fn zero() -> Self {
        Self(rat(0))
    }

    pub fn one() -> Self {
        Self(rat(1))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn into_inner(self) -> BigRational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.0)
    }
}

impl std::fmt::Display for ExactProbability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Negative Hypergeometric parameters: population `S`, successes `K`,
/// and the failure count `r` at which drawing stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NhgParams {
    population: u64,
    successes: u64,
    stop_failures: u64,
}

impl NhgParams {
    /// Requires `K <= S` and `1 <= r <= S - K + 1`. The upper boundary
    /// `r = S - K + 1` is the degenerate case where every success is drawn.
    pub fn new(population: u64, successes: u64, stop_failures: u64) -> Result<Self> {
        if successes > population {
            return Err(Error::InvalidParams(format!(
                "K = {successes} exceeds S = {population}"
            )));
        }
        if stop_failures == 0 || stop_failures > population - successes + 1 {
            return Err(Error::InvalidParams(format!(
                "r = {stop_failures} outside [1, S - K + 1 = {}]",
                population - successes + 1
            )));
        }
        Ok(Self { population, successes, stop_failures })
    }

    pub fn population(&self) -> u64 {
        self.population
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn stop_failures(&self) -> u64 {
        self.stop_failures
    }

    fn exhausts_failures(&self) -> bool {
        self.stop_failures == self.population - self.successes + 1
    }
}

/// `C(k+r-1, k) C(S-r-k, K-k) / C(S, K)`.
pub fn nhg_pmf(k: i64, p: &NhgParams) -> ExactProbability {
    let (s, kk, r) = (p.population as i64, p.successes as i64, p.stop_failures as i64);
    if k < 0 || k > kk {
        return ExactProbability::zero();
    }
    if p.exhausts_failures() {
        return if k == kk { ExactProbability::one() } else { ExactProbability::zero() };
    }
    let num = c(k + r - 1, k) * c(s - r - k, kk - k);
    ExactProbability(ratio(num, c(s, kk)))
}

pub fn nhg_pmf_f64(k: i64, p: &NhgParams) -> f64 {
    let (s, kk, r) = (p.population as i64, p.successes as i64, p.stop_failures as i64);
    if k < 0 || k > kk {
        return 0.0;
    }
    if p.exhausts_failures() {
        return if k == kk { 1.0 } else { 0.0 };
    }
    cf(k + r - 1, k) * cf(s - r - k, kk - k) / cf(s, kk)
}

/// `rK / (S - K + 1)`.
pub fn nhg_mean(p: &NhgParams) -> BigRational {
    let (s, k, r) = (p.population as i64, p.successes as i64, p.stop_failures as i64);
    ratio(BigInt::from(r * k), BigInt::from(s - k + 1))
}

/// `rK(S+1)(S-K-r+1) / ((S-K+1)^2 (S-K+2))`.
pub fn nhg_var(p: &NhgParams) -> BigRational {
    let (s, k, r) = (p.population as i64, p.successes as i64, p.stop_failures as i64);
    let num = BigInt::from(r) * k * (s + 1) * (s - k - r + 1);
    let den = BigInt::from(s - k + 1).pow(2) * (s - k + 2);
    ratio(num, den)
}

/// Probe evidence for one lane and cycle.
///
/// `l` is the queue position of the last probe vehicle, `m` the number of probes
/// in the queue, `t` the whole second (from start of red) at which the last
/// probe joined, `red` the red duration `R` in whole seconds. Without probes the
/// observation is `l = m = t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueueObservation {
    l: u32,
    m: u32,
    t: u32,
    red: u32,
}

impl QueueObservation {
    pub fn new(l: u32, m: u32, t: u32, red: u32) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidObservation(msg));
        if m > l {
            return bad(format!("m = {m} exceeds l = {l}"));
        }
        if t > red {
            return bad(format!("t = {t} exceeds R = {red}"));
        }
        if m == 0 {
            if l != 0 || t != 0 {
                return bad(format!("no probes requires l = t = 0, got l = {l}, t = {t}"));
            }
        } else {
            if t == 0 {
                return bad("probe joining time must be at least 1 s".into());
            }
            if l > 2 * t {
                return bad(format!("l = {l} arrivals cannot fit in 2t = {} slots", 2 * t));
            }
        }
        Ok(Self { l, m, t, red })
    }

    /// Observation carrying no probe information for a red phase of `red` seconds.
    pub fn no_probes(red: u32) -> Self {
        Self { l: 0, m: 0, t: 0, red }
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn t(&self) -> u32 {
        self.t
    }

    pub fn red(&self) -> u32 {
        self.red
    }

    pub fn has_probes(&self) -> bool {
        self.m > 0
    }

    /// Inclusive support `l ..= 2R - 2t + l`.
    pub fn support(&self) -> std::ops::RangeInclusive<u64> {
        let l = self.l as u64;
        l..=(2 * (self.red - self.t) as u64 + l)
    }

    /// Equivalent Negative Hypergeometric parameters
    /// `S = 2R + 1`, `K = 2R - 2t`, `r = l - m + 1`, with `k = n - l`.
    pub fn nhg_params(&self) -> NhgParams {
        NhgParams {
            population: 2 * self.red as u64 + 1,
            successes: 2 * (self.red - self.t) as u64,
            stop_failures: (self.l - self.m + 1) as u64,
        }
    }

    fn ints(&self) -> (i64, i64, i64, i64) {
        (self.l as i64, self.m as i64, self.t as i64, self.red as i64)
    }
}

/// Probe evidence without joining time, bounded by `cmax` possible arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueueObservationNoTime {
    l: u32,
    m: u32,
    cmax: u32,
}

impl QueueObservationNoTime {
    pub fn new(l: u32, m: u32, cmax: u32) -> Result<Self> {
        if m > l || l > cmax {
            return Err(Error::InvalidObservation(format!(
                "need m <= l <= Cmax, got m = {m}, l = {l}, Cmax = {cmax}"
            )));
        }
        Ok(Self { l, m, cmax })
    }

    pub fn l(&self) -> u32 {
        self.l
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn cmax(&self) -> u32 {
        self.cmax
    }

    pub fn support(&self) -> std::ops::RangeInclusive<u64> {
        self.l as u64..=self.cmax as u64
    }

    /// `S = Cmax + 1`, `K = Cmax - l`, `r = l - m + 1`, with `k = n - l`.
    pub fn nhg_params(&self) -> NhgParams {
        NhgParams {
            population: self.cmax as u64 + 1,
            successes: (self.cmax - self.l) as u64,
            stop_failures: (self.l - self.m + 1) as u64,
        }
    }
}

fn in_support(n: i64, range: &std::ops::RangeInclusive<u64>) -> bool {
    n >= 0 && range.contains(&(n as u64))
}

/// Conditional probability of a total queue of `n` given `(l, m, t, R)`:
/// `C(n-m, l-m) C(2R+m-n, 2t+m-l) / C(2R+1, 2t+1)` on the support, else 0.
pub fn queue_pmf_time(n: i64, obs: &QueueObservation) -> ExactProbability {
    if !in_support(n, &obs.support()) {
        return ExactProbability::zero();
    }
    let (l, m, t, r) = obs.ints();
    let num = c(n - m, l - m) * c(2 * r + m - n, 2 * t + m - l);
    ExactProbability(ratio(num, c(2 * r + 1, 2 * t + 1)))
}

pub fn queue_pmf_time_f64(n: i64, obs: &QueueObservation) -> f64 {
    if !in_support(n, &obs.support()) {
        return 0.0;
    }
    let (l, m, t, r) = obs.ints();
    cf(n - m, l - m) * cf(2 * r + m - n, 2 * t + m - l) / cf(2 * r + 1, 2 * t + 1)
}

/// Likelihood weight `C(n-m, l-m) C(2R-(n-m), 2t-(l-m)) / C(2R, 2t)` before
/// normalization. Sums to `(2R+1)/(2t+1)` over the support.
pub fn unnormalized_weight(n: i64, obs: &QueueObservation) -> ExactProbability {
    if !in_support(n, &obs.support()) {
        return ExactProbability::zero();
    }
    let (l, m, t, r) = obs.ints();
    let num = c(n - m, l - m) * c(2 * r - (n - m), 2 * t - (l - m));
    ExactProbability(ratio(num, c(2 * r, 2 * t)))
}

/// The same weight written as `C(2t, l-m) C(2R-2t, n-l) / C(2R, n-m)`: the
/// probability that exactly `l - m` of `n - m` non-probe arrivals, spread
/// uniformly over `2R` slots, fall in the first `2t`.
pub fn unnormalized_weight_slots(n: i64, obs: &QueueObservation) -> ExactProbability {
    if !in_support(n, &obs.support()) {
        return ExactProbability::zero();
    }
    let (l, m, t, r) = obs.ints();
    let num = c(2 * t, l - m) * c(2 * r - 2 * t, n - l);
    ExactProbability(ratio(num, c(2 * r, n - m)))
}

/// Conditional probability of `n` given `(l, m)` and at most `cmax` arrivals:
/// `C(Cmax-n+m, Cmax-n) C(n-m, n-l) / C(Cmax, l) * (l+1)/(Cmax+1)` for `l <= n <= Cmax`.
pub fn queue_pmf_notime(n: i64, obs: &QueueObservationNoTime) -> ExactProbability {
    if !in_support(n, &obs.support()) {
        return ExactProbability::zero();
    }
    let (l, m, cm) = (obs.l as i64, obs.m as i64, obs.cmax as i64);
    let num = c(cm - n + m, cm - n) * c(n - m, n - l) * (l + 1);
    let den = c(cm, l) * (cm + 1);
    ExactProbability(ratio(num, den))
}

pub fn queue_pmf_notime_f64(n: i64, obs: &QueueObservationNoTime) -> f64 {
    if !in_support(n, &obs.support()) {
        return 0.0;
    }
    let (l, m, cm) = (obs.l as i64, obs.m as i64, obs.cmax as i64);
    cf(cm - n + m, cm - n) * cf(n - m, n - l) / cf(cm, l) * (l + 1) as f64 / (cm + 1) as f64
}

/// Dense PMF over a contiguous support starting at `first`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuePmf {
    first: u64,
    probs: Vec<ExactProbability>,
}

impl QueuePmf {
    pub fn first(&self) -> u64 {
        self.first
    }

    pub fn probabilities(&self) -> &[ExactProbability] {
        &self.probs
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &ExactProbability)> {
        (self.first..).zip(self.probs.iter())
    }

    pub fn total(&self) -> BigRational {
        self.probs.iter().map(|p| p.value().clone()).sum()
    }

    pub fn mean(&self) -> BigRational {
        self.iter()
            .map(|(n, p)| p.value() * rat(n as i64))
            .sum()
    }

    pub fn variance(&self) -> BigRational {
        let mean = self.mean();
        let second: BigRational = self
            .iter()
            .map(|(n, p)| p.value() * rat((n * n) as i64))
            .sum();
        second - &mean * &mean
    }

    pub fn to_f64(&self) -> Vec<(u64, f64)> {
        self.iter().map(|(n, p)| (n, p.to_f64())).collect()
    }
}

pub fn queue_pmf_time_vector(obs: &QueueObservation) -> QueuePmf {
    let support = obs.support();
    QueuePmf {
        first: *support.start(),
        probs: support.map(|n| queue_pmf_time(n as i64, obs)).collect(),
    }
}

pub fn queue_pmf_notime_vector(obs: &QueueObservationNoTime) -> QueuePmf {
    let support = obs.support();
    QueuePmf {
        first: *support.start(),
        probs: support.map(|n| queue_pmf_notime(n as i64, obs)).collect(),
    }
}

/// All valid observations with red duration up to `r_max` seconds, including
/// the no-probe observation for each `R`.
pub fn observation_grid(r_max: u32) -> impl Iterator<Item = QueueObservation> {
    (1..=r_max).flat_map(|r| {
        std::iter::once(QueueObservation::no_probes(r)).chain((1..=r).flat_map(move |t| {
            (1..=2 * t).flat_map(move |l| {
                (1..=l).map(move |m| QueueObservation { l, m, t, red: r })
            })
        }))
    })
}

/// All valid time-free observations with `Cmax <= cmax_max`.
pub fn observation_grid_notime(cmax_max: u32) -> impl Iterator<Item = QueueObservationNoTime> {
    (0..=cmax_max).flat_map(|cmax| {
        (0..=cmax).flat_map(move |l| (0..=l).map(move |m| QueueObservationNoTime { l, m, cmax }))
    })
}
