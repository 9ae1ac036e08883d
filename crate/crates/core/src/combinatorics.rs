//! Exact binomial coefficients and verifiers for the summation identities
//! that normalize the conditional queue-length distributions.
//!
//! Every binomial here follows the compact-support convention: `C(n, k) = 0`
//! when `k < 0` or `k > n`. Sums are therefore written over their nominal
//! ranges without special-casing the edges. Negative upper indices are never
//! evaluated; [`binom`] rejects them.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::error::{precondition, Error, Result};

/// Arbitrary-precision signed integer used for every count in this module.
pub type ExactInteger = BigInt;

/// `n` choose `k` with the zero convention outside `0 <= k <= n`.
pub fn choose(n: u64, k: i64) -> BigUint {
    if k < 0 || k as u64 > n {
        return BigUint::zero();
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc = BigUint::one();
    for i in 0..k {
        // acc == C(n, i) here, so the division is exact.
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Checked binomial coefficient. Errors on a negative upper index.
pub fn binom(n: i64, k: i64) -> Result<ExactInteger> {
    if n < 0 {
        return Err(Error::NegativeUpperIndex(n));
    }
    Ok(BigInt::from(choose(n as u64, k)))
}

/// Floating binomial via the same multiplicative recurrence. Exact up to 2^53.
pub fn choose_f64(n: u64, k: i64) -> f64 {
    if k < 0 || k as u64 > n {
        return 0.0;
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc = 1.0_f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn b(n: i64, k: i64) -> Result<BigInt> {
    binom(n, k)
}

/// Checks the domain shared by the full and short sums: `m <= l <= 2t`, `t <= R`.
fn check_lmt(l: u32, m: u32, t: u32, r: u32) -> Result<()> {
    precondition(m <= l, || format!("m = {m} exceeds l = {l}"))?;
    precondition(t <= r, || format!("t = {t} exceeds R = {r}"))?;
    precondition(l <= 2 * t, || format!("l = {l} exceeds 2t = {}", 2 * t))
}

/// Summand `C(n-m, l-m) * C(2R+m-n, 2t+m-l)` shared by the full and short sums.
fn summand(l: i64, m: i64, t: i64, r: i64, n: i64) -> Result<BigInt> {
    Ok(b(n - m, l - m)? * b(2 * r + m - n, 2 * t + m - l)?)
}

/// `sum_{n=l}^{2R-2t+l} C(n-m, l-m) C(2R+m-n, 2t+m-l)`, which equals `C(2R+1, 2t+1)`.
pub fn theorem1_sum(l: u32, m: u32, t: u32, r: u32) -> Result<ExactInteger> {
    check_lmt(l, m, t, r)?;
    let (l, m, t, r) = (l as i64, m as i64, t as i64, r as i64);
    (l..=2 * r - 2 * t + l).try_fold(BigInt::zero(), |acc, n| Ok(acc + summand(l, m, t, r, n)?))
}

/// `sum_{k=0}^{y} C(x, k) C(z, y-k)`, which equals `C(x+z, y)`.
pub fn vandermonde_chu(x: u32, y: u32, z: u32) -> ExactInteger {
    let (x, y, z) = (x as u64, y as i64, z as u64);
    (0..=y)
        .map(|k| BigInt::from(choose(x, k) * choose(z, y - k)))
        .sum()
}

/// Truncated sum `sum_{n=l}^{2R-2t} C(n-m, l-m) C(2R+m-n, 2t+m-l)`.
pub fn short_sum(l: u32, m: u32, t: u32, r: u32) -> Result<ExactInteger> {
    check_lmt(l, m, t, r)?;
    precondition(l + 2 * t <= 2 * r, || {
        format!("l = {l} exceeds 2R - 2t = {}", 2 * (r - t))
    })?;
    let (l, m, t, r) = (l as i64, m as i64, t as i64, r as i64);
    (l..=2 * r - 2 * t).try_fold(BigInt::zero(), |acc, n| Ok(acc + summand(l, m, t, r, n)?))
}

/// Right-hand side of the first-difference relation of [`short_sum`] in `l`:
/// `-C(2R-2t-m+1, l-m+1) * C(2t+m, l)`.
pub fn short_sum_increment(l: u32, m: u32, t: u32, r: u32) -> Result<ExactInteger> {
    let (l, m, t, r) = (l as i64, m as i64, t as i64, r as i64);
    Ok(-(b(2 * r - 2 * t - m + 1, l - m + 1)? * b(2 * t + m, l)?))
}

/// True iff `short_sum(l+1) - short_sum(l)` equals [`short_sum_increment`] exactly.
pub fn theorem2_recurrence_check(l: u32, m: u32, t: u32, r: u32) -> Result<bool> {
    let next = short_sum(l + 1, m, t, r)?;
    let here = short_sum(l, m, t, r)?;
    Ok(next - here == short_sum_increment(l, m, t, r)?)
}

/// `sum_{l=0}^{2R-2t} C(2R-2t-m+1, l-m+1) C(2t+m, l)`, which equals `C(2R+1, 2t+1)`.
pub fn corollary7_sum(m: u32, t: u32, r: u32) -> Result<ExactInteger> {
    precondition(t <= r, || format!("t = {t} exceeds R = {r}"))?;
    precondition(m <= 2 * (r - t) + 1, || {
        format!("m = {m} exceeds 2R - 2t + 1 = {}", 2 * (r - t) + 1)
    })?;
    let (m, t, r) = (m as i64, t as i64, r as i64);
    (0..=2 * r - 2 * t).try_fold(BigInt::zero(), |acc, l| {
        Ok(acc + b(2 * r - 2 * t - m + 1, l - m + 1)? * b(2 * t + m, l)?)
    })
}

/// `sum_{m=l}^{R-t+l} C(m, l) C(R-m, t-l)`, which equals `C(R+1, t+1)`.
pub fn theorem3_sum(l: u32, t: u32, r: u32) -> Result<ExactInteger> {
    precondition(l <= t && t <= r, || format!("need l <= t <= R, got l = {l}, t = {t}, R = {r}"))?;
    let (l, t, r) = (l as i64, t as i64, r as i64);
    (l..=r - t + l).try_fold(BigInt::zero(), |acc, m| Ok(acc + b(m, l)? * b(r - m, t - l)?))
}

/// Bounds for exhaustive identity grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityGridSpec {
    pub r_max: u32,
}

impl IdentityGridSpec {
    pub fn new(r_max: u32) -> Self {
        Self { r_max }
    }

    /// All `(l, m, t, R)` with `R <= r_max`, `t <= R`, `m <= l <= 2t`.
    pub fn observations(&self) -> impl Iterator<Item = (u32, u32, u32, u32)> {
        let r_max = self.r_max;
        (0..=r_max).flat_map(|r| {
            (0..=r).flat_map(move |t| {
                (0..=2 * t).flat_map(move |l| (0..=l).map(move |m| (l, m, t, r)))
            })
        })
    }

    /// Grid on which both `l` and `l + 1` satisfy the short-sum domain.
    pub fn recurrence_points(&self) -> impl Iterator<Item = (u32, u32, u32, u32)> {
        self.observations()
            .filter(|&(l, _, t, r)| l < 2 * t && l + 1 + 2 * t <= 2 * r)
    }
}

/// Outcome of one exhaustive identity verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub r_max: u32,
    pub checked: usize,
    pub failures: Vec<String>,
}

impl IdentityCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn run_check<I, F>(name: &'static str, r_max: u32, points: I, mut f: F) -> Result<IdentityCheck>
where
    I: IntoIterator,
    I::Item: std::fmt::Debug + Copy,
    F: FnMut(I::Item) -> Result<bool>,
{
    let mut checked = 0;
    let mut failures = Vec::new();
    for p in points {
        checked += 1;
        if !f(p)? {
            failures.push(format!("{p:?}"));
        }
    }
    Ok(IdentityCheck { name, r_max, checked, failures })
}

/// Per-identity grid bounds used by [`verify_all`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyBounds {
    pub full_sum: u32,
    pub vandermonde: u32,
    pub recurrence: u32,
    pub probe_free: u32,
    pub reindexed: u32,
}

impl Default for VerifyBounds {
    fn default() -> Self {
        Self { full_sum: 12, vandermonde: 20, recurrence: 8, probe_free: 10, reindexed: 20 }
    }
}

impl VerifyBounds {
    pub fn uniform(r_max: u32) -> Self {
        Self {
            full_sum: r_max,
            vandermonde: r_max,
            recurrence: r_max,
            probe_free: r_max,
            reindexed: r_max,
        }
    }
}

/// Runs every identity over its grid. Errors only on internal precondition
/// bugs; identity mismatches are reported in [`IdentityCheck::failures`].
pub fn verify_all(bounds: VerifyBounds) -> Result<Vec<IdentityCheck>> {
    let mut out = Vec::with_capacity(7);

    let grid = IdentityGridSpec::new(bounds.full_sum);
    out.push(run_check("theorem1_sum", bounds.full_sum, grid.observations(), |(l, m, t, r)| {
        Ok(theorem1_sum(l, m, t, r)? == binom(2 * r as i64 + 1, 2 * t as i64 + 1)?)
    })?);

    // At fixed (t, R) the sum must not depend on (l, m).
    let pairs = (0..=bounds.full_sum).flat_map(|r| (0..=r).map(move |t| (t, r)));
    out.push(run_check("theorem1_independence", bounds.full_sum, pairs, |(t, r)| {
        let reference = theorem1_sum(0, 0, t, r)?;
        for l in 0..=2 * t {
            for m in 0..=l {
                if theorem1_sum(l, m, t, r)? != reference {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    })?);

    let v = bounds.vandermonde;
    let triples = (0..=v).flat_map(move |x| (0..=v).flat_map(move |z| (0..=2 * v).map(move |y| (x, y, z))));
    out.push(run_check("vandermonde_chu", v, triples, |(x, y, z)| {
        Ok(vandermonde_chu(x, y, z) == binom((x + z) as i64, y as i64)?)
    })?);

    let grid = IdentityGridSpec::new(bounds.recurrence);
    out.push(run_check("theorem2_recurrence", bounds.recurrence, grid.recurrence_points(), |(l, m, t, r)| {
        theorem2_recurrence_check(l, m, t, r)
    })?);

    let c7 = (0..=bounds.probe_free)
        .flat_map(|r| (0..=r).flat_map(move |t| (0..=2 * (r - t) + 1).map(move |m| (m, t, r))));
    out.push(run_check("corollary7_sum", bounds.probe_free, c7, |(m, t, r)| {
        Ok(corollary7_sum(m, t, r)? == binom(2 * r as i64 + 1, 2 * t as i64 + 1)?)
    })?);

    let t3 = (0..=bounds.reindexed).flat_map(|r| (0..=r).flat_map(move |t| (0..=t).map(move |l| (l, t, r))));
    out.push(run_check("theorem3_sum", bounds.reindexed, t3, |(l, t, r)| {
        Ok(theorem3_sum(l, t, r)? == binom(r as i64 + 1, t as i64 + 1)?)
    })?);

    let n_max = 2 * bounds.full_sum as u64 + 1;
    let pascal = (1..=n_max).flat_map(|n| (0..=n as i64 + 1).map(move |k| (n, k)));
    out.push(run_check("pascal_rule", bounds.full_sum, pascal, |(n, k)| {
        Ok(choose(n, k) == choose(n - 1, k - 1) + choose(n - 1, k))
    })?);

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pascal_row(n: usize) -> Vec<BigUint> {
        let mut row = vec![BigUint::one()];
        for _ in 0..n {
            let mut next = vec![BigUint::one(); row.len() + 1];
            for k in 1..row.len() {
                next[k] = &row[k - 1] + &row[k];
            }
            row = next;
        }
        row
    }

    fn int(v: u64) -> BigInt {
        BigInt::from(v)
    }

    #[test]
    fn binom_small_values() {
        assert_eq!(binom(5, 2).unwrap(), int(10));
        assert_eq!(binom(5, 7).unwrap(), int(0));
        assert_eq!(binom(5, -1).unwrap(), int(0));
        assert_eq!(binom(0, 0).unwrap(), int(1));
    }

    #[test]
    fn binom_rejects_negative_upper() {
        assert!(matches!(binom(-3, 1), Err(Error::NegativeUpperIndex(-3))));
    }

    #[test]
    fn binom_matches_pascal_triangle() {
        let row = pascal_row(91);
        for (k, v) in row.iter().enumerate() {
            assert_eq!(choose(91, k as i64), *v, "k = {k}");
        }
        let frozen: BigInt = "132884211874988282576525658".parse().unwrap();
        assert_eq!(binom(91, 41).unwrap(), frozen);
        assert_eq!(BigInt::from(row[41].clone()), frozen);
    }

    #[test]
    fn choose_f64_is_exact_for_small_rows() {
        for n in 0..=40u64 {
            for k in -1..=(n as i64 + 1) {
                let exact: f64 = choose(n, k).to_string().parse().unwrap();
                assert_eq!(choose_f64(n, k), exact, "C({n},{k})");
            }
        }
    }

    #[test]
    fn full_sum_examples() {
        assert_eq!(theorem1_sum(3, 2, 2, 5).unwrap(), int(462));
        assert_eq!(theorem1_sum(0, 0, 0, 4).unwrap(), int(9));
        for r in 0..6 {
            for l in 0..=2 * r {
                assert_eq!(theorem1_sum(l, l, r, r).unwrap(), int(1));
            }
        }
    }

    #[test]
    fn full_sum_direct_summation_oracle() {
        // n = 3..=9 for (l, m, t, R) = (3, 2, 2, 5)
        let direct: u64 = [1u64, 2, 3, 4, 5, 6, 7]
            .iter()
            .zip([84u64, 56, 35, 20, 10, 4, 1])
            .map(|(a, b)| a * b)
            .sum();
        assert_eq!(direct, 462);
    }

    #[test]
    fn full_sum_preconditions() {
        assert!(theorem1_sum(2, 3, 2, 5).is_err());
        assert!(theorem1_sum(1, 0, 3, 2).is_err());
        assert!(theorem1_sum(5, 2, 2, 5).is_err());
    }

    #[test]
    fn vandermonde_examples() {
        assert_eq!(vandermonde_chu(3, 2, 4), int(21));
        assert_eq!(vandermonde_chu(0, 0, 0), int(1));
        assert_eq!(vandermonde_chu(5, 9, 2), int(0));
    }

    #[test]
    fn short_sum_examples() {
        assert_eq!(short_sum(1, 1, 1, 3).unwrap(), int(34));
        // l = 2R - 2t: single term C(l-m, l-m) * C(2t+m, 2t+m-l)
        let (m, t, r) = (1, 2, 4);
        let l = 2 * r - 2 * t;
        let single = binom((l - m) as i64, (l - m) as i64).unwrap()
            * binom((2 * t + m) as i64, (2 * t + m - l) as i64).unwrap();
        assert_eq!(short_sum(l, m, t, r).unwrap(), single);
        assert!(short_sum(3, 1, 2, 3).is_err());
    }

    #[test]
    fn recurrence_holds_on_small_grid() {
        for p in IdentityGridSpec::new(6).recurrence_points() {
            assert!(theorem2_recurrence_check(p.0, p.1, p.2, p.3).unwrap(), "{p:?}");
        }
    }

    #[test]
    fn probe_free_sum_examples() {
        assert_eq!(corollary7_sum(0, 0, 2).unwrap(), int(5));
        assert_eq!(corollary7_sum(1, 1, 3).unwrap(), int(35));
        assert_eq!(corollary7_sum(0, 4, 4).unwrap(), int(1));
        assert_eq!(corollary7_sum(1, 4, 4).unwrap(), int(1));
        assert!(corollary7_sum(4, 2, 3).is_err());
    }

    #[test]
    fn reindexed_sum_examples() {
        assert_eq!(theorem3_sum(0, 0, 3).unwrap(), int(4));
        assert_eq!(theorem3_sum(1, 2, 5).unwrap(), int(20));
        assert_eq!(theorem3_sum(7, 7, 7).unwrap(), int(1));
        assert!(theorem3_sum(3, 2, 5).is_err());
    }

    #[test]
    fn grid_respects_invariants() {
        for (l, m, t, r) in IdentityGridSpec::new(5).observations() {
            assert!(m <= l && t <= r && l <= 2 * t);
        }
        assert_eq!(IdentityGridSpec::new(0).observations().count(), 1);
    }

    #[test]
    fn verify_all_small_bounds_pass() {
        let checks = verify_all(VerifyBounds::uniform(5)).unwrap();
        assert_eq!(checks.len(), 7);
        for c in &checks {
            assert!(c.passed(), "{}: {:?}", c.name, c.failures);
            assert!(c.checked > 0, "{}", c.name);
        }
    }
}
