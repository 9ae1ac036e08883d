//! Test-only oracles that share no code with the library.
#![allow(dead_code)]

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Pascal triangle rows `0..=n_max`, built by addition only.
pub fn pascal(n_max: usize) -> Vec<Vec<BigUint>> {
    let mut rows: Vec<Vec<BigUint>> = vec![vec![BigUint::one()]];
    for n in 1..=n_max {
        let prev = &rows[n - 1];
        let mut row = vec![BigUint::one(); n + 1];
        for k in 1..n {
            row[k] = &prev[k - 1] + &prev[k];
        }
        rows.push(row);
    }
    rows
}

pub fn pascal_at(table: &[Vec<BigUint>], n: i64, k: i64) -> BigInt {
    if n < 0 || k < 0 || k > n {
        return BigInt::zero();
    }
    BigInt::from(table[n as usize][k as usize].clone())
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Negative Hypergeometric law by sequential draws without replacement from an
/// urn of `s` balls, `k_succ` successes: probability of exactly `k` successes
/// before the `r`-th failure. Dynamic programming over (successes, failures).
pub fn nhg_urn(s: u64, k_succ: u64, r: u64) -> Vec<BigRational> {
    let fails_total = s - k_succ;
    // p[i][j]: probability the process passes through state with i successes, j failures drawn
    let mut p = vec![vec![BigRational::zero(); r as usize + 1]; k_succ as usize + 1];
    p[0][0] = BigRational::one();
    let mut out = vec![BigRational::zero(); k_succ as usize + 1];
    for j in 0..=r as usize {
        for i in 0..=k_succ as usize {
            let here = p[i][j].clone();
            if here.is_zero() {
                continue;
            }
            if j as u64 == r {
                out[i] += here;
                continue;
            }
            let left = (s - i as u64 - j as u64) as i64;
            let succ_left = (k_succ - i as u64) as i64;
            let fail_left = (fails_total - j as u64) as i64;
            if left == 0 {
                continue;
            }
            if succ_left > 0 {
                let v = &here * rat(succ_left, left);
                p[i + 1][j] += v;
            }
            if fail_left > 0 {
                let v = &here * rat(fail_left, left);
                p[i][j + 1] += v;
            }
        }
    }
    out
}

pub fn mean_var(first: u64, probs: &[BigRational]) -> (BigRational, BigRational) {
    let mut mean = BigRational::zero();
    let mut second = BigRational::zero();
    for (i, p) in probs.iter().enumerate() {
        let n = BigRational::from_integer(BigInt::from(first + i as u64));
        mean += p * &n;
        second += p * &n * &n;
    }
    let var = &second - &mean * &mean;
    (mean, var)
}
