mod common;

use common::{mean_var, nhg_urn, pascal, pascal_at, rat};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use pvqueue::distributions::*;
use pvqueue::estimators::{np_est1_exact, np_est2_exact};

/// Posterior of `n` under a uniform prior when `n - m` non-probe arrivals sit
/// in a uniformly random subset of the `2R` slots and `l - m` land in the first `2t`.
fn hypergeometric_posterior(l: u32, m: u32, t: u32, r: u32) -> (u64, Vec<BigRational>) {
    let table = pascal(2 * r as usize + 1);
    let (l, m, t, r) = (l as i64, m as i64, t as i64, r as i64);
    let first = l;
    let weights: Vec<BigRational> = (l..=2 * r - 2 * t + l)
        .map(|n| {
            BigRational::new(
                pascal_at(&table, 2 * t, l - m) * pascal_at(&table, 2 * r - 2 * t, n - l),
                pascal_at(&table, 2 * r, n - m),
            )
        })
        .collect();
    let z: BigRational = weights.iter().cloned().sum();
    (first as u64, weights.into_iter().map(|w| w / &z).collect())
}

#[test]
fn nhg_matches_sequential_urn() {
    for s in 1..=14u64 {
        for k in 0..=s {
            for r in 1..=s - k {
                let p = NhgParams::new(s, k, r).unwrap();
                let urn = nhg_urn(s, k, r);
                for (kk, expected) in urn.iter().enumerate() {
                    assert_eq!(nhg_pmf(kk as i64, &p).value(), expected, "S={s} K={k} r={r} k={kk}");
                }
                assert!(nhg_pmf(-1, &p).is_zero());
                assert!(nhg_pmf(k as i64 + 1, &p).is_zero());
                let (mean, var) = mean_var(0, &urn);
                assert_eq!(nhg_mean(&p), mean);
                assert_eq!(nhg_var(&p), var);
            }
        }
    }
}

#[test]
fn nhg_boundary_stop_is_point_mass() {
    // r = S - K + 1 would need more failures than the urn holds; every success is drawn
    for s in 1..=10u64 {
        for k in 0..=s {
            let p = NhgParams::new(s, k, s - k + 1).unwrap();
            assert_eq!(nhg_pmf(k as i64, &p).value(), &BigRational::one());
            assert_eq!(nhg_mean(&p), BigRational::from_integer(BigInt::from(k)));
            assert!(nhg_var(&p).is_zero());
        }
    }
}

#[test]
fn nhg_parameter_validation() {
    assert!(NhgParams::new(5, 6, 1).is_err());
    assert!(NhgParams::new(5, 2, 0).is_err());
    assert!(NhgParams::new(5, 2, 5).is_err());
    assert!(NhgParams::new(5, 2, 4).is_ok());
}

#[test]
fn worked_distribution_values() {
    let obs = QueueObservation::new(3, 2, 2, 5).unwrap();
    let pmf = queue_pmf_time_vector(&obs);
    assert_eq!(pmf.first(), 3);
    assert_eq!(pmf.probabilities()[0].value(), &rat(2, 11));
    assert_eq!(pmf.total(), BigRational::one());
    let nt = QueueObservationNoTime::new(3, 2, 6).unwrap();
    let expected = [rat(2, 7), rat(12, 35), rat(9, 35), rat(4, 35)];
    for (i, e) in expected.iter().enumerate() {
        assert_eq!(queue_pmf_notime(3 + i as i64, &nt).value(), e);
    }
    assert!(queue_pmf_notime(7, &nt).is_zero());
    assert!(queue_pmf_time(2, &obs).is_zero());
    assert!(queue_pmf_time(10, &obs).is_zero());
}

#[test]
fn observation_validation() {
    assert!(QueueObservation::new(3, 4, 2, 5).is_err());
    assert!(QueueObservation::new(5, 2, 2, 5).is_err());
    assert!(QueueObservation::new(3, 2, 6, 5).is_err());
    assert!(QueueObservation::new(0, 0, 0, 5).is_ok());
    assert!(QueueObservationNoTime::new(7, 2, 6).is_err());
}

#[test]
fn posterior_oracle_on_small_grid() {
    for obs in observation_grid(7) {
        let (first, oracle) = hypergeometric_posterior(obs.l(), obs.m(), obs.t(), obs.red());
        let pmf = queue_pmf_time_vector(&obs);
        assert_eq!(pmf.first(), first);
        let got: Vec<BigRational> = pmf.probabilities().iter().map(|p| p.value().clone()).collect();
        assert_eq!(got, oracle, "{obs:?}");
    }
}

#[test]
fn weight_forms_agree_and_sum_to_ratio() {
    for obs in observation_grid(6) {
        let mut total = BigRational::zero();
        for n in obs.support() {
            let a = unnormalized_weight(n as i64, &obs);
            assert_eq!(a, unnormalized_weight_slots(n as i64, &obs), "{obs:?} n={n}");
            total += a.value();
        }
        let expected = BigRational::new(BigInt::from(2 * obs.red() + 1), BigInt::from(2 * obs.t() + 1));
        assert_eq!(total, expected, "{obs:?}");
    }
}

fn arb_obs() -> impl Strategy<Value = QueueObservation> {
    let with_probes = (1u32..=40).prop_flat_map(|r| {
        (1u32..=r).prop_flat_map(move |t| {
            (1u32..=2 * t)
                .prop_flat_map(move |l| (1..=l).prop_map(move |m| QueueObservation::new(l, m, t, r).unwrap()))
        })
    });
    prop_oneof![1 => (1u32..=40).prop_map(QueueObservation::no_probes), 9 => with_probes]
}

fn arb_obs_notime() -> impl Strategy<Value = QueueObservationNoTime> {
    (0u32..=60).prop_flat_map(|c| {
        (0u32..=c).prop_flat_map(move |l| (0u32..=l).prop_map(move |m| QueueObservationNoTime::new(l, m, c).unwrap()))
    })
}

proptest! {
    #[test]
    fn time_pmf_normalized_with_closed_form_moments(obs in arb_obs()) {
        let pmf = queue_pmf_time_vector(&obs);
        prop_assert_eq!(pmf.total(), BigRational::one());
        let (mean, var) = np_est1_exact(&obs);
        prop_assert_eq!(pmf.mean(), mean);
        prop_assert_eq!(pmf.variance(), var);
    }

    #[test]
    fn notime_pmf_normalized_with_closed_form_moments(obs in arb_obs_notime()) {
        let pmf = queue_pmf_notime_vector(&obs);
        prop_assert_eq!(pmf.total(), BigRational::one());
        let (mean, var) = np_est2_exact(&obs);
        prop_assert_eq!(pmf.mean(), mean);
        prop_assert_eq!(pmf.variance(), var);
    }

    #[test]
    fn float_pmfs_track_exact(obs in arb_obs(), nt in arb_obs_notime()) {
        for n in obs.support() {
            let exact = queue_pmf_time(n as i64, &obs).to_f64();
            prop_assert!((queue_pmf_time_f64(n as i64, &obs) - exact).abs() <= 1e-12);
        }
        for n in nt.support() {
            let exact = queue_pmf_notime(n as i64, &nt).to_f64();
            prop_assert!((queue_pmf_notime_f64(n as i64, &nt) - exact).abs() <= 1e-12);
        }
    }

    #[test]
    fn support_is_shifted_nhg(obs in arb_obs()) {
        let p = obs.nhg_params();
        for n in obs.support() {
            let k = n as i64 - obs.l() as i64;
            prop_assert_eq!(queue_pmf_time(n as i64, &obs), nhg_pmf(k, &p));
        }
    }
}
