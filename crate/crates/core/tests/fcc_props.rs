use evnav_core::fcc::{expected_queue, expected_queue_from, FccTensor, PlannedArrival, SoftmaxSign};
use evnav_core::oracle::queue_wait_by_simulation;
use proptest::prelude::*;

fn time() -> impl Strategy<Value = f64> {
    prop_oneof![(0u32..12).prop_map(|k| k as f64 * 5.0), 0.0..60.0f64]
}

fn plans(max: usize, stations: usize) -> impl Strategy<Value = Vec<PlannedArrival>> {
    prop::collection::vec((0..stations, time(), time()), 1..=max).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(ev, (evcs, at, ct))| PlannedArrival { ev, evcs, at, ct })
            .collect()
    })
}

fn spot_free(spots: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), time()], spots)
}

proptest! {
    #[test]
    fn queue_matches_discrete_event_oracle(ps in plans(5, 3), free in (1usize..=2).prop_flat_map(spot_free)) {
        for me in &ps {
            let fast = expected_queue_from(&ps, me, &free);
            let slow = queue_wait_by_simulation(&ps, me, &free);
            prop_assert!((fast - slow).abs() <= 1e-9 * slow.abs().max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn wait_is_non_negative_and_zero_when_alone(ps in plans(5, 2), spots in 1usize..=3) {
        for me in &ps {
            prop_assert!(expected_queue(&ps, me, spots) >= 0.0);
            prop_assert_eq!(expected_queue(&[], me, spots), 0.0);
        }
    }

    #[test]
    fn later_arrivals_do_not_change_the_wait(
        ps in plans(4, 2),
        free in spot_free(2),
        extra in prop::collection::vec((0.001..30.0f64, time()), 1..4),
    ) {
        let me = ps[0];
        let base = expected_queue_from(&ps, &me, &free);
        let mut more = ps.clone();
        for (i, (dt, ct)) in extra.into_iter().enumerate() {
            more.push(PlannedArrival { ev: 100 + i, evcs: me.evcs, at: me.at + dt, ct });
        }
        prop_assert_eq!(expected_queue_from(&more, &me, &free), base);
    }

    #[test]
    fn longer_charging_ahead_never_shortens_the_wait(ps in plans(5, 1), free in spot_free(2), bump in 0.0..40.0f64) {
        let me = *ps.last().unwrap();
        let base = expected_queue_from(&ps, &me, &free);
        for i in 0..ps.len() - 1 {
            let mut slower = ps.clone();
            slower[i].ct += bump;
            prop_assert!(expected_queue_from(&slower, &me, &free) >= base - 1e-12);
        }
    }

    #[test]
    fn an_earlier_arrival_never_shortens_a_single_spot_wait(ps in plans(4, 1), free in spot_free(1), at in time(), ct in time()) {
        let me = *ps.last().unwrap();
        prop_assume!(at < me.at);
        let base = expected_queue_from(&ps, &me, &free);
        let mut more = ps.clone();
        more.push(PlannedArrival { ev: 100, evcs: me.evcs, at, ct });
        prop_assert!(expected_queue_from(&more, &me, &free) >= base);
    }

    #[test]
    fn an_extra_spot_never_lengthens_the_wait(ps in plans(5, 1), spots in 1usize..=3) {
        for me in &ps {
            prop_assert!(expected_queue(&ps, me, spots + 1) <= expected_queue(&ps, me, spots) + 1e-12);
        }
    }

    #[test]
    fn softmax_is_a_distribution_ordered_by_sign(raw in prop::collection::vec(0.0..480.0f64, 1..6)) {
        let pos = FccTensor::from_raw(raw.clone(), SoftmaxSign::Positive);
        let neg = FccTensor::from_raw(raw.clone(), SoftmaxSign::Negative);
        for t in [&pos, &neg] {
            prop_assert!((t.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(t.probs.iter().all(|p| *p > 0.0 && *p <= 1.0));
            prop_assert_eq!(&t.raw, &raw);
        }
        for i in 0..raw.len() {
            for j in 0..raw.len() {
                if raw[i] < raw[j] {
                    prop_assert!(pos.probs[i] <= pos.probs[j]);
                    prop_assert!(neg.probs[i] >= neg.probs[j]);
                }
            }
        }
    }
}
