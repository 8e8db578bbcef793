use aimdgrid_core::controllers::{aimd_next, daimd_decide, droop_power, AimdParams, CapacityToy, DroopCurve};
use aimdgrid_core::metrics::jain_fairness;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = AimdParams> {
    (0.1..5.0f64, 0.05..0.95f64, 5.0..80.0f64).prop_flat_map(|(alpha, beta, i_max)| {
        (0.0..=i_max).prop_map(move |i_init| AimdParams { alpha, beta, t_a_s: 10, v_min: 216.0, i_max, i_init })
    })
}

proptest! {
    #[test]
    fn current_stays_within_bounds(p in params(), flags in prop::collection::vec(any::<bool>(), 0..400)) {
        let mut i = p.i_init;
        for c in flags {
            i = aimd_next(i, c, &p);
            prop_assert!((0.0..=p.i_max).contains(&i));
        }
    }

    #[test]
    fn alternating_feedback_follows_closed_form(p in params(), start in 0.0..1.0f64, k in 1usize..30) {
        // One decrease then k increases: beta*I + k*alpha, capped.
        let i0 = start * p.i_max;
        let mut i = aimd_next(i0, true, &p);
        for _ in 0..k {
            i = aimd_next(i, false, &p);
        }
        let expected = (p.beta * i0 + k as f64 * p.alpha).min(p.i_max);
        prop_assert!((i - expected).abs() <= 1e-9 * p.i_max);
    }

    #[test]
    fn droop_is_monotone_and_bounded(a in 150.0..300.0f64, b in 150.0..300.0f64) {
        let c = DroopCurve::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(droop_power(lo, &c) <= droop_power(hi, &c));
        prop_assert!((0.0..=c.p_rated).contains(&droop_power(a, &c)));
    }

    #[test]
    fn droop_is_continuous(v in 200.0..250.0f64) {
        let c = DroopCurve::default();
        let slope = c.p_rated / (c.v_full - c.v_cut);
        prop_assert!((droop_power(v + 1e-6, &c) - droop_power(v, &c)).abs() <= slope * 1e-6 * (1.0 + 1e-9));
    }

    #[test]
    fn higher_voltage_never_adds_congestion(v in 180.0..260.0f64, dv in 0.0..20.0f64, th in 200.0..240.0f64) {
        // Congested at v + dv implies congested at v.
        if daimd_decide(v + dv, th, 216.0) {
            prop_assert!(daimd_decide(v, th, 216.0));
        }
    }

    #[test]
    fn shared_capacity_settles_to_fair_shares(
        initial in prop::collection::vec(0.0..41.0f64, 2..30),
        capacity_per_agent in 3.0..30.0f64,
    ) {
        let toy = CapacityToy {
            capacity: capacity_per_agent * initial.len() as f64,
            params: AimdParams::default(),
            initial,
        };
        let avg = toy.run(200, 5_000);
        prop_assert!(jain_fairness(&avg).unwrap() >= 0.99);
    }
}
