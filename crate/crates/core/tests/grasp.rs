use evtac::grasp::control::{GripperState, BALANCE_CLIP, DEFAULT_KP, LIFT_CLIP};
use evtac::grasp::episode::{grasp_objects, run_episode, Detector, EpisodeConfig};
use proptest::prelude::*;

fn steps() -> impl Strategy<Value = Vec<(bool, f64)>> {
    proptest::collection::vec((any::<bool>(), 30.0f64..45.0), 1..300)
}

fn within(v: f64, clip: (f64, f64)) -> bool {
    clip.0 <= v && v <= clip.1
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lift_feedforward_stays_clipped(seq in steps(), u0 in -8.0f64..3.0) {
        let mut g = GripperState::new(40.0, DEFAULT_KP);
        g.u_ff = u0;
        g.start_lift();
        prop_assert!(within(g.u_ff, LIFT_CLIP));
        for (slip, x) in seq {
            g.lift_step(slip, x);
            prop_assert!(within(g.u_ff, LIFT_CLIP));
        }
    }

    #[test]
    fn balance_feedforward_stays_clipped(seq in steps(), u0 in -5.0f64..0.0) {
        let mut g = GripperState::new(40.0, DEFAULT_KP);
        g.u_ff = u0;
        g.start_balance();
        for (slip, x) in seq {
            g.balance_step(slip, x);
            prop_assert!(within(g.u_ff, BALANCE_CLIP));
            prop_assert!(within(g.u_ff, g.clip));
        }
    }

    #[test]
    fn lift_reference_only_tightens(seq in steps()) {
        let mut g = GripperState::new(40.0, DEFAULT_KP);
        g.start_lift();
        let mut last: Option<f64> = None;
        for (slip, x) in seq {
            g.lift_step(slip, x);
            if let (Some(a), Some(b)) = (last, g.x_ref) {
                prop_assert!(b <= a);
            }
            prop_assert!(last.is_none() || g.x_ref.is_some());
            last = g.x_ref;
        }
    }

    #[test]
    fn doubling_gain_never_weakens_command(seq in steps(), balance in any::<bool>()) {
        let mut a = GripperState::new(40.0, DEFAULT_KP);
        let mut b = GripperState::new(40.0, 2.0 * DEFAULT_KP);
        if balance {
            a.start_balance();
            b.start_balance();
        } else {
            a.start_lift();
            b.start_lift();
        }
        for (slip, x) in seq {
            let (ua, ub) = if balance {
                (a.balance_step(slip, x), b.balance_step(slip, x))
            } else {
                (a.lift_step(slip, x), b.lift_step(slip, x))
            };
            prop_assert!(ub.abs() >= ua.abs());
        }
    }
}

#[test]
fn feedback_lifts_what_open_loop_drops() {
    let o = &grasp_objects(1, 2.3, 3.3, 5)[0];
    let cfg = EpisodeConfig { lift_s: 5.0, balance_s: 5.0, ..Default::default() };
    let open = run_episode(o, &Detector::Oracle, &EpisodeConfig { open_loop: true, ..cfg.clone() }).unwrap();
    let closed = run_episode(o, &Detector::Oracle, &cfg).unwrap();
    assert!(!open.lift_success);
    assert!(closed.success(), "{}", closed.summary());
    assert!(closed.slip_ticks > 0);
}

#[test]
fn episodes_are_deterministic() {
    let o = &grasp_objects(1, 2.3, 3.3, 9)[0];
    let cfg = EpisodeConfig { lift_s: 3.0, balance_s: 2.0, keep_log: true, ..Default::default() };
    let a = run_episode(o, &Detector::Oracle, &cfg).unwrap();
    let b = run_episode(o, &Detector::Oracle, &cfg).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.summary(), b.summary());
}
