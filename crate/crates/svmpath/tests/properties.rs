//! Property tests for the building blocks: optimality checks, step
//! candidates, boundary collection, state advancement, and incremental
//! margin-system maintenance.

mod common;

use common::{random_labels, random_spd_q, rng};
use proptest::prelude::*;
use rand::Rng;
use svmpath::degeneracy::{collect_boundary_sets, BoundarySide};
use svmpath::linsys::{solve_direction, MarginSystem, StepDirection};
use svmpath::partition::{
    check_exact, check_relaxed, partition_difference, Partition, SetKind, Tolerances,
};
use svmpath::tracer::{advance, theta_sets, PathState};

fn arb_kinds(n: usize) -> impl Strategy<Value = Vec<SetKind>> {
    prop::collection::vec(0u8..3, n).prop_map(|ks| {
        ks.into_iter()
            .map(|k| match k {
                0 => SetKind::Outside,
                1 => SetKind::Margin,
                _ => SetKind::Inside,
            })
            .collect()
    })
}

fn arb_state_and_partition() -> impl Strategy<Value = (PathState, Partition)> {
    (2usize..7).prop_flat_map(|n| {
        (
            prop::collection::vec(-0.5..1.5f64, n),
            prop::collection::vec(0.2..1.5f64, n),
            prop::collection::vec(-0.5..2.0f64, n),
            prop::collection::vec(prop::bool::ANY, n),
            arb_kinds(n),
            -1.0..1.0f64,
        )
            .prop_map(|(alpha, c, yf, labels, kinds, alpha0)| {
                let y: Vec<f64> = labels
                    .into_iter()
                    .map(|b| if b { 1.0 } else { -1.0 })
                    .collect();
                (
                    PathState {
                        theta: 0.0,
                        alpha0,
                        alpha,
                        c,
                        yf,
                        y,
                    },
                    Partition::from_assignment(kinds),
                )
            })
    })
}

fn arb_direction(n: usize) -> impl Strategy<Value = StepDirection> {
    (
        prop::collection::vec(-2.0..2.0f64, n),
        prop::collection::vec(-2.0..2.0f64, n),
        -1.0..1.0f64,
    )
        .prop_map(|(beta, g, beta0)| StepDirection { beta0, beta, g })
}

proptest! {
    /// Zero tolerances make the relaxed check literally the exact check.
    #[test]
    fn relaxed_at_zero_is_exact((state, pi) in arb_state_and_partition()) {
        let a = check_relaxed(&state, &pi, &Tolerances::exact());
        let b = check_exact(&state, &pi);
        prop_assert_eq!(a.pass, b.pass);
        prop_assert_eq!(a.worst_output, b.worst_output);
        prop_assert_eq!(a.worst_multiplier, b.worst_multiplier);
        prop_assert_eq!(a.equality_residual, b.equality_residual);
    }

    /// partition_difference is a normalized metric on assignments.
    #[test]
    fn partition_difference_is_a_metric(
        (ka, kb) in (2usize..9).prop_flat_map(|n| (arb_kinds(n), arb_kinds(n)))
    ) {
        let n = ka.len();
        let a = Partition::from_assignment(ka.clone());
        let b = Partition::from_assignment(kb.clone());
        let dab = partition_difference(&a, &b).unwrap();
        let dba = partition_difference(&b, &a).unwrap();
        prop_assert_eq!(dab, dba);
        prop_assert!((0.0..=1.0).contains(&dab));
        // Values are multiples of 1/n.
        let scaled = dab * n as f64;
        prop_assert!((scaled - scaled.round()).abs() < 1e-12);
        prop_assert_eq!(dab == 0.0, ka == kb);
        prop_assert_eq!(partition_difference(&a, &a).unwrap(), 0.0);
    }

    /// Advancing a consistent state keeps every derived quantity
    /// consistent: outputs match a full recomputation and the equality
    /// residual changes only through y' beta.
    #[test]
    fn advance_stays_consistent(seed in 0u64..u64::MAX, delta in 0.0..0.7f64) {
        let mut r = rng(seed);
        let n = 6;
        let q = random_spd_q(n, &mut r);
        let y = random_labels(n, &mut r);
        let alpha: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let alpha0: f64 = r.random_range(-1.0..1.0);
        let mut beta: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        // Project beta onto y' beta = 0 so the equality is preserved.
        let shift: f64 =
            beta.iter().zip(y.iter()).map(|(b, yi)| b * yi).sum::<f64>() / n as f64;
        for (b, yi) in beta.iter_mut().zip(y.iter()) {
            *b -= shift * yi;
        }
        let beta0: f64 = r.random_range(-1.0..1.0);
        let d: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..1.0)).collect();
        let c0: Vec<f64> = (0..n).map(|_| r.random_range(0.5..1.5)).collect();

        let mut state = PathState {
            theta: 0.0,
            alpha0,
            alpha: alpha.clone(),
            c: c0.clone(),
            yf: Vec::new(),
            y: y.clone(),
        };
        state.yf = state.recompute_yf(&q);
        let mut g = q.mul_vec(&beta);
        for i in 0..n {
            g[i] += y[i] * beta0;
        }
        let dir = StepDirection { beta0, beta: beta.clone(), g };
        let before: f64 = alpha.iter().zip(y.iter()).map(|(a, yi)| a * yi).sum();

        advance(&mut state, &dir, delta, &d);

        prop_assert_eq!(state.theta, delta);
        let fresh = state.recompute_yf(&q);
        let scale = 1.0 + fresh.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            prop_assert!((state.yf[i] - fresh[i]).abs() <= 1e-12 * scale);
            prop_assert!((state.c[i] - (c0[i] + delta * d[i])).abs() <= 1e-14);
            prop_assert!((state.alpha[i] - (alpha[i] + delta * dir.beta[i])).abs() <= 1e-14);
        }
        let after: f64 = state.alpha.iter().zip(y.iter()).map(|(a, yi)| a * yi).sum();
        prop_assert!((after - before).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Step-length candidates are nonnegative, finite, and only proposed
    /// by indices whose set membership and sign guard admit them.
    #[test]
    fn theta_candidates_are_guarded(
        (state, pi) in arb_state_and_partition(),
        seed in 0u64..u64::MAX,
        e in prop::sample::select(vec![0.0f64, 0.01, 0.3]),
    ) {
        let n = pi.n();
        let mut r = rng(seed);
        let dir = {
            let beta: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            StepDirection { beta0: 0.0, beta, g }
        };
        let d: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..1.5)).collect();
        let tolr = if e == 0.0 {
            Tolerances::exact()
        } else {
            Tolerances::new(e, e * 0.7).unwrap()
        };
        let cands = theta_sets(&state, &dir, &pi, &tolr, &d);
        for &(i, v) in &cands.outside {
            prop_assert!(v >= 0.0 && v.is_finite());
            prop_assert_eq!(pi.kind_of(i), SetKind::Outside);
            prop_assert!(dir.g[i] < 0.0);
        }
        for &(i, v) in &cands.margin_lower {
            prop_assert!(v >= 0.0 && v.is_finite());
            prop_assert_eq!(pi.kind_of(i), SetKind::Margin);
            prop_assert!(dir.beta[i] < 0.0);
        }
        for &(i, v) in &cands.margin_upper {
            prop_assert!(v >= 0.0 && v.is_finite());
            prop_assert_eq!(pi.kind_of(i), SetKind::Margin);
            prop_assert!(dir.beta[i] > d[i]);
        }
        for &(i, v) in &cands.inside {
            prop_assert!(v >= 0.0 && v.is_finite());
            prop_assert_eq!(pi.kind_of(i), SetKind::Inside);
            prop_assert!(dir.g[i] > 0.0);
        }
    }

    /// Every collected boundary index satisfies both the state condition
    /// and the strict sign guard of its side.
    #[test]
    fn boundary_collection_is_sound(
        (state, pi) in arb_state_and_partition(),
        seed in 0u64..u64::MAX,
    ) {
        let n = pi.n();
        let mut r = rng(seed);
        let dir = {
            let beta: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
            StepDirection { beta0: 0.0, beta, g }
        };
        let d: Vec<f64> = (0..n).map(|_| r.random_range(-0.5..1.5)).collect();
        let b = collect_boundary_sets(&state, &dir, &pi, &d);
        let slack = 1e-9;
        for (i, side) in b.positions() {
            match side {
                BoundarySide::TowardOutside => match pi.kind_of(i) {
                    SetKind::Margin => {
                        prop_assert!(state.alpha[i] <= slack);
                        prop_assert!(dir.beta[i] < 0.0);
                    }
                    SetKind::Outside => {
                        prop_assert!(state.yf[i] <= 1.0 + slack);
                        prop_assert!(dir.g[i] < 0.0);
                    }
                    SetKind::Inside => prop_assert!(false, "inside index in B_O"),
                },
                BoundarySide::TowardInside => match pi.kind_of(i) {
                    SetKind::Margin => {
                        prop_assert!(state.alpha[i] >= state.c[i] - slack);
                        prop_assert!(dir.beta[i] > d[i]);
                    }
                    SetKind::Inside => {
                        prop_assert!(state.yf[i] >= 1.0 - slack);
                        prop_assert!(dir.g[i] > 0.0);
                    }
                    SetKind::Outside => prop_assert!(false, "outside index in B_I"),
                },
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// A margin system maintained through a long random add/remove
    /// sequence produces the same direction solves as fresh builds.
    #[test]
    fn incremental_margin_system_tracks_fresh_builds(seed in 0u64..u64::MAX) {
        let mut r = rng(seed);
        let n = 8;
        let q = random_spd_q(n, &mut r);
        let y = random_labels(n, &mut r);
        let d: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();

        let mut members: Vec<usize> = vec![0, 1];
        let mut sys = MarginSystem::build_from_members(members.clone(), &q, &y).unwrap();

        for round in 0..24 {
            let outsiders: Vec<usize> =
                (0..n).filter(|i| !members.contains(i)).collect();
            let add = !outsiders.is_empty() && (members.len() <= 1 || r.random_bool(0.5));
            if add {
                let j = outsiders[r.random_range(0..outsiders.len())];
                sys.update_members(&[j], &[], &q, &y).unwrap();
                members.push(j);
            } else {
                let k = r.random_range(0..members.len());
                let j = members.remove(k);
                sys.update_members(&[], &[j], &q, &y).unwrap();
            }

            let mut assign = vec![SetKind::Outside; n];
            for (pos, i) in (0..n).filter(|i| !members.contains(i)).enumerate() {
                assign[i] = if pos % 2 == 0 {
                    SetKind::Outside
                } else {
                    SetKind::Inside
                };
            }
            for &m in &members {
                assign[m] = SetKind::Margin;
            }
            let pi = Partition::from_assignment(assign);
            let mut sorted = members.clone();
            sorted.sort_unstable();
            let fresh = MarginSystem::build_from_members(sorted, &q, &y).unwrap();
            let a = solve_direction(&sys, &pi, &d, &q, &y).unwrap();
            let b = solve_direction(&fresh, &pi, &d, &q, &y).unwrap();
            prop_assert!(
                (a.beta0 - b.beta0).abs() <= 1e-8,
                "round {}: beta0 {} vs {}", round, a.beta0, b.beta0
            );
            for i in 0..n {
                prop_assert!((a.beta[i] - b.beta[i]).abs() <= 1e-8);
                prop_assert!((a.g[i] - b.g[i]).abs() <= 1e-8);
            }
        }
    }
}
