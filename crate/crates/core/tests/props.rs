//! Property tests for the projection and the stepsize schedules.

use proptest::prelude::*;

use aggsim_core::game::ActionSet;
use aggsim_core::stepsize::{aggressive_stepsize, StepsizeSchedule};

fn arb_box(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((-50.0f64..50.0, 0.1f64..100.0), dim).prop_map(|pairs| {
        let lower: Vec<f64> = pairs.iter().map(|(lo, _)| *lo).collect();
        let upper: Vec<f64> = pairs.iter().map(|(lo, w)| lo + w).collect();
        (lower, upper)
    })
}

proptest! {
    #[test]
    fn box_projection_idempotent_and_optimal(
        (lower, upper) in arb_box(4),
        v in prop::collection::vec(-200.0f64..200.0, 4),
        probe in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let set = ActionSet::bounded_box(lower.clone(), upper.clone()).unwrap();
        let p = set.project(&v);
        prop_assert!(set.contains(&p, 1e-12));
        let pp = set.project(&p);
        for k in 0..4 {
            prop_assert!((p[k] - pp[k]).abs() <= 1e-12);
        }
        // No feasible point is closer than the projection.
        let candidate: Vec<f64> = (0..4)
            .map(|k| lower[k] + probe[k] * (upper[k] - lower[k]))
            .collect();
        let d_proj: f64 = p.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let d_cand: f64 = candidate.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(d_proj <= d_cand + 1e-9);
    }

    #[test]
    fn plane_projection_idempotent_and_optimal(
        width in 1.0f64..100.0,
        v in prop::collection::vec(-300.0f64..300.0, 4),
        probe in prop::collection::vec(0.0f64..1.0, 2),
    ) {
        // Balanced box around zero with the alternating-sign plane, so the
        // plane always meets the box.
        let set = ActionSet::bounded_box(vec![0.0; 4], vec![width; 4])
            .unwrap()
            .with_equality(vec![1.0, -1.0, 1.0, -1.0])
            .unwrap();
        let p = set.project(&v);
        prop_assert!(set.contains(&p, 1e-9), "projection infeasible: {p:?}");
        let pp = set.project(&p);
        for k in 0..4 {
            prop_assert!((p[k] - pp[k]).abs() <= 1e-9);
        }
        // Feasible candidates: equal coordinates within pairs satisfy the
        // plane exactly.
        let candidate = [probe[0] * width,
            probe[0] * width,
            probe[1] * width,
            probe[1] * width];
        let d_proj: f64 = p.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let d_cand: f64 = candidate.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!(d_proj <= d_cand + 1e-9);
    }

    #[test]
    fn catchup_sum_matches_term_sum(
        counter in 0u64..500,
        lead in 0u64..40,
        rho0 in 0.01f64..2.0,
        gamma in 0.51f64..1.0,
    ) {
        let rho = StepsizeSchedule::power(rho0, gamma).unwrap();
        let buffered = counter + lead;
        let alpha = aggressive_stepsize(counter, buffered, &rho);
        let mut expected = 0.0;
        for t in counter..=buffered {
            expected += rho.value(t);
        }
        prop_assert!((alpha - expected).abs() <= 1e-12 * expected.max(1.0));
        // One term per update when up to date; more terms when lagging.
        prop_assert!(alpha >= rho.value(buffered));
        if lead > 0 {
            prop_assert!(alpha > rho.value(counter) * 0.999);
        }
    }
}
