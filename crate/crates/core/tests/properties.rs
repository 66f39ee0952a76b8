//! Property checks across modules: metric axioms, planner hypotheses, packing fits, box maps.

use proptest::prelude::*;

use subriemann::control::{endpoint, OdeConfig};
use subriemann::fixtures;
use subriemann::hausdorff::dimension_fit;
use subriemann::metric::{estimate_distance, scale_adapted_frame, volume_check, DistanceConfig, UniformConfig};
use subriemann::nilpotent::TriangularIntegrator;
use subriemann::planner::{plan, steer_nilpotent, PlanConfig, ResidualMetric, SteerConfig};
use subriemann::symfield::{rat, rint, CompiledSystem};

fn quick() -> DistanceConfig {
    DistanceConfig {
        restarts: 6,
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn distance_is_symmetric_and_triangular(
        a in prop::array::uniform3(-0.1f64..0.1),
        b in prop::array::uniform3(-0.1f64..0.1),
        c in prop::array::uniform3(-0.1f64..0.1),
    ) {
        let h = fixtures::heisenberg();
        let ode = OdeConfig::default();
        let d = |p: &[f64], q: &[f64]| estimate_distance(&h.fields, p, q, &quick(), &ode).unwrap().upper;
        let (ab, ba, bc, ac) = (d(&a, &b), d(&b, &a), d(&b, &c), d(&a, &c));
        prop_assert!((ab - ba).abs() <= 0.05 * ab.max(ba), "{} {}", ab, ba);
        prop_assert!(ac <= 1.05 * (ab + bc), "{} > {} + {}", ac, ab, bc);
    }

    #[test]
    fn witness_reaches_target_at_reported_length(q in prop::array::uniform3(-0.1f64..0.1)) {
        let u = fixtures::unicycle();
        let ode = OdeConfig::default();
        let est = estimate_distance(&u.fields, &[0.0; 3], &q, &quick(), &ode).unwrap();
        let end = endpoint(&CompiledSystem::new(&u.fields), &est.witness, &[0.0; 3], &ode).unwrap();
        let err = end.iter().zip(&q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-6, "{}", err);
        prop_assert_eq!(est.witness.cost(), est.upper);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homogeneous_systems_plan_in_one_step(a in prop::array::uniform3(-0.05f64..0.05), which in 0usize..2) {
        let sys = [fixtures::heisenberg(), fixtures::martinet()][which].clone();
        let cfg = PlanConfig::default();
        let r = plan(&sys, &a, &[0.0; 3], &cfg).unwrap();
        prop_assert!(r.converged && r.iterations() <= 1, "{:?}", r.residuals);
        prop_assert!(r.k_ratios.iter().all(|k| *k <= cfg.steer.k_cap));
    }

    #[test]
    fn steering_reaches_goal_within_cost_cap(x0 in prop::array::uniform3(-0.2f64..0.2)) {
        let u = fixtures::unicycle();
        let nil = subriemann::nilpotent::nilpotent_approximation(&u, &fixtures::unicycle_chart().unwrap()).unwrap();
        let cfg = SteerConfig::default();
        let s = steer_nilpotent(&nil, &x0, &[0.0; 3], &cfg, &ResidualMetric::PseudoNorm).unwrap();
        let end = TriangularIntegrator::new(&nil).endpoint(&s.control, &x0);
        prop_assert!(end.iter().all(|v| v.abs() < 1e-9), "{:?}", end);
        prop_assert!(s.cost <= cfg.k_cap * s.reference);
    }

    #[test]
    fn packing_fit_recovers_power_laws(q in 2.0f64..6.0, c in 0.5f64..5.0, log in any::<bool>()) {
        let r = 0.2;
        let eps = subriemann::hausdorff::default_scales(r, 5);
        let counts: Vec<f64> = eps
            .iter()
            .map(|e| {
                let base = c * (r / e).powf(q);
                if log { base * (1.0 + r / e).ln() } else { base }
            })
            .collect();
        let est = dimension_fit(&eps, &counts, r, Some(q), 10.0).unwrap();
        prop_assert_eq!(est.log_correction_detected, log);
        prop_assert!((est.fitted_dimension - q).abs() < 1e-6, "{} vs {}", est.fitted_dimension, q);
    }

    #[test]
    fn box_coordinates_invert_the_box_map(x in prop::array::uniform3(-1.0f64..1.0), q0 in -0.3f64..0.3) {
        let m = fixtures::martinet();
        let q = vec![subriemann::symfield::point_from_f64(&[q0])[0].clone(), rint(0), rint(0)];
        let frame = scale_adapted_frame(&m, &q, &rat(1, 10), 3).unwrap();
        let ode = OdeConfig::default();
        let scaled: Vec<f64> = x.iter().zip(frame.lengths()).map(|(v, l)| v * 0.1f64.powi(l as i32)).collect();
        let y = frame.box_point(&scaled, &ode).unwrap();
        let back = frame.box_coordinates(&y, &ode).unwrap();
        let err = back.iter().zip(&scaled).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        prop_assert!(err < 1e-9, "{:?} vs {:?}", back, scaled);
    }
}

#[test]
fn regular_martinet_volume_scales_with_q() {
    let m = fixtures::martinet();
    let points = vec![vec![rat(1, 2), rint(0), rint(0)]];
    let rep = volume_check(&m, &points, &[0.1, 0.05, 0.025], 200, 5, &UniformConfig::default(), &quick(), &OdeConfig::default()).unwrap();
    assert!((rep.exponents[0] - 4.0).abs() < 0.5, "{}", rep.summary());
    assert!(rep.ratio_min > 0.0 && rep.ratio_max < 10.0, "{}", rep.summary());
}
