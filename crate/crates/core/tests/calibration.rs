use carvebot_core::calib::{
    calibration_residual, fit_calibration, objective, CalibrationParams, CalibrationSolver, MarkerPair,
};
use carvebot_core::Point2;
use proptest::prelude::*;

// Written out by hand rather than through the library mapping.
fn oracle_map(theta: [f64; 5], c: Point2) -> Point2 {
    let (s, co) = theta[0].sin_cos();
    Point2::new(
        theta[1] * co * c.x - theta[2] * s * c.y - theta[3],
        theta[1] * s * c.x + theta[2] * co * c.y - theta[4],
    )
}

fn transform_strategy() -> impl Strategy<Value = [f64; 5]> {
    (
        -3.1f64..3.1,
        2e-4f64..3e-3,
        2e-4f64..3e-3,
        -0.5f64..0.5,
        -0.5f64..0.5,
    )
        .prop_map(|(a, b, c, d, e)| [a, b, c, d, e])
}

fn camera_points(n: usize) -> impl Strategy<Value = Vec<Point2>> {
    prop::collection::vec((0.0f64..1280.0, 0.0f64..960.0), n).prop_map(|v| v.into_iter().map(Point2::from).collect())
}

fn well_spread(points: &[Point2]) -> bool {
    // reject nearly collinear marker layouts
    let c = points.iter().fold(Point2::new(0.0, 0.0), |a, p| a + *p) * (1.0 / points.len() as f64);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = *p - c;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (lo, hi) = (tr / 2.0 - disc, tr / 2.0 + disc);
    lo > 1e-3 * hi && hi > 1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn recovers_mapping_on_held_out_points(
        theta in transform_strategy(),
        markers in camera_points(6),
        held_out in camera_points(20),
    ) {
        prop_assume!(well_spread(&markers));
        let pairs: Vec<MarkerPair> = markers.iter().map(|&c| MarkerPair::new(oracle_map(theta, c), c)).collect();
        let fit = fit_calibration(&pairs).unwrap();
        for &c in &held_out {
            let err = fit.pixel_to_robot(c).distance(oracle_map(theta, c));
            prop_assert!(err < 1e-6, "held-out error {err}");
        }
        prop_assert!(fit.residual < 1e-8);
    }

    #[test]
    fn objective_history_never_increases(
        theta in transform_strategy(),
        markers in camera_points(8),
        noise in prop::collection::vec(-2e-3f64..2e-3, 16),
    ) {
        prop_assume!(well_spread(&markers));
        let pairs: Vec<MarkerPair> = markers
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let r = oracle_map(theta, c) + Point2::new(noise[2 * i], noise[2 * i + 1]);
                MarkerPair::new(r, c)
            })
            .collect();
        let fit = CalibrationSolver::default().solve(&pairs).unwrap();
        for w in fit.history.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        let final_obj = objective(&fit.params, &pairs);
        prop_assert!((final_obj - fit.history.last().unwrap()).abs() <= 1e-12 * (1.0 + final_obj));
        prop_assert!((calibration_residual(&fit.params, &pairs) - final_obj.sqrt()).abs() < 1e-15);
        // least squares: the true parameters cannot do better
        let truth = CalibrationParams::new(theta[0], theta[1], theta[2], Point2::new(theta[3], theta[4]));
        prop_assert!(final_obj <= objective(&truth, &pairs) * (1.0 + 1e-9) + 1e-18);
    }

    #[test]
    fn transform_columns_are_orthogonal(theta in transform_strategy(), markers in camera_points(5)) {
        prop_assume!(well_spread(&markers));
        let pairs: Vec<MarkerPair> = markers.iter().map(|&c| MarkerPair::new(oracle_map(theta, c), c)).collect();
        let t = fit_calibration(&pairs).unwrap().transform();
        let dot = t[0][0] * t[0][1] + t[1][0] * t[1][1];
        let n0 = (t[0][0].powi(2) + t[1][0].powi(2)).sqrt();
        let n1 = (t[0][1].powi(2) + t[1][1].powi(2)).sqrt();
        prop_assert!(dot.abs() <= 1e-12 * n0 * n1);
    }

    #[test]
    fn inverse_mapping_round_trips(theta in transform_strategy(), c in (0.0f64..1280.0, 0.0f64..960.0)) {
        let p = CalibrationParams::new(theta[0], theta[1], theta[2], Point2::new(theta[3], theta[4]));
        let c = Point2::from(c);
        prop_assert!(p.robot_to_pixel(p.pixel_to_robot(c)).distance(c) < 1e-7);
    }
}
