//! Property tests over geometry, power, the QP and the slowing profile.

use energy_sufficiency::geometry::{
    double_sigmoid, path_time_derivative, smooth_point, spc_update, SmoothParams, Vec2, WaypointPath,
};
use energy_sufficiency::power::{Disturbance, ParabolicPower, UnicyclePower};
use energy_sufficiency::qp::{oracle_solve, solve, Qp3};
use energy_sufficiency::sim::{synth_planner, Rect};
use energy_sufficiency::unicycle::{
    build_slowing_profile, handle_velocity, slowing_integral_with, to_unicycle, twoway, UnicycleParams,
};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Vec2> {
    (-10.0..10.0f64, -10.0..10.0f64).prop_map(|(x, y)| Vec2::new(x, y))
}

/// Paths whose segments are all at least 0.5 m long.
fn path() -> impl Strategy<Value = WaypointPath> {
    prop::collection::vec(point(), 2..7).prop_filter_map("short segment", |pts| {
        let ok = pts.windows(2).all(|w| w[0].dist(w[1]) > 0.5);
        ok.then(|| WaypointPath::new(pts).ok()).flatten()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn spc_preserves_length_and_turning(p in path(), kappa in 0.05..0.95f64) {
        let q = spc_update(&p, p.head(), kappa).unwrap();
        prop_assert!((q.total_length() - p.total_length()).abs() <= 1e-9 * p.total_length());
        prop_assert!((q.total_turning() - p.total_turning()).abs() <= 1e-9 * p.total_turning().max(1.0));
        prop_assert_eq!(q.head(), p.head());
        prop_assert_eq!(q.end(), p.end());
    }

    #[test]
    fn breakpoints_are_monotone_and_pinned(p in path()) {
        let bp = p.breakpoints();
        prop_assert_eq!(bp[0], 0.0);
        prop_assert!((bp[bp.len() - 1] - 1.0).abs() < 1e-12);
        prop_assert!(bp.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn smoothing_pins_endpoints(p in path()) {
        let params = SmoothParams::default();
        let l = p.total_length();
        prop_assert!(smooth_point(&p, &params, 0.0).dist(p.head()) <= 1e-4 * l);
        prop_assert!(smooth_point(&p, &params, 1.0).dist(p.end()) <= 1e-4 * l);
    }

    #[test]
    fn double_sigmoids_lie_in_unit_interval(p in path(), s in 0.0..1.0f64) {
        let params = SmoothParams::default();
        for i in 0..p.segment_count() {
            let v = double_sigmoid(&params, &p, i, s).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    /// L̇ and ∂x_r/∂t agree with finite differences of a path whose head moves with ξ.
    #[test]
    fn head_motion_derivatives_match_finite_differences(
        p in path(),
        s in 0.02..0.98f64,
        xi in (-1.0..1.0f64, -1.0..1.0f64),
    ) {
        let params = SmoothParams::with_beta(50.0).unwrap();
        let xi = Vec2::new(xi.0, xi.1);
        let dynamics = path_time_derivative(&p, &params, s, xi);
        let h = 1e-6;
        let moved = |sign: f64| {
            let mut pts = p.waypoints().to_vec();
            pts[0] = pts[0] + xi * (sign * h);
            WaypointPath::new(pts).unwrap()
        };
        let (plus, minus) = (moved(1.0), moved(-1.0));
        let l_dot_fd = (plus.total_length() - minus.total_length()) / (2.0 * h);
        prop_assert!((dynamics.l_dot - l_dot_fd).abs() <= 1e-5 * (1.0 + l_dot_fd.abs()));
        let xr_fd = (smooth_point(&plus, &params, s) - smooth_point(&minus, &params, s)) * (1.0 / (2.0 * h));
        let err = (dynamics.xr_partial_t - xr_fd).norm();
        prop_assert!(err <= 1e-4 * (1.0 + xr_fd.norm()), "analytic {:?} vs fd {:?}", dynamics.xr_partial_t, xr_fd);
    }

    #[test]
    fn power_models_are_positive(v in 0.0..2.0f64, w in -5.0..5.0f64, payload in 0.0..20.0f64) {
        let si = ParabolicPower::default().with_payload(payload);
        prop_assert!(si.power(v).unwrap() >= payload);
        let uni = UnicyclePower::default().with_payload(payload);
        prop_assert!(uni.power(v, w) >= payload);
    }

    /// The low converged root satisfies P(v)/v = P(v_r)/v_r + Δp/v.
    #[test]
    fn converged_speed_solves_the_balance(v_r in 0.02..0.5f64, dp in 0.0..0.5f64) {
        let m = ParabolicPower::default();
        if let Some(v) = m.converged_speed(v_r, Disturbance::new(dp)).unwrap().low() {
            let c = m.eval(v_r) / v_r;
            prop_assert!((m.eval(v) + dp - c * v).abs() <= 1e-9 * (1.0 + c * v));
        }
    }

    #[test]
    fn unicycle_transformation_round_trips(u in point(), theta in -4.0..4.0f64, handle in 0.05..0.5f64) {
        let (v, w) = to_unicycle(u, theta, handle);
        let back = handle_velocity(v, w, theta, handle);
        prop_assert!((back - u).norm() <= 1e-9 * (1.0 + u.norm()));
        let (v2, w2) = twoway(v, w);
        prop_assert_eq!(v2, v);
        prop_assert!(w2.abs() == w.abs() || v == 0.0);
    }

    #[test]
    fn qp_solution_is_feasible_and_optimal(
        a in prop::array::uniform3(prop::array::uniform3(-2.0..2.0f64)),
        b in prop::array::uniform3(-2.0..2.0f64),
        z_nom in prop::array::uniform3(-2.0..2.0f64),
    ) {
        let qp = Qp3 { a, b, z_nom };
        if let Ok(sol) = solve(&qp) {
            prop_assert!(qp.violation(&sol.z) <= 1e-9);
            prop_assert!(sol.lambda.iter().all(|l| *l >= -1e-9));
            if let Ok(oracle) = oracle_solve(&qp, 20_000) {
                let obj = |z: &[f64; 3]| (0..3).map(|i| (z[i] - z_nom[i]).powi(2)).sum::<f64>();
                prop_assert!(obj(&sol.z) <= obj(&oracle) + 1e-6);
            }
        }
    }

    #[test]
    fn planner_paths_stay_in_bounds_and_end_at_station(seed in any::<u64>(), x in point()) {
        let bounds = Rect::new(Vec2::new(-10.0, -10.0), Vec2::new(10.0, 10.0)).unwrap();
        let station = Vec2::ZERO;
        let pts = synth_planner(seed, x, station, bounds, (2, 6)).unwrap();
        prop_assert_eq!(pts[0], x);
        prop_assert_eq!(*pts.last().unwrap(), station);
        prop_assert!(pts.iter().all(|p| bounds.contains(*p)));
        prop_assert!(WaypointPath::new(pts).is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// The closed-form profile integral agrees with Simpson quadrature and its derivative is −δ̃(s).
    #[test]
    fn slowing_integral_is_consistent(p in path(), s in 0.0..0.99f64) {
        prop_assume!(p.len() >= 3);
        let prof = build_slowing_profile(&p, &UnicyclePower::default(), 0.1, &UnicycleParams::default(), 0.2).unwrap();
        let exact = prof.integral_exact(s);
        let simpson = slowing_integral_with(&prof, s, 20_000);
        prop_assert!((exact - simpson).abs() <= 1e-6 * (1.0 + exact.abs()), "exact {} simpson {}", exact, simpson);
        let h = 1e-7;
        let deriv = (prof.integral_exact(s + h) - prof.integral_exact(s - h.min(s))) / (h + h.min(s));
        prop_assert!((deriv + prof.power(s)).abs() <= 1e-3 * (1.0 + prof.power(s)), "d/ds {} vs -{}", deriv, prof.power(s));
    }
}
