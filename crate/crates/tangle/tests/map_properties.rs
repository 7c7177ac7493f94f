use std::f64::consts::{FRAC_PI_2, SQRT_2, TAU};

use nalgebra::Matrix2;
use proptest::prelude::*;

use tangle::map_core::{
    apply, apply_unwrapped, determinant_identity, domain_boundaries, dtheta1_dtheta, f_values, jacobian,
};
use tangle::{MapParams, PhasePoint, Step};

fn family() -> impl Strategy<Value = MapParams> {
    (0.0..TAU, prop_oneof![Just(0.005), Just(1e-4)], 2.0..4.0, prop_oneof![Just(2.0), Just(20.0)])
        .prop_map(|(a, b, c, d)| MapParams::new(a, b, c, d, SQRT_2).unwrap())
}

/// A point of V where 𝔽 exceeds `floor`.
fn point_in_v(p: &MapParams, floor: f64) -> impl Strategy<Value = PhasePoint> {
    let p = p.clone();
    (-FRAC_PI_2..3.0 * FRAC_PI_2, -1.0..1.0f64)
        .prop_map(|(t, z)| PhasePoint::new(t, z))
        .prop_filter("F above floor", move |q| f_values(&p, q.theta, q.z).f > floor)
}

fn family_and_point(floor: f64) -> impl Strategy<Value = (MapParams, PhasePoint)> {
    family().prop_flat_map(move |p| {
        let q = point_in_v(&p, floor);
        (Just(p), q)
    })
}

fn image(p: &MapParams, q: PhasePoint) -> PhasePoint {
    match apply(p, q).unwrap() {
        Step::Image(r) => r,
        Step::Escaped => panic!("point of V escaped"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn determinant_matches_closed_form((p, q) in family_and_point(0.0)) {
        let det = jacobian(&p, q).unwrap().determinant();
        let expected = determinant_identity(&p, q);
        let fv = f_values(&p, q.theta, q.z);
        let cancellation = (p.d * fv.f_theta / fv.f).abs();
        let rel = ((det - expected) / expected).abs();
        // the two terms of the determinant cancel at scale d|𝔽_θ|/𝔽
        prop_assert!(rel <= 4.0 * f64::EPSILON * (1.0 + cancellation), "rel {rel:e}, scale {cancellation:e}");
        if cancellation < 1e3 {
            prop_assert!(rel < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_central_differences((p, q) in family_and_point(0.05)) {
        let h = 1e-6;
        let f = |t: f64, z: f64| apply_unwrapped(&p, t, z).unwrap();
        let (tp, tm) = (f(q.theta + h, q.z), f(q.theta - h, q.z));
        let (zp, zm) = (f(q.theta, q.z + h), f(q.theta, q.z - h));
        let fd = Matrix2::new(
            (tp.0 - tm.0) / (2.0 * h),
            (zp.0 - zm.0) / (2.0 * h),
            (tp.1 - tm.1) / (2.0 * h),
            (zp.1 - zm.1) / (2.0 * h),
        );
        let j = jacobian(&p, q).unwrap();
        // row-wise, since the z-row is smaller than the θ-row by about b
        for r in 0..2 {
            let err = (j.row(r) - fd.row(r)).norm() / j.row(r).norm();
            prop_assert!(err < 1e-5, "row {r}: {err:e}");
        }
    }

    #[test]
    fn shifting_the_angle_by_a_turn_changes_nothing((p, q) in family_and_point(1e-3)) {
        let a = image(&p, q);
        let b = image(&p, PhasePoint { theta: q.theta + TAU, z: q.z });
        let fv = f_values(&p, q.theta, q.z);
        // sin(θ + 2π) and sin θ differ in the last bits, amplified by d/𝔽 in θ₁
        let tol = 1e-12 * (1.0 + p.d / fv.f);
        prop_assert!(a.distance(&b) < tol, "{:e}", a.distance(&b));
        prop_assert!(((a.z - b.z) / a.z).abs() < 1e-12);
    }

    #[test]
    fn shift_parameter_is_periodic(a in -20.0..20.0f64, (t, z) in (-FRAC_PI_2..3.0 * FRAC_PI_2, -0.5..0.5f64)) {
        let p = MapParams::reference(a);
        let p2 = p.with_a(a + TAU);
        let q = PhasePoint::new(t, z);
        if f_values(&p, t, z).f > 1e-3 {
            prop_assert!(image(&p, q).distance(&image(&p2, q)) < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn fold_is_monotone_for_pure_sine(c in 2.0..6.0f64, z in -0.9..0.9f64, u in 0.0..1.0f64, du in 1e-3..0.1f64) {
        let p = MapParams::new(1.0, 0.005, c, 2.0, SQRT_2).unwrap();
        for s in domain_boundaries(&p, z).unwrap() {
            let w = s.width();
            let t0 = s.theta_l + w * (0.01 + 0.98 * u);
            let t1 = (t0 + du * w).min(s.theta_r - 0.01 * w);
            if t1 > t0 {
                prop_assert!(dtheta1_dtheta(&p, t1, z) > dtheta1_dtheta(&p, t0, z));
            }
        }
    }
}

#[test]
fn image_goes_to_infinity_and_zero_at_both_ends_of_a_strip() {
    let p = MapParams::reference(1.0);
    let z = 0.2;
    let s = domain_boundaries(&p, z).unwrap()[0];
    for end in [s.theta_l, s.theta_r] {
        let inward = if end == s.theta_l { 1.0 } else { -1.0 };
        let images: Vec<(f64, f64)> =
            (2..13).map(|k| apply_unwrapped(&p, end + inward * 10f64.powi(-k), z).unwrap()).collect();
        for w in images.windows(2) {
            // each decade closer adds about d·ln 10 to θ₁ and divides z₁ by 10^γ
            let dt = w[1].0 - w[0].0;
            assert!((dt / (p.d * 10f64.ln()) - 1.0).abs() < 0.05, "{dt}");
            assert!(w[1].1 < w[0].1 * 10f64.powf(-0.95 * SQRT_2));
        }
        assert!(images.last().unwrap().1 < 1e-17);
    }
}

#[test]
fn jacobian_outside_v_is_rejected() {
    let p = MapParams::reference(0.2);
    // Φ = sin: 𝔽 = 1 + 3 sin θ + z < 0 at θ = −π/2
    assert!(jacobian(&p, PhasePoint::new(-FRAC_PI_2 + 1e-3, 0.0)).is_err());
}
