use std::f64::consts::{SQRT_2, TAU};

use proptest::prelude::*;

use tangle::melnikov_bridge::{
    compute_homoclinic_orbit, melnikov_integrals, HomoclinicOrbitData, OdeSystem, SectionGeometry,
};
use tangle::numeric::linear_fit;
use tangle::ForcingProfile;

/// Loop data with odd divergence E and even weight H on [−40, 40].
fn synthetic(e: impl Fn(f64) -> f64, h: impl Fn(f64) -> f64, l: (f64, f64)) -> HomoclinicOrbitData {
    let step = 1e-3;
    let s: Vec<f64> = (-40_000..=40_000).map(|i| i as f64 * step).collect();
    let n = s.len();
    let sec = |s| SectionGeometry { s, point: [0.0; 2], tangent: [1.0, 0.0], normal: [0.0, -1.0] };
    HomoclinicOrbitData {
        step,
        x: vec![0.0; n],
        y: vec![0.0; n],
        u: vec![0.0; n],
        v: vec![0.0; n],
        e: s.iter().map(|&t| e(t)).collect(),
        h: s.iter().map(|&t| h(t)).collect(),
        s,
        l_plus: l.0,
        l_minus: l.1,
        epsilon: 0.05,
        alpha: SQRT_2,
        beta: 1.0,
        residual: 0.0,
        family_parameter: None,
        sigma_minus: sec(-l.1),
        sigma_plus: sec(l.0),
    }
}

fn sech2(t: f64) -> f64 {
    1.0 / t.cosh().powi(2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn symmetric_profiles_have_no_sine_part(k in 0.2..1.0f64, omega in 0.5..4.0f64, width in 0.5..1.0f64) {
        // R = H·e^{k|s|} must decay: 2/width − k ≥ 1
        let orbit = synthetic(|t| -k * t.tanh(), |t| sech2(t / width), (3.0, 3.0));
        let sys = OdeSystem { omega, ..OdeSystem::folium(SQRT_2, 1.0) };
        let d = melnikov_integrals(&orbit, &sys).unwrap();
        prop_assert!(d.s_val.abs() < 1e-9, "S = {:e}", d.s_val);
        // symmetric truncation keeps S_L = 0 as well
        prop_assert!(d.s_l.abs() < 1e-9);
        prop_assert!(d.c_val.abs() > 1e-6);
    }
}

#[test]
fn harmonic_integrals_decay_exponentially() {
    let eight = ForcingProfile::new(vec![1.0; 8], vec![]).unwrap();
    let mut fits = Vec::new();
    // the folium loop and a smooth synthetic profile
    let sys = OdeSystem { forcing: eight.clone(), ..OdeSystem::folium(SQRT_2, 1.0) };
    let folium = compute_homoclinic_orbit(&sys, 1e-9).unwrap();
    let synth = synthetic(|t| -1.2 * t.tanh(), sech2, (3.0, 3.0));
    for orbit in [&folium, &synth] {
        let d = melnikov_integrals(orbit, &sys).unwrap();
        assert_eq!(d.harmonics.len(), 8);
        let n: Vec<f64> = d.harmonics.iter().map(|h| h.n as f64).collect();
        let m: Vec<f64> = d.harmonics.iter().map(|h| h.c.hypot(h.s).ln()).collect();
        let (slope, _) = linear_fit(&n, &m);
        fits.push(-slope);
    }
    assert!(fits.iter().all(|r| *r > 0.0), "{fits:?}");
}

#[test]
fn phi_l_is_a_shifted_sine_of_the_truncated_amplitude() {
    let sys = OdeSystem::folium(SQRT_2, 1.0);
    let orbit = compute_homoclinic_orbit(&sys, 1e-9).unwrap();
    let d = melnikov_integrals(&orbit, &sys).unwrap();
    let amp = d.c_l.hypot(d.s_l);
    // direct trapezoid quadrature of ∫ R(s) sin(θ + ωL⁻ + ωs) ds over [−L⁻, L⁺]
    let h = orbit.step;
    let mut w = vec![0.0; orbit.len()];
    for i in 1..orbit.len() {
        w[i] = w[i - 1] + 0.5 * h * (orbit.e[i] + orbit.e[i - 1]);
    }
    let i0 = orbit.s.iter().position(|s| s.abs() < 0.5 * h).unwrap();
    let r: Vec<f64> = (0..orbit.len()).map(|i| orbit.h[i] * (-(w[i] - w[i0])).exp()).collect();
    let direct = |theta: f64| {
        let f = |s: f64, r: f64| r * (theta + sys.omega * d.l_minus + sys.omega * s).sin();
        let (lo, hi) = (-d.l_minus, d.l_plus);
        let mut sum = 0.0;
        for i in 1..orbit.len() {
            let (s0, s1) = (orbit.s[i - 1], orbit.s[i]);
            let (a, b) = (s0.max(lo), s1.min(hi));
            if b > a {
                // R linearly interpolated inside the cell
                let ri = |s: f64| r[i - 1] + (r[i] - r[i - 1]) * (s - s0) / h;
                sum += 0.5 * (b - a) * (f(a, ri(a)) + f(b, ri(b)));
            }
        }
        sum
    };
    for k in 0..12 {
        let theta = TAU * k as f64 / 12.0;
        let phi = d.phi_l(theta);
        assert!((phi - amp * (theta + d.phase_shift).sin()).abs() < 1e-12 * amp, "θ = {theta}");
        // trapezoid at the orbit step: O(h²) against the higher-order rule
        assert!((phi - direct(theta)).abs() < 1e-5 * amp, "θ = {theta}: {phi} vs {}", direct(theta));
    }
}

#[test]
fn truncation_converges_to_the_full_integrals() {
    let sys = OdeSystem::folium(SQRT_2, 1.0);
    let mut orbit = compute_homoclinic_orbit(&sys, 1e-9).unwrap();
    let mut gaps = Vec::new();
    for eps in [0.1, 0.01, 1e-3] {
        orbit.set_epsilon(&sys, eps).unwrap();
        let d = melnikov_integrals(&orbit, &sys).unwrap();
        gaps.push(((d.a_l - d.a_val).abs(), (d.c_l - d.c_val).abs().max((d.s_l - d.s_val).abs())));
    }
    for w in gaps.windows(2) {
        assert!(w[1].0 < w[0].0 && w[1].1 < w[0].1, "{gaps:?}");
    }
}
