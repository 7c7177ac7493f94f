use std::f64::consts::{SQRT_2, TAU};

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tangle::horseshoe_certifier::{certify_horseshoe, scan_parameter, ConeSpec, Sampling};
use tangle::manifolds_tangency::{
    fold_tip, most_contracted_direction, saddle_for, stable_curve, tangency_gap, DEFAULT_ORDER,
};
use tangle::map_core::{apply_unwrapped, domain_boundaries, eval_f, jacobian};
use tangle::{MapParams, PhasePoint};

fn deep_family() -> MapParams {
    MapParams::new(0.0, 1e-4, 3.0, 200.0, SQRT_2).unwrap().with_k(1e-6).unwrap()
}

fn slope(w: Vector2<f64>) -> f64 {
    (w[1] / w[0]).abs()
}

#[test]
fn interior_cone_vectors_follow_the_boundary() {
    let cones = ConeSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for p in [deep_family().with_a(2.76), MapParams::reference(1.5)] {
        for _ in 0..2000 {
            let z = rng.gen_range(-1.0..1.0);
            let strips = domain_boundaries(&p, z).unwrap();
            let s = strips[rng.gen_range(0..strips.len())];
            let q = PhasePoint::new(s.theta_l + s.width() * rng.gen_range(0.0..1.0), z);
            let Some((t1, z1)) = apply_unwrapped(&p, q.theta, q.z) else { continue };
            if !(eval_f(&p, PhasePoint::new(t1, z1)) > 0.0) {
                continue;
            }
            let j = jacobian(&p, q).unwrap();
            let h = cones.horizontal_bound;
            if [h, -h].iter().all(|s| slope(j * Vector2::new(1.0, *s)) < h) {
                let s = rng.gen_range(-h..h);
                assert!(slope(j * Vector2::new(1.0, s)) < h);
                checked += 1;
            }
            let inv = j.try_inverse().unwrap();
            let v = 1.0 / cones.vertical_bound;
            if [v, -v].iter().all(|s| slope(inv * Vector2::new(*s, 1.0)) > cones.vertical_bound) {
                let s = rng.gen_range(-v..v);
                assert!(slope(inv * Vector2::new(s, 1.0)) > cones.vertical_bound);
                checked += 1;
            }
        }
    }
    assert!(checked > 1000, "{checked}");
}

#[test]
fn fold_margin_is_lipschitz_in_a() {
    let steps = 60;
    let sampling = Sampling { v_theta: 400, v_z: 40, vf: 2500 };
    let r = scan_parameter(&deep_family(), (0.0, TAU), steps, ConeSpec::default(), sampling).unwrap();
    let da = TAU / (steps - 1) as f64;
    for w in r.points.windows(2) {
        let (m0, m1) = (w[0].fold_margin, w[1].fold_margin);
        if m0.is_finite() && m1.is_finite() {
            // dθ₁/da = 1 moves every image by exactly da
            assert!((m1 - m0).abs() <= da * 1.01 + 1e-9, "a = {}: {m0} → {m1}", w[0].a);
        }
    }
}

#[test]
fn certified_parameter_realises_the_full_shift() {
    let rep = certify_horseshoe(&deep_family().with_a(2.76), ConeSpec::default(), Sampling::default()).unwrap();
    assert!(rep.certified, "{rep:?}");
    let t = rep.transitions.expect("transition check runs when certified");
    assert!(t.complete(), "{t:?}");
    assert!(rep.fold_margin > 0.0 && rep.cone_h_margin > 0.0 && rep.cone_v_margin > 0.0);
}

fn oracle(m: &Matrix2<f64>) -> (Vector2<f64>, f64) {
    let eig = SymmetricEigen::new(m.transpose() * m);
    let i = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    (eig.eigenvectors.column(i).into(), eig.eigenvalues[i].max(0.0).sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn most_contracted_direction_matches_eigen_oracle(
        entries in prop::collection::vec(prop::array::uniform4(-2.0..2.0f64), 1..6),
    ) {
        let factors: Vec<Matrix2<f64>> = entries.iter().map(|e| Matrix2::new(e[0], e[1], e[2], e[3])).collect();
        let product = factors.iter().fold(Matrix2::identity(), |acc, m| m * acc);
        let (v, s_min) = oracle(&product);
        let s_max = product.norm();
        // skip products that are conformal to within the oracle's own accuracy
        let gap = {
            let eig = SymmetricEigen::new(product.transpose() * product);
            (eig.eigenvalues[0] - eig.eigenvalues[1]).abs() / (s_max * s_max)
        };
        prop_assume!(gap > 1e-4);
        let d = most_contracted_direction(&factors).unwrap();
        let err = (d.direction - v).norm().min((d.direction + v).norm());
        prop_assert!(err < 1e-10, "{err:e}");
        prop_assert!((d.singular_values.0 - s_min).abs() < 1e-10 * s_max);
        prop_assert!((d.singular_values.0 * d.singular_values.1 - product.determinant().abs()).abs() < 1e-10 * s_max * s_max);
    }
}

#[test]
fn fold_tip_lies_on_the_stable_curve_at_tangency() {
    // a* from the tangency pipeline on the d = 20 family
    let base = MapParams::new(4.5, 0.005, 3.0, 20.0, SQRT_2).unwrap().with_k(1.0).unwrap();
    let rep = tangle::manifolds_tangency::find_tangency(&base, 15, (4.5, 4.55)).unwrap();
    let p = base.with_a(rep.a_star);
    let saddle = saddle_for(&p, 15).unwrap();
    assert!(tangency_gap(&p, &saddle).unwrap().abs() < 1e-10);
    let tip = fold_tip(&p, &saddle).unwrap();
    // independent sample of W^s by arclength integration, interpolated at the tip height
    let dz = tip.tip.z - saddle.point.z;
    let curve = stable_curve(&p, &saddle, DEFAULT_ORDER, 1.5 * dz.abs(), 1e-5).unwrap();
    let seg = curve
        .points
        .windows(2)
        .find(|w| (w[0].z - tip.tip.z) * (w[1].z - tip.tip.z) <= 0.0)
        .expect("stable curve reaches the tip height");
    let u = (tip.tip.z - seg[0].z) / (seg[1].z - seg[0].z);
    let lift = |t: f64| t + TAU * ((tip.tip.theta - t) / TAU).round();
    let theta = lift(seg[0].theta) + u * (lift(seg[1].theta) - lift(seg[0].theta));
    assert!((theta - tip.tip.theta).abs() < 1e-8, "{:e}", theta - tip.tip.theta);
}
