//! Acceptance runner: one PASS/FAIL line per criterion and a tally. Run with
//! `cargo test --test acceptance`; with TANGLE_ACCEPTANCE_STRICT set any
//! FAIL also fails the process.

use std::f64::consts::{SQRT_2, TAU};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tangle::horseshoe_certifier::{scan_parameter, ConeSpec, Sampling};
use tangle::manifolds_tangency::{
    find_tangency, gap_at, geometric_ratio, local_intersections, most_contracted_direction, saddle_for,
    stable_curve_with, DirectionField,
};
use tangle::map_core::{apply_unwrapped, determinant_identity, f_values, jacobian, v_bounding_box, ForcingProfile};
use tangle::melnikov_bridge::{
    compute_homoclinic_orbit, derive_map_params, e_integral_convergence, melnikov_integrals, HomoclinicOrbitData,
    OdeSystem, SectionGeometry, validate_return_map,
};
use tangle::periodic_orbits::{find_fixed_points, find_periodic_orbits, OrbitKind};
use tangle::survival_sets::{
    attractor_sample, convergence_to, escape_time_grid, lyapunov_exponent, seed_lattice, EscapeGrid,
};
use tangle::{MapParams, PhasePoint};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fail<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> String + '_ {
    move |e| format!("{what}: {e}")
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

/// Survivors form horizontal bands: nonempty, with thin z-runs that span
/// most θ-columns.
fn banded(g: &EscapeGrid) -> (bool, String) {
    let cols: Vec<usize> = (0..g.spec.theta_res).map(|i| g.bands_in_column(i)).filter(|&b| b > 0).collect();
    let max_bands = cols.iter().copied().max().unwrap_or(0);
    let coverage = g.column_coverage();
    let frac = g.survived_fraction();
    let ok = g.survivors() > 0 && coverage > 0.5 && frac < 0.5;
    (ok, format!("survivors {} ({:.3}%), column coverage {coverage:.3}, max bands/column {max_bands}", g.survivors(), 100.0 * frac))
}

fn criterion_1() -> Verdict {
    let p = MapParams::reference(0.2);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(fail("pool"))?;
    let t = Instant::now();
    let g15 = pool.install(|| escape_time_grid(&p, 15, (1000, 1000))).map_err(fail("n = 15 grid"))?;
    let dt = t.elapsed();
    let g3 = escape_time_grid(&p, 3, (1000, 1000)).map_err(fail("n = 3 grid"))?;
    let g6 = escape_time_grid(&p, 6, (1000, 1000)).map_err(fail("n = 6 grid"))?;
    let (ok3, d3) = banded(&g3);
    let (ok6, d6) = banded(&g6);
    check(
        g15.survivors() == 0 && ok3 && ok6 && dt <= Duration::from_secs(30),
        format!("n=15 survivors {} in {:.2}s (1 thread); n=3: {d3}; n=6: {d6}", g15.survivors(), secs(dt)),
    )
}

/// One sink among the candidates, then the basin test on ≥ 10⁴ surviving seeds.
fn sink_and_basin(p: &MapParams, targets: &[PhasePoint], multipliers: [f64; 2]) -> Verdict {
    let seeds = seed_lattice(p, 40_000, 1);
    let rep = convergence_to(p, targets, &seeds, 1000, 1e-6).map_err(fail("convergence"))?;
    check(
        rep.surviving >= 10_000 && rep.fraction() >= 0.99 && multipliers.iter().all(|m| *m < 1.0),
        format!(
            "|λ| = ({:.4}, {:.4}); {} of {} surviving seeds converge ({:.4})",
            multipliers[0],
            multipliers[1],
            rep.converged,
            rep.surviving,
            rep.fraction()
        ),
    )
}

fn criterion_2() -> Verdict {
    let p = MapParams::reference(2.0);
    let t = Instant::now();
    let fps = find_fixed_points(&p, 0..=0).map_err(fail("fixed points"))?;
    let sinks: Vec<_> = fps.iter().filter(|r| r.kind == OrbitKind::Sink).collect();
    if sinks.len() != 1 {
        return Err(format!("{} sinks in m = 0", sinks.len()));
    }
    let s = sinks[0];
    let v = sink_and_basin(&p, &[s.point], [s.multipliers[0].norm(), s.multipliers[1].norm()]);
    let dt = t.elapsed();
    let time_ok = dt <= Duration::from_secs(60);
    match v {
        Ok(d) if time_ok => Ok(format!("{d}; {:.2}s", secs(dt))),
        Ok(d) | Err(d) => Err(format!("{d}; {:.2}s", secs(dt))),
    }
}

/// Positive exponent with small bootstrap error and a non-collapsing attractor.
fn chaos(p: &MapParams) -> Verdict {
    let sample = attractor_sample(p, 1000, 500, 2500).map_err(fail("attractor"))?;
    let distinct = sample.distinct_points();
    let seed = *sample.points.last().ok_or("empty attractor")?;
    let est = lyapunov_exponent(p, seed, 100_000).map_err(fail("lyapunov"))?;
    check(
        est.exponent > 0.0 && est.relative_error() < 0.2 && distinct >= 1000,
        format!(
            "λ = {:.4} ± {:.4} ({:.1}%), attractor {distinct} distinct points",
            est.exponent,
            est.std_error,
            100.0 * est.relative_error()
        ),
    )
}

fn criterion_3() -> Verdict {
    chaos(&MapParams::reference(1.5))
}

fn criterion_4() -> Verdict {
    let forcing = ForcingProfile::from_harmonics(&[(1, 1.0), (3, 1.0)], &[]).map_err(fail("forcing"))?;
    let base = MapParams::new(1.0, 0.005, 1.0, 2.0, SQRT_2).and_then(|p| p.with_forcing(forcing)).map_err(fail("params"))?;
    let p1 = base.with_a(1.0);
    let orbits = (1..=4)
        .map(|n| find_periodic_orbits(&p1, n, 400))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail("periodic orbits"))?;
    let sink = orbits.into_iter().flatten().find(|o| o.kind == OrbitKind::Sink).ok_or("no periodic sink at a = 1")?;
    let sink_v = sink_and_basin(&p1, &sink.points, [sink.multipliers[0].norm(), sink.multipliers[1].norm()]);
    let chaos_v = chaos(&base.with_a(0.5));
    let detail = format!(
        "a=1: period-{} sink, {}; a=0.5: {}",
        sink.period,
        sink_v.as_ref().unwrap_or_else(|e| e),
        chaos_v.as_ref().unwrap_or_else(|e| e)
    );
    check(sink_v.is_ok() && chaos_v.is_ok(), detail)
}

/// The identity is checked to 1e−12 relative to the closed form. Where 𝔽 is
/// small the entries carry rounding of size ε·d|𝔽_θ|/𝔽 that cancels in the
/// determinant, so the line also reports the error in units of that scale.
fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let families = [MapParams::reference(0.7), MapParams::new(2.0, 1e-4, 3.0, 200.0, SQRT_2).unwrap()];
    let boxes: Vec<_> = families.iter().map(v_bounding_box).collect();
    let (mut worst, mut worst_scaled, mut outside) = (0.0f64, 0.0f64, 0);
    let mut tested = 0;
    while tested < 10_000 {
        let i = tested % families.len();
        let p = &families[i];
        let ((t0, t1), (z0, z1)) = boxes[i];
        let q = PhasePoint::new(rng.gen_range(t0..t1), rng.gen_range(z0..z1));
        let fv = f_values(p, q.theta, q.z);
        if !(fv.f > p.escape_floor) {
            continue;
        }
        let det = jacobian(p, q).map_err(fail("jacobian"))?.determinant();
        let expected = determinant_identity(p, q);
        let rel = ((det - expected) / expected).abs();
        let conditioning = f64::EPSILON * (1.0 + (p.d * fv.f_theta / fv.f).abs());
        worst = worst.max(rel);
        worst_scaled = worst_scaled.max(rel / conditioning);
        outside += (rel >= 1e-12) as usize;
        tested += 1;
    }
    check(
        worst < 1e-12,
        format!(
            "worst relative error {worst:.2e} over {tested} points, {outside} above 1e-12; \
             worst error / (ε·(1 + d|F_θ|/F)) = {worst_scaled:.2}"
        ),
    )
}

fn oracle(m: &Matrix2<f64>) -> Vector2<f64> {
    let eig = SymmetricEigen::new(m.transpose() * m);
    let i = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    eig.eigenvectors.column(i).into()
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let factors: Vec<Matrix2<f64>> =
            (0..rng.gen_range(1..=6)).map(|_| Matrix2::from_fn(|_, _| rng.gen_range(-1.0..1.0))).collect();
        let product = factors.iter().fold(Matrix2::identity(), |acc, m| m * acc);
        let e = most_contracted_direction(&factors).map_err(fail("direction"))?.direction;
        let v = oracle(&product);
        // eigenvectors are defined up to sign
        worst = worst.max((e - v).norm().min((e + v).norm()));
    }
    let p = MapParams::reference(1.5);
    let sample = attractor_sample(&p, 200, 1, 400).map_err(fail("orbit seeds"))?;
    let field = DirectionField::exact_order(&p, 12);
    let mut ratios = Vec::new();
    for q in sample.points.iter().take(100) {
        let seq = field.sequence(*q).map_err(fail("field sequence"))?;
        let diffs: Vec<f64> = seq.windows(2).map(|w| (w[1] - w[0]).norm().min((w[1] + w[0]).norm())).collect();
        if let Some(r) = geometric_ratio(&diffs, 1e-15) {
            ratios.push(r);
        }
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    check(
        worst < 1e-10 && ratios.len() == 100 && max_ratio < 1.0,
        format!(
            "oracle worst {worst:.2e} on 1000 products; decay ratio max {max_ratio:.3e} (= {:.3}·b) on {} orbits",
            max_ratio / p.b,
            ratios.len()
        ),
    )
}

fn criterion_7() -> Verdict {
    let p = MapParams::reference(2.0);
    let s = saddle_for(&p, 0).map_err(fail("saddle"))?;
    let curves = (1..=7)
        .map(|n| stable_curve_with(&DirectionField::exact_order(&p, n), &s, 0.5, 0.01))
        .collect::<Result<Vec<_>, _>>()
        .map_err(fail("stable curve"))?;
    let sups: Vec<f64> = curves
        .windows(2)
        .map(|w| {
            let m = w[0].points.len().min(w[1].points.len());
            (0..m).map(|i| w[0].points[i].distance(&w[1].points[i])).fold(0.0, f64::max)
        })
        .collect();
    let ratio = geometric_ratio(&sups, 1e-15).ok_or("too few resolved differences")?;
    // iterates of the far points approach the saddle
    let last = curves.last().unwrap();
    let mut contracting = true;
    let mut worst = 0.0f64;
    for q in [last.points[0], *last.points.last().unwrap()] {
        let (mut t, mut z) = (q.theta, q.z);
        let mut d = q.distance(&s.point);
        for _ in 0..5 {
            let (t1, z1) = apply_unwrapped(&p, t, z).ok_or("curve point escaped")?;
            (t, z) = (t1, z1);
            let d1 = PhasePoint::new(t, z).distance(&s.point);
            worst = worst.max(d1 / d);
            contracting &= d1 < d;
            d = d1;
        }
    }
    check(
        ratio < 0.5 && contracting,
        format!("sup-norm ratio {ratio:.3e}; worst per-step contraction {worst:.3e}"),
    )
}

fn criterion_8() -> Verdict {
    let base = MapParams::new(4.0, 0.005, 3.0, 20.0, SQRT_2).and_then(|p| p.with_k(1.0)).map_err(fail("params"))?;
    let m = 15;
    let grid: Vec<(f64, f64)> =
        (0..=20).filter_map(|i| { let a = 4.0 + 0.05 * i as f64; gap_at(&base, m, a).ok().map(|g| (a, g)) }).collect();
    let bracket = grid
        .windows(2)
        .find(|w| w[0].1.signum() != w[1].1.signum() && w[0].1.abs() + w[1].1.abs() < 1.0)
        .map(|w| (w[0].0, w[1].0))
        .ok_or("no bracketing sign change of the gap on [4, 5]")?;
    let rep = find_tangency(&base, m, bracket).map_err(fail("tangency"))?;
    let count = |a: f64| -> Result<usize, String> {
        let p = base.with_a(a);
        local_intersections(&p, &saddle_for(&p, m).map_err(fail("saddle"))?, 2000).map_err(fail("intersections"))
    };
    let (below, above) = (count(rep.a_star - 1e-3)?, count(rep.a_star + 1e-3)?);
    let flips = (below == 0 && above == 2) || (below == 2 && above == 0);
    check(
        rep.gap.abs() < 1e-10 && rep.quadratic_coeff > 1e2 && rep.crossing_speed != 0.0 && flips,
        format!(
            "a* = {:.10}, gap {:.1e}, quadratic {:.3e}, speed {:.4} (asymptotic reference {:.4}), counts {below}/{above}",
            rep.a_star, rep.gap, rep.quadratic_coeff, rep.crossing_speed, rep.asymptotic_speed_reference
        ),
    )
}

fn criterion_9() -> Verdict {
    let p = MapParams::new(0.0, 1e-4, 3.0, 200.0, SQRT_2).and_then(|p| p.with_k(1e-6)).map_err(fail("params"))?;
    let n = 100;
    let r = scan_parameter(&p, (0.0, 2.0 * TAU), 2 * n + 1, ConeSpec::default(), Sampling::default())
        .map_err(fail("scan"))?;
    let first = &r.points[..=n];
    let certified = first.iter().filter(|s| s.certified).count();
    let mismatches = r.mismatches_under_shift(n);
    check(
        certified > 0 && certified < first.len() && mismatches == 0,
        format!(
            "{certified} of {} steps certified in one period, {} intervals, {mismatches} mismatches over the second period",
            first.len(),
            r.intervals.len()
        ),
    )
}

/// Odd E and even H on a symmetric grid: the sine integral vanishes.
fn symmetric_profile() -> HomoclinicOrbitData {
    let h = 1e-3;
    let s: Vec<f64> = (-40_000..=40_000).map(|i| i as f64 * h).collect();
    let sec = |s| SectionGeometry { s, point: [0.0; 2], tangent: [1.0, 0.0], normal: [0.0, -1.0] };
    HomoclinicOrbitData {
        step: h,
        x: vec![0.0; s.len()],
        y: vec![0.0; s.len()],
        u: vec![0.0; s.len()],
        v: vec![0.0; s.len()],
        e: s.iter().map(|t| -1.2 * t.tanh()).collect(),
        h: s.iter().map(|t| 1.0 / t.cosh().powi(2)).collect(),
        s,
        l_plus: 3.0,
        l_minus: 3.0,
        epsilon: 0.05,
        alpha: SQRT_2,
        beta: 1.0,
        residual: 0.0,
        family_parameter: None,
        sigma_minus: sec(-3.0),
        sigma_plus: sec(3.0),
    }
}

fn criterion_10() -> Verdict {
    let sys = OdeSystem::folium(SQRT_2, 1.0);
    let mut notes = Vec::new();
    let mut ok = true;
    // (i)
    let k = melnikov_integrals(&symmetric_profile(), &sys).map_err(fail("synthetic integrals"))?;
    ok &= k.s_val.abs() < 1e-9;
    notes.push(format!("(i) S = {:.1e}", k.s_val));
    // (ii)
    let orbit = compute_homoclinic_orbit(&sys, 1e-9).map_err(fail("homoclinic orbit"))?;
    let conv = e_integral_convergence(&orbit, 1e-6).map_err(fail("E-integral"))?;
    ok &= conv.spread_beyond_knee < 1e-6;
    notes.push(format!("(ii) knee {:.2}, spread {:.1e}", conv.knee, conv.spread_beyond_knee));
    // (iii)
    let target = sys.alpha / sys.beta - sys.beta / sys.alpha;
    let (mut le, mut lp) = (Vec::new(), Vec::new());
    for eps in [0.01, 0.02, 0.05, 0.1] {
        let mut o = orbit.clone();
        o.set_epsilon(&sys, eps).map_err(fail("ε"))?;
        let k = melnikov_integrals(&o, &sys).map_err(fail("integrals"))?;
        le.push(f64::ln(eps));
        lp.push(k.p_l.ln());
    }
    let slope = tangle::numeric::linear_fit(&le, &lp).0;
    ok &= ((slope - target) / target).abs() < 0.1;
    notes.push(format!("(iii) slope {slope:.5} vs {target:.5}"));
    // (iv)
    let k = melnikov_integrals(&orbit, &sys).map_err(fail("integrals"))?;
    let (params, _) = derive_map_params(&sys, &k).map_err(fail("map parameters"))?;
    ok &= 2.0 < params.c && params.c < 10.0;
    notes.push(format!("(iv) c = {:.3}", params.c));
    // (v)
    let mut agreement = Vec::new();
    for mu in [1e-4, 1e-5, 1e-6] {
        let s = OdeSystem { mu, ..sys.clone() };
        let rep = validate_return_map(&s, &orbit, &k, 200, 10).map_err(fail("validation"))?;
        agreement.push(rep.agreement);
    }
    ok &= agreement[2] >= 0.9 && agreement.windows(2).all(|w| w[1] >= w[0]);
    notes.push(format!("(v) agreement at μ = 1e-4, 1e-5, 1e-6: {agreement:?}"));
    check(ok, notes.join("; "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("full escape and banded survivors", criterion_1),
        ("single sink and its basin", criterion_2),
        ("chaotic attractor", criterion_3),
        ("two-harmonic forcing regimes", criterion_4),
        ("determinant identity", criterion_5),
        ("most-contracted direction", criterion_6),
        ("stable-curve convergence", criterion_7),
        ("tangency pipeline", criterion_8),
        ("horseshoe certification scan", criterion_9),
        ("melnikov properties", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = f();
        let (tag, detail) = match &v {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += v.is_err() as usize;
        println!("{tag} criterion {:>2} {name}: {detail} [{:.1}s]", i + 1, secs(t.elapsed()));
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    // failures are reported above; set TANGLE_ACCEPTANCE_STRICT to turn them
    // into a failing exit status
    if failed > 0 && std::env::var_os("TANGLE_ACCEPTANCE_STRICT").is_some() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
