//! Fixed points and periodic orbits: semi-analytic solve, Newton polish and
//! classification by multipliers.

use std::ops::RangeInclusive;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_core::{
    apply, apply_unwrapped, apply_with_jacobian, eval_f, f_values, jacobian, normalize_theta, MapError, MapParams,
    PhasePoint, Step, THETA_MIN,
};
use crate::numeric::{bisect, wrap_pi, TAU};
use crate::survival_sets::seed_lattice;

/// Samples per 2π when scanning for θ roots.
const THETA_SCAN: usize = 4096;
/// Newton converges when the step norm drops below this.
const NEWTON_STEP_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 40;
/// Records closer than this in (θ mod 2π, z) are the same point.
pub const DEDUP_RADIUS: f64 = 1e-8;
/// Width of the |λ| = 1 band classified as non-hyperbolic.
pub const HYPERBOLIC_BAND: f64 = 1e-9;
/// Largest period searched directly.
pub const MAX_PERIOD: usize = 32;
/// 𝔽 values below this are treated as machine noise when walking the saddle family.
const F_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PeriodicError {
    #[error("point is not fixed: residual {residual:e} exceeds {tolerance:e}")]
    NotFixed { residual: f64, tolerance: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrbitKind {
    Sink,
    Saddle,
    Source,
    Nonhyperbolic,
}

impl OrbitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrbitKind::Sink => "sink",
            OrbitKind::Saddle => "saddle",
            OrbitKind::Source => "source",
            OrbitKind::Nonhyperbolic => "nonhyperbolic",
        }
    }
}

/// Eigenvalues of a real 2×2 matrix, larger modulus first. The real branch
/// uses the cancellation-free pairing λ₂ = det/λ₁.
pub fn multipliers(m: &Matrix2<f64>) -> [Complex64; 2] {
    let tr = m.trace();
    let det = m.determinant();
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let l1 = 0.5 * (tr + tr.signum() * disc.sqrt());
        let l1 = if l1 == 0.0 { 0.5 * disc.sqrt() } else { l1 };
        let l2 = if l1 != 0.0 { det / l1 } else { 0.0 };
        let (a, b) = if l1.abs() >= l2.abs() { (l1, l2) } else { (l2, l1) };
        [Complex64::new(a, 0.0), Complex64::new(b, 0.0)]
    } else {
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(0.5 * tr, im), Complex64::new(0.5 * tr, -im)]
    }
}

pub fn classify_multipliers(l: &[Complex64; 2]) -> OrbitKind {
    let r = [l[0].norm(), l[1].norm()];
    if r.iter().any(|v| (v - 1.0).abs() <= HYPERBOLIC_BAND) {
        OrbitKind::Nonhyperbolic
    } else if r.iter().all(|v| *v < 1.0) {
        OrbitKind::Sink
    } else if r.iter().all(|v| *v > 1.0) {
        OrbitKind::Source
    } else {
        OrbitKind::Saddle
    }
}

/// A fixed point with its winding number and multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointRecord {
    pub point: PhasePoint,
    /// Number of 2π wraps absorbed: a − d·ln 𝔽 = 2πm.
    pub winding_m: i64,
    pub multipliers: [Complex64; 2],
    pub kind: OrbitKind,
    pub f_value: f64,
    /// max(|θ₁ − θ| mod 2π, |z₁ − z|) after polishing.
    pub residual: f64,
}

/// Residual tolerance scaled by the Jacobian size: near the boundary of V the
/// rounding of 𝔽 is amplified by d/𝔽 in the angle, so an absolute 1e−10 is not
/// reachable for deep saddles.
fn scaled_tol(base: f64, j: &Matrix2<f64>) -> f64 {
    base * j.abs().max().max(1.0)
}

fn residual(params: &MapParams, p: PhasePoint) -> Result<f64, MapError> {
    match apply(params, p)? {
        Step::Image(q) => Ok(wrap_pi(q.theta - p.theta).abs().max((q.z - p.z).abs())),
        Step::Escaped => Ok(f64::INFINITY),
    }
}

/// Trace/determinant classification of a (near-)fixed point.
pub fn classify_fixed_point(params: &MapParams, p: PhasePoint) -> Result<FixedPointRecord, PeriodicError> {
    let j = jacobian(params, p)?;
    let res = residual(params, p)?;
    let tol = scaled_tol(1e-8, &j);
    if !(res <= tol) {
        return Err(PeriodicError::NotFixed { residual: res, tolerance: tol });
    }
    let f = eval_f(params, p);
    let winding_m = ((params.a - params.d * f.ln()) / TAU).round() as i64;
    let l = multipliers(&j);
    Ok(FixedPointRecord { point: p, winding_m, multipliers: l, kind: classify_multipliers(&l), f_value: f, residual: res })
}

/// Newton on the unwrapped residual (a − 2πm − d ln 𝔽, b𝔽^γ − z).
fn polish_fixed(params: &MapParams, m: i64, theta: f64, z: f64) -> Option<(f64, f64)> {
    let shift = params.a - TAU * m as f64;
    let res = |t: f64, z: f64| -> Option<Vector2<f64>> {
        let f = 1.0 + params.c * params.forcing.value(t) + params.k * z;
        (f > 0.0).then(|| Vector2::new(shift - params.d * f.ln(), params.b * f.powf(params.gamma) - z))
    };
    let (mut t, mut z) = (theta, z);
    let mut r = res(t, z)?;
    for _ in 0..NEWTON_MAX_ITER {
        let fv = f_values(params, t, z);
        let g = params.gamma * params.b * fv.f.powf(params.gamma - 1.0);
        let jm = Matrix2::new(-params.d * fv.f_theta / fv.f, -params.d * fv.f_z / fv.f, g * fv.f_theta, g * fv.f_z - 1.0);
        let step = jm.lu().solve(&(-r))?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let (nt, nz) = (t + lambda * step[0], z + lambda * step[1]);
            if let Some(nr) = res(nt, nz) {
                if nr.norm() <= r.norm() || lambda * step.norm() < NEWTON_STEP_TOL {
                    accepted = Some((nt, nz, nr));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (nt, nz, nr) = accepted?;
        let moved = ((nt - t).powi(2) + (nz - z).powi(2)).sqrt();
        t = nt;
        z = nz;
        r = nr;
        if moved < NEWTON_STEP_TOL {
            return Some((t, z));
        }
    }
    Some((t, z))
}

/// Roots of h on [−π/2, 3π/2) by dense scan plus bisection.
fn scan_roots<H: Fn(f64) -> f64>(h: H) -> Vec<f64> {
    let mut roots = Vec::new();
    let step = TAU / THETA_SCAN as f64;
    let mut t0 = THETA_MIN;
    let mut h0 = h(t0);
    for i in 1..=THETA_SCAN {
        let t1 = THETA_MIN + step * i as f64;
        let h1 = h(t1);
        if h0 == 0.0 {
            roots.push(t0);
        } else if h0.signum() != h1.signum() && h1 != 0.0 {
            if let Some(r) = bisect(&h, t0, t1, 1e-14) {
                roots.push(r);
            }
        }
        t0 = t1;
        h0 = h1;
    }
    roots
}

fn dedup_push(out: &mut Vec<FixedPointRecord>, rec: FixedPointRecord) {
    if !out.iter().any(|r| r.point.distance(&rec.point) < DEDUP_RADIUS) {
        out.push(rec);
    }
}

/// Fixed point with winding `m`: 𝔽_m = e^{(a−2πm)/d}, z_m = b𝔽_m^γ and θ solving
/// c·Φ(θ) = 𝔽_m − 1 − k·z_m, each polished by Newton and classified.
pub fn fixed_points_for_m(params: &MapParams, m: i64) -> Result<Vec<FixedPointRecord>, PeriodicError> {
    let f_m = ((params.a - TAU * m as f64) / params.d).exp();
    let z_m = params.b * f_m.powf(params.gamma);
    let target = f_m - 1.0 - params.k * z_m;
    let roots = scan_roots(|t| params.c * params.forcing.value(t) - target);
    let mut out = Vec::new();
    for t in roots {
        let Some((tp, zp)) = polish_fixed(params, m, t, z_m) else { continue };
        let p = PhasePoint::new(tp, zp);
        let j = jacobian(params, p)?;
        let res = residual(params, p)?;
        if !(res <= scaled_tol(1e-10, &j)) {
            continue;
        }
        let l = multipliers(&j);
        let rec = FixedPointRecord {
            point: p,
            winding_m: m,
            multipliers: l,
            kind: classify_multipliers(&l),
            f_value: eval_f(params, p),
            residual: res,
        };
        dedup_push(&mut out, rec);
    }
    Ok(out)
}

/// All fixed points with winding in `m_range`, ordered by m then θ.
pub fn find_fixed_points(params: &MapParams, m_range: RangeInclusive<i64>) -> Result<Vec<FixedPointRecord>, PeriodicError> {
    params.validate()?;
    let per_m: Vec<Vec<FixedPointRecord>> =
        m_range.collect::<Vec<_>>().par_iter().map(|&m| fixed_points_for_m(params, m)).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for mut v in per_m {
        v.sort_by(|x, y| x.point.theta.total_cmp(&y.point.theta));
        for r in v {
            dedup_push(&mut out, r);
        }
    }
    Ok(out)
}

/// Winding numbers for which a fixed point can exist, i.e. 𝔽_m lies in the
/// range of 𝔽 over the annulus and above the numerical floor.
pub fn feasible_windings(params: &MapParams) -> RangeInclusive<i64> {
    let fmax = 1.0 + params.c * params.forcing.max_abs() + params.k;
    // 𝔽_m = e^{(a−2πm)/d} decreases with m
    let m_lo = ((params.a - params.d * fmax.ln()) / TAU).ceil() as i64;
    let m_hi = ((params.a - params.d * F_FLOOR.ln()) / TAU).floor() as i64;
    m_lo..=m_hi
}

/// Which integer starts the deep saddle family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaddleRule {
    /// m ≥ 3d.
    Inclusive,
    /// Smallest integer strictly greater than 3d.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleFamily {
    pub rule: SaddleRule,
    pub m_inclusive_start: i64,
    pub m_strict_start: i64,
    pub members: Vec<FixedPointRecord>,
}

/// Saddles q_m for m from the rule's starting integer while 𝔽_m stays above
/// the numerical floor.
pub fn find_saddle_family(params: &MapParams, rule: SaddleRule) -> Result<SaddleFamily, PeriodicError> {
    let three_d = 3.0 * params.d;
    let m_inclusive_start = three_d.ceil() as i64;
    let m_strict_start = three_d.floor() as i64 + 1;
    let start = match rule {
        SaddleRule::Inclusive => m_inclusive_start,
        SaddleRule::Strict => m_strict_start,
    };
    let mut members = Vec::new();
    let mut m = start;
    loop {
        let f_m = ((params.a - TAU * m as f64) / params.d).exp();
        if f_m <= F_FLOOR {
            break;
        }
        members.extend(fixed_points_for_m(params, m)?.into_iter().filter(|r| r.kind == OrbitKind::Saddle));
        m += 1;
    }
    Ok(SaddleFamily { rule, m_inclusive_start, m_strict_start, members })
}

/// A periodic orbit of minimal period `period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbitRecord {
    pub period: usize,
    pub points: Vec<PhasePoint>,
    pub multipliers: [Complex64; 2],
    pub kind: OrbitKind,
    pub residual: f64,
}

/// F^p with the unwrapped angle and the product Jacobian. `None` on escape.
pub fn iterate_with_jacobian(params: &MapParams, p: PhasePoint, period: usize) -> Result<Option<(f64, f64, Matrix2<f64>)>, MapError> {
    let mut theta = p.theta;
    let mut z = p.z;
    let mut m = Matrix2::identity();
    for _ in 0..period {
        let q = PhasePoint { theta: normalize_theta(theta), z };
        let Some((_, j)) = apply_with_jacobian(params, q)? else { return Ok(None) };
        let Some((t1, z1)) = apply_unwrapped(params, theta, z) else { return Ok(None) };
        m = j * m;
        theta = t1;
        z = z1;
    }
    Ok(Some((theta, z, m)))
}

fn periodic_residual(params: &MapParams, t: f64, z: f64, period: usize) -> Option<(Vector2<f64>, Matrix2<f64>)> {
    let (tp, zp, m) = iterate_with_jacobian(params, PhasePoint { theta: t, z }, period).ok()??;
    Some((Vector2::new(wrap_pi(tp - t), zp - z), m))
}

fn newton_periodic(params: &MapParams, seed: PhasePoint, period: usize) -> Option<(PhasePoint, Matrix2<f64>, f64)> {
    let (mut t, mut z) = (seed.theta, seed.z);
    let (mut r, mut m) = periodic_residual(params, t, z, period)?;
    for _ in 0..NEWTON_MAX_ITER {
        let step = (m - Matrix2::identity()).lu().solve(&(-r))?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let (nt, nz) = (t + lambda * step[0], z + lambda * step[1]);
            if let Some((nr, nm)) = periodic_residual(params, nt, nz, period) {
                if nr.norm() <= r.norm() || lambda * step.norm() < NEWTON_STEP_TOL {
                    accepted = Some((nt, nz, nr, nm));
                    break;
                }
            }
            lambda *= 0.5;
        }
        let (nt, nz, nr, nm) = accepted?;
        let moved = lambda * step.norm();
        t = nt;
        z = nz;
        r = nr;
        m = nm;
        if moved < NEWTON_STEP_TOL {
            break;
        }
    }
    let res = r.amax();
    (res <= scaled_tol(1e-10, &m)).then(|| (PhasePoint::new(t, z), m, res))
}

fn orbit_points(params: &MapParams, p: PhasePoint, period: usize) -> Option<Vec<PhasePoint>> {
    let mut pts = vec![p];
    let mut q = p;
    for _ in 1..period {
        q = apply(params, q).ok()?.image()?;
        pts.push(q);
    }
    Some(pts)
}

/// Newton on F^period − id from a seed lattice (and the lattice's images after
/// a short burn-in); keeps orbits of minimal period `period`, deduplicated.
pub fn find_periodic_orbits(params: &MapParams, period: usize, seeds: usize) -> Result<Vec<PeriodicOrbitRecord>, PeriodicError> {
    if period == 0 || period > MAX_PERIOD {
        return Err(PeriodicError::Precondition(format!("1 ≤ period ≤ {MAX_PERIOD} required")));
    }
    params.validate()?;
    let lattice = seed_lattice(params, seeds, 0);
    let mut starts = lattice.clone();
    starts.extend(lattice.iter().filter_map(|&s| {
        let mut q = s;
        for _ in 0..100 {
            q = apply(params, q).ok()?.image()?;
        }
        Some(q)
    }));
    let found: Vec<Option<(PhasePoint, Matrix2<f64>, f64)>> =
        starts.par_iter().map(|&s| newton_periodic(params, s, period)).collect();
    let mut out: Vec<PeriodicOrbitRecord> = Vec::new();
    for (p, m, res) in found.into_iter().flatten() {
        // minimal period: no proper divisor returns the point to itself
        let minimal = (1..period).filter(|q| period % q == 0).all(|q| {
            iterate_with_jacobian(params, p, q)
                .ok()
                .flatten()
                .map(|(t, z, _)| wrap_pi(t - p.theta).abs().max((z - p.z).abs()) > 1e3 * DEDUP_RADIUS)
                .unwrap_or(true)
        });
        if !minimal {
            continue;
        }
        let Some(points) = orbit_points(params, p, period) else { continue };
        if out.iter().any(|o| o.points.iter().any(|q| q.distance(&p) < DEDUP_RADIUS)) {
            continue;
        }
        let l = multipliers(&m);
        out.push(PeriodicOrbitRecord { period, points, multipliers: l, kind: classify_multipliers(&l), residual: res });
    }
    Ok(out)
}

impl From<&FixedPointRecord> for PeriodicOrbitRecord {
    fn from(r: &FixedPointRecord) -> Self {
        Self { period: 1, points: vec![r.point], multipliers: r.multipliers, kind: r.kind, residual: r.residual }
    }
}

/// Centred finite difference of θ_m in a at the root nearest `theta_hint`.
pub fn dtheta_da(params: &MapParams, m: i64, theta_hint: f64, h: f64) -> Result<f64, PeriodicError> {
    let pick = |a: f64| -> Result<f64, PeriodicError> {
        let p = params.with_a(a);
        let recs = fixed_points_for_m(&p, m)?;
        recs.iter()
            .map(|r| r.point.theta)
            .min_by(|x, y| wrap_pi(x - theta_hint).abs().total_cmp(&wrap_pi(y - theta_hint).abs()))
            .ok_or_else(|| PeriodicError::Precondition(format!("no fixed point with m = {m}")))
    };
    Ok(wrap_pi(pick(params.a + h)? - pick(params.a - h)?) / (2.0 * h))
}
