//! Most-contracted directions, stable and unstable curves of saddles, and the
//! search for a homoclinic tangency between them.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_core::{apply_unwrapped, eval_f, f_values, fold_strip, hessian, jacobian, MapError, MapParams, PhasePoint};
use crate::numeric::{bisect, golden_min, wrap_pi, TAU};
use crate::periodic_orbits::{fixed_points_for_m, FixedPointRecord, OrbitKind, PeriodicError};

/// B² − 4C below this (with columns scaled to unit max) means the product is
/// conformal and no direction is preferred.
pub const DEGENERACY_FLOOR: f64 = 1e-28;
pub const DEFAULT_ORDER: usize = 20;
/// Early stop for the direction field once successive orders agree.
pub const FIELD_CONVERGENCE: f64 = 1e-13;
pub const MAX_STEP: f64 = 1e-3;
pub const STEP_TOL: f64 = 1e-10;
/// Claim A.6 reference for the relative crossing speed, 2/3 − 1/25.
pub const ASYMPTOTIC_SPEED: f64 = 2.0 / 3.0 - 1.0 / 25.0;
const UNSTABLE_MAX_POINTS: usize = 2_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ManifoldError {
    #[error("matrix product is conformal (B² − 4C = {discriminant:e})")]
    DegenerateConformal { discriminant: f64 },
    #[error("orbit left V before the first factor")]
    Escaped,
    #[error("direction field failed at arclength {arclength}: {reason}")]
    Field { arclength: f64, reason: String },
    #[error("fixed point is not a hyperbolic saddle")]
    NotHyperbolic,
    #[error("no saddle with winding {0}")]
    NoSaddle(i64),
    #[error("fold not found: {0}")]
    FoldNotFound(String),
    #[error("gap does not change sign on [{a_lo}, {a_hi}] (gaps {gap_lo}, {gap_hi})")]
    NoBracket { a_lo: f64, a_hi: f64, gap_lo: f64, gap_hi: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Periodic(#[from] PeriodicError),
}

/// Unit most-contracted direction and the singular values of the product
/// (smaller first). Singular values may under/overflow; the logs do not.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractedDirection {
    pub direction: Vector2<f64>,
    pub singular_values: (f64, f64),
    pub log_singular_values: (f64, f64),
}

/// Running product M⁽ⁿ⁾ = Mₙ⋯M₁ held as its images of the unit vectors with
/// a common scale factor removed after every factor. The wedge Mu ∧ Mv is
/// tracked multiplicatively from the determinants, so C keeps full relative
/// precision even when Mu and Mv are nearly parallel.
#[derive(Debug, Clone, Copy)]
pub struct ProductAccumulator {
    mu: Vector2<f64>,
    mv: Vector2<f64>,
    wedge: f64,
    log_scale: f64,
    factors: usize,
}

impl Default for ProductAccumulator {
    fn default() -> Self {
        Self { mu: Vector2::new(1.0, 0.0), mv: Vector2::new(0.0, 1.0), wedge: 1.0, log_scale: 0.0, factors: 0 }
    }
}

impl ProductAccumulator {
    pub fn push(&mut self, m: &Matrix2<f64>) {
        self.mu = m * self.mu;
        self.mv = m * self.mv;
        let s = self.mu.norm().max(self.mv.norm());
        if s > 0.0 && s.is_finite() {
            self.mu /= s;
            self.mv /= s;
            self.wedge *= m.determinant() / (s * s);
            self.log_scale += s.ln();
        } else {
            self.wedge *= m.determinant();
        }
        self.factors += 1;
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn direction(&self) -> Result<ContractedDirection, ManifoldError> {
        let (mu, mv) = (self.mu, self.mv);
        let nu = mu.norm_squared();
        let nv = mv.norm_squared();
        let dot = mu.dot(&mv);
        let b = nu + nv;
        let c = self.wedge * self.wedge;
        // B² − 4C written without cancellation: (|Mu|² − |Mv|²)² + 4⟨Mu, Mv⟩²
        let disc = (nu - nv) * (nu - nv) + 4.0 * dot * dot;
        if !(disc > DEGENERACY_FLOOR) {
            return Err(ManifoldError::DegenerateConformal { discriminant: disc });
        }
        let sq = disc.sqrt();
        let big = 0.5 * (b + sq);
        let small = c / big;
        // (MᵀM − λ)e = 0 from either row; take the better conditioned one
        let from_v = Vector2::new(nv - small, -dot);
        let from_u = Vector2::new(-dot, nu - small);
        let cand = if from_v.norm_squared() >= from_u.norm_squared() { from_v } else { from_u };
        let z = cand.norm();
        let mut e = if z > 1e-300 { cand / z } else { Vector2::new(0.0, 1.0) };
        if e[0] < 0.0 || (e[0] == 0.0 && e[1] < 0.0) {
            e = -e;
        }
        let ls = (0.5 * small.ln() + self.log_scale, 0.5 * big.ln() + self.log_scale);
        Ok(ContractedDirection { direction: e, singular_values: (ls.0.exp(), ls.1.exp()), log_singular_values: ls })
    }
}

/// Most contracted unit direction of the product of `matrices`, applied in
/// order (first element acts first).
pub fn most_contracted_direction(matrices: &[Matrix2<f64>]) -> Result<ContractedDirection, ManifoldError> {
    let mut acc = ProductAccumulator::default();
    for m in matrices {
        acc.push(m);
    }
    acc.direction()
}

/// One evaluation of the field: the direction and how many Jacobian factors
/// were used (fewer than the order after early convergence or escape).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub direction: Vector2<f64>,
    pub singular_values: (f64, f64),
    pub order_used: usize,
}

/// e_n: the most contracted direction of D𝓕ⁿ along the forward orbit.
#[derive(Debug, Clone)]
pub struct DirectionField<'a> {
    pub params: &'a MapParams,
    pub order_n: usize,
    /// Stop once |e_{i+1} − e_i| falls below this; 0 disables early stopping.
    pub convergence: f64,
}

impl<'a> DirectionField<'a> {
    pub fn new(params: &'a MapParams, order_n: usize) -> Self {
        Self { params, order_n, convergence: FIELD_CONVERGENCE }
    }

    pub fn exact_order(params: &'a MapParams, order_n: usize) -> Self {
        Self { params, order_n, convergence: 0.0 }
    }

    pub fn eval(&self, p: PhasePoint) -> Result<FieldSample, ManifoldError> {
        let mut acc = ProductAccumulator::default();
        let (mut t, mut z) = (p.theta, p.z);
        let mut last: Option<ContractedDirection> = None;
        for _ in 0..self.order_n {
            let q = PhasePoint { theta: t, z };
            if !(eval_f(self.params, q) > self.params.escape_floor) {
                break;
            }
            acc.push(&jacobian(self.params, q)?);
            match acc.direction() {
                Ok(cur) => {
                    let done = last.is_some_and(|l| (l.direction - cur.direction).norm() < self.convergence);
                    last = Some(cur);
                    if done {
                        break;
                    }
                }
                Err(e) if acc.factors() == self.order_n => return Err(e),
                // a conformal partial product can still become non-conformal
                Err(_) => last = None,
            }
            match apply_unwrapped(self.params, t, z) {
                Some((t1, z1)) => (t, z) = (t1, z1),
                None => break,
            }
        }
        let d = last.ok_or(ManifoldError::Escaped)?;
        Ok(FieldSample { direction: d.direction, singular_values: d.singular_values, order_used: acc.factors() })
    }

    /// e_1, …, e_n without early stopping; stops short if the orbit escapes.
    pub fn sequence(&self, p: PhasePoint) -> Result<Vec<Vector2<f64>>, ManifoldError> {
        let mut acc = ProductAccumulator::default();
        let (mut t, mut z) = (p.theta, p.z);
        let mut out = Vec::with_capacity(self.order_n);
        for _ in 0..self.order_n {
            let q = PhasePoint { theta: t, z };
            if !(eval_f(self.params, q) > self.params.escape_floor) {
                break;
            }
            acc.push(&jacobian(self.params, q)?);
            out.push(acc.direction()?.direction);
            match apply_unwrapped(self.params, t, z) {
                Some((t1, z1)) => (t, z) = (t1, z1),
                None => break,
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Stable,
    Unstable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub points: Vec<PhasePoint>,
    pub arclength: Vec<f64>,
    pub kind: CurveKind,
    /// Set when a branch stopped before its requested length.
    pub truncated: bool,
}

impl CurveSample {
    /// max |dθ/dz| between consecutive points (stable curves are near vertical).
    pub fn max_dtheta_dz(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (wrap_pi(w[1].theta - w[0].theta) / (w[1].z - w[0].z)).abs())
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    }

    /// max |dz/dθ| between consecutive points.
    pub fn max_dz_dtheta(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| ((w[1].z - w[0].z) / wrap_pi(w[1].theta - w[0].theta)).abs())
            .filter(|x| x.is_finite())
            .fold(0.0, f64::max)
    }
}

fn in_v(params: &MapParams, y: Vector2<f64>) -> bool {
    y[1].abs() <= 1.0 && eval_f(params, PhasePoint { theta: y[0], z: y[1] }) > params.escape_floor
}

/// Classical RK4 step for an autonomous field that may fail.
fn rk4<F>(f: &F, y: Vector2<f64>, h: f64) -> Result<Vector2<f64>, ManifoldError>
where
    F: Fn(Vector2<f64>) -> Result<Vector2<f64>, ManifoldError>,
{
    let k1 = f(y)?;
    let k2 = f(y + 0.5 * h * k1)?;
    let k3 = f(y + 0.5 * h * k2)?;
    let k4 = f(y + h * k3)?;
    Ok(y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Saddle test: two real multipliers, one inside and one outside the unit disk.
fn require_saddle(saddle: &FixedPointRecord) -> Result<(), ManifoldError> {
    if saddle.kind == OrbitKind::Saddle {
        Ok(())
    } else {
        Err(ManifoldError::NotHyperbolic)
    }
}

/// Integral curve γ_n of e_n through the saddle, sampled every `step` of
/// arclength in both directions.
pub fn stable_curve(
    params: &MapParams,
    saddle: &FixedPointRecord,
    order_n: usize,
    half_length: f64,
    step: f64,
) -> Result<CurveSample, ManifoldError> {
    stable_curve_with(&DirectionField::new(params, order_n), saddle, half_length, step)
}

/// As [`stable_curve`] with an explicit field (e.g. exact order, no early stop).
pub fn stable_curve_with(
    field: &DirectionField,
    saddle: &FixedPointRecord,
    half_length: f64,
    step: f64,
) -> Result<CurveSample, ManifoldError> {
    require_saddle(saddle)?;
    if !(step > 0.0 && half_length > 0.0 && field.order_n >= 1) {
        return Err(ManifoldError::Precondition("step, half_length and order_n must be positive".into()));
    }
    let params = field.params;
    let q = Vector2::new(saddle.point.theta, saddle.point.z);
    let e0 = field.eval(saddle.point).map_err(|e| ManifoldError::Field { arclength: 0.0, reason: e.to_string() })?;
    let (fwd, fwd_trunc) = integrate_branch(params, field, q, e0.direction, half_length, step)?;
    let (bwd, bwd_trunc) = integrate_branch(params, field, q, -e0.direction, half_length, step)?;
    let mut points = Vec::with_capacity(fwd.len() + bwd.len() + 1);
    let mut arclength = Vec::with_capacity(points.capacity());
    for (s, y) in bwd.iter().rev() {
        points.push(PhasePoint::new(y[0], y[1]));
        arclength.push(-s);
    }
    points.push(saddle.point);
    arclength.push(0.0);
    for (s, y) in &fwd {
        points.push(PhasePoint::new(y[0], y[1]));
        arclength.push(*s);
    }
    Ok(CurveSample { points, arclength, kind: CurveKind::Stable, truncated: fwd_trunc || bwd_trunc })
}

/// Adaptive RK4 (step doubling) on dq/ds = ±e_n(q), with the sign chosen to
/// follow the previous direction, landing exactly on multiples of `node`.
fn integrate_branch(
    params: &MapParams,
    field: &DirectionField,
    start: Vector2<f64>,
    initial: Vector2<f64>,
    half_length: f64,
    node: f64,
) -> Result<(Vec<(f64, Vector2<f64>)>, bool), ManifoldError> {
    let mut out = Vec::new();
    let mut y = start;
    let mut s = 0.0;
    let mut h = node.min(MAX_STEP);
    let orient = std::cell::Cell::new(initial);
    let f = |p: Vector2<f64>| -> Result<Vector2<f64>, ManifoldError> {
        if !in_v(params, p) {
            return Err(ManifoldError::Escaped);
        }
        let e = field.eval(PhasePoint { theta: p[0], z: p[1] })?.direction;
        Ok(if e.dot(&orient.get()) < 0.0 { -e } else { e })
    };
    let mut next_node = node;
    let mut k = 1usize;
    while s < half_length - 1e-15 {
        let target = next_node.min(half_length);
        let h_try = h.min(target - s).min(MAX_STEP);
        let attempt = (|| -> Result<(Vector2<f64>, f64), ManifoldError> {
            let full = rk4(&f, y, h_try)?;
            let half = rk4(&f, rk4(&f, y, 0.5 * h_try)?, 0.5 * h_try)?;
            Ok((half + (half - full) / 15.0, (half - full).norm()))
        })();
        let (y_new, err) = match attempt {
            Ok(v) => v,
            Err(ManifoldError::Escaped) | Err(ManifoldError::DegenerateConformal { .. }) => return Ok((out, true)),
            Err(e) => return Err(ManifoldError::Field { arclength: s, reason: e.to_string() }),
        };
        if err > STEP_TOL && h_try > 1e-12 {
            h = 0.5 * h_try;
            continue;
        }
        let dir = y_new - y;
        if dir.norm() > 0.0 {
            orient.set(dir.normalize());
        }
        y = y_new;
        s += h_try;
        if err < STEP_TOL / 32.0 {
            h = (2.0 * h_try).min(MAX_STEP);
        }
        if (s - target).abs() < 1e-15 {
            s = target;
            if !in_v(params, y) {
                return Ok((out, true));
            }
            out.push((s, y));
            k += 1;
            next_node = node * k as f64;
        }
    }
    Ok((out, false))
}

/// Unit eigenvector for the real multiplier of modulus > 1.
fn unstable_eigen(params: &MapParams, saddle: &FixedPointRecord) -> Result<(f64, Vector2<f64>), ManifoldError> {
    require_saddle(saddle)?;
    let j = jacobian(params, saddle.point)?;
    let lu = saddle
        .multipliers
        .iter()
        .map(|l| l.re)
        .find(|l| l.abs() > 1.0)
        .ok_or(ManifoldError::NotHyperbolic)?;
    let a = Vector2::new(j[(0, 1)], lu - j[(0, 0)]);
    let b = Vector2::new(lu - j[(1, 1)], j[(1, 0)]);
    let v = if a.norm() >= b.norm() { a } else { b };
    Ok((lu, v.normalize()))
}

/// Forward iterates of a seed segment along the unstable eigenvector,
/// refined so consecutive image points are at most `MAX_STEP` apart.
/// Escaped pieces are dropped; the arclength is measured along the unwrapped
/// curve.
pub fn unstable_curve(
    params: &MapParams,
    saddle: &FixedPointRecord,
    iterations: usize,
    seed_radius: f64,
) -> Result<CurveSample, ManifoldError> {
    let (_, v) = unstable_eigen(params, saddle)?;
    let q = Vector2::new(saddle.point.theta, saddle.point.z);
    let image = |t: f64| -> Option<Vector2<f64>> {
        let mut y = q + t * v;
        for _ in 0..iterations {
            let (a, b) = apply_unwrapped(params, y[0], y[1])?;
            y = Vector2::new(a, b);
        }
        Some(y)
    };
    let n0 = 64;
    let mut ts: Vec<f64> = (0..=n0).map(|i| -seed_radius + 2.0 * seed_radius * i as f64 / n0 as f64).collect();
    let mut ys: Vec<Option<Vector2<f64>>> = ts.iter().map(|&t| image(t)).collect();
    let mut truncated = false;
    let mut i = 0;
    while i + 1 < ts.len() {
        let far = match (ys[i], ys[i + 1]) {
            (Some(a), Some(b)) => (a - b).norm() > MAX_STEP,
            (None, None) => false,
            _ => true,
        };
        if far && ts[i + 1] - ts[i] > 1e-15 * seed_radius.max(1e-300) && ts.len() < UNSTABLE_MAX_POINTS {
            let tm = 0.5 * (ts[i] + ts[i + 1]);
            ts.insert(i + 1, tm);
            ys.insert(i + 1, image(tm));
        } else {
            if far && ys[i].is_some() && ys[i + 1].is_some() {
                truncated = true;
            }
            i += 1;
        }
    }
    let mut points = Vec::new();
    let mut arclength = Vec::new();
    let mut s = 0.0;
    let mut prev: Option<Vector2<f64>> = None;
    for y in ys.iter() {
        match y {
            Some(y) => {
                if let Some(p) = prev {
                    s += (y - p).norm();
                }
                prev = Some(*y);
                if y[1].abs() <= 1.0 {
                    points.push(PhasePoint::new(y[0], y[1]));
                    arclength.push(s);
                }
            }
            None => {
                truncated = true;
                prev = None;
            }
        }
    }
    Ok(CurveSample { points, arclength, kind: CurveKind::Unstable, truncated })
}

/// Value, first and second derivative of a curve in (θ unwrapped, z).
#[derive(Debug, Clone, Copy)]
struct Jet {
    x: Vector2<f64>,
    d1: Vector2<f64>,
    d2: Vector2<f64>,
}

fn push_jet(params: &MapParams, j: Jet) -> Option<Jet> {
    let p = PhasePoint { theta: j.x[0], z: j.x[1] };
    let (t1, z1) = apply_unwrapped(params, p.theta, p.z)?;
    let jac = jacobian(params, p).ok()?;
    let [ht, hz] = hessian(params, p).ok()?;
    let d1 = jac * j.d1;
    let d2 = jac * j.d2 + Vector2::new(j.d1.dot(&(ht * j.d1)), j.d1.dot(&(hz * j.d1)));
    Some(Jet { x: Vector2::new(t1, z1), d1, d2 })
}

/// Local parameterisation of W^u near a saddle and its first two images.
struct UnstableBranch<'a> {
    params: &'a MapParams,
    q: Vector2<f64>,
    v: Vector2<f64>,
    lambda: f64,
    /// multiple of 2π removed so that P(0) = Q(0) = q exactly in θ.
    wrap: f64,
}

impl<'a> UnstableBranch<'a> {
    fn new(params: &'a MapParams, saddle: &FixedPointRecord) -> Result<Self, ManifoldError> {
        let (lambda, mut v) = unstable_eigen(params, saddle)?;
        let fv = f_values(params, saddle.point.theta, saddle.point.z);
        // orient v towards increasing 𝔽, i.e. into V
        if fv.f_theta * v[0] + fv.f_z * v[1] < 0.0 {
            v = -v;
        }
        let q = Vector2::new(saddle.point.theta, saddle.point.z);
        let (t1, _) = apply_unwrapped(params, q[0], q[1]).ok_or(ManifoldError::NotHyperbolic)?;
        let wrap = TAU * ((t1 - q[0]) / TAU).round();
        Ok(Self { params, q, v, lambda, wrap })
    }

    /// P(t) = 𝓕(q + (t/λ)v) ≈ q + t v; Q = 𝓕(P); R = 𝓕(Q).
    fn jets(&self, t: f64) -> Option<[Jet; 3]> {
        let s = Jet { x: self.q + (t / self.lambda) * self.v, d1: self.v / self.lambda, d2: Vector2::zeros() };
        let mut p = push_jet(self.params, s)?;
        p.x[0] -= self.wrap;
        let mut q = push_jet(self.params, p)?;
        q.x[0] -= self.wrap;
        let r = push_jet(self.params, q)?;
        Some([p, q, r])
    }

    fn theta_q(&self, t: f64) -> f64 {
        let s = self.q + (t / self.lambda) * self.v;
        apply_unwrapped(self.params, s[0], s[1])
            .and_then(|(a, b)| apply_unwrapped(self.params, a - self.wrap, b))
            .map_or(f64::NEG_INFINITY, |(a, _)| a - self.wrap)
    }

    fn theta_r(&self, t: f64) -> f64 {
        self.jets(t).map_or(f64::INFINITY, |j| j[2].x[0])
    }
}

/// Fold tip of 𝓕(ℓᵘ ∩ V_f) and the stable curve at its height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldTip {
    /// Branch parameter of the tip.
    pub t: f64,
    /// Range of the branch parameter whose first image lies in V_f.
    pub t_range: (f64, f64),
    pub tip: PhasePoint,
    pub stable_theta: f64,
    pub gap: f64,
    pub quadratic_coeff: f64,
    pub unstable_slope_bound: f64,
    pub stable_slope_bound: f64,
}

/// θ of W^s at height `z_target`, integrating dθ/dz = e_θ/e_z from the saddle
/// with uniform RK4 steps of at most `MAX_STEP` in z. Also returns the largest
/// |dθ/dz| met.
pub fn stable_theta_at(
    params: &MapParams,
    saddle: &FixedPointRecord,
    order_n: usize,
    z_target: f64,
) -> Result<(f64, f64), ManifoldError> {
    let field = DirectionField::new(params, order_n);
    let slope_max = std::cell::Cell::new(0.0f64);
    let slope = |theta: f64, z: f64| -> Result<f64, ManifoldError> {
        let e = field.eval(PhasePoint { theta, z })?.direction;
        if e[1].abs() < 1e-12 {
            return Err(ManifoldError::Precondition("stable curve is horizontal".into()));
        }
        let s = e[0] / e[1];
        slope_max.set(slope_max.get().max(s.abs()));
        Ok(s)
    };
    let z0 = saddle.point.z;
    let n = ((z_target - z0).abs() / MAX_STEP).ceil().max(1.0) as usize;
    let h = (z_target - z0) / n as f64;
    let mut theta = saddle.point.theta;
    for i in 0..n {
        let z = z0 + h * i as f64;
        let k1 = slope(theta, z)?;
        let k2 = slope(theta + 0.5 * h * k1, z + 0.5 * h)?;
        let k3 = slope(theta + 0.5 * h * k2, z + 0.5 * h)?;
        let k4 = slope(theta + h * k3, z + h)?;
        theta += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok((theta, slope_max.get()))
}

/// Locates the fold tip of the second image of the local unstable branch
/// and measures its signed θ-distance to the stable curve.
pub fn fold_tip(params: &MapParams, saddle: &FixedPointRecord) -> Result<FoldTip, ManifoldError> {
    let br = UnstableBranch::new(params, saddle)?;
    let (theta_q0, z_q0) = (br.q[0], br.q[1]);
    let vf = fold_strip(params, z_q0)?;
    // first lift of V_f below the saddle's angle
    let (lo, hi) = vf
        .iter()
        .map(|&(lo, hi)| {
            let shift = TAU * ((hi - theta_q0) / TAU).ceil();
            (lo - shift, hi - shift)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| ManifoldError::FoldNotFound("no fold strip".into()))?;
    // θ_Q decreases from θ_q as t grows; expand until it passes below V_f
    let mut t_end = 1e-12;
    while br.theta_q(t_end) > lo {
        t_end *= 2.0;
        if t_end > 1.0 || !br.theta_q(t_end).is_finite() {
            return Err(ManifoldError::FoldNotFound("unstable branch does not reach V_f".into()));
        }
    }
    let ta = bisect(|t| br.theta_q(t) - hi, 0.0, t_end, 1e-18)
        .ok_or_else(|| ManifoldError::FoldNotFound("no entry into V_f".into()))?;
    let tb = bisect(|t| br.theta_q(t) - lo, ta, t_end, 1e-18)
        .ok_or_else(|| ManifoldError::FoldNotFound("no exit from V_f".into()))?;
    let width = tb - ta;
    let (mut t, _) = golden_min(|t| br.theta_r(t), ta, tb, width * 1e-9);
    // one Newton step on θ_R'(t) = 0
    let jet = br.jets(t).ok_or_else(|| ManifoldError::FoldNotFound("image escaped".into()))?;
    let step = jet[2].d1[0] / jet[2].d2[0];
    if step.is_finite() && (t - step - t).abs() < 0.01 * width {
        t -= step;
    }
    if t - ta < 1e-6 * width || tb - t < 1e-6 * width {
        return Err(ManifoldError::FoldNotFound("θ₁ has no interior extremum on V_f".into()));
    }
    let [_, _, r] = br.jets(t).ok_or_else(|| ManifoldError::FoldNotFound("image escaped".into()))?;
    let quadratic_coeff = (r.d2[0] / (r.d1[1] * r.d1[1])).abs();
    let (ws, stable_slope_bound) = stable_theta_at(params, saddle, DEFAULT_ORDER, r.x[1])?;
    let gap = wrap_pi(r.x[0] - ws);
    let unstable_slope_bound = (0..=200)
        .filter_map(|i| br.jets(ta * i as f64 / 200.0))
        .map(|j| (j[1].d1[1] / j[1].d1[0]).abs())
        .fold(0.0, f64::max);
    Ok(FoldTip {
        t,
        t_range: (ta, tb),
        tip: PhasePoint::new(r.x[0], r.x[1]),
        stable_theta: ws,
        gap,
        quadratic_coeff,
        unstable_slope_bound,
        stable_slope_bound,
    })
}

/// Signed θ-distance from the stable curve to the fold tip; positive on the
/// θ_r side.
pub fn tangency_gap(params: &MapParams, saddle: &FixedPointRecord) -> Result<f64, ManifoldError> {
    Ok(fold_tip(params, saddle)?.gap)
}

/// The saddle with winding `m` whose unstable multiplier is positive (the
/// one next to θ_r).
pub fn saddle_for(params: &MapParams, m: i64) -> Result<FixedPointRecord, ManifoldError> {
    fixed_points_for_m(params, m)?
        .into_iter()
        .filter(|r| r.kind == OrbitKind::Saddle)
        .find(|r| r.multipliers.iter().any(|l| l.re > 1.0))
        .ok_or(ManifoldError::NoSaddle(m))
}

/// Gap as a function of a with the saddle re-solved at each a.
pub fn gap_at(params_base: &MapParams, saddle_m: i64, a: f64) -> Result<f64, ManifoldError> {
    let p = params_base.with_a(a);
    tangency_gap(&p, &saddle_for(&p, saddle_m)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangencyReport {
    pub a_star: f64,
    pub saddle_m: i64,
    pub saddle: PhasePoint,
    pub tangency_point: PhasePoint,
    pub gap: f64,
    pub quadratic_coeff: f64,
    pub crossing_speed: f64,
    pub asymptotic_speed_reference: f64,
    pub unstable_slope_bound: f64,
    pub stable_slope_bound: f64,
}

const SPEED_STEP: f64 = 1e-6;

/// Bisects the gap in a to |gap| < 1e−10 and measures the tangency.
pub fn find_tangency(params_base: &MapParams, saddle_m: i64, a_range: (f64, f64)) -> Result<TangencyReport, ManifoldError> {
    let (mut lo, mut hi) = a_range;
    let mut g_lo = gap_at(params_base, saddle_m, lo)?;
    let g_hi = gap_at(params_base, saddle_m, hi)?;
    let no_bracket = || ManifoldError::NoBracket { a_lo: a_range.0, a_hi: a_range.1, gap_lo: g_lo, gap_hi: g_hi };
    if g_lo.signum() == g_hi.signum() {
        return Err(no_bracket());
    }
    let mut a = 0.5 * (lo + hi);
    let mut g = gap_at(params_base, saddle_m, a)?;
    for _ in 0..200 {
        if g.abs() < 1e-10 {
            break;
        }
        if g.signum() == g_lo.signum() {
            lo = a;
            g_lo = g;
        } else {
            hi = a;
        }
        let next = 0.5 * (lo + hi);
        if next == a {
            break;
        }
        a = next;
        g = gap_at(params_base, saddle_m, a)?;
    }
    if !(g.abs() < 1e-10) {
        // a jump of the wrapped gap, not a root
        return Err(ManifoldError::NoBracket { a_lo: a_range.0, a_hi: a_range.1, gap_lo: g_lo, gap_hi: g });
    }
    let d = |h: f64| -> Result<f64, ManifoldError> {
        Ok((gap_at(params_base, saddle_m, a + h)? - gap_at(params_base, saddle_m, a - h)?) / (2.0 * h))
    };
    let crossing_speed = (4.0 * d(0.5 * SPEED_STEP)? - d(SPEED_STEP)?) / 3.0;
    let p = params_base.with_a(a);
    let saddle = saddle_for(&p, saddle_m)?;
    let tip = fold_tip(&p, &saddle)?;
    Ok(TangencyReport {
        a_star: a,
        saddle_m,
        saddle: saddle.point,
        tangency_point: tip.tip,
        gap: tip.gap,
        quadratic_coeff: tip.quadratic_coeff,
        crossing_speed,
        asymptotic_speed_reference: ASYMPTOTIC_SPEED,
        unstable_slope_bound: tip.unstable_slope_bound,
        stable_slope_bound: tip.stable_slope_bound,
    })
}

/// Sign changes of θ_R(t) − w^s(z_R(t)) across the fold, with w^s linearised
/// at the tip height: the number of transversal intersections near the tip.
pub fn local_intersections(params: &MapParams, saddle: &FixedPointRecord, samples: usize) -> Result<usize, ManifoldError> {
    let tip = fold_tip(params, saddle)?;
    let br = UnstableBranch::new(params, saddle)?;
    let field = DirectionField::new(params, DEFAULT_ORDER);
    let e = field.eval(PhasePoint::new(tip.stable_theta, tip.tip.z))?.direction;
    let ws_slope = e[0] / e[1];
    // same lift of w^s as the tip
    let ws0 = tip.tip.theta - tip.gap;
    let (ta, tb) = tip.t_range;
    let mut count = 0;
    let mut prev: Option<f64> = None;
    for i in 0..=samples {
        let t = ta + (tb - ta) * i as f64 / samples as f64;
        let Some([_, _, r]) = br.jets(t) else { continue };
        let h = wrap_pi(r.x[0] - (ws0 + ws_slope * (r.x[1] - tip.tip.z)));
        if let Some(p) = prev {
            if p.signum() != h.signum() {
                count += 1;
            }
        }
        prev = Some(h);
    }
    Ok(count)
}

/// Geometric-decay fit of a positive sequence: the ratio exp(slope of ln xᵢ),
/// using terms above `floor`. `None` with fewer than two such terms.
pub fn geometric_ratio(xs: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        xs.iter().enumerate().filter(|(_, x)| **x > floor).map(|(i, x)| (i as f64, x.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    Some(crate::numeric::linear_fit(&x, &y).0.exp())
}
