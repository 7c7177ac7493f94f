//! The wrapped-horseshoe return map
//!
//! θ₁ = θ + a − d·ln 𝔽(θ, z),  z₁ = b·𝔽(θ, z)^γ,  𝔽 = 1 + c·Φ(θ) + k·z
//!
//! together with its derivatives and the curves that cut the annulus into
//! the region `V` where the map is defined and the escape window `U`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{bisect, TAU};

/// Lower end of the angular fundamental domain `[−π/2, 3π/2)`.
pub const THETA_MIN: f64 = -FRAC_PI_2;

/// Tolerance for boundary, critical and fold roots.
const BOUNDARY_TOL: f64 = 1e-13;

/// Samples per 2π for the dense sign-change scan of 𝔽(·, z).
const SCAN_SAMPLES: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("point ({theta}, {z}) lies outside V (𝔽 = {value})")]
    OutsideDomain { theta: f64, z: f64, value: f64 },
    #[error("non-finite image of ({theta}, {z})")]
    NumericDomain { theta: f64, z: f64 },
    #[error("𝔽(·, {z}) has no sign change; V is the whole circle at this height")]
    NoBoundary { z: f64 },
    #[error("dθ₁/dθ is not monotone on strip {strip} at z = {z}")]
    MultipleRoots { z: f64, strip: usize },
}

/// Maps any angle into `[−π/2, 3π/2)`.
pub fn normalize_theta(theta: f64) -> f64 {
    let r = (theta - THETA_MIN).rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π for tiny negative inputs
    let r = if r >= TAU { 0.0 } else { r };
    r + THETA_MIN
}

/// Fourier profile Φ(θ) = Σₙ (cₙ cos nθ + sₙ sin nθ), n ≥ 1.
///
/// Index `i` of either vector holds harmonic `n = i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingProfile {
    pub fourier_sin: Vec<f64>,
    pub fourier_cos: Vec<f64>,
}

impl Default for ForcingProfile {
    fn default() -> Self {
        Self::sin()
    }
}

impl ForcingProfile {
    /// The default profile Φ = sin θ.
    pub fn sin() -> Self {
        Self { fourier_sin: vec![1.0], fourier_cos: Vec::new() }
    }

    pub fn new(fourier_sin: Vec<f64>, fourier_cos: Vec<f64>) -> Result<Self, MapError> {
        let p = Self { fourier_sin, fourier_cos };
        p.validate()?;
        Ok(p)
    }

    /// Builds a profile from `(harmonic, coefficient)` pairs.
    pub fn from_harmonics(sin: &[(usize, f64)], cos: &[(usize, f64)]) -> Result<Self, MapError> {
        fn table(pairs: &[(usize, f64)]) -> Result<Vec<f64>, MapError> {
            let len = pairs.iter().map(|p| p.0).max().unwrap_or(0);
            let mut v = vec![0.0; len];
            for &(n, c) in pairs {
                if n == 0 {
                    return Err(MapError::InvalidParameter {
                        name: "forcing",
                        reason: "harmonics start at n = 1".into(),
                    });
                }
                v[n - 1] += c;
            }
            Ok(v)
        }
        Self::new(table(sin)?, table(cos)?)
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let all = self.fourier_sin.iter().chain(&self.fourier_cos);
        if all.clone().any(|c| !c.is_finite()) {
            return Err(MapError::InvalidParameter { name: "forcing", reason: "non-finite coefficient".into() });
        }
        if all.clone().all(|c| *c == 0.0) {
            return Err(MapError::InvalidParameter { name: "forcing", reason: "all coefficients vanish".into() });
        }
        Ok(())
    }

    /// Highest harmonic carried by either table.
    pub fn harmonics(&self) -> usize {
        self.fourier_sin.len().max(self.fourier_cos.len())
    }

    fn is_pure_sin(&self) -> bool {
        self.fourier_cos.iter().all(|c| *c == 0.0) && self.fourier_sin.iter().skip(1).all(|c| *c == 0.0)
    }

    /// (Φ, Φ', Φ'') at θ.
    pub fn eval3(&self, theta: f64) -> (f64, f64, f64) {
        if self.is_pure_sin() {
            let s1 = self.fourier_sin.first().copied().unwrap_or(0.0);
            let (s, c) = theta.sin_cos();
            return (s1 * s, s1 * c, -s1 * s);
        }
        let (mut v, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for n in 1..=self.harmonics() {
            let sn = self.fourier_sin.get(n - 1).copied().unwrap_or(0.0);
            let cn = self.fourier_cos.get(n - 1).copied().unwrap_or(0.0);
            if sn == 0.0 && cn == 0.0 {
                continue;
            }
            let nf = n as f64;
            let (s, c) = (nf * theta).sin_cos();
            v += cn * c + sn * s;
            d1 += nf * (sn * c - cn * s);
            d2 -= nf * nf * (cn * c + sn * s);
        }
        (v, d1, d2)
    }

    pub fn value(&self, theta: f64) -> f64 {
        if self.is_pure_sin() {
            return self.fourier_sin[0] * theta.sin();
        }
        self.eval3(theta).0
    }

    /// max |Φ| estimated on a dense lattice.
    pub fn max_abs(&self) -> f64 {
        (0..4096).map(|i| self.value(TAU * i as f64 / 4096.0).abs()).fold(0.0, f64::max)
    }
}

/// A point of the annulus S¹ × [−1, 1]; θ is kept in `[−π/2, 3π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub theta: f64,
    pub z: f64,
}

impl PhasePoint {
    pub fn new(theta: f64, z: f64) -> Self {
        Self { theta: normalize_theta(theta), z }
    }

    /// Distance with the angular coordinate taken on the circle.
    pub fn distance(&self, other: &PhasePoint) -> f64 {
        let dt = crate::numeric::wrap_pi(self.theta - other.theta);
        dt.hypot(self.z - other.z)
    }
}

/// Constants of the map plus the forcing profile Φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub gamma: f64,
    pub k: f64,
    pub forcing: ForcingProfile,
    /// A point escapes when 𝔽 ≤ escape_floor.
    pub escape_floor: f64,
}

impl MapParams {
    /// Pure-sin profile, k = 1, escape floor 0.
    pub fn new(a: f64, b: f64, c: f64, d: f64, gamma: f64) -> Result<Self, MapError> {
        let p = Self { a, b, c, d, gamma, k: 1.0, forcing: ForcingProfile::sin(), escape_floor: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// b = 0.005, c = 3, d = 2, γ = √2 with the given shift; the family used for
    /// the full-escape, sink and chaotic regimes.
    pub fn reference(a: f64) -> Self {
        Self::new(a, 0.005, 3.0, 2.0, 2f64.sqrt()).expect("reference constants are valid")
    }

    pub fn with_k(mut self, k: f64) -> Result<Self, MapError> {
        self.k = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_forcing(mut self, forcing: ForcingProfile) -> Result<Self, MapError> {
        self.forcing = forcing;
        self.validate()?;
        Ok(self)
    }

    pub fn with_escape_floor(mut self, floor: f64) -> Result<Self, MapError> {
        self.escape_floor = floor;
        self.validate()?;
        Ok(self)
    }

    pub fn with_a(&self, a: f64) -> Self {
        Self { a, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let bad = |name: &'static str, reason: &str| Err(MapError::InvalidParameter { name, reason: reason.into() });
        for (name, v) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d), ("gamma", self.gamma), ("k", self.k)] {
            if !v.is_finite() {
                return bad(name, "must be finite");
            }
        }
        if self.b <= 0.0 {
            return bad("b", "b > 0 required");
        }
        if self.c <= 0.0 {
            return bad("c", "c > 0 required");
        }
        if self.d <= 0.0 {
            return bad("d", "d > 0 required");
        }
        if self.gamma <= 1.0 {
            return bad("gamma", "γ > 1 required (0 < β < α)");
        }
        if !(self.k > 0.0 && self.k <= 1.0) {
            return bad("k", "0 < k ≤ 1 required");
        }
        if !(self.escape_floor.is_finite() && self.escape_floor >= 0.0) {
            return bad("escape_floor", "must be finite and ≥ 0");
        }
        self.forcing.validate()
    }

    /// The angular shift actually applied, a mod 2π.
    #[inline]
    pub fn shift(&self) -> f64 {
        self.a.rem_euclid(TAU)
    }
}

/// 𝔽 and its partial derivatives at a point (𝔽_θz = 𝔽_zz = 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FValues {
    pub f: f64,
    pub f_theta: f64,
    pub f_z: f64,
    pub f_theta_theta: f64,
}

/// 𝔽(θ, z) = 1 + c·Φ(θ) + k·z.
#[inline]
pub fn eval_f(params: &MapParams, p: PhasePoint) -> f64 {
    1.0 + params.c * params.forcing.value(p.theta) + params.k * p.z
}

pub fn f_values(params: &MapParams, theta: f64, z: f64) -> FValues {
    let (phi, dphi, ddphi) = params.forcing.eval3(theta);
    FValues {
        f: 1.0 + params.c * phi + params.k * z,
        f_theta: params.c * dphi,
        f_z: params.k,
        f_theta_theta: params.c * ddphi,
    }
}

/// Outcome of one application of the map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Image(PhasePoint),
    Escaped,
}

impl Step {
    pub fn image(self) -> Option<PhasePoint> {
        match self {
            Step::Image(p) => Some(p),
            Step::Escaped => None,
        }
    }
}

/// One step of the map; `Escaped` when 𝔽 ≤ escape_floor.
#[inline]
pub fn apply(params: &MapParams, p: PhasePoint) -> Result<Step, MapError> {
    let f = eval_f(params, p);
    if !(f > params.escape_floor) {
        if f.is_nan() {
            return Err(MapError::NumericDomain { theta: p.theta, z: p.z });
        }
        return Ok(Step::Escaped);
    }
    let theta1 = p.theta + params.shift() - params.d * f.ln();
    let z1 = params.b * f.powf(params.gamma);
    if !(theta1.is_finite() && z1.is_finite()) {
        return Err(MapError::NumericDomain { theta: p.theta, z: p.z });
    }
    Ok(Step::Image(PhasePoint::new(theta1, z1)))
}

/// Image angle without reduction mod 2π, measured from the input angle as
/// given (no normalisation of `theta`). `None` when 𝔽 ≤ 0.
pub fn apply_unwrapped(params: &MapParams, theta: f64, z: f64) -> Option<(f64, f64)> {
    let f = 1.0 + params.c * params.forcing.value(theta) + params.k * z;
    if !(f > 0.0) {
        return None;
    }
    Some((theta + params.shift() - params.d * f.ln(), params.b * f.powf(params.gamma)))
}

fn require_positive(params: &MapParams, theta: f64, z: f64) -> Result<FValues, MapError> {
    let fv = f_values(params, theta, z);
    if !(fv.f > 0.0) {
        return Err(MapError::OutsideDomain { theta, z, value: fv.f });
    }
    Ok(fv)
}

fn jacobian_from(params: &MapParams, fv: &FValues) -> Matrix2<f64> {
    let g = params.gamma * params.b * fv.f.powf(params.gamma - 1.0);
    Matrix2::new(
        1.0 - params.d * fv.f_theta / fv.f,
        -params.d * fv.f_z / fv.f,
        g * fv.f_theta,
        g * fv.f_z,
    )
}

/// Analytic Jacobian ∂(θ₁, z₁)/∂(θ, z).
pub fn jacobian(params: &MapParams, p: PhasePoint) -> Result<Matrix2<f64>, MapError> {
    let fv = require_positive(params, p.theta, p.z)?;
    Ok(jacobian_from(params, &fv))
}

/// Image and Jacobian in one pass; `Ok(None)` when the point escapes.
pub fn apply_with_jacobian(params: &MapParams, p: PhasePoint) -> Result<Option<(PhasePoint, Matrix2<f64>)>, MapError> {
    let fv = f_values(params, p.theta, p.z);
    if !(fv.f > params.escape_floor) {
        return Ok(None);
    }
    let theta1 = p.theta + params.shift() - params.d * fv.f.ln();
    let z1 = params.b * fv.f.powf(params.gamma);
    if !(theta1.is_finite() && z1.is_finite()) {
        return Err(MapError::NumericDomain { theta: p.theta, z: p.z });
    }
    Ok(Some((PhasePoint::new(theta1, z1), jacobian_from(params, &fv))))
}

/// Closed-form determinant γ·b·𝔽^{γ−1}·𝔽_z.
pub fn determinant_identity(params: &MapParams, p: PhasePoint) -> f64 {
    let f = eval_f(params, p);
    params.gamma * params.b * f.powf(params.gamma - 1.0) * params.k
}

/// Second derivatives: `[H_θ₁, H_z₁]`, each the symmetric matrix of
/// ∂²/∂(θ, z)² of one image component.
pub fn hessian(params: &MapParams, p: PhasePoint) -> Result<[Matrix2<f64>; 2], MapError> {
    let fv = require_positive(params, p.theta, p.z)?;
    let (f, ft, fz, ftt) = (fv.f, fv.f_theta, fv.f_z, fv.f_theta_theta);
    let d = params.d;
    let th = Matrix2::new(
        -d * (ftt / f - ft * ft / (f * f)),
        d * ft * fz / (f * f),
        d * ft * fz / (f * f),
        d * fz * fz / (f * f),
    );
    let (b, g) = (params.b, params.gamma);
    let p1 = b * g * f.powf(g - 1.0);
    let p2 = b * g * (g - 1.0) * f.powf(g - 2.0);
    let zz = Matrix2::new(p2 * ft * ft + p1 * ftt, p2 * ft * fz, p2 * ft * fz, p2 * fz * fz);
    Ok([th, zz])
}

/// dθ₁/dθ = 1 − d·𝔽_θ/𝔽.
pub fn dtheta1_dtheta(params: &MapParams, theta: f64, z: f64) -> f64 {
    let fv = f_values(params, theta, z);
    1.0 - params.d * fv.f_theta / fv.f
}

/// d²θ₁/dθ² = d·(𝔽_θ² − 𝔽·𝔽_θθ)/𝔽².
pub fn d2theta1_dtheta2(params: &MapParams, theta: f64, z: f64) -> f64 {
    let fv = f_values(params, theta, z);
    params.d * (fv.f_theta * fv.f_theta - fv.f * fv.f_theta_theta) / (fv.f * fv.f)
}

/// One connected component of `V` at fixed z: 𝔽 > 0 on `(theta_l, theta_r)`.
/// `theta_l` lies in `[−π/2, 3π/2)`; `theta_r = theta_l + width` may exceed 3π/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Strip {
    pub theta_l: f64,
    pub theta_r: f64,
}

impl Strip {
    pub fn width(&self) -> f64 {
        self.theta_r - self.theta_l
    }

    /// Whether angle θ (any representative) lies in the open strip.
    pub fn contains(&self, theta: f64) -> bool {
        let t = (theta - self.theta_l).rem_euclid(TAU);
        t > 0.0 && t < self.width()
    }

    /// Representative of θ inside `[theta_l, theta_l + 2π)`.
    pub fn lift(&self, theta: f64) -> f64 {
        self.theta_l + (theta - self.theta_l).rem_euclid(TAU)
    }
}

/// All sign-change intervals of 𝔽(·, z) on the circle, i.e. the strips of V.
pub fn domain_boundaries(params: &MapParams, z: f64) -> Result<Vec<Strip>, MapError> {
    let f = |t: f64| 1.0 + params.c * params.forcing.value(t) + params.k * z;
    // Start the scan at the deepest sample so no strip straddles the seam.
    let mut start = THETA_MIN;
    let mut fmin = f64::INFINITY;
    for i in 0..SCAN_SAMPLES {
        let t = THETA_MIN + TAU * i as f64 / SCAN_SAMPLES as f64;
        let v = f(t);
        if v < fmin {
            fmin = v;
            start = t;
        }
    }
    if fmin > 0.0 {
        return Err(MapError::NoBoundary { z });
    }
    let mut strips = Vec::new();
    let mut left: Option<f64> = None;
    let mut prev_t = start;
    let mut prev_v = f(start);
    for i in 1..=SCAN_SAMPLES {
        let t = start + TAU * i as f64 / SCAN_SAMPLES as f64;
        let v = if i == SCAN_SAMPLES { f(start) } else { f(t) };
        if prev_v <= 0.0 && v > 0.0 {
            left = bisect(f, prev_t, t, BOUNDARY_TOL);
        } else if prev_v > 0.0 && v <= 0.0 {
            if let (Some(l), Some(r)) = (left.take(), bisect(f, prev_t, t, BOUNDARY_TOL)) {
                let tl = normalize_theta(l);
                strips.push(Strip { theta_l: tl, theta_r: tl + (r - l) });
            }
        }
        prev_t = t;
        prev_v = v;
    }
    if strips.is_empty() {
        return Err(MapError::NoBoundary { z });
    }
    strips.sort_by(|x, y| x.theta_l.total_cmp(&y.theta_l));
    Ok(strips)
}

fn critical_in(params: &MapParams, z: f64, strip: &Strip, index: usize) -> Result<f64, MapError> {
    // sign of dθ₁/dθ equals the sign of 𝔽 − d·𝔽_θ inside the strip
    let g = |t: f64| {
        let fv = f_values(params, t, z);
        fv.f - params.d * fv.f_theta
    };
    let w = strip.width();
    let mut last = f64::NEG_INFINITY;
    for i in 1..512 {
        let t = strip.theta_l + w * i as f64 / 512.0;
        let v = dtheta1_dtheta(params, t, z);
        if v <= last {
            return Err(MapError::MultipleRoots { z, strip: index });
        }
        last = v;
    }
    bisect(g, strip.theta_l, strip.theta_r, BOUNDARY_TOL).ok_or(MapError::MultipleRoots { z, strip: index })
}

/// θ_c(z) per strip: the unique zero of dθ₁/dθ.
pub fn critical_theta(params: &MapParams, z: f64) -> Result<Vec<f64>, MapError> {
    domain_boundaries(params, z)?
        .iter()
        .enumerate()
        .map(|(i, s)| critical_in(params, z, s, i))
        .collect()
}

/// Fold strip V_f per strip: the interval around θ_c with |dθ₁/dθ| < 2.
pub fn fold_strip(params: &MapParams, z: f64) -> Result<Vec<(f64, f64)>, MapError> {
    let strips = domain_boundaries(params, z)?;
    let mut out = Vec::with_capacity(strips.len());
    for (i, s) in strips.iter().enumerate() {
        out.push(fold_in(params, z, s, i)?);
    }
    Ok(out)
}

fn fold_in(params: &MapParams, z: f64, strip: &Strip, index: usize) -> Result<(f64, f64), MapError> {
    let tc = critical_in(params, z, strip, index)?;
    let d = params.d;
    // dθ₁/dθ = −2  ⇔  3𝔽 − d𝔽_θ = 0 ;  dθ₁/dθ = 2  ⇔  −𝔽 − d𝔽_θ = 0
    let lower = |t: f64| {
        let fv = f_values(params, t, z);
        3.0 * fv.f - d * fv.f_theta
    };
    let upper = |t: f64| {
        let fv = f_values(params, t, z);
        -fv.f - d * fv.f_theta
    };
    let lo = bisect(lower, strip.theta_l, tc, BOUNDARY_TOL).ok_or(MapError::MultipleRoots { z, strip: index })?;
    let hi = bisect(upper, tc, strip.theta_r, BOUNDARY_TOL).ok_or(MapError::MultipleRoots { z, strip: index })?;
    Ok((lo, hi))
}

/// The partition of the annulus into V (per strip), the critical curve and V_f.
#[derive(Debug, Clone)]
pub struct DomainPartition {
    params: MapParams,
}

impl DomainPartition {
    pub fn new(params: &MapParams) -> Self {
        Self { params: params.clone() }
    }

    pub fn strips(&self, z: f64) -> Result<Vec<Strip>, MapError> {
        domain_boundaries(&self.params, z)
    }

    /// θ_l(z) of the first strip.
    pub fn theta_left(&self, z: f64) -> Result<f64, MapError> {
        Ok(self.strips(z)?[0].theta_l)
    }

    /// θ_r(z) of the first strip.
    pub fn theta_right(&self, z: f64) -> Result<f64, MapError> {
        Ok(self.strips(z)?[0].theta_r)
    }

    pub fn theta_critical(&self, z: f64) -> Result<f64, MapError> {
        let s = self.strips(z)?;
        critical_in(&self.params, z, &s[0], 0)
    }

    pub fn vf_bounds(&self, z: f64) -> Result<(f64, f64), MapError> {
        let s = self.strips(z)?;
        fold_in(&self.params, z, &s[0], 0)
    }

    /// Whether (θ, z) is in V (𝔽 > escape floor).
    pub fn in_v(&self, p: PhasePoint) -> bool {
        eval_f(&self.params, p) > self.params.escape_floor
    }
}

/// Bounding rectangle `((θ_min, θ_max), (z_min, z_max))` of V over z ∈ [−1, 1].
/// Falls back to the whole circle when some height has no boundary or the
/// strips wrap.
pub fn v_bounding_box(params: &MapParams) -> ((f64, f64), (f64, f64)) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let rows = 200;
    for i in 0..=rows {
        let z = -1.0 + 2.0 * i as f64 / rows as f64;
        match domain_boundaries(params, z) {
            Ok(strips) => {
                for s in strips {
                    lo = lo.min(s.theta_l);
                    hi = hi.max(s.theta_r);
                }
            }
            Err(_) => return ((THETA_MIN, THETA_MIN + TAU), (-1.0, 1.0)),
        }
    }
    if hi - lo >= TAU {
        return ((THETA_MIN, THETA_MIN + TAU), (-1.0, 1.0));
    }
    ((lo, hi), (-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn fig8() -> MapParams {
        MapParams::reference(0.2)
    }

    #[test]
    fn eval_f_examples() {
        let p = fig8();
        assert_eq!(eval_f(&p, PhasePoint::new(0.0, 0.0)), 1.0);
        assert_relative_eq!(eval_f(&p, PhasePoint::new(-FRAC_PI_2, 0.0)), -2.0, epsilon = 1e-15);
        let q = MapParams::new(0.0, 0.005, 1.0, 2.0, 2f64.sqrt())
            .unwrap()
            .with_forcing(ForcingProfile::from_harmonics(&[(1, 1.0), (3, 1.0)], &[]).unwrap())
            .unwrap();
        assert_relative_eq!(eval_f(&q, PhasePoint::new(FRAC_PI_2, 0.1)), 1.1, epsilon = 1e-14);
    }

    #[test]
    fn apply_examples() {
        let p = fig8();
        let img = apply(&p, PhasePoint::new(0.0, 0.0)).unwrap().image().unwrap();
        assert_relative_eq!(img.theta, 0.2, epsilon = 1e-15);
        assert_relative_eq!(img.z, 0.005, epsilon = 1e-15);
        assert_eq!(apply(&p, PhasePoint::new(-FRAC_PI_2, 0.0)).unwrap(), Step::Escaped);
    }

    #[test]
    fn jacobian_at_origin() {
        let j = jacobian(&fig8(), PhasePoint::new(0.0, 0.0)).unwrap();
        let s2 = 2f64.sqrt();
        assert_relative_eq!(j[(0, 0)], -5.0, epsilon = 1e-14);
        assert_relative_eq!(j[(0, 1)], -2.0, epsilon = 1e-14);
        assert_relative_eq!(j[(1, 0)], 3.0 * s2 * 0.005, epsilon = 1e-15);
        assert_relative_eq!(j[(1, 1)], s2 * 0.005, epsilon = 1e-15);
        assert_relative_eq!(j.determinant(), s2 * 0.005, max_relative = 1e-12);
    }

    #[test]
    fn jacobian_outside_v_is_an_error() {
        assert!(matches!(
            jacobian(&fig8(), PhasePoint::new(-FRAC_PI_2, 0.0)),
            Err(MapError::OutsideDomain { .. })
        ));
    }

    #[test]
    fn hessian_matches_jacobian_differences() {
        let p = fig8();
        let q = PhasePoint::new(0.4, 0.2);
        let [ht, hz] = hessian(&p, q).unwrap();
        let h = 1e-6;
        for (col, (dt, dz)) in [(0usize, (h, 0.0)), (1, (0.0, h))] {
            let jp = jacobian(&p, PhasePoint { theta: q.theta + dt, z: q.z + dz }).unwrap();
            let jm = jacobian(&p, PhasePoint { theta: q.theta - dt, z: q.z - dz }).unwrap();
            for row in 0..2 {
                let fd_t = (jp[(0, row)] - jm[(0, row)]) / (2.0 * h);
                let fd_z = (jp[(1, row)] - jm[(1, row)]) / (2.0 * h);
                assert_relative_eq!(ht[(row, col)], fd_t, max_relative = 1e-6, epsilon = 1e-9);
                assert_relative_eq!(hz[(row, col)], fd_z, max_relative = 1e-6, epsilon = 1e-11);
            }
        }
    }

    #[test]
    fn boundaries_pure_sin() {
        let p = fig8();
        let s = domain_boundaries(&p, 0.0).unwrap();
        assert_eq!(s.len(), 1);
        let r = (1.0f64 / 3.0).asin();
        assert!((s[0].theta_l + r).abs() < 1e-12);
        assert!((s[0].theta_r - (PI + r)).abs() < 1e-12);
        let s = domain_boundaries(&p, 0.5).unwrap();
        assert!((s[0].theta_l + PI / 6.0).abs() < 1e-12);
        assert!((s[0].theta_r - 7.0 * PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn boundaries_multi_strip() {
        let q = MapParams::new(0.0, 0.005, 1.0, 2.0, 2f64.sqrt())
            .unwrap()
            .with_forcing(ForcingProfile::from_harmonics(&[(1, 1.0), (3, 1.0)], &[]).unwrap())
            .unwrap();
        let strips = domain_boundaries(&q, 0.0).unwrap();
        // independent oracle: count sign changes on a finer lattice
        let f = |t: f64| 1.0 + t.sin() + (3.0 * t).sin();
        let n = 100_000;
        let mut changes = 0;
        for i in 0..n {
            let t0 = TAU * i as f64 / n as f64;
            let t1 = TAU * (i + 1) as f64 / n as f64;
            if (f(t0) > 0.0) != (f(t1) > 0.0) {
                changes += 1;
            }
        }
        assert_eq!(strips.len() * 2, changes);
        for s in &strips {
            assert!(f(s.theta_l).abs() < 1e-11 && f(s.theta_r).abs() < 1e-11);
            assert!(f(0.5 * (s.theta_l + s.theta_r)) > 0.0);
        }
    }

    #[test]
    fn no_boundary_when_f_positive() {
        let p = MapParams::new(0.0, 0.005, 0.5, 2.0, 1.5).unwrap();
        assert!(matches!(domain_boundaries(&p, 0.0), Err(MapError::NoBoundary { .. })));
    }

    #[test]
    fn critical_theta_and_fold() {
        let p = fig8();
        let tc = critical_theta(&p, 0.0).unwrap()[0];
        // oracle: 1 + 3 sin θ = 6 cos θ on (−0.34, π/2)
        let g = |t: f64| 1.0 + 3.0 * t.sin() - 6.0 * t.cos();
        let oracle = bisect(g, -0.33, FRAC_PI_2, 1e-15).unwrap();
        assert!((tc - oracle).abs() < 1e-12);
        assert!(dtheta1_dtheta(&p, tc, 0.0).abs() < 1e-9);
        assert!(d2theta1_dtheta2(&p, tc, 0.0) > 0.0);
        let (lo, hi) = fold_strip(&p, 0.0).unwrap()[0];
        assert!(lo < tc && tc < hi);
        assert!((dtheta1_dtheta(&p, lo, 0.0).abs() - 2.0).abs() < 1e-8);
        assert!((dtheta1_dtheta(&p, hi, 0.0).abs() - 2.0).abs() < 1e-8);
        assert!(hi - lo > 0.0);
    }

    #[test]
    fn normalization_range() {
        for t in [-10.0, -FRAC_PI_2, 1.5 * PI, 1.5 * PI - 1e-17, -FRAC_PI_2 - 1e-17, 100.0] {
            let n = normalize_theta(t);
            assert!((THETA_MIN..THETA_MIN + TAU).contains(&n), "{t} -> {n}");
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(MapParams::new(0.0, 0.005, 3.0, 2.0, 0.9).is_err());
        assert!(MapParams::reference(0.0).with_k(0.0).is_err());
        assert!(MapParams::reference(0.0).with_k(1.5).is_err());
        assert!(ForcingProfile::new(vec![0.0], vec![]).is_err());
    }
}
