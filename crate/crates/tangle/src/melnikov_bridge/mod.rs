//! From a periodically forced planar ODE to the constants of the return map:
//! homoclinic orbit, profile functions E and H, Melnikov-type integrals and
//! the derived map, plus a direct-integration check of the derived map.

pub mod ode;
pub mod poly;
mod validate;

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_core::{ForcingProfile, MapError, MapParams};
use crate::numeric::{bisect, linear_fit};
use ode::{integrate, Crossing, Event, OdeError, OdeOptions, Trajectory};
pub use poly::Poly2;
pub use validate::{unperturbed_section_offset, validate_return_map, ReturnClass, ValidationReport, ValidationSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MelnikovError {
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("no homoclinic orbit: best closure residual {best_residual:e}")]
    NoHomoclinic { best_residual: f64 },
    #[error("divergent integral: {0}")]
    Divergent(String),
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Nonlinear terms f, g of the unperturbed field and the forcing shape A, B.
/// All must vanish together with their first derivatives at the origin.
pub trait PlanarTerms: Send + Sync + fmt::Debug {
    fn f(&self, x: f64, y: f64) -> f64;
    fn g(&self, x: f64, y: f64) -> f64;
    fn grad_f(&self, x: f64, y: f64) -> (f64, f64);
    fn grad_g(&self, x: f64, y: f64) -> (f64, f64);
    fn shape_a(&self, x: f64, y: f64) -> f64;
    fn shape_b(&self, x: f64, y: f64) -> f64;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialTerms {
    pub f: Poly2,
    pub g: Poly2,
    pub a: Poly2,
    pub b: Poly2,
}

impl PolynomialTerms {
    pub fn validate(&self) -> Result<(), MelnikovError> {
        for (name, p) in [("f", &self.f), ("g", &self.g), ("A", &self.a), ("B", &self.b)] {
            if !p.is_higher_order() {
                return Err(MelnikovError::InvalidSystem(format!(
                    "{name} must vanish with its first derivatives at the origin (degree ≥ 2)"
                )));
            }
        }
        Ok(())
    }
}

impl PlanarTerms for PolynomialTerms {
    fn f(&self, x: f64, y: f64) -> f64 {
        self.f.eval(x, y)
    }
    fn g(&self, x: f64, y: f64) -> f64 {
        self.g.eval(x, y)
    }
    fn grad_f(&self, x: f64, y: f64) -> (f64, f64) {
        self.f.grad(x, y)
    }
    fn grad_g(&self, x: f64, y: f64) -> (f64, f64) {
        self.g.grad(x, y)
    }
    fn shape_a(&self, x: f64, y: f64) -> f64 {
        self.a.eval(x, y)
    }
    fn shape_b(&self, x: f64, y: f64) -> f64 {
        self.b.eval(x, y)
    }
}

type TermsBuilder = Arc<dyn Fn(f64) -> Arc<dyn PlanarTerms> + Send + Sync>;

/// A one-parameter family of terms used to close the homoclinic loop by
/// bisection when the loop is not structurally present.
#[derive(Clone)]
pub struct ShootingFamily {
    pub name: String,
    pub bracket: (f64, f64),
    pub build: TermsBuilder,
}

impl fmt::Debug for ShootingFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ShootingFamily").field("name", &self.name).field("bracket", &self.bracket).finish()
    }
}

/// x' = −αx + f + μA(ρ + 𝒬(ωt)),  y' = βy + g + μB(ρ + 𝒬(ωt)).
#[derive(Debug, Clone)]
pub struct OdeSystem {
    pub alpha: f64,
    pub beta: f64,
    pub terms: Arc<dyn PlanarTerms>,
    pub forcing: ForcingProfile,
    pub omega: f64,
    /// `None` selects ρ by the 3 < √(C² + S²)/(ρA) < 9 rule (midpoint 6).
    pub rho: Option<f64>,
    pub mu: f64,
    pub epsilon: f64,
    pub family: Option<ShootingFamily>,
}

impl OdeSystem {
    pub fn new(alpha: f64, beta: f64, terms: Arc<dyn PlanarTerms>) -> Self {
        Self {
            alpha,
            beta,
            terms,
            forcing: ForcingProfile::sin(),
            omega: 2.0,
            rho: None,
            mu: 1e-5,
            epsilon: 0.05,
            family: None,
        }
    }

    /// Testbed with the invariant loop x³ + y³ = 3xy (a folium): the cubic
    /// H = xy − (x³ + y³)/3 satisfies Ḣ = K·H for the chosen f, g, so its zero
    /// set is invariant for every α, β. A = xy, B = x² + y².
    pub fn folium(alpha: f64, beta: f64) -> Self {
        Self::new(alpha, beta, Arc::new(folium_terms(alpha, beta)))
    }

    /// Duffing oscillator x'' = x − x³ − δx' + λx²x' + μx²(ρ + 𝒬(ωt)) in the
    /// saddle's eigen-coordinates (X stable, Y unstable, x = X + Y). The right
    /// loop exists only on a curve λ*(δ) ≈ 1.25δ, so λ is the shooting
    /// parameter.
    pub fn duffing(delta: f64) -> Self {
        let root = (delta * delta + 4.0).sqrt();
        let alpha = 0.5 * (delta + root);
        let beta = 0.5 * (root - delta);
        let build: TermsBuilder = Arc::new(move |lambda: f64| Arc::new(duffing_terms(alpha, beta, lambda)) as Arc<dyn PlanarTerms>);
        let mut s = Self::new(alpha, beta, build(1.25 * delta));
        s.family = Some(ShootingFamily { name: "lambda".into(), bracket: (0.5 * delta, 2.5 * delta), build });
        s
    }

    /// Checks 0 < β < α and the term/parameter domains; returns warnings.
    pub fn validate(&self) -> Result<Vec<String>, MelnikovError> {
        let bad = |m: &str| Err(MelnikovError::InvalidSystem(m.into()));
        if !(self.beta > 0.0 && self.beta < self.alpha) {
            return bad("0 < β < α required");
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return bad("ω > 0 required");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("0 < ε < 1 required");
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad("μ ≥ 0 required");
        }
        if let Some(r) = self.rho {
            if !(r.is_finite() && r != 0.0) {
                return bad("ρ must be finite and nonzero");
            }
        }
        self.forcing.validate()?;
        let mut warnings = Vec::new();
        if self.mu >= 0.1 * self.epsilon {
            warnings.push(format!("μ = {} is not small against ε = {}", self.mu, self.epsilon));
        }
        if self.epsilon > 0.2 {
            warnings.push(format!("ε = {} is not small", self.epsilon));
        }
        let ratio = self.alpha / self.beta;
        if (ratio - ratio.round()).abs() < 1e-3 {
            warnings.push(format!("α/β = {ratio} is near-resonant"));
        }
        Ok(warnings)
    }

    pub fn with_terms(&self, terms: Arc<dyn PlanarTerms>) -> Self {
        Self { terms, ..self.clone() }
    }

    /// Unperturbed field.
    pub fn field(&self, x: f64, y: f64) -> [f64; 2] {
        [-self.alpha * x + self.terms.f(x, y), self.beta * y + self.terms.g(x, y)]
    }

    /// Full forced field at time t.
    pub fn forced_field(&self, t: f64, x: f64, y: f64) -> [f64; 2] {
        let q = self.rho.unwrap_or(0.0) + self.forcing.value(self.omega * t);
        self.forced_field_with(q, x, y)
    }

    pub(crate) fn forced_field_with(&self, q: f64, x: f64, y: f64) -> [f64; 2] {
        let [fx, fy] = self.field(x, y);
        [fx + self.mu * self.terms.shape_a(x, y) * q, fy + self.mu * self.terms.shape_b(x, y) * q]
    }
}

/// The polynomial terms behind [`OdeSystem::folium`].
pub fn folium_terms(alpha: f64, beta: f64) -> PolynomialTerms {
    PolynomialTerms {
        f: Poly2::new([(0, 2, (alpha + 2.0 * beta) / 3.0), (2, 1, (alpha - beta) / 3.0)]),
        g: Poly2::new([(2, 0, -(2.0 * alpha + beta) / 3.0), (1, 2, (alpha - beta) / 3.0)]),
        a: Poly2::monomial(1, 1, 1.0),
        b: Poly2::new([(2, 0, 1.0), (0, 2, 1.0)]),
    }
}

fn duffing_terms(alpha: f64, beta: f64, lambda: f64) -> PolynomialTerms {
    let s = alpha + beta;
    let x = Poly2::new([(1, 0, 1.0), (0, 1, 1.0)]);
    let p = Poly2::new([(1, 0, -alpha), (0, 1, beta)]);
    let x2 = x.pow(2);
    let n = x.pow(3).scale(-1.0).add(&x2.mul(&p).scale(lambda));
    PolynomialTerms { f: n.scale(-1.0 / s), g: n.scale(1.0 / s), a: x2.scale(-1.0 / s), b: x2.scale(1.0 / s) }
}

/// A section line: the normal line of the loop at arclength parameter `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionGeometry {
    pub s: f64,
    pub point: [f64; 2],
    pub tangent: [f64; 2],
    /// (v, −u): the direction in which the normal offset is measured.
    pub normal: [f64; 2],
}

/// Uniformly sampled homoclinic loop ℓ(s) with s = 0 at maximal distance
/// from the saddle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomoclinicOrbitData {
    pub step: f64,
    pub s: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub e: Vec<f64>,
    pub h: Vec<f64>,
    pub l_plus: f64,
    pub l_minus: f64,
    pub epsilon: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Normal mismatch of the two branches at the matching section.
    pub residual: f64,
    pub family_parameter: Option<f64>,
    pub sigma_minus: SectionGeometry,
    pub sigma_plus: SectionGeometry,
}

const SEED: f64 = 1e-8;
pub const GRID_STEP: f64 = 1e-3;
const BRANCH_TIME: f64 = 200.0;
const ESCAPE_RADIUS: f64 = 50.0;

fn orbit_options() -> OdeOptions {
    OdeOptions { rtol: 1e-12, atol: 1e-22, h_max: 0.05, ..OdeOptions::default() }
}

struct Branches {
    fwd: Trajectory<2>,
    bwd: Trajectory<2>,
    t_fwd: f64,
    t_bwd: f64,
    residual: f64,
}

/// Unstable branch to its first radial maximum p*, stable branch (backward
/// time) to the normal line through p*.
fn shoot(system: &OdeSystem) -> Result<Branches, MelnikovError> {
    let rhs = |_: f64, y: &[f64; 2]| system.field(y[0], y[1]);
    let radial = |_: f64, y: &[f64; 2]| {
        let f = system.field(y[0], y[1]);
        y[0] * f[0] + y[1] * f[1]
    };
    let escape = |_: f64, y: &[f64; 2]| y[0].hypot(y[1]) - ESCAPE_RADIUS;
    let ev = [Event::new(radial, Crossing::Falling, true), Event::new(escape, Crossing::Rising, true)];
    let fwd = integrate(rhs, 0.0, [0.0, SEED], BRANCH_TIME, &orbit_options(), &ev)?;
    if fwd.stopped_by != Some(0) {
        return Err(MelnikovError::NoHomoclinic { best_residual: f64::INFINITY });
    }
    let (t_fwd, p) = fwd.last();
    let fp = system.field(p[0], p[1]);
    let nf = fp[0].hypot(fp[1]);
    let (tu, tv) = (fp[0] / nf, fp[1] / nf);
    let section = move |_: f64, y: &[f64; 2]| (y[0] - p[0]) * tu + (y[1] - p[1]) * tv;
    let ev = [Event::new(section, Crossing::Either, true), Event::new(escape, Crossing::Rising, true)];
    let bwd = integrate(rhs, 0.0, [SEED, 0.0], -BRANCH_TIME, &orbit_options(), &ev)?;
    if bwd.stopped_by != Some(0) {
        return Err(MelnikovError::NoHomoclinic { best_residual: f64::INFINITY });
    }
    let (t_bwd, q) = bwd.last();
    let residual = (q[0] - p[0]) * tv - (q[1] - p[1]) * tu;
    Ok(Branches { fwd, bwd, t_fwd, t_bwd: -t_bwd, residual })
}

/// Computes ℓ by shooting from both eigendirections and matching at the
/// radial maximum; with a shooting family the parameter is bisected until the
/// mismatch is below `shoot_tol`.
pub fn compute_homoclinic_orbit(system: &OdeSystem, shoot_tol: f64) -> Result<HomoclinicOrbitData, MelnikovError> {
    compute_homoclinic_orbit_with_step(system, shoot_tol, GRID_STEP)
}

/// As [`compute_homoclinic_orbit`] with an explicit arclength-grid step.
pub fn compute_homoclinic_orbit_with_step(
    system: &OdeSystem,
    shoot_tol: f64,
    step: f64,
) -> Result<HomoclinicOrbitData, MelnikovError> {
    system.validate()?;
    if !(step > 0.0 && step <= 0.05) {
        return Err(MelnikovError::Precondition(format!("grid step {step} outside (0, 0.05]")));
    }
    let (sys, param, br) = match &system.family {
        None => {
            let br = shoot(system)?;
            (system.clone(), None, br)
        }
        Some(fam) => {
            let at = |lam: f64| -> Result<(OdeSystem, Branches), MelnikovError> {
                let s = system.with_terms((fam.build)(lam));
                let b = shoot(&s)?;
                Ok((s, b))
            };
            let res = |lam: f64| at(lam).map_or(f64::NAN, |(_, b)| b.residual);
            let (lo, hi) = fam.bracket;
            let (rlo, rhi) = (res(lo), res(hi));
            if !(rlo.is_finite() && rhi.is_finite()) || rlo.signum() == rhi.signum() {
                let best = rlo.abs().min(rhi.abs());
                return Err(MelnikovError::NoHomoclinic { best_residual: if best.is_nan() { f64::INFINITY } else { best } });
            }
            let lam = bisect(res, lo, hi, 1e-15).ok_or(MelnikovError::NoHomoclinic { best_residual: rlo.abs().min(rhi.abs()) })?;
            let (s, b) = at(lam)?;
            (s, Some(lam), b)
        }
    };
    if !(br.residual.abs() < shoot_tol) {
        return Err(MelnikovError::NoHomoclinic { best_residual: br.residual.abs() });
    }
    sample_orbit(&sys, &br, param, step)
}

fn sample_orbit(system: &OdeSystem, br: &Branches, param: Option<f64>, h: f64) -> Result<HomoclinicOrbitData, MelnikovError> {
    let i_lo = -((br.t_fwd / h).floor() as i64);
    let i_hi = (br.t_bwd / h).floor() as i64;
    let n = (i_hi - i_lo + 1) as usize;
    let mut data = HomoclinicOrbitData {
        step: h,
        s: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        u: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        l_plus: f64::NAN,
        l_minus: f64::NAN,
        epsilon: system.epsilon,
        alpha: system.alpha,
        beta: system.beta,
        residual: br.residual,
        family_parameter: param,
        sigma_minus: SectionGeometry { s: 0.0, point: [0.0; 2], tangent: [0.0; 2], normal: [0.0; 2] },
        sigma_plus: SectionGeometry { s: 0.0, point: [0.0; 2], tangent: [0.0; 2], normal: [0.0; 2] },
    };
    for i in i_lo..=i_hi {
        let s = i as f64 * h;
        let p = if s <= 0.0 { br.fwd.at(s + br.t_fwd) } else { br.bwd.at(s - br.t_bwd) }
            .ok_or_else(|| MelnikovError::Precondition("orbit sample outside the integrated range".into()))?;
        data.s.push(s);
        data.x.push(p[0]);
        data.y.push(p[1]);
        let pr = profiles(system, p[0], p[1]);
        data.u.push(pr.0);
        data.v.push(pr.1);
        data.e.push(pr.2);
        data.h.push(pr.3);
    }
    data.set_epsilon(system, system.epsilon)?;
    Ok(data)
}

/// (u, v, E, H) at a point of the loop.
fn profiles(system: &OdeSystem, x: f64, y: f64) -> (f64, f64, f64, f64) {
    let f = system.field(x, y);
    let n = f[0].hypot(f[1]);
    let (u, v) = (f[0] / n, f[1] / n);
    let (fx, fy) = system.terms.grad_f(x, y);
    let (gx, gy) = system.terms.grad_g(x, y);
    let e = v * v * (-system.alpha + fx) + u * u * (system.beta + gy) - u * v * (fy + gx);
    let hh = v * system.terms.shape_a(x, y) - u * system.terms.shape_b(x, y);
    (u, v, e, hh)
}

impl HomoclinicOrbitData {
    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn radius(&self, i: usize) -> f64 {
        self.x[i].hypot(self.y[i])
    }

    fn index_of_zero(&self) -> usize {
        (-self.s[0] / self.step).round() as usize
    }

    /// ℓ(s) by cubic Hermite interpolation with the field as derivative.
    pub fn point_at(&self, system: &OdeSystem, s: f64) -> [f64; 2] {
        let h = self.step;
        let x = ((s - self.s[0]) / h).clamp(0.0, (self.len() - 2) as f64);
        let i = (x.floor() as usize).min(self.len() - 2);
        let t = x - i as f64;
        let p0 = [self.x[i], self.y[i]];
        let p1 = [self.x[i + 1], self.y[i + 1]];
        let d0 = system.field(p0[0], p0[1]);
        let d1 = system.field(p1[0], p1[1]);
        let (h00, h10, h01, h11) = hermite_basis(t);
        std::array::from_fn(|k| h00 * p0[k] + h10 * h * d0[k] + h01 * p1[k] + h11 * h * d1[k])
    }

    fn section(&self, system: &OdeSystem, s: f64) -> SectionGeometry {
        let p = self.point_at(system, s);
        let (u, v, _, _) = profiles(system, p[0], p[1]);
        SectionGeometry { s, point: p, tangent: [u, v], normal: [v, -u] }
    }

    /// Re-derives L± (first entry into the disk of radius ε forward and
    /// backward from s = 0) and the two sections.
    pub fn set_epsilon(&mut self, system: &OdeSystem, epsilon: f64) -> Result<(), MelnikovError> {
        let i0 = self.index_of_zero();
        let r = |s: f64| {
            let p = self.point_at(system, s);
            p[0].hypot(p[1]) - epsilon
        };
        let ip = (i0..self.len())
            .find(|&i| self.radius(i) < epsilon)
            .ok_or_else(|| MelnikovError::Precondition(format!("orbit never enters radius {epsilon} forward")))?;
        let im = (0..=i0)
            .rev()
            .find(|&i| self.radius(i) < epsilon)
            .ok_or_else(|| MelnikovError::Precondition(format!("orbit never enters radius {epsilon} backward")))?;
        if ip == i0 || im == i0 {
            return Err(MelnikovError::Precondition("ε exceeds the loop size".into()));
        }
        let lp = bisect(r, self.s[ip - 1], self.s[ip], 1e-14).unwrap_or(self.s[ip]);
        let lm = bisect(r, self.s[im], self.s[im + 1], 1e-14).unwrap_or(self.s[im]);
        self.epsilon = epsilon;
        self.l_plus = lp;
        self.l_minus = -lm;
        self.sigma_plus = self.section(system, lp);
        self.sigma_minus = self.section(system, lm);
        Ok(())
    }

    /// Fitted tail decay rates (α from x(s), s → +∞; β from y(s), s → −∞),
    /// over samples with 1e−6 < r < 1e−3.
    pub fn decay_rates(&self) -> (f64, f64) {
        let fit = |pos: bool| {
            let (mut s, mut l) = (Vec::new(), Vec::new());
            for i in 0..self.len() {
                let r = self.radius(i);
                if (self.s[i] > 0.0) == pos && r > 1e-6 && r < 1e-3 {
                    s.push(self.s[i]);
                    l.push(if pos { self.x[i].abs().ln() } else { self.y[i].abs().ln() });
                }
            }
            linear_fit(&s, &l).0
        };
        (-fit(true), fit(false))
    }

    /// max over samples of |ℓ'(s) − field(ℓ(s))| by central differences,
    /// relative to the field size.
    pub fn ode_residual(&self, system: &OdeSystem) -> f64 {
        let h = self.step;
        (2..self.len() - 2)
            .map(|i| {
                let d = |k: &[f64]| (-k[i + 2] + 8.0 * k[i + 1] - 8.0 * k[i - 1] + k[i - 2]) / (12.0 * h);
                let f = system.field(self.x[i], self.y[i]);
                let n = f[0].hypot(f[1]).max(1e-300);
                ((d(&self.x) - f[0]).hypot(d(&self.y) - f[1])) / n
            })
            .fold(0.0, f64::max)
    }

    /// CSV rows `s,x,y,u,v,E,H`.
    pub fn rows(&self) -> impl Iterator<Item = [f64; 7]> + '_ {
        (0..self.len()).map(|i| [self.s[i], self.x[i], self.y[i], self.u[i], self.v[i], self.e[i], self.h[i]])
    }
}

fn hermite_basis(t: f64) -> (f64, f64, f64, f64) {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0, t3 - 2.0 * t2 + t, -2.0 * t3 + 3.0 * t2, t3 - t2)
}

/// Cumulative integral from the first node with the 4th-order rule
/// h/24·(−f₋₁ + 13f₀ + 13f₁ − f₂) (one-sided at the ends).
pub fn cumulative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
        }
        return out;
    }
    for i in 0..n - 1 {
        let cell = if i == 0 {
            h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else if i == n - 2 {
            h / 24.0 * (9.0 * f[n - 1] + 19.0 * f[n - 2] - 5.0 * f[n - 3] + f[n - 4])
        } else {
            h / 24.0 * (-f[i - 1] + 13.0 * f[i] + 13.0 * f[i + 1] - f[i + 2])
        };
        out[i + 1] = out[i] + cell;
    }
    out
}

/// A cumulative integral sampled on a uniform grid, evaluable between nodes
/// by Hermite interpolation with the integrand as derivative.
#[derive(Debug, Clone)]
pub struct CumulativeIntegral {
    s0: f64,
    h: f64,
    cum: Vec<f64>,
    integrand: Vec<f64>,
}

impl CumulativeIntegral {
    pub fn new(s0: f64, h: f64, integrand: Vec<f64>) -> Self {
        Self { s0, h, cum: cumulative(&integrand, h), integrand }
    }

    pub fn at(&self, s: f64) -> f64 {
        let n = self.cum.len();
        let x = ((s - self.s0) / self.h).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n - 2);
        let t = x - i as f64;
        let (h00, h10, h01, h11) = hermite_basis(t);
        h00 * self.cum[i] + h10 * self.h * self.integrand[i] + h01 * self.cum[i + 1] + h11 * self.h * self.integrand[i + 1]
    }

    pub fn between(&self, lo: f64, hi: f64) -> f64 {
        self.at(hi) - self.at(lo)
    }

    pub fn total(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }
}

/// C(nω), S(nω) over the whole loop and truncated to [−L⁻, L⁺].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicIntegrals {
    pub n: usize,
    pub c: f64,
    pub s: f64,
    pub c_l: f64,
    pub s_l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub epsilon: f64,
    pub l_plus: f64,
    pub l_minus: f64,
    pub a_val: f64,
    pub c_val: f64,
    pub s_val: f64,
    pub a_l: f64,
    pub c_l: f64,
    pub s_l: f64,
    pub p_l: f64,
    pub p_l_plus: f64,
    pub rho: f64,
    pub harmonics: Vec<HarmonicIntegrals>,
    /// φ_L(θ) = Σₙ (sₙ sin nθ + cₙ cos nθ) in the section phase θ.
    pub phi_l_sin: Vec<f64>,
    pub phi_l_cos: Vec<f64>,
    /// θ' = θ + phase_shift turns the first harmonic of φ_L into a pure sine;
    /// equals ωL⁻ + c₀.
    pub phase_shift: f64,
}

impl DerivedConstants {
    /// φ_L at section phase θ.
    pub fn phi_l(&self, theta: f64) -> f64 {
        self.phi_l_sin.iter().zip(&self.phi_l_cos).enumerate().map(|(i, (s, c))| {
            let n = (i + 1) as f64;
            s * (n * theta).sin() + c * (n * theta).cos()
        }).sum()
    }

    /// Unnormalised 𝔽 = ρA_L + φ_L(θ) + (P_L/P_L⁺)·X.
    pub fn f_unnormalised(&self, theta: f64, x: f64) -> f64 {
        self.rho * self.a_l + self.phi_l(theta) + self.p_l / self.p_l_plus * x
    }

    pub fn d(&self) -> f64 {
        self.omega / self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn c(&self) -> f64 {
        self.phi_l_sin.first().copied().unwrap_or(0.0).hypot(self.phi_l_cos.first().copied().unwrap_or(0.0))
            / (self.rho * self.a_l)
    }

    pub fn k(&self) -> f64 {
        self.p_l / (self.p_l_plus * self.a_l * self.rho)
    }

    /// a = (ω/β) ln μ⁻¹ + ω(L⁺ + L⁻) + (ω/β) ln(ε / (P_L⁺ A_L ρ)).
    ///
    /// The saddle passage from normal offset μP_L⁺ρA_L·𝔽 at Σ⁺ out to ε
    /// takes (1/β) ln(ε / (μP_L⁺ρA_L·𝔽)), so P_L⁺A_Lρ enters divided.
    pub fn a(&self, mu: f64) -> f64 {
        self.d() * (1.0 / mu).ln()
            + self.omega * (self.l_plus + self.l_minus)
            + self.d() * (self.epsilon / (self.p_l_plus * self.a_l * self.rho)).ln()
    }

    /// b = (μ/ε)^{α/β − 1} (P_L⁺ A_L ρ)^{α/β}.
    pub fn b(&self, mu: f64) -> f64 {
        (mu / self.epsilon).powf(self.gamma() - 1.0) * (self.p_l_plus * self.a_l * self.rho).powf(self.gamma())
    }
}

/// Relative size below which A_L or C_L² + S_L² counts as zero.
const HYPOTHESIS_FLOOR: f64 = 1e-12;

/// A, C, S and their truncations, P_L, P_L⁺, ρ and the Fourier series of φ_L
/// for every harmonic of the system's forcing.
pub fn melnikov_integrals(orbit: &HomoclinicOrbitData, system: &OdeSystem) -> Result<DerivedConstants, MelnikovError> {
    if orbit.len() < 8 {
        return Err(MelnikovError::Precondition("orbit too short".into()));
    }
    let (s0, h) = (orbit.s[0], orbit.step);
    let cum_e = CumulativeIntegral::new(s0, h, orbit.e.clone());
    let w0 = cum_e.at(0.0);
    let weight: Vec<f64> = orbit.s.iter().map(|&s| (-(cum_e.at(s) - w0)).exp()).collect();
    let r: Vec<f64> = orbit.h.iter().zip(&weight).map(|(a, b)| a * b).collect();
    let peak = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tail = r[0].abs().max(r[r.len() - 1].abs());
    if !(peak > 0.0) || tail > 1e-8 * peak || r.iter().any(|v| !v.is_finite()) {
        return Err(MelnikovError::Divergent(format!("integrand tail {tail:e} against peak {peak:e}")));
    }
    let (lm, lp) = (-orbit.l_minus, orbit.l_plus);
    let cum_r = CumulativeIntegral::new(s0, h, r.clone());
    let harmonics_needed = system.forcing.harmonics().max(1);
    let harmonics: Vec<HarmonicIntegrals> = (1..=harmonics_needed)
        .into_par_iter()
        .map(|n| {
            let w = n as f64 * system.omega;
            let rc: Vec<f64> = orbit.s.iter().zip(&r).map(|(s, r)| r * (w * s).cos()).collect();
            let rs: Vec<f64> = orbit.s.iter().zip(&r).map(|(s, r)| r * (w * s).sin()).collect();
            let (cc, cs) = (CumulativeIntegral::new(s0, h, rc), CumulativeIntegral::new(s0, h, rs));
            HarmonicIntegrals { n, c: cc.total(), s: cs.total(), c_l: cc.between(lm, lp), s_l: cs.between(lm, lp) }
        })
        .collect();
    let a_val = cum_r.total();
    let a_l = cum_r.between(lm, lp);
    let h1 = harmonics[0];
    let rho = match system.rho {
        Some(r) => r,
        None => {
            if a_val == 0.0 {
                return Err(MelnikovError::HypothesisViolated("(H2)(i): A = 0".into()));
            }
            a_val.signum() * h1.c.hypot(h1.s) / (6.0 * a_val.abs())
        }
    };
    let p_l = (cum_e.between(lm, lp)).exp();
    let p_l_plus = (cum_e.between(0.0, lp)).exp();
    // φ_L(θ) = ∫ R(s) 𝒬(θ + ωL⁻ + ωs) ds over [−L⁻, L⁺]
    let mut phi_l_sin = vec![0.0; harmonics_needed];
    let mut phi_l_cos = vec![0.0; harmonics_needed];
    for hm in &harmonics {
        let i = hm.n - 1;
        let sn = system.forcing.fourier_sin.get(i).copied().unwrap_or(0.0);
        let cn = system.forcing.fourier_cos.get(i).copied().unwrap_or(0.0);
        let p = sn * hm.c_l - cn * hm.s_l;
        let q = sn * hm.s_l + cn * hm.c_l;
        let delta = hm.n as f64 * system.omega * orbit.l_minus;
        let (sd, cd) = delta.sin_cos();
        phi_l_sin[i] = p * cd - q * sd;
        phi_l_cos[i] = p * sd + q * cd;
    }
    let phase_shift = phi_l_cos[0].atan2(phi_l_sin[0]);
    Ok(DerivedConstants {
        alpha: orbit.alpha,
        beta: orbit.beta,
        omega: system.omega,
        epsilon: orbit.epsilon,
        l_plus: orbit.l_plus,
        l_minus: orbit.l_minus,
        a_val,
        c_val: h1.c,
        s_val: h1.s,
        a_l,
        c_l: h1.c_l,
        s_l: h1.s_l,
        p_l,
        p_l_plus,
        rho,
        harmonics,
        phi_l_sin,
        phi_l_cos,
        phase_shift,
    })
}

/// Map constants with every (1 + O(ε)) factor set to 1; Φ is φ_L/(ρA_L)
/// rotated so its first harmonic is c·sin θ. Returns warnings alongside.
pub fn derive_map_params(system: &OdeSystem, k: &DerivedConstants) -> Result<(MapParams, Vec<String>), MelnikovError> {
    let scale = k.harmonics.iter().map(|h| h.c.hypot(h.s)).fold(k.a_val.abs(), f64::max).max(1e-300);
    if !(k.a_l.abs() > HYPOTHESIS_FLOOR * scale) {
        return Err(MelnikovError::HypothesisViolated("(H2)(i): A_L = 0".into()));
    }
    if !(k.c_l.hypot(k.s_l) > HYPOTHESIS_FLOOR * scale) {
        return Err(MelnikovError::HypothesisViolated("(H2)(ii): C_L² + S_L² = 0".into()));
    }
    if !(system.mu > 0.0) {
        return Err(MelnikovError::Precondition("μ > 0 required to form a and b".into()));
    }
    let amp1 = k.phi_l_sin[0].hypot(k.phi_l_cos[0]);
    if !(amp1 > 0.0) {
        return Err(MelnikovError::HypothesisViolated("forcing has no first harmonic".into()));
    }
    let norm = k.rho * k.a_l;
    if !(norm > 0.0) {
        return Err(MelnikovError::Precondition(format!("ρA_L = {norm} must be positive")));
    }
    let c = amp1 / norm;
    // harmonic n of φ_L in θ' = θ + phase_shift, divided by the c·ρA_L scale
    let mut fs = Vec::with_capacity(k.phi_l_sin.len());
    let mut fc = Vec::with_capacity(k.phi_l_sin.len());
    for (i, (s, co)) in k.phi_l_sin.iter().zip(&k.phi_l_cos).enumerate() {
        let shift = (i + 1) as f64 * k.phase_shift;
        let (sd, cd) = shift.sin_cos();
        fs.push((s * cd + co * sd) / amp1);
        fc.push((co * cd - s * sd) / amp1);
    }
    fs[0] = 1.0;
    fc[0] = 0.0;
    let forcing = ForcingProfile::new(fs, fc)?;
    let mut warnings = Vec::new();
    if !(2.0 < c && c < 10.0) {
        warnings.push(format!("c = {c} outside the window (2, 10)"));
    }
    let params = MapParams::new(k.a(system.mu), k.b(system.mu), c, k.d(), k.gamma())?
        .with_k(k.k())?
        .with_forcing(forcing)?;
    Ok((params, warnings))
}

/// Fitted knee and Cauchy spread of D(L) = ∫₀^L E − βL: D is sampled at the
/// grid nodes, |ΔD| is fitted by an exponential and the knee is where the
/// fitted |ΔD| falls below `tol`; the spread is sup |D_i − D_j| beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    pub knee: f64,
    pub decay_rate: f64,
    pub spread_beyond_knee: f64,
    pub limit: f64,
}

pub fn e_integral_convergence(orbit: &HomoclinicOrbitData, tol: f64) -> Result<ConvergenceCheck, MelnikovError> {
    let cum = CumulativeIntegral::new(orbit.s[0], orbit.step, orbit.e.clone());
    let w0 = cum.at(0.0);
    let stride = (0.25 / orbit.step).round() as usize;
    let i0 = (-orbit.s[0] / orbit.step).round() as usize;
    let nodes: Vec<usize> = (i0..orbit.len()).step_by(stride.max(1)).collect();
    let d: Vec<f64> = nodes.iter().map(|&i| cum.at(orbit.s[i]) - w0 - orbit.beta * orbit.s[i]).collect();
    let (mut ls, mut ld) = (Vec::new(), Vec::new());
    for k in 1..d.len() {
        let diff = (d[k] - d[k - 1]).abs();
        if diff > 1e-13 {
            ls.push(orbit.s[nodes[k]]);
            ld.push(diff.ln());
        }
    }
    if ls.len() < 3 {
        return Err(MelnikovError::Divergent("too few samples to fit ∫E − βL".into()));
    }
    let (slope, icpt) = linear_fit(&ls, &ld);
    if !(slope < 0.0) {
        return Err(MelnikovError::Divergent(format!("∫E − βL does not settle (fitted rate {slope})")));
    }
    let knee = ((tol.ln() - icpt) / slope).max(0.0);
    let beyond: Vec<f64> = nodes.iter().zip(&d).filter(|(i, _)| orbit.s[**i] >= knee).map(|(_, v)| *v).collect();
    let spread = if beyond.is_empty() {
        f64::INFINITY
    } else {
        beyond.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - beyond.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    };
    Ok(ConvergenceCheck { knee, decay_rate: -slope, spread_beyond_knee: spread, limit: *d.last().unwrap() })
}
