//! Direct integration of the forced ODE between the sections, compared with
//! the derived return map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ode::{integrate, Crossing, Event, OdeOptions};
use super::{DerivedConstants, HomoclinicOrbitData, MelnikovError, OdeSystem};
use crate::numeric::{wrap_pi, TAU};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnClass {
    Return,
    Escape,
    /// Integration failed or timed out; never counts as agreement.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSample {
    pub theta: f64,
    pub x: f64,
    pub predicted: ReturnClass,
    pub actual: ReturnClass,
    /// Normal offset at Σ⁺ divided by μ: predicted P_L⁺·𝔽 and measured.
    pub z_plus_predicted: f64,
    pub z_plus_actual: Option<f64>,
    pub theta1_predicted: Option<f64>,
    pub theta1_actual: Option<f64>,
    pub z1_predicted: Option<f64>,
    pub z1_actual: Option<f64>,
    pub failure: Option<String>,
}

impl ValidationSample {
    pub fn agrees(&self) -> bool {
        self.actual != ReturnClass::Failed && self.actual == self.predicted
    }

    /// Wrapped θ₁ discrepancy for samples that returned in both.
    pub fn angular_discrepancy(&self) -> Option<f64> {
        Some(wrap_pi(self.theta1_actual? - self.theta1_predicted?).abs())
    }

    /// Relative z₁ discrepancy for samples that returned in both.
    pub fn vertical_discrepancy(&self) -> Option<f64> {
        let (a, p) = (self.z1_actual?, self.z1_predicted?);
        Some((a - p).abs() / p.abs().max(f64::MIN_POSITIVE))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mu: f64,
    pub samples: Vec<ValidationSample>,
    pub agreement: f64,
    pub median_angular_discrepancy: f64,
    pub median_vertical_discrepancy: f64,
    /// Indices of samples that escaped in the direct integration.
    pub escape_set: Vec<usize>,
    pub failures: usize,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn options() -> OdeOptions {
    OdeOptions { rtol: 1e-11, atol: 1e-22, h_max: 0.05, max_steps: 1_000_000 }
}

/// Starts `samples` points on Σ⁻ at ℓ(−L⁻) + μX·n with θ = ωt₀ uniform and
/// X ∈ [−1, 1], follows the forced flow to Σ⁺ and then back to Σ⁻ (or out
/// of the 2ε-disk on the far side of the stable manifold), and compares with
/// the prediction from `constants`. Per-sample integration failures are
/// recorded, not raised.
pub fn validate_return_map(
    system: &OdeSystem,
    orbit: &HomoclinicOrbitData,
    constants: &DerivedConstants,
    samples: usize,
    seed: u64,
) -> Result<ValidationReport, MelnikovError> {
    if !(system.mu > 0.0) {
        return Err(MelnikovError::Precondition("validation needs μ > 0".into()));
    }
    if !(constants.rho * constants.a_l > 0.0) {
        return Err(MelnikovError::Precondition("ρA_L must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<(f64, f64)> = (0..samples).map(|_| (rng.gen_range(0.0..TAU), rng.gen_range(-1.0..=1.0))).collect();
    let out: Vec<ValidationSample> = starts.par_iter().map(|&(th, x)| one_sample(system, orbit, constants, th, x)).collect();
    let agree = out.iter().filter(|s| s.agrees()).count();
    let escape_set = out.iter().enumerate().filter(|(_, s)| s.actual == ReturnClass::Escape).map(|(i, _)| i).collect();
    let failures = out.iter().filter(|s| s.actual == ReturnClass::Failed).count();
    Ok(ValidationReport {
        mu: system.mu,
        agreement: agree as f64 / samples.max(1) as f64,
        median_angular_discrepancy: median(out.iter().filter_map(|s| s.angular_discrepancy()).collect()),
        median_vertical_discrepancy: median(out.iter().filter_map(|s| s.vertical_discrepancy()).collect()),
        escape_set,
        failures,
        samples: out,
    })
}

fn one_sample(system: &OdeSystem, orbit: &HomoclinicOrbitData, k: &DerivedConstants, theta: f64, x: f64) -> ValidationSample {
    let mu = system.mu;
    let f_un = k.f_unnormalised(theta, x);
    let f_norm = f_un / (k.rho * k.a_l);
    let predicted = if f_un > 0.0 { ReturnClass::Return } else { ReturnClass::Escape };
    let (theta1_predicted, z1_predicted) = if f_norm > 0.0 {
        let th = (theta + k.a(mu) - k.d() * f_norm.ln()).rem_euclid(TAU);
        (Some(th), Some(k.b(mu) * f_norm.powf(k.gamma())))
    } else {
        (None, None)
    };
    let mut s = ValidationSample {
        theta,
        x,
        predicted,
        actual: ReturnClass::Failed,
        z_plus_predicted: k.p_l_plus * f_un,
        z_plus_actual: None,
        theta1_predicted,
        theta1_actual: None,
        z1_predicted,
        z1_actual: None,
        failure: None,
    };
    if let Err(e) = follow(system, orbit, k, theta, x, &mut s) {
        s.actual = ReturnClass::Failed;
        s.failure = Some(e);
    }
    s
}

fn follow(
    system: &OdeSystem,
    orbit: &HomoclinicOrbitData,
    k: &DerivedConstants,
    theta: f64,
    x: f64,
    s: &mut ValidationSample,
) -> Result<(), String> {
    let mu = system.mu;
    let eps = orbit.epsilon;
    let (sm, sp) = (orbit.sigma_minus, orbit.sigma_plus);
    let rho = k.rho;
    let rhs = |t: f64, y: &[f64; 2]| system.forced_field_with(rho + system.forcing.value(system.omega * t), y[0], y[1]);
    let t0 = theta / system.omega;
    let y0 = [sm.point[0] + mu * x * sm.normal[0], sm.point[1] + mu * x * sm.normal[1]];
    // out to the far side of the loop before looking for Σ⁺
    let leg = integrate(rhs, t0, y0, t0 + orbit.l_minus, &options(), &[]).map_err(|e| e.to_string())?;
    let (t1, y1) = leg.last();
    let to_plus = move |_: f64, y: &[f64; 2]| dot(sub(*y, sp.point), sp.tangent);
    let budget = 4.0 * (orbit.l_plus + orbit.l_minus) + 50.0;
    let ev = [Event::new(to_plus, Crossing::Rising, true)];
    let leg = integrate(rhs, t1, y1, t1 + budget, &options(), &ev).map_err(|e| e.to_string())?;
    if leg.stopped_by != Some(0) {
        return Err("no crossing of Σ⁺".into());
    }
    let (t2, y2) = leg.last();
    s.z_plus_actual = Some(dot(sub(y2, sp.point), sp.normal) / mu);
    // passage near the saddle: Σ⁻ or out of the 2ε-disk
    let to_minus = move |_: f64, y: &[f64; 2]| dot(sub(*y, sm.point), sm.tangent);
    let out = move |_: f64, y: &[f64; 2]| y[0].hypot(y[1]) - 2.0 * eps;
    let budget = 4.0 / orbit.beta * (eps / mu).ln() + 50.0;
    let ev = [Event::new(to_minus, Crossing::Rising, true), Event::new(out, Crossing::Rising, true)];
    let leg = integrate(rhs, t2, y2, t2 + budget, &options(), &ev).map_err(|e| e.to_string())?;
    match leg.stopped_by {
        Some(0) => {
            let (t3, y3) = leg.last();
            let off = dot(sub(y3, sm.point), sm.normal);
            if off.abs() > eps {
                // crossed the normal line away from the section segment
                s.actual = ReturnClass::Escape;
                return Ok(());
            }
            s.actual = ReturnClass::Return;
            s.theta1_actual = Some((system.omega * t3).rem_euclid(TAU));
            s.z1_actual = Some(off / mu);
        }
        Some(_) => s.actual = ReturnClass::Escape,
        None => return Err("timed out near the saddle".into()),
    }
    Ok(())
}

/// μ = 0 control: the unperturbed flow from ℓ(−L⁻) reaches Σ⁺ on the loop;
/// returns the normal offset there.
pub fn unperturbed_section_offset(system: &OdeSystem, orbit: &HomoclinicOrbitData) -> Result<f64, MelnikovError> {
    let (sm, sp) = (orbit.sigma_minus, orbit.sigma_plus);
    let rhs = |_: f64, y: &[f64; 2]| system.field(y[0], y[1]);
    let leg = integrate(rhs, 0.0, sm.point, orbit.l_minus, &options(), &[])?;
    let (t1, y1) = leg.last();
    let to_plus = move |_: f64, y: &[f64; 2]| dot(sub(*y, sp.point), sp.tangent);
    let ev = [Event::new(to_plus, Crossing::Rising, true)];
    let leg = integrate(rhs, t1, y1, t1 + 4.0 * orbit.l_plus + 50.0, &options(), &ev)?;
    if leg.stopped_by != Some(0) {
        return Err(MelnikovError::Precondition("unperturbed flow missed Σ⁺".into()));
    }
    Ok(dot(sub(leg.last().1, sp.point), sp.normal))
}
