//! Sampling-based certification of the full-shift regime: the fold strip maps
//! into the escape window and horizontal / vertical cones are invariant.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_core::{
    apply_unwrapped, domain_boundaries, eval_f, fold_strip, jacobian, MapError, MapParams, PhasePoint, Strip,
};
use crate::numeric::TAU;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Slope thresholds of the horizontal and vertical cones (slope = dz/dθ).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub horizontal_bound: f64,
    pub vertical_bound: f64,
}

impl Default for ConeSpec {
    fn default() -> Self {
        Self { horizontal_bound: 0.01, vertical_bound: 100.0 }
    }
}

impl ConeSpec {
    pub fn validate(&self) -> Result<(), CertifyError> {
        if 0.0 < self.horizontal_bound && self.horizontal_bound < 1.0 && 1.0 < self.vertical_bound {
            Ok(())
        } else {
            Err(CertifyError::Precondition("0 < horizontal_bound < 1 < vertical_bound required".into()))
        }
    }
}

/// Sample counts: a `v_theta × v_z` lattice of V and `vf` points of V_f.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub v_theta: usize,
    pub v_z: usize,
    pub vf: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self { v_theta: 2000, v_z: 200, vf: 10_000 }
    }
}

/// Finite-symbol full-shift check: every ordered pair of the chosen symbols is
/// realised by a sampled point and its image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCheck {
    pub symbols: Vec<i64>,
    pub realized: usize,
    pub required: usize,
}

impl TransitionCheck {
    pub fn complete(&self) -> bool {
        self.realized == self.required
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub param_a: f64,
    pub certified: bool,
    pub fold_in_u: bool,
    /// min over sampled V_f of the signed θ-distance from the image to V
    /// (positive: image in U).
    pub fold_margin: f64,
    pub cone_h_ok: bool,
    /// max |slope| of pushed-forward horizontal cone boundary vectors.
    pub cone_h_worst_slope: f64,
    pub cone_h_margin: f64,
    pub cone_v_ok: bool,
    /// min |slope| of pulled-back vertical cone boundary vectors.
    pub cone_v_worst_slope: f64,
    pub cone_v_margin: f64,
    pub vf_samples: usize,
    pub v_samples: usize,
    pub returning_samples: usize,
    /// Returning samples with 𝔽 ≥ √k and with 𝔽 < √k (diagnostic case split).
    pub f_above_sqrt_k: usize,
    pub f_below_sqrt_k: usize,
    pub transitions: Option<TransitionCheck>,
}

/// a-independent geometry: sample lattices of V and V_f and a table of the
/// strips at the heights reached by images.
#[derive(Debug, Clone)]
pub struct CertifierGeometry {
    v_points: Vec<PhasePoint>,
    vf_points: Vec<PhasePoint>,
    image_levels: Vec<(f64, Vec<Strip>)>,
}

const IMAGE_LEVELS: usize = 129;

impl CertifierGeometry {
    pub fn new(params: &MapParams, sampling: Sampling) -> Result<Self, CertifyError> {
        if sampling.v_theta < 2 || sampling.v_z < 2 || sampling.vf < 4 {
            return Err(CertifyError::Precondition("sampling counts too small".into()));
        }
        params.validate()?;
        let rows: Vec<f64> = (0..sampling.v_z).map(|j| -1.0 + 2.0 * (j as f64 + 0.5) / sampling.v_z as f64).collect();
        let strips_per_row: Vec<Vec<Strip>> = rows
            .par_iter()
            .map(|&z| domain_boundaries(params, z).map_err(degenerate))
            .collect::<Result<_, _>>()?;
        let mut v_points = Vec::with_capacity(sampling.v_theta * sampling.v_z);
        for (z, strips) in rows.iter().zip(&strips_per_row) {
            let total: f64 = strips.iter().map(Strip::width).sum();
            for s in strips {
                let n = ((sampling.v_theta as f64) * s.width() / total).round().max(1.0) as usize;
                for i in 0..n {
                    let t = s.theta_l + s.width() * (i as f64 + 0.5) / n as f64;
                    v_points.push(PhasePoint::new(t, *z));
                }
            }
        }
        let vf_rows = ((sampling.vf as f64).sqrt().round() as usize).max(2);
        let vf_cols = sampling.vf.div_ceil(vf_rows);
        let vf_z: Vec<f64> = (0..vf_rows).map(|j| -1.0 + 2.0 * (j as f64 + 0.5) / vf_rows as f64).collect();
        let vf_bounds: Vec<Vec<(f64, f64)>> =
            vf_z.par_iter().map(|&z| fold_strip(params, z).map_err(degenerate)).collect::<Result<_, _>>()?;
        let mut vf_points = Vec::with_capacity(vf_rows * vf_cols);
        for (z, bounds) in vf_z.iter().zip(&vf_bounds) {
            for &(lo, hi) in bounds {
                for i in 0..vf_cols {
                    vf_points.push(PhasePoint::new(lo + (hi - lo) * (i as f64 + 0.5) / vf_cols as f64, *z));
                }
            }
        }
        // images have z₁ = b𝔽^γ with 0 < 𝔽 ≤ 1 + c·max|Φ| + k
        let z_top = params.b * (1.0 + params.c * params.forcing.max_abs() + params.k).powf(params.gamma);
        let image_levels: Vec<(f64, Vec<Strip>)> = (0..IMAGE_LEVELS)
            .into_par_iter()
            .map(|i| {
                let z = z_top * i as f64 / (IMAGE_LEVELS - 1) as f64;
                domain_boundaries(params, z).map(|s| (z, s)).map_err(degenerate)
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { v_points, vf_points, image_levels })
    }

    /// Strips at height z by linear interpolation of the tabulated boundaries.
    fn strips_at(&self, z: f64) -> Vec<Strip> {
        let top = self.image_levels.len() - 1;
        let z_top = self.image_levels[top].0;
        let x = (z / z_top * top as f64).clamp(0.0, top as f64);
        let i = (x.floor() as usize).min(top - 1);
        let w = x - i as f64;
        let (lo, hi) = (&self.image_levels[i].1, &self.image_levels[i + 1].1);
        if lo.len() != hi.len() {
            return if w < 0.5 { lo.clone() } else { hi.clone() };
        }
        lo.iter()
            .zip(hi)
            .map(|(a, b)| Strip {
                theta_l: a.theta_l + w * (b.theta_l - a.theta_l),
                theta_r: a.theta_r + w * (b.theta_r - a.theta_r),
            })
            .collect()
    }

    /// Signed θ-distance from a point to V: positive outside V (in U),
    /// negative inside. The sign is decided by 𝔽 itself.
    fn signed_distance_to_v(&self, params: &MapParams, p: PhasePoint) -> f64 {
        let inside = eval_f(params, p) > 0.0;
        let strips = self.strips_at(p.z);
        let dist = strips
            .iter()
            .map(|s| {
                let t = s.lift(p.theta);
                if t < s.theta_r {
                    (t - s.theta_l).min(s.theta_r - t)
                } else {
                    (t - s.theta_r).min(s.theta_l + TAU - t)
                }
            })
            .fold(f64::INFINITY, f64::min);
        if inside {
            -dist
        } else {
            dist
        }
    }
}

fn degenerate(e: MapError) -> CertifyError {
    match e {
        MapError::NoBoundary { z } => CertifyError::DegenerateDomain(format!("U is empty at z = {z}")),
        other => CertifyError::Map(other),
    }
}

/// Wrap index of the image of `p`: which lift of the first strip its unwrapped
/// angle falls into. `None` when p or its image leaves V.
fn symbol(params: &MapParams, geo: &CertifierGeometry, p: PhasePoint) -> Option<(i64, PhasePoint)> {
    let (t1, z1) = apply_unwrapped(params, p.theta, p.z)?;
    let q = PhasePoint::new(t1, z1);
    if !(eval_f(params, q) > params.escape_floor) {
        return None;
    }
    let strips = geo.strips_at(z1);
    let base = strips.first()?.theta_l;
    Some((((t1 - base) / TAU).floor() as i64, q))
}

struct Sample {
    h_slope: f64,
    v_slope: f64,
    above_sqrt_k: bool,
}

/// Checks the fold and cone conditions at the given parameters.
pub fn certify_horseshoe(params: &MapParams, cones: ConeSpec, sampling: Sampling) -> Result<CertificateReport, CertifyError> {
    let geo = CertifierGeometry::new(params, sampling)?;
    let mut report = certify_with(params, cones, &geo)?;
    if report.certified {
        report.transitions = Some(transition_check(params, &geo, TRANSITION_SYMBOLS));
    }
    Ok(report)
}

const TRANSITION_SYMBOLS: usize = 4;
const TRANSITION_ROWS: usize = 64;
const TRANSITION_COLS: usize = 20_000;

/// As [`certify_horseshoe`] with precomputed geometry (reused across a scan).
/// The transition check is skipped.
pub fn certify_with(params: &MapParams, cones: ConeSpec, geo: &CertifierGeometry) -> Result<CertificateReport, CertifyError> {
    cones.validate()?;
    let fold_margin = geo
        .vf_points
        .par_iter()
        .map(|&p| match apply_unwrapped(params, p.theta, p.z) {
            Some((t1, z1)) => geo.signed_distance_to_v(params, PhasePoint::new(t1, z1)),
            None => f64::INFINITY,
        })
        .reduce(|| f64::INFINITY, f64::min);

    let h = cones.horizontal_bound;
    let sigma = 1.0 / cones.vertical_bound;
    let sqrt_k = params.k.sqrt();
    let samples: Vec<Option<Sample>> = geo
        .v_points
        .par_iter()
        .map(|&p| -> Result<Option<Sample>, MapError> {
            let Some((t1, z1)) = apply_unwrapped(params, p.theta, p.z) else { return Ok(None) };
            if !(eval_f(params, PhasePoint::new(t1, z1)) > params.escape_floor) {
                return Ok(None);
            }
            let j = jacobian(params, p)?;
            let mut h_slope: f64 = 0.0;
            for s in [h, -h] {
                let w = j * Vector2::new(1.0, s);
                h_slope = h_slope.max((w[1] / w[0]).abs());
            }
            let mut v_slope = f64::INFINITY;
            match j.try_inverse() {
                Some(inv) => {
                    for s in [sigma, -sigma] {
                        let w = inv * Vector2::new(s, 1.0);
                        v_slope = v_slope.min((w[1] / w[0]).abs());
                    }
                }
                None => v_slope = 0.0,
            }
            let h_slope = if h_slope.is_nan() { f64::INFINITY } else { h_slope };
            let v_slope = if v_slope.is_nan() { 0.0 } else { v_slope };
            Ok(Some(Sample { h_slope, v_slope, above_sqrt_k: eval_f(params, p) >= sqrt_k }))
        })
        .collect::<Result<_, _>>()?;
    let returning: Vec<&Sample> = samples.iter().flatten().collect();
    let cone_h_worst_slope = returning.iter().map(|s| s.h_slope).fold(0.0, f64::max);
    let cone_v_worst_slope = returning.iter().map(|s| s.v_slope).fold(f64::INFINITY, f64::min);
    let f_above = returning.iter().filter(|s| s.above_sqrt_k).count();

    let fold_in_u = fold_margin > 0.0;
    let cone_h_ok = cone_h_worst_slope < h;
    let cone_v_ok = cone_v_worst_slope > cones.vertical_bound;
    let certified = fold_in_u && cone_h_ok && cone_v_ok;
    Ok(CertificateReport {
        param_a: params.a,
        certified,
        fold_in_u,
        fold_margin,
        cone_h_ok,
        cone_h_worst_slope,
        cone_h_margin: h - cone_h_worst_slope,
        cone_v_ok,
        cone_v_worst_slope,
        cone_v_margin: cone_v_worst_slope - cones.vertical_bound,
        vf_samples: geo.vf_points.len(),
        v_samples: geo.v_points.len(),
        returning_samples: returning.len(),
        f_above_sqrt_k: f_above,
        f_below_sqrt_k: returning.len() - f_above,
        transitions: None,
    })
}

/// Full-shift check on the `count` most populated symbols whose image
/// strips are thicker than 1e−14 in z.
pub fn transition_check(params: &MapParams, geo: &CertifierGeometry, count: usize) -> TransitionCheck {
    let lattice: Vec<PhasePoint> = (0..TRANSITION_ROWS)
        .flat_map(|j| {
            let z = -1.0 + 2.0 * (j as f64 + 0.5) / TRANSITION_ROWS as f64;
            domain_boundaries(params, z).unwrap_or_default().into_iter().flat_map(move |s| {
                (0..TRANSITION_COLS)
                    .map(move |i| PhasePoint::new(s.theta_l + s.width() * (i as f64 + 0.5) / TRANSITION_COLS as f64, z))
            })
        })
        .collect();
    let pairs: Vec<Option<(i64, Option<i64>)>> = lattice
        .par_iter()
        .map(|&p| {
            let (s0, q) = symbol(params, geo, p)?;
            Some((s0, symbol(params, geo, q).map(|x| x.0)))
        })
        .collect();
    let mut population: BTreeMap<i64, usize> = BTreeMap::new();
    let mut zmin: BTreeMap<i64, f64> = BTreeMap::new();
    let mut zmax: BTreeMap<i64, f64> = BTreeMap::new();
    for (p, r) in lattice.iter().zip(&pairs) {
        if let Some((s, _)) = r {
            *population.entry(*s).or_default() += 1;
            if let Some((_, z1)) = apply_unwrapped(params, p.theta, p.z) {
                let lo = zmin.entry(*s).or_insert(f64::INFINITY);
                *lo = lo.min(z1);
                let hi = zmax.entry(*s).or_insert(f64::NEG_INFINITY);
                *hi = hi.max(z1);
            }
        }
    }
    let mut ranked: Vec<(i64, usize)> =
        population.into_iter().filter(|(s, _)| zmax[s] - zmin[s] > 1e-14).collect();
    ranked.sort_by(|x, y| y.1.cmp(&x.1).then(x.0.cmp(&y.0)));
    let symbols: Vec<i64> = ranked.iter().take(count).map(|x| x.0).collect();
    let chosen: BTreeSet<i64> = symbols.iter().copied().collect();
    let realized: BTreeSet<(i64, i64)> = pairs
        .iter()
        .flatten()
        .filter_map(|(a, b)| b.map(|b| (*a, b)))
        .filter(|(a, b)| chosen.contains(a) && chosen.contains(b))
        .collect();
    TransitionCheck { required: symbols.len() * symbols.len(), realized: realized.len(), symbols }
}

/// One scan step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub a: f64,
    pub certified: bool,
    pub fold_margin: f64,
    pub cone_h_margin: f64,
    pub cone_v_margin: f64,
}

/// Consecutive scan steps with the same outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanInterval {
    pub a_start: f64,
    pub a_end: f64,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub points: Vec<ScanPoint>,
    pub intervals: Vec<ScanInterval>,
}

impl ScanResult {
    /// Steps i whose outcome differs from step i + `shift`.
    pub fn mismatches_under_shift(&self, shift: usize) -> usize {
        (0..self.points.len().saturating_sub(shift))
            .filter(|&i| self.points[i].certified != self.points[i + shift].certified)
            .count()
    }
}

/// Certifies at `steps` equally spaced a in `a_range` (b held fixed) and
/// merges equal outcomes into intervals.
pub fn scan_parameter(
    params_base: &MapParams,
    a_range: (f64, f64),
    steps: usize,
    cones: ConeSpec,
    sampling: Sampling,
) -> Result<ScanResult, CertifyError> {
    if steps < 2 {
        return Err(CertifyError::Precondition("steps ≥ 2 required".into()));
    }
    let geo = CertifierGeometry::new(params_base, sampling)?;
    let da = (a_range.1 - a_range.0) / (steps - 1) as f64;
    let mut points = Vec::with_capacity(steps);
    for i in 0..steps {
        let a = a_range.0 + da * i as f64;
        let r = certify_with(&params_base.with_a(a), cones, &geo)?;
        points.push(ScanPoint {
            a,
            certified: r.certified,
            fold_margin: r.fold_margin,
            cone_h_margin: r.cone_h_margin,
            cone_v_margin: r.cone_v_margin,
        });
    }
    let mut intervals: Vec<ScanInterval> = Vec::new();
    for p in &points {
        match intervals.last_mut() {
            Some(last) if last.certified == p.certified => last.a_end = p.a,
            _ => intervals.push(ScanInterval { a_start: p.a, a_end: p.a, certified: p.certified }),
        }
    }
    Ok(ScanResult { points, intervals })
}
