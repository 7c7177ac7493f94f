//! Forward-surviving sets, attractor samples, orbit traces and Lyapunov
//! exponents.

use std::collections::HashSet;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::map_core::{apply, apply_with_jacobian, eval_f, v_bounding_box, MapError, MapParams, PhasePoint, Step};

/// Two points repeat when they agree to this tolerance in both coordinates.
pub const REPEAT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvivalError {
    #[error("no seed survived {burn_in} iterations")]
    AllEscaped { burn_in: usize },
    #[error("orbit left V at iteration {at}")]
    OrbitEscaped { at: usize },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// Rectangle in (θ, z) with a cell lattice of `theta_res × z_res` centres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_res: usize,
    pub z_res: usize,
    pub theta_range: (f64, f64),
    pub z_range: (f64, f64),
}

impl GridSpec {
    /// Lattice over the bounding box of V.
    pub fn over_v(params: &MapParams, theta_res: usize, z_res: usize) -> Self {
        let (theta_range, z_range) = v_bounding_box(params);
        Self { theta_res, z_res, theta_range, z_range }
    }

    /// Centre of cell (column i, row j).
    pub fn cell(&self, i: usize, j: usize) -> (f64, f64) {
        let dt = (self.theta_range.1 - self.theta_range.0) / self.theta_res as f64;
        let dz = (self.z_range.1 - self.z_range.0) / self.z_res as f64;
        (self.theta_range.0 + (i as f64 + 0.5) * dt, self.z_range.0 + (j as f64 + 0.5) * dz)
    }
}

/// First escape iteration per cell, row-major over z then θ.
///
/// `None` marks a cell whose iterates 0..=n all lie in V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeGrid {
    pub spec: GridSpec,
    pub n: usize,
    pub escape_iter: Vec<Option<u32>>,
}

impl EscapeGrid {
    pub fn at(&self, i: usize, j: usize) -> Option<u32> {
        self.escape_iter[j * self.spec.theta_res + i]
    }

    pub fn survivors(&self) -> usize {
        self.escape_iter.iter().filter(|e| e.is_none()).count()
    }

    pub fn survived_fraction(&self) -> f64 {
        self.survivors() as f64 / self.escape_iter.len() as f64
    }

    /// Maximal runs of surviving cells along z in column `i`.
    pub fn bands_in_column(&self, i: usize) -> usize {
        let mut runs = 0;
        let mut inside = false;
        for j in 0..self.spec.z_res {
            let s = self.at(i, j).is_none();
            if s && !inside {
                runs += 1;
            }
            inside = s;
        }
        runs
    }

    /// Fraction of θ-columns containing at least one survivor.
    pub fn column_coverage(&self) -> f64 {
        let cols = (0..self.spec.theta_res).filter(|&i| (0..self.spec.z_res).any(|j| self.at(i, j).is_none())).count();
        cols as f64 / self.spec.theta_res as f64
    }
}

/// Number of iterates of `p` that stay in V, capped at `n + 1`.
/// Returns `None` if all of iterates 0..=n lie in V.
fn escape_index(params: &MapParams, mut p: PhasePoint, n: usize) -> Result<Option<u32>, MapError> {
    for it in 0..=n {
        if !(eval_f(params, p) > params.escape_floor) {
            return Ok(Some(it as u32));
        }
        if it == n {
            break;
        }
        p = match apply(params, p)? {
            Step::Image(q) => q,
            Step::Escaped => return Ok(Some(it as u32)),
        };
    }
    Ok(None)
}

/// Escape-time grid over the bounding box of V.
pub fn escape_time_grid(params: &MapParams, n: usize, resolution: (usize, usize)) -> Result<EscapeGrid, SurvivalError> {
    let spec = GridSpec::over_v(params, resolution.0, resolution.1);
    escape_time_grid_in(params, n, spec)
}

/// Escape-time grid on an explicit lattice. Rows are computed in parallel into
/// disjoint slots, so the result does not depend on the thread count.
pub fn escape_time_grid_in(params: &MapParams, n: usize, spec: GridSpec) -> Result<EscapeGrid, SurvivalError> {
    if n < 1 {
        return Err(SurvivalError::Precondition("n ≥ 1 required".into()));
    }
    if spec.theta_res < 2 || spec.z_res < 2 {
        return Err(SurvivalError::Precondition("resolution ≥ 2 per axis required".into()));
    }
    params.validate()?;
    let mut cells = vec![None; spec.theta_res * spec.z_res];
    cells
        .par_chunks_mut(spec.theta_res)
        .enumerate()
        .try_for_each(|(j, row)| -> Result<(), MapError> {
            for (i, slot) in row.iter_mut().enumerate() {
                let (t, z) = spec.cell(i, j);
                *slot = escape_index(params, PhasePoint::new(t, z), n)?;
            }
            Ok(())
        })?;
    Ok(EscapeGrid { spec, n, escape_iter: cells })
}

/// Seeds in V on a lattice over V's bounding box, optionally jittered inside
/// each cell (jitter seed 0 means cell centres).
pub fn seed_lattice(params: &MapParams, count: usize, jitter_seed: u64) -> Vec<PhasePoint> {
    let side = (count as f64).sqrt().ceil().max(2.0) as usize;
    let spec = GridSpec::over_v(params, side, side);
    let mut rng = ChaCha8Rng::seed_from_u64(jitter_seed);
    let dt = (spec.theta_range.1 - spec.theta_range.0) / side as f64;
    let dz = (spec.z_range.1 - spec.z_range.0) / side as f64;
    let mut out = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let (mut t, mut z) = spec.cell(i, j);
            if jitter_seed != 0 {
                t += dt * (rng.gen::<f64>() - 0.5);
                z += dz * (rng.gen::<f64>() - 0.5);
            }
            let p = PhasePoint::new(t, z);
            if eval_f(params, p) > params.escape_floor {
                out.push(p);
            }
        }
    }
    out
}

/// A sample of the attracting set Λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractorSample {
    pub points: Vec<PhasePoint>,
    pub seeds: usize,
    pub surviving_seeds: usize,
}

impl AttractorSample {
    /// Number of points distinct at the repeat tolerance.
    pub fn distinct_points(&self) -> usize {
        let key = |p: &PhasePoint| ((p.theta / REPEAT_TOL).round() as i64, (p.z / REPEAT_TOL).round() as i64);
        self.points.iter().map(key).collect::<HashSet<_>>().len()
    }

    /// ((θ_min, θ_max), (z_min, z_max)) of the sample.
    pub fn bounding_box(&self) -> ((f64, f64), (f64, f64)) {
        let mut bb = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
        for p in &self.points {
            bb.0 .0 = bb.0 .0.min(p.theta);
            bb.0 .1 = bb.0 .1.max(p.theta);
            bb.1 .0 = bb.1 .0.min(p.z);
            bb.1 .1 = bb.1 .1.max(p.z);
        }
        bb
    }
}

/// Iterates `seeds` lattice points for `burn_in` steps, then keeps `keep`
/// further images of each surviving seed.
pub fn attractor_sample(
    params: &MapParams,
    burn_in: usize,
    keep: usize,
    seeds: usize,
) -> Result<AttractorSample, SurvivalError> {
    attractor_sample_with(params, burn_in, keep, &seed_lattice(params, seeds, 0))
}

pub fn attractor_sample_with(
    params: &MapParams,
    burn_in: usize,
    keep: usize,
    seeds: &[PhasePoint],
) -> Result<AttractorSample, SurvivalError> {
    if burn_in < 1 || keep < 1 || seeds.is_empty() {
        return Err(SurvivalError::Precondition("burn_in, keep, seeds ≥ 1 required".into()));
    }
    let per_seed: Vec<Option<Vec<PhasePoint>>> = seeds
        .par_iter()
        .map(|&s| -> Result<Option<Vec<PhasePoint>>, MapError> {
            let mut p = s;
            for _ in 0..burn_in {
                match apply(params, p)? {
                    Step::Image(q) => p = q,
                    Step::Escaped => return Ok(None),
                }
            }
            let mut kept = Vec::with_capacity(keep);
            for _ in 0..keep {
                match apply(params, p)? {
                    Step::Image(q) => {
                        p = q;
                        kept.push(q);
                    }
                    Step::Escaped => break,
                }
            }
            Ok(Some(kept))
        })
        .collect::<Result<_, _>>()?;
    let surviving = per_seed.iter().filter(|s| s.is_some()).count();
    if surviving == 0 {
        return Err(SurvivalError::AllEscaped { burn_in });
    }
    let points = per_seed.into_iter().flatten().flatten().collect();
    Ok(AttractorSample { points, seeds: seeds.len(), surviving_seeds: surviving })
}

/// Largest Lyapunov exponent with a moving-block bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub exponent: f64,
    pub std_error: f64,
    pub iterations: usize,
}

impl LyapunovEstimate {
    /// Standard error relative to |exponent|.
    pub fn relative_error(&self) -> f64 {
        self.std_error / self.exponent.abs()
    }
}

/// Per-step log stretching factors of a tangent vector along the orbit.
pub fn log_stretch_series(params: &MapParams, seed: PhasePoint, n: usize) -> Result<Vec<f64>, SurvivalError> {
    if n == 0 {
        return Err(SurvivalError::Precondition("n ≥ 1 required".into()));
    }
    let mut p = seed;
    let mut v = Vector2::new(1.0, 1.0).normalize();
    let mut logs = Vec::with_capacity(n);
    for it in 0..n {
        let (q, j) = apply_with_jacobian(params, p)?.ok_or(SurvivalError::OrbitEscaped { at: it })?;
        let w = j * v;
        let norm = w.norm();
        logs.push(norm.ln());
        v = w / norm;
        p = q;
    }
    Ok(logs)
}

/// Tangent-vector Lyapunov exponent over `n` iterations with a block
/// bootstrap standard error (200 resamples, block length ⌈√n⌉, fixed RNG).
pub fn lyapunov_exponent(params: &MapParams, seed: PhasePoint, n: usize) -> Result<LyapunovEstimate, SurvivalError> {
    let logs = log_stretch_series(params, seed, n)?;
    let exponent = logs.iter().sum::<f64>() / n as f64;
    Ok(LyapunovEstimate { exponent, std_error: block_bootstrap_se(&logs, 200, 0), iterations: n })
}

fn block_bootstrap_se(x: &[f64], resamples: usize, rng_seed: u64) -> f64 {
    let n = x.len();
    let block = ((n as f64).sqrt().ceil() as usize).clamp(1, n);
    let starts = n - block + 1;
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    let blocks_per = n.div_ceil(block);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let means: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut s = 0.0;
            for _ in 0..blocks_per {
                let b = rng.gen_range(0..starts);
                s += prefix[b + block] - prefix[b];
            }
            s / (blocks_per * block) as f64
        })
        .collect();
    let m = means.iter().sum::<f64>() / resamples as f64;
    (means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (resamples - 1) as f64).sqrt()
}

/// An orbit segment; `escaped_at = Some(j)` when iterate j left V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub points: Vec<PhasePoint>,
    pub escaped_at: Option<usize>,
    pub lyapunov: Option<f64>,
}

impl OrbitTrace {
    /// Smallest p such that the final point repeats the point p steps earlier.
    pub fn detect_period(&self, max_period: usize) -> Option<usize> {
        let last = self.points.last()?;
        let n = self.points.len();
        (1..=max_period.min(n.saturating_sub(1))).find(|&p| {
            let q = &self.points[n - 1 - p];
            crate::numeric::wrap_pi(q.theta - last.theta).abs() < REPEAT_TOL && (q.z - last.z).abs() < REPEAT_TOL
        })
    }
}

/// Iterates up to `n` steps, recording every point, stopping at escape.
pub fn orbit_trace(params: &MapParams, seed: PhasePoint, n: usize) -> Result<OrbitTrace, SurvivalError> {
    let mut points = Vec::with_capacity(n + 1);
    let mut p = seed;
    points.push(p);
    let mut v = Vector2::new(1.0, 1.0).normalize();
    let mut log_sum = 0.0;
    for it in 0..n {
        match apply_with_jacobian(params, p)? {
            Some((q, j)) => {
                let w = j * v;
                log_sum += w.norm().ln();
                v = w.normalize();
                p = q;
                points.push(p);
            }
            None => {
                return Ok(OrbitTrace { points, escaped_at: Some(it), lyapunov: None });
            }
        }
    }
    let lyapunov = (n > 0).then(|| log_sum / n as f64);
    Ok(OrbitTrace { points, escaped_at: None, lyapunov })
}

/// Outcome of iterating many seeds towards a known periodic orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub seeds: usize,
    pub surviving: usize,
    pub converged: usize,
}

impl ConvergenceReport {
    pub fn fraction(&self) -> f64 {
        self.converged as f64 / self.surviving.max(1) as f64
    }
}

/// For each seed, iterates up to `max_iter` steps and records whether the
/// orbit comes within `tol` of one of `targets`. Seeds that escape first are
/// not counted as surviving.
pub fn convergence_to(
    params: &MapParams,
    targets: &[PhasePoint],
    seeds: &[PhasePoint],
    max_iter: usize,
    tol: f64,
) -> Result<ConvergenceReport, SurvivalError> {
    #[derive(Clone, Copy)]
    enum Fate {
        Escaped,
        Converged,
        Wandering,
    }
    let fates: Vec<Fate> = seeds
        .par_iter()
        .map(|&s| -> Result<Fate, MapError> {
            let mut p = s;
            let mut hit = false;
            for _ in 0..max_iter {
                if !hit && targets.iter().any(|t| t.distance(&p) < tol) {
                    hit = true;
                }
                match apply(params, p)? {
                    Step::Image(q) => p = q,
                    Step::Escaped => return Ok(Fate::Escaped),
                }
            }
            if hit || targets.iter().any(|t| t.distance(&p) < tol) {
                Ok(Fate::Converged)
            } else {
                Ok(Fate::Wandering)
            }
        })
        .collect::<Result<_, _>>()?;
    let surviving = fates.iter().filter(|f| !matches!(f, Fate::Escaped)).count();
    let converged = fates.iter().filter(|f| matches!(f, Fate::Converged)).count();
    Ok(ConvergenceReport { seeds: seeds.len(), surviving, converged })
}
