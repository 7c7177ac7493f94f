//! One function per subcommand; each renders its artifacts in memory.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{Command, RunConfig};
use super::output::{self, num, Artifact};
use super::{Analysis, CliError, Outcome};
use crate::horseshoe_certifier::{certify_horseshoe, scan_parameter};
use crate::manifolds_tangency::{
    find_tangency, gap_at, local_intersections, saddle_for, stable_curve, unstable_curve, CurveSample, DEFAULT_ORDER,
};
use crate::map_core::{apply, MapParams, PhasePoint, Step};
use crate::melnikov_bridge::{
    compute_homoclinic_orbit, derive_map_params, e_integral_convergence, melnikov_integrals, validate_return_map,
    DerivedConstants, HomoclinicOrbitData, OdeSystem,
};
use crate::periodic_orbits::{
    classify_multipliers, feasible_windings, find_fixed_points, find_periodic_orbits, iterate_with_jacobian, multipliers,
    FixedPointRecord, OrbitKind, MAX_PERIOD,
};
use crate::survival_sets::{
    attractor_sample_with, escape_time_grid, lyapunov_exponent, orbit_trace, seed_lattice, REPEAT_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    HorseshoeCertified,
    Sink,
    TangencyCandidate,
    FullEscape,
    Inconclusive,
}

/// An attracting periodic orbit found while classifying.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinkRecord {
    pub period: usize,
    pub points: Vec<PhasePoint>,
    pub multipliers: [Complex64; 2],
}

/// Classification of one parameter value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub param_a: f64,
    pub regime: Regime,
    pub detail: String,
    pub sink: Option<SinkRecord>,
}

impl RegimeReport {
    pub fn summary_line(&self) -> String {
        match self.regime {
            Regime::FullEscape => "regime: full-escape (horseshoe-only candidate)".into(),
            Regime::HorseshoeCertified => "regime: horseshoe-certified".into(),
            Regime::Sink => format!("regime: sink ({})", self.detail),
            Regime::TangencyCandidate => format!("regime: tangency-candidate ({})", self.detail),
            Regime::Inconclusive => format!("regime: inconclusive ({})", self.detail),
        }
    }
}

fn sink_from_fixed_point(r: &FixedPointRecord) -> SinkRecord {
    SinkRecord { period: 1, points: vec![r.point], multipliers: r.multipliers }
}

fn first_sink(params: &MapParams) -> Result<Option<FixedPointRecord>, Analysis> {
    Ok(find_fixed_points(params, feasible_windings(params))?.into_iter().find(|r| r.kind == OrbitKind::Sink))
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let res = match cfg.command {
        Command::EscapeMap => escape_map(cfg),
        Command::Orbit => orbit(cfg),
        Command::Attractor => attractor(cfg),
        Command::Lyapunov => lyapunov(cfg),
        Command::FixedPoints => fixed_points(cfg),
        Command::Certify => certify(cfg),
        Command::Scan => scan(cfg),
        Command::Tangency => tangency(cfg),
        Command::Melnikov => melnikov(cfg),
        Command::Validate => validate(cfg),
    };
    let mut out = match res {
        Ok(o) => o,
        Err(Analysis::Failed(e)) => return Err(e),
        Err(Analysis::Negative(reason)) => Outcome {
            summary: format!("{}: negative result: {reason}", cfg.command),
            artifacts: vec![output::json(
                cfg,
                &format!("{}.json", cfg.command.stem()),
                &json!({ "outcome": "negative", "reason": reason }),
            )?],
            negative: true,
        },
    };
    out.artifacts.push(output::config_echo(cfg));
    Ok(out)
}

fn done(summary: String, artifacts: Vec<Artifact>) -> Result<Outcome, Analysis> {
    Ok(Outcome { summary, artifacts, negative: false })
}

fn escape_map(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let grid = escape_time_grid(&cfg.map, cfg.n, (cfg.theta_res, cfg.z_res))?;
    let spec = grid.spec;
    let rows = (0..spec.z_res).flat_map(|j| {
        let grid = &grid;
        (0..spec.theta_res).map(move |i| {
            let (t, z) = spec.cell(i, j);
            let e = grid.at(i, j).map_or(-1, i64::from);
            [num(t), num(z), e.to_string()]
        })
    });
    let csv = output::csv(cfg, "escape_map.csv", &["theta", "z", "escape_iter"], rows)?;
    let survivors = grid.survivors();
    let regime = if survivors == 0 {
        RegimeReport {
            param_a: cfg.map.a,
            regime: Regime::FullEscape,
            detail: format!("no cell survives {} iterations", cfg.n),
            sink: None,
        }
    } else if let Some(s) = first_sink(&cfg.map)? {
        RegimeReport {
            param_a: cfg.map.a,
            regime: Regime::Sink,
            detail: format!("m = {}, theta = {:.6}, z = {:.6}", s.winding_m, s.point.theta, s.point.z),
            sink: Some(sink_from_fixed_point(&s)),
        }
    } else {
        RegimeReport {
            param_a: cfg.map.a,
            regime: Regime::Inconclusive,
            detail: format!("{survivors} surviving cells, no period-1 sink"),
            sink: None,
        }
    };
    let body = json!({
        "regime": regime,
        "escape_grid": {
            "csv": "escape_map.csv",
            "n": grid.n,
            "spec": spec,
            "survivors": survivors,
            "survived_fraction": grid.survived_fraction(),
            "column_coverage": grid.column_coverage(),
        },
    });
    let js = output::json(cfg, "escape_map.json", &body)?;
    done(format!("{} [survivors {survivors} of {}]", regime.summary_line(), spec.theta_res * spec.z_res), vec![csv, js])
}

/// Smallest p ≤ MAX_PERIOD with the last point repeating p steps earlier.
fn tail_period(points: &[PhasePoint]) -> Option<usize> {
    let last = *points.last()?;
    (1..=MAX_PERIOD.min(points.len().saturating_sub(1))).find(|&p| {
        let q = points[points.len() - 1 - p];
        (q.theta - last.theta).abs() < REPEAT_TOL && (q.z - last.z).abs() < REPEAT_TOL
    })
}

fn default_start(cfg: &RunConfig) -> Result<PhasePoint, Analysis> {
    if let Some((t, z)) = cfg.start {
        return Ok(PhasePoint::new(t, z));
    }
    // first lattice seed that survives the burn-in, advanced past it
    for s in seed_lattice(&cfg.map, cfg.seeds, cfg.rng_seed) {
        let mut p = s;
        let mut alive = true;
        for _ in 0..cfg.burn_in {
            match apply(&cfg.map, p)? {
                Step::Image(q) => p = q,
                Step::Escaped => {
                    alive = false;
                    break;
                }
            }
        }
        if alive {
            return Ok(p);
        }
    }
    Err(Analysis::Negative(format!("no seed survived {} iterations", cfg.burn_in)))
}

fn orbit(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let seed = cfg.start.map_or(PhasePoint::new(0.0, 0.0), |(t, z)| PhasePoint::new(t, z));
    let trace = orbit_trace(&cfg.map, seed, cfg.n)?;
    let rows = trace.points.iter().enumerate().map(|(i, p)| [i.to_string(), num(p.theta), num(p.z)]);
    let csv = output::csv(cfg, "orbit.csv", &["iter", "theta", "z"], rows)?;
    let regime = match (trace.escaped_at, tail_period(&trace.points)) {
        (Some(k), _) => RegimeReport {
            param_a: cfg.map.a,
            regime: Regime::Inconclusive,
            detail: format!("orbit escaped at iteration {k}"),
            sink: None,
        },
        (None, Some(p)) => {
            let last = *trace.points.last().unwrap();
            let m = iterate_with_jacobian(&cfg.map, last, p)?.map(|(_, _, j)| multipliers(&j));
            match m {
                Some(l) if classify_multipliers(&l) == OrbitKind::Sink => RegimeReport {
                    param_a: cfg.map.a,
                    regime: Regime::Sink,
                    detail: format!("period {p}"),
                    sink: Some(SinkRecord {
                        period: p,
                        points: trace.points[trace.points.len() - p..].to_vec(),
                        multipliers: l,
                    }),
                },
                _ => RegimeReport {
                    param_a: cfg.map.a,
                    regime: Regime::Inconclusive,
                    detail: format!("tail repeats with period {p} but is not attracting"),
                    sink: None,
                },
            }
        }
        (None, None) => RegimeReport {
            param_a: cfg.map.a,
            regime: Regime::Inconclusive,
            detail: format!("no repeat within period {MAX_PERIOD}; finite-time exponent {:.6}", trace.lyapunov.unwrap_or(f64::NAN)),
            sink: None,
        },
    };
    let body = json!({
        "regime": regime,
        "trace": {
            "csv": "orbit.csv",
            "seed": seed,
            "length": trace.points.len(),
            "escaped_at": trace.escaped_at,
            "lyapunov": trace.lyapunov,
        },
    });
    let js = output::json(cfg, "orbit.json", &body)?;
    let negative = trace.escaped_at.is_some();
    Ok(Outcome { summary: regime.summary_line(), artifacts: vec![csv, js], negative })
}

fn attractor(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let seeds = seed_lattice(&cfg.map, cfg.seeds, cfg.rng_seed);
    let sample = attractor_sample_with(&cfg.map, cfg.burn_in, cfg.keep, &seeds)?;
    let rows = sample.points.iter().map(|p| [num(p.theta), num(p.z)]);
    let csv = output::csv(cfg, "attractor.csv", &["theta", "z"], rows)?;
    let distinct = sample.distinct_points();
    let body = json!({
        "csv": "attractor.csv",
        "seeds": sample.seeds,
        "surviving_seeds": sample.surviving_seeds,
        "points": sample.points.len(),
        "distinct_points": distinct,
        "bounding_box": sample.bounding_box(),
    });
    let js = output::json(cfg, "attractor.json", &body)?;
    done(
        format!("attractor: {} points ({distinct} distinct) from {} of {} seeds", sample.points.len(), sample.surviving_seeds, sample.seeds),
        vec![csv, js],
    )
}

fn lyapunov(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let seed = default_start(cfg)?;
    let est = lyapunov_exponent(&cfg.map, seed, cfg.n)?;
    let js = output::json(cfg, "lyapunov.json", &json!({ "seed": seed, "estimate": est }))?;
    done(format!("lyapunov: {:.6} ± {:.2e} over {} iterations", est.exponent, est.std_error, est.iterations), vec![js])
}

fn fixed_points(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let range = cfg.m_range.map_or_else(|| feasible_windings(&cfg.map), |(lo, hi)| lo..=hi);
    let records = find_fixed_points(&cfg.map, range)?;
    let rows = records.iter().map(|r| {
        [
            r.winding_m.to_string(),
            num(r.point.theta),
            num(r.point.z),
            num(r.f_value),
            num(r.multipliers[0].re),
            num(r.multipliers[0].im),
            num(r.multipliers[1].re),
            num(r.multipliers[1].im),
            r.kind.as_str().to_string(),
        ]
    });
    let columns = ["m", "theta", "z", "F", "lambda1_re", "lambda1_im", "lambda2_re", "lambda2_im", "kind"];
    let csv = output::csv(cfg, "fixed_points.csv", &columns, rows)?;
    let periodic = if cfg.period > 1 { Some(find_periodic_orbits(&cfg.map, cfg.period, cfg.seeds)?) } else { None };
    let count = |k: OrbitKind| records.iter().filter(|r| r.kind == k).count();
    let js = output::json(cfg, "fixed_points.json", &json!({ "fixed_points": records, "periodic_orbits": periodic }))?;
    let mut summary = format!(
        "fixed points: {} (sinks {}, saddles {}, sources {})",
        records.len(),
        count(OrbitKind::Sink),
        count(OrbitKind::Saddle),
        count(OrbitKind::Source)
    );
    if let Some(p) = &periodic {
        summary.push_str(&format!("; period-{} orbits: {}", cfg.period, p.len()));
    }
    let negative = records.is_empty() && periodic.as_ref().is_none_or(|p| p.is_empty());
    Ok(Outcome { summary, artifacts: vec![csv, js], negative })
}

fn certify(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let rep = certify_horseshoe(&cfg.map, cfg.cones, cfg.sampling)?;
    let regime = if rep.certified {
        RegimeReport { param_a: cfg.map.a, regime: Regime::HorseshoeCertified, detail: String::new(), sink: None }
    } else {
        RegimeReport {
            param_a: cfg.map.a,
            regime: Regime::Inconclusive,
            detail: format!(
                "not certified: fold_in_u = {}, cone_h_ok = {}, cone_v_ok = {}",
                rep.fold_in_u, rep.cone_h_ok, rep.cone_v_ok
            ),
            sink: None,
        }
    };
    let js = output::json(cfg, "certify.json", &json!({ "regime": regime, "certificate": rep }))?;
    done(regime.summary_line(), vec![js])
}

fn scan(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let res = scan_parameter(&cfg.map, cfg.a_range, cfg.steps, cfg.cones, cfg.sampling)?;
    let rows = res.points.iter().map(|p| {
        [num(p.a), p.certified.to_string(), num(p.fold_margin), num(p.cone_h_margin), num(p.cone_v_margin)]
    });
    let csv = output::csv(cfg, "scan.csv", &["a", "certified", "fold_margin", "cone_h_margin", "cone_v_margin"], rows)?;
    let certified = res.intervals.iter().filter(|i| i.certified).count();
    let js = output::json(cfg, "scan.json", &json!({ "csv": "scan.csv", "intervals": res.intervals }))?;
    done(
        format!(
            "scan: {certified} certified and {} uncertified intervals over a in [{}, {}]",
            res.intervals.len() - certified,
            cfg.a_range.0,
            cfg.a_range.1
        ),
        vec![csv, js],
    )
}

fn curve_csv(cfg: &RunConfig, name: &str, c: &CurveSample) -> Result<Artifact, CliError> {
    let rows = c.points.iter().zip(&c.arclength).map(|(p, s)| [num(*s), num(p.theta), num(p.z)]);
    output::csv(cfg, name, &["s", "theta", "z"], rows)
}

fn tangency(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let (a0, a1) = cfg.a_range;
    let da = (a1 - a0) / (cfg.steps - 1) as f64;
    let grid: Vec<(f64, Option<f64>)> = (0..cfg.steps)
        .into_par_iter()
        .map(|i| {
            let a = a0 + da * i as f64;
            (a, gap_at(&cfg.map, cfg.saddle_m, a).ok())
        })
        .collect();
    // sign changes of the gap that are roots rather than jumps of the wrap
    let brackets = grid.windows(2).filter_map(|w| match (w[0], w[1]) {
        ((lo, Some(g0)), (hi, Some(g1))) if g0.signum() != g1.signum() && g0.abs() + g1.abs() < 1.0 => Some((lo, hi)),
        _ => None,
    });
    let mut last_err = None;
    let mut report = None;
    for br in brackets {
        match find_tangency(&cfg.map, cfg.saddle_m, br) {
            Ok(r) => {
                report = Some(r);
                break;
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some(rep) = report else {
        return Err(match last_err {
            Some(e) => e.into(),
            None => Analysis::Negative(format!("the gap has no sign change on [{a0}, {a1}] for saddle m = {}", cfg.saddle_m)),
        });
    };
    let at = cfg.map.with_a(rep.a_star);
    let saddle = saddle_for(&at, cfg.saddle_m)?;
    let count = |a: f64| -> Result<usize, Analysis> {
        let p = cfg.map.with_a(a);
        Ok(local_intersections(&p, &saddle_for(&p, cfg.saddle_m)?, 2000)?)
    };
    let (below, above) = (count(rep.a_star - 1e-3)?, count(rep.a_star + 1e-3)?);
    let ws = stable_curve(&at, &saddle, DEFAULT_ORDER, cfg.curve_half_length, cfg.curve_step)?;
    let wu = unstable_curve(&at, &saddle, cfg.unstable_iterations, cfg.seed_radius)?;
    let regime = RegimeReport {
        param_a: rep.a_star,
        regime: Regime::TangencyCandidate,
        detail: format!("a* = {:.10}, m = {}, gap = {:.1e}", rep.a_star, rep.saddle_m, rep.gap),
        sink: None,
    };
    let body = json!({
        "regime": regime,
        "tangency": rep,
        "local_intersections": { "a_minus_1e-3": below, "a_plus_1e-3": above },
        "stable_curve": { "csv": "stable_curve.csv", "points": ws.points.len(), "truncated": ws.truncated, "max_dtheta_dz": ws.max_dtheta_dz() },
        "unstable_curve": { "csv": "unstable_curve.csv", "points": wu.points.len(), "truncated": wu.truncated },
    });
    let js = output::json(cfg, "tangency.json", &body)?;
    done(
        regime.summary_line(),
        vec![js, curve_csv(cfg, "stable_curve.csv", &ws)?, curve_csv(cfg, "unstable_curve.csv", &wu)?],
    )
}

struct Derived {
    system: OdeSystem,
    orbit: HomoclinicOrbitData,
    constants: DerivedConstants,
    params: MapParams,
    warnings: Vec<String>,
}

fn derive(cfg: &RunConfig) -> Result<Derived, Analysis> {
    let system = cfg.ode.build(&cfg.map.forcing);
    let mut warnings = system.validate()?;
    let orbit = compute_homoclinic_orbit(&system, cfg.ode.shoot_tol)?;
    let constants = melnikov_integrals(&orbit, &system)?;
    let (params, w) = derive_map_params(&system, &constants)?;
    warnings.extend(w);
    for w in &warnings {
        eprintln!("tangle: warning: {w}");
    }
    Ok(Derived { system, orbit, constants, params, warnings })
}

fn melnikov(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let d = derive(cfg)?;
    let o = &d.orbit;
    let rows = o.rows().map(|r| r.map(num));
    let csv = output::csv(cfg, "homoclinic.csv", &["s", "x", "y", "u", "v", "E", "H"], rows)?;
    let (alpha_fit, beta_fit) = o.decay_rates();
    let body = json!({
        "orbit": {
            "csv": "homoclinic.csv",
            "points": o.len(),
            "step": o.step,
            "closure_residual": o.residual,
            "family_parameter": o.family_parameter,
            "l_plus": o.l_plus,
            "l_minus": o.l_minus,
            "epsilon": o.epsilon,
            "decay_rate_alpha": alpha_fit,
            "decay_rate_beta": beta_fit,
            "sigma_plus": o.sigma_plus,
            "sigma_minus": o.sigma_minus,
        },
        "constants": d.constants,
        "e_integral": e_integral_convergence(o, 1e-6).ok(),
        "map": d.params,
        "mu": d.system.mu,
        "warnings": d.warnings,
    });
    let js = output::json(cfg, "melnikov.json", &body)?;
    let p = &d.params;
    done(
        format!("derived map: a = {:.6}, b = {:.6e}, c = {:.6}, d = {:.6}, gamma = {:.6}, k = {:.6e}", p.a, p.b, p.c, p.d, p.gamma, p.k),
        vec![csv, js],
    )
}

fn validate(cfg: &RunConfig) -> Result<Outcome, Analysis> {
    let d = derive(cfg)?;
    let rep = validate_return_map(&d.system, &d.orbit, &d.constants, cfg.ode.samples, cfg.rng_seed)?;
    let js = output::json(cfg, "validate.json", &json!({ "map": d.params, "report": rep, "warnings": d.warnings }))?;
    done(
        format!(
            "validation: classification agreement {:.4} at mu = {:e} ({} samples, {} escapes, {} failures; median |dtheta1| {:.2e})",
            rep.agreement,
            rep.mu,
            rep.samples.len(),
            rep.escape_set.len(),
            rep.failures,
            rep.median_angular_discrepancy
        ),
        vec![js],
    )
}
