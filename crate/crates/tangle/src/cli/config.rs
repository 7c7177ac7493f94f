//! Flat `key = value` run configuration with flag overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::CliError;
use crate::horseshoe_certifier::{ConeSpec, Sampling};
use crate::map_core::{ForcingProfile, MapParams};
use crate::melnikov_bridge::{OdeSystem, Poly2, PolynomialTerms};
use crate::numeric::TAU;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "TANGLE_OUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    EscapeMap,
    Orbit,
    Attractor,
    Lyapunov,
    FixedPoints,
    Certify,
    Scan,
    Tangency,
    Melnikov,
    Validate,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::EscapeMap,
        Command::Orbit,
        Command::Attractor,
        Command::Lyapunov,
        Command::FixedPoints,
        Command::Certify,
        Command::Scan,
        Command::Tangency,
        Command::Melnikov,
        Command::Validate,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::EscapeMap => "escape-map",
            Command::Orbit => "orbit",
            Command::Attractor => "attractor",
            Command::Lyapunov => "lyapunov",
            Command::FixedPoints => "fixed-points",
            Command::Certify => "certify",
            Command::Scan => "scan",
            Command::Tangency => "tangency",
            Command::Melnikov => "melnikov",
            Command::Validate => "validate",
        }
    }

    /// Base name of the artifacts the command writes.
    pub fn stem(&self) -> String {
        self.as_str().replace('-', "_")
    }

    fn default_n(&self) -> usize {
        match self {
            Command::EscapeMap => 15,
            Command::Lyapunov => 100_000,
            _ => 1000,
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|c| c.as_str()).collect();
            format!("unknown command `{s}` (expected one of {})", names.join(", "))
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a setting came from, for line-precise messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { name: String, line: usize },
    Flag { index: usize },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { name, line } => write!(f, "{name}:{line}"),
            Origin::Flag { index } => write!(f, "argument {index}"),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Raw settings before typing: later sources override earlier ones.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    entries: BTreeMap<String, Entry>,
}

impl Settings {
    /// Parses config-file text: one `key = value` per line, `#` starts a comment.
    pub fn parse_file(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let origin = Origin::File { name: name.to_string(), line: i + 1 };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = split_pair(line).ok_or_else(|| CliError::parse(&origin, format!("expected `key = value`, found `{line}`")))?;
            if seen.insert(k.clone(), i + 1).is_some() {
                return Err(CliError::parse(&origin, format!("duplicate key `{k}`")));
            }
            self.entries.insert(k, Entry { value: v, origin });
        }
        Ok(())
    }

    /// Applies command-line tokens: `key=value`, or a bare command name.
    pub fn apply_flags<S: AsRef<str>>(&mut self, args: &[S]) -> Result<(), CliError> {
        for (i, a) in args.iter().enumerate() {
            let a = a.as_ref().trim();
            let origin = Origin::Flag { index: i + 1 };
            match split_pair(a) {
                Some((k, v)) => {
                    self.entries.insert(k, Entry { value: v, origin });
                }
                None if !a.contains('=') && a.parse::<Command>().is_ok() => {
                    self.entries.insert("command".into(), Entry { value: a.to_string(), origin });
                }
                None => return Err(CliError::parse(&origin, format!("expected `key=value` or a command, found `{a}`"))),
            }
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, origin: Origin) {
        self.entries.insert(key.into(), Entry { value: value.into(), origin });
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }
}

fn split_pair(s: &str) -> Option<(String, String)> {
    let (k, v) = s.split_once('=')?;
    let k = k.trim();
    let v = v.trim();
    let valid = !k.is_empty() && k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    (valid && !v.is_empty()).then(|| (k.to_string(), v.to_string()))
}

/// Typed reads that consume entries and record the effective value.
struct Reader {
    entries: BTreeMap<String, Entry>,
    echo: Vec<(String, String)>,
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.entries.remove(key)
    }

    fn record(&mut self, key: &str, value: impl fmt::Display) {
        self.echo.push((key.to_string(), value.to_string()));
    }

    fn parsed<T: FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: fmt::Display,
        T::Err: fmt::Display,
    {
        let v = match self.take(key) {
            Some(e) => e.value.parse::<T>().map_err(|err| CliError::parse(&e.origin, format!("`{key}`: {err}")))?,
            None => default,
        };
        self.record(key, &v);
        Ok(v)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v: f64 = self.parsed(key, default)?;
        if !v.is_finite() {
            return Err(CliError::Precondition(format!("`{key}` must be finite")));
        }
        Ok(v)
    }

    fn usize(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        self.parsed(key, default)
    }

    /// `auto` or a parsed value.
    fn auto<T: FromStr + fmt::Display>(&mut self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: fmt::Display,
    {
        let v = match self.take(key) {
            Some(e) if e.value == "auto" => None,
            Some(e) => Some(e.value.parse::<T>().map_err(|err| CliError::parse(&e.origin, format!("`{key}`: {err}")))?),
            None => None,
        };
        match &v {
            Some(x) => self.record(key, x),
            None => self.record(key, "auto"),
        }
        Ok(v)
    }

    /// A `n:c, n:c` harmonic table.
    fn harmonics(&mut self, key: &str) -> Result<Option<Vec<(usize, f64)>>, CliError> {
        let Some(e) = self.take(key) else { return Ok(None) };
        let mut out = Vec::new();
        for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (n, c) = item
                .split_once(':')
                .and_then(|(n, c)| Some((n.trim().parse::<usize>().ok()?, c.trim().parse::<f64>().ok()?)))
                .ok_or_else(|| CliError::parse(&e.origin, format!("`{key}`: expected `n:coefficient`, found `{item}`")))?;
            out.push((n, c));
        }
        self.record(key, format_pairs(&out));
        Ok(Some(out))
    }

    /// A `i:j:c, i:j:c` polynomial table for c·xⁱyʲ.
    fn poly(&mut self, key: &str) -> Result<Option<Poly2>, CliError> {
        let Some(e) = self.take(key) else { return Ok(None) };
        let mut terms = Vec::new();
        for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parts: Vec<&str> = item.split(':').map(str::trim).collect();
            let t = (parts.len() == 3)
                .then(|| Some((parts[0].parse::<u32>().ok()?, parts[1].parse::<u32>().ok()?, parts[2].parse::<f64>().ok()?)))
                .flatten()
                .ok_or_else(|| CliError::parse(&e.origin, format!("`{key}`: expected `i:j:coefficient`, found `{item}`")))?;
            terms.push(t);
        }
        let p = Poly2::new(terms);
        let text: Vec<String> = p.terms().iter().map(|(i, j, c)| format!("{i}:{j}:{c}")).collect();
        self.record(key, if text.is_empty() { "0".to_string() } else { text.join(", ") });
        Ok(Some(p))
    }

    fn finish(self) -> Result<Vec<(String, String)>, CliError> {
        if let Some((k, e)) = self.entries.into_iter().next() {
            return Err(CliError::parse(&e.origin, format!("unknown key `{k}`")));
        }
        Ok(self.echo)
    }
}

fn format_pairs(p: &[(usize, f64)]) -> String {
    p.iter().map(|(n, c)| format!("{n}:{c}")).collect::<Vec<_>>().join(", ")
}

/// Named forcing shorthands.
fn forcing_alias(name: &str) -> Option<Vec<(usize, f64)>> {
    match name {
        "sin" => Some(vec![(1, 1.0)]),
        "sin+sin2" => Some(vec![(1, 1.0), (2, 1.0)]),
        "sin+sin3" => Some(vec![(1, 1.0), (3, 1.0)]),
        _ => None,
    }
}

#[derive(Debug, Clone)]
pub enum SystemSpec {
    Folium { alpha: f64, beta: f64 },
    Duffing { delta: f64 },
    Polynomial { alpha: f64, beta: f64, terms: PolynomialTerms },
}

#[derive(Debug, Clone)]
pub struct OdeSpec {
    pub system: SystemSpec,
    pub omega: f64,
    pub rho: Option<f64>,
    pub mu: f64,
    pub epsilon: f64,
    pub shoot_tol: f64,
    pub samples: usize,
}

impl OdeSpec {
    pub fn build(&self, forcing: &ForcingProfile) -> OdeSystem {
        let mut s = match &self.system {
            SystemSpec::Folium { alpha, beta } => OdeSystem::folium(*alpha, *beta),
            SystemSpec::Duffing { delta } => OdeSystem::duffing(*delta),
            SystemSpec::Polynomial { alpha, beta, terms } => OdeSystem::new(*alpha, *beta, Arc::new(terms.clone())),
        };
        s.forcing = forcing.clone();
        s.omega = self.omega;
        s.rho = self.rho;
        s.mu = self.mu;
        s.epsilon = self.epsilon;
        s
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub map: MapParams,
    /// Iterations (escape depth, orbit length, Lyapunov length).
    pub n: usize,
    pub theta_res: usize,
    pub z_res: usize,
    pub burn_in: usize,
    pub keep: usize,
    pub seeds: usize,
    pub start: Option<(f64, f64)>,
    pub m_range: Option<(i64, i64)>,
    pub period: usize,
    pub cones: ConeSpec,
    pub sampling: Sampling,
    pub a_range: (f64, f64),
    pub steps: usize,
    pub saddle_m: i64,
    pub curve_half_length: f64,
    pub curve_step: f64,
    pub unstable_iterations: usize,
    pub seed_radius: f64,
    pub ode: OdeSpec,
    pub rng_seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    /// Effective settings (excluding threads and out_dir) in read order.
    pub effective: Vec<(String, String)>,
}

impl RunConfig {
    /// Types and validates `settings`; `env_out_dir` replaces an `out_dir`
    /// that came from a file but not one given as a flag.
    pub fn from_settings(settings: Settings, env_out_dir: Option<PathBuf>) -> Result<Self, CliError> {
        let mut r = Reader { entries: settings.entries, echo: Vec::new() };
        let command = match r.take("command") {
            Some(e) => e.value.parse::<Command>().map_err(|m| CliError::parse(&e.origin, m))?,
            None => return Err(CliError::Parse("no command given (e.g. `command = escape-map`)".into())),
        };
        r.record("command", command);

        let threads = r.take("threads").map(|e| e.value.parse::<usize>().map_err(|err| CliError::parse(&e.origin, format!("`threads`: {err}")))).transpose()?.unwrap_or(0);
        let out_dir = match (r.take("out_dir"), env_out_dir) {
            (Some(e), _) if matches!(e.origin, Origin::Flag { .. }) => PathBuf::from(e.value),
            (_, Some(env)) => env,
            (Some(e), None) => PathBuf::from(e.value),
            (None, None) => PathBuf::from("."),
        };

        let reference = MapParams::reference(0.2);
        let a = r.f64("a", reference.a)?;
        let b = r.f64("b", reference.b)?;
        let c = r.f64("c", reference.c)?;
        let d = r.f64("d", reference.d)?;
        let gamma = r.f64("gamma", reference.gamma)?;
        let k = r.f64("k", 1.0)?;
        let escape_floor = r.f64("escape_floor", 0.0)?;
        let phi = r.take("phi");
        let fs = r.harmonics("fourier_sin")?;
        let fc = r.harmonics("fourier_cos")?;
        let forcing = match (phi, fs, fc) {
            (Some(e), None, None) => {
                let table = forcing_alias(&e.value).ok_or_else(|| {
                    CliError::parse(&e.origin, format!("unknown `phi` alias `{}` (sin, sin+sin2, sin+sin3)", e.value))
                })?;
                r.record("phi", &e.value);
                ForcingProfile::from_harmonics(&table, &[])?
            }
            (Some(e), _, _) => {
                return Err(CliError::parse(&e.origin, "`phi` cannot be combined with fourier_sin/fourier_cos".into()))
            }
            (None, None, None) => {
                r.record("phi", "sin");
                ForcingProfile::sin()
            }
            (None, s, c) => ForcingProfile::from_harmonics(&s.unwrap_or_default(), &c.unwrap_or_default())?,
        };
        let map = MapParams::new(a, b, c, d, gamma)?.with_k(k)?.with_forcing(forcing)?.with_escape_floor(escape_floor)?;

        let n = r.usize("n", command.default_n())?;
        let theta_res = r.usize("theta_res", 1000)?;
        let z_res = r.usize("z_res", 1000)?;
        let burn_in = r.usize("burn_in", 1000)?;
        let keep = r.usize("keep", 100)?;
        let seeds = r.usize("seeds", 10_000)?;
        let theta0: Option<f64> = r.auto("theta0")?;
        let z0: Option<f64> = r.auto("z0")?;
        let start = match (theta0, z0) {
            (Some(t), Some(z)) => Some((t, z)),
            (None, None) => None,
            _ => return Err(CliError::Precondition("theta0 and z0 must be given together".into())),
        };
        let m_min: Option<i64> = r.auto("m_min")?;
        let m_max: Option<i64> = r.auto("m_max")?;
        let m_range = match (m_min, m_max) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(CliError::Precondition("m_min and m_max must be given together".into())),
        };
        let period = r.usize("period", 1)?;
        let cones = ConeSpec { horizontal_bound: r.f64("cone_h", 0.01)?, vertical_bound: r.f64("cone_v", 100.0)? };
        let defaults = Sampling::default();
        let sampling = Sampling {
            v_theta: r.usize("v_theta", defaults.v_theta)?,
            v_z: r.usize("v_z", defaults.v_z)?,
            vf: r.usize("vf", defaults.vf)?,
        };
        let a_range = (r.f64("a_min", 0.0)?, r.f64("a_max", TAU)?);
        let steps = r.usize("steps", 101)?;
        let saddle_m = r.parsed("m", 15i64)?;
        let curve_half_length = r.f64("curve_half_length", 0.5)?;
        let curve_step = r.f64("curve_step", 0.01)?;
        let unstable_iterations = r.usize("unstable_iterations", 2)?;
        let seed_radius = r.f64("seed_radius", 1e-4)?;

        let system_entry = r.take("system");
        let system_name = system_entry.as_ref().map_or("folium".to_string(), |e| e.value.clone());
        r.record("system", &system_name);
        let system = match system_name.as_str() {
            "folium" => SystemSpec::Folium { alpha: r.f64("alpha", 2f64.sqrt())?, beta: r.f64("beta", 1.0)? },
            "duffing" => SystemSpec::Duffing { delta: r.f64("delta", 0.2)? },
            "polynomial" => {
                let alpha = r.f64("alpha", 2f64.sqrt())?;
                let beta = r.f64("beta", 1.0)?;
                let mut get = |key: &str| -> Result<Poly2, CliError> {
                    r.poly(key)?.ok_or_else(|| CliError::Precondition(format!("system = polynomial needs `{key}`")))
                };
                let terms = PolynomialTerms { f: get("f")?, g: get("g")?, a: get("shape_a")?, b: get("shape_b")? };
                terms.validate()?;
                SystemSpec::Polynomial { alpha, beta, terms }
            }
            other => {
                let origin = system_entry.map(|e| e.origin).unwrap_or(Origin::Flag { index: 0 });
                return Err(CliError::parse(&origin, format!("unknown system `{other}` (folium, duffing, polynomial)")));
            }
        };
        let ode = OdeSpec {
            system,
            omega: r.f64("omega", 2.0)?,
            rho: r.auto("rho")?,
            mu: r.f64("mu", 1e-5)?,
            epsilon: r.f64("epsilon", 0.05)?,
            shoot_tol: r.f64("shoot_tol", 1e-9)?,
            samples: r.usize("samples", 200)?,
        };
        let rng_seed = r.parsed("rng_seed", 0u64)?;
        let effective = r.finish()?;

        let cfg = RunConfig {
            command,
            map,
            n,
            theta_res,
            z_res,
            burn_in,
            keep,
            seeds,
            start,
            m_range,
            period,
            cones,
            sampling,
            a_range,
            steps,
            saddle_m,
            curve_half_length,
            curve_step,
            unstable_iterations,
            seed_radius,
            ode,
            rng_seed,
            threads,
            out_dir,
            effective,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Module preconditions, checked before any work starts.
    fn validate(&self) -> Result<(), CliError> {
        let need = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(CliError::Precondition(msg.into())) };
        need(self.n >= 1, "n ≥ 1 required")?;
        match self.command {
            Command::EscapeMap => need(self.theta_res >= 2 && self.z_res >= 2, "theta_res, z_res ≥ 2 required")?,
            Command::Attractor | Command::Lyapunov => need(self.burn_in >= 1 && self.keep >= 1 && self.seeds >= 1, "burn_in, keep, seeds ≥ 1 required")?,
            Command::FixedPoints => {
                need(self.period >= 1 && self.period <= crate::periodic_orbits::MAX_PERIOD, "1 ≤ period ≤ 32 required")?;
                if let Some((lo, hi)) = self.m_range {
                    need(lo <= hi, "m_min ≤ m_max required")?;
                }
            }
            Command::Certify | Command::Scan => {
                self.cones.validate()?;
                need(self.sampling.v_theta >= 2 && self.sampling.v_z >= 2 && self.sampling.vf >= 4, "sampling counts too small")?;
                need(self.steps >= 2 && self.a_range.0 < self.a_range.1, "steps ≥ 2 and a_min < a_max required")?;
            }
            Command::Tangency => {
                need(self.steps >= 2 && self.a_range.0 < self.a_range.1, "steps ≥ 2 and a_min < a_max required")?;
                need(self.curve_half_length > 0.0 && self.curve_step > 0.0 && self.seed_radius > 0.0, "curve lengths must be positive")?;
            }
            Command::Melnikov | Command::Validate => {
                need(self.ode.shoot_tol > 0.0, "shoot_tol > 0 required")?;
                need(self.ode.mu > 0.0, "mu > 0 required")?;
                need(self.ode.samples >= 1, "samples ≥ 1 required")?;
                self.ode.build(&self.map.forcing).validate()?;
            }
            Command::Orbit => {}
        }
        Ok(())
    }

    /// Canonical `key = value` text of the effective configuration.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.effective {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s
    }

    /// sha256 of [`canonical_text`](Self::canonical_text), hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_text().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, flags: &[&str]) -> Result<RunConfig, CliError> {
        let mut s = Settings::default();
        s.parse_file("run.cfg", text)?;
        s.apply_flags(flags)?;
        RunConfig::from_settings(s, None)
    }

    #[test]
    fn fig8_flags_parse() {
        let c = parse("", &["command=escape-map", "a=0.2", "b=0.005", "c=3", "d=2", "gamma=1.41421356", "n=15"]).unwrap();
        assert_eq!(c.command, Command::EscapeMap);
        assert_eq!(c.n, 15);
        assert_eq!((c.map.a, c.map.b, c.map.c, c.map.d), (0.2, 0.005, 3.0, 2.0));
    }

    #[test]
    fn flags_override_file_and_comments_are_ignored() {
        let c = parse("# run\ncommand = orbit  # trailing\na = 1.0\n\nn = 50\n", &["a=1.5"]).unwrap();
        assert_eq!(c.map.a, 1.5);
        assert_eq!(c.n, 50);
    }

    #[test]
    fn gamma_below_one_is_a_precondition_error() {
        let e = parse("", &["escape-map", "gamma=0.9"]).unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let e = parse("command = orbit\na 0.5\n", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("run.cfg:2"), "{e}");
    }

    #[test]
    fn unknown_key_rejected() {
        let e = parse("command = orbit\nalpha_typo = 1\n", &[]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("alpha_typo") && e.to_string().contains("run.cfg:2"));
    }

    #[test]
    fn phi_alias_expands() {
        let c = parse("", &["orbit", "phi=sin+sin3"]).unwrap();
        assert_eq!(c.map.forcing.fourier_sin, vec![1.0, 0.0, 1.0]);
        assert!(c.map.forcing.fourier_cos.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn explicit_fourier_tables() {
        let c = parse("", &["orbit", "fourier_sin=1:1, 3:0.5", "fourier_cos=2:0.25"]).unwrap();
        assert_eq!(c.map.forcing.fourier_sin, vec![1.0, 0.0, 0.5]);
        assert_eq!(c.map.forcing.fourier_cos, vec![0.0, 0.25]);
    }

    #[test]
    fn hash_ignores_threads_and_out_dir() {
        let a = parse("", &["escape-map", "threads=1", "out_dir=/tmp/x"]).unwrap();
        let b = parse("", &["escape-map", "threads=8", "out_dir=/tmp/y"]).unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse("", &["escape-map", "n=16"]).unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn env_out_dir_beats_file_but_not_flag() {
        let mut s = Settings::default();
        s.parse_file("f", "command = orbit\nout_dir = from_file\n").unwrap();
        let c = RunConfig::from_settings(s.clone(), Some("from_env".into())).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("from_env"));
        s.apply_flags(&["out_dir=from_flag"]).unwrap();
        let c = RunConfig::from_settings(s, Some("from_env".into())).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("from_flag"));
    }

    #[test]
    fn polynomial_system_needs_all_tables() {
        let e = parse("", &["melnikov", "system=polynomial", "f=0:2:1"]).unwrap_err();
        assert_eq!(e.exit_code(), 3);
        let e = parse("", &["melnikov", "system=polynomial", "f=1:0:1", "g=2:0:1", "shape_a=1:1:1", "shape_b=0:2:1"]).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{e}");
    }
}
