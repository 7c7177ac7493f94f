//! Dormand–Prince 5(4) with the standard 4th-order continuous extension and
//! event location on the interpolant.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("too many steps (limit {limit}) at t = {t}")]
    TooManySteps { t: f64, limit: usize },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-20, h_max: 0.1, max_steps: 2_000_000 }
    }
}

/// Crossing direction of an event function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Rising,
    Falling,
    Either,
}

pub struct Event<'a, const N: usize> {
    pub g: Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>,
    pub crossing: Crossing,
    pub terminal: bool,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(g: impl Fn(f64, &[f64; N]) -> f64 + 'a, crossing: Crossing, terminal: bool) -> Self {
        Self { g: Box::new(g), crossing, terminal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit<const N: usize> {
    pub index: usize,
    pub t: f64,
    pub y: [f64; N],
}

/// Interpolant over one accepted step.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let r = &self.rcont;
        std::array::from_fn(|i| r[0][i] + th * (r[1][i] + th1 * (r[2][i] + th * (r[3][i] + th1 * r[4][i]))))
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub dense: Vec<DenseStep<N>>,
    pub events: Vec<EventHit<N>>,
    /// Index of the terminal event that stopped the integration.
    pub stopped_by: Option<usize>,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> (f64, [f64; N]) {
        (*self.t.last().unwrap(), *self.y.last().unwrap())
    }

    /// Interpolated state at `t` within the integrated range.
    pub fn at(&self, t: f64) -> Option<[f64; N]> {
        let forward = self.dense.first().is_none_or(|d| d.h > 0.0);
        let idx = self.dense.partition_point(|d| if forward { d.t1() < t } else { d.t1() > t });
        self.dense.get(idx).map(|d| d.eval(t))
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn comb<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

/// Integrates y' = rhs(t, y) from t0 towards t_end (either direction).
/// Stops at t_end, at the first terminal event, or with an error.
pub fn integrate<const N: usize, F>(
    rhs: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &OdeOptions,
    events: &[Event<N>],
) -> Result<Trajectory<N>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut traj = Trajectory { t: vec![t0], y: vec![y0], dense: Vec::new(), events: Vec::new(), stopped_by: None };
    if span == 0.0 {
        return Ok(traj);
    }
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);
    let mut h = initial_step(&y, &k1, opts).min(opts.h_max).min(span);
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut steps = 0usize;
    let mut fac_old: f64 = 1e-4;
    loop {
        if steps >= opts.max_steps {
            return Err(OdeError::TooManySteps { t, limit: opts.max_steps });
        }
        steps += 1;
        let remaining = (t_end - t).abs();
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(OdeError::StepUnderflow { t });
        }
        let hs = dir * h;
        let k2 = rhs(t + C2 * hs, &comb(&y, hs, &[(A21, &k1)]));
        let k3 = rhs(t + C3 * hs, &comb(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(t + C4 * hs, &comb(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = rhs(t + C5 * hs, &comb(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
        let k6 = rhs(t + hs, &comb(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
        let y1 = comb(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let t1 = if last { t_end } else { t + hs };
        let k7 = rhs(t1, &y1);
        let mut err = 0.0;
        for i in 0..N {
            let e = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / N as f64).sqrt();
        if !err.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            if h < 1e-12 {
                return Err(OdeError::NonFinite { t });
            }
            h *= 0.1;
            continue;
        }
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            continue;
        }
        // accepted: build the continuous extension
        let mut rcont = [[0.0; N]; 5];
        for i in 0..N {
            let ydiff = y1[i] - y[i];
            let bspl = hs * k1[i] - ydiff;
            rcont[0][i] = y[i];
            rcont[1][i] = ydiff;
            rcont[2][i] = bspl;
            rcont[3][i] = ydiff - hs * k7[i] - bspl;
            rcont[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let step = DenseStep { t0: t, h: hs, rcont };
        // events on the interpolant
        let mut terminal_hit: Option<EventHit<N>> = None;
        for (idx, ev) in events.iter().enumerate() {
            let g1 = (ev.g)(t1, &y1);
            let g0 = g_prev[idx];
            let rising = g0 < 0.0 && g1 >= 0.0;
            let falling = g0 > 0.0 && g1 <= 0.0;
            let fire = match ev.crossing {
                Crossing::Rising => rising,
                Crossing::Falling => falling,
                Crossing::Either => rising || falling,
            };
            g_prev[idx] = g1;
            if !fire {
                continue;
            }
            let te = locate(|s| (ev.g)(s, &step.eval(s)), t, t1, g0);
            let hit = EventHit { index: idx, t: te, y: step.eval(te) };
            if ev.terminal {
                if terminal_hit.is_none_or(|h| (h.t - t) * dir > (te - t) * dir) {
                    terminal_hit = Some(hit);
                }
            } else {
                traj.events.push(hit);
            }
        }
        if let Some(hit) = terminal_hit {
            traj.events.retain(|e| (e.t - hit.t) * dir <= 0.0);
            traj.events.push(hit);
            traj.dense.push(step);
            traj.t.push(hit.t);
            traj.y.push(hit.y);
            traj.stopped_by = Some(hit.index);
            return Ok(traj);
        }
        traj.dense.push(step);
        traj.t.push(t1);
        traj.y.push(y1);
        t = t1;
        y = y1;
        k1 = k7;
        if last {
            return Ok(traj);
        }
        // Lund-stabilised step control
        let fac11 = err.powf(0.17);
        let fac = (fac11 / fac_old.powf(0.04) / 0.9).clamp(0.1, 5.0);
        fac_old = err.max(1e-4);
        h = (h / fac).min(opts.h_max);
    }
}

fn initial_step<const N: usize>(y: &[f64; N], f: &[f64; N], opts: &OdeOptions) -> f64 {
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = opts.atol + opts.rtol * y[i].abs();
        dnf += (f[i] / sk).powi(2);
        dny += (y[i] / sk).powi(2);
    }
    let h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
    h.clamp(1e-10, opts.h_max)
}

/// Root of g on [a, b] given g(a) = ga, by Illinois-modified regula falsi.
fn locate(g: impl Fn(f64) -> f64, a: f64, b: f64, ga: f64) -> f64 {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (ga, g(b));
    if fb == 0.0 {
        return b;
    }
    let mut side = 0;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && (c - a) * (c - b) <= 0.0 { c } else { 0.5 * (a + b) };
        let fc = g(c);
        if fc == 0.0 || (b - a).abs() <= 1e-15 * (1.0 + c.abs()) {
            return c;
        }
        if (fc > 0.0) == (fa > 0.0) {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let tr = integrate(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 5.0, &OdeOptions::default(), &[]).unwrap();
        let (t, y) = tr.last();
        assert_eq!(t, 5.0);
        assert!((y[0] - (-5f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_dense_and_backward() {
        let rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let tr = integrate(rhs, 0.0, [1.0, 0.0], 10.0, &OdeOptions::default(), &[]).unwrap();
        for &t in &[0.37, 2.5, 7.77, 9.99] {
            let y = tr.at(t).unwrap();
            assert!((y[0] - t.cos()).abs() < 1e-9, "{t}");
        }
        let back = integrate(rhs, 0.0, [1.0, 0.0], -3.0, &OdeOptions::default(), &[]).unwrap();
        assert!((back.last().1[1] - 3f64.sin()).abs() < 1e-10);
        assert!((back.at(-1.0).unwrap()[0] - 1f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn terminal_event_located() {
        // x(t) = cos t first falls through zero at π/2
        let rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let ev = [Event::new(|_, y: &[f64; 2]| y[0], Crossing::Falling, true)];
        let tr = integrate(rhs, 0.0, [1.0, 0.0], 10.0, &OdeOptions::default(), &ev).unwrap();
        assert_eq!(tr.stopped_by, Some(0));
        assert!((tr.last().0 - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn rising_filter_skips_falling() {
        let rhs = |_: f64, y: &[f64; 2]| [y[1], -y[0]];
        let ev = [Event::new(|_, y: &[f64; 2]| y[0], Crossing::Rising, false)];
        let tr = integrate(rhs, 0.0, [1.0, 0.0], 7.0, &OdeOptions::default(), &ev).unwrap();
        assert_eq!(tr.events.len(), 1);
        assert!((tr.events[0].t - 1.5 * std::f64::consts::PI).abs() < 1e-12);
    }
}
