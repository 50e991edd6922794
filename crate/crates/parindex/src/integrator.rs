//! Dormand–Prince 5(4) with Hairer's continuous extension and sign-change event location.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_init: Option<f64>,
    pub max_steps: usize,
    /// Event times are bisected to this width.
    pub event_tol: f64,
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Options { rtol: tol, atol: tol, ..Default::default() }
    }
}

impl Default for Options {
    fn default() -> Self {
        Options { rtol: 1e-10, atol: 1e-10, h_max: 0.5, h_init: None, max_steps: 2_000_000, event_tol: 1e-12 }
    }
}

pub struct Event<'a, const N: usize> {
    pub g: Box<dyn Fn(f64, &[f64; N]) -> f64 + 'a>,
    pub terminal: bool,
    /// +1: only rising zeros, −1: only falling, 0: both.
    pub direction: i8,
}

impl<'a, const N: usize> Event<'a, N> {
    pub fn new(g: impl Fn(f64, &[f64; N]) -> f64 + 'a) -> Self {
        Event { g: Box::new(g), terminal: false, direction: 0 }
    }

    pub fn terminal(mut self) -> Self {
        self.terminal = true;
        self
    }

    pub fn rising(mut self) -> Self {
        self.direction = 1;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventHit<const N: usize> {
    pub index: usize,
    pub t: f64,
    pub y: [f64; N],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Completed,
    Terminated,
}

#[derive(Clone, Debug)]
struct DenseStep<const N: usize> {
    t0: f64,
    h: f64,
    rc: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let mut y = [0.0; N];
        for i in 0..N {
            let r = &self.rc;
            y[i] = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
        }
        y
    }
}

/// Integrated solution with dense output over [t_first, t_last] (either orientation).
#[derive(Clone, Debug)]
pub struct Solution<const N: usize> {
    pub t: Vec<f64>,
    pub y: Vec<[f64; N]>,
    pub events: Vec<EventHit<N>>,
    pub status: Status,
    steps: Vec<DenseStep<N>>,
    /// Right end of the last step (may cut the step short after a terminal event).
    t_end: f64,
}

impl<const N: usize> Solution<N> {
    pub fn t_first(&self) -> f64 {
        self.t[0]
    }

    pub fn t_last(&self) -> f64 {
        self.t_end
    }

    pub fn y_last(&self) -> [f64; N] {
        *self.y.last().expect("non-empty solution")
    }

    pub fn forward(&self) -> bool {
        self.t_end >= self.t[0]
    }

    pub fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.forward() { (self.t[0], self.t_end) } else { (self.t_end, self.t[0]) };
        t >= a - 1e-12 && t <= b + 1e-12
    }

    /// Dense-output value; arguments outside the range are clamped to the nearest end.
    pub fn eval(&self, t: f64) -> [f64; N] {
        if self.steps.is_empty() {
            return self.y[0];
        }
        let fwd = self.forward();
        // steps are ordered by t0 along the integration direction
        let k = self.steps.partition_point(|s| if fwd { s.t0 <= t } else { s.t0 >= t });
        let idx = k.saturating_sub(1);
        let st = &self.steps[idx];
        let tt = if fwd { t.clamp(self.t[0], self.t_end) } else { t.clamp(self.t_end, self.t[0]) };
        st.eval(tt)
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

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Integrates y' = f(t, y) from t0 to t_end (t_end < t0 integrates backward).
pub fn integrate<const N: usize, F>(
    mut f: F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    opts: &Options,
    events: &[Event<'_, N>],
) -> Result<Solution<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if !(t0.is_finite() && t_end.is_finite()) {
        return Err(Error::InvalidArgument("integration span must be finite".into()));
    }
    let mut sol = Solution {
        t: vec![t0],
        y: vec![y0],
        events: Vec::new(),
        status: Status::Completed,
        steps: Vec::new(),
        t_end: t0,
    };
    if t_end == t0 {
        return Ok(sol);
    }
    let dir = (t_end - t0).signum();
    let span = (t_end - t0).abs();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    let norm = |v: &[f64; N], yref: &[f64; N]| -> f64 {
        let s: f64 = (0..N)
            .map(|i| {
                let sc = opts.atol + opts.rtol * yref[i].abs();
                (v[i] / sc).powi(2)
            })
            .sum();
        (s / N as f64).sqrt()
    };
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => {
            let d0 = norm(&y, &y);
            let d1 = norm(&k1, &y);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(opts.h_max).min(span)
        }
    };
    let mut g_prev: Vec<f64> = events.iter().map(|e| (e.g)(t, &y)).collect();
    let mut steps = 0usize;
    let mut rhs_failures = 0u32;
    while (t_end - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::StepSizeUnderflow { tau: t });
        }
        h = h.min(opts.h_max);
        let tiny = 1e-14 * t.abs().max(1.0);
        if h < tiny {
            return Err(Error::StepSizeUnderflow { tau: t });
        }
        let last = h >= (t_end - t).abs();
        let hs = if last { t_end - t } else { dir * h };
        let stage = (|| -> Result<_> {
            let k2 = f(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]))?;
            let k3 = f(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = f(t + C4 * hs, &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
            let k5 = f(t + C5 * hs, &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]))?;
            let y6 = axpy(&y, hs, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
            let k6 = f(t + hs, &y6)?;
            let y1 = axpy(&y, hs, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = f(t + hs, &y1)?;
            Ok((k2, k3, k4, k5, k6, k7, y1))
        })();
        let (_k2, k3, k4, k5, k6, k7, y1) = match stage {
            Ok(v) => {
                rhs_failures = 0;
                v
            }
            Err(e) => {
                rhs_failures += 1;
                h *= 0.25;
                if h < tiny || rhs_failures > 60 {
                    return Err(match e {
                        Error::SingularAngle { .. } => Error::StepSizeUnderflow { tau: t },
                        other => other,
                    });
                }
                continue;
            }
        };
        let mut err = [0.0; N];
        for i in 0..N {
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let mut yref = [0.0; N];
        for i in 0..N {
            yref[i] = y[i].abs().max(y1[i].abs());
        }
        let en = norm(&err, &yref);
        if !en.is_finite() {
            h *= 0.2;
            continue;
        }
        if en > 1.0 {
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            continue;
        }
        let mut rc = [[0.0; N]; 5];
        for i in 0..N {
            rc[0][i] = y[i];
            rc[1][i] = y1[i] - y[i];
            rc[2][i] = hs * k1[i] - rc[1][i];
            rc[3][i] = rc[1][i] - hs * k7[i] - rc[2][i];
            rc[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        let step = DenseStep { t0: t, h: hs, rc };
        let t1 = if last { t_end } else { t + hs };
        // events
        let mut stop: Option<(f64, [f64; N])> = None;
        for (ei, ev) in events.iter().enumerate() {
            let g1 = (ev.g)(t1, &y1);
            let g0 = g_prev[ei];
            let rising = g0 < 0.0 && g1 >= 0.0;
            let falling = g0 > 0.0 && g1 <= 0.0;
            let hit = match ev.direction {
                1 => rising,
                -1 => falling,
                _ => rising || falling,
            };
            if hit {
                let (mut a, mut b) = (t, t1);
                let pos0 = g0 > 0.0;
                while (b - a).abs() > opts.event_tol {
                    let m = 0.5 * (a + b);
                    let gm = (ev.g)(m, &step.eval(m));
                    if (gm > 0.0) == pos0 && gm != 0.0 {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                let te = b;
                let ye = step.eval(te);
                sol.events.push(EventHit { index: ei, t: te, y: ye });
                if ev.terminal {
                    let earlier = match stop {
                        None => true,
                        Some((ts, _)) => (te - ts) * dir < 0.0,
                    };
                    if earlier {
                        stop = Some((te, ye));
                    }
                }
            }
            g_prev[ei] = g1;
        }
        sol.steps.push(step);
        if let Some((te, ye)) = stop {
            sol.events.retain(|e| (e.t - te) * dir <= 0.0);
            sol.t.push(te);
            sol.y.push(ye);
            sol.t_end = te;
            sol.status = Status::Terminated;
            return Ok(sol);
        }
        t = t1;
        y = y1;
        sol.t.push(t);
        sol.y.push(y);
        sol.t_end = t;
        k1 = k7;
        h *= (0.9 * en.max(1e-10).powf(-0.2)).min(5.0);
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_and_dense_output() {
        let sol = integrate(|_, y: &[f64; 1]| Ok([y[0]]), 0.0, [1.0], 3.0, &Options::with_tol(1e-12), &[]).unwrap();
        assert!((sol.y_last()[0] - 3f64.exp()).abs() < 1e-9);
        for j in 0..30 {
            let t = 0.1 * j as f64;
            assert!((sol.eval(t)[0] - t.exp()).abs() < 1e-9 * t.exp());
        }
    }

    #[test]
    fn backward_integration() {
        let sol = integrate(|_, y: &[f64; 2]| Ok([y[1], -y[0]]), 0.0, [0.0, 1.0], -4.0, &Options::with_tol(1e-12), &[])
            .unwrap();
        assert!((sol.eval(-2.5)[0] - (-2.5f64).sin()).abs() < 1e-9);
        assert!((sol.y_last()[1] - (-4f64).cos()).abs() < 1e-9);
    }

    #[test]
    fn zero_field_is_constant() {
        let sol = integrate(|_, _y: &[f64; 3]| Ok([0.0; 3]), 0.0, [1.0, -2.0, 3.5], 10.0, &Options::default(), &[])
            .unwrap();
        assert!(sol.y.iter().all(|y| *y == [1.0, -2.0, 3.5]));
    }

    #[test]
    fn events_are_located() {
        let ev = [Event::new(|_, y: &[f64; 2]| y[0]), Event::new(|t, _y: &[f64; 2]| t - 7.5).terminal()];
        let sol = integrate(|_, y: &[f64; 2]| Ok([y[1], -y[0]]), 0.0, [0.0, 1.0], 20.0, &Options::with_tol(1e-12), &ev)
            .unwrap();
        let zeros: Vec<f64> = sol.events.iter().filter(|e| e.index == 0).map(|e| e.t).collect();
        assert_eq!(zeros.len(), 2);
        for (k, z) in zeros.iter().enumerate() {
            assert!((z - std::f64::consts::PI * (k + 1) as f64).abs() < 1e-9);
        }
        assert_eq!(sol.status, Status::Terminated);
        assert!((sol.t_last() - 7.5).abs() < 1e-10);
    }
}
