//! Heteroclinic connections on the collision manifold.
//!
//! An orbit is stored as one integrated piece between the shooting seed and the lock-in point,
//! continued at both ends by the linearized flow at the endpoint equilibria.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_tol, collision_rhs, CollisionState, Trajectory};
use crate::angle::wrap_pi;
use crate::equilibria::{Classification, Equilibrium};
use crate::error::{Error, Result};
use crate::integrator::{integrate, Event, Options, Solution, Status};
use crate::potential::AnglePotential;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum HetType {
    I,
    II,
    III,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Direction {
    EPlus,
    EMinus,
    Spiral,
}

impl Direction {
    fn flipped(self) -> Self {
        match self {
            Direction::EPlus => Direction::EMinus,
            Direction::EMinus => Direction::EPlus,
            Direction::Spiral => Direction::Spiral,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SeedDirection {
    EPlus,
    EMinus,
    Random,
}

/// Which invariant manifold of the seed equilibrium is traced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Manifold {
    /// forward in τ from a source
    Unstable,
    /// backward in τ from a sink
    Stable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ShootOptions {
    pub eps: f64,
    pub eps_lock: f64,
    pub tau_max: f64,
    pub tol: f64,
    pub seed_direction: SeedDirection,
    pub manifold: Manifold,
    pub rng_seed: u64,
    /// Linear continuation past seed and lock-in for node and saddle endpoints.
    pub tail: f64,
    /// Focus endpoints get enough tail for this many u-zeros.
    pub focus_zeros: usize,
    pub richardson: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            eps: 1e-6,
            eps_lock: 1e-6,
            tau_max: 200.0,
            tol: 1e-11,
            seed_direction: SeedDirection::EPlus,
            manifold: Manifold::Unstable,
            rng_seed: 0x5eed,
            tail: 20.0,
            focus_zeros: 60,
            richardson: true,
        }
    }
}

/// Endpoint equilibrium together with the lift (ψ, θ) the orbit converges to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Endpoint {
    pub eq: Equilibrium,
    pub psi: f64,
    pub theta: f64,
}

/// Everything downstream code needs at one τ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrbitPoint {
    pub tau: f64,
    pub psi: f64,
    pub theta: f64,
    pub v: f64,
    pub u: f64,
    pub u_val: f64,
    pub u_theta: f64,
    pub u_theta_theta: f64,
}

#[derive(Clone, Debug)]
struct LinearTail {
    psi0: f64,
    theta0: f64,
    sin_psi0: f64,
    m: Matrix2<f64>,
    tau_ref: f64,
    d_ref: Vector2<f64>,
}

/// exp(sM) for a real 2×2 matrix.
fn expm2(m: &Matrix2<f64>, s: f64) -> Matrix2<f64> {
    let half = m.trace() / 2.0;
    let n = m - Matrix2::identity() * half;
    let q2 = half * half - m.determinant();
    let (c, sh) = if q2 > 1e-300 {
        let q = q2.sqrt();
        ((q * s).cosh(), (q * s).sinh() / q)
    } else if q2 < -1e-300 {
        let w = (-q2).sqrt();
        ((w * s).cos(), (w * s).sin() / w)
    } else {
        (1.0, s)
    };
    (Matrix2::identity() * c + n * sh) * (half * s).exp()
}

impl LinearTail {
    fn offset(&self, tau: f64) -> Vector2<f64> {
        expm2(&self.m, tau - self.tau_ref) * self.d_ref
    }

    fn point(&self, pot: &AnglePotential, tau: f64) -> Result<OrbitPoint> {
        let d = self.offset(tau);
        let theta = self.theta0 + d[1];
        let (u0, u1_direct, u2) = pot.jet(theta)?;
        let u1 = if d[1].abs() < 1e-5 {
            pot.u_theta_theta(self.theta0 + 0.5 * d[1])? * d[1]
        } else {
            u1_direct
        };
        let w = (2.0 * u0).sqrt();
        let (sd, cd) = d[0].sin_cos();
        Ok(OrbitPoint {
            tau,
            psi: self.psi0 + d[0],
            theta,
            v: w * self.sin_psi0 * cd,
            u: -self.sin_psi0 * w * sd,
            u_val: u0,
            u_theta: u1,
            u_theta_theta: u2,
        })
    }
}

#[derive(Clone, Debug)]
struct OrbitCore {
    pot: AnglePotential,
    main: Solution<2>,
    source: Endpoint,
    sink: Endpoint,
    src_tail: LinearTail,
    snk_tail: LinearTail,
    /// main piece spans [tau_lo, tau_hi]
    tau_lo: f64,
    tau_hi: f64,
    range: (f64, f64),
    u_zeros: Vec<f64>,
    meta: serde_json::Value,
}

impl OrbitCore {
    fn point(&self, tau: f64) -> Result<OrbitPoint> {
        if tau < self.tau_lo {
            return self.src_tail.point(&self.pot, tau);
        }
        if tau > self.tau_hi {
            return self.snk_tail.point(&self.pot, tau);
        }
        let y = self.main.eval(tau);
        let (u0, u1, u2) = self.pot.jet(y[1])?;
        let w = (2.0 * u0).sqrt();
        let (s, c) = y[0].sin_cos();
        Ok(OrbitPoint { tau, psi: y[0], theta: y[1], v: w * s, u: w * c, u_val: u0, u_theta: u1, u_theta_theta: u2 })
    }
}

/// Physical radius and time along a zero-energy lift of a collision-manifold orbit.
#[derive(Clone, Debug)]
pub struct Lift {
    pub r0: f64,
    pub tau0: f64,
    log_r: (Solution<1>, Solution<1>),
    t: (Solution<1>, Solution<1>),
    /// t′ = r^{1+α/2} integration stopped (r > 1e8) on the (left, right) side.
    pub t_truncated: (bool, bool),
}

const R_T_MAX: f64 = 1e8;

impl Lift {
    pub fn log_r(&self, tau: f64) -> f64 {
        let s = if tau >= self.tau0 { &self.log_r.1 } else { &self.log_r.0 };
        s.eval(tau)[0]
    }

    /// Physical time with t(τ₀) = 0, where it was integrated.
    pub fn t(&self, tau: f64) -> Option<f64> {
        let s = if tau >= self.tau0 { &self.t.1 } else { &self.t.0 };
        s.contains(tau).then(|| s.eval(tau)[0])
    }

    /// τ-interval on which t(τ) is available.
    pub fn t_domain(&self) -> (f64, f64) {
        (self.t.0.t_last(), self.t.1.t_last())
    }

    /// Inverse of t(τ) by bisection (t is strictly increasing).
    pub fn tau_of_t(&self, t: f64) -> Option<f64> {
        let (a0, b0) = self.t_domain();
        let (ta, tb) = (self.t(a0)?, self.t(b0)?);
        if t < ta || t > tb {
            return None;
        }
        let (mut a, mut b) = (a0, b0);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.t(m)? < t {
                a = m;
            } else {
                b = m;
            }
            if b - a < 1e-13 * (1.0 + m.abs()) {
                break;
            }
        }
        Some(0.5 * (a + b))
    }
}

/// Integrates (log r)′ = v(τ) and t′ = r^{1+α/2} from τ₀ in both directions over `range`.
pub fn lift_profile(
    v: impl Fn(f64) -> f64,
    alpha: f64,
    range: (f64, f64),
    r0: f64,
    tau0: f64,
    tol: f64,
) -> Result<Lift> {
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!("r0 = {r0} must be positive")));
    }
    if tau0 < range.0 || tau0 > range.1 {
        return Err(Error::InvalidArgument("tau0 outside the orbit range".into()));
    }
    let opts = Options { rtol: tol, atol: tol, h_max: 0.5, ..Default::default() };
    let lr0 = r0.ln();
    let f = |t: f64, _y: &[f64; 1]| Ok([v(t)]);
    let fwd = integrate(f, tau0, [lr0], range.1, &opts, &[])?;
    let bwd = integrate(f, tau0, [lr0], range.0, &opts, &[])?;
    let a = 1.0 + alpha / 2.0;
    let lmax = R_T_MAX.ln();
    let run_t = |sol: &Solution<1>, end: f64| -> Result<Solution<1>> {
        let g = |t: f64, _y: &[f64; 1]| sol.eval(t)[0] - lmax;
        let ev = [Event::new(g).terminal().rising()];
        // relative control only: t spans many orders of magnitude
        let o = Options { rtol: tol, atol: 1e-300, h_max: 0.5, ..Default::default() };
        integrate(|t, _y: &[f64; 1]| Ok([(a * sol.eval(t)[0]).exp()]), tau0, [0.0], end, &o, &ev)
    };
    let tf = run_t(&fwd, range.1)?;
    let tb = run_t(&bwd, range.0)?;
    let trunc = (tb.status == Status::Terminated, tf.status == Status::Terminated);
    Ok(Lift { r0, tau0, log_r: (bwd, fwd), t: (tb, tf), t_truncated: trunc })
}

/// A sampled collision-manifold connection between two equilibria.
#[derive(Clone, Debug)]
pub struct HeteroclinicOrbit {
    core: Arc<OrbitCore>,
    reversed: bool,
    pub source: Endpoint,
    pub sink: Endpoint,
    pub het_type: HetType,
    pub source_direction: Direction,
    pub sink_direction: Direction,
    pub lift: Option<Arc<Lift>>,
    pub richardson_agrees: Option<bool>,
    /// Samples for export (accepted steps plus tail samples).
    pub trajectory: Trajectory,
}

impl HeteroclinicOrbit {
    pub fn potential(&self) -> &AnglePotential {
        &self.core.pot
    }

    pub fn alpha(&self) -> f64 {
        self.core.pot.alpha()
    }

    /// τ-range covered (integrated piece plus linear tails).
    pub fn range(&self) -> (f64, f64) {
        let (a, b) = self.core.range;
        if self.reversed {
            (-b, -a)
        } else {
            (a, b)
        }
    }

    /// τ-range of the integrated piece: from the seed to the lock-in point.
    pub fn main_range(&self) -> (f64, f64) {
        let (a, b) = (self.core.tau_lo, self.core.tau_hi);
        if self.reversed {
            (-b, -a)
        } else {
            (a, b)
        }
    }

    pub fn point(&self, tau: f64) -> Result<OrbitPoint> {
        if !self.reversed {
            return self.core.point(tau);
        }
        let p = self.core.point(-tau)?;
        Ok(OrbitPoint { tau, psi: p.psi + PI, v: -p.v, u: -p.u, ..p })
    }

    /// Zeros of u(τ) in the covered range, increasing.
    pub fn u_zeros(&self) -> Vec<f64> {
        if self.reversed {
            self.core.u_zeros.iter().rev().map(|t| -t).collect()
        } else {
            self.core.u_zeros.clone()
        }
    }

    /// Euclidean distance of the orbit at τ from the lifted endpoint.
    pub fn endpoint_distance(&self, tau: f64, sink: bool) -> Result<f64> {
        let p = self.point(tau)?;
        let e = if sink { &self.sink } else { &self.source };
        Ok(((p.psi - e.psi).powi(2) + (p.theta - e.theta).powi(2)).sqrt())
    }

    pub fn log_r(&self, tau: f64) -> Option<f64> {
        let l = self.lift.as_ref()?;
        Some(if self.reversed { l.log_r(-tau) } else { l.log_r(tau) })
    }

    pub fn t_of_tau(&self, tau: f64) -> Option<f64> {
        let l = self.lift.as_ref()?;
        if self.reversed {
            l.t(-tau).map(|t| -t)
        } else {
            l.t(tau)
        }
    }

    pub fn tau_of_t(&self, t: f64) -> Option<f64> {
        let l = self.lift.as_ref()?;
        if self.reversed {
            l.tau_of_t(-t).map(|s| -s)
        } else {
            l.tau_of_t(t)
        }
    }

    /// τ-interval on which t(τ) is known.
    pub fn t_domain(&self) -> Option<(f64, f64)> {
        let (a, b) = self.lift.as_ref()?.t_domain();
        Some(if self.reversed { (-b, -a) } else { (a, b) })
    }

    /// Re-lifts with r(τ₀) = r₀.
    pub fn with_lift(mut self, r0: f64, tau0: f64, tol: f64) -> Result<Self> {
        let core = self.core.clone();
        let tau0c = if self.reversed { -tau0 } else { tau0 };
        let lift = lift_profile(
            |t| core.point(t).map(|p| p.v).unwrap_or(0.0),
            core.pot.alpha(),
            core.range,
            r0,
            tau0c,
            tol,
        )?;
        self.lift = Some(Arc::new(lift));
        self.trajectory = build_trajectory(&self)?;
        Ok(self)
    }

    /// Time-reversed orbit x̃(t) = x(−t): (ψ, θ)(τ) ↦ (ψ + π, θ)(−τ).
    pub fn reversed(&self) -> Result<Self> {
        let flip = |e: &Endpoint| -> Result<Endpoint> {
            let eq = Equilibrium::at(&self.core.pot, -e.eq.psi0, e.eq.theta0)?;
            Ok(Endpoint { eq, psi: e.psi + PI, theta: e.theta })
        };
        let source = flip(&self.sink)?;
        let sink = flip(&self.source)?;
        let het_type = classify_type(&source.eq, &sink.eq)?;
        let mut out = HeteroclinicOrbit {
            core: self.core.clone(),
            reversed: !self.reversed,
            source,
            sink,
            het_type,
            source_direction: self.sink_direction.flipped(),
            sink_direction: self.source_direction.flipped(),
            lift: self.lift.clone(),
            richardson_agrees: self.richardson_agrees,
            trajectory: self.trajectory.clone(),
        };
        out.trajectory = build_trajectory(&out)?;
        Ok(out)
    }

    pub fn is_kepler(&self) -> bool {
        self.core.pot.is_constant()
    }

    /// JSON sidecar for orbit dumps.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "schema": "parindex/1",
            "potential": self.core.pot.descriptor(),
            "settings": self.core.meta,
            "source": self.source,
            "sink": self.sink,
            "type": self.het_type,
            "sourceDirection": self.source_direction,
            "sinkDirection": self.sink_direction,
            "range": self.range(),
            "mainRange": self.main_range(),
            "richardsonAgrees": self.richardson_agrees,
        })
    }
}

fn torus_dist(psi: f64, theta: f64, e: &Equilibrium) -> f64 {
    (wrap_pi(psi - e.psi0).powi(2) + wrap_pi(theta - e.theta0).powi(2)).sqrt()
}

fn lift_to(e: &Equilibrium, psi: f64, theta: f64) -> Endpoint {
    Endpoint {
        eq: e.clone(),
        psi: e.psi0 + TAU * ((psi - e.psi0) / TAU).round(),
        theta: e.theta0 + TAU * ((theta - e.theta0) / TAU).round(),
    }
}

fn classify_type(source: &Equilibrium, sink: &Equilibrium) -> Result<HetType> {
    let vs = (2.0 * source.u_value).sqrt() * source.sin_psi0();
    let vk = (2.0 * sink.u_value).sqrt() * sink.sin_psi0();
    if !(vs < vk) {
        return Err(Error::DomainExit { tau: f64::NAN, reason: "endpoints violate v(−∞) < v(+∞)".into() });
    }
    match (source.psi0 > 0.0, sink.psi0 > 0.0) {
        (false, true) => Ok(HetType::I),
        (true, true) => Ok(HetType::II),
        (false, false) => Ok(HetType::III),
        (true, false) => Err(Error::DomainExit { tau: f64::NAN, reason: "ψ₀ goes from π/2 to −π/2".into() }),
    }
}

/// Eigenline decomposition d = a·e₋ + b·e₊ (real eigenvalues only).
fn eigen_split(eq: &Equilibrium, d: Vector2<f64>) -> Option<(Vector2<f64>, Vector2<f64>)> {
    let (em, ep) = eq.real_directions()?;
    let b = Matrix2::from_columns(&[em, ep]);
    let c = b.try_inverse()? * d;
    Some((em * c[0], ep * c[1]))
}

fn tail_for(
    pot: &AnglePotential,
    end: &Endpoint,
    tau_ref: f64,
    d: Vector2<f64>,
    keep: Option<bool>,
) -> LinearTail {
    // saddles: keep only the stable (Some(false)) or unstable (Some(true)) component
    let d_ref = match (keep, end.eq.classification) {
        (Some(unstable), Classification::Saddle) => match eigen_split(&end.eq, d) {
            Some((dm, dp)) => {
                if unstable {
                    dp
                } else {
                    dm
                }
            }
            None => d,
        },
        _ => d,
    };
    LinearTail {
        psi0: end.psi,
        theta0: end.theta,
        sin_psi0: end.eq.sin_psi0(),
        m: end.eq.matrix(pot.alpha()),
        tau_ref,
        d_ref,
    }
}

fn tail_length(eq: &Equilibrium, opts: &ShootOptions) -> f64 {
    if eq.is_focus() {
        let w = eq.lambda_plus.im.abs();
        opts.tail.max((opts.focus_zeros as f64 + 2.0) * PI / w)
    } else {
        opts.tail
    }
}

fn tail_zeros(tail: &LinearTail, pot: &AnglePotential, a: f64, b: f64) -> Vec<f64> {
    let n = ((b - a) / 0.05).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let g = |t: f64| tail.offset(t)[0];
    let mut out = Vec::new();
    let mut ga = g(a);
    for k in 0..n {
        let (mut x0, mut x1) = (a + k as f64 * h, a + (k + 1) as f64 * h);
        let gb = g(x1);
        if ga != 0.0 && gb != 0.0 && ga.signum() != gb.signum() {
            let s0 = ga.signum();
            while x1 - x0 > 1e-13 * (1.0 + x0.abs()) {
                let m = 0.5 * (x0 + x1);
                if g(m).signum() == s0 {
                    x0 = m;
                } else {
                    x1 = m;
                }
            }
            out.push(0.5 * (x0 + x1));
        }
        ga = gb;
    }
    let _ = pot;
    out
}

fn build_core(
    pot: &AnglePotential,
    main: Solution<2>,
    source: Endpoint,
    sink: Endpoint,
    main_zeros: Vec<f64>,
    opts: &ShootOptions,
    meta: serde_json::Value,
) -> OrbitCore {
    let (tau_lo, tau_hi) = if main.forward() { (main.t_first(), main.t_last()) } else { (main.t_last(), main.t_first()) };
    let y_lo = main.eval(tau_lo);
    let y_hi = main.eval(tau_hi);
    let d_lo = Vector2::new(y_lo[0] - source.psi, y_lo[1] - source.theta);
    let d_hi = Vector2::new(y_hi[0] - sink.psi, y_hi[1] - sink.theta);
    let src_tail = tail_for(pot, &source, tau_lo, d_lo, Some(true));
    let snk_tail = tail_for(pot, &sink, tau_hi, d_hi, Some(false));
    let range = (tau_lo - tail_length(&source.eq, opts), tau_hi + tail_length(&sink.eq, opts));
    let mut zeros = tail_zeros(&src_tail, pot, range.0, tau_lo);
    zeros.extend(main_zeros);
    zeros.extend(tail_zeros(&snk_tail, pot, tau_hi, range.1));
    zeros.sort_by(|a, b| a.total_cmp(b));
    OrbitCore { pot: pot.clone(), main, source, sink, src_tail, snk_tail, tau_lo, tau_hi, range, u_zeros: zeros, meta }
}

fn build_trajectory(orbit: &HeteroclinicOrbit) -> Result<Trajectory> {
    let (a, b) = orbit.range();
    let (ma, mb) = orbit.main_range();
    let mut taus: Vec<f64> = Vec::new();
    let mut t = a;
    while t < ma {
        taus.push(t);
        t += 0.25;
    }
    let mut main: Vec<f64> =
        orbit.core.main.t.iter().map(|t| if orbit.reversed { -t } else { *t }).collect();
    main.sort_by(|x, y| x.total_cmp(y));
    taus.extend(main);
    let mut t = mb + 0.25;
    while t <= b {
        taus.push(t);
        t += 0.25;
    }
    taus.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    let mut states = Vec::with_capacity(taus.len());
    for &t in &taus {
        let p = orbit.point(t)?;
        states.push(CollisionState { psi: p.psi, theta: p.theta });
    }
    let (r_profile, t_profile) = match orbit.lift {
        Some(_) => (
            Some(taus.iter().map(|&t| orbit.log_r(t).unwrap_or(f64::NAN).exp()).collect()),
            Some(taus.iter().map(|&t| orbit.t_of_tau(t)).collect()),
        ),
        None => (None, None),
    };
    Ok(Trajectory { tau_samples: taus, states, r_profile, t_profile, meta: orbit.core.meta.clone() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum End {
    Source,
    Sink,
}

/// Asymptotic direction of approach to an endpoint: least-squares direction of the K = 20
/// offsets closest to the equilibrium (within 1e−3) against the e± lines, 5° cone.
pub fn detect_approach_direction(orbit: &HeteroclinicOrbit, end: End) -> Result<Direction> {
    let ep = match end {
        End::Source => &orbit.source,
        End::Sink => &orbit.sink,
    };
    if ep.eq.delta < 0.0 {
        return Ok(Direction::Spiral);
    }
    if orbit.is_kepler() {
        // ψ′/θ′ = (2−α)/2 along every orbit, which is the e₊ line at ψ₀ = −π/2 and e₋ at π/2
        return Ok(if ep.eq.psi0 < 0.0 { Direction::EPlus } else { Direction::EMinus });
    }
    if ep.eq.classification == Classification::Degenerate {
        return Err(Error::DegenerateCriticalPoint { theta: ep.eq.theta0 });
    }
    let (ma, mb) = orbit.main_range();
    let dist = |t: f64| -> Result<f64> { orbit.endpoint_distance(t, end == End::Sink) };
    // locate where the integrated piece enters the 1e−3 ball
    let (near, far) = match end {
        End::Sink => (mb, ma),
        End::Source => (ma, mb),
    };
    let (mut a, mut b) = (near, far);
    if dist(b)? < 1e-3 {
        a = b;
    } else {
        for _ in 0..80 {
            let m = 0.5 * (a + b);
            if dist(m)? < 1e-3 {
                a = m;
            } else {
                b = m;
            }
        }
    }
    let entry = a;
    let k = 20;
    let mut s = Matrix2::zeros();
    for j in 0..k {
        let t = near + (entry - near) * j as f64 / (k - 1) as f64;
        let p = orbit.point(t)?;
        let d = Vector2::new(p.psi - ep.psi, p.theta - ep.theta);
        let n = d.norm();
        if n > 0.0 {
            let dn = d / n;
            s += dn * dn.transpose();
        }
    }
    let eig = s.symmetric_eigen();
    let i = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let dir = eig.eigenvectors.column(i).into_owned();
    let (em, epl) = ep.eq.real_directions().expect("Δ ≥ 0");
    let ang = |e: &Vector2<f64>| e.dot(&dir).abs().min(1.0).acos().to_degrees();
    let (am, ap) = (ang(&em), ang(&epl));
    match (am < 5.0, ap < 5.0) {
        (true, true) => Ok(if am <= ap { Direction::EMinus } else { Direction::EPlus }),
        (true, false) => Ok(Direction::EMinus),
        (false, true) => Ok(Direction::EPlus),
        _ => Err(Error::AmbiguousDirection { angle_minus: am, angle_plus: ap }),
    }
}

fn finish(
    pot: &AnglePotential,
    core: OrbitCore,
    richardson_agrees: Option<bool>,
    tol: f64,
) -> Result<HeteroclinicOrbit> {
    let het_type = classify_type(&core.source.eq, &core.sink.eq)?;
    let core = Arc::new(core);
    let mut orbit = HeteroclinicOrbit {
        source: core.source.clone(),
        sink: core.sink.clone(),
        core,
        reversed: false,
        het_type,
        source_direction: Direction::Spiral,
        sink_direction: Direction::Spiral,
        lift: None,
        richardson_agrees,
        trajectory: Trajectory {
            tau_samples: vec![],
            states: vec![],
            r_profile: None,
            t_profile: None,
            meta: serde_json::Value::Null,
        },
    };
    orbit.source_direction = detect_approach_direction(&orbit, End::Source)?;
    orbit.sink_direction = detect_approach_direction(&orbit, End::Sink)?;
    let _ = pot;
    let tau0 = pericenter(&orbit)?;
    orbit.with_lift(1.0, tau0, tol.max(1e-12))
}

/// The zero of v on the integrated piece (r is minimal there), else its midpoint.
fn pericenter(orbit: &HeteroclinicOrbit) -> Result<f64> {
    let (ma, mb) = orbit.main_range();
    let v = |t: f64| orbit.point(t).map(|p| p.v);
    let n = 400;
    let h = (mb - ma) / n as f64;
    let mut va = v(ma)?;
    for k in 0..n {
        let (mut a, mut b) = (ma + k as f64 * h, ma + (k + 1) as f64 * h);
        let vb = v(b)?;
        if va <= 0.0 && vb > 0.0 {
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if v(m)? <= 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(0.5 * (a + b));
        }
        va = vb;
    }
    Ok(0.5 * (ma + mb))
}

/// Traces an invariant manifold branch of `eq` until it locks onto another equilibrium of
/// `atlas`.
pub fn shoot_heteroclinic(
    pot: &AnglePotential,
    atlas: &[Equilibrium],
    eq: &Equilibrium,
    sign: f64,
    opts: &ShootOptions,
) -> Result<HeteroclinicOrbit> {
    check_tol(opts.tol)?;
    if !(1e-8..=1e-4).contains(&opts.eps) {
        return Err(Error::InvalidArgument(format!("eps = {} outside [1e-8, 1e-4]", opts.eps)));
    }
    let dir = match opts.manifold {
        Manifold::Unstable => 1.0,
        Manifold::Stable => -1.0,
    };
    let ok = match (opts.manifold, eq.classification) {
        (_, Classification::Saddle) => true,
        (Manifold::Unstable, Classification::UnstableNode | Classification::UnstableFocus) => true,
        (Manifold::Stable, Classification::StableNode | Classification::StableFocus) => true,
        _ => false,
    };
    if !ok {
        return Err(Error::InvalidArgument(format!(
            "{:?} at ({}, {}) has no {:?} direction",
            eq.classification, eq.psi0, eq.theta0, opts.manifold
        )));
    }
    let d0 = if eq.is_focus() || opts.seed_direction == SeedDirection::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed);
        let phi: f64 = rng.gen_range(0.0..TAU);
        Vector2::new(phi.cos(), phi.sin()) * opts.eps
    } else {
        let (em, ep) = eq.real_directions().expect("real eigenvectors");
        let e = if eq.classification == Classification::Saddle {
            if opts.manifold == Manifold::Unstable {
                ep
            } else {
                em
            }
        } else if opts.seed_direction == SeedDirection::EMinus {
            em
        } else {
            ep
        };
        e * (sign.signum() * opts.eps)
    };
    let y0 = [eq.psi0 + d0[0], eq.theta0 + d0[1]];
    let others: Vec<&Equilibrium> = atlas.iter().filter(|e| !e.same_point(eq)).collect();
    let eps_lock = opts.eps_lock;
    let lock = |_t: f64, y: &[f64; 2]| {
        let d = others.iter().map(|e| torus_dist(y[0], y[1], e)).fold(f64::INFINITY, f64::min);
        eps_lock - d
    };
    let events = [Event::new(lock).terminal().rising(), Event::new(|_t, y: &[f64; 2]| y[0].cos())];
    let iopts = Options { rtol: opts.tol, atol: opts.tol, h_max: 0.25, ..Default::default() };
    let main = integrate(|_, y: &[f64; 2]| collision_rhs(pot, y[0], y[1]), 0.0, y0, dir * opts.tau_max, &iopts, &events)?;
    if main.status != Status::Terminated {
        return Err(Error::NoConvergence { tau_max: opts.tau_max });
    }
    let ye = main.y_last();
    let target = others
        .iter()
        .min_by(|a, b| torus_dist(ye[0], ye[1], a).total_cmp(&torus_dist(ye[0], ye[1], b)))
        .expect("atlas has another equilibrium");
    let start = Endpoint { eq: eq.clone(), psi: eq.psi0, theta: eq.theta0 };
    let stop = lift_to(target, ye[0], ye[1]);
    let zeros: Vec<f64> = main.events.iter().filter(|e| e.index == 1).map(|e| e.t).collect();
    let (source, sink) = if dir > 0.0 { (start, stop) } else { (stop, start) };
    let meta = serde_json::json!({
        "integrator": {"method": "dopri5", "tol": opts.tol},
        "shoot": opts,
        "seedEquilibrium": {"psi0": eq.psi0, "theta0": eq.theta0},
        "sign": sign.signum(),
    });
    let core = build_core(pot, main, source, sink, zeros, opts, meta);
    let agrees = if opts.richardson {
        let half = ShootOptions { eps: opts.eps / 2.0, richardson: false, ..*opts };
        Some(match shoot_heteroclinic(pot, atlas, eq, sign, &half) {
            Ok(o) => o.source.eq.same_point(&core.source.eq) && o.sink.eq.same_point(&core.sink.eq),
            Err(_) => false,
        })
    } else {
        None
    };
    finish(pot, core, agrees, opts.tol)
}

/// The parabolic orbit of a constant profile passing through (ψ, θ) = (0, θ_mid). It connects
/// (−π/2, θ_mid − π/(2−α)) to (π/2, θ_mid + π/(2−α)).
pub fn kepler_parabolic_orbit(pot: &AnglePotential, theta_mid: f64, opts: &ShootOptions) -> Result<HeteroclinicOrbit> {
    if !pot.is_constant() {
        return Err(Error::InvalidArgument("kepler_parabolic_orbit needs a constant profile".into()));
    }
    check_tol(opts.tol)?;
    let k = 2.0 / (2.0 - pot.alpha());
    let th_src = theta_mid - FRAC_PI_2 * k;
    let th_snk = theta_mid + FRAC_PI_2 * k;
    let eps = opts.eps;
    let y0 = [-FRAC_PI_2 + eps, th_src + k * eps];
    let lock = opts.eps_lock;
    let events = [
        Event::new(move |_t, y: &[f64; 2]| lock - (FRAC_PI_2 - y[0])).terminal().rising(),
        Event::new(|_t, y: &[f64; 2]| y[0].cos()),
    ];
    let iopts = Options { rtol: opts.tol, atol: opts.tol, h_max: 0.25, ..Default::default() };
    let main = integrate(|_, y: &[f64; 2]| collision_rhs(pot, y[0], y[1]), 0.0, y0, opts.tau_max, &iopts, &events)?;
    if main.status != Status::Terminated {
        return Err(Error::NoConvergence { tau_max: opts.tau_max });
    }
    let mk = |s: f64, th: f64| -> Result<Endpoint> {
        let eq = Equilibrium::at(pot, s, wrap_pi(th))?;
        Ok(Endpoint { eq, psi: s * FRAC_PI_2, theta: th })
    };
    let source = mk(-1.0, th_src)?;
    let sink = mk(1.0, th_snk)?;
    let zeros: Vec<f64> = main.events.iter().filter(|e| e.index == 1).map(|e| e.t).collect();
    let meta = serde_json::json!({
        "integrator": {"method": "dopri5", "tol": opts.tol},
        "shoot": opts,
        "keplerThetaMid": theta_mid,
    });
    let core = build_core(pot, main, source, sink, zeros, opts, meta);
    finish(pot, core, None, opts.tol)
}

/// θ at the first upward crossing of ψ = 0 along the unstable branch (sign +1) of the saddle
/// (−π/2, θ_min).
fn crossing_angle(pot: &AnglePotential, theta_min: f64, eps: f64, tol: f64) -> Result<f64> {
    let eq = Equilibrium::at(pot, -1.0, theta_min)?;
    let (_, ep) = eq.real_directions().ok_or(Error::NonHyperbolicBlock { delta: eq.delta })?;
    let y0 = [eq.psi0 + eps * ep[0], eq.theta0 + eps * ep[1]];
    let ev = [Event::new(|_t, y: &[f64; 2]| y[0]).terminal().rising()];
    let o = Options::with_tol(tol);
    let sol = integrate(|_, y: &[f64; 2]| collision_rhs(pot, y[0], y[1]), 0.0, y0, 400.0, &o, &ev)?;
    if sol.status != Status::Terminated {
        return Err(Error::NoConvergence { tau_max: 400.0 });
    }
    Ok(sol.y_last()[1])
}

/// Connection between global-minimum saddles forced by reversibility.
///
/// If 𝔘(c − θ) = 𝔘(θ), the map (ψ, θ)(τ) ↦ (−ψ, c − θ)(−τ) sends orbits to orbits, so an
/// unstable branch of (−π/2, θ_min) that crosses ψ = 0 at θ = c/2 + kπ ends at
/// (π/2, c − θ_min + 2kπ). The family parameter is bisected on `bracket` until the crossing
/// angle hits `target_cross`.
pub fn find_symmetric_connection(
    family: impl Fn(f64) -> Result<AnglePotential>,
    bracket: (f64, f64),
    theta_min: f64,
    target_cross: f64,
    opts: &ShootOptions,
) -> Result<(f64, HeteroclinicOrbit)> {
    let tol = 1e-12;
    let g = |p: f64| -> Result<f64> { Ok(crossing_angle(&family(p)?, theta_min, opts.eps, tol)? - target_cross) };
    let (mut a, mut b) = bracket;
    let (ga, gb) = (g(a)?, g(b)?);
    if ga.signum() == gb.signum() {
        return Err(Error::InvalidArgument(format!("bracket does not straddle the target ({ga}, {gb})")));
    }
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if g(m)?.signum() == ga.signum() {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-15 * (1.0 + a.abs()) {
            break;
        }
    }
    let p = 0.5 * (a + b);
    let pot = family(p)?;
    let atlas = crate::equilibria::find_equilibria(&pot)?;
    let eq = Equilibrium::at(&pot, -1.0, theta_min)?;
    let o = ShootOptions { richardson: false, ..*opts };
    Ok((p, shoot_heteroclinic(&pot, &atlas, &eq, 1.0, &o)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::find_equilibria;

    fn eq_at(atlas: &[Equilibrium], s: f64, th: f64) -> Equilibrium {
        atlas.iter().find(|e| e.psi0.signum() == s && crate::angle::circle_dist(e.theta0, th) < 1e-9).unwrap().clone()
    }

    #[test]
    fn expm2_matches_series() {
        for m in [Matrix2::new(0.3, -1.2, 0.7, -0.1), Matrix2::new(1.0, 2.0, 0.5, -0.4), Matrix2::new(0.0, 1.0, 0.0, 0.0)] {
            let mut term = Matrix2::identity();
            let mut sum = Matrix2::identity();
            for k in 1..40 {
                term = term * (m * 1.3) / k as f64;
                sum += term;
            }
            assert!((expm2(&m, 1.3) - sum).abs().max() < 1e-12);
        }
    }

    #[test]
    fn saddle_source_type_i() {
        let pot = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        let atlas = find_equilibria(&pot).unwrap();
        let src = eq_at(&atlas, -1.0, 0.0);
        let o = shoot_heteroclinic(&pot, &atlas, &src, 1.0, &ShootOptions::default()).unwrap();
        assert_eq!(o.het_type, HetType::I);
        assert_eq!(o.source_direction, Direction::EPlus);
        assert_eq!(o.sink_direction, Direction::Spiral);
        assert_eq!(o.richardson_agrees, Some(true));
        let (a, b) = o.range();
        let mut last = f64::NEG_INFINITY;
        let n = 4000;
        for j in 0..=n {
            let p = o.point(a + (b - a) * j as f64 / n as f64).unwrap();
            assert!(p.v >= last - 1e-10);
            last = p.v;
            assert!((p.u * p.u + p.v * p.v - 2.0 * p.u_val).abs() < 1e-12);
        }
        assert!(o.endpoint_distance(b, true).unwrap() < 1e-8);
        assert!(o.endpoint_distance(a, false).unwrap() < 1e-8);
    }

    #[test]
    fn node_sink_and_lift() {
        let pot = AnglePotential::anisotropic(1.0, 1.1).unwrap();
        let atlas = find_equilibria(&pot).unwrap();
        let src = eq_at(&atlas, -1.0, 0.0);
        let o = shoot_heteroclinic(&pot, &atlas, &src, 1.0, &ShootOptions::default()).unwrap();
        assert_eq!(o.het_type, HetType::I);
        assert_eq!(o.sink.eq.classification, Classification::StableNode);
        assert_eq!(o.sink_direction, Direction::EPlus);
        let (a, b) = o.range();
        // type I: r → ∞ at both ends
        assert!(o.log_r(a).unwrap() > 10.0 && o.log_r(b).unwrap() > 10.0);
        let (ta, tb) = o.t_domain().unwrap();
        let t1 = o.t_of_tau(ta + 1.0).unwrap();
        let t2 = o.t_of_tau(tb - 1.0).unwrap();
        assert!(t1 < 0.0 && t2 > 0.0);
        let back = o.tau_of_t(0.5 * t2).unwrap();
        assert!((o.t_of_tau(back).unwrap() - 0.5 * t2).abs() < 1e-8 * t2.abs());
    }

    #[test]
    fn type_ii_and_reversal() {
        let pot = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        let atlas = find_equilibria(&pot).unwrap();
        let src = eq_at(&atlas, 1.0, 0.0);
        let o = shoot_heteroclinic(&pot, &atlas, &src, 1.0, &ShootOptions::default()).unwrap();
        assert_eq!(o.het_type, HetType::II);
        let r = o.reversed().unwrap();
        assert_eq!(r.het_type, HetType::III);
        let (a, b) = o.range();
        let (ra, rb) = r.range();
        assert!((ra + b).abs() < 1e-12 && (rb + a).abs() < 1e-12);
        let p = o.point(0.3).unwrap();
        let q = r.point(-0.3).unwrap();
        assert!((q.psi - p.psi - PI).abs() < 1e-14 && (q.u + p.u).abs() < 1e-14);
        // type III: r → 0 and t stays bounded as τ → +∞
        assert!(r.log_r(rb).unwrap() < r.log_r(r.main_range().1).unwrap());
        let t_end = r.t_of_tau(rb).unwrap();
        let t_before = r.t_of_tau(rb - 5.0).unwrap();
        assert!(t_end.is_finite() && (t_end - t_before) < 1e-3 * t_end.abs().max(1.0));
    }

    #[test]
    fn constant_equilibrium_lift() {
        let w: f64 = 1.3;
        let l = lift_profile(|_| w, 1.0, (-3.0, 3.0), 2.0, 0.0, 1e-12).unwrap();
        for t in [-2.5, -1.0, 0.0, 1.7, 3.0] {
            assert!((l.log_r(t) - (2f64.ln() + w * t)).abs() < 1e-10);
        }
    }

    #[test]
    fn kepler_orbit_is_type_i() {
        for m in [0.5, 1.0, 2.0] {
            let pot = AnglePotential::kepler(1.0, m).unwrap();
            let o = kepler_parabolic_orbit(&pot, 0.2, &ShootOptions::default()).unwrap();
            assert_eq!(o.het_type, HetType::I);
            assert!(o.u_zeros().is_empty());
            let (a, b) = o.range();
            let mut last = -FRAC_PI_2;
            for j in 0..=200 {
                let p = o.point(a + (b - a) * j as f64 / 200.0).unwrap();
                assert!(p.psi >= last - 1e-12);
                last = p.psi;
            }
        }
    }

    #[test]
    fn focus_sink_tail_winds() {
        let pot = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        let atlas = find_equilibria(&pot).unwrap();
        let src = eq_at(&atlas, -1.0, 0.0);
        let o = shoot_heteroclinic(&pot, &atlas, &src, -1.0, &ShootOptions::default()).unwrap();
        assert!(o.u_zeros().len() >= 60);
        let z = o.u_zeros();
        assert!(z.windows(2).all(|w| w[1] - w[0] > 1e-6));
    }
}
