//! Oscillation, Maslov and Morse indices of zero-energy orbits and the relations between them.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Direction, HetType, HeteroclinicOrbit};
use crate::equilibria::C64;
use crate::error::{Error, Result};
use crate::linearization::{j_matrix, v_frame, CMat2, LagrangianFrame, LinearFlowCache};
use crate::potential::AnglePotential;

pub const DEFAULT_CAP: usize = 50;
pub const EPS_ROTATION: f64 = 1e-4;

/// V_d = ℝ² ⊕ 0.
pub fn vd() -> LagrangianFrame {
    LagrangianFrame::vd()
}

/// A finite index or one that reached the cap.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Count {
    Finite(i64),
    Saturated { saturated: usize },
}

impl Count {
    pub fn finite(&self) -> Option<i64> {
        match self {
            Count::Finite(n) => Some(*n),
            Count::Saturated { .. } => None,
        }
    }

    pub fn is_saturated(&self) -> bool {
        matches!(self, Count::Saturated { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaslovValue {
    Value(i64),
    Undefined { undefined: String },
}

// ---------------------------------------------------------------- oscillation

/// #{τ : u(τ) = 0} over the sampled orbit, saturating at `cap`.
pub fn oscillation_index(orbit: &HeteroclinicOrbit, cap: usize) -> Count {
    let n = orbit.u_zeros().len();
    if n >= cap {
        Count::Saturated { saturated: cap }
    } else {
        Count::Finite(n as i64)
    }
}

pub fn oscillation_in(orbit: &HeteroclinicOrbit, a: f64, b: f64) -> usize {
    orbit.u_zeros().iter().filter(|t| **t > a && **t < b).count()
}

// ------------------------------------------------------------------- Maslov

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CrossingRecord {
    pub tau: f64,
    pub dimension: usize,
    /// Signature of the crossing form (moving minus reference).
    pub signature: i64,
    pub refined_by_bisection: bool,
    /// The crossing form was singular at the tangential tolerance.
    pub tangential: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MaslovCount {
    /// Signed count: endpoints enter through the positive part of the form at a and the
    /// negative part at b.
    pub index: i64,
    /// dim(Λ(a) ∩ V) + Σ_{a<τ<b} dim(Λ(τ) ∩ V).
    pub dim_count: i64,
    pub crossings: Vec<CrossingRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountOptions {
    /// Initial sampling step; refined wherever an eigenphase moves more than `max_jump`.
    pub step: f64,
    pub max_jump: f64,
    pub bisect_tol: f64,
    pub fd_step: f64,
    pub tangential_tol: f64,
    /// Endpoint phases this close to the lattice are treated as crossings.
    pub snap: f64,
}

impl Default for CountOptions {
    fn default() -> Self {
        CountOptions { step: 0.05, max_jump: 0.2, bisect_tol: 1e-10, fd_step: 1e-6, tangential_tol: 1e-9, snap: 1e-9 }
    }
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(TAU) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

/// Eigenphases of conj(MMᵀ), M = U₁*U₂: they sit at 0 mod 2π exactly when the planes meet,
/// and increase through positive crossings.
fn pair_phases(l1: &LagrangianFrame, l2: &LagrangianFrame) -> [f64; 2] {
    let m = l1.unitary().adjoint() * l2.unitary();
    let w: CMat2 = (m * m.transpose()).map(|z| z.conj());
    // W/√det W lies in SU(2), [[a, b], [−b̄, ā]] with eigenphases ±β. Taking sin β from |Im a|
    // and |b| avoids the √ε loss of the trace formula near a double eigenvalue.
    let det = w[(0, 0)] * w[(1, 1)] - w[(0, 1)] * w[(1, 0)];
    let s = det.sqrt();
    let ws = w / s;
    let a = (ws[(0, 0)] + ws[(1, 1)].conj()) * 0.5;
    let b = (ws[(0, 1)] - ws[(1, 0)].conj()) * 0.5;
    let beta = (a.im.hypot(b.norm())).atan2(a.re);
    let mid = s.arg();
    [wrap(mid - beta), wrap(mid + beta)]
}

fn line_phase(l1: &Vector2<f64>, l2: &Vector2<f64>) -> f64 {
    // (p, q) ↦ q + ip
    let u1 = C64::new(l1[1], l1[0]) / l1.norm();
    let u2 = C64::new(l2[1], l2[0]) / l2.norm();
    let m = u1.conj() * u2;
    (m * m).conj().arg()
}

fn match_phases(prev: &[f64], w: &[f64]) -> (Vec<f64>, f64) {
    let perms: &[&[usize]] = if prev.len() == 2 { &[&[0, 1], &[1, 0]] } else { &[&[0]] };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for p in perms {
        let d: Vec<f64> = (0..prev.len()).map(|j| wrap(w[p[j]] - prev[j])).collect();
        let cost = d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if best.as_ref().map_or(true, |b| cost < b.1) {
            best = Some(((0..prev.len()).map(|j| prev[j] + d[j]).collect(), cost));
        }
    }
    best.unwrap()
}

type PhaseFn<'a> = dyn Fn(f64) -> Result<Vec<f64>> + 'a;

fn track(phases: &PhaseFn<'_>, a: f64, b: f64, opts: &CountOptions) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = ((b - a) / opts.step).ceil().max(4.0) as usize;
    let mut out = vec![(a, phases(a)?)];
    let mut targets: Vec<f64> = (1..=n).rev().map(|k| if k == n { b } else { a + (b - a) * k as f64 / n as f64 }).collect();
    while let Some(t) = targets.pop() {
        let (tp, prev) = out.last().unwrap();
        let w = phases(t)?;
        let (phi, jump) = match_phases(prev, &w);
        if jump > opts.max_jump && t - tp > 1e-11 {
            let mid = 0.5 * (tp + t);
            targets.push(t);
            targets.push(mid);
            continue;
        }
        out.push((t, phi));
    }
    Ok(out)
}

fn lattice_ceil(x: f64, snap: f64) -> i64 {
    let k = (x / TAU).round();
    if (x - k * TAU).abs() < snap {
        k as i64
    } else {
        (x / TAU).ceil() as i64
    }
}

struct Tracked {
    index: i64,
    dim_a: usize,
    /// (t0, t1, phase at t0, phase at t1, lattice level) for every interior lattice passage
    passages: Vec<(f64, f64, f64, f64, f64)>,
}

fn count_tracked(samples: &[(f64, Vec<f64>)], opts: &CountOptions) -> Tracked {
    let k = samples[0].1.len();
    let (first, last) = (&samples[0].1, &samples[samples.len() - 1].1);
    let mut index = 0;
    let mut dim_a = 0;
    for j in 0..k {
        index += lattice_ceil(last[j], opts.snap) - lattice_ceil(first[j], opts.snap);
        if (first[j] - (first[j] / TAU).round() * TAU).abs() < opts.snap {
            dim_a += 1;
        }
    }
    let mut passages = Vec::new();
    let n = samples.len();
    for i in 0..n - 1 {
        let (t0, p0) = &samples[i];
        let (t1, p1) = &samples[i + 1];
        for j in 0..k {
            // ceil may only change at interior points, so the snapped values are used at the ends
            let c0 = if i == 0 { lattice_ceil(p0[j], opts.snap) } else { (p0[j] / TAU).ceil() as i64 };
            let c1 = if i + 1 == n - 1 { lattice_ceil(p1[j], opts.snap) } else { (p1[j] / TAU).ceil() as i64 };
            if c0 != c1 {
                let level = if c1 > c0 { c0 as f64 } else { c1 as f64 } * TAU;
                // skip a passage that sits exactly on an endpoint
                let at_a = i == 0 && (p0[j] - level).abs() < opts.snap;
                let at_b = i + 1 == n - 1 && (p1[j] - level).abs() < opts.snap;
                if !at_a && !at_b {
                    passages.push((*t0, *t1, p0[j], p1[j], level));
                }
            }
        }
    }
    Tracked { index, dim_a, passages }
}

fn locate(phases: &PhaseFn<'_>, pass: (f64, f64, f64, f64, f64), tol: f64) -> Result<f64> {
    let (mut lo, mut hi, f0, f1, level) = pass;
    let (t0, t1) = (lo, hi);
    let g0 = f0 - level;
    for _ in 0..200 {
        if hi - lo < tol {
            break;
        }
        let m = 0.5 * (lo + hi);
        let pred = f0 + (f1 - f0) * (m - t0) / (t1 - t0);
        let w = phases(m)?;
        let near = w.iter().map(|x| pred + wrap(x - pred)).min_by(|a, b| (a - pred).abs().total_cmp(&(b - pred).abs())).unwrap();
        if (near - level) * g0 > 0.0 || (near == level && g0 == 0.0) {
            lo = m;
        } else {
            hi = m;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn crossing_form(
    l1: &dyn Fn(f64) -> Result<LagrangianFrame>,
    l2: &dyn Fn(f64) -> Result<LagrangianFrame>,
    t: f64,
    h: f64,
    bounds: (f64, f64),
    kernel_tol: f64,
) -> Result<(usize, i64, bool)> {
    let z1 = l1(t)?;
    let z2 = l2(t)?;
    let (ta, tb) = ((t - h).max(bounds.0), (t + h).min(bounds.1));
    // frames are compared column by column, so both ends must use the same basis convention
    let d1 = (l1(tb)?.columns() - l1(ta)?.columns()) / (tb - ta);
    let d2 = (l2(tb)?.columns() - l2(ta)?.columns()) / (tb - ta);
    let j = j_matrix();
    let p = z1.columns().transpose() * j * z2.columns();
    let svd = p.svd(false, true);
    let vt = svd.v_t.unwrap();
    let mut ks: Vec<Vector2<f64>> = (0..2).filter(|i| svd.singular_values[*i] < kernel_tol).map(|i| vt.row(i).transpose()).collect();
    if ks.is_empty() {
        let i = if svd.singular_values[0] < svd.singular_values[1] { 0 } else { 1 };
        ks.push(vt.row(i).transpose());
    }
    let d = ks.len();
    // Γ(x) = ω(x, ẋ₂) − ω(x, ẋ₁) on x ∈ Λ₁ ∩ Λ₂
    let xs: Vec<_> = ks.iter().map(|c| z2.columns() * c).collect();
    let c1: Vec<Vector2<f64>> = xs.iter().map(|x| z1.columns().transpose() * x).collect();
    let mut g = nalgebra::DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let jx = j * xs[a];
            let v = jx.dot(&(d2 * ks[b])) - jx.dot(&(d1 * c1[b]));
            g[(a, b)] = v;
        }
    }
    let g = (&g + g.transpose()) * 0.5;
    let ev = g.symmetric_eigen().eigenvalues;
    let tangential = ev.iter().any(|x| x.abs() < 1e-9);
    let sig = ev.iter().map(|x| if *x > 1e-9 { 1 } else if *x < -1e-9 { -1 } else { 0 }).sum();
    Ok((d, sig, tangential))
}

/// μ(L₁, L₂; [a, b]) for two moving Lagrangian paths, L₁ in the role of the reference.
pub fn maslov_count_pair(
    l1: &dyn Fn(f64) -> Result<LagrangianFrame>,
    l2: &dyn Fn(f64) -> Result<LagrangianFrame>,
    a: f64,
    b: f64,
    opts: &CountOptions,
) -> Result<MaslovCount> {
    if !(b > a) {
        return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
    }
    let phases = |t: f64| -> Result<Vec<f64>> { Ok(pair_phases(&l1(t)?, &l2(t)?).to_vec()) };
    let samples = track(&phases, a, b, opts)?;
    let tr = count_tracked(&samples, opts);
    let mut crossings: Vec<CrossingRecord> = Vec::new();
    let mut signed_check = 0i64;
    for pass in &tr.passages {
        let t = locate(&phases, *pass, opts.bisect_tol)?;
        let dir = if pass.3 > pass.2 { 1 } else { -1 };
        signed_check += dir;
        if let Some(last) = crossings.last_mut() {
            if (last.tau - t).abs() < 1e-8 {
                continue;
            }
        }
        let (dim, sig, tangential) = crossing_form(l1, l2, t, opts.fd_step, (a, b), 1e-6)?;
        if tangential && sig == 0 {
            return Err(Error::TangentialCrossingUnresolved { tau: t });
        }
        crossings.push(CrossingRecord { tau: t, dimension: dim, signature: sig, refined_by_bisection: true, tangential });
    }
    crossings.sort_by(|x, y| x.tau.total_cmp(&y.tau));
    let _ = signed_check;
    let dim_count = tr.dim_a as i64 + crossings.iter().map(|c| c.dimension as i64).sum::<i64>();
    Ok(MaslovCount { index: tr.index, dim_count, crossings })
}

/// μ(reference, Λ; [a, b]).
pub fn maslov_count(
    path: &dyn Fn(f64) -> Result<LagrangianFrame>,
    reference: &LagrangianFrame,
    a: f64,
    b: f64,
    opts: &CountOptions,
) -> Result<MaslovCount> {
    let r = reference.clone();
    maslov_count_pair(&move |_| Ok(r.clone()), path, a, b, opts)
}

/// The n = 1 count for lines in ℝ² given by (p, q) direction vectors.
pub fn maslov_count_line(
    l1: &dyn Fn(f64) -> Vector2<f64>,
    l2: &dyn Fn(f64) -> Vector2<f64>,
    a: f64,
    b: f64,
    opts: &CountOptions,
) -> Result<i64> {
    let phases = |t: f64| -> Result<Vec<f64>> { Ok(vec![line_phase(&l1(t), &l2(t))]) };
    let samples = track(&phases, a, b, opts)?;
    Ok(count_tracked(&samples, opts).index)
}

// ----------------------------------------------------------------- Hörmander

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hormander {
    pub value: i64,
    pub via_graph: bool,
}

fn signature2(m: &Matrix2<f64>) -> Option<i64> {
    let ev = m.symmetric_eigen().eigenvalues;
    let scale = m.abs().max().max(1.0);
    if ev.iter().any(|x| x.abs() < 1e-9 * scale) {
        return None;
    }
    Some(ev.iter().map(|x| if *x > 0.0 { 1 } else { -1 }).sum())
}

/// s(V₀, V₁; L₀, L₁). With graphs p = Aq this is
/// ½sign(B₀−A₁) + ½sign(B₁−A₀) − ½sign(B₁−A₁) − ½sign(B₀−A₀); when a graph or one of the
/// differences degenerates, the same quantity is taken as μ(V₁, Λ) − μ(V₀, Λ) along a unitary
/// geodesic Λ from L₀ to L₁ (the order that agrees with the graph formula under the counting
/// convention used here).
pub fn hormander_index(
    v0: &LagrangianFrame,
    v1: &LagrangianFrame,
    l0: &LagrangianFrame,
    l1: &LagrangianFrame,
) -> Result<Hormander> {
    if let Some(v) = hormander_by_graph(v0, v1, l0, l1) {
        return Ok(Hormander { value: v, via_graph: true });
    }
    Ok(Hormander { value: hormander_by_path(v0, v1, l0, l1)?, via_graph: false })
}

pub fn hormander_by_graph(
    v0: &LagrangianFrame,
    v1: &LagrangianFrame,
    l0: &LagrangianFrame,
    l1: &LagrangianFrame,
) -> Option<i64> {
    let (a0, a1, b0, b1) = (v0.graph()?, v1.graph()?, l0.graph()?, l1.graph()?);
    let s = signature2(&(b0 - a1))? + signature2(&(b1 - a0))? - signature2(&(b1 - a1))? - signature2(&(b0 - a0))?;
    Some(s / 2)
}

/// Λ(t) = U₀ exp(t log(U₀*U₁)), the unitary geodesic between two Lagrangian planes.
pub fn unitary_geodesic(l0: &LagrangianFrame, l1: &LagrangianFrame) -> impl Fn(f64) -> LagrangianFrame {
    let u0 = l0.unitary();
    let m = u0.adjoint() * l1.unitary();
    let schur = m.schur();
    let (q, t) = schur.unpack();
    let args = [t[(0, 0)].arg(), t[(1, 1)].arg()];
    move |s: f64| {
        let d = CMat2::from_diagonal(&nalgebra::Vector2::new(
            C64::from_polar(1.0, s * args[0]),
            C64::from_polar(1.0, s * args[1]),
        ));
        LagrangianFrame::from_unitary(&(u0 * q * d * q.adjoint()))
    }
}

pub fn hormander_by_path(
    v0: &LagrangianFrame,
    v1: &LagrangianFrame,
    l0: &LagrangianFrame,
    l1: &LagrangianFrame,
) -> Result<i64> {
    let g = unitary_geodesic(l0, l1);
    let path = |s: f64| Ok(g(s));
    let opts = CountOptions { step: 0.01, ..Default::default() };
    let m0 = maslov_count(&path, v0, 0.0, 1.0, &opts)?.index;
    let m1 = maslov_count(&path, v1, 0.0, 1.0, &opts)?.index;
    Ok(m1 - m0)
}

// ------------------------------------------------------------ orbit indices

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexSettings {
    pub cap: usize,
    /// Minimum FE node count for the Hessian (doubled for the convergence check).
    pub mesh: usize,
    /// Largest element length in τ; long windows get more nodes than `mesh`.
    pub max_element: f64,
    /// Window growth used for the stability checks.
    pub extend: f64,
    pub integrator_tol: f64,
    pub count_step: f64,
}

impl Default for IndexSettings {
    fn default() -> Self {
        IndexSettings { cap: DEFAULT_CAP, mesh: 2000, max_element: 0.01, extend: 10.0, integrator_tol: 1e-11, count_step: 0.05 }
    }
}

impl IndexSettings {
    pub fn nodes(&self, t1: f64, t2: f64) -> usize {
        self.mesh.max(((t2 - t1) / self.max_element).ceil() as usize + 1)
    }
}

fn count_opts(s: &IndexSettings) -> CountOptions {
    CountOptions { step: s.count_step, ..Default::default() }
}

/// Moves a window endpoint off a zero of u.
fn off_zero(orbit: &HeteroclinicOrbit, t: f64) -> f64 {
    let z = orbit.u_zeros();
    match z.iter().find(|x| (**x - t).abs() < 1e-6) {
        Some(x) => x + if t >= *x { 1e-5 } else { -1e-5 },
        None => t,
    }
}

/// μ(V_d, V(τ); [a, b]) with V spanned by the orbit alone.
pub fn maslov_of_v(orbit: &HeteroclinicOrbit, a: f64, b: f64, opts: &CountOptions) -> Result<MaslovCount> {
    let alpha = orbit.alpha();
    let path = |t: f64| Ok(v_frame(alpha, &orbit.point(t)?));
    maslov_count(&path, &vd(), a, b, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MaslovOfX {
    pub value: i64,
    pub window: (f64, f64),
    pub reversed: bool,
    pub crossings: Vec<CrossingRecord>,
}

fn hyperbolic_ends(orbit: &HeteroclinicOrbit) -> Result<()> {
    for e in [&orbit.source.eq, &orbit.sink.eq] {
        if !(e.delta > 0.0) {
            return Err(Error::NonHyperbolicBlock { delta: e.delta });
        }
    }
    Ok(())
}

/// Orbit with its source at ψ = −π/2 (type II orbits are run backwards).
pub fn normalized_orbit(orbit: &HeteroclinicOrbit) -> Result<(HeteroclinicOrbit, bool)> {
    if orbit.het_type == HetType::II {
        Ok((orbit.reversed()?, true))
    } else {
        Ok((orbit.clone(), false))
    }
}

/// μ(x) = μ(V_d, V⁻(τ)) over the lock window, checked under growth by `extend`.
pub fn maslov_of_x_with(cache: &LinearFlowCache, settings: &IndexSettings) -> Result<MaslovOfX> {
    let orbit = cache.orbit();
    hyperbolic_ends(orbit)?;
    let vm = cache.unstable_bundle()?;
    let path = |t: f64| vm.eval(t);
    let (ma, mb) = orbit.main_range();
    let (ra, rb) = cache.range();
    let opts = count_opts(settings);
    let w1 = (off_zero(orbit, ma), off_zero(orbit, mb));
    let w2 = (off_zero(orbit, (ma - settings.extend).max(ra)), off_zero(orbit, (mb + settings.extend).min(rb)));
    let c1 = maslov_count(&path, &vd(), w1.0, w1.1, &opts)?;
    let c2 = maslov_count(&path, &vd(), w2.0, w2.1, &opts)?;
    if c1.index != c2.index {
        return Err(Error::NotStabilized { first: c1.index, second: c2.index });
    }
    Ok(MaslovOfX { value: c2.index, window: w2, reversed: false, crossings: c2.crossings })
}

pub fn maslov_of_x(orbit: &HeteroclinicOrbit, settings: &IndexSettings) -> Result<MaslovOfX> {
    hyperbolic_ends(orbit)?;
    let (o, rev) = normalized_orbit(orbit)?;
    let cache = LinearFlowCache::new(&o, settings.integrator_tol)?;
    let mut m = maslov_of_x_with(&cache, settings)?;
    m.reversed = rev;
    Ok(m)
}

/// μ(V_d, γ̂(τ, τ₁)V_d; [τ₁, τ₂]) − 2.
pub fn morse_by_maslov(cache: &LinearFlowCache, t1: f64, t2: f64, opts: &CountOptions) -> Result<i64> {
    let p = cache.dirichlet_path(t1, t2)?;
    let path = |t: f64| p.eval(t);
    Ok(maslov_count(&path, &vd(), t1, t2, opts)?.index - 2)
}

/// Negative index of the second variation on the τ-window [τ₁, τ₂] with `n` FE nodes.
///
/// With a = 1 + α/2 and δr = r^{a/2}q₁, δθ = r^{a/2−1}q₂ the form becomes
/// ∫ (q₁′ + ½a v q₁)² + (q₂′ + (½a−1)v q₂)² + 4u q₁(q₂′ + (½a−1)v q₂)
///   + (u² + α(α+1)𝔘)q₁² − 2α𝔘_θ q₁q₂ + 𝔘_θθ q₂² dτ.
pub fn hessian_negative_count(orbit: &HeteroclinicOrbit, t1: f64, t2: f64, n: usize) -> Result<i64> {
    let alpha = orbit.alpha();
    let a1 = (2.0 + alpha) / 4.0;
    let a2 = a1 - 1.0;
    let coef = |t: f64| -> Result<(Matrix2<f64>, Matrix2<f64>)> {
        let p = orbit.point(t)?;
        let c = Matrix2::new(a1 * p.v, 0.0, 2.0 * p.u, a2 * p.v);
        let r12 = 2.0 * a2 * p.u * p.v - alpha * p.u_theta;
        let r = Matrix2::new(
            a1 * a1 * p.v * p.v + p.u * p.u + alpha * (alpha + 1.0) * p.u_val,
            r12,
            r12,
            a2 * a2 * p.v * p.v + p.u_theta_theta,
        );
        Ok((c, r))
    };
    fe_negative_count(&coef, t1, t2, n)
}

/// Negative index of ∫ q′ᵀq′ + 2q′ᵀCq + qᵀRq over H¹₀(t₁, t₂; ℝ²), P1 elements on `n` nodes.
pub fn fe_negative_count(
    coef: &dyn Fn(f64) -> Result<(Matrix2<f64>, Matrix2<f64>)>,
    t1: f64,
    t2: f64,
    n: usize,
) -> Result<i64> {
    if n < 3 || !(t2 > t1) {
        return Err(Error::InvalidArgument(format!("need n ≥ 3 nodes and τ₁ < τ₂ (got n = {n}, [{t1}, {t2}])")));
    }
    let ne = n - 1;
    let h = (t2 - t1) / ne as f64;
    let g = 0.5 * (0.6f64).sqrt();
    let gauss = [(0.5 - g, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + g, 5.0 / 18.0)];
    // block tridiagonal: diag[i], off[i] couples node i to i+1 (nodes 0..=ne, Dirichlet at both ends)
    let mut diag = vec![Matrix2::<f64>::zeros(); ne + 1];
    let mut off = vec![Matrix2::<f64>::zeros(); ne];
    let nd = [-1.0 / h, 1.0 / h];
    for e in 0..ne {
        let x0 = t1 + e as f64 * h;
        let mut k = [[Matrix2::<f64>::zeros(); 2]; 2];
        for (s, w) in gauss {
            let (c, r) = coef(x0 + s * h)?;
            let nv = [1.0 - s, s];
            for aa in 0..2 {
                for bb in 0..2 {
                    let blk = Matrix2::identity() * (nd[aa] * nd[bb])
                        + c * (nd[aa] * nv[bb])
                        + c.transpose() * (nv[aa] * nd[bb])
                        + r * (nv[aa] * nv[bb]);
                    k[aa][bb] += blk * (w * h);
                }
            }
        }
        diag[e] += k[0][0];
        diag[e + 1] += k[1][1];
        off[e] += k[0][1];
    }
    // Sylvester inertia of the interior block over nodes 1..ne-1
    let mut neg = 0i64;
    let mut s_prev: Option<Matrix2<f64>> = None;
    for i in 1..ne {
        let mut s = diag[i];
        if let Some(sp) = s_prev {
            let e = off[i - 1];
            let inv = sp.try_inverse().ok_or(Error::InvalidArgument("singular pivot in LDLᵀ".into()))?;
            s -= e.transpose() * inv * e;
        }
        let s = (s + s.transpose()) * 0.5;
        neg += s.symmetric_eigen().eigenvalues.iter().filter(|x| **x < 0.0).count() as i64;
        s_prev = Some(s);
    }
    Ok(neg)
}

/// Hessian count on a τ-window with the N / 2N convergence check.
pub fn morse_by_hessian_tau(orbit: &HeteroclinicOrbit, t1: f64, t2: f64, n: usize) -> Result<i64> {
    if n < 500 {
        return Err(Error::InvalidArgument(format!("N = {n} below the 500-node minimum")));
    }
    let coarse = hessian_negative_count(orbit, t1, t2, n)?;
    let fine = hessian_negative_count(orbit, t1, t2, 2 * n)?;
    if coarse != fine {
        return Err(Error::MeshNotConverged { n, coarse, fine });
    }
    Ok(fine)
}

/// Hessian count on the physical-time window [t₁, t₂].
pub fn morse_by_hessian(orbit: &HeteroclinicOrbit, t1: f64, t2: f64, n: usize) -> Result<i64> {
    let (lo, hi) = orbit.t_domain().ok_or_else(|| Error::InvalidArgument("orbit has no physical-time lift".into()))?;
    if !(t1 < t2) || t1 < lo || t2 > hi {
        return Err(Error::InvalidArgument(format!("[{t1}, {t2}] not inside the lifted range [{lo}, {hi}]")));
    }
    let a = orbit.tau_of_t(t1).ok_or_else(|| Error::InvalidArgument(format!("t = {t1} not attained")))?;
    let b = orbit.tau_of_t(t2).ok_or_else(|| Error::InvalidArgument(format!("t = {t2} not attained")))?;
    morse_by_hessian_tau(orbit, a, b, n)
}

/// Dirichlet negative count of −ξ″ + ¼Δ(θ₀)ξ on [0, L] with P1 elements on `n` nodes.
pub fn homothetic_morse(pot: &AnglePotential, theta0: f64, l: f64, n: usize) -> Result<i64> {
    let (_, u1, _) = pot.jet(theta0)?;
    if u1.abs() > 1e-8 {
        return Err(Error::NotACriticalPoint { theta: theta0, residual: u1.abs() });
    }
    if !(l > 0.0) || n < 3 {
        return Err(Error::InvalidArgument(format!("need L > 0 and n ≥ 3 (got {l}, {n})")));
    }
    let q = pot.delta(theta0)? / 4.0;
    let h = l / (n - 1) as f64;
    let d = 2.0 / h + q * 2.0 * h / 3.0;
    let e = -1.0 / h + q * h / 6.0;
    let mut neg = 0;
    let mut piv = f64::NAN;
    for i in 0..n - 2 {
        piv = if i == 0 { d } else { d - e * e / piv };
        if piv < 0.0 {
            neg += 1;
        }
    }
    Ok(neg)
}

// ------------------------------------------------------------------- report

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IntervalEntry {
    pub tau1: f64,
    pub tau2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    pub morse_by_hessian: Option<i64>,
    pub morse_by_maslov: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IndexReport {
    pub het_type: HetType,
    pub source: (f64, f64),
    pub sink: (f64, f64),
    pub source_direction: Direction,
    pub sink_direction: Direction,
    pub delta: (f64, f64),
    pub oscillation: Count,
    pub maslov_of_x: MaslovValue,
    pub maslov_of_v: Option<i64>,
    pub morse_by_maslov: Option<Count>,
    pub morse_by_hessian: Option<Count>,
    pub interval_trace: Vec<IntervalEntry>,
    pub theorem_verdicts: BTreeMap<String, bool>,
    pub errors: Vec<String>,
}

impl IndexReport {
    pub fn all_verdicts_hold(&self) -> bool {
        self.theorem_verdicts.values().all(|v| *v)
    }

    /// m⁻(x) − i(x) when both are finite.
    pub fn gap(&self) -> Option<i64> {
        Some(self.morse_by_hessian?.finite()? - self.oscillation.finite()?)
    }
}

fn is_global_min(pot: &AnglePotential, theta: f64) -> Result<bool> {
    let u0 = pot.u_value(theta)?;
    let cs = pot.critical_points(2048)?;
    let mut min = f64::INFINITY;
    for c in &cs.points {
        min = min.min(pot.u_value(c.theta0)?);
    }
    Ok(pot.u_theta_theta(theta)? > 0.0 && u0 <= min + 1e-12)
}

/// Computes every index the orbit admits and checks the predicted relations. Sub-operation
/// failures are collected in `errors` and turn the affected verdicts false.
pub fn verify_theorems(orbit: &HeteroclinicOrbit, settings: &IndexSettings) -> IndexReport {
    let mut rep = IndexReport {
        het_type: orbit.het_type,
        source: (orbit.source.eq.psi0, orbit.source.eq.theta0),
        sink: (orbit.sink.eq.psi0, orbit.sink.eq.theta0),
        source_direction: orbit.source_direction,
        sink_direction: orbit.sink_direction,
        delta: (orbit.source.eq.delta, orbit.sink.eq.delta),
        oscillation: oscillation_index(orbit, settings.cap),
        maslov_of_x: MaslovValue::Undefined { undefined: "not computed".into() },
        maslov_of_v: None,
        morse_by_maslov: None,
        morse_by_hessian: None,
        interval_trace: Vec::new(),
        theorem_verdicts: BTreeMap::new(),
        errors: Vec::new(),
    };
    let hyperbolic = rep.delta.0 > 0.0 && rep.delta.1 > 0.0;
    if hyperbolic {
        verify_hyperbolic(orbit, settings, &mut rep);
    } else {
        verify_spiral(orbit, settings, &mut rep);
    }
    rep
}

fn verify_hyperbolic(orbit: &HeteroclinicOrbit, settings: &IndexSettings, rep: &mut IndexReport) {
    let opts = count_opts(settings);
    let (o, _) = match normalized_orbit(orbit) {
        Ok(x) => x,
        Err(e) => {
            rep.errors.push(e.to_string());
            return;
        }
    };
    let (ma, mb) = o.main_range();
    let (ra, rb) = o.range();
    // V(τ) against the u-zeros
    let wa = off_zero(&o, (ma - settings.extend).max(ra));
    let wb = off_zero(&o, (mb + settings.extend).min(rb));
    match maslov_of_v(&o, wa, wb, &opts) {
        Ok(mv) => {
            rep.maslov_of_v = Some(mv.index);
            let zeros: Vec<f64> = o.u_zeros().into_iter().filter(|t| *t > wa && *t < wb).collect();
            let same_set = zeros.len() == mv.crossings.len()
                && zeros.iter().zip(&mv.crossings).all(|(z, c)| (z - c.tau).abs() < 1e-8);
            rep.theorem_verdicts.insert("thm42_equal".into(), mv.index == zeros.len() as i64 && same_set);
        }
        Err(e) => {
            rep.errors.push(format!("maslov of V: {e}"));
            rep.theorem_verdicts.insert("thm42_equal".into(), false);
        }
    }
    let cache = match LinearFlowCache::new(&o, settings.integrator_tol) {
        Ok(c) => c,
        Err(e) => {
            rep.errors.push(format!("linear flow: {e}"));
            rep.theorem_verdicts.insert("morse_index_theorem_holds".into(), false);
            return;
        }
    };
    match maslov_of_x_with(&cache, settings) {
        Ok(m) => rep.maslov_of_x = MaslovValue::Value(m.value),
        Err(e) => rep.maslov_of_x = MaslovValue::Undefined { undefined: e.to_string() },
    }
    // nested windows growing into the tails
    let mut mit = true;
    let mut hess = Vec::new();
    for k in 0..3 {
        let ext = settings.extend * k as f64 / 2.0;
        let t1 = off_zero(&o, (ma - ext).max(ra));
        let t2 = off_zero(&o, (mb + ext).min(rb));
        let h = morse_by_hessian_tau(&o, t1, t2, settings.nodes(t1, t2));
        let m = morse_by_maslov(&cache, t1, t2, &opts);
        if let Err(e) = &h {
            rep.errors.push(format!("hessian [{t1:.3}, {t2:.3}]: {e}"));
        }
        if let Err(e) = &m {
            rep.errors.push(format!("morse by maslov [{t1:.3}, {t2:.3}]: {e}"));
        }
        let (h, m) = (h.ok(), m.ok());
        mit &= h.is_some() && h == m;
        hess.push(h);
        rep.interval_trace.push(IntervalEntry {
            tau1: t1,
            tau2: t2,
            t1: o.t_of_tau(t1),
            t2: o.t_of_tau(t2),
            morse_by_hessian: h,
            morse_by_maslov: m,
        });
    }
    let last = rep.interval_trace.last().unwrap().clone();
    let stable = hess.len() >= 2 && hess[hess.len() - 1].is_some() && hess[hess.len() - 1] == hess[hess.len() - 2];
    if !stable {
        rep.errors.push("Hessian count not stabilized across the nested windows".into());
    }
    let monotone = hess.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if a <= b));
    rep.morse_by_hessian = last.morse_by_hessian.map(Count::Finite);
    rep.morse_by_maslov = last.morse_by_maslov.map(Count::Finite);
    rep.theorem_verdicts.insert("morse_index_theorem_holds".into(), mit && monotone);
    let i = rep.oscillation.finite();
    let m = if stable { last.morse_by_hessian } else { None };
    if let MaslovValue::Value(mu) = rep.maslov_of_x {
        rep.theorem_verdicts.insert("thm41_morse_equals_maslov".into(), m == Some(mu));
    } else {
        rep.theorem_verdicts.insert("thm41_morse_equals_maslov".into(), false);
    }
    let pot = o.potential();
    if pot.is_constant() {
        let zero = i == Some(0) && m == Some(0) && rep.maslov_of_x == MaslovValue::Value(0);
        rep.theorem_verdicts.insert("parabolic_zero".into(), zero);
        return;
    }
    let gap = match (m, i) {
        (Some(m), Some(i)) => Some(m - i),
        _ => None,
    };
    let src_min = pot.u_theta_theta(o.source.eq.theta0).map(|x| x > 0.0).unwrap_or(false);
    let mut ok = matches!(gap, Some(0) | Some(1));
    if src_min || o.source_direction == Direction::EPlus {
        ok &= gap == Some(0);
    }
    rep.theorem_verdicts.insert("thm12b_gap_in_01".into(), ok);
    let gmin = |t: f64| is_global_min(pot, t).unwrap_or(false);
    if o.het_type == HetType::I && gmin(o.source.eq.theta0) && gmin(o.sink.eq.theta0) {
        let zero = i == Some(0) && m == Some(0) && rep.maslov_of_x == MaslovValue::Value(0);
        rep.theorem_verdicts.insert("cor14_zero".into(), zero);
    }
}

/// Nested windows into the non-hyperbolic end(s); both counts must pass the cap.
fn verify_spiral(orbit: &HeteroclinicOrbit, settings: &IndexSettings, rep: &mut IndexReport) {
    rep.maslov_of_x = MaslovValue::Undefined { undefined: "non-hyperbolic endpoint".into() };
    let (ma, mb) = orbit.main_range();
    let (ra, rb) = orbit.range();
    let into_sink = orbit.sink.eq.delta < 0.0;
    let span = if into_sink { rb - mb } else { ma - ra };
    let mut hess: Vec<i64> = Vec::new();
    for k in 0..6 {
        let ext = span * (k as f64 + 1.0) / 6.0;
        let (t1, t2) = if into_sink { (ma, mb + ext) } else { (ma - ext, mb) };
        let (t1, t2) = (off_zero(orbit, t1.max(ra)), off_zero(orbit, t2.min(rb)));
        let n = settings.nodes(t1, t2);
        match morse_by_hessian_tau(orbit, t1, t2, n) {
            Ok(h) => {
                hess.push(h);
                rep.interval_trace.push(IntervalEntry {
                    tau1: t1,
                    tau2: t2,
                    t1: orbit.t_of_tau(t1),
                    t2: orbit.t_of_tau(t2),
                    morse_by_hessian: Some(h),
                    morse_by_maslov: None,
                });
            }
            Err(e) => rep.errors.push(format!("hessian [{t1:.3}, {t2:.3}]: {e}")),
        }
    }
    let increasing = hess.len() == 6 && hess.windows(2).all(|w| w[1] > w[0]);
    let reaches = hess.last().map_or(false, |h| *h as usize >= settings.cap);
    rep.morse_by_hessian = Some(if reaches {
        Count::Saturated { saturated: settings.cap }
    } else {
        Count::Finite(*hess.last().unwrap_or(&0))
    });
    rep.theorem_verdicts.insert(
        "thm12a_saturated".into(),
        rep.oscillation.is_saturated() && increasing && rep.morse_by_hessian.map_or(false, |c| c.is_saturated()),
    );
}
