//! Linearized flow along a zero-energy orbit in the normalized variables η = Rξ.
//!
//! Coordinates are ordered (p₁, p₂, q₁, q₂) = (p₁, p₂, r, θ) and J = [[0, −I], [I, 0]], so
//! ω(x, y) = (Jx, y) and V_d = ℝ² ⊕ 0 is the plane q = 0. Block 1 of the symplectic sum lives on
//! coordinates (p₁, q₁) = (0, 2), block 2 on (p₂, q₂) = (1, 3).

use nalgebra::{Matrix2, Matrix4, Matrix4x2, Vector2, Vector4};

use crate::dynamics::{Direction, HeteroclinicOrbit, OrbitPoint};
use crate::equilibria::C64;
use crate::error::{Error, Result};
use crate::integrator::{integrate, Options, Solution};
use crate::potential::{AnglePotential, TOL_DEG};

pub type Vec4 = Vector4<f64>;
pub type Mat4 = Matrix4<f64>;
pub type Frame4 = Matrix4x2<f64>;
pub type CMat2 = Matrix2<C64>;

pub fn j_matrix() -> Mat4 {
    let mut j = Mat4::zeros();
    j[(0, 2)] = -1.0;
    j[(1, 3)] = -1.0;
    j[(2, 0)] = 1.0;
    j[(3, 1)] = 1.0;
    j
}

pub fn omega(x: &Vec4, y: &Vec4) -> f64 {
    (j_matrix() * x).dot(y)
}

/// ‖SᵀJS − J‖_max.
pub fn symplectic_defect(s: &Mat4) -> f64 {
    let j = j_matrix();
    (s.transpose() * j * s - j).abs().max()
}

/// Same defect relative to |S|²; the meaningful measure once entries grow exponentially.
pub fn relative_symplectic_defect(s: &Mat4) -> f64 {
    let n = s.abs().max().max(1.0);
    symplectic_defect(s) / (n * n)
}

/// S⁻¹ = −JSᵀJ for symplectic S.
pub fn symplectic_inverse(s: &Mat4) -> Mat4 {
    let j = j_matrix();
    -(j * s.transpose() * j)
}

/// First-order pull back onto Sp(4): S(I + ½J E) with E = SᵀJS − J.
pub fn symplectic_correct(s: &Mat4) -> Mat4 {
    let j = j_matrix();
    let e = s.transpose() * j * s - j;
    s * (Mat4::identity() + j * e * 0.5)
}

/// Orthonormal basis of a Lagrangian plane.
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianFrame {
    cols: Frame4,
}

impl LagrangianFrame {
    /// Validates the spanning pair (rank and isotropy) and returns the orthonormal frame.
    pub fn new(cols: Frame4) -> Result<Self> {
        let qr = cols.qr();
        let r = qr.r();
        let scale = cols.column(0).norm().max(cols.column(1).norm());
        if !(scale > 0.0) || r[(0, 0)].abs().min(r[(1, 1)].abs()) < 1e-10 * scale {
            return Err(Error::InvalidArgument("frame columns are linearly dependent".into()));
        }
        let q = qr.q();
        let iso = omega(&q.column(0).into_owned(), &q.column(1).into_owned()).abs();
        if iso > 1e-10 {
            return Err(Error::InvalidArgument(format!("frame is not isotropic (ω = {iso:.3e})")));
        }
        Ok(Self::project(&q))
    }

    /// Nearest orthonormal Lagrangian frame: polar factor of q + ip. For an exact Lagrangian
    /// basis this keeps the plane and only orthonormalizes.
    pub fn project(cols: &Frame4) -> Self {
        let s = cols.column(0).norm().max(cols.column(1).norm());
        let c = if s > 0.0 { cols / s } else { *cols };
        let u = unitary_of(&c);
        let svd = u.svd(true, true);
        let w = svd.u.unwrap() * svd.v_t.unwrap();
        Self::from_unitary(&w)
    }

    pub fn from_unitary(u: &CMat2) -> Self {
        let mut cols = Frame4::zeros();
        for j in 0..2 {
            for i in 0..2 {
                cols[(i, j)] = u[(i, j)].im;
                cols[(i + 2, j)] = u[(i, j)].re;
            }
        }
        LagrangianFrame { cols }
    }

    /// V_d = ℝ² ⊕ 0.
    pub fn vd() -> Self {
        let mut cols = Frame4::zeros();
        cols[(0, 0)] = 1.0;
        cols[(1, 1)] = 1.0;
        LagrangianFrame { cols }
    }

    /// 0 ⊕ ℝ².
    pub fn horizontal() -> Self {
        let mut cols = Frame4::zeros();
        cols[(2, 0)] = 1.0;
        cols[(3, 1)] = 1.0;
        LagrangianFrame { cols }
    }

    /// span{(x₁ in block 1), (x₂ in block 2)}.
    pub fn from_blocks(b1: Vector2<f64>, b2: Vector2<f64>) -> Self {
        let mut cols = Frame4::zeros();
        cols.set_column(0, &embed(1, &b1));
        cols.set_column(1, &embed(2, &b2));
        Self::project(&cols)
    }

    /// p = A q with A symmetric.
    pub fn from_graph(a: &Matrix2<f64>) -> Self {
        let mut cols = Frame4::zeros();
        for j in 0..2 {
            for i in 0..2 {
                cols[(i, j)] = a[(i, j)];
            }
            cols[(j + 2, j)] = 1.0;
        }
        Self::project(&cols)
    }

    pub fn columns(&self) -> &Frame4 {
        &self.cols
    }

    /// q + ip.
    pub fn unitary(&self) -> CMat2 {
        unitary_of(&self.cols)
    }

    pub fn projector(&self) -> Mat4 {
        self.cols * self.cols.transpose()
    }

    /// ‖P_W − P_W*‖ in the operator 2-norm.
    pub fn distance(&self, other: &Self) -> f64 {
        let d = self.projector() - other.projector();
        d.symmetric_eigen().eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn isotropy_defect(&self) -> f64 {
        omega(&self.cols.column(0).into_owned(), &self.cols.column(1).into_owned()).abs()
    }

    /// Singular values of the pairing Z₁ᵀJZ₂; the plane intersection has dimension equal to the
    /// number of zero singular values.
    pub fn pairing_singular_values(&self, other: &Self) -> [f64; 2] {
        let m = self.cols.transpose() * j_matrix() * other.cols;
        let sv = m.singular_values();
        [sv[0].min(sv[1]), sv[0].max(sv[1])]
    }

    pub fn intersection_dim(&self, other: &Self, tol: f64) -> usize {
        self.pairing_singular_values(other).iter().filter(|s| **s < tol).count()
    }

    /// det of the q-block: zero exactly when the plane meets V_d.
    pub fn det_against_vd(&self) -> f64 {
        self.cols.fixed_view::<2, 2>(2, 0).determinant()
    }

    /// A with the plane = {p = Aq}, if the q-block is well conditioned.
    pub fn graph(&self) -> Option<Matrix2<f64>> {
        let p = self.cols.fixed_view::<2, 2>(0, 0).into_owned();
        let q = self.cols.fixed_view::<2, 2>(2, 0).into_owned();
        let sv = q.singular_values();
        if sv[0].min(sv[1]) < 1e-8 {
            return None;
        }
        let a = p * q.try_inverse()?;
        Some((a + a.transpose()) * 0.5)
    }

    pub fn transformed(&self, s: &Mat4) -> Self {
        Self::project(&(s * self.cols))
    }
}

fn unitary_of(cols: &Frame4) -> CMat2 {
    CMat2::from_fn(|i, j| C64::new(cols[(i + 2, j)], cols[(i, j)]))
}

/// Embeds (p, q) of block 1 or 2 into ℝ⁴.
pub fn embed(block: usize, x: &Vector2<f64>) -> Vec4 {
    let mut v = Vec4::zeros();
    let (ip, iq) = if block == 1 { (0, 2) } else { (1, 3) };
    v[ip] = x[0];
    v[iq] = x[1];
    v
}

/// M₁ ⋄ M₂ for 2×2 blocks [[a, b], [c, d]].
pub fn diamond(m1: &Matrix2<f64>, m2: &Matrix2<f64>) -> Mat4 {
    let mut m = Mat4::zeros();
    for (blk, idx) in [(m1, [0usize, 2]), (m2, [1, 3])] {
        for i in 0..2 {
            for j in 0..2 {
                m[(idx[i], idx[j])] = blk[(i, j)];
            }
        }
    }
    m
}

/// B(τ) = r^{1+α/2}∇²H in the original variables.
pub fn b_matrix(pot: &AnglePotential, r: f64, theta: f64, p2: f64) -> Result<Mat4> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("r = {r} must be positive")));
    }
    let (u0, u1, u2) = pot.jet(theta)?;
    let a = pot.alpha();
    let h = a / 2.0;
    let mut b = Mat4::zeros();
    b[(0, 0)] = r.powf(1.0 + h);
    b[(1, 1)] = r.powf(h - 1.0);
    b[(1, 2)] = -2.0 * r.powf(h - 2.0) * p2;
    b[(2, 1)] = b[(1, 2)];
    b[(2, 2)] = 3.0 * p2 * p2 / r.powf(3.0 - h) - a * (a + 1.0) * u0 / r.powf(1.0 + h);
    b[(2, 3)] = a * r.powf(-h) * u1;
    b[(3, 2)] = b[(2, 3)];
    b[(3, 3)] = -r.powf(1.0 - h) * u2;
    Ok(b)
}

pub fn r_matrix(alpha: f64, r: f64) -> Mat4 {
    let q = alpha / 4.0;
    Mat4::from_diagonal(&Vec4::new(r.powf(0.5 + q), r.powf(q - 0.5), r.powf(-0.5 - q), r.powf(0.5 - q)))
}

/// B̂ from (v, u) and the jet of 𝔘 at θ.
pub fn b_hat_from(alpha: f64, v: f64, u: f64, u0: f64, u1: f64, u2: f64) -> Mat4 {
    let mut b = Mat4::identity();
    b[(0, 2)] = -(2.0 + alpha) / 4.0 * v;
    b[(2, 0)] = b[(0, 2)];
    b[(1, 2)] = -2.0 * u;
    b[(2, 1)] = b[(1, 2)];
    b[(1, 3)] = (2.0 - alpha) / 4.0 * v;
    b[(3, 1)] = b[(1, 3)];
    b[(2, 2)] = 3.0 * u * u - alpha * (alpha + 1.0) * u0;
    b[(2, 3)] = alpha * u1;
    b[(3, 2)] = b[(2, 3)];
    b[(3, 3)] = -u2;
    b
}

pub fn b_hat_matrix(pot: &AnglePotential, v: f64, u: f64, theta: f64) -> Result<Mat4> {
    let (u0, u1, u2) = pot.jet(theta)?;
    Ok(b_hat_from(pot.alpha(), v, u, u0, u1, u2))
}

pub fn b_hat_at(alpha: f64, p: &OrbitPoint) -> Mat4 {
    b_hat_from(alpha, p.v, p.u, p.u_val, p.u_theta, p.u_theta_theta)
}

/// (B̂⁽¹⁾, B̂⁽²⁾) at an equilibrium.
pub fn b_hat_limit(pot: &AnglePotential, psi0: f64, theta0: f64) -> Result<(Matrix2<f64>, Matrix2<f64>)> {
    let (u0, u1, u2) = pot.jet(theta0)?;
    if u1.abs() > 1e-8 {
        return Err(Error::NotACriticalPoint { theta: theta0, residual: u1.abs() });
    }
    let a = pot.alpha();
    let ws = (2.0 * u0).sqrt() * psi0.sin().signum();
    let k1 = -(2.0 + a) / 4.0 * ws;
    let k2 = (2.0 - a) / 4.0 * ws;
    Ok((Matrix2::new(1.0, k1, k1, -a * (a + 1.0) * u0), Matrix2::new(1.0, k2, k2, -u2)))
}

/// Eigen-data of JB̂⁽¹⁾ and JB̂⁽²⁾; eigenvectors are (p, q) with q = 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticEigen {
    pub lambda1: (f64, f64),
    pub e1_minus: Vector2<f64>,
    pub e1_plus: Vector2<f64>,
    pub lambda2: (f64, f64),
    pub e2_minus: Vector2<f64>,
    pub e2_plus: Vector2<f64>,
}

pub fn asymptotic_eigen(pot: &AnglePotential, psi0: f64, theta0: f64) -> Result<AsymptoticEigen> {
    let (b1, b2) = b_hat_limit(pot, psi0, theta0)?;
    let delta = pot.delta(theta0)?;
    if !(delta > 0.0) {
        return Err(Error::NonHyperbolicBlock { delta });
    }
    let u0 = pot.u_value(theta0)?;
    let a = pot.alpha();
    let w = (2.0 * u0).sqrt();
    let l1 = (2.0 + 3.0 * a) / 4.0 * w;
    let l2 = 0.5 * delta.sqrt();
    // JB = [[−k, −d], [1, k]] has eigenvectors (λ − k, 1)
    let ev = |k: f64, l: f64| Vector2::new(l - k, 1.0);
    Ok(AsymptoticEigen {
        lambda1: (-l1, l1),
        e1_minus: ev(b1[(0, 1)], -l1),
        e1_plus: ev(b1[(0, 1)], l1),
        lambda2: (-l2, l2),
        e2_minus: ev(b2[(0, 1)], -l2),
        e2_plus: ev(b2[(0, 1)], l2),
    })
}

/// Limit of V(τ) at an endpoint approached along e±.
pub fn limit_frame(pot: &AnglePotential, psi0: f64, theta0: f64, direction: Direction) -> Result<LagrangianFrame> {
    if !pot.is_constant() && pot.u_theta_theta(theta0)?.abs() < TOL_DEG {
        return Err(Error::DegenerateCriticalPoint { theta: theta0 });
    }
    let ae = asymptotic_eigen(pot, psi0, theta0)?;
    let e1 = if psi0 < 0.0 { ae.e1_plus } else { ae.e1_minus };
    let e2 = match direction {
        Direction::EPlus => ae.e2_plus,
        Direction::EMinus => ae.e2_minus,
        Direction::Spiral => return Err(Error::NonHyperbolicBlock { delta: pot.delta(theta0)? }),
    };
    Ok(LagrangianFrame::from_blocks(e1, e2))
}

/// span{ê¹₊, ê²₊} (unstable) or span{ê¹₋, ê²₋} (stable) of JB̂ at an equilibrium.
pub fn hyperbolic_subspace(pot: &AnglePotential, psi0: f64, theta0: f64, unstable: bool) -> Result<LagrangianFrame> {
    let ae = asymptotic_eigen(pot, psi0, theta0)?;
    Ok(if unstable {
        LagrangianFrame::from_blocks(ae.e1_plus, ae.e2_plus)
    } else {
        LagrangianFrame::from_blocks(ae.e1_minus, ae.e2_minus)
    })
}

/// V(τ) from the orbit state alone. Far from u = 0 the pair (η₁, η₂) is used; near u = 0 the
/// pair degenerates like u², so η₂ is replaced by (2η₁ + vζ)/u with ζ = (2+α)η₂ (up to the r
/// prefactors), which by u² + v² = 2𝔘 equals ((2−α)u, 2𝔘_θ/u − (2−α)v, 0, 2).
pub fn v_frame(alpha: f64, p: &OrbitPoint) -> LagrangianFrame {
    let w2 = 2.0 * p.u_val;
    let e1 = Vec4::new(p.u * p.u - alpha * p.u_val, p.u_theta, p.v, p.u);
    let second = if p.u * p.u > 1e-4 * w2 {
        Vec4::new(alpha * p.v, (alpha - 2.0) * p.u, -2.0, 0.0)
    } else {
        let w = Vec4::new((2.0 - alpha) * p.u * p.u, 2.0 * p.u_theta - (2.0 - alpha) * p.u * p.v, 0.0, 2.0 * p.u);
        let m = w.abs().max();
        if m > 0.0 {
            w / m
        } else {
            w
        }
    };
    let mut cols = Frame4::zeros();
    cols.set_column(0, &(e1 / e1.norm()));
    cols.set_column(1, &(second / second.norm()));
    LagrangianFrame::project(&cols)
}

/// η₁, η₂ with their r prefactors and the frame they span.
pub fn eta_frames(orbit: &HeteroclinicOrbit, tau: f64) -> Result<(Vec4, Vec4, LagrangianFrame)> {
    let p = orbit.point(tau)?;
    let lr = orbit
        .log_r(tau)
        .ok_or_else(|| Error::InvalidArgument("orbit has no radial lift".into()))?;
    if orbit.trajectory.states.is_empty() {
        return Err(Error::HomotheticOrbit);
    }
    let a = orbit.alpha();
    let f1 = (-(2.0 + 3.0 * a) / 4.0 * lr).exp();
    let f2 = ((2.0 - a) / 4.0 * lr).exp();
    let eta1 = Vec4::new(p.u * p.u - a * p.u_val, p.u_theta, p.v, p.u) * f1;
    let eta2 = Vec4::new(a * p.v / (2.0 + a), (a - 2.0) / (a + 2.0) * p.u, -2.0 / (2.0 + a), 0.0) * f2;
    Ok((eta1, eta2, v_frame(a, &p)))
}

fn flat(m: &Mat4) -> [f64; 16] {
    let mut y = [0.0; 16];
    y.copy_from_slice(m.as_slice());
    y
}

fn unflat(y: &[f64; 16]) -> Mat4 {
    Mat4::from_column_slice(y)
}

/// Fundamental solutions γ̂ of η′ = JB̂(τ)η on unit segments of the orbit's τ-range.
#[derive(Clone, Debug)]
pub struct LinearFlowCache {
    orbit: HeteroclinicOrbit,
    knots: Vec<f64>,
    tangents: Vec<Vec4>,
    segs: Vec<Solution<16>>,
    ends: Vec<Mat4>,
    pub max_segment_defect: f64,
    pub b_hat_minus: Mat4,
    pub b_hat_plus: Mat4,
}

pub const SEGMENT: f64 = 0.5;

impl LinearFlowCache {
    pub fn new(orbit: &HeteroclinicOrbit, tol: f64) -> Result<Self> {
        let (a, b) = orbit.range();
        let n = ((b - a) / SEGMENT).ceil().max(1.0) as usize;
        let h = (b - a) / n as f64;
        let knots: Vec<f64> = (0..=n).map(|k| if k == n { b } else { a + k as f64 * h }).collect();
        let alpha = orbit.alpha();
        let opts = Options { rtol: tol, atol: tol, h_max: 0.1, ..Default::default() };
        let j = j_matrix();
        let mut segs = Vec::with_capacity(n);
        let mut ends = Vec::with_capacity(n);
        let mut worst = 0.0f64;
        for k in 0..n {
            let f = |t: f64, y: &[f64; 16]| -> Result<[f64; 16]> {
                let p = orbit.point(t)?;
                Ok(flat(&(j * b_hat_at(alpha, &p) * unflat(y))))
            };
            let sol = integrate(f, knots[k], flat(&Mat4::identity()), knots[k + 1], &opts, &[])?;
            let e = unflat(&sol.y_last());
            worst = worst.max(symplectic_defect(&e));
            ends.push(symplectic_correct(&e));
            segs.push(sol);
        }
        let bm = b_hat_at(alpha, &orbit.point(a)?);
        let bp = b_hat_at(alpha, &orbit.point(b)?);
        let tangents = knots.iter().map(|t| Ok(tangent_dir(alpha, &orbit.point(*t)?))).collect::<Result<Vec<_>>>()?;
        Ok(LinearFlowCache {
            orbit: orbit.clone(),
            knots,
            tangents,
            segs,
            ends,
            max_segment_defect: worst,
            b_hat_minus: bm,
            b_hat_plus: bp,
        })
    }

    pub fn orbit(&self) -> &HeteroclinicOrbit {
        &self.orbit
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    fn check(&self, t: f64) -> Result<()> {
        let (a, b) = self.range();
        if t < a - 1e-12 || t > b + 1e-12 {
            return Err(Error::InvalidArgument(format!("τ = {t} outside cached range [{a}, {b}]")));
        }
        Ok(())
    }

    fn seg_of(&self, t: f64) -> usize {
        let k = self.knots.partition_point(|x| *x <= t);
        k.saturating_sub(1).min(self.segs.len() - 1)
    }

    /// γ̂(τ, knot_k) for τ in segment k.
    fn local(&self, k: usize, t: f64) -> Mat4 {
        if t == self.knots[k + 1] {
            return self.ends[k];
        }
        unflat(&self.segs[k].eval(t))
    }

    pub fn b_hat(&self, t: f64) -> Result<Mat4> {
        Ok(b_hat_at(self.orbit.alpha(), &self.orbit.point(t)?))
    }

    /// γ̂(t2, t1). Entries grow like e^{c|t2−t1|}; long spans should go through frames.
    pub fn fundamental_solution(&self, t1: f64, t2: f64) -> Result<Mat4> {
        self.check(t1)?;
        self.check(t2)?;
        if t1 == t2 {
            return Ok(Mat4::identity());
        }
        if t2 < t1 {
            return Ok(symplectic_inverse(&self.fundamental_solution(t2, t1)?));
        }
        let k1 = self.seg_of(t1);
        let k2 = self.seg_of(t2);
        if k1 == k2 {
            let m = self.local(k1, t2) * symplectic_inverse(&self.local(k1, t1));
            return Ok(m);
        }
        let mut m = self.ends[k1] * symplectic_inverse(&self.local(k1, t1));
        for k in k1 + 1..k2 {
            m = self.ends[k] * m;
        }
        m = self.local(k2, t2) * m;
        Ok(if symplectic_defect(&m) > 1e-9 * m.abs().max().powi(2).max(1.0) { symplectic_correct(&m) } else { m })
    }

    /// Carries the plane `f` from t1 to t2, re-orthonormalizing at every knot.
    pub fn propagate_frame(&self, f: &LagrangianFrame, t1: f64, t2: f64) -> Result<LagrangianFrame> {
        let path = self.frame_path(f, t1, t2)?;
        path.eval(t2)
    }

    /// The path τ ↦ γ̂(τ, t0)F over the τ-interval between t0 and t_end.
    pub fn frame_path(&self, f: &LagrangianFrame, t0: f64, t_end: f64) -> Result<FramePath<'_>> {
        self.build_path(f.columns(), t0, t_end, false)
    }

    /// Same path for a plane containing the orbit tangent η₁: only a complement vector ξ is
    /// carried (modulo η₁), since η₁ itself is subdominant in one time direction and would be
    /// lost to round-off.
    pub fn frame_path_with_tangent(&self, xi: &Vec4, t0: f64, t_end: f64) -> Result<FramePath<'_>> {
        let mut c = Frame4::zeros();
        c.set_column(0, xi);
        self.build_path(&c, t0, t_end, true)
    }

    fn build_path(&self, f: &Frame4, t0: f64, t_end: f64, reduced: bool) -> Result<FramePath<'_>> {
        self.check(t0)?;
        self.check(t_end)?;
        let (lo, hi) = if t0 <= t_end { (t0, t_end) } else { (t_end, t0) };
        let k_lo = self.seg_of(lo);
        let k_hi = self.seg_of(hi);
        let k0 = self.seg_of(t0);
        let nseg = k_hi - k_lo + 1;
        let step = |m: Frame4, k: usize| -> Frame4 {
            if reduced {
                let mut c = Frame4::zeros();
                c.set_column(0, &reduce(&m.column(0).into_owned(), &self.tangents[k]));
                c
            } else {
                *LagrangianFrame::project(&m).columns()
            }
        };
        let mut starts = vec![Frame4::zeros(); nseg];
        starts[k0 - k_lo] = step(symplectic_inverse(&self.local(k0, t0)) * f, k0);
        for k in k0 + 1..=k_hi {
            starts[k - k_lo] = step(self.ends[k - 1] * starts[k - 1 - k_lo], k);
        }
        for k in (k_lo..k0).rev() {
            starts[k - k_lo] = step(symplectic_inverse(&self.ends[k]) * starts[k + 1 - k_lo], k);
        }
        Ok(FramePath { cache: self, lo, hi, k_lo, starts, reduced, splice: None })
    }

    fn tangent_at(&self, t: f64) -> Result<Vec4> {
        Ok(tangent_dir(self.orbit.alpha(), &self.orbit.point(t)?))
    }

    fn raw_unstable(&self) -> Result<FramePath<'_>> {
        let s = &self.orbit.source;
        let pot = self.orbit.potential();
        let (a, b) = self.range();
        if s.eq.psi0 < 0.0 {
            let ae = asymptotic_eigen(pot, s.eq.psi0, s.eq.theta0)?;
            self.frame_path_with_tangent(&embed(2, &ae.e2_plus), a, b)
        } else {
            self.frame_path(&hyperbolic_subspace(pot, s.eq.psi0, s.eq.theta0, true)?, a, b)
        }
    }

    fn raw_stable(&self) -> Result<FramePath<'_>> {
        let s = &self.orbit.sink;
        let pot = self.orbit.potential();
        let (a, b) = self.range();
        if s.eq.psi0 > 0.0 {
            let ae = asymptotic_eigen(pot, s.eq.psi0, s.eq.theta0)?;
            self.frame_path_with_tangent(&embed(2, &ae.e2_minus), b, a)
        } else {
            self.frame_path(&hyperbolic_subspace(pot, s.eq.psi0, s.eq.theta0, false)?, b, a)
        }
    }

    /// Two invariant planes that agree at one τ agree everywhere. A bundle carried from its own
    /// end loses accuracy wherever its quotient line sits near the repelling one, so once it is
    /// found to coincide with V (known exactly) or with the opposite bundle, the rest of the path
    /// is taken from that representative. Returns the best-agreement τ over the main range.
    fn coincidence(&self, p: &FramePath<'_>, other: &dyn Fn(f64) -> Result<LagrangianFrame>) -> Result<Option<f64>> {
        let (ma, mb) = self.orbit.main_range();
        let mut best = (f64::INFINITY, ma);
        for k in 0..=40 {
            let t = ma + (mb - ma) * k as f64 / 40.0;
            let d = p.eval(t)?.distance(&other(t)?);
            if d < best.0 {
                best = (d, t);
            }
        }
        Ok((best.0 < 1e-8).then_some(best.1))
    }

    fn v_at(&self, t: f64) -> Result<LagrangianFrame> {
        Ok(v_frame(self.orbit.alpha(), &self.orbit.point(t)?))
    }

    fn spliced<'a>(&'a self, mut own: FramePath<'a>, opposite: FramePath<'a>, above: bool) -> Result<FramePath<'a>> {
        if let Some(t) = self.coincidence(&own, &|t| self.v_at(t))? {
            own.splice = Some((t, above, Splice::Exact));
        } else if let Some(t) = self.coincidence(&own, &|t| opposite.eval(t))? {
            own.splice = Some((t, above, Splice::Path(Box::new(opposite))));
        }
        Ok(own)
    }

    /// V⁻ seeded with the unstable subspace of JB̂₋ at the start of the range.
    pub fn unstable_bundle(&self) -> Result<FramePath<'_>> {
        self.spliced(self.raw_unstable()?, self.raw_stable()?, true)
    }

    /// V⁺ seeded with the stable subspace of JB̂₊ at the end of the range.
    pub fn stable_bundle(&self) -> Result<FramePath<'_>> {
        self.spliced(self.raw_stable()?, self.raw_unstable()?, false)
    }

    /// dim(V⁻ ∩ V⁺) at the middle of the main range, with the largest pairing singular value.
    pub fn bundle_intersection(&self) -> Result<(usize, f64)> {
        let um = self.unstable_bundle()?;
        let sp = self.stable_bundle()?;
        let (ma, mb) = self.orbit.main_range();
        let t = 0.5 * (ma + mb);
        let sv = um.eval(t)?.pairing_singular_values(&sp.eval(t)?);
        Ok((sv.iter().filter(|x| **x < 1e-8).count(), sv[1]))
    }

    pub fn stable_unstable_frame(&self, tau: f64, which: Bundle) -> Result<LagrangianFrame> {
        match which {
            Bundle::Unstable => self.unstable_bundle()?.eval(tau),
            Bundle::Stable => self.stable_bundle()?.eval(tau),
        }
    }

    /// γ̂(τ, τ₁)V_d on [τ₁, τ₂].
    pub fn dirichlet_path(&self, t1: f64, t2: f64) -> Result<FramePath<'_>> {
        self.frame_path(&LagrangianFrame::vd(), t1, t2)
    }
}

/// Unit vector along η₁ = (u² − α𝔘, 𝔘_θ, v, u), the orbit tangent in normalized variables.
pub fn tangent_dir(alpha: f64, p: &OrbitPoint) -> Vec4 {
    Vec4::new(p.u * p.u - alpha * p.u_val, p.u_theta, p.v, p.u).normalize()
}

/// Complement of the unit tangent `e` inside its ω-orthogonal hyperplane. Dropping the Je
/// component keeps span{e, y} Lagrangian; without it round-off along the direction paired with
/// e grows fastest near a node sink and drags the carried line off the bundle.
fn reduce(x: &Vec4, e: &Vec4) -> Vec4 {
    let je = j_matrix() * e;
    let y = x - e * e.dot(x) - je * je.dot(x);
    y / y.norm()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bundle {
    /// V⁻: decays as τ → −∞
    Unstable,
    /// V⁺: decays as τ → +∞
    Stable,
}

/// A propagated Lagrangian path, evaluated from the data stored at segment starts.
#[derive(Clone, Debug)]
pub struct FramePath<'a> {
    cache: &'a LinearFlowCache,
    pub lo: f64,
    pub hi: f64,
    k_lo: usize,
    starts: Vec<Frame4>,
    reduced: bool,
    /// (τ*, switch above τ* (else below), representative)
    splice: Option<(f64, bool, Splice<'a>)>,
}

#[derive(Clone, Debug)]
enum Splice<'a> {
    Exact,
    Path(Box<FramePath<'a>>),
}

impl FramePath<'_> {
    pub fn eval(&self, t: f64) -> Result<LagrangianFrame> {
        if t < self.lo - 1e-12 || t > self.hi + 1e-12 {
            return Err(Error::InvalidArgument(format!("τ = {t} outside path [{}, {}]", self.lo, self.hi)));
        }
        if let Some((ts, above, other)) = &self.splice {
            if (t > *ts) == *above {
                return match other {
                    Splice::Exact => self.cache.v_at(t),
                    Splice::Path(p) => p.eval(t),
                };
            }
        }
        let k = self.cache.seg_of(t.clamp(self.lo, self.hi));
        let f = self.starts[k - self.k_lo];
        let m = self.cache.local(k, t) * f;
        if self.reduced {
            let e = self.cache.tangent_at(t)?;
            let mut c = Frame4::zeros();
            c.set_column(0, &e);
            c.set_column(1, &reduce(&m.column(0).into_owned(), &e));
            Ok(LagrangianFrame::project(&c))
        } else {
            Ok(LagrangianFrame::project(&m))
        }
    }

    pub fn is_spliced(&self) -> bool {
        self.splice.is_some()
    }
}

/// CSV of a frame path: τ, the eight entries (column-major), det of the q-block.
pub fn frame_path_csv(taus: &[f64], path: impl Fn(f64) -> Result<LagrangianFrame>) -> Result<String> {
    let mut s = String::from("tau,z11,z21,z31,z41,z12,z22,z32,z42,det_vd\n");
    for &t in taus {
        let f = path(t)?;
        let c = f.columns();
        let cells: Vec<String> = c.iter().map(|x| format!("{x:.15e}")).collect();
        s.push_str(&format!("{t:.15e},{},{:.15e}\n", cells.join(","), f.det_against_vd()));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{shoot_heteroclinic, ShootOptions};
    use crate::equilibria::{find_equilibria, Equilibrium};
    use std::f64::consts::FRAC_PI_2;

    fn orbit(mu: f64, alpha: f64, s: f64, th: f64, sign: f64) -> HeteroclinicOrbit {
        let pot = AnglePotential::anisotropic(alpha, mu).unwrap();
        let atlas = find_equilibria(&pot).unwrap();
        let eq = Equilibrium::at(&pot, s, th).unwrap();
        shoot_heteroclinic(&pot, &atlas, &eq, sign, &ShootOptions { richardson: false, tau_max: 600.0, ..Default::default() }).unwrap()
    }

    #[test]
    fn r_matrix_values() {
        assert_eq!(r_matrix(1.3, 1.0), Mat4::identity());
        let r = r_matrix(1.0, 10.0);
        assert!(symplectic_defect(&r) < 1e-12);
        let r = r_matrix(1.0, 4.0);
        let want = [4f64.powf(0.75), 4f64.powf(-0.25), 4f64.powf(-0.75), 4f64.powf(0.25)];
        for i in 0..4 {
            assert!((r[(i, i)] - want[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn b_matrix_is_the_scaled_hessian() {
        let pot = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        let a = pot.alpha();
        let h = |z: &Vec4| {
            let (p1, p2, r, th) = (z[0], z[1], z[2], z[3]);
            0.5 * p1 * p1 + 0.5 * p2 * p2 / (r * r) - pot.u_value(th).unwrap() / r.powf(a)
        };
        let z = Vec4::new(0.3, -0.7, 1.7, 0.4);
        let e = 1e-4;
        let mut hess = Mat4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                let mut zpp = z;
                zpp[i] += e;
                zpp[j] += e;
                let mut zpm = z;
                zpm[i] += e;
                zpm[j] -= e;
                let mut zmp = z;
                zmp[i] -= e;
                zmp[j] += e;
                let mut zmm = z;
                zmm[i] -= e;
                zmm[j] -= e;
                hess[(i, j)] = (h(&zpp) - h(&zpm) - h(&zmp) + h(&zmm)) / (4.0 * e * e);
            }
        }
        let b = b_matrix(&pot, z[2], z[3], z[1]).unwrap();
        let want = hess * z[2].powf(1.0 + a / 2.0);
        assert!((b - want).abs().max() < 1e-5 * want.abs().max());
        assert_eq!(b, b.transpose());
    }

    #[test]
    fn b_hat_relation_and_limit_blocks() {
        let o = orbit(2.0, 1.0, -1.0, 0.0, 1.0);
        let pot = o.potential().clone();
        let a = pot.alpha();
        let j = j_matrix();
        for t in [1.0, 5.0, 9.0] {
            let p = o.point(t).unwrap();
            let lr = o.log_r(t).unwrap();
            let r = lr.exp();
            let p2 = r.powf(1.0 - a / 2.0) * p.u;
            let rm = r_matrix(a, r);
            // R′ = (dR/dr)·r v, and dR/dr·r = diag(exponent)·R
            let ex = Vec4::new(0.5 + a / 4.0, a / 4.0 - 0.5, -0.5 - a / 4.0, 0.5 - a / 4.0);
            let rp = Mat4::from_diagonal(&ex.component_mul(&rm.diagonal())) * p.v;
            let ri = rm.try_inverse().unwrap();
            let bh = -j * rp * ri + ri * b_matrix(&pot, r, p.theta, p2).unwrap() * ri;
            let direct = b_hat_matrix(&pot, p.v, p.u, p.theta).unwrap();
            assert!((bh - direct).abs().max() < 1e-8, "{}", (bh - direct).abs().max());
        }
        let (b1, b2) = b_hat_limit(&pot, FRAC_PI_2, FRAC_PI_2).unwrap();
        let r2 = 2f64.sqrt() / 4.0;
        assert!((b2 - Matrix2::new(1.0, r2, r2, 1.0)).abs().max() < 1e-12);
        let v = (2.0 * pot.u_value(FRAC_PI_2).unwrap()).sqrt();
        let lim = b_hat_matrix(&pot, v, 0.0, FRAC_PI_2).unwrap();
        assert!((lim - diamond(&b1, &b2)).abs().max() < 1e-14);
        let k = AnglePotential::kepler(1.0, 1.0).unwrap();
        assert_eq!(b_hat_limit(&k, FRAC_PI_2, 0.2).unwrap().1[(1, 1)], 0.0);
    }

    #[test]
    fn asymptotic_eigen_formulas() {
        let pot = AnglePotential::fourier(1.0, 1.0, vec![0.0, 0.2], vec![]).unwrap();
        assert!(matches!(asymptotic_eigen(&pot, FRAC_PI_2, 0.3), Err(Error::NotACriticalPoint { .. })));
        let pot = AnglePotential::anisotropic(1.0, 1.05).unwrap();
        for (s, th) in [(-1.0, 0.0), (1.0, 0.0), (-1.0, FRAC_PI_2), (1.0, FRAC_PI_2)] {
            let psi0 = s * FRAC_PI_2;
            let ae = asymptotic_eigen(&pot, psi0, th).unwrap();
            let (b1, b2) = b_hat_limit(&pot, psi0, th).unwrap();
            let j2 = Matrix2::new(0.0, -1.0, 1.0, 0.0);
            for (b, l, em, ep) in [(b1, ae.lambda1, ae.e1_minus, ae.e1_plus), (b2, ae.lambda2, ae.e2_minus, ae.e2_plus)] {
                let m = j2 * b;
                assert!((m * em - em * l.0).norm() < 1e-12);
                assert!((m * ep - ep * l.1).norm() < 1e-12);
            }
            let u0 = pot.u_value(th).unwrap();
            let w = (2.0 * u0).sqrt();
            assert!((ae.lambda1.1 - 1.25 * w).abs() < 1e-12);
            assert!((ae.e1_plus[0] - ((3.0 * s + 5.0) / 4.0) * w).abs() < 1e-12);
            // pairings at the limits
            let e1m = embed(1, &ae.e1_minus);
            let e1p = embed(1, &ae.e1_plus);
            let e2p = embed(2, &ae.e2_plus);
            assert!(omega(&e1m, &e2p).abs() < 1e-10);
            if s > 0.0 {
                assert!((omega(&e1m, &e1p) + 2.5 * w).abs() < 1e-10);
            }
        }
        // Δ ≤ 0
        let p2 = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        assert!(matches!(asymptotic_eigen(&p2, FRAC_PI_2, FRAC_PI_2), Err(Error::NonHyperbolicBlock { .. })));
        // Kepler limit vector ê²₋ at (π/2, θ₀)
        let (al, m) = (0.8, 1.7);
        let k = AnglePotential::kepler(al, m).unwrap();
        let ae = asymptotic_eigen(&k, FRAC_PI_2, 0.3).unwrap();
        assert!((ae.e2_minus[0] + (2.0 - al) * (m / 2.0).sqrt()).abs() < 1e-12);
        assert!((ae.e1_minus[0] + al * (m / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn frames_and_distance() {
        let vd = LagrangianFrame::vd();
        let h = LagrangianFrame::horizontal();
        assert!((vd.distance(&h) - 1.0).abs() < 1e-14);
        assert_eq!(vd.intersection_dim(&vd, 1e-12), 2);
        assert_eq!(vd.intersection_dim(&h, 1e-12), 0);
        let a = Matrix2::new(0.3, -0.4, -0.4, 2.0);
        let g = LagrangianFrame::from_graph(&a);
        assert!((g.graph().unwrap() - a).abs().max() < 1e-12);
        assert!(g.isotropy_defect() < 1e-14);
        let mut bad = Frame4::zeros();
        bad[(0, 0)] = 1.0;
        bad[(2, 1)] = 1.0;
        assert!(LagrangianFrame::new(bad).is_err());
    }

    #[test]
    fn eta_vectors_are_isotropic_and_span_v() {
        let o = orbit(1.05, 1.0, -1.0, 0.0, 1.0);
        let (ma, mb) = o.main_range();
        for k in 0..=20 {
            let t = ma + (mb - ma) * k as f64 / 20.0;
            let (e1, e2, v) = eta_frames(&o, t).unwrap();
            let n = e1.norm() * e2.norm();
            assert!(omega(&e1, &e2).abs() < 1e-10 * n);
            let p = v.projector();
            assert!((p * e1 - e1).norm() < 1e-8 * e1.norm());
            assert!((p * e2 - e2).norm() < 1e-8 * e2.norm());
        }
    }

    #[test]
    fn fundamental_solution_properties() {
        let o = orbit(1.05, 1.0, -1.0, 0.0, 1.0);
        let c = LinearFlowCache::new(&o, 1e-11).unwrap();
        assert!(c.max_segment_defect < 1e-8);
        let (ma, _) = o.main_range();
        let t1 = ma + 3.1;
        assert_eq!(c.fundamental_solution(t1, t1).unwrap(), Mat4::identity());
        let g21 = c.fundamental_solution(t1, t1 + 4.0).unwrap();
        let g32 = c.fundamental_solution(t1 + 4.0, t1 + 7.3).unwrap();
        let g31 = c.fundamental_solution(t1, t1 + 7.3).unwrap();
        assert!((g32 * g21 - g31).abs().max() < 1e-7 * g31.abs().max());
        let g = c.fundamental_solution(t1, t1 + 50.0).unwrap();
        assert!(relative_symplectic_defect(&g) < 1e-8);
        // η₁ solves the flow; (η₂ + c·η₁) does too, so the plane is carried along
        let (e1a, _, va) = eta_frames(&o, t1).unwrap();
        let (e1b, _, vb) = eta_frames(&o, t1 + 4.0).unwrap();
        assert!((g21 * e1a - e1b).norm() < 1e-6 * e1b.norm());
        assert!(va.transformed(&g21).distance(&vb) < 1e-6);
    }

    #[test]
    fn v_equals_unstable_bundle_for_eplus_source() {
        // saddle source leaves along e₊
        let o = orbit(1.05, 1.0, -1.0, 0.0, 1.0);
        assert_eq!(o.source_direction, Direction::EPlus);
        let c = LinearFlowCache::new(&o, 1e-11).unwrap();
        let vm = c.unstable_bundle().unwrap();
        let (ma, mb) = o.main_range();
        for k in 0..=10 {
            let t = ma + (mb - ma) * k as f64 / 10.0;
            let v = v_frame(o.alpha(), &o.point(t).unwrap());
            assert!(vm.eval(t).unwrap().distance(&v) < 1e-6);
        }
        // limits of V(τ) at both ends
        let (a, b) = o.range();
        let src = limit_frame(o.potential(), o.source.eq.psi0, o.source.eq.theta0, o.source_direction).unwrap();
        let snk = limit_frame(o.potential(), o.sink.eq.psi0, o.sink.eq.theta0, o.sink_direction).unwrap();
        assert!(v_frame(o.alpha(), &o.point(a).unwrap()).distance(&src) < 1e-3);
        assert!(v_frame(o.alpha(), &o.point(b).unwrap()).distance(&snk) < 1e-3);
    }

    #[test]
    fn stable_bundle_converges_and_repels() {
        let o = orbit(1.05, 1.0, -1.0, 0.0, 1.0);
        let c = LinearFlowCache::new(&o, 1e-11).unwrap();
        let (ma, mb) = o.main_range();
        let vp = c.stable_bundle().unwrap();
        let t = 0.5 * (ma + mb);
        let f = vp.eval(t).unwrap();
        // invariance: carrying V⁺(t) backward reproduces V⁺ there
        let back = c.propagate_frame(&f, t, t - 6.0).unwrap();
        assert!(back.distance(&vp.eval(t - 6.0).unwrap()) < 1e-8);
        let lim = hyperbolic_subspace(o.potential(), o.sink.eq.psi0, o.sink.eq.theta0, false).unwrap();
        assert!(vp.eval(mb + 10.0).unwrap().distance(&lim) < 1e-3);
        // a vector off V⁺ grows
        let x = Vec4::new(0.3, -0.2, 0.9, 0.1);
        let xo = x - f.projector() * x;
        let g = c.fundamental_solution(t, t + 10.0).unwrap();
        assert!((g * xo).norm() > xo.norm() * 100.0);
    }
}
