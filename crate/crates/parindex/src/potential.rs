//! Angular profiles 𝔘 of (−α)-homogeneous planar potentials U(x) = 𝔘(x/|x|)/|x|^α.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::angle::wrap_pi;
use crate::error::{Error, Result};

/// Binary-collision guard for the isosceles profile.
pub const DELTA_SING: f64 = 1e-6;
/// Threshold on |𝔘_θθ| below which a critical point counts as degenerate.
pub const TOL_DEG: f64 = 1e-8;

const POSITIVITY_GRID: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum PotentialKind {
    /// (μ cos²θ + sin²θ)^{-1/2}
    Anisotropic { mu: f64 },
    /// Reduced isosceles three-body profile with outer masses 1 and middle mass m.
    Isosceles { m: f64 },
    KeplerConstant { m: f64 },
    /// constant + Σ_k cosCoeffs[k−1] cos kθ + sinCoeffs[k−1] sin kθ
    Fourier {
        cos_coeffs: Vec<f64>,
        sin_coeffs: Vec<f64>,
        constant: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotential")]
pub struct AnglePotential {
    alpha: f64,
    #[serde(flatten)]
    kind: PotentialKind,
}

#[derive(Deserialize)]
struct RawPotential {
    alpha: f64,
    #[serde(flatten)]
    kind: PotentialKind,
}

impl TryFrom<RawPotential> for AnglePotential {
    type Error = Error;
    fn try_from(raw: RawPotential) -> Result<Self> {
        AnglePotential::new(raw.alpha, raw.kind)
    }
}

impl AnglePotential {
    pub fn new(alpha: f64, kind: PotentialKind) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::InvalidPotential(format!("alpha = {alpha} not in (0, 2)")));
        }
        match &kind {
            PotentialKind::Anisotropic { mu } if !(*mu > 1.0 && mu.is_finite()) => {
                return Err(Error::InvalidPotential(format!("anisotropic needs mu > 1, got {mu}")));
            }
            PotentialKind::Isosceles { m } | PotentialKind::KeplerConstant { m }
                if !(*m > 0.0 && m.is_finite()) =>
            {
                return Err(Error::InvalidPotential(format!("mass must be positive, got {m}")));
            }
            _ => {}
        }
        let pot = AnglePotential { alpha, kind };
        pot.check_profile()?;
        Ok(pot)
    }

    pub fn anisotropic(alpha: f64, mu: f64) -> Result<Self> {
        Self::new(alpha, PotentialKind::Anisotropic { mu })
    }

    pub fn isosceles(alpha: f64, m: f64) -> Result<Self> {
        Self::new(alpha, PotentialKind::Isosceles { m })
    }

    pub fn kepler(alpha: f64, m: f64) -> Result<Self> {
        Self::new(alpha, PotentialKind::KeplerConstant { m })
    }

    pub fn fourier(alpha: f64, constant: f64, cos_coeffs: Vec<f64>, sin_coeffs: Vec<f64>) -> Result<Self> {
        Self::new(alpha, PotentialKind::Fourier { cos_coeffs, sin_coeffs, constant })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    /// Same profile with a different homogeneity degree.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::new(alpha, self.kind.clone())
    }

    pub fn descriptor(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("potential serializes")
    }

    /// True when 𝔘 is constant, so that every θ is a (degenerate) critical point.
    pub fn is_constant(&self) -> bool {
        match &self.kind {
            PotentialKind::KeplerConstant { .. } => true,
            PotentialKind::Fourier { cos_coeffs, sin_coeffs, .. } => {
                cos_coeffs.iter().chain(sin_coeffs).all(|c| *c == 0.0)
            }
            _ => false,
        }
    }

    fn check_profile(&self) -> Result<()> {
        for j in 0..POSITIVITY_GRID {
            let th = -PI + (j as f64 + 0.5) * TAU / POSITIVITY_GRID as f64;
            match self.u_value(th) {
                Ok(u) if u > 0.0 && u.is_finite() => {}
                Ok(u) => {
                    return Err(Error::InvalidPotential(format!("𝔘({th:.6}) = {u} is not positive")));
                }
                Err(Error::SingularAngle { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        if !matches!(self.kind, PotentialKind::Isosceles { .. }) {
            let (a, b) = (self.eval(-PI), self.eval(PI));
            for (x, y) in [(a.0, b.0), (a.1, b.1), (a.2, b.2)] {
                if (x - y).abs() > 1e-12 * (1.0 + x.abs()) {
                    return Err(Error::InvalidPotential("profile is not 2π-periodic".into()));
                }
            }
        }
        Ok(())
    }

    fn guard(&self, theta: f64) -> Result<()> {
        if let PotentialKind::Isosceles { .. } = self.kind {
            let d = wrap_pi(2.0 * (theta - FRAC_PI_2)).abs() / 2.0;
            if d < DELTA_SING || !theta.is_finite() {
                return Err(Error::SingularAngle { theta });
            }
        }
        Ok(())
    }

    /// (𝔘, 𝔘_θ, 𝔘_θθ) without the singularity guard.
    fn eval(&self, theta: f64) -> (f64, f64, f64) {
        let (s, c) = theta.sin_cos();
        match &self.kind {
            PotentialKind::Anisotropic { mu } => {
                let k = mu - 1.0;
                let g = mu - k * s * s;
                let g1 = -k * (2.0 * theta).sin();
                let g2 = -2.0 * k * (2.0 * theta).cos();
                let u = g.powf(-0.5);
                let u1 = -0.5 * g.powf(-1.5) * g1;
                let u2 = 0.75 * g.powf(-2.5) * g1 * g1 - 0.5 * g.powf(-1.5) * g2;
                (u, u1, u2)
            }
            PotentialKind::Isosceles { m } => {
                let a = m.powf(2.5) / 2f64.sqrt();
                let b = 2.0 * 2f64.sqrt() * m.powf(1.5);
                let ac = c.abs();
                let sigma = c.signum();
                let f = a / ac;
                let f1 = a * s * sigma / (c * c);
                let f2 = a * (1.0 + s * s) / (ac * ac * ac);
                let h = 1.0 + 2.0 * m * s * s;
                let h1 = 4.0 * m * s * c;
                let h2 = 4.0 * m * (2.0 * theta).cos();
                let g = b * h.powf(-0.5);
                let g1 = -0.5 * b * h.powf(-1.5) * h1;
                let g2 = b * (0.75 * h.powf(-2.5) * h1 * h1 - 0.5 * h.powf(-1.5) * h2);
                (f + g, f1 + g1, f2 + g2)
            }
            PotentialKind::KeplerConstant { m } => (*m, 0.0, 0.0),
            PotentialKind::Fourier { cos_coeffs, sin_coeffs, constant } => {
                let (mut u, mut u1, mut u2) = (*constant, 0.0, 0.0);
                for (k, a) in cos_coeffs.iter().enumerate() {
                    let kf = (k + 1) as f64;
                    let (sk, ck) = (kf * theta).sin_cos();
                    u += a * ck;
                    u1 -= a * kf * sk;
                    u2 -= a * kf * kf * ck;
                }
                for (k, b) in sin_coeffs.iter().enumerate() {
                    let kf = (k + 1) as f64;
                    let (sk, ck) = (kf * theta).sin_cos();
                    u += b * sk;
                    u1 += b * kf * ck;
                    u2 -= b * kf * kf * sk;
                }
                (u, u1, u2)
            }
        }
    }

    pub fn u_value(&self, theta: f64) -> Result<f64> {
        self.guard(theta)?;
        Ok(self.eval(theta).0)
    }

    pub fn u_theta(&self, theta: f64) -> Result<f64> {
        self.guard(theta)?;
        Ok(self.eval(theta).1)
    }

    pub fn u_theta_theta(&self, theta: f64) -> Result<f64> {
        self.guard(theta)?;
        Ok(self.eval(theta).2)
    }

    /// (𝔘, 𝔘_θ, 𝔘_θθ) in one evaluation.
    pub fn jet(&self, theta: f64) -> Result<(f64, f64, f64)> {
        self.guard(theta)?;
        Ok(self.eval(theta))
    }

    /// Δ(θ) = (2−α)²/2 𝔘 + 4 𝔘_θθ.
    pub fn delta(&self, theta: f64) -> Result<f64> {
        let (u, _, u2) = self.jet(theta)?;
        Ok(delta_from(self.alpha, u, u2))
    }

    /// Critical points of 𝔘 located by sign changes of 𝔘_θ on an offset grid and refined by
    /// safeguarded Newton.
    pub fn critical_points(&self, grid_n: usize) -> Result<CriticalSet> {
        if grid_n < 256 {
            return Err(Error::InvalidArgument(format!("gridN = {grid_n} < 256")));
        }
        if self.is_constant() {
            return Ok(CriticalSet { points: Vec::new(), continuum: true });
        }
        let step = TAU / grid_n as f64;
        // irrational offset keeps grid nodes off the symmetric critical angles
        let offset = 0.381_966_011_250_105 * step;
        let nodes: Vec<f64> = (0..=grid_n).map(|j| -PI + offset + j as f64 * step).collect();
        let d1: Vec<Option<f64>> = nodes.iter().map(|&t| self.u_theta(t).ok()).collect();
        let mut roots: Vec<f64> = Vec::new();
        for j in 0..grid_n {
            let (a, b) = (nodes[j], nodes[j + 1]);
            let (Some(fa), Some(fb)) = (d1[j], d1[j + 1]) else { continue };
            if self.crosses_singularity(a, b) {
                continue;
            }
            if fa == 0.0 {
                roots.push(a);
                continue;
            }
            if fa.signum() == fb.signum() {
                continue;
            }
            if let Some(r) = self.refine_root(a, b, fa) {
                roots.push(r);
            }
        }
        let mut out: Vec<f64> = Vec::new();
        for r in roots.into_iter().map(wrap_pi) {
            if !out.iter().any(|q| crate::angle::circle_dist(*q, r) < 1e-9) {
                out.push(r);
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        let mut points: Vec<CriticalPoint> = out
            .into_iter()
            .map(|t| {
                let (u, _, u2) = self.eval(t);
                CriticalPoint {
                    theta0: t,
                    u_value: u,
                    u_theta_theta: u2,
                    delta: delta_from(self.alpha, u, u2),
                    degenerate: u2.abs() < TOL_DEG,
                    local_min: u2 > 0.0,
                    global_min: false,
                }
            })
            .collect();
        let umin = nodes
            .iter()
            .filter_map(|&t| self.u_value(t).ok())
            .chain(points.iter().map(|p| p.u_value))
            .fold(f64::INFINITY, f64::min);
        for p in &mut points {
            p.global_min = p.local_min && p.u_value <= umin + 1e-10 * (1.0 + umin.abs());
        }
        Ok(CriticalSet { points, continuum: false })
    }

    fn crosses_singularity(&self, a: f64, b: f64) -> bool {
        if !matches!(self.kind, PotentialKind::Isosceles { .. }) {
            return false;
        }
        // cos θ changes sign on [a, b] exactly when a singular angle lies inside
        a.cos().signum() != b.cos().signum()
    }

    fn refine_root(&self, mut a: f64, mut b: f64, fa: f64) -> Option<f64> {
        let sa = fa.signum();
        let mut x = 0.5 * (a + b);
        for _ in 0..100 {
            let (_, f, df) = self.jet(x).ok()?;
            if f.abs() < 1e-15 {
                break;
            }
            if f.signum() == sa {
                a = x;
            } else {
                b = x;
            }
            let newton = x - f / df;
            x = if df != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        let res = self.u_theta(x).ok()?;
        (res.abs() < 1e-10).then_some(x)
    }
}

pub fn delta_from(alpha: f64, u: f64, u_tt: f64) -> f64 {
    (2.0 - alpha).powi(2) / 2.0 * u + 4.0 * u_tt
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CriticalPoint {
    pub theta0: f64,
    pub u_value: f64,
    pub u_theta_theta: f64,
    pub delta: f64,
    pub degenerate: bool,
    pub local_min: bool,
    pub global_min: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CriticalSet {
    pub points: Vec<CriticalPoint>,
    /// Set for constant profiles: every θ is critical.
    pub continuum: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(pot: &AnglePotential, t: f64) -> (f64, f64) {
        let h = 1e-5;
        let f = |x| pot.u_value(x).unwrap();
        let d1 = (f(t + h) - f(t - h)) / (2.0 * h);
        let d2 = (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h);
        (d1, d2)
    }

    #[test]
    fn anisotropic_values() {
        let p = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        assert!((p.u_value(FRAC_PI_2).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.u_value(0.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(p.u_theta(0.0).unwrap(), 0.0);
        for mu in [1.05, 1.5, 2.0, 3.7] {
            let p = AnglePotential::anisotropic(1.0, mu).unwrap();
            assert!((p.u_theta_theta(FRAC_PI_2).unwrap() - (1.0 - mu)).abs() < 1e-12);
            let want = (mu - 1.0) * mu.powf(-1.5);
            assert!((p.u_theta_theta(0.0).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let pots = [
            AnglePotential::anisotropic(1.0, 2.0).unwrap(),
            AnglePotential::isosceles(1.0, 0.3).unwrap(),
            AnglePotential::fourier(0.7, 3.0, vec![0.5, -0.2], vec![0.1, 0.3]).unwrap(),
        ];
        for p in &pots {
            for j in 0..50 {
                let t = -3.0 + 0.1237 * j as f64;
                if p.u_value(t).is_err() || (t.cos().abs() < 1e-2) {
                    continue;
                }
                let (d1, d2) = fd(p, t);
                assert!((d1 - p.u_theta(t).unwrap()).abs() < 1e-6 * (1.0 + d1.abs()));
                assert!((d2 - p.u_theta_theta(t).unwrap()).abs() < 1e-3 * (1.0 + d2.abs()));
            }
        }
    }

    #[test]
    fn isosceles_guard_and_euler_point() {
        let p = AnglePotential::isosceles(1.0, 1.0).unwrap();
        assert!(matches!(p.u_value(FRAC_PI_2 + 1e-7), Err(Error::SingularAngle { .. })));
        assert!(matches!(p.u_value(-FRAC_PI_2), Err(Error::SingularAngle { .. })));
        assert!(p.u_value(FRAC_PI_2 + 1e-5).is_ok());
        let m: f64 = 0.4;
        let p = AnglePotential::isosceles(1.0, m).unwrap();
        let a = m.powf(2.5) / 2f64.sqrt();
        let b = 2.0 * 2f64.sqrt() * m.powf(1.5);
        assert!((p.u_value(0.0).unwrap() - (a + b)).abs() < 1e-14);
        let want = -7.0 / 2f64.sqrt() * m.powf(2.5);
        assert!((p.u_theta_theta(0.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AnglePotential::anisotropic(2.0, 2.0).is_err());
        assert!(AnglePotential::anisotropic(1.0, 0.9).is_err());
        assert!(AnglePotential::kepler(1.0, -1.0).is_err());
        assert!(AnglePotential::fourier(1.0, 1.0, vec![2.0], vec![]).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let p = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        let v = p.descriptor();
        assert_eq!(v, serde_json::json!({"alpha": 1.0, "kind": "anisotropic", "mu": 2.0}));
        let q: AnglePotential = serde_json::from_value(v).unwrap();
        assert_eq!(p, q);
        let f: AnglePotential = serde_json::from_str(
            r#"{"alpha":1.0,"kind":"fourier","cosCoeffs":[0.2],"sinCoeffs":[],"constant":1.0}"#,
        )
        .unwrap();
        assert!((f.u_value(0.0).unwrap() - 1.2).abs() < 1e-15);
        let bad = serde_json::from_str::<AnglePotential>(r#"{"alpha":1.0,"kind":"anisotropic","mu":0.5}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn critical_point_sets() {
        let p = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        let cs = p.critical_points(512).unwrap();
        let th: Vec<f64> = cs.points.iter().map(|c| c.theta0).collect();
        assert_eq!(th.len(), 4);
        for (got, want) in th.iter().zip([-FRAC_PI_2, 0.0, FRAC_PI_2, PI]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        assert!(cs.points[1].local_min && cs.points[3].local_min);
        assert!(!cs.points[0].local_min && !cs.points[2].local_min);

        let iso = AnglePotential::isosceles(1.0, 1.0).unwrap();
        let cs = iso.critical_points(1024).unwrap();
        assert_eq!(cs.points.len(), 6);
        assert_eq!(cs.points.iter().filter(|c| c.global_min).count(), 4);
        let maxima: Vec<_> = cs.points.iter().filter(|c| !c.local_min).collect();
        assert_eq!(maxima.len(), 2);
        assert!(maxima.iter().all(|c| c.theta0.abs() < 1e-12 || (c.theta0.abs() - PI).abs() < 1e-12));

        let k = AnglePotential::kepler(1.0, 1.0).unwrap().critical_points(256).unwrap();
        assert!(k.points.is_empty() && k.continuum);
    }
}
