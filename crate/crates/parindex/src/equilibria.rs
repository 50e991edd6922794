//! Rest points (±π/2, θ₀) of the collision-manifold field and their linearization.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Complex, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::{delta_from, AnglePotential, TOL_DEG};

pub type C64 = Complex<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Classification {
    Saddle,
    StableNode,
    UnstableNode,
    StableFocus,
    UnstableFocus,
    Degenerate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Equilibrium {
    /// Exactly ±π/2.
    pub psi0: f64,
    pub theta0: f64,
    pub u_value: f64,
    pub u_theta_theta: f64,
    pub delta: f64,
    pub lambda_minus: C64,
    pub lambda_plus: C64,
    /// Eigenvectors in (ψ, θ) with second component 1.
    pub e_minus: [C64; 2],
    pub e_plus: [C64; 2],
    pub classification: Classification,
    pub repeated_root: bool,
    /// Within 1e−10 of Δ = 0 or of the degeneracy threshold.
    pub marginal: bool,
}

impl Equilibrium {
    /// Equilibrium at (ψ₀, θ₀) with ψ₀ ∈ {±π/2} given by its sign.
    pub fn at(pot: &AnglePotential, psi_sign: f64, theta0: f64) -> Result<Self> {
        let psi0 = psi_sign.signum() * FRAC_PI_2;
        linearization_matrix(pot, psi0, theta0)?;
        let (u, _, u2) = pot.jet(theta0)?;
        let delta = delta_from(pot.alpha(), u, u2);
        let ed = eigen_data(pot.alpha(), u, u2, psi0.sin());
        let classification = classify(&ed, u2);
        Ok(Equilibrium {
            psi0,
            theta0,
            u_value: u,
            u_theta_theta: u2,
            delta,
            lambda_minus: ed.lambda_minus,
            lambda_plus: ed.lambda_plus,
            e_minus: ed.e_minus,
            e_plus: ed.e_plus,
            classification,
            repeated_root: delta == 0.0,
            marginal: delta.abs() < 1e-10 || (u2.abs() - TOL_DEG).abs() < 1e-10,
        })
    }

    pub fn sin_psi0(&self) -> f64 {
        self.psi0.signum()
    }

    pub fn is_focus(&self) -> bool {
        matches!(self.classification, Classification::StableFocus | Classification::UnstableFocus)
    }

    pub fn matrix(&self, alpha: f64) -> Matrix2<f64> {
        matrix_from(alpha, self.u_value, self.u_theta_theta, self.sin_psi0())
    }

    /// Real eigenvectors normalized to unit length (None for foci).
    pub fn real_directions(&self) -> Option<(Vector2<f64>, Vector2<f64>)> {
        if self.delta < 0.0 {
            return None;
        }
        let em = Vector2::new(self.e_minus[0].re, 1.0).normalize();
        let ep = Vector2::new(self.e_plus[0].re, 1.0).normalize();
        Some((em, ep))
    }

    pub fn same_point(&self, other: &Equilibrium) -> bool {
        self.psi0 == other.psi0 && crate::angle::circle_dist(self.theta0, other.theta0) < 1e-9
    }
}

/// M(ψ₀, θ₀) of the collision field at a rest point.
pub fn linearization_matrix(pot: &AnglePotential, psi0: f64, theta0: f64) -> Result<Matrix2<f64>> {
    let (u, u1, u2) = pot.jet(theta0)?;
    if u1.abs() > 1e-8 {
        return Err(Error::NotACriticalPoint { theta: theta0, residual: u1.abs() });
    }
    Ok(matrix_from(pot.alpha(), u, u2, psi0.sin()))
}

fn matrix_from(alpha: f64, u: f64, u2: f64, s: f64) -> Matrix2<f64> {
    let w = (2.0 * u).sqrt();
    Matrix2::new((alpha / 2.0 - 1.0) * w * s, -u2 * s / w, -w * s, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenData {
    pub lambda_minus: C64,
    pub lambda_plus: C64,
    pub e_minus: [C64; 2],
    pub e_plus: [C64; 2],
}

/// λ± = −(2−α)/4 √(2𝔘) sinψ₀ ± ½√Δ and e± = ((2−α)/4 ∓ (sinψ₀/2)√(Δ/2𝔘), 1).
pub fn eigen_data(alpha: f64, u: f64, u2: f64, s: f64) -> EigenData {
    let w = (2.0 * u).sqrt();
    let delta = delta_from(alpha, u, u2);
    let sq = C64::new(delta, 0.0).sqrt();
    let base = C64::new(-(2.0 - alpha) / 4.0 * w * s, 0.0);
    let r = (C64::new(delta / (2.0 * u), 0.0)).sqrt();
    let one = C64::new(1.0, 0.0);
    let x0 = C64::new((2.0 - alpha) / 4.0, 0.0);
    EigenData {
        lambda_minus: base - 0.5 * sq,
        lambda_plus: base + 0.5 * sq,
        e_minus: [x0 + 0.5 * s * r, one],
        e_plus: [x0 - 0.5 * s * r, one],
    }
}

/// Eigenvalues of a general real 2×2 matrix, ordered by real part (then imaginary part).
pub fn eig2(m: &Matrix2<f64>) -> (C64, C64) {
    let tr = m.trace();
    let det = m.determinant();
    let disc = C64::new(tr * tr / 4.0 - det, 0.0).sqrt();
    let a = C64::new(tr / 2.0, 0.0) - disc;
    let b = C64::new(tr / 2.0, 0.0) + disc;
    if (a.re, a.im) <= (b.re, b.im) {
        (a, b)
    } else {
        (b, a)
    }
}

fn classify(ed: &EigenData, u2: f64) -> Classification {
    let (lm, lp) = (ed.lambda_minus, ed.lambda_plus);
    if u2.abs() < TOL_DEG || lm.norm() < TOL_DEG || lp.norm() < TOL_DEG {
        return Classification::Degenerate;
    }
    if lm.im == 0.0 && lp.im == 0.0 {
        match (lm.re < 0.0, lp.re < 0.0) {
            (true, false) => Classification::Saddle,
            (true, true) => Classification::StableNode,
            (false, false) => Classification::UnstableNode,
            (false, true) => unreachable!("λ₋ ≤ λ₊ by construction"),
        }
    } else if lm.re < 0.0 {
        Classification::StableFocus
    } else {
        Classification::UnstableFocus
    }
}

/// Both rest points (ψ₀ = ±π/2) over every critical point of 𝔘.
pub fn find_equilibria(pot: &AnglePotential) -> Result<Vec<Equilibrium>> {
    let cs = pot.critical_points(2048)?;
    if cs.continuum {
        return Err(Error::ContinuumEquilibria);
    }
    let mut out = Vec::with_capacity(2 * cs.points.len());
    for s in [-1.0, 1.0] {
        for cp in &cs.points {
            out.push(Equilibrium::at(pot, s, cp.theta0)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn fd_jacobian(pot: &AnglePotential, psi: f64, th: f64) -> Matrix2<f64> {
        let h = 1e-6;
        let f = |p: f64, t: f64| crate::dynamics::collision_rhs(pot, p, t).unwrap();
        let dp = |i: usize| {
            let a = f(psi + h, th);
            let b = f(psi - h, th);
            (a[i] - b[i]) / (2.0 * h)
        };
        let dt = |i: usize| {
            let a = f(psi, th + h);
            let b = f(psi, th - h);
            (a[i] - b[i]) / (2.0 * h)
        };
        Matrix2::new(dp(0), dt(0), dp(1), dt(1))
    }

    #[test]
    fn anisotropic_atlas() {
        let pot = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        let eqs = find_equilibria(&pot).unwrap();
        assert_eq!(eqs.len(), 8);
        for e in &eqs {
            let want = match (e.psi0 > 0.0, (e.theta0.abs() - FRAC_PI_2).abs() < 1e-9) {
                (true, true) => Classification::StableFocus,
                (false, true) => Classification::UnstableFocus,
                _ => Classification::Saddle,
            };
            assert_eq!(e.classification, want, "{e:?}");
        }
        let f = eqs.iter().find(|e| e.psi0 > 0.0 && (e.theta0 - FRAC_PI_2).abs() < 1e-9).unwrap();
        assert!((f.delta + 3.5).abs() < 1e-12);
        assert!((f.lambda_minus.re + 2f64.sqrt() / 4.0).abs() < 1e-12);
        assert!((f.lambda_plus.im - 3.5f64.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_matches_finite_differences_and_eigensolver() {
        for (mu, al) in [(2.0, 1.0), (1.05, 1.0), (1.3, 0.5), (3.0, 1.5)] {
            let pot = AnglePotential::anisotropic(al, mu).unwrap();
            for e in find_equilibria(&pot).unwrap() {
                let m = linearization_matrix(&pot, e.psi0, e.theta0).unwrap();
                assert!((m - fd_jacobian(&pot, e.psi0, e.theta0)).abs().max() < 1e-6);
                let (a, b) = eig2(&m);
                let mut cf = [e.lambda_minus, e.lambda_plus];
                cf.sort_by(|x, y| (x.re, x.im).partial_cmp(&(y.re, y.im)).unwrap());
                assert!((a - cf[0]).norm() < 1e-10 && (b - cf[1]).norm() < 1e-10);
                assert!((m.trace() - (e.lambda_minus + e.lambda_plus).re).abs() < 1e-12);
                assert!((m.determinant() - (e.lambda_minus * e.lambda_plus).re).abs() < 1e-12);
                let mc = m.map(|x| C64::new(x, 0.0));
                for (l, v) in [(e.lambda_minus, e.e_minus), (e.lambda_plus, e.e_plus)] {
                    let v = nalgebra::Vector2::new(v[0], v[1]);
                    assert!((mc * v - v * l).norm() < 1e-10);
                }
                // reversal identity
                let mr = linearization_matrix(&pot, -e.psi0, e.theta0).unwrap();
                assert!((mr + m).abs().max() < 1e-15);
            }
        }
    }

    #[test]
    fn node_and_kepler_cases() {
        let pot = AnglePotential::anisotropic(1.0, 1.05).unwrap();
        let e = Equilibrium::at(&pot, 1.0, FRAC_PI_2).unwrap();
        assert!((e.delta - 0.3).abs() < 1e-12);
        assert_eq!(e.classification, Classification::StableNode);
        let e = Equilibrium::at(&pot, -1.0, FRAC_PI_2).unwrap();
        assert_eq!(e.classification, Classification::UnstableNode);
        let e = Equilibrium::at(&pot, 1.0, PI).unwrap();
        assert_eq!(e.classification, Classification::Saddle);

        let k = AnglePotential::kepler(0.8, 1.5).unwrap();
        assert_eq!(find_equilibria(&k), Err(Error::ContinuumEquilibria));
        let m = linearization_matrix(&k, FRAC_PI_2, 0.3).unwrap();
        let w = 3f64.sqrt();
        assert!((m - Matrix2::new((0.4 - 1.0) * w, 0.0, -w, 0.0)).abs().max() < 1e-15);
        assert_eq!(Equilibrium::at(&k, 1.0, 0.3).unwrap().classification, Classification::Degenerate);
    }

    #[test]
    fn not_a_critical_point() {
        let pot = AnglePotential::anisotropic(1.0, 2.0).unwrap();
        assert!(matches!(linearization_matrix(&pot, FRAC_PI_2, 0.3), Err(Error::NotACriticalPoint { .. })));
    }
}
