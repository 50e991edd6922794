//! Random Lagrangian paths and symplectic maps shared by the property and acceptance suites.
#![allow(dead_code)]

use nalgebra::{Complex, Matrix2, Vector2};
use parindex::indices::{hormander_index, maslov_count, maslov_count_line, maslov_count_pair, CountOptions};
use parindex::linearization::{CMat2, LagrangianFrame, Mat4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type C64 = Complex<f64>;

pub fn random_sym<R: Rng>(rng: &mut R, scale: f64) -> Matrix2<f64> {
    let (a, b, c) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    Matrix2::new(a, b, b, c) * scale
}

/// exp(iS) for real symmetric S.
pub fn expi_sym(s: &Matrix2<f64>) -> CMat2 {
    let e = s.symmetric_eigen();
    let q = e.eigenvectors.map(|x| C64::new(x, 0.0));
    let d = CMat2::from_diagonal(&e.eigenvalues.map(|l| C64::from_polar(1.0, l)));
    q * d * q.transpose()
}

/// τ ↦ U₀ exp(i(τS₁ + τ²S₂)) read as a plane through U = q + ip.
#[derive(Clone, Debug)]
pub struct UnitaryPath {
    pub u0: CMat2,
    pub s1: Matrix2<f64>,
    pub s2: Matrix2<f64>,
}

impl UnitaryPath {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        let rot = rng.gen_range(0.0..std::f64::consts::TAU);
        let (c, s) = (rot.cos(), rot.sin());
        let r = Matrix2::new(c, -s, s, c).map(|x| C64::new(x, 0.0));
        UnitaryPath { u0: expi_sym(&random_sym(rng, 3.0)) * r, s1: random_sym(rng, 8.0), s2: random_sym(rng, 4.0) }
    }

    pub fn unitary(&self, t: f64) -> CMat2 {
        self.u0 * expi_sym(&(self.s1 * t + self.s2 * (t * t)))
    }

    pub fn eval(&self, t: f64) -> LagrangianFrame {
        LagrangianFrame::from_unitary(&self.unitary(t))
    }
}

pub fn random_plane<R: Rng>(rng: &mut R) -> LagrangianFrame {
    UnitaryPath::random(rng).eval(0.0)
}

/// Product of a lower shear, an upper shear and diag(M, M⁻ᵀ).
pub fn random_symplectic<R: Rng>(rng: &mut R) -> Mat4 {
    let a = random_sym(rng, 1.0);
    let b = random_sym(rng, 1.0);
    let mut m = Matrix2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    m += Matrix2::identity() * 2.0;
    let mit = m.try_inverse().unwrap().transpose();
    let mut up = Mat4::identity();
    let mut lo = Mat4::identity();
    let mut dg = Mat4::zeros();
    up.fixed_view_mut::<2, 2>(0, 2).copy_from(&a);
    lo.fixed_view_mut::<2, 2>(2, 0).copy_from(&b);
    dg.fixed_view_mut::<2, 2>(0, 0).copy_from(&m);
    dg.fixed_view_mut::<2, 2>(2, 2).copy_from(&mit);
    lo * up * dg
}

/// A line path in one ℝ² block, angle φ(τ) = φ₀ + ωτ + κτ², as a (p, q) vector.
#[derive(Clone, Copy, Debug)]
pub struct LinePath {
    pub phi0: f64,
    pub omega: f64,
    pub kappa: f64,
}

impl LinePath {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        LinePath { phi0: rng.gen_range(0.0..3.2), omega: rng.gen_range(-12.0..12.0), kappa: rng.gen_range(-4.0..4.0) }
    }

    pub fn eval(&self, t: f64) -> Vector2<f64> {
        let phi = self.phi0 + self.omega * t + self.kappa * t * t;
        Vector2::new(phi.sin(), phi.cos())
    }
}

pub fn transversal(a: &LagrangianFrame, b: &LagrangianFrame) -> bool {
    a.pairing_singular_values(b)[0] > 1e-4
}

// ---------------------------------------------------------------- property checks
//
// Each check draws its instance from `seed`. Ok(false) means the instance missed the
// precondition and should be redrawn.

pub type Check = Result<bool, String>;

pub fn opts() -> CountOptions {
    CountOptions { step: 0.01, ..Default::default() }
}

fn count(p: &UnitaryPath, r: &LagrangianFrame, a: f64, b: f64) -> Result<i64, String> {
    maslov_count(&|t| Ok(p.eval(t)), r, a, b, &opts()).map(|c| c.index).map_err(|e| e.to_string())
}

fn same(what: &str, x: i64, y: i64) -> Check {
    if x == y {
        Ok(true)
    } else {
        Err(format!("{what}: {x} != {y}"))
    }
}

/// Counts agree under s ↦ s^k on [0, 1] and under an affine change of interval.
pub fn check_reparametrization(seed: u64, k: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = UnitaryPath::random(&mut rng);
    let r = random_plane(&mut rng);
    let direct = count(&p, &r, 0.0, 1.0)?;
    let warped = maslov_count(&|s: f64| Ok(p.eval(s.max(0.0).powf(k))), &r, 0.0, 1.0, &opts()).map_err(|e| e.to_string())?;
    same("power warp", direct, warped.index)?;
    let shifted = maslov_count(&|s: f64| Ok(p.eval((s - 2.0) / 3.0)), &r, 2.0, 5.0, &opts()).map_err(|e| e.to_string())?;
    same("affine shift", direct, shifted.index)
}

pub fn check_path_additivity(seed: u64, c: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = UnitaryPath::random(&mut rng);
    let r = random_plane(&mut rng);
    if !transversal(&p.eval(c), &r) {
        return Ok(false);
    }
    same("split", count(&p, &r, 0.0, 1.0)?, count(&p, &r, 0.0, c)? + count(&p, &r, c, 1.0)?)
}

pub fn check_symplectic_invariance(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = UnitaryPath::random(&mut rng);
    let r = random_plane(&mut rng);
    let s = random_symplectic(&mut rng);
    let moved = maslov_count(&|t| Ok(p.eval(t).transformed(&s)), &r.transformed(&s), 0.0, 1.0, &opts())
        .map_err(|e| e.to_string())?;
    same("moved", count(&p, &r, 0.0, 1.0)?, moved.index)
}

pub fn check_symplectic_additivity(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l1, l2) = (LinePath::random(&mut rng), LinePath::random(&mut rng));
    let (r1, r2) = (LinePath::random(&mut rng).eval(0.0), LinePath::random(&mut rng).eval(0.0));
    let sum = maslov_count(
        &|t| Ok(LagrangianFrame::from_blocks(l1.eval(t), l2.eval(t))),
        &LagrangianFrame::from_blocks(r1, r2),
        0.0,
        1.0,
        &opts(),
    )
    .map_err(|e| e.to_string())?;
    let c1 = maslov_count_line(&|_| r1, &|t| l1.eval(t), 0.0, 1.0, &opts()).map_err(|e| e.to_string())?;
    let c2 = maslov_count_line(&|_| r2, &|t| l2.eval(t), 0.0, 1.0, &opts()).map_err(|e| e.to_string())?;
    same("block sum", sum.index, c1 + c2)
}

/// μ(L₁, L₂) = −μ(L₂, L₁) when both ends are transversal.
pub fn check_symmetry(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (p, q) = (UnitaryPath::random(&mut rng), UnitaryPath::random(&mut rng));
    if !(transversal(&p.eval(0.0), &q.eval(0.0)) && transversal(&p.eval(1.0), &q.eval(1.0))) {
        return Ok(false);
    }
    let pq = maslov_count_pair(&|t| Ok(p.eval(t)), &|t| Ok(q.eval(t)), 0.0, 1.0, &opts()).map_err(|e| e.to_string())?;
    let qp = maslov_count_pair(&|t| Ok(q.eval(t)), &|t| Ok(p.eval(t)), 0.0, 1.0, &opts()).map_err(|e| e.to_string())?;
    same("swap", pq.index, -qp.index)
}

/// |s(V₀, V₁; L₀, L₁)| ≤ 4, antisymmetric in the first pair.
pub fn check_hormander(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<LagrangianFrame> = (0..4).map(|_| random_plane(&mut rng)).collect();
    let s = hormander_index(&v[0], &v[1], &v[2], &v[3]).map_err(|e| e.to_string())?;
    if s.value.abs() > 4 {
        return Err(format!("{s:?}"));
    }
    let t = hormander_index(&v[1], &v[0], &v[2], &v[3]).map_err(|e| e.to_string())?;
    same("antisymmetry", s.value, -t.value)
}
