//! McGehee blow-up: the 4D regularized field, the field on the collision manifold, and plain
//! trajectories of either.

use serde::{Deserialize, Serialize};

use crate::angle::wrap_pi;
use crate::error::{Error, Result};
use crate::integrator::{integrate, Options};
use crate::potential::AnglePotential;

pub mod orbit;

pub use orbit::{
    find_symmetric_connection, kepler_parabolic_orbit, lift_profile, shoot_heteroclinic, Direction, Endpoint,
    HetType, HeteroclinicOrbit, Lift, Manifold, OrbitPoint, SeedDirection, ShootOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McGeheeState {
    pub v: f64,
    pub u: f64,
    pub r: f64,
    pub theta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionState {
    pub psi: f64,
    pub theta: f64,
}

impl CollisionState {
    pub fn normalized(&self) -> Self {
        CollisionState { psi: wrap_pi(self.psi), theta: wrap_pi(self.theta) }
    }

    /// The point (v, u) = √(2𝔘)(sin ψ, cos ψ) of the zero-energy surface at radius r.
    pub fn to_mcgehee(&self, pot: &AnglePotential, r: f64) -> Result<McGeheeState> {
        let w = (2.0 * pot.u_value(self.theta)?).sqrt();
        Ok(McGeheeState { v: w * self.psi.sin(), u: w * self.psi.cos(), r, theta: self.theta })
    }
}

/// (v′, u′, r′, θ′) = ((α/2)v² + u² − α𝔘, (α/2−1)uv + 𝔘_θ, rv, u).
pub fn mcgehee_rhs(pot: &AnglePotential, s: &McGeheeState) -> Result<[f64; 4]> {
    let (u0, u1, _) = pot.jet(s.theta)?;
    let a = pot.alpha();
    Ok([
        a / 2.0 * s.v * s.v + s.u * s.u - a * u0,
        (a / 2.0 - 1.0) * s.u * s.v + u1,
        s.r * s.v,
        s.u,
    ])
}

/// (ψ′, θ′) = ((1−α/2)√(2𝔘)cos ψ − 𝔘_θ sin ψ/√(2𝔘), √(2𝔘)cos ψ).
pub fn collision_rhs(pot: &AnglePotential, psi: f64, theta: f64) -> Result<[f64; 2]> {
    let (u0, u1, _) = pot.jet(theta)?;
    let w = (2.0 * u0).sqrt();
    let (s, c) = psi.sin_cos();
    Ok([(1.0 - pot.alpha() / 2.0) * w * c - u1 * s / w, w * c])
}

/// ½(u² + v²) − 𝔘(θ) − r^α H.
pub fn energy_residual(pot: &AnglePotential, s: &McGeheeState, h: f64) -> Result<f64> {
    let u0 = pot.u_value(s.theta)?;
    let rh = if h == 0.0 { 0.0 } else { s.r.powf(pot.alpha()) * h };
    Ok(0.5 * (s.u * s.u + s.v * s.v) - u0 - rh)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trajectory {
    pub tau_samples: Vec<f64>,
    pub states: Vec<CollisionState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_profile: Option<Vec<f64>>,
    /// Physical time; None where t′ = r^{1+α/2} was not integrated (r > 1e8).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_profile: Option<Vec<Option<f64>>>,
    pub meta: serde_json::Value,
}

impl Trajectory {
    pub fn v(&self, pot: &AnglePotential) -> Result<Vec<f64>> {
        self.states.iter().map(|s| Ok((2.0 * pot.u_value(s.theta)?).sqrt() * s.psi.sin())).collect()
    }
}

/// Collision-manifold trajectory of (ψ, θ) stored unwrapped at the accepted steps.
pub fn integrate_collision(
    pot: &AnglePotential,
    s0: CollisionState,
    tau_span: (f64, f64),
    tol: f64,
) -> Result<Trajectory> {
    check_tol(tol)?;
    let sol = integrate(
        |_, y: &[f64; 2]| collision_rhs(pot, y[0], y[1]),
        tau_span.0,
        [s0.psi, s0.theta],
        tau_span.1,
        &Options::with_tol(tol),
        &[],
    )?;
    let mut tau = sol.t.clone();
    let mut states: Vec<CollisionState> = sol.y.iter().map(|y| CollisionState { psi: y[0], theta: y[1] }).collect();
    if tau_span.1 < tau_span.0 {
        tau.reverse();
        states.reverse();
    }
    Ok(Trajectory {
        tau_samples: tau,
        states,
        r_profile: None,
        t_profile: None,
        meta: serde_json::json!({
            "potential": pot.descriptor(),
            "integrator": {"method": "dopri5", "tol": tol},
        }),
    })
}

/// Trajectory of the 4D McGehee field, returned with the sample times.
pub fn integrate_mcgehee(
    pot: &AnglePotential,
    s0: McGeheeState,
    tau_span: (f64, f64),
    tol: f64,
) -> Result<(Vec<f64>, Vec<McGeheeState>)> {
    check_tol(tol)?;
    let sol = integrate(
        |_, y: &[f64; 4]| mcgehee_rhs(pot, &McGeheeState { v: y[0], u: y[1], r: y[2], theta: y[3] }),
        tau_span.0,
        [s0.v, s0.u, s0.r, s0.theta],
        tau_span.1,
        &Options::with_tol(tol),
        &[],
    )?;
    let states = sol.y.iter().map(|y| McGeheeState { v: y[0], u: y[1], r: y[2], theta: y[3] }).collect();
    Ok((sol.t, states))
}

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if (1e-13..=1e-6).contains(&tol) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tol = {tol} outside [1e-13, 1e-6]")))
    }
}
