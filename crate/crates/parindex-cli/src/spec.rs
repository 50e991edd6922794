//! Declarative orbit specifications: reports can be reproduced from these alone.

use std::f64::consts::FRAC_PI_2;

use parindex::angle::circle_dist;
use parindex::dynamics::{
    find_symmetric_connection, kepler_parabolic_orbit, shoot_heteroclinic, HeteroclinicOrbit, Manifold, SeedDirection,
    ShootOptions,
};
use parindex::equilibria::find_equilibria;
use parindex::potential::AnglePotential;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum OrbitSpec {
    /// A branch of the invariant manifold of the rest point (sign(ψ₀)·π/2, θ₀).
    Shot { psi_sign: f64, theta0: f64, sign: f64, direction: SeedDirection, manifold: Manifold },
    /// Parabolic orbit of a constant profile through (0, θ_mid).
    Kepler { theta_mid: f64 },
    /// Anisotropic connection between global-minimum saddles with α bisected on `bracket`.
    SymmetricConnection { mu: f64, bracket: (f64, f64), theta_min: f64, target_cross: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SuiteEntry {
    pub name: String,
    /// Falls back to the configured potential.
    #[serde(default)]
    pub potential: Option<AnglePotential>,
    pub orbit: OrbitSpec,
    /// Integrator tolerance for this entry only (orbit and linear flow).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
}

pub fn shoot_options(cfg: &RunConfig) -> ShootOptions {
    ShootOptions {
        eps: cfg.integrator.eps,
        tau_max: cfg.integrator.tau_max,
        tol: cfg.integrator.tol,
        rng_seed: cfg.seed,
        richardson: false,
        ..Default::default()
    }
}

/// Builds the orbit; the potential actually used is returned alongside.
pub fn build(spec: &OrbitSpec, pot: &AnglePotential, cfg: &RunConfig) -> Result<(AnglePotential, HeteroclinicOrbit), String> {
    let opts = shoot_options(cfg);
    match spec {
        OrbitSpec::Shot { psi_sign, theta0, sign, direction, manifold } => {
            let atlas = find_equilibria(pot).map_err(|e| e.to_string())?;
            let eq = atlas
                .iter()
                .find(|e| e.psi0.signum() == psi_sign.signum() && circle_dist(e.theta0, *theta0) < 1e-6)
                .ok_or_else(|| {
                    let list: Vec<String> = atlas.iter().map(|e| format!("({:+.0}, {:.6})", e.psi0.signum(), e.theta0)).collect();
                    format!("no equilibrium at ({psi_sign:+}, {theta0}); available: {}", list.join(", "))
                })?;
            let o = ShootOptions { seed_direction: *direction, manifold: *manifold, ..opts };
            let orbit = shoot_heteroclinic(pot, &atlas, eq, *sign, &o).map_err(|e| e.to_string())?;
            Ok((pot.clone(), orbit))
        }
        OrbitSpec::Kepler { theta_mid } => {
            let orbit = kepler_parabolic_orbit(pot, *theta_mid, &opts).map_err(|e| e.to_string())?;
            Ok((pot.clone(), orbit))
        }
        OrbitSpec::SymmetricConnection { mu, bracket, theta_min, target_cross } => {
            let mu = *mu;
            let (alpha, orbit) = find_symmetric_connection(
                |a| AnglePotential::anisotropic(a, mu),
                *bracket,
                *theta_min,
                *target_cross,
                &ShootOptions { tau_max: 200.0, ..opts },
            )
            .map_err(|e| e.to_string())?;
            let pot = AnglePotential::anisotropic(alpha, mu).map_err(|e| e.to_string())?;
            Ok((pot, orbit))
        }
    }
}

/// Orbits on which every computed verdict is expected to hold.
pub fn default_suite() -> Vec<SuiteEntry> {
    let aniso = |mu: f64| Some(AnglePotential::anisotropic(1.0, mu).expect("anisotropic"));
    let shot = |psi_sign: f64, theta0: f64, sign: f64, direction: SeedDirection, manifold: Manifold| OrbitSpec::Shot {
        psi_sign,
        theta0,
        sign,
        direction,
        manifold,
    };
    use Manifold::{Stable, Unstable};
    use SeedDirection::{EMinus, EPlus};
    let entry = |name: &str, potential: Option<AnglePotential>, orbit: OrbitSpec| SuiteEntry { name: name.into(), potential, orbit, tol: None };
    // Windows that run deep into a sink tail lose the Dirichlet plane to round-off at the
    // default tolerance on the parabolic and minimizer orbits, so those two run tighter.
    vec![
        entry("node-node type I, mu 1.05", aniso(1.05), shot(-1.0, FRAC_PI_2, 1.0, EPlus, Unstable)),
        entry("node-node type I, mu 1.05, e-", aniso(1.05), shot(-1.0, -FRAC_PI_2, 1.0, EMinus, Unstable)),
        entry("node-node type I, mu 1.1", aniso(1.1), shot(1.0, FRAC_PI_2, 1.0, EPlus, Stable)),
        entry("saddle-node type II, mu 1.05", aniso(1.05), shot(1.0, 0.0, 1.0, EPlus, Unstable)),
        entry("node-saddle type III, mu 1.05", aniso(1.05), shot(-1.0, 0.0, 1.0, EPlus, Stable)),
        entry("saddle-focus type I, mu 2", aniso(2.0), shot(-1.0, 0.0, 1.0, EPlus, Unstable)),
        entry("saddle-focus type II, mu 2", aniso(2.0), shot(1.0, 0.0, 1.0, EPlus, Unstable)),
        SuiteEntry {
            tol: Some(1e-13),
            ..entry(
                "minimizer connection, mu 2",
                None,
                OrbitSpec::SymmetricConnection { mu: 2.0, bracket: (0.05, 0.5), theta_min: 0.0, target_cross: FRAC_PI_2 },
            )
        },
        SuiteEntry {
            tol: Some(1e-13),
            ..entry("parabolic, Kepler m 1", Some(AnglePotential::kepler(1.0, 1.0).expect("kepler")), OrbitSpec::Kepler { theta_mid: 0.0 })
        },
    ]
}
