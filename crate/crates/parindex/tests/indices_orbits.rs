use std::f64::consts::FRAC_PI_2;

use parindex::dynamics::{shoot_heteroclinic, HeteroclinicOrbit, SeedDirection, ShootOptions};
use parindex::equilibria::{find_equilibria, Classification};
use parindex::indices::{morse_by_hessian_tau, morse_by_maslov, CountOptions, IndexSettings};
use parindex::linearization::{v_frame, LinearFlowCache};
use parindex::potential::AnglePotential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Unstable branch of the rest point (ψ₀, θ₀) selected by sign and seed direction.
fn shoot(mu: f64, psi0: f64, theta0: f64, sign: f64, seed: SeedDirection) -> HeteroclinicOrbit {
    let pot = AnglePotential::anisotropic(1.0, mu).unwrap();
    let atlas = find_equilibria(&pot).unwrap();
    let eq = atlas.iter().find(|e| e.psi0 == psi0 && (e.theta0 - theta0).abs() < 1e-9).unwrap().clone();
    let opts = ShootOptions { richardson: false, tau_max: 600.0, seed_direction: seed, ..Default::default() };
    shoot_heteroclinic(&pot, &atlas, &eq, sign, &opts).unwrap()
}

#[test]
fn node_to_node_windows_agree() {
    let o = shoot(1.05, -FRAC_PI_2, FRAC_PI_2, 1.0, SeedDirection::EPlus);
    assert_eq!(o.sink.eq.classification, Classification::StableNode);
    let cache = LinearFlowCache::new(&o, 1e-11).unwrap();
    let (ra, rb) = o.range();
    let s = IndexSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for _ in 0..30 {
        let t1 = rng.gen_range(ra..0.5 * (ra + rb));
        let t2 = rng.gen_range(0.5 * (ra + rb)..rb);
        // windows ending on a conjugate point make the two meshes disagree
        let Ok(h) = morse_by_hessian_tau(&o, t1, t2, s.nodes(t1, t2)) else { continue };
        let m = morse_by_maslov(&cache, t1, t2, &CountOptions::default()).unwrap();
        assert_eq!(h, m, "[{t1:.3}, {t2:.3}]");
        checked += 1;
    }
    assert!(checked >= 6, "{checked}");
}

#[test]
fn unstable_bundle_is_v_for_eplus_source() {
    let o = shoot(1.05, -FRAC_PI_2, FRAC_PI_2, 1.0, SeedDirection::EPlus);
    let cache = LinearFlowCache::new(&o, 1e-11).unwrap();
    let vm = cache.unstable_bundle().unwrap();
    let (ma, mb) = o.main_range();
    for k in 0..=20 {
        let t = ma + (mb - ma) * k as f64 / 20.0;
        let v = v_frame(o.alpha(), &o.point(t).unwrap());
        assert!(vm.eval(t).unwrap().distance(&v) < 1e-6, "τ = {t}");
    }
}

#[test]
fn hessian_grows_into_a_focus() {
    let o = shoot(2.0, -FRAC_PI_2, 0.0, 1.0, SeedDirection::EPlus);
    assert_eq!(o.sink.eq.classification, Classification::StableFocus);
    let (ma, mb) = o.main_range();
    let (_, rb) = o.range();
    let s = IndexSettings::default();
    let counts: Vec<i64> = (0..4)
        .map(|k| {
            let t2 = mb + (rb - mb) * (k as f64 + 1.0) / 4.0 - 1e-3;
            morse_by_hessian_tau(&o, ma, t2, s.nodes(ma, t2)).unwrap()
        })
        .collect();
    assert!(counts.windows(2).all(|w| w[1] > w[0]), "{counts:?}");
}
