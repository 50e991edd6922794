mod common;

use common::*;
use nalgebra::Vector2;
use parindex::indices::{maslov_count, maslov_count_pair};
use parindex::linearization::LagrangianFrame;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn count(p: &UnitaryPath, r: &LagrangianFrame, a: f64, b: f64) -> i64 {
    maslov_count(&|t| Ok(p.eval(t)), r, a, b, &opts()).unwrap().index
}

macro_rules! holds {
    ($c:expr) => {
        match $c {
            Ok(true) => {}
            Ok(false) => prop_assume!(false),
            Err(e) => prop_assert!(false, "{}", e),
        }
    };
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn reparametrization(seed in any::<u64>(), k in 0.3f64..3.0) {
        holds!(check_reparametrization(seed, k));
    }

    #[test]
    fn path_additivity(seed in any::<u64>(), c in 0.05f64..0.95) {
        holds!(check_path_additivity(seed, c));
    }

    #[test]
    fn symplectic_invariance(seed in any::<u64>()) {
        holds!(check_symplectic_invariance(seed));
    }

    #[test]
    fn symplectic_additivity(seed in any::<u64>()) {
        holds!(check_symplectic_additivity(seed));
    }

    #[test]
    fn symmetry_on_transversal_ends(seed in any::<u64>()) {
        holds!(check_symmetry(seed));
    }

    #[test]
    fn hormander_bound(seed in any::<u64>()) {
        holds!(check_hormander(seed));
    }
}

#[test]
fn symmetry_counts_endpoint_intersections() {
    // L₁ ≡ V_d and L₂ leaving V_d: dim at a is 2, at b is 0
    let vd = LagrangianFrame::vd();
    let rot = |t: f64| {
        let (s, c) = (0.3 * t).sin_cos();
        LagrangianFrame::from_blocks(Vector2::new(c, s), Vector2::new(c, s))
    };
    let o = opts();
    let a = maslov_count_pair(&|_| Ok(vd.clone()), &|t| Ok(rot(t)), 0.0, 1.0, &o).unwrap().index;
    let b = maslov_count_pair(&|t| Ok(rot(t)), &|_| Ok(vd.clone()), 0.0, 1.0, &o).unwrap().index;
    assert_eq!(a, 2 - 0 - b);
}

#[test]
fn random_paths_cross() {
    // the generators must produce non-trivial counts, or the properties above say little
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let counts: Vec<i64> = (0..40)
        .map(|_| {
            let p = UnitaryPath::random(&mut rng);
            let r = random_plane(&mut rng);
            count(&p, &r, 0.0, 1.0)
        })
        .collect();
    assert!(counts.iter().filter(|c| **c != 0).count() >= 20, "{counts:?}");
    assert!(counts.iter().any(|c| c.abs() >= 2), "{counts:?}");
}
