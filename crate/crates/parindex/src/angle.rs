use std::f64::consts::{PI, TAU};

/// Representative of `x` in (−π, π].
pub fn wrap_pi(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

/// Distance on the circle.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    wrap_pi(a - b).abs()
}
