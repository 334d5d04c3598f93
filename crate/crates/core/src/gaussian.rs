//! Standard normal helpers and one-sided truncated moments.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Smallest validity probability the closed forms are trusted with.
pub const MIN_TAIL_PROB: f64 = 1e-300;

pub fn pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `P(Y < z)` for a standard normal `Y`, accurate in the far lower tail.
pub fn cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Moments of the distance `c - Y` for a standard normal `Y` conditioned on `Y < c`.
///
/// Returns `(P(Y < c), E[c - Y | Y < c], E[(c - Y)^2 | Y < c])`.
pub fn below_moments(c: f64) -> (f64, f64, f64) {
    let prob = cdf(c);
    let mills = pdf(c) / prob;
    let mean = c + mills;
    let mean_sq = c * c + 1.0 + c * mills;
    (prob, mean, mean_sq)
}
