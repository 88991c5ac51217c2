//! Closed-form reference solutions.
//!
//! With `Gamma = 0` every envelope solution of the conjugate system gives
//! a traveling wave `A(x - X - c t) exp(i[n t - (c/2)(x - X - c t) + delta])`.
//! [`crate::pde::manakov_to_linear`] maps such a pair to a solution with
//! linear coupling `Gamma`.

use num_complex::Complex64;

use crate::pde::{manakov_to_linear, FieldState, Grid, SolitonSpec};

/// Uncoupled traveling solution at time `t` sampled on every grid node.
/// `profile` returns the two envelope values at a distance from the center.
pub fn traveling<F>(profile: F, spec: &SolitonSpec, grid: &Grid, t: f64) -> FieldState
where
    F: Fn(f64) -> (f64, f64),
{
    let (psi, phi) = (0..grid.nodes())
        .map(|i| {
            let xi = grid.x(i) - spec.x0 - spec.c * t;
            let (a, b) = profile(xi);
            let carrier = -0.5 * spec.c * xi;
            (
                Complex64::from_polar(a, spec.n_psi * t + carrier + spec.delta_psi),
                Complex64::from_polar(b, spec.n_phi * t + carrier + spec.delta_phi),
            )
        })
        .unzip();
    FieldState { time: t, psi, phi }
}

/// Exact solution of the linearly coupled system started from the
/// traveling wave at `t = 0`.
pub fn coupled_traveling<F>(
    profile: F,
    spec: &SolitonSpec,
    grid: &Grid,
    t: f64,
    gamma: Complex64,
) -> FieldState
where
    F: Fn(f64) -> (f64, f64),
{
    manakov_to_linear(&traveling(profile, spec, grid, t), t, gamma)
}
