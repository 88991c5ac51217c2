//! Soliton envelope generation for the conjugate (bifurcation) system
//!
//! ```text
//! A_psi'' + (n_psi + c^2/4) A_psi + alpha1 (A_psi^2 + A_phi^2) A_psi = 0
//! A_phi'' + (n_phi + c^2/4) A_phi + alpha1 (A_phi^2 + A_psi^2) A_phi = 0
//! ```
//!
//! with `A -> 0` at both ends. The circular case (`n_psi == n_phi`) and the
//! single-component case have sech closed forms. For distinct frequencies
//! both components see the same potential `alpha1 (A_psi^2 + A_phi^2)`, so
//! at most one of them can be nodeless: the less bound component carries a
//! node at the center. [`bound_state_envelope`] gives that symmetric bound
//! state in closed form; [`solve_conjugate_bvp`] solves the central
//! difference discretization by Newton's method on a given grid.

use std::io::{self, Write};

use num_complex::Complex64;
use thiserror::Error;

use crate::band::{BandMatrix, LinalgError};
use crate::fmt_num;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvelopeError {
    #[error("no bound state: n + c^2/4 = {value} must be negative ({component})")]
    UnboundState { component: Component, value: f64 },
    #[error("alpha1 must be positive, got {0}")]
    NonPositiveNonlinearity(f64),
    #[error("the two-frequency bound state needs n_psi != n_phi")]
    DegenerateFrequencies,
    #[error("circular envelope needs n_psi == n_phi (got {n_psi}, {n_phi})")]
    NotCircular { n_psi: f64, n_phi: f64 },
    #[error(
        "Newton iteration did not converge in {iterations} steps (last update {last_update:e})"
    )]
    NewtonDiverged { iterations: usize, last_update: f64 },
    #[error("Newton converged to the trivial branch ({component} collapsed to {amplitude:e})")]
    TrivialBranch {
        component: Component,
        amplitude: f64,
    },
    #[error("initial guess is trivial")]
    TrivialGuess,
    #[error("guess component {component} is neither even nor odd (deviation {deviation:e})")]
    AsymmetricGuess {
        component: Component,
        deviation: f64,
    },
    #[error("profile does not decay at the grid ends ({value:e} > {limit:e}); widen the grid")]
    DomainTooNarrow { value: f64, limit: f64 },
    #[error("invalid envelope grid: half width {half_width}, spacing {h}")]
    InvalidGrid { half_width: f64, h: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Psi,
    Phi,
}

impl std::fmt::Display for Component {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Component::Psi => "psi",
            Component::Phi => "phi",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeParams {
    pub n_psi: f64,
    pub n_phi: f64,
    pub c: f64,
    pub alpha1: f64,
}

impl EnvelopeParams {
    pub fn circular(n: f64, c: f64, alpha1: f64) -> Self {
        Self {
            n_psi: n,
            n_phi: n,
            c,
            alpha1,
        }
    }

    /// `n + c^2/4` for the given component; negative for a bound state.
    pub fn shifted_frequency(&self, component: Component) -> f64 {
        let n = match component {
            Component::Psi => self.n_psi,
            Component::Phi => self.n_phi,
        };
        n + 0.25 * self.c * self.c
    }

    /// Spatial decay rate `sqrt(-(n + c^2/4))` of one component.
    pub fn decay_rate(&self, component: Component) -> Result<f64, EnvelopeError> {
        let value = self.shifted_frequency(component);
        if value >= 0.0 {
            return Err(EnvelopeError::UnboundState { component, value });
        }
        Ok((-value).sqrt())
    }

    fn check_nonlinearity(&self) -> Result<(), EnvelopeError> {
        if self.alpha1 > 0.0 {
            Ok(())
        } else {
            Err(EnvelopeError::NonPositiveNonlinearity(self.alpha1))
        }
    }

    pub fn validate(&self) -> Result<(), EnvelopeError> {
        self.check_nonlinearity()?;
        self.decay_rate(Component::Psi)?;
        self.decay_rate(Component::Phi)?;
        Ok(())
    }
}

/// Symmetric sample abscissae `x_j = -half_width + j h`, `j = 0..=2N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeGrid {
    half_nodes: usize,
    h: f64,
}

impl EnvelopeGrid {
    /// `half_width` is rounded to the nearest multiple of `h`.
    pub fn new(half_width: f64, h: f64) -> Result<Self, EnvelopeError> {
        if !(h > 0.0) || !(half_width > 0.0) || half_width < 4.0 * h {
            return Err(EnvelopeError::InvalidGrid { half_width, h });
        }
        Ok(Self {
            half_nodes: (half_width / h).round() as usize,
            h,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn half_nodes(&self) -> usize {
        self.half_nodes
    }

    pub fn half_width(&self) -> f64 {
        self.half_nodes as f64 * self.h
    }

    pub fn len(&self) -> usize {
        2 * self.half_nodes + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn abscissae(&self) -> Vec<f64> {
        let n = self.half_nodes as isize;
        (-n..=n).map(|j| j as f64 * self.h).collect()
    }
}

/// Real samples of `(A_psi, A_phi)` on a symmetric grid centered at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePair {
    pub grid: EnvelopeGrid,
    pub a_psi: Vec<f64>,
    pub a_phi: Vec<f64>,
}

impl EnvelopePair {
    pub fn from_fn(grid: EnvelopeGrid, psi: impl Fn(f64) -> f64, phi: impl Fn(f64) -> f64) -> Self {
        let x = grid.abscissae();
        Self {
            grid,
            a_psi: x.iter().map(|&v| psi(v)).collect(),
            a_phi: x.iter().map(|&v| phi(v)).collect(),
        }
    }

    pub fn abscissae(&self) -> Vec<f64> {
        self.grid.abscissae()
    }

    pub fn max_psi(&self) -> f64 {
        max_abs(&self.a_psi)
    }

    pub fn max_phi(&self) -> f64 {
        max_abs(&self.a_phi)
    }

    /// `arctan(max|A_phi| / max|A_psi|)` in radians.
    pub fn polarization_angle(&self) -> f64 {
        self.max_phi().atan2(self.max_psi())
    }

    /// Sample at signed offset `k` from the center; zero outside the grid.
    pub fn sample(&self, k: isize) -> (f64, f64) {
        let idx = k + self.grid.half_nodes as isize;
        if idx < 0 || idx as usize >= self.a_psi.len() {
            (0.0, 0.0)
        } else {
            (self.a_psi[idx as usize], self.a_phi[idx as usize])
        }
    }

    /// Linear interpolation at arbitrary `x`; zero outside the grid.
    pub fn interpolate(&self, x: f64) -> (f64, f64) {
        let s = x / self.grid.h + self.grid.half_nodes as f64;
        let last = (self.a_psi.len() - 1) as f64;
        if !(0.0..=last).contains(&s) {
            return (0.0, 0.0);
        }
        let j = (s.floor() as usize).min(self.a_psi.len() - 2);
        let w = s - j as f64;
        (
            (1.0 - w) * self.a_psi[j] + w * self.a_psi[j + 1],
            (1.0 - w) * self.a_phi[j] + w * self.a_phi[j + 1],
        )
    }

    /// Resamples onto another grid by linear interpolation.
    pub fn resample(&self, grid: EnvelopeGrid) -> Self {
        if grid == self.grid {
            return self.clone();
        }
        let x = grid.abscissae();
        let (a_psi, a_phi) = x.iter().map(|&v| self.interpolate(v)).unzip();
        Self { grid, a_psi, a_phi }
    }

    /// Writes `x,a_psi,a_phi` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,a_psi,a_phi")?;
        for (j, x) in self.abscissae().iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                fmt_num(*x),
                fmt_num(self.a_psi[j]),
                fmt_num(self.a_phi[j])
            )?;
        }
        Ok(())
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, a| m.max(a.abs()))
}

/// `amplitude * sech(rate * x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SechProfile {
    pub amplitude: f64,
    pub rate: f64,
}

impl SechProfile {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude / (self.rate * x).cosh()
    }
}

/// Closed form of the circular branch: `A_psi = A_phi = a sech(b x)` with
/// `b = sqrt(-(n + c^2/4))`, `a = b / sqrt(alpha1)`.
pub fn circular_profile(params: &EnvelopeParams) -> Result<SechProfile, EnvelopeError> {
    params.check_nonlinearity()?;
    if params.n_psi != params.n_phi {
        return Err(EnvelopeError::NotCircular {
            n_psi: params.n_psi,
            n_phi: params.n_phi,
        });
    }
    let rate = params.decay_rate(Component::Psi)?;
    Ok(SechProfile {
        amplitude: rate / params.alpha1.sqrt(),
        rate,
    })
}

pub fn circular_envelope(
    params: &EnvelopeParams,
    grid: EnvelopeGrid,
) -> Result<EnvelopePair, EnvelopeError> {
    let p = circular_profile(params)?;
    Ok(EnvelopePair::from_fn(grid, |x| p.eval(x), |x| p.eval(x)))
}

/// Closed form with one component identically zero (linear polarization):
/// `A = b sqrt(2/alpha1) sech(b x)`.
pub fn single_component_profile(
    params: &EnvelopeParams,
    component: Component,
) -> Result<SechProfile, EnvelopeError> {
    params.check_nonlinearity()?;
    let rate = params.decay_rate(component)?;
    Ok(SechProfile {
        amplitude: rate * (2.0 / params.alpha1).sqrt(),
        rate,
    })
}

pub fn single_component_envelope(
    params: &EnvelopeParams,
    component: Component,
    grid: EnvelopeGrid,
) -> Result<EnvelopePair, EnvelopeError> {
    let p = single_component_profile(params, component)?;
    let zero = |_: f64| 0.0;
    Ok(match component {
        Component::Psi => EnvelopePair::from_fn(grid, |x| p.eval(x), zero),
        Component::Phi => EnvelopePair::from_fn(grid, zero, |x| p.eval(x)),
    })
}

/// Symmetric two-frequency bound state of the conjugate system.
///
/// With `k1 < k2` the decay rates of the less and more bound component,
/// and `D = k2 cosh(k1 x) cosh(k2 x) - k1 sinh(k1 x) sinh(k2 x)`,
///
/// ```text
/// A_1 = sqrt(2/alpha1) k1 sqrt(k2^2 - k1^2) sinh(k2 x) / D   (odd)
/// A_2 = sqrt(2/alpha1) k2 sqrt(k2^2 - k1^2) cosh(k1 x) / D   (even)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundStateProfile {
    /// Component carrying the node (the less bound one).
    pub odd: Component,
    k1: f64,
    k2: f64,
    scale: f64,
}

impl BoundStateProfile {
    pub fn new(params: &EnvelopeParams) -> Result<Self, EnvelopeError> {
        params.check_nonlinearity()?;
        let kp = params.decay_rate(Component::Psi)?;
        let kf = params.decay_rate(Component::Phi)?;
        if kp == kf {
            return Err(EnvelopeError::DegenerateFrequencies);
        }
        let (odd, k1, k2) = if kp < kf {
            (Component::Psi, kp, kf)
        } else {
            (Component::Phi, kf, kp)
        };
        Ok(Self {
            odd,
            k1,
            k2,
            scale: (2.0 / params.alpha1).sqrt() * (k2 * k2 - k1 * k1).sqrt(),
        })
    }

    /// Returns `(odd component value, even component value)` at `x`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let (k1, k2) = (self.k1, self.k2);
        let s = x.abs();
        // everything scaled by exp(-(k1 + k2) s) to stay finite far out
        let e1 = (-2.0 * k1 * s).exp();
        let e2 = (-2.0 * k2 * s).exp();
        let den = k2 * (1.0 + e1) * (1.0 + e2) - k1 * (1.0 - e1) * (1.0 - e2);
        let odd = x.signum() * self.scale * k1 * 2.0 * (-k1 * s).exp() * (1.0 - e2) / den;
        let even = self.scale * k2 * 2.0 * (-k2 * s).exp() * (1.0 + e1) / den;
        (if x == 0.0 { 0.0 } else { odd }, even)
    }

    pub fn eval_components(&self, x: f64) -> (f64, f64) {
        let (odd, even) = self.eval(x);
        match self.odd {
            Component::Psi => (odd, even),
            Component::Phi => (even, odd),
        }
    }
}

pub fn bound_state_envelope(
    params: &EnvelopeParams,
    grid: EnvelopeGrid,
) -> Result<EnvelopePair, EnvelopeError> {
    let p = BoundStateProfile::new(params)?;
    let x = grid.abscissae();
    let (a_psi, a_phi) = x.iter().map(|&v| p.eval_components(v)).unzip();
    Ok(EnvelopePair { grid, a_psi, a_phi })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonControl {
    /// Convergence threshold on the max-norm of the Newton update.
    pub update_tol: f64,
    pub max_iterations: usize,
    /// A component whose maximum falls below this is considered collapsed.
    pub trivial_threshold: f64,
    /// Required decay at the node next to the boundary.
    pub tail_tol: f64,
}

impl Default for NewtonControl {
    fn default() -> Self {
        Self {
            update_tol: 1e-12,
            max_iterations: 50,
            trivial_threshold: 1e-3,
            tail_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonReport {
    pub iterations: usize,
    pub final_update: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Parity {
    Even,
    Odd,
}

fn detect_parity(
    values: &[f64],
    center: usize,
    component: Component,
) -> Result<Parity, EnvelopeError> {
    let scale = max_abs(values);
    if scale == 0.0 {
        return Ok(Parity::Even);
    }
    let mut even_dev = 0.0f64;
    let mut odd_dev = 0.0f64;
    for k in 0..=center {
        let (l, r) = (values[center - k], values[center + k]);
        even_dev = even_dev.max((l - r).abs());
        odd_dev = odd_dev.max((l + r).abs());
    }
    let (parity, dev) = if even_dev <= odd_dev {
        (Parity::Even, even_dev)
    } else {
        (Parity::Odd, odd_dev)
    };
    if dev > 1e-6 * scale {
        return Err(EnvelopeError::AsymmetricGuess {
            component,
            deviation: dev / scale,
        });
    }
    Ok(parity)
}

/// Max-norm residual of the central-difference conjugate system on the
/// interior nodes of `pair`.
pub fn discrete_residual(params: &EnvelopeParams, pair: &EnvelopePair) -> f64 {
    let h2 = pair.grid.h * pair.grid.h;
    let ep = params.shifted_frequency(Component::Psi);
    let ef = params.shifted_frequency(Component::Phi);
    let (a, b) = (&pair.a_psi, &pair.a_phi);
    let mut worst = 0.0f64;
    for j in 1..a.len() - 1 {
        let rho = a[j] * a[j] + b[j] * b[j];
        let fa = (a[j - 1] - 2.0 * a[j] + a[j + 1]) / h2 + ep * a[j] + params.alpha1 * rho * a[j];
        let fb = (b[j - 1] - 2.0 * b[j] + b[j + 1]) / h2 + ef * b[j] + params.alpha1 * rho * b[j];
        worst = worst.max(fa.abs()).max(fb.abs());
    }
    worst
}

/// Solves the discretized conjugate system with homogeneous Dirichlet ends
/// by Newton's method, starting from `guess` (resampled onto `grid`).
///
/// The parity of each guess component (even or odd about the center) is
/// preserved: the iteration runs on the half grid `x >= 0` with a mirror
/// condition at the center, which removes the translation mode from the
/// Jacobian.
pub fn solve_conjugate_bvp(
    params: &EnvelopeParams,
    grid: EnvelopeGrid,
    guess: &EnvelopePair,
    ctrl: &NewtonControl,
) -> Result<(EnvelopePair, NewtonReport), EnvelopeError> {
    params.validate()?;
    let guess = guess.resample(grid);
    let center = grid.half_nodes;
    let scale_psi = max_abs(&guess.a_psi);
    let scale_phi = max_abs(&guess.a_phi);
    if scale_psi.max(scale_phi) < ctrl.trivial_threshold {
        return Err(EnvelopeError::TrivialGuess);
    }
    let par_psi = detect_parity(&guess.a_psi, center, Component::Psi)?;
    let par_phi = detect_parity(&guess.a_phi, center, Component::Phi)?;
    if params.n_psi == params.n_phi && par_psi == par_phi && scale_psi > 0.0 && scale_phi > 0.0 {
        return solve_rotated(params, grid, &guess, ctrl, scale_psi, scale_phi);
    }

    // half-grid unknowns j = 0..n-1 at x = j h; node n is the Dirichlet end
    let n = center;
    let h2 = grid.h * grid.h;
    let ep = params.shifted_frequency(Component::Psi);
    let ef = params.shifted_frequency(Component::Phi);
    let alpha = params.alpha1;
    let mut a: Vec<f64> = guess.a_psi[center..center + n].to_vec();
    let mut b: Vec<f64> = guess.a_phi[center..center + n].to_vec();
    if par_psi == Parity::Odd {
        a[0] = 0.0;
    }
    if par_phi == Parity::Odd {
        b[0] = 0.0;
    }

    let c = |re: f64| Complex64::new(re, 0.0);
    // neighbor value with reflection at j = -1 and zero at j = n
    let nb = |v: &[f64], j: isize, parity: Parity| -> f64 {
        if j < 0 {
            match parity {
                Parity::Even => v[(-j) as usize],
                Parity::Odd => -v[(-j) as usize],
            }
        } else if j as usize >= n {
            0.0
        } else {
            v[j as usize]
        }
    };

    let mut last_update = f64::INFINITY;
    for iter in 1..=ctrl.max_iterations {
        let mut jac = BandMatrix::zeros(2 * n, 2, 2)?;
        let mut rhs = vec![c(0.0); 2 * n];
        for j in 0..n {
            let ji = j as isize;
            let rho = a[j] * a[j] + b[j] * b[j];
            for (comp, v, e, parity) in [(0usize, &a, ep, par_psi), (1usize, &b, ef, par_phi)] {
                let row = 2 * j + comp;
                if j == 0 && parity == Parity::Odd {
                    jac.add(row, row, c(1.0));
                    rhs[row] = c(0.0);
                    continue;
                }
                let f = (nb(v, ji - 1, parity) - 2.0 * v[j] + nb(v, ji + 1, parity)) / h2
                    + e * v[j]
                    + alpha * rho * v[j];
                rhs[row] = c(-f);
                let self_sq = v[j] * v[j];
                jac.add(row, row, c(-2.0 / h2 + e + alpha * (rho + 2.0 * self_sq)));
                let other = 2 * j + (1 - comp);
                jac.add(row, other, c(2.0 * alpha * a[j] * b[j]));
                if j + 1 < n {
                    let w = if j == 0 { 2.0 } else { 1.0 };
                    jac.add(row, row + 2, c(w / h2));
                }
                if j > 0 {
                    jac.add(row, row - 2, c(1.0 / h2));
                }
            }
        }
        let lu = jac.factor()?;
        lu.solve_in_place(&mut rhs)?;
        let mut update = 0.0f64;
        for j in 0..n {
            a[j] += rhs[2 * j].re;
            b[j] += rhs[2 * j + 1].re;
            update = update.max(rhs[2 * j].re.abs()).max(rhs[2 * j + 1].re.abs());
        }
        if !update.is_finite() {
            break;
        }
        last_update = update;
        if update <= ctrl.update_tol {
            let pair = mirror(grid, &a, &b, par_psi, par_phi);
            for (comp, values, guess_scale) in [
                (Component::Psi, &pair.a_psi, scale_psi),
                (Component::Phi, &pair.a_phi, scale_phi),
            ] {
                let amp = max_abs(values);
                if guess_scale >= ctrl.trivial_threshold && amp < ctrl.trivial_threshold {
                    return Err(EnvelopeError::TrivialBranch {
                        component: comp,
                        amplitude: amp,
                    });
                }
            }
            let tail = a[n - 1].abs().max(b[n - 1].abs());
            if tail > ctrl.tail_tol {
                return Err(EnvelopeError::DomainTooNarrow {
                    value: tail,
                    limit: ctrl.tail_tol,
                });
            }
            let residual = discrete_residual(params, &pair);
            return Ok((
                pair,
                NewtonReport {
                    iterations: iter,
                    final_update: update,
                    residual,
                },
            ));
        }
    }
    Err(EnvelopeError::NewtonDiverged {
        iterations: ctrl.max_iterations,
        last_update,
    })
}

// Equal frequencies: the system is invariant under rotations of
// (a_psi, a_phi), so the Jacobian is singular along the rotation. Solve for
// the projection onto the guess direction and rotate back.
fn solve_rotated(
    params: &EnvelopeParams,
    grid: EnvelopeGrid,
    guess: &EnvelopePair,
    ctrl: &NewtonControl,
    scale_psi: f64,
    scale_phi: f64,
) -> Result<(EnvelopePair, NewtonReport), EnvelopeError> {
    let (aa, ab, bb) = guess
        .a_psi
        .iter()
        .zip(&guess.a_phi)
        .fold((0.0, 0.0, 0.0), |(aa, ab, bb), (a, b)| {
            (aa + a * a, ab + a * b, bb + b * b)
        });
    // principal direction of the Gram matrix [[aa, ab], [ab, bb]]
    let theta = 0.5 * (2.0 * ab).atan2(aa - bb);
    let (sa, sb) = (theta.cos(), theta.sin());
    let projected = EnvelopePair {
        grid,
        a_psi: guess
            .a_psi
            .iter()
            .zip(&guess.a_phi)
            .map(|(a, b)| sa * a + sb * b)
            .collect(),
        a_phi: vec![0.0; guess.a_phi.len()],
    };
    let (sol, report) = solve_conjugate_bvp(params, grid, &projected, ctrl)?;
    let pair = EnvelopePair {
        grid,
        a_psi: sol.a_psi.iter().map(|u| sa * u).collect(),
        a_phi: sol.a_psi.iter().map(|u| sb * u).collect(),
    };
    for (comp, values, guess_scale) in [
        (Component::Psi, &pair.a_psi, scale_psi),
        (Component::Phi, &pair.a_phi, scale_phi),
    ] {
        let amp = max_abs(values);
        if guess_scale >= ctrl.trivial_threshold && amp < ctrl.trivial_threshold {
            return Err(EnvelopeError::TrivialBranch {
                component: comp,
                amplitude: amp,
            });
        }
    }
    let residual = discrete_residual(params, &pair);
    Ok((pair, NewtonReport { residual, ..report }))
}

fn mirror(grid: EnvelopeGrid, a: &[f64], b: &[f64], pa: Parity, pb: Parity) -> EnvelopePair {
    let n = grid.half_nodes;
    let full = |v: &[f64], p: Parity| -> Vec<f64> {
        let mut out = vec![0.0; 2 * n + 1];
        for j in 0..n {
            out[n + j] = v[j];
            out[n - j] = match p {
                Parity::Even => v[j],
                Parity::Odd => -v[j],
            };
        }
        if p == Parity::Odd {
            out[n] = 0.0;
        }
        out
    };
    EnvelopePair {
        grid,
        a_psi: full(a, pa),
        a_phi: full(b, pb),
    }
}

/// Initial guess for `to` built from a converged solution at `from`: each
/// component is rescaled in amplitude and width by the ratio of decay
/// rates, which is exact along the sech branches. Falls back to the
/// unchanged solution when either parameter set is unbound.
pub fn continuation_guess(
    from: &EnvelopeParams,
    solution: &EnvelopePair,
    to: &EnvelopeParams,
) -> EnvelopePair {
    if from == to {
        return solution.clone();
    }
    let ratio = |comp| -> f64 {
        match (from.decay_rate(comp), to.decay_rate(comp)) {
            (Ok(kf), Ok(kt)) => kt / kf,
            _ => 1.0,
        }
    };
    let amp_scale = (from.alpha1 / to.alpha1).sqrt();
    let (rp, rf) = (ratio(Component::Psi), ratio(Component::Phi));
    let x = solution.abscissae();
    let a_psi = x
        .iter()
        .map(|&v| amp_scale * rp * solution.interpolate(rp * v).0)
        .collect();
    let a_phi = x
        .iter()
        .map(|&v| amp_scale * rf * solution.interpolate(rf * v).1)
        .collect();
    EnvelopePair {
        grid: solution.grid,
        a_psi,
        a_phi,
    }
}

/// Walks from `from` to `to` in `steps` equal parameter increments,
/// solving at every rung. Returns the report of each rung and the final
/// solution.
pub fn continue_solution(
    from: &EnvelopeParams,
    solution: &EnvelopePair,
    to: &EnvelopeParams,
    steps: usize,
    ctrl: &NewtonControl,
) -> Result<(EnvelopePair, Vec<NewtonReport>), EnvelopeError> {
    let steps = steps.max(1);
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let mut current = solution.clone();
    let mut params = *from;
    let mut reports = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        let next = EnvelopeParams {
            n_psi: lerp(from.n_psi, to.n_psi, t),
            n_phi: lerp(from.n_phi, to.n_phi, t),
            c: lerp(from.c, to.c, t),
            alpha1: lerp(from.alpha1, to.alpha1, t),
        };
        let guess = continuation_guess(&params, &current, &next);
        let (sol, report) = solve_conjugate_bvp(&next, current.grid, &guess, ctrl)?;
        reports.push(report);
        current = sol;
        params = next;
    }
    Ok((current, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(h: f64) -> EnvelopeGrid {
        EnvelopeGrid::new(30.0, h).unwrap()
    }

    #[test]
    fn circular_closed_form_values() {
        let p = circular_profile(&EnvelopeParams::circular(-1.5, 1.0, 0.75)).unwrap();
        assert!((p.rate - 1.118034).abs() < 1e-6);
        assert!((p.amplitude - 1.290994).abs() < 1e-6);
    }

    #[test]
    fn circular_closed_form_satisfies_ode() {
        // pointwise residual of A'' + (n + c^2/4) A + 2 alpha1 A^3 using the
        // analytic second derivative a b^2 (sech - 2 sech^3)
        let params = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let p = circular_profile(&params).unwrap();
        let e = params.shifted_frequency(Component::Psi);
        for k in -400..=400 {
            let x = k as f64 * 0.05;
            let s = 1.0 / (p.rate * x).cosh();
            let a = p.amplitude * s;
            let d2 = p.amplitude * p.rate * p.rate * (s - 2.0 * s * s * s);
            let r = d2 + e * a + params.alpha1 * (a * a + a * a) * a;
            assert!(r.abs() < 1e-12, "x = {x}: {r}");
        }
    }

    #[test]
    fn circular_unbound_at_threshold() {
        let params = EnvelopeParams::circular(-0.25, 1.0, 0.75);
        assert!(matches!(
            circular_profile(&params),
            Err(EnvelopeError::UnboundState { .. })
        ));
    }

    #[test]
    fn quadrupled_nonlinearity_halves_amplitude() {
        let a = circular_profile(&EnvelopeParams::circular(-1.5, 1.0, 0.75)).unwrap();
        let b = circular_profile(&EnvelopeParams::circular(-1.5, 1.0, 3.0)).unwrap();
        assert!((b.amplitude - 0.5 * a.amplitude).abs() < 1e-15);
        assert_eq!(a.rate, b.rate);
    }

    #[test]
    fn bound_state_parity_and_norms() {
        let params = EnvelopeParams {
            n_psi: -1.1,
            n_phi: -1.5,
            c: 1.0,
            alpha1: 0.75,
        };
        let pair = bound_state_envelope(&params, grid(0.01)).unwrap();
        let n = pair.grid.half_nodes();
        for k in 0..=n {
            assert!((pair.a_psi[n + k] + pair.a_psi[n - k]).abs() < 1e-14);
            assert!((pair.a_phi[n + k] - pair.a_phi[n - k]).abs() < 1e-14);
        }
        // component norms of the reflectionless bound state are 4 k_j / alpha1
        let h = pair.grid.h();
        let na: f64 = pair.a_psi.iter().map(|v| v * v).sum::<f64>() * h;
        let nb: f64 = pair.a_phi.iter().map(|v| v * v).sum::<f64>() * h;
        let kp = params.decay_rate(Component::Psi).unwrap();
        let kf = params.decay_rate(Component::Phi).unwrap();
        assert!((na - 4.0 * kp / 0.75).abs() < 1e-6, "{na}");
        assert!((nb - 4.0 * kf / 0.75).abs() < 1e-6, "{nb}");
    }

    #[test]
    fn newton_reproduces_circular_closed_form_on_fine_grid() {
        let params = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let g = EnvelopeGrid::new(30.0, 1e-4).unwrap();
        let exact = circular_envelope(&params, g).unwrap();
        let guess =
            EnvelopePair::from_fn(g, |x| 1.1 / (1.05 * x).cosh(), |x| 1.1 / (1.05 * x).cosh());
        let (sol, report) =
            solve_conjugate_bvp(&params, g, &guess, &NewtonControl::default()).unwrap();
        assert!(report.final_update <= 1e-12);
        let dev = sol
            .a_psi
            .iter()
            .zip(&exact.a_psi)
            .chain(sol.a_phi.iter().zip(&exact.a_phi))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-8, "deviation {dev}");
    }

    #[test]
    fn newton_residual_symmetry_and_tails() {
        let params = EnvelopeParams {
            n_psi: -1.1,
            n_phi: -1.5,
            c: 1.0,
            alpha1: 0.75,
        };
        let g = grid(0.05);
        let guess = bound_state_envelope(&params, g).unwrap();
        let (sol, report) =
            solve_conjugate_bvp(&params, g, &guess, &NewtonControl::default()).unwrap();
        assert!(report.iterations <= 10);
        assert!(report.residual <= 1e-10, "{}", report.residual);
        let n = g.half_nodes();
        for k in 0..=n {
            assert!((sol.a_psi[n + k].abs() - sol.a_psi[n - k].abs()).abs() < 1e-8);
            assert!((sol.a_phi[n + k] - sol.a_phi[n - k]).abs() < 1e-8);
        }
        for v in [&sol.a_psi, &sol.a_phi] {
            let right = &v[n..];
            let peak = right
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .unwrap()
                .0;
            for w in right[peak..].windows(2) {
                assert!(w[1].abs() <= w[0].abs());
            }
            assert!(v[1].abs() < 1e-8 && v[v.len() - 2].abs() < 1e-8);
        }
        // discrete and analytic bound states agree to O(h^2)
        let dev = sol
            .a_psi
            .iter()
            .zip(&guess.a_psi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-3, "{dev}");
        assert!((sol.polarization_angle() - guess.polarization_angle()).abs() < 1e-3);
    }

    #[test]
    fn second_order_grid_convergence() {
        let params = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let exact = circular_profile(&params).unwrap();
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| {
                let g = grid(h);
                let guess = circular_envelope(&params, g).unwrap();
                let (sol, _) =
                    solve_conjugate_bvp(&params, g, &guess, &NewtonControl::default()).unwrap();
                sol.abscissae()
                    .iter()
                    .zip(&sol.a_psi)
                    .map(|(x, a)| (a - exact.eval(*x)).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let r = w[0] / w[1];
            assert!((3.5..=4.5).contains(&r), "ratio {r} from {errs:?}");
        }
    }

    #[test]
    fn even_guess_with_distinct_frequencies_collapses() {
        // starting from the circular branch, no nodeless two-component
        // solution exists once n_psi != n_phi
        let circ = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let g = grid(0.05);
        let sol = circular_envelope(&circ, g).unwrap();
        let to = EnvelopeParams {
            n_psi: -1.1,
            ..circ
        };
        let err = continue_solution(&circ, &sol, &to, 4, &NewtonControl::default()).unwrap_err();
        assert!(
            matches!(
                err,
                EnvelopeError::TrivialBranch { .. } | EnvelopeError::NewtonDiverged { .. }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn continuation_along_bound_state_branch() {
        let from = EnvelopeParams {
            n_psi: -1.1,
            n_phi: -1.5,
            c: 1.0,
            alpha1: 0.75,
        };
        let g = grid(0.05);
        let (start, _) = solve_conjugate_bvp(
            &from,
            g,
            &bound_state_envelope(&from, g).unwrap(),
            &NewtonControl::default(),
        )
        .unwrap();
        let to = EnvelopeParams { c: 0.8, ..from };
        let (sol, reports) =
            continue_solution(&from, &start, &to, 4, &NewtonControl::default()).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports.iter().all(|r| r.iterations <= 10), "{reports:?}");
        let target = bound_state_envelope(&to, g).unwrap();
        assert!((sol.polarization_angle() - target.polarization_angle()).abs() < 1e-3);
    }

    #[test]
    fn identity_continuation() {
        let p = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let sol = circular_envelope(&p, grid(0.1)).unwrap();
        assert_eq!(continuation_guess(&p, &sol, &p), sol);
    }

    #[test]
    fn continuation_to_threshold_is_unbound() {
        let p = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let sol = circular_envelope(&p, grid(0.1)).unwrap();
        let to = EnvelopeParams { n_psi: -0.25, ..p };
        let guess = continuation_guess(&p, &sol, &to);
        assert!(matches!(
            solve_conjugate_bvp(&to, sol.grid, &guess, &NewtonControl::default()),
            Err(EnvelopeError::UnboundState { .. })
        ));
    }

    #[test]
    fn trivial_guess_rejected() {
        let p = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let g = grid(0.1);
        let guess = EnvelopePair::from_fn(g, |_| 0.0, |_| 0.0);
        assert_eq!(
            solve_conjugate_bvp(&p, g, &guess, &NewtonControl::default()),
            Err(EnvelopeError::TrivialGuess)
        );
    }

    #[test]
    fn small_guess_is_captured_by_trivial_branch() {
        let p = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let g = grid(0.1);
        let guess =
            EnvelopePair::from_fn(g, |x| 0.05 / (x / 3.0).cosh(), |x| 0.05 / (x / 3.0).cosh());
        let r = solve_conjugate_bvp(&p, g, &guess, &NewtonControl::default());
        assert!(
            matches!(r, Err(EnvelopeError::TrivialBranch { .. })),
            "{r:?}"
        );
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = EnvelopeParams::circular(-1.5, 1.0, 0.75);
        let sol = circular_envelope(&p, grid(1.0)).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("x,a_psi,a_phi"));
        assert_eq!(text.lines().count(), sol.a_psi.len() + 1);
    }
}
