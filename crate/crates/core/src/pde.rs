//! Time stepping of the linearly coupled system by the conservative
//! Crank–Nicolson scheme in complex arithmetic.
//!
//! Each time step solves the nonlinear scheme
//!
//! ```text
//! i (psi^{n+1} - psi^n)/dt = beta/(2h^2) (D2 psi^{n+1} + D2 psi^n)
//!     + alpha1/4 (psi^{n+1} + psi^n) (|psi^{n+1}|^2 + |psi^n|^2 + |phi^{n+1}|^2 + |phi^n|^2)
//!     - Gamma/2 (phi^{n+1} + phi^n)
//! ```
//!
//! (and the same with psi and phi exchanged) by internal iterations. In
//! iteration k the modulus products are taken as `chi^{k+1} conj(chi^k)`,
//! so each sweep is a linear system in the new iterate.

use num_complex::Complex64;
use thiserror::Error;

use crate::band::{BandMatrix, LinalgError};
use crate::envelope::EnvelopePair;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid model parameters: {0}")]
    InvalidModel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field length {found} does not match grid node count {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("envelope spacing {envelope} differs from grid spacing {grid}")]
    IncompatibleEnvelope { envelope: f64, grid: f64 },
    #[error("soliton center {x0} is not on a grid node")]
    OffGridCenter { x0: f64 },
    #[error("shifted envelope does not decay inside the domain (|A| = {amplitude:e} at the edge)")]
    ShiftOutOfDomain { amplitude: f64 },
    #[error("superposed states overlap ({overlap:e} > {limit:e})")]
    OverlapTooLarge { overlap: f64, limit: f64 },
    #[error("nothing to superpose")]
    EmptySuperposition,
    #[error("states live at different times ({0} vs {1})")]
    TimeMismatch(f64, f64),
    #[error("inner iterations did not converge in {iterations} loops (last update {last_update:e}, residual {residual:e}); reduce the time step")]
    InnerIterationDiverged {
        iterations: usize,
        last_update: f64,
        residual: f64,
    },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub beta: f64,
    pub alpha1: f64,
    pub gamma: Complex64,
}

impl ModelParams {
    pub fn new(beta: f64, alpha1: f64, gamma: Complex64) -> Result<Self, PdeError> {
        let p = Self {
            beta,
            alpha1,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        if self.beta == 0.0 || !self.beta.is_finite() {
            return Err(PdeError::InvalidModel(format!("beta = {}", self.beta)));
        }
        if !(self.alpha1 > 0.0) || !self.alpha1.is_finite() {
            return Err(PdeError::InvalidModel(format!("alpha1 = {}", self.alpha1)));
        }
        if !self.gamma.re.is_finite() || !self.gamma.im.is_finite() {
            return Err(PdeError::InvalidModel(format!("gamma = {}", self.gamma)));
        }
        Ok(())
    }

    /// True when Im(Gamma) != 0; the invariants are then not conserved.
    pub fn has_gain(&self) -> bool {
        self.gamma.im != 0.0
    }
}

/// Uniform mesh `x_i = -l1 + i h`, `i = 0..=m`, `h = (l1 + l2) / m`.
/// Nodes `0` and `m` carry the homogeneous Dirichlet condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub l1: f64,
    pub l2: f64,
    pub m: usize,
    pub dtau: f64,
}

impl Grid {
    pub fn new(l1: f64, l2: f64, m: usize, dtau: f64) -> Result<Self, PdeError> {
        let g = Self { l1, l2, m, dtau };
        g.validate()?;
        Ok(g)
    }

    /// Grid with spacing `h`; `l1 + l2` must be a multiple of `h`.
    pub fn with_spacing(l1: f64, l2: f64, h: f64, dtau: f64) -> Result<Self, PdeError> {
        let cells = (l1 + l2) / h;
        let m = cells.round();
        if !(h > 0.0) || (cells - m).abs() > 1e-6 {
            return Err(PdeError::InvalidGrid(format!(
                "length {} is not a multiple of h = {h}",
                l1 + l2
            )));
        }
        Self::new(l1, l2, m as usize, dtau)
    }

    pub fn validate(&self) -> Result<(), PdeError> {
        if !(self.l1 > 0.0 && self.l2 > 0.0) {
            return Err(PdeError::InvalidGrid(format!(
                "interval bounds must be positive (l1 = {}, l2 = {})",
                self.l1, self.l2
            )));
        }
        if self.m < 16 {
            return Err(PdeError::InvalidGrid(format!("m = {} < 16", self.m)));
        }
        if !(self.dtau > 0.0) {
            return Err(PdeError::InvalidGrid(format!("dtau = {}", self.dtau)));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        (self.l1 + self.l2) / self.m as f64
    }

    pub fn nodes(&self) -> usize {
        self.m + 1
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.l1 + i as f64 * self.h()
    }

    pub fn abscissae(&self) -> Vec<f64> {
        (0..self.nodes()).map(|i| self.x(i)).collect()
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest_node(&self, x: f64) -> usize {
        (((x + self.l1) / self.h()).round().max(0.0) as usize).min(self.m)
    }
}

/// The two complex fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub time: f64,
    pub psi: Vec<Complex64>,
    pub phi: Vec<Complex64>,
}

impl FieldState {
    pub fn zeros(grid: &Grid) -> Self {
        Self {
            time: 0.0,
            psi: vec![ZERO; grid.nodes()],
            phi: vec![ZERO; grid.nodes()],
        }
    }

    pub fn check(&self, grid: &Grid) -> Result<(), PdeError> {
        for v in [&self.psi, &self.phi] {
            if v.len() != grid.nodes() {
                return Err(PdeError::LengthMismatch {
                    expected: grid.nodes(),
                    found: v.len(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Largest modulus over both boundary nodes of both fields.
    pub fn boundary_magnitude(&self) -> f64 {
        let n = self.len();
        [self.psi[0], self.psi[n - 1], self.phi[0], self.phi[n - 1]]
            .iter()
            .fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Max-norm distance over both fields.
    pub fn max_distance(&self, other: &FieldState) -> f64 {
        self.psi
            .iter()
            .zip(&other.psi)
            .chain(self.phi.iter().zip(&other.phi))
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// `sqrt(|psi_i|^2 + |phi_i|^2)` at every node.
    pub fn amplitude(&self) -> Vec<f64> {
        self.psi
            .iter()
            .zip(&self.phi)
            .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt())
            .collect()
    }
}

/// One quasi-particle: center, envelope speed, carrier frequencies and
/// component phases (radians). Both components share the speed `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonSpec {
    pub x0: f64,
    pub c: f64,
    pub n_psi: f64,
    pub n_phi: f64,
    pub delta_psi: f64,
    pub delta_phi: f64,
}

/// Threshold below which the envelope must have decayed at the domain ends.
pub const ENVELOPE_EDGE_TOL: f64 = 1e-6;
/// Largest admissible pointwise overlap of superposed states.
pub const OVERLAP_TOL: f64 = 1e-6;

/// Places the envelope at `spec.x0` with carrier `exp(i[-(c/2)(x - x0) + delta])`.
/// The envelope spacing must match the grid and `x0` must be a node.
pub fn assemble_soliton(
    envelope: &EnvelopePair,
    spec: &SolitonSpec,
    grid: &Grid,
) -> Result<FieldState, PdeError> {
    let h = grid.h();
    let he = envelope.grid.h();
    if ((he - h) / h).abs() > 1e-9 {
        return Err(PdeError::IncompatibleEnvelope {
            envelope: he,
            grid: h,
        });
    }
    let s = (spec.x0 + grid.l1) / h;
    let center = s.round();
    if (s - center).abs() > 1e-6 {
        return Err(PdeError::OffGridCenter { x0: spec.x0 });
    }
    let center = center as isize;
    let half = envelope.grid.half_nodes() as isize;
    let last = grid.m as isize;

    let mut edge = 0.0f64;
    for k in -half..=half {
        let i = center + k;
        if i <= 0 || i >= last {
            let (a, b) = envelope.sample(k);
            edge = edge.max(a.abs()).max(b.abs());
        }
    }
    if edge > ENVELOPE_EDGE_TOL {
        return Err(PdeError::ShiftOutOfDomain { amplitude: edge });
    }

    let mut state = FieldState::zeros(grid);
    for i in 1..grid.m {
        let k = i as isize - center;
        let (a, b) = envelope.sample(k);
        let carrier = -0.5 * spec.c * (grid.x(i) - spec.x0);
        state.psi[i] = Complex64::from_polar(1.0, carrier + spec.delta_psi) * a;
        state.phi[i] = Complex64::from_polar(1.0, carrier + spec.delta_phi) * b;
    }
    Ok(state)
}

/// Pointwise sum of states on the same grid. Pairs whose overlap (max over
/// nodes of the product of their amplitudes, relative to the product of
/// the two peak amplitudes) exceeds [`OVERLAP_TOL`] are rejected.
pub fn superpose(states: &[FieldState]) -> Result<FieldState, PdeError> {
    let first = states.first().ok_or(PdeError::EmptySuperposition)?;
    let amps: Vec<Vec<f64>> = states.iter().map(FieldState::amplitude).collect();
    for (a, s) in states.iter().enumerate() {
        if s.len() != first.len() {
            return Err(PdeError::LengthMismatch {
                expected: first.len(),
                found: s.len(),
            });
        }
        if s.time != first.time {
            return Err(PdeError::TimeMismatch(first.time, s.time));
        }
        for b in a + 1..states.len() {
            let peak = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(*x));
            let scale = peak(&amps[a]) * peak(&amps[b]);
            let overlap = amps[a]
                .iter()
                .zip(&amps[b])
                .fold(0.0f64, |m, (x, y)| m.max(x * y))
                / if scale > 0.0 { scale } else { 1.0 };
            if overlap > OVERLAP_TOL {
                return Err(PdeError::OverlapTooLarge {
                    overlap,
                    limit: OVERLAP_TOL,
                });
            }
        }
    }
    let mut out = first.clone();
    for s in &states[1..] {
        for (o, v) in out.psi.iter_mut().zip(&s.psi) {
            *o += v;
        }
        for (o, v) in out.phi.iter_mut().zip(&s.phi) {
            *o += v;
        }
    }
    Ok(out)
}

/// Maps a solution `(Psi, Phi)` of the uncoupled (Manakov, alpha2 = 0)
/// system at time `t` to a solution of the linearly coupled system:
/// `psi = Psi cos(Gamma t) + i Phi sin(Gamma t)`,
/// `phi = Phi cos(Gamma t) + i Psi sin(Gamma t)`.
pub fn manakov_to_linear(manakov: &FieldState, t: f64, gamma: Complex64) -> FieldState {
    let arg = gamma * t;
    let (cs, sn) = (arg.cos(), arg.sin());
    let (psi, phi) = manakov
        .psi
        .iter()
        .zip(&manakov.phi)
        .map(|(&p, &f)| (p * cs + I * f * sn, f * cs + I * p * sn))
        .unzip();
    FieldState { time: t, psi, phi }
}

/// How the inter-component terms enter each internal iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingMode {
    /// Coupling taken at iterate k+1; unknowns interleaved
    /// `(psi_0, phi_0, psi_1, ...)` into one pentadiagonal complex system.
    #[default]
    Coupled,
    /// Coupling lagged at iterate k; two independent tridiagonal systems.
    Lagged,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationControl {
    pub update_tol: f64,
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub mode: CouplingMode,
    /// Start the iteration from `2 chi^n - chi^{n-1}` when the previous
    /// level is known.
    pub extrapolate: bool,
}

impl Default for IterationControl {
    fn default() -> Self {
        Self {
            update_tol: 1e-12,
            residual_tol: 1e-12,
            max_iterations: 30,
            mode: CouplingMode::Coupled,
            extrapolate: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationReport {
    pub iterations: usize,
    pub final_update: f64,
    pub residual: f64,
}

/// Max-norm residual of both scheme equations over the interior nodes.
pub fn scheme_residual(
    old: &FieldState,
    new: &FieldState,
    params: &ModelParams,
    grid: &Grid,
) -> f64 {
    let h = grid.h();
    let r = params.beta / (2.0 * h * h);
    let a4 = 0.25 * params.alpha1;
    let g2 = 0.5 * params.gamma;
    let idt = I / grid.dtau;
    let (p0, f0, p1, f1) = (&old.psi, &old.phi, &new.psi, &new.phi);
    let mut worst = 0.0f64;
    for i in 1..grid.m {
        let dens = p1[i].norm_sqr() + p0[i].norm_sqr() + f1[i].norm_sqr() + f0[i].norm_sqr();
        let lap = |v: &[Complex64], w: &[Complex64]| {
            v[i - 1] - 2.0 * v[i] + v[i + 1] + w[i - 1] - 2.0 * w[i] + w[i + 1]
        };
        let res_psi = idt * (p1[i] - p0[i]) - r * lap(p1, p0) - a4 * (p1[i] + p0[i]) * dens
            + g2 * (f1[i] + f0[i]);
        let res_phi = idt * (f1[i] - f0[i]) - r * lap(f1, f0) - a4 * (f1[i] + f0[i]) * dens
            + g2 * (p1[i] + p0[i]);
        worst = worst.max(res_psi.norm()).max(res_phi.norm());
    }
    worst
}

/// Reusable time stepper holding the system storage and the previous
/// time level for extrapolated starts.
#[derive(Debug)]
pub struct Stepper {
    params: ModelParams,
    grid: Grid,
    ctrl: IterationControl,
    coupled: Option<BandMatrix>,
    psi_sys: Option<BandMatrix>,
    phi_sys: Option<BandMatrix>,
    previous: Option<FieldState>,
}

impl Stepper {
    pub fn new(params: ModelParams, grid: Grid, ctrl: IterationControl) -> Result<Self, PdeError> {
        params.validate()?;
        grid.validate()?;
        let n = grid.nodes();
        let (coupled, psi_sys, phi_sys) = match ctrl.mode {
            CouplingMode::Coupled => (Some(BandMatrix::zeros(2 * n, 2, 2)?), None, None),
            CouplingMode::Lagged => (
                None,
                Some(BandMatrix::zeros(n, 1, 1)?),
                Some(BandMatrix::zeros(n, 1, 1)?),
            ),
        };
        Ok(Self {
            params,
            grid,
            ctrl,
            coupled,
            psi_sys,
            phi_sys,
            previous: None,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Forgets the stored previous level (e.g. after replacing the state).
    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Advances `state` by one time step.
    pub fn step(&mut self, state: &FieldState) -> Result<(FieldState, IterationReport), PdeError> {
        state.check(&self.grid)?;
        let mut iterate = match (&self.previous, self.ctrl.extrapolate) {
            (Some(prev), true) if prev.len() == state.len() => {
                let ex = |now: &[Complex64], before: &[Complex64]| -> Vec<Complex64> {
                    now.iter().zip(before).map(|(a, b)| 2.0 * a - b).collect()
                };
                FieldState {
                    time: state.time + self.grid.dtau,
                    psi: ex(&state.psi, &prev.psi),
                    phi: ex(&state.phi, &prev.phi),
                }
            }
            _ => FieldState {
                time: state.time + self.grid.dtau,
                ..state.clone()
            },
        };
        let m = self.grid.m;
        for v in [&mut iterate.psi, &mut iterate.phi] {
            v[0] = ZERO;
            v[m] = ZERO;
        }

        let mut last_update = f64::INFINITY;
        let mut residual = f64::INFINITY;
        for k in 1..=self.ctrl.max_iterations {
            let next = match self.ctrl.mode {
                CouplingMode::Coupled => self.sweep_coupled(state, &iterate)?,
                CouplingMode::Lagged => self.sweep_lagged(state, &iterate)?,
            };
            last_update = next.max_distance(&iterate);
            iterate = next;
            if !last_update.is_finite() {
                break;
            }
            if last_update <= self.ctrl.update_tol {
                residual = scheme_residual(state, &iterate, &self.params, &self.grid);
                if residual <= self.ctrl.residual_tol {
                    self.previous = Some(state.clone());
                    return Ok((
                        iterate,
                        IterationReport {
                            iterations: k,
                            final_update: last_update,
                            residual,
                        },
                    ));
                }
            }
        }
        Err(PdeError::InnerIterationDiverged {
            iterations: self.ctrl.max_iterations,
            last_update,
            residual,
        })
    }

    fn node_terms(&self) -> (f64, f64, Complex64, Complex64) {
        let h = self.grid.h();
        (
            self.params.beta / (2.0 * h * h),
            0.25 * self.params.alpha1,
            0.5 * self.params.gamma,
            I / self.grid.dtau,
        )
    }

    fn sweep_coupled(&mut self, old: &FieldState, it: &FieldState) -> Result<FieldState, PdeError> {
        let (r, a4, g2, idt) = self.node_terms();
        let m = self.grid.m;
        let n = self.grid.nodes();
        let mut mat = self.coupled.take().expect("coupled storage");
        mat.clear();
        let mut rhs = vec![ZERO; 2 * n];
        let one = Complex64::new(1.0, 0.0);
        for row in [0, 1, 2 * m, 2 * m + 1] {
            mat.add(row, row, one);
        }
        let (p0, f0, pk, fk) = (&old.psi, &old.phi, &it.psi, &it.phi);
        for i in 1..m {
            let old_dens = p0[i].norm_sqr() + f0[i].norm_sqr();
            let rp = 2 * i;
            let rf = 2 * i + 1;
            let sp = pk[i] + p0[i];
            let sf = fk[i] + f0[i];

            mat.add(rp, rp, idt + 2.0 * r - a4 * sp * pk[i].conj());
            mat.add(rp, rp - 2, Complex64::new(-r, 0.0));
            mat.add(rp, rp + 2, Complex64::new(-r, 0.0));
            mat.add(rp, rf, g2 - a4 * sp * fk[i].conj());
            rhs[rp] = idt * p0[i] + r * (p0[i - 1] - 2.0 * p0[i] + p0[i + 1]) + a4 * sp * old_dens
                - g2 * f0[i];

            mat.add(rf, rf, idt + 2.0 * r - a4 * sf * fk[i].conj());
            mat.add(rf, rf - 2, Complex64::new(-r, 0.0));
            mat.add(rf, rf + 2, Complex64::new(-r, 0.0));
            mat.add(rf, rp, g2 - a4 * sf * pk[i].conj());
            rhs[rf] = idt * f0[i] + r * (f0[i - 1] - 2.0 * f0[i] + f0[i + 1]) + a4 * sf * old_dens
                - g2 * p0[i];
        }
        let lu = mat.factor()?;
        let solved = lu.solve_in_place(&mut rhs);
        self.coupled = Some(lu.into_matrix());
        solved?;
        let (psi, phi) = rhs.chunks_exact(2).map(|c| (c[0], c[1])).unzip();
        Ok(FieldState {
            time: it.time,
            psi,
            phi,
        })
    }

    fn sweep_lagged(&mut self, old: &FieldState, it: &FieldState) -> Result<FieldState, PdeError> {
        let (r, a4, g2, idt) = self.node_terms();
        let m = self.grid.m;
        let mut psi_mat = self.psi_sys.take().expect("psi storage");
        let mut phi_mat = self.phi_sys.take().expect("phi storage");
        let psi = lagged_component(
            &mut psi_mat,
            r,
            a4,
            g2,
            idt,
            m,
            &old.psi,
            &old.phi,
            &it.psi,
            &it.phi,
        );
        let phi = lagged_component(
            &mut phi_mat,
            r,
            a4,
            g2,
            idt,
            m,
            &old.phi,
            &old.psi,
            &it.phi,
            &it.psi,
        );
        self.psi_sys = Some(psi_mat);
        self.phi_sys = Some(phi_mat);
        Ok(FieldState {
            time: it.time,
            psi: psi?,
            phi: phi?,
        })
    }
}

// Tridiagonal system for `own` with the other component lagged at iterate k.
#[allow(clippy::too_many_arguments)]
fn lagged_component(
    storage: &mut BandMatrix,
    r: f64,
    a4: f64,
    g2: Complex64,
    idt: Complex64,
    m: usize,
    own0: &[Complex64],
    other0: &[Complex64],
    own_k: &[Complex64],
    other_k: &[Complex64],
) -> Result<Vec<Complex64>, PdeError> {
    let mut mat = std::mem::replace(storage, BandMatrix::identity(1));
    mat.clear();
    let one = Complex64::new(1.0, 0.0);
    mat.add(0, 0, one);
    mat.add(m, m, one);
    let mut rhs = vec![ZERO; m + 1];
    for i in 1..m {
        let s = own_k[i] + own0[i];
        let old_dens = own0[i].norm_sqr() + other0[i].norm_sqr();
        mat.add(i, i, idt + 2.0 * r - a4 * s * own_k[i].conj());
        mat.add(i, i - 1, Complex64::new(-r, 0.0));
        mat.add(i, i + 1, Complex64::new(-r, 0.0));
        rhs[i] = idt * own0[i]
            + r * (own0[i - 1] - 2.0 * own0[i] + own0[i + 1])
            + a4 * s * (old_dens + other_k[i].norm_sqr())
            - g2 * (other_k[i] + other0[i]);
    }
    let lu = mat.factor()?;
    let solved = lu.solve_in_place(&mut rhs);
    *storage = lu.into_matrix();
    solved?;
    Ok(rhs)
}

/// One step without stored history (the iteration starts from `state`).
pub fn step(
    state: &FieldState,
    params: &ModelParams,
    grid: &Grid,
    ctrl: &IterationControl,
) -> Result<(FieldState, IterationReport), PdeError> {
    Stepper::new(*params, *grid, *ctrl)?.step(state)
}
