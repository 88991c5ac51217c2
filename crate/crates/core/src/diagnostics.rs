//! Conserved functionals, polarization angles, center tracking and
//! breathing-period estimation.

use num_complex::Complex64;
use thiserror::Error;

use crate::pde::{FieldState, Grid, ModelParams};

/// Moduli below this count as zero for polarization.
pub const POLARIZATION_FLOOR: f64 = 1e-10;
/// Default half-width of a tracking window.
pub const TRACK_HALF_WIDTH: f64 = 15.0;
/// Smallest windowed density mass that still counts as a soliton.
pub const TRACK_MASS_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("both component maxima below {POLARIZATION_FLOOR:e} in window [{lo}, {hi}]")]
    DegenerateWindow { lo: f64, hi: f64 },
    #[error("track {track} lost near x = {center} (windowed mass {mass:e})")]
    TrackLost {
        track: usize,
        center: f64,
        mass: f64,
    },
    #[error("series amplitude {amplitude:e} is below 1e-6 of its mean {mean:e}")]
    NoOscillation { amplitude: f64, mean: f64 },
    #[error("series has {crossings} mean crossings; at least 4 are needed")]
    SeriesTooShort { crossings: usize },
    #[error("series lengths differ ({0} times, {1} values)")]
    LengthMismatch(usize, usize),
    #[error("one or two tracks are supported, got {0}")]
    TrackCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantTriple {
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
}

impl InvariantTriple {
    /// Largest relative deviation of `self` from `reference`, componentwise.
    /// Components whose reference is below `floor` are compared absolutely.
    pub fn relative_drift(&self, reference: &InvariantTriple, floor: f64) -> InvariantTriple {
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(floor);
        InvariantTriple {
            mass: rel(self.mass, reference.mass),
            momentum: rel(self.momentum, reference.momentum),
            energy: rel(self.energy, reference.energy),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassBreakdown {
    pub total: f64,
    pub psi: f64,
    pub phi: f64,
}

fn trapezoid(values: impl ExactSizeIterator<Item = f64>, h: f64) -> f64 {
    let n = values.len();
    values
        .enumerate()
        .map(|(i, v)| if i == 0 || i + 1 == n { 0.5 * v } else { v })
        .sum::<f64>()
        * h
}

// Central differences inside, one-sided at the two ends.
fn derivative(v: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (v[1] - v[0]) / h
            } else if i == n - 1 {
                (v[n - 1] - v[n - 2]) / h
            } else {
                (v[i + 1] - v[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// `M = 1/(2 beta) * int (|psi|^2 + |phi|^2) dx` by the trapezoid rule,
/// with the same rule applied to each component.
pub fn mass(state: &FieldState, params: &ModelParams, grid: &Grid) -> MassBreakdown {
    let h = grid.h();
    let w = 0.5 / params.beta;
    let psi = w * trapezoid(state.psi.iter().map(|v| v.norm_sqr()), h);
    let phi = w * trapezoid(state.phi.iter().map(|v| v.norm_sqr()), h);
    MassBreakdown {
        total: psi + phi,
        psi,
        phi,
    }
}

/// `P = -int Im(psi conj(psi_x) + phi conj(phi_x)) dx`.
pub fn momentum(state: &FieldState, grid: &Grid) -> f64 {
    let h = grid.h();
    let dp = derivative(&state.psi, h);
    let df = derivative(&state.phi, h);
    let density =
        (0..state.len()).map(|i| (state.psi[i] * dp[i].conj() + state.phi[i] * df[i].conj()).im);
    -trapezoid(density, h)
}

/// `E = int [beta (|psi_x|^2 + |phi_x|^2) - alpha1/2 rho^2 - 2 Re(Gamma) Re(conj(psi) phi)] dx`.
pub fn energy(state: &FieldState, params: &ModelParams, grid: &Grid) -> f64 {
    let h = grid.h();
    let dp = derivative(&state.psi, h);
    let df = derivative(&state.phi, h);
    let g = params.gamma.re;
    let density = (0..state.len()).map(|i| {
        let (p, f) = (state.psi[i], state.phi[i]);
        let rho = p.norm_sqr() + f.norm_sqr();
        params.beta * (dp[i].norm_sqr() + df[i].norm_sqr())
            - 0.5 * params.alpha1 * rho * rho
            - 2.0 * g * (p.conj() * f).re
    });
    trapezoid(density, h)
}

/// Quadrature values of M, P and E.
pub fn invariants(state: &FieldState, params: &ModelParams, grid: &Grid) -> InvariantTriple {
    InvariantTriple {
        mass: mass(state, params, grid).total,
        momentum: momentum(state, grid),
        energy: energy(state, params, grid),
    }
}

/// The scheme's own conserved sums over the interior nodes, weighted by
/// `h` (and the mass by `1/(2 beta)`) so they approximate the integrals.
pub fn discrete_invariants(
    state: &FieldState,
    params: &ModelParams,
    grid: &Grid,
) -> InvariantTriple {
    let h = grid.h();
    let (p, f) = (&state.psi, &state.phi);
    let m = grid.m;
    let mut mass = 0.0;
    let mut momentum = 0.0;
    let mut energy = 0.0;
    let kin = -params.beta / (2.0 * h * h);
    for i in 1..m {
        let rho = p[i].norm_sqr() + f[i].norm_sqr();
        mass += rho;
        let dp = p[i + 1] - p[i];
        let df = f[i + 1] - f[i];
        momentum -= (p[i] * dp.conj() + f[i] * df.conj()).im;
        energy += kin * (dp.norm_sqr() + df.norm_sqr())
            + 0.25 * params.alpha1 * rho * rho
            + params.gamma.re * (f[i].conj() * p[i]).re;
    }
    InvariantTriple {
        mass: mass * h / (2.0 * params.beta),
        momentum,
        energy: energy * h,
    }
}

/// Closed interval of x used for windowed quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn around(center: f64, half_width: f64) -> Self {
        Self {
            lo: center - half_width,
            hi: center + half_width,
        }
    }

    pub fn whole(grid: &Grid) -> Self {
        Self {
            lo: -grid.l1,
            hi: grid.l2,
        }
    }

    fn nodes(&self, grid: &Grid) -> std::ops::RangeInclusive<usize> {
        let h = grid.h();
        let lo = ((self.lo + grid.l1) / h).ceil().max(0.0) as usize;
        let hi = (((self.hi + grid.l1) / h).floor().max(0.0) as usize).min(grid.m);
        lo..=hi
    }
}

/// `atan(max |phi| / max |psi|)` over the window, in radians.
pub fn polarization(
    state: &FieldState,
    grid: &Grid,
    window: Window,
) -> Result<f64, DiagnosticsError> {
    let mut mp = 0.0f64;
    let mut mf = 0.0f64;
    for i in window.nodes(grid) {
        mp = mp.max(state.psi[i].norm());
        mf = mf.max(state.phi[i].norm());
    }
    if mp < POLARIZATION_FLOOR && mf < POLARIZATION_FLOOR {
        return Err(DiagnosticsError::DegenerateWindow {
            lo: window.lo,
            hi: window.hi,
        });
    }
    Ok(mf.atan2(mp))
}

/// Polarization over the whole grid.
pub fn total_polarization(state: &FieldState, grid: &Grid) -> Result<f64, DiagnosticsError> {
    polarization(state, grid, Window::whole(grid))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolarizationRecord {
    /// Per track, `None` while its window is shared with the other track.
    pub individual: Vec<Option<f64>>,
    pub windows: Vec<Window>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRecord {
    pub time: f64,
    pub centers: Vec<f64>,
    pub windows: Vec<Window>,
    /// Least-squares speeds over the trailing fit interval; `None` until
    /// enough clean samples exist.
    pub speeds: Vec<Option<f64>>,
    /// Windows of the two tracks overlap.
    pub interacting: bool,
    /// No density dip separates the tracks; centers are extrapolated.
    pub merged: bool,
}

/// Follows one or two density centroids through a run.
#[derive(Debug, Clone)]
pub struct Tracker {
    half_width: f64,
    fit_span: f64,
    history: Vec<TrackRecord>,
    centers: Vec<f64>,
}

impl Tracker {
    pub fn new(initial: &[f64]) -> Result<Self, DiagnosticsError> {
        Self::with_half_width(initial, TRACK_HALF_WIDTH)
    }

    pub fn with_half_width(initial: &[f64], half_width: f64) -> Result<Self, DiagnosticsError> {
        if initial.is_empty() || initial.len() > 2 {
            return Err(DiagnosticsError::TrackCount(initial.len()));
        }
        Ok(Self {
            half_width,
            fit_span: 5.0,
            history: Vec::new(),
            centers: initial.to_vec(),
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn history(&self) -> &[TrackRecord] {
        &self.history
    }

    pub fn last(&self) -> Option<&TrackRecord> {
        self.history.last()
    }

    /// Locates the centers in `state` and appends a record.
    pub fn update(
        &mut self,
        state: &FieldState,
        grid: &Grid,
    ) -> Result<&TrackRecord, DiagnosticsError> {
        let rho: Vec<f64> = state
            .psi
            .iter()
            .zip(&state.phi)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect();
        let w = self.half_width;
        let mut windows: Vec<Window> = self.centers.iter().map(|&c| Window::around(c, w)).collect();
        let mut interacting = false;
        let mut merged = false;

        if self.centers.len() == 2 {
            let (lo, hi) = if self.centers[0] <= self.centers[1] {
                (0, 1)
            } else {
                (1, 0)
            };
            let (a, b) = (self.centers[lo], self.centers[hi]);
            if b - a < 2.0 * w {
                interacting = true;
                match density_dip(&rho, grid, a, b, w) {
                    Some(x_dip) => {
                        windows[lo].hi = windows[lo].hi.min(x_dip);
                        windows[hi].lo = windows[hi].lo.max(x_dip);
                    }
                    None => merged = true,
                }
            }
        }

        let mut centers = self.centers.clone();
        if merged {
            let dt = self
                .history
                .last()
                .map(|r| state.time - r.time)
                .unwrap_or(0.0);
            let speeds = self.history.last().map(|r| r.speeds.clone());
            for (k, c) in centers.iter_mut().enumerate() {
                let v = speeds.as_ref().and_then(|s| s[k]).unwrap_or(0.0);
                *c = (*c + v * dt).clamp(-grid.l1, grid.l2);
            }
            let joint = Window {
                lo: windows[0].lo.min(windows[1].lo),
                hi: windows[0].hi.max(windows[1].hi),
            };
            let (mass, _) = centroid(&rho, grid, joint);
            if mass < TRACK_MASS_FLOOR {
                return Err(DiagnosticsError::TrackLost {
                    track: 0,
                    center: centers[0],
                    mass,
                });
            }
        } else {
            for (k, win) in windows.iter().enumerate() {
                let (mass, x) = centroid(&rho, grid, *win);
                if mass < TRACK_MASS_FLOOR {
                    return Err(DiagnosticsError::TrackLost {
                        track: k,
                        center: centers[k],
                        mass,
                    });
                }
                centers[k] = x;
            }
        }
        self.centers = centers.clone();

        let mut record = TrackRecord {
            time: state.time,
            centers,
            windows,
            speeds: vec![None; self.centers.len()],
            interacting,
            merged,
        };
        record.speeds = (0..self.centers.len())
            .map(|k| self.trailing_speed(k, &record))
            .collect();
        self.history.push(record);
        Ok(self.history.last().expect("just pushed"))
    }

    fn trailing_speed(&self, k: usize, current: &TrackRecord) -> Option<f64> {
        if current.merged {
            return self.history.last().and_then(|r| r.speeds[k]);
        }
        let t0 = current.time - self.fit_span;
        let samples: Vec<(f64, f64)> = self
            .history
            .iter()
            .rev()
            .take_while(|r| r.time >= t0 && !r.merged)
            .map(|r| (r.time, r.centers[k]))
            .chain(std::iter::once((current.time, current.centers[k])))
            .collect();
        linear_fit(&samples).map(|(slope, _)| slope)
    }

    /// Speeds fitted over the clean samples before the first and after the
    /// last interacting record (two-track runs only).
    pub fn collision_speeds(&self) -> Option<CollisionSpeeds> {
        let first = self.history.iter().position(|r| r.interacting)?;
        let last = self.history.iter().rposition(|r| r.interacting)?;
        let n = self.history.first()?.centers.len();
        let before = &self.history[..first];
        let after = &self.history[last + 1..];
        let fit = |rs: &[TrackRecord], k: usize| {
            let s: Vec<(f64, f64)> = rs.iter().map(|r| (r.time, r.centers[k])).collect();
            linear_fit(&s).map(|(v, _)| v)
        };
        Some(CollisionSpeeds {
            before: (0..n).map(|k| fit(before, k)).collect(),
            after: (0..n).map(|k| fit(after, k)).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionSpeeds {
    pub before: Vec<Option<f64>>,
    pub after: Vec<Option<f64>>,
}

// Position of the density minimum between two peaks, if it is at most half
// the smaller of the two peak densities.
fn density_dip(rho: &[f64], grid: &Grid, a: f64, b: f64, w: f64) -> Option<f64> {
    let ia = grid.nearest_node(a);
    let ib = grid.nearest_node(b);
    if ib <= ia + 1 {
        return None;
    }
    let (imin, rmin) = (ia..=ib)
        .map(|i| (i, rho[i]))
        .min_by(|x, y| x.1.total_cmp(&y.1))?;
    let peak = |r: std::ops::RangeInclusive<usize>| r.map(|i| rho[i]).fold(0.0f64, f64::max);
    let lo = grid.nearest_node(a - w);
    let hi = grid.nearest_node(b + w);
    let pa = peak(lo..=imin);
    let pb = peak(imin..=hi);
    if rmin <= 0.5 * pa.min(pb) && imin > ia && imin < ib {
        Some(grid.x(imin))
    } else {
        None
    }
}

// (h-weighted mass, centroid) of the density over the window.
fn centroid(rho: &[f64], grid: &Grid, win: Window) -> (f64, f64) {
    let mut m = 0.0;
    let mut mx = 0.0;
    for i in win.nodes(grid) {
        m += rho[i];
        mx += rho[i] * grid.x(i);
    }
    let h = grid.h();
    (m * h, if m > 0.0 { mx / m } else { f64::NAN })
}

/// Least-squares line through `(t, y)` samples: `(slope, intercept)`.
pub fn linear_fit(samples: &[(f64, f64)]) -> Option<(f64, f64)> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let mt = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let my = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let stt: f64 = samples.iter().map(|s| (s.0 - mt).powi(2)).sum();
    if stt == 0.0 {
        return None;
    }
    let sty: f64 = samples.iter().map(|s| (s.0 - mt) * (s.1 - my)).sum();
    let slope = sty / stt;
    Some((slope, my - slope * mt))
}

/// Windowed polarization for each track plus the whole-domain angle.
pub fn polarization_record(
    state: &FieldState,
    grid: &Grid,
    tracks: &TrackRecord,
) -> Result<PolarizationRecord, DiagnosticsError> {
    let individual = tracks
        .windows
        .iter()
        .map(|w| {
            if tracks.interacting {
                Ok(None)
            } else {
                polarization(state, grid, *w).map(Some)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PolarizationRecord {
        individual,
        windows: tracks.windows.clone(),
        total: total_polarization(state, grid)?,
    })
}

/// Oscillation period of a sampled series from the crossings of its mean.
/// Consecutive crossings are half a period apart.
pub fn breathing_period(times: &[f64], values: &[f64]) -> Result<f64, DiagnosticsError> {
    if times.len() != values.len() {
        return Err(DiagnosticsError::LengthMismatch(times.len(), values.len()));
    }
    if values.is_empty() {
        return Err(DiagnosticsError::SeriesTooShort { crossings: 0 });
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let amplitude = 0.5 * (hi - lo);
    if !(amplitude >= 1e-6 * mean.abs()) || amplitude == 0.0 {
        return Err(DiagnosticsError::NoOscillation { amplitude, mean });
    }
    let mut crossings = Vec::new();
    for k in 1..values.len() {
        let (a, b) = (values[k - 1] - mean, values[k] - mean);
        if (a < 0.0 && b >= 0.0) || (a > 0.0 && b <= 0.0) {
            let s = a / (a - b);
            crossings.push(times[k - 1] + s * (times[k] - times[k - 1]));
        }
    }
    if crossings.len() < 4 {
        return Err(DiagnosticsError::SeriesTooShort {
            crossings: crossings.len(),
        });
    }
    let span = crossings[crossings.len() - 1] - crossings[0];
    Ok(2.0 * span / (crossings.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{circular_envelope, EnvelopeGrid, EnvelopeParams};
    use crate::pde::{assemble_soliton, superpose, SolitonSpec};

    fn grid() -> Grid {
        Grid::with_spacing(60.0, 60.0, 0.05, 0.01).unwrap()
    }

    fn params() -> ModelParams {
        ModelParams::new(1.0, 0.75, Complex64::new(0.175, 0.0)).unwrap()
    }

    fn soliton(x0: f64, c: f64, delta: f64) -> FieldState {
        let env = circular_envelope(
            &EnvelopeParams::circular(-1.5, c, 0.75),
            EnvelopeGrid::new(30.0, 0.05).unwrap(),
        )
        .unwrap();
        let spec = SolitonSpec {
            x0,
            c,
            n_psi: -1.5,
            n_phi: -1.5,
            delta_psi: delta,
            delta_phi: delta,
        };
        assemble_soliton(&env, &spec, &grid()).unwrap()
    }

    #[test]
    fn zero_field() {
        let g = grid();
        let z = FieldState::zeros(&g);
        let p = params();
        assert_eq!(mass(&z, &p, &g).total, 0.0);
        assert_eq!(momentum(&z, &g), 0.0);
        assert_eq!(energy(&z, &p, &g), 0.0);
        let d = discrete_invariants(&z, &p, &g);
        assert_eq!((d.mass, d.momentum, d.energy), (0.0, 0.0, 0.0));
        assert!(matches!(
            total_polarization(&z, &g),
            Err(DiagnosticsError::DegenerateWindow { .. })
        ));
    }

    #[test]
    fn head_on_pair_mass() {
        let g = grid();
        let pair = superpose(&[soliton(-40.0, 1.0, 0.0), soliton(40.0, -1.0, 0.0)]).unwrap();
        let m = mass(&pair, &params(), &g);
        let b = 1.25f64.sqrt();
        let exact = 8.0 * b / (2.0 * 0.75);
        assert!((m.total - exact).abs() / exact < 1e-6, "{}", m.total);
        assert_eq!(m.total, m.psi + m.phi);
        let single = mass(&soliton(-40.0, 1.0, 0.0), &params(), &g).total
            + mass(&soliton(40.0, -1.0, 0.0), &params(), &g).total;
        assert!((m.total - single).abs() / single < 1e-8);
        let d = discrete_invariants(&pair, &params(), &g);
        assert!((d.mass - m.total).abs() < 1e-8);
    }

    #[test]
    fn momentum_of_real_and_moving_fields() {
        let g = grid();
        assert!(momentum(&soliton(0.0, 0.0, 0.0), &g).abs() < 1e-14);
        // carrier exp(-i c x / 2) gives P = -(c/2) int rho = -c M
        let s = soliton(0.0, 1.0, 0.3);
        let m = mass(&s, &params(), &g).total;
        assert!((momentum(&s, &g) + m).abs() < 1e-3 * m);
        let d = discrete_invariants(&s, &params(), &g);
        assert!((d.momentum - momentum(&s, &g)).abs() < 1e-2 * m);
        let pair = superpose(&[soliton(-40.0, 1.0, 0.0), soliton(40.0, -1.0, 0.0)]).unwrap();
        assert!(momentum(&pair, &g).abs() < 1e-10);
    }

    #[test]
    fn polarization_cases() {
        let g = grid();
        let s = soliton(0.0, 1.0, 0.0);
        let circ = total_polarization(&s, &g).unwrap();
        assert!((circ - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        let lin = FieldState {
            phi: vec![Complex64::new(0.0, 0.0); s.len()],
            ..s.clone()
        };
        assert_eq!(total_polarization(&lin, &g).unwrap(), 0.0);
        let swapped = FieldState {
            psi: lin.phi.clone(),
            phi: lin.psi.clone(),
            time: 0.0,
        };
        assert!(
            (total_polarization(&swapped, &g).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15
        );
    }

    #[test]
    fn tracker_standing_soliton() {
        let g = grid();
        let mut t = Tracker::new(&[0.3]).unwrap();
        let rec = t.update(&soliton(0.0, 0.0, 0.0), &g).unwrap();
        assert!(rec.centers[0].abs() < g.h());
        assert!(Tracker::new(&[]).is_err());
    }

    #[test]
    fn tracker_loses_empty_window() {
        let g = grid();
        let mut t = Tracker::new(&[-40.0]).unwrap();
        assert!(matches!(
            t.update(&soliton(40.0, 0.0, 0.0), &g),
            Err(DiagnosticsError::TrackLost { .. })
        ));
    }

    #[test]
    fn tracker_splits_close_pair() {
        let g = grid();
        let pair = superpose(&[soliton(-12.0, 0.0, 0.0), soliton(12.0, 0.0, 0.0)]).unwrap();
        let mut t = Tracker::new(&[-11.0, 11.0]).unwrap();
        let rec = t.update(&pair, &g).unwrap();
        assert!(rec.interacting && !rec.merged);
        assert!((rec.centers[0] + 12.0).abs() < 1e-6);
        assert!((rec.centers[1] - 12.0).abs() < 1e-6);
    }

    #[test]
    fn linear_fit_exact_line() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
        let (a, b) = linear_fit(&s).unwrap();
        assert!((a + 0.5).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
        assert!(linear_fit(&s[..1]).is_none());
    }

    #[test]
    fn period_of_cos_squared() {
        let gamma: f64 = 0.175;
        let t: Vec<f64> = (0..6000).map(|i| i as f64 * 0.01).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (gamma * t).cos().powi(2)).collect();
        let p = breathing_period(&t, &v).unwrap();
        assert!((p - std::f64::consts::PI / gamma).abs() < 1e-3, "{p}");
        let flat = vec![2.0; t.len()];
        assert!(matches!(
            breathing_period(&t, &flat),
            Err(DiagnosticsError::NoOscillation { .. })
        ));
        assert!(matches!(
            breathing_period(&t[..500], &v[..500]),
            Err(DiagnosticsError::SeriesTooShort { .. })
        ));
    }
}
