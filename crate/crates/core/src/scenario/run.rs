use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{Polarization, ScenarioConfig, SolitonConfig};
use super::ScenarioError;
use crate::diagnostics::{
    breathing_period, discrete_invariants, invariants, mass, polarization_record, InvariantTriple,
    MassBreakdown, TrackRecord, Tracker,
};
use crate::envelope::{
    bound_state_envelope, circular_envelope, circular_profile, single_component_envelope,
    single_component_profile, solve_conjugate_bvp, BoundStateProfile, Component, EnvelopeGrid,
    EnvelopePair, NewtonControl,
};
use crate::fmt_num;
use crate::pde::{assemble_soliton, superpose, FieldState, Grid, Stepper};

/// Envelope of one soliton on the simulation spacing: closed-form guess
/// refined by Newton's method on the discrete conjugate system.
pub fn build_envelope(
    cfg: &ScenarioConfig,
    s: &SolitonConfig,
    h: f64,
) -> Result<EnvelopePair, ScenarioError> {
    let params = s.envelope_params(cfg.model.alpha1);
    let grid = EnvelopeGrid::new(cfg.envelope_half_width, h)?;
    let guess = match s.polarization {
        Polarization::Auto if params.n_psi == params.n_phi => circular_envelope(&params, grid)?,
        Polarization::Auto => bound_state_envelope(&params, grid)?,
        Polarization::LinearPsi => single_component_envelope(&params, Component::Psi, grid)?,
        Polarization::LinearPhi => single_component_envelope(&params, Component::Phi, grid)?,
    };
    let (pair, _) = solve_conjugate_bvp(&params, grid, &guess, &NewtonControl::default())?;
    Ok(pair)
}

pub type Profile = Box<dyn Fn(f64) -> (f64, f64) + Send + Sync>;

/// Closed-form envelope of one soliton as a function of the distance from
/// its center.
pub fn profile_fn(cfg: &ScenarioConfig, s: &SolitonConfig) -> Result<Profile, ScenarioError> {
    let params = s.envelope_params(cfg.model.alpha1);
    Ok(match s.polarization {
        Polarization::Auto if params.n_psi == params.n_phi => {
            let p = circular_profile(&params)?;
            Box::new(move |x| (p.eval(x), p.eval(x)))
        }
        Polarization::Auto => {
            let p = BoundStateProfile::new(&params)?;
            Box::new(move |x| p.eval_components(x))
        }
        Polarization::LinearPsi => {
            let p = single_component_profile(&params, Component::Psi)?;
            Box::new(move |x| (p.eval(x), 0.0))
        }
        Polarization::LinearPhi => {
            let p = single_component_profile(&params, Component::Phi)?;
            Box::new(move |x| (0.0, p.eval(x)))
        }
    })
}

/// Superposition of the configured solitons at `t = 0`.
pub fn initial_state(cfg: &ScenarioConfig) -> Result<FieldState, ScenarioError> {
    let h = cfg.grid.h();
    let parts = cfg
        .solitons
        .iter()
        .map(|s| {
            let env = build_envelope(cfg, s, h)?;
            assemble_soliton(&env, &s.spec, &cfg.grid).map_err(ScenarioError::Setup)
        })
        .collect::<Result<Vec<_>, _>>()?;
    superpose(&parts).map_err(ScenarioError::Setup)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: f64,
    pub mass: MassBreakdown,
    pub momentum: f64,
    pub energy: f64,
    pub discrete: InvariantTriple,
    /// Individual angles (radians), left track first.
    pub theta: Vec<Option<f64>>,
    pub theta_total: f64,
    pub centers: Vec<f64>,
    /// Inner iterations of the step that produced this row.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub steps: usize,
    pub elapsed_seconds: f64,
    pub initial: InvariantTriple,
    pub final_: InvariantTriple,
    pub discrete_initial: InvariantTriple,
    pub discrete_final: InvariantTriple,
    /// Largest relative deviation of the discrete invariants from their
    /// initial values over all steps (denominator `max(|I0|, M0)`).
    pub max_drift: InvariantTriple,
    /// False when `Im(gamma) != 0`.
    pub conservative: bool,
    pub momentum_range: (f64, f64),
    pub breathing_period: Option<f64>,
    pub polarization_periods: Vec<Option<f64>>,
    pub speeds_before: Vec<Option<f64>>,
    pub speeds_after: Vec<Option<f64>>,
    pub theta_total_range: (f64, f64),
    pub theta_ranges: Vec<Option<(f64, f64)>>,
    pub iterations_median: usize,
    pub iterations_max: usize,
    pub iterations_mean: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub config: ScenarioConfig,
    pub initial_state: FieldState,
    pub final_state: FieldState,
    pub series: Vec<SeriesRow>,
    pub snapshots: Vec<FieldState>,
    pub tracks: Vec<TrackRecord>,
    /// Inner iterations of every step.
    pub iterations: Vec<usize>,
    pub summary: Summary,
    pub output_dir: Option<PathBuf>,
}

fn record(
    cfg: &ScenarioConfig,
    state: &FieldState,
    tracker: &mut Tracker,
    iterations: usize,
) -> Result<SeriesRow, ScenarioError> {
    let grid = &cfg.grid;
    let inv = invariants(state, &cfg.model, grid);
    let tracks = tracker.update(state, grid)?.clone();
    let pol = polarization_record(state, grid, &tracks)?;
    Ok(SeriesRow {
        t: state.time,
        mass: mass(state, &cfg.model, grid),
        momentum: inv.momentum,
        energy: inv.energy,
        discrete: discrete_invariants(state, &cfg.model, grid),
        theta: pol.individual,
        theta_total: pol.total,
        centers: tracks.centers,
        iterations,
    })
}

/// Runs the full pipeline. Files are written when `output.dir` is set.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunArtifacts, ScenarioError> {
    cfg.validate()?;
    let started = Instant::now();
    let grid = cfg.grid;
    let conservative = !cfg.model.has_gain();
    if !conservative {
        eprintln!("warning: Im(gamma) != 0, invariants are not conserved; drift checks disabled");
    }
    let initial = initial_state(cfg)?;

    // tracks are ordered by initial position
    let mut order: Vec<usize> = (0..cfg.solitons.len()).collect();
    order.sort_by(|&a, &b| cfg.solitons[a].spec.x0.total_cmp(&cfg.solitons[b].spec.x0));
    let seeds: Vec<f64> = order.iter().map(|&k| cfg.solitons[k].spec.x0).collect();
    let mut tracker = Tracker::with_half_width(&seeds, cfg.track_half_width)?;

    let steps = cfg.steps();
    let mut snapshot_steps: Vec<usize> = cfg
        .output
        .snapshot_times
        .iter()
        .map(|t| (t / grid.dtau).round() as usize)
        .collect();
    snapshot_steps.sort_unstable();
    let mut snapshots = Vec::new();
    let mut next_snapshot = 0;
    let mut take_snapshots = |n: usize, state: &FieldState, out: &mut Vec<FieldState>| {
        while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot] == n {
            out.push(state.clone());
            next_snapshot += 1;
        }
    };

    let mut stepper = Stepper::new(cfg.model, grid, cfg.iteration).map_err(ScenarioError::Setup)?;
    let d0 = discrete_invariants(&initial, &cfg.model, &grid);
    let floor = d0.mass;
    let mut max_drift = InvariantTriple {
        mass: 0.0,
        momentum: 0.0,
        energy: 0.0,
    };
    let mut series = vec![record(cfg, &initial, &mut tracker, 0)?];
    take_snapshots(0, &initial, &mut snapshots);
    let mut iterations = Vec::with_capacity(steps);
    let mut state = initial.clone();
    for n in 1..=steps {
        let (mut next, report) = stepper.step(&state).map_err(|source| ScenarioError::Pde {
            time: state.time,
            source,
        })?;
        debug_assert!(report.residual <= cfg.iteration.residual_tol);
        next.time = n as f64 * grid.dtau;
        iterations.push(report.iterations);
        state = next;
        let d = discrete_invariants(&state, &cfg.model, &grid).relative_drift(&d0, floor);
        max_drift.mass = max_drift.mass.max(d.mass);
        max_drift.momentum = max_drift.momentum.max(d.momentum);
        max_drift.energy = max_drift.energy.max(d.energy);
        if n % cfg.output.series_every == 0 || n == steps {
            series.push(record(cfg, &state, &mut tracker, report.iterations)?);
        }
        take_snapshots(n, &state, &mut snapshots);
    }

    let summary = summarize(
        cfg,
        &series,
        &tracker,
        &iterations,
        max_drift,
        conservative,
        steps,
        started,
    );
    let mut out = RunArtifacts {
        config: cfg.clone(),
        initial_state: initial,
        final_state: state,
        series,
        snapshots,
        tracks: tracker.history().to_vec(),
        iterations,
        summary,
        output_dir: cfg.output.dir.clone(),
    };
    if let Some(dir) = &cfg.output.dir {
        write_outputs(dir, &mut out)?;
    }
    Ok(out)
}

fn range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    values.fold(None, |acc, v| match acc {
        None => Some((v, v)),
        Some((a, b)) => Some((a.min(v), b.max(v))),
    })
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    cfg: &ScenarioConfig,
    series: &[SeriesRow],
    tracker: &Tracker,
    iterations: &[usize],
    max_drift: InvariantTriple,
    conservative: bool,
    steps: usize,
    started: Instant,
) -> Summary {
    let first = &series[0];
    let last = &series[series.len() - 1];
    let triple = |r: &SeriesRow| InvariantTriple {
        mass: r.mass.total,
        momentum: r.momentum,
        energy: r.energy,
    };
    let times: Vec<f64> = series.iter().map(|r| r.t).collect();
    let m_psi: Vec<f64> = series.iter().map(|r| r.mass.psi).collect();
    let tracks = cfg.solitons.len();
    let polarization_periods = (0..tracks)
        .map(|k| {
            let (t, v): (Vec<f64>, Vec<f64>) = series
                .iter()
                .filter_map(|r| r.theta[k].map(|a| (r.t, a)))
                .unzip();
            breathing_period(&t, &v).ok()
        })
        .collect();
    let (speeds_before, speeds_after) = match tracker.collision_speeds() {
        Some(s) => (s.before, s.after),
        None => {
            let v = tracker.last().map(|r| r.speeds.clone()).unwrap_or_default();
            (v.clone(), v)
        }
    };
    let mut sorted = iterations.to_vec();
    sorted.sort_unstable();
    Summary {
        steps,
        elapsed_seconds: started.elapsed().as_secs_f64(),
        initial: triple(first),
        final_: triple(last),
        discrete_initial: first.discrete,
        discrete_final: last.discrete,
        max_drift,
        conservative,
        momentum_range: range(series.iter().map(|r| r.momentum)).unwrap_or((0.0, 0.0)),
        breathing_period: breathing_period(&times, &m_psi).ok(),
        polarization_periods,
        speeds_before,
        speeds_after,
        theta_total_range: range(series.iter().map(|r| r.theta_total)).unwrap_or((0.0, 0.0)),
        theta_ranges: (0..tracks)
            .map(|k| range(series.iter().filter_map(|r| r.theta[k])))
            .collect(),
        iterations_median: sorted.get(sorted.len() / 2).copied().unwrap_or(0),
        iterations_max: sorted.last().copied().unwrap_or(0),
        iterations_mean: if sorted.is_empty() {
            0.0
        } else {
            sorted.iter().sum::<usize>() as f64 / sorted.len() as f64
        },
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| "nan".to_string())
}

fn write_series(path: &Path, series: &[SeriesRow]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "t,M,M_psi,M_phi,P,E,theta_l,theta_r,theta_total,x_l,x_r,M_disc,P_disc,E_disc,iterations"
    )?;
    for r in series {
        let theta = |k: usize| opt(r.theta.get(k).copied().flatten());
        let center = |k: usize| opt(r.centers.get(k).copied());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_num(r.t),
            fmt_num(r.mass.total),
            fmt_num(r.mass.psi),
            fmt_num(r.mass.phi),
            fmt_num(r.momentum),
            fmt_num(r.energy),
            theta(0),
            theta(1),
            fmt_num(r.theta_total),
            center(0),
            center(1),
            fmt_num(r.discrete.mass),
            fmt_num(r.discrete.momentum),
            fmt_num(r.discrete.energy),
            r.iterations
        )?;
    }
    w.flush()
}

/// Writes `x, Re psi, Im psi, |psi|, Re phi, Im phi, |phi|` rows.
pub fn write_snapshot<W: Write>(mut w: W, state: &FieldState, grid: &Grid) -> std::io::Result<()> {
    writeln!(w, "x,re_psi,im_psi,abs_psi,re_phi,im_phi,abs_phi")?;
    for i in 0..state.len() {
        let (p, f) = (state.psi[i], state.phi[i]);
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_num(grid.x(i)),
            fmt_num(p.re),
            fmt_num(p.im),
            fmt_num(p.norm()),
            fmt_num(f.re),
            fmt_num(f.im),
            fmt_num(f.norm())
        )?;
    }
    Ok(())
}

fn write_summary(path: &Path, s: &Summary) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "steps = {}", s.steps)?;
    writeln!(w, "elapsed_seconds = {:.3}", s.elapsed_seconds)?;
    for (name, t) in [
        ("initial", &s.initial),
        ("final", &s.final_),
        ("discrete_initial", &s.discrete_initial),
        ("discrete_final", &s.discrete_final),
        ("max_relative_drift", &s.max_drift),
    ] {
        writeln!(w, "{name}.mass = {}", fmt_num(t.mass))?;
        writeln!(w, "{name}.momentum = {}", fmt_num(t.momentum))?;
        writeln!(w, "{name}.energy = {}", fmt_num(t.energy))?;
    }
    writeln!(w, "conservative = {}", s.conservative)?;
    writeln!(w, "momentum_min = {}", fmt_num(s.momentum_range.0))?;
    writeln!(w, "momentum_max = {}", fmt_num(s.momentum_range.1))?;
    writeln!(w, "breathing_period = {}", opt(s.breathing_period))?;
    for (k, p) in s.polarization_periods.iter().enumerate() {
        writeln!(w, "polarization_period{k} = {}", opt(*p))?;
    }
    for (k, v) in s.speeds_before.iter().enumerate() {
        writeln!(w, "speed_before{k} = {}", opt(*v))?;
    }
    for (k, v) in s.speeds_after.iter().enumerate() {
        writeln!(w, "speed_after{k} = {}", opt(*v))?;
    }
    writeln!(w, "theta_total_min = {}", fmt_num(s.theta_total_range.0))?;
    writeln!(w, "theta_total_max = {}", fmt_num(s.theta_total_range.1))?;
    for (k, r) in s.theta_ranges.iter().enumerate() {
        writeln!(w, "theta{k}_min = {}", opt(r.map(|r| r.0)))?;
        writeln!(w, "theta{k}_max = {}", opt(r.map(|r| r.1)))?;
    }
    writeln!(w, "iterations_median = {}", s.iterations_median)?;
    writeln!(w, "iterations_max = {}", s.iterations_max)?;
    writeln!(w, "iterations_mean = {:.3}", s.iterations_mean)?;
    w.flush()
}

fn write_outputs(dir: &Path, run: &mut RunArtifacts) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir)?;
    write_series(&dir.join("series.csv"), &run.series)?;
    for s in &run.snapshots {
        let path = dir.join(format!("snapshot_t{:08.3}.csv", s.time));
        let mut w = BufWriter::new(File::create(path)?);
        write_snapshot(&mut w, s, &run.config.grid)?;
        w.flush()?;
    }
    write_summary(&dir.join("summary.txt"), &run.summary)?;
    fs::write(dir.join("manifest.txt"), run.config.manifest())?;
    run.output_dir = Some(dir.to_path_buf());
    Ok(())
}
