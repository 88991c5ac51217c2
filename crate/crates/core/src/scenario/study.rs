use rayon::prelude::*;

use super::config::ScenarioConfig;
use super::run::{profile_fn, run_scenario};
use super::ScenarioError;
use crate::diagnostics::InvariantTriple;
use crate::exact::coupled_traveling;
use crate::pde::{FieldState, Grid, Stepper};

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementRow {
    pub h: f64,
    pub dtau: f64,
    pub steps: usize,
    /// Max-norm error over both components at `t_final`.
    pub error: f64,
    /// `log2` of the error ratio to the previous (coarser) level.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementTable {
    pub oracle: &'static str,
    pub rows: Vec<RefinementRow>,
}

impl RefinementTable {
    /// Observed order between the two finest levels.
    pub fn finest_order(&self) -> Option<f64> {
        self.rows.last().and_then(|r| r.order)
    }

    pub fn min_order(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.order).reduce(f64::min)
    }
}

/// Simultaneous halving of `h` and `dtau`, starting from the config grid,
/// with errors against the exact single-soliton solution (translated wave
/// for `gamma = 0`, its coupled transform otherwise).
pub fn run_refinement_study(
    cfg: &ScenarioConfig,
    levels: usize,
) -> Result<RefinementTable, ScenarioError> {
    cfg.validate()?;
    if levels < 3 {
        return Err(ScenarioError::ConfigInvalid {
            field: "levels".into(),
            message: format!("at least 3 levels required, got {levels}"),
        });
    }
    if cfg.solitons.len() != 1 {
        return Err(ScenarioError::OracleUnavailable(format!(
            "{} solitons interact; only single-soliton runs have a closed form",
            cfg.solitons.len()
        )));
    }
    if cfg.model.has_gain() {
        return Err(ScenarioError::OracleUnavailable("complex gamma".into()));
    }
    let soliton = &cfg.solitons[0];
    let profile = profile_fn(cfg, soliton)?;
    let gamma = cfg.model.gamma;
    let oracle = if gamma.re == 0.0 {
        "translated soliton"
    } else {
        "coupled transform"
    };

    let mut rows: Vec<RefinementRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let scale = 0.5f64.powi(level as i32);
        let g = cfg.grid;
        let grid = Grid::with_spacing(g.l1, g.l2, g.h() * scale, g.dtau * scale)
            .map_err(ScenarioError::Setup)?;
        let steps = (cfg.t_final / grid.dtau).round() as usize;
        let t_final = steps as f64 * grid.dtau;

        let mut state = coupled_traveling(&profile, &soliton.spec, &grid, 0.0, gamma);
        zero_ends(&mut state);
        let mut stepper =
            Stepper::new(cfg.model, grid, cfg.iteration).map_err(ScenarioError::Setup)?;
        for _ in 0..steps {
            let (next, _) = stepper.step(&state).map_err(|source| ScenarioError::Pde {
                time: state.time,
                source,
            })?;
            state = next;
        }
        let exact = coupled_traveling(&profile, &soliton.spec, &grid, t_final, gamma);
        let error = state.max_distance(&exact);
        let order = rows.last().map(|prev| (prev.error / error).log2());
        rows.push(RefinementRow {
            h: grid.h(),
            dtau: grid.dtau,
            steps,
            error,
            order,
        });
    }
    Ok(RefinementTable { oracle, rows })
}

fn zero_ends(state: &mut FieldState) {
    let n = state.len();
    for v in [&mut state.psi, &mut state.phi] {
        v[0] = 0.0.into();
        v[n - 1] = 0.0.into();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    pub energy: f64,
    pub discrete: InvariantTriple,
    pub mass: f64,
    pub momentum_min: f64,
    pub momentum_max: f64,
    pub max_abs_momentum: f64,
    /// Spread (max - min) of the total polarization angle, radians.
    pub polarization_amplitude: f64,
    pub max_drift: InvariantTriple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub phase_difference_deg: f64,
    pub outcome: Result<SweepEntry, String>,
}

/// One independent run per phase difference (degrees), in parallel. Rows
/// follow the order of `phases`; a failed run is reported in its row.
/// With an output directory each run writes to `phase_<deg>/` under it.
pub fn run_phase_sweep(cfg: &ScenarioConfig, phases: &[f64]) -> Vec<SweepRow> {
    phases
        .par_iter()
        .map(|&deg| {
            let outcome = cfg
                .clone()
                .with_phase_difference(deg)
                .and_then(|mut c| {
                    c.output.dir = cfg
                        .output
                        .dir
                        .as_ref()
                        .map(|d| d.join(format!("phase_{deg}")));
                    run_scenario(&c)
                })
                .map(|run| {
                    let s = &run.summary;
                    SweepEntry {
                        energy: s.initial.energy,
                        discrete: s.discrete_initial,
                        mass: s.initial.mass,
                        momentum_min: s.momentum_range.0,
                        momentum_max: s.momentum_range.1,
                        max_abs_momentum: s.momentum_range.0.abs().max(s.momentum_range.1.abs()),
                        polarization_amplitude: s.theta_total_range.1 - s.theta_total_range.0,
                        max_drift: s.max_drift,
                    }
                })
                .map_err(|e| e.to_string());
            SweepRow {
                phase_difference_deg: deg,
                outcome,
            }
        })
        .collect()
}
