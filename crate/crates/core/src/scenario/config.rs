use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::Deserialize;

use super::ScenarioError;
use crate::envelope::EnvelopeParams;
use crate::pde::{CouplingMode, Grid, IterationControl, ModelParams, SolitonSpec};

pub const PRESETS: [&str; 5] = [
    "circular_headon",
    "elliptic_headon",
    "elliptic_takeover",
    "free_soliton",
    "breathing_soliton",
];

/// Which envelope branch of the conjugate system seeds a soliton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    /// Circular when the two frequencies agree, the two-frequency bound
    /// state otherwise.
    #[default]
    Auto,
    /// Only `psi` is nonzero.
    LinearPsi,
    /// Only `phi` is nonzero.
    LinearPhi,
}

impl Polarization {
    fn name(self) -> &'static str {
        match self {
            Polarization::Auto => "auto",
            Polarization::LinearPsi => "linear_psi",
            Polarization::LinearPhi => "linear_phi",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolitonConfig {
    pub spec: SolitonSpec,
    pub polarization: Polarization,
}

impl SolitonConfig {
    pub fn envelope_params(&self, alpha1: f64) -> EnvelopeParams {
        EnvelopeParams {
            n_psi: self.spec.n_psi,
            n_phi: self.spec.n_phi,
            c: self.spec.c,
            alpha1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub snapshot_times: Vec<f64>,
    /// Write a series row every this many steps.
    pub series_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub model: ModelParams,
    pub grid: Grid,
    pub t_final: f64,
    pub solitons: Vec<SolitonConfig>,
    /// Half-width of the interval on which envelopes are generated.
    pub envelope_half_width: f64,
    pub iteration: IterationControl,
    pub track_half_width: f64,
    pub output: OutputConfig,
}

// On-disk layout; every field optional so presets can be overridden.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    name: Option<String>,
    beta: Option<f64>,
    alpha1: Option<f64>,
    gamma: Option<f64>,
    gamma_im: Option<f64>,
    l1: Option<f64>,
    l2: Option<f64>,
    h: Option<f64>,
    dtau: Option<f64>,
    t_final: Option<f64>,
    phase_difference_deg: Option<f64>,
    envelope_half_width: Option<f64>,
    track_half_width: Option<f64>,
    update_tol: Option<f64>,
    residual_tol: Option<f64>,
    max_iterations: Option<usize>,
    coupling: Option<String>,
    extrapolate: Option<bool>,
    output_dir: Option<PathBuf>,
    snapshot_times: Option<Vec<f64>>,
    series_every: Option<usize>,
    #[serde(default)]
    soliton: Vec<RawSoliton>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSoliton {
    x0: f64,
    c: f64,
    n_psi: f64,
    n_phi: f64,
    #[serde(default)]
    delta_psi_deg: f64,
    #[serde(default)]
    delta_phi_deg: f64,
    #[serde(default)]
    polarization: Polarization,
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::ConfigInvalid {
        field: field.to_string(),
        message: message.into(),
    }
}

fn soliton(x0: f64, c: f64, n_psi: f64, n_phi: f64, polarization: Polarization) -> SolitonConfig {
    SolitonConfig {
        spec: SolitonSpec {
            x0,
            c,
            n_psi,
            n_phi,
            delta_psi: 0.0,
            delta_phi: 0.0,
        },
        polarization,
    }
}

impl ScenarioConfig {
    /// Built-in parameter sets.
    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let gamma = Complex64::new(0.175, 0.0);
        let model = ModelParams {
            beta: 1.0,
            alpha1: 0.75,
            gamma,
        };
        let mut grid = Grid::with_spacing(60.0, 60.0, 0.05, 0.01).expect("preset grid");
        let auto = Polarization::Auto;
        let (solitons, t_final, model) = match name {
            "circular_headon" => (
                vec![
                    soliton(-40.0, 1.0, -1.5, -1.5, auto),
                    soliton(40.0, -1.0, -1.5, -1.5, auto),
                ],
                60.0,
                model,
            ),
            "elliptic_headon" => (
                vec![
                    soliton(-40.0, 1.0, -1.1, -1.5, auto),
                    soliton(40.0, -1.0, -1.1, -1.5, auto),
                ],
                60.0,
                model,
            ),
            "elliptic_takeover" => {
                // both solitons travel about 100 units to the right
                grid = Grid::with_spacing(60.0, 140.0, 0.05, 0.01).expect("preset grid");
                (
                    vec![
                        soliton(-20.0, 1.0, -1.1, -1.5, auto),
                        soliton(0.0, 0.8, -1.1, -1.5, auto),
                    ],
                    120.0,
                    model,
                )
            }
            "free_soliton" => (
                vec![soliton(-20.0, 1.0, -1.5, -1.5, auto)],
                10.0,
                ModelParams {
                    gamma: Complex64::new(0.0, 0.0),
                    ..model
                },
            ),
            "breathing_soliton" => (
                vec![soliton(0.0, 0.0, -1.5, -1.5, Polarization::LinearPsi)],
                60.0,
                model,
            ),
            other => return Err(ScenarioError::UnknownPreset(other.to_string())),
        };
        Ok(Self {
            name: name.to_string(),
            model,
            grid,
            t_final,
            solitons,
            envelope_half_width: 30.0,
            iteration: IterationControl::default(),
            track_half_width: crate::diagnostics::TRACK_HALF_WIDTH,
            output: OutputConfig {
                dir: None,
                snapshot_times: Vec::new(),
                series_every: 10,
            },
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Parses a config. A `preset` key loads that parameter set first and
    /// the remaining keys override it; without a preset all model, grid
    /// and soliton keys are required.
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        let mut cfg = match &raw.preset {
            Some(p) => Self::preset(p)?,
            None => {
                let need = |v: Option<f64>, f: &str| v.ok_or_else(|| invalid(f, "missing"));
                let model = ModelParams {
                    beta: need(raw.beta, "beta")?,
                    alpha1: need(raw.alpha1, "alpha1")?,
                    gamma: Complex64::new(need(raw.gamma, "gamma")?, raw.gamma_im.unwrap_or(0.0)),
                };
                let l1 = need(raw.l1, "l1")?;
                let l2 = need(raw.l2, "l2")?;
                let h = need(raw.h, "h")?;
                let dtau = need(raw.dtau, "dtau")?;
                let grid =
                    Grid::with_spacing(l1, l2, h, dtau).map_err(|e| invalid("h", e.to_string()))?;
                Self {
                    name: "custom".to_string(),
                    model,
                    grid,
                    t_final: need(raw.t_final, "t_final")?,
                    solitons: Vec::new(),
                    envelope_half_width: 30.0,
                    iteration: IterationControl::default(),
                    track_half_width: crate::diagnostics::TRACK_HALF_WIDTH,
                    output: OutputConfig {
                        dir: None,
                        snapshot_times: Vec::new(),
                        series_every: 10,
                    },
                }
            }
        };
        if let Some(n) = raw.name {
            cfg.name = n;
        }
        if let Some(v) = raw.beta {
            cfg.model.beta = v;
        }
        if let Some(v) = raw.alpha1 {
            cfg.model.alpha1 = v;
        }
        if let Some(v) = raw.gamma {
            cfg.model.gamma.re = v;
        }
        if let Some(v) = raw.gamma_im {
            cfg.model.gamma.im = v;
        }
        if raw.preset.is_some()
            && (raw.l1.is_some() || raw.l2.is_some() || raw.h.is_some() || raw.dtau.is_some())
        {
            let g = cfg.grid;
            cfg.grid = Grid::with_spacing(
                raw.l1.unwrap_or(g.l1),
                raw.l2.unwrap_or(g.l2),
                raw.h.unwrap_or(g.h()),
                raw.dtau.unwrap_or(g.dtau),
            )
            .map_err(|e| invalid("h", e.to_string()))?;
        }
        if let Some(v) = raw.t_final {
            cfg.t_final = v;
        }
        if let Some(v) = raw.envelope_half_width {
            cfg.envelope_half_width = v;
        }
        if let Some(v) = raw.track_half_width {
            cfg.track_half_width = v;
        }
        if let Some(v) = raw.update_tol {
            cfg.iteration.update_tol = v;
        }
        if let Some(v) = raw.residual_tol {
            cfg.iteration.residual_tol = v;
        }
        if let Some(v) = raw.max_iterations {
            cfg.iteration.max_iterations = v;
        }
        if let Some(v) = raw.extrapolate {
            cfg.iteration.extrapolate = v;
        }
        if let Some(mode) = raw.coupling {
            cfg.iteration.mode = match mode.as_str() {
                "coupled" => CouplingMode::Coupled,
                "lagged" => CouplingMode::Lagged,
                other => return Err(invalid("coupling", format!("unknown mode '{other}'"))),
            };
        }
        if let Some(v) = raw.output_dir {
            cfg.output.dir = Some(v);
        }
        if let Some(v) = raw.snapshot_times {
            cfg.output.snapshot_times = v;
        }
        if let Some(v) = raw.series_every {
            cfg.output.series_every = v;
        }
        if !raw.soliton.is_empty() {
            cfg.solitons = raw
                .soliton
                .iter()
                .map(|s| SolitonConfig {
                    spec: SolitonSpec {
                        x0: s.x0,
                        c: s.c,
                        n_psi: s.n_psi,
                        n_phi: s.n_phi,
                        delta_psi: s.delta_psi_deg.to_radians(),
                        delta_phi: s.delta_phi_deg.to_radians(),
                    },
                    polarization: s.polarization,
                })
                .collect();
        } else if raw.preset.is_none() {
            return Err(invalid("soliton", "at least one soliton is required"));
        }
        if let Some(d) = raw.phase_difference_deg {
            cfg = cfg.with_phase_difference(d)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets `delta_r - delta_l` (degrees): the left soliton gets zero
    /// phases, both components of the right one get the difference.
    pub fn with_phase_difference(mut self, degrees: f64) -> Result<Self, ScenarioError> {
        if self.solitons.len() != 2 {
            return Err(invalid(
                "phase_difference_deg",
                "needs exactly two solitons",
            ));
        }
        if !degrees.is_finite() {
            return Err(invalid("phase_difference_deg", "not finite"));
        }
        let (l, r) = if self.solitons[0].spec.x0 <= self.solitons[1].spec.x0 {
            (0, 1)
        } else {
            (1, 0)
        };
        self.solitons[l].spec.delta_psi = 0.0;
        self.solitons[l].spec.delta_phi = 0.0;
        self.solitons[r].spec.delta_psi = degrees.to_radians();
        self.solitons[r].spec.delta_phi = degrees.to_radians();
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.model
            .validate()
            .map_err(|e| invalid("model", e.to_string()))?;
        self.grid
            .validate()
            .map_err(|e| invalid("grid", e.to_string()))?;
        if self.solitons.is_empty() || self.solitons.len() > 2 {
            return Err(invalid(
                "soliton",
                format!("1 or 2 solitons required, got {}", self.solitons.len()),
            ));
        }
        if self.model.beta != 1.0 {
            return Err(invalid("beta", "the envelope generator assumes beta = 1"));
        }
        if !(self.t_final > 0.0) {
            return Err(invalid(
                "t_final",
                format!("{} is not positive", self.t_final),
            ));
        }
        if self.output.series_every == 0 {
            return Err(invalid("series_every", "must be at least 1"));
        }
        if !(self.track_half_width > 0.0) {
            return Err(invalid("track_half_width", "must be positive"));
        }
        for (k, s) in self.solitons.iter().enumerate() {
            let x = s.spec.x0;
            if !(x > -self.grid.l1 && x < self.grid.l2) {
                return Err(invalid(
                    &format!("soliton[{k}].x0"),
                    format!("{x} outside the interval"),
                ));
            }
        }
        if let Some(t) = self
            .output
            .snapshot_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_final))
        {
            return Err(invalid(
                "snapshot_times",
                format!("{t} outside [0, t_final]"),
            ));
        }
        Ok(())
    }

    /// Number of time steps to reach `t_final`.
    pub fn steps(&self) -> usize {
        (self.t_final / self.grid.dtau).round() as usize
    }

    /// Key-value description of every input that affects the results.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let g = &self.grid;
        let it = &self.iteration;
        let mode = match it.mode {
            CouplingMode::Coupled => "coupled",
            CouplingMode::Lagged => "lagged",
        };
        let _ = writeln!(out, "code_version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "name = {}", self.name);
        for (k, v) in [
            ("beta", self.model.beta),
            ("alpha1", self.model.alpha1),
            ("alpha2", 0.0),
            ("gamma", self.model.gamma.re),
            ("gamma_im", self.model.gamma.im),
            ("l1", g.l1),
            ("l2", g.l2),
            ("h", g.h()),
            ("dtau", g.dtau),
            ("t_final", self.t_final),
            ("envelope_half_width", self.envelope_half_width),
            ("track_half_width", self.track_half_width),
            ("update_tol", it.update_tol),
            ("residual_tol", it.residual_tol),
        ] {
            let _ = writeln!(out, "{k} = {}", crate::fmt_num(v));
        }
        let _ = writeln!(out, "m = {}", g.m);
        let _ = writeln!(out, "steps = {}", self.steps());
        let _ = writeln!(out, "max_iterations = {}", it.max_iterations);
        let _ = writeln!(out, "coupling = {mode}");
        let _ = writeln!(out, "extrapolate = {}", it.extrapolate);
        let _ = writeln!(out, "series_every = {}", self.output.series_every);
        let times: Vec<String> = self
            .output
            .snapshot_times
            .iter()
            .map(|t| crate::fmt_num(*t))
            .collect();
        let _ = writeln!(out, "snapshot_times = [{}]", times.join(", "));
        for (k, s) in self.solitons.iter().enumerate() {
            let p = &s.spec;
            for (key, v) in [
                ("x0", p.x0),
                ("c", p.c),
                ("n_psi", p.n_psi),
                ("n_phi", p.n_phi),
                ("delta_psi_deg", p.delta_psi.to_degrees()),
                ("delta_phi_deg", p.delta_phi.to_degrees()),
            ] {
                let _ = writeln!(out, "soliton{k}.{key} = {}", crate::fmt_num(v));
            }
            let _ = writeln!(out, "soliton{k}.polarization = {}", s.polarization.name());
        }
        out
    }
}
