use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cnls::fmt_num;
use cnls::pde::Grid;
use cnls::scenario::{
    run_phase_sweep, run_refinement_study, run_scenario, ScenarioConfig, ScenarioError, PRESETS,
};

#[derive(Parser)]
#[command(name = "cnls", version, about = "Coupled NLS soliton collision runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write series, snapshots, summary and manifest
    Run {
        #[command(flatten)]
        common: Common,
        /// Phase difference delta_r - delta_l in degrees
        #[arg(long = "phase-diff")]
        phase_diff: Option<f64>,
        /// Comma-separated snapshot times
        #[arg(long = "snapshot-times", value_delimiter = ',')]
        snapshot_times: Option<Vec<f64>>,
        /// Write a series row every N steps
        #[arg(long = "series-every")]
        series_every: Option<usize>,
    },
    /// Run one scenario per phase difference
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated phase differences in degrees
        #[arg(long = "phase-diff", value_delimiter = ',', required = true)]
        phases: Vec<f64>,
    },
    /// Convergence study against the exact single-soliton solution
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// List the built-in presets
    Presets,
}

#[derive(Args)]
struct Common {
    /// Scenario config file
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name
    #[arg(long)]
    preset: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the grid spacing
    #[arg(long)]
    h: Option<f64>,
    /// Override the time step
    #[arg(long)]
    dtau: Option<f64>,
    /// Override the final time
    #[arg(long = "t-final")]
    t_final: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig, ScenarioError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::from_file(path)?,
            (None, Some(name)) => ScenarioConfig::preset(name)?,
            (None, None) => {
                return Err(ScenarioError::ConfigInvalid {
                    field: "config".into(),
                    message: "pass --config or --preset".into(),
                })
            }
        };
        if self.h.is_some() || self.dtau.is_some() {
            let g = cfg.grid;
            cfg.grid = Grid::with_spacing(
                g.l1,
                g.l2,
                self.h.unwrap_or(g.h()),
                self.dtau.unwrap_or(g.dtau),
            )
            .map_err(|e| ScenarioError::ConfigInvalid {
                field: "h".into(),
                message: e.to_string(),
            })?;
        }
        if let Some(t) = self.t_final {
            cfg.t_final = t;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| "nan".into())
}

fn execute(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Presets => {
            for p in PRESETS {
                println!("{p}");
            }
        }
        Command::Run {
            common,
            phase_diff,
            snapshot_times,
            series_every,
        } => {
            let mut cfg = common.load()?;
            if let Some(d) = phase_diff {
                cfg = cfg.with_phase_difference(d)?;
            }
            if let Some(t) = snapshot_times {
                cfg.output.snapshot_times = t;
            }
            if let Some(n) = series_every {
                cfg.output.series_every = n;
            }
            if cfg.output.dir.is_none() {
                cfg.output.dir = Some(PathBuf::from("out").join(&cfg.name));
            }
            let run = run_scenario(&cfg)?;
            let s = &run.summary;
            println!(
                "output      {}",
                run.output_dir
                    .as_ref()
                    .map(|d| d.display().to_string())
                    .unwrap_or_default()
            );
            println!("steps       {} ({:.1} s)", s.steps, s.elapsed_seconds);
            println!("mass        {}", fmt_num(s.final_.mass));
            println!("momentum    {}", fmt_num(s.final_.momentum));
            println!("energy      {}", fmt_num(s.final_.energy));
            println!(
                "max drift   mass {} momentum {} energy {}",
                fmt_num(s.max_drift.mass),
                fmt_num(s.max_drift.momentum),
                fmt_num(s.max_drift.energy)
            );
            println!("period      {}", opt(s.breathing_period));
            println!(
                "iterations  median {} max {}",
                s.iterations_median, s.iterations_max
            );
        }
        Command::Sweep { common, phases } => {
            let cfg = common.load()?;
            println!("phase_deg,E,E_disc,M,P_min,P_max,theta_total_spread_deg,status");
            for row in run_phase_sweep(&cfg, &phases) {
                match row.outcome {
                    Ok(e) => println!(
                        "{},{},{},{},{},{},{},ok",
                        row.phase_difference_deg,
                        fmt_num(e.energy),
                        fmt_num(e.discrete.energy),
                        fmt_num(e.mass),
                        fmt_num(e.momentum_min),
                        fmt_num(e.momentum_max),
                        fmt_num(e.polarization_amplitude.to_degrees())
                    ),
                    Err(msg) => println!("{},,,,,,,failed: {msg}", row.phase_difference_deg),
                }
            }
        }
        Command::Refine { common, levels } => {
            let cfg = common.load()?;
            let table = run_refinement_study(&cfg, levels)?;
            println!("# oracle: {}", table.oracle);
            println!("h,dtau,steps,error,order");
            for r in &table.rows {
                println!(
                    "{},{},{},{},{}",
                    r.h,
                    r.dtau,
                    r.steps,
                    fmt_num(r.error),
                    opt(r.order)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
