use std::path::{Path, PathBuf};

use aimdgrid_core::ControllerKind;
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::formats::{read_json, read_scenario, read_topology, ThresholdFile};
use crate::pipeline::{self, SimulationInputs};

#[derive(Debug, Parser)]
#[command(name = "aimdgrid", version, about = "EV charging control on a radial distribution feeder")]
pub struct Cli {
    /// JSON run configuration; omitted sections use defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for scenario synthesis.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Also write tidy CSV files for charts.
    #[arg(long, global = true)]
    pub emit_plot_data: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the synthetic feeder and write topology.json.
    BuildGrid,
    /// Generate household loads and the EV fleet.
    Scenario {
        /// topology.json written by `build-grid`.
        #[arg(long, value_name = "FILE")]
        topology: PathBuf,
        /// Share of houses with an EV, in [0, 1].
        #[arg(long, default_value_t = 1.0)]
        penetration: f64,
    },
    /// Fit per-node threshold voltages from a baseline run.
    Train {
        /// Directory written by `simulate --baseline`.
        #[arg(long, value_name = "DIR")]
        baseline: PathBuf,
        /// topology.json written by `build-grid`.
        #[arg(long, value_name = "FILE")]
        topology: PathBuf,
    },
    /// Run controllers, or the household-only baseline, over a scenario.
    Simulate {
        /// topology.json written by `build-grid`.
        #[arg(long, value_name = "FILE")]
        topology: PathBuf,
        /// Directory written by `scenario`.
        #[arg(long, value_name = "DIR")]
        scenario: PathBuf,
        /// Comma-separated: no_control, d_aimd, c_aimd, droop. Defaults to the
        /// configured controller.
        #[arg(long, value_delimiter = ',', value_parser = parse_controller)]
        controller: Vec<ControllerKind>,
        /// thresholds.json written by `train`; required for d_aimd.
        #[arg(long, value_name = "FILE")]
        thresholds: Option<PathBuf>,
        /// Record the no-EV baseline used for training instead.
        #[arg(long, conflicts_with_all = ["controller", "thresholds"])]
        baseline: bool,
        /// Concurrent controller runs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Tabulate finished runs.
    Compare {
        /// Run directories written by `simulate`, all on the same scenario.
        #[arg(required = true, value_name = "RUN_DIR")]
        runs: Vec<PathBuf>,
    },
}

fn parse_controller(s: &str) -> std::result::Result<ControllerKind, String> {
    ControllerKind::from_key(s)
        .ok_or_else(|| format!("unknown controller `{s}` (expected no_control, d_aimd, c_aimd or droop)"))
}

fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().ok_or_else(|| CliError::Invalid("--out is required for this command".into()))
}

/// Executes a parsed command line, returning lines for standard output.
pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    let cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    let mut lines = Vec::new();
    match &cli.command {
        Command::BuildGrid => {
            let out = require_out(&cli.out)?;
            let (_, r) = pipeline::build_grid(&cfg, out)?;
            lines.push(format!(
                "topology: {} houses, {} transformers, {} buses, depth {} (network {})",
                r.houses, r.transformers, r.buses, r.max_depth, r.network_hash
            ));
        }
        Command::Scenario { topology, penetration } => {
            let out = require_out(&cli.out)?;
            let net = read_topology(topology)?;
            let (_, r) = pipeline::make_scenario(&net, &cfg, cli.seed, *penetration, out, cli.emit_plot_data)?;
            lines.push(format!(
                "scenario: seed {}, {} EVs, base peak {:.0} VA at minute {}, min voltage {:.4} pu (scenario {})",
                cli.seed, r.evs, r.base_peak_va, r.base_peak_minute, r.base_peak_min_voltage_pu, r.scenario_hash
            ));
        }
        Command::Train { baseline, topology } => {
            let out = require_out(&cli.out)?;
            let net = read_topology(topology)?;
            let t = pipeline::train(baseline, &net, &cfg.training, out, cli.emit_plot_data)?;
            let s = &t.summary;
            lines.push(format!(
                "trained {} nodes: theta2 < 0 on {}, theta3 < 0 on {}, v_th {:.2} / {:.2} / {:.2} V (min / mean / max)",
                s.nodes, s.theta2_negative, s.theta3_negative, s.v_th_min, s.v_th_mean, s.v_th_max
            ));
        }
        Command::Simulate { topology, scenario, controller, thresholds, baseline, jobs } => {
            let out = require_out(&cli.out)?;
            let net = read_topology(topology)?;
            let scen = read_scenario(scenario)?;
            let thresholds: Option<ThresholdFile> = thresholds.as_deref().map(read_json).transpose()?;
            let inputs = SimulationInputs {
                net: &net,
                scenario: &scen,
                config: &cfg,
                thresholds: thresholds.as_ref(),
                emit_plot: cli.emit_plot_data,
            };
            if *baseline {
                let r = pipeline::simulate_baseline(&inputs, out)?;
                lines.push(format!("baseline: {} steps in {:.1} s", r.manifest.horizon_s / r.manifest.dt_s, r.wall_time_s));
            } else {
                let kinds = if controller.is_empty() { vec![cfg.simulation.controller.controller] } else { controller.clone() };
                let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
                for r in pipeline::simulate_sweep(&inputs, &kinds, out, jobs)? {
                    let k = r.manifest.controller.map_or("?", |k| k.label());
                    lines.push(format!(
                        "{k}: comm_events {} in {:.1} s -> {}",
                        r.manifest.comm_events,
                        r.wall_time_s,
                        r.dir.display()
                    ));
                }
            }
        }
        Command::Compare { runs } => {
            let table = pipeline::compare(runs, cli.out.as_deref())?;
            lines.extend(table.to_text().lines().map(String::from));
        }
    }
    Ok(lines)
}
