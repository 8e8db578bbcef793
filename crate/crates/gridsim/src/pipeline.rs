//! The five pipeline stages as library calls. Each stage reads and writes
//! plain files so any stage can be rerun in isolation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use aimdgrid_core::engine::{self, ComparisonTable};
use aimdgrid_core::learning::{estimate_load, train_node, NodeModel};
use aimdgrid_core::powerflow::{solve_distflow, InjectionSet};
use aimdgrid_core::scenario::{base_substation_profile, generate_scenario};
use aimdgrid_core::topology::{build_synthetic_feeder, validate_radial, BranchKind, BusKind};
use aimdgrid_core::{BaselineRecording, BusId, ControllerKind, Network, Scenario, SimConfig, SimResult};
use serde::{Deserialize, Serialize};

use crate::config::{OutputConfig, RunConfig, TrainingConfig};
use crate::error::{CliError, Result};
use crate::formats::*;
use crate::hashing::{file_hash, hash_of};
use crate::manifest::{RunKind, RunManifest};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyReport {
    pub network_hash: String,
    pub buses: usize,
    pub branches: usize,
    pub houses: usize,
    pub transformers: usize,
    pub max_depth: usize,
    pub substation_rating: f64,
    /// Service buses whose root path crosses exactly one transformer.
    pub services_behind_one_transformer: usize,
}

pub fn network_hash(net: &Network) -> String {
    hash_of(net)
}

pub fn scenario_hash(scen: &Scenario) -> String {
    hash_of(scen)
}

pub fn topology_report(net: &Network) -> Result<TopologyReport> {
    let radial = validate_radial(net)?;
    let mut behind_one = 0;
    for b in net.buses.iter().filter(|b| b.kind == BusKind::Service) {
        let path = radial.path_to_root(b.id)?;
        if path.iter().filter(|&&k| net.branches[k].kind == BranchKind::Transformer).count() == 1 {
            behind_one += 1;
        }
    }
    Ok(TopologyReport {
        network_hash: network_hash(net),
        buses: net.buses.len(),
        branches: net.branches.len(),
        houses: net.house_count(),
        transformers: net.transformer_count(),
        max_depth: radial.depth.iter().copied().max().unwrap_or(0),
        substation_rating: net.substation_rating,
        services_behind_one_transformer: behind_one,
    })
}

/// Builds the synthetic feeder and writes it with its validation report.
pub fn build_grid(cfg: &RunConfig, out: &Path) -> Result<(Network, TopologyReport)> {
    let net = build_synthetic_feeder(&cfg.feeder)?;
    let report = topology_report(&net)?;
    ensure_dir(out)?;
    write_topology(&out.join(TOPOLOGY_FILE), &net)?;
    write_json(&out.join(TOPOLOGY_REPORT_FILE), &report)?;
    Ok((net, report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario_hash: String,
    pub network_hash: String,
    pub houses: usize,
    pub evs: usize,
    pub load_scale: f64,
    /// Household-only substation peak, VA.
    pub base_peak_va: f64,
    pub base_peak_minute: usize,
    /// Lowest service voltage at the base peak, per unit.
    pub base_peak_min_voltage_pu: f64,
}

pub const SCENARIO_REPORT_FILE: &str = "scenario_report.json";
pub const PEAK_PF_FILE: &str = "peak_powerflow.csv";

/// Generates and stores a scenario, plus a power-flow dump of its
/// household-only peak minute.
pub fn make_scenario(
    net: &Network,
    cfg: &RunConfig,
    seed: u64,
    penetration: f64,
    out: &Path,
    emit_plot: bool,
) -> Result<(Scenario, ScenarioReport)> {
    let scen = generate_scenario(net, seed, &cfg.scenario, penetration)?;
    write_scenario(out, &scen)?;
    let base = base_substation_profile(net, &scen)?;
    let (peak_minute, &peak) = base
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| CliError::Invalid("scenario horizon is shorter than a minute".into()))?;
    let root_v = net.bus(net.root).map_or(0.0, |b| b.nominal_voltage) * scen.source_voltage_pu;
    let mut inj = InjectionSet::new(root_v);
    for prof in &scen.profiles {
        let (p, q) = prof.load_at(peak_minute as u32 * 60);
        inj.add(prof.house, p, q);
    }
    let sol = solve_distflow(net, &inj, &cfg.simulation.solver)?;
    write_pf_debug(&out.join(PEAK_PF_FILE), net, &sol)?;
    let min_pu = net
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Service)
        .map(|b| sol.voltage[&b.id] / b.nominal_voltage)
        .fold(f64::INFINITY, f64::min);
    let report = ScenarioReport {
        scenario_hash: scenario_hash(&scen),
        network_hash: network_hash(net),
        houses: scen.profiles.len(),
        evs: scen.evs.len(),
        load_scale: scen.load_scale,
        base_peak_va: peak,
        base_peak_minute: peak_minute,
        base_peak_min_voltage_pu: min_pu,
    };
    write_json(&out.join(SCENARIO_REPORT_FILE), &report)?;
    if emit_plot {
        let dir = out.join("plot");
        ensure_dir(&dir)?;
        write_series(&dir.join("base_substation.csv"), &[net.root.0], &[&base], 60, 1)?;
    }
    Ok((scen, report))
}

/// Inputs shared by every run of a sweep.
pub struct SimulationInputs<'a> {
    pub net: &'a Network,
    pub scenario: &'a Scenario,
    pub config: &'a RunConfig,
    pub thresholds: Option<&'a ThresholdFile>,
    pub emit_plot: bool,
}

impl SimulationInputs<'_> {
    fn thresholds_hash(&self) -> Option<String> {
        self.thresholds.map(hash_of)
    }

    fn check_thresholds(&self) -> Result<()> {
        if let Some(t) = self.thresholds {
            let net = network_hash(self.net);
            if t.network_hash != net {
                return Err(CliError::Incompatible(format!(
                    "thresholds were trained on network {} but the topology is {}",
                    short(&t.network_hash),
                    short(&net)
                )));
            }
        }
        Ok(())
    }
}

fn short(h: &str) -> &str {
    &h[..h.len().min(12)]
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub dir: PathBuf,
    pub wall_time_s: f64,
}

/// Canonical hash of everything configuring one controller run.
fn config_hash(sim: &SimConfig, out: &OutputConfig) -> String {
    hash_of(&(sim, out.record_every_s))
}

fn record_stride(out: &OutputConfig, dt_s: u32) -> usize {
    (out.record_every_s / dt_s).max(1) as usize
}

fn finish_manifest(dir: &Path, mut m: RunManifest, files: Vec<(&str, PathBuf)>) -> Result<RunManifest> {
    for (role, path) in files {
        let hash = file_hash(&path).map_err(|e| CliError::io(&path, e))?;
        m.outputs.insert(role.to_string(), relative(dir, &path));
        m.output_hashes.insert(role.to_string(), hash);
    }
    write_json(&dir.join(MANIFEST_FILE), &m)?;
    Ok(m)
}

fn empty_manifest(kind: RunKind, controller: Option<ControllerKind>, inputs: &SimulationInputs, sim: &SimConfig) -> RunManifest {
    RunManifest {
        tool_version: TOOL_VERSION.to_string(),
        kind,
        controller,
        config_hash: config_hash(sim, &inputs.config.output),
        scenario_hash: scenario_hash(inputs.scenario),
        network_hash: network_hash(inputs.net),
        thresholds_hash: None,
        dt_s: sim.dt_s,
        horizon_s: sim.horizon_s,
        record_every_s: inputs.config.output.record_every_s,
        comm_events: 0,
        max_pf_iterations: 0,
        outputs: BTreeMap::new(),
        output_hashes: BTreeMap::new(),
        scores: None,
    }
}

/// Runs the household-only baseline and stores what training reads.
pub fn simulate_baseline(inputs: &SimulationInputs, out: &Path) -> Result<RunOutcome> {
    let start = Instant::now();
    let sim = inputs.config.simulation.clone();
    let base = engine::run_baseline(inputs.net, inputs.scenario, &sim)?;
    let wall = start.elapsed().as_secs_f64();
    ensure_dir(out)?;
    let every = record_stride(&inputs.config.output, base.dt_s);
    let ids: Vec<u32> = base.houses.iter().map(|h| h.0).collect();
    let v_path = out.join("voltage.csv");
    let s_path = out.join("substation.csv");
    write_series(&v_path, &ids, &base.voltage, base.dt_s, every)?;
    write_series(&s_path, &[inputs.net.root.0], &[&base.substation], base.dt_s, every)?;
    let mut m = empty_manifest(RunKind::Baseline, None, inputs, &sim);
    m.max_pf_iterations = 0;
    let manifest = finish_manifest(out, m, vec![("voltage", v_path), ("substation", s_path)])?;
    Ok(RunOutcome { manifest, dir: out.to_path_buf(), wall_time_s: wall })
}

/// Interval over which each EV's average power (ACPS and fairness shares) is taken.
pub const AVERAGE_POWER_WINDOW: &str = "arrival to the earlier of full charge and departure";

/// scores.json: the score row plus the conventions behind it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoresFile {
    #[serde(flatten)]
    pub report: aimdgrid_core::ScoreReport,
    pub average_power_window: String,
}

/// Runs one controller and writes its series, scores and manifest.
pub fn simulate_controller(inputs: &SimulationInputs, kind: ControllerKind, out: &Path) -> Result<RunOutcome> {
    inputs.check_thresholds()?;
    let mut sim = inputs.config.simulation.clone();
    sim.controller.controller = kind;
    let map = inputs.thresholds.map(ThresholdFile::voltage_map);
    let start = Instant::now();
    let mut result = engine::run(inputs.net, inputs.scenario, &sim, map.as_ref())?;
    let wall = start.elapsed().as_secs_f64();
    result.wall_time_s = Some(wall);
    let scores = result.scores().map_err(aimdgrid_core::SimError::from)?;

    ensure_dir(out)?;
    let files = write_result_series(inputs, &result, out)?;
    let scores_json = out.join("scores.json");
    let scores_csv = out.join("scores.csv");
    write_json(&scores_json, &ScoresFile { report: scores.clone(), average_power_window: AVERAGE_POWER_WINDOW.into() })?;
    let table = ComparisonTable { rows: vec![scores.clone()] };
    write_text(&scores_csv, &table.to_csv())?;
    if inputs.emit_plot {
        write_run_plots(inputs, &result, &scores, out)?;
    }

    let mut m = empty_manifest(RunKind::Controller, Some(kind), inputs, &sim);
    m.thresholds_hash = if kind == ControllerKind::DAimd { inputs.thresholds_hash() } else { None };
    m.comm_events = result.comm_events;
    m.max_pf_iterations = result.max_pf_iterations;
    m.scores = Some(scores);
    let mut all = files;
    all.push(("scores_json", scores_json));
    all.push(("scores_csv", scores_csv));
    let manifest = finish_manifest(out, m, all)?;
    Ok(RunOutcome { manifest, dir: out.to_path_buf(), wall_time_s: wall })
}

fn write_result_series(inputs: &SimulationInputs, r: &SimResult, out: &Path) -> Result<Vec<(&'static str, PathBuf)>> {
    let every = record_stride(&inputs.config.output, r.dt_s);
    let houses: Vec<u32> = r.houses.iter().map(|h| h.0).collect();
    let xf: Vec<u32> = inputs.net.transformers().iter().map(|&k| inputs.net.branches[k].to.0).collect();
    let evs: Vec<u32> = r.ev_houses.iter().map(|h| h.0).collect();
    let soc_every = (inputs.config.output.record_every_s / r.soc_record_s).max(1) as usize;
    let files = [
        ("voltage", "voltage.csv"),
        ("substation", "substation.csv"),
        ("transformer", "transformer.csv"),
        ("ev_current", "ev_current.csv"),
        ("ev_power", "ev_power.csv"),
        ("ev_soc", "ev_soc.csv"),
    ];
    let paths: Vec<(&str, PathBuf)> = files.iter().map(|&(role, f)| (role, out.join(f))).collect();
    write_series(&paths[0].1, &houses, &r.voltage, r.dt_s, every)?;
    write_series(&paths[1].1, &[inputs.net.root.0], &[&r.substation], r.dt_s, every)?;
    write_series(&paths[2].1, &xf, &r.transformer, r.dt_s, every)?;
    write_series(&paths[3].1, &evs, &r.ev_current, r.dt_s, every)?;
    write_series(&paths[4].1, &evs, &r.ev_power, r.dt_s, every)?;
    write_series(&paths[5].1, &evs, &r.ev_soc, r.soc_record_s, soc_every)?;
    Ok(paths)
}

/// One-second tidy files for voltage, loading and current charts.
fn write_run_plots(inputs: &SimulationInputs, r: &SimResult, scores: &aimdgrid_core::ScoreReport, out: &Path) -> Result<()> {
    let dir = out.join("plot");
    ensure_dir(&dir)?;
    write_series(&dir.join("substation.csv"), &[inputs.net.root.0], &[&r.substation], r.dt_s, 1)?;
    let steps = r.steps();
    let mut worst = Vec::with_capacity(steps);
    let mut mean = Vec::with_capacity(steps);
    for k in 0..steps {
        let (w, sum) = r.voltage.iter().fold((f64::INFINITY, 0.0), |(w, s), v| (w.min(v[k]), s + v[k]));
        worst.push(w);
        mean.push(sum / r.voltage.len().max(1) as f64);
    }
    // node_id 0 holds the minimum and 1 the mean over service buses.
    write_series(&dir.join("voltage_summary.csv"), &[0, 1], &[worst, mean], r.dt_s, 1)?;
    let n = inputs.config.output.plot_evs.min(r.ev_current.len());
    let ids: Vec<u32> = r.ev_houses[..n].iter().map(|h| h.0).collect();
    write_series(&dir.join("ev_current.csv"), &ids, &r.ev_current[..n], r.dt_s, 1)?;
    let mut text = String::from("neighborhood,lcs_kvah\n");
    for (g, v) in scores.lcs_by_neighborhood.iter().enumerate() {
        text.push_str(&format!("{g},{v}\n"));
    }
    write_text(&dir.join("lcs_by_neighborhood.csv"), &text)
}

/// Runs a controller sweep with up to `jobs` workers. A single controller
/// writes straight into `out`; several get one subdirectory each.
pub fn simulate_sweep(
    inputs: &SimulationInputs,
    controllers: &[ControllerKind],
    out: &Path,
    jobs: usize,
) -> Result<Vec<RunOutcome>> {
    if controllers.contains(&ControllerKind::DAimd) && inputs.thresholds.is_none() {
        return Err(CliError::Invalid("controller d_aimd needs trained thresholds (--thresholds)".into()));
    }
    inputs.check_thresholds()?;
    let dir_of = |k: ControllerKind| if controllers.len() == 1 { out.to_path_buf() } else { out.join(k.key()) };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunOutcome>>>> = Mutex::new((0..controllers.len()).map(|_| None).collect());
    let workers = jobs.clamp(1, controllers.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&k) = controllers.get(i) else { break };
                let r = simulate_controller(inputs, k, &dir_of(k));
                results.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    results.into_inner().expect("worker panicked").into_iter().map(|r| r.expect("every index is claimed")).collect()
}

/// Reads a baseline directory back into memory.
pub fn read_baseline(dir: &Path, net: &Network) -> Result<(RunManifest, BaselineRecording)> {
    let m = RunManifest::read(dir)?;
    if m.kind != RunKind::Baseline {
        return Err(CliError::Invalid(format!("{} is not a baseline run", dir.display())));
    }
    let net_hash = network_hash(net);
    if m.network_hash != net_hash {
        return Err(CliError::Incompatible(format!(
            "baseline was recorded on network {} but the topology is {}",
            short(&m.network_hash),
            short(&net_hash)
        )));
    }
    let v = read_series(&m.output(dir, "voltage")?)?;
    let s = read_series(&m.output(dir, "substation")?)?;
    if v.step_s != s.step_s || s.values.len() != 1 {
        return Err(CliError::parse(dir, "voltage and substation series do not line up"));
    }
    let rec = BaselineRecording {
        dt_s: v.step_s,
        scenario_key: 0,
        network_key: 0,
        houses: v.ids.iter().map(|&i| BusId(i)).collect(),
        voltage: v.values,
        substation: s.values.into_iter().next().unwrap_or_default(),
        substation_rating: net.substation_rating,
    };
    Ok((m, rec))
}

/// Fits every service bus of `net` from the baseline in `baseline_dir`.
/// Fails listing every node that could not be trained.
pub fn train(baseline_dir: &Path, net: &Network, cfg: &TrainingConfig, out: &Path, emit_plot: bool) -> Result<ThresholdFile> {
    let (m, rec) = read_baseline(baseline_dir, net)?;
    let mut models: Vec<NodeModel> = Vec::new();
    let mut failed = Vec::new();
    if !cfg.sampling_s.is_multiple_of(rec.dt_s) {
        return Err(CliError::Invalid(format!(
            "training sampling {} s is not a multiple of the baseline step {} s",
            cfg.sampling_s, rec.dt_s
        )));
    }
    for house in net.houses() {
        let nominal = net.bus(house).map_or(0.0, |b| b.nominal_voltage);
        let samples = rec.training_set(house, cfg.sampling_s)?;
        match train_node(house, &samples, net.substation_rating, nominal, cfg.band_pu) {
            Ok(model) => models.push(model),
            Err(e) => failed.push((house, e)),
        }
    }
    if !failed.is_empty() {
        return Err(CliError::Untrainable(failed));
    }
    let nodes: Vec<ThresholdEntry> = models.iter().map(ThresholdEntry::from).collect();
    let file = ThresholdFile {
        network_hash: network_hash(net),
        baseline_scenario_hash: m.scenario_hash,
        rating: net.substation_rating,
        sampling_s: cfg.sampling_s,
        band_pu: cfg.band_pu,
        summary: ThresholdSummary::of(&nodes),
        nodes,
    };
    ensure_dir(out)?;
    write_json(&out.join(THRESHOLDS_FILE), &file)?;
    if emit_plot {
        write_training_plot(&rec, &models, cfg, out)?;
    }
    Ok(file)
}

/// Scatter and fitted curve for the nodes with the lowest and highest
/// thresholds.
fn write_training_plot(rec: &BaselineRecording, models: &[NodeModel], cfg: &TrainingConfig, out: &Path) -> Result<()> {
    let dir = out.join("plot");
    ensure_dir(&dir)?;
    let lo = models.iter().min_by(|a, b| a.threshold.v_th.total_cmp(&b.threshold.v_th));
    let hi = models.iter().max_by(|a, b| a.threshold.v_th.total_cmp(&b.threshold.v_th));
    let mut text = String::from("node_id,local_voltage,substation_apparent,fitted\n");
    for m in lo.into_iter().chain(hi) {
        for s in rec.training_set(m.node, cfg.sampling_s)? {
            let fit = estimate_load(&m.coefficients, s.local_voltage);
            text.push_str(&format!("{},{},{},{}\n", m.node.0, s.local_voltage, s.substation_apparent, fit));
        }
    }
    write_text(&dir.join("training.csv"), &text)
}

pub const COMPARISON_CSV: &str = "comparison.csv";
pub const COMPARISON_TXT: &str = "comparison.txt";

/// Tabulates finished runs; refuses runs of different scenarios or networks.
pub fn compare(dirs: &[PathBuf], out: Option<&Path>) -> Result<ComparisonTable> {
    let mut manifests = Vec::with_capacity(dirs.len());
    for d in dirs {
        let m = RunManifest::read(d)?;
        if m.kind != RunKind::Controller {
            return Err(CliError::Invalid(format!("{} holds a baseline run, which has no scores", d.display())));
        }
        manifests.push((d, m));
    }
    let Some((d0, first)) = manifests.first() else {
        return Err(CliError::Sim(aimdgrid_core::SimError::NothingToCompare));
    };
    for (d, m) in &manifests[1..] {
        if m.scenario_hash != first.scenario_hash {
            return Err(CliError::Incompatible(format!(
                "{} used scenario {} but {} used {}",
                d0.display(),
                short(&first.scenario_hash),
                d.display(),
                short(&m.scenario_hash)
            )));
        }
        if m.network_hash != first.network_hash {
            return Err(CliError::Incompatible(format!(
                "{} used network {} but {} used {}",
                d0.display(),
                short(&first.network_hash),
                d.display(),
                short(&m.network_hash)
            )));
        }
    }
    let rows = manifests
        .into_iter()
        .map(|(d, m)| m.scores.ok_or_else(|| CliError::parse(d.join(MANIFEST_FILE), "manifest has no scores")))
        .collect::<Result<Vec<_>>>()?;
    let table = ComparisonTable::from_reports(rows)?;
    if let Some(out) = out {
        ensure_dir(out)?;
        write_text(&out.join(COMPARISON_CSV), &table.to_csv())?;
        write_text(&out.join(COMPARISON_TXT), &table.to_text())?;
    }
    Ok(table)
}
