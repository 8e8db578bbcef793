//! On-disk formats: JSON documents for structured artifacts and tidy CSV
//! files for series and load profiles.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aimdgrid_core::learning::{NodeModel, RootProvenance};
use aimdgrid_core::powerflow::PowerFlowSolution;
use aimdgrid_core::scenario::{profiles_from_records, profiles_to_records, ProfileRecord};
use aimdgrid_core::topology::validate_radial;
use aimdgrid_core::{BusId, EvSpec, Network, Scenario};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const TOPOLOGY_FILE: &str = "topology.json";
pub const TOPOLOGY_REPORT_FILE: &str = "topology_report.json";
pub const SCENARIO_FILE: &str = "scenario.json";
pub const PROFILES_FILE: &str = "profiles.csv";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data always serializes");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
}

pub fn write_topology(path: &Path, net: &Network) -> Result<()> {
    write_json(path, net)
}

/// Reads a topology and rejects anything that is not a valid radial tree.
pub fn read_topology(path: &Path) -> Result<Network> {
    let net: Network = read_json(path)?;
    validate_radial(&net)?;
    Ok(net)
}

/// Scenario metadata and fleet; the load profiles live in a CSV next to it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub horizon_s: u32,
    pub ev_penetration: f64,
    pub source_voltage_pu: f64,
    pub load_scale: f64,
    pub power_factor: f64,
    pub evs: Vec<EvSpec>,
}

pub fn write_scenario(dir: &Path, scen: &Scenario) -> Result<()> {
    let pf = scen.profiles.first().map_or(1.0, |p| p.power_factor);
    if scen.profiles.iter().any(|p| p.power_factor != pf) {
        return Err(CliError::Invalid("household power factors must be uniform to be stored".into()));
    }
    ensure_dir(dir)?;
    let meta = ScenarioFile {
        seed: scen.seed,
        horizon_s: scen.horizon_s,
        ev_penetration: scen.ev_penetration,
        source_voltage_pu: scen.source_voltage_pu,
        load_scale: scen.load_scale,
        power_factor: pf,
        evs: scen.evs.clone(),
    };
    write_json(&dir.join(SCENARIO_FILE), &meta)?;
    write_profiles(&dir.join(PROFILES_FILE), &profiles_to_records(&scen.profiles))
}

pub fn read_scenario(dir: &Path) -> Result<Scenario> {
    let meta: ScenarioFile = read_json(&dir.join(SCENARIO_FILE))?;
    let path = dir.join(PROFILES_FILE);
    let records = read_profiles(&path)?;
    let houses: Vec<BusId> = records.iter().map(|r| r.house_id).collect::<BTreeSet<_>>().into_iter().collect();
    let profiles = profiles_from_records(&records, &houses, meta.power_factor).map_err(|e| CliError::parse(&path, e))?;
    Ok(Scenario {
        seed: meta.seed,
        horizon_s: meta.horizon_s,
        ev_penetration: meta.ev_penetration,
        source_voltage_pu: meta.source_voltage_pu,
        load_scale: meta.load_scale,
        profiles,
        evs: meta.evs,
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::parse(path, format!("{other:?}")),
    }
}

pub fn write_profiles(path: &Path, records: &[ProfileRecord]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["time_min", "house_id", "power_w"]).map_err(|e| csv_error(path, e))?;
    for r in records {
        w.write_record([r.time_min.to_string(), r.house_id.0.to_string(), r.power_w.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads `time_min,house_id,power_w` records, e.g. a measured load history.
pub fn read_profiles(path: &Path) -> Result<Vec<ProfileRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| CliError::parse(path, format!("record {}: {e}", i + 1))))
        .collect()
}

/// One trained node as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub node_id: BusId,
    pub theta: [f64; 3],
    pub v_th: f64,
    pub root_provenance: RootProvenance,
    pub rmse: f64,
    pub samples: usize,
}

impl From<&NodeModel> for ThresholdEntry {
    fn from(m: &NodeModel) -> Self {
        Self {
            node_id: m.node,
            theta: m.coefficients.theta,
            v_th: m.threshold.v_th,
            root_provenance: m.threshold.root_provenance,
            rmse: m.coefficients.rmse,
            samples: m.coefficients.samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub nodes: usize,
    pub theta2_negative: usize,
    pub theta3_negative: usize,
    pub v_th_min: f64,
    pub v_th_mean: f64,
    pub v_th_max: f64,
}

impl ThresholdSummary {
    pub fn of(entries: &[ThresholdEntry]) -> Self {
        let v: Vec<f64> = entries.iter().map(|e| e.v_th).collect();
        let n = v.len().max(1) as f64;
        Self {
            nodes: entries.len(),
            theta2_negative: entries.iter().filter(|e| e.theta[1] < 0.0).count(),
            theta3_negative: entries.iter().filter(|e| e.theta[2] < 0.0).count(),
            v_th_min: v.iter().copied().fold(f64::INFINITY, f64::min),
            v_th_mean: v.iter().sum::<f64>() / n,
            v_th_max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub network_hash: String,
    pub baseline_scenario_hash: String,
    /// VA the thresholds were solved for.
    pub rating: f64,
    pub sampling_s: u32,
    pub band_pu: (f64, f64),
    pub summary: ThresholdSummary,
    pub nodes: Vec<ThresholdEntry>,
}

impl ThresholdFile {
    pub fn voltage_map(&self) -> BTreeMap<BusId, f64> {
        self.nodes.iter().map(|e| (e.node_id, e.v_th)).collect()
    }
}

/// Regularly sampled series keyed by node id.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    pub step_s: u32,
    pub ids: Vec<u32>,
    pub values: Vec<Vec<f64>>,
}

/// Writes `time_s,node_id,value` rows, time-major, keeping every
/// `every`-th sample of series recorded at `dt_s`.
pub fn write_series<S: AsRef<[f64]>>(path: &Path, ids: &[u32], series: &[S], dt_s: u32, every: usize) -> Result<()> {
    debug_assert_eq!(ids.len(), series.len());
    let len = series.iter().map(|s| s.as_ref().len()).max().unwrap_or(0);
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| CliError::io(path, e))?);
    let io = |e| CliError::io(path, e);
    writeln!(out, "time_s,node_id,value").map_err(io)?;
    for k in (0..len).step_by(every.max(1)) {
        let t = k as u64 * dt_s as u64;
        for (id, s) in ids.iter().zip(series) {
            if let Some(v) = s.as_ref().get(k) {
                writeln!(out, "{t},{id},{v}").map_err(io)?;
            }
        }
    }
    out.flush().map_err(io)
}

#[derive(Deserialize)]
struct SeriesRow {
    time_s: u64,
    node_id: u32,
    value: f64,
}

/// Reads a series file written by [`write_series`]; every node must have a
/// sample at every time on one regular grid starting at zero.
pub fn read_series(path: &Path) -> Result<SeriesTable> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut by_node: BTreeMap<u32, Vec<(u64, f64)>> = BTreeMap::new();
    for (i, row) in r.deserialize::<SeriesRow>().enumerate() {
        let row = row.map_err(|e| CliError::parse(path, format!("record {}: {e}", i + 1)))?;
        by_node.entry(row.node_id).or_default().push((row.time_s, row.value));
    }
    let first = by_node.values().next().ok_or_else(|| CliError::parse(path, "no samples"))?;
    let step = if first.len() > 1 { first[1].0 - first[0].0 } else { 1 };
    let n = first.len();
    let mut values = Vec::with_capacity(by_node.len());
    for (id, rows) in &by_node {
        let regular = rows.len() == n && rows.iter().enumerate().all(|(k, &(t, _))| t == k as u64 * step);
        if !regular || step == 0 {
            return Err(CliError::parse(path, format!("series for node {id} is not on a regular grid from t = 0")));
        }
        values.push(rows.iter().map(|&(_, v)| v).collect());
    }
    let step_s = u32::try_from(step).map_err(|_| CliError::parse(path, "time step too large"))?;
    Ok(SeriesTable { step_s, ids: by_node.into_keys().collect(), values })
}

/// `bus,V,P_L,Q_L` where the flows are those entering each bus; the root
/// row carries the power drawn from the source.
pub fn write_pf_debug(path: &Path, net: &Network, sol: &PowerFlowSolution) -> Result<()> {
    let mut feeding: BTreeMap<BusId, usize> = BTreeMap::new();
    for (k, b) in net.branches.iter().enumerate() {
        feeding.insert(b.to, k);
    }
    let (p0, q0) = net
        .branches
        .iter()
        .zip(&sol.branch_flow)
        .filter(|(b, _)| b.from == net.root)
        .fold((0.0, 0.0), |(p, q), (_, f)| (p + f.p, q + f.q));
    let mut w = csv_writer(path)?;
    w.write_record(["bus", "V", "P_L", "Q_L"]).map_err(|e| csv_error(path, e))?;
    for (id, v) in &sol.voltage {
        let (p, q) = match feeding.get(id) {
            Some(&k) => (sol.branch_flow[k].p, sol.branch_flow[k].q),
            None => (p0, q0),
        };
        w.write_record([id.0.to_string(), v.to_string(), p.to_string(), q.to_string()]).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Paths in a manifest are stored relative to its directory.
pub fn relative(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

pub fn resolve(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
