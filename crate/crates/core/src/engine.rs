//! Fixed-step co-simulation of household load, EV chargers and the feeder.
//!
//! Each step: chargers due for a decision act on the previous step's solved
//! state, injections are assembled, the power flow is solved, batteries are
//! integrated, and everything is recorded. Each charger decides at its own
//! plug-in time plus whole multiples of the algorithm period, so commands are
//! constant over every charger's own window.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::controllers::{
    aimd_next, caimd_decide, daimd_decide, droop_power, AimdParams, ControllerConfig, ControllerError,
    ControllerKind,
};
use crate::learning::{extract_training_set, LearningError, RegressionSample};
use crate::math::hypot;
use crate::metrics::{score_run, MetricsError, ScoreReport};
use crate::powerflow::{DistFlowSolver, PowerFlowError, SolverOptions};
use crate::scenario::{soc_update, Scenario, ScenarioError};
use crate::topology::{BusId, Network, TopologyError};

/// How a charger's command turns into drawn power.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvLoadModel {
    /// Commanded amps times the nominal charger voltage.
    ConstantPower,
    /// Commanded amps times the previous step's local voltage.
    ConstantCurrent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_s: u32,
    pub horizon_s: u32,
    pub controller: ControllerConfig,
    pub ev_model: EvLoadModel,
    /// Volts used to turn a current command into power.
    pub ev_voltage: f64,
    pub solver: SolverOptions,
    /// Seconds between recorded state-of-charge samples.
    pub soc_record_s: u32,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_s: 1,
            horizon_s: 28_800,
            controller: ControllerConfig::default(),
            ev_model: EvLoadModel::ConstantPower,
            ev_voltage: 240.0,
            solver: SolverOptions::default(),
            soc_record_s: 10,
        }
    }
}

impl SimConfig {
    pub fn with_controller(kind: ControllerKind) -> Self {
        let mut cfg = Self::default();
        cfg.controller.controller = kind;
        cfg
    }

    pub fn check(&self) -> Result<(), SimError> {
        let bad = |field, reason| Err(SimError::InvalidConfig { field, reason });
        self.controller.params().check()?;
        self.controller.droop.check()?;
        if self.dt_s == 0 || self.horizon_s == 0 || !self.horizon_s.is_multiple_of(self.dt_s) {
            return bad("horizon_s", "must be a positive multiple of dt_s");
        }
        if !self.controller.t_a_s.is_multiple_of(self.dt_s) {
            return bad("t_a_s", "must be a multiple of dt_s");
        }
        if self.soc_record_s == 0 || !self.soc_record_s.is_multiple_of(self.dt_s) {
            return bad("soc_record_s", "must be a positive multiple of dt_s");
        }
        if !(self.ev_voltage > 0.0 && self.ev_voltage.is_finite()) {
            return bad("ev_voltage", "must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid simulation config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("power flow failed at t = {t_s} s: {source}")]
    PowerFlow { t_s: u32, source: PowerFlowError },
    #[error("no trained threshold for EV node {0}")]
    MissingThreshold(BusId),
    #[error("scenario horizon {scenario} s differs from configured horizon {config} s")]
    HorizonMismatch { scenario: u32, config: u32 },
    #[error("results come from different scenarios or networks")]
    IncompatibleRuns,
    #[error("no results to compare")]
    NothingToCompare,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Learning(#[from] LearningError),
    #[error("node {0} is not recorded")]
    UnknownNode(BusId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub controller: ControllerKind,
    pub dt_s: u32,
    pub horizon_s: u32,
    pub t_a_s: u32,
    pub v_min: f64,
    /// Fingerprints of the inputs, used to refuse mixed comparisons.
    pub scenario_key: u64,
    pub network_key: u64,
    /// Service buses; index `h` of `voltage` belongs to `houses[h]`.
    pub houses: Vec<BusId>,
    /// Volts per house per step.
    pub voltage: Vec<Vec<f64>>,
    /// VA at the substation per step.
    pub substation: Vec<f64>,
    pub substation_rating: f64,
    /// VA entering each distribution transformer per step.
    pub transformer: Vec<Vec<f64>>,
    pub transformer_ratings: Vec<f64>,
    /// Neighborhood label per transformer.
    pub transformer_groups: Vec<usize>,
    pub ev_ids: Vec<u32>,
    pub ev_houses: Vec<BusId>,
    pub ev_arrival_s: Vec<u32>,
    pub ev_departure_s: Vec<u32>,
    /// Step at which each battery filled, as seconds from start.
    pub ev_full_s: Vec<Option<u32>>,
    /// Commanded amps per EV per step.
    pub ev_current: Vec<Vec<f64>>,
    /// Watts drawn per EV per step.
    pub ev_power: Vec<Vec<f64>>,
    pub soc_record_s: u32,
    /// State of charge per EV every `soc_record_s`.
    pub ev_soc: Vec<Vec<f64>>,
    /// Substation-to-charger information exchanges.
    pub comm_events: u64,
    pub max_pf_iterations: u32,
    /// Seconds of wall clock, filled in by callers that time the run.
    pub wall_time_s: Option<f64>,
}

impl SimResult {
    pub fn steps(&self) -> usize {
        self.substation.len()
    }

    /// End of each EV's charging interval: full time or departure.
    pub fn charge_end_s(&self, ev: usize) -> u32 {
        match self.ev_full_s[ev] {
            Some(t) if t < self.ev_departure_s[ev] => t,
            _ => self.ev_departure_s[ev],
        }
    }

    pub fn scores(&self) -> Result<ScoreReport, MetricsError> {
        score_run(self)
    }
}

/// Node voltages and substation power of a run without EVs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecording {
    pub dt_s: u32,
    pub scenario_key: u64,
    pub network_key: u64,
    pub houses: Vec<BusId>,
    pub voltage: Vec<Vec<f64>>,
    pub substation: Vec<f64>,
    pub substation_rating: f64,
}

impl BaselineRecording {
    pub fn training_set(&self, node: BusId, sampling_s: u32) -> Result<Vec<RegressionSample>, SimError> {
        let h = self.houses.iter().position(|&b| b == node).ok_or(SimError::UnknownNode(node))?;
        Ok(extract_training_set(&self.voltage[h], &self.substation, self.dt_s, sampling_s)?)
    }
}

struct Ev {
    house_idx: usize,
    bus: usize,
    arrival: u32,
    departure: u32,
    capacity_wh: f64,
    charger_w: f64,
    current: f64,
    soc: f64,
    full_at: Option<u32>,
    v_th: f64,
}

/// Runs one controller over the whole scenario. `thresholds` maps EV nodes to
/// trained trigger voltages and is required only by the local-threshold AIMD.
pub fn run(
    net: &Network,
    scen: &Scenario,
    cfg: &SimConfig,
    thresholds: Option<&BTreeMap<BusId, f64>>,
) -> Result<SimResult, SimError> {
    cfg.check()?;
    scen.validate(net)?;
    if scen.horizon_s != cfg.horizon_s {
        return Err(SimError::HorizonMismatch { scenario: scen.horizon_s, config: cfg.horizon_s });
    }
    let kind = cfg.controller.controller;
    let params: AimdParams = cfg.controller.params();
    let droop = cfg.controller.droop;

    let mut solver = DistFlowSolver::new(net)?;
    let houses = net.houses();
    let house_pos: BTreeMap<BusId, usize> = houses.iter().enumerate().map(|(h, &b)| (b, h)).collect();
    let house_bus: Vec<usize> = houses.iter().map(|&b| solver.index_of(b).ok_or(TopologyError::UnknownBus(b))).collect::<Result<_, _>>()?;
    let profile_bus: Vec<usize> =
        scen.profiles.iter().map(|p| solver.index_of(p.house).ok_or(TopologyError::UnknownBus(p.house))).collect::<Result<_, _>>()?;
    let xf = net.transformers();
    let transformer_ratings: Vec<f64> = xf.iter().map(|&k| net.branches[k].rating.unwrap_or(0.0)).collect();
    let rating = net.substation_rating;
    let root = net.bus(net.root).ok_or(TopologyError::MissingRoot)?;
    let source = root.nominal_voltage * scen.source_voltage_pu;

    let mut evs = Vec::with_capacity(scen.evs.len());
    for spec in &scen.evs {
        let v_th = if kind == ControllerKind::DAimd {
            *thresholds.and_then(|t| t.get(&spec.house)).ok_or(SimError::MissingThreshold(spec.house))?
        } else {
            0.0
        };
        evs.push(Ev {
            house_idx: house_pos[&spec.house],
            bus: solver.index_of(spec.house).ok_or(TopologyError::UnknownBus(spec.house))?,
            arrival: spec.arrival_s,
            departure: spec.departure(scen.horizon_s),
            capacity_wh: spec.battery_capacity_wh,
            charger_w: spec.charger_rating_w,
            current: 0.0,
            soc: spec.initial_soc,
            full_at: None,
            v_th,
        });
    }

    let dt = cfg.dt_s;
    let steps = (cfg.horizon_s / dt) as usize;
    let n_bus = solver.bus_count();
    let mut p = vec![0.0; n_bus];
    let mut q = vec![0.0; n_bus];
    let mut max_iter = 0;
    let mut drawn = vec![0.0; evs.len()];

    let mut voltage = vec![Vec::with_capacity(steps); houses.len()];
    let mut substation = Vec::with_capacity(steps);
    let mut transformer = vec![Vec::with_capacity(steps); xf.len()];
    let mut ev_current = vec![Vec::with_capacity(steps); evs.len()];
    let mut ev_power = vec![Vec::with_capacity(steps); evs.len()];
    let soc_every = (cfg.soc_record_s / dt) as usize;
    let mut ev_soc = vec![Vec::with_capacity(steps / soc_every + 1); evs.len()];

    // Measurements the chargers see: the solved state of the previous step,
    // seeded by the household-only state at t = 0.
    let mut prev_v = vec![0.0; houses.len()];
    let mut prev_s;
    {
        assemble_households(scen, &profile_bus, 0, &mut p, &mut q);
        let stats = solver.solve(&p, &q, source, &cfg.solver).map_err(|source| SimError::PowerFlow { t_s: 0, source })?;
        max_iter = max_iter.max(stats.iterations);
        for (h, &b) in house_bus.iter().enumerate() {
            prev_v[h] = solver.voltage(b);
        }
        prev_s = solver.substation_apparent();
    }

    for step in 0..steps {
        let t = step as u32 * dt;
        for ev in evs.iter_mut() {
            let plugged = t >= ev.arrival && t < ev.departure;
            if !plugged || ev.full_at.is_some() {
                ev.current = 0.0;
                continue;
            }
            if kind == ControllerKind::NoControl {
                ev.current = params.i_max;
                continue;
            }
            if !(t - ev.arrival).is_multiple_of(params.t_a_s) {
                continue;
            }
            if t == ev.arrival {
                ev.current = params.i_init;
            }
            let v = prev_v[ev.house_idx];
            ev.current = match kind {
                ControllerKind::Droop => (droop_power(v, &droop) / cfg.ev_voltage).min(params.i_max),
                ControllerKind::CAimd => aimd_next(ev.current, caimd_decide(prev_s, rating, t).congested, &params),
                ControllerKind::DAimd => aimd_next(ev.current, daimd_decide(v, ev.v_th, params.v_min), &params),
                ControllerKind::NoControl => unreachable!(),
            };
        }

        assemble_households(scen, &profile_bus, t, &mut p, &mut q);
        for (ev, d) in evs.iter().zip(drawn.iter_mut()) {
            let volts = match cfg.ev_model {
                EvLoadModel::ConstantPower => cfg.ev_voltage,
                EvLoadModel::ConstantCurrent => prev_v[ev.house_idx],
            };
            let w = (volts * ev.current).min(ev.charger_w);
            p[ev.bus] += w;
            *d = w;
        }

        let stats = solver.solve(&p, &q, source, &cfg.solver).map_err(|source| SimError::PowerFlow { t_s: t, source })?;
        max_iter = max_iter.max(stats.iterations);

        for (h, &b) in house_bus.iter().enumerate() {
            let v = solver.voltage(b);
            voltage[h].push(v);
            prev_v[h] = v;
        }
        prev_s = solver.substation_apparent();
        substation.push(prev_s);
        for (series, &k) in transformer.iter_mut().zip(&xf) {
            let f = solver.branch_flow(k);
            series.push(hypot(f.p, f.q));
        }

        for (i, ev) in evs.iter_mut().enumerate() {
            ev_current[i].push(ev.current);
            ev_power[i].push(drawn[i]);
            if drawn[i] > 0.0 {
                ev.soc = soc_update(ev.soc, drawn[i], dt as f64, ev.capacity_wh);
                if ev.soc >= 1.0 && ev.full_at.is_none() {
                    ev.full_at = Some(t + dt);
                }
            }
            if step % soc_every == 0 {
                ev_soc[i].push(ev.soc);
            }
        }
    }

    let comm_events = match kind {
        _ if evs.is_empty() => 0,
        ControllerKind::CAimd => (cfg.horizon_s / params.t_a_s) as u64,
        ControllerKind::DAimd => 1,
        ControllerKind::NoControl | ControllerKind::Droop => 0,
    };

    Ok(SimResult {
        controller: kind,
        dt_s: dt,
        horizon_s: cfg.horizon_s,
        t_a_s: params.t_a_s,
        v_min: params.v_min,
        scenario_key: scenario_key(scen),
        network_key: network_key(net),
        houses,
        voltage,
        substation,
        substation_rating: rating,
        transformer,
        transformer_ratings,
        transformer_groups: net.transformer_groups(),
        ev_ids: scen.evs.iter().map(|e| e.id).collect(),
        ev_houses: scen.evs.iter().map(|e| e.house).collect(),
        ev_arrival_s: evs.iter().map(|e| e.arrival).collect(),
        ev_departure_s: evs.iter().map(|e| e.departure).collect(),
        ev_full_s: evs.iter().map(|e| e.full_at).collect(),
        ev_current,
        ev_power,
        soc_record_s: cfg.soc_record_s,
        ev_soc,
        comm_events,
        max_pf_iterations: max_iter,
        wall_time_s: None,
    })
}

fn assemble_households(scen: &Scenario, profile_bus: &[usize], t: u32, p: &mut [f64], q: &mut [f64]) {
    p.iter_mut().for_each(|v| *v = 0.0);
    q.iter_mut().for_each(|v| *v = 0.0);
    for (prof, &b) in scen.profiles.iter().zip(profile_bus) {
        let (pw, qv) = prof.load_at(t);
        p[b] += pw;
        q[b] += qv;
    }
}

/// Runs the scenario with its fleet removed and keeps what training needs.
pub fn run_baseline(net: &Network, scen: &Scenario, cfg: &SimConfig) -> Result<BaselineRecording, SimError> {
    let mut base = scen.clone();
    base.evs.clear();
    base.ev_penetration = 0.0;
    let mut cfg = cfg.clone();
    cfg.controller.controller = ControllerKind::NoControl;
    let r = run(net, &base, &cfg, None)?;
    Ok(BaselineRecording {
        dt_s: r.dt_s,
        scenario_key: r.scenario_key,
        network_key: r.network_key,
        houses: r.houses,
        voltage: r.voltage,
        substation: r.substation,
        substation_rating: r.substation_rating,
    })
}

/// FNV-1a over a stream of 64-bit words.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }

    fn word(&mut self, w: u64) {
        for b in w.to_le_bytes() {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn float(&mut self, x: f64) {
        self.word(x.to_bits());
    }
}

/// Fingerprint of everything in a scenario that affects a run.
pub fn scenario_key(scen: &Scenario) -> u64 {
    let mut h = Fnv::new();
    h.word(scen.seed);
    h.word(scen.horizon_s as u64);
    h.float(scen.ev_penetration);
    h.float(scen.source_voltage_pu);
    h.float(scen.load_scale);
    for p in &scen.profiles {
        h.word(p.house.0 as u64);
        h.float(p.power_factor);
        h.word(p.power_w.len() as u64);
        p.power_w.iter().for_each(|&w| h.float(w));
    }
    for e in &scen.evs {
        h.word(e.id as u64);
        h.word(e.house.0 as u64);
        h.float(e.battery_capacity_wh);
        h.float(e.charger_rating_w);
        h.float(e.max_current_a);
        h.word(e.arrival_s as u64);
        h.word(e.departure_s.map_or(u64::MAX, |d| d as u64));
        h.float(e.initial_soc);
    }
    h.0
}

pub fn network_key(net: &Network) -> u64 {
    let mut h = Fnv::new();
    h.word(net.root.0 as u64);
    h.float(net.substation_rating);
    for b in &net.buses {
        h.word(b.id.0 as u64);
        h.word(b.kind as u64);
        h.float(b.nominal_voltage);
    }
    for br in &net.branches {
        h.word(br.from.0 as u64);
        h.word(br.to.0 as u64);
        h.float(br.resistance);
        h.float(br.reactance);
        h.word(br.kind as u64);
        h.float(br.rating.unwrap_or(-1.0));
    }
    h.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ScoreReport>,
}

pub const TABLE_HEADER: [&str; 8] = ["algorithm", "vvs_vs", "gcs_mvah", "lcs_kvah", "cus_pct", "acps_kw", "fs", "cos"];

impl ComparisonTable {
    /// Rows in controller order; refuses reports from different inputs.
    pub fn from_reports(mut rows: Vec<ScoreReport>) -> Result<Self, SimError> {
        let first = rows.first().ok_or(SimError::NothingToCompare)?;
        let key = (first.scenario_key, first.network_key);
        if rows.iter().any(|r| (r.scenario_key, r.network_key) != key) {
            return Err(SimError::IncompatibleRuns);
        }
        rows.sort_by_key(|r| r.algorithm);
        Ok(Self { rows })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(&TABLE_HEADER.join(","));
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.algorithm.label(),
                r.vvs,
                r.gcs,
                r.lcs,
                r.cus,
                r.acps,
                r.fs,
                r.cos
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<[String; 8]> = self
            .rows
            .iter()
            .map(|r| {
                let mut c: [String; 8] = Default::default();
                c[0] = String::from(r.algorithm.label());
                let _ = write!(c[1], "{:.2}", r.vvs);
                let _ = write!(c[2], "{:.4}", r.gcs);
                let _ = write!(c[3], "{:.3}", r.lcs);
                let _ = write!(c[4], "{:.2}", r.cus);
                let _ = write!(c[5], "{:.3}", r.acps);
                let _ = write!(c[6], "{:.4}", r.fs);
                let _ = write!(c[7], "{}", r.cos);
                c
            })
            .collect();
        let mut width = TABLE_HEADER.map(str::len);
        for row in &cells {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, row: [&str; 8]| {
            for (i, c) in row.iter().enumerate() {
                if i == 0 {
                    let _ = write!(s, "{:<w$}", c, w = width[i]);
                } else {
                    let _ = write!(s, "  {:>w$}", c, w = width[i]);
                }
            }
            s.push('\n');
        };
        line(&mut s, TABLE_HEADER);
        for row in &cells {
            line(&mut s, core::array::from_fn(|i| row[i].as_str()));
        }
        s
    }
}

/// Scores several runs of the same inputs side by side.
pub fn compare(results: &[&SimResult]) -> Result<ComparisonTable, SimError> {
    let reports = results.iter().map(|r| score_run(r)).collect::<Result<Vec<_>, _>>()?;
    ComparisonTable::from_reports(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, ScenarioConfig};
    use crate::topology::{build_synthetic_feeder, FeederConfig};

    fn small() -> (Network, Scenario) {
        let fc = FeederConfig { neighborhoods: 2, transformers_per_neighborhood: 2, houses_per_transformer: 2, ..FeederConfig::default() };
        let net = build_synthetic_feeder(&fc).unwrap();
        let mut sc = ScenarioConfig { calibrate: false, horizon_s: 1200, ..ScenarioConfig::default() };
        sc.fleet.arrival_mean_s = 100.0;
        sc.fleet.arrival_std_s = 50.0;
        sc.fleet.arrival_latest_s = 600;
        let scen = generate_scenario(&net, 1, &sc, 1.0).unwrap();
        (net, scen)
    }

    fn cfg(kind: ControllerKind, horizon: u32) -> SimConfig {
        SimConfig { horizon_s: horizon, ..SimConfig::with_controller(kind) }
    }

    #[test]
    fn empty_fleet_makes_controllers_idle() {
        let (net, mut scen) = small();
        scen.evs.clear();
        let th: BTreeMap<BusId, f64> = net.houses().into_iter().map(|h| (h, 230.0)).collect();
        let base = run(&net, &scen, &cfg(ControllerKind::NoControl, 1200), None).unwrap();
        for kind in ControllerKind::ALL {
            let r = run(&net, &scen, &cfg(kind, 1200), Some(&th)).unwrap();
            assert_eq!(r.voltage, base.voltage);
            assert_eq!(r.substation, base.substation);
            assert_eq!(r.comm_events, 0);
        }
    }

    #[test]
    fn communication_counts() {
        let (net, scen) = small();
        let th: BTreeMap<BusId, f64> = net.houses().into_iter().map(|h| (h, 200.0)).collect();
        let count = |k| run(&net, &scen, &cfg(k, 1200), Some(&th)).unwrap().comm_events;
        assert_eq!(count(ControllerKind::NoControl), 0);
        assert_eq!(count(ControllerKind::Droop), 0);
        assert_eq!(count(ControllerKind::DAimd), 1);
        assert_eq!(count(ControllerKind::CAimd), 120);
    }

    #[test]
    fn missing_threshold_rejected() {
        let (net, scen) = small();
        let err = run(&net, &scen, &cfg(ControllerKind::DAimd, 1200), None).unwrap_err();
        assert!(matches!(err, SimError::MissingThreshold(_)));
    }

    #[test]
    fn commands_hold_within_each_window() {
        let (net, scen) = small();
        let r = run(&net, &scen, &cfg(ControllerKind::CAimd, 1200), None).unwrap();
        for (i, series) in r.ev_current.iter().enumerate() {
            let a = r.ev_arrival_s[i] as usize;
            for t in a + 1..series.len() {
                if !(t - a).is_multiple_of(10) && r.ev_full_s[i].is_none_or(|f| (t as u32) < f) {
                    assert_eq!(series[t], series[t - 1], "ev {i} t {t}");
                }
            }
            assert!(series.iter().all(|&c| (0.0..=41.0).contains(&c)));
        }
    }

    #[test]
    fn fixed_current_and_monotone_charge() {
        let (net, scen) = small();
        let r = run(&net, &scen, &cfg(ControllerKind::NoControl, 1200), None).unwrap();
        let max = r.ev_current.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
        assert_eq!(max, 41.0);
        for s in &r.ev_soc {
            assert!(s.windows(2).all(|w| w[1] >= w[0]));
        }
        assert!(r.ev_power.iter().flatten().all(|&w| w <= 10_000.0));
    }

    #[test]
    fn households_change_on_minute_boundaries() {
        let (net, mut scen) = small();
        scen.evs.clear();
        let r = run(&net, &scen, &cfg(ControllerKind::NoControl, 1200), None).unwrap();
        for t in 1..r.substation.len() {
            if t % 60 != 0 {
                assert_eq!(r.substation[t], r.substation[t - 1]);
            }
        }
    }

    #[test]
    fn repeat_runs_identical() {
        let (net, scen) = small();
        let a = run(&net, &scen, &cfg(ControllerKind::Droop, 1200), None).unwrap();
        let b = run(&net, &scen, &cfg(ControllerKind::Droop, 1200), None).unwrap();
        assert_eq!(a, b);
        let base = run_baseline(&net, &scen, &cfg(ControllerKind::CAimd, 1200)).unwrap();
        assert_eq!(base, run_baseline(&net, &scen, &cfg(ControllerKind::CAimd, 1200)).unwrap());
        assert_eq!(base.training_set(net.houses()[0], 60).unwrap().len(), 20);
    }

    #[test]
    fn comparison_orders_and_refuses_mixed_inputs() {
        let (net, scen) = small();
        let a = run(&net, &scen, &cfg(ControllerKind::Droop, 1200), None).unwrap();
        let b = run(&net, &scen, &cfg(ControllerKind::NoControl, 1200), None).unwrap();
        let t = compare(&[&a, &b]).unwrap();
        assert_eq!(t.rows[0].algorithm, ControllerKind::NoControl);
        assert_eq!(t.rows[1].algorithm, ControllerKind::Droop);
        assert!(t.to_csv().starts_with("algorithm,vvs_vs,gcs_mvah,lcs_kvah,cus_pct,acps_kw,fs,cos\n"));
        assert_eq!(t.to_text().lines().count(), 3);
        let same = compare(&[&a, &a]).unwrap();
        assert_eq!(same.rows[0], same.rows[1]);

        let mut other = scen.clone();
        other.seed += 1;
        let c = run(&net, &other, &cfg(ControllerKind::CAimd, 1200), None).unwrap();
        assert_eq!(compare(&[&a, &c]), Err(SimError::IncompatibleRuns));
    }
}
