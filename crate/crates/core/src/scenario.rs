//! Seeded household load and EV fleet synthesis, shared unchanged by every
//! controller run.
//!
//! Household draws and fleet draws come from separate ChaCha streams of the
//! same seed, so a 0% penetration scenario carries exactly the household
//! profiles of the 100% scenario with the same seed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::math::{q_over_p, round};
use crate::powerflow::{DistFlowSolver, PowerFlowError, SolverOptions};
use crate::topology::{BusId, Network, TopologyError};

const HOUSEHOLD_STREAM: u64 = 1;
const FLEET_STREAM: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdProfile {
    pub house: BusId,
    /// Watts, one value per simulated minute.
    pub power_w: Vec<f64>,
    /// Lagging.
    pub power_factor: f64,
}

impl HouseholdProfile {
    /// (watts, vars) drawn during second `t`.
    pub fn load_at(&self, t: u32) -> (f64, f64) {
        let m = ((t / 60) as usize).min(self.power_w.len().saturating_sub(1));
        let p = self.power_w.get(m).copied().unwrap_or(0.0);
        (p, p * q_over_p(self.power_factor))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvSpec {
    pub id: u32,
    pub house: BusId,
    pub battery_capacity_wh: f64,
    pub charger_rating_w: f64,
    pub max_current_a: f64,
    /// Seconds from simulation start.
    pub arrival_s: u32,
    /// Seconds from simulation start; `None` means the end of the horizon.
    pub departure_s: Option<u32>,
    pub initial_soc: f64,
}

impl EvSpec {
    pub fn departure(&self, horizon_s: u32) -> u32 {
        self.departure_s.unwrap_or(horizon_s)
    }

    pub fn is_plugged(&self, t: u32, horizon_s: u32) -> bool {
        t >= self.arrival_s && t < self.departure(horizon_s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub horizon_s: u32,
    pub ev_penetration: f64,
    /// Regulated voltage at the feeder root, per unit of its nominal.
    pub source_voltage_pu: f64,
    /// Factor applied to the raw draws to reach the calibration target.
    pub load_scale: f64,
    pub profiles: Vec<HouseholdProfile>,
    pub evs: Vec<EvSpec>,
}

/// A knot of the piecewise-linear daily shape.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeKnot {
    /// Minutes from simulation start.
    pub minute: f64,
    pub mean_w: f64,
    pub std_w: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FleetConfig {
    pub battery_capacity_wh: f64,
    pub charger_rating_w: f64,
    pub max_current_a: f64,
    pub arrival_mean_s: f64,
    pub arrival_std_s: f64,
    pub arrival_earliest_s: u32,
    pub arrival_latest_s: u32,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for FleetConfig {
    fn default() -> Self {
        Self {
            battery_capacity_wh: 72_000.0,
            charger_rating_w: 10_000.0,
            max_current_a: 41.0,
            arrival_mean_s: 7_200.0,
            arrival_std_s: 5_400.0,
            arrival_earliest_s: 0,
            arrival_latest_s: 21_600,
            soc_min: 0.2,
            soc_max: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub horizon_s: u32,
    pub power_factor: f64,
    /// Sorted by minute; held flat outside the first and last knot.
    pub shape: Vec<ShapeKnot>,
    /// When false, draws are used as-is.
    pub calibrate: bool,
    /// Substation apparent power of the no-EV peak, VA.
    pub target_peak_va: f64,
    pub peak_band_va: (f64, f64),
    pub source_voltage_pu: f64,
    pub fleet: FleetConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        // Relative evening shape from 16:00; absolute level comes from calibration.
        let rel = [
            (0.0, 0.35),
            (60.0, 0.45),
            (120.0, 0.62),
            (180.0, 0.85),
            (225.0, 0.97),
            (240.0, 1.00),
            (270.0, 0.97),
            (330.0, 0.85),
            (390.0, 0.68),
            (450.0, 0.52),
            (480.0, 0.45),
        ];
        let shape = rel
            .iter()
            .map(|&(minute, m)| ShapeKnot { minute, mean_w: 3_000.0 * m, std_w: 450.0 * m })
            .collect();
        Self {
            horizon_s: 28_800,
            power_factor: 0.9,
            shape,
            calibrate: true,
            target_peak_va: 1.36e6,
            peak_band_va: (1.30e6, 1.45e6),
            source_voltage_pu: 1.0,
            fleet: FleetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("invalid scenario config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("power flow failed during calibration: {0}")]
    PowerFlow(#[from] PowerFlowError),
    #[error("calibrated no-EV peak {peak_va:.0} VA is outside [{low:.0}, {high:.0}] VA")]
    Calibration { peak_va: f64, low: f64, high: f64 },
    #[error("profile for house {house} is missing minute {minute}")]
    Gap { house: BusId, minute: u32 },
    #[error("duplicate record for house {house} at minute {minute}")]
    Duplicate { house: BusId, minute: u32 },
    #[error("negative power {power_w} W for house {house} at minute {minute}")]
    NegativePower { house: BusId, minute: u32, power_w: f64 },
    #[error("house {0} is not a service bus of the network")]
    UnknownHouse(BusId),
    #[error("scenario does not match the network: {0}")]
    Mismatch(&'static str),
    #[error("invalid EV {id}: {reason}")]
    InvalidEv { id: u32, reason: &'static str },
}

impl ScenarioConfig {
    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |field, reason| Err(ScenarioError::InvalidConfig { field, reason });
        if self.horizon_s == 0 || !self.horizon_s.is_multiple_of(60) {
            return bad("horizon_s", "must be a positive whole number of minutes");
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return bad("power_factor", "must lie in (0, 1]");
        }
        if self.shape.is_empty() {
            return bad("shape", "needs at least one knot");
        }
        if self.shape.windows(2).any(|w| !(w[0].minute < w[1].minute)) {
            return bad("shape", "knot minutes must increase");
        }
        if self.shape.iter().any(|k| !(k.mean_w >= 0.0 && k.std_w >= 0.0 && k.minute.is_finite())) {
            return bad("shape", "means and deviations must be finite and non-negative");
        }
        if self.calibrate {
            let (lo, hi) = self.peak_band_va;
            if !(self.target_peak_va > 0.0 && lo <= self.target_peak_va && self.target_peak_va <= hi) {
                return bad("target_peak_va", "must be positive and inside peak_band_va");
            }
        }
        if !(self.source_voltage_pu > 0.5 && self.source_voltage_pu < 1.5) {
            return bad("source_voltage_pu", "must lie in (0.5, 1.5)");
        }
        let f = &self.fleet;
        if !(f.battery_capacity_wh > 0.0 && f.charger_rating_w > 0.0 && f.max_current_a > 0.0) {
            return bad("fleet", "battery, charger and current ratings must be positive");
        }
        if !(f.arrival_std_s >= 0.0) || f.arrival_earliest_s > f.arrival_latest_s || f.arrival_latest_s >= self.horizon_s {
            return bad("fleet", "arrival window must be ordered and end before the horizon");
        }
        if !(0.0 <= f.soc_min && f.soc_min <= f.soc_max && f.soc_max < 1.0) {
            return bad("fleet", "initial state of charge range must satisfy 0 <= min <= max < 1");
        }
        Ok(())
    }

    /// Mean and deviation of the shape at `minute`.
    pub fn shape_at(&self, minute: f64) -> (f64, f64) {
        let k = &self.shape;
        if minute <= k[0].minute {
            return (k[0].mean_w, k[0].std_w);
        }
        for w in k.windows(2) {
            if minute <= w[1].minute {
                let s = (minute - w[0].minute) / (w[1].minute - w[0].minute);
                return (w[0].mean_w + s * (w[1].mean_w - w[0].mean_w), w[0].std_w + s * (w[1].std_w - w[0].std_w));
            }
        }
        let last = k[k.len() - 1];
        (last.mean_w, last.std_w)
    }
}

/// State of charge after drawing `power_w` for `dt_s` seconds, lossless.
pub fn soc_update(soc: f64, power_w: f64, dt_s: f64, capacity_wh: f64) -> f64 {
    let next = soc + power_w * dt_s / 3600.0 / capacity_wh;
    if next > 1.0 {
        1.0
    } else {
        next
    }
}

pub fn generate_scenario(net: &Network, seed: u64, cfg: &ScenarioConfig, penetration: f64) -> Result<Scenario, ScenarioError> {
    cfg.check()?;
    if !(0.0..=1.0).contains(&penetration) {
        return Err(ScenarioError::InvalidConfig { field: "penetration", reason: "must lie in [0, 1]" });
    }
    let houses = net.houses();
    if houses.is_empty() {
        return Err(ScenarioError::Mismatch("network has no service buses"));
    }
    let minutes = (cfg.horizon_s / 60) as usize;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(HOUSEHOLD_STREAM);
    let mut profiles: Vec<HouseholdProfile> = houses
        .iter()
        .map(|&house| HouseholdProfile { house, power_w: vec![0.0; minutes], power_factor: cfg.power_factor })
        .collect();
    // Minute-major order keeps each minute's draws independent of the horizon length.
    for m in 0..minutes {
        let (mean, std) = cfg.shape_at(m as f64);
        for prof in profiles.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            let p = mean + std * z;
            prof.power_w[m] = if p > 0.0 { p } else { 0.0 };
        }
    }

    let mut scenario = Scenario {
        seed,
        horizon_s: cfg.horizon_s,
        ev_penetration: penetration,
        source_voltage_pu: cfg.source_voltage_pu,
        load_scale: 1.0,
        profiles,
        evs: generate_fleet(&houses, seed, cfg, penetration)?,
    };
    if cfg.calibrate {
        calibrate(net, &mut scenario, cfg)?;
    }
    Ok(scenario)
}

fn generate_fleet(houses: &[BusId], seed: u64, cfg: &ScenarioConfig, penetration: f64) -> Result<Vec<EvSpec>, ScenarioError> {
    let f = &cfg.fleet;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(FLEET_STREAM);
    let mut order: Vec<BusId> = houses.to_vec();
    order.shuffle(&mut rng);
    let count = round(penetration * houses.len() as f64) as usize;
    order.truncate(count);
    order.sort();

    let arrival = Normal::new(f.arrival_mean_s, f.arrival_std_s)
        .map_err(|_| ScenarioError::InvalidConfig { field: "fleet", reason: "bad arrival distribution" })?;
    let (lo, hi) = (f.arrival_earliest_s as f64, f.arrival_latest_s as f64);
    let mut evs = Vec::with_capacity(order.len());
    for (id, house) in order.into_iter().enumerate() {
        let mut t = arrival.sample(&mut rng);
        let mut tries = 0;
        while !(lo..=hi).contains(&t) {
            tries += 1;
            t = if tries > 10_000 { f.arrival_mean_s.clamp(lo, hi) } else { arrival.sample(&mut rng) };
        }
        let soc = if f.soc_max > f.soc_min { rng.random_range(f.soc_min..f.soc_max) } else { f.soc_min };
        evs.push(EvSpec {
            id: id as u32,
            house,
            battery_capacity_wh: f.battery_capacity_wh,
            charger_rating_w: f.charger_rating_w,
            max_current_a: f.max_current_a,
            arrival_s: (round(t) as u32).clamp(f.arrival_earliest_s, f.arrival_latest_s),
            departure_s: None,
            initial_soc: soc,
        });
    }
    Ok(evs)
}

/// Substation apparent power of the household load alone, per minute.
pub fn base_substation_profile(net: &Network, scenario: &Scenario) -> Result<Vec<f64>, ScenarioError> {
    let mut solver = DistFlowSolver::new(net)?;
    let mut eval = MinuteEvaluator::new(net, &solver, scenario)?;
    let minutes = (scenario.horizon_s / 60) as usize;
    (0..minutes).map(|m| eval.apparent(&mut solver, scenario, m, 1.0)).collect()
}

struct MinuteEvaluator {
    bus_of_profile: Vec<usize>,
    p: Vec<f64>,
    q: Vec<f64>,
    source: f64,
    opts: SolverOptions,
}

impl MinuteEvaluator {
    fn new(net: &Network, solver: &DistFlowSolver, scenario: &Scenario) -> Result<Self, ScenarioError> {
        let bus_of_profile = scenario
            .profiles
            .iter()
            .map(|p| solver.index_of(p.house).ok_or(ScenarioError::UnknownHouse(p.house)))
            .collect::<Result<_, _>>()?;
        let root = net.bus(net.root).ok_or(TopologyError::MissingRoot)?;
        Ok(Self {
            bus_of_profile,
            p: vec![0.0; solver.bus_count()],
            q: vec![0.0; solver.bus_count()],
            source: root.nominal_voltage * scenario.source_voltage_pu,
            opts: SolverOptions::default(),
        })
    }

    fn apparent(&mut self, solver: &mut DistFlowSolver, scenario: &Scenario, minute: usize, scale: f64) -> Result<f64, ScenarioError> {
        self.p.iter_mut().for_each(|v| *v = 0.0);
        self.q.iter_mut().for_each(|v| *v = 0.0);
        for (prof, &i) in scenario.profiles.iter().zip(&self.bus_of_profile) {
            let (p, q) = prof.load_at(minute as u32 * 60);
            self.p[i] += scale * p;
            self.q[i] += scale * q;
        }
        solver.solve(&self.p, &self.q, self.source, &self.opts)?;
        Ok(solver.substation_apparent())
    }
}

// Finds the scale whose worst minute hits the target: secant iteration on the
// current peak minute, re-checked against the whole horizon.
fn calibrate(net: &Network, scenario: &mut Scenario, cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let mut solver = DistFlowSolver::new(net)?;
    let mut eval = MinuteEvaluator::new(net, &solver, scenario)?;
    let minutes = (scenario.horizon_s / 60) as usize;
    let target = cfg.target_peak_va;

    let mut scale = 1.0;
    let mut peak_minute = 0;
    let mut peak = 0.0;
    for _round in 0..6 {
        let mut best = (0usize, f64::NEG_INFINITY);
        for m in 0..minutes {
            let s = eval.apparent(&mut solver, scenario, m, scale)?;
            if s > best.1 {
                best = (m, s);
            }
        }
        peak_minute = best.0;
        peak = best.1;
        if peak <= 0.0 {
            return Err(ScenarioError::Calibration { peak_va: peak, low: cfg.peak_band_va.0, high: cfg.peak_band_va.1 });
        }
        if ((peak - target) / target).abs() < 1e-9 {
            break;
        }
        let (mut k0, mut s0) = (scale, peak);
        let mut k1 = scale * target / peak;
        for _ in 0..50 {
            let s1 = eval.apparent(&mut solver, scenario, peak_minute, k1)?;
            if ((s1 - target) / target).abs() < 1e-12 || s1 == s0 {
                break;
            }
            let k2 = k1 + (target - s1) * (k1 - k0) / (s1 - s0);
            k0 = k1;
            s0 = s1;
            k1 = if k2 > 0.0 { k2 } else { 0.5 * k1 };
        }
        scale = k1;
    }
    let _ = peak_minute;
    for prof in scenario.profiles.iter_mut() {
        prof.power_w.iter_mut().for_each(|p| *p *= scale);
    }
    scenario.load_scale = scale;
    let (lo, hi) = cfg.peak_band_va;
    if !(lo..=hi).contains(&peak) {
        return Err(ScenarioError::Calibration { peak_va: peak, low: lo, high: hi });
    }
    Ok(())
}

impl Scenario {
    pub fn minutes(&self) -> usize {
        (self.horizon_s / 60) as usize
    }

    /// Checks internal invariants and agreement with the network's houses.
    pub fn validate(&self, net: &Network) -> Result<(), ScenarioError> {
        if self.horizon_s == 0 || !self.horizon_s.is_multiple_of(60) {
            return Err(ScenarioError::Mismatch("horizon must be a positive whole number of minutes"));
        }
        let houses: BTreeSet<BusId> = net.houses().into_iter().collect();
        let mut seen = BTreeSet::new();
        for prof in &self.profiles {
            if !houses.contains(&prof.house) {
                return Err(ScenarioError::UnknownHouse(prof.house));
            }
            if !seen.insert(prof.house) {
                return Err(ScenarioError::Mismatch("more than one profile for a house"));
            }
            if prof.power_w.len() < self.minutes() {
                return Err(ScenarioError::Gap { house: prof.house, minute: prof.power_w.len() as u32 });
            }
            if let Some((m, &p)) = prof.power_w.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
                return Err(ScenarioError::NegativePower { house: prof.house, minute: m as u32, power_w: p });
            }
            if !(prof.power_factor > 0.0 && prof.power_factor <= 1.0) {
                return Err(ScenarioError::Mismatch("power factor must lie in (0, 1]"));
            }
        }
        if seen.len() != houses.len() {
            return Err(ScenarioError::Mismatch("every house needs a profile"));
        }
        let mut ids = BTreeSet::new();
        for ev in &self.evs {
            let bad = |reason| Err(ScenarioError::InvalidEv { id: ev.id, reason });
            if !ids.insert(ev.id) {
                return bad("duplicate id");
            }
            if !houses.contains(&ev.house) {
                return Err(ScenarioError::UnknownHouse(ev.house));
            }
            if !(ev.arrival_s < ev.departure(self.horizon_s) && ev.departure(self.horizon_s) <= self.horizon_s) {
                return bad("needs arrival < departure <= horizon");
            }
            if !(0.0..1.0).contains(&ev.initial_soc) {
                return bad("initial state of charge must lie in [0, 1)");
            }
            if !(ev.battery_capacity_wh > 0.0 && ev.charger_rating_w > 0.0 && ev.max_current_a > 0.0) {
                return bad("ratings must be positive");
            }
        }
        Ok(())
    }
}

/// One `(minute, house, watts)` record of an external load history.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileRecord {
    pub time_min: u32,
    pub house_id: BusId,
    pub power_w: f64,
}

/// Assembles per-house profiles from loose records. Every known house must
/// cover minutes `0..n` without gaps, where `n` is one past the last minute
/// present anywhere.
pub fn profiles_from_records(
    records: &[ProfileRecord],
    known_houses: &[BusId],
    power_factor: f64,
) -> Result<Vec<HouseholdProfile>, ScenarioError> {
    let known: BTreeSet<BusId> = known_houses.iter().copied().collect();
    let mut by_house: BTreeMap<BusId, BTreeMap<u32, f64>> = known.iter().map(|&h| (h, BTreeMap::new())).collect();
    let mut horizon = 0u32;
    for r in records {
        let series = by_house.get_mut(&r.house_id).ok_or(ScenarioError::UnknownHouse(r.house_id))?;
        if !(r.power_w >= 0.0 && r.power_w.is_finite()) {
            return Err(ScenarioError::NegativePower { house: r.house_id, minute: r.time_min, power_w: r.power_w });
        }
        if series.insert(r.time_min, r.power_w).is_some() {
            return Err(ScenarioError::Duplicate { house: r.house_id, minute: r.time_min });
        }
        horizon = horizon.max(r.time_min + 1);
    }
    let mut out = Vec::with_capacity(by_house.len());
    for (house, series) in by_house {
        let mut power_w = Vec::with_capacity(horizon as usize);
        for m in 0..horizon {
            power_w.push(*series.get(&m).ok_or(ScenarioError::Gap { house, minute: m })?);
        }
        out.push(HouseholdProfile { house, power_w, power_factor });
    }
    Ok(out)
}

/// Flattens profiles back to records, minute-major.
pub fn profiles_to_records(profiles: &[HouseholdProfile]) -> Vec<ProfileRecord> {
    let minutes = profiles.iter().map(|p| p.power_w.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(minutes * profiles.len());
    for m in 0..minutes {
        for p in profiles {
            if let Some(&w) = p.power_w.get(m) {
                out.push(ProfileRecord { time_min: m as u32, house_id: p.house, power_w: w });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_synthetic_feeder, FeederConfig};

    fn small_net() -> Network {
        let cfg = FeederConfig { neighborhoods: 2, transformers_per_neighborhood: 2, houses_per_transformer: 3, ..FeederConfig::default() };
        build_synthetic_feeder(&cfg).unwrap()
    }

    #[test]
    fn soc_examples() {
        let s = soc_update(0.5, 10_000.0, 3600.0, 72_000.0);
        assert!((s - (0.5 + 10.0 / 72.0)).abs() < 1e-15);
        assert!((s - 0.6389).abs() < 1e-4);
        assert_eq!(soc_update(0.999, 10_000.0, 3600.0, 72_000.0), 1.0);
        assert_eq!(soc_update(0.5, 0.0, 123.0, 72_000.0), 0.5);
    }

    #[test]
    fn zero_deviation_follows_mean_shape() {
        let net = small_net();
        let mut cfg = ScenarioConfig { calibrate: false, horizon_s: 3600, ..ScenarioConfig::default() };
        cfg.fleet.arrival_latest_s = 1800;
        cfg.shape.iter_mut().for_each(|k| k.std_w = 0.0);
        let sc = generate_scenario(&net, 7, &cfg, 0.0).unwrap();
        for prof in &sc.profiles {
            for (m, &p) in prof.power_w.iter().enumerate() {
                assert_eq!(p, cfg.shape_at(m as f64).0);
            }
        }
        assert!(sc.evs.is_empty());
    }

    #[test]
    fn fleet_shares_household_draws() {
        let net = small_net();
        let cfg = ScenarioConfig { calibrate: false, ..ScenarioConfig::default() };
        let a = generate_scenario(&net, 3, &cfg, 0.0).unwrap();
        let b = generate_scenario(&net, 3, &cfg, 1.0).unwrap();
        assert_eq!(a.profiles, b.profiles);
        assert_eq!(b.evs.len(), net.house_count());
        let houses: BTreeSet<_> = b.evs.iter().map(|e| e.house).collect();
        assert_eq!(houses.len(), net.house_count());
        b.validate(&net).unwrap();
        for ev in &b.evs {
            assert!(ev.arrival_s <= 21_600);
            assert!((0.2..0.6).contains(&ev.initial_soc));
        }
        let half = generate_scenario(&net, 3, &cfg, 0.5).unwrap();
        assert_eq!(half.evs.len(), 6);
    }

    #[test]
    fn same_seed_same_scenario() {
        let net = small_net();
        let cfg = ScenarioConfig { calibrate: false, ..ScenarioConfig::default() };
        assert_eq!(generate_scenario(&net, 11, &cfg, 1.0), generate_scenario(&net, 11, &cfg, 1.0));
        assert_ne!(generate_scenario(&net, 11, &cfg, 1.0).unwrap(), generate_scenario(&net, 12, &cfg, 1.0).unwrap());
    }

    #[test]
    fn calibration_hits_target_on_small_feeder() {
        let net = small_net();
        let cfg = ScenarioConfig { target_peak_va: 40e3, peak_band_va: (38e3, 42e3), ..ScenarioConfig::default() };
        let sc = generate_scenario(&net, 5, &cfg, 0.0).unwrap();
        let peak = base_substation_profile(&net, &sc).unwrap().into_iter().fold(0.0, f64::max);
        assert!((peak - 40e3).abs() < 1e-3, "{peak}");
    }

    #[test]
    fn records_round_trip_and_errors() {
        let h = [BusId(5), BusId(6)];
        let recs: Vec<_> = (0..3)
            .flat_map(|m| h.iter().map(move |&house_id| ProfileRecord { time_min: m, house_id, power_w: 100.0 * m as f64 }))
            .collect();
        let profs = profiles_from_records(&recs, &h, 0.9).unwrap();
        assert_eq!(profs.len(), 2);
        assert!(profs.iter().all(|p| p.power_w.len() == 3));
        assert_eq!(profiles_from_records(&profiles_to_records(&profs), &h, 0.9).unwrap(), profs);

        let gap: Vec<_> = recs.iter().copied().filter(|r| !(r.time_min == 2 && r.house_id == BusId(6))).collect();
        // Minute 2 still exists for house 5, so house 6 has a hole there.
        assert_eq!(profiles_from_records(&gap, &h, 0.9), Err(ScenarioError::Gap { house: BusId(6), minute: 2 }));
        let mut neg = recs.clone();
        neg[0].power_w = -1.0;
        assert!(matches!(profiles_from_records(&neg, &h, 0.9), Err(ScenarioError::NegativePower { .. })));
        let mut unknown = recs.clone();
        unknown[0].house_id = BusId(99);
        assert_eq!(profiles_from_records(&unknown, &h, 0.9), Err(ScenarioError::UnknownHouse(BusId(99))));
    }

    #[test]
    fn household_reactive_power_uses_power_factor() {
        let prof = HouseholdProfile { house: BusId(1), power_w: vec![900.0, 1800.0], power_factor: 0.9 };
        let (p, q) = prof.load_at(61);
        assert_eq!(p, 1800.0);
        assert!((q - 1800.0 * 0.19f64.sqrt() / 0.9).abs() < 1e-9);
    }
}
