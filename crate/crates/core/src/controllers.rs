//! Charging decision rules: fixed-current charging, voltage droop, and AIMD
//! driven either by a broadcast substation congestion flag or by a local
//! learned voltage threshold.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    NoControl,
    DAimd,
    CAimd,
    Droop,
}

impl ControllerKind {
    /// Comparison-table order.
    pub const ALL: [ControllerKind; 4] = [Self::NoControl, Self::DAimd, Self::CAimd, Self::Droop];

    pub fn label(self) -> &'static str {
        match self {
            Self::NoControl => "No-Control",
            Self::DAimd => "D-AIMD",
            Self::CAimd => "C-AIMD",
            Self::Droop => "Droop",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Self::NoControl => "no_control",
            Self::DAimd => "d_aimd",
            Self::CAimd => "c_aimd",
            Self::Droop => "droop",
        }
    }

    pub fn from_key(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.key() == s)
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("invalid controller parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: &'static str },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AimdParams {
    /// Amps added per uncongested decision.
    pub alpha: f64,
    /// Factor applied on a congested decision.
    pub beta: f64,
    /// Seconds between decisions of one charger.
    pub t_a_s: u32,
    pub v_min: f64,
    pub i_max: f64,
    pub i_init: f64,
}

impl Default for AimdParams {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.5, t_a_s: 10, v_min: 216.0, i_max: 41.0, i_init: 0.0 }
    }
}

impl AimdParams {
    pub fn check(&self) -> Result<(), ControllerError> {
        let bad = |field, reason| Err(ControllerError::InvalidParam { field, reason });
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be positive");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta", "must lie in (0, 1)");
        }
        if self.t_a_s == 0 {
            return bad("t_a_s", "must be positive");
        }
        if !(self.i_max > 0.0 && self.i_max.is_finite()) {
            return bad("i_max", "must be positive");
        }
        if !(0.0 <= self.i_init && self.i_init <= self.i_max) {
            return bad("i_init", "must lie in [0, i_max]");
        }
        if !(self.v_min > 0.0 && self.v_min.is_finite()) {
            return bad("v_min", "must be positive");
        }
        Ok(())
    }
}

/// Piecewise-linear power against voltage: nothing below `v_cut`, full power
/// above `v_full`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DroopCurve {
    pub v_cut: f64,
    pub v_full: f64,
    /// Watts.
    pub p_rated: f64,
}

impl Default for DroopCurve {
    fn default() -> Self {
        Self { v_cut: 216.0, v_full: 240.0, p_rated: 10_000.0 }
    }
}

impl DroopCurve {
    pub fn check(&self) -> Result<(), ControllerError> {
        if !(self.v_cut < self.v_full && self.v_cut.is_finite() && self.v_full.is_finite()) {
            return Err(ControllerError::InvalidParam { field: "droop", reason: "needs v_cut < v_full" });
        }
        if !(self.p_rated > 0.0 && self.p_rated.is_finite()) {
            return Err(ControllerError::InvalidParam { field: "droop", reason: "p_rated must be positive" });
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargerState {
    pub ev: u32,
    /// Commanded amps.
    pub current: f64,
    pub soc: f64,
    pub plugged: bool,
}

impl ChargerState {
    pub fn active(&self) -> bool {
        self.plugged && self.soc < 1.0
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalOrigin {
    Broadcast,
    LocalThreshold,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CongestionSignal {
    pub congested: bool,
    pub origin: SignalOrigin,
    pub timestamp_s: u32,
}

/// One AIMD update of the commanded current.
pub fn aimd_next(current: f64, congested: bool, p: &AimdParams) -> f64 {
    if congested {
        p.beta * current
    } else {
        let next = current + p.alpha;
        if next > p.i_max {
            p.i_max
        } else {
            next
        }
    }
}

pub fn aimd_step(state: ChargerState, congested: bool, p: &AimdParams) -> ChargerState {
    ChargerState { current: aimd_next(state.current, congested, p), ..state }
}

/// True when the charger must back off: the local voltage is not strictly
/// above both the learned threshold and the floor.
pub fn daimd_decide(v: f64, v_th: f64, v_min: f64) -> bool {
    !(v > v_th && v > v_min)
}

/// Congested at or above the rating.
pub fn caimd_decide(substation_apparent: f64, rating: f64, timestamp_s: u32) -> CongestionSignal {
    CongestionSignal { congested: substation_apparent >= rating, origin: SignalOrigin::Broadcast, timestamp_s }
}

/// Watts allowed at local voltage `v`.
pub fn droop_power(v: f64, curve: &DroopCurve) -> f64 {
    if v <= curve.v_cut {
        0.0
    } else if v >= curve.v_full {
        curve.p_rated
    } else {
        curve.p_rated * (v - curve.v_cut) / (curve.v_full - curve.v_cut)
    }
}

pub fn no_control_current(state: &ChargerState, i_max: f64) -> f64 {
    if state.active() {
        i_max
    } else {
        0.0
    }
}

/// Controller selection as read from configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub controller: ControllerKind,
    pub alpha: f64,
    pub beta: f64,
    pub t_a_s: u32,
    pub v_min_v: f64,
    pub i_max_a: f64,
    pub i_init_a: f64,
    pub droop: DroopCurve,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        let p = AimdParams::default();
        Self {
            controller: ControllerKind::NoControl,
            alpha: p.alpha,
            beta: p.beta,
            t_a_s: p.t_a_s,
            v_min_v: p.v_min,
            i_max_a: p.i_max,
            i_init_a: p.i_init,
            droop: DroopCurve::default(),
        }
    }
}

impl ControllerConfig {
    pub fn params(&self) -> AimdParams {
        AimdParams {
            alpha: self.alpha,
            beta: self.beta,
            t_a_s: self.t_a_s,
            v_min: self.v_min_v,
            i_max: self.i_max_a,
            i_init: self.i_init_a,
        }
    }
}

/// Grid-free AIMD check: agents share one capacity in amps and all see the
/// same congestion flag each period.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacityToy {
    pub capacity: f64,
    pub params: AimdParams,
    /// Starting current per agent.
    pub initial: Vec<f64>,
}

impl CapacityToy {
    /// Time-averaged current of each agent over `periods` after `burn_in`.
    pub fn run(&self, burn_in: usize, periods: usize) -> Vec<f64> {
        let mut cur = self.initial.clone();
        let mut sum = vec![0.0; cur.len()];
        for k in 0..burn_in + periods {
            let congested = cur.iter().sum::<f64>() >= self.capacity;
            for c in cur.iter_mut() {
                *c = aimd_next(*c, congested, &self.params);
            }
            if k >= burn_in {
                for (s, c) in sum.iter_mut().zip(&cur) {
                    *s += c;
                }
            }
        }
        sum.iter().map(|s| s / periods as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aimd_examples() {
        let p = AimdParams::default();
        assert_eq!(aimd_next(10.0, false, &p), 11.0);
        assert_eq!(aimd_next(20.0, true, &p), 10.0);
        assert_eq!(aimd_next(41.0, false, &p), 41.0);
        assert_eq!(aimd_next(40.5, false, &p), 41.0);
        assert_eq!(aimd_next(0.0, true, &p), 0.0);
        let s = aimd_step(ChargerState { ev: 3, current: 10.0, soc: 0.4, plugged: true }, false, &p);
        assert_eq!((s.ev, s.current), (3, 11.0));
    }

    #[test]
    fn threshold_guard() {
        assert!(!daimd_decide(230.0, 225.0, 216.0));
        assert!(daimd_decide(215.0, 210.0, 216.0));
        assert!(daimd_decide(225.0, 225.0, 216.0));
        assert!(daimd_decide(216.0, 200.0, 216.0));
    }

    #[test]
    fn broadcast_boundary() {
        assert!(caimd_decide(2.6e6, 2.5e6, 0).congested);
        assert!(!caimd_decide(2.4e6, 2.5e6, 0).congested);
        let s = caimd_decide(2.5e6, 2.5e6, 40);
        assert!(s.congested);
        assert_eq!((s.origin, s.timestamp_s), (SignalOrigin::Broadcast, 40));
    }

    #[test]
    fn droop_examples() {
        let c = DroopCurve::default();
        assert_eq!(droop_power(215.0, &c), 0.0);
        assert_eq!(droop_power(216.0, &c), 0.0);
        assert_eq!(droop_power(241.0, &c), 10_000.0);
        assert_eq!(droop_power(240.0, &c), 10_000.0);
        assert_eq!(droop_power(228.0, &c), 5_000.0);
    }

    #[test]
    fn fixed_current() {
        let mut s = ChargerState { ev: 0, current: 0.0, soc: 0.5, plugged: true };
        assert_eq!(no_control_current(&s, 41.0), 41.0);
        s.soc = 1.0;
        assert_eq!(no_control_current(&s, 41.0), 0.0);
        s.soc = 0.5;
        s.plugged = false;
        assert_eq!(no_control_current(&s, 41.0), 0.0);
    }

    #[test]
    fn params_validated() {
        assert!(AimdParams::default().check().is_ok());
        assert!(AimdParams { beta: 1.0, ..AimdParams::default() }.check().is_err());
        assert!(AimdParams { i_init: 50.0, ..AimdParams::default() }.check().is_err());
        assert!(DroopCurve { v_cut: 240.0, ..DroopCurve::default() }.check().is_err());
    }

    #[test]
    fn keys_round_trip() {
        for k in ControllerKind::ALL {
            assert_eq!(ControllerKind::from_key(k.key()), Some(k));
        }
        assert_eq!(ControllerKind::from_key("pid"), None);
    }
}
