//! Comparison scores computed from recorded series. Integrals use the left
//! rectangle rule at the recording step, which is exact for step-held series.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::controllers::ControllerKind;
use crate::engine::SimResult;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no series to score")]
    Empty,
    #[error("series and ratings do not line up")]
    Mismatch,
    #[error("all fairness shares are zero")]
    AllZero,
    #[error("fairness shares must be finite and non-negative")]
    BadShare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub algorithm: ControllerKind,
    /// Volt-seconds below the floor, averaged over nodes.
    pub vvs: f64,
    /// MVAh above the substation rating.
    pub gcs: f64,
    /// kVAh above transformer ratings, averaged over transformers.
    pub lcs: f64,
    /// `lcs` restricted to each neighborhood, in label order.
    pub lcs_by_neighborhood: Vec<f64>,
    /// Peak substation loading, percent of rating.
    pub cus: f64,
    /// Mean of per-EV average charging power, kW.
    pub acps: f64,
    pub fs: f64,
    pub cos: u64,
    pub scenario_key: u64,
    pub network_key: u64,
}

fn overload<S: AsRef<[f64]>>(series: S, limit: f64, dt_s: f64) -> f64 {
    series.as_ref().iter().map(|&s| if s > limit { (s - limit) * dt_s } else { 0.0 }).sum()
}

/// `(1/N)·Σᵢ ∫ max(0, v_min − Vᵢ) dt` over `N` node series.
pub fn vvs<S: AsRef<[f64]>>(voltages: &[S], v_min: f64, dt_s: f64) -> Result<f64, MetricsError> {
    if voltages.is_empty() {
        return Err(MetricsError::Empty);
    }
    let total: f64 = voltages
        .iter()
        .map(|v| v.as_ref().iter().map(|&x| if x < v_min { (v_min - x) * dt_s } else { 0.0 }).sum::<f64>())
        .sum();
    Ok(total / voltages.len() as f64)
}

/// Energy above `rating` in MVAh.
pub fn gcs(substation: &[f64], rating: f64, dt_s: f64) -> f64 {
    overload(substation, rating, dt_s) / 3600.0 / 1e6
}

/// Mean over transformers of energy above each rating, kVAh, with the same
/// mean taken inside each group label.
pub fn lcs<S: AsRef<[f64]>>(
    series: &[S],
    ratings: &[f64],
    groups: &[usize],
    dt_s: f64,
) -> Result<(f64, Vec<f64>), MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::Empty);
    }
    if series.len() != ratings.len() || series.len() != groups.len() {
        return Err(MetricsError::Mismatch);
    }
    let each: Vec<f64> = series.iter().zip(ratings).map(|(s, &r)| overload(s, r, dt_s) / 3600.0 / 1e3).collect();
    let n_groups = groups.iter().max().map_or(0, |g| g + 1);
    let mut sum = vec![0.0; n_groups];
    let mut count = vec![0usize; n_groups];
    for (&g, &e) in groups.iter().zip(&each) {
        sum[g] += e;
        count[g] += 1;
    }
    let by_group = sum.iter().zip(&count).map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect();
    Ok((each.iter().sum::<f64>() / each.len() as f64, by_group))
}

/// Peak over rating, percent.
pub fn cus(substation: &[f64], rating: f64) -> Result<f64, MetricsError> {
    let peak = substation.iter().copied().reduce(f64::max).ok_or(MetricsError::Empty)?;
    Ok(peak / rating * 100.0)
}

/// Mean of per-EV average powers given in watts, reported in kW.
pub fn acps(avg_power_w: &[f64]) -> Result<f64, MetricsError> {
    if avg_power_w.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(avg_power_w.iter().sum::<f64>() / avg_power_w.len() as f64 / 1e3)
}

/// `(Σw)² / (N·Σw²)`.
pub fn jain_fairness(shares: &[f64]) -> Result<f64, MetricsError> {
    if shares.is_empty() {
        return Err(MetricsError::Empty);
    }
    if shares.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
        return Err(MetricsError::BadShare);
    }
    let s: f64 = shares.iter().sum();
    let s2: f64 = shares.iter().map(|w| w * w).sum();
    if s2 == 0.0 {
        return Err(MetricsError::AllZero);
    }
    Ok(s * s / (shares.len() as f64 * s2))
}

pub fn cos(result: &SimResult) -> u64 {
    result.comm_events
}

/// Each EV's mean power from plug-in until it fills or leaves, watts.
pub fn average_charging_powers(result: &SimResult) -> Vec<f64> {
    let dt = result.dt_s;
    (0..result.ev_power.len())
        .map(|i| {
            let start = (result.ev_arrival_s[i] / dt) as usize;
            let end = result.charge_end_s(i).div_ceil(dt) as usize;
            let end = end.min(result.ev_power[i].len());
            if end <= start {
                return 0.0;
            }
            result.ev_power[i][start..end].iter().sum::<f64>() / (end - start) as f64
        })
        .collect()
}

pub fn score_run(result: &SimResult) -> Result<ScoreReport, MetricsError> {
    let dt = result.dt_s as f64;
    let (lcs, lcs_by_neighborhood) = lcs(&result.transformer, &result.transformer_ratings, &result.transformer_groups, dt)?;
    let shares = average_charging_powers(result);
    let (acps, fs) = if shares.is_empty() { (0.0, 1.0) } else { (acps(&shares)?, jain_fairness(&shares)?) };
    Ok(ScoreReport {
        algorithm: result.controller,
        vvs: vvs(&result.voltage, result.v_min, dt)?,
        gcs: gcs(&result.substation, result.substation_rating, dt),
        lcs,
        lcs_by_neighborhood,
        cus: cus(&result.substation, result.substation_rating)?,
        acps,
        fs,
        cos: cos(result),
        scenario_key: result.scenario_key,
        network_key: result.network_key,
    })
}
