//! Per-node quadratic model of substation apparent power as a function of the
//! local voltage, and the trigger voltage at which the model predicts the
//! substation rating.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::topology::BusId;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    /// Volts at the node.
    pub local_voltage: f64,
    /// VA at the substation at the same instant.
    pub substation_apparent: f64,
}

/// Rows `[1, V, V²]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrix {
    pub rows: Vec<[f64; 3]>,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyCoefficients {
    /// `S ≈ θ[0] + θ[1]·V + θ[2]·V²` in VA, VA/V, VA/V².
    pub theta: [f64; 3],
    /// 1-norm condition number of the raw normal-equation matrix.
    pub condition: f64,
    /// Root-mean-square fit residual, VA.
    pub rmse: f64,
    pub samples: usize,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootProvenance {
    QuadraticUpper,
    QuadraticLower,
    LinearFallback,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoltageThreshold {
    pub v_th: f64,
    pub root_provenance: RootProvenance,
    /// VA the threshold was solved for.
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LearningError {
    #[error("need at least 3 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {0} is not finite or has a non-positive voltage")]
    BadSample(usize),
    #[error("voltage history has too little spread to fit a quadratic")]
    Degenerate,
    #[error("no real threshold voltage inside [{low}, {high}] V")]
    NoRoot { low: f64, high: f64 },
    #[error("model has no voltage dependence")]
    Uninformative,
    #[error("channel lengths differ: {voltage} voltage vs {power} power samples")]
    Misaligned { voltage: usize, power: usize },
    #[error("sampling period {sampling_s} s is not a positive multiple of the {dt_s} s recording step")]
    BadSampling { sampling_s: u32, dt_s: u32 },
}

/// Default search band for trigger voltages, per unit.
pub const DEFAULT_BAND_PU: (f64, f64) = (0.8, 1.1);

pub fn build_design_matrix(voltages: &[f64]) -> Result<DesignMatrix, LearningError> {
    if voltages.len() < 3 {
        return Err(LearningError::TooFewSamples(voltages.len()));
    }
    Ok(DesignMatrix { rows: voltages.iter().map(|&v| [1.0, v, v * v]).collect() })
}

/// Least-squares fit of the quadratic by Householder QR on centered and
/// scaled voltages; coefficients are mapped back to raw volts.
pub fn fit_polynomial(samples: &[RegressionSample]) -> Result<PolyCoefficients, LearningError> {
    let m = samples.len();
    if m < 3 {
        return Err(LearningError::TooFewSamples(m));
    }
    for (i, s) in samples.iter().enumerate() {
        if !(s.local_voltage.is_finite() && s.local_voltage > 0.0 && s.substation_apparent.is_finite()) {
            return Err(LearningError::BadSample(i));
        }
    }
    let center = samples.iter().map(|s| s.local_voltage).sum::<f64>() / m as f64;
    let spread = samples.iter().map(|s| (s.local_voltage - center).abs()).fold(0.0, f64::max);
    if !(spread > 1e-9 * center.abs()) {
        return Err(LearningError::Degenerate);
    }

    let mut a: Vec<[f64; 3]> = samples
        .iter()
        .map(|s| {
            let u = (s.local_voltage - center) / spread;
            [1.0, u, u * u]
        })
        .collect();
    let mut b: Vec<f64> = samples.iter().map(|s| s.substation_apparent).collect();
    let beta = householder_solve(&mut a, &mut b)?;

    let (c, h) = (center, spread);
    let theta = [
        beta[0] - beta[1] * c / h + beta[2] * c * c / (h * h),
        beta[1] / h - 2.0 * c * beta[2] / (h * h),
        beta[2] / (h * h),
    ];
    let rmse = sqrt(
        samples
            .iter()
            .map(|s| {
                let u = (s.local_voltage - c) / h;
                let e = s.substation_apparent - (beta[0] + beta[1] * u + beta[2] * u * u);
                e * e
            })
            .sum::<f64>()
            / m as f64,
    );
    Ok(PolyCoefficients { theta, condition: normal_condition(samples), rmse, samples: m })
}

// Overwrites `a` with R in its top rows and `b` with Qᵀb, then back-substitutes.
fn householder_solve(a: &mut [[f64; 3]], b: &mut [f64]) -> Result<[f64; 3], LearningError> {
    let m = a.len();
    for j in 0..3 {
        let norm = sqrt(a[j..].iter().map(|r| r[j] * r[j]).sum::<f64>());
        if norm == 0.0 {
            return Err(LearningError::Degenerate);
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        // v = x − αe₁, stored in column j below the diagonal.
        let mut v: Vec<f64> = a[j..].iter().map(|r| r[j]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for k in j..3 {
            let dot: f64 = (j..m).map(|i| v[i - j] * a[i][k]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in j..m {
                a[i][k] -= f * v[i - j];
            }
        }
        let dot: f64 = (j..m).map(|i| v[i - j] * b[i]).sum();
        let f = 2.0 * dot / vnorm2;
        for i in j..m {
            b[i] -= f * v[i - j];
        }
    }
    let scale = (0..3).map(|j| a[j][j].abs()).fold(0.0, f64::max);
    if (0..3).any(|j| !(a[j][j].abs() > 1e-10 * scale)) {
        return Err(LearningError::Degenerate);
    }
    let mut x = [0.0; 3];
    for j in (0..3).rev() {
        let tail: f64 = (j + 1..3).map(|k| a[j][k] * x[k]).sum();
        x[j] = (b[j] - tail) / a[j][j];
    }
    Ok(x)
}

fn normal_condition(samples: &[RegressionSample]) -> f64 {
    let mut n = [[0.0f64; 3]; 3];
    for s in samples {
        let row = [1.0, s.local_voltage, s.local_voltage * s.local_voltage];
        for i in 0..3 {
            for j in 0..3 {
                n[i][j] += row[i] * row[j];
            }
        }
    }
    let det = n[0][0] * (n[1][1] * n[2][2] - n[1][2] * n[2][1]) - n[0][1] * (n[1][0] * n[2][2] - n[1][2] * n[2][0])
        + n[0][2] * (n[1][0] * n[2][1] - n[1][1] * n[2][0]);
    if det == 0.0 || !det.is_finite() {
        return f64::INFINITY;
    }
    let mut inv = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (n[r0][c0] * n[r1][c1] - n[r0][c1] * n[r1][c0]) / det;
        }
    }
    let norm1 = |m: &[[f64; 3]; 3]| (0..3).map(|j| (0..3).map(|i| m[i][j].abs()).sum::<f64>()).fold(0.0, f64::max);
    norm1(&n) * norm1(&inv)
}

pub fn estimate_load(coeffs: &PolyCoefficients, voltage: f64) -> f64 {
    let [t1, t2, t3] = coeffs.theta;
    t1 + t2 * voltage + t3 * voltage * voltage
}

/// Voltage at which the model predicts `rating`, restricted to `band`.
/// With two roots in band the larger wins, so the trigger fires earlier.
pub fn solve_threshold(coeffs: &PolyCoefficients, rating: f64, band: (f64, f64)) -> Result<VoltageThreshold, LearningError> {
    let [t1, t2, t3] = coeffs.theta;
    let (lo, hi) = band;
    let no_root = LearningError::NoRoot { low: lo, high: hi };
    if !(t1.is_finite() && t2.is_finite() && t3.is_finite()) {
        return Err(LearningError::Uninformative);
    }
    let in_band = |v: f64| v.is_finite() && lo <= v && v <= hi;
    let c = t1 - rating;
    let v_ref = hi.abs().max(lo.abs());
    let magnitude = t1.abs().max((t2 * v_ref).abs()).max(rating.abs());
    if (t3 * v_ref * v_ref).abs() <= 1e-12 * magnitude {
        if (t2 * v_ref).abs() <= 1e-12 * magnitude {
            return Err(LearningError::Uninformative);
        }
        let v = -c / t2;
        return if in_band(v) {
            Ok(VoltageThreshold { v_th: v, root_provenance: RootProvenance::LinearFallback, rating })
        } else {
            Err(no_root)
        };
    }
    let disc = t2 * t2 - 4.0 * t3 * c;
    if disc < 0.0 {
        return Err(no_root);
    }
    let q = -0.5 * (t2 + if t2 >= 0.0 { sqrt(disc) } else { -sqrt(disc) });
    let (mut r1, mut r2) = (q / t3, if q != 0.0 { c / q } else { q / t3 });
    if r1 > r2 {
        core::mem::swap(&mut r1, &mut r2);
    }
    let pick = |v: f64, root_provenance| Ok(VoltageThreshold { v_th: v, root_provenance, rating });
    if in_band(r2) {
        pick(r2, RootProvenance::QuadraticUpper)
    } else if in_band(r1) {
        pick(r1, RootProvenance::QuadraticLower)
    } else {
        Err(no_root)
    }
}

/// Fitted model and trigger voltage of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeModel {
    pub node: BusId,
    pub coefficients: PolyCoefficients,
    pub threshold: VoltageThreshold,
}

/// Fits `samples` and solves for the voltage at which the model reaches
/// `rating`, searching `band_pu` times the node's nominal voltage.
pub fn train_node(
    node: BusId,
    samples: &[RegressionSample],
    rating: f64,
    nominal_voltage: f64,
    band_pu: (f64, f64),
) -> Result<NodeModel, LearningError> {
    let coefficients = fit_polynomial(samples)?;
    let band = (band_pu.0 * nominal_voltage, band_pu.1 * nominal_voltage);
    let threshold = solve_threshold(&coefficients, rating, band)?;
    Ok(NodeModel { node, coefficients, threshold })
}

/// Time-aligned pairs taken every `sampling_s` from series recorded every `dt_s`.
pub fn extract_training_set(
    voltage: &[f64],
    substation_apparent: &[f64],
    dt_s: u32,
    sampling_s: u32,
) -> Result<Vec<RegressionSample>, LearningError> {
    if voltage.len() != substation_apparent.len() {
        return Err(LearningError::Misaligned { voltage: voltage.len(), power: substation_apparent.len() });
    }
    if dt_s == 0 || sampling_s == 0 || !sampling_s.is_multiple_of(dt_s) {
        return Err(LearningError::BadSampling { sampling_s, dt_s });
    }
    let stride = (sampling_s / dt_s) as usize;
    Ok(voltage
        .iter()
        .zip(substation_apparent)
        .step_by(stride)
        .map(|(&v, &s)| RegressionSample { local_voltage: v, substation_apparent: s })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn samples(vs: &[f64], f: impl Fn(f64) -> f64) -> Vec<RegressionSample> {
        vs.iter().map(|&v| RegressionSample { local_voltage: v, substation_apparent: f(v) }).collect()
    }

    // Independent route: solve the 3x3 normal equations by Gaussian elimination.
    fn normal_equation_fit(s: &[RegressionSample]) -> [f64; 3] {
        let mut n = [[0.0f64; 4]; 3];
        for x in s {
            let row = [1.0, x.local_voltage, x.local_voltage * x.local_voltage];
            for i in 0..3 {
                for j in 0..3 {
                    n[i][j] += row[i] * row[j];
                }
                n[i][3] += row[i] * x.substation_apparent;
            }
        }
        for k in 0..3 {
            let p = (k..3).max_by(|&a, &b| n[a][k].abs().partial_cmp(&n[b][k].abs()).unwrap()).unwrap();
            n.swap(k, p);
            for i in k + 1..3 {
                let f = n[i][k] / n[k][k];
                for j in k..4 {
                    n[i][j] -= f * n[k][j];
                }
            }
        }
        let mut x = [0.0; 3];
        for k in (0..3).rev() {
            x[k] = (n[k][3] - (k + 1..3).map(|j| n[k][j] * x[j]).sum::<f64>()) / n[k][k];
        }
        x
    }

    #[test]
    fn design_matrix_rows() {
        let d = build_design_matrix(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(d.rows, vec![[1.0, 1.0, 1.0], [1.0, 2.0, 4.0], [1.0, 3.0, 9.0]]);
        assert_eq!(build_design_matrix(&[240.0, 238.0]), Err(LearningError::TooFewSamples(2)));
    }

    #[test]
    fn planted_quadratic_recovered() {
        let s = samples(&[1.0, 2.0, 3.0, 4.0, 5.0], |v| 100.0 - 2.0 * v + 0.5 * v * v);
        let fit = fit_polynomial(&s).unwrap();
        let want = [100.0, -2.0, 0.5];
        for k in 0..3 {
            assert!((fit.theta[k] - want[k]).abs() <= 1e-9 * want[k].abs(), "{:?}", fit.theta);
        }
        assert!(fit.rmse < 1e-9);
        let oracle = normal_equation_fit(&s);
        for k in 0..3 {
            assert!((fit.theta[k] - oracle[k]).abs() <= 1e-9 * oracle[k].abs());
        }
    }

    #[test]
    fn constant_voltage_is_degenerate() {
        let s = samples(&[230.0; 10], |_| 1e6);
        assert_eq!(fit_polynomial(&s), Err(LearningError::Degenerate));
        let two_levels = samples(&[230.0, 231.0, 230.0, 231.0], |v| v);
        assert_eq!(fit_polynomial(&two_levels), Err(LearningError::Degenerate));
    }

    #[test]
    fn linear_threshold_example() {
        let c = PolyCoefficients { theta: [1.4e7, -5.0e4, 0.0], condition: 0.0, rmse: 0.0, samples: 0 };
        let th = solve_threshold(&c, 2.5e6, (192.0, 264.0)).unwrap();
        assert!((th.v_th - 230.0).abs() < 1e-9);
        assert_eq!(th.root_provenance, RootProvenance::LinearFallback);
        assert!((estimate_load(&c, th.v_th) - 2.5e6).abs() <= 1e-6 * 2.5e6);
    }

    #[test]
    fn quadratic_root_selection() {
        // Roots at 200 and 250 for the rating.
        let a = 1000.0;
        let c = PolyCoefficients { theta: [a * 200.0 * 250.0 + 1e6, -a * 450.0, a], condition: 0.0, rmse: 0.0, samples: 0 };
        let both = solve_threshold(&c, 1e6, (190.0, 260.0)).unwrap();
        assert!((both.v_th - 250.0).abs() < 1e-9);
        assert_eq!(both.root_provenance, RootProvenance::QuadraticUpper);
        let lower = solve_threshold(&c, 1e6, (190.0, 240.0)).unwrap();
        assert!((lower.v_th - 200.0).abs() < 1e-9);
        assert_eq!(lower.root_provenance, RootProvenance::QuadraticLower);
        assert_eq!(solve_threshold(&c, 1e6, (210.0, 240.0)), Err(LearningError::NoRoot { low: 210.0, high: 240.0 }));
        let flat = PolyCoefficients { theta: [3e6, 0.0, 0.0], condition: 0.0, rmse: 0.0, samples: 0 };
        assert_eq!(solve_threshold(&flat, 2.5e6, (192.0, 264.0)), Err(LearningError::Uninformative));
    }

    #[test]
    fn estimate_examples() {
        let c = PolyCoefficients { theta: [5.0, -2.0, 0.0], condition: 0.0, rmse: 0.0, samples: 0 };
        assert_eq!(estimate_load(&c, 1.0), 3.0);
        let k = PolyCoefficients { theta: [7.5, 0.0, 0.0], condition: 0.0, rmse: 0.0, samples: 0 };
        assert_eq!(estimate_load(&k, 231.7), 7.5);
    }

    #[test]
    fn training_set_sampling() {
        let v = vec![240.0; 28_800];
        let s = vec![1e6; 28_800];
        assert_eq!(extract_training_set(&v, &s, 1, 60).unwrap().len(), 480);
        let one = extract_training_set(&v, &s, 1, 28_800).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(fit_polynomial(&one), Err(LearningError::TooFewSamples(1)));
        assert!(matches!(extract_training_set(&v, &s[..10], 1, 60), Err(LearningError::Misaligned { .. })));
        assert!(matches!(extract_training_set(&v, &s, 1, 0), Err(LearningError::BadSampling { .. })));
    }
}
