//! The 23 stage features Tz1–Tz23 and Z-score standardization.
//!
//! With acceleration `a_i = (Pm_i − Pe_i)/M_i` and kinetic energy
//! `KE_i = ½·M_i·ω_i²`:
//!
//! | subset | sample | features |
//! |---|---|---|
//! | F1 | fault inception `t0` (Tz1 just before it, Tz5 one cycle after) | Tz1–Tz7 |
//! | F2 | last fault-on sample | Tz8–Tz14 |
//! | F3 | 3, 6 and 9 cycles after clearing | Tz15–Tz23 |
//!
//! Ties in "the generator with the maximum ..." resolve to the lowest
//! generator index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::Trajectory;

pub const N_FEATURES: usize = 23;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "Tz1", "Tz2", "Tz3", "Tz4", "Tz5", "Tz6", "Tz7", "Tz8", "Tz9", "Tz10", "Tz11", "Tz12", "Tz13", "Tz14", "Tz15",
    "Tz16", "Tz17", "Tz18", "Tz19", "Tz20", "Tz21", "Tz22", "Tz23",
];

/// Cycle offsets after clearing used by F3.
pub const POST_CLEARING_OFFSETS: [usize; 3] = [3, 6, 9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Subset {
    F1,
    F2,
    F3,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::F1, Subset::F2, Subset::F3];

    /// Column range within the 23-vector.
    pub fn columns(self) -> std::ops::Range<usize> {
        match self {
            Subset::F1 => 0..7,
            Subset::F2 => 7..14,
            Subset::F3 => 14..23,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Subset::F1 => "F1",
            Subset::F2 => "F2",
            Subset::F3 => "F3",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "F1" | "f1" => Some(Subset::F1),
            "F2" | "f2" => Some(Subset::F2),
            "F3" | "f3" => Some(Subset::F3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub f1: [f64; 7],
    pub f2: [f64; 7],
    pub f3: [f64; 9],
    pub label: i8,
    pub scenario_id: String,
}

impl FeatureVector {
    pub fn from_array(values: &[f64; N_FEATURES], label: i8, scenario_id: impl Into<String>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        if label != 1 && label != -1 {
            return Err(Error::invalid(format!("label must be +1 or -1, got {label}")));
        }
        let mut f1 = [0.0; 7];
        let mut f2 = [0.0; 7];
        let mut f3 = [0.0; 9];
        f1.copy_from_slice(&values[0..7]);
        f2.copy_from_slice(&values[7..14]);
        f3.copy_from_slice(&values[14..23]);
        Ok(Self { f1, f2, f3, label, scenario_id: scenario_id.into() })
    }

    pub fn to_array(&self) -> [f64; N_FEATURES] {
        let mut out = [0.0; N_FEATURES];
        out[0..7].copy_from_slice(&self.f1);
        out[7..14].copy_from_slice(&self.f2);
        out[14..23].copy_from_slice(&self.f3);
        out
    }

    pub fn subset(&self, s: Subset) -> &[f64] {
        match s {
            Subset::F1 => &self.f1,
            Subset::F2 => &self.f2,
            Subset::F3 => &self.f3,
        }
    }
}

fn acceleration(traj: &Trajectory, g: usize, k: usize) -> f64 {
    (traj.pm[g][k] - traj.pe[g][k]) / traj.inertia[g]
}

fn kinetic_energy(traj: &Trajectory, g: usize, k: usize) -> f64 {
    let w = traj.omega_dev[g][k];
    0.5 * traj.inertia[g] * w * w
}

/// Index of the first maximum.
fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn max(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

fn min(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(f64::INFINITY, f64::min)
}

fn check_generators(traj: &Trajectory) -> Result<usize> {
    let n = traj.n_generators();
    if n == 0 {
        return Err(Error::invalid("trajectory has no generators"));
    }
    Ok(n)
}

/// Fault-inception features Tz1–Tz7.
pub fn extract_f1(traj: &Trajectory) -> Result<[f64; 7]> {
    let n = check_generators(traj)?;
    let t0 = traj.t0_index;
    if t0 == 0 || t0 + 1 >= traj.len() {
        return Err(Error::invalid(format!(
            "t0 index {t0} needs a pre-fault sample and one sample after it (len {})",
            traj.len()
        )));
    }
    let before = t0 - 1;
    let acc: Vec<f64> = (0..n).map(|g| acceleration(traj, g, t0)).collect();
    let acc_mean = mean(&acc);
    let pm_before: Vec<f64> = (0..n).map(|g| traj.pm[g][before]).collect();
    let pa: Vec<f64> = (0..n).map(|g| traj.pm[g][t0] - traj.pe[g][t0]).collect();
    let leader = argmax(acc.iter().copied());
    Ok([
        mean(&pm_before),
        acc_mean,
        acc.iter().map(|a| (a - acc_mean).powi(2)).sum::<f64>() / n as f64,
        mean(&pa),
        max((0..n).map(|g| kinetic_energy(traj, g, t0 + 1))),
        max((0..n).map(|g| (traj.pe[g][before] - traj.pe[g][t0]).abs())),
        traj.delta[leader][t0],
    ])
}

/// Clearing-instant features Tz8–Tz14, taken at the last fault-on sample.
pub fn extract_f2(traj: &Trajectory) -> Result<[f64; 7]> {
    let n = check_generators(traj)?;
    if traj.tcl_index <= traj.t0_index || traj.tcl_index > traj.len() {
        return Err(Error::invalid(format!(
            "clearing index {} must follow t0 index {} within the trajectory",
            traj.tcl_index, traj.t0_index
        )));
    }
    let k = traj.tcl_index - 1;
    let acc: Vec<f64> = (0..n).map(|g| acceleration(traj, g, k)).collect();
    let ke: Vec<f64> = (0..n).map(|g| kinetic_energy(traj, g, k)).collect();
    let most_energetic = argmax(ke.iter().copied());
    let most_advanced = argmax((0..n).map(|g| traj.delta[g][k]));
    let total_ke: f64 = ke.iter().sum();
    Ok([
        (0..n).map(|g| (traj.pm[g][k] - traj.pe[g][k]).abs()).sum(),
        max(acc.iter().copied()) - min(acc.iter().copied()),
        total_ke / n as f64,
        traj.delta[most_energetic][k],
        ke[most_advanced],
        max(ke.iter().copied()),
        total_ke,
    ])
}

/// Post-clearing features Tz15–Tz23.
pub fn extract_f3(traj: &Trajectory) -> Result<[f64; 9]> {
    let n = check_generators(traj)?;
    let last = POST_CLEARING_OFFSETS[2];
    let required = traj.tcl_index + last + 1;
    if traj.len() < required {
        return Err(Error::invalid(format!(
            "trajectory too short: post-clearing features need at least {required} samples, got {}",
            traj.len()
        )));
    }
    let mut out = [0.0; 9];
    for (j, off) in POST_CLEARING_OFFSETS.iter().enumerate() {
        let k = traj.tcl_index + off;
        let ke: Vec<f64> = (0..n).map(|g| kinetic_energy(traj, g, k)).collect();
        let angles: Vec<f64> = (0..n).map(|g| traj.delta[g][k]).collect();
        out[j] = max(ke.iter().copied());
        out[3 + j] = ke[argmax(angles.iter().copied())];
        out[6 + j] = max(angles.iter().copied()) - min(angles.iter().copied());
    }
    Ok(out)
}

/// All three subsets for a trajectory.
pub fn extract(traj: &Trajectory, label: i8, scenario_id: impl Into<String>) -> Result<FeatureVector> {
    let fv = FeatureVector {
        f1: extract_f1(traj)?,
        f2: extract_f2(traj)?,
        f3: extract_f3(traj)?,
        label,
        scenario_id: scenario_id.into(),
    };
    if fv.to_array().iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("non-finite feature value"));
    }
    Ok(fv)
}

/// Per-feature Z-score parameters (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub zero_variance: Vec<bool>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(format!("standardizer needs at least 2 samples, got {}", rows.len())));
        }
        let dim = rows[0].len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("rows have differing lengths"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        let mut std = vec![0.0; dim];
        let mut zero_variance = vec![false; dim];
        for j in 0..dim {
            let m = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[j] - m).powi(2)).sum::<f64>() / n;
            let s = var.sqrt();
            mean[j] = m;
            if s <= 1e-12 * (1.0 + m.abs()) {
                zero_variance[j] = true;
                std[j] = 0.0;
            } else {
                std[j] = s;
            }
        }
        Ok(Self { mean, std, zero_variance })
    }

    pub fn fit_features(samples: &[FeatureVector]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.to_array().to_vec()).collect();
        Self::fit(&rows)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| if self.zero_variance[j] { 0.0 } else { (v - self.mean[j]) / self.std[j] })
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(j, v)| if self.zero_variance[j] { self.mean[j] } else { v * self.std[j] + self.mean[j] })
            .collect()
    }

    pub fn apply_features(&self, v: &FeatureVector) -> FeatureVector {
        let z = self.apply(&v.to_array());
        let mut arr = [0.0; N_FEATURES];
        arr.copy_from_slice(&z);
        FeatureVector {
            f1: arr[0..7].try_into().unwrap(),
            f2: arr[7..14].try_into().unwrap(),
            f3: arr[14..23].try_into().unwrap(),
            label: v.label,
            scenario_id: v.scenario_id.clone(),
        }
    }
}
