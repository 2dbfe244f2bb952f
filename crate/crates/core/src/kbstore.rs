//! Knowledge-base generation over a scenario grid, persistence, splits and
//! measurement noise.
//!
//! Seeds: every operating point `(level, dispatch)` draws its generator
//! dispatch from `child_seed(master, DISPATCH_STREAM, level·D + dispatch)`,
//! shared by all fault locations at that point. Measurement noise for
//! scenario number `i` (row-major over level, dispatch, fault) uses
//! `child_seed(master, NOISE_STREAM, i)`.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{self, FeatureVector, FEATURE_NAMES, N_FEATURES};
use crate::netmodel::{self, NetworkCase};
use crate::simulator::{self, Scenario, Trajectory, DEFAULT_CLEARING_CYCLES, DEFAULT_HORIZON_S};

pub const KB_FORMAT: u32 = 1;
pub const MAX_NOISE: f64 = 0.05;
/// Largest tolerated fraction of discarded scenarios.
pub const MAX_DISCARD_FRACTION: f64 = 0.2;
/// Concentration of the Dirichlet dispatch perturbation around equal
/// shares.
pub const DISPATCH_CONCENTRATION: f64 = 20.0;

const DISPATCH_STREAM: u64 = 0x6469_7370_6174_6368;
const NOISE_STREAM: u64 = 0x6e6f_6973_6500_0000;

/// SplitMix64 over `(master, stream, index)`.
pub fn child_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut z = master ^ stream.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for _ in 0..2 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub load_levels: Vec<f64>,
    pub dispatches_per_level: usize,
    pub fault_buses: Vec<usize>,
    #[serde(default = "default_clearing")]
    pub clearing_cycles: usize,
    #[serde(default = "default_horizon")]
    pub horizon_s: f64,
    #[serde(default)]
    pub master_seed: u64,
}

fn default_clearing() -> usize {
    DEFAULT_CLEARING_CYCLES
}

fn default_horizon() -> f64 {
    DEFAULT_HORIZON_S
}

/// 0.85, 0.90, …, 1.30.
pub fn default_load_levels() -> Vec<f64> {
    (0..10).map(|k| (85 + 5 * k) as f64 / 100.0).collect()
}

impl ScenarioPlan {
    pub fn new(fault_buses: Vec<usize>, master_seed: u64) -> Self {
        Self {
            load_levels: default_load_levels(),
            dispatches_per_level: 5,
            fault_buses,
            clearing_cycles: DEFAULT_CLEARING_CYCLES,
            horizon_s: DEFAULT_HORIZON_S,
            master_seed,
        }
    }

    /// 10 levels × 5 dispatches × 8 fault buses on the bundled case.
    pub fn desk(master_seed: u64) -> Self {
        Self::new(vec![2, 3, 4, 5, 6, 7, 8, 9], master_seed)
    }

    pub fn planned_size(&self) -> usize {
        self.load_levels.len() * self.dispatches_per_level * self.fault_buses.len()
    }

    pub fn validate(&self, case: &NetworkCase) -> Result<()> {
        if self.load_levels.is_empty() || self.load_levels.iter().any(|l| l.is_nan() || *l <= 0.0) {
            return Err(Error::invalid("load levels must be nonempty and positive"));
        }
        if self.dispatches_per_level == 0 || self.fault_buses.is_empty() {
            return Err(Error::invalid("need at least one dispatch per level and one fault bus"));
        }
        if let Some(b) = self.fault_buses.iter().find(|b| case.bus_index(**b).is_none()) {
            return Err(Error::invalid(format!("fault bus {b} is not in the case")));
        }
        Scenario {
            load_scale: 1.0,
            dispatch_seed: 0,
            fault_bus: None,
            fault_clearing_cycles: self.clearing_cycles,
            observation_horizon_s: self.horizon_s,
        }
        .validate(case.base_frequency)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1)).unwrap_or(0);
            Error::format(line, e.message().to_string())
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseDescriptor {
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discard {
    pub scenario_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    pub case_id: String,
    pub plan: ScenarioPlan,
    pub seed: u64,
    pub noise: Option<NoiseDescriptor>,
    pub discarded: Vec<Discard>,
    pub samples: Vec<FeatureVector>,
}

impl KnowledgeBase {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let stable = self.samples.iter().filter(|s| s.label > 0).count();
        (stable, self.samples.len() - stable)
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<FeatureVector> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("write to memory");
        String::from_utf8(buf).expect("utf-8")
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = KbHeader {
            kb_format: KB_FORMAT,
            case_id: self.case_id.clone(),
            plan: self.plan.clone(),
            seed: self.seed,
            features: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            noise: self.noise,
            n_samples: self.samples.len(),
            discarded: self.discarded.clone(),
        };
        writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
        for s in &self.samples {
            let rec = KbRecord { id: s.scenario_id.clone(), x: s.to_array().to_vec(), label: s.label };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("record serializes"))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or_else(|| Error::format(1, "empty file"))?;
        let header: KbHeader = serde_json::from_str(first).map_err(|e| Error::format(1, format!("bad header: {e}")))?;
        if header.kb_format != KB_FORMAT {
            return Err(Error::format(1, format!("unsupported kb_format {} (expected {KB_FORMAT})", header.kb_format)));
        }
        if header.features.len() != N_FEATURES || header.features.iter().zip(FEATURE_NAMES).any(|(a, b)| a != b) {
            return Err(Error::format(1, "feature order must be Tz1..Tz23"));
        }
        let mut samples = Vec::with_capacity(header.n_samples);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = i + 1;
            let rec: KbRecord = serde_json::from_str(line).map_err(|e| Error::format(line_no, e.to_string()))?;
            if rec.x.len() != N_FEATURES {
                return Err(Error::format(line_no, format!("expected {N_FEATURES} features, got {}", rec.x.len())));
            }
            let arr: [f64; N_FEATURES] = rec.x.try_into().unwrap();
            let fv = FeatureVector::from_array(&arr, rec.label, rec.id)
                .map_err(|e| Error::format(line_no, e.to_string()))?;
            samples.push(fv);
        }
        if samples.len() != header.n_samples {
            return Err(Error::format(
                text.lines().count(),
                format!("header announces {} samples, found {}", header.n_samples, samples.len()),
            ));
        }
        Ok(Self {
            case_id: header.case_id,
            plan: header.plan,
            seed: header.seed,
            noise: header.noise,
            discarded: header.discarded,
            samples,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct KbHeader {
    kb_format: u32,
    case_id: String,
    plan: ScenarioPlan,
    seed: u64,
    features: Vec<String>,
    noise: Option<NoiseDescriptor>,
    n_samples: usize,
    discarded: Vec<Discard>,
}

#[derive(Serialize, Deserialize)]
struct KbRecord {
    id: String,
    x: Vec<f64>,
    label: i8,
}

pub fn save_kb(kb: &KnowledgeBase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, kb.to_text()).map_err(|e| Error::io(path, e))
}

pub fn load_kb(path: impl AsRef<Path>) -> Result<KnowledgeBase> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    KnowledgeBase::from_text(&text)
}

/// Hex SHA-256 of a file's bytes.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex_digest(&bytes))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Mechanical power for every generator: the scaled total demand split by
/// shares drawn from a symmetric Dirichlet.
/// Generator 1's value is a starting point only; it becomes the slack in
/// the equilibrium solve.
pub fn dispatch(case: &NetworkCase, load_scale: f64, seed: u64) -> Vec<f64> {
    let alpha = DISPATCH_CONCENTRATION / case.n_generators() as f64;
    let shares = Gamma::new(alpha, 1.0).expect("positive shape");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<f64> = (0..case.n_generators()).map(|_| shares.sample(&mut rng)).collect();
    let sum: f64 = draws.iter().sum();
    let demand = case.total_load() * load_scale;
    draws.iter().map(|d| demand * d / sum).collect()
}

/// Multiplies every δ, ω and Pe sample by `1 + ε`, `ε ~ U[−r, r]`
/// independently. Mechanical power and inertia are left alone.
pub fn inject_noise(traj: &Trajectory, max_rel_error: f64, seed: u64) -> Result<Trajectory> {
    if !(0.0..=MAX_NOISE).contains(&max_rel_error) {
        return Err(Error::invalid(format!("max_rel_error must lie in [0, {MAX_NOISE}], got {max_rel_error}")));
    }
    let mut out = traj.clone();
    if max_rel_error == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for channel in [&mut out.delta, &mut out.omega_dev, &mut out.pe] {
        for series in channel.iter_mut() {
            for v in series.iter_mut() {
                let eps: f64 = rng.random_range(-max_rel_error..=max_rel_error);
                *v *= 1.0 + eps;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Uniform draw of `n_train` indices without replacement; the rest is test.
pub fn split(kb_len: usize, n_train: usize, seed: u64) -> Result<Split> {
    if n_train == 0 || n_train >= kb_len {
        return Err(Error::invalid(format!("n_train must lie in (0, {kb_len}), got {n_train}")));
    }
    let mut idx: Vec<usize> = (0..kb_len).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test, seed })
}

pub fn scenario_id(level: usize, dispatch: usize, fault_bus: usize) -> String {
    format!("L{level:02}-D{dispatch}-F{fault_bus}")
}

enum Outcome {
    Sample(FeatureVector),
    Discard(Discard),
}

/// Simulates every scenario of the plan and builds the labeled feature set.
/// Labels come from the clean trajectory; with `noise`, features come from
/// the perturbed one.
pub fn generate_kb(case: &NetworkCase, plan: &ScenarioPlan, noise: Option<f64>) -> Result<KnowledgeBase> {
    case.validate()?;
    plan.validate(case)?;
    if let Some(r) = noise {
        if !(0.0..=MAX_NOISE).contains(&r) {
            return Err(Error::invalid(format!("noise must lie in [0, {MAX_NOISE}], got {r}")));
        }
    }
    let n_faults = plan.fault_buses.len();
    let points: Vec<(usize, usize)> =
        (0..plan.load_levels.len()).flat_map(|l| (0..plan.dispatches_per_level).map(move |d| (l, d))).collect();

    let outcomes: Vec<Vec<Outcome>> =
        points.par_iter().map(|&(l, d)| operating_point(case, plan, noise, l, d, n_faults)).collect::<Result<_>>()?;

    let mut samples = Vec::new();
    let mut discarded = Vec::new();
    for o in outcomes.into_iter().flatten() {
        match o {
            Outcome::Sample(s) => samples.push(s),
            Outcome::Discard(d) => {
                log::info!("discarded {}: {}", d.scenario_id, d.reason);
                discarded.push(d)
            }
        }
    }
    let planned = plan.planned_size();
    if discarded.len() as f64 > MAX_DISCARD_FRACTION * planned as f64 {
        return Err(Error::KbDegenerate(format!(
            "{} of {planned} scenarios discarded (limit {:.0}%)",
            discarded.len(),
            MAX_DISCARD_FRACTION * 100.0
        )));
    }
    let kb = KnowledgeBase {
        case_id: case.name.clone(),
        plan: plan.clone(),
        seed: plan.master_seed,
        noise: noise.map(|r| NoiseDescriptor { max_rel_error: r }),
        discarded,
        samples,
    };
    let (stable, unstable) = kb.class_counts();
    if stable == 0 || unstable == 0 {
        return Err(Error::KbDegenerate(format!(
            "only one class present ({stable} stable, {unstable} unstable); adjust the fault set"
        )));
    }
    Ok(kb)
}

fn operating_point(
    case: &NetworkCase,
    plan: &ScenarioPlan,
    noise: Option<f64>,
    level: usize,
    disp: usize,
    n_faults: usize,
) -> Result<Vec<Outcome>> {
    let scale = plan.load_levels[level];
    let point_index = (level * plan.dispatches_per_level + disp) as u64;
    let dispatch_seed = child_seed(plan.master_seed, DISPATCH_STREAM, point_index);
    let ids: Vec<String> = plan.fault_buses.iter().map(|&b| scenario_id(level, disp, b)).collect();
    let discard_all = |reason: String| -> Vec<Outcome> {
        ids.iter().map(|id| Outcome::Discard(Discard { scenario_id: id.clone(), reason: reason.clone() })).collect()
    };

    let pre = match netmodel::reduce_to_generators(case, scale, None) {
        Ok(r) => r,
        Err(e) if e.is_numerical() => return Ok(discard_all(e.to_string())),
        Err(e) => return Err(e),
    };
    let pm = dispatch(case, scale, dispatch_seed);
    let eq = match netmodel::solve_equilibrium(case, &pre, &pm) {
        Ok(eq) => eq,
        Err(e) if e.is_numerical() => return Ok(discard_all(e.to_string())),
        Err(e) => return Err(e),
    };

    let mut out = Vec::with_capacity(n_faults);
    for (f, &bus) in plan.fault_buses.iter().enumerate() {
        let scenario = Scenario {
            load_scale: scale,
            dispatch_seed,
            fault_bus: Some(bus),
            fault_clearing_cycles: plan.clearing_cycles,
            observation_horizon_s: plan.horizon_s,
        };
        let traj = netmodel::reduce_to_generators(case, scale, Some(bus))
            .and_then(|fault| simulator::integrate(case, &pre, &fault, &scenario, &eq));
        let traj = match traj {
            Ok(t) => t,
            Err(e) if e.is_numerical() => {
                out.push(Outcome::Discard(Discard { scenario_id: ids[f].clone(), reason: e.to_string() }));
                continue;
            }
            Err(e) => return Err(e),
        };
        let label = simulator::label(&traj)?.value;
        let observed = match noise {
            Some(r) if r > 0.0 => {
                let scenario_number = point_index * n_faults as u64 + f as u64;
                inject_noise(&traj, r, child_seed(plan.master_seed, NOISE_STREAM, scenario_number))?
            }
            _ => traj,
        };
        out.push(Outcome::Sample(features::extract(&observed, label, ids[f].clone())?));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan(seed: u64) -> ScenarioPlan {
        ScenarioPlan {
            load_levels: vec![0.9, 1.2],
            dispatches_per_level: 2,
            fault_buses: vec![3, 7, 9],
            clearing_cycles: 5,
            horizon_s: 2.0,
            master_seed: seed,
        }
    }

    #[test]
    fn planned_sizes() {
        let mut p = ScenarioPlan::new((1..=24).collect(), 0);
        assert_eq!(p.planned_size(), 1200);
        p = ScenarioPlan::desk(0);
        assert_eq!(p.planned_size(), 400);
        assert_eq!(p.load_levels.len(), 10);
        assert_eq!(p.load_levels[9], 1.3);
    }

    #[test]
    fn split_sizes_and_partition() {
        for (n, k) in [(1200, 600), (1200, 900), (10, 1)] {
            let s = split(n, k, 42).unwrap();
            assert_eq!(s.train.len(), k);
            assert_eq!(s.test.len(), n - k);
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
        assert!(split(10, 0, 0).is_err());
        assert!(split(10, 10, 0).is_err());
        assert_eq!(split(50, 20, 5).unwrap(), split(50, 20, 5).unwrap());
    }

    fn sample_traj() -> Trajectory {
        let case = NetworkCase::bundled_case3();
        let pre = netmodel::reduce_to_generators(&case, 1.0, None).unwrap();
        let eq = netmodel::solve_equilibrium(&case, &pre, &dispatch(&case, 1.0, 3)).unwrap();
        simulator::simulate(&case, &Scenario::new(1.0, 3, Some(7)), &eq).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let t = sample_traj();
        assert_eq!(inject_noise(&t, 0.0, 9).unwrap(), t);
    }

    #[test]
    fn noise_bounded_and_deterministic() {
        let t = sample_traj();
        let a = inject_noise(&t, 0.01, 9).unwrap();
        let b = inject_noise(&t, 0.01, 9).unwrap();
        assert_eq!(a, b);
        for (ch_a, ch_t) in [(&a.delta, &t.delta), (&a.omega_dev, &t.omega_dev), (&a.pe, &t.pe)] {
            for (sa, st) in ch_a.iter().zip(ch_t) {
                for (x, y) in sa.iter().zip(st) {
                    assert!((x - y).abs() <= 0.01 * y.abs() * (1.0 + 1e-12));
                }
            }
        }
        assert_eq!(a.pm, t.pm);
        assert_eq!(a.inertia, t.inertia);
        assert_ne!(a.pe, t.pe);
    }

    #[test]
    fn negative_noise_rejected() {
        assert!(matches!(inject_noise(&sample_traj(), -0.01, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn generation_is_deterministic_and_labels_ignore_noise() {
        let case = NetworkCase::bundled_case3();
        let plan = tiny_plan(0);
        let a = generate_kb(&case, &plan, None).unwrap();
        let b = generate_kb(&case, &plan, None).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(a.len() + a.discarded.len(), plan.planned_size());
        let noisy = generate_kb(&case, &plan, Some(0.01)).unwrap();
        assert_eq!(noisy.len(), a.len());
        for (x, y) in a.samples.iter().zip(&noisy.samples) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.scenario_id, y.scenario_id);
        }
        assert_ne!(a.samples[0].to_array(), noisy.samples[0].to_array());
    }

    #[test]
    fn kb_text_round_trip() {
        let case = NetworkCase::bundled_case3();
        let kb = generate_kb(&case, &tiny_plan(4), Some(0.01)).unwrap();
        assert_eq!(KnowledgeBase::from_text(&kb.to_text()).unwrap(), kb);
    }

    #[test]
    fn empty_kb_is_header_only() {
        let kb = KnowledgeBase {
            case_id: "x".into(),
            plan: tiny_plan(0),
            seed: 0,
            noise: None,
            discarded: vec![],
            samples: vec![],
        };
        let text = kb.to_text();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(KnowledgeBase::from_text(&text).unwrap(), kb);
    }

    #[test]
    fn shuffled_header_rejected() {
        let case = NetworkCase::bundled_case3();
        let text = generate_kb(&case, &tiny_plan(4), None).unwrap().to_text();
        let bad = text.replacen("\"Tz1\",\"Tz2\"", "\"Tz2\",\"Tz1\"", 1);
        assert_ne!(bad, text);
        assert!(matches!(KnowledgeBase::from_text(&bad), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn malformed_record_reports_line() {
        let case = NetworkCase::bundled_case3();
        let text = generate_kb(&case, &tiny_plan(4), None).unwrap().to_text();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "{\"id\":\"x\",\"x\":[1,2],\"label\":1}";
        let bad = lines.join("\n");
        match KnowledgeBase::from_text(&bad) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let case = NetworkCase::bundled_case3();
        let text = generate_kb(&case, &tiny_plan(4), None).unwrap().to_text();
        let bad = text.replacen("\"kb_format\":1", "\"kb_format\":7", 1);
        assert!(matches!(KnowledgeBase::from_text(&bad), Err(Error::Format { line: 1, .. })));
    }

    #[test]
    fn single_class_kb_is_degenerate() {
        let case = NetworkCase::bundled_case3();
        assert!(matches!(generate_kb(&case, &tiny_plan(1), None), Err(Error::KbDegenerate(_))));
    }

    #[test]
    fn child_seeds_differ() {
        let a = child_seed(1, DISPATCH_STREAM, 0);
        assert_ne!(a, child_seed(1, DISPATCH_STREAM, 1));
        assert_ne!(a, child_seed(2, DISPATCH_STREAM, 0));
        assert_ne!(a, child_seed(1, NOISE_STREAM, 0));
    }

    #[test]
    fn dispatch_covers_scaled_demand() {
        let case = NetworkCase::bundled_case3();
        let pm = dispatch(&case, 1.3, 11);
        assert!((pm.iter().sum::<f64>() - 1.3 * case.total_load()).abs() < 1e-12);
        assert!(pm.iter().all(|p| *p > 0.0));
    }
}
