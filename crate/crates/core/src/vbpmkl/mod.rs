//! Variational-Bayes multinomial probit classifier over a convex combination
//! of per-space kernels.
//!
//! Training alternates the regressor/scale and auxiliary-variable updates
//! with an importance-sampled update of the kernel weights, and stops once
//! the relative change of the lower bound stays below `tol` for `patience`
//! consecutive iterations.

mod predict;
mod state;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use predict::{argmax_class, class_probabilities, Prediction};
pub use state::{regressor_posterior, truncated_corrections, ProbitMklState, RegressorPosterior};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, Standardizer};
use crate::kernels::{KernelChoice, KernelSpec};

pub const MODEL_FORMAT: u32 = 1;

/// External labels for the two TSA classes, in class-index order.
pub const TSA_CLASS_LABELS: [i32; 2] = [1, -1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VbConfig {
    pub max_iters: usize,
    /// Relative lower-bound change treated as converged.
    pub tol: f64,
    /// Consecutive iterations below `tol` required to stop.
    pub patience: usize,
    pub n_importance: usize,
    /// Dirichlet prior concentration.
    pub rho0: f64,
    pub prior_shape: f64,
    pub prior_rate: f64,
    /// Diagonal jitter added to the composite Gram before solves.
    pub jitter: f64,
}

impl Default for VbConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-5,
            patience: 2,
            n_importance: 500,
            rho0: 1.0,
            prior_shape: 1e-3,
            prior_rate: 1e-3,
            jitter: 1e-8,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.patience == 0 || self.n_importance == 0 {
            return Err(Error::invalid("max_iters, patience and n_importance must be positive"));
        }
        if !(self.tol > 0.0 && self.rho0 > 0.0 && self.prior_shape > 0.0 && self.prior_rate > 0.0 && self.jitter >= 0.0)
        {
            return Err(Error::invalid("tol, rho0 and the Gamma prior must be positive; jitter nonnegative"));
        }
        Ok(())
    }
}

/// One feature space: a set of input columns and its kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceSpec {
    pub name: String,
    pub columns: Vec<usize>,
    pub kernel: KernelChoice,
}

/// Training inputs with class indices `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub rows: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
    pub n_classes: usize,
}

impl Dataset {
    /// TSA samples: +1 maps to class 0, −1 to class 1.
    pub fn from_features(samples: &[FeatureVector]) -> Self {
        Self {
            rows: samples.iter().map(|s| s.to_array().to_vec()).collect(),
            targets: samples.iter().map(|s| tsa_class_index(s.label)).collect(),
            n_classes: 2,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn tsa_class_index(label: i8) -> usize {
    if label > 0 {
        0
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    pub name: String,
    pub columns: Vec<usize>,
    pub spec: KernelSpec,
}

/// Everything prediction needs, independent of the training data files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model_format: u32,
    /// External label per class index.
    pub class_labels: Vec<i32>,
    pub standardizer: Standardizer,
    pub spaces: Vec<ModelSpace>,
    pub beta: Vec<f64>,
    pub rho: Vec<f64>,
    /// Per class, the posterior mean over training points.
    pub w_mean: Vec<Vec<f64>>,
    /// Per class, the N×N posterior covariance (rows).
    pub w_cov: Vec<Vec<Vec<f64>>>,
    /// Standardized training inputs (all columns).
    pub train_features: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
    pub lb_trace: Vec<f64>,
    pub config: VbConfig,
    pub seed: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::format(e.line(), e.to_string()))?;
        match value.get("model_format").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_FORMAT as u64 => {}
            other => {
                return Err(Error::format(1, format!("unsupported model_format {other:?} (expected {MODEL_FORMAT})")))
            }
        }
        let model: TrainedModel = serde_json::from_value(value).map_err(|e| Error::format(1, e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        let c = self.class_labels.len();
        let n = self.train_features.len();
        let d = self.standardizer.dim();
        let bad = |m: &str| Err(Error::format(1, m.to_string()));
        if c < 2 || self.w_mean.len() != c || self.w_cov.len() != c {
            return bad("class count disagrees across model fields");
        }
        if self.w_mean.iter().any(|w| w.len() != n)
            || self.w_cov.iter().any(|s| s.len() != n || s.iter().any(|r| r.len() != n))
        {
            return bad("regressor statistics disagree with the retained training set");
        }
        if self.train_features.iter().any(|r| r.len() != d) {
            return bad("retained training features have the wrong width");
        }
        if self.spaces.len() != self.beta.len() || self.spaces.iter().any(|s| s.columns.iter().any(|&col| col >= d)) {
            return bad("feature spaces disagree with the kernel weights or input width");
        }
        crate::kernels::check_simplex(&self.beta, crate::kernels::SIMPLEX_TOL)
    }
}

/// Observer for per-iteration training progress.
pub trait TrainObserver {
    /// Called after the initial state and after every iteration.
    fn on_iteration(&mut self, _iteration: usize, _state: &ProbitMklState) {}
}

impl TrainObserver for () {}

/// Trains a model on `data` with one kernel per space.
pub fn train(data: &Dataset, spaces: &[SpaceSpec], config: &VbConfig, seed: u64) -> Result<TrainedModel> {
    let labels: Vec<i32> =
        if data.n_classes == 2 { TSA_CLASS_LABELS.to_vec() } else { (0..data.n_classes as i32).collect() };
    train_observed(data, spaces, labels, config, seed, &mut ())
}

pub fn train_observed(
    data: &Dataset,
    spaces: &[SpaceSpec],
    class_labels: Vec<i32>,
    config: &VbConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainedModel> {
    if class_labels.len() != data.n_classes {
        return Err(Error::invalid("one external label per class is required"));
    }
    let (standardizer, specs, z, mut state) = prepare(data, spaces, config)?;
    observer.on_iteration(0, &state);
    let (iterations, converged) = run(&mut state, config, seed, observer)?;

    Ok(TrainedModel {
        model_format: MODEL_FORMAT,
        class_labels,
        standardizer,
        spaces: spaces
            .iter()
            .zip(specs)
            .map(|(sp, spec)| ModelSpace { name: sp.name.clone(), columns: sp.columns.clone(), spec })
            .collect(),
        beta: state.kernel.beta.clone(),
        rho: state.rho.clone(),
        w_mean: state.w_mean.row_iter().map(|r| r.iter().copied().collect()).collect(),
        w_cov: state.w_cov.iter().map(|m| m.row_iter().map(|r| r.iter().copied().collect()).collect()).collect(),
        train_features: z,
        converged,
        iterations,
        lb_trace: state.lb_trace.clone(),
        config: config.clone(),
        seed,
        warnings: state.warnings.clone(),
    })
}

type Prepared = (Standardizer, Vec<KernelSpec>, Vec<Vec<f64>>, ProbitMklState);

fn prepare(data: &Dataset, spaces: &[SpaceSpec], config: &VbConfig) -> Result<Prepared> {
    config.validate()?;
    if data.rows.len() != data.targets.len() {
        return Err(Error::invalid("rows and targets differ in length"));
    }
    if spaces.is_empty() {
        return Err(Error::invalid("at least one feature space is required"));
    }
    let standardizer = Standardizer::fit(&data.rows)?;
    let z: Vec<Vec<f64>> = data.rows.iter().map(|r| standardizer.apply(r)).collect();
    let mut space_rows = Vec::with_capacity(spaces.len());
    let mut specs = Vec::with_capacity(spaces.len());
    for sp in spaces {
        if sp.columns.is_empty() || sp.columns.iter().any(|&c| c >= standardizer.dim()) {
            return Err(Error::invalid(format!("space {} has invalid columns", sp.name)));
        }
        let rows: Vec<Vec<f64>> = z.iter().map(|r| sp.columns.iter().map(|&c| r[c]).collect()).collect();
        specs.push(sp.kernel.resolve(&rows)?);
        space_rows.push(rows);
    }
    let state = ProbitMklState::init(&space_rows, specs.clone(), data.targets.clone(), data.n_classes, config)?;
    Ok((standardizer, specs, z, state))
}

/// Standardizes `data`, resolves the kernels and returns the initial
/// variational state, as training would start from.
pub fn init_state(data: &Dataset, spaces: &[SpaceSpec], config: &VbConfig) -> Result<ProbitMklState> {
    Ok(prepare(data, spaces, config)?.3)
}

/// Runs the iteration loop on an initialized state. Returns the number of
/// iterations performed and whether the bound converged.
pub fn run(
    state: &mut ProbitMklState,
    config: &VbConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<(usize, bool)> {
    let mut streak = 0;
    for it in 1..=config.max_iters {
        state.update_regressors_and_scales()?;
        state.update_auxiliaries()?;
        // Common random numbers across iterations keep β's trajectory smooth.
        state.resample_beta(config.n_importance, seed)?;
        let lb = state.lower_bound()?;
        let prev = *state.lb_trace.last().expect("trace starts with the initial bound");
        state.lb_trace.push(lb);
        observer.on_iteration(it, state);
        let rel = (lb - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
        streak = if rel < config.tol { streak + 1 } else { 0 };
        if streak >= config.patience {
            return Ok((it, true));
        }
    }
    log::warn!("training stopped at max_iters = {} without converging", config.max_iters);
    Ok((config.max_iters, false))
}

/// Trains on TSA feature vectors (labels ±1).
pub fn train_tsa(
    samples: &[FeatureVector],
    spaces: &[SpaceSpec],
    config: &VbConfig,
    seed: u64,
) -> Result<TrainedModel> {
    train(&Dataset::from_features(samples), spaces, config, seed)
}
