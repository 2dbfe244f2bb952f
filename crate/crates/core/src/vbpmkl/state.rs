//! Variational posterior state and its coordinate updates.
//!
//! Model, for fixed kernel weights `β`:
//!
//! ```text
//! ψ_cn ~ Gamma(a0, b0)              (shape, rate)
//! w_cn | ψ_cn ~ N(0, 1/ψ_cn)
//! y_n | W ~ N(W·k_n, I_C)
//! t_n = argmax_c y_cn
//! ```
//!
//! with the factorized posterior `q(W)·q(ψ)·q(Y)`. `q(y_n)` is the Gaussian
//! `N(W̄·k_n, I)` truncated to the cone where the observed class wins, so the
//! bound is evaluated with `Y` at its optimum for the current `q(W)`:
//!
//! ```text
//! L = Σ_n [ln Z_n − ½ Σ_c k_nᵀΣ_c k_n]
//!   + Σ_c [½ ln|Σ_c| + N/2]
//!   + Σ_cn [½ E ln ψ_cn − ½ E ψ_cn · E w_cn²]
//!   − Σ_cn KL(q(ψ_cn) ‖ p(ψ_cn))
//! ```
//!
//! where `Z_n = E_u Π_{j≠i} Φ(u + m_in − m_jn)` is the probit likelihood of
//! the observed class `i`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use statrs::function::gamma::{digamma, ln_gamma};

use super::VbConfig;
use crate::error::{Error, Result};
use crate::kernels::{CompositeKernelState, KernelSpec};
use crate::quadrature::{log_norm_cdf, log_norm_pdf, NormalRule};

const MAX_JITTER: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct ProbitMklState {
    pub n_classes: usize,
    /// Class index per training sample.
    pub targets: Vec<usize>,
    pub kernel: CompositeKernelState,
    /// C×N posterior means of the regressors.
    pub w_mean: DMatrix<f64>,
    /// Per-class N×N posterior covariance.
    pub w_cov: Vec<DMatrix<f64>>,
    pub w_cov_log_det: Vec<f64>,
    /// C×N posterior means of the auxiliary variables.
    pub y_mean: DMatrix<f64>,
    pub scale_shape: f64,
    /// C×N Gamma rates of the regressor precisions.
    pub scale_rate: DMatrix<f64>,
    pub rho: Vec<f64>,
    pub lb_trace: Vec<f64>,
    pub warnings: Vec<String>,
    pub(crate) prior_shape: f64,
    pub(crate) prior_rate: f64,
    pub(crate) rho0: f64,
    pub(crate) jitter: f64,
    kk: Option<DMatrix<f64>>,
}

/// Gaussian posterior of one class's regressors.
#[derive(Debug, Clone)]
pub struct RegressorPosterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub log_det_cov: f64,
}

/// `Σ = (KᵀK + diag(α))⁻¹`, `w̄ = Σ·Kᵀ·ȳ`, with escalating jitter if the
/// precision matrix is not numerically positive definite.
pub fn regressor_posterior(
    k: &DMatrix<f64>,
    kk: &DMatrix<f64>,
    prior_precision: &[f64],
    y: &[f64],
) -> Result<RegressorPosterior> {
    let n = k.ncols();
    let mut extra = 0.0;
    loop {
        let mut p = kk.clone();
        for i in 0..n {
            p[(i, i)] += prior_precision[i] + extra;
        }
        if let Some(chol) = p.cholesky() {
            let log_det_p: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let mut cov = chol.inverse();
            symmetrize(&mut cov);
            let rhs = k.tr_mul(&DVector::from_column_slice(y));
            let mean = &cov * rhs;
            if mean.iter().all(|v| v.is_finite()) && log_det_p.is_finite() {
                return Ok(RegressorPosterior { mean, cov, log_det_cov: -log_det_p });
            }
        }
        extra = if extra == 0.0 { 1e-8 } else { extra * 10.0 };
        if extra > MAX_JITTER * (1.0 + 1e-9) {
            return Err(Error::numerical(format!(
                "regressor precision matrix not positive definite after jitter {MAX_JITTER:e}"
            )));
        }
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Truncated-Gaussian corrections `E[y_cn] = m_cn − corr_c` for the rows
/// `c ≠ target`, and `ln Z_n`.
///
/// `corr_c = E_u[φ(u + d_c)·Π_{j≠i,c} Φ(u + d_j)] / Z_n` with
/// `d_j = m_in − m_jn`.
pub fn truncated_corrections(means: &[f64], target: usize) -> (Vec<f64>, f64) {
    let rule = NormalRule::standard();
    let c = means.len();
    let d: Vec<f64> = means.iter().map(|m| means[target] - m).collect();
    let log_z = rule.log_expect_exp(|u| (0..c).filter(|&j| j != target).map(|j| log_norm_cdf(u + d[j])).sum());
    let mut corr = vec![0.0; c];
    for cls in (0..c).filter(|&j| j != target) {
        let log_num = rule.log_expect_exp(|u| {
            log_norm_pdf(u + d[cls])
                + (0..c).filter(|&j| j != target && j != cls).map(|j| log_norm_cdf(u + d[j])).sum::<f64>()
        });
        corr[cls] = (log_num - log_z).exp();
    }
    (corr, log_z)
}

/// `KL(Gamma(a, b) ‖ Gamma(a0, b0))`, shape/rate parameterization.
fn kl_gamma(a: f64, b: f64, a0: f64, b0: f64) -> f64 {
    (a - a0) * digamma(a) - ln_gamma(a) + ln_gamma(a0) + a0 * (b.ln() - b0.ln()) + a * (b0 - b) / b
}

impl ProbitMklState {
    /// Fresh state: zero regressor means at the prior covariance, auxiliary
    /// means +1 on each sample's class row and −1 elsewhere, uniform `β`.
    pub fn init(
        spaces: &[Vec<Vec<f64>>],
        specs: Vec<KernelSpec>,
        targets: Vec<usize>,
        n_classes: usize,
        config: &VbConfig,
    ) -> Result<Self> {
        config.validate()?;
        let n = targets.len();
        if n_classes < 2 {
            return Err(Error::DegenerateLabels(format!("need at least 2 classes, got {n_classes}")));
        }
        if spaces.iter().any(|rows| rows.len() != n) {
            return Err(Error::invalid("every feature space needs one row per training sample"));
        }
        let mut counts = vec![0usize; n_classes];
        for &t in &targets {
            if t >= n_classes {
                return Err(Error::invalid(format!("class index {t} out of range")));
            }
            counts[t] += 1;
        }
        if let Some(c) = counts.iter().position(|&k| k == 0) {
            return Err(Error::DegenerateLabels(format!("class {c} has no training samples")));
        }
        let s = spaces.len();
        if s == 0 {
            return Err(Error::invalid("at least one feature space is required"));
        }
        let beta = vec![1.0 / s as f64; s];
        let kernel = CompositeKernelState::new(spaces, specs, beta)?;
        let y_mean = DMatrix::from_fn(n_classes, n, |c, i| if targets[i] == c { 1.0 } else { -1.0 });
        let prior_var = config.prior_rate / config.prior_shape;
        let mut state = Self {
            n_classes,
            targets,
            kernel,
            w_mean: DMatrix::zeros(n_classes, n),
            w_cov: vec![DMatrix::from_diagonal_element(n, n, prior_var); n_classes],
            w_cov_log_det: vec![n as f64 * prior_var.ln(); n_classes],
            y_mean,
            scale_shape: config.prior_shape,
            scale_rate: DMatrix::from_element(n_classes, n, config.prior_rate),
            rho: vec![config.rho0; s],
            lb_trace: Vec::new(),
            warnings: Vec::new(),
            prior_shape: config.prior_shape,
            prior_rate: config.prior_rate,
            rho0: config.rho0,
            jitter: config.jitter,
            kk: None,
        };
        let lb = state.lower_bound()?;
        state.lb_trace.push(lb);
        Ok(state)
    }

    pub fn n_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn beta(&self) -> &[f64] {
        &self.kernel.beta
    }

    /// Composite Gram with the diagonal jitter used in every solve.
    pub fn regression_kernel(&self) -> DMatrix<f64> {
        let mut k = self.kernel.composite.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += self.jitter;
        }
        k
    }

    /// `W̄·K`, the C×N matrix of latent means at the training points.
    pub fn latent_means(&self) -> DMatrix<f64> {
        &self.w_mean * self.regression_kernel()
    }

    fn kernel_square(&mut self) -> DMatrix<f64> {
        if self.kk.is_none() {
            let k = self.regression_kernel();
            self.kk = Some(k.tr_mul(&k));
        }
        self.kk.clone().unwrap()
    }

    /// Regressor posteriors for every class followed by the conjugate
    /// Gamma update of their precisions.
    pub fn update_regressors_and_scales(&mut self) -> Result<()> {
        let k = self.regression_kernel();
        let kk = self.kernel_square();
        let shape = self.scale_shape;
        let posts: Vec<RegressorPosterior> = (0..self.n_classes)
            .into_par_iter()
            .map(|c| {
                let alpha: Vec<f64> = self.scale_rate.row(c).iter().map(|b| shape / b).collect();
                let y: Vec<f64> = self.y_mean.row(c).iter().copied().collect();
                regressor_posterior(&k, &kk, &alpha, &y)
            })
            .collect::<Result<_>>()?;
        let n = self.n_samples();
        self.scale_shape = self.prior_shape + 0.5;
        for (c, post) in posts.into_iter().enumerate() {
            for i in 0..n {
                self.w_mean[(c, i)] = post.mean[i];
                let ew2 = post.mean[i] * post.mean[i] + post.cov[(i, i)];
                self.scale_rate[(c, i)] = self.prior_rate + 0.5 * ew2;
            }
            self.w_cov[c] = post.cov;
            self.w_cov_log_det[c] = post.log_det_cov;
        }
        Ok(())
    }

    /// Posterior means of the auxiliary variables under the multinomial
    /// probit truncation.
    pub fn update_auxiliaries(&mut self) -> Result<()> {
        let m = self.latent_means();
        let c = self.n_classes;
        let cols: Vec<Vec<f64>> = (0..self.n_samples())
            .into_par_iter()
            .map(|n| {
                let means: Vec<f64> = m.column(n).iter().copied().collect();
                let target = self.targets[n];
                let (corr, _) = truncated_corrections(&means, target);
                let mut y = vec![0.0; c];
                let mut total = 0.0;
                for j in (0..c).filter(|&j| j != target) {
                    y[j] = means[j] - corr[j];
                    total += corr[j];
                }
                y[target] = means[target] + total;
                if y.iter().all(|v| v.is_finite()) {
                    Ok(y)
                } else {
                    Err(Error::numerical(format!("auxiliary update non-finite at sample {n}")))
                }
            })
            .collect::<Result<_>>()?;
        for (n, col) in cols.into_iter().enumerate() {
            for (j, v) in col.into_iter().enumerate() {
                self.y_mean[(j, n)] = v;
            }
        }
        Ok(())
    }

    /// Normalized importance weights of candidate kernel weights under the
    /// fit term `exp(−½‖Ȳ − W̄·K^β‖²_F)`. `None` if the weights are not
    /// finite.
    pub fn importance_weights(&self, candidates: &[Vec<f64>]) -> Option<Vec<f64>> {
        let s = self.kernel.n_spaces();
        // Residual R(β) = (Ȳ − εW̄) − Σ_s β_s·W̄K_s; expand the squared norm.
        let r0 = &self.y_mean - &self.w_mean * self.jitter;
        let f: Vec<DMatrix<f64>> = self.kernel.grams.iter().map(|g| &self.w_mean * g).collect();
        let r0r0 = r0.norm_squared();
        let r0f: Vec<f64> = f.iter().map(|fs| r0.dot(fs)).collect();
        let mut ff = vec![vec![0.0; s]; s];
        for a in 0..s {
            for b in 0..=a {
                let v = f[a].dot(&f[b]);
                ff[a][b] = v;
                ff[b][a] = v;
            }
        }
        let logw: Vec<f64> = candidates
            .iter()
            .map(|beta| {
                let mut q = r0r0;
                for a in 0..s {
                    q -= 2.0 * beta[a] * r0f[a];
                    for b in 0..s {
                        q += beta[a] * beta[b] * ff[a][b];
                    }
                }
                -0.5 * q.max(0.0)
            })
            .collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        let raw: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return None;
        }
        Some(raw.into_iter().map(|w| w / total).collect())
    }

    /// Candidate kernel weights drawn from `Dirichlet(ρ)`.
    pub fn draw_candidates(&self, n_samples: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gammas: Vec<Gamma<f64>> = self.rho.iter().map(|&r| Gamma::new(r, 1.0).expect("rho > 0")).collect();
        (0..n_samples)
            .map(|_| {
                let g: Vec<f64> = gammas.iter().map(|d| d.sample(&mut rng)).collect();
                let total: f64 = g.iter().sum();
                g.into_iter().map(|v| v / total).collect()
            })
            .collect()
    }

    /// Importance-sampled update of `β` and the Dirichlet parameters `ρ`,
    /// then the composite Gram.
    pub fn resample_beta(&mut self, n_samples: usize, seed: u64) -> Result<()> {
        let s = self.kernel.n_spaces();
        if s == 1 {
            self.rho = vec![self.rho0 + 1.0];
            return Ok(());
        }
        let candidates = self.draw_candidates(n_samples, seed);
        let Some(weights) = self.importance_weights(&candidates) else {
            let msg = "importance weights underflowed; keeping the current kernel weights".to_string();
            log::warn!("{msg}");
            self.warnings.push(msg);
            return Ok(());
        };
        let mut beta = vec![0.0; s];
        for (cand, w) in candidates.iter().zip(&weights) {
            for (b, v) in beta.iter_mut().zip(cand) {
                *b += w * v;
            }
        }
        let total: f64 = beta.iter().sum();
        for b in &mut beta {
            *b /= total;
        }
        self.rho = beta.iter().map(|b| self.rho0 + s as f64 * b).collect();
        self.kernel.set_beta(beta)?;
        self.kk = None;
        Ok(())
    }

    /// Variational lower bound at the current posteriors.
    pub fn lower_bound(&self) -> Result<f64> {
        let k = self.regression_kernel();
        let m = &self.w_mean * &k;
        let n = self.n_samples();
        let c = self.n_classes;

        let log_z: f64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let means: Vec<f64> = m.column(i).iter().copied().collect();
                let target = self.targets[i];
                NormalRule::standard().log_expect_exp(|u| {
                    (0..c).filter(|&j| j != target).map(|j| log_norm_cdf(u + means[target] - means[j])).sum()
                })
            })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum();

        let per_class: Vec<f64> = (0..c)
            .into_par_iter()
            .map(|cls| {
                let ks = &k * &self.w_cov[cls];
                let quad: f64 = (0..n).map(|i| ks.row(i).dot(&k.column(i).transpose())).sum();
                let a = self.scale_shape;
                let mut prior_terms = 0.0;
                for i in 0..n {
                    let b = self.scale_rate[(cls, i)];
                    let e_psi = a / b;
                    let e_ln_psi = digamma(a) - b.ln();
                    let w = self.w_mean[(cls, i)];
                    let ew2 = w * w + self.w_cov[cls][(i, i)];
                    prior_terms +=
                        0.5 * e_ln_psi - 0.5 * e_psi * ew2 - kl_gamma(a, b, self.prior_shape, self.prior_rate);
                }
                -0.5 * quad + 0.5 * self.w_cov_log_det[cls] + 0.5 * n as f64 + prior_terms
            })
            .collect();

        let lb = log_z + per_class.iter().sum::<f64>();
        if lb.is_finite() {
            Ok(lb)
        } else {
            Err(Error::numerical("lower bound is not finite"))
        }
    }

    /// One pass of the fixed-`β` updates.
    pub fn sweep(&mut self) -> Result<()> {
        self.update_regressors_and_scales()?;
        self.update_auxiliaries()
    }
}
