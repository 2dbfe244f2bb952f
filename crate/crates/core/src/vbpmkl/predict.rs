use serde::{Deserialize, Serialize};

use super::TrainedModel;
use crate::error::{Error, Result};
use crate::quadrature::{log_norm_cdf, NormalRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Class-membership probabilities, in model class order.
    pub probs: Vec<f64>,
    /// External label of the winning class (+1 stable / −1 unstable for TSA
    /// models).
    pub label: i32,
    /// Predictive mean per class.
    pub mean: Vec<f64>,
    /// Predictive standard deviation per class.
    pub deviation: Vec<f64>,
    /// Probability mass before renormalization.
    pub mass: f64,
}

/// `p(t* = c) = E_u Π_{j≠c} Φ((u·v_c + m_c − m_j)/v_j)`, returned with the
/// mass before renormalization.
pub fn class_probabilities(mean: &[f64], deviation: &[f64]) -> Result<(Vec<f64>, f64)> {
    let c = mean.len();
    if deviation.len() != c || c == 0 {
        return Err(Error::invalid("mean and deviation must have one entry per class"));
    }
    let rule = NormalRule::standard();
    let raw: Vec<f64> = (0..c)
        .map(|cls| {
            rule.log_expect_exp(|u| {
                (0..c)
                    .filter(|&j| j != cls)
                    .map(|j| log_norm_cdf((u * deviation[cls] + mean[cls] - mean[j]) / deviation[j]))
                    .sum()
            })
            .exp()
        })
        .collect();
    let mass: f64 = raw.iter().sum();
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::numerical(format!("predictive quadrature produced mass {mass}")));
    }
    Ok((raw.iter().map(|p| p / mass).collect(), mass))
}

/// Index of the largest probability; ties go to the lowest class index.
pub fn argmax_class(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    best
}

impl TrainedModel {
    /// Composite test-kernel row against the retained training points for a
    /// raw (unstandardized) input.
    pub fn test_kernel_row(&self, sample: &[f64]) -> Result<Vec<f64>> {
        if sample.len() != self.standardizer.dim() {
            return Err(Error::invalid(format!(
                "sample has {} features, model expects {}",
                sample.len(),
                self.standardizer.dim()
            )));
        }
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample has non-finite features"));
        }
        let z = self.standardizer.apply(sample);
        let n = self.train_features.len();
        let mut row = vec![0.0; n];
        for (space, &b) in self.spaces.iter().zip(&self.beta) {
            if b == 0.0 {
                continue;
            }
            let x: Vec<f64> = space.columns.iter().map(|&c| z[c]).collect();
            for (j, train) in self.train_features.iter().enumerate() {
                let t: Vec<f64> = space.columns.iter().map(|&c| train[c]).collect();
                row[j] += b * space.spec.eval(&x, &t);
            }
        }
        Ok(row)
    }

    pub fn predictive_distribution(&self, sample: &[f64]) -> Result<Prediction> {
        let k = self.test_kernel_row(sample)?;
        let c = self.n_classes();
        let mut mean = vec![0.0; c];
        let mut deviation = vec![0.0; c];
        for cls in 0..c {
            mean[cls] = self.w_mean[cls].iter().zip(&k).map(|(w, v)| w * v).sum();
            let cov = &self.w_cov[cls];
            let quad: f64 =
                k.iter().enumerate().map(|(i, ki)| ki * cov[i].iter().zip(&k).map(|(s, kj)| s * kj).sum::<f64>()).sum();
            deviation[cls] = (1.0 + quad.max(0.0)).sqrt();
        }
        let (probs, mass) = class_probabilities(&mean, &deviation)?;
        let label = self.class_labels[argmax_class(&probs)];
        Ok(Prediction { probs, label, mean, deviation, mass })
    }

    pub fn classify(&self, sample: &[f64]) -> Result<i32> {
        Ok(self.predictive_distribution(sample)?.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::norm_cdf;
    use rand::{Rng, SeedableRng};

    #[test]
    fn equal_moments_give_uniform() {
        for c in 2..5 {
            let (p, _) = class_probabilities(&vec![0.3; c], &vec![1.7; c]).unwrap();
            for v in p {
                assert!((v - 1.0 / c as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_class_probit_identity() {
        for a in [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0] {
            let (p, _) = class_probabilities(&[a, 0.0], &[1.0, 1.0]).unwrap();
            assert!((p[0] - norm_cdf(a / std::f64::consts::SQRT_2)).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_is_one_before_normalization() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let c = rng.random_range(2..5);
            let m: Vec<f64> = (0..c).map(|_| rng.random_range(-4.0..4.0)).collect();
            let v: Vec<f64> = (0..c).map(|_| rng.random_range(1.0..3.0)).collect();
            let (_, mass) = class_probabilities(&m, &v).unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
        }
    }

    #[test]
    fn argmax_ties_pick_first() {
        assert_eq!(argmax_class(&[0.5, 0.5]), 0);
        assert_eq!(argmax_class(&[0.1, 0.9]), 1);
        assert_eq!(argmax_class(&[0.9, 0.1]), 0);
    }
}
