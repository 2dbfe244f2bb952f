//! Gauss–Hermite expectations over a standard normal variable, plus the
//! normal density and distribution helpers the probit model needs.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use libm::erfc;

/// Node count used for every expectation over `u ~ N(0, 1)`.
pub const GH_NODES: usize = 64;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Nodes and weights rescaled for `E[f(u)]` with `u ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct NormalRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl NormalRule {
    /// Rule with `n` points, built by Newton iteration on the orthonormal
    /// Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut x = vec![0.0; n];
        let mut log_w = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut z = 0.0;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            // Hermite weight is 2/pp²; dividing by √π normalizes to N(0, 1).
            let lw = (2.0f64).ln() - 2.0 * pp.abs().ln() - 0.5 * PI.ln();
            log_w[i] = lw;
            log_w[n - 1 - i] = lw;
        }
        let nodes: Vec<f64> = x.iter().rev().map(|v| v * SQRT_2).collect();
        let log_weights: Vec<f64> = log_w.into_iter().rev().collect();
        let weights = log_weights.iter().map(|l| l.exp()).collect();
        Self { nodes, weights, log_weights }
    }

    /// The shared 64-node rule.
    pub fn standard() -> &'static NormalRule {
        static RULE: OnceLock<NormalRule> = OnceLock::new();
        RULE.get_or_init(|| NormalRule::new(GH_NODES))
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&u, &w)| w * f(u)).sum()
    }

    /// `ln E[exp(g(u))]`, evaluated without leaving log space.
    pub fn log_expect_exp(&self, g: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.log_weights).map(|(&u, &lw)| lw + g(u)).collect();
        log_sum_exp(&terms)
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// `ln Φ(x)`, accurate deep into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -35.0 {
        if x > 5.0 {
            // ln(1 − Φ(−x)) ≈ −Φ(−x) without cancellation.
            return (-norm_cdf(-x)).ln_1p();
        }
        norm_cdf(x).ln()
    } else {
        let x2 = x * x;
        let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_normal_moments() {
        let r = NormalRule::standard();
        assert!((r.expect(|_| 1.0) - 1.0).abs() < 1e-14);
        assert!(r.expect(|u| u).abs() < 1e-13);
        assert!((r.expect(|u| u * u) - 1.0).abs() < 1e-13);
        assert!((r.expect(|u| u.powi(4)) - 3.0).abs() < 1e-12);
        assert!((r.expect(|u| u.powi(6)) - 15.0).abs() < 1e-11);
    }

    #[test]
    fn nodes_are_sorted_and_symmetric() {
        let r = NormalRule::standard();
        assert_eq!(r.nodes.len(), GH_NODES);
        for k in 0..GH_NODES {
            assert!((r.nodes[k] + r.nodes[GH_NODES - 1 - k]).abs() < 1e-12);
            if k > 0 {
                assert!(r.nodes[k] > r.nodes[k - 1]);
            }
        }
    }

    #[test]
    fn probit_convolution_identity() {
        // E_u[Φ(u + a)] = Φ(a/√2)
        let r = NormalRule::standard();
        for a in [-3.0, -1.5, 0.0, 0.7, 3.0] {
            let q = r.expect(|u| norm_cdf(u + a));
            assert!((q - norm_cdf(a / SQRT_2)).abs() < 1e-12, "a = {a}");
            let lq = r.log_expect_exp(|u| log_norm_cdf(u + a));
            assert!((lq - q.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn log_cdf_tail_is_continuous() {
        let below = log_norm_cdf(-35.0 - 1e-9);
        let above = log_norm_cdf(-35.0 + 1e-9);
        assert!((below - above).abs() < 1e-6);
        assert!((log_norm_cdf(0.0) - 0.5f64.ln()).abs() < 1e-15);
        assert!(log_norm_cdf(40.0) <= 0.0);
    }

    #[test]
    fn cdf_pdf_values() {
        assert!((norm_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((norm_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }
}
