//! Base Gram matrices and their convex combination.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σβ = 1` accepted by [`compose`].
pub const SIMPLEX_TOL: f64 = 1e-9;

pub const DEFAULT_POLY_DEGREE: u32 = 2;
pub const DEFAULT_POLY_OFFSET: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { width: f64 },
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { width } if !(width > 0.0 && width.is_finite()) => {
                Err(Error::invalid(format!("Gaussian width must be positive, got {width}")))
            }
            KernelSpec::Polynomial { degree, offset } if degree < 1 || offset.is_nan() || offset < 0.0 => {
                Err(Error::invalid(format!(
                    "polynomial kernel needs degree >= 1 and offset >= 0, got ({degree}, {offset})"
                )))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { width } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
            KernelSpec::Polynomial { degree, offset } => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                (dot + offset).powi(degree as i32)
            }
        }
    }
}

/// Kernel family before its parameters are fixed on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelChoice {
    /// `width: None` selects the median pairwise distance.
    Gaussian {
        width: Option<f64>,
    },
    Polynomial {
        degree: u32,
        offset: f64,
    },
}

impl KernelChoice {
    pub fn gaussian() -> Self {
        KernelChoice::Gaussian { width: None }
    }

    pub fn polynomial() -> Self {
        KernelChoice::Polynomial { degree: DEFAULT_POLY_DEGREE, offset: DEFAULT_POLY_OFFSET }
    }

    pub fn resolve(&self, rows: &[Vec<f64>]) -> Result<KernelSpec> {
        let spec = match *self {
            KernelChoice::Gaussian { width: Some(w) } => KernelSpec::Gaussian { width: w },
            KernelChoice::Gaussian { width: None } => KernelSpec::Gaussian { width: median_pairwise_distance(rows) },
            KernelChoice::Polynomial { degree, offset } => KernelSpec::Polynomial { degree, offset },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Median Euclidean distance over distinct pairs; 1.0 when that median is 0.
pub fn median_pairwise_distance(rows: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(rows.len() * rows.len().saturating_sub(1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let med = if d.len() % 2 == 0 { 0.5 * (d[mid - 1] + d[mid]) } else { d[mid] };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

fn check_rows(rows: &[Vec<f64>]) -> Result<usize> {
    let dim = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != dim {
            return Err(Error::invalid(format!("row {i} has {} columns, expected {dim}", r.len())));
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {i} has non-finite entries")));
        }
    }
    Ok(dim)
}

/// Symmetric Gram matrix over one feature subset.
pub fn base_gram(rows: &[Vec<f64>], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    check_rows(rows)?;
    let n = rows.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(&rows[i], &rows[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// `K*[i, j] = k(test_i, train_j)`.
pub fn cross_gram(train: &[Vec<f64>], test: &[Vec<f64>], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let d_train = check_rows(train)?;
    let d_test = check_rows(test)?;
    if !train.is_empty() && !test.is_empty() && d_train != d_test {
        return Err(Error::invalid(format!("test rows have {d_test} columns but training rows have {d_train}")));
    }
    Ok(DMatrix::from_fn(test.len(), train.len(), |i, j| spec.eval(&test[i], &train[j])))
}

pub fn check_simplex(beta: &[f64], tol: f64) -> Result<()> {
    let sum: f64 = beta.iter().sum();
    if beta.is_empty() || beta.iter().any(|b| b.is_nan() || *b < 0.0) || (sum - 1.0).abs() > tol {
        return Err(Error::SimplexViolation(format!("beta = {beta:?} (sum {sum})")));
    }
    Ok(())
}

/// Entrywise convex combination `Σ_s β_s·grams[s]`.
pub fn compose(grams: &[DMatrix<f64>], beta: &[f64]) -> Result<DMatrix<f64>> {
    if grams.len() != beta.len() || grams.is_empty() {
        return Err(Error::invalid(format!("{} Gram matrices but {} weights", grams.len(), beta.len())));
    }
    check_simplex(beta, SIMPLEX_TOL)?;
    let shape = grams[0].shape();
    if grams.iter().any(|g| g.shape() != shape) {
        return Err(Error::invalid("Gram matrices are not conformable"));
    }
    Ok(weighted_sum(grams, beta))
}

pub(crate) fn weighted_sum(grams: &[DMatrix<f64>], beta: &[f64]) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(grams[0].nrows(), grams[0].ncols());
    for (g, &b) in grams.iter().zip(beta) {
        out.zip_apply(g, |o, v| *o += b * v);
    }
    out
}

/// Per-subset Grams over the training points and their fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeKernelState {
    pub specs: Vec<KernelSpec>,
    pub beta: Vec<f64>,
    pub grams: Vec<DMatrix<f64>>,
    pub composite: DMatrix<f64>,
}

impl CompositeKernelState {
    /// `spaces[s]` holds the training rows of subset `s`.
    pub fn new(spaces: &[Vec<Vec<f64>>], specs: Vec<KernelSpec>, beta: Vec<f64>) -> Result<Self> {
        if spaces.len() != specs.len() {
            return Err(Error::invalid("one kernel spec per feature space is required"));
        }
        let grams = spaces.iter().zip(&specs).map(|(rows, spec)| base_gram(rows, spec)).collect::<Result<Vec<_>>>()?;
        let composite = compose(&grams, &beta)?;
        Ok(Self { specs, beta, grams, composite })
    }

    pub fn set_beta(&mut self, beta: Vec<f64>) -> Result<()> {
        self.composite = compose(&self.grams, &beta)?;
        self.beta = beta;
        Ok(())
    }

    pub fn n_spaces(&self) -> usize {
        self.specs.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect()
    }

    #[test]
    fn gaussian_unit_diagonal_and_closed_form() {
        let rows = vec![vec![0.0], vec![1.0]];
        let k = base_gram(&rows, &KernelSpec::Gaussian { width: 1.0 }).unwrap();
        assert_eq!(k[(0, 0)], 1.0);
        assert_eq!(k[(1, 1)], 1.0);
        assert!((k[(0, 1)] - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn linear_polynomial_is_inner_product() {
        let rows = random_rows(6, 3, 1);
        let k = base_gram(&rows, &KernelSpec::Polynomial { degree: 1, offset: 0.0 }).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                assert!((k[(i, j)] - dot).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cross_gram_consistency() {
        let rows = random_rows(7, 4, 2);
        let spec = KernelSpec::Gaussian { width: 1.3 };
        assert_eq!(cross_gram(&rows, &rows, &spec).unwrap(), base_gram(&rows, &spec).unwrap());
        let single = cross_gram(&rows, &rows[3..4], &spec).unwrap();
        assert_eq!(single[(0, 3)], 1.0);
        let test = random_rows(3, 4, 3);
        let poly = KernelSpec::Polynomial { degree: 3, offset: 0.5 };
        let kx = cross_gram(&rows, &test, &poly).unwrap();
        for i in 0..3 {
            for j in 0..7 {
                let dot: f64 = test[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                assert!((kx[(i, j)] - (dot + 0.5).powi(3)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_gram_dimension_mismatch() {
        let spec = KernelSpec::Gaussian { width: 1.0 };
        assert!(cross_gram(&random_rows(3, 2, 0), &random_rows(2, 3, 0), &spec).is_err());
    }

    #[test]
    fn non_finite_rows_rejected() {
        let rows = vec![vec![0.0, f64::NAN]];
        assert!(base_gram(&rows, &KernelSpec::Gaussian { width: 1.0 }).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(KernelSpec::Gaussian { width: 0.0 }.validate().is_err());
        assert!(KernelSpec::Polynomial { degree: 0, offset: 1.0 }.validate().is_err());
        assert!(KernelSpec::Polynomial { degree: 2, offset: -1.0 }.validate().is_err());
    }

    #[test]
    fn compose_vertices_and_fixed_points() {
        let a = base_gram(&random_rows(5, 2, 4), &KernelSpec::Gaussian { width: 1.0 }).unwrap();
        let b = base_gram(&random_rows(5, 2, 5), &KernelSpec::Polynomial { degree: 2, offset: 1.0 }).unwrap();
        assert_eq!(compose(&[a.clone(), b.clone()], &[0.0, 1.0]).unwrap(), b);
        assert_eq!(compose(&[a.clone(), b.clone()], &[1.0, 0.0]).unwrap(), a);
        let same = compose(&[a.clone(), a.clone()], &[0.3, 0.7]).unwrap();
        assert!((same - &a).amax() < 1e-15);
        assert!(matches!(compose(&[a.clone(), b], &[0.6, 0.7]), Err(Error::SimplexViolation(_))));
    }

    #[test]
    fn median_heuristic() {
        let rows = vec![vec![0.0], vec![1.0], vec![3.0]];
        // distances 1, 3, 2 → median 2
        assert_eq!(median_pairwise_distance(&rows), 2.0);
        assert_eq!(median_pairwise_distance(&[vec![1.0], vec![1.0]]), 1.0);
    }

    #[test]
    fn wide_gaussian_tends_to_ones() {
        let rows = random_rows(8, 3, 6);
        let k = base_gram(&rows, &KernelSpec::Gaussian { width: 1e6 }).unwrap();
        assert!(k.iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    proptest! {
        #[test]
        fn composite_within_entrywise_bounds(seed in 0u64..1000, w in 0.0f64..1.0) {
            let rows = random_rows(6, 3, seed);
            let a = base_gram(&rows, &KernelSpec::Gaussian { width: 0.8 }).unwrap();
            let b = base_gram(&rows, &KernelSpec::Polynomial { degree: 2, offset: 1.0 }).unwrap();
            let c = compose(&[a.clone(), b.clone()], &[w, 1.0 - w]).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let lo = a[(i, j)].min(b[(i, j)]);
                    let hi = a[(i, j)].max(b[(i, j)]);
                    prop_assert!(c[(i, j)] >= lo - 1e-12 && c[(i, j)] <= hi + 1e-12);
                    prop_assert_eq!(c[(i, j)], c[(j, i)]);
                }
            }
        }
    }
}
