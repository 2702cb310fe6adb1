use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VrgError};
use crate::rng::{stream, tag};

/// Isotropic Gaussian data `N(mu0, sigma0²·I)`. `sigma0 = 0` is the point
/// mass at `mu0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGaussian")]
pub struct GaussianDataSpec {
    pub mu0: Vec<f64>,
    pub sigma0: f64,
}

#[derive(Deserialize)]
struct RawGaussian {
    mu0: Vec<f64>,
    sigma0: f64,
}

impl TryFrom<RawGaussian> for GaussianDataSpec {
    type Error = VrgError;
    fn try_from(r: RawGaussian) -> Result<Self> {
        GaussianDataSpec::new(r.mu0, r.sigma0)
    }
}

impl GaussianDataSpec {
    pub fn new(mu0: Vec<f64>, sigma0: f64) -> Result<Self> {
        if mu0.is_empty() {
            return Err(VrgError::Format("mu0 must have at least one coordinate".into()));
        }
        if mu0.iter().any(|v| !v.is_finite()) {
            return Err(VrgError::NonFinite("mu0 must be finite".into()));
        }
        if !(sigma0 >= 0.0 && sigma0.is_finite()) {
            return Err(VrgError::Format(format!("sigma0 must be >= 0, got {sigma0}")));
        }
        Ok(Self { mu0, sigma0 })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu0: vec![0.0; dim],
            sigma0: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mu: Vec<f64>,
    pub sigma: f64,
}

/// Mixture of isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGmm")]
pub struct GmmDataSpec {
    pub components: Vec<GmmComponent>,
}

#[derive(Deserialize)]
struct RawGmm {
    components: Vec<GmmComponent>,
}

impl TryFrom<RawGmm> for GmmDataSpec {
    type Error = VrgError;
    fn try_from(r: RawGmm) -> Result<Self> {
        GmmDataSpec::new(r.components)
    }
}

impl GmmDataSpec {
    pub fn new(components: Vec<GmmComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| VrgError::Format("a mixture needs at least one component".into()))?;
        let d = first.mu.len();
        if d == 0 {
            return Err(VrgError::Format("component means must be non-empty".into()));
        }
        for (i, c) in components.iter().enumerate() {
            if c.mu.len() != d {
                return Err(VrgError::DimensionMismatch {
                    expected: d,
                    got: c.mu.len(),
                });
            }
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(VrgError::Format(format!("component {i} weight must be positive")));
            }
            if !(c.sigma > 0.0 && c.sigma.is_finite()) {
                return Err(VrgError::Format(format!("component {i} sigma must be positive")));
            }
            if c.mu.iter().any(|v| !v.is_finite()) {
                return Err(VrgError::NonFinite(format!("component {i} mean")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(VrgError::Format(format!("mixture weights must sum to 1, got {total}")));
        }
        Ok(Self { components })
    }

    pub fn dim(&self) -> usize {
        self.components[0].mu.len()
    }
}

/// Ground-truth data distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum DataSpec {
    Gaussian(GaussianDataSpec),
    Gmm(GmmDataSpec),
}

impl DataSpec {
    pub fn dim(&self) -> usize {
        match self {
            DataSpec::Gaussian(g) => g.dim(),
            DataSpec::Gmm(g) => g.dim(),
        }
    }

    pub fn id(&self) -> String {
        match self {
            DataSpec::Gaussian(g) => format!("gaussian-d{}-s{}", g.dim(), g.sigma0),
            DataSpec::Gmm(g) => format!("gmm-d{}-c{}", g.dim(), g.components.len()),
        }
    }

    /// Draw `n` samples; sample `i` depends only on `(seed, i)`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..n).map(|i| self.sample_one(seed, i as u64)).collect()
    }

    /// Sample `index` of the stream keyed by `seed`.
    pub fn sample_one(&self, seed: u64, index: u64) -> Vec<f64> {
        let mut rng = stream(seed, &[tag::DATA, index]);
        let (mu, sigma) = match self {
            DataSpec::Gaussian(g) => (&g.mu0, g.sigma0),
            DataSpec::Gmm(g) => {
                let u: f64 = Uniform::new(0.0, 1.0).expect("valid range").sample(&mut rng);
                let mut acc = 0.0;
                let last = g.components.len() - 1;
                let c = g
                    .components
                    .iter()
                    .enumerate()
                    .find(|(i, c)| {
                        acc += c.weight;
                        u < acc || *i == last
                    })
                    .map(|(_, c)| c)
                    .expect("mixture is non-empty");
                (&c.mu, c.sigma)
            }
        };
        mu.iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + sigma * z
            })
            .collect()
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            DataSpec::Gaussian(g) => g.mu0.clone(),
            DataSpec::Gmm(g) => {
                let mut m = vec![0.0; g.dim()];
                for c in &g.components {
                    for (acc, v) in m.iter_mut().zip(&c.mu) {
                        *acc += c.weight * v;
                    }
                }
                m
            }
        }
    }

    /// Analytic covariance, row-major `d × d`.
    #[allow(clippy::needless_range_loop)]
    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        match self {
            DataSpec::Gaussian(g) => (0..d)
                .map(|i| (0..d).map(|j| if i == j { g.sigma0 * g.sigma0 } else { 0.0 }).collect())
                .collect(),
            DataSpec::Gmm(g) => {
                let m = self.mean();
                let mut cov = vec![vec![0.0; d]; d];
                for c in &g.components {
                    for i in 0..d {
                        for j in 0..d {
                            let iso = if i == j { c.sigma * c.sigma } else { 0.0 };
                            cov[i][j] += c.weight * (iso + c.mu[i] * c.mu[j]);
                        }
                    }
                }
                for i in 0..d {
                    for j in 0..d {
                        cov[i][j] -= m[i] * m[j];
                    }
                }
                cov
            }
        }
    }
}
