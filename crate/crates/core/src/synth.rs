//! Gaussian blob generator for experiments and smoke tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Matrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobConfig {
    pub n: usize,
    pub k: usize,
    pub dim: usize,
    /// Centers are uniform in `[-half_width, half_width]^dim`.
    pub half_width: f64,
    pub sigma: f64,
    /// Fraction of each class drawn with the wider noise spread.
    pub noise_fraction: f64,
    /// Noise samples use `sigma * noise_scale`.
    pub noise_scale: f64,
    pub seed: u64,
}

/// Box half-width for 20 classes in 10 dimensions. Classes overlap enough
/// that the unsupervised initial clustering is clearly imperfect.
pub const BASE_HALF_WIDTH: f64 = 3.5;
const BASE_CLASSES: f64 = 20.0;

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            k: 20,
            dim: 10,
            half_width: BASE_HALF_WIDTH,
            sigma: 1.0,
            noise_fraction: 0.05,
            noise_scale: 2.0,
            seed: 0,
        }
    }
}

impl BlobConfig {
    /// Default settings with the box widened so that the number of centers
    /// per unit volume matches the 20-class default.
    pub fn scaled(n: usize, k: usize, seed: u64) -> Self {
        let base = Self::default();
        let half_width = base.half_width * (k as f64 / BASE_CLASSES).powf(1.0 / base.dim as f64);
        Self {
            n,
            k,
            half_width: half_width.max(base.half_width),
            seed,
            ..base
        }
    }
}

/// Samples `n` points from `k` isotropic Gaussian classes, in shuffled
/// order, with labels attached.
pub fn gaussian_blobs(config: &BlobConfig) -> Result<Dataset> {
    let BlobConfig { n, k, dim, .. } = *config;
    if k == 0 || k > n || dim == 0 {
        return Err(Error::invalid(format!("blob generator needs 1 <= k <= n and dim >= 1 (n={n}, k={k}, dim={dim})")));
    }
    if !(0.0..=1.0).contains(&config.noise_fraction) || config.sigma <= 0.0 || config.noise_scale <= 0.0 {
        return Err(Error::invalid("blob noise settings out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..dim)
                .map(|_| rng.random_range(-config.half_width..=config.half_width))
                .collect()
        })
        .collect();

    let mut samples: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        let size = n / k + usize::from(class < n % k);
        let noisy = (config.noise_fraction * size as f64).round() as usize;
        for i in 0..size {
            let spread = if i < noisy { config.sigma * config.noise_scale } else { config.sigma };
            let point = center
                .iter()
                .map(|&c| c + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push((point, class));
        }
    }
    samples.shuffle(&mut rng);
    let (rows, labels): (Vec<Vec<f64>>, Vec<usize>) = samples.into_iter().unzip();
    Dataset::new(Matrix::from_rows(&rows)?)?.with_labels(labels)
}
