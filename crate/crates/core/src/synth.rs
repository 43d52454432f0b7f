//! Synthetic feature sets for tests, demos and the acceptance suite.

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{arg_err, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Well-separated Gaussian blobs.
///
/// Every feature on its own orders the class centroids (in a random
/// per-feature order) with gaps of at least `separation` noise standard
/// deviations, so any single feature, and in particular the highest-variance
/// one, separates the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BlobConfig {
    pub classes: usize,
    pub features: usize,
    pub samples: usize,
    pub patients: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for BlobConfig {
    fn default() -> Self {
        Self {
            classes: 5,
            features: 62,
            samples: 500,
            patients: 50,
            separation: 8.0,
            seed: 0,
        }
    }
}

/// Samples are laid out patient by patient (`samples / patients` each, the
/// remainder spread over the first patients); labels cycle through the
/// classes so every patient sees a balanced mix.
pub fn gaussian_blobs(cfg: &BlobConfig) -> Result<FeatureMatrix> {
    if cfg.classes < 2 || cfg.features == 0 || cfg.samples == 0 || cfg.patients == 0 {
        return Err(arg_err!("blob generator needs >= 2 classes and positive features, samples, patients"));
    }
    if cfg.patients > cfg.samples {
        return Err(arg_err!("more patients ({}) than samples ({})", cfg.patients, cfg.samples));
    }
    let mut rng = SplitMix64::new(derive_seed(cfg.seed, 0));
    // centroids[class][feature]
    let mut centroids = vec![vec![0.0; cfg.features]; cfg.classes];
    for f in 0..cfg.features {
        let mut order: Vec<usize> = (0..cfg.classes).collect();
        rng.shuffle(&mut order);
        let spacing = cfg.separation * rng.uniform(1.0, 1.5);
        let offset = rng.uniform(-10.0, 10.0);
        for (rank, &class) in order.iter().enumerate() {
            centroids[class][f] = offset + spacing * rank as f64;
        }
    }
    let mut noise = SplitMix64::new(derive_seed(cfg.seed, 1));
    let (base, extra) = (cfg.samples / cfg.patients, cfg.samples % cfg.patients);
    let mut rows = Vec::with_capacity(cfg.samples);
    let mut sample_ids = Vec::with_capacity(cfg.samples);
    let mut patient_ids = Vec::with_capacity(cfg.samples);
    let mut labels = Vec::with_capacity(cfg.samples);
    for p in 0..cfg.patients {
        let count = base + usize::from(p < extra);
        for _ in 0..count {
            let i = labels.len();
            let label = i % cfg.classes;
            rows.push(centroids[label].iter().map(|c| c + noise.normal()).collect());
            sample_ids.push(format!("s{i:05}"));
            patient_ids.push(format!("p{p:04}"));
            labels.push(label);
        }
    }
    FeatureMatrix::new(rows, sample_ids, patient_ids, labels)
}

/// Random features with pairwise-distinct (continuous, random) scales, so
/// every column has a different variance. Labels cycle through `classes`,
/// and every 4 consecutive samples share a patient.
pub fn distinct_variance_matrix(width: usize, samples: usize, classes: usize, seed: u64) -> Result<FeatureMatrix> {
    if width == 0 || samples < 2 || classes == 0 {
        return Err(arg_err!("need width >= 1, samples >= 2 and classes >= 1"));
    }
    let mut rng = SplitMix64::new(seed);
    let scales: Vec<f64> = (0..width).map(|_| rng.uniform(0.1, 10.0)).collect();
    let rows = (0..samples)
        .map(|_| scales.iter().map(|s| s * rng.normal()).collect())
        .collect();
    let sample_ids = (0..samples).map(|i| format!("s{i:05}")).collect();
    let patient_ids = (0..samples).map(|i| format!("p{:04}", i / 4)).collect();
    let labels = (0..samples).map(|i| i % classes).collect();
    FeatureMatrix::new(rows, sample_ids, patient_ids, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avt::feature_variances;

    #[test]
    fn blob_layout() {
        let m = gaussian_blobs(&BlobConfig::default()).unwrap();
        assert_eq!((m.len(), m.width()), (500, 62));
        let patients: std::collections::BTreeSet<_> = m.patient_ids().iter().collect();
        assert_eq!(patients.len(), 50);
        for c in 0..5 {
            assert_eq!(m.labels().iter().filter(|&&y| y == c).count(), 100);
        }
        assert_eq!(gaussian_blobs(&BlobConfig::default()).unwrap(), m);
    }

    #[test]
    fn distinct_variances() {
        let m = distinct_variance_matrix(240, 40, 5, 3).unwrap();
        let mut v = feature_variances(&m).unwrap();
        v.sort_by(f64::total_cmp);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}
