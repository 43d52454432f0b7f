//! A small feed-forward network engine for dense classifier heads.
//!
//! Supports the layer vocabulary of the searched architectures (input,
//! multi-category encoding, normalization, dense, ReLU, batch norm, dropout,
//! softmax), trained with Adam on categorical cross-entropy in `f64`.

mod file;
mod matrix;
mod model;
mod spec;
mod train;

pub use matrix::Matrix;
pub use model::{
    cross_entropy, softmax, Gradients, LayerState, Mode, ParamGrad, Trace, TrainedModel, BATCH_NORM_EPSILON,
    BATCH_NORM_MOMENTUM, NORMALIZATION_EPSILON,
};
pub use spec::{param_count, ArchitectureSpec, LayerParams, LayerSpec, ParamCount};
pub use train::{accuracy, history_csv, train, write_history_csv, EarlyStopMetric, EpochRecord, TrainConfig, TrainOutcome};

use crate::error::{arg_err, Result};

/// Compound scaling of a base network: `d = alpha^phi * d0`,
/// `w = beta^phi * w0`, `r = gamma^phi * r0`, each rounded half away from zero
/// and clamped to at least 1.
pub fn compound_scale(base: (usize, usize, usize), coefficients: (f64, f64, f64), phi: f64) -> Result<(usize, usize, usize)> {
    let (alpha, beta, gamma) = coefficients;
    if [alpha, beta, gamma].iter().any(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(arg_err!("scaling coefficients must be positive, got {coefficients:?}"));
    }
    if base.0 == 0 || base.1 == 0 || base.2 == 0 {
        return Err(arg_err!("base depth, width and resolution must be at least 1"));
    }
    if !phi.is_finite() {
        return Err(arg_err!("phi must be finite"));
    }
    let scale = |c: f64, x: usize| (c.powf(phi) * x as f64).round().max(1.0) as usize;
    Ok((scale(alpha, base.0), scale(beta, base.1), scale(gamma, base.2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compound_scale_examples() {
        assert_eq!(compound_scale((10, 20, 224), (1.2, 1.1, 1.15), 0.0).unwrap(), (10, 20, 224));
        assert_eq!(compound_scale((10, 1, 1), (1.2, 1.0, 1.0), 1.0).unwrap().0, 12);
        assert_eq!(compound_scale((3, 1, 1), (2.0, 1.0, 1.0), 2.0).unwrap().0, 12);
        assert_eq!(compound_scale((1, 1, 1), (0.1, 1.0, 1.0), 1.0).unwrap().0, 1);
        assert!(compound_scale((1, 1, 1), (0.0, 1.0, 1.0), 1.0).is_err());
        assert!(compound_scale((1, 1, 1), (1.0, -2.0, 1.0), 1.0).is_err());
    }
}
