#![allow(dead_code)]

use std::collections::BTreeSet;

use headsmith_core::nas::SearchSpace;
use headsmith_core::nnet::{cross_entropy, ArchitectureSpec, LayerSpec, Matrix, Mode, TrainConfig, TrainedModel};
use headsmith_core::rng::SplitMix64;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Gradient norms below this are compared absolutely (dead units, dropped
/// activations) instead of relatively.
const NEGLIGIBLE: f64 = 1e-8;

pub fn random_matrix(rng: &mut SplitMix64, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| scale * rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// A small random head with every trainable value randomised, plus a batch,
/// labels and a fixed random cotangent for the output.
pub struct Case {
    pub model: TrainedModel,
    pub batch: Matrix,
    pub labels: Vec<usize>,
    pub cotangent: Matrix,
}

pub fn random_case(rng: &mut SplitMix64) -> Case {
    let space = SearchSpace {
        use_normalization: vec![true, false],
        num_blocks: vec![1, 2, 3],
        units: vec![2, 3, 4, 5],
        use_batch_norm: vec![true, false],
        dropout_rates: vec![0.0, 0.3],
        learning_rates: vec![1e-3],
    };
    let width = 2 + rng.below(5);
    let classes = 2 + rng.below(3);
    let spec = space.sample_candidate(width, classes, rng).unwrap().architecture;
    let mut model = TrainedModel::initialize(spec, TrainConfig::default(), rng.next_u64()).unwrap();
    let fit_rows = 8;
    let fit = random_matrix(rng, fit_rows, width, 2.0);
    model.adapt_normalization(&fit).unwrap();
    for block in model.trainable_params_mut() {
        for v in block.iter_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
    }
    let n = 3 + rng.below(4);
    let batch = random_matrix(rng, n, width, 1.5);
    let labels = (0..n).map(|_| rng.below(classes)).collect();
    let cotangent = random_matrix(rng, n, classes, 1.0);
    Case {
        model,
        batch,
        labels,
        cotangent,
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// `sum(output * cotangent)`, checked through the generic backward pass.
    Linear,
    /// Mean cross-entropy, checked through the fused softmax backward pass.
    CrossEntropy,
}

const DROPOUT_SEED: u64 = 0xD0D0;

fn loss(model: &TrainedModel, case: &Case, batch: &Matrix, mode: Mode, kind: Loss) -> f64 {
    let trace = model.forward(batch, mode, &mut SplitMix64::new(DROPOUT_SEED)).unwrap();
    let out = trace.output();
    match kind {
        Loss::Linear => out.as_slice().iter().zip(case.cotangent.as_slice()).map(|(a, b)| a * b).sum(),
        Loss::CrossEntropy => cross_entropy(out, &case.labels),
    }
}

fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na + nb < NEGLIGIBLE {
        diff
    } else {
        diff / (na + nb)
    }
}

/// Largest relative error over every parameter block and the input gradient.
pub fn check_case(case: &Case, mode: Mode, kind: Loss) -> f64 {
    let model = &case.model;
    let trace = model.forward(&case.batch, mode, &mut SplitMix64::new(DROPOUT_SEED)).unwrap();
    let grads = match kind {
        Loss::Linear => model.backward(&trace, &case.cotangent).unwrap(),
        Loss::CrossEntropy => model.backward_cross_entropy(&trace, &case.labels).unwrap(),
    };
    let mut worst: f64 = 0.0;
    for (b, analytic) in grads.slices().into_iter().enumerate() {
        let numeric: Vec<f64> = (0..analytic.len())
            .map(|j| {
                let mut plus = model.clone();
                plus.trainable_params_mut()[b][j] += FD_STEP;
                let mut minus = model.clone();
                minus.trainable_params_mut()[b][j] -= FD_STEP;
                (loss(&plus, case, &case.batch, mode, kind) - loss(&minus, case, &case.batch, mode, kind)) / (2.0 * FD_STEP)
            })
            .collect();
        worst = worst.max(rel_error(analytic, &numeric));
    }
    let numeric: Vec<f64> = (0..case.batch.as_slice().len())
        .map(|j| {
            let mut plus = case.batch.clone();
            plus.as_mut_slice()[j] += FD_STEP;
            let mut minus = case.batch.clone();
            minus.as_mut_slice()[j] -= FD_STEP;
            (loss(model, case, &plus, mode, kind) - loss(model, case, &minus, mode, kind)) / (2.0 * FD_STEP)
        })
        .collect();
    worst.max(rel_error(grads.input.as_slice(), &numeric))
}

/// Runs the full check on `networks` random heads and returns the worst
/// relative error together with the layer kinds exercised.
pub fn gradient_sweep(seed: u64, networks: usize) -> (f64, BTreeSet<&'static str>) {
    let mut rng = SplitMix64::new(seed);
    let mut worst: f64 = 0.0;
    let mut kinds = BTreeSet::new();
    for _ in 0..networks {
        let case = random_case(&mut rng);
        kinds.extend(case.model.spec.layers.iter().map(|l| l.display_name()));
        for mode in [Mode::Train, Mode::Infer] {
            for kind in [Loss::Linear, Loss::CrossEntropy] {
                worst = worst.max(check_case(&case, mode, kind));
            }
        }
    }
    (worst, kinds)
}

pub const ALL_LAYER_KINDS: [&str; 8] = [
    "Input Layer",
    "Multi Category Encoding",
    "Normalization",
    "Dense Layer",
    "Batch Normalization",
    "ReLU Activation",
    "Dropout",
    "Softmax Activation",
];

/// Per-class (precision, recall, f1, support) by direct counting over samples.
pub fn brute_force_class_metrics(y_true: &[usize], y_pred: &[usize], k: usize) -> Vec<(f64, f64, f64, usize)> {
    (0..k)
        .map(|c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fneg = 0usize;
            for (&t, &p) in y_true.iter().zip(y_pred) {
                if t == c && p == c {
                    tp += 1;
                } else if p == c {
                    fp += 1;
                } else if t == c {
                    fneg += 1;
                }
            }
            let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fneg);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            (precision, recall, f1, tp + fneg)
        })
        .collect()
}

/// Kept indices by sorting the variances and cutting at the linearly
/// interpolated percentile, computed without the library.
pub fn brute_force_kept(rows: &[Vec<f64>], p: f64) -> Vec<usize> {
    let n = rows.len() as f64;
    let w = rows[0].len();
    let variances: Vec<f64> = (0..w)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            rows.iter().map(|r| (r[j] - mean) * (r[j] - mean)).sum::<f64>() / n
        })
        .collect();
    let mut sorted = variances.clone();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let threshold = sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64);
    (0..w).filter(|&j| variances[j] >= threshold).collect()
}

/// The six published heads, written out layer by layer, with the published
/// parameter column (0 for "-").
pub fn reference_architectures() -> Vec<(&'static str, ArchitectureSpec, Vec<usize>)> {
    use LayerSpec::*;
    let d = |units| Dense { units };
    let drop = Dropout { rate: 0.25 };
    let arch = |w, layers: Vec<LayerSpec>| {
        let mut all = vec![Input, MultiCategoryEncoding];
        all.extend(layers);
        ArchitectureSpec::new(w, 5, all).unwrap()
    };
    vec![
        (
            "w236",
            arch(236, vec![Normalization, d(32), Relu, d(32), Relu, drop.clone(), d(5), Softmax]),
            vec![0, 0, 473, 7584, 0, 1056, 0, 0, 165, 0],
        ),
        (
            "w120",
            arch(120, vec![d(16), Relu, d(32), Relu, d(5), Softmax]),
            vec![0, 0, 1936, 0, 544, 0, 165, 0],
        ),
        (
            "w4",
            arch(4, vec![Normalization, d(32), Relu, d(32), Relu, d(5), Softmax]),
            vec![0, 0, 9, 160, 0, 1056, 0, 165, 0],
        ),
        (
            "w4034",
            arch(4034, vec![Normalization, d(32), BatchNorm, Relu, d(32), BatchNorm, Relu, d(5), Softmax]),
            vec![0, 0, 8069, 129120, 128, 0, 1056, 128, 0, 165, 0],
        ),
        (
            "w2048",
            arch(
                2048,
                vec![
                    Normalization,
                    d(32),
                    BatchNorm,
                    Relu,
                    d(1024),
                    BatchNorm,
                    Relu,
                    d(128),
                    BatchNorm,
                    Relu,
                    drop.clone(),
                    d(5),
                    Softmax,
                ],
            ),
            vec![0, 0, 4097, 65568, 128, 0, 33792, 4096, 0, 131200, 512, 0, 0, 645, 0],
        ),
        (
            "w62",
            arch(62, vec![d(128), Relu, drop.clone(), d(16), Relu, drop.clone(), d(32), Relu, drop, d(5), Softmax]),
            vec![0, 0, 8064, 0, 0, 2064, 0, 0, 544, 0, 0, 165, 0],
        ),
    ]
}

