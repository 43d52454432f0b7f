use super::matrix::{affine, affine_backward, Matrix};
use super::spec::{ArchitectureSpec, LayerSpec};
use super::train::TrainConfig;
use crate::error::{arg_err, shape_err, Result};
use crate::rng::SplitMix64;

/// Added to the fitted variance before taking the square root.
pub const NORMALIZATION_EPSILON: f64 = 1e-6;
pub const BATCH_NORM_EPSILON: f64 = 1e-3;
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout masks are drawn and batch norm uses batch statistics.
    Train,
    /// Dropout is the identity and batch norm uses moving statistics.
    Infer,
}

/// Per-layer parameters and statistics, parallel to `spec.layers`.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerState {
    /// Input, encoding, ReLU, dropout and softmax layers carry no state.
    Stateless,
    Normalization {
        mean: Vec<f64>,
        variance: Vec<f64>,
        count: u64,
    },
    Dense {
        /// `out x in`
        weights: Matrix,
        bias: Vec<f64>,
    },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        moving_mean: Vec<f64>,
        moving_variance: Vec<f64>,
    },
}

/// A classifier head together with everything needed to run it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ArchitectureSpec,
    pub layers: Vec<LayerState>,
    pub config: TrainConfig,
    pub seed: u64,
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    Dropout { scale: Vec<f64> },
    BatchNorm { x_hat: Matrix, inv_std: Vec<f64>, batch_mean: Vec<f64>, batch_variance: Vec<f64> },
}

/// Activations recorded by a forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    mode: Mode,
    /// `activations[0]` is the batch; `activations[i + 1]` is layer `i`'s output.
    activations: Vec<Matrix>,
    caches: Vec<Cache>,
}

impl Trace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace holds at least the input")
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradient of one layer's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamGrad {
    None,
    Dense { weights: Matrix, bias: Vec<f64> },
    BatchNorm { gamma: Vec<f64>, beta: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<ParamGrad>,
    pub input: Matrix,
}

impl Gradients {
    /// Flat views in the same order as [`TrainedModel::trainable_params_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in &self.layers {
            match g {
                ParamGrad::None => {}
                ParamGrad::Dense { weights, bias } => {
                    out.push(weights.as_slice());
                    out.push(bias.as_slice());
                }
                ParamGrad::BatchNorm { gamma, beta } => {
                    out.push(gamma.as_slice());
                    out.push(beta.as_slice());
                }
            }
        }
        out
    }
}

impl TrainedModel {
    /// Seeded initial state: Glorot-uniform dense kernels, zero biases,
    /// identity batch norm, and unit normalization statistics.
    pub fn initialize(spec: ArchitectureSpec, config: TrainConfig, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = SplitMix64::new(seed);
        let layers = spec
            .layers
            .iter()
            .zip(spec.input_widths())
            .map(|(layer, inw)| match *layer {
                LayerSpec::Dense { units } => {
                    let limit = (6.0 / (inw + units) as f64).sqrt();
                    let data = (0..units * inw).map(|_| rng.uniform(-limit, limit)).collect();
                    LayerState::Dense {
                        weights: Matrix::from_vec(units, inw, data).expect("sized above"),
                        bias: vec![0.0; units],
                    }
                }
                LayerSpec::BatchNorm => LayerState::BatchNorm {
                    gamma: vec![1.0; inw],
                    beta: vec![0.0; inw],
                    moving_mean: vec![0.0; inw],
                    moving_variance: vec![1.0; inw],
                },
                LayerSpec::Normalization => LayerState::Normalization {
                    mean: vec![0.0; inw],
                    variance: vec![1.0; inw],
                    count: 0,
                },
                _ => LayerState::Stateless,
            })
            .collect();
        Ok(Self {
            spec,
            layers,
            config,
            seed,
        })
    }

    /// Fits every normalization layer on `data`, propagating through the
    /// preceding layers in inference mode.
    pub fn adapt_normalization(&mut self, data: &Matrix) -> Result<()> {
        self.check_batch(data)?;
        let mut x = data.clone();
        for i in 0..self.layers.len() {
            if let LayerState::Normalization { mean, variance, count } = &mut self.layers[i] {
                let n = x.rows() as f64;
                let w = x.cols();
                let mut mu = vec![0.0; w];
                for r in 0..x.rows() {
                    for (m, &v) in mu.iter_mut().zip(x.row(r)) {
                        *m += v;
                    }
                }
                mu.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; w];
                for r in 0..x.rows() {
                    for ((s, &m), &v) in var.iter_mut().zip(&mu).zip(x.row(r)) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n);
                *mean = mu;
                *variance = var;
                *count = x.rows() as u64;
            }
            if i + 1 < self.layers.len() {
                x = self.layer_forward_infer(i, &x);
            }
        }
        Ok(())
    }

    fn check_batch(&self, batch: &Matrix) -> Result<()> {
        if batch.rows() == 0 {
            return Err(arg_err!("empty batch"));
        }
        if batch.cols() != self.spec.input_width {
            return Err(shape_err!(
                "batch has {} features, model expects {}",
                batch.cols(),
                self.spec.input_width
            ));
        }
        Ok(())
    }

    fn layer_forward_infer(&self, i: usize, x: &Matrix) -> Matrix {
        match (&self.spec.layers[i], &self.layers[i]) {
            (_, LayerState::Dense { weights, bias }) => affine(x, weights, bias),
            (_, LayerState::Normalization { mean, variance, .. }) => {
                let scale: Vec<f64> = variance.iter().map(|v| 1.0 / (v + NORMALIZATION_EPSILON).sqrt()).collect();
                column_affine(x, mean, &scale, None)
            }
            (_, LayerState::BatchNorm { gamma, beta, moving_mean, moving_variance }) => {
                let scale: Vec<f64> = moving_variance
                    .iter()
                    .zip(gamma)
                    .map(|(v, g)| g / (v + BATCH_NORM_EPSILON).sqrt())
                    .collect();
                column_affine(x, moving_mean, &scale, Some(beta))
            }
            (LayerSpec::Relu, _) => x.map(|v| v.max(0.0)),
            (LayerSpec::Softmax, _) => softmax(x),
            _ => x.clone(),
        }
    }

    /// Runs the network. In [`Mode::Infer`] `rng` is not touched and the
    /// model is not modified; in [`Mode::Train`] dropout masks are drawn from
    /// `rng`. Batch statistics are applied separately with
    /// [`TrainedModel::apply_batch_statistics`].
    pub fn forward(&self, batch: &Matrix, mode: Mode, rng: &mut SplitMix64) -> Result<Trace> {
        self.check_batch(batch)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut caches = Vec::with_capacity(self.layers.len());
        activations.push(batch.clone());
        for i in 0..self.layers.len() {
            let x = activations.last().expect("non-empty");
            let (y, cache) = match (mode, &self.spec.layers[i], &self.layers[i]) {
                (Mode::Train, LayerSpec::Dropout { rate }, _) if *rate > 0.0 => {
                    let keep = 1.0 - rate;
                    let scale: Vec<f64> = (0..x.rows() * x.cols())
                        .map(|_| if rng.bernoulli(keep) { 1.0 / keep } else { 0.0 })
                        .collect();
                    let data = x.as_slice().iter().zip(&scale).map(|(a, s)| a * s).collect();
                    (Matrix::from_vec(x.rows(), x.cols(), data)?, Cache::Dropout { scale })
                }
                (Mode::Train, _, LayerState::BatchNorm { gamma, beta, .. }) => {
                    let (batch_mean, batch_variance) = column_moments(x);
                    let inv_std: Vec<f64> = batch_variance.iter().map(|v| 1.0 / (v + BATCH_NORM_EPSILON).sqrt()).collect();
                    let x_hat = column_affine(x, &batch_mean, &inv_std, None);
                    let y = column_affine(&x_hat, &vec![0.0; gamma.len()], gamma, Some(beta));
                    (y, Cache::BatchNorm { x_hat, inv_std, batch_mean, batch_variance })
                }
                _ => (self.layer_forward_infer(i, x), Cache::None),
            };
            activations.push(y);
            caches.push(cache);
        }
        Ok(Trace {
            mode,
            activations,
            caches,
        })
    }

    /// Class probabilities in inference mode.
    pub fn predict_proba(&self, batch: &Matrix) -> Result<Matrix> {
        let mut unused = SplitMix64::new(0);
        let mut trace = self.forward(batch, Mode::Infer, &mut unused)?;
        Ok(trace.activations.pop().expect("non-empty"))
    }

    pub fn predict(&self, batch: &Matrix) -> Result<Vec<usize>> {
        Ok(self.predict_proba(batch)?.argmax_rows())
    }

    /// Folds the batch statistics recorded in a training trace into the
    /// moving averages of every batch-norm layer.
    pub fn apply_batch_statistics(&mut self, trace: &Trace) {
        for (state, cache) in self.layers.iter_mut().zip(&trace.caches) {
            if let (
                LayerState::BatchNorm { moving_mean, moving_variance, .. },
                Cache::BatchNorm { batch_mean, batch_variance, .. },
            ) = (state, cache)
            {
                for (m, b) in moving_mean.iter_mut().zip(batch_mean) {
                    *m = BATCH_NORM_MOMENTUM * *m + (1.0 - BATCH_NORM_MOMENTUM) * b;
                }
                for (v, b) in moving_variance.iter_mut().zip(batch_variance) {
                    *v = BATCH_NORM_MOMENTUM * *v + (1.0 - BATCH_NORM_MOMENTUM) * b;
                }
            }
        }
    }

    /// Back-propagates `grad_output` (gradient w.r.t. the network output).
    pub fn backward(&self, trace: &Trace, grad_output: &Matrix) -> Result<Gradients> {
        let out = trace.output();
        if grad_output.rows() != out.rows() || grad_output.cols() != out.cols() {
            return Err(shape_err!("output gradient shape does not match the trace"));
        }
        Ok(self.backward_from(trace, self.layers.len(), grad_output.clone()))
    }

    /// Gradients of the mean categorical cross-entropy of a softmax-terminated
    /// network, using the fused softmax/cross-entropy derivative.
    pub fn backward_cross_entropy(&self, trace: &Trace, labels: &[usize]) -> Result<Gradients> {
        let probs = trace.output();
        if labels.len() != probs.rows() {
            return Err(shape_err!("{} labels for a batch of {}", labels.len(), probs.rows()));
        }
        let n = probs.rows() as f64;
        let mut grad = probs.clone();
        for (i, &y) in labels.iter().enumerate() {
            if y >= probs.cols() {
                return Err(arg_err!("label {y} out of range for {} classes", probs.cols()));
            }
            let row = grad.row_mut(i);
            row[y] -= 1.0;
            row.iter_mut().for_each(|g| *g /= n);
        }
        let last = self.layers.len() - 1;
        let mut grads = self.backward_from(trace, last, grad);
        grads.layers.push(ParamGrad::None);
        Ok(grads)
    }

    /// Back-propagates a gradient that enters at the output of layer `end - 1`.
    fn backward_from(&self, trace: &Trace, end: usize, mut grad: Matrix) -> Gradients {
        let mut layer_grads = vec![ParamGrad::None; end];
        for i in (0..end).rev() {
            let x = &trace.activations[i];
            let y = &trace.activations[i + 1];
            grad = match (&self.spec.layers[i], &self.layers[i], &trace.caches[i]) {
                (_, LayerState::Dense { weights, .. }, _) => {
                    let (dx, dw, db) = affine_backward(x, weights, &grad);
                    layer_grads[i] = ParamGrad::Dense { weights: dw, bias: db };
                    dx
                }
                (_, LayerState::Normalization { variance, .. }, _) => {
                    let scale: Vec<f64> = variance.iter().map(|v| 1.0 / (v + NORMALIZATION_EPSILON).sqrt()).collect();
                    column_scale(&grad, &scale)
                }
                (_, LayerState::BatchNorm { gamma, .. }, Cache::BatchNorm { x_hat, inv_std, .. }) => {
                    let (dx, dgamma, dbeta) = batch_norm_backward(&grad, x_hat, inv_std, gamma);
                    layer_grads[i] = ParamGrad::BatchNorm { gamma: dgamma, beta: dbeta };
                    dx
                }
                (_, LayerState::BatchNorm { gamma, moving_mean, moving_variance, .. }, _) => {
                    let mut dgamma = vec![0.0; gamma.len()];
                    let mut dbeta = vec![0.0; gamma.len()];
                    for r in 0..grad.rows() {
                        for (j, &g) in grad.row(r).iter().enumerate() {
                            let x_hat = (x.get(r, j) - moving_mean[j]) / (moving_variance[j] + BATCH_NORM_EPSILON).sqrt();
                            dgamma[j] += g * x_hat;
                            dbeta[j] += g;
                        }
                    }
                    layer_grads[i] = ParamGrad::BatchNorm { gamma: dgamma, beta: dbeta };
                    let scale: Vec<f64> = moving_variance
                        .iter()
                        .zip(gamma)
                        .map(|(v, g)| g / (v + BATCH_NORM_EPSILON).sqrt())
                        .collect();
                    column_scale(&grad, &scale)
                }
                (LayerSpec::Relu, _, _) => {
                    let data = grad.as_slice().iter().zip(x.as_slice()).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    Matrix::from_vec(grad.rows(), grad.cols(), data).expect("same shape")
                }
                (LayerSpec::Dropout { .. }, _, Cache::Dropout { scale }) => {
                    let data = grad.as_slice().iter().zip(scale).map(|(g, s)| g * s).collect();
                    Matrix::from_vec(grad.rows(), grad.cols(), data).expect("same shape")
                }
                (LayerSpec::Softmax, _, _) => {
                    let mut dz = Matrix::zeros(grad.rows(), grad.cols());
                    for r in 0..grad.rows() {
                        let (g, p) = (grad.row(r), y.row(r));
                        let dot: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
                        for (d, (gj, pj)) in dz.row_mut(r).iter_mut().zip(g.iter().zip(p)) {
                            *d = pj * (gj - dot);
                        }
                    }
                    dz
                }
                _ => grad,
            };
        }
        Gradients {
            layers: layer_grads,
            input: grad,
        }
    }

    /// Mutable flat views of every trainable parameter block, in layer order
    /// (dense: kernel then bias; batch norm: gamma then beta).
    pub fn trainable_params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for state in &mut self.layers {
            match state {
                LayerState::Dense { weights, bias } => {
                    out.push(weights.as_mut_slice());
                    out.push(bias.as_mut_slice());
                }
                LayerState::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_mut_slice());
                    out.push(beta.as_mut_slice());
                }
                _ => {}
            }
        }
        out
    }

    /// Checks that every layer's state matches its spec row.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.layers.len() != self.spec.layers.len() {
            return Err(shape_err!("{} layer states for {} layers", self.layers.len(), self.spec.layers.len()));
        }
        for ((i, layer), inw) in self.spec.layers.iter().enumerate().zip(self.spec.input_widths()) {
            let ok = match (layer, &self.layers[i]) {
                (LayerSpec::Dense { units }, LayerState::Dense { weights, bias }) => {
                    weights.rows() == *units && weights.cols() == inw && bias.len() == *units
                }
                (LayerSpec::BatchNorm, LayerState::BatchNorm { gamma, beta, moving_mean, moving_variance }) => {
                    [gamma, beta, moving_mean, moving_variance].iter().all(|v| v.len() == inw)
                        && moving_variance.iter().all(|&v| v >= 0.0)
                }
                (LayerSpec::Normalization, LayerState::Normalization { mean, variance, .. }) => {
                    mean.len() == inw && variance.len() == inw && variance.iter().all(|&v| v >= 0.0)
                }
                (LayerSpec::Dense { .. } | LayerSpec::BatchNorm | LayerSpec::Normalization, _) => false,
                (_, state) => *state == LayerState::Stateless,
            };
            if !ok {
                return Err(shape_err!("state of layer {i} ({layer}) does not match its spec"));
            }
        }
        Ok(())
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    y
}

/// Smallest probability fed to the logarithm in [`cross_entropy`].
pub const PROBABILITY_FLOOR: f64 = 1e-15;

/// Mean categorical cross-entropy of integer labels under `probs`.
pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.get(i, y).max(PROBABILITY_FLOOR).ln())
        .sum::<f64>()
        / n
}

fn column_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut mean = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; x.cols()];
    for r in 0..x.rows() {
        for ((s, &m), &v) in var.iter_mut().zip(&mean).zip(x.row(r)) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

/// `(x - shift) * scale (+ offset)`, column-wise.
fn column_affine(x: &Matrix, shift: &[f64], scale: &[f64], offset: Option<&Vec<f64>>) -> Matrix {
    let mut y = x.clone();
    for r in 0..y.rows() {
        for (j, v) in y.row_mut(r).iter_mut().enumerate() {
            *v = (*v - shift[j]) * scale[j] + offset.map_or(0.0, |o| o[j]);
        }
    }
    y
}

fn column_scale(x: &Matrix, scale: &[f64]) -> Matrix {
    let mut y = x.clone();
    for r in 0..y.rows() {
        for (v, s) in y.row_mut(r).iter_mut().zip(scale) {
            *v *= s;
        }
    }
    y
}

fn batch_norm_backward(grad: &Matrix, x_hat: &Matrix, inv_std: &[f64], gamma: &[f64]) -> (Matrix, Vec<f64>, Vec<f64>) {
    let n = grad.rows() as f64;
    let w = grad.cols();
    let mut dbeta = vec![0.0; w];
    let mut dgamma = vec![0.0; w];
    for r in 0..grad.rows() {
        for j in 0..w {
            let g = grad.get(r, j);
            dbeta[j] += g;
            dgamma[j] += g * x_hat.get(r, j);
        }
    }
    let mut dx = Matrix::zeros(grad.rows(), w);
    for r in 0..grad.rows() {
        for j in 0..w {
            let g = grad.get(r, j);
            let v = gamma[j] * inv_std[j] / n * (n * g - dbeta[j] - x_hat.get(r, j) * dgamma[j]);
            dx.set(r, j, v);
        }
    }
    (dx, dgamma, dbeta)
}
