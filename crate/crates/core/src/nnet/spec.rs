use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Result};

/// One row of a dense classifier-head architecture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Input,
    /// Identity on numeric inputs.
    MultiCategoryEncoding,
    /// Per-feature standardization with statistics fitted on the training split.
    Normalization,
    Dense {
        units: usize,
    },
    Relu,
    BatchNorm,
    Dropout {
        #[serde(rename = "dropout_rate")]
        rate: f64,
    },
    Softmax,
}

impl LayerSpec {
    /// Display name used in architecture tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            LayerSpec::Input => "Input Layer",
            LayerSpec::MultiCategoryEncoding => "Multi Category Encoding",
            LayerSpec::Normalization => "Normalization",
            LayerSpec::Dense { .. } => "Dense Layer",
            LayerSpec::Relu => "ReLU Activation",
            LayerSpec::BatchNorm => "Batch Normalization",
            LayerSpec::Dropout { .. } => "Dropout",
            LayerSpec::Softmax => "Softmax Activation",
        }
    }

    pub fn output_width(&self, input_width: usize) -> usize {
        match *self {
            LayerSpec::Dense { units } => units,
            _ => input_width,
        }
    }

    /// Trainable plus non-trainable parameter count for an input of `input_width`.
    pub fn param_count(&self, input_width: usize) -> usize {
        match *self {
            LayerSpec::Dense { units } => (input_width + 1) * units,
            // gamma, beta, moving mean, moving variance
            LayerSpec::BatchNorm => 4 * input_width,
            // mean, variance, and one sample-count scalar
            LayerSpec::Normalization => 2 * input_width + 1,
            _ => 0,
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { units } => write!(f, "dense({units})"),
            LayerSpec::Dropout { rate } => write!(f, "dropout({rate})"),
            LayerSpec::Input => f.write_str("input"),
            LayerSpec::MultiCategoryEncoding => f.write_str("multi_category_encoding"),
            LayerSpec::Normalization => f.write_str("normalization"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::BatchNorm => f.write_str("batch_norm"),
            LayerSpec::Softmax => f.write_str("softmax"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_width: usize,
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerParams {
    pub layer: String,
    pub output_width: usize,
    pub params: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub layers: Vec<LayerParams>,
    pub total: usize,
}

impl ArchitectureSpec {
    /// Builds and validates a spec.
    pub fn new(input_width: usize, num_classes: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        let spec = Self {
            input_width,
            num_classes,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 {
            return Err(arg_err!("input width must be positive"));
        }
        if self.num_classes == 0 {
            return Err(arg_err!("number of classes must be positive"));
        }
        let n = self.layers.len();
        if n < 3 || self.layers[0] != LayerSpec::Input {
            return Err(arg_err!("architecture must start with an input layer and end with dense + softmax"));
        }
        if self.layers[n - 1] != LayerSpec::Softmax
            || self.layers[n - 2] != (LayerSpec::Dense { units: self.num_classes })
        {
            return Err(arg_err!(
                "architecture must end with dense({}) followed by softmax",
                self.num_classes
            ));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Input if i > 0 => return Err(arg_err!("input layer at position {i}")),
                LayerSpec::Softmax if i + 1 < n => return Err(arg_err!("softmax at position {i} is not last")),
                LayerSpec::Dense { units: 0 } => return Err(arg_err!("dense layer {i} has zero units")),
                LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                    return Err(arg_err!("dropout rate {rate} at layer {i} outside [0, 1)"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Width entering each layer.
    pub fn input_widths(&self) -> Vec<usize> {
        let mut w = self.input_width;
        self.layers
            .iter()
            .map(|l| {
                let inw = w;
                w = l.output_width(w);
                inw
            })
            .collect()
    }

    pub fn output_widths(&self) -> Vec<usize> {
        let mut w = self.input_width;
        self.layers
            .iter()
            .map(|l| {
                w = l.output_width(w);
                w
            })
            .collect()
    }

    pub fn param_count(&self) -> ParamCount {
        let layers: Vec<LayerParams> = self
            .layers
            .iter()
            .zip(self.input_widths())
            .map(|(l, inw)| LayerParams {
                layer: l.display_name().to_string(),
                output_width: l.output_width(inw),
                params: l.param_count(inw),
            })
            .collect();
        let total = layers.iter().map(|l| l.params).sum();
        ParamCount { layers, total }
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] ", self.input_width)?;
        for (i, l) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// Free-function form of [`ArchitectureSpec::param_count`].
pub fn param_count(spec: &ArchitectureSpec) -> ParamCount {
    spec.param_count()
}
