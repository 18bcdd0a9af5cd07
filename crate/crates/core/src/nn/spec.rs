use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    pub fn derivative_from_output(self, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if out > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
        }
    }
}

/// One output head: optional head-specific hidden layers followed by a single sigmoid unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub name: String,
    #[serde(default)]
    pub layers: Vec<usize>,
    /// Gradient reversal strength between the shared representation and this head.
    #[serde(default)]
    pub reversal: Option<f64>,
}

impl HeadSpec {
    pub fn new(name: impl Into<String>) -> Self {
        HeadSpec {
            name: name.into(),
            layers: Vec::new(),
            reversal: None,
        }
    }

    pub fn with_layers(mut self, layers: Vec<usize>) -> Self {
        self.layers = layers;
        self
    }

    pub fn with_reversal(mut self, lambda: f64) -> Self {
        self.reversal = Some(lambda);
        self
    }
}

/// Architecture of a dense network with a shared trunk and one or more sigmoid heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub heads: Vec<HeadSpec>,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl MlpSpec {
    /// Single-head network; the head is named `risk`.
    pub fn single(input_dim: usize, hidden_layers: Vec<usize>) -> Self {
        MlpSpec {
            input_dim,
            hidden_layers,
            heads: vec![HeadSpec::new("risk")],
            activation: Activation::Relu,
            dropout_rate: 0.1,
        }
    }

    pub fn with_heads(mut self, heads: Vec<HeadSpec>) -> Self {
        self.heads = heads;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    /// Width of the shared representation fed to every head.
    pub fn representation_dim(&self) -> usize {
        self.hidden_layers.last().copied().unwrap_or(self.input_dim)
    }

    pub fn head_index(&self, name: &str) -> Option<usize> {
        self.heads.iter().position(|h| h.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidInput("input_dim must be positive".into()));
        }
        if self.heads.is_empty() {
            return Err(Error::InvalidInput("network needs at least one head".into()));
        }
        let zero_width = self
            .hidden_layers
            .iter()
            .chain(self.heads.iter().flat_map(|h| h.layers.iter()))
            .any(|&w| w == 0);
        if zero_width {
            return Err(Error::InvalidInput("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidInput(format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        for head in &self.heads {
            if let Some(lambda) = head.reversal {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "reversal strength {lambda} for head `{}` must be a finite non-negative number",
                        head.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Optimizer and training-loop settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            learning_rate: 0.0005,
            batch_size: 64,
            max_epochs: 1000,
            patience: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl HyperParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_learning_rate(mut self, lr: f64) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidInput(
                "batch_size, max_epochs and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}
