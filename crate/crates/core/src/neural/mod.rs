//! From-scratch dense regressor with optional residual skip connections.

mod checkpoint;
mod gradcheck;
mod network;
mod scaler;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, gradient_check_network, GRADCHECK_MAX_PARAMS};
pub use network::{Cache, LayerShape, Network};
pub use scaler::{Scaler, ScalerKind};
pub use train::{finetune_model, split_indices, train};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::pipeline::VariantDescriptor;
use crate::thermal::TemperatureField;
use crate::N_POINTS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub skip_connections: bool,
    pub activation: Activation,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Input projection to 64 units followed by two width-64 blocks and a
    /// linear 32-unit head.
    pub fn reference(input_dim: usize, skip_connections: bool, init_seed: u64) -> Self {
        Self {
            input_dim,
            output_dim: N_POINTS,
            hidden_widths: vec![64, 64, 64],
            skip_connections,
            activation: Activation::Relu,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument("model input_dim must be at least 1".into()));
        }
        if self.output_dim != N_POINTS {
            return Err(Error::InvalidArgument(format!(
                "model output_dim must be {N_POINTS}, got {}",
                self.output_dim
            )));
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be non-empty and at least 1".into()));
        }
        if self.skip_connections && self.hidden_widths.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::InvalidArgument(format!(
                "skip connections need equal block widths, got {:?}",
                self.hidden_widths
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub validation_fraction: f64,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            validation_fraction: 0.15,
            seed: 0,
            patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction must lie in (0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch curves: scaled-space training MSE and unscaled validation metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_loss: Vec<f64>,
    pub val_rmse: Vec<f64>,
    /// `None` when the validation targets have zero variance.
    pub val_r2: Vec<Option<f64>>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: Option<usize>,
}

impl TrainingHistory {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// First 1-based epoch whose validation R² reached `threshold`.
    pub fn epochs_to_r2(&self, threshold: f64) -> Option<usize> {
        self.val_r2
            .iter()
            .position(|r| r.is_some_and(|r| r >= threshold))
            .map(|i| i + 1)
    }

    pub fn best_val_rmse(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.val_rmse[e - 1])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub label: String,
    /// Labels of the checkpoints this model was fine-tuned from, oldest first.
    pub lineage: Vec<String>,
    /// Variant the model was trained for, when it is variant-specific.
    pub variant: Option<VariantDescriptor>,
}

impl Provenance {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            ..Self::default()
        }
    }

    pub fn parent(&self) -> Option<&str> {
        self.lineage.last().map(|s| s.as_str())
    }
}

/// A fitted network plus everything needed to map raw inputs to °C.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub input_names: Vec<String>,
    pub network: Network,
    pub input_scaler: Scaler,
    pub output_scaler: Scaler,
    pub provenance: Provenance,
}

impl TrainedModel {
    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    /// Predicts one temperature field from a raw feature vector.
    pub fn forward(&self, input: &[f64]) -> Result<TemperatureField> {
        let out = self.predict_rows(input, 1)?;
        let mut field = [0.0; N_POINTS];
        field.copy_from_slice(&out);
        Ok(TemperatureField(field))
    }

    /// Predicts `rows` row-major raw inputs; returns `rows × 32` °C values.
    pub fn predict_rows(&self, inputs: &[f64], rows: usize) -> Result<Vec<f64>> {
        if inputs.len() != rows * self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: rows * self.input_dim(),
                found: inputs.len(),
            });
        }
        let scaled = self.input_scaler.transform(inputs);
        let mut out = self.network.forward(&scaled, rows);
        self.output_scaler.inverse_in_place(&mut out);
        Ok(out)
    }

    /// Predicts every row of `data`, selecting the model's input columns by name.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        let view = data.select_inputs(&self.input_names)?;
        const CHUNK: usize = 256;
        let p = self.input_dim();
        let chunks: Vec<&[f64]> = view.inputs().chunks(CHUNK * p).collect();
        use rayon::prelude::*;
        let parts: Vec<Vec<f64>> = chunks
            .par_iter()
            .map(|c| self.predict_rows(c, c.len() / p))
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        self.config.validate()?;
        if self.input_names.len() != self.config.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_dim,
                found: self.input_names.len(),
            });
        }
        if self.network.layers() != Network::layout(&self.config).as_slice() {
            return Err(Error::InvalidArgument("network layout does not match model config".into()));
        }
        self.input_scaler.validate()?;
        self.output_scaler.validate()?;
        if self.input_scaler.width() != self.config.input_dim || self.output_scaler.width() != self.config.output_dim {
            return Err(Error::InvalidArgument("scaler widths do not match model config".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(skip: bool) -> TrainedModel {
        let config = ModelConfig {
            hidden_widths: vec![4, 4],
            ..ModelConfig::reference(2, skip, 0)
        };
        let network = Network::zeros(Network::layout(&config), config.activation);
        TrainedModel {
            input_names: vec!["s1".into(), "s2".into()],
            network,
            input_scaler: Scaler::fit(ScalerKind::MinMax, &[0.0, 0.0, 1.0, 1.0], 2).unwrap(),
            output_scaler: Scaler {
                kind: ScalerKind::ZScore,
                shift: (0..N_POINTS).map(|i| 50.0 + i as f64).collect(),
                scale: vec![2.0; N_POINTS],
            },
            provenance: Provenance::new("zero"),
            config,
        }
    }

    #[test]
    fn zero_plain_model_returns_output_shift() {
        let m = zero_model(false);
        m.validate().unwrap();
        let f = m.forward(&[0.3, 0.7]).unwrap();
        let expected: Vec<f64> = (0..N_POINTS).map(|i| 50.0 + i as f64).collect();
        assert_eq!(f.0.to_vec(), expected);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        assert!(matches!(
            zero_model(true).forward(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::reference(2, true, 0).validate().is_ok());
        let uneven = ModelConfig {
            hidden_widths: vec![64, 32],
            ..ModelConfig::reference(2, true, 0)
        };
        assert!(uneven.validate().is_err());
        assert!(ModelConfig { skip_connections: false, ..uneven }.validate().is_ok());
        assert!(ModelConfig { output_dim: 3, ..ModelConfig::reference(2, true, 0) }.validate().is_err());
    }

    #[test]
    fn history_threshold_epoch() {
        let h = TrainingHistory {
            train_loss: vec![1.0; 4],
            val_rmse: vec![1.0; 4],
            val_r2: vec![Some(0.5), None, Some(0.96), Some(0.99)],
            best_epoch: Some(4),
        };
        assert_eq!(h.epochs_to_r2(0.95), Some(3));
        assert_eq!(h.epochs_to_r2(0.999), None);
    }
}
