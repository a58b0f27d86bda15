//! Neural temperature-field prediction for microwave-heated PET preforms.
//!
//! Variant-specific regressors are trained on simulated data drawn from a
//! Latin Hypercube design, fine-tuned across material or geometry variants,
//! and fused into one global model by querying each variant model on a fresh
//! design ("experience extraction") and training on the merged predictions.
//!
//! Module map:
//! - [`doe`]: Latin Hypercube sampling.
//! - [`thermal`]: synthetic axial heating simulator and variant presets.
//! - [`dataset`]: the tabular dataset shared by every stage.
//! - [`neural`]: dense/residual regressor, training, checkpoints.
//! - [`metrics`]: RMSE/MAE/R² and model comparison.
//! - [`pipeline`]: fine-tuning, fusion and the case-study driver.
//! - [`store`]: CSV, manifest and report persistence.
//! - [`plot`]: SVG line plots for training curves.

pub mod dataset;
pub mod doe;
pub mod error;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod plot;
pub mod seed;
pub mod store;
pub mod thermal;

pub use dataset::{Dataset, RowSource};
pub use doe::{lhs_sample, verify_stratification, DesignMatrix, ParameterSpace};
pub use error::{Error, Result};
pub use metrics::{compute_metrics, Metrics};
pub use neural::{ModelConfig, TrainConfig, TrainedModel, TrainingHistory};
pub use thermal::{HeatCapacityCurve, PreformGeometry, SimConfig, SlabConfig, TemperatureField};

/// Number of surface temperature points predicted along the preform.
pub const N_POINTS: usize = 32;
