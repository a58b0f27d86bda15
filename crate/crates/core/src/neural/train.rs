use rand::seq::SliceRandom;

use super::{Network, Optimizer, Provenance, Scaler, ScalerKind, TrainConfig, TrainedModel, TrainingHistory};
use super::{Cache, ModelConfig};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::metrics::compute_metrics;
use crate::seed::{derive_seed, rng};
use crate::N_POINTS;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Seeded train/validation split. Returns `(train, validation)` row indices;
/// the validation part holds `round(n * fraction)` rows, at least one and at
/// most `n - 1`.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::InsufficientRows(format!(
            "need at least 2 rows to split into train and validation, got {n}"
        )));
    }
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng(derive_seed(seed, "validation-split")));
    let mut val = perm[..n_val].to_vec();
    let mut train = perm[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

fn gather(values: &[f64], width: usize, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        out.extend_from_slice(&values[r * width..(r + 1) * width]);
    }
    out
}

/// Trains a fresh model on every input column of `data`.
///
/// Scalers are fitted on the training split only. The returned weights are
/// those of the epoch with the lowest validation RMSE.
pub fn train(config: &ModelConfig, data: &Dataset, tc: &TrainConfig) -> Result<(TrainedModel, TrainingHistory)> {
    config.validate()?;
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientRows("training dataset is empty".into()));
    }
    if data.n_inputs() != config.input_dim {
        return Err(Error::DimensionMismatch {
            expected: config.input_dim,
            found: data.n_inputs(),
        });
    }
    let (train_rows, val_rows) = split_indices(data.n_rows(), tc.validation_fraction, tc.seed)?;
    let p = data.n_inputs();
    let input_scaler = Scaler::fit(ScalerKind::MinMax, &gather(data.inputs(), p, &train_rows), p)?;
    let output_scaler = Scaler::fit(ScalerKind::ZScore, &gather(data.targets(), N_POINTS, &train_rows), N_POINTS)?;
    let model = TrainedModel {
        config: config.clone(),
        input_names: data.input_names().to_vec(),
        network: Network::new(config),
        input_scaler,
        output_scaler,
        provenance: Provenance::new("model"),
    };
    fit(model, data, &train_rows, &val_rows, tc, tc.learning_rate)
}

/// Continues training `base` on `data` with all layers trainable at
/// `lr_scale * tc.learning_rate`. The input scaler is kept, the output
/// scaler is re-fitted on the new training split, and the base label is
/// appended to the lineage.
pub fn finetune_model(base: &TrainedModel, data: &Dataset, tc: &TrainConfig, lr_scale: f64) -> Result<(TrainedModel, TrainingHistory)> {
    tc.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientRows("fine-tuning dataset is empty".into()));
    }
    let view = data.select_inputs(&base.input_names)?;
    let (train_rows, val_rows) = split_indices(view.n_rows(), tc.validation_fraction, tc.seed)?;
    let mut model = base.clone();
    model.output_scaler = Scaler::fit(ScalerKind::ZScore, &gather(view.targets(), N_POINTS, &train_rows), N_POINTS)?;
    model.provenance.lineage.push(base.provenance.label.clone());
    fit(model, &view, &train_rows, &val_rows, tc, tc.learning_rate * lr_scale)
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        let (m, v) = match kind {
            Optimizer::Adam => (vec![0.0; n], vec![0.0; n]),
            Optimizer::Sgd => (Vec::new(), Vec::new()),
        };
        Self { kind, lr, step: 0, m, v }
    }

    fn apply(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::Adam => {
                self.step += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.step);
                let c2 = 1.0 - ADAM_BETA2.powi(self.step);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

fn fit(
    mut model: TrainedModel,
    data: &Dataset,
    train_rows: &[usize],
    val_rows: &[usize],
    tc: &TrainConfig,
    lr: f64,
) -> Result<(TrainedModel, TrainingHistory)> {
    let mut history = TrainingHistory::default();
    if tc.epochs == 0 {
        return Ok((model, history));
    }
    if tc.batch_size > train_rows.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size {} exceeds the {} training rows",
            tc.batch_size,
            train_rows.len()
        )));
    }
    let p = model.input_dim();
    let mut train_x = gather(data.inputs(), p, train_rows);
    model.input_scaler.transform_in_place(&mut train_x);
    let mut train_y = gather(data.targets(), N_POINTS, train_rows);
    model.output_scaler.transform_in_place(&mut train_y);
    let mut val_x = gather(data.inputs(), p, val_rows);
    model.input_scaler.transform_in_place(&mut val_x);
    let val_y = gather(data.targets(), N_POINTS, val_rows);

    let n_train = train_rows.len();
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut shuffler = rng(derive_seed(tc.seed, "minibatch-order"));
    let mut opt = OptimizerState::new(tc.optimizer, lr, model.network.param_count());
    let mut grad = vec![0.0; model.network.param_count()];
    let mut cache = Cache::default();
    let mut batch_x = Vec::with_capacity(tc.batch_size * p);
    let mut batch_y = Vec::with_capacity(tc.batch_size * N_POINTS);

    let mut best_rmse = f64::INFINITY;
    let mut best_params = model.network.params().to_vec();
    let mut best_epoch = 0;

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffler);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &r in batch {
                batch_x.extend_from_slice(&train_x[r * p..(r + 1) * p]);
                batch_y.extend_from_slice(&train_y[r * N_POINTS..(r + 1) * N_POINTS]);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = model.network.mse(&batch_x, &batch_y, batch.len(), &mut cache, Some(&mut grad));
            total += loss * batch.len() as f64;
            opt.apply(model.network.params_mut(), &grad);
        }
        let train_loss = total / n_train as f64;

        let mut pred = model.network.forward(&val_x, val_rows.len());
        model.output_scaler.inverse_in_place(&mut pred);
        if !train_loss.is_finite() || pred.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                last_finite_epoch: epoch - 1,
            });
        }
        let m = compute_metrics(&pred, &val_y, N_POINTS)?;
        history.train_loss.push(train_loss);
        history.val_rmse.push(m.rmse);
        history.val_r2.push(m.r2);

        if m.rmse < best_rmse {
            best_rmse = m.rmse;
            best_epoch = epoch;
            best_params.copy_from_slice(model.network.params());
        } else if tc.patience > 0 && epoch - best_epoch >= tc.patience {
            break;
        }
    }
    model.network.params_mut().copy_from_slice(&best_params);
    history.best_epoch = Some(best_epoch);
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RowSource;

    fn affine_dataset(n: usize) -> Dataset {
        let design = crate::doe::lhs_sample(&crate::doe::ParameterSpace::slab_positions(2, 10.0, 110.0).unwrap(), n, 4).unwrap();
        let inputs: Vec<Vec<f64>> = design.rows().map(|r| r.to_vec()).collect();
        let targets: Vec<[f64; N_POINTS]> = inputs
            .iter()
            .map(|r| std::array::from_fn(|j| 30.0 + 0.4 * r[0] - 0.2 * r[1] + j as f64 * 0.7 + 0.01 * j as f64 * r[1]))
            .collect();
        Dataset::new(vec!["s1".into(), "s2".into()], inputs, targets, vec![RowSource::Simulated; n]).unwrap()
    }

    #[test]
    fn split_sizes() {
        let (t, v) = split_indices(100, 0.15, 1).unwrap();
        assert_eq!((t.len(), v.len()), (85, 15));
        let (t, v) = split_indices(2, 0.15, 1).unwrap();
        assert_eq!((t.len(), v.len()), (1, 1));
        assert!(split_indices(1, 0.15, 1).is_err());
        let mut all: Vec<usize> = t.into_iter().chain(v).collect();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1]);
    }

    #[test]
    fn fits_affine_map() {
        let data = affine_dataset(300);
        let config = ModelConfig {
            hidden_widths: vec![32],
            ..ModelConfig::reference(2, false, 1)
        };
        let tc = TrainConfig {
            epochs: 1500,
            patience: 1500,
            seed: 9,
            ..TrainConfig::default()
        };
        let (_, h) = train(&config, &data, &tc).unwrap();
        let rmse = h.best_val_rmse().unwrap();
        assert!(rmse <= 0.1, "validation rmse {rmse}");
    }

    #[test]
    fn zero_epochs_returns_initialised_model() {
        let data = affine_dataset(40);
        let config = ModelConfig::reference(2, true, 5);
        let tc = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (m, h) = train(&config, &data, &tc).unwrap();
        assert_eq!(h.epochs(), 0);
        assert_eq!(m.network, Network::new(&config));
        m.validate().unwrap();
    }

    #[test]
    fn deterministic_for_fixed_seeds() {
        let data = affine_dataset(80);
        let config = ModelConfig::reference(2, true, 5);
        let tc = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let a = train(&config, &data, &tc).unwrap();
        let b = train(&config, &data, &tc).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let data = affine_dataset(80);
        let config = ModelConfig::reference(2, false, 5);
        let tc = TrainConfig {
            epochs: 50,
            optimizer: Optimizer::Sgd,
            learning_rate: 1e6,
            ..TrainConfig::default()
        };
        match train(&config, &data, &tc) {
            Err(Error::Diverged { epoch, last_finite_epoch }) => assert_eq!(last_finite_epoch + 1, epoch),
            other => panic!("expected divergence, got {:?}", other.map(|(_, h)| h)),
        }
    }

    #[test]
    fn rejects_inconsistent_inputs() {
        let data = affine_dataset(40);
        let tc = TrainConfig::default();
        assert!(matches!(
            train(&ModelConfig::reference(3, true, 0), &data, &tc),
            Err(Error::DimensionMismatch { .. })
        ));
        let huge_batch = TrainConfig {
            batch_size: 1000,
            ..TrainConfig::default()
        };
        assert!(train(&ModelConfig::reference(2, true, 0), &data, &huge_batch).is_err());
    }
}
