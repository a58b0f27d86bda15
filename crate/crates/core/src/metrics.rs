//! Regression metrics and model comparison.
//!
//! All metrics pool every entry of the `n × width` matrices: RMSE and MAE
//! average over all entries, and R² uses the grand mean of all targets.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neural::TrainedModel;
use crate::N_POINTS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// `None` when the targets have zero variance.
    pub r2: Option<f64>,
    /// Number of rows.
    pub n: usize,
}

/// Metrics of row-major `predictions` against `targets`, both `n × width`.
pub fn compute_metrics(predictions: &[f64], targets: &[f64], width: usize) -> Result<Metrics> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if width == 0 || targets.is_empty() || !targets.len().is_multiple_of(width) {
        return Err(Error::InvalidArgument(format!(
            "metrics need at least one row of width {width}, got {} values",
            targets.len()
        )));
    }
    let count = targets.len() as f64;
    let mean = targets.iter().sum::<f64>() / count;
    let (mut sse, mut sae, mut sst) = (0.0, 0.0, 0.0);
    for (p, t) in predictions.iter().zip(targets) {
        let e = p - t;
        sse += e * e;
        sae += e.abs();
        let d = t - mean;
        sst += d * d;
    }
    Ok(Metrics {
        rmse: (sse / count).sqrt(),
        mae: sae / count,
        r2: (sst > 0.0).then(|| 1.0 - sse / sst),
        n: targets.len() / width,
    })
}

/// Metrics computed separately for each of the `width` output columns.
pub fn per_dimension_metrics(predictions: &[f64], targets: &[f64], width: usize) -> Result<Vec<Metrics>> {
    compute_metrics(predictions, targets, width)?;
    (0..width)
        .map(|j| {
            let p: Vec<f64> = predictions.iter().skip(j).step_by(width).copied().collect();
            let t: Vec<f64> = targets.iter().skip(j).step_by(width).copied().collect();
            compute_metrics(&p, &t, 1)
        })
        .collect()
}

/// Relative reduction of an error metric from `reference` to `candidate`, in percent.
pub fn error_reduction_percent(reference: f64, candidate: f64) -> f64 {
    (reference - candidate) / reference * 100.0
}

/// Relative gain of a score (R²) from `reference` to `candidate`, in percent.
pub fn score_gain_percent(reference: f64, candidate: f64) -> f64 {
    (candidate - reference) / reference * 100.0
}

pub fn round_to(value: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (value * f).round() / f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvaluation {
    pub model: String,
    pub metrics: Option<Metrics>,
    pub per_dimension: Vec<Metrics>,
    /// Why the model could not be evaluated, if it could not.
    pub error: Option<String>,
}

/// Improvement of `candidate` over `reference`, percentages rounded to one decimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub reference: String,
    pub candidate: String,
    pub rmse_reduction_pct: f64,
    pub mae_reduction_pct: f64,
    pub r2_gain_pct: Option<f64>,
}

impl Improvement {
    pub fn between(reference: (&str, &Metrics), candidate: (&str, &Metrics)) -> Self {
        let (a, b) = (reference.1, candidate.1);
        Self {
            reference: reference.0.to_string(),
            candidate: candidate.0.to_string(),
            rmse_reduction_pct: round_to(error_reduction_percent(a.rmse, b.rmse), 1),
            mae_reduction_pct: round_to(error_reduction_percent(a.mae, b.mae), 1),
            r2_gain_pct: a.r2.zip(b.r2).map(|(ra, rb)| round_to(score_gain_percent(ra, rb), 1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub eval_set: String,
    pub rows: usize,
    pub models: Vec<ModelEvaluation>,
    /// One entry per ordered pair `(i, j)` with `i < j` of successfully
    /// evaluated models; empty for fewer than two.
    pub pairwise: Vec<Improvement>,
}

/// Evaluates each named model on `eval_set`. Models whose inputs the set
/// cannot supply are flagged and skipped; the others are still reported.
pub fn compare_models(models: &[(&str, &TrainedModel)], eval_name: &str, eval_set: &Dataset) -> Comparison {
    let models: Vec<ModelEvaluation> = models
        .iter()
        .map(|(name, model)| {
            let outcome = model.predict_dataset(eval_set).and_then(|pred| {
                let m = compute_metrics(&pred, eval_set.targets(), N_POINTS)?;
                let per = per_dimension_metrics(&pred, eval_set.targets(), N_POINTS)?;
                Ok((m, per))
            });
            match outcome {
                Ok((m, per)) => ModelEvaluation {
                    model: name.to_string(),
                    metrics: Some(m),
                    per_dimension: per,
                    error: None,
                },
                Err(e) => ModelEvaluation {
                    model: name.to_string(),
                    metrics: None,
                    per_dimension: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<(&str, &Metrics)> = models
        .iter()
        .filter_map(|e| e.metrics.as_ref().map(|m| (e.model.as_str(), m)))
        .collect();
    let mut pairwise = Vec::new();
    for i in 0..ok.len() {
        for j in i + 1..ok.len() {
            pairwise.push(Improvement::between(ok[i], ok[j]));
        }
    }
    Comparison {
        eval_set: eval_name.to_string(),
        rows: eval_set.n_rows(),
        models,
        pairwise,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction() {
        let t = [1.0, 2.0, 3.0, 4.0];
        let m = compute_metrics(&t, &t, 2).unwrap();
        assert_eq!((m.rmse, m.mae, m.r2, m.n), (0.0, 0.0, Some(1.0), 2));
    }

    #[test]
    fn grand_mean_prediction_scores_zero() {
        let t = [1.0, 2.0, 3.0, 6.0];
        let m = compute_metrics(&[3.0; 4], &t, 2).unwrap();
        assert_eq!(m.r2, Some(0.0));
    }

    #[test]
    fn hand_arithmetic() {
        let m = compute_metrics(&[1.0, 3.0], &[2.0, 2.0], 1).unwrap();
        assert_eq!((m.rmse, m.mae), (1.0, 1.0));
        assert_eq!(m.r2, None);
    }

    #[test]
    fn shape_errors() {
        assert!(compute_metrics(&[1.0], &[1.0, 2.0], 1).is_err());
        assert!(compute_metrics(&[], &[], 1).is_err());
        assert!(compute_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2).is_err());
    }

    #[test]
    fn improvement_conventions() {
        assert_eq!(round_to(error_reduction_percent(0.185, 0.052), 0), 72.0);
        assert_eq!(round_to(error_reduction_percent(0.148, 0.039), 0), 74.0);
        assert_eq!(round_to(score_gain_percent(0.91, 0.98), 1), 7.7);
        let a = Metrics { rmse: 0.185, mae: 0.148, r2: Some(0.91), n: 1 };
        let b = Metrics { rmse: 0.052, mae: 0.039, r2: Some(0.98), n: 1 };
        let imp = Improvement::between(("mlp", &a), ("skip", &b));
        assert_eq!(imp.rmse_reduction_pct, 71.9);
        assert_eq!(imp.r2_gain_pct, Some(7.7));
        let same = Improvement::between(("a", &a), ("b", &a));
        assert_eq!((same.rmse_reduction_pct, same.mae_reduction_pct, same.r2_gain_pct), (0.0, 0.0, Some(0.0)));
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(v in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..64)) {
            let (p, t): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let m = compute_metrics(&p, &t, 1).unwrap();
            prop_assert!(m.rmse + 1e-12 >= m.mae);
            prop_assert!(m.mae >= 0.0);
            if let Some(r2) = m.r2 { prop_assert!(r2 <= 1.0); }
        }

        #[test]
        fn shift_invariance(v in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 2..64), c in -1000.0f64..1000.0) {
            let (p, t): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let a = compute_metrics(&p, &t, 1).unwrap();
            let ps: Vec<f64> = p.iter().map(|x| x + c).collect();
            let ts: Vec<f64> = t.iter().map(|x| x + c).collect();
            let b = compute_metrics(&ps, &ts, 1).unwrap();
            prop_assert!((a.rmse - b.rmse).abs() <= 1e-9 * (1.0 + a.rmse));
            prop_assert!((a.mae - b.mae).abs() <= 1e-9 * (1.0 + a.mae));
            if let (Some(x), Some(y)) = (a.r2, b.r2) {
                prop_assert!((x - y).abs() <= 1e-6 * (1.0 + x.abs()));
            }
        }
    }
}
