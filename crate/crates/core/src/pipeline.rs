//! Experiment graph: variant models, fine-tuning, experience extraction,
//! global-model training, the from-scratch baseline, and the case-study
//! driver that ties them together.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{is_design_column, Dataset, RowSource};
use crate::doe::{lhs_sample, ParameterSpace};
use crate::error::{Error, Result};
use crate::metrics::{compare_models, Comparison};
use crate::neural::{finetune_model, save_checkpoint, train, Activation, ModelConfig, Provenance, TrainConfig, TrainedModel, TrainingHistory};
use crate::seed::{derive_seed, rng};
use crate::store;
use crate::thermal::{generate_dataset, HeatCapacityCurve, PreformGeometry, SimConfig};
use crate::N_POINTS;

/// Fine-tuning runs at this fraction of the configured learning rate.
pub const FINETUNE_LR_SCALE: f64 = 0.3;

pub const GEOMETRY_FEATURES: [&str; 4] = ["length", "wall_thickness", "weight", "neck_length"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Material,
    Geometry,
}

impl VariantKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Material => "material",
            VariantKind::Geometry => "geometry",
        }
    }
}

/// Named features that identify a variant to the global model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantDescriptor {
    pub kind: VariantKind,
    pub label: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl VariantDescriptor {
    pub fn feature_names(&self) -> Vec<String> {
        self.names.clone()
    }

    pub fn values(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Reconstructs a descriptor from the constant non-design columns of a
    /// single-variant dataset.
    pub fn infer(data: &Dataset, label: &str) -> Result<Self> {
        let mut names = Vec::new();
        let mut values = Vec::new();
        for (j, name) in data.input_names().iter().enumerate() {
            if is_design_column(name) {
                continue;
            }
            let v = data.constant_value(j).ok_or_else(|| {
                Error::InvalidArgument(format!("descriptor column `{name}` is not constant; dataset mixes variants"))
            })?;
            names.push(name.clone());
            values.push(v);
        }
        let kind = if names.iter().map(String::as_str).eq(GEOMETRY_FEATURES) {
            VariantKind::Geometry
        } else if !names.is_empty() && names.iter().enumerate().all(|(i, n)| *n == material_feature_name(i)) {
            VariantKind::Material
        } else {
            return Err(Error::InvalidArgument(format!(
                "cannot infer a variant descriptor from columns {names:?}"
            )));
        };
        Ok(Self {
            kind,
            label: label.to_string(),
            names,
            values,
        })
    }
}

/// Descriptor column for the `i`-th heat capacity knot (`cp1`, `cp2`, ...).
pub fn material_feature_name(i: usize) -> String {
    format!("cp{}", i + 1)
}

/// A simulated preform: material and geometry, described by one of the two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    pub kind: VariantKind,
    pub material: HeatCapacityCurve,
    pub geometry: PreformGeometry,
}

impl Variant {
    pub fn descriptor(&self) -> VariantDescriptor {
        let (names, values) = match self.kind {
            VariantKind::Material => (
                (0..self.material.cps().len()).map(material_feature_name).collect(),
                self.material.cps().to_vec(),
            ),
            VariantKind::Geometry => (
                GEOMETRY_FEATURES.iter().map(|s| s.to_string()).collect(),
                vec![
                    self.geometry.length,
                    self.geometry.wall_thickness,
                    self.geometry.weight,
                    self.geometry.neck_length,
                ],
            ),
        };
        VariantDescriptor {
            kind: self.kind,
            label: self.label.clone(),
            names,
            values,
        }
    }

    /// Built-in variant by name: material presets use the medium geometry,
    /// geometry presets use the mid heat capacity curve.
    pub fn preset(name: &str) -> Option<Variant> {
        use crate::thermal::presets;
        if let Some(material) = presets::material(name) {
            return Some(Variant {
                label: name.to_string(),
                kind: VariantKind::Material,
                material,
                geometry: presets::geometry("medium")?,
            });
        }
        presets::geometry(name).map(|geometry| Variant {
            label: name.to_string(),
            kind: VariantKind::Geometry,
            material: presets::material("mid_cp").expect("mid_cp preset"),
            geometry,
        })
    }

    pub fn preset_names() -> Vec<&'static str> {
        use crate::thermal::presets;
        presets::MATERIAL_NAMES.iter().chain(&presets::GEOMETRY_NAMES).copied().collect()
    }
}

/// Trains a variant-specific model on the design columns of `data`.
pub fn train_variant(
    config: &ModelConfig,
    data: &Dataset,
    descriptor: &VariantDescriptor,
    tc: &TrainConfig,
) -> Result<(TrainedModel, TrainingHistory)> {
    let view = data.select_inputs(&data.design_columns())?;
    let (mut model, history) = train(config, &view, tc)?;
    model.provenance = Provenance {
        label: descriptor.label.clone(),
        lineage: Vec::new(),
        variant: Some(descriptor.clone()),
    };
    Ok((model, history))
}

/// Warm-starts from `base` and trains on `data` at a reduced learning rate.
/// The output scaler is re-fitted on the new targets and the parent is
/// recorded in the provenance lineage.
pub fn finetune(base: &TrainedModel, data: &Dataset, tc: &TrainConfig) -> Result<(TrainedModel, TrainingHistory)> {
    for name in &base.input_names {
        if data.column_index(name).is_none() {
            return Err(Error::DimensionMismatch {
                expected: base.input_dim(),
                found: data.input_names().iter().filter(|n| base.input_names.contains(n)).count(),
            });
        }
    }
    finetune_model(base, data, tc, FINETUNE_LR_SCALE)
}

/// Inputs for experience extraction: one trained model per variant, queried
/// on a fresh LHS design of `doe_n` points over `space`.
#[derive(Debug, Clone)]
pub struct FusionPlan {
    pub variant_models: Vec<(TrainedModel, VariantDescriptor)>,
    pub doe_n: usize,
    pub space: ParameterSpace,
    pub seed: u64,
}

impl FusionPlan {
    pub fn validate(&self) -> Result<()> {
        if self.variant_models.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "fusion needs at least 2 variant models, got {}",
                self.variant_models.len()
            )));
        }
        if self.doe_n == 0 {
            return Err(Error::InvalidArgument("fusion DOE size must be at least 1".into()));
        }
        let space_names = self.space.names();
        let first = &self.variant_models[0].1;
        for (model, desc) in &self.variant_models {
            if model.input_names != space_names {
                return Err(Error::InvalidArgument(format!(
                    "model `{}` takes inputs {:?} but the design space is {:?}",
                    model.provenance.label, model.input_names, space_names
                )));
            }
            if desc.kind != first.kind || desc.names != first.names || desc.values.len() != desc.names.len() {
                return Err(Error::InvalidArgument(format!(
                    "variant `{}` has descriptor {:?}, incompatible with {:?}",
                    desc.label, desc.names, first.names
                )));
            }
        }
        Ok(())
    }
}

/// Queries every variant model on one fresh design and stacks the results:
/// `doe_n` rows per model, inputs = design point ⊕ descriptor, targets = the
/// model's °C predictions, all flagged as predicted.
pub fn extract_experience(plan: &FusionPlan) -> Result<Dataset> {
    plan.validate()?;
    let design = lhs_sample(&plan.space, plan.doe_n, plan.seed)?;
    let design_data = Dataset::from_flat(
        plan.space.names(),
        design.rows().flatten().copied().collect(),
        vec![0.0; plan.doe_n * N_POINTS],
        vec![RowSource::Predicted; plan.doe_n],
    )?;
    let desc_names = plan.variant_models[0].1.feature_names();
    let mut names = plan.space.names();
    names.extend(desc_names);

    let rows = plan.doe_n * plan.variant_models.len();
    let mut inputs = Vec::with_capacity(rows * names.len());
    let mut targets = Vec::with_capacity(rows * N_POINTS);
    for (model, desc) in &plan.variant_models {
        let pred = model.predict_dataset(&design_data)?;
        for row in design.rows() {
            inputs.extend_from_slice(row);
            inputs.extend_from_slice(&desc.values);
        }
        targets.extend(pred);
    }
    Dataset::from_flat(names, inputs, targets, vec![RowSource::Predicted; rows])
}

/// Trains the global model on a fused dataset (design plus descriptor columns).
pub fn train_global(fused: &Dataset, config: &ModelConfig, tc: &TrainConfig) -> Result<(TrainedModel, TrainingHistory)> {
    if fused.is_empty() {
        return Err(Error::InsufficientRows("fused dataset is empty".into()));
    }
    if fused.input_names().iter().all(|n| is_design_column(n)) {
        return Err(Error::InvalidArgument(
            "fused dataset has no variant descriptor columns".into(),
        ));
    }
    let (mut model, history) = train(config, fused, tc)?;
    model.provenance = Provenance::new("global");
    Ok((model, history))
}

/// Assembles the from-scratch baseline training set: `sizes[i]` rows drawn
/// without replacement (seeded) from each variant's simulated dataset, with
/// descriptor columns present, concatenated in variant order.
pub fn baseline_dataset(variant_datasets: &[(Dataset, VariantDescriptor)], sizes: &[usize], seed: u64) -> Result<Dataset> {
    if variant_datasets.len() != sizes.len() {
        return Err(Error::DimensionMismatch {
            expected: variant_datasets.len(),
            found: sizes.len(),
        });
    }
    if sizes.iter().sum::<usize>() == 0 {
        return Err(Error::InsufficientRows("baseline training set would be empty".into()));
    }
    let short: Vec<String> = variant_datasets
        .iter()
        .zip(sizes)
        .filter(|((d, _), &k)| k > d.n_rows())
        .map(|((d, desc), k)| format!("`{}` requested {k}, available {}", desc.label, d.n_rows()))
        .collect();
    if !short.is_empty() {
        return Err(Error::InsufficientRows(short.join("; ")));
    }
    let mut shuffler = rng(seed);
    let mut combined: Option<Dataset> = None;
    for ((data, desc), &k) in variant_datasets.iter().zip(sizes) {
        let design = data.select_inputs(&data.design_columns())?;
        let mut with_desc = design.with_constant_columns(&desc.names, &desc.values)?;
        for (name, value) in desc.names.iter().zip(&desc.values) {
            if let Some(j) = data.column_index(name) {
                if data.column(j).any(|v| v != *value) {
                    return Err(Error::InvalidArgument(format!(
                        "dataset for `{}` has column `{name}` disagreeing with its descriptor",
                        desc.label
                    )));
                }
            }
        }
        let mut idx: Vec<usize> = (0..data.n_rows()).collect();
        idx.shuffle(&mut shuffler);
        let mut chosen = idx[..k].to_vec();
        chosen.sort_unstable();
        with_desc = with_desc.subset(&chosen);
        combined = Some(match combined {
            None => with_desc,
            Some(acc) => acc.concat(&with_desc)?,
        });
    }
    Ok(combined.expect("at least one variant"))
}

/// Subsamples each variant's simulated data, appends descriptor features and
/// trains a model from scratch on the union.
pub fn train_baseline(
    variant_datasets: &[(Dataset, VariantDescriptor)],
    sizes: &[usize],
    config: &ModelConfig,
    tc: &TrainConfig,
    seed: u64,
) -> Result<(TrainedModel, TrainingHistory)> {
    let data = baseline_dataset(variant_datasets, sizes, seed)?;
    let (mut model, history) = train(config, &data, tc)?;
    model.provenance = Provenance::new("baseline");
    Ok((model, history))
}

/// Architecture knobs shared by every model of a case study; the input
/// width is filled in per model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Architecture {
    pub hidden_widths: Vec<usize>,
    pub skip_connections: bool,
    pub activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        let r = ModelConfig::reference(1, true, 0);
        Self {
            hidden_widths: r.hidden_widths,
            skip_connections: r.skip_connections,
            activation: r.activation,
        }
    }
}

impl Architecture {
    pub fn model_config(&self, input_dim: usize, init_seed: u64) -> ModelConfig {
        ModelConfig {
            input_dim,
            output_dim: N_POINTS,
            hidden_widths: self.hidden_widths.clone(),
            skip_connections: self.skip_connections,
            activation: self.activation,
            init_seed,
        }
    }
}

/// Fully resolved case-study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub name: String,
    pub case: VariantKind,
    pub master_seed: u64,
    /// Training variants in reporting order (e.g. low, mid, high).
    pub variants: Vec<Variant>,
    /// Index into `variants` of the variant the base model is trained on.
    pub base_index: usize,
    pub unseen: Variant,
    pub space: ParameterSpace,
    pub base_size: usize,
    pub finetune_size: usize,
    pub doe_n: usize,
    /// Baseline rows per training variant, aligned with `variants`.
    pub baseline_sizes: Vec<usize>,
    pub unseen_test_size: usize,
    /// Also train the global model on the original simulated rows.
    pub include_simulated_in_fusion: bool,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub sim: SimConfig,
}

impl CaseStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variants.len() < 2 {
            return Err(Error::InvalidArgument("case study needs at least 2 training variants".into()));
        }
        if self.base_index >= self.variants.len() {
            return Err(Error::InvalidArgument(format!("base index {} out of range", self.base_index)));
        }
        if self.baseline_sizes.len() != self.variants.len() {
            return Err(Error::DimensionMismatch {
                expected: self.variants.len(),
                found: self.baseline_sizes.len(),
            });
        }
        for v in self.variants.iter().chain([&self.unseen]) {
            if v.kind != self.case {
                return Err(Error::InvalidArgument(format!(
                    "variant `{}` is a {} variant in a {} case study",
                    v.label,
                    v.kind.as_str(),
                    self.case.as_str()
                )));
            }
        }
        let unseen = self.unseen.descriptor();
        if self.variants.iter().any(|v| v.descriptor().values == unseen.values) {
            return Err(Error::InvalidArgument(format!(
                "unseen variant `{}` coincides with a training variant",
                self.unseen.label
            )));
        }
        for (what, n) in [
            ("base_size", self.base_size),
            ("finetune_size", self.finetune_size),
            ("doe_n", self.doe_n),
            ("unseen_test_size", self.unseen_test_size),
        ] {
            if n == 0 {
                return Err(Error::InvalidArgument(format!("{what} must be at least 1")));
            }
        }
        self.train.validate()
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.master_seed, stage)
    }

    fn train_config(&self, stage: &str) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed(&format!("train/{stage}")),
            ..self.train.clone()
        }
    }

    fn model_config(&self, stage: &str, input_dim: usize) -> ModelConfig {
        self.architecture.model_config(input_dim, self.stage_seed(&format!("init/{stage}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub name: String,
    pub role: String,
    pub lineage: Vec<String>,
    pub input_names: Vec<String>,
    pub training_rows: usize,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub case: VariantKind,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    /// `predicted_only` or `predicted_plus_simulated`.
    pub fusion_mode: String,
    pub fused_rows: usize,
    pub models: Vec<ModelRecord>,
    pub evaluations: Vec<Comparison>,
    pub config: CaseStudyConfig,
}

impl ExperimentReport {
    pub fn model(&self, name: &str) -> Option<&ModelRecord> {
        self.models.iter().find(|m| m.name == name)
    }

    /// Unseen-variant RMSE of a model, if it was evaluated.
    pub fn unseen_rmse(&self, name: &str) -> Option<f64> {
        self.evaluations
            .iter()
            .find(|c| c.eval_set == UNSEEN_EVAL)?
            .models
            .iter()
            .find(|m| m.model == name)?
            .metrics
            .map(|m| m.rmse)
    }
}

pub const UNSEEN_EVAL: &str = "unseen_variant";

/// Everything a case-study run produced, in memory.
pub struct CaseStudyOutcome {
    pub report: ExperimentReport,
    pub models: Vec<(String, TrainedModel)>,
    pub datasets: Vec<(String, Dataset)>,
}

struct ArtifactSink<'a> {
    dir: Option<&'a Path>,
}

impl ArtifactSink<'_> {
    fn path(&self, sub: &str, file: &str) -> Result<Option<PathBuf>> {
        let Some(dir) = self.dir else { return Ok(None) };
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        Ok(Some(d.join(file)))
    }

    fn dataset(&self, name: &str, data: &Dataset) -> Result<()> {
        if let Some(p) = self.path("datasets", &format!("{name}.csv"))? {
            store::write_dataset(data, &p)?;
        }
        Ok(())
    }

    fn model(&self, name: &str, model: &TrainedModel, history: &TrainingHistory) -> Result<()> {
        if let Some(p) = self.path("models", &format!("{name}.ckpt"))? {
            save_checkpoint(model, &p)?;
        }
        if let Some(p) = self.path("histories", &format!("{name}.csv"))? {
            store::write_history_csv(history, &p)?;
        }
        Ok(())
    }
}

/// Runs the full experiment graph. When `out_dir` is given, datasets,
/// checkpoints and histories are written as soon as they exist, so a failing
/// arm leaves the earlier artifacts behind; the report goes last.
pub fn run_case_study(config: &CaseStudyConfig, out_dir: Option<&Path>) -> Result<CaseStudyOutcome> {
    config.validate()?;
    let sink = ArtifactSink { dir: out_dir };
    let mut seeds = BTreeMap::new();
    let mut seed_for = |stage: String| {
        let s = config.stage_seed(&stage);
        seeds.insert(stage, s);
        s
    };

    // Simulated training data per variant.
    let mut variant_data = Vec::with_capacity(config.variants.len());
    for (i, v) in config.variants.iter().enumerate() {
        let n = if i == config.base_index { config.base_size } else { config.finetune_size };
        let data = generate_dataset(&config.space, v, n, seed_for(format!("data/{}", v.label)), &config.sim)?;
        sink.dataset(&format!("train_{}", v.label), &data)?;
        variant_data.push((data, v.descriptor()));
    }
    let baseline_pools: Vec<(Dataset, VariantDescriptor)> = config
        .variants
        .iter()
        .zip(&config.baseline_sizes)
        .map(|(v, &k)| {
            let data = generate_dataset(&config.space, v, k.max(1), seed_for(format!("baseline-pool/{}", v.label)), &config.sim)?;
            sink.dataset(&format!("baseline_pool_{}", v.label), &data)?;
            Ok((data, v.descriptor()))
        })
        .collect::<Result<_>>()?;
    let unseen_seed = seed_for("unseen-test".to_string());
    let experience_seed = seed_for("experience".to_string());
    let subsample_seed = seed_for("baseline-subsample".to_string());
    for stage in ["base", "global", "baseline"] {
        seed_for(format!("init/{stage}"));
        seed_for(format!("train/{stage}"));
    }
    for v in &config.variants {
        seed_for(format!("train/finetune-{}", v.label));
    }
    if seeds.iter().any(|(k, &s)| k != "unseen-test" && s == unseen_seed) {
        return Err(Error::InvalidArgument("unseen test seed collides with a training seed".into()));
    }
    let unseen_data = generate_dataset(&config.space, &config.unseen, config.unseen_test_size, unseen_seed, &config.sim)?;
    sink.dataset("unseen_test", &unseen_data)?;

    let design_dims = config.space.len();
    let (base_data, base_desc) = &variant_data[config.base_index];
    let (base, base_hist) = train_variant(
        &config.model_config("base", design_dims),
        base_data,
        base_desc,
        &config.train_config("base"),
    )?;
    sink.model(&base_desc.label, &base, &base_hist)?;

    let mut records = Vec::new();
    let mut variant_models: Vec<(String, TrainedModel, TrainingHistory, usize)> = Vec::new();
    for (i, (data, desc)) in variant_data.iter().enumerate() {
        if i == config.base_index {
            variant_models.push((desc.label.clone(), base.clone(), base_hist.clone(), data.n_rows()));
            continue;
        }
        let (mut m, h) = finetune(&base, data, &config.train_config(&format!("finetune-{}", desc.label)))?;
        m.provenance.label = desc.label.clone();
        m.provenance.variant = Some(desc.clone());
        sink.model(&desc.label, &m, &h)?;
        variant_models.push((desc.label.clone(), m, h, data.n_rows()));
    }

    let fusion_arm = || -> Result<(Dataset, TrainedModel, TrainingHistory)> {
        let plan = FusionPlan {
            variant_models: variant_models
                .iter()
                .zip(&variant_data)
                .map(|((_, m, _, _), (_, desc))| (m.clone(), desc.clone()))
                .collect(),
            doe_n: config.doe_n,
            space: config.space.clone(),
            seed: experience_seed,
        };
        let mut fused = extract_experience(&plan)?;
        if config.include_simulated_in_fusion {
            for (data, desc) in &variant_data {
                let design = data.select_inputs(&data.design_columns())?;
                fused = fused.concat(&design.with_constant_columns(&desc.names, &desc.values)?)?;
            }
        }
        let (global, hist) = train_global(
            &fused,
            &config.model_config("global", fused.n_inputs()),
            &config.train_config("global"),
        )?;
        Ok((fused, global, hist))
    };
    let baseline_arm = || -> Result<(Dataset, TrainedModel, TrainingHistory)> {
        let data = baseline_dataset(&baseline_pools, &config.baseline_sizes, subsample_seed)?;
        let (mut model, hist) = train(
            &config.model_config("baseline", data.n_inputs()),
            &data,
            &config.train_config("baseline"),
        )?;
        model.provenance = Provenance::new("baseline");
        Ok((data, model, hist))
    };
    let (fusion, baseline) = rayon::join(fusion_arm, baseline_arm);
    let (fused, global, global_hist) = fusion?;
    let (baseline_data, baseline, baseline_hist) = baseline?;
    sink.dataset("fused", &fused)?;
    sink.model("global", &global, &global_hist)?;
    sink.dataset("baseline_train", &baseline_data)?;
    sink.model("baseline", &baseline, &baseline_hist)?;

    // Leakage guard: the held-out descriptor must not occur in any training set.
    let unseen_desc = config.unseen.descriptor();
    for data in [&fused, &baseline_data] {
        let idx: Vec<usize> = unseen_desc
            .names
            .iter()
            .map(|n| data.column_index(n).ok_or_else(|| Error::MissingColumn(n.clone())))
            .collect::<Result<_>>()?;
        for r in 0..data.n_rows() {
            let row = data.input_row(r);
            if idx.iter().zip(&unseen_desc.values).all(|(&j, v)| row[j] == *v) {
                return Err(Error::InvalidArgument(format!(
                    "unseen variant `{}` leaked into a training set at row {r}",
                    unseen_desc.label
                )));
            }
        }
    }

    for (name, m, h, rows) in &variant_models {
        let role = if m.provenance.lineage.is_empty() { "base" } else { "finetune" };
        records.push(ModelRecord {
            name: name.clone(),
            role: role.to_string(),
            lineage: m.provenance.lineage.clone(),
            input_names: m.input_names.clone(),
            training_rows: *rows,
            history: h.clone(),
        });
    }
    records.push(ModelRecord {
        name: "global".into(),
        role: "global".into(),
        lineage: Vec::new(),
        input_names: global.input_names.clone(),
        training_rows: fused.n_rows(),
        history: global_hist,
    });
    records.push(ModelRecord {
        name: "baseline".into(),
        role: "baseline".into(),
        lineage: Vec::new(),
        input_names: baseline.input_names.clone(),
        training_rows: baseline_data.n_rows(),
        history: baseline_hist,
    });

    let mut models: Vec<(String, TrainedModel)> = variant_models.into_iter().map(|(n, m, _, _)| (n, m)).collect();
    models.push(("global".into(), global));
    models.push(("baseline".into(), baseline));
    let named: Vec<(&str, &TrainedModel)> = models.iter().map(|(n, m)| (n.as_str(), m)).collect();
    let evaluation = compare_models(&named, UNSEEN_EVAL, &unseen_data);

    let report = ExperimentReport {
        name: config.name.clone(),
        case: config.case,
        master_seed: config.master_seed,
        seeds,
        fusion_mode: if config.include_simulated_in_fusion {
            "predicted_plus_simulated".into()
        } else {
            "predicted_only".into()
        },
        fused_rows: fused.n_rows(),
        models: records,
        evaluations: vec![evaluation],
        config: config.clone(),
    };
    if let Some(dir) = out_dir {
        store::write_report_dir(&report, dir)?;
    }
    let datasets = variant_data
        .into_iter()
        .map(|(d, desc)| (format!("train_{}", desc.label), d))
        .chain([
            ("fused".to_string(), fused),
            ("baseline_train".to_string(), baseline_data),
            ("unseen_test".to_string(), unseen_data),
        ])
        .collect();
    Ok(CaseStudyOutcome { report, models, datasets })
}

/// The case-study defaults: low/mid/high heat capacity (mid as base) or
/// small/medium/large geometries (medium as base).
pub fn default_case_study(case: VariantKind, master_seed: u64) -> CaseStudyConfig {
    let (names, unseen) = match case {
        VariantKind::Material => (["low_cp", "mid_cp", "high_cp"], "unseen_cp"),
        VariantKind::Geometry => (["small", "medium", "large"], "unseen_geometry"),
    };
    CaseStudyConfig {
        name: format!("{}-case", case.as_str()),
        case,
        master_seed,
        variants: names.iter().map(|n| Variant::preset(n).expect("preset")).collect(),
        base_index: 1,
        unseen: Variant::preset(unseen).expect("preset"),
        space: default_space(),
        base_size: 550,
        finetune_size: 450,
        doe_n: 2000,
        baseline_sizes: vec![625, 700, 625],
        unseen_test_size: 500,
        include_simulated_in_fusion: false,
        architecture: Architecture::default(),
        train: TrainConfig::default(),
        sim: SimConfig::default(),
    }
}

/// Two independent slab positions on [10, 110] mm.
pub fn default_space() -> ParameterSpace {
    ParameterSpace::slab_positions(2, 10.0, 110.0).expect("valid default space")
}
