//! Files on disk: dataset CSVs, experiment manifests, reports and curves.
//!
//! Dataset CSV layout: header `<input names...>,t00,...,t31,provenance`, one
//! row per sample, values in shortest round-trip decimal form and provenance
//! `simulated` or `predicted`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{target_name, Dataset, RowSource};
use crate::doe::ParameterSpace;
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::neural::{TrainConfig, TrainingHistory};
use crate::pipeline::{default_case_study, Architecture, CaseStudyConfig, ExperimentReport, Variant, VariantKind};
use crate::plot::{line_plot_svg, Series};
use crate::thermal::{presets, HeatCapacityCurve, PreformGeometry, SimConfig};
use crate::N_POINTS;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
const PROVENANCE_COLUMN: &str = "provenance";

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Serializes a dataset to CSV bytes.
pub fn dataset_to_csv(data: &Dataset) -> Vec<u8> {
    let mut out = String::new();
    let mut header: Vec<String> = data.input_names().to_vec();
    header.extend((0..N_POINTS).map(target_name));
    header.push(PROVENANCE_COLUMN.into());
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..data.n_rows() {
        for v in data.input_row(r).iter().chain(data.target_row(r)) {
            out.push_str(&fmt_f64(*v));
            out.push(',');
        }
        out.push_str(data.sources()[r].as_str());
        out.push('\n');
    }
    out.into_bytes()
}

pub fn write_dataset(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, dataset_to_csv(data)).map_err(|e| Error::io(path, e))
}

/// Parses dataset CSV bytes; `path` only labels diagnostics.
pub fn dataset_from_csv(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let fail = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Err(fail(1, "empty file; expected a header row".into())),
        Some(r) => r.map_err(|e| fail(1, format!("malformed header: {e}")))?,
    };
    let names: Vec<&str> = header.iter().collect();
    if names.last() != Some(&PROVENANCE_COLUMN) {
        return Err(fail(1, format!("last column must be `{PROVENANCE_COLUMN}`")));
    }
    let first_target = names.iter().position(|n| *n == "t00").unwrap_or(names.len() - 1);
    for i in 0..N_POINTS {
        let want = target_name(i);
        match names.get(first_target + i) {
            Some(n) if *n == want => {}
            _ if !names.contains(&want.as_str()) => {
                return Err(fail(1, format!("missing target column `{want}`")));
            }
            _ => return Err(fail(1, format!("target column `{want}` out of order"))),
        }
    }
    if first_target + N_POINTS != names.len() - 1 {
        return Err(fail(1, "unexpected columns between the targets and provenance".into()));
    }
    let input_names: Vec<String> = names[..first_target].iter().map(|s| s.to_string()).collect();
    if input_names.is_empty() {
        return Err(fail(1, "no input columns".into()));
    }
    let p = input_names.len();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut sources = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            fail(line, format!("malformed row: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(fail(
                line,
                format!("expected {} fields, found {}", names.len(), record.len()),
            ));
        }
        for (j, field) in record.iter().take(p + N_POINTS).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| fail(line, format!("column `{}`: `{field}` is not a number", names[j])))?;
            if !v.is_finite() {
                return Err(fail(line, format!("column `{}`: non-finite value `{field}`", names[j])));
            }
            if j < p {
                inputs.push(v);
            } else {
                targets.push(v);
            }
        }
        let tag = &record[p + N_POINTS];
        sources.push(RowSource::parse(tag).ok_or_else(|| {
            fail(line, format!("provenance must be `simulated` or `predicted`, got `{tag}`"))
        })?);
    }
    Dataset::from_flat(input_names, inputs, targets, sources).map_err(|e| fail(1, e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    dataset_from_csv(&bytes, path)
}

/// `epoch,train_loss,val_rmse,val_r2` with 1-based epochs; absent R² is empty.
pub fn history_to_csv(history: &TrainingHistory) -> String {
    let mut out = String::from("epoch,train_loss,val_rmse,val_r2\n");
    for e in 0..history.epochs() {
        let r2 = history.val_r2[e].map(fmt_f64).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e + 1,
            fmt_f64(history.train_loss[e]),
            fmt_f64(history.val_rmse[e]),
            r2
        );
    }
    out
}

pub fn write_history_csv(history: &TrainingHistory, path: &Path) -> Result<()> {
    std::fs::write(path, history_to_csv(history)).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn metrics_cells(m: &Metrics) -> String {
    format!("{},{},{},{}", fmt_f64(m.rmse), fmt_f64(m.mae), opt(m.r2), m.n)
}

pub fn report_to_json(report: &ExperimentReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn write_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))
}

/// Writes `report.json` plus the CSV tables and SVG curves derived from it.
pub fn write_report_dir(report: &ExperimentReport, dir: &Path) -> Result<()> {
    write_file(dir, "report.json", report_to_json(report)?)?;
    render_report(report, dir)
}

/// Metric tables (`metrics.csv`, `per_dimension.csv`, `improvements.csv`),
/// per-model history CSVs and SVG plots of loss and validation R².
pub fn render_report(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let mut metrics = String::from("eval_set,model,rmse,mae,r2,n,error\n");
    let mut per_dim = String::from("eval_set,model,point,rmse,mae,r2,n\n");
    let mut improvements = String::from("eval_set,reference,candidate,rmse_reduction_pct,mae_reduction_pct,r2_gain_pct\n");
    for cmp in &report.evaluations {
        for m in &cmp.models {
            match &m.metrics {
                Some(x) => {
                    let _ = writeln!(metrics, "{},{},{},", cmp.eval_set, m.model, metrics_cells(x));
                }
                None => {
                    let err = m.error.as_deref().unwrap_or("").replace([',', '\n'], " ");
                    let _ = writeln!(metrics, "{},{},,,,,{err}", cmp.eval_set, m.model);
                }
            }
            for (j, d) in m.per_dimension.iter().enumerate() {
                let _ = writeln!(per_dim, "{},{},{},{}", cmp.eval_set, m.model, target_name(j), metrics_cells(d));
            }
        }
        for imp in &cmp.pairwise {
            let _ = writeln!(
                improvements,
                "{},{},{},{},{},{}",
                cmp.eval_set,
                imp.reference,
                imp.candidate,
                fmt_f64(imp.rmse_reduction_pct),
                fmt_f64(imp.mae_reduction_pct),
                opt(imp.r2_gain_pct)
            );
        }
    }
    write_file(dir, "metrics.csv", metrics)?;
    write_file(dir, "per_dimension.csv", per_dim)?;
    write_file(dir, "improvements.csv", improvements)?;

    let mut loss = Vec::new();
    let mut r2 = Vec::new();
    for m in &report.models {
        write_file(dir, &format!("histories/{}.csv", m.name), history_to_csv(&m.history))?;
        let h = &m.history;
        loss.push(Series {
            name: m.name.clone(),
            points: (0..h.epochs()).map(|e| ((e + 1) as f64, h.train_loss[e])).collect(),
        });
        r2.push(Series {
            name: m.name.clone(),
            points: (0..h.epochs())
                .filter_map(|e| h.val_r2[e].map(|r| ((e + 1) as f64, r)))
                .collect(),
        });
    }
    write_file(
        dir,
        "plots/train_loss.svg",
        line_plot_svg(&format!("{}: training loss", report.name), "epoch", "scaled MSE", &loss, true),
    )?;
    write_file(
        dir,
        "plots/val_r2.svg",
        line_plot_svg(&format!("{}: validation R²", report.name), "epoch", "R²", &r2, false),
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Manifests

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unseen: Option<String>,
    /// The counterpart held constant: a geometry in the material case, a
    /// material in the geometry case.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub held_fixed: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finetune: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub doe: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unseen_test: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slabs: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub include_simulated: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialDef {
    pub temps: Vec<f64>,
    pub cps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryDef {
    pub length: f64,
    pub wall_thickness: f64,
    pub weight: f64,
    pub neck_length: f64,
}

/// The TOML document as written; after [`load_manifest`] every optional
/// field is filled with its effective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub case: VariantKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub variants: VariantSection,
    #[serde(default)]
    pub sizes: SizeSection,
    #[serde(default)]
    pub space: SpaceSection,
    #[serde(default)]
    pub fusion: FusionSection,
    #[serde(default)]
    pub model: Architecture,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub materials: BTreeMap<String, MaterialDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub geometries: BTreeMap<String, GeometryDef>,
}

/// A validated manifest: the effective document and the configuration it resolves to.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestFile {
    pub manifest: Manifest,
    pub study: CaseStudyConfig,
    pub out_dir: Option<PathBuf>,
}

impl ManifestFile {
    /// The effective manifest as TOML, with every default spelled out.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.manifest).map_err(|e| Error::Manifest {
            path: PathBuf::new(),
            message: e.to_string(),
        })
    }
}

pub fn load_manifest(path: &Path) -> Result<ManifestFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path)
}

/// Parses and resolves manifest text; `path` only labels diagnostics.
pub fn parse_manifest(text: &str, path: &Path) -> Result<ManifestFile> {
    let fail = |message: String| Error::Manifest {
        path: path.to_path_buf(),
        message,
    };
    let raw: Manifest = toml::from_str(text).map_err(|e| fail(e.to_string()))?;
    resolve_manifest(raw).map_err(|e| match e {
        Error::Manifest { message, .. } => fail(message),
        other => fail(other.to_string()),
    })
}

fn material_by_name(m: &Manifest, name: &str) -> Result<Option<HeatCapacityCurve>> {
    if let Some(def) = m.materials.get(name) {
        return HeatCapacityCurve::new(name, def.temps.clone(), def.cps.clone()).map(Some);
    }
    Ok(presets::material(name))
}

fn geometry_by_name(m: &Manifest, name: &str) -> Result<Option<PreformGeometry>> {
    if let Some(d) = m.geometries.get(name) {
        return PreformGeometry::new(name, d.length, d.wall_thickness, d.weight, d.neck_length).map(Some);
    }
    Ok(presets::geometry(name))
}

fn defined_names(m: &Manifest, kind: VariantKind) -> Vec<String> {
    let (custom, builtin): (Vec<&String>, &[&str]) = match kind {
        VariantKind::Material => (m.materials.keys().collect(), &presets::MATERIAL_NAMES),
        VariantKind::Geometry => (m.geometries.keys().collect(), &presets::GEOMETRY_NAMES),
    };
    builtin.iter().map(|s| s.to_string()).chain(custom.into_iter().cloned()).collect()
}

fn resolve_variant(m: &Manifest, name: &str, held: &str) -> Result<Variant> {
    let undefined = |what: &str, n: &str, kind| Error::Manifest {
        path: PathBuf::new(),
        message: format!("undefined {what} `{n}`; defined: {}", defined_names(m, kind).join(", ")),
    };
    let (material, geometry) = match m.case {
        VariantKind::Material => (
            material_by_name(m, name)?.ok_or_else(|| undefined("material", name, VariantKind::Material))?,
            geometry_by_name(m, held)?.ok_or_else(|| undefined("geometry", held, VariantKind::Geometry))?,
        ),
        VariantKind::Geometry => (
            material_by_name(m, held)?.ok_or_else(|| undefined("material", held, VariantKind::Material))?,
            geometry_by_name(m, name)?.ok_or_else(|| undefined("geometry", name, VariantKind::Geometry))?,
        ),
    };
    Ok(Variant {
        label: name.to_string(),
        kind: m.case,
        material,
        geometry,
    })
}

fn resolve_manifest(mut m: Manifest) -> Result<ManifestFile> {
    let fail = |message: String| Error::Manifest {
        path: PathBuf::new(),
        message,
    };
    if m.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(fail(format!(
            "unsupported schema_version {}, expected {MANIFEST_SCHEMA_VERSION}",
            m.schema_version
        )));
    }
    if m.train.seed != 0 {
        return Err(fail("train.seed is derived from the master seed; set `seed` instead".into()));
    }
    let seed = *m.seed.get_or_insert(0);
    if seed > i64::MAX as u64 {
        return Err(fail(format!("seed {seed} does not fit a TOML integer")));
    }
    let defaults = default_case_study(m.case, seed);
    let name = m.name.get_or_insert_with(|| defaults.name.clone()).clone();

    let v = &mut m.variants;
    let train: Vec<String> = v
        .train
        .get_or_insert_with(|| defaults.variants.iter().map(|x| x.label.clone()).collect())
        .clone();
    let base = v
        .base
        .get_or_insert_with(|| {
            if train.len() == defaults.variants.len() {
                train[defaults.base_index].clone()
            } else {
                train[0].clone()
            }
        })
        .clone();
    let unseen = v.unseen.get_or_insert_with(|| defaults.unseen.label.clone()).clone();
    let held = v
        .held_fixed
        .get_or_insert_with(|| match m.case {
            VariantKind::Material => "medium".into(),
            VariantKind::Geometry => "mid_cp".into(),
        })
        .clone();
    let base_index = train
        .iter()
        .position(|t| *t == base)
        .ok_or_else(|| fail(format!("base variant `{base}` is not in the training list")))?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = train.iter().find(|t| !seen.insert(t.as_str())) {
        return Err(fail(format!("training variant `{dup}` listed twice")));
    }
    if train.contains(&unseen) {
        return Err(fail(format!("unseen variant `{unseen}` is also a training variant")));
    }

    let s = &mut m.sizes;
    let base_size = *s.base.get_or_insert(defaults.base_size);
    let finetune_size = *s.finetune.get_or_insert(defaults.finetune_size);
    let doe_n = *s.doe.get_or_insert(defaults.doe_n);
    let unseen_test_size = *s.unseen_test.get_or_insert(defaults.unseen_test_size);
    let baseline_sizes = s
        .baseline
        .get_or_insert_with(|| (0..train.len()).map(|i| if i == base_index { 700 } else { 625 }).collect())
        .clone();

    let default_space = &defaults.space.dims()[0];
    let sp = &mut m.space;
    let slabs = *sp.slabs.get_or_insert(defaults.space.len());
    let lower = *sp.lower.get_or_insert(default_space.lower);
    let upper = *sp.upper.get_or_insert(default_space.upper);
    let space = ParameterSpace::slab_positions(slabs, lower, upper)?;
    let include_simulated = *m.fusion.include_simulated.get_or_insert(false);

    let variants = train
        .iter()
        .map(|t| resolve_variant(&m, t, &held))
        .collect::<Result<Vec<_>>>()?;
    let unseen_variant = resolve_variant(&m, &unseen, &held)?;
    let study = CaseStudyConfig {
        name,
        case: m.case,
        master_seed: seed,
        variants,
        base_index,
        unseen: unseen_variant,
        space,
        base_size,
        finetune_size,
        doe_n,
        baseline_sizes,
        unseen_test_size,
        include_simulated_in_fusion: include_simulated,
        architecture: m.model.clone(),
        train: m.train.clone(),
        sim: m.sim.clone(),
    };
    study.validate()?;
    study.architecture.model_config(slabs, 0).validate()?;
    let out_dir = m.out_dir.clone();
    Ok(ManifestFile {
        manifest: m,
        study,
        out_dir,
    })
}

/// Minimal manifest text for a case study.
pub fn minimal_manifest(case: VariantKind, seed: u64) -> String {
    format!("schema_version = {MANIFEST_SCHEMA_VERSION}\ncase = \"{}\"\nseed = {seed}\n", case.as_str())
}
