use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use preform_fusion::dataset::is_design_column;
use preform_fusion::doe::ParameterSpace;
use preform_fusion::metrics::compare_models;
use preform_fusion::neural::{load_checkpoint, save_checkpoint, Activation, Optimizer, Provenance};
use preform_fusion::pipeline::{
    self, default_space, extract_experience, finetune, run_case_study, train_baseline, train_global, Architecture,
    FusionPlan, Variant, VariantDescriptor, VariantKind,
};
use preform_fusion::store::{self, ManifestFile};
use preform_fusion::{thermal, Dataset, TrainConfig, TrainedModel, TrainingHistory};

#[derive(Parser)]
#[command(name = "preform-fusion", version, about = "Temperature-field surrogates with fine-tuning and model fusion")]
struct Cli {
    /// Experiment manifest (TOML) supplying simulator, model and training settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for data generation and batch inference.
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Master seed; stage seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a dataset for one variant on a fresh LHS design.
    GenData(GenData),
    /// Train a variant model from scratch.
    Train(Train),
    /// Fine-tune a checkpoint on another variant's data.
    Finetune(Finetune),
    /// Query variant models on a shared design and write the fused dataset.
    Fuse(Fuse),
    /// Train the global model on a fused dataset.
    TrainGlobal(TrainGlobal),
    /// Train the from-scratch baseline on subsampled variant datasets.
    Baseline(Baseline),
    /// Evaluate checkpoints on a dataset.
    Evaluate(Evaluate),
    /// Run a full case study and write its report directory.
    CaseStudy(CaseStudy),
    /// Re-render tables and plots from a case-study report.
    Report(Report),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    variant: String,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct Hyper {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    optimizer: Option<OptimizerArg>,
}

#[derive(Args, Serialize)]
struct ArchArgs {
    /// Hidden widths, e.g. `64,64,64`.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// Plain MLP without residual blocks.
    #[arg(long)]
    no_skip: bool,
    #[arg(long)]
    activation: Option<ActivationArg>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum ActivationArg {
    Relu,
    Tanh,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
enum CaseArg {
    Material,
    Geometry,
}

impl From<CaseArg> for VariantKind {
    fn from(c: CaseArg) -> Self {
        match c {
            CaseArg::Material => VariantKind::Material,
            CaseArg::Geometry => VariantKind::Geometry,
        }
    }
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Label recorded in the checkpoint provenance (defaults to the file stem).
    #[arg(long)]
    label: Option<String>,
    /// Train on every input column instead of the slab positions only.
    #[arg(long)]
    all_columns: bool,
    /// Also write the per-epoch history CSV here.
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
    #[command(flatten)]
    arch: ArchArgs,
}

#[derive(Args)]
struct Finetune {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct Fuse {
    #[arg(long, num_args = 2.., required = true)]
    models: Vec<PathBuf>,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    doe_n: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainGlobal {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
    #[command(flatten)]
    arch: ArchArgs,
}

#[derive(Args)]
struct Baseline {
    /// One simulated dataset per variant.
    #[arg(long, num_args = 1.., required = true)]
    data: Vec<PathBuf>,
    /// Rows drawn from each dataset, aligned with `--data`.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: Option<PathBuf>,
    #[command(flatten)]
    hyper: Hyper,
    #[command(flatten)]
    arch: ArchArgs,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long, num_args = 1.., required = true)]
    model: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Write the comparison as JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CaseStudy {
    #[arg(long)]
    case: Option<CaseArg>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also train the global model on the original simulated rows.
    #[arg(long)]
    include_simulated: bool,
}

#[derive(Args)]
struct Report {
    /// Case-study output directory containing `report.json`.
    #[arg(long)]
    run: PathBuf,
    /// Where to render (defaults to the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Bad arguments map to exit code 2, everything else to 1.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<preform_fusion::Error> for Failure {
    fn from(e: preform_fusion::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Settings shared by the stage commands, from `--config` or the defaults.
struct Settings {
    manifest: Option<ManifestFile>,
    seed: u64,
}

impl Settings {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let manifest = match &cli.config {
            Some(p) => Some(store::load_manifest(p)?),
            None => None,
        };
        let seed = cli
            .seed
            .or_else(|| manifest.as_ref().map(|m| m.study.master_seed))
            .unwrap_or(0);
        Ok(Self { manifest, seed })
    }

    fn sim(&self) -> thermal::SimConfig {
        self.manifest.as_ref().map(|m| m.study.sim.clone()).unwrap_or_default()
    }

    fn space(&self) -> ParameterSpace {
        self.manifest.as_ref().map(|m| m.study.space.clone()).unwrap_or_else(default_space)
    }

    fn train_config(&self, stage: &str, h: &Hyper) -> TrainConfig {
        let mut tc = self.manifest.as_ref().map(|m| m.study.train.clone()).unwrap_or_default();
        tc.seed = preform_fusion::seed::derive_seed(self.seed, &format!("train/{stage}"));
        if let Some(v) = h.epochs {
            tc.epochs = v;
        }
        if let Some(v) = h.batch_size {
            tc.batch_size = v;
        }
        if let Some(v) = h.learning_rate {
            tc.learning_rate = v;
        }
        if let Some(v) = h.patience {
            tc.patience = v;
        }
        if let Some(o) = h.optimizer {
            tc.optimizer = match o {
                OptimizerArg::Adam => Optimizer::Adam,
                OptimizerArg::Sgd => Optimizer::Sgd,
            };
        }
        tc
    }

    fn architecture(&self, a: &ArchArgs) -> Architecture {
        let mut arch = self.manifest.as_ref().map(|m| m.study.architecture.clone()).unwrap_or_default();
        if let Some(h) = &a.hidden {
            arch.hidden_widths = h.clone();
        }
        if a.no_skip {
            arch.skip_connections = false;
        }
        if let Some(act) = a.activation {
            arch.activation = match act {
                ActivationArg::Relu => Activation::Relu,
                ActivationArg::Tanh => Activation::Tanh,
            };
        }
        arch
    }

    /// Resolves a variant name through the manifest (custom definitions)
    /// or the built-in presets.
    fn variant(&self, name: &str) -> Result<Variant, Failure> {
        if let Some(mf) = &self.manifest {
            let s = &mf.study;
            if let Some(v) = s.variants.iter().chain([&s.unseen]).find(|v| v.label == name) {
                return Ok(v.clone());
            }
        }
        Variant::preset(name).ok_or_else(|| {
            Failure::Usage(format!(
                "unknown variant `{name}`; available: {}",
                Variant::preset_names().join(", ")
            ))
        })
    }
}

/// Prints the effective seed and a short hash of the effective settings.
fn announce(seed: u64, settings: &impl Serialize) -> anyhow::Result<()> {
    let json = serde_json::to_vec(settings)?;
    let hash = hex::encode(&Sha256::digest(&json)[..8]);
    println!("seed: {seed}");
    println!("config hash: {hash}");
    Ok(())
}

fn label_of(label: &Option<String>, out: &Path) -> String {
    label
        .clone()
        .unwrap_or_else(|| out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into()))
}

fn summarize(history: &TrainingHistory) {
    match (history.best_epoch, history.best_val_rmse()) {
        (Some(e), Some(rmse)) => {
            let r2 = history.val_r2[e - 1].map_or("n/a".to_string(), |r| format!("{r:.4}"));
            println!(
                "epochs run: {}, best epoch: {e}, validation rmse: {rmse:.4} °C, validation r2: {r2}",
                history.epochs()
            );
        }
        _ => println!("epochs run: 0"),
    }
}

fn finish_model(model: &TrainedModel, history: &TrainingHistory, out: &Path, history_out: &Option<PathBuf>) -> anyhow::Result<()> {
    save_checkpoint(model, out)?;
    if let Some(h) = history_out {
        store::write_history_csv(history, h)?;
    }
    summarize(history);
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    let ctx = Settings::load(cli)?;
    match &cli.command {
        Command::GenData(a) => gen_data(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Finetune(a) => finetune_cmd(&ctx, a),
        Command::Fuse(a) => fuse(&ctx, a),
        Command::TrainGlobal(a) => train_global_cmd(&ctx, a),
        Command::Baseline(a) => baseline(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::CaseStudy(a) => case_study(cli, &ctx, a),
        Command::Report(a) => report(a),
    }
}

fn gen_data(ctx: &Settings, a: &GenData) -> Outcome {
    let variant = ctx.variant(&a.variant)?;
    let sim = ctx.sim();
    let space = ctx.space();
    let seed = ctx.seed;
    announce(seed, &(&variant, &sim, &space, a.n))?;
    let data_seed = preform_fusion::seed::derive_seed(seed, &format!("data/{}", variant.label));
    let data = thermal::generate_dataset(&space, &variant, a.n as usize, data_seed, &sim)?;
    let bytes = store::dataset_to_csv(&data);
    std::fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    println!("rows: {}", data.n_rows());
    println!("sha256: {}", hex::encode(Sha256::digest(&bytes)));
    Ok(())
}

/// Keeps the slab columns of a single-variant dataset and returns the
/// variant descriptor carried by its constant columns, if any.
fn design_view(data: &Dataset, label: &str) -> anyhow::Result<(Dataset, Option<VariantDescriptor>)> {
    let desc = if data.input_names().iter().all(|n| is_design_column(n)) {
        None
    } else {
        Some(VariantDescriptor::infer(data, label)?)
    };
    Ok((data.select_inputs(&data.design_columns())?, desc))
}

fn train(ctx: &Settings, a: &Train) -> Outcome {
    let data = store::read_dataset(&a.data)?;
    let label = label_of(&a.label, &a.out);
    let (view, desc) = if a.all_columns {
        (data.clone(), None)
    } else {
        design_view(&data, &label)?
    };
    let arch = ctx.architecture(&a.arch);
    let tc = ctx.train_config(&label, &a.hyper);
    let config = arch.model_config(view.n_inputs(), preform_fusion::seed::derive_seed(ctx.seed, &format!("init/{label}")));
    announce(ctx.seed, &(&config, &tc, view.input_names()))?;
    let (mut model, history) = preform_fusion::neural::train(&config, &view, &tc)?;
    model.provenance = Provenance {
        label,
        lineage: Vec::new(),
        variant: desc,
    };
    finish_model(&model, &history, &a.out, &a.history)?;
    Ok(())
}

fn finetune_cmd(ctx: &Settings, a: &Finetune) -> Outcome {
    let base = load_checkpoint(&a.base)?;
    let data = store::read_dataset(&a.data)?;
    let label = label_of(&a.label, &a.out);
    let tc = ctx.train_config(&format!("finetune-{label}"), &a.hyper);
    announce(ctx.seed, &(&tc, &base.provenance.label, &label))?;
    let desc = design_view(&data, &label)?.1;
    let (mut model, history) = finetune(&base, &data, &tc)?;
    model.provenance.label = label;
    model.provenance.variant = desc;
    finish_model(&model, &history, &a.out, &a.history)?;
    Ok(())
}

fn fuse(ctx: &Settings, a: &Fuse) -> Outcome {
    let mut variant_models = Vec::new();
    for path in &a.models {
        let m = load_checkpoint(path)?;
        let Some(desc) = m.provenance.variant.clone() else {
            return Err(Failure::Runtime(anyhow::anyhow!(
                "{} carries no variant descriptor; train it on a simulated variant dataset",
                path.display()
            )));
        };
        variant_models.push((m, desc));
    }
    let mut space = ctx.space();
    let names = &variant_models[0].0.input_names;
    if space.names() != *names {
        let d = &space.dims()[0];
        space = ParameterSpace::slab_positions(names.len(), d.lower, d.upper)?;
    }
    let plan = FusionPlan {
        variant_models,
        doe_n: a.doe_n as usize,
        space,
        seed: preform_fusion::seed::derive_seed(ctx.seed, "experience"),
    };
    announce(ctx.seed, &(&plan.space, plan.doe_n, &a.models))?;
    let fused = extract_experience(&plan)?;
    let bytes = store::dataset_to_csv(&fused);
    std::fs::write(&a.out, &bytes).with_context(|| format!("writing {}", a.out.display()))?;
    println!("rows: {}", fused.n_rows());
    println!("sha256: {}", hex::encode(Sha256::digest(&bytes)));
    Ok(())
}

fn train_global_cmd(ctx: &Settings, a: &TrainGlobal) -> Outcome {
    let fused = store::read_dataset(&a.data)?;
    let arch = ctx.architecture(&a.arch);
    let tc = ctx.train_config("global", &a.hyper);
    let config = arch.model_config(fused.n_inputs(), preform_fusion::seed::derive_seed(ctx.seed, "init/global"));
    announce(ctx.seed, &(&config, &tc))?;
    let (model, history) = train_global(&fused, &config, &tc)?;
    finish_model(&model, &history, &a.out, &a.history)?;
    Ok(())
}

fn baseline(ctx: &Settings, a: &Baseline) -> Outcome {
    if a.sizes.len() != a.data.len() {
        return Err(Failure::Usage(format!(
            "--sizes has {} entries but {} datasets were given",
            a.sizes.len(),
            a.data.len()
        )));
    }
    let mut sets = Vec::new();
    for path in &a.data {
        let d = store::read_dataset(path)?;
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let Some(desc) = design_view(&d, &label)?.1 else {
            return Err(Failure::Runtime(anyhow::anyhow!(
                "{} has no variant descriptor columns",
                path.display()
            )));
        };
        sets.push((d, desc));
    }
    let arch = ctx.architecture(&a.arch);
    let tc = ctx.train_config("baseline", &a.hyper);
    let input_dim = sets[0].0.design_columns().len() + sets[0].1.names.len();
    let config = arch.model_config(input_dim, preform_fusion::seed::derive_seed(ctx.seed, "init/baseline"));
    announce(ctx.seed, &(&config, &tc, &a.sizes))?;
    let (model, history) = train_baseline(
        &sets,
        &a.sizes,
        &config,
        &tc,
        preform_fusion::seed::derive_seed(ctx.seed, "baseline-subsample"),
    )?;
    finish_model(&model, &history, &a.out, &a.history)?;
    Ok(())
}

fn evaluate(ctx: &Settings, a: &Evaluate) -> Outcome {
    let data = store::read_dataset(&a.data)?;
    let mut models = Vec::new();
    for p in &a.model {
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        models.push((name, load_checkpoint(p)?));
    }
    announce(ctx.seed, &(&a.model, &a.data))?;
    let named: Vec<(&str, &TrainedModel)> = models.iter().map(|(n, m)| (n.as_str(), m)).collect();
    let eval_name = a.data.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let cmp = compare_models(&named, &eval_name, &data);
    println!("{:<16} {:>10} {:>10} {:>10}", "model", "rmse", "mae", "r2");
    for m in &cmp.models {
        match (&m.metrics, &m.error) {
            (Some(x), _) => println!(
                "{:<16} {:>10.4} {:>10.4} {:>10}",
                m.model,
                x.rmse,
                x.mae,
                x.r2.map_or("n/a".into(), |r| format!("{r:.4}"))
            ),
            (None, err) => println!("{:<16} not evaluated: {}", m.model, err.as_deref().unwrap_or("")),
        }
    }
    for imp in &cmp.pairwise {
        println!(
            "{} -> {}: rmse change {:+.1}%, mae change {:+.1}%",
            imp.reference, imp.candidate, -imp.rmse_reduction_pct, -imp.mae_reduction_pct
        );
    }
    if let Some(out) = &a.out {
        let mut json = serde_json::to_string_pretty(&cmp).map_err(anyhow::Error::from)?;
        json.push('\n');
        std::fs::write(out, json).with_context(|| format!("writing {}", out.display()))?;
    }
    if cmp.models.iter().all(|m| m.metrics.is_none()) {
        return Err(Failure::Runtime(anyhow::anyhow!("no model could be evaluated on {}", a.data.display())));
    }
    Ok(())
}

fn case_study(cli: &Cli, ctx: &Settings, a: &CaseStudy) -> Outcome {
    let (mut study, manifest_out) = match &ctx.manifest {
        Some(mf) => {
            if let Some(c) = a.case {
                if VariantKind::from(c) != mf.study.case {
                    return Err(Failure::Usage("--case disagrees with the manifest".into()));
                }
            }
            (mf.study.clone(), mf.out_dir.clone())
        }
        None => {
            let Some(c) = a.case else {
                return Err(Failure::Usage("--case is required without --config".into()));
            };
            (pipeline::default_case_study(c.into(), ctx.seed), None)
        }
    };
    if cli.seed.is_some() {
        study.master_seed = ctx.seed;
    }
    if a.include_simulated {
        study.include_simulated_in_fusion = true;
    }
    let Some(out) = a.out.clone().or(manifest_out) else {
        return Err(Failure::Usage("--out is required unless the manifest sets out_dir".into()));
    };
    announce(study.master_seed, &study)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let echo = effective_manifest(ctx, &study, &out)?;
    std::fs::write(out.join("manifest.toml"), echo).with_context(|| "writing manifest.toml")?;
    let outcome = run_case_study(&study, Some(&out))?;
    let r = &outcome.report;
    println!("fused rows: {} ({})", r.fused_rows, r.fusion_mode);
    for cmp in &r.evaluations {
        for m in &cmp.models {
            if let Some(x) = &m.metrics {
                println!("{:<16} {:<14} rmse {:.4} mae {:.4}", cmp.eval_set, m.model, x.rmse, x.mae);
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// The manifest that reproduces this run, defaults spelled out.
fn effective_manifest(ctx: &Settings, study: &pipeline::CaseStudyConfig, out: &Path) -> anyhow::Result<String> {
    let mut text = match &ctx.manifest {
        Some(mf) => {
            let mut m = mf.manifest.clone();
            m.seed = Some(study.master_seed);
            m.fusion.include_simulated = Some(study.include_simulated_in_fusion);
            m.out_dir = Some(out.to_path_buf());
            toml::to_string(&m)?
        }
        None => {
            let minimal = format!(
                "{}out_dir = {}\n\n[fusion]\ninclude_simulated = {}\n",
                store::minimal_manifest(study.case, study.master_seed),
                toml::Value::String(out.display().to_string()),
                study.include_simulated_in_fusion
            );
            store::parse_manifest(&minimal, Path::new("<defaults>"))?.to_toml()?
        }
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(text)
}

fn report(a: &Report) -> Outcome {
    let path = a.run.join("report.json");
    if !path.exists() {
        bail_usage(&format!("{} not found; pass a case-study output directory", path.display()))?;
    }
    let r = store::read_report(&path)?;
    let out = a.out.clone().unwrap_or_else(|| a.run.clone());
    store::render_report(&r, &out)?;
    for cmp in &r.evaluations {
        println!("{} ({} rows)", cmp.eval_set, cmp.rows);
        println!("{:<14} {:>10} {:>10} {:>10}", "model", "rmse", "mae", "r2");
        for m in &cmp.models {
            if let Some(x) = &m.metrics {
                println!(
                    "{:<14} {:>10.4} {:>10.4} {:>10}",
                    m.model,
                    x.rmse,
                    x.mae,
                    x.r2.map_or("n/a".into(), |v| format!("{v:.4}"))
                );
            }
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn bail_usage(msg: &str) -> Outcome {
    Err(Failure::Usage(msg.to_string()))
}
