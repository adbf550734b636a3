//! ct3d command-line pipeline: ingestion, weight inflation, fold
//! assignment, training, prediction, evaluation, pseudo-labeling and the
//! built-in self test.

mod tsv;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use clap::{Parser, Subcommand};

use ct3d_core::augment::MaskPair;
use ct3d_core::inflate::InflationMode;
use ct3d_core::ingest;
use ct3d_core::model::{import_2d_checkpoint, Checkpoint, Model};
use ct3d_core::resample::spline_resample_volume;
use ct3d_core::runconfig::RunConfig;
use ct3d_core::train::{
    ensemble_predict, macro_f1, pseudo_label_resampled, stratified_kfold, train_toy,
    LabeledCase, TrainSample,
};
use ct3d_core::vox;
use tsv::{format_prediction, read_labels, read_predictions, PredictionRow};

#[derive(Parser)]
#[command(name = "ct3d", about = "Volumetric ConvNeXt pipeline for CT classification", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Ingest a slice directory or VOX1 file, normalize it, write it to
    /// OUT and precompute the resampled pair into the cache.
    Ingest {
        input: PathBuf,
        out: PathBuf,
        /// Run config supplying pre/crop sizes (defaults otherwise).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Cache directory (overrides CT3D_CACHE_DIR).
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Inflate a 2D checkpoint into 3D weights and print a per-layer norm
    /// report.
    Inflate {
        ckpt2d: PathBuf,
        /// full | 1g | 2g
        mode: String,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Assign cases to stratified folds.
    Folds {
        labels: PathBuf,
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one fold; writes checkpoint, EMA checkpoint, loss trace and
    /// validation metrics into the config's out_dir.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fold: usize,
        /// Optional initial checkpoint (e.g. inflated 2D weights).
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Ensemble-predict every VOX1 case in CASES with the given checkpoints.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated checkpoint paths.
        #[arg(long, value_delimiter = ',')]
        ckpts: Vec<PathBuf>,
        cases: PathBuf,
        /// Output TSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Macro-F1 of a predictions file against a labels file.
    Eval { predictions: PathBuf, labels: PathBuf },
    /// Generate segmentation pseudo-labels for every case in CASES.
    Pseudolabel {
        #[arg(long)]
        ckpt: PathBuf,
        cases: PathBuf,
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the built-in invariant and oracle suite.
    Selftest,
    /// Print the default run configuration with every key.
    Config,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.cmd) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cmd: Cmd) -> anyhow::Result<()> {
    match cmd {
        Cmd::Ingest { input, out, config, cache_dir } => cmd_ingest(&input, &out, config.as_deref(), cache_dir.as_deref()),
        Cmd::Inflate { ckpt2d, mode, out, config } => cmd_inflate(&ckpt2d, &mode, &out, config.as_deref()),
        Cmd::Folds { labels, out, k, seed } => cmd_folds(&labels, &out, k, seed),
        Cmd::Train { config, fold, init, cache_dir } => cmd_train(&config, fold, init.as_deref(), cache_dir.as_deref()),
        Cmd::Predict { config, ckpts, cases, out } => cmd_predict(&config, &ckpts, &cases, out.as_deref()),
        Cmd::Eval { predictions, labels } => cmd_eval(&predictions, &labels),
        Cmd::Pseudolabel { ckpt, cases, out, config } => cmd_pseudolabel(&ckpt, &cases, &out, config.as_deref()),
        Cmd::Selftest => cmd_selftest(),
        Cmd::Config => {
            print!("{}", RunConfig::default().to_text());
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn cmd_ingest(
    input: &Path,
    out: &Path,
    config: Option<&Path>,
    cache_dir: Option<&Path>,
) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let outcome = ingest::ingest_case(input)?;
    if !outcome.discarded.is_empty() {
        eprintln!(
            "warning: discarded {} slice(s) with inconsistent resolution: {}",
            outcome.discarded.len(),
            outcome.discarded.join(", ")
        );
    }
    vox::save(out, &outcome.volume)?;
    let cache = ingest::resolve_cache_dir(cache_dir);
    let pre = ingest::precompute(&outcome.volume, cfg.plan.pre_size, cfg.plan.crop_size, &cache)?;
    println!(
        "ingested {:?} -> {} (cache {}: {} / {})",
        outcome.volume.dims(),
        out.display(),
        if pre.cache_hit { "hit" } else { "miss" },
        pre.large_path.display(),
        pre.small_path.display()
    );
    Ok(())
}

fn cmd_inflate(ckpt2d: &Path, mode: &str, out: &Path, config: Option<&Path>) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let mode: InflationMode = mode.parse()?;
    let ckpt = Checkpoint::load(ckpt2d)?;
    let (inflated, report) = import_2d_checkpoint(&ckpt, mode, &cfg.model)?;
    for layer in &report {
        println!(
            "{}\t{:?}\tnorm2d={:.6}\tnorm3d={:.6}",
            layer.name, layer.action, layer.norm_2d, layer.norm_3d
        );
    }
    inflated.save(out)?;
    println!("wrote {} ({} entries)", out.display(), inflated.entries.len());
    Ok(())
}

fn cmd_folds(labels: &Path, out: &Path, k: usize, seed: u64) -> anyhow::Result<()> {
    let rows = read_labels(labels)?;
    let cases: Vec<LabeledCase> = rows
        .iter()
        .map(|(case, label)| LabeledCase::new(case.clone(), format!("{case}.vox"), *label))
        .collect();
    let folds = stratified_kfold(&cases, k, seed)?;
    std::fs::write(out, folds.to_tsv())?;
    println!("assigned {} cases to {} folds: sizes {:?}", folds.len(), k, folds.fold_sizes());
    Ok(())
}

fn case_volume_path(data_dir: &Path, case_id: &str) -> PathBuf {
    data_dir.join(format!("{case_id}.vox"))
}

fn cmd_train(
    config: &Path,
    fold: usize,
    init: Option<&Path>,
    cache_dir: Option<&Path>,
) -> anyhow::Result<()> {
    let cfg = load_config(Some(config))?;
    let rows = read_labels(&cfg.labels)?;
    let folds_text = std::fs::read_to_string(&cfg.folds)
        .with_context(|| format!("cannot read folds file {}", cfg.folds.display()))?;
    let folds = ct3d_core::train::FoldAssignment::from_tsv(&folds_text)?;
    if fold >= folds.k {
        bail!("fold {fold} out of range for {} folds", folds.k);
    }
    let cache = ingest::resolve_cache_dir(cache_dir);

    let mut train_samples = Vec::new();
    let mut val_cases: Vec<(String, usize)> = Vec::new();
    for (case_id, label) in &rows {
        let assigned = folds
            .fold_of(case_id)
            .with_context(|| format!("case `{case_id}` missing from fold file"))?;
        if assigned == fold {
            val_cases.push((case_id.clone(), *label));
            continue;
        }
        let volume = vox::load(&case_volume_path(&cfg.data_dir, case_id))?;
        let pre = ingest::precompute(&volume, cfg.plan.pre_size, cfg.plan.crop_size, &cache)?;
        let pair = ingest::load_pair(&pre)?;
        let mask_path = cfg.data_dir.join(format!("{case_id}.mask.vox"));
        let masks = if mask_path.exists() && cfg.model.heads.segmentation && cfg.hyper.lambda > 0.0
        {
            let mask = vox::load(&mask_path)?;
            Some(MaskPair::from_mask(&mask, cfg.plan.pre_size, cfg.plan.crop_size)?)
        } else {
            None
        };
        train_samples.push(TrainSample { case_id: case_id.clone(), pair, label: *label, masks });
    }
    if train_samples.is_empty() {
        bail!("fold {fold} leaves no training cases");
    }

    let mut model = Model::<f32>::build(cfg.model.clone(), cfg.seed.wrapping_add(fold as u64))?;
    if let Some(init) = init {
        model.load_checkpoint(&Checkpoint::load(init)?)?;
    }
    let outcome = train_toy(model, &train_samples, &cfg.plan, &cfg.hyper)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let ckpt_path = cfg.out_dir.join(format!("fold{fold}.ntc"));
    outcome.model.save_checkpoint().save(&ckpt_path)?;
    let ema_model = outcome.ema.shadow_model(&outcome.model)?;
    let ema_path = cfg.out_dir.join(format!("fold{fold}.ema.ntc"));
    ema_model.save_checkpoint().save(&ema_path)?;
    let trace: String = outcome
        .loss_trace
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{i}\t{l:.6}\n"))
        .collect();
    std::fs::write(cfg.out_dir.join(format!("fold{fold}.loss.tsv")), trace)?;

    // validation metrics with the EMA copy
    if !val_cases.is_empty() {
        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for (case_id, label) in &val_cases {
            let volume = vox::load(&case_volume_path(&cfg.data_dir, case_id))?;
            let small = spline_resample_volume(&volume, [cfg.plan.crop_size; 3])?;
            let out = ensemble_predict(&[&ema_model], &small)?;
            preds.push(out.class);
            labels.push(*label);
        }
        let m = macro_f1(&preds, &labels, cfg.model.num_classes)?;
        let mut metrics = format!("macro_f1\t{:.6}\n", m.macro_f1);
        for (c, f1) in m.per_class.iter().enumerate() {
            metrics.push_str(&format!("f1_class_{c}\t{f1:.6}\n"));
        }
        std::fs::write(cfg.out_dir.join(format!("fold{fold}.metrics.tsv")), &metrics)?;
        print!("{metrics}");
    }
    println!(
        "fold {fold}: trained {} steps on {} cases -> {} / {}",
        cfg.hyper.steps,
        train_samples.len(),
        ckpt_path.display(),
        ema_path.display()
    );
    Ok(())
}

fn list_case_files(cases: &Path) -> anyhow::Result<Vec<(String, PathBuf)>> {
    let mut files: Vec<(String, PathBuf)> = std::fs::read_dir(cases)
        .with_context(|| format!("cannot read case directory {}", cases.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension().map(|e| e == "vox").unwrap_or(false)
                && !p
                    .file_name()
                    .map(|n| n.to_string_lossy().ends_with(".mask.vox"))
                    .unwrap_or(false)
        })
        .map(|p| (p.file_stem().unwrap().to_string_lossy().into_owned(), p))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .vox cases in {}", cases.display());
    }
    Ok(files)
}

fn cmd_predict(
    config: &Path,
    ckpts: &[PathBuf],
    cases: &Path,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    if ckpts.is_empty() {
        bail!("predict requires at least one checkpoint");
    }
    let cfg = load_config(Some(config))?;
    let mut models = Vec::with_capacity(ckpts.len());
    for path in ckpts {
        models.push(Model::<f32>::from_checkpoint(&Checkpoint::load(path)?)?);
    }
    let model_refs: Vec<&Model<f32>> = models.iter().collect();
    let mut lines = String::new();
    for (case_id, path) in list_case_files(cases)? {
        let volume = vox::load(&path)?;
        let small = spline_resample_volume(&volume, [cfg.plan.crop_size; 3])?;
        let result = ensemble_predict(&model_refs, &small)?;
        let row = PredictionRow {
            case_id,
            class: result.class,
            probabilities: result.probabilities,
        };
        lines.push_str(&format_prediction(&row));
        lines.push('\n');
    }
    match out {
        Some(path) => std::fs::write(path, lines)?,
        None => print!("{lines}"),
    }
    Ok(())
}

fn cmd_eval(predictions: &Path, labels: &Path) -> anyhow::Result<()> {
    let preds = read_predictions(predictions)?;
    let labels = read_labels(labels)?;
    let mut pairs = Vec::with_capacity(labels.len());
    for (case_id, label) in &labels {
        let row = preds
            .iter()
            .find(|r| &r.case_id == case_id)
            .with_context(|| format!("case `{case_id}` missing from predictions"))?;
        pairs.push((row.class, *label));
    }
    let num_classes = pairs.iter().map(|&(p, l)| p.max(l)).max().unwrap_or(0) + 1;
    let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
    let m = macro_f1(&preds, &labels, num_classes)?;
    println!("macro_f1\t{:.6}", m.macro_f1);
    for (c, f1) in m.per_class.iter().enumerate() {
        println!("f1_class_{c}\t{f1:.6}");
    }
    Ok(())
}

fn cmd_pseudolabel(
    ckpt: &Path,
    cases: &Path,
    out: &Path,
    config: Option<&Path>,
) -> anyhow::Result<()> {
    let cfg = load_config(config)?;
    let model = Model::<f32>::from_checkpoint(&Checkpoint::load(ckpt)?)?;
    std::fs::create_dir_all(out)?;
    for (case_id, path) in list_case_files(cases)? {
        let volume = vox::load(&path)?;
        let mask = pseudo_label_resampled(&model, &volume, cfg.plan.crop_size)?;
        let mask_path = out.join(format!("{case_id}.mask.vox"));
        vox::save(&mask_path, &mask)?;
        let positive: f64 = mask.data().iter().map(|&v| v as f64).sum();
        println!(
            "{case_id}\t{}\tpositive_fraction={:.4}",
            mask_path.display(),
            positive / mask.len() as f64
        );
    }
    Ok(())
}

fn cmd_selftest() -> anyhow::Result<()> {
    let outcomes = ct3d_core::selftest::run_all();
    let mut failures = 0usize;
    for outcome in &outcomes {
        match &outcome.result {
            Ok(()) => println!("[PASS] {}", outcome.name),
            Err(msg) => {
                failures += 1;
                println!("[FAIL] {}: {msg}", outcome.name);
            }
        }
    }
    if failures > 0 {
        bail!("{failures} of {} checks failed", outcomes.len());
    }
    println!("all {} checks passed", outcomes.len());
    Ok(())
}

