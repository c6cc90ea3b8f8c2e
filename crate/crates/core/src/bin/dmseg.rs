//! Command-line front end: data generation, distance-map computation, the
//! two training stages, inference, evaluation, and comparison tables.
//!
//! Every subcommand resolves its configuration (JSON file plus flag
//! overrides), runs one library entry point, writes its artifacts under the
//! output directory, and records the fully resolved configuration in a
//! manifest so the run can be reproduced byte for byte. Exit codes: 0 on
//! success, 1 on a runtime failure (the message names the offending path),
//! 2 on a usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::json;

use dmseg::dm::{edt_exact, sidecar_path, to_variant, DmVariant};
use dmseg::error::{Error, Result};
use dmseg::metrics::evaluate_cases;
use dmseg::nn::checkpoint::Checkpoint;
use dmseg::phantom::{generate_dataset, PhantomSpec};
use dmseg::pipeline::{
    holdout_split, infer, loss_curves_csv, pretrain_lrnet, run_comparison, train_joint,
    CompareRow, Sample, TrainConfig,
};
use dmseg::volume::{Mask, Volume};

#[derive(Parser)]
#[command(name = "dmseg", version, about = "Distance-map regression segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Directory all artifacts and the run manifest go under.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Override the seed of the resolved configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Print per-epoch progress after training subcommands.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic phantom dataset (paired image/mask RVOL files).
    GenData(GenDataArgs),
    /// Compute one class's distance map from a mask RVOL.
    ComputeDm(ComputeDmArgs),
    /// Stage one: fit the regression net on ground-truth distance maps.
    PretrainLrnet(PretrainArgs),
    /// Stage two: train the segmentation net, optionally through a
    /// (frozen) regression net.
    Train(TrainArgs),
    /// Segment one image with a trained checkpoint.
    Infer(InferArgs),
    /// Score predicted masks against references.
    Evaluate(EvaluateArgs),
    /// Run a suite of training configurations and tabulate the results.
    Compare(CompareArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Phantom spec JSON; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of phantoms to generate.
    #[arg(long, default_value_t = 20)]
    count: usize,
}

#[derive(Args)]
struct ComputeDmArgs {
    /// Which transform to apply.
    #[arg(long, default_value = "nidm")]
    variant: String,
    /// Class id the map is computed for.
    #[arg(long, default_value_t = 1)]
    class: u8,
    /// Input mask RVOL.
    input: PathBuf,
    /// Output RVOL; metadata goes to a `.json` sidecar next to it.
    output: PathBuf,
}

#[derive(Args)]
struct PretrainArgs {
    /// Training config JSON; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory holding mask_*.rvol files.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training config JSON; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory holding paired image_*.rvol / mask_*.rvol files.
    #[arg(long)]
    data: PathBuf,
    /// Pretrained regression checkpoint; when absent and the config asks
    /// for regression, stage one runs first and its artifacts are kept.
    #[arg(long)]
    lrnet: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    /// Segmentation checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input image RVOL.
    #[arg(long)]
    image: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Predicted mask RVOL (repeatable; pairs with --ref by position).
    #[arg(long, required = true)]
    pred: Vec<PathBuf>,
    /// Reference mask RVOL (repeatable).
    #[arg(long = "ref", required = true)]
    reference: Vec<PathBuf>,
    /// Class id to score.
    #[arg(long, default_value_t = 1)]
    class: u8,
}

#[derive(Args)]
struct CompareArgs {
    /// Suite JSON: an array of {name, config} rows.
    #[arg(long)]
    suite: PathBuf,
    /// Dataset directory holding paired image_*.rvol / mask_*.rvol files.
    #[arg(long)]
    data: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::GenData(ref a) => gen_data(&cli, a),
        Cmd::ComputeDm(ref a) => compute_dm(&cli, a),
        Cmd::PretrainLrnet(ref a) => pretrain(&cli, a),
        Cmd::Train(ref a) => train(&cli, a),
        Cmd::Infer(ref a) => run_infer(&cli, a),
        Cmd::Evaluate(ref a) => evaluate(&cli, a),
        Cmd::Compare(ref a) => compare(&cli, a),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing.

/// Load a JSON config, or the type's defaults when no file was given.
fn load_config<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => {
            let raw = fs::read(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            serde_json::from_slice(&raw)
                .map_err(|e| Error::format(p.display().to_string(), e.to_string()))
        }
        None => Ok(T::default()),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_json_value(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// The reproducibility manifest every subcommand leaves behind.
fn write_manifest(dir: &Path, body: serde_json::Value) -> Result<()> {
    ensure_dir(dir)?;
    write_json_value(&dir.join("manifest.json"), &body)
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::format("manifest", e.to_string()))
}

/// Indexed RVOL files under `dir` matching `prefix_NNNN.rvol`, sorted by name.
fn indexed_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && n.ends_with(".rvol"))
        })
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(Error::invalid(format!(
            "no {prefix}*.rvol files under {}",
            dir.display()
        )));
    }
    Ok(out)
}

fn read_masks(dir: &Path) -> Result<Vec<Mask>> {
    indexed_files(dir, "mask_")?
        .iter()
        .map(Mask::read_rvol)
        .collect()
}

/// Paired samples: every mask_NNNN.rvol must have its image_NNNN.rvol.
fn read_samples(dir: &Path) -> Result<Vec<Sample>> {
    let masks = indexed_files(dir, "mask_")?;
    let mut out = Vec::with_capacity(masks.len());
    for mpath in masks {
        let name = mpath
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .replacen("mask_", "image_", 1);
        let ipath = mpath.with_file_name(name);
        out.push(Sample {
            image: Volume::<f32>::read_rvol(&ipath)?,
            mask: Mask::read_rvol(&mpath)?,
        });
    }
    Ok(out)
}

fn print_epochs(record: &dmseg::pipeline::RunRecord) {
    for e in &record.epochs {
        eprintln!(
            "epoch {:3}  train {:.4}  val {:.4}  val_dice {:.3}  lr {:.2e}",
            e.epoch, e.train_loss, e.val_loss, e.val_dice, e.lr
        );
    }
}

// ---------------------------------------------------------------------------
// Subcommands.

fn gen_data(cli: &Cli, a: &GenDataArgs) -> Result<()> {
    let mut spec: PhantomSpec = load_config(&a.config)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    ensure_dir(&cli.out)?;
    let phantoms = generate_dataset(&spec, a.count)?;
    let mut cases = Vec::with_capacity(phantoms.len());
    for (i, p) in phantoms.iter().enumerate() {
        let image = format!("image_{i:04}.rvol");
        let mask = format!("mask_{i:04}.rvol");
        p.image.write_rvol(cli.out.join(&image))?;
        p.mask.write_rvol(cli.out.join(&mask))?;
        cases.push(json!({
            "index": i,
            "seed": spec.seed.wrapping_add(i as u64),
            "image": image,
            "mask": mask,
            "requested_lesions": p.requested_lesions,
            "placed_lesions": p.placed_lesions,
        }));
    }
    write_manifest(
        &cli.out,
        json!({
            "subcommand": "gen-data",
            "spec": to_value(&spec)?,
            "count": a.count,
            "cases": cases,
        }),
    )?;
    println!("wrote {} phantom pairs to {}", a.count, cli.out.display());
    Ok(())
}

fn compute_dm(_cli: &Cli, a: &ComputeDmArgs) -> Result<()> {
    let variant: DmVariant = a.variant.parse()?;
    let mask = Mask::read_rvol(&a.input)?;
    let odm = edt_exact(&mask, a.class)?;
    let dm = match variant {
        DmVariant::Odm => odm,
        v => to_variant(&odm, &mask, v)?,
    };
    if let Some(parent) = a.output.parent() {
        if !parent.as_os_str().is_empty() {
            ensure_dir(parent)?;
        }
    }
    dm.write_files(&a.output)?;
    // The manifest sits next to the output so the pair stays self-describing.
    let manifest = a.output.with_extension("manifest.json");
    write_json_value(
        &manifest,
        &json!({
            "subcommand": "compute-dm",
            "variant": to_value(&variant)?,
            "class": a.class,
            "input": a.input.display().to_string(),
            "output": a.output.display().to_string(),
            "sidecar": sidecar_path(&a.output).display().to_string(),
        }),
    )?;
    println!("wrote {} ({variant})", a.output.display());
    Ok(())
}

fn pretrain(cli: &Cli, a: &PretrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(&a.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let masks = read_masks(&a.data)?;
    let (ck, report) = pretrain_lrnet(&masks, &cfg)?;
    ensure_dir(&cli.out)?;
    let ck_path = cli.out.join("lrnet.dmck");
    ck.save(&ck_path)?;
    write_json_value(&cli.out.join("pretrain_report.json"), &to_value(&report)?)?;
    write_manifest(
        &cli.out,
        json!({
            "subcommand": "pretrain-lrnet",
            "config": to_value(&cfg)?,
            "data": a.data.display().to_string(),
            "dataset_hash": report.dataset_hash,
            "checkpoint": ck_path.display().to_string(),
        }),
    )?;
    if cli.verbose {
        for e in &report.per_epoch {
            eprintln!(
                "epoch {:3}  train {:.5}  val {:.5}  lr {:.2e}",
                e.epoch, e.train_loss, e.val_loss, e.lr
            );
        }
    }
    println!(
        "pretrained {} epochs; held-out loss {:.5}{}",
        report.epochs_run,
        report.heldout_loss,
        report
            .recon_dice
            .map(|d| format!(", reconstruction dice {d:.3}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(&a.config)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let samples = read_samples(&a.data)?;
    ensure_dir(&cli.out)?;

    // Resolve the stage-one checkpoint: given, trained here, or not needed.
    let lrnet = match (&a.lrnet, cfg.with_regression) {
        (Some(path), _) => Some(Checkpoint::load(path)?),
        (None, true) => {
            let masks: Vec<Mask> = samples.iter().map(|s| s.mask.clone()).collect();
            let (ck, report) = pretrain_lrnet(&masks, &cfg)?;
            ck.save(cli.out.join("lrnet_pretrained.dmck"))?;
            write_json_value(&cli.out.join("pretrain_report.json"), &to_value(&report)?)?;
            Some(ck)
        }
        (None, false) => None,
    };

    let outcome = train_joint(&samples, lrnet.as_ref(), &cfg)?;
    let mnet_path = cli.out.join("mnet.dmck");
    outcome.checkpoint.save(&mnet_path)?;
    if let Some(lr_ck) = &outcome.lrnet {
        lr_ck.save(cli.out.join("lrnet.dmck"))?;
    }
    let record = &outcome.record;
    write_json_value(&cli.out.join("run_record.json"), &to_value(record)?)?;
    write_text(&cli.out.join("curves.csv"), &loss_curves_csv(record))?;
    record.metrics.write_csv(cli.out.join("metrics.csv"))?;

    // Held-out predictions from the best checkpoint, named by case index.
    let (_, val_idx) = holdout_split(samples.len(), &cfg)?;
    let mut preds = Vec::with_capacity(val_idx.len());
    for &i in &val_idx {
        let (mask, _) = infer(&outcome.checkpoint, &samples[i].image)?;
        let name = format!("pred_{i:04}.rvol");
        mask.write_rvol(cli.out.join(&name))?;
        preds.push(name);
    }

    write_manifest(
        &cli.out,
        json!({
            "subcommand": "train",
            "config": to_value(&cfg)?,
            "data": a.data.display().to_string(),
            "lrnet_input": a.lrnet.as_ref().map(|p| p.display().to_string()),
            "dataset_hash": record.dataset_hash,
            "best_checkpoint": record.best_checkpoint,
            "checkpoint": mnet_path.display().to_string(),
            "predictions": preds,
        }),
    )?;
    if cli.verbose {
        print_epochs(record);
    }
    println!(
        "best epoch {} (checkpoint {}); val dice {:.3}",
        record.best_epoch,
        record.best_checkpoint,
        record.metrics.aggregate.dc_mean
    );
    Ok(())
}

fn run_infer(cli: &Cli, a: &InferArgs) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let image = Volume::<f32>::read_rvol(&a.image)?;
    let (mask, probs) = infer(&ck, &image)?;
    ensure_dir(&cli.out)?;
    let pred = cli.out.join("pred.rvol");
    mask.write_rvol(&pred)?;
    let mut prob_files = Vec::with_capacity(probs.len());
    for (c, vol) in probs.iter().enumerate() {
        let name = format!("prob_c{c}.rvol");
        vol.write_rvol(cli.out.join(&name))?;
        prob_files.push(name);
    }
    write_manifest(
        &cli.out,
        json!({
            "subcommand": "infer",
            "checkpoint": a.checkpoint.display().to_string(),
            "image": a.image.display().to_string(),
            "prediction": pred.display().to_string(),
            "probabilities": prob_files,
        }),
    )?;
    println!("wrote {}", pred.display());
    Ok(())
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<()> {
    if a.pred.len() != a.reference.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} references; they pair by position",
            a.pred.len(),
            a.reference.len()
        )));
    }
    let mut owned = Vec::with_capacity(a.pred.len());
    for (p, r) in a.pred.iter().zip(&a.reference) {
        let id = p
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("case")
            .to_string();
        let pred = Mask::read_rvol(p)?.binarize(a.class)?;
        let reference = Mask::read_rvol(r)?.binarize(a.class)?;
        owned.push((id, pred, reference));
    }
    let cases: Vec<(String, &Mask, &Mask)> = owned
        .iter()
        .map(|(id, p, r)| (id.clone(), p, r))
        .collect();
    let report = evaluate_cases(&cases)?;
    ensure_dir(&cli.out)?;
    report.write_json(cli.out.join("report.json"))?;
    report.write_csv(cli.out.join("report.csv"))?;
    write_manifest(
        &cli.out,
        json!({
            "subcommand": "evaluate",
            "class": a.class,
            "pred": a.pred.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "ref": a.reference.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        }),
    )?;
    let agg = &report.aggregate;
    println!(
        "cases {}  DC {:.4}  DG {:.4}  VOE {:.4}  ASSD {:.3}mm  MSD {:.3}mm  RMSD {:.3}mm",
        report.per_case.len(),
        agg.dc_mean,
        agg.dg,
        agg.voe_mean,
        agg.assd_mean,
        agg.msd_mean,
        agg.rmsd_mean
    );
    Ok(())
}

fn compare(cli: &Cli, a: &CompareArgs) -> Result<()> {
    let raw = fs::read(&a.suite).map_err(|e| Error::io(a.suite.display().to_string(), e))?;
    let mut rows: Vec<CompareRow> = serde_json::from_slice(&raw)
        .map_err(|e| Error::format(a.suite.display().to_string(), e.to_string()))?;
    if let Some(s) = cli.seed {
        for row in &mut rows {
            row.config.seed = s;
        }
    }
    let samples = read_samples(&a.data)?;
    let table = run_comparison(&rows, &samples);
    ensure_dir(&cli.out)?;
    write_text(&cli.out.join("comparison.csv"), &table.to_csv())?;
    write_json_value(&cli.out.join("comparison.json"), &to_value(&table)?)?;
    write_manifest(
        &cli.out,
        json!({
            "subcommand": "compare",
            "suite": a.suite.display().to_string(),
            "data": a.data.display().to_string(),
            "dataset_hash": table.dataset_hash,
            "rows": to_value(&rows)?,
        }),
    )?;
    for r in &table.rows {
        match (&r.error, r.dc_mean) {
            (Some(e), _) => println!("{}: failed ({e})", r.name),
            (None, Some(dc)) => println!("{}: DC {:.4}", r.name, dc),
            (None, None) => println!("{}: done", r.name),
        }
    }
    Ok(())
}
