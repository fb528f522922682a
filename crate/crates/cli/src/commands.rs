use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use primfuse_core::config::RunConfig;
use primfuse_core::data::{compute_stats, generate_synthetic, load_manifest, DatasetManifest, LatentTruth, SampleRecord, Split};
use primfuse_core::efficiency::{analytic_accounting, bench_model, peak_rss_kb, EfficiencyReport, InferenceShape, FLOP_FORMULA};
use primfuse_core::evaluation::{evaluate, EvalOptions, MetricsReport};
use primfuse_core::pipeline::{build_model, build_model_of_kind, load_latent, save_latent};
use primfuse_core::training::{Checkpoint, StepRecord, Trainer};
use primfuse_core::{Error, ModelKind};

use crate::Common;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LATENT_FILE: &str = "latent.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.ndjson";
pub const REPORT_FILE: &str = "report.json";
pub const INSTANCES_FILE: &str = "instances.ndjson";
pub const STATS_FILE: &str = "stats.json";
pub const BENCH_FILE: &str = "bench.json";

#[derive(Debug)]
pub enum Failure {
    Core(Error),
    FrozenStoreChanged(String),
}

impl Failure {
    /// 2 for numeric failures, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) if e.is_numeric() => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Core(e) => write!(f, "{}: {e}", e.code()),
            Failure::FrozenStoreChanged(msg) => write!(f, "E_FROZEN_CHANGED: {msg}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = Result<(), Failure>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Core(Error::Io {
        path: path.to_owned(),
        source: e,
    })
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = RunConfig::load(common.config.as_deref(), &common.overrides)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(world) = common.world {
        config.evaluation.world = world;
    }
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&config.out_dir).map_err(io_err(&config.out_dir))?;
    Ok(config.out_dir.clone())
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CmdResult {
    let mut json = serde_json::to_string_pretty(value).map_err(Error::from)?;
    json.push('\n');
    fs::write(path, json).map_err(io_err(path))
}

fn manifest_path(config: &RunConfig) -> PathBuf {
    config
        .data
        .manifest
        .clone()
        .unwrap_or_else(|| config.out_dir.join(MANIFEST_FILE))
}

/// The manifest plus its latent sidecar when one is configured or sits
/// next to it.
fn load_data(config: &RunConfig) -> Result<(DatasetManifest, Option<LatentTruth>), Failure> {
    let path = manifest_path(config);
    let manifest = load_manifest(&path)?;
    let latent_path = config.data.latent.clone().or_else(|| {
        let sibling = path.with_file_name(LATENT_FILE);
        sibling.exists().then_some(sibling)
    });
    let latent = latent_path.as_deref().map(load_latent).transpose()?;
    Ok((manifest, latent))
}

fn timestamp() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn synth(common: &Common) -> CmdResult {
    let config = load_config(common)?;
    let dir = out_dir(&config)?;
    let (manifest, latent) = generate_synthetic(&config.data.synth, config.seed)?;
    manifest.save(&dir.join(MANIFEST_FILE))?;
    save_latent(&latent, &dir.join(LATENT_FILE))?;
    let stats = compute_stats(&manifest);
    println!("{}", stats.summary_table());
    log::info!(
        "wrote {} ({} seen, {} unseen compositions)",
        dir.join(MANIFEST_FILE).display(),
        manifest.seen_compositions().len(),
        manifest.unseen_compositions().len()
    );
    Ok(())
}

pub fn train(common: &Common, resume: bool, freeze_check: bool) -> CmdResult {
    let config = load_config(common)?;
    let dir = out_dir(&config)?;
    let (manifest, latent) = load_data(&config)?;
    let hash = config.training_hash()?;
    let ckpt_path = dir.join(CHECKPOINT_FILE);
    let log_path = dir.join(TRAIN_LOG_FILE);

    let (mut model, mut trainer) = if resume {
        let ckpt = Checkpoint::load(&ckpt_path)?;
        if ckpt.config_hash != hash {
            log::warn!("resuming a checkpoint trained under a different configuration");
        }
        let mut trainer = ckpt.trainer;
        trainer.config.epochs = config.training.epochs;
        log::info!("resuming at epoch {} step {}", trainer.epoch, trainer.step);
        (ckpt.model, trainer)
    } else {
        let model = build_model(&config, &manifest, latent.as_ref())?;
        let trainer = Trainer::new(config.training.clone(), &model)?;
        (model, trainer)
    };

    let fingerprint = model.frozen_fingerprint();
    let log_file = fs::OpenOptions::new()
        .create(true)
        .append(resume)
        .write(true)
        .truncate(!resume)
        .open(&log_path)
        .map_err(io_err(&log_path))?;
    let mut log_writer = BufWriter::new(log_file);
    let mut sink = |r: &StepRecord| -> primfuse_core::Result<()> {
        let line = serde_json::to_string(r)?;
        writeln!(log_writer, "{line}").map_err(|e| Error::Io {
            path: log_path.clone(),
            source: e,
        })
    };
    let outcome = trainer.fit(&mut model, &manifest, &mut sink);
    log_writer.flush().map_err(io_err(&log_path))?;
    outcome?;

    if freeze_check {
        let after = model.frozen_fingerprint();
        if after != fingerprint {
            return Err(Failure::FrozenStoreChanged(format!(
                "frozen-store fingerprint {fingerprint} became {after}"
            )));
        }
        log::info!("frozen stores unchanged ({fingerprint})");
    }
    Checkpoint::new(hash, model, trainer).save(&ckpt_path)?;
    log::info!("wrote {}", ckpt_path.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    generated_at: u64,
    split: Split,
    checkpoint_config_hash: String,
    run_config_hash: String,
    config_hash_mismatch: bool,
    worlds: Vec<MetricsReport>,
}

pub fn eval(common: &Common, checkpoint: Option<PathBuf>) -> CmdResult {
    let config = load_config(common)?;
    let dir = out_dir(&config)?;
    let (manifest, _) = load_data(&config)?;
    let ckpt_path = checkpoint.unwrap_or_else(|| dir.join(CHECKPOINT_FILE));
    let ckpt = Checkpoint::load(&ckpt_path)?;
    let run_hash = config.training_hash()?;
    let mismatch = ckpt.config_hash != run_hash;
    if mismatch {
        log::warn!("checkpoint configuration hash differs from the run configuration");
    }
    let options = EvalOptions {
        primitive_top1: config.evaluation.primitive_top1,
        keep_instances: config.evaluation.dump_instances,
    };
    let mut worlds = Vec::new();
    let mut instance_lines = Vec::new();
    for world in config.evaluation.world.worlds() {
        let out = evaluate(&ckpt.model, &manifest, config.evaluation.split, world, options)?;
        let mut report = out.report;
        report.config_hash = Some(ckpt.config_hash.clone());
        print_summary(&report);
        for inst in &out.instances {
            let mut v = serde_json::to_value(inst).map_err(Error::from)?;
            v["world"] = serde_json::Value::String(world.to_string());
            instance_lines.push(v.to_string());
        }
        worlds.push(report);
    }
    let report = EvalReport {
        generated_at: timestamp(),
        split: config.evaluation.split,
        checkpoint_config_hash: ckpt.config_hash,
        run_config_hash: run_hash,
        config_hash_mismatch: mismatch,
        worlds,
    };
    write_json(&report, &dir.join(REPORT_FILE))?;
    if config.evaluation.dump_instances {
        let path = dir.join(INSTANCES_FILE);
        let mut text = instance_lines.join("\n");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    Ok(())
}

fn print_summary(r: &MetricsReport) {
    println!(
        "{:<6} EM {:.4}  Top1-P {:.4}  Top5-R {:.4}  Cov {:.3}  attr {:.4}  obj {:.4}  AUC {:.4}  seen {:.4}  unseen {:.4}",
        r.world.to_string(),
        r.exact_match,
        r.top1_p,
        r.top5_r,
        r.coverage,
        r.top1_p_attr,
        r.top1_p_obj,
        r.auc,
        r.best_seen,
        r.best_unseen
    );
}

pub fn stats(common: &Common) -> CmdResult {
    let config = load_config(common)?;
    let dir = out_dir(&config)?;
    let manifest = load_manifest(&manifest_path(&config))?;
    let stats = compute_stats(&manifest);
    println!("{}", stats.summary_table());
    write_json(&stats, &dir.join(STATS_FILE))
}

pub fn bench(common: &Common, checkpoint: Option<PathBuf>) -> CmdResult {
    let config = load_config(common)?;
    let dir = out_dir(&config)?;
    let (manifest, latent) = load_data(&config)?;
    let ckpt_path = checkpoint.unwrap_or_else(|| dir.join(CHECKPOINT_FILE));
    let dual = Checkpoint::load(&ckpt_path)?.model;
    if dual.kind() != ModelKind::DualBranch {
        return Err(Error::InvalidConfig("bench expects a dual-branch checkpoint".into()).into());
    }
    let samples: Vec<&SampleRecord> = manifest.split(config.evaluation.split).collect();
    let (runs, warmup) = (config.bench.samples, config.bench.warmup);
    let dual_bench = bench_model(&dual, &samples, runs, warmup)?;
    let baseline = if config.bench.baseline {
        let model = build_model_of_kind(&config, &manifest, latent.as_ref(), ModelKind::CompositionBranch)?;
        Some(bench_model(&model, &samples, runs, warmup)?)
    } else {
        None
    };
    let vocab = manifest.vocab();
    let na = config.bench.num_attributes.unwrap_or(vocab.num_attributes());
    let no = config.bench.num_objects.unwrap_or(vocab.num_objects());
    let patches = dual.image_tokens(samples[0])?.patches.nrows();
    let report = EfficiencyReport {
        num_attributes: vocab.num_attributes(),
        num_objects: vocab.num_objects(),
        dual: dual_bench,
        baseline,
        analytic: analytic_accounting(InferenceShape::of_model(&dual, patches), na, no),
        peak_rss_kb: peak_rss_kb(),
        flop_formula: FLOP_FORMULA.into(),
    };
    println!(
        "text-encoder calls per image: dual {} / baseline {}; cached dual {}",
        report.dual.text_encode_calls,
        report.baseline.as_ref().map_or("-".into(), |b| b.text_encode_calls.to_string()),
        report.dual.cached_text_encode_calls
    );
    println!(
        "at |A|={na}, |O|={no}: {} vs {} calls ({:.1}x)",
        report.analytic.dual_text_encode_calls, report.analytic.baseline_text_encode_calls, report.analytic.call_ratio
    );
    println!(
        "median ms per image: dual cold {:.3} cached {:.3}",
        report.dual.wall_cold.median_ms, report.dual.wall_cached.median_ms
    );
    write_json(&report, &dir.join(BENCH_FILE))?;
    Ok(())
}
