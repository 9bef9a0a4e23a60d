//! `slotfill train`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use slotfill::cooccurrence::CooccurrenceMatrix;
use slotfill::corpus::Vocab;
use slotfill::evaluation::{json_line, Prf};
use slotfill::label_space::load_pretrained;
use slotfill::trainer::{self, score, LossKind, Mode, Model, ModelShape, TrainConfig};

use crate::artifacts::{
    self, EpochMetrics, InputFile, ParamReport, RunManifest, VocabSummary, EPOCHS_FILE, MANIFEST_FILE,
};
use crate::data::{load_labeled, DataArgs};

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Configuration file of `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub loss: Option<LossKind>,
    /// One or more seeds; each trains a separate model.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub seed: Vec<u64>,
    /// Total context window width (odd).
    #[arg(long)]
    pub window: Option<usize>,
    /// Max-pooling stride along the label axis.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Word vectors (`word v1 ... vd` per line) used to initialize embeddings.
    #[arg(long)]
    pub pretrained_embeddings: Option<PathBuf>,
    /// Output directory (default: the global output directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl TrainArgs {
    pub fn resolve_config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        let mut set = |k: &str, v: String| cfg.set(k, &v).map_err(anyhow::Error::msg);
        if let Some(m) = self.mode {
            set("mode", m.to_string())?;
        }
        if let Some(l) = self.loss {
            set("loss", l.to_string())?;
        }
        if let Some(w) = self.window {
            set("window", w.to_string())?;
        }
        if let Some(s) = self.stride {
            set("pool_stride", s.to_string())?;
        }
        if let Some(d) = self.embed_dim {
            set("embed_dim", d.to_string())?;
        }
        if let Some(e) = self.epochs {
            set("epochs", e.to_string())?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("override `{kv}` is not KEY=VALUE"))?;
            set(k.trim(), v.trim().to_string())?;
        }
        cfg.validate().map_err(anyhow::Error::msg)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
struct SeedResult {
    seed: u64,
    dir: PathBuf,
    best_epoch: usize,
    dev_f1: f64,
    test_f1: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub stddev: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let stddev = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(MeanStd { mean, stddev })
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ({:.2})", 100.0 * self.mean, 100.0 * self.stddev)
    }
}

#[derive(Debug, Clone, Serialize)]
struct Summary {
    mode: Mode,
    runs: Vec<SeedResult>,
    dev_f1: Option<MeanStd>,
    test_f1: Option<MeanStd>,
}

pub fn run(args: &TrainArgs, default_out: &Path) -> Result<()> {
    let base = args.resolve_config()?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out.to_path_buf());
    let train_path = args.data.train_path()?;
    let dev_path = args.data.dev_path()?;
    let test_path = args.data.test_path();
    let train_c = load_labeled(&train_path)?;
    let dev_c = load_labeled(&dev_path)?;
    let test_c = test_path.as_deref().map(load_labeled).transpose()?;

    let vocab = Vocab::build(&train_c, &dev_c);
    let train = vocab.encode_corpus(&train_c)?;
    let dev = vocab.encode_corpus(&dev_c)?;
    let test = test_c.as_ref().map(|c| vocab.encode_corpus(c)).transpose()?;
    let cooc = if base.mode.uses_labels() {
        let mut c = CooccurrenceMatrix::count(&train_c, &vocab)?;
        c.finalize()?;
        Some(c)
    } else {
        None
    };

    let mut inputs = vec![InputFile::new("train", &train_path)?, InputFile::new("dev", &dev_path)?];
    if let Some(p) = &test_path {
        inputs.push(InputFile::new("test", p)?);
    }
    if let Some(p) = &args.config {
        inputs.push(InputFile::new("config", p)?);
    }
    if let Some(p) = &args.pretrained_embeddings {
        inputs.push(InputFile::new("pretrained_embeddings", p)?);
    }

    let seeds = if args.seed.is_empty() { vec![base.seed] } else { args.seed.clone() };
    let mut runs = Vec::new();
    for &seed in &seeds {
        let cfg = TrainConfig { seed, ..base.clone() };
        let dir = out_dir.join(format!("seed-{seed}"));
        let ctx = RunContext {
            cfg: &cfg,
            vocab: &vocab,
            cooc: cooc.as_ref(),
            inputs: &inputs,
            pretrained: args.pretrained_embeddings.as_deref(),
            dir: &dir,
        };
        let (best_epoch, dev_f1, test_scores) = train_one(&ctx, &train, &dev, test.as_deref())?;
        let test_f1 = test_scores.map(|s| s.f1);
        println!(
            "{}",
            json_line(
                "run",
                &SeedResult {
                    seed,
                    dir: dir.clone(),
                    best_epoch,
                    dev_f1,
                    test_f1
                }
            )
        );
        runs.push(SeedResult {
            seed,
            dir,
            best_epoch,
            dev_f1,
            test_f1,
        });
    }

    let dev_f1 = MeanStd::of(&runs.iter().map(|r| r.dev_f1).collect::<Vec<_>>());
    let test_values: Vec<f64> = runs.iter().filter_map(|r| r.test_f1).collect();
    let test_f1 = MeanStd::of(&test_values);
    let summary = Summary {
        mode: base.mode,
        runs,
        dev_f1,
        test_f1,
    };
    artifacts::write_json(&out_dir.join("summary.json"), &summary)?;
    println!("{}", json_line("summary", &summary));
    if let Some(d) = &summary.dev_f1 {
        eprintln!("{} dev F1 over {} seed(s): {d}", summary.mode, seeds.len());
    }
    if let Some(t) = &summary.test_f1 {
        eprintln!("{} test F1 over {} seed(s): {t}", summary.mode, seeds.len());
    }
    Ok(())
}

struct RunContext<'a> {
    cfg: &'a TrainConfig,
    vocab: &'a Vocab,
    cooc: Option<&'a CooccurrenceMatrix>,
    inputs: &'a [InputFile],
    pretrained: Option<&'a Path>,
    dir: &'a Path,
}

fn train_one(
    ctx: &RunContext,
    train: &[slotfill::corpus::Utterance],
    dev: &[slotfill::corpus::Utterance],
    test: Option<&[slotfill::corpus::Utterance]>,
) -> Result<(usize, f64, Option<Prf>)> {
    let cfg = ctx.cfg;
    let shape = ModelShape::new(cfg, ctx.vocab.num_words(), ctx.vocab.num_labels());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(shape, cfg.loss, ctx.cooc, &mut rng)?;
    let pretrained_rows = match ctx.pretrained {
        Some(p) => {
            let ids: HashMap<&str, usize> = ctx
                .vocab
                .words()
                .iter()
                .enumerate()
                .map(|(i, w)| (w.as_str(), i))
                .collect();
            let rows = load_pretrained(p, &ids, &mut model.params.embeddings)?;
            log::info!("initialized {rows} embedding rows from {}", p.display());
            Some(rows)
        }
        None => None,
    };

    std::fs::create_dir_all(ctx.dir).with_context(|| format!("creating {}", ctx.dir.display()))?;
    let epochs_path = ctx.dir.join(EPOCHS_FILE);
    let mut epochs_log = BufWriter::new(File::create(&epochs_path).with_context(|| format!("creating {}", epochs_path.display()))?);
    let mut epochs = Vec::new();
    let mut log_err = None;
    let outcome = trainer::train(model, train, dev, ctx.vocab.labels(), ctx.vocab.pad_id(), cfg, |rec, _| {
        let metrics = EpochMetrics::from(rec);
        if let Err(e) = writeln!(epochs_log, "{}", json_line("epoch", &metrics)) {
            log_err.get_or_insert(e);
        }
        epochs.push(metrics);
        eprintln!(
            "seed {} epoch {:>3}: loss {:.4}  dev F1 {:6.2}  lr {:.6}{}",
            cfg.seed,
            rec.epoch,
            rec.train_loss,
            100.0 * rec.dev_f1,
            rec.lr,
            if rec.improved { "  *" } else { "" }
        );
        Ok(())
    })?;
    if let Some(e) = log_err {
        return Err(e).with_context(|| format!("writing {}", epochs_path.display()));
    }
    epochs_log.flush()?;

    let train_scores = score(&outcome.model, train, ctx.vocab.labels())?;
    let test_scores = test.map(|t| score(&outcome.model, t, ctx.vocab.labels())).transpose()?;
    artifacts::save_model(ctx.dir, cfg, ctx.vocab, &outcome.model, ctx.cooc)?;
    let (toolkit, version) = artifacts::manifest_header();
    let manifest = RunManifest {
        toolkit,
        version,
        seed: cfg.seed,
        config: cfg.clone(),
        inputs: ctx.inputs.to_vec(),
        vocabulary: VocabSummary {
            words: ctx.vocab.num_words(),
            labels: ctx.vocab.num_labels(),
            train_utterances: train.len(),
            dev_utterances: dev.len(),
        },
        parameters: ParamReport::new(&shape),
        epochs,
        best_epoch: outcome.best_epoch,
        best_dev_f1: outcome.best_dev_f1,
        train_scores: Some(train_scores),
        test_scores,
        pretrained_rows,
    };
    artifacts::write_json(&ctx.dir.join(MANIFEST_FILE), &manifest)?;
    Ok((outcome.best_epoch, outcome.best_dev_f1, test_scores))
}
