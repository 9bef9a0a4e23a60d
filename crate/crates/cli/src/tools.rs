//! `slotfill reduce`, `synth`, `gradcheck` and `params`.

use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use slotfill::corpus::{reduce_splits, save_conll, validate_bio, word_set, Corpus, Vocab};
use slotfill::evaluation::json_line;
use slotfill::synth::{SynthGrammar, SynthOptions};
use slotfill::trainer::check::{check_gradients, TinyConfig};
use slotfill::trainer::{LossKind, Mode, ModelShape, TrainConfig};

use crate::artifacts::ParamReport;
use crate::data::{load_labeled, DataArgs, DEV_FILE, TEST_FILE, TRAIN_FILE};

#[derive(Debug, Clone, Args)]
pub struct ReduceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Utterances kept per frequency-ranked word; several values give several reductions.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub m_cap: Vec<NonZeroUsize>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct ReduceRecord {
    m_cap: usize,
    dir: PathBuf,
    train_utterances: usize,
    dev_utterances: usize,
    train_in: usize,
    dev_in: usize,
    words_covered: usize,
    words_total: usize,
}

pub fn reduce(args: &ReduceArgs, default_out: &Path) -> Result<()> {
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out.to_path_buf());
    let train = load_labeled(&args.data.train_path()?)?;
    let dev = load_labeled(&args.data.dev_path()?)?;
    let test = args.data.test_path();
    let vocab = Vocab::build(&train, &dev);
    let full: std::collections::HashSet<&str> = word_set(&train).union(&word_set(&dev)).copied().collect();
    for &m in &args.m_cap {
        let (t, d) = reduce_splits(&train, &dev, &vocab, m);
        let covered = word_set(&t).union(&word_set(&d)).count();
        let dir = out_dir.join(format!("m{m}"));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        save_conll(&t, dir.join(TRAIN_FILE))?;
        save_conll(&d, dir.join(DEV_FILE))?;
        if let Some(p) = &test {
            fs::copy(p, dir.join(TEST_FILE)).with_context(|| format!("copying {}", p.display()))?;
        }
        let rec = ReduceRecord {
            m_cap: m.get(),
            dir,
            train_utterances: t.len(),
            dev_utterances: d.len(),
            train_in: train.len(),
            dev_in: dev.len(),
            words_covered: covered,
            words_total: full.len(),
        };
        println!("{}", json_line("reduce", &rec));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Size of the label set, including `O`.
    #[arg(long, default_value_t = 8)]
    pub labels: usize,
    #[arg(long, default_value_t = 6)]
    pub templates: usize,
    #[arg(long = "train-size", default_value_t = 200)]
    pub train: usize,
    #[arg(long = "dev-size", default_value_t = 50)]
    pub dev: usize,
    #[arg(long = "test-size", default_value_t = 50)]
    pub test: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Seeds of the three splits, distinct from each other and from the grammar seed.
pub fn split_seeds(seed: u64) -> [u64; 3] {
    let base = seed.wrapping_mul(4);
    [base.wrapping_add(1), base.wrapping_add(2), base.wrapping_add(3)]
}

pub fn synth(args: &SynthArgs, default_out: &Path) -> Result<()> {
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out.to_path_buf());
    let grammar = SynthGrammar::new(&SynthOptions {
        num_labels: args.labels,
        num_templates: args.templates,
        seed: args.seed,
    })?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let seeds = split_seeds(args.seed);
    let splits = [(TRAIN_FILE, args.train), (DEV_FILE, args.dev), (TEST_FILE, args.test)];
    for ((file, n), seed) in splits.into_iter().zip(seeds) {
        let corpus = grammar.sample(n, seed);
        check_bio(&corpus)?;
        save_conll(&corpus, out_dir.join(file))?;
    }
    let labels: Vec<String> = grammar.labels().iter().map(ToString::to_string).collect();
    println!(
        "{}",
        json_line(
            "synth",
            &serde_json::json!({
                "dir": out_dir,
                "labels": labels,
                "templates": grammar.num_templates(),
                "train": args.train,
                "dev": args.dev,
                "test": args.test,
                "seed": args.seed,
            })
        )
    );
    Ok(())
}

fn check_bio(corpus: &Corpus) -> Result<()> {
    for (i, u) in corpus.utterances.iter().enumerate() {
        if let Some(labels) = &u.labels {
            if !validate_bio(labels).is_empty() {
                bail!("generated utterance {i} violates BIO continuity");
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Mode to check; `all` checks every mode.
    #[arg(long, default_value = "all")]
    pub mode: String,
    /// Loss to check; `all` checks both.
    #[arg(long, default_value = "crf")]
    pub loss: String,
    /// Perturb the analytic gradient of this tensor (negative control).
    #[arg(long)]
    pub corrupt: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

fn modes_of(list: &str) -> Result<Vec<Mode>> {
    if list == "all" {
        return Ok(vec![Mode::Baseline, Mode::LabelPlain, Mode::LabelWindowed]);
    }
    list.split(',').map(|s| s.trim().parse().map_err(anyhow::Error::msg)).collect()
}

fn losses_of(list: &str) -> Result<Vec<LossKind>> {
    if list == "all" {
        return Ok(vec![LossKind::Crf, LossKind::TokenSoftmax]);
    }
    list.split(',').map(|s| s.trim().parse().map_err(anyhow::Error::msg)).collect()
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    let mut cfg = TinyConfig::default();
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.embed_dim {
        cfg.embed_dim = d;
    }
    if let Some(w) = args.window {
        cfg.window = w;
    }
    if let Some(s) = args.stride {
        cfg.pool_stride = s;
    }
    let mut failed = Vec::new();
    for mode in modes_of(&args.mode)? {
        for loss in losses_of(&args.loss)? {
            let report = check_gradients(mode, loss, &cfg, args.corrupt.as_deref())?;
            for t in &report.tensors {
                println!(
                    "{:<10} {:<13} {:<22} {:>6}  rel.err {:.3e}  {}",
                    mode.as_str(),
                    loss.to_string(),
                    t.name,
                    t.len,
                    t.rel_error,
                    if t.passed { "ok" } else { "FAIL" }
                );
                if !t.passed {
                    failed.push(format!("{mode}/{loss}/{}", t.name));
                }
            }
            println!(
                "{}",
                json_line(
                    "gradcheck",
                    &serde_json::json!({ "mode": mode, "loss": loss, "passed": report.passed(), "report": report })
                )
            );
        }
    }
    if !failed.is_empty() {
        bail!("gradient check failed for: {}", failed.join(", "));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct ParamsArgs {
    #[arg(long, default_value = "le-window")]
    pub mode: Mode,
    /// Word vocabulary size.
    #[arg(long)]
    pub words: usize,
    /// Label vocabulary size.
    #[arg(long)]
    pub labels: usize,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub gru_units: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
}

pub fn params(args: &ParamsArgs) -> Result<()> {
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        mode: args.mode,
        embed_dim: args.embed_dim.unwrap_or(d.embed_dim),
        gru_units: args.gru_units.unwrap_or(d.gru_units),
        window: args.window.unwrap_or(d.window),
        pool_stride: args.stride.unwrap_or(d.pool_stride),
        ..d
    };
    cfg.validate().map_err(anyhow::Error::msg)?;
    let shape = ModelShape::new(&cfg, args.words, args.labels);
    let report = ParamReport::new(&shape);
    let c = &report.counts;
    eprintln!(
        "{}: {} parameters (embeddings {}, label scales {}, window {}, GRU {}, FC {}, CRF {})",
        args.mode, c.total, c.embeddings, c.label_scaling, c.window, c.gru, c.fc, c.crf
    );
    eprintln!(
        "baseline: {}  delta: {:+} ({:.3}%)",
        report.baseline_total,
        report.delta,
        100.0 * report.delta_ratio
    );
    println!(
        "{}",
        json_line("params", &serde_json::json!({ "mode": args.mode, "shape": shape, "parameters": report }))
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_seeds_are_distinct() {
        let s = split_seeds(1);
        assert!(s[0] != s[1] && s[1] != s[2] && !s.contains(&1));
    }

    #[test]
    fn mode_lists() {
        assert_eq!(modes_of("all").unwrap().len(), 3);
        assert_eq!(modes_of("bl,le-window").unwrap(), vec![Mode::Baseline, Mode::LabelWindowed]);
        assert!(modes_of("nope").is_err());
        assert_eq!(losses_of("token-softmax").unwrap(), vec![LossKind::TokenSoftmax]);
    }
}
