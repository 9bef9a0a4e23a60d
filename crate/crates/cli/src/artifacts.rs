//! On-disk layout of a trained model and its run manifest.
//!
//! A model directory holds:
//!
//! ```text
//! config.txt     resolved training configuration (key = value)
//! words.tsv      word vocabulary with train/dev counts
//! labels.tsv     label vocabulary with counts
//! cooc.tsv       finalized co-occurrence matrix (label modes only)
//! model.ckpt     parameter tensors
//! epochs.jsonl   one record per training epoch
//! manifest.json  everything needed to reproduce the run
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use slotfill::cooccurrence::CooccurrenceMatrix;
use slotfill::corpus::Vocab;
use slotfill::evaluation::Prf;
use slotfill::neural::checkpoint;
use slotfill::trainer::{EpochRecord, Model, ModelShape, ParamCounts, TrainConfig};

pub const CONFIG_FILE: &str = "config.txt";
pub const WORDS_FILE: &str = "words.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const COOC_FILE: &str = "cooc.tsv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EPOCHS_FILE: &str = "epochs.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct InputFile {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

impl InputFile {
    pub fn new(role: &str, path: &Path) -> Result<Self> {
        Ok(InputFile {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

/// Epoch metrics without wall-clock time, so reruns produce identical files.
#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
    pub lr: f64,
    pub improved: bool,
}

impl From<&EpochRecord> for EpochMetrics {
    fn from(r: &EpochRecord) -> Self {
        EpochMetrics {
            epoch: r.epoch,
            train_loss: r.train_loss,
            dev_precision: r.dev_precision,
            dev_recall: r.dev_recall,
            dev_f1: r.dev_f1,
            lr: r.lr,
            improved: r.improved,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamReport {
    pub counts: ParamCounts,
    /// Counts of the baseline with the same dimensions.
    pub baseline_total: usize,
    pub delta: i64,
    /// `delta / baseline_total`.
    pub delta_ratio: f64,
}

impl ParamReport {
    pub fn new(shape: &ModelShape) -> Self {
        let counts = shape.param_counts();
        let baseline_total = baseline_shape(shape).param_counts().total;
        let delta = counts.total as i64 - baseline_total as i64;
        ParamReport {
            counts,
            baseline_total,
            delta,
            delta_ratio: delta as f64 / baseline_total as f64,
        }
    }
}

pub fn baseline_shape(shape: &ModelShape) -> ModelShape {
    ModelShape {
        mode: slotfill::trainer::Mode::Baseline,
        ..*shape
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: TrainConfig,
    pub inputs: Vec<InputFile>,
    pub vocabulary: VocabSummary,
    pub parameters: ParamReport,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
    pub train_scores: Option<Prf>,
    pub test_scores: Option<Prf>,
    pub pretrained_rows: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VocabSummary {
    pub words: usize,
    pub labels: usize,
    pub train_utterances: usize,
    pub dev_utterances: usize,
}

pub fn manifest_header() -> (&'static str, &'static str) {
    (env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Writes everything except the manifest, which the caller completes once
/// training and scoring are done.
pub fn save_model(dir: &Path, cfg: &TrainConfig, vocab: &Vocab, model: &Model, cooc: Option<&CooccurrenceMatrix>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_FILE), cfg.to_text())?;
    vocab.save(dir.join(WORDS_FILE), dir.join(LABELS_FILE))?;
    if let Some(c) = cooc {
        c.save(dir.join(COOC_FILE))?;
    }
    checkpoint::save(&model.params, dir.join(CHECKPOINT_FILE))?;
    Ok(())
}

pub struct LoadedModel {
    pub vocab: Vocab,
    pub model: Model,
}

pub fn load_model(dir: &Path) -> Result<LoadedModel> {
    if !dir.is_dir() {
        bail!("model directory {} does not exist", dir.display());
    }
    let config = TrainConfig::load(dir.join(CONFIG_FILE))?;
    let vocab = Vocab::load(dir.join(WORDS_FILE), dir.join(LABELS_FILE))?;
    let cooc = if config.mode.uses_labels() {
        Some(CooccurrenceMatrix::load(dir.join(COOC_FILE))?)
    } else {
        None
    };
    let shape = ModelShape::new(&config, vocab.num_words(), vocab.num_labels());
    // Initial values are overwritten; only the tensor layout matters here.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut model = Model::init(shape, config.loss, cooc.as_ref(), &mut rng)?;
    checkpoint::load_into(&mut model.params, dir.join(CHECKPOINT_FILE))
        .with_context(|| format!("checkpoint in {} does not match its vocabulary/config", dir.display()))?;
    Ok(LoadedModel {
        vocab,
        model,
    })
}
