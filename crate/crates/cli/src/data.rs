//! Resolution of corpus paths from `--data DIR` and per-split flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use clap::Args;
use slotfill::corpus::{load_conll, Corpus, LabelPolicy};

pub const TRAIN_FILE: &str = "train.conll";
pub const DEV_FILE: &str = "dev.conll";
pub const TEST_FILE: &str = "test.conll";

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding train.conll, dev.conll and optionally test.conll.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training corpus (overrides --data).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Development corpus (overrides --data).
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Test corpus (overrides --data).
    #[arg(long)]
    pub test: Option<PathBuf>,
}

impl DataArgs {
    fn resolve(&self, explicit: &Option<PathBuf>, file: &str) -> Option<PathBuf> {
        explicit
            .clone()
            .or_else(|| self.data.as_ref().map(|d| d.join(file)))
    }

    pub fn train_path(&self) -> Result<PathBuf> {
        match self.resolve(&self.train, TRAIN_FILE) {
            Some(p) => Ok(p),
            None => bail!("no training data: pass --train or --data"),
        }
    }

    pub fn dev_path(&self) -> Result<PathBuf> {
        match self.resolve(&self.dev, DEV_FILE) {
            Some(p) => Ok(p),
            None => bail!("no development data: pass --dev or --data"),
        }
    }

    /// Test path if given explicitly, or if `--data` contains one.
    pub fn test_path(&self) -> Option<PathBuf> {
        match &self.test {
            Some(p) => Some(p.clone()),
            None => self.data.as_ref().map(|d| d.join(TEST_FILE)).filter(|p| p.exists()),
        }
    }
}

pub fn load_labeled(path: &Path) -> Result<Corpus> {
    Ok(load_conll(path, LabelPolicy::Required)?)
}
