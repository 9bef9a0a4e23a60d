//! Training configuration and its flat `key = value` file format.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Embeddings → Bi-GRU → FC → CRF.
    #[serde(rename = "bl")]
    Baseline,
    /// Baseline plus per-position cosine distances to every label.
    #[serde(rename = "le-plain")]
    LabelPlain,
    /// Baseline plus windowed, pooled distances.
    #[serde(rename = "le-window")]
    LabelWindowed,
}

impl Mode {
    pub fn uses_labels(self) -> bool {
        self != Mode::Baseline
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "bl",
            Mode::LabelPlain => "le-plain",
            Mode::LabelWindowed => "le-window",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "bl" => Ok(Mode::Baseline),
            "le-plain" => Ok(Mode::LabelPlain),
            "le-window" => Ok(Mode::LabelWindowed),
            _ => Err(format!("unknown mode `{s}` (expected bl, le-plain or le-window)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Sequence negative log-likelihood of the CRF.
    Crf,
    /// Independent per-token softmax cross-entropy on the emissions; decoding
    /// then takes the per-token argmax.
    TokenSoftmax,
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "crf" => Ok(LossKind::Crf),
            "token-softmax" => Ok(LossKind::TokenSoftmax),
            _ => Err(format!("unknown loss `{s}` (expected crf or token-softmax)")),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Crf => "crf",
            LossKind::TokenSoftmax => "token-softmax",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub loss: LossKind,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    /// Epochs without dev improvement before the learning rate is halved.
    pub patience: usize,
    /// Coefficient of the squared-norm penalty on the label scales.
    pub l2_reg: f64,
    /// Extend the penalty to the window weights.
    pub l2_include_window: bool,
    /// Recurrent dropout rate.
    pub dropout: f64,
    pub gru_units: usize,
    pub embed_dim: usize,
    /// Total window width `2q + 1`.
    pub window: usize,
    pub pool_stride: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: Mode::LabelWindowed,
            loss: LossKind::Crf,
            batch_size: 32,
            lr: 0.004,
            epochs: 30,
            patience: 3,
            l2_reg: 1e-6,
            l2_include_window: false,
            dropout: 0.5,
            gru_units: 60,
            embed_dim: 300,
            window: 5,
            pool_stride: 10,
            seed: 1,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "mode",
    "loss",
    "batch_size",
    "lr",
    "epochs",
    "patience",
    "l2_reg",
    "l2_include_window",
    "dropout",
    "gru_units",
    "embed_dim",
    "window",
    "pool_stride",
    "seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| format!("bad value `{value}` for `{key}`: {e}"))
}

impl TrainConfig {
    /// Half-width `q` of the distance window.
    pub fn half_window(&self) -> usize {
        self.window / 2
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        match key {
            "mode" => self.mode = value.parse()?,
            "loss" => self.loss = value.parse()?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "l2_reg" => self.l2_reg = parse(key, value)?,
            "l2_include_window" => self.l2_include_window = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "gru_units" => self.gru_units = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "pool_stride" => self.pool_stride = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Err(format!("unknown key `{key}` (known: {})", CONFIG_KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("patience", self.patience),
            ("gru_units", self.gru_units),
            ("embed_dim", self.embed_dim),
            ("pool_stride", self.pool_stride),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(format!("`{k}` must be positive"));
        }
        if self.window.is_multiple_of(2) {
            return Err(format!("`window` must be odd, got {}", self.window));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(format!("`lr` must be a non-negative number, got {}", self.lr));
        }
        if !(self.l2_reg.is_finite() && self.l2_reg >= 0.0) {
            return Err(format!("`l2_reg` must be a non-negative number, got {}", self.l2_reg));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("`dropout` must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<()> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            let err = |column: usize, message: String| Error::Parse {
                source_name: source_name.to_string(),
                line: idx + 1,
                column,
                message,
            };
            let Some((key, value)) = line.split_once('=') else {
                return Err(err(1, "expected `key = value`".into()));
            };
            let value_col = key.chars().count() + 2 + (value.len() - value.trim_start().len());
            let key_col = 1 + (key.len() - key.trim_start().len());
            let key = key.trim();
            if !CONFIG_KEYS.contains(&key) {
                return Err(err(key_col, format!("unknown key `{key}`")));
            }
            self.set(key, value.trim()).map_err(|m| err(value_col, m))?;
        }
        self.validate().map_err(|m| Error::Config(format!("{source_name}: {m}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = TrainConfig::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// The `key = value` form read by [`TrainConfig::apply_text`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        line("mode", self.mode.to_string());
        line("loss", self.loss.to_string());
        line("batch_size", self.batch_size.to_string());
        line("lr", format!("{:?}", self.lr));
        line("epochs", self.epochs.to_string());
        line("patience", self.patience.to_string());
        line("l2_reg", format!("{:?}", self.l2_reg));
        line("l2_include_window", self.l2_include_window.to_string());
        line("dropout", format!("{:?}", self.dropout));
        line("gru_units", self.gru_units.to_string());
        line("embed_dim", self.embed_dim.to_string());
        line("window", self.window.to_string());
        line("pool_stride", self.pool_stride.to_string());
        line("seed", self.seed.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.lr, c.epochs, c.patience), (32, 0.004, 30, 3));
        assert_eq!((c.l2_reg, c.dropout, c.gru_units, c.embed_dim), (1e-6, 0.5, 60, 300));
        assert_eq!((c.window, c.half_window(), c.pool_stride), (5, 2, 10));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn text_round_trip() {
        let mut c = TrainConfig {
            mode: Mode::LabelPlain,
            loss: LossKind::TokenSoftmax,
            lr: 0.1 + 0.2,
            l2_include_window: true,
            ..TrainConfig::default()
        };
        c.seed = 99;
        let mut back = TrainConfig::default();
        back.apply_text(&c.to_text(), "mem").unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_carry_line_and_column() {
        let mut c = TrainConfig::default();
        match c.apply_text("# comment\nlr = 0.1\nbatch_size = many\n", "cfg") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 14)),
            other => panic!("{other:?}"),
        }
        match c.apply_text("\n  colour = red\n", "cfg") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 3)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(c.apply_text("no equals sign", "cfg"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(c.apply_text("window = 4", "cfg"), Err(Error::Config(_))));
    }

    #[test]
    fn mode_names() {
        for m in [Mode::Baseline, Mode::LabelPlain, Mode::LabelWindowed] {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert!("le".parse::<Mode>().is_err());
    }
}
