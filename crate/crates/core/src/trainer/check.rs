//! End-to-end gradient check on a small random model.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{LossKind, Mode};
use super::model::{Batch, Model, ModelShape, Penalty};
use crate::cooccurrence::CooccurrenceMatrix;
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::neural::{grad_check, DropoutMasks, GradCheckReport, Parameters};

pub const EPSILON: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyConfig {
    pub num_words: usize,
    pub num_labels: usize,
    pub embed_dim: usize,
    pub gru_units: usize,
    /// Utterance length.
    pub length: usize,
    pub window: usize,
    pub pool_stride: usize,
    /// Recurrent dropout rate of the fixed masks used during the check.
    pub dropout: f64,
    pub l2_reg: f64,
    pub seed: u64,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            num_words: 12,
            num_labels: 5,
            embed_dim: 8,
            gru_units: 4,
            length: 7,
            window: 5,
            pool_stride: 2,
            dropout: 0.5,
            l2_reg: 1e-6,
            seed: 1,
        }
    }
}

/// Builds a randomly initialized model and one random labeled utterance.
/// CRF scores and label scales are perturbed away from their constant
/// initial values so that every gradient path is exercised.
pub fn tiny_model(mode: Mode, loss: LossKind, cfg: &TinyConfig) -> Result<(Model, Utterance)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (n, m) = (cfg.num_words, cfg.num_labels);
    let raw = Array2::from_shape_fn((m, n), |_| rng.random_range(0..5u64));
    let mut cooc = CooccurrenceMatrix::from_raw(raw);
    cooc.finalize()?;
    let shape = ModelShape {
        mode,
        num_words: n,
        num_labels: m,
        embed_dim: cfg.embed_dim,
        gru_units: cfg.gru_units,
        window: cfg.window,
        pool_stride: cfg.pool_stride,
    };
    let mut model = Model::init(shape, loss, Some(&cooc), &mut rng)?;
    let p = &mut model.params;
    for v in p.crf.transitions.iter_mut().chain(p.crf.start.iter_mut()).chain(p.crf.end.iter_mut()) {
        *v = rng.random_range(-0.5..0.5);
    }
    if let Some(l) = &mut p.label {
        for v in l.w1.iter_mut().chain(l.w2.iter_mut()) {
            *v = rng.random_range(0.5..1.5);
        }
    }
    for v in p.gru.fwd.b_z.iter_mut().chain(p.gru.bwd.b_n.iter_mut()).chain(p.fc.bias.iter_mut()) {
        *v = rng.random_range(-0.1..0.1);
    }
    let utt = Utterance {
        words: (0..cfg.length).map(|_| rng.random_range(0..n)).collect(),
        labels: Some((0..cfg.length).map(|_| rng.random_range(0..m)).collect()),
    };
    Ok((model, utt))
}

/// Compares analytic and central-difference gradients for every tensor.
/// `corrupt` names a tensor whose analytic gradient is deliberately
/// damaged first, to confirm the check reports it.
pub fn check_gradients(mode: Mode, loss: LossKind, cfg: &TinyConfig, corrupt: Option<&str>) -> Result<GradCheckReport> {
    let (model, utt) = tiny_model(mode, loss, cfg)?;
    let batch = Batch::new(&[&utt], cfg.num_words - 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd0_0d);
    let masks = (cfg.dropout > 0.0).then(|| vec![DropoutMasks::sample(cfg.gru_units, cfg.dropout, &mut rng)]);
    let penalty = Penalty {
        l2: cfg.l2_reg,
        include_window: false,
    };
    let (_, mut grads) = model.loss_and_grad(&batch, masks.as_deref(), penalty)?;
    if let Some(name) = corrupt {
        let mut tensors = grads.tensors_mut();
        let t = tensors
            .iter_mut()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Config(format!("no tensor named `{name}`")))?;
        let scale = t.data.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        t.data[0] += 1.0 + scale;
    }
    let mut params = model.params.clone();
    // A failed evaluation yields NaN, which fails the affected tensor.
    Ok(grad_check(
        &mut params,
        &grads,
        |p| model.loss_at(p, &batch, masks.as_deref(), penalty).unwrap_or(f64::NAN),
        EPSILON,
        TOLERANCE,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_config_passes_in_every_mode() {
        for mode in [Mode::Baseline, Mode::LabelPlain, Mode::LabelWindowed] {
            let r = check_gradients(mode, LossKind::Crf, &TinyConfig::default(), None).unwrap();
            assert!(r.passed(), "{mode}: {:?}", r.failures().collect::<Vec<_>>());
            assert!(r.tensors.iter().any(|t| t.name == "gru.bwd.u_n"));
        }
    }

    #[test]
    fn corrupted_tensor_is_named() {
        let r = check_gradients(Mode::LabelWindowed, LossKind::Crf, &TinyConfig::default(), Some("label.w2")).unwrap();
        let failed: Vec<&str> = r.failures().map(|t| t.name.as_str()).collect();
        assert_eq!(failed, vec!["label.w2"]);
        assert!(check_gradients(Mode::Baseline, LossKind::Crf, &TinyConfig::default(), Some("nope")).is_err());
    }
}
