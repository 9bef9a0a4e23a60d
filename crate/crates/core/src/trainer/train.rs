//! Epoch loop: length-grouped batches, Nadam updates, dev-F1 model
//! selection and learning-rate halving.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{Batch, Model, Penalty};
use super::optim::{LrSchedule, Nadam};
use crate::corpus::{BioTag, Utterance};
use crate::error::{Error, Result};
use crate::evaluation::{conll_f1, Prf};
use crate::neural::DropoutMasks;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch objective over the epoch.
    pub train_loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub improved: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// The model restored to its best dev epoch.
    pub model: Model,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Splits `0..lengths.len()` into batches of similar length. Indices are
/// shuffled, stably sorted by length, cut into batches, and the batch order
/// shuffled again, so the result depends only on the RNG state.
pub fn length_grouped_batches<R: Rng>(lengths: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..lengths.len()).collect();
    idx.shuffle(rng);
    idx.sort_by_key(|&i| lengths[i]);
    let mut batches: Vec<Vec<usize>> = idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

fn decode(labels: &[BioTag], ids: &[usize]) -> Vec<BioTag> {
    ids.iter().map(|&i| labels[i].clone()).collect()
}

/// Chunk scores of `model` on labeled `data`.
pub fn score(model: &Model, data: &[Utterance], labels: &[BioTag]) -> Result<Prf> {
    let predicted = model.predict_utterances(data)?;
    let gold: Vec<Vec<BioTag>> = data
        .iter()
        .enumerate()
        .map(|(i, u)| u.labels.as_deref().map(|l| decode(labels, l)).ok_or(Error::Unlabeled(i)))
        .collect::<Result<_>>()?;
    let pred: Vec<Vec<BioTag>> = predicted.iter().map(|p| decode(labels, p)).collect();
    conll_f1(&gold, &pred)
}

/// Trains `model` for up to `cfg.epochs` epochs. `on_epoch` sees each log
/// record with the current model, after the best-model bookkeeping.
pub fn train(
    mut model: Model,
    train: &[Utterance],
    dev: &[Utterance],
    labels: &[BioTag],
    pad_word: usize,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Model) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate().map_err(Error::Config)?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus("training set".into()));
    }
    if dev.is_empty() {
        return Err(Error::EmptyCorpus("development set".into()));
    }
    if let Some(i) = train.iter().position(|u| u.labels.is_none()) {
        return Err(Error::Unlabeled(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let penalty = Penalty::from_config(cfg);
    let mut optimizer = Nadam::default();
    let mut schedule = LrSchedule::new(cfg.lr, cfg.patience);
    let lengths: Vec<usize> = train.iter().map(Utterance::len).collect();
    let mut best = (model.params.clone(), 0usize, f64::NEG_INFINITY);
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let lr = schedule.lr();
        let batches = length_grouped_batches(&lengths, cfg.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        for (b, members) in batches.iter().enumerate() {
            let refs: Vec<&Utterance> = members.iter().map(|&i| &train[i]).collect();
            let batch = Batch::new(&refs, pad_word)?;
            let masks: Option<Vec<DropoutMasks>> = (cfg.dropout > 0.0).then(|| {
                (0..batch.len())
                    .map(|_| DropoutMasks::sample(cfg.gru_units, cfg.dropout, &mut rng))
                    .collect()
            });
            let (loss, grads) = model.loss_and_grad(&batch, masks.as_deref(), penalty)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            optimizer.step(&mut model.params, &grads, lr)?;
            loss_sum += loss;
        }
        let dev_scores = score(&model, dev, labels)?;
        let improved = schedule.observe(dev_scores.f1);
        if improved {
            best = (model.params.clone(), epoch, dev_scores.f1);
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / batches.len() as f64,
            dev_precision: dev_scores.precision,
            dev_recall: dev_scores.recall,
            dev_f1: dev_scores.f1,
            lr,
            improved,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: loss {:.4}, dev F1 {:.4}, lr {lr}",
            record.train_loss,
            record.dev_f1
        );
        on_epoch(&record, &model)?;
        log.push(record);
    }
    let (params, best_epoch, best_dev_f1) = best;
    model.params = params;
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_dev_f1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cooccurrence::CooccurrenceMatrix;
    use crate::corpus::Vocab;
    use crate::synth::{SynthGrammar, SynthOptions};
    use crate::trainer::config::Mode;
    use crate::trainer::model::ModelShape;

    #[test]
    fn batches_partition_and_group() {
        let lengths = [5, 1, 3, 5, 2, 1, 4, 3];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = length_grouped_batches(&lengths, 3, &mut rng);
        let mut all: Vec<usize> = b.iter().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..8).collect::<Vec<_>>());
        assert!(b.iter().all(|x| x.len() <= 3));
        let spans: Vec<usize> = b
            .iter()
            .map(|x| x.iter().map(|&i| lengths[i]).max().unwrap() - x.iter().map(|&i| lengths[i]).min().unwrap())
            .collect();
        assert!(spans.iter().sum::<usize>() <= 4);
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(length_grouped_batches(&lengths, 3, &mut rng2), b);
    }

    fn setup(cfg: &TrainConfig) -> (Model, Vec<Utterance>, Vocab) {
        let grammar = SynthGrammar::new(&SynthOptions {
            num_labels: 6,
            num_templates: 4,
            seed: 2,
        })
        .unwrap();
        let corpus = grammar.sample(40, 2);
        let vocab = Vocab::build(&corpus, &corpus);
        let data = vocab.encode_corpus(&corpus).unwrap();
        let mut cooc = CooccurrenceMatrix::count(&corpus, &vocab).unwrap();
        cooc.finalize().unwrap();
        let shape = ModelShape::new(cfg, vocab.num_words(), vocab.num_labels());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let model = Model::init(shape, cfg.loss, Some(&cooc), &mut rng).unwrap();
        (model, data, vocab)
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            mode: Mode::LabelWindowed,
            batch_size: 8,
            epochs: 3,
            embed_dim: 6,
            gru_units: 4,
            pool_stride: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 1,
            ..small_cfg()
        };
        let (model, data, vocab) = setup(&cfg);
        let before = model.params.clone();
        let out = train(model, &data, &data, vocab.labels(), vocab.pad_id(), &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(out.model.params, before);
    }

    #[test]
    fn identical_seeds_reproduce_the_log() {
        let cfg = small_cfg();
        let run = || {
            let (model, data, vocab) = setup(&cfg);
            train(model, &data, &data, vocab.labels(), vocab.pad_id(), &cfg, |_, _| Ok(()))
                .unwrap()
                .log
                .iter()
                .map(|r| (r.dev_f1.to_bits(), r.train_loss.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn divergence_reports_batch() {
        let cfg = TrainConfig {
            epochs: 1,
            ..small_cfg()
        };
        let (mut model, data, vocab) = setup(&cfg);
        model.params.fc.bias[0] = f64::INFINITY;
        let err = train(model, &data, &data, vocab.labels(), vocab.pad_id(), &cfg, |_, _| Ok(())).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 1, batch: 0 }), "{err:?}");
    }

    #[test]
    fn best_epoch_is_restored() {
        let cfg = small_cfg();
        let (model, data, vocab) = setup(&cfg);
        let mut snapshots = Vec::new();
        let out = train(model, &data, &data, vocab.labels(), vocab.pad_id(), &cfg, |r, m| {
            snapshots.push((r.epoch, m.params.clone()));
            Ok(())
        })
        .unwrap();
        let best = &snapshots[out.best_epoch - 1].1;
        assert_eq!(&out.model.params, best);
        let max = out.log.iter().map(|r| r.dev_f1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.best_dev_f1, max);
    }
}
