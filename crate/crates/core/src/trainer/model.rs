//! Baseline and label-embedding taggers.
//!
//! Both share embeddings → Bi-GRU → FC → CRF. The label-embedding variants
//! concatenate each Bi-GRU output with that word's distance features
//! before the FC layer.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{LossKind, Mode, TrainConfig};
use crate::cooccurrence::CooccurrenceMatrix;
use crate::corpus::Utterance;
use crate::crf::{self, CrfParams};
use crate::error::{Error, Result};
use crate::label_space::{
    label_embeddings, label_embeddings_backward, plain_distances, plain_distances_backward, pooled_width,
    windowed_distances, windowed_distances_backward, LabelEmbeddingTape, LabelScaling, PlainDistances,
    WindowedDistances,
};
use crate::neural::{Activation, BiGru, BiGruTape, Dense, DenseTape, DropoutMasks, Parameters};

/// All trainable tensors. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub embeddings: Array2<f64>,
    pub label: Option<LabelScaling>,
    pub window: Option<Array1<f64>>,
    pub gru: BiGru,
    pub fc: Dense,
    pub crf: CrfParams,
}

crate::impl_parameters!(ModelParams {
    embeddings,
    label,
    window,
    gru,
    fc,
    crf
});

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }
}

/// Dimensions that fix every tensor shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub mode: Mode,
    pub num_words: usize,
    pub num_labels: usize,
    pub embed_dim: usize,
    pub gru_units: usize,
    pub window: usize,
    pub pool_stride: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub embeddings: usize,
    pub label_scaling: usize,
    pub window: usize,
    pub gru: usize,
    pub fc: usize,
    pub crf: usize,
    pub total: usize,
}

impl ModelShape {
    pub fn new(cfg: &TrainConfig, num_words: usize, num_labels: usize) -> Self {
        ModelShape {
            mode: cfg.mode,
            num_words,
            num_labels,
            embed_dim: cfg.embed_dim,
            gru_units: cfg.gru_units,
            window: cfg.window,
            pool_stride: cfg.pool_stride,
        }
    }

    /// Width of the per-position distance features appended to the Bi-GRU output.
    pub fn feature_width(&self) -> usize {
        match self.mode {
            Mode::Baseline => 0,
            Mode::LabelPlain => self.num_labels,
            Mode::LabelWindowed => pooled_width(self.num_labels, self.pool_stride),
        }
    }

    /// Parameter counts from the shapes alone.
    pub fn param_counts(&self) -> ParamCounts {
        let (n, m, d, h) = (self.num_words, self.num_labels, self.embed_dim, self.gru_units);
        let embeddings = n * d;
        let label_scaling = if self.mode.uses_labels() { m + n } else { 0 };
        let window = if self.mode == Mode::LabelWindowed { self.window } else { 0 };
        let gru = 2 * 3 * (d * h + h * h + h);
        let fc = (2 * h + self.feature_width()) * m + m;
        let crf = m * m + 2 * m;
        ParamCounts {
            embeddings,
            label_scaling,
            window,
            gru,
            fc,
            crf,
            total: embeddings + label_scaling + window + gru + fc + crf,
        }
    }
}

/// Squared-norm penalty on the label scales, optionally on the window weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty {
    pub l2: f64,
    pub include_window: bool,
}

impl Penalty {
    pub const NONE: Penalty = Penalty {
        l2: 0.0,
        include_window: false,
    };

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Penalty {
            l2: cfg.l2_reg,
            include_window: cfg.l2_include_window,
        }
    }

    fn penalized<'a>(&self, p: &'a ModelParams) -> Vec<&'a Array1<f64>> {
        let mut out = Vec::new();
        if let Some(l) = &p.label {
            out.push(&l.w1);
            out.push(&l.w2);
        }
        if self.include_window {
            out.extend(p.window.as_ref());
        }
        out
    }

    pub fn value(&self, p: &ModelParams) -> f64 {
        self.l2 * self.penalized(p).iter().map(|v| v.dot(*v)).sum::<f64>()
    }

    fn add_gradient(&self, p: &ModelParams, g: &mut ModelParams) {
        if self.l2 == 0.0 {
            return;
        }
        if let (Some(l), Some(gl)) = (&p.label, &mut g.label) {
            gl.w1.scaled_add(2.0 * self.l2, &l.w1);
            gl.w2.scaled_add(2.0 * self.l2, &l.w2);
        }
        if self.include_window {
            if let (Some(w), Some(gw)) = (&p.window, &mut g.window) {
                gw.scaled_add(2.0 * self.l2, w);
            }
        }
    }
}

/// Labeled utterances padded to a common length. Positions at or beyond an
/// utterance's length are never read, so they add nothing to the loss or
/// the gradients.
#[derive(Debug, Clone)]
pub struct Batch {
    pub words: Array2<usize>,
    pub labels: Array2<usize>,
    pub lengths: Vec<usize>,
}

impl Batch {
    pub fn new(utterances: &[&Utterance], pad_word: usize) -> Result<Batch> {
        let width = utterances.iter().map(|u| u.len()).max().unwrap_or(0);
        let mut words = Array2::from_elem((utterances.len(), width), pad_word);
        let mut labels = Array2::zeros((utterances.len(), width));
        for (i, u) in utterances.iter().enumerate() {
            let gold = u.labels.as_ref().ok_or(Error::Unlabeled(i))?;
            for (t, (&w, &l)) in u.words.iter().zip(gold).enumerate() {
                words[[i, t]] = w;
                labels[[i, t]] = l;
            }
        }
        Ok(Batch {
            words,
            labels,
            lengths: utterances.iter().map(|u| u.len()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn words(&self, i: usize) -> &[usize] {
        &self.words.row(i).to_slice().expect("batch rows are contiguous")[..self.lengths[i]]
    }

    pub fn labels(&self, i: usize) -> &[usize] {
        &self.labels.row(i).to_slice().expect("batch rows are contiguous")[..self.lengths[i]]
    }
}

struct DistanceTape {
    plain: PlainDistances,
    windowed: Option<WindowedDistances>,
}

struct UtteranceTape {
    x: Array2<f64>,
    gru: BiGruTape,
    dist: Option<DistanceTape>,
    fc: DenseTape,
    emissions: Array2<f64>,
}

/// Gradients of one utterance, except the sparse embedding rows and the
/// label-embedding gradient, which are reduced separately.
struct UtteranceGrad {
    loss: f64,
    d_rows: Array2<f64>,
    d_label_emb: Option<Array2<f64>>,
    window: Option<Array1<f64>>,
    gru: BiGru,
    fc: Dense,
    crf: CrfParams,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub shape: ModelShape,
    pub loss: LossKind,
    pub params: ModelParams,
    cooc: Option<Array2<f64>>,
}

impl Model {
    /// Random initialization: Glorot weights, zero biases, N(0, 0.1²)
    /// embeddings, unit label scales, U(0, 0.1) window weights, zero CRF scores.
    pub fn init<R: Rng>(shape: ModelShape, loss: LossKind, cooc: Option<&CooccurrenceMatrix>, rng: &mut R) -> Result<Model> {
        let (n, m, d, h) = (shape.num_words, shape.num_labels, shape.embed_dim, shape.gru_units);
        let normal = Normal::new(0.0, 0.1).expect("valid normal");
        let embeddings = Array2::from_shape_fn((n, d), |_| normal.sample(rng));
        let gru = BiGru::init(d, h, rng);
        let fc = Dense::init(2 * h + shape.feature_width(), m, rng);
        let window = (shape.mode == Mode::LabelWindowed)
            .then(|| Array1::from_shape_fn(shape.window, |_| rng.random_range(0.0..0.1)));
        let params = ModelParams {
            embeddings,
            label: shape.mode.uses_labels().then(|| LabelScaling::ones(m, n)),
            window,
            gru,
            fc,
            crf: CrfParams::zeros(m),
        };
        Model::from_params(shape, loss, params, cooc)
    }

    /// Wraps existing parameters, checking them against `shape`.
    pub fn from_params(
        shape: ModelShape,
        loss: LossKind,
        params: ModelParams,
        cooc: Option<&CooccurrenceMatrix>,
    ) -> Result<Model> {
        if shape.window.is_multiple_of(2) || shape.pool_stride == 0 {
            return Err(Error::Config(format!(
                "window must be odd and stride positive (window {}, stride {})",
                shape.window, shape.pool_stride
            )));
        }
        let cooc = if shape.mode.uses_labels() {
            let c = cooc.ok_or_else(|| Error::MissingCooccurrence(shape.mode.to_string()))?;
            let v = c.values()?;
            if v.dim() != (shape.num_labels, shape.num_words) {
                return Err(Error::Shape(format!(
                    "co-occurrence matrix is {:?}, model expects {}×{}",
                    v.dim(),
                    shape.num_labels,
                    shape.num_words
                )));
            }
            Some(v.clone())
        } else {
            None
        };
        let model = Model {
            shape,
            loss,
            params,
            cooc,
        };
        let expected = shape.param_counts().total;
        if model.params.num_params() != expected {
            return Err(Error::Shape(format!(
                "parameters hold {} scalars, shape implies {expected}",
                model.params.num_params()
            )));
        }
        Ok(model)
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// Row-normalized co-occurrence values in label-embedding modes.
    pub fn cooccurrence(&self) -> Option<&Array2<f64>> {
        self.cooc.as_ref()
    }

    fn label_embeddings_of(&self, p: &ModelParams) -> Result<Option<(Array2<f64>, LabelEmbeddingTape)>> {
        match (&self.cooc, &p.label) {
            (Some(c), Some(scale)) => Ok(Some(label_embeddings(p.embeddings.view(), c.view(), scale)?)),
            _ => Ok(None),
        }
    }

    /// Current label embeddings (`m × d`), or `None` for the baseline.
    pub fn label_embeddings(&self) -> Result<Option<Array2<f64>>> {
        Ok(self.label_embeddings_of(&self.params)?.map(|(e, _)| e))
    }

    fn forward(
        &self,
        p: &ModelParams,
        words: &[usize],
        label_emb: Option<&Array2<f64>>,
        masks: Option<&DropoutMasks>,
    ) -> UtteranceTape {
        let x = p.embeddings.select(Axis(0), words);
        let (hidden, gru) = p.gru.forward(x.view(), masks);
        let (features, dist) = match label_emb {
            Some(el) => {
                let plain = plain_distances(x.view(), el.view());
                let windowed = p
                    .window
                    .as_ref()
                    .map(|w| windowed_distances(plain.values.view(), w.view(), self.shape.pool_stride));
                let f = windowed.as_ref().map_or_else(|| plain.values.clone(), |w| w.values.clone());
                (concatenate![Axis(1), hidden, f], Some(DistanceTape { plain, windowed }))
            }
            None => (hidden, None),
        };
        let (emissions, fc) = p.fc.forward(features.view(), Activation::None);
        UtteranceTape {
            x,
            gru,
            dist,
            fc,
            emissions,
        }
    }

    fn utterance_loss(&self, p: &ModelParams, emissions: ArrayView2<f64>, gold: &[usize]) -> Result<(f64, Array2<f64>, Option<CrfParams>)> {
        match self.loss {
            LossKind::Crf => {
                let (nll, d_em, g) = crf::nll_with_grad(emissions, gold, &p.crf)?;
                Ok((nll, d_em, Some(g)))
            }
            LossKind::TokenSoftmax => {
                let (nll, d_em) = crf::token_softmax_with_grad(emissions, gold)?;
                Ok((nll, d_em, None))
            }
        }
    }

    fn utterance_grad(
        &self,
        p: &ModelParams,
        words: &[usize],
        gold: &[usize],
        label_emb: Option<&Array2<f64>>,
        masks: Option<&DropoutMasks>,
    ) -> Result<UtteranceGrad> {
        let tape = self.forward(p, words, label_emb, masks);
        let (loss, d_em, crf_grad) = self.utterance_loss(p, tape.emissions.view(), gold)?;
        let m = self.shape.num_labels;
        let mut fc = Dense::zeros(p.fc.weight.nrows(), m);
        let d_features = p.fc.backward(&tape.fc, d_em.view(), &mut fc);
        let two_h = 2 * self.shape.gru_units;
        let d_hidden = d_features.slice(s![.., ..two_h]);
        let mut gru = BiGru::zeros(self.shape.embed_dim, self.shape.gru_units);
        let mut d_rows = p.gru.backward(&tape.gru, d_hidden, &mut gru);

        let mut window = None;
        let mut d_label_emb = None;
        if let (Some(dist), Some(el)) = (&tape.dist, label_emb) {
            let d_feat = d_features.slice(s![.., two_h..]);
            let d_plain = match (&dist.windowed, &p.window) {
                (Some(wd), Some(w)) => {
                    let (d_plain, d_w) = windowed_distances_backward(wd, dist.plain.values.view(), w.view(), d_feat);
                    window = Some(d_w);
                    d_plain
                }
                _ => d_feat.to_owned(),
            };
            let (d_x, d_el) = plain_distances_backward(&dist.plain, tape.x.view(), el.view(), d_plain.view());
            d_rows += &d_x;
            d_label_emb = Some(d_el);
        }
        Ok(UtteranceGrad {
            loss,
            d_rows,
            d_label_emb,
            window,
            gru,
            fc,
            crf: crf_grad.unwrap_or_else(|| CrfParams::zeros(m)),
        })
    }

    fn objective_with_grad(
        &self,
        p: &ModelParams,
        batch: &Batch,
        masks: Option<&[DropoutMasks]>,
        penalty: Penalty,
    ) -> Result<(f64, ModelParams)> {
        if batch.is_empty() {
            return Err(Error::EmptyCorpus("batch".into()));
        }
        let le = self.label_embeddings_of(p)?;
        let el = le.as_ref().map(|(e, _)| e);
        let per_utt: Vec<UtteranceGrad> = (0..batch.len())
            .into_par_iter()
            .map(|i| self.utterance_grad(p, batch.words(i), batch.labels(i), el, masks.map(|m| &m[i])))
            .collect::<Result<_>>()?;

        let mut grads = p.zeros_like();
        let mut total = 0.0;
        let mut d_label_emb: Option<Array2<f64>> = None;
        for (i, u) in per_utt.iter().enumerate() {
            total += u.loss;
            for (t, &w) in batch.words(i).iter().enumerate() {
                let mut row = grads.embeddings.row_mut(w);
                row += &u.d_rows.row(t);
            }
            if let (Some(g), Some(d)) = (&mut grads.window, &u.window) {
                *g += d;
            }
            grads.gru.add_scaled(&u.gru, 1.0);
            grads.fc.add_scaled(&u.fc, 1.0);
            grads.crf.add_scaled(&u.crf, 1.0);
            if let Some(d) = &u.d_label_emb {
                match &mut d_label_emb {
                    Some(acc) => *acc += d,
                    None => d_label_emb = Some(d.clone()),
                }
            }
        }
        if let (Some((_, tape)), Some(d_el), Some(cooc), Some(scale)) = (&le, &d_label_emb, &self.cooc, &p.label) {
            let mut d_scale = LabelScaling::zeros(scale.w1.len(), scale.w2.len());
            label_embeddings_backward(
                tape,
                p.embeddings.view(),
                cooc.view(),
                scale,
                d_el.view(),
                &mut grads.embeddings,
                &mut d_scale,
            );
            grads.label = Some(d_scale);
        }
        let inv = 1.0 / batch.len() as f64;
        for t in grads.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= inv);
        }
        penalty.add_gradient(p, &mut grads);
        Ok((total * inv + penalty.value(p), grads))
    }

    fn objective(&self, p: &ModelParams, batch: &Batch, masks: Option<&[DropoutMasks]>, penalty: Penalty) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyCorpus("batch".into()));
        }
        let le = self.label_embeddings_of(p)?;
        let el = le.as_ref().map(|(e, _)| e);
        let losses: Vec<f64> = (0..batch.len())
            .into_par_iter()
            .map(|i| {
                let tape = self.forward(p, batch.words(i), el, masks.map(|m| &m[i]));
                match self.loss {
                    LossKind::Crf => crf::sequence_nll(tape.emissions.view(), batch.labels(i), &p.crf),
                    LossKind::TokenSoftmax => {
                        crf::token_softmax_with_grad(tape.emissions.view(), batch.labels(i)).map(|r| r.0)
                    }
                }
            })
            .collect::<Result<_>>()?;
        Ok(losses.iter().sum::<f64>() / batch.len() as f64 + penalty.value(p))
    }

    /// Mean loss over the batch plus the penalty, and its gradient.
    pub fn loss_and_grad(&self, batch: &Batch, masks: Option<&[DropoutMasks]>, penalty: Penalty) -> Result<(f64, ModelParams)> {
        self.objective_with_grad(&self.params, batch, masks, penalty)
    }

    /// Mean loss over the batch plus the penalty.
    pub fn loss(&self, batch: &Batch, masks: Option<&[DropoutMasks]>, penalty: Penalty) -> Result<f64> {
        self.objective(&self.params, batch, masks, penalty)
    }

    /// Loss of `batch` evaluated at `params` instead of the model's own.
    pub fn loss_at(&self, params: &ModelParams, batch: &Batch, masks: Option<&[DropoutMasks]>, penalty: Penalty) -> Result<f64> {
        self.objective(params, batch, masks, penalty)
    }

    /// Pre-CRF scores (`k × m`) for each word sequence, without dropout.
    pub fn emissions(&self, utterances: &[&[usize]]) -> Result<Vec<Array2<f64>>> {
        let le = self.label_embeddings()?;
        Ok(utterances
            .par_iter()
            .map(|words| self.forward(&self.params, words, le.as_ref(), None).emissions)
            .collect())
    }

    /// Decoded label ids: Viterbi under the CRF loss, per-token argmax otherwise.
    pub fn predict(&self, utterances: &[&[usize]]) -> Result<Vec<Vec<usize>>> {
        let em = self.emissions(utterances)?;
        Ok(em
            .par_iter()
            .map(|e| match self.loss {
                LossKind::Crf => crf::viterbi(e.view(), &self.params.crf).0,
                LossKind::TokenSoftmax => crf::argmax_decode(e.view()),
            })
            .collect())
    }

    pub fn predict_utterances(&self, utterances: &[Utterance]) -> Result<Vec<Vec<usize>>> {
        let words: Vec<&[usize]> = utterances.iter().map(|u| u.words.as_slice()).collect();
        self.predict(&words)
    }
}
