//! Label embeddings derived from word embeddings, and word–label distance
//! features.
//!
//! Label embeddings are `E^l = (w1 ∘ M_c)(w2 ∘ E^w)` where `(v ∘ M)` scales
//! row `i` of `M` by `v[i]`. Each label vector is thus a co-occurrence
//! weighted combination of word vectors, with one learned scale per label
//! and one per word.
//!
//! Distances are cosine distances `1 − cos(word, label)`. The windowed
//! variant mixes the distance column of a label over a `2q+1` neighbourhood
//! of each position with learned weights, applies ReLU, then max-pools
//! along the label axis.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Per-label (`w1`) and per-word (`w2`) scales.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelScaling {
    pub w1: Array1<f64>,
    pub w2: Array1<f64>,
}

crate::impl_parameters!(LabelScaling { w1, w2 });

impl LabelScaling {
    pub fn ones(num_labels: usize, num_words: usize) -> Self {
        LabelScaling {
            w1: Array1::ones(num_labels),
            w2: Array1::ones(num_words),
        }
    }

    pub fn zeros(num_labels: usize, num_words: usize) -> Self {
        LabelScaling {
            w1: Array1::zeros(num_labels),
            w2: Array1::zeros(num_words),
        }
    }
}

/// Intermediate product kept for the backward pass of [`label_embeddings`].
pub struct LabelEmbeddingTape {
    /// `M_c (w2 ∘ E^w)`, before the `w1` row scaling.
    unscaled: Array2<f64>,
}

pub fn label_embeddings(
    words: ArrayView2<f64>,
    cooc: ArrayView2<f64>,
    scale: &LabelScaling,
) -> Result<(Array2<f64>, LabelEmbeddingTape)> {
    let (n, _) = words.dim();
    let (m, n2) = cooc.dim();
    if n != n2 || scale.w1.len() != m || scale.w2.len() != n {
        return Err(Error::Shape(format!(
            "M_c {m}×{n2}, E^w {n}×{}, w1 {}, w2 {}",
            words.ncols(),
            scale.w1.len(),
            scale.w2.len()
        )));
    }
    let scaled_words = &words * &scale.w2.view().insert_axis(Axis(1));
    let unscaled = cooc.dot(&scaled_words);
    let out = &unscaled * &scale.w1.view().insert_axis(Axis(1));
    Ok((out, LabelEmbeddingTape { unscaled }))
}

/// Backward of [`label_embeddings`]: accumulates into `d_words` and `d_scale`.
pub fn label_embeddings_backward(
    tape: &LabelEmbeddingTape,
    words: ArrayView2<f64>,
    cooc: ArrayView2<f64>,
    scale: &LabelScaling,
    d_out: ArrayView2<f64>,
    d_words: &mut Array2<f64>,
    d_scale: &mut LabelScaling,
) {
    d_scale.w1 += &(&d_out * &tape.unscaled).sum_axis(Axis(1));
    let d_unscaled = &d_out * &scale.w1.view().insert_axis(Axis(1));
    let d_scaled_words = cooc.t().dot(&d_unscaled);
    d_scale.w2 += &(&d_scaled_words * &words).sum_axis(Axis(1));
    *d_words += &(&d_scaled_words * &scale.w2.view().insert_axis(Axis(1)));
}

/// Cosine distance features for one utterance.
pub struct PlainDistances {
    /// `k × m`, entries in `[0, 2]`.
    pub values: Array2<f64>,
    /// Entries forced to 1.0 because a word or label vector had zero norm.
    pub zero_norm_entries: usize,
    cos: Array2<f64>,
    word_norms: Array1<f64>,
    label_norms: Array1<f64>,
}

/// `D[i, j] = 1 − cos(words[i], labels[j])`. Pairs involving a zero vector get 1.0.
pub fn plain_distances(words: ArrayView2<f64>, labels: ArrayView2<f64>) -> PlainDistances {
    let norm = |v: ArrayView1<f64>| v.dot(&v).sqrt();
    let word_norms: Array1<f64> = words.rows().into_iter().map(norm).collect();
    let label_norms: Array1<f64> = labels.rows().into_iter().map(norm).collect();
    let dots = words.dot(&labels.t());
    let mut cos = Array2::zeros(dots.dim());
    let mut zero_norm_entries = 0;
    for ((i, j), &d) in dots.indexed_iter() {
        let denom = word_norms[i] * label_norms[j];
        if denom > 0.0 {
            cos[[i, j]] = d / denom;
        } else {
            zero_norm_entries += 1;
        }
    }
    PlainDistances {
        values: cos.mapv(|c| 1.0 - c),
        zero_norm_entries,
        cos,
        word_norms,
        label_norms,
    }
}

/// Returns `(d_words, d_labels)` for an upstream gradient on the distances.
pub fn plain_distances_backward(
    fwd: &PlainDistances,
    words: ArrayView2<f64>,
    labels: ArrayView2<f64>,
    d_dist: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (k, m) = d_dist.dim();
    // g = ∂L/∂cos on valid entries, scaled by 1 / (|a||b|).
    let mut g_scaled = Array2::<f64>::zeros((k, m));
    let mut word_self = Array1::<f64>::zeros(k);
    let mut label_self = Array1::<f64>::zeros(m);
    for i in 0..k {
        for j in 0..m {
            let denom = fwd.word_norms[i] * fwd.label_norms[j];
            if denom > 0.0 {
                let g = -d_dist[[i, j]];
                g_scaled[[i, j]] = g / denom;
                let gc = g * fwd.cos[[i, j]];
                word_self[i] += gc / (fwd.word_norms[i] * fwd.word_norms[i]);
                label_self[j] += gc / (fwd.label_norms[j] * fwd.label_norms[j]);
            }
        }
    }
    let d_words = g_scaled.dot(&labels) - &(&words * &word_self.view().insert_axis(Axis(1)));
    let d_labels = g_scaled.t().dot(&words) - &(&labels * &label_self.view().insert_axis(Axis(1)));
    (d_words, d_labels)
}

/// Distance used outside the utterance when gathering a window.
pub const WINDOW_PAD_DISTANCE: f64 = 1.0;

pub fn pooled_width(num_labels: usize, stride: usize) -> usize {
    num_labels.div_ceil(stride)
}

pub struct WindowedDistances {
    /// `k × ceil(m / stride)`, non-negative.
    pub values: Array2<f64>,
    pre_activation: Array2<f64>,
    argmax: Array2<usize>,
    stride: usize,
}

fn padded(plain: ArrayView2<f64>, p: isize, j: usize) -> f64 {
    if p < 0 || p as usize >= plain.nrows() {
        WINDOW_PAD_DISTANCE
    } else {
        plain[[p as usize, j]]
    }
}

/// Window mixing `Σ_o weights[o] · D[i + o − q, j]`, ReLU, then non-overlapping
/// max pooling of width `stride` along labels (last group may be partial).
pub fn windowed_distances(plain: ArrayView2<f64>, weights: ArrayView1<f64>, stride: usize) -> WindowedDistances {
    assert!(weights.len() % 2 == 1, "window weights must have odd length");
    assert!(stride >= 1, "pool stride must be positive");
    let (k, m) = plain.dim();
    let q = (weights.len() / 2) as isize;
    let mut pre = Array2::zeros((k, m));
    for i in 0..k {
        for j in 0..m {
            pre[[i, j]] = weights
                .iter()
                .enumerate()
                .map(|(o, &w)| w * padded(plain, i as isize + o as isize - q, j))
                .sum::<f64>();
        }
    }
    let groups = pooled_width(m, stride);
    let mut values = Array2::zeros((k, groups));
    let mut argmax = Array2::zeros((k, groups));
    for i in 0..k {
        for g in 0..groups {
            let lo = g * stride;
            let hi = (lo + stride).min(m);
            let mut best = lo;
            for j in lo + 1..hi {
                if pre[[i, j]].max(0.0) > pre[[i, best]].max(0.0) {
                    best = j;
                }
            }
            values[[i, g]] = pre[[i, best]].max(0.0);
            argmax[[i, g]] = best;
        }
    }
    WindowedDistances {
        values,
        pre_activation: pre,
        argmax,
        stride,
    }
}

/// Returns `(d_plain, d_weights)`.
pub fn windowed_distances_backward(
    fwd: &WindowedDistances,
    plain: ArrayView2<f64>,
    weights: ArrayView1<f64>,
    d_out: ArrayView2<f64>,
) -> (Array2<f64>, Array1<f64>) {
    let (k, m) = plain.dim();
    let q = (weights.len() / 2) as isize;
    let mut d_pre = Array2::<f64>::zeros((k, m));
    for ((i, g), &d) in d_out.indexed_iter() {
        let j = fwd.argmax[[i, g]];
        debug_assert!(j / fwd.stride == g);
        if fwd.pre_activation[[i, j]] > 0.0 {
            d_pre[[i, j]] += d;
        }
    }
    let mut d_plain = Array2::zeros((k, m));
    let mut d_weights = Array1::zeros(weights.len());
    for ((i, j), &d) in d_pre.indexed_iter() {
        if d == 0.0 {
            continue;
        }
        for (o, &w) in weights.iter().enumerate() {
            let p = i as isize + o as isize - q;
            d_weights[o] += d * padded(plain, p, j);
            if p >= 0 && (p as usize) < k {
                d_plain[[p as usize, j]] += d * w;
            }
        }
    }
    (d_plain, d_weights)
}

/// Loads `word v1 … vd` lines into the rows of `embeddings` for words present
/// in `word_ids`. A leading `count dim` header line is skipped. Returns the
/// number of rows filled.
pub fn load_pretrained(
    path: impl AsRef<Path>,
    word_ids: &HashMap<&str, usize>,
    embeddings: &mut Array2<f64>,
) -> Result<usize> {
    let path = path.as_ref();
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let dim = embeddings.ncols();
    let mut filled = 0;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(word) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        if idx == 0 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        if rest.len() != dim {
            return Err(Error::Parse {
                source_name: name,
                line: idx + 1,
                column: word.chars().count() + 2,
                message: format!("expected {dim} components, found {}", rest.len()),
            });
        }
        let Some(&id) = word_ids.get(word) else { continue };
        for (c, tok) in rest.iter().enumerate() {
            embeddings[[id, c]] = tok.parse().map_err(|_| Error::Parse {
                source_name: name.clone(),
                line: idx + 1,
                column: 1,
                message: format!("bad component `{tok}`"),
            })?;
        }
        filled += 1;
    }
    Ok(filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::numeric_gradient;
    use crate::neural::Parameters;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn one_hot_cooccurrence_selects_word_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let words = random(&mut rng, 4, 3);
        let mut cooc = Array2::zeros((3, 4));
        for j in 0..3 {
            cooc[[j, j]] = 1.0;
        }
        let (el, _) = label_embeddings(words.view(), cooc.view(), &LabelScaling::ones(3, 4)).unwrap();
        for j in 0..3 {
            for c in 0..3 {
                assert_eq!(el[[j, c]].to_bits(), words[[j, c]].to_bits());
            }
        }
    }

    #[test]
    fn zero_label_scale_annihilates() {
        let words = array![[1.0, 2.0], [3.0, 4.0]];
        let cooc = array![[0.5, 0.5]];
        let scale = LabelScaling {
            w1: array![0.0],
            w2: array![1.0, 1.0],
        };
        let (el, _) = label_embeddings(words.view(), cooc.view(), &scale).unwrap();
        assert!(el.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_example() {
        let cooc = array![[0.5, 0.5], [0.25, 0.75]];
        let words = array![[2.0], [4.0]];
        let scale = LabelScaling {
            w1: array![1.0, 2.0],
            w2: array![3.0, 1.0],
        };
        let (el, _) = label_embeddings(words.view(), cooc.view(), &scale).unwrap();
        let expect = array![[1.0 * (0.5 * 6.0 + 0.5 * 4.0)], [2.0 * (0.25 * 6.0 + 0.75 * 4.0)]];
        assert_eq!(el, expect);
        assert_eq!(el, array![[5.0], [9.0]]);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let r = label_embeddings(
            Array2::zeros((3, 2)).view(),
            Array2::zeros((2, 4)).view(),
            &LabelScaling::ones(2, 3),
        );
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn cosine_extremes() {
        let w = array![[1.0, 0.0]];
        let l = array![[1.0, 0.0], [0.0, 3.0], [-2.0, 0.0], [1.0, 1.0]];
        let d = plain_distances(w.view(), l.view());
        assert!(d.values[[0, 0]].abs() < 1e-15);
        assert!((d.values[[0, 1]] - 1.0).abs() < 1e-15);
        assert!((d.values[[0, 2]] - 2.0).abs() < 1e-15);
        assert!((d.values[[0, 3]] - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-15);
        assert!((d.values[[0, 3]] - 0.29289).abs() < 1e-5);
        assert_eq!(d.zero_norm_entries, 0);
    }

    #[test]
    fn zero_vectors_give_unit_distance() {
        let w = array![[0.0, 0.0], [1.0, 0.0]];
        let l = array![[1.0, 1.0], [0.0, 0.0]];
        let d = plain_distances(w.view(), l.view());
        assert_eq!(d.values, array![[1.0, 1.0], [1.0 - 1.0 / 2f64.sqrt(), 1.0]]);
        assert_eq!(d.zero_norm_entries, 3);
        let (dw, dl) = plain_distances_backward(&d, w.view(), l.view(), Array2::ones((2, 2)).view());
        assert!(dw.row(0).iter().all(|&v| v == 0.0));
        assert!(dl.row(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_windows() {
        let plain = array![[0.2, 1.5, 0.0], [0.7, 0.1, 2.0]];
        let id = windowed_distances(plain.view(), array![1.0].view(), 1);
        assert_eq!(id.values, plain);
        let one_row = array![[0.3, 1.2, 0.9, 0.0]];
        let center = windowed_distances(one_row.view(), array![0.0, 1.0, 0.0].view(), 1);
        assert_eq!(center.values, one_row);
    }

    /// Direct evaluation with explicit padding, independent of the kernel above.
    fn brute_windowed(plain: &Array2<f64>, w: &[f64], stride: usize) -> Array2<f64> {
        let (k, m) = plain.dim();
        let q = w.len() / 2;
        let mut padded = Array2::from_elem((k + 2 * q, m), 1.0);
        padded.slice_mut(ndarray::s![q..q + k, ..]).assign(plain);
        let mut relu = Array2::zeros((k, m));
        for i in 0..k {
            for j in 0..m {
                let z: f64 = (0..w.len()).map(|o| w[o] * padded[[i + o, j]]).sum();
                relu[[i, j]] = z.max(0.0);
            }
        }
        let g = m.div_ceil(stride);
        Array2::from_shape_fn((k, g), |(i, gi)| {
            (gi * stride..((gi + 1) * stride).min(m))
                .map(|j| relu[[i, j]])
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }

    #[test]
    fn three_by_four_hand_example() {
        let plain = array![[0.1, 0.4, 1.2, 0.0], [0.3, 0.2, 0.8, 1.6], [0.9, 1.1, 0.5, 0.7]];
        let w = [0.5, 1.0, 0.5];
        // Before pooling, row 0: [0.75, 1.0, 2.1, 1.3]; row 1: [0.8, 0.95, 1.65, 1.95];
        // row 2: [1.55, 1.7, 1.4, 2.0]. Rows 0 and 2 see one padded neighbour.
        let expect = array![[1.0, 2.1], [0.95, 1.95], [1.7, 2.0]];
        let got = windowed_distances(plain.view(), ArrayView1::from(&w), 2);
        for (a, b) in got.values.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(got.values, brute_windowed(&plain, &w, 2));
    }

    #[test]
    fn windowed_matches_brute_force_randomly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..30 {
            let (k, m) = (rng.random_range(1..7), rng.random_range(1..9));
            let q = rng.random_range(0..3);
            let stride = rng.random_range(1..4);
            let plain = random(&mut rng, k, m).mapv(|v| v + 1.0);
            let w: Vec<f64> = (0..2 * q + 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let got = windowed_distances(plain.view(), ArrayView1::from(&w), stride);
            assert_eq!(got.values, brute_windowed(&plain, &w, stride));
            assert!(got.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..5 {
            let (n, m, d, k) = (
                rng.random_range(2..8),
                rng.random_range(2..8),
                rng.random_range(1..8),
                rng.random_range(1..8),
            );
            let words = random(&mut rng, n, d);
            let cooc = random(&mut rng, m, n).mapv(f64::abs);
            let scale = LabelScaling {
                w1: Array1::from_shape_fn(m, |_| rng.random_range(0.5..1.5)),
                w2: Array1::from_shape_fn(n, |_| rng.random_range(0.5..1.5)),
            };
            let ids: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
            let window = Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0));
            let probe = random(&mut rng, k, pooled_width(m, 2));
            let probe_plain = random(&mut rng, k, m);

            let loss = |words: &Array2<f64>, scale: &LabelScaling, window: &Array1<f64>| {
                let (el, _) = label_embeddings(words.view(), cooc.view(), scale).unwrap();
                let x = words.select(Axis(0), &ids);
                let pd = plain_distances(x.view(), el.view());
                let wd = windowed_distances(pd.values.view(), window.view(), 2);
                (&wd.values * &probe).sum() + (&pd.values * &probe_plain).sum()
            };

            let (el, tape) = label_embeddings(words.view(), cooc.view(), &scale).unwrap();
            let x = words.select(Axis(0), &ids);
            let pd = plain_distances(x.view(), el.view());
            let wd = windowed_distances(pd.values.view(), window.view(), 2);
            let (mut d_plain, d_window) = windowed_distances_backward(&wd, pd.values.view(), window.view(), probe.view());
            d_plain += &probe_plain;
            let (dx, d_el) = plain_distances_backward(&pd, x.view(), el.view(), d_plain.view());
            let mut d_words = Array2::zeros((n, d));
            for (r, &id) in ids.iter().enumerate() {
                let mut row = d_words.row_mut(id);
                row += &dx.row(r);
            }
            let mut d_scale = LabelScaling::zeros(m, n);
            label_embeddings_backward(&tape, words.view(), cooc.view(), &scale, d_el.view(), &mut d_words, &mut d_scale);

            let check = |a: &[f64], b: &[f64]| {
                let rel = crate::neural::gradcheck::relative_error(a, b);
                assert!(rel < 1e-4, "relative error {rel}");
            };
            let mut wv = words.clone();
            check(d_words.as_slice().unwrap(), &numeric_gradient(&mut wv, |w| loss(w, &scale, &window), 1e-5)[0]);
            let mut sv = scale.clone();
            let num = numeric_gradient(&mut sv, |s| loss(&words, s, &window), 1e-5);
            for (a, b) in d_scale.tensors().iter().zip(&num) {
                check(a.data, b);
            }
            let mut wn = window.clone();
            check(d_window.as_slice().unwrap(), &numeric_gradient(&mut wn, |w| loss(&words, &scale, w), 1e-5)[0]);
        }
    }

    #[test]
    fn pooled_width_rounds_up() {
        assert_eq!(pooled_width(138, 10), 14);
        assert_eq!(pooled_width(5, 2), 3);
        assert_eq!(pooled_width(4, 4), 1);
    }

    #[test]
    fn pretrained_loader() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vec.txt");
        std::fs::write(&p, "3 2\nhello 0.5 -1\nmissing 1 1\nworld 2 3\n").unwrap();
        let ids: HashMap<&str, usize> = [("hello", 0), ("world", 1), ("other", 2)].into_iter().collect();
        let mut e = Array2::from_elem((3, 2), 9.0);
        assert_eq!(load_pretrained(&p, &ids, &mut e).unwrap(), 2);
        assert_eq!(e, array![[0.5, -1.0], [2.0, 3.0], [9.0, 9.0]]);
        std::fs::write(&p, "hello 0.5\n").unwrap();
        assert!(matches!(load_pretrained(&p, &ids, &mut e), Err(Error::Parse { line: 1, .. })));
    }

    proptest! {
        #[test]
        fn cosine_scale_invariance(
            w in prop::collection::vec(-1.0f64..1.0, 6),
            l in prop::collection::vec(-1.0f64..1.0, 6),
            c in 0.1f64..10.0,
            row in 0usize..2,
        ) {
            let words = Array2::from_shape_vec((2, 3), w).unwrap();
            let labels = Array2::from_shape_vec((2, 3), l).unwrap();
            prop_assume!(words.rows().into_iter().all(|r| r.dot(&r) > 1e-6));
            prop_assume!(labels.rows().into_iter().all(|r| r.dot(&r) > 1e-6));
            let base = plain_distances(words.view(), labels.view()).values;
            let mut ws = words.clone();
            ws.row_mut(row).mapv_inplace(|v| v * c);
            let mut ls = labels.clone();
            ls.row_mut(row).mapv_inplace(|v| v * c);
            let a = plain_distances(ws.view(), labels.view()).values;
            let b = plain_distances(words.view(), ls.view()).values;
            for ((x, y), z) in base.iter().zip(a.iter()).zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-10 && (x - z).abs() < 1e-10);
                prop_assert!((-1e-12..=2.0 + 1e-12).contains(x));
            }
        }

        #[test]
        fn label_embeddings_linear_in_words(
            x in prop::collection::vec(-1.0f64..1.0, 8),
            y in prop::collection::vec(-1.0f64..1.0, 8),
            a in -2.0f64..2.0,
            b in -2.0f64..2.0,
        ) {
            let cooc = array![[0.2, 0.3, 0.1, 0.4], [0.25, 0.25, 0.25, 0.25], [0.7, 0.1, 0.1, 0.1]];
            let scale = LabelScaling { w1: array![1.0, -0.5, 2.0], w2: array![0.3, 1.0, 1.5, -1.0] };
            let x = Array2::from_shape_vec((4, 2), x).unwrap();
            let y = Array2::from_shape_vec((4, 2), y).unwrap();
            let combo = &x * a + &y * b;
            let f = |m: &Array2<f64>| label_embeddings(m.view(), cooc.view(), &scale).unwrap().0;
            let lhs = f(&combo);
            let rhs = f(&x) * a + f(&y) * b;
            for (p, q) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
