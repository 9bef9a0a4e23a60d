//! Per-word profiles of the FC layer's output and their paired comparison.
//!
//! For every test token the pre-CRF score vector (length m) is
//! l2-normalized and added into the row of its word; each row is
//! l2-normalized again at the end. Two systems are then compared word by
//! word with a signed-rank test over the m label dimensions.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::wilcoxon::{wilcoxon_signed_rank, WilcoxonResult};
use crate::corpus::Utterance;
use crate::error::{Error, Result};
use crate::trainer::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct FcProfiles {
    /// `n × m`; zero rows for words absent from the test data.
    pub matrix: Array2<f64>,
    /// Occurrences of each word in the test data.
    pub occurrences: Vec<usize>,
}

impl FcProfiles {
    /// Whether the word occurs in the test data; absent words are excluded from tests.
    pub fn present(&self, word: usize) -> bool {
        self.occurrences[word] > 0
    }
}

fn normalize_rows(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

/// Accumulates normalized FC outputs per word over `test`.
pub fn accumulate_fc_profiles(model: &Model, test: &[Utterance]) -> Result<FcProfiles> {
    let words: Vec<&[usize]> = test.iter().map(|u| u.words.as_slice()).collect();
    let emissions = model.emissions(&words)?;
    let (n, m) = (model.shape.num_words, model.shape.num_labels);
    let mut matrix = Array2::zeros((n, m));
    let mut occurrences = vec![0; n];
    for (utt, mut em) in words.iter().zip(emissions) {
        normalize_rows(&mut em);
        for (&w, row) in utt.iter().zip(em.axis_iter(Axis(0))) {
            let mut acc = matrix.row_mut(w);
            acc += &row;
            occurrences[w] += 1;
        }
    }
    normalize_rows(&mut matrix);
    Ok(FcProfiles { matrix, occurrences })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTest {
    pub word: usize,
    pub result: WilcoxonResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileComparison {
    pub tests: Vec<WordTest>,
    /// Words whose profiles differ at the 0.05 level.
    pub significant: usize,
    /// Words absent from the test data in either system.
    pub excluded: usize,
}

/// Paired signed-rank test of system `a` against `b` for every word present in both.
pub fn compare_profiles(a: &FcProfiles, b: &FcProfiles) -> Result<ProfileComparison> {
    if a.matrix.dim() != b.matrix.dim() {
        return Err(Error::Shape(format!(
            "profile matrices differ: {:?} vs {:?}",
            a.matrix.dim(),
            b.matrix.dim()
        )));
    }
    let mut tests = Vec::new();
    let mut excluded = 0;
    for w in 0..a.matrix.nrows() {
        if !(a.present(w) && b.present(w)) {
            excluded += 1;
            continue;
        }
        let ra = a.matrix.row(w).to_vec();
        let rb = b.matrix.row(w).to_vec();
        tests.push(WordTest {
            word: w,
            result: wilcoxon_signed_rank(&ra, &rb)?,
        });
    }
    let significant = tests.iter().filter(|t| t.result.significant()).count();
    Ok(ProfileComparison {
        tests,
        significant,
        excluded,
    })
}
