//! Chunk extraction and chunk-level precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::corpus::{BioTag, Prefix};
use crate::error::{Error, Result};

/// A labeled span, `start..=end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Chunk {
    pub concept: String,
    pub start: usize,
    pub end: usize,
}

/// Maximal `B-x I-x …` runs. An `I-x` that does not continue an open `x`
/// chunk starts a new one, as the CoNLL scorer does.
pub fn extract_chunks(labels: &[BioTag]) -> Vec<Chunk> {
    let mut chunks = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, tag) in labels.iter().enumerate() {
        let continues = tag.prefix == Prefix::I && open.is_some_and(|(c, _)| c == tag.concept);
        if continues {
            continue;
        }
        if let Some((concept, start)) = open.take() {
            chunks.push(Chunk {
                concept: concept.to_string(),
                start,
                end: i - 1,
            });
        }
        if tag.prefix != Prefix::O {
            open = Some((&tag.concept, i));
        }
    }
    if let Some((concept, start)) = open {
        chunks.push(Chunk {
            concept: concept.to_string(),
            start,
            end: labels.len() - 1,
        });
    }
    chunks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub correct: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl Prf {
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            correct,
            predicted,
            gold,
        }
    }
}

/// Number of chunks in `predicted` that match a gold chunk exactly.
fn matching(gold: &[Chunk], predicted: &[Chunk]) -> usize {
    predicted.iter().filter(|c| gold.contains(c)).count()
}

/// Chunk-level scores over aligned utterances; a chunk is correct only on an
/// exact concept and span match.
pub fn conll_f1<G: AsRef<[BioTag]>, P: AsRef<[BioTag]>>(gold: &[G], predicted: &[P]) -> Result<Prf> {
    if gold.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: gold.len(),
            actual: predicted.len(),
        });
    }
    let (mut correct, mut n_pred, mut n_gold) = (0, 0, 0);
    for (g, p) in gold.iter().zip(predicted) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g.len() != p.len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                actual: p.len(),
            });
        }
        let gc = extract_chunks(g);
        let pc = extract_chunks(p);
        correct += matching(&gc, &pc);
        n_pred += pc.len();
        n_gold += gc.len();
    }
    Ok(Prf::from_counts(correct, n_pred, n_gold))
}

#[cfg(test)]
pub(crate) fn tags(s: &str) -> Vec<BioTag> {
    s.split_whitespace().map(|t| t.parse().unwrap()).collect()
}
