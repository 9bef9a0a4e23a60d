//! Word- and utterance-level error counts, with or without BIO prefixes,
//! and two-system comparisons.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chunks::{conll_f1, Prf};
use crate::corpus::{BioTag, Corpus};
use crate::error::{Error, Result};

/// A small English list used when no stopword file is supplied. Per-word
/// tables on other languages need a matching list.
pub const DEFAULT_STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "be", "by", "for", "from", "i", "in", "is", "it", "me", "my", "of", "on", "or",
    "please", "the", "to", "want", "what", "with", "would", "you",
];

#[derive(Debug, Clone, Default)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    pub fn none() -> Self {
        Stopwords(HashSet::new())
    }

    pub fn default_list() -> Self {
        DEFAULT_STOPWORDS.iter().copied().collect()
    }

    /// One word per line; blank lines and lines starting with `#` are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<'a> FromIterator<&'a str> for Stopwords {
    fn from_iter<T: IntoIterator<Item = &'a str>>(iter: T) -> Self {
        Stopwords(iter.into_iter().map(str::to_string).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordErrors {
    pub word: String,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub strip_bio: bool,
    pub word_errors: usize,
    pub utterance_errors: usize,
    /// Indices of utterances with at least one word error.
    pub erroneous: BTreeSet<usize>,
    /// Non-stopword error counts, most frequent first, ties by word.
    pub per_word: Vec<WordErrors>,
}

fn label_matches(gold: &BioTag, pred: &BioTag, strip_bio: bool) -> bool {
    if strip_bio {
        gold.stripped() == pred.stripped()
    } else {
        gold == pred
    }
}

fn aligned_gold<'a, P: AsRef<[BioTag]>>(gold: &'a Corpus, predicted: &[P]) -> Result<Vec<&'a [BioTag]>> {
    let gold_labels = gold.gold()?;
    if gold_labels.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: gold_labels.len(),
            actual: predicted.len(),
        });
    }
    for (g, p) in gold_labels.iter().zip(predicted) {
        if g.len() != p.as_ref().len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                actual: p.as_ref().len(),
            });
        }
    }
    Ok(gold_labels)
}

fn sorted_table(counts: BTreeMap<&str, usize>) -> Vec<WordErrors> {
    let mut table: Vec<WordErrors> = counts
        .into_iter()
        .map(|(word, errors)| WordErrors {
            word: word.to_string(),
            errors,
        })
        .collect();
    table.sort_by(|a, b| b.errors.cmp(&a.errors).then_with(|| a.word.cmp(&b.word)));
    table
}

pub fn error_breakdown<P: AsRef<[BioTag]>>(
    gold: &Corpus,
    predicted: &[P],
    strip_bio: bool,
    stopwords: &Stopwords,
) -> Result<ErrorCounts> {
    let gold_labels = aligned_gold(gold, predicted)?;
    let mut word_errors = 0;
    let mut erroneous = BTreeSet::new();
    let mut per_word: BTreeMap<&str, usize> = BTreeMap::new();
    for (u, (g, p)) in gold_labels.iter().zip(predicted).enumerate() {
        let words = &gold.utterances[u].words;
        for (i, (gt, pt)) in g.iter().zip(p.as_ref()).enumerate() {
            if label_matches(gt, pt, strip_bio) {
                continue;
            }
            word_errors += 1;
            erroneous.insert(u);
            if !stopwords.contains(&words[i]) {
                *per_word.entry(&words[i]).or_default() += 1;
            }
        }
    }
    Ok(ErrorCounts {
        strip_bio,
        word_errors,
        utterance_errors: erroneous.len(),
        erroneous,
        per_word: sorted_table(per_word),
    })
}

/// Chunk scores plus error counts with and without BIO prefixes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scores: Prf,
    pub with_bio: ErrorCounts,
    pub without_bio: ErrorCounts,
}

pub fn evaluate<P: AsRef<[BioTag]>>(gold: &Corpus, predicted: &[P], stopwords: &Stopwords) -> Result<EvalReport> {
    let gold_labels = aligned_gold(gold, predicted)?;
    Ok(EvalReport {
        scores: conll_f1(&gold_labels, predicted)?,
        with_bio: error_breakdown(gold, predicted, false, stopwords)?,
        without_bio: error_breakdown(gold, predicted, true, stopwords)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordDifferential {
    pub word: String,
    pub errors_a: usize,
    pub errors_b: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub strip_bio: bool,
    pub total_a: usize,
    pub total_b: usize,
    pub shared: BTreeSet<usize>,
    pub unique_a: BTreeSet<usize>,
    pub unique_b: BTreeSet<usize>,
    /// Words where the two systems' error counts differ, largest gap first.
    pub per_word: Vec<WordDifferential>,
}

pub fn compare_systems<A: AsRef<[BioTag]>, B: AsRef<[BioTag]>>(
    gold: &Corpus,
    system_a: &[A],
    system_b: &[B],
    strip_bio: bool,
    stopwords: &Stopwords,
) -> Result<Comparison> {
    let a = error_breakdown(gold, system_a, strip_bio, stopwords)?;
    let b = error_breakdown(gold, system_b, strip_bio, stopwords)?;
    let mut words: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for w in &a.per_word {
        words.entry(&w.word).or_default().0 = w.errors;
    }
    for w in &b.per_word {
        words.entry(&w.word).or_default().1 = w.errors;
    }
    let mut per_word: Vec<WordDifferential> = words
        .into_iter()
        .filter(|(_, (x, y))| x != y)
        .map(|(word, (errors_a, errors_b))| WordDifferential {
            word: word.to_string(),
            errors_a,
            errors_b,
        })
        .collect();
    per_word.sort_by(|x, y| {
        y.errors_a
            .abs_diff(y.errors_b)
            .cmp(&x.errors_a.abs_diff(x.errors_b))
            .then_with(|| x.word.cmp(&y.word))
    });
    Ok(Comparison {
        strip_bio,
        total_a: a.utterance_errors,
        total_b: b.utterance_errors,
        shared: a.erroneous.intersection(&b.erroneous).copied().collect(),
        unique_a: a.erroneous.difference(&b.erroneous).copied().collect(),
        unique_b: b.erroneous.difference(&a.erroneous).copied().collect(),
        per_word,
    })
}
