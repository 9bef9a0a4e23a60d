//! Label-by-word co-occurrence statistics.
//!
//! Raw counts record how often each word carries each label in the training
//! data. [`CooccurrenceMatrix::finalize`] applies add-one smoothing and
//! normalizes every row to sum to one.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::corpus::{Corpus, Vocab};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceMatrix {
    /// `None` when the matrix was loaded from a sidecar file.
    raw_counts: Option<Array2<u64>>,
    /// Smoothed, row-normalized values; `None` until finalized.
    values: Option<Array2<f64>>,
    num_labels: usize,
    num_words: usize,
}

impl CooccurrenceMatrix {
    pub fn from_raw(raw_counts: Array2<u64>) -> Self {
        let (num_labels, num_words) = raw_counts.dim();
        CooccurrenceMatrix {
            raw_counts: Some(raw_counts),
            values: None,
            num_labels,
            num_words,
        }
    }

    /// Counts (label, word) pairs over every position of `train`.
    ///
    /// UNK and PAD columns exist but stay at zero, so they end up uniform
    /// after smoothing.
    pub fn count(train: &Corpus, vocab: &Vocab) -> Result<Self> {
        let mut raw = Array2::<u64>::zeros((vocab.num_labels(), vocab.num_words()));
        for (i, utt) in train.utterances.iter().enumerate() {
            let labels = utt.labels.as_ref().ok_or(Error::Unlabeled(i))?;
            for (word, tag) in utt.words.iter().zip(labels) {
                let w = vocab.encode_word(word);
                let l = vocab
                    .label_id(tag)
                    .ok_or_else(|| Error::UnknownLabel(tag.to_string()))?;
                raw[[l, w]] += 1;
            }
        }
        Ok(Self::from_raw(raw))
    }

    /// Adds counts from another partial matrix of the same shape.
    pub fn merge(&mut self, other: &CooccurrenceMatrix) -> Result<()> {
        if self.values.is_some() {
            return Err(Error::AlreadyFinalized);
        }
        match (&mut self.raw_counts, &other.raw_counts) {
            (Some(a), Some(b)) if a.dim() == b.dim() => {
                *a += b;
                Ok(())
            }
            (Some(a), Some(b)) => Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim()))),
            _ => Err(Error::Shape("merge requires raw counts on both sides".into())),
        }
    }

    /// Add-one smoothing followed by row normalization. Callable exactly once.
    pub fn finalize(&mut self) -> Result<()> {
        if self.values.is_some() {
            return Err(Error::AlreadyFinalized);
        }
        let raw = self.raw_counts.as_ref().expect("unfinalized matrix always has raw counts");
        let mut values = raw.mapv(|c| c as f64 + 1.0);
        for mut row in values.axis_iter_mut(Axis(0)) {
            let total: f64 = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        self.values = Some(values);
        Ok(())
    }

    pub fn is_finalized(&self) -> bool {
        self.values.is_some()
    }

    pub fn values(&self) -> Result<&Array2<f64>> {
        self.values.as_ref().ok_or(Error::NotFinalized)
    }

    pub fn raw_counts(&self) -> Option<&Array2<u64>> {
        self.raw_counts.as_ref()
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn num_words(&self) -> usize {
        self.num_words
    }

    /// Writes `m n` followed by one row of values per line. Values use the
    /// shortest decimal form that parses back to the same `f64`.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let values = self.values()?;
        let io = |e| Error::io("<co-occurrence>", e);
        writeln!(w, "{} {}", self.num_labels, self.num_words).map_err(io)?;
        for row in values.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(" ")).map_err(io)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            column: 1,
            message,
        };
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| err(1, "missing header".into()))?
            .map_err(|e| Error::io(source_name, e))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(1, format!("bad dimension `{t}`"))))
            .collect::<Result<_>>()?;
        let [m, n] = dims[..] else {
            return Err(err(1, "header must be `m n`".into()));
        };
        let mut values = Array2::<f64>::zeros((m, n));
        for j in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| err(j + 2, "missing row".into()))?
                .map_err(|e| Error::io(source_name, e))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| err(j + 2, format!("bad value `{t}`"))))
                .collect::<Result<_>>()?;
            if row.len() != n {
                return Err(err(j + 2, format!("expected {n} values, found {}", row.len())));
            }
            values.row_mut(j).assign(&ndarray::Array1::from(row));
        }
        Ok(CooccurrenceMatrix {
            raw_counts: None,
            values: Some(values),
            num_labels: m,
            num_words: n,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), &path.display().to_string())
    }
}
