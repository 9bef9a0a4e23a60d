//! Tagged utterances, vocabularies and the vocabulary-coverage reduction.
//!
//! Files use a two-column CoNLL layout: one `word<SEP>label` pair per line,
//! where `SEP` is a tab or a single space, and a blank line between
//! utterances. Unlabeled input (one column) is accepted when the caller
//! asks for [`LabelPolicy::Optional`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::num::NonZeroUsize;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const PAD: &str = "<pad>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Prefix {
    B,
    I,
    O,
}

/// A label in BIO surface form: `B-concept`, `I-concept` or `O`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BioTag {
    pub prefix: Prefix,
    pub concept: String,
}

impl BioTag {
    pub fn outside() -> Self {
        BioTag {
            prefix: Prefix::O,
            concept: String::new(),
        }
    }

    pub fn begin(concept: &str) -> Self {
        BioTag {
            prefix: Prefix::B,
            concept: concept.to_string(),
        }
    }

    pub fn inside(concept: &str) -> Self {
        BioTag {
            prefix: Prefix::I,
            concept: concept.to_string(),
        }
    }

    /// The concept name with the prefix removed; `O` for the outside tag.
    pub fn stripped(&self) -> &str {
        match self.prefix {
            Prefix::O => "O",
            _ => &self.concept,
        }
    }
}

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.prefix {
            Prefix::O => f.write_str("O"),
            Prefix::B => write!(f, "B-{}", self.concept),
            Prefix::I => write!(f, "I-{}", self.concept),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioParseError(pub String);

impl fmt::Display for BioParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}` is not a BIO tag (expected O, B-x or I-x)", self.0)
    }
}

impl std::error::Error for BioParseError {}

impl FromStr for BioTag {
    type Err = BioParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(BioTag::outside());
        }
        let prefix = match s.get(..2) {
            Some("B-") => Prefix::B,
            Some("I-") => Prefix::I,
            _ => return Err(BioParseError(s.to_string())),
        };
        let concept = &s[2..];
        if concept.is_empty() {
            return Err(BioParseError(s.to_string()));
        }
        Ok(BioTag {
            prefix,
            concept: concept.to_string(),
        })
    }
}

/// Positions where an `I-x` tag follows neither `B-x` nor `I-x`.
///
/// Violations are reported, never repaired.
pub fn validate_bio(labels: &[BioTag]) -> Vec<usize> {
    let mut violations = Vec::new();
    for (i, tag) in labels.iter().enumerate() {
        if tag.prefix != Prefix::I {
            continue;
        }
        let legal = i > 0 && {
            let prev = &labels[i - 1];
            prev.prefix != Prefix::O && prev.concept == tag.concept
        };
        if !legal {
            violations.push(i);
        }
    }
    violations
}

/// One utterance as read from disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedUtterance {
    pub words: Vec<String>,
    pub labels: Option<Vec<BioTag>>,
}

impl TaggedUtterance {
    pub fn new(words: Vec<String>, labels: Vec<BioTag>) -> Self {
        assert_eq!(words.len(), labels.len(), "words and labels differ in length");
        TaggedUtterance {
            words,
            labels: Some(labels),
        }
    }

    pub fn unlabeled(words: Vec<String>) -> Self {
        TaggedUtterance {
            words,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub utterances: Vec<TaggedUtterance>,
}

impl Corpus {
    pub fn new(utterances: Vec<TaggedUtterance>) -> Self {
        Corpus { utterances }
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.utterances.iter().map(TaggedUtterance::len).sum()
    }

    pub fn is_labeled(&self) -> bool {
        self.utterances.iter().all(|u| u.labels.is_some())
    }

    /// Gold label sequences; fails on the first unlabeled utterance.
    pub fn gold(&self) -> Result<Vec<&[BioTag]>> {
        self.utterances
            .iter()
            .enumerate()
            .map(|(i, u)| u.labels.as_deref().ok_or(Error::Unlabeled(i)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelPolicy {
    Required,
    Optional,
}

pub fn load_conll(path: impl AsRef<Path>, policy: LabelPolicy) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_conll(BufReader::new(file), &path.display().to_string(), policy)
}

/// Parses CoNLL text from any reader. `source_name` is used in error messages.
pub fn read_conll<R: BufRead>(reader: R, source_name: &str, policy: LabelPolicy) -> Result<Corpus> {
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        column,
        message,
    };

    let mut utterances = Vec::new();
    let mut words: Vec<String> = Vec::new();
    let mut labels: Vec<BioTag> = Vec::new();
    // Whether the current utterance carries labels.
    let mut labeled: Option<bool> = None;

    let mut flush = |words: &mut Vec<String>, labels: &mut Vec<BioTag>, labeled: &mut Option<bool>| {
        if !words.is_empty() {
            let utt = if labeled.unwrap_or(false) {
                TaggedUtterance::new(std::mem::take(words), std::mem::take(labels))
            } else {
                TaggedUtterance::unlabeled(std::mem::take(words))
            };
            utterances.push(utt);
        }
        *labeled = None;
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            flush(&mut words, &mut labels, &mut labeled);
            continue;
        }
        let fields = split_fields(line);
        if let Some((col, _)) = fields.iter().take(2).skip(1).find(|(_, f)| f.is_empty()) {
            return Err(parse_err(lineno, *col, "empty label".into()));
        }
        let (word, label) = match fields.as_slice() {
            [(_, w)] => (*w, None),
            [(_, w), (col, l)] => (*w, Some((*col, *l))),
            [_, _, (col, _), ..] => {
                return Err(parse_err(lineno, *col, "expected `word<SEP>label`, found extra field".into()))
            }
            [] => unreachable!("non-blank line yields at least one field"),
        };
        if word.is_empty() {
            return Err(parse_err(lineno, 1, "empty word".into()));
        }
        let has_label = match label {
            Some((col, "")) => return Err(parse_err(lineno, col, "empty label".into())),
            Some(_) => true,
            None => false,
        };
        if !has_label && policy == LabelPolicy::Required {
            return Err(parse_err(lineno, line.chars().count() + 1, "label missing".into()));
        }
        match labeled {
            None => labeled = Some(has_label),
            Some(prev) if prev != has_label => {
                return Err(parse_err(
                    lineno,
                    1,
                    "utterance mixes labeled and unlabeled lines".into(),
                ))
            }
            _ => {}
        }
        words.push(word.to_string());
        if let Some((col, l)) = label {
            let tag = l
                .parse::<BioTag>()
                .map_err(|e| parse_err(lineno, col, e.to_string()))?;
            labels.push(tag);
        }
    }
    flush(&mut words, &mut labels, &mut labeled);

    if utterances.is_empty() {
        return Err(Error::EmptyCorpus(source_name.to_string()));
    }
    Ok(Corpus { utterances })
}

/// Splits on tab when present, otherwise on single spaces. Returns each
/// field with its 1-based starting column.
fn split_fields(line: &str) -> Vec<(usize, &str)> {
    let sep = if line.contains('\t') { '\t' } else { ' ' };
    let mut out = Vec::new();
    let mut col = 1;
    for field in line.split(sep) {
        out.push((col, field));
        col += field.chars().count() + 1;
    }
    out
}

pub fn write_conll<W: Write>(corpus: &Corpus, mut w: W) -> std::io::Result<()> {
    for utt in &corpus.utterances {
        for (i, word) in utt.words.iter().enumerate() {
            match &utt.labels {
                Some(labels) => writeln!(w, "{}\t{}", word, labels[i])?,
                None => writeln!(w, "{}", word)?,
            }
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_conll(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_conll(corpus, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// An utterance encoded against a [`Vocab`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub words: Vec<usize>,
    pub labels: Option<Vec<usize>>,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Word and label vocabularies with dense 0-based ids.
///
/// Words keep first-appearance order over train then dev, followed by the
/// reserved [`UNK`] and [`PAD`] entries. Frequencies are kept per split;
/// a vocabulary loaded from its sidecar only knows combined counts, which
/// are stored as train counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    word_ids: HashMap<String, usize>,
    labels: Vec<BioTag>,
    label_ids: HashMap<BioTag, usize>,
    train_freq: Vec<u64>,
    dev_freq: Vec<u64>,
    label_freq: Vec<u64>,
}

impl Vocab {
    pub fn build(train: &Corpus, dev: &Corpus) -> Vocab {
        let mut v = Vocab {
            words: Vec::new(),
            word_ids: HashMap::new(),
            labels: Vec::new(),
            label_ids: HashMap::new(),
            train_freq: Vec::new(),
            dev_freq: Vec::new(),
            label_freq: Vec::new(),
        };
        for (split, corpus) in [(0, train), (1, dev)] {
            for utt in &corpus.utterances {
                for word in &utt.words {
                    let id = v.intern_word(word);
                    if split == 0 {
                        v.train_freq[id] += 1;
                    } else {
                        v.dev_freq[id] += 1;
                    }
                }
                for tag in utt.labels.iter().flatten() {
                    let id = match v.label_ids.get(tag) {
                        Some(&id) => id,
                        None => {
                            v.labels.push(tag.clone());
                            v.label_ids.insert(tag.clone(), v.labels.len() - 1);
                            v.label_freq.push(0);
                            v.labels.len() - 1
                        }
                    };
                    v.label_freq[id] += 1;
                }
            }
        }
        v.intern_word(UNK);
        v.intern_word(PAD);
        v
    }

    fn intern_word(&mut self, word: &str) -> usize {
        if let Some(&id) = self.word_ids.get(word) {
            return id;
        }
        self.words.push(word.to_string());
        self.word_ids.insert(word.to_string(), self.words.len() - 1);
        self.train_freq.push(0);
        self.dev_freq.push(0);
        self.words.len() - 1
    }

    /// Number of words, including UNK and PAD.
    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn unk_id(&self) -> usize {
        self.word_ids[UNK]
    }

    pub fn pad_id(&self) -> usize {
        self.word_ids[PAD]
    }

    pub fn word_id(&self, word: &str) -> Option<usize> {
        self.word_ids.get(word).copied()
    }

    pub fn label_id(&self, tag: &BioTag) -> Option<usize> {
        self.label_ids.get(tag).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn label(&self, id: usize) -> &BioTag {
        &self.labels[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn labels(&self) -> &[BioTag] {
        &self.labels
    }

    pub fn train_count(&self, id: usize) -> u64 {
        self.train_freq[id]
    }

    pub fn dev_count(&self, id: usize) -> u64 {
        self.dev_freq[id]
    }

    pub fn frequency(&self, id: usize) -> u64 {
        self.train_freq[id] + self.dev_freq[id]
    }

    pub fn frequency_of(&self, word: &str) -> u64 {
        self.word_id(word).map_or(0, |id| self.frequency(id))
    }

    pub fn encode_word(&self, word: &str) -> usize {
        self.word_id(word).unwrap_or_else(|| self.unk_id())
    }

    /// Maps words to ids (OOV → UNK) and labels to ids. Unknown labels are an error.
    pub fn encode(&self, utt: &TaggedUtterance) -> Result<Utterance> {
        let words = utt.words.iter().map(|w| self.encode_word(w)).collect();
        let labels = match &utt.labels {
            Some(tags) => Some(
                tags.iter()
                    .map(|t| self.label_id(t).ok_or_else(|| Error::UnknownLabel(t.to_string())))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        Ok(Utterance { words, labels })
    }

    pub fn encode_corpus(&self, corpus: &Corpus) -> Result<Vec<Utterance>> {
        corpus.utterances.iter().map(|u| self.encode(u)).collect()
    }

    pub fn decode(&self, utt: &Utterance) -> TaggedUtterance {
        TaggedUtterance {
            words: utt.words.iter().map(|&w| self.words[w].clone()).collect(),
            labels: utt
                .labels
                .as_ref()
                .map(|ls| ls.iter().map(|&l| self.labels[l].clone()).collect()),
        }
    }

    pub fn decode_labels(&self, ids: &[usize]) -> Vec<BioTag> {
        ids.iter().map(|&l| self.labels[l].clone()).collect()
    }

    /// Writes the word sidecar: `token<TAB>id<TAB>count` per line, count over train+dev.
    pub fn write_words<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, word) in self.words.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", word, id, self.frequency(id))?;
        }
        Ok(())
    }

    pub fn write_labels<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, tag) in self.labels.iter().enumerate() {
            writeln!(w, "{}\t{}\t{}", tag, id, self.label_freq[id])?;
        }
        Ok(())
    }

    pub fn save(&self, words_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
        for (path, labels) in [(words_path.as_ref(), false), (labels_path.as_ref(), true)] {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            let res = if labels {
                self.write_labels(&mut w)
            } else {
                self.write_words(&mut w)
            };
            res.and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    }

    pub fn load(words_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vocab> {
        let words = read_sidecar(words_path.as_ref())?;
        let labels = read_sidecar(labels_path.as_ref())?;
        let mut v = Vocab {
            words: Vec::new(),
            word_ids: HashMap::new(),
            labels: Vec::new(),
            label_ids: HashMap::new(),
            train_freq: Vec::new(),
            dev_freq: Vec::new(),
            label_freq: Vec::new(),
        };
        for (_, token, count) in words {
            let id = v.intern_word(&token);
            v.train_freq[id] = count;
        }
        let name = labels_path.as_ref().display().to_string();
        for (lineno, token, count) in labels {
            let tag = token.parse::<BioTag>().map_err(|e| Error::Parse {
                source_name: name.clone(),
                line: lineno,
                column: 1,
                message: e.to_string(),
            })?;
            v.label_ids.insert(tag.clone(), v.labels.len());
            v.labels.push(tag);
            v.label_freq.push(count);
        }
        if v.word_id(UNK).is_none() || v.word_id(PAD).is_none() {
            return Err(Error::Parse {
                source_name: words_path.as_ref().display().to_string(),
                line: 0,
                column: 0,
                message: "vocabulary lacks reserved UNK/PAD entries".into(),
            });
        }
        Ok(v)
    }
}

fn read_sidecar(path: &Path) -> Result<Vec<(usize, String, u64)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        let err = |column: usize, message: &str| Error::Parse {
            source_name: name.clone(),
            line: lineno,
            column,
            message: message.to_string(),
        };
        let mut parts = line.split('\t');
        let (Some(token), Some(id), Some(count), None) = (parts.next(), parts.next(), parts.next(), parts.next()) else {
            return Err(err(1, "expected `token<TAB>id<TAB>count`"));
        };
        let id_col = token.chars().count() + 2;
        let count_col = id_col + id.len() + 1;
        let id: usize = id.parse().map_err(|_| err(id_col, "bad id"))?;
        if id != out.len() {
            return Err(err(id_col, "ids must be dense and in order"));
        }
        let count: u64 = count.parse().map_err(|_| err(count_col, "bad count"))?;
        out.push((lineno, token.to_string(), count));
    }
    Ok(out)
}

/// Words ordered by descending vocabulary frequency, ties broken lexicographically.
fn frequency_ranking<'a>(words: impl Iterator<Item = &'a str>, vocab: &Vocab) -> Vec<&'a str> {
    let distinct: HashSet<&str> = words.collect();
    let mut ranked: Vec<&str> = distinct.into_iter().collect();
    ranked.sort_by(|a, b| vocab.frequency_of(b).cmp(&vocab.frequency_of(a)).then_with(|| a.cmp(b)));
    ranked
}

/// Indices (in corpus order) selected by the coverage reduction.
fn select_for_coverage(utts: &[&TaggedUtterance], vocab: &Vocab, m_cap: NonZeroUsize) -> Vec<usize> {
    let mut postings: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, utt) in utts.iter().enumerate() {
        for word in &utt.words {
            let list = postings.entry(word.as_str()).or_default();
            if list.last() != Some(&i) {
                list.push(i);
            }
        }
    }
    let ranking = frequency_ranking(postings.keys().copied(), vocab);
    let total = ranking.len();

    let mut covered: HashSet<&str> = HashSet::new();
    let mut selected = vec![false; utts.len()];
    for word in ranking {
        if covered.len() == total {
            break;
        }
        if covered.contains(word) {
            continue;
        }
        // No selected utterance can contain an uncovered word.
        for &i in postings[word].iter().take(m_cap.get()) {
            selected[i] = true;
            covered.extend(utts[i].words.iter().map(String::as_str));
        }
    }
    selected
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| s.then_some(i))
        .collect()
}

/// Selects, per frequency-ranked uncovered word, its first `m_cap` utterances
/// until every word of `corpus` is covered. Output keeps corpus order.
pub fn reduce_corpus(corpus: &Corpus, vocab: &Vocab, m_cap: NonZeroUsize) -> Corpus {
    let utts: Vec<&TaggedUtterance> = corpus.utterances.iter().collect();
    let picked = select_for_coverage(&utts, vocab, m_cap);
    Corpus::new(picked.into_iter().map(|i| corpus.utterances[i].clone()).collect())
}

/// Reduces train and dev with coverage tracked jointly over train followed by dev.
pub fn reduce_splits(train: &Corpus, dev: &Corpus, vocab: &Vocab, m_cap: NonZeroUsize) -> (Corpus, Corpus) {
    let utts: Vec<&TaggedUtterance> = train.utterances.iter().chain(&dev.utterances).collect();
    let picked = select_for_coverage(&utts, vocab, m_cap);
    let (mut t, mut d) = (Vec::new(), Vec::new());
    for i in picked {
        if i < train.len() {
            t.push(train.utterances[i].clone());
        } else {
            d.push(dev.utterances[i - train.len()].clone());
        }
    }
    (Corpus::new(t), Corpus::new(d))
}

/// Distinct words appearing in the corpus.
pub fn word_set(corpus: &Corpus) -> HashSet<&str> {
    corpus
        .utterances
        .iter()
        .flat_map(|u| u.words.iter().map(String::as_str))
        .collect()
}
