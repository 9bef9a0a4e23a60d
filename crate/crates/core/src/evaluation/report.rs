//! Prediction files and report rendering.
//!
//! Prediction files extend the corpus layout with a third column:
//! `word<TAB>gold<TAB>predicted`, blank line between utterances.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::errors::{Comparison, ErrorCounts, EvalReport};
use crate::corpus::{BioTag, Corpus, TaggedUtterance};
use crate::error::{Error, Result};

pub fn write_predictions<W: Write>(gold: &Corpus, predicted: &[Vec<BioTag>], mut w: W) -> Result<()> {
    let labels = gold.gold()?;
    if labels.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: predicted.len(),
        });
    }
    let io = |e| Error::io("<predictions>", e);
    for ((utt, g), p) in gold.utterances.iter().zip(&labels).zip(predicted) {
        if p.len() != g.len() {
            return Err(Error::LengthMismatch {
                expected: g.len(),
                actual: p.len(),
            });
        }
        for ((word, gt), pt) in utt.words.iter().zip(g.iter()).zip(p) {
            writeln!(w, "{word}\t{gt}\t{pt}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    Ok(())
}

pub fn save_predictions(gold: &Corpus, predicted: &[Vec<BioTag>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_predictions(gold, predicted, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a prediction file back into the gold corpus and predicted labels.
pub fn read_predictions<R: BufRead>(reader: R, source_name: &str) -> Result<(Corpus, Vec<Vec<BioTag>>)> {
    let mut utterances = Vec::new();
    let mut predicted = Vec::new();
    let (mut words, mut gold, mut pred) = (Vec::new(), Vec::new(), Vec::new());
    let parse_err = |line: usize, column: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        column,
        message,
    };
    let mut lines = reader.lines().enumerate().peekable();
    while let Some((idx, line)) = lines.next() {
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let lineno = idx + 1;
        if !line.trim().is_empty() {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(lineno, 1, "expected `word<TAB>gold<TAB>predicted`".into()));
            }
            let g_col = fields[0].chars().count() + 2;
            let p_col = g_col + fields[1].chars().count() + 1;
            words.push(fields[0].to_string());
            gold.push(fields[1].parse().map_err(|e: crate::corpus::BioParseError| parse_err(lineno, g_col, e.to_string()))?);
            pred.push(fields[2].parse().map_err(|e: crate::corpus::BioParseError| parse_err(lineno, p_col, e.to_string()))?);
        }
        let at_end = lines.peek().is_none();
        if (line.trim().is_empty() || at_end) && !words.is_empty() {
            utterances.push(TaggedUtterance::new(std::mem::take(&mut words), std::mem::take(&mut gold)));
            predicted.push(std::mem::take(&mut pred));
        }
    }
    if utterances.is_empty() {
        return Err(Error::EmptyCorpus(source_name.to_string()));
    }
    Ok((Corpus::new(utterances), predicted))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<(Corpus, Vec<Vec<BioTag>>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(BufReader::new(file), &path.display().to_string())
}

fn push_counts(out: &mut String, c: &ErrorCounts, top: usize) {
    let tag = if c.strip_bio { "without BIO" } else { "with BIO" };
    let _ = writeln!(out, "  words with errors ({tag}):      {}", c.word_errors);
    let _ = writeln!(out, "  utterances with errors ({tag}): {}", c.utterance_errors);
    if !c.per_word.is_empty() {
        let list: Vec<String> = c.per_word.iter().take(top).map(|w| format!("{} ({})", w.word, w.errors)).collect();
        let _ = writeln!(out, "  top mislabelled words ({tag}): {}", list.join(", "));
    }
}

/// Human-readable summary with the `top` most mislabelled words.
pub fn render_report(name: &str, r: &EvalReport, top: usize) -> String {
    let mut out = String::new();
    let s = &r.scores;
    let _ = writeln!(out, "{name}");
    let _ = writeln!(
        out,
        "  precision {:6.2}  recall {:6.2}  F1 {:6.2}  (chunks: {} correct, {} predicted, {} gold)",
        100.0 * s.precision,
        100.0 * s.recall,
        100.0 * s.f1,
        s.correct,
        s.predicted,
        s.gold
    );
    push_counts(&mut out, &r.with_bio, top);
    push_counts(&mut out, &r.without_bio, top);
    out
}

pub fn render_comparison(name_a: &str, name_b: &str, c: &Comparison, top: usize) -> String {
    let mut out = String::new();
    let tag = if c.strip_bio { "without BIO" } else { "with BIO" };
    let _ = writeln!(out, "utterances with errors ({tag}), shared+unique");
    let _ = writeln!(out, "  {name_a:<12} {:>6} = {} + {}", c.total_a, c.shared.len(), c.unique_a.len());
    let _ = writeln!(out, "  {name_b:<12} {:>6} = {} + {}", c.total_b, c.shared.len(), c.unique_b.len());
    if !c.per_word.is_empty() {
        let _ = writeln!(out, "  word          {name_a:>8} {name_b:>8}");
        for w in c.per_word.iter().take(top) {
            let _ = writeln!(out, "  {:<13} {:>8} {:>8}", w.word, w.errors_a, w.errors_b);
        }
    }
    out
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    record: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

/// One JSON object per line, tagged with a `record` field.
pub fn json_line<T: Serialize>(record: &str, body: &T) -> String {
    serde_json::to_string(&Record { record, body }).expect("report records serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::chunks::tags;
    use crate::evaluation::errors::{compare_systems, evaluate, Stopwords};

    fn sample() -> (Corpus, Vec<Vec<BioTag>>) {
        let c = Corpus::new(vec![
            TaggedUtterance::new(vec!["to".into(), "new".into(), "york".into()], tags("O B-city I-city")),
            TaggedUtterance::new(vec!["hi".into()], tags("O")),
        ]);
        (c, vec![tags("O B-city O"), tags("B-x")])
    }

    #[test]
    fn prediction_file_round_trip() {
        let (c, p) = sample();
        let mut buf = Vec::new();
        write_predictions(&c, &p, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("to\tO\tO\nnew\tB-city\tB-city\n"));
        let (c2, p2) = read_predictions(buf.as_slice(), "mem").unwrap();
        assert_eq!(c2, c);
        assert_eq!(p2, p);
        let no_trailing_blank = text.trim_end().to_string();
        assert_eq!(read_predictions(no_trailing_blank.as_bytes(), "mem").unwrap().1, p);
    }

    #[test]
    fn prediction_file_errors_carry_position() {
        match read_predictions("a\tO\tB-\n".as_bytes(), "mem") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 5)),
            other => panic!("{other:?}"),
        }
        assert!(read_predictions("a\tO\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn rendering_mentions_counts() {
        let (c, p) = sample();
        let r = evaluate(&c, &p, &Stopwords::none()).unwrap();
        let text = render_report("test", &r, 5);
        assert!(text.contains("utterances with errors (with BIO): 2"));
        let cmp = compare_systems(&c, &p, &c.gold().unwrap(), false, &Stopwords::none()).unwrap();
        assert!(render_comparison("bl", "le", &cmp, 5).contains("2 = 0 + 2"));
        let line = json_line("eval", &r.scores);
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["record"], "eval");
        assert_eq!(v["gold"], 1);
    }
}
