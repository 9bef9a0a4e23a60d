//! `slotfill eval` and `slotfill predict`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use slotfill::corpus::{load_conll, save_conll, BioTag, Corpus, LabelPolicy, TaggedUtterance, Utterance};
use slotfill::evaluation::{
    accumulate_fc_profiles, compare_profiles, compare_systems, evaluate, json_line, load_predictions,
    render_comparison, render_report, save_predictions, Stopwords,
};

use crate::artifacts::{load_model, LoadedModel};

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Trained model directory; pass twice to compare two systems.
    #[arg(long = "model", num_args = 1)]
    pub models: Vec<PathBuf>,
    /// Prediction file (`word gold predicted`); usable instead of --model, pass twice to compare.
    #[arg(long = "predictions", num_args = 1)]
    pub predictions: Vec<PathBuf>,
    /// Labeled test corpus (required with --model).
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Stopword list (one word per line) excluded from per-word tables.
    #[arg(long, conflicts_with = "no_stopwords")]
    pub stopwords: Option<PathBuf>,
    /// Keep every word in per-word tables.
    #[arg(long)]
    pub no_stopwords: bool,
    /// Rows shown in per-word tables.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

struct System {
    name: String,
    gold: Corpus,
    predicted: Vec<Vec<BioTag>>,
    model: Option<LoadedModel>,
}

fn system_name(path: &Path, fallback: &str) -> String {
    path.file_name()
        .or_else(|| path.parent().and_then(Path::file_name))
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| fallback.to_string())
}

/// Predicts labels for every utterance of `corpus` with a loaded model.
pub fn predict_corpus(loaded: &LoadedModel, corpus: &Corpus) -> Result<Vec<Vec<BioTag>>> {
    let ids: Vec<Vec<usize>> = corpus
        .utterances
        .iter()
        .map(|u| u.words.iter().map(|w| loaded.vocab.encode_word(w)).collect())
        .collect();
    let refs: Vec<&[usize]> = ids.iter().map(Vec::as_slice).collect();
    let predicted = loaded.model.predict(&refs)?;
    Ok(predicted.iter().map(|p| loaded.vocab.decode_labels(p)).collect())
}

fn load_systems(args: &EvalArgs) -> Result<Vec<System>> {
    let total = args.models.len() + args.predictions.len();
    if total == 0 {
        bail!("nothing to evaluate: pass --model or --predictions");
    }
    if total > 2 {
        bail!("at most two systems can be compared, got {total}");
    }
    let mut systems = Vec::new();
    if !args.models.is_empty() {
        let Some(test) = &args.test else {
            bail!("--model requires --test");
        };
        let gold = load_conll(test, LabelPolicy::Required)?;
        for (i, dir) in args.models.iter().enumerate() {
            let loaded = load_model(dir)?;
            let predicted = predict_corpus(&loaded, &gold)?;
            systems.push(System {
                name: system_name(dir, &format!("model{}", i + 1)),
                gold: gold.clone(),
                predicted,
                model: Some(loaded),
            });
        }
    }
    for (i, path) in args.predictions.iter().enumerate() {
        let (gold, predicted) = load_predictions(path)?;
        systems.push(System {
            name: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| format!("predictions{}", i + 1)),
            gold,
            predicted,
            model: None,
        });
    }
    if systems.len() == 2 {
        if systems[0].name == systems[1].name {
            systems[0].name.push_str("-a");
            systems[1].name.push_str("-b");
        }
        let same_words = |a: &Corpus, b: &Corpus| {
            a.len() == b.len() && a.utterances.iter().zip(&b.utterances).all(|(x, y)| x.words == y.words)
        };
        if !same_words(&systems[0].gold, &systems[1].gold) {
            bail!("the two systems were evaluated on different test data");
        }
    }
    Ok(systems)
}

#[derive(Serialize)]
struct ProfileSummary<'a> {
    system_a: &'a str,
    system_b: &'a str,
    words_tested: usize,
    significant: usize,
    excluded: usize,
}

pub fn run(args: &EvalArgs, default_out: &Path) -> Result<()> {
    let stopwords = if args.no_stopwords {
        Stopwords::none()
    } else if let Some(p) = &args.stopwords {
        Stopwords::load(p)?
    } else {
        Stopwords::default_list()
    };
    let systems = load_systems(args)?;
    let out_dir = args.out_dir.clone().unwrap_or_else(|| default_out.to_path_buf());
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut text = String::new();
    let mut records = Vec::new();
    for sys in &systems {
        let report = evaluate(&sys.gold, &sys.predicted, &stopwords)?;
        text.push_str(&render_report(&sys.name, &report, args.top));
        text.push('\n');
        records.push(json_line("eval", &serde_json::json!({ "system": sys.name, "report": report })));
        if sys.model.is_some() {
            save_predictions(&sys.gold, &sys.predicted, out_dir.join(format!("predictions-{}.tsv", sys.name)))?;
        }
    }

    if let [a, b] = systems.as_slice() {
        for strip_bio in [false, true] {
            let cmp = compare_systems(&a.gold, &a.predicted, &b.predicted, strip_bio, &stopwords)?;
            text.push_str(&render_comparison(&a.name, &b.name, &cmp, args.top));
            text.push('\n');
            records.push(json_line(
                "compare",
                &serde_json::json!({ "system_a": a.name, "system_b": b.name, "comparison": cmp }),
            ));
        }
        if let (Some(ma), Some(mb)) = (&a.model, &b.model) {
            if ma.vocab.words() == mb.vocab.words() && ma.vocab.labels() == mb.vocab.labels() {
                let test: Vec<Utterance> = a
                    .gold
                    .utterances
                    .iter()
                    .map(|u| Utterance {
                        words: u.words.iter().map(|w| ma.vocab.encode_word(w)).collect(),
                        labels: None,
                    })
                    .collect();
                let pa = accumulate_fc_profiles(&ma.model, &test)?;
                let pb = accumulate_fc_profiles(&mb.model, &test)?;
                let cmp = compare_profiles(&pa, &pb)?;
                let summary = ProfileSummary {
                    system_a: &a.name,
                    system_b: &b.name,
                    words_tested: cmp.tests.len(),
                    significant: cmp.significant,
                    excluded: cmp.excluded,
                };
                text.push_str(&format!(
                    "FC-output profiles: {} of {} words differ significantly (p < 0.05), {} absent\n",
                    cmp.significant,
                    cmp.tests.len(),
                    cmp.excluded
                ));
                records.push(json_line("profiles", &summary));
                for t in &cmp.tests {
                    records.push(json_line(
                        "profile_word",
                        &serde_json::json!({ "word": ma.vocab.word(t.word), "result": t.result }),
                    ));
                }
            } else {
                log::warn!("models use different vocabularies; skipping FC-profile comparison");
            }
        }
    }

    print!("{text}");
    fs::write(out_dir.join("report.txt"), &text)?;
    let mut jsonl = records.join("\n");
    jsonl.push('\n');
    fs::write(out_dir.join("report.jsonl"), jsonl)?;
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    /// Trained model directory.
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus to tag; a label column, if present, is kept as gold.
    #[arg(long)]
    pub input: PathBuf,
    /// Output file: `word predicted`, or `word gold predicted` for labeled input.
    #[arg(long)]
    pub output: PathBuf,
}

pub fn predict(args: &PredictArgs) -> Result<()> {
    let loaded = load_model(&args.model)?;
    let corpus = load_conll(&args.input, LabelPolicy::Optional)?;
    let predicted = predict_corpus(&loaded, &corpus)?;
    if corpus.is_labeled() {
        save_predictions(&corpus, &predicted, &args.output)?;
    } else {
        let tagged = Corpus::new(
            corpus
                .utterances
                .iter()
                .zip(predicted)
                .map(|(u, p)| TaggedUtterance::new(u.words.clone(), p))
                .collect(),
        );
        save_conll(&tagged, &args.output)?;
    }
    eprintln!("tagged {} utterances into {}", corpus.len(), args.output.display());
    Ok(())
}
