//! Template-generated slot-filling corpora with known labels.
//!
//! A grammar holds a set of concepts, each with its own value phrases, and
//! a set of templates that interleave filler words with concept slots. An
//! even label count is met with one single-word concept (a `B-` label
//! without an `I-` partner); every other concept has multi-word values and
//! contributes both labels.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{BioTag, Corpus, TaggedUtterance};
use crate::error::{Error, Result};

const CONCEPT_NAMES: &[&str] = &[
    "fromloc", "toloc", "depart_date", "airline", "class", "depart_time", "meal", "aircraft", "airport", "stop",
    "fare", "day",
];

const FILLERS: &[&str] = &[
    "i", "want", "to", "fly", "from", "show", "me", "flights", "on", "the", "please", "a", "ticket", "for", "with",
    "and", "at", "in", "need", "book", "list", "what", "are", "leaving", "arriving",
];

const SYLLABLES: &[&str] = &[
    "ba", "ko", "ri", "mu", "te", "sa", "lo", "ni", "de", "fa", "gu", "pe", "zo", "ha", "vi", "ru", "mo", "ke",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    /// Size of the label set, including `O`.
    pub num_labels: usize,
    pub num_templates: usize,
    /// Seed of the grammar itself (values and templates).
    pub seed: u64,
}

#[derive(Debug, Clone)]
struct Concept {
    name: String,
    values: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
enum Slot {
    Filler(&'static str),
    Concept(usize),
}

#[derive(Debug, Clone)]
pub struct SynthGrammar {
    concepts: Vec<Concept>,
    templates: Vec<Vec<Slot>>,
}

fn fresh_word<R: Rng>(rng: &mut R, used: &mut HashSet<String>) -> String {
    loop {
        let len = rng.random_range(2..=3);
        let w: String = (0..len).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        if used.insert(w.clone()) {
            return w;
        }
    }
}

impl SynthGrammar {
    pub fn new(opts: &SynthOptions) -> Result<SynthGrammar> {
        if opts.num_labels == 0 || opts.num_templates == 0 {
            return Err(Error::Config("synthetic grammar needs at least one label and one template".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let multi = (opts.num_labels - 1) / 2;
        let single = (opts.num_labels - 1) % 2;
        let mut used: HashSet<String> = FILLERS.iter().map(|s| s.to_string()).collect();
        let concepts: Vec<Concept> = (0..multi + single)
            .map(|c| {
                let name = CONCEPT_NAMES.get(c).map_or_else(|| format!("slot{c}"), |s| s.to_string());
                let words_per_value = if c < multi { 2..=3 } else { 1..=1 };
                let values = (0..rng.random_range(3..=5))
                    .map(|_| {
                        let len = rng.random_range(words_per_value.clone());
                        (0..len).map(|_| fresh_word(&mut rng, &mut used)).collect()
                    })
                    .collect();
                Concept { name, values }
            })
            .collect();

        let c = concepts.len();
        let templates = (0..opts.num_templates)
            .map(|t| {
                let mut chosen: Vec<usize> = (0..c).filter(|j| j % opts.num_templates == t).collect();
                if c > 0 {
                    for _ in 0..rng.random_range(0..=2) {
                        chosen.push(rng.random_range(0..c));
                    }
                }
                let mut slots = Vec::new();
                for &j in &chosen {
                    for _ in 0..rng.random_range(1..=3) {
                        slots.push(Slot::Filler(FILLERS.choose(&mut rng).expect("non-empty")));
                    }
                    slots.push(Slot::Concept(j));
                }
                for _ in 0..rng.random_range(usize::from(chosen.is_empty())..=2) {
                    slots.push(Slot::Filler(FILLERS.choose(&mut rng).expect("non-empty")));
                }
                slots
            })
            .collect();
        Ok(SynthGrammar { concepts, templates })
    }

    /// Labels the grammar can emit, `O` first, then `B-`/`I-` per concept.
    pub fn labels(&self) -> Vec<BioTag> {
        let mut out = vec![BioTag::outside()];
        for c in &self.concepts {
            out.push(BioTag::begin(&c.name));
            if c.values.iter().any(|v| v.len() > 1) {
                out.push(BioTag::inside(&c.name));
            }
        }
        out
    }

    pub fn num_templates(&self) -> usize {
        self.templates.len()
    }

    /// Draws `n` utterances. The first `min(n, templates)` use each template
    /// once in order, so every label occurs once `n ≥ templates`; the rest
    /// pick templates uniformly.
    pub fn sample(&self, n: usize, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        let utterances = (0..n)
            .map(|i| {
                let t = if i < self.templates.len() {
                    i
                } else {
                    rng.random_range(0..self.templates.len())
                };
                let mut words = Vec::new();
                let mut labels = Vec::new();
                for slot in &self.templates[t] {
                    match slot {
                        Slot::Filler(w) => {
                            words.push(w.to_string());
                            labels.push(BioTag::outside());
                        }
                        Slot::Concept(j) => {
                            let concept = &self.concepts[*j];
                            let value = concept.values.choose(&mut rng).expect("non-empty");
                            for (k, w) in value.iter().enumerate() {
                                words.push(w.clone());
                                labels.push(if k == 0 {
                                    BioTag::begin(&concept.name)
                                } else {
                                    BioTag::inside(&concept.name)
                                });
                            }
                        }
                    }
                }
                TaggedUtterance::new(words, labels)
            })
            .collect();
        Corpus::new(utterances)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::validate_bio;
    use std::collections::HashSet;

    fn opts(num_labels: usize, num_templates: usize) -> SynthOptions {
        SynthOptions {
            num_labels,
            num_templates,
            seed: 4,
        }
    }

    #[test]
    fn label_count_is_as_requested() {
        for l in 1..=15 {
            for t in [1, 3, 10] {
                let g = SynthGrammar::new(&opts(l, t)).unwrap();
                assert_eq!(g.labels().len(), l);
                let corpus = g.sample(t + 5, 1);
                let seen: HashSet<String> = corpus
                    .utterances
                    .iter()
                    .flat_map(|u| u.labels.as_ref().unwrap().iter().map(|x| x.to_string()))
                    .collect();
                assert_eq!(seen.len(), l, "labels {l}, templates {t}");
            }
        }
    }

    #[test]
    fn outputs_are_bio_valid() {
        let g = SynthGrammar::new(&opts(8, 12)).unwrap();
        for u in &g.sample(300, 9).utterances {
            assert!(!u.words.is_empty());
            assert!(validate_bio(u.labels.as_ref().unwrap()).is_empty());
        }
    }

    #[test]
    fn seeds_fix_the_corpus() {
        let a = SynthGrammar::new(&opts(8, 6)).unwrap().sample(40, 3);
        let b = SynthGrammar::new(&opts(8, 6)).unwrap().sample(40, 3);
        assert_eq!(a, b);
        let c = SynthGrammar::new(&opts(8, 6)).unwrap().sample(40, 4);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_empty_grammar() {
        assert!(SynthGrammar::new(&opts(0, 3)).is_err());
        assert!(SynthGrammar::new(&opts(3, 0)).is_err());
    }
}
