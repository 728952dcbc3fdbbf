//! Deterministic synthetic corpora with a cross-source domain gap.
//!
//! Four publication sources mirror a real cross-source split: one regular
//! and one satirical source for training, one regular and one satirical
//! source shared by validation and test. Every document mixes
//!
//! * common filler words drawn from a shared vocabulary,
//! * class words, shared by all sources of a class (the transferable signal),
//! * style words private to the document's source (the confounder).
//!
//! The confounder strength scales how often style words are drawn. Training
//! sources separate perfectly on style words, which never occur in the
//! evaluation sources.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Label, LabeledCorpus, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub train_per_class: usize,
    pub valid_per_class: usize,
    pub test_per_class: usize,
    /// Size of the shared filler vocabulary.
    pub vocabulary: usize,
    /// Class words per class.
    pub class_words: usize,
    /// Style words per source.
    pub style_words: usize,
    pub words_per_doc: usize,
    /// Probability that a word slot holds a class word.
    pub class_rate: f64,
    /// Probability that a class-word slot uses the other class's words.
    pub class_noise: f64,
    /// In [0, 1]; style words fill `confounder_strength * max_style_rate` of the slots.
    pub confounder_strength: f64,
    pub max_style_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            train_per_class: 100,
            valid_per_class: 50,
            test_per_class: 50,
            vocabulary: 400,
            class_words: 12,
            style_words: 12,
            words_per_doc: 40,
            class_rate: 0.06,
            class_noise: 0.3,
            confounder_strength: 1.0,
            max_style_rate: 0.4,
            seed: 17,
        }
    }
}

impl SynthSpec {
    /// Parses `key = value` settings; missing keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

pub const TRAIN_SOURCES: [(&str, Label); 2] = [
    ("wire-daily", Label::Regular),
    ("mock-gazette", Label::Satirical),
];
pub const EVAL_SOURCES: [(&str, Label); 2] = [
    ("evening-post", Label::Regular),
    ("parody-times", Label::Satirical),
];

struct Lexicon {
    filler: Vec<String>,
    class: [Vec<String>; 2],
    style: Vec<Vec<String>>,
}

fn class_index(label: Label) -> usize {
    match label {
        Label::Regular => 0,
        Label::Satirical => 1,
    }
}

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "j", "l", "m", "n", "p", "r", "s", "t", "v", "ch", "gr", "pl", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "é", "ou", "ai", "eu"];
/// Onsets private to each source's style words, so style n-grams of length
/// three or more never occur in another source.
const STYLE_ONSETS: [&[&str]; 4] = [&["k", "kr"], &["q", "qu"], &["w", "wh"], &["x", "z"]];

fn pseudo_word(rng: &mut ChaCha8Rng, seen: &mut HashSet<String>, onsets: &[&str]) -> String {
    loop {
        let syllables = rng.gen_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(onsets.choose(rng).expect("non-empty"));
            w.push_str(VOWELS.choose(rng).expect("non-empty"));
        }
        if seen.insert(w.clone()) {
            return w;
        }
    }
}

impl Lexicon {
    fn new(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Self {
        let mut seen = HashSet::new();
        let mut words = |k: usize, onsets: &[&str]| {
            (0..k).map(|_| pseudo_word(rng, &mut seen, onsets)).collect::<Vec<_>>()
        };
        let filler = words(spec.vocabulary, ONSETS);
        let class = [words(spec.class_words, ONSETS), words(spec.class_words, ONSETS)];
        let style = STYLE_ONSETS
            .iter()
            .map(|onsets| words(spec.style_words, onsets))
            .collect();
        Lexicon {
            filler,
            class,
            style,
        }
    }
}

fn check(spec: &SynthSpec) -> Result<()> {
    if spec.train_per_class == 0 || spec.valid_per_class == 0 || spec.test_per_class == 0 {
        return Err(Error::Config("synthetic split sizes must be positive".into()));
    }
    if spec.vocabulary == 0 || spec.class_words == 0 || spec.words_per_doc == 0 {
        return Err(Error::Config("synthetic vocabulary and document sizes must be positive".into()));
    }
    if spec.style_words == 0 && spec.confounder_strength > 0.0 {
        return Err(Error::Config("confounders need at least one style word".into()));
    }
    for (name, v) in [
        ("class_rate", spec.class_rate),
        ("class_noise", spec.class_noise),
        ("confounder_strength", spec.confounder_strength),
        ("max_style_rate", spec.max_style_rate),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
        }
    }
    if spec.class_rate + spec.confounder_strength * spec.max_style_rate > 1.0 {
        return Err(Error::Config("class and style rates exceed 1".into()));
    }
    Ok(())
}

fn document(
    spec: &SynthSpec,
    lex: &Lexicon,
    rng: &mut ChaCha8Rng,
    label: Label,
    source_index: usize,
) -> (String, String) {
    let style_rate = spec.confounder_strength * spec.max_style_rate;
    let words: Vec<&str> = (0..spec.words_per_doc)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < spec.class_rate {
                let own = class_index(label);
                let idx = if rng.gen_bool(spec.class_noise) { 1 - own } else { own };
                lex.class[idx].choose(rng).expect("class words")
            } else if u < spec.class_rate + style_rate {
                lex.style[source_index].choose(rng).expect("style words")
            } else {
                lex.filler.choose(rng).expect("filler words")
            }
        })
        .map(String::as_str)
        .collect();
    let split_at = (spec.words_per_doc / 6).max(1).min(words.len());
    (words[..split_at].join(" "), words[split_at..].join(" "))
}

/// Generates the corpus. Identical specs give identical corpora.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<LabeledCorpus> {
    check(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lex = Lexicon::new(spec, &mut rng);
    let mut articles = Vec::new();
    let mut push = |rng: &mut ChaCha8Rng, split: Split, count: usize, sources: &[(&str, Label)], offset: usize| {
        for (k, &(source, label)) in sources.iter().enumerate() {
            for i in 0..count {
                let (title, body) = document(spec, &lex, rng, label, offset + k);
                articles.push(Article {
                    id: format!("{}-{}-{:04}", split, source, i),
                    title,
                    body,
                    label,
                    source: source.to_string(),
                    split,
                });
            }
        }
    };
    push(&mut rng, Split::Train, spec.train_per_class, &TRAIN_SOURCES, 0);
    push(&mut rng, Split::Valid, spec.valid_per_class, &EVAL_SOURCES, TRAIN_SOURCES.len());
    push(&mut rng, Split::Test, spec.test_per_class, &EVAL_SOURCES, TRAIN_SOURCES.len());
    LabeledCorpus::new(articles, Label::Satirical)
}

/// Extra labeled documents drawn from the training sources, for measuring
/// in-source accuracy. Uses the same lexicon as [`generate_synthetic`] and a
/// separate random stream, so the main corpus is unaffected.
pub fn generate_in_source_holdout(spec: &SynthSpec, per_class: usize) -> Result<Vec<Article>> {
    check(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lex = Lexicon::new(spec, &mut rng);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut out = Vec::new();
    for (k, &(source, label)) in TRAIN_SOURCES.iter().enumerate() {
        for i in 0..per_class {
            let (title, body) = document(spec, &lex, &mut rng, label, k);
            out.push(Article {
                id: format!("holdout-{source}-{i:04}"),
                title,
                body,
                label,
                source: source.to_string(),
                split: Split::Test,
            });
        }
    }
    Ok(out)
}

/// Token planted by [`generate_planted`]. Its letters never occur in filler
/// or class words.
pub const PLANTED_TOKEN: &str = "zyzzyxa";

/// A small corpus in which `token` occurs once in every satirical document
/// and nowhere else. Documents share a fixed template and differ in a few
/// random filler words, so the token is the dominant difference between the
/// classes. Half of `total` documents go to training and a quarter each to
/// validation and test; `total` must be a positive multiple of 8.
pub fn generate_planted(total: usize, token: &str, seed: u64) -> Result<LabeledCorpus> {
    const TEMPLATE_WORDS: usize = 8;
    const RANDOM_WORDS: usize = 3;
    if total == 0 || !total.is_multiple_of(8) {
        return Err(Error::Config(format!("planted corpus size must be a positive multiple of 8, got {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = Lexicon::new(&SynthSpec { seed, ..SynthSpec::default() }, &mut rng);
    let (template, pool) = lex.filler.split_at(TEMPLATE_WORDS);
    let mut articles = Vec::new();
    for (split, count, sources) in [
        (Split::Train, total / 4, &TRAIN_SOURCES),
        (Split::Valid, total / 8, &EVAL_SOURCES),
        (Split::Test, total / 8, &EVAL_SOURCES),
    ] {
        for &(source, label) in sources.iter() {
            for i in 0..count {
                let mut words: Vec<&str> = template[2..].iter().map(String::as_str).collect();
                for _ in 0..RANDOM_WORDS {
                    words.push(pool.choose(&mut rng).expect("filler words"));
                }
                if label == Label::Satirical {
                    words.push(token);
                }
                articles.push(Article {
                    id: format!("{}-{}-{:04}", split, source, i),
                    title: template[..2].join(" "),
                    body: words.join(" "),
                    label,
                    source: source.to_string(),
                    split,
                });
            }
        }
    }
    LabeledCorpus::new(articles, Label::Satirical)
}
