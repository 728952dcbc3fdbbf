//! Labeled article corpora with a cross-source split.
//!
//! A corpus file is UTF-8 JSON lines, one article per line:
//!
//! ```text
//! {"id":"a1","title":"...","body":"...","label":"satirical","source":"site-a","split":"train"}
//! ```
//!
//! Unknown fields are ignored. Loading enforces unique ids and that no
//! publication source used for training also appears in validation or test.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Regular,
    Satirical,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Regular, Label::Satirical];

    pub fn other(self) -> Label {
        match self {
            Label::Regular => Label::Satirical,
            Label::Satirical => Label::Regular,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Regular => "regular",
            Label::Satirical => "satirical",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Label::Regular),
            "satirical" => Ok(Label::Satirical),
            other => Err(Error::arg(format!(
                "unknown label {other:?} (expected regular or satirical)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::arg(format!(
                "unknown split {other:?} (expected train, valid or test)"
            ))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub body: String,
    pub label: Label,
    pub source: String,
    pub split: Split,
}

/// Which part of an article is classified.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TextMode {
    /// Title and body joined by one space.
    #[default]
    Full,
    /// Title only.
    Headline,
}

impl FromStr for TextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(TextMode::Full),
            "headline" => Ok(TextMode::Headline),
            other => Err(Error::arg(format!(
                "unknown task {other:?} (expected full or headline)"
            ))),
        }
    }
}

/// Optional text canonicalization applied after newline normalization.
/// Both are off by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TextOptions {
    #[serde(default)]
    pub lowercase: bool,
    #[serde(default)]
    pub strip_accents: bool,
}

/// Replaces every CR, LF or CRLF with a single space.
fn normalize_newlines(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\r' => {
                if chars.peek() == Some(&'\n') {
                    chars.next();
                }
                out.push(' ');
            }
            '\n' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

fn canonicalize(text: String, opts: TextOptions) -> String {
    let text = if opts.strip_accents {
        text.nfd().filter(|c| !is_combining_mark(*c)).nfc().collect()
    } else {
        text
    };
    if opts.lowercase {
        text.to_lowercase()
    } else {
        text
    }
}

/// Classification text for an article with default options.
pub fn document_text(article: &Article, mode: TextMode) -> String {
    document_text_with(article, mode, TextOptions::default())
}

pub fn document_text_with(article: &Article, mode: TextMode, opts: TextOptions) -> String {
    let title = normalize_newlines(&article.title);
    let joined = match mode {
        TextMode::Headline => title,
        TextMode::Full => {
            let body = normalize_newlines(&article.body);
            let mut s = String::with_capacity(title.len() + body.len() + 1);
            s.push_str(&title);
            s.push(' ');
            s.push_str(&body);
            s
        }
    };
    canonicalize(joined.trim().to_string(), opts)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub articles: Vec<Article>,
    /// Class that maps to +1.
    pub class_positive: Label,
}

impl Default for LabeledCorpus {
    fn default() -> Self {
        LabeledCorpus {
            articles: Vec::new(),
            class_positive: Label::Satirical,
        }
    }
}

impl LabeledCorpus {
    /// Builds a corpus, checking id uniqueness and the cross-source split.
    pub fn new(articles: Vec<Article>, class_positive: Label) -> Result<Self> {
        let corpus = LabeledCorpus {
            articles,
            class_positive,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.articles.len());
        for a in &self.articles {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::Validation(format!("duplicate article id {:?}", a.id)));
            }
        }
        let overlap = self.source_overlap();
        if !overlap.is_empty() {
            return Err(Error::CrossSource { sources: overlap });
        }
        Ok(())
    }

    /// Sources used both for training and for validation or test, sorted.
    pub fn source_overlap(&self) -> Vec<String> {
        let train: BTreeSet<&str> = self
            .articles
            .iter()
            .filter(|a| a.split == Split::Train)
            .map(|a| a.source.as_str())
            .collect();
        let eval: BTreeSet<&str> = self
            .articles
            .iter()
            .filter(|a| a.split != Split::Train)
            .map(|a| a.source.as_str())
            .collect();
        train.intersection(&eval).map(|s| s.to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Article> + '_ {
        self.articles.iter().filter(move |a| a.split == split)
    }

    pub fn sign(&self, label: Label) -> f64 {
        if label == self.class_positive {
            1.0
        } else {
            -1.0
        }
    }

    pub fn label_of_sign(&self, sign: f64) -> Label {
        if sign >= 0.0 {
            self.class_positive
        } else {
            self.class_positive.other()
        }
    }

    /// SHA-256 over the articles in file order. Used to key caches.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.articles {
            for field in [
                a.id.as_str(),
                a.title.as_str(),
                a.body.as_str(),
                a.label.as_str(),
                a.source.as_str(),
                a.split.as_str(),
            ] {
                h.update((field.len() as u64).to_le_bytes());
                h.update(field.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), &path.display().to_string())
}

/// Parses JSON lines from any reader. `origin` names the input in errors.
pub fn read_corpus(reader: impl BufRead, origin: &str) -> Result<LabeledCorpus> {
    let mut articles = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: line_no,
            message: e.to_string(),
        })?;
        articles.push(article);
    }
    LabeledCorpus::new(articles, Label::Satirical)
}

pub fn write_corpus(corpus: &LabeledCorpus, mut writer: impl Write) -> std::io::Result<()> {
    for a in &corpus.articles {
        serde_json::to_writer(&mut writer, a)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn save_corpus(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(corpus, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// A target-domain document. Any label or split fields in the file are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct UnlabeledDoc {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub body: String,
}

impl UnlabeledDoc {
    pub fn text(&self, mode: TextMode, opts: TextOptions) -> String {
        let as_article = Article {
            id: self.id.clone(),
            title: self.title.clone(),
            body: self.body.clone(),
            label: Label::Regular,
            source: String::new(),
            split: Split::Test,
        };
        document_text_with(&as_article, mode, opts)
    }
}

/// Reads unlabeled documents (`id`, `title`, optional `body`) from JSON lines.
pub fn load_unlabeled(path: impl AsRef<Path>) -> Result<Vec<UnlabeledDoc>> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let parse_err = |message: String| Error::Parse {
            path: origin.clone(),
            line: idx + 1,
            message,
        };
        let line = line.map_err(|e| parse_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: UnlabeledDoc = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::Validation(format!("duplicate target id {:?}", doc.id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub sample_count: usize,
    pub token_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub cells: BTreeMap<Split, BTreeMap<Label, CellStats>>,
}

impl CorpusStats {
    pub fn cell(&self, split: Split, label: Label) -> CellStats {
        self.cells
            .get(&split)
            .and_then(|m| m.get(&label))
            .copied()
            .unwrap_or_default()
    }

    pub fn split_total(&self, split: Split) -> CellStats {
        Label::ALL.iter().fold(CellStats::default(), |acc, &l| {
            let c = self.cell(split, l);
            CellStats {
                sample_count: acc.sample_count + c.sample_count,
                token_count: acc.token_count + c.token_count,
            }
        })
    }

    pub fn label_total(&self, label: Label) -> CellStats {
        Split::ALL.iter().fold(CellStats::default(), |acc, &s| {
            let c = self.cell(s, label);
            CellStats {
                sample_count: acc.sample_count + c.sample_count,
                token_count: acc.token_count + c.token_count,
            }
        })
    }

    pub fn total(&self) -> CellStats {
        Split::ALL.iter().fold(CellStats::default(), |acc, &s| {
            let c = self.split_total(s);
            CellStats {
                sample_count: acc.sample_count + c.sample_count,
                token_count: acc.token_count + c.token_count,
            }
        })
    }

    /// Plain-text table laid out like a split × class summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<8} {:>10} {:>12} {:>10} {:>12} {:>10} {:>12}\n",
            "split", "regular", "reg_tokens", "satirical", "sat_tokens", "total", "tokens"
        ));
        let row = |name: &str, r: CellStats, s: CellStats, t: CellStats| {
            format!(
                "{:<8} {:>10} {:>12} {:>10} {:>12} {:>10} {:>12}\n",
                name,
                r.sample_count,
                r.token_count,
                s.sample_count,
                s.token_count,
                t.sample_count,
                t.token_count
            )
        };
        for split in Split::ALL {
            out.push_str(&row(
                split.as_str(),
                self.cell(split, Label::Regular),
                self.cell(split, Label::Satirical),
                self.split_total(split),
            ));
        }
        out.push_str(&row(
            "total",
            self.label_total(Label::Regular),
            self.label_total(Label::Satirical),
            self.total(),
        ));
        out
    }
}

/// Whitespace-delimited token count of a text.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn corpus_stats(corpus: &LabeledCorpus) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for split in Split::ALL {
        let entry = stats.cells.entry(split).or_default();
        for label in Label::ALL {
            entry.entry(label).or_default();
        }
    }
    for a in &corpus.articles {
        let cell = stats
            .cells
            .get_mut(&a.split)
            .and_then(|m| m.get_mut(&a.label))
            .expect("all cells initialized");
        cell.sample_count += 1;
        cell.token_count += token_count(&document_text(a, TextMode::Full));
    }
    stats
}
