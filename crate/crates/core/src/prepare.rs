//! Conversion of raw article dumps into a corpus.
//!
//! Two layouts are accepted.
//!
//! A directory tree `<split>/<label>/[<source>/]<name>.txt`, where the first
//! line of each file is the title and the remaining lines are the body.
//! Files placed directly under the label directory get the source
//! `train-<label>` in the training split and `eval-<label>` otherwise.
//!
//! A CSV file with a header naming at least `title`, `body` (or `text`),
//! `label` and `split`; `id` and `source` columns are optional.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::{Article, Label, LabeledCorpus, Split};
use crate::error::{Error, Result};

/// Accepts the canonical label names and common aliases.
pub fn parse_label(s: &str) -> Result<Label> {
    match s.trim().to_ascii_lowercase().as_str() {
        "regular" | "real" | "0" => Ok(Label::Regular),
        "satirical" | "satire" | "1" => Ok(Label::Satirical),
        other => other.parse(),
    }
}

fn default_source(split: Split, label: Label) -> String {
    match split {
        Split::Train => format!("train-{label}"),
        _ => format!("eval-{label}"),
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn read_article(path: &Path) -> Result<(String, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let (title, body) = match text.split_once('\n') {
        Some((t, b)) => (t, b),
        None => (text, ""),
    };
    Ok((title.trim().to_string(), body.trim().to_string()))
}

/// Reads a `<split>/<label>/...` directory tree.
pub fn prepare_dir(root: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let root = root.as_ref();
    let mut articles = Vec::new();
    for split_dir in sorted_entries(root)? {
        if !split_dir.is_dir() {
            continue;
        }
        let name = split_dir.file_name().unwrap_or_default().to_string_lossy();
        let split: Split = name.parse().map_err(|_| Error::Format {
            path: split_dir.display().to_string(),
            message: format!("directory {name:?} is not a split (train, valid, test)"),
        })?;
        for label_dir in sorted_entries(&split_dir)? {
            if !label_dir.is_dir() {
                continue;
            }
            let lname = label_dir.file_name().unwrap_or_default().to_string_lossy();
            let label = parse_label(&lname).map_err(|_| Error::Format {
                path: label_dir.display().to_string(),
                message: format!("directory {lname:?} is not a label"),
            })?;
            let mut add = |file: &Path, source: String| -> Result<()> {
                let (title, body) = read_article(file)?;
                let stem = file.file_stem().unwrap_or_default().to_string_lossy();
                articles.push(Article {
                    id: format!("{split}-{source}-{stem}"),
                    title,
                    body,
                    label,
                    source,
                    split,
                });
                Ok(())
            };
            for entry in sorted_entries(&label_dir)? {
                if entry.is_dir() {
                    let source = entry.file_name().unwrap_or_default().to_string_lossy().into_owned();
                    for file in sorted_entries(&entry)? {
                        if file.extension().is_some_and(|e| e == "txt") {
                            add(&file, source.clone())?;
                        }
                    }
                } else if entry.extension().is_some_and(|e| e == "txt") {
                    add(&entry, default_source(split, label))?;
                }
            }
        }
    }
    if articles.is_empty() {
        return Err(Error::Format {
            path: root.display().to_string(),
            message: "no articles found".into(),
        });
    }
    LabeledCorpus::new(articles, Label::Satirical)
}

/// Reads a CSV dump.
pub fn prepare_csv(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .clone();
    let columns: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
        .collect();
    let need = |names: &[&str]| -> Result<usize> {
        names
            .iter()
            .find_map(|n| columns.get(*n).copied())
            .ok_or_else(|| Error::Format {
                path: path.display().to_string(),
                message: format!("missing column {:?}", names[0]),
            })
    };
    let (title, body, label, split) = (need(&["title"])?, need(&["body", "text"])?, need(&["label"])?, need(&["split"])?);
    let id = columns.get("id").copied();
    let source = columns.get("source").copied();

    let mut articles = Vec::new();
    for (row, record) in reader.records().enumerate() {
        // header is line 1
        let line = row + 2;
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        let record = record.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let l = parse_label(&field(label)).map_err(|e| bad(e.to_string()))?;
        let s: Split = field(split).trim().parse().map_err(|e: Error| bad(e.to_string()))?;
        articles.push(Article {
            id: id.map(&field).filter(|v| !v.is_empty()).unwrap_or_else(|| format!("row-{line}")),
            title: field(title).trim().to_string(),
            body: field(body).trim().to_string(),
            label: l,
            source: source
                .map(&field)
                .filter(|v| !v.is_empty())
                .unwrap_or_else(|| default_source(s, l)),
            split: s,
        });
    }
    LabeledCorpus::new(articles, Label::Satirical)
}

/// Dispatches on whether `input` is a directory or a file.
pub fn prepare(input: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let input = input.as_ref();
    if input.is_dir() {
        prepare_dir(input)
    } else {
        prepare_csv(input)
    }
}
