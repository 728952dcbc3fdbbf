//! Discriminative feature extraction.
//!
//! For string-kernel models the dual coefficients are mapped back to one
//! weight per training n-gram, `w_g = Σ_i α_i φ_g(x_i)`, where `φ_g` is the
//! presence bit (PBSK) or the count (HISK). For dense embedding models each
//! word occurrence is scored by the cosine between its vector and the weight
//! vector, and scores are summed over the whole data set. Bigrams multiply
//! the cosines of two consecutive words of the same document.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::learner::{DualModel, PrimalModel};
use crate::matrix::dot;
use crate::ngram::{KernelKind, NgramProfile, ProfileSet, StringKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub class: Label,
    pub rank: usize,
    pub feature: String,
    /// Positive values point to the positive class.
    pub score: f64,
}

/// Primal weights recovered from a string-kernel dual model.
///
/// Both kernels are dot products of unary features `[#(x,g) ≥ k]`: PBSK
/// keeps only the presence level, HISK keeps one level per occurrence since
/// `min(a, b) = Σ_k [a ≥ k][b ≥ k]`. `levels[g][k-1]` is the weight of level
/// `k` of n-gram `g`.
#[derive(Debug, Clone)]
pub struct NgramWeights {
    pub kernel: StringKernel,
    pub n: usize,
    pub levels: HashMap<String, Vec<f64>>,
}

impl NgramWeights {
    /// Number of active unary levels for an n-gram seen `count` times.
    fn active_levels(&self, count: u32) -> usize {
        match self.kernel.kind {
            KernelKind::Hisk => count as usize,
            _ => self.kernel.feature(count) as usize,
        }
    }

    /// Per-n-gram weight `Σ_i α_i φ_g(x_i)` with φ the presence bit (PBSK)
    /// or the count (HISK), i.e. the sum of the n-gram's level weights.
    pub fn weight(&self, gram: &str) -> f64 {
        self.levels.get(gram).map_or(0.0, |v| v.iter().sum())
    }

    pub fn weights(&self) -> impl Iterator<Item = (String, f64)> + '_ {
        self.levels.iter().map(|(g, v)| (g.clone(), v.iter().sum()))
    }

    /// Explicit primal score; equals the dual score `Σ_i α_i K(x_i, x)`.
    pub fn score(&self, profile: &NgramProfile) -> Result<f64> {
        if profile.n() != self.n {
            return Err(Error::arg(format!(
                "profile uses {}-grams but the weights are over {}-grams",
                profile.n(),
                self.n
            )));
        }
        let mut terms: Vec<(&str, f64)> = profile
            .iter()
            .filter_map(|(g, c)| {
                let levels = self.levels.get(g)?;
                let active = self.active_levels(c).min(levels.len());
                Some((g, levels[..active].iter().sum()))
            })
            .collect();
        terms.sort_unstable_by(|a, b| a.0.cmp(b.0));
        Ok(terms.into_iter().map(|(_, v)| v).sum())
    }
}

pub fn recover_ngram_weights(model: &DualModel, train: &ProfileSet) -> Result<NgramWeights> {
    if model.kind == KernelKind::Linear {
        return Err(Error::arg("n-gram weights need a string-kernel model"));
    }
    if train.ids != model.train_ids || model.coefficients.len() != train.len() {
        return Err(Error::arg("profiles do not correspond to the model's training ids"));
    }
    if !train.is_empty() && train.n() != model.n {
        return Err(Error::arg(format!(
            "profiles use {}-grams but the model was trained on {}-grams",
            train.n(),
            model.n
        )));
    }
    let mut out = NgramWeights {
        kernel: StringKernel {
            kind: model.kind,
            presence: model.presence,
        },
        n: model.n,
        levels: HashMap::new(),
    };
    for (profile, &alpha) in train.profiles.iter().zip(&model.coefficients) {
        for (g, c) in profile.iter() {
            let active = out.active_levels(c);
            if active == 0 {
                continue;
            }
            let levels = match out.levels.get_mut(g) {
                Some(v) => v,
                None => out.levels.entry(g.to_string()).or_default(),
            };
            if levels.len() < active {
                levels.resize(active, 0.0);
            }
            for w in &mut levels[..active] {
                *w += alpha;
            }
        }
    }
    Ok(out)
}

/// One ranked weight per training n-gram.
pub fn primal_ngram_weights(model: &DualModel, train: &ProfileSet, class_positive: Label) -> Result<Vec<RankedFeature>> {
    let w = recover_ngram_weights(model, train)?;
    Ok(rank_features(w.weights(), class_positive))
}

/// Splits features by sign (0 goes with the positive class) and ranks each
/// side by decreasing magnitude. Equal scores are ordered by feature text.
pub fn rank_features<I>(scores: I, class_positive: Label) -> Vec<RankedFeature>
where
    I: IntoIterator<Item = (String, f64)>,
{
    let (mut pos, mut neg): (Vec<(String, f64)>, Vec<(String, f64)>) =
        scores.into_iter().partition(|(_, s)| *s >= 0.0);
    pos.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    neg.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let label = |class: Label, v: Vec<(String, f64)>| {
        v.into_iter()
            .enumerate()
            .map(move |(i, (feature, score))| RankedFeature {
                class,
                rank: i + 1,
                feature,
                score,
            })
    };
    label(class_positive, pos)
        .chain(label(class_positive.other(), neg))
        .collect()
}

/// First `k` features of each class.
pub fn top_k(features: &[RankedFeature], k: usize) -> Vec<RankedFeature> {
    features.iter().filter(|f| f.rank <= k).cloned().collect()
}

/// Contextual vector of one word occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct WordOccurrence {
    pub doc_id: String,
    pub position: usize,
    pub word: String,
    pub vector: Vec<f64>,
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine of every occurrence with the weights, grouped per document in
/// position order. Documents are visited in id order.
fn occurrence_cosines<'a>(
    occurrences: &'a [WordOccurrence],
    model: &PrimalModel,
) -> Result<BTreeMap<&'a str, Vec<(usize, &'a str, f64)>>> {
    let wn = norm(&model.weights);
    if !(wn.is_finite() && wn > 0.0) {
        return Err(Error::Numerical("model weight vector has zero norm".into()));
    }
    let mut docs: BTreeMap<&str, Vec<(usize, &str, f64)>> = BTreeMap::new();
    for occ in occurrences {
        if occ.vector.len() != model.weights.len() {
            return Err(Error::arg(format!(
                "word vector of dimension {} for a model of dimension {}",
                occ.vector.len(),
                model.weights.len()
            )));
        }
        let en = norm(&occ.vector);
        let cos = if en > 0.0 {
            dot(&occ.vector, &model.weights) / (en * wn)
        } else {
            0.0
        };
        docs.entry(occ.doc_id.as_str())
            .or_default()
            .push((occ.position, occ.word.as_str(), cos));
    }
    for v in docs.values_mut() {
        v.sort_by_key(|&(pos, _, _)| pos);
    }
    Ok(docs)
}

pub fn word_score_map(occurrences: &[WordOccurrence], model: &PrimalModel) -> Result<HashMap<String, f64>> {
    let docs = occurrence_cosines(occurrences, model)?;
    let mut scores: HashMap<String, f64> = HashMap::new();
    for (_, word, cos) in docs.values().flatten() {
        *scores.entry((*word).to_string()).or_insert(0.0) += cos;
    }
    Ok(scores)
}

pub fn bigram_score_map(occurrences: &[WordOccurrence], model: &PrimalModel) -> Result<HashMap<String, f64>> {
    let docs = occurrence_cosines(occurrences, model)?;
    let mut scores: HashMap<String, f64> = HashMap::new();
    for words in docs.values() {
        for pair in words.windows(2) {
            let (_, w1, c1) = pair[0];
            let (_, w2, c2) = pair[1];
            *scores.entry(format!("{w1} {w2}")).or_insert(0.0) += c1 * c2;
        }
    }
    Ok(scores)
}

pub fn embedding_word_scores(
    occurrences: &[WordOccurrence],
    model: &PrimalModel,
    class_positive: Label,
) -> Result<Vec<RankedFeature>> {
    Ok(rank_features(word_score_map(occurrences, model)?, class_positive))
}

pub fn embedding_bigram_scores(
    occurrences: &[WordOccurrence],
    model: &PrimalModel,
    class_positive: Label,
) -> Result<Vec<RankedFeature>> {
    Ok(rank_features(bigram_score_map(occurrences, model)?, class_positive))
}

fn escape_tsv(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

/// TSV with columns class, rank, feature, score.
pub fn write_ranked_tsv(features: &[RankedFeature], mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "class\trank\tfeature\tscore")?;
    for f in features {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.9e}",
            f.class,
            f.rank,
            escape_tsv(&f.feature),
            f.score
        )?;
    }
    w.flush()
}
