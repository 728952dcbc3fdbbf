//! Character n-gram profiles and the presence-bits / histogram-intersection
//! string kernels.
//!
//! Characters are Unicode scalar values, so an accented letter counts as one
//! symbol regardless of its UTF-8 width.
//!
//! ```
//! use satirekit::ngram::{extract_profile, kernel_value, KernelKind};
//!
//! let p = extract_profile("banana", 3).unwrap();
//! let q = extract_profile("ananas", 3).unwrap();
//! assert_eq!(kernel_value(&p, &q, KernelKind::Hisk).unwrap(), 3.0);
//! assert_eq!(kernel_value(&p, &q, KernelKind::Pbsk).unwrap(), 2.0);
//! ```

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::KernelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// Number of distinct shared n-grams.
    Pbsk,
    /// Sum over n-grams of the smaller occurrence count.
    Hisk,
    /// Dot product of dense vectors.
    Linear,
}

impl KernelKind {
    pub fn code(self) -> u8 {
        match self {
            KernelKind::Pbsk => 0,
            KernelKind::Hisk => 1,
            KernelKind::Linear => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(KernelKind::Pbsk),
            1 => Some(KernelKind::Hisk),
            2 => Some(KernelKind::Linear),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::Pbsk => "pbsk",
            KernelKind::Hisk => "hisk",
            KernelKind::Linear => "linear",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pbsk" => Ok(KernelKind::Pbsk),
            "hisk" => Ok(KernelKind::Hisk),
            "linear" => Ok(KernelKind::Linear),
            other => Err(Error::arg(format!("unknown kernel kind {other:?}"))),
        }
    }
}

/// When an n-gram counts as present for the presence-bits kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceRule {
    /// Count ≥ 1.
    #[default]
    AtLeastOnce,
    /// Count ≥ 2.
    MoreThanOnce,
}

impl FromStr for PresenceRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "at_least_once" => Ok(PresenceRule::AtLeastOnce),
            "more_than_once" => Ok(PresenceRule::MoreThanOnce),
            other => Err(Error::arg(format!(
                "unknown presence rule {other:?} (expected at_least_once or more_than_once)"
            ))),
        }
    }
}

impl PresenceRule {
    fn threshold(self) -> u32 {
        match self {
            PresenceRule::AtLeastOnce => 1,
            PresenceRule::MoreThanOnce => 2,
        }
    }
}

/// A string kernel over n-gram profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StringKernel {
    pub kind: KernelKind,
    #[serde(default)]
    pub presence: PresenceRule,
}

impl StringKernel {
    pub fn new(kind: KernelKind) -> Result<Self> {
        if kind == KernelKind::Linear {
            return Err(Error::arg("the linear kernel applies to dense vectors, not n-gram profiles"));
        }
        Ok(StringKernel {
            kind,
            presence: PresenceRule::default(),
        })
    }

    pub fn with_presence(mut self, presence: PresenceRule) -> Self {
        self.presence = presence;
        self
    }

    /// Feature value φ_g(x) for an n-gram occurring `count` times.
    #[inline]
    pub fn feature(&self, count: u32) -> u32 {
        match self.kind {
            KernelKind::Hisk => count,
            _ => u32::from(count >= self.presence.threshold()),
        }
    }

    pub fn eval(&self, p: &NgramProfile, q: &NgramProfile) -> Result<f64> {
        if p.n != q.n {
            return Err(Error::arg(format!(
                "profiles use different n-gram lengths ({} vs {})",
                p.n, q.n
            )));
        }
        let (small, large) = if p.counts.len() <= q.counts.len() {
            (p, q)
        } else {
            (q, p)
        };
        let mut sum: u64 = 0;
        for (gram, &c) in &small.counts {
            if let Some(&d) = large.counts.get(gram) {
                sum += u64::from(self.feature(c).min(self.feature(d)));
            }
        }
        Ok(sum as f64)
    }
}

/// Sparse character n-gram histogram of one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramProfile {
    n: usize,
    counts: HashMap<String, u32>,
    total: usize,
}

impl NgramProfile {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of n-gram windows, i.e. `max(0, chars - n + 1)`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn count(&self, gram: &str) -> u32 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> + '_ {
        self.counts.iter().map(|(g, &c)| (g.as_str(), c))
    }
}

pub fn extract_profile(text: &str, n: usize) -> Result<NgramProfile> {
    if n == 0 {
        return Err(Error::arg("n-gram length must be at least 1"));
    }
    let mut bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
    bounds.push(text.len());
    let chars = bounds.len() - 1;
    let mut counts: HashMap<String, u32> = HashMap::new();
    let total = (chars + 1).saturating_sub(n);
    for start in 0..total {
        let gram = &text[bounds[start]..bounds[start + n]];
        match counts.get_mut(gram) {
            Some(c) => *c += 1,
            None => {
                counts.insert(gram.to_string(), 1);
            }
        }
    }
    Ok(NgramProfile { n, counts, total })
}

/// Kernel value with the default presence rule. `kind` must be PBSK or HISK.
pub fn kernel_value(p: &NgramProfile, q: &NgramProfile, kind: KernelKind) -> Result<f64> {
    StringKernel::new(kind)?.eval(p, q)
}

/// Profiles of a list of documents, all with the same n.
#[derive(Debug, Clone)]
pub struct ProfileSet {
    pub ids: Vec<String>,
    pub profiles: Vec<NgramProfile>,
    n: usize,
}

impl ProfileSet {
    pub fn new(ids: Vec<String>, profiles: Vec<NgramProfile>) -> Result<Self> {
        if ids.len() != profiles.len() {
            return Err(Error::arg(format!(
                "{} ids for {} profiles",
                ids.len(),
                profiles.len()
            )));
        }
        let n = profiles.first().map_or(0, |p| p.n);
        if let Some(p) = profiles.iter().find(|p| p.n != n) {
            return Err(Error::arg(format!(
                "mixed n-gram lengths in profile set ({} and {})",
                n, p.n
            )));
        }
        Ok(ProfileSet { ids, profiles, n })
    }

    /// Extracts profiles in parallel.
    pub fn from_texts<S: AsRef<str> + Sync>(ids: Vec<String>, texts: &[S], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::arg("n-gram length must be at least 1"));
        }
        let profiles = texts
            .par_iter()
            .map(|t| extract_profile(t.as_ref(), n))
            .collect::<Result<Vec<_>>>()?;
        let mut set = ProfileSet::new(ids, profiles)?;
        set.n = n;
        Ok(set)
    }

    /// n-gram length, or 0 for an empty set built without a length.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn self_kernels(&self, kernel: StringKernel) -> Vec<f64> {
        self.profiles
            .iter()
            .map(|p| p.counts.values().map(|&c| f64::from(kernel.feature(c))).sum())
            .collect()
    }
}

/// Profiles re-encoded as id-sorted sparse vectors over a shared vocabulary,
/// with kernel features already applied.
struct Interned {
    rows: Vec<Vec<(u32, u32)>>,
}

fn intern(sets: &[&ProfileSet], kernel: StringKernel) -> Vec<Interned> {
    let mut vocab: HashMap<&str, u32> = HashMap::new();
    let mut out = Vec::with_capacity(sets.len());
    for set in sets {
        let mut rows = Vec::with_capacity(set.len());
        for p in &set.profiles {
            let mut v: Vec<(u32, u32)> = p
                .counts
                .iter()
                .filter_map(|(g, &c)| {
                    let f = kernel.feature(c);
                    if f == 0 {
                        return None;
                    }
                    let next = vocab.len() as u32;
                    let id = *vocab.entry(g.as_str()).or_insert(next);
                    Some((id, f))
                })
                .collect();
            v.sort_unstable_by_key(|&(id, _)| id);
            rows.push(v);
        }
        out.push(Interned { rows });
    }
    out
}

#[inline]
fn merge_min(a: &[(u32, u32)], b: &[(u32, u32)]) -> u64 {
    let (mut i, mut j) = (0, 0);
    let mut sum = 0u64;
    while i < a.len() && j < b.len() {
        let (ga, ca) = a[i];
        let (gb, cb) = b[j];
        match ga.cmp(&gb) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += u64::from(ca.min(cb));
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

fn check_n(a: &ProfileSet, b: &ProfileSet) -> Result<usize> {
    match (a.is_empty(), b.is_empty()) {
        (false, false) if a.n != b.n => Err(Error::arg(format!(
            "mixed n-gram lengths across blocks ({} vs {})",
            a.n, b.n
        ))),
        (true, _) => Ok(b.n),
        _ => Ok(a.n),
    }
}

/// Kernel values between every row profile and every column profile.
///
/// When `rows` and `cols` are the same set, only the upper triangle is
/// computed and mirrored, so the result is exactly symmetric.
pub fn gram_block(rows: &ProfileSet, cols: &ProfileSet, kernel: StringKernel) -> Result<KernelMatrix> {
    if kernel.kind == KernelKind::Linear {
        return Err(Error::arg("gram_block needs a string kernel (pbsk or hisk)"));
    }
    if std::ptr::eq(rows, cols) {
        return gram_symmetric(rows, kernel);
    }
    let n = check_n(rows, cols)?;
    let interned = intern(&[rows, cols], kernel);
    let (r, c) = (&interned[0].rows, &interned[1].rows);
    let width = cols.len();
    let mut values = vec![0.0; rows.len() * width];
    if width > 0 {
        values
            .par_chunks_mut(width)
            .zip(r.par_iter())
            .for_each(|(out, a)| {
                for (slot, b) in out.iter_mut().zip(c) {
                    *slot = merge_min(a, b) as f64;
                }
            });
    }
    KernelMatrix::new(
        rows.ids.clone(),
        cols.ids.clone(),
        values,
        kernel.kind,
        n,
    )
}

/// Square Gram matrix of a profile set with itself.
pub fn gram_symmetric(set: &ProfileSet, kernel: StringKernel) -> Result<KernelMatrix> {
    if kernel.kind == KernelKind::Linear {
        return Err(Error::arg("gram_symmetric needs a string kernel (pbsk or hisk)"));
    }
    let interned = intern(&[set], kernel);
    let r = &interned[0].rows;
    let m = set.len();
    let mut values = vec![0.0; m * m];
    if m > 0 {
        values.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
            for j in i..m {
                out[j] = merge_min(&r[i], &r[j]) as f64;
            }
        });
        for i in 0..m {
            for j in 0..i {
                values[i * m + j] = values[j * m + i];
            }
        }
    }
    KernelMatrix::new(set.ids.clone(), set.ids.clone(), values, kernel.kind, set.n)
}

/// Cosine normalization `K[i][j] / sqrt(self_a[i] * self_b[j])`. Rows or
/// columns whose self-kernel is zero map to 0.
pub fn normalize_gram(k: &KernelMatrix, self_a: &[f64], self_b: &[f64]) -> Result<KernelMatrix> {
    if self_a.len() != k.rows() || self_b.len() != k.cols() {
        return Err(Error::arg(format!(
            "normalization vectors ({}, {}) do not match a {}x{} matrix",
            self_a.len(),
            self_b.len(),
            k.rows(),
            k.cols()
        )));
    }
    if let Some(v) = self_a.iter().chain(self_b).find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::arg(format!("self-kernel value {v} is not a non-negative number")));
    }
    let cols = k.cols();
    let mut values = k.values().to_vec();
    for (i, row) in values.chunks_mut(cols.max(1)).enumerate().take(k.rows()) {
        for (j, v) in row.iter_mut().enumerate() {
            let d = self_a[i] * self_b[j];
            *v = if d > 0.0 { *v / d.sqrt() } else { 0.0 };
        }
    }
    KernelMatrix::new(
        k.row_ids().to_vec(),
        k.col_ids().to_vec(),
        values,
        k.kind(),
        k.n(),
    )
}
