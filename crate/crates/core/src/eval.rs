//! Accuracy and paired McNemar testing of ±1 predictions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// χ² critical value with one degree of freedom at the 0.05 level.
pub const CHI2_CRITICAL_05: f64 = 3.841459;

/// Confusion counts with +1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: i8,
    pub predicted: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Confusion,
    pub predictions: Vec<PredictionRecord>,
}

fn check_sign(v: i8) -> Result<i8> {
    match v {
        1 | -1 => Ok(v),
        other => Err(Error::arg(format!("labels must be +1 or -1, got {other}"))),
    }
}

/// Accuracy of `pred` against `gold`; records are keyed by position.
pub fn accuracy(pred: &[i8], gold: &[i8]) -> Result<EvalReport> {
    let ids: Vec<String> = (0..pred.len()).map(|i| i.to_string()).collect();
    evaluate(&ids, pred, gold)
}

pub fn evaluate(ids: &[String], pred: &[i8], gold: &[i8]) -> Result<EvalReport> {
    if pred.is_empty() {
        return Err(Error::arg("cannot evaluate an empty prediction list"));
    }
    if pred.len() != gold.len() || ids.len() != pred.len() {
        return Err(Error::arg(format!(
            "length mismatch: {} ids, {} predictions, {} gold labels",
            ids.len(),
            pred.len(),
            gold.len()
        )));
    }
    let mut c = Confusion::default();
    let mut predictions = Vec::with_capacity(pred.len());
    for ((id, &p), &g) in ids.iter().zip(pred).zip(gold) {
        let (p, g) = (check_sign(p)?, check_sign(g)?);
        match (p, g) {
            (1, 1) => c.tp += 1,
            (1, _) => c.fp += 1,
            (_, 1) => c.fn_ += 1,
            _ => c.tn += 1,
        }
        predictions.push(PredictionRecord {
            id: id.clone(),
            gold: g,
            predicted: p,
        });
    }
    Ok(EvalReport {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        confusion: c,
        predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McNemarResult {
    /// A wrong, B right.
    pub n01: usize,
    /// A right, B wrong.
    pub n10: usize,
    pub statistic: f64,
    pub significant: bool,
    pub continuity_correction: bool,
}

/// Continuity-corrected McNemar test.
pub fn mcnemar(pred_a: &[i8], pred_b: &[i8], gold: &[i8]) -> Result<McNemarResult> {
    mcnemar_with(pred_a, pred_b, gold, true)
}

pub fn mcnemar_with(pred_a: &[i8], pred_b: &[i8], gold: &[i8], continuity_correction: bool) -> Result<McNemarResult> {
    if pred_a.len() != gold.len() || pred_b.len() != gold.len() {
        return Err(Error::arg(format!(
            "length mismatch: {}, {} predictions for {} gold labels",
            pred_a.len(),
            pred_b.len(),
            gold.len()
        )));
    }
    let (mut n01, mut n10) = (0usize, 0usize);
    for ((a, b), g) in pred_a.iter().zip(pred_b).zip(gold) {
        match (a == g, b == g) {
            (false, true) => n01 += 1,
            (true, false) => n10 += 1,
            _ => {}
        }
    }
    Ok(mcnemar_from_counts(n01, n10, continuity_correction))
}

pub fn mcnemar_from_counts(n01: usize, n10: usize, continuity_correction: bool) -> McNemarResult {
    let discordant = n01 + n10;
    let statistic = if discordant == 0 {
        0.0
    } else {
        let diff = (n01 as f64 - n10 as f64).abs();
        let diff = if continuity_correction { diff - 1.0 } else { diff };
        diff * diff / discordant as f64
    };
    McNemarResult {
        n01,
        n10,
        statistic,
        significant: discordant > 0 && statistic > CHI2_CRITICAL_05,
        continuity_correction,
    }
}

/// One line of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub method: String,
    pub valid_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    /// Significantly better than its baseline (printed with a dagger).
    #[serde(default)]
    pub significant: bool,
}

/// Plain-text table with accuracies in percent; `†` marks significance.
pub fn render_table(rows: &[TableRow]) -> String {
    let width = rows.iter().map(|r| r.method.chars().count()).max().unwrap_or(6).max(6);
    let pct = |v: Option<f64>, dagger: bool| match v {
        Some(v) => format!("{:.2}%{}", v * 100.0, if dagger { "†" } else { " " }),
        None => "-".to_string(),
    };
    let mut out = format!("{:<width$}  {:>10}  {:>10}\n", "Method", "Validation", "Test");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>10}  {:>10}\n",
            r.method,
            pct(r.valid_accuracy, r.significant),
            pct(r.test_accuracy, r.significant)
        ));
    }
    out
}
