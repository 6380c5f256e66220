//! Evaluation metrics: ROC AUC, Matthews correlation, support-weighted
//! precision/recall/F1 and BCE, plus report tables over repeated runs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Probabilities are clipped to `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-12;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn from_predictions(predictions: &[bool], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &y) in predictions.iter().zip(labels) {
            match (p, y) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn mcc(&self) -> f64 {
        let (tp, tn, fp, fn_) = (self.tp as f64, self.tn as f64, self.fp as f64, self.fn_ as f64);
        let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
        if factors.contains(&0.0) {
            return 0.0;
        }
        (tp * tn - fp * fn_) / factors.iter().product::<f64>().sqrt()
    }

    /// Support-weighted `(precision, recall, f1)` over both classes.
    pub fn weighted_prf(&self) -> (f64, f64, f64) {
        let n = self.total() as f64;
        if n == 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        // (true positives, predicted count, support) for class 1 then class 0.
        let classes = [
            (self.tp, self.tp + self.fp, self.tp + self.fn_),
            (self.tn, self.tn + self.fn_, self.tn + self.fp),
        ];
        let mut out = (0.0, 0.0, 0.0);
        for (hit, predicted, support) in classes {
            let p = ratio(hit, predicted);
            let r = ratio(hit, support);
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            let w = support as f64 / n;
            out.0 += w * p;
            out.1 += w * r;
            out.2 += w * f;
        }
        out
    }
}

/// Mann-Whitney estimate of the ROC AUC: concordant positive/negative
/// pairs plus half the tied pairs, over all pairs.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Twice the statistic, kept integral: 2·concordant + ties.
    let mut twice = 0u128;
    let mut negatives_below = 0u128;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    Ok(twice as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn mcc(predictions: &[bool], labels: &[bool]) -> f64 {
    Confusion::from_predictions(predictions, labels).mcc()
}

pub fn weighted_prf(predictions: &[bool], labels: &[bool]) -> (f64, f64, f64) {
    Confusion::from_predictions(predictions, labels).weighted_prf()
}

pub fn bce(scores: &[f64], labels: &[bool]) -> f64 {
    let sum: f64 = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let p = s.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    sum / scores.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision_w: f64,
    pub recall_w: f64,
    pub f1_w: f64,
    pub mcc: f64,
    pub auc_roc: f64,
    pub bce: f64,
    pub n: usize,
    pub threshold: f64,
    pub confusion: Confusion,
}

/// Scores at or above `threshold` are predicted in-time.
pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<EvalReport> {
    if scores.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    let auc_roc = roc_auc(scores, labels)?;
    let predictions: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    let confusion = Confusion::from_predictions(&predictions, labels);
    let (precision_w, recall_w, f1_w) = confusion.weighted_prf();
    Ok(EvalReport {
        precision_w,
        recall_w,
        f1_w,
        mcc: confusion.mcc(),
        auc_roc,
        bce: bce(scores, labels),
        n: scores.len(),
        threshold,
        confusion,
    })
}

/// Mean and sample standard deviation of a metric over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        Self {
            mean: stats::mean(values),
            std: stats::std_dev(values),
        }
    }
}

impl std::fmt::Display for MeanStd {
    /// `0.707 (±.010)`
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let std = format!("{:.3}", self.std);
        let std = std.strip_prefix('0').unwrap_or(&std);
        write!(f, "{:.3} (±{std})", self.mean)
    }
}

/// Per-metric aggregates over seeds, in table column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: usize,
    pub precision_w: MeanStd,
    pub recall_w: MeanStd,
    pub f1_w: MeanStd,
    pub mcc: MeanStd,
    pub auc_roc: MeanStd,
}

impl ReportSummary {
    pub fn of(reports: &[EvalReport]) -> Self {
        let col = |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.iter().map(f).collect::<Vec<_>>());
        Self {
            runs: reports.len(),
            precision_w: col(|r| r.precision_w),
            recall_w: col(|r| r.recall_w),
            f1_w: col(|r| r.f1_w),
            mcc: col(|r| r.mcc),
            auc_roc: col(|r| r.auc_roc),
        }
    }
}

/// A named group of rows (one model family) in a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableSection {
    pub title: String,
    pub rows: Vec<(String, ReportSummary)>,
}

/// Aligned text table with Precision, Recall, F1-score, MCC and AUC_ROC
/// columns, each `mean (±std)`.
pub fn format_table(sections: &[TableSection]) -> String {
    let header = ["PPM technique", "Precision", "Recall", "F1-score", "MCC", "AUC_ROC"];
    let mut lines: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
    for section in sections {
        lines.push(vec![section.title.clone()]);
        for (name, s) in &section.rows {
            lines.push(vec![
                format!("  {name}"),
                s.precision_w.to_string(),
                s.recall_w.to_string(),
                s.f1_w.to_string(),
                s.mcc.to_string(),
                s.auc_roc.to_string(),
            ]);
        }
    }
    let cols = header.len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            lines
                .iter()
                .filter(|l| l.len() == cols)
                .map(|l| l[c].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for line in &lines {
        if line.len() < cols {
            out.push_str(&line[0]);
        } else {
            for (c, cell) in line.iter().enumerate() {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    out.push_str(cell);
                    out.push_str(&" ".repeat(pad));
                } else {
                    out.push_str("  ");
                    out.push_str(&" ".repeat(pad));
                    out.push_str(cell);
                }
            }
        }
        out.push('\n');
    }
    out
}
