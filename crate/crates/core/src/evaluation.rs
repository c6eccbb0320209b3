//! Frame-level accuracy, per-class and macro F1, the weighted challenge
//! metric, and confusion matrices. Metrics are computed in exact rational
//! arithmetic and exposed both exactly and as `f64`.

use std::fmt::Write as _;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::sequencing::{NUM_CLASSES, UNANNOTATED_CLASS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub f1: f64,
    pub accuracy: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            f1: 0.67,
            accuracy: 0.33,
        }
    }
}

impl MetricWeights {
    pub fn new(f1: f64, accuracy: f64) -> Result<Self> {
        if !(f1.is_finite() && accuracy.is_finite() && f1 >= 0.0 && accuracy >= 0.0) {
            return Err(Error::Domain(format!(
                "metric weights must be finite and non-negative, got ({f1}, {accuracy})"
            )));
        }
        Ok(Self { f1, accuracy })
    }
}

impl FromStr for MetricWeights {
    type Err = Error;

    /// `"w_f1,w_acc"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [f1, acc] = parts.as_slice() else {
            return Err(Error::Usage(format!("weights must be 'w_f1,w_acc', got '{s}'")));
        };
        let parse = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad weight '{v}' in '{s}'")))
        };
        Self::new(parse(f1)?, parse(acc)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub weights: MetricWeights,
    /// Score frames whose ground truth is the unannotated class.
    pub include_class7: bool,
}

/// `counts[truth][pred]` over all frames, scored or not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: Vec<Vec<u64>>,
}

impl Default for Confusion {
    fn default() -> Self {
        Self {
            counts: vec![vec![0; NUM_CLASSES]; NUM_CLASSES],
        }
    }
}

impl Confusion {
    pub fn from_labels(predictions: &[u8], truth: &[u8]) -> Result<Self> {
        if predictions.len() != truth.len() {
            return Err(Error::LengthMismatch(format!(
                "{} predictions for {} ground-truth frames",
                predictions.len(),
                truth.len()
            )));
        }
        let mut c = Self::default();
        for (&p, &t) in predictions.iter().zip(truth) {
            if p as usize >= NUM_CLASSES || t as usize >= NUM_CLASSES {
                return Err(Error::Domain(format!("label pair ({t}, {p}) outside 0..=7")));
            }
            c.counts[t as usize][p as usize] += 1;
        }
        Ok(c)
    }

    /// Associative, commutative merge.
    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth\\pred");
        (0..NUM_CLASSES).for_each(|c| write!(s, ",{c}").expect("string write"));
        s.push('\n');
        for (t, row) in self.counts.iter().enumerate() {
            write!(s, "{t}").expect("string write");
            row.iter().for_each(|v| write!(s, ",{v}").expect("string write"));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScore {
    pub class: u8,
    pub support: u64,
    pub predicted: u64,
    pub true_positives: u64,
    pub f1: BigRational,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: BigRational,
    /// One entry per evaluated class, ascending.
    pub per_class: Vec<ClassScore>,
    pub macro_f1: BigRational,
    pub combined: BigRational,
}

impl Metrics {
    pub fn accuracy_f64(&self) -> f64 {
        to_f64(&self.accuracy)
    }

    pub fn macro_f1_f64(&self) -> f64 {
        to_f64(&self.macro_f1)
    }

    pub fn combined_f64(&self) -> f64 {
        to_f64(&self.combined)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub confusion: Confusion,
    /// Frames that entered the metrics.
    pub scored_frames: u64,
    /// `None` when no frame is scorable.
    pub metrics: Option<Metrics>,
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn rational(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn exact_weight(w: f64) -> BigRational {
    BigRational::from_float(w).expect("weights validated finite")
}

pub fn evaluate(predictions: &[u8], truth: &[u8], options: EvalOptions) -> Result<EvalReport> {
    Ok(evaluate_confusion(Confusion::from_labels(predictions, truth)?, options))
}

/// Metrics from a (possibly merged) confusion matrix. Rows of the
/// unannotated class are skipped unless `include_class7`; F1 is
/// `2TP / (2TP + FP + FN)` (0 when the denominator is 0), averaged over the
/// scorable classes present in truth or predictions.
pub fn evaluate_confusion(confusion: Confusion, options: EvalOptions) -> EvalReport {
    let scored_rows: Vec<usize> = (0..NUM_CLASSES)
        .filter(|&c| options.include_class7 || c != UNANNOTATED_CLASS as usize)
        .collect();
    let m = &confusion.counts;
    let scored: u64 = scored_rows.iter().map(|&r| confusion.row_sum(r)).sum();
    if scored == 0 {
        return EvalReport {
            options,
            confusion,
            scored_frames: 0,
            metrics: None,
        };
    }
    let correct: u64 = scored_rows.iter().map(|&r| m[r][r]).sum();
    let accuracy = rational(correct, scored);

    let mut per_class = Vec::new();
    for &c in &scored_rows {
        let support = confusion.row_sum(c);
        let predicted: u64 = scored_rows.iter().map(|&r| m[r][c]).sum();
        if support == 0 && predicted == 0 {
            continue;
        }
        let tp = m[c][c];
        let (fp, fn_) = (predicted - tp, support - tp);
        let f1 = if tp == 0 {
            BigRational::zero()
        } else {
            rational(2 * tp, 2 * tp + fp + fn_)
        };
        per_class.push(ClassScore {
            class: c as u8,
            support,
            predicted,
            true_positives: tp,
            f1,
        });
    }
    let sum = per_class
        .iter()
        .fold(BigRational::zero(), |acc, s| acc + &s.f1);
    let macro_f1 = sum / BigInt::from(per_class.len());
    let combined = exact_weight(options.weights.f1) * &macro_f1 + exact_weight(options.weights.accuracy) * &accuracy;
    EvalReport {
        options,
        confusion,
        scored_frames: scored,
        metrics: Some(Metrics {
            accuracy,
            per_class,
            macro_f1,
            combined,
        }),
    }
}

impl EvalReport {
    pub fn combined(&self) -> Option<f64> {
        self.metrics.as_ref().map(Metrics::combined_f64)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let metrics = self.metrics.as_ref().map(|m| {
            json!({
                "accuracy": m.accuracy_f64(),
                "macro_f1": m.macro_f1_f64(),
                "combined": m.combined_f64(),
                "accuracy_exact": m.accuracy.to_string(),
                "macro_f1_exact": m.macro_f1.to_string(),
                "per_class": m.per_class.iter().map(|s| json!({
                    "class": s.class,
                    "support": s.support,
                    "predicted": s.predicted,
                    "f1": to_f64(&s.f1),
                    "f1_exact": s.f1.to_string(),
                })).collect::<Vec<_>>(),
            })
        });
        json!({
            "weights": self.options.weights,
            "include_class7": self.options.include_class7,
            "frames": self.confusion.total(),
            "scored_frames": self.scored_frames,
            "evaluable": self.metrics.is_some(),
            "metrics": metrics,
            "confusion": self.confusion.counts,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let w = self.options.weights;
        let _ = writeln!(s, "frames  {} ({} scored)", self.confusion.total(), self.scored_frames);
        let Some(m) = &self.metrics else {
            s.push_str("no evaluable frames\n");
            return s;
        };
        let _ = writeln!(s, "accuracy  {:.4}", m.accuracy_f64());
        let _ = writeln!(s, "macro F1  {:.4}", m.macro_f1_f64());
        let _ = writeln!(s, "combined  {:.4}  ({} * F1 + {} * acc)", m.combined_f64(), w.f1, w.accuracy);
        let _ = writeln!(s, "\nclass  support  predicted  f1");
        for c in &m.per_class {
            let _ = writeln!(
                s,
                "{:>5}  {:>7}  {:>9}  {:.4}",
                c.class,
                c.support,
                c.predicted,
                to_f64(&c.f1)
            );
        }
        s
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mode: String,
    pub recurrent: String,
    pub combined: Option<f64>,
}

fn features_label(mode: &str) -> String {
    match mode {
        "audio" => "Audio only".into(),
        "video" => "Video only (OpenFace)".into(),
        "fused" => "Audio+Video".into(),
        other => other.into(),
    }
}

fn mode_rank(mode: &str) -> usize {
    ["audio", "video", "fused"]
        .iter()
        .position(|m| *m == mode)
        .unwrap_or(3)
}

/// `Features | Model | Performance` table, rows in audio, video, fused
/// order (stable for anything else).
pub fn render_results_table(rows: &[ResultRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Usage("no evaluation summaries to report".into()));
    }
    let mut rows: Vec<&ResultRow> = rows.iter().collect();
    rows.sort_by_key(|r| mode_rank(&r.mode));
    let cells: Vec<[String; 3]> = rows
        .iter()
        .map(|r| {
            [
                features_label(&r.mode),
                format!("{} layers", r.recurrent.to_uppercase()),
                r.combined
                    .map_or("n/a".into(), |c| format!("{:.1}%", 100.0 * c)),
            ]
        })
        .collect();
    let header = ["Features", "Model", "Performance"];
    let widths: Vec<usize> = (0..3)
        .map(|i| cells.iter().map(|c| c[i].len()).chain([header[i].len()]).max().unwrap_or(0))
        .collect();
    let line = |c: [&str; 3]| {
        format!(
            "| {:<w0$} | {:<w1$} | {:>w2$} |\n",
            c[0],
            c[1],
            c[2],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        )
    };
    let rule = format!(
        "|{}|{}|{}|\n",
        "-".repeat(widths[0] + 2),
        "-".repeat(widths[1] + 2),
        "-".repeat(widths[2] + 2)
    );
    let mut out = line(header);
    out.push_str(&rule);
    for c in &cells {
        out.push_str(&line([&c[0], &c[1], &c[2]]));
    }
    Ok(out)
}
