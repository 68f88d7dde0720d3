//! Alignment-based character and word error rates.
//!
//! Both rates are `(S + D + I) / N × 100` over their unit (codepoints or
//! space-separated words), with `N` the reference length. Rates are not
//! clamped and can exceed 100 when the hypothesis has many insertions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::GroundTruth;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("reference has no units; the error rate is undefined")]
    EmptyReference,
    #[error("no samples to aggregate")]
    NoSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Match,
    Substitute,
    Delete,
    Insert,
}

/// One step of an alignment. `Delete` has no hypothesis position and
/// `Insert` no reference position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: OpKind,
    pub ref_pos: Option<usize>,
    pub hyp_pos: Option<usize>,
}

/// Edit counts plus the reference length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditCounts {
    pub s: usize,
    pub d: usize,
    pub i: usize,
    pub n: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.s + self.d + self.i
    }

    /// Percentage, or `None` when the reference is empty.
    pub fn rate(&self) -> Option<f64> {
        (self.n > 0).then(|| self.errors() as f64 / self.n as f64 * 100.0)
    }
}

impl std::ops::Add for EditCounts {
    type Output = EditCounts;

    fn add(self, o: EditCounts) -> EditCounts {
        EditCounts {
            s: self.s + o.s,
            d: self.d + o.d,
            i: self.i + o.i,
            n: self.n + o.n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub ops: Vec<EditOp>,
    pub counts: EditCounts,
    pub hyp_len: usize,
}

impl Alignment {
    pub fn matches(&self) -> usize {
        self.ops.iter().filter(|o| o.kind == OpKind::Match).count()
    }
}

/// Unit-cost edit distance with full backtrace. On equal cost the backtrace
/// prefers Match, then Substitute, then Delete, then Insert.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Alignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let cols = m + 1;
    let mut dist = vec![0u32; (n + 1) * cols];
    for j in 0..=m {
        dist[j] = j as u32;
    }
    for i in 1..=n {
        dist[i * cols] = i as u32;
        for j in 1..=m {
            let diag = dist[(i - 1) * cols + j - 1] + u32::from(reference[i - 1] != hypothesis[j - 1]);
            let up = dist[(i - 1) * cols + j] + 1;
            let left = dist[i * cols + j - 1] + 1;
            dist[i * cols + j] = diag.min(up).min(left);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = EditCounts {
        n,
        ..EditCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i * cols + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = dist[(i - 1) * cols + j - 1];
            if same && diag == here {
                ops.push(op(OpKind::Match, Some(i - 1), Some(j - 1)));
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && diag + 1 == here {
                ops.push(op(OpKind::Substitute, Some(i - 1), Some(j - 1)));
                counts.s += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist[(i - 1) * cols + j] + 1 == here {
            ops.push(op(OpKind::Delete, Some(i - 1), None));
            counts.d += 1;
            i -= 1;
        } else {
            ops.push(op(OpKind::Insert, None, Some(j - 1)));
            counts.i += 1;
            j -= 1;
        }
    }
    ops.reverse();
    Alignment {
        ops,
        counts,
        hyp_len: m,
    }
}

fn op(kind: OpKind, ref_pos: Option<usize>, hyp_pos: Option<usize>) -> EditOp {
    EditOp {
        kind,
        ref_pos,
        hyp_pos,
    }
}

/// Options for turning text into metric units.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RateOptions {
    /// Drop spaces before the character alignment.
    pub ignore_spaces: bool,
}

pub fn char_units(s: &str, opts: RateOptions) -> Vec<char> {
    s.chars().filter(|&c| !(opts.ignore_spaces && c == ' ')).collect()
}

pub fn word_units(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub cer: f64,
    pub wer: f64,
}

/// Counts for one reference/hypothesis pair in both units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: String,
    pub chars: EditCounts,
    pub words: EditCounts,
}

impl SampleScore {
    pub fn rates(&self) -> ErrorRates {
        ErrorRates {
            cer: self.chars.rate().unwrap_or(0.0),
            wer: self.words.rate().unwrap_or(0.0),
        }
    }
}

pub fn score_sample(
    id: impl Into<String>,
    reference: &GroundTruth,
    hypothesis: &str,
    opts: RateOptions,
) -> Result<SampleScore, MetricsError> {
    let r = char_units(reference.as_str(), opts);
    let rw = word_units(reference.as_str());
    if r.is_empty() || rw.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let chars = align(&r, &char_units(hypothesis, opts)).counts;
    let words = align(&rw, &word_units(hypothesis)).counts;
    Ok(SampleScore {
        id: id.into(),
        chars,
        words,
    })
}

pub fn error_rates(reference: &GroundTruth, hypothesis: &str) -> Result<ErrorRates, MetricsError> {
    Ok(score_sample("", reference, hypothesis, RateOptions::default())?.rates())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRates {
    pub id: String,
    pub cer: f64,
    pub wer: f64,
    pub chars: EditCounts,
    pub words: EditCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub engine_name: String,
    pub dataset_name: String,
    pub per_sample: Vec<SampleRates>,
    pub macro_cer: f64,
    pub macro_wer: f64,
    pub micro_cer: f64,
    pub micro_wer: f64,
}

/// Which aggregate a summary row shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Average {
    #[default]
    Macro,
    Micro,
}

impl EvalReport {
    pub fn cer(&self, avg: Average) -> f64 {
        match avg {
            Average::Macro => self.macro_cer,
            Average::Micro => self.micro_cer,
        }
    }

    pub fn wer(&self, avg: Average) -> f64 {
        match avg {
            Average::Macro => self.macro_wer,
            Average::Micro => self.micro_wer,
        }
    }
}

/// Macro = mean of per-sample rates; micro = pooled counts.
pub fn aggregate(
    engine_name: &str,
    dataset_name: &str,
    scores: &[SampleScore],
) -> Result<EvalReport, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let per_sample: Vec<SampleRates> = scores
        .iter()
        .map(|s| {
            let r = s.rates();
            SampleRates {
                id: s.id.clone(),
                cer: r.cer,
                wer: r.wer,
                chars: s.chars,
                words: s.words,
            }
        })
        .collect();
    let k = per_sample.len() as f64;
    let pooled_c = scores.iter().fold(EditCounts::default(), |a, s| a + s.chars);
    let pooled_w = scores.iter().fold(EditCounts::default(), |a, s| a + s.words);
    Ok(EvalReport {
        engine_name: engine_name.to_string(),
        dataset_name: dataset_name.to_string(),
        macro_cer: per_sample.iter().map(|s| s.cer).sum::<f64>() / k,
        macro_wer: per_sample.iter().map(|s| s.wer).sum::<f64>() / k,
        micro_cer: pooled_c.rate().unwrap_or(0.0),
        micro_wer: pooled_w.rate().unwrap_or(0.0),
        per_sample,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Percent(f64),
}

/// A comparison table with one row per engine/configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Decimal places for percentages.
    pub precision: usize,
}

impl ReportTable {
    /// `name, CER, WER` rows, one per report.
    pub fn rates(reports: &[EvalReport], avg: Average) -> Self {
        Self {
            header: vec!["name".into(), "cer".into(), "wer".into()],
            rows: reports
                .iter()
                .map(|r| {
                    vec![
                        Cell::Text(r.engine_name.clone()),
                        Cell::Percent(r.cer(avg)),
                        Cell::Percent(r.wer(avg)),
                    ]
                })
                .collect(),
            precision: 2,
        }
    }

    /// `name, split, CER (train), CER (eval)` rows.
    pub fn train_eval(rows: &[(&str, &str, &EvalReport, &EvalReport)], avg: Average) -> Self {
        Self {
            header: vec!["name".into(), "split".into(), "cer_train".into(), "cer_eval".into()],
            rows: rows
                .iter()
                .map(|(name, split, train, eval)| {
                    vec![
                        Cell::Text(name.to_string()),
                        Cell::Text(split.to_string()),
                        Cell::Percent(train.cer(avg)),
                        Cell::Percent(eval.cer(avg)),
                    ]
                })
                .collect(),
            precision: 2,
        }
    }

    pub fn with_precision(mut self, precision: usize) -> Self {
        self.precision = precision;
        self
    }

    fn cell(&self, c: &Cell, percent_sign: bool) -> String {
        match c {
            Cell::Text(t) => t.clone(),
            Cell::Percent(v) if percent_sign => format!("{:.*}%", self.precision, v),
            Cell::Percent(v) => format!("{:.*}", self.precision, v),
        }
    }

    /// Tab-separated with a header line; percentages without `%`.
    pub fn to_tsv(&self) -> String {
        let mut out = self.header.join("\t");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| self.cell(c, false)).collect();
            out.push_str(&cells.join("\t"));
            out.push('\n');
        }
        out
    }

    /// Space-padded columns with `%` signs, for terminals.
    pub fn to_text(&self) -> String {
        let rendered: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.iter().map(|c| self.cell(c, true)).collect())
            .collect();
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &rendered {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&self.header).chain(rendered.iter()) {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}
