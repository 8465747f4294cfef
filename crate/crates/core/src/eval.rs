//! Object-level precision, recall and F1.
//!
//! Predictions and ground-truth objects are matched one-to-one, greedily by
//! descending pixel overlap; any overlap of at least one pixel is a match.

use std::fmt;

use crate::baselines::Region;
use crate::detector::Detection;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl std::ops::Add for MatchCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    /// Single-line machine-readable record.
    pub fn record(&self) -> String {
        format!(
            "tp={} fp={} fn={} precision={:.6} recall={:.6} f1={:.6}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f1
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P = {:.2}%  R = {:.2}%  F1 = {:.2}%  (TP {}, FP {}, FN {})",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1,
            self.tp,
            self.fp,
            self.fn_
        )
    }
}

pub fn match_objects(predictions: &[Region], ground_truth: &[Region]) -> MatchCounts {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (pi, p) in predictions.iter().enumerate() {
        for (gi, g) in ground_truth.iter().enumerate() {
            let overlap = p.overlap(g);
            if overlap >= 1 {
                pairs.push((overlap, pi, gi));
            }
        }
    }
    // ties fall back to the regions' canonical order, not list position
    pairs.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| canonical(&ground_truth[a.2], &ground_truth[b.2]))
            .then_with(|| canonical(&predictions[a.1], &predictions[b.1]))
    });
    let mut pred_used = vec![false; predictions.len()];
    let mut gt_used = vec![false; ground_truth.len()];
    let mut tp = 0;
    for (_, pi, gi) in pairs {
        if !pred_used[pi] && !gt_used[gi] {
            pred_used[pi] = true;
            gt_used[gi] = true;
            tp += 1;
        }
    }
    MatchCounts {
        tp,
        fp: predictions.len() - tp,
        fn_: ground_truth.len() - tp,
    }
}

fn canonical(a: &Region, b: &Region) -> std::cmp::Ordering {
    a.anchor()
        .cmp(&b.anchor())
        .then_with(|| a.pixels().cmp(b.pixels()))
}

/// Precision and recall default to 1 when their denominator is zero.
pub fn compute_prf(tp: usize, fp: usize, fn_: usize) -> EvalReport {
    let precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    // 2PR/(P+R) rewritten over counts so the result is rounded once
    let f1 = if tp > 0 {
        (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
    } else if fp + fn_ == 0 {
        1.0
    } else {
        0.0
    };
    EvalReport {
        tp,
        fp,
        fn_,
        precision,
        recall,
        f1,
    }
}

impl From<MatchCounts> for EvalReport {
    fn from(c: MatchCounts) -> Self {
        compute_prf(c.tp, c.fp, c.fn_)
    }
}

/// Micro-average: counts are summed over images before computing rates.
pub fn evaluate_dataset(pairs: &[(Vec<Region>, Vec<Region>)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Domain("cannot evaluate an empty dataset".into()));
    }
    let total = pairs
        .iter()
        .map(|(pred, gt)| match_objects(pred, gt))
        .fold(MatchCounts::default(), |a, b| a + b);
    Ok(total.into())
}

/// Footprint rectangles of NFA detections as regions.
pub fn detection_regions(detections: &[Detection]) -> Vec<Region> {
    detections
        .iter()
        .map(|d| Region::from_rect(d.footprint()))
        .collect()
}
