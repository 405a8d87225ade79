//! Page-level layout precision/recall/F1 and reading-order edit distance.
//!
//! Matching is greedy: all same-class (prediction, ground truth) pairs with
//! IoU at or above the threshold are visited in descending IoU order and
//! accepted when both sides are still free. This approximates the pageIoU
//! protocol used by public document-parsing benchmarks.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{HandoffError, Result};
use crate::geometry::iou;
use crate::model::{GroundTruthPage, ParserInterface};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchedPair {
    pub pred_id: u64,
    pub gt_id: u64,
    pub iou: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub tp: usize,
    pub pred: usize,
    pub gt: usize,
}

impl ClassCounts {
    pub fn f1(&self) -> f64 {
        let denom = self.pred + self.gt;
        if denom == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PageMetrics {
    pub page_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reading_order_edit: f64,
    pub num_pred: usize,
    pub num_gt: usize,
    pub matched_pairs: Vec<MatchedPair>,
    /// Indexed by class id.
    pub class_counts: Vec<ClassCounts>,
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Greedy same-class matching and the resulting P/R/F1. The
/// `reading_order_edit` field is left at zero.
pub fn layout_prf(iface: &ParserInterface, gt: &GroundTruthPage, iou_threshold: f64) -> PageMetrics {
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (p, inst) in iface.instances.iter().enumerate() {
        for (g, el) in gt.elements.iter().enumerate() {
            if inst.class_id != el.class_id {
                continue;
            }
            let v = iou(&inst.bbox, &el.bbox);
            if v >= iou_threshold && v > 0.0 {
                candidates.push((p, g, v));
            }
        }
    }
    // Descending IoU; ties resolved by ids so input order does not matter.
    candidates.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(iface.instances[a.0].hypothesis_id.cmp(&iface.instances[b.0].hypothesis_id))
            .then(gt.elements[a.1].id.cmp(&gt.elements[b.1].id))
    });
    let mut pred_used = vec![false; iface.instances.len()];
    let mut gt_used = vec![false; gt.elements.len()];
    let mut matched_pairs = Vec::new();
    for (p, g, v) in candidates {
        if !pred_used[p] && !gt_used[g] {
            pred_used[p] = true;
            gt_used[g] = true;
            matched_pairs.push(MatchedPair { pred_id: iface.instances[p].hypothesis_id, gt_id: gt.elements[g].id, iou: v });
        }
    }

    let classes = iface
        .instances
        .iter()
        .map(|i| i.class_id + 1)
        .chain([gt.num_classes])
        .max()
        .unwrap_or(0);
    let mut class_counts = vec![ClassCounts::default(); classes];
    for inst in &iface.instances {
        class_counts[inst.class_id].pred += 1;
    }
    let gt_class: HashMap<u64, usize> = gt.elements.iter().map(|e| (e.id, e.class_id)).collect();
    for el in &gt.elements {
        class_counts[el.class_id].gt += 1;
    }
    for m in &matched_pairs {
        class_counts[gt_class[&m.gt_id]].tp += 1;
    }

    let num_pred = iface.instances.len();
    let num_gt = gt.elements.len();
    let tp = matched_pairs.len() as f64;
    let (precision, recall) = if num_pred == 0 && num_gt == 0 {
        (1.0, 1.0)
    } else {
        let p = if num_pred == 0 { 0.0 } else { tp / num_pred as f64 };
        let r = if num_gt == 0 { 0.0 } else { tp / num_gt as f64 };
        (p, r)
    };
    PageMetrics {
        page_id: iface.page_id.clone(),
        precision,
        recall,
        f1: f1_score(precision, recall),
        reading_order_edit: 0.0,
        num_pred,
        num_gt,
        matched_pairs,
        class_counts,
    }
}

/// Unit-cost Levenshtein distance over arbitrary sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance divided by the longer length (at least one).
pub fn normalized_edit<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    levenshtein(a, b) as f64 / a.len().max(b.len()).max(1) as f64
}

/// Edit distance between the matched instances in interface order and the
/// same instances sorted by ground-truth rank.
pub fn reading_order_edit(iface: &ParserInterface, gt: &GroundTruthPage, matched_pairs: &[MatchedPair]) -> f64 {
    if matched_pairs.len() < 2 {
        return 0.0;
    }
    let to_gt: HashMap<u64, u64> = matched_pairs.iter().map(|m| (m.pred_id, m.gt_id)).collect();
    let predicted: Vec<u64> = iface
        .instances
        .iter()
        .filter(|i| to_gt.contains_key(&i.hypothesis_id))
        .map(|i| i.hypothesis_id)
        .collect();
    let rank: HashMap<u64, usize> = gt.elements.iter().map(|e| (e.id, e.order_rank)).collect();
    let mut reference = predicted.clone();
    reference.sort_by_key(|id| rank.get(&to_gt[id]).copied().unwrap_or(usize::MAX));
    normalized_edit(&predicted, &reference)
}

/// Layout P/R/F1 plus reading-order edit for one page.
pub fn evaluate_page(iface: &ParserInterface, gt: &GroundTruthPage, iou_threshold: f64) -> PageMetrics {
    let mut m = layout_prf(iface, gt, iou_threshold);
    m.reading_order_edit = reading_order_edit(iface, gt, &m.matched_pairs);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class_id: usize,
    pub tp: usize,
    pub pred: usize,
    pub gt: usize,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub pages: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reading_order_edit: f64,
    pub per_class: Vec<ClassSummary>,
}

/// Unweighted per-page means, plus per-class F1 from pooled counts.
pub fn aggregate(metrics: &[PageMetrics]) -> Result<MetricsSummary> {
    if metrics.is_empty() {
        return Err(HandoffError::EmptyInput("no pages to aggregate".into()));
    }
    let n = metrics.len() as f64;
    let mean = |f: fn(&PageMetrics) -> f64| metrics.iter().map(f).sum::<f64>() / n;
    let classes = metrics.iter().map(|m| m.class_counts.len()).max().unwrap_or(0);
    let mut pooled = vec![ClassCounts::default(); classes];
    for m in metrics {
        for (acc, c) in pooled.iter_mut().zip(&m.class_counts) {
            acc.tp += c.tp;
            acc.pred += c.pred;
            acc.gt += c.gt;
        }
    }
    Ok(MetricsSummary {
        pages: metrics.len(),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
        reading_order_edit: mean(|m| m.reading_order_edit),
        per_class: pooled
            .iter()
            .enumerate()
            .map(|(class_id, c)| ClassSummary { class_id, tp: c.tp, pred: c.pred, gt: c.gt, f1: c.f1() })
            .collect(),
    })
}
