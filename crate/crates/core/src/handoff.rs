//! Building the parser interface from a hypothesis pool.
//!
//! The learned strategy keeps every hypothesis whose final score
//! `s_i = p_ret · max_c π_c` reaches the retention threshold and ranks the
//! survivors by their order score. The baselines pre-filter on the same
//! threshold and then suppress overlaps heuristically (hard NMS, Gaussian
//! Soft-NMS), optionally ranking survivors with an external order.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::fmt_float;
use crate::error::{HandoffError, Result};
use crate::geometry::iou;
use crate::model::{HandoffConfig, Hypothesis, HypothesisPool, Instance, ParserInterface, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionReason {
    BelowThreshold,
    NmsSuppressed,
    SoftNmsDecayed,
    Kept,
}

impl SuppressionReason {
    pub fn name(self) -> &'static str {
        match self {
            SuppressionReason::BelowThreshold => "below_threshold",
            SuppressionReason::NmsSuppressed => "nms_suppressed",
            SuppressionReason::SoftNmsDecayed => "soft_nms_decayed",
            SuppressionReason::Kept => "kept",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetentionDecision {
    pub hypothesis_id: u64,
    pub final_score: f64,
    pub retained: bool,
    pub reason: SuppressionReason,
}

impl RetentionDecision {
    fn new(hypothesis_id: u64, final_score: f64, reason: SuppressionReason) -> Self {
        Self { hypothesis_id, final_score, retained: reason == SuppressionReason::Kept, reason }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandoffOutput {
    pub interface: ParserInterface,
    /// One decision per pool hypothesis, in pool order.
    pub decisions: Vec<RetentionDecision>,
}

/// Retention probability times the highest class probability.
pub fn final_score(h: &Hypothesis) -> f64 {
    h.retention_prob * h.top_class().1
}

/// Parser order: ascending key, then top edge, left edge, id.
fn reading_cmp(a: (&Hypothesis, f64), b: (&Hypothesis, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(a.0.bbox.y1.total_cmp(&b.0.bbox.y1))
        .then(a.0.bbox.x1.total_cmp(&b.0.bbox.x1))
        .then(a.0.id.cmp(&b.0.id))
}

/// Orders the kept hypotheses by `order_key` and emits the interface.
fn build_interface(
    pool: &HypothesisPool,
    decisions: &[RetentionDecision],
    order_key: impl Fn(&Hypothesis) -> f64,
) -> ParserInterface {
    let mut kept: Vec<(&Hypothesis, f64)> = pool
        .hypotheses
        .iter()
        .zip(decisions)
        .filter(|(_, d)| d.retained)
        .map(|(h, d)| (h, d.final_score))
        .collect();
    kept.sort_by(|a, b| reading_cmp((a.0, order_key(a.0)), (b.0, order_key(b.0))));
    let instances = kept
        .into_iter()
        .map(|(h, score)| Instance { hypothesis_id: h.id, bbox: h.bbox, class_id: h.top_class().0, score })
        .collect();
    ParserInterface { page_id: pool.page_id.clone(), instances }
}

fn threshold_decisions(pool: &HypothesisPool, tau: f64) -> Vec<RetentionDecision> {
    pool.hypotheses
        .iter()
        .map(|h| {
            let s = final_score(h);
            let reason = if s >= tau { SuppressionReason::Kept } else { SuppressionReason::BelowThreshold };
            RetentionDecision::new(h.id, s, reason)
        })
        .collect()
}

/// Retains `s_i ≥ τ` without any overlap suppression, ranked by order score.
pub fn handoff_learned(pool: &HypothesisPool, cfg: &HandoffConfig) -> HandoffOutput {
    let decisions = threshold_decisions(pool, cfg.retention_threshold);
    let interface = build_interface(pool, &decisions, |h| h.order_score);
    HandoffOutput { interface, decisions }
}

/// Hands off every hypothesis, ranked by order score.
pub fn handoff_raw(pool: &HypothesisPool) -> HandoffOutput {
    let decisions = threshold_decisions(pool, 0.0);
    let interface = build_interface(pool, &decisions, |h| h.order_score);
    HandoffOutput { interface, decisions }
}

/// Indices of threshold survivors grouped by suppression class, each group
/// sorted by descending score then ascending id.
fn suppression_groups(pool: &HypothesisPool, decisions: &[RetentionDecision], class_agnostic: bool) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); if class_agnostic { 1 } else { pool.num_classes.max(1) }];
    for (k, (h, d)) in pool.hypotheses.iter().zip(decisions).enumerate() {
        if d.retained {
            let g = if class_agnostic { 0 } else { h.top_class().0.min(groups.len() - 1) };
            groups[g].push(k);
        }
    }
    for g in &mut groups {
        g.sort_by(|&a, &b| {
            decisions[b]
                .final_score
                .total_cmp(&decisions[a].final_score)
                .then(pool.hypotheses[a].id.cmp(&pool.hypotheses[b].id))
        });
    }
    groups
}

fn nms_decisions(pool: &HypothesisPool, cfg: &HandoffConfig) -> Vec<RetentionDecision> {
    let mut decisions = threshold_decisions(pool, cfg.retention_threshold);
    for group in suppression_groups(pool, &decisions, cfg.class_agnostic_nms) {
        let mut kept: Vec<usize> = Vec::new();
        for k in group {
            let b = &pool.hypotheses[k].bbox;
            if kept.iter().any(|&j| iou(&pool.hypotheses[j].bbox, b) >= cfg.nms_iou_threshold) {
                decisions[k].retained = false;
                decisions[k].reason = SuppressionReason::NmsSuppressed;
            } else {
                kept.push(k);
            }
        }
    }
    decisions
}

/// Greedy hard NMS on `s_i`, survivors ranked by order score.
pub fn handoff_nms(pool: &HypothesisPool, cfg: &HandoffConfig) -> HandoffOutput {
    let decisions = nms_decisions(pool, cfg);
    let interface = build_interface(pool, &decisions, |h| h.order_score);
    HandoffOutput { interface, decisions }
}

/// Gaussian decay factor `exp(−IoU²/σ)`.
pub fn soft_nms_decay(iou: f64, sigma: f64) -> f64 {
    (-(iou * iou) / sigma).exp()
}

/// Gaussian Soft-NMS on `s_i`, survivors ranked by order score. Survivor
/// scores in the interface are the decayed scores.
pub fn handoff_soft_nms(pool: &HypothesisPool, cfg: &HandoffConfig) -> HandoffOutput {
    let mut decisions = threshold_decisions(pool, cfg.retention_threshold);
    for group in suppression_groups(pool, &decisions, cfg.class_agnostic_nms) {
        let mut remaining: Vec<(usize, f64)> = group.iter().map(|&k| (k, decisions[k].final_score)).collect();
        while !remaining.is_empty() {
            let best = remaining
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| {
                    a.1.total_cmp(&b.1)
                        .then(pool.hypotheses[b.0].id.cmp(&pool.hypotheses[a.0].id))
                })
                .map(|(pos, _)| pos)
                .expect("non-empty");
            let (picked, score) = remaining.swap_remove(best);
            decisions[picked].final_score = score;
            let picked_box = pool.hypotheses[picked].bbox;
            remaining.retain_mut(|(k, s)| {
                *s *= soft_nms_decay(iou(&picked_box, &pool.hypotheses[*k].bbox), cfg.soft_nms_sigma);
                if *s < cfg.soft_nms_score_floor {
                    decisions[*k].final_score = *s;
                    decisions[*k].retained = false;
                    decisions[*k].reason = SuppressionReason::SoftNmsDecayed;
                    false
                } else {
                    true
                }
            });
        }
    }
    let interface = build_interface(pool, &decisions, |h| h.order_score);
    HandoffOutput { interface, decisions }
}

/// Hard NMS for retention, survivors ranked by an order computed without
/// knowledge of which hypotheses survive.
pub fn handoff_decoupled(
    pool: &HypothesisPool,
    cfg: &HandoffConfig,
    external_order: &HashMap<u64, f64>,
) -> Result<HandoffOutput> {
    if let Some(h) = pool.hypotheses.iter().find(|h| !external_order.contains_key(&h.id)) {
        return Err(HandoffError::MissingOrderScore(h.id));
    }
    let decisions = nms_decisions(pool, cfg);
    let interface = build_interface(pool, &decisions, |h| external_order[&h.id]);
    Ok(HandoffOutput { interface, decisions })
}

/// Dispatches on `strategy`. The decoupled strategy needs `external_order`.
pub fn run_strategy(
    pool: &HypothesisPool,
    cfg: &HandoffConfig,
    strategy: Strategy,
    external_order: Option<&HashMap<u64, f64>>,
) -> Result<HandoffOutput> {
    match strategy {
        Strategy::LearnedNmsFree => Ok(handoff_learned(pool, cfg)),
        Strategy::Nms => Ok(handoff_nms(pool, cfg)),
        Strategy::SoftNms => Ok(handoff_soft_nms(pool, cfg)),
        Strategy::Raw => Ok(handoff_raw(pool)),
        Strategy::DecoupledOrderAfterNms => match external_order {
            Some(order) => handoff_decoupled(pool, cfg, order),
            None => Err(pool
                .hypotheses
                .first()
                .map_or_else(|| HandoffError::validation("decoupled strategy needs an external order"), |h| {
                    HandoffError::MissingOrderScore(h.id)
                })),
        },
    }
}

/// Canonical JSON for a decision list.
pub fn serialize_decisions(page_id: &str, strategy: Strategy, decisions: &[RetentionDecision]) -> Vec<u8> {
    let mut out = String::new();
    write!(
        out,
        "{{\"page_id\":{},\"strategy\":\"{}\",\"decisions\":[",
        crate::codec::fmt_str(page_id),
        strategy.name()
    )
    .unwrap();
    for (k, d) in decisions.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(
            out,
            "{{\"hypothesis_id\":{},\"final_score\":{},\"retained\":{},\"reason\":\"{}\"}}",
            d.hypothesis_id,
            fmt_float(d.final_score),
            d.retained,
            d.reason.name()
        )
        .unwrap();
    }
    out.push_str("]}");
    out.into_bytes()
}
