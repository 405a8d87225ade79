//! Training objectives over a matched hypothesis pool, each returning its
//! value together with the analytic gradient with respect to the pool inputs.
//!
//! * classification: summed per-class BCE against a one-hot target at the
//!   matched class (all zeros when unmatched), averaged over the pool;
//! * L1 and GIoU box terms: averaged over matched pairs;
//! * retention: BCE of the retention probability against the match indicator,
//!   averaged over the pool;
//! * ordering: difficulty-weighted pairwise BCE of `σ(o_j − o_i)` against the
//!   ground-truth precedence, averaged over ordered matched pairs.
//!
//! Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before any log;
//! inputs sitting in the clamped region get a zero gradient. The ordering
//! term works on score differences through a stable softplus and needs no
//! clamp.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{HandoffError, Result};
use crate::geometry::{giou_grad, n_mid};
use crate::matching::{assign, derive_targets, Assignment, Targets};
use crate::model::{GroundTruthElement, GroundTruthPage, HandoffConfig, HypothesisPool};

pub const PROB_EPS: f64 = 1e-7;

/// One differentiable input of a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Field {
    X1,
    Y1,
    X2,
    Y2,
    ClassProb(usize),
    RetentionProb,
    OrderScore,
}

impl Field {
    pub const BOX: [Field; 4] = [Field::X1, Field::Y1, Field::X2, Field::Y2];
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::X1 => f.write_str("x1"),
            Field::Y1 => f.write_str("y1"),
            Field::X2 => f.write_str("x2"),
            Field::Y2 => f.write_str("y2"),
            Field::ClassProb(k) => write!(f, "class_probs[{k}]"),
            Field::RetentionProb => f.write_str("retention_prob"),
            Field::OrderScore => f.write_str("order_score"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisGrad {
    pub id: u64,
    pub bbox: [f64; 4],
    pub class_probs: Vec<f64>,
    pub retention_prob: f64,
    pub order_score: f64,
}

/// Partial derivatives for every hypothesis, in pool order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub per_hypothesis: Vec<HypothesisGrad>,
}

impl Gradients {
    pub fn zeros(pool: &HypothesisPool) -> Self {
        let per_hypothesis = pool
            .hypotheses
            .iter()
            .map(|h| HypothesisGrad {
                id: h.id,
                bbox: [0.0; 4],
                class_probs: vec![0.0; h.class_probs.len()],
                retention_prob: 0.0,
                order_score: 0.0,
            })
            .collect();
        Self { per_hypothesis }
    }

    pub fn get(&self, id: u64, field: Field) -> Option<f64> {
        let g = self.per_hypothesis.iter().find(|g| g.id == id)?;
        match field {
            Field::X1 => Some(g.bbox[0]),
            Field::Y1 => Some(g.bbox[1]),
            Field::X2 => Some(g.bbox[2]),
            Field::Y2 => Some(g.bbox[3]),
            Field::ClassProb(k) => g.class_probs.get(k).copied(),
            Field::RetentionProb => Some(g.retention_prob),
            Field::OrderScore => Some(g.order_score),
        }
    }

    /// Flat `(hypothesis_id, field, value)` view in dump order.
    pub fn entries(&self) -> Vec<(u64, Field, f64)> {
        let mut out = Vec::new();
        for g in &self.per_hypothesis {
            for (k, f) in Field::BOX.iter().enumerate() {
                out.push((g.id, *f, g.bbox[k]));
            }
            for (k, &v) in g.class_probs.iter().enumerate() {
                out.push((g.id, Field::ClassProb(k), v));
            }
            out.push((g.id, Field::RetentionProb, g.retention_prob));
            out.push((g.id, Field::OrderScore, g.order_score));
        }
        out
    }

    /// `self += scale * other`, both over the same pool.
    fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.per_hypothesis.iter_mut().zip(&other.per_hypothesis) {
            for k in 0..4 {
                a.bbox[k] += scale * b.bbox[k];
            }
            for (x, y) in a.class_probs.iter_mut().zip(&b.class_probs) {
                *x += scale * y;
            }
            a.retention_prob += scale * b.retention_prob;
            a.order_score += scale * b.order_score;
        }
    }
}

impl Serialize for Gradients {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let entries = self.entries();
        let mut map = serializer.serialize_map(Some(entries.len()))?;
        for (id, field, value) in entries {
            map.serialize_entry(&format!("({id}, {field})"), &value)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub l_total: f64,
    pub l_det: f64,
    pub l_cls: f64,
    pub l_l1: f64,
    pub l_giou: f64,
    pub l_ret: f64,
    pub l_ord: f64,
    pub num_hypotheses: usize,
    pub num_matched: usize,
    pub num_pairs: usize,
    /// Gradient of `l_total`.
    pub gradients: Gradients,
}

fn clamp_prob(p: f64) -> (f64, bool) {
    let c = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (c, c == p)
}

/// Binary cross-entropy with the standard probability clamp.
pub fn bce(p: f64, t: f64) -> f64 {
    focal_bce(p, t, 0.0).0
}

/// Focal-modulated BCE and its derivative in `p`; `gamma = 0` is plain BCE.
pub fn focal_bce(p: f64, t: f64, gamma: f64) -> (f64, f64) {
    let (p, free) = clamp_prob(p);
    let q = 1.0 - p;
    let (lp, lq) = (p.ln(), q.ln());
    let loss = -t * q.powf(gamma) * lp - (1.0 - t) * p.powf(gamma) * lq;
    if !free {
        return (loss, 0.0);
    }
    let mut grad = -t * q.powf(gamma) / p + (1.0 - t) * p.powf(gamma) / q;
    if gamma != 0.0 {
        grad += t * gamma * q.powf(gamma - 1.0) * lp - (1.0 - t) * gamma * p.powf(gamma - 1.0) * lq;
    }
    (loss, grad)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Probability that `i` precedes `j`; smaller scores come first.
pub fn precedence_prob(o_i: f64, o_j: f64) -> f64 {
    sigmoid(o_j - o_i)
}

/// `1 + γ·ln(1 + n_mid)` from ground-truth geometry.
pub fn difficulty_weight(i: &GroundTruthElement, j: &GroundTruthElement, gt: &GroundTruthPage, gamma: f64) -> f64 {
    1.0 + gamma * (1.0 + n_mid(i, j, &gt.elements) as f64).ln()
}

/// Difficulty weights for every ordered pair of matched hypotheses.
pub fn pair_weights(a: &Assignment, gt: &GroundTruthPage, gamma: f64) -> Result<BTreeMap<(u64, u64), f64>> {
    let mut matched = Vec::with_capacity(a.pairs.len());
    for &(h, g) in &a.pairs {
        let el = gt
            .get(g)
            .ok_or_else(|| HandoffError::InconsistentAssignment(format!("unknown ground-truth id {g}")))?;
        matched.push((h, el));
    }
    let mut out = BTreeMap::new();
    for &(hi, ei) in &matched {
        for &(hj, ej) in &matched {
            if hi != hj {
                out.insert((hi, hj), difficulty_weight(ei, ej, gt, gamma));
            }
        }
    }
    Ok(out)
}

fn matched_positions(pool: &HypothesisPool, gt: &GroundTruthPage, a: &Assignment) -> Result<Vec<(usize, usize)>> {
    let hpos: HashMap<u64, usize> = pool.hypotheses.iter().enumerate().map(|(k, h)| (h.id, k)).collect();
    let gpos: HashMap<u64, usize> = gt.elements.iter().enumerate().map(|(k, e)| (e.id, k)).collect();
    a.pairs
        .iter()
        .map(|&(h, g)| match (hpos.get(&h), gpos.get(&g)) {
            (Some(&hp), Some(&gp)) => Ok((hp, gp)),
            _ => Err(HandoffError::InconsistentAssignment(format!("pair ({h}, {g}) not in pool/ground truth"))),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionLoss {
    pub l_cls: f64,
    pub l_l1: f64,
    pub l_giou: f64,
    /// `λ_cls·l_cls + λ_l1·l_l1 + λ_giou·l_giou`
    pub l_det: f64,
    pub grad_cls: Gradients,
    pub grad_l1: Gradients,
    pub grad_giou: Gradients,
    /// Gradient of `l_det`.
    pub gradients: Gradients,
}

pub fn classification_loss(
    pool: &HypothesisPool,
    gt: &GroundTruthPage,
    a: &Assignment,
    focal_gamma: f64,
) -> Result<(f64, Gradients)> {
    let mut grad = Gradients::zeros(pool);
    let n = pool.len();
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut target_class: Vec<Option<usize>> = vec![None; n];
    for (hp, gp) in matched_positions(pool, gt, a)? {
        target_class[hp] = Some(gt.elements[gp].class_id);
    }
    let mut total = 0.0;
    for (k, h) in pool.hypotheses.iter().enumerate() {
        for (c, &p) in h.class_probs.iter().enumerate() {
            let t = if target_class[k] == Some(c) { 1.0 } else { 0.0 };
            let (l, d) = focal_bce(p, t, focal_gamma);
            total += l;
            grad.per_hypothesis[k].class_probs[c] = d / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

pub fn l1_loss(pool: &HypothesisPool, gt: &GroundTruthPage, a: &Assignment) -> Result<(f64, Gradients)> {
    let mut grad = Gradients::zeros(pool);
    let pairs = matched_positions(pool, gt, a)?;
    if pairs.is_empty() {
        return Ok((0.0, grad));
    }
    let m = pairs.len() as f64;
    let mut total = 0.0;
    for (hp, gp) in pairs {
        let pred = pool.hypotheses[hp].bbox.to_array();
        let target = gt.elements[gp].bbox.to_array();
        for k in 0..4 {
            let d = pred[k] - target[k];
            total += d.abs();
            grad.per_hypothesis[hp].bbox[k] = if d > 0.0 {
                1.0 / m
            } else if d < 0.0 {
                -1.0 / m
            } else {
                0.0
            };
        }
    }
    Ok((total / m, grad))
}

pub fn giou_loss(pool: &HypothesisPool, gt: &GroundTruthPage, a: &Assignment) -> Result<(f64, Gradients)> {
    let mut grad = Gradients::zeros(pool);
    let pairs = matched_positions(pool, gt, a)?;
    if pairs.is_empty() {
        return Ok((0.0, grad));
    }
    let m = pairs.len() as f64;
    let mut total = 0.0;
    for (hp, gp) in pairs {
        let (g, dg) = giou_grad(&pool.hypotheses[hp].bbox, &gt.elements[gp].bbox);
        total += 1.0 - g;
        for (slot, d) in grad.per_hypothesis[hp].bbox.iter_mut().zip(dg) {
            *slot = -d / m;
        }
    }
    Ok((total / m, grad))
}

/// Weighted classification, L1 and GIoU terms under a fixed assignment.
pub fn detection_loss(
    pool: &HypothesisPool,
    gt: &GroundTruthPage,
    a: &Assignment,
    cfg: &HandoffConfig,
) -> Result<DetectionLoss> {
    let (l_cls, grad_cls) = classification_loss(pool, gt, a, cfg.cls_focal_gamma)?;
    let (l_l1, grad_l1) = l1_loss(pool, gt, a)?;
    let (l_giou, grad_giou) = giou_loss(pool, gt, a)?;
    let mut gradients = Gradients::zeros(pool);
    gradients.add_scaled(&grad_cls, cfg.lambda_cls);
    gradients.add_scaled(&grad_l1, cfg.lambda_l1);
    gradients.add_scaled(&grad_giou, cfg.lambda_giou);
    Ok(DetectionLoss {
        l_cls,
        l_l1,
        l_giou,
        l_det: cfg.lambda_cls * l_cls + cfg.lambda_l1 * l_l1 + cfg.lambda_giou * l_giou,
        grad_cls,
        grad_l1,
        grad_giou,
        gradients,
    })
}

/// Mean BCE of retention probabilities against 0/1 targets, with
/// `dL/dp_i = (p_i − t_i) / (p_i (1 − p_i) N)` inside the clamp.
pub fn retention_loss(probs: &[f64], targets: &[u8]) -> Result<(f64, Vec<f64>)> {
    if probs.len() != targets.len() {
        return Err(HandoffError::Dimension(format!(
            "{} retention probabilities vs {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let n = probs.len();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&p, &t) in probs.iter().zip(targets) {
        let (l, d) = focal_bce(p, f64::from(t), 0.0);
        total += l;
        grad.push(d / n as f64);
    }
    Ok((total / n as f64, grad))
}

/// Weighted pairwise precedence loss. Returns zero with no gradient when there
/// are no pairs.
pub fn ordering_loss(
    order_scores: &HashMap<u64, f64>,
    precedence: &BTreeMap<(u64, u64), u8>,
    weights: &BTreeMap<(u64, u64), f64>,
) -> Result<(f64, HashMap<u64, f64>)> {
    let mut grad: HashMap<u64, f64> = HashMap::new();
    if precedence.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / precedence.len() as f64;
    let mut total = 0.0;
    for (&(i, j), &y) in precedence {
        let score = |id: u64| {
            order_scores
                .get(&id)
                .copied()
                .ok_or_else(|| HandoffError::InconsistentAssignment(format!("no order score for hypothesis {id}")))
        };
        let (oi, oj) = (score(i)?, score(j)?);
        let w = *weights
            .get(&(i, j))
            .ok_or_else(|| HandoffError::InconsistentAssignment(format!("no pair weight for ({i}, {j})")))?;
        let y = f64::from(y);
        let d = oj - oi;
        // BCE(σ(d), y) = y·softplus(−d) + (1 − y)·softplus(d)
        total += w * (y * softplus(-d) + (1.0 - y) * softplus(d));
        let dd = w * (sigmoid(d) - y) * scale;
        *grad.entry(j).or_insert(0.0) += dd;
        *grad.entry(i).or_insert(0.0) -= dd;
    }
    Ok((total * scale, grad))
}

/// Every loss term under a fixed assignment; matching is not differentiated.
pub fn loss_with_assignment(
    pool: &HypothesisPool,
    gt: &GroundTruthPage,
    a: &Assignment,
    cfg: &HandoffConfig,
) -> Result<LossReport> {
    if pool.num_classes != gt.num_classes {
        return Err(HandoffError::validation(format!(
            "pool has {} classes, ground truth has {}",
            pool.num_classes, gt.num_classes
        )));
    }
    let targets: Targets = derive_targets(a, gt, pool)?;
    let det = detection_loss(pool, gt, a, cfg)?;

    let probs: Vec<f64> = pool.hypotheses.iter().map(|h| h.retention_prob).collect();
    let (l_ret, ret_grad) = retention_loss(&probs, &targets.retention)?;

    let scores: HashMap<u64, f64> = pool.hypotheses.iter().map(|h| (h.id, h.order_score)).collect();
    let weights = pair_weights(a, gt, cfg.gamma)?;
    let (l_ord, ord_grad) = ordering_loss(&scores, &targets.precedence, &weights)?;

    let mut gradients = det.gradients.clone();
    for (g, (dr, h)) in gradients.per_hypothesis.iter_mut().zip(ret_grad.iter().zip(&pool.hypotheses)) {
        g.retention_prob += cfg.lambda_ret * dr;
        g.order_score += cfg.lambda_ord * ord_grad.get(&h.id).copied().unwrap_or(0.0);
    }

    Ok(LossReport {
        l_total: det.l_det + cfg.lambda_ret * l_ret + cfg.lambda_ord * l_ord,
        l_det: det.l_det,
        l_cls: det.l_cls,
        l_l1: det.l_l1,
        l_giou: det.l_giou,
        l_ret,
        l_ord,
        num_hypotheses: pool.len(),
        num_matched: a.pairs.len(),
        num_pairs: targets.precedence.len(),
        gradients,
    })
}

/// Matches the pool to its ground truth and evaluates the full objective.
pub fn total_loss(pool: &HypothesisPool, gt: &GroundTruthPage, cfg: &HandoffConfig) -> Result<LossReport> {
    if pool.num_classes != gt.num_classes {
        return Err(HandoffError::validation(format!(
            "pool has {} classes, ground truth has {}",
            pool.num_classes, gt.num_classes
        )));
    }
    let a = assign(pool, gt, cfg)?;
    loss_with_assignment(pool, gt, &a, cfg)
}
