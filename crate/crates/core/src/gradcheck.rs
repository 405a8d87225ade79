//! Central finite-difference verification of the analytic loss gradients.

use std::collections::HashMap;

use crate::error::Result;
use crate::matching::{derive_targets, Assignment};
use crate::model::{BBox, GroundTruthPage, HandoffConfig, Hypothesis, HypothesisPool};
use crate::objectives::{
    classification_loss, giou_loss, l1_loss, loss_with_assignment, ordering_loss, pair_weights, retention_loss, Field,
    Gradients, PROB_EPS,
};

/// Step used by the verification.
pub const FD_STEP: f64 = 1e-5;
/// Minimum separation between competing box edges before a coordinate is
/// considered differentiable.
pub const KINK_MARGIN: f64 = 1e-4;
/// Floor on the relative-error denominator so vanishing gradients compare
/// on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn field_value(h: &Hypothesis, field: Field) -> f64 {
    match field {
        Field::X1 => h.bbox.x1,
        Field::Y1 => h.bbox.y1,
        Field::X2 => h.bbox.x2,
        Field::Y2 => h.bbox.y2,
        Field::ClassProb(k) => h.class_probs[k],
        Field::RetentionProb => h.retention_prob,
        Field::OrderScore => h.order_score,
    }
}

pub fn set_field(h: &mut Hypothesis, field: Field, v: f64) {
    match field {
        Field::X1 => h.bbox.x1 = v,
        Field::Y1 => h.bbox.y1 = v,
        Field::X2 => h.bbox.x2 = v,
        Field::Y2 => h.bbox.y2 = v,
        Field::ClassProb(k) => h.class_probs[k] = v,
        Field::RetentionProb => h.retention_prob = v,
        Field::OrderScore => h.order_score = v,
    }
}

/// Smallest gap between any pair of edges whose ordering selects a branch
/// of the L1 or GIoU terms.
pub fn kink_distance(a: &BBox, b: &BBox) -> f64 {
    [
        a.x1 - b.x1,
        a.x2 - b.x2,
        a.y1 - b.y1,
        a.y2 - b.y2,
        a.x2 - b.x1,
        a.x1 - b.x2,
        a.y2 - b.y1,
        a.y1 - b.y2,
        a.x2 - a.x1,
        a.y2 - a.y1,
    ]
    .iter()
    .map(|d| d.abs())
    .fold(f64::INFINITY, f64::min)
}

/// Central difference of an arbitrary scalar function of the pool.
pub fn central_difference(
    pool: &HypothesisPool,
    position: usize,
    field: Field,
    step: f64,
    f: impl Fn(&HypothesisPool) -> Result<f64>,
) -> Result<f64> {
    let base = field_value(&pool.hypotheses[position], field);
    let mut plus = pool.clone();
    set_field(&mut plus.hypotheses[position], field, base + step);
    let mut minus = pool.clone();
    set_field(&mut minus.hypotheses[position], field, base - step);
    Ok((f(&plus)? - f(&minus)?) / (2.0 * step))
}

/// Whether `field` of the hypothesis at `position` is safely differentiable
/// with a step of `step`.
pub fn is_smooth_at(pool: &HypothesisPool, gt: &GroundTruthPage, a: &Assignment, position: usize, field: Field, step: f64) -> bool {
    let h = &pool.hypotheses[position];
    match field {
        Field::ClassProb(_) | Field::RetentionProb => {
            let p = field_value(h, field);
            p - step > PROB_EPS && p + step < 1.0 - PROB_EPS
        }
        Field::OrderScore => true,
        Field::X1 | Field::Y1 | Field::X2 | Field::Y2 => match a.gt_for(h.id).and_then(|g| gt.get(g)) {
            Some(target) => kink_distance(&h.bbox, &target.bbox) > KINK_MARGIN.max(10.0 * step),
            None => true,
        },
    }
}

/// A single loss term, or the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Cls,
    L1,
    Giou,
    Ret,
    Ord,
    Total,
}

impl Term {
    pub const ALL: [Term; 6] = [Term::Cls, Term::L1, Term::Giou, Term::Ret, Term::Ord, Term::Total];

    pub fn name(self) -> &'static str {
        match self {
            Term::Cls => "l_cls",
            Term::L1 => "l_l1",
            Term::Giou => "l_giou",
            Term::Ret => "l_ret",
            Term::Ord => "l_ord",
            Term::Total => "l_total",
        }
    }

    /// Inputs the term depends on.
    pub fn fields(self, h: &Hypothesis) -> Vec<Field> {
        let classes = (0..h.class_probs.len()).map(Field::ClassProb);
        match self {
            Term::Cls => classes.collect(),
            Term::L1 | Term::Giou => Field::BOX.to_vec(),
            Term::Ret => vec![Field::RetentionProb],
            Term::Ord => vec![Field::OrderScore],
            Term::Total => Field::BOX.into_iter().chain(classes).chain([Field::RetentionProb, Field::OrderScore]).collect(),
        }
    }
}

impl std::fmt::Display for Term {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Value and analytic gradient of one term under a fixed assignment.
pub fn term_value_and_grad(
    pool: &HypothesisPool,
    gt: &GroundTruthPage,
    a: &Assignment,
    cfg: &HandoffConfig,
    term: Term,
) -> Result<(f64, Gradients)> {
    match term {
        Term::Cls => classification_loss(pool, gt, a, cfg.cls_focal_gamma),
        Term::L1 => l1_loss(pool, gt, a),
        Term::Giou => giou_loss(pool, gt, a),
        Term::Ret => {
            let targets = derive_targets(a, gt, pool)?;
            let probs: Vec<f64> = pool.hypotheses.iter().map(|h| h.retention_prob).collect();
            let (l, d) = retention_loss(&probs, &targets.retention)?;
            let mut grad = Gradients::zeros(pool);
            for (g, v) in grad.per_hypothesis.iter_mut().zip(d) {
                g.retention_prob = v;
            }
            Ok((l, grad))
        }
        Term::Ord => {
            let targets = derive_targets(a, gt, pool)?;
            let scores: HashMap<u64, f64> = pool.hypotheses.iter().map(|h| (h.id, h.order_score)).collect();
            let weights = pair_weights(a, gt, cfg.gamma)?;
            let (l, d) = ordering_loss(&scores, &targets.precedence, &weights)?;
            let mut grad = Gradients::zeros(pool);
            for g in &mut grad.per_hypothesis {
                g.order_score = d.get(&g.id).copied().unwrap_or(0.0);
            }
            Ok((l, grad))
        }
        Term::Total => loss_with_assignment(pool, gt, a, cfg).map(|r| (r.l_total, r.gradients)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub term: Term,
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub worst: Option<(u64, Field)>,
}

/// Compares every analytic partial of `term` against a central difference
/// with the assignment held fixed.
pub fn check_term_gradients(
    pool: &HypothesisPool,
    gt: &GroundTruthPage,
    a: &Assignment,
    cfg: &HandoffConfig,
    term: Term,
    step: f64,
) -> Result<GradCheckReport> {
    let (_, analytic) = term_value_and_grad(pool, gt, a, cfg, term)?;
    let value = |p: &HypothesisPool| term_value_and_grad(p, gt, a, cfg, term).map(|r| r.0);
    let mut out = GradCheckReport { term, max_relative_error: 0.0, checked: 0, skipped: 0, worst: None };
    for (position, h) in pool.hypotheses.iter().enumerate() {
        for field in term.fields(h) {
            if !is_smooth_at(pool, gt, a, position, field, step) {
                out.skipped += 1;
                continue;
            }
            let numeric = central_difference(pool, position, field, step, value)?;
            let err = relative_error(analytic.get(h.id, field).unwrap_or(0.0), numeric);
            out.checked += 1;
            if out.worst.is_none() || err > out.max_relative_error {
                out.max_relative_error = err;
                out.worst = Some((h.id, field));
            }
        }
    }
    Ok(out)
}

pub fn check_total_gradients(
    pool: &HypothesisPool,
    gt: &GroundTruthPage,
    a: &Assignment,
    cfg: &HandoffConfig,
    step: f64,
) -> Result<GradCheckReport> {
    check_term_gradients(pool, gt, a, cfg, Term::Total, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::assign;
    use crate::model::GroundTruthElement;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.0001) - 1e-4 / 1.0001).abs() < 1e-12);
        assert!((relative_error(1e-9, 0.0) - 1e-3).abs() < 1e-12);
    }

    #[test]
    fn small_page_passes_check() {
        let pool = HypothesisPool {
            page_id: "p".into(),
            page_width: 10,
            page_height: 10,
            num_classes: 2,
            hypotheses: vec![
                Hypothesis { id: 0, bbox: BBox::new(0.11, 0.09, 0.42, 0.33), class_probs: vec![0.7, 0.2], retention_prob: 0.6, order_score: 0.3 },
                Hypothesis { id: 1, bbox: BBox::new(0.52, 0.48, 0.88, 0.93), class_probs: vec![0.25, 0.55], retention_prob: 0.8, order_score: -0.2 },
                Hypothesis { id: 2, bbox: BBox::new(0.3, 0.3, 0.6, 0.6), class_probs: vec![0.4, 0.4], retention_prob: 0.3, order_score: 1.2 },
            ],
        };
        let gt = GroundTruthPage {
            page_id: "p".into(),
            num_classes: 2,
            elements: vec![
                GroundTruthElement { id: 0, bbox: BBox::new(0.1, 0.1, 0.4, 0.35), class_id: 0, order_rank: 0 },
                GroundTruthElement { id: 1, bbox: BBox::new(0.5, 0.5, 0.9, 0.9), class_id: 1, order_rank: 1 },
            ],
        };
        let cfg = HandoffConfig::default();
        let a = assign(&pool, &gt, &cfg).unwrap();
        let r = check_total_gradients(&pool, &gt, &a, &cfg, FD_STEP).unwrap();
        assert_eq!(r.skipped, 0);
        assert_eq!(r.checked, 3 * 8);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
        for term in Term::ALL {
            let r = check_term_gradients(&pool, &gt, &a, &cfg, term, FD_STEP).unwrap();
            assert!(r.checked > 0 && r.max_relative_error < 1e-4, "{r:?}");
        }
    }
}
