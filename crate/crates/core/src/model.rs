//! Shared domain types: boxes, hypothesis pools, ground truth, the parser
//! interface handed downstream, and the handoff configuration.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HandoffError, Result};

/// Axis-aligned box in normalized page coordinates (`xyxy`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub const fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn from_array(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn width(&self) -> f64 {
        (self.x2 - self.x1).max(0.0)
    }

    pub fn height(&self) -> f64 {
        (self.y2 - self.y1).max(0.0)
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Zero-area boxes are accepted on ingest but never overlap anything.
    pub fn is_degenerate(&self) -> bool {
        self.x2 <= self.x1 || self.y2 <= self.y1
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Clamps every coordinate to `[0, 1]` and swaps inverted corners.
    /// Returns the repaired box and whether a swap happened.
    pub fn normalized(self) -> (Self, bool) {
        let [mut x1, mut y1, mut x2, mut y2] = self.to_array().map(|v| v.clamp(0.0, 1.0));
        let mut swapped = false;
        if x1 > x2 {
            std::mem::swap(&mut x1, &mut x2);
            swapped = true;
        }
        if y1 > y2 {
            std::mem::swap(&mut y1, &mut y2);
            swapped = true;
        }
        (Self::new(x1, y1, x2, y2), swapped)
    }
}

/// One detector candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub id: u64,
    pub bbox: BBox,
    /// Independent per-class probabilities; they need not sum to one.
    pub class_probs: Vec<f64>,
    pub retention_prob: f64,
    /// Smaller means earlier in parser input order.
    pub order_score: f64,
}

impl Hypothesis {
    /// Highest class probability and its index (lowest index on ties).
    pub fn top_class(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (c, &p) in self.class_probs.iter().enumerate() {
            if p > best.1 {
                best = (c, p);
            }
        }
        if best.1 == f64::NEG_INFINITY {
            (0, 0.0)
        } else {
            best
        }
    }
}

/// The fixed-size candidate set for one page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPool {
    pub page_id: String,
    pub page_width: u32,
    pub page_height: u32,
    pub num_classes: usize,
    pub hypotheses: Vec<Hypothesis>,
}

/// Pool size used by the reference detector configuration.
pub const REFERENCE_POOL_SIZE: usize = 300;

impl HypothesisPool {
    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&Hypothesis> {
        self.hypotheses.iter().find(|h| h.id == id)
    }

    pub fn position(&self, id: u64) -> Option<usize> {
        self.hypotheses.iter().position(|h| h.id == id)
    }

    /// Checks every pool invariant. Boxes are expected to be normalized already.
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(HandoffError::validation("num_classes must be positive"));
        }
        if self.page_width == 0 || self.page_height == 0 {
            return Err(HandoffError::validation("page dimensions must be positive"));
        }
        let mut seen = HashSet::with_capacity(self.hypotheses.len());
        for h in &self.hypotheses {
            if !seen.insert(h.id) {
                return Err(HandoffError::validation(format!("duplicate hypothesis id {}", h.id)));
            }
            if !h.bbox.is_finite() {
                return Err(HandoffError::validation(format!("hypothesis {}: non-finite box", h.id)));
            }
            if h.class_probs.len() != self.num_classes {
                return Err(HandoffError::validation(format!(
                    "hypothesis {}: class_probs has length {}, expected {}",
                    h.id,
                    h.class_probs.len(),
                    self.num_classes
                )));
            }
            check_prob(h.id, "class_probs", &h.class_probs)?;
            check_prob(h.id, "retention_prob", &[h.retention_prob])?;
            if !h.order_score.is_finite() {
                return Err(HandoffError::validation(format!("hypothesis {}: non-finite order_score", h.id)));
            }
        }
        Ok(())
    }
}

fn check_prob(id: u64, field: &str, values: &[f64]) -> Result<()> {
    for &p in values {
        if p.is_nan() {
            return Err(HandoffError::validation(format!("hypothesis {id}: NaN in {field}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(HandoffError::validation(format!("hypothesis {id}: {field} value {p} outside [0, 1]")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthElement {
    pub id: u64,
    pub bbox: BBox,
    pub class_id: usize,
    pub order_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthPage {
    pub page_id: String,
    pub num_classes: usize,
    pub elements: Vec<GroundTruthElement>,
}

impl GroundTruthPage {
    pub fn get(&self, id: u64) -> Option<&GroundTruthElement> {
        self.elements.iter().find(|e| e.id == id)
    }

    /// Element ids in reading order.
    pub fn reading_sequence(&self) -> Vec<u64> {
        let mut els: Vec<_> = self.elements.iter().collect();
        els.sort_by_key(|e| e.order_rank);
        els.into_iter().map(|e| e.id).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(HandoffError::validation("num_classes must be positive"));
        }
        let mut ids = HashSet::new();
        let mut ranks = vec![false; self.elements.len()];
        for e in &self.elements {
            if !ids.insert(e.id) {
                return Err(HandoffError::validation(format!("duplicate element id {}", e.id)));
            }
            if !e.bbox.is_finite() {
                return Err(HandoffError::validation(format!("element {}: non-finite box", e.id)));
            }
            if e.class_id >= self.num_classes {
                return Err(HandoffError::validation(format!(
                    "element {}: class_id {} not below num_classes {}",
                    e.id, e.class_id, self.num_classes
                )));
            }
            match ranks.get_mut(e.order_rank) {
                Some(slot) if !*slot => *slot = true,
                _ => {
                    return Err(HandoffError::validation(format!(
                        "element {}: order_rank {} is duplicated or outside 0..{}",
                        e.id,
                        e.order_rank,
                        self.elements.len()
                    )))
                }
            }
        }
        Ok(())
    }
}

/// One retained instance as seen by the downstream parser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub hypothesis_id: u64,
    pub bbox: BBox,
    pub class_id: usize,
    pub score: f64,
}

/// Ordered retained subset; position in `instances` is the parser input order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParserInterface {
    pub page_id: String,
    pub instances: Vec<Instance>,
}

impl ParserInterface {
    pub fn ids(&self) -> Vec<u64> {
        self.instances.iter().map(|i| i.hypothesis_id).collect()
    }

    /// Instance ids must be unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for inst in &self.instances {
            if !seen.insert(inst.hypothesis_id) {
                return Err(HandoffError::validation(format!(
                    "duplicate instance for hypothesis {}",
                    inst.hypothesis_id
                )));
            }
        }
        Ok(())
    }

    /// Subset-and-uniqueness check against the pool the interface came from.
    pub fn check_against(&self, pool: &HypothesisPool) -> Result<()> {
        self.validate()?;
        let ids: HashSet<u64> = pool.hypotheses.iter().map(|h| h.id).collect();
        for inst in &self.instances {
            if !ids.contains(&inst.hypothesis_id) {
                return Err(HandoffError::validation(format!(
                    "instance references hypothesis {} absent from pool {}",
                    inst.hypothesis_id, pool.page_id
                )));
            }
        }
        Ok(())
    }
}

/// How the retained set and its order are built from a pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Threshold the learned retention score, rank by the learned order score.
    LearnedNmsFree,
    /// Greedy hard NMS, survivors ranked by order score.
    Nms,
    /// Gaussian Soft-NMS, survivors ranked by order score.
    SoftNms,
    /// Hard NMS, survivors ranked by an externally supplied order.
    DecoupledOrderAfterNms,
    /// No suppression at all: every hypothesis is handed off.
    Raw,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::LearnedNmsFree,
        Strategy::Nms,
        Strategy::SoftNms,
        Strategy::DecoupledOrderAfterNms,
        Strategy::Raw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::LearnedNmsFree => "learned_nms_free",
            Strategy::Nms => "nms",
            Strategy::SoftNms => "soft_nms",
            Strategy::DecoupledOrderAfterNms => "decoupled_order_after_nms",
            Strategy::Raw => "raw",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = HandoffError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned_nms_free" | "learned" => Ok(Strategy::LearnedNmsFree),
            "nms" => Ok(Strategy::Nms),
            "soft_nms" | "soft-nms" => Ok(Strategy::SoftNms),
            "decoupled_order_after_nms" | "decoupled" => Ok(Strategy::DecoupledOrderAfterNms),
            "raw" => Ok(Strategy::Raw),
            other => Err(HandoffError::validation(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Handoff, suppression and loss parameters. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HandoffConfig {
    pub strategy: Strategy,
    /// Cutoff on the final score `s_i`.
    pub retention_threshold: f64,
    pub nms_iou_threshold: f64,
    pub class_agnostic_nms: bool,
    pub soft_nms_sigma: f64,
    pub soft_nms_score_floor: f64,
    /// Difficulty-weight coefficient.
    pub gamma: f64,
    pub lambda_cls: f64,
    pub lambda_l1: f64,
    pub lambda_giou: f64,
    pub lambda_ret: f64,
    pub lambda_ord: f64,
    /// Focal modulation exponent for the classification term; 0 is plain BCE.
    pub cls_focal_gamma: f64,
}

impl Default for HandoffConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::LearnedNmsFree,
            retention_threshold: 0.5,
            nms_iou_threshold: 0.5,
            class_agnostic_nms: false,
            soft_nms_sigma: 0.5,
            soft_nms_score_floor: 0.1,
            gamma: 1.0,
            lambda_cls: 1.0,
            lambda_l1: 5.0,
            lambda_giou: 2.0,
            lambda_ret: 1.0,
            lambda_ord: 1.0,
            cls_focal_gamma: 0.0,
        }
    }
}

impl HandoffConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("retention_threshold", self.retention_threshold),
            ("nms_iou_threshold", self.nms_iou_threshold),
            ("soft_nms_score_floor", self.soft_nms_score_floor),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(HandoffError::validation(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.soft_nms_sigma > 0.0 && self.soft_nms_sigma.is_finite()) {
            return Err(HandoffError::validation("soft_nms_sigma must be positive"));
        }
        let non_negative = [
            ("gamma", self.gamma),
            ("lambda_cls", self.lambda_cls),
            ("lambda_l1", self.lambda_l1),
            ("lambda_giou", self.lambda_giou),
            ("lambda_ret", self.lambda_ret),
            ("lambda_ord", self.lambda_ord),
            ("cls_focal_gamma", self.cls_focal_gamma),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(HandoffError::validation(format!("{name} = {v} must be a non-negative real")));
            }
        }
        Ok(())
    }
}
