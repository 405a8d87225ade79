//! Deterministic synthetic pages and hypothesis pools.
//!
//! Ground-truth pages are column layouts read column by column, top to
//! bottom. Pools are derived from a page by jittering one primary candidate
//! per element and injecting the handoff failure modes: near-duplicate
//! candidates, truncated candidates that outscore a better-localized
//! alternative, and small false positives. All randomness comes from
//! ChaCha8 seeded with the page seed (stream 0 for layout, stream 1 for
//! corruption), so output is identical on every platform.
//!
//! Scores are stipulated bands, not learned: true candidates get a high
//! retention band, spurious candidates a low one. The truncated member of an
//! incomplete-survivor pair is deliberately given the higher final score.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::{fmt_float, fmt_str};
use crate::error::{HandoffError, Result};
use crate::geometry::iou;
use crate::handoff::final_score;
use crate::model::{BBox, GroundTruthElement, GroundTruthPage, Hypothesis, HypothesisPool, Instance, ParserInterface};

pub const PAGE_WIDTH: u32 = 1240;
pub const PAGE_HEIGHT: u32 = 1754;

const MARGIN: f64 = 0.05;
const COLUMN_GAP: f64 = 0.03;
const ROW_GAP: f64 = 0.02;
const MIN_ELEMENT_HEIGHT: f64 = 0.015;
/// Jittered candidates must keep at least this IoU with their element.
const MIN_JITTER_IOU: f64 = 0.7;
const MAX_RESAMPLES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Clean,
    Duplicates,
    IncompleteSurvivor,
    DenseGrid,
    RandomMixed,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Clean,
        Scenario::Duplicates,
        Scenario::IncompleteSurvivor,
        Scenario::DenseGrid,
        Scenario::RandomMixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Clean => "clean",
            Scenario::Duplicates => "duplicates",
            Scenario::IncompleteSurvivor => "incomplete_survivor",
            Scenario::DenseGrid => "dense_grid",
            Scenario::RandomMixed => "random_mixed",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = HandoffError;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| HandoffError::validation(format!("unknown scenario `{s}`")))
    }
}

/// Closed interval sampled uniformly.
pub type Band = (f64, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub true_retention: Band,
    pub true_class: Band,
    pub spurious_retention: Band,
    pub spurious_class: Band,
    /// Probabilities of the non-top classes.
    pub background_class: Band,
    /// Well-localized member of an incomplete-survivor pair.
    pub complete_retention: Band,
    pub complete_class: Band,
    /// Truncated member of an incomplete-survivor pair.
    pub truncated_retention: Band,
    pub truncated_class: Band,
    /// Half-width of the uniform noise added to a true candidate's rank.
    pub order_noise: f64,
    /// Standard deviation of the external (decoupled) order noise.
    pub external_order_sigma: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            true_retention: (0.7, 0.99),
            true_class: (0.75, 0.99),
            spurious_retention: (0.05, 0.45),
            spurious_class: (0.3, 0.9),
            background_class: (0.005, 0.15),
            complete_retention: (0.7, 0.9),
            complete_class: (0.75, 0.85),
            truncated_retention: (0.92, 0.99),
            truncated_class: (0.9, 0.99),
            order_noise: 0.2,
            external_order_sigma: 0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub seed: u64,
    pub elements_per_page: usize,
    pub num_classes: usize,
    pub duplicate_rate: f64,
    pub split_rate: f64,
    pub shift_sigma: f64,
    pub false_positive_rate: f64,
    pub scores: ScoreModel,
}

impl ScenarioSpec {
    /// Default parameters for each scenario.
    pub fn preset(scenario: Scenario, seed: u64) -> Self {
        let base = Self {
            scenario,
            seed,
            elements_per_page: 8,
            num_classes: 5,
            duplicate_rate: 0.0,
            split_rate: 0.0,
            shift_sigma: 0.002,
            false_positive_rate: 0.0,
            scores: ScoreModel::default(),
        };
        match scenario {
            Scenario::Clean => base,
            Scenario::Duplicates => Self { elements_per_page: 10, duplicate_rate: 0.6, shift_sigma: 0.004, ..base },
            Scenario::IncompleteSurvivor => Self { split_rate: 0.5, ..base },
            Scenario::DenseGrid => Self {
                elements_per_page: 24,
                duplicate_rate: 0.3,
                split_rate: 0.1,
                false_positive_rate: 0.1,
                ..base
            },
            Scenario::RandomMixed => Self {
                elements_per_page: 10,
                duplicate_rate: 0.3,
                split_rate: 0.2,
                false_positive_rate: 0.3,
                shift_sigma: 0.004,
                ..base
            },
        }
    }

    /// Same parameters, different seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// All corruption disabled.
    pub fn noise_free(&self) -> Self {
        Self { duplicate_rate: 0.0, split_rate: 0.0, shift_sigma: 0.0, false_positive_rate: 0.0, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements_per_page == 0 {
            return Err(HandoffError::validation("elements_per_page must be positive"));
        }
        if self.num_classes == 0 {
            return Err(HandoffError::validation("num_classes must be positive"));
        }
        for (name, v) in [
            ("duplicate_rate", self.duplicate_rate),
            ("split_rate", self.split_rate),
            ("false_positive_rate", self.false_positive_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(HandoffError::validation(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if !(self.shift_sigma >= 0.0 && self.shift_sigma.is_finite()) {
            return Err(HandoffError::validation("shift_sigma must be a non-negative real"));
        }
        Ok(())
    }

    fn page_id(&self) -> String {
        format!("{}-{}", self.scenario, self.seed)
    }
}

fn uniform(rng: &mut ChaCha8Rng, band: Band) -> f64 {
    band.0 + (band.1 - band.0) * rng.random::<f64>()
}

fn layout_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn corruption_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Column layout with column-major reading ranks.
pub fn generate_page(spec: &ScenarioSpec) -> Result<GroundTruthPage> {
    spec.validate()?;
    let mut rng = layout_rng(spec.seed);
    let n = spec.elements_per_page;
    let columns = match spec.scenario {
        _ if n == 1 => 1,
        Scenario::DenseGrid => 3.min(n),
        Scenario::RandomMixed if n >= 6 => rng.random_range(1..=3),
        _ if n >= 4 => rng.random_range(1..=2),
        _ => 1,
    };
    let col_width = (1.0 - 2.0 * MARGIN - COLUMN_GAP * (columns - 1) as f64) / columns as f64;

    let mut boxes = Vec::with_capacity(n);
    for c in 0..columns {
        let count = n / columns + usize::from(c < n % columns);
        let available = 1.0 - 2.0 * MARGIN - ROW_GAP * count.saturating_sub(1) as f64;
        if count == 0 || available / (count as f64) < MIN_ELEMENT_HEIGHT {
            return Err(HandoffError::LayoutOverflow(format!(
                "{count} elements do not fit in a column of height {:.3}",
                1.0 - 2.0 * MARGIN
            )));
        }
        let weights: Vec<f64> = (0..count)
            .map(|_| if spec.scenario == Scenario::DenseGrid { 1.0 } else { rng.random_range(0.5..1.5) })
            .collect();
        let total: f64 = weights.iter().sum();
        let x1 = MARGIN + c as f64 * (col_width + COLUMN_GAP);
        let mut y = MARGIN;
        for w in weights {
            let h = available * w / total;
            let width_frac = if n == 1 || spec.scenario == Scenario::DenseGrid { 1.0 } else { rng.random_range(0.7..=1.0) };
            boxes.push(BBox::new(x1, y, x1 + col_width * width_frac, y + h));
            y += h + ROW_GAP;
        }
    }

    let mut ids: Vec<u64> = (0..n as u64).collect();
    ids.shuffle(&mut rng);
    let elements = boxes
        .into_iter()
        .enumerate()
        .map(|(rank, bbox)| GroundTruthElement {
            id: ids[rank],
            bbox,
            class_id: rng.random_range(0..spec.num_classes),
            order_rank: rank,
        })
        .collect();
    Ok(GroundTruthPage { page_id: spec.page_id(), num_classes: spec.num_classes, elements })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    Primary,
    Duplicate,
    Complete,
    Truncated,
    FalsePositive,
}

impl CandidateKind {
    pub fn name(self) -> &'static str {
        match self {
            CandidateKind::Primary => "primary",
            CandidateKind::Duplicate => "duplicate",
            CandidateKind::Complete => "complete",
            CandidateKind::Truncated => "truncated",
            CandidateKind::FalsePositive => "false_positive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEntry {
    pub hypothesis_id: u64,
    /// Intended ground-truth element, `None` for false positives.
    pub gt_id: Option<u64>,
    pub kind: CandidateKind,
    /// Score from an ordering model that sees the whole pool.
    pub external_order: f64,
}

/// Generation-time knowledge about a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oracle {
    pub page_id: String,
    pub scenario: Scenario,
    /// Sorted by hypothesis id.
    pub entries: Vec<OracleEntry>,
}

impl Oracle {
    pub fn gt_for(&self, hypothesis_id: u64) -> Option<u64> {
        self.entries.iter().find(|e| e.hypothesis_id == hypothesis_id).and_then(|e| e.gt_id)
    }

    pub fn external_order(&self) -> std::collections::HashMap<u64, f64> {
        self.entries.iter().map(|e| (e.hypothesis_id, e.external_order)).collect()
    }

    pub fn kind_of(&self, hypothesis_id: u64) -> Option<CandidateKind> {
        self.entries.iter().find(|e| e.hypothesis_id == hypothesis_id).map(|e| e.kind)
    }
}

fn jitter(rng: &mut ChaCha8Rng, target: &BBox, sigma: f64) -> BBox {
    if sigma == 0.0 {
        return *target;
    }
    for _ in 0..MAX_RESAMPLES {
        let mut c = target.to_array();
        for v in &mut c {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        let (b, _) = BBox::from_array(c).normalized();
        if !b.is_degenerate() && iou(&b, target) >= MIN_JITTER_IOU {
            return b;
        }
    }
    *target
}

fn class_probs(rng: &mut ChaCha8Rng, num_classes: usize, top: usize, top_band: Band, bg: Band) -> Vec<f64> {
    (0..num_classes).map(|c| if c == top { uniform(rng, top_band) } else { uniform(rng, bg) }).collect()
}

/// A truncated/complete pair anchored on the same edge of `target`. The
/// complete box keeps `f_c ∈ [0.86, 0.94]` of the height, the truncated one
/// keeps `f_t` with `f_t/f_c ≥ 0.5 + δ` and `f_t ≤ 0.49`, so the truncated
/// box overlaps the complete one at IoU ≥ 0.5 while its own IoU with the
/// element stays below 0.5.
fn incomplete_pair(rng: &mut ChaCha8Rng, target: &BBox) -> (BBox, BBox) {
    let f_complete = rng.random_range(0.86..=0.94);
    let lo = 0.5 * f_complete + 0.01;
    let f_truncated = lo + (0.49 - lo) * rng.random::<f64>();
    let h = target.height();
    let from_top = rng.random_bool(0.5);
    let cut = |frac: f64| {
        if from_top {
            BBox::new(target.x1, target.y1, target.x2, target.y1 + h * frac)
        } else {
            BBox::new(target.x1, target.y2 - h * frac, target.x2, target.y2)
        }
    };
    (cut(f_complete), cut(f_truncated))
}

/// Turns a ground-truth page into a hypothesis pool plus oracle knowledge.
pub fn corrupt_to_pool(gt: &GroundTruthPage, spec: &ScenarioSpec) -> Result<(HypothesisPool, Oracle)> {
    spec.validate()?;
    let mut rng = corruption_rng(spec.seed);
    let sm = &spec.scores;
    let c = gt.num_classes;
    let m = gt.elements.len();
    let interleaving = (-0.5, m as f64 - 0.5);
    let mut next_id = gt.elements.iter().map(|e| e.id + 1).max().unwrap_or(0);
    let mut fresh_id = || {
        let id = next_id;
        next_id += 1;
        id
    };

    let mut elements: Vec<&GroundTruthElement> = gt.elements.iter().collect();
    elements.sort_by_key(|e| e.order_rank);

    let mut hyps: Vec<Hypothesis> = Vec::new();
    let mut entries: Vec<OracleEntry> = Vec::new();
    let mut push = |h: Hypothesis, gt_id: Option<u64>, kind: CandidateKind, ext: f64, hyps: &mut Vec<Hypothesis>| {
        entries.push(OracleEntry { hypothesis_id: h.id, gt_id, kind, external_order: ext });
        hyps.push(h);
    };

    for el in &elements {
        let rank = el.order_rank as f64;
        let true_order = |rng: &mut ChaCha8Rng| rank + uniform(rng, (-sm.order_noise, sm.order_noise));
        let true_external = |rng: &mut ChaCha8Rng| rank + sm.external_order_sigma * rng.sample::<f64, _>(StandardNormal);
        let stale_external = |rng: &mut ChaCha8Rng| rank - uniform(rng, (0.5, 1.5));

        let primary_box;
        if rng.random_bool(spec.split_rate) {
            let (complete, truncated) = incomplete_pair(&mut rng, &el.bbox);
            primary_box = complete;
            let h = Hypothesis {
                id: el.id,
                bbox: complete,
                class_probs: class_probs(&mut rng, c, el.class_id, sm.complete_class, sm.background_class),
                retention_prob: uniform(&mut rng, sm.complete_retention),
                order_score: true_order(&mut rng),
            };
            let ext = true_external(&mut rng);
            push(h, Some(el.id), CandidateKind::Complete, ext, &mut hyps);
            let h = Hypothesis {
                id: fresh_id(),
                bbox: truncated,
                class_probs: class_probs(&mut rng, c, el.class_id, sm.truncated_class, sm.background_class),
                retention_prob: uniform(&mut rng, sm.truncated_retention),
                order_score: uniform(&mut rng, interleaving),
            };
            let ext = stale_external(&mut rng);
            push(h, Some(el.id), CandidateKind::Truncated, ext, &mut hyps);
        } else {
            primary_box = jitter(&mut rng, &el.bbox, spec.shift_sigma);
            let h = Hypothesis {
                id: el.id,
                bbox: primary_box,
                class_probs: class_probs(&mut rng, c, el.class_id, sm.true_class, sm.background_class),
                retention_prob: uniform(&mut rng, sm.true_retention),
                order_score: true_order(&mut rng),
            };
            let ext = true_external(&mut rng);
            push(h, Some(el.id), CandidateKind::Primary, ext, &mut hyps);
        }

        if rng.random_bool(spec.duplicate_rate) {
            let copies = 1 + usize::from(rng.random_bool(spec.duplicate_rate));
            for _ in 0..copies {
                let mut bbox = primary_box;
                for _ in 0..MAX_RESAMPLES {
                    let cand = jitter(&mut rng, &el.bbox, spec.shift_sigma.max(0.002));
                    if iou(&cand, &primary_box) >= MIN_JITTER_IOU {
                        bbox = cand;
                        break;
                    }
                }
                let h = Hypothesis {
                    id: fresh_id(),
                    bbox,
                    class_probs: class_probs(&mut rng, c, el.class_id, sm.true_class, sm.background_class),
                    retention_prob: uniform(&mut rng, sm.spurious_retention),
                    order_score: uniform(&mut rng, interleaving),
                };
                let ext = stale_external(&mut rng);
                push(h, Some(el.id), CandidateKind::Duplicate, ext, &mut hyps);
            }
        }

        if rng.random_bool(spec.false_positive_rate) {
            for _ in 0..MAX_RESAMPLES {
                let w = rng.random_range(0.03..0.12);
                let h = rng.random_range(0.02..0.08);
                let x = rng.random_range(0.0..1.0 - w);
                let y = rng.random_range(0.0..1.0 - h);
                let bbox = BBox::new(x, y, x + w, y + h);
                if gt.elements.iter().all(|g| iou(&bbox, &g.bbox) < 0.3) {
                    let cls = rng.random_range(0..c);
                    let hyp = Hypothesis {
                        id: fresh_id(),
                        bbox,
                        class_probs: class_probs(&mut rng, c, cls, sm.spurious_class, sm.background_class),
                        retention_prob: uniform(&mut rng, sm.spurious_retention),
                        order_score: uniform(&mut rng, interleaving),
                    };
                    let ext = uniform(&mut rng, interleaving);
                    push(hyp, None, CandidateKind::FalsePositive, ext, &mut hyps);
                    break;
                }
            }
        }
    }

    hyps.shuffle(&mut rng);
    entries.sort_by_key(|e| e.hypothesis_id);
    let pool = HypothesisPool {
        page_id: gt.page_id.clone(),
        page_width: PAGE_WIDTH,
        page_height: PAGE_HEIGHT,
        num_classes: c,
        hypotheses: hyps,
    };
    let oracle = Oracle { page_id: gt.page_id.clone(), scenario: spec.scenario, entries };
    Ok((pool, oracle))
}

/// Best achievable interface: per element, the corresponding hypothesis with
/// the highest IoU, in ground-truth order.
pub fn oracle_interface(gt: &GroundTruthPage, pool: &HypothesisPool, oracle: &Oracle) -> ParserInterface {
    let mut elements: Vec<&GroundTruthElement> = gt.elements.iter().collect();
    elements.sort_by_key(|e| e.order_rank);
    let mut instances = Vec::new();
    for el in elements {
        let best = pool
            .hypotheses
            .iter()
            .filter(|h| oracle.gt_for(h.id) == Some(el.id))
            .map(|h| (h, iou(&h.bbox, &el.bbox)))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.id.cmp(&a.0.id)));
        if let Some((h, _)) = best {
            instances.push(Instance { hypothesis_id: h.id, bbox: h.bbox, class_id: h.top_class().0, score: final_score(h) });
        }
    }
    ParserInterface { page_id: gt.page_id.clone(), instances }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPage {
    pub stem: String,
    pub gt: GroundTruthPage,
    pub pool: HypothesisPool,
    pub oracle: Oracle,
}

/// Page `k` uses seed `spec.seed ^ k` and the stem `<scenario>-<k:04>`.
pub fn generate_corpus_page(spec: &ScenarioSpec, index: u64) -> Result<SyntheticPage> {
    let page_spec = spec.with_seed(spec.seed ^ index);
    let stem = format!("{}-{:04}", spec.scenario, index);
    let mut gt = generate_page(&page_spec)?;
    gt.page_id = stem.clone();
    let (pool, oracle) = corrupt_to_pool(&gt, &page_spec)?;
    Ok(SyntheticPage { stem, gt, pool, oracle })
}

pub fn generate_corpus(spec: &ScenarioSpec, pages: usize) -> Result<Vec<SyntheticPage>> {
    (0..pages as u64).map(|k| generate_corpus_page(spec, k)).collect()
}

pub fn serialize_oracle(oracle: &Oracle) -> Vec<u8> {
    let mut out = String::new();
    write!(out, "{{\"page_id\":{},\"scenario\":\"{}\",\"entries\":[", fmt_str(&oracle.page_id), oracle.scenario).unwrap();
    for (k, e) in oracle.entries.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let gt = e.gt_id.map_or_else(|| "null".to_string(), |g| g.to_string());
        write!(
            out,
            "{{\"hypothesis_id\":{},\"gt_id\":{},\"kind\":\"{}\",\"external_order\":{}}}",
            e.hypothesis_id,
            gt,
            e.kind.name(),
            fmt_float(e.external_order)
        )
        .unwrap();
    }
    out.push_str("]}");
    out.into_bytes()
}

pub fn parse_oracle(raw: &[u8]) -> Result<Oracle> {
    let text = std::str::from_utf8(raw).map_err(|e| HandoffError::Schema(format!("input is not UTF-8: {e}")))?;
    let oracle: Oracle = serde_json::from_str(text)?;
    let mut seen = std::collections::HashSet::new();
    for e in &oracle.entries {
        if !seen.insert(e.hypothesis_id) {
            return Err(HandoffError::validation(format!("duplicate oracle entry for {}", e.hypothesis_id)));
        }
        if !e.external_order.is_finite() {
            return Err(HandoffError::validation(format!("non-finite external order for {}", e.hypothesis_id)));
        }
    }
    Ok(oracle)
}

/// Kind counts per page, handy for reports and tests.
pub fn kind_histogram(oracle: &Oracle) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for e in &oracle.entries {
        *out.entry(e.kind.name()).or_insert(0) += 1;
    }
    out
}
