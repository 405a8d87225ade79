//! Independent reference implementations and random instance builders shared
//! by the integration and acceptance suites. Nothing here calls into the
//! library's geometry, matching or objective code.

#![allow(dead_code)]

use layout_handoff::model::{BBox, GroundTruthElement, GroundTruthPage, HandoffConfig, Hypothesis, HypothesisPool};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Box with both sides at least `min_side`, inside the unit square.
pub fn random_box(rng: &mut ChaCha8Rng, min_side: f64) -> BBox {
    let w = rng.random_range(min_side..0.6);
    let h = rng.random_range(min_side..0.6);
    let x = rng.random_range(0.0..1.0 - w);
    let y = rng.random_range(0.0..1.0 - h);
    BBox::new(x, y, x + w, y + h)
}

pub fn random_gt(rng: &mut ChaCha8Rng, m: usize, c: usize) -> GroundTruthPage {
    let mut ranks: Vec<usize> = (0..m).collect();
    ranks.shuffle(rng);
    let elements = (0..m)
        .map(|k| GroundTruthElement {
            id: 100 + k as u64,
            bbox: random_box(rng, 0.05),
            class_id: rng.random_range(0..c),
            order_rank: ranks[k],
        })
        .collect();
    GroundTruthPage { page_id: "rand".into(), num_classes: c, elements }
}

/// Pool whose probabilities stay clear of the clamp region.
pub fn random_pool(rng: &mut ChaCha8Rng, n: usize, c: usize) -> HypothesisPool {
    let hypotheses = (0..n)
        .map(|k| Hypothesis {
            id: 7 * k as u64 + 1,
            bbox: random_box(rng, 0.05),
            class_probs: (0..c).map(|_| rng.random_range(0.02..0.98)).collect(),
            retention_prob: rng.random_range(0.02..0.98),
            order_score: rng.random_range(-3.0..3.0),
        })
        .collect();
    HypothesisPool { page_id: "rand".into(), page_width: 800, page_height: 1000, num_classes: c, hypotheses }
}

/// A random matched instance with `n` hypotheses, `m` elements and `c` classes.
pub fn random_instance(seed: u64) -> (HypothesisPool, GroundTruthPage) {
    let mut r = rng(seed);
    let n = r.random_range(2..=7);
    let m = r.random_range(2..=6);
    let c = r.random_range(1..=4);
    let gt = random_gt(&mut r, m, c);
    let pool = random_pool(&mut r, n, c);
    (pool, gt)
}

/// Minimum over all injective assignments of the smaller side into the
/// larger, by exhaustive enumeration. Returns `(cost, row→col pairs)`.
pub fn brute_force_assignment(cost: &[Vec<f64>], cols: usize) -> (f64, Vec<(usize, usize)>) {
    let rows = cost.len();
    let mut best = (f64::INFINITY, Vec::new());
    if rows <= cols {
        let mut used = vec![false; cols];
        let mut cur = Vec::new();
        search_rows(cost, 0, &mut used, &mut cur, &mut best);
    } else {
        let transposed: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| cost[r][c]).collect()).collect();
        let mut used = vec![false; rows];
        let mut cur = Vec::new();
        search_rows(&transposed, 0, &mut used, &mut cur, &mut best);
        best.1 = best.1.iter().map(|&(c, r)| (r, c)).collect();
        best.1.sort_unstable();
    }
    if rows == 0 || cols == 0 {
        return (0.0, Vec::new());
    }
    best
}

fn search_rows(
    cost: &[Vec<f64>],
    row: usize,
    used: &mut [bool],
    cur: &mut Vec<(usize, usize)>,
    best: &mut (f64, Vec<(usize, usize)>),
) {
    if row == cost.len() {
        let total: f64 = cur.iter().map(|&(r, c)| cost[r][c]).sum();
        if total < best.0 {
            *best = (total, cur.clone());
        }
        return;
    }
    for c in 0..used.len() {
        if !used[c] {
            used[c] = true;
            cur.push((row, c));
            search_rows(cost, row + 1, used, cur, best);
            cur.pop();
            used[c] = false;
        }
    }
}

/// Full-matrix Levenshtein distance.
pub fn reference_edit<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

/// Count of other elements whose centers lie in the closed rectangle spanned
/// by the centers of elements `i` and `j`.
pub fn brute_mid_count(page: &GroundTruthPage, i: usize, j: usize) -> usize {
    let c = |k: usize| {
        let b = page.elements[k].bbox;
        (0.5 * (b.x1 + b.x2), 0.5 * (b.y1 + b.y2))
    };
    let (a, b) = (c(i), c(j));
    (0..page.elements.len())
        .filter(|&k| k != i && k != j)
        .filter(|&k| {
            let p = c(k);
            p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
        })
        .count()
}

fn area(b: &BBox) -> f64 {
    (b.x2 - b.x1).max(0.0) * (b.y2 - b.y1).max(0.0)
}

/// IoU and GIoU written out directly.
pub fn plain_iou_giou(a: &BBox, b: &BBox) -> (f64, f64) {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    let enc = (a.x2.max(b.x2) - a.x1.min(b.x1)) * (a.y2.max(b.y2) - a.y1.min(b.y1));
    let iou = inter / union;
    (iou, iou - (enc - union) / enc)
}

/// IoU estimated by counting points of a regular grid over the enclosure.
pub fn grid_iou(a: &BBox, b: &BBox, steps: usize) -> f64 {
    let (x0, y0) = (a.x1.min(b.x1), a.y1.min(b.y1));
    let (x1, y1) = (a.x2.max(b.x2), a.y2.max(b.y2));
    let inside = |bx: &BBox, x: f64, y: f64| x >= bx.x1 && x < bx.x2 && y >= bx.y1 && y < bx.y2;
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..steps {
        for j in 0..steps {
            let x = x0 + (x1 - x0) * (i as f64 + 0.5) / steps as f64;
            let y = y0 + (y1 - y0) * (j as f64 + 0.5) / steps as f64;
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += usize::from(ia && ib);
            union += usize::from(ia || ib);
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn clamped_log(p: f64) -> f64 {
    p.clamp(1e-7, 1.0 - 1e-7).ln()
}

fn plain_bce(p: f64, t: f64) -> f64 {
    -(t * clamped_log(p) + (1.0 - t) * clamped_log(1.0 - p))
}

/// The full objective, written as a single pass: brute-force matching on the
/// match cost, then every term from its defining formula.
pub fn straight_line_total(pool: &HypothesisPool, gt: &GroundTruthPage, cfg: &HandoffConfig) -> f64 {
    let hs = &pool.hypotheses;
    let gs = &gt.elements;
    let cost: Vec<Vec<f64>> = hs
        .iter()
        .map(|h| {
            gs.iter()
                .map(|g| {
                    let l1 = (h.bbox.x1 - g.bbox.x1).abs()
                        + (h.bbox.y1 - g.bbox.y1).abs()
                        + (h.bbox.x2 - g.bbox.x2).abs()
                        + (h.bbox.y2 - g.bbox.y2).abs();
                    cfg.lambda_cls * (1.0 - h.class_probs[g.class_id])
                        + cfg.lambda_l1 * l1
                        + cfg.lambda_giou * (1.0 - plain_iou_giou(&h.bbox, &g.bbox).1)
                })
                .collect()
        })
        .collect();
    let (_, pairs) = brute_force_assignment(&cost, gs.len());

    let target = |i: usize| pairs.iter().find(|p| p.0 == i).map(|p| p.1);

    let n = hs.len() as f64;
    let mut l_cls = 0.0;
    let mut l_ret = 0.0;
    for (i, h) in hs.iter().enumerate() {
        let g = target(i);
        for (c, &p) in h.class_probs.iter().enumerate() {
            let t = if g.map(|g| gs[g].class_id) == Some(c) { 1.0 } else { 0.0 };
            l_cls += plain_bce(p, t);
        }
        l_ret += plain_bce(h.retention_prob, if g.is_some() { 1.0 } else { 0.0 });
    }
    l_cls /= n;
    l_ret /= n;

    let m = pairs.len() as f64;
    let (mut l_l1, mut l_giou) = (0.0, 0.0);
    for &(i, g) in &pairs {
        let (a, b) = (hs[i].bbox, gs[g].bbox);
        l_l1 += (a.x1 - b.x1).abs() + (a.y1 - b.y1).abs() + (a.x2 - b.x2).abs() + (a.y2 - b.y2).abs();
        l_giou += 1.0 - plain_iou_giou(&a, &b).1;
    }
    if m > 0.0 {
        l_l1 /= m;
        l_giou /= m;
    }

    let mut l_ord = 0.0;
    let mut count = 0usize;
    for &(i, gi) in &pairs {
        for &(j, gj) in &pairs {
            if i == j {
                continue;
            }
            let y = if gs[gi].order_rank < gs[gj].order_rank { 1.0 } else { 0.0 };
            let p = 1.0 / (1.0 + (-(hs[j].order_score - hs[i].order_score)).exp());
            let w = 1.0 + cfg.gamma * (1.0 + brute_mid_count(gt, gi, gj) as f64).ln();
            l_ord += -w * (y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            count += 1;
        }
    }
    if count > 0 {
        l_ord /= count as f64;
    }

    let l_det = cfg.lambda_cls * l_cls + cfg.lambda_l1 * l_l1 + cfg.lambda_giou * l_giou;
    l_det + cfg.lambda_ret * l_ret + cfg.lambda_ord * l_ord
}
