//! One-to-one assignment between hypotheses and ground-truth elements, and
//! the retention / precedence targets it induces.

use std::collections::{BTreeMap, HashMap};

use crate::error::{HandoffError, Result};
use crate::geometry::giou;
use crate::model::{GroundTruthElement, GroundTruthPage, HandoffConfig, Hypothesis, HypothesisPool};

/// Dense row-major cost matrix. Rows are hypotheses, columns ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(HandoffError::Dimension(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds from nested rows; all rows must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(HandoffError::Dimension(format!(
                    "row {r} has {} entries, expected {cols}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(hypothesis_id, gt_id)`, sorted by hypothesis position.
    pub pairs: Vec<(u64, u64)>,
    pub unmatched_hypotheses: Vec<u64>,
    pub unmatched_gt: Vec<u64>,
    pub total_cost: f64,
}

impl Assignment {
    pub fn gt_for(&self, hypothesis_id: u64) -> Option<u64> {
        self.pairs.iter().find(|p| p.0 == hypothesis_id).map(|p| p.1)
    }
}

/// Minimum-cost one-to-one assignment (shortest augmenting paths with
/// potentials, O(k²·n) for a k×n problem with k ≤ n). Rectangular inputs are
/// solved on whichever orientation has fewer rows; no padding is involved.
///
/// Returned ids are row and column indices.
pub fn hungarian(cost: &CostMatrix) -> Result<Assignment> {
    if let Some(bad) = cost.data.iter().find(|v| !v.is_finite()) {
        return Err(HandoffError::validation(format!("non-finite cost {bad}")));
    }
    let (n, m) = (cost.rows, cost.cols);
    let row_to_col: Vec<Option<usize>> = if n <= m {
        solve_rows_le_cols(n, m, |r, c| cost.get(r, c))
    } else {
        let col_to_row = solve_rows_le_cols(m, n, |r, c| cost.get(c, r));
        let mut out = vec![None; n];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                out[r] = Some(c);
            }
        }
        out
    };

    let mut pairs = Vec::new();
    let mut unmatched_hypotheses = Vec::new();
    let mut col_used = vec![false; m];
    let mut total_cost = 0.0;
    for (r, c) in row_to_col.iter().enumerate() {
        match c {
            Some(c) => {
                pairs.push((r as u64, *c as u64));
                col_used[*c] = true;
                total_cost += cost.get(r, *c);
            }
            None => unmatched_hypotheses.push(r as u64),
        }
    }
    let unmatched_gt = (0..m).filter(|&c| !col_used[c]).map(|c| c as u64).collect();
    Ok(Assignment { pairs, unmatched_hypotheses, unmatched_gt, total_cost })
}

/// Assigns every one of `n` rows to a distinct column among `m >= n`.
fn solve_rows_le_cols(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    debug_assert!(n <= m);
    if n == 0 {
        return Vec::new();
    }
    // 1-based with a virtual column 0, following the classic formulation.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![None; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = Some(j - 1);
        }
    }
    row_to_col
}

/// `λ_cls·(1 − p[class]) + λ_l1·‖Δbox‖₁ + λ_giou·(1 − GIoU)`.
pub fn match_cost(h: &Hypothesis, g: &GroundTruthElement, cfg: &HandoffConfig) -> f64 {
    let class_prob = h.class_probs.get(g.class_id).copied().unwrap_or(0.0);
    let l1: f64 = h
        .bbox
        .to_array()
        .iter()
        .zip(g.bbox.to_array())
        .map(|(a, b)| (a - b).abs())
        .sum();
    cfg.lambda_cls * (1.0 - class_prob) + cfg.lambda_l1 * l1 + cfg.lambda_giou * (1.0 - giou(&h.bbox, &g.bbox))
}

pub fn cost_matrix(pool: &HypothesisPool, gt: &GroundTruthPage, cfg: &HandoffConfig) -> CostMatrix {
    let mut data = Vec::with_capacity(pool.len() * gt.elements.len());
    for h in &pool.hypotheses {
        for g in &gt.elements {
            data.push(match_cost(h, g, cfg));
        }
    }
    CostMatrix { rows: pool.len(), cols: gt.elements.len(), data }
}

/// Matches a pool against its ground truth, returning hypothesis and gt ids.
pub fn assign(pool: &HypothesisPool, gt: &GroundTruthPage, cfg: &HandoffConfig) -> Result<Assignment> {
    let by_index = hungarian(&cost_matrix(pool, gt, cfg))?;
    let hid = |r: u64| pool.hypotheses[r as usize].id;
    let gid = |c: u64| gt.elements[c as usize].id;
    Ok(Assignment {
        pairs: by_index.pairs.iter().map(|&(r, c)| (hid(r), gid(c))).collect(),
        unmatched_hypotheses: by_index.unmatched_hypotheses.iter().map(|&r| hid(r)).collect(),
        unmatched_gt: by_index.unmatched_gt.iter().map(|&c| gid(c)).collect(),
        total_cost: by_index.total_cost,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `t_i` in pool order.
    pub retention: Vec<u8>,
    /// `y_ij` for every ordered pair of distinct matched hypotheses.
    pub precedence: BTreeMap<(u64, u64), u8>,
}

pub fn derive_targets(a: &Assignment, gt: &GroundTruthPage, pool: &HypothesisPool) -> Result<Targets> {
    let mut matched: HashMap<u64, usize> = HashMap::new();
    for &(h, g) in &a.pairs {
        if pool.get(h).is_none() {
            return Err(HandoffError::InconsistentAssignment(format!("unknown hypothesis id {h}")));
        }
        let el = gt
            .get(g)
            .ok_or_else(|| HandoffError::InconsistentAssignment(format!("unknown ground-truth id {g}")))?;
        if matched.insert(h, el.order_rank).is_some() {
            return Err(HandoffError::InconsistentAssignment(format!("hypothesis {h} matched twice")));
        }
    }
    let mut gt_seen = std::collections::HashSet::new();
    if !a.pairs.iter().all(|p| gt_seen.insert(p.1)) {
        return Err(HandoffError::InconsistentAssignment("ground-truth element matched twice".into()));
    }

    let retention = pool.hypotheses.iter().map(|h| u8::from(matched.contains_key(&h.id))).collect();
    let mut precedence = BTreeMap::new();
    for (&i, &ri) in &matched {
        for (&j, &rj) in &matched {
            if i != j {
                precedence.insert((i, j), u8::from(ri < rj));
            }
        }
    }
    Ok(Targets { retention, precedence })
}
