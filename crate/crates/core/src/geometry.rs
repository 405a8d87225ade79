//! Box arithmetic: IoU, GIoU (with its gradient), centers and the
//! spanned-rectangle count used by the ordering difficulty weight.

use crate::model::{BBox, GroundTruthElement};

/// Denominator guard; nothing else in this module is fudged.
const DENOM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomReport {
    pub iou: f64,
    pub giou: f64,
    pub intersection_area: f64,
    pub union_area: f64,
    pub enclosure_area: f64,
}

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    w * h
}

pub fn enclosure(a: &BBox, b: &BBox) -> BBox {
    BBox::new(a.x1.min(b.x1), a.y1.min(b.y1), a.x2.max(b.x2), a.y2.max(b.y2))
}

pub fn box_geometry(a: &BBox, b: &BBox) -> GeomReport {
    let degenerate = a.is_degenerate() || b.is_degenerate();
    let inter = if degenerate { 0.0 } else { intersection_area(a, b) };
    let union = a.area() + b.area() - inter;
    let enc = enclosure(a, b).area();
    let iou = if degenerate || union <= DENOM_EPS { 0.0 } else { inter / union };
    let giou = if enc > DENOM_EPS { iou - (enc - union) / enc } else { iou };
    GeomReport { iou, giou, intersection_area: inter, union_area: union, enclosure_area: enc }
}

/// Intersection over union; zero when either box has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    box_geometry(a, b).iou
}

pub fn giou(a: &BBox, b: &BBox) -> f64 {
    box_geometry(a, b).giou
}

/// Gradient of `giou(a, b)` with respect to the four coordinates of `a`.
///
/// Max/min selections are frozen at their current branch; on exact ties the
/// branch that keeps `a` selected is used.
pub fn giou_grad(a: &BBox, b: &BBox) -> (f64, [f64; 4]) {
    let rep = box_geometry(a, b);
    if a.is_degenerate() || b.is_degenerate() || rep.union_area <= DENOM_EPS {
        return (rep.giou, [0.0; 4]);
    }

    let aw = a.x2 - a.x1;
    let ah = a.y2 - a.y1;
    let d_area = [-ah, -aw, ah, aw];

    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    let mut d_inter = [0.0; 4];
    if iw > 0.0 && ih > 0.0 {
        // d(iw)/d coordinate, only when `a` supplies the binding edge.
        let diw_x1 = if a.x1 >= b.x1 { -1.0 } else { 0.0 };
        let diw_x2 = if a.x2 <= b.x2 { 1.0 } else { 0.0 };
        let dih_y1 = if a.y1 >= b.y1 { -1.0 } else { 0.0 };
        let dih_y2 = if a.y2 <= b.y2 { 1.0 } else { 0.0 };
        d_inter = [diw_x1 * ih, dih_y1 * iw, diw_x2 * ih, dih_y2 * iw];
    }

    let ew = a.x2.max(b.x2) - a.x1.min(b.x1);
    let eh = a.y2.max(b.y2) - a.y1.min(b.y1);
    let dew_x1 = if a.x1 <= b.x1 { -1.0 } else { 0.0 };
    let dew_x2 = if a.x2 >= b.x2 { 1.0 } else { 0.0 };
    let deh_y1 = if a.y1 <= b.y1 { -1.0 } else { 0.0 };
    let deh_y2 = if a.y2 >= b.y2 { 1.0 } else { 0.0 };
    let d_enc = [dew_x1 * eh, deh_y1 * ew, dew_x2 * eh, deh_y2 * ew];

    let inter = rep.intersection_area;
    let union = rep.union_area;
    let enc = rep.enclosure_area;
    // giou = I/U - 1 + U/E
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        let d_iou = d_inter[k] / union - inter * d_union / (union * union);
        let d_tail = if enc > DENOM_EPS { d_union / enc - union * d_enc[k] / (enc * enc) } else { 0.0 };
        grad[k] = d_iou + d_tail;
    }
    (rep.giou, grad)
}

pub fn center(b: &BBox) -> (f64, f64) {
    ((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0)
}

/// Whether `p` lies in the closed rectangle with opposite corners `c1`, `c2`.
pub fn in_spanned_rect(p: (f64, f64), c1: (f64, f64), c2: (f64, f64)) -> bool {
    let (lo_x, hi_x) = (c1.0.min(c2.0), c1.0.max(c2.0));
    let (lo_y, hi_y) = (c1.1.min(c2.1), c1.1.max(c2.1));
    (lo_x..=hi_x).contains(&p.0) && (lo_y..=hi_y).contains(&p.1)
}

/// Number of `others` whose centers fall inside (boundary included) the
/// rectangle spanned by the centers of `i` and `j`.
pub fn n_mid(i: &GroundTruthElement, j: &GroundTruthElement, others: &[GroundTruthElement]) -> usize {
    let ci = center(&i.bbox);
    let cj = center(&j.bbox);
    others
        .iter()
        .filter(|o| o.id != i.id && o.id != j.id)
        .filter(|o| in_spanned_rect(center(&o.bbox), ci, cj))
        .count()
}
