//! Deterministic SVG overlays: ground-truth outlines, class-colored
//! translucent instances labeled with their score, dashed outlines for
//! suppressed hypotheses and arrows along the reading order.

use std::fmt::Write as _;

use layout_handoff::handoff::RetentionDecision;
use layout_handoff::{BBox, GroundTruthPage, HypothesisPool, ParserInterface};

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

pub const DEFAULT_WIDTH: u32 = 1000;
pub const DEFAULT_HEIGHT: u32 = 1414;

pub struct Scene<'a> {
    pub width: u32,
    pub height: u32,
    pub title: &'a str,
    pub gt: Option<&'a GroundTruthPage>,
    pub interface: Option<&'a ParserInterface>,
    /// Hypotheses that were not handed off, drawn dashed.
    pub suppressed: Vec<BBox>,
}

impl<'a> Scene<'a> {
    pub fn from_interface(iface: &'a ParserInterface, gt: Option<&'a GroundTruthPage>) -> Self {
        Self { width: DEFAULT_WIDTH, height: DEFAULT_HEIGHT, title: &iface.page_id, gt, interface: Some(iface), suppressed: Vec::new() }
    }

    pub fn from_handoff(
        pool: &'a HypothesisPool,
        iface: &'a ParserInterface,
        decisions: &[RetentionDecision],
        gt: Option<&'a GroundTruthPage>,
    ) -> Self {
        let suppressed = pool
            .hypotheses
            .iter()
            .zip(decisions)
            .filter(|(_, d)| !d.retained)
            .map(|(h, _)| h.bbox)
            .collect();
        Self { width: pool.page_width, height: pool.page_height, title: &pool.page_id, gt, interface: Some(iface), suppressed }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn px(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub fn render_svg(scene: &Scene<'_>) -> String {
    let (w, h) = (f64::from(scene.width), f64::from(scene.height));
    let rect = |b: &BBox| (px(b.x1 * w), px(b.y1 * h), px((b.x2 - b.x1).max(0.0) * w), px((b.y2 - b.y1).max(0.0) * h));
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">",
        scene.width, scene.height
    );
    let _ = writeln!(out, "<title>{}</title>", escape(scene.title));
    out.push_str(
        "<defs><marker id=\"head\" viewBox=\"0 0 10 10\" refX=\"9\" refY=\"5\" markerWidth=\"6\" markerHeight=\"6\" orient=\"auto\">\
         <path d=\"M0,0 L10,5 L0,10 z\" fill=\"#333333\"/></marker></defs>\n",
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n");

    if let Some(gt) = scene.gt {
        out.push_str("<g class=\"gt\" fill=\"none\" stroke=\"#000000\" stroke-width=\"2\">\n");
        let mut els: Vec<_> = gt.elements.iter().collect();
        els.sort_by_key(|e| e.order_rank);
        for e in els {
            let (x, y, rw, rh) = rect(&e.bbox);
            let _ = writeln!(out, "<rect class=\"gt-box\" x=\"{x}\" y=\"{y}\" width=\"{rw}\" height=\"{rh}\"/>");
        }
        out.push_str("</g>\n");
    }

    if !scene.suppressed.is_empty() {
        out.push_str("<g class=\"suppressed\" fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"4 3\">\n");
        for b in &scene.suppressed {
            let (x, y, rw, rh) = rect(b);
            let _ = writeln!(out, "<rect x=\"{x}\" y=\"{y}\" width=\"{rw}\" height=\"{rh}\"/>");
        }
        out.push_str("</g>\n");
    }

    if let Some(iface) = scene.interface {
        out.push_str("<g class=\"instances\" font-family=\"monospace\" font-size=\"12\">\n");
        for inst in &iface.instances {
            let color = PALETTE[inst.class_id % PALETTE.len()];
            let (x, y, rw, rh) = rect(&inst.bbox);
            let _ = writeln!(
                out,
                "<rect class=\"instance\" x=\"{x}\" y=\"{y}\" width=\"{rw}\" height=\"{rh}\" fill=\"{color}\" fill-opacity=\"0.3\" stroke=\"{color}\"/>"
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\">s={:.2} #{}</text>",
                px(inst.bbox.x1 * w + 3.0),
                px(inst.bbox.y1 * h + 13.0),
                inst.score,
                inst.hypothesis_id
            );
        }
        out.push_str("</g>\n<g class=\"order\" stroke=\"#333333\" stroke-width=\"1.5\">\n");
        let center = |b: &BBox| (px((b.x1 + b.x2) * 0.5 * w), px((b.y1 + b.y2) * 0.5 * h));
        for pair in iface.instances.windows(2) {
            let (x1, y1) = center(&pair[0].bbox);
            let (x2, y2) = center(&pair[1].bbox);
            let _ = writeln!(
                out,
                "<line class=\"arrow\" x1=\"{x1}\" y1=\"{y1}\" x2=\"{x2}\" y2=\"{y2}\" marker-end=\"url(#head)\"/>"
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>");
    out
}
