//! JSON ingest and canonical serialization.
//!
//! Parsing goes through serde into wire structs, then validation. Output is
//! written by hand so key order and float formatting are fixed: keys appear in
//! schema order and every float is rendered with exactly six decimals. The
//! same value therefore always produces the same bytes.

use std::fmt::Write as _;

use serde::Deserialize;

use crate::error::{HandoffError, Result};
use crate::model::{BBox, GroundTruthElement, GroundTruthPage, Hypothesis, HypothesisPool, Instance, ParserInterface};

/// Something repaired during ingest.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestWarning {
    pub id: u64,
    pub kind: RepairKind,
    pub original: [f64; 4],
    pub repaired: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairKind {
    CornerSwap,
    Clamped,
}

#[derive(Debug)]
pub struct Parsed<T> {
    pub value: T,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePool {
    page_id: String,
    page_width: u32,
    page_height: u32,
    num_classes: usize,
    hypotheses: Vec<WireHypothesis>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireHypothesis {
    id: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class_probs: Vec<f64>,
    retention_prob: f64,
    order_score: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireGroundTruth {
    page_id: String,
    num_classes: usize,
    elements: Vec<WireElement>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireElement {
    id: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class_id: usize,
    order_rank: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireInterface {
    page_id: String,
    instances: Vec<WireInstance>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireInstance {
    hypothesis_id: u64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class_id: usize,
    score: f64,
}

fn ingest_box(id: u64, raw: [f64; 4], warnings: &mut Vec<IngestWarning>) -> Result<BBox> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(HandoffError::validation(format!("id {id}: box has non-finite coordinate")));
    }
    let (repaired, swapped) = BBox::from_array(raw).normalized();
    let clamped = raw.iter().any(|v| !(0.0..=1.0).contains(v));
    if swapped || clamped {
        let kind = if swapped { RepairKind::CornerSwap } else { RepairKind::Clamped };
        warnings.push(IngestWarning { id, kind, original: raw, repaired: repaired.to_array() });
    }
    Ok(repaired)
}

fn utf8(raw: &[u8]) -> Result<&str> {
    std::str::from_utf8(raw).map_err(|e| HandoffError::Schema(format!("input is not UTF-8: {e}")))
}

/// Parses and validates a hypothesis pool, reporting every box repair.
pub fn parse_pool_with_warnings(raw: &[u8]) -> Result<Parsed<HypothesisPool>> {
    let wire: WirePool = serde_json::from_str(utf8(raw)?)?;
    let mut warnings = Vec::new();
    let mut hypotheses = Vec::with_capacity(wire.hypotheses.len());
    for h in wire.hypotheses {
        let bbox = ingest_box(h.id, h.bbox, &mut warnings)?;
        hypotheses.push(Hypothesis {
            id: h.id,
            bbox,
            class_probs: h.class_probs,
            retention_prob: h.retention_prob,
            order_score: h.order_score,
        });
    }
    let pool = HypothesisPool {
        page_id: wire.page_id,
        page_width: wire.page_width,
        page_height: wire.page_height,
        num_classes: wire.num_classes,
        hypotheses,
    };
    pool.validate()?;
    Ok(Parsed { value: pool, warnings })
}

/// Parses a pool; repairs are logged at warn level.
pub fn parse_pool(raw: &[u8]) -> Result<HypothesisPool> {
    let parsed = parse_pool_with_warnings(raw)?;
    log_warnings(&parsed.value.page_id, &parsed.warnings);
    Ok(parsed.value)
}

pub fn parse_ground_truth(raw: &[u8]) -> Result<GroundTruthPage> {
    let wire: WireGroundTruth = serde_json::from_str(utf8(raw)?)?;
    let mut warnings = Vec::new();
    let mut elements = Vec::with_capacity(wire.elements.len());
    for e in wire.elements {
        let bbox = ingest_box(e.id, e.bbox, &mut warnings)?;
        elements.push(GroundTruthElement { id: e.id, bbox, class_id: e.class_id, order_rank: e.order_rank });
    }
    log_warnings(&wire.page_id, &warnings);
    let page = GroundTruthPage { page_id: wire.page_id, num_classes: wire.num_classes, elements };
    page.validate()?;
    Ok(page)
}

pub fn parse_interface(raw: &[u8]) -> Result<ParserInterface> {
    let wire: WireInterface = serde_json::from_str(utf8(raw)?)?;
    let mut warnings = Vec::new();
    let mut instances = Vec::with_capacity(wire.instances.len());
    for inst in wire.instances {
        let bbox = ingest_box(inst.hypothesis_id, inst.bbox, &mut warnings)?;
        if !inst.score.is_finite() {
            return Err(HandoffError::validation(format!(
                "instance {}: non-finite score",
                inst.hypothesis_id
            )));
        }
        instances.push(Instance { hypothesis_id: inst.hypothesis_id, bbox, class_id: inst.class_id, score: inst.score });
    }
    log_warnings(&wire.page_id, &warnings);
    let iface = ParserInterface { page_id: wire.page_id, instances };
    iface.validate()?;
    Ok(iface)
}

fn log_warnings(page_id: &str, warnings: &[IngestWarning]) {
    for w in warnings {
        log::warn!(
            "{page_id}: id {} box {:?} repaired to {:?} ({:?})",
            w.id,
            w.original,
            w.repaired,
            w.kind
        );
    }
}

/// Six-decimal float rendering; negative zero prints as zero.
pub fn fmt_float(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

/// JSON string literal with escaping.
pub fn fmt_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serialization cannot fail")
}

pub fn fmt_box(b: &BBox) -> String {
    format!("[{},{},{},{}]", fmt_float(b.x1), fmt_float(b.y1), fmt_float(b.x2), fmt_float(b.y2))
}

pub fn fmt_floats(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|&v| fmt_float(v)).collect();
    format!("[{}]", parts.join(","))
}

pub fn serialize_interface(iface: &ParserInterface) -> Vec<u8> {
    let mut out = String::new();
    write!(out, "{{\"page_id\":{},\"instances\":[", fmt_str(&iface.page_id)).unwrap();
    for (k, inst) in iface.instances.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(
            out,
            "{{\"hypothesis_id\":{},\"box\":{},\"class_id\":{},\"score\":{}}}",
            inst.hypothesis_id,
            fmt_box(&inst.bbox),
            inst.class_id,
            fmt_float(inst.score)
        )
        .unwrap();
    }
    out.push_str("]}");
    out.into_bytes()
}

pub fn serialize_pool(pool: &HypothesisPool) -> Vec<u8> {
    let mut out = String::new();
    write!(
        out,
        "{{\"page_id\":{},\"page_width\":{},\"page_height\":{},\"num_classes\":{},\"hypotheses\":[",
        fmt_str(&pool.page_id),
        pool.page_width,
        pool.page_height,
        pool.num_classes
    )
    .unwrap();
    for (k, h) in pool.hypotheses.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(
            out,
            "{{\"id\":{},\"box\":{},\"class_probs\":{},\"retention_prob\":{},\"order_score\":{}}}",
            h.id,
            fmt_box(&h.bbox),
            fmt_floats(&h.class_probs),
            fmt_float(h.retention_prob),
            fmt_float(h.order_score)
        )
        .unwrap();
    }
    out.push_str("]}");
    out.into_bytes()
}

pub fn serialize_ground_truth(gt: &GroundTruthPage) -> Vec<u8> {
    let mut out = String::new();
    write!(out, "{{\"page_id\":{},\"num_classes\":{},\"elements\":[", fmt_str(&gt.page_id), gt.num_classes).unwrap();
    for (k, e) in gt.elements.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(
            out,
            "{{\"id\":{},\"box\":{},\"class_id\":{},\"order_rank\":{}}}",
            e.id,
            fmt_box(&e.bbox),
            e.class_id,
            e.order_rank
        )
        .unwrap();
    }
    out.push_str("]}");
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    const POOL: &str = r#"{"page_id":"p1","page_width":800,"page_height":1000,"num_classes":3,
        "hypotheses":[
          {"id":4,"box":[0.1,0.1,0.5,0.2],"class_probs":[0.9,0.05,0.0],"retention_prob":0.8,"order_score":1.5},
          {"id":9,"box":[0.1,0.3,0.5,0.6],"class_probs":[0.1,0.2,0.7],"retention_prob":0.4,"order_score":0.5}
        ]}"#;

    #[test]
    fn parses_well_formed_pool() {
        let pool = parse_pool(POOL.as_bytes()).unwrap();
        assert_eq!(pool.len(), 2);
        assert_eq!(pool.num_classes, 3);
        assert_eq!(pool.hypotheses[1].id, 9);
        assert_eq!(pool.hypotheses[0].bbox, BBox::new(0.1, 0.1, 0.5, 0.2));
    }

    #[test]
    fn class_prob_length_mismatch_is_validation_error() {
        let raw = POOL.replace("[0.9,0.05,0.0]", "[0.9,0.05]");
        let err = parse_pool(raw.as_bytes()).unwrap_err();
        assert!(matches!(err, HandoffError::Validation(_)), "{err}");
    }

    #[test]
    fn missing_field_is_schema_error() {
        let raw = POOL.replace("\"retention_prob\":0.8,", "");
        assert!(matches!(parse_pool(raw.as_bytes()), Err(HandoffError::Schema(_))));
        let raw = POOL.replace("\"page_width\":800", "\"page_width\":\"wide\"");
        assert!(matches!(parse_pool(raw.as_bytes()), Err(HandoffError::Schema(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let raw = POOL.replace("\"id\":9", "\"id\":4");
        assert!(matches!(parse_pool(raw.as_bytes()), Err(HandoffError::Validation(_))));
    }

    #[test]
    fn inverted_corners_repaired_with_warning() {
        let raw = POOL.replace("[0.1,0.1,0.5,0.2]", "[0.4,0.2,0.1,0.3]");
        let parsed = parse_pool_with_warnings(raw.as_bytes()).unwrap();
        assert_eq!(parsed.value.hypotheses[0].bbox, BBox::new(0.1, 0.2, 0.4, 0.3));
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.warnings[0].kind, RepairKind::CornerSwap);
        assert_eq!(parsed.warnings[0].id, 4);
    }

    #[test]
    fn out_of_range_coordinates_clamped() {
        let raw = POOL.replace("[0.1,0.1,0.5,0.2]", "[-0.2,0.1,1.3,0.2]");
        let parsed = parse_pool_with_warnings(raw.as_bytes()).unwrap();
        assert_eq!(parsed.value.hypotheses[0].bbox, BBox::new(0.0, 0.1, 1.0, 0.2));
        assert_eq!(parsed.warnings[0].kind, RepairKind::Clamped);
    }

    #[test]
    fn probability_out_of_range_rejected() {
        let raw = POOL.replace("\"retention_prob\":0.8", "\"retention_prob\":1.2");
        assert!(matches!(parse_pool(raw.as_bytes()), Err(HandoffError::Validation(_))));
    }

    #[test]
    fn empty_interface_serialization() {
        let iface = ParserInterface { page_id: "doc-1".into(), instances: vec![] };
        assert_eq!(serialize_interface(&iface), br#"{"page_id":"doc-1","instances":[]}"#.to_vec());
    }

    #[test]
    fn interface_serialization_is_fixed_point() {
        let inst = |id: u64, y: f64| Instance {
            hypothesis_id: id,
            bbox: BBox::new(0.1, y, 0.9, y + 0.1),
            class_id: (id % 2) as usize,
            score: 1.0 / 3.0,
        };
        let iface = ParserInterface { page_id: "p\"q".into(), instances: vec![inst(7, 0.1), inst(2, 0.3), inst(5, 0.5)] };
        let first = serialize_interface(&iface);
        let reparsed = parse_interface(&first).unwrap();
        assert_eq!(reparsed.ids(), vec![7, 2, 5]);
        assert_eq!(serialize_interface(&reparsed), first);
        let text = String::from_utf8(first).unwrap();
        assert!(text.contains("\"score\":0.333333"));
        assert!(text.find("\"hypothesis_id\":7").unwrap() < text.find("\"hypothesis_id\":2").unwrap());
    }

    #[test]
    fn interface_with_duplicate_ids_rejected() {
        let raw = r#"{"page_id":"x","instances":[
            {"hypothesis_id":1,"box":[0,0,1,1],"class_id":0,"score":0.5},
            {"hypothesis_id":1,"box":[0,0,1,1],"class_id":0,"score":0.5}]}"#;
        assert!(parse_interface(raw.as_bytes()).is_err());
    }

    #[test]
    fn negative_zero_is_normalized() {
        assert_eq!(fmt_float(-0.0), "0.000000");
        assert_eq!(fmt_float(-1e-9), "0.000000");
        assert_eq!(fmt_float(-0.5), "-0.500000");
    }

    #[test]
    fn ground_truth_round_trip() {
        let raw = r#"{"page_id":"g","num_classes":2,"elements":[
            {"id":0,"box":[0.1,0.1,0.4,0.2],"class_id":1,"order_rank":1},
            {"id":1,"box":[0.1,0.3,0.4,0.5],"class_id":0,"order_rank":0}]}"#;
        let gt = parse_ground_truth(raw.as_bytes()).unwrap();
        let bytes = serialize_ground_truth(&gt);
        assert_eq!(parse_ground_truth(&bytes).unwrap(), gt);
        let bad = raw.replace("\"class_id\":1", "\"class_id\":2");
        assert!(parse_ground_truth(bad.as_bytes()).is_err());
    }
}
