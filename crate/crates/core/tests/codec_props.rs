use layout_handoff::codec::{
    parse_ground_truth, parse_interface, parse_pool, parse_pool_with_warnings, serialize_ground_truth, serialize_interface,
    serialize_pool,
};
use layout_handoff::handoff::handoff_learned;
use layout_handoff::model::{BBox, Hypothesis, HypothesisPool};
use layout_handoff::synth::{generate_corpus, parse_oracle, serialize_oracle, Scenario, ScenarioSpec};
use proptest::prelude::*;

fn q(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn quantized_hypothesis(id: u64, c: usize) -> impl Strategy<Value = Hypothesis> {
    (0.0..0.5f64, 0.0..0.5f64, 0.01..0.5f64, 0.01..0.5f64, prop::collection::vec(0.0..=1.0f64, c), 0.0..=1.0f64, -50.0..50.0f64)
        .prop_map(move |(x, y, w, h, probs, r, o)| Hypothesis {
            id,
            bbox: BBox::new(q(x), q(y), q(x + w), q(y + h)),
            class_probs: probs.into_iter().map(q).collect(),
            retention_prob: q(r),
            order_score: q(o),
        })
}

fn quantized_pool() -> impl Strategy<Value = HypothesisPool> {
    (1usize..5, 0usize..8).prop_flat_map(|(c, n)| {
        let hyps: Vec<_> = (0..n as u64).map(|id| quantized_hypothesis(id * 3, c)).collect();
        (Just(c), hyps, "[a-z0-9_\\-\"\\\\ ]{0,12}").prop_map(|(c, hypotheses, page_id)| HypothesisPool {
            page_id,
            page_width: 640,
            page_height: 480,
            num_classes: c,
            hypotheses,
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn pool_round_trips(pool in quantized_pool()) {
        let bytes = serialize_pool(&pool);
        let back = parse_pool(&bytes).unwrap();
        prop_assert_eq!(&back, &pool);
        prop_assert_eq!(serialize_pool(&back), bytes);
    }

    #[test]
    fn serialization_is_a_fixed_point(seed in any::<u64>()) {
        let page = &generate_corpus(&ScenarioSpec::preset(Scenario::RandomMixed, seed), 1).unwrap()[0];
        let once = serialize_pool(&page.pool);
        prop_assert_eq!(serialize_pool(&parse_pool(&once).unwrap()), once);
        let gt = serialize_ground_truth(&page.gt);
        prop_assert_eq!(serialize_ground_truth(&parse_ground_truth(&gt).unwrap()), gt);
        let iface = serialize_interface(&handoff_learned(&page.pool, &Default::default()).interface);
        prop_assert_eq!(serialize_interface(&parse_interface(&iface).unwrap()), iface);
        let oracle = serialize_oracle(&page.oracle);
        prop_assert_eq!(serialize_oracle(&parse_oracle(&oracle).unwrap()), oracle);
    }
}

#[test]
fn inverted_boxes_are_repaired_with_a_warning() {
    let raw = br#"{"page_id":"p","page_width":10,"page_height":10,"num_classes":1,
        "hypotheses":[{"id":4,"box":[0.6,0.2,0.1,0.5],"class_probs":[0.5],"retention_prob":0.5,"order_score":0}]}"#;
    let parsed = parse_pool_with_warnings(raw).unwrap();
    assert_eq!(parsed.value.hypotheses[0].bbox, BBox::new(0.1, 0.2, 0.6, 0.5));
    assert_eq!(parsed.warnings.len(), 1);
}

#[test]
fn schema_and_validation_errors_are_distinct() {
    use layout_handoff::HandoffError;
    let missing = br#"{"page_id":"p","page_width":10,"page_height":10,"hypotheses":[]}"#;
    assert!(matches!(parse_pool(missing), Err(HandoffError::Schema(_))));
    let bad_prob = br#"{"page_id":"p","page_width":10,"page_height":10,"num_classes":1,
        "hypotheses":[{"id":1,"box":[0.1,0.1,0.2,0.2],"class_probs":[1.5],"retention_prob":0.5,"order_score":0}]}"#;
    assert!(matches!(parse_pool(bad_prob), Err(HandoffError::Validation(_))));
    let dup = br#"{"page_id":"p","page_width":10,"page_height":10,"num_classes":1,
        "hypotheses":[{"id":1,"box":[0.1,0.1,0.2,0.2],"class_probs":[0.5],"retention_prob":0.5,"order_score":0},
                      {"id":1,"box":[0.1,0.1,0.2,0.2],"class_probs":[0.5],"retention_prob":0.5,"order_score":0}]}"#;
    assert!(matches!(parse_pool(dup), Err(HandoffError::Validation(_))));
}
