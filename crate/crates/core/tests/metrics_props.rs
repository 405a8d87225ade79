mod oracles;

use layout_handoff::metrics::{aggregate, evaluate_page, layout_prf, levenshtein, normalized_edit, DEFAULT_IOU_THRESHOLD};
use layout_handoff::model::{GroundTruthPage, Instance, ParserInterface};
use layout_handoff::synth::{generate_corpus, oracle_interface, Scenario, ScenarioSpec};
use layout_handoff::HandoffError;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn perfect(gt: &GroundTruthPage) -> ParserInterface {
    let mut els: Vec<_> = gt.elements.iter().collect();
    els.sort_by_key(|e| e.order_rank);
    ParserInterface {
        page_id: gt.page_id.clone(),
        instances: els.iter().map(|e| Instance { hypothesis_id: e.id, bbox: e.bbox, class_id: e.class_id, score: 1.0 }).collect(),
    }
}

#[test]
fn edit_distance_matches_reference_and_strsim() {
    let mut r = oracles::rng(21);
    for _ in 0..500 {
        let la = r.random_range(0..12);
        let lb = r.random_range(0..12);
        let a: Vec<u8> = (0..la).map(|_| r.random_range(0..5)).collect();
        let b: Vec<u8> = (0..lb).map(|_| r.random_range(0..5)).collect();
        let d = levenshtein(&a, &b);
        assert_eq!(d, oracles::reference_edit(&a, &b));
        assert_eq!(d, strsim::generic_levenshtein(&a, &b));
    }
}

#[test]
fn edit_examples() {
    assert_eq!(normalized_edit(&['a', 'b'], &['b', 'a']), 1.0);
    assert!((normalized_edit(&['a', 'b', 'c'], &['a', 'c', 'b']) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(normalized_edit::<u8>(&[], &[]), 0.0);
}

#[test]
fn noise_free_corpora_are_perfect() {
    for scenario in Scenario::ALL {
        let spec = ScenarioSpec::preset(scenario, 31).noise_free();
        for page in generate_corpus(&spec, 25).unwrap() {
            let m = evaluate_page(&oracle_interface(&page.gt, &page.pool, &page.oracle), &page.gt, DEFAULT_IOU_THRESHOLD);
            assert_eq!((m.f1, m.reading_order_edit), (1.0, 0.0), "{}", page.stem);
            let m = evaluate_page(&perfect(&page.gt), &page.gt, DEFAULT_IOU_THRESHOLD);
            assert_eq!((m.f1, m.reading_order_edit), (1.0, 0.0));
        }
    }
}

#[test]
fn per_class_breakdown_matches_recount() {
    let spec = ScenarioSpec::preset(Scenario::RandomMixed, 11);
    let pages = generate_corpus(&spec, 30).unwrap();
    let cfg = layout_handoff::HandoffConfig::default();
    let metrics: Vec<_> = pages
        .iter()
        .map(|p| {
            let out = layout_handoff::handoff::handoff_nms(&p.pool, &cfg);
            (evaluate_page(&out.interface, &p.gt, 0.5), out.interface, p.gt.clone())
        })
        .collect();
    let summary = aggregate(&metrics.iter().map(|m| m.0.clone()).collect::<Vec<_>>()).unwrap();
    for cls in &summary.per_class {
        let (mut tp, mut pred, mut gt) = (0, 0, 0);
        for (m, iface, page) in &metrics {
            pred += iface.instances.iter().filter(|i| i.class_id == cls.class_id).count();
            gt += page.elements.iter().filter(|e| e.class_id == cls.class_id).count();
            tp += m.matched_pairs.iter().filter(|p| page.get(p.gt_id).unwrap().class_id == cls.class_id).count();
        }
        assert_eq!((cls.tp, cls.pred, cls.gt), (tp, pred, gt));
        let f1 = if pred + gt == 0 { 0.0 } else { 2.0 * tp as f64 / (pred + gt) as f64 };
        assert!((cls.f1 - f1).abs() < 1e-15);
    }
}

#[test]
fn aggregate_cases() {
    assert!(matches!(aggregate(&[]), Err(HandoffError::EmptyInput(_))));
    let mut r = oracles::rng(5);
    let gt = oracles::random_gt(&mut r, 4, 2);
    let good = evaluate_page(&perfect(&gt), &gt, 0.5);
    let bad = evaluate_page(&ParserInterface { page_id: gt.page_id.clone(), instances: vec![] }, &gt, 0.5);
    assert_eq!(bad.f1, 0.0);
    let single = aggregate(std::slice::from_ref(&good)).unwrap();
    assert_eq!((single.precision, single.recall, single.f1, single.reading_order_edit), (1.0, 1.0, 1.0, 0.0));
    assert_eq!(aggregate(&[good, bad]).unwrap().f1, 0.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn edit_is_a_bounded_symmetric_distance(a in prop::collection::vec(0u8..4, 0..10), b in prop::collection::vec(0u8..4, 0..10)) {
        let d = normalized_edit(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, normalized_edit(&b, &a));
        prop_assert_eq!(d == 0.0, a == b);
    }

    #[test]
    fn prf_ignores_prediction_order(seed in any::<u64>()) {
        let spec = ScenarioSpec::preset(Scenario::RandomMixed, seed);
        let page = &generate_corpus(&spec, 1).unwrap()[0];
        let iface = layout_handoff::handoff::handoff_raw(&page.pool).interface;
        let mut shuffled = iface.clone();
        shuffled.instances.shuffle(&mut oracles::rng(seed));
        let (a, b) = (layout_prf(&iface, &page.gt, 0.5), layout_prf(&shuffled, &page.gt, 0.5));
        prop_assert_eq!((a.precision, a.recall, a.f1), (b.precision, b.recall, b.f1));
        prop_assert_eq!(a.class_counts, b.class_counts);
    }

    #[test]
    fn adding_a_correct_prediction_never_lowers_f1(seed in any::<u64>()) {
        let spec = ScenarioSpec::preset(Scenario::RandomMixed, seed);
        let page = &generate_corpus(&spec, 1).unwrap()[0];
        let iface = layout_handoff::handoff::handoff_nms(&page.pool, &Default::default()).interface;
        let before = layout_prf(&iface, &page.gt, 0.5);
        let matched: Vec<u64> = before.matched_pairs.iter().map(|p| p.gt_id).collect();
        if let Some(missing) = page.gt.elements.iter().find(|e| !matched.contains(&e.id)) {
            let mut more = iface.clone();
            more.instances.push(Instance { hypothesis_id: 1_000_000, bbox: missing.bbox, class_id: missing.class_id, score: 1.0 });
            let after = layout_prf(&more, &page.gt, 0.5);
            prop_assert!(after.f1 >= before.f1);
            prop_assert_eq!(after.matched_pairs.len(), before.matched_pairs.len() + 1);
        }
    }

    #[test]
    fn metrics_stay_in_range(seed in any::<u64>()) {
        let spec = ScenarioSpec::preset(Scenario::DenseGrid, seed);
        let page = &generate_corpus(&spec, 1).unwrap()[0];
        let m = evaluate_page(&layout_handoff::handoff::handoff_raw(&page.pool).interface, &page.gt, 0.5);
        for v in [m.precision, m.recall, m.f1, m.reading_order_edit] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }
}
