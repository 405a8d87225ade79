mod oracles;

use layout_handoff::geometry::iou;
use layout_handoff::handoff::{final_score, handoff_learned, handoff_nms, run_strategy};
use layout_handoff::metrics::{aggregate, evaluate_page, PageMetrics};
use layout_handoff::model::{HandoffConfig, Strategy};
use layout_handoff::synth::{
    corrupt_to_pool, generate_corpus, generate_page, oracle_interface, CandidateKind, Scenario, ScenarioSpec,
    SyntheticPage,
};

fn run(page: &SyntheticPage, s: Strategy, cfg: &HandoffConfig) -> PageMetrics {
    let order = page.oracle.external_order();
    let out = run_strategy(&page.pool, cfg, s, Some(&order)).unwrap();
    evaluate_page(&out.interface, &page.gt, 0.5)
}

fn mean(pages: &[SyntheticPage], s: Strategy, cfg: &HandoffConfig) -> layout_handoff::MetricsSummary {
    aggregate(&pages.iter().map(|p| run(p, s, cfg)).collect::<Vec<_>>()).unwrap()
}

#[test]
fn oracle_bounds_every_strategy_on_every_page() {
    let cfg = HandoffConfig::default();
    for scenario in Scenario::ALL {
        let pages = generate_corpus(&ScenarioSpec::preset(scenario, 2024), 120).unwrap();
        for page in &pages {
            let best = evaluate_page(&oracle_interface(&page.gt, &page.pool, &page.oracle), &page.gt, 0.5);
            assert_eq!((best.f1, best.reading_order_edit), (1.0, 0.0), "{}", page.stem);
            for s in Strategy::ALL {
                let m = run(page, s, &cfg);
                assert!(m.f1 <= best.f1 && m.reading_order_edit >= best.reading_order_edit);
            }
        }
    }
}

#[test]
fn scenario_summaries() {
    let cfg = HandoffConfig::default();
    for scenario in Scenario::ALL {
        let pages = generate_corpus(&ScenarioSpec::preset(scenario, 5), 100).unwrap();
        for s in Strategy::ALL {
            let m = mean(&pages, s, &cfg);
            println!("{scenario:>20} {s:>26} P {:.4} R {:.4} F1 {:.4} edit {:.4}", m.precision, m.recall, m.f1, m.reading_order_edit);
        }
    }
}

#[test]
fn clean_scenario_ties_at_perfect_f1() {
    let pages = generate_corpus(&ScenarioSpec::preset(Scenario::Clean, 9), 50).unwrap();
    for s in Strategy::ALL {
        assert_eq!(mean(&pages, s, &HandoffConfig::default()).f1, 1.0, "{s}");
    }
}

#[test]
fn incomplete_survivor_defeats_hard_nms() {
    let cfg = HandoffConfig::default();
    let pages = generate_corpus(&ScenarioSpec::preset(Scenario::IncompleteSurvivor, 5), 100).unwrap();
    assert!(mean(&pages, Strategy::LearnedNmsFree, &cfg).f1 > mean(&pages, Strategy::Nms, &cfg).f1);
    let mut pairs = 0;
    for page in &pages {
        let kept = handoff_nms(&page.pool, &cfg).interface.ids();
        let best = oracle_interface(&page.gt, &page.pool, &page.oracle).ids();
        for e in &page.oracle.entries {
            match e.kind {
                CandidateKind::Truncated => {
                    assert!(kept.contains(&e.hypothesis_id));
                    assert!(!best.contains(&e.hypothesis_id));
                    pairs += 1;
                }
                CandidateKind::Complete => {
                    assert!(!kept.contains(&e.hypothesis_id));
                    assert!(best.contains(&e.hypothesis_id));
                }
                _ => {}
            }
        }
    }
    assert!(pairs >= 100);
}

#[test]
fn truncated_candidates_outscore_but_underlap() {
    let spec = ScenarioSpec::preset(Scenario::IncompleteSurvivor, 5);
    let gt = generate_page(&spec).unwrap();
    let (pool, oracle) = corrupt_to_pool(&gt, &spec).unwrap();
    for e in oracle.entries.iter().filter(|e| e.kind == CandidateKind::Truncated) {
        let el = gt.get(e.gt_id.unwrap()).unwrap();
        let t = pool.get(e.hypothesis_id).unwrap();
        let c = pool.get(el.id).unwrap();
        assert!(final_score(t) > final_score(c));
        assert!(iou(&t.bbox, &el.bbox) < iou(&c.bbox, &el.bbox));
    }
}

#[test]
fn duplicates_hurt_precision_without_suppression() {
    let cfg = HandoffConfig::default();
    let no_suppression = HandoffConfig { retention_threshold: 0.0, ..cfg.clone() };
    let dup = generate_corpus(&ScenarioSpec::preset(Scenario::Duplicates, 5), 100).unwrap();
    let clean = generate_corpus(&ScenarioSpec::preset(Scenario::Clean, 5), 100).unwrap();
    let learned = mean(&dup, Strategy::LearnedNmsFree, &cfg).precision;
    let raw = mean(&dup, Strategy::Raw, &cfg).precision;
    let open = mean(&dup, Strategy::LearnedNmsFree, &no_suppression).precision;
    assert!(learned > raw);
    assert_eq!(raw, open);
    assert!(open < mean(&clean, Strategy::LearnedNmsFree, &no_suppression).precision);
    assert!(mean(&dup, Strategy::DecoupledOrderAfterNms, &cfg).reading_order_edit >= mean(&dup, Strategy::LearnedNmsFree, &cfg).reading_order_edit);
}

#[test]
fn duplicates_have_tight_clusters_and_oracle_picks_one() {
    let pages = generate_corpus(&ScenarioSpec::preset(Scenario::Duplicates, 13), 10).unwrap();
    for page in &pages {
        let mut clustered = false;
        for el in &page.gt.elements {
            let own: Vec<_> = page.pool.hypotheses.iter().filter(|h| page.oracle.gt_for(h.id) == Some(el.id)).collect();
            if own.len() >= 2 && own.iter().enumerate().all(|(i, a)| own[i + 1..].iter().all(|b| iou(&a.bbox, &b.bbox) >= 0.7)) {
                clustered = true;
            }
        }
        assert!(clustered, "{}", page.stem);
        let iface = oracle_interface(&page.gt, &page.pool, &page.oracle);
        assert_eq!(iface.instances.len(), page.gt.elements.len());
    }
}

#[test]
fn random_mixed_ordering_ranks() {
    let cfg = HandoffConfig::default();
    let pages = generate_corpus(&ScenarioSpec::preset(Scenario::RandomMixed, 2026), 200).unwrap();
    let learned = mean(&pages, Strategy::LearnedNmsFree, &cfg).reading_order_edit;
    let decoupled = mean(&pages, Strategy::DecoupledOrderAfterNms, &cfg).reading_order_edit;
    let raw = mean(&pages, Strategy::Raw, &cfg).reading_order_edit;
    assert!(learned <= decoupled && decoupled <= raw, "{learned} {decoupled} {raw}");
}

#[test]
fn decoupled_order_diverges_from_learned_on_duplicates() {
    let cfg = HandoffConfig::default();
    let pages = generate_corpus(&ScenarioSpec::preset(Scenario::Duplicates, 5), 20).unwrap();
    let differs = pages.iter().any(|p| {
        let d = run_strategy(&p.pool, &cfg, Strategy::DecoupledOrderAfterNms, Some(&p.oracle.external_order())).unwrap();
        d.interface.ids() != handoff_learned(&p.pool, &cfg).interface.ids()
    });
    assert!(differs);
}
