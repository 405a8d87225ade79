//! Runs several strategies over a corpus and tabulates them against the
//! oracle interface. P/R/F1 are reported ×100, edit distance as a fraction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::Result;
use layout_handoff::metrics::{aggregate, evaluate_page, MetricsSummary, PageMetrics};
use layout_handoff::synth::{oracle_interface, Oracle};
use layout_handoff::{run_strategy, GroundTruthPage, HandoffConfig, HypothesisPool, Strategy};
use rayon::prelude::*;
use serde::Serialize;

use crate::CliError;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub pages: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reading_order_edit: f64,
    pub mean_instances: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDelta {
    /// Oracle F1 minus strategy F1.
    pub f1: f64,
    /// Strategy edit minus oracle edit.
    pub reading_order_edit: f64,
    /// Pages where the strategy scores above the oracle on F1 or below it on edit.
    pub pages_beating_oracle: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub summary: SummaryRow,
    pub delta_vs_oracle: Option<OracleDelta>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioBlock {
    pub scenario: String,
    pub oracle: Option<SummaryRow>,
    pub strategies: Vec<StrategyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    pub report_version: u32,
    pub iou_threshold: f64,
    pub pages: usize,
    pub oracle: Option<SummaryRow>,
    pub strategies: Vec<StrategyRow>,
    pub scenarios: Vec<ScenarioBlock>,
}

/// One corpus page ready for comparison.
#[derive(Debug, Clone)]
pub struct ComparePage {
    pub stem: String,
    pub pool: HypothesisPool,
    pub gt: GroundTruthPage,
    pub oracle: Option<Oracle>,
}

pub fn parse_strategies(list: &str) -> Result<Vec<Strategy>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if name == "all" {
            out.extend(Strategy::ALL);
            continue;
        }
        let s: Strategy = name.parse().map_err(|_| CliError::StrategyUnknown(name.to_string()))?;
        out.push(s);
    }
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("no strategies requested".into()).into());
    }
    Ok(out)
}

struct PageResult {
    scenario: String,
    per_strategy: Vec<(PageMetrics, usize)>,
    oracle: Option<PageMetrics>,
}

fn summarize(rows: &[(PageMetrics, usize)]) -> Result<SummaryRow> {
    let metrics: Vec<PageMetrics> = rows.iter().map(|r| r.0.clone()).collect();
    let s: MetricsSummary = aggregate(&metrics)?;
    let instances: usize = rows.iter().map(|r| r.1).sum();
    Ok(SummaryRow {
        pages: s.pages,
        precision: 100.0 * s.precision,
        recall: 100.0 * s.recall,
        f1: 100.0 * s.f1,
        reading_order_edit: s.reading_order_edit,
        mean_instances: instances as f64 / rows.len() as f64,
    })
}

fn block(results: &[&PageResult], strategies: &[Strategy]) -> Result<(Option<SummaryRow>, Vec<StrategyRow>)> {
    let oracle_pages: Option<Vec<(PageMetrics, usize)>> = results
        .iter()
        .map(|r| r.oracle.as_ref().map(|m| (m.clone(), m.num_pred)))
        .collect();
    let oracle = oracle_pages.as_deref().map(summarize).transpose()?;
    let mut rows = Vec::new();
    for (k, s) in strategies.iter().enumerate() {
        let pages: Vec<(PageMetrics, usize)> = results.iter().map(|r| r.per_strategy[k].clone()).collect();
        let summary = summarize(&pages)?;
        let delta_vs_oracle = oracle.as_ref().map(|o| OracleDelta {
            f1: o.f1 - summary.f1,
            reading_order_edit: summary.reading_order_edit - o.reading_order_edit,
            pages_beating_oracle: results
                .iter()
                .filter(|r| {
                    let (m, _) = &r.per_strategy[k];
                    let best = r.oracle.as_ref().expect("oracle present");
                    m.f1 > best.f1 || m.reading_order_edit < best.reading_order_edit
                })
                .count(),
        });
        rows.push(StrategyRow { strategy: s.name().to_string(), summary, delta_vs_oracle });
    }
    Ok((oracle, rows))
}

/// Evaluates every strategy on every page. Pages are processed in parallel
/// and reduced in input order.
pub fn compare(pages: &[ComparePage], strategies: &[Strategy], cfg: &HandoffConfig, iou_threshold: f64) -> Result<CompareReport> {
    if pages.is_empty() {
        anyhow::bail!(layout_handoff::HandoffError::EmptyInput("no pages to compare".into()));
    }
    let results: Vec<PageResult> = pages
        .par_iter()
        .map(|p| -> Result<PageResult> {
            let order = p.oracle.as_ref().map(Oracle::external_order);
            let mut per_strategy = Vec::with_capacity(strategies.len());
            for &s in strategies {
                let out = run_strategy(&p.pool, cfg, s, order.as_ref())
                    .map_err(|e| anyhow::anyhow!(e).context(format!("{}: strategy {s}", p.stem)))?;
                let n = out.interface.instances.len();
                per_strategy.push((evaluate_page(&out.interface, &p.gt, iou_threshold), n));
            }
            let oracle = p
                .oracle
                .as_ref()
                .map(|o| evaluate_page(&oracle_interface(&p.gt, &p.pool, o), &p.gt, iou_threshold));
            let scenario = p.oracle.as_ref().map_or_else(|| "unlabeled".to_string(), |o| o.scenario.to_string());
            Ok(PageResult { scenario, per_strategy, oracle })
        })
        .collect::<Result<_>>()?;

    let all: Vec<&PageResult> = results.iter().collect();
    let (oracle, rows) = block(&all, strategies)?;
    let mut by_scenario: BTreeMap<&str, Vec<&PageResult>> = BTreeMap::new();
    for r in &results {
        by_scenario.entry(r.scenario.as_str()).or_default().push(r);
    }
    let mut scenarios = Vec::new();
    for (name, group) in by_scenario {
        let (o, s) = block(&group, strategies)?;
        scenarios.push(ScenarioBlock { scenario: name.to_string(), oracle: o, strategies: s });
    }
    Ok(CompareReport { report_version: REPORT_VERSION, iou_threshold, pages: pages.len(), oracle, strategies: rows, scenarios })
}

fn table_rows(out: &mut String, oracle: Option<&SummaryRow>, rows: &[StrategyRow]) {
    let _ = writeln!(out, "{:<28} {:>7} {:>7} {:>7} {:>8} {:>7} {:>8}", "strategy", "P", "R", "F1", "edit", "dF1", "dedit");
    let line = |out: &mut String, name: &str, s: &SummaryRow, d: Option<&OracleDelta>| {
        let (df1, dedit) = d.map_or(("-".to_string(), "-".to_string()), |d| {
            (format!("{:.2}", d.f1), format!("{:.4}", d.reading_order_edit))
        });
        let _ = writeln!(
            out,
            "{:<28} {:>7.2} {:>7.2} {:>7.2} {:>8.4} {:>7} {:>8}",
            name, s.precision, s.recall, s.f1, s.reading_order_edit, df1, dedit
        );
    };
    for r in rows {
        line(out, &r.strategy, &r.summary, r.delta_vs_oracle.as_ref());
    }
    if let Some(o) = oracle {
        line(out, "oracle", o, None);
    }
}

/// Fixed-width plain-text rendering of a report.
pub fn render_table(report: &CompareReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "pages: {}  iou: {:.2}", report.pages, report.iou_threshold);
    table_rows(&mut out, report.oracle.as_ref(), &report.strategies);
    if report.scenarios.len() > 1 {
        for s in &report.scenarios {
            let _ = writeln!(out, "\n[{}]", s.scenario);
            table_rows(&mut out, s.oracle.as_ref(), &s.strategies);
        }
    }
    out
}
