use std::path::Path;

use anyhow::{Context, Result};
use layout_handoff::codec::{serialize_ground_truth, serialize_interface, serialize_pool};
use layout_handoff::gradcheck::{check_term_gradients, GradCheckReport, Term};
use layout_handoff::handoff::serialize_decisions;
use layout_handoff::matching::assign;
use layout_handoff::metrics::{aggregate, evaluate_page, MetricsSummary, PageMetrics};
use layout_handoff::objectives::{loss_with_assignment, LossReport};
use layout_handoff::synth::{generate_corpus_page, serialize_oracle, Scenario, ScenarioSpec};
use layout_handoff::{run_strategy, HandoffConfig, HandoffOutput, HypothesisPool, Strategy};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{Cli, Command, CompareArgs, EvalArgs, HandoffArgs, LossArgs, RenderArgs, SynthArgs};
use crate::compare::{compare, parse_strategies, render_table, ComparePage};
use crate::config::load_config;
use crate::files::{
    discover_pages, load_gt, load_interface, load_oracle, load_order, load_pool, pair_predictions, write_output, GT_SUFFIX,
    ORACLE_SUFFIX, POOL_SUFFIX,
};
use crate::render::{render_svg, Scene};
use crate::CliError;

/// Gradient agreement required for `loss --check-gradients` to pass.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Runs the parsed command, inside a dedicated thread pool when `--jobs` is set.
pub fn execute(cli: Cli) -> Result<()> {
    match cli.jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().context("building thread pool")?;
            pool.install(|| run(cli))
        }
        None => run(cli),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Handoff(a) => cmd_handoff(&a, &cfg, cli.quiet),
        Command::Eval(a) => cmd_eval(&a),
        Command::Loss(a) => cmd_loss(&a, &cfg),
        Command::Compare(a) => cmd_compare(&a, &cfg, cli.quiet),
        Command::Render(a) => cmd_render(&a, &cfg),
    }
}

fn strategy_arg(name: Option<&str>, cfg: &HandoffConfig) -> Result<Strategy> {
    match name {
        None => Ok(cfg.strategy),
        Some(n) => n.parse().map_err(|_| CliError::StrategyUnknown(n.to_string()).into()),
    }
}

fn json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    serde_json::to_vec_pretty(value).context("serializing report")
}

pub fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let scenario: Scenario = a.scenario.parse()?;
    let mut spec = ScenarioSpec::preset(scenario, a.seed);
    if let Some(n) = a.elements {
        spec.elements_per_page = n;
    }
    spec.validate()?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    (0..a.pages as u64).into_par_iter().try_for_each(|k| -> Result<()> {
        let page = generate_corpus_page(&spec, k)?;
        let base = |suffix: &str| a.out_dir.join(format!("{}{suffix}", page.stem));
        write_output(Some(&base(POOL_SUFFIX)), &serialize_pool(&page.pool))?;
        write_output(Some(&base(GT_SUFFIX)), &serialize_ground_truth(&page.gt))?;
        write_output(Some(&base(ORACLE_SUFFIX)), &serialize_oracle(&page.oracle))
    })?;
    log::info!("wrote {} {} pages to {}", a.pages, scenario, a.out_dir.display());
    Ok(())
}

fn handoff_with(
    pool: &HypothesisPool,
    cfg: &HandoffConfig,
    strategy: Strategy,
    order: Option<&Path>,
) -> Result<HandoffOutput> {
    let order = order.map(load_order).transpose()?;
    Ok(run_strategy(pool, cfg, strategy, order.as_ref())?)
}

pub fn cmd_handoff(a: &HandoffArgs, cfg: &HandoffConfig, quiet: bool) -> Result<()> {
    let pool = load_pool(&a.pool)?;
    let strategy = strategy_arg(a.strategy.as_deref(), cfg)?;
    let out = handoff_with(&pool, cfg, strategy, a.order.as_deref())?;
    write_output(a.out.as_deref(), &serialize_interface(&out.interface))?;
    if let Some(path) = &a.decisions {
        write_output(Some(path), &serialize_decisions(&pool.page_id, strategy, &out.decisions))?;
    }
    if let Some(gt_path) = &a.gt {
        let gt = load_gt(gt_path)?;
        let m = evaluate_page(&out.interface, &gt, layout_handoff::metrics::DEFAULT_IOU_THRESHOLD);
        if !quiet {
            eprintln!(
                "{}: P {:.2} R {:.2} F1 {:.2} edit {:.4}",
                pool.page_id,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1,
                m.reading_order_edit
            );
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct PageRow {
    pub stem: String,
    pub page_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reading_order_edit: f64,
    pub num_pred: usize,
    pub num_gt: usize,
    pub num_matched: usize,
}

#[derive(Debug, Serialize)]
pub struct ClassRow {
    pub class_id: usize,
    pub tp: usize,
    pub pred: usize,
    pub gt: usize,
    pub f1: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub pages: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub reading_order_edit: f64,
    pub per_class: Vec<ClassRow>,
}

/// Evaluation report; P/R/F1 are ×100.
#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub pages: Vec<PageRow>,
    pub summary: EvalSummary,
}

pub fn eval_report(pairs: &[(String, PageMetrics)], iou: f64) -> Result<EvalReport> {
    let metrics: Vec<PageMetrics> = pairs.iter().map(|p| p.1.clone()).collect();
    let s: MetricsSummary = aggregate(&metrics)?;
    Ok(EvalReport {
        iou_threshold: iou,
        pages: pairs
            .iter()
            .map(|(stem, m)| PageRow {
                stem: stem.clone(),
                page_id: m.page_id.clone(),
                precision: 100.0 * m.precision,
                recall: 100.0 * m.recall,
                f1: 100.0 * m.f1,
                reading_order_edit: m.reading_order_edit,
                num_pred: m.num_pred,
                num_gt: m.num_gt,
                num_matched: m.matched_pairs.len(),
            })
            .collect(),
        summary: EvalSummary {
            pages: s.pages,
            precision: 100.0 * s.precision,
            recall: 100.0 * s.recall,
            f1: 100.0 * s.f1,
            reading_order_edit: s.reading_order_edit,
            per_class: s
                .per_class
                .iter()
                .map(|c| ClassRow { class_id: c.class_id, tp: c.tp, pred: c.pred, gt: c.gt, f1: 100.0 * c.f1 })
                .collect(),
        },
    })
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.iou) {
        return Err(layout_handoff::HandoffError::validation(format!("--iou {} outside [0, 1]", a.iou)).into());
    }
    let pairs = pair_predictions(&a.pred, &a.gt)?;
    let metrics: Vec<(String, PageMetrics)> = pairs
        .par_iter()
        .map(|(stem, pred, gt)| -> Result<(String, PageMetrics)> {
            let iface = load_interface(pred)?;
            let gt = load_gt(gt)?;
            Ok((stem.clone(), evaluate_page(&iface, &gt, a.iou)))
        })
        .collect::<Result<_>>()?;
    write_output(a.out.as_deref(), &json(&eval_report(&metrics, a.iou)?)?)
}

#[derive(Debug, Serialize)]
pub struct TermCheck {
    pub term: String,
    pub max_relative_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub worst: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct GradientCheck {
    pub step: f64,
    pub tolerance: f64,
    pub max_relative_error: f64,
    pub passed: bool,
    pub terms: Vec<TermCheck>,
}

#[derive(Debug, Serialize)]
pub struct LossOutput {
    pub loss: LossReport,
    pub gradient_check: Option<GradientCheck>,
}

pub fn cmd_loss(a: &LossArgs, cfg: &HandoffConfig) -> Result<()> {
    let pool = load_pool(&a.pool)?;
    let gt = load_gt(&a.gt)?;
    if pool.num_classes != gt.num_classes {
        return Err(layout_handoff::HandoffError::validation(format!(
            "pool has {} classes, ground truth has {}",
            pool.num_classes, gt.num_classes
        ))
        .into());
    }
    let assignment = assign(&pool, &gt, cfg)?;
    let loss = loss_with_assignment(&pool, &gt, &assignment, cfg)?;
    let gradient_check = if a.check_gradients {
        let reports: Vec<GradCheckReport> = Term::ALL
            .iter()
            .map(|&t| check_term_gradients(&pool, &gt, &assignment, cfg, t, a.step))
            .collect::<layout_handoff::Result<_>>()?;
        let max = reports.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
        Some(GradientCheck {
            step: a.step,
            tolerance: GRADIENT_TOLERANCE,
            max_relative_error: max,
            passed: max <= GRADIENT_TOLERANCE,
            terms: reports
                .into_iter()
                .map(|r| TermCheck {
                    term: r.term.name().to_string(),
                    max_relative_error: r.max_relative_error,
                    checked: r.checked,
                    skipped: r.skipped,
                    worst: r.worst.map(|(id, f)| format!("({id}, {f})")),
                })
                .collect(),
        })
    } else {
        None
    };
    write_output(a.out.as_deref(), &json(&LossOutput { loss, gradient_check })?)
}

pub fn load_compare_pages(dir: &Path) -> Result<Vec<ComparePage>> {
    discover_pages(dir)?
        .par_iter()
        .map(|p| -> Result<ComparePage> {
            Ok(ComparePage {
                stem: p.stem.clone(),
                pool: load_pool(&p.pool)?,
                gt: load_gt(&p.gt)?,
                oracle: p.oracle.as_deref().map(load_oracle).transpose()?,
            })
        })
        .collect()
}

pub fn cmd_compare(a: &CompareArgs, cfg: &HandoffConfig, quiet: bool) -> Result<()> {
    let strategies = parse_strategies(&a.strategies)?;
    let pages = load_compare_pages(&a.dir)?;
    let report = compare(&pages, &strategies, cfg, a.iou)?;
    if let Some(out) = &a.out {
        write_output(Some(out), &json(&report)?)?;
    }
    let table = render_table(&report);
    match &a.table {
        Some(path) => write_output(Some(path), table.trim_end().as_bytes())?,
        None if !quiet => write_output(None, table.trim_end().as_bytes())?,
        None => {}
    }
    Ok(())
}

pub fn cmd_render(a: &RenderArgs, cfg: &HandoffConfig) -> Result<()> {
    let gt = a.gt.as_deref().map(load_gt).transpose()?;
    let svg = match (&a.pool, &a.iface) {
        (Some(pool_path), _) => {
            let pool = load_pool(pool_path)?;
            let strategy = strategy_arg(a.strategy.as_deref(), cfg)?;
            let out = handoff_with(&pool, cfg, strategy, a.order.as_deref())?;
            render_svg(&Scene::from_handoff(&pool, &out.interface, &out.decisions, gt.as_ref()))
        }
        (None, Some(iface_path)) => {
            let iface = load_interface(iface_path)?;
            render_svg(&Scene::from_interface(&iface, gt.as_ref()))
        }
        (None, None) => return Err(CliError::Usage("render needs --pool or --iface".into()).into()),
    };
    write_output(a.out.as_deref(), svg.as_bytes())
}
