//! Detector-to-parser handoff: joint retention and reading-order objectives,
//! bipartite target assignment, handoff strategies, layout metrics and a
//! synthetic scenario generator.

pub mod codec;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod handoff;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod objectives;
pub mod synth;

pub use error::{HandoffError, Result};
pub use handoff::{run_strategy, HandoffOutput};
pub use matching::{assign, hungarian, Assignment, CostMatrix};
pub use metrics::{aggregate, evaluate_page, MetricsSummary, PageMetrics};
pub use model::{
    BBox, GroundTruthElement, GroundTruthPage, HandoffConfig, Hypothesis, HypothesisPool, Instance, ParserInterface, Strategy,
};
pub use objectives::{total_loss, LossReport};
