//! Robustness sweeps, the cost model, and result summaries.

pub mod cost;
pub mod report;
pub mod sweep;

pub use cost::{compare_reference, estimate_cost, Baseline, CostModel, CostReport, CostSummary};
pub use sweep::{emit_report, load_report, run_sweep, Axis, ModelSpec, ReportFormat, SweepReport, SweepSpec};
