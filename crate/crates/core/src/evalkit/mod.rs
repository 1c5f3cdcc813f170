//! NMSE evaluation, figure-axis sweeps, complexity reporting and export.

mod evaluate;
mod predictor;
mod report;
mod table;

pub use evaluate::{evaluate, sweep_context, sweep_sampling_steps, sweep_velocity, EvalConfig};
pub use predictor::{checkpoint_digest, dataset_digest, Forecast, ModelPredictor, OracleStub, Predictor, ZeroStub};
pub use report::{
    complexity_report, emit_plots, export_complexity_csv, export_heatmap, paper_specs, summarize, write_summary,
    ComplexityRow, PanelSummary, PlotReport, Summary,
};
pub use table::{export_csv, read_csv, round_sig6, PredStep, ResultRow, ResultTable, TableProvenance, CSV_HEADER};
