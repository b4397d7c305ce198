//! Scenarios A–D, sweeps, the simulation and model pipelines and reports.

mod config;
mod report;
mod run;

pub use config::{
    realization_seed, Case, FiberSection, MetricsSection, ModelsSection, Profile, ReceiverSection, RoadmSection,
    Scenario, ScenarioConfig, SimulationSection, TransmitterSection,
};
pub use report::{emit_collisions, emit_report, file_stem, Report, ReportFormat, COLUMNS};
pub use run::{
    calibrate_all, calibrate_fde, model_rows, result_rows, run_models, run_realization, run_scenario, simulate, sweep,
    ModelResult, ModelRow, RealizationResult, ResultRow, SimulationResult, Sweep,
};
