//! Closed-loop episodes, Monte-Carlo batches and plot-data export.

pub mod batch;
pub mod config;
pub mod episode;
pub mod export;
pub mod scenario;

pub use batch::{run_batch, write_batch, AggregateStats, AlgorithmStats, BatchReport, TimingStats};
pub use config::{CrossingParams, ExperimentConfig, FixedLayout, ScenarioConfig, SliceParams, VehicleParams};
pub use episode::{
    initial_value_slice, planning_seed, run_episode, EpisodeLog, EpisodeResult, EpisodeRun, EpisodeTiming,
    Outcome, StepClusters, TrajectoryRow, ValueSliceRow,
};
pub use export::{export_log, export_run, write_value_slice, ExportFormat, TRAJECTORY_HEADER, VALUE_SLICE_HEADER};
pub use scenario::{build_scenario, Scenario};
