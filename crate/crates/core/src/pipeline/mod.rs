//! On-disk formats, campaign orchestration and report emission.

mod config;
pub mod formats;
mod manifest;
mod report;
mod run;
mod scenario;

pub use config::{CharacterizationConfig, PipelineConfig};
pub use manifest::{load_manifest, save_manifest, with_phases, CampaignManifest, PositionSpec, SweepSource};
pub use report::{
    emit_report, format_table, CampaignMeans, CampaignReport, ClusterSummary, EffectiveConfig, Fit,
    PositionOutcome, PositionPlots, PositionReport, PositionSummary, ReportFormat,
};
pub use run::{
    characterize_from_files, position_dir, position_plots, run_pipeline, PipelineOutput, PositionDetail,
    RunOptions,
};
pub use scenario::{
    atrium_positions, scenario_synthetic_atrium, scenario_synthetic_atrium_with, AtriumOptions, AtriumScenario,
    PlantedPosition, RX_HEIGHT_M, TX_POSITION,
};
