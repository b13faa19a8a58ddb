//! Experiment configs, seeded batch runs and plot-data output.

pub mod bench;
pub mod config;
pub mod plot;
pub mod run;
pub mod weights;

pub use config::{load_config, ExperimentConfig, Strategy};
pub use plot::{emit_plot_data, PlotData, TraceKind};
pub use run::{run_experiment, ExperimentReport, SeedOutcome};
