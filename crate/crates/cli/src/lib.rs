//! Experiment harness for censored Gaussian process demand models: CSV
//! ingestion, censoring grids with repeats, result tables and posterior
//! curves.

pub mod config;
pub mod error;
pub mod io;
pub mod output;
pub mod runner;

pub use config::{CensorGrid, DatasetSource, ExperimentConfig, GridPoint, Model, ModelSettings};
pub use error::{CliError, LoadError};
pub use io::{load_demand_csv, load_weather_csv, DemandData, FeatureLayout, JoinReport, WeatherTable};
pub use output::{emit_results, summarize, SummaryRow};
pub use runner::{fit_predict, run_experiment_grid, ExperimentOutput, Prediction, ResultRecord};
