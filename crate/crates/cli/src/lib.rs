//! Scenario runner: TOML configs in, CSV and JSON artifacts out.

pub mod config;
pub mod output;
pub mod pipelines;

pub use config::{load, LoadedConfig, Pipeline, ScenarioConfig};
pub use pipelines::{execute, Summary};
