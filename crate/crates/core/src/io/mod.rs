//! File formats: JSON configuration, CSV tables, SVG plots and run manifests.

pub mod config;
pub mod csv;
pub mod manifest;
pub mod plot;

pub use config::{canonical_json, config_to_json, parse_config, RunConfig};
pub use self::csv::{trajectory_csv, write_sweep_csv, write_trajectory_csv, sweep_csv};
pub use manifest::RunManifest;
pub use plot::{render_plot, Frame, PlotSpec};
