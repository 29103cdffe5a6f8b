//! Pipeline orchestration for the `canopy` binary: one function per
//! subcommand, the experiment-manifest runner, a LAS 1.2 importer, runtime
//! benchmarks and the label service used by the annotation UI.

pub mod bench;
pub mod files;
pub mod las;
pub mod manifest;
pub mod report;
pub mod serve;
pub mod stages;

pub use manifest::{run_manifest, ExperimentManifest, RunSummary, Stage};
pub use stages::Ctx;
