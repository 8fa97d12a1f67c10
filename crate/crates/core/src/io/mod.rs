//! Manifest ingestion, dataset hashing, artifacts and the command layer.

mod commands;
mod manifest;
mod plot;

pub use commands::{
    cmd_ablate, cmd_baselines, cmd_evaluate, cmd_ingest, cmd_preprocess, cmd_report, cmd_simulate, cmd_sweep_ratio,
    cmd_train, Artifacts, Progress, SimulateSummary,
};
pub use manifest::{
    dataset_hash, ingest_manifest, read_manifest, write_manifest, Dataset, IngestOptions, ManifestRow, RowIssue,
};
