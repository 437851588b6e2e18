//! Subcommand implementations. Each returns a summary for the caller to
//! print and a [`CliError`] carrying the exit status on failure.

pub mod dtw;
pub mod eval;
pub mod render;
pub mod run;
pub mod synth;

use std::path::Path;

use sigverify_core::ingest::Dataset;

use crate::config::RunConfig;
use crate::error::CliError;

pub const IMAGES_DIR: &str = "images";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const EXCHANGES_FILE: &str = "exchanges.jsonl";
pub const SCORES_FILE: &str = "scores.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DTW_SCORES_FILE: &str = "dtw_scores.csv";
pub const REPORT_STEM: &str = "report";
pub const DET_DIR: &str = "det";

pub(crate) fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    Dataset::load(&cfg.dataset.protocol, &cfg.dataset.signatures, &cfg.dataset.schema).map_err(|errors| {
        let listing: Vec<String> = errors.iter().map(|e| format!("  {e}")).collect();
        CliError::data(format!("could not load dataset ({} error(s)):\n{}", errors.len(), listing.join("\n")))
    })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
