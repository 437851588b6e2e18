use std::collections::BTreeMap;

use serde::Serialize;
use sigverify_core::ingest::{synth_dataset, ColumnSchema, Label};

use crate::config::SynthConfig;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthSummary {
    pub subjects: usize,
    pub signatures: usize,
    pub pairs: usize,
    pub by_label: BTreeMap<Label, usize>,
}

pub fn synth(cfg: &SynthConfig, schema: &ColumnSchema) -> Result<SynthSummary, CliError> {
    let ds = synth_dataset(cfg.seed, cfg.subjects, cfg.genuine, cfg.skilled).map_err(|e| CliError::usage(e.to_string()))?;
    ds.write(&cfg.out_dir, schema).map_err(|e| CliError::new(1, e.to_string()))?;
    Ok(SynthSummary {
        subjects: cfg.subjects,
        signatures: ds.records.len(),
        pairs: ds.pairs.len(),
        by_label: ds.pair_counts_by_label(),
    })
}
