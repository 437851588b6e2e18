use rayon::prelude::*;
use serde::Serialize;
use sigverify_core::dtw::dtw_score_with;
use sigverify_core::eval::{ScoreRow, ScoreTable, S_DTW};

use super::{load_dataset, write_file, DTW_SCORES_FILE};
use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DtwStats {
    pub pairs: usize,
    pub scored: usize,
    pub failed: usize,
}

/// Score every pair with the DTW verifier into `dtw_scores.csv`.
pub fn dtw(cfg: &RunConfig) -> Result<DtwStats, CliError> {
    let ds = load_dataset(cfg)?;
    if ds.pairs.is_empty() {
        return Err(CliError::data(format!("no pairs in {}", cfg.dataset.protocol.display())));
    }
    let scores: Vec<Option<f64>> = ds
        .pairs
        .par_iter()
        .map(|p| match dtw_score_with(&ds.records[&p.reference_path], &ds.records[&p.probe_path], &cfg.dtw) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("pair {}: {e}", p.pair_id);
                None
            }
        })
        .collect();
    let mut table = ScoreTable::new(&[S_DTW]);
    for (p, s) in ds.pairs.iter().zip(&scores) {
        table.rows.push(ScoreRow {
            pair_id: p.pair_id.clone(),
            task: p.task,
            label: p.label,
            values: vec![*s],
        });
    }
    write_file(&cfg.output_dir.join(DTW_SCORES_FILE), &table.to_csv())?;
    let scored = scores.iter().flatten().count();
    let stats = DtwStats {
        pairs: ds.pairs.len(),
        scored,
        failed: ds.pairs.len() - scored,
    };
    if scored == 0 {
        return Err(CliError::data(format!("DTW failed for all {} pair(s)", stats.pairs)));
    }
    Ok(stats)
}
