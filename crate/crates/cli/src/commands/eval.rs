use std::path::PathBuf;

use sigverify_core::eval::{breakdown, det_csv, emit_report, join_with_protocol, EvalError, EvalReport, ReportFormat, ScoreTable};
use sigverify_core::ingest::parse_comparison_list;

use super::{write_file, DET_DIR, DTW_SCORES_FILE, REPORT_STEM, SCORES_FILE};
use crate::config::RunConfig;
use crate::error::CliError;

/// Score files in the output directory, used when none are named.
pub fn default_score_files(cfg: &RunConfig) -> Vec<PathBuf> {
    [SCORES_FILE, DTW_SCORES_FILE]
        .iter()
        .map(|f| cfg.output_dir.join(f))
        .filter(|p| p.exists())
        .collect()
}

/// Join score files with the protocol, evaluate and write
/// `report.{csv,json,md}` plus one DET file per populated cell.
pub fn eval(cfg: &RunConfig, score_files: &[PathBuf]) -> Result<EvalReport, CliError> {
    let files = if score_files.is_empty() { default_score_files(cfg) } else { score_files.to_vec() };
    if files.is_empty() {
        return Err(CliError::usage(format!("no score files given and none found in {}", cfg.output_dir.display())));
    }
    let protocol = &cfg.dataset.protocol;
    let bytes = std::fs::read(protocol).map_err(|e| CliError::data(format!("{}: {e}", protocol.display())))?;
    let pairs = parse_comparison_list(&bytes).map_err(|e| CliError::data(format!("{}: {e}", protocol.display())))?;
    let tables = files
        .iter()
        .map(|f| {
            let bytes = std::fs::read(f).map_err(|e| CliError::data(format!("{}: {e}", f.display())))?;
            ScoreTable::from_csv(&bytes).map_err(|e| CliError::data(format!("{}: {e}", f.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let joined = join_with_protocol(&tables, &pairs).map_err(|e| match e {
        EvalError::OrphanPairs(_) | EvalError::DuplicateScore { .. } => CliError::join(e.to_string()),
        other => CliError::data(other.to_string()),
    })?;
    let channels = cfg.eval.channels.clone().unwrap_or_else(|| joined.channels.clone());
    let report = breakdown(&joined, &channels).map_err(|e| match e {
        EvalError::MissingTask(_) => CliError::join(e.to_string()),
        other => CliError::data(other.to_string()),
    })?;
    for format in &cfg.eval.formats {
        let path = cfg.output_dir.join(format!("{REPORT_STEM}.{}", format.extension()));
        write_file(&path, &emit_report(&report, *format))?;
    }
    for c in report.cells.iter().filter(|c| !c.det.is_empty()) {
        let name = format!("{}_{}_{}.csv", c.task, c.scenario, c.channel);
        write_file(&cfg.output_dir.join(DET_DIR).join(name), &det_csv(&c.det))?;
    }
    Ok(report)
}

pub fn markdown(report: &EvalReport) -> String {
    String::from_utf8(emit_report(report, ReportFormat::Markdown)).expect("markdown is UTF-8")
}
