//! Equal error rate, DET curves and the task × scenario × channel breakdown.
//!
//! Convention: an impostor is falsely matched when its score is `>=` the
//! threshold, a genuine pair is falsely rejected when its score is `<` it.

mod report;
mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Label, Task};

pub use report::{det_csv, emit_report, parse_report_csv, ReportFormat};
pub use table::{join_with_protocol, ScoreRow, ScoreTable, CHANNELS, S_DTW, S_TEXT, S_V1, S_V2};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least one genuine and one impostor score")]
    DegenerateSet,
    #[error("pair {0}: score is not finite")]
    NonFiniteScore(String),
    #[error("line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("score rows reference pair ids missing from the protocol: {}", .0.join(", "))]
    OrphanPairs(Vec<String>),
    #[error("pair {pair_id}: channel {channel} appears in more than one score file")]
    DuplicateScore { pair_id: String, channel: String },
    #[error("pair {0}: task unknown (not in protocol or scores)")]
    MissingTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Genuine pairs against every forgery.
    All,
    /// Genuine pairs against other writers' own signatures.
    Random,
    /// Genuine pairs against imitations.
    Skilled,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [Scenario::All, Scenario::Random, Scenario::Skilled];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::All => "all",
            Scenario::Random => "random",
            Scenario::Skilled => "skilled",
        }
    }

    /// Whether a pair with `label` takes part in this scenario.
    pub fn includes(self, label: Label) -> bool {
        match (self, label) {
            (_, Label::Genuine) => true,
            (Scenario::All, Label::RandomForgery | Label::SkilledForgery) => true,
            (Scenario::Random, Label::RandomForgery) => true,
            (Scenario::Skilled, Label::SkilledForgery) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

/// Whether a pair with `task` counts toward the cell for `cell_task`.
/// The combined task pools every pair.
pub fn task_includes(cell_task: Task, task: Task) -> bool {
    cell_task == Task::Task3Combined || cell_task == task
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    pub pair_id: String,
    pub score: f64,
    pub is_genuine: bool,
    pub scenario: Scenario,
    pub task: Task,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    pub threshold: f64,
    pub fmr: f64,
    pub fnmr: f64,
}

fn split(scores: &[LabeledScore]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
    let mut genuine = Vec::new();
    let mut impostor = Vec::new();
    for s in scores {
        if !s.score.is_finite() {
            return Err(EvalError::NonFiniteScore(s.pair_id.clone()));
        }
        if s.is_genuine {
            genuine.push(s.score);
        } else {
            impostor.push(s.score);
        }
    }
    Ok((genuine, impostor))
}

pub fn compute_det(scores: &[LabeledScore]) -> Result<Vec<DetPoint>, EvalError> {
    let (genuine, impostor) = split(scores)?;
    det_from_scores(&genuine, &impostor)
}

/// DET points over the distinct scores plus one sentinel below the minimum
/// and one above the maximum, in increasing threshold order.
pub fn det_from_scores(genuine: &[f64], impostor: &[f64]) -> Result<Vec<DetPoint>, EvalError> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(EvalError::DegenerateSet);
    }
    if genuine.iter().chain(impostor).any(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(String::new()));
    }
    let mut g = genuine.to_vec();
    let mut i = impostor.to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let lo = thresholds[0] - 1.0;
    let hi = thresholds[thresholds.len() - 1] + 1.0;
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    Ok(std::iter::once(lo)
        .chain(thresholds)
        .chain(std::iter::once(hi))
        .map(|t| DetPoint {
            threshold: t,
            fmr: (i.len() - i.partition_point(|&s| s < t)) as f64 / ni,
            fnmr: g.partition_point(|&s| s < t) as f64 / ng,
        })
        .collect())
}

/// EER in percent and the threshold where FMR and FNMR cross.
///
/// An exact tie is returned as is; otherwise both the rate and the
/// threshold are linearly interpolated between the two points bracketing the
/// sign change of `fmr - fnmr`.
pub fn eer_from_det(det: &[DetPoint]) -> Result<(f64, f64), EvalError> {
    if let Some(p) = det.iter().find(|p| p.fmr == p.fnmr) {
        return Ok((100.0 * p.fmr, p.threshold));
    }
    for w in det.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (a.fmr - a.fnmr, b.fmr - b.fnmr);
        if da > 0.0 && db < 0.0 {
            let alpha = da / (da - db);
            let eer = a.fmr + alpha * (b.fmr - a.fmr);
            let threshold = a.threshold + alpha * (b.threshold - a.threshold);
            return Ok((100.0 * eer, threshold));
        }
    }
    Err(EvalError::DegenerateSet)
}

pub fn compute_eer(scores: &[LabeledScore]) -> Result<(f64, f64), EvalError> {
    eer_from_det(&compute_det(scores)?)
}

/// One (task, scenario, channel) entry of a report. `eer` is `None` when the
/// cell lacks a genuine or an impostor score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: Task,
    pub scenario: Scenario,
    pub channel: String,
    pub eer: Option<f64>,
    pub eer_threshold: Option<f64>,
    pub n_genuine: usize,
    pub n_impostor: usize,
    pub n_excluded: usize,
    pub det: Vec<DetPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub channels: Vec<String>,
    /// Ordered by task, then scenario, then channel as listed in `channels`.
    pub cells: Vec<CellResult>,
}

impl EvalReport {
    pub fn cell(&self, task: Task, scenario: Scenario, channel: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.task == task && c.scenario == scenario && c.channel == channel)
    }
}

/// Evaluate every requested channel of a joined score table. Rows without a
/// value for a channel are counted in `n_excluded`; unlabeled rows are
/// ignored.
pub fn breakdown(table: &ScoreTable, channels: &[String]) -> Result<EvalReport, EvalError> {
    let mut cells = Vec::new();
    let cols: Vec<Option<usize>> = channels.iter().map(|c| table.channel_index(c)).collect();
    for row in &table.rows {
        if row.task.is_none() {
            return Err(EvalError::MissingTask(row.pair_id.clone()));
        }
    }
    for task in Task::ALL {
        for scenario in Scenario::ALL {
            for (channel, col) in channels.iter().zip(&cols) {
                let (mut genuine, mut impostor, mut excluded) = (Vec::new(), Vec::new(), 0);
                for row in &table.rows {
                    if row.label == Label::Unlabeled || !scenario.includes(row.label) || !task_includes(task, row.task.expect("checked")) {
                        continue;
                    }
                    match col.and_then(|c| row.values[c]) {
                        Some(s) if !s.is_finite() => return Err(EvalError::NonFiniteScore(row.pair_id.clone())),
                        Some(s) if row.label == Label::Genuine => genuine.push(s),
                        Some(s) => impostor.push(s),
                        None => excluded += 1,
                    }
                }
                let det = det_from_scores(&genuine, &impostor).unwrap_or_default();
                let eer = if det.is_empty() { None } else { Some(eer_from_det(&det)?) };
                cells.push(CellResult {
                    task,
                    scenario,
                    channel: channel.clone(),
                    eer: eer.map(|e| e.0),
                    eer_threshold: eer.map(|e| e.1),
                    n_genuine: genuine.len(),
                    n_impostor: impostor.len(),
                    n_excluded: excluded,
                    det,
                });
            }
        }
    }
    Ok(EvalReport {
        channels: channels.to_vec(),
        cells,
    })
}
