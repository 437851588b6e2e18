//! Score CSV files: `pair_id,task,label,<channel>...`, absent scores left
//! empty.

use std::collections::{HashMap, HashSet};

use super::EvalError;
use crate::ingest::{ComparisonPair, Label, Task};

pub const S_V1: &str = "s_v1";
pub const S_V2: &str = "s_v2";
pub const S_TEXT: &str = "s_text";
pub const S_DTW: &str = "s_dtw";
pub const CHANNELS: [&str; 4] = [S_V1, S_V2, S_TEXT, S_DTW];

const KEY_COLUMNS: [&str; 3] = ["pair_id", "task", "label"];

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub pair_id: String,
    pub task: Option<Task>,
    pub label: Label,
    /// One entry per channel of the owning table.
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    pub channels: Vec<String>,
    pub rows: Vec<ScoreRow>,
}

fn csv_err(e: csv::Error) -> EvalError {
    let line = e.position().map_or(0, |p| p.line());
    EvalError::Csv {
        line,
        reason: e.to_string(),
    }
}

impl ScoreTable {
    pub fn new(channels: &[&str]) -> Self {
        ScoreTable {
            channels: channels.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn channel_index(&self, channel: &str) -> Option<usize> {
        self.channels.iter().position(|c| c == channel)
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header: Vec<&str> = KEY_COLUMNS.iter().copied().chain(self.channels.iter().map(String::as_str)).collect();
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![
                row.pair_id.clone(),
                row.task.map(|t| t.as_str().to_string()).unwrap_or_default(),
                row.label.as_str().to_string(),
            ];
            rec.extend(row.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self, EvalError> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
        let header = r.headers().map_err(csv_err)?.clone();
        let names: Vec<&str> = header.iter().collect();
        if names.len() < 3 || names[..3] != KEY_COLUMNS {
            return Err(EvalError::Csv {
                line: 1,
                reason: format!("header must start with {}", KEY_COLUMNS.join(",")),
            });
        }
        let channels: Vec<String> = names[3..].iter().map(|s| s.to_string()).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |reason: String| EvalError::Csv { line, reason };
            let task = match &rec[1] {
                "" => None,
                t => Some(t.parse::<Task>().map_err(bad)?),
            };
            let label = rec[2].parse::<Label>().map_err(bad)?;
            let values = (3..rec.len())
                .map(|i| match &rec[i] {
                    "" => Ok(None),
                    v => v
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .map(Some)
                        .ok_or_else(|| bad(format!("{}: {v:?} is not a finite number", channels[i - 3]))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(ScoreRow {
                pair_id: rec[0].to_string(),
                task,
                label,
                values,
            });
        }
        Ok(ScoreTable { channels, rows })
    }
}

/// Merge score tables and attach protocol labels and tasks, producing one
/// row per protocol pair in protocol order.
///
/// Protocol labels win over labels in the score files unless the protocol
/// says `unlabeled`; the task comes from the protocol when given there.
/// Channels are ordered canonically, unknown channels last in first-seen
/// order. Pairs with no scores get empty values.
pub fn join_with_protocol(tables: &[ScoreTable], pairs: &[ComparisonPair]) -> Result<ScoreTable, EvalError> {
    let mut channels: Vec<String> = CHANNELS
        .iter()
        .filter(|c| tables.iter().any(|t| t.channel_index(c).is_some()))
        .map(|c| c.to_string())
        .collect();
    for t in tables {
        for c in &t.channels {
            if !channels.contains(c) {
                channels.push(c.clone());
            }
        }
    }
    let index: HashMap<&str, usize> = pairs.iter().enumerate().map(|(i, p)| (p.pair_id.as_str(), i)).collect();
    let mut rows: Vec<ScoreRow> = pairs
        .iter()
        .map(|p| ScoreRow {
            pair_id: p.pair_id.clone(),
            task: p.task,
            label: p.label,
            values: vec![None; channels.len()],
        })
        .collect();
    let mut seen = HashSet::new();
    let mut orphans = Vec::new();
    for t in tables {
        let cols: Vec<usize> = t
            .channels
            .iter()
            .map(|c| channels.iter().position(|x| x == c).expect("collected above"))
            .collect();
        for r in &t.rows {
            let Some(&i) = index.get(r.pair_id.as_str()) else {
                orphans.push(r.pair_id.clone());
                continue;
            };
            let row = &mut rows[i];
            if row.task.is_none() {
                row.task = r.task;
            }
            if row.label == Label::Unlabeled {
                row.label = r.label;
            } else if r.label != Label::Unlabeled && r.label != row.label {
                log::warn!("pair {}: scores say {}, protocol says {}; using protocol", r.pair_id, r.label, row.label);
            }
            for (&col, v) in cols.iter().zip(&r.values) {
                if !seen.insert((i, col)) {
                    return Err(EvalError::DuplicateScore {
                        pair_id: r.pair_id.clone(),
                        channel: channels[col].clone(),
                    });
                }
                row.values[col] = *v;
            }
        }
    }
    if !orphans.is_empty() {
        orphans.sort();
        orphans.dedup();
        return Err(EvalError::OrphanPairs(orphans));
    }
    Ok(ScoreTable { channels, rows })
}
