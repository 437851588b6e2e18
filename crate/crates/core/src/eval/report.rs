use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CellResult, DetPoint, EvalError, EvalReport, Scenario};
use crate::ingest::Task;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

const CSV_HEADER: [&str; 12] = [
    "kind",
    "task",
    "scenario",
    "channel",
    "eer",
    "eer_threshold",
    "n_genuine",
    "n_impostor",
    "n_excluded",
    "threshold",
    "fmr",
    "fnmr",
];

fn num(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn task_heading(t: Task) -> &'static str {
    match t {
        Task::Task1Stylus => "Task 1 (Stylus)",
        Task::Task2Finger => "Task 2 (Finger)",
        Task::Task3Combined => "Task 3 (Combined)",
    }
}

fn scenario_heading(s: Scenario) -> &'static str {
    match s {
        Scenario::All => "All forgeries",
        Scenario::Random => "Random forgeries",
        Scenario::Skilled => "Skilled forgeries",
    }
}

fn markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    for scenario in Scenario::ALL {
        let _ = writeln!(out, "### {} (EER %)\n", scenario_heading(scenario));
        out.push_str("| Channel |");
        for t in Task::ALL {
            let _ = write!(out, " {} |", task_heading(t));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(Task::ALL.len()));
        out.push('\n');
        for ch in &report.channels {
            let _ = write!(out, "| {ch} |");
            for t in Task::ALL {
                match report.cell(t, scenario, ch).and_then(|c| c.eer) {
                    Some(e) => {
                        let _ = write!(out, " {e:.2} |");
                    }
                    None => out.push_str(" -- |"),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    let excluded: usize = report
        .cells
        .iter()
        .filter(|c| c.task == Task::Task3Combined && c.scenario == Scenario::All)
        .map(|c| c.n_excluded)
        .sum();
    if excluded > 0 {
        out.push_str("Excluded (no score), all tasks and forgeries:");
        for c in report.cells.iter().filter(|c| c.task == Task::Task3Combined && c.scenario == Scenario::All) {
            let _ = write!(out, " {}={}", c.channel, c.n_excluded);
        }
        out.push('\n');
    }
    out
}

fn csv(report: &EvalReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for c in &report.cells {
        let key = [c.task.as_str(), c.scenario.as_str(), c.channel.as_str()];
        let summary = [
            num(c.eer),
            num(c.eer_threshold),
            c.n_genuine.to_string(),
            c.n_impostor.to_string(),
            c.n_excluded.to_string(),
        ];
        w.write_record(
            std::iter::once("cell")
                .chain(key)
                .chain(summary.iter().map(String::as_str))
                .chain(["", "", ""]),
        )
        .expect("in-memory write");
        for p in &c.det {
            let point = [p.threshold.to_string(), p.fmr.to_string(), p.fnmr.to_string()];
            w.write_record(std::iter::once("det").chain(key).chain(["", "", "", "", ""]).chain(point.iter().map(String::as_str)))
                .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

/// Serialize a report. Output depends only on the report's contents.
pub fn emit_report(report: &EvalReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut v = serde_json::to_vec_pretty(report).expect("reports serialize");
            v.push(b'\n');
            v
        }
        ReportFormat::Csv => csv(report),
        ReportFormat::Markdown => markdown(report).into_bytes(),
    }
}

/// Two-column `fmr,fnmr` CSV of one cell's DET curve.
pub fn det_csv(det: &[DetPoint]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["fmr", "fnmr"]).expect("in-memory write");
    for p in det {
        w.write_record([p.fmr.to_string(), p.fnmr.to_string()]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Inverse of the CSV form of [`emit_report`].
pub fn parse_report_csv(bytes: &[u8]) -> Result<EvalReport, EvalError> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut report = EvalReport {
        channels: Vec::new(),
        cells: Vec::new(),
    };
    for rec in r.records() {
        let rec = rec.map_err(|e| EvalError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| EvalError::Csv { line, reason };
        let float = |i: usize| -> Result<Option<f64>, EvalError> {
            match &rec[i] {
                "" => Ok(None),
                v => v.parse().map(Some).map_err(|_| bad(format!("bad number {v:?}"))),
            }
        };
        let count = |i: usize| rec[i].parse::<usize>().map_err(|_| bad(format!("bad count {:?}", &rec[i])));
        let task: Task = rec[1].parse().map_err(bad)?;
        let scenario: Scenario = rec[2].parse().map_err(bad)?;
        let channel = rec[3].to_string();
        match &rec[0] {
            "cell" => {
                if !report.channels.contains(&channel) {
                    report.channels.push(channel.clone());
                }
                report.cells.push(CellResult {
                    task,
                    scenario,
                    channel,
                    eer: float(4)?,
                    eer_threshold: float(5)?,
                    n_genuine: count(6)?,
                    n_impostor: count(7)?,
                    n_excluded: count(8)?,
                    det: Vec::new(),
                });
            }
            "det" => {
                let cell = report
                    .cells
                    .last_mut()
                    .filter(|c| c.task == task && c.scenario == scenario && c.channel == channel)
                    .ok_or_else(|| bad("det row does not follow its cell".into()))?;
                let need = |v: Option<f64>| v.ok_or_else(|| bad("missing DET value".into()));
                cell.det.push(DetPoint {
                    threshold: need(float(9)?)?,
                    fmr: need(float(10)?)?,
                    fnmr: need(float(11)?)?,
                });
            }
            other => return Err(bad(format!("unknown row kind {other:?}"))),
        }
    }
    Ok(report)
}
