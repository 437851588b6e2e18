//! Send every comparison to the configured transport, persist exchanges and
//! derive the score file. Interrupted runs resume from `exchanges.jsonl`.

use std::collections::{HashMap, HashSet};
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};
use sigverify_core::eval::{ScoreRow, ScoreTable, S_TEXT, S_V1, S_V2};
use sigverify_core::ingest::{ComparisonPair, Dataset};
use sigverify_core::render::{compose_pair, render_pair};
use sigverify_core::scoring::{assemble_scores, TokenClassSets};
use sigverify_core::vlm::{
    build_prompt, send, CassetteWriter, LiveTransport, MockTransport, PromptBundle, RecordingTransport, ReplayTransport, Transport,
    VerificationExchange, VlmError,
};

use super::{load_dataset, write_file, EXCHANGES_FILE, SCORES_FILE, SUMMARY_FILE};
use crate::config::{RunConfig, TransportConfig};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Scored,
    Refused,
    Malformed,
    /// Transport or rendering failure; retried on the next run.
    Failed,
}

/// One line of `exchanges.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub pair_id: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange: Option<VerificationExchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub pairs: usize,
    pub scored: usize,
    pub refused: usize,
    pub malformed: usize,
    pub failed: usize,
    /// Verdict tokens that could not be classified; the affected channel is
    /// left empty.
    pub score_warnings: usize,
}

pub fn build_transport(cfg: &TransportConfig) -> Result<Box<dyn Transport>, CliError> {
    Ok(match cfg {
        TransportConfig::Mock { logprobs, script } => {
            let t = MockTransport::new(script.clone());
            Box::new(if *logprobs { t } else { t.without_logprobs() })
        }
        TransportConfig::Replay { cassette } => {
            Box::new(ReplayTransport::open(cassette).map_err(|e| CliError::data(format!("{}: {e}", cassette.display())))?)
        }
        TransportConfig::Live { api, record } => {
            let live = LiveTransport::new(api.clone()).map_err(|e| CliError::usage(e.to_string()))?;
            match record {
                None => Box::new(live),
                Some(path) => {
                    let writer = CassetteWriter::append_to(path).map_err(|e| CliError::new(1, format!("{}: {e}", path.display())))?;
                    Box::new(RecordingTransport::new(live, writer))
                }
            }
        }
    })
}

/// Render and compose the images for `pair` and build its prompt.
pub fn prompt_for_pair(ds: &Dataset, pair: &ComparisonPair, cfg: &RunConfig) -> Result<PromptBundle, VlmError> {
    let (a, b) = render_pair(&ds.records[&pair.reference_path], &ds.records[&pair.probe_path], &cfg.render)?;
    let images = compose_pair(&a, &b, cfg.prompt.pair_mode)?;
    build_prompt(&images, &cfg.prompt)
}

fn process(ds: &Dataset, pair: &ComparisonPair, cfg: &RunConfig, transport: &dyn Transport) -> RunRecord {
    let result = prompt_for_pair(ds, pair, cfg).and_then(|bundle| send(&pair.pair_id, &bundle, transport));
    let (outcome, exchange, detail) = match result {
        Ok(ex) => (Outcome::Scored, Some(ex), None),
        Err(e @ VlmError::SafetyRefusal(_)) => (Outcome::Refused, None, Some(e.to_string())),
        Err(e @ VlmError::ResponseMalformed { .. }) => (Outcome::Malformed, None, Some(e.to_string())),
        Err(e) => (Outcome::Failed, None, Some(e.to_string())),
    };
    if let Some(d) = &detail {
        log::warn!("pair {}: {d}", pair.pair_id);
    }
    RunRecord {
        pair_id: pair.pair_id.clone(),
        outcome,
        exchange,
        detail,
    }
}

/// Keep the first terminal record per known pair, dropping failures, stray
/// pair ids and a torn final line, and rewrite the file to match.
fn compact_exchanges(path: &Path, known: &HashSet<&str>) -> Result<HashMap<String, RunRecord>, CliError> {
    let mut kept: Vec<RunRecord> = Vec::new();
    let mut seen = HashSet::new();
    match std::fs::File::open(path) {
        Ok(f) => {
            for (n, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| CliError::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: RunRecord = match serde_json::from_str(&line) {
                    Ok(r) => r,
                    Err(e) => {
                        log::warn!("{}:{}: dropping unreadable record ({e})", path.display(), n + 1);
                        continue;
                    }
                };
                if rec.outcome != Outcome::Failed && known.contains(rec.pair_id.as_str()) && seen.insert(rec.pair_id.clone()) {
                    kept.push(rec);
                }
            }
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {}
        Err(e) => return Err(CliError::io(path, e)),
    }
    let mut text = String::new();
    for r in &kept {
        text.push_str(&serde_json::to_string(r).expect("records serialize"));
        text.push('\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    write_file(&tmp, text.as_bytes())?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))?;
    Ok(kept.into_iter().map(|r| (r.pair_id.clone(), r)).collect())
}

/// Score rows for every pair in protocol order.
pub fn score_table(pairs: &[ComparisonPair], records: &HashMap<String, RunRecord>, sets: &TokenClassSets) -> (ScoreTable, usize) {
    let mut table = ScoreTable::new(&[S_V1, S_V2, S_TEXT]);
    let mut warnings = 0;
    for p in pairs {
        let mut values = vec![None, None, None];
        if let Some(ex) = records.get(&p.pair_id).and_then(|r| r.exchange.as_ref()) {
            match assemble_scores(ex, sets) {
                Ok(a) => {
                    for w in &a.warnings {
                        log::warn!("pair {}: {:?}: {}", w.pair_id, w.slot, w.message);
                    }
                    warnings += a.warnings.len();
                    values = vec![a.scores.s_v1, a.scores.s_v2, Some(a.scores.s_text)];
                }
                Err(e) => {
                    log::warn!("pair {}: {e}", p.pair_id);
                    warnings += 1;
                }
            }
        }
        table.rows.push(ScoreRow {
            pair_id: p.pair_id.clone(),
            task: p.task,
            label: p.label,
            values,
        });
    }
    (table, warnings)
}

pub fn run(cfg: &RunConfig) -> Result<RunSummary, CliError> {
    let ds = load_dataset(cfg)?;
    let transport = build_transport(&cfg.transport)?;
    run_with_transport(cfg, &ds, transport.as_ref())
}

pub fn run_with_transport(cfg: &RunConfig, ds: &Dataset, transport: &dyn Transport) -> Result<RunSummary, CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| CliError::io(&cfg.output_dir, e))?;
    let log_path = cfg.output_dir.join(EXCHANGES_FILE);
    let known: HashSet<&str> = ds.pairs.iter().map(|p| p.pair_id.as_str()).collect();
    let mut records = compact_exchanges(&log_path, &known)?;
    let pending: Vec<&ComparisonPair> = ds.pairs.iter().filter(|p| !records.contains_key(&p.pair_id)).collect();
    log::info!("{} pair(s) done, {} to go", records.len(), pending.len());

    let file = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| CliError::io(&log_path, e))?;
    let mut out = std::io::BufWriter::new(file);
    let next = AtomicUsize::new(0);
    let mut attempted = 0;
    let mut write_error = None;
    let (tx, rx) = mpsc::channel::<RunRecord>();
    std::thread::scope(|s| {
        for _ in 0..cfg.run.workers.min(pending.len()) {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(pair) = pending.get(i) else { break };
                if tx.send(process(ds, pair, cfg, transport)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // Single writer: one line per finished pair, flushed so an
        // interruption loses at most the pair in flight.
        for rec in rx {
            attempted += 1;
            let line = serde_json::to_string(&rec).expect("records serialize");
            if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
                // Leaving the loop drops the receiver, which stops the workers.
                write_error = Some(CliError::io(&log_path, e));
                break;
            }
            records.insert(rec.pair_id.clone(), rec);
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let (table, score_warnings) = score_table(&ds.pairs, &records, &cfg.scoring);
    write_file(&cfg.output_dir.join(SCORES_FILE), &table.to_csv())?;
    let mut summary = RunSummary {
        pairs: ds.pairs.len(),
        score_warnings,
        ..Default::default()
    };
    for p in &ds.pairs {
        match records.get(&p.pair_id).map(|r| r.outcome) {
            Some(Outcome::Scored) => summary.scored += 1,
            Some(Outcome::Refused) => summary.refused += 1,
            Some(Outcome::Malformed) => summary.malformed += 1,
            Some(Outcome::Failed) | None => summary.failed += 1,
        }
    }
    let json = serde_json::to_vec_pretty(&summary).expect("summary serializes");
    write_file(&cfg.output_dir.join(SUMMARY_FILE), &json)?;
    if attempted > 0 && summary.failed == attempted && summary.failed == summary.pairs {
        return Err(CliError::transport(format!("all {attempted} comparison(s) failed; see {}", log_path.display())));
    }
    Ok(summary)
}
