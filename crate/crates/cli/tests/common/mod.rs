//! Shared fixtures for the replay cassette and the brute-force EER oracle.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sigverify_cli::config::TransportConfig;
use sigverify_cli::RunConfig;
use sigverify_core::ingest::{Label, Task};

pub const FIXTURE_SEED: u64 = 42;
pub const FIXTURE_SUBJECTS: usize = 4;
pub const FIXTURE_GENUINE: usize = 3;
pub const FIXTURE_SKILLED: usize = 2;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

pub fn cassette_path() -> PathBuf {
    data_dir().join("cassette.jsonl")
}

pub fn expected_path() -> PathBuf {
    data_dir().join("expected_eer.json")
}

/// Config for the fixture dataset rooted at `root`, replaying the committed
/// cassette.
pub fn fixture_config(root: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.output_dir = root.join("out");
    cfg.synth.seed = FIXTURE_SEED;
    cfg.synth.subjects = FIXTURE_SUBJECTS;
    cfg.synth.genuine = FIXTURE_GENUINE;
    cfg.synth.skilled = FIXTURE_SKILLED;
    cfg.synth.out_dir = root.join("data");
    cfg.dataset.protocol = root.join("data/protocol.txt");
    cfg.dataset.signatures = root.join("data/signatures");
    cfg.transport = TransportConfig::Replay { cassette: cassette_path() };
    cfg.run.workers = 1;
    cfg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Special {
    None,
    /// The model declines to answer.
    Refusal,
    /// First reply is not JSON; the repair turn gets a proper answer.
    Repaired,
    /// The provider returns no token log-probabilities.
    NoLogprobs,
}

/// One hand-authored model answer. `same_*` is true for "Same Identity".
#[derive(Debug, Clone, Copy)]
pub struct Authored {
    pub label: Label,
    pub task: Task,
    pub same_v1: bool,
    pub lp_v1: f64,
    pub same_v2: bool,
    pub lp_v2: f64,
    pub certainty: i64,
    pub special: Special,
}

const fn a(label: Label, task: Task, v1: bool, lp_v1: f64, v2: bool, lp_v2: f64, certainty: i64, special: Special) -> Authored {
    Authored {
        label,
        task,
        same_v1: v1,
        lp_v1,
        same_v2: v2,
        lp_v2,
        certainty,
        special,
    }
}

use Label::{Genuine as G, RandomForgery as R, SkilledForgery as K};
use Special::None as N;
use Task::{Task1Stylus as T1, Task2Finger as T2};
const S: bool = true;
const D: bool = false;

/// Answers for the fixture protocol, in pair order.
pub const AUTHORED: [Authored; 24] = [
    a(G, T1, S, -0.05, S, -0.02, 92, N),
    a(G, T1, S, -0.22, S, -0.11, 85, N),
    a(G, T1, D, -0.70, S, -0.40, 60, N),
    a(K, T1, S, -0.10, S, -0.36, 70, N),
    a(K, T1, D, -0.30, D, -0.15, 80, N),
    a(R, T1, D, -0.01, D, -0.005, 97, N),
    a(G, T2, S, -0.35, S, -0.60, 65, N),
    a(G, T2, S, -0.15, D, -0.90, 55, Special::Refusal),
    a(G, T2, S, -0.08, S, -0.04, 88, Special::Repaired),
    a(K, T2, S, -0.45, S, -0.25, 75, N),
    a(K, T2, D, -0.20, D, -0.10, 70, Special::NoLogprobs),
    a(R, T2, D, -0.03, D, -0.02, 95, N),
    a(G, T1, S, -0.12, S, -0.09, 90, N),
    a(G, T1, S, -0.50, D, -0.55, 58, N),
    a(G, T1, S, -0.02, S, -0.01, 96, N),
    a(K, T1, S, -0.20, D, -0.60, 62, N),
    a(K, T1, D, -0.08, D, -0.05, 90, N),
    a(R, T1, D, -0.002, D, -0.001, 99, N),
    a(G, T2, S, -0.28, S, -0.18, 78, N),
    a(G, T2, D, -0.40, D, -0.65, 60, N),
    a(G, T2, S, -0.06, S, -0.03, 93, N),
    a(K, T2, S, -0.14, S, -0.10, 85, N),
    a(K, T2, D, -0.90, S, -0.80, 52, N),
    a(R, T2, D, -0.04, D, -0.06, 94, N),
];

fn token_score(same: bool, lp: f64) -> f64 {
    if same {
        lp.exp()
    } else {
        1.0 - lp.exp()
    }
}

impl Authored {
    /// Expected `[s_v1, s_v2, s_text]`, `None` where the channel is absent.
    pub fn scores(&self) -> [Option<f64>; 3] {
        let text = if self.same_v2 {
            self.certainty as f64 / 100.0
        } else {
            1.0 - self.certainty as f64 / 100.0
        };
        match self.special {
            Special::Refusal => [None, None, None],
            Special::NoLogprobs => [None, None, Some(text)],
            _ => [Some(token_score(self.same_v1, self.lp_v1)), Some(token_score(self.same_v2, self.lp_v2)), Some(text)],
        }
    }
}

/// EER in percent by direct counting at every candidate threshold:
/// each distinct score plus one point beyond either end.
pub fn brute_force_eer(genuine: &[f64], impostor: &[f64]) -> Option<f64> {
    if genuine.is_empty() || impostor.is_empty() {
        return None;
    }
    let mut thresholds: Vec<f64> = genuine.iter().chain(impostor).copied().collect();
    let lo = thresholds.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = thresholds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    thresholds.push(lo - 1.0);
    thresholds.push(hi + 1.0);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    let rates: Vec<(f64, f64)> = thresholds
        .iter()
        .map(|&t| {
            let accepted = impostor.iter().filter(|&&s| s >= t).count();
            let rejected = genuine.iter().filter(|&&s| s < t).count();
            (accepted as f64 / impostor.len() as f64, rejected as f64 / genuine.len() as f64)
        })
        .collect();
    if let Some(&(fmr, _)) = rates.iter().find(|(fmr, fnmr)| fmr == fnmr) {
        return Some(100.0 * fmr);
    }
    let k = rates.iter().position(|(fmr, fnmr)| fmr < fnmr)?;
    let ((fa, ra), (fb, rb)) = (rates[k - 1], rates[k]);
    let (da, db) = (fa - ra, fb - rb);
    let alpha = da / (da - db);
    Some(100.0 * (fa + alpha * (fb - fa)))
}

pub const CHANNELS: [&str; 3] = ["s_v1", "s_v2", "s_text"];
pub const TASKS: [Task; 3] = [Task::Task1Stylus, Task::Task2Finger, Task::Task3Combined];
pub const SCENARIOS: [&str; 3] = ["all", "random", "skilled"];

fn in_task(cell: Task, pair: Task) -> bool {
    cell == Task::Task3Combined || cell == pair
}

fn in_scenario(scenario: &str, label: Label) -> bool {
    match scenario {
        "all" => true,
        "random" => label != Label::SkilledForgery,
        _ => label != Label::RandomForgery,
    }
}

/// Oracle EER for every (task, scenario, channel) cell of the fixture.
pub fn expected_cells() -> Vec<(Task, &'static str, &'static str, Option<f64>)> {
    let mut out = Vec::new();
    for task in TASKS {
        for scenario in SCENARIOS {
            for (c, channel) in CHANNELS.iter().enumerate() {
                let (mut genuine, mut impostor) = (Vec::new(), Vec::new());
                for row in AUTHORED.iter().filter(|r| in_task(task, r.task) && in_scenario(scenario, r.label)) {
                    if let Some(s) = row.scores()[c] {
                        if row.label == Label::Genuine {
                            genuine.push(s);
                        } else {
                            impostor.push(s);
                        }
                    }
                }
                out.push((task, scenario, *channel, brute_force_eer(&genuine, &impostor)));
            }
        }
    }
    out
}
