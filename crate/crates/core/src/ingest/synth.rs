//! Seeded synthetic signatures for offline runs and CI.
//!
//! Each subject owns a base trajectory built from a few pen-down strokes,
//! each a sum of low-frequency sinusoids. Genuine samples perturb the base
//! slightly; skilled forgeries perturb it more and warp the timing. Even
//! subjects write with a stylus, odd subjects with a finger.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::protocol::{pair_id_for_line, ComparisonPair, Label, Task};
use super::{Dataset, IngestError};
use crate::signal::{InputKind, SamplePoint, SignatureRecord};

/// Parameter jitter for genuine repetitions.
pub const GENUINE_JITTER: f64 = 0.05;
/// Parameter jitter for skilled forgeries.
pub const SKILLED_JITTER: f64 = 0.25;
/// Amplitude of the monotone timing warp applied to skilled forgeries.
pub const SKILLED_WARP: f64 = 0.2;

const SAMPLE_DT_MS: f64 = 10.0;

#[derive(Debug, Clone)]
struct Harmonic {
    amp: f64,
    freq: f64,
    phase: f64,
}

#[derive(Debug, Clone)]
struct StrokeModel {
    samples: usize,
    x0: f64,
    y0: f64,
    length: f64,
    x_terms: Vec<Harmonic>,
    y_terms: Vec<Harmonic>,
    pressure: Harmonic,
    gap_ms: f64,
}

#[derive(Debug, Clone)]
struct SubjectModel {
    kind: InputKind,
    strokes: Vec<StrokeModel>,
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; libm keeps the transcendental results platform independent.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * PI * u2)
}

fn harmonics(rng: &mut ChaCha8Rng, n: usize, amp: (f64, f64), freq: (f64, f64)) -> Vec<Harmonic> {
    (0..n)
        .map(|_| Harmonic {
            amp: rng.random_range(amp.0..amp.1),
            freq: rng.random_range(freq.0..freq.1),
            phase: rng.random_range(0.0..2.0 * PI),
        })
        .collect()
}

fn subject_model(rng: &mut ChaCha8Rng, kind: InputKind) -> SubjectModel {
    let n_strokes = rng.random_range(2..=4);
    let mut x0 = 0.0;
    let strokes = (0..n_strokes)
        .map(|_| {
            let length = rng.random_range(60.0..140.0);
            let s = StrokeModel {
                samples: rng.random_range(40..80),
                x0,
                y0: rng.random_range(-20.0..20.0),
                length,
                x_terms: harmonics(rng, 3, (5.0, 30.0), (0.5, 3.5)),
                y_terms: harmonics(rng, 3, (10.0, 45.0), (0.5, 3.5)),
                pressure: Harmonic {
                    amp: rng.random_range(100.0..300.0),
                    freq: rng.random_range(0.3..1.5),
                    phase: rng.random_range(0.0..2.0 * PI),
                },
                gap_ms: rng.random_range(200.0..400.0),
            };
            x0 += length + rng.random_range(10.0..40.0);
            s
        })
        .collect();
    SubjectModel { kind, strokes }
}

fn perturb(rng: &mut ChaCha8Rng, h: &[Harmonic], eps: f64) -> Vec<Harmonic> {
    h.iter()
        .map(|t| Harmonic {
            amp: t.amp * (1.0 + eps * gauss(rng)),
            freq: t.freq * (1.0 + 0.5 * eps * gauss(rng)),
            phase: t.phase + eps * gauss(rng),
        })
        .collect()
}

fn eval(h: &[Harmonic], tau: f64) -> f64 {
    h.iter().map(|t| t.amp * libm::sin(2.0 * PI * t.freq * tau + t.phase)).sum()
}

fn round_to(v: f64, step: f64) -> f64 {
    (v / step).round() * step
}

/// One written instance of a subject's signature.
fn sample_instance(rng: &mut ChaCha8Rng, model: &SubjectModel, eps: f64, warp: f64) -> Vec<SamplePoint> {
    let scale = 1.0 + 0.5 * eps * gauss(rng);
    let (dx, dy) = (rng.random_range(0.0..500.0), rng.random_range(0.0..500.0));
    let noise = 0.4 + 4.0 * eps;
    let speed = 1.0 + 0.5 * eps * gauss(rng);
    let mut t = 0.0;
    let mut out = Vec::new();
    for stroke in &model.strokes {
        let xs = perturb(rng, &stroke.x_terms, eps);
        let ys = perturb(rng, &stroke.y_terms, eps);
        let press = perturb(rng, std::slice::from_ref(&stroke.pressure), eps);
        let len = stroke.length * (1.0 + eps * gauss(rng));
        let n = ((stroke.samples as f64) * (1.0 + 0.5 * eps * gauss(rng))).round().max(8.0) as usize;
        let warp_amp = warp * gauss(rng).clamp(-1.5, 1.5);
        for i in 0..n {
            let u = i as f64 / (n - 1) as f64;
            // |warp_amp| <= 0.3 < 1/pi keeps the warp monotone.
            let tau = u + warp_amp * libm::sin(PI * u) / PI;
            let x = stroke.x0 + len * tau + eval(&xs, tau) + noise * gauss(rng);
            let y = stroke.y0 + eval(&ys, tau) + noise * gauss(rng);
            let p = match model.kind {
                InputKind::Stylus => (500.0 + eval(&press, tau)).clamp(40.0, 1023.0).round(),
                InputKind::Finger => 0.0,
            };
            out.push(SamplePoint::new(
                round_to(dx + scale * x, 0.01),
                round_to(dy + scale * y, 0.01),
                t,
                p,
            ));
            t += (SAMPLE_DT_MS * speed).round().max(1.0);
        }
        if model.kind == InputKind::Stylus {
            // Hover samples between strokes.
            let last = *out.last().expect("stroke has samples");
            for k in 1..=2 {
                out.push(SamplePoint::new(last.x + k as f64, last.y, t, 0.0));
                t += SAMPLE_DT_MS;
            }
        }
        t += stroke.gap_ms.round();
    }
    out
}

fn file_name(subject: usize, class: char, index: usize) -> String {
    format!("u{subject:03}_{class}{index:02}.txt")
}

/// Build a seeded synthetic dataset.
///
/// Pairs per subject: every genuine/genuine combination, the first genuine
/// against each skilled forgery, and the first genuine against the last
/// genuine of every other subject sharing the same input kind (any other
/// subject when none does).
pub fn synth_dataset(
    seed: u64,
    n_subjects: usize,
    genuine_per_subject: usize,
    skilled_per_subject: usize,
) -> Result<Dataset, IngestError> {
    if n_subjects < 2 {
        return Err(IngestError::InvalidParams(
            "at least 2 subjects are needed to form random-forgery pairs".into(),
        ));
    }
    if genuine_per_subject < 2 {
        return Err(IngestError::InvalidParams("at least 2 genuine signatures per subject are needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind_of = |s: usize| if s.is_multiple_of(2) { InputKind::Stylus } else { InputKind::Finger };
    let models: Vec<SubjectModel> = (0..n_subjects).map(|s| subject_model(&mut rng, kind_of(s))).collect();

    let mut records = BTreeMap::new();
    for (s, model) in models.iter().enumerate() {
        let subject_id = format!("u{s:03}");
        let mut add = |name: String, points: Vec<SamplePoint>| {
            let mut r = SignatureRecord::new(subject_id.clone(), model.kind, points);
            r.source_path = name.clone();
            records.insert(name, r);
        };
        for g in 1..=genuine_per_subject {
            add(file_name(s, 'g', g), sample_instance(&mut rng, model, GENUINE_JITTER, 0.0));
        }
        for k in 1..=skilled_per_subject {
            add(file_name(s, 's', k), sample_instance(&mut rng, model, SKILLED_JITTER, SKILLED_WARP));
        }
    }

    let mut raw_pairs: Vec<(String, String, Label, Task)> = Vec::new();
    for s in 0..n_subjects {
        let task = Task::from_kinds(kind_of(s), kind_of(s));
        for a in 1..=genuine_per_subject {
            for b in a + 1..=genuine_per_subject {
                raw_pairs.push((file_name(s, 'g', a), file_name(s, 'g', b), Label::Genuine, task));
            }
        }
        for k in 1..=skilled_per_subject {
            raw_pairs.push((file_name(s, 'g', 1), file_name(s, 's', k), Label::SkilledForgery, task));
        }
        let same_kind: Vec<usize> = (0..n_subjects).filter(|&o| o != s && kind_of(o) == kind_of(s)).collect();
        let others = if same_kind.is_empty() {
            (0..n_subjects).filter(|&o| o != s).collect()
        } else {
            same_kind
        };
        for o in others {
            raw_pairs.push((
                file_name(s, 'g', 1),
                file_name(o, 'g', genuine_per_subject),
                Label::RandomForgery,
                Task::from_kinds(kind_of(s), kind_of(o)),
            ));
        }
    }
    let pairs = raw_pairs
        .into_iter()
        .enumerate()
        .map(|(i, (reference_path, probe_path, label, task))| ComparisonPair {
            pair_id: pair_id_for_line(i + 1),
            reference_path,
            probe_path,
            task: Some(task),
            label,
        })
        .collect();
    Dataset::assemble(records, pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_dataset_shape() {
        let ds = synth_dataset(42, 2, 2, 1).unwrap();
        let genuine = ds.records.keys().filter(|k| k.contains("_g")).count();
        let skilled = ds.records.keys().filter(|k| k.contains("_s")).count();
        assert_eq!((genuine, skilled), (4, 2));
        for label in [Label::Genuine, Label::SkilledForgery, Label::RandomForgery] {
            assert!(ds.pairs.iter().any(|p| p.label == label), "missing {label}");
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = synth_dataset(42, 3, 2, 2).unwrap();
        let b = synth_dataset(42, 3, 2, 2).unwrap();
        assert_eq!(a, b);
        let c = synth_dataset(43, 3, 2, 2).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn rejects_single_subject() {
        assert!(matches!(synth_dataset(7, 1, 2, 1), Err(IngestError::InvalidParams(_))));
        assert!(matches!(synth_dataset(7, 3, 1, 1), Err(IngestError::InvalidParams(_))));
    }

    #[test]
    fn modalities_and_tasks() {
        let ds = synth_dataset(1, 4, 2, 1).unwrap();
        assert_eq!(ds.records["u000_g01.txt"].input_kind, InputKind::Stylus);
        assert_eq!(ds.records["u001_g01.txt"].input_kind, InputKind::Finger);
        assert!(ds.records["u001_g01.txt"].sample_points.iter().all(|s| s.p == 0.0));
        for p in &ds.pairs {
            let a = ds.records[&p.reference_path].input_kind;
            let b = ds.records[&p.probe_path].input_kind;
            assert_eq!(p.task, Some(Task::from_kinds(a, b)));
        }
    }

    #[test]
    fn timestamps_non_decreasing() {
        let ds = synth_dataset(9, 2, 3, 2).unwrap();
        for r in ds.records.values() {
            assert!(r.sample_points.windows(2).all(|w| w[0].t <= w[1].t));
            assert!(r.sample_points.iter().all(|s| s.p >= 0.0));
        }
    }
}
