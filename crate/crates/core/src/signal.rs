//! Kinematic sample types and the normalization steps shared by rendering
//! and the DTW baseline.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("signature record has no sample points")]
    EmptyRecord,
    #[error("pressure is undefined for finger input")]
    KindMismatch,
}

/// Capture device for a signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputKind {
    Stylus,
    Finger,
}

/// One raw sample in device units.
///
/// `t` is in milliseconds. A pressure of zero means pen-up (stylus) or
/// undefined (finger). `pen_down` is only set when the source file carries
/// an explicit pen-state column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pen_down: Option<bool>,
}

impl SamplePoint {
    pub fn new(x: f64, y: f64, t: f64, p: f64) -> Self {
        SamplePoint {
            x,
            y,
            t,
            p,
            pen_down: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureRecord {
    pub subject_id: String,
    pub sample_points: Vec<SamplePoint>,
    pub input_kind: InputKind,
    pub source_path: String,
}

impl SignatureRecord {
    pub fn new(subject_id: impl Into<String>, input_kind: InputKind, points: Vec<SamplePoint>) -> Self {
        SignatureRecord {
            subject_id: subject_id.into(),
            sample_points: points,
            input_kind,
            source_path: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sample_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_points.is_empty()
    }

    /// Whether sample `i` is pen-down under the record's input kind.
    pub fn is_pen_down(&self, i: usize) -> bool {
        let s = &self.sample_points[i];
        if let Some(down) = s.pen_down {
            return down;
        }
        match self.input_kind {
            InputKind::Stylus => s.p > 0.0,
            InputKind::Finger => true,
        }
    }
}

/// Inclusive index range of a contiguous pen-down run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stroke {
    pub start: usize,
    pub end: usize,
}

impl Stroke {
    pub fn sample_count(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn indices(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrokeGapPolicy {
    /// Pen-down runs are split where consecutive timestamps differ by more
    /// than this many milliseconds.
    pub max_gap_ms: f64,
}

impl Default for StrokeGapPolicy {
    fn default() -> Self {
        StrokeGapPolicy { max_gap_ms: 150.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRecord {
    pub points: Vec<NormalizedPoint>,
    pub pen_strokes: Vec<Stroke>,
}

/// Axis-aligned bounding box in device units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn of(points: &[SamplePoint]) -> Option<Bounds> {
        let first = points.first()?;
        let mut b = Bounds {
            min_x: first.x,
            max_x: first.x,
            min_y: first.y,
            max_y: first.y,
        };
        for s in &points[1..] {
            b.min_x = b.min_x.min(s.x);
            b.max_x = b.max_x.max(s.x);
            b.min_y = b.min_y.min(s.y);
            b.max_y = b.max_y.max(s.y);
        }
        Some(b)
    }

    pub fn union(&self, other: &Bounds) -> Bounds {
        Bounds {
            min_x: self.min_x.min(other.min_x),
            max_x: self.max_x.max(other.max_x),
            min_y: self.min_y.min(other.min_y),
            max_y: self.max_y.max(other.max_y),
        }
    }
}

/// Aspect-preserving min-max scaling of (x, y) into the unit square.
///
/// The longer axis spans [0, 1]; a zero-extent axis maps to 0.5.
pub fn normalize_spatial(record: &SignatureRecord) -> Result<Vec<(f64, f64)>, SignalError> {
    let bounds = Bounds::of(&record.sample_points).ok_or(SignalError::EmptyRecord)?;
    Ok(normalize_spatial_within(record, &bounds))
}

/// Same as [`normalize_spatial`] but against caller-supplied bounds, so two
/// records can share one scale.
pub fn normalize_spatial_within(record: &SignatureRecord, bounds: &Bounds) -> Vec<(f64, f64)> {
    let ex = bounds.max_x - bounds.min_x;
    let ey = bounds.max_y - bounds.min_y;
    let scale = ex.max(ey);
    record
        .sample_points
        .iter()
        .map(|s| {
            let x = if ex > 0.0 { (s.x - bounds.min_x) / scale } else { 0.5 };
            let y = if ey > 0.0 { (s.y - bounds.min_y) / scale } else { 0.5 };
            (x, y)
        })
        .collect()
}

/// Min-max pressure normalization over pen-down samples.
///
/// The lower bound is the smallest strictly positive pressure; zero-pressure
/// samples stay at exactly 0.
pub fn normalize_pressure(record: &SignatureRecord) -> Result<Vec<f64>, SignalError> {
    if record.input_kind == InputKind::Finger {
        return Err(SignalError::KindMismatch);
    }
    if record.is_empty() {
        return Err(SignalError::EmptyRecord);
    }
    let positive = record.sample_points.iter().map(|s| s.p).filter(|&p| p > 0.0);
    let (lo, hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p), hi.max(p))
    });
    Ok(record
        .sample_points
        .iter()
        .map(|s| {
            if s.p <= 0.0 {
                0.0
            } else if hi > lo {
                ((s.p - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                1.0
            }
        })
        .collect())
}

/// Contiguous pen-down runs, additionally split at timing gaps.
pub fn segment_strokes(record: &SignatureRecord, policy: &StrokeGapPolicy) -> Vec<Stroke> {
    let mut strokes = Vec::new();
    let mut current: Option<Stroke> = None;
    for i in 0..record.len() {
        if !record.is_pen_down(i) {
            strokes.extend(current.take());
            continue;
        }
        current = match current {
            Some(mut s) => {
                let dt = record.sample_points[i].t - record.sample_points[i - 1].t;
                if s.end == i - 1 && dt <= policy.max_gap_ms {
                    s.end = i;
                    Some(s)
                } else {
                    strokes.push(s);
                    Some(Stroke { start: i, end: i })
                }
            }
            None => Some(Stroke { start: i, end: i }),
        };
    }
    strokes.extend(current);
    strokes
}

/// Full normalization: spatial scaling, pressure (stylus only; finger
/// pressure stays 0) and stroke segmentation.
pub fn normalize(record: &SignatureRecord, policy: &StrokeGapPolicy) -> Result<NormalizedRecord, SignalError> {
    let bounds = Bounds::of(&record.sample_points).ok_or(SignalError::EmptyRecord)?;
    normalize_within(record, &bounds, policy)
}

pub fn normalize_within(
    record: &SignatureRecord,
    bounds: &Bounds,
    policy: &StrokeGapPolicy,
) -> Result<NormalizedRecord, SignalError> {
    if record.is_empty() {
        return Err(SignalError::EmptyRecord);
    }
    let xy = normalize_spatial_within(record, bounds);
    let pressure = match record.input_kind {
        InputKind::Stylus => normalize_pressure(record)?,
        InputKind::Finger => vec![0.0; record.len()],
    };
    let points = xy
        .into_iter()
        .zip(pressure)
        .zip(&record.sample_points)
        .map(|(((x, y), p), s)| NormalizedPoint { x, y, t: s.t, p })
        .collect();
    Ok(NormalizedRecord {
        points,
        pen_strokes: segment_strokes(record, policy),
    })
}
