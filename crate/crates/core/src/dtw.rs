//! Dynamic time warping baseline verifier.
//!
//! Features per sample are normalized position and its first difference,
//! each channel z-scored over the series. Distances are path-length
//! normalized and mapped to a similarity with `exp(-d)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{self, NormalizedRecord, SignalError, SignatureRecord, StrokeGapPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DtwError {
    #[error("series is empty")]
    EmptySeries,
    #[error("need at least 2 samples, got {0}")]
    TooShort(usize),
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no warping path fits inside the band")]
    NoPath,
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Channels per row produced by [`derive_features`].
pub const FEATURE_DIM: usize = 4;

/// Fixed-width rows of features, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    dim: usize,
    values: Vec<f64>,
}

impl FeatureSeries {
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, DtwError> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut values = Vec::with_capacity(dim * rows.len());
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(DtwError::DimensionMismatch(dim, r.len()));
            }
            values.extend_from_slice(r);
        }
        Ok(FeatureSeries { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1))
    }
}

/// Z-score in place; channels with (numerically) zero spread become zeros.
fn standardize(channel: &mut [f64]) {
    let n = channel.len() as f64;
    let mean = channel.iter().sum::<f64>() / n;
    let var = channel.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd <= 1e-12 * mean.abs().max(1.0) {
        channel.iter_mut().for_each(|v| *v = 0.0);
    } else {
        channel.iter_mut().for_each(|v| *v = (*v - mean) / sd);
    }
}

fn differences(v: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    d.insert(0, d[0]);
    d
}

/// Rows `[x, y, dx, dy]`; the first difference is repeated to pad row 0.
pub fn derive_features(record: &NormalizedRecord) -> Result<FeatureSeries, DtwError> {
    let n = record.points.len();
    if n < 2 {
        return Err(DtwError::TooShort(n));
    }
    let xs: Vec<f64> = record.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = record.points.iter().map(|p| p.y).collect();
    let mut channels = [differences(&xs), differences(&ys), xs, ys];
    channels.rotate_left(2);
    for c in &mut channels {
        standardize(c);
    }
    let rows: Vec<[f64; FEATURE_DIM]> = (0..n).map(|i| [channels[0][i], channels[1][i], channels[2][i], channels[3][i]]).collect();
    FeatureSeries::from_rows(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub distance: f64,
    pub path_length: usize,
    pub normalized_distance: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwOptions {
    /// Sakoe-Chiba half-width. Widened to the length difference when
    /// narrower, so a path always exists.
    pub window: Option<usize>,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn dtw_distance(a: &FeatureSeries, b: &FeatureSeries) -> Result<DtwResult, DtwError> {
    dtw_distance_with(a, b, &DtwOptions::default())
}

/// Boundary-anchored DTW with steps (1,1), (1,0), (0,1).
///
/// Cells hold the optimal cumulative cost and the length of the path that
/// reaches them; equal costs prefer the diagonal, then advancing in `a`,
/// then advancing in `b`.
pub fn dtw_distance_with(a: &FeatureSeries, b: &FeatureSeries, opts: &DtwOptions) -> Result<DtwResult, DtwError> {
    if a.is_empty() || b.is_empty() {
        return Err(DtwError::EmptySeries);
    }
    if a.dim() != b.dim() {
        return Err(DtwError::DimensionMismatch(a.dim(), b.dim()));
    }
    let (n, m) = (a.len(), b.len());
    let window = opts.window.map(|w| w.max(n.abs_diff(m)));
    let inside = |i: usize, j: usize| window.is_none_or(|w| i.abs_diff(j) <= w);

    const UNREACHED: (f64, usize) = (f64::INFINITY, 0);
    let mut prev = vec![UNREACHED; m];
    let mut cur = vec![UNREACHED; m];
    for i in 0..n {
        for j in 0..m {
            if !inside(i, j) {
                cur[j] = UNREACHED;
                continue;
            }
            let cost = euclidean(a.row(i), b.row(j));
            let best = if i == 0 && j == 0 {
                (0.0, 0)
            } else {
                let candidates = [
                    if i > 0 && j > 0 { prev[j - 1] } else { UNREACHED },
                    if i > 0 { prev[j] } else { UNREACHED },
                    if j > 0 { cur[j - 1] } else { UNREACHED },
                ];
                candidates.into_iter().fold(UNREACHED, |acc, c| if c.0 < acc.0 { c } else { acc })
            };
            cur[j] = (best.0 + cost, best.1 + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (distance, path_length) = prev[m - 1];
    if !distance.is_finite() {
        return Err(DtwError::NoPath);
    }
    Ok(DtwResult {
        distance,
        path_length,
        normalized_distance: distance / path_length as f64,
    })
}

/// Similarity in (0, 1]: `exp(-normalized_distance)`.
pub fn similarity(result: &DtwResult) -> f64 {
    (-result.normalized_distance).exp()
}

/// Baseline score for a reference/probe pair of raw records.
pub fn dtw_score(reference: &SignatureRecord, probe: &SignatureRecord) -> Result<f64, DtwError> {
    dtw_score_with(reference, probe, &DtwOptions::default())
}

pub fn dtw_score_with(reference: &SignatureRecord, probe: &SignatureRecord, opts: &DtwOptions) -> Result<f64, DtwError> {
    let features = |r: &SignatureRecord| -> Result<FeatureSeries, DtwError> {
        derive_features(&signal::normalize(r, &StrokeGapPolicy::default())?)
    };
    let result = dtw_distance_with(&features(reference)?, &features(probe)?, opts)?;
    Ok(similarity(&result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{InputKind, SamplePoint};
    use proptest::prelude::*;

    fn series(v: &[f64]) -> FeatureSeries {
        FeatureSeries::from_rows(&v.iter().map(|&x| [x]).collect::<Vec<_>>()).unwrap()
    }

    /// Minimum cost over every monotone boundary-anchored path, by plain
    /// recursion without memoization.
    fn brute_force(a: &[f64], b: &[f64]) -> f64 {
        fn go(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let c = (a[i] - b[j]).abs();
            if i == 0 && j == 0 {
                return c;
            }
            let mut best = f64::INFINITY;
            if i > 0 && j > 0 {
                best = best.min(go(a, b, i - 1, j - 1));
            }
            if i > 0 {
                best = best.min(go(a, b, i - 1, j));
            }
            if j > 0 {
                best = best.min(go(a, b, i, j - 1));
            }
            c + best
        }
        go(a, b, a.len() - 1, b.len() - 1)
    }

    fn normalized(points: &[(f64, f64)]) -> NormalizedRecord {
        let r = SignatureRecord::new(
            "t",
            InputKind::Finger,
            points.iter().enumerate().map(|(i, &(x, y))| SamplePoint::new(x, y, i as f64, 0.0)).collect(),
        );
        signal::normalize(&r, &StrokeGapPolicy::default()).unwrap()
    }

    #[test]
    fn identity_is_zero_along_diagonal() {
        let a = series(&[0.0, 3.0, 1.0, 2.0]);
        let r = dtw_distance(&a, &a).unwrap();
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path_length, 4);
    }

    #[test]
    fn warp_absorbs_duplicate() {
        let r = dtw_distance(&series(&[0.0, 1.0]), &series(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(r.distance, brute_force(&[0.0, 1.0], &[0.0, 0.0, 1.0]));
        assert_eq!(r.distance, 0.0);
        assert_eq!(r.path_length, 3);
    }

    #[test]
    fn single_row_probe() {
        let r = dtw_distance(&series(&[0.0, 2.0]), &series(&[1.0])).unwrap();
        assert_eq!(r.distance, brute_force(&[0.0, 2.0], &[1.0]));
        assert_eq!(r.distance, 2.0);
        assert_eq!(r.path_length, 2);
        assert_eq!(r.normalized_distance, 1.0);
        assert!((similarity(&r) - 0.36787944117144233).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        let empty = FeatureSeries::from_rows::<[f64; 1]>(&[]).unwrap();
        assert_eq!(dtw_distance(&empty, &series(&[1.0])), Err(DtwError::EmptySeries));
        let two = FeatureSeries::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(matches!(dtw_distance(&two, &series(&[1.0])), Err(DtwError::DimensionMismatch(2, 1))));
        assert_eq!(derive_features(&normalized(&[(1.0, 1.0)])), Err(DtwError::TooShort(1)));
        assert!(FeatureSeries::from_rows(&[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn band_matches_full_dp_when_wide() {
        let a = series(&[0.0, 1.0, 2.0, 1.0, 0.0, 2.0]);
        let b = series(&[0.0, 2.0, 2.0, 0.0]);
        let full = dtw_distance(&a, &b).unwrap();
        let banded = dtw_distance_with(&a, &b, &DtwOptions { window: Some(10) }).unwrap();
        assert_eq!(full, banded);
        let narrow = dtw_distance_with(&a, &b, &DtwOptions { window: Some(0) }).unwrap();
        assert!(narrow.distance >= full.distance);
    }

    #[test]
    fn straight_line_has_zero_difference_channels() {
        let f = derive_features(&normalized(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])).unwrap();
        assert_eq!(f.len(), 3);
        for row in f.rows() {
            assert_eq!(&row[2..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn mirrored_record_features() {
        // Hand computation for (0,0),(1,2),(3,1),(4,4) and its x-mirror.
        // Normalized x = [0, .25, .75, 1] (scale 4); mirrored x = 1 - x.
        // x: mean .5, population sd sqrt(.15625); dx = [.25,.25,.5,.25]:
        // mean .3125, sd sqrt(.01171875).
        let base = derive_features(&normalized(&[(0.0, 0.0), (1.0, 2.0), (3.0, 1.0), (4.0, 4.0)])).unwrap();
        let mirror = derive_features(&normalized(&[(0.0, 0.0), (-1.0, 2.0), (-3.0, 1.0), (-4.0, 4.0)])).unwrap();
        let sx = 0.15625f64.sqrt();
        let sdx = 0.01171875f64.sqrt();
        let expected_x = [-0.5 / sx, -0.25 / sx, 0.25 / sx, 0.5 / sx];
        let expected_dx = [-0.0625 / sdx, -0.0625 / sdx, 0.1875 / sdx, -0.0625 / sdx];
        for i in 0..4 {
            assert!((base.row(i)[0] - expected_x[i]).abs() < 1e-12);
            assert!((base.row(i)[2] - expected_dx[i]).abs() < 1e-12);
            // Reflection negates the x channels and leaves the y channels.
            assert!((mirror.row(i)[0] + expected_x[i]).abs() < 1e-12);
            assert!((mirror.row(i)[2] + expected_dx[i]).abs() < 1e-12);
            assert_eq!(mirror.row(i)[1], base.row(i)[1]);
            assert_eq!(mirror.row(i)[3], base.row(i)[3]);
        }
    }

    #[test]
    fn identical_records_score_one() {
        let r = SignatureRecord::new(
            "a",
            InputKind::Stylus,
            (0..20).map(|i| SamplePoint::new(i as f64, ((i * 7) % 5) as f64, i as f64 * 10.0, 100.0 + i as f64)).collect(),
        );
        assert_eq!(dtw_score(&r, &r).unwrap(), 1.0);
    }

    #[test]
    fn standardized_channels() {
        let f = derive_features(&normalized(&[(0.0, 0.0), (1.0, 3.0), (5.0, 1.0), (6.0, 7.0), (2.0, 2.0)])).unwrap();
        for c in 0..FEATURE_DIM {
            let col: Vec<f64> = f.rows().map(|r| r[c]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
        }
    }

    fn small_series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-3.0..3.0f64, 1..9)
    }

    proptest! {
        #[test]
        fn symmetric(a in small_series(), b in small_series()) {
            let (sa, sb) = (series(&a), series(&b));
            prop_assert_eq!(dtw_distance(&sa, &sb).unwrap().distance, dtw_distance(&sb, &sa).unwrap().distance);
        }

        #[test]
        fn matches_brute_force_on_reals(a in small_series(), b in small_series()) {
            let d = dtw_distance(&series(&a), &series(&b)).unwrap();
            prop_assert!((d.distance - brute_force(&a, &b)).abs() < 1e-9);
            prop_assert!(d.path_length >= a.len().max(b.len()));
            prop_assert!(d.path_length < a.len() + b.len());
        }

        #[test]
        fn appending_last_row_costs_at_most_one_diagonal_step(a in small_series(), b in small_series()) {
            let before = dtw_distance(&series(&a), &series(&b)).unwrap();
            let step = (a[a.len() - 1] - b[b.len() - 1]).abs();
            let (mut a2, mut b2) = (a.clone(), b.clone());
            a2.push(a[a.len() - 1]);
            b2.push(b[b.len() - 1]);
            let after = dtw_distance(&series(&a2), &series(&b2)).unwrap();
            prop_assert!(after.distance <= before.distance + step + 1e-12);
            prop_assert!(after.normalized_distance <= before.normalized_distance + step + 1e-12);
        }
    }
}
