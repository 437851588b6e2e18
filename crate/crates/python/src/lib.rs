//! Python bindings: signatures, rendering, scoring, the DTW baseline, EER
//! evaluation and the command-line pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};
use sigverify_core::dtw::{dtw_score_with, DtwOptions};
use sigverify_core::eval::{det_from_scores, eer_from_det};
use sigverify_core::ingest::{load_signature, synth_dataset, ColumnSchema, Dataset as CoreDataset};
use sigverify_core::render::{encode_png, render_record, RenderConfig};
use sigverify_core::scoring::{score_from_certainty as certainty_score, score_from_logprob as logprob_score, TokenClassSets};
use sigverify_core::signal::{InputKind, SamplePoint, SignatureRecord};
use sigverify_core::vlm::{parse_verdict, parse_verdict_json, TokenLogProb, VerdictSlot};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn kind_from_str(kind: &str) -> PyResult<InputKind> {
    match kind.to_ascii_lowercase().as_str() {
        "stylus" => Ok(InputKind::Stylus),
        "finger" => Ok(InputKind::Finger),
        other => Err(PyValueError::new_err(format!("input kind must be 'stylus' or 'finger', not {other:?}"))),
    }
}

fn kind_str(kind: InputKind) -> &'static str {
    match kind {
        InputKind::Stylus => "stylus",
        InputKind::Finger => "finger",
    }
}

/// One online signature: samples of (x, y, t_ms, pressure).
#[pyclass(name = "Signature", module = "sigverify", frozen)]
#[derive(Clone)]
pub struct PySignature {
    inner: SignatureRecord,
}

#[pymethods]
impl PySignature {
    #[new]
    #[pyo3(signature = (points, kind = "stylus", subject_id = ""))]
    fn new(points: Vec<(f64, f64, f64, f64)>, kind: &str, subject_id: &str) -> PyResult<Self> {
        if points.is_empty() {
            return Err(PyValueError::new_err("a signature needs at least one point"));
        }
        let pts = points.into_iter().map(|(x, y, t, p)| SamplePoint::new(x, y, t, p)).collect();
        Ok(PySignature {
            inner: SignatureRecord::new(subject_id, kind_from_str(kind)?, pts),
        })
    }

    /// Read a signature file (count header, then `x y t p` rows).
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let dir = path.parent().map(PathBuf::from).unwrap_or_default();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| PyValueError::new_err("path has no file name"))?;
        let inner = load_signature(&dir, name, &ColumnSchema::default()).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(PySignature { inner })
    }

    #[getter]
    fn subject_id(&self) -> &str {
        &self.inner.subject_id
    }

    #[getter]
    fn kind(&self) -> &'static str {
        kind_str(self.inner.input_kind)
    }

    #[getter]
    fn points(&self) -> Vec<(f64, f64, f64, f64)> {
        self.inner.sample_points.iter().map(|p| (p.x, p.y, p.t, p.p)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Signature(subject_id={:?}, kind={:?}, points={})", self.inner.subject_id, self.kind(), self.inner.len())
    }

    /// Render to an 8-bit grayscale PNG.
    #[pyo3(signature = (canvas_px = 512, antialias = false))]
    fn render_png<'py>(&self, py: Python<'py>, canvas_px: u32, antialias: bool) -> PyResult<Bound<'py, PyBytes>> {
        let cfg = RenderConfig {
            canvas_px,
            antialias,
            ..RenderConfig::default()
        };
        let img = render_record(&self.inner, &cfg).map_err(value_err)?;
        let png = encode_png(&img).map_err(value_err)?;
        Ok(PyBytes::new(py, &png))
    }

    /// Render and return `(width, height, pixels)` with row-major pixels.
    #[pyo3(signature = (canvas_px = 512))]
    fn render_pixels<'py>(&self, py: Python<'py>, canvas_px: u32) -> PyResult<(u32, u32, Bound<'py, PyBytes>)> {
        let cfg = RenderConfig {
            canvas_px,
            ..RenderConfig::default()
        };
        let img = render_record(&self.inner, &cfg).map_err(value_err)?;
        Ok((img.width, img.height, PyBytes::new(py, &img.pixels)))
    }
}

/// A protocol file together with the signatures it references.
#[pyclass(name = "Dataset", module = "sigverify", frozen)]
pub struct PyDataset {
    inner: CoreDataset,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(protocol: PathBuf, signatures: PathBuf) -> PyResult<Self> {
        let inner = CoreDataset::load(&protocol, &signatures, &ColumnSchema::default()).map_err(|errors| {
            let listing: Vec<String> = errors.iter().map(|e| e.to_string()).collect();
            PyIOError::new_err(listing.join("\n"))
        })?;
        Ok(PyDataset { inner })
    }

    /// `(pair_id, reference, probe, label, task)` per comparison.
    #[getter]
    fn pairs(&self) -> Vec<(String, String, String, String, Option<String>)> {
        self.inner
            .pairs
            .iter()
            .map(|p| {
                (
                    p.pair_id.clone(),
                    p.reference_path.clone(),
                    p.probe_path.clone(),
                    p.label.to_string(),
                    p.task.map(|t| t.to_string()),
                )
            })
            .collect()
    }

    fn signature(&self, name: &str) -> PyResult<PySignature> {
        self.inner
            .records
            .get(name)
            .map(|r| PySignature { inner: r.clone() })
            .ok_or_else(|| PyValueError::new_err(format!("no signature named {name:?}")))
    }

    /// DTW similarity for every pair, `None` where scoring failed.
    #[pyo3(signature = (window = None))]
    fn dtw_scores(&self, py: Python<'_>, window: Option<usize>) -> Vec<(String, Option<f64>)> {
        let opts = DtwOptions { window };
        py.detach(|| {
            self.inner
                .pairs
                .iter()
                .map(|p| {
                    let s = dtw_score_with(&self.inner.records[&p.reference_path], &self.inner.records[&p.probe_path], &opts).ok();
                    (p.pair_id.clone(), s)
                })
                .collect()
        })
    }

    fn __len__(&self) -> usize {
        self.inner.pairs.len()
    }
}

/// DTW similarity in (0, 1] between two signatures.
#[pyfunction]
#[pyo3(signature = (reference, probe, window = None))]
fn dtw_score(reference: &PySignature, probe: &PySignature, window: Option<usize>) -> PyResult<f64> {
    dtw_score_with(&reference.inner, &probe.inner, &DtwOptions { window }).map_err(value_err)
}

/// Similarity from a verdict token and its log-probability.
#[pyfunction]
fn score_from_logprob(token: &str, logprob: f64) -> PyResult<f64> {
    let tok = TokenLogProb {
        token_text: token.to_string(),
        logprob,
        position_tag: VerdictSlot::FinalVerdict,
    };
    logprob_score(&tok, &TokenClassSets::default()).map_err(value_err)
}

/// Similarity from a final verdict ("Same Identity" / "Different Identity")
/// and a 0-100 certainty.
#[pyfunction]
fn score_from_certainty(verdict: &str, certainty: i64) -> PyResult<f64> {
    let v = parse_verdict(verdict).ok_or_else(|| PyValueError::new_err(format!("unknown verdict {verdict:?}")))?;
    certainty_score(v, certainty).map_err(value_err)
}

/// Parse a model reply into a dict with both verdicts, reasoning and certainty.
#[pyfunction]
fn parse_response<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyDict>> {
    let v = parse_verdict_json(text).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("initial_verdict", v.initial_verdict.as_str())?;
    d.set_item("reasoning", v.reasoning)?;
    d.set_item("final_verdict", v.final_verdict.as_str())?;
    d.set_item("certainty", v.certainty)?;
    Ok(d)
}

/// Equal error rate in percent and the threshold where it occurs.
#[pyfunction]
fn eer(genuine: Vec<f64>, impostor: Vec<f64>) -> PyResult<(f64, f64)> {
    let det = det_from_scores(&genuine, &impostor).map_err(value_err)?;
    eer_from_det(&det).map_err(value_err)
}

/// DET points as `(threshold, fmr, fnmr)`, thresholds ascending.
#[pyfunction]
fn det_curve(genuine: Vec<f64>, impostor: Vec<f64>) -> PyResult<Vec<(f64, f64, f64)>> {
    let det = det_from_scores(&genuine, &impostor).map_err(value_err)?;
    Ok(det.into_iter().map(|p| (p.threshold, p.fmr, p.fnmr)).collect())
}

/// Write a seeded synthetic dataset under `out_dir` and return its counts.
#[pyfunction]
#[pyo3(signature = (out_dir, seed = 42, subjects = 8, genuine = 4, skilled = 3))]
fn synth(out_dir: PathBuf, seed: u64, subjects: usize, genuine: usize, skilled: usize) -> PyResult<BTreeMap<String, usize>> {
    let ds = synth_dataset(seed, subjects, genuine, skilled).map_err(value_err)?;
    ds.write(&out_dir, &ColumnSchema::default()).map_err(|e| PyIOError::new_err(e.to_string()))?;
    let mut out: BTreeMap<String, usize> = ds.pair_counts_by_label().into_iter().map(|(l, n)| (l.to_string(), n)).collect();
    out.insert("signatures".into(), ds.records.len());
    out.insert("pairs".into(), ds.pairs.len());
    Ok(out)
}

/// Run the command-line tool with `argv` (without the program name) and
/// return its exit status.
#[pyfunction]
fn main(py: Python<'_>, argv: Vec<String>) -> i32 {
    let args: Vec<String> = std::iter::once("sigverify".to_string()).chain(argv).collect();
    py.detach(|| sigverify_cli::run_from_args(args))
}

#[pymodule]
fn sigverify(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySignature>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(dtw_score, m)?)?;
    m.add_function(wrap_pyfunction!(score_from_logprob, m)?)?;
    m.add_function(wrap_pyfunction!(score_from_certainty, m)?)?;
    m.add_function(wrap_pyfunction!(parse_response, m)?)?;
    m.add_function(wrap_pyfunction!(eer, m)?)?;
    m.add_function(wrap_pyfunction!(det_curve, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(main, m)?)?;
    Ok(())
}
