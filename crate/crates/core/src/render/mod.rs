//! Deterministic rasterization of normalized signatures.
//!
//! Stylus strokes are inked by pressure (darker is harder); finger strokes
//! use a single black ink. With `antialias` off the whole path after the
//! coordinate mapping is integer arithmetic.

mod encode;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use self::encode::encode_png;
use crate::signal::{self, Bounds, InputKind, NormalizedRecord, SignalError, SignatureRecord, StrokeGapPolicy};

pub const BACKGROUND: u8 = 255;
/// Width of the blank column between images in side-by-side mode.
pub const SEPARATOR_PX: u32 = 4;
const SUPERSAMPLE: u32 = 4;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid render config: {0}")]
    ConfigInvalid(String),
    #[error("image sizes differ: {0:?} vs {1:?}")]
    SizeMismatch((u32, u32), (u32, u32)),
    #[error("png encoding failed: {0}")]
    EncodeFailure(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Whether each signature is scaled to its own bounding box or both
/// signatures of a pair share one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMode {
    #[default]
    PerSignature,
    SharedPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub canvas_px: u32,
    pub margin_fraction: f64,
    pub stroke_width_px: u32,
    /// Opacity of the lightest pen-down pressure.
    pub ink_floor: f64,
    pub background_value: u8,
    pub antialias: bool,
    pub scale_mode: ScaleMode,
    pub stroke_gap: StrokeGapPolicy,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            canvas_px: 512,
            margin_fraction: 0.05,
            stroke_width_px: 2,
            ink_floor: 0.25,
            background_value: BACKGROUND,
            antialias: false,
            scale_mode: ScaleMode::PerSignature,
            stroke_gap: StrokeGapPolicy::default(),
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::ConfigInvalid(m.to_string()));
        if self.canvas_px < 32 {
            return bad("canvas_px must be at least 32");
        }
        if !(0.0..0.5).contains(&self.margin_fraction) {
            return bad("margin_fraction must lie in [0, 0.5)");
        }
        if self.stroke_width_px < 1 {
            return bad("stroke_width_px must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.ink_floor) {
            return bad("ink_floor must lie in [0, 1]");
        }
        if self.background_value != BACKGROUND {
            return bad("background_value must be 255");
        }
        if !(self.stroke_gap.max_gap_ms > 0.0) {
            return bad("stroke gap must be positive");
        }
        CanvasMapping::new(self)?;
        Ok(())
    }

    /// Short content hash of the config, used for provenance and cache keys.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))[..16].to_string()
    }

    /// Ink value of a stylus segment whose mean normalized pressure is `p`.
    pub fn stylus_ink(&self, p: f64) -> u8 {
        let opacity = self.ink_floor + (1.0 - self.ink_floor) * p.clamp(0.0, 1.0);
        (255.0 * (1.0 - opacity)).round().clamp(0.0, 255.0) as u8
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_id: String,
    pub config_digest: String,
}

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
    pub provenance: Provenance,
}

impl RenderedImage {
    pub fn blank(width: u32, height: u32) -> Self {
        RenderedImage {
            width,
            height,
            pixels: vec![BACKGROUND; (width * height) as usize],
            provenance: Provenance::default(),
        }
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    fn darken(&mut self, x: i64, y: i64, v: u8) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let px = &mut self.pixels[(y as u32 * self.width + x as u32) as usize];
        *px = (*px).min(v);
    }
}

/// Maps unit-square coordinates to pixel centers inside the margin.
#[derive(Debug, Clone, Copy)]
pub struct CanvasMapping {
    origin: i64,
    span: i64,
    brush_lo: i64,
    brush_hi: i64,
}

impl CanvasMapping {
    pub fn new(cfg: &RenderConfig) -> Result<Self, RenderError> {
        Self::scaled(cfg, 1)
    }

    fn scaled(cfg: &RenderConfig, factor: u32) -> Result<Self, RenderError> {
        let canvas = (cfg.canvas_px * factor) as i64;
        let margin = (cfg.margin_fraction * cfg.canvas_px as f64).ceil() as i64 * factor as i64;
        let width = (cfg.stroke_width_px * factor) as i64;
        let (brush_lo, brush_hi) = ((width - 1) / 2, width / 2);
        let origin = margin + brush_lo;
        let span = canvas - 1 - margin - brush_hi - origin;
        if span < 1 {
            return Err(RenderError::ConfigInvalid("stroke width and margin leave no drawable area".into()));
        }
        Ok(CanvasMapping {
            origin,
            span,
            brush_lo,
            brush_hi,
        })
    }

    pub fn pixel(&self, x: f64, y: f64) -> (i64, i64) {
        let map = |v: f64| self.origin + (v.clamp(0.0, 1.0) * self.span as f64).round() as i64;
        (map(x), map(y))
    }
}

fn stamp(img: &mut RenderedImage, m: &CanvasMapping, cx: i64, cy: i64, v: u8) {
    for dy in -m.brush_lo..=m.brush_hi {
        for dx in -m.brush_lo..=m.brush_hi {
            img.darken(cx + dx, cy + dy, v);
        }
    }
}

/// Bresenham traversal from `a` to `b`, stamping the brush at each step.
fn draw_line(img: &mut RenderedImage, m: &CanvasMapping, a: (i64, i64), b: (i64, i64), v: u8) {
    let (mut x, mut y) = a;
    let dx = (b.0 - a.0).abs();
    let dy = -(b.1 - a.1).abs();
    let sx = if a.0 < b.0 { 1 } else { -1 };
    let sy = if a.1 < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        stamp(img, m, x, y, v);
        if (x, y) == b {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn rasterize(record: &NormalizedRecord, kind: InputKind, cfg: &RenderConfig, factor: u32) -> Result<RenderedImage, RenderError> {
    let mapping = CanvasMapping::scaled(cfg, factor)?;
    let size = cfg.canvas_px * factor;
    let mut img = RenderedImage::blank(size, size);
    let ink = |p: f64| match kind {
        InputKind::Finger => 0,
        InputKind::Stylus => cfg.stylus_ink(p),
    };
    for stroke in &record.pen_strokes {
        let pts = &record.points[stroke.start..=stroke.end];
        if pts.len() == 1 {
            let (x, y) = mapping.pixel(pts[0].x, pts[0].y);
            stamp(&mut img, &mapping, x, y, ink(pts[0].p));
            continue;
        }
        for seg in pts.windows(2) {
            let v = ink((seg[0].p + seg[1].p) / 2.0);
            let a = mapping.pixel(seg[0].x, seg[0].y);
            let b = mapping.pixel(seg[1].x, seg[1].y);
            draw_line(&mut img, &mapping, a, b, v);
        }
    }
    Ok(img)
}

fn downsample(hi: &RenderedImage, factor: u32) -> RenderedImage {
    let (w, h) = (hi.width / factor, hi.height / factor);
    let n = factor * factor;
    let mut out = RenderedImage::blank(w, h);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0u32;
            for sy in 0..factor {
                for sx in 0..factor {
                    sum += hi.get(x * factor + sx, y * factor + sy) as u32;
                }
            }
            out.pixels[(y * w + x) as usize] = ((sum + n / 2) / n) as u8;
        }
    }
    out
}

/// Rasterize a normalized record onto a square canvas.
pub fn render_signature(record: &NormalizedRecord, kind: InputKind, cfg: &RenderConfig) -> Result<RenderedImage, RenderError> {
    cfg.validate()?;
    let mut img = if cfg.antialias {
        downsample(&rasterize(record, kind, cfg, SUPERSAMPLE)?, SUPERSAMPLE)
    } else {
        rasterize(record, kind, cfg, 1)?
    };
    img.provenance.config_digest = cfg.digest();
    Ok(img)
}

/// Normalize and render a raw record, tagging the image with its source.
pub fn render_record(record: &SignatureRecord, cfg: &RenderConfig) -> Result<RenderedImage, RenderError> {
    let normalized = signal::normalize(record, &cfg.stroke_gap)?;
    let mut img = render_signature(&normalized, record.input_kind, cfg)?;
    img.provenance.source_id = record.source_path.clone();
    Ok(img)
}

/// Render both signatures of a pair, honoring `cfg.scale_mode`.
pub fn render_pair(
    reference: &SignatureRecord,
    probe: &SignatureRecord,
    cfg: &RenderConfig,
) -> Result<(RenderedImage, RenderedImage), RenderError> {
    match cfg.scale_mode {
        ScaleMode::PerSignature => Ok((render_record(reference, cfg)?, render_record(probe, cfg)?)),
        ScaleMode::SharedPair => {
            let a = Bounds::of(&reference.sample_points).ok_or(SignalError::EmptyRecord)?;
            let b = Bounds::of(&probe.sample_points).ok_or(SignalError::EmptyRecord)?;
            let shared = a.union(&b);
            let render = |r: &SignatureRecord| -> Result<RenderedImage, RenderError> {
                let n = signal::normalize_within(r, &shared, &cfg.stroke_gap)?;
                let mut img = render_signature(&n, r.input_kind, cfg)?;
                img.provenance.source_id = r.source_path.clone();
                Ok(img)
            };
            Ok((render(reference)?, render(probe)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    #[default]
    TwoAttachments,
    SideBySide,
}

/// Arrange a reference/probe pair for the model.
pub fn compose_pair(reference: &RenderedImage, probe: &RenderedImage, mode: PairMode) -> Result<Vec<RenderedImage>, RenderError> {
    match mode {
        PairMode::TwoAttachments => Ok(vec![reference.clone(), probe.clone()]),
        PairMode::SideBySide => {
            let (ra, rb) = ((reference.width, reference.height), (probe.width, probe.height));
            if ra != rb {
                return Err(RenderError::SizeMismatch(ra, rb));
            }
            let (w, h) = ra;
            let mut out = RenderedImage::blank(2 * w + SEPARATOR_PX, h);
            for y in 0..h as usize {
                let dst = y * out.width as usize;
                let src = y * w as usize;
                out.pixels[dst..dst + w as usize].copy_from_slice(&reference.pixels[src..src + w as usize]);
                let right = dst + (w + SEPARATOR_PX) as usize;
                out.pixels[right..right + w as usize].copy_from_slice(&probe.pixels[src..src + w as usize]);
            }
            out.provenance = Provenance {
                source_id: format!("{}|{}", reference.provenance.source_id, probe.provenance.source_id),
                config_digest: reference.provenance.config_digest.clone(),
            };
            Ok(vec![out])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{NormalizedPoint, SamplePoint, Stroke};
    use proptest::prelude::*;

    fn segment(p: f64) -> NormalizedRecord {
        NormalizedRecord {
            points: vec![
                NormalizedPoint { x: 0.1, y: 0.2, t: 0.0, p },
                NormalizedPoint { x: 0.9, y: 0.7, t: 10.0, p },
            ],
            pen_strokes: vec![Stroke { start: 0, end: 1 }],
        }
    }

    fn ink_values(img: &RenderedImage) -> std::collections::BTreeSet<u8> {
        img.pixels.iter().copied().filter(|&v| v != BACKGROUND).collect()
    }

    #[test]
    fn pressure_endpoints() {
        let cfg = RenderConfig::default();
        let full = render_signature(&segment(1.0), InputKind::Stylus, &cfg).unwrap();
        assert_eq!(ink_values(&full), [0].into());
        let light = render_signature(&segment(0.0), InputKind::Stylus, &cfg).unwrap();
        assert_eq!(ink_values(&light), [191].into());
        assert_eq!(cfg.stylus_ink(0.0), 191);
    }

    #[test]
    fn finger_is_binary() {
        let img = render_signature(&segment(0.4), InputKind::Finger, &RenderConfig::default()).unwrap();
        assert_eq!(ink_values(&img), [0].into());
    }

    #[test]
    fn single_point_stroke_leaves_a_dot() {
        let rec = NormalizedRecord {
            points: vec![NormalizedPoint { x: 0.5, y: 0.5, t: 0.0, p: 1.0 }],
            pen_strokes: vec![Stroke { start: 0, end: 0 }],
        };
        let img = render_signature(&rec, InputKind::Stylus, &RenderConfig::default()).unwrap();
        assert_eq!(img.pixels.iter().filter(|&&v| v == 0).count(), 4);
    }

    #[test]
    fn overlaps_keep_darkest() {
        let mut rec = segment(0.0);
        rec.points.push(NormalizedPoint { x: 0.1, y: 0.2, t: 30.0, p: 1.0 });
        rec.points.push(NormalizedPoint { x: 0.9, y: 0.7, t: 40.0, p: 1.0 });
        rec.pen_strokes.push(Stroke { start: 2, end: 3 });
        let img = render_signature(&rec, InputKind::Stylus, &RenderConfig::default()).unwrap();
        assert_eq!(ink_values(&img), [0].into());
        rec.pen_strokes.reverse();
        assert_eq!(render_signature(&rec, InputKind::Stylus, &RenderConfig::default()).unwrap(), img);
    }

    #[test]
    fn config_validation() {
        let ok = RenderConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            RenderConfig { canvas_px: 31, ..ok.clone() },
            RenderConfig { margin_fraction: 0.5, ..ok.clone() },
            RenderConfig { stroke_width_px: 0, ..ok.clone() },
            RenderConfig { ink_floor: 1.5, ..ok.clone() },
            RenderConfig { background_value: 0, ..ok.clone() },
            RenderConfig { canvas_px: 32, stroke_width_px: 40, ..ok.clone() },
        ] {
            assert!(matches!(render_signature(&segment(1.0), InputKind::Stylus, &bad), Err(RenderError::ConfigInvalid(_))));
        }
    }

    #[test]
    fn antialias_produces_intermediate_values() {
        let cfg = RenderConfig { antialias: true, ..RenderConfig::default() };
        let img = render_signature(&segment(1.0), InputKind::Finger, &cfg).unwrap();
        assert!(img.pixels.iter().any(|&v| v > 0 && v < 255));
        assert_eq!(render_signature(&segment(1.0), InputKind::Finger, &cfg).unwrap(), img);
    }

    #[test]
    fn compose_modes() {
        let cfg = RenderConfig::default();
        let a = render_signature(&segment(1.0), InputKind::Stylus, &cfg).unwrap();
        let b = render_signature(&segment(0.2), InputKind::Stylus, &cfg).unwrap();
        let two = compose_pair(&a, &b, PairMode::TwoAttachments).unwrap();
        assert_eq!(two, vec![a.clone(), b.clone()]);

        let side = compose_pair(&a, &b, PairMode::SideBySide).unwrap();
        assert_eq!(side.len(), 1);
        let s = &side[0];
        assert_eq!((s.width, s.height), (1028, 512));
        for y in 0..512 {
            for x in 512..516 {
                assert_eq!(s.get(x, y), 255);
            }
            assert_eq!(s.get(100, y), a.get(100, y));
            assert_eq!(s.get(516 + 300, y), b.get(300, y));
        }

        let small = render_signature(&segment(1.0), InputKind::Stylus, &RenderConfig { canvas_px: 64, ..cfg }).unwrap();
        assert!(matches!(compose_pair(&a, &small, PairMode::SideBySide), Err(RenderError::SizeMismatch(..))));
    }

    #[test]
    fn shared_pair_scaling_shrinks_the_smaller_signature() {
        let line = |len: f64| {
            SignatureRecord::new(
                "u",
                InputKind::Finger,
                vec![SamplePoint::new(0.0, 0.0, 0.0, 0.0), SamplePoint::new(len, 0.0, 10.0, 0.0)],
            )
        };
        let (small, big) = (line(10.0), line(100.0));
        let per = RenderConfig::default();
        let shared = RenderConfig { scale_mode: ScaleMode::SharedPair, ..per.clone() };
        let count = |img: &RenderedImage| img.pixels.iter().filter(|&&v| v == 0).count();
        let (a, _) = render_pair(&small, &big, &per).unwrap();
        let (b, _) = render_pair(&small, &big, &shared).unwrap();
        assert!(count(&b) < count(&a));
    }

    fn arb_record() -> impl Strategy<Value = (NormalizedRecord, InputKind)> {
        (
            prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 0.0..=1.0f64), 1..30),
            any::<bool>(),
        )
            .prop_map(|(pts, finger)| {
                let n = pts.len();
                let points = pts
                    .into_iter()
                    .enumerate()
                    .map(|(i, (x, y, p))| NormalizedPoint { x, y, t: i as f64, p })
                    .collect();
                let kind = if finger { InputKind::Finger } else { InputKind::Stylus };
                (NormalizedRecord { points, pen_strokes: vec![Stroke { start: 0, end: n - 1 }] }, kind)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn pressure_is_monotone(pa in 0.0..=1.0f64, pb in 0.0..=1.0f64) {
            let (hi, lo) = if pa >= pb { (pa, pb) } else { (pb, pa) };
            let cfg = RenderConfig::default();
            let a = render_signature(&segment(hi), InputKind::Stylus, &cfg).unwrap();
            let b = render_signature(&segment(lo), InputKind::Stylus, &cfg).unwrap();
            for (x, y) in a.pixels.iter().zip(&b.pixels) {
                prop_assert!(x <= y);
            }
        }

        #[test]
        fn coverage_and_margin((rec, kind) in arb_record()) {
            let cfg = RenderConfig { canvas_px: 128, ..RenderConfig::default() };
            let img = render_signature(&rec, kind, &cfg).unwrap();
            let m = CanvasMapping::new(&cfg).unwrap();
            for p in &rec.points {
                let (x, y) = m.pixel(p.x, p.y);
                prop_assert!(img.get(x as u32, y as u32) < 255);
            }
            let margin = cfg.margin_fraction * cfg.canvas_px as f64;
            for y in 0..img.height {
                for x in 0..img.width {
                    if img.get(x, y) < 255 {
                        let near = |c: u32| (c as f64) < margin || ((img.width - 1 - c) as f64) < margin;
                        prop_assert!(!near(x) && !near(y));
                    }
                }
            }
            if kind == InputKind::Finger {
                prop_assert!(img.pixels.iter().all(|&v| v == 0 || v == 255));
            }
        }

        #[test]
        fn rendering_is_pure((rec, kind) in arb_record()) {
            let cfg = RenderConfig { canvas_px: 96, stroke_width_px: 3, ..RenderConfig::default() };
            prop_assert_eq!(render_signature(&rec, kind, &cfg).unwrap(), render_signature(&rec, kind, &cfg).unwrap());
        }
    }
}
