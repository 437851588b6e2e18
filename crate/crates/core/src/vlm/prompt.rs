use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::VlmError;
use crate::render::{encode_png, PairMode, RenderedImage};

/// Verdict strings the model must use verbatim.
pub const SAME_IDENTITY: &str = "Same Identity";
pub const DIFFERENT_IDENTITY: &str = "Different Identity";

/// JSON keys of the required response object, in order.
pub const RESPONSE_KEYS: [&str; 4] = ["initial_verdict", "reasoning", "final_verdict", "certainty"];

pub const ROLE_PHRASE: &str = "Forensic Document Examiner";

const SYSTEM_TEMPLATE: &str = r#"You are a Forensic Document Examiner specializing in the comparison of handwritten signatures.

You will be shown a Reference signature of known origin and a Questioned signature. Both images are AI-generated renderings produced for this examination. {PRESSURE_NOTE}

Decide whether the Questioned signature was written by the same person as the Reference signature.

Work in this order:
1. Record your initial verdict from your immediate visual impression, before any analysis.
2. Compare the signatures in detail: overall shape and proportions, letter construction, stroke order and connections, slant, spacing, line quality and fluency, and any signs of hesitation or tracing.
3. Record your final verdict after that reasoning.
4. State how certain you are of the final verdict as an integer from 0 to 100.

Respond with a strict JSON object and nothing else: no code fences, no commentary. Use exactly these keys in this order:
{"initial_verdict": "<verdict>", "reasoning": "<your step-by-step comparison>", "final_verdict": "<verdict>", "certainty": <integer 0-100>}

Each <verdict> must be exactly "Same Identity" or "Different Identity"."#;

const PRESSURE_NOTE: &str = "Stroke darkness encodes pen pressure: darker segments were written with more pressure. Uniform black strokes carry no pressure information.";

pub const REPAIR_INSTRUCTION: &str =
    "Your previous reply could not be parsed. Respond with the strict JSON object only, using the required keys and verdict strings.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageLabel {
    Reference,
    Questioned,
    /// Reference on the left, questioned on the right.
    SideBySide,
}

impl ImageLabel {
    pub fn caption(self) -> &'static str {
        match self {
            ImageLabel::Reference => "Reference signature:",
            ImageLabel::Questioned => "Questioned signature:",
            ImageLabel::SideBySide => "Reference signature (left) and Questioned signature (right):",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptImage {
    pub label: ImageLabel,
    pub png: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub seed: u64,
    pub want_logprobs: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub pair_mode: PairMode,
    pub temperature: f64,
    pub seed: u64,
    pub want_logprobs: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            pair_mode: PairMode::TwoAttachments,
            temperature: 0.0,
            seed: 42,
            want_logprobs: true,
        }
    }
}

/// Follow-up turn asking the model to restate its answer as strict JSON.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairTurn {
    pub previous_response: String,
    pub instruction: String,
}

/// Everything sent to the model for one comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub images: Vec<PromptImage>,
    pub decoding: Decoding,
    pub repair: Option<RepairTurn>,
}

fn hash_field(h: &mut Sha256, tag: &str, bytes: &[u8]) {
    h.update(tag.as_bytes());
    h.update((bytes.len() as u64).to_le_bytes());
    h.update(bytes);
}

impl PromptBundle {
    fn hash_base(&self, h: &mut Sha256) {
        hash_field(h, "system", self.system_text.as_bytes());
        hash_field(h, "user", self.user_text.as_bytes());
        for img in &self.images {
            hash_field(h, "label", img.label.caption().as_bytes());
            hash_field(h, "png", &img.png);
        }
        hash_field(h, "temperature", &self.decoding.temperature.to_bits().to_le_bytes());
        hash_field(h, "seed", &self.decoding.seed.to_le_bytes());
        hash_field(h, "logprobs", &[u8::from(self.decoding.want_logprobs)]);
    }

    /// Content hash of the full request, repair turn included. Cassettes
    /// are keyed by this value.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        self.hash_base(&mut h);
        if let Some(r) = &self.repair {
            hash_field(&mut h, "repair_previous", r.previous_response.as_bytes());
            hash_field(&mut h, "repair_instruction", r.instruction.as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Hash of the original request, identical for a bundle and its repair.
    pub fn base_digest(&self) -> String {
        let mut h = Sha256::new();
        self.hash_base(&mut h);
        hex::encode(h.finalize())
    }

    pub fn with_repair(&self, previous_response: &str) -> PromptBundle {
        PromptBundle {
            repair: Some(RepairTurn {
                previous_response: previous_response.to_string(),
                instruction: REPAIR_INSTRUCTION.to_string(),
            }),
            ..self.clone()
        }
    }

    /// Short human-readable description stored next to cassette entries.
    pub fn summary(&self) -> String {
        let labels: Vec<&str> = self.images.iter().map(|i| i.label.caption().trim_end_matches(':')).collect();
        format!(
            "{} image(s) [{}]; temperature={} seed={} logprobs={}{}",
            self.images.len(),
            labels.join(", "),
            self.decoding.temperature,
            self.decoding.seed,
            self.decoding.want_logprobs,
            if self.repair.is_some() { "; repair turn" } else { "" }
        )
    }
}

/// Build the examiner prompt for one composed pair.
///
/// Expects `[reference, probe]` in two-attachment mode and a single
/// composite image in side-by-side mode.
pub fn build_prompt(pair_images: &[RenderedImage], cfg: &PromptConfig) -> Result<PromptBundle, VlmError> {
    if !cfg.temperature.is_finite() || cfg.temperature < 0.0 {
        return Err(VlmError::ConfigInvalid(format!("temperature {} is not a finite non-negative value", cfg.temperature)));
    }
    let labels: &[ImageLabel] = match cfg.pair_mode {
        PairMode::TwoAttachments => &[ImageLabel::Reference, ImageLabel::Questioned],
        PairMode::SideBySide => &[ImageLabel::SideBySide],
    };
    if pair_images.len() != labels.len() {
        return Err(VlmError::ConfigInvalid(format!(
            "{:?} mode expects {} image(s), got {}",
            cfg.pair_mode,
            labels.len(),
            pair_images.len()
        )));
    }
    let images = labels
        .iter()
        .zip(pair_images)
        .map(|(&label, img)| Ok(PromptImage { label, png: encode_png(img)? }))
        .collect::<Result<Vec<_>, VlmError>>()?;
    let user_text = match cfg.pair_mode {
        PairMode::TwoAttachments => "Compare the Questioned signature against the Reference signature. The Reference image is attached first, the Questioned image second.",
        PairMode::SideBySide => "Compare the Questioned signature against the Reference signature. The attached image shows the Reference on the left and the Questioned signature on the right.",
    };
    Ok(PromptBundle {
        system_text: SYSTEM_TEMPLATE.replace("{PRESSURE_NOTE}", PRESSURE_NOTE),
        user_text: user_text.to_string(),
        images,
        decoding: Decoding {
            temperature: cfg.temperature,
            seed: cfg.seed,
            want_logprobs: cfg.want_logprobs,
        },
        repair: None,
    })
}
