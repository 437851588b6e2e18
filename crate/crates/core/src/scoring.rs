//! Continuous similarity scores from verdict tokens and stated certainty.
//!
//! Token scores use the probability of the top-1 verdict token directly:
//! `exp(L)` when it names a match, `1 - exp(L)` when it names a mismatch.
//! The certainty score is the stated confidence, inverted when the final
//! verdict is a mismatch.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vlm::{extract_verdict_token, TokenLogProb, Verdict, VerdictSlot, VerificationExchange};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("token {0:?} is not a verdict token")]
    UnknownToken(String),
    #[error("certainty {0} is outside 0..=100")]
    RangeError(i64),
    #[error("log-probability {0} is not a finite value <= 0")]
    InvalidLogprob(f64),
    #[error("token class sets must be non-empty and disjoint")]
    InvalidTokenSets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenClass {
    Same,
    Diff,
    Unknown,
}

/// Strip surrounding whitespace and quotes, then lowercase.
pub fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| c.is_whitespace() || c == '"' || c == '\'')
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenClassSets {
    pub same_tokens: BTreeSet<String>,
    pub diff_tokens: BTreeSet<String>,
}

impl Default for TokenClassSets {
    fn default() -> Self {
        TokenClassSets {
            same_tokens: ["same".to_string()].into(),
            diff_tokens: ["different".to_string()].into(),
        }
    }
}

impl TokenClassSets {
    pub fn new<I, J, S, T>(same: I, diff: J) -> Result<Self, ScoringError>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let sets = TokenClassSets {
            same_tokens: same.into_iter().map(|s| normalize_token(s.as_ref())).collect(),
            diff_tokens: diff.into_iter().map(|s| normalize_token(s.as_ref())).collect(),
        };
        sets.validate()?;
        Ok(sets)
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        if self.same_tokens.is_empty() || self.diff_tokens.is_empty() || !self.same_tokens.is_disjoint(&self.diff_tokens) {
            return Err(ScoringError::InvalidTokenSets);
        }
        Ok(())
    }
}

pub fn classify_token(token_text: &str, sets: &TokenClassSets) -> TokenClass {
    let t = normalize_token(token_text);
    if sets.same_tokens.contains(&t) {
        TokenClass::Same
    } else if sets.diff_tokens.contains(&t) {
        TokenClass::Diff
    } else {
        TokenClass::Unknown
    }
}

pub fn score_from_logprob(token: &TokenLogProb, sets: &TokenClassSets) -> Result<f64, ScoringError> {
    // Values a hair above 0 come from provider rounding and are clamped below.
    if !(token.logprob.is_finite() && token.logprob < 1e-6) {
        return Err(ScoringError::InvalidLogprob(token.logprob));
    }
    let prob = token.logprob.exp();
    let score = match classify_token(&token.token_text, sets) {
        TokenClass::Same => prob,
        TokenClass::Diff => 1.0 - prob,
        TokenClass::Unknown => return Err(ScoringError::UnknownToken(token.token_text.clone())),
    };
    Ok(score.clamp(0.0, 1.0))
}

pub fn score_from_certainty(final_verdict: Verdict, certainty: i64) -> Result<f64, ScoringError> {
    if !(0..=100).contains(&certainty) {
        return Err(ScoringError::RangeError(certainty));
    }
    let c = certainty as f64 / 100.0;
    Ok(match final_verdict {
        Verdict::SameIdentity => c,
        Verdict::DifferentIdentity => 1.0 - c,
    })
}

/// The three similarity channels for one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub pair_id: String,
    pub s_v1: Option<f64>,
    pub s_v2: Option<f64>,
    pub s_text: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreWarning {
    pub pair_id: String,
    pub slot: VerdictSlot,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledScores {
    pub scores: ScoreTriple,
    pub warnings: Vec<ScoreWarning>,
}

/// Score a completed exchange. Token channels that cannot be aligned or
/// classified are left absent and reported as warnings.
pub fn assemble_scores(exchange: &VerificationExchange, sets: &TokenClassSets) -> Result<AssembledScores, ScoringError> {
    let verdicts = &exchange.verdicts;
    let s_text = score_from_certainty(verdicts.final_verdict, verdicts.certainty)?;
    let mut warnings = Vec::new();
    let mut channel = |slot: VerdictSlot| -> Option<f64> {
        if exchange.token_logprobs.is_empty() {
            return None;
        }
        let outcome = extract_verdict_token(exchange, slot)
            .map_err(|e| e.to_string())
            .and_then(|t| score_from_logprob(&t, sets).map_err(|e| e.to_string()));
        match outcome {
            Ok(s) => Some(s),
            Err(message) => {
                log::warn!("pair {}: {:?} token unusable: {}", exchange.pair_id, slot, message);
                warnings.push(ScoreWarning {
                    pair_id: exchange.pair_id.clone(),
                    slot,
                    message,
                });
                None
            }
        }
    };
    let s_v1 = channel(VerdictSlot::InitialVerdict);
    let s_v2 = channel(VerdictSlot::FinalVerdict);
    Ok(AssembledScores {
        scores: ScoreTriple {
            pair_id: exchange.pair_id.clone(),
            s_v1,
            s_v2,
            s_text,
        },
        warnings,
    })
}
