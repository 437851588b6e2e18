//! Prompting a chat-style vision-language model and reading its verdicts.
//!
//! A [`PromptBundle`] is sent through a [`Transport`]: a live HTTP
//! endpoint, a replayed cassette, or a seeded mock. [`send`] parses the
//! verdict object, retrying once with a repair turn when the reply is not
//! valid JSON.

mod cassette;
mod live;
mod mock;
mod prompt;
mod verdict;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cassette::{read_cassette, CassetteEntry, CassetteWriter, RecordingTransport, ReplayTransport};
pub use live::{parse_chat_response, request_body, LiveConfig, LiveTransport};
pub use mock::{MockReply, MockScript, MockTransport};
pub use prompt::{
    build_prompt, Decoding, ImageLabel, PromptBundle, PromptConfig, PromptImage, RepairTurn, DIFFERENT_IDENTITY, REPAIR_INSTRUCTION,
    RESPONSE_KEYS, ROLE_PHRASE, SAME_IDENTITY,
};
pub use verdict::{extract_verdict_token, parse_verdict, parse_verdict_json, synthesize_response, tokenize};

use crate::render::RenderError;

#[derive(Debug, Error)]
pub enum VlmError {
    #[error("invalid prompt or transport config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error("transport error: {message}")]
    Transport { message: String, transient: bool },
    #[error("no cassette entry for prompt digest {0}")]
    CassetteMiss(String),
    #[error("malformed response ({reason}): {fragment}")]
    ResponseMalformed { reason: String, fragment: String },
    #[error("provider refused the request: {0}")]
    SafetyRefusal(String),
    #[error("provider returned no token log-probabilities")]
    LogprobsUnavailable,
    #[error("could not align {0:?} value with the token stream")]
    TokenNotFound(VerdictSlot),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl VlmError {
    pub fn transport(message: impl Into<String>, transient: bool) -> Self {
        VlmError::Transport {
            message: message.into(),
            transient,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "Same Identity")]
    SameIdentity,
    #[serde(rename = "Different Identity")]
    DifferentIdentity,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::SameIdentity => SAME_IDENTITY,
            Verdict::DifferentIdentity => DIFFERENT_IDENTITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSlot {
    InitialVerdict,
    FinalVerdict,
}

impl VerdictSlot {
    pub fn key(self) -> &'static str {
        match self {
            VerdictSlot::InitialVerdict => "initial_verdict",
            VerdictSlot::FinalVerdict => "final_verdict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictJson {
    pub initial_verdict: Verdict,
    pub reasoning: String,
    pub final_verdict: Verdict,
    pub certainty: i64,
}

/// One generated token as reported by the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamToken {
    pub token: String,
    pub logprob: f64,
}

/// A verdict-leading token located in the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub token_text: String,
    pub logprob: f64,
    pub position_tag: VerdictSlot,
}

/// One completed round trip for a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationExchange {
    pub pair_id: String,
    pub prompt_digest: String,
    pub raw_response_text: String,
    pub verdicts: VerdictJson,
    /// Empty when the provider does not return log-probabilities.
    pub token_logprobs: Vec<StreamToken>,
    pub provider_tag: String,
    pub timing_ms: u64,
}

/// Raw reply from a transport before verdict parsing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportReply {
    pub raw_response_text: String,
    pub token_logprobs: Vec<StreamToken>,
    pub provider_tag: String,
    pub refusal: Option<String>,
}

/// Moves a prompt to a model and back. Implementations must be usable from
/// several worker threads at once.
pub trait Transport: Send + Sync {
    fn exchange(&self, bundle: &PromptBundle) -> Result<TransportReply, VlmError>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn exchange(&self, bundle: &PromptBundle) -> Result<TransportReply, VlmError> {
        (**self).exchange(bundle)
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn exchange(&self, bundle: &PromptBundle) -> Result<TransportReply, VlmError> {
        (**self).exchange(bundle)
    }
}

fn accept(reply: TransportReply) -> Result<(TransportReply, Result<VerdictJson, VlmError>), VlmError> {
    if let Some(reason) = reply.refusal {
        return Err(VlmError::SafetyRefusal(reason));
    }
    let parsed = parse_verdict_json(&reply.raw_response_text);
    Ok((reply, parsed))
}

/// Run one comparison through `transport`.
///
/// An unparseable reply earns exactly one repair turn; a second failure is
/// reported as [`VlmError::ResponseMalformed`].
pub fn send(pair_id: &str, bundle: &PromptBundle, transport: &dyn Transport) -> Result<VerificationExchange, VlmError> {
    let started = Instant::now();
    let (mut reply, mut parsed) = accept(transport.exchange(bundle)?)?;
    if parsed.is_err() {
        log::info!("pair {pair_id}: reply not parseable, sending repair turn");
        (reply, parsed) = accept(transport.exchange(&bundle.with_repair(&reply.raw_response_text))?)?;
    }
    let verdicts = parsed?;
    Ok(VerificationExchange {
        pair_id: pair_id.to_string(),
        prompt_digest: bundle.digest(),
        raw_response_text: reply.raw_response_text,
        verdicts,
        token_logprobs: reply.token_logprobs,
        provider_tag: reply.provider_tag,
        timing_ms: started.elapsed().as_millis() as u64,
    })
}
