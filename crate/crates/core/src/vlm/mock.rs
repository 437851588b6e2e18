use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{synthesize_response, PromptBundle, Transport, TransportReply, Verdict, VerdictJson, VlmError};

pub const MOCK_PROVIDER: &str = "mock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockReply {
    Verdicts {
        initial_verdict: Verdict,
        initial_logprob: f64,
        final_verdict: Verdict,
        final_logprob: f64,
        certainty: i64,
        #[serde(default)]
        reasoning: String,
    },
    Malformed {
        text: String,
    },
    Refusal {
        reason: String,
    },
}

/// What the mock answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MockScript {
    /// The same reply for every prompt.
    Fixed { reply: MockReply },
    /// Outcomes drawn from a generator seeded by `seed` and the prompt's
    /// base digest, so each pair gets the same answer in any order and a
    /// repair turn gets the same outcome as the original prompt.
    Seeded {
        seed: u64,
        #[serde(default)]
        malformed_rate: f64,
        #[serde(default)]
        refusal_rate: f64,
    },
}

#[derive(Debug, Clone)]
pub struct MockTransport {
    script: MockScript,
    /// When false the mock behaves like a provider without log-probabilities.
    pub supports_logprobs: bool,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Self {
        MockTransport {
            script,
            supports_logprobs: true,
        }
    }

    pub fn without_logprobs(mut self) -> Self {
        self.supports_logprobs = false;
        self
    }

    fn seeded_reply(seed: u64, malformed_rate: f64, refusal_rate: f64, bundle: &PromptBundle) -> MockReply {
        let digest = bundle.base_digest();
        let salt = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
        let u: f64 = rng.random();
        if u < refusal_rate {
            return MockReply::Refusal {
                reason: "request declined by mock content filter".into(),
            };
        }
        if u < refusal_rate + malformed_rate {
            return MockReply::Malformed {
                text: "I'm sorry, I can only describe these images in prose.".into(),
            };
        }
        let verdict = |rng: &mut ChaCha8Rng| {
            if rng.random_bool(0.5) {
                Verdict::SameIdentity
            } else {
                Verdict::DifferentIdentity
            }
        };
        let initial_verdict = verdict(&mut rng);
        let final_verdict = verdict(&mut rng);
        let initial_logprob = rng.random_range(0.5f64..1.0).ln();
        let final_logprob = rng.random_range(0.5f64..1.0).ln();
        MockReply::Verdicts {
            initial_verdict,
            initial_logprob,
            final_verdict,
            final_logprob,
            certainty: rng.random_range(50..=100),
            reasoning: "Mock comparison of stroke shape and proportions.".into(),
        }
    }
}

impl Transport for MockTransport {
    fn exchange(&self, bundle: &PromptBundle) -> Result<TransportReply, VlmError> {
        let reply = match &self.script {
            MockScript::Fixed { reply } => reply.clone(),
            MockScript::Seeded {
                seed,
                malformed_rate,
                refusal_rate,
            } => Self::seeded_reply(*seed, *malformed_rate, *refusal_rate, bundle),
        };
        let out = |text: String, tokens, refusal| TransportReply {
            raw_response_text: text,
            token_logprobs: tokens,
            provider_tag: MOCK_PROVIDER.into(),
            refusal,
        };
        Ok(match reply {
            MockReply::Refusal { reason } => out(String::new(), vec![], Some(reason)),
            MockReply::Malformed { text } => out(text, vec![], None),
            MockReply::Verdicts {
                initial_verdict,
                initial_logprob,
                final_verdict,
                final_logprob,
                certainty,
                reasoning,
            } => {
                let v = VerdictJson {
                    initial_verdict,
                    reasoning,
                    final_verdict,
                    certainty,
                };
                let (text, tokens) = synthesize_response(&v, initial_logprob, final_logprob);
                let tokens = if self.supports_logprobs && bundle.decoding.want_logprobs { tokens } else { vec![] };
                out(text, tokens, None)
            }
        })
    }
}
