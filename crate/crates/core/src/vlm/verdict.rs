use serde_json::Value;

use super::prompt::{DIFFERENT_IDENTITY, SAME_IDENTITY};
use super::{StreamToken, TokenLogProb, Verdict, VerdictJson, VerdictSlot, VerificationExchange, VlmError};

const FRAGMENT_CHARS: usize = 200;

fn fragment(s: &str) -> String {
    let mut out: String = s.chars().take(FRAGMENT_CHARS).collect();
    if s.chars().count() > FRAGMENT_CHARS {
        out.push('…');
    }
    out
}

fn malformed(raw: &str, reason: impl Into<String>) -> VlmError {
    VlmError::ResponseMalformed {
        reason: reason.into(),
        fragment: fragment(raw),
    }
}

/// Match a verdict string case-insensitively with whitespace collapsed.
pub fn parse_verdict(s: &str) -> Option<Verdict> {
    let norm = s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    if norm == SAME_IDENTITY.to_lowercase() {
        Some(Verdict::SameIdentity)
    } else if norm == DIFFERENT_IDENTITY.to_lowercase() {
        Some(Verdict::DifferentIdentity)
    } else {
        None
    }
}

/// First JSON object embedded in `raw`; surrounding prose and code fences
/// are ignored.
fn first_object(raw: &str) -> Option<serde_json::Map<String, Value>> {
    raw.match_indices('{').find_map(|(i, _)| {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Object(map))) => Some(map),
            _ => None,
        }
    })
}

pub fn parse_verdict_json(raw: &str) -> Result<VerdictJson, VlmError> {
    let obj = first_object(raw).ok_or_else(|| malformed(raw, "no JSON object found"))?;
    let verdict = |key: &str| -> Result<Verdict, VlmError> {
        let v = obj.get(key).ok_or_else(|| malformed(raw, format!("missing key {key}")))?;
        v.as_str()
            .and_then(parse_verdict)
            .ok_or_else(|| malformed(raw, format!("{key} must be \"{SAME_IDENTITY}\" or \"{DIFFERENT_IDENTITY}\", got {v}")))
    };
    let initial_verdict = verdict("initial_verdict")?;
    let final_verdict = verdict("final_verdict")?;
    let reasoning = obj
        .get("reasoning")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(raw, "missing or non-string reasoning"))?
        .to_string();
    let certainty = match obj.get("certainty") {
        Some(Value::Number(n)) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64)),
        _ => None,
    }
    .filter(|c| (0..=100).contains(c))
    .ok_or_else(|| malformed(raw, "certainty must be an integer in 0..=100"))?;
    Ok(VerdictJson {
        initial_verdict,
        reasoning,
        final_verdict,
        certainty,
    })
}

/// Character offset where the string value of `key` starts its first
/// non-blank character, in a JSON text that may be split into tokens.
fn value_offset(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    for (pos, _) in text.match_indices(&needle) {
        if text[..pos].ends_with('\\') {
            continue;
        }
        let rest = &text[pos + needle.len()..];
        let after_ws = rest.trim_start();
        let Some(after_colon) = after_ws.strip_prefix(':') else { continue };
        let Some(value) = after_colon.trim_start().strip_prefix('"') else { continue };
        let value_start = value.trim_start();
        if value_start.is_empty() {
            continue;
        }
        return Some(text.len() - value_start.len());
    }
    None
}

/// Locate the token that begins the requested verdict's value and return
/// it with its log-probability.
pub fn extract_verdict_token(exchange: &VerificationExchange, which: VerdictSlot) -> Result<TokenLogProb, VlmError> {
    if exchange.token_logprobs.is_empty() {
        return Err(VlmError::LogprobsUnavailable);
    }
    let text: String = exchange.token_logprobs.iter().map(|t| t.token.as_str()).collect();
    let not_found = || VlmError::TokenNotFound(which);
    let offset = value_offset(&text, which.key()).ok_or_else(not_found)?;
    let mut start = 0;
    for t in &exchange.token_logprobs {
        let end = start + t.token.len();
        if start <= offset && offset < end {
            return Ok(TokenLogProb {
                token_text: t.token.clone(),
                logprob: t.logprob,
                position_tag: which,
            });
        }
        start = end;
    }
    Err(not_found())
}

/// Split text roughly the way BPE tokenizers do for JSON: word runs keep a
/// single leading space, every other character stands alone.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    for c in text.chars() {
        if is_word(c) {
            cur.push(c);
        } else {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            cur.push(c);
            if c != ' ' {
                tokens.push(std::mem::take(&mut cur));
            }
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

/// Serialize a verdict object in key order and tokenize it, giving the two
/// verdict-leading tokens the supplied log-probabilities and every other
/// token probability 1.
pub fn synthesize_response(verdicts: &VerdictJson, initial_logprob: f64, final_logprob: f64) -> (String, Vec<StreamToken>) {
    let js = |s: &str| serde_json::to_string(s).expect("string serializes");
    let text = format!(
        "{{\"initial_verdict\": {}, \"reasoning\": {}, \"final_verdict\": {}, \"certainty\": {}}}",
        js(verdicts.initial_verdict.as_str()),
        js(&verdicts.reasoning),
        js(verdicts.final_verdict.as_str()),
        verdicts.certainty
    );
    let mut tokens: Vec<StreamToken> = tokenize(&text).into_iter().map(|token| StreamToken { token, logprob: 0.0 }).collect();
    for (slot, lp) in [(VerdictSlot::InitialVerdict, initial_logprob), (VerdictSlot::FinalVerdict, final_logprob)] {
        let offset = value_offset(&text, slot.key()).expect("key present");
        let mut start = 0;
        for t in &mut tokens {
            if start == offset {
                t.logprob = lp;
                break;
            }
            start += t.token.len();
        }
    }
    (text, tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CANONICAL: &str =
        r#"{"initial_verdict":"Same Identity","reasoning":"loops match","final_verdict":"Different Identity","certainty":90}"#;

    #[test]
    fn parses_canonical_object() {
        let v = parse_verdict_json(CANONICAL).unwrap();
        assert_eq!(v.initial_verdict, Verdict::SameIdentity);
        assert_eq!(v.final_verdict, Verdict::DifferentIdentity);
        assert_eq!(v.certainty, 90);
        assert_eq!(v.reasoning, "loops match");
    }

    #[test]
    fn tolerates_fences_and_prose() {
        let fenced = format!("```json\n{CANONICAL}\n```");
        assert_eq!(parse_verdict_json(&fenced).unwrap(), parse_verdict_json(CANONICAL).unwrap());
        let prose = format!("Here is my answer {{not json}} {CANONICAL} thanks");
        assert_eq!(parse_verdict_json(&prose).unwrap(), parse_verdict_json(CANONICAL).unwrap());
    }

    #[test]
    fn lenient_verdict_spelling() {
        let raw = r#"{"initial_verdict":"  same   IDENTITY ","reasoning":"","final_verdict":"different identity","certainty":12.0}"#;
        let v = parse_verdict_json(raw).unwrap();
        assert_eq!((v.initial_verdict, v.final_verdict, v.certainty), (Verdict::SameIdentity, Verdict::DifferentIdentity, 12));
    }

    #[test]
    fn rejects_bad_objects() {
        for raw in [
            r#"{"final_verdict":"Maybe"}"#,
            r#"{"initial_verdict":"Same Identity","reasoning":"x","final_verdict":"Maybe","certainty":5}"#,
            r#"{"initial_verdict":"Same Identity","reasoning":"x","final_verdict":"Same Identity","certainty":101}"#,
            r#"{"initial_verdict":"Same Identity","reasoning":"x","final_verdict":"Same Identity","certainty":"high"}"#,
            r#"{"initial_verdict":"Same Identity","reasoning":"x","final_verdict":"Same Identity","certainty":50.5}"#,
            r#"{"initial_verdict":"Same Identity","final_verdict":"Same Identity","certainty":50}"#,
            "I cannot help with that.",
            "",
        ] {
            assert!(matches!(parse_verdict_json(raw), Err(VlmError::ResponseMalformed { .. })), "{raw}");
        }
    }

    fn exchange(tokens: &[&str]) -> VerificationExchange {
        VerificationExchange {
            pair_id: "p".into(),
            prompt_digest: "d".into(),
            raw_response_text: tokens.concat(),
            verdicts: parse_verdict_json(&tokens.concat()).unwrap(),
            token_logprobs: tokens
                .iter()
                .enumerate()
                .map(|(i, t)| StreamToken { token: t.to_string(), logprob: -(i as f64) / 100.0 })
                .collect(),
            provider_tag: "t".into(),
            timing_ms: 0,
        }
    }

    #[test]
    fn aligns_leading_verdict_token() {
        let ex = exchange(&[
            "{\"", "initial", "_ver", "dict", "\":", " \"", "Different", " Identity", "\",", " \"", "reasoning", "\":", " \"",
            "The", " final", "_verdict", " is", "\",", " \"", "final", "_ver", "dict", "\":", "\"", "Same", " Identity", "\",",
            " \"", "certainty", "\":", " 80", "}",
        ]);
        let t = extract_verdict_token(&ex, VerdictSlot::FinalVerdict).unwrap();
        assert_eq!(t.token_text, "Same");
        assert_eq!(t.logprob, -0.24);
        assert_eq!(t.position_tag, VerdictSlot::FinalVerdict);
        let t = extract_verdict_token(&ex, VerdictSlot::InitialVerdict).unwrap();
        assert_eq!(t.token_text, "Different");
    }

    #[test]
    fn aligns_token_with_leading_space_or_quote() {
        let ex = exchange(&[
            "{\"initial_verdict\": \"", " Different", " Identity", "\", \"reasoning\": \"r\", \"final_verdict\": ", "\"Same",
            " Identity\", \"certainty\": 3}",
        ]);
        assert_eq!(extract_verdict_token(&ex, VerdictSlot::InitialVerdict).unwrap().token_text, " Different");
        assert_eq!(extract_verdict_token(&ex, VerdictSlot::FinalVerdict).unwrap().token_text, "\"Same");
    }

    #[test]
    fn missing_logprobs_and_unalignable_streams() {
        let mut ex = exchange(&[CANONICAL]);
        assert_eq!(extract_verdict_token(&ex, VerdictSlot::FinalVerdict).unwrap().token_text, CANONICAL);
        ex.token_logprobs.clear();
        assert!(matches!(extract_verdict_token(&ex, VerdictSlot::FinalVerdict), Err(VlmError::LogprobsUnavailable)));
        ex.token_logprobs = vec![StreamToken { token: "unrelated".into(), logprob: -1.0 }];
        assert!(matches!(extract_verdict_token(&ex, VerdictSlot::FinalVerdict), Err(VlmError::TokenNotFound(_))));
    }

    #[test]
    fn tokenizer_shapes() {
        assert_eq!(tokenize("\"Same Identity\""), vec!["\"", "Same", " Identity", "\""]);
        assert_eq!(tokenize("a  b"), vec!["a", " ", " b"]);
        assert_eq!(tokenize("x: 90}").concat(), "x: 90}");
    }

    #[test]
    fn synthesized_response_round_trips() {
        let v = VerdictJson {
            initial_verdict: Verdict::DifferentIdentity,
            reasoning: "He said \"same\" once".into(),
            final_verdict: Verdict::SameIdentity,
            certainty: 77,
        };
        let (text, tokens) = synthesize_response(&v, 0.7f64.ln(), 0.9f64.ln());
        assert_eq!(parse_verdict_json(&text).unwrap(), v);
        let mut ex = exchange(&[&text]);
        ex.token_logprobs = tokens;
        let t1 = extract_verdict_token(&ex, VerdictSlot::InitialVerdict).unwrap();
        let t2 = extract_verdict_token(&ex, VerdictSlot::FinalVerdict).unwrap();
        assert_eq!((t1.token_text.as_str(), t1.logprob), ("Different", 0.7f64.ln()));
        assert_eq!((t2.token_text.as_str(), t2.logprob), ("Same", 0.9f64.ln()));
    }
}
