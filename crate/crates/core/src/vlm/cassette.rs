//! JSON-Lines recordings of provider replies keyed by prompt digest.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{PromptBundle, StreamToken, Transport, TransportReply, VlmError};

/// One recorded exchange. Holds no request headers, so credentials never
/// reach a cassette.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub prompt_digest: String,
    pub bundle_summary: String,
    pub raw_response_text: String,
    pub token_logprobs: Vec<StreamToken>,
    pub provider_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refusal: Option<String>,
}

impl CassetteEntry {
    pub fn new(bundle: &PromptBundle, reply: &TransportReply) -> Self {
        CassetteEntry {
            prompt_digest: bundle.digest(),
            bundle_summary: bundle.summary(),
            raw_response_text: reply.raw_response_text.clone(),
            token_logprobs: reply.token_logprobs.clone(),
            provider_tag: reply.provider_tag.clone(),
            refusal: reply.refusal.clone(),
        }
    }

    fn reply(&self) -> TransportReply {
        TransportReply {
            raw_response_text: self.raw_response_text.clone(),
            token_logprobs: self.token_logprobs.clone(),
            provider_tag: self.provider_tag.clone(),
            refusal: self.refusal.clone(),
        }
    }
}

pub fn read_cassette(path: &Path) -> Result<Vec<CassetteEntry>, VlmError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| VlmError::ConfigInvalid(format!("{}:{}: bad cassette entry: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Serves replies from a cassette without touching the network.
#[derive(Debug, Clone, Default)]
pub struct ReplayTransport {
    entries: HashMap<String, CassetteEntry>,
}

impl ReplayTransport {
    /// The first entry wins when a digest appears more than once.
    pub fn new(entries: impl IntoIterator<Item = CassetteEntry>) -> Self {
        let mut map = HashMap::new();
        for e in entries {
            map.entry(e.prompt_digest.clone()).or_insert(e);
        }
        ReplayTransport { entries: map }
    }

    pub fn open(path: &Path) -> Result<Self, VlmError> {
        Ok(Self::new(read_cassette(path)?))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Transport for ReplayTransport {
    fn exchange(&self, bundle: &PromptBundle) -> Result<TransportReply, VlmError> {
        let digest = bundle.digest();
        self.entries
            .get(&digest)
            .map(CassetteEntry::reply)
            .ok_or(VlmError::CassetteMiss(digest))
    }
}

/// Append-only cassette file shared between worker threads.
#[derive(Debug)]
pub struct CassetteWriter {
    out: Mutex<BufWriter<File>>,
}

impl CassetteWriter {
    pub fn append_to(path: &Path) -> Result<Self, VlmError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CassetteWriter {
            out: Mutex::new(BufWriter::new(file)),
        })
    }

    pub fn write(&self, entry: &CassetteEntry) -> Result<(), VlmError> {
        let line = serde_json::to_string(entry).expect("cassette entries serialize");
        let mut out = self.out.lock().unwrap_or_else(|e| e.into_inner());
        writeln!(out, "{line}")?;
        out.flush()?;
        Ok(())
    }
}

/// Forwards to an inner transport and records every reply it receives.
pub struct RecordingTransport<T> {
    inner: T,
    writer: CassetteWriter,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T, writer: CassetteWriter) -> Self {
        RecordingTransport { inner, writer }
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn exchange(&self, bundle: &PromptBundle) -> Result<TransportReply, VlmError> {
        let reply = self.inner.exchange(bundle)?;
        self.writer.write(&CassetteEntry::new(bundle, &reply))?;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::RenderedImage;
    use crate::vlm::{build_prompt, send, MockScript, MockTransport, PromptConfig};

    fn bundle(marker: usize) -> PromptBundle {
        let mut a = RenderedImage::blank(16, 16);
        a.pixels[marker] = 0;
        build_prompt(&[a, RenderedImage::blank(16, 16)], &PromptConfig::default()).unwrap()
    }

    #[test]
    fn record_then_replay_reproduces_exchanges() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mock = MockTransport::new(MockScript::Seeded { seed: 3, malformed_rate: 0.3, refusal_rate: 0.1 });
        let rec = RecordingTransport::new(mock, CassetteWriter::append_to(&path).unwrap());
        let live: Vec<_> = (0..30).map(|i| send("p", &bundle(i), &rec).map_err(|e| e.to_string())).collect();

        let replay = ReplayTransport::open(&path).unwrap();
        assert!(replay.len() >= 30);
        for (i, want) in live.iter().enumerate() {
            let got = send("p", &bundle(i), &replay).map_err(|e| e.to_string());
            match (want, got) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a.verdicts, b.verdicts);
                    assert_eq!(a.token_logprobs, b.token_logprobs);
                    assert_eq!(a.raw_response_text, b.raw_response_text);
                }
                (Err(a), Err(b)) => assert_eq!(a, &b),
                (a, b) => panic!("{a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn miss_names_the_digest() {
        let b = bundle(0);
        match ReplayTransport::default().exchange(&b) {
            Err(VlmError::CassetteMiss(d)) => assert_eq!(d, b.digest()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn entry_json_has_expected_fields() {
        let e = CassetteEntry {
            prompt_digest: "ab".into(),
            bundle_summary: "s".into(),
            raw_response_text: "{}".into(),
            token_logprobs: vec![StreamToken { token: "x".into(), logprob: -0.5 }],
            provider_tag: "p".into(),
            refusal: None,
        };
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys.len(), 5);
        for k in ["prompt_digest", "bundle_summary", "raw_response_text", "token_logprobs", "provider_tag"] {
            assert!(keys.contains(&k));
        }
        let back: CassetteEntry = serde_json::from_value(v).unwrap();
        assert_eq!(back, e);
    }
}
