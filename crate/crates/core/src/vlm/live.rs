//! Chat-completions HTTP transport.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{PromptBundle, StreamToken, Transport, TransportReply, VlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token. Empty
    /// sends no Authorization header.
    pub api_key_env: String,
    pub max_in_flight: usize,
    /// Upper bound on requests started in any 60 s window.
    pub requests_per_minute: Option<u32>,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub timeout_s: u64,
    pub max_tokens: Option<u32>,
}

impl Default for LiveConfig {
    fn default() -> Self {
        LiveConfig {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 4,
            requests_per_minute: None,
            max_attempts: 5,
            initial_backoff_ms: 1000,
            timeout_s: 120,
            max_tokens: None,
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

struct RateLimiter {
    per_minute: u32,
    started: Mutex<VecDeque<Instant>>,
}

impl RateLimiter {
    fn wait_turn(&self) {
        const WINDOW: Duration = Duration::from_secs(60);
        loop {
            let mut started = self.started.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            while started.front().is_some_and(|t| now.duration_since(*t) >= WINDOW) {
                started.pop_front();
            }
            if started.len() < self.per_minute as usize {
                started.push_back(now);
                return;
            }
            let wait = WINDOW - now.duration_since(started[0]);
            drop(started);
            std::thread::sleep(wait);
        }
    }
}

pub struct LiveTransport {
    cfg: LiveConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    in_flight: Semaphore,
    rate: Option<RateLimiter>,
}

impl LiveTransport {
    /// Reads the API key from the configured environment variable.
    pub fn new(cfg: LiveConfig) -> Result<Self, VlmError> {
        let api_key = match cfg.api_key_env.as_str() {
            "" => None,
            var => Some(std::env::var(var).map_err(|_| VlmError::ConfigInvalid(format!("environment variable {var} is not set")))?),
        };
        Self::with_api_key(cfg, api_key)
    }

    pub fn with_api_key(cfg: LiveConfig, api_key: Option<String>) -> Result<Self, VlmError> {
        if cfg.max_in_flight == 0 || cfg.max_attempts == 0 {
            return Err(VlmError::ConfigInvalid("max_in_flight and max_attempts must be at least 1".into()));
        }
        if cfg.requests_per_minute == Some(0) {
            return Err(VlmError::ConfigInvalid("requests_per_minute must be at least 1".into()));
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .build()
            .into();
        Ok(LiveTransport {
            in_flight: Semaphore::new(cfg.max_in_flight),
            rate: cfg.requests_per_minute.map(|per_minute| RateLimiter {
                per_minute,
                started: Mutex::new(VecDeque::new()),
            }),
            api_key,
            agent,
            cfg,
        })
    }

    fn attempt(&self, body: &Value) -> Result<TransportReply, (VlmError, Option<Duration>)> {
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| (classify(e), None))?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp.body_mut().read_to_string().map_err(|e| (classify(e), None))?;
        if status != 200 {
            let transient = status == 408 || status == 429 || status >= 500;
            let snippet: String = text.chars().take(200).collect();
            return Err((VlmError::transport(format!("HTTP {status}: {snippet}"), transient), retry_after));
        }
        let json: Value = serde_json::from_str(&text)
            .map_err(|e| (VlmError::transport(format!("response body is not JSON: {e}"), false), None))?;
        parse_chat_response(&json, &self.cfg.model).map_err(|e| (e, None))
    }
}

fn classify(e: ureq::Error) -> VlmError {
    let transient = matches!(
        e,
        ureq::Error::Io(_) | ureq::Error::Timeout(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound | ureq::Error::Protocol(_)
    );
    VlmError::transport(e.to_string(), transient)
}

/// JSON body for an OpenAI-style chat-completions request.
pub fn request_body(bundle: &PromptBundle, model: &str, max_tokens: Option<u32>) -> Value {
    let mut content = vec![json!({"type": "text", "text": bundle.user_text})];
    for img in &bundle.images {
        let b64 = base64::engine::general_purpose::STANDARD.encode(&img.png);
        content.push(json!({"type": "text", "text": img.label.caption()}));
        content.push(json!({"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{b64}")}}));
    }
    let mut messages = vec![
        json!({"role": "system", "content": bundle.system_text}),
        json!({"role": "user", "content": content}),
    ];
    if let Some(r) = &bundle.repair {
        messages.push(json!({"role": "assistant", "content": r.previous_response}));
        messages.push(json!({"role": "user", "content": r.instruction}));
    }
    let mut body = json!({
        "model": model,
        "messages": messages,
        "temperature": bundle.decoding.temperature,
        "seed": bundle.decoding.seed,
        "logprobs": bundle.decoding.want_logprobs,
    });
    if let Some(n) = max_tokens {
        body["max_tokens"] = json!(n);
    }
    body
}

/// Read the first choice of a chat-completions response.
pub fn parse_chat_response(json: &Value, fallback_tag: &str) -> Result<TransportReply, VlmError> {
    let choice = json
        .pointer("/choices/0")
        .ok_or_else(|| VlmError::transport("response has no choices", false))?;
    let provider_tag = json["model"].as_str().unwrap_or(fallback_tag).to_string();
    let message = &choice["message"];
    let mut refusal = message["refusal"].as_str().filter(|s| !s.is_empty()).map(str::to_string);
    if refusal.is_none() && choice["finish_reason"].as_str() == Some("content_filter") {
        refusal = Some("content_filter".into());
    }
    let token_logprobs = choice
        .pointer("/logprobs/content")
        .and_then(Value::as_array)
        .map(|toks| {
            toks.iter()
                .filter_map(|t| {
                    Some(StreamToken {
                        token: t["token"].as_str()?.to_string(),
                        logprob: t["logprob"].as_f64()?,
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(TransportReply {
        raw_response_text: message["content"].as_str().unwrap_or_default().to_string(),
        token_logprobs,
        provider_tag,
        refusal,
    })
}

impl Transport for LiveTransport {
    fn exchange(&self, bundle: &PromptBundle) -> Result<TransportReply, VlmError> {
        let body = request_body(bundle, &self.cfg.model, self.cfg.max_tokens);
        let _permit = self.in_flight.acquire();
        let mut backoff = Duration::from_millis(self.cfg.initial_backoff_ms);
        let mut attempt = 1;
        loop {
            if let Some(rate) = &self.rate {
                rate.wait_turn();
            }
            match self.attempt(&body) {
                Ok(reply) => return Ok(reply),
                Err((VlmError::Transport { message, transient: true }, retry_after)) if attempt < self.cfg.max_attempts => {
                    let wait = retry_after.unwrap_or(backoff).min(Duration::from_secs(60));
                    log::warn!("attempt {attempt} failed ({message}); retrying in {wait:?}");
                    std::thread::sleep(wait);
                    backoff = backoff.saturating_mul(2);
                    attempt += 1;
                }
                Err((e, _)) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::RenderedImage;
    use crate::vlm::{build_prompt, send, PromptConfig};
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Captured {
        head: String,
        body: String,
    }

    /// Answers each connection with the next scripted (status, body).
    fn serve(script: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<Captured>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in script {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream);
                let mut head = String::new();
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                    head.push_str(&line);
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
                seen.push(Captured {
                    head,
                    body: String::from_utf8(buf).unwrap(),
                });
            }
            seen
        });
        (url, handle)
    }

    fn ok_body() -> String {
        json!({
            "model": "test-model",
            "choices": [{
                "finish_reason": "stop",
                "message": {"role": "assistant", "content": "{\"initial_verdict\": \"Same Identity\", \"reasoning\": \"r\", \"final_verdict\": \"Different Identity\", \"certainty\": 70}"},
                "logprobs": {"content": [
                    {"token": "{\"", "logprob": 0.0},
                    {"token": "initial_verdict", "logprob": 0.0},
                    {"token": "\":", "logprob": 0.0},
                    {"token": " \"", "logprob": 0.0},
                    {"token": "Same", "logprob": -0.2},
                    {"token": " Identity", "logprob": 0.0},
                    {"token": "\", \"reasoning\": \"r\", \"final_verdict\": \"", "logprob": 0.0},
                    {"token": "Different", "logprob": -0.4},
                    {"token": " Identity\", \"certainty\": 70}", "logprob": 0.0}
                ]}
            }]
        })
        .to_string()
    }

    fn cfg(url: String) -> LiveConfig {
        LiveConfig {
            endpoint: url,
            model: "test-model".into(),
            api_key_env: String::new(),
            initial_backoff_ms: 1,
            timeout_s: 10,
            ..Default::default()
        }
    }

    fn bundle() -> PromptBundle {
        build_prompt(&[RenderedImage::blank(8, 8), RenderedImage::blank(8, 8)], &PromptConfig::default()).unwrap()
    }

    #[test]
    fn request_carries_decoding_images_and_auth() {
        let (url, server) = serve(vec![(200, ok_body())]);
        let t = LiveTransport::with_api_key(cfg(url), Some("sekret".into())).unwrap();
        let ex = send("000001", &bundle(), &t).unwrap();
        assert_eq!(ex.provider_tag, "test-model");
        assert_eq!(ex.token_logprobs.len(), 9);
        let seen = server.join().unwrap();
        assert!(seen[0].head.to_ascii_lowercase().contains("authorization: bearer sekret"));
        let body: Value = serde_json::from_str(&seen[0].body).unwrap();
        assert_eq!(body["temperature"], json!(0.0));
        assert_eq!(body["seed"], json!(42));
        assert_eq!(body["logprobs"], json!(true));
        assert_eq!(body["messages"][0]["role"], "system");
        let user = body["messages"][1]["content"].as_array().unwrap();
        let urls: Vec<&str> = user.iter().filter_map(|c| c.pointer("/image_url/url")?.as_str()).collect();
        assert_eq!(urls.len(), 2);
        assert!(urls.iter().all(|u| u.starts_with("data:image/png;base64,iVBORw0KGgo")));
    }

    #[test]
    fn transient_failures_are_retried() {
        let (url, server) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, ok_body())]);
        let t = LiveTransport::with_api_key(cfg(url), None).unwrap();
        assert!(t.exchange(&bundle()).is_ok());
        let seen = server.join().unwrap();
        assert_eq!(seen.len(), 3);
        assert!(!seen[0].head.to_ascii_lowercase().contains("authorization"));
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let (url, server) = serve(vec![(500, "{}".into()); 5]);
        let t = LiveTransport::with_api_key(cfg(url), None).unwrap();
        assert!(matches!(t.exchange(&bundle()), Err(VlmError::Transport { transient: true, .. })));
        assert_eq!(server.join().unwrap().len(), 5);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, server) = serve(vec![(401, "{\"error\": \"bad key\"}".into())]);
        let t = LiveTransport::with_api_key(cfg(url), None).unwrap();
        match t.exchange(&bundle()) {
            Err(VlmError::Transport { transient: false, message }) => assert!(message.contains("401")),
            other => panic!("{other:?}"),
        }
        assert_eq!(server.join().unwrap().len(), 1);
    }

    #[test]
    fn refusals_are_detected() {
        let j = json!({"choices": [{"finish_reason": "stop", "message": {"content": null, "refusal": "I can't help with identity verification."}}]});
        let r = parse_chat_response(&j, "m").unwrap();
        assert!(r.refusal.is_some());
        assert_eq!(r.provider_tag, "m");
        let j = json!({"choices": [{"finish_reason": "content_filter", "message": {"content": ""}}]});
        assert_eq!(parse_chat_response(&j, "m").unwrap().refusal.as_deref(), Some("content_filter"));
    }

    #[test]
    fn repair_turn_appends_messages() {
        let b = bundle().with_repair("garbage");
        let body = request_body(&b, "m", None);
        let msgs = body["messages"].as_array().unwrap();
        assert_eq!(msgs.len(), 4);
        assert_eq!(msgs[2]["content"], "garbage");
        assert!(body.get("max_tokens").is_none());
    }

    #[test]
    fn missing_key_variable_is_config_error() {
        let c = LiveConfig {
            api_key_env: "SIGVERIFY_TEST_SURELY_UNSET_VAR".into(),
            ..Default::default()
        };
        assert!(matches!(LiveTransport::new(c), Err(VlmError::ConfigInvalid(_))));
    }

    #[test]
    fn semaphore_bounds_concurrency() {
        let sem = Arc::new(Semaphore::new(2));
        let now = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let threads: Vec<_> = (0..8)
            .map(|_| {
                let (sem, now, peak) = (sem.clone(), now.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = sem.acquire();
                    let n = now.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(n, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    now.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        threads.into_iter().for_each(|t| t.join().unwrap());
        assert_eq!(peak.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn rate_limiter_admits_up_to_cap_immediately() {
        let r = RateLimiter {
            per_minute: 3,
            started: Mutex::new(VecDeque::new()),
        };
        let t0 = Instant::now();
        for _ in 0..3 {
            r.wait_turn();
        }
        assert!(t0.elapsed() < Duration::from_secs(1));
        assert_eq!(r.started.lock().unwrap().len(), 3);
    }
}
