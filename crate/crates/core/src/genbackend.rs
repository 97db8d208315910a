//! Text-generation backends and extraction of a test method from a
//! completion.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jmodel::syntax;
use crate::lexer::tokenize_lossy;
use crate::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub max_new_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
    pub stop: Vec<String>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams { max_new_tokens: 1024, temperature: 0.0, seed: 42, stop: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend timed out after {elapsed_ms} ms")]
    BackendTimeout { elapsed_ms: u128 },
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
}

pub trait Backend: Send + Sync {
    fn kind(&self) -> &'static str;
    fn generate(&self, instruction: &str, params: &GenParams) -> Result<String, BackendError>;
}

/// Canned completions keyed by the SHA-256 of the instruction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StubBackend {
    pub completions: BTreeMap<String, String>,
    /// Returned for instructions without a canned entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

impl StubBackend {
    pub fn load(path: &Path) -> Result<StubBackend, BackendError> {
        let text = fs::read_to_string(path).map_err(|e| BackendError::BackendUnavailable(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse(format!("{}: {e}", path.display())))
    }
}

impl Backend for StubBackend {
    fn kind(&self) -> &'static str {
        "stub"
    }

    fn generate(&self, instruction: &str, _params: &GenParams) -> Result<String, BackendError> {
        let digest = sha256_hex(instruction);
        self.completions
            .get(&digest)
            .or(self.fallback.as_ref())
            .cloned()
            .ok_or_else(|| BackendError::BackendUnavailable(format!("no canned completion for instruction {digest}")))
    }
}

/// One request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub backend: String,
    pub instruction_digest: String,
    pub params: GenParams,
    pub completion_digest: String,
    pub completion: String,
}

/// Replays completions from a request log.
#[derive(Debug, Clone, Default)]
pub struct ReplayBackend {
    by_digest: BTreeMap<String, String>,
}

impl ReplayBackend {
    pub fn from_records(records: &[RequestRecord]) -> ReplayBackend {
        ReplayBackend { by_digest: records.iter().map(|r| (r.instruction_digest.clone(), r.completion.clone())).collect() }
    }
}

impl Backend for ReplayBackend {
    fn kind(&self) -> &'static str {
        "replay"
    }

    fn generate(&self, instruction: &str, _params: &GenParams) -> Result<String, BackendError> {
        let digest = sha256_hex(instruction);
        self.by_digest
            .get(&digest)
            .cloned()
            .ok_or_else(|| BackendError::BackendUnavailable(format!("instruction {digest} not in request log")))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    seed: u64,
    stop: &'a [String],
}

/// POSTs `{prompt, max_tokens, temperature, seed, stop}` and reads `text`.
/// Responses shaped like common completion servers (`choices[0].text`,
/// `content`, `response`) are accepted too.
pub struct HttpBackend {
    url: String,
    token: Option<String>,
    timeout: Duration,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(url: &str, token: Option<String>, timeout: Duration) -> Result<HttpBackend, BackendError> {
        let client =
            reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| BackendError::BackendUnavailable(e.to_string()))?;
        Ok(HttpBackend { url: url.to_string(), token, timeout, client })
    }
}

pub fn completion_text(body: &str) -> Result<String, BackendError> {
    let v: serde_json::Value = serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    let text = v
        .get("text")
        .or_else(|| v.pointer("/choices/0/text"))
        .or_else(|| v.pointer("/choices/0/message/content"))
        .or_else(|| v.get("content"))
        .or_else(|| v.get("response"))
        .and_then(|t| t.as_str());
    text.map(str::to_string).ok_or_else(|| BackendError::MalformedResponse("no completion text in response".into()))
}

impl Backend for HttpBackend {
    fn kind(&self) -> &'static str {
        "http"
    }

    fn generate(&self, instruction: &str, params: &GenParams) -> Result<String, BackendError> {
        let started = Instant::now();
        let body = WireRequest {
            prompt: instruction,
            max_tokens: params.max_new_tokens,
            temperature: params.temperature,
            seed: params.seed,
            stop: &params.stop,
        };
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                BackendError::BackendTimeout { elapsed_ms: started.elapsed().as_millis() }
            } else {
                BackendError::BackendUnavailable(e.to_string())
            }
        };
        let resp = req.send().map_err(classify)?;
        let status = resp.status();
        let text = resp.text().map_err(classify)?;
        if started.elapsed() > self.timeout {
            return Err(BackendError::BackendTimeout { elapsed_ms: started.elapsed().as_millis() });
        }
        if !status.is_success() {
            return Err(BackendError::BackendUnavailable(format!("HTTP {status}")));
        }
        completion_text(&text)
    }
}

/// Calls the backend for every instruction with at most `concurrency`
/// requests in flight. Results and log records keep input order.
pub fn generate_all(
    backend: &dyn Backend,
    instructions: &[String],
    params: &GenParams,
    concurrency: usize,
) -> (Vec<Result<String, BackendError>>, Vec<RequestRecord>) {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<String, BackendError>>>> = instructions.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..concurrency.max(1).min(instructions.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(instruction) = instructions.get(i) else { break };
                let r = backend.generate(instruction, params);
                *slots[i].lock().expect("slot lock") = Some(r);
            });
        }
    });
    let results: Vec<Result<String, BackendError>> =
        slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every slot filled")).collect();
    let records = instructions
        .iter()
        .zip(&results)
        .filter_map(|(i, r)| {
            let completion = r.as_ref().ok()?;
            Some(RequestRecord {
                backend: backend.kind().to_string(),
                instruction_digest: sha256_hex(i),
                params: params.clone(),
                completion_digest: sha256_hex(completion),
                completion: completion.clone(),
            })
        })
        .collect();
    (results, records)
}

pub fn write_request_log(path: &Path, records: &[RequestRecord]) -> io::Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    fs::write(path, out)
}

#[derive(Debug, Error)]
#[error("{path}: {message}")]
pub struct RequestLogError {
    pub path: PathBuf,
    pub message: String,
}

pub fn read_request_log(path: &Path) -> Result<Vec<RequestRecord>, RequestLogError> {
    let err = |message: String| RequestLogError { path: path.to_path_buf(), message };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| err(format!("line {}: {e}", i + 1))))
        .collect()
}

fn test_annotation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@(?:org\.junit\.(?:jupiter\.api\.)?)?(?:Test|ParameterizedTest|RepeatedTest)\b").expect("static regex"))
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let body = &after[body_start..];
        match body.find("```") {
            Some(close) => {
                out.push(&body[..close]);
                rest = &body[close + 3..];
            }
            None => {
                out.push(body);
                break;
            }
        }
    }
    out
}

/// Method text starting at `from` (a test annotation), ending at the brace
/// that closes its body.
fn method_from(text: &str, from: usize) -> Option<&str> {
    let tail = &text[from..];
    let mut depth_paren = 0i32;
    let mut depth_brace = 0i32;
    for tok in tokenize_lossy(tail) {
        match tok.text {
            "(" => depth_paren += 1,
            ")" => depth_paren -= 1,
            ";" if depth_paren == 0 && depth_brace == 0 => return None,
            "{" if depth_paren == 0 => depth_brace += 1,
            "}" if depth_paren == 0 => {
                depth_brace -= 1;
                if depth_brace == 0 {
                    return Some(&tail[..tok.end()]);
                }
                if depth_brace < 0 {
                    return None;
                }
            }
            _ => {}
        }
    }
    None
}

/// First complete test-annotated method in the completion, fences and
/// surrounding prose removed. Fenced blocks are searched before the raw
/// text.
pub fn extract_candidate(completion: &str) -> Option<String> {
    let blocks = fenced_blocks(completion);
    let mut sources: Vec<&str> = blocks;
    sources.push(completion);
    for src in sources {
        for m in test_annotation().find_iter(src) {
            if let Some(method) = method_from(src, m.start()) {
                if syntax::parses_as_method(method) {
                    return Some(method.trim().to_string());
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use std::io::{Read, Write};
    use std::net::TcpListener;

    use super::*;

    #[test]
    fn stub_serves_by_digest() {
        let mut stub = StubBackend::default();
        stub.completions.insert(sha256_hex("hello"), "world".into());
        assert_eq!(stub.generate("hello", &GenParams::default()).unwrap(), "world");
        assert!(matches!(stub.generate("other", &GenParams::default()), Err(BackendError::BackendUnavailable(_))));
        stub.fallback = Some("fb".into());
        assert_eq!(stub.generate("other", &GenParams::default()).unwrap(), "fb");
    }

    #[test]
    fn response_shapes() {
        assert_eq!(completion_text(r#"{"text":"a"}"#).unwrap(), "a");
        assert_eq!(completion_text(r#"{"choices":[{"text":"b"}]}"#).unwrap(), "b");
        assert_eq!(completion_text(r#"{"content":"c"}"#).unwrap(), "c");
        assert!(matches!(completion_text("<html>"), Err(BackendError::MalformedResponse(_))));
        assert!(matches!(completion_text(r#"{"x":1}"#), Err(BackendError::MalformedResponse(_))));
    }

    fn serve_once(response: &'static str, delay: Duration) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = [0u8; 4096];
            let _ = s.read(&mut buf);
            std::thread::sleep(delay);
            let _ = write!(
                s,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
                response.len(),
                response
            );
        });
        format!("http://{addr}/generate")
    }

    #[test]
    fn http_round_trip_and_errors() {
        let url = serve_once(r#"{"text":"done"}"#, Duration::ZERO);
        let b = HttpBackend::new(&url, None, Duration::from_secs(5)).unwrap();
        assert_eq!(b.generate("p", &GenParams::default()).unwrap(), "done");

        let url = serve_once("not json", Duration::ZERO);
        let b = HttpBackend::new(&url, None, Duration::from_secs(5)).unwrap();
        assert!(matches!(b.generate("p", &GenParams::default()), Err(BackendError::MalformedResponse(_))));

        let url = serve_once(r#"{"text":"late"}"#, Duration::from_millis(800));
        let b = HttpBackend::new(&url, None, Duration::from_millis(200)).unwrap();
        match b.generate("p", &GenParams::default()) {
            Err(BackendError::BackendTimeout { elapsed_ms }) => assert!(elapsed_ms >= 150),
            other => panic!("expected timeout, got {other:?}"),
        }

        let b = HttpBackend::new("http://127.0.0.1:9/none", None, Duration::from_secs(2)).unwrap();
        assert!(matches!(b.generate("p", &GenParams::default()), Err(BackendError::BackendUnavailable(_))));
    }

    #[test]
    fn bounded_generation_keeps_order_and_replays() {
        let mut stub = StubBackend::default();
        let instructions: Vec<String> = (0..20).map(|i| format!("instruction {i}")).collect();
        for (i, ins) in instructions.iter().enumerate() {
            stub.completions.insert(sha256_hex(ins), format!("completion {i}"));
        }
        let (results, records) = generate_all(&stub, &instructions, &GenParams::default(), 4);
        assert_eq!(
            results.iter().map(|r| r.clone().unwrap()).collect::<Vec<_>>(),
            (0..20).map(|i| format!("completion {i}")).collect::<Vec<_>>()
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("requests.jsonl");
        write_request_log(&path, &records).unwrap();
        let replay = ReplayBackend::from_records(&read_request_log(&path).unwrap());
        let (again, _) = generate_all(&replay, &instructions, &GenParams::default(), 2);
        assert_eq!(again, results);
    }

    #[test]
    fn candidate_extraction() {
        let fenced = "Here's the test:\n```java\n@Test(expected = IllegalStateException.class)\npublic void stops() {\n    new Engine().stop();\n}\n```\nIt checks stop().";
        assert_eq!(
            extract_candidate(fenced).unwrap(),
            "@Test(expected = IllegalStateException.class)\npublic void stops() {\n    new Engine().stop();\n}"
        );
        assert_eq!(extract_candidate("I cannot write that test, sorry."), None);
        let two = "@Test\nvoid a() { if (x) { f(\"}\"); } }\n\n@Test\nvoid b() { g(); }\n";
        assert_eq!(extract_candidate(two).unwrap(), "@Test\nvoid a() { if (x) { f(\"}\"); } }");
        assert_eq!(extract_candidate("@Test\nvoid broken() { f(;\n"), None);
        assert_eq!(extract_candidate("void helper() { }"), None);
    }
}
