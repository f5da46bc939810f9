//! In-process OpenAI-compatible HTTP server for offline tests.
//!
//! Chat replies come from a caller-supplied handler over the user message
//! content; embeddings are deterministic functions of the input text.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// A request as seen by the stub.
#[derive(Debug, Clone)]
pub struct StubRequest {
    pub path: String,
    pub body: String,
    pub authorization: Option<String>,
}

impl StubRequest {
    /// Content of the last chat message, if the body is a chat request.
    pub fn content(&self) -> Option<String> {
        let v: Value = serde_json::from_str(&self.body).ok()?;
        v["messages"].as_array()?.last()?["content"].as_str().map(str::to_owned)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StubReply {
    /// Chat completion whose message content is the given text.
    Text(String),
    /// Raw status and body.
    Raw(u16, String),
}

type Handler = dyn Fn(&StubRequest) -> StubReply + Send + Sync;
type Embedder = dyn Fn(&[String]) -> Vec<Vec<f64>> + Send + Sync;

pub struct StubServer {
    server: Arc<tiny_http::Server>,
    url: String,
    thread: Option<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
    log: Arc<Mutex<Vec<StubRequest>>>,
}

/// Deterministic unit-scale vector derived from the text's SHA-256.
pub fn stub_embedding(text: &str, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let h = Sha256::digest(format!("{i}:{text}").as_bytes());
            let x = u64::from_le_bytes(h[..8].try_into().unwrap());
            (x >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

impl StubServer {
    /// Serves chat completions from `handler` and `dim`-dimensional embeddings.
    pub fn start(dim: usize, handler: impl Fn(&StubRequest) -> StubReply + Send + Sync + 'static) -> Self {
        Self::with_embedder(handler, move |inputs| inputs.iter().map(|t| stub_embedding(t, dim)).collect())
    }

    /// Like [`StubServer::start`] with a custom embeddings function.
    pub fn with_embedder(
        handler: impl Fn(&StubRequest) -> StubReply + Send + Sync + 'static,
        embedder: impl Fn(&[String]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind stub server"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let hits = Arc::new(AtomicUsize::new(0));
        let log = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let embedder: Arc<Embedder> = Arc::new(embedder);
        let thread = {
            let (server, hits, log) = (server.clone(), hits.clone(), log.clone());
            let embedder = embedder.clone();
            std::thread::spawn(move || {
                for mut request in server.incoming_requests() {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    let _ = request.as_reader().read_to_string(&mut body);
                    let authorization = request
                        .headers()
                        .iter()
                        .find(|h| h.field.equiv("Authorization"))
                        .map(|h| h.value.as_str().to_owned());
                    let req = StubRequest { path: request.url().to_owned(), body, authorization };
                    log.lock().unwrap().push(req.clone());
                    let (status, body) = respond(&req, handler.as_ref(), embedder.as_ref());
                    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).unwrap();
                    let resp = tiny_http::Response::from_string(body).with_status_code(status).with_header(header);
                    let _ = request.respond(resp);
                }
            })
        };
        Self { server, url: format!("http://127.0.0.1:{port}"), thread: Some(thread), hits, log }
    }

    /// Answers every question with `answer_for(question)`, ignoring exemplars.
    pub fn answering(answer_for: impl Fn(&str) -> String + Send + Sync + 'static) -> Self {
        Self::start(8, move |req| {
            let content = req.content().unwrap_or_default();
            let question = content.rsplit("\n\n").next().unwrap_or_default();
            StubReply::Text(answer_for(question))
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Requests received so far.
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn requests(&self) -> Vec<StubRequest> {
        self.log.lock().unwrap().clone()
    }
}

fn respond(req: &StubRequest, handler: &Handler, embedder: &Embedder) -> (u16, String) {
    match req.path.as_str() {
        "/v1/chat/completions" => match handler(req) {
            StubReply::Text(text) => {
                let v = json!({
                    "id": "stub",
                    "object": "chat.completion",
                    "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                });
                (200, v.to_string())
            }
            StubReply::Raw(status, body) => (status, body),
        },
        "/v1/embeddings" => {
            let v: Value = serde_json::from_str(&req.body).unwrap_or(Value::Null);
            let inputs: Vec<String> = match &v["input"] {
                Value::String(s) => vec![s.clone()],
                Value::Array(a) => a.iter().filter_map(|x| x.as_str().map(str::to_owned)).collect(),
                _ => return (400, r#"{"error":"missing input"}"#.to_owned()),
            };
            let data: Vec<Value> = embedder(&inputs)
                .into_iter()
                .enumerate()
                .map(|(i, v)| json!({"object": "embedding", "index": i, "embedding": v}))
                .collect();
            (200, json!({"object": "list", "data": data}).to_string())
        }
        _ => (404, r#"{"error":"not found"}"#.to_owned()),
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
