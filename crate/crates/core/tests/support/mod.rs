//! In-process HTTP similarity service speaking the remote oracle protocol,
//! scoring with the toy embedder.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use gap_core::oracle::remote::{
    decode_image, BatchBody, BatchResponse, HealthResponse, ImagePairBody, SimilarityResponse,
};
use gap_core::oracle::{cosine, toy_embed};
use tiny_http::{Header, Response, Server};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Toy,
    /// Every similarity request answers 429.
    RateLimited,
    /// Every similarity answers 2.0.
    OutOfRange,
    /// The first `n` similarity requests answer 503.
    FailFirst(usize),
}

pub struct MockServer {
    pub url: String,
    server: Arc<Server>,
    handle: Option<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
}

impl MockServer {
    pub fn start(behavior: Behavior) -> Self {
        let server = Arc::new(Server::http("127.0.0.1:0").expect("bind mock server"));
        let port = server.server_addr().to_ip().expect("ip listener").port();
        let hits = Arc::new(AtomicUsize::new(0));
        let handle = {
            let server = Arc::clone(&server);
            let hits = Arc::clone(&hits);
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    let mut body = String::new();
                    let _ = req.as_reader().read_to_string(&mut body);
                    let (code, text) = respond(req.url(), &body, behavior, &hits);
                    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(Response::from_string(text).with_status_code(code).with_header(header));
                }
            })
        };
        Self { url: format!("http://127.0.0.1:{port}"), server, handle: Some(handle), hits }
    }

    /// Similarity requests received (health checks excluded).
    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn score(pair: &ImagePairBody) -> Result<f64, String> {
    let a = decode_image(&pair.image_a).map_err(|e| e.to_string())?;
    let b = decode_image(&pair.image_b).map_err(|e| e.to_string())?;
    let ea = toy_embed(&a).map_err(|e| e.to_string())?;
    let eb = toy_embed(&b).map_err(|e| e.to_string())?;
    Ok(cosine(&ea, &eb))
}

fn respond(url: &str, body: &str, behavior: Behavior, hits: &AtomicUsize) -> (u16, String) {
    if url == "/v1/health" {
        let h = HealthResponse { status: "ok".into(), backend: "toy".into() };
        return (200, serde_json::to_string(&h).unwrap());
    }
    let n = hits.fetch_add(1, Ordering::SeqCst);
    match behavior {
        Behavior::RateLimited => return (429, r#"{"detail":"slow down"}"#.into()),
        Behavior::OutOfRange => return (200, r#"{"similarity":2.0}"#.into()),
        Behavior::FailFirst(k) if n < k => return (503, r#"{"detail":"warming up"}"#.into()),
        _ => {}
    }
    let result = match url {
        "/v1/similarity" => serde_json::from_str::<ImagePairBody>(body)
            .map_err(|e| e.to_string())
            .and_then(|p| score(&p))
            .map(|s| serde_json::to_string(&SimilarityResponse { similarity: s }).unwrap()),
        "/v1/similarity_batch" => serde_json::from_str::<BatchBody>(body)
            .map_err(|e| e.to_string())
            .and_then(|b| b.pairs.iter().map(score).collect::<Result<Vec<_>, _>>())
            .map(|s| serde_json::to_string(&BatchResponse { similarities: s }).unwrap()),
        _ => return (404, r#"{"detail":"no such route"}"#.into()),
    };
    match result {
        Ok(text) => (200, text),
        Err(e) => (422, serde_json::json!({ "detail": e }).to_string()),
    }
}
