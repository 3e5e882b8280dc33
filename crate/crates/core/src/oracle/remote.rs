//! HTTP client for a remote similarity service.
//!
//! Wire protocol (JSON bodies, images as base64-encoded 8-bit PNG):
//!
//! - `GET  /v1/health` -> `{"status":"ok","backend":"<name>"}`
//! - `POST /v1/similarity` `{"image_a","image_b"}` -> `{"similarity": s}`
//! - `POST /v1/similarity_batch` `{"pairs":[{"image_a","image_b"},..]}` ->
//!   `{"similarities":[s,..]}` in request order
//!
//! Status 429 is retried with exponential backoff and then surfaces as
//! [`GapError::BudgetExceeded`]. Transport failures and 5xx responses are
//! retried on the same schedule and then surface as [`GapError::Transport`].

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::error::{GapError, Result};
use crate::image::Image;
use crate::oracle::{QueryLedger, SimilarityOracle};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThrottleConfig {
    /// Ceiling on request starts per second. `None` disables throttling.
    pub max_qps: Option<f64>,
    /// Concurrent requests allowed when unthrottled. 0 means unlimited.
    pub max_in_flight: usize,
}

impl ThrottleConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.max_qps {
            if !(q > 0.0 && q.is_finite()) {
                return Err(GapError::invalid("max_qps must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub transport_retries: u32,
    pub rate_limit_retries: u32,
    pub initial_backoff_ms: u64,
    pub timeout_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { transport_retries: 3, rate_limit_retries: 3, initial_backoff_ms: 200, timeout_ms: 30_000 }
    }
}

impl RetryPolicy {
    fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ImagePairBody {
    pub image_a: String,
    pub image_b: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchBody {
    pub pairs: Vec<ImagePairBody>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimilarityResponse {
    pub similarity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BatchResponse {
    pub similarities: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub backend: String,
}

pub fn encode_image(image: &Image) -> Result<String> {
    Ok(BASE64.encode(image.to_png_bytes()?))
}

pub fn decode_image(text: &str) -> Result<Image> {
    let bytes = BASE64
        .decode(text)
        .map_err(|e| GapError::Protocol(format!("bad base64 image: {e}")))?;
    Image::from_png_bytes(&bytes)
}

fn check_score(s: f64) -> Result<f64> {
    if s.is_finite() && (-1.0..=1.0).contains(&s) {
        Ok(s)
    } else {
        Err(GapError::Protocol(format!("similarity {s} outside [-1, 1]")))
    }
}

#[derive(Debug, Default)]
struct Throttle {
    next_start: Mutex<Option<Instant>>,
}

#[derive(Debug, Default)]
struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
}

pub struct RemoteOracle {
    agent: ureq::Agent,
    base_url: String,
    backend: String,
    throttle_config: ThrottleConfig,
    retry: RetryPolicy,
    throttle: Throttle,
    in_flight: InFlight,
    ledger: QueryLedger,
}

impl std::fmt::Debug for RemoteOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteOracle")
            .field("base_url", &self.base_url)
            .field("backend", &self.backend)
            .field("throttle", &self.throttle_config)
            .finish()
    }
}

impl RemoteOracle {
    /// Connects and runs the health check. Fails if the endpoint is down.
    pub fn connect(endpoint_url: &str, throttle: ThrottleConfig, retry: RetryPolicy) -> Result<Self> {
        throttle.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(retry.timeout_ms)).build();
        let base_url = endpoint_url.trim_end_matches('/').to_string();
        let mut oracle = Self {
            agent,
            base_url,
            backend: String::new(),
            throttle_config: throttle,
            retry,
            throttle: Throttle::default(),
            in_flight: InFlight::default(),
            ledger: QueryLedger::new(),
        };
        let health: HealthResponse = oracle.request(|agent, url| agent.get(&format!("{url}/v1/health")).call())?;
        if health.status != "ok" {
            return Err(GapError::Protocol(format!("health status {:?}", health.status)));
        }
        oracle.backend = health.backend;
        Ok(oracle)
    }

    pub fn endpoint(&self) -> &str {
        &self.base_url
    }

    fn wait_turn(&self) -> Option<std::sync::MutexGuard<'_, Option<Instant>>> {
        let qps = self.throttle_config.max_qps?;
        let interval = Duration::from_secs_f64(1.0 / qps);
        let mut next = self.throttle.next_start.lock().expect("throttle lock");
        if let Some(at) = *next {
            let now = Instant::now();
            if at > now {
                thread::sleep(at - now);
            }
        }
        *next = Some(Instant::now() + interval);
        // held for the whole request: throttled clients are serial
        Some(next)
    }

    fn acquire_slot(&self) {
        let limit = self.throttle_config.max_in_flight;
        if limit == 0 {
            return;
        }
        let mut count = self.in_flight.count.lock().expect("in-flight lock");
        while *count >= limit {
            count = self.in_flight.freed.wait(count).expect("in-flight lock");
        }
        *count += 1;
    }

    fn release_slot(&self) {
        if self.throttle_config.max_in_flight == 0 {
            return;
        }
        *self.in_flight.count.lock().expect("in-flight lock") -= 1;
        self.in_flight.freed.notify_one();
    }

    fn send<F>(&self, call: &F) -> std::result::Result<ureq::Response, ureq::Error>
    where
        F: Fn(&ureq::Agent, &str) -> std::result::Result<ureq::Response, ureq::Error>,
    {
        let _turn = self.wait_turn();
        self.acquire_slot();
        let result = call(&self.agent, &self.base_url);
        self.release_slot();
        result
    }

    fn request<T, F>(&self, call: F) -> Result<T>
    where
        T: for<'de> Deserialize<'de>,
        F: Fn(&ureq::Agent, &str) -> std::result::Result<ureq::Response, ureq::Error>,
    {
        let mut transport_attempts = 0;
        let mut rate_limit_attempts = 0;
        loop {
            match self.send(&call) {
                Ok(resp) => {
                    return resp
                        .into_json::<T>()
                        .map_err(|e| GapError::Protocol(format!("malformed response body: {e}")));
                }
                Err(ureq::Error::Status(429, _)) => {
                    if rate_limit_attempts >= self.retry.rate_limit_retries {
                        return Err(GapError::BudgetExceeded(format!(
                            "rate limited after {} retries",
                            self.retry.rate_limit_retries
                        )));
                    }
                    thread::sleep(self.retry.backoff(rate_limit_attempts));
                    rate_limit_attempts += 1;
                }
                Err(ureq::Error::Status(code, resp)) if code >= 500 => {
                    if transport_attempts >= self.retry.transport_retries {
                        let body = resp.into_string().unwrap_or_default();
                        return Err(GapError::Transport(format!("server error {code}: {body}")));
                    }
                    thread::sleep(self.retry.backoff(transport_attempts));
                    transport_attempts += 1;
                }
                Err(ureq::Error::Status(code, resp)) => {
                    let body = resp.into_string().unwrap_or_default();
                    return Err(GapError::Protocol(format!("request rejected with {code}: {body}")));
                }
                Err(ureq::Error::Transport(t)) => {
                    if transport_attempts >= self.retry.transport_retries {
                        return Err(GapError::Transport(t.to_string()));
                    }
                    thread::sleep(self.retry.backoff(transport_attempts));
                    transport_attempts += 1;
                }
            }
        }
    }
}

impl SimilarityOracle for RemoteOracle {
    fn similarity(&self, a: &Image, b: &Image) -> Result<f64> {
        let body = ImagePairBody { image_a: encode_image(a)?, image_b: encode_image(b)? };
        let resp: SimilarityResponse =
            self.request(|agent, url| agent.post(&format!("{url}/v1/similarity")).send_json(&body))?;
        let s = check_score(resp.similarity)?;
        self.ledger.record_queries(1);
        Ok(s)
    }

    fn similarity_batch(&self, pairs: &[(&Image, &Image)]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let body = BatchBody {
            pairs: pairs
                .iter()
                .map(|(a, b)| Ok(ImagePairBody { image_a: encode_image(a)?, image_b: encode_image(b)? }))
                .collect::<Result<_>>()?,
        };
        let resp: BatchResponse =
            self.request(|agent, url| agent.post(&format!("{url}/v1/similarity_batch")).send_json(&body))?;
        if resp.similarities.len() != pairs.len() {
            return Err(GapError::Protocol(format!(
                "batch of {} pairs answered with {} scores",
                pairs.len(),
                resp.similarities.len()
            )));
        }
        let scores = resp.similarities.into_iter().map(check_score).collect::<Result<Vec<_>>>()?;
        self.ledger.record_queries(scores.len() as u64);
        Ok(scores)
    }

    fn ledger(&self) -> &QueryLedger {
        &self.ledger
    }

    fn backend_name(&self) -> String {
        format!("remote:{}", self.backend)
    }
}
