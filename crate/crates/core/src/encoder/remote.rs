//! HTTP client for an external embedding service.
//!
//! Contract: `POST <url>` with `{"texts": [..]}`; a 2xx response carries
//! `{"dim": <int>, "vectors": [[..], ..]}` with one vector per input text.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{BaseEncoder, EncoderError};
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteEncoderConfig {
    pub url: String,
    /// Expected vector dimension.
    pub dim: usize,
    /// Total time budget for one `embed` call, across all retries.
    #[serde(with = "millis")]
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    #[serde(with = "millis")]
    pub initial_backoff: Duration,
    /// Texts per request in `embed_batch`.
    pub batch_size: usize,
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

impl RemoteEncoderConfig {
    pub fn new(url: impl Into<String>, dim: usize) -> Self {
        Self {
            url: url.into(),
            dim,
            timeout: Duration::from_secs(5),
            max_retries: 3,
            initial_backoff: Duration::from_millis(50),
            batch_size: 64,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

enum Attempt {
    Retry(String),
    Fatal(EncoderError),
}

pub struct RemoteEncoder {
    config: RemoteEncoderConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder").field("config", &self.config).finish()
    }
}

impl RemoteEncoder {
    pub fn new(config: RemoteEncoderConfig) -> Result<Self, EncoderError> {
        if config.dim == 0 {
            return Err(EncoderError::ZeroDimension);
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &RemoteEncoderConfig {
        &self.config
    }

    fn attempt(&self, texts: &[&str], budget: Duration) -> Result<Vec<Vec<f32>>, Attempt> {
        let mut resp = self
            .agent
            .post(&self.config.url)
            .config()
            .timeout_global(Some(budget))
            .build()
            .send_json(EmbedRequest { texts })
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(EncoderError::Remote(format!("HTTP {status}"))));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(EncoderError::Remote(format!("bad response body: {e}"))))?;
        let mismatch = |actual| {
            Attempt::Fatal(EncoderError::DimensionMismatch {
                expected: self.config.dim,
                actual,
            })
        };
        if body.dim != self.config.dim {
            return Err(mismatch(body.dim));
        }
        if body.vectors.len() != texts.len() {
            return Err(Attempt::Fatal(EncoderError::Remote(format!(
                "expected {} vectors, got {}",
                texts.len(),
                body.vectors.len()
            ))));
        }
        if let Some(v) = body.vectors.iter().find(|v| v.len() != self.config.dim) {
            return Err(mismatch(v.len()));
        }
        Ok(body.vectors)
    }

    /// One logical request with retries and exponential backoff, bounded by
    /// the configured total timeout.
    fn request(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, EncoderError> {
        let deadline = Instant::now() + self.config.timeout;
        let mut backoff = self.config.initial_backoff;
        let mut attempts = 0;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                return Err(EncoderError::Timeout {
                    attempts,
                    last: "time budget exhausted".into(),
                });
            }
            attempts += 1;
            let last = match self.attempt(texts, remaining) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => msg,
            };
            if attempts > self.config.max_retries {
                return Err(EncoderError::Timeout { attempts, last });
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            if backoff >= remaining {
                return Err(EncoderError::Timeout { attempts, last });
            }
            std::thread::sleep(backoff);
            backoff *= 2;
        }
    }
}

impl BaseEncoder for RemoteEncoder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EncoderError> {
        Ok(self.request(&[text])?.pop().expect("one vector per text"))
    }

    fn embed_batch(&self, texts: &[&str], _exec: Exec) -> Result<Vec<Vec<f32>>, EncoderError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.batch_size.max(1)) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Minimal HTTP/1.1 server answering every request with `respond(body)`.
    fn mock_server<F>(respond: F) -> (String, Arc<AtomicUsize>)
    where
        F: Fn(&str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                counter.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0u8; len];
                let _ = reader.read_exact(&mut body);
                let (status, payload) = respond(&String::from_utf8_lossy(&body));
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                    payload.len()
                );
            }
        });
        (format!("http://{addr}/embed"), hits)
    }

    #[test]
    fn returns_served_vector() {
        let (url, _) = mock_server(|body| {
            assert!(body.contains("\"texts\""));
            (200, r#"{"dim":3,"vectors":[[0.1,0.2,0.3]]}"#.into())
        });
        let enc = RemoteEncoder::new(RemoteEncoderConfig::new(url, 3)).unwrap();
        assert_eq!(enc.embed("hello").unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn batches_preserve_order() {
        let (url, hits) = mock_server(|body| {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            let vecs: Vec<Vec<f32>> = v["texts"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| vec![t.as_str().unwrap().len() as f32, 1.0])
                .collect();
            (200, serde_json::json!({"dim": 2, "vectors": vecs}).to_string())
        });
        let mut cfg = RemoteEncoderConfig::new(url, 2);
        cfg.batch_size = 2;
        let enc = RemoteEncoder::new(cfg).unwrap();
        let out = enc.embed_batch(&["a", "bb", "ccc"], Exec::Sequential).unwrap();
        assert_eq!(out, vec![vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]]);
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn wrong_dimension_is_rejected() {
        let (url, _) = mock_server(|_| (200, r#"{"dim":2,"vectors":[[0.1,0.2]]}"#.into()));
        let enc = RemoteEncoder::new(RemoteEncoderConfig::new(url, 3)).unwrap();
        assert!(matches!(
            enc.embed("x"),
            Err(EncoderError::DimensionMismatch { expected: 3, actual: 2 })
        ));
    }

    #[test]
    fn server_errors_are_retried() {
        let (url, hits) = mock_server(|_| (503, "{}".into()));
        let mut cfg = RemoteEncoderConfig::new(url, 3);
        cfg.max_retries = 2;
        cfg.initial_backoff = Duration::from_millis(5);
        let enc = RemoteEncoder::new(cfg).unwrap();
        assert!(matches!(enc.embed("x"), Err(EncoderError::Timeout { attempts: 3, .. })));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn down_server_fails_within_budget() {
        // Bind then drop to get a port nobody listens on.
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut cfg = RemoteEncoderConfig::new(format!("http://127.0.0.1:{port}/embed"), 4);
        cfg.timeout = Duration::from_millis(400);
        cfg.max_retries = 100;
        cfg.initial_backoff = Duration::from_millis(10);
        let enc = RemoteEncoder::new(cfg).unwrap();
        let start = Instant::now();
        let err = enc.embed("x").unwrap_err();
        let elapsed = start.elapsed();
        assert!(matches!(err, EncoderError::Timeout { attempts, .. } if attempts > 1), "{err:?}");
        assert!(elapsed <= Duration::from_millis(400) + Duration::from_millis(100), "{elapsed:?}");
    }
}
