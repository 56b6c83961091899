//! Blocking JSON-over-HTTP plumbing shared by the embedding and chat
//! completion clients: bounded in-flight requests and exponential backoff.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HttpError {
    #[error("request timed out")]
    Timeout,
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl HttpError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, HttpError::Decode(_))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{last} (after {attempts} attempt(s))")]
pub struct RetryExhausted {
    pub attempts: u32,
    pub last: HttpError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 250,
            max_backoff_ms: 8_000,
            timeout_secs: 120,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): initial * 2^(retry-1), capped.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// Counting semaphore capping concurrent requests.
#[derive(Debug)]
pub struct InFlightLimiter {
    max: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut active = self.0.active.lock().unwrap_or_else(|e| e.into_inner());
        *active -= 1;
        self.0.freed.notify_one();
    }
}

impl InFlightLimiter {
    pub fn new(max: usize) -> Self {
        InFlightLimiter {
            max: max.max(1),
            active: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock().unwrap_or_else(|e| e.into_inner());
        while *active >= self.max {
            active = self.freed.wait(active).unwrap_or_else(|e| e.into_inner());
        }
        *active += 1;
        Permit(self)
    }

    pub fn max(&self) -> usize {
        self.max
    }
}

#[derive(Debug)]
pub struct JsonClient {
    client: reqwest::blocking::Client,
    url: String,
    bearer: Option<String>,
    policy: RetryPolicy,
    limiter: InFlightLimiter,
}

impl JsonClient {
    pub fn new(
        url: impl Into<String>,
        bearer: Option<String>,
        policy: RetryPolicy,
        max_in_flight: usize,
    ) -> Result<Self, HttpError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(policy.timeout_secs))
            .build()
            .map_err(|e| HttpError::Transport(e.to_string()))?;
        Ok(JsonClient {
            client,
            url: url.into(),
            bearer,
            policy,
            limiter: InFlightLimiter::new(max_in_flight),
        })
    }

    fn post_once(&self, body: &Value) -> Result<Value, HttpError> {
        let _permit = self.limiter.acquire();
        let mut req = self.client.post(&self.url).json(body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                HttpError::Timeout
            } else {
                HttpError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(HttpError::RateLimited);
        }
        let text = resp.text().map_err(|e| HttpError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(HttpError::Status {
                status: status.as_u16(),
                body: text.chars().take(512).collect(),
            });
        }
        serde_json::from_str(&text).map_err(|e| HttpError::Decode(e.to_string()))
    }

    /// POSTs `body`, retrying retryable failures with exponential backoff.
    pub fn post(&self, body: &Value) -> Result<Value, RetryExhausted> {
        let max = self.policy.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(body) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() && attempt < max => {
                    let wait = self.policy.backoff(attempt);
                    log::warn!("POST {} failed ({e}); retry {attempt}/{} in {wait:?}", self.url, max - 1);
                    std::thread::sleep(wait);
                }
                Err(e) => return Err(RetryExhausted { attempts: attempt, last: e }),
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::sync::Arc;

    fn fast_policy(max_attempts: u32) -> RetryPolicy {
        RetryPolicy { max_attempts, initial_backoff_ms: 1, max_backoff_ms: 2, timeout_secs: 5 }
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy { initial_backoff_ms: 100, max_backoff_ms: 350, ..Default::default() };
        assert_eq!(p.backoff(1), Duration::from_millis(100));
        assert_eq!(p.backoff(2), Duration::from_millis(200));
        assert_eq!(p.backoff(3), Duration::from_millis(350));
        assert_eq!(p.backoff(80), Duration::from_millis(350));
    }

    #[test]
    fn retries_server_errors_then_succeeds() {
        let stub = testing::serve(vec![
            (503, "{}".into()),
            (429, "{}".into()),
            (200, r#"{"ok":true}"#.into()),
        ]);
        let c = JsonClient::new(stub.url, None, fast_policy(3), 1).unwrap();
        assert_eq!(c.post(&json!({"a":1})).unwrap(), json!({"ok": true}));
        assert_eq!(stub.bodies.lock().unwrap().len(), 3);
    }

    #[test]
    fn unreachable_endpoint_reports_attempts() {
        // bind then drop to get a port with nothing listening
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let c = JsonClient::new(format!("http://127.0.0.1:{port}/x"), None, fast_policy(4), 1).unwrap();
        let err = c.post(&json!({})).unwrap_err();
        assert_eq!(err.attempts, 4);
        assert!(matches!(err.last, HttpError::Transport(_)));
    }

    #[test]
    fn limiter_caps_concurrency() {
        let limiter = Arc::new(InFlightLimiter::new(2));
        let peak = Arc::new(Mutex::new((0usize, 0usize)));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (l, p) = (limiter.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _g = l.acquire();
                    {
                        let mut p = p.lock().unwrap();
                        p.0 += 1;
                        p.1 = p.1.max(p.0);
                    }
                    std::thread::sleep(Duration::from_millis(5));
                    p.lock().unwrap().0 -= 1;
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.lock().unwrap().1 <= 2);
    }
}
