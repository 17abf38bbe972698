//! Blocking JSON-over-HTTP client shared by the remote vision and chat backends.

use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request to {url} failed after {attempts} attempts: {message}")]
    Exhausted {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("could not build HTTP client: {0}")]
    Client(String),
    #[error("response from {url} did not decode: {message}")]
    Decode { url: String, message: String },
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl EndpointConfig {
    pub fn new(url: impl Into<String>) -> Self {
        EndpointConfig {
            url: url.into(),
            api_key: None,
            timeout: Duration::from_secs(30),
            retries: 2,
            backoff: Duration::from_millis(500),
            max_in_flight: 4,
        }
    }

    /// Reads the URL and key from the named environment variables.
    pub fn from_env(url_var: &str, key_var: &str) -> Option<Self> {
        let url = std::env::var(url_var).ok().filter(|s| !s.is_empty())?;
        let mut cfg = EndpointConfig::new(url);
        cfg.api_key = std::env::var(key_var).ok().filter(|s| !s.is_empty());
        Some(cfg)
    }

    /// Upper bound on how long one call may block.
    pub fn worst_case(&self) -> Duration {
        let attempts = self.retries + 1;
        let backoff: Duration = (0..self.retries).map(|k| self.backoff * 2u32.pow(k)).sum();
        self.timeout * attempts + backoff
    }
}

/// Counting semaphore bounding concurrent requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n.max(1)),
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

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut free = self.0.free.lock().unwrap_or_else(|e| e.into_inner());
        *free += 1;
        self.0.cv.notify_one();
    }
}

pub struct JsonEndpoint {
    cfg: EndpointConfig,
    client: reqwest::blocking::Client,
    limiter: Limiter,
}

impl std::fmt::Debug for JsonEndpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JsonEndpoint").field("url", &self.cfg.url).finish()
    }
}

impl JsonEndpoint {
    pub fn new(cfg: EndpointConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| TransportError::Client(e.to_string()))?;
        let limiter = Limiter::new(cfg.max_in_flight);
        Ok(JsonEndpoint {
            cfg,
            client,
            limiter,
        })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.cfg
    }

    /// POSTs `body` and decodes the reply, retrying transport failures and
    /// server errors with exponential backoff.
    pub fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, TransportError> {
        let _permit = self.limiter.acquire();
        let attempts = self.cfg.retries + 1;
        let mut delay = self.cfg.backoff;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                thread::sleep(delay);
                delay *= 2;
            }
            let mut req = self.client.post(&self.cfg.url).json(body);
            if let Some(key) = &self.cfg.api_key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    let text = resp.text().map_err(|e| TransportError::Decode {
                        url: self.cfg.url.clone(),
                        message: e.to_string(),
                    })?;
                    return serde_json::from_str(&text).map_err(|e| TransportError::Decode {
                        url: self.cfg.url.clone(),
                        message: e.to_string(),
                    });
                }
                Ok(resp) if resp.status().is_client_error() => {
                    return Err(TransportError::Exhausted {
                        url: self.cfg.url.clone(),
                        attempts: attempt + 1,
                        message: format!("HTTP {}", resp.status()),
                    });
                }
                Ok(resp) => last = format!("HTTP {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
            log::debug!("attempt {} to {} failed: {last}", attempt + 1, self.cfg.url);
        }
        Err(TransportError::Exhausted {
            url: self.cfg.url.clone(),
            attempts,
            message: last,
        })
    }
}
