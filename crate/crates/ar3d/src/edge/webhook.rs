//! Minimal HTTP/1.1 POST client for webhook event delivery.
//!
//! Deliberately tiny: plain-http only, one request per connection, a status
//! line is all we parse. Retries with bounded exponential backoff live in
//! [`post_json_with_retry`].

use std::io::{Read, Write};
use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use url::Url;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebhookConfig {
    pub url: String,
    /// Additional attempts after the first failure.
    pub max_retries: u32,
    /// First backoff delay; doubles per retry, capped at 2 s.
    pub base_delay_ms: u64,
}

impl WebhookConfig {
    pub fn new(url: impl Into<String>) -> Self {
        WebhookConfig {
            url: url.into(),
            max_retries: 5,
            base_delay_ms: 100,
        }
    }
}

const IO_TIMEOUT: Duration = Duration::from_secs(5);
const MAX_BACKOFF_MS: u64 = 2_000;

/// POSTs `body` as application/json; returns the response status code.
pub fn post_json(url: &str, body: &str) -> Result<u16> {
    let parsed = Url::parse(url)
        .map_err(|e| Error::Delivery(format!("webhook url '{}': {}", url, e)))?;
    if parsed.scheme() != "http" {
        return Err(Error::Delivery(format!(
            "webhook url '{}': only http is supported",
            url
        )));
    }
    let host = parsed
        .host_str()
        .ok_or_else(|| Error::Delivery(format!("webhook url '{}': missing host", url)))?;
    let port = parsed.port_or_known_default().unwrap_or(80);

    let mut stream = TcpStream::connect((host, port))
        .map_err(|e| Error::Delivery(format!("connect {}:{}: {}", host, port, e)))?;
    stream.set_read_timeout(Some(IO_TIMEOUT)).ok();
    stream.set_write_timeout(Some(IO_TIMEOUT)).ok();

    let path = match parsed.query() {
        Some(q) => format!("{}?{}", parsed.path(), q),
        None => parsed.path().to_string(),
    };
    let request = format!(
        "POST {} HTTP/1.1\r\nHost: {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        path,
        host,
        body.len(),
        body
    );
    stream
        .write_all(request.as_bytes())
        .map_err(|e| Error::Delivery(format!("send to {}: {}", url, e)))?;

    let mut response = Vec::new();
    stream
        .read_to_end(&mut response)
        .map_err(|e| Error::Delivery(format!("read from {}: {}", url, e)))?;
    parse_status(&response)
        .ok_or_else(|| Error::Delivery(format!("malformed response from {}", url)))
}

fn parse_status(response: &[u8]) -> Option<u16> {
    let line_end = response.iter().position(|&b| b == b'\r')?;
    let line = std::str::from_utf8(&response[..line_end]).ok()?;
    let mut parts = line.split_whitespace();
    let version = parts.next()?;
    if !version.starts_with("HTTP/") {
        return None;
    }
    parts.next()?.parse().ok()
}

/// Delivers with retries: any 2xx status counts as delivered, everything
/// else (including connection errors) triggers backoff and another attempt
/// until the retry budget is spent.
pub fn post_json_with_retry(cfg: &WebhookConfig, body: &str) -> Result<()> {
    let mut delay = cfg.base_delay_ms;
    let mut last_failure = String::new();
    for attempt in 0..=cfg.max_retries {
        if attempt > 0 {
            thread::sleep(Duration::from_millis(delay));
            delay = (delay * 2).min(MAX_BACKOFF_MS);
        }
        match post_json(&cfg.url, body) {
            Ok(status) if (200..300).contains(&status) => return Ok(()),
            Ok(status) => last_failure = format!("status {}", status),
            Err(e) => last_failure = e.to_string(),
        }
    }
    Err(Error::Delivery(format!(
        "{} after {} attempts: {}",
        cfg.url,
        cfg.max_retries + 1,
        last_failure
    )))
}
