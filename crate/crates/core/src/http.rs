//! Blocking JSON-over-HTTP helper shared by the remote encoder, LLM and
//! transcription clients.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Connection settings for a remote JSON endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpEndpoint {
    pub base_url: String,
    pub auth_token: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl Default for HttpEndpoint {
    fn default() -> Self {
        Self {
            base_url: String::new(),
            auth_token: None,
            timeout_ms: 30_000,
            retries: 2,
        }
    }
}

impl HttpEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            ..Self::default()
        }
    }
}

pub(crate) struct JsonClient {
    endpoint: HttpEndpoint,
    agent: ureq::Agent,
}

impl JsonClient {
    pub(crate) fn new(endpoint: HttpEndpoint) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
            .build()
            .into();
        Self { endpoint, agent }
    }

    pub(crate) fn endpoint(&self) -> &HttpEndpoint {
        &self.endpoint
    }

    /// POSTs `body` to `base_url` + `path` and decodes the JSON reply. Each
    /// failure is retried up to `retries` times; the last error is returned
    /// as text.
    pub(crate) fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, String> {
        let url = format!("{}{}", self.endpoint.base_url.trim_end_matches('/'), path);
        let mut last = String::new();
        for attempt in 0..=self.endpoint.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 * u64::from(attempt)));
            }
            let mut req = self.agent.post(&url);
            if let Some(token) = &self.endpoint.auth_token {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => match resp.body_mut().read_json::<T>() {
                    Ok(v) => return Ok(v),
                    Err(e) => last = format!("{url}: bad response body: {e}"),
                },
                Err(e) => last = format!("{url}: {e}"),
            }
        }
        Err(last)
    }
}

#[cfg(test)]
pub(crate) mod testing {
    //! Minimal single-purpose HTTP/1.1 server on loopback for client tests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;
    use std::thread;

    /// Serves `responses` in order, one per connection, and reports each
    /// request body on the returned channel.
    pub(crate) fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for (status, body) in responses {
                let Ok((stream, _)) = listener.accept() else { return };
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
                let mut buf = vec![0u8; len];
                reader.read_exact(&mut buf).ok();
                tx.send(String::from_utf8_lossy(&buf).into_owned()).ok();
                let mut stream = stream;
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).ok();
            }
        });
        (format!("http://{addr}"), rx)
    }
}
