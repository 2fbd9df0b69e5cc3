//! Scripted local HTTP server that imitates a chat-completions endpoint.
//!
//! Responses are served in order; the last one repeats once the script runs
//! out. Used by tests and for offline demos of the endpoint path.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

#[derive(Debug, Clone)]
pub struct MockResponse {
    pub status: u16,
    pub body: String,
}

impl MockResponse {
    /// 200 with a single-choice completion carrying `text`.
    pub fn completion(text: &str) -> Self {
        let body = serde_json::json!({
            "id": "mock-1",
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop"
            }]
        });
        MockResponse {
            status: 200,
            body: body.to_string(),
        }
    }

    pub fn status(code: u16) -> Self {
        MockResponse {
            status: code,
            body: format!("{{\"error\":{{\"code\":{code}}}}}"),
        }
    }
}

/// One request as received by the mock.
#[derive(Debug, Clone)]
pub struct RecordedRequest {
    pub method: String,
    pub path: String,
    pub authorization: Option<String>,
    pub body: String,
}

pub struct MockLlmServer {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<RecordedRequest>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockLlmServer {
    pub fn start(script: Vec<MockResponse>) -> std::io::Result<Self> {
        assert!(!script.is_empty(), "mock script needs at least one response");
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let (reqs, flag) = (requests.clone(), stop.clone());
        let handle = thread::spawn(move || {
            let mut served = 0usize;
            while !flag.load(Ordering::SeqCst) {
                match listener.accept() {
                    Ok((stream, _)) => {
                        let resp = &script[served.min(script.len() - 1)];
                        if let Some(req) = serve(stream, resp) {
                            reqs.lock().unwrap().push(req);
                            served += 1;
                        }
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        thread::sleep(Duration::from_millis(5));
                    }
                    Err(_) => break,
                }
            }
        });
        Ok(MockLlmServer {
            addr,
            requests,
            stop,
            handle: Some(handle),
        })
    }

    /// Base URL to put in an endpoint config.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for MockLlmServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        502 => "Bad Gateway",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn serve(stream: TcpStream, resp: &MockResponse) -> Option<RecordedRequest> {
    stream.set_nonblocking(false).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut reader = BufReader::new(stream.try_clone().ok()?);

    let mut line = String::new();
    reader.read_line(&mut line).ok()?;
    let mut parts = line.split_whitespace();
    let method = parts.next()?.to_string();
    let path = parts.next()?.to_string();

    let mut content_length = 0usize;
    let mut authorization = None;
    loop {
        line.clear();
        reader.read_line(&mut line).ok()?;
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => content_length = v.trim().parse().ok()?,
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;

    let mut out = stream;
    let head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        resp.status,
        reason(resp.status),
        resp.body.len()
    );
    out.write_all(head.as_bytes()).ok()?;
    out.write_all(resp.body.as_bytes()).ok()?;
    out.flush().ok()?;

    Some(RecordedRequest {
        method,
        path,
        authorization,
        body: String::from_utf8_lossy(&body).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::tests::four_regions;
    use crate::report::{generate_report, LlmEndpointConfig, ReportError, ReportSource};

    fn cfg(url: String) -> LlmEndpointConfig {
        LlmEndpointConfig {
            base_url: url,
            model_id: "mock-model".into(),
            api_key: Some("k".into()),
            max_retries: 3,
            backoff_base_ms: 1,
            ..Default::default()
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let server = MockLlmServer::start(vec![
            MockResponse::status(503),
            MockResponse::status(503),
            MockResponse::completion("Model Performance Summary\nok"),
        ])
        .unwrap();
        let doc = four_regions();
        let r = generate_report(&doc, &ReportSource::Endpoint(cfg(server.url()))).unwrap();
        assert_eq!(r.retries, 2);
        assert_eq!(r.model_id, "mock-model");
        assert!(r.verify(&doc));
        let reqs = server.requests();
        assert_eq!(reqs.len(), 3);
        assert_eq!(reqs[0].method, "POST");
        assert_eq!(reqs[0].path, "/v1/chat/completions");
        assert_eq!(reqs[0].authorization.as_deref(), Some("Bearer k"));
        let body: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
        assert_eq!(body["messages"].as_array().unwrap().len(), 2);
        assert_eq!(body["temperature"], 0.2);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let server = MockLlmServer::start(vec![MockResponse::status(401)]).unwrap();
        let err = generate_report(&four_regions(), &ReportSource::Endpoint(cfg(server.url())))
            .unwrap_err();
        assert!(matches!(err, ReportError::Auth { status: 401 }));
        assert_eq!(server.request_count(), 1);
    }

    #[test]
    fn retries_are_bounded() {
        let server = MockLlmServer::start(vec![MockResponse::status(500)]).unwrap();
        let err = generate_report(&four_regions(), &ReportSource::Endpoint(cfg(server.url())))
            .unwrap_err();
        assert!(matches!(err, ReportError::RetriesExhausted { attempts: 4, .. }));
        assert_eq!(server.request_count(), 4);
    }
}
