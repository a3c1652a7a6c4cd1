//! Minimal local chat-completion server for tests and self-checks.
//!
//! Serves a scripted sequence of (status, assistant text) replies; once the
//! script is exhausted the last reply repeats.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::json;

#[derive(Debug, Clone)]
pub struct MockReply {
    pub status: u16,
    pub content: String,
}

impl MockReply {
    pub fn ok(content: &str) -> Self {
        Self {
            status: 200,
            content: content.to_string(),
        }
    }

    pub fn status(status: u16) -> Self {
        Self {
            status,
            content: String::new(),
        }
    }
}

pub struct MockServer {
    addr: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start(script: Vec<MockReply>) -> std::io::Result<Self> {
        assert!(!script.is_empty(), "mock needs at least one reply");
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?.to_string();
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let (h, b, s) = (hits.clone(), bodies.clone(), stop.clone());
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if s.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let n = h.fetch_add(1, Ordering::SeqCst);
                let reply = &script[n.min(script.len() - 1)];
                if let Ok(body) = serve(stream, reply) {
                    b.lock().expect("mock lock").push(body);
                }
            }
        });
        Ok(Self {
            addr,
            hits,
            bodies,
            stop,
            handle: Some(handle),
        })
    }

    /// Base URL to put in an endpoint config.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    /// Raw request bodies received so far.
    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().expect("mock lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(&self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve(stream: TcpStream, reply: &MockReply) -> std::io::Result<String> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;

    let payload = if reply.status == 200 {
        json!({"choices": [{"index": 0, "message": {"role": "assistant", "content": reply.content}}]}).to_string()
    } else {
        json!({"error": {"message": format!("scripted status {}", reply.status)}}).to_string()
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {} Mock\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        payload.len(),
        payload
    )?;
    out.flush()?;
    Ok(String::from_utf8_lossy(&body).into_owned())
}
