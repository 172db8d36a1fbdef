//! Fragment-level generator backed by a chat-completions HTTP endpoint.

use std::time::Duration;

use serde_json::{json, Value};

use crate::dist::Registry;
use crate::model::Dataset;

use super::prompt;
use super::{CandidateGenerator, FragmentRequest, GeneratorError, Mode};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub temperature: f64,
    pub max_tokens: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model: "default".into(),
            api_key: None,
            timeout: Duration::from_secs(60),
            temperature: 0.3,
            max_tokens: 128,
        }
    }
}

pub struct HttpGenerator {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    preamble: String,
}

impl HttpGenerator {
    pub fn new(config: HttpConfig, dataset: &Dataset, registry: &Registry) -> Result<Self, GeneratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GeneratorError::Http(e.to_string()))?;
        Ok(HttpGenerator { preamble: prompt::preamble(dataset, registry), config, client })
    }

    pub fn request_body(&self, req: &FragmentRequest) -> Value {
        json!({
            "model": self.config.model,
            "messages": prompt::messages(&self.preamble, req),
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "stop": [";"],
        })
    }
}

impl CandidateGenerator for HttpGenerator {
    fn name(&self) -> &str {
        "http"
    }

    fn mode(&self) -> Mode {
        Mode::Fragment
    }

    fn temperature(&self) -> f64 {
        self.config.temperature
    }

    fn propose_fragment(&mut self, req: &FragmentRequest) -> Result<String, GeneratorError> {
        let mut call = self.client.post(&self.config.endpoint).json(&self.request_body(req));
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| GeneratorError::Http(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp.json().map_err(|e| GeneratorError::Protocol(e.to_string()))?;
        if !status.is_success() {
            return Err(GeneratorError::Http(format!("status {status}: {body}")));
        }
        let content = body
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GeneratorError::Protocol("missing choices[0].message.content".into()))?;
        Ok(prompt::extract_code(content))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::BlockKind;
    use crate::datasets;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// Serves one canned response and hands back the request body.
    fn serve_once(reply: &'static str) -> (String, mpsc::Receiver<(String, String)>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                headers.push_str(&line);
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                reply.len(),
                reply
            )
            .unwrap();
            tx.send((headers, String::from_utf8(body).unwrap())).unwrap();
        });
        (format!("http://{addr}/v1/chat/completions"), rx)
    }

    fn request() -> FragmentRequest {
        FragmentRequest {
            block: BlockKind::Prior,
            template: "model {".into(),
            partial: String::new(),
            violation: None,
            statements_in_block: 0,
        }
    }

    #[test]
    fn wire_protocol() {
        let (url, rx) =
            serve_once(r#"{"choices":[{"message":{"role":"assistant","content":"```\nmu ~ Normal(0, 5);\n```"}}]}"#);
        let mut cfg = HttpConfig::new(url);
        cfg.api_key = Some("secret-token".into());
        let ds = datasets::builtin("eight_schools").unwrap();
        let mut g = HttpGenerator::new(cfg, &ds, &Registry::default()).unwrap();
        assert_eq!(g.propose_fragment(&request()).unwrap(), "mu ~ Normal(0, 5);");
        let (headers, body) = rx.recv().unwrap();
        assert!(headers.to_ascii_lowercase().contains("authorization: bearer secret-token"));
        let v: Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["temperature"], 0.3);
        assert_eq!(v["stop"][0], ";");
        assert_eq!(v["messages"][0]["role"], "system");
        assert!(v["max_tokens"].is_u64() && v["model"].is_string());
    }

    #[test]
    fn missing_content_is_a_protocol_error() {
        let (url, _rx) = serve_once(r#"{"choices":[]}"#);
        let ds = datasets::builtin("eight_schools").unwrap();
        let mut g = HttpGenerator::new(HttpConfig::new(url), &ds, &Registry::default()).unwrap();
        assert!(matches!(g.propose_fragment(&request()), Err(GeneratorError::Protocol(_))));
    }

    #[test]
    fn unreachable_endpoint_is_an_http_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let ds = datasets::builtin("eight_schools").unwrap();
        let mut g = HttpGenerator::new(HttpConfig::new(format!("http://{addr}/")), &ds, &Registry::default()).unwrap();
        assert!(matches!(g.propose_fragment(&request()), Err(GeneratorError::Http(_))));
    }
}
