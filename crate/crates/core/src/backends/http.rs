//! OpenAI-compatible chat-completions client.
//!
//! POST {base_url}/v1/chat/completions with the standard JSON body; the
//! response content is read from `choices[0].message.content`. The bearer
//! token comes from the environment variable named in the config, resolved
//! at call time.

use serde::Deserialize;
use serde_json::json;

use super::{effective_params, BackendConfig, ChatRequest, ChatRole, Transport, TransportError};

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(config: &BackendConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

#[derive(Deserialize)]
struct Envelope {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: MessageBody,
}

#[derive(Deserialize)]
struct MessageBody {
    content: Option<String>,
}

fn role_str(role: ChatRole) -> &'static str {
    match role {
        ChatRole::System => "system",
        ChatRole::User => "user",
        ChatRole::Assistant => "assistant",
    }
}

impl Transport for HttpTransport {
    fn send(
        &self,
        config: &BackendConfig,
        request: &ChatRequest,
    ) -> Result<String, TransportError> {
        let base = config
            .base_url
            .as_deref()
            .ok_or_else(|| TransportError::Network("http backend without base_url".into()))?;
        let url = format!("{}/v1/chat/completions", base.trim_end_matches('/'));
        let params = effective_params(config, request);
        let body = json!({
            "model": config.model_name,
            "messages": request
                .messages
                .iter()
                .map(|m| json!({"role": role_str(m.role), "content": m.content}))
                .collect::<Vec<_>>(),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });

        let mut req = self.agent.post(&url);
        if let Some(var) = &config.auth_token_env {
            // Absent variable means an unauthenticated endpoint (e.g. a local
            // server); the request simply goes out without the header.
            if let Ok(token) = std::env::var(var) {
                req = req.header("Authorization", &format!("Bearer {token}"));
            }
        }

        let mut response = req
            .send_json(&body)
            .map_err(|e| TransportError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Network(format!("reading body: {e}")))?;

        if !(200..300).contains(&status) {
            return Err(TransportError::Status {
                code: status,
                body: text,
            });
        }

        let envelope: Envelope = serde_json::from_str(&text).map_err(|e| {
            TransportError::Malformed(format!("{e}; body starts: {}", truncate(&text, 200)))
        })?;
        envelope
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| {
                TransportError::Malformed(format!(
                    "no choices[0].message.content; body starts: {}",
                    truncate(&text, 200)
                ))
            })
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server for exercising the client end to end.
    fn serve_once(status: u16, body: String) -> (String, std::thread::JoinHandle<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut request_head = String::new();
            let mut content_length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    content_length = v.trim().parse().unwrap();
                }
                request_head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut payload = vec![0u8; content_length];
            reader.read_exact(&mut payload).unwrap();
            let mut stream = reader.into_inner();
            let response = format!(
                "HTTP/1.1 {status} X\r\ncontent-length: {}\r\ncontent-type: application/json\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(response.as_bytes()).unwrap();
            format!("{request_head}{}", String::from_utf8_lossy(&payload))
        });
        (format!("http://{addr}"), handle)
    }

    fn http_config(base_url: &str) -> BackendConfig {
        BackendConfig {
            kind: crate::backends::BackendKind::HttpChat,
            base_url: Some(base_url.to_string()),
            auth_token_env: Some("COPE_TEST_TOKEN_VAR".into()),
            ..BackendConfig::mock("llama-test")
        }
    }

    #[test]
    fn posts_wire_format_and_reads_first_choice() {
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":"the answer"}}]}"#;
        let (url, server) = serve_once(200, reply.to_string());
        let config = http_config(&url);
        let transport = HttpTransport::new(&config);
        let content = transport.send(&config, &ChatRequest::user("ping")).unwrap();
        assert_eq!(content, "the answer");
        let seen = server.join().unwrap();
        assert!(
            seen.starts_with("POST /v1/chat/completions"),
            "seen:\n{seen}"
        );
        let body_start = seen.find("\r\n\r\n").unwrap() + 4;
        let sent: serde_json::Value = serde_json::from_str(&seen[body_start..]).unwrap();
        assert_eq!(sent["model"], "llama-test");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["max_tokens"], 1024);
        assert_eq!(sent["messages"][0]["role"], "user");
        assert_eq!(sent["messages"][0]["content"], "ping");
    }

    #[test]
    fn surfaces_status_and_body() {
        let (url, server) = serve_once(500, r#"{"error":"overloaded"}"#.to_string());
        let config = http_config(&url);
        let transport = HttpTransport::new(&config);
        let err = transport
            .send(&config, &ChatRequest::user("ping"))
            .unwrap_err();
        match err {
            TransportError::Status { code, body } => {
                assert_eq!(code, 500);
                assert!(body.contains("overloaded"));
            }
            other => panic!("unexpected {other:?}"),
        }
        server.join().unwrap();
    }

    #[test]
    fn malformed_envelope_reported() {
        let (url, server) = serve_once(200, r#"{"unexpected":true}"#.to_string());
        let config = http_config(&url);
        let transport = HttpTransport::new(&config);
        let err = transport
            .send(&config, &ChatRequest::user("ping"))
            .unwrap_err();
        assert!(matches!(err, TransportError::Malformed(_)));
        server.join().unwrap();
    }

    #[test]
    fn connection_refused_is_network_error() {
        let config = http_config("http://127.0.0.1:1");
        let transport = HttpTransport::new(&config);
        let err = transport
            .send(&config, &ChatRequest::user("ping"))
            .unwrap_err();
        assert!(matches!(err, TransportError::Network(_)));
    }
}
