//! Live backend against a loopback HTTP server.

use base64::Engine;
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::{Arc, Mutex};
use vislit::io::read_jsonl;
use vislit::{Pipeline, RunConfig};
use vislit_core::runner::{Experiment, TrialRecord};

#[derive(Debug, Clone)]
struct Request {
    path: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Request {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

type Handler = dyn Fn(usize, &Request) -> (u16, Value) + Send + Sync;

struct Server {
    url: String,
    log: Arc<Mutex<Vec<Request>>>,
}

fn read_request(reader: &mut BufReader<TcpStream>) -> Option<Request> {
    let mut line = String::new();
    if reader.read_line(&mut line).ok()? == 0 {
        return None;
    }
    let path = line.split_whitespace().nth(1)?.to_string();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).ok()?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':')?;
        headers.push((k.trim().to_string(), v.trim().to_string()));
    }
    let len: usize = headers.iter().find(|(k, _)| k.eq_ignore_ascii_case("content-length")).and_then(|(_, v)| v.parse().ok()).unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).ok()?;
    Some(Request { path, headers, body: serde_json::from_slice(&body).unwrap_or(Value::Null) })
}

fn serve(handler: Box<Handler>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let handler: Arc<Handler> = Arc::from(handler);
    let shared = log.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let (log, handler) = (shared.clone(), handler.clone());
            std::thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                let mut reader = BufReader::new(stream);
                while let Some(req) = read_request(&mut reader) {
                    let i = {
                        let mut l = log.lock().unwrap();
                        l.push(req.clone());
                        l.len() - 1
                    };
                    let (status, body) = handler(i, &req);
                    let text = body.to_string();
                    let reply = format!("HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{text}", text.len());
                    if writer.write_all(reply.as_bytes()).is_err() {
                        break;
                    }
                }
            });
        }
    });
    Server { url, log }
}

fn openai_reply(text: &str) -> Value {
    json!({"choices": [{"message": {"content": text}}], "usage": {"prompt_tokens": 100, "completion_tokens": 3}})
}

fn gemini_reply(text: &str) -> Value {
    json!({"candidates": [{"content": {"parts": [{"text": text}]}}], "usageMetadata": {"promptTokenCount": 90, "candidatesTokenCount": 2}})
}

fn pipeline(out: &Path, backend: &str) -> Pipeline {
    let text = format!("experiments = [\"e1\"]\nn_per_question = 12\n\n[[backends]]\n{backend}");
    let mut cfg = RunConfig::from_toml(&text).unwrap();
    cfg.out_dir = out.to_path_buf();
    let p = Pipeline::new(cfg);
    p.cmd_generate().unwrap();
    p.cmd_bank().unwrap();
    p
}

fn files_containing(dir: &Path, needle: &str) -> Vec<String> {
    let mut hits = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if std::fs::read(&path).unwrap().windows(needle.len()).any(|w| w == needle.as_bytes()) {
                hits.push(path.display().to_string());
            }
        }
    }
    hits
}

fn png_magic(b64: &str) -> bool {
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).unwrap();
    bytes.starts_with(&[0x89, b'P', b'N', b'G'])
}

#[test]
fn openai_wire_format_and_retry() {
    const KEY: &str = "sk-loopback-openai-0001";
    std::env::set_var("VISLIT_HTTP_TEST_OPENAI", KEY);
    let server = serve(Box::new(|i, _| if i == 0 { (429, json!({"error": "slow down"})) } else { (200, openai_reply("(a)")) }));
    let dir = tempfile::tempdir().unwrap();
    let backend = format!(
        "kind = \"live-http\"\nllm_id = \"gpt\"\nprovider = \"openai\"\nendpoint = \"{}/v1/chat/completions\"\nmodel = \"vis-model\"\napi_key_env = \"VISLIT_HTTP_TEST_OPENAI\"\nretry = {{ max_attempts = 3, initial_backoff_s = 0.01, multiplier = 2.0 }}\npricing = {{ per_image = 0.01, per_1k_prompt_tokens = 0.002, per_1k_completion_tokens = 0.008 }}\n",
        server.url
    );
    let p = pipeline(dir.path(), &backend);
    let summary = p.cmd_run().unwrap();
    let s = &summary["e1:gpt"];
    assert_eq!((s.executed, s.failed), (53 * 12, 0));

    let log = server.log.lock().unwrap().clone();
    assert_eq!(log.len(), 53 * 12 + 1);
    for req in &log {
        assert_eq!(req.path, "/v1/chat/completions");
        assert_eq!(req.header("authorization"), Some(format!("Bearer {KEY}").as_str()));
        assert_eq!(req.body["model"], "vis-model");
        assert_eq!(req.body["messages"][0]["role"], "system");
        let content = req.body["messages"][1]["content"].as_array().unwrap();
        assert_eq!(content[0]["type"], "text");
        let url = content[1]["image_url"]["url"].as_str().unwrap();
        let data = url.strip_prefix("data:image/png;base64,").unwrap();
        assert!(png_magic(data));
    }

    let records: Vec<TrialRecord> = read_jsonl(&p.dirs(Experiment::E1).trial_file("gpt")).unwrap();
    assert_eq!(records.iter().filter(|r| r.attempts == 2).count(), 1);
    assert!(records.iter().all(|r| r.error.is_none() && r.raw_response == "(a)" && r.image_attached));
    assert!(records.iter().all(|r| (r.cost - (0.01 + 0.1 * 0.002 + 0.003 * 0.008)).abs() < 1e-12));
    assert!(files_containing(dir.path(), KEY).is_empty());
}

#[test]
fn gemini_wire_format() {
    const KEY: &str = "AIza-loopback-gemini-0002";
    std::env::set_var("VISLIT_HTTP_TEST_GEMINI", KEY);
    let server = serve(Box::new(|_, _| (200, gemini_reply("(b)"))));
    let dir = tempfile::tempdir().unwrap();
    let backend = format!(
        "kind = \"live-http\"\nllm_id = \"gemini\"\nprovider = \"gemini\"\nendpoint = \"{}/v1beta/\"\nmodel = \"gem-vis\"\napi_key_env = \"VISLIT_HTTP_TEST_GEMINI\"\n",
        server.url
    );
    let p = pipeline(dir.path(), &backend);
    p.cmd_run().unwrap();
    let log = server.log.lock().unwrap().clone();
    assert_eq!(log.len(), 53 * 12);
    for req in &log {
        assert_eq!(req.path, "/v1beta/models/gem-vis:generateContent");
        assert_eq!(req.header("x-goog-api-key"), Some(KEY));
        assert!(req.header("authorization").is_none());
        assert!(req.body["system_instruction"]["parts"][0]["text"].is_string());
        let parts = req.body["contents"][0]["parts"].as_array().unwrap();
        assert!(parts[0]["text"].is_string());
        assert_eq!(parts[1]["inline_data"]["mime_type"], "image/png");
        assert!(png_magic(parts[1]["inline_data"]["data"].as_str().unwrap()));
    }
    let records: Vec<TrialRecord> = read_jsonl(&p.dirs(Experiment::E1).trial_file("gemini")).unwrap();
    assert!(records.iter().all(|r| r.raw_response == "(b)" && r.prompt_tokens == 90 && r.attempts == 1));
    assert!(files_containing(dir.path(), KEY).is_empty());
}

#[test]
fn permanent_and_exhausted_errors_are_recorded() {
    std::env::set_var("VISLIT_HTTP_TEST_ERR", "k-err");
    // Routed on the request body so retries of one trial get the same status.
    let server = serve(Box::new(|_, req| {
        if req.body.to_string().len() % 2 == 0 {
            (400, json!({"error": "bad"}))
        } else {
            (503, json!({"error": "down"}))
        }
    }));
    let dir = tempfile::tempdir().unwrap();
    let backend = format!(
        "kind = \"live-http\"\nllm_id = \"x\"\nendpoint = \"{}/c\"\nmodel = \"m\"\napi_key_env = \"VISLIT_HTTP_TEST_ERR\"\nretry = {{ max_attempts = 2, initial_backoff_s = 0.001, multiplier = 1.0 }}\n",
        server.url
    );
    let mut p = pipeline(dir.path(), &backend);
    p.select.condition = Some("e1".into());
    let summary = p.cmd_run().unwrap();
    let s = &summary["e1:x"];
    assert_eq!(s.failed, s.executed);
    let records: Vec<TrialRecord> = read_jsonl(&p.dirs(Experiment::E1).trial_file("x")).unwrap();
    for r in &records {
        let msg = r.error.as_deref().unwrap();
        assert!(msg.starts_with("HTTP 400") || msg.starts_with("HTTP 503"), "{msg}");
        assert!(r.raw_response.is_empty());
        if msg.starts_with("HTTP 400") {
            assert_eq!(r.attempts, 1);
        }
    }
    assert!(records.iter().any(|r| r.attempts == 2));
}

#[test]
fn missing_key_variable_is_reported_before_any_call() {
    let server = serve(Box::new(|_, _| (200, openai_reply("(a)"))));
    let dir = tempfile::tempdir().unwrap();
    let backend = format!(
        "kind = \"live-http\"\nllm_id = \"gpt\"\nendpoint = \"{}\"\nmodel = \"m\"\napi_key_env = \"VISLIT_HTTP_TEST_NEVER_SET\"\n",
        server.url
    );
    let p = pipeline(dir.path(), &backend);
    let err = p.cmd_run().unwrap_err();
    assert_eq!(err.kind(), "BackendUnavailable");
    assert!(server.log.lock().unwrap().is_empty());
}
