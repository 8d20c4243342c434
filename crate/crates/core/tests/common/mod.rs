#![allow(dead_code)]

pub mod strip_oracle;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;

use racg::corpus::{load_corpus, load_instances, CodeInstance, Corpus, CorpusVariant};
use racg::corpus::strip_code;
use racg::execute::{ExecError, ExecutionResult, Executor, Verdict};
use racg::generate::{GenerateError, Generator};
use racg::Language;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn problems() -> (Corpus, Vec<CodeInstance>) {
    let corpus = load_corpus(
        &fixture("problems/corpus.jsonl"),
        Some(&fixture("problems/golden.jsonl")),
        CorpusVariant::Doc,
    )
    .expect("problem corpus loads");
    let instances = load_instances(&fixture("problems/instances.jsonl")).expect("instances load");
    (corpus, instances)
}

pub fn instances_in(instances: &[CodeInstance], lang: Language) -> Vec<CodeInstance> {
    instances.iter().filter(|i| i.language == lang).cloned().collect()
}

pub fn tool_available(name: &str) -> bool {
    std::env::var_os("PATH").is_some_and(|p| std::env::split_paths(&p).any(|d| d.join(name).is_file()))
}

/// Answers with the code of the first reference in the prompt, or with a
/// non-program when the prompt has none.
pub struct EchoTopGenerator;

pub fn first_reference(prompt: &str) -> Option<String> {
    let start = prompt.find("Reference 1 (")?;
    let rest = &prompt[start..];
    let line_end = rest.find('\n')?;
    let body = &rest[line_end + 1..];
    let fence_len = body.chars().take_while(|&c| c == '`').count();
    let fence = "`".repeat(fence_len);
    let code_start = body.find('\n')? + 1;
    let close = body[code_start..].find(&format!("\n{fence}\n"))?;
    Some(body[code_start..code_start + close].to_string())
}

impl Generator for EchoTopGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GenerateError> {
        let lang = prompt
            .lines()
            .rev()
            .find_map(|l| l.split('`').nth(1).map(str::to_string))
            .unwrap_or_default();
        Ok(match first_reference(prompt) {
            Some(code) => format!("Here you go.\n```{lang}\n{code}\n```\n"),
            None => "I cannot solve this without more context.".to_string(),
        })
    }

    fn model_id(&self) -> String {
        "echo-top1".into()
    }
}

/// Pass iff the candidate, with comments removed, equals the reference.
pub struct ReferenceExecutor;

impl Executor for ReferenceExecutor {
    fn execute(&self, code: &str, instance: &CodeInstance) -> Result<ExecutionResult, ExecError> {
        let norm = |s: &str| strip_code(s, instance.language).code.trim().to_string();
        let verdict = if norm(code) == norm(&instance.reference_solution) {
            Verdict::Pass
        } else if code.trim().is_empty() || !code.contains(&instance.entry_point) {
            Verdict::CompileError
        } else {
            Verdict::TestFailure
        };
        Ok(ExecutionResult {
            verdict,
            stdout_tail: String::new(),
            stderr_tail: String::new(),
            wall_time: 0.0,
        })
    }
}

pub struct Request {
    pub method: String,
    pub path: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

type Handler = dyn Fn(&Request) -> (u16, String) + Send + Sync;

/// Minimal HTTP/1.1 server on an ephemeral port; one request per connection.
pub struct MockServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Request>>>,
}

impl MockServer {
    pub fn start(handler: impl Fn(&Request) -> (u16, String) + Send + Sync + 'static) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind");
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handler: Arc<Handler> = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).is_err() || line.is_empty() {
                    continue;
                }
                let mut parts = line.split_whitespace();
                let method = parts.next().unwrap_or_default().to_string();
                let path = parts.next().unwrap_or_default().to_string();
                let mut headers = Vec::new();
                let mut length = 0;
                loop {
                    let mut h = String::new();
                    reader.read_line(&mut h).unwrap();
                    let h = h.trim_end();
                    if h.is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                        if k == "content-length" {
                            length = v.parse().unwrap_or(0);
                        }
                        headers.push((k, v));
                    }
                }
                let mut body = vec![0u8; length];
                reader.read_exact(&mut body).unwrap();
                let req = Request {
                    method,
                    path,
                    headers,
                    body: String::from_utf8_lossy(&body).into_owned(),
                };
                let (status, reply) = handler(&req);
                log.lock().unwrap().push(req);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            }
        });
        MockServer { url, requests }
    }
}
