//! Prompt construction, the chat-completions client and code extraction.

use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::lang::Language;

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("invalid prompt spec: {0}")]
    InvalidSpec(String),
    #[error("generation service error{}: {message}", .status.map(|s| format!(" (HTTP {s})")).unwrap_or_default())]
    Service { status: Option<u16>, message: String },
    #[error("generation request timed out after {0} s")]
    Timeout(f64),
    #[error("empty response")]
    EmptyResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    #[default]
    RacgV1,
    BaselineV1,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDoc {
    pub language: Language,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub query_text: String,
    pub target_language: Language,
    /// Most relevant first.
    pub context_docs: Vec<ContextDoc>,
    pub template_id: TemplateId,
}

impl PromptSpec {
    pub fn validate(&self) -> Result<(), GenerateError> {
        match (self.template_id, self.context_docs.is_empty()) {
            (TemplateId::BaselineV1, false) => Err(GenerateError::InvalidSpec(
                "baseline_v1 takes no context documents".into(),
            )),
            (TemplateId::RacgV1, true) => Err(GenerateError::InvalidSpec(
                "racg_v1 needs at least one context document".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// A fence longer than any backtick run inside `text`.
fn fence_for(text: &str) -> String {
    let mut longest = 0;
    let mut run = 0;
    for c in text.chars() {
        if c == '`' {
            run += 1;
            longest = longest.max(run);
        } else {
            run = 0;
        }
    }
    "`".repeat((longest + 1).max(3))
}

fn render(spec: &PromptSpec, docs: &[ContextDoc]) -> String {
    let target = spec.target_language;
    let tag = target.fence_tag();
    let mut out = format!("You are an expert {target} programmer.\n\n");
    if spec.template_id == TemplateId::RacgV1 {
        out.push_str("The following code snippets may be relevant to the task.\n\n");
        for (i, d) in docs.iter().enumerate() {
            let fence = fence_for(&d.text);
            out.push_str(&format!(
                "Reference {} ({}):\n{fence}{}\n{}\n{fence}\n\n",
                i + 1,
                d.language,
                d.language.fence_tag(),
                d.text.trim_end_matches('\n'),
            ));
        }
    }
    out.push_str("Task:\n");
    out.push_str(spec.query_text.trim_end());
    out.push_str(&format!(
        "\n\nWrite the solution in {target}. Answer with a single fenced code block tagged `{tag}` containing the complete {target} code.\n"
    ));
    out
}

pub fn build_prompt(spec: &PromptSpec) -> Result<String, GenerateError> {
    spec.validate()?;
    Ok(render(spec, &spec.context_docs))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuiltPrompt {
    pub text: String,
    pub included_docs: usize,
    /// Context documents dropped from the tail to fit the budget.
    pub dropped_docs: usize,
}

/// Like [`build_prompt`], but drops lowest-ranked context documents until
/// the prompt fits in `max_chars`. The top-ranked document is always kept,
/// so the result may still exceed the budget.
pub fn build_prompt_within(spec: &PromptSpec, max_chars: usize) -> Result<BuiltPrompt, GenerateError> {
    spec.validate()?;
    let total = spec.context_docs.len();
    let mut n = total;
    loop {
        let text = render(spec, &spec.context_docs[..n]);
        if text.chars().count() <= max_chars || n <= 1 {
            if n < total {
                tracing::debug!(dropped = total - n, "context truncated to fit prompt budget");
            }
            return Ok(BuiltPrompt {
                text,
                included_docs: n,
                dropped_docs: total - n,
            });
        }
        n -= 1;
    }
}

fn default_max_tokens() -> u32 {
    1024
}

fn default_timeout_s() -> f64 {
    120.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    pub model_name: String,
    pub endpoint: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

impl GenerationParams {
    pub fn new(model_name: &str, endpoint: &str) -> Self {
        GenerationParams {
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            model_name: model_name.to_string(),
            endpoint: endpoint.to_string(),
            timeout_s: default_timeout_s(),
        }
    }
}

/// Produces one completion for a prompt.
pub trait Generator: Sync {
    fn generate(&self, prompt: &str) -> Result<String, GenerateError>;

    /// Identifies the model for cache keys and reports.
    fn model_id(&self) -> String;
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpGenerator {
    params: GenerationParams,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    audit: Option<Mutex<File>>,
}

impl fmt::Debug for HttpGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpGenerator")
            .field("params", &self.params)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

#[derive(Serialize)]
struct AuditLine<'a> {
    model: &'a str,
    request_sha256: String,
    response_sha256: Option<String>,
    status: Option<u16>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl HttpGenerator {
    pub fn new(params: GenerationParams, api_key: Option<String>) -> Result<Self, GenerateError> {
        if params.temperature < 0.0 {
            return Err(GenerateError::InvalidSpec("temperature must be >= 0".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(params.timeout_s))
            .build()
            .map_err(|e| GenerateError::Service {
                status: None,
                message: e.to_string(),
            })?;
        Ok(HttpGenerator {
            params,
            api_key,
            http,
            audit: None,
        })
    }

    /// Appends one JSON line per request (hashes only) to `path`.
    pub fn with_audit_log(mut self, path: &Path) -> std::io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.audit = Some(Mutex::new(file));
        Ok(self)
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        let mut body = json!({
            "model": self.params.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.params.temperature,
            "max_tokens": self.params.max_tokens,
        });
        if self.params.temperature == 0.0 {
            body["n"] = json!(1);
        }
        body
    }

    fn audit(&self, request: &[u8], response: Option<&str>, status: Option<u16>) {
        let line = AuditLine {
            model: &self.params.model_name,
            request_sha256: sha256_hex(request),
            response_sha256: response.map(|r| sha256_hex(r.as_bytes())),
            status,
        };
        tracing::debug!(request_sha256 = %line.request_sha256, response_sha256 = ?line.response_sha256, "generation request");
        if let Some(file) = &self.audit {
            let mut f = file.lock().unwrap_or_else(|p| p.into_inner());
            let _ = writeln!(f, "{}", serde_json::to_string(&line).expect("audit line serializes"));
        }
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GenerateError> {
        let body = serde_json::to_vec(&self.request_body(prompt)).expect("request serializes");
        let url = format!("{}/chat/completions", self.params.endpoint.trim_end_matches('/'));
        let mut req = self
            .http
            .post(url)
            .header("content-type", "application/json")
            .body(body.clone());
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            self.audit(&body, None, None);
            if e.is_timeout() {
                GenerateError::Timeout(self.params.timeout_s)
            } else {
                GenerateError::Service {
                    status: None,
                    message: e.to_string(),
                }
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GenerateError::Service {
            status: Some(status.as_u16()),
            message: e.to_string(),
        })?;
        self.audit(&body, Some(&text), Some(status.as_u16()));
        if !status.is_success() {
            return Err(GenerateError::Service {
                status: Some(status.as_u16()),
                message: text.chars().take(500).collect(),
            });
        }
        let parsed: serde_json::Value = serde_json::from_str(&text).map_err(|e| GenerateError::Service {
            status: Some(status.as_u16()),
            message: format!("malformed response: {e}"),
        })?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GenerateError::Service {
                status: Some(status.as_u16()),
                message: "response has no choices[0].message.content".into(),
            })
    }

    fn model_id(&self) -> String {
        self.params.model_name.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMethod {
    FencedTagged,
    FencedUntagged,
    WholeResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub raw_response: String,
    pub extracted_code: Option<String>,
    pub extraction_method: ExtractionMethod,
}

struct Fence<'a> {
    tag: String,
    body: &'a str,
}

/// Fenced blocks in order. An unclosed fence runs to the end of the text.
fn fences(text: &str) -> Vec<Fence<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut open: Option<(usize, String, usize)> = None;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let trimmed = line.trim();
        let ticks = trimmed.chars().take_while(|&c| c == '`').count();
        match &open {
            None if ticks >= 3 => {
                let tag = trimmed[ticks..].split_whitespace().next().unwrap_or("").to_ascii_lowercase();
                open = Some((ticks, tag, offset));
            }
            Some((width, _, _)) if ticks >= *width && trimmed.len() == ticks => {
                let (_, tag, body_start) = open.take().unwrap();
                out.push(Fence {
                    tag,
                    body: strip_one_newline(&text[body_start..line_start]),
                });
            }
            _ => {}
        }
    }
    if let Some((_, tag, body_start)) = open {
        out.push(Fence {
            tag,
            body: strip_one_newline(&text[body_start.min(text.len())..]),
        });
    }
    out
}

fn strip_one_newline(s: &str) -> &str {
    s.strip_suffix("\r\n").or_else(|| s.strip_suffix('\n')).unwrap_or(s)
}

/// Pulls the code out of a model response: first fence tagged with the
/// target language, else the first fence of any tag, else the whole
/// response.
pub fn extract_code(response: &str, target_language: Language) -> Result<GenerationOutcome, GenerateError> {
    if response.trim().is_empty() {
        return Err(GenerateError::EmptyResponse);
    }
    let blocks: Vec<Fence> = fences(response)
        .into_iter()
        .filter(|f| !f.body.trim().is_empty())
        .collect();
    let tagged = blocks.iter().find(|f| {
        f.tag == target_language.id() || target_language.fence_aliases().contains(&f.tag.as_str())
    });
    let (code, method) = match (tagged, blocks.first()) {
        (Some(f), _) => (f.body.to_string(), ExtractionMethod::FencedTagged),
        (None, Some(f)) => (f.body.to_string(), ExtractionMethod::FencedUntagged),
        (None, None) => (response.trim().to_string(), ExtractionMethod::WholeResponse),
    };
    Ok(GenerationOutcome {
        raw_response: response.to_string(),
        extracted_code: Some(code),
        extraction_method: method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(template: TemplateId, docs: &[(Language, &str)]) -> PromptSpec {
        PromptSpec {
            query_text: "reverse a string".into(),
            target_language: Language::Go,
            context_docs: docs
                .iter()
                .map(|(l, t)| ContextDoc {
                    language: *l,
                    text: t.to_string(),
                })
                .collect(),
            template_id: template,
        }
    }

    #[test]
    fn baseline_prompt_has_no_context() {
        let p = build_prompt(&spec(TemplateId::BaselineV1, &[])).unwrap();
        assert!(p.contains("Go"));
        assert!(p.contains("reverse a string"));
        assert!(!p.contains("Reference"));
        assert!(build_prompt(&spec(TemplateId::BaselineV1, &[(Language::Java, "x")])).is_err());
        assert!(build_prompt(&spec(TemplateId::RacgV1, &[])).is_err());
    }

    #[test]
    fn racg_prompt_keeps_context_order() {
        let s = spec(
            TemplateId::RacgV1,
            &[(Language::Java, "AAA"), (Language::Python, "BBB"), (Language::Cpp, "CCC")],
        );
        let p = build_prompt(&s).unwrap();
        let pos = |t: &str| p.find(t).unwrap();
        assert!(pos("AAA") < pos("BBB") && pos("BBB") < pos("CCC"));
        assert!(pos("CCC") < pos("reverse a string"));
        assert_eq!(p.matches("```java\nAAA\n```").count(), 1);
        assert_eq!(p, build_prompt(&s).unwrap());
    }

    #[test]
    fn budget_drops_tail_documents() {
        let s = spec(
            TemplateId::RacgV1,
            &[(Language::Java, "short"), (Language::Python, &"x".repeat(500))],
        );
        let full = build_prompt(&s).unwrap();
        let b = build_prompt_within(&s, full.len() - 10).unwrap();
        assert_eq!((b.included_docs, b.dropped_docs), (1, 1));
        assert!(!b.text.contains("xxxx"));
        assert_eq!(build_prompt_within(&s, 1).unwrap().included_docs, 1);
    }

    #[test]
    fn backticks_in_context_get_longer_fence() {
        let s = spec(TemplateId::RacgV1, &[(Language::Python, "s = '```'")]);
        assert!(build_prompt(&s).unwrap().contains("````python\ns = '```'\n````"));
    }

    #[test]
    fn extraction_priority() {
        let r = "Here:\n```python\nprint(1)\n```\n```go\nfunc main() {}\n```\n";
        let o = extract_code(r, Language::Go).unwrap();
        assert_eq!(o.extracted_code.as_deref(), Some("func main() {}"));
        assert_eq!(o.extraction_method, ExtractionMethod::FencedTagged);

        let o = extract_code("```\nx := 1\n```", Language::Go).unwrap();
        assert_eq!(o.extraction_method, ExtractionMethod::FencedUntagged);
        assert_eq!(o.extracted_code.as_deref(), Some("x := 1"));

        let o = extract_code("  def f(): pass\n", Language::Python).unwrap();
        assert_eq!(o.extraction_method, ExtractionMethod::WholeResponse);
        assert_eq!(o.extracted_code.as_deref(), Some("def f(): pass"));

        assert!(matches!(extract_code(" \n ", Language::Python), Err(GenerateError::EmptyResponse)));
    }

    #[test]
    fn fenced_round_trip_is_exact() {
        for code in ["def f():\n    return 1\n", "int x;", "a\n\n"] {
            let r = format!("```cpp\n{code}\n```");
            assert_eq!(extract_code(&r, Language::Cpp).unwrap().extracted_code.as_deref(), Some(code));
        }
    }

    #[test]
    fn tag_aliases_match() {
        let o = extract_code("```py\npass\n```", Language::Python).unwrap();
        assert_eq!(o.extraction_method, ExtractionMethod::FencedTagged);
    }
}
