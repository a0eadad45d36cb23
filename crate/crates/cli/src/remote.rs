//! Backend for an OpenAI-compatible HTTP API.
//!
//! Text stages go to `<endpoint>/chat/completions` with a strict JSON schema
//! response format. Embeddings go to `<endpoint>/embeddings`.

use std::time::Duration;

use serde_json::{json, Value};
use workscope::classify::backend::schema;
use workscope::classify::{
    BackendError, ClassifierBackend, ClassifyRequest, CompletionLevel, CompletionRequest, EmbedRequest, EmbedResponse,
    GenerationRequest, ScopeLevel, Side,
};
use workscope::config::BackendConfig;

const EMBED_BATCH: usize = 256;

pub struct RemoteBackend {
    endpoint: String,
    key: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub fn new(endpoint: &str, key: String, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { endpoint: endpoint.trim_end_matches('/').to_string(), key, agent }
    }

    pub fn from_config(cfg: &BackendConfig, key: String) -> Self {
        Self::new(cfg.endpoint.as_deref().unwrap_or_default(), key, Duration::from_secs(cfg.timeout_secs))
    }

    /// What [`ClassifierBackend::identity`] reports, computable without a key.
    pub fn identity_for(endpoint: &str) -> String {
        format!("remote/v1 endpoint={}", endpoint.trim_end_matches('/'))
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{path}", self.endpoint);
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(body)
            .map_err(|e| BackendError::Unavailable(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| BackendError::Failed(format!("{url}: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text).map_err(|e| BackendError::Failed(format!("{url}: {e}"))),
            401 | 403 | 404 => Err(BackendError::Unavailable(format!("{url}: HTTP {status}: {}", snippet(&text)))),
            _ => Err(BackendError::Failed(format!("{url}: HTTP {status}: {}", snippet(&text)))),
        }
    }

    fn chat(&self, model: Option<&str>, temperature: f32, prompt: &str, schema_name: &str) -> Result<String, BackendError> {
        let body = chat_body(model, temperature, prompt, schema_name);
        parse_chat(&self.post("chat/completions", &body)?)
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

pub fn chat_body(model: Option<&str>, temperature: f32, prompt: &str, schema_name: &str) -> Value {
    json!({
        "model": model,
        "temperature": temperature,
        "messages": [{"role": "user", "content": prompt}],
        "response_format": {
            "type": "json_schema",
            "json_schema": {"name": schema_name, "strict": true, "schema": response_schema(schema_name)},
        },
    })
}

pub fn parse_chat(v: &Value) -> Result<String, BackendError> {
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| BackendError::Failed("response has no message content".into()))
}

pub fn parse_embeddings(v: &Value, expected: usize) -> Result<Vec<Vec<f32>>, BackendError> {
    let data = v
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Failed("embedding response has no data".into()))?;
    let mut out: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
        let vector = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::Failed(format!("embedding {index} missing")))?
            .iter()
            .map(|x| x.as_f64().map(|f| f as f32))
            .collect::<Option<Vec<f32>>>()
            .ok_or_else(|| BackendError::Failed(format!("embedding {index} is not numeric")))?;
        out.push((index, vector));
    }
    out.sort_by_key(|(i, _)| *i);
    if out.len() != expected || out.iter().enumerate().any(|(k, (i, _))| k != *i) {
        return Err(BackendError::Failed(format!("expected {expected} embeddings, got {}", out.len())));
    }
    Ok(out.into_iter().map(|(_, v)| v).collect())
}

fn object(props: Value) -> Value {
    let required: Vec<String> = props.as_object().map(|m| m.keys().cloned().collect()).unwrap_or_default();
    json!({"type": "object", "properties": props, "required": required, "additionalProperties": false})
}

fn string() -> Value {
    json!({"type": "string"})
}

fn analysis_schema(level_field: &str, explanation_field: &str) -> Value {
    let levels: Vec<&str> = ScopeLevel::ALL.iter().map(|l| l.as_str()).collect();
    let mut props = serde_json::Map::new();
    props.insert("iwa".into(), string());
    props.insert("iwa_explanation".into(), string());
    props.insert("is_match_explanation".into(), string());
    props.insert("is_match".into(), json!({"type": "boolean"}));
    props.insert(explanation_field.into(), string());
    props.insert(level_field.into(), json!({"type": "string", "enum": levels}));
    object(json!({"iwa_analyses": {"type": "array", "items": object(Value::Object(props))}}))
}

/// JSON schema of each structured answer.
pub fn response_schema(name: &str) -> Value {
    match name {
        schema::GENERATION => object(json!({
            "summary": string(),
            "user_iwa": string(),
            "user_iwa_variations": {"type": "array", "items": string()},
            "bot_iwa": string(),
            "bot_iwa_variations": {"type": "array", "items": string()},
            "is_homework_explanation": string(),
            "is_homework": {"type": "integer", "enum": [0, 1]},
        })),
        schema::USER_CLASSIFICATION => analysis_schema("assistance_level", "assistance_level_explanation"),
        schema::BOT_CLASSIFICATION => analysis_schema("automation_level", "automation_level_explanation"),
        schema::COMPLETION => {
            let levels: Vec<&str> = [CompletionLevel::NotComplete, CompletionLevel::Partial, CompletionLevel::Complete]
                .iter()
                .map(|l| l.as_str())
                .collect();
            object(json!({
                "task_summary": string(),
                "completed_explanation": string(),
                "completed": {"type": "string", "enum": levels},
                "speedup_50pct_explanation": string(),
                "speedup_50pct": {"type": "boolean"},
            }))
        }
        _ => json!({"type": "object"}),
    }
}

impl ClassifierBackend for RemoteBackend {
    fn identity(&self) -> String {
        Self::identity_for(&self.endpoint)
    }

    fn generate(&self, r: &GenerationRequest) -> Result<String, BackendError> {
        self.chat(r.model.as_deref(), r.temperature, &r.prompt, &r.schema)
    }

    fn embed(&self, r: &EmbedRequest) -> Result<EmbedResponse, BackendError> {
        let mut embeddings = Vec::with_capacity(r.texts.len());
        for chunk in r.texts.chunks(EMBED_BATCH) {
            let body = json!({"model": r.model, "input": chunk});
            embeddings.extend(parse_embeddings(&self.post("embeddings", &body)?, chunk.len())?);
        }
        Ok(EmbedResponse { embeddings })
    }

    fn classify_block(&self, r: &ClassifyRequest) -> Result<String, BackendError> {
        let expected = match r.side {
            Side::User => schema::USER_CLASSIFICATION,
            Side::Ai => schema::BOT_CLASSIFICATION,
        };
        self.chat(r.model.as_deref(), r.temperature, &r.prompt, expected)
    }

    fn completion(&self, r: &CompletionRequest) -> Result<String, BackendError> {
        self.chat(r.model.as_deref(), r.temperature, &r.prompt, &r.schema)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::thread;

    /// Serves one canned JSON body per connection and returns the request bodies.
    fn stub(responses: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let handle = thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (url, handle)
    }

    #[test]
    fn schemas_require_every_field() {
        for name in [schema::GENERATION, schema::USER_CLASSIFICATION, schema::BOT_CLASSIFICATION, schema::COMPLETION] {
            let s = response_schema(name);
            let props = s["properties"].as_object().unwrap();
            assert_eq!(s["required"].as_array().unwrap().len(), props.len(), "{name}");
            assert_eq!(s["additionalProperties"], false);
        }
        let bot = response_schema(schema::BOT_CLASSIFICATION);
        let item = &bot["properties"]["iwa_analyses"]["items"];
        assert!(item["properties"]["automation_level"]["enum"].as_array().unwrap().contains(&json!("moderate")));
    }

    #[test]
    fn embeddings_are_reordered_by_index() {
        let v = json!({"data": [{"index": 1, "embedding": [0.5]}, {"index": 0, "embedding": [1.0]}]});
        assert_eq!(parse_embeddings(&v, 2).unwrap(), vec![vec![1.0], vec![0.5]]);
        assert!(parse_embeddings(&v, 3).is_err());
    }

    #[test]
    fn chat_round_trip_over_http() {
        let content = r#"{"task_summary":"s","completed_explanation":"e","completed":"complete","speedup_50pct_explanation":"e","speedup_50pct":true}"#;
        let reply = json!({"choices": [{"message": {"content": content}}]}).to_string();
        let (url, server) = stub(vec![(200, reply), (500, "{}".into())]);
        let backend = RemoteBackend::new(&url, "k".into(), Duration::from_secs(5));
        let req = CompletionRequest {
            schema: schema::COMPLETION.into(),
            model: Some("m".into()),
            temperature: 0.0,
            prompt: "p".into(),
            messages: vec![],
        };
        assert_eq!(backend.completion(&req).unwrap(), content);
        assert!(matches!(backend.completion(&req), Err(BackendError::Failed(_))));
        let bodies = server.join().unwrap();
        let sent: Value = serde_json::from_str(&bodies[0]).unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["response_format"]["json_schema"]["name"], schema::COMPLETION);
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let backend = RemoteBackend::new(&format!("http://127.0.0.1:{port}"), "k".into(), Duration::from_secs(2));
        let req = EmbedRequest { model: None, texts: vec!["x".into()] };
        assert!(matches!(backend.embed(&req), Err(BackendError::Unavailable(_))));
    }
}
