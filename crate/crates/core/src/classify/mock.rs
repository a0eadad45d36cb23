//! Hermetic backends for tests and offline runs.
//!
//! [`MockBackend`] is a pure function of its keyword rules and the request.
//! Embeddings are token-hash bag vectors; an IWA matches a side when one of
//! its keywords appears in that side's text; completion follows the markers
//! `DONE` and `PARTIAL`, and `FAST` sets the speedup flag.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::backend::*;
use super::{Side, VARIATION_COUNT};
use crate::corpus::{Message, Role};

pub const EMBEDDING_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordRule {
    /// IWA statement the rule applies to.
    pub iwa: String,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    rules: Vec<KeywordRule>,
    by_title: BTreeMap<String, usize>,
    tokenized: Vec<Vec<Vec<String>>>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn title_key(title: &str) -> String {
    tokenize(title).join(" ")
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn embed_text(text: &str) -> Vec<f32> {
    let mut v = vec![0.0f32; EMBEDDING_DIM];
    for token in tokenize(text) {
        v[(fnv1a(token.as_bytes()) % EMBEDDING_DIM as u64) as usize] += 1.0;
    }
    v
}

/// Occurrences of `phrase` as a contiguous token run in `tokens`.
fn count_phrase(tokens: &[String], phrase: &[String]) -> usize {
    if phrase.is_empty() || phrase.len() > tokens.len() {
        return 0;
    }
    tokens.windows(phrase.len()).filter(|w| *w == phrase).count()
}

fn scope_for_hits(hits: usize) -> &'static str {
    match hits {
        0 => "none",
        1 => "minimal",
        2 => "limited",
        3 => "moderate",
        4 => "significant",
        _ => "complete",
    }
}

fn side_tokens(messages: &[Message], role: Role) -> Vec<String> {
    messages
        .iter()
        .filter(|m| m.role == role)
        .flat_map(|m| tokenize(&m.text).into_iter().chain(std::iter::once(String::new())))
        .collect()
}

/// Four rewordings that keep the token bag: lowercased, reversed and rotated.
fn variations(statement: &str) -> Vec<String> {
    let words: Vec<&str> = statement.split_whitespace().collect();
    let rotate = |k: usize| {
        let k = k % words.len().max(1);
        words[k..].iter().chain(&words[..k]).copied().collect::<Vec<_>>().join(" ")
    };
    let reversed: Vec<&str> = words.iter().rev().copied().collect();
    let out = vec![statement.to_lowercase(), reversed.join(" "), rotate(1), rotate(2)];
    debug_assert_eq!(out.len(), VARIATION_COUNT);
    out
}

impl MockBackend {
    pub fn new(rules: Vec<KeywordRule>) -> Self {
        let mut by_title = BTreeMap::new();
        for (i, r) in rules.iter().enumerate() {
            by_title.entry(title_key(&r.iwa)).or_insert(i);
        }
        let tokenized = rules
            .iter()
            .map(|r| r.keywords.iter().map(|k| tokenize(k)).filter(|k| !k.is_empty()).collect())
            .collect();
        Self { rules, by_title, tokenized }
    }

    pub fn from_json_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rules: Vec<KeywordRule> = serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(rules))
    }

    pub fn rules(&self) -> &[KeywordRule] {
        &self.rules
    }

    /// Keyword hits for a statement. Statements without a rule match on
    /// their own wording.
    fn hits(&self, statement: &str, tokens: &[String]) -> usize {
        match self.by_title.get(&title_key(statement)) {
            Some(&i) => self.tokenized[i].iter().map(|k| count_phrase(tokens, k)).sum(),
            None => count_phrase(tokens, &tokenize(statement)),
        }
    }

    fn best_rule(&self, tokens: &[String]) -> Option<&str> {
        let mut best: Option<(usize, &str)> = None;
        for (i, rule) in self.rules.iter().enumerate() {
            let n: usize = self.tokenized[i].iter().map(|k| count_phrase(tokens, k)).sum();
            if n > 0 && best.is_none_or(|(m, _)| n > m) {
                best = Some((n, &rule.iwa));
            }
        }
        best.map(|(_, t)| t)
    }

    fn describe(&self, messages: &[Message], role: Role, fallback: &str) -> String {
        let tokens = side_tokens(messages, role);
        if let Some(title) = self.best_rule(&tokens) {
            return title.to_string();
        }
        let words: Vec<String> = tokens.into_iter().filter(|t| !t.is_empty()).take(8).collect();
        if words.is_empty() {
            fallback.to_string()
        } else {
            format!("Handle request about {}", words.join(" "))
        }
    }
}

impl ClassifierBackend for MockBackend {
    fn identity(&self) -> String {
        let rules = serde_json::to_vec(&self.rules).unwrap_or_default();
        let digest = hex::encode(Sha256::digest(&rules));
        format!("mock/v1 dim={EMBEDDING_DIM} rules={}", &digest[..16])
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let user_iwa = self.describe(&request.messages, Role::User, "Communicate with others");
        let bot_iwa = self.describe(&request.messages, Role::Assistant, "Provide information to others");
        let user_tokens = side_tokens(&request.messages, Role::User);
        let homework = user_tokens.iter().any(|t| t == "homework" || t == "assignment");
        let answer = serde_json::json!({
            "summary": format!("The user asks for help; goal resembles: {user_iwa}."),
            "user_iwa": user_iwa,
            "user_iwa_variations": variations(&user_iwa),
            "bot_iwa": bot_iwa,
            "bot_iwa_variations": variations(&bot_iwa),
            "is_homework_explanation": if homework { "The user mentions an assignment." } else { "No sign of an assignment." },
            "is_homework": u8::from(homework),
        });
        Ok(answer.to_string())
    }

    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, BackendError> {
        Ok(EmbedResponse { embeddings: request.texts.iter().map(|t| embed_text(t)).collect() })
    }

    fn classify_block(&self, request: &ClassifyRequest) -> Result<String, BackendError> {
        let role = match request.side {
            Side::User => Role::User,
            Side::Ai => Role::Assistant,
        };
        let tokens = side_tokens(&request.messages, role);
        let analyses: Vec<serde_json::Value> = request
            .candidates
            .iter()
            .map(|c| {
                let hits = self.hits(&c.iwa, &tokens);
                let level = scope_for_hits(hits);
                let explanation = if hits > 0 { format!("{hits} keyword hits") } else { "N/A".into() };
                let (level_key, explanation_key) = match request.side {
                    Side::User => ("assistance_level", "assistance_level_explanation"),
                    Side::Ai => ("automation_level", "automation_level_explanation"),
                };
                let mut a = serde_json::json!({
                    "iwa": c.iwa,
                    "iwa_explanation": "Keyword rule.",
                    "is_match_explanation": explanation,
                    "is_match": hits > 0,
                });
                a[level_key] = level.into();
                a[explanation_key] = explanation.into();
                a
            })
            .collect();
        Ok(serde_json::json!({ "iwa_analyses": analyses }).to_string())
    }

    fn completion(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let assistant: Vec<&str> = request
            .messages
            .iter()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.text.as_str())
            .collect();
        let has = |marker: &str| assistant.iter().any(|t| t.contains(marker));
        let level = if has("DONE") {
            "complete"
        } else if has("PARTIAL") {
            "partially_complete"
        } else {
            "not_complete"
        };
        let answer = serde_json::json!({
            "task_summary": "Keyword rule.",
            "completed_explanation": format!("Marker rule gave {level}."),
            "completed": level,
            "speedup_50pct_explanation": "Marker rule.",
            "speedup_50pct": has("FAST"),
        });
        Ok(answer.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub generate: usize,
    pub embed: usize,
    pub classify: usize,
    pub completion: usize,
}

#[derive(Default)]
struct Script {
    generate: VecDeque<Result<String, BackendError>>,
    classify: VecDeque<Result<String, BackendError>>,
    completion: VecDeque<Result<String, BackendError>>,
    calls: CallCounts,
    block_sizes: Vec<usize>,
}

/// Wraps another backend, serving queued responses first. Can also turn
/// unavailable after a number of generate calls.
pub struct ScriptedBackend<B> {
    inner: B,
    script: Mutex<Script>,
    unavailable_after: Option<usize>,
}

impl<B: ClassifierBackend> ScriptedBackend<B> {
    pub fn new(inner: B) -> Self {
        Self { inner, script: Mutex::new(Script::default()), unavailable_after: None }
    }

    pub fn with_generate(self, responses: Vec<Result<String, BackendError>>) -> Self {
        self.script.lock().unwrap().generate.extend(responses);
        self
    }

    pub fn with_classify(self, responses: Vec<Result<String, BackendError>>) -> Self {
        self.script.lock().unwrap().classify.extend(responses);
        self
    }

    pub fn with_completion(self, responses: Vec<Result<String, BackendError>>) -> Self {
        self.script.lock().unwrap().completion.extend(responses);
        self
    }

    /// Every generate call after the first `n` reports the backend as
    /// unavailable.
    pub fn unavailable_after(mut self, n: usize) -> Self {
        self.unavailable_after = Some(n);
        self
    }

    pub fn calls(&self) -> CallCounts {
        self.script.lock().unwrap().calls
    }

    /// Candidate count of each classify request seen, in call order.
    pub fn block_sizes(&self) -> Vec<usize> {
        self.script.lock().unwrap().block_sizes.clone()
    }
}

impl<B: ClassifierBackend> ClassifierBackend for ScriptedBackend<B> {
    fn identity(&self) -> String {
        format!("scripted({})", self.inner.identity())
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, BackendError> {
        let queued = {
            let mut s = self.script.lock().unwrap();
            s.calls.generate += 1;
            if self.unavailable_after.is_some_and(|n| s.calls.generate > n) {
                return Err(BackendError::Unavailable("scripted outage".into()));
            }
            s.generate.pop_front()
        };
        queued.unwrap_or_else(|| self.inner.generate(request))
    }

    fn embed(&self, request: &EmbedRequest) -> Result<EmbedResponse, BackendError> {
        self.script.lock().unwrap().calls.embed += 1;
        self.inner.embed(request)
    }

    fn classify_block(&self, request: &ClassifyRequest) -> Result<String, BackendError> {
        let queued = {
            let mut s = self.script.lock().unwrap();
            s.calls.classify += 1;
            s.block_sizes.push(request.candidates.len());
            s.classify.pop_front()
        };
        queued.unwrap_or_else(|| self.inner.classify_block(request))
    }

    fn completion(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let queued = {
            let mut s = self.script.lock().unwrap();
            s.calls.completion += 1;
            s.completion.pop_front()
        };
        queued.unwrap_or_else(|| self.inner.completion(request))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{cosine, rank_by_embeddings, CatalogEntry, IwaCatalog};
    use super::*;
    use crate::ids::IwaId;
    use proptest::prelude::*;

    fn msgs(user: &str, ai: &str) -> Vec<Message> {
        vec![
            Message { role: Role::User, text: user.into() },
            Message { role: Role::Assistant, text: ai.into() },
        ]
    }

    fn completion_of(ai: &str) -> serde_json::Value {
        let req = CompletionRequest {
            schema: schema::COMPLETION.into(),
            model: None,
            temperature: 0.0,
            prompt: String::new(),
            messages: msgs("please", ai),
        };
        serde_json::from_str(&MockBackend::default().completion(&req).unwrap()).unwrap()
    }

    #[test]
    fn completion_markers() {
        assert_eq!(completion_of("All DONE here")["completed"], "complete");
        assert_eq!(completion_of("PARTIAL answer")["completed"], "partially_complete");
        assert_eq!(completion_of("")["completed"], "not_complete");
        assert_eq!(completion_of("DONE and FAST")["speedup_50pct"], true);
    }

    #[test]
    fn hit_counts_map_to_scope() {
        let mock = MockBackend::new(vec![KeywordRule {
            iwa: "Research biological or ecological phenomena.".into(),
            keywords: vec!["mitochondrion".into(), "cell biology".into()],
        }]);
        let tokens = tokenize("What is a mitochondrion?");
        assert_eq!(scope_for_hits(mock.hits("Research biological or ecological phenomena", &tokens)), "minimal");
        let many = tokenize("mitochondrion cell biology mitochondrion cell biology mitochondrion");
        assert_eq!(scope_for_hits(mock.hits("Research biological or ecological phenomena.", &many)), "complete");
        assert_eq!(mock.hits("Unrelated statement", &tokens), 0);
    }

    #[test]
    fn keywords_do_not_cross_message_boundaries() {
        let tokens = side_tokens(&[
            Message { role: Role::User, text: "cell".into() },
            Message { role: Role::User, text: "biology".into() },
        ], Role::User);
        assert_eq!(count_phrase(&tokens, &tokenize("cell biology")), 0);
    }

    #[test]
    fn generated_summary_is_valid_and_deterministic() {
        let mock = MockBackend::new(vec![KeywordRule {
            iwa: "Resolve computer problems.".into(),
            keywords: vec!["laptop".into()],
        }]);
        let req = GenerationRequest {
            schema: schema::GENERATION.into(),
            model: None,
            temperature: 1.0,
            prompt: String::new(),
            messages: msgs("my laptop crashes, it's for homework", "reinstall the driver"),
        };
        let a = mock.generate(&req).unwrap();
        assert_eq!(a, mock.generate(&req).unwrap());
        let s: super::super::StageOneSummary = serde_json::from_str(&a).unwrap();
        s.validate().unwrap();
        assert_eq!(s.user_iwa, "Resolve computer problems.");
        assert_eq!(s.is_homework, 1);
    }

    #[test]
    fn exact_statement_ranks_first() {
        let titles = [
            "Gather information from physical or electronic sources.",
            "Resolve computer problems.",
            "Advise others on the design or use of technologies.",
            "Provide information to guests, clients, or customers.",
            "Edit written materials or documents.",
        ];
        let entries: Vec<CatalogEntry> = titles
            .iter()
            .enumerate()
            .map(|(i, t)| CatalogEntry { iwa_id: IwaId::new(format!("I{i}")), title: t.to_string() })
            .collect();
        let catalog = IwaCatalog {
            embeddings: titles.iter().map(|t| embed_text(t)).collect(),
            entries,
        };
        for (i, t) in titles.iter().enumerate() {
            let phrasings: Vec<Vec<f32>> = std::iter::once(t.to_string())
                .chain(variations(t))
                .map(|p| embed_text(&p))
                .collect();
            let ranked = rank_by_embeddings(&phrasings, &catalog);
            assert_eq!(ranked[0].0.as_str(), format!("I{i}"));
            assert!((ranked[0].1 - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn identical_text_has_unit_cosine(words in proptest::collection::vec("[a-z]{1,8}", 1..12),
                                          other in proptest::collection::vec("[a-z]{1,8}", 1..12)) {
            let a = words.join(" ");
            let b = other.join(" ");
            let ea = embed_text(&a);
            prop_assert!((cosine(&ea, &ea) - 1.0).abs() < 1e-9);
            prop_assert!(cosine(&ea, &embed_text(&b)) <= 1.0 + 1e-9);
            for v in variations(&a) {
                prop_assert!((cosine(&ea, &embed_text(&v)) - 1.0).abs() < 1e-9);
            }
        }
    }
}
