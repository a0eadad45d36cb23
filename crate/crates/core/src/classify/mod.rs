//! Two-stage IWA classification of conversations.
//!
//! Stage one asks the model for IWA-style summaries of the user goal and the
//! AI action. Those summaries order the IWA catalog by embedding similarity,
//! and stage two walks the ordered catalog in blocks, asking for a match
//! verdict and a scope level per IWA. A separate call judges task completion.

pub mod backend;
pub mod mock;
pub mod pipeline;
pub mod prompts;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ConversationRecord, Message, Thumbs, TRUNCATION_MARKER};
use crate::ids::IwaId;
use crate::taxonomy::TaxonomyStore;

pub use backend::{
    BackendError, Candidate, ClassifierBackend, ClassifyRequest, CompletionRequest, EmbedRequest,
    EmbedResponse, GenerationRequest,
};

pub const DEFAULT_BLOCK_SIZE: usize = 20;
pub const VARIATION_COUNT: usize = 4;
pub const DEFAULT_CHAR_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    User,
    Ai,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::User, Side::Ai];

    pub fn as_str(self) -> &'static str {
        match self {
            Side::User => "user",
            Side::Ai => "ai",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "user" => Ok(Side::User),
            "ai" | "bot" => Ok(Side::Ai),
            other => Err(format!("unknown side {other:?}")),
        }
    }
}

/// How much of an IWA's work the demonstrated capability covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScopeLevel {
    None,
    Minimal,
    Limited,
    Moderate,
    Significant,
    Complete,
}

impl ScopeLevel {
    pub const ALL: [ScopeLevel; 6] = [
        ScopeLevel::None,
        ScopeLevel::Minimal,
        ScopeLevel::Limited,
        ScopeLevel::Moderate,
        ScopeLevel::Significant,
        ScopeLevel::Complete,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScopeLevel::None => "none",
            ScopeLevel::Minimal => "minimal",
            ScopeLevel::Limited => "limited",
            ScopeLevel::Moderate => "moderate",
            ScopeLevel::Significant => "significant",
            ScopeLevel::Complete => "complete",
        }
    }
}

impl FromStr for ScopeLevel {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        ScopeLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == key)
            .ok_or_else(|| format!("unknown scope level {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionLevel {
    NotComplete,
    #[serde(rename = "partially_complete")]
    Partial,
    Complete,
}

impl CompletionLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            CompletionLevel::NotComplete => "not_complete",
            CompletionLevel::Partial => "partially_complete",
            CompletionLevel::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub level: CompletionLevel,
    pub speedup_50pct: bool,
}

/// Stage-one output. Field names follow the `GenerationAnswer` wire schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageOneSummary {
    pub summary: String,
    pub user_iwa: String,
    pub user_iwa_variations: Vec<String>,
    pub bot_iwa: String,
    pub bot_iwa_variations: Vec<String>,
    pub is_homework_explanation: String,
    pub is_homework: u8,
}

pub type GenerationAnswer = StageOneSummary;

impl StageOneSummary {
    pub fn validate(&self) -> Result<(), String> {
        let texts = [
            ("summary", &self.summary),
            ("user_iwa", &self.user_iwa),
            ("bot_iwa", &self.bot_iwa),
            ("is_homework_explanation", &self.is_homework_explanation),
        ];
        for (name, value) in texts {
            if value.trim().is_empty() {
                return Err(format!("{name} is empty"));
            }
        }
        for (name, list) in [
            ("user_iwa_variations", &self.user_iwa_variations),
            ("bot_iwa_variations", &self.bot_iwa_variations),
        ] {
            if list.len() != VARIATION_COUNT {
                return Err(format!("{name} has {} entries, expected {VARIATION_COUNT}", list.len()));
            }
            if list.iter().any(|v| v.trim().is_empty()) {
                return Err(format!("{name} contains an empty entry"));
            }
        }
        if self.is_homework > 1 {
            return Err(format!("is_homework must be 0 or 1, got {}", self.is_homework));
        }
        Ok(())
    }

    /// The primary statement followed by its four variations.
    pub fn phrasings(&self, side: Side) -> Vec<&str> {
        let (primary, variations) = match side {
            Side::User => (&self.user_iwa, &self.user_iwa_variations),
            Side::Ai => (&self.bot_iwa, &self.bot_iwa_variations),
        };
        std::iter::once(primary.as_str())
            .chain(variations.iter().map(String::as_str))
            .collect()
    }

    pub fn primary(&self, side: Side) -> &str {
        match side {
            Side::User => &self.user_iwa,
            Side::Ai => &self.bot_iwa,
        }
    }
}

/// One per-candidate verdict, shared shape of `UserIWAAnalysis` and
/// `BotIWAAnalysis`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserIwaAnalysis {
    pub iwa: String,
    pub iwa_explanation: String,
    pub is_match_explanation: String,
    pub is_match: bool,
    pub assistance_level_explanation: String,
    pub assistance_level: ScopeLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotIwaAnalysis {
    pub iwa: String,
    pub iwa_explanation: String,
    pub is_match_explanation: String,
    pub is_match: bool,
    pub automation_level_explanation: String,
    pub automation_level: ScopeLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserClassificationAnswer {
    pub iwa_analyses: Vec<UserIwaAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BotClassificationAnswer {
    pub iwa_analyses: Vec<BotIwaAnalysis>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionAnswer {
    pub task_summary: String,
    pub completed_explanation: String,
    pub completed: CompletionLevel,
    pub speedup_50pct_explanation: String,
    pub speedup_50pct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IwaMatch {
    pub iwa_id: IwaId,
    pub side: Side,
    pub scope: ScopeLevel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationLabels {
    pub conversation_id: String,
    pub user_matches: Vec<IwaMatch>,
    pub ai_matches: Vec<IwaMatch>,
    pub completion: Completion,
    pub stage_one: StageOneSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbs: Option<Thumbs>,
    /// Blocks that failed after retry, summed over both sides.
    #[serde(default)]
    pub failed_blocks: u32,
}

impl ConversationLabels {
    pub fn matches(&self, side: Side) -> &[IwaMatch] {
        match side {
            Side::User => &self.user_matches,
            Side::Ai => &self.ai_matches,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.failed_blocks == 0
    }

    pub fn iwa_set(&self, side: Side) -> BTreeSet<&IwaId> {
        self.matches(side).iter().map(|m| &m.iwa_id).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifyError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("{stage} failed: {message}")]
    Failed { stage: &'static str, message: String },
}

impl ClassifyError {
    pub fn stage(&self) -> &'static str {
        match self {
            ClassifyError::Unavailable(_) => "backend",
            ClassifyError::Failed { stage, .. } => stage,
        }
    }
}

/// Per-stage model name and temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSettings {
    pub model: Option<String>,
    pub temperature: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelOptions {
    pub block_size: usize,
    pub char_budget: usize,
    pub generate: StageSettings,
    pub classify: StageSettings,
    pub completion: StageSettings,
    pub embedding_model: Option<String>,
}

impl Default for LabelOptions {
    fn default() -> Self {
        Self {
            block_size: DEFAULT_BLOCK_SIZE,
            char_budget: DEFAULT_CHAR_BUDGET,
            generate: StageSettings { model: Some("gpt-4o-2024-08-06".into()), temperature: 1.0 },
            classify: StageSettings { model: Some("gpt-4o-2024-08-06".into()), temperature: 0.0 },
            completion: StageSettings {
                model: Some("gpt-4o-mini-2024-07-18".into()),
                temperature: 0.0,
            },
            embedding_model: Some("text-embedding-3-large".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub iwa_id: IwaId,
    pub title: String,
}

/// IWA statements with their embeddings, computed once per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwaCatalog {
    pub entries: Vec<CatalogEntry>,
    pub embeddings: Vec<Vec<f32>>,
}

impl IwaCatalog {
    /// Entries in IWA id order.
    pub fn entries_from_store(store: &TaxonomyStore) -> Vec<CatalogEntry> {
        store
            .iwas()
            .map(|n| CatalogEntry { iwa_id: n.iwa_id.clone(), title: n.title.clone() })
            .collect()
    }

    pub fn build(
        entries: Vec<CatalogEntry>,
        backend: &dyn ClassifierBackend,
        model: Option<String>,
    ) -> Result<Self, ClassifyError> {
        let texts: Vec<String> = entries.iter().map(|e| e.title.clone()).collect();
        let embeddings = embed_with_retry(backend, &EmbedRequest { model, texts })?;
        Ok(Self { entries, embeddings })
    }

    pub fn from_store(
        store: &TaxonomyStore,
        backend: &dyn ClassifierBackend,
        model: Option<String>,
    ) -> Result<Self, ClassifyError> {
        Self::build(Self::entries_from_store(store), backend, model)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn title(&self, id: &IwaId) -> Option<&str> {
        self.entries.iter().find(|e| &e.iwa_id == id).map(|e| e.title.as_str())
    }

    fn index(&self) -> BTreeMap<&IwaId, &str> {
        self.entries.iter().map(|e| (&e.iwa_id, e.title.as_str())).collect()
    }
}

fn embed_with_retry(
    backend: &dyn ClassifierBackend,
    request: &EmbedRequest,
) -> Result<Vec<Vec<f32>>, ClassifyError> {
    with_retry("embed", || {
        let resp = backend.embed(request)?;
        if resp.embeddings.len() != request.texts.len() {
            return Ok(Err(format!(
                "expected {} embeddings, got {}",
                request.texts.len(),
                resp.embeddings.len()
            )));
        }
        let dim = resp.embeddings.first().map_or(0, Vec::len);
        if dim == 0 || resp.embeddings.iter().any(|e| e.len() != dim) {
            return Ok(Err("embeddings are empty or of unequal length".to_string()));
        }
        Ok(Ok(resp.embeddings))
    })
}

/// Runs `call` at most twice. The closure reports transport errors through
/// the outer result and parse or validation errors through the inner one.
/// Unavailability is never retried.
fn with_retry<T>(
    stage: &'static str,
    mut call: impl FnMut() -> Result<Result<T, String>, BackendError>,
) -> Result<T, ClassifyError> {
    let mut last = String::new();
    for attempt in 0..2 {
        match call() {
            Ok(Ok(value)) => return Ok(value),
            Ok(Err(message)) | Err(BackendError::Failed(message)) => {
                log::debug!("{stage} attempt {} failed: {message}", attempt + 1);
                last = message;
            }
            Err(BackendError::Unavailable(message)) => {
                return Err(ClassifyError::Unavailable(message));
            }
        }
    }
    Err(ClassifyError::Failed { stage, message: last })
}

/// Transcript with messages cut so the total text fits `budget` characters.
fn bounded_view(conversation: &ConversationRecord, budget: usize) -> ConversationRecord {
    let mut used = 0usize;
    let mut messages: Vec<Message> = Vec::new();
    for m in &conversation.messages {
        let n = m.text.chars().count();
        if used + n <= budget {
            used += n;
            messages.push(m.clone());
            continue;
        }
        let keep = budget.saturating_sub(used);
        let mut text: String = m.text.chars().take(keep).collect();
        text.push_str(TRUNCATION_MARKER);
        messages.push(Message { role: m.role, text });
        break;
    }
    ConversationRecord { messages, ..conversation.clone() }
}

pub fn stage_one(
    conversation: &ConversationRecord,
    backend: &dyn ClassifierBackend,
    options: &LabelOptions,
) -> Result<StageOneSummary, ClassifyError> {
    if conversation.messages.iter().all(|m| m.text.trim().is_empty()) {
        return Err(ClassifyError::Failed {
            stage: "generate",
            message: "conversation is empty".into(),
        });
    }
    let view = bounded_view(conversation, options.char_budget);
    let request = GenerationRequest {
        schema: backend::schema::GENERATION.into(),
        model: options.generate.model.clone(),
        temperature: options.generate.temperature,
        prompt: prompts::render_generate(&view.render()),
        messages: view.messages,
    };
    with_retry("generate", || {
        let raw = backend.generate(&request)?;
        Ok(serde_json::from_str::<StageOneSummary>(&raw)
            .map_err(|e| e.to_string())
            .and_then(|s| s.validate().map(|_| s)))
    })
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Orders catalog entries by descending mean cosine similarity to the given
/// phrasing embeddings. Ties keep catalog order.
pub fn rank_by_embeddings(phrasings: &[Vec<f32>], catalog: &IwaCatalog) -> Vec<(IwaId, f64)> {
    let mut scored: Vec<(usize, f64)> = catalog
        .embeddings
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let total: f64 = phrasings.iter().map(|p| cosine(p, e)).sum();
            (i, total / phrasings.len().max(1) as f64)
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .map(|(i, s)| (catalog.entries[i].iwa_id.clone(), s))
        .collect()
}

pub fn rank_candidates(
    summary: &StageOneSummary,
    side: Side,
    catalog: &IwaCatalog,
    backend: &dyn ClassifierBackend,
    options: &LabelOptions,
) -> Result<Vec<IwaId>, ClassifyError> {
    let request = EmbedRequest {
        model: options.embedding_model.clone(),
        texts: summary.phrasings(side).into_iter().map(str::to_string).collect(),
    };
    let phrasings = embed_with_retry(backend, &request)?;
    let dim = catalog.embeddings.first().map_or(0, Vec::len);
    if phrasings[0].len() != dim {
        return Err(ClassifyError::Failed {
            stage: "embed",
            message: format!("phrasing dimension {} differs from catalog {dim}", phrasings[0].len()),
        });
    }
    Ok(rank_by_embeddings(&phrasings, catalog).into_iter().map(|(id, _)| id).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BlockOutcome {
    pub matches: Vec<IwaMatch>,
    pub failed_blocks: u32,
    pub blocks: u32,
}

/// Verdicts for one block, reference item included, as (is_match, scope).
fn parse_block(raw: &str, side: Side, expected: usize) -> Result<Vec<(bool, ScopeLevel)>, String> {
    let verdicts: Vec<(bool, ScopeLevel)> = match side {
        Side::User => serde_json::from_str::<UserClassificationAnswer>(raw)
            .map_err(|e| e.to_string())?
            .iwa_analyses
            .into_iter()
            .map(|a| (a.is_match, a.assistance_level))
            .collect(),
        Side::Ai => serde_json::from_str::<BotClassificationAnswer>(raw)
            .map_err(|e| e.to_string())?
            .iwa_analyses
            .into_iter()
            .map(|a| (a.is_match, a.automation_level))
            .collect(),
    };
    if verdicts.len() != expected {
        return Err(format!("expected {expected} analyses, got {}", verdicts.len()));
    }
    Ok(verdicts)
}

pub fn classify_blocks(
    conversation: &ConversationRecord,
    summary: &StageOneSummary,
    ranked: &[IwaId],
    side: Side,
    catalog: &IwaCatalog,
    backend: &dyn ClassifierBackend,
    options: &LabelOptions,
) -> Result<BlockOutcome, ClassifyError> {
    let titles = catalog.index();
    let distinct: HashSet<&IwaId> = ranked.iter().collect();
    if ranked.len() != titles.len()
        || distinct.len() != ranked.len()
        || ranked.iter().any(|id| !titles.contains_key(id))
    {
        return Err(ClassifyError::Failed {
            stage: "classify",
            message: "ranked list is not a permutation of the catalog".into(),
        });
    }
    let view = bounded_view(conversation, options.char_budget);
    let convo = view.render();
    let (schema, template) = match side {
        Side::User => (backend::schema::USER_CLASSIFICATION, prompts::CLASSIFY_USER),
        Side::Ai => (backend::schema::BOT_CLASSIFICATION, prompts::CLASSIFY_BOT),
    };
    let reference = summary.primary(side).to_string();
    let mut outcome = BlockOutcome::default();
    for block in ranked.chunks(options.block_size.max(1)) {
        outcome.blocks += 1;
        let mut candidates = vec![Candidate { id: 0, iwa: reference.clone() }];
        candidates.extend(
            block
                .iter()
                .enumerate()
                .map(|(k, id)| Candidate { id: k + 1, iwa: titles[id].to_string() }),
        );
        let request = ClassifyRequest {
            schema: schema.into(),
            model: options.classify.model.clone(),
            temperature: options.classify.temperature,
            side,
            prompt: prompts::render_classify(template, &convo, &summary.summary, &candidates),
            messages: view.messages.clone(),
            summary: summary.summary.clone(),
            candidates,
        };
        let verdicts = with_retry("classify", || {
            let raw = backend.classify_block(&request)?;
            Ok(parse_block(&raw, side, block.len() + 1))
        });
        match verdicts {
            Ok(verdicts) => {
                for (id, (is_match, scope)) in block.iter().zip(verdicts.into_iter().skip(1)) {
                    if is_match && scope > ScopeLevel::None {
                        outcome.matches.push(IwaMatch { iwa_id: id.clone(), side, scope });
                    }
                }
            }
            Err(ClassifyError::Failed { message, .. }) => {
                log::warn!(
                    "conversation {}: {side} block {} failed: {message}",
                    conversation.conversation_id,
                    outcome.blocks
                );
                outcome.failed_blocks += 1;
            }
            Err(e) => return Err(e),
        }
    }
    outcome.matches.sort();
    Ok(outcome)
}

pub fn classify_completion(
    conversation: &ConversationRecord,
    backend: &dyn ClassifierBackend,
    options: &LabelOptions,
) -> Result<Completion, ClassifyError> {
    let view = bounded_view(conversation, options.char_budget);
    let request = CompletionRequest {
        schema: backend::schema::COMPLETION.into(),
        model: options.completion.model.clone(),
        temperature: options.completion.temperature,
        prompt: prompts::render_completion(&view.render()),
        messages: view.messages,
    };
    with_retry("completion", || {
        let raw = backend.completion(&request)?;
        Ok(serde_json::from_str::<CompletionAnswer>(&raw)
            .map(|a| Completion { level: a.completed, speedup_50pct: a.speedup_50pct })
            .map_err(|e| e.to_string()))
    })
}

/// Runs every stage for one conversation.
pub fn label_conversation(
    conversation: &ConversationRecord,
    catalog: &IwaCatalog,
    backend: &dyn ClassifierBackend,
    options: &LabelOptions,
) -> Result<ConversationLabels, ClassifyError> {
    let stage_one = stage_one(conversation, backend, options)?;
    let mut sides = Vec::with_capacity(2);
    for side in Side::BOTH {
        let ranked = rank_candidates(&stage_one, side, catalog, backend, options)?;
        sides.push(classify_blocks(conversation, &stage_one, &ranked, side, catalog, backend, options)?);
    }
    let completion = classify_completion(conversation, backend, options)?;
    let ai = sides.pop().unwrap_or_default();
    let user = sides.pop().unwrap_or_default();
    Ok(ConversationLabels {
        conversation_id: conversation.conversation_id.clone(),
        user_matches: user.matches,
        ai_matches: ai.matches,
        completion,
        stage_one,
        thumbs: conversation.thumbs,
        failed_blocks: user.failed_blocks + ai.failed_blocks,
    })
}
