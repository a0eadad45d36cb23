//! Conversation transcripts with optional thumbs feedback.
//!
//! A corpus is a line-delimited JSON file, one conversation per line:
//!
//! ```json
//! {"conversation_id": "c1", "messages": [{"role": "user", "text": "..."}, {"role": "assistant", "text": "..."}], "thumbs": "up"}
//! ```
//!
//! `thumbs` may also be a list of reactions; the last one wins.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{malformed} of {total} lines malformed (first at line {first_line}: {first_error})")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        first_line: usize,
        first_error: String,
    },
    #[error("thumbs corpus has conversations without feedback: {}", .0.join(", "))]
    MissingThumbs(Vec<String>),
    #[error("sample of {requested} requested from {available} conversations")]
    SampleTooLarge { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Thumbs {
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationRecord {
    pub conversation_id: String,
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbs: Option<Thumbs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locale: Option<String>,
}

impl ConversationRecord {
    pub fn text_of(&self, role: Role) -> impl Iterator<Item = &str> {
        self.messages
            .iter()
            .filter(move |m| m.role == role)
            .map(|m| m.text.as_str())
    }

    /// Renders the transcript as `User:` / `AI:` turns.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let speaker = match m.role {
                Role::User => "User",
                Role::Assistant => "AI",
            };
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(speaker);
            out.push_str(": ");
            out.push_str(&m.text);
        }
        out
    }

    /// Rendered transcript cut to at most `budget` characters, dropping the
    /// tail and appending a marker when anything was cut.
    pub fn render_truncated(&self, budget: usize) -> String {
        let full = self.render();
        if full.chars().count() <= budget {
            return full;
        }
        let keep = budget.saturating_sub(TRUNCATION_MARKER.chars().count());
        let mut out: String = full.chars().take(keep).collect();
        out.push_str(TRUNCATION_MARKER);
        out
    }
}

pub const TRUNCATION_MARKER: &str = "\n[... conversation truncated ...]";

#[derive(Deserialize)]
#[serde(untagged)]
enum RawThumbs {
    One(Thumbs),
    Many(Vec<Thumbs>),
}

#[derive(Deserialize)]
struct RawRecord {
    conversation_id: String,
    messages: Vec<Message>,
    #[serde(default)]
    thumbs: Option<RawThumbs>,
    #[serde(default)]
    locale: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    #[default]
    Uniform,
    Thumbs,
}

/// Counts gathered while validating a corpus file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub malformed: usize,
    /// Conversations that carried more than one reaction.
    pub multi_reaction: usize,
}

/// A validated corpus file. Records are re-read from disk on each
/// iteration, in file order.
#[derive(Debug, Clone)]
pub struct CorpusHandle {
    pub source_path: PathBuf,
    pub count: usize,
    pub kind: CorpusKind,
    pub stats: CorpusStats,
}

/// Malformed lines tolerated before the corpus is rejected, as a fraction.
const MALFORMED_LIMIT: f64 = 0.01;

fn parse_line(line: &str) -> Result<(ConversationRecord, bool), String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.conversation_id.trim().is_empty() {
        return Err("empty conversation_id".into());
    }
    if raw.messages.is_empty() {
        return Err("no messages".into());
    }
    let (thumbs, multi) = match raw.thumbs {
        None => (None, false),
        Some(RawThumbs::One(t)) => (Some(t), false),
        Some(RawThumbs::Many(v)) => (v.last().copied(), v.len() > 1),
    };
    Ok((
        ConversationRecord {
            conversation_id: raw.conversation_id,
            messages: raw.messages,
            thumbs,
            locale: raw.locale,
        },
        multi,
    ))
}

/// Parses corpus lines, skipping malformed ones and enforcing the
/// malformed-line limit and the thumbs invariant.
pub fn parse_corpus<R: BufRead>(
    input: R,
    kind: CorpusKind,
) -> Result<(Vec<ConversationRecord>, CorpusStats), CorpusError> {
    let mut records = Vec::new();
    let mut stats = CorpusStats::default();
    let mut total = 0usize;
    let mut first_error: Option<(usize, String)> = None;
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: PathBuf::from("<input>"),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match parse_line(&line) {
            Ok((rec, multi)) => {
                if multi {
                    stats.multi_reaction += 1;
                }
                records.push(rec);
            }
            Err(e) => {
                stats.malformed += 1;
                log::warn!("corpus line {}: {e}", n + 1);
                first_error.get_or_insert((n + 1, e));
            }
        }
    }
    if stats.malformed > 0 && stats.malformed as f64 > MALFORMED_LIMIT * total as f64 {
        let (first_line, first_error) = first_error.unwrap_or_default();
        return Err(CorpusError::TooManyMalformed {
            malformed: stats.malformed,
            total,
            first_line,
            first_error,
        });
    }
    if stats.multi_reaction > 0 {
        log::info!(
            "{} conversations had multiple reactions; kept the last",
            stats.multi_reaction
        );
    }
    if kind == CorpusKind::Thumbs {
        let missing: Vec<String> = records
            .iter()
            .filter(|r| r.thumbs.is_none())
            .map(|r| r.conversation_id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CorpusError::MissingThumbs(missing));
        }
    }
    stats.count = records.len();
    Ok((records, stats))
}

/// Validates a corpus file and returns a handle for streaming it.
pub fn load_corpus(path: &Path, kind: CorpusKind) -> Result<CorpusHandle, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (_, stats) = parse_corpus(BufReader::new(file), kind)?;
    Ok(CorpusHandle {
        source_path: path.to_path_buf(),
        count: stats.count,
        kind,
        stats,
    })
}

impl CorpusHandle {
    /// Streams well-formed records in file order.
    pub fn iter(&self) -> Result<impl Iterator<Item = ConversationRecord>, CorpusError> {
        let file = File::open(&self.source_path).map_err(|source| CorpusError::Io {
            path: self.source_path.clone(),
            source,
        })?;
        Ok(BufReader::new(file)
            .lines()
            .map_while(Result::ok)
            .filter(|l| !l.trim().is_empty())
            .filter_map(|l| parse_line(&l).ok().map(|(r, _)| r)))
    }

    pub fn records(&self) -> Result<Vec<ConversationRecord>, CorpusError> {
        Ok(self.iter()?.collect())
    }
}

/// Uniform sample of `n` records without replacement, in sampled order.
/// The result depends only on the file contents, `n` and `seed`.
pub fn sample(
    handle: &CorpusHandle,
    n: usize,
    seed: u64,
) -> Result<Vec<ConversationRecord>, CorpusError> {
    let records = handle.records()?;
    sample_records(&records, n, seed)
}

pub fn sample_records(
    records: &[ConversationRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<ConversationRecord>, CorpusError> {
    if n > records.len() {
        return Err(CorpusError::SampleTooLarge {
            requested: n,
            available: records.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(index::sample(&mut rng, records.len(), n)
        .into_iter()
        .map(|i| records[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn line(id: &str, thumbs: Option<&str>) -> String {
        let t = thumbs
            .map(|t| format!(r#","thumbs":{t}"#))
            .unwrap_or_default();
        format!(
            r#"{{"conversation_id":"{id}","messages":[{{"role":"user","text":"hi"}},{{"role":"assistant","text":"hello"}}]{t}}}"#
        )
    }

    fn write_corpus(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn counts_well_formed_records() {
        let f = write_corpus(&[line("a", None), line("b", None), line("c", None)]);
        let h = load_corpus(f.path(), CorpusKind::Uniform).unwrap();
        assert_eq!(h.count, 3);
        let ids: Vec<_> = h.iter().unwrap().map(|r| r.conversation_id).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn thumbs_kind_requires_feedback() {
        let f = write_corpus(&[line("a", Some(r#""up""#)), line("b", None)]);
        match load_corpus(f.path(), CorpusKind::Thumbs) {
            Err(CorpusError::MissingThumbs(ids)) => assert_eq!(ids, vec!["b"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_has_zero_count() {
        let f = write_corpus(&[]);
        let h = load_corpus(f.path(), CorpusKind::Uniform).unwrap();
        assert_eq!(h.count, 0);
        assert!(h.records().unwrap().is_empty());
    }

    #[test]
    fn multi_reaction_keeps_last() {
        let (recs, stats) = parse_corpus(
            line("a", Some(r#"["up","down"]"#)).as_bytes(),
            CorpusKind::Thumbs,
        )
        .unwrap();
        assert_eq!(recs[0].thumbs, Some(Thumbs::Down));
        assert_eq!(stats.multi_reaction, 1);
    }

    #[test]
    fn malformed_lines_over_limit_are_fatal() {
        let mut lines: Vec<String> = (0..99).map(|i| line(&i.to_string(), None)).collect();
        lines.push("{not json".into());
        // 1 of 100 is at the limit and tolerated.
        let (recs, stats) = parse_corpus(lines.join("\n").as_bytes(), CorpusKind::Uniform).unwrap();
        assert_eq!((recs.len(), stats.malformed), (99, 1));
        lines.push(r#"{"conversation_id":"x","messages":[]}"#.into());
        let err = parse_corpus(lines.join("\n").as_bytes(), CorpusKind::Uniform).unwrap_err();
        assert!(matches!(err, CorpusError::TooManyMalformed { malformed: 2, total: 101, .. }));
    }

    #[test]
    fn unknown_role_is_malformed() {
        let bad = r#"{"conversation_id":"a","messages":[{"role":"system","text":"x"}]}"#;
        let err = parse_corpus(bad.as_bytes(), CorpusKind::Uniform).unwrap_err();
        assert!(matches!(err, CorpusError::TooManyMalformed { .. }));
    }

    #[test]
    fn sampling_is_seeded_and_bounded() {
        let lines: Vec<String> = (0..20).map(|i| line(&i.to_string(), None)).collect();
        let f = write_corpus(&lines);
        let h = load_corpus(f.path(), CorpusKind::Uniform).unwrap();
        let a = sample(&h, 5, 42).unwrap();
        let b = sample(&h, 5, 42).unwrap();
        assert_eq!(a, b);
        assert!(sample(&h, 0, 1).unwrap().is_empty());
        let mut all: Vec<_> = sample(&h, 20, 9)
            .unwrap()
            .into_iter()
            .map(|r| r.conversation_id.parse::<u32>().unwrap())
            .collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<_>>());
        assert!(matches!(
            sample(&h, 21, 1),
            Err(CorpusError::SampleTooLarge { .. })
        ));
    }

    #[test]
    fn truncation_drops_the_tail() {
        let rec = ConversationRecord {
            conversation_id: "a".into(),
            messages: vec![
                Message { role: Role::User, text: "x".repeat(100) },
                Message { role: Role::Assistant, text: "y".repeat(100) },
            ],
            thumbs: None,
            locale: None,
        };
        assert_eq!(rec.render_truncated(10_000), rec.render());
        let cut = rec.render_truncated(80);
        assert_eq!(cut.chars().count(), 80);
        assert!(cut.starts_with("User: xxx"));
        assert!(cut.ends_with(TRUNCATION_MARKER));
        assert!(!cut.contains('y'));
    }
}
