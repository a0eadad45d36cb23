//! Corpus-level labeling with bounded parallelism and checkpoints.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{label_conversation, ClassifierBackend, ClassifyError, ConversationLabels, IwaCatalog, LabelOptions};
use crate::corpus::ConversationRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub conversation_id: String,
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineOutput {
    pub labels: Vec<ConversationLabels>,
    pub failures: Vec<FailureRecord>,
}

impl PipelineOutput {
    /// Conversations accounted for, labeled or failed.
    pub fn processed(&self) -> usize {
        self.labels.len() + self.failures.len()
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    /// The backend went away. `completed` holds the in-order prefix that
    /// finished before the first unavailable call.
    #[error("backend unavailable after {} conversations: {message}", completed.processed())]
    Unavailable { message: String, completed: PipelineOutput },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("checkpoint was written under config {found}, current config is {expected}")]
    ConfigDrift { expected: String, found: String },
    #[error("checkpoint does not match the corpus: {0}")]
    CorpusChanged(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// Labels `conversations` in input order regardless of which worker finishes
/// first. At most `parallelism` conversations are in flight.
pub fn run_pipeline(
    conversations: &[ConversationRecord],
    catalog: &IwaCatalog,
    backend: &dyn ClassifierBackend,
    options: &LabelOptions,
    parallelism: usize,
) -> Result<PipelineOutput, PipelineError> {
    let n = conversations.len();
    let workers = parallelism.max(1).min(n.max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Vec<Mutex<Option<Result<ConversationLabels, ClassifyError>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();

    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = label_conversation(&conversations[i], catalog, backend, options);
                if matches!(result, Err(ClassifyError::Unavailable(_))) {
                    stop.store(true, Ordering::SeqCst);
                }
                *slots[i].lock().unwrap() = Some(result);
            });
        }
    });

    let mut out = PipelineOutput::default();
    for (conv, slot) in conversations.iter().zip(slots) {
        match slot.into_inner().unwrap() {
            Some(Ok(labels)) => out.labels.push(labels),
            Some(Err(ClassifyError::Failed { stage, message })) => {
                log::warn!("conversation {} excluded at {stage}: {message}", conv.conversation_id);
                out.failures.push(FailureRecord {
                    conversation_id: conv.conversation_id.clone(),
                    stage: stage.to_string(),
                    message,
                });
            }
            Some(Err(ClassifyError::Unavailable(message))) => {
                return Err(PipelineError::Unavailable { message, completed: out });
            }
            None => {
                return Err(PipelineError::Unavailable {
                    message: "stopped after an earlier outage".into(),
                    completed: out,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub completed: usize,
    pub last_conversation_id: Option<String>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub labels: PathBuf,
    pub failures: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            labels: dir.join("labels.jsonl"),
            failures: dir.join("failures.jsonl"),
            checkpoint: dir.join("checkpoint.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub labeled: usize,
    pub failed: usize,
    /// Conversations already done before this invocation.
    pub resumed_from: usize,
}

pub fn read_checkpoint(path: &Path) -> Result<Option<Checkpoint>, PipelineError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| PipelineError::Parse { path: path.into(), line: e.line(), message: e.to_string() })
}

fn write_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), PipelineError> {
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_string_pretty(checkpoint).expect("checkpoint serializes");
    fs::write(&tmp, body).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PipelineError::Parse {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T], append: bool) -> Result<(), PipelineError> {
    let file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).expect("record serializes");
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_labels(path: &Path) -> Result<Vec<ConversationLabels>, PipelineError> {
    read_jsonl(path)
}

pub fn write_labels(path: &Path, labels: &[ConversationLabels]) -> Result<(), PipelineError> {
    write_jsonl(path, labels, false)
}

/// Drops records past the checkpoint, which a crash between appending and
/// checkpointing can leave behind.
fn trim_to<T, F>(path: &Path, keep: &HashSet<&str>, id: F) -> Result<(), PipelineError>
where
    T: Serialize + DeserializeOwned,
    F: Fn(&T) -> &str,
{
    if !path.exists() {
        return write_jsonl::<T>(path, &[], false);
    }
    let mut items: Vec<T> = read_jsonl(path)?;
    let before = items.len();
    items.retain(|x| keep.contains(id(x)));
    if items.len() != before {
        log::info!("{}: dropped {} records past the checkpoint", path.display(), before - items.len());
        write_jsonl(path, &items, false)?;
    }
    Ok(())
}

/// Labels the corpus into `files`, resuming from the checkpoint when one
/// exists for the same config.
pub fn run_resumable(
    conversations: &[ConversationRecord],
    catalog: &IwaCatalog,
    backend: &dyn ClassifierBackend,
    options: &LabelOptions,
    parallelism: usize,
    files: &RunFiles,
    config_hash: &str,
) -> Result<RunSummary, PipelineError> {
    let start = match read_checkpoint(&files.checkpoint)? {
        Some(cp) => {
            if cp.config_hash != config_hash {
                return Err(PipelineError::ConfigDrift {
                    expected: config_hash.into(),
                    found: cp.config_hash,
                });
            }
            if cp.completed > conversations.len() {
                return Err(PipelineError::CorpusChanged(format!(
                    "checkpoint covers {} conversations, corpus has {}",
                    cp.completed,
                    conversations.len()
                )));
            }
            let expected = cp.completed.checked_sub(1).map(|i| conversations[i].conversation_id.as_str());
            if cp.last_conversation_id.as_deref() != expected {
                return Err(PipelineError::CorpusChanged(format!(
                    "checkpoint ends at {:?}, corpus position holds {:?}",
                    cp.last_conversation_id, expected
                )));
            }
            cp.completed
        }
        None => 0,
    };
    let done: HashSet<&str> = conversations[..start].iter().map(|c| c.conversation_id.as_str()).collect();
    trim_to::<ConversationLabels, _>(&files.labels, &done, |l| &l.conversation_id)?;
    trim_to::<FailureRecord, _>(&files.failures, &done, |f| &f.conversation_id)?;
    if start > 0 {
        log::info!("resuming after {start} conversations");
    }

    let batch = (parallelism.max(1) * 8).max(16);
    let mut position = start;
    let mut summary = RunSummary { labeled: 0, failed: 0, resumed_from: start };
    let commit = |output: &PipelineOutput, position: usize, finished: bool| -> Result<(), PipelineError> {
        write_jsonl(&files.labels, &output.labels, true)?;
        write_jsonl(&files.failures, &output.failures, true)?;
        write_checkpoint(
            &files.checkpoint,
            &Checkpoint {
                config_hash: config_hash.into(),
                completed: position,
                last_conversation_id: position
                    .checked_sub(1)
                    .map(|i| conversations[i].conversation_id.clone()),
                finished,
            },
        )
    };
    loop {
        let end = (position + batch).min(conversations.len());
        let chunk = &conversations[position..end];
        match run_pipeline(chunk, catalog, backend, options, parallelism) {
            Ok(output) => {
                position = end;
                summary.labeled += output.labels.len();
                summary.failed += output.failures.len();
                commit(&output, position, position == conversations.len())?;
                if position == conversations.len() {
                    return Ok(summary);
                }
            }
            Err(PipelineError::Unavailable { message, completed }) => {
                position += completed.processed();
                commit(&completed, position, false)?;
                return Err(PipelineError::Unavailable { message, completed });
            }
            Err(e) => return Err(e),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::mock::{KeywordRule, MockBackend, ScriptedBackend};
    use super::super::{CatalogEntry, IwaCatalog};
    use super::*;
    use crate::corpus::{Message, Role};
    use crate::ids::IwaId;

    fn corpus(n: usize) -> Vec<ConversationRecord> {
        let topics = ["laptop crash", "essay draft", "tax question", "recipe", "poem"];
        (0..n)
            .map(|i| ConversationRecord {
                conversation_id: format!("c{i:04}"),
                messages: vec![
                    Message { role: Role::User, text: format!("help with {}", topics[i % topics.len()]) },
                    Message { role: Role::Assistant, text: if i % 3 == 0 { "DONE".into() } else { "hmm".into() } },
                ],
                thumbs: None,
                locale: None,
            })
            .collect()
    }

    fn mock() -> MockBackend {
        MockBackend::new(vec![
            KeywordRule { iwa: "Resolve computer problems.".into(), keywords: vec!["laptop".into()] },
            KeywordRule { iwa: "Edit written materials or documents.".into(), keywords: vec!["essay".into()] },
        ])
    }

    fn catalog(backend: &dyn ClassifierBackend) -> IwaCatalog {
        let titles = ["Resolve computer problems.", "Edit written materials or documents.", "Prepare foods."];
        let entries = titles
            .iter()
            .enumerate()
            .map(|(i, t)| CatalogEntry { iwa_id: IwaId::new(format!("I{i}")), title: t.to_string() })
            .collect();
        IwaCatalog::build(entries, backend, None).unwrap()
    }

    #[test]
    fn output_independent_of_parallelism() {
        let backend = mock();
        let cat = catalog(&backend);
        let convs = corpus(40);
        let serial = run_pipeline(&convs, &cat, &backend, &LabelOptions::default(), 1).unwrap();
        let parallel = run_pipeline(&convs, &cat, &backend, &LabelOptions::default(), 8).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial.labels.len(), 40);
        let ids: Vec<&str> = serial.labels.iter().map(|l| l.conversation_id.as_str()).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(serial.labels[0].user_matches[0].iwa_id.as_str(), "I0");
    }

    #[test]
    fn failures_are_ledgered() {
        let backend = ScriptedBackend::new(mock())
            .with_generate(vec![Ok("bad".into()), Ok("still bad".into())]);
        let cat = catalog(&backend);
        let out = run_pipeline(&corpus(3), &cat, &backend, &LabelOptions::default(), 1).unwrap();
        assert_eq!(out.labels.len(), 2);
        assert_eq!(out.failures[0].conversation_id, "c0000");
        assert_eq!(out.failures[0].stage, "generate");
    }

    #[test]
    fn outage_then_resume_matches_clean_run() {
        let dir = tempfile::tempdir().unwrap();
        let convs = corpus(50);
        let clean_backend = mock();
        let cat = catalog(&clean_backend);
        let clean = run_pipeline(&convs, &cat, &clean_backend, &LabelOptions::default(), 4).unwrap();

        let files = RunFiles::in_dir(dir.path());
        let flaky = ScriptedBackend::new(mock()).unavailable_after(23);
        let err = run_resumable(&convs, &cat, &flaky, &LabelOptions::default(), 4, &files, "h1").unwrap_err();
        assert!(matches!(err, PipelineError::Unavailable { .. }));
        let cp = read_checkpoint(&files.checkpoint).unwrap().unwrap();
        assert!(cp.completed <= 23 && !cp.finished);

        let drift = run_resumable(&convs, &cat, &clean_backend, &LabelOptions::default(), 4, &files, "h2");
        assert!(matches!(drift, Err(PipelineError::ConfigDrift { .. })));

        let summary = run_resumable(&convs, &cat, &clean_backend, &LabelOptions::default(), 4, &files, "h1").unwrap();
        assert_eq!(summary.resumed_from, cp.completed);
        assert_eq!(read_labels(&files.labels).unwrap(), clean.labels);
        assert!(read_checkpoint(&files.checkpoint).unwrap().unwrap().finished);
    }

    #[test]
    fn stray_records_past_checkpoint_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let files = RunFiles::in_dir(dir.path());
        let backend = mock();
        let cat = catalog(&backend);
        let convs = corpus(5);
        let first = run_pipeline(&convs[..2], &cat, &backend, &LabelOptions::default(), 1).unwrap();
        let all = run_pipeline(&convs, &cat, &backend, &LabelOptions::default(), 1).unwrap();
        write_labels(&files.labels, &all.labels[..3]).unwrap();
        write_checkpoint(
            &files.checkpoint,
            &Checkpoint { config_hash: "h".into(), completed: 2, last_conversation_id: Some("c0001".into()), finished: false },
        )
        .unwrap();
        assert_eq!(first.labels, all.labels[..2]);
        run_resumable(&convs, &cat, &backend, &LabelOptions::default(), 1, &files, "h").unwrap();
        assert_eq!(read_labels(&files.labels).unwrap(), all.labels);
    }

    #[test]
    fn mismatched_corpus_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let files = RunFiles::in_dir(dir.path());
        write_checkpoint(
            &files.checkpoint,
            &Checkpoint { config_hash: "h".into(), completed: 1, last_conversation_id: Some("zzz".into()), finished: false },
        )
        .unwrap();
        let backend = mock();
        let cat = catalog(&backend);
        let res = run_resumable(&corpus(3), &cat, &backend, &LabelOptions::default(), 1, &files, "h");
        assert!(matches!(res, Err(PipelineError::CorpusChanged(_))));
    }
}
