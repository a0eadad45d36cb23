//! Run configuration: one TOML file, with the remote credential read from an
//! environment variable named in the file.
//!
//! ```toml
//! seed = 7
//! parallelism = 4
//!
//! [paths]
//! onet_dir = "onet"
//! crosswalk = "crosswalk.csv"
//! oews = "oews.csv"
//! corpus = "corpus.jsonl"
//! reports_out = "reports"
//!
//! [backend]
//! kind = "mock"
//! rules = "keywords.json"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.
//! Stage hashes cover file contents and settings, never paths, so the same
//! inputs in another directory hash the same.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::LabelOptions;
use crate::metrics::MetricsConfig;
use crate::report::{ReportKind, ReportSpec};
use crate::score::ScoreConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("invalid config {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{what} not found: {}", path.display())]
    MissingPath { what: &'static str, path: PathBuf },
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds sampling, bootstrap intervals and annotation draws.
    #[serde(default)]
    pub seed: u64,
    /// Conversations labeled concurrently.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub paths: PathsConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    #[serde(default)]
    pub metrics: MetricsSettings,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub onet_dir: PathBuf,
    pub crosswalk: PathBuf,
    pub oews: PathBuf,
    pub corpus: PathBuf,
    /// Conversations carrying thumbs feedback. Without it, feedback
    /// statistics come from the main corpus.
    #[serde(default)]
    pub thumbs_corpus: Option<PathBuf>,
    /// Intermediate stage outputs.
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    /// Classification outputs and checkpoints. Defaults to `<work_dir>/labels`.
    #[serde(default)]
    pub labels_out: Option<PathBuf>,
    pub reports_out: PathBuf,
    #[serde(default)]
    pub e1_file: Option<PathBuf>,
    #[serde(default)]
    pub annotations: Option<PathBuf>,
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("work")
}

impl PathsConfig {
    pub fn labels_dir(&self) -> PathBuf {
        self.labels_out.clone().unwrap_or_else(|| self.work_dir.join("labels"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    /// Conversations drawn from the corpus; all when unset.
    #[serde(default)]
    pub conversations: Option<usize>,
    #[serde(default)]
    pub feedback_conversations: Option<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub kind: BackendKind,
    /// Keyword rules for the mock backend.
    #[serde(default)]
    pub rules: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API.
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub credentials_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(flatten)]
    pub label: LabelOptions,
}

fn default_timeout() -> u64 {
    120
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            rules: None,
            endpoint: None,
            credentials_env: None,
            timeout_secs: default_timeout(),
            label: LabelOptions::default(),
        }
    }
}

impl BackendConfig {
    /// Reads the API key from the configured environment variable.
    pub fn credential(&self) -> Result<String, ConfigError> {
        let var = self
            .credentials_env
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("backend.credentials_env is required for the remote backend".into()))?;
        std::env::var(var).map_err(|_| ConfigError::MissingCredential(var.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSettings {
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_resamples() -> usize {
    1000
}

fn default_confidence() -> f64 {
    0.95
}

impl Default for MetricsSettings {
    fn default() -> Self {
        Self { bootstrap_resamples: default_resamples(), confidence: default_confidence() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    /// Conversations drawn for annotation when no annotations file is given.
    #[serde(default = "default_validation_sample")]
    pub sample_conversations: usize,
}

fn default_validation_sample() -> usize {
    50
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self { sample_conversations: default_validation_sample() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    /// File stem for report tables. Defaults to a prefix of the config hash.
    #[serde(default)]
    pub tag: Option<String>,
    /// Reports to render as `kind` or `kind:key=value,...`; all kinds when empty.
    #[serde(default)]
    pub kinds: Vec<String>,
}

impl ReportConfig {
    pub fn specs(&self) -> Result<Vec<ReportSpec>, ConfigError> {
        if self.kinds.is_empty() {
            return Ok(ReportKind::ALL.into_iter().map(ReportSpec::with_defaults).collect());
        }
        self.kinds
            .iter()
            .map(|k| ReportSpec::parse(k).map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect()
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })
    }

    /// Reads, resolves and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        for path in [&mut p.onet_dir, &mut p.crosswalk, &mut p.oews, &mut p.corpus, &mut p.work_dir, &mut p.reports_out] {
            fix(path);
        }
        for path in [&mut p.thumbs_corpus, &mut p.labels_out, &mut p.e1_file, &mut p.annotations, &mut self.backend.rules]
            .into_iter()
            .flatten()
        {
            fix(path);
        }
    }

    /// Checks settings that need no file access.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1".into());
        }
        let label = &self.backend.label;
        if label.block_size == 0 {
            return bad("backend.block_size must be at least 1".into());
        }
        if label.char_budget == 0 {
            return bad("backend.char_budget must be positive".into());
        }
        for (name, s) in [("generate", &label.generate), ("classify", &label.classify), ("completion", &label.completion)] {
            if !(0.0..=2.0).contains(&s.temperature) {
                return bad(format!("backend.{name}.temperature must lie in [0, 2], got {}", s.temperature));
            }
        }
        if self.backend.kind == BackendKind::Remote {
            match &self.backend.endpoint {
                Some(e) if e.starts_with("http://") || e.starts_with("https://") => {}
                _ => return bad("backend.endpoint must be an http(s) URL for the remote backend".into()),
            }
            if self.backend.credentials_env.as_deref().is_none_or(str::is_empty) {
                return bad("backend.credentials_env is required for the remote backend".into());
            }
        }
        self.score.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.metrics.bootstrap_resamples == 0 {
            return bad("metrics.bootstrap_resamples must be at least 1".into());
        }
        if !(self.metrics.confidence > 0.0 && self.metrics.confidence < 1.0) {
            return bad(format!("metrics.confidence must lie in (0, 1), got {}", self.metrics.confidence));
        }
        if matches!(self.sampling.conversations, Some(0)) || matches!(self.sampling.feedback_conversations, Some(0)) {
            return bad("sampling sizes must be positive when set".into());
        }
        if self.validation.sample_conversations == 0 {
            return bad("validation.sample_conversations must be at least 1".into());
        }
        if let Some(tag) = &self.report.tag {
            let ok = !tag.is_empty()
                && !tag.starts_with('.')
                && tag.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
            if !ok {
                return bad(format!("report.tag `{tag}` may only hold letters, digits, `-`, `_` and `.`"));
            }
        }
        self.report.specs()?;
        Ok(())
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            bootstrap_resamples: self.metrics.bootstrap_resamples,
            confidence: self.metrics.confidence,
            ..self.score.metrics_config(self.seed)
        }
    }
}

pub fn require_file(what: &'static str, path: &Path) -> Result<(), ConfigError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath { what, path: path.to_path_buf() })
    }
}

pub fn require_dir(what: &'static str, path: &Path) -> Result<(), ConfigError> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(ConfigError::MissingPath { what, path: path.to_path_buf() })
    }
}

/// Incremental SHA-256 over labeled parts. Labels keep adjacent parts from
/// running together.
#[derive(Default)]
pub struct StageHasher(Sha256);

impl StageHasher {
    pub fn new(stage: &str) -> Self {
        let mut h = Self::default();
        h.part("stage", stage.as_bytes());
        h
    }

    pub fn part(&mut self, label: &str, bytes: &[u8]) -> &mut Self {
        for piece in [label.as_bytes(), bytes] {
            self.0.update((piece.len() as u64).to_le_bytes());
            self.0.update(piece);
        }
        self
    }

    pub fn json<T: Serialize>(&mut self, label: &str, value: &T) -> &mut Self {
        let bytes = serde_json::to_vec(value).expect("value serializes");
        self.part(label, &bytes)
    }

    pub fn file(&mut self, label: &str, path: &Path) -> io::Result<&mut Self> {
        let digest = file_digest(path)?;
        Ok(self.part(label, digest.as_bytes()))
    }

    pub fn optional_file(&mut self, label: &str, path: Option<&Path>) -> io::Result<&mut Self> {
        match path {
            Some(p) => self.file(label, p),
            None => Ok(self.part(label, b"-")),
        }
    }

    pub fn finish(&mut self) -> String {
        hex::encode(std::mem::take(&mut self.0).finalize())
    }
}

pub fn file_digest(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Digest of every regular file directly inside `dir`, by file name.
pub fn dir_digest(dir: &Path) -> io::Result<String> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut h = StageHasher::new("dir");
    for p in names {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.file(&name, &p)?;
    }
    Ok(h.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [paths]
        onet_dir = "onet"
        crosswalk = "cw.csv"
        oews = "oews.csv"
        corpus = "corpus.jsonl"
        reports_out = "reports"
    "#;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg = RunConfig::from_toml(text, Path::new("run.toml"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn defaults_fill_in() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.score.coverage_threshold, 0.0005);
        assert_eq!(cfg.backend.label.block_size, 20);
        assert_eq!(cfg.backend.kind, BackendKind::Mock);
        assert_eq!(cfg.paths.labels_dir(), PathBuf::from("work/labels"));
        assert_eq!(cfg.report.specs().unwrap().len(), 17);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = parse(MINIMAL).unwrap();
        let again = RunConfig::from_toml(&cfg.to_toml(), Path::new("x")).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_settings() {
        let with = |extra: &str| parse(&format!("{extra}\n{MINIMAL}"));
        assert!(matches!(with("parallelism = 0"), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse(&format!("{MINIMAL}\n[score]\ncoverage_threshold = 0.0")), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse(&format!("{MINIMAL}\n[backend]\nkind = \"remote\"")), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse(&format!("{MINIMAL}\n[backend]\nblock_size = 0")), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse(&format!("{MINIMAL}\n[report]\nkinds = [\"pie_chart\"]")), Err(ConfigError::Invalid(_))));
        assert!(matches!(parse(&format!("{MINIMAL}\n[report]\ntag = \"../up\"")), Err(ConfigError::Invalid(_))));
        assert!(matches!(with("colour = 1"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn remote_needs_endpoint_and_credentials() {
        let text = format!(
            "{MINIMAL}\n[backend]\nkind = \"remote\"\nendpoint = \"https://api.example.com/v1\"\ncredentials_env = \"WS_TEST_KEY_UNSET\""
        );
        let cfg = parse(&text).unwrap();
        assert!(matches!(cfg.backend.credential(), Err(ConfigError::MissingCredential(_))));
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let mut cfg = parse(MINIMAL).unwrap();
        cfg.resolve(Path::new("/data/run"));
        assert_eq!(cfg.paths.corpus, PathBuf::from("/data/run/corpus.jsonl"));
        assert_eq!(cfg.paths.labels_dir(), PathBuf::from("/data/run/work/labels"));
    }

    #[test]
    fn hashes_depend_on_contents_not_location() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [a.path(), b.path()] {
            fs::write(d.join("x.txt"), "same").unwrap();
        }
        assert_eq!(dir_digest(a.path()).unwrap(), dir_digest(b.path()).unwrap());
        fs::write(b.path().join("x.txt"), "changed").unwrap();
        assert_ne!(dir_digest(a.path()).unwrap(), dir_digest(b.path()).unwrap());
        let h1 = StageHasher::new("s").part("a", b"bc").finish();
        let h2 = StageHasher::new("s").part("ab", b"c").finish();
        assert_ne!(h1, h2);
    }
}
