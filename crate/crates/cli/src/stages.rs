//! Pipeline stages and the bookkeeping that keeps their outputs consistent.
//!
//! Each stage writes its outputs and then a `<work_dir>/<stage>.meta.json`
//! sidecar holding the stage hash, the upstream hashes it consumed and a
//! digest of every output. A stage hash covers the settings and input file
//! contents the stage depends on, chained through its upstream hashes. A
//! stage refuses to start when an upstream sidecar is missing, was written
//! under a different hash, or no longer matches its outputs on disk.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use workscope::classify::mock::MockBackend;
use workscope::classify::pipeline::{read_labels, run_resumable, RunFiles};
use workscope::classify::{rank_candidates, ClassifierBackend, ConversationLabels, IwaCatalog, Side};
use workscope::config::{file_digest, require_dir, require_file, BackendKind, ConfigError, RunConfig, StageHasher};
use workscope::corpus::{load_corpus, sample_records, ConversationRecord, CorpusKind};
use workscope::metrics::{speedup_rates, summarize, write_records_csv, AggregateSummary, SpeedupRate, StatsTable};
use workscope::report::{self, ManifestMeta, ReportInputs, ReportKind, ReportSpec, MANIFEST_FILE};
use workscope::score::analysis::{read_exposures, threshold_robustness, uniform_scores};
use workscope::score::{factors, ScoreTable};
use workscope::taxonomy::{load_onet, merge_soc, TaxonomyStore};
use workscope::validate::{self, Ranking};
use workscope::workforce::{workforce_shares, WeightTable};

use crate::error::{CliError, Result};
use crate::remote::RemoteBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Classify,
    Aggregate,
    Score,
    Validate,
    Report,
    Sweep,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Aggregate => "aggregate",
            Stage::Score => "score",
            Stage::Validate => "validate",
            Stage::Report => "report",
            Stage::Sweep => "sweep",
        }
    }

    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Classify => &[Stage::Ingest],
            Stage::Aggregate => &[Stage::Classify],
            Stage::Score => &[Stage::Ingest, Stage::Aggregate],
            Stage::Validate => &[Stage::Ingest, Stage::Classify],
            Stage::Report => &[Stage::Ingest, Stage::Aggregate, Stage::Score],
            Stage::Sweep => &[Stage::Score],
        }
    }
}

/// Sidecar written after a stage completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub stage: String,
    pub config_hash: String,
    pub upstream: BTreeMap<String, String>,
    /// Output file, relative to the stage directory, to its SHA-256.
    pub outputs: BTreeMap<String, String>,
}

const STORE_FILE: &str = "taxonomy.jsonl";
const CORPUS_STATS_FILE: &str = "corpus_stats.json";
const UNIFORM: &str = "uniform";
const THUMBS: &str = "thumbs";
const STATS_FILE: &str = "stats.csv";
const FEEDBACK_STATS_FILE: &str = "feedback_stats.csv";
const SUMMARY_FILE: &str = "summary.json";
const SPEEDUP_FILE: &str = "speedup.csv";
const WEIGHTS_FILE: &str = "weights.csv";
const SCORES_FILE: &str = "scores.csv";
const UNIFORM_SCORES_FILE: &str = "uniform_scores.csv";
const KAPPAS_FILE: &str = "kappas.csv";
const PER_CONVERSATION_FILE: &str = "per_conversation_kappa.csv";
const ANNOTATION_SETS_FILE: &str = "annotation_sets.csv";
const ROBUSTNESS_DIR: &str = "robustness";
const TAG_LEN: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CorpusStatsFile {
    uniform: workscope::corpus::CorpusStats,
    thumbs: Option<workscope::corpus::CorpusStats>,
}

/// A loaded config plus memoized stage hashes.
pub struct Run {
    pub cfg: RunConfig,
    hashes: RefCell<BTreeMap<Stage, String>>,
    identity: RefCell<Option<String>>,
}

impl Run {
    pub fn new(cfg: RunConfig) -> Self {
        Self { cfg, hashes: RefCell::default(), identity: RefCell::default() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::new(RunConfig::load(path)?))
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        match stage {
            Stage::Classify => self.cfg.paths.labels_dir(),
            Stage::Report | Stage::Sweep => self.cfg.paths.reports_out.clone(),
            s => self.cfg.paths.work_dir.join(s.name()),
        }
    }

    fn meta_path(&self, stage: Stage) -> PathBuf {
        self.cfg.paths.work_dir.join(format!("{}.meta.json", stage.name()))
    }

    pub fn read_meta(&self, stage: Stage) -> Result<Option<StageMeta>> {
        let path = self.meta_path(stage);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(path)?)?))
    }

    /// Backend identity without contacting the backend.
    pub fn backend_identity(&self) -> Result<String> {
        if let Some(id) = self.identity.borrow().as_ref() {
            return Ok(id.clone());
        }
        let id = match self.cfg.backend.kind {
            BackendKind::Mock => self.mock()?.identity(),
            BackendKind::Remote => RemoteBackend::identity_for(self.cfg.backend.endpoint.as_deref().unwrap_or_default()),
        };
        *self.identity.borrow_mut() = Some(id.clone());
        Ok(id)
    }

    fn mock(&self) -> Result<MockBackend> {
        let rules = self
            .cfg
            .backend
            .rules
            .as_deref()
            .ok_or_else(|| ConfigError::Invalid("backend.rules is required for the mock backend".into()))?;
        require_file("mock backend rules", rules)?;
        MockBackend::from_json_file(rules)
            .map_err(|e| ConfigError::Invalid(format!("mock rules {}: {e}", rules.display())).into())
    }

    pub fn backend(&self) -> Result<Box<dyn ClassifierBackend>> {
        Ok(match self.cfg.backend.kind {
            BackendKind::Mock => Box::new(self.mock()?),
            BackendKind::Remote => Box::new(RemoteBackend::from_config(&self.cfg.backend, self.cfg.backend.credential()?)),
        })
    }

    /// Digest of the conversation inputs, recorded in report manifests.
    pub fn corpus_hash(&self) -> Result<String> {
        let p = &self.cfg.paths;
        let mut h = StageHasher::new("corpus");
        h.file("corpus", &p.corpus)?;
        h.optional_file("thumbs_corpus", p.thumbs_corpus.as_deref())?;
        Ok(h.finish())
    }

    /// Hash the stage's outputs must have been produced under, given the
    /// current config and inputs.
    pub fn expected_hash(&self, stage: Stage) -> Result<String> {
        if let Some(h) = self.hashes.borrow().get(&stage) {
            return Ok(h.clone());
        }
        let cfg = &self.cfg;
        let mut h = StageHasher::new(stage.name());
        for up in stage.upstream() {
            h.part(up.name(), self.expected_hash(*up)?.as_bytes());
        }
        match stage {
            Stage::Ingest => {
                h.part("onet", workscope::config::dir_digest(&cfg.paths.onet_dir)?.as_bytes());
                h.file("crosswalk", &cfg.paths.crosswalk)?;
                h.file("oews", &cfg.paths.oews)?;
                h.part("corpus", self.corpus_hash()?.as_bytes());
            }
            Stage::Classify => {
                h.json("seed", &cfg.seed);
                h.json("sampling", &cfg.sampling);
                h.part("backend", self.backend_identity()?.as_bytes());
                h.json("label", &cfg.backend.label);
            }
            Stage::Aggregate => {
                h.json("metrics", &cfg.metrics_config());
            }
            Stage::Score => {
                h.json("score", &cfg.score);
            }
            Stage::Validate => {
                h.json("seed", &cfg.seed);
                h.json("validation", &cfg.validation);
                h.optional_file("annotations", cfg.paths.annotations.as_deref())?;
            }
            Stage::Report => {
                h.json("report", &cfg.report);
                h.optional_file("e1", cfg.paths.e1_file.as_deref())?;
            }
            Stage::Sweep => {}
        }
        let out = h.finish();
        self.hashes.borrow_mut().insert(stage, out.clone());
        Ok(out)
    }

    /// Checks that every upstream stage has current outputs.
    pub fn require_upstream(&self, stage: Stage) -> Result<()> {
        for &up in stage.upstream() {
            let Some(meta) = self.read_meta(up)? else {
                return Err(CliError::Prerequisite { stage: stage.name(), needs: up.name() });
            };
            if meta.config_hash != self.expected_hash(up)? {
                return Err(CliError::Drift { stage: stage.name(), needs: up.name() });
            }
            let dir = self.stage_dir(up);
            for (rel, digest) in &meta.outputs {
                let path = dir.join(rel);
                let actual = file_digest(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
                if &actual != digest {
                    return Err(CliError::Data(format!(
                        "{} changed after `{}` wrote it; rerun `workscope {}`",
                        path.display(),
                        up.name(),
                        up.name()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Removes the sidecar so an interrupted rerun never looks complete.
    fn begin(&self, stage: Stage) -> Result<PathBuf> {
        let meta = self.meta_path(stage);
        if meta.exists() {
            fs::remove_file(&meta)?;
        }
        let dir = self.stage_dir(stage);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn finish(&self, stage: Stage, config_hash: String, outputs: &[String]) -> Result<()> {
        let dir = self.stage_dir(stage);
        let mut upstream = BTreeMap::new();
        for &up in stage.upstream() {
            upstream.insert(up.name().to_string(), self.expected_hash(up)?);
        }
        let mut files = BTreeMap::new();
        for rel in outputs {
            files.insert(rel.clone(), file_digest(&dir.join(rel))?);
        }
        let meta = StageMeta { stage: stage.name().into(), config_hash, upstream, outputs: files };
        fs::create_dir_all(&self.cfg.paths.work_dir)?;
        let path = self.meta_path(stage);
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&meta)? + "\n")?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    fn check_inputs(&self) -> Result<()> {
        let p = &self.cfg.paths;
        require_dir("O*NET directory", &p.onet_dir)?;
        require_file("SOC crosswalk", &p.crosswalk)?;
        require_file("OEWS table", &p.oews)?;
        require_file("corpus", &p.corpus)?;
        if let Some(t) = &p.thumbs_corpus {
            require_file("thumbs corpus", t)?;
        }
        if let Some(e) = &p.e1_file {
            require_file("E1 table", e)?;
        }
        if let Some(a) = &p.annotations {
            require_file("annotations", a)?;
        }
        if self.cfg.backend.kind == BackendKind::Mock {
            self.mock()?;
        }
        Ok(())
    }

    fn store(&self) -> Result<TaxonomyStore> {
        let path = self.stage_dir(Stage::Ingest).join(STORE_FILE);
        Ok(TaxonomyStore::read_dump(BufReader::new(File::open(path)?))?)
    }

    fn labels(&self, dataset: &str) -> Result<Vec<ConversationLabels>> {
        Ok(read_labels(&RunFiles::in_dir(&self.stage_dir(Stage::Classify).join(dataset)).labels)?)
    }

    fn aggregate_path(&self, file: &str) -> PathBuf {
        self.stage_dir(Stage::Aggregate).join(file)
    }

    fn score_path(&self, file: &str) -> PathBuf {
        self.stage_dir(Stage::Score).join(file)
    }

    pub fn report_tag(&self) -> Result<String> {
        match &self.cfg.report.tag {
            Some(t) => Ok(t.clone()),
            None => Ok(self.expected_hash(Stage::Report)?[..TAG_LEN].to_string()),
        }
    }

    /// Reads the taxonomy and labor inputs and validates both corpora.
    pub fn ingest(&self) -> Result<String> {
        self.check_inputs()?;
        let hash = self.expected_hash(Stage::Ingest)?;
        let dir = self.begin(Stage::Ingest)?;
        let p = &self.cfg.paths;
        let onet = load_onet(&p.onet_dir)?;
        let store = merge_soc(&onet, &p.crosswalk, &p.oews)?;
        let mut out = File::create(dir.join(STORE_FILE))?;
        store.write_dump(&mut out)?;
        drop(out);
        let uniform = load_corpus(&p.corpus, CorpusKind::Uniform)?;
        let thumbs = p.thumbs_corpus.as_deref().map(|t| load_corpus(t, CorpusKind::Thumbs)).transpose()?;
        let stats = CorpusStatsFile { uniform: uniform.stats.clone(), thumbs: thumbs.as_ref().map(|t| t.stats.clone()) };
        fs::write(dir.join(CORPUS_STATS_FILE), serde_json::to_string_pretty(&stats)? + "\n")?;
        self.finish(Stage::Ingest, hash, &[STORE_FILE.into(), CORPUS_STATS_FILE.into()])?;
        Ok(format!(
            "ingest: {} IWAs, {} tasks, {} occupations, {} conversations{}, {} diagnostics",
            store.iwa_count(),
            store.task_count(),
            store.occupations().count(),
            uniform.count,
            thumbs.map(|t| format!(" + {} with feedback", t.count)).unwrap_or_default(),
            store.diagnostics().len(),
        ))
    }

    fn sampled(&self, path: &Path, kind: CorpusKind, n: Option<usize>, seed: u64) -> Result<Vec<ConversationRecord>> {
        let records = load_corpus(path, kind)?.records()?;
        Ok(match n {
            Some(n) => sample_records(&records, n, seed)?,
            None => records,
        })
    }

    /// Labels the sampled corpora, resuming from checkpoints.
    pub fn classify(&self, fresh: bool) -> Result<String> {
        self.check_inputs()?;
        self.require_upstream(Stage::Classify)?;
        let hash = self.expected_hash(Stage::Classify)?;
        let backend = self.backend()?;
        let dir = self.begin(Stage::Classify)?;
        let store = self.store()?;
        let options = &self.cfg.backend.label;
        let catalog = IwaCatalog::from_store(&store, backend.as_ref(), options.embedding_model.clone())?;
        let p = &self.cfg.paths;
        let mut datasets = vec![(UNIFORM, self.sampled(&p.corpus, CorpusKind::Uniform, self.cfg.sampling.conversations, self.cfg.seed)?)];
        if let Some(t) = &p.thumbs_corpus {
            let seed = self.cfg.seed.wrapping_add(1);
            datasets.push((THUMBS, self.sampled(t, CorpusKind::Thumbs, self.cfg.sampling.feedback_conversations, seed)?));
        }
        let mut outputs = Vec::new();
        let mut lines = Vec::new();
        for (name, records) in &datasets {
            let sub = dir.join(name);
            if fresh && sub.exists() {
                fs::remove_dir_all(&sub)?;
            }
            fs::create_dir_all(&sub)?;
            let files = RunFiles::in_dir(&sub);
            let summary =
                run_resumable(records, &catalog, backend.as_ref(), options, self.cfg.parallelism, &files, &hash)?;
            lines.push(format!(
                "{name}: {} labeled this run, {} failed{}",
                summary.labeled,
                summary.failed,
                if summary.resumed_from > 0 { format!(" (resumed after {})", summary.resumed_from) } else { String::new() }
            ));
            for f in [&files.labels, &files.failures] {
                outputs.push(format!("{name}/{}", f.file_name().unwrap().to_string_lossy()));
            }
        }
        self.finish(Stage::Classify, hash, &outputs)?;
        Ok(format!("classify: {}", lines.join("; ")))
    }

    fn feedback_labels(&self) -> Result<Vec<ConversationLabels>> {
        if self.cfg.paths.thumbs_corpus.is_some() {
            self.labels(THUMBS)
        } else {
            self.labels(UNIFORM)
        }
    }

    /// Per-IWA statistics and run totals.
    pub fn aggregate(&self) -> Result<String> {
        self.require_upstream(Stage::Aggregate)?;
        let hash = self.expected_hash(Stage::Aggregate)?;
        let dir = self.begin(Stage::Aggregate)?;
        let labels = self.labels(UNIFORM)?;
        if labels.is_empty() {
            return Err(CliError::Data("no conversation was labeled".into()));
        }
        let fb_labels = self.feedback_labels()?;
        let mcfg = self.cfg.metrics_config();
        let stats = StatsTable::compute(&labels, &mcfg);
        let fb_stats = StatsTable::compute(&fb_labels, &mcfg);
        let summary = summarize(&labels, &fb_labels, &fb_stats);
        let speedup = speedup_rates(&labels, Side::User);
        stats.write_csv(&dir.join(STATS_FILE))?;
        fb_stats.write_csv(&dir.join(FEEDBACK_STATS_FILE))?;
        fs::write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary)? + "\n")?;
        write_records_csv(&dir.join(SPEEDUP_FILE), &speedup)?;
        let outputs = [STATS_FILE, FEEDBACK_STATS_FILE, SUMMARY_FILE, SPEEDUP_FILE].map(String::from);
        self.finish(Stage::Aggregate, hash, &outputs)?;
        Ok(format!(
            "aggregate: {} conversations, {} user / {} AI matched, {} IWAs with user matches",
            summary.conversations,
            summary.matched_user,
            summary.matched_ai,
            stats.side(Side::User).filter(|r| r.match_count > 0).count(),
        ))
    }

    fn weights_and_scores(&self, store: &TaxonomyStore, stats: &StatsTable) -> Result<(WeightTable, ScoreTable, ScoreTable)> {
        let (weights, failures) = WeightTable::from_store(store, self.cfg.score.weighting)?;
        if !failures.is_empty() {
            log::warn!("{} occupations have no usable task weights and are not scored", failures.len());
        }
        let (user, ai) = (factors(stats, Side::User), factors(stats, Side::Ai));
        let scores = ScoreTable::compute(store, &weights, &user, &ai, &self.cfg.score)?;
        let uniform = uniform_scores(store, &user, &ai, &self.cfg.score)?;
        Ok((weights, scores, uniform))
    }

    /// Occupation weights and applicability scores.
    pub fn score(&self) -> Result<String> {
        self.require_upstream(Stage::Score)?;
        let hash = self.expected_hash(Stage::Score)?;
        let dir = self.begin(Stage::Score)?;
        let store = self.store()?;
        let stats = StatsTable::read_csv(&self.aggregate_path(STATS_FILE))?;
        let (weights, scores, uniform) = self.weights_and_scores(&store, &stats)?;
        weights.write_csv(File::create(dir.join(WEIGHTS_FILE))?)?;
        scores.write_csv(&dir.join(SCORES_FILE))?;
        uniform.write_csv(&dir.join(UNIFORM_SCORES_FILE))?;
        self.finish(Stage::Score, hash, &[WEIGHTS_FILE, SCORES_FILE, UNIFORM_SCORES_FILE].map(String::from))?;
        let best = scores.rows.iter().max_by(|a, b| a.a.total_cmp(&b.a).then(b.soc_code.cmp(&a.soc_code)));
        Ok(format!(
            "score: {} occupations scored{}",
            scores.rows.len(),
            best.map(|b| format!(", highest {} {} (a = {:.4})", b.soc_code, b.title, b.a)).unwrap_or_default()
        ))
    }

    /// Agreement between raters and the pipeline, or annotation sets to
    /// rate when no annotations are configured.
    pub fn validate(&self) -> Result<String> {
        self.check_inputs()?;
        self.require_upstream(Stage::Validate)?;
        let hash = self.expected_hash(Stage::Validate)?;
        let dir = self.begin(Stage::Validate)?;
        let labels = self.labels(UNIFORM)?;
        let (outputs, line) = match &self.cfg.paths.annotations {
            Some(path) => {
                let sets = validate::read_annotations(path)?;
                let mut kappas = validate::pairwise_kappas(&sets);
                kappas.extend(validate::pipeline_agreement(&sets, &labels));
                write_records_csv(&dir.join(KAPPAS_FILE), &kappas)?;
                let with_pipeline = validate::with_pipeline(&sets, &labels);
                let names: Vec<String> = validate::raters(&with_pipeline).into_iter().collect();
                let mut per_conv = Vec::new();
                for (i, a) in names.iter().enumerate() {
                    for b in &names[i + 1..] {
                        per_conv.extend(validate::per_conversation_kappa(&with_pipeline, a, b));
                    }
                }
                write_records_csv(&dir.join(PER_CONVERSATION_FILE), &per_conv)?;
                let mut line = format!("validate: {} annotation sets", sets.len());
                for k in &kappas {
                    let _ = write!(
                        line,
                        "; {} {}~{} kappa {}",
                        k.side.as_str(),
                        k.rater_a,
                        k.rater_b,
                        k.kappa.map_or("n/a".into(), |x| format!("{x:.3}"))
                    );
                }
                (vec![KAPPAS_FILE.to_string(), PER_CONVERSATION_FILE.to_string()], line)
            }
            None => {
                let sets = self.annotation_sets(&labels)?;
                validate::write_annotations(&dir.join(ANNOTATION_SETS_FILE), &validate::with_pipeline(&sets, &labels))?;
                let line = format!(
                    "validate: no annotations configured; wrote {} candidate sets to {} for raters",
                    sets.len(),
                    dir.join(ANNOTATION_SETS_FILE).display()
                );
                (vec![ANNOTATION_SETS_FILE.to_string()], line)
            }
        };
        self.finish(Stage::Validate, hash, &outputs)?;
        Ok(line)
    }

    fn annotation_sets(&self, labels: &[ConversationLabels]) -> Result<Vec<validate::AnnotationSet>> {
        let backend = self.backend()?;
        let store = self.store()?;
        let options = &self.cfg.backend.label;
        let catalog = IwaCatalog::from_store(&store, backend.as_ref(), options.embedding_model.clone())?;
        let by_id: BTreeMap<&str, &ConversationLabels> = labels.iter().map(|l| (l.conversation_id.as_str(), l)).collect();
        let records: Vec<ConversationRecord> = load_corpus(&self.cfg.paths.corpus, CorpusKind::Uniform)?
            .records()?
            .into_iter()
            .filter(|r| by_id.contains_key(r.conversation_id.as_str()))
            .collect();
        let n = self.cfg.validation.sample_conversations.min(records.len());
        let mut rankings = Vec::new();
        for rec in sample_records(&records, n, self.cfg.seed)? {
            let l = by_id[rec.conversation_id.as_str()];
            for side in Side::BOTH {
                let ranked = rank_candidates(&l.stage_one, side, &catalog, backend.as_ref(), options)?;
                rankings.push(Ranking { conversation_id: l.conversation_id.clone(), side, ranked });
            }
        }
        Ok(validate::build_annotation_sets(&rankings, self.cfg.seed)?)
    }

    fn report_inputs(&self) -> Result<ReportInputs> {
        let store = self.store()?;
        let workforce = workforce_shares(&store)?;
        let weights = WeightTable::read_csv(File::open(self.score_path(WEIGHTS_FILE))?)?;
        let summary: AggregateSummary = serde_json::from_str(&fs::read_to_string(self.aggregate_path(SUMMARY_FILE))?)?;
        let speedup: Vec<SpeedupRate> = csv::Reader::from_path(self.aggregate_path(SPEEDUP_FILE))?
            .deserialize()
            .collect::<Result<_, _>>()?;
        let exposures = self.cfg.paths.e1_file.as_deref().map(read_exposures).transpose()?;
        Ok(ReportInputs {
            store: Some(store),
            weights: Some(weights),
            workforce: Some(workforce),
            stats: Some(StatsTable::read_csv(&self.aggregate_path(STATS_FILE))?),
            feedback_stats: Some(StatsTable::read_csv(&self.aggregate_path(FEEDBACK_STATS_FILE))?),
            summary: Some(summary),
            speedup: Some(speedup),
            scores: Some(ScoreTable::read_csv(&self.score_path(SCORES_FILE))?),
            uniform_scores: Some(ScoreTable::read_csv(&self.score_path(UNIFORM_SCORES_FILE))?),
            exposures,
            score_config: self.cfg.score.clone(),
        })
    }

    fn report_specs(&self) -> Result<Vec<ReportSpec>> {
        let mut specs = self.cfg.report.specs()?;
        if self.cfg.report.kinds.is_empty() && self.cfg.paths.e1_file.is_none() {
            log::warn!("no e1_file configured; skipping {}", ReportKind::E1Scatter);
            specs.retain(|s| s.kind != ReportKind::E1Scatter);
        }
        Ok(specs)
    }

    /// Renders the configured report kinds.
    pub fn report(&self) -> Result<String> {
        self.check_inputs()?;
        self.require_upstream(Stage::Report)?;
        let specs = self.report_specs()?;
        let hash = self.expected_hash(Stage::Report)?;
        let tag = self.report_tag()?;
        let inputs = self.report_inputs()?;
        let dir = self.begin(Stage::Report)?;
        let meta = ManifestMeta { config_hash: hash.clone(), corpus_hash: self.corpus_hash()?, backend: self.backend_identity()? };
        let manifest = report::write_reports(&dir, &tag, &specs, &inputs, meta)?;
        let mut outputs: Vec<String> = manifest.files.iter().map(|f| f.path.clone()).collect();
        outputs.push(MANIFEST_FILE.into());
        self.finish(Stage::Report, hash, &outputs)?;
        Ok(format!("report: {} files for {} kinds under {} (tag {tag})", manifest.files.len(), specs.len(), dir.display()))
    }

    /// Score robustness across coverage thresholds.
    pub fn sweep(&self, thresholds: &[f64]) -> Result<String> {
        if thresholds.is_empty() || thresholds.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(ConfigError::Invalid("sweep thresholds must lie in (0, 1)".into()).into());
        }
        self.require_upstream(Stage::Sweep)?;
        let mut h = StageHasher::new(Stage::Sweep.name());
        h.part("score", self.expected_hash(Stage::Score)?.as_bytes()).json("thresholds", &thresholds);
        let hash = h.finish();
        let stats = StatsTable::read_csv(&self.aggregate_path(STATS_FILE))?;
        let weights = WeightTable::read_csv(File::open(self.score_path(WEIGHTS_FILE))?)?;
        let (user, ai) = (factors(&stats, Side::User), factors(&stats, Side::Ai));
        let rows = threshold_robustness(&weights, &user, &ai, &self.cfg.score, thresholds);
        let tag = self.cfg.report.tag.clone().unwrap_or_else(|| hash[..TAG_LEN].to_string());
        let dir = self.begin(Stage::Sweep)?.join(ROBUSTNESS_DIR);
        fs::create_dir_all(&dir)?;
        let rel = format!("{ROBUSTNESS_DIR}/{tag}.csv");
        write_records_csv(&self.stage_dir(Stage::Sweep).join(&rel), &rows)?;
        self.finish(Stage::Sweep, hash, &[rel.clone()])?;
        let mut out = format!("sweep: {} thresholds against {} -> {rel}\nthreshold,spearman,pearson", rows.len(), self.cfg.score.coverage_threshold);
        for r in &rows {
            let f = |x: Option<f64>| x.map_or("n/a".into(), |v| format!("{v:.6}"));
            let _ = write!(out, "\n{},{},{}", r.threshold, f(r.spearman), f(r.pearson));
        }
        Ok(out)
    }

    /// Every stage in order. Validation runs only with annotations.
    pub fn run_all(&self, fresh: bool) -> Result<Vec<String>> {
        let mut lines = vec![self.ingest()?, self.classify(fresh)?, self.aggregate()?, self.score()?];
        if self.cfg.paths.annotations.is_some() {
            lines.push(self.validate()?);
        }
        lines.push(self.report()?);
        Ok(lines)
    }

    /// Stage names whose sidecars match the current config.
    pub fn status(&self) -> Result<Vec<(Stage, &'static str)>> {
        let mut out = Vec::new();
        for stage in [Stage::Ingest, Stage::Classify, Stage::Aggregate, Stage::Score, Stage::Validate, Stage::Report] {
            let state = match self.read_meta(stage)? {
                None => "missing",
                Some(m) if m.config_hash == self.expected_hash(stage)? => "current",
                Some(_) => "stale",
            };
            out.push((stage, state));
        }
        Ok(out)
    }
}

/// Parses a comma-separated threshold list.
pub fn parse_thresholds(text: &str) -> std::result::Result<Vec<f64>, String> {
    let values: Vec<f64> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
    if values.is_empty() || distinct.len() != values.len() {
        return Err("expected distinct comma-separated thresholds".into());
    }
    Ok(values)
}

pub fn default_thresholds() -> Vec<f64> {
    parse_thresholds(report::DEFAULT_SWEEP_THRESHOLDS).expect("default thresholds parse")
}
