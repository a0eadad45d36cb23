//! Occupation-level AI applicability scores.
//!
//! For one side, an occupation's score sums its IWA weights over covered
//! IWAs (activity share at or above the threshold), each scaled by that
//! IWA's completion rate and scope rate. The overall score averages the
//! user and AI sides.

pub mod analysis;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ScopeLevel, Side};
use crate::ids::{IwaId, SocCode};
use crate::metrics::{CompletionPolicy, MetricsConfig, StatsTable};
use crate::taxonomy::{EducationLevel, TaxonomyStore};
use crate::workforce::{WeightTable, Weighting};

pub const DEFAULT_COVERAGE_THRESHOLD: f64 = 0.0005;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("invalid score config: {0}")]
    Config(String),
    #[error("nothing to score: {0}")]
    Empty(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub coverage_threshold: f64,
    pub scope_cutoff: ScopeLevel,
    pub completion_policy: CompletionPolicy,
    pub weighting: Weighting,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            coverage_threshold: DEFAULT_COVERAGE_THRESHOLD,
            scope_cutoff: ScopeLevel::Moderate,
            completion_policy: CompletionPolicy::Strict,
            weighting: Weighting::OnetWeighted,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        if !(self.coverage_threshold > 0.0 && self.coverage_threshold < 1.0) {
            return Err(ScoreError::Config(format!(
                "coverage_threshold must lie in (0, 1), got {}",
                self.coverage_threshold
            )));
        }
        if self.scope_cutoff == ScopeLevel::None {
            return Err(ScoreError::Config("scope_cutoff must be above none".into()));
        }
        Ok(())
    }

    pub fn metrics_config(&self, seed: u64) -> MetricsConfig {
        MetricsConfig {
            completion_policy: self.completion_policy,
            scope_cutoff: self.scope_cutoff,
            seed,
            ..MetricsConfig::default()
        }
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self { coverage_threshold: threshold, ..self.clone() }
    }
}

/// The three per-IWA quantities a score needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IwaFactors {
    pub activity_share: f64,
    pub completion_rate: f64,
    pub scope_rate: f64,
}

pub type FactorMap = BTreeMap<IwaId, IwaFactors>;

/// Factors for every IWA matched on `side`. IWAs never matched are absent,
/// which leaves them uncovered at any positive threshold.
pub fn factors(stats: &StatsTable, side: Side) -> FactorMap {
    stats
        .side(side)
        .map(|r| {
            (
                r.iwa_id.clone(),
                IwaFactors {
                    activity_share: r.activity_share,
                    completion_rate: r.completion_rate.unwrap_or(0.0),
                    scope_rate: r.scope_rate.unwrap_or(0.0),
                },
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideScore {
    pub coverage: f64,
    /// Completion rate averaged over covered IWAs with weights renormalized
    /// to the covered set. Absent when nothing is covered.
    pub completion: Option<f64>,
    pub scope: Option<f64>,
    pub score: f64,
}

pub fn is_covered(f: &IwaFactors, threshold: f64) -> bool {
    f.activity_share >= threshold
}

pub fn side_score(weights: &BTreeMap<IwaId, f64>, factors: &FactorMap, threshold: f64) -> SideScore {
    let (mut coverage, mut completion, mut scope, mut score) = (0.0, 0.0, 0.0, 0.0);
    for (iwa, w) in weights {
        let Some(f) = factors.get(iwa).filter(|f| is_covered(f, threshold)) else {
            continue;
        };
        coverage += w;
        completion += w * f.completion_rate;
        scope += w * f.scope_rate;
        score += w * f.completion_rate * f.scope_rate;
    }
    let over_covered = |x: f64| (coverage > 0.0).then(|| x / coverage);
    SideScore {
        coverage,
        completion: over_covered(completion),
        scope: over_covered(scope),
        score,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicabilityScore {
    pub soc_code: SocCode,
    pub title: String,
    pub coverage: f64,
    pub completion: Option<f64>,
    pub scope: Option<f64>,
    pub a_user: f64,
    pub a_ai: f64,
    pub a: f64,
    pub employment: Option<f64>,
    pub mean_wage: Option<f64>,
    pub education_mode: Option<EducationLevel>,
    pub coverage_user: f64,
    pub coverage_ai: f64,
    pub completion_user: Option<f64>,
    pub completion_ai: Option<f64>,
    pub scope_user: Option<f64>,
    pub scope_ai: Option<f64>,
}

fn mean_present(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some((x + y) / 2.0),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Scores one occupation from its normalized IWA weights.
pub fn applicability(
    soc_code: &SocCode,
    weights: &BTreeMap<IwaId, f64>,
    user: &FactorMap,
    ai: &FactorMap,
    config: &ScoreConfig,
) -> ApplicabilityScore {
    let u = side_score(weights, user, config.coverage_threshold);
    let i = side_score(weights, ai, config.coverage_threshold);
    ApplicabilityScore {
        soc_code: soc_code.clone(),
        title: String::new(),
        coverage: (u.coverage + i.coverage) / 2.0,
        completion: mean_present(u.completion, i.completion),
        scope: mean_present(u.scope, i.scope),
        a_user: u.score,
        a_ai: i.score,
        a: (u.score + i.score) / 2.0,
        employment: None,
        mean_wage: None,
        education_mode: None,
        coverage_user: u.coverage,
        coverage_ai: i.coverage,
        completion_user: u.completion,
        completion_ai: i.completion,
        scope_user: u.scope,
        scope_ai: i.scope,
    }
}

/// Each covered IWA's contribution to an occupation's overall score.
pub fn contributions(
    weights: &BTreeMap<IwaId, f64>,
    user: &FactorMap,
    ai: &FactorMap,
    config: &ScoreConfig,
) -> Vec<(IwaId, f64)> {
    let part = |map: &FactorMap, iwa: &IwaId, w: f64| {
        map.get(iwa)
            .filter(|f| is_covered(f, config.coverage_threshold))
            .map_or(0.0, |f| w * f.completion_rate * f.scope_rate)
    };
    weights
        .iter()
        .map(|(iwa, w)| (iwa.clone(), (part(user, iwa, *w) + part(ai, iwa, *w)) / 2.0))
        .filter(|(_, c)| *c > 0.0)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: Vec<ApplicabilityScore>,
}

impl ScoreTable {
    /// Scores every weighted occupation, in SOC order, attaching employment,
    /// wage and education from the store.
    pub fn compute(
        store: &TaxonomyStore,
        weights: &WeightTable,
        user: &FactorMap,
        ai: &FactorMap,
        config: &ScoreConfig,
    ) -> Result<Self, ScoreError> {
        config.validate()?;
        let mut rows = Vec::new();
        for occ in store.occupations() {
            let Some(w) = weights.get(&occ.soc_code) else {
                log::warn!("occupation {} has no IWA weights; not scored", occ.soc_code);
                continue;
            };
            let mut row = applicability(&occ.soc_code, w, user, ai, config);
            row.title = occ.title.clone();
            row.employment = occ.employment;
            row.mean_wage = occ.mean_wage;
            row.education_mode = occ.education_mode;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(ScoreError::Empty("no occupation has IWA weights".into()));
        }
        Ok(Self { rows })
    }

    /// Scores from weights alone, for occupations without store metadata.
    pub fn from_weights(weights: &WeightTable, user: &FactorMap, ai: &FactorMap, config: &ScoreConfig) -> Self {
        let rows = weights.iter().map(|(soc, w)| applicability(soc, w, user, ai, config)).collect();
        Self { rows }
    }

    pub fn get(&self, soc: &SocCode) -> Option<&ApplicabilityScore> {
        self.rows.iter().find(|r| &r.soc_code == soc)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), ScoreError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, ScoreError> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<Result<Vec<ApplicabilityScore>, _>>()?;
        Ok(Self { rows })
    }
}
