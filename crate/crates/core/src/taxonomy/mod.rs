//! The O*NET occupation → task → DWA → IWA → GWA hierarchy.
//!
//! [`load_onet`] reads an O*NET text distribution into a [`TaxonomyStore`]
//! keyed by O*NET-SOC code; [`merge_soc`] folds the O*NET-SOC variants into
//! SOC occupations and attaches OEWS employment and wages. The store is
//! immutable once built and can be shared read-only across workers.

mod merge;
mod onet;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::{DwaId, GwaId, IwaId, SocCode, TaskId};
use crate::table::TableError;

pub use merge::merge_soc;
pub use onet::{load_onet, OnetFiles};

#[derive(Debug, Error)]
pub enum TaxonomyError {
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("no O*NET files found in {}", .0.display())]
    EmptyDirectory(PathBuf),
    #[error("{kind} references unknown identifiers: {}", ids.join(", "))]
    DanglingReferences { kind: &'static str, ids: Vec<String> },
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: String },
    #[error("store is not SOC-merged")]
    NotMerged,
    #[error("malformed store dump at line {line}: {message}")]
    Dump { line: usize, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Task frequency categories of the O*NET `FT` scale, in scale order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyCategory {
    YearlyOrLess,
    MoreThanYearly,
    MoreThanMonthly,
    MoreThanWeekly,
    Daily,
    SeveralTimesDaily,
    HourlyOrMore,
}

impl FrequencyCategory {
    pub const ALL: [FrequencyCategory; 7] = [
        FrequencyCategory::YearlyOrLess,
        FrequencyCategory::MoreThanYearly,
        FrequencyCategory::MoreThanMonthly,
        FrequencyCategory::MoreThanWeekly,
        FrequencyCategory::Daily,
        FrequencyCategory::SeveralTimesDaily,
        FrequencyCategory::HourlyOrMore,
    ];

    /// Occurrences per year at 260 workdays of 8 hours.
    pub fn annual_count(self) -> f64 {
        match self {
            FrequencyCategory::YearlyOrLess => 1.0,
            FrequencyCategory::MoreThanYearly => 4.0,
            FrequencyCategory::MoreThanMonthly => 24.0,
            FrequencyCategory::MoreThanWeekly => 104.0,
            FrequencyCategory::Daily => 260.0,
            FrequencyCategory::SeveralTimesDaily => 780.0,
            FrequencyCategory::HourlyOrMore => 2080.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FrequencyCategory::YearlyOrLess => "Yearly or less",
            FrequencyCategory::MoreThanYearly => "More than yearly",
            FrequencyCategory::MoreThanMonthly => "More than monthly",
            FrequencyCategory::MoreThanWeekly => "More than weekly",
            FrequencyCategory::Daily => "Daily",
            FrequencyCategory::SeveralTimesDaily => "Several times daily",
            FrequencyCategory::HourlyOrMore => "Hourly or more",
        }
    }

    /// Matches a scale anchor label, ignoring case and surrounding whitespace.
    pub fn from_label(label: &str) -> Option<Self> {
        let wanted = label.trim().to_lowercase();
        Self::ALL
            .into_iter()
            .find(|c| c.label().to_lowercase() == wanted)
    }

    /// Maps the 1-based `FT` category number.
    pub fn from_scale_category(category: u32) -> Option<Self> {
        category
            .checked_sub(1)
            .and_then(|i| Self::ALL.get(i as usize).copied())
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Share of respondents per frequency category, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrequencyDistribution(pub [f64; 7]);

impl FrequencyDistribution {
    pub fn share(&self, category: FrequencyCategory) -> f64 {
        self.0[category.index()]
    }

    pub fn set(&mut self, category: FrequencyCategory, share: f64) {
        self.0[category.index()] = share;
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().all(|s| (0.0..=1.0).contains(s)) && self.total() <= 1.0 + 1e-6
    }
}

/// Survey ratings of one task within one occupation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRating {
    /// Mean importance on the 1–5 scale.
    pub importance: f64,
    /// Fraction of incumbents reporting the task as relevant.
    pub relevance: f64,
    pub frequency: Option<FrequencyDistribution>,
}

impl TaskRating {
    pub fn is_valid(&self) -> bool {
        (1.0..=5.0).contains(&self.importance)
            && (0.0..=1.0).contains(&self.relevance)
            && self.frequency.is_none_or(|f| f.is_valid())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task_id: TaskId,
    pub occupation_onet_soc: String,
    pub statement: String,
    pub dwa_ids: BTreeSet<DwaId>,
    pub rating: Option<TaskRating>,
}

/// Modal required education level from the O*NET `RL` scale (categories 1–12).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EducationLevel(pub u8);

impl EducationLevel {
    pub const BACHELORS: EducationLevel = EducationLevel(6);

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "Less than a High School Diploma",
            2 => "High School Diploma",
            3 => "Post-Secondary Certificate",
            4 => "Some College Courses",
            5 => "Associate's Degree",
            6 => "Bachelor's Degree",
            7 => "Post-Baccalaureate Certificate",
            8 => "Master's Degree",
            9 => "Post-Master's Certificate",
            10 => "First Professional Degree",
            11 => "Doctoral Degree",
            12 => "Post-Doctoral Training",
            _ => "Unknown",
        }
    }

    pub fn is_below_bachelors(self) -> bool {
        self.0 < Self::BACHELORS.0
    }
}

/// An O*NET-SOC occupation as read from the distribution, before SOC merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnetOccupation {
    pub onet_soc: String,
    pub title: String,
    pub tasks: BTreeMap<TaskId, TaskRecord>,
    /// Respondent share per `RL` category, when the education file is present.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "pairs")]
    pub education_shares: BTreeMap<u8, f64>,
}

/// Integer-keyed maps as `[key, value]` lists. The tagged dump record
/// buffers its content, and buffered JSON object keys stay strings.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<u8, f64>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<u8, f64>, D::Error> {
        Ok(Vec::<(u8, f64)>::deserialize(d)?.into_iter().collect())
    }
}

/// A SOC occupation holding the union of its O*NET-SOC variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationRecord {
    pub soc_code: SocCode,
    pub title: String,
    pub onet_soc_codes: Vec<String>,
    pub tasks: BTreeMap<TaskId, TaskRecord>,
    pub employment: Option<f64>,
    pub mean_wage: Option<f64>,
    pub education_mode: Option<EducationLevel>,
}

impl OccupationRecord {
    pub fn major_group(&self) -> &str {
        self.soc_code.major_group()
    }

    pub fn minor_group(&self) -> &str {
        self.soc_code.minor_group()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwaNode {
    pub gwa_id: GwaId,
    pub title: String,
    pub iwa_ids: BTreeSet<IwaId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwaNode {
    pub iwa_id: IwaId,
    pub title: String,
    pub gwa_id: GwaId,
    pub dwa_ids: BTreeSet<DwaId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwaNode {
    pub dwa_id: DwaId,
    pub title: String,
    pub iwa_id: IwaId,
}

/// Non-fatal ingestion findings, kept with the store for auditing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: String,
    pub detail: String,
}

impl Diagnostic {
    pub fn new(kind: &str, detail: impl Into<String>) -> Self {
        let detail = detail.into();
        log::warn!("{kind}: {detail}");
        Self {
            kind: kind.to_string(),
            detail,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaxonomyStore {
    pub(crate) gwas: BTreeMap<GwaId, GwaNode>,
    pub(crate) iwas: BTreeMap<IwaId, IwaNode>,
    pub(crate) dwas: BTreeMap<DwaId, DwaNode>,
    pub(crate) onet_occupations: BTreeMap<String, OnetOccupation>,
    pub(crate) occupations: BTreeMap<SocCode, OccupationRecord>,
    /// Titles of SOC major (`NN`) and minor (`NN-N`) groups, when known.
    pub(crate) group_titles: BTreeMap<String, String>,
    pub(crate) merged: bool,
    pub(crate) diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum DumpRecord {
    Header { merged: bool },
    Gwa(GwaNode),
    Iwa(IwaNode),
    Dwa(DwaNode),
    OnetOccupation(OnetOccupation),
    Occupation(OccupationRecord),
    GroupTitle { code: String, title: String },
    Diagnostic(Diagnostic),
}

impl TaxonomyStore {
    /// Builds a store from already linked parts, checking every cross-reference.
    pub fn from_parts(
        gwas: impl IntoIterator<Item = (GwaId, String)>,
        iwas: impl IntoIterator<Item = (IwaId, String, GwaId)>,
        dwas: impl IntoIterator<Item = (DwaId, String, IwaId)>,
        occupations: impl IntoIterator<Item = OnetOccupation>,
    ) -> Result<Self, TaxonomyError> {
        let mut store = TaxonomyStore::default();
        for (gwa_id, title) in gwas {
            store.gwas.insert(
                gwa_id.clone(),
                GwaNode {
                    gwa_id,
                    title,
                    iwa_ids: BTreeSet::new(),
                },
            );
        }
        let mut dangling = BTreeSet::new();
        for (iwa_id, title, gwa_id) in iwas {
            match store.gwas.get_mut(&gwa_id) {
                Some(g) => {
                    g.iwa_ids.insert(iwa_id.clone());
                }
                None => {
                    dangling.insert(gwa_id.to_string());
                }
            }
            store.iwas.insert(
                iwa_id.clone(),
                IwaNode {
                    iwa_id,
                    title,
                    gwa_id,
                    dwa_ids: BTreeSet::new(),
                },
            );
        }
        if !dangling.is_empty() {
            return Err(TaxonomyError::DanglingReferences {
                kind: "IWA→GWA",
                ids: dangling.into_iter().collect(),
            });
        }
        for (dwa_id, title, iwa_id) in dwas {
            match store.iwas.get_mut(&iwa_id) {
                Some(i) => {
                    i.dwa_ids.insert(dwa_id.clone());
                }
                None => {
                    dangling.insert(iwa_id.to_string());
                }
            }
            store.dwas.insert(
                dwa_id.clone(),
                DwaNode {
                    dwa_id,
                    title,
                    iwa_id,
                },
            );
        }
        if !dangling.is_empty() {
            return Err(TaxonomyError::DanglingReferences {
                kind: "DWA→IWA",
                ids: dangling.into_iter().collect(),
            });
        }
        for occ in occupations {
            for task in occ.tasks.values() {
                for dwa in &task.dwa_ids {
                    if !store.dwas.contains_key(dwa) {
                        dangling.insert(dwa.to_string());
                    }
                }
            }
            store.onet_occupations.insert(occ.onet_soc.clone(), occ);
        }
        if !dangling.is_empty() {
            return Err(TaxonomyError::DanglingReferences {
                kind: "task→DWA",
                ids: dangling.into_iter().collect(),
            });
        }
        Ok(store)
    }

    pub fn iwa_count(&self) -> usize {
        self.iwas.len()
    }

    pub fn gwa_count(&self) -> usize {
        self.gwas.len()
    }

    pub fn dwa_count(&self) -> usize {
        self.dwas.len()
    }

    /// Distinct task ids across all O*NET-SOC occupations.
    pub fn task_count(&self) -> usize {
        self.onet_occupations
            .values()
            .flat_map(|o| o.tasks.keys())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn is_merged(&self) -> bool {
        self.merged
    }

    pub fn iwas(&self) -> impl Iterator<Item = &IwaNode> {
        self.iwas.values()
    }

    pub fn gwas(&self) -> impl Iterator<Item = &GwaNode> {
        self.gwas.values()
    }

    pub fn iwa(&self, id: &IwaId) -> Option<&IwaNode> {
        self.iwas.get(id)
    }

    pub fn gwa(&self, id: &GwaId) -> Option<&GwaNode> {
        self.gwas.get(id)
    }

    pub fn dwa(&self, id: &DwaId) -> Option<&DwaNode> {
        self.dwas.get(id)
    }

    pub fn onet_occupations(&self) -> impl Iterator<Item = &OnetOccupation> {
        self.onet_occupations.values()
    }

    /// SOC occupations in code order; empty until [`merge_soc`] has run.
    pub fn occupations(&self) -> impl Iterator<Item = &OccupationRecord> {
        self.occupations.values()
    }

    pub fn occupation(&self, soc: &SocCode) -> Option<&OccupationRecord> {
        self.occupations.get(soc)
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn group_title(&self, code: &str) -> Option<&str> {
        self.group_titles.get(code).map(String::as_str)
    }

    /// Parent GWA of an IWA.
    pub fn rollup(&self, iwa_id: &IwaId) -> Result<&GwaId, TaxonomyError> {
        self.iwas
            .get(iwa_id)
            .map(|n| &n.gwa_id)
            .ok_or_else(|| TaxonomyError::UnknownId {
                kind: "IWA",
                id: iwa_id.to_string(),
            })
    }

    /// Child IWAs of a GWA.
    pub fn children(&self, gwa_id: &GwaId) -> Result<&BTreeSet<IwaId>, TaxonomyError> {
        self.gwas
            .get(gwa_id)
            .map(|n| &n.iwa_ids)
            .ok_or_else(|| TaxonomyError::UnknownId {
                kind: "GWA",
                id: gwa_id.to_string(),
            })
    }

    /// Finds an IWA by its title, ignoring case and a trailing period.
    pub fn iwa_by_title(&self, title: &str) -> Option<&IwaNode> {
        let key = normalize_title(title);
        self.iwas.values().find(|n| normalize_title(&n.title) == key)
    }

    pub fn gwa_by_title(&self, title: &str) -> Option<&GwaNode> {
        let key = normalize_title(title);
        self.gwas.values().find(|n| normalize_title(&n.title) == key)
    }

    /// IWAs reached from a task through its DWAs.
    pub fn task_iwas(&self, task: &TaskRecord) -> BTreeSet<IwaId> {
        task.dwa_ids
            .iter()
            .filter_map(|d| self.dwas.get(d))
            .map(|d| d.iwa_id.clone())
            .collect()
    }

    /// Writes the canonical line-delimited dump. Identical stores produce
    /// identical bytes.
    pub fn write_dump<W: Write>(&self, mut out: W) -> Result<(), TaxonomyError> {
        let mut line = |rec: &DumpRecord| -> Result<(), TaxonomyError> {
            let s = serde_json::to_string(rec).map_err(|e| TaxonomyError::Dump {
                line: 0,
                message: e.to_string(),
            })?;
            out.write_all(s.as_bytes())?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&DumpRecord::Header {
            merged: self.merged,
        })?;
        for g in self.gwas.values() {
            line(&DumpRecord::Gwa(g.clone()))?;
        }
        for i in self.iwas.values() {
            line(&DumpRecord::Iwa(i.clone()))?;
        }
        for d in self.dwas.values() {
            line(&DumpRecord::Dwa(d.clone()))?;
        }
        for o in self.onet_occupations.values() {
            line(&DumpRecord::OnetOccupation(o.clone()))?;
        }
        for o in self.occupations.values() {
            line(&DumpRecord::Occupation(o.clone()))?;
        }
        for (code, title) in &self.group_titles {
            line(&DumpRecord::GroupTitle {
                code: code.clone(),
                title: title.clone(),
            })?;
        }
        for d in &self.diagnostics {
            line(&DumpRecord::Diagnostic(d.clone()))?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(input: R) -> Result<Self, TaxonomyError> {
        let mut store = TaxonomyStore::default();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: DumpRecord =
                serde_json::from_str(&line).map_err(|e| TaxonomyError::Dump {
                    line: n + 1,
                    message: e.to_string(),
                })?;
            match rec {
                DumpRecord::Header { merged } => store.merged = merged,
                DumpRecord::Gwa(g) => {
                    store.gwas.insert(g.gwa_id.clone(), g);
                }
                DumpRecord::Iwa(i) => {
                    store.iwas.insert(i.iwa_id.clone(), i);
                }
                DumpRecord::Dwa(d) => {
                    store.dwas.insert(d.dwa_id.clone(), d);
                }
                DumpRecord::OnetOccupation(o) => {
                    store.onet_occupations.insert(o.onet_soc.clone(), o);
                }
                DumpRecord::Occupation(o) => {
                    store.occupations.insert(o.soc_code.clone(), o);
                }
                DumpRecord::GroupTitle { code, title } => {
                    store.group_titles.insert(code, title);
                }
                DumpRecord::Diagnostic(d) => store.diagnostics.push(d),
            }
        }
        Ok(store)
    }

    /// SHA-256 of the canonical dump, hex encoded.
    pub fn canonical_hash(&self) -> String {
        let mut buf = Vec::new();
        self.write_dump(&mut buf)
            .expect("writing to memory cannot fail");
        hex::encode(Sha256::digest(&buf))
    }
}

pub(crate) fn normalize_title(title: &str) -> String {
    title.trim().trim_end_matches('.').trim().to_lowercase()
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    #[test]
    fn rollup_and_children_round_trip() {
        let store = small_store(vec![]);
        for g in store.gwas() {
            for iwa in store.children(&g.gwa_id).unwrap() {
                assert_eq!(store.rollup(iwa).unwrap(), &g.gwa_id);
            }
        }
        let iwa = store.iwa_by_title("Analyze market or industry conditions").unwrap();
        let gwa = store.gwa(store.rollup(&iwa.iwa_id).unwrap()).unwrap();
        assert_eq!(gwa.title, "Analyzing Data or Information");
    }

    #[test]
    fn unknown_ids_are_lookup_errors() {
        let store = small_store(vec![]);
        assert!(matches!(
            store.rollup(&IwaId::new("nope")),
            Err(TaxonomyError::UnknownId { kind: "IWA", .. })
        ));
        assert!(store.children(&GwaId::new("nope")).is_err());
    }

    #[test]
    fn dangling_dwa_is_reported_with_ids() {
        let occ = onet_occ("11-1011.00", "CEO", vec![task("1", "11-1011.00", &["D9"], None)]);
        let err = TaxonomyStore::from_parts(
            [(GwaId::new("G1"), "g".to_string())],
            [(IwaId::new("I1"), "i".to_string(), GwaId::new("G1"))],
            [(DwaId::new("D1"), "d".to_string(), IwaId::new("I1"))],
            [occ],
        )
        .unwrap_err();
        match err {
            TaxonomyError::DanglingReferences { ids, .. } => assert_eq!(ids, vec!["D9"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dump_round_trip_preserves_hash() {
        let occ = onet_occ(
            "11-1011.00",
            "Chief Executives",
            vec![task("1", "11-1011.00", &["D1", "D3"], Some(rating(4.2, 0.9)))],
        );
        let store = small_store(vec![occ]);
        let mut buf = Vec::new();
        store.write_dump(&mut buf).unwrap();
        let back = TaxonomyStore::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.canonical_hash(), store.canonical_hash());
    }

    #[test]
    fn task_iwas_follow_dwas() {
        let t = task("1", "x", &["D3", "D4", "D1"], None);
        let store = small_store(vec![]);
        let iwas: Vec<_> = store.task_iwas(&t).into_iter().collect();
        assert_eq!(iwas, vec![IwaId::new("I1"), IwaId::new("I3")]);
    }

    #[test]
    fn frequency_labels_match_case_insensitively() {
        assert_eq!(
            FrequencyCategory::from_label("more than weekly"),
            Some(FrequencyCategory::MoreThanWeekly)
        );
        assert_eq!(
            FrequencyCategory::from_label("  HOURLY OR MORE "),
            Some(FrequencyCategory::HourlyOrMore)
        );
        assert_eq!(FrequencyCategory::from_scale_category(5), Some(FrequencyCategory::Daily));
        assert_eq!(FrequencyCategory::from_scale_category(0), None);
        assert_eq!(FrequencyCategory::from_scale_category(8), None);
    }
}
