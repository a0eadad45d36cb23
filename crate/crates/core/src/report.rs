//! Tables and figure data rendered from persisted pipeline outputs.
//!
//! Figures come out as data (edge lists, binned points, box statistics) so
//! every cell can be recomputed from the intermediate tables.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::Side;
use crate::ids::{IwaId, SocCode};
use crate::metrics::{self, AggregateSummary, IwaStats, SpeedupRate, StatsTable};
use crate::score::analysis::{self, GroupLevel};
use crate::score::{self, ApplicabilityScore, ScoreConfig, ScoreTable};
use crate::stats;
use crate::taxonomy::TaxonomyStore;
use crate::workforce::{WeightTable, Weighting, WorkforceShares};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unknown report kind `{0}`")]
    UnknownKind(String),
    #[error("{kind}: invalid parameter `{key}`: {reason}")]
    Param { kind: ReportKind, key: String, reason: String },
    #[error("{kind}: missing {input}; run the `{stage}` stage first")]
    MissingInput { kind: ReportKind, input: &'static str, stage: &'static str },
    #[error("{0}: no occupation scores to report")]
    EmptyScores(ReportKind),
    #[error("invalid report tag `{0}`")]
    Tag(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    TopOccupations,
    BottomOccupations,
    MajorGroups,
    MinorGroups,
    GwaShares,
    IwaShares,
    FeedbackExtremes,
    CompletionExtremes,
    ScopeExtremes,
    Ratios,
    Asymmetry,
    SankeyData,
    WageBinscatter,
    EducationBoxes,
    E1Scatter,
    DepthCurves,
    Divergence,
}

#[derive(Debug, Clone, Copy)]
enum ParamType {
    /// Positive integer.
    Count,
    /// Non-negative integer where 0 means no limit.
    Limit,
    Fraction,
    Side,
    FractionList,
}

struct ParamDef {
    key: &'static str,
    ty: ParamType,
    default: &'static str,
}

const fn p(key: &'static str, ty: ParamType, default: &'static str) -> ParamDef {
    ParamDef { key, ty, default }
}

const EXTREMES: &[ParamDef] = &[
    p("n", ParamType::Count, "15"),
    p("min_share", ParamType::Fraction, "0.01"),
    p("side", ParamType::Side, "user"),
];

const TOP_BOTTOM: &[ParamDef] = &[p("n", ParamType::Count, "40")];
const IWA_SHARES: &[ParamDef] = &[p("n", ParamType::Limit, "0")];
const RATIOS: &[ParamDef] = &[p("n", ParamType::Count, "10"), p("floor", ParamType::Fraction, "0.0005")];
const SANKEY: &[ParamDef] = &[p("occupations", ParamType::Count, "25"), p("iwas", ParamType::Count, "20")];
const DEPTH: &[ParamDef] = &[
    p("thresholds", ParamType::FractionList, DEFAULT_SWEEP_THRESHOLDS),
    p("depths", ParamType::FractionList, "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"),
];
const DIVERGENCE: &[ParamDef] = &[p("n", ParamType::Count, "10"), p("min_percentile", ParamType::Fraction, "0.75")];

pub const DEFAULT_SWEEP_THRESHOLDS: &str = "0.00001,0.0001,0.0005,0.001,0.01";

impl ReportKind {
    pub const ALL: [ReportKind; 17] = [
        ReportKind::TopOccupations,
        ReportKind::BottomOccupations,
        ReportKind::MajorGroups,
        ReportKind::MinorGroups,
        ReportKind::GwaShares,
        ReportKind::IwaShares,
        ReportKind::FeedbackExtremes,
        ReportKind::CompletionExtremes,
        ReportKind::ScopeExtremes,
        ReportKind::Ratios,
        ReportKind::Asymmetry,
        ReportKind::SankeyData,
        ReportKind::WageBinscatter,
        ReportKind::EducationBoxes,
        ReportKind::E1Scatter,
        ReportKind::DepthCurves,
        ReportKind::Divergence,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReportKind::TopOccupations => "top_occupations",
            ReportKind::BottomOccupations => "bottom_occupations",
            ReportKind::MajorGroups => "major_groups",
            ReportKind::MinorGroups => "minor_groups",
            ReportKind::GwaShares => "gwa_shares",
            ReportKind::IwaShares => "iwa_shares",
            ReportKind::FeedbackExtremes => "feedback_extremes",
            ReportKind::CompletionExtremes => "completion_extremes",
            ReportKind::ScopeExtremes => "scope_extremes",
            ReportKind::Ratios => "ratios",
            ReportKind::Asymmetry => "asymmetry",
            ReportKind::SankeyData => "sankey_data",
            ReportKind::WageBinscatter => "wage_binscatter",
            ReportKind::EducationBoxes => "education_boxes",
            ReportKind::E1Scatter => "e1_scatter",
            ReportKind::DepthCurves => "depth_curves",
            ReportKind::Divergence => "divergence",
        }
    }

    fn params(self) -> &'static [ParamDef] {
        match self {
            ReportKind::TopOccupations | ReportKind::BottomOccupations => TOP_BOTTOM,
            ReportKind::IwaShares => IWA_SHARES,
            ReportKind::FeedbackExtremes | ReportKind::CompletionExtremes | ReportKind::ScopeExtremes => EXTREMES,
            ReportKind::Ratios => RATIOS,
            ReportKind::SankeyData => SANKEY,
            ReportKind::DepthCurves => DEPTH,
            ReportKind::Divergence => DIVERGENCE,
            _ => &[],
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReportKind {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ReportKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ReportError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum ParamValue {
    Int(usize),
    Num(f64),
    Side(Side),
    List(Vec<f64>),
}

/// A report kind with validated parameters. Unset parameters take defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportSpec {
    pub kind: ReportKind,
    values: BTreeMap<&'static str, ParamValue>,
}

impl ReportSpec {
    pub fn new<K: AsRef<str>, V: AsRef<str>>(
        kind: ReportKind,
        params: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Self, ReportError> {
        let defs = kind.params();
        let mut given: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in params {
            let k = k.as_ref();
            if !defs.iter().any(|d| d.key == k) {
                return Err(ReportError::Param { kind, key: k.to_string(), reason: "not accepted by this kind".into() });
            }
            given.insert(k.to_string(), v.as_ref().to_string());
        }
        let mut values = BTreeMap::new();
        for d in defs {
            let raw = given.get(d.key).map_or(d.default, String::as_str);
            let bad = |reason: &str| ReportError::Param { kind, key: d.key.to_string(), reason: format!("{reason}, got `{raw}`") };
            let value = match d.ty {
                ParamType::Count => match raw.trim().parse::<usize>() {
                    Ok(n) if n > 0 => ParamValue::Int(n),
                    _ => return Err(bad("expected a positive integer")),
                },
                ParamType::Limit => ParamValue::Int(raw.trim().parse().map_err(|_| bad("expected an integer"))?),
                ParamType::Fraction => match raw.trim().parse::<f64>() {
                    Ok(x) if (0.0..=1.0).contains(&x) => ParamValue::Num(x),
                    _ => return Err(bad("expected a number in [0, 1]")),
                },
                ParamType::Side => ParamValue::Side(raw.trim().parse().map_err(|_| bad("expected `user` or `ai`"))?),
                ParamType::FractionList => {
                    let xs: Result<Vec<f64>, _> = raw.split(',').map(|x| x.trim().parse::<f64>()).collect();
                    match xs {
                        Ok(xs) if !xs.is_empty() && xs.iter().all(|x| (0.0..=1.0).contains(x)) => ParamValue::List(xs),
                        _ => return Err(bad("expected a comma-separated list of numbers in [0, 1]")),
                    }
                }
            };
            values.insert(d.key, value);
        }
        Ok(Self { kind, values })
    }

    pub fn with_defaults(kind: ReportKind) -> Self {
        Self::new(kind, std::iter::empty::<(&str, &str)>()).expect("defaults are valid")
    }

    /// Parses `kind` or `kind:key=value,key=value`. List values use `;`
    /// between items since `,` separates parameters.
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let (kind, rest) = text.split_once(':').unwrap_or((text, ""));
        let kind: ReportKind = kind.trim().parse()?;
        let mut params = Vec::new();
        for pair in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| ReportError::Param {
                kind,
                key: pair.to_string(),
                reason: "expected key=value".into(),
            })?;
            params.push((k.trim().to_string(), v.replace(';', ",")));
        }
        Self::new(kind, params)
    }

    fn int(&self, key: &str) -> usize {
        match self.values.get(key) {
            Some(ParamValue::Int(n)) => *n,
            other => panic!("parameter {key} is not an integer: {other:?}"),
        }
    }

    fn num(&self, key: &str) -> f64 {
        match self.values.get(key) {
            Some(ParamValue::Num(x)) => *x,
            other => panic!("parameter {key} is not a number: {other:?}"),
        }
    }

    fn side(&self) -> Side {
        match self.values.get("side") {
            Some(ParamValue::Side(s)) => *s,
            other => panic!("parameter side is not a side: {other:?}"),
        }
    }

    fn list(&self, key: &str) -> &[f64] {
        match self.values.get(key) {
            Some(ParamValue::List(xs)) => xs,
            other => panic!("parameter {key} is not a list: {other:?}"),
        }
    }
}

pub fn default_specs() -> Vec<ReportSpec> {
    ReportKind::ALL.into_iter().map(ReportSpec::with_defaults).collect()
}

/// Everything reports can draw on. Each field is a persisted stage output.
#[derive(Debug, Clone, Default)]
pub struct ReportInputs {
    pub store: Option<TaxonomyStore>,
    pub weights: Option<WeightTable>,
    pub workforce: Option<WorkforceShares>,
    pub stats: Option<StatsTable>,
    pub feedback_stats: Option<StatsTable>,
    pub summary: Option<AggregateSummary>,
    pub speedup: Option<Vec<SpeedupRate>>,
    pub scores: Option<ScoreTable>,
    pub uniform_scores: Option<ScoreTable>,
    pub exposures: Option<BTreeMap<SocCode, f64>>,
    pub score_config: ScoreConfig,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(cols: &[&str]) -> Self {
        Self { header: cols.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| ReportError::Io(e.into_error()))
    }
}

/// One rendered report. The unnamed part is the main table; named parts
/// hold companion summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub kind: ReportKind,
    pub parts: Vec<(Option<&'static str>, Table)>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn need<'a, T>(x: &'a Option<T>, kind: ReportKind, input: &'static str, stage: &'static str) -> Result<&'a T, ReportError> {
    x.as_ref().ok_or(ReportError::MissingInput { kind, input, stage })
}

fn scores_of(inputs: &ReportInputs, kind: ReportKind) -> Result<&[ApplicabilityScore], ReportError> {
    let t = need(&inputs.scores, kind, "occupation scores", "score")?;
    if t.rows.is_empty() {
        return Err(ReportError::EmptyScores(kind));
    }
    Ok(&t.rows)
}

fn iwa_title(store: &TaxonomyStore, id: &IwaId) -> String {
    store.iwa(id).map(|n| n.title.clone()).unwrap_or_default()
}

pub fn render(spec: &ReportSpec, inputs: &ReportInputs) -> Result<Rendered, ReportError> {
    let kind = spec.kind;
    let main = |t: Table| Rendered { kind, parts: vec![(None, t)] };
    Ok(match kind {
        ReportKind::TopOccupations => main(occupations(spec, inputs, true)?),
        ReportKind::BottomOccupations => main(occupations(spec, inputs, false)?),
        ReportKind::MajorGroups => main(groups(kind, inputs, GroupLevel::Major)?),
        ReportKind::MinorGroups => main(groups(kind, inputs, GroupLevel::Minor)?),
        ReportKind::GwaShares => main(gwa_shares(kind, inputs)?),
        ReportKind::IwaShares => main(iwa_shares(spec, inputs)?),
        ReportKind::FeedbackExtremes => {
            let summary = need(&inputs.summary, kind, "aggregate summary", "aggregate")?;
            let mut corr = Table::new(&["metric", "value"]);
            let fb = &summary.feedback;
            for (name, v) in [
                ("conversations", Some(fb.conversations as f64)),
                ("r_strict", fb.r_strict),
                ("r_half_credit", fb.r_half_credit),
                ("iwa_r_user", fb.iwa_r_user),
                ("iwa_r_ai", fb.iwa_r_ai),
            ] {
                corr.push(vec![name.into(), opt(v)]);
            }
            Rendered { kind, parts: vec![(None, extremes(spec, inputs)?), (Some("correlation"), corr)] }
        }
        ReportKind::CompletionExtremes | ReportKind::ScopeExtremes => main(extremes(spec, inputs)?),
        ReportKind::Ratios => main(ratios(spec, inputs)?),
        ReportKind::Asymmetry => {
            let s = &need(&inputs.summary, kind, "aggregate summary", "aggregate")?.asymmetry;
            let mut t = Table::new(&["metric", "value"]);
            t.push(vec!["conversations".into(), s.conversations.to_string()]);
            t.push(vec!["both_empty".into(), s.both_empty.to_string()]);
            t.push(vec!["disjoint_fraction".into(), opt(s.disjoint_fraction)]);
            t.push(vec!["below_half_fraction".into(), opt(s.below_half_fraction)]);
            main(t)
        }
        ReportKind::SankeyData => main(sankey(spec, inputs)?),
        ReportKind::WageBinscatter => wage(kind, inputs)?,
        ReportKind::EducationBoxes => education(kind, inputs)?,
        ReportKind::E1Scatter => e1(kind, inputs)?,
        ReportKind::DepthCurves => main(depth(spec, inputs)?),
        ReportKind::Divergence => main(divergence(spec, inputs)?),
    })
}

fn occupations(spec: &ReportSpec, inputs: &ReportInputs, top: bool) -> Result<Table, ReportError> {
    let mut rows: Vec<&ApplicabilityScore> = scores_of(inputs, spec.kind)?.iter().collect();
    rows.sort_by(|x, y| {
        let by_a = if top { y.a.total_cmp(&x.a) } else { x.a.total_cmp(&y.a) };
        by_a.then_with(|| x.soc_code.cmp(&y.soc_code))
    });
    let mut t = Table::new(&[
        "rank", "soc_code", "title", "coverage", "completion", "scope", "a_user", "a_ai", "a", "employment", "mean_wage",
    ]);
    for (i, s) in rows.into_iter().take(spec.int("n")).enumerate() {
        t.push(vec![
            (i + 1).to_string(),
            s.soc_code.to_string(),
            s.title.clone(),
            num(s.coverage),
            opt(s.completion),
            opt(s.scope),
            num(s.a_user),
            num(s.a_ai),
            num(s.a),
            opt(s.employment),
            opt(s.mean_wage),
        ]);
    }
    Ok(t)
}

fn groups(kind: ReportKind, inputs: &ReportInputs, level: GroupLevel) -> Result<Table, ReportError> {
    let scores = scores_of(inputs, kind)?;
    let store = need(&inputs.store, kind, "taxonomy", "ingest")?;
    let prefix = match level {
        GroupLevel::Major => 2,
        GroupLevel::Minor => 4,
    };
    let mut rows = analysis::group_rollup(scores, level, |code| store.group_title(&code[..prefix]).map(str::to_string));
    rows.sort_by(|x, y| y.a.total_cmp(&x.a).then_with(|| x.group_code.cmp(&y.group_code)));
    let mut t = Table::new(&[
        "group_code", "title", "occupations", "employment", "coverage", "completion", "scope", "a_user", "a_ai", "a",
    ]);
    for g in rows {
        t.push(vec![
            g.group_code,
            g.title,
            g.occupations.to_string(),
            num(g.employment),
            num(g.coverage),
            opt(g.completion),
            opt(g.scope),
            num(g.a_user),
            num(g.a_ai),
            num(g.a),
        ]);
    }
    Ok(t)
}

fn gwa_shares(kind: ReportKind, inputs: &ReportInputs) -> Result<Table, ReportError> {
    let store = need(&inputs.store, kind, "taxonomy", "ingest")?;
    let workforce = need(&inputs.workforce, kind, "workforce shares", "ingest")?;
    let stats = need(&inputs.stats, kind, "IWA statistics", "aggregate")?;
    let rollup = metrics::gwa_stats(&stats.rows, store);
    let share = |side: Side, gwa| {
        rollup.iter().find(|g| g.side == side && &g.gwa_id == gwa).map_or(0.0, |g| g.activity_share)
    };
    let mut t = Table::new(&["gwa_id", "title", "user_share", "ai_share", "workforce_share"]);
    for g in store.gwas() {
        t.push(vec![
            g.gwa_id.to_string(),
            g.title.clone(),
            num(share(Side::User, &g.gwa_id)),
            num(share(Side::Ai, &g.gwa_id)),
            num(workforce.gwa_share(&g.gwa_id).unwrap_or(0.0)),
        ]);
    }
    Ok(t)
}

fn iwa_shares(spec: &ReportSpec, inputs: &ReportInputs) -> Result<Table, ReportError> {
    let kind = spec.kind;
    let store = need(&inputs.store, kind, "taxonomy", "ingest")?;
    let workforce = need(&inputs.workforce, kind, "workforce shares", "ingest")?;
    let stats = need(&inputs.stats, kind, "IWA statistics", "aggregate")?;
    let user = stats.side_map(Side::User);
    let ai = stats.side_map(Side::Ai);
    let mut rows: Vec<(&IwaId, f64, f64, u64, u64)> = store
        .iwas()
        .map(|n| {
            let u = user.get(&n.iwa_id);
            let a = ai.get(&n.iwa_id);
            (
                &n.iwa_id,
                u.map_or(0.0, |s| s.activity_share),
                a.map_or(0.0, |s| s.activity_share),
                u.map_or(0, |s| s.match_count),
                a.map_or(0, |s| s.match_count),
            )
        })
        .collect();
    rows.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(y.0)));
    let limit = match spec.int("n") {
        0 => usize::MAX,
        n => n,
    };
    let mut t = Table::new(&[
        "iwa_id", "title", "gwa_id", "user_share", "ai_share", "workforce_share", "user_matches", "ai_matches",
    ]);
    for (id, u, a, um, am) in rows.into_iter().take(limit) {
        let gwa = store.iwa(id).map(|n| n.gwa_id.to_string()).unwrap_or_default();
        t.push(vec![
            id.to_string(),
            iwa_title(store, id),
            gwa,
            num(u),
            num(a),
            num(workforce.iwa_share(id).unwrap_or(0.0)),
            um.to_string(),
            am.to_string(),
        ]);
    }
    Ok(t)
}

/// Top and bottom IWAs on one metric among IWAs matched in at least
/// `min_share` of conversations. The bottom list never repeats the top one.
fn extremes(spec: &ReportSpec, inputs: &ReportInputs) -> Result<Table, ReportError> {
    let kind = spec.kind;
    let store = need(&inputs.store, kind, "taxonomy", "ingest")?;
    let summary = need(&inputs.summary, kind, "aggregate summary", "aggregate")?;
    let (stats, conversations) = if kind == ReportKind::FeedbackExtremes {
        (need(&inputs.feedback_stats, kind, "feedback statistics", "aggregate")?, summary.feedback_conversations)
    } else {
        (need(&inputs.stats, kind, "IWA statistics", "aggregate")?, summary.conversations)
    };
    let value = |r: &IwaStats| match kind {
        ReportKind::FeedbackExtremes => r.positive_feedback_share,
        ReportKind::CompletionExtremes => r.completion_rate,
        _ => r.scope_rate,
    };
    let n = spec.int("n");
    let min_share = spec.num("min_share");
    let share = |r: &IwaStats| if conversations == 0 { 0.0 } else { r.match_count as f64 / conversations as f64 };
    let mut eligible: Vec<(&IwaStats, f64)> = stats
        .side(spec.side())
        .filter(|r| share(r) >= min_share)
        .filter_map(|r| value(r).map(|v| (r, v)))
        .collect();
    eligible.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.iwa_id.cmp(&y.0.iwa_id)));
    let top_n = n.min(eligible.len());
    let mut bottom: Vec<(&IwaStats, f64)> = eligible[top_n..].to_vec();
    bottom.sort_by(|x, y| x.1.total_cmp(&y.1).then_with(|| x.0.iwa_id.cmp(&y.0.iwa_id)));

    let mut t = Table::new(&[
        "position", "rank", "iwa_id", "title", "value", "ci_low", "ci_high", "matches", "conversation_share",
    ]);
    let lists = [("top", &eligible[..top_n]), ("bottom", &bottom[..n.min(bottom.len())])];
    for (position, list) in lists {
        for (i, (r, v)) in list.iter().enumerate() {
            let ci = |x: Option<f64>| if kind == ReportKind::FeedbackExtremes { opt(x) } else { String::new() };
            t.push(vec![
                position.into(),
                (i + 1).to_string(),
                r.iwa_id.to_string(),
                iwa_title(store, &r.iwa_id),
                num(*v),
                ci(r.feedback_ci_low),
                ci(r.feedback_ci_high),
                r.match_count.to_string(),
                num(share(r)),
            ]);
        }
    }
    Ok(t)
}

fn ratios(spec: &ReportSpec, inputs: &ReportInputs) -> Result<Table, ReportError> {
    let kind = spec.kind;
    let store = need(&inputs.store, kind, "taxonomy", "ingest")?;
    let stats = need(&inputs.stats, kind, "IWA statistics", "aggregate")?;
    let all = metrics::side_ratios(stats, spec.num("floor"));
    let mut t = Table::new(&["dominant", "rank", "iwa_id", "title", "user_share", "ai_share", "factor"]);
    for side in Side::BOTH {
        let mut rows: Vec<_> = all.iter().filter(|r| r.dominant == side).collect();
        rows.sort_by(|x, y| y.factor.total_cmp(&x.factor).then_with(|| x.iwa_id.cmp(&y.iwa_id)));
        for (i, r) in rows.into_iter().take(spec.int("n")).enumerate() {
            t.push(vec![
                side.to_string(),
                (i + 1).to_string(),
                r.iwa_id.to_string(),
                iwa_title(store, &r.iwa_id),
                num(r.user_share),
                num(r.ai_share),
                num(r.factor),
            ]);
        }
    }
    Ok(t)
}

/// Edges from the highest-scoring occupations to the IWAs contributing most
/// to them. An edge weight is the IWA's part of the occupation's score.
fn sankey(spec: &ReportSpec, inputs: &ReportInputs) -> Result<Table, ReportError> {
    let kind = spec.kind;
    let mut occs: Vec<&ApplicabilityScore> = scores_of(inputs, kind)?.iter().collect();
    let store = need(&inputs.store, kind, "taxonomy", "ingest")?;
    let weights = need(&inputs.weights, kind, "occupation weights", "ingest")?;
    let stats = need(&inputs.stats, kind, "IWA statistics", "aggregate")?;
    let user = score::factors(stats, Side::User);
    let ai = score::factors(stats, Side::Ai);
    occs.sort_by(|x, y| y.a.total_cmp(&x.a).then_with(|| x.soc_code.cmp(&y.soc_code)));
    occs.truncate(spec.int("occupations"));

    let mut parts: Vec<BTreeMap<IwaId, f64>> = Vec::with_capacity(occs.len());
    let mut totals: BTreeMap<IwaId, f64> = BTreeMap::new();
    for s in &occs {
        let c: BTreeMap<IwaId, f64> = weights
            .get(&s.soc_code)
            .map(|w| score::contributions(w, &user, &ai, &inputs.score_config).into_iter().collect())
            .unwrap_or_default();
        for (iwa, x) in &c {
            *totals.entry(iwa.clone()).or_default() += x;
        }
        parts.push(c);
    }
    let mut top: Vec<(IwaId, f64)> = totals.into_iter().collect();
    top.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    top.truncate(spec.int("iwas"));

    let mut t = Table::new(&[
        "occupation_rank", "soc_code", "occupation_title", "a", "employment", "iwa_rank", "iwa_id", "iwa_title",
        "weight",
    ]);
    for (oi, (s, c)) in occs.iter().zip(&parts).enumerate() {
        for (ii, (iwa, _)) in top.iter().enumerate() {
            let Some(w) = c.get(iwa) else { continue };
            t.push(vec![
                (oi + 1).to_string(),
                s.soc_code.to_string(),
                s.title.clone(),
                num(s.a),
                opt(s.employment),
                (ii + 1).to_string(),
                iwa.to_string(),
                iwa_title(store, iwa),
                num(*w),
            ]);
        }
    }
    Ok(t)
}

fn wage(kind: ReportKind, inputs: &ReportInputs) -> Result<Rendered, ReportError> {
    let socio = analysis::socioeconomic(scores_of(inputs, kind)?);
    let mut bins = Table::new(&["bin", "occupations", "employment", "mean_wage", "a", "a_user", "a_ai"]);
    for b in &socio.wage_bins {
        bins.push(vec![
            b.bin.to_string(),
            b.occupations.to_string(),
            num(b.employment),
            num(b.mean_wage),
            num(b.a),
            num(b.a_user),
            num(b.a_ai),
        ]);
    }
    let mut corr = Table::new(&[
        "score",
        "weighted",
        "unweighted",
        "weighted_excluding_top_decile",
        "unweighted_excluding_top_decile",
        "top_decile_wage_cutoff",
    ]);
    for c in &socio.wage_correlations {
        corr.push(vec![
            c.score.clone(),
            opt(c.weighted),
            opt(c.unweighted),
            opt(c.weighted_excluding_top_decile),
            opt(c.unweighted_excluding_top_decile),
            opt(socio.top_decile_wage_cutoff),
        ]);
    }
    Ok(Rendered { kind, parts: vec![(None, bins), (Some("correlations"), corr)] })
}

fn education(kind: ReportKind, inputs: &ReportInputs) -> Result<Rendered, ReportError> {
    let socio = analysis::socioeconomic(scores_of(inputs, kind)?);
    let mut boxes = Table::new(&[
        "level", "label", "occupations", "employment", "mean_a", "mean_a_user", "mean_a_ai", "min", "q1", "median",
        "q3", "max",
    ]);
    for g in &socio.education {
        let b = g.box_a;
        boxes.push(vec![
            g.level.0.to_string(),
            g.label.clone(),
            g.occupations.to_string(),
            num(g.employment),
            num(g.mean_a),
            num(g.mean_a_user),
            num(g.mean_a_ai),
            opt(b.map(|b| b.min)),
            opt(b.map(|b| b.q1)),
            opt(b.map(|b| b.median)),
            opt(b.map(|b| b.q3)),
            opt(b.map(|b| b.max)),
        ]);
    }
    let mut test = Table::new(&["comparison", "mean_a", "mean_b", "t", "df", "p_value"]);
    if let Some(r) = socio.bachelors_vs_below {
        test.push(vec![
            "bachelors_vs_below".into(),
            num(r.mean_a),
            num(r.mean_b),
            num(r.t),
            num(r.df),
            num(r.p_value),
        ]);
    }
    Ok(Rendered { kind, parts: vec![(None, boxes), (Some("ttest"), test)] })
}

/// Uniform-task-weight scores against the external exposure measure, with
/// each occupation's weighted share of conversations judged to halve task time.
fn e1(kind: ReportKind, inputs: &ReportInputs) -> Result<Rendered, ReportError> {
    let uniform = need(&inputs.uniform_scores, kind, "uniform-weight scores", "score")?;
    if uniform.rows.is_empty() {
        return Err(ReportError::EmptyScores(kind));
    }
    let exposures = need(&inputs.exposures, kind, "E1 exposures (paths.e1_file)", "score")?;
    let store = need(&inputs.store, kind, "taxonomy", "ingest")?;
    let speedup = need(&inputs.speedup, kind, "speedup rates", "aggregate")?;
    let rates: BTreeMap<&IwaId, f64> =
        speedup.iter().filter(|r| r.side == Side::User).map(|r| (&r.iwa_id, r.rate)).collect();
    let (weights, _) = WeightTable::from_store(store, Weighting::UniformTasks)
        .map_err(|_| ReportError::MissingInput { kind, input: "merged taxonomy", stage: "ingest" })?;
    let speedup_share = |soc: &SocCode| -> Option<f64> {
        let w = weights.get(soc)?;
        let (xs, ws): (Vec<f64>, Vec<f64>) =
            w.iter().filter_map(|(iwa, x)| rates.get(iwa).map(|r| (*r, *x))).unzip();
        stats::weighted_mean(&xs, &ws)
    };

    let cmp = analysis::compare_external(&uniform.rows, exposures);
    let mut points = Table::new(&["soc_code", "title", "score", "e1", "employment", "speedup_share"]);
    let (mut sx, mut sy) = (Vec::new(), Vec::new());
    for p in &cmp.points {
        let share = speedup_share(&p.soc_code);
        if let Some(s) = share {
            sx.push(s);
            sy.push(p.e1);
        }
        points.push(vec![p.soc_code.to_string(), p.title.clone(), num(p.score), num(p.e1), num(p.employment), opt(share)]);
    }
    let mut summary = Table::new(&["metric", "value"]);
    summary.push(vec!["occupations".into(), cmp.points.len().to_string()]);
    summary.push(vec!["r_occupation".into(), opt(cmp.r_occupation)]);
    summary.push(vec!["major_groups".into(), cmp.major_groups.to_string()]);
    summary.push(vec!["r_major_group".into(), opt(cmp.r_major_group)]);
    summary.push(vec!["r_speedup_share".into(), opt(stats::pearson(&sx, &sy))]);
    Ok(Rendered { kind, parts: vec![(None, points), (Some("summary"), summary)] })
}

fn depth(spec: &ReportSpec, inputs: &ReportInputs) -> Result<Table, ReportError> {
    let kind = spec.kind;
    let scores = scores_of(inputs, kind)?;
    let weights = need(&inputs.weights, kind, "occupation weights", "ingest")?;
    let stats = need(&inputs.stats, kind, "IWA statistics", "aggregate")?;
    let employment: BTreeMap<SocCode, f64> =
        scores.iter().filter_map(|s| s.employment.map(|e| (s.soc_code.clone(), e))).collect();
    let thresholds = spec.list("thresholds");
    let depths = spec.list("depths");
    let mut header = vec!["side".to_string(), "threshold".to_string()];
    header.extend(depths.iter().map(|d| format!("depth_{d}")));
    let mut t = Table { header, rows: Vec::new() };
    for side in Side::BOTH {
        let m = analysis::coverage_depth_curve(weights, &score::factors(stats, side), &employment, side, thresholds, depths);
        for (th, row) in m.thresholds.iter().zip(&m.values) {
            let mut cells = vec![side.to_string(), num(*th)];
            cells.extend(row.iter().map(|v| num(*v)));
            t.rows.push(cells);
        }
    }
    Ok(t)
}

fn divergence(spec: &ReportSpec, inputs: &ReportInputs) -> Result<Table, ReportError> {
    let rows = analysis::divergence(scores_of(inputs, spec.kind)?, spec.num("min_percentile"));
    let n = spec.int("n");
    let mut t = Table::new(&[
        "higher_side", "rank", "soc_code", "title", "percentile_user", "percentile_ai", "gap", "a_user", "a_ai",
    ]);
    for side in Side::BOTH {
        let picked = rows.iter().filter(|r| match side {
            Side::User => r.gap > 0.0,
            Side::Ai => r.gap < 0.0,
        });
        for (i, r) in picked.take(n).enumerate() {
            t.push(vec![
                side.to_string(),
                (i + 1).to_string(),
                r.soc_code.to_string(),
                r.title.clone(),
                num(r.percentile_user),
                num(r.percentile_ai),
                num(r.gap),
                num(r.a_user),
                num(r.a_ai),
            ]);
        }
    }
    Ok(t)
}

/// Provenance written next to the report tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMeta {
    pub config_hash: String,
    pub corpus_hash: String,
    pub backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: ReportKind,
    pub path: String,
    pub rows: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    #[serde(flatten)]
    pub meta: ManifestMeta,
    pub tag: String,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn valid_tag(tag: &str) -> bool {
    !tag.is_empty()
        && tag != "."
        && tag != ".."
        && tag.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

/// Renders every spec, then writes `<kind>/<tag>.csv` (plus
/// `<kind>/<tag>.<part>.csv` companions) and the manifest. Nothing is
/// written if any report fails to render.
pub fn write_reports(
    out_dir: &Path,
    tag: &str,
    specs: &[ReportSpec],
    inputs: &ReportInputs,
    meta: ManifestMeta,
) -> Result<ReportManifest, ReportError> {
    if !valid_tag(tag) {
        return Err(ReportError::Tag(tag.to_string()));
    }
    let rendered: Vec<Rendered> = specs.iter().map(|s| render(s, inputs)).collect::<Result<_, _>>()?;
    let mut files = Vec::new();
    for r in rendered {
        let dir = out_dir.join(r.kind.as_str());
        fs::create_dir_all(&dir)?;
        for (part, table) in r.parts {
            let name = match part {
                None => format!("{tag}.csv"),
                Some(p) => format!("{tag}.{p}.csv"),
            };
            let bytes = table.to_csv()?;
            fs::write(dir.join(&name), &bytes)?;
            files.push(ManifestEntry {
                kind: r.kind,
                path: format!("{}/{name}", r.kind.as_str()),
                rows: table.rows.len(),
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
    }
    let manifest = ReportManifest { meta, tag: tag.to_string(), files };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    fs::write(out_dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::CompletionLevel::{Complete, NotComplete};
    use crate::classify::ScopeLevel::{Minimal, Moderate, Significant};
    use crate::corpus::Thumbs;
    use crate::metrics::fixtures::labels;
    use crate::metrics::MetricsConfig;
    use crate::taxonomy::fixtures::{merged_store, rating, soc_occ, task};
    use crate::workforce::workforce_shares;
    use approx::assert_abs_diff_eq;

    fn inputs() -> ReportInputs {
        let store = merged_store(vec![
            soc_occ("11-1011", vec![task("1", "x", &["D1"], Some(rating(4.0, 1.0))), task("2", "x", &["D3"], Some(rating(3.0, 1.0)))], 200.0, 90_000.0, 8),
            soc_occ("15-1252", vec![task("3", "x", &["D2"], Some(rating(5.0, 1.0)))], 100.0, 120_000.0, 6),
            soc_occ("35-2014", vec![task("4", "x", &["D3"], Some(rating(4.0, 1.0)))], 300.0, 30_000.0, 2),
            soc_occ("35-2012", vec![task("5", "x", &["D1", "D3"], Some(rating(2.0, 1.0)))], 50.0, 32_000.0, 2),
        ]);
        let convs = vec![
            labels("c1", &[("I1", Moderate)], &[("I1", Significant)], Complete, Some(Thumbs::Up)),
            labels("c2", &[("I2", Moderate), ("I1", Minimal)], &[("I2", Moderate)], Complete, Some(Thumbs::Down)),
            labels("c3", &[("I2", Minimal)], &[("I3", Moderate)], NotComplete, None),
            labels("c4", &[], &[], NotComplete, None),
        ];
        let mc = MetricsConfig::default();
        let stats = StatsTable::compute(&convs, &mc);
        let cfg = ScoreConfig::default();
        let (weights, _) = WeightTable::from_store(&store, cfg.weighting).unwrap();
        let user = score::factors(&stats, Side::User);
        let ai = score::factors(&stats, Side::Ai);
        let scores = ScoreTable::compute(&store, &weights, &user, &ai, &cfg).unwrap();
        let uniform = analysis::uniform_scores(&store, &user, &ai, &cfg).unwrap();
        ReportInputs {
            workforce: Some(workforce_shares(&store).unwrap()),
            summary: Some(metrics::summarize(&convs, &convs, &stats)),
            speedup: Some(metrics::speedup_rates(&convs, Side::User)),
            feedback_stats: Some(stats.clone()),
            exposures: Some(scores.rows.iter().map(|s| (s.soc_code.clone(), s.a / 2.0)).collect()),
            store: Some(store),
            weights: Some(weights),
            stats: Some(stats),
            scores: Some(scores),
            uniform_scores: Some(uniform),
            score_config: cfg,
        }
    }

    #[test]
    fn every_kind_renders() {
        let inp = inputs();
        for spec in default_specs() {
            let r = render(&spec, &inp).unwrap_or_else(|e| panic!("{}: {e}", spec.kind));
            for (_, t) in &r.parts {
                assert!(t.rows.iter().all(|row| row.len() == t.header.len()), "{}", spec.kind);
            }
        }
    }

    #[test]
    fn params_are_validated() {
        assert!(ReportSpec::parse("top_occupations:n=5").is_ok());
        assert!(matches!(ReportSpec::parse("top_occupations:n=0"), Err(ReportError::Param { .. })));
        assert!(matches!(ReportSpec::parse("top_occupations:depth=1"), Err(ReportError::Param { .. })));
        assert!(matches!(ReportSpec::parse("feedback_extremes:min_share=2"), Err(ReportError::Param { .. })));
        assert!(matches!(ReportSpec::parse("feedback_extremes:side=robot"), Err(ReportError::Param { .. })));
        assert!(matches!(ReportSpec::parse("histogram"), Err(ReportError::UnknownKind(_))));
        let d = ReportSpec::parse("depth_curves:thresholds=0.001;0.01,depths=0;0.5").unwrap();
        assert_eq!(d.list("thresholds"), &[0.001, 0.01]);
        assert_eq!(d.list("depths"), &[0.0, 0.5]);
    }

    #[test]
    fn top_occupations_sorted_and_limited() {
        let inp = inputs();
        let r = render(&ReportSpec::parse("top_occupations:n=2").unwrap(), &inp).unwrap();
        let t = &r.parts[0].1;
        assert_eq!(t.rows.len(), 2);
        let a: Vec<f64> = t.rows.iter().map(|r| r[8].parse().unwrap()).collect();
        assert!(a[0] >= a[1]);
        let all: Vec<f64> = inp.scores.as_ref().unwrap().rows.iter().map(|s| s.a).collect();
        assert_eq!(a[0], all.iter().copied().fold(f64::MIN, f64::max));
    }

    #[test]
    fn sankey_edges_sum_to_scores() {
        let inp = inputs();
        let t = render(&ReportSpec::with_defaults(ReportKind::SankeyData), &inp).unwrap().parts.remove(0).1;
        let mut sums: BTreeMap<String, f64> = BTreeMap::new();
        for row in &t.rows {
            *sums.entry(row[1].clone()).or_default() += row[8].parse::<f64>().unwrap();
        }
        for s in &inp.scores.as_ref().unwrap().rows {
            assert_abs_diff_eq!(sums.get(s.soc_code.as_str()).copied().unwrap_or(0.0), s.a, epsilon = 1e-12);
        }
    }

    #[test]
    fn missing_input_names_stage() {
        let mut inp = inputs();
        inp.stats = None;
        let err = render(&ReportSpec::with_defaults(ReportKind::IwaShares), &inp).unwrap_err();
        assert!(err.to_string().contains("`aggregate`"), "{err}");
        inp.scores = Some(ScoreTable::default());
        let err = render(&ReportSpec::with_defaults(ReportKind::TopOccupations), &inp).unwrap_err();
        assert!(matches!(err, ReportError::EmptyScores(_)));
    }

    #[test]
    fn writes_are_byte_identical() {
        let inp = inputs();
        let meta = ManifestMeta { config_hash: "c".into(), corpus_hash: "h".into(), backend: "mock".into() };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = write_reports(a.path(), "t1", &default_specs(), &inp, meta.clone()).unwrap();
        let mb = write_reports(b.path(), "t1", &default_specs(), &inp, meta).unwrap();
        assert_eq!(ma, mb);
        for f in &ma.files {
            assert_eq!(fs::read(a.path().join(&f.path)).unwrap(), fs::read(b.path().join(&f.path)).unwrap());
        }
        assert!(a.path().join("top_occupations/t1.csv").exists());
        assert!(a.path().join("wage_binscatter/t1.correlations.csv").exists());
        assert!(write_reports(a.path(), "../x", &default_specs(), &inp, ma.meta.clone()).is_err());
    }
}
