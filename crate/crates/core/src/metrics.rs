//! Per-IWA statistics aggregated from conversation labels.
//!
//! Every statistic is a fold over conversations into integer counters, so
//! results do not depend on the order labels arrive in.

use std::collections::{BTreeMap, BTreeSet};
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{CompletionLevel, ConversationLabels, ScopeLevel, Side};
use crate::corpus::Thumbs;
use crate::ids::{GwaId, IwaId};
use crate::stats;
use crate::taxonomy::TaxonomyStore;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionPolicy {
    #[default]
    Strict,
    HalfCredit,
}

impl CompletionPolicy {
    pub fn credit(self, level: CompletionLevel) -> f64 {
        match (level, self) {
            (CompletionLevel::Complete, _) => 1.0,
            (CompletionLevel::Partial, CompletionPolicy::HalfCredit) => 0.5,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub completion_policy: CompletionPolicy,
    pub scope_cutoff: ScopeLevel,
    pub bootstrap_resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            completion_policy: CompletionPolicy::Strict,
            scope_cutoff: ScopeLevel::Moderate,
            bootstrap_resamples: 1000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IwaStats {
    pub iwa_id: IwaId,
    pub side: Side,
    pub activity_share: f64,
    pub match_count: u64,
    pub completion_rate: Option<f64>,
    pub scope_rate: Option<f64>,
    pub feedback_up: u64,
    pub feedback_total: u64,
    pub positive_feedback_share: Option<f64>,
    pub feedback_ci_low: Option<f64>,
    pub feedback_ci_high: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally {
    /// Conversations matched, keyed by how many IWAs they matched on the side.
    by_fanout: BTreeMap<u32, u64>,
    matches: u64,
    complete: u64,
    partial: u64,
    scoped: u64,
    up: u64,
    down: u64,
}

impl Tally {
    fn mass(&self) -> f64 {
        self.by_fanout.iter().map(|(k, n)| *n as f64 / f64::from(*k)).sum()
    }

    fn completion(&self, policy: CompletionPolicy) -> Option<f64> {
        if self.matches == 0 {
            return None;
        }
        let credit = self.complete as f64
            + match policy {
                CompletionPolicy::Strict => 0.0,
                CompletionPolicy::HalfCredit => 0.5 * self.partial as f64,
            };
        Some(credit / self.matches as f64)
    }
}

struct Fold {
    tallies: BTreeMap<IwaId, Tally>,
    matched_conversations: u64,
}

fn fold(labels: &[ConversationLabels], side: Side, cutoff: ScopeLevel) -> Fold {
    let mut tallies: BTreeMap<IwaId, Tally> = BTreeMap::new();
    let mut matched_conversations = 0;
    for conv in labels {
        let matches = conv.matches(side);
        if matches.is_empty() {
            continue;
        }
        matched_conversations += 1;
        let fanout = matches.len() as u32;
        for m in matches {
            let t = tallies.entry(m.iwa_id.clone()).or_default();
            *t.by_fanout.entry(fanout).or_default() += 1;
            t.matches += 1;
            match conv.completion.level {
                CompletionLevel::Complete => t.complete += 1,
                CompletionLevel::Partial => t.partial += 1,
                CompletionLevel::NotComplete => {}
            }
            if m.scope >= cutoff {
                t.scoped += 1;
            }
            match conv.thumbs {
                Some(Thumbs::Up) => t.up += 1,
                Some(Thumbs::Down) => t.down += 1,
                None => {}
            }
        }
    }
    Fold { tallies, matched_conversations }
}

/// Per-IWA activity shares for one side.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivityShares {
    pub shares: BTreeMap<IwaId, f64>,
    /// Conversations with at least one match; zero means no shares exist.
    pub matched_conversations: u64,
}

impl ActivityShares {
    pub fn is_empty(&self) -> bool {
        self.matched_conversations == 0
    }

    pub fn get(&self, id: &IwaId) -> f64 {
        self.shares.get(id).copied().unwrap_or(0.0)
    }
}

/// Each matched conversation splits one unit equally over its matched IWAs;
/// shares are those units over the number of matched conversations.
pub fn activity_shares(labels: &[ConversationLabels], side: Side) -> ActivityShares {
    let f = fold(labels, side, ScopeLevel::Moderate);
    let total = f.matched_conversations as f64;
    let shares = f.tallies.iter().map(|(id, t)| (id.clone(), t.mass() / total)).collect();
    ActivityShares { shares, matched_conversations: f.matched_conversations }
}

pub fn completion_rate(
    labels: &[ConversationLabels],
    side: Side,
    iwa: &IwaId,
    policy: CompletionPolicy,
) -> Option<f64> {
    fold(labels, side, ScopeLevel::Moderate).tallies.get(iwa)?.completion(policy)
}

/// Fraction of matched conversations whose scope is at or above `cutoff`.
pub fn scope_rate(labels: &[ConversationLabels], side: Side, iwa: &IwaId, cutoff: ScopeLevel) -> Option<f64> {
    let f = fold(labels, side, cutoff);
    let t = f.tallies.get(iwa)?;
    Some(t.scoped as f64 / t.matches as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackShare {
    pub share: f64,
    pub up: u64,
    pub total: u64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Percentile bootstrap interval for a proportion `up / total`.
pub fn bootstrap_proportion_ci(up: u64, total: u64, resamples: usize, confidence: f64, seed: u64) -> (f64, f64) {
    if total == 0 || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws: Vec<f64> = (0..resamples)
        .map(|_| {
            let hits = (0..total).filter(|_| rng.random_range(0..total) < up).count();
            hits as f64 / total as f64
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let alpha = (1.0 - confidence) / 2.0;
    let pick = |q: f64| draws[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    (pick(alpha), pick(1.0 - alpha))
}

fn feedback_from(t: &Tally, config: &MetricsConfig, seed: u64) -> Option<FeedbackShare> {
    let total = t.up + t.down;
    if total == 0 {
        return None;
    }
    let (ci_low, ci_high) = bootstrap_proportion_ci(t.up, total, config.bootstrap_resamples, config.confidence, seed);
    Some(FeedbackShare { share: t.up as f64 / total as f64, up: t.up, total, ci_low, ci_high })
}

/// Thumbs-up share among conversations matched to `iwa` that carry feedback.
pub fn feedback_share(
    labels: &[ConversationLabels],
    side: Side,
    iwa: &IwaId,
    config: &MetricsConfig,
) -> Option<FeedbackShare> {
    let f = fold(labels, side, config.scope_cutoff);
    feedback_from(f.tallies.get(iwa)?, config, iwa_seed(config.seed, side, iwa))
}

/// Bootstrap seed for one (side, IWA), independent of which other IWAs exist.
fn iwa_seed(seed: u64, side: Side, iwa: &IwaId) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in side.as_str().bytes().chain([0]).chain(iwa.as_str().bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// All statistics for every IWA matched at least once on `side`, in IWA id order.
pub fn iwa_stats(labels: &[ConversationLabels], side: Side, config: &MetricsConfig) -> Vec<IwaStats> {
    let f = fold(labels, side, config.scope_cutoff);
    let total = f.matched_conversations as f64;
    f.tallies
        .iter()
        .map(|(id, t)| {
            let fb = feedback_from(t, config, iwa_seed(config.seed, side, id));
            IwaStats {
                iwa_id: id.clone(),
                side,
                activity_share: t.mass() / total,
                match_count: t.matches,
                completion_rate: t.completion(config.completion_policy),
                scope_rate: Some(t.scoped as f64 / t.matches as f64),
                feedback_up: t.up,
                feedback_total: t.up + t.down,
                positive_feedback_share: fb.map(|f| f.share),
                feedback_ci_low: fb.map(|f| f.ci_low),
                feedback_ci_high: fb.map(|f| f.ci_high),
            }
        })
        .collect()
}

/// Statistics for both sides, keyed for lookup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<IwaStats>,
}

impl StatsTable {
    pub fn compute(labels: &[ConversationLabels], config: &MetricsConfig) -> Self {
        let mut rows = iwa_stats(labels, Side::User, config);
        rows.extend(iwa_stats(labels, Side::Ai, config));
        Self { rows }
    }

    pub fn side(&self, side: Side) -> impl Iterator<Item = &IwaStats> {
        self.rows.iter().filter(move |r| r.side == side)
    }

    pub fn side_map(&self, side: Side) -> BTreeMap<&IwaId, &IwaStats> {
        self.side(side).map(|r| (&r.iwa_id, r)).collect()
    }

    pub fn get(&self, side: Side, iwa: &IwaId) -> Option<&IwaStats> {
        self.rows.iter().find(|r| r.side == side && &r.iwa_id == iwa)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, csv::Error> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<Result<Vec<IwaStats>, _>>()?;
        Ok(Self { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwaStats {
    pub gwa_id: GwaId,
    pub side: Side,
    pub activity_share: f64,
    pub match_count: u64,
    pub completion_rate: Option<f64>,
    pub scope_rate: Option<f64>,
    pub feedback_up: u64,
    pub feedback_total: u64,
    pub positive_feedback_share: Option<f64>,
}

/// Rolls IWA statistics up to GWAs. Shares add; rates combine weighted by
/// each child's match count; feedback pools thumbs.
pub fn gwa_stats(rows: &[IwaStats], store: &TaxonomyStore) -> Vec<GwaStats> {
    #[derive(Default)]
    struct Acc {
        share: f64,
        matches: u64,
        completion: (f64, u64),
        scope: (f64, u64),
        up: u64,
        total: u64,
    }
    let mut acc: BTreeMap<(Side, GwaId), Acc> = BTreeMap::new();
    for r in rows {
        let Ok(gwa) = store.rollup(&r.iwa_id) else {
            log::warn!("IWA {} has no GWA; left out of rollup", r.iwa_id);
            continue;
        };
        let a = acc.entry((r.side, gwa.clone())).or_default();
        a.share += r.activity_share;
        a.matches += r.match_count;
        if let Some(c) = r.completion_rate {
            a.completion.0 += c * r.match_count as f64;
            a.completion.1 += r.match_count;
        }
        if let Some(s) = r.scope_rate {
            a.scope.0 += s * r.match_count as f64;
            a.scope.1 += r.match_count;
        }
        a.up += r.feedback_up;
        a.total += r.feedback_total;
    }
    let ratio = |(sum, n): (f64, u64)| (n > 0).then(|| sum / n as f64);
    acc.into_iter()
        .map(|((side, gwa_id), a)| GwaStats {
            gwa_id,
            side,
            activity_share: a.share,
            match_count: a.matches,
            completion_rate: ratio(a.completion),
            scope_rate: ratio(a.scope),
            feedback_up: a.up,
            feedback_total: a.total,
            positive_feedback_share: (a.total > 0).then(|| a.up as f64 / a.total as f64),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryRecord {
    pub conversation_id: String,
    pub jaccard: f64,
    pub disjoint: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymmetrySummary {
    pub conversations: usize,
    pub both_empty: usize,
    pub disjoint_fraction: Option<f64>,
    pub below_half_fraction: Option<f64>,
}

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// User-vs-AI IWA overlap per conversation. Conversations with no matches on
/// either side get a record but stay out of the summary fractions.
pub fn asymmetry(labels: &[ConversationLabels]) -> (Vec<AsymmetryRecord>, AsymmetrySummary) {
    let mut records = Vec::with_capacity(labels.len());
    let (mut both_empty, mut disjoint, mut below_half) = (0, 0, 0);
    for conv in labels {
        let user = conv.iwa_set(Side::User);
        let ai = conv.iwa_set(Side::Ai);
        let j = jaccard(&user, &ai);
        let empty = user.is_empty() && ai.is_empty();
        let is_disjoint = !empty && j == 0.0;
        if empty {
            both_empty += 1;
        } else {
            disjoint += usize::from(is_disjoint);
            below_half += usize::from(j < 0.5);
        }
        records.push(AsymmetryRecord {
            conversation_id: conv.conversation_id.clone(),
            jaccard: j,
            disjoint: is_disjoint,
        });
    }
    let denom = labels.len() - both_empty;
    let frac = |n: usize| (denom > 0).then(|| n as f64 / denom as f64);
    let summary = AsymmetrySummary {
        conversations: labels.len(),
        both_empty,
        disjoint_fraction: frac(disjoint),
        below_half_fraction: frac(below_half),
    };
    (records, summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideRatio {
    pub iwa_id: IwaId,
    pub user_share: f64,
    pub ai_share: f64,
    /// How many times larger the dominant side's share is.
    pub factor: f64,
    pub dominant: Side,
}

/// Overrepresentation of one side. `None` when both shares fall below
/// `floor`, or when either is zero.
pub fn side_ratio(iwa_id: &IwaId, user_share: f64, ai_share: f64, floor: f64) -> Option<SideRatio> {
    if user_share < floor && ai_share < floor {
        return None;
    }
    if user_share <= 0.0 || ai_share <= 0.0 {
        return None;
    }
    let (factor, dominant) = if user_share >= ai_share {
        (user_share / ai_share, Side::User)
    } else {
        (ai_share / user_share, Side::Ai)
    };
    Some(SideRatio { iwa_id: iwa_id.clone(), user_share, ai_share, factor, dominant })
}

pub fn side_ratios(stats: &StatsTable, floor: f64) -> Vec<SideRatio> {
    let user = stats.side_map(Side::User);
    let ai = stats.side_map(Side::Ai);
    let ids: BTreeSet<&IwaId> = user.keys().chain(ai.keys()).copied().collect();
    ids.into_iter()
        .filter_map(|id| {
            let u = user.get(id).map_or(0.0, |s| s.activity_share);
            let a = ai.get(id).map_or(0.0, |s| s.activity_share);
            side_ratio(id, u, a, floor)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCorrelation {
    /// Conversations carrying thumbs.
    pub conversations: usize,
    pub r_strict: Option<f64>,
    pub r_half_credit: Option<f64>,
    /// IWA-level correlation of feedback share with completion rate,
    /// weighted by match count, per side.
    pub iwa_r_user: Option<f64>,
    pub iwa_r_ai: Option<f64>,
}

/// Thumbs (up = 1, down = 0) against completion, at conversation level
/// under both completion codings and at IWA level.
pub fn feedback_correlation(labels: &[ConversationLabels], stats: &StatsTable) -> FeedbackCorrelation {
    let rated: Vec<&ConversationLabels> = labels.iter().filter(|l| l.thumbs.is_some()).collect();
    let thumbs: Vec<f64> = rated.iter().map(|l| f64::from(u8::from(l.thumbs == Some(Thumbs::Up)))).collect();
    let coded = |policy: CompletionPolicy| -> Vec<f64> {
        rated.iter().map(|l| policy.credit(l.completion.level)).collect()
    };
    let iwa_r = |side: Side| {
        let rows: Vec<&IwaStats> = stats
            .side(side)
            .filter(|r| r.positive_feedback_share.is_some() && r.completion_rate.is_some())
            .collect();
        let xs: Vec<f64> = rows.iter().filter_map(|r| r.positive_feedback_share).collect();
        let ys: Vec<f64> = rows.iter().filter_map(|r| r.completion_rate).collect();
        let ws: Vec<f64> = rows.iter().map(|r| r.match_count as f64).collect();
        stats::weighted_pearson(&xs, &ys, &ws)
    };
    FeedbackCorrelation {
        conversations: rated.len(),
        r_strict: stats::pearson(&thumbs, &coded(CompletionPolicy::Strict)),
        r_half_credit: stats::pearson(&thumbs, &coded(CompletionPolicy::HalfCredit)),
        iwa_r_user: iwa_r(Side::User),
        iwa_r_ai: iwa_r(Side::Ai),
    }
}

/// Per-IWA share of matched conversations judged to save at least half the
/// time on the user's task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRate {
    pub iwa_id: IwaId,
    pub side: Side,
    pub speedup: u64,
    pub matched: u64,
    pub rate: f64,
}

pub fn speedup_rates(labels: &[ConversationLabels], side: Side) -> Vec<SpeedupRate> {
    let mut counts: BTreeMap<IwaId, (u64, u64)> = BTreeMap::new();
    for conv in labels {
        for iwa in conv.iwa_set(side) {
            let e = counts.entry(iwa.clone()).or_default();
            e.0 += u64::from(conv.completion.speedup_50pct);
            e.1 += 1;
        }
    }
    counts
        .into_iter()
        .map(|(iwa_id, (speedup, matched))| SpeedupRate {
            iwa_id,
            side,
            speedup,
            matched,
            rate: speedup as f64 / matched as f64,
        })
        .collect()
}

/// Run-level totals persisted next to the per-IWA tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub conversations: usize,
    pub matched_user: u64,
    pub matched_ai: u64,
    pub failed_blocks: usize,
    /// Conversations in the dataset feedback statistics were drawn from.
    pub feedback_conversations: usize,
    pub asymmetry: AsymmetrySummary,
    pub feedback: FeedbackCorrelation,
}

pub fn summarize(
    labels: &[ConversationLabels],
    feedback_labels: &[ConversationLabels],
    feedback_stats: &StatsTable,
) -> AggregateSummary {
    let (_, asym) = asymmetry(labels);
    AggregateSummary {
        conversations: labels.len(),
        matched_user: activity_shares(labels, Side::User).matched_conversations,
        matched_ai: activity_shares(labels, Side::Ai).matched_conversations,
        failed_blocks: labels.iter().map(|l| l.failed_blocks as usize).sum(),
        feedback_conversations: feedback_labels.len(),
        asymmetry: asym,
        feedback: feedback_correlation(feedback_labels, feedback_stats),
    }
}

pub fn write_records_csv<T: Serialize>(path: &Path, rows: &[T]) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}


#[cfg(test)]
mod tests {
    use super::fixtures::labels;
    use super::*;
    use crate::classify::ScopeLevel::{Complete, Limited, Minimal, Moderate, Significant};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn id(s: &str) -> IwaId {
        IwaId::new(s)
    }

    #[test]
    fn equal_split_shares() {
        let ls = vec![
            labels("1", &[("A", Moderate), ("B", Minimal)], &[], CompletionLevel::Complete, None),
            labels("2", &[("A", Moderate)], &[], CompletionLevel::Complete, None),
            labels("3", &[], &[], CompletionLevel::Complete, None),
        ];
        let s = activity_shares(&ls, Side::User);
        assert_abs_diff_eq!(s.get(&id("A")), 0.75);
        assert_abs_diff_eq!(s.get(&id("B")), 0.25);
        assert_eq!(s.matched_conversations, 2);
        assert!(activity_shares(&ls, Side::Ai).is_empty());
        assert!(activity_shares(&[], Side::User).shares.is_empty());
    }

    #[test]
    fn completion_policies() {
        let ls = vec![
            labels("1", &[("A", Moderate)], &[], CompletionLevel::Complete, None),
            labels("2", &[("A", Moderate)], &[], CompletionLevel::Partial, None),
            labels("3", &[("A", Moderate)], &[], CompletionLevel::NotComplete, None),
        ];
        assert_abs_diff_eq!(completion_rate(&ls, Side::User, &id("A"), CompletionPolicy::Strict).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(completion_rate(&ls, Side::User, &id("A"), CompletionPolicy::HalfCredit).unwrap(), 0.5);
        assert_eq!(completion_rate(&ls, Side::User, &id("Z"), CompletionPolicy::Strict), None);
    }

    #[test]
    fn scope_counts_from_cutoff() {
        let ls = vec![
            labels("1", &[("A", Minimal)], &[], CompletionLevel::Complete, None),
            labels("2", &[("A", Moderate)], &[], CompletionLevel::Complete, None),
            labels("3", &[("A", Significant)], &[], CompletionLevel::Complete, None),
        ];
        assert_abs_diff_eq!(scope_rate(&ls, Side::User, &id("A"), Moderate).unwrap(), 2.0 / 3.0);
        let limited = vec![labels("1", &[("A", Limited)], &[], CompletionLevel::Complete, None)];
        assert_eq!(scope_rate(&limited, Side::User, &id("A"), Moderate), Some(0.0));
    }

    #[test]
    fn feedback_tally_and_interval() {
        let mut ls = Vec::new();
        for (i, t) in [Thumbs::Up, Thumbs::Up, Thumbs::Up, Thumbs::Down].into_iter().enumerate() {
            ls.push(labels(&i.to_string(), &[("A", Moderate)], &[], CompletionLevel::Complete, Some(t)));
        }
        ls.push(labels("x", &[("A", Moderate)], &[], CompletionLevel::Complete, None));
        let cfg = MetricsConfig::default();
        let f = feedback_share(&ls, Side::User, &id("A"), &cfg).unwrap();
        assert_eq!((f.up, f.total), (3, 4));
        assert_abs_diff_eq!(f.share, 0.75);
        assert!(f.ci_low <= 0.75 && 0.75 <= f.ci_high);
        let downs: Vec<_> = (0..5)
            .map(|i| labels(&i.to_string(), &[("B", Moderate)], &[], CompletionLevel::Complete, Some(Thumbs::Down)))
            .collect();
        assert_eq!(feedback_share(&downs, Side::User, &id("B"), &cfg).unwrap().share, 0.0);
        let none = vec![labels("1", &[("C", Moderate)], &[], CompletionLevel::Complete, None)];
        assert!(feedback_share(&none, Side::User, &id("C"), &cfg).is_none());
    }

    #[test]
    fn bootstrap_is_seeded() {
        let a = bootstrap_proportion_ci(30, 100, 1000, 0.95, 7);
        assert_eq!(a, bootstrap_proportion_ci(30, 100, 1000, 0.95, 7));
        assert!(a.0 < 0.3 && a.1 > 0.3 && a.0 > 0.15 && a.1 < 0.45, "{a:?}");
    }

    #[test]
    fn jaccard_and_summary() {
        let ls = vec![
            labels("1", &[("A", Moderate), ("B", Moderate)], &[("B", Moderate), ("C", Moderate)], CompletionLevel::Complete, None),
            labels("2", &[("A", Moderate)], &[("A", Moderate)], CompletionLevel::Complete, None),
            labels("3", &[("A", Moderate)], &[("D", Moderate)], CompletionLevel::Complete, None),
            labels("4", &[], &[], CompletionLevel::Complete, None),
        ];
        let (records, summary) = asymmetry(&ls);
        assert_abs_diff_eq!(records[0].jaccard, 1.0 / 3.0);
        assert_eq!(records[1].jaccard, 1.0);
        assert!(records[2].disjoint && records[2].jaccard == 0.0);
        assert!(!records[3].disjoint);
        assert_eq!(summary.both_empty, 1);
        assert_abs_diff_eq!(summary.disjoint_fraction.unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(summary.below_half_fraction.unwrap(), 2.0 / 3.0);
    }

    #[test]
    fn ratios() {
        let r = side_ratio(&id("A"), 0.001, 0.0005, 0.0005).unwrap();
        assert_abs_diff_eq!(r.factor, 2.0);
        assert_eq!(r.dominant, Side::User);
        assert_eq!(side_ratio(&id("A"), 0.01, 0.01, 0.0005).unwrap().factor, 1.0);
        assert!(side_ratio(&id("A"), 0.0001, 0.0002, 0.0005).is_none());
    }

    #[test]
    fn gwa_rollup_combines_children() {
        use crate::taxonomy::fixtures::small_store;
        let store = small_store(vec![]);
        let ls = vec![
            labels("1", &[("I1", Moderate)], &[], CompletionLevel::Complete, Some(Thumbs::Up)),
            labels("2", &[("I2", Minimal)], &[], CompletionLevel::NotComplete, Some(Thumbs::Down)),
            labels("3", &[("I2", Complete)], &[], CompletionLevel::Complete, None),
            labels("4", &[("I3", Complete)], &[], CompletionLevel::Complete, None),
        ];
        let rows = iwa_stats(&ls, Side::User, &MetricsConfig::default());
        let g = gwa_stats(&rows, &store);
        let g1 = g.iter().find(|r| r.gwa_id.as_str() == "G1").unwrap();
        assert_abs_diff_eq!(g1.activity_share, 0.75);
        assert_eq!(g1.match_count, 3);
        assert_abs_diff_eq!(g1.completion_rate.unwrap(), 2.0 / 3.0);
        assert_abs_diff_eq!(g1.scope_rate.unwrap(), 2.0 / 3.0);
        assert_eq!((g1.feedback_up, g1.feedback_total), (1, 2));
    }

    #[test]
    fn stats_csv_round_trip() {
        let ls = vec![labels("1", &[("A", Moderate)], &[("B", Limited)], CompletionLevel::Partial, Some(Thumbs::Up))];
        let t = StatsTable::compute(&ls, &MetricsConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        t.write_csv(&p).unwrap();
        assert_eq!(StatsTable::read_csv(&p).unwrap(), t);
    }

    fn arb_labels() -> impl Strategy<Value = Vec<ConversationLabels>> {
        let one = (
            proptest::collection::btree_set(0u8..8, 0..4),
            proptest::collection::btree_set(0u8..8, 0..4),
            0u8..3,
            0u8..6,
            proptest::option::of(any::<bool>()),
        );
        proptest::collection::vec(one, 1..40).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (u, a, c, s, t))| {
                    let scope = ScopeLevel::ALL[usize::from(s.max(1))];
                    let names: Vec<String> = (0..8).map(|k| format!("I{k}")).collect();
                    let us: Vec<(&str, ScopeLevel)> = u.iter().map(|k| (names[*k as usize].as_str(), scope)).collect();
                    let as_: Vec<(&str, ScopeLevel)> = a.iter().map(|k| (names[*k as usize].as_str(), scope)).collect();
                    let level = [CompletionLevel::NotComplete, CompletionLevel::Partial, CompletionLevel::Complete][c as usize];
                    let thumbs = t.map(|b| if b { Thumbs::Up } else { Thumbs::Down });
                    labels(&format!("c{i}"), &us, &as_, level, thumbs)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn shares_sum_to_one_and_ignore_order(ls in arb_labels(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let cfg = MetricsConfig { bootstrap_resamples: 50, ..MetricsConfig::default() };
            for side in Side::BOTH {
                let s = activity_shares(&ls, side);
                if !s.is_empty() {
                    let total: f64 = s.shares.values().sum();
                    prop_assert!((total - 1.0).abs() < 1e-9);
                }
            }
            let mut shuffled = ls.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(StatsTable::compute(&ls, &cfg), StatsTable::compute(&shuffled, &cfg));
        }

        #[test]
        fn strict_never_exceeds_half_credit(ls in arb_labels()) {
            for k in 0..8 {
                let i = IwaId::new(format!("I{k}"));
                let strict = completion_rate(&ls, Side::User, &i, CompletionPolicy::Strict);
                let half = completion_rate(&ls, Side::User, &i, CompletionPolicy::HalfCredit);
                prop_assert_eq!(strict.is_some(), half.is_some());
                if let (Some(a), Some(b)) = (strict, half) {
                    prop_assert!(a <= b);
                }
            }
        }
    }
}
