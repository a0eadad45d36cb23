//! Agreement between human annotators and the classifier.
//!
//! Each annotated conversation side gets 20 candidate IWAs: the 10 ranked
//! most similar plus 10 drawn uniformly from ranks 11 to 100, shuffled
//! together. Agreement is Cohen's kappa over the pooled binary decisions.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{ConversationLabels, Side};
use crate::ids::IwaId;

pub const TOP_CANDIDATES: usize = 10;
pub const SAMPLED_CANDIDATES: usize = 10;
pub const SAMPLE_POOL_END: usize = 100;

/// Name under which pipeline decisions appear next to human raters.
pub const PIPELINE_RATER: &str = "pipeline";

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("conversation {conversation_id} ({side}): ranking has {len} entries, need at least {}", TOP_CANDIDATES + SAMPLED_CANDIDATES)]
    ShortRanking { conversation_id: String, side: Side, len: usize },
    #[error("annotation file: {0}")]
    Csv(#[from] csv::Error),
    #[error("annotation file row {row}: {message}")]
    BadRow { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub conversation_id: String,
    pub side: Side,
    pub candidates: Vec<IwaId>,
    pub seed: u64,
    /// IWAs each rater marked as matching.
    pub rater_labels: BTreeMap<String, BTreeSet<IwaId>>,
}

/// Stage-one ranking of the full catalog for one conversation side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub conversation_id: String,
    pub side: Side,
    pub ranked: Vec<IwaId>,
}

fn set_seed(seed: u64, conversation_id: &str, side: Side) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.rotate_left(17);
    for b in conversation_id.bytes().chain([0]).chain(side.as_str().bytes()) {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Candidate sets for annotation: the top ranks plus a sample from the rest
/// of the pool, which ends early for catalogs shorter than the pool. Each set
/// depends only on its own ranking and the seed.
pub fn build_annotation_sets(rankings: &[Ranking], seed: u64) -> Result<Vec<AnnotationSet>, ValidateError> {
    rankings
        .iter()
        .map(|r| {
            if r.ranked.len() < TOP_CANDIDATES + SAMPLED_CANDIDATES {
                return Err(ValidateError::ShortRanking {
                    conversation_id: r.conversation_id.clone(),
                    side: r.side,
                    len: r.ranked.len(),
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(set_seed(seed, &r.conversation_id, r.side));
            let pool = &r.ranked[TOP_CANDIDATES..r.ranked.len().min(SAMPLE_POOL_END)];
            let mut candidates: Vec<IwaId> = r.ranked[..TOP_CANDIDATES].to_vec();
            let mut picks = index::sample(&mut rng, pool.len(), SAMPLED_CANDIDATES).into_vec();
            picks.sort_unstable();
            candidates.extend(picks.into_iter().map(|i| pool[i].clone()));
            candidates.shuffle(&mut rng);
            Ok(AnnotationSet {
                conversation_id: r.conversation_id.clone(),
                side: r.side,
                candidates,
                seed,
                rater_labels: BTreeMap::new(),
            })
        })
        .collect()
}

/// 2×2 counts indexed `[a][b]` with 1 for a match.
pub type Contingency = [[u64; 2]; 2];

pub fn contingency(a: &[bool], b: &[bool]) -> Contingency {
    assert_eq!(a.len(), b.len(), "raters labeled different numbers of decisions");
    let mut t = [[0u64; 2]; 2];
    for (x, y) in a.iter().zip(b) {
        t[usize::from(*x)][usize::from(*y)] += 1;
    }
    t
}

/// Observed agreement and kappa; kappa is absent when chance agreement is 1.
pub fn kappa_from_table(t: &Contingency) -> (f64, Option<f64>) {
    let n = (t[0][0] + t[0][1] + t[1][0] + t[1][1]) as f64;
    if n == 0.0 {
        return (f64::NAN, None);
    }
    let p_o = (t[0][0] + t[1][1]) as f64 / n;
    let a1 = (t[1][0] + t[1][1]) as f64 / n;
    let b1 = (t[0][1] + t[1][1]) as f64 / n;
    let p_e = a1 * b1 + (1.0 - a1) * (1.0 - b1);
    if p_e >= 1.0 {
        return (p_o, None);
    }
    (p_o, Some((p_o - p_e) / (1.0 - p_e)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub rater_a: String,
    pub rater_b: String,
    pub side: Side,
    pub kappa: Option<f64>,
    /// Equals observed agreement.
    pub accuracy: f64,
    pub n_decisions: u64,
}

fn decisions<'a>(sets: impl Iterator<Item = &'a AnnotationSet>, rater: &str) -> Vec<bool> {
    sets.flat_map(|s| {
        let chosen = s.rater_labels.get(rater);
        s.candidates.iter().map(move |c| chosen.is_some_and(|set| set.contains(c)))
    })
    .collect()
}

/// Kappa between two raters over every candidate decision on `side`,
/// counting only sets both raters labeled.
pub fn cohens_kappa(sets: &[AnnotationSet], side: Side, rater_a: &str, rater_b: &str) -> KappaReport {
    let both: Vec<&AnnotationSet> = sets
        .iter()
        .filter(|s| s.side == side && s.rater_labels.contains_key(rater_a) && s.rater_labels.contains_key(rater_b))
        .collect();
    let a = decisions(both.iter().copied(), rater_a);
    let b = decisions(both.iter().copied(), rater_b);
    let (p_o, kappa) = kappa_from_table(&contingency(&a, &b));
    KappaReport {
        rater_a: rater_a.into(),
        rater_b: rater_b.into(),
        side,
        kappa,
        accuracy: p_o,
        n_decisions: a.len() as u64,
    }
}

pub fn raters(sets: &[AnnotationSet]) -> BTreeSet<String> {
    sets.iter().flat_map(|s| s.rater_labels.keys().cloned()).collect()
}

/// Kappa for every rater pair on both sides.
pub fn pairwise_kappas(sets: &[AnnotationSet]) -> Vec<KappaReport> {
    let names: Vec<String> = raters(sets).into_iter().filter(|r| r != PIPELINE_RATER).collect();
    let mut out = Vec::new();
    for side in Side::BOTH {
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                out.push(cohens_kappa(sets, side, a, b));
            }
        }
    }
    out
}

/// Adds the pipeline's decisions, restricted to each set's candidates, as
/// another rater.
pub fn with_pipeline(sets: &[AnnotationSet], labels: &[ConversationLabels]) -> Vec<AnnotationSet> {
    let by_id: BTreeMap<&str, &ConversationLabels> = labels.iter().map(|l| (l.conversation_id.as_str(), l)).collect();
    sets.iter()
        .map(|s| {
            let mut s = s.clone();
            if let Some(l) = by_id.get(s.conversation_id.as_str()) {
                let matched = l.iwa_set(s.side);
                let chosen = s.candidates.iter().filter(|c| matched.contains(c)).cloned().collect();
                s.rater_labels.insert(PIPELINE_RATER.into(), chosen);
            }
            s
        })
        .collect()
}

/// Pipeline against each human rater, per side.
pub fn pipeline_agreement(sets: &[AnnotationSet], labels: &[ConversationLabels]) -> Vec<KappaReport> {
    let merged = with_pipeline(sets, labels);
    let humans: Vec<String> = raters(sets).into_iter().filter(|r| r != PIPELINE_RATER).collect();
    Side::BOTH
        .iter()
        .flat_map(|side| humans.iter().map(|h| cohens_kappa(&merged, *side, PIPELINE_RATER, h)).collect::<Vec<_>>())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationKappa {
    pub conversation_id: String,
    pub side: Side,
    pub rater_a: String,
    pub rater_b: String,
    pub kappa: Option<f64>,
}

/// Kappa within each set, for looking at the spread behind pooled numbers.
pub fn per_conversation_kappa(sets: &[AnnotationSet], rater_a: &str, rater_b: &str) -> Vec<ConversationKappa> {
    sets.iter()
        .filter(|s| s.rater_labels.contains_key(rater_a) && s.rater_labels.contains_key(rater_b))
        .map(|s| {
            let one = std::slice::from_ref(s);
            let a = decisions(one.iter(), rater_a);
            let b = decisions(one.iter(), rater_b);
            ConversationKappa {
                conversation_id: s.conversation_id.clone(),
                side: s.side,
                rater_a: rater_a.into(),
                rater_b: rater_b.into(),
                kappa: kappa_from_table(&contingency(&a, &b)).1,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub conversation_id: String,
    pub side: Side,
    pub iwa_id: IwaId,
    pub rater: String,
    pub label: u8,
    pub seed: u64,
}

/// One row per (set, candidate, rater).
pub fn annotation_rows(sets: &[AnnotationSet]) -> Vec<AnnotationRow> {
    let mut rows = Vec::new();
    for s in sets {
        for (rater, chosen) in &s.rater_labels {
            for c in &s.candidates {
                rows.push(AnnotationRow {
                    conversation_id: s.conversation_id.clone(),
                    side: s.side,
                    iwa_id: c.clone(),
                    rater: rater.clone(),
                    label: u8::from(chosen.contains(c)),
                    seed: s.seed,
                });
            }
        }
    }
    rows
}

pub fn write_annotations(path: &Path, sets: &[AnnotationSet]) -> Result<(), ValidateError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in annotation_rows(sets) {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Rebuilds sets from annotation rows. Candidates keep first-seen order.
pub fn sets_from_rows(rows: &[AnnotationRow]) -> Result<Vec<AnnotationSet>, ValidateError> {
    let mut order: Vec<(String, Side)> = Vec::new();
    let mut sets: BTreeMap<(String, Side), AnnotationSet> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        if r.label > 1 {
            return Err(ValidateError::BadRow { row: i + 2, message: format!("label must be 0 or 1, got {}", r.label) });
        }
        let key = (r.conversation_id.clone(), r.side);
        let set = sets.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            AnnotationSet {
                conversation_id: r.conversation_id.clone(),
                side: r.side,
                candidates: Vec::new(),
                seed: r.seed,
                rater_labels: BTreeMap::new(),
            }
        });
        if !set.candidates.contains(&r.iwa_id) {
            set.candidates.push(r.iwa_id.clone());
        }
        let chosen = set.rater_labels.entry(r.rater.clone()).or_default();
        if r.label == 1 {
            chosen.insert(r.iwa_id.clone());
        }
    }
    Ok(order.into_iter().filter_map(|k| sets.remove(&k)).collect())
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationSet>, ValidateError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<AnnotationRow>, _>>()?;
    sets_from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn ranking(id: &str, n: usize) -> Ranking {
        Ranking {
            conversation_id: id.into(),
            side: Side::User,
            ranked: (0..n).map(|i| IwaId::new(format!("I{i:03}"))).collect(),
        }
    }

    #[test]
    fn sets_are_deterministic_and_drawn_from_the_right_ranks() {
        let rs: Vec<Ranking> = (0..195).map(|i| ranking(&format!("c{i}"), 332)).collect();
        let a = build_annotation_sets(&rs, 42).unwrap();
        assert_eq!(a, build_annotation_sets(&rs, 42).unwrap());
        assert_eq!(a.len(), 195);
        for s in &a {
            assert_eq!(s.candidates.len(), 20);
            let ranks: BTreeSet<usize> = s.candidates.iter().map(|c| c.as_str()[1..].parse().unwrap()).collect();
            assert_eq!(ranks.len(), 20);
            assert_eq!(ranks.iter().filter(|r| **r < 10).count(), 10);
            assert!(ranks.iter().all(|r| *r < 100));
        }
        assert_ne!(a[0].candidates, build_annotation_sets(&rs, 43).unwrap()[0].candidates);
        assert!(build_annotation_sets(&[ranking("c", 19)], 1).is_err());
        let short = build_annotation_sets(&[ranking("c", 36)], 1).unwrap();
        let ranks: BTreeSet<usize> = short[0].candidates.iter().map(|c| c.as_str()[1..].parse().unwrap()).collect();
        assert_eq!(ranks.len(), 20);
        assert!(ranks.iter().all(|r| *r < 36));
    }

    #[test]
    fn kappa_closed_form() {
        let t: Contingency = [[65, 10], [5, 20]];
        let (p_o, k) = kappa_from_table(&t);
        assert_abs_diff_eq!(p_o, 0.85);
        // p_e = 0.25 * 0.30 + 0.75 * 0.70 = 0.6
        assert_abs_diff_eq!(k.unwrap(), (0.85 - 0.6) / 0.4, epsilon = 1e-12);
    }

    #[test]
    fn kappa_degenerate_and_perfect() {
        let a = [true, false, true, false];
        let (_, k) = kappa_from_table(&contingency(&a, &a));
        assert_eq!(k, Some(1.0));
        let none = [false; 5];
        let (p_o, k) = kappa_from_table(&contingency(&none, &none));
        assert_eq!((p_o, k), (1.0, None));
    }

    #[test]
    fn independent_raters_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<bool> = (0..20_000).map(|_| rng.random_bool(0.5)).collect();
        let b: Vec<bool> = (0..20_000).map(|_| rng.random_bool(0.5)).collect();
        let k = kappa_from_table(&contingency(&a, &b)).1.unwrap();
        assert!(k.abs() < 0.05, "{k}");
    }

    #[test]
    fn pooled_kappa_symmetric_and_pipeline_joins() {
        let mut sets = build_annotation_sets(&[ranking("c1", 120), ranking("c2", 120)], 5).unwrap();
        for (i, s) in sets.iter_mut().enumerate() {
            s.rater_labels.insert("r1".into(), s.candidates[..2 + i].iter().cloned().collect());
            s.rater_labels.insert("r2".into(), s.candidates[1..4].iter().cloned().collect());
        }
        let ab = cohens_kappa(&sets, Side::User, "r1", "r2");
        let ba = cohens_kappa(&sets, Side::User, "r2", "r1");
        assert_eq!(ab.kappa, ba.kappa);
        assert_eq!(ab.n_decisions, 40);

        use crate::metrics::fixtures::labels;
        use crate::classify::{CompletionLevel, ScopeLevel};
        let pipe: Vec<ConversationLabels> = sets
            .iter()
            .map(|s| {
                let chosen: Vec<(&str, ScopeLevel)> =
                    s.rater_labels["r1"].iter().map(|c| (c.as_str(), ScopeLevel::Moderate)).collect();
                labels(&s.conversation_id, &chosen, &[], CompletionLevel::Complete, None)
            })
            .collect();
        let agree = pipeline_agreement(&sets, &pipe);
        let vs_r1 = agree.iter().find(|r| r.side == Side::User && r.rater_b == "r1").unwrap();
        assert_eq!((vs_r1.kappa, vs_r1.accuracy), (Some(1.0), 1.0));
        assert_eq!(pairwise_kappas(&sets).len(), 2);
        assert_eq!(per_conversation_kappa(&sets, "r1", "r2").len(), 2);
    }

    #[test]
    fn annotation_csv_round_trip() {
        let mut sets = build_annotation_sets(&[ranking("c1", 100)], 3).unwrap();
        let chosen: BTreeSet<IwaId> = sets[0].candidates[..3].iter().cloned().collect();
        sets[0].rater_labels.insert("alice".into(), chosen);
        sets[0].rater_labels.insert("bob".into(), BTreeSet::new());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        write_annotations(&p, &sets).unwrap();
        assert_eq!(read_annotations(&p).unwrap(), sets);
    }
}
