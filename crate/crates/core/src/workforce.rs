//! Task weights, per-occupation IWA weights and workforce-wide IWA shares.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{GwaId, IwaId, SocCode};
use crate::taxonomy::{FrequencyCategory, OccupationRecord, TaskRating, TaxonomyStore};

#[derive(Debug, Error)]
pub enum WorkforceError {
    #[error("occupation {0} has no tasks mapped to any work activity")]
    EmptyWeights(SocCode),
    #[error("occupation {0} has zero total task weight")]
    ZeroWeight(SocCode),
    #[error("store is not SOC-merged")]
    NotMerged,
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// How tasks are weighted before propagating to IWAs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `2^importance × relevance`, falling back to uniform when an
    /// occupation has no ratings at all.
    #[default]
    OnetWeighted,
    /// Every task counts once.
    UniformTasks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationIwaWeight {
    pub soc_code: SocCode,
    pub iwa_id: IwaId,
    pub weight: f64,
}

pub fn task_weight(rating: &TaskRating) -> f64 {
    2f64.powf(rating.importance) * rating.relevance
}

/// Normalized IWA weights `w_ij` for one occupation, sorted by IWA id.
///
/// A task contributes its full weight to every IWA it reaches through its
/// DWAs. When some tasks are rated, unrated tasks are ignored; when none are,
/// every task weighs 1.
pub fn occupation_iwa_weights(
    store: &TaxonomyStore,
    occupation: &OccupationRecord,
    weighting: Weighting,
) -> Result<Vec<OccupationIwaWeight>, WorkforceError> {
    let any_rated = occupation.tasks.values().any(|t| t.rating.is_some());
    let mut totals: BTreeMap<IwaId, f64> = BTreeMap::new();
    for task in occupation.tasks.values() {
        let weight = match (weighting, any_rated, &task.rating) {
            (Weighting::UniformTasks, _, _) | (Weighting::OnetWeighted, false, _) => 1.0,
            (Weighting::OnetWeighted, true, Some(r)) => task_weight(r),
            (Weighting::OnetWeighted, true, None) => continue,
        };
        for iwa in store.task_iwas(task) {
            *totals.entry(iwa).or_default() += weight;
        }
    }
    if totals.is_empty() {
        return Err(WorkforceError::EmptyWeights(occupation.soc_code.clone()));
    }
    let sum: f64 = totals.values().sum();
    if !(sum > 0.0) {
        return Err(WorkforceError::ZeroWeight(occupation.soc_code.clone()));
    }
    Ok(totals
        .into_iter()
        .map(|(iwa_id, w)| OccupationIwaWeight {
            soc_code: occupation.soc_code.clone(),
            iwa_id,
            weight: w / sum,
        })
        .collect())
}

/// `w_ij` for every occupation, keyed by SOC code then IWA id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightTable {
    weights: BTreeMap<SocCode, BTreeMap<IwaId, f64>>,
}

impl WeightTable {
    /// Computes weights for every merged occupation. Occupations whose
    /// weights cannot be formed are returned alongside, not silently dropped.
    pub fn from_store(
        store: &TaxonomyStore,
        weighting: Weighting,
    ) -> Result<(Self, Vec<WorkforceError>), WorkforceError> {
        if !store.is_merged() {
            return Err(WorkforceError::NotMerged);
        }
        let mut table = WeightTable::default();
        let mut failures = Vec::new();
        for occ in store.occupations() {
            match occupation_iwa_weights(store, occ, weighting) {
                Ok(ws) => {
                    table.weights.insert(
                        occ.soc_code.clone(),
                        ws.into_iter().map(|w| (w.iwa_id, w.weight)).collect(),
                    );
                }
                Err(e) => {
                    log::warn!("{e}");
                    failures.push(e);
                }
            }
        }
        Ok((table, failures))
    }

    pub fn from_map(weights: BTreeMap<SocCode, BTreeMap<IwaId, f64>>) -> Self {
        Self { weights }
    }

    pub fn get(&self, soc: &SocCode) -> Option<&BTreeMap<IwaId, f64>> {
        self.weights.get(soc)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SocCode, &BTreeMap<IwaId, f64>)> {
        self.weights.iter()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Writes `soc_code,iwa_id,weight` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), WorkforceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["soc_code", "iwa_id", "weight"])?;
        for (soc, row) in &self.weights {
            for (iwa, weight) in row {
                w.serialize((soc.as_str(), iwa.as_str(), weight))?;
            }
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, WorkforceError> {
        let mut r = csv::Reader::from_reader(input);
        let mut weights: BTreeMap<SocCode, BTreeMap<IwaId, f64>> = BTreeMap::new();
        for rec in r.deserialize::<(String, String, f64)>() {
            let (soc, iwa, weight) = rec?;
            weights
                .entry(SocCode::new(soc))
                .or_default()
                .insert(IwaId::new(iwa), weight);
        }
        Ok(Self { weights })
    }
}

/// Expected annual occurrences of a task per worker:
/// `relevance × Σ share_k × count_k`. `None` without frequency data.
pub fn annual_task_frequency(rating: &TaskRating) -> Option<f64> {
    let freq = rating.frequency?;
    let per_worker: f64 = FrequencyCategory::ALL
        .iter()
        .map(|c| freq.share(*c) * c.annual_count())
        .sum();
    Some(rating.relevance * per_worker)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkforceShare {
    pub iwa_id: IwaId,
    /// Person-task events per year.
    pub annual_count: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwaWorkforceShare {
    pub gwa_id: GwaId,
    pub annual_count: f64,
    pub share: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkforceShares {
    pub iwa: Vec<WorkforceShare>,
    pub gwa: Vec<GwaWorkforceShare>,
    /// Rated tasks skipped for lack of frequency data.
    pub excluded_tasks: usize,
}

impl WorkforceShares {
    pub fn iwa_share(&self, iwa: &IwaId) -> Option<f64> {
        self.iwa.iter().find(|s| &s.iwa_id == iwa).map(|s| s.share)
    }

    pub fn gwa_share(&self, gwa: &GwaId) -> Option<f64> {
        self.gwa.iter().find(|s| &s.gwa_id == gwa).map(|s| s.share)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), WorkforceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iwa_id", "annual_count", "share"])?;
        for s in &self.iwa {
            w.serialize((s.iwa_id.as_str(), s.annual_count, s.share))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_gwa_csv<W: Write>(&self, out: W) -> Result<(), WorkforceError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["gwa_id", "annual_count", "share"])?;
        for s in &self.gwa {
            w.serialize((s.gwa_id.as_str(), s.annual_count, s.share))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Annual workforce counts per IWA, summed over occupations weighted by
/// employment, with GWA rollups. Occupations without employment are skipped.
pub fn workforce_shares(store: &TaxonomyStore) -> Result<WorkforceShares, WorkforceError> {
    if !store.is_merged() {
        return Err(WorkforceError::NotMerged);
    }
    let mut annual: BTreeMap<IwaId, f64> = BTreeMap::new();
    let mut excluded = 0usize;
    for occ in store.occupations() {
        let Some(employment) = occ.employment else {
            continue;
        };
        let mut per_iwa: BTreeMap<IwaId, f64> = BTreeMap::new();
        for task in occ.tasks.values() {
            let Some(rating) = &task.rating else {
                continue;
            };
            let Some(freq) = annual_task_frequency(rating) else {
                excluded += 1;
                continue;
            };
            for iwa in store.task_iwas(task) {
                *per_iwa.entry(iwa).or_default() += freq;
            }
        }
        for (iwa, count) in per_iwa {
            *annual.entry(iwa).or_default() += count * employment;
        }
    }
    if excluded > 0 {
        log::info!("{excluded} rated tasks lack frequency data and are excluded from workforce counts");
    }
    let total: f64 = annual.values().sum();
    let share = |count: f64| if total > 0.0 { count / total } else { 0.0 };
    let iwa: Vec<WorkforceShare> = annual
        .iter()
        .map(|(id, count)| WorkforceShare {
            iwa_id: id.clone(),
            annual_count: *count,
            share: share(*count),
        })
        .collect();
    let mut gwa_counts: BTreeMap<GwaId, f64> = BTreeMap::new();
    for s in &iwa {
        if let Ok(g) = store.rollup(&s.iwa_id) {
            *gwa_counts.entry(g.clone()).or_default() += s.annual_count;
        }
    }
    let gwa = gwa_counts
        .into_iter()
        .map(|(gwa_id, count)| GwaWorkforceShare {
            gwa_id,
            annual_count: count,
            share: share(count),
        })
        .collect();
    Ok(WorkforceShares {
        iwa,
        gwa,
        excluded_tasks: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::fixtures::*;
    use crate::taxonomy::{FrequencyDistribution, TaskRecord};
    use proptest::prelude::*;

    fn occupation(tasks: Vec<TaskRecord>, employment: Option<f64>) -> OccupationRecord {
        OccupationRecord {
            soc_code: SocCode::new("11-1011"),
            title: "t".into(),
            onet_soc_codes: vec![],
            tasks: tasks.into_iter().map(|t| (t.task_id.clone(), t)).collect(),
            employment,
            mean_wage: None,
            education_mode: None,
        }
    }

    fn merged_store(occs: Vec<OccupationRecord>) -> TaxonomyStore {
        let mut s = small_store(vec![]);
        s.merged = true;
        for o in occs {
            s.occupations.insert(o.soc_code.clone(), o);
        }
        s
    }

    fn freq(pairs: &[(FrequencyCategory, f64)]) -> FrequencyDistribution {
        let mut d = FrequencyDistribution::default();
        for (c, s) in pairs {
            d.set(*c, *s);
        }
        d
    }

    #[test]
    fn task_weight_formula() {
        assert!((task_weight(&rating(4.0, 0.8)) - 12.8).abs() < 1e-12);
        assert_eq!(task_weight(&rating(1.0, 0.0)), 0.0);
        assert_eq!(task_weight(&rating(5.0, 1.0)), 32.0);
    }

    #[test]
    fn single_task_single_iwa_gets_full_weight() {
        let occ = occupation(vec![task("1", "x", &["D1"], Some(rating(3.0, 0.5)))], None);
        let store = small_store(vec![]);
        let ws = occupation_iwa_weights(&store, &occ, Weighting::OnetWeighted).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].weight, 1.0);
    }

    #[test]
    fn weights_normalize_across_iwas() {
        // Task weights 2 * 1.5 = 3 and 2 * 0.5 = 1.
        let occ = occupation(
            vec![
                task("1", "x", &["D1"], Some(rating(1.0, 1.5))),
                task("2", "x", &["D2"], Some(rating(1.0, 0.5))),
            ],
            None,
        );
        let store = small_store(vec![]);
        let ws = occupation_iwa_weights(&store, &occ, Weighting::OnetWeighted).unwrap();
        assert!((ws[0].weight - 0.75).abs() < 1e-12);
        assert!((ws[1].weight - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unrated_tasks_ignored_when_any_rated() {
        let occ = occupation(
            vec![
                task("1", "x", &["D1"], Some(rating(2.0, 1.0))),
                task("2", "x", &["D2"], None),
            ],
            None,
        );
        let store = small_store(vec![]);
        let ws = occupation_iwa_weights(&store, &occ, Weighting::OnetWeighted).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].iwa_id, IwaId::new("I1"));
    }

    #[test]
    fn no_ratings_means_uniform_task_weights() {
        let occ = occupation(
            vec![
                task("1", "x", &["D1"], None),
                task("2", "x", &["D3", "D4"], None),
                task("3", "x", &["D3"], None),
            ],
            None,
        );
        let store = small_store(vec![]);
        let ws = occupation_iwa_weights(&store, &occ, Weighting::OnetWeighted).unwrap();
        // I1 gets task 1, I3 gets tasks 2 and 3 (task 2 counted once).
        assert!((ws[0].weight - 1.0 / 3.0).abs() < 1e-12);
        assert!((ws[1].weight - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tasks_without_dwas_are_an_error() {
        let occ = occupation(vec![task("1", "x", &[], Some(rating(2.0, 1.0)))], None);
        let store = small_store(vec![]);
        assert!(matches!(
            occupation_iwa_weights(&store, &occ, Weighting::OnetWeighted),
            Err(WorkforceError::EmptyWeights(_))
        ));
    }

    #[test]
    fn annual_frequency_table() {
        let mut r = rating(3.0, 1.0);
        r.frequency = Some(freq(&[(FrequencyCategory::Daily, 1.0)]));
        assert_eq!(annual_task_frequency(&r), Some(260.0));
        r.frequency = Some(freq(&[
            (FrequencyCategory::Daily, 0.5),
            (FrequencyCategory::HourlyOrMore, 0.5),
        ]));
        assert_eq!(annual_task_frequency(&r), Some(1170.0));
        r.relevance = 0.0;
        assert_eq!(annual_task_frequency(&r), Some(0.0));
        r.frequency = None;
        assert_eq!(annual_task_frequency(&r), None);
    }

    #[test]
    fn toy_workforce_share() {
        let mut r = rating(3.0, 1.0);
        r.frequency = Some(freq(&[(FrequencyCategory::Daily, 1.0)]));
        let occ = occupation(vec![task("1", "x", &["D1"], Some(r))], Some(10.0));
        let shares = workforce_shares(&merged_store(vec![occ])).unwrap();
        assert_eq!(shares.iwa.len(), 1);
        assert_eq!(shares.iwa[0].annual_count, 2600.0);
        assert_eq!(shares.iwa[0].share, 1.0);
        assert_eq!(shares.gwa_share(&GwaId::new("G1")), Some(1.0));
    }

    #[test]
    fn shares_follow_counts() {
        let mut r1 = rating(3.0, 1.0);
        r1.frequency = Some(freq(&[(FrequencyCategory::Daily, 1.0)]));
        let mut r2 = rating(3.0, 1.0);
        r2.frequency = Some(freq(&[(FrequencyCategory::MoreThanWeekly, 0.5)]));
        // Per worker 150 and 50 events a year; employment 2 gives 300 and 100.
        let occ = occupation(
            vec![
                task("1", "x", &["D1"], Some(TaskRating { relevance: 150.0 / 260.0, ..r1 })),
                task("2", "x", &["D3"], Some(TaskRating { relevance: 50.0 / 52.0, ..r2 })),
            ],
            Some(2.0),
        );
        let shares = workforce_shares(&merged_store(vec![occ])).unwrap();
        assert!((shares.iwa_share(&IwaId::new("I1")).unwrap() - 0.75).abs() < 1e-12);
        assert!((shares.iwa_share(&IwaId::new("I3")).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn weight_table_csv_round_trip() {
        let occ = occupation(
            vec![
                task("1", "x", &["D1"], Some(rating(2.5, 0.7))),
                task("2", "x", &["D3"], Some(rating(4.1, 0.3))),
            ],
            None,
        );
        let (table, failures) =
            WeightTable::from_store(&merged_store(vec![occ]), Weighting::OnetWeighted).unwrap();
        assert!(failures.is_empty());
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert_eq!(WeightTable::read_csv(buf.as_slice()).unwrap(), table);
    }

    fn rated_task_strategy() -> impl Strategy<Value = Vec<(f64, f64, usize)>> {
        prop::collection::vec((1.0f64..=5.0, 0.01f64..=1.0, 0usize..4), 1..12)
    }

    proptest! {
        #[test]
        fn weights_sum_to_one_and_ignore_scale(tasks in rated_task_strategy(), k in 0.01f64..100.0) {
            let dwas = ["D1", "D2", "D3", "D4"];
            let build = |scale: f64| occupation(
                tasks
                    .iter()
                    .enumerate()
                    .map(|(i, (imp, rel, d))| {
                        task(&i.to_string(), "x", &[dwas[*d]], Some(rating(*imp, (*rel * scale).min(1e9))))
                    })
                    .collect(),
                None,
            );
            let store = small_store(vec![]);
            let base = occupation_iwa_weights(&store, &build(1.0), Weighting::OnetWeighted).unwrap();
            let sum: f64 = base.iter().map(|w| w.weight).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(base.iter().all(|w| w.weight >= 0.0));
            // Scaling relevance scales every task weight by k.
            let scaled = occupation_iwa_weights(&store, &build(k), Weighting::OnetWeighted).unwrap();
            prop_assert_eq!(base.len(), scaled.len());
            for (a, b) in base.iter().zip(&scaled) {
                prop_assert!((a.weight - b.weight).abs() < 1e-12);
            }
        }

        #[test]
        fn shares_invariant_to_employment_units(
            emps in prop::collection::vec(1.0f64..1e6, 2),
            k in 0.001f64..1000.0,
        ) {
            let mut r = rating(3.0, 0.8);
            r.frequency = Some(freq(&[(FrequencyCategory::Daily, 0.6), (FrequencyCategory::YearlyOrLess, 0.4)]));
            let mk = |code: &str, dwa: &str, emp: f64| OccupationRecord {
                soc_code: SocCode::new(code),
                ..occupation(vec![task(code, "x", &[dwa, "D3"], Some(r))], Some(emp))
            };
            let a = workforce_shares(&merged_store(vec![mk("11-1011", "D1", emps[0]), mk("11-1021", "D2", emps[1])])).unwrap();
            let b = workforce_shares(&merged_store(vec![mk("11-1011", "D1", emps[0] * k), mk("11-1021", "D2", emps[1] * k)])).unwrap();
            let total: f64 = a.iwa.iter().map(|s| s.share).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            for (x, y) in a.iwa.iter().zip(&b.iwa) {
                prop_assert!((x.share - y.share).abs() < 1e-12);
            }
        }

        #[test]
        fn annual_frequency_monotone_in_higher_category(
            shares in prop::collection::vec(0.0f64..0.1, 7),
            lo in 0usize..6,
            bump in 0.0f64..0.3,
        ) {
            let hi = lo + 1;
            let mut d = FrequencyDistribution::default();
            for (c, s) in FrequencyCategory::ALL.iter().zip(&shares) {
                d.set(*c, *s);
            }
            let base = TaskRating { importance: 3.0, relevance: 0.9, frequency: Some(d) };
            // Moving mass from a lower to a higher category never lowers the count.
            let mut moved = d;
            let take = bump.min(d.0[lo]);
            moved.0[lo] -= take;
            moved.0[hi] += take;
            let after = TaskRating { frequency: Some(moved), ..base };
            prop_assert!(annual_task_frequency(&after).unwrap() >= annual_task_frequency(&base).unwrap() - 1e-9);
        }
    }
}
