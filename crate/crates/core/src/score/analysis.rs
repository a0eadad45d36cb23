//! Analyses built on occupation scores: group rollups, threshold sweeps,
//! external comparisons and socioeconomic breakdowns.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{applicability, is_covered, ApplicabilityScore, FactorMap, ScoreConfig, ScoreError, ScoreTable};
use crate::classify::Side;
use crate::ids::SocCode;
use crate::stats::{self, BoxStats, TTest};
use crate::table::{cell, parse_number, DelimitedTable};
use crate::taxonomy::EducationLevel;
use crate::workforce::WeightTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupLevel {
    Major,
    Minor,
}

impl GroupLevel {
    pub fn code_of(self, soc: &SocCode) -> String {
        match self {
            GroupLevel::Major => format!("{}-0000", soc.major_group()),
            GroupLevel::Minor => format!("{}000", soc.minor_group()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub group_code: String,
    pub title: String,
    pub occupations: usize,
    pub employment: f64,
    pub coverage: f64,
    pub completion: Option<f64>,
    pub scope: Option<f64>,
    pub a_user: f64,
    pub a_ai: f64,
    pub a: f64,
}

fn weighted_opt(pairs: &[(Option<f64>, f64)]) -> Option<f64> {
    let (xs, ws): (Vec<f64>, Vec<f64>) = pairs.iter().filter_map(|(x, w)| x.map(|x| (x, *w))).unzip();
    stats::weighted_mean(&xs, &ws)
}

/// Employment-weighted means per SOC group. Occupations without employment
/// carry no weight and are left out.
pub fn group_rollup(
    scores: &[ApplicabilityScore],
    level: GroupLevel,
    title_of: impl Fn(&str) -> Option<String>,
) -> Vec<GroupScore> {
    let mut groups: BTreeMap<String, Vec<&ApplicabilityScore>> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.employment.is_some_and(|e| e > 0.0)) {
        groups.entry(level.code_of(&s.soc_code)).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(code, members)| {
            let ws: Vec<f64> = members.iter().map(|s| s.employment.unwrap_or(0.0)).collect();
            let mean = |get: fn(&ApplicabilityScore) -> f64| {
                let xs: Vec<f64> = members.iter().map(|s| get(s)).collect();
                stats::weighted_mean(&xs, &ws).unwrap_or(0.0)
            };
            let mean_opt = |get: fn(&ApplicabilityScore) -> Option<f64>| {
                let pairs: Vec<(Option<f64>, f64)> = members.iter().zip(&ws).map(|(s, w)| (get(s), *w)).collect();
                weighted_opt(&pairs)
            };
            GroupScore {
                title: title_of(&code).unwrap_or_default(),
                group_code: code,
                occupations: members.len(),
                employment: ws.iter().sum(),
                coverage: mean(|s| s.coverage),
                completion: mean_opt(|s| s.completion),
                scope: mean_opt(|s| s.scope),
                a_user: mean(|s| s.a_user),
                a_ai: mean(|s| s.a_ai),
                a: mean(|s| s.a),
            }
        })
        .collect()
}

/// Employment share of workers with at least `depth` of their weighted work
/// in covered IWAs, for each threshold (rows) and depth (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMatrix {
    pub side: Side,
    pub thresholds: Vec<f64>,
    pub depths: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

pub const DEPTH_TOLERANCE: f64 = 1e-12;

pub fn coverage_depth_curve(
    weights: &WeightTable,
    factors: &FactorMap,
    employment: &BTreeMap<SocCode, f64>,
    side: Side,
    thresholds: &[f64],
    depths: &[f64],
) -> DepthMatrix {
    let workers: Vec<(&BTreeMap<_, f64>, f64)> = weights
        .iter()
        .filter_map(|(soc, w)| employment.get(soc).filter(|e| **e > 0.0).map(|e| (w, *e)))
        .collect();
    let total: f64 = workers.iter().map(|(_, e)| e).sum();
    let values = thresholds
        .iter()
        .map(|&t| {
            let covered: Vec<(f64, f64)> = workers
                .iter()
                .map(|(w, e)| {
                    let c: f64 = w
                        .iter()
                        .filter(|(iwa, _)| factors.get(*iwa).is_some_and(|f| is_covered(f, t)))
                        .map(|(_, x)| x)
                        .sum();
                    (c, *e)
                })
                .collect();
            depths
                .iter()
                .map(|&x| {
                    if total <= 0.0 {
                        return 0.0;
                    }
                    covered.iter().filter(|(c, _)| *c >= x - DEPTH_TOLERANCE).map(|(_, e)| e).sum::<f64>() / total
                })
                .collect()
        })
        .collect();
    DepthMatrix { side, thresholds: thresholds.to_vec(), depths: depths.to_vec(), values }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub threshold: f64,
    pub reference_threshold: f64,
    pub occupations: usize,
    pub spearman: Option<f64>,
    pub pearson: Option<f64>,
}

/// Correlation of overall scores at each threshold with scores at the
/// configured reference threshold, across occupations.
pub fn threshold_robustness(
    weights: &WeightTable,
    user: &FactorMap,
    ai: &FactorMap,
    config: &ScoreConfig,
    thresholds: &[f64],
) -> Vec<RobustnessRow> {
    let scores_at = |t: f64| -> Vec<f64> {
        let cfg = config.with_threshold(t);
        weights.iter().map(|(soc, w)| applicability(soc, w, user, ai, &cfg).a).collect()
    };
    let reference = scores_at(config.coverage_threshold);
    thresholds
        .iter()
        .map(|&t| {
            let s = scores_at(t);
            // Identical score vectors agree perfectly even when constant.
            let same = s == reference && s.len() >= 2;
            RobustnessRow {
                threshold: t,
                reference_threshold: config.coverage_threshold,
                occupations: s.len(),
                spearman: if same { Some(1.0) } else { stats::spearman(&s, &reference) },
                pearson: if same { Some(1.0) } else { stats::pearson(&s, &reference) },
            }
        })
        .collect()
}

/// Reads a two-column `soc_code,e1` table.
pub fn read_exposures(path: &Path) -> Result<BTreeMap<SocCode, f64>, ScoreError> {
    let table = DelimitedTable::read_csv(path).map_err(|e| ScoreError::Config(e.to_string()))?;
    let soc = table
        .require(&["soc_code", "soc", "O*NET-SOC Code", "OCC_CODE"])
        .map_err(|e| ScoreError::Config(e.to_string()))?;
    let e1 = table.require(&["e1", "exposure"]).map_err(|e| ScoreError::Config(e.to_string()))?;
    let mut out = BTreeMap::new();
    for row in table.rows() {
        let code = SocCode::from_onet_soc(cell(row, soc));
        match parse_number(cell(row, e1)) {
            Some(v) if (0.0..=1.0).contains(&v) => {
                out.insert(code, v);
            }
            other => log::warn!("exposure row {code}: unusable value {other:?}"),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPoint {
    pub soc_code: SocCode,
    pub title: String,
    pub score: f64,
    pub e1: f64,
    pub employment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalComparison {
    pub points: Vec<ExternalPoint>,
    pub r_occupation: Option<f64>,
    pub r_major_group: Option<f64>,
    pub major_groups: usize,
}

/// Employment-weighted correlation of scores with an external exposure
/// measure, by occupation and by major group.
pub fn compare_external(scores: &[ApplicabilityScore], exposures: &BTreeMap<SocCode, f64>) -> ExternalComparison {
    let points: Vec<ExternalPoint> = scores
        .iter()
        .filter_map(|s| {
            let e1 = *exposures.get(&s.soc_code)?;
            let employment = s.employment.filter(|e| *e > 0.0)?;
            Some(ExternalPoint { soc_code: s.soc_code.clone(), title: s.title.clone(), score: s.a, e1, employment })
        })
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.score).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.e1).collect();
    let ws: Vec<f64> = points.iter().map(|p| p.employment).collect();
    let r_occupation = stats::weighted_pearson(&xs, &ys, &ws);

    let mut groups: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for p in &points {
        let g = groups.entry(p.soc_code.major_group()).or_default();
        g.0 += p.score * p.employment;
        g.1 += p.e1 * p.employment;
        g.2 += p.employment;
    }
    let gx: Vec<f64> = groups.values().map(|g| g.0 / g.2).collect();
    let gy: Vec<f64> = groups.values().map(|g| g.1 / g.2).collect();
    let gw: Vec<f64> = groups.values().map(|g| g.2).collect();
    ExternalComparison {
        r_major_group: stats::weighted_pearson(&gx, &gy, &gw),
        major_groups: groups.len(),
        r_occupation,
        points,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageCorrelation {
    pub score: String,
    pub weighted: Option<f64>,
    pub unweighted: Option<f64>,
    pub weighted_excluding_top_decile: Option<f64>,
    pub unweighted_excluding_top_decile: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WageBin {
    pub bin: usize,
    pub occupations: usize,
    pub employment: f64,
    pub mean_wage: f64,
    pub a: f64,
    pub a_user: f64,
    pub a_ai: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EducationGroup {
    pub level: EducationLevel,
    pub label: String,
    pub occupations: usize,
    pub employment: f64,
    pub mean_a: f64,
    pub mean_a_user: f64,
    pub mean_a_ai: f64,
    pub box_a: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Socioeconomic {
    pub wage_correlations: Vec<WageCorrelation>,
    pub wage_bins: Vec<WageBin>,
    pub education: Vec<EducationGroup>,
    /// Bachelor's degree against all lower modal requirements.
    pub bachelors_vs_below: Option<TTest>,
    pub top_decile_wage_cutoff: Option<f64>,
}

pub const WAGE_BINS: usize = 20;

pub fn socioeconomic(scores: &[ApplicabilityScore]) -> Socioeconomic {
    let with_wage: Vec<&ApplicabilityScore> = scores
        .iter()
        .filter(|s| s.mean_wage.is_some() && s.employment.is_some_and(|e| e > 0.0))
        .collect();
    let wages: Vec<f64> = with_wage.iter().filter_map(|s| s.mean_wage).collect();
    let emp: Vec<f64> = with_wage.iter().filter_map(|s| s.employment).collect();
    let cutoff = stats::weighted_quantile(&wages, &emp, 0.9);
    let keep: Vec<bool> = wages.iter().map(|w| cutoff.is_none_or(|c| *w <= c)).collect();
    let sub = |xs: &[f64]| -> Vec<f64> { xs.iter().zip(&keep).filter(|(_, k)| **k).map(|(x, _)| *x).collect() };

    let getters: [(&str, fn(&ApplicabilityScore) -> f64); 3] =
        [("a", |s| s.a), ("a_user", |s| s.a_user), ("a_ai", |s| s.a_ai)];
    let wage_correlations = getters
        .iter()
        .map(|(name, get)| {
            let xs: Vec<f64> = with_wage.iter().map(|s| get(s)).collect();
            WageCorrelation {
                score: name.to_string(),
                weighted: stats::weighted_pearson(&xs, &wages, &emp),
                unweighted: stats::pearson(&xs, &wages),
                weighted_excluding_top_decile: stats::weighted_pearson(&sub(&xs), &sub(&wages), &sub(&emp)),
                unweighted_excluding_top_decile: stats::pearson(&sub(&xs), &sub(&wages)),
            }
        })
        .collect();

    let bins = if wages.is_empty() { Vec::new() } else { stats::weighted_quantile_bins(&wages, &emp, WAGE_BINS) };
    let mut wage_bins = Vec::new();
    for b in 0..WAGE_BINS {
        let idx: Vec<usize> = (0..bins.len()).filter(|&i| bins[i] == b).collect();
        if idx.is_empty() {
            continue;
        }
        let ws: Vec<f64> = idx.iter().map(|&i| emp[i]).collect();
        let m = |xs: Vec<f64>| stats::weighted_mean(&xs, &ws).unwrap_or(0.0);
        wage_bins.push(WageBin {
            bin: b,
            occupations: idx.len(),
            employment: ws.iter().sum(),
            mean_wage: m(idx.iter().map(|&i| wages[i]).collect()),
            a: m(idx.iter().map(|&i| with_wage[i].a).collect()),
            a_user: m(idx.iter().map(|&i| with_wage[i].a_user).collect()),
            a_ai: m(idx.iter().map(|&i| with_wage[i].a_ai).collect()),
        });
    }

    let mut by_level: BTreeMap<EducationLevel, Vec<&ApplicabilityScore>> = BTreeMap::new();
    for s in scores.iter().filter(|s| s.employment.is_some_and(|e| e > 0.0)) {
        if let Some(level) = s.education_mode {
            by_level.entry(level).or_default().push(s);
        }
    }
    let education = by_level
        .iter()
        .map(|(level, members)| {
            let ws: Vec<f64> = members.iter().filter_map(|s| s.employment).collect();
            let col = |get: fn(&ApplicabilityScore) -> f64| -> Vec<f64> { members.iter().map(|s| get(s)).collect() };
            EducationGroup {
                level: *level,
                label: level.label().to_string(),
                occupations: members.len(),
                employment: ws.iter().sum(),
                mean_a: stats::weighted_mean(&col(|s| s.a), &ws).unwrap_or(0.0),
                mean_a_user: stats::weighted_mean(&col(|s| s.a_user), &ws).unwrap_or(0.0),
                mean_a_ai: stats::weighted_mean(&col(|s| s.a_ai), &ws).unwrap_or(0.0),
                box_a: stats::weighted_box(&col(|s| s.a), &ws),
            }
        })
        .collect();

    let split = |pred: fn(EducationLevel) -> bool| -> (Vec<f64>, Vec<f64>) {
        by_level
            .iter()
            .filter(|(l, _)| pred(**l))
            .flat_map(|(_, m)| m.iter().map(|s| (s.a, s.employment.unwrap_or(0.0))))
            .unzip()
    };
    let (xa, wa) = split(|l| l == EducationLevel::BACHELORS);
    let (xb, wb) = split(EducationLevel::is_below_bachelors);

    Socioeconomic {
        wage_correlations,
        wage_bins,
        education,
        bachelors_vs_below: stats::welch_weighted_ttest(&xa, &wa, &xb, &wb),
        top_decile_wage_cutoff: cutoff,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceRow {
    pub soc_code: SocCode,
    pub title: String,
    pub a_user: f64,
    pub a_ai: f64,
    pub percentile_user: f64,
    pub percentile_ai: f64,
    /// User percentile minus AI percentile.
    pub gap: f64,
}

/// Occupations whose user and AI score percentiles differ most, limited to
/// those at or above `min_percentile` on their higher side. Sorted by
/// absolute gap, largest first.
pub fn divergence(scores: &[ApplicabilityScore], min_percentile: f64) -> Vec<DivergenceRow> {
    let user: Vec<f64> = scores.iter().map(|s| s.a_user).collect();
    let ai: Vec<f64> = scores.iter().map(|s| s.a_ai).collect();
    let pu = stats::rank_percentiles(&user);
    let pa = stats::rank_percentiles(&ai);
    let mut rows: Vec<DivergenceRow> = scores
        .iter()
        .zip(pu.iter().zip(&pa))
        .filter(|(_, (u, a))| u.max(**a) >= min_percentile)
        .map(|(s, (u, a))| DivergenceRow {
            soc_code: s.soc_code.clone(),
            title: s.title.clone(),
            a_user: s.a_user,
            a_ai: s.a_ai,
            percentile_user: *u,
            percentile_ai: *a,
            gap: u - a,
        })
        .collect();
    rows.sort_by(|x, y| y.gap.abs().total_cmp(&x.gap.abs()).then_with(|| x.soc_code.cmp(&y.soc_code)));
    rows
}

/// Scores recomputed under uniform task weighting for comparisons that
/// call for it.
pub fn uniform_scores(
    store: &crate::taxonomy::TaxonomyStore,
    user: &FactorMap,
    ai: &FactorMap,
    config: &ScoreConfig,
) -> Result<ScoreTable, ScoreError> {
    let (weights, _) = WeightTable::from_store(store, crate::workforce::Weighting::UniformTasks)
        .map_err(|e| ScoreError::Config(e.to_string()))?;
    let cfg = ScoreConfig { weighting: crate::workforce::Weighting::UniformTasks, ..config.clone() };
    ScoreTable::compute(store, &weights, user, ai, &cfg)
}

#[cfg(test)]
mod tests {
    use super::super::IwaFactors;
    use super::*;
    use crate::ids::IwaId;
    use approx::assert_abs_diff_eq;

    fn score(soc: &str, a_user: f64, a_ai: f64, emp: f64) -> ApplicabilityScore {
        ApplicabilityScore {
            soc_code: SocCode::new(soc),
            title: soc.into(),
            coverage: 0.5,
            completion: Some(0.5),
            scope: Some(0.5),
            a_user,
            a_ai,
            a: (a_user + a_ai) / 2.0,
            employment: Some(emp),
            mean_wage: None,
            education_mode: None,
            coverage_user: 0.5,
            coverage_ai: 0.5,
            completion_user: Some(0.5),
            completion_ai: Some(0.5),
            scope_user: Some(0.5),
            scope_ai: Some(0.5),
        }
    }

    #[test]
    fn rollup_is_employment_weighted() {
        let scores = vec![score("41-2031", 0.1, 0.1, 1.0), score("41-3011", 0.5, 0.5, 3.0), score("43-4051", 0.2, 0.2, 5.0)];
        let groups = group_rollup(&scores, GroupLevel::Major, |c| (c == "41-0000").then(|| "Sales".to_string()));
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].title, "Sales");
        assert_abs_diff_eq!(groups[0].a, 0.4);
        assert_eq!(groups[0].employment, 4.0);
        assert_abs_diff_eq!(groups[1].a, 0.2);
        let minor = group_rollup(&scores, GroupLevel::Minor, |_| None);
        assert_eq!(minor.iter().map(|g| g.group_code.as_str()).collect::<Vec<_>>(), ["41-2000", "41-3000", "43-4000"]);
    }

    fn depth_fixture() -> (WeightTable, FactorMap, BTreeMap<SocCode, f64>) {
        let w = |xs: &[(&str, f64)]| xs.iter().map(|(i, x)| (IwaId::new(*i), *x)).collect::<BTreeMap<_, _>>();
        let weights = WeightTable::from_map(BTreeMap::from([
            (SocCode::new("11-0001"), w(&[("A", 0.5), ("B", 0.5)])),
            (SocCode::new("11-0002"), w(&[("B", 0.2), ("C", 0.8)])),
            (SocCode::new("11-0003"), w(&[("A", 1.0)])),
        ]));
        let f = |s| IwaFactors { activity_share: s, completion_rate: 1.0, scope_rate: 1.0 };
        let factors = FactorMap::from([(IwaId::new("A"), f(0.02)), (IwaId::new("B"), f(0.002)), (IwaId::new("C"), f(0.0002))]);
        let emp = BTreeMap::from([
            (SocCode::new("11-0001"), 100.0),
            (SocCode::new("11-0002"), 300.0),
            (SocCode::new("11-0003"), 600.0),
        ]);
        (weights, factors, emp)
    }

    #[test]
    fn depth_matrix_by_hand() {
        let (weights, factors, emp) = depth_fixture();
        let m = coverage_depth_curve(&weights, &factors, &emp, Side::User, &[0.0001, 0.001, 0.01], &[0.25, 0.5, 1.0]);
        // Coverage per occupation at t=1e-4: 1, 1, 1. At 1e-3: 1, 0.2, 1. At 1e-2: 0.5, 0, 1.
        let expected = vec![vec![1.0, 1.0, 1.0], vec![0.7, 0.7, 0.7], vec![0.7, 0.7, 0.6]];
        for (row, exp) in m.values.iter().zip(&expected) {
            for (v, e) in row.iter().zip(exp) {
                assert_abs_diff_eq!(v, e, epsilon = 1e-15);
            }
        }
        let low = coverage_depth_curve(&weights, &factors, &emp, Side::User, &[1e-9], &[0.0]);
        assert_eq!(low.values[0][0], 1.0);
        let high = coverage_depth_curve(&weights, &factors, &emp, Side::User, &[0.5], &[0.1, 1.0]);
        assert_eq!(high.values[0], vec![0.0, 0.0]);
    }

    #[test]
    fn robustness_is_one_when_nothing_changes() {
        let (weights, factors, _) = depth_fixture();
        let mut strong = factors.clone();
        strong.values_mut().enumerate().for_each(|(i, f)| {
            f.activity_share = 0.05;
            f.completion_rate = 0.2 + 0.3 * i as f64;
        });
        let rows = threshold_robustness(&weights, &strong, &strong, &ScoreConfig::default(), &[1e-5, 5e-4, 1e-2]);
        assert!(rows.iter().all(|r| r.spearman == Some(1.0)), "{rows:?}");
        let rows = threshold_robustness(&weights, &factors, &factors, &ScoreConfig::default(), &[5e-4, 1e-2]);
        assert_eq!(rows[0].spearman, Some(1.0));
        assert!(rows[1].spearman.unwrap() < 1.0);
    }

    #[test]
    fn external_identity_and_equal_weights() {
        let scores = vec![score("11-1011", 0.1, 0.3, 5.0), score("13-1011", 0.4, 0.2, 5.0), score("15-1011", 0.9, 0.7, 5.0)];
        let same: BTreeMap<SocCode, f64> = scores.iter().map(|s| (s.soc_code.clone(), s.a)).collect();
        assert_abs_diff_eq!(compare_external(&scores, &same).r_occupation.unwrap(), 1.0, epsilon = 1e-12);
        let other = BTreeMap::from([
            (SocCode::new("11-1011"), 0.3),
            (SocCode::new("13-1011"), 0.1),
            (SocCode::new("15-1011"), 0.8),
        ]);
        let c = compare_external(&scores, &other);
        let plain = stats::pearson(&[0.2, 0.3, 0.8], &[0.3, 0.1, 0.8]).unwrap();
        assert_abs_diff_eq!(c.r_occupation.unwrap(), plain, epsilon = 1e-12);
        assert_eq!(c.major_groups, 3);
    }

    #[test]
    fn divergence_extremes() {
        let flat = vec![score("11-1011", 0.2, 0.2, 1.0), score("13-1011", 0.4, 0.4, 1.0)];
        assert!(divergence(&flat, 0.0).iter().all(|r| r.gap == 0.0));
        let skew = vec![score("11-1011", 0.9, 0.0, 1.0), score("13-1011", 0.5, 0.5, 1.0), score("15-1011", 0.0, 0.9, 1.0)];
        let rows = divergence(&skew, 0.75);
        assert_eq!(rows[0].gap.abs(), 1.0);
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn socioeconomic_degenerate_cases() {
        let mut rows: Vec<ApplicabilityScore> = (0..10)
            .map(|i| {
                let mut s = score(&format!("11-10{i:02}"), 0.3, 0.3, 10.0 + i as f64);
                s.mean_wage = Some(30_000.0 + 1_000.0 * i as f64);
                s.education_mode = Some(EducationLevel(if i % 2 == 0 { 6 } else { 2 }));
                s
            })
            .collect();
        let se = socioeconomic(&rows);
        assert_eq!(se.wage_correlations[0].weighted, Some(0.0));
        assert!(se.bachelors_vs_below.is_none());
        assert_abs_diff_eq!(se.education[0].mean_a, se.education[1].mean_a, epsilon = 1e-12);
        for s in &mut rows {
            let w = s.mean_wage.unwrap();
            s.a = w;
        }
        let se = socioeconomic(&rows);
        assert_abs_diff_eq!(se.wage_correlations[0].weighted.unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(se.wage_bins.iter().map(|b| b.occupations).sum::<usize>(), 10);
    }
}
