//! Browser bindings over the scoring core.
//!
//! Everything crosses the boundary as JSON strings so the page needs no
//! generated type definitions. The plain functions are usable from Rust and
//! tested natively; the `#[wasm_bindgen]` wrappers only convert errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;
use workscope::classify::Side;
use workscope::ids::{IwaId, SocCode};
use workscope::score::analysis::{coverage_depth_curve, DepthMatrix};
use workscope::score::{applicability, contributions, FactorMap, ScoreConfig};
use workscope::validate::kappa_from_table;
use workscope::workforce::WeightTable;

const DEMO: &str = include_str!("../www/demo.json");

/// What the page works on: occupations with their IWA weights plus the
/// per-IWA factors measured on each side.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dataset {
    pub occupations: Vec<Occupation>,
    #[serde(default)]
    pub iwa_titles: BTreeMap<IwaId, String>,
    pub user: FactorMap,
    pub ai: FactorMap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Occupation {
    pub soc_code: SocCode,
    pub title: String,
    pub employment: Option<f64>,
    pub weights: BTreeMap<IwaId, f64>,
}

impl Dataset {
    pub fn parse(json: &str) -> Result<Self, String> {
        serde_json::from_str(json).map_err(|e| format!("dataset: {e}"))
    }

    fn weight_table(&self) -> WeightTable {
        WeightTable::from_map(self.occupations.iter().map(|o| (o.soc_code.clone(), o.weights.clone())).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedOccupation {
    pub soc_code: SocCode,
    pub title: String,
    pub a: f64,
    pub a_user: f64,
    pub a_ai: f64,
    pub coverage: f64,
    /// Largest contributions first.
    pub drivers: Vec<Driver>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Driver {
    pub iwa_id: IwaId,
    pub title: String,
    pub contribution: f64,
}

/// Occupations by descending score at `threshold`, each with its top IWAs.
pub fn rank(data: &Dataset, threshold: f64, drivers: usize) -> Result<Vec<RankedOccupation>, String> {
    let cfg = ScoreConfig { coverage_threshold: threshold, ..ScoreConfig::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    let mut out: Vec<RankedOccupation> = data
        .occupations
        .iter()
        .map(|o| {
            let s = applicability(&o.soc_code, &o.weights, &data.user, &data.ai, &cfg);
            let mut parts: Vec<(IwaId, f64)> = contributions(&o.weights, &data.user, &data.ai, &cfg);
            parts.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
            RankedOccupation {
                soc_code: o.soc_code.clone(),
                title: o.title.clone(),
                a: s.a,
                a_user: s.a_user,
                a_ai: s.a_ai,
                coverage: s.coverage,
                drivers: parts
                    .into_iter()
                    .filter(|(_, c)| *c > 0.0)
                    .take(drivers)
                    .map(|(iwa_id, contribution)| Driver {
                        title: data.iwa_titles.get(&iwa_id).cloned().unwrap_or_default(),
                        iwa_id,
                        contribution,
                    })
                    .collect(),
            }
        })
        .collect();
    out.sort_by(|x, y| y.a.total_cmp(&x.a).then_with(|| x.soc_code.cmp(&y.soc_code)));
    Ok(out)
}

/// Employment share of occupations whose covered weight reaches each depth.
pub fn depth(data: &Dataset, side: &str, thresholds: &[f64], depths: &[f64]) -> Result<DepthMatrix, String> {
    let side = match side {
        "user" => Side::User,
        "ai" => Side::Ai,
        other => return Err(format!("side must be \"user\" or \"ai\", got {other:?}")),
    };
    let factors = match side {
        Side::User => &data.user,
        Side::Ai => &data.ai,
    };
    let employment = data.occupations.iter().filter_map(|o| Some((o.soc_code.clone(), o.employment?))).collect();
    Ok(coverage_depth_curve(&data.weight_table(), factors, &employment, side, thresholds, depths))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaResult {
    pub n: u64,
    pub observed_agreement: f64,
    pub kappa: Option<f64>,
}

/// Cohen's kappa from the 2x2 table `[[no/no, no/yes], [yes/no, yes/yes]]`.
pub fn kappa(table: [[u64; 2]; 2]) -> Result<KappaResult, String> {
    let n = table.iter().flatten().sum();
    if n == 0 {
        return Err("the table is empty".into());
    }
    let (observed_agreement, kappa) = kappa_from_table(&table);
    Ok(KappaResult { n, observed_agreement, kappa })
}

fn to_json<T: Serialize>(v: Result<T, String>) -> Result<String, JsError> {
    v.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = demoDataset)]
pub fn demo_dataset() -> String {
    DEMO.to_string()
}

#[wasm_bindgen(js_name = rankOccupations)]
pub fn rank_occupations(dataset: &str, threshold: f64, drivers: usize) -> Result<String, JsError> {
    to_json(Dataset::parse(dataset).and_then(|d| rank(&d, threshold, drivers)))
}

#[wasm_bindgen(js_name = depthCurves)]
pub fn depth_curves(dataset: &str, side: &str, thresholds: Vec<f64>, depths: Vec<f64>) -> Result<String, JsError> {
    to_json(Dataset::parse(dataset).and_then(|d| depth(&d, side, &thresholds, &depths)))
}

#[wasm_bindgen(js_name = cohensKappa)]
pub fn cohens_kappa(no_no: u32, no_yes: u32, yes_no: u32, yes_yes: u32) -> Result<String, JsError> {
    to_json(kappa([[no_no.into(), no_yes.into()], [yes_no.into(), yes_yes.into()]]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use workscope::score::IwaFactors;

    fn demo() -> Dataset {
        Dataset::parse(DEMO).unwrap()
    }

    #[test]
    fn demo_dataset_parses_and_ranks_every_occupation() {
        let d = demo();
        let ranked = rank(&d, 0.0005, 3).unwrap();
        assert_eq!(ranked.len(), d.occupations.len());
        assert!(ranked.windows(2).all(|w| w[0].a >= w[1].a));
        for r in &ranked {
            assert!(r.drivers.len() <= 3);
            assert!(r.drivers.iter().map(|x| x.contribution).sum::<f64>() <= r.a + 1e-12);
        }
    }

    #[test]
    fn raising_the_threshold_never_raises_a_score() {
        let d = demo();
        let low: BTreeMap<_, _> = rank(&d, 0.0005, 0).unwrap().into_iter().map(|r| (r.soc_code, r.a)).collect();
        for r in rank(&d, 0.03, 0).unwrap() {
            assert!(r.a <= low[&r.soc_code] + 1e-15);
        }
        assert!(rank(&d, 1.5, 0).is_err());
    }

    #[test]
    fn depth_rows_follow_thresholds() {
        let m = depth(&demo(), "ai", &[0.0001, 0.02, 0.5], &[0.1, 0.5]).unwrap();
        assert_eq!(m.values.len(), 3);
        assert_eq!(m.values[2], vec![0.0, 0.0]);
        assert!(depth(&demo(), "both", &[0.1], &[0.1]).is_err());
    }

    #[test]
    fn kappa_matches_hand_computation() {
        let k = kappa([[45, 15], [25, 15]]).unwrap();
        assert_eq!(k.n, 100);
        assert!((k.kappa.unwrap() - 3.0 / 23.0).abs() < 1e-12);
        assert!(kappa([[0, 0], [0, 0]]).is_err());
    }

    #[test]
    fn unknown_iwas_in_weights_are_uncovered() {
        let f = IwaFactors { activity_share: 0.1, completion_rate: 1.0, scope_rate: 1.0 };
        let d = Dataset {
            occupations: vec![Occupation {
                soc_code: SocCode::new("11-0001"),
                title: "t".into(),
                employment: Some(1.0),
                weights: [(IwaId::new("x"), 0.5), (IwaId::new("y"), 0.5)].into_iter().collect(),
            }],
            iwa_titles: BTreeMap::new(),
            user: [(IwaId::new("x"), f)].into_iter().collect(),
            ai: FactorMap::new(),
        };
        let r = &rank(&d, 0.01, 5).unwrap()[0];
        assert_eq!(r.a, 0.25);
        assert_eq!(r.drivers.len(), 1);
    }
}
