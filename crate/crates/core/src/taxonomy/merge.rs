use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use super::{
    Diagnostic, EducationLevel, OccupationRecord, OnetOccupation, TaskRecord, TaxonomyError,
    TaxonomyStore,
};
use crate::ids::SocCode;
use crate::table::{cell, parse_number, DelimitedTable, TableError};

struct OewsRow {
    title: String,
    employment: Option<f64>,
    mean_wage: Option<f64>,
}

/// Folds O*NET-SOC occupations into SOC occupations and attaches OEWS
/// employment and mean annual wage.
///
/// Variants sharing a SOC code contribute the union of their tasks. Military
/// (55-xxxx) occupations are dropped. Occupations absent from the OEWS file
/// are kept with no employment and flagged in the diagnostics.
pub fn merge_soc(
    store: &TaxonomyStore,
    crosswalk_path: &Path,
    oews_path: &Path,
) -> Result<TaxonomyStore, TaxonomyError> {
    let crosswalk = DelimitedTable::read_csv(crosswalk_path)?;
    let oews = DelimitedTable::read_csv(oews_path)?;
    merge_tables(store, &crosswalk, &oews)
}

pub(crate) fn merge_tables(
    store: &TaxonomyStore,
    crosswalk: &DelimitedTable,
    oews: &DelimitedTable,
) -> Result<TaxonomyStore, TaxonomyError> {
    let mut merged = TaxonomyStore {
        gwas: store.gwas.clone(),
        iwas: store.iwas.clone(),
        dwas: store.dwas.clone(),
        onet_occupations: store.onet_occupations.clone(),
        occupations: BTreeMap::new(),
        group_titles: BTreeMap::new(),
        merged: true,
        diagnostics: store.diagnostics.clone(),
    };

    let (onet_col, soc_col) = crosswalk_columns(crosswalk)?;
    let soc_title_col = crosswalk.column(&["2018 SOC Title", "SOC Title"]);
    let mut mapping: BTreeMap<String, SocCode> = BTreeMap::new();
    let mut soc_titles: BTreeMap<SocCode, String> = BTreeMap::new();
    let mut unmatched_crosswalk = BTreeSet::new();
    for row in crosswalk.rows() {
        let onet = cell(row, onet_col);
        let soc = SocCode::new(cell(row, soc_col));
        if onet.is_empty() || !soc.is_well_formed() {
            continue;
        }
        if !store.onet_occupations.contains_key(onet) {
            unmatched_crosswalk.insert(onet.to_string());
        }
        if let Some(tc) = soc_title_col {
            soc_titles
                .entry(soc.clone())
                .or_insert_with(|| cell(row, tc).to_string());
        }
        mapping.insert(onet.to_string(), soc);
    }
    if !unmatched_crosswalk.is_empty() {
        merged.diagnostics.push(Diagnostic::new(
            "crosswalk_without_onet",
            unmatched_crosswalk.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }

    let oews_rows = read_oews(oews, &mut merged)?;

    let mut groups: BTreeMap<SocCode, Vec<&OnetOccupation>> = BTreeMap::new();
    let mut fallback = Vec::new();
    let mut military = 0usize;
    for occ in store.onet_occupations.values() {
        let soc = match mapping.get(&occ.onet_soc) {
            Some(soc) => soc.clone(),
            None => {
                fallback.push(occ.onet_soc.clone());
                SocCode::from_onet_soc(&occ.onet_soc)
            }
        };
        if soc.is_military() {
            military += 1;
            continue;
        }
        groups.entry(soc).or_default().push(occ);
    }
    if !fallback.is_empty() {
        merged.diagnostics.push(Diagnostic::new(
            "onet_not_in_crosswalk",
            format!("mapped by code prefix: {}", fallback.join(", ")),
        ));
    }
    if military > 0 {
        log::info!("dropped {military} military O*NET-SOC occupations");
    }

    let mut missing_oews = Vec::new();
    for (soc, variants) in groups {
        let mut tasks: BTreeMap<_, TaskRecord> = BTreeMap::new();
        for variant in &variants {
            for (id, task) in &variant.tasks {
                match tasks.get_mut(id) {
                    None => {
                        tasks.insert(id.clone(), task.clone());
                    }
                    Some(existing) => merge_task(existing, task),
                }
            }
        }
        let oews_row = oews_rows.get(&soc);
        if oews_row.is_none() {
            missing_oews.push(soc.to_string());
        }
        let title = oews_row
            .map(|r| r.title.clone())
            .filter(|t| !t.is_empty())
            .or_else(|| soc_titles.get(&soc).cloned().filter(|t| !t.is_empty()))
            .unwrap_or_else(|| variants[0].title.clone());
        merged.occupations.insert(
            soc.clone(),
            OccupationRecord {
                soc_code: soc,
                title,
                onet_soc_codes: variants.iter().map(|v| v.onet_soc.clone()).collect(),
                tasks,
                employment: oews_row.and_then(|r| r.employment),
                mean_wage: oews_row.and_then(|r| r.mean_wage),
                education_mode: education_mode(&variants),
            },
        );
    }
    if !missing_oews.is_empty() {
        merged.diagnostics.push(Diagnostic::new(
            "missing_oews",
            missing_oews.join(", "),
        ));
    }
    Ok(merged)
}

fn crosswalk_columns(t: &DelimitedTable) -> Result<(usize, usize), TableError> {
    let onet = t.require(&["O*NET-SOC 2019 Code", "O*NET-SOC Code", "O*NET-SOC", "ONET"])?;
    let soc = t
        .column(&["2018 SOC Code", "SOC Code", "SOC"])
        .filter(|c| *c != onet)
        .ok_or_else(|| TableError::MissingColumn {
            path: t.path().to_path_buf(),
            candidates: vec!["2018 SOC Code".into(), "SOC Code".into()],
        })?;
    Ok((onet, soc))
}

fn read_oews(
    t: &DelimitedTable,
    merged: &mut TaxonomyStore,
) -> Result<BTreeMap<SocCode, OewsRow>, TaxonomyError> {
    let code_col = t.require(&["OCC_CODE"])?;
    let title_col = t.column(&["OCC_TITLE"]);
    let emp_col = t.require(&["TOT_EMP"])?;
    let wage_col = t.column(&["A_MEAN"]);
    let group_col = t.column(&["O_GROUP", "OCC_GROUP"]);
    let mut rows = BTreeMap::new();
    for (n, row) in t.rows().iter().enumerate() {
        let raw_code = cell(row, code_col);
        let code = SocCode::new(raw_code);
        let title = title_col.map(|c| cell(row, c).to_string()).unwrap_or_default();
        let group = group_col
            .map(|c| cell(row, c).to_ascii_lowercase())
            .unwrap_or_else(|| "detailed".to_string());
        if !code.is_well_formed() {
            merged.diagnostics.push(Diagnostic::new(
                "malformed_oews_row",
                format!("row {}: OCC_CODE {raw_code:?}", n + 2),
            ));
            continue;
        }
        match group.as_str() {
            "major" => {
                merged
                    .group_titles
                    .insert(code.major_group().to_string(), title);
                continue;
            }
            "minor" => {
                merged
                    .group_titles
                    .insert(code.minor_group().to_string(), title);
                continue;
            }
            "detailed" => {}
            _ => continue,
        }
        let raw_emp = cell(row, emp_col);
        let employment = parse_number(raw_emp);
        if employment.is_none() {
            merged.diagnostics.push(Diagnostic::new(
                "malformed_oews_row",
                format!("row {}: {code} TOT_EMP {raw_emp:?}", n + 2),
            ));
        }
        if rows.contains_key(&code) {
            merged.diagnostics.push(Diagnostic::new(
                "duplicate_oews_row",
                format!("row {}: {code}", n + 2),
            ));
            continue;
        }
        rows.insert(
            code,
            OewsRow {
                title,
                employment,
                mean_wage: wage_col.and_then(|c| parse_number(cell(row, c))),
            },
        );
    }
    Ok(rows)
}

/// Task ids colliding across variants keep the union of DWAs and the larger
/// importance and relevance.
fn merge_task(existing: &mut TaskRecord, other: &TaskRecord) {
    existing.dwa_ids.extend(other.dwa_ids.iter().cloned());
    existing.rating = match (existing.rating, other.rating) {
        (Some(a), Some(b)) => Some(super::TaskRating {
            importance: a.importance.max(b.importance),
            relevance: a.relevance.max(b.relevance),
            frequency: if b.relevance > a.relevance {
                b.frequency.or(a.frequency)
            } else {
                a.frequency.or(b.frequency)
            },
        }),
        (a, b) => a.or(b),
    };
}

/// Category with the largest mean respondent share across variants; ties go
/// to the lower category.
fn education_mode(variants: &[&OnetOccupation]) -> Option<EducationLevel> {
    let with_data: Vec<_> = variants
        .iter()
        .filter(|v| !v.education_shares.is_empty())
        .collect();
    if with_data.is_empty() {
        return None;
    }
    let mut totals: BTreeMap<u8, f64> = BTreeMap::new();
    for v in &with_data {
        for (cat, share) in &v.education_shares {
            *totals.entry(*cat).or_default() += share;
        }
    }
    let mut best: Option<(u8, f64)> = None;
    for (cat, total) in totals {
        if best.is_none_or(|(_, b)| total > b) {
            best = Some((cat, total));
        }
    }
    best.map(|(cat, _)| EducationLevel(cat))
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;
    use crate::ids::TaskId;

    fn csv(body: &str) -> DelimitedTable {
        DelimitedTable::from_reader(Path::new("x.csv"), body.as_bytes(), b',', true).unwrap()
    }

    fn store() -> TaxonomyStore {
        small_store(vec![
            onet_occ(
                "39-7011.00",
                "Tour Guides and Escorts",
                vec![
                    task("1", "39-7011.00", &["D3"], Some(rating(3.0, 0.5))),
                    task("2", "39-7011.00", &["D1"], Some(rating(2.0, 0.9))),
                ],
            ),
            onet_occ(
                "39-7011.01",
                "Travel Guides",
                vec![
                    task("2", "39-7011.01", &["D2"], Some(rating(4.0, 0.4))),
                    task("3", "39-7011.01", &["D4"], None),
                ],
            ),
            onet_occ(
                "27-3091.00",
                "Interpreters and Translators",
                vec![task("4", "27-3091.00", &["D3"], Some(rating(4.5, 1.0)))],
            ),
            onet_occ(
                "55-1011.00",
                "Air Crew Officers",
                vec![task("5", "55-1011.00", &["D1"], None)],
            ),
        ])
    }

    const CROSSWALK: &str = "O*NET-SOC 2019 Code,O*NET-SOC 2019 Title,2018 SOC Code,2018 SOC Title\n\
        39-7011.00,Tour Guides and Escorts,39-7010,Tour and Travel Guides\n\
        39-7011.01,Travel Guides,39-7010,Tour and Travel Guides\n\
        27-3091.00,Interpreters and Translators,27-3091,Interpreters and Translators\n\
        55-1011.00,Air Crew Officers,55-1011,Air Crew Officers\n\
        99-9999.00,Ghost,99-9999,Ghost\n";

    const OEWS: &str = "OCC_CODE,OCC_TITLE,O_GROUP,TOT_EMP,A_MEAN\n\
        27-0000,\"Arts, Design, Entertainment, Sports, and Media Occupations\",major,\"2,000,000\",70000\n\
        27-3000,Media and Communication Workers,minor,\"700,000\",80000\n\
        27-3091,Interpreters and Translators,detailed,\"51,560\",\"66,000\"\n\
        bogus,Broken,detailed,1,1\n";

    #[test]
    fn variants_sharing_a_soc_code_take_the_task_union() {
        let merged = merge_tables(&store(), &csv(CROSSWALK), &csv(OEWS)).unwrap();
        assert!(merged.is_merged());
        let guides = merged.occupation(&SocCode::new("39-7010")).unwrap();
        let ids: Vec<_> = guides.tasks.keys().map(|t| t.as_str()).collect();
        assert_eq!(ids, vec!["1", "2", "3"]);
        assert_eq!(guides.title, "Tour and Travel Guides");
        // Task 2 collided: union of DWAs, max of ratings.
        let t2 = &guides.tasks[&TaskId::new("2")];
        assert_eq!(t2.dwa_ids.len(), 2);
        let r = t2.rating.unwrap();
        assert_eq!((r.importance, r.relevance), (4.0, 0.9));
        // No OEWS row: kept, flagged, no employment.
        assert_eq!(guides.employment, None);
        assert!(merged
            .diagnostics()
            .iter()
            .any(|d| d.kind == "missing_oews" && d.detail.contains("39-7010")));
    }

    #[test]
    fn employment_wage_and_group_titles_attach() {
        let merged = merge_tables(&store(), &csv(CROSSWALK), &csv(OEWS)).unwrap();
        let it = merged.occupation(&SocCode::new("27-3091")).unwrap();
        assert_eq!(it.employment, Some(51560.0));
        assert_eq!(it.mean_wage, Some(66000.0));
        assert_eq!(merged.group_title("27-3"), Some("Media and Communication Workers"));
        assert!(merged.group_title("27").unwrap().starts_with("Arts"));
    }

    #[test]
    fn single_variant_task_set_is_unchanged() {
        let s = store();
        let merged = merge_tables(&s, &csv(CROSSWALK), &csv(OEWS)).unwrap();
        let before = &s.onet_occupations["27-3091.00"].tasks;
        let after = &merged.occupation(&SocCode::new("27-3091")).unwrap().tasks;
        assert_eq!(before, after);
    }

    #[test]
    fn military_dropped_and_bad_rows_diagnosed() {
        let merged = merge_tables(&store(), &csv(CROSSWALK), &csv(OEWS)).unwrap();
        assert!(merged.occupation(&SocCode::new("55-1011")).is_none());
        assert_eq!(merged.occupations().count(), 2);
        let kinds: Vec<_> = merged.diagnostics().iter().map(|d| d.kind.as_str()).collect();
        assert!(kinds.contains(&"malformed_oews_row"));
        assert!(kinds.contains(&"crosswalk_without_onet"));
    }

    #[test]
    fn no_duplicate_task_pairs_after_merge() {
        let merged = merge_tables(&store(), &csv(CROSSWALK), &csv(OEWS)).unwrap();
        let mut seen = BTreeSet::new();
        for occ in merged.occupations() {
            for id in occ.tasks.keys() {
                assert!(seen.insert((occ.soc_code.clone(), id.clone())));
            }
        }
    }

    #[test]
    fn education_mode_picks_largest_mean_share() {
        let mut a = onet_occ("1", "a", vec![]);
        a.education_shares = [(2u8, 0.6), (6, 0.4)].into_iter().collect();
        let mut b = onet_occ("2", "b", vec![]);
        b.education_shares = [(2u8, 0.1), (6, 0.9)].into_iter().collect();
        assert_eq!(education_mode(&[&a, &b]), Some(EducationLevel(6)));
        assert_eq!(education_mode(&[&a]), Some(EducationLevel(2)));
        let empty = onet_occ("3", "c", vec![]);
        assert_eq!(education_mode(&[&empty]), None);
    }
}
