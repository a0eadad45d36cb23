use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use super::{
    Diagnostic, FrequencyCategory, FrequencyDistribution, OnetOccupation, TaskRating, TaskRecord,
    TaxonomyError, TaxonomyStore,
};
use crate::ids::{DwaId, GwaId, IwaId, TaskId};
use crate::table::{cell, parse_number, DelimitedTable};

/// File names of an O*NET text distribution.
#[derive(Debug, Clone)]
pub struct OnetFiles {
    pub task_statements: &'static str,
    pub task_ratings: &'static str,
    pub tasks_to_dwas: &'static str,
    pub dwa_reference: &'static str,
    pub iwa_reference: &'static str,
    pub task_categories: &'static str,
    pub education: &'static str,
}

impl Default for OnetFiles {
    fn default() -> Self {
        Self {
            task_statements: "Task Statements.txt",
            task_ratings: "Task Ratings.txt",
            tasks_to_dwas: "Tasks to DWAs.txt",
            dwa_reference: "DWA Reference.txt",
            iwa_reference: "IWA Reference.txt",
            task_categories: "Task Categories.txt",
            education: "Education, Training, and Experience.txt",
        }
    }
}

const ONET_SOC: &[&str] = &["O*NET-SOC Code", "ONET-SOC Code", "O*NET-SOC"];

#[derive(Default)]
struct PartialRating {
    importance: Option<f64>,
    relevance: Option<f64>,
    frequency: Option<FrequencyDistribution>,
}

/// Reads an O*NET 29.0 text distribution from `dir`.
///
/// Requires the task statements, task ratings, tasks-to-DWAs and DWA
/// reference files. The IWA reference, task categories and education files
/// are read when present.
pub fn load_onet(dir: &Path) -> Result<TaxonomyStore, TaxonomyError> {
    let files = OnetFiles::default();
    let has_any = std::fs::read_dir(dir)
        .map(|entries| {
            entries
                .filter_map(Result::ok)
                .any(|e| e.path().extension().is_some_and(|x| x == "txt"))
        })
        .unwrap_or(false);
    if !has_any {
        return Err(TaxonomyError::EmptyDirectory(dir.to_path_buf()));
    }
    let path = |name: &str| -> PathBuf { dir.join(name) };
    let mut diagnostics = Vec::new();

    // Hierarchy above the tasks.
    let dwa_ref = DelimitedTable::read_tsv(&path(files.dwa_reference))?;
    let (g_id, g_name, i_id, i_title, d_id, d_title) = (
        dwa_ref.require(&["Element ID"])?,
        dwa_ref.require(&["Element Name"])?,
        dwa_ref.require(&["IWA ID"])?,
        dwa_ref.require(&["IWA Title"])?,
        dwa_ref.require(&["DWA ID"])?,
        dwa_ref.require(&["DWA Title"])?,
    );
    let mut gwas: BTreeMap<GwaId, String> = BTreeMap::new();
    let mut iwas: BTreeMap<IwaId, (String, GwaId)> = BTreeMap::new();
    let mut dwas: BTreeMap<DwaId, (String, IwaId)> = BTreeMap::new();
    let mut conflicts = BTreeSet::new();
    for row in dwa_ref.rows() {
        let gwa = GwaId::new(cell(row, g_id));
        let iwa = IwaId::new(cell(row, i_id));
        let dwa = DwaId::new(cell(row, d_id));
        if dwa.as_str().is_empty() || iwa.as_str().is_empty() || gwa.as_str().is_empty() {
            continue;
        }
        gwas.entry(gwa.clone())
            .or_insert_with(|| cell(row, g_name).to_string());
        let iwa_entry = iwas
            .entry(iwa.clone())
            .or_insert_with(|| (cell(row, i_title).to_string(), gwa.clone()));
        if iwa_entry.1 != gwa {
            conflicts.insert(iwa.to_string());
        }
        let dwa_entry = dwas
            .entry(dwa.clone())
            .or_insert_with(|| (cell(row, d_title).to_string(), iwa.clone()));
        if dwa_entry.1 != iwa {
            conflicts.insert(dwa.to_string());
        }
    }
    if !conflicts.is_empty() {
        return Err(TaxonomyError::DanglingReferences {
            kind: "multiple parents",
            ids: conflicts.into_iter().collect(),
        });
    }

    let iwa_ref_path = path(files.iwa_reference);
    if iwa_ref_path.is_file() {
        let t = DelimitedTable::read_tsv(&iwa_ref_path)?;
        let (g_id, g_name, i_id, i_title) = (
            t.require(&["Element ID"])?,
            t.require(&["Element Name"])?,
            t.require(&["IWA ID"])?,
            t.require(&["IWA Title"])?,
        );
        for row in t.rows() {
            let gwa = GwaId::new(cell(row, g_id));
            let iwa = IwaId::new(cell(row, i_id));
            if iwa.as_str().is_empty() {
                continue;
            }
            gwas.entry(gwa.clone())
                .or_insert_with(|| cell(row, g_name).to_string());
            iwas.entry(iwa)
                .or_insert_with(|| (cell(row, i_title).to_string(), gwa));
        }
    }

    // Tasks.
    let statements = DelimitedTable::read_tsv(&path(files.task_statements))?;
    let (s_soc, s_title, s_id, s_task) = (
        statements.require(ONET_SOC)?,
        statements.require(&["Title"])?,
        statements.require(&["Task ID"])?,
        statements.require(&["Task"])?,
    );
    let mut occupations: BTreeMap<String, OnetOccupation> = BTreeMap::new();
    for row in statements.rows() {
        let code = cell(row, s_soc).to_string();
        let task_id = TaskId::new(cell(row, s_id));
        if code.is_empty() || task_id.as_str().is_empty() {
            diagnostics.push(Diagnostic::new(
                "malformed_task_row",
                format!("{:?}", row.iter().collect::<Vec<_>>()),
            ));
            continue;
        }
        let occ = occupations
            .entry(code.clone())
            .or_insert_with(|| OnetOccupation {
                onet_soc: code.clone(),
                title: cell(row, s_title).to_string(),
                tasks: BTreeMap::new(),
                education_shares: BTreeMap::new(),
            });
        occ.tasks.insert(
            task_id.clone(),
            TaskRecord {
                task_id,
                occupation_onet_soc: code,
                statement: cell(row, s_task).to_string(),
                dwa_ids: BTreeSet::new(),
                rating: None,
            },
        );
    }

    let links = DelimitedTable::read_tsv(&path(files.tasks_to_dwas))?;
    let (l_soc, l_task, l_dwa) = (
        links.require(ONET_SOC)?,
        links.require(&["Task ID"])?,
        links.require(&["DWA ID"])?,
    );
    let mut dangling = BTreeSet::new();
    for row in links.rows() {
        let code = cell(row, l_soc);
        let task_id = TaskId::new(cell(row, l_task));
        let dwa = DwaId::new(cell(row, l_dwa));
        if !dwas.contains_key(&dwa) {
            dangling.insert(format!("DWA {dwa}"));
            continue;
        }
        match occupations
            .get_mut(code)
            .and_then(|o| o.tasks.get_mut(&task_id))
        {
            Some(task) => {
                task.dwa_ids.insert(dwa);
            }
            None => {
                dangling.insert(format!("task {code}/{task_id}"));
            }
        }
    }
    if !dangling.is_empty() {
        return Err(TaxonomyError::DanglingReferences {
            kind: "tasks-to-DWAs",
            ids: dangling.into_iter().collect(),
        });
    }

    // Frequency category labels, when the categories file is shipped.
    let mut ft_labels: BTreeMap<u32, FrequencyCategory> = BTreeMap::new();
    let cat_path = path(files.task_categories);
    if cat_path.is_file() {
        let t = DelimitedTable::read_tsv(&cat_path)?;
        let (c_scale, c_cat, c_desc) = (
            t.require(&["Scale ID"])?,
            t.require(&["Category"])?,
            t.require(&["Category Description"])?,
        );
        for row in t.rows() {
            if !cell(row, c_scale).eq_ignore_ascii_case("FT") {
                continue;
            }
            let Ok(cat) = cell(row, c_cat).parse::<u32>() else {
                continue;
            };
            match FrequencyCategory::from_label(cell(row, c_desc)) {
                Some(fc) => {
                    ft_labels.insert(cat, fc);
                }
                None => diagnostics.push(Diagnostic::new(
                    "unknown_frequency_label",
                    cell(row, c_desc).to_string(),
                )),
            }
        }
    }

    let ratings = DelimitedTable::read_tsv(&path(files.task_ratings))?;
    let (r_soc, r_task, r_scale, r_cat, r_value) = (
        ratings.require(ONET_SOC)?,
        ratings.require(&["Task ID"])?,
        ratings.require(&["Scale ID"])?,
        ratings.require(&["Category"])?,
        ratings.require(&["Data Value"])?,
    );
    let mut partial: BTreeMap<(String, TaskId), PartialRating> = BTreeMap::new();
    let mut unknown_rated = BTreeSet::new();
    for row in ratings.rows() {
        let code = cell(row, r_soc);
        let task_id = TaskId::new(cell(row, r_task));
        if !occupations
            .get(code)
            .is_some_and(|o| o.tasks.contains_key(&task_id))
        {
            unknown_rated.insert(format!("{code}/{task_id}"));
            continue;
        }
        let Some(value) = parse_number(cell(row, r_value)) else {
            continue;
        };
        let entry = partial
            .entry((code.to_string(), task_id))
            .or_default();
        match cell(row, r_scale).to_ascii_uppercase().as_str() {
            "IM" => entry.importance = Some(value),
            "RT" => entry.relevance = Some(value / 100.0),
            "FT" => {
                let category = cell(row, r_cat)
                    .parse::<u32>()
                    .ok()
                    .and_then(|c| {
                        ft_labels
                            .get(&c)
                            .copied()
                            .or_else(|| FrequencyCategory::from_scale_category(c))
                    })
                    .or_else(|| FrequencyCategory::from_label(cell(row, r_cat)));
                if let Some(category) = category {
                    entry
                        .frequency
                        .get_or_insert_with(FrequencyDistribution::default)
                        .set(category, value / 100.0);
                }
            }
            _ => {}
        }
    }
    if !unknown_rated.is_empty() {
        diagnostics.push(Diagnostic::new(
            "ratings_for_unknown_tasks",
            unknown_rated.into_iter().collect::<Vec<_>>().join(", "),
        ));
    }
    for ((code, task_id), p) in partial {
        let task = occupations
            .get_mut(&code)
            .and_then(|o| o.tasks.get_mut(&task_id))
            .expect("checked above");
        match (p.importance, p.relevance) {
            (Some(importance), Some(relevance)) => {
                let rating = TaskRating {
                    importance,
                    relevance,
                    frequency: p.frequency,
                };
                if rating.is_valid() {
                    task.rating = Some(rating);
                } else {
                    diagnostics.push(Diagnostic::new(
                        "rating_out_of_range",
                        format!("{code}/{task_id}: {rating:?}"),
                    ));
                }
            }
            _ => diagnostics.push(Diagnostic::new(
                "incomplete_rating",
                format!("{code}/{task_id} lacks importance or relevance"),
            )),
        }
    }

    let edu_path = path(files.education);
    if edu_path.is_file() {
        let t = DelimitedTable::read_tsv(&edu_path)?;
        let (e_soc, e_scale, e_cat, e_value) = (
            t.require(ONET_SOC)?,
            t.require(&["Scale ID"])?,
            t.require(&["Category"])?,
            t.require(&["Data Value"])?,
        );
        for row in t.rows() {
            if !cell(row, e_scale).eq_ignore_ascii_case("RL") {
                continue;
            }
            let (Ok(cat), Some(value)) =
                (cell(row, e_cat).parse::<u8>(), parse_number(cell(row, e_value)))
            else {
                continue;
            };
            if let Some(occ) = occupations.get_mut(cell(row, e_soc)) {
                occ.education_shares.insert(cat, value / 100.0);
            }
        }
    }

    let mut store = TaxonomyStore::from_parts(
        gwas,
        iwas.into_iter().map(|(id, (title, gwa))| (id, title, gwa)),
        dwas.into_iter().map(|(id, (title, iwa))| (id, title, iwa)),
        occupations.into_values(),
    )?;
    store.diagnostics = diagnostics;
    log::info!(
        "loaded O*NET: {} GWAs, {} IWAs, {} DWAs, {} tasks, {} occupations",
        store.gwa_count(),
        store.iwa_count(),
        store.dwa_count(),
        store.task_count(),
        store.onet_occupations.len()
    );
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn minimal_distribution(dir: &Path) {
        write(
            dir,
            "DWA Reference.txt",
            "Element ID\tElement Name\tIWA ID\tIWA Title\tDWA ID\tDWA Title\n\
             4.A.2.a.4\tAnalyzing Data or Information\t4.A.2.a.4.I09\tAnalyze market or industry conditions.\t4.A.2.a.4.I09.D03\tForecast economic, political, or social trends.\n\
             4.A.1.a.1\tGetting Information\t4.A.1.a.1.I01\tGather information.\t4.A.1.a.1.I01.D01\tRead documents.\n",
        );
        write(
            dir,
            "Task Statements.txt",
            "O*NET-SOC Code\tTitle\tTask ID\tTask\tTask Type\n\
             19-3011.00\tEconomists\t100\tCompile, analyze, and report data.\tCore\n\
             19-3011.00\tEconomists\t101\tStudy \"economic\" history.\tSupplemental\n",
        );
        write(
            dir,
            "Tasks to DWAs.txt",
            "O*NET-SOC Code\tTitle\tTask ID\tTask\tDWA ID\tDWA Title\n\
             19-3011.00\tEconomists\t100\tx\t4.A.2.a.4.I09.D03\tx\n\
             19-3011.00\tEconomists\t101\tx\t4.A.1.a.1.I01.D01\tx\n",
        );
        write(
            dir,
            "Task Ratings.txt",
            "O*NET-SOC Code\tTitle\tTask ID\tTask\tScale ID\tScale Name\tCategory\tData Value\n\
             19-3011.00\tEconomists\t100\tx\tIM\tImportance\tn/a\t4.50\n\
             19-3011.00\tEconomists\t100\tx\tRT\tRelevance\tn/a\t80.00\n\
             19-3011.00\tEconomists\t100\tx\tFT\tFrequency\t5\t50.00\n\
             19-3011.00\tEconomists\t100\tx\tFT\tFrequency\t7\t50.00\n\
             19-3011.00\tEconomists\t101\tx\tIM\tImportance\tn/a\t3.00\n",
        );
    }

    #[test]
    fn loads_minimal_distribution() {
        let dir = tempfile::tempdir().unwrap();
        minimal_distribution(dir.path());
        let store = load_onet(dir.path()).unwrap();
        assert_eq!(store.iwa_count(), 2);
        assert_eq!(store.gwa_count(), 2);
        assert_eq!(store.task_count(), 2);
        let occ = &store.onet_occupations["19-3011.00"];
        let rated = occ.tasks[&TaskId::new("100")].rating.unwrap();
        assert_eq!(rated.importance, 4.5);
        assert!((rated.relevance - 0.8).abs() < 1e-12);
        let freq = rated.frequency.unwrap();
        assert_eq!(freq.share(FrequencyCategory::Daily), 0.5);
        assert_eq!(freq.share(FrequencyCategory::HourlyOrMore), 0.5);
        // Importance without relevance is not a usable rating.
        assert!(occ.tasks[&TaskId::new("101")].rating.is_none());
        assert_eq!(occ.tasks[&TaskId::new("101")].statement, "Study \"economic\" history.");
        assert!(store
            .diagnostics()
            .iter()
            .any(|d| d.kind == "incomplete_rating"));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_onet(dir.path()),
            Err(TaxonomyError::EmptyDirectory(_))
        ));
    }

    #[test]
    fn missing_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        minimal_distribution(dir.path());
        fs::remove_file(dir.path().join("Task Ratings.txt")).unwrap();
        let err = load_onet(dir.path()).unwrap_err();
        assert!(err.to_string().contains("Task Ratings.txt"), "{err}");
    }

    #[test]
    fn dangling_dwa_lists_offenders() {
        let dir = tempfile::tempdir().unwrap();
        minimal_distribution(dir.path());
        write(
            dir.path(),
            "Tasks to DWAs.txt",
            "O*NET-SOC Code\tTitle\tTask ID\tTask\tDWA ID\tDWA Title\n\
             19-3011.00\tEconomists\t100\tx\t9.Z.9\tx\n",
        );
        let err = load_onet(dir.path()).unwrap_err();
        assert!(err.to_string().contains("9.Z.9"), "{err}");
    }

    #[test]
    fn category_labels_override_numbering() {
        let dir = tempfile::tempdir().unwrap();
        minimal_distribution(dir.path());
        // A release that numbers the anchors in reverse order.
        let mut body = String::from("Scale ID\tCategory\tCategory Description\n");
        for (i, c) in FrequencyCategory::ALL.iter().rev().enumerate() {
            body.push_str(&format!("FT\t{}\t{}\n", i + 1, c.label().to_uppercase()));
        }
        write(dir.path(), "Task Categories.txt", &body);
        let store = load_onet(dir.path()).unwrap();
        let freq = store.onet_occupations["19-3011.00"].tasks[&TaskId::new("100")]
            .rating
            .unwrap()
            .frequency
            .unwrap();
        // Category 5 is now "More than monthly", 7 is "Yearly or less".
        assert_eq!(freq.share(FrequencyCategory::MoreThanMonthly), 0.5);
        assert_eq!(freq.share(FrequencyCategory::YearlyOrLess), 0.5);
    }

    #[test]
    fn ingestion_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        minimal_distribution(dir.path());
        let a = load_onet(dir.path()).unwrap();
        let b = load_onet(dir.path()).unwrap();
        assert_eq!(a.canonical_hash(), b.canonical_hash());
    }
}
