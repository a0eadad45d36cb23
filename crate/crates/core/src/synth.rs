//! Deterministic synthetic inputs for hermetic end-to-end runs.
//!
//! [`generate`] writes an O*NET-format distribution, a SOC crosswalk, OEWS
//! figures, a conversation corpus and a thumbs corpus whose labels are known
//! in advance, keyword rules that let the mock backend recover those labels,
//! external exposure values, simulated rater annotations and a run config.
//! Every file is a pure function of [`SynthConfig`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::mock::{KeywordRule, MockBackend};
use crate::classify::{self, CompletionLevel, IwaCatalog, LabelOptions, ScopeLevel, Side};
use crate::config::{BackendConfig, BackendKind, PathsConfig, RunConfig, SamplingConfig};
use crate::corpus::{ConversationRecord, Message, Role, Thumbs};
use crate::ids::IwaId;
use crate::taxonomy::{self, FrequencyCategory};
use crate::validate::{self, AnnotationSet, Ranking};

pub const ONET_DIR: &str = "onet";
pub const CROSSWALK: &str = "crosswalk.csv";
pub const OEWS: &str = "oews.csv";
pub const CORPUS: &str = "corpus.jsonl";
pub const THUMBS_CORPUS: &str = "thumbs.jsonl";
pub const RULES: &str = "keywords.json";
pub const TRUTH: &str = "truth.jsonl";
pub const THUMBS_TRUTH: &str = "thumbs_truth.jsonl";
pub const E1: &str = "e1.csv";
pub const ANNOTATIONS: &str = "annotations.csv";
pub const CONFIG: &str = "run.toml";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Taxonomy(#[from] taxonomy::TaxonomyError),
    #[error(transparent)]
    Classify(#[from] classify::ClassifyError),
    #[error(transparent)]
    Validate(#[from] validate::ValidateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub conversations: usize,
    pub feedback_conversations: usize,
    /// Conversations with no recognizable activity.
    pub unmatched_fraction: f64,
    pub annotated_conversations: usize,
    pub raters: usize,
    /// Chance a simulated rater rejects an intended activity.
    pub rater_miss: f64,
    /// Chance a simulated rater accepts an unintended candidate.
    pub rater_false_alarm: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            conversations: 1000,
            feedback_conversations: 400,
            unmatched_fraction: 0.03,
            annotated_conversations: 40,
            raters: 3,
            rater_miss: 0.1,
            rater_false_alarm: 0.02,
        }
    }
}

/// Intended labels of one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub conversation_id: String,
    pub user: Vec<(IwaId, ScopeLevel)>,
    pub ai: Vec<(IwaId, ScopeLevel)>,
    pub completion: CompletionLevel,
    pub speedup_50pct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thumbs: Option<Thumbs>,
}

pub fn read_truth(path: &Path) -> io::Result<Vec<TruthRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)))
        .collect()
}

struct GwaDef {
    id: &'static str,
    name: &'static str,
    /// IWA title and the phrase that signals it in a transcript.
    iwas: [(&'static str, &'static str); 6],
}

const GWAS: [GwaDef; 6] = [
    GwaDef {
        id: "4.A.1.a.1",
        name: "Getting Information",
        iwas: [
            ("Read documents or materials to inform work processes.", "policy manual"),
            ("Research healthcare or medical information.", "symptom checker"),
            ("Investigate legal or regulatory matters.", "zoning ordinance"),
            ("Obtain information about goods or services.", "product specs"),
            ("Research historical or cultural topics.", "medieval trade"),
            ("Monitor news or current events.", "election coverage"),
        ],
    },
    GwaDef {
        id: "4.A.2.a.4",
        name: "Analyzing Data or Information",
        iwas: [
            ("Analyze market or industry conditions.", "market outlook"),
            ("Analyze scientific or research data.", "regression output"),
            ("Analyze financial records or budgets.", "quarterly ledger"),
            ("Evaluate quality of products or services.", "defect rate"),
            ("Estimate costs or resource needs.", "cost estimate"),
            ("Compile data for reports or records.", "pivot table"),
        ],
    },
    GwaDef {
        id: "4.A.2.b.2",
        name: "Thinking Creatively",
        iwas: [
            ("Write material for artistic or commercial purposes.", "short story"),
            ("Design graphics or visual displays.", "logo concept"),
            ("Develop marketing or promotional strategies.", "ad campaign"),
            ("Create recipes or menus.", "dinner menu"),
            ("Plan events or programs.", "wedding schedule"),
            ("Compose music or audio content.", "chord progression"),
        ],
    },
    GwaDef {
        id: "4.A.3.b.1",
        name: "Working with Computers",
        iwas: [
            ("Program computer systems or applications.", "python script"),
            ("Resolve computer or network problems.", "router firmware"),
            ("Maintain databases or information systems.", "sql index"),
            ("Configure software or hardware settings.", "printer driver"),
            ("Develop spreadsheets or computational tools.", "spreadsheet formula"),
            ("Test software or system performance.", "unit test"),
        ],
    },
    GwaDef {
        id: "4.A.4.a.2",
        name: "Communicating with Supervisors, Peers, or Subordinates",
        iwas: [
            ("Edit written materials or documents.", "proofread paragraph"),
            ("Prepare correspondence or messages.", "cover letter"),
            ("Translate information between languages.", "spanish translation"),
            ("Present information to audiences.", "slide deck"),
            ("Negotiate agreements or resolve disputes.", "lease dispute"),
            ("Respond to customer inquiries or complaints.", "refund request"),
        ],
    },
    GwaDef {
        id: "4.A.4.b.3",
        name: "Training and Teaching Others",
        iwas: [
            ("Teach academic subjects to students.", "algebra lesson"),
            ("Explain technical concepts to others.", "blockchain basics"),
            ("Coach others in physical activities.", "workout routine"),
            ("Advise others on personal or career matters.", "career advice"),
            ("Develop educational or training materials.", "quiz questions"),
            ("Care for animals or advise on animal care.", "puppy training"),
        ],
    },
];

struct OccDef {
    soc: &'static str,
    title: &'static str,
    /// O*NET-SOC variants with their titles; several variants merge into one SOC.
    variants: &'static [(&'static str, &'static str)],
    employment: f64,
    wage: f64,
    education: u8,
    e1: f64,
    /// `(gwa, iwa)` indices of the activities the occupation's tasks use.
    profile: &'static [(usize, usize)],
}

const OCCUPATIONS: [OccDef; 10] = [
    OccDef {
        soc: "13-1161",
        title: "Market Research Analysts and Marketing Specialists",
        variants: &[
            ("13-1161.00", "Market Research Analysts and Marketing Specialists"),
            ("13-1161.01", "Search Marketing Strategists"),
        ],
        employment: 899_660.0,
        wage: 83_190.0,
        education: 6,
        e1: 0.57,
        profile: &[(1, 0), (2, 2), (1, 5), (4, 3), (0, 3)],
    },
    OccDef {
        soc: "13-2011",
        title: "Accountants and Auditors",
        variants: &[("13-2011.00", "Accountants and Auditors")],
        employment: 1_402_420.0,
        wage: 91_060.0,
        education: 6,
        e1: 0.50,
        profile: &[(1, 2), (1, 5), (3, 4), (0, 2), (4, 1)],
    },
    OccDef {
        soc: "15-1252",
        title: "Software Developers",
        variants: &[("15-1252.00", "Software Developers")],
        employment: 1_654_440.0,
        wage: 144_570.0,
        education: 6,
        e1: 0.62,
        profile: &[(3, 0), (3, 5), (3, 2), (3, 1), (5, 1)],
    },
    OccDef {
        soc: "15-2051",
        title: "Data Scientists",
        variants: &[("15-2051.00", "Data Scientists")],
        employment: 202_900.0,
        wage: 119_040.0,
        education: 8,
        e1: 0.58,
        profile: &[(1, 1), (3, 0), (1, 5), (4, 3), (3, 4)],
    },
    OccDef {
        soc: "25-1022",
        title: "Mathematical Science Teachers, Postsecondary",
        variants: &[("25-1022.00", "Mathematical Science Teachers, Postsecondary")],
        employment: 55_710.0,
        wage: 96_740.0,
        education: 11,
        e1: 0.45,
        profile: &[(5, 0), (5, 4), (1, 1), (4, 3)],
    },
    OccDef {
        soc: "25-2021",
        title: "Elementary School Teachers, Except Special Education",
        variants: &[("25-2021.00", "Elementary School Teachers, Except Special Education")],
        employment: 1_377_470.0,
        wage: 70_740.0,
        education: 6,
        e1: 0.30,
        profile: &[(5, 0), (5, 4), (2, 4), (4, 1), (5, 3)],
    },
    OccDef {
        soc: "27-3043",
        title: "Writers and Authors",
        variants: &[("27-3043.00", "Writers and Authors")],
        employment: 49_450.0,
        wage: 89_940.0,
        education: 6,
        e1: 0.60,
        profile: &[(2, 0), (4, 0), (0, 4), (0, 5), (2, 5)],
    },
    OccDef {
        soc: "27-3091",
        title: "Interpreters and Translators",
        variants: &[("27-3091.00", "Interpreters and Translators")],
        employment: 51_560.0,
        wage: 66_130.0,
        education: 6,
        e1: 0.55,
        profile: &[(4, 2), (4, 0), (0, 0), (4, 3)],
    },
    OccDef {
        soc: "35-1011",
        title: "Chefs and Head Cooks",
        variants: &[("35-1011.00", "Chefs and Head Cooks")],
        employment: 161_160.0,
        wage: 64_720.0,
        education: 3,
        e1: 0.12,
        profile: &[(2, 3), (1, 4), (1, 3), (5, 3), (5, 5)],
    },
    OccDef {
        soc: "35-2014",
        title: "Cooks, Restaurant",
        variants: &[("35-2014.00", "Cooks, Restaurant")],
        employment: 1_432_110.0,
        wage: 37_730.0,
        education: 2,
        e1: 0.05,
        profile: &[(2, 3), (1, 3), (5, 5)],
    },
];

const GROUPS: [(&str, &str, &str); 14] = [
    ("13-0000", "Business and Financial Operations Occupations", "major"),
    ("13-1000", "Business Operations Specialists", "minor"),
    ("13-2000", "Financial Specialists", "minor"),
    ("15-0000", "Computer and Mathematical Occupations", "major"),
    ("15-1200", "Computer Occupations", "minor"),
    ("15-2000", "Mathematical Science Occupations", "minor"),
    ("25-0000", "Educational Instruction and Library Occupations", "major"),
    ("25-1000", "Postsecondary Teachers", "minor"),
    ("25-2000", "Preschool, Elementary, Middle, Secondary, and Special Education Teachers", "minor"),
    ("27-0000", "Arts, Design, Entertainment, Sports, and Media Occupations", "major"),
    ("27-3000", "Media and Communication Workers", "minor"),
    ("35-0000", "Food Preparation and Serving Related Occupations", "major"),
    ("35-1000", "Supervisors of Food Preparation and Serving Workers", "minor"),
    ("35-2000", "Cooks and Food Preparation Workers", "minor"),
];

const TASKS_PER_VARIANT: usize = 8;

fn iwa_id(g: usize, i: usize) -> String {
    format!("{}.I{:02}", GWAS[g].id, i + 1)
}

fn dwa_id(g: usize, i: usize, d: usize) -> String {
    format!("{}.D{:02}", iwa_id(g, i), d + 1)
}

fn dwa_title(g: usize, i: usize, d: usize) -> String {
    let base = GWAS[g].iwas[i].0.trim_end_matches('.');
    let detail = if d == 0 { "for routine cases" } else { "for complex cases" };
    format!("{base} {detail}.")
}

struct Writer {
    dir: PathBuf,
}

impl Writer {
    fn text(&self, rel: &str, body: &str) -> io::Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, body)
    }

    fn tsv(&self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> io::Result<()> {
        let mut s = header.join("\t");
        s.push('\n');
        for r in rows {
            s.push_str(&r.join("\t"));
            s.push('\n');
        }
        self.text(rel, &s)
    }

    fn csv(&self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), SynthError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.text(rel, std::str::from_utf8(&bytes).expect("csv output is utf-8"))?;
        Ok(())
    }

    fn jsonl<T: Serialize>(&self, rel: &str, items: &[T]) -> io::Result<()> {
        let mut out = Vec::new();
        for it in items {
            serde_json::to_writer(&mut out, it)?;
            out.push(b'\n');
        }
        let path = self.dir.join(rel);
        fs::File::create(path)?.write_all(&out)
    }
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn write_onet(w: &Writer, rng: &mut ChaCha8Rng) -> io::Result<()> {
    let mut dwa_rows = Vec::new();
    let mut iwa_rows = Vec::new();
    for (g, gwa) in GWAS.iter().enumerate() {
        for (i, (title, _)) in gwa.iwas.iter().enumerate() {
            iwa_rows.push(vec![gwa.id.into(), gwa.name.into(), iwa_id(g, i), (*title).into()]);
            for d in 0..2 {
                dwa_rows.push(vec![gwa.id.into(), gwa.name.into(), iwa_id(g, i), (*title).into(), dwa_id(g, i, d), dwa_title(g, i, d)]);
            }
        }
    }
    let onet = |name: &str| format!("{ONET_DIR}/{name}");
    w.tsv(&onet("DWA Reference.txt"), &["Element ID", "Element Name", "IWA ID", "IWA Title", "DWA ID", "DWA Title"], &dwa_rows)?;
    w.tsv(&onet("IWA Reference.txt"), &["Element ID", "Element Name", "IWA ID", "IWA Title"], &iwa_rows)?;

    let categories: Vec<Vec<String>> = FrequencyCategory::ALL
        .iter()
        .enumerate()
        .map(|(k, c)| vec!["FT".into(), (k + 1).to_string(), c.label().into()])
        .collect();
    w.tsv(&onet("Task Categories.txt"), &["Scale ID", "Category", "Category Description"], &categories)?;

    let (mut statements, mut links, mut ratings, mut education) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut next_task = 10_000u32;
    for (o, occ) in OCCUPATIONS.iter().enumerate() {
        for (v, (code, title)) in occ.variants.iter().enumerate() {
            for t in 0..TASKS_PER_VARIANT {
                next_task += 1;
                let task_id = next_task.to_string();
                let (g, i) = occ.profile[(t + v) % occ.profile.len()];
                let d = (t / occ.profile.len()) % 2;
                let mut linked = vec![dwa_id(g, i, d)];
                if t % 3 == 2 {
                    let (g2, i2) = occ.profile[(t + v + 1) % occ.profile.len()];
                    linked.push(dwa_id(g2, i2, 0));
                }
                let statement = format!("{} in {} work.", dwa_title(g, i, d).trim_end_matches('.'), title.to_lowercase());
                statements.push(vec![(*code).into(), (*title).into(), task_id.clone(), statement, if t < 5 { "Core" } else { "Supplemental" }.into()]);
                for dwa in linked {
                    links.push(vec![(*code).into(), task_id.clone(), dwa]);
                }
                let importance = round2(rng.random_range(1.5..5.0));
                ratings.push(vec![(*code).into(), task_id.clone(), "IM".into(), "n/a".into(), format!("{importance:.2}")]);
                // One task carries importance only, which leaves it unrated.
                if !(o == 0 && v == 0 && t == TASKS_PER_VARIANT - 1) {
                    let relevance = round2(rng.random_range(20.0..100.0));
                    ratings.push(vec![(*code).into(), task_id.clone(), "RT".into(), "n/a".into(), format!("{relevance:.2}")]);
                }
                let raw: Vec<f64> = (0..7).map(|_| rng.random_range(0.05..1.0)).collect();
                let total: f64 = raw.iter().sum();
                for (k, x) in raw.iter().enumerate() {
                    let pct = (x / total * 10_000.0).floor() / 100.0;
                    ratings.push(vec![(*code).into(), task_id.clone(), "FT".into(), (k + 1).to_string(), format!("{pct:.2}")]);
                }
            }
            for (cat, pct) in [(occ.education, 60.0), (occ.education.saturating_sub(1).max(1), 25.0), ((occ.education + 1).min(12), 15.0)] {
                education.push(vec![(*code).into(), "2.D.1".into(), "Required Level of Education".into(), "RL".into(), cat.to_string(), format!("{pct:.2}")]);
            }
        }
    }
    w.tsv(&onet("Task Statements.txt"), &["O*NET-SOC Code", "Title", "Task ID", "Task", "Task Type"], &statements)?;
    w.tsv(&onet("Tasks to DWAs.txt"), &["O*NET-SOC Code", "Task ID", "DWA ID"], &links)?;
    w.tsv(&onet("Task Ratings.txt"), &["O*NET-SOC Code", "Task ID", "Scale ID", "Category", "Data Value"], &ratings)?;
    w.tsv(
        &onet("Education, Training, and Experience.txt"),
        &["O*NET-SOC Code", "Element ID", "Element Name", "Scale ID", "Category", "Data Value"],
        &education,
    )?;
    Ok(())
}

fn write_labor(w: &Writer) -> Result<(), SynthError> {
    let crosswalk: Vec<Vec<String>> = OCCUPATIONS
        .iter()
        .flat_map(|o| o.variants.iter().map(move |(code, title)| vec![(*code).into(), (*title).into(), o.soc.into(), o.title.into()]))
        .collect();
    w.csv(CROSSWALK, &["O*NET-SOC 2019 Code", "O*NET-SOC 2019 Title", "2018 SOC Code", "2018 SOC Title"], &crosswalk)?;
    let mut oews: Vec<Vec<String>> = GROUPS
        .iter()
        .map(|(code, title, group)| vec![(*code).into(), (*title).into(), (*group).into(), String::new(), String::new()])
        .collect();
    for o in &OCCUPATIONS {
        oews.push(vec![o.soc.into(), o.title.into(), "detailed".into(), format!("{}", o.employment), format!("{}", o.wage)]);
    }
    w.csv(OEWS, &["OCC_CODE", "OCC_TITLE", "O_GROUP", "TOT_EMP", "A_MEAN"], &oews)?;
    let e1: Vec<Vec<String>> = OCCUPATIONS.iter().map(|o| vec![o.soc.into(), format!("{}", o.e1)]).collect();
    w.csv(E1, &["soc_code", "e1"], &e1)?;
    Ok(())
}

const USER_TEMPLATES: [&str; 5] = [
    "Can you help me with the {}?",
    "I keep thinking about the {} today.",
    "Here is more context on the {}.",
    "My manager asked about the {} again.",
    "One more question on the {}.",
];

const AI_TEMPLATES: [&str; 5] = [
    "I drafted the {} below.",
    "Here is a revised {} for you.",
    "I checked the {} carefully.",
    "The {} now covers the main points.",
    "I also summarized the {}.",
];

/// Per-IWA propensities drawn once per fixture.
struct Profile {
    keyword: Vec<&'static str>,
    scope_base: Vec<i32>,
    completion: Vec<f64>,
    /// Primary-goal slots per IWA, shuffled, one per matched conversation.
    primary: Vec<usize>,
    secondary: Vec<usize>,
}

fn quota_list(weights: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let short = n - counts.iter().sum::<usize>();
    for &j in order.iter().take(short) {
        counts[j] += 1;
    }
    let mut list: Vec<usize> = counts.iter().enumerate().flat_map(|(j, c)| std::iter::repeat_n(j, *c)).collect();
    list.shuffle(rng);
    list
}

fn profile(n_matched: usize, rng: &mut ChaCha8Rng) -> Profile {
    let n = GWAS.len() * 6;
    let keyword = GWAS.iter().flat_map(|g| g.iwas.iter().map(|(_, k)| *k)).collect();
    let mut rank: Vec<usize> = (0..n).collect();
    rank.shuffle(rng);
    let weights: Vec<f64> = rank.iter().map(|r| 1.0 / (*r as f64 + 9.0)).collect();
    Profile {
        keyword,
        scope_base: (0..n).map(|_| rng.random_range(1..=5)).collect(),
        completion: (0..n).map(|_| rng.random_range(0.35..0.95)).collect(),
        primary: quota_list(&weights, n_matched, rng),
        secondary: quota_list(&weights, n_matched, rng),
    }
}

fn flat_id(j: usize) -> IwaId {
    IwaId::new(iwa_id(j / 6, j % 6))
}

/// Same-GWA neighbour used for the assistant's side of the exchange.
fn partner(j: usize, step: usize) -> usize {
    (j / 6) * 6 + (j % 6 + step) % 6
}

fn scope_of(hits: i32) -> ScopeLevel {
    ScopeLevel::ALL[hits.clamp(1, 5) as usize]
}

fn sentences(templates: &[&str; 5], keyword: &str, hits: i32, offset: usize) -> String {
    (0..hits as usize)
        .map(|k| templates[(k + offset) % templates.len()].replace("{}", keyword))
        .collect::<Vec<_>>()
        .join(" ")
}

fn conversations(
    prefix: &str,
    n: usize,
    unmatched_fraction: f64,
    with_thumbs: bool,
    rng: &mut ChaCha8Rng,
) -> (Vec<ConversationRecord>, Vec<TruthRecord>) {
    let unmatched = (n as f64 * unmatched_fraction).round() as usize;
    let p = profile(n - unmatched, rng);
    let mut kinds: Vec<bool> = std::iter::repeat_n(false, unmatched).chain(std::iter::repeat_n(true, n - unmatched)).collect();
    kinds.shuffle(rng);
    let (mut records, mut truth) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut slot = 0;
    for (c, matched) in kinds.into_iter().enumerate() {
        let id = format!("{prefix}-{:04}", c + 1);
        let mut user: Vec<(usize, i32)> = Vec::new();
        let mut ai: Vec<(usize, i32)> = Vec::new();
        if matched {
            let first = p.primary[slot];
            let second = p.secondary[slot];
            slot += 1;
            let mut goals = vec![first];
            if rng.random_bool(0.3) && second != first {
                goals.push(second);
            }
            for &u in &goals {
                user.push((u, (p.scope_base[u] + rng.random_range(-1..=1)).clamp(1, 5)));
                let mut acts = vec![if rng.random_bool(0.45) { u } else { partner(u, 1) }];
                if rng.random_bool(0.1) {
                    acts.push(partner(u, 2));
                }
                for a in acts {
                    if !ai.iter().any(|(x, _)| *x == a) {
                        ai.push((a, (p.scope_base[a] + rng.random_range(-1..=1)).clamp(1, 5)));
                    }
                }
            }
        }
        let propensity = user.first().map_or(0.2, |(u, _)| p.completion[*u]);
        let r: f64 = rng.random();
        let completion = if r < propensity {
            CompletionLevel::Complete
        } else if r < propensity + (1.0 - propensity) / 2.0 {
            CompletionLevel::Partial
        } else {
            CompletionLevel::NotComplete
        };
        let speedup = match completion {
            CompletionLevel::Complete => rng.random_bool(0.4),
            CompletionLevel::Partial => rng.random_bool(0.15),
            CompletionLevel::NotComplete => false,
        };
        let thumbs = with_thumbs.then(|| {
            let up = match completion {
                CompletionLevel::Complete => 0.85,
                CompletionLevel::Partial => 0.55,
                CompletionLevel::NotComplete => 0.3,
            };
            if rng.random_bool(up) { Thumbs::Up } else { Thumbs::Down }
        });

        let user_text = if user.is_empty() {
            "Hello there, how are you doing today?".to_string()
        } else {
            user.iter().enumerate().map(|(k, (u, h))| sentences(&USER_TEMPLATES, p.keyword[*u], *h, k)).collect::<Vec<_>>().join(" ")
        };
        let ai_text = if ai.is_empty() {
            "I am well, thanks for asking.".to_string()
        } else {
            ai.iter().enumerate().map(|(k, (a, h))| sentences(&AI_TEMPLATES, p.keyword[*a], *h, k)).collect::<Vec<_>>().join(" ")
        };
        let mut closing = match completion {
            CompletionLevel::Complete => "All DONE, tell me if anything else comes up.".to_string(),
            CompletionLevel::Partial => "This is PARTIAL progress and some steps remain.".to_string(),
            CompletionLevel::NotComplete => "I could not finish this yet.".to_string(),
        };
        if speedup {
            closing.push_str(" This should be FAST to apply.");
        }
        let messages = vec![
            Message { role: Role::User, text: user_text },
            Message { role: Role::Assistant, text: ai_text },
            Message { role: Role::User, text: "Thanks, that helps.".into() },
            Message { role: Role::Assistant, text: closing },
        ];
        records.push(ConversationRecord { conversation_id: id.clone(), messages, thumbs, locale: Some("en-US".into()) });
        truth.push(TruthRecord {
            conversation_id: id,
            user: user.iter().map(|(j, h)| (flat_id(*j), scope_of(*h))).collect(),
            ai: ai.iter().map(|(j, h)| (flat_id(*j), scope_of(*h))).collect(),
            completion,
            speedup_50pct: speedup,
            thumbs,
        });
    }
    (records, truth)
}

fn rules() -> Vec<KeywordRule> {
    GWAS.iter()
        .flat_map(|g| g.iwas.iter().map(|(title, kw)| KeywordRule { iwa: (*title).into(), keywords: vec![(*kw).into()] }))
        .collect()
}

/// Candidate sets for a sample of conversations, labeled by simulated
/// raters who see the intended labels through independent noise.
fn annotations(
    dir: &Path,
    cfg: &SynthConfig,
    records: &[ConversationRecord],
    truth: &[TruthRecord],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<AnnotationSet>, SynthError> {
    let onet = taxonomy::load_onet(&dir.join(ONET_DIR))?;
    let store = taxonomy::merge_soc(&onet, &dir.join(CROSSWALK), &dir.join(OEWS))?;
    let backend = MockBackend::new(rules());
    let options = LabelOptions::default();
    let catalog = IwaCatalog::from_store(&store, &backend, options.embedding_model.clone())?;
    let picks = rand::seq::index::sample(rng, records.len(), cfg.annotated_conversations.min(records.len())).into_vec();
    let mut picks = picks;
    picks.sort_unstable();
    let mut rankings = Vec::new();
    for &i in &picks {
        let summary = classify::stage_one(&records[i], &backend, &options)?;
        for side in Side::BOTH {
            let ranked = classify::rank_candidates(&summary, side, &catalog, &backend, &options)?;
            rankings.push(Ranking { conversation_id: records[i].conversation_id.clone(), side, ranked });
        }
    }
    let mut sets = validate::build_annotation_sets(&rankings, cfg.seed)?;
    let by_id: BTreeMap<&str, &TruthRecord> = truth.iter().map(|t| (t.conversation_id.as_str(), t)).collect();
    for set in &mut sets {
        let t = by_id[set.conversation_id.as_str()];
        let intended: BTreeSet<&IwaId> = match set.side {
            Side::User => t.user.iter().map(|(i, _)| i).collect(),
            Side::Ai => t.ai.iter().map(|(i, _)| i).collect(),
        };
        for r in 0..cfg.raters {
            let chosen = set
                .candidates
                .iter()
                .filter(|c| {
                    if intended.contains(c) {
                        !rng.random_bool(cfg.rater_miss)
                    } else {
                        rng.random_bool(cfg.rater_false_alarm)
                    }
                })
                .cloned()
                .collect();
            set.rater_labels.insert(format!("rater{}", r + 1), chosen);
        }
    }
    Ok(sets)
}

/// The run config shipped with the fixture, with paths relative to it.
pub fn run_config(cfg: &SynthConfig) -> RunConfig {
    RunConfig {
        seed: cfg.seed,
        parallelism: 4,
        paths: PathsConfig {
            onet_dir: ONET_DIR.into(),
            crosswalk: CROSSWALK.into(),
            oews: OEWS.into(),
            corpus: CORPUS.into(),
            thumbs_corpus: Some(THUMBS_CORPUS.into()),
            work_dir: "work".into(),
            labels_out: None,
            reports_out: "reports".into(),
            e1_file: Some(E1.into()),
            annotations: Some(ANNOTATIONS.into()),
        },
        sampling: SamplingConfig::default(),
        backend: BackendConfig { kind: BackendKind::Mock, rules: Some(RULES.into()), ..BackendConfig::default() },
        score: Default::default(),
        metrics: Default::default(),
        validation: Default::default(),
        report: Default::default(),
    }
}

/// Writes the full fixture into `dir`.
pub fn generate(dir: &Path, cfg: &SynthConfig) -> Result<(), SynthError> {
    fs::create_dir_all(dir)?;
    let w = Writer { dir: dir.to_path_buf() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    write_onet(&w, &mut rng)?;
    write_labor(&w)?;
    w.text(RULES, &(serde_json::to_string_pretty(&rules()).map_err(io::Error::from)? + "\n"))?;

    let (records, truth) = conversations("c", cfg.conversations, cfg.unmatched_fraction, false, &mut rng);
    w.jsonl(CORPUS, &records)?;
    w.jsonl(TRUTH, &truth)?;
    let (fb_records, fb_truth) = conversations("f", cfg.feedback_conversations, cfg.unmatched_fraction, true, &mut rng);
    w.jsonl(THUMBS_CORPUS, &fb_records)?;
    w.jsonl(THUMBS_TRUTH, &fb_truth)?;

    let sets = annotations(dir, cfg, &records, &truth, &mut rng)?;
    validate::write_annotations(&dir.join(ANNOTATIONS), &sets)?;

    let mut toml = String::new();
    let _ = writeln!(toml, "# Synthetic fixture run. Paths are relative to this file.");
    toml.push_str(&run_config(cfg).to_toml());
    w.text(CONFIG, &toml)?;
    Ok(())
}
