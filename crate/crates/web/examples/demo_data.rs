//! Builds `www/demo.json` from a finished pipeline run.
//!
//! Usage: `cargo run -p workscope-web --example demo_data -- <run dir> [out]`
//! where the run dir holds the `work/` tree written by `workscope run`.

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use workscope::classify::Side;
use workscope::metrics::{IwaStats, StatsTable};
use workscope::score::{factors, ScoreTable};
use workscope::taxonomy::TaxonomyStore;
use workscope::workforce::WeightTable;
use workscope_web::{Dataset, Occupation};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args_os().skip(1).map(PathBuf::from);
    let run = args.next().ok_or("usage: demo_data <run dir> [out]")?;
    let out = args.next().unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("www/demo.json"));
    let work = run.join("work");

    let store = TaxonomyStore::read_dump(BufReader::new(File::open(work.join("ingest/taxonomy.jsonl"))?))?;
    let weights = WeightTable::read_csv(File::open(work.join("score/weights.csv"))?)?;
    let scores = ScoreTable::read_csv(&work.join("score/scores.csv"))?;
    let rows = csv::Reader::from_path(work.join("aggregate/stats.csv"))?
        .deserialize::<IwaStats>()
        .collect::<Result<Vec<_>, _>>()?;
    let stats = StatsTable { rows };

    let occupations = scores
        .rows
        .iter()
        .filter_map(|s| {
            Some(Occupation {
                soc_code: s.soc_code.clone(),
                title: s.title.clone(),
                employment: s.employment,
                weights: weights.get(&s.soc_code)?.clone(),
            })
        })
        .collect();
    let data = Dataset {
        occupations,
        iwa_titles: store.iwas().map(|n| (n.iwa_id.clone(), n.title.clone())).collect(),
        user: factors(&stats, Side::User),
        ai: factors(&stats, Side::Ai),
    };
    std::fs::write(&out, serde_json::to_string_pretty(&data)? + "\n")?;
    println!("wrote {}", out.display());
    Ok(())
}
