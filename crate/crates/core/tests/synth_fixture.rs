use std::fs;
use std::path::{Path, PathBuf};

use workscope::classify::mock::MockBackend;
use workscope::classify::{label_conversation, IwaCatalog, LabelOptions, Side};
use workscope::corpus::{load_corpus, CorpusKind};
use workscope::synth::{self, generate, read_truth, SynthConfig};
use workscope::taxonomy::{load_onet, merge_soc};

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synth")
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn bundled_fixture_matches_generator() {
    let fresh = tempfile::tempdir().unwrap();
    generate(fresh.path(), &SynthConfig::default()).unwrap();
    let expected = files(fresh.path());
    assert_eq!(files(&bundled()), expected, "regenerate with the synth_fixture example");
    for rel in expected {
        assert!(
            fs::read(bundled().join(&rel)).unwrap() == fs::read(fresh.path().join(&rel)).unwrap(),
            "{} differs; regenerate with the synth_fixture example",
            rel.display()
        );
    }
}

#[test]
fn mock_recovers_intended_labels() {
    let dir = bundled();
    let store = merge_soc(&load_onet(&dir.join(synth::ONET_DIR)).unwrap(), &dir.join(synth::CROSSWALK), &dir.join(synth::OEWS)).unwrap();
    let backend = MockBackend::from_json_file(&dir.join(synth::RULES)).unwrap();
    let options = LabelOptions::default();
    let catalog = IwaCatalog::from_store(&store, &backend, options.embedding_model.clone()).unwrap();
    let records = load_corpus(&dir.join(synth::CORPUS), CorpusKind::Uniform).unwrap().records().unwrap();
    let truth = read_truth(&dir.join(synth::TRUTH)).unwrap();
    assert_eq!(records.len(), truth.len());
    for (rec, t) in records.iter().zip(&truth).step_by(7) {
        let labels = label_conversation(rec, &catalog, &backend, &options).unwrap();
        assert_eq!(labels.conversation_id, t.conversation_id);
        let got = |side| {
            let mut v: Vec<_> = labels.matches(side).iter().map(|m| (m.iwa_id.clone(), m.scope)).collect();
            v.sort();
            v
        };
        let mut want_user = t.user.clone();
        want_user.sort();
        let mut want_ai = t.ai.clone();
        want_ai.sort();
        assert_eq!(got(Side::User), want_user, "{}", t.conversation_id);
        assert_eq!(got(Side::Ai), want_ai, "{}", t.conversation_id);
        assert_eq!(labels.completion.level, t.completion);
        assert_eq!(labels.completion.speedup_50pct, t.speedup_50pct);
    }
}

#[test]
fn fixture_store_survives_dump_round_trip() {
    let dir = bundled();
    let store = merge_soc(&load_onet(&dir.join(synth::ONET_DIR)).unwrap(), &dir.join(synth::CROSSWALK), &dir.join(synth::OEWS)).unwrap();
    let mut buf = Vec::new();
    store.write_dump(&mut buf).unwrap();
    let back = workscope::taxonomy::TaxonomyStore::read_dump(buf.as_slice()).unwrap();
    assert_eq!(back, store);
}
