use std::path::PathBuf;

use lfuq_core::corpus::{load_dataset, segment_sentences};
use serde::Deserialize;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[derive(Deserialize)]
struct Bio {
    id: String,
    text: String,
    sentences: Vec<String>,
}

#[test]
fn biographies_match_annotated_segmentation() {
    let raw = std::fs::read_to_string(fixture("biographies.jsonl")).unwrap();
    let bios: Vec<Bio> = raw.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(bios.len(), 20);
    for bio in &bios {
        assert_eq!(segment_sentences(&bio.text), bio.sentences, "biography `{}`", bio.id);
    }
    let total: usize = bios.iter().map(|b| b.sentences.len()).sum();
    assert_eq!(total, 62);
}

#[test]
fn longfact_shaped_fixture_loads_every_record() {
    let ds = load_dataset(&fixture("longfact_380.jsonl")).unwrap();
    assert_eq!(ds.len(), 380);
    assert!(ds.rejected.is_empty());
    assert_eq!(ds.samples[0].prompt_id(), "lf000");
    assert_eq!(ds.samples[379].prompt_id(), "lf379");
    assert_eq!(ds.samples.iter().filter(|s| s.factuality().is_some()).count(), 190);
    assert!(ds.samples.iter().all(|s| s.n() >= 3));
}
