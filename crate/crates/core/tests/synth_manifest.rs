use std::fs;

use chartmoe_core::chartsynth::{parse_code, synth_batch, ChartSpec, MetaTable};
use serde_json::Value;

#[test]
fn manifest_is_independent_of_worker_count_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ra = synth_batch(60, 100, &a, 1).unwrap();
    let rb = synth_batch(60, 100, &b, 3).unwrap();
    assert_eq!(ra.manifest_sha256, rb.manifest_sha256);
    assert_eq!(ra.retention, 1.0);
    let text = fs::read_to_string(a.join("manifest.jsonl")).unwrap();
    assert_eq!(text, fs::read_to_string(b.join("manifest.jsonl")).unwrap());
    for line in text.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        let spec: ChartSpec = serde_json::from_value(rec["spec"].clone()).unwrap();
        let table: MetaTable = serde_json::from_value(rec["table"].clone()).unwrap();
        assert_eq!(
            parse_code(rec["code"].as_str().unwrap()).unwrap(),
            (spec, table)
        );
        let svg = fs::read_to_string(a.join(rec["svg_path"].as_str().unwrap())).unwrap();
        assert!(roxmltree::Document::parse(&svg).is_ok());
        let tasks: Vec<&str> = rec["instructions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|i| i["task"].as_str().unwrap())
            .collect();
        assert_eq!(tasks, ["chart-to-table", "chart-to-json", "chart-to-code"]);
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    assert!(matches!(
        synth_batch(3, 0, &file.join("sub"), 1),
        Err(chartmoe_core::Error::Io { .. })
    ));
}
