//! Replays the checked-in fuzz seeds through the parsers they target.
//! Seeds are valid or near-valid inputs; most should parse.

use std::path::PathBuf;

use ilicast::epiweek::{Epiweek, Season};
use ilicast::geography::AdjacencyGraph;
use ilicast::ingest::{parse_canonical, parse_ili_reader, Schema, SyntheticConfig};
use ilicast::runner::persist::{forecast_csv, parse_forecast_csv, Manifest, ManifestLine};
use ilicast::runner::RunConfig;
use ilicast::scoring::ScoreTable;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn ili_csv() {
    for (name, b) in seeds("ili_csv") {
        let fluview = parse_ili_reader(b.as_slice(), &Schema::fluview());
        let canonical = parse_canonical(&b);
        match name.as_str() {
            "fluview" => {
                let p = fluview.unwrap();
                assert_eq!(p.table.len(), 3);
                assert_eq!(p.table.states(), ["AL", "GA"]);
            }
            "canonical" => assert!(canonical.unwrap().rejects.is_empty()),
            "bad_rows" => assert_eq!(canonical.unwrap().rejects.len(), 3),
            _ => {}
        }
    }
}

#[test]
fn configs_and_maps() {
    for (name, b) in seeds("schema") {
        Schema::parse(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("adjacency") {
        AdjacencyGraph::parse(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("run_config") {
        RunConfig::parse(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, b) in seeds("synthetic_config") {
        SyntheticConfig::parse_toml(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn run_files() {
    for (name, b) in seeds("manifest") {
        let m = Manifest::parse(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!m.weeks.is_empty());
        for line in text(&b).lines() {
            ManifestLine::parse(line).unwrap();
        }
    }
    for (name, b) in seeds("forecast_csv") {
        let cells = parse_forecast_csv(&b).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(forecast_csv(&cells).unwrap(), b, "{name}");
    }
    for (name, b) in seeds("score_table") {
        let t = ScoreTable::read_csv(b.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!t.records.is_empty());
    }
}

#[test]
fn calendar_strings() {
    for (name, b) in seeds("epiweek") {
        let s = text(&b);
        assert!(s.parse::<Epiweek>().is_ok() || s.parse::<Season>().is_ok(), "{name}");
    }
}
