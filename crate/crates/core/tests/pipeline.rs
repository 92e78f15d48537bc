use std::collections::BTreeSet;
use std::io::{Cursor, Write};
use std::path::Path;

use storeloc::io::{read_results, TransactionReader};
use storeloc::pipeline::{self, Paths, PipelineConfig};
use storeloc::sharing::Node;
use storeloc::solver::{MethodTag, NeighborSet, SolveMethod};
use storeloc::synth::SynthConfig;
use storeloc::{Error, ErrorKind, GeoPoint, Region};

fn region() -> Region {
    Region::new("test", GeoPoint::new(47.6062, -122.3321).unwrap())
}

fn small_city(dir: &Path, seed: u64) -> PipelineConfig {
    let synth = SynthConfig {
        seed,
        n_stores: 80,
        n_customers: 2500,
        city_extent: 6000.0,
        ..SynthConfig::default()
    };
    let out = pipeline::run_synth(&synth, 0.5, seed, &region(), dir).unwrap();
    PipelineConfig::new(
        region(),
        Paths {
            transactions: out.transactions,
            seeds: out.seeds,
            ..Paths::default()
        },
    )
}

#[test]
fn repeated_runs_write_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 3);
    let mut bytes = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.jsonl"));
        cfg.paths.output = Some(out.clone());
        pipeline::run_infer(&cfg).unwrap();
        bytes.push(std::fs::read(out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn impossible_threshold_leaves_everything_unresolved() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 4);
    cfg.theta = 1.01;
    let out = pipeline::run_infer(&cfg).unwrap();
    assert!(!out.results.is_empty());
    assert_eq!(out.resolved(), 0);
    assert!(out
        .results
        .iter()
        .all(|r| r.solution.location.is_none() && r.solution.method == MethodTag::Unresolved));
}

#[test]
fn stores_with_neighbors_are_placed() {
    let dir = tempfile::tempdir().unwrap();
    for method in [SolveMethod::Grid, SolveMethod::Gradient] {
        let mut cfg = small_city(dir.path(), 5);
        cfg.solver.method = method;
        let out = pipeline::run_infer(&cfg).unwrap();
        let graph = &out.prepared.graph;
        for (j, r) in out.results.iter().enumerate() {
            let n = NeighborSet::from_graph(graph, Node::Unknown(j), cfg.theta).len();
            assert_eq!(r.solution.n_neighbors, n);
            assert_eq!(r.solution.location.is_some(), n > 0, "{}", r.store);
            if let Some(p) = r.solution.location {
                assert!(p.is_finite());
            }
        }
    }
}

#[test]
fn results_file_is_sorted_and_complete() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 6);
    let out_path = dir.path().join("results.jsonl");
    cfg.paths.output = Some(out_path.clone());
    let out = pipeline::run_infer(&cfg).unwrap();
    let lines = read_results(&out_path).unwrap();
    assert_eq!(lines.len(), out.results.len());
    let keys: Vec<_> = lines.iter().map(|l| (l.merchant.clone(), l.store_id.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for l in &lines {
        assert_eq!(l.lat.is_some(), l.method != "unresolved");
    }
}

#[test]
fn evaluation_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 7);
    cfg.paths.report_csv = Some(dir.path().join("report.csv"));
    cfg.paths.report_table = Some(dir.path().join("report.txt"));
    let report = pipeline::run_evaluate(&cfg).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("region,scope,method,median_error_m,mean_error_m,n_evaluated,n_unresolved"));
    assert!(csv.lines().count() > 3);
    assert!(std::fs::read_to_string(dir.path().join("report.txt"))
        .unwrap()
        .contains("MAXLIKE"));
    assert_eq!(report.region, "test");
}

#[test]
fn strict_loo_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 8);
    cfg.strict_loo = true;
    let report = pipeline::run_evaluate(&cfg).unwrap();
    for m in report.per_method.values() {
        assert_eq!(m.n_evaluated + m.n_unresolved, report.descriptive.n_stores);
    }
}

#[test]
fn density_round_trips_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 9);
    let table = dir.path().join("density.txt");
    cfg.paths.output = Some(table.clone());
    let estimated = pipeline::run_density(&cfg).unwrap();

    cfg.paths.output = Some(dir.path().join("a.jsonl"));
    let fresh = pipeline::run_infer(&cfg).unwrap();
    cfg.paths.density_in = Some(table);
    cfg.paths.output = Some(dir.path().join("b.jsonl"));
    let loaded = pipeline::run_infer(&cfg).unwrap();
    assert_eq!(loaded.prepared.density.to_text(), estimated.to_text());
    assert_eq!(fresh.results, loaded.results);
}

#[test]
fn no_usable_seeds_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), 10);
    std::fs::write(&cfg.paths.seeds, "{\"merchant\":\"nobody\",\"store_id\":1,\"lat\":47.6,\"lon\":-122.3}\n").unwrap();
    let err = pipeline::run_infer(&cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
}

#[test]
fn conflicting_seeds_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_city(dir.path(), 11);
    let mut f = std::fs::OpenOptions::new().append(true).open(&cfg.paths.seeds).unwrap();
    let first = std::fs::read_to_string(&cfg.paths.seeds).unwrap();
    let line = first.lines().next().unwrap().replace("\"lat\":47.", "\"lat\":46.");
    writeln!(f, "{line}").unwrap();
    drop(f);
    assert!(matches!(pipeline::run_infer(&cfg), Err(Error::SeedConflict { .. })));
}

#[test]
fn invalid_theta_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_city(dir.path(), 12);
    cfg.theta = -0.1;
    assert_eq!(pipeline::run_infer(&cfg).unwrap_err().kind(), ErrorKind::Config);
    cfg.theta = f64::NAN;
    assert_eq!(pipeline::run_infer(&cfg).unwrap_err().kind(), ErrorKind::Config);
}

/// One million lines with every 40th malformed and every 1000th blank.
#[test]
fn ingestion_counts_every_line() {
    let mut text = String::with_capacity(70_000_000);
    let (mut valid, mut malformed, mut blank) = (0usize, 0usize, 0usize);
    let mut stores = BTreeSet::new();
    for i in 0..1_000_000usize {
        if i % 1000 == 999 {
            text.push('\n');
            blank += 1;
        } else if i % 40 == 7 {
            text.push_str(if i % 80 == 7 { "{not json\n" } else { "{\"user_id\":\"\",\"merchant\":\"m\",\"store_id\":\"1\"}\n" });
            malformed += 1;
        } else {
            let store = i % 97;
            stores.insert(store);
            text.push_str(&format!("{{\"user_id\":{},\"merchant\":\"chain\",\"store_id\":{}}}\n", i % 5003, store));
            valid += 1;
        }
    }
    let mut reader = TransactionReader::new("mem", Cursor::new(text.into_bytes()));
    let n = reader.by_ref().count();
    let stats = reader.finish().unwrap();
    assert_eq!(n, valid);
    assert_eq!(stats.records, valid);
    assert_eq!(stats.malformed, malformed);
    assert_eq!(stats.lines, 1_000_000 - blank);
    assert_eq!(stores.len(), 97);
}

#[test]
fn too_many_malformed_lines_is_fatal() {
    let mut text = String::new();
    for i in 0..100 {
        if i < 11 {
            text.push_str("garbage\n");
        } else {
            text.push_str("{\"user_id\":\"u\",\"merchant\":\"m\",\"store_id\":\"s\"}\n");
        }
    }
    let mut reader = TransactionReader::new("mem", Cursor::new(text.clone().into_bytes()));
    reader.by_ref().for_each(drop);
    let err = reader.finish().unwrap_err();
    assert!(matches!(err, Error::TooManyMalformed { malformed: 11, total: 100, first_line: 1, .. }));
    assert_eq!(err.kind(), ErrorKind::Data);

    let ok = text.replacen("garbage\n", "{\"user_id\":\"v\",\"merchant\":\"m\",\"store_id\":\"s\"}\n", 1);
    let mut reader = TransactionReader::new("mem", Cursor::new(ok.into_bytes()));
    reader.by_ref().for_each(drop);
    assert_eq!(reader.finish().unwrap().malformed, 10);
}
