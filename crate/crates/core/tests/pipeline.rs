use std::fs;
use std::path::Path;
use std::process::Command;

use semshift::pipeline::{Pipeline, PipelineConfig, Stage, StageOutcome};
use semshift::Error;

/// A tiny synthetic corpus and a config that trains on it in seconds.
fn small_run(workdir: &Path) -> PipelineConfig {
    let mut config = PipelineConfig::default();
    config.paths.workdir = workdir.to_owned();
    config.synth.vocab_size = 64;
    config.synth.slices = 3;
    config.synth.sentences_per_slice = 4000;
    config.synth.per_behavior = 1;
    Pipeline::new(config).unwrap().run(Stage::Synth).unwrap();
    let mut config = PipelineConfig::load(&workdir.join("synth/config.toml")).unwrap();
    config.train.dim = 16;
    config.train.epochs = 1;
    config.thresholds.viability_tokens = 1000;
    config.thresholds.poet_eligibility_tokens = 1000;
    config.graph.k = 5;
    config
}

#[test]
fn reruns_skip_and_changes_propagate_downstream() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_run(dir.path());
    let pipeline = Pipeline::new(config.clone()).unwrap();
    let first = pipeline.run_all().unwrap();
    assert!(first.iter().all(|(_, o)| *o == StageOutcome::Ran));
    let second = pipeline.run_all().unwrap();
    assert!(second.iter().all(|(_, o)| *o == StageOutcome::Skipped));

    // A graph setting changes graph and everything after it, not training.
    let mut changed = config.clone();
    changed.graph.k = 6;
    let third = Pipeline::new(changed).unwrap().run_all().unwrap();
    let ran: Vec<Stage> = third.iter().filter(|(_, o)| *o == StageOutcome::Ran).map(|(s, _)| *s).collect();
    assert_eq!(ran, vec![Stage::Graph, Stage::Metrics, Stage::Poet, Stage::Compare, Stage::Report]);
}

#[test]
fn tampered_output_forces_a_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(small_run(dir.path())).unwrap();
    for stage in [Stage::Ingest, Stage::Slice] {
        pipeline.run(stage).unwrap();
    }
    fs::write(dir.path().join("slice/century/manifest.json"), "[]").unwrap();
    assert_eq!(pipeline.run(Stage::Slice).unwrap(), StageOutcome::Ran);
    assert_eq!(pipeline.run(Stage::Slice).unwrap(), StageOutcome::Skipped);
}

#[test]
fn missing_upstream_names_the_stage_to_run() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(small_run(dir.path())).unwrap();
    pipeline.run(Stage::Ingest).unwrap();
    match pipeline.run(Stage::Train) {
        Err(e @ Error::MissingUpstream { run_first: "slice", .. }) => assert_eq!(e.exit_code(), 3),
        other => panic!("expected missing upstream, got {other:?}"),
    }
    assert!(!dir.path().join("train").exists());
}

#[test]
fn report_runs_on_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(small_run(dir.path())).unwrap();
    for stage in [Stage::Ingest, Stage::Slice, Stage::Report] {
        pipeline.run(stage).unwrap();
    }
    let index = semshift::pipeline::validate_report(&dir.path().join("report")).unwrap();
    assert!(index.omitted.contains_key("fig1"));
    assert!(index.files.contains_key("summary.txt"));
}

fn semshift(workdir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_semshift"))
        .args(args)
        .env("SEMSHIFT_WORKDIR", workdir)
        .output()
        .unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = semshift(dir.path(), &["graph"]);
    assert_eq!(code, 3, "{err}");
    assert!(err.contains("run align first"), "{err}");

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[graph]\nk = 0\n").unwrap();
    let (code, _) = semshift(dir.path(), &["--config", bad.to_str().unwrap(), "ingest"]);
    assert_eq!(code, 2);

    let missing = dir.path().join("none.jsonl");
    let (code, _) = semshift(dir.path(), &["--corpus", missing.to_str().unwrap(), "ingest"]);
    assert_eq!(code, 4);
}
