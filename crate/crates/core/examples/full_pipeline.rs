//! Runs every stage on a small synthetic corpus in a scratch workdir and
//! prints the report summary. A second run skips every stage.
//!
//! cargo run --release --example full_pipeline [workdir]

use std::path::PathBuf;

use semshift::pipeline::{Pipeline, PipelineConfig, Stage};

fn main() -> semshift::Result<()> {
    let workdir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("semshift-example"));
    let mut config = PipelineConfig::default();
    config.paths.workdir = workdir.clone();
    config.synth.vocab_size = 320;
    config.synth.sentences_per_slice = 30_000;
    config.synth.per_behavior = 2;
    Pipeline::new(config)?.run(Stage::Synth)?;

    let mut config = PipelineConfig::load(&workdir.join("synth/config.toml"))?;
    config.thresholds.viability_tokens = 50_000;
    config.thresholds.poet_eligibility_tokens = 20_000;
    let pipeline = Pipeline::new(config)?;
    for (stage, outcome) in pipeline.run_all()? {
        println!("{stage}: {outcome:?}");
    }
    print!("{}", std::fs::read_to_string(workdir.join("report/summary.txt"))?);
    let again = pipeline.run_all()?;
    println!("second run: {:?}", again.iter().map(|(_, o)| *o).collect::<Vec<_>>());
    println!("outputs in {}", workdir.display());
    Ok(())
}
