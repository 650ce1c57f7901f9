//! Poet-level dispersion of a word panel, the double-centered poet
//! similarity matrix, and century-vs-poet pressure classes.
//!
//! cargo run --release --example poet_pressure

use std::collections::HashSet;

use semshift::align::{align_to_reference, AnchorPolicy};
use semshift::corpus::{build_slices, SliceKind};
use semshift::embed::{train, train_global_reference, TrainConfig};
use semshift::poetcmp::{
    classify_pressure, dispersions, double_center, poet_signals, poet_similarity_matrix, PoetPanel,
    PressureThresholds,
};
use semshift::synth::{generate, SynthSpec};

fn main() -> semshift::Result<()> {
    let spec = SynthSpec::planted_benchmark(9, 320, 2, 40_000, 1)?;
    let docs = generate(&spec)?;
    let centuries = build_slices(&docs, SliceKind::Century, 0)?;
    let poets = build_slices(&docs, SliceKind::Poet, 0)?;
    let config = TrainConfig {
        dim: 32,
        epochs: 3,
        negative: 5,
        min_count: 5,
        ..TrainConfig::default()
    };
    let reference = train_global_reference(&centuries, &config)?;
    let policy = AnchorPolicy::default();
    let mut aligned = Vec::new();
    for p in &poets {
        let model = train(p, &config)?;
        aligned.push((p.token_count, align_to_reference(&model, &reference, &policy)?.apply(&model)));
    }
    let panel = PoetPanel::new(aligned.iter().map(|(n, m)| (*n, m)).collect(), 10_000, &HashSet::new());
    println!("{} poets, {} eligible", panel.poets().len(), panel.eligible_count());

    let words: Vec<String> = spec.planted.iter().map(|p| p.word.clone()).chain(["w0100".into()]).collect();
    let rows = dispersions(&words, &panel, 10);
    let signals = poet_signals(&rows);
    for r in &rows {
        println!(
            "{} carriers {} cosine dispersion {:?} overlap dispersion {:?}",
            r.word, r.carriers, r.cosine_dispersion, r.overlap_dispersion
        );
    }

    let centered = double_center(&poet_similarity_matrix(&panel))?;
    println!("double-centered poet matrix:{centered:.3}");

    // Century signals would come from the change metrics; fixed here.
    let thresholds = PressureThresholds::default();
    for (word, century) in words.iter().zip([0.8, 0.5, 0.1, 0.3]) {
        if let Some(Some(poet)) = signals.get(word) {
            let p = classify_pressure(word, century, *poet, &thresholds, false);
            println!("{word}: ratio {:.2} -> {}", p.ratio, p.class.label(p.caution));
        }
    }
    Ok(())
}
