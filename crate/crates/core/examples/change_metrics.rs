//! Trains three synthetic slices with planted changes, aligns them, and
//! prints drift, turnover, reallocation and role volatility for the
//! planted words.
//!
//! cargo run --release --example change_metrics

use std::collections::HashSet;

use semshift::align::{chain_consecutive, chain_to_reference, AnchorPolicy};
use semshift::corpus::{build_slices, SliceKind};
use semshift::embed::{train, train_global_reference, TrainConfig};
use semshift::graph::{build_mutual_knn, detect_communities, Diversity, RoleTable};
use semshift::metrics::{analyze_panel, SliceView};
use semshift::synth::{generate, SynthSpec};

fn main() -> semshift::Result<()> {
    let spec = SynthSpec::planted_benchmark(5, 640, 3, 60_000, 2)?;
    let slices = build_slices(&generate(&spec)?, SliceKind::Century, 0)?;
    let config = TrainConfig {
        dim: 32,
        epochs: 3,
        negative: 5,
        min_count: 5,
        ..TrainConfig::default()
    };
    let models = slices.iter().map(|s| train(s, &config)).collect::<semshift::Result<Vec<_>>>()?;
    let reference = train_global_reference(&slices, &config)?;
    let policy = AnchorPolicy::default();
    let chain = chain_consecutive(&models, &policy)?;
    let in_reference = chain_to_reference(&models, &reference, &policy)?;

    let none = HashSet::new();
    let tables = chain
        .aligned
        .iter()
        .map(|m| {
            let g = build_mutual_knn(m, 10, &none)?;
            Ok(RoleTable::new(&g, &detect_communities(&g), Diversity::Count))
        })
        .collect::<semshift::Result<Vec<_>>>()?;
    let views: Vec<SliceView> = chain
        .aligned
        .iter()
        .zip(&in_reference.aligned)
        .zip(&tables)
        .zip(&slices)
        .map(|(((m, r), t), s)| SliceView::new(m, Some(r), t, s.viability, &none))
        .collect();

    let panel: Vec<String> = spec.planted.iter().map(|p| p.word.clone()).collect();
    let analysis = analyze_panel(&panel, &views, Some(&reference), 10);
    let fmt = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.3}"));
    for (p, t) in spec.planted.iter().zip(&analysis.trajectories) {
        println!(
            "{} {:7} drift {} turnover {} reallocation {} volatility {} century signal {}",
            t.word,
            p.behavior.as_str(),
            fmt(t.mean_drift()),
            fmt(t.mean_turnover()),
            fmt(t.mean_reallocation()),
            fmt(t.mean_volatility()),
            fmt(analysis.century_signal[&t.word])
        );
    }
    for c in analysis.agreement.iter().take(6) {
        println!("{} in {}: {}", c.word, c.slice, c.class.as_str());
    }
    Ok(())
}
