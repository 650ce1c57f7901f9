//! Trains skip-gram embeddings on one synthetic slice and prints nearest
//! neighbors of a few words; words from the same latent cluster should
//! come out on top.
//!
//! cargo run --release --example train_embeddings

use std::collections::HashSet;

use semshift::corpus::{build_slices, SliceKind};
use semshift::embed::{top_k_neighbors, train, TrainConfig};
use semshift::synth::{generate, SynthSpec};

fn main() -> semshift::Result<()> {
    let spec = SynthSpec::planted_benchmark(7, 320, 2, 40_000, 1)?;
    let slices = build_slices(&generate(&spec)?, SliceKind::Century, 0)?;
    let config = TrainConfig {
        dim: 32,
        epochs: 3,
        negative: 5,
        min_count: 5,
        ..TrainConfig::default()
    };
    let model = train(&slices[0], &config)?;
    println!("slice {}: {} words, dim {}", model.slice_id(), model.len(), model.dim());

    for cluster in spec.clusters.iter().take(3) {
        let word = &cluster[1];
        let mates: HashSet<&String> = cluster.iter().collect();
        let neighbors = top_k_neighbors(&model, word, 5, &HashSet::new())?;
        let hits = neighbors.iter().filter(|(w, _)| mates.contains(w)).count();
        let shown: Vec<String> = neighbors.iter().map(|(w, s)| format!("{w}:{s:.2}")).collect();
        println!("{word}: {} ({hits}/5 from its cluster)", shown.join(" "));
    }
    Ok(())
}
