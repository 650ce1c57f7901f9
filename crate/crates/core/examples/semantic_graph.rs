//! Builds a mutual k-NN graph over a trained synthetic slice, detects
//! communities, and lists the most central words and the roles of the
//! planted words in the last slice.
//!
//! cargo run --release --example semantic_graph

use std::collections::HashSet;

use semshift::corpus::{build_slices, SliceKind};
use semshift::embed::{train, TrainConfig};
use semshift::graph::{build_mutual_knn, detect_communities, Diversity, RoleTable};
use semshift::synth::{generate, SynthSpec};

fn main() -> semshift::Result<()> {
    let spec = SynthSpec::planted_benchmark(11, 320, 2, 40_000, 1)?;
    let slices = build_slices(&generate(&spec)?, SliceKind::Century, 0)?;
    let config = TrainConfig {
        dim: 32,
        epochs: 3,
        negative: 5,
        min_count: 5,
        ..TrainConfig::default()
    };
    let model = train(slices.last().expect("two slices"), &config)?;

    let graph = build_mutual_knn(&model, 10, &HashSet::new())?;
    let partition = detect_communities(&graph);
    let table = RoleTable::new(&graph, &partition, Diversity::Count);
    println!(
        "{} nodes, {} edges, {} communities (latent groups: {}), modularity {:.3}",
        table.node_count,
        table.edge_count,
        table.community_count,
        spec.groups.len(),
        table.modularity
    );

    let mut roles = table.roles.clone();
    roles.sort_by(|a, b| b.degree_centrality.total_cmp(&a.degree_centrality));
    for r in roles.iter().take(5) {
        println!("central  {} centrality {:.4} community {}", r.word, r.degree_centrality, r.community);
    }
    for p in &spec.planted {
        if let Some(r) = table.role(&p.word) {
            println!(
                "{} ({}) centrality {:.4} bridge {:.3} community {}",
                r.word,
                p.behavior.as_str(),
                r.degree_centrality,
                r.bridge_score,
                r.community
            );
        }
    }
    Ok(())
}
