//! Mutual k-NN semantic graphs, greedy modularity communities and node roles.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingModel, NeighborIndex};
use crate::{Error, Result};

pub const DEFAULT_K: usize = 10;

/// Undirected weighted graph over a model's vocabulary. Node ids follow
/// lexicographic word order.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGraph {
    pub slice_id: String,
    pub k: usize,
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<(usize, f64)>>,
    /// Mutual pairs dropped because their cosine was not positive.
    pub dropped_nonpositive: usize,
}

impl SemanticGraph {
    /// Builds a graph from an explicit edge list; duplicate or self edges
    /// are rejected.
    pub fn from_edges(
        slice_id: impl Into<String>,
        k: usize,
        mut nodes: Vec<String>,
        edges: &[(String, String, f64)],
    ) -> Result<Self> {
        nodes.sort();
        nodes.dedup();
        let index: HashMap<String, usize> =
            nodes.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut seen = HashSet::new();
        for (a, b, w) in edges {
            let (Some(&i), Some(&j)) = (index.get(a), index.get(b)) else {
                return Err(Error::NotInGraph(format!("{a}-{b}")));
            };
            if i == j || !seen.insert((i.min(j), i.max(j))) || !(*w > 0.0) {
                return Err(Error::Config(format!("invalid edge {a}-{b} ({w})")));
            }
            adjacency[i].push((j, *w));
            adjacency[j].push((i, *w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(j, _)| j);
        }
        Ok(SemanticGraph {
            slice_id: slice_id.into(),
            k,
            nodes,
            index,
            adjacency,
            dropped_nonpositive: 0,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(a, b, weight)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, w) in list {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    fn node_or_err(&self, word: &str) -> Result<usize> {
        self.index_of(word)
            .ok_or_else(|| Error::NotInGraph(word.to_owned()))
    }
}

/// Connects two words iff each is among the other's `k` nearest neighbors
/// and their cosine is positive. Edge weight is the mean of the two
/// directed similarities.
pub fn build_mutual_knn(
    model: &EmbeddingModel,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<SemanticGraph> {
    let index = NeighborIndex::new(model, exclude);
    let mut nodes: Vec<(usize, &String)> = model
        .words()
        .iter()
        .enumerate()
        .filter(|(i, _)| !index.is_excluded(*i))
        .collect();
    if nodes.is_empty() {
        return Err(Error::NoInput);
    }
    nodes.sort_by(|a, b| a.1.cmp(b.1));

    let top: Vec<Vec<(usize, f64)>> = nodes
        .par_iter()
        .map(|&(row, _)| index.top_k_indices(row, k))
        .collect();
    let mut node_of_row = vec![usize::MAX; model.len()];
    for (n, &(row, _)) in nodes.iter().enumerate() {
        node_of_row[row] = n;
    }
    let top_sets: Vec<HashMap<usize, f64>> = top
        .iter()
        .map(|list| list.iter().map(|&(r, s)| (node_of_row[r], s)).collect())
        .collect();

    let mut adjacency = vec![Vec::new(); nodes.len()];
    let mut dropped = 0;
    for (a, neigh) in top_sets.iter().enumerate() {
        for (&b, &s_ab) in neigh {
            if a >= b {
                continue;
            }
            let Some(&s_ba) = top_sets[b].get(&a) else {
                continue;
            };
            let weight = 0.5 * (s_ab + s_ba);
            if weight > 0.0 {
                adjacency[a].push((b, weight));
                adjacency[b].push((a, weight));
            } else {
                dropped += 1;
            }
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|&(j, _)| j);
    }
    let nodes: Vec<String> = nodes.into_iter().map(|(_, w)| w.clone()).collect();
    let index = nodes.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    Ok(SemanticGraph {
        slice_id: model.slice_id().to_owned(),
        k,
        nodes,
        index,
        adjacency,
        dropped_nonpositive: dropped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    pub slice_id: String,
    /// Community of each graph node, by node id. Ids are dense and ordered
    /// by each community's smallest node id.
    pub assignment: Vec<usize>,
    pub community_count: usize,
    pub modularity: f64,
}

impl CommunityPartition {
    pub fn members(&self, community: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == community)
            .map(|(n, _)| n)
    }
}

/// Newman's weighted modularity (resolution 1) of an assignment.
pub fn modularity(graph: &SemanticGraph, assignment: &[usize]) -> f64 {
    let two_m: f64 = graph
        .adjacency
        .iter()
        .flat_map(|l| l.iter().map(|&(_, w)| w))
        .sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut internal: BTreeMap<usize, f64> = BTreeMap::new();
    let mut degree: BTreeMap<usize, f64> = BTreeMap::new();
    for (i, list) in graph.adjacency.iter().enumerate() {
        let ci = assignment[i];
        for &(j, w) in list {
            *degree.entry(ci).or_default() += w;
            if assignment[j] == ci {
                *internal.entry(ci).or_default() += w;
            }
        }
    }
    degree
        .iter()
        .map(|(c, d)| internal.get(c).copied().unwrap_or(0.0) / two_m - (d / two_m).powi(2))
        .sum()
}

fn relabel(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<usize, usize> = HashMap::new();
    let assignment = raw
        .iter()
        .map(|r| {
            let next = ids.len();
            *ids.entry(*r).or_insert(next)
        })
        .collect();
    (assignment, ids.len())
}

/// Greedy agglomerative modularity maximization (Clauset-Newman-Moore).
///
/// Starting from singletons, repeatedly merges the community pair with the
/// largest positive modularity gain; equal gains go to the smallest
/// community-id pair. Stops when no merge increases modularity.
pub fn detect_communities(graph: &SemanticGraph) -> CommunityPartition {
    let n = graph.node_count();
    let two_m: f64 = graph
        .adjacency
        .iter()
        .flat_map(|l| l.iter().map(|&(_, w)| w))
        .sum();
    let mut owner: Vec<usize> = (0..n).collect();

    if two_m > 0.0 {
        let mut a: Vec<f64> = graph
            .adjacency
            .iter()
            .map(|l| l.iter().map(|&(_, w)| w).sum::<f64>() / two_m)
            .collect();
        let mut e: Vec<BTreeMap<usize, f64>> = graph
            .adjacency
            .iter()
            .map(|l| l.iter().map(|&(j, w)| (j, w / two_m)).collect())
            .collect();
        let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut alive = vec![true; n];

        let row_best = |c: usize, e: &[BTreeMap<usize, f64>], a: &[f64]| -> Option<(f64, usize)> {
            let mut best: Option<(f64, usize)> = None;
            for (&j, &eij) in &e[c] {
                let dq = 2.0 * (eij - a[c] * a[j]);
                if best.is_none_or(|(b, _)| dq > b) {
                    best = Some((dq, j));
                }
            }
            best
        };
        let mut best: Vec<Option<(f64, usize)>> = (0..n).map(|c| row_best(c, &e, &a)).collect();

        loop {
            let mut choice: Option<(f64, usize, usize)> = None;
            for c in 0..n {
                let Some((dq, p)) = best[c] else { continue };
                let pair = (c.min(p), c.max(p));
                let better = match choice {
                    None => true,
                    Some((bdq, i, j)) => dq > bdq || (dq == bdq && pair < (i, j)),
                };
                if better {
                    choice = Some((dq, pair.0, pair.1));
                }
            }
            let Some((dq, i, j)) = choice else { break };
            if !(dq > 0.0) {
                break;
            }

            let row_j = std::mem::take(&mut e[j]);
            let mut touched: Vec<usize> = e[i].keys().copied().collect();
            for (&k, &v) in &row_j {
                touched.push(k);
                if k == i {
                    continue;
                }
                *e[i].entry(k).or_default() += v;
                let row_k = &mut e[k];
                row_k.remove(&j);
                *row_k.entry(i).or_default() += v;
            }
            e[i].remove(&j);
            a[i] += a[j];
            a[j] = 0.0;
            alive[j] = false;
            let moved = std::mem::take(&mut members[j]);
            members[i].extend(moved);

            best[j] = None;
            best[i] = row_best(i, &e, &a);
            touched.sort_unstable();
            touched.dedup();
            for k in touched {
                if k != i && k != j && alive[k] {
                    best[k] = row_best(k, &e, &a);
                }
            }
        }
        for (c, list) in members.iter().enumerate() {
            for &node in list {
                owner[node] = c;
            }
        }
    }

    let (assignment, community_count) = relabel(&owner);
    let q = modularity(graph, &assignment);
    CommunityPartition {
        slice_id: graph.slice_id.clone(),
        assignment,
        community_count,
        modularity: q,
    }
}

/// Unweighted degree over `|nodes| - 1`.
pub fn degree_centrality(graph: &SemanticGraph, word: &str) -> Result<f64> {
    let node = graph.node_or_err(word)?;
    Ok(centrality_of(graph, node))
}

fn centrality_of(graph: &SemanticGraph, node: usize) -> f64 {
    let n = graph.node_count();
    if n <= 1 {
        0.0
    } else {
        graph.degree(node) as f64 / (n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diversity {
    /// Distinct external communities reached over `C - 1`.
    #[default]
    Count,
    /// Count-based score plus a normalized Shannon-entropy alternative.
    CountAndEntropy,
}

struct BridgeParts {
    external_share: f64,
    count_diversity: f64,
    entropy_diversity: f64,
}

fn bridge_parts(graph: &SemanticGraph, partition: &CommunityPartition, node: usize) -> BridgeParts {
    let own = partition.assignment[node];
    let (mut total, mut internal) = (0.0, 0.0);
    let mut external: BTreeMap<usize, f64> = BTreeMap::new();
    for &(j, w) in graph.neighbors(node) {
        total += w;
        let cj = partition.assignment[j];
        if cj == own {
            internal += w;
        } else {
            *external.entry(cj).or_default() += w;
        }
    }
    if external.is_empty() || partition.community_count <= 1 {
        return BridgeParts {
            external_share: 0.0,
            count_diversity: 0.0,
            entropy_diversity: 0.0,
        };
    }
    let outside: f64 = external.values().sum();
    let external_share = (1.0 - internal / total).clamp(0.0, 1.0);
    let others = (partition.community_count - 1) as f64;
    let entropy_diversity = if partition.community_count == 2 {
        1.0
    } else {
        let h: f64 = external
            .values()
            .map(|w| {
                let p = w / outside;
                -p * p.ln()
            })
            .sum();
        (h / others.ln()).clamp(0.0, 1.0)
    };
    BridgeParts {
        external_share,
        count_diversity: external.len() as f64 / others,
        entropy_diversity,
    }
}

/// External share of weighted degree times the fraction of other
/// communities reached. Isolated nodes score 0.
pub fn bridge_score(
    graph: &SemanticGraph,
    partition: &CommunityPartition,
    word: &str,
) -> Result<f64> {
    let node = graph.node_or_err(word)?;
    let p = bridge_parts(graph, partition, node);
    Ok(p.external_share * p.count_diversity)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRole {
    pub word: String,
    pub degree_centrality: f64,
    pub community: usize,
    pub bridge_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bridge_score_entropy: Option<f64>,
}

pub fn node_roles(
    graph: &SemanticGraph,
    partition: &CommunityPartition,
    diversity: Diversity,
) -> Vec<NodeRole> {
    (0..graph.node_count())
        .map(|node| {
            let p = bridge_parts(graph, partition, node);
            NodeRole {
                word: graph.nodes[node].clone(),
                degree_centrality: centrality_of(graph, node),
                community: partition.assignment[node],
                bridge_score: p.external_share * p.count_diversity,
                bridge_score_entropy: (diversity == Diversity::CountAndEntropy)
                    .then_some(p.external_share * p.entropy_diversity),
            }
        })
        .collect()
}

/// Per-slice node-role table as persisted next to the edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleTable {
    pub slice_id: String,
    pub k: usize,
    pub node_count: usize,
    pub edge_count: usize,
    pub community_count: usize,
    pub modularity: f64,
    pub dropped_nonpositive: usize,
    pub roles: Vec<NodeRole>,
}

impl RoleTable {
    pub fn new(graph: &SemanticGraph, partition: &CommunityPartition, diversity: Diversity) -> Self {
        RoleTable {
            slice_id: graph.slice_id.clone(),
            k: graph.k,
            node_count: graph.node_count(),
            edge_count: graph.edge_count(),
            community_count: partition.community_count,
            modularity: partition.modularity,
            dropped_nonpositive: graph.dropped_nonpositive,
            roles: node_roles(graph, partition, diversity),
        }
    }

    pub fn role(&self, word: &str) -> Option<&NodeRole> {
        self.roles
            .binary_search_by(|r| r.word.as_str().cmp(word))
            .ok()
            .map(|i| &self.roles[i])
    }

    /// Members of each community, as words.
    pub fn communities(&self) -> Vec<Vec<&str>> {
        let mut out = vec![Vec::new(); self.community_count];
        for r in &self.roles {
            out[r.community].push(r.word.as_str());
        }
        out
    }
}

pub fn write_edges_tsv(graph: &SemanticGraph, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "word_a\tword_b\tweight")?;
    for (a, b, weight) in graph.edges() {
        writeln!(w, "{}\t{}\t{}", graph.nodes[a], graph.nodes[b], weight)?;
    }
    w.flush()?;
    Ok(())
}
