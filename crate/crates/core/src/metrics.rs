//! Per-word change measures across adjacent slices.
//!
//! Drift reads the aligned vectors; turnover and reallocation read each
//! slice's own neighborhoods and communities, so they do not depend on the
//! alignment at all.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Viability;
use crate::embed::{cosine, EmbeddingModel, NeighborIndex};
use crate::graph::{NodeRole, RoleTable};
use crate::{Error, Result};

/// `1 - cos` between a word's vectors in two already-aligned models.
pub fn drift(word: &str, aligned_prev: &EmbeddingModel, aligned_next: &EmbeddingModel) -> Result<f64> {
    let c = cosine(aligned_prev.vector_or_oov(word)?, aligned_next.vector_or_oov(word)?)?;
    Ok(1.0 - c)
}

/// `1 - |N_a ∩ N_b| / k` over the two top-k neighborhoods.
pub fn neighbor_turnover(
    word: &str,
    model_a: &EmbeddingModel,
    model_b: &EmbeddingModel,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<f64> {
    let a = NeighborIndex::new(model_a, exclude);
    let b = NeighborIndex::new(model_b, exclude);
    turnover_between(word, &a, &b, k)
}

pub fn turnover_between(word: &str, a: &NeighborIndex<'_>, b: &NeighborIndex<'_>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be >= 1".into()));
    }
    let na: HashSet<String> = a.top_k(word, k)?.into_iter().map(|(w, _)| w).collect();
    let shared = b
        .top_k(word, k)?
        .into_iter()
        .filter(|(w, _)| na.contains(w))
        .count();
    Ok(1.0 - shared as f64 / k as f64)
}

/// Community membership of one slice's graph.
#[derive(Debug, Clone, Default)]
pub struct CommunityView {
    community_of: HashMap<String, usize>,
    members: Vec<Vec<String>>,
}

impl CommunityView {
    pub fn from_groups(groups: Vec<Vec<String>>) -> Self {
        let mut community_of = HashMap::new();
        for (c, group) in groups.iter().enumerate() {
            for w in group {
                community_of.insert(w.clone(), c);
            }
        }
        CommunityView {
            community_of,
            members: groups,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.community_of.contains_key(word)
    }

    pub fn members_of(&self, word: &str) -> Option<&[String]> {
        self.community_of.get(word).map(|&c| self.members[c].as_slice())
    }

    pub fn nodes(&self) -> impl Iterator<Item = &String> {
        self.community_of.keys()
    }
}

impl From<&RoleTable> for CommunityView {
    fn from(t: &RoleTable) -> Self {
        CommunityView::from_groups(
            t.communities()
                .into_iter()
                .map(|g| g.into_iter().map(str::to_owned).collect())
                .collect(),
        )
    }
}

/// Words present in both graphs.
pub fn shared_nodes<'a>(a: &'a CommunityView, b: &CommunityView) -> HashSet<&'a str> {
    a.nodes()
        .filter(|w| b.contains(w))
        .map(String::as_str)
        .collect()
}

/// `1 - Jaccard` of the word's community members (word itself removed)
/// restricted to the shared vocabulary. Two empty member sets count as
/// identical.
pub fn community_reallocation(
    word: &str,
    part_a: &CommunityView,
    part_b: &CommunityView,
    shared: &HashSet<&str>,
) -> Result<f64> {
    let not_in = |slice: &str| Error::NotInGraph(format!("{word} ({slice})"));
    let restrict = |members: &[String]| -> BTreeSet<String> {
        members
            .iter()
            .filter(|m| m.as_str() != word && shared.contains(m.as_str()))
            .cloned()
            .collect()
    };
    let ca = restrict(part_a.members_of(word).ok_or_else(|| not_in("a"))?);
    let cb = restrict(part_b.members_of(word).ok_or_else(|| not_in("b"))?);
    let union = ca.union(&cb).count();
    if union == 0 {
        return Ok(0.0);
    }
    let inter = ca.intersection(&cb).count();
    Ok(1.0 - inter as f64 / union as f64)
}

/// Largest absolute role changes over the word panel for one transition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PanelNorms {
    pub max_delta_centrality: f64,
    pub max_delta_bridge: f64,
}

fn scaled(delta: f64, max: f64) -> f64 {
    if max > 0.0 {
        delta / max
    } else {
        0.0
    }
}

/// Mean of reallocation and the panel-normalized centrality and bridge
/// changes.
pub fn role_volatility(reallocation: f64, roles_a: &NodeRole, roles_b: &NodeRole, norms: PanelNorms) -> f64 {
    let dc = (roles_b.degree_centrality - roles_a.degree_centrality).abs();
    let db = (roles_b.bridge_score - roles_a.bridge_score).abs();
    (reallocation + scaled(dc, norms.max_delta_centrality) + scaled(db, norms.max_delta_bridge)) / 3.0
}

/// `1 - cos` between a century vector aligned to the reference and the
/// reference vector of the same word.
pub fn reference_deviation(word: &str, aligned_century: &EmbeddingModel, reference: &EmbeddingModel) -> Result<f64> {
    drift(word, aligned_century, reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementClass {
    StableUsage,
    LocalFluctuation,
    RobustChange,
    SettledDeparture,
}

impl AgreementClass {
    pub fn as_str(self) -> &'static str {
        match self {
            AgreementClass::StableUsage => "stable_usage",
            AgreementClass::LocalFluctuation => "local_fluctuation",
            AgreementClass::RobustChange => "robust_change",
            AgreementClass::SettledDeparture => "settled_departure",
        }
    }

    pub fn classify(high_drift: bool, high_deviation: bool) -> Self {
        match (high_drift, high_deviation) {
            (false, false) => AgreementClass::StableUsage,
            (true, false) => AgreementClass::LocalFluctuation,
            (true, true) => AgreementClass::RobustChange,
            (false, true) => AgreementClass::SettledDeparture,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementCell {
    pub word: String,
    /// The resulting slice of the adjacent transition.
    pub slice: String,
    pub local_drift: f64,
    pub reference_deviation: f64,
    pub class: AgreementClass,
}

/// Median of a non-empty sample (mean of the two middle values when even).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Classifies `(word, slice, drift, deviation)` cells by median splits;
/// "high" means strictly above the panel median.
pub fn agreement_profile(cells: &[(String, String, f64, f64)]) -> Vec<AgreementCell> {
    let drifts: Vec<f64> = cells.iter().map(|c| c.2).collect();
    let devs: Vec<f64> = cells.iter().map(|c| c.3).collect();
    let (Some(md), Some(mr)) = (median(&drifts), median(&devs)) else {
        return Vec::new();
    };
    cells
        .iter()
        .map(|(word, slice, d, r)| AgreementCell {
            word: word.clone(),
            slice: slice.clone(),
            local_drift: *d,
            reference_deviation: *r,
            class: AgreementClass::classify(*d > md, *r > mr),
        })
        .collect()
}

/// Subtracts the slice mean from every value.
pub fn century_centered(values: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    if values.is_empty() {
        return BTreeMap::new();
    }
    let mean = values.values().sum::<f64>() / values.len() as f64;
    values.iter().map(|(w, v)| (w.clone(), v - mean)).collect()
}

/// Min-max scaling onto [0, 1]; a constant population maps to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn over(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        values.into_iter().fold(None, |acc, v| match acc {
            None => Some(MinMax { min: v, max: v }),
            Some(m) => Some(MinMax {
                min: m.min.min(v),
                max: m.max.max(v),
            }),
        })
    }

    pub fn scale(&self, v: f64) -> f64 {
        if self.max > self.min {
            ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryFlag {
    SparseCaution,
    OovGap,
    NegativeCosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from_slice: String,
    pub to_slice: String,
    pub drift: Option<f64>,
    pub turnover: Option<f64>,
    pub reallocation: Option<f64>,
    pub role_volatility: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRole {
    pub slice: String,
    pub in_vocabulary: bool,
    pub centrality: Option<f64>,
    pub bridge: Option<f64>,
    pub community: Option<usize>,
    pub centered_centrality: Option<f64>,
    pub centered_bridge: Option<f64>,
    pub reference_deviation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTrajectory {
    pub word: String,
    pub transitions: Vec<Transition>,
    pub per_slice: Vec<SliceRole>,
    pub flags: BTreeSet<TrajectoryFlag>,
}

impl WordTrajectory {
    fn mean_of(&self, f: impl Fn(&Transition) -> Option<f64>) -> Option<f64> {
        let vals: Vec<f64> = self.transitions.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn mean_drift(&self) -> Option<f64> {
        self.mean_of(|t| t.drift)
    }

    pub fn mean_turnover(&self) -> Option<f64> {
        self.mean_of(|t| t.turnover)
    }

    pub fn mean_reallocation(&self) -> Option<f64> {
        self.mean_of(|t| t.reallocation)
    }

    pub fn mean_volatility(&self) -> Option<f64> {
        self.mean_of(|t| t.role_volatility)
    }

    pub fn slices_missing(&self) -> usize {
        self.per_slice.iter().filter(|s| !s.in_vocabulary).count()
    }
}

/// Everything the panel analysis reads about one slice.
pub struct SliceView<'a> {
    pub slice_id: String,
    pub viability: Viability,
    /// Model in the chained (common) space, used for drift.
    pub aligned: &'a EmbeddingModel,
    /// Raw model aligned directly to the global reference, if available.
    pub reference_aligned: Option<&'a EmbeddingModel>,
    pub roles: &'a RoleTable,
    pub neighbors: NeighborIndex<'a>,
    pub communities: CommunityView,
}

impl<'a> SliceView<'a> {
    pub fn new(
        aligned: &'a EmbeddingModel,
        reference_aligned: Option<&'a EmbeddingModel>,
        roles: &'a RoleTable,
        viability: Viability,
        exclude: &HashSet<String>,
    ) -> Self {
        SliceView {
            slice_id: aligned.slice_id().to_owned(),
            viability,
            aligned,
            reference_aligned,
            roles,
            neighbors: NeighborIndex::new(aligned, exclude),
            communities: CommunityView::from(roles),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelAnalysis {
    pub trajectories: Vec<WordTrajectory>,
    pub norms: Vec<PanelNorms>,
    pub agreement: Vec<AgreementCell>,
    /// Composite century-side signal per word; `None` without any fully
    /// defined transition.
    pub century_signal: BTreeMap<String, Option<f64>>,
    /// Normalized component means per word: (drift, turnover, volatility).
    pub components: BTreeMap<String, [Option<f64>; 3]>,
}

impl PanelAnalysis {
    pub fn trajectory(&self, word: &str) -> Option<&WordTrajectory> {
        self.trajectories.iter().find(|t| t.word == word)
    }
}

/// Drift, turnover and reallocation for one word across one transition,
/// each `None` when the word is missing on either side.
/// `shared` is [`shared_nodes`] of the two slices' communities.
pub fn transition_basics(
    word: &str,
    a: &SliceView<'_>,
    b: &SliceView<'_>,
    shared: &HashSet<&str>,
    k: usize,
) -> Transition {
    Transition {
        from_slice: a.slice_id.clone(),
        to_slice: b.slice_id.clone(),
        drift: drift(word, a.aligned, b.aligned).ok(),
        turnover: turnover_between(word, &a.neighbors, &b.neighbors, k).ok(),
        reallocation: community_reallocation(word, &a.communities, &b.communities, shared).ok(),
        role_volatility: None,
    }
}

/// Computes trajectories, agreement cells and century signals for a word
/// panel over slices given in chronological order.
pub fn analyze_panel(
    panel: &[String],
    slices: &[SliceView<'_>],
    reference: Option<&EmbeddingModel>,
    k: usize,
) -> PanelAnalysis {
    let n_trans = slices.len().saturating_sub(1);
    let shared: Vec<HashSet<&str>> = slices
        .windows(2)
        .map(|p| shared_nodes(&p[0].communities, &p[1].communities))
        .collect();

    let mut trajectories: Vec<WordTrajectory> = panel
        .iter()
        .map(|word| {
            let mut flags = BTreeSet::new();
            let transitions = slices
                .windows(2)
                .enumerate()
                .map(|(t, p)| {
                    let tr = transition_basics(word, &p[0], &p[1], &shared[t], k);
                    if tr.drift.is_some_and(|d| d > 1.0) {
                        flags.insert(TrajectoryFlag::NegativeCosine);
                    }
                    tr
                })
                .collect();
            let per_slice = slices
                .iter()
                .map(|s| {
                    let in_vocabulary = s.aligned.contains(word);
                    if !in_vocabulary {
                        flags.insert(TrajectoryFlag::OovGap);
                    }
                    if s.viability == Viability::SparseCaution {
                        flags.insert(TrajectoryFlag::SparseCaution);
                    }
                    let role = s.roles.role(word);
                    let reference_deviation = match (s.reference_aligned, reference) {
                        (Some(m), Some(r)) => reference_deviation(word, m, r).ok(),
                        _ => None,
                    };
                    SliceRole {
                        slice: s.slice_id.clone(),
                        in_vocabulary,
                        centrality: role.map(|r| r.degree_centrality),
                        bridge: role.map(|r| r.bridge_score),
                        community: role.map(|r| r.community),
                        centered_centrality: None,
                        centered_bridge: None,
                        reference_deviation,
                    }
                })
                .collect();
            WordTrajectory {
                word: word.clone(),
                transitions,
                per_slice,
                flags,
            }
        })
        .collect();

    // Role volatility needs the panel-wide maxima of each transition first.
    let norms: Vec<PanelNorms> = (0..n_trans)
        .map(|t| {
            let (a, b) = (&slices[t], &slices[t + 1]);
            let mut norms = PanelNorms::default();
            for word in panel {
                if let (Some(ra), Some(rb)) = (a.roles.role(word), b.roles.role(word)) {
                    norms.max_delta_centrality = norms
                        .max_delta_centrality
                        .max((rb.degree_centrality - ra.degree_centrality).abs());
                    norms.max_delta_bridge = norms.max_delta_bridge.max((rb.bridge_score - ra.bridge_score).abs());
                }
            }
            norms
        })
        .collect();
    for traj in &mut trajectories {
        for (t, tr) in traj.transitions.iter_mut().enumerate() {
            let (a, b) = (&slices[t], &slices[t + 1]);
            if let (Some(ra), Some(rb), Some(realloc)) =
                (a.roles.role(&traj.word), b.roles.role(&traj.word), tr.reallocation)
            {
                tr.role_volatility = Some(role_volatility(realloc, ra, rb, norms[t]));
            }
        }
    }

    // Century-centered roles over the panel words present in each slice.
    for (s, _) in slices.iter().enumerate() {
        let collect = |f: fn(&SliceRole) -> Option<f64>| -> BTreeMap<String, f64> {
            trajectories
                .iter()
                .filter_map(|t| f(&t.per_slice[s]).map(|v| (t.word.clone(), v)))
                .collect()
        };
        let centered_c = century_centered(&collect(|r| r.centrality));
        let centered_b = century_centered(&collect(|r| r.bridge));
        for traj in &mut trajectories {
            traj.per_slice[s].centered_centrality = centered_c.get(&traj.word).copied();
            traj.per_slice[s].centered_bridge = centered_b.get(&traj.word).copied();
        }
    }

    // Agreement: drift belongs to the resulting slice of its transition.
    let mut cells = Vec::new();
    for traj in &trajectories {
        for (t, tr) in traj.transitions.iter().enumerate() {
            if let (Some(d), Some(r)) = (tr.drift, traj.per_slice[t + 1].reference_deviation) {
                cells.push((traj.word.clone(), tr.to_slice.clone(), d, r));
            }
        }
    }
    let agreement = agreement_profile(&cells);

    let (century_signal, components) = century_signals(&trajectories);
    PanelAnalysis {
        trajectories,
        norms,
        agreement,
        century_signal,
        components,
    }
}

type Components = BTreeMap<String, [Option<f64>; 3]>;

/// Mean over fully defined transitions of the mean of panel-min-max
/// normalized drift, turnover and role volatility.
pub fn century_signals(trajectories: &[WordTrajectory]) -> (BTreeMap<String, Option<f64>>, Components) {
    let cells = || trajectories.iter().flat_map(|t| t.transitions.iter());
    let scales = [
        MinMax::over(cells().filter_map(|t| t.drift)),
        MinMax::over(cells().filter_map(|t| t.turnover)),
        MinMax::over(cells().filter_map(|t| t.role_volatility)),
    ];
    let norm = |i: usize, v: Option<f64>| -> Option<f64> { Some(scales[i]?.scale(v?)) };

    let mut signals = BTreeMap::new();
    let mut components = BTreeMap::new();
    for traj in trajectories {
        let per_transition: Vec<[Option<f64>; 3]> = traj
            .transitions
            .iter()
            .map(|t| [norm(0, t.drift), norm(1, t.turnover), norm(2, t.role_volatility)])
            .collect();
        let valid: Vec<f64> = per_transition
            .iter()
            .filter_map(|c| Some((c[0]? + c[1]? + c[2]?) / 3.0))
            .collect();
        let signal = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
        let mean_component = |i: usize| {
            let v: Vec<f64> = per_transition.iter().filter_map(|c| c[i]).collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        signals.insert(traj.word.clone(), signal);
        components.insert(traj.word.clone(), [mean_component(0), mean_component(1), mean_component(2)]);
    }
    (signals, components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::testutil::{random_model, random_orthogonal};
    use crate::align::{apply_transform, chain_consecutive, AnchorPolicy};
    use crate::embed::TrainConfig;
    use proptest::prelude::*;

    fn model(slice: &str, rows: &[(&str, Vec<f64>)]) -> EmbeddingModel {
        let dim = rows[0].1.len();
        EmbeddingModel::from_parts(
            slice,
            rows.iter().map(|(w, _)| (*w).to_owned()).collect(),
            vec![1; rows.len()],
            dim,
            rows.iter().flat_map(|(_, v)| v.clone()).collect(),
            TrainConfig::default(),
        )
        .unwrap()
    }

    fn role(c: f64, b: f64) -> NodeRole {
        NodeRole {
            word: "w".into(),
            degree_centrality: c,
            community: 0,
            bridge_score: b,
            bridge_score_entropy: None,
        }
    }

    fn groups(g: &[&[&str]]) -> CommunityView {
        CommunityView::from_groups(
            g.iter()
                .map(|m| m.iter().map(|s| (*s).to_owned()).collect())
                .collect(),
        )
    }

    #[test]
    fn drift_examples() {
        let a = model("1", &[("w", vec![1.0, 0.0])]);
        let same = model("2", &[("w", vec![2.0, 0.0])]);
        let orth = model("2", &[("w", vec![0.0, 1.0])]);
        assert!(drift("w", &a, &same).unwrap().abs() < 1e-12);
        assert!((drift("w", &a, &orth).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(drift("x", &a, &same), Err(Error::OutOfVocabulary { .. })));
    }

    #[test]
    fn drift_vanishes_after_chaining_a_rotation() {
        let m1 = random_model("1", 200, 10, 1);
        let m2 = apply_transform(&m1, &random_orthogonal(10, 2)).with_slice_id("2");
        let chain = chain_consecutive(&[m1, m2], &AnchorPolicy::default()).unwrap();
        for w in chain.aligned[0].words() {
            assert!(drift(w, &chain.aligned[0], &chain.aligned[1]).unwrap() < 1e-9);
        }
    }

    /// Query word `q` plus 20 candidates on a circle; `order` decides which
    /// candidates are nearest.
    fn circle_model(slice: &str, nearest: &[usize]) -> EmbeddingModel {
        let mut rows = vec![("q".to_owned(), vec![1.0, 0.0])];
        let mut angle_of = [0.0; 20];
        for (rank, &c) in nearest.iter().enumerate() {
            angle_of[c] = 0.01 * (rank + 1) as f64;
        }
        for (c, angle) in angle_of.iter_mut().enumerate() {
            if *angle == 0.0 {
                *angle = 1.0 + c as f64 * 0.01;
            }
        }
        for (c, angle) in angle_of.iter().enumerate() {
            rows.push((format!("c{c:02}"), vec![angle.cos(), angle.sin()]));
        }
        let rows: Vec<(&str, Vec<f64>)> = rows.iter().map(|(w, v)| (w.as_str(), v.clone())).collect();
        model(slice, &rows)
    }

    #[test]
    fn turnover_examples() {
        let none = HashSet::new();
        let a = circle_model("a", &(0..10).collect::<Vec<_>>());
        assert_eq!(neighbor_turnover("q", &a, &a, 10, &none).unwrap(), 0.0);
        let disjoint = circle_model("b", &(10..20).collect::<Vec<_>>());
        assert_eq!(neighbor_turnover("q", &a, &disjoint, 10, &none).unwrap(), 1.0);
        let half = circle_model("c", &[0, 1, 2, 3, 4, 10, 11, 12, 13, 14]);
        assert!((neighbor_turnover("q", &a, &half, 10, &none).unwrap() - 0.5).abs() < 1e-12);
        assert!((neighbor_turnover("q", &half, &a, 10, &none).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reallocation_examples() {
        let a = groups(&[&["w", "a", "b", "c", "d"], &["e", "f", "x", "y"]]);
        let same = groups(&[&["w", "a", "b", "c", "d"], &["e", "f", "x", "y"]]);
        let shared = shared_nodes(&a, &same);
        assert_eq!(community_reallocation("w", &a, &same, &shared).unwrap(), 0.0);

        let moved = groups(&[&["a", "b", "c", "d"], &["w", "e", "f", "x", "y"]]);
        let shared = shared_nodes(&a, &moved);
        assert_eq!(community_reallocation("w", &a, &moved, &shared).unwrap(), 1.0);

        // |C_a| = |C_b| = 4 sharing 2 members, union 6.
        let b = groups(&[&["w", "a", "b", "e", "f"], &["c", "d", "x", "y"]]);
        let shared = shared_nodes(&a, &b);
        let r = community_reallocation("w", &a, &b, &shared).unwrap();
        assert!((r - (1.0 - 2.0 / 6.0)).abs() < 1e-12);
    }

    #[test]
    fn reallocation_ignores_unshared_words() {
        let a = groups(&[&["w", "a", "only_a"]]);
        let b = groups(&[&["w", "a", "only_b"]]);
        let shared = shared_nodes(&a, &b);
        assert_eq!(community_reallocation("w", &a, &b, &shared).unwrap(), 0.0);
        assert!(community_reallocation("zz", &a, &b, &shared).is_err());
    }

    #[test]
    fn volatility_examples() {
        let norms = PanelNorms {
            max_delta_centrality: 0.2,
            max_delta_bridge: 0.4,
        };
        assert_eq!(role_volatility(0.0, &role(0.1, 0.3), &role(0.1, 0.3), norms), 0.0);
        assert!((role_volatility(1.0, &role(0.1, 0.0), &role(0.3, 0.4), norms) - 1.0).abs() < 1e-12);
        let v = role_volatility(0.5, &role(0.1, 0.2), &role(0.2, 0.2), norms);
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(role_volatility(0.0, &role(0.1, 0.2), &role(0.2, 0.5), PanelNorms::default()), 0.0);
    }

    #[test]
    fn reference_deviation_examples() {
        let r = random_model("reference", 120, 6, 4);
        assert!(reference_deviation("w0001", &r, &r).unwrap().abs() < 1e-12);
        let orth_a = model("c", &[("w", vec![1.0, 0.0])]);
        let orth_b = model("reference", &[("w", vec![0.0, 3.0])]);
        assert!((reference_deviation("w", &orth_a, &orth_b).unwrap() - 1.0).abs() < 1e-12);

        let rotated = apply_transform(&r, &random_orthogonal(6, 5)).with_slice_id("7");
        let map = crate::align::align_to_reference(&rotated, &r, &AnchorPolicy::default()).unwrap();
        let back = map.apply(&rotated);
        for w in r.words() {
            assert!(reference_deviation(w, &back, &r).unwrap() < 1e-9);
        }
    }

    fn cell(w: &str, d: f64, r: f64) -> (String, String, f64, f64) {
        (w.into(), "5".into(), d, r)
    }

    #[test]
    fn four_corner_panel_hits_each_class_once() {
        let cells = vec![
            cell("a", 0.1, 0.1),
            cell("b", 0.9, 0.1),
            cell("c", 0.9, 0.9),
            cell("d", 0.1, 0.9),
        ];
        let out = agreement_profile(&cells);
        let classes: Vec<_> = out.iter().map(|c| c.class).collect();
        assert_eq!(
            classes,
            vec![
                AgreementClass::StableUsage,
                AgreementClass::LocalFluctuation,
                AgreementClass::RobustChange,
                AgreementClass::SettledDeparture
            ]
        );
    }

    #[test]
    fn median_boundary_is_low() {
        let cells = vec![cell("a", 0.1, 0.1), cell("m", 0.5, 0.5), cell("z", 0.9, 0.9)];
        let out = agreement_profile(&cells);
        assert_eq!(out[1].class, AgreementClass::StableUsage);
        assert_eq!(out[2].class, AgreementClass::RobustChange);
    }

    #[test]
    fn centering_examples() {
        let same: BTreeMap<String, f64> = [("a".into(), 0.4), ("b".into(), 0.4)].into();
        assert!(century_centered(&same).values().all(|v| *v == 0.0));
        let two: BTreeMap<String, f64> = [("a".into(), 0.1), ("b".into(), 0.3)].into();
        let c = century_centered(&two);
        assert!((c["a"] + 0.1).abs() < 1e-12);
        assert!((c["b"] - 0.1).abs() < 1e-12);
    }

    fn trans(d: f64, t: f64, v: f64) -> Transition {
        Transition {
            from_slice: "1".into(),
            to_slice: "2".into(),
            drift: Some(d),
            turnover: Some(t),
            reallocation: Some(0.0),
            role_volatility: Some(v),
        }
    }

    fn traj(word: &str, transitions: Vec<Transition>) -> WordTrajectory {
        WordTrajectory {
            word: word.into(),
            transitions,
            per_slice: Vec::new(),
            flags: BTreeSet::new(),
        }
    }

    #[test]
    fn century_signal_extremes_and_hand_panel() {
        let panel = vec![
            traj("hi", vec![trans(0.8, 0.9, 0.6), trans(0.8, 0.9, 0.6)]),
            traj("lo", vec![trans(0.2, 0.3, 0.1), trans(0.2, 0.3, 0.1)]),
            traj("mid", vec![trans(0.5, 0.3, 0.6), trans(0.2, 0.9, 0.1)]),
        ];
        let (signals, _) = century_signals(&panel);
        assert_eq!(signals["hi"], Some(1.0));
        assert_eq!(signals["lo"], Some(0.0));
        // transition 1: (0.5, 0, 1) -> 0.5 ; transition 2: (0, 1, 0) -> 1/3
        let expected = (0.5 + 1.0 / 3.0) / 2.0;
        assert!((signals["mid"].unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn century_signal_undefined_without_transitions() {
        let mut t = trans(0.1, 0.1, 0.1);
        t.drift = None;
        let (signals, _) = century_signals(&[traj("gap", vec![t]), traj("ok", vec![trans(0.2, 0.2, 0.2)])]);
        assert_eq!(signals["gap"], None);
        assert!(signals["ok"].is_some());
    }

    proptest! {
        #[test]
        fn centered_values_sum_to_zero_and_ignore_shifts(
            vals in prop::collection::vec(-1.0f64..1.0, 1..20),
            shift in -5.0f64..5.0,
        ) {
            let m: BTreeMap<String, f64> = vals.iter().enumerate().map(|(i, v)| (format!("w{i}"), *v)).collect();
            let shifted: BTreeMap<String, f64> = m.iter().map(|(w, v)| (w.clone(), v + shift)).collect();
            let c = century_centered(&m);
            prop_assert!(c.values().sum::<f64>().abs() < 1e-12);
            for (w, v) in century_centered(&shifted) {
                prop_assert!((v - c[&w]).abs() < 1e-9);
            }
        }

        #[test]
        fn every_cell_gets_one_class(
            vals in prop::collection::vec((0.0f64..2.0, 0.0f64..2.0), 1..40)
        ) {
            let cells: Vec<_> = vals.iter().enumerate().map(|(i, (d, r))| cell(&format!("w{i}"), *d, *r)).collect();
            let out = agreement_profile(&cells);
            prop_assert_eq!(out.len(), cells.len());
            let md = median(&vals.iter().map(|v| v.0).collect::<Vec<_>>()).unwrap();
            let mr = median(&vals.iter().map(|v| v.1).collect::<Vec<_>>()).unwrap();
            for c in &out {
                prop_assert_eq!(c.class, AgreementClass::classify(c.local_drift > md, c.reference_deviation > mr));
            }
        }

        #[test]
        fn turnover_is_symmetric(s1 in 0u64..200, s2 in 0u64..200, k in 1usize..10) {
            let a = random_model("a", 40, 4, s1);
            let b = random_model("b", 40, 4, s2);
            let none = HashSet::new();
            for w in ["w0000", "w0017", "w0039"] {
                prop_assert_eq!(
                    neighbor_turnover(w, &a, &b, k, &none).unwrap(),
                    neighbor_turnover(w, &b, &a, k, &none).unwrap()
                );
            }
        }

        #[test]
        fn drift_ignores_a_common_rotation(seed in 0u64..200) {
            let a = random_model("a", 30, 5, seed);
            let b = random_model("b", 30, 5, seed + 1000);
            let q = random_orthogonal(5, seed + 7);
            let (ra, rb) = (apply_transform(&a, &q), apply_transform(&b, &q));
            for w in a.words() {
                prop_assert!((drift(w, &a, &b).unwrap() - drift(w, &ra, &rb).unwrap()).abs() < 1e-9);
            }
        }
    }
}
