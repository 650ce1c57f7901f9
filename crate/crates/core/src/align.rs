//! Orthogonal Procrustes alignment between embedding spaces.
//!
//! Maps are fitted on row-normalized anchor vectors and applied to raw
//! vectors, so norms (and with them frequency effects) survive alignment.
//! There is no translation term: a map is a pure rotation or reflection.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embed::{norm, EmbeddingModel};
use crate::{Error, Result};

/// Anchors with a smallest-to-largest singular value ratio below this are
/// treated as rank deficient.
const RANK_TOLERANCE: f64 = 1e-10;

/// How the shared anchor vocabulary is chosen.
#[derive(Debug, Clone, Default)]
pub struct AnchorPolicy {
    pub stoplist: HashSet<String>,
    /// Keep only the top-N shared words by combined frequency.
    pub cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap {
    pub source_slice: String,
    pub target_slice: String,
    /// `dim x dim`; a source row vector `x` maps to `x * transform`.
    pub transform: DMatrix<f64>,
    pub anchors: Vec<String>,
    /// Frobenius norm of the normalized anchor misfit after mapping.
    pub residual: f64,
}

impl AlignmentMap {
    pub fn identity(slice: &str, dim: usize) -> Self {
        AlignmentMap {
            source_slice: slice.to_owned(),
            target_slice: slice.to_owned(),
            transform: DMatrix::identity(dim, dim),
            anchors: Vec::new(),
            residual: 0.0,
        }
    }

    /// `max |W^T W - I|` over all entries.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.transform)
    }

    pub fn apply(&self, model: &EmbeddingModel) -> EmbeddingModel {
        apply_transform(model, &self.transform)
    }

    pub fn to_record(&self) -> AlignmentRecord {
        let dim = self.transform.nrows();
        AlignmentRecord {
            source_slice: self.source_slice.clone(),
            target_slice: self.target_slice.clone(),
            dim,
            anchor_count: self.anchors.len(),
            residual: self.residual,
            // nalgebra stores column-major; the transpose's storage is row-major.
            transform: self.transform.transpose().as_slice().to_vec(),
        }
    }
}

/// Persisted form of an [`AlignmentMap`]: slice ids, anchor count, residual
/// and the row-major transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub source_slice: String,
    pub target_slice: String,
    pub dim: usize,
    pub anchor_count: usize,
    pub residual: f64,
    pub transform: Vec<f64>,
}

impl AlignmentRecord {
    pub fn transform(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.transform)
    }
}

pub fn orthogonality_error(w: &DMatrix<f64>) -> f64 {
    let gram = w.transpose() * w;
    let n = gram.nrows();
    (gram - DMatrix::<f64>::identity(n, n)).amax()
}

pub fn apply_transform(model: &EmbeddingModel, transform: &DMatrix<f64>) -> EmbeddingModel {
    let dim = model.dim();
    model.map_rows(|src, dst| {
        for (j, out) in dst.iter_mut().enumerate() {
            let col = transform.column(j);
            *out = (0..dim).map(|i| src[i] * col[i]).sum();
        }
    })
}

/// Sorted intersection of both vocabularies minus the stoplist.
pub fn shared_anchors(
    a: &EmbeddingModel,
    b: &EmbeddingModel,
    policy: &AnchorPolicy,
) -> Result<Vec<String>> {
    let mut shared: Vec<(&String, u64)> = a
        .words()
        .iter()
        .filter(|w| !policy.stoplist.contains(*w))
        .filter_map(|w| {
            let fb = b.frequency(w)?;
            Some((w, a.frequency(w).unwrap_or(0) + fb))
        })
        .collect();
    if let Some(cap) = policy.cap {
        shared.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(y.0)));
        shared.truncate(cap);
    }
    let mut anchors: Vec<String> = shared.into_iter().map(|(w, _)| w.clone()).collect();
    anchors.sort();
    let needed = a.dim().max(b.dim());
    if anchors.len() < needed {
        return Err(Error::TooFewAnchors {
            source_slice: a.slice_id().to_owned(),
            target_slice: b.slice_id().to_owned(),
            found: anchors.len(),
            needed,
        });
    }
    Ok(anchors)
}

fn anchor_matrix(model: &EmbeddingModel, anchors: &[String]) -> Result<DMatrix<f64>> {
    let dim = model.dim();
    let mut m = DMatrix::zeros(anchors.len(), dim);
    for (r, word) in anchors.iter().enumerate() {
        let v = model.vector_or_oov(word)?;
        let n = norm(v);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        for (c, x) in v.iter().enumerate() {
            m[(r, c)] = x / n;
        }
    }
    Ok(m)
}

/// Orthogonal `W` minimizing `|X W - Y|_F`, from the SVD of `X^T Y`.
pub fn procrustes(
    source: &EmbeddingModel,
    target: &EmbeddingModel,
    anchors: &[String],
) -> Result<AlignmentMap> {
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch(source.dim(), target.dim()));
    }
    let dim = source.dim();
    if anchors.len() < dim {
        return Err(Error::TooFewAnchors {
            source_slice: source.slice_id().to_owned(),
            target_slice: target.slice_id().to_owned(),
            found: anchors.len(),
            needed: dim,
        });
    }
    let x = anchor_matrix(source, anchors)?;
    let y = anchor_matrix(target, anchors)?;
    let cross = x.tr_mul(&y);
    let svd = cross.svd(true, true);
    let largest = svd.singular_values.max();
    let smallest = svd.singular_values.min();
    if !(largest > 0.0) || smallest <= largest * RANK_TOLERANCE {
        return Err(Error::DegenerateAnchors {
            source_slice: source.slice_id().to_owned(),
            target_slice: target.slice_id().to_owned(),
        });
    }
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        unreachable!("svd was asked for both factors");
    };
    let transform = u * v_t;
    let residual = (&x * &transform - &y).norm();
    Ok(AlignmentMap {
        source_slice: source.slice_id().to_owned(),
        target_slice: target.slice_id().to_owned(),
        transform,
        anchors: anchors.to_vec(),
        residual,
    })
}

pub fn align_to_reference(
    model: &EmbeddingModel,
    reference: &EmbeddingModel,
    policy: &AnchorPolicy,
) -> Result<AlignmentMap> {
    let anchors = shared_anchors(model, reference, policy)?;
    procrustes(model, reference, &anchors)
}

/// Result of aligning an ordered list of models into one space.
#[derive(Debug, Clone)]
pub struct AlignedChain {
    pub aligned: Vec<EmbeddingModel>,
    /// Fitted maps; for consecutive chaining, map `i` takes raw model `i + 1`
    /// onto raw model `i`.
    pub pairwise: Vec<AlignmentMap>,
    /// Transform actually applied to each raw model (identity for the first
    /// under consecutive chaining).
    pub cumulative: Vec<AlignmentMap>,
}

impl AlignedChain {
    pub fn maps(&self) -> impl Iterator<Item = &AlignmentMap> {
        self.pairwise.iter().chain(&self.cumulative)
    }
}

/// Aligns each model to its predecessor's already-aligned space; the first
/// model is copied unchanged.
pub fn chain_consecutive(models: &[EmbeddingModel], policy: &AnchorPolicy) -> Result<AlignedChain> {
    let Some(first) = models.first() else {
        return Err(Error::NoInput);
    };
    let mut aligned = vec![first.clone()];
    let mut pairwise = Vec::new();
    let mut cumulative = vec![AlignmentMap::identity(first.slice_id(), first.dim())];
    for pair in models.windows(2) {
        let (prev, next) = (&pair[0], &pair[1]);
        let anchors = shared_anchors(next, prev, policy)?;
        let map = procrustes(next, prev, &anchors)?;
        let acc = &cumulative.last().expect("non-empty").transform;
        let transform = &map.transform * acc;
        let total = AlignmentMap {
            source_slice: next.slice_id().to_owned(),
            target_slice: first.slice_id().to_owned(),
            transform,
            anchors: map.anchors.clone(),
            residual: map.residual,
        };
        aligned.push(total.apply(next));
        pairwise.push(map);
        cumulative.push(total);
    }
    Ok(AlignedChain {
        aligned,
        pairwise,
        cumulative,
    })
}

/// Aligns every model directly to a common reference.
pub fn chain_to_reference(
    models: &[EmbeddingModel],
    reference: &EmbeddingModel,
    policy: &AnchorPolicy,
) -> Result<AlignedChain> {
    if models.is_empty() {
        return Err(Error::NoInput);
    }
    let mut aligned = Vec::with_capacity(models.len());
    let mut maps = Vec::with_capacity(models.len());
    for model in models {
        let map = align_to_reference(model, reference, policy)?;
        aligned.push(map.apply(model));
        maps.push(map);
    }
    Ok(AlignedChain {
        aligned,
        pairwise: maps.clone(),
        cumulative: maps,
    })
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::embed::TrainConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_model(slice: &str, n: usize, dim: usize, seed: u64) -> EmbeddingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words = (0..n).map(|i| format!("w{i:04}")).collect();
        let vectors = (0..n * dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        EmbeddingModel::from_parts(slice, words, vec![1; n], dim, vectors, TrainConfig::default())
            .unwrap()
    }

    /// Orthogonal factor of the QR decomposition of a seeded Gaussian-ish matrix.
    pub fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        m.qr().q()
    }
}

#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use crate::embed::{cosine, TrainConfig};
    use proptest::prelude::*;

    fn toy(slice: &str, words: &[&str]) -> EmbeddingModel {
        let n = words.len();
        EmbeddingModel::from_parts(
            slice,
            words.iter().map(|w| (*w).to_owned()).collect(),
            vec![1; n],
            2,
            (0..n * 2).map(|i| i as f64 + 1.0).collect(),
            TrainConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn anchors_are_sorted_intersection() {
        let a = toy("a", &["c", "a", "b"]);
        let b = toy("b", &["d", "b", "c"]);
        assert_eq!(
            shared_anchors(&a, &b, &AnchorPolicy::default()).unwrap(),
            vec!["b", "c"]
        );
    }

    #[test]
    fn anchors_drop_stoplist_and_respect_cap() {
        let a = random_model("a", 500, 8, 1);
        let policy = AnchorPolicy {
            stoplist: ["w0000".to_owned()].into(),
            cap: None,
        };
        assert_eq!(shared_anchors(&a, &a, &policy).unwrap().len(), 499);
        let capped = AnchorPolicy {
            cap: Some(20),
            ..AnchorPolicy::default()
        };
        assert_eq!(shared_anchors(&a, &a, &capped).unwrap().len(), 20);
    }

    #[test]
    fn disjoint_vocabularies_error() {
        let a = toy("a", &["x", "y"]);
        let b = toy("b", &["u", "v"]);
        match shared_anchors(&a, &b, &AnchorPolicy::default()) {
            Err(Error::TooFewAnchors {
                source_slice,
                target_slice,
                ..
            }) => assert_eq!((source_slice.as_str(), target_slice.as_str()), ("a", "b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn self_alignment_is_identity() {
        let m = random_model("m", 300, 20, 3);
        let anchors = shared_anchors(&m, &m, &AnchorPolicy::default()).unwrap();
        let map = procrustes(&m, &m, &anchors).unwrap();
        let eye = DMatrix::<f64>::identity(20, 20);
        assert!((&map.transform - eye).amax() < 1e-6);
        assert!(map.residual < 1e-9);
    }

    #[test]
    fn recovers_a_planted_rotation() {
        let m = random_model("m", 400, 16, 5);
        let q = random_orthogonal(16, 6);
        let rotated = apply_transform(&m, &q).with_slice_id("r");
        let anchors = shared_anchors(&m, &rotated, &AnchorPolicy::default()).unwrap();
        let map = procrustes(&m, &rotated, &anchors).unwrap();
        assert!((&map.transform - &q).norm() < 1e-4);
        assert!(map.residual < 1e-6);
        assert!(map.orthogonality_error() < 1e-6);
    }

    #[test]
    fn perturbed_anchor_leaves_residual_but_stays_orthogonal() {
        let m = random_model("m", 200, 10, 7);
        let noisy = m.map_rows(|src, dst| dst.copy_from_slice(src));
        let mut vectors = noisy.vectors().to_vec();
        vectors[3] += 0.5;
        let noisy = EmbeddingModel::from_parts(
            "n",
            m.words().to_vec(),
            m.frequencies().to_vec(),
            10,
            vectors,
            TrainConfig::default(),
        )
        .unwrap();
        let anchors = shared_anchors(&m, &noisy, &AnchorPolicy::default()).unwrap();
        let map = procrustes(&m, &noisy, &anchors).unwrap();
        assert!(map.residual > 1e-6);
        assert!(map.orthogonality_error() < 1e-6);
    }

    #[test]
    fn rank_deficient_anchors_error() {
        // All vectors lie on one line: X^T Y has rank 1.
        let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let vectors: Vec<f64> = (0..10).flat_map(|i| [i as f64 + 1.0, 0.0, 0.0]).collect();
        let m = EmbeddingModel::from_parts("flat", words, vec![1; 10], 3, vectors, TrainConfig::default())
            .unwrap();
        let anchors = shared_anchors(&m, &m, &AnchorPolicy::default()).unwrap();
        assert!(matches!(
            procrustes(&m, &m, &anchors),
            Err(Error::DegenerateAnchors { .. })
        ));
    }

    #[test]
    fn chain_of_one_is_unchanged() {
        let m = random_model("3", 100, 8, 1);
        let chain = chain_consecutive(std::slice::from_ref(&m), &AnchorPolicy::default()).unwrap();
        assert_eq!(chain.aligned, vec![m]);
        assert!(chain.pairwise.is_empty());
    }

    #[test]
    fn chain_of_identical_models_uses_identity() {
        let m = random_model("3", 100, 8, 1);
        let chain =
            chain_consecutive(&[m.clone(), m.clone().with_slice_id("4")], &AnchorPolicy::default())
                .unwrap();
        let eye = DMatrix::<f64>::identity(8, 8);
        assert!((&chain.pairwise[0].transform - eye).amax() < 1e-6);
    }

    #[test]
    fn rotation_chain_returns_to_first_space() {
        let dim = 12;
        let m1 = random_model("1", 250, dim, 11);
        let m2 = apply_transform(&m1, &random_orthogonal(dim, 12)).with_slice_id("2");
        let m3 = apply_transform(&m2, &random_orthogonal(dim, 13)).with_slice_id("3");
        let chain = chain_consecutive(&[m1.clone(), m2, m3], &AnchorPolicy::default()).unwrap();
        let aligned3 = &chain.aligned[2];
        for w in m1.words() {
            let c = cosine(m1.vector(w).unwrap(), aligned3.vector(w).unwrap()).unwrap();
            assert!(c > 1.0 - 1e-3, "{w}: {c}");
        }
        for map in chain.maps() {
            assert!(map.orthogonality_error() < 1e-6);
        }
    }

    #[test]
    fn rotated_reference_is_recovered() {
        let reference = random_model("reference", 300, 10, 21);
        let q = random_orthogonal(10, 22);
        let rotated = apply_transform(&reference, &q).with_slice_id("5");
        let map = align_to_reference(&rotated, &reference, &AnchorPolicy::default()).unwrap();
        // rotated = ref * Q, so the map back is Q^T.
        assert!((&map.transform - q.transpose()).norm() < 1e-4);
        let same = align_to_reference(&reference, &reference, &AnchorPolicy::default()).unwrap();
        assert!((same.transform - DMatrix::<f64>::identity(10, 10)).amax() < 1e-6);
    }

    #[test]
    fn too_small_overlap_with_reference_errors() {
        let reference = random_model("reference", 300, 200, 1);
        let small = random_model("c", 10, 200, 2);
        assert!(matches!(
            align_to_reference(&small, &reference, &AnchorPolicy::default()),
            Err(Error::TooFewAnchors { found: 10, needed: 200, .. })
        ));
    }

    #[test]
    fn record_round_trip_preserves_transform() {
        let q = random_orthogonal(5, 2);
        let map = AlignmentMap {
            source_slice: "a".into(),
            target_slice: "b".into(),
            transform: q.clone(),
            anchors: vec!["x".into()],
            residual: 0.5,
        };
        let rec = map.to_record();
        assert_eq!(rec.transform[1], q[(0, 1)]);
        assert_eq!(rec.transform(), q);
    }

    #[test]
    fn chain_consistency_across_three_spaces() {
        let dim = 8;
        let a = random_model("a", 120, dim, 31);
        let b = apply_transform(&a, &random_orthogonal(dim, 32)).with_slice_id("b");
        let c = apply_transform(&b, &random_orthogonal(dim, 33)).with_slice_id("c");
        let p = AnchorPolicy::default();
        let ab = procrustes(&a, &b, &shared_anchors(&a, &b, &p).unwrap()).unwrap();
        let bc = procrustes(&b, &c, &shared_anchors(&b, &c, &p).unwrap()).unwrap();
        let ac = procrustes(&a, &c, &shared_anchors(&a, &c, &p).unwrap()).unwrap();
        assert!((ab.transform * bc.transform - ac.transform).amax() < 1e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn maps_are_isometries(seed in 0u64..1000, x in prop::collection::vec(-5.0f64..5.0, 6)) {
            let m = random_model("m", 60, 6, seed);
            let r = apply_transform(&m, &random_orthogonal(6, seed + 1)).with_slice_id("r");
            let map = procrustes(&m, &r, &shared_anchors(&m, &r, &AnchorPolicy::default()).unwrap()).unwrap();
            prop_assert!(map.orthogonality_error() < 1e-6);
            let mapped = DMatrix::from_row_slice(1, 6, &x) * &map.transform;
            prop_assert!((mapped.norm() - norm(&x)).abs() < 1e-9);
        }
    }
}
