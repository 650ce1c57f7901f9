//! Rotates a random embedding model by a known orthogonal map, then
//! recovers the map with Procrustes and chains three slices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semshift::align::{apply_transform, chain_consecutive, orthogonality_error, procrustes, AnchorPolicy};
use semshift::embed::{EmbeddingModel, TrainConfig};
use semshift::metrics::drift;

fn main() -> semshift::Result<()> {
    let (n, dim) = (300, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let words: Vec<String> = (0..n).map(|i| format!("w{i:03}")).collect();
    let vectors = (0..n * dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let base = EmbeddingModel::from_parts("1", words.clone(), vec![1; n], dim, vectors, TrainConfig::default())?;

    let rotation = |rng: &mut ChaCha8Rng| DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() - 0.5).qr().q();
    let q = rotation(&mut rng);
    let r = rotation(&mut rng);
    let second = apply_transform(&base, &q).with_slice_id("2");
    let third = apply_transform(&second, &r).with_slice_id("3");

    let map = procrustes(&second, &base, &words)?;
    println!(
        "recovered |W - Q^T|_F = {:.2e}, orthogonality error {:.2e}, residual {:.2e}",
        (&map.transform - q.transpose()).norm(),
        orthogonality_error(&map.transform),
        map.residual
    );

    let chain = chain_consecutive(&[base.clone(), second, third], &AnchorPolicy::default())?;
    let last = &chain.aligned[2];
    let worst = words
        .iter()
        .map(|w| drift(w, &base, last))
        .collect::<semshift::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0_f64, |m, d| m.max(d.abs()));
    println!("slice 3 chained back into slice 1's space: max drift {worst:.2e}");
    Ok(())
}
