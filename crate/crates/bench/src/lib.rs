//! Seeded fixtures shared by the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rtucker_core::{InitConfig, ModelKind, RtModel, Triple};

pub fn random_model(kind: ModelKind, num_entities: usize, num_relations: usize, d_e: usize, d_r: usize) -> RtModel {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    RtModel::init(
        kind,
        num_entities,
        num_relations,
        d_e,
        d_r,
        &InitConfig::default(),
        &mut rng,
    )
    .expect("valid benchmark dimensions")
}

/// Deterministic pseudo-random triples over `num_entities` and `num_relations`.
pub fn random_triples(count: usize, num_entities: usize, num_relations: usize) -> Vec<Triple> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    (0..count)
        .map(|_| {
            Triple::new(
                rng.random_range(0..num_entities),
                rng.random_range(0..num_relations),
                rng.random_range(0..num_entities),
            )
        })
        .collect()
}
