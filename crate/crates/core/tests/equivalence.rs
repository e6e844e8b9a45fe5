mod common;

use bper::dataset::{InteractionStore, TripleRecord};
use bper::model::{train_model, ModelKind};
use bper::params::{EmbeddingTable, Hyperparams};
use bper::eval::ExplanationScorer;
use bper::matrix::Matrix;

#[test]
fn cd_embeddings_reproduce_bper_scores() {
    for seed in 0..200 {
        let gap = common::embedding_gap(seed, false);
        assert!(gap <= 1e-9, "seed {seed}: {gap:e}");
        let gap = common::embedding_gap(seed, true);
        assert!(gap <= 1e-9, "seed {seed} (plus): {gap:e}");
    }
}

#[test]
fn unbiased_half_blend_ranks_like_pitf() {
    for seed in 0..200 {
        assert!(common::pitf_rankings_agree(seed), "seed {seed}");
    }
}

fn small_store() -> InteractionStore {
    let mut r = common::rng(5);
    let mut records = Vec::new();
    for u in 0..20 {
        for i in 0..15 {
            if rand::Rng::random_bool(&mut r, 0.3) {
                let e = rand::Rng::random_range(&mut r, 0..30);
                records.push(TripleRecord::new(u, i, vec![e, (e + u) % 30]));
            }
        }
    }
    InteractionStore::from_records(records, 20, 15, 30).unwrap()
}

/// A frozen projection at its initial state gates with 1⃗, so BPER+ must
/// follow BPER's trajectory exactly.
#[test]
fn frozen_projection_matches_bper_bitwise() {
    let store = small_store();
    let hp = Hyperparams {
        dim: 4,
        epochs: 5,
        train_projection: false,
        ..Hyperparams::default()
    };
    let raw = Matrix::<f64>::gaussian(30, 6, 1.0, &mut common::rng(1));
    let emb = EmbeddingTable::new(raw, 4);
    let plus = train_model(ModelKind::BperPlus, &store, &hp, 10, Some(&emb)).unwrap();
    let bper = train_model::<f64>(ModelKind::Bper, &store, &hp, 10, None).unwrap();
    for u in 0..20 {
        for i in 0..15 {
            for e in 0..30 {
                assert_eq!(plus.score(u, i, e).to_bits(), bper.score(u, i, e).to_bits());
            }
        }
    }
}
