//! Planted data: triples drawn from known BPER-form factors.
//!
//! Each user picks `records_per_user` distinct items by Gumbel-top-k over
//! `(p*·q* + b*) / item_temperature`. Each record gets the top
//! `explanations_per_record` explanations under the true blended score, and
//! each of those is swapped for a uniform random explanation with
//! probability `noise`. Entities that end up in no record are dropped and the
//! ground truth is re-indexed to match.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dataset::{IdMap, IdMaps, InteractionStore, TripleRecord};
use crate::embfile::EmbeddingFile;
use crate::matrix::Matrix;
use crate::params::FactorParams;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_explanations: usize,
    pub dim_true: usize,
    pub records_per_user: usize,
    pub explanations_per_record: usize,
    /// Probability of replacing a planted explanation by a random one.
    pub noise: f64,
    pub seed: u64,
    /// Blend of the user-side and item-side true scores.
    pub mu_true: f64,
    /// Standard deviation of the true explanation and item biases.
    pub bias_scale: f64,
    /// Lower values make item choice follow the true item score more closely.
    pub item_temperature: f64,
    /// Width of the synthetic semantic vectors.
    pub embedding_dim: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 500,
            n_items: 300,
            n_explanations: 400,
            dim_true: 10,
            records_per_user: 20,
            explanations_per_record: 3,
            noise: 0.1,
            seed: 7,
            mu_true: 0.5,
            bias_scale: 0.5,
            item_temperature: 0.5,
            embedding_dim: 16,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        for (name, v) in [
            ("n_users", self.n_users),
            ("n_items", self.n_items),
            ("n_explanations", self.n_explanations),
            ("dim_true", self.dim_true),
            ("records_per_user", self.records_per_user),
            ("explanations_per_record", self.explanations_per_record),
            ("embedding_dim", self.embedding_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.records_per_user > self.n_items {
            return bad(format!(
                "records_per_user {} exceeds n_items {}",
                self.records_per_user, self.n_items
            ));
        }
        if self.explanations_per_record > self.n_explanations {
            return bad(format!(
                "explanations_per_record {} exceeds n_explanations {}",
                self.explanations_per_record, self.n_explanations
            ));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise {} not in [0, 1)", self.noise));
        }
        if !(0.0..=1.0).contains(&self.mu_true) {
            return bad(format!("mu_true {} not in [0, 1]", self.mu_true));
        }
        if !(self.bias_scale >= 0.0) || !self.bias_scale.is_finite() {
            return bad(format!("bias_scale {} must be >= 0", self.bias_scale));
        }
        if !(self.item_temperature > 0.0) || !self.item_temperature.is_finite() {
            return bad(format!("item_temperature {} must be > 0", self.item_temperature));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub store: InteractionStore,
    /// Ground-truth factors, indexed like `store`.
    pub truth: FactorParams<f64>,
    pub mu_true: f64,
    /// One semantic vector per explanation: a fixed random linear image of
    /// its true factors plus Gaussian noise.
    pub embeddings: EmbeddingFile,
    /// Raw ids are the pre-compaction generator indices.
    pub ids: IdMaps,
}

fn gaussian(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::gaussian(rows, cols, std, rng)
}

fn gaussian_vec(n: usize, std: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if std == 0.0 {
        return vec![0.0; n];
    }
    let dist = Normal::new(0.0, std).expect("finite std");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Keeps the listed rows, in order.
fn select_rows(m: &Matrix<f64>, keep: &[usize]) -> Matrix<f64> {
    Matrix::from_fn(keep.len(), m.cols(), |r, c| m.get(keep[r], c))
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.dim_true;
    // entries with variance 1/√d give inner products of unit variance
    let std = (d as f64).powf(-0.25);
    let full = FactorParams {
        user: gaussian(spec.n_users, d, std, &mut rng),
        item: gaussian(spec.n_items, d, std, &mut rng),
        expl_user: gaussian(spec.n_explanations, d, std, &mut rng),
        expl_item: gaussian(spec.n_explanations, d, std, &mut rng),
        bias_expl_user: gaussian_vec(spec.n_explanations, spec.bias_scale, &mut rng),
        bias_expl_item: gaussian_vec(spec.n_explanations, spec.bias_scale, &mut rng),
        bias_item: gaussian_vec(spec.n_items, spec.bias_scale, &mut rng),
    };

    let mut records = Vec::with_capacity(spec.n_users * spec.records_per_user);
    let mut item_scores = vec![0.0; spec.n_items];
    let mut expl_scores = vec![0.0; spec.n_explanations];
    for u in 0..spec.n_users {
        for (i, s) in item_scores.iter_mut().enumerate() {
            let gumbel = -(-rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).ln();
            *s = full.score_item(u, i) / spec.item_temperature + gumbel;
        }
        let mut items = top_k(&item_scores, spec.records_per_user);
        items.sort_unstable();
        for i in items {
            for (e, s) in expl_scores.iter_mut().enumerate() {
                *s = full.score_bper(u, i, e, spec.mu_true);
            }
            let mut planted = top_k(&expl_scores, spec.explanations_per_record);
            for k in 0..planted.len() {
                if rng.random::<f64>() < spec.noise {
                    // uniform over explanations not already attached
                    loop {
                        let e = rng.random_range(0..spec.n_explanations);
                        if !planted.contains(&e) {
                            planted[k] = e;
                            break;
                        }
                        if planted.len() == spec.n_explanations {
                            break;
                        }
                    }
                }
            }
            records.push((u, i, planted));
        }
    }
    records.shuffle(&mut rng);

    let mut used_users = vec![false; spec.n_users];
    let mut used_items = vec![false; spec.n_items];
    let mut used_expl = vec![false; spec.n_explanations];
    for (u, i, es) in &records {
        used_users[*u] = true;
        used_items[*i] = true;
        for &e in es {
            used_expl[e] = true;
        }
    }
    let kept = |used: &[bool]| -> Vec<usize> { (0..used.len()).filter(|&x| used[x]).collect() };
    let (keep_u, keep_i, keep_e) = (kept(&used_users), kept(&used_items), kept(&used_expl));
    let remap = |keep: &[usize], n: usize| {
        let mut m = vec![usize::MAX; n];
        for (new, &old) in keep.iter().enumerate() {
            m[old] = new;
        }
        m
    };
    let (map_u, map_i, map_e) = (
        remap(&keep_u, spec.n_users),
        remap(&keep_i, spec.n_items),
        remap(&keep_e, spec.n_explanations),
    );
    let records: Vec<TripleRecord> = records
        .into_iter()
        .map(|(u, i, es)| TripleRecord::new(map_u[u], map_i[i], es.into_iter().map(|e| map_e[e]).collect()))
        .collect();
    let store = InteractionStore::from_records(records, keep_u.len(), keep_i.len(), keep_e.len())
        .expect("generator emits in-range, non-empty records");

    let truth = FactorParams {
        user: select_rows(&full.user, &keep_u),
        item: select_rows(&full.item, &keep_i),
        expl_user: select_rows(&full.expl_user, &keep_e),
        expl_item: select_rows(&full.expl_item, &keep_e),
        bias_expl_user: keep_e.iter().map(|&e| full.bias_expl_user[e]).collect(),
        bias_expl_item: keep_e.iter().map(|&e| full.bias_expl_item[e]).collect(),
        bias_item: keep_i.iter().map(|&i| full.bias_item[i]).collect(),
    };

    let mixing = gaussian(spec.embedding_dim, 2 * d, (2.0 * d as f64).powf(-0.5), &mut rng);
    let emb_noise = Normal::new(0.0, 0.1).expect("finite std");
    let mut values = Vec::with_capacity(keep_e.len() * spec.embedding_dim);
    for e in 0..keep_e.len() {
        let source: Vec<f64> = truth.expl_user.row(e).iter().chain(truth.expl_item.row(e)).copied().collect();
        for r in 0..spec.embedding_dim {
            let v: f64 = mixing.row(r).iter().zip(&source).map(|(a, b)| a * b).sum();
            values.push((v + emb_noise.sample(&mut rng)) as f32);
        }
    }
    let embeddings = EmbeddingFile {
        tag: "synthetic".to_owned(),
        count: keep_e.len(),
        dim: spec.embedding_dim,
        values,
    };

    let ids_of = |keep: &[usize]| {
        let mut m = IdMap::default();
        for &old in keep {
            m.get_or_insert(&old.to_string());
        }
        m
    };
    let ids = IdMaps {
        users: ids_of(&keep_u),
        items: ids_of(&keep_i),
        explanations: ids_of(&keep_e),
    };
    Ok(SyntheticData {
        store,
        truth,
        mu_true: spec.mu_true,
        embeddings,
        ids,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{dcg_normalizer, evaluate_explanation_ranking, ExplanationScorer};

    struct Truth<'a>(&'a SyntheticData);

    impl ExplanationScorer for Truth<'_> {
        fn n_explanations(&self) -> usize {
            self.0.store.n_explanations()
        }

        fn score(&self, u: usize, i: usize, e: usize) -> f64 {
            self.0.truth.score_bper(u, i, e, self.0.mu_true)
        }
    }

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_users: 40,
            n_items: 30,
            n_explanations: 50,
            dim_true: 4,
            records_per_user: 5,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn shape_and_reproducibility() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.store, b.store);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.store.records().len(), 40 * 5);
        assert_eq!(a.store.triple_count(), 40 * 5 * 3);
        assert_eq!(a.truth.n_explanations(), a.store.n_explanations());
        assert_eq!(a.embeddings.count, a.store.n_explanations());
        for x in 0..a.store.n_explanations() {
            assert!(!a.store.users_of_explanation(x).is_empty());
        }
        for x in 0..a.store.n_items() {
            assert!(!a.store.users_of_item(x).is_empty());
        }
        let c = generate_synthetic(&SyntheticSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a.store, c.store);
    }

    #[test]
    fn noiseless_truth_scorer_is_optimal() {
        let data = generate_synthetic(&SyntheticSpec { noise: 0.0, ..small() }).unwrap();
        let r = evaluate_explanation_ranking(&Truth(&data), &data.store, 10).unwrap();
        // three relevant explanations at the top three positions of ten
        let best = (1.0 / 2f64.ln() + 1.0 / 3f64.ln() + 1.0 / 4f64.ln()) / dcg_normalizer(10);
        assert!((r.ndcg - best).abs() < 1e-12, "{}", r.ndcg);
        assert!((r.precision - 0.3).abs() < 1e-12);
        assert!((r.recall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(generate_synthetic(&SyntheticSpec { noise: 1.0, ..small() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { records_per_user: 31, ..small() }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { n_users: 0, ..small() }).is_err());
    }
}
