//! Oracles shared by the focused test files and the acceptance runner.
#![allow(dead_code)]

use std::collections::HashMap;

use bper::config::ExperimentConfig;
use bper::dataset::{InteractionStore, TripleRecord};
use bper::eval::{metrics_for_list, rank_top_n, ListMetrics};
use bper::harness::Row;
use bper::matrix::Matrix;
use bper::params::{CdParams, EmbeddingTable, FactorParams};
use bper::training::{self, BperPlusModel, ExplSample, Sampler, TripleSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- gradients

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Trainer {
    Bper,
    BperJ,
    Cd,
    CdJ,
    Pitf,
    PitfJ,
    BperPlus,
}

pub const TRAINERS: [Trainer; 7] = [
    Trainer::Bper,
    Trainer::BperJ,
    Trainer::Cd,
    Trainer::CdJ,
    Trainer::Pitf,
    Trainer::PitfJ,
    Trainer::BperPlus,
];

const USERS: usize = 3;
const ITEMS: usize = 4;
const EXPLS: usize = 6;
const DIM: usize = 3;
const EMB: usize = 4;
const STEP: f64 = 1e-5;

fn random_factors(r: &mut ChaCha8Rng) -> FactorParams<f64> {
    let mut p = FactorParams::<f64>::init(USERS, ITEMS, EXPLS, DIM, 0.7, r.random());
    for b in [&mut p.bias_expl_user, &mut p.bias_expl_item, &mut p.bias_item] {
        for v in b.iter_mut() {
            *v = r.random_range(-1.0..1.0);
        }
    }
    p
}

/// Parameter containers viewed as one flat coordinate vector.
trait Flat: Clone {
    fn slices(&mut self) -> Vec<&mut [f64]>;
}

impl Flat for FactorParams<f64> {
    fn slices(&mut self) -> Vec<&mut [f64]> {
        factor_slices(self).into_iter().collect()
    }
}

impl Flat for CdParams<f64> {
    fn slices(&mut self) -> Vec<&mut [f64]> {
        vec![self.user.as_mut_slice(), self.item.as_mut_slice(), self.expl.as_mut_slice()]
    }
}

impl Flat for BperPlusModel<f64> {
    fn slices(&mut self) -> Vec<&mut [f64]> {
        let BperPlusModel { params, embeddings } = self;
        let mut out: Vec<&mut [f64]> = factor_slices(params).into_iter().collect();
        out.push(embeddings.weight.as_mut_slice());
        out.push(&mut embeddings.bias[..]);
        out
    }
}

fn factor_slices(p: &mut FactorParams<f64>) -> [&mut [f64]; 7] {
    [
        p.user.as_mut_slice(),
        p.item.as_mut_slice(),
        p.expl_user.as_mut_slice(),
        p.expl_item.as_mut_slice(),
        &mut p.bias_expl_user[..],
        &mut p.bias_expl_item[..],
        &mut p.bias_item[..],
    ]
}

fn flatten(slices: Vec<&mut [f64]>) -> Vec<f64> {
    slices.into_iter().flat_map(|s| s.iter().copied().collect::<Vec<_>>()).collect()
}

fn nudge(slices: Vec<&mut [f64]>, mut index: usize, delta: f64) {
    for s in slices {
        if index < s.len() {
            s[index] += delta;
            return;
        }
        index -= s.len();
    }
    panic!("coordinate out of range");
}

/// Relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between the update implied by
/// one SGD step and central differences of the per-sample objective.
fn compare<M: Flat>(
    model: &M,
    loss: impl Fn(&M) -> f64,
    step: impl Fn(&mut M, f64),
) -> f64 {
    let gamma = 0.5;
    let mut before = model.clone();
    let theta0 = flatten(before.slices());
    let mut after = model.clone();
    step(&mut after, gamma);
    let theta1 = flatten(after.slices());
    let analytic: Vec<f64> = theta0.iter().zip(&theta1).map(|(a, b)| (a - b) / gamma).collect();

    let numeric: Vec<f64> = (0..theta0.len())
        .map(|j| {
            let mut plus = model.clone();
            nudge(plus.slices(), j, STEP);
            let mut minus = model.clone();
            nudge(minus.slices(), j, -STEP);
            (loss(&plus) - loss(&minus)) / (2.0 * STEP)
        })
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12)
}

fn expl_sample(r: &mut ChaCha8Rng) -> ExplSample {
    let pos = r.random_range(0..EXPLS);
    let other = |r: &mut ChaCha8Rng| loop {
        let e = r.random_range(0..EXPLS);
        if e != pos {
            return e;
        }
    };
    ExplSample {
        user: r.random_range(0..USERS),
        item: r.random_range(0..ITEMS),
        pos,
        neg_user: other(r),
        neg_item: other(r),
    }
}

fn triple_sample(r: &mut ChaCha8Rng) -> TripleSample {
    let pos = r.random_range(0..EXPLS);
    let neg = (pos + r.random_range(1..EXPLS)) % EXPLS;
    TripleSample {
        user: r.random_range(0..USERS),
        item: r.random_range(0..ITEMS),
        pos,
        neg,
    }
}

fn other_item(r: &mut ChaCha8Rng, item: usize) -> usize {
    (item + r.random_range(1..ITEMS)) % ITEMS
}

/// Relative gradient error of `trainer` on one random toy instance.
pub fn gradient_error(trainer: Trainer, seed: u64) -> f64 {
    let mut r = rng(seed);
    let lambda = r.random_range(0.0..0.2);
    let alpha = r.random_range(0.05..1.0);
    match trainer {
        Trainer::Bper | Trainer::BperJ => {
            let p = random_factors(&mut r);
            let s = expl_sample(&mut r);
            let neg = other_item(&mut r, s.item);
            if trainer == Trainer::Bper {
                compare(&p, |p| training::bper_loss(p, &s, lambda), |p, g| {
                    training::bper_step(p, &s, g, lambda);
                })
            } else {
                compare(
                    &p,
                    |p| training::bper_j_loss(p, &s, neg, alpha, lambda),
                    |p, g| {
                        training::bper_j_step(p, &s, neg, alpha, g, lambda);
                    },
                )
            }
        }
        Trainer::Pitf | Trainer::PitfJ => {
            let p = random_factors(&mut r);
            let s = triple_sample(&mut r);
            let neg = other_item(&mut r, s.item);
            if trainer == Trainer::Pitf {
                compare(&p, |p| training::pitf_loss(p, &s, lambda), |p, g| {
                    training::pitf_step(p, &s, g, lambda);
                })
            } else {
                compare(
                    &p,
                    |p| training::pitf_j_loss(p, &s, neg, alpha, lambda),
                    |p, g| {
                        training::pitf_j_step(p, &s, neg, alpha, g, lambda);
                    },
                )
            }
        }
        Trainer::Cd | Trainer::CdJ => {
            let p = CdParams::<f64>::init(USERS, ITEMS, EXPLS, DIM, 0.9, r.random());
            let s = triple_sample(&mut r);
            let neg = other_item(&mut r, s.item);
            if trainer == Trainer::Cd {
                compare(&p, |p| training::cd_loss(p, &s, lambda), |p, g| {
                    training::cd_step(p, &s, g, lambda);
                })
            } else {
                compare(
                    &p,
                    |p| training::cd_j_loss(p, &s, neg, alpha, lambda),
                    |p, g| {
                        training::cd_j_step(p, &s, neg, alpha, g, lambda);
                    },
                )
            }
        }
        Trainer::BperPlus => {
            let params = random_factors(&mut r);
            let raw = Matrix::gaussian(EXPLS, EMB, 1.0, &mut r);
            let weight = Matrix::gaussian(DIM, EMB, 0.5, &mut r);
            let bias = (0..DIM).map(|_| r.random_range(0.5..1.5)).collect();
            let embeddings = EmbeddingTable::with_projection(raw, weight, bias).unwrap();
            let m = BperPlusModel { params, embeddings };
            let s = expl_sample(&mut r);
            compare(&m, |m| training::bper_plus_loss(m, &s, lambda), |m, g| {
                training::bper_plus_step(m, &s, g, lambda, true);
            })
        }
    }
}

// -------------------------------------------------------------- equivalence

/// Largest |CD-embedded score − BPER score| over the whole universe.
pub fn embedding_gap(seed: u64, plus: bool) -> f64 {
    let mut r = rng(seed);
    let (nu, ni, ne) = (r.random_range(1..=10), r.random_range(1..=10), r.random_range(1..=10));
    let d = r.random_range(1..=5);
    let mut p = FactorParams::<f64>::init(nu, ni, ne, d, 1.0, r.random());
    for v in p.bias_expl_user.iter_mut().chain(p.bias_expl_item.iter_mut()) {
        *v = r.random_range(-1.0..1.0);
    }
    let mu = r.random_range(0.0..=1.0);
    let mut gap = 0.0f64;
    if plus {
        let emb_dim = r.random_range(1..=6);
        let raw = Matrix::gaussian(ne, emb_dim, 1.0, &mut r);
        let weight = Matrix::gaussian(d, emb_dim, 0.5, &mut r);
        let bias = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let emb = EmbeddingTable::with_projection(raw, weight, bias).unwrap();
        let cd = p.embed_plus_into_cd(&emb, mu).unwrap();
        for u in 0..nu {
            for i in 0..ni {
                for e in 0..ne {
                    gap = gap.max((cd.score(u, i, e) - p.score_bper_plus(&emb, u, i, e, mu)).abs());
                }
            }
        }
    } else {
        let cd = p.embed_into_cd(mu);
        for u in 0..nu {
            for i in 0..ni {
                for e in 0..ne {
                    gap = gap.max((cd.score(u, i, e) - p.score_bper(u, i, e, mu)).abs());
                }
            }
        }
    }
    gap
}

/// Whether bias-free BPER at μ = 0.5 and PITF rank every pair's
/// explanations identically.
pub fn pitf_rankings_agree(seed: u64) -> bool {
    let mut r = rng(seed);
    let (nu, ni, ne) = (r.random_range(1..=10), r.random_range(1..=10), r.random_range(2..=10));
    let p = FactorParams::<f64>::init(nu, ni, ne, r.random_range(1..=5), 1.0, r.random());
    (0..nu).all(|u| {
        (0..ni).all(|i| {
            let bper: Vec<f64> = (0..ne).map(|e| p.score_bper(u, i, e, 0.5)).collect();
            let pitf: Vec<f64> = (0..ne).map(|e| p.score_pitf(u, i, e)).collect();
            let a: Vec<usize> = rank_top_n(&bper, ne, |_| false).ids().collect();
            let b: Vec<usize> = rank_top_n(&pitf, ne, |_| false).ids().collect();
            a == b
        })
    })
}

// ------------------------------------------------------------------ metrics

/// Straightforward re-derivation: full sort, then count.
pub fn brute_metrics(scores: &[f64], truth: &[usize], n: usize) -> (Vec<usize>, ListMetrics) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(n);
    let mut dcg = 0.0;
    let mut hits = 0.0;
    for (rank0, id) in order.iter().enumerate() {
        if truth.contains(id) {
            dcg += 1.0 / (rank0 as f64 + 2.0).ln();
            hits += 1.0;
        }
    }
    let z: f64 = (1..=n).map(|p| 1.0 / (p as f64 + 1.0).ln()).sum();
    let precision = hits / n as f64;
    let recall = hits / truth.len() as f64;
    let f1 = if hits == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (
        order,
        ListMetrics {
            ndcg: dcg / z,
            precision,
            recall,
            f1,
        },
    )
}

/// Largest deviation between library and brute-force metrics on one random
/// instance, or infinity when the ranked ids differ.
pub fn metric_gap(seed: u64) -> f64 {
    let mut r = rng(seed);
    let candidates = r.random_range(1..=40);
    // a coarse grid makes ties common
    let scores: Vec<f64> = (0..candidates).map(|_| f64::from(r.random_range(-5i32..=5)) * 0.25).collect();
    let mut truth: Vec<usize> = (0..candidates).filter(|_| r.random_bool(0.3)).collect();
    if truth.is_empty() {
        truth.push(r.random_range(0..candidates));
    }
    let n = r.random_range(1..=15);
    let ranked = rank_top_n(&scores, n, |_| false);
    let lib = metrics_for_list(&ranked, &truth, n).unwrap();
    let (order, brute) = brute_metrics(&scores, &truth, n);
    if ranked.ids().collect::<Vec<_>>() != order {
        return f64::INFINITY;
    }
    [
        lib.ndcg - brute.ndcg,
        lib.precision - brute.precision,
        lib.recall - brute.recall,
        lib.f1 - brute.f1,
    ]
    .iter()
    .fold(0.0f64, |m, d| m.max(d.abs()))
}

pub fn as_tuple(m: ListMetrics) -> (f64, f64, f64, f64) {
    (m.ndcg, m.precision, m.recall, m.f1)
}

// ------------------------------------------------------------------ sampler

/// A store with uneven per-user and per-item explanation sets.
pub fn sampler_store() -> InteractionStore {
    let mut r = rng(11);
    let mut records = Vec::new();
    for u in 0..12 {
        for i in 0..15 {
            if r.random_bool(0.35) {
                let k = r.random_range(1..=4);
                let expls: Vec<usize> = (0..k).map(|_| r.random_range(0..25)).collect();
                records.push(TripleRecord::new(u, i, expls));
            }
        }
    }
    InteractionStore::from_records(records, 12, 15, 25).unwrap()
}

/// Chi-square statistic against the uniform distribution, with its 3σ
/// acceptance bound `k − 1 + 3√(2(k − 1))`.
pub fn chi_square(counts: &[usize]) -> (f64, f64) {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let dof = counts.len() as f64 - 1.0;
    (stat, dof + 3.0 * (2.0 * dof).sqrt())
}

pub struct SamplerCheck {
    /// (statistic, bound) for triple draws, user-complement draws and
    /// pair-complement draws.
    pub tests: Vec<(&'static str, f64, f64)>,
    pub violations: usize,
}

pub fn sampler_check(draws: usize, seed: u64) -> SamplerCheck {
    let store = sampler_store();
    let mut sampler = Sampler::new(&store, seed);
    let index: HashMap<(usize, usize, usize), usize> =
        store.triples().iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let mut triple_counts = vec![0usize; store.triple_count()];
    for _ in 0..draws {
        triple_counts[index[&sampler.triple()]] += 1;
    }

    let user = (0..store.n_users()).max_by_key(|&u| store.explanations_of_user(u).len()).unwrap();
    let excluded = store.explanations_of_user(user).to_vec();
    let mut user_counts = vec![0usize; store.n_explanations()];
    let mut violations = 0;
    for _ in 0..draws {
        let e = sampler.outside(store.n_explanations(), &excluded).unwrap();
        user_counts[e] += 1;
    }
    if excluded.iter().any(|&e| user_counts[e] > 0) {
        violations += 1;
    }
    let user_counts: Vec<usize> = (0..store.n_explanations())
        .filter(|e| excluded.binary_search(e).is_err())
        .map(|e| user_counts[e])
        .collect();

    let mut item_counts = vec![0usize; store.n_items()];
    for _ in 0..draws {
        let s = sampler.explanation_sample().unwrap();
        violations += usize::from(store.explanations_of_user(s.user).contains(&s.neg_user));
        violations += usize::from(store.explanations_of_item(s.item).contains(&s.neg_item));
        let t = sampler.triple_sample().unwrap();
        violations += usize::from(store.explanations_of_pair(t.user, t.item).contains(&t.neg));
        let neg = sampler.negative_item(user).unwrap();
        violations += usize::from(store.items_of_user(user).contains(&neg));
        item_counts[neg] += 1;
    }
    let item_counts: Vec<usize> = (0..store.n_items())
        .filter(|i| store.items_of_user(user).binary_search(i).is_err())
        .map(|i| item_counts[i])
        .collect();

    let mut tests = Vec::new();
    for (name, counts) in [
        ("triples", triple_counts),
        ("explanations outside E_u", user_counts),
        ("items outside I_u", item_counts),
    ] {
        let (stat, bound) = chi_square(&counts);
        tests.push((name, stat, bound));
    }
    SamplerCheck { tests, violations }
}

// ---------------------------------------------------------------- pipelines

/// The desk-scale configuration used for the planted-data checks.
pub fn planted_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.hyperparams.dim = 10;
    cfg.hyperparams.epochs = 100;
    cfg
}

/// Mean over repetitions of the per-repetition rows matching the filters.
pub fn mean_of(rows: &[Row], model: &str, hp_contains: &str, metric: &str) -> Option<f64> {
    let vals: Vec<f64> = rows
        .iter()
        .filter(|r| r.repetition.is_some() && r.model == model && r.metric == metric)
        .filter(|r| hp_contains.is_empty() || r.hyperparams.split(';').any(|kv| kv == hp_contains))
        .map(|r| r.value)
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
