//! Top-N ranking and ranking metrics.
//!
//! NDCG is normalized by `Z = Σ_{p=1..N} 1/ln(p+1)`, the DCG of a list whose
//! every position is relevant. A pair with fewer than `N` ground-truth
//! explanations therefore cannot reach an NDCG of 1.

use std::cmp::Ordering;

use rayon::prelude::*;
use thiserror::Error;

use crate::dataset::InteractionStore;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("ground-truth set is empty")]
    EmptyGroundTruth,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
    #[error("test set has no records")]
    EmptyTestSet,
}

/// Scores explanations for a (user, item) pair.
pub trait ExplanationScorer: Sync {
    fn n_explanations(&self) -> usize;

    fn score(&self, user: usize, item: usize, explanation: usize) -> f64;

    /// Scores every explanation; `out` is resized to `n_explanations()`.
    fn score_all(&self, user: usize, item: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.n_explanations()).map(|e| self.score(user, item, e)));
    }
}

/// Scores items for a user.
pub trait ItemScorer: Sync {
    fn n_items(&self) -> usize;

    fn score_item(&self, user: usize, item: usize) -> f64;
}

impl<T: ExplanationScorer + ?Sized> ExplanationScorer for &T {
    fn n_explanations(&self) -> usize {
        (**self).n_explanations()
    }

    fn score(&self, user: usize, item: usize, explanation: usize) -> f64 {
        (**self).score(user, item, explanation)
    }

    fn score_all(&self, user: usize, item: usize, out: &mut Vec<f64>) {
        (**self).score_all(user, item, out)
    }
}

/// Candidates ordered by descending score, ties by ascending id.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedList {
    pub entries: Vec<(usize, f64)>,
    pub cutoff: usize,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|&(id, _)| id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// NaN sorts last; `-0.0 == 0.0`.
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    let key = |s: f64| if s.is_nan() { f64::NEG_INFINITY } else { s };
    key(b.1)
        .partial_cmp(&key(a.1))
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

/// Top-`n` of `scores` (indexed by candidate id), skipping `excluded` ids.
pub fn rank_top_n(scores: &[f64], n: usize, excluded: impl Fn(usize) -> bool) -> RankedList {
    let mut entries: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|&(id, _)| !excluded(id))
        .map(|(id, &s)| (id, s))
        .collect();
    if n < entries.len() {
        entries.select_nth_unstable_by(n, rank_order);
        entries.truncate(n);
    }
    entries.sort_by(rank_order);
    RankedList { entries, cutoff: n }
}

/// Ranks the whole explanation universe for `(user, item)`.
pub fn top_explanations<S: ExplanationScorer + ?Sized>(scorer: &S, user: usize, item: usize, n: usize) -> RankedList {
    let mut scores = Vec::with_capacity(scorer.n_explanations());
    scorer.score_all(user, item, &mut scores);
    rank_top_n(&scores, n, |_| false)
}

/// Ranks `I \ I_u`; `excluded` must be sorted.
pub fn top_items<S: ItemScorer + ?Sized>(scorer: &S, user: usize, m: usize, excluded: &[usize]) -> RankedList {
    let scores: Vec<f64> = (0..scorer.n_items()).map(|i| scorer.score_item(user, i)).collect();
    rank_top_n(&scores, m, |i| excluded.binary_search(&i).is_ok())
}

/// Metrics of a single ranked list.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ListMetrics {
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `Z = Σ_{p=1..n} 1/ln(p+1)`
pub fn dcg_normalizer(n: usize) -> f64 {
    (1..=n).map(|p| 1.0 / ((p + 1) as f64).ln()).sum()
}

/// NDCG/precision/recall/F1 at cutoff `n`. `ground_truth` must be sorted.
pub fn metrics_for_list(ranked: &RankedList, ground_truth: &[usize], n: usize) -> Result<ListMetrics, EvalError> {
    if ground_truth.is_empty() {
        return Err(EvalError::EmptyGroundTruth);
    }
    if n == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    let mut dcg = 0.0;
    let mut hits = 0usize;
    for (pos, id) in ranked.ids().take(n).enumerate() {
        if ground_truth.binary_search(&id).is_ok() {
            // (2^1 - 1) / ln(p + 1) with 1-based p
            dcg += 1.0 / ((pos + 2) as f64).ln();
            hits += 1;
        }
    }
    let precision = hits as f64 / n as f64;
    let recall = hits as f64 / ground_truth.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ListMetrics {
        ndcg: dcg / dcg_normalizer(n),
        precision,
        recall,
        f1,
    })
}

/// Means over evaluation units (pairs or users).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub unit_count: usize,
    pub cutoff: usize,
}

impl MetricsReport {
    /// Order-stable mean: units are summed sequentially in the given order.
    pub fn from_units(units: &[ListMetrics], cutoff: usize) -> Self {
        let mut sum = ListMetrics::default();
        for m in units {
            sum.ndcg += m.ndcg;
            sum.precision += m.precision;
            sum.recall += m.recall;
            sum.f1 += m.f1;
        }
        let n = units.len();
        let mean = |v: f64| if n == 0 { 0.0 } else { v / n as f64 };
        Self {
            ndcg: mean(sum.ndcg),
            precision: mean(sum.precision),
            recall: mean(sum.recall),
            f1: mean(sum.f1),
            unit_count: n,
            cutoff,
        }
    }

    /// No evaluation unit was available.
    pub fn is_empty(&self) -> bool {
        self.unit_count == 0
    }

    pub fn metrics(&self) -> [(&'static str, f64); 4] {
        [
            ("ndcg", self.ndcg),
            ("precision", self.precision),
            ("recall", self.recall),
            ("f1", self.f1),
        ]
    }
}

/// Explanation ranking over every test `(u, i)` record, against `E_{u,i}^te`.
pub fn evaluate_explanation_ranking<S: ExplanationScorer + ?Sized>(
    scorer: &S,
    test: &InteractionStore,
    n: usize,
) -> Result<MetricsReport, EvalError> {
    if n == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let units = test
        .records()
        .par_iter()
        .map(|rec| {
            let ranked = top_explanations(scorer, rec.user, rec.item, n);
            metrics_for_list(&ranked, &rec.explanations, n)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsReport::from_units(&units, n))
}

/// Fraction of test pairs with at least one ground-truth explanation in
/// the top `n`.
pub fn explanation_hit_rate<S: ExplanationScorer + ?Sized>(scorer: &S, test: &InteractionStore, n: usize) -> f64 {
    let hits: usize = test
        .records()
        .par_iter()
        .map(|rec| {
            let ranked = top_explanations(scorer, rec.user, rec.item, n);
            let hit = ranked.ids().any(|e| rec.explanations.binary_search(&e).is_ok());
            usize::from(hit)
        })
        .sum();
    hits as f64 / test.records().len().max(1) as f64
}

/// Reports of the two-stage joint protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointReport {
    /// Item recommendation, one unit per test user.
    pub recommendation: MetricsReport,
    /// Explanation ranking over correctly recommended pairs only.
    pub explanation: MetricsReport,
}

/// Stage 1 ranks `I \ I_u^train` per test user and scores against the
/// user's test items; stage 2 ranks explanations for every recommended item
/// that is in the user's test set.
pub fn evaluate_joint<I, E>(
    items: &I,
    explanations: &E,
    train: &InteractionStore,
    test: &InteractionStore,
    m: usize,
    n: usize,
) -> Result<JointReport, EvalError>
where
    I: ItemScorer + ?Sized,
    E: ExplanationScorer + ?Sized,
{
    if m == 0 || n == 0 {
        return Err(EvalError::ZeroCutoff);
    }
    if test.is_empty() {
        return Err(EvalError::EmptyTestSet);
    }
    let users: Vec<usize> = (0..test.n_users()).filter(|&u| !test.items_of_user(u).is_empty()).collect();
    let per_user = users
        .par_iter()
        .map(|&u| {
            let truth = test.items_of_user(u);
            let ranked = top_items(items, u, m, train.items_of_user(u));
            let rec = metrics_for_list(&ranked, truth, m)?;
            let mut exp = Vec::new();
            for i in ranked.ids() {
                if truth.binary_search(&i).is_ok() {
                    let expl_ranked = top_explanations(explanations, u, i, n);
                    exp.push(metrics_for_list(&expl_ranked, test.explanations_of_pair(u, i), n)?);
                }
            }
            Ok((rec, exp))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let rec_units: Vec<ListMetrics> = per_user.iter().map(|(r, _)| *r).collect();
    let exp_units: Vec<ListMetrics> = per_user.into_iter().flat_map(|(_, e)| e).collect();
    Ok(JointReport {
        recommendation: MetricsReport::from_units(&rec_units, m),
        explanation: MetricsReport::from_units(&exp_units, n),
    })
}
