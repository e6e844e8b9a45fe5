mod common;

use bper::baselines::RandomScorer;
use bper::eval::ExplanationScorer;

#[test]
fn draws_are_uniform_and_respect_complements() {
    let check = common::sampler_check(100_000, 42);
    assert_eq!(check.violations, 0);
    for (name, stat, bound) in check.tests {
        assert!(stat <= bound, "{name}: chi-square {stat:.1} > {bound:.1}");
    }
}

/// RAND's expected precision@n is n/|E|·|E_ui|/n = |E_ui|/|E|.
#[test]
fn random_scorer_hits_at_chance_rate() {
    let n_expl = 50;
    let scorer = RandomScorer { seed: 3, n_explanations: n_expl };
    let truth = [2usize, 7, 19, 33, 48];
    let pairs = 20_000;
    let mut hits = 0usize;
    let mut scores = Vec::new();
    for k in 0..pairs {
        scorer.score_all(k % 200, k / 200, &mut scores);
        let ranked = bper::eval::rank_top_n(&scores, 10, |_| false);
        hits += ranked.ids().filter(|e| truth.contains(e)).count();
    }
    let rate = hits as f64 / (pairs * 10) as f64;
    let expected = truth.len() as f64 / n_expl as f64;
    // binomial-ish standard error over 20k lists of 10
    let se = (expected * (1.0 - expected) / (pairs * 10) as f64).sqrt();
    assert!((rate - expected).abs() < 4.0 * se, "rate {rate} vs {expected}");
}
