//! CD and PITF under the single-score pairwise objective, and their joint
//! variants with an unbiased `p_u·q_i` item-ranking term.

use super::{check_store, drive, report, Sampler, StepModel, TrainError, TrainReport, TripleSample, ALPHA_ZERO_NOTE};
use crate::dataset::InteractionStore;
use crate::params::{CdParams, FactorParams, Hyperparams};
use crate::scalar::{neg_log_sigmoid, sigmoid, Scalar};

fn sq_norm<F: Scalar>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |acc, &x| acc + x * x)
}

fn half<F: Scalar>() -> F {
    F::of(0.5)
}

fn cd_reg<F: Scalar>(p: &CdParams<F>, s: &TripleSample) -> F {
    sq_norm(p.user.row(s.user)) + sq_norm(p.item.row(s.item)) + sq_norm(p.expl.row(s.pos)) + sq_norm(p.expl.row(s.neg))
}

fn pitf_reg<F: Scalar>(p: &FactorParams<F>, s: &TripleSample) -> F {
    sq_norm(p.user.row(s.user))
        + sq_norm(p.item.row(s.item))
        + sq_norm(p.expl_user.row(s.pos))
        + sq_norm(p.expl_user.row(s.neg))
        + sq_norm(p.expl_item.row(s.pos))
        + sq_norm(p.expl_item.row(s.neg))
}

/// Per-sample CD objective `−ln σ(r̂_{u,i,e} − r̂_{u,i,e′}) + (λ/2)‖θ_sampled‖²`.
pub fn cd_loss<F: Scalar>(p: &CdParams<F>, s: &TripleSample, lambda: F) -> F {
    let r = p.score(s.user, s.item, s.pos) - p.score(s.user, s.item, s.neg);
    neg_log_sigmoid(r) + half::<F>() * lambda * cd_reg(p, s)
}

/// Per-sample CD-J objective with item negative `neg_item`.
pub fn cd_j_loss<F: Scalar>(p: &CdParams<F>, s: &TripleSample, neg_item: usize, alpha: F, lambda: F) -> F {
    let r = p.score(s.user, s.item, s.pos) - p.score(s.user, s.item, s.neg);
    let rii = p.score_item(s.user, s.item) - p.score_item(s.user, neg_item);
    let reg = cd_reg(p, s) + sq_norm(p.item.row(neg_item));
    neg_log_sigmoid(rii) + alpha * neg_log_sigmoid(r) + half::<F>() * lambda * reg
}

/// Per-sample PITF objective.
pub fn pitf_loss<F: Scalar>(p: &FactorParams<F>, s: &TripleSample, lambda: F) -> F {
    let r = p.score_pitf(s.user, s.item, s.pos) - p.score_pitf(s.user, s.item, s.neg);
    neg_log_sigmoid(r) + half::<F>() * lambda * pitf_reg(p, s)
}

/// Per-sample PITF-J objective.
pub fn pitf_j_loss<F: Scalar>(p: &FactorParams<F>, s: &TripleSample, neg_item: usize, alpha: F, lambda: F) -> F {
    let r = p.score_pitf(s.user, s.item, s.pos) - p.score_pitf(s.user, s.item, s.neg);
    let rii = p.score_item_unbiased(s.user, s.item) - p.score_item_unbiased(s.user, neg_item);
    let reg = pitf_reg(p, s) + sq_norm(p.item.row(neg_item));
    neg_log_sigmoid(rii) + alpha * neg_log_sigmoid(r) + half::<F>() * lambda * reg
}

/// Shared CD update; `z`/`neg_item` carry the optional item-ranking term.
fn cd_update<F: Scalar>(p: &mut CdParams<F>, s: &TripleSample, x: F, item_term: Option<(F, usize)>, gamma: F, lambda: F) {
    let pu = p.user.row(s.user).to_vec();
    let qi = p.item.row(s.item).to_vec();
    let qn = item_term.map(|(_, n)| p.item.row(n).to_vec());
    for k in 0..pu.len() {
        let (oe, on) = (p.expl.get(s.pos, k), p.expl.get(s.neg, k));
        let mut gp = x * qi[k] * (oe - on) + lambda * pu[k];
        let mut gq = x * pu[k] * (oe - on) + lambda * qi[k];
        if let (Some((z, n)), Some(qn)) = (item_term, qn.as_ref()) {
            gp = gp + z * (qi[k] - qn[k]);
            gq = gq + z * pu[k];
            p.item.set(n, k, qn[k] - gamma * (-z * pu[k] + lambda * qn[k]));
        }
        p.user.set(s.user, k, pu[k] - gamma * gp);
        p.item.set(s.item, k, qi[k] - gamma * gq);
        let pq = pu[k] * qi[k];
        p.expl.set(s.pos, k, oe - gamma * (x * pq + lambda * oe));
        p.expl.set(s.neg, k, on - gamma * (-x * pq + lambda * on));
    }
}

fn pitf_update<F: Scalar>(p: &mut FactorParams<F>, s: &TripleSample, x: F, item_term: Option<(F, usize)>, gamma: F, lambda: F) {
    let pu = p.user.row(s.user).to_vec();
    let qi = p.item.row(s.item).to_vec();
    let qn = item_term.map(|(_, n)| p.item.row(n).to_vec());
    for k in 0..pu.len() {
        let (ue, un) = (p.expl_user.get(s.pos, k), p.expl_user.get(s.neg, k));
        let (ie, in_) = (p.expl_item.get(s.pos, k), p.expl_item.get(s.neg, k));
        let mut gp = x * (ue - un) + lambda * pu[k];
        let mut gq = x * (ie - in_) + lambda * qi[k];
        if let (Some((z, n)), Some(qn)) = (item_term, qn.as_ref()) {
            gp = gp + z * (qi[k] - qn[k]);
            gq = gq + z * pu[k];
            p.item.set(n, k, qn[k] - gamma * (-z * pu[k] + lambda * qn[k]));
        }
        p.user.set(s.user, k, pu[k] - gamma * gp);
        p.item.set(s.item, k, qi[k] - gamma * gq);
        p.expl_user.set(s.pos, k, ue - gamma * (x * pu[k] + lambda * ue));
        p.expl_user.set(s.neg, k, un - gamma * (-x * pu[k] + lambda * un));
        p.expl_item.set(s.pos, k, ie - gamma * (x * qi[k] + lambda * ie));
        p.expl_item.set(s.neg, k, in_ - gamma * (-x * qi[k] + lambda * in_));
    }
}

/// One CD update; returns the pre-step data loss.
pub fn cd_step<F: Scalar>(p: &mut CdParams<F>, s: &TripleSample, gamma: F, lambda: F) -> F {
    let r = p.score(s.user, s.item, s.pos) - p.score(s.user, s.item, s.neg);
    cd_update(p, s, -sigmoid(-r), None, gamma, lambda);
    neg_log_sigmoid(r)
}

/// One CD-J update.
pub fn cd_j_step<F: Scalar>(p: &mut CdParams<F>, s: &TripleSample, neg_item: usize, alpha: F, gamma: F, lambda: F) -> F {
    let r = p.score(s.user, s.item, s.pos) - p.score(s.user, s.item, s.neg);
    let rii = p.score_item(s.user, s.item) - p.score_item(s.user, neg_item);
    let z = -sigmoid(-rii);
    cd_update(p, s, -alpha * sigmoid(-r), Some((z, neg_item)), gamma, lambda);
    neg_log_sigmoid(rii) + alpha * neg_log_sigmoid(r)
}

/// One PITF update.
pub fn pitf_step<F: Scalar>(p: &mut FactorParams<F>, s: &TripleSample, gamma: F, lambda: F) -> F {
    let r = p.score_pitf(s.user, s.item, s.pos) - p.score_pitf(s.user, s.item, s.neg);
    pitf_update(p, s, -sigmoid(-r), None, gamma, lambda);
    neg_log_sigmoid(r)
}

/// One PITF-J update.
pub fn pitf_j_step<F: Scalar>(p: &mut FactorParams<F>, s: &TripleSample, neg_item: usize, alpha: F, gamma: F, lambda: F) -> F {
    let r = p.score_pitf(s.user, s.item, s.pos) - p.score_pitf(s.user, s.item, s.neg);
    let rii = p.score_item_unbiased(s.user, s.item) - p.score_item_unbiased(s.user, neg_item);
    let z = -sigmoid(-rii);
    pitf_update(p, s, -alpha * sigmoid(-r), Some((z, neg_item)), gamma, lambda);
    neg_log_sigmoid(rii) + alpha * neg_log_sigmoid(r)
}

#[derive(Clone, Copy)]
struct Rates<F> {
    gamma: F,
    lambda: F,
    /// `Some(α)` for the joint variants.
    joint: Option<F>,
}

impl<F: Scalar> Rates<F> {
    fn new(hp: &Hyperparams, joint: bool) -> Self {
        Self {
            gamma: F::of(hp.learning_rate),
            lambda: F::of(hp.regularization),
            joint: joint.then(|| F::of(hp.alpha)),
        }
    }
}

struct Cd<F> {
    params: CdParams<F>,
    rates: Rates<F>,
}

impl<F: Scalar> StepModel for Cd<F> {
    fn step(&mut self, sampler: &mut Sampler<'_>) -> Option<f64> {
        let s = sampler.triple_sample()?;
        let Rates { gamma, lambda, joint } = self.rates;
        let loss = match joint {
            Some(alpha) => {
                let n = sampler.negative_item(s.user)?;
                cd_j_step(&mut self.params, &s, n, alpha, gamma, lambda)
            }
            None => cd_step(&mut self.params, &s, gamma, lambda),
        };
        Some(loss.as_f64())
    }

    fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}

struct Pitf<F> {
    params: FactorParams<F>,
    rates: Rates<F>,
}

impl<F: Scalar> StepModel for Pitf<F> {
    fn step(&mut self, sampler: &mut Sampler<'_>) -> Option<f64> {
        let s = sampler.triple_sample()?;
        let Rates { gamma, lambda, joint } = self.rates;
        let loss = match joint {
            Some(alpha) => {
                let n = sampler.negative_item(s.user)?;
                pitf_j_step(&mut self.params, &s, n, alpha, gamma, lambda)
            }
            None => pitf_step(&mut self.params, &s, gamma, lambda),
        };
        Some(loss.as_f64())
    }

    fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}

fn run_cd<F: Scalar>(train: &InteractionStore, hp: &Hyperparams, joint: bool) -> Result<TrainReport<CdParams<F>>, TrainError> {
    hp.validate()?;
    check_store(train, joint)?;
    let mut model = Cd {
        params: CdParams::init(train.n_users(), train.n_items(), train.n_explanations(), hp.dim, hp.init_scale, hp.seed),
        rates: Rates::new(hp, joint),
    };
    let log = drive(&mut model, train, hp, if joint { "cd-j" } else { "cd" })?;
    let notes = if joint && hp.alpha == 0.0 { vec![ALPHA_ZERO_NOTE.to_owned()] } else { Vec::new() };
    Ok(report(log, model.params, notes))
}

fn run_pitf<F: Scalar>(train: &InteractionStore, hp: &Hyperparams, joint: bool) -> Result<TrainReport<FactorParams<F>>, TrainError> {
    hp.validate()?;
    check_store(train, joint)?;
    let mut model = Pitf {
        params: FactorParams::init(train.n_users(), train.n_items(), train.n_explanations(), hp.dim, hp.init_scale, hp.seed),
        rates: Rates::new(hp, joint),
    };
    let log = drive(&mut model, train, hp, if joint { "pitf-j" } else { "pitf" })?;
    let notes = if joint && hp.alpha == 0.0 { vec![ALPHA_ZERO_NOTE.to_owned()] } else { Vec::new() };
    Ok(report(log, model.params, notes))
}

/// Canonical Decomposition; negatives are drawn from `E \ E_{u,i}`.
pub fn train_cd<F: Scalar>(train: &InteractionStore, hp: &Hyperparams) -> Result<TrainReport<CdParams<F>>, TrainError> {
    run_cd(train, hp, false)
}

/// CD plus an `α`-weighted joint item-ranking objective.
pub fn train_cd_j<F: Scalar>(train: &InteractionStore, hp: &Hyperparams) -> Result<TrainReport<CdParams<F>>, TrainError> {
    run_cd(train, hp, true)
}

/// Pairwise Interaction Tensor Factorization. Biases stay at zero.
pub fn train_pitf<F: Scalar>(train: &InteractionStore, hp: &Hyperparams) -> Result<TrainReport<FactorParams<F>>, TrainError> {
    run_pitf(train, hp, false)
}

pub fn train_pitf_j<F: Scalar>(train: &InteractionStore, hp: &Hyperparams) -> Result<TrainReport<FactorParams<F>>, TrainError> {
    run_pitf(train, hp, true)
}
