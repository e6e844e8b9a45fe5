use super::{check_store, drive, report, ExplSample, Sampler, StepModel, TrainError, TrainReport, ALPHA_ZERO_NOTE};
use crate::dataset::InteractionStore;
use crate::params::{FactorParams, Hyperparams};
use crate::scalar::{neg_log_sigmoid, sigmoid, Scalar};

fn sq_norm<F: Scalar>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |acc, &x| acc + x * x)
}

fn half<F: Scalar>() -> F {
    F::of(0.5)
}

/// Regularizer over the rows an explanation sample touches.
fn expl_reg<F: Scalar>(p: &FactorParams<F>, s: &ExplSample) -> F {
    sq_norm(p.user.row(s.user))
        + sq_norm(p.item.row(s.item))
        + sq_norm(p.expl_user.row(s.pos))
        + sq_norm(p.expl_user.row(s.neg_user))
        + sq_norm(p.expl_item.row(s.pos))
        + sq_norm(p.expl_item.row(s.neg_item))
        + p.bias_expl_user[s.pos].powi(2)
        + p.bias_expl_user[s.neg_user].powi(2)
        + p.bias_expl_item[s.pos].powi(2)
        + p.bias_expl_item[s.neg_item].powi(2)
}

/// `−ln σ(r̂_{u,ee′}) − ln σ(r̂_{i,ee″})`
fn expl_data_loss<F: Scalar>(p: &FactorParams<F>, s: &ExplSample) -> F {
    let ru = p.score_user_expl(s.user, s.pos) - p.score_user_expl(s.user, s.neg_user);
    let ri = p.score_item_expl(s.item, s.pos) - p.score_item_expl(s.item, s.neg_item);
    neg_log_sigmoid(ru) + neg_log_sigmoid(ri)
}

/// Per-sample BPER objective with regularizer `(λ/2)·‖θ_sampled‖²`.
pub fn bper_loss<F: Scalar>(p: &FactorParams<F>, s: &ExplSample, lambda: F) -> F {
    expl_data_loss(p, s) + half::<F>() * lambda * expl_reg(p, s)
}

/// Per-sample BPER-J objective:
/// `−ln σ(r̂_{u,ii′}) + α(−ln σ(r̂_{u,ee′}) − ln σ(r̂_{i,ee″})) + (λ/2)·‖θ_sampled‖²`.
pub fn bper_j_loss<F: Scalar>(p: &FactorParams<F>, s: &ExplSample, neg_item: usize, alpha: F, lambda: F) -> F {
    let rii = p.score_item(s.user, s.item) - p.score_item(s.user, neg_item);
    let reg = expl_reg(p, s) + sq_norm(p.item.row(neg_item)) + p.bias_item[s.item].powi(2) + p.bias_item[neg_item].powi(2);
    neg_log_sigmoid(rii) + alpha * expl_data_loss(p, s) + half::<F>() * lambda * reg
}

/// Explanation-side updates shared by BPER and BPER-J: lines updating
/// `o^U`, `o^I`, `b^U`, `b^I` given the loss coefficients `x`, `y` and the
/// pre-step user/item rows.
fn apply_explanation_updates<F: Scalar>(
    p: &mut FactorParams<F>,
    s: &ExplSample,
    x: F,
    y: F,
    pu: &[F],
    qi: &[F],
    gamma: F,
    lambda: F,
) {
    for (k, (&pk, &qk)) in pu.iter().zip(qi).enumerate() {
        let v = p.expl_user.get(s.pos, k);
        p.expl_user.set(s.pos, k, v - gamma * (x * pk + lambda * v));
        let v = p.expl_user.get(s.neg_user, k);
        p.expl_user.set(s.neg_user, k, v - gamma * (-x * pk + lambda * v));
        let v = p.expl_item.get(s.pos, k);
        p.expl_item.set(s.pos, k, v - gamma * (y * qk + lambda * v));
        let v = p.expl_item.get(s.neg_item, k);
        p.expl_item.set(s.neg_item, k, v - gamma * (-y * qk + lambda * v));
    }
    let b = &mut p.bias_expl_user;
    b[s.pos] = b[s.pos] - gamma * (x + lambda * b[s.pos]);
    b[s.neg_user] = b[s.neg_user] - gamma * (-x + lambda * b[s.neg_user]);
    let b = &mut p.bias_expl_item;
    b[s.pos] = b[s.pos] - gamma * (y + lambda * b[s.pos]);
    b[s.neg_item] = b[s.neg_item] - gamma * (-y + lambda * b[s.neg_item]);
}

/// One BPER update. Returns the sample's data loss at the pre-step values.
pub fn bper_step<F: Scalar>(p: &mut FactorParams<F>, s: &ExplSample, gamma: F, lambda: F) -> F {
    let ru = p.score_user_expl(s.user, s.pos) - p.score_user_expl(s.user, s.neg_user);
    let ri = p.score_item_expl(s.item, s.pos) - p.score_item_expl(s.item, s.neg_item);
    let x = -sigmoid(-ru);
    let y = -sigmoid(-ri);
    let pu = p.user.row(s.user).to_vec();
    let qi = p.item.row(s.item).to_vec();

    for k in 0..pu.len() {
        let g = x * (p.expl_user.get(s.pos, k) - p.expl_user.get(s.neg_user, k)) + lambda * pu[k];
        p.user.set(s.user, k, pu[k] - gamma * g);
        let g = y * (p.expl_item.get(s.pos, k) - p.expl_item.get(s.neg_item, k)) + lambda * qi[k];
        p.item.set(s.item, k, qi[k] - gamma * g);
    }
    apply_explanation_updates(p, s, x, y, &pu, &qi, gamma, lambda);
    neg_log_sigmoid(ru) + neg_log_sigmoid(ri)
}

/// One BPER-J update. Returns the sample's weighted data loss.
pub fn bper_j_step<F: Scalar>(p: &mut FactorParams<F>, s: &ExplSample, neg_item: usize, alpha: F, gamma: F, lambda: F) -> F {
    let ru = p.score_user_expl(s.user, s.pos) - p.score_user_expl(s.user, s.neg_user);
    let ri = p.score_item_expl(s.item, s.pos) - p.score_item_expl(s.item, s.neg_item);
    let rii = p.score_item(s.user, s.item) - p.score_item(s.user, neg_item);
    let x = -alpha * sigmoid(-ru);
    let y = -alpha * sigmoid(-ri);
    let z = -sigmoid(-rii);
    let pu = p.user.row(s.user).to_vec();
    let qi = p.item.row(s.item).to_vec();
    let qn = p.item.row(neg_item).to_vec();

    for k in 0..pu.len() {
        let g = x * (p.expl_user.get(s.pos, k) - p.expl_user.get(s.neg_user, k)) + z * (qi[k] - qn[k]) + lambda * pu[k];
        p.user.set(s.user, k, pu[k] - gamma * g);
        let g = y * (p.expl_item.get(s.pos, k) - p.expl_item.get(s.neg_item, k)) + z * pu[k] + lambda * qi[k];
        p.item.set(s.item, k, qi[k] - gamma * g);
        let g = -z * pu[k] + lambda * qn[k];
        p.item.set(neg_item, k, qn[k] - gamma * g);
    }
    apply_explanation_updates(p, s, x, y, &pu, &qi, gamma, lambda);
    let b = &mut p.bias_item;
    b[s.item] = b[s.item] - gamma * (z + lambda * b[s.item]);
    b[neg_item] = b[neg_item] - gamma * (-z + lambda * b[neg_item]);
    neg_log_sigmoid(rii) + alpha * (neg_log_sigmoid(ru) + neg_log_sigmoid(ri))
}

struct Bper<F> {
    params: FactorParams<F>,
    gamma: F,
    lambda: F,
}

impl<F: Scalar> StepModel for Bper<F> {
    fn step(&mut self, sampler: &mut Sampler<'_>) -> Option<f64> {
        let s = sampler.explanation_sample()?;
        Some(bper_step(&mut self.params, &s, self.gamma, self.lambda).as_f64())
    }

    fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}

struct BperJ<F> {
    params: FactorParams<F>,
    alpha: F,
    gamma: F,
    lambda: F,
}

impl<F: Scalar> StepModel for BperJ<F> {
    fn step(&mut self, sampler: &mut Sampler<'_>) -> Option<f64> {
        let s = sampler.explanation_sample()?;
        let neg_item = sampler.negative_item(s.user)?;
        Some(bper_j_step(&mut self.params, &s, neg_item, self.alpha, self.gamma, self.lambda).as_f64())
    }

    fn is_finite(&self) -> bool {
        self.params.is_finite()
    }
}

fn init_factors<F: Scalar>(train: &InteractionStore, hp: &Hyperparams) -> FactorParams<F> {
    FactorParams::init(
        train.n_users(),
        train.n_items(),
        train.n_explanations(),
        hp.dim,
        hp.init_scale,
        hp.seed,
    )
}

/// Bayesian Personalized Explanation Ranking.
///
/// The user-side and item-side tasks are trained with equal weight; `μ`
/// only enters at inference.
pub fn train_bper<F: Scalar>(train: &InteractionStore, hp: &Hyperparams) -> Result<TrainReport<FactorParams<F>>, TrainError> {
    hp.validate()?;
    check_store(train, false)?;
    let mut model = Bper {
        params: init_factors(train, hp),
        gamma: F::of(hp.learning_rate),
        lambda: F::of(hp.regularization),
    };
    let log = drive(&mut model, train, hp, "bper")?;
    Ok(report(log, model.params, Vec::new()))
}

/// BPER jointly trained with BPR item ranking (shared `P`, `Q`).
pub fn train_bper_j<F: Scalar>(train: &InteractionStore, hp: &Hyperparams) -> Result<TrainReport<FactorParams<F>>, TrainError> {
    hp.validate()?;
    check_store(train, true)?;
    let mut model = BperJ {
        params: init_factors(train, hp),
        alpha: F::of(hp.alpha),
        gamma: F::of(hp.learning_rate),
        lambda: F::of(hp.regularization),
    };
    let log = drive(&mut model, train, hp, "bper-j")?;
    let notes = if hp.alpha == 0.0 { vec![ALPHA_ZERO_NOTE.to_owned()] } else { Vec::new() };
    Ok(report(log, model.params, notes))
}
