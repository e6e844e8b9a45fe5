//! BPER+ : BPER whose explanation factors are gated element-wise by a
//! linear projection of frozen semantic vectors.
//!
//! Gradients flow into `P`, `Q`, `O^U`, `O^I`, `b^U`, `b^I` and, when
//! `train_projection` is set, into the projection `W`, `c`. The raw vectors
//! never change. `W` and `c` are shared by every sample and are not
//! regularized.

use super::{check_store, drive, report, ExplSample, Sampler, StepModel, TrainError, TrainReport};
use crate::dataset::InteractionStore;
use crate::params::{EmbeddingTable, FactorParams, Hyperparams, ParamsError};
use crate::scalar::{neg_log_sigmoid, sigmoid, Scalar};

/// Trained BPER+ state: ID factors plus the projection.
#[derive(Clone, Debug, PartialEq)]
pub struct BperPlusModel<F> {
    pub params: FactorParams<F>,
    pub embeddings: EmbeddingTable<F>,
}

impl<F: Scalar> BperPlusModel<F> {
    pub fn score(&self, u: usize, i: usize, e: usize, mu: F) -> F {
        self.params.score_bper_plus(&self.embeddings, u, i, e, mu)
    }

    pub fn is_finite(&self) -> bool {
        self.params.is_finite() && self.embeddings.is_finite()
    }
}

fn gated_dot<F: Scalar>(a: &[F], o: &[F], gate: &[F]) -> F {
    a.iter()
        .zip(o)
        .zip(gate)
        .fold(F::zero(), |acc, ((&a, &o), &g)| acc + a * (o * g))
}

fn sq_norm<F: Scalar>(v: &[F]) -> F {
    v.iter().fold(F::zero(), |acc, &x| acc + x * x)
}

struct Differences<F> {
    user: F,
    item: F,
    gate_pos: Vec<F>,
    gate_neg_user: Vec<F>,
    gate_neg_item: Vec<F>,
}

fn differences<F: Scalar>(m: &BperPlusModel<F>, s: &ExplSample) -> Differences<F> {
    let p = &m.params;
    let gate_pos = m.embeddings.project(s.pos);
    let gate_neg_user = m.embeddings.project(s.neg_user);
    let gate_neg_item = m.embeddings.project(s.neg_item);
    let pu = p.user.row(s.user);
    let qi = p.item.row(s.item);
    let user = (gated_dot(pu, p.expl_user.row(s.pos), &gate_pos) + p.bias_expl_user[s.pos])
        - (gated_dot(pu, p.expl_user.row(s.neg_user), &gate_neg_user) + p.bias_expl_user[s.neg_user]);
    let item = (gated_dot(qi, p.expl_item.row(s.pos), &gate_pos) + p.bias_expl_item[s.pos])
        - (gated_dot(qi, p.expl_item.row(s.neg_item), &gate_neg_item) + p.bias_expl_item[s.neg_item]);
    Differences {
        user,
        item,
        gate_pos,
        gate_neg_user,
        gate_neg_item,
    }
}

/// Per-sample BPER+ objective; the regularizer covers the sampled ID rows only.
pub fn bper_plus_loss<F: Scalar>(m: &BperPlusModel<F>, s: &ExplSample, lambda: F) -> F {
    let d = differences(m, s);
    let p = &m.params;
    let reg = sq_norm(p.user.row(s.user))
        + sq_norm(p.item.row(s.item))
        + sq_norm(p.expl_user.row(s.pos))
        + sq_norm(p.expl_user.row(s.neg_user))
        + sq_norm(p.expl_item.row(s.pos))
        + sq_norm(p.expl_item.row(s.neg_item))
        + p.bias_expl_user[s.pos].powi(2)
        + p.bias_expl_user[s.neg_user].powi(2)
        + p.bias_expl_item[s.pos].powi(2)
        + p.bias_expl_item[s.neg_item].powi(2);
    neg_log_sigmoid(d.user) + neg_log_sigmoid(d.item) + F::of(0.5) * lambda * reg
}

/// One BPER+ update. Returns the pre-step data loss.
pub fn bper_plus_step<F: Scalar>(m: &mut BperPlusModel<F>, s: &ExplSample, gamma: F, lambda: F, train_projection: bool) -> F {
    let diff = differences(m, s);
    let x = -sigmoid(-diff.user);
    let y = -sigmoid(-diff.item);
    let (bp, bnu, bni) = (&diff.gate_pos, &diff.gate_neg_user, &diff.gate_neg_item);
    let p = &mut m.params;
    let dim = p.dim();
    let pu = p.user.row(s.user).to_vec();
    let qi = p.item.row(s.item).to_vec();
    let ou_pos = p.expl_user.row(s.pos).to_vec();
    let ou_neg = p.expl_user.row(s.neg_user).to_vec();
    let oi_pos = p.expl_item.row(s.pos).to_vec();
    let oi_neg = p.expl_item.row(s.neg_item).to_vec();

    for k in 0..dim {
        let g = x * (ou_pos[k] * bp[k] - ou_neg[k] * bnu[k]) + lambda * pu[k];
        p.user.set(s.user, k, pu[k] - gamma * g);
        let g = y * (oi_pos[k] * bp[k] - oi_neg[k] * bni[k]) + lambda * qi[k];
        p.item.set(s.item, k, qi[k] - gamma * g);
        p.expl_user.set(s.pos, k, ou_pos[k] - gamma * (x * (pu[k] * bp[k]) + lambda * ou_pos[k]));
        p.expl_user.set(s.neg_user, k, ou_neg[k] - gamma * (-x * (pu[k] * bnu[k]) + lambda * ou_neg[k]));
        p.expl_item.set(s.pos, k, oi_pos[k] - gamma * (y * (qi[k] * bp[k]) + lambda * oi_pos[k]));
        p.expl_item.set(s.neg_item, k, oi_neg[k] - gamma * (-y * (qi[k] * bni[k]) + lambda * oi_neg[k]));
    }
    let b = &mut p.bias_expl_user;
    b[s.pos] = b[s.pos] - gamma * (x + lambda * b[s.pos]);
    b[s.neg_user] = b[s.neg_user] - gamma * (-x + lambda * b[s.neg_user]);
    let b = &mut p.bias_expl_item;
    b[s.pos] = b[s.pos] - gamma * (y + lambda * b[s.pos]);
    b[s.neg_item] = b[s.neg_item] - gamma * (-y + lambda * b[s.neg_item]);

    if train_projection {
        // gradient of the loss w.r.t. each projected vector
        let grad_pos: Vec<F> = (0..dim).map(|k| x * pu[k] * ou_pos[k] + y * qi[k] * oi_pos[k]).collect();
        let grad_neg_user: Vec<F> = (0..dim).map(|k| -x * pu[k] * ou_neg[k]).collect();
        let grad_neg_item: Vec<F> = (0..dim).map(|k| -y * qi[k] * oi_neg[k]).collect();
        let emb = &mut m.embeddings;
        for (e, grad) in [(s.pos, &grad_pos), (s.neg_user, &grad_neg_user), (s.neg_item, &grad_neg_item)] {
            let raw = emb.raw().row(e).to_vec();
            for k in 0..dim {
                let step = gamma * grad[k];
                for (w, &r) in emb.weight.row_mut(k).iter_mut().zip(&raw) {
                    *w = *w - step * r;
                }
                emb.bias[k] = emb.bias[k] - step;
            }
        }
    }
    neg_log_sigmoid(diff.user) + neg_log_sigmoid(diff.item)
}

struct BperPlus<F> {
    model: BperPlusModel<F>,
    gamma: F,
    lambda: F,
    train_projection: bool,
}

impl<F: Scalar> StepModel for BperPlus<F> {
    fn step(&mut self, sampler: &mut Sampler<'_>) -> Option<f64> {
        let s = sampler.explanation_sample()?;
        Some(bper_plus_step(&mut self.model, &s, self.gamma, self.lambda, self.train_projection).as_f64())
    }

    fn is_finite(&self) -> bool {
        self.model.is_finite()
    }
}

/// Trains BPER+ starting from the given projection state.
pub fn train_bper_plus<F: Scalar>(
    train: &InteractionStore,
    hp: &Hyperparams,
    embeddings: EmbeddingTable<F>,
) -> Result<TrainReport<BperPlusModel<F>>, TrainError> {
    hp.validate()?;
    check_store(train, false)?;
    if embeddings.n_explanations() != train.n_explanations() {
        return Err(ParamsError::DimensionMismatch(format!(
            "embedding table has {} rows but the dataset has {} explanations",
            embeddings.n_explanations(),
            train.n_explanations()
        ))
        .into());
    }
    embeddings.check_dim(hp.dim)?;
    let params = FactorParams::init(train.n_users(), train.n_items(), train.n_explanations(), hp.dim, hp.init_scale, hp.seed);
    let mut state = BperPlus {
        model: BperPlusModel { params, embeddings },
        gamma: F::of(hp.learning_rate),
        lambda: F::of(hp.regularization),
        train_projection: hp.train_projection,
    };
    let log = drive(&mut state, train, hp, "bper+")?;
    let notes = if hp.train_projection { Vec::new() } else { vec!["projection frozen".to_owned()] };
    Ok(report(log, state.model, notes))
}
