//! Sampled-SGD trainers.
//!
//! Every trainer runs `T` epochs of `|T|` steps. A step draws a positive
//! triple uniformly from the training set plus the negatives its objective
//! needs, then applies one SGD update to the sampled rows. All gradients in a
//! step are taken at the pre-step parameter values.
//!
//! The per-step update functions (`*_step`) and the matching per-sample
//! objectives (`*_loss`) are public so the updates can be checked against
//! finite differences.

mod bper;
mod bper_plus;
mod tensor;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::InteractionStore;
use crate::params::{Hyperparams, ParamsError};

pub use bper::{bper_j_loss, bper_j_step, bper_loss, bper_step, train_bper, train_bper_j};
pub use bper_plus::{bper_plus_loss, bper_plus_step, train_bper_plus, BperPlusModel};
pub use tensor::{
    cd_j_loss, cd_j_step, cd_loss, cd_step, pitf_j_loss, pitf_j_step, pitf_loss, pitf_step, train_cd, train_cd_j,
    train_pitf, train_pitf_j,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("need at least 2 {0} to draw negatives")]
    TooFewEntities(&'static str),
    #[error("parameters became non-finite during epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error(transparent)]
    Params(#[from] ParamsError),
}

/// Explanation-ranking sample for BPER and BPER+.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExplSample {
    pub user: usize,
    pub item: usize,
    pub pos: usize,
    /// `e′ ∉ E_u`
    pub neg_user: usize,
    /// `e″ ∉ E_i`
    pub neg_item: usize,
}

/// CD/PITF sample: one positive and one negative for the same pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TripleSample {
    pub user: usize,
    pub item: usize,
    pub pos: usize,
    /// `e′ ∉ E_{u,i}`
    pub neg: usize,
}

/// Summary of one training run.
#[derive(Clone, Debug)]
pub struct TrainReport<P> {
    /// Mean sampled per-step loss of each epoch (regularizer excluded).
    pub epoch_losses: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
    /// Steps skipped because a negative domain was empty.
    pub skipped: usize,
    pub notes: Vec<String>,
    pub params: P,
}

/// Uniform draws over the training triples and over complement sets.
pub struct Sampler<'a> {
    store: &'a InteractionStore,
    rng: ChaCha8Rng,
}

impl<'a> Sampler<'a> {
    /// The sampler's stream is separate from the one used for initialization.
    pub fn new(store: &'a InteractionStore, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self { store, rng }
    }

    pub fn store(&self) -> &'a InteractionStore {
        self.store
    }

    /// Uniform over `T`.
    pub fn triple(&mut self) -> (usize, usize, usize) {
        let triples = self.store.triples();
        triples[self.rng.random_range(0..triples.len())]
    }

    /// Uniform over `[0, n) \ excluded` by rejection; `excluded` is sorted.
    /// `None` when the complement is empty.
    pub fn outside(&mut self, n: usize, excluded: &[usize]) -> Option<usize> {
        if excluded.len() >= n {
            return None;
        }
        loop {
            let candidate = self.rng.random_range(0..n);
            if excluded.binary_search(&candidate).is_err() {
                return Some(candidate);
            }
        }
    }

    pub fn explanation_sample(&mut self) -> Option<ExplSample> {
        let (user, item, pos) = self.triple();
        let n = self.store.n_explanations();
        let neg_user = self.outside(n, self.store.explanations_of_user(user))?;
        let neg_item = self.outside(n, self.store.explanations_of_item(item))?;
        Some(ExplSample {
            user,
            item,
            pos,
            neg_user,
            neg_item,
        })
    }

    pub fn triple_sample(&mut self) -> Option<TripleSample> {
        let (user, item, pos) = self.triple();
        let n = self.store.n_explanations();
        let neg = self.outside(n, self.store.explanations_of_pair(user, item))?;
        Some(TripleSample { user, item, pos, neg })
    }

    /// `i′ ∉ I_u`
    pub fn negative_item(&mut self, user: usize) -> Option<usize> {
        self.outside(self.store.n_items(), self.store.items_of_user(user))
    }
}

/// A model that can take one sampled SGD step.
trait StepModel {
    /// Returns the sample's data loss, or `None` when the draw was skipped.
    fn step(&mut self, sampler: &mut Sampler<'_>) -> Option<f64>;
    fn is_finite(&self) -> bool;
}

struct EpochLog {
    losses: Vec<f64>,
    seconds: Vec<f64>,
    skipped: usize,
}

fn check_store(train: &InteractionStore, need_items: bool) -> Result<(), TrainError> {
    if train.triple_count() == 0 {
        return Err(TrainError::EmptyTrainingSet);
    }
    if train.n_explanations() < 2 {
        return Err(TrainError::TooFewEntities("explanations"));
    }
    if need_items && train.n_items() < 2 {
        return Err(TrainError::TooFewEntities("items"));
    }
    Ok(())
}

fn drive<M: StepModel>(
    model: &mut M,
    train: &InteractionStore,
    hp: &Hyperparams,
    label: &str,
) -> Result<EpochLog, TrainError> {
    let mut sampler = Sampler::new(train, hp.seed);
    let steps = train.triple_count();
    let mut log = EpochLog {
        losses: Vec::with_capacity(hp.epochs),
        seconds: Vec::with_capacity(hp.epochs),
        skipped: 0,
    };
    for epoch in 0..hp.epochs {
        let started = Instant::now();
        let mut total = 0.0;
        let mut taken = 0usize;
        for _ in 0..steps {
            match model.step(&mut sampler) {
                Some(loss) => {
                    total += loss;
                    taken += 1;
                }
                None => log.skipped += 1,
            }
        }
        if !model.is_finite() {
            return Err(TrainError::NonFinite { epoch: epoch + 1 });
        }
        let mean = if taken > 0 { total / taken as f64 } else { f64::NAN };
        let secs = started.elapsed().as_secs_f64();
        log::info!("{label} epoch {}/{}: loss {mean:.6} ({secs:.3}s)", epoch + 1, hp.epochs);
        log.losses.push(mean);
        log.seconds.push(secs);
    }
    if log.skipped > 0 {
        log::warn!(
            "{label}: skipped {} draws whose negative domain was empty",
            log.skipped
        );
    }
    Ok(log)
}

fn report<P>(log: EpochLog, params: P, notes: Vec<String>) -> TrainReport<P> {
    TrainReport {
        epoch_losses: log.losses,
        epoch_seconds: log.seconds,
        skipped: log.skipped,
        notes,
        params,
    }
}

/// Note attached to joint runs with `α = 0`.
pub(crate) const ALPHA_ZERO_NOTE: &str =
    "alpha = 0: explanation parameters receive only the lambda decay; the item task is plain BPR";
