//! A trained model of any supported kind, behind one scoring interface.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::baselines::{ricf_score, rucf_score, NeighborIndex, RandomScorer};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::dataset::InteractionStore;
use crate::eval::{ExplanationScorer, ItemScorer};
use crate::matrix::Matrix;
use crate::params::{CdParams, EmbeddingTable, FactorParams, Hyperparams};
use crate::scalar::Scalar;
use crate::training::{self, BperPlusModel, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Rand,
    Rucf,
    Ricf,
    Cd,
    Pitf,
    Bper,
    BperPlus,
    CdJ,
    PitfJ,
    BperJ,
}

impl ModelKind {
    pub const ALL: [ModelKind; 10] = [
        ModelKind::Rand,
        ModelKind::Rucf,
        ModelKind::Ricf,
        ModelKind::Cd,
        ModelKind::Pitf,
        ModelKind::Bper,
        ModelKind::BperPlus,
        ModelKind::CdJ,
        ModelKind::PitfJ,
        ModelKind::BperJ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rand => "rand",
            ModelKind::Rucf => "rucf",
            ModelKind::Ricf => "ricf",
            ModelKind::Cd => "cd",
            ModelKind::Pitf => "pitf",
            ModelKind::Bper => "bper",
            ModelKind::BperPlus => "bper+",
            ModelKind::CdJ => "cd-j",
            ModelKind::PitfJ => "pitf-j",
            ModelKind::BperJ => "bper-j",
        }
    }

    pub fn is_joint(self) -> bool {
        matches!(self, ModelKind::CdJ | ModelKind::PitfJ | ModelKind::BperJ)
    }

    /// The explanation-only counterpart of a joint model.
    pub fn non_joint(self) -> Option<ModelKind> {
        match self {
            ModelKind::CdJ => Some(ModelKind::Cd),
            ModelKind::PitfJ => Some(ModelKind::Pitf),
            ModelKind::BperJ => Some(ModelKind::Bper),
            _ => None,
        }
    }

    /// Whether `μ` affects this model's explanation scores.
    pub fn uses_mu(self) -> bool {
        matches!(self, ModelKind::Bper | ModelKind::BperPlus | ModelKind::BperJ)
    }

    /// Whether the model has learned parameters that SGD hyperparameters affect.
    pub fn is_factorization(self) -> bool {
        !matches!(self, ModelKind::Rand | ModelKind::Rucf | ModelKind::Ricf)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or(ModelError::UnknownModel(s))
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model '{0}' (expected one of rand, rucf, ricf, cd, pitf, bper, bper+, cd-j, pitf-j, bper-j)")]
    UnknownModel(String),
    #[error("bper+ needs an embedding table")]
    MissingEmbeddings,
    #[error("{0} needs the training store it was built from")]
    MissingStore(ModelKind),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Params(#[from] crate::params::ParamsError),
}

/// Learned state per kind. The CF baselines keep their training store.
#[derive(Clone, Debug)]
pub enum ModelState<F> {
    Rand(RandomScorer),
    Rucf { index: NeighborIndex, store: InteractionStore },
    Ricf { index: NeighborIndex, store: InteractionStore },
    Cd(CdParams<F>),
    Factors(FactorParams<F>),
    BperPlus { model: BperPlusModel<F>, projected: Matrix<F> },
}

#[derive(Clone, Debug)]
pub struct TrainedModel<F> {
    pub kind: ModelKind,
    /// Blend used by the BPER family when scoring.
    pub mu: f64,
    pub state: ModelState<F>,
    pub epoch_losses: Vec<f64>,
    pub notes: Vec<String>,
}

fn projected_table<F: Scalar>(emb: &EmbeddingTable<F>) -> Matrix<F> {
    let mut out = Matrix::zeros(emb.n_explanations(), emb.dim());
    for e in 0..emb.n_explanations() {
        emb.project_into(e, out.row_mut(e));
    }
    out
}

/// Trains (or builds) a model of `kind` on `train`.
///
/// `neighbors` is the CF neighborhood size; `embeddings` is required for
/// BPER+ only.
pub fn train_model<F: Scalar>(
    kind: ModelKind,
    train: &InteractionStore,
    hp: &Hyperparams,
    neighbors: usize,
    embeddings: Option<&EmbeddingTable<F>>,
) -> Result<TrainedModel<F>, ModelError> {
    let mut losses = Vec::new();
    let mut notes = Vec::new();
    let mut keep = |report_losses: Vec<f64>, report_notes: Vec<String>| {
        losses = report_losses;
        notes = report_notes;
    };
    let state = match kind {
        ModelKind::Rand => ModelState::Rand(RandomScorer::new(hp.seed, train.n_explanations())),
        ModelKind::Rucf => ModelState::Rucf {
            index: NeighborIndex::users(train, neighbors),
            store: train.clone(),
        },
        ModelKind::Ricf => ModelState::Ricf {
            index: NeighborIndex::items(train, neighbors),
            store: train.clone(),
        },
        ModelKind::Cd | ModelKind::CdJ => {
            let r = if kind == ModelKind::Cd {
                training::train_cd::<F>(train, hp)?
            } else {
                training::train_cd_j::<F>(train, hp)?
            };
            keep(r.epoch_losses, r.notes);
            ModelState::Cd(r.params)
        }
        ModelKind::Pitf | ModelKind::PitfJ | ModelKind::Bper | ModelKind::BperJ => {
            let r = match kind {
                ModelKind::Pitf => training::train_pitf::<F>(train, hp)?,
                ModelKind::PitfJ => training::train_pitf_j::<F>(train, hp)?,
                ModelKind::Bper => training::train_bper::<F>(train, hp)?,
                _ => training::train_bper_j::<F>(train, hp)?,
            };
            keep(r.epoch_losses, r.notes);
            ModelState::Factors(r.params)
        }
        ModelKind::BperPlus => {
            let emb = embeddings.ok_or(ModelError::MissingEmbeddings)?;
            let r = training::train_bper_plus(train, hp, emb.clone())?;
            keep(r.epoch_losses, r.notes);
            let projected = projected_table(&r.params.embeddings);
            ModelState::BperPlus {
                model: r.params,
                projected,
            }
        }
    };
    Ok(TrainedModel {
        kind,
        mu: hp.mu,
        state,
        epoch_losses: losses,
        notes,
    })
}

impl<F: Scalar> TrainedModel<F> {
    /// Explanation score at an explicit blend.
    pub fn score_with_mu(&self, user: usize, item: usize, explanation: usize, mu: f64) -> f64 {
        match &self.state {
            ModelState::Rand(r) => r.score(user, item, explanation),
            ModelState::Rucf { index, store } => rucf_score(index, store, user, item, explanation),
            ModelState::Ricf { index, store } => ricf_score(index, store, user, item, explanation),
            ModelState::Cd(p) => p.score(user, item, explanation).as_f64(),
            ModelState::Factors(p) => match self.kind {
                ModelKind::Pitf | ModelKind::PitfJ => p.score_pitf(user, item, explanation).as_f64(),
                _ => p.score_bper(user, item, explanation, F::of(mu)).as_f64(),
            },
            ModelState::BperPlus { model, projected } => model
                .params
                .score_bper_with_projection(projected.row(explanation), user, item, explanation, F::of(mu))
                .as_f64(),
        }
    }

    /// View of this model scoring at blend `mu`.
    pub fn at_mu(&self, mu: f64) -> AtMu<'_, F> {
        AtMu { model: self, mu }
    }

    pub fn n_explanations_of(&self) -> usize {
        match &self.state {
            ModelState::Rand(r) => r.n_explanations,
            ModelState::Rucf { store, .. } | ModelState::Ricf { store, .. } => store.n_explanations(),
            ModelState::Cd(p) => p.n_explanations(),
            ModelState::Factors(p) => p.n_explanations(),
            ModelState::BperPlus { model, .. } => model.params.n_explanations(),
        }
    }

    fn n_items_of(&self) -> usize {
        match &self.state {
            ModelState::Rand(_) => 0,
            ModelState::Rucf { store, .. } | ModelState::Ricf { store, .. } => store.n_items(),
            ModelState::Cd(p) => p.item.rows(),
            ModelState::Factors(p) => p.n_items(),
            ModelState::BperPlus { model, .. } => model.params.n_items(),
        }
    }

    /// Serializes the learned state. CF baselines store only `K`; they are
    /// rebuilt from the training data on load.
    pub fn to_checkpoint(&self) -> Checkpoint<F> {
        let mut c = Checkpoint::default();
        c.push_meta("model", self.kind.name());
        c.push_meta("mu", self.mu);
        match &self.state {
            ModelState::Rand(r) => {
                c.push_meta("seed", r.seed);
                c.push_meta("explanations", r.n_explanations);
            }
            ModelState::Rucf { index, .. } | ModelState::Ricf { index, .. } => c.push_meta("neighbors", index.k),
            ModelState::Cd(p) => {
                c.push_matrix("P", &p.user);
                c.push_matrix("Q", &p.item);
                c.push_matrix("O", &p.expl);
            }
            ModelState::Factors(p) => push_factors(&mut c, p),
            ModelState::BperPlus { model, .. } => {
                push_factors(&mut c, &model.params);
                c.push_matrix("raw", model.embeddings.raw());
                c.push_matrix("W", &model.embeddings.weight);
                c.push_vector("c", &model.embeddings.bias);
            }
        }
        c
    }

    /// Restores a model. `train` is needed for the CF baselines.
    pub fn from_checkpoint(c: &Checkpoint<F>, train: Option<&InteractionStore>) -> Result<Self, ModelError> {
        let kind: ModelKind = c.meta("model")?.parse()?;
        let mu = parse_meta::<f64, F>(c, "mu")?;
        let state = match kind {
            ModelKind::Rand => ModelState::Rand(RandomScorer::new(
                parse_meta::<u64, F>(c, "seed")?,
                parse_meta::<usize, F>(c, "explanations")?,
            )),
            ModelKind::Rucf | ModelKind::Ricf => {
                let store = train.ok_or(ModelError::MissingStore(kind))?.clone();
                let k = parse_meta::<usize, F>(c, "neighbors")?;
                if kind == ModelKind::Rucf {
                    ModelState::Rucf {
                        index: NeighborIndex::users(&store, k),
                        store,
                    }
                } else {
                    ModelState::Ricf {
                        index: NeighborIndex::items(&store, k),
                        store,
                    }
                }
            }
            ModelKind::Cd | ModelKind::CdJ => {
                let p = c.matrix("P")?.clone();
                let d = p.cols();
                let q = c.matrix("Q")?;
                let o = c.matrix("O")?;
                ModelState::Cd(CdParams {
                    item: c.matrix_shaped("Q", q.rows(), d)?,
                    expl: c.matrix_shaped("O", o.rows(), d)?,
                    user: p,
                })
            }
            ModelKind::Pitf | ModelKind::PitfJ | ModelKind::Bper | ModelKind::BperJ => ModelState::Factors(read_factors(c)?),
            ModelKind::BperPlus => {
                let params = read_factors(c)?;
                let raw = c.matrix("raw")?.clone();
                let weight = c.matrix_shaped("W", params.dim(), raw.cols())?;
                let bias = c.matrix_shaped("c", 1, params.dim())?.as_slice().to_vec();
                let embeddings = EmbeddingTable::with_projection(raw, weight, bias)?;
                let projected = projected_table(&embeddings);
                ModelState::BperPlus {
                    model: BperPlusModel { params, embeddings },
                    projected,
                }
            }
        };
        Ok(Self {
            kind,
            mu,
            state,
            epoch_losses: Vec::new(),
            notes: Vec::new(),
        })
    }
}

fn parse_meta<T: FromStr, F: Scalar>(c: &Checkpoint<F>, key: &str) -> Result<T, CheckpointError> {
    let raw = c.meta(key)?;
    raw.parse()
        .map_err(|_| CheckpointError::Parse {
            line: 0,
            reason: format!("meta {key}: cannot parse '{raw}'"),
        })
}

fn push_factors<F: Scalar>(c: &mut Checkpoint<F>, p: &FactorParams<F>) {
    c.push_matrix("P", &p.user);
    c.push_matrix("Q", &p.item);
    c.push_matrix("OU", &p.expl_user);
    c.push_matrix("OI", &p.expl_item);
    c.push_vector("bU", &p.bias_expl_user);
    c.push_vector("bI", &p.bias_expl_item);
    c.push_vector("b", &p.bias_item);
}

fn read_factors<F: Scalar>(c: &Checkpoint<F>) -> Result<FactorParams<F>, CheckpointError> {
    let user = c.matrix("P")?.clone();
    let d = user.cols();
    let n_items = c.matrix("Q")?.rows();
    let n_expl = c.matrix("OU")?.rows();
    Ok(FactorParams {
        item: c.matrix_shaped("Q", n_items, d)?,
        expl_user: c.matrix_shaped("OU", n_expl, d)?,
        expl_item: c.matrix_shaped("OI", n_expl, d)?,
        bias_expl_user: c.matrix_shaped("bU", 1, n_expl)?.as_slice().to_vec(),
        bias_expl_item: c.matrix_shaped("bI", 1, n_expl)?.as_slice().to_vec(),
        bias_item: c.matrix_shaped("b", 1, n_items)?.as_slice().to_vec(),
        user,
    })
}

impl<F: Scalar> ExplanationScorer for TrainedModel<F> {
    fn n_explanations(&self) -> usize {
        self.n_explanations_of()
    }

    fn score(&self, user: usize, item: usize, explanation: usize) -> f64 {
        self.score_with_mu(user, item, explanation, self.mu)
    }
}

/// Item scores: `p·q + b` for BPER-J, `p·q` for CD-J and PITF-J. Non-joint
/// factor models fall back to `p·q` over their (untrained for this task)
/// factors; the baselines score every item 0.
impl<F: Scalar> ItemScorer for TrainedModel<F> {
    fn n_items(&self) -> usize {
        self.n_items_of()
    }

    fn score_item(&self, user: usize, item: usize) -> f64 {
        match &self.state {
            ModelState::Cd(p) => p.score_item(user, item).as_f64(),
            ModelState::Factors(p) if self.kind == ModelKind::BperJ => p.score_item(user, item).as_f64(),
            ModelState::Factors(p) => p.score_item_unbiased(user, item).as_f64(),
            ModelState::BperPlus { model, .. } => model.params.score_item_unbiased(user, item).as_f64(),
            _ => 0.0,
        }
    }
}

/// A model scoring explanations at a fixed blend.
#[derive(Clone, Copy)]
pub struct AtMu<'a, F> {
    pub model: &'a TrainedModel<F>,
    pub mu: f64,
}

impl<F: Scalar> ExplanationScorer for AtMu<'_, F> {
    fn n_explanations(&self) -> usize {
        self.model.n_explanations_of()
    }

    fn score(&self, user: usize, item: usize, explanation: usize) -> f64 {
        self.model.score_with_mu(user, item, explanation, self.mu)
    }
}
