//! Model parameters and every scoring function.
//!
//! `FactorParams` holds the BPER family (`P`, `Q`, `O^U`, `O^I`, `b^U`,
//! `b^I`, item bias `b`). PITF and PITF-J reuse it with the biases left at
//! zero. `CdParams` holds the single triple-product model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum ParamsError {
    #[error("{class} index {index} out of range (count {count})")]
    IndexOutOfRange {
        class: &'static str,
        index: usize,
        count: usize,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
}

/// Training and inference hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperparams {
    /// Latent dimension `d`.
    pub dim: usize,
    /// SGD step size `γ`.
    pub learning_rate: f64,
    /// Regularization coefficient `λ`.
    pub regularization: f64,
    /// Number of epochs `T`; one epoch is `|T|` sampled steps.
    pub epochs: usize,
    /// Inference-time blend between user-side and item-side scores.
    pub mu: f64,
    /// Weight of the explanation task in the joint objectives.
    pub alpha: f64,
    pub seed: u64,
    /// Standard deviation of the Gaussian factor initialization.
    pub init_scale: f64,
    /// BPER+ only: whether the projection `W`, `c` is trained.
    pub train_projection: bool,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            dim: 20,
            learning_rate: 0.01,
            regularization: 0.01,
            epochs: 500,
            mu: 0.7,
            alpha: 0.5,
            seed: 0,
            init_scale: 0.1,
            train_projection: true,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let bad = |msg: String| Err(ParamsError::InvalidHyperparams(msg));
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be > 0", self.learning_rate));
        }
        if !(self.regularization >= 0.0) || !self.regularization.is_finite() {
            return bad(format!("regularization {} must be >= 0", self.regularization));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu {} not in [0, 1]", self.mu));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha {} must be >= 0", self.alpha));
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return bad(format!("init scale {} must be >= 0", self.init_scale));
        }
        Ok(())
    }
}

fn check(class: &'static str, index: usize, count: usize) -> Result<(), ParamsError> {
    if index < count {
        Ok(())
    } else {
        Err(ParamsError::IndexOutOfRange { class, index, count })
    }
}

/// Parameters of BPER, BPER-J, BPER+ (ID part), PITF and PITF-J.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorParams<F> {
    /// `P`, one row `p_u` per user.
    pub user: Matrix<F>,
    /// `Q`, one row `q_i` per item.
    pub item: Matrix<F>,
    /// `O^U`, explanation factors paired with users.
    pub expl_user: Matrix<F>,
    /// `O^I`, explanation factors paired with items.
    pub expl_item: Matrix<F>,
    /// `b^U`
    pub bias_expl_user: Vec<F>,
    /// `b^I`
    pub bias_expl_item: Vec<F>,
    /// `b`, the item bias of the recommendation score.
    pub bias_item: Vec<F>,
}

impl<F: Scalar> FactorParams<F> {
    pub fn zeros(n_users: usize, n_items: usize, n_explanations: usize, dim: usize) -> Self {
        Self {
            user: Matrix::zeros(n_users, dim),
            item: Matrix::zeros(n_items, dim),
            expl_user: Matrix::zeros(n_explanations, dim),
            expl_item: Matrix::zeros(n_explanations, dim),
            bias_expl_user: vec![F::zero(); n_explanations],
            bias_expl_item: vec![F::zero(); n_explanations],
            bias_item: vec![F::zero(); n_items],
        }
    }

    /// Gaussian(0, init_scale²) factors, zero biases; seeded by `seed`.
    pub fn init(
        n_users: usize,
        n_items: usize,
        n_explanations: usize,
        dim: usize,
        init_scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            user: Matrix::gaussian(n_users, dim, init_scale, &mut rng),
            item: Matrix::gaussian(n_items, dim, init_scale, &mut rng),
            expl_user: Matrix::gaussian(n_explanations, dim, init_scale, &mut rng),
            expl_item: Matrix::gaussian(n_explanations, dim, init_scale, &mut rng),
            bias_expl_user: vec![F::zero(); n_explanations],
            bias_expl_item: vec![F::zero(); n_explanations],
            bias_item: vec![F::zero(); n_items],
        }
    }

    pub fn dim(&self) -> usize {
        self.user.cols()
    }

    pub fn n_users(&self) -> usize {
        self.user.rows()
    }

    pub fn n_items(&self) -> usize {
        self.item.rows()
    }

    pub fn n_explanations(&self) -> usize {
        self.expl_user.rows()
    }

    pub fn check_triple(&self, u: usize, i: usize, e: usize) -> Result<(), ParamsError> {
        check("user", u, self.n_users())?;
        check("item", i, self.n_items())?;
        check("explanation", e, self.n_explanations())
    }

    pub fn is_finite(&self) -> bool {
        self.user.is_finite()
            && self.item.is_finite()
            && self.expl_user.is_finite()
            && self.expl_item.is_finite()
            && self.bias_expl_user.iter().all(|v| v.is_finite())
            && self.bias_expl_item.iter().all(|v| v.is_finite())
            && self.bias_item.iter().all(|v| v.is_finite())
    }

    /// `r̂_{u,e} = p_u·o_e^U + b_e^U`
    #[inline]
    pub fn score_user_expl(&self, u: usize, e: usize) -> F {
        dot(self.user.row(u), self.expl_user.row(e)) + self.bias_expl_user[e]
    }

    /// `r̂_{i,e} = q_i·o_e^I + b_e^I`
    #[inline]
    pub fn score_item_expl(&self, i: usize, e: usize) -> F {
        dot(self.item.row(i), self.expl_item.row(e)) + self.bias_expl_item[e]
    }

    /// `μ·r̂_{u,e} + (1−μ)·r̂_{i,e}`
    #[inline]
    pub fn score_bper(&self, u: usize, i: usize, e: usize, mu: F) -> F {
        mu * self.score_user_expl(u, e) + (F::one() - mu) * self.score_item_expl(i, e)
    }

    /// `p_u·o_e^U + q_i·o_e^I`, biases ignored.
    #[inline]
    pub fn score_pitf(&self, u: usize, i: usize, e: usize) -> F {
        dot(self.user.row(u), self.expl_user.row(e)) + dot(self.item.row(i), self.expl_item.row(e))
    }

    /// Recommendation score `p_u·q_i + b_i`.
    #[inline]
    pub fn score_item(&self, u: usize, i: usize) -> F {
        dot(self.user.row(u), self.item.row(i)) + self.bias_item[i]
    }

    /// Recommendation score without the item bias, used by CD-J/PITF-J.
    #[inline]
    pub fn score_item_unbiased(&self, u: usize, i: usize) -> F {
        dot(self.user.row(u), self.item.row(i))
    }

    /// BPER+ score: `o^U`, `o^I` are multiplied element-wise by the
    /// projected semantic vector of `e` before the BPER blend.
    pub fn score_bper_plus(&self, emb: &EmbeddingTable<F>, u: usize, i: usize, e: usize, mu: F) -> F {
        let projected = emb.project(e);
        self.score_bper_with_projection(&projected, u, i, e, mu)
    }

    /// BPER+ score with `o_e^BERT` supplied by the caller.
    #[inline]
    pub fn score_bper_with_projection(&self, projected: &[F], u: usize, i: usize, e: usize, mu: F) -> F {
        let pu = self.user.row(u);
        let qi = self.item.row(i);
        let ou = self.expl_user.row(e);
        let oi = self.expl_item.row(e);
        let mut user_side = F::zero();
        let mut item_side = F::zero();
        for k in 0..projected.len() {
            user_side = user_side + pu[k] * (ou[k] * projected[k]);
            item_side = item_side + qi[k] * (oi[k] * projected[k]);
        }
        mu * (user_side + self.bias_expl_user[e]) + (F::one() - mu) * (item_side + self.bias_expl_item[e])
    }

    /// Rewrites BPER at blend `mu` as a CD model of dimension `2d + 2`.
    ///
    /// Slot layout (`k` zero-based):
    ///
    /// | slots      | user          | item              | explanation |
    /// |------------|---------------|-------------------|-------------|
    /// | `0..d`     | `μ·p_u`       | `1`               | `o_e^U`     |
    /// | `d..2d`    | `1`           | `(1−μ)·q_i`       | `o_e^I`     |
    /// | `2d`       | `μ`           | `1`               | `b_e^U`     |
    /// | `2d+1`     | `1`           | `1−μ`             | `b_e^I`     |
    pub fn embed_into_cd(&self, mu: F) -> CdParams<F> {
        self.embed_with_explanation_rows(mu, |e, k| (self.expl_user.get(e, k), self.expl_item.get(e, k)))
    }

    /// As [`embed_into_cd`](Self::embed_into_cd), with the explanation
    /// factor slots multiplied by the projected semantic vector.
    pub fn embed_plus_into_cd(&self, emb: &EmbeddingTable<F>, mu: F) -> Result<CdParams<F>, ParamsError> {
        emb.check_dim(self.dim())?;
        let projected: Vec<Vec<F>> = (0..self.n_explanations()).map(|e| emb.project(e)).collect();
        Ok(self.embed_with_explanation_rows(mu, |e, k| {
            (
                self.expl_user.get(e, k) * projected[e][k],
                self.expl_item.get(e, k) * projected[e][k],
            )
        }))
    }

    fn embed_with_explanation_rows(&self, mu: F, expl: impl Fn(usize, usize) -> (F, F)) -> CdParams<F> {
        let d = self.dim();
        let one = F::one();
        let rest = one - mu;
        let user = Matrix::from_fn(self.n_users(), 2 * d + 2, |u, k| match k {
            k if k < d => mu * self.user.get(u, k),
            k if k < 2 * d => one,
            k if k == 2 * d => mu,
            _ => one,
        });
        let item = Matrix::from_fn(self.n_items(), 2 * d + 2, |i, k| match k {
            k if k < d => one,
            k if k < 2 * d => rest * self.item.get(i, k - d),
            k if k == 2 * d => one,
            _ => rest,
        });
        let expl = Matrix::from_fn(self.n_explanations(), 2 * d + 2, |e, k| match k {
            k if k < d => expl(e, k).0,
            k if k < 2 * d => expl(e, k - d).1,
            k if k == 2 * d => self.bias_expl_user[e],
            _ => self.bias_expl_item[e],
        });
        CdParams { user, item, expl }
    }
}

/// Canonical-decomposition parameters: `r̂ = Σ_k p_{u,k} q_{i,k} o_{e,k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct CdParams<F> {
    pub user: Matrix<F>,
    pub item: Matrix<F>,
    pub expl: Matrix<F>,
}

impl<F: Scalar> CdParams<F> {
    pub fn init(
        n_users: usize,
        n_items: usize,
        n_explanations: usize,
        dim: usize,
        init_scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            user: Matrix::gaussian(n_users, dim, init_scale, &mut rng),
            item: Matrix::gaussian(n_items, dim, init_scale, &mut rng),
            expl: Matrix::gaussian(n_explanations, dim, init_scale, &mut rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.user.cols()
    }

    pub fn n_explanations(&self) -> usize {
        self.expl.rows()
    }

    pub fn check_triple(&self, u: usize, i: usize, e: usize) -> Result<(), ParamsError> {
        check("user", u, self.user.rows())?;
        check("item", i, self.item.rows())?;
        check("explanation", e, self.expl.rows())
    }

    #[inline]
    pub fn score(&self, u: usize, i: usize, e: usize) -> F {
        let (p, q, o) = (self.user.row(u), self.item.row(i), self.expl.row(e));
        let mut acc = F::zero();
        for k in 0..p.len() {
            acc = acc + p[k] * q[k] * o[k];
        }
        acc
    }

    /// `p_u·q_i`, the CD-J recommendation score.
    #[inline]
    pub fn score_item(&self, u: usize, i: usize) -> F {
        dot(self.user.row(u), self.item.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.user.is_finite() && self.item.is_finite() && self.expl.is_finite()
    }
}

/// Frozen semantic vectors plus the trainable projection
/// `o_e^BERT = W·raw_e + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable<F> {
    raw: Matrix<F>,
    /// `W`, `d × d_emb`.
    pub weight: Matrix<F>,
    /// `c`, length `d`.
    pub bias: Vec<F>,
}

impl<F: Scalar> EmbeddingTable<F> {
    /// Projection starting at `W = 0`, `c = 1⃗`, so the model initially
    /// scores exactly like BPER.
    pub fn new(raw: Matrix<F>, dim: usize) -> Self {
        let emb_dim = raw.cols();
        Self {
            raw,
            weight: Matrix::zeros(dim, emb_dim),
            bias: vec![F::one(); dim],
        }
    }

    pub fn with_projection(raw: Matrix<F>, weight: Matrix<F>, bias: Vec<F>) -> Result<Self, ParamsError> {
        if weight.cols() != raw.cols() {
            return Err(ParamsError::DimensionMismatch(format!(
                "projection has {} columns but embeddings have {}",
                weight.cols(),
                raw.cols()
            )));
        }
        if weight.rows() != bias.len() {
            return Err(ParamsError::DimensionMismatch(format!(
                "projection has {} rows but bias has length {}",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(Self { raw, weight, bias })
    }

    pub fn raw(&self) -> &Matrix<F> {
        &self.raw
    }

    pub fn n_explanations(&self) -> usize {
        self.raw.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.raw.cols()
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn check_dim(&self, dim: usize) -> Result<(), ParamsError> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(ParamsError::DimensionMismatch(format!(
                "projection yields {} components, model dimension is {dim}",
                self.dim()
            )))
        }
    }

    pub fn project_into(&self, e: usize, out: &mut [F]) {
        let x = self.raw.row(e);
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = dot(self.weight.row(k), x) + self.bias[k];
        }
    }

    pub fn project(&self, e: usize) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim()];
        self.project_into(e, &mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_params(seed: u64) -> FactorParams<f64> {
        let mut fp = FactorParams::init(4, 3, 5, 3, 0.7, seed);
        for (e, (bu, bi)) in fp
            .bias_expl_user
            .iter_mut()
            .zip(fp.bias_expl_item.iter_mut())
            .enumerate()
        {
            *bu = 0.3 * e as f64 - 0.5;
            *bi = 0.1 - 0.2 * e as f64;
        }
        fp
    }

    // scalar-loop reference for the explanation scores
    fn oracle_bper(fp: &FactorParams<f64>, u: usize, i: usize, e: usize, mu: f64) -> f64 {
        let mut ru = fp.bias_expl_user[e];
        let mut ri = fp.bias_expl_item[e];
        for k in 0..fp.dim() {
            ru += fp.user.get(u, k) * fp.expl_user.get(e, k);
            ri += fp.item.get(i, k) * fp.expl_item.get(e, k);
        }
        mu * ru + (1.0 - mu) * ri
    }

    #[test]
    fn zero_scale_init_is_all_zero() {
        let fp: FactorParams<f64> = FactorParams::init(3, 2, 4, 5, 0.0, 1);
        assert_eq!(fp, FactorParams::zeros(3, 2, 4, 5));
        assert_eq!(fp.score_bper(2, 1, 3, 0.3), 0.0);
    }

    #[test]
    fn init_is_seeded_and_shaped() {
        let a: FactorParams<f64> = FactorParams::init(100, 7, 9, 20, 0.1, 42);
        let b: FactorParams<f64> = FactorParams::init(100, 7, 9, 20, 0.1, 42);
        assert_eq!(a, b);
        assert_eq!((a.user.rows(), a.user.cols()), (100, 20));
        assert!(a.bias_expl_user.iter().all(|&v| v == 0.0));
        let c: FactorParams<f64> = FactorParams::init(100, 7, 9, 20, 0.1, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn blend_endpoints() {
        let fp = random_params(3);
        for (u, i, e) in [(0, 0, 0), (3, 2, 4), (1, 1, 2)] {
            assert_eq!(fp.score_bper(u, i, e, 1.0), fp.score_user_expl(u, e));
            assert_eq!(fp.score_bper(u, i, e, 0.0), fp.score_item_expl(i, e));
            assert!((fp.score_bper(u, i, e, 0.35) - oracle_bper(&fp, u, i, e, 0.35)).abs() < 1e-12);
        }
    }

    #[test]
    fn cd_score_arithmetic() {
        let cd = CdParams {
            user: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
            item: Matrix::from_vec(1, 1, vec![3.0]).unwrap(),
            expl: Matrix::from_vec(1, 1, vec![4.0]).unwrap(),
        };
        assert_eq!(cd.score(0, 0, 0), 24.0);
        let mut cd: CdParams<f64> = CdParams::init(3, 3, 3, 3, 1.0, 9);
        for k in 0..3 {
            cd.item.set(1, k, 0.0);
        }
        assert_eq!(cd.score(2, 1, 0), 0.0);
        let oracle: f64 = (0..3).map(|k| cd.user.get(2, k) * cd.item.get(0, k) * cd.expl.get(1, k)).sum();
        assert!((cd.score(2, 0, 1) - oracle).abs() < 1e-12);
    }

    #[test]
    fn pitf_relations() {
        let mut fp = random_params(5);
        let oracle = |fp: &FactorParams<f64>, u: usize, i: usize, e: usize| {
            (0..fp.dim())
                .map(|k| fp.user.get(u, k) * fp.expl_user.get(e, k) + fp.item.get(i, k) * fp.expl_item.get(e, k))
                .sum::<f64>()
        };
        assert!((fp.score_pitf(1, 2, 3) - oracle(&fp, 1, 2, 3)).abs() < 1e-12);

        let mut unbiased = fp.clone();
        unbiased.bias_expl_user.iter_mut().for_each(|b| *b = 0.0);
        unbiased.bias_expl_item.iter_mut().for_each(|b| *b = 0.0);
        let lhs = fp.score_pitf(2, 0, 4);
        let rhs = 2.0 * unbiased.score_bper(2, 0, 4, 0.5);
        assert!((lhs - rhs).abs() < 1e-12);

        fp.expl_item = Matrix::zeros(5, 3);
        assert!((fp.score_pitf(0, 1, 2) - dot(fp.user.row(0), fp.expl_user.row(2))).abs() < 1e-15);
    }

    #[test]
    fn item_score() {
        let mut fp: FactorParams<f64> = FactorParams::zeros(2, 2, 1, 3);
        assert_eq!(fp.score_item(0, 1), 0.0);
        fp.bias_item[1] = 5.0;
        assert_eq!(fp.score_item(0, 1), 5.0);
        let fp = random_params(8);
        let oracle: f64 = (0..3).map(|k| fp.user.get(3, k) * fp.item.get(2, k)).sum::<f64>() + fp.bias_item[2];
        assert!((fp.score_item(3, 2) - oracle).abs() < 1e-12);
    }

    #[test]
    fn index_checks() {
        let fp = random_params(1);
        assert!(fp.check_triple(3, 2, 4).is_ok());
        assert_eq!(
            fp.check_triple(4, 0, 0),
            Err(ParamsError::IndexOutOfRange {
                class: "user",
                index: 4,
                count: 4
            })
        );
        assert!(fp.check_triple(0, 0, 5).is_err());
    }

    #[test]
    fn cd_embedding_dimension_and_mu_zero() {
        let fp: FactorParams<f64> = FactorParams::init(2, 2, 2, 1, 0.5, 0);
        assert_eq!(fp.embed_into_cd(0.4).dim(), 4);
        let fp = random_params(2);
        let cd = fp.embed_into_cd(0.0);
        for u in 0..4 {
            for k in 0..3 {
                assert_eq!(cd.user.get(u, k), 0.0);
            }
        }
        for (u, i, e) in [(0, 0, 0), (3, 2, 4)] {
            assert!((cd.score(u, i, e) - fp.score_item_expl(i, e)).abs() < 1e-12);
        }
    }

    #[test]
    fn bper_plus_degenerate_projections() {
        let fp = random_params(4);
        let raw = Matrix::gaussian(5, 6, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        let ones = EmbeddingTable::new(raw.clone(), 3);
        let zero = EmbeddingTable::with_projection(raw, Matrix::zeros(3, 6), vec![0.0; 3]).unwrap();
        for (u, i, e) in [(0, 1, 2), (3, 0, 4)] {
            assert_eq!(fp.score_bper_plus(&ones, u, i, e, 0.6), fp.score_bper(u, i, e, 0.6));
            let biases = 0.6 * fp.bias_expl_user[e] + 0.4 * fp.bias_expl_item[e];
            assert!((fp.score_bper_plus(&zero, u, i, e, 0.6) - biases).abs() < 1e-15);
        }
        assert!(EmbeddingTable::new(Matrix::<f64>::zeros(5, 2), 4).check_dim(3).is_err());
        assert!(fp.embed_plus_into_cd(&EmbeddingTable::new(Matrix::zeros(5, 2), 4), 0.5).is_err());
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        let bad = [
            Hyperparams { dim: 0, ..Default::default() },
            Hyperparams { learning_rate: 0.0, ..Default::default() },
            Hyperparams { regularization: -1.0, ..Default::default() },
            Hyperparams { mu: 1.5, ..Default::default() },
            Hyperparams { alpha: -0.1, ..Default::default() },
        ];
        for hp in bad {
            assert!(hp.validate().is_err(), "{hp:?}");
        }
    }
}
