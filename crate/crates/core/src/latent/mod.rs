//! The statistical model: a two-component principal projection of the training
//! responses, one logistic regression per question on the projected
//! coordinates, and a grid posterior for embedding partially answered users.

mod logistic;
mod posterior;

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::substream;
use crate::survey::{binarize_answer, Questionnaire, ResponseMatrix};

pub use logistic::{fit as fit_logistic, FitReport, GRAD_TOL, L2_STRENGTH, MAX_ITER};
pub use posterior::{PosteriorGrid, PosteriorTracker, BOUNDS_MARGIN, DEFAULT_RESOLUTION, RANDOM_INIT_HALF_WIDTH};

/// Snapshot format version written by [`TrainedModel::to_json`].
pub const SNAPSHOT_VERSION: u32 = 1;

/// Columns whose variance is at or below this count as constant.
const VARIANCE_EPS: f64 = 1e-12;

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(t))` without overflow.
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// Position in the 2-D ideology space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentPoint {
    pub x: f64,
    pub y: f64,
}

impl LatentPoint {
    pub const ORIGIN: LatentPoint = LatentPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuestionModel {
    pub weight: [f64; 2],
    pub intercept: f64,
}

impl QuestionModel {
    #[inline]
    pub fn logit(&self, p: LatentPoint) -> f64 {
        self.weight[0] * p.x + self.weight[1] * p.y + self.intercept
    }

    #[inline]
    pub fn probability(&self, p: LatentPoint) -> f64 {
        sigmoid(self.logit(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    Fitted,
    Random,
}

/// Immutable fitted (or randomly initialised) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    column_means: Vec<f64>,
    basis: [Vec<f64>; 2],
    question_models: Vec<QuestionModel>,
    train_spread: [f64; 2],
    train_bounds: Option<[[f64; 2]; 2]>,
    init_mode: InitMode,
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: u32,
    #[serde(flatten)]
    model: TrainedModel,
}

impl TrainedModel {
    /// Builds a model from explicit parameters.
    ///
    /// The basis is taken as given; `train_bounds` of `None` marks a model with
    /// no training projections (the posterior grid then spans `[-3, 3]²`).
    pub fn from_parts(
        column_means: Vec<f64>,
        basis: [Vec<f64>; 2],
        question_models: Vec<QuestionModel>,
        train_spread: [f64; 2],
        train_bounds: Option<[[f64; 2]; 2]>,
        init_mode: InitMode,
    ) -> Result<Self> {
        let q = column_means.len();
        if basis.iter().any(|b| b.len() != q) || question_models.len() != q {
            return Err(Error::Input("model parts disagree on the number of questions".into()));
        }
        if train_spread.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::Input("train spread must be non-negative".into()));
        }
        Ok(Self {
            column_means,
            basis,
            question_models,
            train_spread,
            train_bounds,
            init_mode,
        })
    }

    /// A model whose question parameters are given directly, with a unit prior.
    pub fn with_question_models(question_models: Vec<QuestionModel>) -> Self {
        let q = question_models.len();
        let mut basis = [vec![0.0; q], vec![0.0; q]];
        if q > 0 {
            basis[0][0] = 1.0;
        }
        if q > 1 {
            basis[1][1] = 1.0;
        }
        Self {
            column_means: vec![0.5; q],
            basis,
            question_models,
            train_spread: [1.0, 1.0],
            train_bounds: None,
            init_mode: InitMode::Random,
        }
    }

    pub fn n_questions(&self) -> usize {
        self.question_models.len()
    }

    pub fn column_means(&self) -> &[f64] {
        &self.column_means
    }

    pub fn basis(&self) -> &[Vec<f64>; 2] {
        &self.basis
    }

    pub fn question_models(&self) -> &[QuestionModel] {
        &self.question_models
    }

    pub fn train_spread(&self) -> [f64; 2] {
        self.train_spread
    }

    pub fn train_bounds(&self) -> Option<[[f64; 2]; 2]> {
        self.train_bounds
    }

    pub fn init_mode(&self) -> InitMode {
        self.init_mode
    }

    /// Projects a complete answer vector onto the principal axes.
    pub fn project(&self, answers: &[f64]) -> LatentPoint {
        let coord = |b: &[f64]| {
            answers
                .iter()
                .zip(&self.column_means)
                .zip(b)
                .map(|((a, m), w)| (a - m) * w)
                .sum()
        };
        LatentPoint::new(coord(&self.basis[0]), coord(&self.basis[1]))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Snapshot {
            version: SNAPSHOT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(s)?;
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Input(format!("unsupported model snapshot version {}", snap.version)));
        }
        let m = snap.model;
        Self::from_parts(m.column_means, m.basis, m.question_models, m.train_spread, m.train_bounds, m.init_mode)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn random_model<R: Rng + ?Sized>(training: &ResponseMatrix, n_q: usize, rng: &mut R) -> TrainedModel {
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect() };
    let normalize = |v: &mut Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
    };
    let mut b0 = draw(n_q);
    normalize(&mut b0);
    let mut b1 = draw(n_q);
    if n_q > 1 {
        let dot: f64 = b0.iter().zip(&b1).map(|(a, b)| a * b).sum();
        b1.iter_mut().zip(&b0).for_each(|(x, a)| *x -= dot * a);
        normalize(&mut b1);
    } else {
        b1 = vec![0.0; n_q];
    }
    let params = draw(3 * n_q);
    let question_models = params
        .chunks(3)
        .map(|c| QuestionModel {
            weight: [c[0], c[1]],
            intercept: c[2],
        })
        .collect();
    let column_means = if training.n_questions() == n_q {
        training.column_means().into_iter().map(|m| m.unwrap_or(0.5)).collect()
    } else {
        vec![0.5; n_q]
    };
    TrainedModel {
        column_means,
        basis: [b0, b1],
        question_models,
        train_spread: [1.0, 1.0],
        train_bounds: None,
        init_mode: InitMode::Random,
    }
}

/// Fits the projection and per-question regressions.
///
/// Empty or degenerate training data (fewer than three rows, or fewer than two
/// columns with non-zero variance) yields a randomly initialised model; this is
/// the cold-start condition. Binarized labels are drawn from a per-cell
/// substream keyed by a seed taken from `rng`, so they do not depend on
/// evaluation order.
///
/// # Panics
/// If the training matrix and questionnaire disagree on the number of questions.
pub fn fit_model<R: Rng + ?Sized>(training: &ResponseMatrix, questionnaire: &Questionnaire, rng: &mut R) -> TrainedModel {
    let n_q = questionnaire.len();
    assert_eq!(training.n_questions(), n_q, "training matrix does not match questionnaire");
    let n = training.n_rows();
    let label_seed: u64 = rng.random();

    let imputed = training.mean_imputed();
    let means: Vec<f64> = training.column_means().into_iter().map(|m| m.unwrap_or(0.5)).collect();
    let varying = (0..n_q)
        .filter(|&k| {
            let var = imputed.iter().map(|r| (r[k] - means[k]).powi(2)).sum::<f64>() / n.max(1) as f64;
            var > VARIANCE_EPS
        })
        .count();
    if n < 3 || varying < 2 {
        return random_model(training, n_q, rng);
    }

    let centered = DMatrix::from_fn(n, n_q, |i, k| imputed[i][k] - means[k]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n_q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let component = |idx: usize| -> Vec<f64> {
        let v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        // Fix the sign: the largest-magnitude loading is positive.
        let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.into_iter().map(|x| -x).collect()
        } else {
            v
        }
    };
    let basis = [component(order[0]), component(order[1])];

    let coords: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let row = centered.row(i);
            [0, 1].map(|a| row.iter().zip(&basis[a]).map(|(x, w)| x * w).sum())
        })
        .collect();
    let spread = [0, 1].map(|a| {
        let mu = coords.iter().map(|c| c[a]).sum::<f64>() / n as f64;
        (coords.iter().map(|c| (c[a] - mu).powi(2)).sum::<f64>() / n as f64).sqrt()
    });
    let bounds = [0, 1].map(|a| {
        coords
            .iter()
            .fold([f64::INFINITY, f64::NEG_INFINITY], |[lo, hi], c| [lo.min(c[a]), hi.max(c[a])])
    });

    let question_models = (0..n_q)
        .map(|k| {
            let (xs, ys): (Vec<[f64; 2]>, Vec<u8>) = training
                .rows()
                .iter()
                .enumerate()
                .filter_map(|(i, row)| {
                    row[k].map(|v| {
                        let mut cell_rng = substream(label_seed, "label", &[i as u64, k as u64]);
                        (coords[i], binarize_answer(v, &mut cell_rng))
                    })
                })
                .unzip();
            logistic::fit(&xs, &ys).model
        })
        .collect();

    TrainedModel {
        column_means: means,
        basis,
        question_models,
        train_spread: spread,
        train_bounds: Some(bounds),
        init_mode: InitMode::Fitted,
    }
}

/// Projected training coordinates under the model's basis (gaps filled with column means).
pub fn project_rows(model: &TrainedModel, rows: &ResponseMatrix) -> Vec<LatentPoint> {
    rows.rows()
        .iter()
        .map(|row| {
            let filled: Vec<f64> = row.iter().zip(model.column_means()).map(|(a, m)| a.unwrap_or(*m)).collect();
            model.project(&filled)
        })
        .collect()
}

/// Log posterior (up to a constant) at `z` given `(question, value)` answers.
pub fn log_posterior(z: LatentPoint, answers: &[(usize, f64)], model: &TrainedModel) -> f64 {
    let sd = model.prior_std();
    let prior = -0.5 * ((z.x / sd[0]).powi(2) + (z.y / sd[1]).powi(2));
    answers.iter().fold(prior, |acc, &(k, y)| {
        let t = model.question_models[k].logit(z);
        acc + y * log_sigmoid(t) + (1.0 - y) * log_sigmoid(-t)
    })
}

/// Analytic gradient of [`log_posterior`] in `z`.
pub fn log_posterior_gradient(z: LatentPoint, answers: &[(usize, f64)], model: &TrainedModel) -> [f64; 2] {
    let sd = model.prior_std();
    let mut g = [-z.x / (sd[0] * sd[0]), -z.y / (sd[1] * sd[1])];
    for &(k, y) in answers {
        let qm = &model.question_models[k];
        let r = y - qm.probability(z);
        g[0] += r * qm.weight[0];
        g[1] += r * qm.weight[1];
    }
    g
}

/// Embeds a partially answered user: posterior mean and the full grid.
pub fn embed_user(answers: &[(usize, f64)], model: &TrainedModel, resolution: usize) -> (LatentPoint, PosteriorGrid) {
    let mut tracker = PosteriorTracker::new(model, resolution);
    for &(k, y) in answers {
        tracker.observe(model, k, y);
    }
    (tracker.mean(), tracker.grid())
}

/// Agreement probabilities for every question at `point`, kept strictly inside `(0, 1)`.
pub fn predict_all(point: LatentPoint, model: &TrainedModel) -> Vec<f64> {
    const EDGE: f64 = 1e-12;
    model
        .question_models
        .iter()
        .map(|qm| qm.probability(point).clamp(EDGE, 1.0 - EDGE))
        .collect()
}

/// Fills unanswered questions with predictions at `point`; given answers are kept verbatim.
pub fn impute_at(point: LatentPoint, answers: &[(usize, f64)], model: &TrainedModel) -> Vec<f64> {
    let mut out = predict_all(point, model);
    for &(k, y) in answers {
        out[k] = y;
    }
    out
}

/// Embeds the user and imputes the remaining answers.
pub fn impute(answers: &[(usize, f64)], model: &TrainedModel, resolution: usize) -> Vec<f64> {
    let (point, _) = embed_user(answers, model, resolution);
    impute_at(point, answers, model)
}
