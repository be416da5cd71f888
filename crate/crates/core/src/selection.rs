//! Uncertainty-based question selection and the adaptive answering loop.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{predict_all, LatentPoint, PosteriorTracker, TrainedModel};
use crate::survey::Answer;

/// Gini impurity of a Bernoulli prediction: `2p(1 - p)`.
#[inline]
pub fn gini(p: f64) -> f64 {
    2.0 * p * (1.0 - p)
}

/// Answers given so far, the questions still open, and the current embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSessionState {
    answered: Vec<(usize, f64)>,
    remaining: BTreeSet<usize>,
    current_point: LatentPoint,
}

impl UserSessionState {
    pub fn new(n_questions: usize) -> Self {
        Self {
            answered: Vec::new(),
            remaining: (0..n_questions).collect(),
            current_point: LatentPoint::ORIGIN,
        }
    }

    pub fn answered(&self) -> &[(usize, f64)] {
        &self.answered
    }

    pub fn remaining(&self) -> &BTreeSet<usize> {
        &self.remaining
    }

    pub fn current_point(&self) -> LatentPoint {
        self.current_point
    }

    pub fn is_answered(&self, question: usize) -> bool {
        !self.remaining.contains(&question) && self.answered.iter().any(|(q, _)| *q == question)
    }

    /// Records an answer; the question must still be open.
    pub fn record(&mut self, question: usize, value: f64) -> Result<()> {
        if !self.remaining.remove(&question) {
            return Err(Error::State(format!("question {question} is not open in this session")));
        }
        self.answered.push((question, value));
        Ok(())
    }

    pub fn set_point(&mut self, point: LatentPoint) {
        self.current_point = point;
    }
}

/// Open questions ordered by decreasing score, ties by ascending id.
fn ranked_by<F: Fn(f64) -> f64>(state: &UserSessionState, model: &TrainedModel, score: F) -> Vec<usize> {
    let preds = predict_all(state.current_point, model);
    let mut ids: Vec<usize> = state.remaining.iter().copied().collect();
    // Stable sort on ascending ids keeps the lowest id first among equal scores.
    ids.sort_by(|&a, &b| score(preds[b]).total_cmp(&score(preds[a])));
    ids
}

/// Open questions ranked by Gini impurity at the current point.
pub fn rank_questions(state: &UserSessionState, model: &TrainedModel) -> Vec<usize> {
    ranked_by(state, model, gini)
}

/// The open question whose prediction has maximal Gini impurity (lowest id on ties).
pub fn next_question(state: &UserSessionState, model: &TrainedModel) -> Result<usize> {
    next_question_by(state, model, gini)
}

/// [`next_question`] with an arbitrary score in place of the Gini impurity.
pub fn next_question_by<F: Fn(f64) -> f64>(state: &UserSessionState, model: &TrainedModel, score: F) -> Result<usize> {
    let preds = predict_all(state.current_point, model);
    let mut best: Option<(usize, f64)> = None;
    for &k in &state.remaining {
        let s = score(preds[k]);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((k, s));
        }
    }
    best.map(|(k, _)| k)
        .ok_or_else(|| Error::State("no questions remain in this session".into()))
}

/// Result of a simulated adaptive session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub state: UserSessionState,
    /// True when the user's truth ran out of answerable questions before `K`.
    pub stopped_early: bool,
    /// Count of selections that had to fall back because the top-ranked
    /// question had no recorded answer.
    pub substitutions: usize,
}

/// Runs `k` rounds of select → answer → re-embed for a simulated user.
///
/// When the user's recorded truth lacks the selected question, the next-best
/// question with a recorded answer is asked instead; the session stops early if
/// none is left. Model parameters stay fixed for the whole session.
pub fn answer_k_questions(user_truth: &[Answer], k: usize, model: &TrainedModel, resolution: usize) -> Result<SessionOutcome> {
    answer_k_questions_by(user_truth, k, model, resolution, gini)
}

pub fn answer_k_questions_by<F: Fn(f64) -> f64>(
    user_truth: &[Answer],
    k: usize,
    model: &TrainedModel,
    resolution: usize,
    score: F,
) -> Result<SessionOutcome> {
    let n_q = model.n_questions();
    if user_truth.len() != n_q {
        return Err(Error::Input(format!("truth has {} answers, model {n_q} questions", user_truth.len())));
    }
    if k == 0 || k > n_q {
        return Err(Error::Config(format!("K must be in 1..={n_q}, got {k}")));
    }
    let mut state = UserSessionState::new(n_q);
    let mut tracker = PosteriorTracker::new(model, resolution);
    let mut substitutions = 0;
    let mut stopped_early = false;
    for _ in 0..k {
        let pick = if let Some(v) = next_question_by(&state, model, &score).ok().filter(|&q| user_truth[q].is_some()) {
            Some(v)
        } else {
            let alt = ranked_by(&state, model, &score).into_iter().find(|&q| user_truth[q].is_some());
            substitutions += usize::from(alt.is_some());
            alt
        };
        let Some(q) = pick else {
            stopped_early = true;
            break;
        };
        let value = user_truth[q].expect("selected question has a recorded answer");
        state.record(q, value)?;
        tracker.observe(model, q, value);
        state.set_point(tracker.mean());
    }
    Ok(SessionOutcome {
        state,
        stopped_early,
        substitutions,
    })
}
