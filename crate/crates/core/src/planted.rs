//! Toy populations generated from a known 2-D logistic model.
//!
//! Used to exercise the pipeline end to end without real survey data: parties
//! sit at fixed latent positions, candidates cluster tightly around their
//! party, voters spread more widely, and every answer is drawn from the true
//! per-question logistic curve.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::latent::{LatentPoint, QuestionModel};
use crate::seed::{substream, SeededRng};
use crate::survey::{likert_index, normalize_likert, PartyResults, Questionnaire, Respondent, RespondentKind, ResponseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedConfig {
    pub n_questions: usize,
    pub levels: usize,
    pub n_parties: usize,
    pub candidates_per_party: usize,
    pub n_voters: usize,
    /// Latent radius of the party positions.
    pub party_radius: f64,
    pub candidate_spread: f64,
    pub voter_spread: f64,
    /// Norm of each question's true weight vector.
    pub discrimination: f64,
    /// Gaussian noise added to the agreement probability before quantizing.
    pub answer_noise: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_questions: 30,
            levels: 5,
            n_parties: 6,
            candidates_per_party: 30,
            n_voters: 1200,
            party_radius: 1.5,
            candidate_spread: 0.35,
            voter_spread: 0.9,
            discrimination: 2.5,
            answer_noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedWorld {
    pub questionnaire: Questionnaire,
    pub truth: Vec<QuestionModel>,
    pub party_positions: Vec<(String, LatentPoint)>,
    pub candidates: ResponseMatrix,
    pub candidate_points: Vec<LatentPoint>,
    pub voters: ResponseMatrix,
    pub voter_points: Vec<LatentPoint>,
    pub vote_shares: PartyResults,
}

fn random_questions(rng: &mut SeededRng, n: usize, discrimination: f64) -> Vec<QuestionModel> {
    (0..n)
        .map(|_| {
            let angle = rng.random::<f64>() * TAU;
            let b: f64 = StandardNormal.sample(rng);
            QuestionModel {
                weight: [discrimination * angle.cos(), discrimination * angle.sin()],
                intercept: 0.5 * b,
            }
        })
        .collect()
}

fn likert_answer(rng: &mut SeededRng, model: &QuestionModel, z: LatentPoint, levels: usize, noise: f64) -> f64 {
    let p = model.probability(z);
    let eps = if noise > 0.0 { Normal::new(0.0, noise).expect("noise").sample(rng) } else { 0.0 };
    let idx = ((p + eps).clamp(0.0, 1.0) * (levels - 1) as f64).round() as usize;
    normalize_likert(idx, levels).expect("index within scale")
}

impl PlantedWorld {
    pub fn generate(config: &PlantedConfig) -> Result<Self> {
        let questionnaire = Questionnaire::uniform(config.n_questions, config.levels)?;
        let mut rng = substream(config.seed, "planted", &[]);
        let truth = random_questions(&mut rng, config.n_questions, config.discrimination);

        let party_positions: Vec<(String, LatentPoint)> = (0..config.n_parties)
            .map(|p| {
                let a = TAU * p as f64 / config.n_parties as f64 + 0.3;
                (format!("P{p}"), LatentPoint::new(config.party_radius * a.cos(), config.party_radius * a.sin()))
            })
            .collect();

        // Unequal, deterministic vote shares.
        let raw: Vec<f64> = (0..config.n_parties).map(|p| 1.0 + p as f64 * 0.5).collect();
        let total: f64 = raw.iter().sum();
        let vote_shares = PartyResults::new(
            party_positions
                .iter()
                .zip(&raw)
                .map(|((name, _), r)| (name.clone(), r / total))
                .collect(),
        )?;

        let jitter = |rng: &mut SeededRng, centre: LatentPoint, sd: f64| {
            let dx: f64 = StandardNormal.sample(rng);
            let dy: f64 = StandardNormal.sample(rng);
            LatentPoint::new(centre.x + sd * dx, centre.y + sd * dy)
        };

        let mut candidates = ResponseMatrix::empty(config.n_questions);
        let mut candidate_points = Vec::new();
        for (name, centre) in &party_positions {
            for c in 0..config.candidates_per_party {
                let z = jitter(&mut rng, *centre, config.candidate_spread);
                let row = truth
                    .iter()
                    .map(|m| Some(likert_answer(&mut rng, m, z, config.levels, config.answer_noise)))
                    .collect();
                candidates.push(
                    Respondent {
                        id: format!("{name}-c{c}"),
                        kind: RespondentKind::Candidate,
                        party: Some(name.clone()),
                    },
                    row,
                )?;
                candidate_points.push(z);
            }
        }

        let cumulative: Vec<f64> = raw
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r / total;
                Some(*acc)
            })
            .collect();
        let mut voters = ResponseMatrix::empty(config.n_questions);
        let mut voter_points = Vec::new();
        for v in 0..config.n_voters {
            let u: f64 = rng.random();
            let p = cumulative.iter().position(|c| u < *c).unwrap_or(config.n_parties - 1);
            // Voters are pulled towards the centre and spread more than candidates.
            let centre = party_positions[p].1;
            let z = jitter(&mut rng, LatentPoint::new(0.6 * centre.x, 0.6 * centre.y), config.voter_spread);
            let row = truth
                .iter()
                .map(|m| Some(likert_answer(&mut rng, m, z, config.levels, config.answer_noise)))
                .collect();
            voters.push(
                Respondent {
                    id: format!("v{v}"),
                    kind: RespondentKind::Voter,
                    party: None,
                },
                row,
            )?;
            voter_points.push(z);
        }

        Ok(Self {
            questionnaire,
            truth,
            party_positions,
            candidates,
            candidate_points,
            voters,
            voter_points,
            vote_shares,
        })
    }
}

/// Respondents answering with their exact agreement probability.
#[derive(Debug, Clone)]
pub struct PlantedLogistic {
    pub responses: ResponseMatrix,
    pub points: Vec<LatentPoint>,
    pub truth: Vec<QuestionModel>,
    /// `probabilities[i][k]` = true agreement of respondent `i` with question `k`.
    pub probabilities: Vec<Vec<f64>>,
}

/// `n` respondents with standard-normal latent positions and `q` questions of
/// the given discrimination; answers are the noiseless probabilities.
pub fn planted_logistic(n: usize, q: usize, discrimination: f64, seed: u64) -> Result<PlantedLogistic> {
    let mut rng = substream(seed, "planted-logistic", &[]);
    let truth = random_questions(&mut rng, q, discrimination);
    let mut responses = ResponseMatrix::empty(q);
    let mut points = Vec::with_capacity(n);
    let mut probabilities = Vec::with_capacity(n);
    for i in 0..n {
        let z = LatentPoint::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        let probs: Vec<f64> = truth.iter().map(|m| m.probability(z)).collect();
        responses.push(
            Respondent {
                id: format!("r{i}"),
                kind: RespondentKind::Voter,
                party: None,
            },
            probs.iter().copied().map(Some).collect(),
        )?;
        points.push(z);
        probabilities.push(probs);
    }
    Ok(PlantedLogistic {
        responses,
        points,
        truth,
        probabilities,
    })
}

/// True when every present value of a real respondent sits on its Likert scale.
pub fn on_scale(matrix: &ResponseMatrix, questionnaire: &Questionnaire) -> bool {
    matrix.rows().iter().all(|row| {
        row.iter()
            .zip(questionnaire.questions())
            .all(|(a, q)| a.is_none_or(|v| likert_index(v, q.levels).is_some()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_shapes_and_scale() {
        let cfg = PlantedConfig {
            n_voters: 50,
            candidates_per_party: 4,
            ..PlantedConfig::default()
        };
        let w = PlantedWorld::generate(&cfg).unwrap();
        assert_eq!(w.candidates.n_rows(), 24);
        assert_eq!(w.voters.n_rows(), 50);
        assert!(on_scale(&w.candidates, &w.questionnaire));
        assert!(on_scale(&w.voters, &w.questionnaire));
        let total: f64 = w.vote_shares.parties().iter().map(|p| w.vote_shares.get(p).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let again = PlantedWorld::generate(&cfg).unwrap();
        assert_eq!(again.voters, w.voters);
    }
}
