//! Sequential adaptive-questionnaire simulation with batched refits and
//! synthetic-data replacement.

mod pool;
mod study;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::latent::{fit_model, impute_at, DEFAULT_RESOLUTION};
use crate::metrics::{cra, rmse_imputation, complete_candidates, recommend_candidates, RecommendationSet, DEFAULT_K_NEIGHBOURS};
use crate::seed::substream;
use crate::selection::answer_k_questions;
use crate::survey::{Answer, Questionnaire, ResponseMatrix};

pub use pool::{full_replacement_users, Origin, TrainingPool};
pub use study::{
    compare_conditions, mean_curve, replacement_study, sweep_k, ComparisonReport, ConditionBreakEven, ConditionCurves, ReplacementReport,
    ReplacementRow, SweepRow, SyntheticBundle,
};

/// Which data the model is trained on before the first real user arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitCondition {
    Coldstart,
    Gpt,
    GptMeans,
    GptVoters,
    Candidates,
}

impl InitCondition {
    pub const ALL: [InitCondition; 5] = [
        InitCondition::Coldstart,
        InitCondition::Gpt,
        InitCondition::GptMeans,
        InitCondition::GptVoters,
        InitCondition::Candidates,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitCondition::Coldstart => "coldstart",
            InitCondition::Gpt => "gpt",
            InitCondition::GptMeans => "gpt-means",
            InitCondition::GptVoters => "gpt-voters",
            InitCondition::Candidates => "candidates",
        }
    }
}

impl fmt::Display for InitCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitCondition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown init condition {s:?} (expected coldstart, gpt, gpt-means, gpt-voters or candidates)")))
    }
}

fn default_u() -> usize {
    5
}
fn default_n_users() -> usize {
    1000
}
fn default_repetitions() -> usize {
    10
}
fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}
fn default_neighbours() -> usize {
    DEFAULT_K_NEIGHBOURS
}
fn default_condition() -> InitCondition {
    InitCondition::Coldstart
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Answers per user.
    pub k: usize,
    /// Users per refit.
    #[serde(default = "default_u")]
    pub u: usize,
    /// Synthetic rows removed per real user, applied at refits.
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "default_n_users")]
    pub n_users: usize,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_condition")]
    pub init_condition: InitCondition,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    /// Size of the recommended candidate set.
    #[serde(default = "default_neighbours")]
    pub k_neighbours: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            k: 30,
            u: default_u(),
            gamma: 0.0,
            n_users: default_n_users(),
            repetitions: default_repetitions(),
            seed: 0,
            init_condition: default_condition(),
            grid_resolution: default_resolution(),
            k_neighbours: default_neighbours(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.k == 0 {
            return fail("k must be at least 1");
        }
        if self.u == 0 {
            return fail("u must be at least 1");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return fail("gamma must be a finite value >= 0");
        }
        if self.n_users == 0 {
            return fail("n_users must be at least 1");
        }
        if self.repetitions == 0 {
            return fail("repetitions must be at least 1");
        }
        if self.grid_resolution < 3 {
            return fail("grid_resolution must be at least 3");
        }
        if self.k_neighbours == 0 {
            return fail("k_neighbours must be at least 1");
        }
        Ok(())
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let cfg: SimulationConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One answered question.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    /// Position of the user in the simulated sequence (0-based).
    pub user_index: usize,
    pub question_id: usize,
    pub value: f64,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    /// `None` when the user had no unanswered question with a known answer.
    pub per_user_rmse: Vec<Option<f64>>,
    pub per_user_cra: Vec<f64>,
    pub interaction_log: Vec<InteractionRecord>,
    /// Voter row index of each simulated user.
    pub user_order: Vec<usize>,
    /// Recommendations from each user's full answers.
    pub full_recommendations: Vec<RecommendationSet>,
    /// Recommendations from each user's imputed answers.
    pub adaptive_recommendations: Vec<RecommendationSet>,
    pub refit_count: usize,
    pub synthetic_after_refit: Vec<usize>,
    pub real_after_refit: Vec<usize>,
    /// Users whose recorded answers ran out before `k` questions.
    pub stopped_early: usize,
}

impl SimulationResult {
    /// `user_index,rmse,cra` with 1-based user indices; an undefined RMSE is an empty cell.
    pub fn curve_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["user_index", "rmse", "cra"])?;
        for (i, (r, c)) in self.per_user_rmse.iter().zip(&self.per_user_cra).enumerate() {
            let rmse = r.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([(i + 1).to_string(), rmse, c.to_string()])?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
    }

    /// Refit number at which the last synthetic row left the training set.
    pub fn replaced_after_refit(&self) -> Option<usize> {
        self.synthetic_after_refit.iter().position(|&n| n == 0).map(|r| r + 1)
    }
}

/// Runs one simulated sequence of users.
///
/// The model serving a user is the one fitted before that user's batch; the
/// batch enters the training set at the next refit, after the synthetic rows
/// due for removal have been dropped.
pub fn run_simulation(
    config: &SimulationConfig,
    voters: &ResponseMatrix,
    candidates: &ResponseMatrix,
    init_data: &ResponseMatrix,
    questionnaire: &Questionnaire,
) -> Result<SimulationResult> {
    config.validate()?;
    let n_q = questionnaire.len();
    for (what, m) in [("voters", voters), ("candidates", candidates), ("init data", init_data)] {
        if m.n_questions() != n_q {
            return Err(Error::Input(format!("{what} have {} questions, questionnaire {n_q}", m.n_questions())));
        }
    }
    if config.k > n_q {
        return Err(Error::Config(format!("k = {} exceeds the {n_q} questions", config.k)));
    }
    if config.n_users > voters.n_rows() {
        return Err(Error::Input(format!(
            "cannot sample {} users without replacement from {} voters",
            config.n_users,
            voters.n_rows()
        )));
    }
    if candidates.is_empty() {
        return Err(Error::Input("no candidates to recommend".into()));
    }
    match (config.init_condition, init_data.is_empty()) {
        (InitCondition::Coldstart, false) => {
            return Err(Error::Config("the coldstart condition takes no initial training data".into()))
        }
        (c, true) if c != InitCondition::Coldstart => {
            return Err(Error::Config(format!("the {c} condition needs initial training data")))
        }
        _ => {}
    }

    let candidate_rows = complete_candidates(candidates);
    let mut order: Vec<usize> = (0..voters.n_rows()).collect();
    order.shuffle(&mut substream(config.seed, "users", &[]));
    order.truncate(config.n_users);

    let mut pool = TrainingPool::new(init_data);
    let mut model = fit_model(&pool.to_matrix(), questionnaire, &mut substream(config.seed, "fit", &[0]));

    let mut result = SimulationResult {
        config: config.clone(),
        per_user_rmse: Vec::with_capacity(config.n_users),
        per_user_cra: Vec::with_capacity(config.n_users),
        interaction_log: Vec::with_capacity(config.n_users * config.k),
        user_order: order.clone(),
        full_recommendations: Vec::with_capacity(config.n_users),
        adaptive_recommendations: Vec::with_capacity(config.n_users),
        refit_count: 0,
        synthetic_after_refit: Vec::new(),
        real_after_refit: Vec::new(),
        stopped_early: 0,
    };
    let mut batch: Vec<(String, Vec<Answer>)> = Vec::with_capacity(config.u);

    for (position, &voter) in order.iter().enumerate() {
        let truth = voters.row(voter);
        let outcome = answer_k_questions(truth, config.k, &model, config.grid_resolution)?;
        result.stopped_early += usize::from(outcome.stopped_early);
        let answered = outcome.state.answered();
        let imputed = impute_at(outcome.state.current_point(), answered, &model);

        let mut mask = vec![false; n_q];
        let mut row: Vec<Answer> = vec![None; n_q];
        for &(q, v) in answered {
            mask[q] = true;
            row[q] = Some(v);
            result.interaction_log.push(InteractionRecord {
                user_index: position,
                question_id: q,
                value: v,
                origin: Origin::Real,
            });
        }
        result.per_user_rmse.push(rmse_imputation(&imputed, truth, &mask));

        // Cells the user never answered fall back to the model's own prediction.
        let full: Vec<f64> = truth.iter().zip(&imputed).map(|(t, p)| t.unwrap_or(*p)).collect();
        let true_set = recommend_candidates(&full, &candidate_rows, config.k_neighbours)?;
        let predicted = recommend_candidates(&imputed, &candidate_rows, config.k_neighbours)?;
        result.per_user_cra.push(cra(&true_set, &predicted)?);
        result.full_recommendations.push(true_set);
        result.adaptive_recommendations.push(predicted);

        batch.push((voters.respondents()[voter].id.clone(), row));
        if batch.len() == config.u {
            let refit = pool.refits() as u64 + 1;
            pool.apply_batch(
                std::mem::take(&mut batch),
                config.gamma,
                config.u,
                &mut substream(config.seed, "removal", &[refit]),
            );
            model = fit_model(&pool.to_matrix(), questionnaire, &mut substream(config.seed, "fit", &[refit]));
            result.refit_count += 1;
            result.synthetic_after_refit.push(pool.synthetic_count());
            result.real_after_refit.push(pool.real_count());
        }
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planted::{PlantedConfig, PlantedWorld};

    fn small_world() -> PlantedWorld {
        PlantedWorld::generate(&PlantedConfig {
            n_questions: 12,
            candidates_per_party: 6,
            n_voters: 80,
            ..PlantedConfig::default()
        })
        .unwrap()
    }

    fn cfg(k: usize, n_users: usize) -> SimulationConfig {
        SimulationConfig {
            k,
            n_users,
            grid_resolution: 31,
            k_neighbours: 5,
            seed: 3,
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn condition_names_round_trip() {
        for c in InitCondition::ALL {
            assert_eq!(c.name().parse::<InitCondition>().unwrap(), c);
        }
        assert!("GPTvoters".parse::<InitCondition>().is_err());
    }

    #[test]
    fn config_from_toml_applies_defaults() {
        let c = SimulationConfig::from_toml("k = 10\ngamma = 0.4\ninit_condition = \"gpt-voters\"\n").unwrap();
        assert_eq!((c.k, c.u, c.n_users, c.repetitions), (10, 5, 1000, 10));
        assert_eq!(c.init_condition, InitCondition::GptVoters);
        assert!(SimulationConfig::from_toml("k = 0").is_err());
        assert!(SimulationConfig::from_toml("k = 3\nbogus = 1").is_err());
    }

    #[test]
    fn coldstart_run_shapes() {
        let w = small_world();
        let r = run_simulation(&cfg(4, 23), &w.voters, &w.candidates, &ResponseMatrix::empty(12), &w.questionnaire).unwrap();
        assert_eq!(r.per_user_rmse.len(), 23);
        assert_eq!(r.per_user_cra.len(), 23);
        assert_eq!(r.interaction_log.len(), 23 * 4);
        assert_eq!(r.refit_count, 4);
        assert_eq!(r.real_after_refit, vec![5, 10, 15, 20]);
        assert!(r.per_user_rmse.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        assert!(r.per_user_cra.iter().all(|v| (0.0..=1.0).contains(v)));
        let mut seen = r.user_order.clone();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 23);
        // No question is asked twice to the same user.
        for u in 0..23 {
            let mut qs: Vec<usize> = r.interaction_log.iter().filter(|i| i.user_index == u).map(|i| i.question_id).collect();
            qs.sort();
            qs.dedup();
            assert_eq!(qs.len(), 4);
        }
    }

    #[test]
    fn zero_gamma_keeps_init_rows() {
        let w = small_world();
        let mut c = cfg(3, 20);
        c.init_condition = InitCondition::Candidates;
        let r = run_simulation(&c, &w.voters, &w.candidates, &w.candidates, &w.questionnaire).unwrap();
        assert!(r.synthetic_after_refit.iter().all(|&n| n == w.candidates.n_rows()));
        assert_eq!(r.replaced_after_refit(), None);
    }

    #[test]
    fn large_gamma_replaces_on_first_refit() {
        let w = small_world();
        let mut c = cfg(3, 10);
        c.init_condition = InitCondition::Candidates;
        c.gamma = 100.0;
        let r = run_simulation(&c, &w.voters, &w.candidates, &w.candidates, &w.questionnaire).unwrap();
        assert_eq!(r.synthetic_after_refit, vec![0, 0]);
        assert_eq!(r.replaced_after_refit(), Some(1));
    }

    #[test]
    fn full_knowledge_gives_perfect_recommendations() {
        let w = small_world();
        let r = run_simulation(&cfg(12, 6), &w.voters, &w.candidates, &ResponseMatrix::empty(12), &w.questionnaire).unwrap();
        assert!(r.per_user_rmse.iter().all(Option::is_none));
        assert!(r.per_user_cra.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = small_world();
        let empty = ResponseMatrix::empty(12);
        let run = |c: &SimulationConfig, init: &ResponseMatrix| run_simulation(c, &w.voters, &w.candidates, init, &w.questionnaire);
        assert!(matches!(run(&cfg(13, 5), &empty), Err(Error::Config(_))));
        assert!(matches!(run(&cfg(3, 81), &empty), Err(Error::Input(_))));
        assert!(matches!(run(&cfg(3, 5), &w.candidates), Err(Error::Config(_))));
        let mut c = cfg(3, 5);
        c.init_condition = InitCondition::GptVoters;
        assert!(matches!(run(&c, &empty), Err(Error::Config(_))));
    }

    #[test]
    fn identical_seeds_give_identical_bytes() {
        let w = small_world();
        let run = || {
            let r = run_simulation(&cfg(4, 15), &w.voters, &w.candidates, &ResponseMatrix::empty(12), &w.questionnaire).unwrap();
            (serde_json::to_string(&r).unwrap(), r.curve_csv().unwrap())
        };
        assert_eq!(run(), run());
    }
}
