use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{full_replacement_users, run_simulation, InitCondition, InteractionRecord, SimulationConfig, SimulationResult};
use crate::error::{Error, Result};
use crate::metrics::{break_even, query_overlap, BreakEvenReport, MetricKind, DEFAULT_PERSISTENCE, DEFAULT_SMOOTHING_WINDOW};
use crate::seed::derive_seed;
use crate::survey::{Questionnaire, ResponseMatrix};

/// Pre-training datasets for the non-coldstart conditions.
#[derive(Debug, Clone, Default)]
pub struct SyntheticBundle {
    pub gpt: Option<ResponseMatrix>,
    pub gpt_means: Option<ResponseMatrix>,
    pub gpt_voters: Option<ResponseMatrix>,
}

impl SyntheticBundle {
    fn init_for(&self, condition: InitCondition, candidates: &ResponseMatrix) -> Result<ResponseMatrix> {
        let member = match condition {
            InitCondition::Coldstart => return Ok(ResponseMatrix::empty(candidates.n_questions())),
            InitCondition::Candidates => return Ok(candidates.clone()),
            InitCondition::Gpt => &self.gpt,
            InitCondition::GptMeans => &self.gpt_means,
            InitCondition::GptVoters => &self.gpt_voters,
        };
        member
            .clone()
            .ok_or_else(|| Error::Config(format!("no training data supplied for the {condition} condition")))
    }
}

/// Averaged curves of one condition across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCurves {
    pub condition: InitCondition,
    pub mean_rmse: Vec<Option<f64>>,
    pub mean_cra: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub runs: Vec<SimulationResult>,
}

impl ConditionCurves {
    fn from_runs(condition: InitCondition, seeds: Vec<u64>, runs: Vec<SimulationResult>) -> Self {
        let (mean_rmse, mean_cra) = mean_curve(&runs);
        Self {
            condition,
            mean_rmse,
            mean_cra,
            seeds,
            runs,
        }
    }

    /// Mean RMSE over users `from..to` (0-based, exclusive end), skipping undefined entries.
    pub fn rmse_between(&self, from: usize, to: usize) -> Option<f64> {
        let vals: Vec<f64> = self.mean_rmse[from..to.min(self.mean_rmse.len())].iter().flatten().copied().collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Per-user means across runs; a user's RMSE is averaged over the runs where it is defined.
pub fn mean_curve(runs: &[SimulationResult]) -> (Vec<Option<f64>>, Vec<f64>) {
    let n = runs.first().map_or(0, |r| r.per_user_cra.len());
    let rmse = (0..n)
        .map(|i| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.per_user_rmse[i]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let cra = (0..n)
        .map(|i| runs.iter().map(|r| r.per_user_cra[i]).sum::<f64>() / runs.len() as f64)
        .collect();
    (rmse, cra)
}

fn dense(curve: &[Option<f64>]) -> Option<Vec<f64>> {
    curve.iter().copied().collect()
}

fn repetition_seeds(base: &SimulationConfig) -> Vec<u64> {
    (0..base.repetitions as u64).map(|r| derive_seed(base.seed, "repetition", &[r])).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionBreakEven {
    pub condition: InitCondition,
    pub rmse: Option<BreakEvenReport>,
    pub cra: BreakEvenReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: SimulationConfig,
    pub conditions: Vec<ConditionCurves>,
    /// Break-even of the coldstart curves against every other condition; empty without a coldstart run.
    pub break_even: Vec<ConditionBreakEven>,
}

impl ComparisonReport {
    pub fn condition(&self, c: InitCondition) -> Option<&ConditionCurves> {
        self.conditions.iter().find(|x| x.condition == c)
    }
}

fn run_conditions(
    base: &SimulationConfig,
    conditions: &[InitCondition],
    voters: &ResponseMatrix,
    candidates: &ResponseMatrix,
    bundle: &SyntheticBundle,
    questionnaire: &Questionnaire,
) -> Result<Vec<ConditionCurves>> {
    base.validate()?;
    let inits: Vec<ResponseMatrix> = conditions
        .iter()
        .map(|&c| bundle.init_for(c, candidates))
        .collect::<Result<_>>()?;
    let seeds = repetition_seeds(base);
    let jobs: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..seeds.len()).map(move |r| (c, r)))
        .collect();
    // Every condition reuses the same per-repetition seed, so user orders are paired.
    let runs: Vec<SimulationResult> = jobs
        .par_iter()
        .map(|&(c, r)| {
            let cfg = SimulationConfig {
                init_condition: conditions[c],
                seed: seeds[r],
                ..base.clone()
            };
            run_simulation(&cfg, voters, candidates, &inits[c], questionnaire)
        })
        .collect::<Result<_>>()?;
    let mut runs = runs.into_iter();
    Ok(conditions
        .iter()
        .map(|&c| ConditionCurves::from_runs(c, seeds.clone(), runs.by_ref().take(seeds.len()).collect()))
        .collect())
}

fn paired_break_even(cold: &ConditionCurves, other: &ConditionCurves) -> Result<ConditionBreakEven> {
    let rmse = match (dense(&cold.mean_rmse), dense(&other.mean_rmse)) {
        (Some(a), Some(b)) => Some(break_even(&a, &b, MetricKind::Rmse, DEFAULT_SMOOTHING_WINDOW, DEFAULT_PERSISTENCE)?),
        _ => None,
    };
    let cra = break_even(&cold.mean_cra, &other.mean_cra, MetricKind::Cra, DEFAULT_SMOOTHING_WINDOW, DEFAULT_PERSISTENCE)?;
    Ok(ConditionBreakEven {
        condition: other.condition,
        rmse,
        cra,
    })
}

/// Runs every requested condition `repetitions` times with shared per-repetition seeds.
pub fn compare_conditions(
    base: &SimulationConfig,
    conditions: &[InitCondition],
    voters: &ResponseMatrix,
    candidates: &ResponseMatrix,
    bundle: &SyntheticBundle,
    questionnaire: &Questionnaire,
) -> Result<ComparisonReport> {
    let curves = run_conditions(base, conditions, voters, candidates, bundle, questionnaire)?;
    let break_even = match curves.iter().find(|c| c.condition == InitCondition::Coldstart) {
        Some(cold) => curves
            .iter()
            .filter(|c| c.condition != InitCondition::Coldstart)
            .map(|c| paired_break_even(cold, c))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    Ok(ComparisonReport {
        config: base.clone(),
        conditions: curves,
        break_even,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub n_rmse: Option<usize>,
    pub n_cra: Option<usize>,
}

/// Break-even points of coldstart against `pretrained` for each `k`.
pub fn sweep_k(
    base: &SimulationConfig,
    ks: &[usize],
    pretrained: InitCondition,
    voters: &ResponseMatrix,
    candidates: &ResponseMatrix,
    bundle: &SyntheticBundle,
    questionnaire: &Questionnaire,
) -> Result<Vec<SweepRow>> {
    if pretrained == InitCondition::Coldstart {
        return Err(Error::Config("the sweep compares coldstart with a pre-trained condition".into()));
    }
    ks.iter()
        .map(|&k| {
            let cfg = SimulationConfig { k, ..base.clone() };
            let curves = run_conditions(&cfg, &[InitCondition::Coldstart, pretrained], voters, candidates, bundle, questionnaire)?;
            let be = paired_break_even(&curves[0], &curves[1])?;
            Ok(SweepRow {
                k,
                n_rmse: be.rmse.and_then(|r| r.n),
                n_cra: be.cra.n,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementRow {
    pub gamma: f64,
    /// Users after which no synthetic row is left, `None` when never within the run.
    pub replaced_after_users: Option<usize>,
    /// The same figure from the closed form, independent of the run length.
    pub expected_replacement_users: Option<usize>,
    /// Mean fraction of identical (user, question) pairs with the coldstart run.
    pub overlap_all: f64,
    /// The same, restricted to users served after full replacement.
    pub overlap_after_replacement: Option<f64>,
    pub curves: ConditionCurves,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplacementReport {
    pub config: SimulationConfig,
    pub coldstart: ConditionCurves,
    pub rows: Vec<ReplacementRow>,
}

fn overlap_from(a: &[InteractionRecord], b: &[InteractionRecord], first_user: usize) -> Result<f64> {
    let tail = |log: &[InteractionRecord]| -> Vec<InteractionRecord> {
        log.iter().filter(|r| r.user_index >= first_user).copied().collect()
    };
    query_overlap(&tail(a), &tail(b))
}

/// GPT-initialised runs for every `gamma`, compared with a coldstart reference.
pub fn replacement_study(
    base: &SimulationConfig,
    gammas: &[f64],
    voters: &ResponseMatrix,
    candidates: &ResponseMatrix,
    gpt: &ResponseMatrix,
    questionnaire: &Questionnaire,
) -> Result<ReplacementReport> {
    if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0)) {
        return Err(Error::Config(format!("gamma must be >= 0, got {g}")));
    }
    let bundle = SyntheticBundle {
        gpt: Some(gpt.clone()),
        ..SyntheticBundle::default()
    };
    let coldstart = run_conditions(base, &[InitCondition::Coldstart], voters, candidates, &bundle, questionnaire)?.remove(0);
    let rows = gammas
        .iter()
        .map(|&gamma| {
            let cfg = SimulationConfig { gamma, ..base.clone() };
            let curves = run_conditions(&cfg, &[InitCondition::Gpt], voters, candidates, &bundle, questionnaire)?.remove(0);
            let replaced_after_users = curves.runs[0].replaced_after_refit().map(|r| r * base.u);
            let pairs = curves.runs.iter().zip(&coldstart.runs);
            let overlap_all = pairs
                .clone()
                .map(|(g, c)| query_overlap(&g.interaction_log, &c.interaction_log))
                .sum::<Result<f64>>()?
                / curves.runs.len() as f64;
            let overlap_after_replacement = match replaced_after_users {
                Some(n) if n < base.n_users => Some(
                    pairs
                        .map(|(g, c)| overlap_from(&g.interaction_log, &c.interaction_log, n))
                        .sum::<Result<f64>>()?
                        / curves.runs.len() as f64,
                ),
                _ => None,
            };
            Ok(ReplacementRow {
                gamma,
                replaced_after_users,
                expected_replacement_users: full_replacement_users(gpt.n_rows(), gamma, base.u),
                overlap_all,
                overlap_after_replacement,
                curves,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ReplacementReport {
        config: base.clone(),
        coldstart,
        rows,
    })
}
