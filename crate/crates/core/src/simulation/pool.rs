use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::seed::SeededRng;
use crate::survey::{Answer, Respondent, RespondentKind, ResponseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Real,
    Synthetic,
}

/// Slack for floating-point products such as `0.4 * 5 * r`.
const FLOOR_EPS: f64 = 1e-9;

/// Training rows tagged by origin, with the replacement bookkeeping.
///
/// At refit `r` the cumulative number of synthetic rows due for removal is
/// `floor(r * gamma * U)`; fractional remainders therefore carry over between
/// refits.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPool {
    n_questions: usize,
    rows: Vec<(String, Vec<Answer>, Origin)>,
    refits: usize,
    removal_due: usize,
}

impl TrainingPool {
    /// A pool whose initial rows are all subject to replacement.
    pub fn new(init: &ResponseMatrix) -> Self {
        Self {
            n_questions: init.n_questions(),
            rows: init
                .respondents()
                .iter()
                .zip(init.rows())
                .map(|(r, row)| (r.id.clone(), row.clone(), Origin::Synthetic))
                .collect(),
            refits: 0,
            removal_due: 0,
        }
    }

    pub fn synthetic_count(&self) -> usize {
        self.rows.iter().filter(|r| r.2 == Origin::Synthetic).count()
    }

    pub fn real_count(&self) -> usize {
        self.rows.iter().filter(|r| r.2 == Origin::Real).count()
    }

    pub fn refits(&self) -> usize {
        self.refits
    }

    /// Removes the synthetic rows due at the next refit and appends `batch` as real rows.
    ///
    /// Returns the number of synthetic rows removed.
    pub fn apply_batch(&mut self, batch: Vec<(String, Vec<Answer>)>, gamma: f64, u: usize, rng: &mut SeededRng) -> usize {
        self.refits += 1;
        let due_total = ((self.refits * u) as f64 * gamma + FLOOR_EPS).floor() as usize;
        let due_now = due_total - self.removal_due;
        self.removal_due = due_total;

        let synthetic: Vec<usize> = (0..self.rows.len()).filter(|&i| self.rows[i].2 == Origin::Synthetic).collect();
        let n_remove = due_now.min(synthetic.len());
        if n_remove > 0 {
            let mut drop = vec![false; self.rows.len()];
            for pick in sample(rng, synthetic.len(), n_remove) {
                drop[synthetic[pick]] = true;
            }
            let mut i = 0;
            self.rows.retain(|_| {
                let keep = !drop[i];
                i += 1;
                keep
            });
        }
        self.rows.extend(batch.into_iter().map(|(id, row)| (id, row, Origin::Real)));
        n_remove
    }

    pub fn to_matrix(&self) -> ResponseMatrix {
        let mut m = ResponseMatrix::empty(self.n_questions);
        for (id, row, origin) in &self.rows {
            let kind = match origin {
                Origin::Real => RespondentKind::Voter,
                Origin::Synthetic => RespondentKind::Synthetic,
            };
            m.push(
                Respondent {
                    id: id.clone(),
                    kind,
                    party: None,
                },
                row.clone(),
            )
            .expect("pool rows are validated on entry");
        }
        m
    }

    /// Rows with their origin, in pool order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, &[Answer], Origin)> {
        self.rows.iter().map(|(id, row, o)| (id.as_str(), row.as_slice(), *o))
    }
}

/// Users after which an initial pool of `init_size` rows has been fully replaced.
///
/// Replacement happens at refit boundaries, so the answer is a multiple of `u`;
/// `None` when `gamma * u` rounds to no removal at all.
pub fn full_replacement_users(init_size: usize, gamma: f64, u: usize) -> Option<usize> {
    if init_size == 0 {
        return Some(0);
    }
    let per_refit = gamma * u as f64;
    if !(per_refit > 0.0) {
        return None;
    }
    let mut r = ((init_size as f64 / per_refit).floor() as usize).max(1);
    if r > 1 {
        r -= 1;
    }
    while (((r * u) as f64 * gamma + FLOOR_EPS).floor() as usize) < init_size {
        r += 1;
    }
    Some(r * u)
}
