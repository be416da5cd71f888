//! Evaluation metrics for imputation, recommendation and synthetic-data quality.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::latent::LatentPoint;
use crate::simulation::InteractionRecord;
use crate::survey::{Answer, PartyMean, ResponseMatrix};

/// Number of recommended candidates (the National Council seats of Zurich).
pub const DEFAULT_K_NEIGHBOURS: usize = 36;
pub const DEFAULT_SMOOTHING_WINDOW: usize = 50;
pub const DEFAULT_PERSISTENCE: usize = 20;

/// Root mean squared error over unanswered positions with a known truth.
///
/// Returns `None` when no position can be evaluated.
pub fn rmse_imputation(imputed: &[f64], truth: &[Answer], answered: &[bool]) -> Option<f64> {
    let (sum, n) = imputed
        .iter()
        .zip(truth)
        .zip(answered)
        .filter(|(_, &asked)| !asked)
        .filter_map(|((p, t), _)| t.map(|t| (p - t).powi(2)))
        .fold((0.0, 0usize), |(s, n), e| (s + e, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMetric {
    Manhattan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationSet {
    /// Candidate row indices, ordered by ascending distance.
    pub candidates: Vec<usize>,
    pub k: usize,
    pub metric: DistanceMetric,
    /// Set when `k` exceeded the candidate pool.
    pub truncated: bool,
}

/// Manhattan distance between two complete vectors.
pub fn manhattan(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Candidate rows with every gap filled by its column mean, as kNN requires complete rows.
pub fn complete_candidates(candidates: &ResponseMatrix) -> Vec<Vec<f64>> {
    candidates.mean_imputed()
}

/// `(row index, distance)` pairs of the `k` nearest candidates by Manhattan distance.
///
/// Ties are broken by lower row index.
pub fn nearest_candidates(answers: &[f64], candidates: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (i, manhattan(answers, c)))
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub fn recommend_candidates(answers: &[f64], candidates: &[Vec<f64>], k: usize) -> Result<RecommendationSet> {
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    Ok(RecommendationSet {
        candidates: nearest_candidates(answers, candidates, k).into_iter().map(|(i, _)| i).collect(),
        k,
        metric: DistanceMetric::Manhattan,
        truncated: k > candidates.len(),
    })
}

/// Candidate recommendation accuracy: `|true ∩ predicted| / k`.
pub fn cra(true_set: &RecommendationSet, predicted: &RecommendationSet) -> Result<f64> {
    if true_set.k != predicted.k || true_set.metric != predicted.metric {
        return Err(Error::Input(format!(
            "recommendation sets built with k={} and k={}",
            true_set.k, predicted.k
        )));
    }
    let truth: HashSet<usize> = true_set.candidates.iter().copied().collect();
    let hits = predicted.candidates.iter().filter(|c| truth.contains(c)).count();
    let denom = true_set.candidates.len().max(1);
    Ok(hits as f64 / denom as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// Lower is better.
    Rmse,
    /// Higher is better.
    Cra,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakEvenReport {
    pub metric: MetricKind,
    /// 1-based user index, `None` when the curves never meet within the horizon.
    pub n: Option<usize>,
    pub window: usize,
    pub persistence: usize,
}

/// Trailing moving average; the first `window - 1` entries average the available prefix.
pub fn trailing_mean(curve: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(curve.len());
    let mut sum = 0.0;
    for (i, v) in curve.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= curve[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// First user from which the smoothed cold-start curve matches the pre-trained
/// one for `persistence` consecutive users.
pub fn break_even(
    coldstart: &[f64],
    pretrained: &[f64],
    metric: MetricKind,
    window: usize,
    persistence: usize,
) -> Result<BreakEvenReport> {
    if coldstart.len() != pretrained.len() {
        return Err(Error::Input("break-even curves differ in length".into()));
    }
    if window == 0 || persistence == 0 {
        return Err(Error::Input("window and persistence must be at least 1".into()));
    }
    let cs = trailing_mean(coldstart, window);
    let pt = trailing_mean(pretrained, window);
    let caught_up: Vec<bool> = cs
        .iter()
        .zip(&pt)
        .map(|(c, p)| match metric {
            MetricKind::Rmse => c <= p,
            MetricKind::Cra => c >= p,
        })
        .collect();
    let mut run = 0;
    let mut n = None;
    for (i, &ok) in caught_up.iter().enumerate() {
        run = if ok { run + 1 } else { 0 };
        if run == persistence {
            n = Some(i + 2 - persistence);
            break;
        }
    }
    Ok(BreakEvenReport {
        metric,
        n,
        window,
        persistence,
    })
}

/// Distance of a latent position from the origin.
pub fn extremity(point: LatentPoint) -> f64 {
    point.norm()
}

/// Mean over users of (average extremity of full-information recommendations −
/// average extremity of the K-question recommendations).
pub fn extremity_bias(candidate_extremity: &[f64], full: &[RecommendationSet], partial: &[RecommendationSet]) -> Result<f64> {
    if full.len() != partial.len() || full.is_empty() {
        return Err(Error::Input("need one full and one partial recommendation set per user".into()));
    }
    let avg = |s: &RecommendationSet| -> f64 {
        s.candidates.iter().map(|&c| candidate_extremity[c]).sum::<f64>() / s.candidates.len().max(1) as f64
    };
    Ok(full.iter().zip(partial).map(|(f, p)| avg(f) - avg(p)).sum::<f64>() / full.len() as f64)
}

/// Fraction of `(user, question)` pairs of `a` that also occur in `b`.
pub fn query_overlap(a: &[InteractionRecord], b: &[InteractionRecord]) -> Result<f64> {
    let pairs = |log: &[InteractionRecord]| -> HashSet<(usize, usize)> {
        log.iter().map(|r| (r.user_index, r.question_id)).collect()
    };
    let (pa, pb) = (pairs(a), pairs(b));
    if pa.len() != pb.len() {
        return Err(Error::Input(format!("interaction logs differ in size ({} vs {})", pa.len(), pb.len())));
    }
    if pa.is_empty() {
        return Ok(1.0);
    }
    Ok(pa.intersection(&pb).count() as f64 / pa.len() as f64)
}

/// Root mean squared per-question difference between a sample and a party mean.
pub fn distance_to_party_mean(sample: &[f64], mean: &[f64]) -> Result<f64> {
    if sample.len() != mean.len() || sample.is_empty() {
        return Err(Error::Input(format!("length mismatch: {} vs {}", sample.len(), mean.len())));
    }
    Ok((sample.iter().zip(mean).map(|(s, m)| (s - m).powi(2)).sum::<f64>() / sample.len() as f64).sqrt())
}

/// Same as [`distance_to_party_mean`] but skipping cells missing in either vector.
pub fn distance_to_party_mean_partial(sample: &[Answer], mean: &[Answer]) -> Option<f64> {
    let (sum, n) = sample
        .iter()
        .zip(mean)
        .filter_map(|(s, m)| Some((s.as_ref()? - m.as_ref()?).powi(2)))
        .fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchResult {
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for `mean(a) < mean(b)`.
    pub p_less: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t statistic.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Input("Welch's t-test needs at least two samples per group".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if !(se2 > 0.0) {
        return Err(Error::Input("both groups have zero variance".into()));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    Ok((t, df))
}

pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    let (t, df) = welch_t(a, b)?;
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Input(e.to_string()))?;
    Ok(WelchResult { t, df, p_less: dist.cdf(t) })
}

/// Fraction of questions whose synthetic mean lies within one standard
/// deviation of the party mean.
pub fn one_sigma_coverage(synthetic_mean: &[f64], party_mean: &[f64], party_std: &[f64]) -> Result<f64> {
    if synthetic_mean.len() != party_mean.len() || party_mean.len() != party_std.len() || party_mean.is_empty() {
        return Err(Error::Input("coverage vectors differ in length".into()));
    }
    let inside = synthetic_mean
        .iter()
        .zip(party_mean)
        .zip(party_std)
        .filter(|((g, m), s)| (*g - *m).abs() <= **s)
        .count();
    Ok(inside as f64 / party_mean.len() as f64)
}

/// Row-normalized confusion between the party a row is labelled with and the
/// party whose reference mean lies nearest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub parties: Vec<String>,
    /// `fractions[p][r]`: share of party-`p` rows nearest to party `r`'s mean.
    pub fractions: Vec<Vec<f64>>,
    pub counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(std::iter::once("party").chain(self.parties.iter().map(String::as_str)))?;
        for (p, row) in self.parties.iter().zip(&self.fractions) {
            w.write_record(std::iter::once(p.clone()).chain(row.iter().map(|f| format!("{f}"))))?;
        }
        Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
    }
}

pub fn nearest_party_confusion(rows: &ResponseMatrix, reference: &[PartyMean]) -> Result<ConfusionMatrix> {
    let means: Vec<Vec<f64>> = reference.iter().map(PartyMean::complete_mean).collect::<Result<_>>()?;
    let parties: Vec<String> = reference.iter().map(|m| m.party.clone()).collect();
    let mut counts = vec![0usize; parties.len()];
    let mut tallies = vec![vec![0usize; parties.len()]; parties.len()];
    for (r, row) in rows.respondents().iter().zip(rows.rows()) {
        let Some(p) = r.party.as_ref().and_then(|p| parties.iter().position(|x| x == p)) else {
            continue;
        };
        let mut best: Option<(usize, f64)> = None;
        for (j, m) in means.iter().enumerate() {
            let as_answers: Vec<Answer> = m.iter().copied().map(Some).collect();
            let Some(d) = distance_to_party_mean_partial(row, &as_answers) else {
                continue;
            };
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        if let Some((j, _)) = best {
            counts[p] += 1;
            tallies[p][j] += 1;
        }
    }
    let fractions = tallies
        .iter()
        .zip(&counts)
        .map(|(row, &n)| row.iter().map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 }).collect())
        .collect();
    Ok(ConfusionMatrix {
        parties,
        fractions,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::Origin;
    use crate::survey::{Respondent, RespondentKind};
    use proptest::prelude::*;

    fn set(ids: &[usize], k: usize) -> RecommendationSet {
        RecommendationSet {
            candidates: ids.to_vec(),
            k,
            metric: DistanceMetric::Manhattan,
            truncated: false,
        }
    }

    fn rec(user: usize, q: usize) -> InteractionRecord {
        InteractionRecord {
            user_index: user,
            question_id: q,
            value: 0.5,
            origin: Origin::Real,
        }
    }

    #[test]
    fn rmse_examples() {
        let truth = [Some(0.0), Some(1.0), Some(0.4)];
        assert_eq!(rmse_imputation(&[0.0, 1.0, 0.4], &truth, &[false; 3]), Some(0.0));
        assert_eq!(rmse_imputation(&[0.5, 0.5], &[Some(0.0), Some(1.0)], &[false, false]), Some(0.5));
        assert_eq!(rmse_imputation(&[0.5, 0.5], &[Some(0.0), None], &[false, false]), Some(0.5));
        assert_eq!(rmse_imputation(&[0.5, 0.5], &[Some(0.0), Some(1.0)], &[true, true]), None);
    }

    #[test]
    fn knn_examples() {
        let pool = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let r = recommend_candidates(&[0.1, 0.0], &pool, 1).unwrap();
        assert_eq!(r.candidates, vec![0]);
        assert_eq!(recommend_candidates(&[1.0, 1.0], &pool, 1).unwrap().candidates, vec![1]);
        let all = recommend_candidates(&[0.4, 0.4], &pool, 2).unwrap();
        assert_eq!(all.candidates, vec![0, 1]);
        let over = recommend_candidates(&[0.4, 0.4], &pool, 5).unwrap();
        assert!(over.truncated);
        assert_eq!(over.candidates.len(), 2);
        // Equal distances: lower index first.
        assert_eq!(recommend_candidates(&[0.5, 0.5], &pool, 1).unwrap().candidates, vec![0]);
    }

    #[test]
    fn cra_examples() {
        assert_eq!(cra(&set(&[1, 2, 3], 3), &set(&[3, 2, 1], 3)).unwrap(), 1.0);
        assert_eq!(cra(&set(&[1, 2], 2), &set(&[3, 4], 2)).unwrap(), 0.0);
        let a: Vec<usize> = (0..36).collect();
        let b: Vec<usize> = (18..54).collect();
        assert_eq!(cra(&set(&a, 36), &set(&b, 36)).unwrap(), 0.5);
        assert!(cra(&set(&[1], 1), &set(&[1, 2], 2)).is_err());
    }

    #[test]
    fn break_even_examples() {
        let low = vec![0.2; 100];
        let high = vec![0.3; 100];
        let r = break_even(&low, &high, MetricKind::Rmse, 50, 20).unwrap();
        assert_eq!(r.n, Some(1));
        assert_eq!(break_even(&high, &low, MetricKind::Rmse, 50, 20).unwrap().n, None);
        assert_eq!(break_even(&high, &low, MetricKind::Cra, 50, 20).unwrap().n, Some(1));

        // A step crossing at user 31 with no smoothing.
        let cold: Vec<f64> = (0..100).map(|i| if i < 30 { 0.5 } else { 0.1 }).collect();
        let pre = vec![0.3; 100];
        assert_eq!(break_even(&cold, &pre, MetricKind::Rmse, 1, 5).unwrap().n, Some(31));
    }

    proptest! {
        #[test]
        fn break_even_monotone_in_persistence(
            cold in proptest::collection::vec(0.0f64..1.0, 60),
            pre in proptest::collection::vec(0.0f64..1.0, 60),
            window in 1usize..10,
            p in 1usize..15,
        ) {
            let a = break_even(&cold, &pre, MetricKind::Rmse, window, p).unwrap().n;
            let b = break_even(&cold, &pre, MetricKind::Rmse, window, p + 1).unwrap().n;
            match (a, b) {
                (None, Some(_)) => prop_assert!(false, "larger persistence found a crossing"),
                (Some(x), Some(y)) => prop_assert!(y >= x),
                _ => {}
            }
        }

        #[test]
        fn rmse_and_cra_permutation_invariant(
            vals in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, any::<bool>()), 2..20),
            seed in any::<u64>(),
        ) {
            let imputed: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let truth: Vec<Answer> = vals.iter().map(|v| Some(v.1)).collect();
            let mask: Vec<bool> = vals.iter().map(|v| v.2).collect();
            let mut perm: Vec<usize> = (0..vals.len()).collect();
            use rand::{seq::SliceRandom, SeedableRng};
            perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let pi: Vec<f64> = perm.iter().map(|&i| imputed[i]).collect();
            let pt: Vec<Answer> = perm.iter().map(|&i| truth[i]).collect();
            let pm: Vec<bool> = perm.iter().map(|&i| mask[i]).collect();
            let a = rmse_imputation(&imputed, &truth, &mask);
            let b = rmse_imputation(&pi, &pt, &pm);
            match (a, b) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
            // Permuting question order of both the query and the candidate pool keeps the kNN set.
            let pool: Vec<Vec<f64>> = (0..5).map(|c| imputed.iter().map(|x| (x + c as f64 * 0.17) % 1.0).collect()).collect();
            let ppool: Vec<Vec<f64>> = pool.iter().map(|row| perm.iter().map(|&i| row[i]).collect()).collect();
            let query: Vec<f64> = truth.iter().map(|t| t.unwrap()).collect();
            let pquery: Vec<f64> = perm.iter().map(|&i| query[i]).collect();
            let s1 = recommend_candidates(&query, &pool, 2).unwrap();
            let s2 = recommend_candidates(&pquery, &ppool, 2).unwrap();
            let mut a1 = s1.candidates.clone();
            let mut a2 = s2.candidates.clone();
            a1.sort_unstable();
            a2.sort_unstable();
            // Float summation order may flip exact ties; only compare when distances are distinct.
            let d: Vec<f64> = pool.iter().map(|c| manhattan(&query, c)).collect();
            let mut sorted = d.clone();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).all(|w| w[1] - w[0] > 1e-9) {
                prop_assert_eq!(a1, a2);
            }
        }
    }

    #[test]
    fn extremity_examples() {
        assert_eq!(extremity(LatentPoint::ORIGIN), 0.0);
        assert_eq!(extremity(LatentPoint::new(3.0, 4.0)), 5.0);
        let pts = [LatentPoint::new(1.0, 2.0), LatentPoint::new(-0.5, 0.1), LatentPoint::new(2.0, -2.0)];
        let order = |c: f64| {
            let mut idx: Vec<usize> = (0..3).collect();
            idx.sort_by(|&a, &b| extremity(LatentPoint::new(pts[a].x * c, pts[a].y * c)).total_cmp(&extremity(LatentPoint::new(pts[b].x * c, pts[b].y * c))));
            idx
        };
        assert_eq!(order(1.0), order(7.5));
        assert!((extremity(LatentPoint::new(6.0, 8.0)) - 2.0 * 5.0).abs() < 1e-12);
    }

    #[test]
    fn extremity_bias_sign() {
        let ext = [0.0, 1.0, 2.0, 3.0];
        let same = extremity_bias(&ext, &[set(&[2, 3], 2)], &[set(&[3, 2], 2)]).unwrap();
        assert_eq!(same, 0.0);
        let moderate = extremity_bias(&ext, &[set(&[2, 3], 2)], &[set(&[0, 1], 2)]).unwrap();
        assert!(moderate > 0.0);
    }

    #[test]
    fn overlap_examples() {
        let a = vec![rec(0, 1), rec(0, 2), rec(1, 0)];
        assert_eq!(query_overlap(&a, &a).unwrap(), 1.0);
        let b = vec![rec(0, 3), rec(0, 4), rec(1, 5)];
        assert_eq!(query_overlap(&a, &b).unwrap(), 0.0);
        let c = vec![rec(0, 1), rec(0, 4), rec(1, 0)];
        assert_eq!(query_overlap(&a, &c).unwrap(), query_overlap(&c, &a).unwrap());
        assert!(query_overlap(&a, &a[..2]).is_err());
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_to_party_mean(&[0.3, 0.6], &[0.3, 0.6]).unwrap(), 0.0);
        let d = distance_to_party_mean(&[0.5, 0.7, 0.2], &[0.3, 0.5, 0.0]).unwrap();
        assert!((d - 0.2).abs() < 1e-12);
        assert!(distance_to_party_mean(&[0.1], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn welch_examples() {
        let a = [0.1, 0.5, 0.3, 0.9];
        let r = welch_t_test(&a, &a).unwrap();
        assert_eq!(r.t, 0.0);
        assert!((r.p_less - 0.5).abs() < 1e-12);
        let lo = [0.0, 1e-3, -1e-3, 2e-3];
        let hi = [1.0, 1.001, 0.999, 1.002];
        assert!(welch_t_test(&lo, &hi).unwrap().p_less < 1e-6);
        assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
        assert!(welch_t_test(&[1.0], &[2.0, 3.0]).is_err());
    }

    #[test]
    fn coverage_examples() {
        let m = [0.2, 0.4, 0.6];
        let s = [0.05, 0.05, 0.05];
        assert_eq!(one_sigma_coverage(&m, &m, &s).unwrap(), 1.0);
        assert_eq!(one_sigma_coverage(&[0.9, 0.9, 0.0], &m, &s).unwrap(), 0.0);
        assert!((one_sigma_coverage(&[0.24, 0.9, 0.6], &m, &s).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn confusion_identity_and_rows_sum() {
        let means = vec![
            PartyMean { party: "A".into(), mean: vec![Some(0.1), Some(0.2)], per_question_std: vec![Some(0.0); 2], count: 1 },
            PartyMean { party: "B".into(), mean: vec![Some(0.9), Some(0.7)], per_question_std: vec![Some(0.0); 2], count: 1 },
            PartyMean { party: "C".into(), mean: vec![Some(0.5), Some(0.5)], per_question_std: vec![Some(0.0); 2], count: 1 },
        ];
        let mut m = ResponseMatrix::empty(2);
        for pm in &means {
            m.push(Respondent { id: pm.party.clone(), kind: RespondentKind::Synthetic, party: Some(pm.party.clone()) }, pm.mean.clone()).unwrap();
        }
        let c = nearest_party_confusion(&m, &means).unwrap();
        for (i, row) in c.fractions.iter().enumerate() {
            for (j, f) in row.iter().enumerate() {
                assert_eq!(*f, if i == j { 1.0 } else { 0.0 });
            }
        }
        m.push(Respondent { id: "x".into(), kind: RespondentKind::Synthetic, party: Some("A".into()) }, vec![Some(0.55), Some(0.5)]).unwrap();
        let c = nearest_party_confusion(&m, &means).unwrap();
        assert_eq!(c.fractions[0], vec![0.5, 0.0, 0.5]);
        for row in &c.fractions {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(c.to_csv().unwrap().starts_with("party,A,B,C\n"));
    }
}
