//! Datasets derived from the LLM samples: per-party means, party vertices and
//! Dirichlet-interpolated synthetic voters.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::generate::SyntheticSample;
use crate::error::{Error, Result};
use crate::seed::substream;
use crate::survey::{party_means, PartyMean, PartyResults, Respondent, RespondentKind, ResponseMatrix};

/// Per-party mean of the samples; one synthetic row per party in first-appearance order.
pub fn gpt_means(samples: &[SyntheticSample]) -> Result<ResponseMatrix> {
    let n_q = samples
        .first()
        .map(|s| s.answers.len())
        .ok_or_else(|| Error::Input("no samples".into()))?;
    let matrix = super::generate::samples_to_matrix(samples, n_q)?;
    means_to_matrix(&party_means(&matrix)?)
}

/// One synthetic row per party mean, labelled with the party.
pub fn means_to_matrix(means: &[PartyMean]) -> Result<ResponseMatrix> {
    let n_q = means.first().map_or(0, |m| m.mean.len());
    let mut out = ResponseMatrix::empty(n_q);
    for m in means {
        out.push(
            Respondent {
                id: m.party.clone(),
                kind: RespondentKind::Synthetic,
                party: Some(m.party.clone()),
            },
            m.mean.clone(),
        )?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyVertex {
    pub party: String,
    pub vertex: Vec<f64>,
}

/// Box-constrained minimiser of `|v - own|^2 - sum_{q != p} |v - other_q|^2`.
///
/// The objective separates per coordinate into a quadratic with leading
/// coefficient `2 - P`, so on `[0, 1]` its minimum sits at an endpoint (for
/// `P = 2` it is linear). Exact ties go to the endpoint nearer the own mean.
pub fn party_vertices(means: &[PartyMean]) -> Result<Vec<PartyVertex>> {
    if means.len() < 2 {
        return Err(Error::Input(format!("need at least two parties, got {}", means.len())));
    }
    let vectors: Vec<Vec<f64>> = means.iter().map(PartyMean::complete_mean).collect::<Result<_>>()?;
    let n_q = vectors[0].len();
    if vectors.iter().any(|v| v.len() != n_q) {
        return Err(Error::Input("party means differ in length".into()));
    }
    Ok(means
        .iter()
        .enumerate()
        .map(|(p, m)| {
            let vertex = (0..n_q)
                .map(|k| {
                    let own = vectors[p][k];
                    let f = |v: f64| {
                        let others: f64 = vectors
                            .iter()
                            .enumerate()
                            .filter(|(q, _)| *q != p)
                            .map(|(_, o)| (v - o[k]).powi(2))
                            .sum();
                        (v - own).powi(2) - others
                    };
                    let (f0, f1) = (f(0.0), f(1.0));
                    if f0 < f1 {
                        0.0
                    } else if f1 < f0 {
                        1.0
                    } else {
                        own.round()
                    }
                })
                .collect();
            PartyVertex {
                party: m.party.clone(),
                vertex,
            }
        })
        .collect())
}

pub fn vertices_to_matrix(vertices: &[PartyVertex]) -> Result<ResponseMatrix> {
    let n_q = vertices.first().map_or(0, |v| v.vertex.len());
    let mut out = ResponseMatrix::empty(n_q);
    for v in vertices {
        out.push(
            Respondent {
                id: v.party.clone(),
                kind: RespondentKind::Synthetic,
                party: Some(v.party.clone()),
            },
            v.vertex.iter().copied().map(Some).collect(),
        )?;
    }
    Ok(out)
}

pub fn matrix_to_vertices(matrix: &ResponseMatrix) -> Result<Vec<PartyVertex>> {
    matrix
        .respondents()
        .iter()
        .zip(matrix.rows())
        .map(|(r, row)| {
            Ok(PartyVertex {
                party: r.party.clone().unwrap_or_else(|| r.id.clone()),
                vertex: row
                    .iter()
                    .map(|a| a.ok_or_else(|| Error::Input(format!("vertex {:?} has a missing entry", r.id))))
                    .collect::<Result<_>>()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoterSynthesisConfig {
    /// Vote shares per party.
    pub alpha: PartyResults,
    pub n_samples: usize,
    pub seed: u64,
    /// Multiplier applied to every alpha before sampling.
    pub concentration: f64,
}

impl VoterSynthesisConfig {
    pub fn new(alpha: PartyResults, n_samples: usize, seed: u64) -> Self {
        Self {
            alpha,
            n_samples,
            seed,
            concentration: 1.0,
        }
    }
}

/// Draws one Dirichlet weight vector.
///
/// Gamma variates are generated in log space (`G(a) = G(a + 1) * U^(1/a)`) so
/// that very small concentrations cannot underflow every component to zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::Input("Dirichlet needs at least one component".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::Input(format!("Dirichlet parameters must be positive, got {a}")));
    }
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            let g: f64 = Gamma::new(a + 1.0, 1.0).expect("shape > 1").sample(rng);
            let u: f64 = rng.random::<f64>();
            // `1 - u` lies in (0, 1], so the log is finite.
            g.ln() + (1.0 - u).ln() / a
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// `y_k = sum_p w_p * v_pk` for one weight vector.
pub fn combine_vertices(weights: &[f64], vertices: &[PartyVertex]) -> Vec<f64> {
    let n_q = vertices.first().map_or(0, |v| v.vertex.len());
    (0..n_q)
        .map(|k| {
            weights
                .iter()
                .zip(vertices)
                .map(|(w, v)| w * v.vertex[k])
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect()
}

/// Synthetic voters as Dirichlet-weighted convex combinations of party vertices.
pub fn sample_gpt_voters(vertices: &[PartyVertex], config: &VoterSynthesisConfig) -> Result<ResponseMatrix> {
    if config.n_samples == 0 {
        return Err(Error::Input("n_samples must be at least 1".into()));
    }
    if !(config.concentration > 0.0) {
        return Err(Error::Input("concentration must be positive".into()));
    }
    let alpha: Vec<f64> = vertices
        .iter()
        .map(|v| {
            config
                .alpha
                .get(&v.party)
                .map(|a| a * config.concentration)
                .ok_or_else(|| Error::Input(format!("no vote share for party {:?}", v.party)))
        })
        .collect::<Result<_>>()?;
    let n_q = vertices.first().map_or(0, |v| v.vertex.len());
    let mut rng = substream(config.seed, "gpt-voters", &[]);
    let mut out = ResponseMatrix::empty(n_q);
    for i in 0..config.n_samples {
        let w = sample_dirichlet(&alpha, &mut rng)?;
        out.push(
            Respondent {
                id: format!("voter-{i}"),
                kind: RespondentKind::Synthetic,
                party: None,
            },
            combine_vertices(&w, vertices).into_iter().map(Some).collect(),
        )?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeededRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn pm(party: &str, mean: &[f64]) -> PartyMean {
        PartyMean {
            party: party.into(),
            mean: mean.iter().copied().map(Some).collect(),
            per_question_std: vec![Some(0.0); mean.len()],
            count: 1,
        }
    }

    fn loss(v: &[f64], own: usize, means: &[Vec<f64>]) -> f64 {
        means
            .iter()
            .enumerate()
            .map(|(q, m)| {
                let d: f64 = v.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
                if q == own { d } else { -d }
            })
            .sum()
    }

    #[test]
    fn two_party_example_matches_grid_search() {
        let means = [pm("A", &[0.2]), pm("B", &[0.8])];
        let v = party_vertices(&means).unwrap();
        assert_eq!(v[0].vertex, vec![0.0]);
        assert_eq!(v[1].vertex, vec![1.0]);
        // Brute force over a 0.01 grid confirms the endpoint minima.
        let mv = vec![vec![0.2], vec![0.8]];
        for (p, expected) in [(0, 0.0), (1, 1.0)] {
            let best = (0..=100)
                .map(|i| i as f64 / 100.0)
                .min_by(|a, b| loss(&[*a], p, &mv).total_cmp(&loss(&[*b], p, &mv)))
                .unwrap();
            assert_eq!(best, expected);
        }
    }

    #[test]
    fn identical_two_party_means_tie_to_rounded_mean() {
        let means = [pm("A", &[0.3, 0.7, 0.49]), pm("B", &[0.3, 0.7, 0.49])];
        for v in party_vertices(&means).unwrap() {
            assert_eq!(v.vertex, vec![0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn vertex_needs_two_complete_parties() {
        assert!(party_vertices(&[pm("A", &[0.1])]).is_err());
        let mut broken = pm("B", &[0.1]);
        broken.mean[0] = None;
        assert!(party_vertices(&[pm("A", &[0.1]), broken]).is_err());
    }

    proptest! {
        #[test]
        fn vertices_match_corner_search(p in 2usize..=5, q in 1usize..=6, seed in any::<u64>()) {
            let mut rng = SeededRng::seed_from_u64(seed);
            let means: Vec<Vec<f64>> = (0..p).map(|_| (0..q).map(|_| rng.random::<f64>()).collect()).collect();
            let pms: Vec<PartyMean> = means.iter().enumerate().map(|(i, m)| pm(&format!("P{i}"), m)).collect();
            let got = party_vertices(&pms).unwrap();
            for (own, v) in got.iter().enumerate() {
                let best = (0..1u32 << q)
                    .map(|bits| (0..q).map(|k| f64::from((bits >> k) & 1)).collect::<Vec<_>>())
                    .min_by(|a, b| loss(a, own, &means).total_cmp(&loss(b, own, &means)))
                    .unwrap();
                prop_assert_eq!(&v.vertex, &best);
            }
        }
    }

    #[test]
    fn dirichlet_support_and_symmetric_mean() {
        let mut rng = SeededRng::seed_from_u64(4);
        let mut acc = [0.0; 2];
        for _ in 0..10_000 {
            let w = sample_dirichlet(&[1.0, 1.0], &mut rng).unwrap();
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(w.iter().all(|x| *x >= 0.0));
            acc[0] += w[0];
            acc[1] += w[1];
        }
        assert!((acc[0] / 10_000.0 - 0.5).abs() < 0.02);
        assert!((acc[1] / 10_000.0 - 0.5).abs() < 0.02);
        let tiny = sample_dirichlet(&[1e-4, 1e-4, 1e-4], &mut rng).unwrap();
        assert!((tiny.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(sample_dirichlet(&[1.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn one_hot_weights_reproduce_vertex() {
        let vs = vec![
            PartyVertex { party: "A".into(), vertex: vec![0.0, 1.0, 1.0] },
            PartyVertex { party: "B".into(), vertex: vec![1.0, 0.0, 1.0] },
        ];
        assert_eq!(combine_vertices(&[0.0, 1.0], &vs), vs[1].vertex);
        assert_eq!(combine_vertices(&[1.0, 0.0], &vs), vs[0].vertex);
    }

    #[test]
    fn voters_lie_in_unit_box() {
        let vs = vec![
            PartyVertex { party: "A".into(), vertex: vec![0.0, 1.0, 1.0] },
            PartyVertex { party: "B".into(), vertex: vec![1.0, 0.0, 1.0] },
            PartyVertex { party: "C".into(), vertex: vec![1.0, 1.0, 0.0] },
        ];
        let alpha = PartyResults::new(vec![("A".into(), 0.5), ("B".into(), 0.3), ("C".into(), 0.2)]).unwrap();
        let m = sample_gpt_voters(&vs, &VoterSynthesisConfig::new(alpha.clone(), 500, 3)).unwrap();
        assert_eq!(m.n_rows(), 500);
        assert!(m.rows().iter().flatten().all(|a| matches!(a, Some(v) if (0.0..=1.0).contains(v))));
        assert!(m.respondents().iter().all(|r| r.kind == RespondentKind::Synthetic && r.party.is_none()));
        let again = sample_gpt_voters(&vs, &VoterSynthesisConfig::new(alpha, 500, 3)).unwrap();
        assert_eq!(m, again);

        let missing = PartyResults::new(vec![("A".into(), 1.0)]).unwrap();
        assert!(sample_gpt_voters(&vs, &VoterSynthesisConfig::new(missing, 5, 3)).is_err());
    }

    #[test]
    fn means_of_samples() {
        let s = |party: &str, v: f64| SyntheticSample { party: party.into(), temperature: 1.0, trial_index: 0, answers: vec![Some(v), None] };
        let m = gpt_means(&[s("A", 0.2), s("A", 0.4), s("B", 0.9)]).unwrap();
        assert_eq!(m.n_rows(), 2);
        assert!((m.row(0)[0].unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(m.row(0)[1], None);
        assert_eq!(m.row(1)[0], Some(0.9));
    }
}
