//! Independent reference implementations used to check the library.
#![allow(dead_code)]

use adaptive_survey_core::latent::{fit_model, project_rows};
use adaptive_survey_core::planted::{planted_logistic, PlantedConfig, PlantedWorld};
use adaptive_survey_core::seed::SeededRng;
use adaptive_survey_core::survey::{party_means, PartyMean, Questionnaire, ResponseMatrix};
use adaptive_survey_core::synthetic::{party_vertices, sample_gpt_voters, VoterSynthesisConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

/// Exhaustive search over all corners of `[0,1]^Q` for the vertex objective.
pub fn corner_vertex(own: usize, means: &[Vec<f64>]) -> Vec<f64> {
    let q = means[0].len();
    let loss = |v: &[f64]| -> f64 {
        means
            .iter()
            .enumerate()
            .map(|(p, m)| {
                let d: f64 = v.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
                if p == own {
                    d
                } else {
                    -d
                }
            })
            .sum()
    };
    let mut best = (f64::INFINITY, Vec::new());
    for mask in 0u32..(1 << q) {
        let v: Vec<f64> = (0..q).map(|k| f64::from((mask >> k) & 1)).collect();
        let l = loss(&v);
        if l < best.0 {
            best = (l, v);
        }
    }
    best.1
}

pub fn party_mean(party: &str, mean: &[f64]) -> PartyMean {
    PartyMean {
        party: party.into(),
        mean: mean.iter().copied().map(Some).collect(),
        per_question_std: vec![Some(0.1); mean.len()],
        count: 1,
    }
}

/// Indices of the `k` nearest rows by sorting every Manhattan distance.
pub fn knn_sort_all(query: &[f64], rows: &[Vec<f64>], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| (a - b).abs()).sum(), i))
        .collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    d.into_iter().take(k).map(|x| x.1).collect()
}

fn welch_stat(a: &[f64], b: &[f64]) -> f64 {
    let mv = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0) / n)
    };
    let ((ma, sa), (mb, sb)) = (mv(a), mv(b));
    (ma - mb) / (sa + sb).sqrt()
}

/// One-sided permutation p-value for `mean(a) < mean(b)` using the Welch statistic.
pub fn permutation_p(a: &[f64], b: &[f64], shuffles: usize, seed: u64) -> f64 {
    let observed = welch_stat(a, b);
    let mut pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut rng = SeededRng::seed_from_u64(seed);
    let hits = (0..shuffles)
        .filter(|_| {
            pooled.shuffle(&mut rng);
            welch_stat(&pooled[..a.len()], &pooled[a.len()..]) <= observed
        })
        .count();
    (hits as f64 + 1.0) / (shuffles as f64 + 1.0)
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos, g = 7, n = 9.
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (std::f64::consts::PI / (std::f64::consts::PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + 7.5;
    let s = C[1..].iter().enumerate().fold(C[0], |s, (i, c)| s + c / (x + i as f64 + 1.0));
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}

/// Student-t CDF by composite Simpson integration of the density.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    let log_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (log_norm - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
    let n = 20_000;
    let h = t.abs() / n as f64;
    let mut s = pdf(0.0) + pdf(t.abs());
    for i in 1..n {
        s += pdf(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Welch statistic and degrees of freedom, two-pass.
pub fn welch_reference(a: &[f64], b: &[f64]) -> (f64, f64) {
    let var = |x: &[f64]| {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
    };
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (var(a) / na, var(b) / nb);
    let t = welch_stat(a, b);
    let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    (t, df)
}

pub fn normal_sample(rng: &mut SeededRng, n: usize, mean: f64, sd: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let (u1, u2): (f64, f64) = (1.0 - rng.random::<f64>(), rng.random());
            mean + sd * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        })
        .collect()
}

/// Mean absolute error between the fitted and true agreement probabilities of
/// a planted population evaluated at the fitted projections.
pub fn planted_recovery_mae(n: usize, q: usize, seed: u64) -> f64 {
    let planted = planted_logistic(n, q, 1.5, seed).unwrap();
    let qn = Questionnaire::uniform(q, 5).unwrap();
    let model = fit_model(&planted.responses, &qn, &mut SeededRng::seed_from_u64(seed));
    let points = project_rows(&model, &planted.responses);
    let mut total = 0.0;
    for (z, truth) in points.iter().zip(&planted.probabilities) {
        for (qm, p) in model.question_models().iter().zip(truth) {
            total += (qm.probability(*z) - p).abs();
        }
    }
    total / (n * q) as f64
}

/// Planted world used by the learning-property checks.
pub fn desk_world(seed: u64) -> PlantedWorld {
    PlantedWorld::generate(&PlantedConfig { seed, ..PlantedConfig::default() }).unwrap()
}

/// Dirichlet voters from the vertices of the candidates' party means.
pub fn synthetic_voters(world: &PlantedWorld, n: usize, seed: u64) -> ResponseMatrix {
    let vertices = party_vertices(&party_means(&world.candidates).unwrap()).unwrap();
    sample_gpt_voters(&vertices, &VoterSynthesisConfig::new(world.vote_shares.clone(), n, seed)).unwrap()
}
