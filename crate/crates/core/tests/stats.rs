mod common;

use adaptive_survey_core::metrics::{nearest_candidates, query_overlap, welch_t_test};
use adaptive_survey_core::seed::{substream, SeededRng};
use adaptive_survey_core::simulation::{InteractionRecord, Origin};
use adaptive_survey_core::synthetic::{combine_vertices, party_vertices, sample_dirichlet};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

#[test]
fn welch_matches_quadrature_reference() {
    let mut rng = SeededRng::seed_from_u64(17);
    for case in 0..50 {
        let na = rng.random_range(2..40);
        let nb = rng.random_range(2..40);
        let (ma, sa, mb, sb) = (rng.random_range(-1.0..1.0), rng.random_range(0.2..2.0), rng.random_range(-1.0..1.0), rng.random_range(0.2..2.0));
        let a = normal_sample(&mut rng, na, ma, sa);
        let b = normal_sample(&mut rng, nb, mb, sb);
        let got = welch_t_test(&a, &b).unwrap();
        let (t, df) = welch_reference(&a, &b);
        assert!((got.t - t).abs() < 1e-6, "case {case}: t {} vs {t}", got.t);
        let p = student_t_cdf(t, df);
        assert!((got.p_less - p).abs() < 1e-4, "case {case}: p {} vs {p}", got.p_less);
    }
}

#[test]
fn welch_agrees_with_permutation_oracle() {
    let mut rng = SeededRng::seed_from_u64(5);
    for case in 0..5 {
        let shift = rng.random_range(-0.4..0.4);
        let a = normal_sample(&mut rng, 25, shift, 1.0);
        let b = normal_sample(&mut rng, 30, 0.0, 1.0);
        let p = welch_t_test(&a, &b).unwrap().p_less;
        let perm = permutation_p(&a, &b, 10_000, case);
        assert!((p - perm).abs() < 0.02, "case {case}: {p} vs {perm}");
    }
}

#[test]
fn welch_trivial_cases() {
    let a = [0.1, 0.4, 0.2, 0.7];
    let r = welch_t_test(&a, &a).unwrap();
    assert_eq!(r.t, 0.0);
    assert!((r.p_less - 0.5).abs() < 1e-12);
    let low = [0.0, 1e-3, -1e-3, 2e-3];
    let high = [1.0, 1.0 + 1e-3, 1.0 - 1e-3, 1.002];
    assert!(welch_t_test(&low, &high).unwrap().p_less < 1e-6);
    assert!(welch_t_test(&[1.0], &high).is_err());
    assert!(welch_t_test(&[1.0, 1.0], &[2.0, 2.0]).is_err());
}

#[test]
fn dirichlet_means_match_normalized_alpha() {
    let alpha = [0.28, 0.19, 0.14, 0.14, 0.08, 0.17];
    let total: f64 = alpha.iter().sum();
    let mut rng = substream(3, "dirichlet-test", &[]);
    let mut sums = [0.0; 6];
    let n = 50_000;
    for _ in 0..n {
        let w = sample_dirichlet(&alpha, &mut rng).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(w.iter().all(|x| *x >= 0.0));
        sums.iter_mut().zip(&w).for_each(|(s, x)| *s += x);
    }
    for (s, a) in sums.iter().zip(&alpha) {
        assert!((s / n as f64 - a / total).abs() < 0.01);
    }
}

#[test]
fn tiny_concentrations_do_not_underflow() {
    let mut rng = SeededRng::seed_from_u64(1);
    for _ in 0..1000 {
        let w = sample_dirichlet(&[1e-3, 1e-3, 1e-3], &mut rng).unwrap();
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn vertices_match_exhaustive_corner_search(p in 2usize..=5, q in 1usize..=10, seed in any::<u64>()) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let means: Vec<Vec<f64>> = (0..p).map(|_| (0..q).map(|_| rng.random::<f64>()).collect()).collect();
        let pm: Vec<_> = means.iter().enumerate().map(|(i, m)| party_mean(&format!("P{i}"), m)).collect();
        let vertices = party_vertices(&pm).unwrap();
        for (i, v) in vertices.iter().enumerate() {
            prop_assert_eq!(&v.vertex, &corner_vertex(i, &means));
            let mut one_hot = vec![0.0; p];
            one_hot[i] = 1.0;
            prop_assert_eq!(&combine_vertices(&one_hot, &vertices), &v.vertex);
        }
    }

    #[test]
    fn knn_matches_sort_oracle(n in 1usize..300, q in 1usize..8, k in 1usize..40, seed in any::<u64>()) {
        let mut rng = SeededRng::seed_from_u64(seed);
        // Coarse values make exact distance ties common.
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..q).map(|_| rng.random_range(0..4) as f64 / 3.0).collect()).collect();
        let query: Vec<f64> = (0..q).map(|_| rng.random_range(0..4) as f64 / 3.0).collect();
        let got: Vec<usize> = nearest_candidates(&query, &rows, k).into_iter().map(|x| x.0).collect();
        prop_assert_eq!(got, knn_sort_all(&query, &rows, k));
    }

    #[test]
    fn overlap_is_symmetric(pairs_a in proptest::collection::vec((0usize..5, 0usize..8), 1..20), seed in any::<u64>()) {
        let mut rng = SeededRng::seed_from_u64(seed);
        let rec = |(u, q): (usize, usize)| InteractionRecord { user_index: u, question_id: q, value: 1.0, origin: Origin::Real };
        let mut a: Vec<_> = pairs_a.into_iter().collect();
        a.sort();
        a.dedup();
        let b: Vec<_> = a.iter().map(|&(u, q)| if rng.random::<bool>() { (u, q) } else { (u, q + 100) }).collect();
        let la: Vec<_> = a.into_iter().map(rec).collect();
        let lb: Vec<_> = b.into_iter().map(rec).collect();
        prop_assert_eq!(query_overlap(&la, &lb).unwrap(), query_overlap(&lb, &la).unwrap());
        prop_assert_eq!(query_overlap(&la, &la).unwrap(), 1.0);
    }
}
