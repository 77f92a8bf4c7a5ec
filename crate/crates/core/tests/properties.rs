use proptest::prelude::*;

use crowdvote::aggregate::{advantage, aggregate_weighted, Rule, TiePolicy};
use crowdvote::estimate::{
    erm_loss, fit_ow_i, fit_second_order, pipeline_aggregate, ErmConfig, Method, PipelineConfig,
};
use crowdvote::io::{
    parse_predictions, parse_second_order, predictions_to_csv, second_order_to_csv, ReadOptions,
};
use crowdvote::oracle::{exact_expected_advantage, DifficultyMixture};
use crowdvote::secondorder::{empirical_second_order, exact_second_order, loo_second_order};
use crowdvote::shuffle::{shuffle_apply, shuffle_invert};
use crowdvote::simulate::{
    mean_truth_advantage, run_gap_curve, simulate_ci, simulate_difficulty_with_alphas, CiSimSpec,
    DifficultySimSpec,
};
use crowdvote::{Clamp, LabelSpace, PredictionMatrix};

fn accuracies(max_n: usize) -> impl Strategy<Value = (Vec<f64>, usize)> {
    (2usize..=5).prop_flat_map(move |k| {
        let lo = 1.0 / k as f64;
        (prop::collection::vec(lo..=1.0, 2..=max_n), Just(k))
    })
}

fn matrix() -> impl Strategy<Value = PredictionMatrix> {
    (2usize..=4, 2usize..=5, 1usize..=30).prop_flat_map(|(k, n, m)| {
        (
            prop::collection::vec(prop::collection::vec(0..k, n), m),
            prop::collection::vec(0..k, m),
        )
            .prop_map(move |(rows, truth)| {
                PredictionMatrix::from_rows(LabelSpace::indexed(k).unwrap(), rows, Some(truth))
                    .unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_matrix_columns_are_distributions((x, k) in accuracies(5)) {
        let so = exact_second_order(&x, k).unwrap();
        prop_assert!(so.max_column_error().unwrap() < 1e-12);
        prop_assert!(so.entries().iter().all(|&p| (-1e-15..=1.0 + 1e-15).contains(&p)));
        for i in 0..x.len() {
            for j in 0..x.len() {
                for s in 0..k {
                    for t in 0..k {
                        // joint P(A_i=s, A_j=t) = P(A_i=s|A_j=t)/K is symmetric
                        prop_assert!((so.get(i, j, s, t) - so.get(j, i, t, s)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn empirical_matrix_columns_are_distributions(pm in matrix()) {
        let so = empirical_second_order(&pm.without_truth());
        for (i, j, s, t, p, imputed) in so.cells() {
            prop_assert!((0.0..=1.0).contains(&p));
            if imputed {
                prop_assert_eq!(p, 1.0 / pm.k() as f64, "imputed cell {} {} {} {}", i, j, s, t);
            }
        }
        prop_assert!(so.max_column_error().unwrap() < 1e-12);
    }

    #[test]
    fn advantages_sum_to_zero_and_are_bounded(pm in matrix()) {
        let so = empirical_second_order(&pm.without_truth());
        let n = pm.n() as f64;
        for q in 0..pm.m() {
            for rule in [Rule::Mv, Rule::Sp, Rule::Isp] {
                let adv = advantage(rule, pm.row(q), pm.space(), &so).unwrap();
                let sum: f64 = adv.values.iter().sum();
                prop_assert!(sum.abs() < 1e-9, "{:?} sums to {}", rule, sum);
                let bound = if rule == Rule::Isp { 2.0 * n } else { n };
                prop_assert!(adv.values.iter().all(|v| v.abs() <= bound + 1e-9));
            }
        }
    }

    #[test]
    fn shuffle_round_trip(pm in matrix(), seed in any::<u64>()) {
        let (shuffled, map) = shuffle_apply(&pm, seed);
        prop_assert_eq!(shuffle_invert(&shuffled, &map).unwrap(), pm);
    }

    #[test]
    fn csv_round_trip(pm in matrix()) {
        let opts = ReadOptions { labels: Some(pm.space().labels().to_vec()), ..ReadOptions::default() };
        let back = parse_predictions(predictions_to_csv(&pm).unwrap().as_slice(), &opts).unwrap();
        prop_assert_eq!(back, pm.clone());
        let so = empirical_second_order(&pm);
        let text = second_order_to_csv(&so).unwrap();
        let so_back = parse_second_order(text.as_slice()).unwrap();
        prop_assert_eq!(so_back.entries(), so.entries());
    }

    #[test]
    fn agent_permutation_moves_advantages_with_it(pm in matrix(), rot in 0usize..5) {
        let n = pm.n();
        let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let permuted = pm.select_agents(&order).unwrap();
        let (a, b) = (empirical_second_order(&pm), empirical_second_order(&permuted));
        for q in 0..pm.m() {
            for rule in [Rule::Sp, Rule::Isp] {
                let x = advantage(rule, pm.row(q), pm.space(), &a).unwrap();
                let y = advantage(rule, permuted.row(q), permuted.space(), &b).unwrap();
                for (u, v) in x.values.iter().zip(&y.values) {
                    prop_assert!((u - v).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn weighted_vote_is_scale_invariant(pm in matrix(), c in 0.01f64..100.0) {
        let w: Vec<f64> = (0..pm.n()).map(|i| 0.3 + i as f64).collect();
        let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
        for q in 0..pm.m() {
            let a = aggregate_weighted(pm.row(q), &w, pm.space(), &TiePolicy::LowestIndex, q).unwrap();
            let b = aggregate_weighted(pm.row(q), &scaled, pm.space(), &TiePolicy::LowestIndex, q).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn noiseless_fit_recovers_informative_agents(
        (x, k) in (2usize..=5).prop_flat_map(|k| {
            let lo = 1.0 / k as f64;
            (prop::collection::vec(lo + 0.05..=1.0, 3..=5), Just(k))
        })
    ) {
        let so = exact_second_order(&x, k).unwrap();
        let (lo, hi) = ErmConfig::default().bounds(k);
        let clamped: Vec<f64> = x.iter().map(|v| v.clamp(lo, hi)).collect();
        let fit = fit_second_order(&so, &ErmConfig::default()).unwrap();
        prop_assert!(fit.loss <= erm_loss(&clamped, &so).unwrap() + 1e-9);
        for (a, b) in fit.accuracies.iter().zip(&clamped) {
            prop_assert!((a - b).abs() < 1e-3, "fit {:?} vs {:?}", fit.accuracies, clamped);
        }
    }

    #[test]
    fn isp_never_worse_than_mv_in_expectation((x, k) in accuracies(4)) {
        let mv = exact_expected_advantage(Rule::Mv, &x, k).unwrap();
        let isp = exact_expected_advantage(Rule::Isp, &x, k).unwrap();
        prop_assert!(isp >= mv - 1e-12);
    }

    #[test]
    fn pipeline_ignores_truth_column(pm in matrix(), seed in any::<u64>()) {
        let corrupted: Vec<usize> = pm.truth().unwrap().iter().map(|t| (t + 1) % pm.k()).collect();
        let other = pm.clone().with_truth(Some(corrupted)).unwrap();
        let cfg = PipelineConfig { shuffle_seed: Some(seed), ..PipelineConfig::default() };
        for method in [Method::Mv, Method::Isp, Method::OwI] {
            let a = pipeline_aggregate(&pm, &method, &cfg).unwrap();
            let b = pipeline_aggregate(&other, &method, &cfg).unwrap();
            prop_assert_eq!(a.labels, b.labels);
        }
    }
}

#[test]
fn leave_one_out_agrees_with_full_sample_on_large_m() {
    let pm = simulate_ci(&CiSimSpec {
        accuracies: vec![0.55, 0.6, 0.7, 0.8],
        k: 3,
        m: 20_000,
        seed: 4,
    })
    .unwrap();
    let data = pm.without_truth();
    let full = empirical_second_order(&data);
    let step = 97;
    let (mut same, mut total) = (0, 0);
    for q in (0..data.m()).step_by(step) {
        let loo = loo_second_order(&data, q).unwrap();
        let a = advantage(Rule::Isp, data.row(q), data.space(), &full).unwrap();
        let b = advantage(Rule::Isp, data.row(q), data.space(), &loo).unwrap();
        let pick = |v: &[f64]| (0..v.len()).max_by(|&i, &j| v[i].total_cmp(&v[j])).unwrap();
        same += usize::from(pick(&a.values) == pick(&b.values));
        total += 1;
    }
    assert!(same as f64 >= 0.99 * total as f64, "{same}/{total}");
}

#[test]
fn monte_carlo_advantage_matches_oracle() {
    let x = [0.6, 0.7, 0.8, 0.9];
    for k in [2, 4] {
        let pm = simulate_ci(&CiSimSpec {
            accuracies: x.to_vec(),
            k,
            m: 100_000,
            seed: 12,
        })
        .unwrap();
        let so = exact_second_order(&x, k).unwrap();
        for rule in [Rule::Mv, Rule::Sp, Rule::Isp] {
            let (mean, se) = mean_truth_advantage(rule, &pm, &so).unwrap();
            let exact = exact_expected_advantage(rule, &x, k).unwrap();
            assert!(
                (mean - exact).abs() <= 3.0 * se,
                "K={k} {rule:?}: {mean} vs {exact} (se {se})"
            );
        }
    }
}

/// Joint and product-of-marginal rates of both agents being right, with the
/// standard error of their difference under independence.
fn joint_vs_product(rows: &[(&[usize], usize)]) -> (f64, f64, f64) {
    let m = rows.len() as f64;
    let rate = |f: &dyn Fn(&[usize], usize) -> bool| {
        rows.iter().filter(|(r, t)| f(r, *t)).count() as f64 / m
    };
    let joint = rate(&|r, t| r[0] == t && r[1] == t);
    let product = rate(&|r, t| r[0] == t) * rate(&|r, t| r[1] == t);
    (joint, product, (product * (1.0 - product) / m).sqrt())
}

#[test]
fn shared_difficulty_correlates_agents_only_across_strata() {
    let cases = [
        (vec![(0.0, 0.3), (f64::INFINITY, 0.7)], 0.04),
        (vec![(0.3, 0.5), (4.0, 0.5)], 0.02),
    ];
    for (atoms, min_gap) in cases {
        let spec = DifficultySimSpec {
            abilities: vec![1.0, 1.0],
            mixture: DifficultyMixture::atoms(atoms.clone()).unwrap(),
            k: 2,
            m: 100_000,
            seed: 21,
        };
        let (pm, alphas) = simulate_difficulty_with_alphas(&spec).unwrap();
        let truth = pm.truth().unwrap();
        let all: Vec<(&[usize], usize)> = pm.rows().zip(truth.iter().copied()).collect();
        let (joint, product, _) = joint_vs_product(&all);
        assert!(
            joint - product >= min_gap,
            "{atoms:?}: joint {joint} vs product {product}"
        );
        for &(alpha, _) in &atoms {
            let stratum: Vec<(&[usize], usize)> = all
                .iter()
                .zip(&alphas)
                .filter(|(_, &a)| a == alpha)
                .map(|(r, _)| *r)
                .collect();
            let (joint, product, se) = joint_vs_product(&stratum);
            assert!(
                (joint - product).abs() <= 3.0 * se + 1e-12,
                "alpha {alpha}: {joint} vs {product} (se {se})"
            );
        }
    }
}

#[test]
fn gap_curve_trends_down() {
    let curve = run_gap_curve(17, 10).unwrap();
    for w in curve.points.windows(2) {
        let (a, b) = (100.0 * w[0].gap_isp_mv, 100.0 * w[1].gap_isp_mv);
        assert!(
            b <= a + 0.5,
            "K={} gap {b:.2} rose above K={} gap {a:.2}",
            w[1].k,
            w[0].k
        );
    }
}

#[test]
fn ow_i_is_equivariant_under_agent_permutation() {
    let pm = simulate_ci(&CiSimSpec {
        accuracies: vec![0.5, 0.6, 0.75, 0.9],
        k: 4,
        m: 3_000,
        seed: 2,
    })
    .unwrap();
    let data = pm.without_truth();
    let order = [2, 0, 3, 1];
    let permuted = data.select_agents(&order).unwrap();
    let clamp = Clamp::default();
    let a = fit_ow_i(
        &data,
        &empirical_second_order(&data),
        &TiePolicy::LowestIndex,
        clamp,
    )
    .unwrap();
    let b = fit_ow_i(
        &permuted,
        &empirical_second_order(&permuted),
        &TiePolicy::LowestIndex,
        clamp,
    )
    .unwrap();
    for (pos, &src) in order.iter().enumerate() {
        assert!((b.accuracies[pos] - a.accuracies[src]).abs() < 1e-12);
    }
}

#[test]
fn ill_conditioned_fit_still_converges() {
    // two agents barely above chance and one near-perfect: slow plain descent
    let x = [0.3000113353327648, 0.357326813420101, 0.9892998157875038];
    let fit = fit_second_order(&exact_second_order(&x, 4).unwrap(), &ErmConfig::default()).unwrap();
    assert!(fit.converged);
    assert!(fit.loss < 1e-12, "loss {}", fit.loss);
    for (a, b) in fit.accuracies.iter().zip(&x) {
        assert!((a - b).abs() < 1e-5, "{:?}", fit.accuracies);
    }
}
