use cointarb::econometrics::{
    adf_test, critical_values_mc, default_levels, johansen_test, kss_test, ols_fit_columns,
    LagRule, NullTables, TestKind,
};
use cointarb::panel::AlignedPanel;
use cointarb::time::Timestamp;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn walk(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = vec![0.0; n];
    for t in 1..n {
        s[t] = s[t - 1] + rng.sample::<f64, _>(StandardNormal);
    }
    s
}

#[test]
fn adf_no_constant_one_percent_quantile() {
    let q = NullTables::global().critical_value(TestKind::AdfNc, 1000, 0.01);
    assert!((q + 2.58).abs() <= 0.03, "1% quantile {q}");
    // Statistic -2.58 sits near the 1% point.
    let p = NullTables::global().pvalue(TestKind::AdfNc, 1000, -2.58);
    assert!((p - 0.0096).abs() <= 0.0025, "p {p}");
}

#[test]
fn kss_raw_quantiles() {
    let t = NullTables::global();
    let q1 = t.critical_value(TestKind::KssRaw, 1000, 0.01);
    let q5 = t.critical_value(TestKind::KssRaw, 1000, 0.05);
    assert!((q1 + 2.82).abs() <= 0.05, "1% {q1}");
    assert!((q5 + 2.22).abs() <= 0.05, "5% {q5}");
}

#[test]
fn quantiles_stable_across_seeds() {
    let levels = default_levels();
    let a = critical_values_mc(TestKind::AdfNc, 250, &levels, 20_000, 1);
    let b = critical_values_mc(TestKind::AdfNc, 250, &levels, 40_000, 2);
    for level in [0.01, 0.05, 0.10] {
        let d = (a.quantile(level) - b.quantile(level)).abs();
        assert!(d < 0.05, "level {level}: {d}");
    }
}

#[test]
fn johansen_nine_symbol_vector_shape() {
    let cols: Vec<Vec<f64>> = (0..9)
        .map(|j| walk(3000, 100 + j).iter().map(|v| v + 200.0).collect())
        .collect();
    let syms = (0..9).map(|i| format!("C{i}").into()).collect();
    let panel = AlignedPanel::from_columns(Timestamp::from_minutes(0), syms, cols).unwrap();
    let r = johansen_test(&panel, 1, 0.10).unwrap();
    assert_eq!(r.vectors.len(), 9);
    assert!(r.vectors.iter().all(|v| v.weights.len() == 9));
    assert!(r.rank <= 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unit_root_statistics_are_scale_free(seed in 0u64..10_000, k in 0.001f64..1000.0) {
        let s = walk(400, seed);
        let scaled: Vec<f64> = s.iter().map(|v| v * k).collect();
        let a = adf_test(&s, 4, LagRule::Fixed).unwrap();
        let b = adf_test(&scaled, 4, LagRule::Fixed).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() < 1e-9);
        let a = kss_test(&s, 4).unwrap();
        let b = kss_test(&scaled, 4).unwrap();
        prop_assert!((a.statistic - b.statistic).abs() < 1e-9);
        prop_assert_eq!(a.lag_order, b.lag_order);
    }

    #[test]
    fn pvalues_fall_as_statistic_moves_left(x in -6.0f64..2.0, dx in 0.0f64..3.0) {
        let t = NullTables::global();
        for kind in [TestKind::AdfNc, TestKind::KssRaw] {
            let p1 = t.pvalue(kind, 1000, x);
            let p2 = t.pvalue(kind, 1000, x - dx);
            prop_assert!(p2 <= p1);
            prop_assert!((0.0..=1.0).contains(&p1));
        }
    }

    #[test]
    fn residuals_orthogonal_to_regressors(seed in 0u64..10_000, n in 20usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..n).map(|i| i as f64 * 0.3 + rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = (0..n).map(|i| 1.0 + a[i] - 0.5 * b[i] + rng.sample::<f64, _>(StandardNormal)).collect();
        let fit = ols_fit_columns(&y, &[&a, &b], true).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rn = norm(&fit.residuals);
        for c in [&a, &b] {
            let dot: f64 = c.iter().zip(&fit.residuals).map(|(p, q)| p * q).sum();
            prop_assert!(dot.abs() <= 1e-8 * norm(c) * rn);
        }
    }

    #[test]
    fn johansen_rank_survives_rescaling(seed in 0u64..1000, k1 in 0.01f64..100.0, k2 in 0.01f64..100.0) {
        let x = walk(1500, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 77);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + rng.sample::<f64, _>(StandardNormal) + 50.0).collect();
        let x: Vec<f64> = x.iter().map(|v| v + 50.0).collect();
        let mk = |a: f64, b: f64| {
            let cols = vec![x.iter().map(|v| v * a).collect(), y.iter().map(|v| v * b).collect()];
            AlignedPanel::from_columns(Timestamp::from_minutes(0), vec!["X".into(), "Y".into()], cols).unwrap()
        };
        let r1 = johansen_test(&mk(1.0, 1.0), 2, 0.05).unwrap();
        let r2 = johansen_test(&mk(k1, k2), 2, 0.05).unwrap();
        prop_assert_eq!(r1.rank, r2.rank);
        for (a, b) in r1.trace_stats.iter().zip(&r2.trace_stats) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }
}
