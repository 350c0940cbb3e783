use std::sync::Arc;
use std::time::{Duration, Instant};

use proptest::prelude::*;

use hdtwosample::bandwidth::{median_heuristic, BandwidthRule};
use hdtwosample::harness::StatisticSpec;
use hdtwosample::models::{
    sample, CovarianceKind, CovarianceModel, DistributionConfig, DistributionSpec, NoiseFamily, Sample, ShiftKind,
};
use hdtwosample::numeric::{mean, sample_variance};
use hdtwosample::rng::derive_seed;
use hdtwosample::statistics::{
    block_statistic, h_cq, linear_statistic, null_variance_estimate, oracle_null_variance, pair_values, statistic,
    u_statistic, ComputeBudget, Kernel,
};
use hdtwosample::theory::{minimax_power, power_general, power_spherical, ProblemParams};
use hdtwosample::verify::check_h2_identity;

fn samples(max_n: usize, max_d: usize) -> impl Strategy<Value = (Sample, Sample)> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        let cells = prop::collection::vec(-5.0..5.0f64, n * d);
        (cells.clone(), cells).prop_map(move |(a, b)| (Sample::new(a, n, d).unwrap(), Sample::new(b, n, d).unwrap()))
    })
}

fn kernels() -> impl Strategy<Value = Kernel> {
    prop_oneof![
        (0.3..20.0f64).prop_map(|g| Kernel::Gaussian { gamma: g }),
        Just(Kernel::Euclidean),
        Just(Kernel::Linear),
        (0.0..5.0f64, 1.0..50.0f64).prop_map(|(t, extra)| Kernel::ShiftedEuclidean {
            gamma_sq: 2.0 * t + extra,
            trace_sigma: t
        }),
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn tuple(d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0..10.0f64, d), 4)
}

proptest! {
    #[test]
    fn swapping_samples_is_exact((x, y) in samples(8, 5), k in kernels()) {
        prop_assert_eq!(u_statistic(&x, &y, &k).unwrap().value, u_statistic(&y, &x, &k).unwrap().value);
    }

    #[test]
    fn joint_permutation_invariance(
        (x, y) in samples(9, 4),
        k in kernels(),
        keys in prop::collection::vec(any::<u32>(), 9),
    ) {
        let mut order: Vec<usize> = (0..x.n()).collect();
        order.sort_by_key(|&i| (keys[i], i));
        let a = u_statistic(&x, &y, &k).unwrap().value;
        let b = u_statistic(&x.permuted(&order).unwrap(), &y.permuted(&order).unwrap(), &k).unwrap().value;
        prop_assert!(close(a, b, 1e-12), "{} vs {}", a, b);
    }

    #[test]
    fn translation_invariance((x, y) in samples(8, 4), shift in prop::collection::vec(-5.0..5.0f64, 4)) {
        let v = &shift[..x.d()];
        let (xt, yt) = (x.translated(v).unwrap(), y.translated(v).unwrap());
        for k in [Kernel::Gaussian { gamma: 2.0 }, Kernel::Euclidean, Kernel::Linear] {
            let a = u_statistic(&x, &y, &k).unwrap().value;
            let b = u_statistic(&xt, &yt, &k).unwrap().value;
            prop_assert!(close(a, b, 1e-9), "{:?}: {} vs {}", k, a, b);
        }
    }

    #[test]
    fn gaussian_scale_covariance((x, y) in samples(8, 4), gamma in 0.5..10.0f64, c in 0.1..10.0f64) {
        let (xs, ys) = (x.map(|v| c * v).unwrap(), y.map(|v| c * v).unwrap());
        let a = u_statistic(&x, &y, &Kernel::Gaussian { gamma }).unwrap().value;
        let b = u_statistic(&xs, &ys, &Kernel::Gaussian { gamma: c * gamma }).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
    }

    #[test]
    fn h2_is_minus_twice_h_cq(t in (1usize..9).prop_flat_map(tuple)) {
        prop_assert!(check_h2_identity(&t[0], &t[1], &t[2], &t[3]).unwrap() <= 1e-9);
    }

    #[test]
    fn linear_kernel_is_u_cq((x, y) in samples(8, 4)) {
        let hs = pair_values(&x, &y, &Kernel::Linear).unwrap();
        let mut expected = Vec::new();
        for i in 0..x.n() {
            for j in i + 1..x.n() {
                expected.push(h_cq(x.row(i), x.row(j), y.row(i), y.row(j)).unwrap());
            }
        }
        for (a, b) in hs.iter().zip(&expected) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn block_of_one_and_pairs((x, y) in samples(6, 3).prop_filter("even n >= 4", |(x, _)| x.n() % 2 == 0 && x.n() >= 4),
                              k in kernels()) {
        let n = x.n();
        let u = u_statistic(&x, &y, &k).unwrap().value;
        prop_assert_eq!(block_statistic(&x, &y, &k, 1).unwrap().value, u);
        let pairs = block_statistic(&x, &y, &k, n / 2).unwrap().value;
        prop_assert!(close(pairs, linear_statistic(&x, &y, &k).unwrap().value, 1e-12));
        prop_assert!(close(statistic(&x, &y, &k, ComputeBudget::Linear).unwrap().value, pairs, 1e-12));
    }

    #[test]
    fn median_heuristic_invariances(
        (x, y) in samples(8, 4),
        c in 0.1..10.0f64,
        shift in prop::collection::vec(-5.0..5.0f64, 4),
    ) {
        let g = median_heuristic(&x, &y).unwrap().gamma_sq;
        prop_assert_eq!(median_heuristic(&y, &x).unwrap().gamma_sq, g);
        let v = &shift[..x.d()];
        let t = median_heuristic(&x.translated(v).unwrap(), &y.translated(v).unwrap()).unwrap().gamma_sq;
        prop_assert!((t - g).abs() <= 1e-9 * g.max(1.0));
        let s = median_heuristic(&x.map(|a| c * a).unwrap(), &y.map(|a| c * a).unwrap()).unwrap().gamma_sq;
        prop_assert!(close(s, c * c * g, 1e-9));
    }

    #[test]
    fn power_increases_with_signal_and_sample_size(
        n in 4usize..500,
        d in 1usize..2000,
        psi in 0.0..3.0f64,
        dpsi in 0.001..1.0f64,
        alpha in 0.001..0.5f64,
    ) {
        let base = power_spherical(n, d, psi, alpha).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(power_spherical(n, d, psi + dpsi, alpha).unwrap() >= base);
        prop_assert!(power_spherical(n + 10, d, psi, alpha).unwrap() >= base);
        prop_assert!((power_spherical(n, d, 0.0, alpha).unwrap() - alpha).abs() < 1e-12);
    }

    #[test]
    fn spherical_power_ignores_noise_scale(
        n in 4usize..500,
        d in 1usize..500,
        psi in 0.0..3.0f64,
        sigma in 0.05..20.0f64,
        alpha in 0.001..0.5f64,
    ) {
        let p = ProblemParams::spherical(n, d, psi, sigma, alpha).unwrap();
        let general = power_general(&p).unwrap();
        prop_assert!((general - power_spherical(n, d, psi, alpha).unwrap()).abs() < 1e-12);
        let minimax = minimax_power(n, d, psi * sigma, sigma, alpha).unwrap();
        prop_assert!((minimax - general).abs() < 1e-12);
    }

    #[test]
    fn labels_round_trip(spec in prop::sample::select(StatisticSpec::legend()), blocks in 2usize..64) {
        let s = spec.to_string();
        prop_assert_eq!(s.parse::<StatisticSpec>().unwrap(), spec);
        let b = ComputeBudget::Block(blocks);
        prop_assert_eq!(b.to_string().parse::<ComputeBudget>().unwrap(), b);
    }

    #[test]
    fn bandwidth_rules_round_trip(p in 0.05..2.0f64, c in 0.1..5.0f64, g in 0.01..100.0f64) {
        for rule in [BandwidthRule::Median, BandwidthRule::Mean, BandwidthRule::Power { p, c }, BandwidthRule::Fixed { gamma: g }] {
            prop_assert_eq!(rule.to_string().parse::<BandwidthRule>().unwrap(), rule);
        }
    }

    #[test]
    fn config_round_trip(
        family in prop::sample::select(NoiseFamily::ALL.to_vec()),
        d in 1usize..60,
        shifted in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let cfg = DistributionConfig {
            family,
            d,
            shift: if shifted { ShiftKind::Experiment1 } else { ShiftKind::None },
            covariance: CovarianceKind::Identity,
            seed,
        };
        prop_assert_eq!(DistributionConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}

fn spherical(d: usize, mean_value: f64) -> DistributionSpec {
    DistributionSpec::new(NoiseFamily::Gaussian, Arc::new(CovarianceModel::identity(d).unwrap()), vec![mean_value; d])
        .unwrap()
}

#[test]
fn u_cq_is_unbiased() {
    let (p, q) = (spherical(5, 0.0), spherical(5, 0.3));
    let delta_sq = 5.0 * 0.09;
    let values: Vec<f64> = (0..10_000u64)
        .map(|r| {
            let x = sample(&p, 10, derive_seed(17, &[r, 0])).unwrap();
            let y = sample(&q, 10, derive_seed(17, &[r, 1])).unwrap();
            u_statistic(&x, &y, &Kernel::Linear).unwrap().value
        })
        .collect();
    let m = mean(&values);
    let se = (sample_variance(&values) / values.len() as f64).sqrt();
    assert!((m - delta_sq).abs() < 4.0 * se, "mean {m}, target {delta_sq}, stderr {se}");
}

#[test]
fn linear_statistic_is_unbiased() {
    let (p, q) = (spherical(5, 0.0), spherical(5, 0.3));
    let values: Vec<f64> = (0..10_000u64)
        .map(|r| {
            let x = sample(&p, 10, derive_seed(23, &[r, 0])).unwrap();
            let y = sample(&q, 10, derive_seed(23, &[r, 1])).unwrap();
            linear_statistic(&x, &y, &Kernel::Linear).unwrap().value
        })
        .collect();
    let se = (sample_variance(&values) / values.len() as f64).sqrt();
    assert!((mean(&values) - 0.45).abs() < 3.0 * se);
}

#[test]
fn plug_in_variance_tracks_oracle() {
    let d = 100;
    let p = spherical(d, 0.0);
    let cov = CovarianceModel::identity(d).unwrap();
    let oracle = oracle_null_variance(&Kernel::Linear, &cov, 100, ComputeBudget::Quadratic).unwrap();
    assert!((oracle - 0.08).abs() < 1e-12);
    for r in 0..5u64 {
        let x = sample(&p, 100, derive_seed(31, &[r, 0])).unwrap();
        let y = sample(&p, 100, derive_seed(31, &[r, 1])).unwrap();
        let hs = pair_values(&x, &y, &Kernel::Linear).unwrap();
        let est = null_variance_estimate(&hs, 100, ComputeBudget::Quadratic).unwrap();
        let ratio = est / oracle;
        assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
    }
}

fn fastest(f: impl Fn() -> f64) -> Duration {
    (0..3)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed()
        })
        .min()
        .unwrap()
}

#[test]
fn cheaper_budgets_run_faster() {
    let p = spherical(16, 0.0);
    let x = sample(&p, 2048, 1).unwrap();
    let y = sample(&p, 2048, 2).unwrap();
    let k = Kernel::Gaussian { gamma: 5.0 };
    let time = |b: ComputeBudget| fastest(|| statistic(&x, &y, &k, b).unwrap().value);
    let (quad, block, lin) = (time(ComputeBudget::Quadratic), time(ComputeBudget::Block(8)), time(ComputeBudget::Linear));
    assert!(quad > block && block > lin, "quadratic {quad:?}, block {block:?}, linear {lin:?}");
}
