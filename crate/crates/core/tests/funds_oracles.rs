mod common;

use common::{gauss_solve, naive_cov, random_model};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruinfund::funds::*;
use ruinfund::market::sigma_bundle;

fn dims() -> impl Strategy<Value = (usize, usize)> {
    prop_oneof![Just(1usize), Just(2), Just(3), Just(5)].prop_flat_map(|n| (Just(n), n..=n + 2))
}

/// Objective minimized by the controls, with excess return `m`.
fn objective(
    alpha: &[f64],
    m: &[f64],
    cov: &[Vec<f64>],
    sr: &[f64],
    b: f64,
    z: f64,
    d: ValueDerivatives<f64>,
) -> f64 {
    let n = alpha.len();
    let lin: f64 = (0..n).map(|i| alpha[i] * m[i]).sum();
    let quad: f64 = (0..n)
        .map(|i| (0..n).map(|j| alpha[i] * cov[i][j] * alpha[j]).sum::<f64>())
        .sum();
    let hedge: f64 = (0..n).map(|i| alpha[i] * sr[i]).sum();
    lin * d.first + 0.5 * quad * d.second - b * hedge * (z * d.second + d.first)
}

#[test]
fn constrained_control_solves_bordered_kkt_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..300 {
        let n = rng.random_range(1..=5);
        let k = n + rng.random_range(0..=2);
        let model = random_model(&mut rng, n, k, false);
        let (cov, sr) = naive_cov(&model);
        let b = model.b(0.0);
        let z = rng.random_range(0.0..40.0);
        let d = ValueDerivatives {
            first: -rng.random_range(0.0..3.0),
            second: rng.random_range(0.05..2.0),
        };
        // [Σφ_zz  e; eᵀ 0][α; ν] = [bσρ(zφ_zz + φ_z) − μφ_z; z]
        let mut a = vec![vec![0.0; n + 1]; n + 1];
        let mut rhs = vec![0.0; n + 1];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = cov[i][j] * d.second;
            }
            a[i][n] = 1.0;
            a[n][i] = 1.0;
            rhs[i] = b * sr[i] * (z * d.second + d.first) - model.mu(0.0)[i] * d.first;
        }
        rhs[n] = z;
        let oracle = gauss_solve(a, rhs);
        let got =
            alpha_star_constrained(&sigma_bundle(&model, 0.0), model.mu(0.0), b, z, d).unwrap();
        for i in 0..n {
            assert!(
                (got[i] - oracle[i]).abs() < 1e-8 * (1.0 + oracle[i].abs()),
                "{got:?} vs {oracle:?}"
            );
        }
    }
}

#[test]
fn unconstrained_control_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..300 {
        let n = rng.random_range(1..=5);
        let k = n + rng.random_range(0..=2);
        let model = random_model(&mut rng, n, k, true);
        let (cov, sr) = naive_cov(&model);
        let (b, r) = (model.b(0.0), model.r().unwrap());
        let z = rng.random_range(0.0..40.0);
        let d = ValueDerivatives {
            first: -rng.random_range(0.0..3.0),
            second: rng.random_range(0.05..2.0),
        };
        let rhs: Vec<f64> = (0..n)
            .map(|i| {
                (b * sr[i] * (z * d.second + d.first) - (model.mu(0.0)[i] - r) * d.first) / d.second
            })
            .collect();
        let oracle = gauss_solve(cov, rhs);
        let got = alpha_star_unconstrained(&sigma_bundle(&model, 0.0), model.mu(0.0), r, b, z, d)
            .unwrap();
        for i in 0..n {
            assert!((got[i] - oracle[i]).abs() < 1e-8 * (1.0 + oracle[i].abs()));
        }
    }
}

#[test]
fn controls_beat_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..100 {
        let n = rng.random_range(2..=4);
        let model = random_model(&mut rng, n, n + 1, true);
        let (cov, sr) = naive_cov(&model);
        let (b, r) = (model.b(0.0), model.r().unwrap());
        let mu = model.mu(0.0).to_vec();
        let excess: Vec<f64> = mu.iter().map(|m| m - r).collect();
        let z = rng.random_range(0.0..30.0);
        let d = ValueDerivatives {
            first: -rng.random_range(0.1..3.0),
            second: rng.random_range(0.05..2.0),
        };
        let bundle = sigma_bundle(&model, 0.0);
        let free = alpha_star_unconstrained(&bundle, &mu, r, b, z, d).unwrap();
        let tied = alpha_star_constrained(&bundle, &mu, b, z, d).unwrap();
        let j_free = objective(&free, &excess, &cov, &sr, b, z, d);
        let j_tied = objective(&tied, &mu, &cov, &sr, b, z, d);
        for _ in 0..200 {
            let eps = 10f64.powf(rng.random_range(-4.0..1.0));
            let mut delta: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * eps).collect();
            let p: Vec<f64> = free.iter().zip(&delta).map(|(a, x)| a + x).collect();
            assert!(
                objective(&p, &excess, &cov, &sr, b, z, d) >= j_free - 1e-12 * (1.0 + j_free.abs())
            );
            // Project onto eᵀδ = 0 for the budget-constrained problem.
            let mean = delta.iter().sum::<f64>() / n as f64;
            delta.iter_mut().for_each(|x| *x -= mean);
            let p: Vec<f64> = tied.iter().zip(&delta).map(|(a, x)| a + x).collect();
            assert!(
                objective(&p, &mu, &cov, &sr, b, z, d) >= j_tied - 1e-12 * (1.0 + j_tied.abs())
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn fund_vectors_satisfy_sum_identities(seed in any::<u64>(), (n, k) in dims()) {
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(seed), n, k, true);
        let bundle = sigma_bundle(&model, 0.0);
        let mu = model.mu(0.0);
        let (r, b) = (model.r().unwrap(), model.b(0.0));
        let s = |v: &[f64]| v.iter().sum::<f64>();
        prop_assert!((s(compute_g(&bundle).weights()) - 1.0).abs() < 1e-12);
        prop_assert!(s(compute_f(&bundle, mu).weights()).abs() < 1e-12);
        prop_assert!(s(compute_h(&bundle).weights()).abs() < 1e-12);
        prop_assert!((s(compute_gtilde(&bundle, b).weights()) - 1.0).abs() < 1e-12);
        prop_assert!(s(compute_ftilde(&bundle, mu, r, b).weights()).abs() < 1e-12);
        if let Ok(gh) = compute_ghat(&bundle, mu, r) {
            prop_assert!((s(gh.weights()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn decompositions_account_for_all_wealth(
        seed in any::<u64>(),
        (n, k) in dims(),
        w in 0.0f64..100.0,
        d in -50.0f64..150.0,
    ) {
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(seed), n, k, true);
        for dec in [
            decompose_no_riskless(&model, 0.0, w, d).unwrap(),
            decompose_riskless(&model, 0.0, w, d).unwrap(),
        ] {
            prop_assert_eq!(dec.wealth(), d + (w - d));
            let flat = dec.flatten();
            let total = flat.riskless + flat.risky.iter().sum::<f64>();
            prop_assert!((total - w).abs() < 1e-10 * (1.0 + w.abs() + d.abs()));
        }
    }

    #[test]
    fn split_funds_are_relative_portfolios(seed in any::<u64>(), (n, k) in dims()) {
        let model = random_model(&mut ChaCha8Rng::seed_from_u64(seed), n, k, true);
        let dec = decompose_riskless(&model, 0.0, 1.0, 0.5).unwrap();
        for f in [&dec.fund_a, &dec.fund_b] {
            prop_assert!((f.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(f.weights().len(), n + 1);
        }
        let dec = decompose_no_riskless(&model, 0.0, 1.0, 0.5).unwrap();
        for f in [&dec.fund_a, &dec.fund_b] {
            prop_assert!((f.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(f.riskless_weight(), 0.0);
        }
    }

    #[test]
    fn two_fund_split_equals_direct_control(seed in any::<u64>(), (n, k) in dims()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n, k, true);
        for mode in [ruinfund::market::MarketMode::NoRiskless, ruinfund::market::MarketMode::WithRiskless] {
            let s = ruinfund::cli::verify::draw_sample(&mut rng, &model);
            let res = ruinfund::cli::verify::residual_at(&model, mode, &s).unwrap();
            prop_assert!(res < 1e-10, "residual {}", res);
        }
    }
}
