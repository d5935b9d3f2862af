#![allow(dead_code)]

use rand::Rng;
use ruinfund::linalg::{symmetric_eigenvalues, Matrix};
use ruinfund::market::{MarketModel, MarketParams};

/// Random market with n assets driven by k Brownian motions, redrawn until
/// cond(Σ) ≤ 1e3 and the smallest variance direction is at least 1e-3.
pub fn random_model<R: Rng>(rng: &mut R, n: usize, k: usize, with_rate: bool) -> MarketModel<f64> {
    loop {
        let mut sigma = vec![0.0; n * k];
        for i in 0..n {
            for j in 0..k {
                sigma[i * k + j] = rng.random_range(-0.15..0.15);
            }
            sigma[i * k + i] += rng.random_range(0.1..0.4);
        }
        let mut rho: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = rho.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = rng.random_range(0.0..0.95);
        if norm > 0.0 {
            rho.iter_mut().for_each(|x| *x *= radius / norm);
        }
        let params = MarketParams::constant(
            (0..n).map(|_| rng.random_range(0.02..0.15)).collect(),
            Matrix::from_row_major(n, k, sigma).unwrap(),
            with_rate.then(|| rng.random_range(0.005..0.05)),
            rng.random_range(-0.02..0.03),
            rng.random_range(0.0..0.3),
            rho,
            rng.random_range(0.01..0.1),
        );
        let Ok(m) = params.validate() else { continue };
        let eig = symmetric_eigenvalues(&m.sigma(0.0).gram());
        if eig[0] >= 1e-3 && eig[n - 1] <= 1e3 * eig[0] {
            return m;
        }
    }
}

/// Single risky asset, μ = 0.06, σ = 0.2, r = 0.02, λ = 0.04.
pub fn single_asset(b: f64, rho: f64) -> MarketModel<f64> {
    MarketParams::constant(
        vec![0.06],
        Matrix::from_rows(&[vec![0.2]]).unwrap(),
        Some(0.02),
        0.0,
        b,
        vec![rho],
        0.04,
    )
    .validate()
    .unwrap()
}

/// (1 − 0.02 z)^(2 + √2), the exact ruin probability of [`single_asset`] with b = 0.
pub fn single_asset_psi(z: f64) -> f64 {
    if z >= 50.0 {
        0.0
    } else {
        (1.0 - 0.02 * z).powf(2.0 + 2f64.sqrt())
    }
}

/// Dense Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// σσᵀ and σρ by explicit loops.
pub fn naive_cov(model: &MarketModel<f64>) -> (Vec<Vec<f64>>, Vec<f64>) {
    let s = model.sigma(0.0);
    let (n, k) = (model.n(), model.k());
    let cov = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..k).map(|l| s[(i, l)] * s[(j, l)]).sum())
                .collect()
        })
        .collect();
    let sr = (0..n)
        .map(|i| (0..k).map(|l| s[(i, l)] * model.rho()[l]).sum())
        .collect();
    (cov, sr)
}
