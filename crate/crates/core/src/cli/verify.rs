//! Numerical check that the two-fund split reproduces the direct feedback
//! control.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::funds::{
    alpha_star_constrained, alpha_star_unconstrained, decompose_no_riskless, decompose_riskless,
    FundError, ValueDerivatives,
};
use crate::market::{sigma_bundle, MarketMode, MarketModel};

/// Default pass threshold on the max absolute residual (currency units).
pub const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeResidual {
    pub mode: MarketMode,
    pub samples: usize,
    /// max over samples and assets of |two-fund dollars − direct dollars|,
    /// riskless holding included.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    /// One entry per mode the model supports.
    pub modes: Vec<ModeResidual>,
}

impl VerifyReport {
    pub fn max_residual(&self) -> f64 {
        self.modes
            .iter()
            .map(|m| m.max_residual)
            .fold(0.0, f64::max)
    }
}

/// One random state: time, wealth, consumption and (φ_z, φ_zz) with φ_zz > 0.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub t: f64,
    pub w: f64,
    pub c: f64,
    pub d: ValueDerivatives<f64>,
}

pub fn draw_sample<R: Rng + ?Sized>(rng: &mut R, model: &MarketModel<f64>) -> Sample {
    let times = model.evaluation_times();
    let j = rng.random_range(0..times.len());
    let t = times[j] + rng.random_range(0.0..1.0);
    let c = rng.random_range(0.5..2.0);
    let w = c * rng.random_range(0.0..10.0);
    // Ratio −φ_z/φ_zz spread over [0, 10].
    let second = rng.random_range(0.1..2.0);
    let first = -second * rng.random_range(0.0..10.0);
    Sample {
        t,
        w,
        c,
        d: ValueDerivatives { first, second },
    }
}

/// |two-fund − direct| at one sample, max over risky and riskless holdings.
pub fn residual_at(
    model: &MarketModel<f64>,
    mode: MarketMode,
    s: &Sample,
) -> Result<f64, FundError> {
    let bundle = sigma_bundle(model, s.t);
    let mu = model.mu(s.t);
    let b = model.b(s.t);
    let z = s.w / s.c;
    let (alpha, r) = match mode {
        MarketMode::NoRiskless => (alpha_star_constrained(&bundle, mu, b, z, s.d)?, None),
        MarketMode::WithRiskless => {
            let r = model.r().ok_or(FundError::RisklessAssetRequired)?;
            (
                alpha_star_unconstrained(&bundle, mu, r, b, z, s.d)?,
                Some(r),
            )
        }
    };
    let direct: Vec<f64> = alpha.iter().map(|a| s.c * a).collect();
    // −ψ_w/ψ_ww = c · (−φ_z/φ_zz).
    let dollars = s.c * s.d.risk_ratio();
    let split = match r {
        None => decompose_no_riskless(model, s.t, s.w, dollars)?,
        Some(_) => decompose_riskless(model, s.t, s.w, dollars)?,
    }
    .flatten();
    let direct_riskless = if r.is_some() {
        s.w - direct.iter().sum::<f64>()
    } else {
        0.0
    };
    let risky = direct
        .iter()
        .zip(&split.risky)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    Ok(risky.max((split.riskless - direct_riskless).abs()))
}

/// Draws `samples` random states and reports the worst residual in each mode
/// the model supports (both when it has a riskless rate).
pub fn verify_decomposition(
    model: &MarketModel<f64>,
    samples: usize,
    seed: u64,
) -> Result<VerifyReport, FundError> {
    let mut modes = vec![MarketMode::NoRiskless];
    if model.r().is_some() {
        modes.push(MarketMode::WithRiskless);
    }
    let mut report = VerifyReport { modes: Vec::new() };
    for (m, mode) in modes.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(m as u64);
        let mut worst = 0.0f64;
        for _ in 0..samples {
            let s = draw_sample(&mut rng, model);
            worst = worst.max(residual_at(model, mode, &s)?);
        }
        report.modes.push(ModeResidual {
            mode,
            samples,
            max_residual: worst,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::market::MarketParams;

    fn model(n: usize, r: Option<f64>, b: f64) -> MarketModel<f64> {
        let mut rows = vec![vec![0.0; n]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 0.2 + 0.05 * i as f64;
            if i > 0 {
                row[0] = 0.03;
            }
        }
        let mut rho = vec![0.0; n];
        rho[0] = 0.4;
        MarketParams::constant(
            (0..n).map(|i| 0.05 + 0.01 * i as f64).collect(),
            Matrix::from_rows(&rows).unwrap(),
            r,
            0.01,
            b,
            rho,
            0.04,
        )
        .validate()
        .unwrap()
    }

    #[test]
    fn both_modes_pass_on_three_assets() {
        let rep = verify_decomposition(&model(3, Some(0.02), 0.15), 2000, 1).unwrap();
        assert_eq!(rep.modes.len(), 2);
        assert!(rep.max_residual() < VERIFY_TOL, "{rep:?}");
    }

    #[test]
    fn single_asset_without_riskless_is_exact() {
        let rep = verify_decomposition(&model(1, None, 0.2), 500, 2).unwrap();
        assert_eq!(rep.modes.len(), 1);
        // Both routes hold exactly W in the one asset.
        assert!(rep.max_residual() < 1e-13, "{rep:?}");
    }

    #[test]
    fn deterministic_consumption_second_fund_is_riskless() {
        let m = model(2, Some(0.03), 0.0);
        let dec = decompose_riskless(&m, 0.0, 10.0, 4.0).unwrap();
        assert_eq!(dec.fund_b.weights(), &[1.0, 0.0, 0.0]);
    }
}
