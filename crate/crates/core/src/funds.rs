//! Relative portfolio vectors, fund dynamics, first-order-condition controls
//! and the two-fund decompositions of the optimal ruin-minimizing strategy.
//!
//! Notation: Σ = σσᵀ, e = (1, …, 1). Without a riskless asset the funds are
//!
//! ```text
//! g = Σ⁻¹e / eᵀΣ⁻¹e
//! f = Σ⁻¹(μ − (eᵀΣ⁻¹μ / eᵀΣ⁻¹e) e)
//! h = Σ⁻¹(σρ − (eᵀΣ⁻¹σρ / eᵀΣ⁻¹e) e)
//! ```
//!
//! and the optimum puts −ψ_w/ψ_ww dollars in g + f and the rest in g + b h.
//! With a riskless asset (entry 0 of an (n+1)-vector is the riskless weight),
//! μ̃ = μ − re − bσρ and
//!
//! ```text
//! g̃ = (1 − b eᵀΣ⁻¹σρ, b Σ⁻¹σρ)
//! f̃ = (−eᵀΣ⁻¹μ̃, Σ⁻¹μ̃)
//! ```
//!
//! with −ψ_w/ψ_ww dollars in g̃ + f̃ and the rest in g̃.

use thiserror::Error;

use crate::linalg::{add_scaled, dot, scale, sum};
use crate::market::{sigma_bundle, MarketModel, SigmaBundle};
use crate::scalar::Scalar;

/// Tolerance on eᵀg = 1 / eᵀf = 0 style identities.
pub fn identity_tol<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(1e3))
}

/// Below this |eᵀΣ⁻¹(μ − re)| the normalized excess-return fund is undefined.
pub const GHAT_NORMALIZER_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FundError {
    #[error("weights sum to {sum}, expected {expected}")]
    BadWeightSum { sum: f64, expected: f64 },
    #[error("dimension mismatch: expected {expected} weights, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("normalizer e'inv(Sigma)(mu - r e) = {0:e} is too close to zero")]
    DegenerateNormalizer(f64),
    #[error("second derivative {0:e} is not positive")]
    DegenerateSecondDerivative(f64),
    #[error("operation needs a riskless asset")]
    RisklessAssetRequired,
    #[error("wealth {0} is negative")]
    NegativeWealth(f64),
}

/// Weights summing to one that define a continually rebalanced mutual fund.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativePortfolioVector<T> {
    weights: Vec<T>,
    label: String,
    includes_riskless: bool,
}

impl<T: Scalar> RelativePortfolioVector<T> {
    /// Checks eᵀw = 1. With `includes_riskless`, `weights[0]` is the riskless share.
    pub fn new(
        weights: Vec<T>,
        label: impl Into<String>,
        includes_riskless: bool,
    ) -> Result<Self, FundError> {
        let s = sum(&weights);
        if (s - T::one()).abs() > identity_tol() {
            return Err(FundError::BadWeightSum {
                sum: s.as_f64(),
                expected: 1.0,
            });
        }
        Ok(Self::from_parts(weights, label, includes_riskless))
    }

    fn from_parts(weights: Vec<T>, label: impl Into<String>, includes_riskless: bool) -> Self {
        Self {
            weights,
            label: label.into(),
            includes_riskless,
        }
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn includes_riskless(&self) -> bool {
        self.includes_riskless
    }

    /// Riskless weight (zero for risky-only funds).
    pub fn riskless_weight(&self) -> T {
        if self.includes_riskless {
            self.weights[0]
        } else {
            T::zero()
        }
    }

    /// Weights on the n risky assets.
    pub fn risky_weights(&self) -> &[T] {
        if self.includes_riskless {
            &self.weights[1..]
        } else {
            &self.weights
        }
    }

    /// `self + k·d`, still a relative portfolio vector.
    pub fn shifted(&self, k: T, d: &DifferenceVector<T>, label: impl Into<String>) -> Self {
        debug_assert_eq!(self.includes_riskless, d.includes_riskless);
        Self::from_parts(
            add_scaled(&self.weights, k, &d.weights),
            label,
            self.includes_riskless,
        )
    }
}

/// Weights summing to zero; adding a multiple to a relative portfolio vector
/// keeps it one.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceVector<T> {
    weights: Vec<T>,
    includes_riskless: bool,
}

impl<T: Scalar> DifferenceVector<T> {
    pub fn new(weights: Vec<T>, includes_riskless: bool) -> Result<Self, FundError> {
        let s = sum(&weights);
        if s.abs() > identity_tol() {
            return Err(FundError::BadWeightSum {
                sum: s.as_f64(),
                expected: 0.0,
            });
        }
        Ok(Self {
            weights,
            includes_riskless,
        })
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn includes_riskless(&self) -> bool {
        self.includes_riskless
    }
}

/// Drift and volatility row of a fund's price process.
#[derive(Debug, Clone, PartialEq)]
pub struct FundDynamics<T> {
    pub drift: T,
    pub vol_row: Vec<T>,
}

/// φ_z and φ_zz (or ψ_w and ψ_ww).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueDerivatives<T> {
    pub first: T,
    pub second: T,
}

impl<T: Scalar> ValueDerivatives<T> {
    /// −first/second: the dollar amount (per unit of consumption) in the risky fund.
    pub fn risk_ratio(&self) -> T {
        -self.first / self.second
    }
}

/// Dollar split between two funds.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoFundDecomposition<T> {
    pub fund_a: RelativePortfolioVector<T>,
    pub fund_b: RelativePortfolioVector<T>,
    pub dollars_a: T,
    pub dollars_b: T,
}

/// Dollars per risky asset plus the riskless holding (zero without one).
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation<T> {
    pub risky: Vec<T>,
    pub riskless: T,
}

impl<T: Scalar> TwoFundDecomposition<T> {
    pub fn wealth(&self) -> T {
        self.dollars_a + self.dollars_b
    }

    /// Per-asset dollars implied by holding both funds.
    pub fn flatten(&self) -> Allocation<T> {
        let risky = add_scaled(
            &scale(self.fund_a.risky_weights(), self.dollars_a),
            self.dollars_b,
            self.fund_b.risky_weights(),
        );
        let riskless = self.dollars_a * self.fund_a.riskless_weight()
            + self.dollars_b * self.fund_b.riskless_weight();
        Allocation { risky, riskless }
    }
}

/// `Σ⁻¹(v − (eᵀΣ⁻¹v / eᵀΣ⁻¹e) e)` from Σ⁻¹v and Σ⁻¹e. Using the summed
/// entries of Σ⁻¹e as the normalizer keeps the zero-sum identity at rounding level.
fn centered<T: Scalar>(inv_v: &[T], inv_e: &[T]) -> Vec<T> {
    let ratio = sum(inv_v) / sum(inv_e);
    add_scaled(inv_v, -ratio, inv_e)
}

/// Minimum-variance fund g = Σ⁻¹e / eᵀΣ⁻¹e.
pub fn compute_g<T: Scalar>(bundle: &SigmaBundle<T>) -> RelativePortfolioVector<T> {
    let inv_e = bundle.inv_e();
    let s = sum(&inv_e);
    RelativePortfolioVector::from_parts(scale(&inv_e, T::one() / s), "g", false)
}

/// f = Σ⁻¹(μ − (eᵀΣ⁻¹μ / eᵀΣ⁻¹e) e).
pub fn compute_f<T: Scalar>(bundle: &SigmaBundle<T>, mu: &[T]) -> DifferenceVector<T> {
    DifferenceVector {
        weights: centered(&bundle.solve(mu), &bundle.inv_e()),
        includes_riskless: false,
    }
}

/// h = Σ⁻¹(σρ − (eᵀΣ⁻¹σρ / eᵀΣ⁻¹e) e).
pub fn compute_h<T: Scalar>(bundle: &SigmaBundle<T>) -> DifferenceVector<T> {
    DifferenceVector {
        weights: centered(&bundle.inv_sigma_rho(), &bundle.inv_e()),
        includes_riskless: false,
    }
}

/// g̃ = (1 − b eᵀΣ⁻¹σρ, b Σ⁻¹σρ): the consumption-hedging fund.
pub fn compute_gtilde<T: Scalar>(bundle: &SigmaBundle<T>, b: T) -> RelativePortfolioVector<T> {
    let risky = scale(&bundle.inv_sigma_rho(), b);
    let mut w = Vec::with_capacity(risky.len() + 1);
    w.push(T::one() - sum(&risky));
    w.extend(risky);
    RelativePortfolioVector::from_parts(w, "g_tilde", true)
}

/// μ̃ = μ − re − bσρ.
pub fn adjusted_excess<T: Scalar>(bundle: &SigmaBundle<T>, mu: &[T], r: T, b: T) -> Vec<T> {
    mu.iter()
        .zip(&bundle.sigma_rho)
        .map(|(&m, &s)| m - r - b * s)
        .collect()
}

/// f̃ = (−eᵀΣ⁻¹μ̃, Σ⁻¹μ̃).
pub fn compute_ftilde<T: Scalar>(
    bundle: &SigmaBundle<T>,
    mu: &[T],
    r: T,
    b: T,
) -> DifferenceVector<T> {
    let risky = bundle.solve(&adjusted_excess(bundle, mu, r, b));
    let mut w = Vec::with_capacity(risky.len() + 1);
    w.push(-sum(&risky));
    w.extend(risky);
    DifferenceVector {
        weights: w,
        includes_riskless: true,
    }
}

/// ĝ = Σ⁻¹(μ − re) / eᵀΣ⁻¹(μ − re), the deterministic-consumption risky fund.
pub fn compute_ghat<T: Scalar>(
    bundle: &SigmaBundle<T>,
    mu: &[T],
    r: T,
) -> Result<RelativePortfolioVector<T>, FundError> {
    let excess: Vec<T> = mu.iter().map(|&m| m - r).collect();
    let dir = bundle.solve(&excess);
    let s = sum(&dir);
    if s.abs() < T::lit(GHAT_NORMALIZER_TOL) {
        return Err(FundError::DegenerateNormalizer(s.as_f64()));
    }
    Ok(RelativePortfolioVector::from_parts(
        scale(&dir, T::one() / s),
        "g_hat",
        false,
    ))
}

/// Price dynamics of the fund defined by `vec` at time `t`.
pub fn fund_dynamics<T: Scalar>(
    vec: &RelativePortfolioVector<T>,
    model: &MarketModel<T>,
    t: T,
) -> Result<FundDynamics<T>, FundError> {
    let n = model.n();
    let expected = if vec.includes_riskless() { n + 1 } else { n };
    if vec.weights().len() != expected {
        return Err(FundError::DimensionMismatch {
            expected,
            found: vec.weights().len(),
        });
    }
    let riskless_drift = if vec.includes_riskless() {
        let r = model.r().ok_or(FundError::RisklessAssetRequired)?;
        vec.riskless_weight() * r
    } else {
        T::zero()
    };
    let risky = vec.risky_weights();
    Ok(FundDynamics {
        drift: riskless_drift + dot(risky, model.mu(t)),
        vol_row: model.sigma(t).vec_mul(risky),
    })
}

/// Constrained minimizer (eᵀα = z) of
/// αᵀμ φ_z + ½ αᵀΣα φ_zz − b αᵀσρ (z φ_zz + φ_z),
/// via the explicit Lagrange multiplier.
pub fn alpha_star_constrained<T: Scalar>(
    bundle: &SigmaBundle<T>,
    mu: &[T],
    b: T,
    z: T,
    d: ValueDerivatives<T>,
) -> Result<Vec<T>, FundError> {
    if !(d.second > T::zero()) {
        return Err(FundError::DegenerateSecondDerivative(d.second.as_f64()));
    }
    let inv_mu = bundle.solve(mu);
    let inv_sr = bundle.inv_sigma_rho();
    let inv_e = bundle.inv_e();
    let hedge = z * d.second + d.first;
    let multiplier =
        (z * d.second + d.first * sum(&inv_mu) - hedge * b * sum(&inv_sr)) / sum(&inv_e);
    let ratio = d.first / d.second;
    Ok((0..mu.len())
        .map(|i| {
            -ratio * inv_mu[i] + (z + ratio) * b * inv_sr[i] + multiplier / d.second * inv_e[i]
        })
        .collect())
}

/// Unconstrained minimizer of
/// αᵀ(μ − re) φ_z + ½ αᵀΣα φ_zz − b αᵀσρ (z φ_zz + φ_z):
/// α* = z b Σ⁻¹σρ − (φ_z/φ_zz) Σ⁻¹(μ − re − bσρ).
pub fn alpha_star_unconstrained<T: Scalar>(
    bundle: &SigmaBundle<T>,
    mu: &[T],
    r: T,
    b: T,
    z: T,
    d: ValueDerivatives<T>,
) -> Result<Vec<T>, FundError> {
    if !(d.second > T::zero()) {
        return Err(FundError::DegenerateSecondDerivative(d.second.as_f64()));
    }
    let ratio = d.first / d.second;
    let inv_sr = bundle.inv_sigma_rho();
    let inv_adj = bundle.solve(&adjusted_excess(bundle, mu, r, b));
    Ok(inv_sr
        .iter()
        .zip(&inv_adj)
        .map(|(&s, &m)| z * b * s - ratio * m)
        .collect())
}

/// Two-fund split without a riskless asset: `dollars_risk` (= −ψ_w/ψ_ww) in
/// g + f, the remainder of wealth in g + b h.
pub fn decompose_no_riskless<T: Scalar>(
    model: &MarketModel<T>,
    t: T,
    wealth: T,
    dollars_risk: T,
) -> Result<TwoFundDecomposition<T>, FundError> {
    if wealth < T::zero() {
        return Err(FundError::NegativeWealth(wealth.as_f64()));
    }
    let bundle = sigma_bundle(model, t);
    let g = compute_g(&bundle);
    let f = compute_f(&bundle, model.mu(t));
    let h = compute_h(&bundle);
    Ok(TwoFundDecomposition {
        fund_a: g.shifted(T::one(), &f, "g+f"),
        fund_b: g.shifted(model.b(t), &h, "g+bh"),
        dollars_a: dollars_risk,
        dollars_b: wealth - dollars_risk,
    })
}

/// Two-fund split with a riskless asset: `dollars_risk` in g̃ + f̃, the
/// remainder of wealth in g̃.
pub fn decompose_riskless<T: Scalar>(
    model: &MarketModel<T>,
    t: T,
    wealth: T,
    dollars_risk: T,
) -> Result<TwoFundDecomposition<T>, FundError> {
    if wealth < T::zero() {
        return Err(FundError::NegativeWealth(wealth.as_f64()));
    }
    let r = model.r().ok_or(FundError::RisklessAssetRequired)?;
    let bundle = sigma_bundle(model, t);
    let b = model.b(t);
    let gt = compute_gtilde(&bundle, b);
    let ft = compute_ftilde(&bundle, model.mu(t), r, b);
    Ok(TwoFundDecomposition {
        fund_a: gt.shifted(T::one(), &ft, "g_tilde+f_tilde"),
        fund_b: gt,
        dollars_a: dollars_risk,
        dollars_b: wealth - dollars_risk,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::market::MarketParams;

    fn bundle_2x2() -> SigmaBundle<f64> {
        let s22 = (0.09_f64 - 0.0025).sqrt();
        let sigma = Matrix::from_rows(&[vec![0.20, 0.0], vec![0.05, s22]]).unwrap();
        SigmaBundle::from_parts(&sigma, &[0.0, 0.0]).unwrap()
    }

    fn scalar_bundle(sigma: f64, rho: f64) -> SigmaBundle<f64> {
        SigmaBundle::from_parts(&Matrix::from_rows(&[vec![sigma]]).unwrap(), &[rho]).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn g_two_assets_by_cofactors() {
        let g = compute_g(&bundle_2x2());
        assert!(close(g.weights(), &[8.0 / 11.0, 3.0 / 11.0], 1e-12));
    }

    #[test]
    fn g_trivial_cases() {
        assert!(close(
            compute_g(&scalar_bundle(0.3, 0.0)).weights(),
            &[1.0],
            1e-15
        ));
        let iso = SigmaBundle::from_parts(&scale_matrix(0.25, 3), &[0.0; 3]).unwrap();
        assert!(close(compute_g(&iso).weights(), &[1.0 / 3.0; 3], 1e-14));
    }

    fn scale_matrix(s: f64, n: usize) -> Matrix<f64> {
        let mut m = Matrix::identity(n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    #[test]
    fn f_and_h_vanish_for_one_asset() {
        let b = scalar_bundle(0.2, 0.4);
        assert!(close(compute_f(&b, &[0.07]).weights(), &[0.0], 1e-15));
        assert!(close(compute_h(&b).weights(), &[0.0], 1e-15));
    }

    #[test]
    fn f_identity_covariance_centers_mu() {
        let b = SigmaBundle::from_parts(&Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert!(close(
            compute_f(&b, &[0.06, 0.02]).weights(),
            &[0.02, -0.02],
            1e-15
        ));
    }

    #[test]
    fn h_zero_without_correlation() {
        assert!(close(compute_h(&bundle_2x2()).weights(), &[0.0, 0.0], 0.0));
    }

    #[test]
    fn gtilde_examples() {
        let b = scalar_bundle(0.2, 0.4);
        assert_eq!(compute_gtilde(&b, 0.0).weights(), &[1.0, 0.0]);
        assert!(close(compute_gtilde(&b, 0.1).weights(), &[0.8, 0.2], 1e-14));
    }

    #[test]
    fn ftilde_examples() {
        let b = scalar_bundle(0.2, 0.0);
        assert!(close(
            compute_ftilde(&b, &[0.06], 0.02, 0.0).weights(),
            &[-1.0, 1.0],
            1e-14
        ));
        assert!(close(
            compute_ftilde(&b, &[0.02], 0.02, 0.0).weights(),
            &[0.0, 0.0],
            0.0
        ));
    }

    #[test]
    fn ghat_examples() {
        let id = SigmaBundle::from_parts(&Matrix::identity(2), &[0.0, 0.0]).unwrap();
        let g = compute_ghat(&id, &[0.06, 0.03], 0.02).unwrap();
        assert!(close(g.weights(), &[0.8, 0.2], 1e-14));
        assert!(close(
            compute_ghat(&scalar_bundle(0.2, 0.0), &[0.05], 0.02)
                .unwrap()
                .weights(),
            &[1.0],
            1e-15
        ));
        assert!(matches!(
            compute_ghat(&id, &[0.02, 0.02], 0.02),
            Err(FundError::DegenerateNormalizer(_))
        ));
    }

    fn two_asset_model(r: Option<f64>) -> MarketModel<f64> {
        let s22 = (0.09_f64 - 0.0025).sqrt();
        MarketParams::constant(
            vec![0.06, 0.08],
            Matrix::from_rows(&[vec![0.20, 0.0], vec![0.05, s22]]).unwrap(),
            r,
            0.01,
            0.1,
            vec![0.3, -0.2],
            0.04,
        )
        .validate()
        .unwrap()
    }

    #[test]
    fn dynamics_of_min_variance_fund() {
        let m = two_asset_model(None);
        let g = compute_g(&sigma_bundle(&m, 0.0));
        let dyn_g = fund_dynamics(&g, &m, 0.0).unwrap();
        assert!((dyn_g.drift - 0.72 / 11.0).abs() < 1e-12);
        let expected = m.sigma(0.0).vec_mul(g.weights());
        assert!(close(&dyn_g.vol_row, &expected, 0.0));
    }

    #[test]
    fn dynamics_of_pure_riskless_fund() {
        let m = two_asset_model(Some(0.02));
        let v = RelativePortfolioVector::new(vec![1.0, 0.0, 0.0], "cash", true).unwrap();
        let d = fund_dynamics(&v, &m, 0.0).unwrap();
        assert_eq!(d.drift, 0.02);
        assert_eq!(d.vol_row, vec![0.0, 0.0]);
    }

    #[test]
    fn dynamics_dimension_mismatch() {
        let m = two_asset_model(Some(0.02));
        let v = RelativePortfolioVector::new(vec![1.0], "x", false).unwrap();
        assert!(matches!(
            fund_dynamics(&v, &m, 0.0),
            Err(FundError::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn constrained_alpha_minimum_variance_when_no_drift() {
        let b = bundle_2x2();
        let d = ValueDerivatives {
            first: -0.3,
            second: 0.05,
        };
        let a = alpha_star_constrained(&b, &[0.0, 0.0], 0.0, 2.5, d).unwrap();
        let g = compute_g(&b);
        assert!(close(&a, &scale(g.weights(), 2.5), 1e-12));
    }

    #[test]
    fn constrained_alpha_one_asset_is_z() {
        let b = scalar_bundle(0.2, 0.4);
        let d = ValueDerivatives {
            first: -0.7,
            second: 0.01,
        };
        let a = alpha_star_constrained(&b, &[0.09], 0.2, 3.0, d).unwrap();
        assert!((a[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_second_derivative_is_an_error() {
        let b = bundle_2x2();
        let d = ValueDerivatives {
            first: -1.0,
            second: 0.0,
        };
        assert!(alpha_star_constrained(&b, &[0.1, 0.1], 0.0, 1.0, d).is_err());
        assert!(alpha_star_unconstrained(&b, &[0.1, 0.1], 0.0, 0.0, 1.0, d).is_err());
    }

    #[test]
    fn unconstrained_alpha_deterministic_consumption() {
        let b = bundle_2x2();
        let d = ValueDerivatives {
            first: -0.2,
            second: 0.01,
        };
        let a = alpha_star_unconstrained(&b, &[0.06, 0.08], 0.02, 0.0, 4.0, d).unwrap();
        let expected = scale(&b.solve(&[0.04, 0.06]), 20.0);
        assert!(close(&a, &expected, 1e-10));
        let zero = alpha_star_unconstrained(&b, &[0.02, 0.02], 0.02, 0.0, 4.0, d).unwrap();
        assert!(close(&zero, &[0.0, 0.0], 0.0));
    }

    #[test]
    fn decomposition_edge_cases() {
        let m = two_asset_model(None);
        let dec = decompose_no_riskless(&m, 0.0, 10.0, 0.0).unwrap();
        assert_eq!(dec.dollars_a, 0.0);
        assert_eq!(dec.dollars_b, 10.0);
        assert!((dec.wealth() - 10.0).abs() < 1e-15);

        let mut p = m.into_params();
        p.b = crate::market::ParameterCurve::constant(0.0);
        let m0 = p.validate().unwrap();
        let dec = decompose_no_riskless(&m0, 0.0, 10.0, 3.0).unwrap();
        let g = compute_g(&sigma_bundle(&m0, 0.0));
        assert_eq!(dec.fund_b.weights(), g.weights());

        let mr = two_asset_model(Some(0.02));
        let dec = decompose_riskless(&mr, 0.0, 10.0, 0.0).unwrap();
        let flat = dec.flatten();
        let gt = compute_gtilde(&sigma_bundle(&mr, 0.0), 0.1);
        assert!(close(&flat.risky, &scale(gt.risky_weights(), 10.0), 1e-14));
        assert!(matches!(
            decompose_riskless(&two_asset_model(None), 0.0, 1.0, 0.5),
            Err(FundError::RisklessAssetRequired)
        ));
        assert!(matches!(
            decompose_no_riskless(&mr, 0.0, -1.0, 0.5),
            Err(FundError::NegativeWealth(_))
        ));
    }

    #[test]
    fn riskless_decomposition_collapses_when_consumption_is_deterministic() {
        let mut p = two_asset_model(Some(0.02)).into_params();
        p.b = crate::market::ParameterCurve::constant(0.0);
        let m = p.validate().unwrap();
        let dec = decompose_riskless(&m, 0.0, 30.0, 12.0).unwrap();
        assert_eq!(dec.fund_b.weights(), &[1.0, 0.0, 0.0]);
        let flat = dec.flatten();
        let bundle = sigma_bundle(&m, 0.0);
        let ghat = compute_ghat(&bundle, m.mu(0.0), 0.02).unwrap();
        let total: f64 = flat.risky.iter().sum();
        assert!(close(&flat.risky, &scale(ghat.weights(), total), 1e-12));
        // Riskless holding is W − D + D·(1 − eᵀΣ⁻¹(μ − re)).
        assert!((flat.riskless - (30.0 - total)).abs() < 1e-12);
    }

    #[test]
    fn constructors_check_sums() {
        assert!(RelativePortfolioVector::new(vec![0.5, 0.4], "x", false).is_err());
        assert!(DifferenceVector::new(vec![0.5, -0.4], false).is_err());
        assert!(DifferenceVector::new(vec![0.5, -0.5], false).is_ok());
    }
}
