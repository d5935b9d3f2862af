//! Exact solution for constant coefficients, a riskless asset and constant
//! consumption:
//!
//! ```text
//! ψ(w) = (1 − r w / c)^p,            0 ≤ w ≤ c/r
//! m    = ½ (μ − re)ᵀ Σ⁻¹ (μ − re)
//! p    = [(r + λ + m) + √((r + λ + m)² − 4rλ)] / 2r
//! π*   = (c/r − w)/(p − 1) · Σ⁻¹(μ − re)
//! ```

use thiserror::Error;

use crate::funds::ValueDerivatives;
use crate::linalg::{dot, scale, Matrix};
use crate::market::{sigma_bundle, MarketModel};
use crate::scalar::Scalar;

/// Exponents at or below 1 + this are rejected (π* divides by p − 1).
pub const MIN_EXPONENT_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClosedFormError {
    #[error("closed form unavailable: {0}")]
    UnsupportedModel(String),
    #[error("riskless rate {0} must be positive")]
    NonpositiveRate(f64),
    #[error("consumption rate {0} must be positive")]
    NonpositiveConsumption(f64),
    #[error("exponent p = {0} is not above 1: optimal leverage is unbounded")]
    DegenerateExponent(f64),
    #[error("wealth {0} is negative")]
    NegativeWealth(f64),
    #[error("wealth {w} outside the open interval (0, {safe_level})")]
    OutOfDomain { w: f64, safe_level: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormSolution<T: Scalar> {
    pub r: T,
    pub lambda: T,
    /// Consumption rate, currency per year.
    pub c: T,
    /// Half the squared market price of risk.
    pub m: T,
    pub p: T,
    /// c / r.
    pub safe_level: T,
    /// Σ⁻¹(μ − re).
    pub risky_direction: Vec<T>,
    excess: Vec<T>,
    cov: Matrix<T>,
}

/// Larger root of r p² − (r + λ + m) p + λ = 0.
pub fn exponent<T: Scalar>(r: T, lambda: T, m: T) -> T {
    let s = r + lambda + m;
    let disc = s * s - T::lit(4.0) * r * lambda;
    (s + disc.max(T::zero()).sqrt()) / (T::lit(2.0) * r)
}

pub fn build<T: Scalar>(
    model: &MarketModel<T>,
    c: T,
) -> Result<ClosedFormSolution<T>, ClosedFormError> {
    if !model.is_time_homogeneous() {
        return Err(ClosedFormError::UnsupportedModel(
            "coefficients are time-varying".into(),
        ));
    }
    let r = model
        .r()
        .ok_or_else(|| ClosedFormError::UnsupportedModel("no riskless asset".into()))?;
    let t = T::zero();
    if model.b(t) != T::zero() {
        return Err(ClosedFormError::UnsupportedModel(format!(
            "consumption volatility b = {} must be 0",
            model.b(t)
        )));
    }
    if model.a(t) != T::zero() {
        return Err(ClosedFormError::UnsupportedModel(format!(
            "consumption drift a = {} must be 0 (constant consumption)",
            model.a(t)
        )));
    }
    if !(r > T::zero()) {
        return Err(ClosedFormError::NonpositiveRate(r.as_f64()));
    }
    if !(c > T::zero()) {
        return Err(ClosedFormError::NonpositiveConsumption(c.as_f64()));
    }
    let bundle = sigma_bundle(model, t);
    let excess: Vec<T> = model.mu(t).iter().map(|&m| m - r).collect();
    let risky_direction = bundle.solve(&excess);
    let m = T::lit(0.5) * dot(&excess, &risky_direction);
    let lambda = model.lambda(t);
    let p = exponent(r, lambda, m);
    if !(p > T::one() + T::lit(MIN_EXPONENT_GAP)) {
        return Err(ClosedFormError::DegenerateExponent(p.as_f64()));
    }
    Ok(ClosedFormSolution {
        r,
        lambda,
        c,
        m,
        p,
        safe_level: c / r,
        risky_direction,
        excess,
        cov: bundle.cov,
    })
}

impl<T: Scalar> ClosedFormSolution<T> {
    /// r p² − (r + λ + m) p + λ.
    pub fn exponent_residual(&self) -> T {
        self.r * self.p * self.p - (self.r + self.lambda + self.m) * self.p + self.lambda
    }

    /// Same solution for a different consumption rate.
    pub fn with_consumption(&self, c: T) -> Self {
        Self {
            c,
            safe_level: c / self.r,
            ..self.clone()
        }
    }

    /// Minimum probability of lifetime ruin; zero at and above the safe level.
    pub fn psi(&self, w: T) -> Result<T, ClosedFormError> {
        if w < T::zero() {
            return Err(ClosedFormError::NegativeWealth(w.as_f64()));
        }
        if w >= self.safe_level {
            return Ok(T::zero());
        }
        Ok((T::one() - self.r * w / self.c).powf(self.p))
    }

    /// ψ_w and ψ_ww on the open interval (0, c/r).
    pub fn psi_derivatives(&self, w: T) -> Result<ValueDerivatives<T>, ClosedFormError> {
        if !(w > T::zero() && w < self.safe_level) {
            return Err(ClosedFormError::OutOfDomain {
                w: w.as_f64(),
                safe_level: self.safe_level.as_f64(),
            });
        }
        let k = self.r / self.c;
        let u = T::one() - k * w;
        let p = self.p;
        Ok(ValueDerivatives {
            first: -p * k * u.powf(p - T::one()),
            second: p * (p - T::one()) * k * k * u.powf(p - T::lit(2.0)),
        })
    }

    /// −ψ_w/ψ_ww = (c/r − w)/(p − 1), the dollar amount in the risky fund.
    /// Zero above the safe level.
    pub fn risk_dollars(&self, w: T) -> Result<T, ClosedFormError> {
        if w < T::zero() {
            return Err(ClosedFormError::OutOfDomain {
                w: w.as_f64(),
                safe_level: self.safe_level.as_f64(),
            });
        }
        Ok(((self.safe_level - w) / (self.p - T::one())).max(T::zero()))
    }

    /// Optimal dollars per risky asset, (c/r − w)/(p − 1) · Σ⁻¹(μ − re).
    pub fn pi_star(&self, w: T) -> Result<Vec<T>, ClosedFormError> {
        Ok(scale(&self.risky_direction, self.risk_dollars(w)?))
    }

    /// Optimal dollars at wealth `w` when consumption is currently `c`
    /// (ψ depends on w/c only), written into `out` without allocating.
    #[inline]
    pub fn pi_star_into(&self, w: T, c: T, out: &mut [T]) {
        let d = ((c / self.r - w) / (self.p - T::one())).max(T::zero());
        for (o, &x) in out.iter_mut().zip(&self.risky_direction) {
            *o = d * x;
        }
    }

    /// Residual of the stationary HJB equation
    /// λψ = (rw − c)ψ_w + πᵀ(μ − re)ψ_w + ½ πᵀΣπ ψ_ww
    /// evaluated with the closed-form ψ and π* at interior wealth `w`.
    pub fn hjb_residual(&self, w: T) -> Result<T, ClosedFormError> {
        let psi = self.psi(w)?;
        let d = self.psi_derivatives(w)?;
        let pi = self.pi_star(w)?;
        let sigma_pi = self.cov.mul_vec(&pi);
        let rhs = (self.r * w - self.c) * d.first
            + dot(&pi, &self.excess) * d.first
            + T::lit(0.5) * dot(&pi, &sigma_pi) * d.second;
        Ok(self.lambda * psi - rhs)
    }
}
