//! Random inputs of one path: correlated Brownian increments and the death time.

use rand::Rng;

use crate::market::ScalarCurve;
use crate::scalar::Scalar;

/// Generator of (dB, dB^c) with Corr(dB^c, dB_i) = ρ_i.
///
/// dB^c = ρᵀdB + √(1 − ρᵀρ) · ξ √dt with ξ independent of dB.
#[derive(Debug, Clone)]
pub struct CorrelatedNormals<T> {
    rho: Vec<T>,
    complement: T,
}

impl<T: Scalar> CorrelatedNormals<T> {
    pub fn new(rho: &[T]) -> Self {
        let rho_sq: T = rho.iter().map(|&x| x * x).sum();
        Self {
            rho: rho.to_vec(),
            complement: (T::one() - rho_sq).max(T::zero()).sqrt(),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.len()
    }

    /// Fills `db` with k independent N(0, dt) draws (negated when `negate`,
    /// for antithetic twins) and returns dB^c. With `need_consumption` false
    /// the consumption increment is skipped and zero is returned.
    #[inline]
    pub fn draw<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        sqrt_dt: T,
        negate: bool,
        need_consumption: bool,
        db: &mut [T],
    ) -> T {
        let sign = if negate { -T::one() } else { T::one() };
        for x in db.iter_mut() {
            *x = sign * sqrt_dt * T::standard_normal(rng);
        }
        if !need_consumption {
            return T::zero();
        }
        let mut dbc = T::zero();
        for (&r, &x) in self.rho.iter().zip(db.iter()) {
            dbc = dbc + r * x;
        }
        if self.complement > T::zero() {
            dbc = dbc + sign * self.complement * sqrt_dt * T::standard_normal(rng);
        }
        dbc
    }
}

/// One draw of (dB, dB^c) over a step of length `dt`.
pub fn correlated_increments<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    rho: &[T],
    dt: T,
) -> (Vec<T>, T) {
    let gen = CorrelatedNormals::new(rho);
    let mut db = vec![T::zero(); rho.len()];
    let dbc = gen.draw(rng, dt.sqrt(), false, true, &mut db);
    (db, dbc)
}

/// First jump of a Poisson process with hazard `lambda`, by inverting the
/// cumulative hazard at an Exponential(1) draw. `None` when death falls after
/// `horizon` (censored) or never happens.
pub fn simulate_death<T: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    lambda: &ScalarCurve<T>,
    horizon: T,
) -> Option<T> {
    let level = T::unit_exponential(rng);
    lambda.integral_inverse(level).filter(|&t| t <= horizon)
}
