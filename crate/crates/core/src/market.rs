//! Market and mortality model: n risky assets driven by a k-dimensional
//! Brownian motion, an optional riskless asset, a consumption diffusion, and a
//! deterministic death hazard.

use thiserror::Error;

use crate::linalg::{symmetric_eigenvalues, Cholesky, Matrix};
use crate::scalar::Scalar;

/// Smallest admissible eigenvalue of Σ relative to its largest one.
pub const PD_RELATIVE_TOL: f64 = 1e-12;

/// Rounding slack allowed on ρᵀρ ≤ 1.
const CORRELATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MarketError {
    #[error("covariance matrix is not positive definite at t = {time}: {detail}")]
    NotPositiveDefinite { time: f64, detail: String },
    #[error("correlation vector has rho'rho = {norm_sq} > 1")]
    CorrelationOutOfRange { norm_sq: f64 },
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("parameter {name} is negative ({value}) at t = {time}")]
    NegativeParameter {
        name: &'static str,
        value: f64,
        time: f64,
    },
    #[error("invalid curve {name}: {detail}")]
    InvalidCurve { name: &'static str, detail: String },
}

/// Piecewise-constant function of time.
///
/// `breakpoints[j]` is the time at which segment `j + 1` starts; segment 0
/// starts at t = 0 and the last segment extends to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterCurve<T, V> {
    breakpoints: Vec<T>,
    values: Vec<V>,
}

impl<T: Scalar, V> ParameterCurve<T, V> {
    pub fn constant(value: V) -> Self {
        Self {
            breakpoints: Vec::new(),
            values: vec![value],
        }
    }

    /// `values.len()` must be `breakpoints.len() + 1`; breakpoints strictly
    /// ascending and positive.
    pub fn piecewise(breakpoints: Vec<T>, values: Vec<V>) -> Result<Self, String> {
        if values.len() != breakpoints.len() + 1 {
            return Err(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            ));
        }
        if breakpoints
            .iter()
            .any(|b| !(*b > T::zero()) || !b.is_finite())
        {
            return Err("breakpoints must be finite and > 0".into());
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("breakpoints must be strictly ascending".into());
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn is_constant(&self) -> bool {
        self.values.len() == 1
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[V] {
        &self.values
    }

    pub fn segment_index(&self, t: T) -> usize {
        self.breakpoints.partition_point(|&b| b <= t)
    }

    pub fn at(&self, t: T) -> &V {
        &self.values[self.segment_index(t)]
    }

    /// Segment `j` as `(start, end, value)`; `end` is `None` for the last one.
    pub fn segment(&self, j: usize) -> (T, Option<T>, &V) {
        let start = if j == 0 {
            T::zero()
        } else {
            self.breakpoints[j - 1]
        };
        (start, self.breakpoints.get(j).copied(), &self.values[j])
    }

    pub fn map<W>(&self, f: impl FnMut(&V) -> W) -> ParameterCurve<T, W> {
        ParameterCurve {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(f).collect(),
        }
    }
}

impl<T: Scalar> ParameterCurve<T, T> {
    /// ∫₀ᵗ curve(s) ds.
    pub fn integral(&self, t: T) -> T {
        let mut acc = T::zero();
        for j in 0..self.values.len() {
            let (start, end, &v) = self.segment(j);
            if t <= start {
                break;
            }
            let stop = end.map_or(t, |e| e.min(t));
            acc = acc + v * (stop - start);
        }
        acc
    }

    /// Smallest t with ∫₀ᵗ curve = `level`; `None` if the integral never gets
    /// there. The curve must be nonnegative.
    pub fn integral_inverse(&self, level: T) -> Option<T> {
        let mut acc = T::zero();
        for j in 0..self.values.len() {
            let (start, end, &v) = self.segment(j);
            match end {
                Some(e) => {
                    let mass = v * (e - start);
                    if acc + mass >= level && v > T::zero() {
                        return Some(start + (level - acc) / v);
                    }
                    acc = acc + mass;
                }
                None => {
                    return (v > T::zero()).then(|| start + (level - acc) / v);
                }
            }
        }
        None
    }
}

pub type ScalarCurve<T> = ParameterCurve<T, T>;
pub type VectorCurve<T> = ParameterCurve<T, Vec<T>>;
pub type MatrixCurve<T> = ParameterCurve<T, Matrix<T>>;

/// Unvalidated model parameters. All rates are annual.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketParams<T: Scalar> {
    /// Risky-asset drifts, n-vectors.
    pub mu: VectorCurve<T>,
    /// Volatility matrices, n×k.
    pub sigma: MatrixCurve<T>,
    /// Riskless rate; `None` for a market without a riskless asset.
    pub r: Option<T>,
    /// Consumption drift.
    pub a: ScalarCurve<T>,
    /// Consumption volatility.
    pub b: ScalarCurve<T>,
    /// Correlation of the consumption Brownian motion with each B_i.
    pub rho: Vec<T>,
    /// Death hazard.
    pub lambda: ScalarCurve<T>,
}

impl<T: Scalar> MarketParams<T> {
    /// Constant-coefficient model.
    pub fn constant(
        mu: Vec<T>,
        sigma: Matrix<T>,
        r: Option<T>,
        a: T,
        b: T,
        rho: Vec<T>,
        lambda: T,
    ) -> Self {
        Self {
            mu: ParameterCurve::constant(mu),
            sigma: ParameterCurve::constant(sigma),
            r,
            a: ParameterCurve::constant(a),
            b: ParameterCurve::constant(b),
            rho,
            lambda: ParameterCurve::constant(lambda),
        }
    }

    pub fn validate(self) -> Result<MarketModel<T>, MarketError> {
        validate(self)
    }
}

/// Whether the investor may hold a riskless asset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MarketMode {
    /// Fully invested in risky assets, eᵀπ = W.
    NoRiskless,
    /// Remainder W − eᵀπ earns the riskless rate.
    WithRiskless,
}

impl MarketMode {
    pub fn name(self) -> &'static str {
        match self {
            MarketMode::NoRiskless => "no_riskless",
            MarketMode::WithRiskless => "with_riskless",
        }
    }
}

/// A validated model. Immutable; construct through [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel<T: Scalar> {
    params: MarketParams<T>,
    n: usize,
    k: usize,
}

impl<T: Scalar> MarketModel<T> {
    pub fn params(&self) -> &MarketParams<T> {
        &self.params
    }

    pub fn into_params(self) -> MarketParams<T> {
        self.params
    }

    /// Number of risky assets.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Brownian dimension.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn r(&self) -> Option<T> {
        self.params.r
    }

    pub fn rho(&self) -> &[T] {
        &self.params.rho
    }

    pub fn mu(&self, t: T) -> &[T] {
        self.params.mu.at(t)
    }

    pub fn sigma(&self, t: T) -> &Matrix<T> {
        self.params.sigma.at(t)
    }

    pub fn a(&self, t: T) -> T {
        *self.params.a.at(t)
    }

    pub fn b(&self, t: T) -> T {
        *self.params.b.at(t)
    }

    pub fn lambda(&self, t: T) -> T {
        *self.params.lambda.at(t)
    }

    /// Mode implied by the presence of a riskless rate.
    pub fn mode(&self) -> MarketMode {
        if self.params.r.is_some() {
            MarketMode::WithRiskless
        } else {
            MarketMode::NoRiskless
        }
    }

    pub fn is_time_homogeneous(&self) -> bool {
        let p = &self.params;
        p.mu.is_constant()
            && p.sigma.is_constant()
            && p.a.is_constant()
            && p.b.is_constant()
            && p.lambda.is_constant()
    }

    /// True when b(t) = 0 for all t.
    pub fn has_deterministic_consumption(&self) -> bool {
        self.params.b.values().iter().all(|&b| b == T::zero())
    }

    /// t = 0 followed by every breakpoint of every curve, ascending, deduplicated.
    pub fn evaluation_times(&self) -> Vec<T> {
        evaluation_times(&self.params)
    }
}

fn evaluation_times<T: Scalar>(p: &MarketParams<T>) -> Vec<T> {
    let mut times = vec![T::zero()];
    times.extend_from_slice(p.mu.breakpoints());
    times.extend_from_slice(p.sigma.breakpoints());
    times.extend_from_slice(p.a.breakpoints());
    times.extend_from_slice(p.b.breakpoints());
    times.extend_from_slice(p.lambda.breakpoints());
    times.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    times.dedup();
    times
}

/// Checks every model invariant at t = 0 and at every breakpoint.
pub fn validate<T: Scalar>(params: MarketParams<T>) -> Result<MarketModel<T>, MarketError> {
    let n = params.mu.values()[0].len();
    let k = params.sigma.values()[0].cols();
    if n == 0 {
        return Err(MarketError::DimensionMismatch {
            what: "mu",
            expected: "at least one asset".into(),
            found: "0".into(),
        });
    }
    for mu in params.mu.values() {
        if mu.len() != n {
            return Err(MarketError::DimensionMismatch {
                what: "mu",
                expected: n.to_string(),
                found: mu.len().to_string(),
            });
        }
    }
    for s in params.sigma.values() {
        if s.rows() != n || s.cols() != k {
            return Err(MarketError::DimensionMismatch {
                what: "sigma",
                expected: format!("{n}x{k}"),
                found: format!("{}x{}", s.rows(), s.cols()),
            });
        }
    }
    if params.rho.len() != k {
        return Err(MarketError::DimensionMismatch {
            what: "rho",
            expected: k.to_string(),
            found: params.rho.len().to_string(),
        });
    }
    let finite = params.mu.values().iter().flatten().all(|x| x.is_finite())
        && params
            .sigma
            .values()
            .iter()
            .all(|s| s.as_slice().iter().all(|x| x.is_finite()))
        && params.rho.iter().all(|x| x.is_finite())
        && params.r.is_none_or(|r| r.is_finite());
    if !finite {
        return Err(MarketError::InvalidCurve {
            name: "market",
            detail: "non-finite coefficient".into(),
        });
    }

    let rho_sq: T = params.rho.iter().map(|&x| x * x).sum();
    if rho_sq > T::one() + T::lit(CORRELATION_SLACK) {
        return Err(MarketError::CorrelationOutOfRange {
            norm_sq: rho_sq.as_f64(),
        });
    }
    if let Some(r) = params.r {
        if r < T::zero() {
            return Err(MarketError::NegativeParameter {
                name: "r",
                value: r.as_f64(),
                time: 0.0,
            });
        }
    }

    for t in evaluation_times(&params) {
        let time = t.as_f64();
        for (name, curve) in [("b", &params.b), ("lambda", &params.lambda)] {
            let v = *curve.at(t);
            if !(v >= T::zero()) {
                return Err(MarketError::NegativeParameter {
                    name,
                    value: v.as_f64(),
                    time,
                });
            }
        }
        if !params.a.at(t).is_finite() {
            return Err(MarketError::InvalidCurve {
                name: "a",
                detail: format!("non-finite at t = {time}"),
            });
        }
        let cov = params.sigma.at(t).gram();
        let eig = symmetric_eigenvalues(&cov);
        let (lo, hi) = (eig[0], eig[n - 1]);
        if !(hi > T::zero()) || !(lo > T::lit(PD_RELATIVE_TOL) * hi) {
            return Err(MarketError::NotPositiveDefinite {
                time,
                detail: format!(
                    "eigenvalues in [{:e}, {:e}] (n = {n}, k = {k})",
                    lo.as_f64(),
                    hi.as_f64()
                ),
            });
        }
    }

    Ok(MarketModel { params, n, k })
}

/// Σ = σσᵀ, its inverse, and σρ at one instant.
#[derive(Debug, Clone)]
pub struct SigmaBundle<T: Scalar> {
    pub cov: Matrix<T>,
    pub cov_inv: Matrix<T>,
    pub sigma_rho: Vec<T>,
    chol: Cholesky<T>,
}

impl<T: Scalar> SigmaBundle<T> {
    /// Builds the bundle directly from a volatility matrix and correlations.
    /// Returns `None` when σσᵀ is not positive definite.
    pub fn from_parts(sigma: &Matrix<T>, rho: &[T]) -> Option<Self> {
        let cov = sigma.gram();
        let chol = Cholesky::new(&cov)?;
        let cov_inv = chol.inverse();
        Some(Self {
            sigma_rho: sigma.mul_vec(rho),
            cov,
            cov_inv,
            chol,
        })
    }

    pub fn n(&self) -> usize {
        self.cov.rows()
    }

    /// Σ⁻¹ v via the Cholesky factor.
    pub fn solve(&self, v: &[T]) -> Vec<T> {
        self.chol.solve(v)
    }

    /// Σ⁻¹ e.
    pub fn inv_e(&self) -> Vec<T> {
        self.solve(&vec![T::one(); self.n()])
    }

    /// Σ⁻¹ σρ.
    pub fn inv_sigma_rho(&self) -> Vec<T> {
        self.solve(&self.sigma_rho)
    }

    /// vᵀ Σ v.
    pub fn quad_form(&self, v: &[T]) -> T {
        crate::linalg::dot(v, &self.cov.mul_vec(v))
    }
}

/// Σ(t), Σ(t)⁻¹ and σ(t)ρ for a validated model.
pub fn sigma_bundle<T: Scalar>(model: &MarketModel<T>, t: T) -> SigmaBundle<T> {
    SigmaBundle::from_parts(model.sigma(t), model.rho())
        .expect("validated model has positive definite covariance")
}
