//! Policy iteration for the stationary reduced HJB equation in z = w/c:
//!
//! ```text
//! λ v = ((r + b² − a) z − 1) v_z + ½ b² z² v_zz
//!       + min_α [ αᵀ(μ − re) v_z + ½ αᵀΣα v_zz − b αᵀσρ (z v_zz + v_z) ],
//! v(0) = 1, v(z_max) = 0,
//! ```
//!
//! with r = 0 and the constraint eᵀα = z when there is no riskless asset.
//! For a frozen policy the equation is a linear two-point boundary value
//! problem; it is discretized with upwinded drift and centered diffusion,
//! which gives an M-matrix, and solved by tridiagonal elimination. The policy
//! update at each node minimizes the discrete Hamiltonian exactly: the
//! first-order-condition control from [`crate::funds`] with the backward or
//! forward difference, whichever is consistent with the sign of the resulting
//! drift, or the minimum-diffusion control on the zero-drift hyperplane when
//! neither is.

use std::io::Write;

use thiserror::Error;

use crate::funds::{alpha_star_constrained, alpha_star_unconstrained, ValueDerivatives};
use crate::linalg::{dot, max_abs_diff, sum};
use crate::market::{sigma_bundle, MarketMode, MarketModel, SigmaBundle};
use crate::scalar::Scalar;
use crate::tridiag::solve_tridiagonal;

/// Floor applied to the discrete second derivative before dividing by it.
pub const MIN_SECOND_DERIVATIVE: f64 = 1e-12;

/// Slack allowed outside [0, 1] before a solve is declared unstable.
pub const STABILITY_SLACK: f64 = 1e-8;

/// Default truncation multiple for b > 0: z_max = κ / r.
pub const DEFAULT_KAPPA: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HjbError {
    #[error("model not supported by the solver: {0}")]
    UnsupportedModel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(
        "policy iteration did not converge in {iterations} iterations (last change {change:e})"
    )]
    NonConvergence { iterations: usize, change: f64 },
    #[error("value {value} at node {node} (z = {z}) left [0, 1]")]
    InstabilityDetected { node: usize, z: f64, value: f64 },
    #[error("z = {z} outside [0, {z_max}]")]
    OutOfDomain { z: f64, z_max: f64 },
}

/// Uniform grid on [0, z_max].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    z_max: T,
    nodes: usize,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(z_max: T, nodes: usize) -> Result<Self, HjbError> {
        if nodes < 3 {
            return Err(HjbError::InvalidGrid(format!(
                "need at least 3 nodes, got {nodes}"
            )));
        }
        if !(z_max > T::zero()) || !z_max.is_finite() {
            return Err(HjbError::InvalidGrid(format!(
                "z_max = {z_max} must be positive"
            )));
        }
        Ok(Self { z_max, nodes })
    }

    /// Default domain: the safe level 1/r when b = 0 with a riskless asset,
    /// κ/r when b > 0. Without a riskless asset there is no natural truncation
    /// and the caller must choose z_max.
    pub fn for_model(
        model: &MarketModel<T>,
        mode: MarketMode,
        nodes: usize,
        kappa: T,
    ) -> Result<Self, HjbError> {
        let r = match (mode, model.r()) {
            (MarketMode::WithRiskless, Some(r)) if r > T::zero() => r,
            _ => {
                return Err(HjbError::InvalidGrid(
                    "no default truncation without a positive riskless rate; set z_max".into(),
                ))
            }
        };
        let z_max = if model.has_deterministic_consumption() {
            T::one() / r
        } else {
            kappa / r
        };
        Self::new(z_max, nodes)
    }

    pub fn z_max(&self) -> T {
        self.z_max
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn spacing(&self) -> T {
        self.z_max / T::from_usize(self.nodes - 1).unwrap()
    }

    pub fn node(&self, i: usize) -> T {
        if i + 1 == self.nodes {
            self.z_max
        } else {
            T::from_usize(i).unwrap() * self.spacing()
        }
    }

    /// Same spacing on twice the domain.
    pub fn doubled(&self) -> Self {
        Self {
            z_max: self.z_max + self.z_max,
            nodes: 2 * self.nodes - 1,
        }
    }
}

/// How the control at a node was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRule {
    /// First-order condition with the backward difference (drift ≤ 0).
    Backward,
    /// First-order condition with the forward difference (drift ≥ 0).
    Forward,
    /// Minimum diffusion subject to zero drift.
    ZeroDrift,
    /// Risk ratio carried over from the interior where v_zz vanished.
    Extended,
    /// Boundary node, one-sided stencil.
    Boundary,
}

#[derive(Debug, Clone)]
pub struct RuinSolution<T: Scalar> {
    pub grid: GridSpec<T>,
    pub mode: MarketMode,
    /// φ at the nodes.
    pub phi: Vec<T>,
    /// α*(z_i), one n-vector per node.
    pub policy: Vec<Vec<T>>,
    /// −φ_z/φ_zz implied by the control at each node.
    pub risk_ratio: Vec<T>,
    pub rules: Vec<NodeRule>,
    pub iterations: usize,
    /// Max |change| of φ per iteration.
    pub change_history: Vec<T>,
    /// Max interior residual of the nonlinear equation (centered differences).
    pub residual: T,
}

/// Time-homogeneous coefficients of the reduced equation.
struct Coefficients<T: Scalar> {
    mode: MarketMode,
    lambda: T,
    b: T,
    /// r + b² − a (r = 0 without riskless asset).
    state_drift: T,
    mu: Vec<T>,
    r: T,
    bundle: SigmaBundle<T>,
    inv_e: Vec<T>,
    inv_sr: Vec<T>,
    /// Σ⁻¹(excess − bσρ): the drift-sensitivity direction.
    inv_q: Vec<T>,
    q: Vec<T>,
    /// Risk-ratio direction: α changes by this per unit of −φ_z/φ_zz.
    ratio_dir: Vec<T>,
}

impl<T: Scalar> Coefficients<T> {
    fn new(model: &MarketModel<T>, mode: MarketMode) -> Result<Self, HjbError> {
        if !model.is_time_homogeneous() {
            return Err(HjbError::UnsupportedModel(
                "solver handles time-homogeneous coefficients only".into(),
            ));
        }
        let t = T::zero();
        let r = match mode {
            MarketMode::WithRiskless => model.r().ok_or_else(|| {
                HjbError::UnsupportedModel("with_riskless mode needs a riskless rate".into())
            })?,
            MarketMode::NoRiskless => T::zero(),
        };
        let bundle = sigma_bundle(model, t);
        let b = model.b(t);
        let mu = model.mu(t).to_vec();
        let excess: Vec<T> = mu.iter().map(|&m| m - r).collect();
        let q: Vec<T> = excess
            .iter()
            .zip(&bundle.sigma_rho)
            .map(|(&x, &s)| x - b * s)
            .collect();
        let inv_e = bundle.inv_e();
        let inv_sr = bundle.inv_sigma_rho();
        let inv_q = bundle.solve(&q);
        let ratio_dir = match mode {
            MarketMode::WithRiskless => inv_q.clone(),
            // f − b h = Σ⁻¹(q − (eᵀΣ⁻¹q / eᵀΣ⁻¹e) e)
            MarketMode::NoRiskless => {
                let k = sum(&inv_q) / sum(&inv_e);
                inv_q.iter().zip(&inv_e).map(|(&x, &y)| x - k * y).collect()
            }
        };
        Ok(Self {
            mode,
            lambda: model.lambda(t),
            b,
            state_drift: r + b * b - model.a(t),
            mu,
            r,
            bundle,
            inv_e,
            inv_sr,
            inv_q,
            q,
            ratio_dir,
        })
    }

    fn drift(&self, z: T, alpha: &[T]) -> T {
        self.state_drift * z - T::one() + dot(alpha, &self.q)
    }

    /// Coefficient of v_zz: ½|σᵀα − bzρ|² + ½b²z²(1 − ρᵀρ) written out.
    fn diffusion(&self, z: T, alpha: &[T]) -> T {
        let half = T::lit(0.5);
        half * self.b * self.b * z * z + half * self.bundle.quad_form(alpha)
            - self.b * z * dot(alpha, &self.bundle.sigma_rho)
    }

    fn first_order(&self, z: T, d: ValueDerivatives<T>) -> Vec<T> {
        let res = match self.mode {
            MarketMode::WithRiskless => {
                alpha_star_unconstrained(&self.bundle, &self.mu, self.r, self.b, z, d)
            }
            MarketMode::NoRiskless => alpha_star_constrained(&self.bundle, &self.mu, self.b, z, d),
        };
        res.expect("second derivative is floored above zero")
    }

    /// Control with a given risk ratio −φ_z/φ_zz.
    fn with_ratio(&self, z: T, ratio: T) -> Vec<T> {
        self.first_order(
            z,
            ValueDerivatives {
                first: -ratio,
                second: T::one(),
            },
        )
    }

    fn initial(&self, z: T) -> Vec<T> {
        match self.mode {
            MarketMode::WithRiskless => vec![T::zero(); self.mu.len()],
            MarketMode::NoRiskless => {
                let s = sum(&self.inv_e);
                self.inv_e.iter().map(|&x| z * x / s).collect()
            }
        }
    }

    /// Minimizes the diffusion coefficient subject to zero drift (and eᵀα = z
    /// without riskless asset). `None` when the drift does not depend on the
    /// feasible controls.
    fn zero_drift(&self, z: T) -> Option<Vec<T>> {
        let base = self.state_drift * z - T::one();
        let bz = self.b * z;
        let qu = bz * dot(&self.q, &self.inv_sr);
        let qq = dot(&self.q, &self.inv_q);
        let tiny = T::epsilon() * T::lit(1e3);
        match self.mode {
            MarketMode::WithRiskless => {
                if qq <= tiny * (T::one() + qq) {
                    return None;
                }
                let nu = (-base - qu) / qq;
                Some(
                    self.inv_sr
                        .iter()
                        .zip(&self.inv_q)
                        .map(|(&s, &y)| bz * s + nu * y)
                        .collect(),
                )
            }
            MarketMode::NoRiskless => {
                // α = Σ⁻¹(bzσρ + ν₁e + ν₂q); solve the 2×2 system for ν.
                let ee = sum(&self.inv_e);
                let eq = sum(&self.inv_q);
                let eu = bz * sum(&self.inv_sr);
                let det = ee * qq - eq * eq;
                if det.abs() <= tiny * ee * qq.max(T::min_positive_value()) {
                    return None;
                }
                let r1 = z - eu;
                let r2 = -base - qu;
                let nu1 = (r1 * qq - eq * r2) / det;
                let nu2 = (ee * r2 - eq * r1) / det;
                Some(
                    (0..self.mu.len())
                        .map(|i| bz * self.inv_sr[i] + nu1 * self.inv_e[i] + nu2 * self.inv_q[i])
                        .collect(),
                )
            }
        }
    }

    /// Risk ratio R with α = α(z, R), recovered by projection.
    fn implied_ratio(&self, z: T, alpha: &[T]) -> T {
        let base = self.with_ratio(z, T::zero());
        let norm = dot(&self.ratio_dir, &self.ratio_dir);
        if norm == T::zero() {
            return T::zero();
        }
        let diff: Vec<T> = alpha.iter().zip(&base).map(|(&a, &b)| a - b).collect();
        dot(&diff, &self.ratio_dir) / norm
    }
}

fn second_difference<T: Scalar>(v: &[T], i: usize, h: T) -> T {
    (v[i + 1] - (v[i] + v[i]) + v[i - 1]) / (h * h)
}

/// Policy improvement for every node given values `v`.
///
/// Nodes where the discrete φ_zz is not above [`MIN_SECOND_DERIVATIVE`] and
/// the two boundary nodes reuse the risk ratio of the nearest interior node
/// with a usable second difference.
fn improve<T: Scalar>(
    coef: &Coefficients<T>,
    grid: &GridSpec<T>,
    v: &[T],
) -> (Vec<Vec<T>>, Vec<T>, Vec<NodeRule>) {
    let n_nodes = v.len();
    let h = grid.spacing();
    let floor = T::lit(MIN_SECOND_DERIVATIVE);
    let mut policy: Vec<Option<Vec<T>>> = vec![None; n_nodes];
    let mut ratios: Vec<Option<T>> = vec![None; n_nodes];
    let mut rules = vec![NodeRule::Extended; n_nodes];
    rules[0] = NodeRule::Boundary;
    rules[n_nodes - 1] = NodeRule::Boundary;

    for i in 1..n_nodes - 1 {
        let second = second_difference(v, i, h);
        if !(second > floor) {
            continue;
        }
        let z = grid.node(i);
        let back = ValueDerivatives {
            first: (v[i] - v[i - 1]) / h,
            second,
        };
        let alpha_b = coef.first_order(z, back);
        let (alpha, ratio, rule) = if coef.drift(z, &alpha_b) <= T::zero() {
            (alpha_b, back.risk_ratio(), NodeRule::Backward)
        } else {
            let fwd = ValueDerivatives {
                first: (v[i + 1] - v[i]) / h,
                second,
            };
            let alpha_f = coef.first_order(z, fwd);
            if coef.drift(z, &alpha_f) >= T::zero() {
                (alpha_f, fwd.risk_ratio(), NodeRule::Forward)
            } else if let Some(alpha) = coef.zero_drift(z) {
                let ratio = coef.implied_ratio(z, &alpha);
                (alpha, ratio, NodeRule::ZeroDrift)
            } else {
                (alpha_b, back.risk_ratio(), NodeRule::Backward)
            }
        };
        policy[i] = Some(alpha);
        ratios[i] = Some(ratio);
        rules[i] = rule;
    }

    // Fill the remaining nodes from the nearest usable neighbour.
    let mut filled = ratios.clone();
    let mut last = None;
    for r in filled.iter_mut() {
        match r {
            Some(x) => last = Some(*x),
            None => *r = last,
        }
    }
    let mut next = None;
    for (r, orig) in filled.iter_mut().zip(&ratios).rev() {
        match orig {
            Some(x) => next = Some(*x),
            None if r.is_none() => *r = next,
            None => {}
        }
    }
    // Leftmost nodes take their right neighbour, not a far-away left one.
    if ratios[0].is_none() {
        if let Some(first_valid) = ratios.iter().position(Option::is_some) {
            for r in filled.iter_mut().take(first_valid) {
                *r = ratios[first_valid];
            }
        }
    }

    let ratios: Vec<T> = filled.into_iter().map(|r| r.unwrap_or(T::zero())).collect();
    let policy = policy
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.unwrap_or_else(|| coef.with_ratio(grid.node(i), ratios[i])))
        .collect();
    (policy, ratios, rules)
}

/// Solves λv = D v_z + A v_zz for a frozen policy.
fn evaluate_policy<T: Scalar>(
    coef: &Coefficients<T>,
    grid: &GridSpec<T>,
    policy: &[Vec<T>],
) -> Vec<T> {
    let n = grid.nodes();
    let h = grid.spacing();
    let h2 = h * h;
    let mut lower = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut upper = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    diag[0] = T::one();
    rhs[0] = T::one();
    diag[n - 1] = T::one();
    for i in 1..n - 1 {
        let z = grid.node(i);
        let d = coef.drift(z, &policy[i]);
        let a = coef.diffusion(z, &policy[i]).max(T::zero());
        let up = d.max(T::zero()) / h;
        let down = (-d).max(T::zero()) / h;
        lower[i] = -(a / h2 + down);
        upper[i] = -(a / h2 + up);
        diag[i] = coef.lambda + (a + a) / h2 + up + down;
    }
    solve_tridiagonal(&lower, &diag, &upper, &rhs)
}

fn check_stability<T: Scalar>(grid: &GridSpec<T>, v: &[T]) -> Result<(), HjbError> {
    let slack = T::lit(STABILITY_SLACK);
    for (i, &x) in v.iter().enumerate() {
        if !(x >= -slack && x <= T::one() + slack) {
            return Err(HjbError::InstabilityDetected {
                node: i,
                z: grid.node(i).as_f64(),
                value: x.as_f64(),
            });
        }
    }
    Ok(())
}

/// Runs policy iteration until successive value vectors differ by less than
/// `tol` in max norm.
pub fn solve<T: Scalar>(
    model: &MarketModel<T>,
    mode: MarketMode,
    grid: GridSpec<T>,
    tol: T,
    max_iter: usize,
) -> Result<RuinSolution<T>, HjbError> {
    solve_traced(model, mode, grid, tol, max_iter).map(|(sol, _)| sol)
}

/// [`solve`] that also returns every value iterate, starting with the value of
/// the initial policy.
pub fn solve_traced<T: Scalar>(
    model: &MarketModel<T>,
    mode: MarketMode,
    grid: GridSpec<T>,
    tol: T,
    max_iter: usize,
) -> Result<(RuinSolution<T>, Vec<Vec<T>>), HjbError> {
    let coef = Coefficients::new(model, mode)?;
    let initial: Vec<Vec<T>> = (0..grid.nodes())
        .map(|i| coef.initial(grid.node(i)))
        .collect();
    let mut v = evaluate_policy(&coef, &grid, &initial);
    check_stability(&grid, &v)?;
    let mut trace = vec![v.clone()];
    let mut history = Vec::new();
    for iteration in 1..=max_iter {
        let (policy, _, _) = improve(&coef, &grid, &v);
        let next = evaluate_policy(&coef, &grid, &policy);
        check_stability(&grid, &next)?;
        let change = max_abs_diff(&next, &v);
        history.push(change);
        v = next;
        trace.push(v.clone());
        if change < tol {
            let (policy, risk_ratio, rules) = improve(&coef, &grid, &v);
            let mut sol = RuinSolution {
                grid,
                mode,
                phi: v,
                policy,
                risk_ratio,
                rules,
                iterations: iteration,
                change_history: history,
                residual: T::zero(),
            };
            sol.residual = interior_max(&residuals(&coef, &sol));
            return Ok((sol, trace));
        }
    }
    Err(HjbError::NonConvergence {
        iterations: max_iter,
        change: history.last().map_or(f64::NAN, |c| c.as_f64()),
    })
}

fn residuals<T: Scalar>(coef: &Coefficients<T>, sol: &RuinSolution<T>) -> Vec<T> {
    let n = sol.grid.nodes();
    let h = sol.grid.spacing();
    let v = &sol.phi;
    let mut out = vec![T::zero(); n];
    for i in 1..n - 1 {
        let z = sol.grid.node(i);
        let alpha = &sol.policy[i];
        let vz = (v[i + 1] - v[i - 1]) / (h + h);
        let vzz = second_difference(v, i, h);
        out[i] = coef.drift(z, alpha) * vz + coef.diffusion(z, alpha) * vzz - coef.lambda * v[i];
    }
    out
}

fn interior_max<T: Scalar>(res: &[T]) -> T {
    res.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

/// Pointwise residual of the nonlinear equation with the stored policy and
/// centered differences; zero at the two boundary nodes.
pub fn hjb_residual<T: Scalar>(
    sol: &RuinSolution<T>,
    model: &MarketModel<T>,
    mode: MarketMode,
) -> Result<Vec<T>, HjbError> {
    let coef = Coefficients::new(model, mode)?;
    Ok(residuals(&coef, sol))
}

impl<T: Scalar> RuinSolution<T> {
    fn locate(&self, z: T) -> Result<(usize, T), HjbError> {
        let z_max = self.grid.z_max();
        if !(z >= T::zero() && z <= z_max) {
            return Err(HjbError::OutOfDomain {
                z: z.as_f64(),
                z_max: z_max.as_f64(),
            });
        }
        let pos = z / self.grid.spacing();
        let i = pos
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(self.grid.nodes() - 2);
        Ok((i, pos - T::from_usize(i).unwrap()))
    }

    /// Linear interpolation of φ.
    pub fn phi_at(&self, z: T) -> Result<T, HjbError> {
        let (i, w) = self.locate(z)?;
        Ok(self.phi[i] + w * (self.phi[i + 1] - self.phi[i]))
    }

    /// Linear interpolation of −φ_z/φ_zz.
    pub fn risk_ratio_at(&self, z: T) -> Result<T, HjbError> {
        let (i, w) = self.locate(z)?;
        Ok(self.risk_ratio[i] + w * (self.risk_ratio[i + 1] - self.risk_ratio[i]))
    }

    /// Writes `z, phi, alpha_1..alpha_n, residual`.
    pub fn write_csv<W: Write>(
        &self,
        model: &MarketModel<T>,
        out: W,
    ) -> Result<(), Box<dyn std::error::Error>> {
        let res = hjb_residual(self, model, self.mode)?;
        let mut w = csv::Writer::from_writer(out);
        let n = self.policy.first().map_or(0, Vec::len);
        let mut header = vec!["z".to_string(), "phi".to_string()];
        header.extend((1..=n).map(|j| format!("alpha_{j}")));
        header.push("residual".into());
        w.write_record(&header)?;
        for (i, r) in res.iter().enumerate() {
            let mut row = vec![self.grid.node(i).to_string(), self.phi[i].to_string()];
            row.extend(self.policy[i].iter().map(|a| a.to_string()));
            row.push(r.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Stored control at `z`, linearly interpolated between nodes.
pub fn policy_at<T: Scalar>(sol: &RuinSolution<T>, z: T) -> Result<Vec<T>, HjbError> {
    let mut out = vec![T::zero(); sol.policy.first().map_or(0, Vec::len)];
    policy_into(sol, z, &mut out)?;
    Ok(out)
}

/// Allocation-free [`policy_at`].
#[inline]
pub fn policy_into<T: Scalar>(sol: &RuinSolution<T>, z: T, out: &mut [T]) -> Result<(), HjbError> {
    let (i, w) = sol.locate(z)?;
    for ((o, &a), &b) in out.iter_mut().zip(&sol.policy[i]).zip(&sol.policy[i + 1]) {
        *o = a + w * (b - a);
    }
    Ok(())
}

/// Effect of doubling z_max at fixed spacing.
#[derive(Debug, Clone)]
pub struct TruncationReport<T> {
    pub z_max: T,
    /// max |φ_Z − φ_2Z| over [0, Z/2].
    pub inner_half_change: T,
    /// max |φ_Z − φ_2Z| over [0, Z].
    pub full_change: T,
}

pub fn truncation_sensitivity<T: Scalar>(
    model: &MarketModel<T>,
    mode: MarketMode,
    grid: GridSpec<T>,
    tol: T,
    max_iter: usize,
) -> Result<TruncationReport<T>, HjbError> {
    let base = solve(model, mode, grid, tol, max_iter)?;
    let wide = solve(model, mode, grid.doubled(), tol, max_iter)?;
    let half = (grid.nodes() - 1) / 2;
    let mut inner = T::zero();
    let mut full = T::zero();
    for i in 0..grid.nodes() {
        let d = (base.phi[i] - wide.phi[i]).abs();
        full = full.max(d);
        if i <= half {
            inner = inner.max(d);
        }
    }
    Ok(TruncationReport {
        z_max: grid.z_max(),
        inner_half_change: inner,
        full_change: full,
    })
}
