//! Monte Carlo estimation of the probability of lifetime ruin under a given
//! investment strategy.
//!
//! Each path owns a ChaCha8 stream keyed by (seed, path index), so results do
//! not depend on thread count or scheduling. Wealth takes Euler steps,
//! consumption takes exact log-normal steps, and the final step is shortened
//! to end exactly at the death time. Ruin is checked at step ends.

mod compare;
mod increments;
mod strategy;

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::market::{MarketMode, MarketModel};
use crate::scalar::Scalar;

pub use compare::{compare, difference_z, z_score, ComparisonReport, ComparisonRow, FLAG_Z};
pub use increments::{correlated_increments, simulate_death, CorrelatedNormals};
pub use strategy::{RatioSource, Strategy, TwoFundStrategy};

/// Relative slack on eᵀπ = W when there is no riskless asset.
pub const BUDGET_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("initial {name} must be positive and finite, got {value}")]
    InvalidInitialState { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub n_paths: usize,
    pub dt: T,
    /// Paths still alive and solvent here are censored.
    pub horizon: T,
    pub seed: u64,
    /// Pair each path with its sign-flipped twin. Needs an even path count.
    pub antithetic: bool,
}

impl<T: Scalar> SimConfig<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n_paths == 0 {
            return Err(SimError::InvalidConfig("n_paths must be at least 1".into()));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon >= T::lit(100.0) * self.dt) || !self.horizon.is_finite() {
            return Err(SimError::InvalidConfig(format!(
                "horizon {} must be finite and at least 100 dt = {}",
                self.horizon,
                T::lit(100.0) * self.dt
            )));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(SimError::InvalidConfig(
                "antithetic sampling needs an even number of paths".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ruined,
    DiedSolvent,
    Censored,
}

impl Outcome {
    pub fn name(self) -> &'static str {
        match self {
            Outcome::Ruined => "ruined",
            Outcome::DiedSolvent => "died_solvent",
            Outcome::Censored => "censored",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord<T> {
    pub index: usize,
    pub outcome: Outcome,
    /// Ruin time, death time or horizon.
    pub end_time: T,
    pub final_wealth: T,
    pub final_consumption: T,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub ruin_estimate: f64,
    pub std_error: f64,
    pub ruined: usize,
    pub died_solvent: usize,
    pub censored: usize,
    pub paths: usize,
    pub antithetic: bool,
}

impl SimResult {
    /// Plain binomial estimate, SE = √(p(1−p)/n).
    pub fn from_counts(ruined: usize, died_solvent: usize, censored: usize) -> Self {
        let paths = ruined + died_solvent + censored;
        let p = ruined as f64 / paths as f64;
        Self {
            ruin_estimate: p,
            std_error: (p * (1.0 - p) / paths as f64).sqrt(),
            ruined,
            died_solvent,
            censored,
            paths,
            antithetic: false,
        }
    }

    fn from_outcomes(outcomes: &[Outcome], antithetic: bool) -> Self {
        let count = |o| outcomes.iter().filter(|&&x| x == o).count();
        let mut res = Self::from_counts(
            count(Outcome::Ruined),
            count(Outcome::DiedSolvent),
            count(Outcome::Censored),
        );
        if antithetic {
            // Twins are dependent, so the error comes from the pair means.
            let pairs: Vec<f64> = outcomes
                .chunks_exact(2)
                .map(|c| c.iter().filter(|&&o| o == Outcome::Ruined).count() as f64 / 2.0)
                .collect();
            let m = pairs.len() as f64;
            let var = if pairs.len() > 1 {
                pairs
                    .iter()
                    .map(|y| (y - res.ruin_estimate).powi(2))
                    .sum::<f64>()
                    / (m - 1.0)
            } else {
                0.0
            };
            res.std_error = (var / m).sqrt();
            res.antithetic = true;
        }
        res
    }
}

/// Parameters frozen over one piece of the time axis.
struct Segment<T: Scalar> {
    start: T,
    excess: Vec<T>,
    sigma: Matrix<T>,
    /// a − ½b², the log-drift of consumption.
    log_drift: T,
    b: T,
}

struct PathContext<'a, T: Scalar> {
    model: &'a MarketModel<T>,
    strategy: &'a Strategy<T>,
    cfg: &'a SimConfig<T>,
    w0: T,
    c0: T,
    normals: CorrelatedNormals<T>,
    segments: Vec<Segment<T>>,
    budget: bool,
    stochastic_consumption: bool,
    r: T,
}

impl<T: Scalar> PathContext<'_, T> {
    fn simulate(&self, index: usize) -> Result<PathRecord<T>, SimError> {
        let (stream, negate) = if self.cfg.antithetic {
            (index / 2, index % 2 == 1)
        } else {
            (index, false)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(stream as u64);

        let death = simulate_death(&mut rng, &self.model.params().lambda, self.cfg.horizon);
        let end = death.unwrap_or(self.cfg.horizon);
        let n = self.model.n();
        let mut pi = vec![T::zero(); n];
        let mut db = vec![T::zero(); self.model.k()];
        let mut vol = vec![T::zero(); self.model.k()];
        let tiny = self.cfg.dt * T::lit(1e-9);

        let mut t = T::zero();
        let mut w = self.w0;
        let mut c = self.c0;
        let mut steps = 0;
        let mut next_break = 1;
        let sqrt_dt = self.cfg.dt.sqrt();
        while end - t > tiny {
            while next_break < self.segments.len() && self.segments[next_break].start <= t + tiny {
                next_break += 1;
            }
            let seg = &self.segments[next_break - 1];
            let mut h = self.cfg.dt.min(end - t);
            if let Some(next) = self.segments.get(next_break) {
                h = h.min(next.start - t);
            }
            self.strategy.dollars(w, c, t, &mut pi);
            if self.budget {
                let total: T = pi.iter().copied().sum();
                if (total - w).abs() > T::lit(BUDGET_TOL) * w.abs().max(T::one()) {
                    return Err(SimError::InvalidStrategy(format!(
                        "holdings sum to {total} but wealth is {w} at t = {t}"
                    )));
                }
            }
            let mut drift = self.r * w - c;
            for (&p, &m) in pi.iter().zip(&seg.excess) {
                drift = drift + p * m;
            }
            for (j, v) in vol.iter_mut().enumerate() {
                *v = (0..n).map(|i| pi[i] * seg.sigma[(i, j)]).sum();
            }
            let dbc = self.normals.draw(
                &mut rng,
                if h == self.cfg.dt { sqrt_dt } else { h.sqrt() },
                negate,
                self.stochastic_consumption,
                &mut db,
            );
            let shock: T = vol.iter().zip(&db).map(|(&v, &x)| v * x).sum();
            w = w + drift * h + shock;

            if seg.log_drift != T::zero() || seg.b != T::zero() {
                c = c * (seg.log_drift * h + seg.b * dbc).exp();
            }
            t = t + h;
            steps += 1;
            if w <= T::zero() {
                return Ok(PathRecord {
                    index,
                    outcome: Outcome::Ruined,
                    end_time: t,
                    final_wealth: w,
                    final_consumption: c,
                    steps,
                });
            }
        }
        Ok(PathRecord {
            index,
            outcome: if death.is_some() {
                Outcome::DiedSolvent
            } else {
                Outcome::Censored
            },
            end_time: end,
            final_wealth: w,
            final_consumption: c,
            steps,
        })
    }
}

fn context<'a, T: Scalar>(
    model: &'a MarketModel<T>,
    strategy: &'a Strategy<T>,
    w0: T,
    c0: T,
    cfg: &'a SimConfig<T>,
) -> Result<PathContext<'a, T>, SimError> {
    cfg.validate()?;
    if !(w0 > T::zero()) || !w0.is_finite() {
        return Err(SimError::InvalidInitialState {
            name: "wealth",
            value: w0.as_f64(),
        });
    }
    if !(c0 > T::zero()) || !c0.is_finite() {
        return Err(SimError::InvalidInitialState {
            name: "consumption",
            value: c0.as_f64(),
        });
    }
    if let Some(n) = strategy.asset_count() {
        if n != model.n() {
            return Err(SimError::InvalidStrategy(format!(
                "{} trades {n} assets but the market has {}",
                strategy.kind(),
                model.n()
            )));
        }
    }
    let mode = strategy.required_mode().unwrap_or(model.mode());
    if mode == MarketMode::WithRiskless && model.r().is_none() {
        return Err(SimError::InvalidStrategy(format!(
            "{} needs a riskless asset but the market has none",
            strategy.kind()
        )));
    }
    if let Strategy::FixedMix(weights) = strategy {
        if mode == MarketMode::NoRiskless {
            let total: T = weights.iter().copied().sum();
            if (total - T::one()).abs() > T::lit(BUDGET_TOL) {
                return Err(SimError::InvalidStrategy(format!(
                    "fixed mix must sum to 1 without a riskless asset, got {total}"
                )));
            }
        }
    }
    let stochastic_consumption = !model.has_deterministic_consumption();
    let r = match mode {
        MarketMode::WithRiskless => model.r().unwrap_or(T::zero()),
        MarketMode::NoRiskless => T::zero(),
    };
    Ok(PathContext {
        model,
        strategy,
        cfg,
        w0,
        c0,
        normals: CorrelatedNormals::new(model.rho()),
        segments: model
            .evaluation_times()
            .into_iter()
            .map(|t| {
                let b = model.b(t);
                Segment {
                    start: t,
                    excess: model.mu(t).iter().map(|&m| m - r).collect(),
                    sigma: model.sigma(t).clone(),
                    log_drift: model.a(t) - T::lit(0.5) * b * b,
                    b,
                }
            })
            .collect(),
        budget: mode == MarketMode::NoRiskless,
        stochastic_consumption,
        r,
    })
}

/// Estimates the ruin probability from (w0, c0).
///
/// A strategy built for the no-riskless market is simulated with all wealth
/// in risky assets, even if the model also carries a rate.
pub fn run<T: Scalar>(
    model: &MarketModel<T>,
    strategy: &Strategy<T>,
    w0: T,
    c0: T,
    cfg: &SimConfig<T>,
) -> Result<SimResult, SimError> {
    let ctx = context(model, strategy, w0, c0, cfg)?;
    let outcomes = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| ctx.simulate(i).map(|r| r.outcome))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimResult::from_outcomes(&outcomes, cfg.antithetic))
}

/// Like [`run`] but also returns one record per path, in path order.
pub fn run_detailed<T: Scalar>(
    model: &MarketModel<T>,
    strategy: &Strategy<T>,
    w0: T,
    c0: T,
    cfg: &SimConfig<T>,
) -> Result<(SimResult, Vec<PathRecord<T>>), SimError> {
    let ctx = context(model, strategy, w0, c0, cfg)?;
    let records = (0..cfg.n_paths)
        .into_par_iter()
        .map(|i| ctx.simulate(i))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes: Vec<Outcome> = records.iter().map(|r| r.outcome).collect();
    Ok((SimResult::from_outcomes(&outcomes, cfg.antithetic), records))
}

/// Writes `path,outcome,end_time,final_wealth,final_consumption,steps`.
pub fn write_path_records<T: Scalar, W: Write>(
    records: &[PathRecord<T>],
    out: W,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "path",
        "outcome",
        "end_time",
        "final_wealth",
        "final_consumption",
        "steps",
    ])?;
    for r in records {
        w.write_record([
            r.index.to_string(),
            r.outcome.name().to_string(),
            r.end_time.to_string(),
            r.final_wealth.to_string(),
            r.final_consumption.to_string(),
            r.steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform;
    use crate::linalg::Matrix;
    use crate::market::{MarketParams, ParameterCurve, ScalarCurve};

    fn example(b: f64) -> MarketModel<f64> {
        MarketParams::constant(
            vec![0.06],
            Matrix::from_rows(&[vec![0.2]]).unwrap(),
            Some(0.02),
            0.0,
            b,
            vec![0.3],
            0.04,
        )
        .validate()
        .unwrap()
    }

    fn cfg(n_paths: usize, seed: u64) -> SimConfig<f64> {
        SimConfig {
            n_paths,
            dt: 0.01,
            horizon: 200.0,
            seed,
            antithetic: false,
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg(10, 0).validate().is_ok());
        assert!(SimConfig {
            n_paths: 0,
            ..cfg(1, 0)
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            dt: 0.0,
            ..cfg(1, 0)
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            horizon: 0.5,
            ..cfg(1, 0)
        }
        .validate()
        .is_err());
        assert!(SimConfig {
            antithetic: true,
            ..cfg(3, 0)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn death_time_mean_matches_hazard() {
        let lambda: ScalarCurve<f64> = ParameterCurve::constant(0.04);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| simulate_death(&mut rng, &lambda, f64::INFINITY).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Exponential(0.04): mean 25, sd 25.
        let se = 25.0 / (n as f64).sqrt();
        assert!((mean - 25.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn piecewise_hazard_survival() {
        let lambda: ScalarCurve<f64> =
            ParameterCurve::piecewise(vec![10.0], vec![0.02, 0.1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 100_000;
        let alive_at_20 = (0..n)
            .filter(|_| simulate_death(&mut rng, &lambda, 20.0).is_none())
            .count() as f64
            / n as f64;
        let exact = (-(0.02 * 10.0 + 0.1 * 10.0f64)).exp();
        let se = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((alive_at_20 - exact).abs() < 3.0 * se);
    }

    #[test]
    fn increment_moments() {
        let rho = [0.3, -0.5];
        let dt: f64 = 0.04;
        let n = 1_000_000;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gen = CorrelatedNormals::new(&rho);
        let mut db = [0.0; 2];
        let (mut s11, mut s22, mut scc, mut s1c, mut s2c, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let c = gen.draw(&mut rng, dt.sqrt(), false, true, &mut db);
            s11 += db[0] * db[0];
            s22 += db[1] * db[1];
            scc += c * c;
            s1c += db[0] * c;
            s2c += db[1] * c;
            s12 += db[0] * db[1];
        }
        let n = n as f64;
        // Each second moment estimate has sd ≤ √2·dt/√n ≈ 5.7e-5.
        let tol = 4.0 * 2f64.sqrt() * dt / n.sqrt();
        assert!((s11 / n - dt).abs() < tol);
        assert!((s22 / n - dt).abs() < tol);
        assert!((scc / n - dt).abs() < tol);
        assert!((s1c / n - rho[0] * dt).abs() < tol);
        assert!((s2c / n - rho[1] * dt).abs() < tol);
        assert!((s12 / n).abs() < tol);
    }

    #[test]
    fn results_are_reproducible() {
        let model = example(0.0);
        let sol = closedform::build(&model, 1.0).unwrap();
        let s = Strategy::ClosedFormFeedback(sol);
        let a = run_detailed(&model, &s, 25.0, 1.0, &cfg(500, 5)).unwrap();
        let b = run_detailed(&model, &s, 25.0, 1.0, &cfg(500, 5)).unwrap();
        assert_eq!(a, b);
        let c = run(&model, &s, 25.0, 1.0, &cfg(500, 6)).unwrap();
        assert_ne!(a.0, c);
        assert_eq!(a.0.paths, 500);
        assert_eq!(a.0.ruined + a.0.died_solvent + a.0.censored, 500);
    }

    #[test]
    fn records_are_in_path_order() {
        let model = example(0.1);
        let s = Strategy::FixedMix(vec![0.5]);
        let (_, recs) = run_detailed(&model, &s, 20.0, 1.0, &cfg(64, 1)).unwrap();
        for (i, r) in recs.iter().enumerate() {
            assert_eq!(r.index, i);
        }
        let mut buf = Vec::new();
        write_path_records(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 65);
    }

    #[test]
    fn safe_wealth_never_ruins() {
        let model = example(0.0);
        let sol = closedform::build(&model, 1.0).unwrap();
        let res = run(
            &model,
            &Strategy::ClosedFormFeedback(sol),
            50.0,
            1.0,
            &cfg(200, 3),
        )
        .unwrap();
        assert_eq!(res.ruined, 0);
        assert_eq!(res.std_error, 0.0);
    }

    #[test]
    fn deterministic_ruin_time_without_risk() {
        // All wealth riskless: dW = (rW − c)dt runs out at T = −ln(1 − rW/c)/r.
        let model = MarketParams::constant(
            vec![0.06],
            Matrix::from_rows(&[vec![0.2]]).unwrap(),
            Some(0.02),
            0.0,
            0.0,
            vec![0.0],
            0.0,
        )
        .validate()
        .unwrap();
        let (res, recs) = run_detailed(
            &model,
            &Strategy::FixedMix(vec![0.0]),
            10.0,
            1.0,
            &cfg(4, 0),
        )
        .unwrap();
        assert_eq!(res.ruined, 4);
        let exact = -(1.0f64 - 0.2).ln() / 0.02;
        for r in recs {
            assert!((r.end_time - exact).abs() < 0.02, "{}", r.end_time);
        }
    }

    #[test]
    fn budget_violation_is_rejected() {
        let no_r = MarketParams::constant(
            vec![0.06, 0.08],
            Matrix::from_rows(&[vec![0.2, 0.0], vec![0.0, 0.3]]).unwrap(),
            None,
            0.0,
            0.0,
            vec![0.0, 0.0],
            0.04,
        )
        .validate()
        .unwrap();
        let err = run(
            &no_r,
            &Strategy::FixedMix(vec![0.5, 0.4]),
            10.0,
            1.0,
            &cfg(4, 0),
        );
        assert!(matches!(err, Err(SimError::InvalidStrategy(_))));
        let sol = closedform::build(&example(0.0), 1.0).unwrap();
        let err = run(
            &no_r,
            &Strategy::ClosedFormFeedback(sol),
            10.0,
            1.0,
            &cfg(4, 0),
        );
        assert!(matches!(err, Err(SimError::InvalidStrategy(_))));
        assert!(run(
            &no_r,
            &Strategy::FixedMix(vec![0.5, 0.5]),
            10.0,
            1.0,
            &cfg(4, 0)
        )
        .is_ok());
    }

    #[test]
    fn antithetic_error_uses_pairs() {
        let outcomes = [
            Outcome::Ruined,
            Outcome::DiedSolvent,
            Outcome::Ruined,
            Outcome::DiedSolvent,
        ];
        let r = SimResult::from_outcomes(&outcomes, true);
        assert_eq!(r.ruin_estimate, 0.5);
        // Every pair mean is exactly 1/2.
        assert_eq!(r.std_error, 0.0);
        let r = SimResult::from_outcomes(&outcomes, false);
        assert!((r.std_error - 0.25).abs() < 1e-15);
    }
}
