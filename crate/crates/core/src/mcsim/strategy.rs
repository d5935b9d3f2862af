//! Feedback investment strategies: dollars in each risky asset as a function
//! of (W, c, t).

use crate::closedform::ClosedFormSolution;
use crate::funds::{decompose_no_riskless, decompose_riskless, FundError};
use crate::hjb::{policy_into, RuinSolution};
use crate::market::{MarketMode, MarketModel};
use crate::scalar::Scalar;

/// Source of the risky-fund dollar amount −ψ_w/ψ_ww.
#[derive(Debug, Clone)]
pub enum RatioSource<T: Scalar> {
    ClosedForm(ClosedFormSolution<T>),
    Hjb(RuinSolution<T>),
}

impl<T: Scalar> RatioSource<T> {
    /// −ψ_w/ψ_ww at (w, c) = c · (−φ_z/φ_zz)(w/c).
    fn risk_dollars(&self, w: T, c: T) -> T {
        match self {
            RatioSource::ClosedForm(sol) => ((c / sol.r - w) / (sol.p - T::one())).max(T::zero()),
            RatioSource::Hjb(sol) => {
                let z = (w / c).max(T::zero()).min(sol.grid.z_max());
                c * sol.risk_ratio_at(z).expect("z clamped into the grid")
            }
        }
    }
}

/// Risky weights of the two funds on one piece of the time axis.
#[derive(Debug, Clone)]
struct FundPair<T> {
    start: T,
    fund_a: Vec<T>,
    fund_b: Vec<T>,
}

/// Holds −ψ_w/ψ_ww dollars in the first fund and the rest of wealth in the
/// second, as the two-fund theorems prescribe.
#[derive(Debug, Clone)]
pub struct TwoFundStrategy<T: Scalar> {
    source: RatioSource<T>,
    mode: MarketMode,
    table: Vec<FundPair<T>>,
}

impl<T: Scalar> TwoFundStrategy<T> {
    pub fn new(
        model: &MarketModel<T>,
        mode: MarketMode,
        source: RatioSource<T>,
    ) -> Result<Self, FundError> {
        let mut table = Vec::new();
        for t in model.evaluation_times() {
            let dec = match mode {
                MarketMode::NoRiskless => decompose_no_riskless(model, t, T::one(), T::zero())?,
                MarketMode::WithRiskless => decompose_riskless(model, t, T::one(), T::zero())?,
            };
            table.push(FundPair {
                start: t,
                fund_a: dec.fund_a.risky_weights().to_vec(),
                fund_b: dec.fund_b.risky_weights().to_vec(),
            });
        }
        Ok(Self {
            source,
            mode,
            table,
        })
    }

    pub fn mode(&self) -> MarketMode {
        self.mode
    }
}

#[derive(Debug, Clone)]
pub enum Strategy<T: Scalar> {
    /// Exact optimum for constant consumption.
    ClosedFormFeedback(ClosedFormSolution<T>),
    /// Interpolated policy from the HJB solver, π = c α*(w/c).
    HjbPolicy(RuinSolution<T>),
    /// Constant fractions of wealth in each risky asset.
    FixedMix(Vec<T>),
    TwoFund(TwoFundStrategy<T>),
}

impl<T: Scalar> Strategy<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Strategy::ClosedFormFeedback(_) => "closed_form_feedback",
            Strategy::HjbPolicy(_) => "hjb_policy",
            Strategy::FixedMix(_) => "fixed_mix",
            Strategy::TwoFund(_) => "two_fund",
        }
    }

    /// Market mode the strategy was built for, if it carries one.
    pub fn required_mode(&self) -> Option<MarketMode> {
        match self {
            Strategy::ClosedFormFeedback(_) => Some(MarketMode::WithRiskless),
            Strategy::HjbPolicy(sol) => Some(sol.mode),
            Strategy::FixedMix(_) => None,
            Strategy::TwoFund(s) => Some(s.mode),
        }
    }

    /// Number of risky assets the strategy trades, if fixed by construction.
    pub fn asset_count(&self) -> Option<usize> {
        match self {
            Strategy::ClosedFormFeedback(sol) => Some(sol.risky_direction.len()),
            Strategy::HjbPolicy(sol) => sol.policy.first().map(Vec::len),
            Strategy::FixedMix(w) => Some(w.len()),
            Strategy::TwoFund(s) => s.table.first().map(|p| p.fund_a.len()),
        }
    }

    /// Dollars per risky asset at wealth `w`, consumption `c`, time `t`.
    #[inline]
    pub fn dollars(&self, w: T, c: T, t: T, out: &mut [T]) {
        match self {
            Strategy::ClosedFormFeedback(sol) => sol.pi_star_into(w, c, out),
            Strategy::HjbPolicy(sol) => {
                let z_max = sol.grid.z_max();
                let z = (w / c).max(T::zero());
                let (zq, stretch) = if z > z_max {
                    match sol.mode {
                        // Keep eᵀα = z beyond the grid.
                        MarketMode::NoRiskless => (z_max, z / z_max),
                        MarketMode::WithRiskless => (z_max, T::one()),
                    }
                } else {
                    (z, T::one())
                };
                policy_into(sol, zq, out).expect("z clamped into the grid");
                for o in out.iter_mut() {
                    *o = c * *o * stretch;
                }
            }
            Strategy::FixedMix(weights) => {
                for (o, &x) in out.iter_mut().zip(weights) {
                    *o = w * x;
                }
            }
            Strategy::TwoFund(s) => {
                let j = s.table.partition_point(|p| p.start <= t).max(1) - 1;
                let pair = &s.table[j];
                let d = s.source.risk_dollars(w, c);
                for ((o, &a), &b) in out.iter_mut().zip(&pair.fund_a).zip(&pair.fund_b) {
                    *o = d * a + (w - d) * b;
                }
            }
        }
    }
}
