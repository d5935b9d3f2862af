//! Estimates against a reference probability.

use super::SimResult;

/// |z| above this is flagged.
pub const FLAG_Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub estimate: f64,
    pub std_error: f64,
    pub z_score: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub oracle: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn any_flagged(&self) -> bool {
        self.rows.iter().any(|r| r.flagged)
    }
}

/// z = (estimate − oracle) / SE. A zero SE gives z = 0 on exact agreement and
/// ±∞ otherwise.
pub fn z_score(estimate: f64, std_error: f64, oracle: f64) -> f64 {
    let diff = estimate - oracle;
    if std_error > 0.0 {
        diff / std_error
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

pub fn compare(results: &[SimResult], oracle: f64) -> ComparisonReport {
    let rows = results
        .iter()
        .map(|r| {
            let z = z_score(r.ruin_estimate, r.std_error, oracle);
            ComparisonRow {
                estimate: r.ruin_estimate,
                std_error: r.std_error,
                z_score: z,
                flagged: !(z.abs() <= FLAG_Z),
            }
        })
        .collect();
    ComparisonReport { oracle, rows }
}

/// z-score of the difference of two independent estimates.
pub fn difference_z(a: &SimResult, b: &SimResult) -> f64 {
    let se = (a.std_error * a.std_error + b.std_error * b.std_error).sqrt();
    z_score(a.ruin_estimate - b.ruin_estimate, se, 0.0)
}
