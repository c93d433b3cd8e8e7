// SPDX-License-Identifier: Apache-2.0

//! The JSON report. Field order is fixed by the struct definitions and no
//! wall-clock data is recorded, so identical configs give identical bytes.

use kfspec_core::lq::OverlapCase;
use kfspec_core::{Interval, MassMethod};
use serde::{Deserialize, Serialize};

/// A number with its uncertainty, or flagged exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exact: bool,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            uncertainty: None,
            exact: true,
        }
    }

    pub fn new(value: f64, uncertainty: f64) -> Self {
        Self {
            value,
            uncertainty: Some(uncertainty),
            exact: false,
        }
    }

    /// Midpoint and half-width of an enclosure.
    pub fn from_interval(iv: Interval) -> Self {
        Self::new(iv.mid(), 0.5 * iv.width())
    }

    pub fn uncertainty_or_zero(&self) -> f64 {
        self.uncertainty.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub maps: usize,
    pub affine: bool,
    pub osc: bool,
    pub dimensionally_regular: bool,
    pub probabilities: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqSection {
    pub method: MassMethod,
    pub levels: (usize, usize),
    pub q_rho: Estimate,
    pub raw: f64,
    pub aitken: Option<f64>,
    pub sequence: Vec<(usize, f64)>,
    pub minkowski: Estimate,
    /// Largest `|β_n(1)|` over the levels.
    pub beta_at_one: f64,
    /// Allowance for mass left unresolved by cylinder refinement.
    pub beta_at_one_tolerance: f64,
    pub monotone: bool,
    pub convex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSection {
    pub zeta: Estimate,
    pub q_tilde: Estimate,
    pub tau_at_q_tilde: Estimate,
    pub s_rho: Estimate,
    pub case: OverlapCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSection {
    pub tau_at_zero: Estimate,
    pub dim_s: Estimate,
    /// Root of `Σ (p_i r_i)^s = 1`; meaningful under separation.
    pub similarity_root: Estimate,
    pub overlap: Option<OverlapSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureSection {
    pub level: usize,
    pub zero: Estimate,
    pub strictly_decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PencilSection {
    pub source: String,
    pub atoms: usize,
    pub total_mass: f64,
    pub eigenvalues: Vec<f64>,
    pub eigenvalue_rel_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingSection {
    pub slope: Estimate,
    pub intercept: f64,
    pub rms_residual: f64,
    pub points_used: usize,
    pub min_count: usize,
    pub max_fraction: f64,
    pub max_count: usize,
    pub window_top: f64,
    pub prefactor_at_top: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketingSection {
    pub cuts: Vec<f64>,
    pub points: usize,
    pub max_violation: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSection {
    pub word: String,
    pub factor: f64,
    pub max_relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichSection {
    pub exponent: f64,
    pub threshold: f64,
    pub points: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub source: String,
    pub value: Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Singularity {
    /// The spectral dimension is certainly below 1/2.
    Singular,
    /// Certainly at least 1/2; no conclusion about singularity.
    NotDetected,
    /// The estimate straddles 1/2.
    Inconclusive,
}

/// `q + u < 1/2` proves singularity with respect to Lebesgue measure.
pub fn singularity_flag(q: &Estimate) -> Singularity {
    let u = q.uncertainty_or_zero();
    if q.value + u < 0.5 {
        Singularity::Singular
    } else if q.value - u >= 0.5 || q.exact {
        Singularity::NotDetected
    } else {
        Singularity::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `|lhs - rhs| ≤ tolerance`.
    Within,
    /// `lhs ≤ rhs`.
    AtMost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub name: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub difference: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CrossCheck {
    /// `|lhs - rhs| ≤ tolerance`.
    pub fn close(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let difference = (lhs - rhs).abs();
        Self {
            name: name.into(),
            relation: Relation::Within,
            lhs,
            rhs,
            difference,
            tolerance,
            passed: difference <= tolerance,
        }
    }

    /// `value ≤ bound`.
    pub fn at_most(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            relation: Relation::AtMost,
            lhs: value,
            rhs: bound,
            difference: (value - bound).max(0.0),
            tolerance: 0.0,
            passed: value <= bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NoChecks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tool: String,
    pub version: String,
    pub config_name: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub model: ModelSummary,
    pub lq: Option<LqSection>,
    pub tau: Option<TauSection>,
    pub pressure: Option<PressureSection>,
    pub pencil: Option<PencilSection>,
    pub counting: Option<CountingSection>,
    pub bracketing: Vec<BracketingSection>,
    pub scaling: Vec<ScalingSection>,
    pub sandwich: Option<SandwichSection>,
    pub prediction: Option<Prediction>,
    pub singularity: Option<Singularity>,
    pub cross_checks: Vec<CrossCheck>,
    pub verdict: Verdict,
}

impl Report {
    pub fn verdict_of(checks: &[CrossCheck]) -> Verdict {
        if checks.is_empty() {
            Verdict::NoChecks
        } else if checks.iter().all(|c| c.passed) {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singularity_tristate() {
        assert_eq!(singularity_flag(&Estimate::new(0.387, 0.01)), Singularity::Singular);
        assert_eq!(singularity_flag(&Estimate::new(0.49, 0.02)), Singularity::Inconclusive);
        assert_eq!(singularity_flag(&Estimate::new(0.5, 0.0)), Singularity::NotDetected);
        assert_eq!(singularity_flag(&Estimate::exact(0.5)), Singularity::NotDetected);
    }

    #[test]
    fn estimate_serialization() {
        let e = serde_json::to_string(&Estimate::exact(2.0)).unwrap();
        assert_eq!(e, r#"{"value":2.0,"exact":true}"#);
        let e = serde_json::to_string(&Estimate::new(0.5, 0.01)).unwrap();
        assert_eq!(e, r#"{"value":0.5,"uncertainty":0.01}"#);
    }

    #[test]
    fn checks() {
        assert!(CrossCheck::close("a", 0.39, 0.386, 0.02).passed);
        assert!(!CrossCheck::close("a", 0.41, 0.386, 0.02).passed);
        assert!(CrossCheck::at_most("v", 0.0, 0.0).passed);
        assert_eq!(Report::verdict_of(&[]), Verdict::NoChecks);
    }
}
