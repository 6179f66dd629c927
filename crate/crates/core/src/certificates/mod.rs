//! Executable versions of the proof machinery: restricted isometry constants
//! for `[A, I]`, random-matrix spectral checks, and golfing-scheme dual
//! certificates with their verifiers.
//!
//! Every margin is reported as an `(achieved, required)` pair. A failed
//! margin means "no certificate found", not "recovery fails"; the conditions
//! are sufficient only.

mod cs_golf;
mod mc_golf;
mod rip;
mod spectral;

pub use cs_golf::{build_cs_certificate, cs_block_count, cs_partition, verify_cs_inexact_duality, CsCertificate, CsDualityReport};
pub use mc_golf::{
    build_mc_certificate, build_mc_certificate_with, mc_block_count, mc_block_rates, tangent_gamma_norms,
    verify_mc_duality, McCertificate, McDualityInputs, McDualityReport,
};
pub use rip::{check_cross_term, rip_constant_exact, rip_deviation, CrossTermReport, RipReport, RIP_BUDGET};
pub use spectral::{
    gaussian_norm_bound, sampling_spectral_ratio, spectral_check_gaussian, spectral_check_rows, tangent_deviation,
    tangent_sup_ratio, RowCheck,
};

use serde::Serialize;

use crate::error::{invalid, Result};

/// One inequality `achieved ≤ required`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Margin {
    pub name: &'static str,
    pub achieved: f64,
    pub required: f64,
    pub passed: bool,
}

impl Margin {
    pub fn new(name: &'static str, achieved: f64, required: f64) -> Self {
        Margin {
            name,
            achieved,
            required,
            passed: achieved <= required,
        }
    }

    /// `achieved < required`.
    pub fn strict(name: &'static str, achieved: f64, required: f64) -> Self {
        Margin {
            name,
            achieved,
            required,
            passed: achieved < required,
        }
    }
}

pub fn all_passed(margins: &[Margin]) -> bool {
    margins.iter().all(|m| m.passed)
}

/// Threshold used by the statement of the stability bound.
pub const STABILITY_DELTA_STRICT: f64 = 1.0 / 18.0;
/// Threshold under which the stability constant is finite.
pub const STABILITY_DELTA_PROOF: f64 = 1.0 / 9.0;

/// `K(δ) = 4√(13 + 13δ)/(1 − 9δ)` for `0 ≤ δ < 1/9`.
pub fn stability_constant(delta: f64) -> Result<f64> {
    if !(0.0..STABILITY_DELTA_PROOF).contains(&delta) {
        return invalid(format!("stability constant needs 0 <= delta < 1/9, got {delta}"));
    }
    Ok(4.0 * (13.0 + 13.0 * delta).sqrt() / (1.0 - 9.0 * delta))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityThresholds {
    pub delta: f64,
    pub below_strict: bool,
    pub below_proof: bool,
    pub constant: Option<f64>,
}

pub fn stability_thresholds(delta: f64) -> StabilityThresholds {
    StabilityThresholds {
        delta,
        below_strict: delta < STABILITY_DELTA_STRICT,
        below_proof: delta < STABILITY_DELTA_PROOF,
        constant: stability_constant(delta).ok(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stability_constant_values() {
        assert!((stability_constant(0.0).unwrap() - 14.422_205_101_855_956).abs() < 1e-12);
        assert!(stability_constant(0.111).unwrap() > 1e4);
        assert!(stability_constant(1.0 / 9.0).is_err());
        assert!(stability_constant(-0.01).is_err());
        let mut prev = 0.0;
        for i in 0..100 {
            let k = stability_constant(i as f64 * 0.0011).unwrap();
            assert!(k > prev);
            prev = k;
        }
        let t = stability_thresholds(0.08);
        assert!(!t.below_strict && t.below_proof && t.constant.is_some());
    }
}
