//! Asymptotic admissibility of `pV`: Brown's one-dimensional condition, the
//! radial condition at infinity, the normal-integral condition at walls, exact
//! classification of power-law families and boundary attenuation.
//!
//! Only the one-dimensional condition and the exact families are two-sided.
//! The radial and wall checks are necessary conditions, so passing them gives
//! an inconclusive verdict with every boundary marked as passing.

mod attenuation;
mod checks;
pub mod divergence;
mod families;

use serde::{Deserialize, Serialize};

pub use attenuation::{attenuate, Attenuation};
pub use checks::{
    brown_residual, check_1d, check_bounded_boundary, check_radial, radial_matrix, Directions, FaceSampling, Model,
};
pub use divergence::{Cutoffs, Divergence, EndpointEstimate};
pub use families::{classify_power_law, PriorFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Admissible,
    Inadmissible,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Both one-sided integrals of `1/(pV)` in one dimension.
    OneDimensional,
    /// Radial integral condition at infinity.
    Radial,
    /// Inward normal integrals at walls.
    BoundaryNormal,
    /// Exponent comparison for a parametric family.
    ExactPowerLaw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDiagnostic {
    pub id: String,
    pub exponent: f64,
    pub integrals: Vec<f64>,
    pub divergence: Divergence,
    pub pass: bool,
}

impl BoundaryDiagnostic {
    pub fn from_estimate(id: impl Into<String>, e: EndpointEstimate) -> Self {
        BoundaryDiagnostic {
            id: id.into(),
            exponent: e.exponent,
            pass: e.divergence == Divergence::Divergent,
            divergence: e.divergence,
            integrals: e.integrals,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityVerdict {
    pub verdict: Verdict,
    pub method: Method,
    pub boundaries: Vec<BoundaryDiagnostic>,
}

impl AdmissibilityVerdict {
    /// Aggregates diagnostics. A convergent boundary is always decisive; with
    /// `sufficient` false, passing every boundary stays inconclusive.
    pub fn aggregate(method: Method, boundaries: Vec<BoundaryDiagnostic>, sufficient: bool) -> Self {
        let any = |d: Divergence| boundaries.iter().any(|b| b.divergence == d);
        let verdict = if any(Divergence::Convergent) {
            Verdict::Inadmissible
        } else if any(Divergence::Inconclusive) || !sufficient || boundaries.is_empty() {
            Verdict::Inconclusive
        } else {
            Verdict::Admissible
        };
        AdmissibilityVerdict { verdict, method, boundaries }
    }

    /// Every boundary diagnostic passed (for necessary-only checks: the
    /// condition holds).
    pub fn all_pass(&self) -> bool {
        !self.boundaries.is_empty() && self.boundaries.iter().all(|b| b.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("verdicts serialize")
    }
}
