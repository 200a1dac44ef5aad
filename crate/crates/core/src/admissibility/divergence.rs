//! Numerical classification of improper integrals as divergent or convergent.
//!
//! The integral is accumulated over octaves toward the singular end. If the
//! integrand behaves like a power of the distance (or of the radius), the
//! octave increments form a geometric sequence whose ratio `2^growth` does not
//! depend on any scale of the integrand. `growth >= 0` means divergence
//! (`growth = 0` exactly is the logarithmic case), `growth < 0` convergence.
//! Aitken extrapolation of the per-octave growth removes the leading
//! correction from smooth lower-order terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

/// Growth at or above `-LOG_BAND` is read as divergence (logarithmic at 0).
pub const LOG_BAND: f64 = 1e-6;
/// Growth at or below `-CONVERGENT_BAND` is read as convergence.
pub const CONVERGENT_BAND: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divergence {
    Divergent,
    Convergent,
    Inconclusive,
}

/// Geometric cutoff schedule: `start * 2^-k` toward a finite end, or
/// `start * 2^k` toward infinity, for `k = 0..=levels`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct Cutoffs {
    /// First cutoff; chosen from the domain when absent.
    pub start: Option<f64>,
    pub levels: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { start: None, levels: 12 }
    }
}

impl Cutoffs {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 4 {
            return Err(Error::Config(format!("need at least 4 cutoff levels, got {}", self.levels)));
        }
        if let Some(s) = self.start {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("cutoff start {s} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointEstimate {
    /// Partial integrals at the successive cutoffs.
    pub integrals: Vec<f64>,
    /// Fitted power of the integrand: `f ~ dist^-exponent` toward a finite end,
    /// `f ~ r^-exponent` toward infinity.
    pub exponent: f64,
    /// Extrapolated log2 ratio of successive octave increments.
    pub growth: f64,
    pub divergence: Divergence,
}

/// One Aitken step on `(a, b, c)`, or `c` when the differences do not shrink
/// geometrically with a fixed sign.
fn aitken(a: f64, b: f64, c: f64) -> f64 {
    let (d1, d2) = (b - a, c - b);
    let den = d2 - d1;
    if den == 0.0 || d2 == 0.0 || d2 / d1 <= 0.0 || (d2 / d1).abs() >= 1.0 {
        return c;
    }
    let acc = c - d2 * d2 / den;
    if acc.is_finite() {
        acc
    } else {
        c
    }
}

fn aitken_all(s: &[f64]) -> Vec<f64> {
    s.windows(3).map(|w| aitken(w[0], w[1], w[2])).collect()
}

/// Extrapolated growth of a sequence of partial integrals: log2 ratios of
/// octave increments, accelerated by two rounds of Aitken.
pub fn growth_of(partials: &[f64]) -> f64 {
    let incr: Vec<f64> = partials.windows(2).map(|w| w[1] - w[0]).collect();
    let g: Vec<f64> = incr.windows(2).map(|w| (w[1] / w[0]).log2()).collect();
    let n = g.len();
    if n < 3 || g[n - 3..].iter().any(|x| !x.is_finite()) {
        return f64::NAN;
    }
    if n < 5 || g[n - 5..].iter().any(|x| !x.is_finite()) {
        return aitken(g[n - 3], g[n - 2], g[n - 1]);
    }
    let once = aitken_all(&g[n - 5..]);
    aitken(once[0], once[1], once[2])
}

pub fn classify_growth(growth: f64) -> Divergence {
    if growth.is_nan() {
        Divergence::Inconclusive
    } else if growth >= -LOG_BAND {
        Divergence::Divergent
    } else if growth <= -CONVERGENT_BAND {
        Divergence::Convergent
    } else {
        Divergence::Inconclusive
    }
}

fn octave(f: &mut impl FnMut(f64) -> Result<f64>, a: f64, b: f64) -> Result<f64> {
    let rule = GaussLegendre::order20();
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    let mut s = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(mid + half * x)?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::NonPositive { node: 0, value: v });
        }
        s += w * v;
    }
    Ok(s * half)
}

/// `int_u^start f` for `u = start 2^-k`, where `f` is evaluated at the distance
/// from the singular end.
pub fn toward_zero(mut f: impl FnMut(f64) -> Result<f64>, start: f64, levels: usize) -> Result<EndpointEstimate> {
    let mut integrals = vec![0.0];
    let mut b = start;
    for _ in 0..levels {
        let a = 0.5 * b;
        let s = integrals[integrals.len() - 1] + octave(&mut f, a, b)?;
        integrals.push(s);
        b = a;
    }
    let growth = growth_of(&integrals);
    Ok(EndpointEstimate { exponent: 1.0 + growth, divergence: classify_growth(growth), integrals, growth })
}

/// `int_start^R f` for `R = start 2^k`.
pub fn toward_infinity(mut f: impl FnMut(f64) -> Result<f64>, start: f64, levels: usize) -> Result<EndpointEstimate> {
    let mut integrals = vec![0.0];
    let mut a = start;
    for _ in 0..levels {
        let b = 2.0 * a;
        let s = integrals[integrals.len() - 1] + octave(&mut f, a, b)?;
        integrals.push(s);
        a = b;
    }
    let growth = growth_of(&integrals);
    Ok(EndpointEstimate { exponent: 1.0 - growth, divergence: classify_growth(growth), integrals, growth })
}

/// Classifies a given sequence of partial quantities at geometric cutoffs
/// (radial schedules, where the quantity is not a plain integral).
pub fn from_partials(integrals: Vec<f64>) -> EndpointEstimate {
    let growth = growth_of(&integrals);
    EndpointEstimate { exponent: 1.0 - growth, divergence: classify_growth(growth), integrals, growth }
}
