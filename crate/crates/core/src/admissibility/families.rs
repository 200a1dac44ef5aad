use std::fmt;
use std::sync::Arc;

use super::{AdmissibilityVerdict, BoundaryDiagnostic, Divergence, Method};
use crate::error::{Error, Result};
use crate::grid::{DomainSpec, FaceKind, ScalarField};

pub type PriorFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum PriorFamily {
    /// `p = r^alpha` on `R^d - {0}`.
    PowerRadial {
        alpha: f64,
        d: usize,
    },
    /// `p = (1 - rho^2)^-alpha` on (-1, 1).
    CorrelationPower {
        alpha: f64,
    },
    /// Distance to the nearest wall of the domain.
    DistanceToBoundary {
        domain: DomainSpec,
    },
    /// Grid values, interpolated multilinearly and extended as a power law
    /// beyond asymptotic faces.
    Tabulated(ScalarField),
    Custom {
        dim: usize,
        f: PriorFn,
    },
}

impl fmt::Debug for PriorFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorFamily::PowerRadial { alpha, d } => write!(f, "PowerRadial(alpha={alpha}, d={d})"),
            PriorFamily::CorrelationPower { alpha } => write!(f, "CorrelationPower(alpha={alpha})"),
            PriorFamily::DistanceToBoundary { .. } => write!(f, "DistanceToBoundary"),
            PriorFamily::Tabulated(_) => write!(f, "Tabulated"),
            PriorFamily::Custom { dim, .. } => write!(f, "Custom({dim})"),
        }
    }
}

impl PriorFamily {
    pub fn custom(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        PriorFamily::Custom { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            PriorFamily::PowerRadial { d, .. } => *d,
            PriorFamily::CorrelationPower { .. } => 1,
            PriorFamily::DistanceToBoundary { domain } => domain.dim(),
            PriorFamily::Tabulated(f) => f.grid().dim(),
            PriorFamily::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PriorFamily::PowerRadial { alpha, .. } => x.iter().map(|v| v * v).sum::<f64>().sqrt().powf(*alpha),
            PriorFamily::CorrelationPower { alpha } => (1.0 - x[0] * x[0]).powf(-alpha),
            PriorFamily::DistanceToBoundary { domain } => domain.distance_to_walls(x),
            PriorFamily::Tabulated(field) => tabulated(field, x),
            PriorFamily::Custom { f, .. } => f(x),
        }
    }
}

/// Interpolates inside the grid box; past an asymptotic face the value at the
/// face is continued as `(x / x_face)^k`, with `k` the log-log slope over the
/// last grid cell.
fn tabulated(field: &ScalarField, x: &[f64]) -> f64 {
    let g = field.grid();
    let spec = g.spec();
    let clamped: Vec<f64> = x.iter().enumerate().map(|(i, v)| v.clamp(spec.lower[i], spec.upper[i])).collect();
    let mut value = field.interpolate(&clamped);
    for i in 0..g.dim() {
        let (face, side) = if x[i] > spec.upper[i] {
            (spec.upper[i], 1)
        } else if x[i] < spec.lower[i] {
            (spec.lower[i], 0)
        } else {
            continue;
        };
        if spec.faces[i][side] != FaceKind::Asymptotic || face <= 0.0 {
            continue;
        }
        let inner = if side == 1 { face - g.spacing()[i] } else { face + g.spacing()[i] };
        if inner <= 0.0 {
            continue;
        }
        let mut y = clamped.clone();
        y[i] = inner;
        let k = (field.interpolate(&clamped) / field.interpolate(&y)).ln() / (face / inner).ln();
        if k.is_finite() {
            value *= (x[i] / face).powf(k);
        }
    }
    value
}

fn diag(id: &str, exponent: f64, divergent: bool) -> BoundaryDiagnostic {
    let divergence = if divergent { Divergence::Divergent } else { Divergence::Convergent };
    BoundaryDiagnostic { id: id.into(), exponent, integrals: Vec::new(), divergence, pass: divergent }
}

/// Exact classification by comparing exponents of `1/(pV)` at each boundary.
///
/// For `r^alpha` with `V = I` on `R^d - {0}` the radial integrand is
/// `r^(1-d-alpha)`, divergent at 0 iff `alpha >= 2-d` and at infinity iff
/// `alpha <= 2-d`. For the correlation family `1/(pV) = (1-rho^2)^(alpha-2)`,
/// divergent at both ends iff `alpha <= 1`.
pub fn classify_power_law(family: &PriorFamily) -> Result<AdmissibilityVerdict> {
    let boundaries = match family {
        PriorFamily::PowerRadial { alpha, d } => {
            let e = (*d as f64) - 1.0 + alpha;
            vec![diag("origin", e, e >= 1.0), diag("infinity", e, e <= 1.0)]
        }
        PriorFamily::CorrelationPower { alpha } => {
            let e = 2.0 - alpha;
            vec![diag("rho=-1", e, e >= 1.0), diag("rho=1", e, e >= 1.0)]
        }
        other => return Err(Error::UnsupportedFamily(format!("{other:?}"))),
    };
    Ok(AdmissibilityVerdict::aggregate(Method::ExactPowerLaw, boundaries, true))
}
