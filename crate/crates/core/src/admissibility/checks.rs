use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::divergence::{from_partials, toward_infinity, toward_zero, Cutoffs, Divergence, EndpointEstimate};
use super::{AdmissibilityVerdict, BoundaryDiagnostic, Method, PriorFamily};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::grid::{divergence_form_apply, DomainSpec, FaceKind, ScalarField, TensorField};
use crate::linalg::SymMat;
use crate::quadrature::GaussLegendre;

/// A prior together with a covariance; every check below depends on the
/// pair only through `(pV)^-1 = V^-1 / p`.
#[derive(Debug, Clone, Copy)]
pub struct Model<'a> {
    pub prior: &'a PriorFamily,
    pub covariance: &'a CovarianceModel,
}

impl Model<'_> {
    pub fn inverse_pv(&self, x: &[f64]) -> Result<SymMat> {
        let p = self.prior.eval(x);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::NonPositive { node: 0, value: p });
        }
        Ok(self.covariance.information(x)?.scale(1.0 / p))
    }
}

/// First cutoff toward an infinite end, clear of the other end.
fn far_start(other: f64) -> f64 {
    if other.is_finite() {
        (2.0 * other.abs()).max(1.0)
    } else {
        1.0
    }
}

/// Brown's condition on `(a, b)`: `pV` is admissible iff `int 1/(pV)` diverges
/// at both ends. Ends may be infinite.
pub fn check_1d(pv: impl Fn(f64) -> f64 + Sync, a: f64, b: f64, cut: &Cutoffs) -> Result<AdmissibilityVerdict> {
    cut.validate()?;
    if !(a < b) || a.is_nan() || b.is_nan() {
        return Err(Error::InvalidDomain(format!("need a < b, got ({a}, {b})")));
    }
    let inv = |x: f64| -> Result<f64> {
        let v = pv(x);
        if !(v > 0.0) {
            return Err(Error::NonPositive { node: 0, value: v });
        }
        Ok(1.0 / v)
    };
    let start = cut.start.unwrap_or(if a.is_finite() && b.is_finite() { 0.25 * (b - a) } else { 0.5 });
    let lower = if a.is_finite() {
        toward_zero(|u| inv(a + u), start, cut.levels)?
    } else {
        toward_infinity(|r| inv(-r), far_start(b), cut.levels)?
    };
    let upper = if b.is_finite() {
        toward_zero(|u| inv(b - u), start, cut.levels)?
    } else {
        toward_infinity(inv, far_start(a), cut.levels)?
    };
    let boundaries = vec![
        BoundaryDiagnostic::from_estimate(format!("x={a}"), lower),
        BoundaryDiagnostic::from_estimate(format!("x={b}"), upper),
    ];
    Ok(AdmissibilityVerdict::aggregate(Method::OneDimensional, boundaries, true))
}

/// Directions sampled on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum Directions {
    /// The whole sphere: 2 points in 1-d, 256 angles in 2-d, 1024 spherical
    /// Fibonacci nodes in 3-d.
    Sphere,
    /// The part of the sphere in the positive orthant (domains like the
    /// quarter plane).
    PositiveOrthant,
}

impl Directions {
    /// Unit vectors with equal weights summing to the sphere measure covered.
    pub fn nodes(&self, d: usize) -> Result<(Vec<Vec<f64>>, f64)> {
        let orthant = *self == Directions::PositiveOrthant;
        let keep = |s: &Vec<f64>| !orthant || s.iter().all(|v| *v > 0.0);
        let (all, measure): (Vec<Vec<f64>>, f64) = match d {
            1 => (vec![vec![-1.0], vec![1.0]], 2.0),
            2 => {
                if orthant {
                    let n = 64;
                    let pts = (0..n).map(|j| {
                        let t = (j as f64 + 0.5) * 0.5 * PI / n as f64;
                        vec![t.cos(), t.sin()]
                    });
                    return Ok((pts.collect(), 0.5 * PI));
                }
                let pts = (0..256).map(|j| {
                    let t = (j as f64 + 0.5) * 2.0 * PI / 256.0;
                    vec![t.cos(), t.sin()]
                });
                (pts.collect(), 2.0 * PI)
            }
            3 => {
                let n = 1024;
                let golden = PI * (3.0 - 5f64.sqrt());
                let pts = (0..n).map(|i| {
                    let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                });
                (pts.collect(), 4.0 * PI)
            }
            _ => return Err(Error::InvalidDomain(format!("dimension {d} not in 1..=3"))),
        };
        let total = all.len();
        let kept: Vec<Vec<f64>> = all.into_iter().filter(keep).collect();
        if kept.is_empty() {
            return Err(Error::Config("no directions in the positive orthant".into()));
        }
        let m = measure * kept.len() as f64 / total as f64;
        Ok((kept, m))
    }
}

/// `int_r0^R V^-1(rs) r^(1-d) / p(rs) dr` along direction `s` at each octave
/// cutoff `R = r0 2^k`, `k = 1..=levels`.
pub fn radial_matrix(model: &Model, s: &[f64], r0: f64, levels: usize) -> Result<Vec<SymMat>> {
    let d = s.len();
    let rule = GaussLegendre::order20();
    let mut acc = SymMat::zeros(d);
    let mut out = Vec::with_capacity(levels);
    let mut a = r0;
    for _ in 0..levels {
        let b = 2.0 * a;
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let r = mid + half * x;
            let pt: Vec<f64> = s.iter().map(|c| r * c).collect();
            let m = model.inverse_pv(&pt)?;
            acc = acc.add(&m.scale(w * half * r.powi(1 - d as i32)));
        }
        out.push(acc);
        a = b;
    }
    Ok(out)
}

/// Radial condition at infinity: `int_S s'W(R, s)s ds -> 0` as `R -> inf`, with
/// `W` the inverse of [`radial_matrix`]. The sphere integral decays to zero
/// exactly when its reciprocal grows without bound, which is what is
/// classified. A necessary condition only.
pub fn check_radial(model: &Model, d: usize, directions: Directions, cut: &Cutoffs) -> Result<AdmissibilityVerdict> {
    cut.validate()?;
    if model.covariance.dim() != d || model.prior.dim() != d {
        return Err(Error::Shape("model dimension does not match d".into()));
    }
    let (dirs, measure) = directions.nodes(d)?;
    let r0 = cut.start.unwrap_or(1.0);
    let per_dir: Vec<Vec<f64>> = dirs
        .par_iter()
        .map(|s| {
            radial_matrix(model, s, r0, cut.levels)?
                .iter()
                .map(|j| {
                    let w = j.inverse().ok_or(Error::NearSingular { cond: j.condition_number(), at: s.clone() })?;
                    Ok(w.quad(s))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let weight = measure / dirs.len() as f64;
    let sphere: Vec<f64> = (0..cut.levels).map(|k| weight * per_dir.iter().map(|v| v[k]).sum::<f64>()).collect();
    let reciprocal: Vec<f64> = sphere.iter().map(|v| 1.0 / v).collect();
    let e = from_partials(reciprocal);
    let diag = BoundaryDiagnostic {
        id: "infinity".into(),
        exponent: e.exponent,
        integrals: sphere,
        divergence: e.divergence,
        pass: e.divergence == Divergence::Divergent,
    };
    Ok(AdmissibilityVerdict::aggregate(Method::Radial, vec![diag], false))
}

/// Sample points per axis along each wall face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct FaceSampling {
    pub points_per_axis: usize,
}

impl Default for FaceSampling {
    fn default() -> Self {
        FaceSampling { points_per_axis: 8 }
    }
}

/// Wall `(axis, side)` with `side` 0 for the lower face.
pub(crate) fn walls(domain: &DomainSpec) -> Vec<(usize, usize)> {
    (0..domain.dim())
        .flat_map(|i| (0..2).map(move |side| (i, side)))
        .filter(|&(i, side)| domain.faces[i][side] == FaceKind::Wall)
        .collect()
}

pub(crate) fn wall_position(domain: &DomainSpec, axis: usize, side: usize) -> f64 {
    if side == 0 {
        domain.lower[axis]
    } else {
        domain.upper[axis]
    }
}

pub(crate) fn wall_id(axis: usize, at: f64) -> String {
    format!("x{}={}", axis + 1, at)
}

/// Inward normal integral `int_0^eps nu'(pV)^-1 nu (s - u nu) du` at the wall
/// point `s` (its `axis` coordinate is ignored).
pub(crate) fn normal_integral(
    model: &Model,
    domain: &DomainSpec,
    s: &[f64],
    axis: usize,
    side: usize,
    cut: &Cutoffs,
) -> Result<EndpointEstimate> {
    let wall = wall_position(domain, axis, side);
    let inward = if side == 0 { 1.0 } else { -1.0 };
    let start = cut.start.unwrap_or(0.25 * (domain.upper[axis] - domain.lower[axis]));
    toward_zero(
        |u| {
            let mut x = s.to_vec();
            x[axis] = wall + inward * u;
            Ok(model.inverse_pv(&x)?.get(axis, axis))
        },
        start,
        cut.levels,
    )
}

fn face_points(domain: &DomainSpec, axis: usize, m: usize) -> Vec<Vec<f64>> {
    let d = domain.dim();
    let others: Vec<usize> = (0..d).filter(|&j| j != axis).collect();
    let count = m.pow(others.len() as u32);
    (0..count)
        .map(|mut c| {
            let mut x = vec![0.0; d];
            for &j in &others {
                let k = c % m;
                c /= m;
                x[j] = domain.lower[j] + (k as f64 + 0.5) / m as f64 * (domain.upper[j] - domain.lower[j]);
            }
            x
        })
        .collect()
}

/// Normal-integral condition at every wall face: the inward integral of
/// `nu'(pV)^-1 nu` must diverge at almost every boundary point. Assumes the
/// normal is an eigenvector of `pV` near the wall. A necessary condition only.
pub fn check_bounded_boundary(
    model: &Model,
    domain: &DomainSpec,
    cut: &Cutoffs,
    sampling: &FaceSampling,
) -> Result<AdmissibilityVerdict> {
    domain.validate()?;
    cut.validate()?;
    if model.covariance.dim() != domain.dim() {
        return Err(Error::Shape("model dimension does not match the domain".into()));
    }
    let mut boundaries = Vec::new();
    for (axis, side) in walls(domain) {
        let points = face_points(domain, axis, sampling.points_per_axis.max(1));
        let estimates: Vec<EndpointEstimate> =
            points.par_iter().map(|s| normal_integral(model, domain, s, axis, side, cut)).collect::<Result<_>>()?;
        let rank = |e: &EndpointEstimate| match e.divergence {
            Divergence::Convergent => 0,
            Divergence::Inconclusive => 1,
            Divergence::Divergent => 2,
        };
        // Report the least favourable sample point for the face.
        let worst = estimates
            .into_iter()
            .min_by(|a, b| rank(a).cmp(&rank(b)).then(a.exponent.total_cmp(&b.exponent)))
            .expect("at least one sample point");
        boundaries.push(BoundaryDiagnostic::from_estimate(wall_id(axis, wall_position(domain, axis, side)), worst));
    }
    Ok(AdmissibilityVerdict::aggregate(Method::BoundaryNormal, boundaries, false))
}

/// Max-norm over interior nodes of `sum_ij d_i(p V_ij d_j h)`. A small value
/// with non-constant positive `h` certifies that `p` is not admissible.
pub fn brown_residual(p: &ScalarField, v: &TensorField, h: &ScalarField) -> Result<f64> {
    p.check_positive()?;
    h.check_positive()?;
    let pv = v.scaled_by(p)?;
    Ok(divergence_form_apply(&pv, h)?.max_abs_interior())
}
