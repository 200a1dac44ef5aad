//! Asymptotic covariance providers: closed-form families, the two-component
//! normal mixture by quadrature, tabulated fields and user closures.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, TensorField};
use crate::linalg::SymMat;
use crate::quadrature::composite_nodes;
use crate::rng::stream;

/// Points closer than this to a mixture wall are reported as near singular.
pub const NEAR_WALL: f64 = 1e-2;
/// Largest condition number of the information matrix that is still inverted.
pub const MAX_CONDITION: f64 = 1e12;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub x1: f64,
    pub x2: f64,
}

impl MixtureParams {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        if !(x1 > 0.0 && x2 > 0.0 && x1.is_finite() && x2.is_finite()) {
            return Err(Error::InvalidDomain(format!("mixture parameters must be positive, got ({x1}, {x2})")));
        }
        Ok(MixtureParams { x1, x2 })
    }

    /// Mixing weight of the component centred at `x2`.
    pub fn q(&self) -> f64 {
        self.x1 / (self.x1 + self.x2)
    }

    pub fn swapped(&self) -> Self {
        MixtureParams { x1: self.x2, x2: self.x1 }
    }

    pub fn mean(&self) -> f64 {
        let q = self.q();
        q * self.x2 - (1.0 - q) * self.x1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    /// Window half-width beyond the component means.
    pub half_width: f64,
    /// Total Gauss-Legendre nodes (20 per panel).
    pub nodes: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { half_width: 10.0, nodes: 2000, rel_tol: 1e-8 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_width >= 6.0) {
            return Err(Error::Config(format!("quadrature half_width {} < 6", self.half_width)));
        }
        if self.nodes < 100 {
            return Err(Error::Config(format!("quadrature nodes {} < 100", self.nodes)));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config("quadrature rel_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Log-weights of the two components: `ln(x2 phi(y+x1))`, `ln(x1 phi(y-x2))`.
fn component_logs(y: f64, t: &MixtureParams) -> (f64, f64) {
    (t.x2.ln() - 0.5 * (y + t.x1).powi(2) - LN_SQRT_2PI, t.x1.ln() - 0.5 * (y - t.x2).powi(2) - LN_SQRT_2PI)
}

pub fn mixture_density(y: f64, theta: &MixtureParams) -> f64 {
    let (a, b) = component_logs(y, theta);
    let m = a.max(b);
    (m + ((a - m).exp() + (b - m).exp()).ln()).exp() / (theta.x1 + theta.x2)
}

/// Score functions `(d/dx1, d/dx2) log f(y)`.
pub fn mixture_scores(y: f64, theta: &MixtureParams) -> (f64, f64) {
    let (a, b) = component_logs(y, theta);
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    // w1, w2: posterior component probabilities, x2 phi(y+x1)/(s f) and x1 phi(y-x2)/(s f).
    let w1 = ea / (ea + eb);
    let w2 = eb / (ea + eb);
    let s = theta.x1 + theta.x2;
    let l1 = -1.0 / s + w2 / theta.x1 - (y + theta.x1) * w1;
    let l2 = -1.0 / s + w1 / theta.x2 + (y - theta.x2) * w2;
    (l1, l2)
}

fn information_at(theta: &MixtureParams, half_width: f64, nodes: usize) -> SymMat {
    let panels = (nodes / 20).max(1);
    let (mut s11, mut s12, mut s22) = (0.0, 0.0, 0.0);
    composite_nodes(-theta.x1 - half_width, theta.x2 + half_width, panels, |y, w| {
        let f = mixture_density(y, theta);
        let (l1, l2) = mixture_scores(y, theta);
        let wf = w * f;
        s11 += wf * l1 * l1;
        s12 += wf * l1 * l2;
        s22 += wf * l2 * l2;
    });
    SymMat::from_upper(2, &[s11, s12, s22])
}

fn max_abs(m: &SymMat) -> f64 {
    m.upper().iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Information matrix `L_ij = int l_i l_j f dy`, refined by node doubling until
/// the largest entry change is below `rel_tol` relative to the largest entry.
pub fn mixture_information(theta: &MixtureParams, q: &QuadratureConfig) -> Result<SymMat> {
    q.validate()?;
    let mut nodes = q.nodes;
    let mut coarse = information_at(theta, q.half_width, nodes);
    let mut achieved = f64::INFINITY;
    for _ in 0..5 {
        let fine = information_at(theta, q.half_width, 2 * nodes);
        let scale = max_abs(&fine).max(f64::MIN_POSITIVE);
        achieved = max_abs(&fine.add(&coarse.scale(-1.0))) / scale;
        if achieved <= q.rel_tol {
            return Ok(fine);
        }
        coarse = fine;
        nodes *= 2;
    }
    Err(Error::QuadratureNonConvergence { achieved, wanted: q.rel_tol })
}

/// `V = L^-1`, refused near the walls or when `L` is ill conditioned.
pub fn mixture_covariance(theta: &MixtureParams, q: &QuadratureConfig) -> Result<SymMat> {
    let l = mixture_information(theta, q)?;
    invert_information(&l, &[theta.x1, theta.x2])
}

fn invert_information(l: &SymMat, at: &[f64]) -> Result<SymMat> {
    let cond = l.condition_number();
    let near_wall = at.iter().any(|v| *v < NEAR_WALL);
    if near_wall || !(cond < MAX_CONDITION) {
        return Err(Error::NearSingular { cond, at: at.to_vec() });
    }
    l.inverse().ok_or(Error::NearSingular { cond, at: at.to_vec() })
}

/// Limits of the information matrix at the walls: as `x1 -> 0`,
/// `L11 -> (exp(x2^2) - 1 - x2^2)/x2^2` and the other entries vanish;
/// symmetrically as `x2 -> 0`.
pub fn mixture_wall_limit(theta: &MixtureParams) -> SymMat {
    let g = |t: f64| {
        let t2 = t * t;
        if t2 < 1e-4 {
            // Series avoids the cancellation in exp(t^2) - 1 - t^2.
            0.5 * t2 + t2 * t2 / 6.0 + t2 * t2 * t2 / 24.0
        } else {
            (t2.exp() - 1.0 - t2) / t2
        }
    };
    if theta.x1 <= theta.x2 {
        SymMat::diag(&[g(theta.x2), 0.0])
    } else {
        SymMat::diag(&[0.0, g(theta.x1)])
    }
}

/// The `n`-sample draws `Y = Z - x1` with probability `1 - q`, `Y = Z + x2` with
/// probability `q`, returned with the Bernoulli labels.
pub fn mixture_sample_labeled(theta: &MixtureParams, n: usize, seed: u64) -> Vec<(f64, bool)> {
    const CHUNK: usize = 4096;
    let q = theta.q();
    let chunks = n.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len)
                .map(move |_| {
                    let b = rng.random::<f64>() < q;
                    let z: f64 = rng.sample(StandardNormal);
                    (if b { z + theta.x2 } else { z - theta.x1 }, b)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn mixture_sample(theta: &MixtureParams, n: usize, seed: u64) -> Vec<f64> {
    mixture_sample_labeled(theta, n, seed).into_iter().map(|(y, _)| y).collect()
}

/// Chi-square quantile with two degrees of freedom.
pub fn chi2_2_quantile(level: f64) -> f64 {
    -2.0 * (1.0 - level).ln()
}

pub const ELLIPSE_SEGMENTS: usize = 64;

/// Closed polyline (first vertex repeated last) of the `level` region of
/// `N(center, V/n)` in two dimensions.
pub fn ellipse(center: [f64; 2], v: &SymMat, n: usize, level: f64) -> Result<Vec<[f64; 2]>> {
    if v.dim() != 2 {
        return Err(Error::Shape("ellipses need a 2x2 covariance".into()));
    }
    if !(0.0 < level && level < 1.0) || n == 0 {
        return Err(Error::Config(format!("need 0 < level < 1 and n >= 1, got {level}, {n}")));
    }
    let root = v.sqrt().ok_or(Error::NotPositiveDefinite { node: 0 })?;
    let r = (chi2_2_quantile(level) / n as f64).sqrt();
    Ok((0..=ELLIPSE_SEGMENTS)
        .map(|k| {
            let t = 2.0 * PI * (k % ELLIPSE_SEGMENTS) as f64 / ELLIPSE_SEGMENTS as f64;
            let d = root.mul_vec(&[r * t.cos(), r * t.sin()]);
            [center[0] + d[0], center[1] + d[1]]
        })
        .collect())
}

#[derive(Debug)]
pub struct EllipseSet {
    pub theta: MixtureParams,
    pub vertices: Result<Vec<[f64; 2]>>,
}

/// Confidence ellipses of the mixture covariance at each `theta`.
pub fn covariance_ellipses(thetas: &[MixtureParams], n: usize, level: f64, q: &QuadratureConfig) -> Vec<EllipseSet> {
    thetas
        .par_iter()
        .map(|t| EllipseSet {
            theta: *t,
            vertices: mixture_covariance(t, q).and_then(|v| ellipse([t.x1, t.x2], &v, n, level)),
        })
        .collect()
}

/// Entry of an information map.
#[derive(Debug, Clone)]
pub struct InfoRow {
    pub theta: MixtureParams,
    pub information: SymMat,
    pub cond: f64,
    /// `None` when the point is near singular.
    pub covariance: Option<SymMat>,
}

pub fn information_map(thetas: &[MixtureParams], q: &QuadratureConfig) -> Result<Vec<InfoRow>> {
    thetas
        .par_iter()
        .map(|t| {
            let l = mixture_information(t, q)?;
            let cond = l.condition_number();
            let covariance = invert_information(&l, &[t.x1, t.x2]).ok();
            Ok(InfoRow { theta: *t, information: l, cond, covariance })
        })
        .collect()
}

pub fn identity_v(d: usize) -> SymMat {
    SymMat::identity(d)
}

/// Asymptotic variance of the correlation coefficient, `(1 - rho^2)^2`.
pub fn correlation_v(rho: f64) -> f64 {
    (1.0 - rho * rho).powi(2)
}

/// Damping of the mixed information term near the walls: the factor on `L12`
/// is 0 at or below `full`, rising linearly to 1 at `end`, and the smaller
/// coordinate decides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields)]
pub struct WallBlend {
    pub full: f64,
    pub end: f64,
}

impl Default for WallBlend {
    fn default() -> Self {
        WallBlend { full: 0.1, end: 0.6 }
    }
}

impl WallBlend {
    /// Weight of the wall limit at `x` (1 means fully replaced).
    pub fn weight(&self, x: &[f64]) -> f64 {
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        ((self.end - lo) / (self.end - self.full)).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct MixtureModel {
    pub quadrature: QuadratureConfig,
    pub blend: Option<WallBlend>,
}

impl Default for MixtureModel {
    fn default() -> Self {
        MixtureModel { quadrature: QuadratureConfig::default(), blend: Some(WallBlend::default()) }
    }
}

impl MixtureModel {
    /// Unblended quadrature information.
    pub fn exact() -> Self {
        MixtureModel { quadrature: QuadratureConfig::default(), blend: None }
    }

    pub fn information(&self, x: &[f64]) -> Result<SymMat> {
        let theta = MixtureParams::new(x[0], x[1])?;
        if x[0] < NEAR_WALL || x[1] < NEAR_WALL {
            return Ok(mixture_wall_limit(&theta));
        }
        let mut l = mixture_information(&theta, &self.quadrature)?;
        if let Some(b) = self.blend {
            let w = b.weight(x);
            l.set(0, 1, (1.0 - w) * l.get(0, 1));
        }
        Ok(l)
    }

    pub fn covariance(&self, x: &[f64]) -> Result<SymMat> {
        let theta = MixtureParams::new(x[0], x[1])?;
        if x[0] < NEAR_WALL || x[1] < NEAR_WALL {
            let l = mixture_information(&theta, &self.quadrature)?;
            return Err(Error::NearSingular { cond: l.condition_number(), at: x.to_vec() });
        }
        invert_information(&self.information(x)?, x)
    }
}

pub type VFn = Arc<dyn Fn(&[f64]) -> SymMat + Send + Sync>;

#[derive(Clone)]
pub enum CovarianceModel {
    Identity {
        dim: usize,
    },
    Constant(SymMat),
    /// One-dimensional correlation coefficient on (-1, 1).
    Correlation,
    Mixture(MixtureModel),
    Tabulated(TensorField),
    Custom {
        dim: usize,
        f: VFn,
    },
}

impl fmt::Debug for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceModel::Identity { dim } => write!(f, "Identity({dim})"),
            CovarianceModel::Constant(m) => write!(f, "Constant({m:?})"),
            CovarianceModel::Correlation => write!(f, "Correlation"),
            CovarianceModel::Mixture(m) => write!(f, "Mixture({m:?})"),
            CovarianceModel::Tabulated(_) => write!(f, "Tabulated"),
            CovarianceModel::Custom { dim, .. } => write!(f, "Custom({dim})"),
        }
    }
}

impl CovarianceModel {
    pub fn custom(dim: usize, f: impl Fn(&[f64]) -> SymMat + Send + Sync + 'static) -> Self {
        CovarianceModel::Custom { dim, f: Arc::new(f) }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceModel::Identity { dim } | CovarianceModel::Custom { dim, .. } => *dim,
            CovarianceModel::Constant(m) => m.dim(),
            CovarianceModel::Correlation => 1,
            CovarianceModel::Mixture(_) => 2,
            CovarianceModel::Tabulated(t) => t.grid().dim(),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("{}-d point for a {}-d covariance", x.len(), self.dim())));
        }
        Ok(())
    }

    pub fn covariance(&self, x: &[f64]) -> Result<SymMat> {
        self.check_point(x)?;
        let v = match self {
            CovarianceModel::Identity { dim } => SymMat::identity(*dim),
            CovarianceModel::Constant(m) => *m,
            CovarianceModel::Correlation => SymMat::scalar(correlation_v(x[0])),
            CovarianceModel::Mixture(m) => return m.covariance(x),
            CovarianceModel::Tabulated(t) => t.interpolate(x),
            CovarianceModel::Custom { f, .. } => f(x),
        };
        if !v.is_positive_definite() {
            return Err(Error::NotPositiveDefinite { node: 0 });
        }
        Ok(v)
    }

    /// `V^-1`. For the mixture this is the quadrature information itself,
    /// which stays available at the walls where `V` does not.
    pub fn information(&self, x: &[f64]) -> Result<SymMat> {
        self.check_point(x)?;
        match self {
            CovarianceModel::Mixture(m) => m.information(x),
            _ => {
                let v = self.covariance(x)?;
                v.inverse().ok_or(Error::NearSingular { cond: v.condition_number(), at: x.to_vec() })
            }
        }
    }

    /// `V` at every grid node, evaluated once (in parallel).
    pub fn on_grid(&self, grid: &Grid) -> Result<TensorField> {
        if grid.dim() != self.dim() {
            return Err(Error::Shape(format!("{}-d grid for a {}-d covariance", grid.dim(), self.dim())));
        }
        if let CovarianceModel::Tabulated(t) = self {
            if t.grid() == grid {
                return Ok(t.clone());
            }
        }
        let values: Result<Vec<SymMat>> =
            (0..grid.len()).into_par_iter().map(|k| self.covariance(&grid.point(k))).collect();
        TensorField::new(grid.clone(), values?)
    }

    /// Nodes where the mixture information was modified by wall blending.
    pub fn blended_nodes(&self, grid: &Grid) -> Vec<bool> {
        match self {
            CovarianceModel::Mixture(MixtureModel { blend: Some(b), .. }) => {
                (0..grid.len()).map(|k| b.weight(&grid.point(k)) > 0.0).collect()
            }
            _ => vec![false; grid.len()],
        }
    }
}

/// Jeffreys density `V^-1/2` for one-dimensional models.
pub fn jeffreys_prior(model: &CovarianceModel, x: f64) -> Result<f64> {
    if model.dim() != 1 {
        return Err(Error::UnsupportedFamily("Jeffreys prior is provided in one dimension only".into()));
    }
    Ok(model.covariance(&[x])?.get(0, 0).powf(-0.5))
}
