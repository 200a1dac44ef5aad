//! Monte Carlo for the Feynman-Kac representation of risk-matching priors.
//! Experimental: agreement with the boundary-value solve is a finding, not a
//! guarantee.
//!
//! Paths follow `dX = V^(1/2) dW + (b - div V) dt / 2` and are stopped at the
//! first wall crossing. The estimate of `u(x0)` is the mean over exited paths
//! of `exp(-1/2 int b o dX) sqrt(p)(X_T)`, with the Stratonovich integral taken
//! by the midpoint rule.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::grid::DomainSpec;
use crate::linalg::SymMat;
use crate::rng::stream;

/// Step used for the central differences of `V` in the drift.
const DV_STEP: f64 = 1e-5;
/// Step reduction inside the near-wall layer.
const SUBSTEPS: f64 = 10.0;
/// Largest exponent accepted for a path weight.
const MAX_EXPONENT: f64 = 700.0;
/// Censored fraction above which a result is flagged.
pub const CENSOR_FLAG: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct PathConfig {
    pub step: f64,
    pub max_time: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig { step: 1e-3, max_time: 1e3, n_paths: 10_000, seed: 0 }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.max_time > 0.0) {
            return Err(Error::Config(format!("max_time must be positive, got {}", self.max_time)));
        }
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exit {
    pub time: f64,
    pub point: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    /// `(t, x)` at every step, starting with `(0, x0)`.
    pub points: Vec<(f64, Vec<f64>)>,
    /// `None` when the path was censored at `max_time`.
    pub exit: Option<Exit>,
}

struct Outcome {
    exit: Option<Vec<f64>>,
    stratonovich: f64,
}

/// Coefficients of the diffusion: `V` is frozen when it is constant.
struct Dynamics<'a, B> {
    b: &'a B,
    v: &'a CovarianceModel,
    domain: &'a DomainSpec,
    frozen: Option<(SymMat, f64)>,
}

impl<'a, B: Fn(&[f64]) -> Vec<f64> + Sync> Dynamics<'a, B> {
    fn new(b: &'a B, v: &'a CovarianceModel, domain: &'a DomainSpec) -> Result<Self> {
        domain.validate()?;
        if v.dim() != domain.dim() {
            return Err(Error::Shape("covariance and domain dimensions differ".into()));
        }
        let frozen = match v {
            CovarianceModel::Identity { .. } | CovarianceModel::Constant(_) => {
                let m = v.covariance(&domain.lower)?;
                Some((m.sqrt().ok_or(Error::NotPositiveDefinite { node: 0 })?, m.trace()))
            }
            _ => None,
        };
        Ok(Dynamics { b, v, domain, frozen })
    }

    /// `sum_j d_j V_ij`, one-sided where a central stencil would leave the box.
    fn div_v(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = x.len();
        let mut out = vec![0.0; d];
        for j in 0..d {
            let (mut lo, mut hi) = (x.to_vec(), x.to_vec());
            hi[j] = (x[j] + DV_STEP).min(self.domain.upper[j]);
            lo[j] = (x[j] - DV_STEP).max(self.domain.lower[j]);
            let (vh, vl) = (self.v.covariance(&hi)?, self.v.covariance(&lo)?);
            for (i, o) in out.iter_mut().enumerate() {
                *o += (vh.get(i, j) - vl.get(i, j)) / (hi[j] - lo[j]);
            }
        }
        Ok(out)
    }

    /// Drift, square root of `V` and its trace at `x`.
    fn local(&self, x: &[f64]) -> Result<(Vec<f64>, SymMat, f64)> {
        let b = (self.b)(x);
        if b.len() != x.len() {
            return Err(Error::Shape("drift has the wrong dimension".into()));
        }
        let (root, trace, dv) = match self.frozen {
            Some((root, trace)) => (root, trace, vec![0.0; x.len()]),
            None => {
                let v = self.v.covariance(x)?;
                (v.sqrt().ok_or(Error::NotPositiveDefinite { node: 0 })?, v.trace(), self.div_v(x)?)
            }
        };
        let drift = b.iter().zip(&dv).map(|(b, dv)| 0.5 * (b - dv)).collect();
        Ok((drift, root, trace))
    }

    /// Fraction of the step `x -> y` taken before the first wall crossing.
    fn crossing(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        let mut theta = f64::INFINITY;
        for i in 0..x.len() {
            let (lo, hi) = (self.domain.lower[i], self.domain.upper[i]);
            if y[i] <= lo {
                theta = theta.min((x[i] - lo) / (x[i] - y[i]));
            } else if y[i] >= hi {
                theta = theta.min((hi - x[i]) / (y[i] - x[i]));
            }
        }
        theta.is_finite().then(|| theta.clamp(0.0, 1.0))
    }

    fn run(
        &self,
        x0: &[f64],
        cfg: &PathConfig,
        rng: &mut ChaCha8Rng,
        weight: bool,
        mut record: Option<&mut Vec<(f64, Vec<f64>)>>,
    ) -> Result<Outcome> {
        let d = x0.len();
        let mut x = x0.to_vec();
        let mut t = 0.0;
        let mut stratonovich = 0.0;
        if let Some(r) = record.as_deref_mut() {
            r.push((0.0, x.clone()));
        }
        while t < cfg.max_time {
            let (drift, root, trace) = self.local(&x)?;
            let layer = (cfg.step * trace).sqrt();
            let mut dt = if self.domain.distance_to_walls(&x) < layer { cfg.step / SUBSTEPS } else { cfg.step };
            dt = dt.min(cfg.max_time - t);
            let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let noise = root.mul_vec(&z);
            let mut y: Vec<f64> = (0..d).map(|i| x[i] + drift[i] * dt + noise[i] * dt.sqrt()).collect();
            let theta = self.crossing(&x, &y);
            if let Some(th) = theta {
                for i in 0..d {
                    y[i] = x[i] + th * (y[i] - x[i]);
                }
                dt *= th;
            }
            if weight {
                let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
                let bm = (self.b)(&mid);
                stratonovich += bm.iter().zip(x.iter().zip(&y)).map(|(b, (a, c))| b * (c - a)).sum::<f64>();
            }
            t += dt;
            x = y;
            if let Some(r) = record.as_deref_mut() {
                r.push((t, x.clone()));
            }
            if theta.is_some() {
                return Ok(Outcome { exit: Some(x), stratonovich });
            }
        }
        Ok(Outcome { exit: None, stratonovich })
    }
}

fn check_start(domain: &DomainSpec, x0: &[f64]) -> Result<()> {
    if x0.len() != domain.dim() || !domain.contains(x0) {
        return Err(Error::InvalidDomain(format!("start {x0:?} is not inside the domain")));
    }
    Ok(())
}

/// One recorded path; `path_id` selects the random stream.
pub fn simulate_sde<B: Fn(&[f64]) -> Vec<f64> + Sync>(
    b: &B,
    v: &CovarianceModel,
    domain: &DomainSpec,
    x0: &[f64],
    cfg: &PathConfig,
    path_id: u64,
) -> Result<SamplePath> {
    cfg.validate()?;
    check_start(domain, x0)?;
    let dynamics = Dynamics::new(b, v, domain)?;
    let mut points = Vec::new();
    let out = dynamics.run(x0, cfg, &mut stream(cfg.seed, path_id), false, Some(&mut points))?;
    let exit = out.exit.map(|p| {
        let mut point = [0.0; 3];
        point[..p.len()].copy_from_slice(&p);
        Exit { time: points.last().map_or(0.0, |(t, _)| *t), point }
    });
    Ok(SamplePath { points, exit })
}

/// Writes `path_id,t,x1,...,xd` rows.
pub fn write_paths_csv<W: Write>(paths: &[SamplePath], mut w: W) -> Result<()> {
    let d = paths.iter().find_map(|p| p.points.first().map(|(_, x)| x.len())).unwrap_or(1);
    let coords: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    writeln!(w, "path_id,t,{}", coords.join(","))?;
    for (id, path) in paths.iter().enumerate() {
        for (t, x) in &path.points {
            let xs: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{id},{t:.16e},{}", xs.join(","))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_exited: usize,
    pub n_censored: usize,
    /// Standard deviation of the per-path values.
    pub path_std_dev: f64,
    /// Largest weight exponent seen over exited paths.
    pub max_exponent: f64,
    /// More than 1% of the paths were censored.
    pub censoring_flagged: bool,
}

/// Estimates `u(x0)` on a box with walls on every side. `boundary_root_p` is
/// `sqrt(p)` on the walls.
pub fn feynman_kac_estimate<B, P>(
    b: &B,
    v: &CovarianceModel,
    domain: &DomainSpec,
    boundary_root_p: &P,
    x0: &[f64],
    cfg: &PathConfig,
) -> Result<PathResult>
where
    B: Fn(&[f64]) -> Vec<f64> + Sync,
    P: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    if !domain.is_bounded() {
        return Err(Error::InvalidDomain("path estimates need walls on every face".into()));
    }
    check_start(domain, x0)?;
    let dynamics = Dynamics::new(b, v, domain)?;
    // Per path: (exponent, boundary value) or None when censored.
    let outcomes: Vec<Option<(f64, f64)>> = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let out = dynamics.run(x0, cfg, &mut stream(cfg.seed, i), true, None)?;
            Ok(out.exit.map(|x| (-0.5 * out.stratonovich, boundary_root_p(&x))))
        })
        .collect::<Result<_>>()?;
    let exited: Vec<(f64, f64)> = outcomes.iter().flatten().copied().collect();
    let n_exited = exited.len();
    let n_censored = cfg.n_paths - n_exited;
    if n_exited == 0 {
        return Err(Error::AllCensored(n_censored));
    }
    let max_exponent = exited.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    if max_exponent > MAX_EXPONENT {
        return Err(Error::WeightOverflow(max_exponent));
    }
    let values: Vec<f64> = exited.iter().map(|(e, v)| e.exp() * v).collect();
    let n = n_exited as f64;
    let estimate = values.iter().sum::<f64>() / n;
    let var = if n_exited > 1 { values.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(PathResult {
        estimate,
        std_error: (var / n).sqrt(),
        n_exited,
        n_censored,
        path_std_dev: var.sqrt(),
        max_exponent,
        censoring_flagged: n_censored as f64 > CENSOR_FLAG * cfg.n_paths as f64,
    })
}
