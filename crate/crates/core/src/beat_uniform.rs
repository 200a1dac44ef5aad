//! A prior beating the uniform for the normal mixture: solve Brown's equation
//! for `p` on a truncated box with boundary values that satisfy the
//! admissibility conditions at every boundary, then evaluate the risk gain.

use serde::{Deserialize, Serialize};

use crate::covariance::{CovarianceModel, MixtureModel};
use crate::error::{Error, Result};
use crate::grid::{build_grid, DomainSpec, FaceKind, Grid, ScalarField, TensorField};
use crate::risk::{risk_gain_vs_uniform, GainReport};
use crate::solver::{solve_brown_equation, BrownSolution, ResidualNorm, SolverConfig};

/// `min(4 x1 x2 / (x1 + x2)^2, x1 x2)`.
pub fn mixture_boundary_prior(x: &[f64]) -> f64 {
    let (a, b) = (x[0], x[1]);
    (4.0 * a * b / (a + b).powi(2)).min(a * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct BeatUniformConfig {
    pub lower: f64,
    pub upper: f64,
    pub nodes: usize,
    /// Width of the band along the low edges used for the gain comparison.
    pub band: f64,
    pub solver: SolverConfig,
    pub mixture: MixtureModel,
}

impl Default for BeatUniformConfig {
    fn default() -> Self {
        BeatUniformConfig {
            lower: 0.1,
            upper: 10.0,
            nodes: 100,
            band: 1.0,
            solver: SolverConfig::default(),
            mixture: MixtureModel::default(),
        }
    }
}

impl BeatUniformConfig {
    pub fn grid(&self) -> Result<Grid> {
        let spec = DomainSpec::walled(&[self.lower; 2], &[self.upper; 2])?.with_faces(vec![
            [
                FaceKind::Wall,
                FaceKind::Asymptotic
            ];
            2
        ])?;
        build_grid(spec, &[self.nodes; 2])
    }
}

/// Shape of the solution along the edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeShape {
    /// Mean of `p` over the two low edges divided by its mean over the far edges.
    pub low_to_far: f64,
    /// Whether line means of `p` increase over the first lines away from each low edge.
    pub rises_from_low_edges: bool,
}

pub fn edge_shape(p: &ScalarField, lines: usize) -> EdgeShape {
    let g = p.grid();
    let n = g.shape()[0];
    let line_mean = |axis: usize, k: usize| {
        let other = 1 - axis;
        let s: f64 = (0..g.shape()[other])
            .map(|j| {
                let mut idx = [0usize; 2];
                idx[axis] = k;
                idx[other] = j;
                p.get(g.node(&idx))
            })
            .sum();
        s / g.shape()[other] as f64
    };
    let low = 0.5 * (line_mean(0, 0) + line_mean(1, 0));
    let far = 0.5 * (line_mean(0, n - 1) + line_mean(1, n - 1));
    let rises = (0..2).all(|axis| (0..lines.min(n - 1)).all(|k| line_mean(axis, k) < line_mean(axis, k + 1)));
    EdgeShape { low_to_far: low / far, rises_from_low_edges: rises }
}

#[derive(Debug, Clone)]
pub struct BeatUniform {
    pub v: TensorField,
    /// Nodes whose covariance used the wall blend.
    pub blended: Vec<bool>,
    pub solution: BrownSolution,
    pub gains: GainReport,
    pub band_mean_gain: f64,
    pub interior_mean_gain: f64,
    pub shape: EdgeShape,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeatUniformSummary {
    pub iterations: usize,
    pub final_residual: f64,
    pub min_gain: f64,
    pub max_gain: f64,
    pub band_mean_gain: f64,
    pub interior_mean_gain: f64,
    pub low_to_far_edge_ratio: f64,
    pub rises_from_low_edges: bool,
    pub blended_nodes: usize,
    /// Max gap between the gain and `(grad p)'V(grad p)/(2p)`.
    pub discrepancy_over_p: f64,
    /// Max gap between the gain and `(grad p)'V(grad p)/(2p^2)`.
    pub discrepancy_over_p2: f64,
}

impl BeatUniform {
    pub fn summary(&self) -> BeatUniformSummary {
        BeatUniformSummary {
            iterations: self.solution.iterations,
            final_residual: self.solution.residual,
            min_gain: self.gains.gain.min(),
            max_gain: self.gains.gain.max(),
            band_mean_gain: self.band_mean_gain,
            interior_mean_gain: self.interior_mean_gain,
            low_to_far_edge_ratio: self.shape.low_to_far,
            rises_from_low_edges: self.shape.rises_from_low_edges,
            blended_nodes: self.blended.iter().filter(|b| **b).count(),
            discrepancy_over_p: self.gains.discrepancy_p,
            discrepancy_over_p2: self.gains.discrepancy_p2,
        }
    }
}

/// Runs the experiment with a covariance already tabulated on a grid and the
/// edge values of `boundary` (its interior is the starting guess).
pub fn beat_uniform_with(
    cfg: &BeatUniformConfig,
    v: TensorField,
    blended: Vec<bool>,
    boundary: &ScalarField,
) -> Result<BeatUniform> {
    let solution = solve_brown_equation(&v, boundary, &cfg.solver)?;
    // An rms-converged solve carries no max-norm bound to check against.
    let brown_tol = match cfg.solver.residual_norm {
        ResidualNorm::Max => cfg.solver.residual_tol,
        ResidualNorm::Rms => f64::INFINITY,
    };
    let gains = risk_gain_vs_uniform(&solution.p, &v, brown_tol)?;
    let lo = cfg.lower + cfg.band;
    let band_mean_gain =
        gains.gain.mean_where(|x| x[0] <= lo || x[1] <= lo).ok_or_else(|| Error::Config("empty band".into()))?;
    let interior_mean_gain = gains
        .gain
        .mean_where(|x| x[0] > lo && x[1] > lo)
        .ok_or_else(|| Error::Config("band covers the grid".into()))?;
    let shape = edge_shape(&solution.p, 5);
    Ok(BeatUniform { v, blended, solution, gains, band_mean_gain, interior_mean_gain, shape })
}

pub fn beat_uniform(cfg: &BeatUniformConfig) -> Result<BeatUniform> {
    let g = cfg.grid()?;
    let model = CovarianceModel::Mixture(cfg.mixture);
    let v = model.on_grid(&g)?;
    let blended = model.blended_nodes(&g);
    let boundary = ScalarField::from_fn(&g, mixture_boundary_prior)?;
    beat_uniform_with(cfg, v, blended, &boundary)
}
