//! Elliptic solves: Brown's equation by over-relaxation, the principal
//! eigenpair of the risk operator, and risk-matching priors.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{stencil_at, Grid, ScalarField, Stencil, TensorField, VectorField};
use crate::linalg::BandMatrix;
use crate::risk::{risk_of_decision, risk_of_prior, RiskField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum ResidualNorm {
    Max,
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub omega: f64,
    pub max_iters: usize,
    pub residual_tol: f64,
    pub residual_norm: ResidualNorm,
    /// Sweeps between residual evaluations.
    pub check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            omega: 1.5,
            max_iters: 200_000,
            residual_tol: 0.01,
            residual_norm: ResidualNorm::Max,
            check_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega > 0.0 && self.omega < 2.0) {
            return Err(Error::Config(format!("omega {} not in (0, 2)", self.omega)));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::Config("residual_tol must be positive".into()));
        }
        if self.max_iters == 0 || self.check_every == 0 {
            return Err(Error::Config("max_iters and check_every must be positive".into()));
        }
        Ok(())
    }
}

/// Stencils of `sum_ij d_i(A_ij d_j .)` at interior nodes, grouped by colour.
struct Operator {
    stencils: Vec<Option<Stencil>>,
    colors: Vec<Vec<usize>>,
}

impl Operator {
    fn new(a: &TensorField) -> Result<Self> {
        a.check_positive_definite_interior()?;
        let g = a.grid();
        let stencils: Vec<Option<Stencil>> =
            (0..g.len()).into_par_iter().map(|k| g.is_interior(k).then(|| stencil_at(a, k))).collect();
        let mut colors = vec![Vec::new(); g.num_colors()];
        for k in g.interior_nodes() {
            colors[g.color(k)].push(k);
        }
        Ok(Operator { stencils, colors })
    }

    fn residuals<'a>(&'a self, u: &'a [f64]) -> impl ParallelIterator<Item = f64> + 'a {
        self.stencils.par_iter().enumerate().filter_map(move |(k, s)| s.as_ref().map(|s| s.apply(k, u)))
    }

    fn residual(&self, u: &[f64], norm: ResidualNorm) -> f64 {
        match norm {
            ResidualNorm::Max => self.residuals(u).map(f64::abs).reduce(|| 0.0, f64::max),
            ResidualNorm::Rms => {
                let (s, n) =
                    self.residuals(u).map(|r| (r * r, 1usize)).reduce(|| (0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
                (s / n.max(1) as f64).sqrt()
            }
        }
    }

    /// One sweep over all colours. Nodes of one colour are independent, so the
    /// parallel update equals the serial one.
    fn sweep(&self, u: &mut [f64], omega: f64) {
        for nodes in &self.colors {
            let updates: Vec<(usize, f64)> = nodes
                .par_iter()
                .map(|&k| {
                    let s = self.stencils[k].as_ref().expect("coloured nodes are interior");
                    let off = s.apply(k, u) - s.center * u[k];
                    (k, (1.0 - omega) * u[k] - omega * off / s.center)
                })
                .collect();
            for (k, v) in updates {
                u[k] = v;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BrownSolution {
    pub p: ScalarField,
    pub iterations: usize,
    pub residual: f64,
    /// `(sweep, residual)` at every check.
    pub history: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SolverConfig,
    pub iterations: usize,
    pub final_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl BrownSolution {
    pub fn summary(&self, cfg: &SolverConfig) -> RunSummary {
        RunSummary { config: *cfg, iterations: self.iterations, final_residual: self.residual, lambda: None }
    }

    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,residual")?;
        for (i, r) in &self.history {
            writeln!(w, "{i},{r:.16e}")?;
        }
        Ok(())
    }
}

/// Solves `sum_ij d_i(V_ij d_j p) = 0` with `p` fixed to `boundary` on the grid
/// edge. Interior values of `boundary` are only the starting guess.
pub fn solve_brown_equation(v: &TensorField, boundary: &ScalarField, cfg: &SolverConfig) -> Result<BrownSolution> {
    cfg.validate()?;
    let g = v.grid();
    if boundary.grid() != g {
        return Err(Error::Shape("boundary and covariance on different grids".into()));
    }
    if let Some(k) = g.edge_nodes().find(|&k| boundary.get(k) <= 0.0) {
        return Err(Error::NonPositive { node: k, value: boundary.get(k) });
    }
    let op = Operator::new(v)?;
    let mut u = boundary.values().to_vec();
    let mut history = Vec::new();
    let mut residual = op.residual(&u, cfg.residual_norm);
    history.push((0, residual));
    let mut iterations = 0;
    while residual >= cfg.residual_tol {
        if iterations >= cfg.max_iters {
            return Err(Error::NonConvergence { iterations, residual });
        }
        let sweeps = cfg.check_every.min(cfg.max_iters - iterations);
        for _ in 0..sweeps {
            op.sweep(&mut u, cfg.omega);
        }
        iterations += sweeps;
        residual = op.residual(&u, cfg.residual_norm);
        if !residual.is_finite() {
            return Err(Error::NonConvergence { iterations, residual });
        }
        history.push((iterations, residual));
    }
    if let Some(k) = g.interior_nodes().find(|&k| u[k] <= 0.0) {
        return Err(Error::NegativeSolution { node: k, value: u[k] });
    }
    Ok(BrownSolution { p: ScalarField::new(g.clone(), u)?, iterations, residual, history })
}

/// Interior-node numbering and banded assembly of `diag(c) - 2 L`, with `L`
/// the divergence-form operator.
struct InteriorSystem {
    /// Node of each unknown.
    nodes: Vec<usize>,
    /// Unknown of each node, `usize::MAX` on the edge.
    index: Vec<usize>,
    bandwidth: usize,
}

impl InteriorSystem {
    fn new(g: &Grid) -> Self {
        let nodes: Vec<usize> = g.interior_nodes().collect();
        let mut index = vec![usize::MAX; g.len()];
        for (i, &k) in nodes.iter().enumerate() {
            index[k] = i;
        }
        let inner: Vec<usize> = g.shape().iter().map(|n| n - 2).collect();
        let mut stride = 1;
        let mut bandwidth = 0;
        for n in inner.iter().rev() {
            bandwidth += stride;
            stride *= n;
        }
        InteriorSystem { nodes, index, bandwidth }
    }

    /// Matrix `diag(shift) - 2L` and the right-hand side from edge values.
    fn assemble(&self, op: &Operator, shift: &[f64], edge: &[f64]) -> (BandMatrix, Vec<f64>) {
        let mut m = BandMatrix::new(self.nodes.len(), self.bandwidth);
        let mut rhs = vec![0.0; self.nodes.len()];
        for (i, &k) in self.nodes.iter().enumerate() {
            let s = op.stencils[k].as_ref().expect("interior");
            m.add_lower(i, i, shift[i] - 2.0 * s.center);
            for &(n, c) in &s.neighbors {
                let j = self.index[n];
                if j == usize::MAX {
                    rhs[i] += 2.0 * c * edge[n];
                } else if j < i {
                    m.add_lower(i, j, -2.0 * c);
                }
            }
        }
        (m, rhs)
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    /// Positive at interior nodes, maximum 1, zero on the edge.
    pub u: ScalarField,
    pub iterations: usize,
}

const EIGEN_TOL: f64 = 1e-8;
const EIGEN_MAX_ITERS: usize = 2000;

/// Principal (largest) eigenvalue of `2 div(V grad u) - R_b u` with zero edge
/// values, by shifted inverse iteration.
pub fn principal_eigenpair(v: &TensorField, r_b: &ScalarField, cfg: &SolverConfig) -> Result<EigenResult> {
    cfg.validate()?;
    let g = v.grid();
    if r_b.grid() != g {
        return Err(Error::Shape("risk and covariance on different grids".into()));
    }
    let op = Operator::new(v)?;
    let sys = InteriorSystem::new(g);
    let r: Vec<f64> = sys.nodes.iter().map(|&k| r_b.get(k)).collect();
    let zero_edge = vec![0.0; g.len()];
    // The diffusion part is negative semi-definite, so -min R bounds the spectrum.
    let lambda_est = r.iter().map(|x| -x).fold(f64::NEG_INFINITY, f64::max);
    let mut offset = 1.0;
    let (chol, sigma) = loop {
        let sigma = lambda_est + offset;
        let shift: Vec<f64> = r.iter().map(|x| sigma + x).collect();
        let (m, _) = sys.assemble(&op, &shift, &zero_edge);
        if let Some(c) = m.cholesky() {
            break (c, sigma);
        }
        offset *= 2.0;
        if offset > 1e12 {
            return Err(Error::NonConvergence { iterations: 0, residual: f64::NAN });
        }
    };
    // Operator application on interior vectors: (A x)_i = 2 (L x)_i - R_i x_i.
    let apply = |x: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0; g.len()];
        for (i, &k) in sys.nodes.iter().enumerate() {
            full[k] = x[i];
        }
        sys.nodes
            .par_iter()
            .enumerate()
            .map(|(i, &k)| 2.0 * op.stencils[k].as_ref().expect("interior").apply(k, &full) - r[i] * x[i])
            .collect()
    };
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut x = vec![1.0; sys.nodes.len()];
    let n0 = norm(&x);
    x.iter_mut().for_each(|a| *a /= n0);
    let mut lambda = f64::NAN;
    for it in 1..=EIGEN_MAX_ITERS {
        let mut y = chol.solve(&x);
        let ny = norm(&y);
        y.iter_mut().for_each(|a| *a /= ny);
        let ay = apply(&y);
        let rq: f64 = y.iter().zip(&ay).map(|(a, b)| a * b).sum();
        let drift = (rq - lambda).abs();
        lambda = rq;
        x = y;
        if drift <= EIGEN_TOL * lambda.abs().max(1.0) {
            let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            let peak = x.iter().map(|a| sign * a).fold(f64::NEG_INFINITY, f64::max);
            let mut full = vec![0.0; g.len()];
            for (i, &k) in sys.nodes.iter().enumerate() {
                full[k] = sign * x[i] / peak;
            }
            let min = sys.nodes.iter().map(|&k| full[k]).fold(f64::INFINITY, f64::min);
            if min <= 0.0 {
                return Err(Error::SignIndefinite { min, max: 1.0 });
            }
            if lambda > sigma {
                return Err(Error::NonConvergence { iterations: it, residual: drift });
            }
            return Ok(EigenResult { lambda, u: ScalarField::new(g.clone(), full)?, iterations: it });
        }
    }
    Err(Error::NonConvergence { iterations: EIGEN_MAX_ITERS, residual: f64::NAN })
}

#[derive(Debug, Clone)]
pub struct MatchingResult {
    /// Prior `u^2`.
    pub p: ScalarField,
    pub lambda: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
}

/// Default matching tolerance `10 h^2 scale`, with `scale = max(1, max |R(b)|)`.
pub fn default_matching_tol(g: &Grid, r_b: &RiskField) -> f64 {
    let h = g.max_spacing();
    10.0 * h * h * r_b.max_abs().max(1.0)
}

/// Prior whose risk equals that of `b`: `p = u^2` with `2 div(V grad u) = R(b) u`
/// inside and `u = phi` on the edge. Requires a negative principal eigenvalue.
pub fn risk_matching_prior(
    b: &VectorField,
    v: &TensorField,
    boundary_phi: &ScalarField,
    cfg: &SolverConfig,
    matching_tol: Option<f64>,
) -> Result<MatchingResult> {
    let g = v.grid();
    if boundary_phi.grid() != g {
        return Err(Error::Shape("boundary and covariance on different grids".into()));
    }
    if let Some(k) = g.edge_nodes().find(|&k| boundary_phi.get(k) <= 0.0) {
        return Err(Error::NonPositive { node: k, value: boundary_phi.get(k) });
    }
    let r_b = risk_of_decision(b, v)?;
    let tolerance = matching_tol.unwrap_or_else(|| default_matching_tol(g, &r_b));
    let r_field = ScalarField::new(g.clone(), (0..g.len()).map(|k| r_b.get(k).unwrap_or(0.0)).collect())?;
    let eig = principal_eigenpair(v, &r_field, cfg)?;
    let lambda = eig.lambda;

    let u = if lambda < -EIGEN_TOL {
        let op = Operator::new(v)?;
        let sys = InteriorSystem::new(g);
        let shift: Vec<f64> = sys.nodes.iter().map(|&k| r_field.get(k)).collect();
        let (m, rhs) = sys.assemble(&op, &shift, boundary_phi.values());
        let chol = m.cholesky().ok_or(Error::NonNegativeEigenvalue { lambda })?;
        let x = chol.solve(&rhs);
        let mut full = boundary_phi.values().to_vec();
        for (i, &k) in sys.nodes.iter().enumerate() {
            full[k] = x[i];
        }
        if let Some(k) = g.interior_nodes().find(|&k| full[k] <= 0.0) {
            return Err(Error::NegativeSolution { node: k, value: full[k] });
        }
        ScalarField::new(g.clone(), full)?
    } else if lambda <= EIGEN_TOL {
        eig.u
    } else {
        return Err(Error::NonNegativeEigenvalue { lambda });
    };

    let discrepancy = matching_discrepancy(&u, v, &r_b)?;
    if !(discrepancy <= tolerance) {
        return Err(Error::MatchingTolerance { discrepancy, tolerance });
    }
    Ok(MatchingResult { p: u.map(|x| x * x)?, lambda, discrepancy, tolerance })
}

/// Max-norm of `R(u^2) - R(b)` over interior nodes, with `R(u^2)` evaluated
/// from `u` so zero edge values are allowed.
fn matching_discrepancy(u: &ScalarField, v: &TensorField, r_b: &RiskField) -> Result<f64> {
    let g = v.grid();
    if g.edge_nodes().all(|k| u.get(k) > 0.0) {
        return Ok(risk_of_prior(&u.map(|x| x * x)?, v)?.max_diff(r_b));
    }
    let lu = crate::grid::divergence_form_apply(v, u)?;
    Ok(g.interior_nodes().map(|k| (2.0 * lu.get(k) / u.get(k) - r_b.get(k).unwrap_or(0.0)).abs()).fold(0.0, f64::max))
}
