//! Asymptotic risks relative to the uniform prior.
//!
//! For a decision field `b` the risk is `sum_i d_i(V_ij b_j) + b'Vb/2`; a prior
//! `p` acts through `b = grad log p`, which gives the elliptic form
//! `2 sum_ij d_i(V_ij d_j sqrt p) / sqrt p`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{divergence_form_apply, gradient, Grid, ScalarField, TensorField, VectorField};

/// Risk values at interior nodes; edge nodes are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskField {
    grid: Grid,
    values: Vec<f64>,
}

impl RiskField {
    fn from_interior(grid: &Grid, mut f: impl FnMut(usize) -> f64) -> Result<Self> {
        let mut values = vec![f64::NAN; grid.len()];
        for k in grid.interior_nodes() {
            let v = f(k);
            if !v.is_finite() {
                return Err(Error::NonFinite { node: k });
            }
            values[k] = v;
        }
        Ok(RiskField { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn get(&self, node: usize) -> Option<f64> {
        self.grid.is_interior(node).then(|| self.values[node])
    }

    pub fn interior(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.grid.interior_nodes().map(|k| (k, self.values[k]))
    }

    pub fn neg(&self) -> RiskField {
        RiskField { grid: self.grid.clone(), values: self.values.iter().map(|v| -v).collect() }
    }

    pub fn min(&self) -> f64 {
        self.interior().map(|(_, v)| v).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.interior().map(|(_, v)| v).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.interior().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    /// Max-norm distance over interior nodes.
    pub fn max_diff(&self, other: &RiskField) -> f64 {
        self.interior().map(|(k, v)| (v - other.values[k]).abs()).fold(0.0, f64::max)
    }

    /// Mean over the interior nodes selected by `pick(point)`.
    pub fn mean_where(&self, pick: impl Fn(&[f64]) -> bool) -> Option<f64> {
        let (s, n) = self
            .interior()
            .filter(|(k, _)| pick(&self.grid.point(*k)))
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    }

    /// Interior-node CSV with columns `x1,...,xd,<name>`.
    pub fn write_csv<W: Write>(&self, mut w: W, name: &str) -> Result<()> {
        let d = self.grid.dim();
        let head: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},{}", head.join(","), name)?;
        for (k, v) in self.interior() {
            let mut row: Vec<String> = self.grid.point(k).iter().map(|x| format!("{x:.16e}")).collect();
            row.push(format!("{v:.16e}"));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::Shape("fields on different grids".into()));
    }
    Ok(())
}

/// `b = grad log p`.
pub fn decision_of_prior(p: &ScalarField) -> Result<VectorField> {
    p.check_positive()?;
    Ok(gradient(&p.map(f64::ln)?))
}

/// `sum_i d_i(V_ij b_j) + b'Vb/2` at interior nodes, with central differences
/// of the flux `Vb`. Next to an edge the difference is one-sided and inward,
/// so edge values of `b` (usually extrapolated) never enter.
pub fn risk_of_decision(b: &VectorField, v: &TensorField) -> Result<RiskField> {
    let g = v.grid();
    same_grid(b.grid(), g)?;
    v.check_positive_definite_interior()?;
    let d = g.dim();
    let flux = |k: usize, i: usize| -> f64 { (0..d).map(|j| v.get(k).get(i, j) * b.component(k, j)).sum() };
    RiskField::from_interior(g, |k| {
        let idx = g.multi_index(k);
        let div: f64 = (0..d)
            .map(|i| {
                let (n, h) = (g.shape()[i], g.spacing()[i]);
                let f = |step: isize| flux(g.shift(k, i, step), i);
                if n >= 5 && (idx[i] == 1 || idx[i] == n - 2) {
                    let s = if idx[i] == 1 { 1.0 } else { -1.0 };
                    let st = s as isize;
                    s * (-3.0 * f(0) + 4.0 * f(st) - f(2 * st)) / (2.0 * h)
                } else {
                    (f(1) - f(-1)) / (2.0 * h)
                }
            })
            .sum();
        div + 0.5 * v.get(k).quad(b.get(k))
    })
}

/// `2 sum_ij d_i(V_ij d_j sqrt p) / sqrt p` at interior nodes, with `sqrt p`
/// taken nodewise before differencing.
pub fn risk_of_prior(p: &ScalarField, v: &TensorField) -> Result<RiskField> {
    same_grid(p.grid(), v.grid())?;
    p.check_positive()?;
    let root = p.map(f64::sqrt)?;
    let lu = divergence_form_apply(v, &root)?;
    RiskField::from_interior(v.grid(), |k| 2.0 * lu.get(k) / root.get(k))
}

/// Gain of a Brown-equation prior over the uniform, with the two closed forms
/// it is compared against.
#[derive(Debug, Clone)]
pub struct GainReport {
    /// `-risk_of_prior(p, V)`.
    pub gain: RiskField,
    /// `(grad p)'V(grad p) / (2p)`, the normalization printed with the experiment.
    pub closed_form_p: RiskField,
    /// `(grad p)'V(grad p) / (2p^2)`, what the elliptic form reduces to when
    /// `div(V grad p) = 0`.
    pub closed_form_p2: RiskField,
    pub discrepancy_p: f64,
    pub discrepancy_p2: f64,
    pub brown_residual: f64,
}

/// Risk gain of `p` against the uniform, for `p` solving `div(V grad p) = 0`
/// to within `brown_tol` in max norm.
pub fn risk_gain_vs_uniform(p: &ScalarField, v: &TensorField, brown_tol: f64) -> Result<GainReport> {
    let g = v.grid();
    same_grid(p.grid(), g)?;
    p.check_positive()?;
    let brown_residual = divergence_form_apply(v, p)?.max_abs_interior();
    if !(brown_residual <= brown_tol) {
        return Err(Error::BrownResidual { residual: brown_residual, threshold: brown_tol });
    }
    let gain = risk_of_prior(p, v)?.neg();
    let dp = gradient(p);
    let quad = |k: usize| v.get(k).quad(dp.get(k));
    let closed_form_p = RiskField::from_interior(g, |k| 0.5 * quad(k) / p.get(k))?;
    let closed_form_p2 = RiskField::from_interior(g, |k| 0.5 * quad(k) / p.get(k).powi(2))?;
    Ok(GainReport {
        discrepancy_p: gain.max_diff(&closed_form_p),
        discrepancy_p2: gain.max_diff(&closed_form_p2),
        gain,
        closed_form_p,
        closed_form_p2,
        brown_residual,
    })
}
