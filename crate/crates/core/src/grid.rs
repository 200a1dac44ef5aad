//! Rectangular grids, fields on them, and conservative finite-difference operators.
//!
//! Nodes are stored row-major with axis 0 slowest. Node `k` along axis `i` sits
//! at `lower[i] + k * h[i]`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::linalg::SymMat;

/// What lies beyond a face of the grid box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[serde(rename_all = "snake_case")]
pub enum FaceKind {
    /// A finite boundary of the parameter domain.
    Wall,
    /// The true boundary is at 0 or infinity; the grid edge is a truncation.
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `faces[i] = [lower face kind, upper face kind]` for axis `i`.
    pub faces: Vec<[FaceKind; 2]>,
    #[serde(default)]
    pub excluded_origin: bool,
}

impl DomainSpec {
    /// Box with every face a wall.
    pub fn walled(lower: &[f64], upper: &[f64]) -> Result<Self> {
        let spec = DomainSpec {
            lower: lower.to_vec(),
            upper: upper.to_vec(),
            faces: vec![[FaceKind::Wall; 2]; lower.len()],
            excluded_origin: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_faces(mut self, faces: Vec<[FaceKind; 2]>) -> Result<Self> {
        self.faces = faces;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if !(1..=3).contains(&d) {
            return Err(Error::InvalidDomain(format!("dimension {d} not in 1..=3")));
        }
        if self.upper.len() != d || self.faces.len() != d {
            return Err(Error::InvalidDomain("lower, upper and faces must have equal length".into()));
        }
        for i in 0..d {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidDomain(format!("axis {i}: need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.faces.iter().all(|f| f[0] == FaceKind::Wall && f[1] == FaceKind::Wall)
    }

    /// Strictly inside the box (and off the origin when it is excluded).
    pub fn contains(&self, x: &[f64]) -> bool {
        let inside = x.iter().zip(self.lower.iter().zip(self.upper.iter())).all(|(v, (lo, hi))| *v > *lo && *v < *hi);
        inside && !(self.excluded_origin && x.iter().all(|v| *v == 0.0))
    }

    /// Distance to the nearest wall face, infinite if there is none.
    pub fn distance_to_walls(&self, x: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for (i, kinds) in self.faces.iter().enumerate() {
            if kinds[0] == FaceKind::Wall {
                best = best.min(x[i] - self.lower[i]);
            }
            if kinds[1] == FaceKind::Wall {
                best = best.min(self.upper[i] - x[i]);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: DomainSpec,
    n: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

pub fn build_grid(spec: DomainSpec, n: &[usize]) -> Result<Grid> {
    spec.validate()?;
    if n.len() != spec.dim() {
        return Err(Error::Shape(format!("{} node counts for a {}-d domain", n.len(), spec.dim())));
    }
    for (axis, &nodes) in n.iter().enumerate() {
        if nodes < 3 {
            return Err(Error::TooFewNodes { axis, nodes });
        }
    }
    let h = (0..spec.dim()).map(|i| (spec.upper[i] - spec.lower[i]) / (n[i] - 1) as f64).collect();
    let mut strides = vec![1; n.len()];
    for i in (0..n.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * n[i + 1];
    }
    Ok(Grid { spec, n: n.to_vec(), h, strides })
}

pub type Index = SmallVec<[usize; 3]>;

impl Grid {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h
    }

    pub fn max_spacing(&self) -> f64 {
        self.h.iter().copied().fold(0.0, f64::max)
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Volume element `prod h_i`.
    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn multi_index(&self, node: usize) -> Index {
        let mut rem = node;
        self.strides
            .iter()
            .map(|s| {
                let k = rem / s;
                rem %= s;
                k
            })
            .collect()
    }

    pub fn node(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(k, s)| k * s).sum()
    }

    pub fn axis_coord(&self, axis: usize, k: usize) -> f64 {
        self.spec.lower[axis] + k as f64 * self.h[axis]
    }

    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        self.axis_coord(axis, (node / self.strides[axis]) % self.n[axis])
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        (0..self.dim()).map(|i| self.coord(node, i)).collect()
    }

    pub fn is_interior(&self, node: usize) -> bool {
        (0..self.dim()).all(|i| {
            let k = (node / self.strides[i]) % self.n[i];
            k > 0 && k + 1 < self.n[i]
        })
    }

    pub fn interior_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| self.is_interior(k))
    }

    pub fn edge_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&k| !self.is_interior(k))
    }

    /// Parity colouring with `2^d` colours; nodes of one colour never share a
    /// stencil, including the diagonal neighbours of mixed-derivative terms.
    pub fn color(&self, node: usize) -> usize {
        (0..self.dim()).map(|i| (((node / self.strides[i]) % self.n[i]) & 1) << i).sum()
    }

    pub fn num_colors(&self) -> usize {
        1 << self.dim()
    }

    /// Axis-aligned offset `node + step * e_axis` (no bounds check beyond debug).
    #[inline]
    pub fn shift(&self, node: usize, axis: usize, step: isize) -> usize {
        let s = self.strides[axis] as isize;
        (node as isize + step * s) as usize
    }

    /// Multilinear interpolation, clamping `x` into the grid box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for i in 0..d {
            let t = ((x[i] - self.spec.lower[i]) / self.h[i]).clamp(0.0, (self.n[i] - 1) as f64);
            let k = (t.floor() as usize).min(self.n[i] - 2);
            base[i] = k;
            frac[i] = t - k as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut node = 0;
            for i in 0..d {
                let bit = (corner >> i) & 1;
                w *= if bit == 1 { frac[i] } else { 1.0 - frac[i] };
                node += (base[i] + bit) * self.strides[i];
            }
            if w != 0.0 {
                acc += w * values[node];
            }
        }
        acc
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn coord_header(d: usize) -> String {
    (1..=d).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        ScalarField { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, node: usize) -> f64 {
        self.values[node]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn interpolate(&self, x: &[f64]) -> f64 {
        self.grid.interpolate(&self.values, x)
    }

    /// Errors unless every node value is strictly positive.
    pub fn check_positive(&self) -> Result<()> {
        match self.values.iter().position(|v| *v <= 0.0) {
            Some(node) => Err(Error::NonPositive { node, value: self.values[node] }),
            None => Ok(()),
        }
    }

    pub fn max_abs_interior(&self) -> f64 {
        self.grid.interior_nodes().map(|k| self.values[k].abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, interior_only: bool, value_name: &str) -> Result<()> {
        writeln!(w, "{},{}", coord_header(self.grid.dim()), value_name)?;
        for k in 0..self.grid.len() {
            if interior_only && !self.grid.is_interior(k) {
                continue;
            }
            let mut row: Vec<String> = self.grid.point(k).into_iter().map(fmt17).collect();
            row.push(fmt17(self.values[k]));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Reads a full-grid CSV written by [`ScalarField::write_csv`]; lines starting
    /// with `#` are skipped. The grid is rebuilt from the coordinate columns with
    /// wall faces.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut d = None;
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if d.is_none() {
                let cols = t.split(',').count();
                if cols < 2 {
                    return Err(Error::Shape("csv needs coordinate and value columns".into()));
                }
                d = Some(cols - 1);
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> = t.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| Error::Shape(format!("bad csv number: {e}")))?;
            if Some(row.len() - 1) != d {
                return Err(Error::Shape("ragged csv row".into()));
            }
            rows.push(row);
        }
        let d = d.ok_or_else(|| Error::Shape("empty csv".into()))?;
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
        for row in &rows {
            for i in 0..d {
                axes[i].push(row[i]);
            }
        }
        for a in axes.iter_mut() {
            a.sort_by(f64::total_cmp);
            a.dedup_by(|x, y| (*x - *y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
        let n: Vec<usize> = axes.iter().map(Vec::len).collect();
        let lower: Vec<f64> = axes.iter().map(|a| a[0]).collect();
        let upper: Vec<f64> = axes.iter().map(|a| a[a.len() - 1]).collect();
        let grid = build_grid(DomainSpec::walled(&lower, &upper)?, &n)?;
        if rows.len() != grid.len() {
            return Err(Error::Shape(format!("csv has {} rows, grid needs {}", rows.len(), grid.len())));
        }
        let mut values = vec![f64::NAN; grid.len()];
        for row in &rows {
            let idx: Index = (0..d).map(|i| ((row[i] - lower[i]) / grid.h[i]).round() as usize).collect();
            values[grid.node(&idx)] = row[d];
        }
        ScalarField::new(grid, values)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() * grid.dim() {
            return Err(Error::Shape(format!("{} values for {} nodes", values.len(), grid.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { node: i / grid.dim() });
        }
        Ok(VectorField { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let d = grid.dim();
        let mut values = Vec::with_capacity(grid.len() * d);
        for k in 0..grid.len() {
            let v = f(&grid.point(k));
            assert_eq!(v.len(), d, "vector field closure returned wrong length");
            values.extend(v);
        }
        Self::new(grid.clone(), values)
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField { grid: grid.clone(), values: vec![0.0; grid.len() * grid.dim()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, node: usize) -> &[f64] {
        let d = self.grid.dim();
        &self.values[node * d..(node + 1) * d]
    }

    #[inline]
    pub fn component(&self, node: usize, i: usize) -> f64 {
        self.values[node * self.grid.dim() + i]
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Shape("vector fields on different grids".into()));
        }
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self::new(self.grid.clone(), v)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim();
        let names: Vec<String> = (1..=d).map(|i| format!("value_{i}")).collect();
        writeln!(w, "{},{}", coord_header(d), names.join(","))?;
        for k in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.point(k).into_iter().map(fmt17).collect();
            row.extend(self.get(k).iter().map(|v| fmt17(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    grid: Grid,
    values: Vec<SymMat>,
}

impl TensorField {
    pub fn new(grid: Grid, values: Vec<SymMat>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Shape(format!("{} tensors for {} nodes", values.len(), grid.len())));
        }
        if let Some(node) = values.iter().position(|m| m.dim() != grid.dim()) {
            return Err(Error::Shape(format!("tensor at node {node} has wrong dimension")));
        }
        if let Some(node) = values.iter().position(|m| !m.is_finite()) {
            return Err(Error::NonFinite { node });
        }
        Ok(TensorField { grid, values })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> SymMat) -> Result<Self> {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        Self::new(grid.clone(), values)
    }

    pub fn constant(grid: &Grid, m: SymMat) -> Self {
        TensorField { grid: grid.clone(), values: vec![m; grid.len()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn get(&self, node: usize) -> &SymMat {
        &self.values[node]
    }

    pub fn values(&self) -> &[SymMat] {
        &self.values
    }

    /// Nodewise product with a scalar field (e.g. `pV`).
    pub fn scaled_by(&self, s: &ScalarField) -> Result<Self> {
        if s.grid() != &self.grid {
            return Err(Error::Shape("scalar and tensor fields on different grids".into()));
        }
        Self::new(self.grid.clone(), self.values.iter().zip(s.values()).map(|(m, c)| m.scale(*c)).collect())
    }

    pub fn check_positive_definite_interior(&self) -> Result<()> {
        match self.grid.interior_nodes().find(|&k| !self.values[k].is_positive_definite()) {
            Some(node) => Err(Error::NotPositiveDefinite { node }),
            None => Ok(()),
        }
    }

    pub fn interpolate(&self, x: &[f64]) -> SymMat {
        let d = self.grid.dim();
        let mut out = SymMat::zeros(d);
        let mut comp = vec![0.0; self.grid.len()];
        for i in 0..d {
            for j in i..d {
                for (c, m) in comp.iter_mut().zip(&self.values) {
                    *c = m.get(i, j);
                }
                out.set(i, j, self.grid.interpolate(&comp, x));
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.grid.dim();
        let k = d * (d + 1) / 2;
        let names: Vec<String> = (1..=k).map(|i| format!("value_{i}")).collect();
        writeln!(w, "{},{}", coord_header(d), names.join(","))?;
        for node in 0..self.grid.len() {
            let mut row: Vec<String> = self.grid.point(node).into_iter().map(fmt17).collect();
            row.extend(self.values[node].upper().into_iter().map(fmt17));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Central differences at interior nodes. Edges use third-order one-sided
/// differences (second-order on 3-node axes), so that differencing the
/// gradient again stays second order next to the edge.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid();
    let d = g.dim();
    let u = f.values();
    let mut out = vec![0.0; g.len() * d];
    for k in 0..g.len() {
        let idx = g.multi_index(k);
        for i in 0..d {
            let h = g.spacing()[i];
            let n = g.shape()[i];
            let at = |step: isize| u[g.shift(k, i, step)];
            out[k * d + i] = if idx[i] == 0 || idx[i] == n - 1 {
                let s: isize = if idx[i] == 0 { 1 } else { -1 };
                let one_sided = if n >= 4 {
                    (-11.0 * u[k] + 18.0 * at(s) - 9.0 * at(2 * s) + 2.0 * at(3 * s)) / (6.0 * h)
                } else {
                    (-3.0 * u[k] + 4.0 * at(s) - at(2 * s)) / (2.0 * h)
                };
                s as f64 * one_sided
            } else {
                (at(1) - at(-1)) / (2.0 * h)
            };
        }
    }
    VectorField { grid: g.clone(), values: out }
}

/// Stencil of `sum_ij d_i(A_ij d_j u)` at one interior node.
#[derive(Debug, Clone, Default)]
pub struct Stencil {
    pub center: f64,
    pub neighbors: SmallVec<[(usize, f64); 18]>,
}

impl Stencil {
    fn add(&mut self, node: usize, c: f64) {
        if let Some(e) = self.neighbors.iter_mut().find(|(n, _)| *n == node) {
            e.1 += c;
        } else {
            self.neighbors.push((node, c));
        }
    }

    #[inline]
    pub fn apply(&self, node: usize, u: &[f64]) -> f64 {
        self.neighbors.iter().fold(self.center * u[node], |s, (n, c)| s + c * u[*n])
    }
}

/// Conservative stencil at interior node `k`: diagonal terms with arithmetic
/// half-node averages, mixed terms as nested central differences with nodal
/// coefficients.
pub fn stencil_at(a: &TensorField, k: usize) -> Stencil {
    let g = a.grid();
    let d = g.dim();
    let h = g.spacing();
    let mut st = Stencil::default();
    for i in 0..d {
        let kp = g.shift(k, i, 1);
        let km = g.shift(k, i, -1);
        let ap = 0.5 * (a.get(k).get(i, i) + a.get(kp).get(i, i));
        let am = 0.5 * (a.get(k).get(i, i) + a.get(km).get(i, i));
        let h2 = h[i] * h[i];
        st.add(kp, ap / h2);
        st.add(km, am / h2);
        st.center -= (ap + am) / h2;
        for j in 0..d {
            if j == i {
                continue;
            }
            let c = 1.0 / (4.0 * h[i] * h[j]);
            let cp = a.get(kp).get(i, j) * c;
            let cm = a.get(km).get(i, j) * c;
            st.add(g.shift(kp, j, 1), cp);
            st.add(g.shift(kp, j, -1), -cp);
            st.add(g.shift(km, j, 1), -cm);
            st.add(g.shift(km, j, -1), cm);
        }
    }
    st
}

/// `sum_ij d_i(A_ij d_j u)` at interior nodes; edge nodes carry 0.
pub fn divergence_form_apply(a: &TensorField, u: &ScalarField) -> Result<ScalarField> {
    let g = a.grid();
    if u.grid() != g {
        return Err(Error::Shape("operator and field on different grids".into()));
    }
    a.check_positive_definite_interior()?;
    let mut out = vec![0.0; g.len()];
    for k in g.interior_nodes() {
        out[k] = stencil_at(a, k).apply(k, u.values());
    }
    ScalarField::new(g.clone(), out)
}
