//! Small dense matrices (dimension at most 3) and a banded Cholesky factorization.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Symmetric matrix of dimension 1, 2 or 3, stored full and row-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat {
    d: usize,
    a: [f64; 9],
}

impl SymMat {
    pub fn zeros(d: usize) -> Self {
        assert!((1..=3).contains(&d), "dimension must be 1, 2 or 3");
        SymMat { d, a: [0.0; 9] }
    }

    pub fn identity(d: usize) -> Self {
        Self::diag(&vec![1.0; d])
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, v) in values.iter().enumerate() {
            m.set(i, i, *v);
        }
        m
    }

    pub fn scalar(v: f64) -> Self {
        Self::diag(&[v])
    }

    /// Builds from a full row-major slice, symmetrizing `(A + A') / 2`.
    pub fn from_row_major(d: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), d * d);
        let mut m = Self::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.a[i * 3 + j] = 0.5 * (values[i * d + j] + values[j * d + i]);
            }
        }
        m
    }

    /// Builds from the row-major upper triangle `a11, a12, .., a22, ..`.
    pub fn from_upper(d: usize, upper: &[f64]) -> Self {
        assert_eq!(upper.len(), d * (d + 1) / 2);
        let mut m = Self::zeros(d);
        let mut k = 0;
        for i in 0..d {
            for j in i..d {
                m.set(i, j, upper[k]);
                k += 1;
            }
        }
        m
    }

    pub fn upper(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.d * (self.d + 1) / 2);
        for i in 0..self.d {
            for j in i..self.d {
                out.push(self.get(i, j));
            }
        }
        out
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * 3 + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * 3 + j] = v;
        self.a[j * 3 + i] = v;
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut m = *self;
        for v in m.a.iter_mut() {
            *v *= c;
        }
        m
    }

    pub fn add(&self, other: &SymMat) -> Self {
        assert_eq!(self.d, other.d);
        let mut m = *self;
        for (v, w) in m.a.iter_mut().zip(other.a.iter()) {
            *v += w;
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }

    pub fn trace(&self) -> f64 {
        (0..self.d).map(|i| self.get(i, i)).sum()
    }

    pub fn det(&self) -> f64 {
        let g = |i, j| self.get(i, j);
        match self.d {
            1 => g(0, 0),
            2 => g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0),
            _ => {
                g(0, 0) * (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) - g(0, 1) * (g(1, 0) * g(2, 2) - g(1, 2) * g(2, 0))
                    + g(0, 2) * (g(1, 0) * g(2, 1) - g(1, 1) * g(2, 0))
            }
        }
    }

    /// Sylvester's criterion on leading principal minors.
    pub fn is_positive_definite(&self) -> bool {
        if !self.is_finite() {
            return false;
        }
        let m1 = self.get(0, 0);
        if m1 <= 0.0 {
            return false;
        }
        if self.d >= 2 {
            let m2 = self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0);
            if m2 <= 0.0 {
                return false;
            }
        }
        if self.d == 3 && self.det() <= 0.0 {
            return false;
        }
        true
    }

    /// Closed-form inverse; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<SymMat> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let g = |i, j| self.get(i, j);
        let mut m = Self::zeros(self.d);
        match self.d {
            1 => m.set(0, 0, 1.0 / det),
            2 => {
                m.set(0, 0, g(1, 1) / det);
                m.set(1, 1, g(0, 0) / det);
                m.set(0, 1, -g(0, 1) / det);
            }
            _ => {
                m.set(0, 0, (g(1, 1) * g(2, 2) - g(1, 2) * g(2, 1)) / det);
                m.set(0, 1, (g(0, 2) * g(2, 1) - g(0, 1) * g(2, 2)) / det);
                m.set(0, 2, (g(0, 1) * g(1, 2) - g(0, 2) * g(1, 1)) / det);
                m.set(1, 1, (g(0, 0) * g(2, 2) - g(0, 2) * g(2, 0)) / det);
                m.set(1, 2, (g(0, 2) * g(1, 0) - g(0, 0) * g(1, 2)) / det);
                m.set(2, 2, (g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)) / det);
            }
        }
        Some(m)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.to_dmatrix().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Spectral condition number `max|ev| / min|ev|`.
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let lo = ev.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let hi = ev.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// Symmetric positive square root; negative eigenvalues are an error.
    pub fn sqrt(&self) -> Option<SymMat> {
        let eig = self.to_dmatrix().symmetric_eigen();
        if eig.eigenvalues.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return None;
        }
        let s = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let r = &eig.eigenvectors * s * eig.eigenvectors.transpose();
        Some(SymMat::from_row_major(self.d, r.transpose().as_slice()))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.d).map(|i| (0..self.d).map(|j| self.get(i, j) * v[j]).sum()).collect()
    }

    /// `v' A w`.
    pub fn bilinear(&self, v: &[f64], w: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += v[i] * self.get(i, j) * w[j];
            }
        }
        s
    }

    pub fn quad(&self, v: &[f64]) -> f64 {
        self.bilinear(v, v)
    }

    pub fn mul(&self, other: &SymMat) -> Vec<f64> {
        let d = self.d;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = (0..d).map(|k| self.get(i, k) * other.get(k, j)).sum();
            }
        }
        out
    }

    fn to_dmatrix(self) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.get(i, j))
    }
}

/// Symmetric banded matrix holding the lower band: `band[i][k]` is entry `(i, i - k)`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandMatrix {
    pub fn new(n: usize, bw: usize) -> Self {
        BandMatrix { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Adds to entry `(i, j)` with `j <= i`; entries outside the band panic.
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i && i - j <= self.bw, "entry ({i},{j}) outside band {}", self.bw);
        self.band[i * (self.bw + 1) + (i - j)] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.band[i * (self.bw + 1) + (i - j)]
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.band[i * (self.bw + 1) + (i - j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// In-place banded Cholesky `A = L L'`. Fails (returns `None`) unless `A` is
    /// positive definite.
    pub fn cholesky(&self) -> Option<BandCholesky> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut l = self.band.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[i * w + (i - j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if j == i {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Some(BandCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = y[i];
            for k in lo..i {
                s -= self.l[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let mut s = y[i];
            for k in (i + 1)..=hi {
                s -= self.l[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }
}
