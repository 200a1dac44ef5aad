use std::collections::HashMap;

use rayon::prelude::*;

use super::checks::{normal_integral, wall_position, walls, Model};
use super::{Cutoffs, Divergence, PriorFamily};
use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::grid::{DomainSpec, Grid, ScalarField};
use crate::quadrature::GaussLegendre;

/// Damps a prior inside an `eps` collar of every wall point where the inward
/// normal integral of `(pV)^-1` converges. With `q = sqrt(nu'V^-1 nu / p)`,
/// `G(u) = int_0^u q` and `g = (G^2)' = 2Gq`, the factor across a failing wall
/// is `a = min(1, 1 - (1 - g(u)/g(eps))^3)`. Factors from different walls
/// multiply.
#[derive(Debug, Clone)]
pub struct Attenuation<'a> {
    model: Model<'a>,
    domain: &'a DomainSpec,
    eps: f64,
    cutoffs: Cutoffs,
}

type Face = (usize, usize);

impl<'a> Attenuation<'a> {
    pub fn new(model: Model<'a>, domain: &'a DomainSpec, eps: f64) -> Result<Self> {
        domain.validate()?;
        for (axis, _) in walls(domain) {
            let half = 0.5 * (domain.upper[axis] - domain.lower[axis]);
            if !(eps > 0.0 && eps < half) {
                return Err(Error::Config(format!("eps = {eps} must lie in (0, {half}) on axis {axis}")));
            }
        }
        Ok(Attenuation { model, domain, eps, cutoffs: Cutoffs { start: Some(eps), ..Cutoffs::default() } })
    }

    /// Whether the normal integral converges at the wall point `s`.
    pub fn fails_at(&self, face: Face, s: &[f64]) -> Result<bool> {
        let e = normal_integral(&self.model, self.domain, s, face.0, face.1, &self.cutoffs)?;
        Ok(e.divergence == Divergence::Convergent)
    }

    /// Projection of `x` onto the wall, kept off the other walls so that
    /// corner nodes still have a usable normal line.
    fn project(&self, face: Face, x: &[f64]) -> Vec<f64> {
        let mut s: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let eta = 1e-9 * (self.domain.upper[j] - self.domain.lower[j]);
                v.clamp(self.domain.lower[j] + eta, self.domain.upper[j] - eta)
            })
            .collect();
        s[face.0] = wall_position(self.domain, face.0, face.1);
        s
    }

    fn point(&self, face: Face, s: &[f64], u: f64) -> Vec<f64> {
        let mut x = s.to_vec();
        x[face.0] = wall_position(self.domain, face.0, face.1) + if face.1 == 0 { u } else { -u };
        x
    }

    fn q(&self, face: Face, s: &[f64], u: f64) -> Result<f64> {
        Ok(self.model.inverse_pv(&self.point(face, s, u))?.get(face.0, face.0).sqrt())
    }

    /// `g(u)` along the inward normal from `s`.
    pub fn g(&self, face: Face, s: &[f64], u: f64) -> Result<f64> {
        if u <= 0.0 {
            return Ok(0.0);
        }
        let rule = GaussLegendre::order20();
        let mut big_g = 0.0;
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            big_g += 0.5 * u * w * self.q(face, s, 0.5 * u * (1.0 + x))?;
        }
        Ok(2.0 * big_g * self.q(face, s, u)?)
    }

    /// Factor contributed by one failing wall at distance `u`.
    pub fn wall_factor(&self, face: Face, s: &[f64], u: f64) -> Result<f64> {
        if u >= self.eps {
            return Ok(1.0);
        }
        if u <= 0.0 {
            return Ok(0.0);
        }
        let g_eps = self.g(face, s, self.eps)?;
        if !(g_eps > 0.0 && g_eps.is_finite()) {
            return Err(Error::DegenerateAttenuation);
        }
        let t = 1.0 - self.g(face, s, u)? / g_eps;
        Ok((1.0 - t * t * t).clamp(0.0, 1.0))
    }

    /// `a(x)` with the failing-wall test delegated to `fails`.
    fn factor_with(&self, x: &[f64], mut fails: impl FnMut(Face, &[f64]) -> Result<bool>) -> Result<f64> {
        let mut a = 1.0;
        for face in walls(self.domain) {
            let u = (x[face.0] - wall_position(self.domain, face.0, face.1)).abs();
            if u >= self.eps {
                continue;
            }
            let s = self.project(face, x);
            if fails(face, &s)? {
                a *= self.wall_factor(face, &s, u)?;
            }
        }
        Ok(a)
    }

    pub fn factor(&self, x: &[f64]) -> Result<f64> {
        self.factor_with(x, |face, s| self.fails_at(face, s))
    }

    /// `a p` at every grid node. Wall points are classified once per
    /// projection.
    pub fn apply(&self, grid: &Grid) -> Result<ScalarField> {
        let key = |face: Face, s: &[f64]| (face, s.iter().map(|v| v.to_bits()).collect::<Vec<u64>>());
        let mut wanted: Vec<(Face, Vec<f64>)> = Vec::new();
        let mut seen = HashMap::new();
        for node in 0..grid.len() {
            let x = grid.point(node);
            for face in walls(self.domain) {
                let u = (x[face.0] - wall_position(self.domain, face.0, face.1)).abs();
                if u < self.eps {
                    let s = self.project(face, &x);
                    if seen.insert(key(face, &s), false).is_none() {
                        wanted.push((face, s));
                    }
                }
            }
        }
        let verdicts: Vec<bool> = wanted.par_iter().map(|(f, s)| self.fails_at(*f, s)).collect::<Result<_>>()?;
        for ((f, s), v) in wanted.iter().zip(verdicts) {
            seen.insert(key(*f, s), v);
        }
        let values: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|node| {
                let x = grid.point(node);
                let a = self.factor_with(&x, |f, s| Ok(seen[&key(f, s)]))?;
                Ok(a * self.model.prior.eval(&x))
            })
            .collect::<Result<_>>()?;
        ScalarField::new(grid.clone(), values)
    }
}

/// `a p` on `grid`, which must lie inside `domain`.
pub fn attenuate(
    prior: &PriorFamily,
    domain: &DomainSpec,
    covariance: &CovarianceModel,
    eps: f64,
    grid: &Grid,
) -> Result<ScalarField> {
    Attenuation::new(Model { prior, covariance }, domain, eps)?.apply(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admissibility::{check_1d, Verdict};
    use crate::grid::build_grid;

    fn unit_interval() -> DomainSpec {
        DomainSpec::walled(&[0.0], &[1.0]).unwrap()
    }

    #[test]
    fn flat_prior_on_interval() {
        let d = unit_interval();
        let p = PriorFamily::custom(1, |_| 1.0);
        let v = CovarianceModel::Identity { dim: 1 };
        let att = Attenuation::new(Model { prior: &p, covariance: &v }, &d, 0.1).unwrap();
        assert!((att.g((0, 0), &[0.0], 0.05).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(att.factor(&[0.0]).unwrap(), 0.0);
        assert_eq!(att.factor(&[0.1]).unwrap(), 1.0);
        assert_eq!(att.factor(&[0.5]).unwrap(), 1.0);
        for u in [0.01, 0.03, 0.07, 0.099] {
            let want = 1.0 - (1.0 - u / 0.1f64).powi(3);
            assert!((att.factor(&[u]).unwrap() - want).abs() < 1e-12);
            assert!((att.factor(&[1.0 - u]).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn attenuated_prior_passes() {
        let d = unit_interval();
        let p = PriorFamily::custom(1, |_| 1.0);
        let v = CovarianceModel::Identity { dim: 1 };
        let att = Attenuation::new(Model { prior: &p, covariance: &v }, &d, 0.1).unwrap();
        let before = check_1d(|_| 1.0, 0.0, 1.0, &Cutoffs::default()).unwrap();
        assert_eq!(before.verdict, Verdict::Inadmissible);
        let after = check_1d(|x| att.factor(&[x]).unwrap(), 0.0, 1.0, &Cutoffs::default()).unwrap();
        assert_eq!(after.verdict, Verdict::Admissible, "{}", after.to_json());
    }

    #[test]
    fn idempotent_when_passing() {
        let d = DomainSpec::walled(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let p = PriorFamily::DistanceToBoundary { domain: d.clone() };
        let v = CovarianceModel::Identity { dim: 2 };
        let g = build_grid(d.clone(), &[21, 21]).unwrap();
        let out = attenuate(&p, &d, &v, 0.2, &g).unwrap();
        for node in 0..g.len() {
            assert_eq!(out.get(node), p.eval(&g.point(node)));
        }
    }

    #[test]
    fn square_grid() {
        let d = DomainSpec::walled(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let p = PriorFamily::custom(2, |_| 1.0);
        let v = CovarianceModel::Identity { dim: 2 };
        let g = build_grid(d.clone(), &[11, 11]).unwrap();
        let out = attenuate(&p, &d, &v, 0.25, &g).unwrap();
        let att = Attenuation::new(Model { prior: &p, covariance: &v }, &d, 0.25).unwrap();
        for node in 0..g.len() {
            let x = g.point(node);
            assert!((out.get(node) - att.factor(&x).unwrap()).abs() < 1e-14);
            if d.distance_to_walls(&x) >= 0.25 {
                assert_eq!(out.get(node), 1.0);
            }
        }
        assert_eq!(out.get(g.node(&[0, 5])), 0.0);
    }

    #[test]
    fn rejects_wide_collar() {
        let d = unit_interval();
        let p = PriorFamily::custom(1, |_| 1.0);
        let v = CovarianceModel::Identity { dim: 1 };
        assert!(Attenuation::new(Model { prior: &p, covariance: &v }, &d, 0.5).is_err());
    }
}
