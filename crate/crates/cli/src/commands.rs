use std::path::Path;

use admpriors::admissibility::{
    check_1d, check_bounded_boundary, check_radial, classify_power_law, AdmissibilityVerdict, Directions, Model,
    Verdict,
};
use admpriors::beat_uniform::{beat_uniform_with, mixture_boundary_prior};
use admpriors::covariance::{covariance_ellipses, ellipse, information_map, CovarianceModel, MixtureParams};
use admpriors::grid::{FaceKind, Grid, ScalarField, VectorField};
use admpriors::linalg::SymMat;
use admpriors::paths::{feynman_kac_estimate, simulate_sde, write_paths_csv};
use admpriors::risk::{risk_of_decision, risk_of_prior};
use anyhow::Result;
use serde::Serialize;
use serde_json::json;

use crate::config::{BeatUniformRun, CheckConfig, CheckTarget, FkConfig, MixtureConfig, MixtureKind, RiskMapConfig};
use crate::output::OutDir;

/// How a completed run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    Inconclusive,
    ChecksFailed,
}

/// Floor on the risk gain below which a node counts as a loss.
const GAIN_FLOOR: f64 = -1e-8;

pub fn risk_map(cfg: &RiskMapConfig, grid: Grid, base: &Path, out: &mut OutDir) -> Result<Status> {
    let v = cfg.covariance.model()?.on_grid(&grid)?;
    let risk = match (&cfg.prior, &cfg.decision) {
        (Some(p), _) => {
            let family = p.family(Some(grid.spec()), base)?;
            let p = ScalarField::from_fn(&grid, |x| family.eval(x))?;
            risk_of_prior(&p, &v)?
        }
        (None, Some(b)) => risk_of_decision(&VectorField::from_fn(&grid, |x| b.eval(x))?, &v)?,
        (None, None) => unreachable!("validated"),
    };
    out.csv("risk.csv", |w| Ok(risk.write_csv(w, "risk")?))?;
    out.json(
        "summary.json",
        &json!({ "interior_nodes": risk.interior().count(), "min": risk.min(), "max": risk.max() }),
    )?;
    Ok(Status::Ok)
}

fn merge(a: AdmissibilityVerdict, b: AdmissibilityVerdict) -> AdmissibilityVerdict {
    let mut all = a.boundaries;
    all.extend(b.boundaries);
    AdmissibilityVerdict::aggregate(a.method, all, false)
}

pub fn check(cfg: &CheckConfig, base: &Path, out: &mut OutDir) -> Result<Status> {
    let domain = cfg.domain()?;
    let family = cfg.prior.family(domain.as_ref(), base)?;
    let verdict = match (&cfg.target, &cfg.covariance) {
        (CheckTarget::Exact, _) => classify_power_law(&family)?,
        (_, None) => unreachable!("validated"),
        (target, Some(cov)) => {
            let covariance = cov.model()?;
            let model = Model { prior: &family, covariance: &covariance };
            match target {
                CheckTarget::Interval { lower, upper } => {
                    let pv = |x: f64| {
                        let v = covariance.covariance(&[x]).map_or(f64::NAN, |m| m.get(0, 0));
                        family.eval(&[x]) * v
                    };
                    let a = lower.unwrap_or(f64::NEG_INFINITY);
                    let b = upper.unwrap_or(f64::INFINITY);
                    check_1d(pv, a, b, &cfg.cutoffs)?
                }
                CheckTarget::Radial { dim, directions } => check_radial(&model, *dim, *directions, &cfg.cutoffs)?,
                CheckTarget::Domain { .. } => {
                    let domain = domain.as_ref().expect("domain target");
                    let walls = check_bounded_boundary(&model, domain, &cfg.cutoffs, &cfg.sampling)?;
                    let open = domain.faces.iter().any(|f| f[1] == FaceKind::Asymptotic);
                    if open {
                        let far = check_radial(&model, domain.dim(), Directions::PositiveOrthant, &cfg.cutoffs)?;
                        merge(walls, far)
                    } else {
                        walls
                    }
                }
                CheckTarget::Exact => unreachable!(),
            }
        }
    };
    out.json("verdict.json", &verdict)?;
    println!("{:?} ({:?})", verdict.verdict, verdict.method);
    Ok(match verdict.verdict {
        Verdict::Inconclusive => Status::Inconclusive,
        _ => Status::Ok,
    })
}

#[derive(Serialize)]
struct Flagged {
    theta: [f64; 2],
    error: String,
}

fn fmt_or_nan(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.16e}"))
}

pub fn mixture(cfg: &MixtureConfig, out: &mut OutDir) -> Result<Status> {
    let thetas = cfg.thetas()?;
    let mut flagged = Vec::new();
    // (theta, L, V or None, cond) and per-theta ellipse vertices.
    let (rows, ellipses): (Vec<_>, Vec<_>) = match cfg.model {
        MixtureKind::Identity => thetas
            .iter()
            .map(|t| {
                let i = SymMat::identity(2);
                ((*t, i, Some(i), 1.0), ellipse(*t, &i, cfg.n, cfg.level))
            })
            .unzip(),
        MixtureKind::Mixture => {
            let params: Vec<MixtureParams> =
                thetas.iter().map(|t| MixtureParams::new(t[0], t[1])).collect::<admpriors::Result<_>>()?;
            let info = information_map(&params, &cfg.quadrature)?;
            let sets = covariance_ellipses(&params, cfg.n, cfg.level, &cfg.quadrature);
            let rows = info.into_iter().map(|r| ([r.theta.x1, r.theta.x2], r.information, r.covariance, r.cond));
            rows.zip(sets.into_iter().map(|s| s.vertices)).unzip()
        }
    };
    out.csv("information.csv", |w| {
        writeln!(w, "x1,x2,L11,L12,L22,V11,V12,V22,cond")?;
        for (t, l, v, cond) in &rows {
            let vs: Vec<String> = (0..3).map(|k| fmt_or_nan(v.map(|m| m.upper()[k]))).collect();
            let ls: Vec<String> = l.upper().iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(w, "{},{},{},{},{cond:.16e}", t[0], t[1], ls.join(","), vs.join(","))?;
        }
        Ok(())
    })?;
    out.csv("ellipses.csv", |w| {
        writeln!(w, "theta1,theta2,vertex_index,y1,y2")?;
        for ((t, ..), e) in rows.iter().zip(&ellipses) {
            match e {
                Ok(vertices) => {
                    for (k, y) in vertices.iter().enumerate() {
                        writeln!(w, "{},{},{k},{:.16e},{:.16e}", t[0], t[1], y[0], y[1])?;
                    }
                }
                Err(err) => flagged.push(Flagged { theta: *t, error: err.to_string() }),
            }
        }
        Ok(())
    })?;
    for f in &flagged {
        eprintln!("flagged theta=({}, {}): {}", f.theta[0], f.theta[1], f.error);
    }
    out.json("summary.json", &json!({ "thetas": rows.len(), "flagged": flagged }))?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct Checks {
    /// Every interior gain is at least the floor.
    gains_nonnegative: bool,
    band_exceeds_interior: bool,
}

pub fn beat_uniform(run: &BeatUniformRun, base: &Path, out: &mut OutDir) -> Result<Status> {
    let e = &run.experiment;
    let g = e.grid()?;
    let model = match &run.covariance {
        Some(c) => c.model()?,
        None => CovarianceModel::Mixture(e.mixture),
    };
    let v = model.on_grid(&g)?;
    let blended = model.blended_nodes(&g);
    let family = run.boundary.as_ref().map(|p| p.family(None, base)).transpose()?;
    let boundary = match &family {
        Some(f) => {
            // The function may already solve the equation; start the interior
            // from the mean edge value so the solve does real work.
            let mut b = ScalarField::from_fn(&g, |x| f.eval(x))?;
            let edges: Vec<usize> = g.edge_nodes().collect();
            let mean = edges.iter().map(|&k| b.get(k)).sum::<f64>() / edges.len() as f64;
            let interior: Vec<usize> = g.interior_nodes().collect();
            for k in interior {
                b.values_mut()[k] = mean;
            }
            b
        }
        None => ScalarField::from_fn(&g, mixture_boundary_prior)?,
    };
    let r = beat_uniform_with(e, v, blended, &boundary)?;
    let summary = r.summary();
    // How far the solution sits from the boundary function itself, which
    // is the exact answer when that function already solves the equation.
    let gap = family
        .as_ref()
        .map(|f| g.interior_nodes().map(|k| (r.solution.p.get(k) - f.eval(&g.point(k))).abs()).fold(0.0, f64::max));
    let checks = Checks {
        gains_nonnegative: summary.min_gain >= GAIN_FLOOR,
        band_exceeds_interior: summary.band_mean_gain > summary.interior_mean_gain,
    };
    let passed = checks.gains_nonnegative && checks.band_exceeds_interior;

    out.csv("prior.csv", |w| Ok(r.solution.p.write_csv(w, false, "p")?))?;
    out.csv("gain.csv", |w| Ok(r.gains.gain.write_csv(w, "gain")?))?;
    out.csv("history.csv", |w| Ok(r.solution.write_history_csv(w)?))?;
    out.json(
        "summary.json",
        &json!({
            "summary": summary,
            "solver": r.solution.summary(&e.solver),
            "max_gap_to_boundary_function": gap,
            "checks": checks,
            "passed": passed,
        }),
    )?;
    println!(
        "{} sweeps, residual {:.3e}, gain [{:.3e}, {:.3e}], band {:.4} vs interior {:.4}",
        summary.iterations,
        summary.final_residual,
        summary.min_gain,
        summary.max_gain,
        summary.band_mean_gain,
        summary.interior_mean_gain
    );
    Ok(if passed { Status::Ok } else { Status::ChecksFailed })
}

pub fn fk(cfg: &FkConfig, out: &mut OutDir) -> Result<Status> {
    let model = cfg.covariance.model()?;
    let domain = cfg.domain()?;
    let b = |x: &[f64]| cfg.decision.eval(x);
    let root = |x: &[f64]| cfg.boundary.eval(&domain, x);
    let res = feynman_kac_estimate(&b, &model, &domain, &root, &cfg.x0, &cfg.paths)?;
    if cfg.dump_paths > 0 {
        let paths = (0..cfg.dump_paths as u64)
            .map(|i| simulate_sde(&b, &model, &domain, &cfg.x0, &cfg.paths, i))
            .collect::<admpriors::Result<Vec<_>>>()?;
        out.csv("paths.csv", |w| Ok(write_paths_csv(&paths, w)?))?;
    }
    if res.censoring_flagged {
        eprintln!("warning: {} of {} paths censored", res.n_censored, cfg.paths.n_paths);
    }
    let mut doc = serde_json::to_value(res)?;
    doc["x0"] = json!(cfg.x0);
    doc["config"] = serde_json::to_value(cfg)?;
    out.json("estimate.json", &doc)?;
    println!("u(x0) = {:.6} +/- {:.6}", res.estimate, res.std_error);
    Ok(Status::Ok)
}
