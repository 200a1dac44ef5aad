//! Run configurations. Every document is parsed strictly (unknown fields are
//! rejected) and validated before any computation starts.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use admpriors::admissibility::{Cutoffs, Directions, FaceSampling, PriorFamily};
use admpriors::beat_uniform::{mixture_boundary_prior, BeatUniformConfig};
use admpriors::covariance::{CovarianceModel, MixtureModel, QuadratureConfig, WallBlend};
use admpriors::grid::{build_grid, DomainSpec, FaceKind, Grid, ScalarField};
use admpriors::linalg::SymMat;
use admpriors::paths::PathConfig;
use schemars::JsonSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Rejected configuration. Nothing has been computed when this is returned.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl From<admpriors::Error> for ConfigError {
    fn from(e: admpriors::Error) -> Self {
        ConfigError(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ConfigError>;

fn bad<T>(msg: impl Into<String>) -> Result<T> {
    Err(ConfigError(msg.into()))
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub nodes: Vec<usize>,
    /// Per axis `[lower, upper]` face kinds; walls everywhere when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces: Option<Vec<[FaceKind; 2]>>,
}

impl GridSpec {
    pub fn domain(&self) -> Result<DomainSpec> {
        let spec = DomainSpec::walled(&self.lower, &self.upper)?;
        Ok(match &self.faces {
            Some(f) => spec.with_faces(f.clone())?,
            None => spec,
        })
    }

    pub fn build(&self) -> Result<Grid> {
        Ok(build_grid(self.domain()?, &self.nodes)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovarianceSpec {
    Identity {
        dim: usize,
    },
    /// Constant matrix given by its upper triangle, row by row.
    Constant {
        upper: Vec<f64>,
    },
    Correlation,
    Mixture {
        #[serde(default)]
        quadrature: QuadratureConfig,
        /// Wall blend of the mixed term; `null` turns it off.
        #[serde(default = "default_blend")]
        blend: Option<WallBlend>,
    },
}

fn default_blend() -> Option<WallBlend> {
    Some(WallBlend::default())
}

impl CovarianceSpec {
    pub fn model(&self) -> Result<CovarianceModel> {
        Ok(match self {
            CovarianceSpec::Identity { dim } => {
                if !(1..=3).contains(dim) {
                    return bad(format!("identity dimension {dim} not in 1..=3"));
                }
                CovarianceModel::Identity { dim: *dim }
            }
            CovarianceSpec::Constant { upper } => {
                let d = match upper.len() {
                    1 => 1,
                    3 => 2,
                    6 => 3,
                    n => return bad(format!("constant covariance needs 1, 3 or 6 upper entries, got {n}")),
                };
                let m = SymMat::from_upper(d, upper);
                if !m.is_positive_definite() {
                    return bad("constant covariance is not positive definite");
                }
                CovarianceModel::Constant(m)
            }
            CovarianceSpec::Correlation => CovarianceModel::Correlation,
            CovarianceSpec::Mixture { quadrature, blend } => {
                quadrature.validate()?;
                if let Some(b) = blend {
                    if !(0.0 <= b.full && b.full < b.end) {
                        return bad("wall blend needs 0 <= full < end");
                    }
                }
                CovarianceModel::Mixture(MixtureModel { quadrature: *quadrature, blend: *blend })
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorSpec {
    Uniform {
        dim: usize,
    },
    /// `exp(-|x - center|^2 / scale^2)`.
    Gaussian {
        center: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    PowerRadial {
        alpha: f64,
        dim: usize,
    },
    CorrelationPower {
        alpha: f64,
    },
    /// Distance to the nearest wall of the configured domain.
    DistanceToBoundary,
    /// `min(4 x1 x2 / (x1 + x2)^2, x1 x2)`.
    MixtureBoundary,
    /// `offset + coefficients . x`, harmonic for any covariance constant in space.
    Linear {
        coefficients: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// Grid values from a CSV written by `beat-uniform` or `risk-map`. A
    /// relative path is taken from the config file's directory.
    Csv {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        faces: Option<Vec<[FaceKind; 2]>>,
    },
}

fn one() -> f64 {
    1.0
}

impl PriorSpec {
    /// The prior as a family; `domain` is needed by the distance prior.
    pub fn family(&self, domain: Option<&DomainSpec>, base: &Path) -> Result<PriorFamily> {
        Ok(match self {
            PriorSpec::Uniform { dim } => PriorFamily::custom(*dim, |_| 1.0),
            PriorSpec::Gaussian { center, scale } => {
                if !(*scale > 0.0) {
                    return bad("gaussian scale must be positive");
                }
                let (c, s2) = (center.clone(), scale * scale);
                PriorFamily::custom(center.len(), move |x| {
                    (-x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / s2).exp()
                })
            }
            PriorSpec::PowerRadial { alpha, dim } => PriorFamily::PowerRadial { alpha: *alpha, d: *dim },
            PriorSpec::CorrelationPower { alpha } => PriorFamily::CorrelationPower { alpha: *alpha },
            PriorSpec::DistanceToBoundary => match domain {
                Some(d) => PriorFamily::DistanceToBoundary { domain: d.clone() },
                None => return bad("distance_to_boundary needs a domain"),
            },
            PriorSpec::MixtureBoundary => PriorFamily::custom(2, mixture_boundary_prior),
            PriorSpec::Linear { coefficients, offset } => {
                let (a, c) = (coefficients.clone(), *offset);
                PriorFamily::custom(a.len(), move |x| c + x.iter().zip(&a).map(|(u, v)| u * v).sum::<f64>())
            }
            PriorSpec::Csv { path, faces } => PriorFamily::Tabulated(read_field(&base.join(path), faces.as_ref())?),
        })
    }

    pub fn csv_grid(&self, base: &Path) -> Result<Option<Grid>> {
        match self {
            PriorSpec::Csv { path, faces } => Ok(Some(read_field(&base.join(path), faces.as_ref())?.grid().clone())),
            _ => Ok(None),
        }
    }
}

fn read_field(path: &Path, faces: Option<&Vec<[FaceKind; 2]>>) -> Result<ScalarField> {
    let file = File::open(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let field =
        ScalarField::read_csv(BufReader::new(file)).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    match faces {
        None => Ok(field),
        Some(f) => {
            let g = field.grid();
            let spec = g.spec().clone().with_faces(f.clone())?;
            let grid = build_grid(spec, g.shape())?;
            Ok(ScalarField::new(grid, field.into_values())?)
        }
    }
}

/// A decision field `b(x)`, also the drift input of the path sampler.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecisionSpec {
    Zero {
        dim: usize,
    },
    Constant {
        value: Vec<f64>,
    },
    /// `matrix x + offset` with the matrix given row by row.
    Linear {
        matrix: Vec<f64>,
        offset: Vec<f64>,
    },
}

impl DecisionSpec {
    pub fn dim(&self) -> usize {
        match self {
            DecisionSpec::Zero { dim } => *dim,
            DecisionSpec::Constant { value } => value.len(),
            DecisionSpec::Linear { offset, .. } => offset.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        if let DecisionSpec::Linear { matrix, offset } = self {
            if matrix.len() != offset.len() * offset.len() {
                return bad("linear decision matrix must be d*d entries");
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match self {
            DecisionSpec::Zero { dim } => vec![0.0; *dim],
            DecisionSpec::Constant { value } => value.clone(),
            DecisionSpec::Linear { matrix, offset } => {
                let d = offset.len();
                (0..d).map(|i| offset[i] + (0..d).map(|j| matrix[i * d + j] * x[j]).sum::<f64>()).collect()
            }
        }
    }
}

fn check_dim(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return bad(format!("{what} is {got}-dimensional, expected {want}"));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RiskMapConfig {
    /// Required unless the prior is read from a CSV, which carries its grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub covariance: CovarianceSpec,
    /// Exactly one of `prior` and `decision`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<DecisionSpec>,
}

impl RiskMapConfig {
    pub fn validate(&self, base: &Path) -> Result<Grid> {
        let csv_grid = match &self.prior {
            Some(p) => p.csv_grid(base)?,
            None => None,
        };
        let grid = match (&self.grid, csv_grid) {
            (Some(g), _) => g.build()?,
            (None, Some(g)) => g,
            (None, None) => return bad("grid is required"),
        };
        let d = grid.dim();
        check_dim("covariance", self.covariance.model()?.dim(), d)?;
        match (&self.prior, &self.decision) {
            (Some(p), None) => check_dim("prior", p.family(Some(grid.spec()), base)?.dim(), d)?,
            (None, Some(b)) => {
                b.validate()?;
                check_dim("decision", b.dim(), d)?
            }
            _ => return bad("give exactly one of prior and decision"),
        }
        Ok(grid)
    }
}

/// Which checker to run. Without one the verdict comes from the exact
/// classifier for the power-law families.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckTarget {
    /// One-dimensional interval; `null` ends are infinite.
    Interval {
        lower: Option<f64>,
        upper: Option<f64>,
    },
    /// Behaviour at infinity in `dim` dimensions.
    Radial {
        dim: usize,
        #[serde(default = "sphere")]
        directions: Directions,
    },
    /// Box with wall and asymptotic faces.
    Domain {
        lower: Vec<f64>,
        upper: Vec<f64>,
        faces: Vec<[FaceKind; 2]>,
    },
    Exact,
}

fn sphere() -> Directions {
    Directions::Sphere
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    pub prior: PriorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSpec>,
    pub target: CheckTarget,
    #[serde(default)]
    pub cutoffs: Cutoffs,
    #[serde(default)]
    pub sampling: FaceSampling,
}

impl CheckConfig {
    pub fn domain(&self) -> Result<Option<DomainSpec>> {
        match &self.target {
            CheckTarget::Domain { lower, upper, faces } => {
                Ok(Some(DomainSpec::walled(lower, upper)?.with_faces(faces.clone())?))
            }
            _ => Ok(None),
        }
    }

    pub fn validate(&self, base: &Path) -> Result<()> {
        self.cutoffs.validate()?;
        let domain = self.domain()?;
        let family = self.prior.family(domain.as_ref(), base)?;
        if matches!(self.target, CheckTarget::Exact) {
            return match family {
                PriorFamily::PowerRadial { .. } | PriorFamily::CorrelationPower { .. } => Ok(()),
                other => bad(format!("no applicable checker: exact classification covers power_radial and correlation_power, not {other:?}")),
            };
        }
        let Some(cov) = &self.covariance else {
            return bad("numeric checks need a covariance");
        };
        let d = cov.model()?.dim();
        check_dim("prior", family.dim(), d)?;
        match &self.target {
            CheckTarget::Interval { lower, upper } => {
                check_dim("interval check", d, 1)?;
                let a = lower.unwrap_or(f64::NEG_INFINITY);
                let b = upper.unwrap_or(f64::INFINITY);
                if !(a < b) {
                    return bad("interval needs lower < upper");
                }
            }
            CheckTarget::Radial { dim, .. } => check_dim("radial check", d, *dim)?,
            CheckTarget::Domain { lower, .. } => check_dim("domain", lower.len(), d)?,
            CheckTarget::Exact => {}
        }
        Ok(())
    }
}

/// Values along one parameter axis: an explicit list or a stepped range.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum AxisValues {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

impl AxisValues {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            AxisValues::List(v) => Ok(v.clone()),
            AxisValues::Range { start, stop, step } => {
                if !(*step > 0.0) || stop < start {
                    return bad("range needs step > 0 and stop >= start");
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|k| start + k as f64 * step).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum MixtureKind {
    Mixture,
    /// `V = I`, for checking the plotting pipeline.
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub theta1: AxisValues,
    pub theta2: AxisValues,
    /// Sample size the ellipses are scaled to.
    #[serde(default = "thousand")]
    pub n: usize,
    #[serde(default = "level")]
    pub level: f64,
    #[serde(default = "mixture_kind")]
    pub model: MixtureKind,
    #[serde(default)]
    pub quadrature: QuadratureConfig,
}

fn thousand() -> usize {
    1000
}

fn level() -> f64 {
    0.95
}

fn mixture_kind() -> MixtureKind {
    MixtureKind::Mixture
}

impl MixtureConfig {
    pub fn thetas(&self) -> Result<Vec<[f64; 2]>> {
        let (a, b) = (self.theta1.values()?, self.theta2.values()?);
        if a.is_empty() || b.is_empty() {
            return bad("empty theta grid");
        }
        if a.iter().chain(&b).any(|v| !(*v > 0.0 && v.is_finite())) {
            return bad("theta values must be positive");
        }
        Ok(a.iter().flat_map(|x| b.iter().map(move |y| [*x, *y])).collect())
    }

    pub fn validate(&self) -> Result<()> {
        self.thetas()?;
        self.quadrature.validate()?;
        if self.n == 0 || !(0.0 < self.level && self.level < 1.0) {
            return bad("need n >= 1 and 0 < level < 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct BeatUniformRun {
    #[serde(default)]
    pub experiment: BeatUniformConfig,
    /// Replaces the mixture covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<CovarianceSpec>,
    /// Replaces the boundary values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<PriorSpec>,
}

impl BeatUniformRun {
    pub fn validate(&self, base: &Path) -> Result<()> {
        let e = &self.experiment;
        e.solver.validate()?;
        e.mixture.quadrature.validate()?;
        if !(0.0 < e.lower && e.lower < e.upper) {
            return bad("need 0 < lower < upper");
        }
        if !(e.band > 0.0 && e.lower + e.band < e.upper) {
            return bad("band must be positive and narrower than the box");
        }
        e.grid()?;
        if let Some(c) = &self.covariance {
            check_dim("covariance", c.model()?.dim(), 2)?;
        }
        if let Some(p) = &self.boundary {
            check_dim("boundary", p.family(None, base)?.dim(), 2)?;
        }
        Ok(())
    }
}

/// `sqrt(p)` on the walls for the path estimate.
#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RootBoundarySpec {
    Constant {
        value: f64,
    },
    /// `exp(rate . x)`.
    Exponential {
        rate: Vec<f64>,
    },
    /// Constant per wall: `lower[i]` on the lower face of axis `i`, `upper[i]` on the upper.
    Walls {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

impl RootBoundarySpec {
    pub fn eval(&self, domain: &DomainSpec, x: &[f64]) -> f64 {
        match self {
            RootBoundarySpec::Constant { value } => *value,
            RootBoundarySpec::Exponential { rate } => rate.iter().zip(x).map(|(r, v)| r * v).sum::<f64>().exp(),
            RootBoundarySpec::Walls { lower, upper } => {
                // The face the exit point is closest to.
                let mut best = (f64::INFINITY, 0.0);
                for i in 0..domain.dim() {
                    for (gap, v) in [(x[i] - domain.lower[i], lower[i]), (domain.upper[i] - x[i], upper[i])] {
                        if gap.abs() < best.0 {
                            best = (gap.abs(), v);
                        }
                    }
                }
                best.1
            }
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        match self {
            RootBoundarySpec::Constant { .. } => Ok(()),
            RootBoundarySpec::Exponential { rate } => check_dim("rate", rate.len(), d),
            RootBoundarySpec::Walls { lower, upper } => {
                check_dim("lower wall values", lower.len(), d)?;
                check_dim("upper wall values", upper.len(), d)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FkConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub covariance: CovarianceSpec,
    pub decision: DecisionSpec,
    pub boundary: RootBoundarySpec,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub paths: PathConfig,
    /// Number of leading paths written to `paths.csv`.
    #[serde(default)]
    pub dump_paths: usize,
}

impl FkConfig {
    pub fn domain(&self) -> Result<DomainSpec> {
        Ok(DomainSpec::walled(&self.lower, &self.upper)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.paths.validate()?;
        let domain = self.domain()?;
        let d = domain.dim();
        check_dim("covariance", self.covariance.model()?.dim(), d)?;
        self.decision.validate()?;
        check_dim("decision", self.decision.dim(), d)?;
        self.boundary.validate(d)?;
        check_dim("x0", self.x0.len(), d)?;
        if !domain.contains(&self.x0) || domain.distance_to_walls(&self.x0) <= 0.0 {
            return bad("x0 must lie strictly inside the box");
        }
        if self.dump_paths > self.paths.n_paths {
            return bad("dump_paths exceeds n_paths");
        }
        Ok(())
    }
}

/// JSON Schema of each command's config document.
pub fn schemas() -> Vec<(&'static str, serde_json::Value)> {
    vec![
        ("risk-map", schemars::schema_for!(RiskMapConfig).to_value()),
        ("check", schemars::schema_for!(CheckConfig).to_value()),
        ("mixture", schemars::schema_for!(MixtureConfig).to_value()),
        ("beat-uniform", schemars::schema_for!(BeatUniformRun).to_value()),
        ("fk", schemars::schema_for!(FkConfig).to_value()),
    ]
}
