//! Point clouds sampled from analytic surfaces, signal evaluation at the
//! sample points, and controlled deformations of the cloud.

use crate::error::{Error, Result};
use crate::rng::{self, tags};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Torus geometry is fixed: major radius 2, minor radius 1. Well separated
/// spectrum, no self-intersection.
pub const TORUS_MAJOR: f64 = 2.0;
pub const TORUS_MINOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Sphere2,
    Torus2,
    PlanePatch,
    /// A cloud that no longer lies on one of the analytic templates
    /// (deformed, rotated, rescaled, or externally loaded).
    External,
}

impl ManifoldKind {
    pub fn intrinsic_dim(self) -> usize {
        2
    }

    pub fn ambient_dim(self) -> Option<usize> {
        match self {
            ManifoldKind::Sphere2 | ManifoldKind::Torus2 => Some(3),
            ManifoldKind::PlanePatch => Some(2),
            ManifoldKind::External => None,
        }
    }

    /// Surface area of the template, used to rescale graph eigenvalues when
    /// comparing against analytic Laplace-Beltrami spectra (the kernel graph
    /// Laplacian built from uniform probability samples approximates
    /// `1/Vol` times the manifold operator).
    pub fn volume(self) -> Option<f64> {
        match self {
            ManifoldKind::Sphere2 => Some(4.0 * std::f64::consts::PI),
            ManifoldKind::Torus2 => {
                Some(4.0 * std::f64::consts::PI * std::f64::consts::PI * TORUS_MAJOR * TORUS_MINOR)
            }
            ManifoldKind::PlanePatch => Some(1.0),
            ManifoldKind::External => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            ManifoldKind::Sphere2 => 1,
            ManifoldKind::Torus2 => 2,
            ManifoldKind::PlanePatch => 3,
            ManifoldKind::External => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sphere2" => Ok(ManifoldKind::Sphere2),
            "torus2" => Ok(ManifoldKind::Torus2),
            "plane_patch" | "plane-patch" => Ok(ManifoldKind::PlanePatch),
            "external" => Ok(ManifoldKind::External),
            other => Err(Error::Config(format!("unknown manifold kind `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Sphere2 => "sphere2",
            ManifoldKind::Torus2 => "torus2",
            ManifoldKind::PlanePatch => "plane_patch",
            ManifoldKind::External => "external",
        }
    }
}

/// `n` sample points with ambient coordinates. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: DMatrix<f64>, // n x ambient
    manifold_kind: ManifoldKind,
    intrinsic_dim: usize,
    seed: u64,
}

impl PointCloud {
    pub fn new(
        points: DMatrix<f64>,
        manifold_kind: ManifoldKind,
        intrinsic_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::Config("point cloud must contain at least one point".into()));
        }
        if intrinsic_dim == 0 || points.ncols() < intrinsic_dim {
            return Err(Error::Config(format!(
                "ambient dimension {} must be at least the intrinsic dimension {}",
                points.ncols(),
                intrinsic_dim
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("point cloud contains non-finite coordinates".into()));
        }
        if manifold_kind == ManifoldKind::Sphere2 {
            for i in 0..points.nrows() {
                let norm = points.row(i).norm();
                if (norm - 1.0).abs() > 1e-12 {
                    return Err(Error::Invariant(format!(
                        "sphere2 point {i} has norm {norm}, expected 1 within 1e-12"
                    )));
                }
            }
        }
        Ok(PointCloud {
            points,
            manifold_kind,
            intrinsic_dim,
            seed,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn manifold_kind(&self) -> ManifoldKind {
        self.manifold_kind
    }

    pub fn intrinsic_dim(&self) -> usize {
        self.intrinsic_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Rigid rotation followed by uniform scaling; the result is tagged
    /// `external` since it no longer matches the analytic template.
    pub fn transformed(&self, rotation: &DMatrix<f64>, scale: f64) -> Result<PointCloud> {
        if rotation.nrows() != self.ambient_dim() || rotation.ncols() != self.ambient_dim() {
            return Err(Error::Contract("rotation dimension mismatch".into()));
        }
        let pts = (&self.points * rotation.transpose()) * scale;
        PointCloud::new(pts, ManifoldKind::External, self.intrinsic_dim, self.seed)
    }
}

/// Per-node signal values, one column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    values: DMatrix<f64>, // n x F
}

impl SignalVector {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::Config("signal must have at least one node and one feature".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("signal contains non-finite entries".into()));
        }
        Ok(SignalVector { values })
    }

    pub fn from_column(v: DVector<f64>) -> Result<Self> {
        let n = v.len();
        SignalVector::new(DMatrix::from_column_slice(n, 1, v.as_slice()))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn feature_count(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, f: usize) -> DVector<f64> {
        self.values.column(f).into_owned()
    }

    /// Graph-space norm sqrt((1/n) sum v_i^2), summed over all features.
    pub fn graph_norm(&self) -> f64 {
        (self.values.norm_squared() / self.n() as f64).sqrt()
    }
}

/// Norm of `v` under the (1/n)-weighted inner product.
pub fn graph_norm(v: &DVector<f64>) -> f64 {
    (v.norm_squared() / v.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SignalSpec {
    /// Ambient coordinates as features (F = ambient dimension).
    Coordinates,
    /// f(x) = x_3 on the unit sphere.
    FirstHarmonic,
    /// Peak-normalized Gaussian bump around `center`.
    GaussianBump { center: Vec<f64>, width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformationKind {
    GaussianCoordinate,
    SmoothField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeformationSpec {
    pub kind: DeformationKind,
    pub epsilon: f64,
    pub seed: u64,
    /// Highest trigonometric order of the smooth displacement field.
    pub bandlimit: usize,
}

impl DeformationSpec {
    pub fn gaussian(epsilon: f64, seed: u64) -> Self {
        DeformationSpec {
            kind: DeformationKind::GaussianCoordinate,
            epsilon,
            seed,
            bandlimit: 0,
        }
    }

    pub fn smooth(epsilon: f64, bandlimit: usize, seed: u64) -> Self {
        DeformationSpec {
            kind: DeformationKind::SmoothField,
            epsilon,
            seed,
            bandlimit,
        }
    }

    fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::Config("deformation epsilon must be finite and >= 0".into()));
        }
        if self.kind == DeformationKind::SmoothField && self.bandlimit < 1 {
            return Err(Error::Config("smooth_field deformation requires bandlimit >= 1".into()));
        }
        Ok(())
    }
}

/// Draw `n` points i.i.d. from the uniform surface measure of `kind`.
pub fn sample_manifold(kind: ManifoldKind, n: usize, seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let mut rng = rng::stream(seed, &[tags::SAMPLE, kind.tag()]);
    let points = match kind {
        ManifoldKind::Sphere2 => {
            let mut m = DMatrix::zeros(n, 3);
            for i in 0..n {
                loop {
                    let v = [
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ];
                    let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    if norm > 1e-12 {
                        for (j, x) in v.iter().enumerate() {
                            m[(i, j)] = x / norm;
                        }
                        break;
                    }
                }
            }
            m
        }
        ManifoldKind::Torus2 => {
            let ratio = TORUS_MINOR / TORUS_MAJOR;
            let mut m = DMatrix::zeros(n, 3);
            for i in 0..n {
                let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                // Area element is proportional to R + r cos(phi); rejection
                // against that ratio gives the uniform surface measure.
                let phi = loop {
                    let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                    let accept = (1.0 + ratio * phi.cos()) / (1.0 + ratio);
                    if rng.gen::<f64>() < accept {
                        break phi;
                    }
                };
                let ring = TORUS_MAJOR + TORUS_MINOR * phi.cos();
                m[(i, 0)] = ring * theta.cos();
                m[(i, 1)] = ring * theta.sin();
                m[(i, 2)] = TORUS_MINOR * phi.sin();
            }
            m
        }
        ManifoldKind::PlanePatch => {
            let mut m = DMatrix::zeros(n, 2);
            for i in 0..n {
                m[(i, 0)] = rng.gen::<f64>();
                m[(i, 1)] = rng.gen::<f64>();
            }
            m
        }
        ManifoldKind::External => {
            return Err(Error::Config("cannot sample from the external manifold kind".into()))
        }
    };
    PointCloud::new(points, kind, kind.intrinsic_dim(), seed)
}

/// Evaluate a signal at the sample points: `values[i] = f(points[i])`.
pub fn evaluate_signal(cloud: &PointCloud, spec: &SignalSpec) -> Result<SignalVector> {
    match spec {
        SignalSpec::Coordinates => SignalVector::new(cloud.points().clone()),
        SignalSpec::FirstHarmonic => {
            if cloud.manifold_kind() != ManifoldKind::Sphere2 {
                return Err(Error::Config(
                    "first_harmonic signal requires a sphere2 cloud".into(),
                ));
            }
            SignalVector::from_column(cloud.points().column(2).into_owned())
        }
        SignalSpec::GaussianBump { center, width } => {
            if center.len() != cloud.ambient_dim() {
                return Err(Error::Config(format!(
                    "gaussian_bump center has dimension {}, cloud is {}-dimensional",
                    center.len(),
                    cloud.ambient_dim()
                )));
            }
            if !width.is_finite() || *width <= 0.0 {
                return Err(Error::Config("gaussian_bump width must be positive".into()));
            }
            let n = cloud.n();
            let mut v = DMatrix::zeros(n, 1);
            for i in 0..n {
                let mut d2 = 0.0;
                for j in 0..cloud.ambient_dim() {
                    let d = cloud.points()[(i, j)] - center[j];
                    d2 += d * d;
                }
                v[(i, 0)] = (-d2 / (2.0 * width * width)).exp();
            }
            SignalVector::new(v)
        }
    }
}

/// Apply a deformation to the cloud. Deterministic in `spec.seed`.
///
/// `gaussian_coordinate` adds an independent draw with mean epsilon and
/// variance 2*epsilon to every coordinate of every point. `smooth_field`
/// displaces along a fixed bandlimited vector field of unit sup-norm scaled
/// by epsilon; sphere clouds move along the tangential field via the
/// exponential map so they stay exactly on the sphere and never travel
/// farther than epsilon.
pub fn deform(cloud: &PointCloud, spec: &DeformationSpec) -> Result<PointCloud> {
    spec.validate()?;
    let n = cloud.n();
    let amb = cloud.ambient_dim();
    if spec.epsilon == 0.0 {
        let kind = match (spec.kind, cloud.manifold_kind()) {
            (DeformationKind::SmoothField, ManifoldKind::Sphere2) => ManifoldKind::Sphere2,
            _ => ManifoldKind::External,
        };
        return PointCloud::new(cloud.points().clone(), kind, cloud.intrinsic_dim(), spec.seed);
    }
    match spec.kind {
        DeformationKind::GaussianCoordinate => {
            let mut rng = rng::stream(spec.seed, &[tags::DEFORM, 1]);
            let std = (2.0 * spec.epsilon).sqrt();
            let mut pts = cloud.points().clone();
            for i in 0..n {
                for j in 0..amb {
                    let z: f64 = rng.sample(StandardNormal);
                    pts[(i, j)] += spec.epsilon + std * z;
                }
            }
            PointCloud::new(pts, ManifoldKind::External, cloud.intrinsic_dim(), spec.seed)
        }
        DeformationKind::SmoothField => {
            let field = smooth_field(cloud, spec.bandlimit, spec.seed);
            match cloud.manifold_kind() {
                ManifoldKind::Sphere2 => {
                    // Tangential component, normalized to unit sup-norm over
                    // the cloud, then moved along the great circle by
                    // epsilon * |w|. Geodesic displacement <= epsilon.
                    let mut tangent = DMatrix::zeros(n, amb);
                    let mut sup: f64 = 0.0;
                    for i in 0..n {
                        let x = cloud.points().row(i);
                        let v = field.row(i);
                        let radial = x.dot(&v);
                        let mut norm2 = 0.0;
                        for j in 0..amb {
                            let w = v[j] - radial * x[j];
                            tangent[(i, j)] = w;
                            norm2 += w * w;
                        }
                        sup = sup.max(norm2.sqrt());
                    }
                    if sup <= 1e-14 {
                        return PointCloud::new(
                            cloud.points().clone(),
                            ManifoldKind::Sphere2,
                            cloud.intrinsic_dim(),
                            spec.seed,
                        );
                    }
                    let mut pts = DMatrix::zeros(n, amb);
                    for i in 0..n {
                        let wnorm = tangent.row(i).norm() / sup;
                        let angle = spec.epsilon * wnorm;
                        if wnorm <= 1e-14 {
                            for j in 0..amb {
                                pts[(i, j)] = cloud.points()[(i, j)];
                            }
                            continue;
                        }
                        let unit = tangent.row(i) / tangent.row(i).norm();
                        for j in 0..amb {
                            pts[(i, j)] =
                                angle.cos() * cloud.points()[(i, j)] + angle.sin() * unit[j];
                        }
                        let norm = pts.row(i).norm();
                        for j in 0..amb {
                            pts[(i, j)] /= norm;
                        }
                    }
                    PointCloud::new(pts, ManifoldKind::Sphere2, cloud.intrinsic_dim(), spec.seed)
                }
                _ => {
                    let mut sup: f64 = 0.0;
                    for i in 0..n {
                        sup = sup.max(field.row(i).norm());
                    }
                    let scale = if sup <= 1e-14 { 0.0 } else { spec.epsilon / sup };
                    let pts = cloud.points() + field * scale;
                    PointCloud::new(pts, ManifoldKind::External, cloud.intrinsic_dim(), spec.seed)
                }
            }
        }
    }
}

/// Bandlimited trigonometric vector field evaluated at the cloud points,
/// with seed-selected coefficients. Not normalized here.
fn smooth_field(cloud: &PointCloud, bandlimit: usize, seed: u64) -> DMatrix<f64> {
    let n = cloud.n();
    let amb = cloud.ambient_dim();
    let mut rng = rng::stream(seed, &[tags::DEFORM, 2]);
    let mut coeffs = Vec::with_capacity(amb * amb * bandlimit * 2);
    for _ in 0..amb * amb * bandlimit * 2 {
        coeffs.push(rng.sample::<f64, _>(StandardNormal));
    }
    let mut field = DMatrix::zeros(n, amb);
    for i in 0..n {
        for a in 0..amb {
            let mut acc = 0.0;
            for b in 0..amb {
                for m in 1..=bandlimit {
                    let base = (((a * amb) + b) * bandlimit + (m - 1)) * 2;
                    let arg = m as f64 * cloud.points()[(i, b)];
                    acc += coeffs[base] * arg.sin() + coeffs[base + 1] * arg.cos();
                }
            }
            field[(i, a)] = acc;
        }
    }
    field
}

/// Uniformly distributed 3x3 rotation matrix (via a random unit quaternion).
pub fn random_rotation3(rng: &mut impl Rng) -> DMatrix<f64> {
    let q: Vec<f64> = (0..4).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm);
    DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        ],
    )
}
