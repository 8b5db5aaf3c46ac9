//! Dense Gaussian-kernel graphs over point clouds, their Laplacians, and
//! synthetic absolute/relative operator perturbations.

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::rng::{self, tags};
use crate::spectral;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Adjacency,
    Laplacian,
    GenericSymmetric,
}

/// Dense real symmetric operator. The kernel bandwidth used to build it is
/// carried along for provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
    kind: OperatorKind,
    t_n: Option<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>, kind: OperatorKind, t_n: Option<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Contract(format!(
                "operator must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("operator contains non-finite entries".into()));
        }
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Invariant(format!(
                        "operator is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        match kind {
            OperatorKind::Adjacency => {
                for i in 0..n {
                    if matrix[(i, i)] != 0.0 {
                        return Err(Error::Invariant(format!("adjacency diagonal {i} is nonzero")));
                    }
                }
                if matrix.iter().any(|&v| v < 0.0) {
                    return Err(Error::Invariant("adjacency has negative weights".into()));
                }
            }
            OperatorKind::Laplacian => {
                let scale = matrix.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                let tol = 1e-9 * n as f64 * scale.max(1e-300);
                for i in 0..n {
                    let row_sum: f64 = matrix.row(i).sum();
                    if row_sum.abs() > tol {
                        return Err(Error::Invariant(format!(
                            "laplacian row {i} sums to {row_sum}, tolerance {tol}"
                        )));
                    }
                }
            }
            OperatorKind::GenericSymmetric => {}
        }
        Ok(DenseOperator { matrix, kind, t_n })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn t_n(&self) -> Option<f64> {
        self.t_n
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Exact operator norm of a symmetric matrix: largest eigenvalue magnitude.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    let vals = crate::spectral::symmetric_eigenvalues_raw(m)
        .expect("operator norm of a finite symmetric matrix");
    vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    Absolute,
    Relative,
    Deformation,
}

#[derive(Debug, Clone)]
pub struct PerturbationOutcome {
    pub perturbed: DenseOperator,
    pub perturbation_kind: PerturbationKind,
    pub epsilon_nominal: f64,
    /// Operator norm of the additive term (absolute) or max |e_i| of the
    /// multiplicative spectrum scaling (relative).
    pub epsilon_measured: f64,
}

/// Kernel bandwidth per the graph-construction recipe: n^(-1/(d+2+alpha)).
pub fn kernel_bandwidth(n: usize, intrinsic_dim: usize, alpha_kernel: f64) -> f64 {
    (n as f64).powf(-1.0 / (intrinsic_dim as f64 + 2.0 + alpha_kernel))
}

/// Build the dense Gaussian-kernel adjacency over the cloud:
/// w_ij = (1/n) * 1/(t (4 pi t)^(d/2)) * exp(-|x_i - x_j|^2 / (4t)), zero
/// diagonal. The exponent d/2 can be overridden for experimentation.
pub fn build_graph(
    cloud: &PointCloud,
    alpha_kernel: f64,
    t_n_override: Option<f64>,
    exponent_override: Option<f64>,
) -> Result<DenseOperator> {
    let n = cloud.n();
    if n < 2 {
        return Err(Error::Config("graph construction needs at least 2 points".into()));
    }
    if !alpha_kernel.is_finite() || alpha_kernel <= 0.0 {
        return Err(Error::Config("alpha_kernel must be positive".into()));
    }
    if let Some(t) = t_n_override {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Config("t_n override must be positive".into()));
        }
    }
    let d = cloud.intrinsic_dim();
    let t_n = t_n_override.unwrap_or_else(|| kernel_bandwidth(n, d, alpha_kernel));
    let exponent = exponent_override.unwrap_or(d as f64 / 2.0);
    let scale = 1.0 / (n as f64 * t_n * (4.0 * std::f64::consts::PI * t_n).powf(exponent));
    let inv_bw = 1.0 / (4.0 * t_n);
    let pts = cloud.points();
    let amb = cloud.ambient_dim();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d2 = 0.0;
            for k in 0..amb {
                let diff = pts[(i, k)] - pts[(j, k)];
                d2 += diff * diff;
            }
            let v = scale * (-d2 * inv_bw).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    DenseOperator::new(w, OperatorKind::Adjacency, Some(t_n))
}

/// Kernel weight at a given squared distance, exposed for direct checks.
pub fn kernel_weight(n: usize, t_n: f64, exponent: f64, dist_sq: f64) -> f64 {
    let scale = 1.0 / (n as f64 * t_n * (4.0 * std::f64::consts::PI * t_n).powf(exponent));
    scale * (-dist_sq / (4.0 * t_n)).exp()
}

/// L = diag(A 1) - A.
pub fn laplacian(adj: &DenseOperator) -> Result<DenseOperator> {
    if adj.kind() != OperatorKind::Adjacency {
        return Err(Error::Contract("laplacian requires an adjacency operator".into()));
    }
    let n = adj.n();
    let mut l = -adj.matrix().clone();
    for i in 0..n {
        let degree: f64 = adj.matrix().row(i).sum();
        l[(i, i)] = degree;
    }
    DenseOperator::new(l, OperatorKind::Laplacian, adj.t_n())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Config("perturbation epsilon must be finite and >= 0".into()));
    }
    Ok(())
}

fn check_perturbable(op: &DenseOperator) -> Result<()> {
    match op.kind() {
        OperatorKind::Laplacian | OperatorKind::GenericSymmetric => Ok(()),
        OperatorKind::Adjacency => Err(Error::Contract(
            "perturbations apply to laplacian or generic symmetric operators".into(),
        )),
    }
}

/// L' = L + A with A a seed-deterministic random symmetric matrix scaled to
/// operator norm exactly epsilon.
pub fn perturb_absolute(op: &DenseOperator, epsilon: f64, seed: u64) -> Result<PerturbationOutcome> {
    check_epsilon(epsilon)?;
    check_perturbable(op)?;
    let n = op.n();
    if epsilon == 0.0 {
        return Ok(PerturbationOutcome {
            perturbed: op.clone(),
            perturbation_kind: PerturbationKind::Absolute,
            epsilon_nominal: 0.0,
            epsilon_measured: 0.0,
        });
    }
    let mut rng = rng::stream(seed, &[tags::PERTURB_ABSOLUTE]);
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(StandardNormal);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    let norm = operator_norm(&s);
    if norm <= 0.0 {
        return Err(Error::Invariant("random symmetric draw has zero norm".into()));
    }
    let a = s * (epsilon / norm);
    let epsilon_measured = operator_norm(&a);
    let perturbed = DenseOperator::new(op.matrix() + &a, OperatorKind::GenericSymmetric, op.t_n())?;
    Ok(PerturbationOutcome {
        perturbed,
        perturbation_kind: PerturbationKind::Absolute,
        epsilon_nominal: epsilon,
        epsilon_measured,
    })
}

/// L' = L + E L with E built in L's eigenbasis: E = Phi diag(e) Phi^T and
/// e_i drawn uniformly from [-epsilon, epsilon]. Because E commutes with L,
/// E L is exactly self-adjoint and the perturbed eigenvalues are
/// (1 + e_i) lambda_i.
pub fn perturb_relative(op: &DenseOperator, epsilon: f64, seed: u64) -> Result<PerturbationOutcome> {
    check_epsilon(epsilon)?;
    check_perturbable(op)?;
    if epsilon == 0.0 {
        return Ok(PerturbationOutcome {
            perturbed: op.clone(),
            perturbation_kind: PerturbationKind::Relative,
            epsilon_nominal: 0.0,
            epsilon_measured: 0.0,
        });
    }
    let dec = spectral::eigendecompose(op)?;
    let n = op.n();
    let mut rng = rng::stream(seed, &[tags::PERTURB_RELATIVE]);
    let mut scaled = dec.eigenvalues().clone();
    let mut max_e: f64 = 0.0;
    for i in 0..n {
        let e = rng.gen_range(-epsilon..=epsilon);
        max_e = max_e.max(e.abs());
        scaled[i] *= 1.0 + e;
    }
    let phi = dec.eigenvectors();
    let mut m = phi * DMatrix::from_diagonal(&scaled) * phi.transpose();
    // Symmetrize away the last-bit rounding from the triple product.
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    let perturbed = DenseOperator::new(m, OperatorKind::GenericSymmetric, op.t_n())?;
    Ok(PerturbationOutcome {
        perturbed,
        perturbation_kind: PerturbationKind::Relative,
        epsilon_nominal: epsilon,
        epsilon_measured: max_e,
    })
}

/// Degenerate relative perturbation with a constant spectral factor:
/// L' = (1 + e) L, so every eigenvalue scales exactly by 1 + e.
pub fn perturb_relative_constant(op: &DenseOperator, e: f64) -> Result<PerturbationOutcome> {
    check_epsilon(e.abs())?;
    check_perturbable(op)?;
    let perturbed = DenseOperator::new(
        op.matrix() * (1.0 + e),
        OperatorKind::GenericSymmetric,
        op.t_n(),
    )?;
    Ok(PerturbationOutcome {
        perturbed,
        perturbation_kind: PerturbationKind::Relative,
        epsilon_nominal: e.abs(),
        epsilon_measured: e.abs(),
    })
}
