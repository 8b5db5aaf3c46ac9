//! Eigendecomposition, graph-space frequency projection, spectrum
//! partitioning, and the closed-form eigenvalue-gap indices.

use crate::error::{Error, Result};
use crate::geometry::SignalVector;
use crate::graph::{DenseOperator, OperatorKind};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Full eigendecomposition of a symmetric operator. Eigenvalues ascend and
/// eigenvector columns are l2-orthonormal, with a deterministic sign
/// convention so results are reproducible across solver back-ends: the
/// largest-magnitude entry of each column is nonnegative, ties broken by
/// lowest index.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    source_kind: OperatorKind,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn source_kind(&self) -> OperatorKind {
        self.source_kind
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues[self.n() - 1]
    }

    /// Orthogonal projector onto the span of the eigenvectors at `indices`.
    pub fn projector(&self, indices: &[usize]) -> DMatrix<f64> {
        let n = self.n();
        let mut p = DMatrix::zeros(n, n);
        for &i in indices {
            let col = self.eigenvectors.column(i);
            p.syger(1.0, &col, &col, 1.0);
        }
        p
    }
}

/// Pin the eigensolver to sequential mode once: its output must not depend
/// on the number of worker threads.
fn sequential_backend() {
    static INIT: std::sync::Once = std::sync::Once::new();
    INIT.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Raw symmetric eigendecomposition, eigenvalues ascending, columns
/// l2-orthonormal. No sign convention applied here.
pub(crate) fn symmetric_eigen_raw(m: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    sequential_backend();
    let n = m.nrows();
    let mut fm = faer::Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            fm[(i, j)] = m[(i, j)];
        }
    }
    let evd = fm
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Invariant(format!("eigendecomposition failed: {e:?}")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| evd.S()[a].partial_cmp(&evd.S()[b]).unwrap());
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| evd.S()[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, dst)] = evd.U()[(r, src)];
        }
    }
    Ok((eigenvalues, eigenvectors))
}

/// Eigenvalues only, ascending.
pub(crate) fn symmetric_eigenvalues_raw(m: &DMatrix<f64>) -> Result<DVector<f64>> {
    sequential_backend();
    let n = m.nrows();
    let mut fm = faer::Mat::<f64>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            fm[(i, j)] = m[(i, j)];
        }
    }
    let mut vals = fm
        .self_adjoint_eigenvalues(faer::Side::Lower)
        .map_err(|e| Error::Invariant(format!("eigenvalue computation failed: {e:?}")))?;
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(DVector::from_vec(vals))
}

pub fn eigendecompose(op: &DenseOperator) -> Result<SpectralDecomposition> {
    if op.matrix().iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("operator contains non-finite entries".into()));
    }
    let n = op.n();
    let (eigenvalues, mut eigenvectors) = symmetric_eigen_raw(op.matrix())?;
    for c in 0..n {
        // Sign convention: largest-magnitude entry nonnegative, lowest index
        // winning ties.
        let col = eigenvectors.column(c);
        let mut best = 0;
        for r in 1..n {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            for r in 0..n {
                eigenvectors[(r, c)] = -eigenvectors[(r, c)];
            }
        }
    }
    let dec = SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        source_kind: op.kind(),
    };
    validate_decomposition(op, &dec)?;
    Ok(dec)
}

fn validate_decomposition(op: &DenseOperator, dec: &SpectralDecomposition) -> Result<()> {
    let n = dec.n();
    for i in 1..n {
        if dec.eigenvalues[i] < dec.eigenvalues[i - 1] {
            return Err(Error::Invariant("eigenvalues are not ascending".into()));
        }
    }
    if op.kind() == OperatorKind::Laplacian && dec.eigenvalues[0] < -1e-9 {
        return Err(Error::Invariant(format!(
            "laplacian has negative eigenvalue {}",
            dec.eigenvalues[0]
        )));
    }
    let gram = dec.eigenvectors.transpose() * &dec.eigenvectors;
    let mut max_ortho: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            max_ortho = max_ortho.max((gram[(i, j)] - target).abs());
        }
    }
    if max_ortho > 1e-9 {
        return Err(Error::Invariant(format!(
            "eigenvector columns deviate from orthonormality by {max_ortho}"
        )));
    }
    let residual = op.matrix() * &dec.eigenvectors
        - &dec.eigenvectors * DMatrix::from_diagonal(&dec.eigenvalues);
    let max_resid = residual.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-8 * dec.eigenvalues[n - 1].abs().max(1.0);
    if max_resid > tol {
        return Err(Error::Invariant(format!(
            "eigen residual {max_resid} exceeds tolerance {tol}"
        )));
    }
    Ok(())
}

/// Frequency projection under the graph-space inner product
/// <u, v> = (1/n) sum u_i v_i. Returns one coefficient column per feature.
pub fn project(dec: &SpectralDecomposition, x: &SignalVector) -> Result<DMatrix<f64>> {
    if x.n() != dec.n() {
        return Err(Error::Contract(format!(
            "signal length {} does not match decomposition size {}",
            x.n(),
            dec.n()
        )));
    }
    Ok(dec.eigenvectors.transpose() * x.values() / dec.n() as f64)
}

/// Inverse of [`project`]: x = n * Phi * coefficients.
pub fn reconstruct(dec: &SpectralDecomposition, coeffs: &DMatrix<f64>) -> Result<SignalVector> {
    if coeffs.nrows() != dec.n() {
        return Err(Error::Contract("coefficient length mismatch".into()));
    }
    SignalVector::new(&dec.eigenvectors * coeffs * dec.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdKind {
    /// Split when the consecutive eigenvalue difference exceeds alpha.
    AlphaDifference,
    /// Split when the consecutive eigenvalue ratio minus one exceeds gamma.
    GammaRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumGroup {
    /// First eigenvalue index of the group (inclusive).
    pub start: usize,
    /// One past the last eigenvalue index.
    pub end: usize,
    /// lambda_max - lambda_min within the group.
    pub diameter: f64,
    /// Chained greedy groups can stretch beyond the threshold; such groups
    /// are flagged so downstream tolerance checks can use actual diameters.
    pub exceeds_threshold: bool,
}

impl SpectrumGroup {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn is_singleton(&self) -> bool {
        self.len() == 1
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

/// Ordered partition of the sorted spectrum into contiguous groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPartition {
    pub threshold_kind: ThresholdKind,
    pub threshold: f64,
    pub groups: Vec<SpectrumGroup>,
    /// Index of the quarantined zero-eigenvalue group in ratio mode.
    pub zero_group: Option<usize>,
}

impl SpectrumPartition {
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn singleton_count(&self) -> usize {
        self.groups.iter().filter(|g| g.is_singleton()).count()
    }

    pub fn covered(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    pub fn group_of(&self, index: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.indices().contains(&index))
    }
}

/// Greedy left-to-right clustering of the sorted eigenvalues: start a new
/// group whenever the consecutive gap (difference mode) or consecutive
/// ratio minus one (ratio mode) exceeds the threshold. In ratio mode the
/// zero eigenvalues of a graph Laplacian are quarantined into their own
/// leading group when `exclude_zero` is set; otherwise they are a domain
/// error since ratios against zero are undefined.
pub fn partition_spectrum(
    dec: &SpectralDecomposition,
    kind: ThresholdKind,
    threshold: f64,
    exclude_zero: bool,
) -> Result<SpectrumPartition> {
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(Error::Config("partition threshold must be positive".into()));
    }
    let ev = &dec.eigenvalues;
    let n = ev.len();
    let zero_tol = 1e-10 * ev[n - 1].abs().max(1.0);
    let mut groups = Vec::new();
    let mut zero_group = None;
    let mut start = 0usize;
    if kind == ThresholdKind::GammaRatio {
        let zeros = (0..n).take_while(|&i| ev[i].abs() <= zero_tol).count();
        if ev[0] < -zero_tol {
            return Err(Error::Domain("ratio partition requires a nonnegative spectrum".into()));
        }
        if zeros > 0 {
            if !exclude_zero {
                return Err(Error::Domain(
                    "spectrum contains zero eigenvalues; ratio partition requires exclude_zero"
                        .into(),
                ));
            }
            groups.push(make_group(ev, 0, zeros, kind, threshold));
            zero_group = Some(0);
            start = zeros;
        }
    }
    if start < n {
        let mut begin = start;
        for i in start..n - 1 {
            let split = match kind {
                ThresholdKind::AlphaDifference => ev[i + 1] - ev[i] > threshold,
                ThresholdKind::GammaRatio => ev[i + 1] / ev[i] - 1.0 > threshold,
            };
            if split {
                groups.push(make_group(ev, begin, i + 1, kind, threshold));
                begin = i + 1;
            }
        }
        groups.push(make_group(ev, begin, n, kind, threshold));
    }
    Ok(SpectrumPartition {
        threshold_kind: kind,
        threshold,
        groups,
        zero_group,
    })
}

fn make_group(
    ev: &DVector<f64>,
    start: usize,
    end: usize,
    kind: ThresholdKind,
    threshold: f64,
) -> SpectrumGroup {
    let lo = ev[start];
    let hi = ev[end - 1];
    let diameter = hi - lo;
    let exceeds_threshold = match kind {
        ThresholdKind::AlphaDifference => diameter > threshold,
        ThresholdKind::GammaRatio => lo > 0.0 && hi / lo - 1.0 > threshold,
    };
    SpectrumGroup {
        start,
        end,
        diameter,
        exceeds_threshold,
    }
}

/// Volume of the unit ball in R^d: pi^(d/2) / Gamma(d/2 + 1).
pub fn unit_ball_volume(d: usize) -> f64 {
    // Gamma(d/2 + 1) by the recursion from Gamma(1) = 1, Gamma(3/2) = sqrt(pi)/2.
    let mut gamma = if d % 2 == 0 {
        1.0
    } else {
        std::f64::consts::PI.sqrt() / 2.0
    };
    let mut x = if d % 2 == 0 { 1.0 } else { 1.5 };
    while x < d as f64 / 2.0 + 1.0 - 0.25 {
        gamma *= x;
        x += 1.0;
    }
    std::f64::consts::PI.powf(d as f64 / 2.0) / gamma
}

/// Index past which consecutive eigenvalue gaps are predicted to fall below
/// the threshold, from the Weyl-law growth rate lambda_k ~ k^(2/d).
///
/// Difference mode returns ceil((alpha d / C1)^(d/(2-d)) (C_d Vol)^(2/(2-d)))
/// and requires d > 2; ratio mode returns ceil(1 / (C1 (gamma+1)^(d/2) - 1)).
pub fn weyl_gap_index(
    intrinsic_dim: usize,
    volume: f64,
    threshold: f64,
    kind: ThresholdKind,
    c1: f64,
) -> Result<usize> {
    if !volume.is_finite() || volume <= 0.0 {
        return Err(Error::Config("volume must be positive".into()));
    }
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(Error::Config("threshold must be positive".into()));
    }
    if !c1.is_finite() || c1 <= 0.0 {
        return Err(Error::Config("c1 must be positive".into()));
    }
    let d = intrinsic_dim as f64;
    let raw = match kind {
        ThresholdKind::AlphaDifference => {
            if intrinsic_dim <= 2 {
                return Err(Error::Domain(
                    "difference-mode gap index requires intrinsic dimension > 2".into(),
                ));
            }
            let cd = unit_ball_volume(intrinsic_dim);
            (threshold * d / c1).powf(d / (2.0 - d)) * (cd * volume).powf(2.0 / (2.0 - d))
        }
        ThresholdKind::GammaRatio => {
            let denom = c1 * (threshold + 1.0).powf(d / 2.0) - 1.0;
            if denom <= 0.0 {
                return Err(Error::Domain(
                    "ratio-mode gap index denominator is nonpositive".into(),
                ));
            }
            denom.recip()
        }
    };
    if !raw.is_finite() {
        return Err(Error::Domain("gap index overflows".into()));
    }
    // Absorb float noise just below integer boundaries before the ceiling.
    let nudged = raw - 1e-9 * raw.abs().max(1.0);
    Ok((nudged.ceil().max(1.0)) as usize)
}
