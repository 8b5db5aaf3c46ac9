//! Heat-kernel FIR filters: h(L) = sum_k h_k e^{-kL}, their scalar frequency
//! responses hhat(lambda) = sum_k h_k e^{-k lambda}, continuity constants,
//! flatness verification against a spectrum partition, normalization, and
//! least-squares design toward per-group targets.

use crate::error::{Error, Result};
use crate::geometry::SignalVector;
use crate::spectral::{SpectralDecomposition, SpectrumPartition};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// FIR tap sequence h_0 .. h_{K-1} over the diffusion shift e^{-L}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterCoefficients {
    taps: Vec<f64>,
}

impl FilterCoefficients {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Config("filter needs at least one tap".into()));
        }
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::Data("filter taps must be finite".into()));
        }
        Ok(FilterCoefficients { taps })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn order(&self) -> usize {
        self.taps.len()
    }

    /// hhat(lambda) = sum_k h_k e^{-k lambda}.
    pub fn response_at(&self, lambda: f64) -> f64 {
        let e = (-lambda).exp();
        // Horner in e^{-lambda}.
        let mut acc = 0.0;
        for &h in self.taps.iter().rev() {
            acc = acc * e + h;
        }
        acc
    }

    /// hhat'(lambda) = -sum_k k h_k e^{-k lambda}.
    pub fn response_derivative_at(&self, lambda: f64) -> f64 {
        let e = (-lambda).exp();
        let mut acc = 0.0;
        let mut pow = 1.0; // e^{-k lambda}
        for (k, &h) in self.taps.iter().enumerate() {
            if k > 0 {
                pow *= e;
                acc -= k as f64 * h * pow;
            }
        }
        acc
    }

    pub fn scaled(&self, factor: f64) -> Result<FilterCoefficients> {
        FilterCoefficients::new(self.taps.iter().map(|t| t * factor).collect())
    }
}

/// Closed interval of spectrum over which constants and normalization are
/// evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaRange {
    pub lo: f64,
    pub hi: f64,
}

impl LambdaRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo < 0.0 || hi <= lo {
            return Err(Error::Config(format!(
                "invalid lambda range [{lo}, {hi}]: need 0 <= lo < hi"
            )));
        }
        Ok(LambdaRange { lo, hi })
    }

    /// Default working range for a decomposition: [0, 1.1 * lambda_max].
    pub fn covering(dec: &SpectralDecomposition) -> Result<Self> {
        LambdaRange::new(0.0, (dec.max_eigenvalue() * 1.1).max(1e-6))
    }
}

/// Grid suprema of |hhat'|, |lambda hhat'| and |hhat| over a range. The grid
/// has `grid_density` equal subintervals (so doubling the density refines the
/// same point set and the reported constants never decrease).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityConstants {
    pub lipschitz: f64,
    pub integral_lipschitz: f64,
    pub sup_abs_response: f64,
    pub range: LambdaRange,
}

pub fn freq_response(h: &FilterCoefficients, lambdas: &[f64]) -> Result<Vec<f64>> {
    for &l in lambdas {
        if !l.is_finite() || l < -1e-9 {
            return Err(Error::Domain(format!("frequency response needs lambda >= 0, got {l}")));
        }
    }
    Ok(lambdas.iter().map(|&l| h.response_at(l)).collect())
}

/// Apply the filter through the spectral path: z = Phi diag(hhat(lambda))
/// Phi^T x, acting columnwise on multi-feature signals.
pub fn apply_filter(
    h: &FilterCoefficients,
    dec: &SpectralDecomposition,
    x: &SignalVector,
) -> Result<SignalVector> {
    if x.n() != dec.n() {
        return Err(Error::Contract(format!(
            "signal length {} does not match decomposition size {}",
            x.n(),
            dec.n()
        )));
    }
    let response = DVector::from_iterator(
        dec.n(),
        dec.eigenvalues().iter().map(|&l| h.response_at(l)),
    );
    let mut coeffs = dec.eigenvectors().transpose() * x.values();
    for f in 0..coeffs.ncols() {
        for i in 0..coeffs.nrows() {
            coeffs[(i, f)] *= response[i];
        }
    }
    SignalVector::new(dec.eigenvectors() * coeffs)
}

pub fn continuity_constants(
    h: &FilterCoefficients,
    range: LambdaRange,
    grid_density: usize,
) -> Result<ContinuityConstants> {
    if grid_density < 100 {
        return Err(Error::Config("continuity grid density must be at least 100".into()));
    }
    let step = (range.hi - range.lo) / grid_density as f64;
    let mut lipschitz: f64 = 0.0;
    let mut integral: f64 = 0.0;
    let mut sup: f64 = 0.0;
    for i in 0..=grid_density {
        let lambda = range.lo + step * i as f64;
        let d = h.response_derivative_at(lambda).abs();
        lipschitz = lipschitz.max(d);
        integral = integral.max(lambda * d);
        sup = sup.max(h.response_at(lambda).abs());
    }
    Ok(ContinuityConstants {
        lipschitz,
        integral_lipschitz: integral,
        sup_abs_response: sup,
        range,
    })
}

/// Per-group response flatness against a spectrum partition: for every group
/// the within-group response spread max |hhat(li) - hhat(lj)| must stay
/// within delta.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub holds: bool,
    pub delta: f64,
    pub worst_group: usize,
    pub worst_deviation: f64,
    /// Within-group response spread, one entry per group.
    pub group_deviations: Vec<f64>,
}

impl FlatnessReport {
    /// Largest spread among groups with more than one eigenvalue; the
    /// smallest delta for which the filter passes the threshold check.
    pub fn measured_delta(&self, partition: &SpectrumPartition) -> f64 {
        self.group_deviations
            .iter()
            .zip(&partition.groups)
            .filter(|(_, g)| !g.is_singleton())
            .map(|(d, _)| *d)
            .fold(0.0, f64::max)
    }
}

pub fn verify_fdt_frt(
    h: &FilterCoefficients,
    partition: &SpectrumPartition,
    dec: &SpectralDecomposition,
    delta: f64,
) -> Result<FlatnessReport> {
    if partition.covered() != dec.n() {
        return Err(Error::Contract(
            "partition does not cover the decomposition's spectrum".into(),
        ));
    }
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Config("delta must be nonnegative".into()));
    }
    let mut group_deviations = Vec::with_capacity(partition.group_count());
    let mut worst_group = 0;
    let mut worst_deviation = 0.0f64;
    for (gi, group) in partition.groups.iter().enumerate() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in group.indices() {
            let r = h.response_at(dec.eigenvalues()[i]);
            lo = lo.min(r);
            hi = hi.max(r);
        }
        let spread = if group.len() <= 1 { 0.0 } else { hi - lo };
        if spread > worst_deviation {
            worst_deviation = spread;
            worst_group = gi;
        }
        group_deviations.push(spread);
    }
    Ok(FlatnessReport {
        holds: worst_deviation <= delta,
        delta,
        worst_group,
        worst_deviation,
        group_deviations,
    })
}

/// Rescale taps so the grid supremum of |hhat| over the range is exactly 1.
pub fn normalize(
    h: &FilterCoefficients,
    range: LambdaRange,
    grid_density: usize,
) -> Result<FilterCoefficients> {
    let constants = continuity_constants(h, range, grid_density)?;
    if constants.sup_abs_response <= 0.0 {
        return Err(Error::Domain("cannot normalize the all-zero filter".into()));
    }
    h.scaled(1.0 / constants.sup_abs_response)
}

/// Result of a least-squares filter design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignedFilter {
    pub filter: FilterCoefficients,
    /// Fit quality of the least-squares solve before normalization:
    /// max_i |hhat(lambda_i) - target_i| over the design eigenvalues.
    pub residual: f64,
    /// False when the fit collapsed to the zero filter and normalization
    /// was skipped.
    pub normalized: bool,
    /// Factor the taps were divided by to reach unit sup response.
    pub sup_rescale: f64,
    pub range: LambdaRange,
}

const DESIGN_RIDGE: f64 = 1e-8;
pub const DEFAULT_GRID_DENSITY: usize = 2000;

/// Fit taps so the response tracks a piecewise-constant target over the
/// spectrum: each eigenvalue inherits its group's target value. Solved by
/// ridge-regularized normal equations on the e^{-k lambda} basis, then
/// normalized to unit sup response.
pub fn design_filter(
    dec: &SpectralDecomposition,
    partition: &SpectrumPartition,
    group_targets: &[f64],
    taps: usize,
) -> Result<DesignedFilter> {
    design_filter_on(dec.eigenvalues().as_slice(), partition, group_targets, taps)
}

/// Same as [`design_filter`] but taking the sorted eigenvalue list directly.
pub fn design_filter_on(
    eigenvalues: &[f64],
    partition: &SpectrumPartition,
    group_targets: &[f64],
    taps: usize,
) -> Result<DesignedFilter> {
    if group_targets.len() != partition.group_count() {
        return Err(Error::Contract(format!(
            "{} targets supplied for {} groups",
            group_targets.len(),
            partition.group_count()
        )));
    }
    if group_targets.iter().any(|t| !t.is_finite() || t.abs() > 1.0) {
        return Err(Error::Config("group targets must lie in [-1, 1]".into()));
    }
    if taps < 2 {
        return Err(Error::Config("filter design needs at least 2 taps".into()));
    }
    if partition.covered() != eigenvalues.len() {
        return Err(Error::Contract(
            "partition does not cover the supplied eigenvalues".into(),
        ));
    }
    let n = eigenvalues.len();
    let mut target = DVector::zeros(n);
    for (gi, group) in partition.groups.iter().enumerate() {
        for i in group.indices() {
            target[i] = group_targets[gi];
        }
    }
    let mut basis = DMatrix::zeros(n, taps);
    for i in 0..n {
        for k in 0..taps {
            basis[(i, k)] = (-(k as f64) * eigenvalues[i]).exp();
        }
    }
    let mut gram = basis.transpose() * &basis;
    for k in 0..taps {
        gram[(k, k)] += DESIGN_RIDGE;
    }
    let rhs = basis.transpose() * &target;
    let solution = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Invariant("design normal equations are not positive definite".into()))?;
    let raw = FilterCoefficients::new(solution.iter().copied().collect())?;
    let mut residual = 0.0f64;
    for i in 0..n {
        residual = residual.max((raw.response_at(eigenvalues[i]) - target[i]).abs());
    }
    let max_ev = eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v));
    let range = LambdaRange::new(0.0, (max_ev * 1.1).max(1e-6))?;
    let (filter, normalized, sup_rescale) = match continuity_constants(&raw, range, DEFAULT_GRID_DENSITY)? {
        c if c.sup_abs_response <= 0.0 => (raw, false, 1.0),
        c => (raw.scaled(1.0 / c.sup_abs_response)?, true, c.sup_abs_response),
    };
    Ok(DesignedFilter {
        filter,
        residual,
        normalized,
        sup_rescale,
        range,
    })
}
