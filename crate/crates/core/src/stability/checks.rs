//! Numeric checkers for the eigenvalue perturbation lemmas, the
//! time-vs-spectral filter path equivalence, and the gradient
//! implementation. Each suite runs seeded random trials and reports
//! violations; the verify command exits nonzero when any appear.

use crate::error::{Error, Result};
use crate::filters::FilterCoefficients;
use crate::geometry::{sample_manifold, ManifoldKind, SignalVector};
use crate::graph::{
    build_graph, laplacian, operator_norm, perturb_absolute, perturb_relative, DenseOperator,
    OperatorKind,
};
use crate::mnn::{init_model, loss_and_gradients, MnnConfig, Nonlinearity, Sample};
use crate::rng::{self, tags};
use crate::spectral::{eigendecompose, symmetric_eigenvalues_raw};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Aggregate outcome of one checker suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest lhs/rhs ratio observed (at most 1 when everything holds).
    pub worst_ratio: f64,
}

impl SuiteOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

const SLACK: f64 = 1e-9;

fn random_symmetric(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.sample(StandardNormal);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn random_psd(n: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    (&g * g.transpose()) / n as f64
}

/// Sorted eigenvalues move by at most the operator norm of an additive
/// symmetric perturbation.
pub fn weyl_suite(n: usize, trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut rng = rng::stream(seed, &[tags::SUITE, 1, t as u64]);
        let base = DenseOperator::new(
            random_symmetric(n, &mut rng),
            OperatorKind::GenericSymmetric,
            None,
        )?;
        let epsilon = rng.gen_range(0.01..0.5);
        let outcome = perturb_absolute(&base, epsilon, rng.gen())?;
        let before = symmetric_eigenvalues_raw(base.matrix())?;
        let after = symmetric_eigenvalues_raw(outcome.perturbed.matrix())?;
        for i in 0..n {
            let shift = (before[i] - after[i]).abs();
            worst = worst.max(shift / epsilon);
            if shift > epsilon + SLACK {
                violations += 1;
            }
        }
    }
    Ok(SuiteOutcome {
        name: "weyl-eigenvalue-shift".into(),
        trials,
        violations,
        worst_ratio: worst,
    })
}

/// Under a commuting relative perturbation of a positive semidefinite
/// operator, each sorted eigenvalue moves by at most epsilon times itself.
pub fn relative_eigenvalue_suite(n: usize, trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut rng = rng::stream(seed, &[tags::SUITE, 2, t as u64]);
        let base =
            DenseOperator::new(random_psd(n, &mut rng), OperatorKind::GenericSymmetric, None)?;
        let epsilon = rng.gen_range(0.01..0.5);
        let outcome = perturb_relative(&base, epsilon, rng.gen())?;
        let before = symmetric_eigenvalues_raw(base.matrix())?;
        let after = symmetric_eigenvalues_raw(outcome.perturbed.matrix())?;
        for i in 0..n {
            let shift = (before[i] - after[i]).abs();
            let cap = epsilon * before[i].abs();
            if cap > 0.0 {
                worst = worst.max(shift / cap);
            }
            if shift > cap + SLACK {
                violations += 1;
            }
        }
    }
    Ok(SuiteOutcome {
        name: "relative-eigenvalue-shift".into(),
        trials,
        violations,
        worst_ratio: worst,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DavisKahanOutcome {
    /// Operator-norm distance between the two spectral projectors.
    pub lhs: f64,
    /// (pi / 2) |B - A| / gap.
    pub rhs: f64,
    pub gap: f64,
    pub holds: bool,
}

/// Spectral-projector deviation against the sin-theta cap: the projectors
/// onto the same sorted index group of two symmetric operators differ by at
/// most (pi/2) |B - A| / d, with d the cross-spectral gap between the group
/// and the complement.
pub fn check_davis_kahan(
    a: &DenseOperator,
    b: &DenseOperator,
    group: &[usize],
) -> Result<DavisKahanOutcome> {
    if a.n() != b.n() {
        return Err(Error::Contract("operators must have equal size".into()));
    }
    let n = a.n();
    if group.is_empty() || group.len() >= n {
        return Err(Error::Config("group must be a nonempty proper index subset".into()));
    }
    if group.iter().any(|&i| i >= n) {
        return Err(Error::Config("group index out of range".into()));
    }
    let dec_a = eigendecompose(a)?;
    let dec_b = eigendecompose(b)?;
    let in_group = |i: usize| group.contains(&i);
    let mut gap = f64::INFINITY;
    for i in 0..n {
        if !in_group(i) {
            continue;
        }
        for j in 0..n {
            if in_group(j) {
                continue;
            }
            gap = gap.min((dec_a.eigenvalues()[i] - dec_b.eigenvalues()[j]).abs());
            gap = gap.min((dec_b.eigenvalues()[i] - dec_a.eigenvalues()[j]).abs());
        }
    }
    if !gap.is_finite() || gap <= 0.0 {
        return Err(Error::Domain(format!("spectral gap {gap} must be positive")));
    }
    let proj_a = dec_a.projector(group);
    let proj_b = dec_b.projector(group);
    let lhs = operator_norm(&(proj_a - proj_b));
    let rhs = std::f64::consts::FRAC_PI_2 * operator_norm(&(b.matrix() - a.matrix())) / gap;
    Ok(DavisKahanOutcome {
        lhs,
        rhs,
        gap,
        holds: lhs <= rhs * (1.0 + SLACK),
    })
}

/// Random symmetric pairs with the group boundary placed at the widest
/// spectral gap and a perturbation well below it.
pub fn davis_kahan_suite(n: usize, trials: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut rng = rng::stream(seed, &[tags::SUITE, 3, t as u64]);
        let base = DenseOperator::new(
            random_symmetric(n, &mut rng),
            OperatorKind::GenericSymmetric,
            None,
        )?;
        let values = symmetric_eigenvalues_raw(base.matrix())?;
        let mut boundary = 1;
        let mut widest = 0.0;
        for i in 0..n - 1 {
            let g = values[i + 1] - values[i];
            if g > widest {
                widest = g;
                boundary = i + 1;
            }
        }
        let epsilon = widest / 10.0;
        let outcome = perturb_absolute(&base, epsilon, rng.gen())?;
        let group: Vec<usize> = (0..boundary).collect();
        let dk = check_davis_kahan(&base, &outcome.perturbed, &group)?;
        worst = worst.max(dk.lhs / dk.rhs);
        if !dk.holds {
            violations += 1;
        }
    }
    Ok(SuiteOutcome {
        name: "davis-kahan-projector".into(),
        trials,
        violations,
        worst_ratio: worst,
    })
}

/// Matrix exponential by scaling and squaring on a Taylor kernel.
/// Independent of the eigendecomposition path; serves as the time-domain
/// oracle for filter application.
pub fn expm_series(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0f64, f64::max);
    let squarings = if norm1 > 0.25 {
        (norm1 / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2.0f64.powi(squarings as i32);
    let mut result = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=24 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Spectral filter application against the independent matrix-exponential
/// path sum_k h_k e^{-kL} x, at 1e-8 relative tolerance.
pub fn path_equivalence_suite(cases: usize, n: usize, seed: u64) -> Result<SuiteOutcome> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    const TOL: f64 = 1e-8;
    for t in 0..cases {
        let mut rng = rng::stream(seed, &[tags::SUITE, 4, t as u64]);
        let cloud = sample_manifold(ManifoldKind::Sphere2, n, rng.gen())?;
        let lap = laplacian(&build_graph(&cloud, 1.0, None, None)?)?;
        let dec = eigendecompose(&lap)?;
        let taps: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = FilterCoefficients::new(taps.clone())?;
        let x = SignalVector::new(DMatrix::from_fn(n, 1, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        }))?;
        let spectral = crate::filters::apply_filter(&h, &dec, &x)?;
        let mut time_path = DMatrix::zeros(n, 1);
        for (k, &tap) in taps.iter().enumerate() {
            time_path += expm_series(&(lap.matrix() * -(k as f64))) * x.values() * tap;
        }
        let rel = (spectral.values() - &time_path).norm() / time_path.norm().max(1e-12);
        worst = worst.max(rel / TOL);
        if rel > TOL {
            violations += 1;
        }
    }
    Ok(SuiteOutcome {
        name: "filter-path-equivalence".into(),
        trials: cases,
        violations,
        worst_ratio: worst,
    })
}

/// Analytic gradients against central finite differences on a small smooth
/// network: every parameter must match within 1e-4 relative error.
pub fn gradient_check_suite(seeds: &[u64]) -> Result<SuiteOutcome> {
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    const STEP: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    for &seed in seeds {
        let config = MnnConfig::new(vec![3, 4, 1], 3, Nonlinearity::TanhNormalized)?;
        let model = init_model(&config, seed)?;
        let mut rng = rng::stream(seed, &[tags::SUITE, 5]);
        let mut batch = Vec::new();
        for c in 0..2u64 {
            let cloud = sample_manifold(ManifoldKind::Sphere2, 12, rng.gen())?;
            let dec = Arc::new(eigendecompose(&laplacian(&build_graph(
                &cloud, 1.0, None, None,
            )?)?)?);
            let features = SignalVector::new(DMatrix::from_fn(12, 3, |_, _| {
                rng.gen_range(-1.0..1.0)
            }))?;
            batch.push(Sample {
                dec,
                features,
                label: c % 2 == 0,
            });
        }
        let analytic = loss_and_gradients(&model, &batch)?;
        let base = model.flatten();
        for i in 0..base.len() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let mut p = base.clone();
            p[i] += STEP;
            plus.assign_flat(&p)?;
            p[i] -= 2.0 * STEP;
            minus.assign_flat(&p)?;
            let fd = (loss_and_gradients(&plus, &batch)?.loss
                - loss_and_gradients(&minus, &batch)?.loss)
                / (2.0 * STEP);
            let denom = analytic.gradients[i].abs().max(fd.abs());
            if denom > 1e-8 {
                let rel = (analytic.gradients[i] - fd).abs() / denom;
                worst = worst.max(rel / TOL);
                if rel > TOL {
                    violations += 1;
                }
            }
        }
    }
    Ok(SuiteOutcome {
        name: "gradient-finite-difference".into(),
        trials: seeds.len(),
        violations,
        worst_ratio: worst,
    })
}
