//! Closed-form stability bounds for filters and networks under operator
//! perturbations, numeric checkers for the supporting eigenvalue lemmas,
//! and the experiments comparing empirical deviations against the bounds.

pub mod checks;
pub mod experiments;

pub use checks::{
    check_davis_kahan, davis_kahan_suite, expm_series, gradient_check_suite,
    path_equivalence_suite, relative_eigenvalue_suite, weyl_suite, DavisKahanOutcome,
    SuiteOutcome,
};
pub use experiments::{
    run_convergence_experiment, run_filter_stability_experiment, run_mnn_deformation_experiment,
    run_mnn_stability_experiment, ConvergenceRow, DeformationOutcome, FilterExperimentSetup,
    MnnExperimentSetup,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Everything the closed-form bounds consume. `threshold` is the spectrum
/// separation (alpha in difference mode, gamma in ratio mode), `delta` the
/// within-group response tolerance, and the counts come from the partition.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BoundInputs {
    pub epsilon: f64,
    pub threshold: f64,
    pub delta: f64,
    /// Lipschitz constant of the frequency response.
    pub lipschitz: f64,
    /// Integral Lipschitz constant sup |lambda hhat'(lambda)|.
    pub integral_lipschitz: f64,
    pub group_count: usize,
    pub singleton_count: usize,
}

impl BoundInputs {
    fn validate(&self, relative: bool) -> Result<()> {
        let fields = [
            ("epsilon", self.epsilon),
            ("threshold", self.threshold),
            ("delta", self.delta),
            ("lipschitz", self.lipschitz),
            ("integral_lipschitz", self.integral_lipschitz),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.singleton_count > self.group_count {
            return Err(Error::Config("singleton count exceeds group count".into()));
        }
        if self.epsilon >= self.threshold {
            let t = if relative { "gamma" } else { "alpha" };
            return Err(Error::Precondition(format!(
                "perturbation size {} must stay below the separation {t} = {}",
                self.epsilon, self.threshold
            )));
        }
        Ok(())
    }
}

/// Filter deviation cap under an absolute perturbation of norm epsilon:
/// pi N_s eps / (alpha - eps) + A_h eps + 2 (N - N_s) delta.
pub fn filter_bound_absolute(inp: &BoundInputs) -> Result<f64> {
    inp.validate(false)?;
    let multi = (inp.group_count - inp.singleton_count) as f64;
    Ok(std::f64::consts::PI * inp.singleton_count as f64 * inp.epsilon
        / (inp.threshold - inp.epsilon)
        + inp.lipschitz * inp.epsilon
        + 2.0 * multi * inp.delta)
}

/// Absolute bound with delta tied to eps as pi eps / (2 alpha - 2 eps),
/// which collapses to (pi N / (alpha - eps) + A_h) eps.
pub fn filter_bound_absolute_tied(inp: &BoundInputs) -> Result<f64> {
    inp.validate(false)?;
    Ok((std::f64::consts::PI * inp.group_count as f64 / (inp.threshold - inp.epsilon)
        + inp.lipschitz)
        * inp.epsilon)
}

/// Prescribed delta for the tied absolute bound.
pub fn tied_delta_absolute(epsilon: f64, alpha: f64) -> f64 {
    std::f64::consts::PI * epsilon / (2.0 * alpha - 2.0 * epsilon)
}

/// Filter deviation cap under a relative perturbation with |E| = epsilon:
/// pi M_s eps / (gamma - eps + gamma eps) + 2 B_h eps / (2 - eps)
/// + 2 (M - M_s) delta.
pub fn filter_bound_relative(inp: &BoundInputs) -> Result<f64> {
    inp.validate(true)?;
    let multi = (inp.group_count - inp.singleton_count) as f64;
    Ok(std::f64::consts::PI * inp.singleton_count as f64 * inp.epsilon
        / (inp.threshold - inp.epsilon + inp.threshold * inp.epsilon)
        + 2.0 * inp.integral_lipschitz * inp.epsilon / (2.0 - inp.epsilon)
        + 2.0 * multi * inp.delta)
}

/// Relative bound with delta tied as pi eps / (2 gamma - 2 eps + 2 gamma eps):
/// pi M eps / (gamma - eps + gamma eps) + 2 B_h eps / (2 - eps).
pub fn filter_bound_relative_tied(inp: &BoundInputs) -> Result<f64> {
    inp.validate(true)?;
    Ok(std::f64::consts::PI * inp.group_count as f64 * inp.epsilon
        / (inp.threshold - inp.epsilon + inp.threshold * inp.epsilon)
        + 2.0 * inp.integral_lipschitz * inp.epsilon / (2.0 - inp.epsilon))
}

/// Prescribed delta for the tied relative bound.
pub fn tied_delta_relative(epsilon: f64, gamma: f64) -> f64 {
    std::f64::consts::PI * epsilon / (2.0 * gamma - 2.0 * epsilon + 2.0 * gamma * epsilon)
}

/// Per-filter stability constant for the network bound under absolute
/// perturbations: pi N / alpha + A_h.
pub fn mnn_stability_constant_absolute(group_count: usize, alpha: f64, lipschitz: f64) -> f64 {
    std::f64::consts::PI * group_count as f64 / alpha + lipschitz
}

/// Per-filter stability constant under relative perturbations:
/// pi M / gamma + B_h.
pub fn mnn_stability_constant_relative(
    group_count: usize,
    gamma: f64,
    integral_lipschitz: f64,
) -> f64 {
    std::f64::consts::PI * group_count as f64 / gamma + integral_lipschitz
}

/// Network deviation cap: L F^(L-1) C_per eps.
pub fn mnn_bound(layers: usize, width: usize, c_per: f64, epsilon: f64) -> Result<f64> {
    if layers == 0 || width == 0 {
        return Err(Error::Config("network bound needs layers >= 1 and width >= 1".into()));
    }
    if !c_per.is_finite() || c_per < 0.0 || !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Config("c_per and epsilon must be finite and >= 0".into()));
    }
    Ok(layers as f64 * (width as f64).powi(layers as i32 - 1) * c_per * epsilon)
}

/// One perturbation trial compared against its bound. `theoretical_bound`
/// is absent for deformation trials, which have no closed-form cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub epsilon_nominal: f64,
    pub epsilon_measured: f64,
    pub empirical_deviation: f64,
    pub theoretical_bound: Option<f64>,
    pub holds: bool,
    /// True when the trial could not run under the theorem's precondition
    /// (epsilon at or beyond the separation threshold).
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportSummary {
    pub violation_count: usize,
    /// Largest empirical/bound ratio over completed trials with a bound.
    pub max_ratio: Option<f64>,
    /// Median empirical deviation per nominal epsilon, in input order.
    pub median_by_epsilon: Vec<(f64, f64)>,
    pub skipped_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityReport {
    pub kind: String,
    pub n: usize,
    pub trials: Vec<TrialRecord>,
    pub summary: ReportSummary,
}

impl StabilityReport {
    pub fn assemble(kind: impl Into<String>, n: usize, trials: Vec<TrialRecord>) -> Self {
        let mut violation_count = 0;
        let mut skipped_count = 0;
        let mut max_ratio: Option<f64> = None;
        let mut by_eps: Vec<(f64, Vec<f64>)> = Vec::new();
        for t in &trials {
            if t.skipped {
                skipped_count += 1;
                continue;
            }
            if !t.holds {
                violation_count += 1;
            }
            if let Some(bound) = t.theoretical_bound {
                if bound > 0.0 {
                    let r = t.empirical_deviation / bound;
                    max_ratio = Some(max_ratio.map_or(r, |m: f64| m.max(r)));
                }
            }
            match by_eps.iter_mut().find(|(e, _)| *e == t.epsilon_nominal) {
                Some((_, v)) => v.push(t.empirical_deviation),
                None => by_eps.push((t.epsilon_nominal, vec![t.empirical_deviation])),
            }
        }
        let median_by_epsilon = by_eps
            .into_iter()
            .map(|(e, mut v)| {
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let m = if v.is_empty() {
                    0.0
                } else if v.len() % 2 == 1 {
                    v[v.len() / 2]
                } else {
                    0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
                };
                (e, m)
            })
            .collect();
        StabilityReport {
            kind: kind.into(),
            n,
            trials,
            summary: ReportSummary {
                violation_count,
                max_ratio,
                median_by_epsilon,
                skipped_count,
            },
        }
    }

    /// Mean empirical deviation of completed trials at each epsilon.
    pub fn mean_by_epsilon(&self) -> Vec<(f64, f64)> {
        let mut acc: Vec<(f64, f64, usize)> = Vec::new();
        for t in &self.trials {
            if t.skipped {
                continue;
            }
            match acc.iter_mut().find(|(e, _, _)| *e == t.epsilon_nominal) {
                Some((_, s, c)) => {
                    *s += t.empirical_deviation;
                    *c += 1;
                }
                None => acc.push((t.epsilon_nominal, t.empirical_deviation, 1)),
            }
        }
        acc.into_iter().map(|(e, s, c)| (e, s / c as f64)).collect()
    }
}
