//! Perturbation experiments: apply a filter or network through an operator
//! and its perturbation, measure the output deviation relative to the input
//! norm, and compare against the closed-form bound computed from measured
//! constants.

use super::{
    filter_bound_absolute, filter_bound_relative, mnn_bound, mnn_stability_constant_absolute,
    mnn_stability_constant_relative, BoundInputs, StabilityReport, TrialRecord,
};
use crate::error::{Error, Result};
use crate::filters::{
    apply_filter, continuity_constants, verify_fdt_frt, ContinuityConstants, FilterCoefficients,
    LambdaRange, DEFAULT_GRID_DENSITY,
};
use crate::geometry::{
    deform, evaluate_signal, sample_manifold, DeformationSpec, ManifoldKind, SignalSpec,
    SignalVector,
};
use crate::graph::{
    build_graph, laplacian, perturb_absolute, perturb_relative, DenseOperator, PerturbationKind,
};
use crate::mnn::{forward, LabeledSample, MnnModel};
use crate::rng::{self, tags};
use crate::spectral::{
    eigendecompose, partition_spectrum, SpectralDecomposition, SpectrumPartition, ThresholdKind,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::sync::Arc;

/// Precomputed context for filter stability trials: the operator, its
/// decomposition and partition, and the filter's measured constants.
pub struct FilterExperimentSetup {
    pub operator: DenseOperator,
    pub dec: SpectralDecomposition,
    pub filter: FilterCoefficients,
    pub partition: SpectrumPartition,
    pub constants: ContinuityConstants,
    /// Worst within-group response spread over multi-eigenvalue groups.
    pub delta_measured: f64,
}

impl FilterExperimentSetup {
    /// Eigendecompose, partition at the given threshold, and measure the
    /// filter's continuity constants and group flatness. The filter must be
    /// non-amplifying over the covering range.
    pub fn prepare(
        operator: DenseOperator,
        filter: FilterCoefficients,
        threshold_kind: ThresholdKind,
        threshold: f64,
    ) -> Result<Self> {
        let dec = eigendecompose(&operator)?;
        let exclude_zero = threshold_kind == ThresholdKind::GammaRatio;
        let partition = partition_spectrum(&dec, threshold_kind, threshold, exclude_zero)?;
        let range = LambdaRange::covering(&dec)?;
        let constants = continuity_constants(&filter, range, DEFAULT_GRID_DENSITY)?;
        if constants.sup_abs_response > 1.0 + 1e-9 {
            return Err(Error::Precondition(format!(
                "filter amplifies (sup response {}); normalize it first",
                constants.sup_abs_response
            )));
        }
        let flatness = verify_fdt_frt(&filter, &partition, &dec, f64::INFINITY)?;
        let delta_measured = flatness.measured_delta(&partition);
        Ok(FilterExperimentSetup {
            operator,
            dec,
            filter,
            partition,
            constants,
            delta_measured,
        })
    }

    fn bound_inputs(&self, epsilon: f64) -> BoundInputs {
        BoundInputs {
            epsilon,
            threshold: self.partition.threshold,
            delta: self.delta_measured,
            lipschitz: self.constants.lipschitz,
            integral_lipschitz: self.constants.integral_lipschitz,
            group_count: self.partition.group_count(),
            singleton_count: self.partition.singleton_count(),
        }
    }
}

/// Random signal with unit graph-space norm.
fn unit_random_signal(n: usize, rng: &mut impl Rng) -> Result<SignalVector> {
    loop {
        let v = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = (v.norm_squared() / n as f64).sqrt();
        if norm > 1e-9 {
            return SignalVector::new(v / norm);
        }
    }
}

/// Graph-space norm of the difference of two equally shaped signals.
fn deviation(a: &SignalVector, b: &SignalVector) -> f64 {
    ((a.values() - b.values()).norm_squared() / a.n() as f64).sqrt()
}

/// Run perturbation trials for one filter: per trial, perturb the operator,
/// re-decompose, push the same unit random signal through both, and compare
/// the deviation against the bound computed from the measured constants.
/// Trials whose epsilon reaches the separation threshold are skipped and
/// flagged. Trials run in parallel with per-trial seeds.
pub fn run_filter_stability_experiment(
    setup: &FilterExperimentSetup,
    kind: PerturbationKind,
    epsilons: &[f64],
    trials_per_eps: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if matches!(kind, PerturbationKind::Deformation) {
        return Err(Error::Config(
            "deformation trials go through the network deformation experiment".into(),
        ));
    }
    let n = setup.operator.n();
    let jobs: Vec<(usize, f64, usize)> = epsilons
        .iter()
        .enumerate()
        .flat_map(|(ei, &eps)| (0..trials_per_eps).map(move |t| (ei, eps, t)))
        .collect();
    let trials: Vec<Result<TrialRecord>> = jobs
        .par_iter()
        .map(|&(ei, eps, t)| {
            let trial = ei * trials_per_eps + t;
            let mut rng = rng::stream(seed, &[tags::TRIAL, ei as u64, t as u64]);
            let perturb_seed: u64 = rng.gen();
            if eps >= setup.partition.threshold {
                return Ok(TrialRecord {
                    trial,
                    seed: perturb_seed,
                    epsilon_nominal: eps,
                    epsilon_measured: 0.0,
                    empirical_deviation: 0.0,
                    theoretical_bound: None,
                    holds: true,
                    skipped: true,
                });
            }
            let outcome = match kind {
                PerturbationKind::Absolute => perturb_absolute(&setup.operator, eps, perturb_seed)?,
                PerturbationKind::Relative => perturb_relative(&setup.operator, eps, perturb_seed)?,
                PerturbationKind::Deformation => unreachable!(),
            };
            let perturbed_dec = eigendecompose(&outcome.perturbed)?;
            let signal = unit_random_signal(n, &mut rng)?;
            let base_out = apply_filter(&setup.filter, &setup.dec, &signal)?;
            let pert_out = apply_filter(&setup.filter, &perturbed_dec, &signal)?;
            let empirical = deviation(&base_out, &pert_out) / signal.graph_norm();
            let inputs = setup.bound_inputs(outcome.epsilon_measured);
            let bound = match kind {
                PerturbationKind::Absolute => filter_bound_absolute(&inputs)?,
                PerturbationKind::Relative => filter_bound_relative(&inputs)?,
                PerturbationKind::Deformation => unreachable!(),
            };
            Ok(TrialRecord {
                trial,
                seed: perturb_seed,
                epsilon_nominal: eps,
                epsilon_measured: outcome.epsilon_measured,
                empirical_deviation: empirical,
                theoretical_bound: Some(bound),
                holds: empirical <= bound,
                skipped: false,
            })
        })
        .collect();
    let mut records = Vec::with_capacity(trials.len());
    for t in trials {
        records.push(t?);
    }
    records.sort_by_key(|r| r.trial);
    let kind_name = match kind {
        PerturbationKind::Absolute => "filter-absolute",
        PerturbationKind::Relative => "filter-relative",
        PerturbationKind::Deformation => unreachable!(),
    };
    Ok(StabilityReport::assemble(kind_name, n, records))
}

/// Context for network stability trials under operator perturbations:
/// a single-input single-output network over one operator, with the
/// per-filter stability constant derived from measured quantities.
pub struct MnnExperimentSetup {
    pub operator: DenseOperator,
    pub dec: Arc<SpectralDecomposition>,
    pub model: MnnModel,
    pub partition: SpectrumPartition,
    pub threshold_kind: ThresholdKind,
    /// pi N / alpha + max A_h (absolute) or pi M / gamma + max B_h (relative).
    pub c_per: f64,
    /// max(alpha, 2) or max(|gamma/(1-gamma)|, 2): trials must stay well
    /// below this headroom (epsilon at most a tenth of it).
    pub headroom: f64,
    /// Hidden width F of the (1, F, 1) network, the F in L F^(L-1).
    pub width: usize,
}

impl MnnExperimentSetup {
    pub fn prepare(
        operator: DenseOperator,
        model: MnnModel,
        threshold_kind: ThresholdKind,
        threshold: f64,
    ) -> Result<Self> {
        if model.config.input_features() != 1 || model.config.output_features() != 1 {
            return Err(Error::Contract(
                "operator-perturbation trials use a single-input single-output network".into(),
            ));
        }
        let dec = eigendecompose(&operator)?;
        let exclude_zero = threshold_kind == ThresholdKind::GammaRatio;
        let partition = partition_spectrum(&dec, threshold_kind, threshold, exclude_zero)?;
        let range = LambdaRange::covering(&dec)?;
        let mut max_lipschitz: f64 = 0.0;
        let mut max_integral: f64 = 0.0;
        for bank in model.layers() {
            for p in 0..bank.out_features() {
                for q in 0..bank.in_features() {
                    let c = continuity_constants(&bank.filter(p, q), range, DEFAULT_GRID_DENSITY)?;
                    if c.sup_abs_response > 1.0 + 1e-9 {
                        return Err(Error::Precondition(format!(
                            "filter ({p},{q}) amplifies (sup {}); normalize the bank first",
                            c.sup_abs_response
                        )));
                    }
                    max_lipschitz = max_lipschitz.max(c.lipschitz);
                    max_integral = max_integral.max(c.integral_lipschitz);
                }
            }
        }
        let (c_per, headroom) = match threshold_kind {
            ThresholdKind::AlphaDifference => (
                mnn_stability_constant_absolute(partition.group_count(), threshold, max_lipschitz),
                threshold.max(2.0),
            ),
            ThresholdKind::GammaRatio => (
                mnn_stability_constant_relative(partition.group_count(), threshold, max_integral),
                (threshold / (1.0 - threshold)).abs().max(2.0),
            ),
        };
        let width = model.config.layer_features[1..model.config.layer_features.len() - 1]
            .iter()
            .copied()
            .max()
            .unwrap_or(1);
        Ok(MnnExperimentSetup {
            operator,
            dec: Arc::new(dec),
            model,
            partition,
            threshold_kind,
            c_per,
            headroom,
            width,
        })
    }
}

/// Pre-readout final-feature deviation of the network between the base and
/// perturbed operators, per trial, against L F^{L-1} C_per eps. Trials with
/// epsilon above a tenth of the headroom are skipped and flagged.
pub fn run_mnn_stability_experiment(
    setup: &MnnExperimentSetup,
    kind: PerturbationKind,
    epsilons: &[f64],
    trials_per_eps: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if matches!(kind, PerturbationKind::Deformation) {
        return Err(Error::Config(
            "deformation trials go through run_mnn_deformation_experiment".into(),
        ));
    }
    match (kind, setup.threshold_kind) {
        (PerturbationKind::Absolute, ThresholdKind::AlphaDifference)
        | (PerturbationKind::Relative, ThresholdKind::GammaRatio) => {}
        _ => {
            return Err(Error::Contract(
                "perturbation kind does not match the setup's threshold kind".into(),
            ))
        }
    }
    let n = setup.operator.n();
    let layers = setup.model.config.layer_count();
    let jobs: Vec<(usize, f64, usize)> = epsilons
        .iter()
        .enumerate()
        .flat_map(|(ei, &eps)| (0..trials_per_eps).map(move |t| (ei, eps, t)))
        .collect();
    let trials: Vec<Result<TrialRecord>> = jobs
        .par_iter()
        .map(|&(ei, eps, t)| {
            let trial = ei * trials_per_eps + t;
            let mut rng = rng::stream(seed, &[tags::TRIAL, ei as u64, t as u64]);
            let perturb_seed: u64 = rng.gen();
            if eps > setup.headroom / 10.0 || eps >= setup.partition.threshold {
                return Ok(TrialRecord {
                    trial,
                    seed: perturb_seed,
                    epsilon_nominal: eps,
                    epsilon_measured: 0.0,
                    empirical_deviation: 0.0,
                    theoretical_bound: None,
                    holds: true,
                    skipped: true,
                });
            }
            let outcome = match kind {
                PerturbationKind::Absolute => perturb_absolute(&setup.operator, eps, perturb_seed)?,
                PerturbationKind::Relative => perturb_relative(&setup.operator, eps, perturb_seed)?,
                PerturbationKind::Deformation => unreachable!(),
            };
            let perturbed_dec = eigendecompose(&outcome.perturbed)?;
            let signal = unit_random_signal(n, &mut rng)?;
            let base_out = forward(&setup.model, &setup.dec, &signal)?;
            let pert_out = forward(&setup.model, &perturbed_dec, &signal)?;
            let base_last = base_out.layer_features.last().unwrap();
            let pert_last = pert_out.layer_features.last().unwrap();
            let empirical = ((base_last - pert_last).norm_squared() / n as f64).sqrt()
                / signal.graph_norm();
            let bound = mnn_bound(layers, setup.width, setup.c_per, outcome.epsilon_measured)?;
            Ok(TrialRecord {
                trial,
                seed: perturb_seed,
                epsilon_nominal: eps,
                epsilon_measured: outcome.epsilon_measured,
                empirical_deviation: empirical,
                theoretical_bound: Some(bound),
                holds: empirical <= bound,
                skipped: false,
            })
        })
        .collect();
    let mut records = Vec::with_capacity(trials.len());
    for t in trials {
        records.push(t?);
    }
    records.sort_by_key(|r| r.trial);
    let kind_name = match kind {
        PerturbationKind::Absolute => "mnn-absolute",
        PerturbationKind::Relative => "mnn-relative",
        PerturbationKind::Deformation => unreachable!(),
    };
    Ok(StabilityReport::assemble(kind_name, n, records))
}

#[derive(Debug, Clone)]
pub struct DeformationOutcome {
    pub report: StabilityReport,
    pub error_rate_original: f64,
    /// (epsilon, error rate on deformed clouds).
    pub error_rates_deformed: Vec<(f64, f64)>,
}

/// Coordinate-deformation protocol: deform each test cloud, rebuild its
/// graph and features, push both versions through the network, and record
/// the relative final-feature deviation plus classification error rates.
/// No closed-form bound applies, so trials carry none.
pub fn run_mnn_deformation_experiment(
    model: &MnnModel,
    samples: &[LabeledSample],
    epsilons: &[f64],
    clouds_per_eps: usize,
    alpha_kernel: f64,
    seed: u64,
) -> Result<DeformationOutcome> {
    if samples.is_empty() {
        return Err(Error::Precondition("need at least one labeled cloud".into()));
    }
    let used = clouds_per_eps.min(samples.len());
    let n = samples[0].cloud.n();

    let original: Vec<Result<(f64, bool)>> = samples[..used]
        .par_iter()
        .map(|s| {
            let out = forward(model, &s.sample.dec, &s.sample.features)?;
            Ok((out.logit, (out.logit > 0.0) == s.sample.label))
        })
        .collect();
    let mut correct_original = 0usize;
    for o in &original {
        if o.as_ref().map_err(clone_err)?.1 {
            correct_original += 1;
        }
    }

    let jobs: Vec<(usize, f64, usize)> = epsilons
        .iter()
        .enumerate()
        .flat_map(|(ei, &eps)| (0..used).map(move |c| (ei, eps, c)))
        .collect();
    let outcomes: Vec<Result<(TrialRecord, usize, bool)>> = jobs
        .par_iter()
        .map(|&(ei, eps, c)| {
            let trial = ei * used + c;
            let mut rng = rng::stream(seed, &[tags::TRIAL, ei as u64, c as u64]);
            let deform_seed: u64 = rng.gen();
            let labeled = &samples[c];
            let deformed_cloud = deform(&labeled.cloud, &DeformationSpec::gaussian(eps, deform_seed))?;
            let lap = laplacian(&build_graph(&deformed_cloud, alpha_kernel, None, None)?)?;
            let dec = eigendecompose(&lap)?;
            let features = evaluate_signal(&deformed_cloud, &SignalSpec::Coordinates)?;
            let base_out = forward(model, &labeled.sample.dec, &labeled.sample.features)?;
            let def_out = forward(model, &dec, &features)?;
            let base_last = base_out.layer_features.last().unwrap();
            let def_last = def_out.layer_features.last().unwrap();
            let input_norm = labeled.sample.features.graph_norm();
            let empirical = ((base_last - def_last).norm_squared() / base_last.nrows() as f64)
                .sqrt()
                / input_norm;
            let correct = (def_out.logit > 0.0) == labeled.sample.label;
            Ok((
                TrialRecord {
                    trial,
                    seed: deform_seed,
                    epsilon_nominal: eps,
                    epsilon_measured: eps,
                    empirical_deviation: empirical,
                    theoretical_bound: None,
                    holds: true,
                    skipped: false,
                },
                ei,
                correct,
            ))
        })
        .collect();
    let mut records = Vec::with_capacity(outcomes.len());
    let mut correct_by_eps = vec![0usize; epsilons.len()];
    for o in outcomes {
        let (record, ei, correct) = o?;
        if correct {
            correct_by_eps[ei] += 1;
        }
        records.push(record);
    }
    records.sort_by_key(|r| r.trial);
    let error_rates_deformed = epsilons
        .iter()
        .zip(&correct_by_eps)
        .map(|(&e, &c)| (e, 1.0 - c as f64 / used as f64))
        .collect();
    Ok(DeformationOutcome {
        report: StabilityReport::assemble("mnn-deformation", n, records),
        error_rate_original: 1.0 - correct_original as f64 / used as f64,
        error_rates_deformed,
    })
}

fn clone_err(e: &Error) -> Error {
    Error::Invariant(format!("parallel trial failed: {e}"))
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub discrepancy: f64,
}

/// Self-convergence of the filter output as the sampling gets finer: each
/// cloud's output is compared against the largest cloud's output carried
/// over by nearest-point transfer. The largest entry is its own reference
/// and reads zero.
pub fn run_convergence_experiment(
    kind: ManifoldKind,
    n_list: &[usize],
    filter: &FilterCoefficients,
    signal: &SignalSpec,
    alpha_kernel: f64,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if n_list.len() < 3 {
        return Err(Error::Precondition("need at least 3 sample sizes".into()));
    }
    let mut sizes = n_list.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes[0] < 2 {
        return Err(Error::Config("sample sizes must be at least 2".into()));
    }
    let reference_n = *sizes.last().unwrap();

    let outputs: Vec<Result<(usize, crate::geometry::PointCloud, SignalVector)>> = sizes
        .par_iter()
        .map(|&n| {
            let mut rng = rng::stream(seed, &[tags::TRIAL, n as u64]);
            let cloud = sample_manifold(kind, n, rng.gen())?;
            let lap = laplacian(&build_graph(&cloud, alpha_kernel, None, None)?)?;
            let dec = eigendecompose(&lap)?;
            let x = evaluate_signal(&cloud, signal)?;
            let z = apply_filter(filter, &dec, &x)?;
            Ok((n, cloud, z))
        })
        .collect();
    let mut resolved = Vec::with_capacity(outputs.len());
    for o in outputs {
        resolved.push(o?);
    }
    let (_, ref_cloud, ref_output) = resolved
        .iter()
        .find(|(n, _, _)| *n == reference_n)
        .expect("reference entry exists");

    let mut rows = Vec::with_capacity(resolved.len());
    for (n, cloud, z) in &resolved {
        let mut transferred = DMatrix::zeros(cloud.n(), z.feature_count());
        for i in 0..cloud.n() {
            let p = cloud.points().row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for j in 0..ref_cloud.n() {
                let mut d = 0.0;
                for k in 0..cloud.ambient_dim() {
                    let diff = p[k] - ref_cloud.points()[(j, k)];
                    d += diff * diff;
                }
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            for f in 0..z.feature_count() {
                transferred[(i, f)] = ref_output.values()[(best, f)];
            }
        }
        let discrepancy =
            ((z.values() - &transferred).norm_squared() / cloud.n() as f64).sqrt();
        rows.push(ConvergenceRow {
            n: *n,
            discrepancy,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::normalize;
    use crate::mnn::{build_sphere_torus_dataset, init_model, DatasetConfig, MnnConfig, Nonlinearity};

    fn sphere_laplacian(n: usize, seed: u64) -> DenseOperator {
        let cloud = sample_manifold(ManifoldKind::Sphere2, n, seed).unwrap();
        laplacian(&build_graph(&cloud, 1.0, None, None).unwrap()).unwrap()
    }

    #[test]
    fn identity_filter_has_zero_deviation() {
        let lap = sphere_laplacian(24, 1);
        let h = FilterCoefficients::new(vec![1.0]).unwrap();
        let setup =
            FilterExperimentSetup::prepare(lap, h, ThresholdKind::AlphaDifference, 0.05).unwrap();
        let report = run_filter_stability_experiment(
            &setup,
            PerturbationKind::Absolute,
            &[0.005],
            5,
            3,
        )
        .unwrap();
        assert_eq!(report.summary.violation_count, 0);
        for t in &report.trials {
            assert!(t.empirical_deviation < 1e-9, "deviation {}", t.empirical_deviation);
        }
    }

    #[test]
    fn zero_epsilon_trial_holds_with_zero_bound() {
        // All-singleton partition: the within-group term vanishes and the
        // bound is exactly zero at epsilon zero.
        let evs: Vec<f64> = (0..12).map(|i| 0.5 + i as f64).collect();
        let lap = DenseOperator::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_vec(evs)),
            crate::graph::OperatorKind::GenericSymmetric,
            None,
        )
        .unwrap();
        let h = normalize(
            &FilterCoefficients::new(vec![0.4, 0.4]).unwrap(),
            LambdaRange::new(0.0, 13.0).unwrap(),
            500,
        )
        .unwrap();
        let setup =
            FilterExperimentSetup::prepare(lap, h, ThresholdKind::AlphaDifference, 0.5).unwrap();
        assert_eq!(setup.partition.singleton_count(), setup.partition.group_count());
        let report =
            run_filter_stability_experiment(&setup, PerturbationKind::Absolute, &[0.0], 2, 5)
                .unwrap();
        for t in &report.trials {
            assert!(!t.skipped);
            assert_eq!(t.empirical_deviation, 0.0);
            assert_eq!(t.theoretical_bound, Some(0.0));
            assert!(t.holds);
        }
    }

    #[test]
    fn amplifying_filter_rejected() {
        let lap = sphere_laplacian(16, 3);
        let h = FilterCoefficients::new(vec![3.0]).unwrap();
        assert!(matches!(
            FilterExperimentSetup::prepare(lap, h, ThresholdKind::AlphaDifference, 0.05),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn epsilon_beyond_threshold_is_skipped() {
        let lap = sphere_laplacian(16, 4);
        let h = FilterCoefficients::new(vec![1.0]).unwrap();
        let setup =
            FilterExperimentSetup::prepare(lap, h, ThresholdKind::AlphaDifference, 0.01).unwrap();
        let report =
            run_filter_stability_experiment(&setup, PerturbationKind::Absolute, &[0.5], 3, 6)
                .unwrap();
        assert_eq!(report.summary.skipped_count, 3);
        assert_eq!(report.summary.violation_count, 0);
    }

    #[test]
    fn experiment_is_deterministic() {
        let lap = sphere_laplacian(18, 5);
        let h = normalize(
            &FilterCoefficients::new(vec![0.5, 0.3]).unwrap(),
            LambdaRange::new(0.0, 1.0).unwrap(),
            500,
        )
        .unwrap();
        let setup =
            FilterExperimentSetup::prepare(lap, h, ThresholdKind::AlphaDifference, 0.02).unwrap();
        let a = run_filter_stability_experiment(
            &setup,
            PerturbationKind::Relative,
            &[0.001, 0.002],
            4,
            7,
        )
        .unwrap();
        let b = run_filter_stability_experiment(
            &setup,
            PerturbationKind::Relative,
            &[0.001, 0.002],
            4,
            7,
        )
        .unwrap();
        for (x, y) in a.trials.iter().zip(&b.trials) {
            assert_eq!(x.empirical_deviation, y.empirical_deviation);
            assert_eq!(x.theoretical_bound, y.theoretical_bound);
        }
    }

    #[test]
    fn mnn_zero_epsilon_has_zero_deviation() {
        let lap = sphere_laplacian(20, 6);
        let config = MnnConfig::new(vec![1, 2, 1], 3, Nonlinearity::Relu).unwrap();
        let mut model = init_model(&config, 4).unwrap();
        normalize_model(&mut model);
        let setup =
            MnnExperimentSetup::prepare(lap, model, ThresholdKind::AlphaDifference, 0.02).unwrap();
        let report =
            run_mnn_stability_experiment(&setup, PerturbationKind::Absolute, &[0.0], 3, 8)
                .unwrap();
        for t in &report.trials {
            assert_eq!(t.empirical_deviation, 0.0);
            assert!(t.holds);
        }
    }

    fn normalize_model(model: &mut crate::mnn::MnnModel) {
        let range = LambdaRange::new(0.0, 1.0).unwrap();
        for l in 0..model.layers().len() {
            let bank = &model.layers()[l];
            let mut filters = Vec::new();
            for p in 0..bank.out_features() {
                for q in 0..bank.in_features() {
                    let f = bank.filter(p, q);
                    let normalized = normalize(&f, range, 500)
                        .unwrap_or(f);
                    filters.push((p, q, normalized));
                }
            }
            for (p, q, f) in filters {
                model.layers_mut()[l].set_filter(p, q, &f).unwrap();
            }
        }
    }

    #[test]
    fn deformation_experiment_reports_trends() {
        let dataset = build_sphere_torus_dataset(&DatasetConfig {
            clouds: 6,
            points_per_cloud: 30,
            ..DatasetConfig::default()
        })
        .unwrap();
        let config = MnnConfig::new(vec![3, 4, 2], 3, Nonlinearity::Relu).unwrap();
        let model = init_model(&config, 9).unwrap();
        let out = run_mnn_deformation_experiment(&model, &dataset, &[0.0, 0.3], 6, 1.0, 11)
            .unwrap();
        assert_eq!(out.error_rates_deformed.len(), 2);
        let means = out.report.mean_by_epsilon();
        let zero = means.iter().find(|(e, _)| *e == 0.0).unwrap().1;
        let big = means.iter().find(|(e, _)| *e == 0.3).unwrap().1;
        assert!(zero < 1e-9, "zero-epsilon deviation {zero}");
        assert!(big > zero);
        for t in &out.report.trials {
            assert!(t.theoretical_bound.is_none());
        }
    }

    #[test]
    fn convergence_zero_for_constant_signal_identity_filter() {
        let rows = run_convergence_experiment(
            ManifoldKind::Sphere2,
            &[20, 40, 80],
            &FilterCoefficients::new(vec![1.0]).unwrap(),
            &SignalSpec::GaussianBump {
                center: vec![0.0, 0.0, 0.0],
                width: 1e6,
            },
            1.0,
            3,
        )
        .unwrap();
        for r in &rows {
            assert!(
                r.discrepancy < 1e-9,
                "n={} discrepancy {}",
                r.n,
                r.discrepancy
            );
        }
    }

    #[test]
    fn convergence_reference_row_is_zero() {
        let rows = run_convergence_experiment(
            ManifoldKind::Sphere2,
            &[20, 40, 80],
            &FilterCoefficients::new(vec![0.0, 1.0]).unwrap(),
            &SignalSpec::FirstHarmonic,
            1.0,
            5,
        )
        .unwrap();
        assert_eq!(rows.last().unwrap().n, 80);
        assert_eq!(rows.last().unwrap().discrepancy, 0.0);
        assert!(rows[0].discrepancy > 0.0);
    }

    #[test]
    fn convergence_needs_three_sizes() {
        assert!(matches!(
            run_convergence_experiment(
                ManifoldKind::Sphere2,
                &[20, 40],
                &FilterCoefficients::new(vec![1.0]).unwrap(),
                &SignalSpec::FirstHarmonic,
                1.0,
                0,
            ),
            Err(Error::Precondition(_))
        ));
    }
}
