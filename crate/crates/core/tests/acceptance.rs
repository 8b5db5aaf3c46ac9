//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use mnnlab_core::filters::{design_filter_on, FilterCoefficients, LambdaRange};
use mnnlab_core::geometry::{sample_manifold, ManifoldKind, SignalSpec};
use mnnlab_core::graph::{build_graph, laplacian, DenseOperator, PerturbationKind};
use mnnlab_core::mnn::{
    build_sphere_torus_dataset, init_model, train, DatasetConfig, MnnConfig, MnnModel,
    Nonlinearity, TrainConfig,
};
use mnnlab_core::spectral::{eigendecompose, partition_spectrum, ThresholdKind};
use mnnlab_core::stability::{
    davis_kahan_suite, filter_bound_absolute_tied, filter_bound_relative_tied,
    gradient_check_suite, mnn_bound, path_equivalence_suite, relative_eigenvalue_suite,
    run_convergence_experiment, run_filter_stability_experiment, run_mnn_deformation_experiment,
    run_mnn_stability_experiment, weyl_suite, BoundInputs, FilterExperimentSetup,
    MnnExperimentSetup,
};

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

fn sphere_operator(n: usize, seed: u64) -> DenseOperator {
    let cloud = sample_manifold(ManifoldKind::Sphere2, n, seed).unwrap();
    laplacian(&build_graph(&cloud, 1.0, None, None).unwrap()).unwrap()
}

/// Criterion 1: closed-form bound evaluators match hand calculation.
#[test]
fn criterion_1_bound_evaluators() {
    let inputs = BoundInputs {
        epsilon: 0.01,
        threshold: 0.5,
        delta: 0.0,
        lipschitz: 1.0,
        integral_lipschitz: 1.0,
        group_count: 3,
        singleton_count: 3,
    };
    let absolute = filter_bound_absolute_tied(&inputs).unwrap();
    let relative = filter_bound_relative_tied(&inputs).unwrap();
    let network = mnn_bound(2, 4, 5.0, 0.01).unwrap();
    let pass = (absolute - 0.20234).abs() <= 1e-4
        && (relative - 0.20045).abs() <= 1e-4
        && network == 0.4;
    report(
        "1 (bound evaluators)",
        pass,
        &format!("absolute {absolute:.6}, relative {relative:.6}, network {network}"),
    );
}

/// Criterion 2: Weyl, relative-eigenvalue and Davis-Kahan inequalities hold
/// in every one of 100 random trials at n = 50.
#[test]
fn criterion_2_lemma_suite() {
    let weyl = weyl_suite(50, 100, 11).unwrap();
    let relative = relative_eigenvalue_suite(50, 100, 12).unwrap();
    let dk = davis_kahan_suite(50, 100, 13).unwrap();
    let pass = weyl.violations == 0 && relative.violations == 0 && dk.violations == 0;
    report(
        "2 (eigenvalue lemmas)",
        pass,
        &format!(
            "weyl {}/{} ok, relative {}/{} ok, davis-kahan {}/{} ok",
            weyl.trials - weyl.violations,
            weyl.trials,
            relative.trials - relative.violations,
            relative.trials,
            dk.trials - dk.violations,
            dk.trials
        ),
    );
}

/// Criterion 3: spectral filter application equals the independent
/// matrix-exponential oracle within 1e-8 relative error, 20 cases.
#[test]
fn criterion_3_path_equivalence() {
    let out = path_equivalence_suite(20, 60, 21).unwrap();
    report(
        "3 (filter path equivalence)",
        out.violations == 0,
        &format!(
            "{} of {} cases within 1e-8 (worst ratio {:.3e})",
            out.trials - out.violations,
            out.trials,
            out.worst_ratio
        ),
    );
}

/// Criterion 4: designed difference-threshold filter under absolute
/// perturbations and ratio-threshold filter under commuting relative
/// perturbations, 100 trials per epsilon, zero bound violations.
#[test]
fn criterion_4_filter_stability_soundness() {
    let operator = sphere_operator(60, 42);
    let dec = eigendecompose(&operator).unwrap();
    let targets = [1.0, 0.8, 0.3];

    let alpha = 0.01;
    let part = partition_spectrum(&dec, ThresholdKind::AlphaDifference, alpha, false).unwrap();
    let designed =
        design_filter_on(dec.eigenvalues().as_slice(), &part, &targets, 5).unwrap();
    let setup = FilterExperimentSetup::prepare(
        operator.clone(),
        designed.filter,
        ThresholdKind::AlphaDifference,
        alpha,
    )
    .unwrap();
    let eps = [alpha / 100.0, alpha / 20.0, alpha / 10.0];
    let absolute =
        run_filter_stability_experiment(&setup, PerturbationKind::Absolute, &eps, 100, 1).unwrap();

    let gamma = 0.1;
    let part = partition_spectrum(&dec, ThresholdKind::GammaRatio, gamma, true).unwrap();
    let designed =
        design_filter_on(dec.eigenvalues().as_slice(), &part, &targets, 5).unwrap();
    let setup = FilterExperimentSetup::prepare(
        operator,
        designed.filter,
        ThresholdKind::GammaRatio,
        gamma,
    )
    .unwrap();
    let eps = [gamma / 100.0, gamma / 20.0, gamma / 10.0];
    let relative =
        run_filter_stability_experiment(&setup, PerturbationKind::Relative, &eps, 100, 2).unwrap();

    let pass = absolute.summary.violation_count == 0
        && absolute.summary.skipped_count == 0
        && relative.summary.violation_count == 0
        && relative.summary.skipped_count == 0;
    report(
        "4 (filter stability soundness)",
        pass,
        &format!(
            "absolute: 0 violations in {} trials (max ratio {:.4}); relative: 0 in {} (max ratio {:.4})",
            absolute.trials.len(),
            absolute.summary.max_ratio.unwrap_or(0.0),
            relative.trials.len(),
            relative.summary.max_ratio.unwrap_or(0.0)
        ),
    );
}

/// Criterion 5: two-layer (1, 4, 1) network with normalized filters under
/// absolute perturbations, 50 trials per epsilon, zero violations of the
/// layered bound.
#[test]
fn criterion_5_mnn_stability() {
    let operator = sphere_operator(60, 42);
    let dec = eigendecompose(&operator).unwrap();
    let config = MnnConfig::new(vec![1, 4, 1], 5, Nonlinearity::Relu).unwrap();
    let mut model = init_model(&config, 3).unwrap();
    normalize_filters(&mut model, LambdaRange::covering(&dec).unwrap());
    let alpha = 0.01;
    let setup =
        MnnExperimentSetup::prepare(operator, model, ThresholdKind::AlphaDifference, alpha)
            .unwrap();
    let report_out = run_mnn_stability_experiment(
        &setup,
        PerturbationKind::Absolute,
        &[0.0001, 0.0005, 0.001],
        50,
        4,
    )
    .unwrap();
    let pass =
        report_out.summary.violation_count == 0 && report_out.summary.skipped_count == 0;
    report(
        "5 (network stability)",
        pass,
        &format!(
            "0 violations in {} trials, c_per {:.1}, max ratio {:.2e}",
            report_out.trials.len(),
            setup.c_per,
            report_out.summary.max_ratio.unwrap_or(0.0)
        ),
    );
}

fn normalize_filters(model: &mut MnnModel, range: LambdaRange) {
    for l in 0..model.layers().len() {
        let bank = &model.layers()[l];
        let mut updates = Vec::new();
        for p in 0..bank.out_features() {
            for q in 0..bank.in_features() {
                if let Ok(f) = mnnlab_core::filters::normalize(&bank.filter(p, q), range, 2000) {
                    updates.push((p, q, f));
                }
            }
        }
        for (p, q, f) in updates {
            model.layers_mut()[l].set_filter(p, q, &f).unwrap();
        }
    }
}

/// Criterion 6: analytic gradients match central finite differences within
/// 1e-4 relative error for every parameter, 3 seeds.
#[test]
fn criterion_6_gradient_check() {
    let out = gradient_check_suite(&[1, 2, 3]).unwrap();
    report(
        "6 (gradient check)",
        out.violations == 0,
        &format!(
            "{} seeds, 0 of all parameters out of tolerance (worst ratio {:.3e})",
            out.trials, out.worst_ratio
        ),
    );
}

/// Criterion 7: n = 1000 sphere graph exhibits a first nonzero eigenvalue
/// cluster of multiplicity 3 whose volume-scaled mean is within 25% of the
/// analytic value 2.
#[test]
fn criterion_7_sphere_spectrum() {
    let operator = sphere_operator(1000, 7);
    let dec = eigendecompose(&operator).unwrap();
    let part = partition_spectrum(&dec, ThresholdKind::AlphaDifference, 0.02, false).unwrap();
    // Group 0 is the zero eigenvalue; group 1 the first nonzero cluster.
    let cluster = &part.groups[1];
    let mean: f64 = cluster
        .indices()
        .map(|i| dec.eigenvalues()[i])
        .sum::<f64>()
        / cluster.len() as f64;
    let scaled = mean * ManifoldKind::Sphere2.volume().unwrap();
    let pass = part.groups[0].is_singleton()
        && cluster.len() == 3
        && (scaled - 2.0).abs() <= 0.5;
    report(
        "7 (sphere spectrum cluster)",
        pass,
        &format!(
            "cluster multiplicity {}, scaled mean {scaled:.4} vs analytic 2",
            cluster.len()
        ),
    );
}

/// Criterion 8: train regularized and unregularized two-layer networks with
/// the stated hyperparameters on spheres-vs-tori; under coordinate
/// deformations the mean output deviation is nondecreasing in epsilon and
/// the regularized network deviates no more than the unregularized one at
/// every epsilon, averaged over 5 seeds.
#[test]
fn criterion_8_deformation_trend() {
    let epsilons = [0.2, 0.4, 0.6, 0.8];
    let seeds: Vec<u64> = (1..=5).collect();
    let mut unreg_means = vec![0.0f64; epsilons.len()];
    let mut reg_means = vec![0.0f64; epsilons.len()];
    for &seed in &seeds {
        let train_set = build_sphere_torus_dataset(&DatasetConfig {
            clouds: 200,
            points_per_cloud: 300,
            alpha_kernel: 1.0,
            scale_jitter: (0.9, 1.1),
            seed,
        })
        .unwrap();
        let samples: Vec<_> = train_set.iter().map(|l| l.sample.clone()).collect();
        drop(train_set);
        let test_set = build_sphere_torus_dataset(&DatasetConfig {
            clouds: 60,
            points_per_cloud: 300,
            alpha_kernel: 1.0,
            scale_jitter: (0.9, 1.1),
            seed: seed + 1000,
        })
        .unwrap();
        let config = MnnConfig::new(vec![3, 64, 32], 5, Nonlinearity::Relu).unwrap();
        let model = init_model(&config, seed).unwrap();
        for (regularized, means) in [(false, &mut unreg_means), (true, &mut reg_means)] {
            let cfg = TrainConfig {
                learning_rate: 0.005,
                adam_beta1: 0.9,
                adam_beta2: 0.999,
                batch_size: 10,
                epochs: 40,
                regularizer_weight: if regularized { 1.0 } else { 0.0 },
                lipschitz_target: 1.0,
                integral_lipschitz_target: 0.3,
                seed,
            };
            let outcome = train(&model, &samples, &cfg).unwrap();
            let deformation = run_mnn_deformation_experiment(
                &outcome.model,
                &test_set,
                &epsilons,
                test_set.len(),
                1.0,
                seed + 5000,
            )
            .unwrap();
            for (i, &eps) in epsilons.iter().enumerate() {
                let mean = deformation
                    .report
                    .mean_by_epsilon()
                    .iter()
                    .find(|(e, _)| *e == eps)
                    .map(|(_, m)| *m)
                    .unwrap();
                means[i] += mean / seeds.len() as f64;
            }
        }
    }
    let nondecreasing = |m: &[f64]| m.windows(2).all(|w| w[1] >= w[0]);
    let trend_ok = nondecreasing(&unreg_means) && nondecreasing(&reg_means);
    let regularized_ok = reg_means.iter().zip(&unreg_means).all(|(r, u)| r <= u);
    report(
        "8 (deformation trend)",
        trend_ok && regularized_ok,
        &format!(
            "unregularized means {:?}, regularized means {:?}",
            unreg_means
                .iter()
                .map(|v| (v * 1e3).round() / 1e3)
                .collect::<Vec<_>>(),
            reg_means
                .iter()
                .map(|v| (v * 1e3).round() / 1e3)
                .collect::<Vec<_>>()
        ),
    );
}

/// Criterion 9: self-convergence discrepancy decreases from n = 250 to
/// n = 2000 on the sphere for at least 4 of 5 seeds, and doubling n never
/// raises the cross-seed median by more than 10%.
#[test]
fn criterion_9_convergence() {
    let filter = FilterCoefficients::new(vec![0.0, 1.0]).unwrap();
    let sizes = [250usize, 500, 1000, 2000];
    let mut decreasing = 0;
    let mut per_size: Vec<Vec<f64>> = vec![Vec::new(); sizes.len()];
    for seed in 1..=5u64 {
        let rows = run_convergence_experiment(
            ManifoldKind::Sphere2,
            &sizes,
            &filter,
            &SignalSpec::FirstHarmonic,
            1.0,
            seed,
        )
        .unwrap();
        if rows.windows(2).all(|w| w[1].discrepancy < w[0].discrepancy) {
            decreasing += 1;
        }
        for (i, r) in rows.iter().enumerate() {
            per_size[i].push(r.discrepancy);
        }
    }
    let medians: Vec<f64> = per_size
        .iter_mut()
        .map(|v| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        })
        .collect();
    let median_ok = medians.windows(2).all(|w| w[1] <= w[0] * 1.1);
    report(
        "9 (sampling convergence)",
        decreasing >= 4 && median_ok,
        &format!(
            "{decreasing}/5 seeds strictly decreasing, medians {:?}",
            medians
                .iter()
                .map(|v| (v * 1e4).round() / 1e4)
                .collect::<Vec<_>>()
        ),
    );
}
