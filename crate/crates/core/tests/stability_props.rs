//! Longer-running stability properties beyond the acceptance criteria:
//! the stability-discriminability direction and the boundedness of
//! low-index eigenvalue gaps on sphere graphs.

use mnnlab_core::filters::{continuity_constants, design_filter_on, LambdaRange};
use mnnlab_core::geometry::{sample_manifold, ManifoldKind};
use mnnlab_core::graph::{build_graph, laplacian, DenseOperator, OperatorKind, PerturbationKind};
use mnnlab_core::nalgebra::{DMatrix, DVector};
use mnnlab_core::spectral::{eigendecompose, partition_spectrum, ThresholdKind};
use mnnlab_core::stability::{run_filter_stability_experiment, FilterExperimentSetup};

/// Two filters designed from the same targets on the same partition, one
/// smooth (few taps) and one sharp (many taps): the smooth one must deviate
/// strictly less under absolute perturbations at every tested epsilon.
#[test]
fn smoother_filter_is_more_stable() {
    let evs = vec![0.04, 0.05, 0.06, 0.24, 0.25, 0.26, 0.44, 0.45, 0.46];
    let op = DenseOperator::new(
        DMatrix::from_diagonal(&DVector::from_vec(evs.clone())),
        OperatorKind::GenericSymmetric,
        None,
    )
    .unwrap();
    let dec = eigendecompose(&op).unwrap();
    let alpha = 0.1;
    let part = partition_spectrum(&dec, ThresholdKind::AlphaDifference, alpha, false).unwrap();
    let targets = [1.0, 0.0, 1.0];

    let smooth = design_filter_on(&evs, &part, &targets, 2).unwrap();
    let sharp = design_filter_on(&evs, &part, &targets, 14).unwrap();
    let range = LambdaRange::covering(&dec).unwrap();
    let smooth_constants = continuity_constants(&smooth.filter, range, 4000).unwrap();
    let sharp_constants = continuity_constants(&sharp.filter, range, 4000).unwrap();
    assert!(
        smooth_constants.lipschitz <= 0.5,
        "smooth filter lipschitz {}",
        smooth_constants.lipschitz
    );
    assert!(
        sharp_constants.lipschitz >= 5.0,
        "sharp filter lipschitz {}",
        sharp_constants.lipschitz
    );

    let epsilons = [alpha / 100.0, alpha / 20.0, alpha / 10.0];
    let mut smooth_means = vec![0.0f64; epsilons.len()];
    let mut sharp_means = vec![0.0f64; epsilons.len()];
    let seeds: Vec<u64> = (100..105).collect();
    for &seed in &seeds {
        for (designed, means) in [(&smooth, &mut smooth_means), (&sharp, &mut sharp_means)] {
            let setup = FilterExperimentSetup::prepare(
                op.clone(),
                designed.filter.clone(),
                ThresholdKind::AlphaDifference,
                alpha,
            )
            .unwrap();
            let report = run_filter_stability_experiment(
                &setup,
                PerturbationKind::Absolute,
                &epsilons,
                10,
                seed,
            )
            .unwrap();
            assert_eq!(report.summary.violation_count, 0);
            for (i, &eps) in epsilons.iter().enumerate() {
                let mean = report
                    .mean_by_epsilon()
                    .iter()
                    .find(|(e, _)| *e == eps)
                    .map(|(_, m)| *m)
                    .unwrap();
                means[i] += mean / seeds.len() as f64;
            }
        }
    }
    for (i, &eps) in epsilons.iter().enumerate() {
        assert!(
            smooth_means[i] < sharp_means[i],
            "eps {eps}: smooth {} vs sharp {}",
            smooth_means[i],
            sharp_means[i]
        );
    }
}

/// Low-index consecutive eigenvalue gaps of a sphere graph stay bounded:
/// after volume rescaling the first thirty gaps never exceed a fixed
/// ceiling, far below unbounded growth.
#[test]
fn sphere_eigenvalue_gaps_stay_bounded() {
    let cloud = sample_manifold(ManifoldKind::Sphere2, 600, 17).unwrap();
    let lap = laplacian(&build_graph(&cloud, 1.0, None, None).unwrap()).unwrap();
    let dec = eigendecompose(&lap).unwrap();
    let volume = ManifoldKind::Sphere2.volume().unwrap();
    let mut worst = 0.0f64;
    for i in 0..30 {
        let gap = (dec.eigenvalues()[i + 1] - dec.eigenvalues()[i]) * volume;
        worst = worst.max(gap);
        assert!(gap <= 12.0, "scaled gap {gap} at index {i}");
    }
    // The widest low-index gap is the inter-cluster spacing, well above the
    // within-cluster spread; both finite.
    assert!(worst > 0.1, "spectrum suspiciously flat ({worst})");
}
