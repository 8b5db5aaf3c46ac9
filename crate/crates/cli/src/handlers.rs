//! One handler per command. Each returns the input and output paths it
//! touched so the manifest can record them.

use crate::params::*;
use mnnlab_core::filters::{
    continuity_constants, design_filter_on, verify_fdt_frt, FilterCoefficients, LambdaRange,
    DEFAULT_GRID_DENSITY,
};
use mnnlab_core::geometry::{
    deform, sample_manifold, DeformationKind, DeformationSpec, ManifoldKind, PointCloud,
    SignalSpec,
};
use mnnlab_core::graph::{build_graph, laplacian, OperatorKind, PerturbationKind};
use mnnlab_core::io;
use mnnlab_core::mnn::{
    build_sphere_torus_dataset, error_rate, init_model, train, DatasetConfig, MnnConfig, MnnModel,
    Nonlinearity, TrainConfig,
};
use mnnlab_core::spectral::{
    eigendecompose, partition_spectrum, SpectralDecomposition, SpectrumPartition, ThresholdKind,
};
use mnnlab_core::stability::{
    davis_kahan_suite, gradient_check_suite, path_equivalence_suite, relative_eigenvalue_suite,
    run_convergence_experiment, run_filter_stability_experiment, run_mnn_deformation_experiment,
    run_mnn_stability_experiment, weyl_suite, FilterExperimentSetup, MnnExperimentSetup,
    SuiteOutcome,
};
use mnnlab_core::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

pub struct Touched {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

fn is_json(path: &Path, format: &Option<String>) -> Result<bool> {
    match format.as_deref() {
        Some("json") => Ok(true),
        Some("csv") => Ok(false),
        Some(other) => Err(Error::Config(format!("unknown format `{other}`"))),
        None => Ok(path.extension().is_some_and(|e| e == "json")),
    }
}

fn read_cloud_any(path: &Path) -> Result<PointCloud> {
    if path.extension().is_some_and(|e| e == "json") {
        io::read_cloud_json(path)
    } else {
        io::read_cloud_csv(path)
    }
}

pub fn handle_sample(p: &SampleParams) -> Result<Touched> {
    let kind = ManifoldKind::parse(&p.manifold)?;
    let cloud = sample_manifold(kind, p.n, p.seed)?;
    crate::manifest::ensure_parent(&p.out)?;
    if is_json(&p.out, &p.format)? {
        io::write_cloud_json(&p.out, &cloud)?;
    } else {
        io::write_cloud_csv(&p.out, &cloud)?;
    }
    println!(
        "sampled {} points from {} (seed {}) -> {}",
        p.n,
        kind.name(),
        p.seed,
        p.out.display()
    );
    Ok(Touched {
        inputs: vec![],
        outputs: vec![p.out.clone()],
    })
}

pub fn handle_deform(p: &DeformParams) -> Result<Touched> {
    let cloud = read_cloud_any(&p.input)?;
    let kind = match p.kind.as_str() {
        "gaussian-coordinate" | "gaussian_coordinate" => DeformationKind::GaussianCoordinate,
        "smooth-field" | "smooth_field" => DeformationKind::SmoothField,
        other => return Err(Error::Config(format!("unknown deformation kind `{other}`"))),
    };
    let spec = DeformationSpec {
        kind,
        epsilon: p.epsilon,
        seed: p.seed,
        bandlimit: p.bandlimit,
    };
    let deformed = deform(&cloud, &spec)?;
    crate::manifest::ensure_parent(&p.out)?;
    if is_json(&p.out, &p.format)? {
        io::write_cloud_json(&p.out, &deformed)?;
    } else {
        io::write_cloud_csv(&p.out, &deformed)?;
    }
    println!(
        "deformed {} points ({}, epsilon {}) -> {}",
        cloud.n(),
        p.kind,
        p.epsilon,
        p.out.display()
    );
    Ok(Touched {
        inputs: vec![p.input.clone()],
        outputs: vec![p.out.clone()],
    })
}

pub fn handle_graph(p: &GraphParams) -> Result<Touched> {
    let mut cloud = read_cloud_any(&p.input)?;
    if let Some(d) = p.intrinsic_dim {
        cloud = PointCloud::new(
            cloud.points().clone(),
            cloud.manifold_kind(),
            d,
            cloud.seed(),
        )?;
    }
    let adjacency = build_graph(&cloud, p.alpha_kernel, p.t_n, p.exponent)?;
    let op = match p.emit.as_str() {
        "laplacian" => laplacian(&adjacency)?,
        "adjacency" => adjacency,
        other => return Err(Error::Config(format!("unknown emit target `{other}`"))),
    };
    crate::manifest::ensure_parent(&p.out)?;
    io::write_operator_bin(&p.out, &op)?;
    let mut outputs = vec![p.out.clone()];
    if let Some(csv) = &p.csv {
        crate::manifest::ensure_parent(csv)?;
        io::write_operator_csv(csv, &op)?;
        outputs.push(csv.clone());
    }
    println!(
        "built {} {}x{} (t_n {:.6}) -> {}",
        p.emit,
        op.n(),
        op.n(),
        op.t_n().unwrap_or(f64::NAN),
        p.out.display()
    );
    Ok(Touched {
        inputs: vec![p.input.clone()],
        outputs,
    })
}

fn parse_threshold_kind(s: &str) -> Result<ThresholdKind> {
    match s {
        "difference" | "alpha" => Ok(ThresholdKind::AlphaDifference),
        "ratio" | "gamma" => Ok(ThresholdKind::GammaRatio),
        other => Err(Error::Config(format!("unknown partition kind `{other}`"))),
    }
}

pub fn handle_spectrum(p: &SpectrumParams) -> Result<Touched> {
    let op = io::read_operator_bin(&p.operator)?;
    let dec = eigendecompose(&op)?;
    let partition = match (&p.partition, p.threshold) {
        (Some(kind), Some(threshold)) => Some(partition_spectrum(
            &dec,
            parse_threshold_kind(kind)?,
            threshold,
            p.exclude_zero,
        )?),
        (Some(_), None) => {
            return Err(Error::Config("--partition requires --threshold".into()))
        }
        (None, _) => None,
    };
    crate::manifest::ensure_parent(&p.out)?;
    io::write_spectrum_json(&p.out, &dec, partition.as_ref())?;
    let mut outputs = vec![p.out.clone()];
    if let Some(csv) = &p.csv {
        crate::manifest::ensure_parent(csv)?;
        io::write_spectrum_csv(csv, &dec, partition.as_ref())?;
        outputs.push(csv.clone());
    }
    match &partition {
        Some(part) => println!(
            "spectrum of {}x{} operator: lambda in [{:.6}, {:.6}], {} groups ({} singletons) -> {}",
            op.n(),
            op.n(),
            dec.eigenvalues()[0],
            dec.max_eigenvalue(),
            part.group_count(),
            part.singleton_count(),
            p.out.display()
        ),
        None => println!(
            "spectrum of {}x{} operator: lambda in [{:.6}, {:.6}] -> {}",
            op.n(),
            op.n(),
            dec.eigenvalues()[0],
            dec.max_eigenvalue(),
            p.out.display()
        ),
    }
    Ok(Touched {
        inputs: vec![p.operator.clone()],
        outputs,
    })
}

pub fn handle_filter_design(p: &FilterDesignParams) -> Result<Touched> {
    let spectrum = io::read_spectrum_json(&p.spectrum)?;
    let partition = spectrum.partition.ok_or_else(|| {
        Error::Config("spectrum file carries no partition; rerun spectrum with --partition".into())
    })?;
    let designed = design_filter_on(&spectrum.eigenvalues, &partition, &p.targets, p.taps)?;
    crate::manifest::ensure_parent(&p.out)?;
    io::write_filter_json(&p.out, &designed)?;
    println!(
        "designed {}-tap filter: fit residual {:.6}, normalized {} -> {}",
        p.taps,
        designed.residual,
        designed.normalized,
        p.out.display()
    );
    Ok(Touched {
        inputs: vec![p.spectrum.clone()],
        outputs: vec![p.out.clone()],
    })
}

#[derive(Serialize)]
struct FilterAnalysis {
    schema_version: u32,
    taps: Vec<f64>,
    lambda_lo: f64,
    lambda_hi: f64,
    lipschitz: f64,
    integral_lipschitz: f64,
    sup_abs_response: f64,
    flatness: Option<FlatnessSummary>,
}

#[derive(Serialize)]
struct FlatnessSummary {
    delta: f64,
    holds: bool,
    worst_group: usize,
    worst_deviation: f64,
}

pub fn handle_filter_analyze(p: &FilterAnalyzeParams) -> Result<Touched> {
    let (filter, file) = io::read_filter_json(&p.filter)?;
    let mut inputs = vec![p.filter.clone()];
    let spectrum = match &p.spectrum {
        Some(path) => {
            inputs.push(path.clone());
            Some(io::read_spectrum_json(path)?)
        }
        None => None,
    };
    let lambda_hi = p
        .lambda_hi
        .or_else(|| {
            spectrum.as_ref().map(|s| {
                s.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v)) * 1.1
            })
        })
        .unwrap_or(file.metadata.lambda_hi);
    let range = LambdaRange::new(0.0, lambda_hi)?;
    let constants = continuity_constants(&filter, range, p.grid)?;
    let flatness = match (&spectrum, p.delta) {
        (Some(s), Some(delta)) => {
            let partition = s.partition.clone().ok_or_else(|| {
                Error::Config("flatness check needs a partitioned spectrum".into())
            })?;
            let report = flatness_on_eigenvalues(&filter, &s.eigenvalues, &partition, delta)?;
            Some(report)
        }
        (None, Some(_)) => {
            return Err(Error::Config("--delta requires --spectrum".into()))
        }
        _ => None,
    };
    let analysis = FilterAnalysis {
        schema_version: io::SCHEMA_VERSION,
        taps: filter.taps().to_vec(),
        lambda_lo: range.lo,
        lambda_hi: range.hi,
        lipschitz: constants.lipschitz,
        integral_lipschitz: constants.integral_lipschitz,
        sup_abs_response: constants.sup_abs_response,
        flatness,
    };
    crate::manifest::ensure_parent(&p.out)?;
    io::write_json(&p.out, &analysis)?;
    println!(
        "filter constants over [0, {:.4}]: lipschitz {:.4}, integral {:.4}, sup {:.4} -> {}",
        lambda_hi,
        analysis.lipschitz,
        analysis.integral_lipschitz,
        analysis.sup_abs_response,
        p.out.display()
    );
    if let Some(f) = &analysis.flatness {
        println!(
            "flatness at delta {}: holds {} (worst group {}, deviation {:.6})",
            f.delta, f.holds, f.worst_group, f.worst_deviation
        );
    }
    Ok(Touched {
        inputs,
        outputs: vec![p.out.clone()],
    })
}

/// Flatness check from a spectrum file: rebuilds a diagonal stand-in so the
/// partition applies to the stored eigenvalue list.
fn flatness_on_eigenvalues(
    filter: &FilterCoefficients,
    eigenvalues: &[f64],
    partition: &SpectrumPartition,
    delta: f64,
) -> Result<FlatnessSummary> {
    let op = mnnlab_core::graph::DenseOperator::new(
        nalgebra_diag(eigenvalues),
        OperatorKind::GenericSymmetric,
        None,
    )?;
    let dec = eigendecompose(&op)?;
    let report = verify_fdt_frt(filter, partition, &dec, delta)?;
    Ok(FlatnessSummary {
        delta,
        holds: report.holds,
        worst_group: report.worst_group,
        worst_deviation: report.worst_deviation,
    })
}

fn nalgebra_diag(values: &[f64]) -> mnnlab_core::nalgebra::DMatrix<f64> {
    use mnnlab_core::nalgebra::{DMatrix, DVector};
    DMatrix::from_diagonal(&DVector::from_vec(values.to_vec()))
}

pub fn handle_filter_apply(p: &FilterApplyParams) -> Result<Touched> {
    let (filter, _) = io::read_filter_json(&p.filter)?;
    let op = io::read_operator_bin(&p.operator)?;
    let signal = io::read_signal_csv(&p.signal)?;
    let dec = eigendecompose(&op)?;
    let out = mnnlab_core::filters::apply_filter(&filter, &dec, &signal)?;
    crate::manifest::ensure_parent(&p.out)?;
    io::write_signal_csv(&p.out, &out)?;
    println!(
        "applied {}-tap filter to {} nodes x {} features -> {}",
        filter.order(),
        signal.n(),
        signal.feature_count(),
        p.out.display()
    );
    Ok(Touched {
        inputs: vec![p.filter.clone(), p.operator.clone(), p.signal.clone()],
        outputs: vec![p.out.clone()],
    })
}

pub fn handle_train(p: &TrainParams) -> Result<Touched> {
    let nonlinearity = Nonlinearity::parse(&p.nonlinearity)?;
    let config = MnnConfig::new(p.features.clone(), p.taps, nonlinearity)?;
    let train_set = build_sphere_torus_dataset(&DatasetConfig {
        clouds: p.train_clouds,
        points_per_cloud: p.points,
        alpha_kernel: p.alpha_kernel,
        scale_jitter: (0.9, 1.1),
        seed: p.seed,
    })?;
    let samples: Vec<_> = train_set.iter().map(|l| l.sample.clone()).collect();
    let model = init_model(&config, p.seed)?;
    let cfg = TrainConfig {
        learning_rate: p.learning_rate,
        adam_beta1: p.beta1,
        adam_beta2: p.beta2,
        batch_size: p.batch,
        epochs: p.epochs,
        regularizer_weight: p.regularizer,
        lipschitz_target: p.lipschitz_target,
        integral_lipschitz_target: p.integral_target,
        seed: p.seed,
    };
    let outcome = train(&model, &samples, &cfg)?;
    crate::manifest::ensure_parent(&p.out)?;
    io::write_model_json(&p.out, &outcome.model)?;
    let mut outputs = vec![p.out.clone()];
    if let Some(log) = &p.log {
        crate::manifest::ensure_parent(log)?;
        io::write_training_log_csv(log, &outcome.history)?;
        outputs.push(log.clone());
    }
    let last = outcome.history.last().expect("at least one epoch");
    let mut summary = format!(
        "trained {:?} for {} epochs: loss {:.4}, train error {:.4}",
        p.features, p.epochs, last.loss, last.train_error
    );
    if p.test_clouds > 0 {
        let test_set = build_sphere_torus_dataset(&DatasetConfig {
            clouds: p.test_clouds,
            points_per_cloud: p.points,
            alpha_kernel: p.alpha_kernel,
            scale_jitter: (0.9, 1.1),
            seed: p.seed.wrapping_add(0x7e57),
        })?;
        let test_samples: Vec<_> = test_set.iter().map(|l| l.sample.clone()).collect();
        let err = error_rate(&outcome.model, &test_samples)?;
        summary.push_str(&format!(", test error {err:.4}"));
    }
    println!("{summary} -> {}", p.out.display());
    Ok(Touched {
        inputs: vec![],
        outputs,
    })
}

/// Preset sphere operator shared by the stability presets.
fn preset_operator(
    n: usize,
    cloud_seed: u64,
    alpha_kernel: f64,
) -> Result<mnnlab_core::graph::DenseOperator> {
    let cloud = sample_manifold(ManifoldKind::Sphere2, n, cloud_seed)?;
    laplacian(&build_graph(&cloud, alpha_kernel, None, None)?)
}

fn normalize_model_filters(model: &mut MnnModel, dec: &SpectralDecomposition) -> Result<()> {
    let range = LambdaRange::covering(dec)?;
    for l in 0..model.layers().len() {
        let bank = &model.layers()[l];
        let mut updates = Vec::new();
        for p in 0..bank.out_features() {
            for q in 0..bank.in_features() {
                let f = bank.filter(p, q);
                match mnnlab_core::filters::normalize(&f, range, DEFAULT_GRID_DENSITY) {
                    Ok(nf) => updates.push((p, q, nf)),
                    Err(Error::Domain(_)) => {} // zero filter stays zero
                    Err(e) => return Err(e),
                }
            }
        }
        for (p, q, f) in updates {
            model.layers_mut()[l].set_filter(p, q, &f)?;
        }
    }
    Ok(())
}

pub fn handle_stability(p: &StabilityParams) -> Result<Touched> {
    let json_out = p.out.with_extension("json");
    let csv_out = p.out.with_extension("csv");
    crate::manifest::ensure_parent(&json_out)?;
    let mut inputs = Vec::new();
    let mut outputs = vec![json_out.clone(), csv_out.clone()];
    let report = match p.kind.as_str() {
        "absolute" | "relative" => {
            let (threshold_kind, threshold, perturbation) = if p.kind == "absolute" {
                (ThresholdKind::AlphaDifference, p.alpha, PerturbationKind::Absolute)
            } else {
                (ThresholdKind::GammaRatio, p.gamma, PerturbationKind::Relative)
            };
            let op = preset_operator(p.n, p.cloud_seed, p.alpha_kernel)?;
            let dec = eigendecompose(&op)?;
            let partition =
                partition_spectrum(&dec, threshold_kind, threshold, threshold_kind == ThresholdKind::GammaRatio)?;
            if p.targets.len() != partition.group_count() {
                return Err(Error::Config(format!(
                    "{} targets supplied but the {} partition has {} groups",
                    p.targets.len(),
                    p.kind,
                    partition.group_count()
                )));
            }
            let designed = design_filter_on(
                dec.eigenvalues().as_slice(),
                &partition,
                &p.targets,
                p.taps,
            )?;
            let setup = FilterExperimentSetup::prepare(
                op,
                designed.filter,
                threshold_kind,
                threshold,
            )?;
            run_filter_stability_experiment(&setup, perturbation, &p.eps, p.trials, p.seed)?
        }
        "mnn-absolute" => {
            let op = preset_operator(p.n, p.cloud_seed, p.alpha_kernel)?;
            let dec = eigendecompose(&op)?;
            let config = MnnConfig::new(vec![1, p.width, 1], p.taps, Nonlinearity::Relu)?;
            let mut model = init_model(&config, p.model_seed)?;
            normalize_model_filters(&mut model, &dec)?;
            let setup =
                MnnExperimentSetup::prepare(op, model, ThresholdKind::AlphaDifference, p.alpha)?;
            run_mnn_stability_experiment(
                &setup,
                PerturbationKind::Absolute,
                &p.eps,
                p.trials,
                p.seed,
            )?
        }
        "deformation" => {
            let model_path = p.model.as_ref().ok_or_else(|| {
                Error::Config("deformation experiments need --model".into())
            })?;
            inputs.push(model_path.clone());
            let model = io::read_model_json(model_path)?;
            let dataset = build_sphere_torus_dataset(&DatasetConfig {
                clouds: p.clouds,
                points_per_cloud: p.n,
                alpha_kernel: p.alpha_kernel,
                scale_jitter: (0.9, 1.1),
                seed: p.cloud_seed,
            })?;
            let outcome = run_mnn_deformation_experiment(
                &model,
                &dataset,
                &p.eps,
                p.trials.min(dataset.len()),
                p.alpha_kernel,
                p.seed,
            )?;
            let err_csv = p.out.with_extension("errors.csv");
            write_error_rates_csv(&err_csv, outcome.error_rate_original, &outcome.error_rates_deformed)?;
            outputs.push(err_csv);
            outcome.report
        }
        other => return Err(Error::Config(format!("unknown stability kind `{other}`"))),
    };
    io::write_report_json(&json_out, &report)?;
    io::write_report_csv(&csv_out, &report)?;
    println!(
        "{}: {} trials, {} skipped, {} violations, max empirical/bound {}",
        report.kind,
        report.trials.len(),
        report.summary.skipped_count,
        report.summary.violation_count,
        report
            .summary
            .max_ratio
            .map_or("n/a".to_string(), |r| format!("{r:.6}")),
    );
    for (eps, median) in &report.summary.median_by_epsilon {
        println!("  eps {eps}: median deviation {median:.6}");
    }
    Ok(Touched { inputs, outputs })
}

fn write_error_rates_csv(
    path: &Path,
    original: f64,
    deformed: &[(f64, f64)],
) -> Result<()> {
    use std::io::Write;
    let f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "epsilon,error_rate,original_error_rate")
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    for (eps, err) in deformed {
        writeln!(w, "{eps},{err},{original}")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

pub fn handle_converge(p: &ConvergeParams) -> Result<Touched> {
    let kind = ManifoldKind::parse(&p.manifold)?;
    let filter = FilterCoefficients::new(p.taps.clone())?;
    let signal = match p.signal.as_str() {
        "first-harmonic" | "first_harmonic" => SignalSpec::FirstHarmonic,
        "coordinates" => SignalSpec::Coordinates,
        other => return Err(Error::Config(format!("unknown signal `{other}`"))),
    };
    if p.seeds == 0 {
        return Err(Error::Config("need at least one seed".into()));
    }
    crate::manifest::ensure_parent(&p.out)?;
    use std::io::Write;
    let f = std::fs::File::create(&p.out).map_err(|e| Error::io(p.out.display().to_string(), e))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(w, "seed,n,discrepancy").map_err(|e| Error::io(p.out.display().to_string(), e))?;
    let mut decreasing = 0usize;
    for s in 0..p.seeds {
        let seed = p.seed.wrapping_add(s as u64);
        let rows = run_convergence_experiment(kind, &p.n_list, &filter, &signal, p.alpha_kernel, seed)?;
        let mono = rows.windows(2).all(|r| r[1].discrepancy < r[0].discrepancy);
        if mono {
            decreasing += 1;
        }
        for r in &rows {
            writeln!(w, "{seed},{},{}", r.n, r.discrepancy)
                .map_err(|e| Error::io(p.out.display().to_string(), e))?;
        }
    }
    println!(
        "convergence on {}: {} of {} seeds strictly decreasing -> {}",
        kind.name(),
        decreasing,
        p.seeds,
        p.out.display()
    );
    Ok(Touched {
        inputs: vec![],
        outputs: vec![p.out.clone()],
    })
}

/// Runs the requested checker suites; returns true when all passed.
pub fn handle_verify(p: &VerifyParams) -> Result<(Touched, bool)> {
    let mut outcomes: Vec<SuiteOutcome> = Vec::new();
    let lemmas = p.suite == "lemmas" || p.suite == "all";
    let paths = p.suite == "paths" || p.suite == "all";
    let gradients = p.suite == "gradients" || p.suite == "all";
    if !(lemmas || paths || gradients) {
        return Err(Error::Config(format!("unknown verify suite `{}`", p.suite)));
    }
    if lemmas {
        outcomes.push(weyl_suite(p.n, p.trials, p.seed)?);
        outcomes.push(relative_eigenvalue_suite(p.n, p.trials, p.seed)?);
        outcomes.push(davis_kahan_suite(p.n, p.trials, p.seed)?);
    }
    if paths {
        outcomes.push(path_equivalence_suite(20, p.n.min(60), p.seed)?);
    }
    if gradients {
        let seeds: Vec<u64> = (0..3).map(|i| p.seed.wrapping_add(i)).collect();
        outcomes.push(gradient_check_suite(&seeds)?);
    }
    let mut all_pass = true;
    for o in &outcomes {
        let status = if o.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<28} trials {:>4}  violations {:>3}  worst ratio {:.3e}  {}",
            o.name, o.trials, o.violations, o.worst_ratio, status
        );
        all_pass &= o.passed();
    }
    let mut outputs = Vec::new();
    if let Some(out) = &p.out {
        crate::manifest::ensure_parent(out)?;
        #[derive(Serialize)]
        struct VerifyFile<'a> {
            schema_version: u32,
            suites: &'a [SuiteOutcome],
        }
        io::write_json(
            out,
            &VerifyFile {
                schema_version: io::SCHEMA_VERSION,
                suites: &outcomes,
            },
        )?;
        outputs.push(out.clone());
    }
    Ok((
        Touched {
            inputs: vec![],
            outputs,
        },
        all_pass,
    ))
}

/// Dispatch used by both the normal command path and `rerun`.
/// Returns (touched paths, success) where success only matters for verify.
pub fn dispatch(params: &CommandParams) -> Result<(Touched, bool)> {
    match params {
        CommandParams::Sample(p) => handle_sample(p).map(|t| (t, true)),
        CommandParams::Deform(p) => handle_deform(p).map(|t| (t, true)),
        CommandParams::Graph(p) => handle_graph(p).map(|t| (t, true)),
        CommandParams::Spectrum(p) => handle_spectrum(p).map(|t| (t, true)),
        CommandParams::FilterDesign(p) => handle_filter_design(p).map(|t| (t, true)),
        CommandParams::FilterAnalyze(p) => handle_filter_analyze(p).map(|t| (t, true)),
        CommandParams::FilterApply(p) => handle_filter_apply(p).map(|t| (t, true)),
        CommandParams::Train(p) => handle_train(p).map(|t| (t, true)),
        CommandParams::Stability(p) => handle_stability(p).map(|t| (t, true)),
        CommandParams::Converge(p) => handle_converge(p).map(|t| (t, true)),
        CommandParams::Verify(p) => handle_verify(p),
    }
}
