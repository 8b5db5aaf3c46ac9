//! File formats: CSV tables for clouds, signals and logs, JSON documents
//! for clouds, spectra, filters, models and reports, and a small binary
//! container for dense operators (8-byte little-endian size header followed
//! by row-major f64 entries). All writers are deterministic: floats are
//! printed in shortest round-trip form.

use crate::error::{Error, Result};
use crate::filters::{DesignedFilter, FilterCoefficients, LambdaRange};
use crate::geometry::{ManifoldKind, PointCloud, SignalVector};
use crate::graph::{DenseOperator, OperatorKind};
use crate::mnn::{FilterBank, MnnConfig, MnnModel, Nonlinearity, Readout, TrainRecord};
use crate::spectral::{SpectralDecomposition, SpectrumPartition};
use crate::stability::StabilityReport;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

fn open_out(path: &Path) -> Result<BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(BufWriter::new(f))
}

fn open_in(path: &Path) -> Result<BufReader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(BufReader::new(f))
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path.display().to_string(), e)
}

fn parse_f64(path: &Path, line_no: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| {
        Error::parse(
            path.display().to_string(),
            line_no,
            format!("expected a number, found `{field}`"),
        )
    })
}

// ---- point clouds ---------------------------------------------------------

pub fn write_cloud_csv(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = open_out(path)?;
    let header: Vec<String> = (1..=cloud.ambient_dim()).map(|i| format!("x{i}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
    for i in 0..cloud.n() {
        let row: Vec<String> = (0..cloud.ambient_dim())
            .map(|j| format!("{}", cloud.points()[(i, j)]))
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(io_err(path))?;
    }
    Ok(())
}

/// CSV clouds carry no provenance; they come back as `external` with
/// intrinsic dimension 2 (every surface in this toolkit is 2-dimensional).
pub fn read_cloud_csv(path: &Path) -> Result<PointCloud> {
    let r = open_in(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed.starts_with('x') {
            width = trimmed.split(',').count();
            continue;
        }
        let row: Result<Vec<f64>> = trimmed
            .split(',')
            .map(|f| parse_f64(path, idx + 1, f))
            .collect();
        let row = row?;
        if width == 0 {
            width = row.len();
        }
        if row.len() != width {
            return Err(Error::parse(
                path.display().to_string(),
                idx + 1,
                format!("expected {width} columns, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path.display().to_string(), 1, "no data rows"));
    }
    let m = DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]);
    PointCloud::new(m, ManifoldKind::External, 2.min(width), 0)
}

#[derive(Serialize, Deserialize)]
struct CloudFile {
    schema_version: u32,
    manifold_kind: ManifoldKind,
    intrinsic_dim: usize,
    seed: u64,
    n: usize,
    points: Vec<Vec<f64>>,
}

pub fn write_cloud_json(path: &Path, cloud: &PointCloud) -> Result<()> {
    let file = CloudFile {
        schema_version: SCHEMA_VERSION,
        manifold_kind: cloud.manifold_kind(),
        intrinsic_dim: cloud.intrinsic_dim(),
        seed: cloud.seed(),
        n: cloud.n(),
        points: (0..cloud.n())
            .map(|i| (0..cloud.ambient_dim()).map(|j| cloud.points()[(i, j)]).collect())
            .collect(),
    };
    write_json(path, &file)
}

pub fn read_cloud_json(path: &Path) -> Result<PointCloud> {
    let file: CloudFile = read_json(path)?;
    if file.points.len() != file.n {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            format!("header says {} points, found {}", file.n, file.points.len()),
        ));
    }
    let width = file.points.first().map_or(0, |r| r.len());
    if file.points.iter().any(|r| r.len() != width) {
        return Err(Error::parse(path.display().to_string(), 1, "ragged point rows"));
    }
    let m = DMatrix::from_fn(file.points.len(), width, |i, j| file.points[i][j]);
    // Deformed or transformed clouds may no longer satisfy the template
    // invariants; fall back to external instead of rejecting the file.
    PointCloud::new(m.clone(), file.manifold_kind, file.intrinsic_dim, file.seed)
        .or_else(|_| PointCloud::new(m, ManifoldKind::External, file.intrinsic_dim, file.seed))
}

// ---- signals ---------------------------------------------------------------

pub fn write_signal_csv(path: &Path, signal: &SignalVector) -> Result<()> {
    let mut w = open_out(path)?;
    let header: Vec<String> = (1..=signal.feature_count()).map(|i| format!("f{i}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
    for i in 0..signal.n() {
        let row: Vec<String> = (0..signal.feature_count())
            .map(|j| format!("{}", signal.values()[(i, j)]))
            .collect();
        writeln!(w, "{}", row.join(",")).map_err(io_err(path))?;
    }
    Ok(())
}

pub fn read_signal_csv(path: &Path) -> Result<SignalVector> {
    let r = open_in(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 && trimmed.starts_with('f') {
            width = trimmed.split(',').count();
            continue;
        }
        let row: Result<Vec<f64>> = trimmed
            .split(',')
            .map(|f| parse_f64(path, idx + 1, f))
            .collect();
        let row = row?;
        if width == 0 {
            width = row.len();
        }
        if row.len() != width {
            return Err(Error::parse(
                path.display().to_string(),
                idx + 1,
                format!("expected {width} columns, found {}", row.len()),
            ));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path.display().to_string(), 1, "no data rows"));
    }
    SignalVector::new(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

// ---- dense operators -------------------------------------------------------

pub fn write_operator_bin(path: &Path, op: &DenseOperator) -> Result<()> {
    let mut w = open_out(path)?;
    let n = op.n() as u64;
    w.write_all(&n.to_le_bytes()).map_err(io_err(path))?;
    for i in 0..op.n() {
        for j in 0..op.n() {
            w.write_all(&op.matrix()[(i, j)].to_le_bytes()).map_err(io_err(path))?;
        }
    }
    Ok(())
}

/// Binary operators come back as generic symmetric: the header stores only
/// the size, not the kind or bandwidth.
pub fn read_operator_bin(path: &Path) -> Result<DenseOperator> {
    let mut r = open_in(path)?;
    let mut header = [0u8; 8];
    r.read_exact(&mut header)
        .map_err(|_| Error::parse(path.display().to_string(), 0, "missing 8-byte size header"))?;
    let n = u64::from_le_bytes(header) as usize;
    if n == 0 || n > 1_000_000 {
        return Err(Error::parse(
            path.display().to_string(),
            0,
            format!("implausible operator size {n}"),
        ));
    }
    let mut buf = vec![0u8; n * n * 8];
    r.read_exact(&mut buf).map_err(|_| {
        Error::parse(
            path.display().to_string(),
            0,
            format!("expected {} matrix bytes", n * n * 8),
        )
    })?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let off = (i * n + j) * 8;
            m[(i, j)] = f64::from_le_bytes(buf[off..off + 8].try_into().unwrap());
        }
    }
    DenseOperator::new(m, OperatorKind::GenericSymmetric, None)
}

pub fn write_operator_csv(path: &Path, op: &DenseOperator) -> Result<()> {
    let mut w = open_out(path)?;
    for i in 0..op.n() {
        let row: Vec<String> = (0..op.n()).map(|j| format!("{}", op.matrix()[(i, j)])).collect();
        writeln!(w, "{}", row.join(",")).map_err(io_err(path))?;
    }
    Ok(())
}

// ---- spectra ----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct SpectrumFile {
    pub schema_version: u32,
    pub eigenvalues: Vec<f64>,
    pub partition: Option<SpectrumPartition>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub group_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub singleton_count: Option<usize>,
}

pub fn write_spectrum_json(
    path: &Path,
    dec: &SpectralDecomposition,
    partition: Option<&SpectrumPartition>,
) -> Result<()> {
    let file = SpectrumFile {
        schema_version: SCHEMA_VERSION,
        eigenvalues: dec.eigenvalues().iter().copied().collect(),
        partition: partition.cloned(),
        group_count: partition.map(|p| p.group_count()),
        singleton_count: partition.map(|p| p.singleton_count()),
    };
    write_json(path, &file)
}

pub fn read_spectrum_json(path: &Path) -> Result<SpectrumFile> {
    let file: SpectrumFile = read_json(path)?;
    if file.eigenvalues.is_empty() {
        return Err(Error::parse(path.display().to_string(), 1, "empty spectrum"));
    }
    if let Some(p) = &file.partition {
        if p.covered() != file.eigenvalues.len() {
            return Err(Error::parse(
                path.display().to_string(),
                1,
                "partition does not cover the eigenvalue list",
            ));
        }
    }
    Ok(file)
}

pub fn write_spectrum_csv(
    path: &Path,
    dec: &SpectralDecomposition,
    partition: Option<&SpectrumPartition>,
) -> Result<()> {
    let mut w = open_out(path)?;
    writeln!(w, "index,eigenvalue,group").map_err(io_err(path))?;
    for (i, ev) in dec.eigenvalues().iter().enumerate() {
        let group = partition
            .and_then(|p| p.group_of(i))
            .map_or(String::from(""), |g| g.to_string());
        writeln!(w, "{i},{ev},{group}").map_err(io_err(path))?;
    }
    Ok(())
}

// ---- filters ----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct FilterFile {
    pub schema_version: u32,
    pub k: usize,
    pub taps: Vec<f64>,
    pub metadata: FilterMetadata,
}

#[derive(Serialize, Deserialize)]
pub struct FilterMetadata {
    pub normalized: bool,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    pub residual: Option<f64>,
}

pub fn write_filter_json(path: &Path, designed: &DesignedFilter) -> Result<()> {
    let file = FilterFile {
        schema_version: SCHEMA_VERSION,
        k: designed.filter.order(),
        taps: designed.filter.taps().to_vec(),
        metadata: FilterMetadata {
            normalized: designed.normalized,
            lambda_lo: designed.range.lo,
            lambda_hi: designed.range.hi,
            residual: Some(designed.residual),
        },
    };
    write_json(path, &file)
}

pub fn write_raw_filter_json(
    path: &Path,
    filter: &FilterCoefficients,
    normalized: bool,
    range: LambdaRange,
) -> Result<()> {
    let file = FilterFile {
        schema_version: SCHEMA_VERSION,
        k: filter.order(),
        taps: filter.taps().to_vec(),
        metadata: FilterMetadata {
            normalized,
            lambda_lo: range.lo,
            lambda_hi: range.hi,
            residual: None,
        },
    };
    write_json(path, &file)
}

pub fn read_filter_json(path: &Path) -> Result<(FilterCoefficients, FilterFile)> {
    let file: FilterFile = read_json(path)?;
    if file.taps.len() != file.k {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            format!("k = {} but {} taps present", file.k, file.taps.len()),
        ));
    }
    let filter = FilterCoefficients::new(file.taps.clone())?;
    Ok((filter, file))
}

// ---- models -----------------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub layer_features: Vec<usize>,
    pub taps_per_filter: usize,
    pub nonlinearity: Nonlinearity,
    pub readout: Readout,
    pub seed: u64,
    /// Taps indexed [layer][out_feature][in_feature][tap].
    pub banks: Vec<Vec<Vec<Vec<f64>>>>,
    pub readout_weights: Vec<f64>,
    pub readout_bias: f64,
}

pub fn write_model_json(path: &Path, model: &MnnModel) -> Result<()> {
    let banks = model
        .layers()
        .iter()
        .map(|bank| {
            (0..bank.out_features())
                .map(|p| {
                    (0..bank.in_features())
                        .map(|q| bank.filter(p, q).taps().to_vec())
                        .collect()
                })
                .collect()
        })
        .collect();
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        layer_features: model.config.layer_features.clone(),
        taps_per_filter: model.config.taps_per_filter,
        nonlinearity: model.config.nonlinearity,
        readout: model.config.readout,
        seed: model.seed,
        banks,
        readout_weights: model.readout_weights().iter().copied().collect(),
        readout_bias: model.readout_bias(),
    };
    write_json(path, &file)
}

pub fn read_model_json(path: &Path) -> Result<MnnModel> {
    let file: ModelFile = read_json(path)?;
    let config = MnnConfig::new(
        file.layer_features.clone(),
        file.taps_per_filter,
        file.nonlinearity,
    )?;
    let mut layers = Vec::with_capacity(config.layer_count());
    if file.banks.len() != config.layer_count() {
        return Err(Error::parse(
            path.display().to_string(),
            1,
            "bank count does not match layer_features",
        ));
    }
    for (l, bank_taps) in file.banks.iter().enumerate() {
        let f_out = config.layer_features[l + 1];
        let f_in = config.layer_features[l];
        let mut bank = FilterBank::zeros(f_out, f_in, config.taps_per_filter);
        if bank_taps.len() != f_out {
            return Err(Error::parse(
                path.display().to_string(),
                1,
                format!("layer {l}: expected {f_out} output rows"),
            ));
        }
        for (p, row) in bank_taps.iter().enumerate() {
            if row.len() != f_in {
                return Err(Error::parse(
                    path.display().to_string(),
                    1,
                    format!("layer {l} row {p}: expected {f_in} filters"),
                ));
            }
            for (q, taps) in row.iter().enumerate() {
                let f = FilterCoefficients::new(taps.clone())?;
                bank.set_filter(p, q, &f)?;
            }
        }
        layers.push(bank);
    }
    MnnModel::from_parts(
        config,
        file.seed,
        layers,
        DVector::from_vec(file.readout_weights),
        file.readout_bias,
    )
}

// ---- reports and logs ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    #[serde(flatten)]
    pub report: StabilityReport,
}

pub fn write_report_json(path: &Path, report: &StabilityReport) -> Result<()> {
    write_json(
        path,
        &ReportFile {
            schema_version: SCHEMA_VERSION,
            report: report.clone(),
        },
    )
}

pub fn write_report_csv(path: &Path, report: &StabilityReport) -> Result<()> {
    let mut w = open_out(path)?;
    writeln!(w, "kind,n,trial,seed,epsilon,epsilon_measured,empirical,bound,holds,skipped")
        .map_err(io_err(path))?;
    for t in &report.trials {
        let bound = t.theoretical_bound.map_or(String::new(), |b| format!("{b}"));
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{}",
            report.kind,
            report.n,
            t.trial,
            t.seed,
            t.epsilon_nominal,
            t.epsilon_measured,
            t.empirical_deviation,
            bound,
            t.holds,
            t.skipped
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

pub fn write_training_log_csv(path: &Path, history: &[TrainRecord]) -> Result<()> {
    let mut w = open_out(path)?;
    writeln!(w, "epoch,loss,train_error").map_err(io_err(path))?;
    for r in history {
        writeln!(w, "{},{},{}", r.epoch, r.loss, r.train_error).map_err(io_err(path))?;
    }
    Ok(())
}

// ---- generic JSON helpers ------------------------------------------------------

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = open_out(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::Data(format!("cannot encode {}: {e}", path.display())))?;
    w.write_all(b"\n").map_err(io_err(path))?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let r = open_in(path)?;
    serde_json::from_reader(r).map_err(|e| {
        Error::parse(path.display().to_string(), e.line(), e.to_string())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_manifold, DeformationSpec};
    use crate::graph::{build_graph, laplacian};
    use crate::mnn::{init_model, Nonlinearity};
    use crate::spectral::{eigendecompose, partition_spectrum, ThresholdKind};
    use tempfile::tempdir;

    #[test]
    fn cloud_csv_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let cloud = sample_manifold(ManifoldKind::Torus2, 17, 3).unwrap();
        write_cloud_csv(&path, &cloud).unwrap();
        let back = read_cloud_csv(&path).unwrap();
        assert_eq!(back.n(), 17);
        assert_eq!(back.points(), cloud.points());
    }

    #[test]
    fn cloud_json_roundtrip_preserves_metadata() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.json");
        let cloud = sample_manifold(ManifoldKind::Sphere2, 9, 12).unwrap();
        write_cloud_json(&path, &cloud).unwrap();
        let back = read_cloud_json(&path).unwrap();
        assert_eq!(back.manifold_kind(), ManifoldKind::Sphere2);
        assert_eq!(back.seed(), 12);
        assert_eq!(back.points(), cloud.points());
    }

    #[test]
    fn deformed_cloud_json_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("cloud.json");
        let cloud = sample_manifold(ManifoldKind::Sphere2, 9, 12).unwrap();
        let deformed = crate::geometry::deform(&cloud, &DeformationSpec::gaussian(0.4, 5)).unwrap();
        write_cloud_json(&path, &deformed).unwrap();
        let back = read_cloud_json(&path).unwrap();
        assert_eq!(back.points(), deformed.points());
    }

    #[test]
    fn operator_bin_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("op.bin");
        let cloud = sample_manifold(ManifoldKind::Sphere2, 13, 5).unwrap();
        let lap = laplacian(&build_graph(&cloud, 1.0, None, None).unwrap()).unwrap();
        write_operator_bin(&path, &lap).unwrap();
        let back = read_operator_bin(&path).unwrap();
        assert_eq!(back.matrix(), lap.matrix());
    }

    #[test]
    fn truncated_operator_is_parse_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("op.bin");
        std::fs::write(&path, 5u64.to_le_bytes()).unwrap();
        assert!(matches!(read_operator_bin(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn spectrum_json_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("spec.json");
        let cloud = sample_manifold(ManifoldKind::Sphere2, 15, 6).unwrap();
        let dec =
            eigendecompose(&laplacian(&build_graph(&cloud, 1.0, None, None).unwrap()).unwrap())
                .unwrap();
        let part = partition_spectrum(&dec, ThresholdKind::AlphaDifference, 0.01, false).unwrap();
        write_spectrum_json(&path, &dec, Some(&part)).unwrap();
        let back = read_spectrum_json(&path).unwrap();
        assert_eq!(back.eigenvalues.len(), 15);
        assert_eq!(back.partition.unwrap(), part);
    }

    #[test]
    fn signal_csv_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("sig.csv");
        let cloud = sample_manifold(ManifoldKind::Sphere2, 8, 7).unwrap();
        let sig =
            crate::geometry::evaluate_signal(&cloud, &crate::geometry::SignalSpec::Coordinates)
                .unwrap();
        write_signal_csv(&path, &sig).unwrap();
        let back = read_signal_csv(&path).unwrap();
        assert_eq!(back.values(), sig.values());
    }

    #[test]
    fn model_json_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let config = MnnConfig::new(vec![3, 4, 2], 5, Nonlinearity::Relu).unwrap();
        let model = init_model(&config, 31).unwrap();
        write_model_json(&path, &model).unwrap();
        let back = read_model_json(&path).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn malformed_csv_names_line() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,x2\n0.5,bad\n").unwrap();
        match read_cloud_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
