//! Typed, serializable parameter sets for every command. These are what the
//! run manifests store, so a manifest can be re-executed precisely.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleParams {
    pub manifold: String,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeformParams {
    pub input: PathBuf,
    pub kind: String,
    pub epsilon: f64,
    pub bandlimit: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphParams {
    pub input: PathBuf,
    pub alpha_kernel: f64,
    pub t_n: Option<f64>,
    pub exponent: Option<f64>,
    pub intrinsic_dim: Option<usize>,
    pub emit: String,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumParams {
    pub operator: PathBuf,
    pub partition: Option<String>,
    pub threshold: Option<f64>,
    pub exclude_zero: bool,
    pub out: PathBuf,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterDesignParams {
    pub spectrum: PathBuf,
    pub targets: Vec<f64>,
    pub taps: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterAnalyzeParams {
    pub filter: PathBuf,
    pub spectrum: Option<PathBuf>,
    pub delta: Option<f64>,
    pub lambda_hi: Option<f64>,
    pub grid: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterApplyParams {
    pub filter: PathBuf,
    pub operator: PathBuf,
    pub signal: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainParams {
    pub train_clouds: usize,
    pub test_clouds: usize,
    pub points: usize,
    pub features: Vec<usize>,
    pub taps: usize,
    pub nonlinearity: String,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    pub epochs: usize,
    pub regularizer: f64,
    pub lipschitz_target: f64,
    pub integral_target: f64,
    pub alpha_kernel: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityParams {
    pub kind: String,
    pub eps: Vec<f64>,
    pub trials: usize,
    pub n: usize,
    pub cloud_seed: u64,
    pub seed: u64,
    pub alpha_kernel: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub targets: Vec<f64>,
    pub taps: usize,
    pub width: usize,
    pub model_seed: u64,
    pub model: Option<PathBuf>,
    pub clouds: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeParams {
    pub manifold: String,
    pub n_list: Vec<usize>,
    pub taps: Vec<f64>,
    pub signal: String,
    pub alpha_kernel: f64,
    pub seeds: usize,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyParams {
    pub suite: String,
    pub trials: usize,
    pub n: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

/// Dispatchable union; the manifest stores one of these.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "params", rename_all = "snake_case")]
pub enum CommandParams {
    Sample(SampleParams),
    Deform(DeformParams),
    Graph(GraphParams),
    Spectrum(SpectrumParams),
    FilterDesign(FilterDesignParams),
    FilterAnalyze(FilterAnalyzeParams),
    FilterApply(FilterApplyParams),
    Train(TrainParams),
    Stability(StabilityParams),
    Converge(ConvergeParams),
    Verify(VerifyParams),
}

impl CommandParams {
    pub fn name(&self) -> &'static str {
        match self {
            CommandParams::Sample(_) => "sample",
            CommandParams::Deform(_) => "deform",
            CommandParams::Graph(_) => "graph",
            CommandParams::Spectrum(_) => "spectrum",
            CommandParams::FilterDesign(_) => "filter design",
            CommandParams::FilterAnalyze(_) => "filter analyze",
            CommandParams::FilterApply(_) => "filter apply",
            CommandParams::Train(_) => "train",
            CommandParams::Stability(_) => "stability",
            CommandParams::Converge(_) => "converge",
            CommandParams::Verify(_) => "verify",
        }
    }
}
