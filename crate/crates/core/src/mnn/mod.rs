//! Multi-layer networks of heat-kernel filter banks with pointwise
//! nonlinearities and a mean-pool linear readout, trained by ADAM on a
//! binary cross-entropy loss with closed-form gradients.

mod dataset;
mod train;

pub use dataset::{build_sphere_torus_dataset, DatasetConfig, LabeledSample};
pub use train::{
    error_rate,
    continuity_penalty, loss_and_gradients, train, LossAndGradients, TrainConfig, TrainOutcome,
    TrainRecord,
};

use crate::error::{Error, Result};
use crate::filters::FilterCoefficients;
use crate::geometry::SignalVector;
use crate::rng::{self, tags};
use crate::spectral::SpectralDecomposition;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Relu,
    Abs,
    /// tanh: smooth, normalized Lipschitz, used by the gradient checks.
    TanhNormalized,
}

impl Nonlinearity {
    pub fn apply(self, a: f64) -> f64 {
        match self {
            Nonlinearity::Relu => a.max(0.0),
            Nonlinearity::Abs => a.abs(),
            Nonlinearity::TanhNormalized => a.tanh(),
        }
    }

    pub fn derivative(self, a: f64) -> f64 {
        match self {
            Nonlinearity::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::Abs => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Nonlinearity::TanhNormalized => {
                let t = a.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Nonlinearity::Relu),
            "abs" => Ok(Nonlinearity::Abs),
            "tanh" | "tanh_normalized" => Ok(Nonlinearity::TanhNormalized),
            other => Err(Error::Config(format!("unknown nonlinearity `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    MeanPoolLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MnnConfig {
    /// Feature counts F_0 .. F_L.
    pub layer_features: Vec<usize>,
    pub taps_per_filter: usize,
    pub nonlinearity: Nonlinearity,
    pub readout: Readout,
}

impl MnnConfig {
    pub fn new(layer_features: Vec<usize>, taps_per_filter: usize, nonlinearity: Nonlinearity) -> Result<Self> {
        if layer_features.len() < 2 {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        if layer_features.iter().any(|&f| f == 0) {
            return Err(Error::Config("feature counts must be positive".into()));
        }
        if taps_per_filter == 0 {
            return Err(Error::Config("taps_per_filter must be positive".into()));
        }
        Ok(MnnConfig {
            layer_features,
            taps_per_filter,
            nonlinearity,
            readout: Readout::MeanPoolLinear,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layer_features.len() - 1
    }

    pub fn input_features(&self) -> usize {
        self.layer_features[0]
    }

    pub fn output_features(&self) -> usize {
        *self.layer_features.last().unwrap()
    }
}

/// One layer's filter bank: `taps[k]` is the F_out x F_in matrix of k-th
/// taps, so filter (p, q) has coefficients `taps[0][(p,q)] .. taps[K-1][(p,q)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    taps: Vec<DMatrix<f64>>,
}

impl FilterBank {
    pub fn zeros(out_features: usize, in_features: usize, order: usize) -> Self {
        FilterBank {
            taps: (0..order).map(|_| DMatrix::zeros(out_features, in_features)).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.taps.len()
    }

    pub fn out_features(&self) -> usize {
        self.taps[0].nrows()
    }

    pub fn in_features(&self) -> usize {
        self.taps[0].ncols()
    }

    pub fn tap_matrix(&self, k: usize) -> &DMatrix<f64> {
        &self.taps[k]
    }

    pub fn tap_matrix_mut(&mut self, k: usize) -> &mut DMatrix<f64> {
        &mut self.taps[k]
    }

    pub fn filter(&self, p: usize, q: usize) -> FilterCoefficients {
        FilterCoefficients::new(self.taps.iter().map(|m| m[(p, q)]).collect())
            .expect("bank taps are finite")
    }

    pub fn set_filter(&mut self, p: usize, q: usize, filter: &FilterCoefficients) -> Result<()> {
        if filter.order() != self.order() {
            return Err(Error::Contract("filter order does not match the bank".into()));
        }
        for (k, &t) in filter.taps().iter().enumerate() {
            self.taps[k][(p, q)] = t;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnnModel {
    pub config: MnnConfig,
    pub seed: u64,
    layers: Vec<FilterBank>,
    readout_weights: DVector<f64>,
    readout_bias: f64,
}

impl MnnModel {
    pub fn layers(&self) -> &[FilterBank] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FilterBank] {
        &mut self.layers
    }

    pub fn readout_weights(&self) -> &DVector<f64> {
        &self.readout_weights
    }

    pub fn readout_bias(&self) -> f64 {
        self.readout_bias
    }

    pub fn from_parts(
        config: MnnConfig,
        seed: u64,
        layers: Vec<FilterBank>,
        readout_weights: DVector<f64>,
        readout_bias: f64,
    ) -> Result<Self> {
        if layers.len() != config.layer_count() {
            return Err(Error::Contract("layer count does not match config".into()));
        }
        for (l, bank) in layers.iter().enumerate() {
            if bank.out_features() != config.layer_features[l + 1]
                || bank.in_features() != config.layer_features[l]
                || bank.order() != config.taps_per_filter
            {
                return Err(Error::Contract(format!("layer {l} bank shape mismatch")));
            }
            if bank.taps.iter().any(|m| m.iter().any(|v| !v.is_finite())) {
                return Err(Error::Data(format!("layer {l} has non-finite taps")));
            }
        }
        if readout_weights.len() != config.output_features() {
            return Err(Error::Contract("readout width mismatch".into()));
        }
        if readout_weights.iter().any(|v| !v.is_finite()) || !readout_bias.is_finite() {
            return Err(Error::Data("readout parameters must be finite".into()));
        }
        Ok(MnnModel {
            config,
            seed,
            layers,
            readout_weights,
            readout_bias,
        })
    }

    pub fn param_count(&self) -> usize {
        let taps: usize = self
            .layers
            .iter()
            .map(|b| b.order() * b.out_features() * b.in_features())
            .sum();
        taps + self.readout_weights.len() + 1
    }

    /// Deterministic flat parameter order: layers in order (k-major, then
    /// column-major within each tap matrix), then readout weights, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for bank in &self.layers {
            for k in 0..bank.order() {
                out.extend(bank.taps[k].iter());
            }
        }
        out.extend(self.readout_weights.iter());
        out.push(self.readout_bias);
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite parameters".into()));
        }
        let mut pos = 0;
        for bank in &mut self.layers {
            for k in 0..bank.taps.len() {
                for v in bank.taps[k].iter_mut() {
                    *v = flat[pos];
                    pos += 1;
                }
            }
        }
        for v in self.readout_weights.iter_mut() {
            *v = flat[pos];
            pos += 1;
        }
        self.readout_bias = flat[pos];
        Ok(())
    }
}

/// Taps i.i.d. uniform on [-1/(K F_in), 1/(K F_in)] keep each layer's
/// operator norm at order one; readout weights are small and the bias zero.
pub fn init_model(config: &MnnConfig, seed: u64) -> Result<MnnModel> {
    let mut rng = rng::stream(seed, &[tags::MODEL_INIT]);
    let order = config.taps_per_filter;
    let mut layers = Vec::with_capacity(config.layer_count());
    for l in 0..config.layer_count() {
        let f_in = config.layer_features[l];
        let f_out = config.layer_features[l + 1];
        let bound = 1.0 / (order as f64 * f_in as f64);
        let mut bank = FilterBank::zeros(f_out, f_in, order);
        for p in 0..f_out {
            for q in 0..f_in {
                for k in 0..order {
                    bank.taps[k][(p, q)] = rng.gen_range(-bound..=bound);
                }
            }
        }
        layers.push(bank);
    }
    let f_l = config.output_features();
    let readout_weights = DVector::from_fn(f_l, |_, _| rng.gen_range(-0.1..=0.1));
    MnnModel::from_parts(config.clone(), seed, layers, readout_weights, 0.0)
}

/// Everything the backward pass needs from one forward evaluation.
pub(crate) struct ForwardTrace {
    /// Spectral-domain inputs of each layer: Phi^T X_{l-1}.
    pub spectral_inputs: Vec<DMatrix<f64>>,
    /// Node-domain preactivations of each layer.
    pub preactivations: Vec<DMatrix<f64>>,
    /// Node-domain activations of each layer.
    pub features: Vec<DMatrix<f64>>,
    /// exp(-k lambda_i) table, n x K.
    pub exp_table: DMatrix<f64>,
    pub pooled: DVector<f64>,
    pub logit: f64,
}

pub struct ForwardOutput {
    /// Node-domain activations per layer, index 0 = first hidden layer.
    pub layer_features: Vec<DMatrix<f64>>,
    pub pooled: DVector<f64>,
    pub logit: f64,
}

pub(crate) fn exp_table(dec: &SpectralDecomposition, order: usize) -> DMatrix<f64> {
    let n = dec.n();
    let mut table = DMatrix::zeros(n, order);
    for i in 0..n {
        let base = (-dec.eigenvalues()[i]).exp();
        let mut pow = 1.0;
        for k in 0..order {
            table[(i, k)] = pow;
            pow *= base;
        }
    }
    table
}

pub(crate) fn forward_trace(
    model: &MnnModel,
    dec: &SpectralDecomposition,
    x: &SignalVector,
) -> Result<ForwardTrace> {
    if x.feature_count() != model.config.input_features() {
        return Err(Error::Contract(format!(
            "input has {} features, network expects {}",
            x.feature_count(),
            model.config.input_features()
        )));
    }
    if x.n() != dec.n() {
        return Err(Error::Contract("signal length does not match decomposition".into()));
    }
    let n = dec.n();
    let order = model.config.taps_per_filter;
    let table = exp_table(dec, order);
    let sigma = model.config.nonlinearity;

    let mut spectral_inputs = Vec::with_capacity(model.layers.len());
    let mut preactivations = Vec::with_capacity(model.layers.len());
    let mut features = Vec::with_capacity(model.layers.len());
    let mut current = x.values().clone();
    for bank in &model.layers {
        let spectral_in = dec.eigenvectors().transpose() * &current;
        // yhat = sum_k E_k .* (xhat H_k^T), accumulated over taps.
        let mut spectral_out = DMatrix::zeros(n, bank.out_features());
        for k in 0..order {
            let mixed = &spectral_in * bank.taps[k].transpose();
            for p in 0..bank.out_features() {
                for i in 0..n {
                    spectral_out[(i, p)] += table[(i, k)] * mixed[(i, p)];
                }
            }
        }
        let pre = dec.eigenvectors() * &spectral_out;
        let act = pre.map(|v| sigma.apply(v));
        spectral_inputs.push(spectral_in);
        preactivations.push(pre);
        current = act.clone();
        features.push(act);
    }
    let last = features.last().unwrap();
    let pooled = DVector::from_iterator(
        last.ncols(),
        (0..last.ncols()).map(|p| last.column(p).mean()),
    );
    let logit = model.readout_weights.dot(&pooled) + model.readout_bias;
    Ok(ForwardTrace {
        spectral_inputs,
        preactivations,
        features,
        exp_table: table,
        pooled,
        logit,
    })
}

/// Run the network: per layer x_l = sigma(sum_q h^{pq}(L) x_{l-1}^q), then
/// logit = w . mean_nodes(x_L) + b.
pub fn forward(
    model: &MnnModel,
    dec: &SpectralDecomposition,
    x: &SignalVector,
) -> Result<ForwardOutput> {
    let trace = forward_trace(model, dec, x)?;
    Ok(ForwardOutput {
        layer_features: trace.features,
        pooled: trace.pooled,
        logit: trace.logit,
    })
}

/// A classification sample: per-cloud decomposition, input features, label.
#[derive(Clone)]
pub struct Sample {
    pub dec: Arc<SpectralDecomposition>,
    pub features: SignalVector,
    pub label: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{evaluate_signal, sample_manifold, ManifoldKind, SignalSpec};
    use crate::graph::{build_graph, laplacian, DenseOperator, OperatorKind};
    use crate::spectral::eigendecompose;
    use rand::Rng;

    fn sphere_setup(n: usize, seed: u64) -> (SpectralDecomposition, SignalVector) {
        let cloud = sample_manifold(ManifoldKind::Sphere2, n, seed).unwrap();
        let dec = eigendecompose(
            &laplacian(&build_graph(&cloud, 1.0, None, None).unwrap()).unwrap(),
        )
        .unwrap();
        let x = evaluate_signal(&cloud, &SignalSpec::Coordinates).unwrap();
        (dec, x)
    }

    #[test]
    fn init_is_deterministic_and_shaped() {
        let config = MnnConfig::new(vec![3, 4, 1], 5, Nonlinearity::Relu).unwrap();
        let a = init_model(&config, 9).unwrap();
        let b = init_model(&config, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers()[0].out_features(), 4);
        assert_eq!(a.layers()[0].in_features(), 3);
        assert_eq!(a.layers()[1].out_features(), 1);
        assert_eq!(a.layers()[1].in_features(), 4);
        assert_eq!(a.layers()[0].order(), 5);
        assert_eq!(a.param_count(), 4 * 3 * 5 + 1 * 4 * 5 + 1 + 1);
        let c = init_model(&config, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_taps_have_zero_mean() {
        // Monte-Carlo over many draws: mean within 3 standard errors.
        let config = MnnConfig::new(vec![3, 4, 1], 5, Nonlinearity::Relu).unwrap();
        let mut taps = Vec::new();
        for seed in 0..15 {
            let m = init_model(&config, seed).unwrap();
            for bank in m.layers() {
                for k in 0..bank.order() {
                    taps.extend(bank.tap_matrix(k).iter().copied());
                }
            }
        }
        // Bound differs per layer; normalize each draw by its bound first.
        let mut normalized = Vec::new();
        for seed in 0..15 {
            let m = init_model(&config, seed).unwrap();
            for bank in m.layers() {
                let bound = 1.0 / (bank.order() as f64 * bank.in_features() as f64);
                for k in 0..bank.order() {
                    normalized.extend(bank.tap_matrix(k).iter().map(|t| t / bound));
                }
            }
        }
        assert!(normalized.len() >= 1000);
        let mean = normalized.iter().sum::<f64>() / normalized.len() as f64;
        // Uniform on [-1, 1]: sigma = 1/sqrt(3).
        let se = (1.0 / 3.0f64).sqrt() / (normalized.len() as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
        assert!(!taps.is_empty());
    }

    #[test]
    fn zero_input_gives_zero_logit() {
        let (dec, _) = sphere_setup(12, 1);
        let config = MnnConfig::new(vec![2, 3, 2], 4, Nonlinearity::Relu).unwrap();
        let model = init_model(&config, 3).unwrap();
        let x = SignalVector::new(DMatrix::from_element(12, 2, 0.0).add_scalar(0.0)).unwrap();
        let out = forward(&model, &dec, &x).unwrap();
        assert_eq!(out.logit, 0.0);
        assert!(out.layer_features.last().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_bank_with_relu_passes_nonnegative_input() {
        let (dec, _) = sphere_setup(10, 2);
        let config = MnnConfig::new(vec![1, 1], 3, Nonlinearity::Relu).unwrap();
        let mut model = init_model(&config, 0).unwrap();
        let identity = FilterCoefficients::new(vec![1.0, 0.0, 0.0]).unwrap();
        model.layers_mut()[0].set_filter(0, 0, &identity).unwrap();
        let x = SignalVector::new(DMatrix::from_fn(10, 1, |i, _| 0.1 + i as f64 * 0.05)).unwrap();
        let out = forward(&model, &dec, &x).unwrap();
        assert!((out.layer_features[0].column(0) - x.values().column(0)).norm() < 1e-10);
    }

    #[test]
    fn single_node_network_matches_scalar_pipeline() {
        // n = 1 with L = [0]: every diffusion power is the identity scalar,
        // so the network collapses to nested affine maps and sigma.
        let op = DenseOperator::new(DMatrix::from_element(1, 1, 0.0), OperatorKind::Laplacian, None)
            .unwrap();
        let dec = eigendecompose(&op).unwrap();
        let config = MnnConfig::new(vec![1, 2, 1], 2, Nonlinearity::TanhNormalized).unwrap();
        let model = init_model(&config, 5).unwrap();
        let x0 = 0.37;
        let x = SignalVector::new(DMatrix::from_element(1, 1, x0)).unwrap();
        let out = forward(&model, &dec, &x).unwrap();

        // Hand-rolled scalar pipeline.
        let bank0 = &model.layers()[0];
        let h10 = bank0.filter(0, 0).taps().iter().sum::<f64>() * x0;
        let h11 = bank0.filter(1, 0).taps().iter().sum::<f64>() * x0;
        let (a0, a1) = (h10.tanh(), h11.tanh());
        let bank1 = &model.layers()[1];
        let y = bank1.filter(0, 0).taps().iter().sum::<f64>() * a0
            + bank1.filter(0, 1).taps().iter().sum::<f64>() * a1;
        let pooled = y.tanh();
        let logit = model.readout_weights()[0] * pooled + model.readout_bias();
        assert!((out.logit - logit).abs() < 1e-12, "{} vs {logit}", out.logit);
    }

    #[test]
    fn nonlinearities_are_normalized_lipschitz() {
        let mut rng = crate::rng::stream(3, &[50]);
        for sigma in [Nonlinearity::Relu, Nonlinearity::Abs, Nonlinearity::TanhNormalized] {
            assert_eq!(sigma.apply(0.0), 0.0);
            for _ in 0..100_000 {
                let a = rng.gen_range(-5.0..5.0);
                let b = rng.gen_range(-5.0..5.0);
                assert!((sigma.apply(a) - sigma.apply(b)).abs() <= (a - b).abs() + 1e-15);
            }
        }
    }

    #[test]
    fn forward_is_permutation_equivariant() {
        let n = 14;
        let cloud = sample_manifold(ManifoldKind::Sphere2, n, 7).unwrap();
        let lap = laplacian(&build_graph(&cloud, 1.0, None, None).unwrap()).unwrap();
        let dec = eigendecompose(&lap).unwrap();
        let x = evaluate_signal(&cloud, &SignalSpec::Coordinates).unwrap();
        let config = MnnConfig::new(vec![3, 4, 2], 3, Nonlinearity::Relu).unwrap();
        let model = init_model(&config, 11).unwrap();
        let out = forward(&model, &dec, &x).unwrap();

        // Relabel the nodes with a fixed permutation.
        let mut perm: Vec<usize> = (0..n).collect();
        perm.rotate_left(5);
        perm.swap(0, 3);
        let mut pm = DMatrix::zeros(n, n);
        for (i, &j) in perm.iter().enumerate() {
            pm[(i, j)] = 1.0;
        }
        let lap_p = DenseOperator::new(
            &pm * lap.matrix() * pm.transpose(),
            OperatorKind::Laplacian,
            None,
        )
        .unwrap();
        let dec_p = eigendecompose(&lap_p).unwrap();
        let x_p = SignalVector::new(&pm * x.values()).unwrap();
        let out_p = forward(&model, &dec_p, &x_p).unwrap();
        assert!((out_p.logit - out.logit).abs() < 1e-9);
        let permuted_features = &pm * out.layer_features.last().unwrap();
        assert!((out_p.layer_features.last().unwrap() - permuted_features).norm() < 1e-9);
    }

    #[test]
    fn forward_shape_mismatch_is_contract_error() {
        let (dec, x) = sphere_setup(12, 3);
        let config = MnnConfig::new(vec![2, 2], 3, Nonlinearity::Relu).unwrap();
        let model = init_model(&config, 0).unwrap();
        assert!(matches!(forward(&model, &dec, &x), Err(Error::Contract(_))));
    }

    #[test]
    fn flatten_roundtrip() {
        let config = MnnConfig::new(vec![2, 3, 1], 4, Nonlinearity::Abs).unwrap();
        let model = init_model(&config, 21).unwrap();
        let flat = model.flatten();
        assert_eq!(flat.len(), model.param_count());
        let mut other = init_model(&config, 22).unwrap();
        other.assign_flat(&flat).unwrap();
        assert_eq!(other.layers(), model.layers());
        assert_eq!(other.readout_weights(), model.readout_weights());
        assert_eq!(other.readout_bias(), model.readout_bias());
    }
}
