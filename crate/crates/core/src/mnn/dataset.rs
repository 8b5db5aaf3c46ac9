//! Synthetic binary classification stand-in: spheres (label 1) against tori
//! (label 0), with random rigid rotations and mild scale jitter, coordinates
//! as features.

use super::Sample;
use crate::error::Result;
use crate::geometry::{
    evaluate_signal, random_rotation3, sample_manifold, ManifoldKind, PointCloud, SignalSpec,
};
use crate::graph::{build_graph, laplacian};
use crate::rng::{self, tags};
use crate::spectral::eigendecompose;
use rand::Rng;
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub clouds: usize,
    pub points_per_cloud: usize,
    pub alpha_kernel: f64,
    pub scale_jitter: (f64, f64),
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            clouds: 260,
            points_per_cloud: 300,
            alpha_kernel: 1.0,
            scale_jitter: (0.9, 1.1),
            seed: 0,
        }
    }
}

/// A sample plus the cloud it came from, kept so deformation experiments can
/// re-deform and rebuild the graph.
#[derive(Clone)]
pub struct LabeledSample {
    pub cloud: PointCloud,
    pub sample: Sample,
}

/// Build `cfg.clouds` labeled clouds, alternating sphere (label 1) and torus
/// (label 0). Deterministic in `cfg.seed`; per-cloud work is parallel with
/// index-derived streams.
pub fn build_sphere_torus_dataset(cfg: &DatasetConfig) -> Result<Vec<LabeledSample>> {
    let indices: Vec<usize> = (0..cfg.clouds).collect();
    indices
        .par_iter()
        .map(|&i| {
            let label = i % 2 == 0;
            let kind = if label {
                ManifoldKind::Sphere2
            } else {
                ManifoldKind::Torus2
            };
            let mut rng = rng::stream(cfg.seed, &[tags::DATASET, i as u64]);
            let cloud_seed = rng.gen::<u64>();
            let base = sample_manifold(kind, cfg.points_per_cloud, cloud_seed)?;
            let rotation = random_rotation3(&mut rng);
            let scale = rng.gen_range(cfg.scale_jitter.0..=cfg.scale_jitter.1);
            let cloud = base.transformed(&rotation, scale)?;
            build_labeled_sample(cloud, label, cfg.alpha_kernel)
        })
        .collect()
}

/// Graph, Laplacian, decomposition and coordinate features for one cloud.
pub fn build_labeled_sample(
    cloud: PointCloud,
    label: bool,
    alpha_kernel: f64,
) -> Result<LabeledSample> {
    let lap = laplacian(&build_graph(&cloud, alpha_kernel, None, None)?)?;
    let dec = Arc::new(eigendecompose(&lap)?);
    let features = evaluate_signal(&cloud, &SignalSpec::Coordinates)?;
    Ok(LabeledSample {
        cloud,
        sample: Sample {
            dec,
            features,
            label,
        },
    })
}
