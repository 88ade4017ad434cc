use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::SparseGraph;
use crate::scalar::Real;

/// Planted-partition parameters. Node `i` belongs to class `i mod classes`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub n: usize,
    pub classes: usize,
    /// Edge probability inside a class.
    pub p_in: f64,
    /// Edge probability across classes.
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of the i.i.d. Gaussian noise added to class means.
    pub feature_noise: f64,
    pub seed: u64,
}

/// Sample a block-model graph. Features are a per-class mean drawn from
/// `N(0, I)` plus `feature_noise * N(0, I)` per node.
pub fn generate_sbm<T: Real>(p: &SbmParams) -> Result<Dataset<T>> {
    for (name, v) in [("p_in", p.p_in), ("p_out", p.p_out)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Config {
                field: name.into(),
                msg: format!("probability {v} outside [0, 1]"),
            });
        }
    }
    if p.classes == 0 || p.n == 0 || p.feature_noise < 0.0 {
        return Err(Error::Config {
            field: "sbm".into(),
            msg: "need n > 0, classes > 0 and non-negative noise".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let labels: Vec<usize> = (0..p.n).map(|i| i % p.classes).collect();
    let mut edges = Vec::new();
    for u in 0..p.n {
        for v in u + 1..p.n {
            let prob = if labels[u] == labels[v] { p.p_in } else { p.p_out };
            if prob > 0.0 && rng.random::<f64>() < prob {
                edges.push((u, v));
            }
        }
    }
    let means = DenseMatrix::<f64>::from_fn(p.classes, p.feature_dim, |_, _| rng.sample(StandardNormal));
    let features = DenseMatrix::from_fn(p.n, p.feature_dim, |i, j| {
        let noise: f64 = rng.sample(StandardNormal);
        T::lit(means.get(labels[i], j) + p.feature_noise * noise)
    });
    let graph = SparseGraph::from_edges(&edges, p.n)?;
    let name = format!("sbm-n{}-c{}-pin{}-pout{}-s{}", p.n, p.classes, p.p_in, p.p_out, p.seed);
    Dataset::new(name, graph, features, labels, p.classes)
}
