//! Seeded synthetic citation-style benchmarks: a stochastic block model with
//! class-correlated bag-of-words features. Used by tests, the determinism
//! check and the edge-scaling measurement.

use manigraph_core::graph::Graph;
use manigraph_core::nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub c: usize,
    /// Vocabulary size (feature dimension).
    pub d: usize,
    /// Same-class edge probability.
    pub p_in: f64,
    /// Cross-class edge probability.
    pub p_out: f64,
    /// Words owned by each class.
    pub words_per_class: usize,
    /// Rate at which a node activates its class's words.
    pub word_on: f64,
    /// Background rate for all other words.
    pub word_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 120,
            c: 3,
            d: 48,
            p_in: 0.05,
            p_out: 0.005,
            words_per_class: 12,
            word_on: 0.35,
            word_noise: 0.02,
            seed: 7,
        }
    }
}

/// Deterministic stochastic-block-model dataset; classes are assigned
/// round-robin so every class is populated.
pub fn sbm_dataset(cfg: &SynthConfig) -> Dataset {
    assert!(cfg.c >= 2 && cfg.n >= 2 * cfg.c && cfg.d >= cfg.c, "degenerate synthetic config");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels: Vec<usize> = (0..cfg.n).map(|i| i % cfg.c).collect();

    let mut edges = Vec::new();
    for i in 0..cfg.n {
        for j in (i + 1)..cfg.n {
            let p = if labels[i] == labels[j] { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j, None));
            }
        }
    }
    let graph = Graph::from_edges(cfg.n, edges).expect("valid synthetic edges");

    let stride = cfg.d / cfg.c;
    let mut features = DMatrix::zeros(cfg.n, cfg.d);
    for i in 0..cfg.n {
        let base = labels[i] * stride;
        for j in 0..cfg.d {
            let active = j >= base && j < base + cfg.words_per_class.min(stride);
            let p = if active { cfg.word_on } else { cfg.word_noise };
            if rng.random::<f64>() < p {
                features[(i, j)] = 1.0;
            }
        }
    }

    let class_names = (0..cfg.c).map(|k| format!("class_{k}")).collect();
    Dataset {
        features,
        labels,
        graph,
        names: None,
        class_names,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig::default();
        let a = sbm_dataset(&cfg);
        let b = sbm_dataset(&cfg);
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn homophily_holds() {
        let ds = sbm_dataset(&SynthConfig { n: 300, ..SynthConfig::default() });
        let mut same = 0usize;
        let mut diff = 0usize;
        for (i, j, _) in ds.graph.adjacency().iter() {
            if i < j {
                if ds.labels[i] == ds.labels[j] {
                    same += 1;
                } else {
                    diff += 1;
                }
            }
        }
        assert!(same > 3 * diff, "same {same} diff {diff}");
    }
}
