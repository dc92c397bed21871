//! A planted regression problem for exercising the trainer without any
//! model or network access.
//!
//! Each example pairs a sub-task vector `q` with an agent vector `d` and is
//! labelled `clamp(round(8 · max(0, cos(q, d))), 0, 8)`. Agent vectors are
//! random unit vectors; every sub-task is drawn near one "home" agent
//! (cosine uniform in `[min_cos, 1]`) and then paired with a uniformly chosen
//! agent, so targets cover the whole 0..=8 range.

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::embed::cosine;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub examples: usize,
    /// Width of each half of the input.
    pub dim: usize,
    pub agents: usize,
    pub min_cos: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            examples: 2000,
            dim: 384,
            agents: 4,
            min_cos: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Planted {
    /// `examples × 2·dim`: sub-task vector then agent vector.
    pub features: Array2<f64>,
    pub targets: Array1<f64>,
    /// `agents × dim` unit rows.
    pub agent_vectors: Array2<f64>,
    /// Which agent each example is paired with.
    pub paired_agent: Vec<usize>,
}

/// The planted label for a pair of vectors.
pub fn planted_score(q: ArrayView1<f64>, d: ArrayView1<f64>) -> f64 {
    let c = cosine(q.as_slice().unwrap(), d.as_slice().unwrap());
    (8.0 * c.max(0.0)).round().clamp(0.0, 8.0)
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Array1<f64> {
    let v: Array1<f64> = Array1::from_shape_fn(dim, |_| StandardNormal.sample(rng));
    let n = v.dot(&v).sqrt();
    v / n
}

pub fn planted_dataset(cfg: &PlantedConfig) -> Planted {
    assert!(cfg.dim >= 2 && cfg.agents >= 1);
    assert!((-1.0..=1.0).contains(&cfg.min_cos));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agent_vectors = Array2::zeros((cfg.agents, cfg.dim));
    for mut row in agent_vectors.rows_mut() {
        row.assign(&unit_gaussian(&mut rng, cfg.dim));
    }
    let mut features = Array2::zeros((cfg.examples, 2 * cfg.dim));
    let mut targets = Array1::zeros(cfg.examples);
    let mut paired_agent = Vec::with_capacity(cfg.examples);
    for i in 0..cfg.examples {
        let home = agent_vectors.row(rng.random_range(0..cfg.agents)).to_owned();
        let c: f64 = rng.random_range(cfg.min_cos..=1.0);
        let mut u = unit_gaussian(&mut rng, cfg.dim);
        u = &u - &(&home * u.dot(&home));
        let u = &u / u.dot(&u).sqrt();
        let q = &home * c + &u * (1.0 - c * c).max(0.0).sqrt();
        let j = rng.random_range(0..cfg.agents);
        let d = agent_vectors.row(j);
        targets[i] = planted_score(q.view(), d);
        features.slice_mut(s![i, ..cfg.dim]).assign(&q);
        features.slice_mut(s![i, cfg.dim..]).assign(&d);
        paired_agent.push(j);
    }
    Planted {
        features,
        targets,
        agent_vectors,
        paired_agent,
    }
}
