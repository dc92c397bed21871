//! The reward regressor: a small fully connected network over the
//! concatenation of a sub-task embedding and an agent-description embedding.

use std::path::Path;
use std::sync::Arc;

use ndarray::{concatenate, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::embed::Embedder;
use crate::error::{Error, Result};
use crate::planner::Roster;

pub const PARAMS_VERSION: u32 = 1;

/// Layer widths: two 384-d embeddings in, two hidden layers, one score out.
pub const DEFAULT_SIZES: [usize; 4] = [768, 256, 64, 1];

/// Dense layers with rectifier activations between them and a linear output.
///
/// `weights[l]` has shape `(sizes[l], sizes[l + 1])`, so a batch `X` of row
/// vectors maps to `X · W + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    version: u32,
    sizes: Vec<usize>,
    seed: u64,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

impl RewardModel {
    /// He-normal weights, zero biases.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) || sizes[sizes.len() - 1] != 1 {
            return Err(Error::precondition(format!(
                "layer sizes must be positive and end in 1, got {sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| normal.sample(&mut rng)));
            biases.push(Array1::zeros(w[1]));
        }
        Ok(Self {
            version: PARAMS_VERSION,
            sizes: sizes.to_vec(),
            seed,
            weights,
            biases,
        })
    }

    pub fn standard(seed: u64) -> Self {
        Self::new(&DEFAULT_SIZES, seed).expect("default sizes are valid")
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Pre-activations of every layer for a batch; the last entry is the
    /// output column.
    pub(crate) fn pre_activations(&self, x: ArrayView2<f64>) -> Vec<Array2<f64>> {
        let mut zs = Vec::with_capacity(self.weights.len());
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(w) + b;
            if l + 1 < self.weights.len() {
                a = z.mapv(relu);
            }
            zs.push(z);
        }
        zs
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        assert_eq!(x.ncols(), self.input_dim(), "input width");
        self.pre_activations(x)
            .pop()
            .expect("at least one layer")
            .column(0)
            .to_owned()
    }

    pub fn forward_one(&self, x: ArrayView1<f64>) -> f64 {
        self.forward(x.insert_axis(Axis(0)))[0]
    }

    /// Scores a sub-task against an agent description: the sub-task
    /// embedding comes first in the input.
    pub fn predict(&self, embedder: &dyn Embedder, subtask: &str, agent_description: &str) -> Result<f64> {
        let q = embedder.embed(subtask)?;
        let d = embedder.embed(agent_description)?;
        if q.dim() + d.dim() != self.input_dim() {
            return Err(Error::EmbeddingUnavailable(format!(
                "model expects {} inputs, embeddings give {}",
                self.input_dim(),
                q.dim() + d.dim()
            )));
        }
        let x = concatenate![Axis(0), ArrayView1::from(q.as_slice()), ArrayView1::from(d.as_slice())];
        Ok(self.forward_one(x.view()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let model: RewardModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.version != PARAMS_VERSION {
            return Err(Error::precondition(format!(
                "unsupported params version {}",
                self.version
            )));
        }
        let layers = self.sizes.len().saturating_sub(1);
        if layers == 0 || self.weights.len() != layers || self.biases.len() != layers {
            return Err(Error::precondition("params layer count does not match sizes"));
        }
        for (l, w) in self.sizes.windows(2).enumerate() {
            if self.weights[l].dim() != (w[0], w[1]) || self.biases[l].len() != w[1] {
                return Err(Error::precondition(format!("layer {l} has the wrong shape")));
            }
        }
        if !self.is_finite() {
            return Err(Error::precondition("params contain non-finite values"));
        }
        Ok(())
    }
}

pub(crate) fn relu(v: f64) -> f64 {
    v.max(0.0)
}

/// Index of the first maximal score.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

/// A trained model bound to the embedder it was trained with.
#[derive(Clone)]
pub struct RewardPredictor {
    model: Arc<RewardModel>,
    embedder: Arc<dyn Embedder>,
}

impl RewardPredictor {
    pub fn new(model: Arc<RewardModel>, embedder: Arc<dyn Embedder>) -> Result<Self> {
        if 2 * embedder.dim() != model.input_dim() {
            return Err(Error::precondition(format!(
                "model expects {} inputs but the embedder yields {}-d vectors",
                model.input_dim(),
                embedder.dim()
            )));
        }
        Ok(Self { model, embedder })
    }

    pub fn model(&self) -> &RewardModel {
        &self.model
    }

    pub fn embedder(&self) -> &Arc<dyn Embedder> {
        &self.embedder
    }

    pub fn predict(&self, subtask: &str, agent_description: &str) -> Result<f64> {
        self.model.predict(self.embedder.as_ref(), subtask, agent_description)
    }

    /// One score per roster agent, in roster order.
    pub fn predict_all(&self, subtask: &str, roster: &Roster) -> Result<Vec<(String, f64)>> {
        let q = self.embedder.embed(subtask)?;
        let mut x = Array2::zeros((roster.len(), self.model.input_dim()));
        for (row, agent) in roster.iter().enumerate() {
            let d = self.embedder.embed(&agent.description)?;
            let mut r = x.row_mut(row);
            r.slice_mut(ndarray::s![..q.dim()])
                .assign(&ArrayView1::from(q.as_slice()));
            r.slice_mut(ndarray::s![q.dim()..])
                .assign(&ArrayView1::from(d.as_slice()));
        }
        let scores = self.model.forward(x.view());
        Ok(roster.iter().map(|a| a.name.clone()).zip(scores).collect())
    }
}
