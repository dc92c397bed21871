//! Weighted squared-error objective, its analytic gradients, and plain
//! mini-batch gradient descent over the dense layers.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{relu, RewardModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Seeds both initialization and shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-3,
            epochs: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Loss after an epoch; epoch 0 is the initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// The weighted objective over the whole dataset.
    pub loss: f64,
    /// Unweighted mean squared error over the whole dataset.
    pub mse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: RewardModel,
    pub history: Vec<EpochLoss>,
}

impl TrainReport {
    pub fn initial(&self) -> EpochLoss {
        self.history[0]
    }

    pub fn last(&self) -> EpochLoss {
        *self.history.last().expect("history has the initial row")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,loss,mse")?;
        for h in &self.history {
            writeln!(out, "{},{},{}", h.epoch, h.loss, h.mse)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_inputs(model: &RewardModel, x: &ArrayView2<f64>, t: &ArrayView1<f64>, w: &ArrayView1<f64>) {
    assert_eq!(x.ncols(), model.input_dim(), "input width");
    assert_eq!(x.nrows(), t.len(), "targets");
    assert_eq!(x.nrows(), w.len(), "weights");
}

/// `Σ wᵢ (f(xᵢ) − tᵢ)² / Σ wᵢ`.
pub fn weighted_loss(
    model: &RewardModel,
    x: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    weights: ArrayView1<f64>,
) -> f64 {
    check_inputs(model, &x, &targets, &weights);
    let residual = model.forward(x) - targets;
    (&residual * &residual * weights).sum() / weights.sum()
}

/// The weighted loss and its gradient with respect to every parameter.
pub fn loss_and_gradients(
    model: &RewardModel,
    x: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    weights: ArrayView1<f64>,
) -> (f64, Gradients) {
    check_inputs(model, &x, &targets, &weights);
    let total = weights.sum();
    let zs = model.pre_activations(x);
    let layers = model.num_layers();
    let residual = zs[layers - 1].column(0).to_owned() - targets;
    let loss = (&residual * &residual * weights).sum() / total;

    let mut delta: Array2<f64> = (2.0 * &residual * weights / total).insert_axis(Axis(1));
    let mut gw = vec![Array2::zeros((0, 0)); layers];
    let mut gb = vec![Array1::zeros(0); layers];
    for l in (0..layers).rev() {
        let input = if l == 0 { x.to_owned() } else { zs[l - 1].mapv(relu) };
        gw[l] = input.t().dot(&delta);
        gb[l] = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut back = delta.dot(&model.weights()[l].t());
            back.zip_mut_with(&zs[l - 1], |g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = back;
        }
    }
    (
        loss,
        Gradients {
            weights: gw,
            biases: gb,
        },
    )
}

fn epoch_loss(
    model: &RewardModel,
    epoch: usize,
    x: ArrayView2<f64>,
    t: ArrayView1<f64>,
    w: ArrayView1<f64>,
) -> Result<EpochLoss> {
    let residual = model.forward(x) - t;
    let sq = &residual * &residual;
    let loss = (&sq * &w).sum() / w.sum();
    let mse = sq.mean().unwrap_or(0.0);
    if !loss.is_finite() || !mse.is_finite() {
        return Err(Error::NumericalDivergence { epoch, loss });
    }
    Ok(EpochLoss { epoch, loss, mse })
}

/// Runs mini-batch gradient descent from `model` and returns the trained
/// parameters with the loss history. Each step follows the gradient of the
/// batch's weighted loss.
pub fn train_features(
    mut model: RewardModel,
    x: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    weights: ArrayView1<f64>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if x.nrows() == 0 {
        return Err(Error::precondition("training set is empty"));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(Error::precondition("batch size and learning rate must be positive"));
    }
    if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::precondition("example weights must be positive"));
    }
    check_inputs(&model, &x, &targets, &weights);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = vec![epoch_loss(&model, 0, x, targets, weights)?];
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), batch);
            let bt = targets.select(Axis(0), batch);
            let bw = weights.select(Axis(0), batch);
            let (loss, grads) = loss_and_gradients(&model, bx.view(), bt.view(), bw.view());
            if !loss.is_finite() {
                return Err(Error::NumericalDivergence { epoch, loss });
            }
            for (w, g) in model.weights_mut().iter_mut().zip(&grads.weights) {
                w.scaled_add(-cfg.learning_rate, g);
            }
            for (b, g) in model.biases_mut().iter_mut().zip(&grads.biases) {
                b.scaled_add(-cfg.learning_rate, g);
            }
        }
        let row = epoch_loss(&model, epoch, x, targets, weights)?;
        log::debug!("epoch {epoch}: loss {:.6} mse {:.6}", row.loss, row.mse);
        history.push(row);
    }
    Ok(TrainReport { model, history })
}
