//! Predicting how well an agent will answer a sub-task from embeddings
//! alone: embedding providers, judge scores, the regressor, its training
//! data and trainer.

pub mod dataset;
pub mod embed;
pub mod model;
pub mod score;
pub mod synthetic;
pub mod train;

pub use dataset::{
    build_dataset, candidate_agents, default_l, objective_weights, read_examples, train, write_examples, DatasetBuild,
    SubtaskRunner, TrainingExample,
};
pub use embed::{cosine, CachedEmbedder, Embedder, Embedding, HashEmbedder, EMBEDDING_DIM};
#[cfg(feature = "http")]
pub use embed::{HttpEmbedder, HttpEmbedderConfig};
pub use model::{argmax, RewardModel, RewardPredictor, DEFAULT_SIZES};
pub use score::{level_score, parse_summary, LlmScorer, TriScore};
pub use train::{loss_and_gradients, train_features, weighted_loss, EpochLoss, Gradients, TrainConfig, TrainReport};

/// Hidden-layer widths of the default regressor.
pub const DEFAULT_HIDDEN: [usize; 2] = [256, 64];
