//! Gated graph neural network classifier over code property graphs.
//!
//! Pipeline: node features (kind embedding plus mean token embedding,
//! projected), `propagation_steps` rounds of per-edge-type message passing
//! with a GRU update, a gated sum readout to `graph_embedding_size`, and a
//! logistic classifier.
//!
//! Training runs in two phases. Phase one trains encoder and classifier
//! end to end on binary cross-entropy. If SMOTE or representation learning
//! is enabled, phase two freezes the encoder, embeds the training set once,
//! and trains a head on those embeddings: SMOTE rebalances them each epoch,
//! and the representation head adds a triplet term on a learned projection.
//! Each phase stops early on validation F1 and restores its best epoch.

mod features;
mod network;
mod smote;
mod train;

pub use features::Vocabulary;
pub use network::{encode_graphs, representation_loss};
pub use smote::{downsample_majority, k_nearest, smote_resample, Smote, SyntheticPoint};
pub use train::{full_objective, train, EpochLog, Phase, PhaseSummary, StopReason, TrainingLog};

use crate::autodiff::{checkpoint, Tensor, TensorError};
use crate::cpg::{CodeGraph, EdgeType};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("empty graph")]
    EmptyGraph,
    #[error("empty input")]
    EmptyInput,
    #[error("training data contains a single class")]
    SingleClass,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub graph_embedding_size: usize,
    pub node_hidden_size: usize,
    pub token_embedding_size: usize,
    pub propagation_steps: usize,
    pub edge_types_used: BTreeSet<EdgeType>,
    pub use_smote: bool,
    pub use_representation_learning: bool,
    pub downsample_majority: bool,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_batches: usize,
    pub grad_accumulation_steps: usize,
    /// Epochs without validation improvement before a phase stops.
    pub patience: usize,
    pub seed: u64,
    pub smote_neighbors: usize,
    pub representation_size: usize,
    pub triplet_margin: f64,
    pub triplet_alpha: f64,
    /// Coefficient of the mean squared norm of projections.
    pub projection_l2: f64,
    pub threshold: f64,
    pub max_vocabulary: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            graph_embedding_size: 200,
            node_hidden_size: 128,
            token_embedding_size: 64,
            propagation_steps: 6,
            edge_types_used: EdgeType::ALL.into_iter().collect(),
            use_smote: true,
            use_representation_learning: true,
            downsample_majority: false,
            learning_rate: 1e-4,
            weight_decay: 1e-3,
            batch_size: 128,
            max_batches: 10_000,
            grad_accumulation_steps: 8,
            patience: 20,
            seed: 0,
            smote_neighbors: 5,
            representation_size: 128,
            triplet_margin: 0.5,
            triplet_alpha: 0.5,
            projection_l2: 1e-3,
            threshold: 0.5,
            max_vocabulary: 5000,
        }
    }
}

impl ModelConfig {
    /// Smaller network and faster schedule for single-core experiment runs.
    pub fn desk() -> Self {
        ModelConfig {
            node_hidden_size: 32,
            token_embedding_size: 32,
            propagation_steps: 4,
            representation_size: 64,
            learning_rate: 3e-3,
            batch_size: 32,
            grad_accumulation_steps: 1,
            max_batches: 2000,
            patience: 4,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("graph_embedding_size", self.graph_embedding_size),
            ("node_hidden_size", self.node_hidden_size),
            ("token_embedding_size", self.token_embedding_size),
            ("propagation_steps", self.propagation_steps),
            ("batch_size", self.batch_size),
            ("max_batches", self.max_batches),
            ("grad_accumulation_steps", self.grad_accumulation_steps),
            ("patience", self.patience),
            ("smote_neighbors", self.smote_neighbors),
            ("representation_size", self.representation_size),
            ("max_vocabulary", self.max_vocabulary),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if self.edge_types_used.is_empty() {
            return Err(ModelError::Config("edge_types_used must not be empty".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        for (name, v) in [
            ("weight_decay", self.weight_decay),
            ("triplet_margin", self.triplet_margin),
            ("triplet_alpha", self.triplet_alpha),
            ("projection_l2", self.projection_l2),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::Config(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ModelError::Config("threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Which head produces the final score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Head {
    /// Phase-one classifier on the graph embedding.
    Classifier,
    /// Phase-two linear classifier on frozen embeddings.
    Resampled,
    /// Phase-two projection plus classifier.
    Representation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub vocabulary: Vocabulary,
    pub head: Head,
    pub parameters: BTreeMap<String, Tensor>,
    pub log: TrainingLog,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vec<String>,
    head: Head,
    log: TrainingLog,
}

const MODEL_MAGIC: &[u8; 8] = b"VGMODEL1";

impl TrainedModel {
    /// Untrained parameters with zero classifier heads; every score is 0.5.
    pub fn initial(config: &ModelConfig, vocabulary: Vocabulary) -> Result<TrainedModel, ModelError> {
        config.validate()?;
        let parameters = network::init_params(config, vocabulary.len());
        Ok(TrainedModel {
            config: config.clone(),
            vocabulary,
            head: Head::Classifier,
            parameters,
            log: TrainingLog::default(),
        })
    }

    /// Probability of the vulnerable class for every graph.
    pub fn predict_batch(&self, graphs: &[CodeGraph]) -> Result<Vec<f64>, ModelError> {
        let encoded = graphs
            .iter()
            .map(|g| features::EncodedGraph::new(g, &self.vocabulary))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&features::EncodedGraph> = encoded.iter().collect();
        network::score(&self.parameters, &refs, &self.config, self.head)
    }

    pub fn predict(&self, g: &CodeGraph) -> Result<f64, ModelError> {
        Ok(self.predict_batch(std::slice::from_ref(g))?[0])
    }

    /// Graph embeddings from the encoder, one row per graph.
    pub fn embed(&self, graphs: &[CodeGraph]) -> Result<Tensor, ModelError> {
        encode_graphs(&self.parameters, graphs, &self.vocabulary, &self.config)
    }

    /// Magic, `u32` header length, JSON header (config, vocabulary, head,
    /// log), then the named-tensor container.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            vocabulary: self.vocabulary.tokens().to_vec(),
            head: self.head,
            log: self.log.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = MODEL_MAGIC.to_vec();
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&checkpoint::write_tensors(&self.parameters));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != MODEL_MAGIC {
            return Err(bad("bad magic"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let json = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header =
            serde_json::from_slice(json).map_err(|e| ModelError::Checkpoint(format!("header: {e}")))?;
        header.config.validate()?;
        let (parameters, used) = checkpoint::read_tensors(&bytes[12 + len..])?;
        if 12 + len + used != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let vocabulary = Vocabulary::from_tokens(header.vocabulary).map_err(|e| bad(&e))?;
        let expected = network::init_params(&header.config, vocabulary.len());
        for (name, t) in &expected {
            match parameters.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(ModelError::Checkpoint(format!(
                        "{name}: shape {:?}, expected {:?}",
                        p.shape(),
                        t.shape()
                    )))
                }
                None => return Err(ModelError::Checkpoint(format!("missing tensor {name}"))),
            }
        }
        Ok(TrainedModel {
            config: header.config,
            vocabulary,
            head: header.head,
            parameters,
            log: header.log,
        })
    }
}
