//! Semantic specialization of frozen contextual embeddings for
//! knowledge-based word sense disambiguation.
//!
//! Sense and context embeddings are passed through two distance-bounded
//! residual maps that are trained with a contrastive Attract-Repel loss over
//! lexical relations and a self-training loss over unlabeled contexts.
//! Senses are then predicted by cosine nearest neighbour, optionally refined
//! by coarse-class reranking.
//!
//! Module map:
//!
//! - [`store`]: binary embedding tables (`.vecs` + `.keys`)
//! - [`lexicon`]: sense inventory, relation sets and word instances
//! - [`net`]: residual maps, analytic backward pass and checkpoints
//! - [`objectives`]: losses, gradients and minibatch sampling
//! - [`trainer`]: Adam optimisation loop and sweeps
//! - [`engine`]: nearest-neighbour inference and the try-again reranker
//! - [`evaluation`]: micro-F1 scoring and similarity diagnostics
//! - [`synthetic`]: seeded toy universes for tests and demos

pub mod config;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod lexicon;
pub mod net;
pub mod objectives;
pub mod store;
pub mod synthetic;
pub mod trainer;

pub use config::{Toggles, TrainConfig};
pub use engine::{Engine, Prediction};
pub use error::{Error, Result};
pub use evaluation::{EvalReport, MarginDistribution, SimilarityCharacteristics};
pub use lexicon::{Dataset, Lexicon, Pos, SenseId, SenseRecord, Subset, WordInstance};
pub use net::{ResidualMap, SpecializationNet};
pub use store::EmbeddingTable;
pub use trainer::{train, TrainData};
