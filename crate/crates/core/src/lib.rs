//! Knowledge-graph aided class-incremental classification at desk scale.
//!
//! A [`KnowledgeGraph`] holds the commonsense facts. Each task reserves
//! exclusive relation paths for its classes in a [`TaskSubgraph`]; at test
//! time the triplets found in generated text vote for a head class, which is
//! prepended to the text before cosine classification.

pub mod generator_sim;
pub mod graph_inference;
pub mod harness;
pub mod relation_text;
pub mod synth;
pub mod task_graph;
pub mod text_encoder;
pub mod triple_store;

pub use generator_sim::{GeneratorConfig, GeneratorMode, Simulator};
pub use graph_inference::{CandidateSet, ClassText, InferenceEngine};
pub use relation_text::{parse_triplets, render_training_text, ParsedTriplet, RelationLexicon};
pub use task_graph::{RelationPath, TaskSubgraph};
pub use text_encoder::{HashingEncoder, TextEncoder};
pub use triple_store::{EntityId, KnowledgeGraph, RelationId};
