//! Relational causal inference engine.
//!
//! The pipeline: declare a relational schema and load an instance
//! ([`schema`], [`instance`]), parse causal rules and queries ([`lang`]),
//! ground the rules into a causal graph ([`ground`]), detect confounding
//! covariates by d-separation ([`analysis`]), flatten everything into a
//! per-unit table via set embeddings ([`embed`], [`unit_table`]), and
//! estimate treatment / isolated / relational / overall effects
//! ([`estimate`]). [`synth`] generates benchmark data with known ground
//! truth.

pub mod analysis;
pub mod embed;
pub mod error;
pub mod estimate;
pub mod ground;
pub mod instance;
pub mod lang;
pub(crate) mod linalg;
pub mod pipeline;
pub mod schema;
pub mod synth;
pub mod unit_table;
pub mod value;

pub use error::CarlError;
