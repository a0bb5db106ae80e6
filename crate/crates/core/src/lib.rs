//! Computation of type-threshold functions over many sensors: source and
//! function models, description chains, their entropies, achievable rates
//! and a protocol simulator.

pub mod descriptions;
pub mod ensembles;
pub mod entropy;
pub mod error;
pub mod figures;
pub mod model;
pub mod oracle;
pub mod rates;
pub mod sim;

pub use descriptions::{a_partition, lemma_partition, ChainLaw, Partition, ShiftPolicy};
pub use entropy::{chain_entropy, EntropyBreakdown};
pub use error::{Error, Result};
pub use model::{FunctionKind, Label, Limits, SourceModel, TypeThresholdFunction};
pub use rates::{RateKind, RateReport};
pub use sim::{ProtocolTrace, SimConfig};
