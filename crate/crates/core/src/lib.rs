//! Aggregation of categorical answers from heterogeneous agents.
//!
//! The crate covers zero-order (majority vote), first-order (optimal logit
//! weights, ability weights) and second-order (surprisingly popular and its
//! inverse) aggregation rules, label-free estimation of agent accuracies,
//! generative simulators for the conditional-independence and difficulty
//! mixture models, and brute-force Bayes oracles used to verify the rules.

pub mod aggregate;
pub mod error;
pub mod estimate;
pub mod io;
pub mod oracle;
pub mod rng;
pub mod secondorder;
pub mod shuffle;
pub mod sigma;
pub mod simulate;
pub mod types;
pub mod verify;

pub use aggregate::{AdvantageVector, Rule, TiePolicy};
pub use error::{Error, Result};
pub use secondorder::SecondOrderMatrix;
pub use shuffle::ShuffleMap;
pub use types::{AgentProfile, Clamp, Label, LabelSpace, PredictionMatrix};
