//! Post-training fairness repair for feed-forward ReLU classifiers.
//!
//! A repair is an inference-time dropout mask over the hidden neurons. The
//! crate searches the masks whose size lies in `[n_l, n_u]` with simulated
//! annealing or a random walk, minimizing the validation equalized-odds
//! difference plus a penalty whenever F1 falls below a fraction of the
//! unmasked model's F1.
//!
//! Modules, bottom up: [`dataset`] (CSV encoding, splits, synthetic data),
//! [`model`] (network, masked inference, trainer), [`metrics`],
//! [`search`], [`oracle`] (exhaustive ground truth), and [`experiment`]
//! (the pipelines behind the command-line tool).

pub mod dataset;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod prng;
pub mod search;
mod state;

pub use error::{Error, Result};
pub use exec::Execution;
pub use state::DropoutState;
