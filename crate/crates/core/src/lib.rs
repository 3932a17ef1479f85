//! Online deterministic annealing.
//!
//! A progressive prototype learner for clustering and classification under
//! Bregman divergences. Prototypes start as a single codevector at high
//! temperature; as the temperature is lowered, perturbed pairs of
//! prototypes separate wherever the data supports a new cluster, so the
//! model grows only as far as the temperature schedule asks it to.
//!
//! The same engine serves as an adaptive state-action aggregator for
//! tabular Q-learning on a slower timescale (see [`rl`]), exercised on the
//! cart-pole simulator in [`envs`].

pub mod baselines;
pub mod diagnostic;
pub mod divergence;
pub mod envs;
pub mod error;
pub mod model;
pub mod rl;
pub mod rng;
pub mod snapshot;
pub mod tasks;
pub mod train;

pub use divergence::{Divergence, DivergenceKind};
pub use error::{OdaError, Result};
pub use model::{
    Cooling, LevelRecord, Observation, OdaModel, Prototype, ResizeEvent, Schedule, Step,
    StopCriteria, StopReason, Threshold,
};
pub use snapshot::ModelSnapshot;
pub use train::{train, train_with, TrainOutcome};
