//! Conditional restricted Boltzmann machines that reproduce the
//! conditional outcome statistics of two-spin measurements, with an exact
//! Born-rule reference, trainers, and CHSH / no-signaling diagnostics.

pub mod crbm;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod oracle;
pub mod presets;
pub mod rbm;
pub mod rng;
pub mod training;

pub use crbm::{ConditionVector, ConditioningLayout, CrbmParams, LabeledState};
pub use error::{Error, Result};
pub use oracle::{ChshSettings, DetectorAngle, Outcome, OutcomeDistribution, TwoQubitState};
pub use presets::Preset;
pub use rbm::{RbmParams, Temperature};
pub use training::{TrainingConfig, TrainingMode};
