//! Reverse-SDE sampling with classifier guidance over frame sequences.
//!
//! The modelling domain is a sequence of `F` frames, each a `D`-channel
//! vector. Per-frame class labels come from a token sequence expanded by
//! durations. Data follow a frame-independent Gaussian mixture, so exact
//! scores, class posteriors and their gradients are available as oracles
//! next to the trained networks.

pub mod checkpoint;
pub mod classifier;
pub mod diagnostics;
pub mod error;
pub mod frame;
pub mod inpaint;
pub mod labels;
pub mod mixture;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod sampler;
pub mod schedule;
pub mod score_model;

pub use classifier::{ClassifierNetwork, LabeledFrames};
pub use error::{Error, Result};
pub use frame::FrameMatrix;
pub use labels::{expand_durations, FrameLabels, TokenSequence};
pub use mixture::{ConditionalOracle, MixtureOracle, MixtureSpec};
pub use model::{ClassifierGrad, FramePosterior, ScoreFn};
pub use sampler::{GuidanceConfig, GuidanceMode, NormScope};
pub use schedule::NoiseSchedule;
pub use score_model::ScoreNetwork;
