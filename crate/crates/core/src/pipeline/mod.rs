//! Transcript-to-frames pipeline: corpus generation, duration prediction,
//! guided synthesis and token error rate evaluation.

pub mod corpus;
pub mod duration;
pub mod synth;

pub use corpus::{generate_corpus, generate_sentences, CorpusExample, CorpusParams, DurationLaw, ToyCorpus};
pub use duration::{train_duration, DurationModel, DurationPredictor, FixedDuration};
pub use synth::{cer, decode_frames, eval_cer, synthesize, CerReport, ModelStack, Synthesis};
