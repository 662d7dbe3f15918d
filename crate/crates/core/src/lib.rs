//! Resource-aware audio-visual phoneme recognition.
//!
//! Acoustic deep bidirectional LSTMs over MFCC frames, CNN-(FC-)LSTM
//! lipreading networks over 120×120 mouth crops, and their concatenation or
//! attention-gated fusion, together with a MAC/FLOP/size cost model, the
//! training protocol (Adam, halving learning rate, early stopping), noise
//! injection at calibrated SNRs and a seeded synthetic audio-visual corpus.

pub mod error;
pub mod numerics;
pub mod corpus;
pub mod kv;
pub mod labels;
pub mod models;
pub mod resources;
pub mod layers;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
