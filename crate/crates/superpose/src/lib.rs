//! Quantum-superposition data augmentation for small training sets, with a
//! from-scratch 3-layer stacked LSTM classifier, per-class Gaussian HMMs,
//! dataset ingestion (MNIST IDX, WAV + MFCC), and a config-driven experiment
//! runner.

pub mod augment;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod hmm;
pub mod lstm;
pub mod numeric;
pub mod report;
pub mod rng;

pub use error::{Error, Result};
