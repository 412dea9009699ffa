//! Broad-phonetic-class guided speech enhancement (BPSE).
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`dsp`]: WAV I/O, STFT analysis/synthesis, log1p features, SNR mixing,
//!   and a synthetic labeled mini-corpus generator.
//! - [`bpc`]: phone inventories, knowledge-based manner/place partitions, and
//!   confusion-driven agglomerative clustering into broad phonetic classes.
//! - [`nnsub`]: a small double-precision neural substrate (tensors, reverse-mode
//!   autodiff, dense/conv/layernorm/causal-attention layers, Adam, gradient
//!   checking, checkpoints).
//! - [`phonetic`]: frame-level acoustic models producing phonetic
//!   posteriorgrams, their evaluation, and the autoencoder bottleneck that
//!   compresses posteriorgrams to 96-dim conditioning latents.
//! - [`enhance`]: the causal Transformer spectral-mapping enhancer and the
//!   waveform-to-waveform enhancement pipeline.
//! - [`metrics`]: STOI, SNR measurement, and report aggregation.

pub mod bpc;
pub mod dsp;
pub mod enhance;
pub mod metrics;
pub mod nnsub;
pub mod phonetic;
pub mod rng;
pub mod threads;
