//! Desk-scale referring-segmentation lab.
//!
//! The crate generates synthetic attribute-rich tabletop scenes, pretrains
//! a small contrastive dual encoder on them, trains a FiLM-conditioned
//! hierarchical segmentation decoder on the frozen encoder's intermediate
//! features, simulates an open-set detector for hybrid mask selection, and
//! evaluates the lot with attribute-stratified metrics. Everything is
//! deterministic given a master seed, and every numeric kernel is generic
//! over the scalar type (see [`scalar::Scalar`]).
//!
//! Module tour, roughly bottom-up:
//!
//! * [`scalar`], [`rng`] — float abstraction and seeded stream derivation.
//! * [`raster`], [`io`] — images, masks, and their codecs; the checkpoint
//!   container format.
//! * [`nn`] — hand-written layers with forward/backward and an optimizer.
//! * [`scenegen`] — scenes, the query grammar, minimal referring queries,
//!   dataset assembly and persistence.
//! * [`dualenc`] — tokenizer, the two towers, contrastive pretraining.
//! * [`decoder`] — the hierarchical fusion decoder and its mask head.
//! * [`train`] — losses, schedule, and the two training loops.
//! * [`detector`] — the simulated open-set detector and hybrid selection.
//! * [`evalkit`] — metrics, the attribute extractor, report emission.
//! * [`config`], [`accept`] — run configuration and the acceptance
//!   pipeline shared by the CLI and the integration tests.

pub mod accept;
pub mod config;
pub mod decoder;
pub mod detector;
pub mod dualenc;
pub mod evalkit;
pub mod io;
pub mod nn;
pub mod raster;
pub mod rng;
pub mod scalar;
pub mod scenegen;
pub mod train;

pub use scalar::Scalar;

/// Default working precision for training and inference.
pub type Real = f32;

/// Precision used by the finite-difference gradient checks.
pub type CheckReal = f64;
