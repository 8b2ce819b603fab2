//! Continual-learning laboratory for mean-field Bayesian neural networks.
//!
//! The crate is organized around a streaming benchmark: fully connected
//! networks (deterministic or mean-field Gaussian) are trained one example at
//! a time by a pluggable update rule, evaluated periodically on every task
//! seen so far, and scored for predictive uncertainty. The centerpiece is the
//! MESU rule (metaplasticity from synaptic uncertainty), where each weight's
//! posterior standard deviation scales its own learning rate and a memory
//! window `N` controls how fast old evidence is released back to the prior.
//!
//! Module map:
//! - [`tensor`], [`rng`], [`loss`]: dense row-major kernels, counter-based
//!   seeded randomness, and classification loss primitives.
//! - [`network`]: deterministic and mean-field MLPs with reparameterized
//!   forward passes and manual backpropagation.
//! - [`optim`]: the MESU / FOO-VB / Newton-form / BNN-SGD mean-field rules
//!   plus deterministic baselines (SGD, EWC Online, EWC Stream, SI).
//! - [`dynamics`]: closed-form standard-deviation dynamics, asymptotes, the
//!   alpha recurrence, and Hessian-diagonal estimation used to validate the
//!   optimizer against theory.
//! - [`uncertainty`]: total/aleatoric/epistemic decomposition and ROC-AUC
//!   scoring for out-of-distribution detection.
//! - [`data`]: IDX and feature-CSV ingestion, standardization, pixel
//!   permutations, and the batch-of-one stream iterator.
//! - [`harness`]: experiment configuration, the run loop, metrics files,
//!   checkpoints, and cross-run reports.

pub mod data;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod harness;
pub mod loss;
pub mod network;
pub mod optim;
pub mod rng;
pub mod tensor;
pub mod uncertainty;

pub use error::{CoreError, Result};
pub use rng::RngStream;
pub use tensor::Tensor2;
