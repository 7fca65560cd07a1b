//! A laboratory for studying compositional emergent communication between a
//! speaker and a listener agent playing a signalling game on a 4x4 grid.
//!
//! The speaker sees an instruction concept (verb, color, size, weight, shape)
//! and transmits a fixed number of discrete symbols over a narrow channel.
//! The listener sees the grid and the symbols, and has to walk to, push or
//! pull the target object among distractors. Both agents are trained
//! end-to-end with REINFORCE on a sparse 0/1 reward, optionally augmented
//! with two mutual-information intrinsic rewards: a discriminator-based
//! coverage bonus on the concept/message channel, and a per-step
//! message-influence bonus on the listener's action distribution.
//!
//! Crate layout:
//! - [`concepts`] — the instruction space, its grammar, and train/test splits
//! - [`gridworld`] — deterministic environment dynamics and observation encoding
//! - [`diffcore`] — the small reverse-mode autodiff substrate and optimizer
//! - [`speaker`] / [`listener`] — the two agents
//! - [`intrinsic`] — the coverage and influence rewards
//! - [`trainer`] — rollouts, REINFORCE updates, curriculum, evaluation
//! - [`topsim`] — the topographic-similarity compositionality metric
//! - [`config`] — run configuration and its flat text format
//! - [`metrics`] — the training CSV schema
//! - [`trajfmt`] — the line-oriented trajectory dump format

pub mod concepts;
pub mod config;
pub mod curriculum;
pub mod diffcore;
pub mod gridworld;
pub mod intrinsic;
pub mod listener;
pub mod metrics;
pub mod speaker;
pub mod topsim;
pub mod trainer;
pub mod trajfmt;
