//! Tabular reinforcement learning against a Yeelight-style smart bulb.
//!
//! The crate is organised around a small loop: an agent picks a bulb command,
//! the command goes over a newline-delimited JSON/TCP connection to a device
//! (usually the in-process simulator in [`bulb`]), the device answers, and the
//! environment layer condenses the observed device state into a coarse Markov
//! state and a reward. Everything above the socket is deterministic given a
//! seed, so whole experiments can be replayed byte-for-byte.
//!
//! Module map:
//! - [`protocol`]: message dictionary, wire codec, parameter sampling
//! - [`bulb`]: pure bulb state machine, rate limiter, TCP server, advertiser
//! - [`discover`]: passive UDP listener and active TCP subnet probe
//! - [`env`]: goal definitions, abstract state machine, reward shaping, the
//!   TCP-backed episode session
//! - [`agent`]: Q-tables, action selection, the four update rules, episode
//!   driver and replay
//! - [`metrics`]: per-episode and cumulative series, aggregation, CSV output
//! - [`harness`]: multi-run experiments, hyperparameter tuning, the optimal
//!   path oracle, heatmap export and cost reports

pub mod agent;
pub mod bulb;
pub mod discover;
pub mod env;
pub mod harness;
pub mod metrics;
pub mod protocol;
