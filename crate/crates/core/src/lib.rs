//! Simulation and exact-math toolkit for binary consensus and broadcast over
//! gossip networks, with and without a noisy binary symmetric channel.
//!
//! The crate is organised bottom-up:
//!
//! * [`opinion`]: opinion vectors, bias arithmetic and the seeded random streams
//!   every simulation draws from.
//! * [`channel`]: the binary symmetric channel.
//! * [`schedulers`]: who talks to whom in a round (PULL, PUSH, GOSSIP, general
//!   variants, population scheduler) and infection tracking.
//! * [`protocols`]: k-Majority dynamics, the two-phase Majority Protocol,
//!   NoisyBroadcast and the copy-node-one baseline.
//! * [`oracle`]: exact binomial tails, the binomial/beta identity, central
//!   binomial bounds and the Bernoulli KL round calculator.
//! * [`experiments`]: replica sweeps, the hybrid scan, infection growth and
//!   the majority-pair experiment, plus CSV/JSON persistence.

pub mod channel;
pub mod error;
pub mod experiments;
pub mod opinion;
pub mod oracle;
pub mod protocols;
pub mod schedulers;

pub use channel::NoiseChannel;
pub use error::{Error, FieldError, Result};
pub use opinion::{Opinion, OpinionVector, RandomStream};
