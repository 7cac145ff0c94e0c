//! Binary symmetric channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::opinion::Opinion;

/// Flips each transmitted bit independently with probability `1/2 - epsilon`.
///
/// `epsilon` lies in `(0, 1/2]`; `epsilon = 1/2` is the noiseless channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct NoiseChannel {
    epsilon: f64,
}

impl NoiseChannel {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::param("epsilon", format!("must lie in (0, 1/2], got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    pub fn noiseless() -> Self {
        Self { epsilon: 0.5 }
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn flip_probability(&self) -> f64 {
        0.5 - self.epsilon
    }

    pub fn is_noiseless(&self) -> bool {
        self.flip_probability() == 0.0
    }

    /// Sends one bit. Always consumes exactly one uniform draw, noiseless or not,
    /// so streams stay aligned across channel settings.
    ///
    /// The draw `u` yields 0 iff `u < P(receive 0 | sent)`, so under a shared
    /// draw the received bit is monotone in the sent bit.
    pub fn transmit<R: Rng + ?Sized>(&self, bit: Opinion, rng: &mut R) -> Opinion {
        let u: f64 = rng.random();
        let q = self.flip_probability();
        let zero_below = match bit {
            Opinion::Zero => 1.0 - q,
            Opinion::One => q,
        };
        if u < zero_below {
            Opinion::Zero
        } else {
            Opinion::One
        }
    }

    /// Probability that a single uniform pull (self included) observes 0 in a
    /// configuration with the given bias: `1/2 + epsilon * bias / n`.
    pub fn observe_probability(&self, bias: i64, n: usize) -> f64 {
        observe_probability(bias, n, self)
    }
}

pub fn observe_probability(bias: i64, n: usize, channel: &NoiseChannel) -> f64 {
    debug_assert!(n >= 1 && bias.unsigned_abs() as usize <= n);
    0.5 + channel.epsilon * bias as f64 / n as f64
}

impl TryFrom<f64> for NoiseChannel {
    type Error = Error;

    fn try_from(epsilon: f64) -> Result<Self> {
        Self::new(epsilon)
    }
}

impl From<NoiseChannel> for f64 {
    fn from(ch: NoiseChannel) -> f64 {
        ch.epsilon
    }
}
