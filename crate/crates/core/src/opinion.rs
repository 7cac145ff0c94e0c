//! Opinion vectors, bias arithmetic and deterministic random streams.
//!
//! Bias is always `#zeros - #ones`, so a positive bias means 0 is the
//! majority opinion. Nodes are addressed by 0-based index; "node 1" in the
//! usual 1-based numbering is index 0.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Opinion {
    Zero,
    One,
}

impl Opinion {
    pub fn flip(self) -> Self {
        match self {
            Opinion::Zero => Opinion::One,
            Opinion::One => Opinion::Zero,
        }
    }

    pub fn as_u8(self) -> u8 {
        self.into()
    }
}

impl From<Opinion> for u8 {
    fn from(op: Opinion) -> u8 {
        match op {
            Opinion::Zero => 0,
            Opinion::One => 1,
        }
    }
}

impl TryFrom<u8> for Opinion {
    type Error = Error;

    fn try_from(bit: u8) -> Result<Self> {
        match bit {
            0 => Ok(Opinion::Zero),
            1 => Ok(Opinion::One),
            other => Err(Error::param("bit", format!("expected 0 or 1, got {other}"))),
        }
    }
}

impl fmt::Display for Opinion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// The global binary configuration of `n >= 2` nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OpinionVector {
    opinions: Vec<Opinion>,
}

impl OpinionVector {
    pub fn new(opinions: Vec<Opinion>) -> Result<Self> {
        if opinions.len() < 2 {
            return Err(Error::param("n", format!("need at least 2 nodes, got {}", opinions.len())));
        }
        Ok(Self { opinions })
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        let opinions = bits
            .iter()
            .map(|&b| Opinion::try_from(b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(opinions)
    }

    /// Length is checked by every public constructor.
    pub(crate) fn from_vec_unchecked(opinions: Vec<Opinion>) -> Self {
        debug_assert!(opinions.len() >= 2);
        Self { opinions }
    }

    pub fn unanimous(n: usize, opinion: Opinion) -> Result<Self> {
        Self::new(vec![opinion; n])
    }

    /// Nodes `0..k` hold 0 and nodes `k..n` hold 1.
    pub fn canonical(n: usize, k: usize) -> Result<Self> {
        if k > n {
            return Err(Error::param("k", format!("must satisfy 0 <= k <= n = {n}, got {k}")));
        }
        let mut opinions = vec![Opinion::Zero; k];
        opinions.resize(n, Opinion::One);
        Self::new(opinions)
    }

    /// The two inputs that agree on the first `n - b` nodes (half zeros, half
    /// ones) and differ on the last `b`: all zeros in the first vector, all
    /// ones in the second. Their biases are `+b` and `-b`.
    pub fn majority_pair(n: usize, b: usize) -> Result<(Self, Self)> {
        if b == 0 || b > n {
            return Err(Error::param("b", format!("must satisfy 0 < b <= n = {n}, got {b}")));
        }
        if !(n - b).is_multiple_of(2) {
            return Err(Error::param("b", format!("n - b must be even, got n = {n}, b = {b}")));
        }
        let half = (n - b) / 2;
        let mut shared = vec![Opinion::Zero; half];
        shared.resize(n - b, Opinion::One);

        let mut first = shared.clone();
        first.resize(n, Opinion::Zero);
        let mut second = shared;
        second.resize(n, Opinion::One);
        Ok((Self::new(first)?, Self::new(second)?))
    }

    /// Canonical vector with the given bias; `bias` must have the parity of `n`.
    pub fn with_bias(n: usize, bias: i64) -> Result<Self> {
        let n_i = n as i64;
        if bias.abs() > n_i {
            return Err(Error::param("bias", format!("|bias| must be <= n = {n}, got {bias}")));
        }
        if (n_i - bias) % 2 != 0 {
            return Err(Error::param("bias", format!("bias must have the parity of n = {n}, got {bias}")));
        }
        Self::canonical(n, ((n_i + bias) / 2) as usize)
    }

    /// Independent fair coin per node.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let opinions = (0..n)
            .map(|_| if rng.random::<bool>() { Opinion::One } else { Opinion::Zero })
            .collect();
        Self::new(opinions)
    }

    pub fn len(&self) -> usize {
        self.opinions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opinions.is_empty()
    }

    pub fn as_slice(&self) -> &[Opinion] {
        &self.opinions
    }

    pub fn get(&self, node: usize) -> Option<Opinion> {
        self.opinions.get(node).copied()
    }

    pub fn count_zeros(&self) -> usize {
        self.opinions.iter().filter(|&&o| o == Opinion::Zero).count()
    }

    pub fn count_ones(&self) -> usize {
        self.len() - self.count_zeros()
    }

    pub fn bias(&self) -> i64 {
        2 * self.count_zeros() as i64 - self.len() as i64
    }

    pub fn contains(&self, opinion: Opinion) -> bool {
        self.opinions.contains(&opinion)
    }

    /// The shared opinion when every node agrees.
    pub fn unanimous_value(&self) -> Option<Opinion> {
        let first = self.opinions[0];
        self.opinions.iter().all(|&o| o == first).then_some(first)
    }

    /// Strict majority opinion, `None` on a tie.
    pub fn majority(&self) -> Option<Opinion> {
        match self.bias() {
            b if b > 0 => Some(Opinion::Zero),
            b if b < 0 => Some(Opinion::One),
            _ => None,
        }
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.opinions.iter().map(|o| o.as_u8()).collect()
    }
}

/// A reproducible random stream identified by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8 with the stream index mapped onto ChaCha's 64-bit stream
/// selector, so every replica gets its own 2^64-word sequence.
#[derive(Debug, Clone)]
pub struct RandomStream {
    master_seed: u64,
    stream_index: u64,
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
