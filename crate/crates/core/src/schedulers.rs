//! Communication models: who talks to whom in a round, independent of what
//! the protocol does with the bits, plus infection tracking.
//!
//! Uniform models pick partners uniformly from all `n` nodes, the caller
//! included. Rounds are synchronous: every message in a round is computed from
//! the configuration (and infection state) at the start of that round.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channel::NoiseChannel;
use crate::error::{Error, Result};
use crate::opinion::{Opinion, OpinionVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    UniformPull,
    UniformPush,
    UniformGossip,
    GeneralPull,
    GeneralPush,
    PopulationUniform,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::UniformPull,
        ModelKind::UniformPush,
        ModelKind::UniformGossip,
        ModelKind::GeneralPull,
        ModelKind::GeneralPush,
        ModelKind::PopulationUniform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::UniformPull => "uniform-pull",
            ModelKind::UniformPush => "uniform-push",
            ModelKind::UniformGossip => "uniform-gossip",
            ModelKind::GeneralPull => "general-pull",
            ModelKind::GeneralPush => "general-push",
            ModelKind::PopulationUniform => "population-uniform",
        }
    }

    /// Partners are drawn uniformly; the protocol cannot name them.
    pub fn is_uniform(self) -> bool {
        matches!(
            self,
            ModelKind::UniformPull
                | ModelKind::UniformPush
                | ModelKind::UniformGossip
                | ModelKind::PopulationUniform
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::param("model", format!("unknown model `{s}`")))
    }
}

/// One directed message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Delivery {
    pub sender: usize,
    pub receiver: usize,
    pub sent: Opinion,
    pub received: Opinion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoundTranscript {
    pub model: ModelKind,
    pub deliveries: Vec<Delivery>,
}

impl RoundTranscript {
    pub fn new(model: ModelKind) -> Self {
        Self {
            model,
            deliveries: Vec::new(),
        }
    }

    /// Messages received per node this round.
    pub fn received_counts(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![0; n];
        for d in &self.deliveries {
            counts[d.receiver] += 1;
        }
        counts
    }

    pub fn sent_counts(&self, n: usize) -> Vec<usize> {
        let mut counts = vec![0; n];
        for d in &self.deliveries {
            counts[d.sender] += 1;
        }
        counts
    }
}

fn deliver<R: Rng + ?Sized>(
    sender: usize,
    receiver: usize,
    sent: Opinion,
    channel: &NoiseChannel,
    rng: &mut R,
) -> Delivery {
    Delivery {
        sender,
        receiver,
        sent,
        received: channel.transmit(sent, rng),
    }
}

/// Per-node results of one k-PULL round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullRound {
    /// Observed zeros per node, each in `0..=k`.
    pub zero_counts: Vec<u32>,
    pub transcript: RoundTranscript,
}

/// Every node pulls `k` independent uniform targets (itself included) and
/// sees each target's displayed bit through the channel.
pub fn pull_round<R: Rng + ?Sized>(
    displayed: &OpinionVector,
    channel: &NoiseChannel,
    k: u32,
    rng: &mut R,
) -> Result<PullRound> {
    if k == 0 {
        return Err(Error::param("k", "pulls per node must be at least 1"));
    }
    let n = displayed.len();
    let shown = displayed.as_slice();
    let mut zero_counts = vec![0u32; n];
    let mut transcript = RoundTranscript::new(ModelKind::UniformPull);
    transcript.deliveries.reserve(n * k as usize);
    for (receiver, zeros) in zero_counts.iter_mut().enumerate() {
        for _ in 0..k {
            let sender = rng.random_range(0..n);
            let d = deliver(sender, receiver, shown[sender], channel, rng);
            if d.received == Opinion::Zero {
                *zeros += 1;
            }
            transcript.deliveries.push(d);
        }
    }
    Ok(PullRound {
        zero_counts,
        transcript,
    })
}

/// Each node pulls once from the node it names in `targets`.
pub fn general_pull_round<R: Rng + ?Sized>(
    displayed: &OpinionVector,
    targets: &[usize],
    channel: &NoiseChannel,
    rng: &mut R,
) -> Result<RoundTranscript> {
    let n = displayed.len();
    check_targets(n, targets.iter().copied())?;
    let mut transcript = RoundTranscript::new(ModelKind::GeneralPull);
    for (receiver, &sender) in targets.iter().enumerate() {
        let d = deliver(sender, receiver, displayed.as_slice()[sender], channel, rng);
        transcript.deliveries.push(d);
    }
    Ok(transcript)
}

fn check_targets(n: usize, targets: impl Iterator<Item = usize>) -> Result<()> {
    for (i, t) in targets.enumerate() {
        if t >= n {
            return Err(Error::param("targets", format!("node {i} names target {t}, but n = {n}")));
        }
    }
    Ok(())
}

/// Uniform PUSH: each node with `Some(bit)` sends it to a uniform target;
/// `None` declines to send this round.
pub fn push_round<R: Rng + ?Sized>(
    outgoing: &[Option<Opinion>],
    channel: &NoiseChannel,
    rng: &mut R,
) -> RoundTranscript {
    let n = outgoing.len();
    let mut transcript = RoundTranscript::new(ModelKind::UniformPush);
    for (sender, msg) in outgoing.iter().enumerate() {
        if let Some(bit) = *msg {
            let receiver = rng.random_range(0..n);
            transcript.deliveries.push(deliver(sender, receiver, bit, channel, rng));
        }
    }
    transcript
}

/// General PUSH: each node may send one bit to a node of its choosing.
pub fn general_push_round<R: Rng + ?Sized>(
    outgoing: &[Option<(usize, Opinion)>],
    channel: &NoiseChannel,
    rng: &mut R,
) -> Result<RoundTranscript> {
    let n = outgoing.len();
    check_targets(n, outgoing.iter().flatten().map(|&(t, _)| t))?;
    let mut transcript = RoundTranscript::new(ModelKind::GeneralPush);
    for (sender, msg) in outgoing.iter().enumerate() {
        if let Some((receiver, bit)) = *msg {
            transcript.deliveries.push(deliver(sender, receiver, bit, channel, rng));
        }
    }
    Ok(transcript)
}

/// Uniform GOSSIP: each node calls a uniform partner and the link carries one
/// bit in each direction.
pub fn gossip_round<R: Rng + ?Sized>(
    displayed: &OpinionVector,
    channel: &NoiseChannel,
    rng: &mut R,
) -> RoundTranscript {
    let n = displayed.len();
    let shown = displayed.as_slice();
    let mut transcript = RoundTranscript::new(ModelKind::UniformGossip);
    transcript.deliveries.reserve(2 * n);
    for caller in 0..n {
        let callee = rng.random_range(0..n);
        transcript.deliveries.push(deliver(caller, callee, shown[caller], channel, rng));
        transcript.deliveries.push(deliver(callee, caller, shown[callee], channel, rng));
    }
    transcript
}

/// One population-protocol step: a uniformly random ordered pair of distinct
/// nodes interacts and each sees the other's bit. `n` steps make one unit of
/// parallel time.
pub fn population_step<R: Rng + ?Sized>(
    displayed: &OpinionVector,
    channel: &NoiseChannel,
    rng: &mut R,
) -> RoundTranscript {
    let n = displayed.len();
    let shown = displayed.as_slice();
    let activator = rng.random_range(0..n);
    let mut responder = rng.random_range(0..n - 1);
    if responder >= activator {
        responder += 1;
    }
    let mut transcript = RoundTranscript::new(ModelKind::PopulationUniform);
    transcript.deliveries.push(deliver(activator, responder, shown[activator], channel, rng));
    transcript.deliveries.push(deliver(responder, activator, shown[responder], channel, rng));
    transcript
}

/// Which nodes have (transitively) heard from a source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionState {
    infected: Vec<bool>,
    sources: BTreeSet<usize>,
    count: usize,
}

impl InfectionState {
    pub fn new(n: usize, sources: impl IntoIterator<Item = usize>) -> Result<Self> {
        let sources: BTreeSet<usize> = sources.into_iter().collect();
        if let Some(&bad) = sources.iter().find(|&&s| s >= n) {
            return Err(Error::param("sources", format!("source {bad} out of range for n = {n}")));
        }
        let mut infected = vec![false; n];
        for &s in &sources {
            infected[s] = true;
        }
        Ok(Self {
            count: sources.len(),
            infected,
            sources,
        })
    }

    pub fn single(n: usize, source: usize) -> Result<Self> {
        Self::new(n, [source])
    }

    pub fn len(&self) -> usize {
        self.infected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.infected.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn fraction(&self) -> f64 {
        self.count as f64 / self.len() as f64
    }

    pub fn is_infected(&self, node: usize) -> bool {
        self.infected[node]
    }

    pub fn sources(&self) -> &BTreeSet<usize> {
        &self.sources
    }

    pub fn flags(&self) -> &[bool] {
        &self.infected
    }

    /// Infects every receiver of a message whose sender was infected at the
    /// start of the round. Content and channel noise are irrelevant.
    pub fn apply(&mut self, transcript: &RoundTranscript) {
        let newly: Vec<usize> = transcript
            .deliveries
            .iter()
            .filter(|d| self.infected[d.sender] && !self.infected[d.receiver])
            .map(|d| d.receiver)
            .collect();
        for r in newly {
            self.infect(r);
        }
    }

    pub(crate) fn infect(&mut self, node: usize) {
        if !self.infected[node] {
            self.infected[node] = true;
            self.count += 1;
        }
    }
}

/// Functional form of [`InfectionState::apply`].
pub fn infection_round(model: ModelKind, state: &InfectionState, transcript: &RoundTranscript) -> InfectionState {
    debug_assert_eq!(model, transcript.model);
    let mut next = state.clone();
    next.apply(transcript);
    next
}

/// How pulled samples are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// One target draw and one channel draw per pull; produces transcripts.
    Explicit,
    /// Per-node counts drawn from their exact joint (binomial/multinomial)
    /// law. Same distribution as `Explicit`, cost independent of `k`.
    #[default]
    Aggregate,
}

/// How a k-sample batch maps onto rounds of the 1-PULL model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PullDiscipline {
    /// All `k` pulls happen in one round of the k-PULL model.
    #[default]
    Parallel,
    /// `k` consecutive 1-PULL rounds, all against the configuration frozen at
    /// the start of the batch; costs `k` rounds.
    Sequential,
}

impl PullDiscipline {
    pub fn rounds_for_batch(self, k: u64) -> u64 {
        match self {
            PullDiscipline::Parallel => 1,
            PullDiscipline::Sequential => k,
        }
    }
}

/// Per-node observation counts for one k-sample batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PullCounts {
    pub zero_counts: Vec<u64>,
    /// Nodes that pulled at least one node infected at the batch start.
    pub heard_infected: Option<Vec<bool>>,
}

fn binomial<R: Rng + ?Sized>(trials: u64, p: f64, rng: &mut R) -> u64 {
    if trials == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        trials
    } else {
        Binomial::new(trials, p).expect("valid binomial").sample(rng)
    }
}

/// Draws `k` pulls per node against `displayed`.
///
/// With `infection` given, also reports which nodes pulled an infected node.
pub fn sample_pulls<R: Rng + ?Sized>(
    displayed: &OpinionVector,
    channel: &NoiseChannel,
    k: u64,
    sampling: Sampling,
    discipline: PullDiscipline,
    infection: Option<&InfectionState>,
    rng: &mut R,
) -> PullCounts {
    match sampling {
        Sampling::Explicit => explicit_pulls(displayed, channel, k, discipline, infection, rng),
        Sampling::Aggregate => aggregate_pulls(displayed, channel, k, infection, rng),
    }
}

fn explicit_pulls<R: Rng + ?Sized>(
    displayed: &OpinionVector,
    channel: &NoiseChannel,
    k: u64,
    discipline: PullDiscipline,
    infection: Option<&InfectionState>,
    rng: &mut R,
) -> PullCounts {
    let n = displayed.len();
    let shown = displayed.as_slice();
    let mut zero_counts = vec![0u64; n];
    let mut heard = infection.map(|_| vec![false; n]);
    let mut pull = |node: usize, rng: &mut R| {
        let target = rng.random_range(0..n);
        if channel.transmit(shown[target], rng) == Opinion::Zero {
            zero_counts[node] += 1;
        }
        if let (Some(state), Some(h)) = (infection, heard.as_mut()) {
            h[node] |= state.is_infected(target);
        }
    };
    match discipline {
        PullDiscipline::Parallel => {
            for node in 0..n {
                for _ in 0..k {
                    pull(node, rng);
                }
            }
        }
        PullDiscipline::Sequential => {
            for _ in 0..k {
                for node in 0..n {
                    pull(node, rng);
                }
            }
        }
    }
    PullCounts {
        zero_counts,
        heard_infected: heard,
    }
}

fn aggregate_pulls<R: Rng + ?Sized>(
    displayed: &OpinionVector,
    channel: &NoiseChannel,
    k: u64,
    infection: Option<&InfectionState>,
    rng: &mut R,
) -> PullCounts {
    let n = displayed.len();
    let Some(state) = infection else {
        let p = channel.observe_probability(displayed.bias(), n);
        let zero_counts = if p <= 0.0 || p >= 1.0 {
            vec![if p >= 1.0 { k } else { 0 }; n]
        } else {
            let dist = Binomial::new(k, p).expect("valid binomial");
            (0..n).map(|_| dist.sample(rng)).collect()
        };
        return PullCounts {
            zero_counts,
            heard_infected: None,
        };
    };

    // Four target classes: (infected?, displayed bit).
    let mut class = [0u64; 4];
    for (node, &op) in displayed.as_slice().iter().enumerate() {
        let idx = (state.is_infected(node) as usize) * 2 + op.as_u8() as usize;
        class[idx] += 1;
    }
    let keep = 1.0 - channel.flip_probability();
    let flip = channel.flip_probability();
    let mut zero_counts = Vec::with_capacity(n);
    let mut heard = Vec::with_capacity(n);
    for _ in 0..n {
        let mut remaining_pulls = k;
        let mut remaining_nodes = n as u64;
        let mut hits = [0u64; 4];
        for (c, &size) in class.iter().enumerate() {
            let h = if c == 3 {
                remaining_pulls
            } else {
                binomial(remaining_pulls, size as f64 / remaining_nodes as f64, rng)
            };
            hits[c] = h;
            remaining_pulls -= h;
            remaining_nodes -= size;
        }
        let shown_zero = hits[0] + hits[2];
        let shown_one = hits[1] + hits[3];
        zero_counts.push(binomial(shown_zero, keep, rng) + binomial(shown_one, flip, rng));
        heard.push(hits[2] + hits[3] > 0);
    }
    PullCounts {
        zero_counts,
        heard_infected: Some(heard),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opinion::RandomStream;
    use crate::oracle::binomial_pmf;

    fn total_variation(empirical: &[usize], total: usize, exact: &[f64]) -> f64 {
        0.5 * empirical
            .iter()
            .zip(exact)
            .map(|(&c, &p)| (c as f64 / total as f64 - p).abs())
            .sum::<f64>()
    }

    #[test]
    fn noiseless_unanimous_pull() {
        let v = OpinionVector::unanimous(20, Opinion::Zero).unwrap();
        let mut rng = RandomStream::new(3, 0);
        let round = pull_round(&v, &NoiseChannel::noiseless(), 3, &mut rng).unwrap();
        assert!(round.zero_counts.iter().all(|&z| z == 3));
        assert_eq!(round.transcript.received_counts(20), vec![3; 20]);
    }

    #[test]
    fn pull_round_rejects_zero_k() {
        let v = OpinionVector::unanimous(4, Opinion::Zero).unwrap();
        let mut rng = RandomStream::new(3, 0);
        assert!(pull_round(&v, &NoiseChannel::noiseless(), 0, &mut rng).is_err());
    }

    #[test]
    fn pull_counts_follow_exact_binomial() {
        let n = 100;
        let k = 5u32;
        let v = OpinionVector::canonical(n, 63).unwrap();
        let ch = NoiseChannel::new(0.2).unwrap();
        let p = ch.observe_probability(v.bias(), n);
        let exact = binomial_pmf(k as u64, p);
        let mut rng = RandomStream::new(11, 0);
        let mut hist = vec![0usize; k as usize + 1];
        let rounds = 1000;
        for _ in 0..rounds {
            for z in pull_round(&v, &ch, k, &mut rng).unwrap().zero_counts {
                hist[z as usize] += 1;
            }
        }
        let tv = total_variation(&hist, rounds * n, &exact);
        assert!(tv <= 0.01, "tv {tv}");
    }

    #[test]
    fn aggregate_and_explicit_share_the_law() {
        let n = 40;
        let k = 7u64;
        let v = OpinionVector::canonical(n, 13).unwrap();
        let ch = NoiseChannel::new(0.3).unwrap();
        let infection = InfectionState::new(n, [0, 20, 39]).unwrap();
        let exact = binomial_pmf(k, ch.observe_probability(v.bias(), n));
        // Probability a node hears no infected node: (1 - 3/40)^7.
        let silent = (1.0 - 3.0 / n as f64).powi(k as i32);
        for sampling in [Sampling::Explicit, Sampling::Aggregate] {
            let mut rng = RandomStream::new(5, 1);
            let mut hist = vec![0usize; k as usize + 1];
            let mut heard = 0usize;
            let reps = 3000;
            for _ in 0..reps {
                let counts = sample_pulls(&v, &ch, k, sampling, PullDiscipline::Parallel, Some(&infection), &mut rng);
                for z in counts.zero_counts {
                    hist[z as usize] += 1;
                }
                heard += counts.heard_infected.unwrap().iter().filter(|&&h| h).count();
            }
            let total = reps * n;
            let tv = total_variation(&hist, total, &exact);
            assert!(tv <= 0.01, "{sampling:?} tv {tv}");
            let heard_rate = heard as f64 / total as f64;
            let sigma = ((1.0 - silent) * silent / total as f64).sqrt();
            assert!((heard_rate - (1.0 - silent)).abs() <= 4.0 * sigma, "{sampling:?} {heard_rate}");
        }
    }

    #[test]
    fn seeded_transcripts_replay() {
        let v = OpinionVector::canonical(30, 10).unwrap();
        let ch = NoiseChannel::new(0.1).unwrap();
        let run = || {
            let mut rng = RandomStream::new(99, 4);
            pull_round(&v, &ch, 4, &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn infection_from_single_source_zero_rounds() {
        let s = InfectionState::single(10, 4).unwrap();
        assert_eq!(s.count(), 1);
        assert!(s.is_infected(4));
        assert!(InfectionState::single(10, 10).is_err());
    }

    #[test]
    fn push_at_most_doubles() {
        let n = 64;
        let ch = NoiseChannel::noiseless();
        let mut rng = RandomStream::new(8, 0);
        let mut state = InfectionState::single(n, 0).unwrap();
        for t in 1..=8u32 {
            let before = state.count();
            let outgoing = vec![Some(Opinion::Zero); n];
            let tr = push_round(&outgoing, &ch, &mut rng);
            assert!(tr.sent_counts(n).iter().all(|&c| c <= 1));
            state = infection_round(ModelKind::UniformPush, &state, &tr);
            assert!(state.count() <= 2 * before);
            assert!(state.count() <= 1 << t);
        }
    }

    #[test]
    fn declined_pushes_send_nothing() {
        let mut rng = RandomStream::new(8, 1);
        let outgoing = [Some(Opinion::One), None, None, Some(Opinion::Zero)];
        let tr = push_round(&outgoing, &NoiseChannel::noiseless(), &mut rng);
        assert_eq!(tr.deliveries.len(), 2);
        assert_eq!(tr.sent_counts(4), vec![1, 0, 0, 1]);
    }

    #[test]
    fn general_models_check_targets() {
        let v = OpinionVector::canonical(4, 1).unwrap();
        let mut rng = RandomStream::new(1, 1);
        let ch = NoiseChannel::noiseless();
        assert!(general_pull_round(&v, &[0, 0, 0, 9], &ch, &mut rng).is_err());
        let tr = general_pull_round(&v, &[0, 0, 0, 0], &ch, &mut rng).unwrap();
        assert!(tr.deliveries.iter().all(|d| d.sender == 0 && d.received == Opinion::Zero));
        assert!(general_push_round(&[Some((5, Opinion::Zero)), None, None, None], &ch, &mut rng).is_err());
    }

    #[test]
    fn gossip_each_node_calls_once() {
        let v = OpinionVector::canonical(50, 25).unwrap();
        let mut rng = RandomStream::new(2, 2);
        let tr = gossip_round(&v, &NoiseChannel::noiseless(), &mut rng);
        // caller -> callee at even positions
        let mut calls = [0; 50];
        for d in tr.deliveries.iter().step_by(2) {
            calls[d.sender] += 1;
        }
        assert!(calls.iter().all(|&c| c == 1));
        assert_eq!(tr.deliveries.len(), 100);
    }

    #[test]
    fn population_step_pairs_distinct_nodes() {
        let v = OpinionVector::canonical(3, 1).unwrap();
        let mut rng = RandomStream::new(2, 3);
        for _ in 0..1000 {
            let tr = population_step(&v, &NoiseChannel::noiseless(), &mut rng);
            let d = tr.deliveries[0];
            assert_ne!(d.sender, d.receiver);
            let mut state = InfectionState::single(3, 0).unwrap();
            state.apply(&tr);
            assert!(state.count() == 1 || state.count() == 2);
        }
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelKind::ALL {
            assert_eq!(m.as_str().parse::<ModelKind>().unwrap(), m);
        }
        assert!("radio".parse::<ModelKind>().is_err());
    }

    #[test]
    fn sequential_discipline_costs_k_rounds() {
        assert_eq!(PullDiscipline::Parallel.rounds_for_batch(21), 1);
        assert_eq!(PullDiscipline::Sequential.rounds_for_batch(21), 21);
    }
}
