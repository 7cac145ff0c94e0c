//! The consensus and broadcast protocols, run on the uniform PULL model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::NoiseChannel;
use crate::error::{Error, Result};
use crate::opinion::{Opinion, OpinionVector};
use crate::oracle::{drift_constant, next_odd_at_least};
use crate::schedulers::{
    general_pull_round, sample_pulls, InfectionState, ModelKind, PullDiscipline, RoundTranscript, Sampling,
};

/// Constants of the two-phase Majority Protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MajorityParams {
    /// Phase-1 sample constant: `k1` is the next odd integer `>= c / eps^2`.
    pub c: f64,
    /// Phase-1 length is `ceil(alpha * log2 n)` steps.
    pub alpha: f64,
    /// Target bias fraction at the end of phase 1.
    pub c3: f64,
    /// Phase-2 sample constant: `k2 = ceil(c4 * ln n / eps^2)`.
    pub c4: f64,
    /// Overrides the computed `k1`.
    pub k1: Option<u64>,
    /// Allow even sample sizes, breaking ties with a fair coin.
    pub tie_break: bool,
    pub sampling: Sampling,
    pub discipline: PullDiscipline,
    /// Keep sampling at phase-2 strength after the run and check that
    /// unanimity persists.
    pub soak: bool,
    /// Soak length; defaults to `10 * rounds1`.
    pub soak_rounds: Option<u64>,
}

pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_ALPHA: f64 = 4.0;
pub const DEFAULT_C3: f64 = 1.0 / 200.0;

impl Default for MajorityParams {
    fn default() -> Self {
        Self {
            c: drift_constant(DEFAULT_DELTA),
            alpha: DEFAULT_ALPHA,
            c3: DEFAULT_C3,
            c4: 5.0 / (DEFAULT_C3 * DEFAULT_C3),
            k1: None,
            tie_break: false,
            sampling: Sampling::default(),
            discipline: PullDiscipline::default(),
            soak: false,
            soak_rounds: None,
        }
    }
}

impl MajorityParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive and finite, got {v}")))
            }
        };
        positive("c", self.c)?;
        positive("alpha", self.alpha)?;
        positive("c3", self.c3)?;
        positive("c4", self.c4)?;
        if let Some(k1) = self.k1 {
            if k1 < 1 || (k1 % 2 == 0 && !self.tie_break) {
                return Err(Error::param("k1", format!("must be odd and positive unless ties are broken, got {k1}")));
            }
        }
        Ok(())
    }

    pub fn k1(&self, epsilon: f64) -> u64 {
        self.k1
            .unwrap_or_else(|| next_odd_at_least(self.c / (epsilon * epsilon)).max(3))
    }

    pub fn rounds1(&self, n: usize) -> u64 {
        ((self.alpha * (n as f64).log2()).ceil() as u64).max(1)
    }

    /// Never below `k1`; rounded up to odd unless ties are broken.
    pub fn k2(&self, n: usize, epsilon: f64) -> u64 {
        let raw = (self.c4 * (n as f64).ln() / (epsilon * epsilon)).ceil() as u64;
        let k2 = raw.max(self.k1(epsilon));
        if self.tie_break || k2 % 2 == 1 {
            k2
        } else {
            k2 + 1
        }
    }

    pub fn soak_rounds(&self, n: usize) -> u64 {
        self.soak_rounds.unwrap_or(10 * self.rounds1(n))
    }

    /// Pulls each node makes over one run: `k1 * rounds1 + k2`.
    pub fn samples_per_node(&self, n: usize, epsilon: f64) -> u64 {
        self.k1(epsilon) * self.rounds1(n) + self.k2(n, epsilon)
    }
}

/// Constants of NoisyBroadcast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BroadcastParams {
    /// Phase-1 length is `ceil(c_b * n * ln n / eps^2)` pulls.
    pub c_b: f64,
    pub majority: MajorityParams,
}

pub const DEFAULT_C_B: f64 = 16.0;

impl Default for BroadcastParams {
    fn default() -> Self {
        Self {
            c_b: DEFAULT_C_B,
            majority: MajorityParams::default(),
        }
    }
}

impl BroadcastParams {
    pub fn threshold(n: usize, epsilon: f64) -> f64 {
        0.5 - epsilon * (1.0 - 1.0 / (2.0 * n as f64))
    }

    pub fn phase1_pulls(&self, n: usize, epsilon: f64) -> u64 {
        (self.c_b * n as f64 * (n as f64).ln() / (epsilon * epsilon)).ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SoakReport {
    pub rounds: u64,
    /// Unanimity survived every soak round.
    pub held: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub converged: bool,
    pub final_value: Option<Opinion>,
    /// Protocol steps; one k-sample batch is one step.
    pub rounds_used: u64,
    /// Rounds of the underlying PULL model (differs from `rounds_used` under
    /// sequential emulation and in broadcast phase 1).
    pub pull_rounds: u64,
    /// Bias after each step, starting with the input.
    pub bias_trajectory: Vec<i64>,
    pub valid: bool,
    pub infected_trajectory: Option<Vec<usize>>,
    /// Step after the bias first reaches `n/2` in absolute value; `None`
    /// unless the run converged.
    pub convergence_round: Option<u64>,
    pub soak: Option<SoakReport>,
    /// Correct phase-1 guesses (NoisyBroadcast only).
    pub phase1_correct: Option<usize>,
    #[serde(skip)]
    pub final_config: OpinionVector,
}

impl RunOutcome {
    pub fn initial_bias(&self) -> i64 {
        self.bias_trajectory[0]
    }

    pub fn final_bias(&self) -> i64 {
        *self.bias_trajectory.last().expect("trajectory is never empty")
    }

    pub fn infected_final(&self) -> Option<usize> {
        self.infected_trajectory.as_ref().and_then(|t| t.last().copied())
    }
}

fn adopt<R: Rng + ?Sized>(zeros: u64, k: u64, rng: &mut R) -> Opinion {
    match (2 * zeros).cmp(&k) {
        std::cmp::Ordering::Greater => Opinion::Zero,
        std::cmp::Ordering::Less => Opinion::One,
        std::cmp::Ordering::Equal => {
            if rng.random::<bool>() {
                Opinion::Zero
            } else {
                Opinion::One
            }
        }
    }
}

/// One synchronous k-Majority step with explicit options; updates
/// `infection` from the pulls when given.
#[allow(clippy::too_many_arguments)]
pub fn k_majority_step_with<R: Rng + ?Sized>(
    config: &OpinionVector,
    k: u64,
    channel: &NoiseChannel,
    sampling: Sampling,
    discipline: PullDiscipline,
    tie_break: bool,
    infection: Option<&mut InfectionState>,
    rng: &mut R,
) -> Result<OpinionVector> {
    if k == 0 {
        return Err(Error::param("k", "sample size must be at least 1"));
    }
    if k.is_multiple_of(2) && !tie_break {
        return Err(Error::param("k", format!("even sample size {k} needs tie-breaking")));
    }
    let counts = sample_pulls(config, channel, k, sampling, discipline, infection.as_deref(), rng);
    if let (Some(state), Some(heard)) = (infection, counts.heard_infected.as_ref()) {
        for (node, &h) in heard.iter().enumerate() {
            if h {
                state.infect(node);
            }
        }
    }
    let next = counts.zero_counts.iter().map(|&z| adopt(z, k, rng)).collect();
    Ok(OpinionVector::from_vec_unchecked(next))
}

/// Every node adopts the majority of `k` noisy uniform pulls; `k` must be odd.
pub fn k_majority_step<R: Rng + ?Sized>(
    config: &OpinionVector,
    k: u64,
    channel: &NoiseChannel,
    rng: &mut R,
) -> Result<OpinionVector> {
    k_majority_step_with(
        config,
        k,
        channel,
        Sampling::default(),
        PullDiscipline::default(),
        false,
        None,
        rng,
    )
}

fn check_n(n: usize) -> Result<()> {
    if n < 4 {
        return Err(Error::param("n", format!("protocols need n >= 4, got {n}")));
    }
    Ok(())
}

/// `rounds1` steps of k1-Majority followed by one step of k2-Majority.
pub fn run_majority_protocol<R: Rng + ?Sized>(
    channel: &NoiseChannel,
    initial: &OpinionVector,
    params: &MajorityParams,
    rng: &mut R,
) -> Result<RunOutcome> {
    run_majority_tracked(channel, initial, params, None, rng)
}

/// [`run_majority_protocol`] with infection tracking from `infection`.
pub fn run_majority_tracked<R: Rng + ?Sized>(
    channel: &NoiseChannel,
    initial: &OpinionVector,
    params: &MajorityParams,
    mut infection: Option<InfectionState>,
    rng: &mut R,
) -> Result<RunOutcome> {
    let n = initial.len();
    check_n(n)?;
    params.validate()?;
    if let Some(state) = &infection {
        if state.len() != n {
            return Err(Error::param("infection", "state size differs from n"));
        }
    }
    let eps = channel.epsilon();
    let (k1, k2, rounds1) = (params.k1(eps), params.k2(n, eps), params.rounds1(n));

    let mut config = initial.clone();
    let mut biases = vec![config.bias()];
    let mut infected = infection.as_ref().map(|s| vec![s.count()]);
    let mut pull_rounds = 0;
    let mut step = |config: &OpinionVector, k: u64, infection: Option<&mut InfectionState>, rng: &mut R| {
        pull_rounds += params.discipline.rounds_for_batch(k);
        k_majority_step_with(config, k, channel, params.sampling, params.discipline, params.tie_break, infection, rng)
    };

    for t in 0..=rounds1 {
        let k = if t < rounds1 { k1 } else { k2 };
        config = step(&config, k, infection.as_mut(), rng)?;
        biases.push(config.bias());
        if let (Some(traj), Some(state)) = (infected.as_mut(), infection.as_ref()) {
            traj.push(state.count());
        }
    }

    let final_value = config.unanimous_value();
    let converged = final_value.is_some();
    let soak = if params.soak {
        let rounds = params.soak_rounds(n);
        let mut soaked = config.clone();
        let mut held = converged;
        for _ in 0..rounds {
            if !held {
                break;
            }
            soaked = step(&soaked, k2, None, rng)?;
            held = soaked.unanimous_value() == final_value;
        }
        Some(SoakReport { rounds, held })
    } else {
        None
    };

    let rounds_used = rounds1 + 1;
    let convergence_round = converged.then(|| {
        biases
            .iter()
            .position(|b| 2 * b.abs() >= n as i64)
            .map_or(rounds_used, |t| (t as u64 + 1).min(rounds_used))
    });
    Ok(RunOutcome {
        converged,
        final_value,
        rounds_used,
        pull_rounds,
        valid: final_value.is_some_and(|v| initial.contains(v)),
        bias_trajectory: biases,
        infected_trajectory: infected,
        convergence_round,
        soak,
        phase1_correct: None,
        final_config: config,
    })
}

/// Node 0 is the source. Phase 1: the source displays `source_bit`, every
/// other node displays 0, and each node thresholds the fraction of ones among
/// its pulls. Phase 2 runs the Majority Protocol on the guesses.
///
/// `infection`, when set, tracks infection from the source through both
/// phases.
pub fn run_noisy_broadcast<R: Rng + ?Sized>(
    channel: &NoiseChannel,
    n: usize,
    source_bit: Opinion,
    params: &BroadcastParams,
    track_infection: bool,
    rng: &mut R,
) -> Result<RunOutcome> {
    check_n(n)?;
    if !(params.c_b.is_finite() && params.c_b > 0.0) {
        return Err(Error::param("c_b", format!("must be positive and finite, got {}", params.c_b)));
    }
    let eps = channel.epsilon();
    let mut displayed = vec![Opinion::Zero; n];
    displayed[0] = source_bit;
    let displayed = OpinionVector::from_vec_unchecked(displayed);

    let pulls = params.phase1_pulls(n, eps);
    let threshold = BroadcastParams::threshold(n, eps);
    let mut infection = if track_infection {
        Some(InfectionState::single(n, 0)?)
    } else {
        None
    };
    let counts = sample_pulls(
        &displayed,
        channel,
        pulls,
        params.majority.sampling,
        PullDiscipline::Sequential,
        infection.as_ref(),
        rng,
    );
    if let (Some(state), Some(heard)) = (infection.as_mut(), counts.heard_infected.as_ref()) {
        for (node, &h) in heard.iter().enumerate() {
            if h {
                state.infect(node);
            }
        }
    }
    let guesses: Vec<Opinion> = counts
        .zero_counts
        .iter()
        .map(|&zeros| {
            let ones = (pulls - zeros) as f64;
            if ones / pulls as f64 >= threshold {
                Opinion::One
            } else {
                Opinion::Zero
            }
        })
        .collect();
    let guesses = OpinionVector::from_vec_unchecked(guesses);
    let phase1_correct = guesses.as_slice().iter().filter(|&&g| g == source_bit).count();
    let infected_after_phase1 = infection.as_ref().map(|s| s.count());

    let phase2 = run_majority_tracked(channel, &guesses, &params.majority, infection, rng)?;

    let mut biases = Vec::with_capacity(phase2.bias_trajectory.len() + 1);
    biases.push(displayed.bias());
    biases.extend(&phase2.bias_trajectory);
    let infected_trajectory = phase2.infected_trajectory.map(|t| {
        let mut all = vec![1];
        all.extend(t);
        debug_assert_eq!(all[1], infected_after_phase1.unwrap_or(0));
        all
    });
    let converged = phase2.final_value == Some(source_bit);
    Ok(RunOutcome {
        converged,
        final_value: phase2.final_value,
        rounds_used: phase2.rounds_used + 1,
        pull_rounds: pulls + phase2.pull_rounds,
        bias_trajectory: biases,
        valid: converged,
        infected_trajectory,
        convergence_round: phase2.convergence_round.filter(|_| converged).map(|r| r + 1),
        soak: phase2.soak,
        phase1_correct: Some(phase1_correct),
        final_config: phase2.final_config,
    })
}

/// Every node copies node 0 with one pull. Needs node identities, so only
/// the general PULL model is accepted.
pub fn baseline_copy_node_one(config: &OpinionVector, model: ModelKind) -> Result<OpinionVector> {
    copy_node_one_round(config, model).map(|(next, _)| next)
}

/// [`baseline_copy_node_one`] together with its noiseless transcript.
pub fn copy_node_one_round(config: &OpinionVector, model: ModelKind) -> Result<(OpinionVector, RoundTranscript)> {
    if model != ModelKind::GeneralPull {
        return Err(Error::ModelMismatch {
            expected: "general-pull",
            actual: model.to_string(),
        });
    }
    // The noiseless channel ignores its draws, so a fixed stream will do.
    let mut rng = crate::opinion::RandomStream::new(0, 0);
    let targets = vec![0; config.len()];
    let transcript = general_pull_round(config, &targets, &NoiseChannel::noiseless(), &mut rng)?;
    let next = OpinionVector::from_vec_unchecked(transcript.deliveries.iter().map(|d| d.received).collect());
    Ok((next, transcript))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opinion::RandomStream;
    use crate::oracle::majority_win_prob;

    #[test]
    fn default_constants() {
        let p = MajorityParams::default();
        assert!((p.c - 1.2916).abs() < 1e-3);
        assert_eq!(p.c4, 200_000.0);
        assert_eq!(p.k1(0.25), 21);
        assert_eq!(p.rounds1(4096), 48);
        assert_eq!(p.k2(4096, 0.25) % 2, 1);
        assert!(p.k2(4096, 0.25) >= 26_600_000);
        assert_eq!(p.k1(0.5), 7);
    }

    #[test]
    fn k1_override_must_be_odd() {
        let p = MajorityParams {
            k1: Some(4),
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = MajorityParams {
            k1: Some(4),
            tie_break: true,
            ..Default::default()
        };
        assert!(p.validate().is_ok());
    }

    #[test]
    fn threshold_in_range() {
        for n in [4, 16, 256, 1 << 20] {
            for eps in [0.01, 0.3, 0.5] {
                let t = BroadcastParams::threshold(n, eps);
                assert!(t > 0.5 - eps && t < 0.5);
            }
        }
    }

    #[test]
    fn noiseless_unanimity_absorbs() {
        let v = OpinionVector::unanimous(50, Opinion::Zero).unwrap();
        let mut rng = RandomStream::new(1, 0);
        for k in [1, 3, 7, 101] {
            assert_eq!(k_majority_step(&v, k, &NoiseChannel::noiseless(), &mut rng).unwrap(), v);
        }
    }

    #[test]
    fn even_k_needs_tie_break() {
        let v = OpinionVector::canonical(10, 5).unwrap();
        let mut rng = RandomStream::new(1, 0);
        let ch = NoiseChannel::noiseless();
        assert!(k_majority_step(&v, 4, &ch, &mut rng).is_err());
        let out = k_majority_step_with(&v, 4, &ch, Sampling::Explicit, PullDiscipline::Parallel, true, None, &mut rng);
        assert_eq!(out.unwrap().len(), 10);
    }

    #[test]
    fn single_node_marginal_matches_oracle() {
        let n = 100;
        let k = 5;
        let v = OpinionVector::canonical(n, 60).unwrap();
        let ch = NoiseChannel::new(0.15).unwrap();
        let expected = majority_win_prob(k, ch.observe_probability(v.bias(), n)).unwrap();
        for sampling in [Sampling::Explicit, Sampling::Aggregate] {
            let mut rng = RandomStream::new(77, 0);
            let steps = 1000;
            let mut zeros = 0usize;
            for _ in 0..steps {
                let next =
                    k_majority_step_with(&v, k, &ch, sampling, PullDiscipline::Parallel, false, None, &mut rng).unwrap();
                zeros += next.count_zeros();
            }
            let total = (steps * n) as f64;
            let sigma = (expected * (1.0 - expected) / total).sqrt();
            assert!((zeros as f64 / total - expected).abs() <= 4.0 * sigma, "{sampling:?}");
        }
    }

    #[test]
    fn small_step_replays() {
        let v = OpinionVector::from_bits(&[0, 0, 1, 1]).unwrap();
        let run = || {
            let mut rng = RandomStream::new(5, 5);
            k_majority_step(&v, 3, &NoiseChannel::noiseless(), &mut rng).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn common_random_numbers_are_monotone() {
        let n = 30;
        let ch = NoiseChannel::new(0.2).unwrap();
        for seed in 0..50 {
            let mut prev = 0;
            for zeros in 0..=n {
                let v = OpinionVector::canonical(n, zeros).unwrap();
                let mut rng = RandomStream::new(seed, 0);
                let next =
                    k_majority_step_with(&v, 5, &ch, Sampling::Explicit, PullDiscipline::Parallel, false, None, &mut rng)
                        .unwrap();
                assert!(next.count_zeros() >= prev);
                prev = next.count_zeros();
            }
        }
    }

    #[test]
    fn unanimous_noiseless_run_is_valid() {
        let v = OpinionVector::unanimous(64, Opinion::One).unwrap();
        let mut rng = RandomStream::new(3, 0);
        let out = run_majority_protocol(&NoiseChannel::noiseless(), &v, &MajorityParams::default(), &mut rng).unwrap();
        assert!(out.converged && out.valid);
        assert_eq!(out.final_value, Some(Opinion::One));
        assert_eq!(out.bias_trajectory.len() as u64, out.rounds_used + 1);
        assert_eq!(out.rounds_used, 25);
        assert_eq!(out.convergence_round, Some(1));
    }

    #[test]
    fn sequential_emulation_multiplies_rounds() {
        let params = MajorityParams {
            discipline: PullDiscipline::Sequential,
            ..Default::default()
        };
        let v = OpinionVector::unanimous(16, Opinion::Zero).unwrap();
        let ch = NoiseChannel::new(0.5).unwrap();
        let mut rng = RandomStream::new(3, 0);
        let out = run_majority_protocol(&ch, &v, &params, &mut rng).unwrap();
        assert_eq!(out.pull_rounds, params.k1(0.5) * params.rounds1(16) + params.k2(16, 0.5));
    }

    #[test]
    fn soak_reports_persistence() {
        let params = MajorityParams {
            soak: true,
            ..Default::default()
        };
        let v = OpinionVector::unanimous(32, Opinion::Zero).unwrap();
        let mut rng = RandomStream::new(3, 0);
        let out = run_majority_protocol(&NoiseChannel::new(0.25).unwrap(), &v, &params, &mut rng).unwrap();
        let soak = out.soak.unwrap();
        assert_eq!(soak.rounds, 10 * params.rounds1(32));
        assert!(soak.held);
    }

    #[test]
    fn rejects_tiny_n() {
        let v = OpinionVector::unanimous(3, Opinion::Zero).unwrap();
        let mut rng = RandomStream::new(3, 0);
        assert!(run_majority_protocol(&NoiseChannel::noiseless(), &v, &MajorityParams::default(), &mut rng).is_err());
    }

    #[test]
    fn noiseless_broadcast_small() {
        let ch = NoiseChannel::noiseless();
        for bit in [Opinion::Zero, Opinion::One] {
            let mut ok = 0;
            for r in 0..100 {
                let mut rng = RandomStream::new(21, r);
                let out = run_noisy_broadcast(&ch, 16, bit, &BroadcastParams::default(), false, &mut rng).unwrap();
                ok += out.converged as usize;
            }
            assert!(ok >= 99, "{bit}: {ok}");
        }
    }

    #[test]
    fn broadcast_tracks_infection() {
        let ch = NoiseChannel::new(0.3).unwrap();
        let mut rng = RandomStream::new(2, 0);
        let out = run_noisy_broadcast(&ch, 32, Opinion::One, &BroadcastParams::default(), true, &mut rng).unwrap();
        let traj = out.infected_trajectory.unwrap();
        assert_eq!(traj[0], 1);
        assert!(traj.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(out.bias_trajectory.len() as u64, out.rounds_used + 1);
    }

    #[test]
    fn copy_node_one_fixture() {
        let v = OpinionVector::canonical(8, 0).unwrap();
        let out = baseline_copy_node_one(&v, ModelKind::GeneralPull).unwrap();
        assert_eq!(out.unanimous_value(), Some(Opinion::One));
        let v = OpinionVector::canonical(8, 1).unwrap();
        let out = baseline_copy_node_one(&v, ModelKind::GeneralPull).unwrap();
        assert_eq!(out.unanimous_value(), Some(Opinion::Zero));
        assert!(matches!(
            baseline_copy_node_one(&v, ModelKind::UniformPull),
            Err(Error::ModelMismatch { .. })
        ));
    }
}
