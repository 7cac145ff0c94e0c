//! Monte Carlo harness: sweeps, the hybrid scan, infection growth and the
//! majority-pair experiment, plus the statistics they report.
//!
//! Every replica owns `RandomStream::new(master_seed, index)` for a fixed
//! global index, so results do not depend on thread scheduling.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::NoiseChannel;
use crate::error::{Error, FieldError, Result};
use crate::opinion::{Opinion, OpinionVector, RandomStream};
use crate::protocols::{
    copy_node_one_round, run_majority_tracked, run_noisy_broadcast, BroadcastParams, MajorityParams, RunOutcome,
    DEFAULT_C_B,
};
use crate::schedulers::{gossip_round, population_step, pull_round, push_round, InfectionState, ModelKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    Majority,
    Broadcast,
    CopyNodeOne,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Majority => "majority",
            ProtocolKind::Broadcast => "broadcast",
            ProtocolKind::CopyNodeOne => "copy-node-one",
        }
    }

    /// The only model each protocol runs on.
    pub fn model(self) -> ModelKind {
        match self {
            ProtocolKind::Majority | ProtocolKind::Broadcast => ModelKind::UniformPull,
            ProtocolKind::CopyNodeOne => ModelKind::GeneralPull,
        }
    }

    fn check_model(self, model: ModelKind) -> Result<()> {
        if model == self.model() {
            Ok(())
        } else {
            Err(Error::ModelMismatch {
                expected: self.model().as_str(),
                actual: model.to_string(),
            })
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [ProtocolKind::Majority, ProtocolKind::Broadcast, ProtocolKind::CopyNodeOne]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::param("protocol", format!("unknown protocol `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialCondition {
    #[serde(rename = "unanimous-0")]
    Unanimous0,
    #[serde(rename = "unanimous-1")]
    Unanimous1,
    Canonical { k: usize },
    Bias { b: i64 },
    Random,
}

impl InitialCondition {
    pub fn build(self, n: usize, rng: &mut RandomStream) -> Result<OpinionVector> {
        match self {
            InitialCondition::Unanimous0 => OpinionVector::unanimous(n, Opinion::Zero),
            InitialCondition::Unanimous1 => OpinionVector::unanimous(n, Opinion::One),
            InitialCondition::Canonical { k } => OpinionVector::canonical(n, k),
            InitialCondition::Bias { b } => OpinionVector::with_bias(n, b),
            InitialCondition::Random => OpinionVector::random(n, rng),
        }
    }
}

impl fmt::Display for InitialCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialCondition::Unanimous0 => f.write_str("unanimous-0"),
            InitialCondition::Unanimous1 => f.write_str("unanimous-1"),
            InitialCondition::Canonical { k } => write!(f, "canonical:{k}"),
            InitialCondition::Bias { b } => write!(f, "bias:{b}"),
            InitialCondition::Random => f.write_str("random"),
        }
    }
}

/// Parses `unanimous-0`, `unanimous-1`, `canonical:K`, `bias:B` or `random`.
impl FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param("initial", format!("cannot parse initial condition `{s}`"));
        match s {
            "unanimous-0" => return Ok(InitialCondition::Unanimous0),
            "unanimous-1" => return Ok(InitialCondition::Unanimous1),
            "random" => return Ok(InitialCondition::Random),
            _ => {}
        }
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "canonical" => Ok(InitialCondition::Canonical {
                k: value.parse().map_err(|_| bad())?,
            }),
            "bias" => Ok(InitialCondition::Bias {
                b: value.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub protocol: ProtocolKind,
    pub model: ModelKind,
    pub n_values: Vec<usize>,
    pub epsilon_values: Vec<f64>,
    pub replicas: u64,
    pub master_seed: u64,
    /// Ignored by NoisyBroadcast, whose input is fixed by `source_bit`.
    pub initial_condition: InitialCondition,
    pub params: MajorityParams,
    pub c_b: f64,
    pub source_bit: Opinion,
    pub soak: bool,
    /// Track infection from this node (broadcast always tracks node 0).
    pub infection_source: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            protocol: ProtocolKind::Majority,
            model: ModelKind::UniformPull,
            n_values: vec![1024],
            epsilon_values: vec![0.25],
            replicas: 10,
            master_seed: 0,
            initial_condition: InitialCondition::Random,
            params: MajorityParams::default(),
            c_b: DEFAULT_C_B,
            source_bit: Opinion::One,
            soak: false,
            infection_source: None,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Every problem with the spec, by field.
    pub fn validation_errors(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        if self.replicas < 1 {
            errs.push(FieldError::new("replicas", "must be at least 1"));
        }
        if self.n_values.is_empty() {
            errs.push(FieldError::new("n_values", "must not be empty"));
        }
        for &n in &self.n_values {
            if n < 4 {
                errs.push(FieldError::new("n_values", format!("every n must be >= 4, got {n}")));
            }
        }
        if self.epsilon_values.is_empty() {
            errs.push(FieldError::new("epsilon_values", "must not be empty"));
        }
        for &eps in &self.epsilon_values {
            if let Err(e) = NoiseChannel::new(eps) {
                errs.push(FieldError::new("epsilon_values", e.to_string()));
            }
        }
        if let Err(e) = self.protocol.check_model(self.model) {
            errs.push(FieldError::new("model", e.to_string()));
        }
        if let Err(e) = self.params.validate() {
            errs.push(FieldError::new("params", e.to_string()));
        }
        if !(self.c_b.is_finite() && self.c_b > 0.0) {
            errs.push(FieldError::new("c_b", format!("must be positive and finite, got {}", self.c_b)));
        }
        for &n in &self.n_values {
            match self.initial_condition {
                InitialCondition::Canonical { k } if k > n => {
                    errs.push(FieldError::new("initial_condition", format!("canonical k = {k} exceeds n = {n}")))
                }
                InitialCondition::Bias { b } if b.unsigned_abs() > n as u64 || (n as i64 - b) % 2 != 0 => {
                    errs.push(FieldError::new(
                        "initial_condition",
                        format!("bias {b} needs |b| <= n and the parity of n = {n}"),
                    ))
                }
                _ => {}
            }
            if let Some(s) = self.infection_source {
                if s >= n {
                    errs.push(FieldError::new("infection_source", format!("node {s} out of range for n = {n}")));
                }
            }
        }
        errs
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.validation_errors();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidSpec(errs))
        }
    }

    fn effective_params(&self) -> MajorityParams {
        MajorityParams {
            soak: self.soak || self.params.soak,
            ..self.params.clone()
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    pub protocol: String,
    pub model: String,
    pub n: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub replica_index: u64,
    pub rounds: u64,
    pub converged: bool,
    pub final_value: Option<u8>,
    pub valid: bool,
    pub initial_bias: i64,
    pub final_bias: i64,
    pub infected_final: Option<usize>,
    pub wall_time_ms: f64,
}

pub const CSV_HEADER: &str = "run_id,protocol,model,n,epsilon,seed,replica_index,rounds,converged,final_value,valid,initial_bias,final_bias,infected_final,wall_time_ms";

pub fn write_csv<W: Write>(records: &[RunRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub epsilon: f64,
    pub replicas: u64,
    /// Converged to a valid value.
    pub successes: u64,
    pub success_rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub mean_rounds: f64,
    pub median_rounds: f64,
    /// Over converged runs only; `null` if none converged.
    pub mean_convergence_round: Option<f64>,
    /// Runs whose output equals the input majority, over runs with a
    /// strict input majority.
    pub majority_rate: Option<f64>,
    /// Runs whose unanimity survived the soak, when soaking.
    pub soak_held_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub protocol: ProtocolKind,
    pub model: ModelKind,
    pub master_seed: u64,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    pub summary: SweepSummary,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Write 0 instead of the measured wall time.
    pub omit_wall_time: bool,
}

struct Run {
    record: RunRecord,
    convergence_round: Option<u64>,
    matched_majority: Option<bool>,
    soak_held: Option<bool>,
}

pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    run_sweep_with(spec, SweepOptions::default())
}

pub fn run_sweep_with(spec: &ExperimentSpec, options: SweepOptions) -> Result<SweepResult> {
    spec.validate()?;
    let cells: Vec<(usize, f64)> = spec
        .n_values
        .iter()
        .flat_map(|&n| spec.epsilon_values.iter().map(move |&e| (n, e)))
        .collect();
    let jobs: Vec<(u64, usize, f64, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, &(n, eps))| (0..spec.replicas).map(move |r| (c as u64 * spec.replicas + r, n, eps, r)))
        .collect();
    let mut runs = jobs
        .into_par_iter()
        .map(|(global, n, eps, r)| run_one(spec, global, n, eps, r, options))
        .collect::<Result<Vec<Run>>>()?;
    runs.sort_by(|a, b| {
        (a.record.n, a.record.epsilon, a.record.replica_index)
            .partial_cmp(&(b.record.n, b.record.epsilon, b.record.replica_index))
            .expect("finite epsilon")
    });

    let mut summaries = Vec::with_capacity(cells.len());
    for chunk in runs.chunks(spec.replicas as usize) {
        summaries.push(summarize_cell(chunk));
    }
    summaries.sort_by(|a, b| (a.n, a.epsilon).partial_cmp(&(b.n, b.epsilon)).expect("finite epsilon"));
    Ok(SweepResult {
        records: runs.into_iter().map(|r| r.record).collect(),
        summary: SweepSummary {
            protocol: spec.protocol,
            model: spec.model,
            master_seed: spec.master_seed,
            cells: summaries,
        },
    })
}

fn run_one(spec: &ExperimentSpec, global: u64, n: usize, eps: f64, replica: u64, options: SweepOptions) -> Result<Run> {
    let start = Instant::now();
    let mut rng = RandomStream::new(spec.master_seed, global);
    let channel = NoiseChannel::new(eps)?;
    let params = spec.effective_params();
    let (outcome, initial) = match spec.protocol {
        ProtocolKind::Broadcast => {
            let bp = BroadcastParams {
                c_b: spec.c_b,
                majority: params,
            };
            let out = run_noisy_broadcast(&channel, n, spec.source_bit, &bp, true, &mut rng)?;
            (out, None)
        }
        kind => {
            let initial = spec.initial_condition.build(n, &mut rng)?;
            let infection = spec.infection_source.map(|s| InfectionState::single(n, s)).transpose()?;
            let out = run_protocol(kind, &channel, &initial, &params, infection, &mut rng)?;
            (out, Some(initial))
        }
    };
    let wall = if options.omit_wall_time {
        0.0
    } else {
        start.elapsed().as_secs_f64() * 1e3
    };
    let matched_majority = initial
        .and_then(|v| v.majority())
        .map(|m| outcome.converged && outcome.final_value == Some(m));
    Ok(Run {
        convergence_round: outcome.convergence_round,
        soak_held: outcome.soak.as_ref().map(|s| s.held),
        matched_majority,
        record: RunRecord {
            run_id: global,
            protocol: spec.protocol.to_string(),
            model: spec.model.to_string(),
            n,
            epsilon: eps,
            seed: spec.master_seed,
            replica_index: replica,
            rounds: outcome.pull_rounds,
            converged: outcome.converged,
            final_value: outcome.final_value.map(Opinion::as_u8),
            valid: outcome.valid,
            initial_bias: outcome.initial_bias(),
            final_bias: outcome.final_bias(),
            infected_final: outcome.infected_final(),
            wall_time_ms: wall,
        },
    })
}

fn rate(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (hits, total) = flags.fold((0u64, 0u64), |(h, t), f| (h + f as u64, t + 1));
    (total > 0).then(|| hits as f64 / total as f64)
}

fn summarize_cell(runs: &[Run]) -> CellSummary {
    let first = &runs[0].record;
    let trials = runs.len() as u64;
    let successes = runs.iter().filter(|r| r.record.converged && r.record.valid).count() as u64;
    let (wilson_low, wilson_high) = wilson_interval(successes, trials);
    let rounds: Vec<f64> = runs.iter().map(|r| r.record.rounds as f64).collect();
    let conv: Vec<f64> = runs.iter().filter_map(|r| r.convergence_round.map(|c| c as f64)).collect();
    CellSummary {
        n: first.n,
        epsilon: first.epsilon,
        replicas: trials,
        successes,
        success_rate: successes as f64 / trials as f64,
        wilson_low,
        wilson_high,
        mean_rounds: mean(&rounds).unwrap_or(f64::NAN),
        median_rounds: median(&rounds).unwrap_or(f64::NAN),
        mean_convergence_round: mean(&conv),
        majority_rate: rate(runs.iter().filter_map(|r| r.matched_majority)),
        soak_held_rate: rate(runs.iter().filter_map(|r| r.soak_held)),
    }
}

/// Runs a consensus protocol from `initial`, tracking infection if given.
pub fn run_protocol(
    kind: ProtocolKind,
    channel: &NoiseChannel,
    initial: &OpinionVector,
    params: &MajorityParams,
    infection: Option<InfectionState>,
    rng: &mut RandomStream,
) -> Result<RunOutcome> {
    match kind {
        ProtocolKind::Majority => run_majority_tracked(channel, initial, params, infection, rng),
        ProtocolKind::CopyNodeOne => {
            let (next, transcript) = copy_node_one_round(initial, ModelKind::GeneralPull)?;
            let infected_trajectory = infection.map(|mut s| {
                let before = s.count();
                s.apply(&transcript);
                vec![before, s.count()]
            });
            let final_value = next.unanimous_value();
            Ok(RunOutcome {
                converged: final_value.is_some(),
                final_value,
                rounds_used: 1,
                pull_rounds: 1,
                bias_trajectory: vec![initial.bias(), next.bias()],
                valid: final_value.is_some_and(|v| initial.contains(v)),
                infected_trajectory,
                convergence_round: final_value.map(|_| 1),
                soak: None,
                phase1_correct: None,
                final_config: next,
            })
        }
        ProtocolKind::Broadcast => Err(Error::param(
            "protocol",
            "broadcast takes a source bit, not an input vector",
        )),
    }
}

pub const WILSON_Z: f64 = 1.959964;

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
}

/// Least squares `y = intercept + slope * x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::param("xs", "need at least two paired points"));
    }
    let mx = mean(xs).unwrap();
    let my = mean(ys).unwrap();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("xs", "all x values are equal"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        intercept: my - slope * mx,
        slope,
        r_squared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridReport {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub replicas: u64,
    /// Estimated probability of consensus on 1 from `canonical(n, k)`, k = 0..=n.
    pub z: Vec<f64>,
    /// `gaps[k - 1] = z[k - 1] - z[k]` for k = 1..=n.
    pub gaps: Vec<f64>,
    pub k_star: usize,
    pub max_gap: f64,
    /// Node whose input differs between the two configurations at `k_star`.
    pub source: usize,
    pub delta: f64,
    /// Fraction of reruns from `canonical(n, k_star)` in which at least
    /// `(1 - 2 delta) n` nodes were infected from `source`.
    pub infection_estimate: f64,
}

/// Scans the hybrid chain `canonical(n, 0..=n)` for the largest drop in the
/// probability of deciding 1, then measures infection from the node that
/// flips at that step.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_scan(
    protocol: ProtocolKind,
    model: ModelKind,
    channel: &NoiseChannel,
    params: &MajorityParams,
    n: usize,
    replicas: u64,
    delta: f64,
    master_seed: u64,
) -> Result<HybridReport> {
    protocol.check_model(model)?;
    if protocol == ProtocolKind::Broadcast {
        return Err(Error::param("protocol", "hybrid scan needs a consensus protocol"));
    }
    if !(4..=64).contains(&n) {
        return Err(Error::param("n", format!("hybrid scan supports 4 <= n <= 64, got {n}")));
    }
    if replicas < 1 {
        return Err(Error::param("replicas", "must be at least 1"));
    }
    if !(0.0..0.5).contains(&delta) {
        return Err(Error::param("delta", format!("must lie in [0, 1/2), got {delta}")));
    }
    let z = (0..=n)
        .into_par_iter()
        .map(|k| {
            let initial = OpinionVector::canonical(n, k)?;
            let mut ones = 0u64;
            for r in 0..replicas {
                let mut rng = RandomStream::new(master_seed, k as u64 * replicas + r);
                let out = run_protocol(protocol, channel, &initial, params, None, &mut rng)?;
                ones += (out.final_value == Some(Opinion::One) && out.converged) as u64;
            }
            Ok(ones as f64 / replicas as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let gaps: Vec<f64> = z.windows(2).map(|w| w[0] - w[1]).collect();
    let (idx, &max_gap) = gaps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("n >= 4");
    let k_star = idx + 1;
    let source = k_star - 1;
    let needed = ((1.0 - 2.0 * delta) * n as f64).ceil() as usize;
    let offset = (n as u64 + 1) * replicas;
    let initial = OpinionVector::canonical(n, k_star)?;
    let hits = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::new(master_seed, offset + r);
            let infection = InfectionState::single(n, source)?;
            let out = run_protocol(protocol, channel, &initial, params, Some(infection), &mut rng)?;
            Ok((out.infected_final().unwrap_or(0) >= needed) as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    Ok(HybridReport {
        protocol,
        n,
        replicas,
        z,
        gaps,
        k_star,
        max_gap,
        source,
        delta,
        infection_estimate: hits as f64 / replicas as f64,
    })
}

pub const GAMMAS: [f64; 3] = [0.5, 0.9, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaReach {
    pub gamma: f64,
    /// First round with at least `ceil(gamma n)` infected, per replica.
    pub first_round: Vec<Option<u64>>,
}

impl GammaReach {
    pub fn reached_fraction(&self) -> f64 {
        self.first_round.iter().filter(|r| r.is_some()).count() as f64 / self.first_round.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectionGrowthReport {
    pub model: ModelKind,
    pub n: usize,
    pub initial_infected: usize,
    pub rounds: u64,
    /// `trajectories[r][t]` is the infected count of replica `r` after `t`
    /// rounds.
    pub trajectories: Vec<Vec<usize>>,
    pub reach: Vec<GammaReach>,
    pub max_infected: Vec<usize>,
}

impl InfectionGrowthReport {
    /// Per-round growth factors `I(t+1) / I(t)` over rounds starting at or
    /// below `limit` infected.
    pub fn growth_factors_below(&self, limit: usize) -> Vec<f64> {
        self.trajectories
            .iter()
            .flat_map(|t| {
                t.windows(2)
                    .filter(|w| w[0] <= limit)
                    .map(|w| w[1] as f64 / w[0] as f64)
            })
            .collect()
    }
}

/// Content-free infection dynamics from nodes `0..initial_infected`. One
/// round of the population model is `n` steps.
pub fn infection_growth_experiment(
    model: ModelKind,
    n: usize,
    initial_infected: usize,
    rounds: u64,
    replicas: u64,
    master_seed: u64,
) -> Result<InfectionGrowthReport> {
    if !model.is_uniform() {
        return Err(Error::ModelMismatch {
            expected: "uniform or population",
            actual: model.to_string(),
        });
    }
    if n < 2 {
        return Err(Error::param("n", format!("need n >= 2, got {n}")));
    }
    if initial_infected < 1 || initial_infected > n {
        return Err(Error::param(
            "initial_infected",
            format!("must lie in 1..=n = {n}, got {initial_infected}"),
        ));
    }
    if replicas < 1 {
        return Err(Error::param("replicas", "must be at least 1"));
    }
    let trajectories = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = RandomStream::new(master_seed, r);
            infection_trajectory(model, n, initial_infected, rounds, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    let reach = GAMMAS
        .iter()
        .map(|&gamma| {
            let target = (gamma * n as f64).ceil() as usize;
            GammaReach {
                gamma,
                first_round: trajectories
                    .iter()
                    .map(|t| t.iter().position(|&c| c >= target).map(|p| p as u64))
                    .collect(),
            }
        })
        .collect();
    let max_infected = trajectories.iter().map(|t| *t.iter().max().unwrap()).collect();
    Ok(InfectionGrowthReport {
        model,
        n,
        initial_infected,
        rounds,
        trajectories,
        reach,
        max_infected,
    })
}

fn infection_trajectory(
    model: ModelKind,
    n: usize,
    initial: usize,
    rounds: u64,
    rng: &mut RandomStream,
) -> Result<Vec<usize>> {
    let shown = OpinionVector::unanimous(n, Opinion::Zero)?;
    let ch = NoiseChannel::noiseless();
    let mut state = InfectionState::new(n, 0..initial)?;
    let mut traj = vec![state.count()];
    for _ in 0..rounds {
        match model {
            ModelKind::UniformPull => state.apply(&pull_round(&shown, &ch, 1, rng)?.transcript),
            ModelKind::UniformPush => state.apply(&push_round(&vec![Some(Opinion::Zero); n], &ch, rng)),
            ModelKind::UniformGossip => state.apply(&gossip_round(&shown, &ch, rng)),
            ModelKind::PopulationUniform => {
                for _ in 0..n {
                    state.apply(&population_step(&shown, &ch, rng));
                }
            }
            ModelKind::GeneralPull | ModelKind::GeneralPush => unreachable!("rejected above"),
        }
        traj.push(state.count());
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReplica {
    /// Output matched the input majority, for the 0-majority and the
    /// 1-majority input.
    pub correct: [bool; 2],
    /// Fraction infected by some source at the convergence round, when the
    /// run converged.
    pub infected_fraction: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityPairReport {
    pub n: usize,
    pub b: usize,
    pub replicas: Vec<PairReplica>,
    pub correct_rate: [f64; 2],
    /// Median over both sides of replicas correct on both sides.
    pub median_infected_when_correct: Option<f64>,
}

/// Runs both inputs of `OpinionVector::majority_pair(n, b)` with infection
/// tracked from the last `b` nodes, where the two inputs differ.
pub fn majority_pair_experiment(
    n: usize,
    b: usize,
    protocol: ProtocolKind,
    channel: &NoiseChannel,
    params: &MajorityParams,
    replicas: u64,
    master_seed: u64,
) -> Result<MajorityPairReport> {
    if protocol != ProtocolKind::Majority {
        return Err(Error::param("protocol", "majority-pair runs the Majority Protocol"));
    }
    let (zero_side, one_side) = OpinionVector::majority_pair(n, b)?;
    if replicas < 1 {
        return Err(Error::param("replicas", "must be at least 1"));
    }
    let sides = [(zero_side, Opinion::Zero), (one_side, Opinion::One)];
    let reps = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut correct = [false; 2];
            let mut infected_fraction = [None; 2];
            for (side, (input, majority)) in sides.iter().enumerate() {
                let mut rng = RandomStream::new(master_seed, 2 * r + side as u64);
                let infection = InfectionState::new(n, n - b..n)?;
                let out = run_protocol(protocol, channel, input, params, Some(infection), &mut rng)?;
                correct[side] = out.converged && out.final_value == Some(*majority);
                infected_fraction[side] = out.convergence_round.map(|t| {
                    let traj = out.infected_trajectory.as_ref().expect("tracked");
                    traj[t as usize] as f64 / n as f64
                });
            }
            Ok(PairReplica {
                correct,
                infected_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let side_rate = |s: usize| reps.iter().filter(|r| r.correct[s]).count() as f64 / reps.len() as f64;
    let both: Vec<f64> = reps
        .iter()
        .filter(|r| r.correct[0] && r.correct[1])
        .flat_map(|r| r.infected_fraction.iter().flatten().copied())
        .collect();
    Ok(MajorityPairReport {
        n,
        b,
        correct_rate: [side_rate(0), side_rate(1)],
        median_infected_when_correct: median(&both),
        replicas: reps,
    })
}
