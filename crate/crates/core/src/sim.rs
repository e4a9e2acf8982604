//! Trajectories, batches, aggregation and Monte Carlo concentration checks.
//!
//! Randomness layout: iteration `i` of a batch owns the stream
//! `RngStream::new(master_seed, i)`. Lane 0 feeds the policy's internal
//! randomness (Thompson draws), lane `a + 1` feeds the rewards of arm `a`, so
//! the `k`-th pull of an arm yields the same reward under every policy.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{lemma3_rhs, lemma5_rhs, Lemma3Part};
use crate::error::{invalid, Error, Result};
use crate::model::{draw, kl_div, BanditInstance, RewardFamily, RngStream};
use crate::policies::{Policy, PolicySpec};

/// Outcome of one policy run on one reward stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub policy: String,
    pub checkpoints: Vec<u64>,
    /// Pseudo-regret `sum_a gap_a N_a(t)` at each checkpoint.
    pub regret: Vec<f64>,
    /// Commitment round, or the horizon for runs that never commit.
    pub commit_round: u64,
    pub committed_arm: Option<usize>,
    pub miscommit: bool,
}

fn check_checkpoints(checkpoints: &[u64], horizon: u64) -> Result<()> {
    if let Some(&first) = checkpoints.first() {
        if first == 0 {
            return invalid("checkpoints must be >= 1");
        }
    }
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return invalid("checkpoints must be strictly increasing");
    }
    if checkpoints.last().is_some_and(|&c| c > horizon) {
        return invalid(format!("checkpoints must not exceed the horizon {horizon}"));
    }
    Ok(())
}

fn pseudo_regret(gaps: &[f64], counts: &[u64]) -> f64 {
    gaps.iter().zip(counts).map(|(g, &n)| g * n as f64).sum()
}

/// Core loop. `on_pull(arm, reward)` sees every pull made before the
/// commitment; later rounds are fast-forwarded without drawing rewards.
fn drive(
    spec: &PolicySpec,
    instance: &BanditInstance,
    horizon: u64,
    checkpoints: &[u64],
    stream: &RngStream,
    mut on_pull: impl FnMut(usize, f64),
) -> Result<TrajectoryRecord> {
    let num_arms = instance.num_arms();
    if horizon < num_arms as u64 {
        return invalid(format!(
            "horizon {horizon} is shorter than the {num_arms} initialization rounds"
        ));
    }
    check_checkpoints(checkpoints, horizon)?;
    let family = instance.family();
    let means = instance.means();
    let gaps = instance.gaps();
    let mut policy = Policy::new(spec.clone(), family, num_arms, horizon)?;
    let mut internal = stream.lane(0);
    let mut reward_rngs: Vec<RngStream> =
        (0..num_arms).map(|a| stream.lane(a as u64 + 1)).collect();
    let mut counts = vec![0u64; num_arms];
    let mut regret = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    let mut t = 0u64;

    while t < horizon && policy.commitment().is_none() {
        let arm = policy.select_action(&mut internal)?;
        let reward = draw(family, means[arm], &mut reward_rngs[arm]);
        on_pull(arm, reward);
        policy.observe(arm, reward)?;
        counts[arm] += 1;
        t += 1;
        while next < checkpoints.len() && checkpoints[next] == t {
            regret.push(pseudo_regret(&gaps, &counts));
            next += 1;
        }
    }

    let commitment = policy.commitment();
    if let Some(c) = commitment {
        let base = pseudo_regret(&gaps, &counts);
        for &cp in &checkpoints[next..] {
            regret.push(base + gaps[c.arm] * (cp - t) as f64);
        }
    }
    debug_assert_eq!(regret.len(), checkpoints.len());

    Ok(TrajectoryRecord {
        policy: spec.name().to_string(),
        checkpoints: checkpoints.to_vec(),
        regret,
        commit_round: commitment.map_or(horizon, |c| c.round),
        committed_arm: commitment.map(|c| c.arm),
        miscommit: commitment.is_some_and(|c| c.arm != instance.optimal_arm()),
    })
}

/// Run one policy for `horizon` rounds on `stream`.
pub fn run_trajectory(
    spec: &PolicySpec,
    instance: &BanditInstance,
    horizon: u64,
    checkpoints: &[u64],
    stream: &RngStream,
) -> Result<TrajectoryRecord> {
    drive(spec, instance, horizon, checkpoints, stream, |_, _| {})
}

/// Like [`run_trajectory`], also returning the full action sequence
/// (`horizon` entries) and the rewards observed before the commitment.
pub fn run_trajectory_traced(
    spec: &PolicySpec,
    instance: &BanditInstance,
    horizon: u64,
    checkpoints: &[u64],
    stream: &RngStream,
) -> Result<(TrajectoryRecord, Vec<usize>, Vec<f64>)> {
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let record = drive(spec, instance, horizon, checkpoints, stream, |a, r| {
        actions.push(a);
        rewards.push(r);
    })?;
    if let Some(arm) = record.committed_arm {
        actions.resize(horizon as usize, arm);
    }
    Ok((record, actions, rewards))
}

/// `points` log-spaced rounds from `num_arms` to `horizon`, deduplicated.
/// The horizon is always included.
pub fn default_checkpoints(num_arms: usize, horizon: u64, points: usize) -> Vec<u64> {
    let lo = (num_arms.max(1) as u64).min(horizon).max(1);
    if points <= 1 || lo == horizon {
        return vec![horizon];
    }
    let (a, b) = ((lo as f64).ln(), (horizon as f64).ln());
    let mut out: Vec<u64> = (0..points)
        .map(|i| {
            let x = a + (b - a) * i as f64 / (points - 1) as f64;
            (x.exp().round() as u64).clamp(lo, horizon)
        })
        .collect();
    out.dedup();
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

/// Per-policy summary over iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAggregate {
    pub policy: String,
    pub iterations: u64,
    pub mean_regret: Vec<f64>,
    pub stderr: Vec<f64>,
    pub tc_mean: f64,
    pub tc_median: f64,
    /// Nearest-rank 95th percentile.
    pub tc_p95: f64,
    /// Fraction of all iterations that committed to a sub-optimal arm.
    pub miscommit_rate: f64,
    pub miscommit_stderr: f64,
}

impl PolicyAggregate {
    pub fn final_mean_regret(&self) -> f64 {
        self.mean_regret.last().copied().unwrap_or(0.0)
    }

    pub fn final_stderr(&self) -> f64 {
        self.stderr.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub checkpoints: Vec<u64>,
    pub policies: Vec<PolicyAggregate>,
}

impl AggregateStats {
    pub fn policy(&self, name: &str) -> Option<&PolicyAggregate> {
        self.policies.iter().find(|p| p.policy == name)
    }
}

/// Welford accumulator for one policy, fed in iteration order.
#[derive(Debug, Clone)]
struct Accumulator {
    policy: String,
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    commit_rounds: Vec<u64>,
    miscommits: u64,
}

impl Accumulator {
    fn new(policy: &str, len: usize) -> Self {
        Self {
            policy: policy.to_string(),
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            commit_rounds: Vec::new(),
            miscommits: 0,
        }
    }

    fn push(&mut self, record: &TrajectoryRecord) {
        self.n += 1;
        let n = self.n as f64;
        for ((mean, m2), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(&record.regret) {
            let d = x - *mean;
            *mean += d / n;
            *m2 += d * (x - *mean);
        }
        self.commit_rounds.push(record.commit_round);
        self.miscommits += record.miscommit as u64;
    }

    fn finish(mut self) -> PolicyAggregate {
        let n = self.n as f64;
        let stderr = self
            .m2
            .iter()
            .map(|&m2| {
                if self.n > 1 {
                    (m2 / (n - 1.0)).sqrt() / n.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        self.commit_rounds.sort_unstable();
        let tc = &self.commit_rounds;
        let tc_mean = tc.iter().map(|&x| x as f64).sum::<f64>() / n;
        let mid = tc.len() / 2;
        let tc_median = if tc.len() % 2 == 1 {
            tc[mid] as f64
        } else {
            (tc[mid - 1] as f64 + tc[mid] as f64) / 2.0
        };
        let rank = ((0.95 * n).ceil() as usize).clamp(1, tc.len());
        let rate = self.miscommits as f64 / n;
        PolicyAggregate {
            policy: self.policy,
            iterations: self.n,
            mean_regret: self.mean,
            stderr,
            tc_mean,
            tc_median,
            tc_p95: tc[rank - 1] as f64,
            miscommit_rate: rate,
            miscommit_stderr: (rate * (1.0 - rate) / n).sqrt(),
        }
    }
}

/// Fold in record order, grouping by policy in order of first appearance.
struct Aggregator {
    checkpoints: Option<Vec<u64>>,
    accs: Vec<Accumulator>,
}

impl Aggregator {
    fn new() -> Self {
        Self {
            checkpoints: None,
            accs: Vec::new(),
        }
    }

    fn push(&mut self, record: &TrajectoryRecord) -> Result<()> {
        match &self.checkpoints {
            None => self.checkpoints = Some(record.checkpoints.clone()),
            Some(cps) if *cps != record.checkpoints => {
                return invalid(format!(
                    "record for {} has checkpoints differing from the first record",
                    record.policy
                ))
            }
            Some(_) => {}
        }
        if record.regret.len() != record.checkpoints.len() {
            return invalid("record regret length differs from its checkpoint count");
        }
        let idx = match self.accs.iter().position(|a| a.policy == record.policy) {
            Some(i) => i,
            None => {
                self.accs
                    .push(Accumulator::new(&record.policy, record.checkpoints.len()));
                self.accs.len() - 1
            }
        };
        self.accs[idx].push(record);
        Ok(())
    }

    fn finish(self) -> Result<AggregateStats> {
        let Some(checkpoints) = self.checkpoints else {
            return invalid("cannot aggregate an empty record list");
        };
        Ok(AggregateStats {
            checkpoints,
            policies: self.accs.into_iter().map(Accumulator::finish).collect(),
        })
    }
}

/// Summarize records; mean, standard error and commitment statistics per policy.
pub fn aggregate(records: &[TrajectoryRecord]) -> Result<AggregateStats> {
    let mut agg = Aggregator::new();
    for r in records {
        agg.push(r)?;
    }
    agg.finish()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchOptions {
    /// Share one stream per iteration across all policies.
    pub paired: bool,
    /// Worker threads; 0 uses the global rayon pool.
    pub threads: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            paired: true,
            threads: 0,
        }
    }
}

// Iterations simulated between two sequential folds; bounds memory use.
const CHUNK: u64 = 256;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Run every spec for `iterations` iterations and aggregate.
///
/// Paired mode gives iteration `i` the stream `i` for all policies; unpaired
/// mode gives policy `p` the stream `i * P + p`.
pub fn run_batch(
    specs: &[PolicySpec],
    instance: &BanditInstance,
    horizon: u64,
    iterations: u64,
    checkpoints: &[u64],
    master_seed: u64,
    options: BatchOptions,
) -> Result<AggregateStats> {
    if iterations == 0 {
        return invalid("iterations must be >= 1");
    }
    if specs.is_empty() {
        return invalid("at least one policy is required");
    }
    let num_specs = specs.len() as u64;
    in_pool(options.threads, || {
        let mut agg = Aggregator::new();
        let mut start = 0;
        while start < iterations {
            let end = (start + CHUNK).min(iterations);
            let chunk: Vec<Vec<TrajectoryRecord>> = (start..end)
                .into_par_iter()
                .map(|i| {
                    specs
                        .iter()
                        .enumerate()
                        .map(|(p, spec)| {
                            let index = if options.paired {
                                i
                            } else {
                                i * num_specs + p as u64
                            };
                            let stream = RngStream::new(master_seed, index);
                            run_trajectory(spec, instance, horizon, checkpoints, &stream)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            for record in chunk.iter().flatten() {
                agg.push(record)?;
            }
            start = end;
        }
        agg.finish()
    })?
}

/// Concentration lemma whose deviation event is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConcLemma {
    #[serde(rename = "3a")]
    L3a,
    #[serde(rename = "3b")]
    L3b,
    #[serde(rename = "3c")]
    L3c,
    #[serde(rename = "5")]
    L5,
}

impl ConcLemma {
    pub fn tag(self) -> &'static str {
        match self {
            ConcLemma::L3a => "3a",
            ConcLemma::L3b => "3b",
            ConcLemma::L3c => "3c",
            ConcLemma::L5 => "5",
        }
    }
}

impl std::str::FromStr for ConcLemma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches("lemma") {
            "3a" => Ok(ConcLemma::L3a),
            "3b" => Ok(ConcLemma::L3b),
            "3c" => Ok(ConcLemma::L3c),
            "5" => Ok(ConcLemma::L5),
            _ => invalid(format!("unknown lemma tag {s:?}; expected 3a, 3b, 3c or 5")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcParams {
    pub l: f64,
    pub t1: f64,
    pub t2: f64,
    /// Deviation margin (3b, 3c).
    pub delta: f64,
    /// Reward mean of the sampled sequence (lemma 5).
    pub mean: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcResult {
    /// Event frequency (3a, 3b, 5) or mean deviation-round count (3c).
    pub empirical: f64,
    pub stderr: f64,
    pub analytic: f64,
}

impl ConcResult {
    pub fn dominated(&self) -> bool {
        self.empirical <= self.analytic + 3.0 * self.stderr
    }
}

/// Integer outcome of one trial: event indicator, or deviation count for 3c.
fn conc_trial(lemma: ConcLemma, p: &ConcParams, family: RewardFamily, rng: &mut RngStream) -> u64 {
    let last = p.t2.floor() as u64;
    let mut sum = 0.0;
    let mut hits = 0u64;
    for s in 1..=last {
        let sf = s as f64;
        let w: f64 = match lemma {
            ConcLemma::L5 => draw(family, p.mean, rng),
            _ => rng.sample(StandardNormal),
        };
        sum += w;
        let avg = sum / sf;
        let ucb = avg + (2.0 * p.l / sf).sqrt();
        let hit = match lemma {
            ConcLemma::L3a => sf > p.t1 && ucb <= 0.0,
            ConcLemma::L3b => sf >= p.t1 && ucb + p.delta <= 0.0,
            ConcLemma::L3c => sf > p.t1 && ucb >= p.delta,
            ConcLemma::L5 => sf >= p.t1 && avg <= p.mean && sf * kl_div(family, avg, p.mean) >= p.l,
        };
        if hit {
            if lemma != ConcLemma::L3c {
                return 1;
            }
            hits += 1;
        }
    }
    hits
}

/// Monte Carlo estimate of a concentration lemma's left-hand side next to its
/// evaluated right-hand side. Trial `k` uses stream `k` of `master_seed`.
pub fn mc_concentration(
    lemma: ConcLemma,
    params: ConcParams,
    family: RewardFamily,
    trials: u64,
    master_seed: u64,
) -> Result<ConcResult> {
    if trials == 0 {
        return invalid("trials must be >= 1");
    }
    let analytic = match lemma {
        ConcLemma::L3a => lemma3_rhs(Lemma3Part::A, params.l, params.t1, params.t2, params.delta)?,
        ConcLemma::L3b => lemma3_rhs(Lemma3Part::B, params.l, params.t1, params.t2, params.delta)?,
        ConcLemma::L3c => lemma3_rhs(Lemma3Part::C, params.l, params.t1, params.t2, params.delta)?,
        ConcLemma::L5 => {
            if !(params.mean > family.mean_lower() && params.mean < family.mean_upper())
                && family == RewardFamily::Bernoulli
            {
                return invalid(format!(
                    "lemma 5 needs a Bernoulli mean in (0, 1), got {}",
                    params.mean
                ));
            }
            lemma5_rhs(params.l, params.t1, params.t2)?
        }
    }
    .value;
    if lemma != ConcLemma::L5 && family != RewardFamily::GaussianUnitVariance {
        return invalid(format!(
            "lemma {} is stated for standard normal noise",
            lemma.tag()
        ));
    }

    let (total, total_sq) = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngStream::new(master_seed, k);
            let x = conc_trial(lemma, &params, family, &mut rng) as u128;
            (x, x * x)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let n = trials as f64;
    let empirical = total as f64 / n;
    let stderr = if trials > 1 {
        let var = (total_sq as f64 - n * empirical * empirical) / (n - 1.0);
        (var.max(0.0) / n).sqrt()
    } else {
        0.0
    };
    Ok(ConcResult {
        empirical,
        stderr,
        analytic,
    })
}
