//! Decision policies as state machines.
//!
//! Every policy pulls each arm once (round robin) and is then driven by
//! alternating [`Policy::select_action`] and [`Policy::observe`] calls.
//! Committing policies (EOCP, EOCP-UG, KL-EOCP, uniform ETC) freeze their
//! action once the commitment fires; the others keep adapting until the
//! horizon.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::confidence::{bonus, exploration_rate, kl_lower_raw, kl_upper_raw, ArmStat};
use crate::error::{invalid, Error, Result};
use crate::model::{argmax, RewardFamily};

/// Algorithm roster. The serde names are the tags used in configs and CSVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "eocp")]
    Eocp,
    #[serde(rename = "eocp-ug")]
    EocpUg,
    #[serde(rename = "kl-eocp")]
    KlEocp,
    #[serde(rename = "ucb")]
    Ucb,
    #[serde(rename = "kl-ucb")]
    KlUcb,
    #[serde(rename = "ts")]
    Ts,
    #[serde(rename = "uniform-etc")]
    UniformEtc,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Eocp,
        Algorithm::EocpUg,
        Algorithm::KlEocp,
        Algorithm::Ucb,
        Algorithm::KlUcb,
        Algorithm::Ts,
        Algorithm::UniformEtc,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Algorithm::Eocp => "eocp",
            Algorithm::EocpUg => "eocp-ug",
            Algorithm::KlEocp => "kl-eocp",
            Algorithm::Ucb => "ucb",
            Algorithm::KlUcb => "kl-ucb",
            Algorithm::Ts => "ts",
            Algorithm::UniformEtc => "uniform-etc",
        }
    }

    /// Whether the algorithm ever stops exploring.
    pub fn commits(self) -> bool {
        matches!(
            self,
            Algorithm::Eocp | Algorithm::EocpUg | Algorithm::KlEocp | Algorithm::UniformEtc
        )
    }

    /// Whether the algorithm uses the fixed exploration rate `l`.
    pub fn uses_exploration_rate(self) -> bool {
        matches!(
            self,
            Algorithm::Eocp | Algorithm::EocpUg | Algorithm::KlEocp
        )
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm tag {s:?}")))
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// An algorithm tag with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub algorithm: Algorithm,
    /// Display name; the algorithm tag when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Lower bound on the minimum gap (eocp).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_lb: Option<f64>,
    /// Lower bound on `KL_min`, in nats (kl-eocp).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl_lb: Option<f64>,
    /// UCB bonus inflation; 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Total round-robin exploration rounds (uniform-etc).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explore_budget: Option<u64>,
    /// Replaces `ln T + 4 sqrt(2 ln T)` as the exploration rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_override: Option<f64>,
}

impl PolicySpec {
    fn bare(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            label: None,
            delta_lb: None,
            kl_lb: None,
            alpha: None,
            explore_budget: None,
            l_override: None,
        }
    }

    pub fn eocp(delta_lb: f64) -> Self {
        Self {
            delta_lb: Some(delta_lb),
            ..Self::bare(Algorithm::Eocp)
        }
    }

    pub fn eocp_ug() -> Self {
        Self::bare(Algorithm::EocpUg)
    }

    pub fn kl_eocp(kl_lb: f64) -> Self {
        Self {
            kl_lb: Some(kl_lb),
            ..Self::bare(Algorithm::KlEocp)
        }
    }

    pub fn ucb() -> Self {
        Self::bare(Algorithm::Ucb)
    }

    pub fn ucb_alpha(alpha: f64) -> Self {
        Self {
            alpha: Some(alpha),
            ..Self::bare(Algorithm::Ucb)
        }
    }

    pub fn kl_ucb() -> Self {
        Self::bare(Algorithm::KlUcb)
    }

    pub fn ts() -> Self {
        Self::bare(Algorithm::Ts)
    }

    pub fn uniform_etc(explore_budget: u64) -> Self {
        Self {
            explore_budget: Some(explore_budget),
            ..Self::bare(Algorithm::UniformEtc)
        }
    }

    pub fn with_l_override(mut self, l: f64) -> Self {
        self.l_override = Some(l);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn name(&self) -> &str {
        self.label.as_deref().unwrap_or(self.algorithm.tag())
    }

    pub fn alpha_or_default(&self) -> f64 {
        self.alpha.unwrap_or(1.0)
    }

    /// Check that the parameters the algorithm needs are present and positive.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, v: Option<f64>, tag: &str) -> Result<()> {
            match v {
                None => invalid(format!("{tag} requires {name}")),
                Some(x) if !(x > 0.0) || !x.is_finite() => {
                    invalid(format!("{name} must be positive and finite, got {x}"))
                }
                Some(_) => Ok(()),
            }
        }
        let tag = self.algorithm.tag();
        match self.algorithm {
            Algorithm::Eocp => {
                positive("delta_lb", self.delta_lb, tag)?;
                if self.delta_lb > Some(1.0) {
                    return invalid(format!(
                        "delta_lb must lie in (0, 1], got {:?}",
                        self.delta_lb
                    ));
                }
            }
            Algorithm::KlEocp => positive("kl_lb", self.kl_lb, tag)?,
            Algorithm::UniformEtc => match self.explore_budget {
                None | Some(0) => return invalid("uniform-etc requires a positive explore_budget"),
                Some(_) => {}
            },
            _ => {}
        }
        if self.alpha.is_some() {
            positive("alpha", self.alpha, tag)?;
        }
        if self.l_override.is_some() {
            positive("l_override", self.l_override, tag)?;
        }
        Ok(())
    }
}

/// EOCP's pre-determined stopping round `ceil(8 A l / delta_lb^2) + A`.
pub fn eocp_stop_time(num_arms: usize, l: f64, delta_lb: f64) -> Result<u64> {
    if num_arms == 0 {
        return invalid("stop time needs at least one arm");
    }
    if !(l > 0.0) || !l.is_finite() {
        return invalid(format!("exploration rate must be positive, got {l}"));
    }
    if !(delta_lb > 0.0 && delta_lb <= 1.0) {
        return invalid(format!("delta_lb must lie in (0, 1], got {delta_lb}"));
    }
    let a = num_arms as f64;
    Ok((8.0 * a * l / (delta_lb * delta_lb)).ceil() as u64 + num_arms as u64)
}

/// KL-EOCP's exploration length `ceil(4 A l / kl_lb) + A`.
pub fn kl_eocp_stop_time(num_arms: usize, l: f64, kl_lb: f64) -> Result<u64> {
    if num_arms == 0 {
        return invalid("stop time needs at least one arm");
    }
    if !(l > 0.0) || !l.is_finite() {
        return invalid(format!("exploration rate must be positive, got {l}"));
    }
    if !(kl_lb > 0.0) || !kl_lb.is_finite() {
        return invalid(format!("kl_lb must be positive, got {kl_lb}"));
    }
    let a = num_arms as f64;
    Ok((4.0 * a * l / kl_lb).ceil() as u64 + num_arms as u64)
}

/// The adaptive stopping rule: the arm whose pull count exceeds `l` times
/// every other arm's count plus one, if there is one.
pub fn ug_stop_check(counts: &[u64], l: f64) -> Result<Option<usize>> {
    if counts.len() < 2 {
        return invalid("the adaptive stopping rule needs at least two arms");
    }
    // largest and second-largest counts give max_{a' != a} N(a') for every a
    let top = argmax_u64(counts);
    let runner_up = counts
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != top)
        .map(|(_, &n)| n)
        .max()
        .unwrap_or(0);
    let mut fired = None;
    let mut fired_count = 0;
    for (a, &n) in counts.iter().enumerate() {
        let others = if a == top { runner_up } else { counts[top] };
        if n as f64 > l * others as f64 + 1.0 {
            fired_count += 1;
            fired.get_or_insert(a);
        }
    }
    if l >= 1.0 {
        assert!(
            fired_count <= 1,
            "stopping rule fired for {fired_count} arms with l = {l}"
        );
    }
    Ok(fired)
}

fn argmax_u64(values: &[u64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Argmax of `mean - sqrt(2 l / N)`; every arm must have been pulled.
pub fn hoeffding_lcb_argmax(arms: &[ArmStat], l: f64) -> usize {
    let lcb: Vec<f64> = arms
        .iter()
        .map(|s| s.mean - bonus(s.pulls as f64, l))
        .collect();
    argmax(&lcb)
}

/// Argmax of the KL lower confidence bound; every arm must have been pulled.
pub fn kl_lcb_argmax(family: RewardFamily, arms: &[ArmStat], l: f64) -> usize {
    let lcb: Vec<f64> = arms
        .iter()
        .map(|s| kl_lower_raw(family, s.mean, s.pulls as f64, l))
        .collect();
    argmax(&lcb)
}

/// KL-UCB's per-round rate `ln t + 3 ln(max(ln t, 1))`.
pub fn kl_ucb_rate(t: u64) -> f64 {
    let log_t = (t as f64).ln();
    log_t + 3.0 * log_t.max(1.0).ln()
}

/// An irrevocable commitment to `arm`, made after round `round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub arm: usize,
    pub round: u64,
}

/// Mutable per-trajectory decision state of one policy.
#[derive(Debug, Clone)]
pub struct Policy {
    spec: PolicySpec,
    family: RewardFamily,
    horizon: u64,
    l: Option<f64>,
    stop_time: Option<u64>,
    arms: Vec<ArmStat>,
    // Exploration index cache for the fixed-rate algorithms; only the pulled
    // arm's entry changes between rounds.
    index: Vec<f64>,
    round: u64,
    pending: Option<usize>,
    commitment: Option<Commitment>,
}

impl Policy {
    pub fn new(
        spec: PolicySpec,
        family: RewardFamily,
        num_arms: usize,
        horizon: u64,
    ) -> Result<Self> {
        spec.validate()?;
        if num_arms == 0 {
            return invalid("a policy needs at least one arm");
        }
        if horizon < num_arms as u64 {
            return invalid(format!(
                "horizon {horizon} is shorter than the {num_arms}-round initialisation"
            ));
        }
        let l = if spec.algorithm.uses_exploration_rate() {
            Some(match spec.l_override {
                Some(l) => l,
                None => exploration_rate(horizon as f64)?,
            })
        } else {
            None
        };
        let stop_time = match spec.algorithm {
            Algorithm::Eocp => Some(eocp_stop_time(
                num_arms,
                l.unwrap(),
                spec.delta_lb.unwrap(),
            )?),
            Algorithm::KlEocp => Some(kl_eocp_stop_time(
                num_arms,
                l.unwrap(),
                spec.kl_lb.unwrap(),
            )?),
            Algorithm::UniformEtc => {
                let budget = spec.explore_budget.unwrap();
                if budget < num_arms as u64 {
                    return invalid(format!(
                        "explore_budget {budget} cannot cover one pull of each of {num_arms} arms"
                    ));
                }
                Some(budget)
            }
            _ => None,
        };
        Ok(Self {
            spec,
            family,
            horizon,
            l,
            stop_time,
            arms: vec![ArmStat::default(); num_arms],
            index: vec![0.0; num_arms],
            round: 1,
            pending: None,
            commitment: None,
        })
    }

    pub fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    pub fn algorithm(&self) -> Algorithm {
        self.spec.algorithm
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// The round whose action is next to be selected (1-based).
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn arms(&self) -> &[ArmStat] {
        &self.arms
    }

    pub fn pull_counts(&self) -> Vec<u64> {
        self.arms.iter().map(|s| s.pulls).collect()
    }

    /// The fixed exploration rate, for the algorithms that use one.
    pub fn exploration_rate(&self) -> Option<f64> {
        self.l
    }

    /// The pre-determined stopping round, for the algorithms that have one.
    pub fn stop_time(&self) -> Option<u64> {
        self.stop_time
    }

    pub fn commitment(&self) -> Option<Commitment> {
        self.commitment
    }

    /// Choose the action for the current round.
    pub fn select_action<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::Usage(format!(
                "round {} already has a selected action awaiting its reward",
                self.round
            )));
        }
        if self.round > self.horizon {
            return Err(Error::Usage(format!(
                "horizon {} already reached",
                self.horizon
            )));
        }
        let arm = self.choose(rng);
        self.pending = Some(arm);
        Ok(arm)
    }

    fn choose<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let num_arms = self.arms.len() as u64;
        if self.round <= num_arms {
            return ((self.round - 1) % num_arms) as usize;
        }
        if let Some(c) = self.commitment {
            return c.arm;
        }
        match self.spec.algorithm {
            Algorithm::Eocp | Algorithm::EocpUg | Algorithm::KlEocp => argmax(&self.index),
            Algorithm::Ucb => {
                let scale = self.spec.alpha_or_default();
                let log_t = (self.round as f64).ln();
                self.argmax_by(|s| s.mean + scale * bonus(s.pulls as f64, log_t))
            }
            Algorithm::KlUcb => {
                let rate = kl_ucb_rate(self.round);
                self.argmax_by(|s| kl_upper_raw(self.family, s.mean, s.pulls as f64, rate))
            }
            Algorithm::Ts => self.thompson(rng),
            Algorithm::UniformEtc => ((self.round - 1) % num_arms) as usize,
        }
    }

    fn argmax_by(&self, f: impl Fn(&ArmStat) -> f64) -> usize {
        let mut best = 0;
        let mut best_val = f(&self.arms[0]);
        for (a, s) in self.arms.iter().enumerate().skip(1) {
            let v = f(s);
            if v > best_val {
                best = a;
                best_val = v;
            }
        }
        best
    }

    fn thompson<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (a, s) in self.arms.iter().enumerate() {
            let v = match self.family {
                RewardFamily::GaussianUnitVariance => {
                    let z: f64 = rng.sample(StandardNormal);
                    s.mean + z / (s.pulls as f64).sqrt()
                }
                RewardFamily::Bernoulli => {
                    let n = s.pulls as f64;
                    let successes = (s.mean * n).round();
                    let posterior = Beta::new(successes + 1.0, n - successes + 1.0)
                        .expect("beta parameters are at least one");
                    posterior.sample(rng)
                }
            };
            if v > best_val {
                best = a;
                best_val = v;
            }
        }
        best
    }

    /// Fold in the reward of the action selected this round, then run the
    /// commitment checks.
    pub fn observe(&mut self, arm: usize, reward: f64) -> Result<()> {
        match self.pending {
            Some(selected) if selected == arm => {}
            Some(selected) => {
                return Err(Error::Usage(format!(
                    "observed arm {arm} but arm {selected} was selected in round {}",
                    self.round
                )))
            }
            None => {
                return Err(Error::Usage(format!(
                    "observed arm {arm} without selecting an action in round {}",
                    self.round
                )))
            }
        }
        self.pending = None;
        self.arms[arm].observe(reward);
        if let Some(l) = self.l {
            let s = self.arms[arm];
            self.index[arm] = kl_upper_raw(self.exploration_family(), s.mean, s.pulls as f64, l);
        }
        self.round += 1;
        self.check_commitment()
    }

    // EOCP and EOCP-UG use the Hoeffding index, which is the Gaussian KL form.
    fn exploration_family(&self) -> RewardFamily {
        match self.spec.algorithm {
            Algorithm::KlEocp => self.family,
            _ => RewardFamily::GaussianUnitVariance,
        }
    }

    fn check_commitment(&mut self) -> Result<()> {
        if self.commitment.is_some() {
            return Ok(());
        }
        let done = self.round - 1;
        let num_arms = self.arms.len();
        let fire = match self.spec.algorithm {
            Algorithm::Eocp | Algorithm::KlEocp | Algorithm::UniformEtc => {
                self.stop_time == Some(done)
            }
            Algorithm::EocpUg => {
                if done < num_arms as u64 {
                    false
                } else if num_arms == 1 {
                    true
                } else {
                    ug_stop_check(&self.pull_counts(), self.l.unwrap())?.is_some()
                }
            }
            _ => false,
        };
        if fire {
            self.commit_now()?;
        }
        Ok(())
    }

    /// Commit using the algorithm's identification rule on the current
    /// statistics: largest LCB (Hoeffding or KL), or largest empirical mean
    /// for uniform ETC. Lowest index wins ties.
    pub fn commit_now(&mut self) -> Result<usize> {
        if let Some(c) = self.commitment {
            return Err(Error::Usage(format!(
                "already committed to arm {} after round {}",
                c.arm, c.round
            )));
        }
        if self.arms.iter().any(|s| s.pulls == 0) {
            return Err(Error::Usage(
                "cannot commit before every arm is pulled".into(),
            ));
        }
        let arm = match self.spec.algorithm {
            Algorithm::KlEocp => kl_lcb_argmax(self.family, &self.arms, self.l.unwrap()),
            Algorithm::Eocp | Algorithm::EocpUg => {
                hoeffding_lcb_argmax(&self.arms, self.l.unwrap())
            }
            _ => argmax(&self.arms.iter().map(|s| s.mean).collect::<Vec<_>>()),
        };
        self.commitment = Some(Commitment {
            arm,
            round: self.round - 1,
        });
        Ok(arm)
    }
}
