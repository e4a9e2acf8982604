//! Bandit instances, reward families and the randomness they are driven by.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Reward distribution family shared by every arm of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardFamily {
    /// `N(mu, 1)` rewards.
    #[serde(rename = "gaussian")]
    GaussianUnitVariance,
    /// `Ber(mu)` rewards in `{0, 1}`.
    #[serde(rename = "bernoulli")]
    Bernoulli,
}

impl RewardFamily {
    pub fn tag(self) -> &'static str {
        match self {
            RewardFamily::GaussianUnitVariance => "gaussian",
            RewardFamily::Bernoulli => "bernoulli",
        }
    }

    /// Upper end of the set of attainable means, if bounded.
    pub(crate) fn mean_upper(self) -> f64 {
        match self {
            RewardFamily::GaussianUnitVariance => f64::INFINITY,
            RewardFamily::Bernoulli => 1.0,
        }
    }

    pub(crate) fn mean_lower(self) -> f64 {
        match self {
            RewardFamily::GaussianUnitVariance => f64::NEG_INFINITY,
            RewardFamily::Bernoulli => 0.0,
        }
    }
}

impl std::str::FromStr for RewardFamily {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(RewardFamily::GaussianUnitVariance),
            "bernoulli" => Ok(RewardFamily::Bernoulli),
            other => invalid(format!("unknown reward family {other:?}")),
        }
    }
}

/// Ground truth for a stochastic bandit: a family plus one mean per arm.
///
/// Means live in `[0, 1]` and the maximum is unique whenever there is more
/// than one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    family: RewardFamily,
    means: Vec<f64>,
    best: usize,
}

impl BanditInstance {
    pub fn new(family: RewardFamily, means: Vec<f64>) -> Result<Self> {
        if means.is_empty() {
            return invalid("an instance needs at least one arm");
        }
        if let Some((a, m)) = means
            .iter()
            .enumerate()
            .find(|(_, m)| !(0.0..=1.0).contains(*m))
        {
            return invalid(format!("mean of arm {a} is {m}, outside [0, 1]"));
        }
        let best = argmax(&means);
        let top = means[best];
        if means.iter().filter(|&&m| m == top).count() > 1 {
            return invalid(format!(
                "optimal arm is not unique (several arms have mean {top})"
            ));
        }
        Ok(Self {
            family,
            means,
            best,
        })
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    /// Index of the unique optimal arm `a*`.
    pub fn optimal_arm(&self) -> usize {
        self.best
    }

    pub fn best_mean(&self) -> f64 {
        self.means[self.best]
    }

    /// Gap `mu_{a*} - mu_a` for every arm (zero for the optimal one).
    pub fn gaps(&self) -> Vec<f64> {
        self.means.iter().map(|m| self.best_mean() - m).collect()
    }

    /// Gaps of the sub-optimal arms only, in arm order.
    pub fn suboptimal_gaps(&self) -> Vec<f64> {
        self.gaps()
            .into_iter()
            .enumerate()
            .filter(|&(a, _)| a != self.best)
            .map(|(_, g)| g)
            .collect()
    }

    /// Smallest positive gap, or `None` for a single-arm instance.
    pub fn min_gap(&self) -> Option<f64> {
        self.suboptimal_gaps().into_iter().reduce(f64::min)
    }
}

/// First index of the largest value; lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A replayable pseudo-random stream keyed by `(master_seed, stream_index)`.
///
/// Backed by ChaCha8: the key is derived from the master seed (and an
/// optional lane), the ChaCha stream id is the stream index. Output is a pure
/// function of the key, the stream id and the draw position.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    stream_index: u64,
    lane: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self::keyed(master_seed, stream_index, 0)
    }

    fn keyed(master_seed: u64, stream_index: u64, lane: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&lane.to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            lane,
            rng,
        }
    }

    /// An independent sibling stream for the same `(master_seed, stream_index)`,
    /// positioned at its start. Lane 0 is the stream itself.
    pub fn lane(&self, lane: u64) -> Self {
        Self::keyed(self.master_seed, self.stream_index, lane)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    pub fn lane_index(&self) -> u64 {
        self.lane
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }
}

impl RngCore for RngStream {
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

/// Draw one reward from arm `arm`.
pub fn sample(instance: &BanditInstance, arm: usize, rng: &mut RngStream) -> Result<f64> {
    let Some(&mean) = instance.means.get(arm) else {
        return invalid(format!(
            "arm {arm} out of range for a {}-armed instance",
            instance.num_arms()
        ));
    };
    Ok(draw(instance.family, mean, rng))
}

#[inline]
pub(crate) fn draw<R: Rng + ?Sized>(family: RewardFamily, mean: f64, rng: &mut R) -> f64 {
    match family {
        RewardFamily::GaussianUnitVariance => {
            let z: f64 = rng.sample(StandardNormal);
            mean + z
        }
        RewardFamily::Bernoulli => {
            // random::<f64>() lies in [0, 1): mean 1 always succeeds, mean 0 never does.
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// KL divergence `KL(mu1, mu2)` between the members of `family` with those means.
///
/// Bernoulli divergences towards a degenerate distribution from a different
/// mean are `f64::INFINITY`.
pub fn kl_div(family: RewardFamily, mu1: f64, mu2: f64) -> f64 {
    match family {
        RewardFamily::GaussianUnitVariance => {
            let d = mu1 - mu2;
            0.5 * d * d
        }
        RewardFamily::Bernoulli => bernoulli_kl(mu1, mu2),
    }
}

fn bernoulli_kl(p: f64, q: f64) -> f64 {
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&p), "bernoulli mean {p}");
    debug_assert!((-1e-12..=1.0 + 1e-12).contains(&q), "bernoulli mean {q}");
    let p = p.clamp(0.0, 1.0);
    let q = q.clamp(0.0, 1.0);
    if p == q {
        return 0.0;
    }
    // 0 * ln(0 / x) = 0
    let head = if p > 0.0 {
        if q == 0.0 {
            return f64::INFINITY;
        }
        p * (p / q).ln()
    } else {
        0.0
    };
    let tail = if p < 1.0 {
        if q == 1.0 {
            return f64::INFINITY;
        }
        (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
    } else {
        0.0
    };
    // Rounding can push the sum a hair below zero when p and q are very close.
    (head + tail).max(0.0)
}

/// Asymptotic regret lower-bound rate `sum_a gap_a / KL(mu_a, mu_{a*})`,
/// the coefficient of `ln T` no consistent policy can beat.
pub fn asymptotic_lb_rate(instance: &BanditInstance) -> f64 {
    let best = instance.best_mean();
    instance
        .means()
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != instance.optimal_arm())
        .map(|(_, &m)| (best - m) / kl_div(instance.family(), m, best))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::RngCore;

    // Independent oracle: sum over the two outcomes of p(x) ln(p(x)/q(x)).
    fn bernoulli_kl_oracle(p: f64, q: f64) -> f64 {
        [(p, q), (1.0 - p, 1.0 - q)]
            .iter()
            .map(|&(px, qx)| {
                if px == 0.0 {
                    0.0
                } else {
                    px * (px.ln() - qx.ln())
                }
            })
            .sum()
    }

    #[test]
    fn instance_validation() {
        assert!(BanditInstance::new(RewardFamily::Bernoulli, vec![]).is_err());
        assert!(BanditInstance::new(RewardFamily::Bernoulli, vec![0.5, 1.2]).is_err());
        assert!(BanditInstance::new(RewardFamily::Bernoulli, vec![0.5, -0.1]).is_err());
        assert!(BanditInstance::new(RewardFamily::GaussianUnitVariance, vec![0.7, 0.7]).is_err());
        // ties below the maximum are fine
        let inst =
            BanditInstance::new(RewardFamily::GaussianUnitVariance, vec![0.2, 0.7, 0.2, 0.2])
                .unwrap();
        assert_eq!(inst.optimal_arm(), 1);
        for g in inst.suboptimal_gaps() {
            assert_abs_diff_eq!(g, 0.5, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(inst.min_gap().unwrap(), 0.5, epsilon = 1e-15);
        let single = BanditInstance::new(RewardFamily::Bernoulli, vec![0.3]).unwrap();
        assert_eq!(single.min_gap(), None);
    }

    #[test]
    fn degenerate_bernoulli_samples() {
        let inst = BanditInstance::new(RewardFamily::Bernoulli, vec![1.0, 0.0]).unwrap();
        let mut rng = RngStream::new(7, 3);
        for _ in 0..1000 {
            assert_eq!(sample(&inst, 0, &mut rng).unwrap(), 1.0);
            assert_eq!(sample(&inst, 1, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn sample_rejects_bad_arm() {
        let inst = BanditInstance::new(RewardFamily::Bernoulli, vec![0.4, 0.1]).unwrap();
        let mut rng = RngStream::new(1, 0);
        assert!(matches!(
            sample(&inst, 2, &mut rng),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gaussian_sample_mean_concentrates() {
        let inst = BanditInstance::new(RewardFamily::GaussianUnitVariance, vec![0.7]).unwrap();
        let mut rng = RngStream::new(1, 0);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            acc += sample(&inst, 0, &mut rng).unwrap();
        }
        assert_abs_diff_eq!(acc / n as f64, 0.7, epsilon = 0.004);
    }

    #[test]
    fn streams_replay_and_differ() {
        let inst = BanditInstance::new(RewardFamily::GaussianUnitVariance, vec![0.5, 0.1]).unwrap();
        let draws = |seed, idx| {
            let mut rng = RngStream::new(seed, idx);
            (0..64)
                .map(|i| sample(&inst, i % 2, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draws(11, 4), draws(11, 4));
        assert_ne!(draws(11, 4), draws(11, 5));
        assert_ne!(draws(11, 4), draws(12, 4));
        let base = RngStream::new(11, 4);
        let mut a = base.lane(1);
        let mut b = base.lane(2);
        assert_ne!(a.next_u64(), b.next_u64());
        let mut c = base.lane(0);
        let mut d = RngStream::new(11, 4);
        assert_eq!(c.next_u64(), d.next_u64());
    }

    #[test]
    fn kl_examples() {
        let g = RewardFamily::GaussianUnitVariance;
        let b = RewardFamily::Bernoulli;
        assert_abs_diff_eq!(kl_div(g, 0.7, 0.2), 0.125, epsilon = 1e-15);
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(kl_div(g, x, x), 0.0);
            assert_eq!(kl_div(b, x, x), 0.0);
        }
        assert_abs_diff_eq!(
            kl_div(b, 0.7, 0.2),
            bernoulli_kl_oracle(0.7, 0.2),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(kl_div(b, 0.7, 0.2), 0.582685, epsilon = 1e-6);
        assert_abs_diff_eq!(kl_div(b, 0.2, 0.7), 0.534111, epsilon = 1e-6);
        // boundary conventions
        assert_abs_diff_eq!(kl_div(b, 0.0, 0.4), (1.0f64 / 0.6).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(kl_div(b, 1.0, 0.4), (1.0f64 / 0.4).ln(), epsilon = 1e-15);
        assert_eq!(kl_div(b, 0.3, 0.0), f64::INFINITY);
        assert_eq!(kl_div(b, 0.3, 1.0), f64::INFINITY);
        assert!(kl_div(b, 0.3, 1.0) > 1e300);
    }

    #[test]
    fn kl_symmetry() {
        let g = RewardFamily::GaussianUnitVariance;
        let b = RewardFamily::Bernoulli;
        assert_eq!(kl_div(g, 0.9, 0.1), kl_div(g, 0.1, 0.9));
        assert!((kl_div(b, 0.7, 0.2) - kl_div(b, 0.2, 0.7)).abs() > 1e-3);
    }

    #[test]
    fn pinsker_on_grid() {
        let b = RewardFamily::Bernoulli;
        for i in 1..=100 {
            for j in 1..=100 {
                let x = i as f64 / 101.0;
                let y = j as f64 / 101.0;
                let d = kl_div(b, x, y);
                assert!(
                    d >= 2.0 * (x - y) * (x - y) - 1e-15,
                    "pinsker fails at ({x}, {y})"
                );
            }
        }
    }

    #[test]
    fn lower_bound_rate_examples() {
        let g = BanditInstance::new(RewardFamily::GaussianUnitVariance, vec![0.7, 0.2]).unwrap();
        assert_abs_diff_eq!(asymptotic_lb_rate(&g), 4.0, epsilon = 1e-12);
        let b = BanditInstance::new(RewardFamily::Bernoulli, vec![0.7, 0.2]).unwrap();
        assert_abs_diff_eq!(
            asymptotic_lb_rate(&b),
            0.5 / bernoulli_kl_oracle(0.2, 0.7),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(asymptotic_lb_rate(&b), 0.936137, epsilon = 1e-5);
        let one = BanditInstance::new(RewardFamily::Bernoulli, vec![0.4]).unwrap();
        assert_eq!(asymptotic_lb_rate(&one), 0.0);
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_only_on_diagonal(x in 0.0f64..=1.0, y in 0.001f64..0.999) {
            for fam in [RewardFamily::GaussianUnitVariance, RewardFamily::Bernoulli] {
                let d = kl_div(fam, x, y);
                prop_assert!(d >= 0.0);
                if (x - y).abs() > 1e-6 {
                    prop_assert!(d > 0.0);
                }
            }
        }

        #[test]
        fn bernoulli_kl_matches_oracle(x in 0.0f64..=1.0, y in 0.001f64..0.999) {
            let d = kl_div(RewardFamily::Bernoulli, x, y);
            prop_assert!((d - bernoulli_kl_oracle(x, y)).abs() <= 1e-12 * (1.0 + d));
        }
    }
}
