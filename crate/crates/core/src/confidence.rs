//! Exploration rate, confidence bounds and the KL separation `KL_min`.
//!
//! All logarithms are natural.

use crate::error::{invalid, Result};
use crate::model::{kl_div, BanditInstance, RewardFamily};

/// Bracket width at which the KL bisections stop, in mean units.
pub const BISECTION_TOL: f64 = 1e-9;
/// Hard cap on bisection iterations.
pub const BISECTION_MAX_ITERS: usize = 200;

/// Per-arm sufficient statistics: pull count and empirical mean.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ArmStat {
    pub pulls: u64,
    pub mean: f64,
}

impl ArmStat {
    pub fn new(pulls: u64, mean: f64) -> Self {
        Self { pulls, mean }
    }

    /// Fold one reward into the running mean.
    #[inline]
    pub fn observe(&mut self, reward: f64) {
        self.pulls += 1;
        self.mean += (reward - self.mean) / self.pulls as f64;
    }

    fn checked(&self) -> Result<f64> {
        if self.pulls == 0 {
            return invalid("arm statistic has no pulls, its mean is undefined");
        }
        Ok(self.pulls as f64)
    }
}

/// `l(T) = ln T + 4 sqrt(2 ln T)`, the inflated exploration rate.
pub fn exploration_rate(horizon: f64) -> Result<f64> {
    if !(horizon >= 2.0) {
        return invalid(format!(
            "exploration rate needs a horizon of at least 2, got {horizon}"
        ));
    }
    let log_t = horizon.ln();
    Ok(log_t + 4.0 * (2.0 * log_t).sqrt())
}

fn check_rate(l: f64) -> Result<()> {
    if !(l > 0.0) || !l.is_finite() {
        return invalid(format!(
            "exploration rate must be positive and finite, got {l}"
        ));
    }
    Ok(())
}

#[inline]
pub(crate) fn bonus(pulls: f64, l: f64) -> f64 {
    (2.0 * l / pulls).sqrt()
}

/// Hoeffding bonus `sqrt(2 l / N)`.
pub fn hoeffding_bonus(stat: &ArmStat, l: f64) -> Result<f64> {
    let n = stat.checked()?;
    check_rate(l)?;
    Ok(bonus(n, l))
}

pub fn hoeffding_ucb(stat: &ArmStat, l: f64) -> Result<f64> {
    Ok(stat.mean + hoeffding_bonus(stat, l)?)
}

pub fn hoeffding_lcb(stat: &ArmStat, l: f64) -> Result<f64> {
    Ok(stat.mean - hoeffding_bonus(stat, l)?)
}

/// Largest `mu >= mean` with `N * KL(mean, mu) <= l`.
pub fn kl_upper(family: RewardFamily, stat: &ArmStat, l: f64) -> Result<f64> {
    let n = stat.checked()?;
    check_rate(l)?;
    Ok(kl_upper_raw(family, stat.mean, n, l))
}

/// Smallest `mu <= mean` with `N * KL(mean, mu) <= l`.
pub fn kl_lower(family: RewardFamily, stat: &ArmStat, l: f64) -> Result<f64> {
    let n = stat.checked()?;
    check_rate(l)?;
    Ok(kl_lower_raw(family, stat.mean, n, l))
}

#[inline]
pub(crate) fn kl_upper_raw(family: RewardFamily, mean: f64, pulls: f64, l: f64) -> f64 {
    match family {
        RewardFamily::GaussianUnitVariance => mean + bonus(pulls, l),
        RewardFamily::Bernoulli => {
            let top = family.mean_upper();
            let mean = mean.clamp(family.mean_lower(), top);
            if mean >= top || pulls * kl_div(family, mean, top) <= l {
                return top;
            }
            // Pinsker: any feasible mu is within sqrt(l / 2N) of the mean.
            let hi = (mean + (0.5 * l / pulls).sqrt()).min(top);
            bisect(mean, hi, |mu| pulls * kl_div(family, mean, mu) <= l)
        }
    }
}

#[inline]
pub(crate) fn kl_lower_raw(family: RewardFamily, mean: f64, pulls: f64, l: f64) -> f64 {
    match family {
        RewardFamily::GaussianUnitVariance => mean - bonus(pulls, l),
        RewardFamily::Bernoulli => {
            let bottom = family.mean_lower();
            let mean = mean.clamp(bottom, family.mean_upper());
            if mean <= bottom || pulls * kl_div(family, mean, bottom) <= l {
                return bottom;
            }
            let lo = (mean - (0.5 * l / pulls).sqrt()).max(bottom);
            bisect(mean, lo, |mu| pulls * kl_div(family, mean, mu) <= l)
        }
    }
}

/// Bisect between a feasible point and an infeasible one for a monotone
/// predicate; returns the feasible end of the final bracket.
fn bisect(mut feasible: f64, mut infeasible: f64, ok: impl Fn(f64) -> bool) -> f64 {
    let mut iters = 0;
    while (infeasible - feasible).abs() > BISECTION_TOL && iters < BISECTION_MAX_ITERS {
        let mid = 0.5 * (feasible + infeasible);
        if ok(mid) {
            feasible = mid;
        } else {
            infeasible = mid;
        }
        iters += 1;
    }
    feasible
}

/// The point `x` in `(mu, mu_best)` with `KL(x, mu_best) = KL(mu, mu_best) / factor`.
///
/// `mu -> KL(mu, mu_best)` decreases strictly on `[mu, mu_best]`, so a plain
/// bisection finds it.
pub fn kl_shrink_point(family: RewardFamily, mu: f64, mu_best: f64, factor: f64) -> Result<f64> {
    if !(mu < mu_best) {
        return invalid(format!(
            "shrink point needs mu < mu_best, got {mu} >= {mu_best}"
        ));
    }
    if !(factor > 1.0) {
        return invalid(format!("shrink factor must exceed 1, got {factor}"));
    }
    let target = kl_div(family, mu, mu_best) / factor;
    let mut lo = mu;
    let mut hi = mu_best;
    let mut iters = 0;
    while hi - lo > BISECTION_TOL && iters < BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if kl_div(family, mid, mu_best) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    Ok(0.5 * (lo + hi))
}

/// The point `mu'` in `(mu_a, mu_best)` with `4 KL(mu', mu_best) = KL(mu_a, mu_best)`.
pub fn kl_split_point(family: RewardFamily, mu_a: f64, mu_best: f64) -> Result<f64> {
    kl_shrink_point(family, mu_a, mu_best, 4.0)
}

/// `KL_min = min_{a != a*} min{ KL(mu_a, mu*), 4 KL(mu'_a, mu_a) }`.
pub fn kl_min(instance: &BanditInstance) -> Result<f64> {
    if instance.num_arms() < 2 {
        return invalid("KL_min needs at least two arms");
    }
    let family = instance.family();
    let best = instance.best_mean();
    let mut out = f64::INFINITY;
    for (a, &mu) in instance.means().iter().enumerate() {
        if a == instance.optimal_arm() {
            continue;
        }
        let direct = kl_div(family, mu, best);
        let split = kl_split_point(family, mu, best)?;
        out = out.min(direct.min(4.0 * kl_div(family, split, mu)));
    }
    Ok(out)
}
