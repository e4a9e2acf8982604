//! Closed-form evaluators for the regret, commitment-time and concentration
//! bounds that accompany the commitment policies.
//!
//! Only displayed terms are evaluated. Residuals such as `o(1)` or `O(1)` are
//! dropped and recorded in [`BoundReport::residual`]; lower-bound rates with
//! an unspecified constant use a constant of one and are tagged as rates.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::confidence::{exploration_rate, kl_min, kl_shrink_point};
use crate::error::{invalid, Result};
use crate::model::{asymptotic_lb_rate, kl_div, BanditInstance, RewardFamily};

/// What the evaluated value leaves out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Residual {
    /// The value is the complete displayed expression.
    #[serde(rename = "none")]
    None,
    /// A vanishing `o(1)` term was dropped.
    #[serde(rename = "o(1) omitted")]
    Vanishing,
    /// An unspecified `O(1)` term was dropped: leading terms only.
    #[serde(rename = "O(1) omitted")]
    Constant,
    /// An order-of-magnitude rate with its constant fixed to one.
    #[serde(rename = "rate")]
    Rate,
}

impl Residual {
    pub fn label(self) -> &'static str {
        match self {
            Residual::None => "none",
            Residual::Vanishing => "o(1) omitted",
            Residual::Constant => "O(1) omitted",
            Residual::Rate => "rate",
        }
    }
}

/// One evaluated bound with the inputs it was evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: &'static str,
    pub params: Vec<(&'static str, f64)>,
    pub value: f64,
    /// Whether the theorem's side conditions hold for these inputs.
    pub valid: bool,
    pub residual: Residual,
}

impl BoundReport {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| *k == key).map(|&(_, v)| v)
    }

    /// `key=value` pairs joined with `;`.
    pub fn params_string(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn check_gaps(gaps: &[f64]) -> Result<()> {
    for (i, &g) in gaps.iter().enumerate() {
        if !(g > 0.0) || !g.is_finite() {
            return invalid(format!("gap {i} must be positive, got {g}"));
        }
    }
    Ok(())
}

fn check_horizon(horizon: u64, min: u64) -> Result<()> {
    if horizon < min {
        return invalid(format!("horizon must be at least {min}, got {horizon}"));
    }
    Ok(())
}

/// `T >= max{16, A, 16 l / gap_min^2}` with `l = ln T + 4 sqrt(2 ln T)`.
fn gaussian_conditions(horizon: u64, gaps: &[f64], num_arms: usize) -> bool {
    if horizon < 16 || horizon < num_arms as u64 {
        return false;
    }
    let Some(min_gap) = gaps.iter().copied().reduce(f64::min) else {
        return true;
    };
    let l = exploration_rate(horizon as f64).expect("horizon >= 16");
    horizon as f64 >= 16.0 * l / (min_gap * min_gap)
}

fn gaps_params(horizon: u64, gaps: &[f64]) -> Vec<(&'static str, f64)> {
    let mut params = vec![("T", horizon as f64)];
    if let Some(m) = gaps.iter().copied().reduce(f64::min) {
        params.push(("gap_min", m));
    }
    params.push(("suboptimal_arms", gaps.len() as f64));
    params
}

/// Finite-time EOCP regret bound:
/// `sum_a 2 ln T / gap + (8 + sqrt(20 pi)) sqrt(ln T) / gap + 2 / gap + gap`.
pub fn eocp_regret_bound(horizon: u64, gaps: &[f64]) -> Result<BoundReport> {
    check_gaps(gaps)?;
    check_horizon(horizon, 1)?;
    let log_t = (horizon as f64).ln();
    let c = 8.0 + (20.0 * PI).sqrt();
    let value = gaps
        .iter()
        .map(|&g| 2.0 * log_t / g + c * log_t.sqrt() / g + 2.0 / g + g)
        .sum();
    Ok(BoundReport {
        name: "eocp_regret",
        params: gaps_params(horizon, gaps),
        value,
        valid: gaussian_conditions(horizon, gaps, gaps.len() + 1),
        residual: Residual::Vanishing,
    })
}

/// EOCP-UG regret bound, leading terms only:
/// `sum_a 2 ln T / gap + (8 + sqrt(20 pi)) sqrt(ln T) / gap`.
pub fn eocpug_regret_bound(horizon: u64, gaps: &[f64]) -> Result<BoundReport> {
    check_gaps(gaps)?;
    check_horizon(horizon, 1)?;
    let log_t = (horizon as f64).ln();
    let c = 8.0 + (20.0 * PI).sqrt();
    let value = gaps
        .iter()
        .map(|&g| 2.0 * log_t / g + c * log_t.sqrt() / g)
        .sum();
    Ok(BoundReport {
        name: "eocpug_regret",
        params: gaps_params(horizon, gaps),
        value,
        valid: gaussian_conditions(horizon, gaps, gaps.len() + 1),
        residual: Residual::Constant,
    })
}

/// KL-EOCP regret bound:
/// `sum_a gap ln T / KL(mu_a, mu*) + 10 gap ln^{3/4} T / KL(mu_a, mu*)`.
///
/// Validity uses the instance's own `KL_min` in `T >= 8 l / KL_min^2`.
pub fn kl_eocp_regret_bound(horizon: u64, instance: &BanditInstance) -> Result<BoundReport> {
    check_horizon(horizon, 1)?;
    let log_t = (horizon as f64).ln();
    let family = instance.family();
    let best = instance.best_mean();
    let value = instance
        .means()
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != instance.optimal_arm())
        .map(|(_, &m)| {
            let gap = best - m;
            let kl = kl_div(family, m, best);
            gap * log_t / kl + 10.0 * gap * log_t.powf(0.75) / kl
        })
        .sum();
    let mut valid = horizon >= 16 && horizon >= instance.num_arms() as u64;
    let mut params = vec![("T", horizon as f64)];
    if instance.num_arms() >= 2 {
        let klm = kl_min(instance)?;
        params.push(("kl_min", klm));
        if valid {
            let l = exploration_rate(horizon as f64)?;
            valid = horizon as f64 >= 8.0 * l / (klm * klm);
        }
    }
    params.push(("suboptimal_arms", (instance.num_arms() - 1) as f64));
    Ok(BoundReport {
        name: "kl_eocp_regret",
        params,
        value,
        valid,
        residual: Residual::Vanishing,
    })
}

/// Explicit EOCP-UG commitment-time bound:
/// `sum_a (8 ln^2 T + 80 ln^{3/2} T + 200 ln T) / gap^2 + 6 A ln T + 10 e A / ln^2 T`.
pub fn scc_ug_bound(horizon: u64, gaps: &[f64], num_arms: usize) -> Result<BoundReport> {
    check_gaps(gaps)?;
    check_horizon(horizon, 2)?;
    if num_arms == 0 {
        return invalid("arm count must be positive");
    }
    let value = scc_ug_from_log((horizon as f64).ln(), gaps, num_arms);
    let mut params = gaps_params(horizon, gaps);
    params.push(("A", num_arms as f64));
    Ok(BoundReport {
        name: "scc_ug",
        params,
        value,
        valid: gaussian_conditions(horizon, gaps, num_arms),
        residual: Residual::None,
    })
}

/// The commitment-time bound as a function of `ln T`, so its large-`T`
/// behaviour can be probed beyond the range of `u64` horizons.
pub fn scc_ug_from_log(log_t: f64, gaps: &[f64], num_arms: usize) -> f64 {
    let a = num_arms as f64;
    let per_arm = 8.0 * log_t * log_t + 80.0 * log_t.powf(1.5) + 200.0 * log_t;
    gaps.iter().map(|g| per_arm / (g * g)).sum::<f64>()
        + 6.0 * a * log_t
        + 10.0 * E * a / (log_t * log_t)
}

/// Whether commitment is scheduled in advance or decided from the data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingMode {
    PreDetermined,
    /// Adaptive stopping for a policy with `c`-logarithm regret violation.
    Adaptive {
        c: f64,
    },
}

/// Information-theoretic commitment-time rates for two-armed Gaussian
/// bandits: `ln T / gap^2` (pre-determined) or `ln^{2-c} T / gap^2` (adaptive).
pub fn scc_lower_bound(horizon: u64, gap: f64, mode: StoppingMode) -> Result<BoundReport> {
    check_horizon(horizon, 3)?;
    if !(gap > 0.0 && gap <= 1.0) {
        return invalid(format!("gap must lie in (0, 1], got {gap}"));
    }
    let log_t = (horizon as f64).ln();
    let mut params = vec![("T", horizon as f64), ("gap", gap)];
    let (name, value) = match mode {
        StoppingMode::PreDetermined => ("scc_lower_predetermined", log_t / (gap * gap)),
        StoppingMode::Adaptive { c } => {
            if !(c > 0.0 && c < 1.0) {
                return invalid(format!("violation exponent c must lie in (0, 1), got {c}"));
            }
            params.push(("c", c));
            ("scc_lower_adaptive", log_t.powf(2.0 - c) / (gap * gap))
        }
    };
    Ok(BoundReport {
        name,
        params,
        value,
        valid: true,
        residual: Residual::Rate,
    })
}

/// `asymptotic_lb_rate * ln T`: the regret every consistent policy
/// eventually pays.
pub fn regret_lower_bound(horizon: u64, instance: &BanditInstance) -> Result<BoundReport> {
    check_horizon(horizon, 1)?;
    Ok(BoundReport {
        name: "regret_lower",
        params: vec![("T", horizon as f64)],
        value: asymptotic_lb_rate(instance) * (horizon as f64).ln(),
        valid: true,
        residual: Residual::Rate,
    })
}

/// The three parts of the sub-Gaussian any-time concentration lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lemma3Part {
    /// `P(exists s in (T1, T2]: mean_s + sqrt(2l/s) <= 0)`, needs `l >= 2`.
    A,
    /// `P(exists s in [T1, T2]: mean_s + sqrt(2l/s) + delta <= 0)`, needs `delta in (0, sqrt 3]`.
    B,
    /// `sum_{s=T1+1}^{T2} P(mean_s + sqrt(2l/s) >= delta)`, needs `l >= T1 delta^2 / 2`.
    C,
}

fn check_window(t1: f64, t2: f64) -> Result<()> {
    if !(t1 >= 0.0) || !(t1 <= t2) || !t2.is_finite() {
        return invalid(format!("need 0 <= T1 <= T2, got T1 = {t1}, T2 = {t2}"));
    }
    Ok(())
}

/// Right-hand side of the sub-Gaussian concentration lemma, part by part.
/// Probability bounds are returned uncapped.
pub fn lemma3_rhs(part: Lemma3Part, l: f64, t1: f64, t2: f64, delta: f64) -> Result<BoundReport> {
    check_window(t1, t2)?;
    let (name, value, params) = match part {
        Lemma3Part::A => {
            if !(l >= 2.0) {
                return invalid(format!("lemma 3(a) requires l >= 2, got l = {l}"));
            }
            let count = (t2 - t1).min(E * l * (t2.ln() - t1.ln()) + E);
            (
                "lemma3a",
                count / l.exp(),
                vec![("l", l), ("T1", t1), ("T2", t2)],
            )
        }
        Lemma3Part::B => {
            if !(delta > 0.0 && delta <= 3f64.sqrt()) {
                return invalid(format!(
                    "lemma 3(b) requires delta in (0, sqrt(3)], got {delta}"
                ));
            }
            if !(l >= 0.0) {
                return invalid(format!("lemma 3(b) requires l >= 0, got {l}"));
            }
            let exponent = (l.sqrt() + delta * (t1 / 2.0).sqrt()).powi(2);
            (
                "lemma3b",
                4.0 / (delta * delta * exponent.exp()),
                vec![("l", l), ("T1", t1), ("T2", t2), ("delta", delta)],
            )
        }
        Lemma3Part::C => {
            if !(delta > 0.0) {
                return invalid(format!("lemma 3(c) requires delta > 0, got {delta}"));
            }
            if !(l >= t1 * delta * delta / 2.0) {
                return invalid(format!(
                    "lemma 3(c) requires l >= T1 delta^2 / 2, got l = {l}, T1 = {t1}, delta = {delta}"
                ));
            }
            (
                "lemma3c",
                (2.0 * l + (4.0 * PI * l).sqrt() + 2.0) / (delta * delta) + 1.0 - t1,
                vec![("l", l), ("T1", t1), ("T2", t2), ("delta", delta)],
            )
        }
    };
    Ok(BoundReport {
        name,
        params,
        value,
        valid: true,
        residual: Residual::None,
    })
}

/// Any-time KL deviation bound for exponential families:
/// `min{(T2 - T1 + 1) / e^l, (e l (ln T2 - ln T1) + e) / e^l}`.
pub fn lemma5_rhs(l: f64, t1: f64, t2: f64) -> Result<BoundReport> {
    if !(l > 2.0) {
        return invalid(format!("lemma 5 requires l > 2, got l = {l}"));
    }
    check_window(t1, t2)?;
    let count = (t2 - t1 + 1.0).min(E * l * (t2.ln() - t1.ln()) + E);
    Ok(BoundReport {
        name: "lemma5",
        params: vec![("l", l), ("T1", t1), ("T2", t2)],
        value: count / l.exp(),
        valid: true,
        residual: Residual::None,
    })
}

/// Pieces of the KL-UCB pull-count bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lemma6Terms {
    /// `r(eps)` in `(mu, mu')` with `KL(r, mu') = KL(mu, mu') / (1 + eps)`.
    pub r: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// `(1 + eps) l / KL(mu, mu')`.
    pub leading: f64,
    /// `beta2 / T^beta1`.
    pub tail: f64,
}

pub fn lemma6_terms(
    family: RewardFamily,
    mu: f64,
    mu_prime: f64,
    l: f64,
    eps: f64,
    horizon: u64,
) -> Result<Lemma6Terms> {
    if !(mu < mu_prime) {
        return invalid(format!(
            "lemma 6 requires mu < mu', got mu = {mu}, mu' = {mu_prime}"
        ));
    }
    if !(eps > 0.0) {
        return invalid(format!("lemma 6 requires eps > 0, got {eps}"));
    }
    check_horizon(horizon, 1)?;
    let kl = kl_div(family, mu, mu_prime);
    let r = kl_shrink_point(family, mu, mu_prime, 1.0 + eps)?;
    let kl_r = kl_div(family, r, mu);
    let beta1 = (1.0 + eps) * kl_r / kl;
    let beta2 = 1.0 / -(-kl_r).exp_m1();
    Ok(Lemma6Terms {
        r,
        beta1,
        beta2,
        leading: (1.0 + eps) * l / kl,
        tail: beta2 / (horizon as f64).powf(beta1),
    })
}

/// `(1 + eps) l / KL(mu, mu') + beta2(eps) / T^{beta1(eps)}`: expected number
/// of samples whose KL upper bound still reaches `mu'`.
pub fn lemma6_rhs(
    family: RewardFamily,
    mu: f64,
    mu_prime: f64,
    l: f64,
    eps: f64,
    horizon: u64,
) -> Result<BoundReport> {
    let terms = lemma6_terms(family, mu, mu_prime, l, eps, horizon)?;
    Ok(BoundReport {
        name: "lemma6",
        params: vec![
            ("mu", mu),
            ("mu_prime", mu_prime),
            ("l", l),
            ("eps", eps),
            ("T", horizon as f64),
        ],
        value: terms.leading + terms.tail,
        valid: true,
        residual: Residual::None,
    })
}
