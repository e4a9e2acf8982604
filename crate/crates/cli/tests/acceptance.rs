//! Acceptance suite. Runs every primary criterion at its stated scale and
//! tolerance, printing one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

use std::path::Path;
use std::time::Instant;

use rand::Rng;

use robai::bounds::{eocp_regret_bound, scc_ug_bound};
use robai::confidence::{exploration_rate, kl_lower, kl_upper, ArmStat};
use robai::policies::eocp_stop_time;
use robai::sim::{
    mc_concentration, run_batch, run_trajectory_traced, AggregateStats, BatchOptions, ConcLemma,
    ConcParams,
};
use robai::{BanditInstance, PolicySpec, RewardFamily, RngStream};
use robai_cli::commands::{cmd_run, resolve_config, RunOverrides};
use robai_cli::config::ExperimentConfig;

const SEED: u64 = 1;
const G: RewardFamily = RewardFamily::GaussianUnitVariance;
const B: RewardFamily = RewardFamily::Bernoulli;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn batch(
    specs: &[PolicySpec],
    inst: &BanditInstance,
    horizon: u64,
    iterations: u64,
) -> AggregateStats {
    run_batch(
        specs,
        inst,
        horizon,
        iterations,
        &[horizon],
        SEED,
        BatchOptions::default(),
    )
    .expect("batch runs")
}

fn two_arm(family: RewardFamily) -> BanditInstance {
    BanditInstance::new(family, vec![0.7, 0.2]).unwrap()
}

fn c1_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = ExperimentConfig::from_file(&resolve_config(Path::new("fig1-gaussian"))).unwrap();
    let overrides = RunOverrides {
        seed: Some(SEED),
        iterations: Some(500),
        horizon: Some(100_000),
        threads: 0,
    };
    let started = Instant::now();
    for run in ["a", "b"] {
        cmd_run(&config, &dir.path().join(run), &overrides).unwrap();
    }
    let secs = started.elapsed().as_secs_f64() / 2.0;
    let same = ["regret.csv", "commit.csv"].iter().all(|f| {
        let a = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(f)).unwrap();
        a == b
    });
    outcome(
        same && secs < 60.0,
        format!("byte-identical = {same}, {secs:.1} s per run"),
    )
}

fn c2_eocp_equals_kl_eocp() -> Outcome {
    let inst = two_arm(G);
    let horizon = 10_000;
    let eocp = PolicySpec::eocp(0.5);
    let kl = PolicySpec::kl_eocp(0.125);
    let identical = (0..1000)
        .filter(|&i| {
            let stream = RngStream::new(SEED, i);
            let (_, a, _) =
                run_trajectory_traced(&eocp, &inst, horizon, &[horizon], &stream).unwrap();
            let (_, b, _) =
                run_trajectory_traced(&kl, &inst, horizon, &[horizon], &stream).unwrap();
            a.len() == horizon as usize && a == b
        })
        .count();
    outcome(
        identical == 1000,
        format!("{identical}/1000 identical action sequences"),
    )
}

fn c3_c5_gaussian_t1e5() -> (Outcome, Outcome) {
    let inst = two_arm(G);
    let horizon = 100_000;
    let stats = batch(
        &[PolicySpec::eocp(0.5), PolicySpec::eocp_ug()],
        &inst,
        horizon,
        2000,
    );
    let bound = eocp_regret_bound(horizon, &inst.suboptimal_gaps())
        .unwrap()
        .value;
    let e = stats.policy("eocp").unwrap();
    let ug = stats.policy("eocp-ug").unwrap();
    let (mean, se) = (e.final_mean_regret(), e.final_stderr());
    let c3 = outcome(
        mean + 3.0 * se <= bound,
        format!("EOCP mean regret {mean:.2} + 3 x {se:.2} vs bound {bound:.2}"),
    );
    let c5 = outcome(
        e.miscommit_rate <= 0.01 && ug.miscommit_rate <= 0.01,
        format!(
            "mis-commit rates EOCP {:.4}, EOCP-UG {:.4}",
            e.miscommit_rate, ug.miscommit_rate
        ),
    );
    (c3, c5)
}

fn c4_c6_gaussian_t1e6() -> (Outcome, Outcome, String) {
    let inst = two_arm(G);
    let horizon = 1_000_000;
    let started = Instant::now();
    let stats = batch(
        &[
            PolicySpec::eocp(0.5),
            PolicySpec::eocp_ug(),
            PolicySpec::ucb(),
        ],
        &inst,
        horizon,
        1000,
    );
    let secs = started.elapsed().as_secs_f64();
    let e = stats.policy("eocp").unwrap();
    let ug = stats.policy("eocp-ug").unwrap();
    let ucb = stats.policy("ucb").unwrap();
    let (re, ru) = (e.final_mean_regret(), ucb.final_mean_regret());
    let reduction = 1.0 - re / ru;
    let c4 = outcome(
        reduction >= 0.10 && secs < 600.0,
        format!(
            "EOCP {re:.2} +- {:.2} vs UCB {ru:.2} +- {:.2}: reduction {:.1}% (need >= 10%), {secs:.0} s",
            e.final_stderr(),
            ucb.final_stderr(),
            100.0 * reduction
        ),
    );

    // EOCP stopping is deterministic, so mean, median and p95 all equal T_c.
    let tc = eocp_stop_time(2, exploration_rate(horizon as f64).unwrap(), 0.5).unwrap() as f64;
    let runs = run_batch(
        &[PolicySpec::eocp(0.5)],
        &inst,
        100_000,
        2000,
        &[100_000],
        SEED,
        BatchOptions::default(),
    )
    .unwrap();
    let tc5 = eocp_stop_time(2, exploration_rate(1e5).unwrap(), 0.5).unwrap() as f64;
    let r5 = &runs.policies[0];
    let exact = e.tc_mean == tc
        && e.tc_median == tc
        && e.tc_p95 == tc
        && r5.tc_mean == tc5
        && r5.tc_p95 == tc5
        && r5.tc_median == tc5;
    let scc = scc_ug_bound(horizon, &inst.suboptimal_gaps(), 2)
        .unwrap()
        .value;
    let c6 = outcome(
        exact && (500.0..=10_000.0).contains(&ug.tc_mean) && ug.tc_mean <= scc,
        format!(
            "EOCP T_c = {} (stop time {tc}); EOCP-UG mean T_c {:.1} in [500, 10000], bound {scc:.1}",
            e.tc_mean, ug.tc_mean
        ),
    );

    // Diagnostic only: the same comparison with the exploration rate ln T.
    let log_t = (horizon as f64).ln();
    let diag = batch(
        &[PolicySpec::eocp(0.5).with_l_override(log_t)],
        &inst,
        horizon,
        1000,
    );
    let d = &diag.policies[0];
    let info = format!(
        "with l = ln T: EOCP T_c {:.0}, regret {:.2} ({:.1}% below UCB), mis-commit {:.4}",
        d.tc_mean,
        d.final_mean_regret(),
        100.0 * (1.0 - d.final_mean_regret() / ru),
        d.miscommit_rate
    );
    (c4, c6, info)
}

fn c7_concentration() -> Outcome {
    let started = Instant::now();
    let cases = [
        (
            ConcLemma::L3a,
            ConcParams {
                l: 20.0,
                t1: 1.0,
                t2: 100.0,
                delta: 1.0,
                mean: 0.0,
            },
            G,
        ),
        (
            ConcLemma::L3b,
            ConcParams {
                l: 4.0,
                t1: 10.0,
                t2: 100.0,
                delta: 3f64.sqrt(),
                mean: 0.0,
            },
            G,
        ),
        (
            ConcLemma::L5,
            ConcParams {
                l: 5.0,
                t1: 1.0,
                t2: 50.0,
                delta: 1.0,
                mean: 0.3,
            },
            B,
        ),
    ];
    let mut all = true;
    let mut parts = Vec::new();
    for (lemma, params, family) in cases {
        let r = mc_concentration(lemma, params, family, 100_000, SEED).unwrap();
        all &= r.dominated();
        parts.push(format!(
            "{}: {:.3e} +- {:.1e} vs {:.3e}",
            lemma.tag(),
            r.empirical,
            r.stderr,
            r.analytic
        ));
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        all && secs < 60.0,
        format!("{}; {secs:.1} s", parts.join("; ")),
    )
}

fn oracle_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

/// Last point of the 1e-7 grid `mean + dir * k * 1e-7` inside `[0, 1]`
/// with `n KL(mean, mu) <= l`. Scans in strides of 1000 grid steps first.
fn grid_bound(mean: f64, n: f64, l: f64, dir: f64) -> f64 {
    const STEP: f64 = 1e-7;
    let point = |k: u64| mean + dir * k as f64 * STEP;
    let ok = |k: u64| {
        let mu = point(k);
        (0.0..=1.0).contains(&mu) && n * oracle_kl(mean, mu) <= l
    };
    let mut k = 0;
    while ok(k + 1000) {
        k += 1000;
    }
    while ok(k + 1) {
        k += 1;
    }
    point(k)
}

fn c8_kl_solver_oracle() -> Outcome {
    let mut rng = RngStream::new(SEED, 8);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let mean = match case {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f64>(),
        };
        let n = rng.random_range(1..=5000u64);
        let l = rng.random_range(0.5..40.0);
        let stat = ArmStat::new(n, mean);
        let up = kl_upper(B, &stat, l).unwrap();
        let lo = kl_lower(B, &stat, l).unwrap();
        worst = worst
            .max((up - grid_bound(mean, n as f64, l, 1.0)).abs())
            .max((lo - grid_bound(mean, n as f64, l, -1.0)).abs());
    }
    outcome(
        worst <= 1e-6,
        format!("max deviation from grid oracle {worst:.2e} over 100 cases"),
    )
}

fn c9_bernoulli_ordering() -> Outcome {
    let stats = batch(
        &[PolicySpec::eocp(0.5), PolicySpec::kl_eocp(0.534)],
        &two_arm(B),
        100_000,
        2000,
    );
    let e = stats.policy("eocp").unwrap();
    let k = stats.policy("kl-eocp").unwrap();
    outcome(
        k.final_mean_regret() < e.final_mean_regret(),
        format!(
            "KL-EOCP {:.2} +- {:.2} vs EOCP {:.2} +- {:.2}",
            k.final_mean_regret(),
            k.final_stderr(),
            e.final_mean_regret(),
            e.final_stderr()
        ),
    )
}

fn c10_four_arms() -> Outcome {
    let inst = BanditInstance::new(G, vec![0.7, 0.2, 0.2, 0.2]).unwrap();
    let horizon = 100_000;
    let specs = [
        PolicySpec::eocp(0.5),
        PolicySpec::eocp_ug(),
        PolicySpec::ucb(),
        PolicySpec::kl_ucb(),
        PolicySpec::ts(),
    ];
    let stats = batch(&specs, &inst, horizon, 500);
    let complete =
        stats.policies.len() == specs.len() && stats.policies.iter().all(|p| p.iterations == 500);
    let bound = eocp_regret_bound(horizon, &inst.suboptimal_gaps())
        .unwrap()
        .value;
    let e = stats.policy("eocp").unwrap().final_mean_regret();
    outcome(
        complete && e <= bound,
        format!(
            "all {} policies complete; EOCP {e:.2} vs bound {bound:.2}",
            stats.policies.len()
        ),
    )
}

fn main() {
    let started = Instant::now();
    let mut results = Vec::new();
    let mut record = |n: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag}: {name}: {}", o.detail);
        results.push((n, o.pass));
    };
    record(1, "determinism", timed(c1_determinism));
    record(
        2,
        "EOCP and KL-EOCP agree on Gaussian rewards",
        timed(c2_eocp_equals_kl_eocp),
    );
    let (c3, c5) = c3_c5_gaussian_t1e5();
    record(3, "EOCP regret below its finite-time bound", c3);
    let (c4, c6, info) = c4_c6_gaussian_t1e6();
    record(4, "EOCP regret at least 10% below UCB at T = 1e6", c4);
    println!("    info: {info}");
    record(5, "mis-commit rates at most 1%", c5);
    record(6, "commitment times", c6);
    record(
        7,
        "concentration bounds dominate Monte Carlo frequencies",
        timed(c7_concentration),
    );
    record(
        8,
        "KL confidence bounds match the grid oracle",
        timed(c8_kl_solver_oracle),
    );
    record(
        9,
        "KL-EOCP beats EOCP on Bernoulli rewards",
        timed(c9_bernoulli_ordering),
    );
    record(10, "four-armed Gaussian smoke run", timed(c10_four_arms));

    let failed: Vec<u32> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}

fn timed(f: fn() -> Outcome) -> Outcome {
    let t = Instant::now();
    let mut o = f();
    o.detail += &format!(" [{:.1} s]", t.elapsed().as_secs_f64());
    o
}
