use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{ExperimentConfig, Preset, RunOptions, Suite};
use super::output::{fmt_float, write_csv, write_json};
use crate::bpi::{
    bpi_run, spe_check, ActionSpec, BpiConfig, BpiTrace, LexOrder, DEFAULT_TIE_TOLERANCE,
};
use crate::error::{Result, SperlError};
use crate::exact_dp::{evaluate, oracle_q, DEFAULT_LEAF_CAP};
use crate::instances::{instance_suite, SuiteInstance};
use crate::mv::{mv_train, MvTrainConfig, MvTrainOutcome};
use crate::sperl_q::{hyperbolic_chain, q_learning_run, QLearnConfig, QLearnOutcome, StopRule};
use crate::tic::{TabularPolicy, TicProblem};

/// Artifact layout revision, bumped when file names or columns change.
pub const ARTIFACT_REVISION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub artifact_revision: u32,
    pub checks: Vec<Check>,
    pub artifacts: Vec<String>,
    pub summary: serde_json::Value,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn parallel_map<T: Send>(
    items: &[SuiteInstance],
    jobs: Option<usize>,
    f: impl Fn(&SuiteInstance) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    match jobs {
        Some(n) if n > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SperlError::Config(format!("cannot start {n} workers: {e}")))?;
            pool.install(|| items.par_iter().map(&f).collect())
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Outcome of full-sweep policy iteration on one generated instance.
#[derive(Debug, Clone)]
pub struct BpiInstanceResult {
    pub index: usize,
    pub family: &'static str,
    pub horizon: usize,
    pub sweeps: usize,
    pub terminated: bool,
    pub spe_violations: usize,
    /// Comparisons of improving sweeps against their predecessor.
    pub lex_greater: usize,
    pub lex_other: usize,
    pub policy: TabularPolicy,
    pub trace: BpiTrace,
}

pub fn verify_bpi_instance(instance: &SuiteInstance) -> Result<BpiInstanceResult> {
    let outcome = bpi_run(
        &instance.problem,
        &instance.initial,
        &BpiConfig::new(ActionSpec::FullSweepArgmax),
    )?;
    let report = spe_check(&instance.problem, &outcome.policy, DEFAULT_TIE_TOLERANCE)?;
    let improving = outcome
        .trace
        .iterations
        .iter()
        .filter(|it| !it.changed.is_empty());
    let (greater, other) = improving.fold((0, 0), |(g, o), it| {
        if it.comparison.order == LexOrder::Greater {
            (g + 1, o)
        } else {
            (g, o + 1)
        }
    });
    Ok(BpiInstanceResult {
        index: instance.index,
        family: instance.family.name(),
        horizon: instance.problem.horizon(),
        sweeps: outcome.trace.len(),
        terminated: outcome.terminated,
        spe_violations: report.violations.len(),
        lex_greater: greater,
        lex_other: other,
        policy: outcome.policy,
        trace: outcome.trace,
    })
}

/// Disagreement between backward evaluation and path enumeration for a
/// random policy on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGap {
    pub index: usize,
    pub family: &'static str,
    pub horizon: usize,
    /// `(t, x, u, backward, enumerated)` for every entry.
    pub entries: Vec<(usize, usize, usize, f64, f64)>,
    pub max_gap: f64,
}

pub fn oracle_gap(instance: &SuiteInstance, max_leaves: usize) -> Result<OracleGap> {
    let problem = &instance.problem;
    let tables = evaluate(problem, &instance.initial)?;
    let mut entries = Vec::new();
    let mut max_gap = 0.0_f64;
    for t in 0..problem.horizon() {
        for x in 0..problem.n_states(t) {
            for u in 0..problem.n_actions(t) {
                let dp = tables.slice(t).q(x, u);
                let enumerated = oracle_q(problem, &instance.initial, t, x, u, max_leaves)?;
                max_gap = max_gap.max((dp - enumerated).abs());
                entries.push((t, x, u, dp, enumerated));
            }
        }
    }
    Ok(OracleGap {
        index: instance.index,
        family: instance.family.name(),
        horizon: problem.horizon(),
        entries,
        max_gap,
    })
}

/// Learned against exact equilibrium values on a finite problem.
#[derive(Debug, Clone)]
pub struct QLearnCheck {
    pub outcome: QLearnOutcome,
    pub equilibrium: TabularPolicy,
    /// Largest `|estimate - exact|` over entries updated at least once.
    pub max_gap: f64,
    pub policy_matches: bool,
}

pub fn q_learn_check(problem: &TicProblem, config: &QLearnConfig) -> Result<QLearnCheck> {
    let outcome = q_learning_run(problem, config)?;
    let equilibrium = bpi_run(
        problem,
        &TabularPolicy::first_action(problem),
        &BpiConfig::new(ActionSpec::FullSweepArgmax),
    )?
    .policy;
    let exact = evaluate(problem, &equilibrium)?;
    let mut max_gap = 0.0_f64;
    for t in 0..problem.horizon() {
        for x in 0..problem.n_states(t) {
            for u in 0..problem.n_actions(t) {
                if outcome.visited(t, x, u) {
                    max_gap = max_gap
                        .max((outcome.estimates.slice(t).q(x, u) - exact.slice(t).q(x, u)).abs());
                }
            }
        }
    }
    let policy_matches = outcome.policy == equilibrium;
    Ok(QLearnCheck {
        outcome,
        equilibrium,
        max_gap,
        policy_matches,
    })
}

/// Training settings a config resolves to for `mv-train`.
pub fn resolve_mv_config(config: &ExperimentConfig) -> MvTrainConfig {
    let mut mv = config.mv.clone().unwrap_or_else(|| {
        let mu = config.mu.unwrap_or(0.2);
        match config.preset {
            Preset::Paper => MvTrainConfig::paper(mu),
            Preset::Desk => MvTrainConfig::desk(mu),
        }
    });
    mv.seed = config.seed;
    if config.trace {
        mv.log_epochs = Some((0..mv.market.horizon).collect());
    }
    mv
}

/// Pooled terminal-wealth mean and sample deviation over the last
/// `windows` evaluation windows.
pub fn pooled_tail(outcome: &MvTrainOutcome, window: usize, windows: usize) -> (f64, f64) {
    let n = (window * windows).min(outcome.evaluations.len());
    let tail = &outcome.evaluations[outcome.evaluations.len() - n..];
    let mean = tail.iter().sum::<f64>() / n as f64;
    let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn run_mv(
    config: &ExperimentConfig,
    out: &Path,
) -> Result<(Vec<Check>, Vec<String>, serde_json::Value)> {
    let mv = resolve_mv_config(config);
    let outcome = mv_train(&mv)?;
    write_csv(
        &out.join("curves_wealth.csv"),
        &["window", "mean", "stdev"],
        outcome
            .windows
            .iter()
            .map(|w| vec![w.window.to_string(), fmt_float(w.mean), fmt_float(w.stdev)]),
    )?;
    write_csv(
        &out.join("curves_critic.csv"),
        &[
            "iteration",
            "t",
            "w2_g",
            "w2_q",
            "w3_q",
            "true_w2_g",
            "true_w2_q",
            "true_w3_q",
        ],
        outcome.critic_log.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                r.t.to_string(),
                fmt_float(r.w2_g),
                fmt_float(r.w2_q),
                fmt_float(r.w3_q),
                fmt_float(r.true_w2_g),
                fmt_float(r.true_w2_q),
                fmt_float(r.true_w3_q),
            ]
        }),
    )?;
    write_csv(
        &out.join("curves_actor.csv"),
        &["iteration", "t", "theta", "true_action"],
        outcome.actor_log.iter().map(|r| {
            vec![
                r.iteration.to_string(),
                r.t.to_string(),
                fmt_float(r.theta),
                fmt_float(r.true_action),
            ]
        }),
    )?;
    let last = mv.market.horizon - 1;
    let (mean, stdev) = pooled_tail(&outcome, mv.window, 10);
    let epochs: Vec<_> = mv
        .logged_epochs()
        .into_iter()
        .map(|t| {
            json!({
                "t": t,
                "theta": outcome.actor[t],
                "true_action": outcome.truth.actions[t],
                "squared_drift_action": outcome.truth.squared_drift_actions[t],
            })
        })
        .collect();
    let summary = json!({
        "config": mv,
        "terminal_wealth_last_10_windows": { "mean": mean, "stdev": stdev },
        "last_epoch": {
            "w2_g": outcome.weights.g[last][0],
            "w2_q": outcome.weights.q[last][1],
            "w3_q": outcome.weights.q[last][0],
            "true_w2_g": outcome.truth.weights.g[last][0],
            "true_w3_q": outcome.truth.weights.q[last][0],
        },
        "actor": epochs,
        "skipped_fits": outcome.skipped.len(),
    });
    let checks = vec![
        Check::new(
            "actor finite",
            outcome.actor.iter().all(|th| th.is_finite()),
            format!("{} epochs", outcome.actor.len()),
        ),
        Check::new(
            "critics concave in the action",
            outcome.weights.q.iter().all(|q| q[0] < 0.0),
            format!("w3(T-1) = {}", outcome.weights.q[last][0]),
        ),
    ];
    let artifacts = ["curves_wealth.csv", "curves_critic.csv", "curves_actor.csv"];
    Ok((checks, artifacts.map(String::from).to_vec(), summary))
}

fn run_bpi(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<(Vec<Check>, Vec<String>, serde_json::Value)> {
    let instances = instance_suite(config.seed, config.instances)?;
    let results = parallel_map(&instances, opts.jobs, verify_bpi_instance)?;
    write_csv(
        &opts.out.join("instances.csv"),
        &[
            "instance",
            "family",
            "horizon",
            "sweeps",
            "terminated",
            "spe_violations",
            "lex_greater",
            "lex_other",
        ],
        results.iter().map(|r| {
            vec![
                r.index.to_string(),
                r.family.to_string(),
                r.horizon.to_string(),
                r.sweeps.to_string(),
                r.terminated.to_string(),
                r.spe_violations.to_string(),
                r.lex_greater.to_string(),
                r.lex_other.to_string(),
            ]
        }),
    )?;
    let mut artifacts = vec!["instances.csv".to_string()];
    if config.trace {
        let traces: Vec<&BpiTrace> = results.iter().map(|r| &r.trace).collect();
        write_json(&opts.out.join("bpi_traces.json"), &traces)?;
        artifacts.push("bpi_traces.json".into());
    }
    let count = |f: &dyn Fn(&BpiInstanceResult) -> bool| results.iter().filter(|r| f(r)).count();
    let n = results.len();
    let terminated = count(&|r| r.terminated);
    let spe = count(&|r| r.spe_violations == 0);
    let two = count(&|r| r.sweeps == 2);
    let one = count(&|r| r.sweeps == 1);
    let lex_bad: usize = results.iter().map(|r| r.lex_other).sum();
    let checks = vec![
        Check::new("terminated", terminated == n, format!("{terminated}/{n}")),
        Check::new(
            "equilibrium",
            spe == n,
            format!("{spe}/{n} pass the deviation check"),
        ),
        Check::new(
            "at most two sweeps",
            one + two == n,
            format!("{two} with two sweeps, {one} already in equilibrium"),
        ),
        Check::new(
            "lexicographic improvement",
            lex_bad == 0,
            format!("{lex_bad} non-improving sweeps"),
        ),
    ];
    let summary = json!({ "instances": n, "two_sweeps": two, "one_sweep": one });
    Ok((checks, artifacts, summary))
}

fn run_q(
    config: &ExperimentConfig,
    out: &Path,
) -> Result<(Vec<Check>, Vec<String>, serde_json::Value)> {
    let mut q = config.q_learning.clone().unwrap_or(QLearnConfig {
        stop: StopRule::FixedEpisodes,
        ..QLearnConfig::default()
    });
    q.seed = config.seed;
    if let Some(episodes) = config.episodes {
        q.episodes = episodes;
    }
    if config.trace && q.spe_check_every.is_none() {
        q.spe_check_every = Some(100);
    }
    let problem = hyperbolic_chain();
    let check = q_learn_check(&problem, &q)?;
    write_csv(
        &out.join("q_learning_log.csv"),
        &[
            "episode",
            "policy_changes",
            "max_td_error",
            "spe_violations",
        ],
        check.outcome.log.iter().map(|r| {
            vec![
                r.episode.to_string(),
                r.policy_changes.to_string(),
                fmt_float(r.max_td_error),
                r.spe_violations.map(|v| v.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    let exact = evaluate(&problem, &check.equilibrium)?;
    let mut rows = Vec::new();
    for t in 0..problem.horizon() {
        for x in 0..problem.n_states(t) {
            for u in 0..problem.n_actions(t) {
                rows.push(vec![
                    t.to_string(),
                    x.to_string(),
                    u.to_string(),
                    fmt_float(check.outcome.estimates.slice(t).q(x, u)),
                    fmt_float(exact.slice(t).q(x, u)),
                    check.outcome.counts.slice(t).q(x, u).to_string(),
                ]);
            }
        }
    }
    write_csv(
        &out.join("q_values.csv"),
        &["t", "x", "u", "estimate", "equilibrium", "updates"],
        rows,
    )?;
    let checks = vec![
        Check::new(
            "greedy policy is the equilibrium",
            check.policy_matches,
            format!("after {} episodes", check.outcome.episodes_run),
        ),
        Check::new(
            "estimates near equilibrium values",
            check.max_gap < 0.05,
            format!("max gap {:e} over updated entries", check.max_gap),
        ),
    ];
    let summary = json!({
        "config": q,
        "episodes_run": check.outcome.episodes_run,
        "converged": check.outcome.converged,
        "max_gap": check.max_gap,
        "policy": check.outcome.policy.rows(),
        "equilibrium": check.equilibrium.rows(),
    });
    Ok((
        checks,
        vec!["q_learning_log.csv".into(), "q_values.csv".into()],
        summary,
    ))
}

fn run_oracle(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<(Vec<Check>, Vec<String>, serde_json::Value)> {
    let cap = config.max_leaves.unwrap_or(DEFAULT_LEAF_CAP);
    let instances = instance_suite(config.seed, config.instances)?;
    let gaps = parallel_map(&instances, opts.jobs, |inst| oracle_gap(inst, cap))?;
    write_csv(
        &opts.out.join("gaps.csv"),
        &["instance", "family", "horizon", "entries", "max_gap"],
        gaps.iter().map(|g| {
            vec![
                g.index.to_string(),
                g.family.to_string(),
                g.horizon.to_string(),
                g.entries.len().to_string(),
                fmt_float(g.max_gap),
            ]
        }),
    )?;
    let mut artifacts = vec!["gaps.csv".to_string()];
    if config.trace {
        let rows = gaps.iter().flat_map(|g| {
            g.entries.iter().map(move |&(t, x, u, dp, en)| {
                vec![
                    g.index.to_string(),
                    t.to_string(),
                    x.to_string(),
                    u.to_string(),
                    fmt_float(dp),
                    fmt_float(en),
                ]
            })
        });
        write_csv(
            &opts.out.join("oracle_entries.csv"),
            &["instance", "t", "x", "u", "backward", "enumerated"],
            rows,
        )?;
        artifacts.push("oracle_entries.csv".into());
    }
    let max_gap = gaps.iter().map(|g| g.max_gap).fold(0.0, f64::max);
    let checks = vec![Check::new(
        "backward evaluation matches enumeration",
        max_gap < 1e-10,
        format!("max gap {max_gap:e} over {} instances", gaps.len()),
    )];
    Ok((
        checks,
        artifacts,
        json!({ "instances": gaps.len(), "max_gap": max_gap, "max_leaves": cap }),
    ))
}

/// Run one suite, writing its artifacts, the echoed config and a summary
/// into `options.out`.
pub fn run_suite(config: &ExperimentConfig, options: &RunOptions) -> Result<SuiteReport> {
    std::fs::create_dir_all(&options.out)?;
    write_json(&options.out.join("config.json"), config)?;
    let (checks, mut artifacts, summary) = match config.suite {
        Suite::MvTrain => run_mv(config, &options.out)?,
        Suite::BpiVerify => run_bpi(config, options)?,
        Suite::QLearn => run_q(config, &options.out)?,
        Suite::OracleFuzz => run_oracle(config, options)?,
    };
    artifacts.push("summary.json".into());
    let report = SuiteReport {
        suite: config.suite,
        artifact_revision: ARTIFACT_REVISION,
        checks,
        artifacts,
        summary,
    };
    write_json(&options.out.join("summary.json"), &report)?;
    for check in &report.checks {
        log::info!(
            "{}: {} ({})",
            check.name,
            if check.passed { "ok" } else { "FAILED" },
            check.detail
        );
    }
    Ok(report)
}
