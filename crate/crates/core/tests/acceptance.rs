//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sperl_core::bpi::{
    bpi_run, local_spe_check, spe_check, ActionSpec, BpiConfig, LabelDistance, LexOrder,
    DEFAULT_TIE_TOLERANCE,
};
use sperl_core::experiments::{
    oracle_gap, pooled_tail, q_learn_check, run_suite, verify_bpi_instance, ExperimentConfig,
    RunOptions, Suite,
};
use sperl_core::instances::{instance_suite, RewardFamily, SuiteInstance};
use sperl_core::linreg::{als_fit, ols_fit, AlsOptions, RegressionProblem};
use sperl_core::mv::{mv_train, MvTrainConfig, MvTrainOutcome};
use sperl_core::rng::RngStreams;
use sperl_core::sperl_q::{hyperbolic_chain, QLearnConfig, StepSize, StopRule};
use sperl_core::tic::TicProblem;

const SEED: u64 = 20_240_601;
const LOCAL_RADIUS: f64 = 1.5;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

/// Finite-horizon Bellman recursion for problems whose rewards do not
/// depend on the vantage point. Ties go to the lowest action index.
fn value_iteration(problem: &TicProblem) -> Vec<Vec<usize>> {
    let horizon = problem.horizon();
    let mut value: Vec<f64> = (0..problem.n_states(horizon))
        .map(|x| problem.terminal(0, 0, x))
        .collect();
    let mut policy = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let mut next_value = Vec::with_capacity(problem.n_states(t));
        for x in 0..problem.n_states(t) {
            let q: Vec<f64> = (0..problem.n_actions(t))
                .map(|u| {
                    let p = problem.transition(t, x, u).unwrap();
                    problem.intermediate(0, t, 0, x, u)
                        + p.iter().zip(&value).map(|(pi, v)| pi * v).sum::<f64>()
                })
                .collect();
            let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let arg = q.iter().position(|&v| v >= best - 1e-12).unwrap();
            policy[t].push(arg);
            next_value.push(best);
        }
        value = next_value;
    }
    policy
}

fn families_covered(instances: &[SuiteInstance]) -> usize {
    let mut names: Vec<&str> = instances.iter().map(|i| i.family.name()).collect();
    names.sort();
    names.dedup();
    names.len()
}

fn ac1(instances: &[SuiteInstance]) -> Verdict {
    let gaps: Vec<f64> = instances
        .iter()
        .map(|i| oracle_gap(i, 10_000_000).unwrap().max_gap)
        .collect();
    let max = gaps.iter().cloned().fold(0.0, f64::max);
    verdict(
        gaps.len() >= 100 && families_covered(instances) == 4 && max < 1e-10,
        format!("{} instances, 4 families, max gap {max:.3e}", gaps.len()),
    )
}

fn ac2_to_4(instances: &[SuiteInstance]) -> (Verdict, Verdict, Verdict) {
    let results: Vec<_> = instances
        .iter()
        .map(|i| verify_bpi_instance(i).unwrap())
        .collect();
    let n = results.len();
    let ok = results
        .iter()
        .filter(|r| r.terminated && r.spe_violations == 0)
        .count();
    let v2 = verdict(ok == n, format!("{ok}/{n} terminated in equilibrium"));

    let two = results.iter().filter(|r| r.sweeps == 2).count();
    let short: Vec<_> = results.iter().filter(|r| r.sweeps != 2).collect();
    let short_started_in_equilibrium = short
        .iter()
        .filter(|r| {
            let inst = &instances[r.index];
            r.sweeps == 1
                && spe_check(&inst.problem, &inst.initial, DEFAULT_TIE_TOLERANCE)
                    .unwrap()
                    .passed()
        })
        .count();
    let v3 = verdict(
        two == n,
        format!(
            "{two}/{n} traces of length 2; {} others, {short_started_in_equilibrium} of them length 1 from an initial policy already in equilibrium",
            short.len()
        ),
    );

    let greater: usize = results.iter().map(|r| r.lex_greater).sum();
    let other: usize = results.iter().map(|r| r.lex_other).sum();
    let repeats = results
        .iter()
        .filter(|r| {
            let mut bases = vec![&r.trace.initial_basis];
            bases.extend(
                r.trace
                    .iterations
                    .iter()
                    .filter(|it| !it.changed.is_empty())
                    .map(|it| &it.basis),
            );
            bases
                .iter()
                .enumerate()
                .any(|(i, a)| bases[i + 1..].iter().any(|b| a == b))
        })
        .count();
    let terminal_equal = results
        .iter()
        .all(|r| r.trace.iterations.last().map(|it| it.comparison.order) == Some(LexOrder::Equal));
    let v4 = verdict(
        other == 0 && repeats == 0 && terminal_equal,
        format!("{greater} Greater, {other} Less or Incomparable, {repeats} repeated bases"),
    );
    (v2, v3, v4)
}

fn ac5(instances: &[SuiteInstance]) -> Verdict {
    let tc: Vec<_> = instances
        .iter()
        .filter(|i| i.family == RewardFamily::TimeConsistent)
        .collect();
    let mut mismatches = 0;
    let mut pairs = 0;
    for inst in &tc {
        let bpi = bpi_run(
            &inst.problem,
            &inst.initial,
            &BpiConfig::new(ActionSpec::FullSweepArgmax),
        )
        .unwrap();
        let vi = value_iteration(&inst.problem);
        for (t, row) in vi.iter().enumerate() {
            for (x, &u) in row.iter().enumerate() {
                pairs += 1;
                mismatches += usize::from(bpi.policy.action(t, x) != u);
            }
        }
    }
    verdict(
        !tc.is_empty() && mismatches == 0,
        format!(
            "{} instances, {mismatches} of {pairs} (t, x) pairs differ",
            tc.len()
        ),
    )
}

fn ac6(instances: &[SuiteInstance]) -> Verdict {
    let config = BpiConfig::new(ActionSpec::LocalSweepArgmax {
        radius: LOCAL_RADIUS,
    });
    let mut passed = 0;
    for inst in instances {
        let out = bpi_run(&inst.problem, &inst.initial, &config).unwrap();
        let report = local_spe_check(
            &inst.problem,
            &out.policy,
            LOCAL_RADIUS,
            &LabelDistance,
            DEFAULT_TIE_TOLERANCE,
        )
        .unwrap();
        passed += usize::from(out.terminated && report.passed());
    }
    verdict(
        passed == instances.len() && passed >= 50,
        format!(
            "{passed}/{} local equilibria at radius {LOCAL_RADIUS}",
            instances.len()
        ),
    )
}

fn ac7() -> Verdict {
    let config = QLearnConfig {
        episodes: 20_000,
        epsilon: 0.1,
        step: StepSize::Constant { alpha: 0.05 },
        stop: StopRule::FixedEpisodes,
        seed: SEED,
        ..QLearnConfig::default()
    };
    let check = q_learn_check(&hyperbolic_chain(), &config).unwrap();
    verdict(
        check.policy_matches && check.max_gap < 0.05,
        format!(
            "policy {} equilibrium, max gap {:.4} over updated entries",
            if check.policy_matches {
                "equals"
            } else {
                "differs from"
            },
            check.max_gap
        ),
    )
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn ac8(run: &MvTrainOutcome) -> Verdict {
    let last = run.weights.q.len() - 1;
    let w2g = run.weights.g[last][0];
    let w3q = run.weights.q[last][0];
    let tail: Vec<_> = run
        .critic_log
        .iter()
        .filter(|r| r.t == last && r.iteration >= 20 * 50)
        .collect();
    let mean_err = |f: &dyn Fn(&&sperl_core::mv::CriticLogRow) -> f64| {
        tail.iter().map(f).sum::<f64>() / tail.len() as f64
    };
    let e2 = mean_err(&|r| rel(r.w2_g, r.true_w2_g));
    let e3 = mean_err(&|r| rel(r.w3_q, r.true_w3_q));
    verdict(
        rel(w2g, 0.0018) < 0.10 && rel(w3q, -0.00054) < 0.10 && e2 < 0.15 && e3 < 0.15,
        format!("final w2(g) {w2g:.6}, w3(Q) {w3q:.7}; mean relative error from window 20: {e2:.4}, {e3:.4}"),
    )
}

fn ac9(run: &MvTrainOutcome) -> Verdict {
    let last = run.actor.len() - 1;
    let epochs = [0, last / 2, last];
    let worst = epochs
        .iter()
        .map(|&t| {
            run.actor_log
                .iter()
                .filter(|r| r.t == t && r.iteration >= 40 * 50)
                .map(|r| rel(r.theta, r.true_action))
                .fold(0.0, f64::max)
        })
        .collect::<Vec<_>>();
    verdict(
        worst.iter().all(|&e| e < 0.10),
        format!("worst relative error from window 40 at t = {epochs:?}: {worst:.4?}"),
    )
}

fn ac10(up: &MvTrainOutcome, down: &MvTrainOutcome) -> Verdict {
    let (m1, s1) = pooled_tail(up, 50, 10);
    let (m2, s2) = pooled_tail(down, 50, 10);
    let ok = (m1 - 1.35).abs() <= 0.10
        && (s1 - 0.50).abs() <= 0.10
        && (m2 - 1.45).abs() <= 0.10
        && (s2 - 0.60).abs() <= 0.10;
    verdict(
        ok,
        format!("mu=+0.2: ({m1:.3}, {s1:.3}); mu=-0.2: ({m2:.3}, {s2:.3})"),
    )
}

fn slope_variance(estimates: &[f64]) -> f64 {
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn ac11() -> Verdict {
    let streams = RngStreams::new(SEED);
    let (mut ols_slopes, mut als_slopes) = (Vec::new(), Vec::new());
    let mut homo_gap = 0.0_f64;
    for seed in 0..500 {
        let mut rng = streams.substream("als", seed);
        let n = 200;
        let us: Vec<f64> = (0..n)
            .map(|_| 1.67 + 1.5 * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let features: Vec<Vec<f64>> = us.iter().map(|&u| vec![u]).collect();

        let hetero: Vec<f64> = us
            .iter()
            .zip(&noise)
            .map(|(u, z)| 1.0002 + 0.0018 * u + 0.03 * u * z)
            .collect();
        let p = RegressionProblem::new(hetero, features.clone(), true).unwrap();
        let residual: Vec<Vec<f64>> = us.iter().map(|u| vec![u * u]).collect();
        ols_slopes.push(ols_fit(&p).unwrap().weights[0]);
        als_slopes.push(
            als_fit(&p, &residual, AlsOptions::default())
                .unwrap()
                .weights[0],
        );

        let homo: Vec<f64> = us
            .iter()
            .zip(&noise)
            .map(|(u, z)| 1.0002 + 0.0018 * u + 0.03 * z)
            .collect();
        let p = RegressionProblem::new(homo, features, true).unwrap();
        let constant = vec![vec![1.0]; n];
        let ols = ols_fit(&p).unwrap().weights;
        let als = als_fit(&p, &constant, AlsOptions::default())
            .unwrap()
            .weights;
        homo_gap = ols
            .iter()
            .zip(&als)
            .map(|(a, b)| (a - b).abs())
            .fold(homo_gap, f64::max);
    }
    let (vo, va) = (slope_variance(&ols_slopes), slope_variance(&als_slopes));
    verdict(
        va <= vo && homo_gap < 1e-8,
        format!("slope variance ALS {va:.3e} vs OLS {vo:.3e}; homoscedastic gap {homo_gap:.1e}"),
    )
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

fn ac12() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let mut compared = 0;
    let mut differing = Vec::new();
    for suite in Suite::ALL {
        let config = ExperimentConfig {
            seed: SEED,
            trace: true,
            ..ExperimentConfig::new(suite)
        };
        let runs: Vec<_> = [None, None, Some(4)]
            .into_iter()
            .enumerate()
            .map(|(k, jobs)| {
                let out = root.path().join(format!("{suite}-{k}"));
                run_suite(
                    &config,
                    &RunOptions {
                        out: out.clone(),
                        jobs,
                    },
                )
                .unwrap();
                csv_files(&out)
            })
            .collect();
        for other in &runs[1..] {
            compared += runs[0].len();
            if *other != runs[0] {
                differing.push(suite.name());
            }
        }
    }
    verdict(
        differing.is_empty() && compared > 0,
        format!("{compared} CSV comparisons across 4 suites; differing: {differing:?}"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u8, &str, Verdict, f64)> = Vec::new();
    let timed =
        |id: u8, name: &'static str, f: &mut dyn FnMut() -> Verdict, results: &mut Vec<_>| {
            let start = Instant::now();
            let v = f();
            results.push((id, name, v, start.elapsed().as_secs_f64()));
        };
    let instances = instance_suite(SEED, 100).unwrap();

    timed(
        1,
        "oracle equivalence",
        &mut || ac1(&instances),
        &mut results,
    );
    let start = Instant::now();
    let (v2, v3, v4) = ac2_to_4(&instances);
    let secs = start.elapsed().as_secs_f64();
    results.push((2, "equilibrium on termination", v2, secs));
    results.push((3, "two-sweep termination", v3, secs));
    results.push((4, "lexicographic monotonicity", v4, secs));
    timed(
        5,
        "time-consistent degeneration",
        &mut || ac5(&instances),
        &mut results,
    );
    timed(
        6,
        "local-sweep soundness",
        &mut || ac6(&instances),
        &mut results,
    );
    timed(7, "tabular Q-learning proximity", &mut ac7, &mut results);

    let start = Instant::now();
    let up = mv_train(&MvTrainConfig {
        seed: SEED,
        ..MvTrainConfig::paper(0.2)
    })
    .unwrap();
    let down = mv_train(&MvTrainConfig {
        seed: SEED,
        ..MvTrainConfig::paper(-0.2)
    })
    .unwrap();
    let secs = start.elapsed().as_secs_f64();
    results.push((8, "mean-variance critic identification", ac8(&up), secs));
    results.push((9, "mean-variance actor convergence", ac9(&up), secs));
    results.push((10, "mean-variance terminal wealth", ac10(&up, &down), secs));
    timed(11, "ALS against OLS", &mut ac11, &mut results);
    timed(12, "artifact determinism", &mut ac12, &mut results);

    let mut failed = 0;
    for (id, name, v, secs) in &results {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!v.passed);
        println!("[{tag}] AC-{id:<2} {name}: {} ({secs:.1}s)", v.detail);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
